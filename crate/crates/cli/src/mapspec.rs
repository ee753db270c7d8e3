//! `--map` and `--control` values.

use anyhow::{anyhow, bail, Context, Result};
use hmtoc_core::dynamics::{builtin_exp2, builtin_pielou, builtin_ricker, from_expression};
use hmtoc_core::{parse_expr, ControlledSystem, MapModel, TargetControl};

fn params(text: &str, allowed: &[&str]) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=value, got `{part}`"))?;
        let k = k.trim();
        if !allowed.contains(&k) {
            bail!("unknown parameter `{k}` (expected {})", allowed.join(", "));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            bail!("parameter `{k}` given twice");
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn param<T: std::str::FromStr>(ps: &[(String, String)], key: &str) -> Result<T> {
    let raw = ps
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| anyhow!("missing parameter `{key}`"))?;
    raw.parse()
        .map_err(|_| anyhow!("parameter `{key}` has invalid value `{raw}`"))
}

/// `ricker:r=R,k=K`, `pielou:r=R,k=K`, `exp2`, or `expr:SOURCE,k=K`.
pub fn parse_map(spec: &str) -> Result<MapModel> {
    let spec = spec.trim();
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let model = match name {
        "ricker" => {
            let ps = params(rest, &["r", "k"])?;
            builtin_ricker(param(&ps, "r")?, param(&ps, "k")?)?
        }
        "pielou" => {
            let ps = params(rest, &["r", "k"])?;
            builtin_pielou(param(&ps, "r")?, param(&ps, "k")?)?
        }
        "exp2" => {
            if !rest.is_empty() {
                bail!("exp2 takes no parameters");
            }
            builtin_exp2()
        }
        "expr" => {
            let (source, order) = rest
                .rsplit_once(",k=")
                .ok_or_else(|| anyhow!("expression maps need an order: expr:SOURCE,k=K"))?;
            let order: usize = order
                .trim()
                .parse()
                .map_err(|_| anyhow!("invalid order `{order}`"))?;
            let source = source.trim().trim_matches(|c| c == '"' || c == '\'');
            from_expression(parse_expr(source, order)?)
        }
        other => bail!("unknown map `{other}` (expected ricker, pielou, exp2 or expr)"),
    };
    Ok(model)
}

pub fn parse_controls(values: &[String]) -> Result<Vec<TargetControl>> {
    values
        .iter()
        .map(|v| {
            v.parse::<TargetControl>()
                .with_context(|| format!("invalid control `{v}`"))
        })
        .collect()
}

pub fn parse_reals(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("invalid {what} entry `{}`", p.trim()))
        })
        .collect()
}

pub fn parse_range(text: &str, what: &str) -> Result<(f64, f64)> {
    match parse_reals(text, what)?.as_slice() {
        [lo, hi] if lo < hi => Ok((*lo, *hi)),
        _ => bail!("{what} must be `lo,hi` with lo < hi, got `{text}`"),
    }
}

pub fn build_system(map: Option<String>, controls: &[String]) -> Result<ControlledSystem> {
    let map = map.ok_or_else(|| anyhow!("no map given (use --map or `map` in the config file)"))?;
    let base = parse_map(&map).with_context(|| format!("invalid map `{map}`"))?;
    Ok(ControlledSystem::new(base, parse_controls(controls)?))
}
