//! Numerical checks of `|f(x) - K| <= L max_j |x_j - K|`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StabilityError;
use crate::dynamics::DifferenceMap;

const EXCLUSION_RADIUS: f64 = 1e-9;

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    acc
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes.iter().all(|p| !candidate.is_multiple_of(*p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Largest sampled ratio `|f(x) - K| / max_j |x_j - K|` over `[0, domain_hi]^k`.
///
/// Points come from a Halton sequence with a Cranley-Patterson shift drawn
/// from `rng_seed`. Points within `1e-9` of `(K, ..., K)` are skipped. Any
/// constant `L` satisfying the inequality is at least the returned value.
pub fn lipschitz_grid_lower<M: DifferenceMap + ?Sized>(
    map: &M,
    point: f64,
    domain_hi: f64,
    samples: usize,
    rng_seed: u64,
) -> Result<f64, StabilityError> {
    if !(domain_hi > 0.0 && domain_hi.is_finite()) {
        return Err(StabilityError::InvalidArgument(format!(
            "domain upper bound must be positive, got {domain_hi}"
        )));
    }
    let k = map.order();
    let bases = first_primes(k);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let shift: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();

    let mut x = vec![0.0; k];
    let mut best = 0.0f64;
    for i in 1..=samples as u64 {
        for j in 0..k {
            let u = (radical_inverse(i, bases[j]) + shift[j]).fract();
            x[j] = u * domain_hi;
        }
        let dist = x.iter().fold(0.0f64, |m, v| m.max((v - point).abs()));
        if dist < EXCLUSION_RADIUS {
            continue;
        }
        let ratio = (map.eval(&x)? - point).abs() / dist;
        best = best.max(ratio);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedLipschitz {
    /// `max{local_L, A/K - 1, 1}`
    pub value: f64,
    pub local_l: f64,
    pub global_bound: f64,
    /// The local constant was estimated by sampling rather than supplied.
    pub heuristic: bool,
}

/// Constant for a bounded map `0 <= f <= A` with fixed point `K > 0`, built
/// from a Lipschitz constant valid on `[0, 2K]^k`.
///
/// Without `local_l`, the constant is estimated as 1.5 times the sampled ratio
/// on that box and the result is marked heuristic.
pub fn lipschitz_from_bounded<M: DifferenceMap + ?Sized>(
    map: &M,
    point: f64,
    local_l: Option<f64>,
    rng_seed: u64,
) -> Result<BoundedLipschitz, StabilityError> {
    let a = map.global_bound().ok_or(StabilityError::MissingGlobalBound)?;
    if !(point > 0.0) {
        return Err(StabilityError::InvalidArgument(format!(
            "bounded-map constant needs a positive fixed point, got {point}"
        )));
    }
    let (local, heuristic) = match local_l {
        Some(l) => (l, false),
        None => (
            1.5 * lipschitz_grid_lower(map, point, 2.0 * point, 20_000, rng_seed)?,
            true,
        ),
    };
    Ok(BoundedLipschitz {
        value: local.max(a / point - 1.0).max(1.0),
        local_l: local,
        global_bound: a,
        heuristic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{builtin_exp2, builtin_pielou, builtin_ricker, MapModel};

    #[test]
    fn halton_points_are_in_unit_interval() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
        assert_eq!(first_primes(5), vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn analytic_constants_dominate_samples() {
        let p = builtin_pielou(8.0, 3).unwrap();
        let lower = lipschitz_grid_lower(&p, 7.0, 100.0, 20_000, 1).unwrap();
        assert!(lower <= 15.0 + 1e-9);
        assert!(lower > 1.0);
        let r = builtin_ricker(1.5, 2).unwrap();
        let lower = lipschitz_grid_lower(&r, 0.0, 100.0, 20_000, 1).unwrap();
        assert!(lower <= 1.5f64.exp() + 1e-9);
    }

    #[test]
    fn constant_map_has_zero_ratio() {
        let m = MapModel::custom(2, "const", |_| Ok(3.0));
        assert_eq!(lipschitz_grid_lower(&m, 3.0, 10.0, 1000, 5).unwrap(), 0.0);
    }

    #[test]
    fn bounded_examples() {
        let e = builtin_exp2();
        let l2 = 2.0 * 2f64.exp();
        let b = lipschitz_from_bounded(&e, 1.0, Some(l2), 0).unwrap();
        assert_eq!(b.value, l2);
        assert!(!b.heuristic);

        let m = MapModel::custom(1, "m", |x| Ok(x[0].min(2.0))).with_global_bound(2.0);
        assert_eq!(lipschitz_from_bounded(&m, 2.0, Some(0.5), 0).unwrap().value, 1.0);

        let m = MapModel::custom(1, "m", |_| Ok(1.0)).with_global_bound(10.0);
        assert_eq!(lipschitz_from_bounded(&m, 1.0, Some(2.0), 0).unwrap().value, 9.0);

        let est = lipschitz_from_bounded(&e, 1.0, None, 3).unwrap();
        assert!(est.heuristic);
        assert!(est.value >= e.global_bound().unwrap() - 1.0);

        assert!(matches!(
            lipschitz_from_bounded(&builtin_ricker(1.5, 2).unwrap(), 1.5, Some(1.0), 0),
            Err(StabilityError::MissingGlobalBound)
        ));
        assert!(lipschitz_from_bounded(&e, 0.0, Some(1.0), 0).is_err());
    }
}
