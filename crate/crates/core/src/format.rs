//! Deterministic text formatting shared by every exporter.

/// 17 significant digits in scientific notation; round-trips every `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.0, 1.0, 0.1, 1.0 / 3.0, 2.0f64.exp(), 1e-300, 123456789.123] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
    }
}
