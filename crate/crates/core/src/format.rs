//! Fixed float formatting for CSV output.

/// Rounds to 12 significant digits and prints the shortest representation
/// that reads back to the rounded value.
pub fn float(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

#[cfg(test)]
mod tests {
    use super::float;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(float(1.0 / 3.0), "0.333333333333");
        assert_eq!(float(4.0 / 3.0), "1.33333333333");
        assert_eq!(float(1.0), "1");
        assert_eq!(float(7480225.123456789), "7480225.12346");
        assert_eq!(float(-0.0), "0");
        assert_eq!(float(2.5e-9), "0.0000000025");
        assert_eq!(float(f64::INFINITY), "inf");
    }
}
