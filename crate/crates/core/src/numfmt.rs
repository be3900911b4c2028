//! C-style `%.12e` rendering for CSV output.

/// Formats `x` like C's `printf("%.12e", x)`: twelve mantissa digits and a
/// signed exponent of at least two digits. Non-finite values become `nan`,
/// `inf` or `-inf`.
pub fn sci12(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Parses a field written by [`sci12`] (or any ordinary float literal).
pub fn parse_field(s: &str) -> Option<f64> {
    match s.trim() {
        "nan" | "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_layout() {
        assert_eq!(sci12(1.0), "1.000000000000e+00");
        assert_eq!(sci12(-0.0025), "-2.500000000000e-03");
        assert_eq!(sci12(123456.0), "1.234560000000e+05");
        assert_eq!(sci12(1e-100), "1.000000000000e-100");
        assert_eq!(sci12(0.0), "0.000000000000e+00");
        assert_eq!(sci12(f64::NAN), "nan");
    }

    #[test]
    fn parse_round_trips_to_print_precision() {
        for &x in &[0.1, -3.25e-7, 42.0, 1.0 / 3.0] {
            let back = parse_field(&sci12(x)).unwrap();
            assert!((back - x).abs() <= 1e-12 * x.abs());
        }
        assert!(parse_field("nan").unwrap().is_nan());
    }
}
