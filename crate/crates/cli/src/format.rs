//! Numeric formatting and CSV helpers.

/// `printf("%.*g", prec, x)`.
pub fn fmt_g(x: f64, prec: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let prec = prec.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", prec - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= prec as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mant), exp.abs())
    } else {
        let decimals = (prec as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// The `%.12g` used for every CSV number.
pub fn num(x: f64) -> String {
    fmt_g(x, 12)
}

/// Value as it will read back from a CSV cell.
pub fn round_trip(x: f64) -> f64 {
    num(x).parse().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf() {
        // Expected strings from C printf("%.12g").
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333333"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (1.5e-7, "1.5e-07"),
            (6.02214076e23, "6.02214076e+23"),
            (2.0f64.sqrt(), "1.41421356237"),
            (999999999999.5, "1e+12"),
            (1e100, "1e+100"),
        ];
        for (x, s) in cases {
            assert_eq!(num(x), s, "{x}");
        }
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_g(3.14159, 3), "3.14");
    }

    #[test]
    fn round_trip_is_idempotent() {
        for x in [0.1, 1.0 / 7.0, 1e-9 / 3.0, 12345.678901234567] {
            let r = round_trip(x);
            assert_eq!(round_trip(r), r);
            assert!((r - x).abs() <= 1e-11 * x.abs());
        }
    }
}
