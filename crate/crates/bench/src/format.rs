//! Nine-significant-digit number formatting, equivalent to C's `%.9g`.

const DIGITS: usize = 9;

/// Rounds to nine significant digits. `fmt_g9(quantize(x))` parses back to
/// exactly `quantize(x)`.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{:.*e}", DIGITS - 1, x)
        .parse()
        .expect("scientific notation parses")
}

/// Formats like `printf("%.9g", x)`.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= DIGITS as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS as i32 - 1 - exp) as usize;
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
