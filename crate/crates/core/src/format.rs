//! Output formatting shared by the CSV and JSON writers.

/// Version tag written into every emitted artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// Formats `x` with 9 significant digits, like C's `%#.9g`.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    // exponent after rounding to 9 significant digits
    let sci = format!("{x:.8e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}
