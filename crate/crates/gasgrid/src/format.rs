//! Number formatting shared by every writer.

/// Rounds to nine significant digits. Zero loses its sign.
pub fn round9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Text of [`round9`]: plain decimal, exponent form outside `[1e-5, 1e15)`.
pub fn fmt9(x: f64) -> String {
    let r = round9(x);
    if r != 0.0 && (r.abs() < 1e-5 || r.abs() >= 1e15) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}
