//! Finite-difference helpers for checking analytic gradients.

/// Denominator floor for [`relative_error`], so that components whose true
/// gradient is (near) zero are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Central difference `(f(x + h) - f(x - h)) / 2h` with respect to the
/// parameter selected by `slot`. The parameter is restored afterwards.
pub fn central_difference<P>(
    params: &mut P,
    mut slot: impl FnMut(&mut P) -> &mut f64,
    h: f64,
    mut f: impl FnMut(&P) -> f64,
) -> f64 {
    let orig = *slot(params);
    *slot(params) = orig + h;
    let plus = f(params);
    *slot(params) = orig - h;
    let minus = f(params);
    *slot(params) = orig;
    (plus - minus) / (2.0 * h)
}
