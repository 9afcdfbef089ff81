//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_DEPTH: u32 = 40;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Intervals are bisected until the Simpson estimates of the two halves agree
/// with the whole to within `15·tol`; the tolerance halves at each level.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = step(f, a, b, fa, fm, fb, whole, tol, max_depth)?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::IntegrationFailed)
    }
}

#[allow(clippy::too_many_arguments)]
fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || !delta.is_finite() {
        return Err(Error::IntegrationFailed);
    }
    Ok(step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)? + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Integrates over `[a, b]` split at `breaks`, sharing the tolerance by length.
///
/// Each piece is evaluated slightly inside its ends, so a jump at a break is
/// seen from the correct side.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64, max_depth: u32) -> Result<f64> {
    let mut knots = vec![a];
    knots.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let width = b - a;
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let inset = 1e-10 * (hi - lo);
        let inner = |x: f64| f(x.clamp(lo + inset, hi - inset));
        total += adaptive_simpson(&inner, lo, hi, tol * (hi - lo) / width, max_depth)?;
    }
    Ok(total)
}
