//! The Orlicz function `cosh - 1`, its modular, and the Luxemburg norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::spectral::{lp_norm, mean_of};

/// `arcosh(2) = ln(2 + sqrt 3)`: the constant field `a` has norm `a / ARCOSH_2`.
pub const ARCOSH_2: f64 = 1.316_957_896_924_816_6;

pub const DEFAULT_TOL: f64 = 1e-10;

/// `cosh(y) - 1`, evaluated as `(e^|y| - 1)^2 / (2 e^|y|)` to keep full
/// relative precision near zero. Saturates to `+inf` for `|y|` beyond about 710.
pub fn phi(y: f64) -> f64 {
    let a = y.abs().exp_m1();
    if a.is_infinite() {
        return f64::INFINITY;
    }
    a * (a / (2.0 + 2.0 * a))
}

/// Like [`phi`], but reports overflow instead of saturating.
pub fn phi_checked(y: f64) -> Result<f64> {
    let v = phi(y);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::arg("y", format!("cosh({y}) - 1 overflows f64")))
    }
}

/// `<Phi(f / c)>`.
pub fn modular(f: &ScalarField, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::arg("c", format!("modular scale must be > 0, got {c}")));
    }
    f.check_finite("modular input")?;
    Ok(modular_unchecked(f, c))
}

pub(crate) fn modular_unchecked(f: &ScalarField, c: f64) -> f64 {
    let inv = 1.0 / c;
    mean_of(f.grid(), f.values().iter().map(|v| phi(v * inv)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrliczNorm {
    pub value: f64,
    /// Final bisection interval; `value` is its upper end.
    pub bracket: (f64, f64),
    pub modular_at_value: f64,
    pub iterations: usize,
}

/// Luxemburg norm `inf { c > 0 : <Phi(f/c)> <= 1 }` by bisection.
///
/// The returned value is the feasible end of the final bracket, so
/// `modular(f, value) <= 1` always holds.
pub fn orlicz_norm(f: &ScalarField, tol: f64) -> Result<OrliczNorm> {
    if !(tol > 0.0) {
        return Err(Error::arg("tol", format!("must be > 0, got {tol}")));
    }
    f.check_finite("Orlicz norm input")?;
    let sup = f.max_abs();
    if sup == 0.0 {
        return Ok(OrliczNorm {
            value: 0.0,
            bracket: (0.0, 0.0),
            modular_at_value: 0.0,
            iterations: 0,
        });
    }
    // Phi(y) >= y^2/2 puts the modular at ||f||_2/2 above 2; Phi(arcosh 2) = 1
    // bounds it at ||f||_inf/arcosh 2.
    let (lo, hi) = initial_bracket(f, sup)?;
    bisect(f, lo, hi, tol)
}

pub(crate) fn initial_bracket(f: &ScalarField, sup: f64) -> Result<(f64, f64)> {
    Ok((0.5 * lp_norm(f, 2.0)?, sup / ARCOSH_2))
}

/// Shrinks `[lo, hi]` around the unit level set of the modular until
/// `hi - lo < tol * hi`.
///
/// Anderson-Bjorck false position on `modular - 1`, with a bisection step
/// whenever an iteration fails to halve the bracket or an endpoint value is
/// not finite. Trial points are kept at least `tol * hi / 2` inside the
/// bracket so the final step straddles the root.
fn bisect(f: &ScalarField, mut lo: f64, mut hi: f64, tol: f64) -> Result<OrliczNorm> {
    let g = |c: f64| modular_unchecked(f, c) - 1.0;
    let mut glo = g(lo);
    let mut ghi = g(hi);
    let mut iterations = 0;
    // -1 when the last update moved `lo`, +1 when it moved `hi`.
    let mut last_side = 0i8;
    let mut width_before = hi - lo;
    let mut stalls = 0;
    while hi - lo >= tol * hi {
        let width = hi - lo;
        let guard = 0.5 * tol * hi;
        let secant = glo.is_finite() && ghi.is_finite() && glo > 0.0 && ghi < 0.0;
        let mut mid = if secant && stalls < 2 {
            hi - ghi * width / (ghi - glo)
        } else {
            stalls = 0;
            0.5 * (lo + hi)
        };
        mid = mid.clamp(lo + guard, hi - guard);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        iterations += 1;
        // Saturated (+inf) modulars compare as infeasible.
        if gm <= 0.0 {
            if last_side == 1 && glo.is_finite() {
                let m = 1.0 - gm / ghi;
                glo *= if m > 0.0 { m } else { 0.5 };
            }
            hi = mid;
            ghi = gm;
            last_side = 1;
        } else {
            if last_side == -1 && ghi.is_finite() {
                let m = 1.0 - gm / glo;
                ghi *= if m > 0.0 { m } else { 0.5 };
            }
            lo = mid;
            glo = gm;
            last_side = -1;
        }
        if hi - lo > 0.5 * width_before {
            stalls += 1;
        } else {
            stalls = 0;
            width_before = hi - lo;
        }
    }
    Ok(OrliczNorm {
        value: hi,
        bracket: (lo, hi),
        modular_at_value: modular_unchecked(f, hi),
        iterations,
    })
}
