//! Central finite differences over every parameter.

use qsat::model::{Gradients, PolicyParams};

pub const STEP: f64 = 1e-5;
pub const MAX_REL_ERR: f64 = 1e-4;
/// Floor on the relative-error denominator. Central differences at
/// h = 1e-5 carry roughly eps * |loss| / h ~ 1e-10 of roundoff, so
/// derivatives smaller than this are compared in absolute terms
/// (|a - n| < 1e-10).
pub const DENOM_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(DENOM_FLOOR);
    (analytic - numeric).abs() / scale
}

pub struct FdReport {
    pub checked: usize,
    pub failed: Vec<(usize, f64, f64, f64)>,
    pub worst: f64,
}

/// Compares the gradient of `loss` at `params` with `analytic`.
pub fn check<F>(params: &PolicyParams, analytic: &Gradients, mut loss: F) -> FdReport
where
    F: FnMut(&PolicyParams) -> f64,
{
    let mut p = params.clone();
    let mut failed = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p.as_slice()[i];
        p.as_mut_slice()[i] = orig + STEP;
        let up = loss(&p);
        p.as_mut_slice()[i] = orig - STEP;
        let down = loss(&p);
        p.as_mut_slice()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic.as_slice()[i];
        let e = rel_err(a, numeric);
        worst = worst.max(e);
        if e >= MAX_REL_ERR {
            failed.push((i, a, numeric, e));
        }
    }
    FdReport {
        checked: p.len(),
        failed,
        worst,
    }
}
