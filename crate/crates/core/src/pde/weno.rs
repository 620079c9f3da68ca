//! Third-order WENO approximation of the left-biased derivative.

use crate::error::{input, Result};

pub const DEFAULT_WENO_EPS: f64 = 1e-6;

/// Left-biased WENO3 derivative at every node.
///
/// Uses forward differences `Δ_j = (v_{j+1} − v_j)/h`. The two candidates
/// are built on `{k−2, k−1, k}` and `{k−1, k, k+1}` with linear weights 1/3
/// and 2/3. Ghost nodes outside the array are filled by linear
/// extrapolation, which amounts to repeating the first and last difference.
pub fn weno3_left_derivative(values: &[f64], h: f64, eps: f64) -> Result<Vec<f64>> {
    if values.len() < 5 {
        return input(format!("WENO3 needs at least 5 nodes, got {}", values.len()));
    }
    if !(h > 0.0) {
        return input("grid spacing must be > 0");
    }
    let mut out = vec![0.0; values.len()];
    left_derivative_into(values, h, eps, &mut out);
    Ok(out)
}

#[inline]
fn diff(v: &[f64], j: isize, inv_h: f64) -> f64 {
    let last = v.len() as isize - 2;
    let j = j.clamp(0, last) as usize;
    (v[j + 1] - v[j]) * inv_h
}

#[inline]
fn combine(dm2: f64, dm1: f64, d0: f64, eps: f64) -> f64 {
    let upwind = 0.5 * (3.0 * dm1 - dm2);
    let central = 0.5 * (dm1 + d0);
    let b0 = (dm1 - dm2) * (dm1 - dm2);
    let b1 = (d0 - dm1) * (d0 - dm1);
    let a0 = (1.0 / 3.0) / ((eps + b0) * (eps + b0));
    let a1 = (2.0 / 3.0) / ((eps + b1) * (eps + b1));
    (a0 * upwind + a1 * central) / (a0 + a1)
}

/// Allocation-free kernel used by the solver; `out.len() == values.len() >= 5`.
pub(crate) fn left_derivative_into(values: &[f64], h: f64, eps: f64, out: &mut [f64]) {
    let n = values.len();
    let inv_h = 1.0 / h;
    for k in [0, 1, n - 1] {
        let k = k as isize;
        out[k as usize] = combine(diff(values, k - 2, inv_h), diff(values, k - 1, inv_h), diff(values, k, inv_h), eps);
    }
    // Interior: all three differences exist.
    let mut dm2 = (values[1] - values[0]) * inv_h;
    let mut dm1 = (values[2] - values[1]) * inv_h;
    for k in 2..n - 1 {
        let d0 = (values[k + 1] - values[k]) * inv_h;
        out[k] = combine(dm2, dm1, d0, eps);
        dm2 = dm1;
        dm1 = d0;
    }
}
