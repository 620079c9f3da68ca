//! Closed-form solutions of the single-regime problem.
//!
//! With one regime and a constant transport rate `S > 0`, the value
//! function of the threshold policy "replenish iff `y <= ybar`" is
//!
//! ```text
//! Ψ(y) = f·exp(−(δ+λ)y/S) + a·y + b      0 <= y <= ybar
//! Ψ(y) = Ψ(1)·exp(δ(1−y)/S)              ybar < y <= 1
//! ```
//!
//! and the optimal `ybar` is fixed by C¹ pasting at the threshold.
//! The vanishing-discount limit reduces to the scalar root equation
//! `(1−y)·exp(−λy/S) = dS/(1−cS)`.

use serde::Serialize;

use crate::error::{input, Error, Result};

/// Parameters of the single-regime problem. Rates are per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarProblem {
    #[serde(rename = "S")]
    pub s: f64,
    pub delta: f64,
    pub c: f64,
    pub d: f64,
    pub lambda: f64,
}

impl ScalarProblem {
    pub fn new(s: f64, delta: f64, c: f64, d: f64, lambda: f64) -> Result<Self> {
        let p = Self { s, delta, c, d, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.s, self.delta, self.c, self.d, self.lambda].iter().all(|v| v.is_finite()) {
            return input("scalar problem parameters must be finite");
        }
        if !(self.s > 0.0) || !(self.lambda > 0.0) {
            return input("S and lambda must be > 0");
        }
        if self.delta < 0.0 || self.c < 0.0 || self.d < 0.0 {
            return input("delta, c and d must be >= 0");
        }
        Ok(())
    }

    fn require_discount(&self) -> Result<()> {
        self.validate()?;
        if self.delta > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain("delta = 0 has no discounted solution; use the ergodic routines".into()))
        }
    }

    /// Decay rate `(δ+λ)/S` of the replenish-branch homogeneous solution.
    fn replenish_decay(&self) -> f64 {
        (self.delta + self.lambda) / self.s
    }
}

/// Coefficients of the replenish branch `f·exp(−(δ+λ)y/S) + a·y + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub f: f64,
}

pub fn candidate_coefficients(problem: &ScalarProblem, psi1: f64) -> Result<Coefficients> {
    problem.require_discount()?;
    let ScalarProblem { s, delta, c, d, lambda } = *problem;
    let dl = delta + lambda;
    let a = -lambda * c / dl;
    let b = (-a * s + lambda * (psi1 + c + d)) / dl;
    let f = (dl - lambda * c * s) / (dl * dl);
    Ok(Coefficients { a, b, f })
}

/// C¹ candidate value function for a single regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothSolution {
    pub ybar: f64,
    pub psi1: f64,
    pub a: f64,
    pub b: f64,
    pub f: f64,
    pub problem: ScalarProblem,
}

impl SmoothSolution {
    fn from_parts(problem: ScalarProblem, ybar: f64, psi1: f64) -> Result<Self> {
        let Coefficients { a, b, f } = candidate_coefficients(&problem, psi1)?;
        Ok(Self { ybar, psi1, a, b, f, problem })
    }

    fn replenish_branch(&self, y: f64) -> f64 {
        self.f * (-self.problem.replenish_decay() * y).exp() + self.a * y + self.b
    }

    fn idle_branch(&self, y: f64) -> f64 {
        self.psi1 * (self.problem.delta / self.problem.s * (1.0 - y)).exp()
    }

    /// Ψ(y); panics-free variant of [`evaluate_candidate`] for `y` already
    /// known to lie in `[0, 1]`.
    pub fn value(&self, y: f64) -> f64 {
        if y <= self.ybar {
            self.replenish_branch(y)
        } else {
            self.idle_branch(y)
        }
    }

    /// Ψ'(y), taking the left branch at the threshold.
    pub fn derivative(&self, y: f64) -> f64 {
        let p = &self.problem;
        if y <= self.ybar {
            -p.replenish_decay() * self.f * (-p.replenish_decay() * y).exp() + self.a
        } else {
            -p.delta / p.s * self.idle_branch(y)
        }
    }

    /// Both smooth-pasting residuals at the stored threshold.
    pub fn pasting_residuals(&self) -> (f64, f64) {
        pasting_residuals(&self.problem, self.psi1, self.ybar)
    }
}

pub fn evaluate_candidate(sol: &SmoothSolution, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return input(format!("storage level {y} outside [0, 1]"));
    }
    Ok(sol.value(y))
}

/// Value and derivative mismatch of the two branches at `ybar`.
pub fn pasting_residuals(problem: &ScalarProblem, psi1: f64, ybar: f64) -> (f64, f64) {
    let ScalarProblem { s, delta, .. } = *problem;
    let Coefficients { a, b, f } = candidate_coefficients(problem, psi1).expect("validated problem");
    let k = problem.replenish_decay();
    let left = (-k * ybar).exp();
    let right = (delta / s * (1.0 - ybar)).exp();
    let value = f * left + a * ybar + b - psi1 * right;
    let slope = -k * f * left + a + delta / s * psi1 * right;
    (value, slope)
}

/// Ψ(1) making the derivatives match at `ybar`; the derivative condition is
/// linear in Ψ(1).
fn psi1_from_slope(problem: &ScalarProblem, ybar: f64) -> f64 {
    let Coefficients { a, f, .. } = candidate_coefficients(problem, 0.0).expect("validated problem");
    let k = problem.replenish_decay();
    let ratio = problem.s / problem.delta;
    (k * f * (-k * ybar).exp() - a) * ratio * (-(1.0 - ybar) / ratio).exp()
}

const SCAN_POINTS: usize = 1024;
const EDGE: f64 = 1e-12;

/// Bisection to machine resolution on a bracket with `g(lo)·g(hi) <= 0`.
fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() <= g(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Solves the smooth-pasting system for `(Ψ(1), ybar)`.
///
/// Ψ(1) is eliminated through the derivative condition, leaving a scalar
/// residual in `ybar` that is bracketed by a pre-scan and bisected. If the
/// scan finds several roots, the one with the smallest Ψ(1) is returned.
pub fn solve_smooth_pasting(problem: &ScalarProblem) -> Result<SmoothSolution> {
    problem.require_discount()?;
    let residual = |y: f64| pasting_residuals(problem, psi1_from_slope(problem, y), y).0;
    let grid: Vec<f64> = (0..=SCAN_POINTS)
        .map(|k| EDGE + (1.0 - 2.0 * EDGE) * k as f64 / SCAN_POINTS as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&y| residual(y)).collect();
    let mut best: Option<SmoothSolution> = None;
    for k in 0..SCAN_POINTS {
        if values[k] == 0.0 || (values[k] > 0.0) != (values[k + 1] > 0.0) {
            let ybar = bisect(residual, grid[k], grid[k + 1]);
            let sol = SmoothSolution::from_parts(*problem, ybar, psi1_from_slope(problem, ybar))?;
            if best.is_none_or(|b| sol.psi1 < b.psi1) {
                best = Some(sol);
            }
        }
    }
    let sol = best.ok_or_else(|| {
        Error::NoInteriorThreshold(format!("pasting residual has no sign change on (0,1) for {problem:?}"))
    })?;
    let (r1, r2) = sol.pasting_residuals();
    if r1.abs() > 1e-10 || r2.abs() > 1e-10 {
        return Err(Error::NoInteriorThreshold(format!("pasting residuals ({r1:e}, {r2:e}) exceed 1e-10")));
    }
    Ok(sol)
}

/// Threshold and long-run cost rate in the vanishing-discount limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErgodicSolution {
    pub ybar: f64,
    /// Long-run average cost per day.
    pub u: f64,
    /// Set when `d = 0` and the root sits on the boundary `ybar = 1`.
    pub degenerate: bool,
}

/// `F(y) = (1−y)·exp(−λy/S)`.
pub fn ergodic_root_function(s: f64, lambda: f64, y: f64) -> f64 {
    (1.0 - y) * (-lambda * y / s).exp()
}

/// Root of `F(y) = dS/(1−cS)`; exists in (0, 1) iff `(c+d)S < 1`.
pub fn ergodic_threshold(s: f64, c: f64, d: f64, lambda: f64) -> Result<ErgodicSolution> {
    ScalarProblem::new(s, 0.0, c, d, lambda)?;
    if (c + d) * s >= 1.0 {
        return Err(Error::NoInteriorThreshold(format!("(c+d)S = {} >= 1", (c + d) * s)));
    }
    if d == 0.0 {
        let u = (1.0 - c * s) * (-lambda / s).exp() + c * s;
        return Ok(ErgodicSolution { ybar: 1.0, u, degenerate: true });
    }
    let rhs = d * s / (1.0 - c * s);
    let ybar = bisect(|y| ergodic_root_function(s, lambda, y) - rhs, 0.0, 1.0);
    Ok(ErgodicSolution { ybar, u: c * s + d * s / (1.0 - ybar), degenerate: false })
}

/// Closed-form threshold `(1 − (c+d)S)/(1 − cS)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompleteInfoThreshold {
    /// Raw closed-form value; may be non-positive.
    pub value: f64,
    /// `value` clamped to `[0, 1]`.
    pub ybar: f64,
    /// False when `value <= 0`: no replenishment threshold exists.
    pub has_threshold: bool,
}

/// Closed form obtained by dropping the exponential factor of the ergodic
/// root equation. Note that this is the `λ → 0` limit of
/// [`ergodic_threshold`]; as `λ → ∞` the ergodic root tends to 0 instead.
pub fn complete_info_threshold(s: f64, c: f64, d: f64) -> Result<CompleteInfoThreshold> {
    if !(s > 0.0) || c < 0.0 || d < 0.0 {
        return input("need S > 0 and c, d >= 0");
    }
    if c * s >= 1.0 {
        return Err(Error::Domain(format!("cS = {} >= 1", c * s)));
    }
    let value = (1.0 - (c + d) * s) / (1.0 - c * s);
    Ok(CompleteInfoThreshold { value, ybar: value.clamp(0.0, 1.0), has_threshold: value > 0.0 })
}

/// Sign of ∂ybar/∂S in the ergodic limit: `sign(ybar − S/(λ(1−cS)))`.
pub fn threshold_sensitivity_sign(s: f64, c: f64, d: f64, lambda: f64) -> Result<i32> {
    let erg = ergodic_threshold(s, c, d, lambda)?;
    let gap = erg.ybar - s / (lambda * (1.0 - c * s));
    Ok(if gap > 0.0 {
        1
    } else if gap < 0.0 {
        -1
    } else {
        0
    })
}
