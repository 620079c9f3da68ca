//! Finite-difference solution of the regime-coupled optimality equation on
//! `{0..I} × [0, 1]`.
//!
//! Space is discretized with the WENO3 left derivative (the advection speed
//! `S_i` is non-negative, so the local Lax-Friedrichs flux reduces to pure
//! upwinding) and the steady state is reached by forward-Euler pseudo-time
//! marching from `Φ ≡ 0`.

mod policy;
mod solver;
mod study;
mod weno;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::regime::RegimeChain;

pub use policy::{extract_policy, replenish_set, ThresholdPolicy};
pub use solver::{cfl_bound, residual, solve_stationary, solve_with_ambiguity, SolveStats, SteadyState};
pub use study::{convergence_study, convergence_table_csv, ConvergenceRow};
pub use weno::{weno3_left_derivative, DEFAULT_WENO_EPS};

/// Forward Euler with WENO3 stalls in a small limit cycle near the CFL bound
/// instead of settling; a tenth of the bound reaches 1e-10 step changes.
pub const DEFAULT_CFL_FRACTION: f64 = 0.1;

/// Uniform grid `y_k = k/(n−1)` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 5 {
            return input(format!("grid needs at least 5 vertices, got {n}"));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn y(&self, k: usize) -> f64 {
        if k == self.n - 1 {
            1.0
        } else {
            k as f64 * self.h()
        }
    }

    pub fn vertices(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.y(k)).collect()
    }
}

/// Discount rate, proportional and fixed replenishment costs, and
/// observation intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub delta: f64,
    pub c: f64,
    pub d: f64,
    pub lambda: f64,
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        if ![self.delta, self.c, self.d, self.lambda].iter().all(|v| v.is_finite()) {
            return input("cost parameters must be finite");
        }
        if self.delta < 0.0 || self.c < 0.0 || self.d < 0.0 {
            return input("delta, c and d must be >= 0");
        }
        if !(self.lambda > 0.0) {
            return input("observation intensity must be > 0");
        }
        Ok(())
    }

    /// Cost of replenishing from `y` to full storage.
    pub fn replenish_cost(&self, y: f64) -> f64 {
        self.c * (1.0 - y) + self.d
    }
}

/// Pseudo-time marching parameters. `dt = None` picks [`DEFAULT_CFL_FRACTION`]
/// of [`cfl_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: Option<f64>,
    pub t_end: f64,
    pub tol: f64,
    pub weno_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { dt: None, t_end: 365.0 / 2.0, tol: 1e-10, weno_eps: DEFAULT_WENO_EPS }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return input("dt must be finite and > 0");
            }
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return input("t_end must be finite and > 0");
        }
        if !(self.tol > 0.0) || !(self.weno_eps > 0.0) {
            return input("tol and weno_eps must be > 0");
        }
        Ok(())
    }
}

/// Sampled value function `Φ(i, y_k)`; rows are regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub values: Array2<f64>,
    pub grid: Grid,
    pub chain: RegimeChain,
    pub rates: Vec<f64>,
    pub costs: CostSpec,
}

impl ValueField {
    pub fn new(values: Array2<f64>, grid: Grid, chain: RegimeChain, rates: Vec<f64>, costs: CostSpec) -> Result<Self> {
        check_problem(&chain, &rates, &costs)?;
        if values.dim() != (chain.count(), grid.n()) {
            return Err(crate::Error::Structure(format!(
                "field shape {:?} does not match {} regimes x {} vertices",
                values.dim(),
                chain.count(),
                grid.n()
            )));
        }
        Ok(Self { values, grid, chain, rates, costs })
    }

    pub fn regime(&self, i: usize) -> &[f64] {
        self.values.row(i).to_slice().expect("standard layout")
    }

    /// CSV with columns `regime,y,phi,action`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["regime", "y", "phi", "action"])?;
        for i in 0..self.chain.count() {
            let row = self.regime(i);
            let full = row[self.grid.n() - 1];
            for (k, &phi) in row.iter().enumerate() {
                let y = self.grid.y(k);
                let act = if full + self.costs.replenish_cost(y) < phi { "replenish" } else { "none" };
                w.write_record([i.to_string(), y.to_string(), phi.to_string(), act.to_string()])?;
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
    }
}

pub(crate) fn check_problem(chain: &RegimeChain, rates: &[f64], costs: &CostSpec) -> Result<()> {
    costs.validate()?;
    if rates.len() != chain.count() {
        return Err(crate::Error::Structure(format!(
            "{} transport rates for {} regimes",
            rates.len(),
            chain.count()
        )));
    }
    if rates.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return input("transport rates must be finite and >= 0");
    }
    Ok(())
}
