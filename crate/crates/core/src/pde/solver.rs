use ndarray::{Array2, Zip};
use serde::Serialize;

use super::weno::left_derivative_into;
use super::{check_problem, CostSpec, Grid, SolverConfig, ValueField, DEFAULT_CFL_FRACTION, DEFAULT_WENO_EPS};
use crate::error::{input, Error, Result};
use crate::regime::RegimeChain;

/// Discrete operator of the optimality equation. `apply` writes
///
/// ```text
/// δΦ_i + S_i·χ_{k>0}·D⁻Φ_i + Σ_j ν_ij(Φ_i − Φ_j)
///     + λ(Φ_i − min{Φ_i, Φ_i(1) + c(1−y) + d}) − χ_{k=0}
/// ```
struct Operator<'a> {
    rates: &'a [f64],
    costs: CostSpec,
    grid: Grid,
    eps: f64,
    exit: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
    vertices: Vec<f64>,
    deriv: Vec<f64>,
}

impl<'a> Operator<'a> {
    fn new(chain: &RegimeChain, rates: &'a [f64], costs: CostSpec, grid: Grid, eps: f64) -> Self {
        Self {
            rates,
            costs,
            grid,
            eps,
            exit: (0..chain.count()).map(|i| chain.exit_rate(i)).collect(),
            neighbors: (0..chain.count()).map(|i| chain.neighbors(i).collect()).collect(),
            vertices: grid.vertices(),
            deriv: vec![0.0; grid.n()],
        }
    }

    /// Returns the smallest nonlocal (intervention) term encountered.
    fn apply(&mut self, phi: &Array2<f64>, out: &mut Array2<f64>) -> f64 {
        let CostSpec { delta, c, d, lambda } = self.costs;
        let n = self.grid.n();
        let mut min_nonlocal = f64::INFINITY;
        for i in 0..self.rates.len() {
            let row = phi.row(i).to_slice().expect("standard layout");
            left_derivative_into(row, self.grid.h(), self.eps, &mut self.deriv);
            let full = row[n - 1];
            let (s, exit) = (self.rates[i], self.exit[i]);
            let mut out_row = out.row_mut(i);
            let res = out_row.as_slice_mut().expect("standard layout");
            for k in 0..n {
                let v = row[k];
                let replenish = full + c * (1.0 - self.vertices[k]) + d;
                let nonlocal = lambda * (v - v.min(replenish));
                min_nonlocal = min_nonlocal.min(nonlocal);
                let mut r = (delta + exit) * v + nonlocal;
                if k > 0 {
                    r += s * self.deriv[k];
                } else {
                    r -= 1.0;
                }
                res[k] = r;
            }
            for &(j, nu) in &self.neighbors[i] {
                let other = phi.row(j).to_slice().expect("standard layout");
                res.iter_mut().zip(other).for_each(|(r, &o)| *r -= nu * o);
            }
        }
        min_nonlocal
    }
}

/// Pointwise residual of the discrete optimality equation.
pub fn residual(field: &ValueField) -> Result<Array2<f64>> {
    check_problem(&field.chain, &field.rates, &field.costs)?;
    let mut op = Operator::new(&field.chain, &field.rates, field.costs, field.grid, DEFAULT_WENO_EPS);
    let values = field.values.as_standard_layout().into_owned();
    let mut out = Array2::zeros(values.dim());
    op.apply(&values, &mut out);
    Ok(out)
}

/// Advective CFL limit of the forward-Euler step: `h / (max S + h(δ + λ + max exit rate))`.
pub fn cfl_bound(chain: &RegimeChain, rates: &[f64], costs: &CostSpec, grid: &Grid) -> f64 {
    let h = grid.h();
    let s_max = rates.iter().copied().fold(0.0, f64::max);
    h / (s_max + h * (costs.delta + costs.lambda + chain.max_exit_rate()))
}

/// Diagnostics of a pseudo-time run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveStats {
    pub steps: usize,
    pub pseudo_time: f64,
    pub dt: f64,
    /// Sup-norm change of the last step.
    pub step_change: f64,
    /// Step change fell below `tol` (never set in the undiscounted mode).
    pub converged: bool,
    /// Extremes of Φ over all iterates.
    pub min_value: f64,
    pub max_value: f64,
    /// Smallest intervention term over all iterates and nodes.
    pub min_nonlocal: f64,
    /// Mean, min and max of `(Φ^{m+1} − Φ^m)/dt` at the last step. In the
    /// undiscounted mode this is the long-run cost rate.
    pub growth_rate: f64,
    pub growth_range: (f64, f64),
    /// Largest increase of Φ_i between neighbouring vertices (0 if monotone).
    pub monotonicity_violation: f64,
    pub warnings: Vec<String>,
    /// Set by [`solve_with_ambiguity`]: the intensity interval that was
    /// reduced to its lower end.
    pub intensity_interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub field: ValueField,
    pub stats: SolveStats,
}

/// Marches `Φ ← Φ − dt·residual(Φ)` from `Φ ≡ 0` until the sup-norm step
/// change drops below `tol` or `t_end` is reached.
pub fn solve_stationary(
    chain: &RegimeChain,
    rates: &[f64],
    costs: &CostSpec,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<SteadyState> {
    check_problem(chain, rates, costs)?;
    config.validate()?;
    let bound = cfl_bound(chain, rates, costs, grid);
    let dt = config.dt.unwrap_or(DEFAULT_CFL_FRACTION * bound);
    let total_steps = ((config.t_end / dt).round() as usize).max(1);

    // Φ is a priori bounded by the discounted (or accumulated) unit penalty
    // plus costs; iterates far beyond that are diverging.
    let horizon = if costs.delta > 0.0 { 1.0 / costs.delta } else { config.t_end };
    let blowup = 1e6 * (1.0 + horizon) * (1.0 + costs.c + costs.d);

    let mut op = Operator::new(chain, rates, *costs, *grid, config.weno_eps);
    let mut phi = Array2::<f64>::zeros((chain.count(), grid.n()));
    let mut res = Array2::<f64>::zeros(phi.dim());
    let (mut min_value, mut max_value, mut min_nonlocal) = (0.0f64, 0.0f64, f64::INFINITY);
    let (mut steps, mut change, mut converged) = (0, f64::INFINITY, false);

    while steps < total_steps {
        min_nonlocal = min_nonlocal.min(op.apply(&phi, &mut res));
        steps += 1;
        change = 0.0;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        Zip::from(&mut phi).and(&res).for_each(|p, &r| {
            let step = dt * r;
            *p -= step;
            change = f64::max(change, step.abs());
            lo = lo.min(*p);
            hi = hi.max(*p);
        });
        if !(change.is_finite() && lo > -blowup && hi < blowup) {
            return Err(Error::Instability { time: steps as f64 * dt, dt, cfl_bound: bound });
        }
        min_value = min_value.min(lo);
        max_value = max_value.max(hi);
        if costs.delta > 0.0 && change < config.tol {
            converged = true;
            break;
        }
    }

    let growth: Vec<f64> = res.iter().map(|r| -r).collect();
    let growth_rate = growth.iter().sum::<f64>() / growth.len() as f64;
    let growth_range = growth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| (a.min(g), b.max(g)));
    let monotonicity_violation = phi
        .rows()
        .into_iter()
        .flat_map(|row| row.to_vec().windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
        .fold(0.0, f64::max);

    let mut warnings = Vec::new();
    if costs.delta > 0.0 && !converged {
        warnings.push(format!(
            "step change {change:e} did not reach tol {:e} by t_end = {}",
            config.tol, config.t_end
        ));
    }
    if monotonicity_violation > 1e-8 {
        warnings.push(format!("value function increases in y by up to {monotonicity_violation:e}"));
    }

    let field = ValueField::new(phi, *grid, chain.clone(), rates.to_vec(), *costs)?;
    let stats = SolveStats {
        steps,
        pseudo_time: steps as f64 * dt,
        dt,
        step_change: change,
        converged,
        min_value,
        max_value,
        min_nonlocal,
        growth_rate,
        growth_range,
        monotonicity_violation,
        warnings,
        intensity_interval: None,
    };
    Ok(SteadyState { field, stats })
}

/// Worst case over an observation-intensity interval. The intervention term
/// is non-negative, so the supremum over `λ` is attained at the lower end and
/// the problem reduces to [`solve_stationary`] with `λ = λ_low`.
pub fn solve_with_ambiguity(
    chain: &RegimeChain,
    rates: &[f64],
    costs: &CostSpec,
    lambda_interval: (f64, f64),
    grid: &Grid,
    config: &SolverConfig,
) -> Result<SteadyState> {
    let (lo, hi) = lambda_interval;
    if !(lo > 0.0) || !(lo <= hi) || !hi.is_finite() {
        return input(format!("intensity interval [{lo}, {hi}] must satisfy 0 < low <= high < inf"));
    }
    let reduced = CostSpec { lambda: lo, ..*costs };
    let mut out = solve_stationary(chain, rates, &reduced, grid, config)?;
    out.stats.intensity_interval = Some((lo, hi));
    Ok(out)
}
