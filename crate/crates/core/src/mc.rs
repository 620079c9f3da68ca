//! Exact event-driven simulation of the controlled storage process.
//!
//! Between events the storage falls linearly at the regime's transport rate
//! until it hits zero, so every trajectory is represented by its breakpoints
//! and all cost integrals are evaluated in closed form.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{solve_smooth_pasting, ScalarProblem};
use crate::error::{input, Error, Result};
use crate::pde::{CostSpec, ThresholdPolicy};
use crate::regime::{sample_regime_path_with, RegimeChain, RegimePath};

/// Piecewise-linear storage trajectory given by `(time, Y)` breakpoints.
/// A jump appears as two breakpoints with the same time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageTrace {
    pub breakpoints: Vec<(f64, f64)>,
}

impl StorageTrace {
    /// Storage at `t`; at a jump time the post-jump value is returned.
    pub fn value_at(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        let k = bp.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            return bp[0].1;
        }
        if k == bp.len() {
            return bp[k - 1].1;
        }
        let ((t0, y0), (t1, y1)) = (bp[k - 1], bp[k]);
        y0 + (y1 - y0) * (t - t0) / (t1 - t0)
    }
}

/// Uncontrolled storage along a regime path started from `y0`.
pub fn simulate_storage(path: &RegimePath, rates: &[f64], y0: f64) -> Result<StorageTrace> {
    check_level(y0)?;
    check_rates(path, rates)?;
    let mut walk = Walk::new(y0);
    for (start, end, i) in path.pieces() {
        walk.advance(start, end, rates[i]);
    }
    Ok(StorageTrace { breakpoints: walk.breakpoints })
}

/// Storage evolution with breakpoint and depletion bookkeeping.
struct Walk {
    y: f64,
    breakpoints: Vec<(f64, f64)>,
    depletion: Vec<(f64, f64)>,
    depleted_since: Option<f64>,
}

impl Walk {
    fn new(y0: f64) -> Self {
        Self {
            y: y0,
            breakpoints: vec![(0.0, y0)],
            depletion: Vec::new(),
            depleted_since: (y0 == 0.0).then_some(0.0),
        }
    }

    /// Moves from `t0` to `t1` at slope `-s`.
    fn advance(&mut self, t0: f64, t1: f64, s: f64) {
        if self.y > 0.0 && s > 0.0 {
            let hit = t0 + self.y / s;
            if hit <= t1 {
                self.y = 0.0;
                self.depleted_since = Some(hit);
                self.breakpoints.push((hit, 0.0));
            } else {
                self.y -= s * (t1 - t0);
            }
        }
        if self.breakpoints.last().is_some_and(|&(t, _)| t < t1) {
            self.breakpoints.push((t1, self.y));
        }
    }

    fn refill(&mut self, t: f64) {
        if let Some(start) = self.depleted_since.take() {
            if t > start {
                self.depletion.push((start, t));
            }
        }
        self.y = 1.0;
        self.breakpoints.push((t, 1.0));
    }

    fn finish(&mut self, horizon: f64) {
        if let Some(start) = self.depleted_since.take() {
            if horizon > start {
                self.depletion.push((start, horizon));
            }
        }
    }
}

/// A controlled system: regime chain, transport rates, costs and the
/// decision rule (`None` never replenishes).
#[derive(Debug, Clone, Copy)]
pub struct ControlledSystem<'a> {
    pub chain: &'a RegimeChain,
    pub rates: &'a [f64],
    pub policy: Option<&'a ThresholdPolicy>,
    pub costs: CostSpec,
}

impl ControlledSystem<'_> {
    fn validate(&self) -> Result<()> {
        crate::pde::check_problem(self.chain, self.rates, &self.costs)?;
        if let Some(p) = self.policy {
            if p.boundaries.len() != self.chain.count() {
                return Err(Error::Structure(format!(
                    "policy has {} thresholds for {} regimes",
                    p.boundaries.len(),
                    self.chain.count()
                )));
            }
        }
        Ok(())
    }
}

/// One simulated trajectory. `actions[k]` is the amount added at
/// `observations[k]` (0 when nothing is done).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub regime_path: RegimePath,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub storage: StorageTrace,
    pub depletion: Vec<(f64, f64)>,
}

impl PathRecord {
    /// Discounted depletion time plus discounted intervention costs.
    pub fn discounted_cost(&self, costs: &CostSpec) -> f64 {
        let delta = costs.delta;
        let disc = |t: f64| (-delta * t).exp();
        let penalty: f64 = self.depletion.iter().map(|&(a, b)| (disc(a) - disc(b)) / delta).sum();
        let control: f64 = self
            .observations
            .iter()
            .zip(&self.actions)
            .filter(|(_, &eta)| eta > 0.0)
            .map(|(&t, &eta)| disc(t) * (costs.c * eta + costs.d))
            .sum();
        penalty + control
    }

    /// Undiscounted cost per day over the simulated horizon.
    pub fn average_cost(&self, costs: &CostSpec) -> f64 {
        let penalty: f64 = self.depletion.iter().map(|&(a, b)| b - a).sum();
        let control: f64 = self.actions.iter().filter(|&&eta| eta > 0.0).map(|&eta| costs.c * eta + costs.d).sum();
        (penalty + control) / self.regime_path.horizon()
    }
}

/// Independent regime and observation generators for path `index`.
fn streams(seed: u64, index: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut regime = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = regime.clone();
    regime.set_stream(2 * index);
    obs.set_stream(2 * index + 1);
    (regime, obs)
}

fn check_level(y0: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&y0) {
        return input(format!("initial storage {y0} outside [0, 1]"));
    }
    Ok(())
}

fn check_rates(path: &RegimePath, rates: &[f64]) -> Result<()> {
    if path.pieces().any(|(_, _, i)| i >= rates.len()) {
        return Err(Error::Structure("regime path visits a regime without a transport rate".into()));
    }
    Ok(())
}

fn simulate_indexed(
    sys: &ControlledSystem,
    y0: f64,
    initial: usize,
    horizon: f64,
    seed: u64,
    index: u64,
) -> Result<PathRecord> {
    let (mut regime_rng, mut obs_rng) = streams(seed, index);
    let regime_path = sample_regime_path_with(sys.chain, initial, horizon, &mut regime_rng)?;
    let gaps = Exp::new(sys.costs.lambda).expect("lambda > 0");

    let mut walk = Walk::new(y0);
    let (mut observations, mut actions) = (Vec::new(), Vec::new());
    let mut next_obs = gaps.sample(&mut obs_rng);
    for (start, end, i) in regime_path.pieces() {
        let s = sys.rates[i];
        let mut t = start;
        while next_obs < end {
            debug_assert!(next_obs != start, "observation coincides with a regime switch");
            walk.advance(t, next_obs, s);
            t = next_obs;
            let eta = match sys.policy {
                Some(p) if p.replenishes(i, walk.y) => 1.0 - walk.y,
                _ => 0.0,
            };
            if eta > 0.0 {
                walk.refill(t);
            }
            observations.push(t);
            actions.push(eta);
            next_obs += gaps.sample(&mut obs_rng);
        }
        walk.advance(t, end, s);
    }
    walk.finish(horizon);
    Ok(PathRecord {
        regime_path,
        observations,
        actions,
        storage: StorageTrace { breakpoints: walk.breakpoints },
        depletion: walk.depletion,
    })
}

/// Simulates one controlled trajectory on `[0, horizon]`. Regime switches
/// and observations come from two independent streams derived from `seed`.
pub fn simulate_controlled(
    sys: &ControlledSystem,
    y0: f64,
    initial: usize,
    horizon: f64,
    seed: u64,
) -> Result<PathRecord> {
    sys.validate()?;
    check_level(y0)?;
    simulate_indexed(sys, y0, initial, horizon, seed, 0)
}

/// Sample mean of a per-path cost with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub horizon: f64,
    /// `e^{−δT}/δ`; zero for time-average estimates.
    pub truncation_bound: f64,
}

fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Per-path costs in path order: the discounted index when `δ > 0`,
/// otherwise the time-averaged cost per day. Path `k` uses streams `2k` and
/// `2k + 1` of `seed`, so results do not depend on the thread count.
pub fn path_costs(
    sys: &ControlledSystem,
    y0: f64,
    initial: usize,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    sys.validate()?;
    check_level(y0)?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return input("horizon must be finite and > 0");
    }
    let costs = sys.costs;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let p = simulate_indexed(sys, y0, initial, horizon, seed, k)?;
            Ok(if costs.delta > 0.0 { p.discounted_cost(&costs) } else { p.average_cost(&costs) })
        })
        .collect()
}

/// Builds a [`CostEstimate`] from per-path costs; `δ = 0` marks the
/// time-average mode.
pub fn estimate_from_samples(samples: &[f64], horizon: f64, delta: f64) -> Result<CostEstimate> {
    let (mean, stderr) = summarize(samples)?;
    let truncation_bound = if delta > 0.0 { (-delta * horizon).exp() / delta } else { 0.0 };
    Ok(CostEstimate { mean, stderr, n_paths: samples.len(), horizon, truncation_bound })
}

/// Sample mean and standard error of the mean.
fn summarize(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return input("at least two paths are needed for a standard error");
    }
    let n = samples.len() as f64;
    let mean = neumaier_sum(samples.iter().copied()) / n;
    let var = neumaier_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Monte Carlo estimate of the discounted performance index truncated at
/// `horizon`.
pub fn estimate_cost(
    sys: &ControlledSystem,
    y0: f64,
    initial: usize,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<CostEstimate> {
    let delta = sys.costs.delta;
    if delta <= 0.0 {
        return Err(Error::Domain(
            "the discounted index needs delta > 0; use estimate_cost_rate for the long-run average".into(),
        ));
    }
    estimate_from_samples(&path_costs(sys, y0, initial, horizon, n_paths, seed)?, horizon, delta)
}

/// Long-run cost per day, estimated by time averages over `[0, horizon]`.
pub fn estimate_cost_rate(
    sys: &ControlledSystem,
    y0: f64,
    initial: usize,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<CostEstimate> {
    if sys.costs.delta != 0.0 {
        return Err(Error::Domain("the cost-rate mode is for delta = 0".into()));
    }
    estimate_from_samples(&path_costs(sys, y0, initial, horizon, n_paths, seed)?, horizon, 0.0)
}

/// Cost of a perturbed threshold relative to the closed-form optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyGap {
    pub perturbation: f64,
    pub threshold: f64,
    pub estimate: CostEstimate,
    pub optimum: f64,
    /// `estimate.mean − optimum`.
    pub gap: f64,
}

/// Evaluates thresholds `ȳ + Δ` (clamped to `[0, 1]`) of a single-regime
/// problem by simulation. All perturbations share the same random streams.
pub fn policy_gap_check(
    problem: &ScalarProblem,
    perturbations: &[f64],
    y0: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PolicyGap>> {
    let exact = solve_smooth_pasting(problem)?;
    check_level(y0)?;
    let optimum = exact.value(y0);
    let chain = RegimeChain::single(1.0)?;
    let rates = [problem.s];
    let costs = CostSpec { delta: problem.delta, c: problem.c, d: problem.d, lambda: problem.lambda };
    perturbations
        .iter()
        .map(|&p| {
            let threshold = (exact.ybar + p).clamp(0.0, 1.0);
            let policy = ThresholdPolicy::new(vec![threshold])?;
            let sys = ControlledSystem { chain: &chain, rates: &rates, policy: Some(&policy), costs };
            let estimate = estimate_cost(&sys, y0, 0, horizon, n_paths, seed)?;
            Ok(PolicyGap { perturbation: p, threshold, estimate, optimum, gap: estimate.mean - optimum })
        })
        .collect()
}
