//! Acceptance suite. Each test prints one `PASS`/`FAIL` line per criterion
//! (plus indented detail lines) and then asserts the verdict.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads=1`
//! to see the report in order.

use std::time::{Duration, Instant};

use replenish::analytic::{
    complete_info_threshold, ergodic_root_function, ergodic_threshold, solve_smooth_pasting,
    threshold_sensitivity_sign, ScalarProblem,
};
use replenish::mc::{estimate_cost, simulate_storage, ControlledSystem};
use replenish::pde::{
    convergence_study, extract_policy, solve_stationary, solve_with_ambiguity, ConvergenceRow, CostSpec, Grid,
    SolverConfig, ThresholdPolicy,
};
use replenish::regime::{coarsen, sample_regime_path, RegimeChain};
use replenish::transport::{rates_for_chain, SedimentProperties};
use replenish::Error;

const BENCH_YBAR: f64 = 0.615195;
const RESOLUTIONS: [usize; 5] = [51, 101, 201, 401, 801];
const REF_LINF: [f64; 5] = [1.98e-2, 5.58e-3, 1.52e-3, 4.00e-4, 1.10e-4];
const REF_L1: [f64; 5] = [5.59e-3, 1.45e-3, 3.80e-4, 9.59e-5, 2.40e-5];
const REF_YBAR_N: [f64; 5] = [0.61, 0.615, 0.6175, 0.61625, 0.615625];

/// Benchmark parameters as stated: S = 0.05, δ = 0.2, c = 0.2, d = 0.3, λ = 1/7.
fn benchmark() -> ScalarProblem {
    ScalarProblem::new(0.05, 0.2, 0.2, 0.3, 1.0 / 7.0).unwrap()
}

/// Parameter set that reproduces the published benchmark numbers:
/// δ = 0.1, c = 0.3, d = 0.2 with the same S and λ.
fn reference_set() -> ScalarProblem {
    ScalarProblem::new(0.05, 0.1, 0.3, 0.2, 1.0 / 7.0).unwrap()
}

fn table_config() -> SolverConfig {
    SolverConfig { dt: Some(1.0 / 800.0), t_end: 365.0 / 2.0, tol: 1e-10, ..SolverConfig::default() }
}

fn report(name: &str, pass: bool, details: &[String]) {
    println!("{} {name}", if pass { "PASS" } else { "FAIL" });
    for d in details {
        println!("    {d}");
    }
    assert!(pass, "acceptance criterion `{name}` failed: {details:?}");
}

fn within_factor(value: f64, reference: f64, factor: f64) -> bool {
    value <= reference * factor && value >= reference / factor
}

fn check_table(rows: &[ConvergenceRow], elapsed: Duration) -> (bool, Vec<String>) {
    let mut ok = elapsed < Duration::from_secs(120);
    let mut lines = vec![format!("runtime {elapsed:.2?} (limit 120 s)")];
    for (k, r) in rows.iter().enumerate() {
        let fit = within_factor(r.linf_error, REF_LINF[k], 3.0) && within_factor(r.l1_error, REF_L1[k], 3.0);
        let orders = [r.linf_rate, r.l1_rate].iter().flatten().all(|&p| p >= 1.8);
        ok &= fit && orders;
        lines.push(format!(
            "n={:4} linf {:.3e} (ref {:.2e}) l1 {:.3e} (ref {:.2e}) rates {:?}/{:?}{}{}",
            r.n,
            r.linf_error,
            REF_LINF[k],
            r.l1_error,
            REF_L1[k],
            r.linf_rate.map(|p| (p * 1000.0).round() / 1000.0),
            r.l1_rate.map(|p| (p * 1000.0).round() / 1000.0),
            if fit { "" } else { "  <- error outside factor 3" },
            if orders { "" } else { "  <- order below 1.8" },
        ));
    }
    (ok, lines)
}

fn check_thresholds(rows: &[ConvergenceRow]) -> (bool, Vec<String>) {
    let mut ok = true;
    let lines = rows
        .iter()
        .map(|r| {
            let err = (r.ybar - BENCH_YBAR).abs();
            ok &= err <= r.h;
            format!("n={:4} ybar_n {:.6} |ybar_n - {BENCH_YBAR}| = {err:.3e} (h = {:.3e})", r.n, r.ybar, r.h)
        })
        .collect();
    (ok, lines)
}

#[test]
fn smooth_pasting_benchmark() {
    let start = Instant::now();
    let sol = solve_smooth_pasting(&benchmark()).unwrap();
    let elapsed = start.elapsed();
    let pass = (sol.ybar - BENCH_YBAR).abs() < 1e-5 && elapsed < Duration::from_secs(1);
    report(
        "smooth_pasting_benchmark",
        pass,
        &[format!("ybar {:.9} vs {BENCH_YBAR} (tol 1e-5), runtime {elapsed:.2?}", sol.ybar)],
    );
}

#[test]
fn smooth_pasting_reference_parameters() {
    let sol = solve_smooth_pasting(&reference_set()).unwrap();
    let (rv, rs) = sol.pasting_residuals();
    let pass = (sol.ybar - BENCH_YBAR).abs() < 1e-5 && rv.abs() < 1e-10 && rs.abs() < 1e-10;
    report(
        "smooth_pasting_reference_parameters",
        pass,
        &[format!("ybar {:.9} vs {BENCH_YBAR}; pasting residuals {rv:.1e} {rs:.1e}", sol.ybar)],
    );
}

#[test]
fn grid_convergence_benchmark() {
    let start = Instant::now();
    let rows = convergence_study(&benchmark(), &RESOLUTIONS, &table_config()).unwrap();
    let (pass, lines) = check_table(&rows, start.elapsed());
    report("grid_convergence_benchmark", pass, &lines);
}

#[test]
fn grid_convergence_reference_parameters() {
    let start = Instant::now();
    let rows = convergence_study(&reference_set(), &RESOLUTIONS, &table_config()).unwrap();
    let (mut pass, mut lines) = check_table(&rows, start.elapsed());
    for (r, want) in rows.iter().zip(REF_YBAR_N) {
        let same = (r.ybar - want).abs() < 1e-12;
        pass &= same;
        lines.push(format!("n={:4} extracted ybar {} (reference {want})", r.n, r.ybar));
    }
    report("grid_convergence_reference_parameters", pass, &lines);
}

#[test]
fn threshold_within_grid_spacing_benchmark() {
    let rows = convergence_study(&benchmark(), &RESOLUTIONS, &table_config()).unwrap();
    let (pass, lines) = check_thresholds(&rows);
    report("threshold_within_grid_spacing_benchmark", pass, &lines);
}

#[test]
fn threshold_within_grid_spacing_reference_parameters() {
    let rows = convergence_study(&reference_set(), &RESOLUTIONS, &table_config()).unwrap();
    let (pass, lines) = check_thresholds(&rows);
    report("threshold_within_grid_spacing_reference_parameters", pass, &lines);
}

#[test]
fn ergodic_root() {
    let mut lines = Vec::new();

    let mut residual_ok = true;
    for &(s, c, d, lambda) in &[(0.05, 0.2, 0.3, 1.0 / 7.0), (0.5, 0.2, 0.3, 1.0), (1.2, 0.1, 0.5, 1.0 / 30.0)] {
        let e = ergodic_threshold(s, c, d, lambda).unwrap();
        let r = (ergodic_root_function(s, lambda, e.ybar) - d * s / (1.0 - c * s)).abs();
        residual_ok &= r < 1e-12;
        lines.push(format!("S={s} c={c} d={d} lambda={lambda:.4}: ybar {:.10} residual {r:.1e}", e.ybar));
    }

    let mut gate_ok = true;
    for &s in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.0] {
        for &(c, d) in &[(0.1, 0.2), (0.2, 0.3), (0.4, 0.5), (0.6, 0.0)] {
            let infeasible = (c + d) * s >= 1.0;
            let res = ergodic_threshold(s, c, d, 1.0 / 7.0);
            gate_ok &= res.is_err() == infeasible;
        }
    }
    lines.push(format!("error exactly when (c+d)S >= 1 on a 6x4 sweep: {gate_ok}"));

    let (s, c, d) = (0.05, 0.2, 0.3);
    let target = complete_info_threshold(s, c, d).unwrap().value;
    let mut limit_ok = true;
    for lambda in [1e2, 1e4, 1e6] {
        let gap = (ergodic_threshold(s, c, d, lambda).unwrap().ybar - target).abs();
        lines.push(format!("lambda={lambda:e}: |ybar - (1-(c+d)S)/(1-cS)| = {gap:.3e}"));
        if lambda == 1e6 {
            limit_ok &= gap < 1e-6;
        }
    }
    lines.push(format!("large-intensity limit within 1e-6: {limit_ok}"));
    report("ergodic_root", residual_ok && gate_ok && limit_ok, &lines);
}

#[test]
fn ergodic_root_small_intensity_limit() {
    let (s, c, d) = (0.05, 0.2, 0.3);
    let target = complete_info_threshold(s, c, d).unwrap().value;
    let gap = (ergodic_threshold(s, c, d, 1e-9).unwrap().ybar - target).abs();
    report(
        "ergodic_root_small_intensity_limit",
        gap < 1e-6,
        &[format!("lambda=1e-9: |ybar - (1-(c+d)S)/(1-cS)| = {gap:.3e}")],
    );
}

#[test]
fn sensitivity_sign() {
    let (c, d, lambda) = (0.2, 0.3, 1.0 / 7.0);
    let (lo, hi): (f64, f64) = (0.02, 1.9);
    let mut pass = true;
    let mut lines = Vec::new();
    let mut signs = Vec::new();
    for k in 0..20 {
        let s = lo * (hi / lo).powf(k as f64 / 19.0);
        let step = 1e-6 * s;
        let fd = (ergodic_threshold(s + step, c, d, lambda).unwrap().ybar
            - ergodic_threshold(s - step, c, d, lambda).unwrap().ybar)
            / (2.0 * step);
        let sign = threshold_sensitivity_sign(s, c, d, lambda).unwrap();
        let agree = sign == fd.signum() as i32;
        pass &= agree;
        signs.push(sign);
        lines.push(format!("S={s:.5} sign {sign:+} finite difference {fd:+.4e}{}", if agree { "" } else { "  <- mismatch" }));
    }
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    pass &= changes == 1;
    lines.push(format!("sign changes across the sweep: {changes}"));
    report("sensitivity_sign", pass, &lines);
}

fn monte_carlo_check(problem: &ScalarProblem, name: &str) {
    let start = Instant::now();
    // Horizon 40/δ: 200 days on the benchmark.
    let (n_paths, horizon, seed) = (100_000, 40.0 / problem.delta, 20_240_601);
    let exact = solve_smooth_pasting(problem).unwrap();
    let chain = RegimeChain::single(1.0).unwrap();
    let rates = [problem.s];
    let costs = CostSpec { delta: problem.delta, c: problem.c, d: problem.d, lambda: problem.lambda };
    let truncation = (-problem.delta * horizon).exp();
    let mut pass = truncation < 5e-18;
    let mut lines = vec![format!("ybar {:.6}; e^(-delta T) = {truncation:.2e}", exact.ybar)];

    let optimal = ThresholdPolicy::new(vec![exact.ybar]).unwrap();
    for y0 in [0.0, 0.3, 1.0] {
        let sys = ControlledSystem { chain: &chain, rates: &rates, policy: Some(&optimal), costs };
        let est = estimate_cost(&sys, y0, 0, horizon, n_paths, seed).unwrap();
        let psi = exact.value(y0);
        let z = (est.mean - psi) / est.stderr;
        pass &= z.abs() <= 3.0;
        lines.push(format!("y0={y0}: MC {:.6} +- {:.1e} vs exact {psi:.6} ({z:+.2} se)", est.mean, est.stderr));
    }
    for delta in [-0.15, 0.15] {
        let threshold = (exact.ybar + delta).clamp(0.0, 1.0);
        let policy = ThresholdPolicy::new(vec![threshold]).unwrap();
        let sys = ControlledSystem { chain: &chain, rates: &rates, policy: Some(&policy), costs };
        for y0 in [0.0, 0.3, 1.0] {
            let est = estimate_cost(&sys, y0, 0, horizon, n_paths, seed).unwrap();
            let gap = est.mean - exact.value(y0);
            pass &= gap >= -3.0 * est.stderr;
            lines.push(format!("threshold {threshold:.4} y0={y0}: gap {gap:+.3e} (se {:.1e})", est.stderr));
        }
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    lines.push(format!("runtime {elapsed:.2?} (limit 120 s)"));
    report(name, pass, &lines);
}

#[test]
fn monte_carlo_verifies_optimality() {
    monte_carlo_check(&benchmark(), "monte_carlo_verifies_optimality");
}

#[test]
fn monte_carlo_verifies_optimality_reference_parameters() {
    monte_carlo_check(&reference_set(), "monte_carlo_verifies_optimality_reference_parameters");
}

#[test]
fn exact_path_law() {
    let chain =
        RegimeChain::new(vec![2.0, 10.0, 40.0], vec![vec![0.0, 0.4, 0.1], vec![0.5, 0.0, 0.3], vec![0.2, 0.9, 0.0]])
            .unwrap();
    let rates = [0.004, 0.03, 0.11];
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let path = sample_regime_path(&chain, seed as usize % 3, 60.0, seed).unwrap();
        let y0 = 0.2 + 0.04 * seed as f64;
        let trace = simulate_storage(&path, &rates, y0).unwrap();
        for k in 0..100 {
            let t = 60.0 * (k as f64 + 0.5) / 100.0;
            let integral: f64 = path.pieces().map(|(a, b, i)| rates[i] * (b.min(t) - a).max(0.0)).sum();
            let direct = (y0 - integral).max(0.0);
            worst = worst.max((trace.value_at(t) - direct).abs());
        }
    }

    let single = RegimeChain::single(1.0).unwrap();
    let mut null_gap = 0.0f64;
    for (s, delta, y0) in [(0.05, 0.2, 1.0), (0.05, 0.2, 0.3), (0.2, 0.1, 0.7)] {
        let costs = CostSpec { delta, c: 0.2, d: 0.3, lambda: 1.0 / 7.0 };
        let sys = ControlledSystem { chain: &single, rates: &[s], policy: None, costs };
        let est = estimate_cost(&sys, y0, 0, 1000.0, 4, 0).unwrap();
        let exact = (-delta * y0 / s).exp() / delta;
        null_gap = null_gap.max(((est.mean - exact) / exact).abs());
    }
    report(
        "exact_path_law",
        worst <= 1e-14 && null_gap <= 1e-14,
        &[
            format!("max |Y(t) - max(0, y0 - int S)| over 20 paths x 100 probes: {worst:.2e}"),
            format!("null-policy cost relative error vs e^(-delta y0/S)/delta: {null_gap:.2e}"),
        ],
    );
}

/// Synthetic 43-regime birth-death discharge chain lumped to 8 regimes,
/// with transport rates from the default sediment properties.
fn synthetic_chain() -> (RegimeChain, Vec<f64>) {
    let count = 43;
    let discharges: Vec<f64> = (0..count).map(|i| 2.5 * (i as f64 + 0.5)).collect();
    let mut rates = vec![vec![0.0; count]; count];
    for i in 0..count {
        if i + 1 < count {
            rates[i][i + 1] = 0.6 * 0.93f64.powi(i as i32);
        }
        if i > 0 {
            rates[i][i - 1] = 0.8;
        }
    }
    let fine = RegimeChain::new(discharges, rates).unwrap();
    let lumped = coarsen(&fine, &[0..1, 1..2, 2..3, 3..4, 4..6, 6..9, 9..16, 16..43]).unwrap();
    let s = rates_for_chain(&lumped, &SedimentProperties::default()).unwrap();
    (lumped, s)
}

fn realistic_costs(lambda: f64) -> CostSpec {
    CostSpec { delta: 0.2, c: 0.02, d: 0.01, lambda }
}

fn unimodal(v: &[f64]) -> bool {
    let peak = v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best });
    v[..=peak].windows(2).all(|w| w[0] <= w[1]) && v[peak..].windows(2).all(|w| w[0] >= w[1])
}

#[test]
fn value_bounds_and_structure() {
    let mut pass = true;
    let mut lines = Vec::new();
    let (chain, rates) = synthetic_chain();
    let single = RegimeChain::single(1.0).unwrap();
    let b = benchmark();
    let cases: Vec<(&str, &RegimeChain, Vec<f64>, CostSpec)> = vec![
        ("benchmark", &single, vec![b.s], CostSpec { delta: b.delta, c: b.c, d: b.d, lambda: b.lambda }),
        ("synthetic, lambda=1", &chain, rates.clone(), realistic_costs(1.0)),
        ("synthetic, lambda=1/30", &chain, rates.clone(), realistic_costs(1.0 / 30.0)),
    ];
    for (name, ch, s, costs) in cases {
        let out = solve_stationary(ch, &s, &costs, &Grid::new(101).unwrap(), &SolverConfig::default()).unwrap();
        let st = &out.stats;
        let upper = 1.0 / costs.delta + 1e-8;
        let policy = extract_policy(&out.field);
        let lo = out.field.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = out.field.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ok = st.converged && lo >= 0.0 && hi <= upper && st.min_nonlocal >= 0.0 && policy.is_ok();
        pass &= ok;
        lines.push(format!(
            "{name}: converged Phi in [{lo:.6}, {hi:.6}] (upper {upper:.6}), min nonlocal over iterates {:.1e}, \
             contiguous {}; transient iterate range [{:.2e}, {:.6}]",
            st.min_nonlocal,
            policy.is_ok(),
            st.min_value,
            st.max_value,
        ));
    }
    report("value_bounds_and_structure", pass, &lines);
}

#[test]
fn realistic_free_boundary_properties() {
    let start = Instant::now();
    let (chain, rates) = synthetic_chain();
    let mut lines = vec![format!("S per regime {:?}", rates.iter().map(|s| (s * 1e4).round() / 1e4).collect::<Vec<_>>())];
    let mut pass = true;
    let mut fronts = Vec::new();
    for lambda in [1.0, 1.0 / 7.0, 1.0 / 30.0] {
        let out =
            solve_stationary(&chain, &rates, &realistic_costs(lambda), &Grid::new(101).unwrap(), &SolverConfig::default())
                .unwrap();
        let b = extract_policy(&out.field).unwrap().boundaries;
        let uni = unimodal(&b);
        pass &= uni && out.stats.converged;
        lines.push(format!("lambda={lambda:.4}: Ybar {b:?} unimodal {uni}"));
        fronts.push(b);
    }
    let monotone = fronts.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(hi_lambda, lo_lambda)| hi_lambda <= lo_lambda));
    pass &= monotone;
    lines.push(format!("nonincreasing in lambda: {monotone}"));
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(600);
    lines.push(format!("runtime {elapsed:.2?} (limit 600 s)"));
    report("realistic_free_boundary_properties", pass, &lines);
}

#[test]
#[ignore = "long-running: 43 regimes, n = 301, dt = 2.5e-5"]
fn realistic_full_resolution() {
    let count = 43;
    let discharges: Vec<f64> = (0..count).map(|i| 2.5 * (i as f64 + 0.5)).collect();
    let mut rates = vec![vec![0.0; count]; count];
    for i in 0..count {
        if i + 1 < count {
            rates[i][i + 1] = 0.6 * 0.93f64.powi(i as i32);
        }
        if i > 0 {
            rates[i][i - 1] = 0.8;
        }
    }
    let chain = RegimeChain::new(discharges, rates).unwrap();
    let s = rates_for_chain(&chain, &SedimentProperties::default()).unwrap();
    let cfg = SolverConfig { dt: Some(2.5e-5), t_end: 90.0, tol: 1e-9, ..SolverConfig::default() };
    let out = solve_stationary(&chain, &s, &realistic_costs(1.0 / 7.0), &Grid::new(301).unwrap(), &cfg).unwrap();
    let b = extract_policy(&out.field).unwrap().boundaries;
    report("realistic_full_resolution", unimodal(&b), &[format!("Ybar {b:?}"), format!("{:?}", out.stats.warnings)]);
}

#[test]
fn ambiguity_reduction() {
    let b = benchmark();
    let chain = RegimeChain::single(1.0).unwrap();
    let costs = CostSpec { delta: b.delta, c: b.c, d: b.d, lambda: 1.0 / 7.0 };
    let grid = Grid::new(201).unwrap();
    let cfg = SolverConfig::default();
    let plain = solve_stationary(&chain, &[b.s], &costs, &grid, &cfg).unwrap();
    let amb = solve_with_ambiguity(&chain, &[b.s], &costs, (1.0 / 7.0, 1.0), &grid, &cfg).unwrap();
    let diff = (&plain.field.values - &amb.field.values).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    report("ambiguity_reduction", diff < 1e-12, &[format!("sup |Phi_amb - Phi| = {diff:.1e}")]);
}

#[test]
fn ergodic_consistency() {
    let (s, c, d, lambda) = (0.05, 0.2, 0.3, 1.0 / 7.0);
    let chain = RegimeChain::single(1.0).unwrap();
    let costs = CostSpec { delta: 0.0, c, d, lambda };
    let out = solve_stationary(&chain, &[s], &costs, &Grid::new(401).unwrap(), &SolverConfig::default()).unwrap();
    let u = ergodic_threshold(s, c, d, lambda).unwrap().u;
    let rel = (out.stats.growth_rate - u).abs() / u;
    let (lo, hi) = out.stats.growth_range;
    report(
        "ergodic_consistency",
        rel < 0.02,
        &[format!("cost rate {:.8} (nodes {lo:.8}..{hi:.8}) vs u {u:.8}: relative gap {rel:.2e}", out.stats.growth_rate)],
    );
}

#[test]
fn infeasible_smooth_pasting_is_reported() {
    let p = ScalarProblem::new(0.05, 0.2, 20.0, 20.0, 1.0 / 7.0).unwrap();
    let pass = matches!(solve_smooth_pasting(&p), Err(Error::NoInteriorThreshold(_)));
    report("infeasible_smooth_pasting_is_reported", pass, &[]);
}
