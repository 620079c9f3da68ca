use serde::Serialize;

use super::{extract_policy, solve_stationary, CostSpec, Grid, SolverConfig};
use crate::analytic::{solve_smooth_pasting, ScalarProblem};
use crate::error::{input, Result};
use crate::regime::RegimeChain;

/// One resolution of a grid-refinement study against the closed form.
/// Rates sit on the coarser row of each consecutive pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub linf_error: f64,
    /// Mean absolute vertex error.
    pub l1_error: f64,
    pub linf_rate: Option<f64>,
    pub l1_rate: Option<f64>,
    pub ybar: f64,
    pub ybar_error: f64,
}

/// Solves the single-regime problem at each resolution and measures the
/// error against the smooth-pasting solution on the same vertices.
pub fn convergence_study(
    problem: &ScalarProblem,
    resolutions: &[usize],
    config: &SolverConfig,
) -> Result<Vec<ConvergenceRow>> {
    if resolutions.is_empty() {
        return input("no resolutions given");
    }
    for (k, n) in resolutions.iter().enumerate() {
        if resolutions[..k].contains(n) {
            return input(format!("resolution {n} listed twice; the rate is undefined"));
        }
    }
    let exact = solve_smooth_pasting(problem)?;
    let chain = RegimeChain::single(1.0)?;
    let costs = CostSpec { delta: problem.delta, c: problem.c, d: problem.d, lambda: problem.lambda };

    let mut rows = Vec::with_capacity(resolutions.len());
    for &n in resolutions {
        let grid = Grid::new(n)?;
        let out = solve_stationary(&chain, &[problem.s], &costs, &grid, config)?;
        let (mut linf, mut l1) = (0.0f64, 0.0);
        for (k, &phi) in out.field.regime(0).iter().enumerate() {
            let e = (phi - exact.value(grid.y(k))).abs();
            linf = linf.max(e);
            l1 += e;
        }
        let ybar = extract_policy(&out.field)?.boundaries[0];
        rows.push(ConvergenceRow {
            n,
            h: grid.h(),
            linf_error: linf,
            l1_error: l1 / n as f64,
            linf_rate: None,
            l1_rate: None,
            ybar,
            ybar_error: (ybar - exact.ybar).abs(),
        });
    }
    for k in 0..rows.len().saturating_sub(1) {
        let ratio = rows[k + 1].n as f64 / rows[k].n as f64;
        let rate = |e1: f64, e2: f64| (e1 / e2).ln() / ratio.ln();
        rows[k].linf_rate = Some(rate(rows[k].linf_error, rows[k + 1].linf_error));
        rows[k].l1_rate = Some(rate(rows[k].l1_error, rows[k + 1].l1_error));
    }
    Ok(rows)
}

pub fn convergence_table_csv(rows: &[ConvergenceRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "h", "linf_error", "linf_rate", "l1_error", "l1_rate", "ybar", "ybar_error"])?;
    let opt = |r: Option<f64>| r.map_or(String::new(), |r| format!("{r:.3}"));
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{:e}", r.h),
            format!("{:.3e}", r.linf_error),
            opt(r.linf_rate),
            format!("{:.3e}", r.l1_error),
            opt(r.l1_rate),
            format!("{:.6}", r.ybar),
            format!("{:.3e}", r.ybar_error),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem() -> ScalarProblem {
        ScalarProblem::new(0.05, 0.1, 0.3, 0.2, 1.0 / 7.0).unwrap()
    }

    #[test]
    fn duplicate_resolution_rejected() {
        let err = convergence_study(&problem(), &[51, 51], &SolverConfig::default()).unwrap_err();
        assert!(err.to_string().contains("twice"));
    }

    #[test]
    fn errors_shrink_and_table_layout() {
        let rows = convergence_study(&problem(), &[51, 101], &SolverConfig::default()).unwrap();
        assert!(rows[1].linf_error < rows[0].linf_error);
        assert!(rows[0].l1_rate.unwrap() > 1.5);
        assert!(rows[1].l1_rate.is_none());
        let csv = convergence_table_csv(&rows).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("n,h,linf_error,linf_rate,l1_error,l1_rate,ybar,ybar_error\n51,"));
    }
}
