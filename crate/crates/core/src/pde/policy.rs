use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ValueField;
use crate::error::{input, Error, Result};

/// Regime-dependent replenishment thresholds: at an observation in regime
/// `i`, replenish to full iff the observed storage is `<= boundaries[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub boundaries: Vec<f64>,
}

impl ThresholdPolicy {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() || boundaries.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return input("thresholds must be non-empty and lie in [0, 1]");
        }
        Ok(Self { boundaries })
    }

    /// Same threshold in every regime.
    pub fn uniform(threshold: f64, count: usize) -> Result<Self> {
        Self::new(vec![threshold; count])
    }

    pub fn replenishes(&self, regime: usize, y: f64) -> bool {
        y <= self.boundaries[regime]
    }

    /// CSV `regime,q,Ybar`.
    pub fn to_csv(&self, discharges: &[f64]) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["regime", "q", "Ybar"])?;
        for (i, b) in self.boundaries.iter().enumerate() {
            let q = discharges.get(i).map_or(String::new(), |q| q.to_string());
            w.write_record([i.to_string(), q, b.to_string()])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
    }

    /// Reads the `regime,q,Ybar` layout; rows may come in any order but must
    /// cover regimes `0..count` exactly once.
    pub fn from_csv_reader(r: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Input(format!("policy file lacks column `{name}`")))
        };
        let (ri, bi) = (col("regime")?, col("Ybar")?);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let i: usize = rec[ri].parse().map_err(|_| Error::Input(format!("bad regime `{}`", &rec[ri])))?;
            let b: f64 = rec[bi].parse().map_err(|_| Error::Input(format!("bad threshold `{}`", &rec[bi])))?;
            rows.push((i, b));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(k, r)| r.0 != k) {
            return input("policy rows must cover regimes 0..count exactly once");
        }
        Self::new(rows.into_iter().map(|r| r.1).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// Per-vertex replenish decision for regime `i`: strictly cheaper to refill.
pub fn replenish_set(field: &ValueField, i: usize) -> Vec<bool> {
    let row = field.regime(i);
    let full = row[row.len() - 1];
    row.iter()
        .enumerate()
        .map(|(k, &v)| full + field.costs.replenish_cost(field.grid.y(k)) < v)
        .collect()
}

/// Free boundary of each regime, placed midway between the last replenish
/// vertex and the first idle vertex (0 if no vertex replenishes).
pub fn extract_policy(field: &ValueField) -> Result<ThresholdPolicy> {
    let boundaries = (0..field.chain.count())
        .map(|i| {
            let set = replenish_set(field, i);
            let count = set.iter().take_while(|&&r| r).count();
            if set[count..].iter().any(|&r| r) {
                return Err(Error::Structure(format!(
                    "replenish set of regime {i} is not an interval containing y = 0"
                )));
            }
            Ok(if count == 0 { 0.0 } else { 0.5 * (field.grid.y(count - 1) + field.grid.y(count)) })
        })
        .collect::<Result<Vec<_>>>()?;
    ThresholdPolicy::new(boundaries)
}
