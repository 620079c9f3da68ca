//! Finite-regime continuous-time Markov chain of river discharge.
//!
//! Regimes are indexed from 0. The stored rate matrix has a zero diagonal;
//! the generator diagonal is recovered as the negative row sum.

use std::collections::VecDeque;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Discharge levels and switching rates (1/day) of the flow regime chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainFile", into = "ChainFile")]
pub struct RegimeChain {
    discharges: Vec<f64>,
    rates: Vec<Vec<f64>>,
}

/// On-disk layout of a chain: `{"discharges": [...], "rates": [[...], ...]}`.
#[derive(Serialize, Deserialize)]
struct ChainFile {
    discharges: Vec<f64>,
    rates: Vec<Vec<f64>>,
}

impl TryFrom<ChainFile> for RegimeChain {
    type Error = Error;

    fn try_from(f: ChainFile) -> Result<Self> {
        RegimeChain::new(f.discharges, f.rates)
    }
}

impl From<RegimeChain> for ChainFile {
    fn from(c: RegimeChain) -> Self {
        ChainFile { discharges: c.discharges, rates: c.rates }
    }
}

impl RegimeChain {
    /// Builds a chain, checking shapes, ordering and rate signs.
    ///
    /// Diagonal entries of `rates` are ignored and stored as zero.
    /// Irreducibility is not required here (an estimated chain may have
    /// unvisited regimes); see [`RegimeChain::check_irreducible`].
    pub fn new(discharges: Vec<f64>, mut rates: Vec<Vec<f64>>) -> Result<Self> {
        let n = discharges.len();
        if n == 0 {
            return input("chain needs at least one regime");
        }
        if rates.len() != n || rates.iter().any(|r| r.len() != n) {
            return Err(Error::Structure(format!("rate matrix must be {n}x{n}")));
        }
        if discharges.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return input("discharges must be finite and non-negative");
        }
        if discharges.windows(2).any(|w| w[0] >= w[1]) {
            return input("discharges must be strictly increasing");
        }
        for (i, row) in rates.iter_mut().enumerate() {
            for (j, r) in row.iter_mut().enumerate() {
                if i == j {
                    *r = 0.0;
                } else if !r.is_finite() || *r < 0.0 {
                    return input(format!("rate ({i},{j}) = {r} must be finite and >= 0"));
                }
            }
        }
        Ok(Self { discharges, rates })
    }

    /// A chain with a single regime that never switches.
    pub fn single(discharge: f64) -> Result<Self> {
        Self::new(vec![discharge], vec![vec![0.0]])
    }

    pub fn count(&self) -> usize {
        self.discharges.len()
    }

    pub fn discharges(&self) -> &[f64] {
        &self.discharges
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from][to]
    }

    /// Total rate of leaving regime `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.rates[i].iter().sum()
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.count()).map(|i| self.exit_rate(i)).fold(0.0, f64::max)
    }

    /// Positive off-diagonal entries of row `i` as `(j, rate)`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rates[i].iter().copied().enumerate().filter(|&(_, r)| r > 0.0)
    }

    /// Generator matrix: off-diagonal rates, diagonal minus the row sum.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.count();
        DMatrix::from_fn(n, n, |i, j| if i == j { -self.exit_rate(i) } else { self.rates[i][j] })
    }

    /// Regimes that are not mutually reachable with regime 0 in the
    /// positive-rate graph. Empty iff the chain is irreducible.
    pub fn unreachable(&self) -> Vec<usize> {
        let n = self.count();
        let forward = self.reach(0, |i, j| self.rates[i][j] > 0.0);
        let backward = self.reach(0, |i, j| self.rates[j][i] > 0.0);
        (0..n).filter(|&i| !(forward[i] && backward[i])).collect()
    }

    fn reach(&self, start: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
        let n = self.count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && edge(i, j) {
                    *s = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    pub fn check_irreducible(&self) -> Result<()> {
        let bad = self.unreachable();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Structure(format!(
                "chain is reducible; regimes not communicating with regime 0: {bad:?}"
            )))
        }
    }

    pub fn from_json_reader(r: impl Read) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_reader(std::fs::File::open(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Regime index of a discharge for bins `[i·width, (i+1)·width)`, clamped
/// to the top regime.
pub fn bin_discharge(q: f64, width: f64, count: usize) -> Result<usize> {
    if !(q >= 0.0) {
        return input(format!("discharge must be >= 0, got {q}"));
    }
    if !(width > 0.0) || count == 0 {
        return input("bin width must be > 0 and count >= 1");
    }
    let bin = (q / width).floor();
    Ok(if bin >= count as f64 { count - 1 } else { bin as usize })
}

/// Time-stamped discharge record. Times are in days.
#[derive(Debug, Clone, PartialEq)]
pub struct DischargeSeries {
    samples: Vec<(f64, f64)>,
}

impl DischargeSeries {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return input("timestamps must be strictly increasing");
        }
        if samples.iter().any(|&(t, q)| !t.is_finite() || !(q >= 0.0) || !q.is_finite()) {
            return input("timestamps must be finite and discharges finite and >= 0");
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Reads CSV with header `timestamp,discharge_m3s`. Timestamps are either
    /// fractional day numbers or ISO-8601 date-times (converted to days since
    /// the Unix epoch).
    pub fn from_csv_reader(r: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Input(format!("missing column `{name}`")))
        };
        let (ti, qi) = (col("timestamp")?, col("discharge_m3s")?);
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let t = parse_timestamp(&rec[ti])
                .ok_or_else(|| Error::Input(format!("row {}: bad timestamp `{}`", line + 1, &rec[ti])))?;
            let q: f64 = rec[qi]
                .parse()
                .map_err(|_| Error::Input(format!("row {}: bad discharge `{}`", line + 1, &rec[qi])))?;
            samples.push((t, q));
        }
        Self::new(samples)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

fn parse_timestamp(field: &str) -> Option<f64> {
    if !field.contains('-') || field.starts_with('-') {
        return field.parse().ok();
    }
    use chrono::{DateTime, NaiveDate, NaiveDateTime};
    const DAY: f64 = 86_400.0;
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Some(dt.timestamp_millis() as f64 / 1000.0 / DAY);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(field, fmt) {
            return Some(dt.and_utc().timestamp_millis() as f64 / 1000.0 / DAY);
        }
    }
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() as f64 / DAY)
}

/// Result of estimating a chain from a discharge record.
#[derive(Debug, Clone, Serialize)]
pub struct ChainEstimate {
    pub chain: RegimeChain,
    /// Days spent in each regime.
    pub occupancy: Vec<f64>,
    /// Observed transition counts between consecutive samples.
    pub transitions: Vec<Vec<u64>>,
    /// Regimes with zero occupancy time; their outgoing rates are zero.
    pub unvisited: Vec<usize>,
}

/// Empirical rate estimator: transitions i→j divided by the time spent in i.
///
/// Each sample's regime is held until the next sample; a jump across
/// several bins counts as one direct transition.
pub fn estimate_chain(series: &DischargeSeries, width: f64, count: usize) -> Result<ChainEstimate> {
    if series.len() < 2 {
        return input("discharge series needs at least two samples");
    }
    let bins = series
        .samples()
        .iter()
        .map(|&(_, q)| bin_discharge(q, width, count))
        .collect::<Result<Vec<_>>>()?;
    let mut occupancy = vec![0.0; count];
    let mut transitions = vec![vec![0u64; count]; count];
    for (k, w) in series.samples().windows(2).enumerate() {
        occupancy[bins[k]] += w[1].0 - w[0].0;
        if bins[k] != bins[k + 1] {
            transitions[bins[k]][bins[k + 1]] += 1;
        }
    }
    let rates = (0..count)
        .map(|i| {
            (0..count)
                .map(|j| if i == j || occupancy[i] == 0.0 { 0.0 } else { transitions[i][j] as f64 / occupancy[i] })
                .collect()
        })
        .collect();
    let discharges = (0..count).map(|i| (i as f64 + 0.5) * width).collect();
    let unvisited = (0..count).filter(|&i| occupancy[i] == 0.0).collect();
    Ok(ChainEstimate { chain: RegimeChain::new(discharges, rates)?, occupancy, transitions, unvisited })
}

/// Stationary law `p` with `p Q = 0`, `Σ p = 1`.
pub fn stationary_distribution(chain: &RegimeChain) -> Result<Vec<f64>> {
    chain.check_irreducible()?;
    let n = chain.count();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Q^T p = 0 with the last balance equation replaced by normalization.
    let mut a = chain.generator().transpose();
    a.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let p = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Structure("singular balance system".into()))?;
    Ok(p.iter().map(|&x| x.max(0.0)).collect())
}

/// Lumps contiguous groups of regimes into one regime each, weighting by the
/// stationary law: rates `ν_AB = Σ_{i∈A} p_i Σ_{j∈B} ν_ij / Σ_{i∈A} p_i` and the
/// discharge of a group is its stationary mean.
pub fn coarsen(chain: &RegimeChain, groups: &[Range<usize>]) -> Result<RegimeChain> {
    let mut next = 0;
    for g in groups {
        if g.start != next || g.end <= g.start {
            return input("groups must be non-empty, contiguous and ordered");
        }
        next = g.end;
    }
    if next != chain.count() {
        return input("groups must cover every regime");
    }
    let p = stationary_distribution(chain)?;
    let mass: Vec<f64> = groups.iter().map(|g| p[g.clone()].iter().sum()).collect();
    let discharges = groups
        .iter()
        .zip(&mass)
        .map(|(g, m)| g.clone().map(|i| p[i] * chain.discharges[i]).sum::<f64>() / m)
        .collect();
    let rates = groups
        .iter()
        .zip(&mass)
        .map(|(a, m)| {
            groups
                .iter()
                .map(|b| {
                    let flow: f64 = a.clone().map(|i| p[i] * b.clone().map(|j| chain.rates[i][j]).sum::<f64>()).sum();
                    flow / m
                })
                .collect()
        })
        .collect();
    RegimeChain::new(discharges, rates)
}

/// Piecewise-constant regime trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimePath {
    segments: Vec<(f64, usize)>,
    horizon: f64,
}

impl RegimePath {
    pub fn new(segments: Vec<(f64, usize)>, horizon: f64) -> Result<Self> {
        if segments.first().is_none_or(|&(t0, _)| t0 != 0.0) {
            return input("regime path must start at time 0");
        }
        if segments.windows(2).any(|w| !(w[0].0 < w[1].0) || w[0].1 == w[1].1) {
            return input("segment starts must increase and consecutive regimes differ");
        }
        if !(horizon > segments.last().unwrap().0) || !horizon.is_finite() {
            return input("horizon must exceed the last switch time");
        }
        Ok(Self { segments, horizon })
    }

    pub fn segments(&self) -> &[(f64, usize)] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `(start, end, regime)` for every segment.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.segments.iter().enumerate().map(move |(k, &(t, i))| {
            let end = self.segments.get(k + 1).map_or(self.horizon, |s| s.0);
            (t, end, i)
        })
    }

    pub fn regime_at(&self, t: f64) -> usize {
        let k = self.segments.partition_point(|s| s.0 <= t);
        self.segments[k.saturating_sub(1)].1
    }

    /// Fraction of `[0, horizon]` spent in each regime.
    pub fn occupancy_fractions(&self, count: usize) -> Vec<f64> {
        let mut occ = vec![0.0; count];
        for (a, b, i) in self.pieces() {
            occ[i] += b - a;
        }
        occ.iter_mut().for_each(|x| *x /= self.horizon);
        occ
    }
}

/// Samples a regime path with a seeded generator.
pub fn sample_regime_path(chain: &RegimeChain, initial: usize, horizon: f64, seed: u64) -> Result<RegimePath> {
    sample_regime_path_with(chain, initial, horizon, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Exponential holding times with rate `Σ_j ν_ij`, jumps proportional to `ν_ij`.
pub fn sample_regime_path_with<R: Rng + ?Sized>(
    chain: &RegimeChain,
    initial: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<RegimePath> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return input("horizon must be finite and > 0");
    }
    if initial >= chain.count() {
        return input(format!("initial regime {initial} out of range"));
    }
    let mut segments = vec![(0.0, initial)];
    let (mut t, mut i) = (0.0, initial);
    loop {
        let exit = chain.exit_rate(i);
        if exit <= 0.0 {
            break;
        }
        t += Exp::new(exit).unwrap().sample(rng);
        if t >= horizon {
            break;
        }
        let mut u = rng.random::<f64>() * exit;
        let mut next = i;
        for (j, r) in chain.neighbors(i) {
            next = j;
            if u < r {
                break;
            }
            u -= r;
        }
        i = next;
        segments.push((t, i));
    }
    Ok(RegimePath { segments, horizon })
}
