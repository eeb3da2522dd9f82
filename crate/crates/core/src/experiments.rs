//! Averaged subsystem distances and the linear fits built on them.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dense::{density_from_gamma, trace_distance, DenseState, MAX_DENSE_SITES};
use crate::error::{Error, Result};
use crate::gaussian::{bures_distance, CorrelationMatrix};
use crate::ising::{enumerate_spectrum, sort_spectrum, IsingChain, OrderProvenance, SectorFilter, SpectrumTable};

/// Default cap on the subsystem size for dense trace distances.
pub const DEFAULT_DENSE_LIMIT: usize = 12;

/// Consecutive pairs evaluated per parallel task.
const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Metric {
    Trace,
    Bures,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Trace => "trace",
            Metric::Bures => "bures",
        }
    }

    /// Factor applied before fitting: Bures distances are compared as `B/√2`.
    pub fn fit_scale(self) -> f64 {
        match self {
            Metric::Trace => 1.0,
            Metric::Bures => std::f64::consts::FRAC_1_SQRT_2,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(Metric::Trace),
            "bures" => Ok(Metric::Bures),
            other => Err(Error::Invalid(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairAverage {
    pub average: f64,
    pub pairs: usize,
}

impl PairAverage {
    pub(crate) fn from_values(values: &[f64]) -> Self {
        // Sequential sum in pair order keeps results independent of threading.
        let sum: f64 = values.iter().sum();
        Self {
            average: sum / values.len() as f64,
            pairs: values.len(),
        }
    }
}

fn check_dense(ell: usize, dense_limit: usize) -> Result<()> {
    let limit = dense_limit.min(MAX_DENSE_SITES);
    if ell > limit {
        return Err(Error::GuardExceeded {
            what: "subsystem size for dense trace distance",
            value: ell,
            limit,
        });
    }
    Ok(())
}

/// Per-state data a metric needs.
enum Prepared {
    Gaussian(CorrelationMatrix),
    Dense(DenseState),
}

fn prepare(g: CorrelationMatrix, metric: Metric) -> Result<Prepared> {
    Ok(match metric {
        Metric::Bures => Prepared::Gaussian(g),
        Metric::Trace => Prepared::Dense(density_from_gamma(&g)?),
    })
}

fn distance(a: &Prepared, b: &Prepared) -> Result<f64> {
    match (a, b) {
        (Prepared::Gaussian(a), Prepared::Gaussian(b)) => bures_distance(a, b),
        (Prepared::Dense(a), Prepared::Dense(b)) => trace_distance(a, b),
        _ => unreachable!("both states are prepared for the same metric"),
    }
}

/// Distance between the Gaussian states `a` and `b`.
pub fn gaussian_distance(a: &CorrelationMatrix, b: &CorrelationMatrix, metric: Metric, dense_limit: usize) -> Result<f64> {
    if metric == Metric::Trace {
        check_dense(a.modes(), dense_limit)?;
    }
    distance(&prepare(a.clone(), metric)?, &prepare(b.clone(), metric)?)
}

/// Distances between consecutive states `0-1, 1-2, …` where state `i` is
/// produced by `state(i)`. States are built once per chunk of pairs.
pub fn consecutive_values<F>(count: usize, metric: Metric, state: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<CorrelationMatrix> + Sync,
{
    if count < 2 {
        return Err(Error::TooFew { needed: 2, got: count });
    }
    let pairs = count - 1;
    let chunks: Vec<Vec<f64>> = (0..pairs.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(pairs);
            let mut prev = prepare(state(start)?, metric)?;
            let mut out = Vec::with_capacity(end - start);
            for i in start..end {
                let next = prepare(state(i + 1)?, metric)?;
                out.push(distance(&prev, &next)?);
                prev = next;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Distances between consecutive eigenstates of a table, restricted to the
/// first `ell` sites.
pub fn consecutive_distances(
    chain: &IsingChain,
    table: &SpectrumTable,
    ell: usize,
    metric: Metric,
    dense_limit: usize,
) -> Result<Vec<f64>> {
    if metric == Metric::Trace {
        check_dense(ell, dense_limit)?;
    }
    consecutive_values(table.len(), metric, |i| chain.eigenstate_correlation(&table.states[i], ell))
}

/// `(1/(d-1)) Σ_i dist(ρ_{A,i}, ρ_{A,i+1})` over the table order.
pub fn average_consecutive_distance(
    chain: &IsingChain,
    table: &SpectrumTable,
    ell: usize,
    metric: Metric,
    dense_limit: usize,
) -> Result<PairAverage> {
    Ok(PairAverage::from_values(&consecutive_distances(chain, table, ell, metric, dense_limit)?))
}

/// Average over all unordered pairs.
pub fn all_pairs_average(states: &[CorrelationMatrix], metric: Metric, dense_limit: usize) -> Result<PairAverage> {
    if states.len() < 2 {
        return Err(Error::TooFew { needed: 2, got: states.len() });
    }
    if metric == Metric::Trace {
        check_dense(states[0].modes(), dense_limit)?;
    }
    let prepared: Vec<Prepared> = states
        .par_iter()
        .map(|g| prepare(g.clone(), metric))
        .collect::<Result<_>>()?;
    all_pairs_prepared(&prepared)
}

fn all_pairs_prepared(prepared: &[Prepared]) -> Result<PairAverage> {
    let n = prepared.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| distance(&prepared[i], &prepared[j]))
        .collect::<Result<_>>()?;
    Ok(PairAverage::from_values(&values))
}

/// All-pairs average of dense states.
pub fn all_pairs_dense(states: &[DenseState], metric: Metric) -> Result<PairAverage> {
    if states.len() < 2 {
        return Err(Error::TooFew { needed: 2, got: states.len() });
    }
    let n = states.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| match metric {
            Metric::Trace => trace_distance(&states[i], &states[j]),
            Metric::Bures => crate::dense::bures_distance_dense(&states[i], &states[j]),
        })
        .collect::<Result<_>>()?;
    Ok(PairAverage::from_values(&values))
}

/// Order applied to a spectrum before taking consecutive pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ordering {
    /// Hierarchical sort by these charges first, then the remaining ones in
    /// increasing index.
    Charges(Vec<usize>),
    /// Uniform shuffle of the enumeration order.
    Random(u64),
}

impl Ordering {
    pub fn default_for(sites: usize) -> Self {
        Ordering::Charges((0..sites).collect())
    }
}

impl FromStr for Ordering {
    type Err = Error;

    /// `charges:2,0,1` or `random:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("charges:") {
            let keys = rest
                .split(',')
                .map(|k| k.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Invalid(format!("bad charge list {rest:?}: {e}")))?;
            Ok(Ordering::Charges(keys))
        } else if let Some(rest) = s.strip_prefix("random:") {
            let seed = rest
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::Invalid(format!("bad seed {rest:?}: {e}")))?;
            Ok(Ordering::Random(seed))
        } else {
            Err(Error::Invalid(format!("unknown ordering {s:?}")))
        }
    }
}

/// `prefix` followed by the unused indices below `sites` in increasing order.
pub fn complete_keys(prefix: &[usize], sites: usize) -> Result<Vec<usize>> {
    let mut keys = Vec::with_capacity(sites);
    for &k in prefix {
        if k >= sites || keys.contains(&k) {
            return Err(Error::Invalid(format!("charge key {k} is repeated or out of range")));
        }
        keys.push(k);
    }
    keys.extend((0..sites).filter(|k| !prefix.contains(k)));
    Ok(keys)
}

pub fn apply_ordering(table: SpectrumTable, ordering: &Ordering) -> Result<SpectrumTable> {
    match ordering {
        Ordering::Charges(prefix) => {
            let keys = complete_keys(prefix, table.sites)?;
            sort_spectrum(table, &keys)
        }
        Ordering::Random(seed) => {
            let mut table = table;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            table.states.shuffle(&mut rng);
            table.provenance = OrderProvenance::RandomPermutation(*seed);
            Ok(table)
        }
    }
}

/// `⌈0.2 L⌉ ..= ⌊0.4 L⌋`.
pub fn fit_window(sites: usize) -> (usize, usize) {
    (sites.div_ceil(5), 2 * sites / 5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub ell_min: usize,
    pub ell_max: usize,
}

/// Least-squares line through `(ℓ/L, scale · average)` for the rows inside
/// the fit window.
pub fn linear_slope_fit(rows: &[SweepRow], sites: usize) -> Result<LinearFit> {
    let (lo, hi) = fit_window(sites);
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| (lo..=hi).contains(&r.ell))
        .map(|r| (r.ell as f64 / sites as f64, r.average * r.metric.fit_scale()))
        .collect();
    let (slope, intercept) = least_squares(&points)?;
    Ok(LinearFit {
        slope,
        intercept,
        ell_min: lo,
        ell_max: hi,
    })
}

/// Ordinary least squares `y = a x + b`.
pub fn least_squares(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::TooFew { needed: 2, got: points.len() });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("all fit points share one abscissa".into()));
    }
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curve {
    /// `2x` below one half, 1 from one half on.
    Integrable,
    /// 0 at the origin, 1 elsewhere.
    RandomGaussian,
}

pub fn reference_curve(x: f64, curve: Curve) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange { what: "x", value: x });
    }
    Ok(match curve {
        Curve::Integrable => {
            if x < 0.5 {
                2.0 * x
            } else {
                1.0
            }
        }
        Curve::RandomGaussian => {
            if x == 0.0 {
                0.0
            } else {
                1.0
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Model {
    Ising,
    Xxz,
    Random,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Ising => "ising",
            Model::Xxz => "xxz",
            Model::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub ell: usize,
    pub metric: Metric,
    pub average: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub model: Model,
    pub sites: usize,
    /// `h` for Ising, `Δ` for XXZ, unused (0) for the random ensemble.
    pub param: f64,
    pub sector: String,
    pub ordering: String,
    pub seed: Option<u64>,
    pub rows: Vec<SweepRow>,
    pub fit: Option<LinearFit>,
    /// Near-degenerate eigenvalue gaps in the states compared, when known.
    pub degenerate_gaps: Option<usize>,
}

pub const CSV_HEADER: &str = "model,L,param,sector,ordering,metric,ell,x,average,pairs";

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.16e},{},{},{},{},{:.16e},{:.16e},{}\n",
                self.model.name(),
                self.sites,
                self.param,
                self.sector,
                self.ordering,
                r.metric,
                r.ell,
                r.ell as f64 / self.sites as f64,
                r.average,
                r.pairs
            ));
        }
        out
    }

    pub fn fit_now(&mut self) -> Result<()> {
        self.fit = Some(linear_slope_fit(&self.rows, self.sites)?);
        Ok(())
    }
}

fn check_ells(ells: &[usize], sites: usize, metric: Metric, dense_limit: usize) -> Result<()> {
    if ells.is_empty() {
        return Err(Error::Invalid("empty subsystem range".into()));
    }
    if let Some(&bad) = ells.iter().find(|&&l| l == 0 || l > sites) {
        return Err(Error::OutOfRange {
            what: "subsystem size",
            value: bad as f64,
        });
    }
    if metric == Metric::Trace {
        check_dense(ells.iter().copied().max().unwrap_or(0), dense_limit)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct IsingSweep {
    pub chain: IsingChain,
    pub filter: SectorFilter,
    pub ordering: Ordering,
    pub metric: Metric,
    pub ells: Vec<usize>,
    pub fit: bool,
    pub dense_limit: usize,
}

impl IsingSweep {
    pub fn new(chain: IsingChain, metric: Metric, ells: Vec<usize>) -> Self {
        let ordering = Ordering::default_for(chain.sites());
        Self {
            chain,
            filter: SectorFilter::default(),
            ordering,
            metric,
            ells,
            fit: false,
            dense_limit: DEFAULT_DENSE_LIMIT,
        }
    }

    pub fn run(&self) -> Result<SweepResult> {
        let l = self.chain.sites();
        check_ells(&self.ells, l, self.metric, self.dense_limit)?;
        let table = apply_ordering(enumerate_spectrum(&self.chain, self.filter)?, &self.ordering)?;
        let mut rows = Vec::with_capacity(self.ells.len());
        for &ell in &self.ells {
            let avg = average_consecutive_distance(&self.chain, &table, ell, self.metric, self.dense_limit)?;
            rows.push(SweepRow {
                ell,
                metric: self.metric,
                average: avg.average,
                pairs: avg.pairs,
            });
        }
        let seed = match self.ordering {
            Ordering::Random(s) => Some(s),
            Ordering::Charges(_) => None,
        };
        let mut result = SweepResult {
            model: Model::Ising,
            sites: l,
            param: self.chain.field(),
            sector: self.filter.to_string(),
            ordering: table.provenance.to_string(),
            seed,
            rows,
            fit: None,
            degenerate_gaps: None,
        };
        if self.fit {
            result.fit_now()?;
        }
        Ok(result)
    }
}

/// All-pairs averages over a random ensemble for each subsystem size.
pub fn random_sweep(
    spec: &crate::ensemble::RandomEnsembleSpec,
    metric: Metric,
    ells: &[usize],
    fit: bool,
    dense_limit: usize,
) -> Result<SweepResult> {
    check_ells(ells, spec.sites, metric, dense_limit)?;
    let states = spec.states()?;
    let mut rows = Vec::with_capacity(ells.len());
    for &ell in ells {
        let avg = crate::ensemble::random_average(&states, ell, metric, dense_limit)?;
        rows.push(SweepRow {
            ell,
            metric,
            average: avg.average,
            pairs: avg.pairs,
        });
    }
    let mut result = SweepResult {
        model: Model::Random,
        sites: spec.sites,
        param: 0.0,
        sector: format!("count={}", spec.count),
        ordering: "all-pairs".into(),
        seed: Some(spec.seed),
        rows,
        fit: None,
        degenerate_gaps: None,
    };
    if fit {
        result.fit_now()?;
    }
    Ok(result)
}

/// Per-state rows `i,Q{m}…` in table order.
pub fn export_charge_profiles(table: &SpectrumTable, indices: &[usize]) -> Result<String> {
    if let Some(&bad) = indices.iter().find(|&&m| m >= table.sites) {
        return Err(Error::OutOfRange {
            what: "charge index",
            value: bad as f64,
        });
    }
    let mut out = String::from("i");
    for m in indices {
        out.push_str(&format!(",Q{m}"));
    }
    out.push('\n');
    for (i, s) in table.states.iter().enumerate() {
        out.push_str(&i.to_string());
        for &m in indices {
            out.push_str(&format!(",{:.16e}", s.charges[m]));
        }
        out.push('\n');
    }
    Ok(out)
}
