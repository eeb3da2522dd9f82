//! XXZ ring `H = -¼ Σ (σˣσˣ + σʸσʸ + Δ σᶻσᶻ) - (h_z/2) Σ σᶻ`, block
//! diagonalized at fixed momentum `p = 2πK/L` and fixed number of down spins.
//!
//! Configurations are bit strings with site 1 as the most significant bit and
//! a set bit for a down spin, matching [`crate::dense`]. The translation `T`
//! moves the spin on site `j` to site `j + 1`. A momentum state is
//! `|a(K)⟩ = R_a^{-1/2} Σ_{r < R_a} e^{-ipr} Tʳ|a⟩` with `a` the smallest
//! configuration of its orbit and `R_a` the orbit period.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::dense::{bures_distance_dense, reduced_density_pure, trace_distance, DenseState, MAX_DENSE_SITES};
use crate::error::{Error, Result};
use crate::experiments::{Metric, Model, PairAverage, SweepResult, SweepRow};
use crate::gaussian::{CMat, C64};

/// Largest ring whose eigenvectors are rebuilt in the full `2^L` space.
pub const MAX_XXZ_SITES: usize = 20;

/// Adjacent sector eigenvalues closer than this are reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-10;

fn site_bit(site: usize, sites: usize) -> u64 {
    1 << (sites - 1 - site)
}

/// `T` applied to a configuration.
pub fn translate(config: u64, sites: usize) -> u64 {
    let mask = (1u64 << sites) - 1;
    ((config >> 1) | ((config & 1) << (sites - 1))) & mask
}

/// Orbit data of `config`: the representative, the period, and the number of
/// translations taking `config` to the representative.
pub fn orbit(config: u64, sites: usize) -> (u64, usize, usize) {
    let mut rep = config;
    let mut shift = 0;
    let mut t = config;
    for r in 1..=sites {
        t = translate(t, sites);
        if t == config {
            return (rep, r, shift);
        }
        if t < rep {
            rep = t;
            shift = r;
        }
    }
    unreachable!("Tᴸ is the identity")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Representative {
    pub config: u64,
    pub period: usize,
}

/// Orbit representatives compatible with momentum `K` at fixed `n_down`.
#[derive(Clone, Debug, Serialize)]
pub struct XxzSector {
    sites: usize,
    momentum: usize,
    n_down: usize,
    basis: Vec<Representative>,
}

impl XxzSector {
    pub fn new(sites: usize, momentum: usize, n_down: usize) -> Result<Self> {
        check_sites(sites)?;
        if momentum >= sites {
            return Err(Error::OutOfRange {
                what: "momentum index",
                value: momentum as f64,
            });
        }
        if n_down > sites {
            return Err(Error::OutOfRange {
                what: "down spins",
                value: n_down as f64,
            });
        }
        let basis = (0u64..1 << sites)
            .filter(|c| c.count_ones() as usize == n_down)
            .filter_map(|c| {
                let (rep, period, _) = orbit(c, sites);
                (rep == c && (momentum * period) % sites == 0).then_some(Representative { config: c, period })
            })
            .collect();
        Ok(Self {
            sites,
            momentum,
            n_down,
            basis,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn momentum(&self) -> usize {
        self.momentum
    }

    pub fn n_down(&self) -> usize {
        self.n_down
    }

    pub fn basis(&self) -> &[Representative] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `p = 2πK/L`.
    pub fn phase_momentum(&self) -> f64 {
        2.0 * PI * self.momentum as f64 / self.sites as f64
    }

    /// `m = L/2 - n_down`.
    pub fn magnetization(&self) -> f64 {
        self.sites as f64 / 2.0 - self.n_down as f64
    }

    /// Short descriptor used in result files.
    pub fn label(&self) -> String {
        format!("K={};n_down={}", self.momentum, self.n_down)
    }
}

fn check_sites(sites: usize) -> Result<()> {
    if sites < 2 {
        return Err(Error::OutOfRange {
            what: "sites",
            value: sites as f64,
        });
    }
    if sites > MAX_XXZ_SITES {
        return Err(Error::GuardExceeded {
            what: "XXZ sites",
            value: sites,
            limit: MAX_XXZ_SITES,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct XxzChain {
    sites: usize,
    delta: f64,
    field: f64,
}

impl XxzChain {
    pub fn new(sites: usize, delta: f64) -> Result<Self> {
        check_sites(sites)?;
        if !delta.is_finite() {
            return Err(Error::OutOfRange { what: "Δ", value: delta });
        }
        Ok(Self {
            sites,
            delta,
            field: 0.0,
        })
    }

    /// Sets `h_z`. It only shifts each sector by `-h_z m`.
    pub fn with_field(mut self, field: f64) -> Self {
        self.field = field;
        self
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn field(&self) -> f64 {
        self.field
    }

    fn spin(config: u64, site: usize, sites: usize) -> f64 {
        if config & site_bit(site, sites) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `⟨c|H|c⟩`.
    pub fn diagonal(&self, config: u64) -> f64 {
        let l = self.sites;
        let mut e = 0.0;
        for j in 0..l {
            let s = Self::spin(config, j, l);
            e -= 0.25 * self.delta * s * Self::spin(config, (j + 1) % l, l);
            e -= 0.5 * self.field * s;
        }
        e
    }

    /// Configurations reached by one spin exchange, each with amplitude `-½`.
    /// On two sites both bonds produce the same configuration.
    pub fn exchanges(&self, config: u64) -> impl Iterator<Item = u64> + '_ {
        let l = self.sites;
        (0..l).filter_map(move |j| {
            let pair = site_bit(j, l) | site_bit((j + 1) % l, l);
            let bits = config & pair;
            (bits != 0 && bits != pair).then_some(config ^ pair)
        })
    }

    fn check_sector(&self, sector: &XxzSector) -> Result<()> {
        if sector.sites != self.sites {
            return Err(Error::DimensionMismatch {
                left: sector.sites,
                right: self.sites,
            });
        }
        Ok(())
    }

    /// Hermitian block of `H` in the momentum basis of `sector`.
    pub fn block_hamiltonian(&self, sector: &XxzSector) -> Result<CMat> {
        self.check_sector(sector)?;
        let l = self.sites;
        let p = sector.phase_momentum();
        let index: HashMap<u64, usize> = sector.basis.iter().enumerate().map(|(i, r)| (r.config, i)).collect();
        let n = sector.dim();
        let mut h = CMat::zeros(n, n);
        for (a, rep) in sector.basis.iter().enumerate() {
            h[(a, a)] += C64::new(self.diagonal(rep.config), 0.0);
            for flipped in self.exchanges(rep.config) {
                let (target, period, shift) = orbit(flipped, l);
                // Orbits incompatible with K have no momentum state.
                let Some(&b) = index.get(&target) else { continue };
                let scale = -0.5 * (rep.period as f64 / period as f64).sqrt();
                h[(b, a)] += C64::from_polar(scale, -p * shift as f64);
            }
        }
        let defect = (&h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > 1e-12 {
            return Err(Error::NotHermitian(defect));
        }
        Ok(h)
    }

    /// Eigenpairs of one sector, energies ascending.
    pub fn diagonalize(&self, sector: &XxzSector) -> Result<SectorEigensystem> {
        if sector.dim() == 0 {
            return Err(Error::TooFew { needed: 1, got: 0 });
        }
        let eig = SymmetricEigen::new(self.block_hamiltonian(sector)?);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = CMat::zeros(sector.dim(), sector.dim());
        for (col, &i) in order.iter().enumerate() {
            let v = fix_phase(eig.eigenvectors.column(i).into_owned());
            vectors.set_column(col, &v);
        }
        Ok(SectorEigensystem {
            sector: sector.clone(),
            delta: self.delta,
            energies,
            vectors,
        })
    }
}

/// Rotates `v` so that its largest amplitude is real and positive. Among
/// amplitudes equal in magnitude up to `1e-9`, the first one is used.
fn fix_phase(mut v: DVector<C64>) -> DVector<C64> {
    let largest = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(pivot) = v.iter().find(|z| z.norm() >= largest - 1e-9) {
        let phase = pivot.conj() / pivot.norm();
        v *= phase;
    }
    v
}

#[derive(Clone, Debug)]
pub struct SectorEigensystem {
    sector: XxzSector,
    delta: f64,
    energies: Vec<f64>,
    vectors: CMat,
}

impl SectorEigensystem {
    pub fn sector(&self) -> &XxzSector {
        &self.sector
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Column `i` holds the momentum-basis amplitudes of eigenstate `i`.
    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Number of adjacent eigenvalue gaps below [`DEGENERACY_GAP`].
    pub fn degenerate_gaps(&self) -> usize {
        self.energies.windows(2).filter(|w| w[1] - w[0] < DEGENERACY_GAP).count()
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.len() {
            return Err(Error::OutOfRange {
                what: "state index",
                value: index as f64,
            });
        }
        Ok(())
    }

    /// Eigenstate `index` in the `2^L` configuration basis.
    pub fn full_vector(&self, index: usize) -> Result<DVector<C64>> {
        self.check_index(index)?;
        let l = self.sector.sites;
        let p = self.sector.phase_momentum();
        let mut psi = DVector::zeros(1 << l);
        for (a, rep) in self.sector.basis.iter().enumerate() {
            let amp = self.vectors[(a, index)] / (rep.period as f64).sqrt();
            let mut c = rep.config;
            for r in 0..rep.period {
                psi[c as usize] += amp * C64::from_polar(1.0, -p * r as f64);
                c = translate(c, l);
            }
        }
        Ok(psi)
    }

    /// Reduced state of the first `ell` sites of eigenstate `index`.
    pub fn eigen_rdm(&self, index: usize, ell: usize) -> Result<DenseState> {
        reduced_density_pure(&self.full_vector(index)?, ell)
    }

    /// Average distance between the `ell`-site reduced states of every pair
    /// of eigenstates in the sector.
    ///
    /// When `ell > L - ell + 1` both reduced states of a pair live in a
    /// subspace of dimension at most `2^{L-ell+1}`, and the pair is compared
    /// there; distances are unchanged by this isometry.
    pub fn pairwise_average(&self, ell: usize, metric: Metric, dense_limit: usize) -> Result<PairAverage> {
        let l = self.sector.sites;
        if self.len() < 2 {
            return Err(Error::TooFew {
                needed: 2,
                got: self.len(),
            });
        }
        if ell == 0 || ell > l {
            return Err(Error::OutOfRange {
                what: "subsystem size",
                value: ell as f64,
            });
        }
        let compress = l - ell + 1 < ell;
        check_effective(l, ell, dense_limit)?;
        let outer = 1usize << ell;
        let inner = 1usize << (l - ell);
        let factors: Vec<CMat> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let psi = self.full_vector(i)?;
                Ok(CMat::from_fn(outer, inner, |a, b| psi[a * inner + b]))
            })
            .collect::<Result<_>>()?;
        let n = self.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let values: Vec<f64> = if compress {
            pairs
                .par_iter()
                .map(|&(i, j)| {
                    let (a, b) = compressed_pair(&factors[i], &factors[j])?;
                    dense_distance(&DenseState::from_factor(&a)?, &DenseState::from_factor(&b)?, metric)
                })
                .collect::<Result<_>>()?
        } else {
            let states: Vec<DenseState> = factors.par_iter().map(DenseState::from_factor).collect::<Result<_>>()?;
            pairs
                .par_iter()
                .map(|&(i, j)| dense_distance(&states[i], &states[j], metric))
                .collect::<Result<_>>()?
        };
        Ok(PairAverage::from_values(&values))
    }

    /// Sector export rows `L,K,n_down,delta,index,energy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("L,K,n_down,delta,index,energy\n");
        for (i, e) in self.energies.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{:.16e},{},{:.16e}\n",
                self.sector.sites, self.sector.momentum, self.sector.n_down, self.delta, i, e
            ));
        }
        out
    }
}

/// Size of the dense matrices compared for an `ell`-site subsystem.
fn check_effective(sites: usize, ell: usize, dense_limit: usize) -> Result<()> {
    let effective = ell.min(sites - ell + 1);
    let limit = dense_limit.min(MAX_DENSE_SITES);
    if effective > limit {
        return Err(Error::GuardExceeded {
            what: "dense subsystem size",
            value: effective,
            limit,
        });
    }
    Ok(())
}

fn dense_distance(a: &DenseState, b: &DenseState, metric: Metric) -> Result<f64> {
    match metric {
        Metric::Trace => trace_distance(a, b),
        Metric::Bures => bures_distance_dense(a, b),
    }
}

/// Factors of both reduced states in an orthonormal basis of the span of
/// their columns.
fn compressed_pair(ma: &CMat, mb: &CMat) -> Result<(CMat, CMat)> {
    let mut joined = CMat::zeros(ma.nrows(), ma.ncols() + mb.ncols());
    joined.columns_mut(0, ma.ncols()).copy_from(ma);
    joined.columns_mut(ma.ncols(), mb.ncols()).copy_from(mb);
    let q = joined.qr().q();
    let qa = q.adjoint();
    Ok((&qa * ma, &qa * mb))
}
#[derive(Clone, Debug)]
pub struct XxzSweep {
    pub chain: XxzChain,
    pub momentum: usize,
    pub n_down: usize,
    pub metric: Metric,
    pub ells: Vec<usize>,
    pub fit: bool,
    pub dense_limit: usize,
}

impl XxzSweep {
    /// Sector `K = 1`, `n_down = 2`.
    pub fn new(chain: XxzChain, metric: Metric, ells: Vec<usize>) -> Self {
        Self {
            chain,
            momentum: 1,
            n_down: 2,
            metric,
            ells,
            fit: false,
            dense_limit: crate::experiments::DEFAULT_DENSE_LIMIT,
        }
    }

    pub fn run(&self) -> Result<SweepResult> {
        let l = self.chain.sites();
        if self.ells.is_empty() {
            return Err(Error::Invalid("empty subsystem range".into()));
        }
        for &ell in &self.ells {
            if ell == 0 || ell > l {
                return Err(Error::OutOfRange {
                    what: "subsystem size",
                    value: ell as f64,
                });
            }
            check_effective(l, ell, self.dense_limit)?;
        }
        let sector = XxzSector::new(l, self.momentum, self.n_down)?;
        let system = self.chain.diagonalize(&sector)?;
        let gaps = system.degenerate_gaps();
        if gaps > 0 {
            log::info!("{} near-degenerate gaps in sector {}", gaps, sector.label());
        }
        let mut rows = Vec::with_capacity(self.ells.len());
        for &ell in &self.ells {
            let avg = system.pairwise_average(ell, self.metric, self.dense_limit)?;
            rows.push(SweepRow {
                ell,
                metric: self.metric,
                average: avg.average,
                pairs: avg.pairs,
            });
        }
        let mut result = SweepResult {
            model: Model::Xxz,
            sites: l,
            param: self.chain.delta(),
            sector: sector.label(),
            ordering: "all-pairs".into(),
            seed: None,
            rows,
            fit: None,
            degenerate_gaps: Some(gaps),
        };
        if self.fit {
            result.fit_now()?;
        }
        Ok(result)
    }
}

/// Full-space matrices for cross-checks.
pub mod oracle {
    use super::*;
    use crate::gaussian::Mat;

    pub const MAX_ORACLE_SITES: usize = 12;

    /// `H` in the `2^L` configuration basis.
    pub fn hamiltonian(chain: &XxzChain) -> Result<Mat> {
        let l = chain.sites();
        if l > MAX_ORACLE_SITES {
            return Err(Error::GuardExceeded {
                what: "oracle sites",
                value: l,
                limit: MAX_ORACLE_SITES,
            });
        }
        let dim = 1usize << l;
        let mut h = Mat::zeros(dim, dim);
        for c in 0..dim as u64 {
            h[(c as usize, c as usize)] += chain.diagonal(c);
            for f in chain.exchanges(c) {
                h[(f as usize, c as usize)] -= 0.5;
            }
        }
        Ok(h)
    }

    /// `T|ψ⟩`.
    pub fn translate_vector(psi: &DVector<C64>, sites: usize) -> DVector<C64> {
        let mut out = DVector::zeros(psi.len());
        for (c, &amp) in psi.iter().enumerate() {
            out[translate(c as u64, sites) as usize] = amp;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translation_cycles() {
        assert_eq!(translate(0b100, 3), 0b010);
        assert_eq!(translate(0b001, 3), 0b100);
        assert_eq!(orbit(0b0101, 4), (0b0101, 2, 0));
        assert_eq!(orbit(0b1000, 4), (0b0001, 4, 3));
    }

    #[test]
    fn fully_polarized_sector() {
        let dims: Vec<usize> = (0..4).map(|k| XxzSector::new(4, k, 0).unwrap().dim()).collect();
        assert_eq!(dims, vec![1, 0, 0, 0]);
    }

    #[test]
    fn dims_count_configurations() {
        let total: usize = (0..4).map(|k| XxzSector::new(4, k, 2).unwrap().dim()).sum();
        assert_eq!(total, 6);
    }

    #[test]
    fn two_sites() {
        for delta in [0.0, 1.0, 2f64.sqrt()] {
            let chain = XxzChain::new(2, delta).unwrap();
            for (k, expected) in [(0, delta / 2.0 - 1.0), (1, delta / 2.0 + 1.0)] {
                let sector = XxzSector::new(2, k, 1).unwrap();
                let e = chain.diagonalize(&sector).unwrap().energies()[0];
                assert!((e - expected).abs() < 1e-14, "K = {k}: {e}");
            }
        }
    }

    #[test]
    fn phase_is_fixed() {
        let v = DVector::from_vec(vec![C64::new(0.0, 0.6), C64::new(0.0, -0.8)]);
        let w = fix_phase(v);
        assert!((w[1] - C64::new(0.8, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn guards() {
        assert!(XxzSector::new(1, 0, 0).is_err());
        assert!(XxzSector::new(4, 4, 0).is_err());
        assert!(XxzSector::new(4, 0, 5).is_err());
        assert!(XxzSector::new(MAX_XXZ_SITES + 1, 0, 0).unwrap_err().is_guard());
        let chain = XxzChain::new(4, 1.0).unwrap();
        let system = chain.diagonalize(&XxzSector::new(4, 0, 0).unwrap()).unwrap();
        assert!(system.pairwise_average(2, Metric::Trace, 12).is_err());
    }
}
