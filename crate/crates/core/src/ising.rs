//! Transverse-field Ising chain `H = -½ Σ_j (σˣ_j σˣ_{j+1} + h σᶻ_j)` with
//! periodic boundaries, solved as free fermions.
//!
//! Physical states are the even-occupation states of the Neveu-Schwarz sector
//! (half-integer momenta, parity +1) and the odd-occupation states of the
//! Ramond sector (integer momenta, parity -1). The Ramond `k = 0` mode carries
//! the signed energy `h - 1`; with that choice the parity rule above holds for
//! every `h`, including across the critical point.

use std::f64::consts::PI;
use std::fmt;

use log::debug;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{CorrelationMatrix, Mat};

/// Largest chain for which the whole `2^L` spectrum is enumerated.
pub const MAX_FULL_SITES: usize = 16;
/// Largest chain for a sector-filtered enumeration.
pub const MAX_FILTERED_SITES: usize = 22;
/// Occupations are stored as a `u64` bitmask.
pub const MAX_SITES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Sector {
    NeveuSchwarz,
    Ramond,
}

impl Sector {
    pub fn parity(self) -> i8 {
        match self {
            Sector::NeveuSchwarz => 1,
            Sector::Ramond => -1,
        }
    }

    pub fn from_parity(p: i8) -> Self {
        if p >= 0 {
            Sector::NeveuSchwarz
        } else {
            Sector::Ramond
        }
    }

    /// Twice the momentum label of mode `j`: `2j + 1` in NS, `2j` in R.
    pub fn doubled_momentum(self, j: usize) -> usize {
        match self {
            Sector::NeveuSchwarz => 2 * j + 1,
            Sector::Ramond => 2 * j,
        }
    }

    /// Mode index of `-k`.
    pub fn partner(self, sites: usize, j: usize) -> usize {
        match self {
            Sector::NeveuSchwarz => sites - 1 - j,
            Sector::Ramond => (sites - j) % sites,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Sector::NeveuSchwarz => "NS",
            Sector::Ramond => "R",
        }
    }
}

/// Momentum arguments of the conserved charges.
///
/// `FullMomentum` uses `cos(2πnk/L)` and `sin(2π(n+1)k/L)`, which gives charges
/// supported on `n + 2` neighbouring sites. `HalfMomentum` uses `cos(πnk/L)`
/// and `sin(π(n+1)k/L)`; those still commute with `H` but are not local.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub enum ChargeConvention {
    #[default]
    FullMomentum,
    HalfMomentum,
}

/// `ε_k = √(h² - 2h cos(2πk/L) + 1)`.
pub fn dispersion(field: f64, sites: usize, k: f64) -> f64 {
    let c = (2.0 * PI * k / sites as f64).cos();
    (field * field - 2.0 * field * c + 1.0).max(0.0).sqrt()
}

#[derive(Clone, Debug)]
pub struct IsingChain {
    sites: usize,
    field: f64,
    convention: ChargeConvention,
}

impl IsingChain {
    pub fn new(sites: usize, field: f64) -> Result<Self> {
        if !(2..=MAX_SITES).contains(&sites) {
            return Err(Error::OutOfRange {
                what: "sites",
                value: sites as f64,
            });
        }
        if !field.is_finite() || field < 0.0 {
            return Err(Error::OutOfRange {
                what: "field",
                value: field,
            });
        }
        Ok(Self {
            sites,
            field,
            convention: ChargeConvention::default(),
        })
    }

    pub fn with_convention(mut self, convention: ChargeConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn field(&self) -> f64 {
        self.field
    }

    pub fn convention(&self) -> ChargeConvention {
        self.convention
    }

    /// Momentum `k` of mode `j` in the given sector.
    pub fn momentum(&self, sector: Sector, j: usize) -> f64 {
        sector.doubled_momentum(j) as f64 / 2.0
    }

    /// Mode energy, signed `h - 1` for the Ramond zero mode.
    pub fn mode_energy(&self, sector: Sector, j: usize) -> f64 {
        if sector == Sector::Ramond && j == 0 {
            self.field - 1.0
        } else {
            dispersion(self.field, self.sites, self.momentum(sector, j))
        }
    }

    /// True at `h = 1`, where the Ramond zero mode costs no energy.
    pub fn has_zero_mode(&self) -> bool {
        (self.field - 1.0).abs() < 1e-12
    }

    /// `coeffs[m][j]`, so that `Q_m = Σ_j coeffs[m][j] (n_j - ½)`.
    pub fn charge_coefficients(&self, sector: Sector) -> Vec<Vec<f64>> {
        let l = self.sites as f64;
        let scale = match self.convention {
            ChargeConvention::FullMomentum => 2.0 * PI / l,
            ChargeConvention::HalfMomentum => PI / l,
        };
        (0..self.sites)
            .map(|m| {
                (0..self.sites)
                    .map(|j| {
                        let k = self.momentum(sector, j);
                        if m % 2 == 0 {
                            let n = (m / 2) as f64;
                            (scale * n * k).cos() * self.mode_energy(sector, j)
                        } else {
                            let n = ((m - 1) / 2) as f64;
                            (scale * (n + 1.0) * k).sin()
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Label of the eigenstate with the given occupied modes. Fails for
    /// unphysical occupations (odd in NS, even in R).
    pub fn label(&self, sector: Sector, occupied: u64) -> Result<EigenstateLabel> {
        let count = occupied.count_ones() as usize;
        let physical = match sector {
            Sector::NeveuSchwarz => count % 2 == 0,
            Sector::Ramond => count % 2 == 1,
        };
        if !physical || (self.sites < 64 && occupied >> self.sites != 0) {
            return Err(Error::Invalid(format!(
                "occupation {occupied:#b} is not a physical {} state",
                sector.short_name()
            )));
        }
        let coeffs = self.charge_coefficients(sector);
        Ok(self.label_with(sector, occupied, &coeffs))
    }

    fn label_with(&self, sector: Sector, occupied: u64, coeffs: &[Vec<f64>]) -> EigenstateLabel {
        let charges: Vec<f64> = coeffs
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, c)| if occupied >> j & 1 == 1 { 0.5 * c } else { -0.5 * c })
                    .sum()
            })
            .collect();
        let doubled: usize = (0..self.sites)
            .filter(|j| occupied >> j & 1 == 1)
            .map(|j| sector.doubled_momentum(j))
            .sum();
        EigenstateLabel {
            sector,
            occupied,
            energy: charges[0],
            parity: sector.parity(),
            momentum: (doubled / 2) % self.sites,
            charges,
        }
    }

    /// Majorana correlation matrix of the first `ell` sites in an eigenstate.
    ///
    /// Majorana `2i` and `2i + 1` are `σˣ` and `σʸ` type on site `i`. Entries
    /// depend only on `r = j - i`:
    /// `m_aa(r) = m_bb(r) = (1/L) Σ_k sin(pr) (n_k - n_{-k})`,
    /// `m_ab(r) = (1/L) Σ_k (cos(p(r+1)) - h cos(pr))/ε_k (n_k + n_{-k} - 1)`,
    /// `m_ba(r) = (1/L) Σ_k (h cos(pr) - cos(p(r-1)))/ε_k (n_k + n_{-k} - 1)`,
    /// with `p = 2πk/L`. For the Ramond zero mode `(1 - h)/ε_0 = -1` exactly.
    pub fn eigenstate_correlation(&self, state: &EigenstateLabel, ell: usize) -> Result<CorrelationMatrix> {
        if ell == 0 || ell > self.sites {
            return Err(Error::OutOfRange {
                what: "subsystem size",
                value: ell as f64,
            });
        }
        if state.sector == Sector::Ramond && self.has_zero_mode() {
            debug!("Ramond zero mode at h = 1 resolved with the k -> 0+ Bogoliubov angle");
        }
        let l = self.sites;
        let h = self.field;
        let sector = state.sector;
        let occ = |j: usize| (state.occupied >> j & 1) as f64;
        let span = ell as isize - 1;
        let offsets = (2 * span + 1) as usize;
        let mut aa = vec![0.0; offsets];
        let mut ab = vec![0.0; offsets];
        let mut ba = vec![0.0; offsets];
        for j in 0..l {
            let partner = sector.partner(l, j);
            let p = 2.0 * PI * self.momentum(sector, j) / l as f64;
            let diff = occ(j) - occ(partner);
            let sum = occ(j) + occ(partner) - 1.0;
            let zero_mode = sector == Sector::Ramond && j == 0;
            let eps = self.mode_energy(sector, j);
            for (slot, r) in (-span..=span).enumerate() {
                let r = r as f64;
                aa[slot] += (p * r).sin() * diff;
                if zero_mode {
                    ab[slot] -= sum;
                    ba[slot] += sum;
                } else {
                    ab[slot] += ((p * (r + 1.0)).cos() - h * (p * r).cos()) / eps * sum;
                    ba[slot] += (h * (p * r).cos() - (p * (r - 1.0)).cos()) / eps * sum;
                }
            }
        }
        let norm = 1.0 / l as f64;
        let mut m = Mat::zeros(2 * ell, 2 * ell);
        for i in 0..ell {
            for k in 0..ell {
                let slot = (k as isize - i as isize + span) as usize;
                m[(2 * i, 2 * k)] = aa[slot] * norm;
                m[(2 * i + 1, 2 * k + 1)] = aa[slot] * norm;
                m[(2 * i, 2 * k + 1)] = ab[slot] * norm;
                m[(2 * i + 1, 2 * k)] = ba[slot] * norm;
            }
        }
        CorrelationMatrix::from_computed(m)
    }
}

/// Quantum numbers of one eigenstate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenstateLabel {
    pub sector: Sector,
    /// Bit `j` set when sector mode `j` (momentum `k = j` or `j + ½`) is occupied.
    pub occupied: u64,
    pub energy: f64,
    pub parity: i8,
    pub momentum: usize,
    /// `Q_0 … Q_{L-1}`, with `Q_0` the energy.
    pub charges: Vec<f64>,
}

impl EigenstateLabel {
    pub fn excitations(&self) -> u32 {
        self.occupied.count_ones()
    }

    pub fn occupied_modes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(move |j| self.occupied >> j & 1 == 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub struct SectorFilter {
    pub parity: Option<i8>,
    pub momentum: Option<usize>,
}

impl SectorFilter {
    pub fn accepts(&self, state: &EigenstateLabel) -> bool {
        self.parity.is_none_or(|p| p == state.parity) && self.momentum.is_none_or(|k| k == state.momentum)
    }
}

impl fmt::Display for SectorFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.parity, self.momentum) {
            (None, None) => write!(f, "full"),
            (Some(p), None) => write!(f, "P={p}"),
            (None, Some(k)) => write!(f, "K={k}"),
            (Some(p), Some(k)) => write!(f, "P={p};K={k}"),
        }
    }
}

/// How the states of a table were ordered.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum OrderProvenance {
    Enumeration,
    Charges(Vec<usize>),
    RandomPermutation(u64),
}

impl fmt::Display for OrderProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderProvenance::Enumeration => write!(f, "enumeration"),
            OrderProvenance::Charges(keys) => {
                let keys: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
                write!(f, "charges:{}", keys.join(";"))
            }
            OrderProvenance::RandomPermutation(seed) => write!(f, "random:{seed}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectrumTable {
    pub sites: usize,
    pub field: f64,
    pub states: Vec<EigenstateLabel>,
    pub provenance: OrderProvenance,
    pub filter: SectorFilter,
}

impl SpectrumTable {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Rows `index,sector,occupied,E,P,K,Q0..Q{charges-1}`.
    pub fn to_csv(&self, charges: usize) -> String {
        let charges = charges.min(self.sites);
        let mut out = String::from("index,sector,occupied,E,P,K");
        for m in 0..charges {
            out.push_str(&format!(",Q{m}"));
        }
        out.push('\n');
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{:#x},{:.16e},{},{}",
                s.sector.short_name(),
                s.occupied,
                s.energy,
                s.parity,
                s.momentum
            ));
            for q in &s.charges[..charges] {
                out.push_str(&format!(",{q:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// All physical eigenstates passing `filter`, in enumeration order (NS then R,
/// increasing occupation bitmask).
pub fn enumerate_spectrum(chain: &IsingChain, filter: SectorFilter) -> Result<SpectrumTable> {
    let l = chain.sites();
    let limit = if filter == SectorFilter::default() {
        MAX_FULL_SITES
    } else {
        MAX_FILTERED_SITES
    };
    if l > limit {
        return Err(Error::GuardExceeded {
            what: "sites for spectrum enumeration",
            value: l,
            limit,
        });
    }
    let mut states = Vec::new();
    for sector in [Sector::NeveuSchwarz, Sector::Ramond] {
        if filter.parity.is_some_and(|p| p != sector.parity()) {
            continue;
        }
        let coeffs = chain.charge_coefficients(sector);
        let want_odd = sector == Sector::Ramond;
        for occupied in 0..(1u64 << l) {
            if (occupied.count_ones() % 2 == 1) != want_odd {
                continue;
            }
            if let Some(k) = filter.momentum {
                let doubled: usize = (0..l)
                    .filter(|j| occupied >> j & 1 == 1)
                    .map(|j| sector.doubled_momentum(j))
                    .sum();
                if (doubled / 2) % l != k {
                    continue;
                }
            }
            states.push(chain.label_with(sector, occupied, &coeffs));
        }
    }
    Ok(SpectrumTable {
        sites: l,
        field: chain.field(),
        states,
        provenance: OrderProvenance::Enumeration,
        filter,
    })
}

/// Two charge values are tied when they differ by at most this.
pub fn tie_tolerance(sites: usize) -> f64 {
    1e-9 * (sites as f64).max(1.0)
}

/// Hierarchical sort: by `keys[0]`, then within each tie cluster by `keys[1]`,
/// and so on. Ties are clusters of values whose neighbours differ by at most
/// [`tie_tolerance`]. Remaining ties keep their previous relative order.
pub fn sort_spectrum(mut table: SpectrumTable, keys: &[usize]) -> Result<SpectrumTable> {
    if let Some(&bad) = keys.iter().find(|&&k| k >= table.sites) {
        return Err(Error::OutOfRange {
            what: "charge index",
            value: bad as f64,
        });
    }
    let tol = tie_tolerance(table.sites);
    sort_level(&mut table.states, keys, tol);
    table.provenance = OrderProvenance::Charges(keys.to_vec());
    Ok(table)
}

fn sort_level(states: &mut [EigenstateLabel], keys: &[usize], tol: f64) {
    let Some((&key, rest)) = keys.split_first() else {
        return;
    };
    if states.len() < 2 {
        return;
    }
    states.sort_by(|a, b| a.charges[key].total_cmp(&b.charges[key]));
    let mut start = 0;
    for i in 1..=states.len() {
        if i == states.len() || states[i].charges[key] - states[i - 1].charges[key] > tol {
            sort_level(&mut states[start..i], rest, tol);
            start = i;
        }
    }
}

/// Number of adjacent pairs whose charges `Q_0 … Q_m` all agree within the tie
/// tolerance.
pub fn degenerate_pairs(table: &SpectrumTable, m: usize) -> Result<usize> {
    if m >= table.sites {
        return Err(Error::OutOfRange {
            what: "sorting level",
            value: m as f64,
        });
    }
    let tol = tie_tolerance(table.sites);
    Ok(table
        .states
        .windows(2)
        .filter(|w| (0..=m).all(|q| (w[0].charges[q] - w[1].charges[q]).abs() <= tol))
        .count())
}

/// Degenerate adjacent pairs over `|states| - 1`.
pub fn degeneracy_ratio(table: &SpectrumTable, m: usize) -> Result<f64> {
    if table.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: table.len(),
        });
    }
    Ok(degenerate_pairs(table, m)? as f64 / (table.len() - 1) as f64)
}

/// `(1/(d-1)) Σ_i |N_i - N_{i+1}|` with `N_i` the number of excited modes.
pub fn mode_number_difference(table: &SpectrumTable) -> Result<f64> {
    if table.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: table.len(),
        });
    }
    let total: u64 = table
        .states
        .windows(2)
        .map(|w| (w[0].excitations() as i64 - w[1].excitations() as i64).unsigned_abs())
        .sum();
    Ok(total as f64 / (table.len() - 1) as f64)
}

/// Exact diagonalization in the full `2^L` space, used to check the
/// free-fermion solution.
pub mod oracle {
    use nalgebra::{DVector, SymmetricEigen};

    use super::{IsingChain, Sector, SpectrumTable};
    use crate::dense::majorana_operators;
    use crate::error::{Error, Result};
    use crate::gaussian::{CMat, Mat, C64};

    /// Largest chain the oracle will build.
    pub const MAX_ORACLE_SITES: usize = 10;

    fn check(chain: &IsingChain) -> Result<usize> {
        let l = chain.sites();
        if l > MAX_ORACLE_SITES {
            return Err(Error::GuardExceeded {
                what: "sites for dense Ising oracle",
                value: l,
                limit: MAX_ORACLE_SITES,
            });
        }
        Ok(l)
    }

    fn bit(l: usize, site: usize) -> usize {
        1 << (l - 1 - site)
    }

    /// `H = -½ Σ_j (σˣ_j σˣ_{j+1} + h σᶻ_j)` as a real matrix.
    pub fn hamiltonian(chain: &IsingChain) -> Result<Mat> {
        let l = check(chain)?;
        let dim = 1usize << l;
        let mut h = Mat::zeros(dim, dim);
        for b in 0..dim {
            for j in 0..l {
                let z = if b & bit(l, j) == 0 { 1.0 } else { -1.0 };
                h[(b, b)] -= 0.5 * chain.field() * z;
                let flipped = b ^ bit(l, j) ^ bit(l, (j + 1) % l);
                h[(flipped, b)] -= 0.5;
            }
        }
        Ok(h)
    }

    /// Diagonal of the spin-flip parity `Π_j σᶻ_j`.
    pub fn parity_diagonal(sites: usize) -> Vec<f64> {
        (0..1usize << sites)
            .map(|b| if b.count_ones() % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }

    /// Bogoliubov annihilator `f_k = (α_k + w_k β_k)/2` with
    /// `α_k = L^{-1/2} Σ_j e^{-ipj} d_{2j-1}`, `β_k` likewise from `d_{2j}`, and
    /// `w_k = i(h - e^{-ip})/ε_k` (`w = i` for the Ramond zero mode).
    pub fn bogoliubov_mode(chain: &IsingChain, sector: Sector, j: usize) -> Result<CMat> {
        let l = check(chain)?;
        let set = majorana_operators(l)?;
        let dim = set.dim();
        let k = chain.momentum(sector, j);
        let p = 2.0 * std::f64::consts::PI * k / l as f64;
        let w = if sector == Sector::Ramond && j == 0 {
            C64::new(0.0, 1.0)
        } else {
            let eps = chain.mode_energy(sector, j);
            C64::new(0.0, 1.0) * (C64::new(chain.field(), 0.0) - C64::from_polar(1.0, -p)) / eps
        };
        let norm = 0.5 / (l as f64).sqrt();
        let mut f = CMat::zeros(dim, dim);
        for site in 0..l {
            let phase = C64::from_polar(norm, -p * (site + 1) as f64);
            let (dx, dy) = (set.ops()[2 * site], set.ops()[2 * site + 1]);
            for b in 0..dim {
                f[(b ^ dx.flip(), b)] += phase * dx.phase(b);
                f[(b ^ dy.flip(), b)] += phase * w * dy.phase(b);
            }
        }
        Ok(f)
    }

    /// Dense conserved charges `Q_m = Π₊ Q_m^{NS} Π₊ + Π₋ Q_m^{R} Π₋`.
    pub fn charges(chain: &IsingChain) -> Result<Vec<CMat>> {
        let l = check(chain)?;
        let dim = 1usize << l;
        let parity = parity_diagonal(l);
        let mut out = vec![CMat::zeros(dim, dim); l];
        for sector in [Sector::NeveuSchwarz, Sector::Ramond] {
            let coeffs = chain.charge_coefficients(sector);
            let sign = sector.parity() as f64;
            let projector = CMat::from_diagonal(&DVector::from_iterator(
                dim,
                parity.iter().map(|&p| C64::new(0.5 * (1.0 + sign * p), 0.0)),
            ));
            let numbers: Vec<CMat> = (0..l)
                .map(|j| {
                    let f = bogoliubov_mode(chain, sector, j)?;
                    Ok(f.adjoint() * f - CMat::identity(dim, dim) * C64::new(0.5, 0.0))
                })
                .collect::<Result<_>>()?;
            for (m, row) in coeffs.iter().enumerate() {
                let mut q = CMat::zeros(dim, dim);
                for (c, n) in row.iter().zip(&numbers) {
                    q += n * C64::new(*c, 0.0);
                }
                out[m] += &projector * q * &projector;
            }
        }
        Ok(out)
    }

    /// Dense eigenvectors aligned with `table.states`, identified by parity
    /// and the full charge vector.
    ///
    /// A generic real combination of `P` and all `Q_m` is diagonalized; its
    /// eigenvectors are simultaneous eigenvectors whenever the charge vectors
    /// separate the spectrum, which the matching step then verifies.
    pub fn eigenstates(chain: &IsingChain, table: &SpectrumTable) -> Result<Vec<DVector<C64>>> {
        let l = check(chain)?;
        let dim = 1usize << l;
        let qs = charges(chain)?;
        let parity = parity_diagonal(l);
        let mut generic = CMat::from_diagonal(&DVector::from_iterator(
            dim,
            parity.iter().map(|&p| C64::new(0.731 * p, 0.0)),
        ));
        for (m, q) in qs.iter().enumerate() {
            let weight = 1.0 / (1.0 + 0.377 * m as f64 + 0.0191 * (m * m) as f64);
            generic += q * C64::new(weight, 0.0);
        }
        let eig = SymmetricEigen::new((&generic + generic.adjoint()) * C64::new(0.5, 0.0));
        let vectors: Vec<DVector<C64>> = (0..dim).map(|c| eig.eigenvectors.column(c).into_owned()).collect();
        let observed: Vec<(f64, Vec<f64>)> = vectors
            .iter()
            .map(|v| {
                let p: f64 = v.iter().zip(&parity).map(|(z, p)| z.norm_sqr() * p).sum();
                let q: Vec<f64> = qs.iter().map(|q| v.dotc(&(q * v)).re).collect();
                (p, q)
            })
            .collect();
        let mut used = vec![false; dim];
        let mut out = Vec::with_capacity(table.len());
        for state in &table.states {
            let mut found = None;
            for (idx, (p, q)) in observed.iter().enumerate() {
                if used[idx] || (p - state.parity as f64).abs() > 1e-8 {
                    continue;
                }
                let dist = q.iter().zip(&state.charges).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if dist < 1e-8 {
                    if found.is_some() {
                        return Err(Error::Invalid("charge vectors do not separate the spectrum".into()));
                    }
                    found = Some(idx);
                }
            }
            let idx = found.ok_or_else(|| {
                Error::Invalid(format!("no dense eigenvector matches occupation {:#b}", state.occupied))
            })?;
            used[idx] = true;
            out.push(vectors[idx].clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispersion_values() {
        assert!((dispersion(2.0, 5, 0.0) - 1.0).abs() < 1e-15);
        for k in 0..7 {
            let want = 2.0 * (PI * k as f64 / 7.0).sin().abs();
            assert!((dispersion(1.0, 7, k as f64) - want).abs() < 1e-14);
        }
        assert_eq!(dispersion(1.0, 6, 0.0), 0.0);
        assert!((dispersion(0.7, 9, 2.0) - dispersion(0.7, 9, 7.0)).abs() < 1e-15);
    }

    #[test]
    fn two_site_spectrum() {
        let chain = IsingChain::new(2, 0.8).unwrap();
        let table = enumerate_spectrum(&chain, SectorFilter::default()).unwrap();
        let occ: Vec<(Sector, u64)> = table.states.iter().map(|s| (s.sector, s.occupied)).collect();
        assert_eq!(
            occ,
            vec![
                (Sector::NeveuSchwarz, 0b00),
                (Sector::NeveuSchwarz, 0b11),
                (Sector::Ramond, 0b01),
                (Sector::Ramond, 0b10),
            ]
        );
        let vacuum = &table.states[0];
        assert_eq!((vacuum.parity, vacuum.momentum), (1, 0));
    }

    #[test]
    fn sector_counts() {
        let chain = IsingChain::new(6, 1.3).unwrap();
        let full = enumerate_spectrum(&chain, SectorFilter::default()).unwrap().len();
        assert_eq!(full, 64);
        let mut total = 0;
        for p in [1, -1] {
            for k in 0..6 {
                let f = SectorFilter {
                    parity: Some(p),
                    momentum: Some(k),
                };
                total += enumerate_spectrum(&chain, f).unwrap().len();
            }
        }
        assert_eq!(total, 64);
    }

    #[test]
    fn charge_zero_is_energy_and_conjugation_flips_even_charges() {
        let chain = IsingChain::new(5, 0.6).unwrap();
        let table = enumerate_spectrum(&chain, SectorFilter::default()).unwrap();
        for s in &table.states {
            assert_eq!(s.charges[0], s.energy);
        }
        // Occupation complement in NS with L = 6 keeps the parity even.
        let chain = IsingChain::new(6, 0.6).unwrap();
        let a = chain.label(Sector::NeveuSchwarz, 0b000011).unwrap();
        let b = chain.label(Sector::NeveuSchwarz, 0b111100).unwrap();
        for m in (0..6).step_by(2) {
            assert!((a.charges[m] + b.charges[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn unphysical_labels_rejected() {
        let chain = IsingChain::new(4, 1.0).unwrap();
        assert!(chain.label(Sector::NeveuSchwarz, 0b1).is_err());
        assert!(chain.label(Sector::Ramond, 0b11).is_err());
        assert!(chain.label(Sector::Ramond, 0b10000).is_err());
    }

    #[test]
    fn sorting_is_lexicographic_and_idempotent() {
        let chain = IsingChain::new(8, 1.0).unwrap();
        let table = enumerate_spectrum(&chain, SectorFilter::default()).unwrap();
        let keys: Vec<usize> = (0..8).collect();
        let sorted = sort_spectrum(table, &keys).unwrap();
        let tol = tie_tolerance(8);
        for w in sorted.states.windows(2) {
            assert!(w[1].charges[0] >= w[0].charges[0] - tol);
        }
        let again = sort_spectrum(sorted.clone(), &keys).unwrap();
        assert_eq!(again.states, sorted.states);
        assert_eq!(sorted.provenance.to_string(), "charges:0;1;2;3;4;5;6;7");
    }

    #[test]
    fn degeneracy_guards() {
        let chain = IsingChain::new(4, 1.0).unwrap();
        let table = enumerate_spectrum(&chain, SectorFilter::default()).unwrap();
        assert!(degeneracy_ratio(&table, 4).is_err());
        let mut one = table.clone();
        one.states.truncate(1);
        assert!(mode_number_difference(&one).is_err());
        // 0b0011 and 0b0101 both have two excitations.
        let mut two = table;
        two.states = two.states[1..3].to_vec();
        assert_eq!(mode_number_difference(&two).unwrap(), 0.0);
    }

    #[test]
    fn strong_field_ground_state_is_polarized() {
        let chain = IsingChain::new(8, 1e6).unwrap();
        let vacuum = chain.label(Sector::NeveuSchwarz, 0).unwrap();
        let g = chain.eigenstate_correlation(&vacuum, 4).unwrap();
        let want = crate::gaussian::block_diagonal(&[1.0; 4]);
        assert!((g.matrix() - want).amax() < 1e-6);
    }

    #[test]
    fn full_chain_correlation_is_pure() {
        for h in [0.5, 1.0, 2.0] {
            let chain = IsingChain::new(7, h).unwrap();
            for (sector, occ) in [(Sector::NeveuSchwarz, 0b0110000), (Sector::Ramond, 0b0000001), (Sector::Ramond, 0b1011000)] {
                let state = chain.label(sector, occ).unwrap();
                let g = chain.eigenstate_correlation(&state, 7).unwrap();
                assert!(g.is_pure(), "h = {h}, {sector:?} {occ:#b}");
            }
        }
    }
}
