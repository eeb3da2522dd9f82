//! Brute-force density matrices on `2^ℓ` dimensional Hilbert spaces.
//!
//! This is the reference against which the correlation-matrix formulas are
//! checked, so it avoids them entirely: states are built from Majorana
//! operators, distances come from Hermitian eigendecompositions.
//!
//! Basis convention: site 1 is the most significant bit of the basis index and
//! bit value 0 means `σᶻ = +1`. Majoranas follow Jordan-Wigner,
//! `d_{2j-1} = Z⋯Z X_j`, `d_{2j} = Z⋯Z Y_j`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gaussian::{CMat, CorrelationMatrix, Mat, C64};

/// Dense operations refuse systems larger than this.
pub const MAX_DENSE_SITES: usize = 14;

fn check_sites(ell: usize) -> Result<()> {
    if ell > MAX_DENSE_SITES {
        return Err(Error::GuardExceeded {
            what: "dense sites",
            value: ell,
            limit: MAX_DENSE_SITES,
        });
    }
    if ell == 0 {
        return Err(Error::OutOfRange {
            what: "dense sites",
            value: 0.0,
        });
    }
    Ok(())
}

fn sites_of_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::Invalid(format!("dimension {dim} is not a power of two")));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// One Majorana operator as a signed permutation: `d |b⟩ = phase(b) |b ^ flip⟩`.
#[derive(Clone, Copy, Debug)]
pub struct Majorana {
    flip: usize,
    string: usize,
    is_y: bool,
}

impl Majorana {
    fn new(ell: usize, index: usize) -> Self {
        let site = index / 2;
        let pos = ell - 1 - site;
        let all = (1usize << ell) - 1;
        Self {
            flip: 1 << pos,
            string: all ^ ((1usize << (pos + 1)) - 1),
            is_y: index % 2 == 1,
        }
    }

    pub fn flip(&self) -> usize {
        self.flip
    }

    #[inline]
    pub fn phase(&self, basis: usize) -> C64 {
        let sign = if (basis & self.string).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        if self.is_y {
            if basis & self.flip == 0 {
                C64::new(0.0, sign)
            } else {
                C64::new(0.0, -sign)
            }
        } else {
            C64::new(sign, 0.0)
        }
    }

    pub fn to_dense(&self, dim: usize) -> CMat {
        let mut out = CMat::zeros(dim, dim);
        for b in 0..dim {
            out[(b ^ self.flip, b)] = self.phase(b);
        }
        out
    }
}

/// Majoranas `d_1 … d_{2ℓ}` of an `ℓ`-site chain.
#[derive(Debug)]
pub struct MajoranaSet {
    sites: usize,
    ops: Vec<Majorana>,
}

impl MajoranaSet {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        1 << self.sites
    }

    pub fn ops(&self) -> &[Majorana] {
        &self.ops
    }
}

/// Memoized Majorana operators for `ell` sites.
pub fn majorana_operators(ell: usize) -> Result<Arc<MajoranaSet>> {
    check_sites(ell)?;
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<MajoranaSet>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    Ok(map
        .entry(ell)
        .or_insert_with(|| {
            Arc::new(MajoranaSet {
                sites: ell,
                ops: (0..2 * ell).map(|i| Majorana::new(ell, i)).collect(),
            })
        })
        .clone())
}

/// Sparse operator with at most one entry per column and flip pattern:
/// `op |b⟩ = Σ_t diag_t[b] |b ^ flip_t⟩`.
struct FlipOperator {
    terms: Vec<(usize, Vec<C64>)>,
}

impl FlipOperator {
    /// `Σ_{pq} c_{pq} d_p d_q`.
    fn bilinear(set: &MajoranaSet, coeffs: &CMat) -> Self {
        let dim = set.dim();
        let mut by_flip: HashMap<usize, Vec<C64>> = HashMap::new();
        for (p, dp) in set.ops.iter().enumerate() {
            for (q, dq) in set.ops.iter().enumerate() {
                let c = coeffs[(p, q)];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let flip = dp.flip ^ dq.flip;
                let diag = by_flip.entry(flip).or_insert_with(|| vec![C64::new(0.0, 0.0); dim]);
                for (b, slot) in diag.iter_mut().enumerate() {
                    *slot += c * dq.phase(b) * dp.phase(b ^ dq.flip);
                }
            }
        }
        let mut terms: Vec<_> = by_flip.into_iter().collect();
        terms.sort_by_key(|(f, _)| *f);
        Self { terms }
    }

    fn to_dense(&self, dim: usize) -> CMat {
        let mut out = CMat::zeros(dim, dim);
        for (flip, diag) in &self.terms {
            for (b, &v) in diag.iter().enumerate() {
                out[(b ^ flip, b)] += v;
            }
        }
        out
    }

    /// `rho * (1 + scale * op)`.
    fn right_multiply_affine(&self, rho: &CMat, scale: C64) -> CMat {
        let dim = rho.nrows();
        let mut out = rho.clone();
        for (flip, diag) in &self.terms {
            for c in 0..dim {
                let src = c ^ flip;
                let factor = scale * diag[c];
                if factor == C64::new(0.0, 0.0) {
                    continue;
                }
                // (ρ op)[r, c] = ρ[r, c ^ flip] diag[c]
                let col = rho.column(src).into_owned();
                out.column_mut(c).axpy(factor, &col, C64::new(1.0, 0.0));
            }
        }
        out
    }
}

/// A validated density matrix on `ℓ` sites.
#[derive(Clone, Debug)]
pub struct DenseState {
    rho: CMat,
    sites: usize,
}

impl DenseState {
    /// Checks Hermiticity (`1e-12`), unit trace (`1e-10`) and positivity
    /// (eigenvalues above `-1e-10`).
    pub fn new(rho: CMat) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch {
                left: rho.nrows(),
                right: rho.ncols(),
            });
        }
        let sites = sites_of_dim(rho.nrows())?;
        check_sites(sites)?;
        let defect = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > 1e-12 {
            return Err(Error::NotHermitian(defect));
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > 1e-10 || trace.im.abs() > 1e-10 {
            return Err(Error::Invalid(format!("density matrix trace is {trace}")));
        }
        let rho = hermitize(rho);
        let smallest = rho.clone().symmetric_eigenvalues().min();
        if smallest < -1e-10 {
            return Err(Error::Invalid(format!("density matrix eigenvalue {smallest:e} is negative")));
        }
        Ok(Self { rho, sites })
    }

    /// Skips the checks; for states built by this module.
    fn trusted(rho: CMat) -> Self {
        let sites = rho.nrows().trailing_zeros() as usize;
        Self {
            rho: hermitize(rho),
            sites,
        }
    }

    /// `|ψ⟩⟨ψ|` for a normalized vector.
    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        let sites = sites_of_dim(psi.len())?;
        check_sites(sites)?;
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Invalid(format!("state vector has norm {norm}")));
        }
        Ok(Self::trusted(psi * psi.adjoint()))
    }

    /// `M M†` for a factor with a power-of-two number of rows and unit
    /// Frobenius norm.
    pub fn from_factor(m: &CMat) -> Result<Self> {
        let sites = sites_of_dim(m.nrows())?;
        check_sites(sites)?;
        let norm = m.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Invalid(format!("factor has norm {norm}")));
        }
        Ok(Self::trusted(m * m.adjoint()))
    }

    pub fn matrix(&self) -> &CMat {
        &self.rho
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    /// Reduced state of the first `keep` sites.
    pub fn partial_trace(&self, keep: usize) -> Result<DenseState> {
        if keep == 0 || keep > self.sites {
            return Err(Error::OutOfRange {
                what: "kept sites",
                value: keep as f64,
            });
        }
        let inner = 1usize << (self.sites - keep);
        let outer = 1usize << keep;
        let out = CMat::from_fn(outer, outer, |a, c| {
            (0..inner).map(|b| self.rho[(a * inner + b, c * inner + b)]).sum()
        });
        Ok(Self::trusted(out))
    }
}

fn hermitize(m: CMat) -> CMat {
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Reduced state of the first `keep` sites of a pure state on `psi.len()`
/// basis states, without forming the full projector.
pub fn reduced_density_pure(psi: &DVector<C64>, keep: usize) -> Result<DenseState> {
    let total = sites_of_dim(psi.len())?;
    if keep == 0 || keep > total {
        return Err(Error::OutOfRange {
            what: "kept sites",
            value: keep as f64,
        });
    }
    check_sites(keep)?;
    let inner = 1usize << (total - keep);
    let outer = 1usize << keep;
    // Rows of the reshaped matrix are the kept configurations.
    let shaped = CMat::from_fn(outer, inner, |a, b| psi[a * inner + b]);
    Ok(DenseState::trusted(&shaped * shaped.adjoint()))
}

/// `Π_j ½(1 - iγ_j d'_{2j-1} d'_{2j})` with `d' = O d` from the canonical form,
/// so that `tr(ρ d'_{2j-1} d'_{2j}) = iγ_j`.
pub fn density_from_gamma(g: &CorrelationMatrix) -> Result<DenseState> {
    let ell = g.modes();
    let set = majorana_operators(ell)?;
    let dim = set.dim();
    let cf = g.canonical();
    let mut rho = CMat::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0);
    for (j, &gam) in cf.pair_values.iter().enumerate() {
        if gam == 0.0 {
            continue;
        }
        let a = cf.rotation.row(2 * j);
        let b = cf.rotation.row(2 * j + 1);
        let coeffs = CMat::from_fn(2 * ell, 2 * ell, |p, q| C64::new(a[p] * b[q], 0.0));
        let op = FlipOperator::bilinear(&set, &coeffs);
        rho = op.right_multiply_affine(&rho, C64::new(0.0, -gam));
    }
    let trace = rho.trace();
    if (trace.re - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("reconstructed trace {trace}")));
    }
    Ok(DenseState::trusted(rho))
}

/// Exponential form `exp(-¼ Σ W_{mn} d_m d_n) / Z` with `W = 2 artanh Γ`, for
/// states with every canonical value strictly below 1.
pub fn density_from_gamma_exp(g: &CorrelationMatrix) -> Result<DenseState> {
    let ell = g.modes();
    let cf = g.canonical();
    if let Some(&top) = cf.pair_values.first() {
        if top >= 1.0 - 1e-10 {
            return Err(Error::OutOfRange {
                what: "canonical value for exponential form",
                value: top,
            });
        }
    }
    let set = majorana_operators(ell)?;
    let w_blocks = crate::gaussian::block_diagonal(
        &cf.pair_values.iter().map(|g| 2.0 * g.atanh()).collect::<Vec<_>>(),
    );
    let w = cf.rotation.transpose() * w_blocks * &cf.rotation;
    // W = i w, so -¼ W_{mn} = -(i/4) w_{mn}.
    let coeffs = w.map(|x| C64::new(0.0, -0.25 * x));
    let exponent = FlipOperator::bilinear(&set, &coeffs).to_dense(set.dim());
    let unnormalized = hermitize(exponent).exp();
    let z = unnormalized.trace();
    Ok(DenseState::trusted(unnormalized / z))
}

/// `m_{mn} = Im tr(ρ d_m d_n)` for `m ≠ n`.
pub fn gamma_from_density(state: &DenseState) -> Result<CorrelationMatrix> {
    let set = majorana_operators(state.sites())?;
    let rho = state.matrix();
    let n = 2 * state.sites();
    let mut m = Mat::zeros(n, n);
    for p in 0..n {
        for q in (p + 1)..n {
            let v = majorana_pair_expectation(&set, rho, p, q);
            m[(p, q)] = v.im;
            m[(q, p)] = -v.im;
        }
    }
    CorrelationMatrix::from_computed(m)
}

/// `tr(ρ d_p d_q)`.
fn majorana_pair_expectation(set: &MajoranaSet, rho: &CMat, p: usize, q: usize) -> C64 {
    let dp = set.ops[p];
    let dq = set.ops[q];
    let flip = dp.flip ^ dq.flip;
    (0..set.dim())
        .map(|c| rho[(c, c ^ flip)] * dq.phase(c) * dp.phase(c ^ dq.flip))
        .sum()
}

/// `Γ_{mn} = tr(X d_m d_n)/tr(X) - δ_{mn}` for an arbitrary operator `X`.
pub fn operator_correlation(op: &CMat) -> Result<CMat> {
    let sites = sites_of_dim(op.nrows())?;
    let set = majorana_operators(sites)?;
    let trace = op.trace();
    if trace.norm() < 1e-300 {
        return Err(Error::Singular("operator has zero trace"));
    }
    let n = 2 * sites;
    let mut out = CMat::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            if p != q {
                out[(p, q)] = majorana_pair_expectation(&set, op, p, q) / trace;
            }
        }
    }
    Ok(out)
}

fn same_dim(a: &DenseState, b: &DenseState) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.sites(),
            right: b.sites(),
        });
    }
    Ok(())
}

/// `½ tr|ρ - σ|`.
pub fn trace_distance(a: &DenseState, b: &DenseState) -> Result<f64> {
    same_dim(a, b)?;
    let diff = hermitize(a.matrix() - b.matrix());
    let sum: f64 = diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum();
    Ok(0.5 * sum)
}

/// Square root of a positive semidefinite Hermitian matrix. Eigenvalues below
/// `1e-13` are set to zero; taking their square root would turn rounding noise
/// into `1e-7`-sized entries.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let eig = SymmetricEigen::new(hermitize(m.clone()));
    let roots = eig.eigenvalues.map(|x| if x > 1e-13 { C64::new(x.sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
    let v = &eig.eigenvectors;
    v * CMat::from_diagonal(&roots) * v.adjoint()
}

/// Uhlmann fidelity `‖√σ √ρ‖₁`.
pub fn fidelity_dense(a: &DenseState, b: &DenseState) -> Result<f64> {
    same_dim(a, b)?;
    let product = psd_sqrt(b.matrix()) * psd_sqrt(a.matrix());
    let f: f64 = product.singular_values().iter().sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Fidelity as `Σ √λ` over the eigenvalues of `ρσ`. Only reliable when both
/// states have full rank; kept as an independent cross-check.
pub fn fidelity_dense_product(a: &DenseState, b: &DenseState) -> Result<f64> {
    same_dim(a, b)?;
    let product = a.matrix() * b.matrix();
    let eig = product.eigenvalues().ok_or(Error::NoConvergence)?;
    let mut f = 0.0;
    for z in eig.iter() {
        if z.re < -1e-10 {
            return Err(Error::Invalid(format!("eigenvalue {z} of ρσ is negative")));
        }
        f += C64::new(z.re.max(0.0), z.im).sqrt().re;
    }
    Ok(f.clamp(0.0, 1.0))
}

/// Bures distance `min_U ‖√ρ - √σ U‖₂`.
///
/// With `√σ √ρ = W Σ V†` the minimum sits at `U = W V†` and equals
/// `√(2 - 2 tr Σ)`. Evaluating the norm directly avoids the square root of
/// `1 - F`, which turns rounding in `F` into errors of order `1e-8` for nearly
/// equal states.
pub fn bures_distance_dense(a: &DenseState, b: &DenseState) -> Result<f64> {
    same_dim(a, b)?;
    let (ra, rb) = (psd_sqrt(a.matrix()), psd_sqrt(b.matrix()));
    Ok((&ra - &rb * polar_unitary(&(&rb * &ra))).norm())
}

/// A unitary `U = W V†` for `M = W Σ V†`.
///
/// `V` comes from the Hermitian eigenproblem of `M†M` and `W` from a QR
/// factorization of `M V`, so both are unitary even when `M` is singular.
/// Columns with tiny `σ` are poorly determined, but they enter `tr(M†U)` only
/// at the rounding level.
fn polar_unitary(m: &CMat) -> CMat {
    let n = m.ncols();
    let eig = SymmetricEigen::new(hermitize(m.adjoint() * m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let v = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let qr = (m * &v).qr();
    let (mut w, r) = (qr.q(), qr.r());
    for k in 0..n {
        let d = r[(k, k)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                w[(i, k)] *= phase;
            }
        }
    }
    w * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majoranas_anticommute() {
        let set = majorana_operators(3).unwrap();
        let dense: Vec<CMat> = set.ops().iter().map(|d| d.to_dense(8)).collect();
        for (i, a) in dense.iter().enumerate() {
            for (j, b) in dense.iter().enumerate() {
                let ac = a * b + b * a;
                let want = if i == j { CMat::identity(8, 8) * C64::new(2.0, 0.0) } else { CMat::zeros(8, 8) };
                assert!((ac - want).iter().all(|z| z.norm() < 1e-15));
            }
            assert!((a - a.adjoint()).iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn first_site_is_most_significant() {
        // d_1 = X on site 1 flips the top bit.
        let set = majorana_operators(2).unwrap();
        assert_eq!(set.ops()[0].flip(), 0b10);
        assert_eq!(set.ops()[2].flip(), 0b01);
        // d_1 d_2 = i Z_1.
        let d1 = set.ops()[0].to_dense(4);
        let d2 = set.ops()[1].to_dense(4);
        let prod = d1 * d2;
        for b in 0..4 {
            let z = if b & 0b10 == 0 { 1.0 } else { -1.0 };
            assert!((prod[(b, b)] - C64::new(0.0, z)).norm() < 1e-15);
        }
    }

    #[test]
    fn single_mode_density() {
        let g = CorrelationMatrix::from_pair_values(&[0.4]).unwrap();
        let rho = density_from_gamma(&g).unwrap();
        assert!((rho.matrix()[(0, 0)].re - 0.7).abs() < 1e-15);
        assert!((rho.matrix()[(1, 1)].re - 0.3).abs() < 1e-15);
    }

    #[test]
    fn partial_trace_of_product() {
        let g = CorrelationMatrix::from_pair_values(&[0.4, -0.2]).unwrap();
        let rho = density_from_gamma(&g).unwrap();
        let first = rho.partial_trace(1).unwrap();
        assert!((first.matrix()[(0, 0)].re - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_states() {
        let mut m = CMat::identity(4, 4) * C64::new(0.25, 0.0);
        m[(0, 1)] = C64::new(0.0, 0.1);
        assert!(matches!(DenseState::new(m), Err(Error::NotHermitian(_))));
        let m = CMat::identity(4, 4) * C64::new(0.5, 0.0);
        assert!(DenseState::new(m).is_err());
        let m = CMat::identity(3, 3) * C64::new(1.0 / 3.0, 0.0);
        assert!(DenseState::new(m).is_err());
    }

    #[test]
    fn guard_on_size() {
        assert!(majorana_operators(MAX_DENSE_SITES + 1).unwrap_err().is_guard());
    }

    #[test]
    fn fidelity_routes_agree_on_full_rank() {
        let a = density_from_gamma(&CorrelationMatrix::from_pair_values(&[0.3, 0.5]).unwrap()).unwrap();
        let b = density_from_gamma(&CorrelationMatrix::from_pair_values(&[0.7, -0.1]).unwrap()).unwrap();
        let f1 = fidelity_dense(&a, &b).unwrap();
        let f2 = fidelity_dense_product(&a, &b).unwrap();
        assert!((f1 - f2).abs() < 1e-12);
    }

    #[test]
    fn bures_on_rank_deficient_states() {
        let c = |re: f64, im: f64| C64::new(re, im);
        let psi = DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0), c(0.0, 0.0)]);
        let phi = DVector::from_vec(vec![c(0.0, 0.0), c(0.8, 0.0), c(0.0, -0.6), c(0.0, 0.0)]);
        let (a, b) = (DenseState::pure(&psi).unwrap(), DenseState::pure(&phi).unwrap());
        let overlap = psi.dotc(&phi).norm();
        let want = (2.0 - 2.0 * overlap).sqrt();
        assert!((bures_distance_dense(&a, &b).unwrap() - want).abs() < 1e-14);
        assert!(bures_distance_dense(&a, &a).unwrap() < 1e-14);

        // Degenerate spectrum with a kernel.
        let m = CMat::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));
        let mixed = DenseState::new(m).unwrap();
        let f = fidelity_dense(&mixed, &b).unwrap();
        let d = bures_distance_dense(&mixed, &b).unwrap();
        assert!((d * d - (2.0 - 2.0 * f)).abs() < 1e-14);
        assert!(bures_distance_dense(&mixed, &mixed).unwrap() < 1e-14);
    }
}
