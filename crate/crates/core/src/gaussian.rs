//! Correlation-matrix algebra for fermionic Gaussian states.
//!
//! A Gaussian state of `ell` fermionic modes is fixed by its Majorana
//! correlation matrix `Γ_{mn} = tr(ρ d_m d_n) - δ_{mn}`, which is purely
//! imaginary and antisymmetric. We store the real antisymmetric matrix `m`
//! with `Γ = i m`, so that nothing except a handful of eigenvalue steps needs
//! complex arithmetic.
//!
//! The fidelity between two Gaussian states is evaluated without leaving the
//! `2ell x 2ell` representation. Modes whose canonical value sits at 1 make the
//! generic determinant formula indeterminate (`0 * inf`); those modes are
//! projected out one sector at a time by [`reduce_unit_modes`], and the
//! remaining mixed part is handled by [`fidelity_regular`]. [`fidelity`]
//! dispatches between the branches.

use log::warn;
use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex<f64>>;
pub type C64 = Complex<f64>;

/// A canonical value `γ` counts as a unit mode when `1 - γ` is below this.
pub const UNIT_TOL: f64 = 1e-10;
/// Canonical values in `(1, 1 + SNAP_TOL]` are snapped to 1 on input.
pub const SNAP_TOL: f64 = 1e-9;
/// Maximum entrywise `|m + mᵀ|` accepted by [`CorrelationMatrix::new`].
pub const ANTISYM_TOL: f64 = 1e-12;
/// Determinants below this are treated as exact orthogonality.
pub const ORTHOGONAL_DET: f64 = 1e-14;

/// Fraction of the largest canonical value below which pairs are split off and
/// decomposed again on a rescaled subproblem.
const SMALL_PAIR_SPLIT: f64 = 1e-3;

/// The 2x2 block `[[0, 1], [-1, 0]]` scaled by `v`.
#[inline]
fn put_block(m: &mut Mat, j: usize, v: f64) {
    m[(2 * j, 2 * j + 1)] = v;
    m[(2 * j + 1, 2 * j)] = -v;
}

fn antisymmetric_deviation(m: &Mat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] + m[(j, i)]).abs());
        }
    }
    worst
}

fn antisymmetrize(m: &Mat) -> Mat {
    (m - m.transpose()) * 0.5
}

/// Real orthogonal rotation to the canonical block form.
#[derive(Clone, Debug)]
pub struct CanonicalForm {
    /// Orthogonal `O` with `O m Oᵀ = ⊕_j [[0, γ_j], [-γ_j, 0]]`.
    pub rotation: Mat,
    /// Canonical values `γ_j ≥ 0`, sorted descending.
    pub pair_values: Vec<f64>,
}

impl CanonicalForm {
    pub fn modes(&self) -> usize {
        self.pair_values.len()
    }

    /// The block-diagonal canonical matrix.
    pub fn blocks(&self) -> Mat {
        block_diagonal(&self.pair_values)
    }

    /// `Oᵀ B O`, which reproduces the decomposed matrix.
    pub fn reconstruct(&self) -> Mat {
        self.rotation.transpose() * self.blocks() * &self.rotation
    }

    /// Number of pairs with `1 - γ < tol`.
    pub fn unit_pairs(&self, tol: f64) -> usize {
        self.pair_values.iter().filter(|&&g| 1.0 - g < tol).count()
    }
}

/// `⊕_j [[0, γ_j], [-γ_j, 0]]`.
pub fn block_diagonal(values: &[f64]) -> Mat {
    let mut m = Mat::zeros(2 * values.len(), 2 * values.len());
    for (j, &v) in values.iter().enumerate() {
        put_block(&mut m, j, v);
    }
    m
}

/// Canonical form of a real antisymmetric matrix.
///
/// Every pair is read off the Hermitian eigenproblem of `i m`: an eigenvector
/// `v = (u + i w)/√2` with eigenvalue `γ > 0` gives the rows `(w, u)`. Pairs
/// that are small relative to the largest are re-decomposed on the rescaled
/// complement, where `+γ` and `-γ` are otherwise too close to separate.
pub fn canonical_form(m: &Mat) -> CanonicalForm {
    let n = m.nrows();
    assert!(n % 2 == 0 && m.ncols() == n, "need an even square matrix");
    let mut rotation = if is_block_diagonal(m) {
        Mat::identity(n, n)
    } else {
        let rows = canonical_rows(m);
        let mut rotation = Mat::zeros(n, n);
        for (j, (a, b, _)) in rows.iter().enumerate() {
            rotation.set_row(2 * j, &a.transpose());
            rotation.set_row(2 * j + 1, &b.transpose());
        }
        reorthonormalize_rows(&mut rotation);
        rotation
    };

    let rotated = &rotation * m * rotation.transpose();
    let mut pairs: Vec<(f64, usize)> = (0..n / 2)
        .map(|j| (rotated[(2 * j, 2 * j + 1)], j))
        .collect();
    for (g, j) in pairs.iter_mut() {
        if *g < 0.0 {
            rotation.swap_rows(2 * *j, 2 * *j + 1);
            *g = -*g;
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut sorted = Mat::zeros(n, n);
    for (new, &(_, old)) in pairs.iter().enumerate() {
        sorted.set_row(2 * new, &rotation.row(2 * old));
        sorted.set_row(2 * new + 1, &rotation.row(2 * old + 1));
    }
    CanonicalForm {
        rotation: sorted,
        pair_values: pairs.into_iter().map(|(g, _)| g).collect(),
    }
}

fn is_block_diagonal(m: &Mat) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i / 2 == j / 2 || m[(i, j)] == 0.0))
}

type PairRows = Vec<(DVector<f64>, DVector<f64>, f64)>;

fn canonical_rows(m: &Mat) -> PairRows {
    let n = m.nrows();
    let half = n / 2;
    let scale = m.amax();
    if scale < 1e-300 {
        return (0..half)
            .map(|j| {
                let mut a = DVector::zeros(n);
                let mut b = DVector::zeros(n);
                a[2 * j] = 1.0;
                b[2 * j + 1] = 1.0;
                (a, b, 0.0)
            })
            .collect();
    }

    let herm: CMat = m.map(|x| C64::new(0.0, x));
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let largest = eig.eigenvalues[order[0]].max(0.0);
    let cut = SMALL_PAIR_SPLIT * largest;

    let sqrt2 = std::f64::consts::SQRT_2;
    let mut rows: PairRows = Vec::with_capacity(half);
    for &idx in order.iter().take(half) {
        let g = eig.eigenvalues[idx];
        if g < cut || g <= 0.0 {
            break;
        }
        let v = eig.eigenvectors.column(idx);
        let u = DVector::from_iterator(n, v.iter().map(|z| z.re * sqrt2));
        let w = DVector::from_iterator(n, v.iter().map(|z| z.im * sqrt2));
        rows.push((w, u, g));
    }
    if rows.len() == half {
        return rows;
    }

    // Real orthonormal basis of the small-eigenvalue subspace, built from the
    // real and imaginary parts of its eigenvectors.
    let mut basis: Vec<DVector<f64>> = rows
        .iter()
        .flat_map(|(a, b, _)| [a.clone(), b.clone()])
        .collect();
    let fixed = basis.len();
    let needed = n - fixed;
    let kept = rows.len();
    let mut candidates: Vec<DVector<f64>> = Vec::new();
    for &idx in &order[kept..n - kept] {
        let v = eig.eigenvectors.column(idx);
        candidates.push(DVector::from_iterator(n, v.iter().map(|z| z.re)));
        candidates.push(DVector::from_iterator(n, v.iter().map(|z| z.im)));
    }
    // Fall back to the unit vectors if the candidates are short of rank.
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        candidates.push(e);
    }
    while basis.len() < n {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for c in &candidates {
            let mut r = c.clone();
            for _ in 0..2 {
                for q in &basis {
                    let d = q.dot(&r);
                    r.axpy(-d, q, 1.0);
                }
            }
            let norm = r.norm();
            if best.as_ref().is_none_or(|(bn, _)| norm > *bn) {
                best = Some((norm, r));
            }
        }
        let (norm, r) = best.expect("candidate set is never empty");
        basis.push(r / norm);
    }
    debug_assert_eq!(basis.len() - fixed, needed);

    let complement = Mat::from_fn(needed, n, |i, j| basis[fixed + i][j]);
    let sub = antisymmetrize(&(&complement * m * complement.transpose()));
    let sub_scale = sub.amax();
    if sub_scale < 1e-300 || needed == 0 {
        for j in 0..needed / 2 {
            rows.push((
                complement.row(2 * j).transpose(),
                complement.row(2 * j + 1).transpose(),
                0.0,
            ));
        }
        return rows;
    }
    for (a, b, g) in canonical_rows(&(sub / sub_scale)) {
        rows.push((
            complement.transpose() * a,
            complement.transpose() * b,
            g * sub_scale,
        ));
    }
    rows
}

fn reorthonormalize_rows(o: &mut Mat) {
    let n = o.nrows();
    for i in 0..n {
        for _ in 0..2 {
            for k in 0..i {
                let d = o.row(i).dot(&o.row(k));
                for c in 0..n {
                    o[(i, c)] -= d * o[(k, c)];
                }
            }
        }
        let norm = o.row(i).norm();
        o.row_mut(i).scale_mut(1.0 / norm);
    }
}

/// Correlation matrix of an `ell`-mode Gaussian state, stored as the real
/// antisymmetric `m` with `Γ = i m`, together with its canonical form.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    m: Mat,
    canonical: CanonicalForm,
}

impl CorrelationMatrix {
    /// Validates antisymmetry and the spectrum bound, snapping canonical
    /// values in `(1, 1 + SNAP_TOL]` to exactly 1.
    pub fn new(m: Mat) -> Result<Self> {
        check_shape(&m)?;
        let dev = antisymmetric_deviation(&m);
        if dev > ANTISYM_TOL {
            return Err(Error::NotAntisymmetric(dev));
        }
        Self::finish(antisymmetrize(&m))
    }

    /// For matrices produced by our own arithmetic: antisymmetrizes without
    /// the strict check, logging deviations above `1e-10`.
    pub(crate) fn from_computed(m: Mat) -> Result<Self> {
        check_shape(&m)?;
        let dev = antisymmetric_deviation(&m);
        if dev > 1e-10 {
            warn!("antisymmetry deviation {dev:e} in computed correlation matrix");
        }
        Self::finish(antisymmetrize(&m))
    }

    fn finish(m: Mat) -> Result<Self> {
        let canonical = canonical_form(&m);
        let top = canonical.pair_values.first().copied().unwrap_or(0.0);
        if top > 1.0 + SNAP_TOL {
            return Err(Error::InvalidSpectrum(top));
        }
        if top > 1.0 {
            let mut canonical = canonical;
            for g in canonical.pair_values.iter_mut() {
                *g = g.min(1.0);
            }
            let m = canonical.reconstruct();
            return Ok(Self {
                m: antisymmetrize(&m),
                canonical,
            });
        }
        Ok(Self { m, canonical })
    }

    /// Block-diagonal state with the given (signed) pair values, one per mode.
    pub fn from_pair_values(values: &[f64]) -> Result<Self> {
        Self::new(block_diagonal(values))
    }

    /// Infinite-temperature state, `Γ = 0`.
    pub fn maximally_mixed(modes: usize) -> Self {
        Self::from_pair_values(&vec![0.0; modes]).expect("zero matrix is valid")
    }

    pub fn modes(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    pub fn into_matrix(self) -> Mat {
        self.m
    }

    pub fn canonical(&self) -> &CanonicalForm {
        &self.canonical
    }

    /// `Γ = i m` as a complex matrix.
    pub fn gamma(&self) -> CMat {
        self.m.map(|x| C64::new(0.0, x))
    }

    /// Leading `2 ell x 2 ell` block: the reduced state on the first `ell` modes.
    pub fn subsystem(&self, ell: usize) -> Result<Self> {
        if ell == 0 || ell > self.modes() {
            return Err(Error::OutOfRange {
                what: "subsystem size",
                value: ell as f64,
            });
        }
        if ell == self.modes() {
            return Ok(self.clone());
        }
        Self::from_computed(self.m.view((0, 0), (2 * ell, 2 * ell)).into_owned())
    }

    pub fn unit_pairs(&self) -> usize {
        self.canonical.unit_pairs(UNIT_TOL)
    }

    /// All canonical values at 1 within [`UNIT_TOL`].
    pub fn is_pure(&self) -> bool {
        self.unit_pairs() == self.modes()
    }

    /// Expectation of the fermion parity `Π_j (-i d_{2j-1} d_{2j})`, i.e. the
    /// Pfaffian of `m`.
    pub fn parity(&self) -> f64 {
        let sign = self.canonical.rotation.determinant().signum();
        sign * self.canonical.pair_values.iter().product::<f64>()
    }
}

fn check_shape(m: &Mat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            left: m.nrows(),
            right: m.ncols(),
        });
    }
    if m.nrows() == 0 || m.nrows() % 2 != 0 {
        return Err(Error::Invalid(format!(
            "correlation matrix needs positive even dimension, got {}",
            m.nrows()
        )));
    }
    Ok(())
}

fn same_modes(a: &CorrelationMatrix, b: &CorrelationMatrix) -> Result<()> {
    if a.modes() != b.modes() {
        return Err(Error::DimensionMismatch {
            left: a.modes(),
            right: b.modes(),
        });
    }
    Ok(())
}

fn real_identity_minus_product(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    Mat::identity(n, n) - a * b
}

/// `tr(ρ₁ρ₂) = sqrt(det((1 + Γ₁Γ₂)/2))`.
pub fn gaussian_product_trace(g1: &CorrelationMatrix, g2: &CorrelationMatrix) -> Result<f64> {
    same_modes(g1, g2)?;
    // 1 + Γ₁Γ₂ = 1 - m₁m₂ is real.
    let det = (real_identity_minus_product(g1.matrix(), g2.matrix()) * 0.5).determinant();
    if det < -1e-12 {
        return Err(Error::NegativeDeterminant(det));
    }
    Ok(det.max(0.0).sqrt().min(1.0))
}

/// A normalized Gaussian operator `X / tr X`, not necessarily Hermitian,
/// described by its complex antisymmetric `Γ_{mn} = tr(X d_m d_n)/tr X - δ_{mn}`.
///
/// Products of non-commuting Gaussian states are of this kind.
#[derive(Clone, Debug)]
pub struct GaussianOperator {
    gamma: CMat,
}

impl GaussianOperator {
    pub fn from_correlation(g: &CorrelationMatrix) -> Self {
        Self { gamma: g.gamma() }
    }

    pub fn gamma(&self) -> &CMat {
        &self.gamma
    }

    pub fn modes(&self) -> usize {
        self.gamma.nrows() / 2
    }

    /// Largest `|Re Γ|`; zero for a Hermitian operator.
    pub fn hermiticity_defect(&self) -> f64 {
        self.gamma.iter().map(|z| z.re.abs()).fold(0.0, f64::max)
    }

    /// Converts back to a state when `Γ` is purely imaginary within `1e-10`.
    pub fn into_correlation(self) -> Result<CorrelationMatrix> {
        let defect = self.hermiticity_defect();
        if defect > 1e-10 {
            return Err(Error::NotHermitian(defect));
        }
        CorrelationMatrix::from_computed(self.gamma.map(|z| z.im))
    }

    /// `Γ_self × Γ_other = 1 - (1 - Γ₁)(1 + Γ₂Γ₁)⁻¹(1 - Γ₂)`.
    pub fn compose(&self, other: &GaussianOperator) -> Result<GaussianOperator> {
        if self.modes() != other.modes() {
            return Err(Error::DimensionMismatch {
                left: self.modes(),
                right: other.modes(),
            });
        }
        let n = self.gamma.nrows();
        let id = CMat::identity(n, n);
        let middle = &id + &other.gamma * &self.gamma;
        let smallest = middle
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if smallest <= 1e-12 {
            return Err(Error::Singular("1 + Γ₂Γ₁ in Gaussian product"));
        }
        let inv = middle
            .try_inverse()
            .ok_or(Error::Singular("1 + Γ₂Γ₁ in Gaussian product"))?;
        let out = &id - (&id - &self.gamma) * inv * (&id - &other.gamma);
        let sym = (&out - out.transpose()) * C64::new(0.5, 0.0);
        let dev = (&out - &sym).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > 1e-10 {
            warn!("antisymmetry deviation {dev:e} in Gaussian product");
        }
        Ok(GaussianOperator { gamma: sym })
    }

    /// `tr(X₁X₂)` for normalized Gaussian operators, principal square root.
    pub fn product_trace(&self, other: &GaussianOperator) -> Result<C64> {
        if self.modes() != other.modes() {
            return Err(Error::DimensionMismatch {
                left: self.modes(),
                right: other.modes(),
            });
        }
        let n = self.gamma.nrows();
        let arg = (CMat::identity(n, n) + &self.gamma * &other.gamma) * C64::new(0.5, 0.0);
        Ok(arg.determinant().sqrt())
    }
}

/// Correlation data of the normalized product `ρ₁ρ₂ / tr(ρ₁ρ₂)`.
///
/// The product of two non-commuting states is not Hermitian, so the result is
/// a general [`GaussianOperator`]; use [`GaussianOperator::into_correlation`]
/// when the inputs commute.
pub fn gaussian_compose(g1: &CorrelationMatrix, g2: &CorrelationMatrix) -> Result<GaussianOperator> {
    same_modes(g1, g2)?;
    GaussianOperator::from_correlation(g1).compose(&GaussianOperator::from_correlation(g2))
}

/// Fidelity of two single-mode states with signed pair values `γ₁, γ₂`.
pub fn fidelity_single_mode(gamma1: f64, gamma2: f64) -> Result<f64> {
    let clamp = |g: f64, what| {
        if g.abs() > 1.0 + SNAP_TOL || g.is_nan() {
            Err(Error::OutOfRange { what, value: g })
        } else {
            let g = g.clamp(-1.0, 1.0);
            // Snap unit modes so that √(1 - γ) does not amplify rounding.
            Ok(if 1.0 - g.abs() < UNIT_TOL { g.signum() } else { g })
        }
    };
    let a = clamp(gamma1, "gamma1")?;
    let b = clamp(gamma2, "gamma2")?;
    let f = 0.5 * (((1.0 + a) * (1.0 + b)).sqrt() + ((1.0 - a) * (1.0 - b)).sqrt());
    Ok(f.clamp(0.0, 1.0))
}

/// Fidelity when at least one state is pure: `det((1 + Γ₁Γ₂)/2)^{1/4}`.
pub fn fidelity_pure(g1: &CorrelationMatrix, g2: &CorrelationMatrix) -> Result<f64> {
    same_modes(g1, g2)?;
    if !g1.is_pure() && !g2.is_pure() {
        return Err(Error::NotPure);
    }
    let det = (real_identity_minus_product(g1.matrix(), g2.matrix()) * 0.5).determinant();
    if det < -1e-12 {
        return Err(Error::NegativeDeterminant(det));
    }
    if det < ORTHOGONAL_DET {
        return Ok(0.0);
    }
    let f = det.powf(0.25).min(1.0);
    debug_assert!(
        (f - gaussian_product_trace(g1, g2).map(f64::sqrt).unwrap_or(f)).abs() < 1e-12,
        "pure fidelity must equal the square root of the product trace"
    );
    Ok(f)
}

/// `f(Γ)` for `f(g) = a + b g` on each canonical block, in the original basis:
/// block `a I₂ + i b γ J`.
fn canonical_function(g: &CorrelationMatrix, coeffs: impl Fn(f64) -> (f64, f64)) -> CMat {
    let cf = g.canonical();
    let n = 2 * cf.modes();
    let mut blocks = CMat::zeros(n, n);
    for (j, &gam) in cf.pair_values.iter().enumerate() {
        let (a, b) = coeffs(gam);
        blocks[(2 * j, 2 * j)] = C64::new(a, 0.0);
        blocks[(2 * j + 1, 2 * j + 1)] = C64::new(a, 0.0);
        blocks[(2 * j, 2 * j + 1)] = C64::new(0.0, b * gam);
        blocks[(2 * j + 1, 2 * j)] = C64::new(0.0, -b * gam);
    }
    let o = cf.rotation.map(|x| C64::new(x, 0.0));
    o.transpose() * blocks * o
}

/// Fidelity for two states with no canonical value at 1.
///
/// `F = det((1+Γ₁)/2)^{1/4} det((1+Γ₂)/2)^{1/4} det(1 + √(K₁K₂))^{1/2}` with
/// `K = (1-Γ)/(1+Γ)`.
pub fn fidelity_regular(g1: &CorrelationMatrix, g2: &CorrelationMatrix) -> Result<f64> {
    same_modes(g1, g2)?;
    if g1.unit_pairs() > 0 || g2.unit_pairs() > 0 {
        return Err(Error::UnitModeContamination(0.0));
    }
    let mut prefactor = 1.0;
    for &gam in g1
        .canonical()
        .pair_values
        .iter()
        .chain(g2.canonical().pair_values.iter())
    {
        prefactor *= ((1.0 - gam) * (1.0 + gam) / 4.0).powf(0.25);
    }
    // √K: a = 1/√(1-γ²), b = -1/√(1-γ²).
    let sqrt_k = |g: &CorrelationMatrix| {
        canonical_function(g, |x| {
            let s = 1.0 / ((1.0 - x) * (1.0 + x)).sqrt();
            (s, -s)
        })
    };
    // The square roots of the eigenvalues of K1 K2 are the singular values of
    // √K1 √K2. Taking them from an SVD keeps small ones accurate; squaring
    // first would lose half the digits.
    let product = sqrt_k(g1) * sqrt_k(g2);
    let det: f64 = product.singular_values().iter().map(|s| 1.0 + s).product();
    let f = prefactor * det.sqrt();
    if f > 1.0 + 1e-9 {
        warn!("regular-branch fidelity {f} exceeds 1");
    }
    Ok(f.clamp(0.0, 1.0))
}

/// Both states rotated into the canonical basis of the first, split into its
/// unit pairs `X` and the remaining pairs `Y`.
#[derive(Clone, Debug)]
pub struct ModePartition {
    pub unit_indices: Vec<usize>,
    pub bulk_indices: Vec<usize>,
    pub r_x: Mat,
    pub r_y: Mat,
    pub s_x: Mat,
    pub s_y: Mat,
    pub s_xy: Mat,
    pub s_yx: Mat,
    bulk_values: Vec<f64>,
}

impl ModePartition {
    pub fn unit_count(&self) -> usize {
        self.unit_indices.len()
    }

    pub fn bulk_count(&self) -> usize {
        self.bulk_indices.len()
    }
}

/// Partitions the canonical pairs of `g1` into unit (`1 - γ < tol`) and bulk
/// pairs and expresses `g2` in the same basis.
pub fn classify_modes(g1: &CorrelationMatrix, g2: &CorrelationMatrix, tol: f64) -> Result<ModePartition> {
    same_modes(g1, g2)?;
    let cf = g1.canonical();
    let ell = cf.modes();
    // Pair values are sorted descending, so unit pairs come first.
    let x = cf.unit_pairs(tol);
    let y = ell - x;
    let rotated = &cf.rotation * g2.matrix() * cf.rotation.transpose();
    let bulk_values = cf.pair_values[x..].to_vec();

    let partition = ModePartition {
        unit_indices: (0..x).collect(),
        bulk_indices: (x..ell).collect(),
        r_x: block_diagonal(&vec![1.0; x]),
        r_y: block_diagonal(&bulk_values),
        s_x: rotated.view((0, 0), (2 * x, 2 * x)).into_owned(),
        s_y: rotated.view((2 * x, 2 * x), (2 * y, 2 * y)).into_owned(),
        s_xy: rotated.view((0, 2 * x), (2 * x, 2 * y)).into_owned(),
        s_yx: rotated.view((2 * x, 0), (2 * y, 2 * x)).into_owned(),
        bulk_values,
    };
    debug_assert!(partition.r_x.nrows() == 0 || (partition.r_x.determinant() - 1.0).abs() < 1e-12);
    Ok(partition)
}

/// Result of projecting out the unit modes of one state.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub prefactor: f64,
    pub r_y: CorrelationMatrix,
    pub s_y: CorrelationMatrix,
}

/// `F(ρ_R, ρ_S) = det((1 + R_X S_X)/2)^{1/4} F(ρ_{R_Y}, ρ_{S̃_Y})` with
/// `S̃_Y = S_Y - S_{YX} R_X (1 + S_X R_X)⁻¹ S_{XY}`.
///
/// Returns [`Error::Orthogonal`] when the unit sector of `R` is orthogonal to
/// `S`, in which case the fidelity is exactly zero.
pub fn reduce_unit_modes(partition: &ModePartition) -> Result<Reduction> {
    let x = partition.unit_count();
    let y = partition.bulk_count();
    if x == 0 || y == 0 {
        return Err(Error::Invalid(format!(
            "reduction needs a proper partition, got x = {x}, y = {y}"
        )));
    }
    let rx = &partition.r_x;
    if (rx.determinant() - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid("det R_X must be 1".into()));
    }
    // With Γ = i m: 1 + R_X S_X = 1 - r_x s_x.
    let det = (real_identity_minus_product(rx, &partition.s_x) * 0.5).determinant();
    if det < -1e-12 {
        return Err(Error::NegativeDeterminant(det));
    }
    if det < ORTHOGONAL_DET {
        return Err(Error::Orthogonal);
    }
    let prefactor = det.powf(0.25).min(1.0);
    let inner = real_identity_minus_product(&partition.s_x, rx);
    let inv = inner
        .try_inverse()
        .ok_or(Error::Singular("1 + S_X R_X in unit-mode reduction"))?;
    // S̃_Y = S_Y - S_YX R_X (1 + S_X R_X)⁻¹ S_XY, and the three factors of i
    // leave s̃ = s_y + s_yx r_x (1 - s_x r_x)⁻¹ s_xy.
    let reduced = &partition.s_y + &partition.s_yx * rx * inv * &partition.s_xy;
    let s_y = CorrelationMatrix::from_computed(reduced)?;
    let r_y = CorrelationMatrix {
        m: partition.r_y.clone(),
        canonical: CanonicalForm {
            rotation: Mat::identity(2 * y, 2 * y),
            pair_values: partition.bulk_values.clone(),
        },
    };
    Ok(Reduction { prefactor, r_y, s_y })
}

/// Which formula a fidelity evaluation ended in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    SingleMode,
    Regular,
    Pure,
    /// At least one reduction step before reaching a terminal branch.
    Reduced,
    Orthogonal,
}

/// Fidelity `tr √(√ρ₁ ρ₂ √ρ₁)` between two Gaussian states.
pub fn fidelity(g1: &CorrelationMatrix, g2: &CorrelationMatrix) -> Result<f64> {
    fidelity_traced(g1, g2).map(|(f, _)| f)
}

/// [`fidelity`], also reporting the branch taken (the first branch when a
/// reduction happened).
pub fn fidelity_traced(g1: &CorrelationMatrix, g2: &CorrelationMatrix) -> Result<(f64, Branch)> {
    same_modes(g1, g2)?;
    let mut acc = 1.0;
    let mut reduced = false;
    let mut r = g1.clone();
    let mut s = g2.clone();
    loop {
        let tag = |b: Branch| if reduced { Branch::Reduced } else { b };
        if r.modes() == 1 {
            let f = fidelity_single_mode(r.matrix()[(0, 1)], s.matrix()[(0, 1)])?;
            return Ok((acc * f, tag(Branch::SingleMode)));
        }
        let (ur, us) = (r.unit_pairs(), s.unit_pairs());
        let ell = r.modes();
        if ur == ell || us == ell {
            let f = fidelity_pure(&r, &s)?;
            let branch = if f == 0.0 { Branch::Orthogonal } else { tag(Branch::Pure) };
            return Ok((acc * f, branch));
        }
        if ur == 0 && us == 0 {
            return Ok((acc * fidelity_regular(&r, &s)?, tag(Branch::Regular)));
        }
        // Reduce on the state with more unit pairs; ties go to the first.
        if us > ur {
            std::mem::swap(&mut r, &mut s);
        }
        let partition = classify_modes(&r, &s, UNIT_TOL)?;
        match reduce_unit_modes(&partition) {
            Ok(red) => {
                acc *= red.prefactor;
                r = red.r_y;
                s = red.s_y;
                reduced = true;
            }
            Err(Error::Orthogonal) | Err(Error::Singular(_)) => return Ok((0.0, Branch::Orthogonal)),
            Err(e) => return Err(e),
        }
    }
}

/// Bures distance `√(2(1 - F))`.
pub fn bures_distance(g1: &CorrelationMatrix, g2: &CorrelationMatrix) -> Result<f64> {
    let f = fidelity(g1, g2)?;
    Ok((2.0 * (1.0 - f)).max(0.0).sqrt())
}
