//! Haar-random pure Gaussian states.
//!
//! A random real orthogonal `U` rotates the reference product state:
//! `m = U (⊕ [[0, -1], [1, 0]]) Uᵀ`, i.e. `Γ = U (⊕ σʸ) Uᵀ`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{all_pairs_average, Metric, PairAverage};
use crate::gaussian::{block_diagonal, CorrelationMatrix, Mat};

/// Haar-distributed orthogonal `n x n` matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal moved into `Q`.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// The pure state `U (⊕ [[0, -1], [1, 0]]) Uᵀ`.
pub fn gamma_from_orthogonal(u: &Mat) -> Result<CorrelationMatrix> {
    let n = u.nrows();
    if n % 2 != 0 || u.ncols() != n {
        return Err(Error::Invalid(format!("need an even square rotation, got {}x{}", n, u.ncols())));
    }
    let reference = block_diagonal(&vec![-1.0; n / 2]);
    CorrelationMatrix::from_computed(u * reference * u.transpose())
}

pub fn random_pure_gamma<R: Rng + ?Sized>(sites: usize, rng: &mut R) -> Result<CorrelationMatrix> {
    gamma_from_orthogonal(&haar_orthogonal(2 * sites, rng))
}

/// Independent generator for state `index`: the seed picks the key, the index
/// picks the stream.
pub fn state_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RandomEnsembleSpec {
    pub sites: usize,
    pub count: usize,
    pub seed: u64,
}

impl RandomEnsembleSpec {
    pub fn new(sites: usize, count: usize, seed: u64) -> Result<Self> {
        if count < 2 {
            return Err(Error::TooFew { needed: 2, got: count });
        }
        if sites == 0 {
            return Err(Error::OutOfRange { what: "sites", value: 0.0 });
        }
        Ok(Self { sites, count, seed })
    }

    pub fn pair_count(&self) -> usize {
        self.count * (self.count - 1) / 2
    }

    /// The ensemble, state `i` drawn from stream `i`.
    pub fn states(&self) -> Result<Vec<CorrelationMatrix>> {
        (0..self.count)
            .into_par_iter()
            .map(|i| random_pure_gamma(self.sites, &mut state_rng(self.seed, i as u64)))
            .collect()
    }
}

/// Average distance over all pairs of the ensemble restricted to the first
/// `ell` sites.
pub fn random_average(
    states: &[CorrelationMatrix],
    ell: usize,
    metric: Metric,
    dense_limit: usize,
) -> Result<PairAverage> {
    let reduced: Vec<CorrelationMatrix> = states
        .par_iter()
        .map(|g| g.subsystem(ell))
        .collect::<Result<_>>()?;
    all_pairs_average(&reduced, metric, dense_limit)
}

/// First column of a Haar rotation, for distribution checks.
pub fn first_column<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    haar_orthogonal(n, rng).column(0).into_owned()
}
