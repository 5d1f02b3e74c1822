//! Monte-Carlo total correlation of the aggregate posterior.
//!
//! The aggregate `q(z)` is approximated by the uniform mixture of the B
//! diagonal posteriors of a batch, and each per-dimension marginal by the
//! matching 1-D mixture. Samples are drawn from every posterior by
//! reparameterization and the log-ratio `r(z) = log q(z) − Σ_j log q(z_j)`
//! is averaged over all `B · B'` draws.
//!
//! The density model always uses the diagonal posteriors, even when the
//! samples were drawn with correlated noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{CorrelatedNoiseSpec, GaussianPosterior};

/// Batch size used for the reported estimates.
pub const DEFAULT_BATCH: usize = 64;
/// Samples drawn per posterior.
pub const DEFAULT_SAMPLES_PER_POSTERIOR: usize = 30;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TcError {
    #[error("posterior batch is empty")]
    EmptyBatch,
    #[error("posterior {index} has dimension {actual}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("point has dimension {actual}, expected {expected}")]
    PointDimension { expected: usize, actual: usize },
    #[error("dimension index {index} out of range for J = {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("samples per posterior must be >= 1")]
    NoSamples,
    #[error("noise spec has dimension {actual}, batch has {expected}")]
    NoiseDimension { expected: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, TcError>;

/// Stable `log Σ exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Diagonal posteriors of one encoded batch.
#[derive(Debug, Clone)]
pub struct PosteriorBatch {
    posteriors: Vec<GaussianPosterior>,
    dim: usize,
    // Dimension-major J × B caches: means, 1/s, and −log s − ½ log 2π.
    mu: Vec<f64>,
    inv_scale: Vec<f64>,
    log_norm: Vec<f64>,
}

impl PosteriorBatch {
    pub fn new(posteriors: Vec<GaussianPosterior>) -> Result<Self> {
        let dim = posteriors.first().ok_or(TcError::EmptyBatch)?.dim();
        for (index, p) in posteriors.iter().enumerate() {
            if p.dim() != dim {
                return Err(TcError::DimensionMismatch {
                    index,
                    expected: dim,
                    actual: p.dim(),
                });
            }
        }
        let column = |f: &dyn Fn(&GaussianPosterior, usize) -> f64| -> Vec<f64> {
            (0..dim).flat_map(|d| posteriors.iter().map(move |p| f(p, d))).collect()
        };
        let mu = column(&|p, d| p.mu()[d]);
        let inv_scale = column(&|p, d| 1.0 / p.scale()[d]);
        let log_norm = column(&|p, d| -p.scale()[d].ln() - HALF_LN_2PI);
        Ok(Self {
            posteriors,
            dim,
            mu,
            inv_scale,
            log_norm,
        })
    }

    pub fn len(&self) -> usize {
        self.posteriors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posteriors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn posteriors(&self) -> &[GaussianPosterior] {
        &self.posteriors
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(TcError::PointDimension {
                expected: self.dim,
                actual: z.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn term(&self, flat: usize, z: f64) -> f64 {
        let u = (z - self.mu[flat]) * self.inv_scale[flat];
        self.log_norm[flat] - 0.5 * u * u
    }

    /// `log (1/B) Σ_i N(z | μ_i, diag(s_i²))`.
    pub fn mixture_log_density(&self, z: &[f64]) -> Result<f64> {
        self.check_point(z)?;
        let (joint, _) = self.evaluate(z, &mut Vec::new(), &mut Vec::new());
        Ok(joint)
    }

    /// `log (1/B) Σ_i N(z_j | μ_ij, s_ij²)`.
    pub fn marginal_log_density(&self, z_j: f64, j: usize) -> Result<f64> {
        if j >= self.dim {
            return Err(TcError::IndexOutOfRange {
                index: j,
                dim: self.dim,
            });
        }
        let b = self.len();
        let terms: Vec<f64> = (j * b..(j + 1) * b).map(|flat| self.term(flat, z_j)).collect();
        Ok(log_sum_exp(&terms) - (self.len() as f64).ln())
    }

    /// `r(z) = log q(z) − Σ_j log q(z_j)`.
    pub fn log_ratio(&self, z: &[f64]) -> Result<f64> {
        self.check_point(z)?;
        let (joint, marginals) = self.evaluate(z, &mut Vec::new(), &mut Vec::new());
        Ok(joint - marginals)
    }

    /// Joint log density and summed marginal log densities in one pass.
    fn evaluate(&self, z: &[f64], terms: &mut Vec<f64>, scratch: &mut Vec<f64>) -> (f64, f64) {
        let b = self.len();
        let log_b = (b as f64).ln();
        terms.clear();
        for (d, &zd) in z.iter().enumerate() {
            terms.extend((d * b..(d + 1) * b).map(|flat| self.term(flat, zd)));
        }

        scratch.clear();
        scratch.resize(b, 0.0);
        let mut marginals = 0.0;
        for column in terms.chunks_exact(b) {
            for (acc, t) in scratch.iter_mut().zip(column) {
                *acc += t;
            }
            marginals += log_sum_exp(column) - log_b;
        }
        let joint = log_sum_exp(scratch) - log_b;
        (joint, marginals)
    }
}

/// A Monte-Carlo total-correlation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcEstimate {
    pub value: f64,
    pub batch_size: usize,
    pub samples_per_posterior: usize,
    /// `stddev(r) / √(B · B')`.
    pub std_error: f64,
}

/// Estimates `TC(z)` from `samples_per_posterior` reparameterized draws per
/// component. Noise follows `noise`; the density model stays diagonal.
///
/// One base seed is drawn from `rng`; posterior `i` then uses its own
/// ChaCha stream `i`, so the result does not depend on thread scheduling.
pub fn estimate_tc<R: Rng + ?Sized>(
    batch: &PosteriorBatch,
    samples_per_posterior: usize,
    noise: &CorrelatedNoiseSpec,
    rng: &mut R,
) -> Result<TcEstimate> {
    if samples_per_posterior == 0 {
        return Err(TcError::NoSamples);
    }
    if noise.latent_dim() != batch.dim() {
        return Err(TcError::NoiseDimension {
            expected: batch.dim(),
            actual: noise.latent_dim(),
        });
    }
    let base_seed: u64 = rng.random();
    let ratios: Vec<f64> = batch
        .posteriors
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, post)| {
            let mut stream = ChaCha8Rng::seed_from_u64(base_seed);
            stream.set_stream(i as u64);
            let mut eps = vec![0.0; batch.dim()];
            let mut terms = Vec::with_capacity(batch.len() * batch.dim());
            let mut scratch = Vec::with_capacity(batch.len());
            (0..samples_per_posterior)
                .map(|_| {
                    noise.sample_into(&mut stream, &mut eps);
                    let z = post.reparameterize(&eps).expect("dimensions checked");
                    let (joint, marg) = batch.evaluate(&z, &mut terms, &mut scratch);
                    joint - marg
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let n = ratios.len() as f64;
    let value = ratios.iter().sum::<f64>() / n;
    let var = if ratios.len() > 1 {
        ratios.iter().map(|r| (r - value).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(TcEstimate {
        value,
        batch_size: batch.len(),
        samples_per_posterior,
        std_error: (var / n).sqrt(),
    })
}
