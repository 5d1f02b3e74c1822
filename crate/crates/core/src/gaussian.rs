//! Closed-form multivariate Gaussian machinery for correlated posteriors.
//!
//! The reparameterization noise is `ε ~ N(0, Σ)` with the equicorrelation
//! matrix `Σ = (1 − σ)I + σ11ᵀ`. Scaling by a per-datum standard deviation
//! gives the posterior `N(μ, diag(s) Σ diag(s))`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A Cholesky pivot below this fraction of the largest diagonal entry is
/// treated as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("correlation weight {0} outside [0, 1)")]
    InvalidCorrelation(f64),
    #[error("latent dimension must be >= 1")]
    ZeroDimension,
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is not square or symmetric")]
    NotSymmetric,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("scale entries must be strictly positive and finite")]
    NonPositiveScale,
    #[error("noise scale must be > 0, got {0}")]
    NonPositiveNoise(f64),
}

pub type Result<T> = std::result::Result<T, GaussianError>;

/// Dense square matrix, row-major. Serializes as an array of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = GaussianError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.data.chunks(m.n.max(1)).map(<[f64]>::to_vec).collect()
    }
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(GaussianError::NotSymmetric);
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// `diag(d) · self · diag(d)`.
    pub fn scale_symmetric(&self, d: &[f64]) -> Matrix {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                out[(i, j)] *= d[i] * d[j];
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_symmetric(1e-12 * max_abs_diagonal(a).max(1.0)) {
            return Err(GaussianError::NotSymmetric);
        }
        let n = a.dim();
        let floor = PIVOT_TOLERANCE * max_abs_diagonal(a);
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut pivot = a[(j, j)];
            for k in 0..j {
                pivot -= l[(j, k)] * l[(j, k)];
            }
            if !(pivot > floor) {
                return Err(GaussianError::NotPositiveDefinite { row: j, pivot });
            }
            let d = pivot.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L · u`.
    pub fn mul_lower(&self, u: &[f64], out: &mut [f64]) {
        let n = self.lower.dim();
        for i in 0..n {
            out[i] = self.lower.row(i)[..=i].iter().zip(u).map(|(a, b)| a * b).sum();
        }
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let n = self.lower.dim();
        for i in 0..n {
            let row = self.lower.row(i);
            let s: f64 = row[..i].iter().zip(&b[..i]).map(|(a, y)| a * y).sum();
            b[i] = (b[i] - s) / row[i];
        }
    }
}

fn max_abs_diagonal(a: &Matrix) -> f64 {
    a.diagonal().iter().fold(0.0, |m, d| m.max(d.abs()))
}

/// Dimension and correlation weight of the noise law, with its Cholesky
/// factor computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedNoiseSpec {
    latent_dim: usize,
    sigma: f64,
    chol: Cholesky,
}

impl CorrelatedNoiseSpec {
    pub fn new(latent_dim: usize, sigma: f64) -> Result<Self> {
        if latent_dim == 0 {
            return Err(GaussianError::ZeroDimension);
        }
        if !(0.0..1.0).contains(&sigma) {
            return Err(GaussianError::InvalidCorrelation(sigma));
        }
        let chol = Cholesky::factor(&equicorrelation(latent_dim, sigma))?;
        Ok(Self {
            latent_dim,
            sigma,
            chol,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// `Σ = (1 − σ)I + σ11ᵀ`.
    pub fn covariance(&self) -> Matrix {
        equicorrelation(self.latent_dim, self.sigma)
    }

    /// Eigenvalues of `Σ`: `1 − σ` (multiplicity `J − 1`) and `1 + (J − 1)σ`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let j = self.latent_dim;
        let mut ev = vec![1.0 - self.sigma; j - 1];
        ev.push(1.0 + (j as f64 - 1.0) * self.sigma);
        ev
    }

    /// `log det Σ` from the eigenstructure.
    pub fn log_det(&self) -> f64 {
        let j = self.latent_dim as f64;
        (j - 1.0) * (1.0 - self.sigma).ln() + (1.0 + (j - 1.0) * self.sigma).ln()
    }

    /// `log det Σ` from the cached factor; used to cross-check [`Self::log_det`].
    pub fn cholesky_log_det(&self) -> f64 {
        self.chol.log_det()
    }

    /// `½ log(1 / det Σ)`: the KL gap between the correlated posterior and
    /// its diagonal counterpart.
    pub fn kl_offset(&self) -> f64 {
        -0.5 * self.log_det()
    }

    /// Fills `out` with one draw `L u`, `u ~ N(0, I)`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.latent_dim);
        let u: Vec<f64> = (0..self.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
        self.chol.mul_lower(&u, out);
    }

    /// `count` independent draws, one row each.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let mut e = vec![0.0; self.latent_dim];
                self.sample_into(rng, &mut e);
                e
            })
            .collect()
    }
}

fn equicorrelation(j: usize, sigma: f64) -> Matrix {
    let mut m = Matrix::zeros(j);
    for a in 0..j {
        for b in 0..j {
            m[(a, b)] = if a == b { 1.0 } else { sigma };
        }
    }
    m
}

/// Builds the correlation matrix for `(J, σ)`.
pub fn build_correlation(spec: &CorrelatedNoiseSpec) -> Matrix {
    spec.covariance()
}

/// Per-datum encoder output: mean `μ(x)` and standard deviation `s(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    mu: Vec<f64>,
    scale: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mu: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mu.len() != scale.len() {
            return Err(GaussianError::DimensionMismatch {
                expected: mu.len(),
                actual: scale.len(),
            });
        }
        if mu.is_empty() {
            return Err(GaussianError::ZeroDimension);
        }
        if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(GaussianError::NonPositiveScale);
        }
        Ok(Self { mu, scale })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// `z = μ + s ⊙ ε`.
    pub fn reparameterize(&self, eps: &[f64]) -> Result<Vec<f64>> {
        reparameterize(self, eps)
    }

    /// KL from the diagonal posterior `N(μ, diag(s²))` to `N(0, I)`.
    pub fn diagonal_kl(&self) -> f64 {
        diagonal_kl(&self.mu, &self.scale)
    }
}

/// `z = μ + s ⊙ ε`.
pub fn reparameterize(post: &GaussianPosterior, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != post.dim() {
        return Err(GaussianError::DimensionMismatch {
            expected: post.dim(),
            actual: eps.len(),
        });
    }
    Ok(post
        .mu
        .iter()
        .zip(&post.scale)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// `½ Σ (μ² + s² − 1 − 2 log s)`.
pub fn diagonal_kl(mu: &[f64], scale: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(scale)
        .map(|(m, s)| m * m + s * s - 1.0 - 2.0 * s.ln())
        .sum::<f64>()
}

/// A multivariate normal with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    mean: Vec<f64>,
    cov: Matrix,
    chol: Cholesky,
}

impl GaussianDist {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(GaussianError::DimensionMismatch {
                expected: cov.dim(),
                actual: mean.len(),
            });
        }
        let chol = Cholesky::factor(&cov)?;
        Ok(Self { mean, cov, chol })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], Matrix::identity(dim)).expect("identity is SPD")
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let mut r: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.chol.solve_lower(&mut r);
        let maha: f64 = r.iter().map(|x| x * x).sum();
        -0.5 * (self.dim() as f64 * LN_2PI + self.chol.log_det() + maha)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = vec![0.0; self.dim()];
        self.chol.mul_lower(&u, &mut out);
        out.iter_mut().zip(&self.mean).for_each(|(o, m)| *o += m);
        out
    }
}

/// `N(μ, diag(s) Σ diag(s))`.
pub fn posterior_distribution(post: &GaussianPosterior, spec: &CorrelatedNoiseSpec) -> Result<GaussianDist> {
    if post.dim() != spec.latent_dim() {
        return Err(GaussianError::DimensionMismatch {
            expected: spec.latent_dim(),
            actual: post.dim(),
        });
    }
    GaussianDist::new(post.mu.clone(), spec.covariance().scale_symmetric(&post.scale))
}

/// `KL(N(m, C) ‖ N(0, I)) = ½(−log det C − J + tr C + mᵀm)`.
pub fn kl_to_standard_normal(dist: &GaussianDist) -> f64 {
    let j = dist.dim() as f64;
    let mm: f64 = dist.mean.iter().map(|m| m * m).sum();
    0.5 * (-dist.chol.log_det() - j + dist.cov.trace() + mm)
}

/// `½ log(1 / det Σ)`.
pub fn kl_offset(spec: &CorrelatedNoiseSpec) -> f64 {
    spec.kl_offset()
}

/// `½ log(Π C_jj / det C)`.
pub fn gaussian_total_correlation(dist: &GaussianDist) -> f64 {
    let diag_log: f64 = dist.cov.diagonal().iter().map(|d| d.ln()).sum();
    0.5 * (diag_log - dist.chol.log_det())
}

/// `I(x; x + s·ε) = ½ log det(C / s² + I)` for Gaussian signal `x ~ N(0, C)`.
///
/// Grows without bound as `s → 0`: a deterministic encoder has infinite
/// mutual information with continuous data.
pub fn linear_gaussian_mi(signal_cov: &Matrix, noise_scale: f64) -> Result<f64> {
    if !(noise_scale > 0.0) {
        return Err(GaussianError::NonPositiveNoise(noise_scale));
    }
    let inv = 1.0 / (noise_scale * noise_scale);
    let mut m = signal_cov.clone();
    for i in 0..m.dim() {
        for j in 0..m.dim() {
            m[(i, j)] *= inv;
        }
        m[(i, i)] += 1.0;
    }
    Ok(0.5 * Cholesky::factor(&m)?.log_det())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol})");
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut a = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut c = a.matmul(&a.transpose());
        for i in 0..n {
            c[(i, i)] += 0.5;
        }
        c
    }

    #[test]
    fn correlation_matrix_values() {
        let id = CorrelatedNoiseSpec::new(3, 0.0).unwrap().covariance();
        assert_eq!(id, Matrix::identity(3));

        let s = CorrelatedNoiseSpec::new(2, 0.9).unwrap();
        let m = build_correlation(&s);
        assert_eq!(m.row(0), &[1.0, 0.9]);
        assert_eq!(m.row(1), &[0.9, 1.0]);
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        close(det, 0.19, 1e-15);
        close(s.log_det().exp(), det, 1e-14);
    }

    #[test]
    fn j10_determinant_two_routes() {
        let s = CorrelatedNoiseSpec::new(10, 0.9).unwrap();
        let eig: f64 = s.eigenvalues().iter().product();
        close(eig, 0.1f64.powi(9) * 9.1, 1e-20);
        let chol_det: f64 = s.cholesky().lower().diagonal().iter().map(|d| d * d).product();
        assert!((chol_det - eig).abs() / eig < 1e-10);
    }

    #[test]
    fn invalid_sigma_rejected() {
        assert_eq!(
            CorrelatedNoiseSpec::new(3, 1.0),
            Err(GaussianError::InvalidCorrelation(1.0))
        );
        assert_eq!(
            CorrelatedNoiseSpec::new(3, -0.1),
            Err(GaussianError::InvalidCorrelation(-0.1))
        );
        assert_eq!(CorrelatedNoiseSpec::new(0, 0.1), Err(GaussianError::ZeroDimension));
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(CorrelatedNoiseSpec::new(5, 0.0).unwrap().log_det(), 0.0);
        let s = CorrelatedNoiseSpec::new(2, 0.9).unwrap();
        close(s.log_det(), 0.19f64.ln(), 1e-14);
        close(s.log_det(), -1.660_731_206_821_651, 1e-12);
        let s = CorrelatedNoiseSpec::new(4, 0.5).unwrap();
        close(s.log_det(), 3.0 * 0.5f64.ln() + 2.5f64.ln(), 1e-14);
        close(s.cholesky_log_det(), s.log_det(), 1e-10);
    }

    #[test]
    fn eigen_identities_hold_through_j12() {
        // trace and det of Σ against the claimed spectrum.
        for j in 1..=12 {
            for &sigma in &[0.0, 0.3, 0.5, 0.9, 0.99] {
                let s = CorrelatedNoiseSpec::new(j, sigma).unwrap();
                let ev = s.eigenvalues();
                let tr: f64 = ev.iter().sum();
                close(tr, s.covariance().trace(), 1e-10);
                let sq = s.covariance().matmul(&s.covariance()).trace();
                close(ev.iter().map(|e| e * e).sum(), sq, 1e-10);
                close(s.cholesky_log_det(), s.log_det(), 1e-10);
            }
        }
    }

    #[test]
    fn reparameterize_examples() {
        let p = GaussianPosterior::new(vec![1.0, 2.0], vec![0.5, 2.0]).unwrap();
        assert_eq!(p.reparameterize(&[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(p.reparameterize(&[2.0, -1.0]).unwrap(), vec![2.0, 0.0]);
        let std = GaussianPosterior::standard(3);
        assert_eq!(std.reparameterize(&[0.1, -0.2, 3.0]).unwrap(), vec![0.1, -0.2, 3.0]);
        assert!(matches!(
            p.reparameterize(&[1.0]),
            Err(GaussianError::DimensionMismatch { .. })
        ));
        assert_eq!(
            GaussianPosterior::new(vec![0.0], vec![0.0]),
            Err(GaussianError::NonPositiveScale)
        );
    }

    #[test]
    fn posterior_covariance_examples() {
        let p = GaussianPosterior::new(vec![0.0, 0.0], vec![2.0, 3.0]).unwrap();
        let d = posterior_distribution(&p, &CorrelatedNoiseSpec::new(2, 0.5).unwrap()).unwrap();
        assert_eq!(d.cov().row(0), &[4.0, 3.0]);
        assert_eq!(d.cov().row(1), &[3.0, 9.0]);
        let d0 = posterior_distribution(&p, &CorrelatedNoiseSpec::new(2, 0.0).unwrap()).unwrap();
        assert_eq!(d0.cov(), &Matrix::from_diagonal(&[4.0, 9.0]));
        let spec = CorrelatedNoiseSpec::new(3, 0.7).unwrap();
        let d1 = posterior_distribution(&GaussianPosterior::standard(3), &spec).unwrap();
        assert_eq!(d1.cov(), &spec.covariance());
    }

    #[test]
    fn kl_examples() {
        close(kl_to_standard_normal(&GaussianDist::standard(4)), 0.0, 1e-15);
        let d = GaussianDist::new(vec![1.0, 0.0], Matrix::identity(2)).unwrap();
        close(kl_to_standard_normal(&d), 0.5, 1e-15);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cov = random_spd(3, &mut rng);
        let mean = vec![0.3, -0.2, 0.5];
        let d = GaussianDist::new(mean, cov).unwrap();
        let prior = GaussianDist::standard(3);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z = d.sample(&mut rng);
            acc += d.log_density(&z) - prior.log_density(&z);
        }
        close(acc / n as f64, kl_to_standard_normal(&d), 1e-2);
    }

    #[test]
    fn not_positive_definite_reported() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let err = GaussianDist::new(vec![0.0, 0.0], m).unwrap_err();
        assert!(err.to_string().contains("not positive definite"));
    }

    #[test]
    fn offset_examples() {
        assert_eq!(kl_offset(&CorrelatedNoiseSpec::new(6, 0.0).unwrap()), 0.0);
        let s = CorrelatedNoiseSpec::new(2, 0.9).unwrap();
        close(kl_offset(&s), -0.5 * 0.19f64.ln(), 1e-14);
        close(kl_offset(&s), 0.830_365_603_410_825_5, 1e-12);
    }

    #[test]
    fn offset_identity_random_posteriors() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let spec = CorrelatedNoiseSpec::new(10, 0.9).unwrap();
        let diag = CorrelatedNoiseSpec::new(10, 0.0).unwrap();
        for _ in 0..100 {
            let mu: Vec<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let scale: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..3.0)).collect();
            let p = GaussianPosterior::new(mu, scale).unwrap();
            let corr = kl_to_standard_normal(&posterior_distribution(&p, &spec).unwrap());
            let plain = kl_to_standard_normal(&posterior_distribution(&p, &diag).unwrap());
            close(corr - plain, kl_offset(&spec), 1e-9);
            close(plain, p.diagonal_kl(), 1e-9);
        }
    }

    #[test]
    fn gaussian_tc_examples() {
        let d = GaussianDist::new(vec![0.0; 3], Matrix::from_diagonal(&[1.0, 4.0, 0.3])).unwrap();
        close(gaussian_total_correlation(&d), 0.0, 1e-12);
        let s = CorrelatedNoiseSpec::new(2, 0.9).unwrap();
        let d = GaussianDist::new(vec![0.0; 2], s.covariance()).unwrap();
        close(gaussian_total_correlation(&d), 0.830_365_603_410_825_5, 1e-12);
    }

    #[test]
    fn gaussian_tc_matches_grid_quadrature() {
        use crate::prob::{ProbTable, Variable};
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cov = random_spd(2, &mut rng);
        let d = GaussianDist::new(vec![0.0, 0.0], cov.clone()).unwrap();
        // Fine grid over ±6 sd; the discretized TC converges to the
        // continuous one since bin-width terms cancel.
        let n = 400;
        let sx = cov[(0, 0)].sqrt();
        let sy = cov[(1, 1)].sqrt();
        let axis = |s: f64, i: usize| -6.0 * s + 12.0 * s * (i as f64 + 0.5) / n as f64;
        let t = ProbTable::from_fn(vec![Variable::new("a", n), Variable::new("b", n)], |a| {
            d.log_density(&[axis(sx, a[0]), axis(sy, a[1])]).exp()
        })
        .unwrap();
        let grid_tc = t.total_correlation(&["a", "b"]).unwrap();
        close(grid_tc, gaussian_total_correlation(&d), 0.02);
    }

    #[test]
    fn linear_gaussian_mi_examples() {
        let one = Matrix::identity(1);
        close(linear_gaussian_mi(&one, 1.0).unwrap(), 0.5 * 2f64.ln(), 1e-14);
        close(0.5 * 2f64.ln(), 0.346_573_590_279_972_6, 1e-12);
        assert!(linear_gaussian_mi(&one, 1e-6).unwrap() > 13.0);
        assert!(linear_gaussian_mi(&one, 0.0).is_err());
        assert!(linear_gaussian_mi(&one, -1.0).is_err());
        let big: Vec<f64> = [1e1, 1e2, 1e3, 1e4]
            .iter()
            .map(|&s| linear_gaussian_mi(&one, s).unwrap())
            .collect();
        assert!(big.windows(2).all(|w| w[1] < w[0]));
        assert!(big[3] < 1e-7);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let s = CorrelatedNoiseSpec::new(2, 0.9).unwrap();
        let a = s.sample(3, &mut ChaCha8Rng::seed_from_u64(42));
        let b = s.sample(3, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn matrix_json_is_rows() {
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 2.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.0,0.5],[0.5,2.0]]");
        assert_eq!(serde_json::from_str::<Matrix>(&s).unwrap(), m);
    }
}
