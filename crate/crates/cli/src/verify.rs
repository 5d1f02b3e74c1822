//! Property-verification suites over a fixed bank of seeds. None of them
//! needs a trained model.

use std::path::Path;
use std::str::FromStr;

use condind_core::gaussian::{
    diagonal_kl, kl_to_standard_normal, linear_gaussian_mi, posterior_distribution, CorrelatedNoiseSpec,
    GaussianPosterior, Matrix,
};
use condind_core::prob::{infogan_decomposition, ConditionalTable, ProbTable, Result as ProbResult, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::CliError;

pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const KL_OFFSET_TOLERANCE: f64 = 1e-9;
pub const LOG_DET_TOLERANCE: f64 = 1e-10;
pub const CORRELATION_TOLERANCE: f64 = 0.02;
pub const CORRELATION_DRAWS: usize = 100_000;
/// The sampling suite uses only the first few seeds of the bank.
pub const CORRELATION_SEEDS: usize = 10;
/// Floor on the surrogate MI at the smallest noise scale, in nats.
pub const MI_FLOOR: f64 = 13.0;
pub const DEFAULT_BANK_SIZE: u64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    ChainRule,
    InformationGap,
    CorrelatedSampling,
    KlOffset,
    InfoganDecomp,
    MiDivergence,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [
        Suite::ChainRule,
        Suite::InformationGap,
        Suite::CorrelatedSampling,
        Suite::KlOffset,
        Suite::InfoganDecomp,
        Suite::MiDivergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::ChainRule => "chain_rule",
            Suite::InformationGap => "theorem1",
            Suite::CorrelatedSampling => "lemma2",
            Suite::KlOffset => "kl_offset",
            Suite::InfoganDecomp => "infogan_decomp",
            Suite::MiDivergence => "mi_divergence",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Suite::EACH
            .iter()
            .chain(&[Suite::All])
            .find(|suite| suite.name() == s)
            .copied()
            .ok_or_else(|| CliError::Usage(format!("unknown suite `{s}`")))
    }
}

/// Seeds driving every randomized suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedBank(pub Vec<u64>);

impl Default for SeedBank {
    fn default() -> Self {
        Self((0..DEFAULT_BANK_SIZE).collect())
    }
}

impl SeedBank {
    /// Reads a JSON array of unsigned integers.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read seed bank {}: {e}", path.display())))?;
        let seeds: Vec<u64> = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("seed bank: {e}")))?;
        if seeds.is_empty() {
            return Err(CliError::Config("seed bank: must not be empty".into()));
        }
        Ok(Self(seeds))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Suite-specific extras.
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

/// Data variable `x` plus 1–3 latents, Dirichlet(1) weights.
pub fn random_joint(seed: u64) -> (ProbTable, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latents = rng.random_range(1..=3);
    let mut vars = vec![Variable::new("x", rng.random_range(2..=6))];
    let names: Vec<String> = (0..latents).map(|i| format!("z{i}")).collect();
    for n in &names {
        vars.push(Variable::new(n.clone(), rng.random_range(2..=4)));
    }
    let table = ProbTable::random(vars, &mut rng).expect("small table");
    (table, names)
}

fn summarize(suite: Suite, residuals: &[f64], tolerance: f64, details: serde_json::Value) -> SuiteReport {
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    SuiteReport {
        suite: suite.name(),
        cases: residuals.len(),
        max_residual,
        tolerance,
        passed: residuals.iter().all(|r| *r < tolerance),
        details,
    }
}

fn chain_rule(bank: &SeedBank) -> Result<SuiteReport, CliError> {
    let mut residuals = Vec::new();
    for &seed in &bank.0 {
        let (t, latents) = random_joint(seed);
        let names: Vec<&str> = latents.iter().map(String::as_str).collect();
        for (k, j) in names.iter().enumerate() {
            let rest: Vec<&str> = names
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, n)| *n)
                .collect();
            residuals.push(t.verify_chain_rule(&["x"], j, &rest)?.residual);
        }
    }
    Ok(summarize(
        Suite::ChainRule,
        &residuals,
        IDENTITY_TOLERANCE,
        serde_json::Value::Null,
    ))
}

fn information_gap(bank: &SeedBank) -> Result<SuiteReport, CliError> {
    let residuals = bank
        .0
        .iter()
        .map(|&seed| {
            let (t, latents) = random_joint(seed);
            let names: Vec<&str> = latents.iter().map(String::as_str).collect();
            t.verify_theorem1(&["x"], &names).map(|r| r.residual)
        })
        .collect::<ProbResult<Vec<f64>>>()?;
    Ok(summarize(
        Suite::InformationGap,
        &residuals,
        IDENTITY_TOLERANCE,
        serde_json::Value::Null,
    ))
}

fn infogan(bank: &SeedBank) -> Result<SuiteReport, CliError> {
    let mut residuals = Vec::new();
    for &seed in &bank.0 {
        let (t, _) = random_joint(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
        let x = t.variables()[0].clone();
        let factors = t.variables()[1..]
            .iter()
            .map(|v| {
                let mut rows = Vec::with_capacity(x.cardinality * v.cardinality);
                for _ in 0..x.cardinality {
                    let w: Vec<f64> = (0..v.cardinality).map(|_| rng.random_range(0.05..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    rows.extend(w.iter().map(|p| p / s));
                }
                (v.clone(), rows)
            })
            .collect();
        let q = ConditionalTable::from_factors(vec![x], factors)?;
        let report = infogan_decomposition(&t, &q)?;
        residuals.push(report.residual.unwrap_or(f64::INFINITY));
    }
    Ok(summarize(
        Suite::InfoganDecomp,
        &residuals,
        IDENTITY_TOLERANCE,
        serde_json::Value::Null,
    ))
}

fn kl_offset(bank: &SeedBank) -> Result<SuiteReport, CliError> {
    let mut residuals = Vec::new();
    let mut log_det_gap = 0.0f64;
    for &seed in &bank.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in [2usize, 10] {
            for sigma in [0.5, 0.9] {
                let spec = CorrelatedNoiseSpec::new(j, sigma)?;
                let mu: Vec<f64> = (0..j).map(|_| rng.random_range(-3.0..3.0)).collect();
                let s: Vec<f64> = (0..j).map(|_| rng.random_range(0.05..3.0)).collect();
                let post = GaussianPosterior::new(mu.clone(), s.clone())?;
                let full = kl_to_standard_normal(&posterior_distribution(&post, &spec)?);
                let closed = 0.5 * -spec.log_det();
                residuals.push((full - diagonal_kl(&mu, &s) - closed).abs());
                log_det_gap = log_det_gap.max((spec.log_det() - spec.cholesky_log_det()).abs());
            }
        }
    }
    let mut report = summarize(
        Suite::KlOffset,
        &residuals,
        KL_OFFSET_TOLERANCE,
        serde_json::json!({ "max_log_det_gap": log_det_gap, "log_det_tolerance": LOG_DET_TOLERANCE }),
    );
    report.passed &= log_det_gap < LOG_DET_TOLERANCE;
    Ok(report)
}

/// Largest deviation of the sample correlation of `z | x` from `Σ`.
pub fn max_correlation_error(
    spec: &CorrelatedNoiseSpec,
    post: &GaussianPosterior,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let j = spec.latent_dim();
    let mut eps = vec![0.0; j];
    let mut sum = vec![0.0; j];
    let mut cross = vec![0.0; j * j];
    for _ in 0..draws {
        spec.sample_into(rng, &mut eps);
        let z = post.reparameterize(&eps).expect("dimensions match");
        for a in 0..j {
            sum[a] += z[a];
            for b in 0..j {
                cross[a * j + b] += z[a] * z[b];
            }
        }
    }
    let n = draws as f64;
    let cov = |a: usize, b: usize| cross[a * j + b] / n - sum[a] * sum[b] / (n * n);
    let mut worst = 0.0f64;
    for a in 0..j {
        for b in 0..j {
            let corr = cov(a, b) / (cov(a, a) * cov(b, b)).sqrt();
            let target = if a == b { 1.0 } else { spec.sigma() };
            worst = worst.max((corr - target).abs());
        }
    }
    worst
}

fn correlated_sampling(bank: &SeedBank) -> Result<SuiteReport, CliError> {
    let mut residuals = Vec::new();
    for &seed in bank.0.iter().take(CORRELATION_SEEDS) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for sigma in [0.0, 0.9] {
            let spec = CorrelatedNoiseSpec::new(4, sigma)?;
            let mu = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = (0..4).map(|_| rng.random_range(0.1..2.0)).collect();
            let post = GaussianPosterior::new(mu, s)?;
            residuals.push(max_correlation_error(&spec, &post, CORRELATION_DRAWS, &mut rng));
        }
    }
    Ok(summarize(
        Suite::CorrelatedSampling,
        &residuals,
        CORRELATION_TOLERANCE,
        serde_json::json!({ "draws": CORRELATION_DRAWS }),
    ))
}

/// Twelve log-spaced noise scales from 1 down to 1e-6.
pub fn noise_grid() -> Vec<f64> {
    (0..12).map(|k| 10f64.powf(-6.0 * k as f64 / 11.0)).collect()
}

fn mi_divergence() -> Result<SuiteReport, CliError> {
    let signal = Matrix::identity(1);
    let grid = noise_grid();
    let mi = grid
        .iter()
        .map(|&s| linear_gaussian_mi(&signal, s))
        .collect::<Result<Vec<_>, _>>()?;
    let increasing = mi.windows(2).all(|w| w[1] > w[0]);
    let last = *mi.last().expect("non-empty grid");
    Ok(SuiteReport {
        suite: Suite::MiDivergence.name(),
        cases: grid.len(),
        max_residual: (MI_FLOOR - last).max(0.0),
        tolerance: 0.0,
        passed: increasing && last > MI_FLOOR,
        details: serde_json::json!({ "noise_scales": grid, "mi": mi, "strictly_increasing": increasing }),
    })
}

pub fn run_suite(suite: Suite, bank: &SeedBank) -> Result<VerifyReport, CliError> {
    let selected: Vec<Suite> = if suite == Suite::All {
        Suite::EACH.to_vec()
    } else {
        vec![suite]
    };
    let suites = selected
        .into_iter()
        .map(|s| match s {
            Suite::ChainRule => chain_rule(bank),
            Suite::InformationGap => information_gap(bank),
            Suite::CorrelatedSampling => correlated_sampling(bank),
            Suite::KlOffset => kl_offset(bank),
            Suite::InfoganDecomp => infogan(bank),
            Suite::MiDivergence => mi_divergence(),
            Suite::All => unreachable!("expanded above"),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VerifyReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}
