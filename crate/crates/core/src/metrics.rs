//! Sample-based disentanglement metrics.
//!
//! MIG: for each ground-truth factor, normalize the plug-in mutual
//! information with every (discretized) latent by the factor's empirical
//! entropy, then take the gap between the two largest values. The score is
//! the mean gap over factors with non-zero entropy.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::{ProbError, ProbTable, Variable};

/// Histogram bins per latent when none is given.
pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("MIG needs at least two latents")]
    TooFewLatents,
    #[error("representation dump needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("factor {factor} has value {value} outside [0, {cardinality})")]
    FactorOutOfRange {
        factor: usize,
        value: usize,
        cardinality: usize,
    },
    #[error("every ground-truth factor is constant")]
    NoInformativeFactor,
    #[error("count must be positive")]
    ZeroCount,
    #[error("malformed dump: {0}")]
    Format(String),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Interior edges of `bins` equal-width bins over `[min, max]`; empty for a
/// constant column.
pub fn equal_width_edges(column: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(MetricsError::TooFewBins(bins));
    }
    if let Some(i) = column.iter().position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let (lo, hi) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return Ok(Vec::new());
    }
    let width = (hi - lo) / bins as f64;
    Ok((1..bins).map(|k| lo + k as f64 * width).collect())
}

/// Bin index of each value: the number of interior edges `<=` it.
pub fn discretize_with_edges(column: &[f64], edges: &[f64]) -> Vec<usize> {
    column.iter().map(|&v| edges.partition_point(|&e| e <= v)).collect()
}

/// Equal-width binning over `[min, max]`; the maximum lands in the top bin
/// and a constant column maps entirely to bin 0.
pub fn discretize(column: &[f64], bins: usize) -> Result<Vec<usize>> {
    Ok(discretize_with_edges(column, &equal_width_edges(column, bins)?))
}

fn contingency(codes: &[usize], labels: &[usize]) -> Result<ProbTable> {
    if codes.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(codes.len(), labels.len()));
    }
    if codes.is_empty() {
        return Err(MetricsError::TooFewRows(0));
    }
    let cc = codes.iter().max().map_or(1, |m| m + 1);
    let lc = labels.iter().max().map_or(1, |m| m + 1);
    let mut counts = vec![0.0; cc * lc];
    for (&c, &l) in codes.iter().zip(labels) {
        counts[c * lc + l] += 1.0;
    }
    Ok(ProbTable::from_weights(
        vec![Variable::new("code", cc), Variable::new("label", lc)],
        counts,
    )?)
}

/// Plug-in mutual information of two integer columns, in nats.
pub fn empirical_mi(codes: &[usize], labels: &[usize]) -> Result<f64> {
    Ok(contingency(codes, labels)?.mutual_information(&["code"], &["label"])?)
}

/// Plug-in entropy of an integer column, in nats.
pub fn empirical_entropy(labels: &[usize]) -> Result<f64> {
    Ok(contingency(labels, labels)?.entropy(&["label"])?)
}

/// Latent codes paired with ground-truth factor labels, one row per datum.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationDump {
    latents: Vec<Vec<f64>>,
    factors: Vec<Vec<usize>>,
    factor_cardinalities: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DumpSidecar {
    factor_cardinalities: Vec<usize>,
}

impl RepresentationDump {
    pub fn new(latents: Vec<Vec<f64>>, factors: Vec<Vec<usize>>, factor_cardinalities: Vec<usize>) -> Result<Self> {
        let n = latents.len();
        if n < 2 {
            return Err(MetricsError::TooFewRows(n));
        }
        if factors.len() != n {
            return Err(MetricsError::LengthMismatch(n, factors.len()));
        }
        let j = latents[0].len();
        let k = factor_cardinalities.len();
        for (row, (z, f)) in latents.iter().zip(&factors).enumerate() {
            if z.len() != j {
                return Err(MetricsError::LengthMismatch(j, z.len()));
            }
            if f.len() != k {
                return Err(MetricsError::LengthMismatch(k, f.len()));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(MetricsError::NonFinite(row));
            }
            for (factor, (&value, &cardinality)) in f.iter().zip(&factor_cardinalities).enumerate() {
                if value >= cardinality {
                    return Err(MetricsError::FactorOutOfRange {
                        factor,
                        value,
                        cardinality,
                    });
                }
            }
        }
        Ok(Self {
            latents,
            factors,
            factor_cardinalities,
        })
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.latents[0].len()
    }

    pub fn factor_count(&self) -> usize {
        self.factor_cardinalities.len()
    }

    pub fn latents(&self) -> &[Vec<f64>] {
        &self.latents
    }

    pub fn factors(&self) -> &[Vec<usize>] {
        &self.factors
    }

    pub fn factor_cardinalities(&self) -> &[usize] {
        &self.factor_cardinalities
    }

    pub fn latent_column(&self, j: usize) -> Vec<f64> {
        self.latents.iter().map(|z| z[j]).collect()
    }

    pub fn factor_column(&self, k: usize) -> Vec<usize> {
        self.factors.iter().map(|f| f[k]).collect()
    }

    /// CSV with header `latent_0..,factor_0..`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.latent_dim())
            .map(|j| format!("latent_{j}"))
            .chain((0..self.factor_count()).map(|k| format!("factor_{k}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (z, f) in self.latents.iter().zip(&self.factors) {
            let cells: Vec<String> = z
                .iter()
                .map(|v| v.to_string())
                .chain(f.iter().map(|v| v.to_string()))
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Parses the CSV form; cardinalities come from the sidecar.
    pub fn read_csv<R: BufRead>(r: R, factor_cardinalities: Vec<usize>) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| MetricsError::Format("empty file".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let j = cols.iter().take_while(|c| c.starts_with("latent_")).count();
        let k = cols.len() - j;
        for (i, c) in cols[..j].iter().enumerate() {
            if *c != format!("latent_{i}") {
                return Err(MetricsError::Format(format!("unexpected column `{c}`")));
            }
        }
        for (i, c) in cols[j..].iter().enumerate() {
            if *c != format!("factor_{i}") {
                return Err(MetricsError::Format(format!("unexpected column `{c}`")));
            }
        }
        if k != factor_cardinalities.len() {
            return Err(MetricsError::Format(format!(
                "{k} factor columns but {} cardinalities",
                factor_cardinalities.len()
            )));
        }
        let mut latents = Vec::new();
        let mut factors = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != j + k {
                return Err(MetricsError::Format(format!("row {n} has {} cells", cells.len())));
            }
            let bad = |c: &str| MetricsError::Format(format!("row {n}: cannot parse `{c}`"));
            latents.push(
                cells[..j]
                    .iter()
                    .map(|c| c.parse::<f64>().map_err(|_| bad(c)))
                    .collect::<Result<Vec<_>>>()?,
            );
            factors.push(
                cells[j..]
                    .iter()
                    .map(|c| c.parse::<usize>().map_err(|_| bad(c)))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Self::new(latents, factors, factor_cardinalities)
    }

    /// Writes `<stem>.csv` and `<stem>.json` (cardinalities).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let file = std::fs::File::create(stem.with_extension("csv"))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let sidecar = DumpSidecar {
            factor_cardinalities: self.factor_cardinalities.clone(),
        };
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let sidecar: DumpSidecar = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let file = std::fs::File::open(stem.with_extension("csv"))?;
        Self::read_csv(std::io::BufReader::new(file), sidecar.factor_cardinalities)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MigReport {
    pub score: f64,
    /// `None` for constant factors, which are left out of the mean.
    pub per_factor_gap: Vec<Option<f64>>,
    /// K × J normalized MI, clamped to `[0, 1]`.
    pub mi_matrix: Vec<Vec<f64>>,
    /// The same values before clamping.
    pub raw_mi_matrix: Vec<Vec<f64>>,
}

/// Mutual information gap of `dump` with `bins` equal-width bins per latent.
pub fn mig(dump: &RepresentationDump, bins: usize) -> Result<MigReport> {
    let edges = (0..dump.latent_dim())
        .map(|d| equal_width_edges(&dump.latent_column(d), bins))
        .collect::<Result<Vec<_>>>()?;
    mig_with_edges(dump, &edges)
}

/// Mutual information gap with caller-supplied interior bin edges per latent.
pub fn mig_with_edges(dump: &RepresentationDump, edges: &[Vec<f64>]) -> Result<MigReport> {
    let j = dump.latent_dim();
    if j < 2 {
        return Err(MetricsError::TooFewLatents);
    }
    if edges.len() != j {
        return Err(MetricsError::LengthMismatch(edges.len(), j));
    }
    let codes: Vec<Vec<usize>> = (0..j)
        .map(|d| discretize_with_edges(&dump.latent_column(d), &edges[d]))
        .collect();

    let k = dump.factor_count();
    let mut per_factor_gap = Vec::with_capacity(k);
    let mut mi_matrix = Vec::with_capacity(k);
    let mut raw_mi_matrix = Vec::with_capacity(k);
    for f in 0..k {
        let labels = dump.factor_column(f);
        let h = empirical_entropy(&labels)?;
        if h <= 0.0 {
            log::warn!("factor {f} has zero entropy; excluded from MIG");
            per_factor_gap.push(None);
            mi_matrix.push(vec![0.0; j]);
            raw_mi_matrix.push(vec![0.0; j]);
            continue;
        }
        let raw: Vec<f64> = codes
            .iter()
            .map(|c| empirical_mi(c, &labels).map(|mi| mi / h))
            .collect::<Result<_>>()?;
        let clamped: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let mut sorted = clamped.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        per_factor_gap.push(Some(sorted[0] - sorted[1]));
        mi_matrix.push(clamped);
        raw_mi_matrix.push(raw);
    }
    let gaps: Vec<f64> = per_factor_gap.iter().flatten().copied().collect();
    if gaps.is_empty() {
        return Err(MetricsError::NoInformativeFactor);
    }
    Ok(MigReport {
        score: gaps.iter().sum::<f64>() / gaps.len() as f64,
        per_factor_gap,
        mi_matrix,
        raw_mi_matrix,
    })
}

/// Per-datum reconstruction and KL, from accumulated sums.
///
/// `kl` is the diagonal KL actually optimized; `kl_offset` is the constant
/// that the correlated posterior adds on top and is never folded in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub recon: f64,
    pub kl: f64,
    pub kl_offset: f64,
}

pub fn reconstruction_and_kl(recon_sum: f64, kl_sum: f64, count: usize, kl_offset: f64) -> Result<LossSummary> {
    if count == 0 {
        return Err(MetricsError::ZeroCount);
    }
    let n = count as f64;
    Ok(LossSummary {
        recon: recon_sum / n,
        kl: kl_sum / n,
        kl_offset,
    })
}
