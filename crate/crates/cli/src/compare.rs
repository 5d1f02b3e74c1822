//! Per-sigma summaries of an aggregate CSV.

use std::path::Path;

use serde::Serialize;

use crate::runner::AGGREGATE_HEADER;
use crate::CliError;

pub const DECLINE_CONFIRMED: &str = "decline confirmed";
pub const NO_DECLINE: &str = "no decline";

/// One parsed aggregate row. Metrics are absent for diverged runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub sigma: f64,
    pub seed: u64,
    pub mig: Option<f64>,
    pub recon: Option<f64>,
    pub kl: Option<f64>,
    pub tc: Option<f64>,
    pub seconds: f64,
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaGroup {
    pub sigma: f64,
    pub runs: usize,
    pub diverged: usize,
    pub mig: Option<Quartiles>,
    pub recon: Option<Quartiles>,
    pub kl: Option<Quartiles>,
    pub tc: Option<Quartiles>,
    /// Values behind the quartiles, for plotting.
    #[serde(skip)]
    pub samples: [Vec<f64>; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    /// Ascending sigma.
    pub groups: Vec<SigmaGroup>,
    pub mig_strictly_decreasing: bool,
    pub flag: &'static str,
    /// `|median recon(last) − median recon(first)| / median recon(first)`.
    pub recon_relative_difference: Option<f64>,
    /// Spearman rank correlation between tc and kl over all finished runs.
    pub tc_kl_spearman: Option<f64>,
}

fn optional(field: &str, name: &str, line: u64) -> Result<Option<f64>, CliError> {
    if field.is_empty() {
        return Ok(None);
    }
    number(field, name, line).map(Some)
}

fn number(field: &str, name: &str, line: u64) -> Result<f64, CliError> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Malformed(format!("line {line}: {name} `{field}` is not a finite number")))
}

pub fn parse_aggregate(text: &str) -> Result<Vec<AggregateRow>, CliError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::Malformed(e.to_string()))?;
    if header.iter().ne(AGGREGATE_HEADER) {
        return Err(CliError::Malformed(format!(
            "header must be `{}`, got `{}`",
            AGGREGATE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Malformed(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let seed = record[1]
            .parse()
            .map_err(|_| CliError::Malformed(format!("line {line}: seed `{}` is not an integer", &record[1])))?;
        let status = record[7].to_string();
        if status != "ok" && status != "diverged" {
            return Err(CliError::Malformed(format!("line {line}: unknown status `{status}`")));
        }
        rows.push(AggregateRow {
            sigma: number(&record[0], "sigma", line)?,
            seed,
            mig: optional(&record[2], "mig", line)?,
            recon: optional(&record[3], "recon", line)?,
            kl: optional(&record[4], "kl", line)?,
            tc: optional(&record[5], "tc", line)?,
            seconds: number(&record[6], "seconds", line)?,
            status,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Malformed("aggregate has no rows".into()));
    }
    Ok(rows)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Quartiles {
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
    })
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            out[i] = rank;
        }
        start = end + 1;
    }
    out
}

/// Pearson correlation of the ranks; `None` with fewer than two points or
/// a constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

pub fn compare(rows: &[AggregateRow]) -> CompareReport {
    let mut sigmas: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();

    let groups: Vec<SigmaGroup> = sigmas
        .iter()
        .map(|&sigma| {
            let members: Vec<&AggregateRow> = rows.iter().filter(|r| r.sigma == sigma).collect();
            let column = |f: fn(&AggregateRow) -> Option<f64>| members.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
            let samples = [
                column(|r| r.mig),
                column(|r| r.recon),
                column(|r| r.kl),
                column(|r| r.tc),
            ];
            SigmaGroup {
                sigma,
                runs: members.len(),
                diverged: members.iter().filter(|r| r.status == "diverged").count(),
                mig: quartiles(&samples[0]),
                recon: quartiles(&samples[1]),
                kl: quartiles(&samples[2]),
                tc: quartiles(&samples[3]),
                samples,
            }
        })
        .collect();

    let mig_medians: Option<Vec<f64>> = groups.iter().map(|g| g.mig.map(|q| q.median)).collect();
    let mig_strictly_decreasing = match &mig_medians {
        Some(m) if m.len() >= 2 => m.windows(2).all(|w| w[1] < w[0]),
        _ => false,
    };
    let recon_relative_difference = match (
        groups.first().and_then(|g| g.recon),
        groups.last().and_then(|g| g.recon),
    ) {
        (Some(first), Some(last)) if groups.len() >= 2 && first.median != 0.0 => {
            Some((last.median - first.median).abs() / first.median.abs())
        }
        _ => None,
    };
    let (tc, kl): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| Some((r.tc?, r.kl?))).unzip();

    CompareReport {
        groups,
        mig_strictly_decreasing,
        flag: if mig_strictly_decreasing {
            DECLINE_CONFIRMED
        } else {
            NO_DECLINE
        },
        recon_relative_difference,
        tc_kl_spearman: spearman(&tc, &kl),
    }
}

pub fn compare_file(path: &Path) -> Result<CompareReport, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Malformed(format!("cannot read {}: {e}", path.display())))?;
    Ok(compare(&parse_aggregate(&text)?))
}
