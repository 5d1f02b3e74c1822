//! Executes the sigma × seed grid and writes one record per run plus the
//! aggregate CSV.
//!
//! Layout under the output directory:
//!
//! * `records/sigma=<σ>_seed=<seed>.json`: one [`RunRecord`]
//! * `checkpoints/sigma=<σ>_seed=<seed>.ckpt`: final parameters
//! * `aggregate.csv`: one row per run, grid order

use std::io::Write;
use std::path::{Path, PathBuf};

use condind_core::vae::{self, VaeError};
use condind_core::{generate, ToyDataset, TrainReport, TrainStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{run_hash, ExperimentConfig, RunSpec};
use crate::CliError;

pub const AGGREGATE_HEADER: [&str; 8] = ["sigma", "seed", "mig", "recon", "kl", "tc", "seconds", "status"];
pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub sigma: f64,
    pub seed: u64,
    pub latent_dim: usize,
    pub status: TrainStatus,
    pub mig: Option<f64>,
    pub recon: Option<f64>,
    pub kl: Option<f64>,
    pub kl_offset: f64,
    pub tc: Option<f64>,
    pub tc_std_error: Option<f64>,
    pub seconds: f64,
    /// Absent when training aborted on a NaN loss.
    pub report: Option<TrainReport>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct RunSummary {
    /// In grid order.
    pub records: Vec<RunRecord>,
    pub executed: usize,
    pub skipped: usize,
    pub aggregate: PathBuf,
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

fn existing_record(path: &Path, hash: &str) -> Option<RunRecord> {
    let text = std::fs::read_to_string(path).ok()?;
    let record: RunRecord = serde_json::from_str(&text).ok()?;
    (record.config_hash == hash).then_some(record)
}

fn execute(run: &RunSpec, hash: String, data: &ToyDataset, out: &Path) -> Result<RunRecord, CliError> {
    log::info!("training sigma={} seed={}", run.sigma, run.seed);
    let started = std::time::Instant::now();
    let kl_offset = run.model.noise_spec()?.kl_offset();
    let record = match vae::train(&run.model, data) {
        Ok((params, report)) => {
            let ckpt = out.join("checkpoints").join(format!("{}.ckpt", run.stem()));
            let mut bytes = Vec::new();
            vae::save_checkpoint(&mut bytes, &params, &run.model, report.recon.len())?;
            write_atomic(&ckpt, &bytes)?;
            RunRecord {
                config_hash: hash,
                sigma: run.sigma,
                seed: run.seed,
                latent_dim: run.model.latent_dim,
                status: report.status,
                mig: Some(report.final_mig),
                recon: report.final_recon(),
                kl: report.final_kl(),
                kl_offset,
                tc: Some(report.final_tc.value),
                tc_std_error: Some(report.final_tc.std_error),
                seconds: report.seconds,
                report: Some(report),
                error: None,
            }
        }
        Err(err @ VaeError::NanLoss { .. }) => {
            log::warn!("sigma={} seed={}: {err}", run.sigma, run.seed);
            RunRecord {
                config_hash: hash,
                sigma: run.sigma,
                seed: run.seed,
                latent_dim: run.model.latent_dim,
                status: TrainStatus::Diverged,
                mig: None,
                recon: None,
                kl: None,
                kl_offset,
                tc: None,
                tc_std_error: None,
                seconds: started.elapsed().as_secs_f64(),
                report: None,
                error: Some(err.to_string()),
            }
        }
        Err(e) => return Err(e.into()),
    };
    let path = out.join("records").join(format!("{}.json", run.stem()));
    write_atomic(&path, serde_json::to_string_pretty(&record)?.as_bytes())?;
    Ok(record)
}

/// Runs every grid cell not already recorded under `out` with a matching
/// config hash, on a pool of `jobs` workers.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out.join("records"))?;
    std::fs::create_dir_all(out.join("checkpoints"))?;
    let data = generate(&cfg.dataset)?;

    let runs = cfg.runs();
    let mut slots: Vec<Option<RunRecord>> = Vec::with_capacity(runs.len());
    let mut pending = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let hash = run_hash(&cfg.dataset, &run.model);
        let path = out.join("records").join(format!("{}.json", run.stem()));
        match existing_record(&path, &hash) {
            Some(r) => slots.push(Some(r)),
            None => {
                slots.push(None);
                pending.push((i, hash));
            }
        }
    }
    let skipped = runs.len() - pending.len();
    log::info!("{} runs to execute, {skipped} already recorded", pending.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let fresh: Vec<(usize, Result<RunRecord, CliError>)> = pool.install(|| {
        pending
            .into_par_iter()
            .map(|(i, hash)| (i, execute(&runs[i], hash, &data, out)))
            .collect()
    });
    let executed = fresh.len();
    for (i, rec) in fresh {
        slots[i] = Some(rec?);
    }
    let records: Vec<RunRecord> = slots.into_iter().map(|r| r.expect("every slot filled")).collect();

    let aggregate = out.join(AGGREGATE_FILE);
    write_atomic(&aggregate, &aggregate_csv(&records)?)?;
    Ok(RunSummary {
        records,
        executed,
        skipped,
        aggregate,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders records as the aggregate CSV; absent metrics become empty cells.
pub fn aggregate_csv(records: &[RunRecord]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_HEADER)?;
    for r in records {
        let status = match r.status {
            TrainStatus::Ok => "ok",
            TrainStatus::Diverged => "diverged",
        };
        w.write_record([
            r.sigma.to_string(),
            r.seed.to_string(),
            cell(r.mig),
            cell(r.recon),
            cell(r.kl),
            cell(r.tc),
            r.seconds.to_string(),
            status.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}
