use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::tune::{ResultRow, ResultTable};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "alg,mu,M,K,R,eta,beta,lambda_internal,metric_mean,metric_std,reps,oracle_calls";

/// Contents of `meta.json`; the only output carrying timing information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub version: String,
    pub config_sha256: String,
    pub threads: usize,
    pub wall_seconds: f64,
    pub rows: usize,
    pub runs: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_line(r: &ResultRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.alg,
        r.mu,
        r.machines,
        r.steps,
        r.rounds,
        fmt_opt(r.eta),
        fmt_opt(r.beta),
        fmt_opt(r.lambda_internal),
        r.metric_mean,
        r.metric_std,
        r.reps,
        r.oracle_calls
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `trajectories.jsonl` and `meta.json` into `dir`.
pub fn emit(
    table: &ResultTable,
    cfg: &ExperimentConfig,
    dir: impl AsRef<Path>,
    threads: usize,
    wall_seconds: f64,
) -> Result<ExperimentMeta> {
    if table.rows.is_empty() {
        return Err(Error::Config("nothing to emit: the result table is empty".into()));
    }
    if table.trajectories.iter().any(|t| t.trajectory.is_empty()) {
        return Err(Error::Config("cannot emit an empty trajectory".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("results.csv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "{CSV_HEADER}").map_err(io)?;
    for s in &table.rows {
        writeln!(w, "{}", csv_line(&s.row)).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = dir.join("trajectories.jsonl");
    let mut w = create(&path)?;
    for t in &table.trajectories {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w).map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let meta = ExperimentMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: hex::encode(Sha256::digest(serde_json::to_vec(cfg)?)),
        threads,
        wall_seconds,
        rows: table.rows.len(),
        runs: table.trajectories.len(),
    };
    let path = dir.join("meta.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &meta)?;
    writeln!(w).map_err(|e| Error::io(&path, e))?;
    Ok(meta)
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Config(format!("{} has an unexpected header", path.display())));
    }
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}
