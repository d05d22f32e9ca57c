use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExplorationResult, IterationMetrics};
use crate::schema::{render_document, Schema};

pub const METRICS_HEADER: [&str; 5] = ["iteration", "env_steps_cum", "unknown_count", "loc_coverage", "obj_coverage"];

#[derive(Debug, thiserror::Error)]
pub enum RunDirError {
    #[error("{0} already exists; pass --force to overwrite it")]
    Exists(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("final document does not validate: {0}")]
    Invalid(String),
    #[error("{0}")]
    Encode(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunDirError + '_ {
    move |source| RunDirError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One parsed line of metrics.csv. Coverage is absent when the run had no
/// ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub env_steps_cum: u64,
    pub unknown_count: usize,
    pub loc_coverage: Option<f64>,
    pub obj_coverage: Option<f64>,
}

fn fraction(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn metrics_csv(metrics: &[IterationMetrics]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for m in metrics {
        w.write_record([
            m.iteration.to_string(),
            m.env_steps.to_string(),
            m.unknown_count.to_string(),
            fraction(m.coverage.map(|c| c.location_fraction())),
            fraction(m.coverage.map(|c| c.object_fraction())),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(format!("unexpected metrics header {headers:?}"));
    }
    let opt = |s: &str| -> Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("{s}: {e}"))
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |i: usize| rec.get(i).unwrap_or_default();
        rows.push(MetricsRow {
            iteration: num(0).parse().map_err(|e| format!("iteration: {e}"))?,
            env_steps_cum: num(1).parse().map_err(|e| format!("env_steps_cum: {e}"))?,
            unknown_count: num(2).parse().map_err(|e| format!("unknown_count: {e}"))?,
            loc_coverage: opt(num(3))?,
            obj_coverage: opt(num(4))?,
        });
    }
    Ok(rows)
}

/// Writes document.md, forest.json, trajectories/NNN.json, metrics.csv and
/// run.json. `run_info` is merged into run.json next to the stop reason.
/// An existing directory is left alone unless `force` is set.
pub fn write_run_dir(
    dir: &Path,
    result: &ExplorationResult,
    schema: &Schema,
    run_info: serde_json::Value,
    force: bool,
) -> Result<(), RunDirError> {
    if dir.exists() && fs::read_dir(dir).map_err(io(dir))?.next().is_some() {
        if !force {
            return Err(RunDirError::Exists(dir.to_path_buf()));
        }
        fs::remove_dir_all(dir).map_err(io(dir))?;
    }
    let document = render_document(&result.document, schema).map_err(|v| {
        RunDirError::Invalid(v.iter().map(|x| x.message.clone()).collect::<Vec<_>>().join("; "))
    })?;
    let forest = result
        .forest
        .without_runtime_refs()
        .to_json()
        .map_err(|e| RunDirError::Encode(e.to_string()))?;

    let traj_dir = dir.join("trajectories");
    fs::create_dir_all(&traj_dir).map_err(io(&traj_dir))?;
    let write = |path: PathBuf, text: &str| fs::write(&path, text).map_err(io(&path));
    write(dir.join("document.md"), &document)?;
    write(dir.join("forest.json"), &forest)?;
    write(dir.join("metrics.csv"), &metrics_csv(&result.metrics))?;
    for t in &result.trajectories {
        let json = serde_json::to_string_pretty(t).map_err(|e| RunDirError::Encode(e.to_string()))?;
        write(traj_dir.join(format!("{}.json", t.id)), &json)?;
    }

    let mut run = match run_info {
        serde_json::Value::Object(m) => m,
        serde_json::Value::Null => serde_json::Map::new(),
        other => {
            let mut m = serde_json::Map::new();
            m.insert("info".into(), other);
            m
        }
    };
    run.insert("stop_reason".into(), result.stop_reason.to_string().into());
    run.insert("iterations".into(), result.iterations.into());
    run.insert("env_steps".into(), result.steps_used.into());
    let json = serde_json::to_string_pretty(&run).map_err(|e| RunDirError::Encode(e.to_string()))?;
    write(dir.join("run.json"), &json)?;
    Ok(())
}
