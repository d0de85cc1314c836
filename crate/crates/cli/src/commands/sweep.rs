use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::bundle::{content_hash, num, Bundle, Csv};
use crate::commands::run::{cmd_run, RunStatus, RunSummary};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub values: Vec<(String, toml::Value)>,
    pub status: RunStatus,
    pub t_valid: Option<f64>,
    pub c3: Option<f64>,
    pub m: Option<f64>,
    pub t_star_star: Option<f64>,
    pub iterations: Option<usize>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub rows: Vec<SweepRow>,
    pub rejected: usize,
    pub failed: usize,
}

impl SweepReport {
    pub fn warnings(&self) -> usize {
        self.rejected + self.failed
    }
}

/// Cartesian product of the axes, first axis slowest.
fn grid_points(axes: &[(String, Vec<toml::Value>)]) -> Vec<Vec<(String, toml::Value)>> {
    let mut points = vec![Vec::new()];
    for (name, values) in axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in values {
                let mut q = p.clone();
                q.push((name.clone(), v.clone()));
                next.push(q);
            }
        }
        points = next;
    }
    points
}

fn row_from(
    index: usize,
    values: Vec<(String, toml::Value)>,
    res: Result<RunSummary, CliError>,
) -> SweepRow {
    let mut row = SweepRow {
        index,
        values,
        status: RunStatus::Ok,
        t_valid: None,
        c3: None,
        m: None,
        t_star_star: None,
        iterations: None,
        message: None,
    };
    match res {
        Ok(s) => {
            row.status = s.status;
            row.t_valid = s.t_valid;
            row.c3 = s.ledger.as_ref().map(|l| l.c3);
            row.m = s.derived.as_ref().map(|d| d.m);
            row.t_star_star = s.ledger.as_ref().map(|l| l.horizons.t_star_star);
            row.iterations = s.continuation.last().map(|l| l.iterations);
            row.message = s.failure.map(|f| f.message);
        }
        Err(e) => {
            row.status = if e.exit_code() == 1 {
                RunStatus::Rejected
            } else {
                RunStatus::Failed
            };
            row.message = Some(e.to_string());
        }
    }
    row
}

fn cell(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => num(*f),
        other => other.to_string(),
    }
}

/// Run every grid point of the `[sweep]` block, each in its own directory,
/// with at most `workers` runs in flight.
pub fn cmd_sweep(
    cfg: &RunConfig,
    out: &Path,
    workers: usize,
    snapshots: bool,
) -> Result<SweepReport, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Validation("sweep needs a [sweep] block with axes".into()))?;
    if sweep.axes.is_empty() {
        return Err(CliError::Validation("sweep has no axes".into()));
    }
    for (name, values) in &sweep.axes {
        if values.is_empty() {
            return Err(CliError::Validation(format!(
                "sweep axis {name} has no values"
            )));
        }
        if values
            .iter()
            .any(|v| v.as_float().is_some_and(|f| !f.is_finite()))
        {
            return Err(CliError::Validation(format!(
                "sweep axis {name} has a non-finite value"
            )));
        }
    }
    let bundle = Bundle::create(out)?;
    let text = cfg.to_toml();
    bundle.write("config.toml", text.as_bytes())?;
    let mut base = cfg.clone();
    base.sweep = None;
    let axes: Vec<(String, Vec<toml::Value>)> = sweep
        .axes
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let points = grid_points(&axes);

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; points.len()]);
    let workers = workers.clamp(1, points.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= points.len() {
                    break;
                }
                let values = points[i].clone();
                let res = values
                    .iter()
                    .try_fold(base.clone(), |c, (k, v)| c.with_override(k, v))
                    .and_then(|c| cmd_run(&c, &out.join(format!("row_{i:04}")), snapshots));
                let row = row_from(i, values, res);
                results.lock().expect("no poisoned lock")[i] = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = results
        .into_inner()
        .expect("no poisoned lock")
        .into_iter()
        .map(|r| r.expect("every row ran"))
        .collect();

    let mut header: Vec<&str> = vec!["row"];
    header.extend(axes.iter().map(|(k, _)| k.as_str()));
    header.extend([
        "status",
        "t_valid",
        "c3",
        "m",
        "T_star_star",
        "iterations",
        "message",
    ]);
    let mut csv = Csv::new(&header);
    let o = |x: Option<f64>| x.map(num).unwrap_or_default();
    for r in &rows {
        let mut cells = vec![r.index.to_string()];
        cells.extend(r.values.iter().map(|(_, v)| cell(v)));
        let status = serde_json::to_value(r.status).expect("status serializes");
        cells.push(status.as_str().unwrap_or_default().to_string());
        cells.extend([o(r.t_valid), o(r.c3), o(r.m), o(r.t_star_star)]);
        cells.push(r.iterations.map(|k| k.to_string()).unwrap_or_default());
        cells.push(r.message.as_deref().unwrap_or("").replace([',', '\n'], ";"));
        csv.row(cells);
    }
    bundle.write_csv("sweep.csv", csv)?;
    let report = SweepReport {
        config_hash: content_hash(text.as_bytes()),
        rejected: rows
            .iter()
            .filter(|r| r.status == RunStatus::Rejected)
            .count(),
        failed: rows
            .iter()
            .filter(|r| r.status == RunStatus::Failed)
            .count(),
        rows,
    };
    bundle.write_json("sweep.json", &report)?;
    Ok(report)
}
