use std::path::{Path, PathBuf};

use super::record::EpochRecord;
use super::summary::MetricsRecord;
use crate::error::{Error, Result};

/// Leading columns of the epoch CSV. Each target `i` (by id) then adds
/// `t{i}_x, t{i}_y, t{i}_landmark, t{i}_est_x, t{i}_est_y`.
pub const EPOCH_COLUMNS: [&str; 11] = [
    "epoch",
    "radar",
    "resolved",
    "n_estimates",
    "raw_points",
    "cloud_points",
    "components",
    "bits_sent",
    "kl_fed",
    "kl_local",
    "position",
];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per epoch and radar.
pub fn write_epoch_csv(path: &Path, target_ids: &[u32], records: &[EpochRecord]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header: Vec<String> = EPOCH_COLUMNS.iter().map(|s| s.to_string()).collect();
    for id in target_ids {
        for suffix in ["x", "y", "landmark", "est_x", "est_y"] {
            header.push(format!("t{id}_{suffix}"));
        }
    }
    w.write_record(&header).map_err(&err)?;
    for rec in records {
        let position = rec.position_key();
        for r in &rec.radars {
            let mut row = vec![
                rec.epoch.to_string(),
                r.radar.to_string(),
                (r.resolved as u8).to_string(),
                r.estimates.len().to_string(),
                r.raw_points.to_string(),
                r.cloud_points.to_string(),
                r.components.to_string(),
                r.bits_sent.to_string(),
                opt(r.kl_fed),
                opt(r.kl_local),
                position.clone(),
            ];
            for (truth, est) in rec.truth.iter().zip(&r.assigned) {
                row.push(truth.position.x.to_string());
                row.push(truth.position.y.to_string());
                row.push(truth.landmark.clone());
                row.push(opt(est.map(|p| p.x)));
                row.push(opt(est.map(|p| p.y)));
            }
            w.write_record(&row).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long-format `radar,metric,key,value` file for each record in turn.
pub fn write_summary_csv(path: &Path, metrics: &[MetricsRecord]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(["radar", "metric", "key", "value"]).map_err(&err)?;
    for m in metrics {
        for row in m.to_rows() {
            w.write_record(&row).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inverse of [`write_summary_csv`]; a new record starts at every `mode` row.
pub fn read_summary_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let err = csv_err(path);
    let mut r = csv::Reader::from_path(path).map_err(&err)?;
    let mut groups: Vec<Vec<[String; 4]>> = Vec::new();
    for row in r.records() {
        let row = row.map_err(&err)?;
        if row.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("expected 4 columns, found {}", row.len()),
            });
        }
        let row = [0, 1, 2, 3].map(|i| row[i].to_string());
        if row[0] == "all" && row[1] == "mode" {
            groups.push(Vec::new());
        }
        match groups.last_mut() {
            Some(g) => g.push(row),
            None => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: "summary does not start with a mode row".into(),
                })
            }
        }
    }
    groups
        .iter()
        .map(|g| {
            MetricsRecord::from_rows(g).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Write `epochs.csv` and `summary.csv` into `dir`; returns their paths.
pub fn export_csv(
    dir: &Path,
    target_ids: &[u32],
    records: &[EpochRecord],
    metrics: &MetricsRecord,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let epochs = dir.join("epochs.csv");
    let summary = dir.join("summary.csv");
    write_epoch_csv(&epochs, target_ids, records)?;
    write_summary_csv(&summary, std::slice::from_ref(metrics))?;
    Ok((epochs, summary))
}
