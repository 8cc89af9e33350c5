use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sweep::SweepResult;
use crate::error::{Error, Result};

pub const CELLS_FILE: &str = "cells.csv";
pub const ACCURACY_FILE: &str = "accuracy_table.csv";
pub const AVOIDANCE_FILE: &str = "avoidance_by_subset.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const HEATMAP_DIR: &str = "heatmaps";

/// Speed columns of the accuracy table.
pub const TABLE_SPEEDS_KMH: [u32; 9] = [20, 25, 30, 35, 40, 45, 50, 55, 60];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: Option<String>,
    pub bytes: u64,
    pub status: EntryStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn is_partial(&self) -> bool {
        self.entries.iter().any(|e| e.status != EntryStatus::Ok)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,sha256,bytes,status\n");
        for e in &self.entries {
            let status = match &e.status {
                EntryStatus::Ok => "ok".to_string(),
                EntryStatus::Failed(m) => format!("FAILED: {}", m.replace([',', '\n'], " ")),
            };
            let _ = writeln!(out, "{},{},{},{}", e.path, e.sha256.as_deref().unwrap_or(""), e.bytes, status);
        }
        out
    }
}

/// Fails early when `dir` cannot be created or written.
pub fn probe_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".vru-sim-probe");
    std::fs::write(&probe, b"probe").map_err(|e| Error::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.3}"))
}

pub fn cells_csv(result: &SweepResult) -> String {
    let mut out = String::from(
        "scenario,speed_kmh,scene_yaw_deg,subset,accuracy,mean_detections_per_frame,avoided,\
         collision_speed_mps,stop_margin_m,first_confirmed_s,last_possible_brake_s\n",
    );
    for c in &result.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{},{:.4},{:.4},{},{}",
            c.scenario,
            c.speed_kmh,
            c.scene_yaw_deg,
            c.subset,
            c.metrics.accuracy,
            c.metrics.mean_detections_per_frame,
            u8::from(c.outcome.avoided),
            c.outcome.collision_speed,
            c.outcome.stop_margin,
            fmt_opt(c.first_confirmed_time),
            fmt_opt(c.outcome.last_possible_brake_time),
        );
    }
    out
}

/// One row per test case, one column per speed, accuracy in percent.
///
/// Uses the any-sensor subset when it was run, otherwise the first subset.
/// Speeds outside a case's protocol range are `N/A`; speeds not run are empty.
pub fn accuracy_table_csv(result: &SweepResult) -> String {
    let mut out = String::from("scenario,subset");
    for v in TABLE_SPEEDS_KMH {
        let _ = write!(out, ",{v}");
    }
    out.push('\n');
    let subset = if result.subsets.iter().any(|s| s == "any-sensor") {
        Some("any-sensor")
    } else {
        result.subsets.first().map(String::as_str)
    };
    let Some(subset) = subset else {
        return out;
    };
    for (kind, _) in &result.sweep {
        if !result.cells.iter().any(|c| c.scenario == *kind && c.subset == subset) {
            continue;
        }
        let _ = write!(out, "{kind},{subset}");
        for v in TABLE_SPEEDS_KMH {
            out.push(',');
            if !kind.allowed_speeds_kmh().contains(&v) {
                out.push_str("N/A");
                continue;
            }
            let values: Vec<f64> = result
                .cells
                .iter()
                .filter(|c| c.scenario == *kind && c.speed_kmh == v && c.subset == subset)
                .map(|c| c.metrics.accuracy)
                .collect();
            if !values.is_empty() {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let _ = write!(out, "{:.2}", mean * 100.0);
            }
        }
        out.push('\n');
    }
    out
}

pub fn avoidance_csv(result: &SweepResult) -> String {
    let mut out = String::from("scenario,subset,runs,avoided,avoidance_rate\n");
    for (kind, subset, runs, avoided) in result.avoidance_by_subset() {
        let _ = writeln!(out, "{kind},{subset},{runs},{avoided},{:.6}", avoided as f64 / runs as f64);
    }
    out
}

pub fn provenance_json(result: &SweepResult) -> String {
    let mut s = serde_json::to_string_pretty(&result.provenance).expect("provenance serializes");
    s.push('\n');
    s
}

struct Writer {
    root: PathBuf,
    manifest: Manifest,
}

impl Writer {
    fn write(&mut self, rel: &str, bytes: &[u8]) {
        let path = self.root.join(rel);
        let written = path
            .parent()
            .map_or(Ok(()), std::fs::create_dir_all)
            .and_then(|_| std::fs::write(&path, bytes));
        let entry = match written {
            Ok(()) => ManifestEntry {
                path: rel.to_string(),
                sha256: Some(hex::encode(Sha256::digest(bytes))),
                bytes: bytes.len() as u64,
                status: EntryStatus::Ok,
            },
            Err(e) => {
                tracing::error!(path = %path.display(), error = %e, "write failed");
                ManifestEntry {
                    path: rel.to_string(),
                    sha256: None,
                    bytes: 0,
                    status: EntryStatus::Failed(e.to_string()),
                }
            }
        };
        self.manifest.entries.push(entry);
    }
}

/// Writes all report files under `dir` and returns their manifest.
///
/// Individual write failures are recorded in the manifest instead of
/// aborting. The manifest itself goes to `manifest.csv` and is not listed.
pub fn emit_reports(result: &SweepResult, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = Writer {
        root: dir.to_path_buf(),
        manifest: Manifest::default(),
    };
    w.write(CELLS_FILE, cells_csv(result).as_bytes());
    w.write(ACCURACY_FILE, accuracy_table_csv(result).as_bytes());
    w.write(AVOIDANCE_FILE, avoidance_csv(result).as_bytes());
    w.write(PROVENANCE_FILE, provenance_json(result).as_bytes());
    for cell in &result.cells {
        if let Some(h) = &cell.heatmap {
            let stem = cell.file_stem();
            w.write(&format!("{HEATMAP_DIR}/{stem}.csv"), h.to_csv().as_bytes());
            w.write(&format!("{HEATMAP_DIR}/{stem}.ppm"), &h.to_ppm());
        }
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, w.manifest.to_csv()).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(w.manifest)
}

