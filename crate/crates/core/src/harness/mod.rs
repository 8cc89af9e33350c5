//! Configured sweeps over scenarios, speeds and sensor subsets.

mod config;
mod report;
mod sweep;

use std::path::Path;

pub use config::{load_config, parse_config, Overrides, RunConfig, SubsetDef, DEFAULT_OUTPUT_DIR, DEFAULT_SEED};
pub use report::{
    accuracy_table_csv, avoidance_csv, cells_csv, emit_reports, probe_output_dir, provenance_json, EntryStatus, Manifest,
    ManifestEntry, ACCURACY_FILE, AVOIDANCE_FILE, CELLS_FILE, HEATMAP_DIR, MANIFEST_FILE, PROVENANCE_FILE,
    TABLE_SPEEDS_KMH,
};
pub use sweep::{run_sweep, CellResult, Provenance, SweepResult};

use crate::error::Result;

/// Process exit codes of the command-line tool.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG_ERROR: i32 = 1;
    pub const RUNTIME_ERROR: i32 = 2;
    pub const PARTIAL_OUTPUT: i32 = 3;
}

/// Checks the output directory, runs the sweep and writes every report.
pub fn run_and_report(config: &RunConfig, dir: &Path) -> Result<(SweepResult, Manifest)> {
    probe_output_dir(dir)?;
    tracing::info!(cells = config.cell_count(), dir = %dir.display(), "starting sweep");
    let result = run_sweep(config)?;
    let manifest = emit_reports(&result, dir)?;
    Ok((result, manifest))
}
