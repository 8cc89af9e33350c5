use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::aeb::{classify_outcome, last_possible_brake_time_with, simulate_run_with_deadline, SafetyOutcome};
use crate::error::{Error, Result};
use crate::metrics::{build_heatmap, trace_metrics, HeatmapMatrix, MetricsReport};
use crate::scenario::{build_scenario_with, ScenarioKind, ScenarioSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scenario: ScenarioKind,
    pub speed_kmh: u32,
    pub scene_yaw_deg: f64,
    pub subset: String,
    pub outcome: SafetyOutcome,
    pub metrics: MetricsReport,
    pub first_confirmed_time: Option<f64>,
    pub heatmap: Option<HeatmapMatrix>,
}

impl CellResult {
    /// `<scenario>_<speed>_<subset>`, with `_yaw<deg>` for rotated scenes.
    pub fn file_stem(&self) -> String {
        let mut stem = format!("{}_{}_{}", self.scenario, self.speed_kmh, self.subset);
        if self.scene_yaw_deg != 0.0 {
            stem.push_str(&format!("_yaw{}", self.scene_yaw_deg));
        }
        stem
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Ordered by (scenario, speed, scene yaw, subset) in config order.
    pub cells: Vec<CellResult>,
    pub subsets: Vec<String>,
    pub sweep: Vec<(ScenarioKind, Vec<u32>)>,
    pub provenance: Provenance,
}

impl SweepResult {
    /// (scenario, subset, runs, avoided) in scenario then subset order.
    pub fn avoidance_by_subset(&self) -> Vec<(ScenarioKind, String, usize, usize)> {
        let mut out = Vec::new();
        for (kind, _) in &self.sweep {
            for subset in &self.subsets {
                let cells: Vec<&CellResult> = self
                    .cells
                    .iter()
                    .filter(|c| c.scenario == *kind && &c.subset == subset)
                    .collect();
                if cells.is_empty() {
                    continue;
                }
                let avoided = cells.iter().filter(|c| c.outcome.avoided).count();
                out.push((*kind, subset.clone(), cells.len(), avoided));
            }
        }
        out
    }

    pub fn avoidance_rate(&self, kind: ScenarioKind, subset: &str) -> Option<f64> {
        self.avoidance_by_subset()
            .into_iter()
            .find(|(k, s, _, _)| *k == kind && s == subset)
            .map(|(_, _, runs, avoided)| avoided as f64 / runs as f64)
    }

    pub fn cell(&self, kind: ScenarioKind, speed_kmh: u32, subset: &str) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.scenario == kind && c.speed_kmh == speed_kmh && c.subset == subset)
    }
}

struct Run {
    spec: ScenarioSpec,
    yaw_deg: f64,
    deadline: Option<f64>,
}

/// Runs every (scenario, speed, yaw, subset) cell. Pure: writes nothing.
pub fn run_sweep(config: &RunConfig) -> Result<SweepResult> {
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;
        pool.install(|| sweep_inner(config))
    } else {
        sweep_inner(config)
    }
}

fn sweep_inner(config: &RunConfig) -> Result<SweepResult> {
    let mut keys = Vec::new();
    for (kind, speeds) in &config.sweep {
        for &speed in speeds {
            for &yaw in &config.scene_yaw_deg {
                keys.push((*kind, speed, yaw));
            }
        }
    }
    let runs = keys
        .par_iter()
        .map(|&(kind, speed, yaw_deg)| {
            let mut spec = build_scenario_with(kind, speed, &config.scenario)?;
            if yaw_deg != 0.0 {
                spec = spec.rotated(yaw_deg.to_radians());
            }
            let deadline = last_possible_brake_time_with(&spec, &config.policy, config.dt)?;
            Ok(Run { spec, yaw_deg, deadline })
        })
        .collect::<Result<Vec<_>>>()?;

    let sensors = &config.layout.sensors;
    let jobs: Vec<(&Run, usize)> = runs
        .iter()
        .flat_map(|r| (0..config.subsets.len()).map(move |s| (r, s)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(run, s)| {
            let subset = &config.subsets[s];
            let trace = simulate_run_with_deadline(
                &run.spec,
                sensors,
                &config.detection,
                &config.policy,
                &subset.fusion,
                config.dt,
                run.deadline,
            )?;
            tracing::debug!(
                scenario = %run.spec.kind,
                speed = run.spec.vut_speed_kmh,
                subset = %subset.name,
                avoided = trace.collision.is_none(),
                "cell done"
            );
            Ok(CellResult {
                scenario: run.spec.kind,
                speed_kmh: run.spec.vut_speed_kmh,
                scene_yaw_deg: run.yaw_deg,
                subset: subset.name.clone(),
                outcome: classify_outcome(&trace),
                metrics: trace_metrics(&trace, sensors, &subset.fusion)?,
                first_confirmed_time: trace.first_confirmed_time,
                heatmap: config.heatmaps.then(|| build_heatmap(&trace)),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepResult {
        provenance: Provenance {
            tool: "vru-sim".into(),
            version: crate::VERSION.into(),
            seed: config.seed,
            config_sha256: config.hash(),
            cells: cells.len(),
        },
        cells,
        subsets: config.subsets.iter().map(|s| s.name.clone()).collect(),
        sweep: config.sweep.clone(),
    })
}
