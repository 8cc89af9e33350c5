//! Budgeted selection of roadside sensor sites by re-simulating the suite.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aeb::{simulate_run_with_deadline, last_possible_brake_time_with, AebPolicy};
use crate::error::{Error, Result};
use crate::metrics::subset_counts;
use crate::scenario::{build_scenario_with, ScenarioKind, ScenarioParams, ScenarioSpec};
use crate::sensing::{DetectionModel, Fusion, SensorLayout, SensorUnit};

/// Scenario runs every candidate set is scored on, with cached brake deadlines.
#[derive(Debug, Clone)]
pub struct ScenarioSuite {
    cases: Vec<(ScenarioSpec, Option<f64>)>,
}

impl ScenarioSuite {
    pub fn new(specs: Vec<ScenarioSpec>, policy: &AebPolicy, dt: f64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Validation("scenario suite is empty".into()));
        }
        let cases = specs
            .into_par_iter()
            .map(|spec| {
                let deadline = last_possible_brake_time_with(&spec, policy, dt)?;
                Ok((spec, deadline))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cases })
    }

    /// Every allowed speed of each kind, optionally restricted to `speeds`.
    pub fn sweep(kinds: &[ScenarioKind], speeds: Option<&[u32]>, params: &ScenarioParams, policy: &AebPolicy, dt: f64) -> Result<Self> {
        let mut specs = Vec::new();
        for &kind in kinds {
            for v in kind.allowed_speeds_kmh() {
                if speeds.is_none_or(|s| s.contains(&v)) {
                    specs.push(build_scenario_with(kind, v, params)?);
                }
            }
        }
        Self::new(specs, policy, dt)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn specs(&self) -> impl Iterator<Item = &ScenarioSpec> {
        self.cases.iter().map(|(s, _)| s)
    }
}

/// Shared evaluation settings.
#[derive(Debug, Clone)]
pub struct PlacementContext {
    pub suite: ScenarioSuite,
    pub policy: AebPolicy,
    pub model: DetectionModel,
    pub dt: f64,
    /// Sensors always present, e.g. the VUT camera.
    pub base: Vec<SensorUnit>,
}

/// Integer tallies so candidate comparisons are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub avoided: usize,
    pub runs: usize,
    pub tp_frames: usize,
    pub frames: usize,
}

impl SubsetScore {
    pub fn avoidance_rate(&self) -> f64 {
        self.avoided as f64 / self.runs as f64
    }

    pub fn accuracy(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.tp_frames as f64 / self.frames as f64
        }
    }

    /// Avoidance first, accuracy as tie-breaker. Valid for scores on one suite.
    pub fn key(&self) -> (usize, usize) {
        (self.avoided, self.tp_frames)
    }
}

/// Any-sensor fusion of `base` plus `sites` over the whole suite.
pub fn evaluate_subset(ctx: &PlacementContext, sites: &[&SensorUnit]) -> Result<SubsetScore> {
    let mut sensors = ctx.base.clone();
    sensors.extend(sites.iter().map(|s| (*s).clone()));
    SensorLayout::new(sensors.clone())?;
    let mut score = SubsetScore {
        avoided: 0,
        runs: 0,
        tp_frames: 0,
        frames: 0,
    };
    for (spec, deadline) in &ctx.suite.cases {
        let trace = simulate_run_with_deadline(spec, &sensors, &ctx.model, &ctx.policy, &Fusion::AnySensor, ctx.dt, *deadline)?;
        let counts = subset_counts(&trace, &sensors, &Fusion::AnySensor)?;
        score.runs += 1;
        score.avoided += usize::from(trace.collision.is_none());
        score.tp_frames += counts.iter().filter(|&&c| c > 0).count();
        score.frames += counts.len();
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteScore {
    pub id: String,
    pub score: SubsetScore,
}

/// Each candidate alone (plus the base sensors), in candidate order.
pub fn evaluate_sites(candidates: &[SensorUnit], ctx: &PlacementContext) -> Result<Vec<SiteScore>> {
    if candidates.is_empty() {
        return Err(Error::Validation("no candidate sites".into()));
    }
    candidates
        .par_iter()
        .map(|c| {
            Ok(SiteScore {
                id: c.id.clone(),
                score: evaluate_subset(ctx, &[c])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementStep {
    pub site: String,
    pub marginal_gain: f64,
    pub score: SubsetScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub selected: Vec<String>,
    pub steps: Vec<PlacementStep>,
    pub base_score: SubsetScore,
    pub score: SubsetScore,
}

impl PlacementResult {
    pub fn avoidance_rate(&self) -> f64 {
        self.score.avoidance_rate()
    }

    pub fn accuracy(&self) -> f64 {
        self.score.accuracy()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,site,marginal_gain,avoidance_rate,accuracy\n");
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6}",
                i + 1,
                s.site,
                s.marginal_gain,
                s.score.avoidance_rate(),
                s.score.accuracy()
            );
        }
        out
    }

    /// Base sensors followed by the chosen sites, loadable as a sensor layout.
    pub fn layout(&self, ctx: &PlacementContext, candidates: &[SensorUnit]) -> Result<SensorLayout> {
        let mut sensors = ctx.base.clone();
        for id in &self.selected {
            let unit = candidates
                .iter()
                .find(|c| &c.id == id)
                .ok_or_else(|| Error::Validation(format!("selected site '{id}' is not a candidate")))?;
            sensors.push(unit.clone());
        }
        SensorLayout::new(sensors)
    }
}

/// Adds, one at a time, the site with the largest fused improvement.
///
/// Ties go to the site listed first among the candidates.
pub fn greedy_select(candidates: &[SensorUnit], budget: usize, ctx: &PlacementContext) -> Result<PlacementResult> {
    if budget == 0 {
        return Err(Error::Validation("placement budget must be >= 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Validation("no candidate sites".into()));
    }
    SensorLayout::new(candidates.to_vec())?;
    let budget = if budget > candidates.len() {
        tracing::warn!(budget, candidates = candidates.len(), "budget exceeds candidate count; selecting all");
        candidates.len()
    } else {
        budget
    };

    let base_score = evaluate_subset(ctx, &[])?;
    let mut current = base_score;
    let mut chosen: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    while chosen.len() < budget {
        let remaining: Vec<usize> = (0..candidates.len()).filter(|i| !chosen.contains(i)).collect();
        let scored = remaining
            .par_iter()
            .map(|&i| {
                let mut set: Vec<&SensorUnit> = chosen.iter().map(|&j| &candidates[j]).collect();
                set.push(&candidates[i]);
                Ok((i, evaluate_subset(ctx, &set)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let (best, score) = scored
            .into_iter()
            .reduce(|a, b| if b.1.key() > a.1.key() { b } else { a })
            .expect("at least one remaining candidate");
        steps.push(PlacementStep {
            site: candidates[best].id.clone(),
            marginal_gain: score.avoidance_rate() - current.avoidance_rate(),
            score,
        });
        chosen.push(best);
        current = score;
    }
    Ok(PlacementResult {
        selected: chosen.iter().map(|&i| candidates[i].id.clone()).collect(),
        steps,
        base_score,
        score: current,
    })
}
