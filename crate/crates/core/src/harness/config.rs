//! Sweep configuration file.
//!
//! TOML, strict: unknown keys are rejected. Angles are degrees, speeds km/h,
//! lengths meters. See `configs/example_config.toml` for every key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aeb::{AebPolicy, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::scenario::{ScenarioKind, ScenarioParams};
use crate::sensing::{DetectionModel, Fusion, Mount, SensorLayout};

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_OUTPUT_DIR: &str = "vru-sim-out";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    workers: Option<usize>,
    scenarios: Option<Vec<String>>,
    speeds_kmh: Option<Vec<u32>>,
    speed_min_kmh: Option<u32>,
    speed_max_kmh: Option<u32>,
    speed_step_kmh: Option<u32>,
    scene_yaw_deg: Option<Vec<f64>>,
    layout: Option<PathBuf>,
    rsu_count: Option<usize>,
    subsets: Option<Vec<String>>,
    #[serde(default)]
    custom_subsets: Vec<CustomSubset>,
    dt_s: Option<f64>,
    heatmaps: Option<bool>,
    #[serde(default)]
    policy: AebPolicy,
    #[serde(default)]
    detection: DetectionModel,
    #[serde(default)]
    scenario: ScenarioParams,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomSubset {
    name: String,
    sensors: Vec<String>,
}

/// A named fusion rule evaluated in every scenario cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetDef {
    pub name: String,
    pub fusion: Fusion,
}

/// Fully resolved sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// 0 lets the thread pool pick.
    pub workers: usize,
    /// Speeds per scenario, in scenario order.
    pub sweep: Vec<(ScenarioKind, Vec<u32>)>,
    pub scene_yaw_deg: Vec<f64>,
    pub layout: SensorLayout,
    pub subsets: Vec<SubsetDef>,
    pub dt: f64,
    pub heatmaps: bool,
    pub policy: AebPolicy,
    pub detection: DetectionModel,
    pub scenario: ScenarioParams,
}

/// Command-line adjustments applied after loading.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub subsets: Option<Vec<String>>,
    pub speeds_kmh: Option<Vec<u32>>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses config text; relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
    resolve(file, base_dir)
}

impl Default for RunConfig {
    fn default() -> Self {
        resolve(ConfigFile::default(), Path::new(".")).expect("defaults are valid")
    }
}

fn resolve(file: ConfigFile, base_dir: &Path) -> Result<RunConfig> {
    file.scenario.validate().map_err(|e| config_err(e.to_string()))?;
    let mut scenarios = match &file.scenarios {
        None => ScenarioKind::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| n.parse::<ScenarioKind>().map_err(|e| config_err(e.to_string())))
            .collect::<Result<Vec<_>>>()?,
    };
    if scenarios.is_empty() {
        return Err(config_err("scenarios must name at least one test case"));
    }
    scenarios.sort();
    scenarios.dedup();

    if file.speeds_kmh.is_some() && (file.speed_min_kmh.is_some() || file.speed_max_kmh.is_some() || file.speed_step_kmh.is_some()) {
        return Err(config_err("give either speeds_kmh or speed_min/max/step_kmh, not both"));
    }
    let step = file.speed_step_kmh.unwrap_or(ScenarioKind::SPEED_STEP_KMH);
    if step == 0 {
        return Err(config_err("speed_step_kmh must be > 0"));
    }
    let mut sweep = Vec::new();
    for &kind in &scenarios {
        let (lo, hi) = kind.speed_range_kmh();
        let speeds: Vec<u32> = match &file.speeds_kmh {
            Some(list) => {
                let mut v = list.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
            None => {
                let min = file.speed_min_kmh.unwrap_or(lo).max(lo);
                let max = file.speed_max_kmh.unwrap_or(hi);
                if let Some(m) = file.speed_min_kmh {
                    // A window starting below CBLA's minimum is fine when other cases use it.
                    if m < lo && (scenarios.len() == 1 || m < ScenarioKind::Cpnc50.speed_range_kmh().0) {
                        return Err(range_error(kind, m));
                    }
                }
                if max > hi {
                    return Err(range_error(kind, max));
                }
                (min..=max).step_by(step as usize).collect()
            }
        };
        for &v in &speeds {
            kind.check_speed(v).map_err(|_| range_error(kind, v))?;
        }
        if speeds.is_empty() {
            return Err(config_err(format!("no speeds selected for {kind}")));
        }
        sweep.push((kind, speeds));
    }

    let scene_yaw_deg = file.scene_yaw_deg.unwrap_or_else(|| vec![0.0]);
    if scene_yaw_deg.is_empty() || scene_yaw_deg.iter().any(|y| !y.is_finite()) {
        return Err(config_err("scene_yaw_deg must list at least one finite angle"));
    }

    let layout = match &file.layout {
        Some(p) => {
            let full = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
            SensorLayout::load(&full).map_err(|e| match e {
                Error::Io { path, source } => config_err(format!("cannot read layout {}: {source}", path.display())),
                other => other,
            })?
        }
        None => SensorLayout::default_layout(),
    };
    if let Some(n) = file.rsu_count {
        if layout.rsu_count() != n {
            return Err(config_err(format!("layout has {} RSUs, rsu_count expects {n}", layout.rsu_count())));
        }
    }
    for s in &layout.sensors {
        if (s.frame_rate - file.scenario.frame_rate_hz).abs() > 1e-9 {
            return Err(config_err(format!(
                "sensor '{}' frame rate {} Hz differs from scenario.frame_rate_hz {}",
                s.id, s.frame_rate, file.scenario.frame_rate_hz
            )));
        }
    }

    let tokens = file
        .subsets
        .clone()
        .unwrap_or_else(|| vec!["vut-only".into(), "each-rsu".into(), "any-sensor".into()]);
    let subsets = resolve_subsets(&tokens, &file.custom_subsets, &layout)?;

    let dt = file.dt_s.unwrap_or(DEFAULT_DT);
    let period = 1.0 / file.scenario.frame_rate_hz;
    if !(dt > 0.0) || dt > period / 2.0 + 1e-12 || ((period / dt) - (period / dt).round()).abs() > 1e-6 {
        return Err(config_err(format!(
            "dt_s must divide the frame period {period} s and be at most half of it, got {dt}"
        )));
    }

    file.policy.validate().map_err(|e| config_err(e.to_string()))?;
    file.detection.validate().map_err(|e| config_err(e.to_string()))?;

    let seed = file.seed.unwrap_or(DEFAULT_SEED);
    let mut detection = file.detection;
    detection.seed = seed;
    Ok(RunConfig {
        seed,
        output_dir: file
            .output_dir
            .map(|p| if p.is_absolute() { p } else { base_dir.join(p) })
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        workers: file.workers.unwrap_or(0),
        sweep,
        scene_yaw_deg,
        layout,
        subsets,
        dt,
        heatmaps: file.heatmaps.unwrap_or(true),
        policy: file.policy,
        detection,
        scenario: file.scenario,
    })
}

fn range_error(kind: ScenarioKind, v: u32) -> Error {
    let (lo, hi) = kind.speed_range_kmh();
    config_err(format!(
        "{kind} VUT speed {v} km/h is outside the test protocol range {lo}-{hi} km/h in {} km/h steps",
        ScenarioKind::SPEED_STEP_KMH
    ))
}

fn resolve_subsets(tokens: &[String], custom: &[CustomSubset], layout: &SensorLayout) -> Result<Vec<SubsetDef>> {
    let mut out: Vec<SubsetDef> = Vec::new();
    for token in tokens {
        match token.as_str() {
            "vut-only" => {
                if !layout.sensors.iter().any(|s| s.mount == Mount::Vut) {
                    return Err(config_err("subset 'vut-only' needs a VUT-mounted sensor in the layout"));
                }
                out.push(SubsetDef {
                    name: "vut-only".into(),
                    fusion: Fusion::VutOnly,
                });
            }
            "any-sensor" => out.push(SubsetDef {
                name: "any-sensor".into(),
                fusion: Fusion::AnySensor,
            }),
            "each-rsu" => out.extend(layout.rsus().map(|s| SubsetDef {
                name: s.id.clone(),
                fusion: Fusion::subset([s.id.clone()]),
            })),
            id => {
                if let Some(c) = custom.iter().find(|c| c.name == id) {
                    out.push(SubsetDef {
                        name: c.name.clone(),
                        fusion: Fusion::Subset(c.sensors.clone()),
                    });
                } else if layout.get(id).is_some() {
                    out.push(SubsetDef {
                        name: id.to_string(),
                        fusion: Fusion::subset([id]),
                    });
                } else {
                    return Err(config_err(format!(
                        "unknown subset '{id}'; use vut-only, any-sensor, each-rsu, a sensor id or a custom_subsets name"
                    )));
                }
            }
        }
    }
    for c in custom {
        if !valid_name(&c.name) {
            return Err(config_err(format!(
                "custom subset name '{}' may only use letters, digits, '-' and '_'",
                c.name
            )));
        }
        if c.sensors.is_empty() {
            return Err(config_err(format!("custom subset '{}' lists no sensors", c.name)));
        }
        Fusion::Subset(c.sensors.clone())
            .members(&layout.sensors)
            .map_err(|e| config_err(format!("custom subset '{}': {e}", c.name)))?;
        if !out.iter().any(|s| s.name == c.name) {
            out.push(SubsetDef {
                name: c.name.clone(),
                fusion: Fusion::Subset(c.sensors.clone()),
            });
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|s| seen.insert(s.name.clone()));
    Ok(out)
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.detection.seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(names) = &o.subsets {
            for n in names {
                if !self.subsets.iter().any(|s| &s.name == n) {
                    return Err(config_err(format!("subset filter names unknown subset '{n}'")));
                }
            }
            self.subsets.retain(|s| names.contains(&s.name));
        }
        if let Some(speeds) = &o.speeds_kmh {
            for v in speeds {
                if !self.sweep.iter().any(|(k, _)| k.allowed_speeds_kmh().contains(v)) {
                    return Err(config_err(format!("speed filter {v} km/h is not a test protocol speed")));
                }
            }
            for (_, list) in &mut self.sweep {
                list.retain(|v| speeds.contains(v));
            }
        }
        Ok(())
    }

    /// Number of (scenario, speed, yaw, subset) cells.
    pub fn cell_count(&self) -> usize {
        let runs: usize = self.sweep.iter().map(|(_, v)| v.len()).sum();
        runs * self.scene_yaw_deg.len() * self.subsets.len()
    }

    /// SHA-256 over everything that affects results (not output dir or workers).
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            seed: u64,
            sweep: &'a [(ScenarioKind, Vec<u32>)],
            scene_yaw_deg: &'a [f64],
            layout: &'a SensorLayout,
            subsets: &'a [SubsetDef],
            dt: f64,
            heatmaps: bool,
            policy: &'a AebPolicy,
            detection: &'a DetectionModel,
            scenario: &'a ScenarioParams,
        }
        let view = Hashed {
            seed: self.seed,
            sweep: &self.sweep,
            scene_yaw_deg: &self.scene_yaw_deg,
            layout: &self.layout,
            subsets: &self.subsets,
            dt: self.dt,
            heatmaps: self.heatmaps,
            policy: &self.policy,
            detection: &self.detection,
            scenario: &self.scenario,
        };
        let json = serde_json::to_string(&view).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn speeds_by_kind(&self) -> BTreeMap<ScenarioKind, Vec<u32>> {
        self.sweep.iter().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_cbna_config_expands_full_sweep() {
        let cfg = parse_config("scenarios = [\"CBNA\"]\n", Path::new(".")).unwrap();
        assert_eq!(cfg.sweep, vec![(ScenarioKind::Cbna, (20..=60).step_by(5).collect())]);
        assert_eq!(cfg.layout.rsu_count(), 12);
        assert_eq!(cfg.subsets.len(), 14);
    }

    #[test]
    fn cbla_at_20_is_rejected() {
        let err = parse_config("scenarios = [\"CBLA\"]\nspeeds_kmh = [20, 30]\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("25-60"), "{err}");
        let err = parse_config("scenarios = [\"CBLA\"]\nspeed_min_kmh = 20\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("CBLA"), "{err}");
    }

    #[test]
    fn negative_deceleration_is_rejected() {
        let err = parse_config("[policy]\ndeceleration_mps2 = -7.72\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("deceleration"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("sped = 3\n", Path::new(".")).is_err());
        assert!(parse_config("[policy]\nbrake = 1.0\n", Path::new(".")).is_err());
    }

    #[test]
    fn default_sweep_has_26_runs() {
        let cfg = RunConfig::default();
        let runs: usize = cfg.sweep.iter().map(|(_, v)| v.len()).sum();
        assert_eq!(runs, 26);
        assert_eq!(cfg.cell_count(), 26 * 14);
    }

    #[test]
    fn hash_ignores_output_dir_and_workers() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        b.workers = 7;
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn custom_subset_and_filters() {
        let text = "subsets = [\"corners\", \"RSU2\"]\n[[custom_subsets]]\nname = \"corners\"\nsensors = [\"RSU0\", \"RSU1\"]\n";
        let mut cfg = parse_config(text, Path::new(".")).unwrap();
        assert_eq!(cfg.subsets.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), ["corners", "RSU2"]);
        cfg.apply(&Overrides {
            subsets: Some(vec!["RSU2".into()]),
            speeds_kmh: Some(vec![30]),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(cfg.cell_count(), 3);
        let bad = "[[custom_subsets]]\nname = \"x\"\nsensors = [\"RSU42\"]\n";
        assert!(parse_config(bad, Path::new(".")).is_err());
    }
}
