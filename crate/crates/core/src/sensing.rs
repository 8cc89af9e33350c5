//! Sensor units, geometric detection and the consecutive-frame confirmation rule.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{visible_fraction, Frustum, SensorPose, Silhouette, Vec2, Vec3};
use crate::scenario::{ActorState, WorldState};

/// Horizontal resolution the pixel thresholds refer to.
pub const REFERENCE_IMAGE_WIDTH_PX: f64 = 1920.0;
pub const REFERENCE_IMAGE_HEIGHT_PX: f64 = 1080.0;
pub const CAMERA_HFOV_DEG: f64 = 90.0;
/// Wider field of view listed for the dataset cameras; selectable per sensor.
pub const CAMERA_HFOV_WIDE_DEG: f64 = 110.0;
pub const LIDAR_HFOV_DEG: f64 = 72.0;
pub const LIDAR_VFOV_DEG: f64 = 30.0;
pub const SENSOR_RANGE_M: f64 = 250.0;
pub const RSU_HEIGHT_M: f64 = 7.0;
pub const RSU_PITCH_DEG: f64 = -15.0;
pub const RSU_LATENCY_S: f64 = 0.025;
pub const FRAME_RATE_HZ: f64 = 10.0;
pub const VRU_TARGET_ID: &str = "VRU";

/// Vertical field of view of a camera with the reference 16:9 sensor.
pub fn camera_vfov_deg(hfov_deg: f64) -> f64 {
    let half = (hfov_deg.to_radians() / 2.0).tan() * REFERENCE_IMAGE_HEIGHT_PX / REFERENCE_IMAGE_WIDTH_PX;
    2.0 * half.atan().to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mount {
    Vut,
    Rsu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    #[default]
    Camera,
    Lidar,
}

/// A sensor with its mounting pose.
///
/// RSU poses are in world coordinates. VUT poses are in the vehicle frame:
/// `x` forward from the footprint center, `y` to the left, `yaw` relative to
/// the vehicle heading. `z` is always height above ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorUnit {
    pub id: String,
    pub mount: Mount,
    pub kind: SensorKind,
    pub pose: SensorPose,
    pub hfov: f64,
    pub vfov: f64,
    pub range: f64,
    pub frame_rate: f64,
    pub latency: f64,
}

impl SensorUnit {
    pub fn camera(id: impl Into<String>, mount: Mount, pose: SensorPose, latency: f64) -> Self {
        Self {
            id: id.into(),
            mount,
            kind: SensorKind::Camera,
            pose,
            hfov: CAMERA_HFOV_DEG.to_radians(),
            vfov: camera_vfov_deg(CAMERA_HFOV_DEG).to_radians(),
            range: SENSOR_RANGE_M,
            frame_rate: FRAME_RATE_HZ,
            latency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("sensor '{}': {what}", self.id)));
        if self.id.trim().is_empty() {
            return Err(Error::Validation("sensor id must not be empty".into()));
        }
        if !(self.pose.z > 0.0) {
            return bad("mount height z must be > 0");
        }
        if !(self.range > 0.0) || !self.range.is_finite() {
            return bad("range must be > 0");
        }
        if !(self.latency >= 0.0) || !self.latency.is_finite() {
            return bad("latency must be >= 0");
        }
        if !(self.frame_rate > 0.0) || !self.frame_rate.is_finite() {
            return bad("frame rate must be > 0");
        }
        for fov in [self.hfov, self.vfov] {
            if !(fov > 0.0 && fov < std::f64::consts::PI) {
                return bad("field of view must lie in (0, 180) degrees");
            }
        }
        let p = self.pose;
        if ![p.x, p.y, p.z, p.yaw, p.pitch].iter().all(|v| v.is_finite()) {
            return bad("pose must be finite");
        }
        Ok(())
    }

    /// World pose given the current VUT state.
    pub fn world_pose(&self, vut: &ActorState) -> SensorPose {
        match self.mount {
            Mount::Rsu => self.pose,
            Mount::Vut => {
                let p = vut.pose.transform_point(Vec2::new(self.pose.x, self.pose.y));
                SensorPose {
                    x: p.x,
                    y: p.y,
                    z: self.pose.z,
                    yaw: vut.pose.heading + self.pose.yaw,
                    pitch: self.pose.pitch,
                }
            }
        }
    }

    pub fn frustum(&self, vut: &ActorState) -> Frustum {
        Frustum {
            pose: self.world_pose(vut),
            hfov: self.hfov,
            vfov: self.vfov,
            range: self.range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionModel {
    /// When false no sensor ever reports anything.
    pub enabled: bool,
    pub min_visible_fraction: f64,
    /// Minimum apparent width in pixels of a reference-width image.
    pub min_apparent_width_px: f64,
    pub miss_probability: f64,
    /// Taken from the run's master seed, not from the config table.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self {
            enabled: true,
            min_visible_fraction: 0.5,
            min_apparent_width_px: 15.0,
            miss_probability: 0.0,
            seed: 0,
        }
    }
}

impl DetectionModel {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_visible_fraction) {
            return Err(Error::Validation(format!(
                "detection.min_visible_fraction must be in [0, 1], got {}",
                self.min_visible_fraction
            )));
        }
        if !(self.min_apparent_width_px >= 0.0) || !self.min_apparent_width_px.is_finite() {
            return Err(Error::Validation(format!(
                "detection.min_apparent_width_px must be >= 0, got {}",
                self.min_apparent_width_px
            )));
        }
        if !(0.0..=1.0).contains(&self.miss_probability) {
            return Err(Error::Validation(format!(
                "detection.miss_probability must be in [0, 1], got {}",
                self.miss_probability
            )));
        }
        Ok(())
    }

    /// Pixel threshold converted to radians for one sensor's optics.
    pub fn min_apparent_width_rad(&self, sensor: &SensorUnit) -> f64 {
        self.min_apparent_width_px * sensor.hfov / REFERENCE_IMAGE_WIDTH_PX
    }

    /// Uniform draw in [0, 1) that depends only on (seed, sensor id, frame).
    pub fn coin(&self, sensor_id: &str, frame: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(sensor_stream(sensor_id));
        // gen::<f64> consumes one u64, i.e. two 32-bit words.
        rng.set_word_pos(frame as u128 * 2);
        rng.gen::<f64>()
    }
}

fn sensor_stream(sensor_id: &str) -> u64 {
    let digest = Sha256::digest(sensor_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub frame: usize,
    pub sensor_id: String,
    pub target_id: String,
    pub visible_fraction: f64,
    /// rad
    pub apparent_width: f64,
    pub frame_time: f64,
    pub available_at: f64,
}

/// Angle subtended by the target's extent perpendicular to the line of sight.
///
/// The extent is `L|sin a| + W|cos a|` where `a` is the angle between the
/// target heading and the horizontal line of sight; distance is measured to
/// the silhouette's center.
pub fn apparent_angular_width(sensor: &SensorPose, target: &Silhouette) -> Result<f64> {
    let center = Vec3::from_ground(target.anchor, target.height / 2.0);
    let dist = (center - sensor.origin()).norm();
    if !(dist > 0.0) {
        return Err(Error::Contract("target lies at the sensor origin".into()));
    }
    let los = target.anchor - Vec2::new(sensor.x, sensor.y);
    let extent = if los.norm() > 1e-12 {
        let los = los * (1.0 / los.norm());
        let along = Vec2::from_heading(target.heading);
        let cos_a = along.dot(los).abs();
        let sin_a = along.cross(los).abs();
        target.length * sin_a + target.width * cos_a
    } else {
        // Looking straight down; the larger horizontal extent is what shows.
        target.length.max(target.width)
    };
    Ok(2.0 * (extent / 2.0 / dist).atan())
}

/// Geometric detection of the VRU by one sensor at one frame.
pub fn sense_frame(sensor: &SensorUnit, model: &DetectionModel, world: &WorldState<'_>, frame: usize) -> Option<DetectionEvent> {
    if !model.enabled {
        return None;
    }
    let frustum = sensor.frustum(&world.vut);
    let silhouette = world.vru.silhouette();
    let fraction = visible_fraction(&frustum, &silhouette, world.occluders);
    if fraction < model.min_visible_fraction || fraction == 0.0 {
        return None;
    }
    let width = apparent_angular_width(&frustum.pose, &silhouette).ok()?;
    if width < model.min_apparent_width_rad(sensor) {
        return None;
    }
    if model.miss_probability > 0.0 && model.coin(&sensor.id, frame) <= model.miss_probability {
        return None;
    }
    Some(DetectionEvent {
        frame,
        sensor_id: sensor.id.clone(),
        target_id: VRU_TARGET_ID.to_string(),
        visible_fraction: fraction,
        apparent_width: width,
        frame_time: world.time,
        available_at: world.time + sensor.latency,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confirmation {
    /// Frame of the k-th consecutive event.
    pub frame: usize,
    pub time: f64,
}

/// One confirmation per maximal run of at least `k` consecutive frames.
///
/// `events` must belong to a single sensor and be sorted by frame.
pub fn confirm_stream(events: &[DetectionEvent], k: usize) -> Result<Vec<Confirmation>> {
    if k == 0 {
        return Err(Error::Contract("confirmation count k must be >= 1".into()));
    }
    let mut out = Vec::new();
    let mut run = 0usize;
    let mut prev: Option<usize> = None;
    for e in events {
        match prev {
            Some(p) if e.frame <= p => {
                return Err(Error::Contract(format!(
                    "events must be strictly increasing in frame (got {} after {p})",
                    e.frame
                )))
            }
            Some(p) if e.frame == p + 1 => run += 1,
            _ => run = 1,
        }
        if run == k {
            out.push(Confirmation {
                frame: e.frame,
                time: e.available_at,
            });
        }
        prev = Some(e.frame);
    }
    Ok(out)
}

/// Which sensors' confirmations may trigger braking.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Fusion {
    AnySensor,
    VutOnly,
    Subset(Vec<String>),
}

impl Fusion {
    pub fn subset<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Fusion::Subset(ids.into_iter().map(Into::into).collect())
    }

    /// Sensors selected by this fusion rule, in layout order.
    pub fn members<'a>(&self, sensors: &'a [SensorUnit]) -> Result<Vec<&'a SensorUnit>> {
        match self {
            Fusion::AnySensor => Ok(sensors.iter().collect()),
            Fusion::VutOnly => Ok(sensors.iter().filter(|s| s.mount == Mount::Vut).collect()),
            Fusion::Subset(ids) => {
                for id in ids {
                    if !sensors.iter().any(|s| &s.id == id) {
                        return Err(Error::Validation(format!("unknown sensor id '{id}' in fusion subset")));
                    }
                }
                Ok(sensors.iter().filter(|s| ids.contains(&s.id)).collect())
            }
        }
    }

    /// Stable name used in file names and report rows.
    pub fn label(&self) -> String {
        match self {
            Fusion::AnySensor => "any-sensor".into(),
            Fusion::VutOnly => "vut-only".into(),
            Fusion::Subset(ids) => ids.join("+"),
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Earliest confirmation among the fused sensors, each confirmed on its own stream.
pub fn first_confirmed_time(sensors: &[SensorUnit], events: &[DetectionEvent], k: usize, fusion: &Fusion) -> Result<Option<f64>> {
    let members = fusion.members(sensors)?;
    let mut best: Option<f64> = None;
    for sensor in members {
        let mut stream: Vec<DetectionEvent> = events.iter().filter(|e| e.sensor_id == sensor.id).cloned().collect();
        stream.sort_by_key(|e| e.frame);
        if let Some(c) = confirm_stream(&stream, k)?.first() {
            best = Some(best.map_or(c.time, |b| b.min(c.time)));
        }
    }
    Ok(best)
}

/// Ordered sensor list: the VUT unit(s) followed by roadside units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub sensors: Vec<SensorUnit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorRecord {
    id: String,
    mount: Mount,
    #[serde(default)]
    kind: SensorKind,
    x_m: f64,
    y_m: f64,
    z_m: f64,
    #[serde(default)]
    yaw_deg: f64,
    #[serde(default)]
    pitch_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    hfov_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vfov_deg: Option<f64>,
    #[serde(default = "default_range")]
    range_m: f64,
    #[serde(default = "default_frame_rate")]
    frame_rate_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency_s: Option<f64>,
}

fn default_range() -> f64 {
    SENSOR_RANGE_M
}

fn default_frame_rate() -> f64 {
    FRAME_RATE_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    #[serde(rename = "sensor", default)]
    sensors: Vec<SensorRecord>,
}

impl From<SensorRecord> for SensorUnit {
    fn from(r: SensorRecord) -> Self {
        let (hfov_default, vfov_default) = match r.kind {
            SensorKind::Camera => {
                let h = r.hfov_deg.unwrap_or(CAMERA_HFOV_DEG);
                (CAMERA_HFOV_DEG, camera_vfov_deg(h))
            }
            SensorKind::Lidar => (LIDAR_HFOV_DEG, LIDAR_VFOV_DEG),
        };
        let latency_default = match r.mount {
            Mount::Vut => 0.0,
            Mount::Rsu => RSU_LATENCY_S,
        };
        SensorUnit {
            id: r.id,
            mount: r.mount,
            kind: r.kind,
            pose: SensorPose {
                x: r.x_m,
                y: r.y_m,
                z: r.z_m,
                yaw: r.yaw_deg.to_radians(),
                pitch: r.pitch_deg.to_radians(),
            },
            hfov: r.hfov_deg.unwrap_or(hfov_default).to_radians(),
            vfov: r.vfov_deg.unwrap_or(vfov_default).to_radians(),
            range: r.range_m,
            frame_rate: r.frame_rate_hz,
            latency: r.latency_s.unwrap_or(latency_default),
        }
    }
}

impl From<&SensorUnit> for SensorRecord {
    fn from(s: &SensorUnit) -> Self {
        // Rounded so written layouts read back as the same degrees.
        let deg = |rad: f64| (rad.to_degrees() * 1e9).round() / 1e9;
        SensorRecord {
            id: s.id.clone(),
            mount: s.mount,
            kind: s.kind,
            x_m: s.pose.x,
            y_m: s.pose.y,
            z_m: s.pose.z,
            yaw_deg: deg(s.pose.yaw),
            pitch_deg: deg(s.pose.pitch),
            hfov_deg: Some(deg(s.hfov)),
            vfov_deg: Some(deg(s.vfov)),
            range_m: s.range,
            frame_rate_hz: s.frame_rate,
            latency_s: Some(s.latency),
        }
    }
}

impl SensorLayout {
    pub fn new(sensors: Vec<SensorUnit>) -> Result<Self> {
        let layout = Self { sensors };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.sensors {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate sensor id '{}'", s.id)));
            }
        }
        Ok(())
    }

    pub fn rsu_count(&self) -> usize {
        self.sensors.iter().filter(|s| s.mount == Mount::Rsu).count()
    }

    pub fn rsus(&self) -> impl Iterator<Item = &SensorUnit> {
        self.sensors.iter().filter(|s| s.mount == Mount::Rsu)
    }

    pub fn get(&self, id: &str) -> Option<&SensorUnit> {
        self.sensors.iter().find(|s| s.id == id)
    }

    /// Parses the `[[sensor]]` table format. Angles are degrees.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: LayoutFile = toml::from_str(text).map_err(|e| Error::Config(format!("sensor layout: {e}")))?;
        let mut sensors: Vec<SensorUnit> = file.sensors.into_iter().map(SensorUnit::from).collect();
        // VUT units first, otherwise file order.
        sensors.sort_by_key(|s| s.mount != Mount::Vut);
        Self::new(sensors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        let file = LayoutFile {
            sensors: self.sensors.iter().map(SensorRecord::from).collect(),
        };
        toml::to_string(&file).expect("layout serializes")
    }

    /// Forward camera on the VUT plus the twelve-unit intersection layout.
    pub fn default_layout() -> Self {
        let mut sensors = vec![default_vut_sensor()];
        sensors.extend(default_rsu_layout());
        Self { sensors }
    }
}

pub fn default_vut_sensor() -> SensorUnit {
    SensorUnit::camera(
        "VUT",
        Mount::Vut,
        SensorPose {
            x: 2.0,
            y: 0.0,
            z: 1.6,
            yaw: 0.0,
            pitch: 0.0,
        },
        0.0,
    )
}

/// Twelve RSUs at 7 m on the corners and masts of the intersection at the
/// origin. Units 8 to 11 watch the north and west arms only.
pub fn default_rsu_layout() -> Vec<SensorUnit> {
    const SITES: [(f64, f64, f64); 12] = [
        (8.0, -8.0, 135.0),
        (-8.0, -8.0, 45.0),
        (8.0, 8.0, -90.0),
        (-8.0, 8.0, -45.0),
        (-5.0, -20.0, 90.0),
        (20.0, 6.0, 180.0),
        (5.0, 20.0, -90.0),
        (-20.0, 5.0, 0.0),
        (-5.0, 12.0, 90.0),
        (5.0, 12.0, 90.0),
        (-12.0, -5.0, 180.0),
        (-12.0, 5.0, 180.0),
    ];
    SITES
        .iter()
        .enumerate()
        .map(|(i, &(x, y, yaw))| {
            SensorUnit::camera(
                format!("RSU{i}"),
                Mount::Rsu,
                SensorPose {
                    x,
                    y,
                    z: RSU_HEIGHT_M,
                    yaw: yaw.to_radians(),
                    pitch: RSU_PITCH_DEG.to_radians(),
                },
                RSU_LATENCY_S,
            )
        })
        .collect()
}
