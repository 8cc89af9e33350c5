//! EuroNCAP AEB VRU test cases as parametric world timelines.
//!
//! The canonical layout puts the test intersection at the origin. The VUT
//! drives north (+y) in the right-hand lane; crossing road users come from
//! the VUT's right (+x side). Start positions are back-computed so that,
//! without braking, both actors reach the conflict point at
//! `nominal_collision_time`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, obb_overlap, OrientedBox, Pose2, Prism, Silhouette, Vec2};

pub const KMH_TO_MPS: f64 = 1.0 / 3.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "CPNC50", alias = "CPNC-50")]
    Cpnc50,
    #[serde(rename = "CBNA")]
    Cbna,
    #[serde(rename = "CBLA")]
    Cbla,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Cpnc50, ScenarioKind::Cbna, ScenarioKind::Cbla];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Cpnc50 => "CPNC50",
            ScenarioKind::Cbna => "CBNA",
            ScenarioKind::Cbla => "CBLA",
        }
    }

    /// Inclusive VUT speed range in km/h.
    pub fn speed_range_kmh(self) -> (u32, u32) {
        match self {
            ScenarioKind::Cpnc50 | ScenarioKind::Cbna => (20, 60),
            ScenarioKind::Cbla => (25, 60),
        }
    }

    pub const SPEED_STEP_KMH: u32 = 5;

    pub fn allowed_speeds_kmh(self) -> Vec<u32> {
        let (lo, hi) = self.speed_range_kmh();
        (lo..=hi).step_by(Self::SPEED_STEP_KMH as usize).collect()
    }

    pub fn vru_speed_kmh(self) -> f64 {
        match self {
            ScenarioKind::Cpnc50 => 5.0,
            ScenarioKind::Cbna | ScenarioKind::Cbla => 15.0,
        }
    }

    pub fn vru_class(self) -> ActorClass {
        match self {
            ScenarioKind::Cpnc50 => ActorClass::Pedestrian,
            ScenarioKind::Cbna | ScenarioKind::Cbla => ActorClass::Cyclist,
        }
    }

    pub fn is_crossing(self) -> bool {
        !matches!(self, ScenarioKind::Cbla)
    }

    pub fn check_speed(self, vut_speed_kmh: u32) -> Result<()> {
        let allowed = self.allowed_speeds_kmh();
        if allowed.contains(&vut_speed_kmh) {
            Ok(())
        } else {
            let (lo, hi) = self.speed_range_kmh();
            Err(Error::Validation(format!(
                "{} VUT speed {} km/h is not allowed; expected one of {:?} ({}-{} km/h in {} km/h steps)",
                self.name(),
                vut_speed_kmh,
                allowed,
                lo,
                hi,
                Self::SPEED_STEP_KMH
            )))
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "").as_str() {
            "CPNC50" => Ok(ScenarioKind::Cpnc50),
            "CBNA" => Ok(ScenarioKind::Cbna),
            "CBLA" => Ok(ScenarioKind::Cbla),
            _ => Err(Error::Validation(format!(
                "unknown scenario '{s}'; expected CPNC50, CBNA or CBLA"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorClass {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl ActorClass {
    pub fn name(self) -> &'static str {
        match self {
            ActorClass::Vehicle => "vehicle",
            ActorClass::Pedestrian => "pedestrian",
            ActorClass::Cyclist => "cyclist",
        }
    }
}

/// Body dimensions in meters; `length` runs along the heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorDims {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

/// Constant-speed motion along a polyline of footprint-center waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTrack {
    pub class: ActorClass,
    pub dims: ActorDims,
    pub path: Vec<Vec2>,
    /// m/s
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub class: ActorClass,
    pub dims: ActorDims,
    pub pose: Pose2,
    pub speed: f64,
}

impl ActorState {
    pub fn footprint(&self) -> OrientedBox {
        OrientedBox {
            center: self.pose.position,
            half_long: self.dims.length / 2.0,
            half_lat: self.dims.width / 2.0,
            heading: self.pose.heading,
        }
    }

    pub fn silhouette(&self) -> Silhouette {
        Silhouette::with_default_grid(
            self.pose.position,
            self.pose.heading,
            self.dims.length,
            self.dims.width,
            self.dims.height,
        )
        .expect("validated actor dimensions")
    }
}

impl ActorTrack {
    pub fn validate(&self) -> Result<()> {
        if self.path.len() < 2 {
            return Err(Error::Validation("actor path needs at least 2 waypoints".into()));
        }
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return Err(Error::Validation(format!("actor speed must be >= 0, got {}", self.speed)));
        }
        let d = self.dims;
        if !(d.length > 0.0 && d.width > 0.0 && d.height > 0.0) {
            return Err(Error::Validation("actor dimensions must be positive".into()));
        }
        if self.path.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("actor path has repeated waypoints".into()));
        }
        Ok(())
    }

    pub fn path_length(&self) -> f64 {
        self.path.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Pose after travelling `arc` meters along the path, clamped to its ends.
    pub fn pose_at_arc(&self, arc: f64) -> (Pose2, bool) {
        let mut remaining = arc.max(0.0);
        for w in self.path.windows(2) {
            let seg = w[1] - w[0];
            let len = seg.norm();
            let heading = seg.y.atan2(seg.x);
            if remaining <= len {
                let pos = w[0] + seg * (remaining / len);
                return (Pose2::new(pos, heading), false);
            }
            remaining -= len;
        }
        let n = self.path.len();
        let seg = self.path[n - 1] - self.path[n - 2];
        (Pose2::new(self.path[n - 1], seg.y.atan2(seg.x)), true)
    }

    pub fn state_at_arc(&self, arc: f64, speed: f64) -> ActorState {
        let (pose, ended) = self.pose_at_arc(arc);
        ActorState {
            class: self.class,
            dims: self.dims,
            pose,
            speed: if ended && arc > self.path_length() - 1e-12 { 0.0 } else { speed },
        }
    }

    fn rotated(&self, yaw: f64) -> Self {
        Self {
            path: self.path.iter().map(|p| p.rotated(yaw)).collect(),
            ..self.clone()
        }
    }
}

/// Pose and speed of an actor moving at constant speed along its track.
///
/// Past the final waypoint the actor stays there and reports speed 0.
pub fn actor_state_at(track: &ActorTrack, t: f64) -> ActorState {
    let arc = track.speed * t.max(0.0);
    let (pose, ended) = track.pose_at_arc(arc);
    let past_end = ended && arc >= track.path_length();
    ActorState {
        class: track.class,
        dims: track.dims,
        pose,
        speed: if past_end { 0.0 } else { track.speed },
    }
}

/// Tunable scenario geometry. Every field has a documented default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub frame_rate_hz: f64,
    /// Minimum unbraked time to the conflict point.
    pub lead_time_s: f64,
    pub min_start_distance_m: f64,
    /// Simulated time after the nominal collision.
    pub tail_time_s: f64,
    pub lane_width_m: f64,
    pub vut_length_m: f64,
    pub vut_width_m: f64,
    pub vut_height_m: f64,
    pub pedestrian_length_m: f64,
    pub pedestrian_width_m: f64,
    pub pedestrian_height_m: f64,
    pub cyclist_length_m: f64,
    pub cyclist_width_m: f64,
    pub cyclist_height_m: f64,
    pub parked_length_m: f64,
    pub parked_width_m: f64,
    pub parked_height_m: f64,
    pub parked_gap_m: f64,
    /// Distance from the VUT lane's right edge to the parked vehicles.
    pub parked_clearance_m: f64,
    /// Distance of each conflict point south of the intersection center.
    pub cpnc_conflict_offset_m: f64,
    pub cbna_conflict_offset_m: f64,
    pub cbla_conflict_offset_m: f64,
    /// Along-path distance from the conflict point to the end of the wall.
    pub cbna_wall_gap_m: f64,
    pub cbna_wall_height_m: f64,
    /// Distance from the cyclist path centerline to the wall face.
    pub cbna_wall_lateral_offset_m: f64,
    pub cbna_wall_thickness_m: f64,
    pub cbna_wall_length_m: f64,
    /// Lateral offset of the CBLA cyclist from the VUT centerline.
    pub cbla_lateral_offset_m: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            frame_rate_hz: 10.0,
            lead_time_s: 8.0,
            min_start_distance_m: 60.0,
            tail_time_s: 3.0,
            lane_width_m: 3.5,
            vut_length_m: 4.5,
            vut_width_m: 1.8,
            vut_height_m: 1.5,
            pedestrian_length_m: 0.5,
            pedestrian_width_m: 0.5,
            pedestrian_height_m: 1.8,
            cyclist_length_m: 1.8,
            cyclist_width_m: 0.5,
            cyclist_height_m: 1.8,
            parked_length_m: 4.5,
            parked_width_m: 1.8,
            parked_height_m: 1.5,
            parked_gap_m: 1.0,
            parked_clearance_m: 1.0,
            cpnc_conflict_offset_m: 12.0,
            cbna_conflict_offset_m: 4.0,
            cbla_conflict_offset_m: 5.0,
            cbna_wall_gap_m: 17.0,
            cbna_wall_height_m: 3.0,
            cbna_wall_lateral_offset_m: 0.5,
            cbna_wall_thickness_m: 0.3,
            cbna_wall_length_m: 50.0,
            cbla_lateral_offset_m: 0.0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frame_rate_hz", self.frame_rate_hz),
            ("lead_time_s", self.lead_time_s),
            ("lane_width_m", self.lane_width_m),
            ("vut_length_m", self.vut_length_m),
            ("vut_width_m", self.vut_width_m),
            ("vut_height_m", self.vut_height_m),
            ("pedestrian_length_m", self.pedestrian_length_m),
            ("pedestrian_width_m", self.pedestrian_width_m),
            ("pedestrian_height_m", self.pedestrian_height_m),
            ("cyclist_length_m", self.cyclist_length_m),
            ("cyclist_width_m", self.cyclist_width_m),
            ("cyclist_height_m", self.cyclist_height_m),
            ("parked_length_m", self.parked_length_m),
            ("parked_width_m", self.parked_width_m),
            ("parked_height_m", self.parked_height_m),
            ("cbna_wall_height_m", self.cbna_wall_height_m),
            ("cbna_wall_thickness_m", self.cbna_wall_thickness_m),
            ("cbna_wall_length_m", self.cbna_wall_length_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("scenario.{name} must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("min_start_distance_m", self.min_start_distance_m),
            ("tail_time_s", self.tail_time_s),
            ("parked_gap_m", self.parked_gap_m),
            ("parked_clearance_m", self.parked_clearance_m),
            ("cbna_wall_gap_m", self.cbna_wall_gap_m),
            ("cbna_wall_lateral_offset_m", self.cbna_wall_lateral_offset_m),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("scenario.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn vru_dims(&self, class: ActorClass) -> ActorDims {
        match class {
            ActorClass::Pedestrian => ActorDims {
                length: self.pedestrian_length_m,
                width: self.pedestrian_width_m,
                height: self.pedestrian_height_m,
            },
            ActorClass::Cyclist => ActorDims {
                length: self.cyclist_length_m,
                width: self.cyclist_width_m,
                height: self.cyclist_height_m,
            },
            ActorClass::Vehicle => self.vut_dims(),
        }
    }

    fn vut_dims(&self) -> ActorDims {
        ActorDims {
            length: self.vut_length_m,
            width: self.vut_width_m,
            height: self.vut_height_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub vut_speed_kmh: u32,
    pub vut_track: ActorTrack,
    pub vru_track: ActorTrack,
    pub occluders: Vec<Prism>,
    pub conflict_point: Vec2,
    pub nominal_collision_time: f64,
    pub sim_duration: f64,
    pub frame_rate: f64,
    /// Rotation applied to the whole scene about the intersection center.
    pub scene_yaw: f64,
}

/// Snapshot of the scene at one instant.
#[derive(Debug, Clone, Copy)]
pub struct WorldState<'a> {
    pub time: f64,
    pub vut: ActorState,
    pub vru: ActorState,
    pub occluders: &'a [Prism],
}

impl ScenarioSpec {
    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// Number of frames in `[0, sim_duration]`, both ends included.
    pub fn frame_count(&self) -> usize {
        (self.sim_duration * self.frame_rate + 1e-9).floor() as usize + 1
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate
    }

    /// Frame at which the VRU enters the scene; VRUs are present from the start.
    pub fn vru_spawn_frame(&self) -> usize {
        0
    }

    /// World with both actors following their tracks unbraked.
    pub fn world_at(&self, t: f64) -> WorldState<'_> {
        WorldState {
            time: t,
            vut: actor_state_at(&self.vut_track, t),
            vru: actor_state_at(&self.vru_track, t),
            occluders: &self.occluders,
        }
    }

    /// Same scene rotated by `yaw` about the intersection center.
    pub fn rotated(&self, yaw: f64) -> Self {
        Self {
            vut_track: self.vut_track.rotated(yaw),
            vru_track: self.vru_track.rotated(yaw),
            occluders: self
                .occluders
                .iter()
                .map(|o| Prism {
                    footprint: o.footprint.rotated_about_origin(yaw),
                    height: o.height,
                })
                .collect(),
            conflict_point: self.conflict_point.rotated(yaw),
            scene_yaw: normalize_angle(self.scene_yaw + yaw),
            ..self.clone()
        }
    }

    pub fn vut_heading(&self) -> f64 {
        self.vut_track.pose_at_arc(0.0).0.heading
    }
}

pub fn build_scenario(kind: ScenarioKind, vut_speed_kmh: u32) -> Result<ScenarioSpec> {
    build_scenario_with(kind, vut_speed_kmh, &ScenarioParams::default())
}

pub fn build_scenario_with(kind: ScenarioKind, vut_speed_kmh: u32, params: &ScenarioParams) -> Result<ScenarioSpec> {
    kind.check_speed(vut_speed_kmh)?;
    params.validate()?;

    let vut_speed = vut_speed_kmh as f64 * KMH_TO_MPS;
    let vru_speed = kind.vru_speed_kmh() * KMH_TO_MPS;
    let start_distance = (params.lead_time_s * vut_speed).max(params.min_start_distance_m);
    let t_nominal = start_distance / vut_speed;
    let sim_duration = t_nominal + params.tail_time_s;

    let north = Vec2::new(0.0, 1.0);
    let lane_center_x = params.lane_width_m / 2.0;
    let vut_dims = params.vut_dims();
    let vru_class = kind.vru_class();
    let vru_dims = params.vru_dims(vru_class);

    let conflict_offset = match kind {
        ScenarioKind::Cpnc50 => params.cpnc_conflict_offset_m,
        ScenarioKind::Cbna => params.cbna_conflict_offset_m,
        ScenarioKind::Cbla => params.cbla_conflict_offset_m,
    };
    let conflict = Vec2::new(lane_center_x, -conflict_offset);

    // The VUT front bumper center reaches the conflict point at t_nominal.
    let vut_half = vut_dims.length / 2.0;
    let vut_start = conflict - north * (start_distance + vut_half);
    let vut_end = conflict + north * (vut_speed * params.tail_time_s + vut_half + 20.0);
    let vut_track = ActorTrack {
        class: ActorClass::Vehicle,
        dims: vut_dims,
        path: vec![vut_start, vut_end],
        speed: vut_speed,
    };

    let run_out = vru_speed * params.tail_time_s + vru_dims.length + 2.0;
    let (vru_path, occluders) = match kind {
        ScenarioKind::Cpnc50 | ScenarioKind::Cbna => {
            // Crossing from the right: the VRU center meets the VUT front center.
            let west = Vec2::new(-1.0, 0.0);
            let start = conflict - west * (vru_speed * t_nominal);
            let end = conflict + west * run_out;
            let occluders = if kind == ScenarioKind::Cpnc50 {
                parked_vehicles(params, conflict)?
            } else {
                vec![cbna_wall(params, conflict)?]
            };
            (vec![start, conflict, end], occluders)
        }
        ScenarioKind::Cbla => {
            // Same lane, same direction: the VUT front meets the cyclist's rear.
            let lane = Vec2::new(params.cbla_lateral_offset_m, 0.0);
            let contact_center = conflict + lane + north * (vru_dims.length / 2.0);
            let start = contact_center - north * (vru_speed * t_nominal);
            let end = contact_center + north * run_out;
            (vec![start, end], Vec::new())
        }
    };
    let vru_track = ActorTrack {
        class: vru_class,
        dims: vru_dims,
        path: vru_path,
        speed: vru_speed,
    };
    vut_track.validate()?;
    vru_track.validate()?;

    Ok(ScenarioSpec {
        kind,
        vut_speed_kmh,
        vut_track,
        vru_track,
        occluders,
        conflict_point: conflict,
        nominal_collision_time: t_nominal,
        sim_duration,
        frame_rate: params.frame_rate_hz,
        scene_yaw: 0.0,
    })
}

fn parked_vehicles(params: &ScenarioParams, conflict: Vec2) -> Result<Vec<Prism>> {
    let center_x = params.lane_width_m + params.parked_clearance_m + params.parked_width_m / 2.0;
    let offset = params.parked_gap_m / 2.0 + params.parked_length_m / 2.0;
    [-offset, offset]
        .into_iter()
        .map(|dy| {
            let footprint = OrientedBox::from_dims(
                Vec2::new(center_x, conflict.y + dy),
                params.parked_length_m,
                params.parked_width_m,
                FRAC_PI_2,
            )?;
            Prism::new(footprint, params.parked_height_m)
        })
        .collect()
}

fn cbna_wall(params: &ScenarioParams, conflict: Vec2) -> Result<Prism> {
    let center = Vec2::new(
        conflict.x + params.cbna_wall_gap_m + params.cbna_wall_length_m / 2.0,
        conflict.y - params.cbna_wall_lateral_offset_m - params.cbna_wall_thickness_m / 2.0,
    );
    let footprint = OrientedBox::from_dims(center, params.cbna_wall_length_m, params.cbna_wall_thickness_m, 0.0)?;
    Prism::new(footprint, params.cbna_wall_height_m)
}

/// First frame time at which the unbraked VUT and VRU footprints overlap.
pub fn nominal_collision_check(spec: &ScenarioSpec) -> Option<f64> {
    (0..spec.frame_count())
        .map(|f| spec.frame_time(f))
        .find(|&t| {
            let w = spec.world_at(t);
            obb_overlap(&w.vut.footprint(), &w.vru.footprint())
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_sets_match_test_protocol() {
        assert_eq!(ScenarioKind::Cpnc50.allowed_speeds_kmh().len(), 9);
        assert_eq!(ScenarioKind::Cbna.allowed_speeds_kmh().len(), 9);
        assert_eq!(ScenarioKind::Cbla.allowed_speeds_kmh(), vec![25, 30, 35, 40, 45, 50, 55, 60]);
    }

    #[test]
    fn cbna_at_60_has_wall_17m_before_conflict() {
        let spec = build_scenario(ScenarioKind::Cbna, 60).unwrap();
        assert!((spec.vru_track.speed - 15.0 / 3.6).abs() < 1e-12);
        assert_eq!(spec.occluders.len(), 1);
        let wall = &spec.occluders[0];
        let near_end = wall.footprint.center.x - wall.footprint.half_long;
        assert!((near_end - spec.conflict_point.x - 17.0).abs() < 1e-9);
        assert_eq!(wall.height, 3.0);
    }

    #[test]
    fn cpnc_at_20_has_walking_pedestrian_and_two_parked_cars() {
        let spec = build_scenario(ScenarioKind::Cpnc50, 20).unwrap();
        assert_eq!(spec.vru_track.class, ActorClass::Pedestrian);
        assert!((spec.vru_track.speed - 5.0 / 3.6).abs() < 1e-12);
        assert_eq!(spec.occluders.len(), 2);
        for car in &spec.occluders {
            let near_edge = car.footprint.center.x - car.footprint.half_lat;
            assert!((near_edge - 4.5).abs() < 1e-9, "car edge 1 m right of the lane");
        }
    }

    #[test]
    fn cbla_rejects_20_kmh() {
        let err = build_scenario(ScenarioKind::Cbla, 20).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("25") && msg.contains("60"), "{msg}");
        assert!(build_scenario(ScenarioKind::Cbna, 62).is_err());
    }

    #[test]
    fn start_distance_respects_lead_time_and_minimum() {
        let slow = build_scenario(ScenarioKind::Cbna, 20).unwrap();
        assert!((slow.nominal_collision_time - 60.0 / (20.0 / 3.6)).abs() < 1e-9);
        let fast = build_scenario(ScenarioKind::Cbna, 60).unwrap();
        assert!((fast.nominal_collision_time - 8.0).abs() < 1e-9);
    }

    #[test]
    fn actor_state_clamps_at_path_end() {
        let track = ActorTrack {
            class: ActorClass::Vehicle,
            dims: ActorDims {
                length: 4.5,
                width: 1.8,
                height: 1.5,
            },
            path: vec![Vec2::ZERO, Vec2::new(100.0, 0.0)],
            speed: 10.0,
        };
        let s0 = actor_state_at(&track, 0.0);
        assert_eq!(s0.pose.position, Vec2::ZERO);
        let s5 = actor_state_at(&track, 5.0);
        assert!((s5.pose.position.x - 50.0).abs() < 1e-12);
        assert_eq!(s5.speed, 10.0);
        let late = actor_state_at(&track, 20.0);
        assert_eq!(late.pose.position, Vec2::new(100.0, 0.0));
        assert_eq!(late.speed, 0.0);
    }

    #[test]
    fn heading_follows_current_segment() {
        let track = ActorTrack {
            class: ActorClass::Pedestrian,
            dims: ActorDims {
                length: 0.5,
                width: 0.5,
                height: 1.8,
            },
            path: vec![Vec2::ZERO, Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)],
            speed: 1.0,
        };
        assert!(actor_state_at(&track, 5.0).pose.heading.abs() < 1e-12);
        assert!((actor_state_at(&track, 15.0).pose.heading - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn displaced_vru_never_collides() {
        let mut spec = build_scenario(ScenarioKind::Cpnc50, 40).unwrap();
        for p in &mut spec.vru_track.path {
            p.y += 50.0;
        }
        assert_eq!(nominal_collision_check(&spec), None);
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_scenario(ScenarioKind::Cbla, 45).unwrap();
        let b = build_scenario(ScenarioKind::Cbla, 45).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn rotation_preserves_collision_time() {
        let spec = build_scenario(ScenarioKind::Cbna, 35).unwrap();
        let turned = spec.rotated(FRAC_PI_2);
        assert_eq!(nominal_collision_check(&spec), nominal_collision_check(&turned));
        assert!((turned.vut_heading() - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn parse_kind_names() {
        assert_eq!("cpnc-50".parse::<ScenarioKind>().unwrap(), ScenarioKind::Cpnc50);
        assert_eq!("CBLA".parse::<ScenarioKind>().unwrap(), ScenarioKind::Cbla);
        assert!("CCRs".parse::<ScenarioKind>().is_err());
    }
}
