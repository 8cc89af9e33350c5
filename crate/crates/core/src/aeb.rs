//! Emergency braking kinematics and closed-loop scenario runs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{obb_distance, obb_overlap, Pose2};
use crate::scenario::{actor_state_at, ScenarioSpec};
use crate::sensing::{first_confirmed_time, sense_frame, DetectionEvent, DetectionModel, Fusion, SensorUnit};

pub const DEFAULT_DT: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AebPolicy {
    pub deceleration_mps2: f64,
    /// Delay between confirmation and full deceleration.
    pub latency_s: f64,
    pub confirm_frames: usize,
}

impl Default for AebPolicy {
    fn default() -> Self {
        Self {
            deceleration_mps2: 7.72,
            latency_s: 0.025,
            confirm_frames: 3,
        }
    }
}

impl AebPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.deceleration_mps2 > 0.0) || !self.deceleration_mps2.is_finite() {
            return Err(Error::Validation(format!(
                "policy.deceleration_mps2 must be > 0, got {}",
                self.deceleration_mps2
            )));
        }
        if !(self.latency_s >= 0.0) || !self.latency_s.is_finite() {
            return Err(Error::Validation(format!("policy.latency_s must be >= 0, got {}", self.latency_s)));
        }
        if self.confirm_frames == 0 {
            return Err(Error::Validation("policy.confirm_frames must be >= 1".into()));
        }
        Ok(())
    }
}

/// Distance covered from the trigger to standstill: `v*latency + v^2/(2a)`.
pub fn stopping_distance(v: f64, policy: &AebPolicy) -> f64 {
    let v = v.max(0.0);
    v * policy.latency_s + v * v / (2.0 * policy.deceleration_mps2)
}

/// Advances arc length and speed over `[t, t + dt]` with braking from `brake_start`.
///
/// Each sub-interval is integrated exactly; speed is clamped at zero.
fn advance(arc: f64, speed: f64, t: f64, dt: f64, brake_start: Option<f64>, decel: f64) -> (f64, f64) {
    let end = t + dt;
    let cruise = match brake_start {
        Some(b) if b < end => (b - t).clamp(0.0, dt),
        _ => dt,
    };
    let mut arc = arc + speed * cruise;
    let braking = dt - cruise;
    if braking <= 0.0 {
        return (arc, speed);
    }
    if speed <= decel * braking {
        arc += speed * speed / (2.0 * decel);
        (arc, 0.0)
    } else {
        arc += speed * braking - 0.5 * decel * braking * braking;
        (arc, speed - decel * braking)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub time: f64,
    pub speed: f64,
    /// VUT arc length along its track at first contact.
    pub vut_arc: f64,
}

fn check_dt(spec: &ScenarioSpec, dt: f64) -> Result<usize> {
    let period = spec.frame_period();
    if !(dt > 0.0) || dt > period / 2.0 + 1e-12 {
        return Err(Error::Contract(format!(
            "dt must lie in (0, {}] (half the frame period), got {dt}",
            period / 2.0
        )));
    }
    let ratio = period / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-6 {
        return Err(Error::Contract(format!("frame period {period} s is not a multiple of dt {dt} s")));
    }
    Ok(steps as usize)
}

/// Kinematics-only run with braking commanded at `trigger` (start = trigger + latency).
fn forced_collision(spec: &ScenarioSpec, trigger: Option<f64>, policy: &AebPolicy, dt: f64, steps_per_frame: usize) -> Option<Collision> {
    let total = (spec.frame_count() - 1) * steps_per_frame;
    let brake_start = trigger.map(|t| t + policy.latency_s);
    let (mut arc, mut speed) = (0.0, spec.vut_track.speed);
    for step in 0..=total {
        let t = step as f64 * dt;
        let vut = spec.vut_track.state_at_arc(arc, speed);
        let vru = actor_state_at(&spec.vru_track, t);
        if speed > 0.0 && obb_overlap(&vut.footprint(), &vru.footprint()) {
            return Some(Collision { time: t, speed, vut_arc: arc });
        }
        (arc, speed) = advance(arc, speed, t, dt, brake_start, policy.deceleration_mps2);
    }
    None
}

/// Latest frame-grid trigger time that still avoids the collision.
///
/// `None` when braking at t = 0 already collides.
pub fn last_possible_brake_time(spec: &ScenarioSpec, policy: &AebPolicy) -> Result<Option<f64>> {
    last_possible_brake_time_with(spec, policy, DEFAULT_DT)
}

pub fn last_possible_brake_time_with(spec: &ScenarioSpec, policy: &AebPolicy, dt: f64) -> Result<Option<f64>> {
    policy.validate()?;
    let spf = check_dt(spec, dt)?;
    let avoided = |frame: usize| forced_collision(spec, Some(spec.frame_time(frame)), policy, dt, spf).is_none();
    if !avoided(0) {
        tracing::warn!(scenario = %spec.kind, speed = spec.vut_speed_kmh, "braking at t=0 still collides");
        return Ok(None);
    }
    let last = spec.frame_count() - 1;
    if avoided(last) {
        return Ok(Some(spec.frame_time(last)));
    }
    // Invariant: avoided(lo) && !avoided(hi).
    let (mut lo, mut hi) = (0usize, last);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if avoided(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(spec.frame_time(lo)))
}

/// Outcome of a kinematics-only run with a forced brake trigger.
pub fn forced_trigger_outcome(spec: &ScenarioSpec, trigger: Option<f64>, policy: &AebPolicy, dt: f64) -> Result<Option<Collision>> {
    policy.validate()?;
    let spf = check_dt(spec, dt)?;
    Ok(forced_collision(spec, trigger, policy, dt, spf))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub time: f64,
    pub vut: Pose2,
    pub vut_speed: f64,
    pub vru: Pose2,
    /// One flag per sensor in `RunTrace::sensor_ids` order.
    pub detected: Vec<bool>,
    pub braking: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub spec: ScenarioSpec,
    pub sensor_ids: Vec<String>,
    pub fusion: Fusion,
    pub frames: Vec<FrameRecord>,
    pub events: Vec<DetectionEvent>,
    pub first_confirmed_time: Option<f64>,
    pub brake_trigger_time: Option<f64>,
    pub brake_start_time: Option<f64>,
    pub brake_start_arc: Option<f64>,
    pub collision: Option<Collision>,
    /// Smallest VUT/VRU footprint gap over the run (0 once they touch).
    pub min_separation: f64,
    pub initial_speed: f64,
    pub last_possible_brake_time: Option<f64>,
    pub deceleration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyOutcome {
    pub avoided: bool,
    pub collision_speed: f64,
    pub stop_margin: f64,
    pub last_possible_brake_time: Option<f64>,
}

pub fn classify_outcome(trace: &RunTrace) -> SafetyOutcome {
    match trace.collision {
        Some(c) => SafetyOutcome {
            avoided: false,
            collision_speed: c.speed,
            stop_margin: 0.0,
            last_possible_brake_time: trace.last_possible_brake_time,
        },
        None => SafetyOutcome {
            avoided: true,
            collision_speed: 0.0,
            stop_margin: trace.min_separation,
            last_possible_brake_time: trace.last_possible_brake_time,
        },
    }
}

pub fn simulate_run(
    spec: &ScenarioSpec,
    sensors: &[SensorUnit],
    model: &DetectionModel,
    policy: &AebPolicy,
    fusion: &Fusion,
    dt: f64,
) -> Result<RunTrace> {
    let deadline = last_possible_brake_time_with(spec, policy, dt)?;
    simulate_run_with_deadline(spec, sensors, model, policy, fusion, dt, deadline)
}

/// Like [`simulate_run`] but reuses a precomputed last possible brake time.
pub fn simulate_run_with_deadline(
    spec: &ScenarioSpec,
    sensors: &[SensorUnit],
    model: &DetectionModel,
    policy: &AebPolicy,
    fusion: &Fusion,
    dt: f64,
    last_possible_brake_time: Option<f64>,
) -> Result<RunTrace> {
    policy.validate()?;
    model.validate()?;
    let spf = check_dt(spec, dt)?;
    for s in sensors {
        s.validate()?;
        if (s.frame_rate - spec.frame_rate).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "sensor '{}' runs at {} Hz but the scenario is sampled at {} Hz",
                s.id, s.frame_rate, spec.frame_rate
            )));
        }
    }
    let members: Vec<bool> = {
        let chosen = fusion.members(sensors)?;
        sensors.iter().map(|s| chosen.iter().any(|c| c.id == s.id)).collect()
    };
    let k = policy.confirm_frames;

    let n_frames = spec.frame_count();
    let total = (n_frames - 1) * spf;
    let (mut arc, mut speed) = (0.0, spec.vut_track.speed);
    let mut run_len = vec![0usize; sensors.len()];
    let mut frames = Vec::with_capacity(n_frames);
    let mut events = Vec::new();
    let mut trigger: Option<f64> = None;
    let mut brake_start_arc = None;
    let mut collision = None;
    let mut min_separation = f64::INFINITY;

    for step in 0..=total {
        let t = step as f64 * dt;
        let vut = spec.vut_track.state_at_arc(arc, speed);
        let vru = actor_state_at(&spec.vru_track, t);

        if step % spf == 0 {
            let frame = step / spf;
            let world = crate::scenario::WorldState {
                time: t,
                vut,
                vru,
                occluders: &spec.occluders,
            };
            let mut detected = Vec::with_capacity(sensors.len());
            for (i, sensor) in sensors.iter().enumerate() {
                match sense_frame(sensor, model, &world, frame) {
                    Some(ev) => {
                        run_len[i] += 1;
                        if members[i] && run_len[i] == k {
                            trigger = Some(trigger.map_or(ev.available_at, |b: f64| b.min(ev.available_at)));
                        }
                        events.push(ev);
                        detected.push(true);
                    }
                    None => {
                        run_len[i] = 0;
                        detected.push(false);
                    }
                }
            }
            let brake_start = trigger.map(|b| b + policy.latency_s);
            frames.push(FrameRecord {
                frame,
                time: t,
                vut: vut.pose,
                vut_speed: speed,
                vru: vru.pose,
                detected,
                braking: brake_start.is_some_and(|b| b <= t),
            });
        }

        // Contact with a VUT already at standstill is the VRU's doing, not a collision.
        if speed > 0.0 {
            let (a, b) = (vut.footprint(), vru.footprint());
            if collision.is_none() && obb_overlap(&a, &b) {
                collision = Some(Collision { time: t, speed, vut_arc: arc });
            }
            min_separation = min_separation.min(obb_distance(&a, &b));
        }

        if step < total {
            let brake_start = trigger.map(|b| b + policy.latency_s);
            if let Some(bs) = brake_start {
                if brake_start_arc.is_none() && bs < t + dt {
                    brake_start_arc = Some(arc + speed * (bs - t).max(0.0));
                }
            }
            (arc, speed) = advance(arc, speed, t, dt, brake_start, policy.deceleration_mps2);
        }
    }

    let first_confirmed = first_confirmed_time(sensors, &events, k, fusion)?;
    debug_assert_eq!(first_confirmed, trigger);
    Ok(RunTrace {
        spec: spec.clone(),
        sensor_ids: sensors.iter().map(|s| s.id.clone()).collect(),
        fusion: fusion.clone(),
        frames,
        events,
        first_confirmed_time: first_confirmed,
        brake_trigger_time: trigger,
        brake_start_time: trigger.map(|b| b + policy.latency_s),
        brake_start_arc,
        collision,
        min_separation: if collision.is_some() { 0.0 } else { min_separation },
        initial_speed: spec.vut_track.speed,
        last_possible_brake_time,
        deceleration: policy.deceleration_mps2,
    })
}

impl RunTrace {
    /// Line-oriented text: `#` header lines, then one comma-separated record per frame.
    ///
    /// Columns: frame, time_s, vut_x, vut_y, vut_heading_rad, vut_speed_mps,
    /// vru_x, vru_y, vru_heading_rad, detect (one 0/1 digit per sensor in
    /// header order), braking (0/1).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.6}"));
        let outcome = classify_outcome(self);
        let _ = writeln!(out, "# vru-sim trace v1");
        let _ = writeln!(
            out,
            "# scenario={} vut_speed_kmh={} scene_yaw_deg={:.3} fusion={}",
            self.spec.kind,
            self.spec.vut_speed_kmh,
            self.spec.scene_yaw.to_degrees(),
            self.fusion
        );
        let _ = writeln!(out, "# sensors={}", self.sensor_ids.join(","));
        let _ = writeln!(
            out,
            "# first_confirmed_s={} brake_trigger_s={} last_possible_brake_s={}",
            opt(self.first_confirmed_time),
            opt(self.brake_trigger_time),
            opt(self.last_possible_brake_time)
        );
        let _ = writeln!(
            out,
            "# avoided={} collision_speed_mps={:.6} stop_margin_m={:.6}",
            outcome.avoided, outcome.collision_speed, outcome.stop_margin
        );
        out.push_str("frame,time_s,vut_x,vut_y,vut_heading_rad,vut_speed_mps,vru_x,vru_y,vru_heading_rad,detect,braking\n");
        for r in &self.frames {
            let detect: String = r.detected.iter().map(|&d| if d { '1' } else { '0' }).collect();
            let _ = writeln!(
                out,
                "{},{:.3},{:.4},{:.4},{:.6},{:.4},{:.4},{:.4},{:.6},{},{}",
                r.frame,
                r.time,
                r.vut.position.x,
                r.vut.position.y,
                r.vut.heading,
                r.vut_speed,
                r.vru.position.x,
                r.vru.position.y,
                r.vru.heading,
                if detect.is_empty() { "-".to_string() } else { detect },
                u8::from(r.braking)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, ScenarioKind};

    #[test]
    fn stopping_distance_closed_form() {
        let p = AebPolicy::default();
        assert_eq!(stopping_distance(0.0, &p), 0.0);
        let v = 60.0 / 3.6;
        assert!((stopping_distance(v, &p) - 18.4078).abs() < 1e-3);
        let v = 20.0 / 3.6;
        assert!((stopping_distance(v, &p) - 2.1377).abs() < 1e-3);
    }

    #[test]
    fn advance_splits_at_brake_start() {
        let (arc, v) = advance(0.0, 10.0, 0.0, 1.0, Some(0.5), 4.0);
        assert!((v - 8.0).abs() < 1e-12);
        assert!((arc - (5.0 + 10.0 * 0.5 - 0.5 * 4.0 * 0.25)).abs() < 1e-12);
        let (arc, v) = advance(0.0, 1.0, 0.0, 1.0, Some(0.0), 4.0);
        assert_eq!(v, 0.0);
        assert!((arc - 0.125).abs() < 1e-12);
    }

    #[test]
    fn rejects_coarse_or_misaligned_dt() {
        let spec = build_scenario(ScenarioKind::Cbla, 30).unwrap();
        let p = AebPolicy::default();
        assert!(forced_trigger_outcome(&spec, None, &p, 0.08).is_err());
        assert!(forced_trigger_outcome(&spec, None, &p, 0.003).is_err());
        assert!(forced_trigger_outcome(&spec, None, &p, 0.005).is_ok());
    }

    #[test]
    fn policy_validation() {
        let mut p = AebPolicy {
            deceleration_mps2: -1.0,
            ..AebPolicy::default()
        };
        assert!(p.validate().is_err());
        p = AebPolicy::default();
        p.confirm_frames = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn unbraked_run_hits_at_full_speed() {
        let spec = build_scenario(ScenarioKind::Cpnc50, 30).unwrap();
        let c = forced_trigger_outcome(&spec, None, &AebPolicy::default(), DEFAULT_DT)
            .unwrap()
            .unwrap();
        assert_eq!(c.speed, spec.vut_track.speed);
        assert!((c.time - spec.nominal_collision_time).abs() <= spec.frame_period());
    }
}
