//! Scoring of external detector logs against ground truth.
//!
//! Detection log, one detection per line with a header row:
//!
//! ```text
//! frame,sensor_id,class,x_min,y_min,x_max,y_max,confidence
//! 12,RSU2,cyclist,812.0,455.5,871.0,530.0,0.93
//! ```
//!
//! Ground truth, one visible target per sensor per frame:
//!
//! ```text
//! frame,sensor_id,target_id,class,x_min,y_min,x_max,y_max
//! 12,RSU2,VRU,cyclist,810.0,450.0,870.0,532.0
//! ```
//!
//! Boxes are pixel coordinates. Lines starting with `#` are ignored.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_axis_box, AxisBox2, Vec2};
use crate::sensing::{DetectionEvent, CAMERA_HFOV_DEG, REFERENCE_IMAGE_WIDTH_PX};

pub const DETECTION_HEADER: [&str; 8] = ["frame", "sensor_id", "class", "x_min", "y_min", "x_max", "y_max", "confidence"];
pub const GROUND_TRUTH_HEADER: [&str; 8] = ["frame", "sensor_id", "target_id", "class", "x_min", "y_min", "x_max", "y_max"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDetection {
    pub frame: usize,
    pub sensor_id: String,
    pub class: String,
    pub bbox: AxisBox2,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub frame: usize,
    pub sensor_id: String,
    pub target_id: String,
    pub class: String,
    pub bbox: AxisBox2,
}

#[derive(Deserialize)]
struct RawDetection {
    frame: usize,
    sensor_id: String,
    class: String,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    confidence: f64,
}

#[derive(Deserialize)]
struct RawGroundTruth {
    frame: usize,
    sensor_id: String,
    target_id: String,
    class: String,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

fn parse_rows<R, T>(text: &str, path: &Path, header: &[&str], mut convert: impl FnMut(R) -> Result<T, String>) -> Result<Vec<T>>
where
    R: for<'de> Deserialize<'de>,
{
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let got: Vec<&str> = headers.iter().collect();
    if got != header {
        let line = headers.position().map_or(1, |p| p.line());
        return Err(parse_err(line, format!("expected header '{}', got '{}'", header.join(","), got.join(","))));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let raw: R = record.deserialize(Some(&headers)).map_err(|e| parse_err(line, e.to_string()))?;
        out.push(convert(raw).map_err(|m| parse_err(line, m))?);
    }
    Ok(out)
}

fn make_box(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<AxisBox2, String> {
    if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
        return Err("box coordinates must be finite".into());
    }
    AxisBox2::new(Vec2::new(x_min, y_min), Vec2::new(x_max, y_max)).map_err(|_| {
        format!("negative box extent ({x_min}, {y_min})-({x_max}, {y_max})")
    })
}

pub fn parse_detection_str(text: &str, path: &Path) -> Result<Vec<ExternalDetection>> {
    parse_rows(text, path, &DETECTION_HEADER, |r: RawDetection| {
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(format!("confidence {} outside [0, 1]", r.confidence));
        }
        Ok(ExternalDetection {
            frame: r.frame,
            sensor_id: r.sensor_id,
            class: r.class,
            bbox: make_box(r.x_min, r.y_min, r.x_max, r.y_max)?,
            confidence: r.confidence,
        })
    })
}

pub fn parse_ground_truth_str(text: &str, path: &Path) -> Result<Vec<GroundTruthRecord>> {
    parse_rows(text, path, &GROUND_TRUTH_HEADER, |r: RawGroundTruth| {
        Ok(GroundTruthRecord {
            frame: r.frame,
            sensor_id: r.sensor_id,
            target_id: r.target_id,
            class: r.class,
            bbox: make_box(r.x_min, r.y_min, r.x_max, r.y_max)?,
        })
    })
}

pub fn parse_detection_log(path: &Path) -> Result<Vec<ExternalDetection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detection_str(&text, path)
}

pub fn parse_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth_str(&text, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchOptions {
    pub iou_threshold: f64,
    /// Require IoU strictly above the threshold.
    pub strict: bool,
    /// Classes whose true positives feed the braking pipeline.
    pub vru_classes: Vec<String>,
    pub frame_rate_hz: f64,
    pub latency_s: f64,
    /// Converts box widths in pixels to angular widths.
    pub rad_per_px: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            strict: true,
            vru_classes: vec!["pedestrian".into(), "cyclist".into()],
            frame_rate_hz: 10.0,
            latency_s: 0.0,
            rad_per_px: CAMERA_HFOV_DEG.to_radians() / REFERENCE_IMAGE_WIDTH_PX,
        }
    }
}

impl MatchOptions {
    fn passes(&self, iou: f64) -> bool {
        if self.strict {
            iou > self.iou_threshold
        } else {
            iou >= self.iou_threshold
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSensorCounts {
    pub frame: usize,
    pub sensor_id: String,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    /// Index into the detection input.
    pub detection: usize,
    /// Index into the ground-truth input.
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sorted by (frame, sensor id).
    pub counts: Vec<FrameSensorCounts>,
    /// Sorted by (detection frame, sensor id, ground-truth target id).
    pub matches: Vec<Match>,
    /// VRU-class true positives, sorted by (sensor id, frame, target id).
    pub events: Vec<DetectionEvent>,
}

impl MatchResult {
    pub fn totals(&self) -> (usize, usize, usize) {
        self.counts
            .iter()
            .fold((0, 0, 0), |(tp, fp, fn_), c| (tp + c.tp, fp + c.fp, fn_ + c.fn_))
    }
}

fn cmp_box(a: &AxisBox2, b: &AxisBox2) -> Ordering {
    a.min
        .x
        .total_cmp(&b.min.x)
        .then(a.min.y.total_cmp(&b.min.y))
        .then(a.max.x.total_cmp(&b.max.x))
        .then(a.max.y.total_cmp(&b.max.y))
}

/// Canonical order of detections; ties in IoU are broken by this rank so the
/// result does not depend on input order.
fn cmp_detection(a: &ExternalDetection, b: &ExternalDetection) -> Ordering {
    a.class
        .cmp(&b.class)
        .then(cmp_box(&a.bbox, &b.bbox))
        .then(b.confidence.total_cmp(&a.confidence))
}

fn cmp_ground_truth(a: &GroundTruthRecord, b: &GroundTruthRecord) -> Ordering {
    a.target_id
        .cmp(&b.target_id)
        .then(a.class.cmp(&b.class))
        .then(cmp_box(&a.bbox, &b.bbox))
}

/// Candidate (detection, ground truth, IoU) pairs of one group, best first.
///
/// Only same-class pairs passing the threshold are kept. Indices refer to the
/// slices passed in.
pub fn ranked_pairs(dets: &[&ExternalDetection], gts: &[&GroundTruthRecord], options: &MatchOptions) -> Vec<(usize, usize, f64)> {
    let mut det_rank: Vec<usize> = (0..dets.len()).collect();
    det_rank.sort_by(|&a, &b| cmp_detection(dets[a], dets[b]));
    let mut gt_rank: Vec<usize> = (0..gts.len()).collect();
    gt_rank.sort_by(|&a, &b| cmp_ground_truth(gts[a], gts[b]));
    let mut pos_d = vec![0; dets.len()];
    det_rank.iter().enumerate().for_each(|(r, &i)| pos_d[i] = r);
    let mut pos_g = vec![0; gts.len()];
    gt_rank.iter().enumerate().for_each(|(r, &i)| pos_g[i] = r);

    let mut pairs = Vec::new();
    for (di, d) in dets.iter().enumerate() {
        for (gi, g) in gts.iter().enumerate() {
            if d.class != g.class {
                continue;
            }
            let iou = iou_axis_box(&d.bbox, &g.bbox);
            if options.passes(iou) {
                pairs.push((di, gi, iou));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(pos_d[a.0].cmp(&pos_d[b.0]))
            .then(pos_g[a.1].cmp(&pos_g[b.1]))
    });
    pairs
}

/// Greedy one-to-one matching by descending IoU within each (frame, sensor).
pub fn match_detections(dets: &[ExternalDetection], gts: &[GroundTruthRecord], options: &MatchOptions) -> MatchResult {
    type Key = (usize, String);
    let mut groups: BTreeMap<Key, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        groups.entry((d.frame, d.sensor_id.clone())).or_default().0.push(i);
    }
    for (i, g) in gts.iter().enumerate() {
        groups.entry((g.frame, g.sensor_id.clone())).or_default().1.push(i);
    }

    let mut counts = Vec::with_capacity(groups.len());
    let mut matches = Vec::new();
    let mut events = Vec::new();
    for ((frame, sensor_id), (di, gi)) in groups {
        let group_dets: Vec<&ExternalDetection> = di.iter().map(|&i| &dets[i]).collect();
        let group_gts: Vec<&GroundTruthRecord> = gi.iter().map(|&i| &gts[i]).collect();
        let mut det_used = vec![false; di.len()];
        let mut gt_used = vec![false; gi.len()];
        let mut group_matches = Vec::new();
        for (d, g, iou) in ranked_pairs(&group_dets, &group_gts, options) {
            if det_used[d] || gt_used[g] {
                continue;
            }
            det_used[d] = true;
            gt_used[g] = true;
            group_matches.push((d, g, iou));
        }
        let tp = group_matches.len();
        counts.push(FrameSensorCounts {
            frame,
            sensor_id: sensor_id.clone(),
            tp,
            fp: di.len() - tp,
            fn_: gi.len() - tp,
        });
        group_matches.sort_by(|a, b| group_gts[a.1].target_id.cmp(&group_gts[b.1].target_id));
        for (d, g, iou) in group_matches {
            let gt = group_gts[g];
            matches.push(Match {
                detection: di[d],
                ground_truth: gi[g],
                iou,
            });
            if options.vru_classes.iter().any(|c| c == &gt.class) {
                let frame_time = frame as f64 / options.frame_rate_hz;
                events.push(DetectionEvent {
                    frame,
                    sensor_id: sensor_id.clone(),
                    target_id: gt.target_id.clone(),
                    visible_fraction: iou,
                    apparent_width: group_dets[d].bbox.width() * options.rad_per_px,
                    frame_time,
                    available_at: frame_time + options.latency_s,
                });
            }
        }
    }
    events.sort_by(|a, b| {
        a.sensor_id
            .cmp(&b.sensor_id)
            .then(a.frame.cmp(&b.frame))
            .then(a.target_id.cmp(&b.target_id))
    });
    MatchResult { counts, matches, events }
}

/// Events of one target, at most one per (sensor, frame), ready for confirmation.
pub fn events_for_target(events: &[DetectionEvent], target_id: &str) -> Vec<DetectionEvent> {
    let mut out: Vec<DetectionEvent> = events.iter().filter(|e| e.target_id == target_id).cloned().collect();
    out.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id).then(a.frame.cmp(&b.frame)));
    out.dedup_by(|a, b| a.sensor_id == b.sensor_id && a.frame == b.frame);
    out
}
