#![allow(dead_code)]

use std::cmp::Ordering;

use rand::Rng;

use vru_sim::geometry::{iou_axis_box, AxisBox2, Vec2};
use vru_sim::ingest::{ExternalDetection, GroundTruthRecord, MatchOptions};
use vru_sim::scenario::ScenarioKind;

pub fn every_case() -> Vec<(ScenarioKind, u32)> {
    ScenarioKind::ALL
        .iter()
        .flat_map(|&k| k.allowed_speeds_kmh().into_iter().map(move |s| (k, s)))
        .collect()
}

const CLASSES: [&str; 2] = ["pedestrian", "cyclist"];

/// Boxes on a coarse integer grid so equal IoUs and duplicates are common.
fn grid_box(rng: &mut impl Rng) -> AxisBox2 {
    let x0 = rng.gen_range(0..6) as f64 * 10.0;
    let y0 = rng.gen_range(0..4) as f64 * 10.0;
    let w = rng.gen_range(1..4) as f64 * 10.0;
    let h = rng.gen_range(1..4) as f64 * 10.0;
    AxisBox2::new(Vec2::new(x0, y0), Vec2::new(x0 + w, y0 + h)).unwrap()
}

/// One (frame, sensor) group with up to 4 detections and 3 ground-truth boxes.
/// Detections are often jittered copies of ground truth.
pub fn random_frame(rng: &mut impl Rng, frame: usize, sensor: &str) -> (Vec<ExternalDetection>, Vec<GroundTruthRecord>) {
    let n_gt = rng.gen_range(0..=3);
    let gts: Vec<GroundTruthRecord> = (0..n_gt)
        .map(|i| GroundTruthRecord {
            frame,
            sensor_id: sensor.into(),
            target_id: if i == 0 { "VRU".into() } else { format!("T{i}") },
            class: CLASSES[rng.gen_range(0..2)].into(),
            bbox: grid_box(rng),
        })
        .collect();
    let n_det = rng.gen_range(0..=4);
    let dets = (0..n_det)
        .map(|_| {
            let (class, bbox) = if !gts.is_empty() && rng.gen_bool(0.6) {
                let g = &gts[rng.gen_range(0..gts.len())];
                let dx = rng.gen_range(-1..=1) as f64 * 5.0;
                let b = AxisBox2::new(g.bbox.min + Vec2::new(dx, 0.0), g.bbox.max + Vec2::new(dx, 0.0)).unwrap();
                (g.class.clone(), b)
            } else {
                (CLASSES[rng.gen_range(0..2)].to_string(), grid_box(rng))
            };
            ExternalDetection {
                frame,
                sensor_id: sensor.into(),
                class,
                bbox,
                confidence: [0.4, 0.7, 0.9][rng.gen_range(0..3)],
            }
        })
        .collect();
    (dets, gts)
}

fn box_key(b: &AxisBox2) -> [f64; 4] {
    [b.min.x, b.min.y, b.max.x, b.max.y]
}

fn cmp_keys(a: &[f64; 4], b: &[f64; 4]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Edge ranking: IoU descending, then detection (class, box, confidence desc),
/// then ground truth (target id, class, box). Returns a dense rank per edge.
fn edge_order(dets: &[ExternalDetection], gts: &[GroundTruthRecord], edges: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..edges.len()).collect();
    let cmp = |a: usize, b: usize| {
        let (da, ga, ia) = edges[a];
        let (db, gb, ib) = edges[b];
        let (x, y) = (&dets[da], &dets[db]);
        let (p, q) = (&gts[ga], &gts[gb]);
        ib.total_cmp(&ia)
            .then(x.class.cmp(&y.class))
            .then(cmp_keys(&box_key(&x.bbox), &box_key(&y.bbox)))
            .then(y.confidence.total_cmp(&x.confidence))
            .then(p.target_id.cmp(&q.target_id))
            .then(p.class.cmp(&q.class))
            .then(cmp_keys(&box_key(&p.bbox), &box_key(&q.bbox)))
    };
    idx.sort_by(|&a, &b| cmp(a, b));
    // Dense ranks: fully tied edges (identical detections) share one.
    let mut rank = vec![0; edges.len()];
    for w in 1..idx.len() {
        rank[idx[w]] = rank[idx[w - 1]] + usize::from(cmp(idx[w - 1], idx[w]).is_ne());
    }
    rank
}

/// Exhaustive oracle for one group: enumerates every assignment of ground
/// truth to detections and keeps the one where each unmatched eligible pair is
/// dominated by a better-ranked matched pair sharing an endpoint. Under a
/// strict edge order exactly one matching has this property; identical
/// detections tie and yield one matching per permutation of the duplicates.
///
/// Returns every such matching as `(detection, ground truth)` pairs sorted by
/// ground truth.
pub fn oracle_matchings(dets: &[ExternalDetection], gts: &[GroundTruthRecord], opts: &MatchOptions) -> Vec<Vec<(usize, usize)>> {
    let passes = |iou: f64| if opts.strict { iou > opts.iou_threshold } else { iou >= opts.iou_threshold };
    let mut edges = Vec::new();
    for (d, det) in dets.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            let iou = iou_axis_box(&det.bbox, &gt.bbox);
            if det.class == gt.class && passes(iou) {
                edges.push((d, g, iou));
            }
        }
    }
    let rank = edge_order(dets, gts, &edges);
    let edge_of = |d: usize, g: usize| edges.iter().position(|&(x, y, _)| x == d && y == g);

    let mut stable = Vec::new();
    // Each ground truth takes detection 0..n or none (n).
    let n = dets.len();
    let total = (n + 1).pow(gts.len() as u32);
    for code in 0..total {
        let mut assign = Vec::with_capacity(gts.len());
        let mut c = code;
        for _ in 0..gts.len() {
            assign.push(c % (n + 1));
            c /= n + 1;
        }
        let chosen: Vec<(usize, usize)> = assign.iter().enumerate().filter(|(_, &d)| d < n).map(|(g, &d)| (d, g)).collect();
        let mut dets_seen = vec![false; n];
        let valid = chosen.iter().all(|&(d, g)| {
            let fresh = !dets_seen[d];
            dets_seen[d] = true;
            fresh && edge_of(d, g).is_some()
        });
        if !valid {
            continue;
        }
        let chosen_rank = |d: Option<usize>, g: Option<usize>| {
            chosen
                .iter()
                .filter(|&&(cd, cg)| Some(cd) == d || Some(cg) == g)
                .map(|&(cd, cg)| rank[edge_of(cd, cg).unwrap()])
                .min()
        };
        let is_stable = edges.iter().enumerate().all(|(e, &(d, g, _))| {
            chosen.contains(&(d, g)) || chosen_rank(Some(d), Some(g)).is_some_and(|r| r <= rank[e])
        });
        if is_stable {
            stable.push(chosen);
        }
    }
    assert!(!stable.is_empty(), "no stable matching found");
    stable
}

use rayon::prelude::*;

use vru_sim::aeb::simulate_run;
use vru_sim::geometry::SensorPose;
use vru_sim::metrics::build_heatmap;
use vru_sim::placement::PlacementContext;
use vru_sim::sensing::{Fusion, Mount, SensorUnit};

/// RSU candidate roughly facing the intersection center.
pub fn random_site(rng: &mut impl Rng, id: &str) -> SensorUnit {
    let x: f64 = rng.gen_range(-25.0..25.0);
    let y: f64 = rng.gen_range(-25.0..25.0);
    let toward = (-y).atan2(-x);
    let yaw = toward + rng.gen_range(-1.0..1.0);
    SensorUnit::camera(
        id,
        Mount::Rsu,
        SensorPose {
            x,
            y,
            z: rng.gen_range(4.0..9.0),
            yaw,
            pitch: rng.gen_range(-25.0f64..-5.0).to_radians(),
        },
        0.025,
    )
}

/// (avoided runs, frames with any detection) of base + `sites`, recounted
/// from full runs and heatmaps.
pub fn oracle_score(ctx: &PlacementContext, sites: &[&SensorUnit]) -> (usize, usize) {
    let mut sensors = ctx.base.clone();
    sensors.extend(sites.iter().map(|s| (*s).clone()));
    let specs: Vec<_> = ctx.suite.specs().cloned().collect();
    specs
        .par_iter()
        .map(|spec| {
            let trace = simulate_run(spec, &sensors, &ctx.model, &ctx.policy, &Fusion::AnySensor, ctx.dt).unwrap();
            let hm = build_heatmap(&trace);
            let seen = (0..hm.columns()).filter(|&f| hm.cells.iter().any(|row| row[f])).count();
            (usize::from(trace.collision.is_none()), seen)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Every subset of `0..n` with exactly `k` members.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}
