use proptest::prelude::*;

use vru_sim::aeb::{classify_outcome, simulate_run, AebPolicy, SafetyOutcome, DEFAULT_DT};
use vru_sim::metrics::{
    accuracy, avoidance_rate, build_heatmap, mean_detections_per_frame, subset_counts, trace_metrics,
};
use vru_sim::scenario::{build_scenario, ScenarioKind};
use vru_sim::sensing::{DetectionModel, Fusion, SensorLayout};

fn every_case() -> Vec<(ScenarioKind, u32)> {
    ScenarioKind::ALL
        .iter()
        .flat_map(|&k| k.allowed_speeds_kmh().into_iter().map(move |s| (k, s)))
        .collect()
}

#[test]
fn ratio_examples() {
    assert_eq!(accuracy(&[false; 100]).unwrap(), 0.0);
    assert_eq!(accuracy(&[true; 100]).unwrap(), 1.0);
    let mut flags = vec![true; 892];
    flags.extend([false; 108]);
    assert!((accuracy(&flags).unwrap() - 0.892).abs() < 1e-12);
    assert!(accuracy(&[]).is_err());

    assert_eq!(mean_detections_per_frame(&[0; 50]), 0.0);
    assert_eq!(mean_detections_per_frame(&[12; 50]), 12.0);

    let o = |avoided| SafetyOutcome {
        avoided,
        collision_speed: if avoided { 0.0 } else { 5.0 },
        stop_margin: 0.0,
        last_possible_brake_time: None,
    };
    assert_eq!(avoidance_rate(&[o(true); 9]).unwrap(), 1.0);
    assert_eq!(avoidance_rate(&[o(false); 9]).unwrap(), 0.0);
    let mixed: Vec<_> = (0..9).map(|i| o(i < 3)).collect();
    assert!((avoidance_rate(&mixed).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!(avoidance_rate(&[]).is_err());
}

proptest! {
    #[test]
    fn avoidance_rate_permutation_invariant(flags in proptest::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
        let outcomes: Vec<SafetyOutcome> = flags
            .iter()
            .map(|&a| SafetyOutcome { avoided: a, collision_speed: if a { 0.0 } else { 1.0 }, stop_margin: 0.0, last_possible_brake_time: None })
            .collect();
        let mut shuffled = outcomes.clone();
        // Deterministic Fisher-Yates driven by the seed.
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(avoidance_rate(&outcomes).unwrap(), avoidance_rate(&shuffled).unwrap());
        let expect = flags.iter().filter(|&&a| a).count() as f64 / flags.len() as f64;
        prop_assert_eq!(avoidance_rate(&outcomes).unwrap(), expect);
    }

    #[test]
    fn mean_detections_recount(counts in proptest::collection::vec(0usize..13, 1..200)) {
        let hand: usize = counts.iter().sum();
        prop_assert!((mean_detections_per_frame(&counts) - hand as f64 / counts.len() as f64).abs() < 1e-12);
        prop_assert!(mean_detections_per_frame(&counts) <= 12.0);
    }
}

#[test]
fn heatmaps_recount_real_traces() {
    let layout = SensorLayout::default_layout();
    let policy = AebPolicy::default();
    for (kind, speed) in every_case() {
        let spec = build_scenario(kind, speed).unwrap();
        let trace = simulate_run(
            &spec,
            &layout.sensors,
            &DetectionModel::default(),
            &policy,
            &Fusion::AnySensor,
            DEFAULT_DT,
        )
        .unwrap();
        let hm = build_heatmap(&trace);
        assert_eq!((hm.rows(), hm.columns()), (layout.sensors.len(), spec.frame_count()));
        assert!((hm.columns() as f64 * spec.frame_period() - spec.sim_duration).abs() <= spec.frame_period() + 1e-9);
        assert_eq!(hm.sensor_ids[0], "VUT");

        // Row sums recounted from the raw event list.
        for (s, id) in hm.sensor_ids.iter().enumerate() {
            let from_events = trace.events.iter().filter(|e| &e.sensor_id == id).count();
            let row_sum = hm.cells[s].iter().filter(|&&c| c).count();
            assert_eq!(row_sum, from_events, "{kind} {speed} {id}");
            for e in trace.events.iter().filter(|e| &e.sensor_id == id) {
                assert!(hm.cells[s][e.frame]);
            }
        }

        // Accuracy and redundancy recounted from the matrix.
        let any = trace_metrics(&trace, &layout.sensors, &Fusion::AnySensor).unwrap();
        let tp = (0..hm.columns()).filter(|&f| hm.cells.iter().any(|r| r[f])).count();
        assert!((any.accuracy - tp as f64 / hm.columns() as f64).abs() < 1e-12);
        let total: usize = hm.cells.iter().map(|r| r.iter().filter(|&&c| c).count()).sum();
        assert!((any.mean_detections_per_frame - total as f64 / hm.columns() as f64).abs() < 1e-12);
        assert!(any.mean_detections_per_frame <= layout.sensors.len() as f64);

        // Any-sensor accuracy bounds every sub-subset.
        let subsets = [
            Fusion::VutOnly,
            Fusion::subset(["RSU0", "RSU1"]),
            Fusion::subset(["RSU2", "RSU3", "RSU8"]),
            Fusion::subset(["VUT", "RSU5"]),
        ];
        for sub in subsets.iter().chain(layout.sensors.iter().map(|s| Fusion::subset([s.id.clone()])).collect::<Vec<_>>().iter()) {
            let m = trace_metrics(&trace, &layout.sensors, sub).unwrap();
            assert!(m.accuracy <= any.accuracy, "{kind} {speed} {sub}");
            let counts = subset_counts(&trace, &layout.sensors, sub).unwrap();
            assert_eq!(counts.len(), any.frames);
        }

        let outcome = classify_outcome(&trace);
        assert_eq!(hm.deadline_column, outcome.last_possible_brake_time.map(|t| (t * 10.0 + 1e-9).floor() as usize));
    }
}

#[test]
fn disabled_sensing_gives_blank_heatmap() {
    let layout = SensorLayout::default_layout();
    let spec = build_scenario(ScenarioKind::Cpnc50, 40).unwrap();
    let trace = simulate_run(
        &spec,
        &layout.sensors,
        &DetectionModel::disabled(),
        &AebPolicy::default(),
        &Fusion::AnySensor,
        DEFAULT_DT,
    )
    .unwrap();
    let hm = build_heatmap(&trace);
    assert!(hm.cells.iter().flatten().all(|&c| !c));
    let m = trace_metrics(&trace, &layout.sensors, &Fusion::AnySensor).unwrap();
    assert_eq!((m.accuracy, m.mean_detections_per_frame), (0.0, 0.0));
}

#[test]
fn heatmap_csv_and_ppm_shapes() {
    let layout = SensorLayout::default_layout();
    let spec = build_scenario(ScenarioKind::Cbna, 45).unwrap();
    let trace = simulate_run(
        &spec,
        &layout.sensors,
        &DetectionModel::default(),
        &AebPolicy::default(),
        &Fusion::AnySensor,
        DEFAULT_DT,
    )
    .unwrap();
    let hm = build_heatmap(&trace);
    let csv = hm.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), hm.rows() + 2);
    assert!(lines.iter().all(|l| l.split(',').count() == hm.columns() + 1));
    let deadline: Vec<&str> = lines.last().unwrap().split(',').skip(1).collect();
    assert_eq!(deadline.iter().filter(|&&c| c == "1").count(), 1);
    assert_eq!(deadline.iter().position(|&c| c == "1"), hm.deadline_column);

    let ppm = hm.to_ppm();
    let header = format!("P6\n{} {}\n255\n", hm.columns() * 4, hm.rows() * 16);
    assert!(ppm.starts_with(header.as_bytes()));
    assert_eq!(ppm.len(), header.len() + hm.columns() * 4 * hm.rows() * 16 * 3);
}
