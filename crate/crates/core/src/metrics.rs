//! Accuracy, redundancy, avoidance rate and detection heatmaps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aeb::{RunTrace, SafetyOutcome};
use crate::error::{Error, Result};
use crate::sensing::{Fusion, SensorUnit};

/// `TP / frames`, where a frame is a TP when at least one chosen sensor detects.
pub fn accuracy(detected: &[bool]) -> Result<f64> {
    if detected.is_empty() {
        return Err(Error::Validation("accuracy needs at least one frame".into()));
    }
    let tp = detected.iter().filter(|&&d| d).count();
    Ok(tp as f64 / detected.len() as f64)
}

/// Qualifying detections summed over sensors, divided by frame count.
pub fn mean_detections_per_frame(counts: &[usize]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.iter().sum::<usize>() as f64 / counts.len() as f64
}

pub fn avoidance_rate(outcomes: &[SafetyOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Validation("avoidance rate needs at least one outcome".into()));
    }
    let avoided = outcomes.iter().filter(|o| o.avoided).count();
    Ok(avoided as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub mean_detections_per_frame: f64,
    /// Frames counted, from the VRU spawn frame on.
    pub frames: usize,
}

/// Per-frame flags restricted to the fused sensors, from the VRU spawn frame on.
pub fn subset_counts(trace: &RunTrace, sensors: &[SensorUnit], fusion: &Fusion) -> Result<Vec<usize>> {
    let members = fusion.members(sensors)?;
    let mask: Vec<bool> = trace
        .sensor_ids
        .iter()
        .map(|id| members.iter().any(|m| &m.id == id))
        .collect();
    let spawn = trace.spec.vru_spawn_frame();
    Ok(trace
        .frames
        .iter()
        .filter(|f| f.frame >= spawn)
        .map(|f| f.detected.iter().zip(&mask).filter(|(&d, &m)| d && m).count())
        .collect())
}

pub fn trace_metrics(trace: &RunTrace, sensors: &[SensorUnit], fusion: &Fusion) -> Result<MetricsReport> {
    let counts = subset_counts(trace, sensors, fusion)?;
    let flags: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    Ok(MetricsReport {
        accuracy: accuracy(&flags)?,
        mean_detections_per_frame: mean_detections_per_frame(&counts),
        frames: counts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMatrix {
    pub sensor_ids: Vec<String>,
    pub frame_times: Vec<f64>,
    /// `cells[sensor][frame]`
    pub cells: Vec<Vec<bool>>,
    pub deadline_column: Option<usize>,
}

pub fn deadline_column(last_possible_brake_time: Option<f64>, frame_rate: f64) -> Option<usize> {
    last_possible_brake_time.map(|t| (t * frame_rate + 1e-9).floor() as usize)
}

/// Rows follow the trace's sensor order (VUT units first, then RSUs).
pub fn build_heatmap(trace: &RunTrace) -> HeatmapMatrix {
    let cells = (0..trace.sensor_ids.len())
        .map(|s| trace.frames.iter().map(|f| f.detected[s]).collect())
        .collect();
    HeatmapMatrix {
        sensor_ids: trace.sensor_ids.clone(),
        frame_times: trace.frames.iter().map(|f| f.time).collect(),
        cells,
        deadline_column: deadline_column(trace.last_possible_brake_time, trace.spec.frame_rate),
    }
}

const CELL_W: usize = 4;
const CELL_H: usize = 16;
const GREEN: [u8; 3] = [0, 160, 60];
const WHITE: [u8; 3] = [255, 255, 255];
const RED: [u8; 3] = [220, 0, 0];

impl HeatmapMatrix {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn columns(&self) -> usize {
        self.frame_times.len()
    }

    /// Header of frame times, one 0/1 row per sensor, then a `deadline` row
    /// marking the last possible brake column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sensor");
        for t in &self.frame_times {
            let _ = write!(out, ",{t:.3}");
        }
        out.push('\n');
        for (id, row) in self.sensor_ids.iter().zip(&self.cells) {
            out.push_str(id);
            for &c in row {
                out.push_str(if c { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out.push_str("deadline");
        for col in 0..self.columns() {
            out.push_str(if Some(col) == self.deadline_column { ",1" } else { ",0" });
        }
        out.push('\n');
        out
    }

    /// Binary portable pixmap; each cell is 4x16 pixels.
    pub fn to_ppm(&self) -> Vec<u8> {
        let width = self.columns().max(1) * CELL_W;
        let height = self.rows().max(1) * CELL_H;
        let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
        out.reserve(width * height * 3);
        for y in 0..height {
            let row = y / CELL_H;
            for x in 0..width {
                let col = x / CELL_W;
                let color = if Some(col) == self.deadline_column && col < self.columns() {
                    RED
                } else if self.cells.get(row).and_then(|r| r.get(col)).copied().unwrap_or(false) {
                    GREEN
                } else {
                    WHITE
                };
                out.extend_from_slice(&color);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_is_direct_ratio() {
        assert_eq!(accuracy(&[false; 100]).unwrap(), 0.0);
        assert_eq!(accuracy(&[true; 7]).unwrap(), 1.0);
        let mut flags = vec![false; 1000];
        flags[..892].iter_mut().for_each(|f| *f = true);
        assert!((accuracy(&flags).unwrap() - 0.892).abs() < 1e-15);
        assert!(accuracy(&[]).is_err());
    }

    #[test]
    fn mean_detections() {
        assert_eq!(mean_detections_per_frame(&[0, 0, 0]), 0.0);
        assert_eq!(mean_detections_per_frame(&[12; 50]), 12.0);
        assert_eq!(mean_detections_per_frame(&[1, 2, 3, 0]), 1.5);
    }

    fn outcome(avoided: bool) -> SafetyOutcome {
        SafetyOutcome {
            avoided,
            collision_speed: if avoided { 0.0 } else { 5.0 },
            stop_margin: 0.0,
            last_possible_brake_time: None,
        }
    }

    #[test]
    fn avoidance_rates() {
        let all: Vec<_> = (0..9).map(|_| outcome(true)).collect();
        assert_eq!(avoidance_rate(&all).unwrap(), 1.0);
        let three: Vec<_> = (0..9).map(|i| outcome(i < 3)).collect();
        assert!((avoidance_rate(&three).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let none: Vec<_> = (0..9).map(|_| outcome(false)).collect();
        assert_eq!(avoidance_rate(&none).unwrap(), 0.0);
        assert!(avoidance_rate(&[]).is_err());
    }

    #[test]
    fn deadline_column_floors() {
        assert_eq!(deadline_column(Some(1.25), 10.0), Some(12));
        assert_eq!(deadline_column(Some(0.3), 10.0), Some(3));
        assert_eq!(deadline_column(None, 10.0), None);
    }

    #[test]
    fn ppm_header_and_size() {
        let m = HeatmapMatrix {
            sensor_ids: vec!["A".into(), "B".into()],
            frame_times: vec![0.0, 0.1, 0.2],
            cells: vec![vec![true, false, true], vec![false, false, false]],
            deadline_column: Some(1),
        };
        let ppm = m.to_ppm();
        let header = b"P6\n12 32\n255\n";
        assert!(ppm.starts_with(header));
        assert_eq!(ppm.len(), header.len() + 12 * 32 * 3);
        // Top-left pixel is a detection, pixel in column 1 is the deadline.
        assert_eq!(&ppm[header.len()..header.len() + 3], &GREEN);
        assert_eq!(&ppm[header.len() + 4 * 3..header.len() + 5 * 3], &RED);
        let csv = m.to_csv();
        assert_eq!(csv, "sensor,0.000,0.100,0.200\nA,1,0,1\nB,0,0,0\ndeadline,0,1,0\n");
    }
}
