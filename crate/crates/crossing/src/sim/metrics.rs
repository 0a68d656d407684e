//! Run aggregates: throughput, travel times, queues, control composition.

use serde::Serialize;

use super::monitors::Violation;

/// Five-number-ish summary of a sample set (nearest-rank percentiles).
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct StatSummary {
    pub count: u64,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

impl StatSummary {
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return StatSummary::default();
        }
        samples.sort_by(|a, b| a.total_cmp(b));
        let count = samples.len() as u64;
        let mean = samples.iter().sum::<f64>() / count as f64;
        let rank = |p: f64| {
            let k = ((p * count as f64).ceil() as usize).clamp(1, samples.len());
            samples[k - 1]
        };
        StatSummary { count, mean, p50: rank(0.5), p90: rank(0.9), max: *samples.last().unwrap() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QueueStat {
    pub path: u32,
    pub max: u32,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DrainInfo {
    /// Slot after which no arrivals were drawn.
    pub stop_slot: u64,
    pub live_at_stop: u64,
    /// Latest boundary by which the area had to empty.
    pub deadline: u64,
    pub drained_at: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub seed: u64,
    pub config_hash: String,
    pub executed_slots: u64,
    pub spawned: u64,
    /// Arrival draws dropped because the queue tail had no room.
    pub suppressed_arrivals: u64,
    pub exited: u64,
    pub live_at_end: u64,
    /// Exits per slot.
    pub throughput: f64,
    /// Slots from crossing the entry line to crossing the exit line.
    pub travel_slots: StatSummary,
    /// Slots from first entry request to acceptance.
    pub acceptance_wait: StatSummary,
    pub rejections: u64,
    pub queues: Vec<QueueStat>,
    /// Control slots of accepted robots between entry and exit lines.
    pub in_area_control_slots: u64,
    pub in_area_throttle_slots: u64,
    pub in_area_throttle_fraction: f64,
    pub drain: Option<DrainInfo>,
    pub violation: Option<Violation>,
    /// Per-slot queue length per path, for stability analysis.
    #[serde(skip)]
    pub queue_series: Vec<Vec<u32>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_samples() {
        let s = StatSummary::from_samples(vec![4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!(s.count, 5);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.p50, 3.0);
        assert_eq!(s.p90, 5.0);
        assert_eq!(s.max, 5.0);
    }

    #[test]
    fn summary_of_nothing_is_zero() {
        assert_eq!(StatSummary::from_samples(vec![]), StatSummary::default());
    }
}
