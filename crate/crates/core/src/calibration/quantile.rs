use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::simulate::StatisticPaths;

/// Empirical `(1-α)`-quantile: the value with at most `⌊αn⌋` sample points
/// strictly above it (for distinct values). Reorders `values`.
pub fn upper_quantile(values: &mut [f64], alpha: f64) -> f64 {
    let n = values.len();
    assert!(n > 0, "quantile of an empty sample");
    // The epsilon absorbs rounding in α·n when the product is integral.
    let above = ((alpha * n as f64) + 1e-9).floor() as usize;
    let rank = n.saturating_sub(above).max(1);
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawThreshold {
    pub t: u64,
    pub h: f64,
    /// Replicates that had not exceeded any earlier threshold.
    pub survivors: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub points: Vec<RawThreshold>,
    /// First `t` skipped because fewer than the survivor floor remained.
    pub truncated_at: Option<u64>,
}

/// Conditional quantiles over materialized paths. A replicate stays in the
/// pool while its statistic never exceeded an earlier threshold.
pub fn conditional_quantile_thresholds<F: Scalar>(
    paths: &StatisticPaths<F>,
    alpha: f64,
    survivor_floor: usize,
) -> RawSeries {
    let mut survivors: Vec<usize> = (0..paths.replicates()).collect();
    let mut points = Vec::with_capacity(paths.length());
    let mut scratch = Vec::with_capacity(survivors.len());
    let mut truncated_at = None;
    for t in 0..paths.length() {
        if survivors.len() < survivor_floor.max(1) {
            log::warn!(
                "only {} surviving replicates at t={}; raw thresholds truncated",
                survivors.len(),
                t + 1
            );
            truncated_at = Some(t as u64 + 1);
            break;
        }
        scratch.clear();
        scratch.extend(survivors.iter().map(|&i| paths.path(i)[t].widen()));
        let h = upper_quantile(&mut scratch, alpha);
        points.push(RawThreshold {
            t: t as u64 + 1,
            h,
            survivors: survivors.len() as u64,
        });
        survivors.retain(|&i| paths.path(i)[t].widen() <= h);
    }
    RawSeries { points, truncated_at }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_leaves_alpha_fraction_above() {
        let mut v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(upper_quantile(&mut v, 0.01), 990.0);
        let mut v: Vec<f64> = (1..=100_000).map(f64::from).collect();
        assert_eq!(upper_quantile(&mut v, 0.002), 99_800.0);
        let mut v = vec![3.0; 10];
        assert_eq!(upper_quantile(&mut v, 0.5), 3.0);
        let mut v = vec![1.0, 2.0];
        assert_eq!(upper_quantile(&mut v, 0.001), 2.0);
    }

    #[test]
    fn constant_paths_keep_every_survivor() {
        let paths = StatisticPaths::from_values(50, 4, vec![2.5f64; 200]);
        let raw = conditional_quantile_thresholds(&paths, 0.5, 20);
        assert_eq!(raw.points.len(), 4);
        for p in &raw.points {
            assert_eq!(p.h, 2.5);
            assert_eq!(p.survivors, 50);
        }
    }

    #[test]
    fn truncates_below_floor() {
        // Replicate i has statistic i at every step: the top α share leaves each step.
        let r = 100;
        let len = 50;
        let values: Vec<f64> = (0..r).flat_map(|i| vec![i as f64; len]).collect();
        let paths = StatisticPaths::from_values(r, len, values);
        let raw = conditional_quantile_thresholds(&paths, 0.1, 20);
        let last = raw.points.last().unwrap();
        assert!(last.survivors >= 20);
        assert!(raw.truncated_at.is_some());
        assert_eq!(raw.points[0].h, 89.0);
        assert_eq!(raw.points[1].survivors, 90);
    }
}
