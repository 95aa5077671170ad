//! Small summary statistics for run comparison: median and a seeded
//! bootstrap confidence interval of the median.

use crate::rng::{streams, SeededRng};

/// Median with the usual midpoint rule for even counts. Empty input is the
/// caller's bug; returns NaN so it surfaces loudly.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Percentile bootstrap CI of the median: `resamples` draws with replacement
/// under a fixed seed, then the (lo, hi) quantiles of the resampled medians.
pub fn bootstrap_ci_median(values: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    if values.len() < 2 {
        let m = median(values);
        return (m, m);
    }
    let mut rng = SeededRng::new(seed, streams::BOOTSTRAP);
    let mut medians = Vec::with_capacity(resamples);
    let mut sample = vec![0.0; values.len()];
    for _ in 0..resamples {
        for slot in sample.iter_mut() {
            *slot = values[rng.index(values.len())];
        }
        medians.push(median(&sample));
    }
    medians.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile(&medians, tail), quantile(&medians, 1.0 - tail))
}

/// Nearest-rank quantile over a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even_counts() {
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0, 5.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn single_value_ci_is_degenerate() {
        let (lo, hi) = bootstrap_ci_median(&[3.0], 1000, 0.95, 1);
        assert_eq!((lo, hi), (3.0, 3.0));
    }

    #[test]
    fn ci_brackets_the_median_and_is_reproducible() {
        let values: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let (lo, hi) = bootstrap_ci_median(&values, 1000, 0.95, 42);
        let m = median(&values);
        assert!(lo <= m && m <= hi, "({lo}, {hi}) vs {m}");
        assert!(lo >= 1.0 && hi <= 10.0);
        assert_eq!(bootstrap_ci_median(&values, 1000, 0.95, 42), (lo, hi));
    }

    #[test]
    fn ci_matches_independent_resampler_within_tolerance() {
        // independent oracle: different resampling loop and rng stream
        let values = [2.0, 9.0, 4.0, 7.0, 1.0, 6.0, 8.0, 3.0, 5.0, 10.0];
        let (lo, hi) = bootstrap_ci_median(&values, 1000, 0.95, 7);
        let mut rng = SeededRng::new(1234, 99);
        let mut medians: Vec<f64> = (0..4000)
            .map(|_| {
                let sample: Vec<f64> = (0..values.len())
                    .map(|_| values[rng.index(values.len())])
                    .collect();
                median(&sample)
            })
            .collect();
        medians.sort_by(f64::total_cmp);
        let oracle_lo = medians[(0.025 * medians.len() as f64) as usize];
        let oracle_hi = medians[(0.975 * medians.len() as f64) as usize - 1];
        let range = 10.0 - 1.0;
        assert!(
            (lo - oracle_lo).abs() <= 0.15 * range,
            "{lo} vs {oracle_lo}"
        );
        assert!(
            (hi - oracle_hi).abs() <= 0.15 * range,
            "{hi} vs {oracle_hi}"
        );
    }
}
