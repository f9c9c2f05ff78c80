//! Per-generation distribution summaries.

use serde::{Deserialize, Serialize};

use crate::model::PhoneticModel;

pub const HISTOGRAM_BINS: usize = 200;

/// Normalized densities below this are zeroed in density exports.
pub const DENSITY_THRESHOLD: f64 = 1e-4;

/// Fixed histogram support, `[μ_i − 5σ_a, μ_a + 5σ_a]` split into equal bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRange {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl HistogramRange {
    pub fn for_model(model: &PhoneticModel) -> Self {
        Self {
            lo: model.mu_i - 5.0 * model.sigma_a,
            hi: model.mu_a + 5.0 * model.sigma_a,
            bins: HISTOGRAM_BINS,
        }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.bin_width()
    }

    /// Bin holding `x`; values outside the support land in the edge bins.
    pub fn bin_of(&self, x: f64) -> usize {
        let raw = ((x - self.lo) / self.bin_width()).floor();
        if raw.is_nan() || raw < 0.0 {
            0
        } else {
            (raw as usize).min(self.bins - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub mean: f64,
    /// Population variance (divisor M).
    pub var: f64,
    pub p05: f64,
    pub p95: f64,
    pub histogram: Vec<u32>,
}

impl DistributionSummary {
    pub fn spread(&self) -> f64 {
        self.p95 - self.p05
    }

    pub fn count(&self) -> u64 {
        self.histogram.iter().map(|&c| u64::from(c)).sum()
    }

    /// count / (M · bin width), zeroed below [`DENSITY_THRESHOLD`].
    pub fn thresholded_density(&self, range: &HistogramRange) -> Vec<f64> {
        let norm = self.count() as f64 * range.bin_width();
        self.histogram
            .iter()
            .map(|&c| {
                let d = f64::from(c) / norm;
                if d < DENSITY_THRESHOLD {
                    0.0
                } else {
                    d
                }
            })
            .collect()
    }

    /// Number of maximal runs of adjacent occupied bins in the thresholded
    /// density. Two or more means the distribution has separated modes.
    pub fn occupied_regions(&self, range: &HistogramRange) -> usize {
        let density = self.thresholded_density(range);
        let mut regions = 0;
        let mut inside = false;
        for d in density {
            if d > 0.0 && !inside {
                regions += 1;
            }
            inside = d > 0.0;
        }
        regions
    }
}

/// Nearest-rank percentile: the value at rank ⌈p/100 · N⌉ (1-based).
/// Reorders `scratch`.
pub fn nearest_rank(scratch: &mut [f64], percent: f64) -> f64 {
    assert!(!scratch.is_empty(), "percentile of an empty list");
    let n = scratch.len();
    let rank = ((percent / 100.0) * n as f64).ceil().max(1.0) as usize;
    let idx = rank.min(n) - 1;
    let (_, v, _) = scratch.select_nth_unstable_by(idx, f64::total_cmp);
    *v
}

/// Mean, variance, 5th/95th nearest-rank percentiles and histogram counts.
///
/// Panics on an empty list.
pub fn summarize(values: &[f64], range: &HistogramRange) -> DistributionSummary {
    assert!(!values.is_empty(), "summary of an empty population");
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m;

    let mut scratch = values.to_vec();
    let p05 = nearest_rank(&mut scratch, 5.0);
    let p95 = nearest_rank(&mut scratch, 95.0);

    let mut histogram = vec![0u32; range.bins];
    for &x in values {
        histogram[range.bin_of(x)] += 1;
    }

    DistributionSummary {
        mean,
        var,
        p05,
        p95,
        histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{sample_normal, RngStream};

    fn unit_range() -> HistogramRange {
        HistogramRange {
            lo: -5.0,
            hi: 5.0,
            bins: HISTOGRAM_BINS,
        }
    }

    #[test]
    fn constant_population() {
        let s = summarize(&[5.0, 5.0, 5.0], &HistogramRange { lo: 0.0, hi: 10.0, bins: 200 });
        assert_eq!((s.mean, s.var, s.p05, s.p95), (5.0, 0.0, 5.0, 5.0));
        assert_eq!(s.count(), 3);
    }

    #[test]
    fn nearest_rank_on_one_to_hundred() {
        let values: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        let s = summarize(&values, &HistogramRange { lo: 0.0, hi: 101.0, bins: 200 });
        assert_eq!(s.p05, 5.0);
        assert_eq!(s.p95, 95.0);
    }

    #[test]
    fn normal_fifth_percentile() {
        let mut rng = RngStream::new(11, 0, 0);
        let values: Vec<f64> = (0..100_000).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect();
        let s = summarize(&values, &unit_range());
        assert!((s.p05 + 1.645).abs() < 0.02, "p05 {}", s.p05);
        assert!((s.p95 - 1.645).abs() < 0.02, "p95 {}", s.p95);
    }

    #[test]
    fn out_of_range_values_land_in_edge_bins() {
        let r = unit_range();
        let s = summarize(&[-100.0, 100.0, 0.0], &r);
        assert_eq!(s.histogram[0], 1);
        assert_eq!(s.histogram[r.bins - 1], 1);
        assert_eq!(s.count(), 3);
    }

    #[test]
    fn density_integrates_to_one_and_thresholds() {
        let r = unit_range();
        let mut values = vec![0.0; 20_000];
        values.push(4.0);
        let s = summarize(&values, &r);
        let d = s.thresholded_density(&r);
        // the lone value has density 1/(20001·0.05) ≈ 1e-3, above threshold
        assert!(d[r.bin_of(4.0)] > 0.0);
        let total: f64 = d.iter().sum::<f64>() * r.bin_width();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(s.occupied_regions(&r), 2);

        let mut values = vec![0.0; 300_000];
        values.push(4.0);
        let s = summarize(&values, &r);
        // 1/(300001·0.05) < 1e-4
        assert_eq!(s.thresholded_density(&r)[r.bin_of(4.0)], 0.0);
        assert_eq!(s.occupied_regions(&r), 1);
    }
}
