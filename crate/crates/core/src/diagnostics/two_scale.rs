use std::f64::consts::PI;

use crate::error::{FlrError, Result};

/// Samples of a signal binned by fast phase `τ = (t/ε) mod 2π`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleProfile {
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl TwoScaleProfile {
    /// Bins `samples` into `n_bins` equal phase bins; every bin must receive
    /// at least one sample.
    pub fn extract(samples: &[(f64, f64)], eps: f64, n_bins: usize) -> Result<Self> {
        if n_bins == 0 || !(eps > 0.0) {
            return Err(FlrError::InvalidArgument("need n_bins > 0 and epsilon > 0".into()));
        }
        let mut sums = vec![0.0; n_bins];
        let mut counts = vec![0; n_bins];
        for &(t, v) in samples {
            let tau = (t / eps).rem_euclid(2.0 * PI);
            let bin = ((tau / (2.0 * PI) * n_bins as f64) as usize).min(n_bins - 1);
            sums[bin] += v;
            counts[bin] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(FlrError::InsufficientSampling(format!(
                "phase bin {empty} of {n_bins} is empty; sample more densely than 2π·ε/{n_bins}"
            )));
        }
        Ok(TwoScaleProfile { sums, counts })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * PI / self.n_bins() as f64
    }

    /// Bin centres in `[0, 2π)`.
    pub fn centers(&self) -> Vec<f64> {
        let h = self.bin_width();
        (0..self.n_bins()).map(|i| (i as f64 + 0.5) * h).collect()
    }

    /// Per-bin means: the profile estimate `U(τ)`.
    pub fn profile(&self) -> Vec<f64> {
        self.sums.iter().zip(&self.counts).map(|(s, &c)| s / c as f64).collect()
    }

    /// Unweighted mean over bins, `(1/2π)∫U dτ`: the weak-limit estimate.
    pub fn bin_mean(&self) -> f64 {
        self.profile().iter().sum::<f64>() / self.n_bins() as f64
    }

    /// Count-weighted mean over bins; equals the plain sample average.
    pub fn weighted_mean(&self) -> f64 {
        self.sums.iter().sum::<f64>() / self.counts.iter().sum::<usize>() as f64
    }
}
