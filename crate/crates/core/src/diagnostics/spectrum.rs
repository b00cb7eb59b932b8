use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{FlrError, Result};

/// Zero-padding factor applied before the transform, to refine the peak.
pub const PAD_FACTOR: usize = 8;

/// Minimum number of periods of the dominant tone inside the window.
const MIN_PERIODS: f64 = 4.0;

/// Dominant nonzero frequency (cycles per unit time) of a uniformly sampled
/// series `(t, value)`, analysed over its trailing `window` time units so
/// that an initial transient can be left out.
///
/// The mean is removed and the series is zero-padded by [`PAD_FACTOR`]; the
/// result is the highest local maximum of the amplitude spectrum over
/// positive frequencies.
pub fn parallel_spectrum(series: &[(f64, f64)], window: f64) -> Result<f64> {
    if !(window > 0.0) {
        return Err(FlrError::InvalidArgument(format!(
            "window must be positive, got {window}"
        )));
    }
    let t_last = series.last().map_or(0.0, |s| s.0);
    let start = series.partition_point(|s| s.0 < t_last - window * (1.0 + 1e-9));
    let series = &series[start..];
    if series.len() < 8 {
        return Err(FlrError::InsufficientSampling(format!(
            "{} samples; need at least 8",
            series.len()
        )));
    }
    let dt = series[1].0 - series[0].0;
    if !(dt > 0.0) || series.windows(2).any(|w| ((w[1].0 - w[0].0) - dt).abs() > 1e-6 * dt) {
        return Err(FlrError::InvalidArgument(
            "series must be uniformly sampled in t".into(),
        ));
    }
    let mean = series.iter().map(|s| s.1).sum::<f64>() / series.len() as f64;
    let n = series.len() * PAD_FACTOR;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, s) in buf.iter_mut().zip(series) {
        b.re = s.1 - mean;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let amp: Vec<f64> = buf[..=n / 2].iter().map(|c| c.norm()).collect();
    let peak = (1..n / 2)
        .filter(|&i| amp[i] >= amp[i - 1] && amp[i] >= amp[i + 1])
        .max_by(|&a, &b| amp[a].total_cmp(&amp[b]))
        .unwrap_or(n / 2);
    let freq = peak as f64 / (n as f64 * dt);
    if freq * window < MIN_PERIODS {
        return Err(FlrError::InsufficientSampling(format!(
            "dominant frequency {freq:.4} completes only {:.2} periods in a window of {window}; run longer",
            freq * window
        )));
    }
    Ok(freq)
}
