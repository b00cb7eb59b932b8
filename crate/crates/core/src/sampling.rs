//! Deterministic initial loading.
//!
//! Particles sample
//! `f₀(x, v) = (1 + a cos(2π m₁ x₁) cos(2π m₃ x_par)) 𝓜(v)`
//! where `𝓜` is the unit-variance isotropic Gaussian truncated at
//! `|v| ≤ v_max`. Points come from a Halton sequence mapped through inverse
//! CDFs, so every run with the same loading parameters sees the same
//! ensemble regardless of ε.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

use statrs::function::erf::erf;

use crate::ensemble::{Ensemble, Frame};
use crate::error::{FlrError, Result};
use crate::geometry::{gyro_transform, Convention, Direction, PhasePoint};

pub(crate) const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Point `index` (1-based) of the Halton sequence in `dim ≤ 8` dimensions.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

/// Parameters of the initial distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loading {
    pub particles: usize,
    /// Perturbation amplitude `a`, must satisfy `0 ≤ a < 1`.
    pub amplitude: f64,
    pub mode_perp: u32,
    pub mode_par: u32,
    pub v_max: f64,
}

impl Loading {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(FlrError::InvalidArgument("particle count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return Err(FlrError::InvalidArgument(format!(
                "perturbation amplitude {} must lie in [0, 1) to keep the density positive",
                self.amplitude
            )));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(FlrError::InvalidArgument(format!(
                "v_max must be positive, got {}",
                self.v_max
            )));
        }
        Ok(())
    }
}

/// CDF of the speed `|v|` for a unit-variance 3D Gaussian.
pub fn speed_cdf(r: f64) -> f64 {
    erf(r / SQRT_2) - (2.0 / PI).sqrt() * r * (-0.5 * r * r).exp()
}

fn speed_pdf(r: f64) -> f64 {
    // sqrt(2/π) r² e^{-r²/2}
    FRAC_2_SQRT_PI / SQRT_2 * r * r * (-0.5 * r * r).exp()
}

/// Solves `cdf(x) = target` on `[lo, hi]` for a monotone CDF by safeguarded
/// Newton iteration.
fn invert_monotone(target: f64, mut lo: f64, mut hi: f64, cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let f = cdf(x) - target;
        if f.abs() < 1e-16 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = pdf(x);
        let newton = x - f / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 {
            break;
        }
    }
    x
}

/// Inverse CDF of the density `1 + c cos(2π m x)` on `[0, 1)`, `|c| < 1`.
fn invert_cosine_density(u: f64, c: f64, m: u32) -> f64 {
    if m == 0 || c == 0.0 {
        return u;
    }
    let k = 2.0 * PI * m as f64;
    invert_monotone(u, 0.0, 1.0, |x| x + c * (k * x).sin() / k, |x| 1.0 + c * (k * x).cos())
}

fn sample_point(load: &Loading, index: u64, speed_norm: f64) -> PhasePoint {
    let u = |d: usize| radical_inverse(index, PRIMES[d]);
    let a = load.amplitude;
    let two_pi = 2.0 * PI;

    // With m₃ ≥ 1 the x₁ marginal is uniform and x_par is conditional on x₁;
    // otherwise the perturbation only modulates x₁.
    let (x1, x3) = if load.mode_par >= 1 {
        let x1 = u(0);
        let c = a * (two_pi * load.mode_perp as f64 * x1).cos();
        (x1, invert_cosine_density(u(2), c, load.mode_par))
    } else {
        (invert_cosine_density(u(0), a, load.mode_perp), u(2))
    };
    let x2 = u(1);

    let r = invert_monotone(u(3) * speed_norm, 0.0, load.v_max, speed_cdf, speed_pdf);
    let cos_t = 2.0 * u(4) - 1.0;
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let (sin_p, cos_p) = (two_pi * u(5)).sin_cos();
    PhasePoint::new([x1, x2, x3], [r * sin_t * cos_p, r * sin_t * sin_p, r * cos_t])
}

/// Samples `f₀` in the physical frame with uniform weights `1/N`.
pub fn init_ensemble(load: &Loading) -> Result<Ensemble> {
    load.validate()?;
    let speed_norm = speed_cdf(load.v_max);
    let points = (1..=load.particles as u64)
        .map(|i| sample_point(load, i, speed_norm))
        .collect();
    Ensemble::uniform(points, Frame::Physical)
}

/// Samples the gyroaverage `(1/2π)∫ f₀(x + 𝓡(τ)v, R(τ)v) dτ`: each `f₀`
/// sample is moved to gyro coordinates at an independent quasi-random phase.
pub fn init_gyroaveraged(load: &Loading, conv: Convention) -> Result<Ensemble> {
    let base = init_ensemble(load)?;
    let points = base
        .points()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let tau = 2.0 * PI * radical_inverse(i as u64 + 1, PRIMES[6]);
            // (y, w) with f₀ evaluated at (y + 𝓡(τ)w, R(τ)w) = p.
            gyro_transform(p, -tau, Direction::PhysToGyro, conv)
        })
        .collect();
    Ensemble::uniform(points, Frame::Gyro)
}
