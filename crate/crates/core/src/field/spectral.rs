//! Fourier-space Poisson solves and differentiation on the periodic grid.
//!
//! Forward transforms are unnormalized and the inverse carries `1/N`.
//! Wavenumbers along an axis of `n` nodes run over `-n/2+1 ..= n/2`; the
//! Nyquist mode of first derivatives is dropped.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::{GridSpec, ScalarField, VectorField};
use crate::error::{FlrError, Result};

/// Poisson-equation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoissonModel {
    /// `V − ε²Δ_par V − Δ_⊥V = ρ − ⟨ρ⟩` (linearized adiabatic electrons).
    Quasineutral,
    /// `−ε²Δ_par V − Δ_⊥V = ρ − ⟨ρ⟩` (fixed neutralizing background).
    FixedIons,
    /// `V − Δ_⊥V = ρ − 1`, the gyrokinetic limit; no parallel field.
    Limit,
}

impl PoissonModel {
    /// Fourier symbol of the operator at angular wavenumbers `k = 2π·mode`.
    pub fn symbol(self, k: [f64; 3], eps: f64) -> f64 {
        let perp = k[0] * k[0] + k[1] * k[1];
        let par = eps * eps * k[2] * k[2];
        match self {
            PoissonModel::Quasineutral => 1.0 + par + perp,
            PoissonModel::FixedIons => par + perp,
            PoissonModel::Limit => 1.0 + perp,
        }
    }
}

/// Integer wavenumber of FFT index `i` on an axis of length `n`.
#[inline]
pub fn mode_number(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Tolerance on the mean of the fixed-ion right-hand side.
pub const SOLVABILITY_TOLERANCE: f64 = 1e-10;

/// Cached FFT plans for one grid.
pub struct FieldSolver {
    spec: GridSpec,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for FieldSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSolver").field("spec", &self.spec).finish()
    }
}

impl FieldSolver {
    pub fn new(spec: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let dims = spec.dims();
        FieldSolver {
            spec,
            forward: dims.map(|n| planner.plan_fft_forward(n)),
            inverse: dims.map(|n| planner.plan_fft_inverse(n)),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    fn fft3(&self, data: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.forward };
        let [n1, n2, n3] = self.spec.dims();
        plans[0].process(data);

        let mut line = vec![Complex64::new(0.0, 0.0); n2.max(n3)];
        for i3 in 0..n3 {
            for i1 in 0..n1 {
                let base = i1 + n1 * n2 * i3;
                for i2 in 0..n2 {
                    line[i2] = data[base + n1 * i2];
                }
                plans[1].process(&mut line[..n2]);
                for i2 in 0..n2 {
                    data[base + n1 * i2] = line[i2];
                }
            }
        }
        let plane = n1 * n2;
        for base in 0..plane {
            for i3 in 0..n3 {
                line[i3] = data[base + plane * i3];
            }
            plans[2].process(&mut line[..n3]);
            for i3 in 0..n3 {
                data[base + plane * i3] = line[i3];
            }
        }
    }

    /// Unnormalized forward transform of a real field.
    pub fn forward(&self, f: &ScalarField) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft3(&mut data, false);
        data
    }

    /// Inverse transform (with `1/N`), keeping the real part.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> ScalarField {
        self.fft3(&mut data, true);
        let scale = 1.0 / self.spec.len() as f64;
        let values = data.into_iter().map(|c| c.re * scale).collect();
        ScalarField::from_values(self.spec, values).expect("transform preserves length")
    }

    /// Angular wavenumbers `2π·(m1, m2, m3)` of each flat index, and whether
    /// the index sits on a Nyquist plane of each axis.
    fn for_each_mode(&self, mut f: impl FnMut(usize, [f64; 3], [bool; 3])) {
        let [n1, n2, n3] = self.spec.dims();
        for i3 in 0..n3 {
            let k3 = 2.0 * PI * mode_number(i3, n3) as f64;
            for i2 in 0..n2 {
                let k2 = 2.0 * PI * mode_number(i2, n2) as f64;
                for i1 in 0..n1 {
                    let k1 = 2.0 * PI * mode_number(i1, n1) as f64;
                    let nyq = [i1 == n1 / 2, i2 == n2 / 2, i3 == n3 / 2];
                    f(self.spec.index(i1, i2, i3), [k1, k2, k3], nyq);
                }
            }
        }
    }

    /// Applies a real Fourier multiplier `m(k)` to a real field.
    pub fn apply_multiplier(&self, f: &ScalarField, m: impl Fn([f64; 3]) -> f64) -> ScalarField {
        let mut hat = self.forward(f);
        self.for_each_mode(|idx, k, _| hat[idx] *= m(k));
        self.inverse_real(hat)
    }

    /// Spectral derivative along `axis` (0, 1, or 2).
    pub fn derivative(&self, f: &ScalarField, axis: usize) -> ScalarField {
        let hat = self.forward(f);
        self.derivative_from_hat(&hat, axis)
    }

    fn derivative_from_hat(&self, hat: &[Complex64], axis: usize) -> ScalarField {
        let mut out = hat.to_vec();
        self.for_each_mode(|idx, k, nyq| {
            out[idx] = if nyq[axis] {
                Complex64::new(0.0, 0.0)
            } else {
                out[idx] * Complex64::new(0.0, k[axis])
            };
        });
        self.inverse_real(out)
    }

    /// Solves the selected Poisson equation for `V` given the density `rho`.
    ///
    /// The subtracted constant is the grid mean of `rho` for `Quasineutral`
    /// and `FixedIons` and the unit total mass for `Limit`.
    pub fn solve_poisson(&self, rho: &ScalarField, eps: f64, model: PoissonModel) -> Result<ScalarField> {
        if rho.spec() != self.spec {
            return Err(FlrError::InvalidArgument(
                "density grid does not match solver grid".into(),
            ));
        }
        if !rho.is_finite() {
            return Err(FlrError::NonFinite("charge density".into()));
        }
        if model != PoissonModel::Limit && !(eps > 0.0) {
            return Err(FlrError::InvalidArgument(format!(
                "epsilon must be positive, got {eps}"
            )));
        }
        let background = match model {
            PoissonModel::Quasineutral | PoissonModel::FixedIons => rho.mean(),
            PoissonModel::Limit => 1.0,
        };
        let rhs = ScalarField::from_values(self.spec, rho.values().iter().map(|r| r - background).collect())?;
        if model == PoissonModel::FixedIons {
            let mean = rhs.mean();
            let scale = rho.max_abs().max(1.0);
            if !(mean.abs() <= SOLVABILITY_TOLERANCE * scale) {
                return Err(FlrError::ChargeImbalance { mean });
            }
        }
        let mut hat = self.forward(&rhs);
        self.for_each_mode(|idx, k, _| {
            let is_zero = idx == 0;
            hat[idx] = match (model, is_zero) {
                (PoissonModel::Quasineutral | PoissonModel::FixedIons, true) => Complex64::new(0.0, 0.0),
                _ => hat[idx] / model.symbol(k, eps),
            };
        });
        Ok(self.inverse_real(hat))
    }

    /// The discrete operator of `model` applied to `v`.
    pub fn apply_operator(&self, v: &ScalarField, eps: f64, model: PoissonModel) -> ScalarField {
        self.apply_multiplier(v, |k| model.symbol(k, eps))
    }

    /// `E = (−∂₁V, −∂₂V, −ε∂_par V)`; the parallel component vanishes for
    /// the limit model.
    pub fn field_from_potential(&self, v: &ScalarField, eps: f64, model: PoissonModel) -> VectorField {
        let hat = self.forward(v);
        let e1 = self.derivative_from_hat(&hat, 0).scaled(-1.0);
        let e2 = self.derivative_from_hat(&hat, 1).scaled(-1.0);
        let e3 = match model {
            PoissonModel::Limit => ScalarField::zeros(self.spec),
            _ => self.derivative_from_hat(&hat, 2).scaled(-eps),
        };
        VectorField { comps: [e1, e2, e3] }
    }

    /// Spectral gradient `(∂₁f, ∂₂f, ∂₃f)`.
    pub fn gradient(&self, f: &ScalarField) -> [ScalarField; 3] {
        let hat = self.forward(f);
        [0, 1, 2].map(|axis| self.derivative_from_hat(&hat, axis))
    }
}
