use std::f64::consts::PI;

use num_complex::Complex64;

use crate::field::{FieldSolver, PoissonModel, ScalarField, VectorField};

/// Terms of the conserved energy `Σw|v|² + ε∫V² + ε∫|∇_⊥V|² + ε³∫|∇_par V|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub field_l2: f64,
    pub field_perp: f64,
    pub field_par: f64,
}

impl EnergyParts {
    /// The conserved total. The fixed-ion operator has no identity term, so
    /// its energy omits `ε∫V²`.
    pub fn total(&self, model: Option<PoissonModel>) -> f64 {
        let l2 = match model {
            Some(PoissonModel::FixedIons) => 0.0,
            _ => self.field_l2,
        };
        self.kinetic + l2 + self.field_perp + self.field_par
    }
}

/// Field terms by grid quadrature with spectral gradients.
pub fn energy_parts(kinetic: f64, potential: &ScalarField, eps: f64, fs: &FieldSolver) -> EnergyParts {
    let [d1, d2, d3] = fs.gradient(potential);
    EnergyParts {
        kinetic,
        field_l2: eps * potential.integral_sq(),
        field_perp: eps * (d1.integral_sq() + d2.integral_sq()),
        field_par: eps.powi(3) * d3.integral_sq(),
    }
}

/// `∫ρ^{3/2}` and `∫ρ` over the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityNorms {
    /// `∫ max(ρ, 0)^{3/2} dx`.
    pub l32: f64,
    pub l1: f64,
    /// Cells with negative deposited density, clipped for `l32`.
    pub clipped: usize,
}

pub fn density_norms(rho: &ScalarField) -> DensityNorms {
    let dv = rho.spec().cell_volume();
    let mut l32 = 0.0;
    let mut l1 = 0.0;
    let mut clipped = 0;
    for &r in rho.values() {
        if r < 0.0 {
            clipped += 1;
        } else {
            l32 += r * r.sqrt();
        }
        l1 += r.abs();
    }
    DensityNorms {
        l32: l32 * dv,
        l1: l1 * dv,
        clipped,
    }
}

/// `‖E‖` in `L^{3/2}_{x_par}(W^{1,3/2}_{x_⊥})`.
///
/// Per parallel plane the `W^{1,3/2}` norm sums `|E_c|^{3/2}` and the
/// `|∂_j E_c|^{3/2}` of both perpendicular derivatives over all components;
/// raising to `3/2` again for the outer norm makes the plane sums add.
pub fn mixed_norm(e: &VectorField, fs: &FieldSolver) -> f64 {
    let p = |x: f64| x.abs().powf(1.5);
    let mut acc = 0.0;
    for comp in &e.comps {
        let d1 = fs.derivative(comp, 0);
        let d2 = fs.derivative(comp, 1);
        acc += comp
            .values()
            .iter()
            .zip(d1.values())
            .zip(d2.values())
            .map(|((a, b), c)| p(*a) + p(*b) + p(*c))
            .sum::<f64>();
    }
    (acc * e.spec().cell_volume()).powf(2.0 / 3.0)
}

/// `H^{-1}` norm in the parallel direction: weight `(1 + (2πk_par)²)^{-1/2}`.
pub fn epar_weak_norm(e_par: &ScalarField, fs: &FieldSolver) -> f64 {
    fs.apply_multiplier(e_par, |k| 1.0 / (1.0 + k[2] * k[2]).sqrt())
        .integral_sq()
        .sqrt()
}

/// Coefficient of `e^{2πi x_par}` in the perpendicular average of `ρ`.
pub fn par_mode_one(rho: &ScalarField) -> Complex64 {
    let spec = rho.spec();
    let plane = spec.n1 * spec.n2;
    let mut acc = Complex64::new(0.0, 0.0);
    for (i3, slab) in rho.values().chunks(plane).enumerate() {
        let mean: f64 = slab.iter().sum::<f64>();
        let arg = -2.0 * PI * i3 as f64 / spec.n3 as f64;
        acc += Complex64::from_polar(mean, arg);
    }
    acc / spec.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;

    const TWO_PI: f64 = 2.0 * PI;

    fn spec() -> GridSpec {
        GridSpec::new(16, 8, 8).unwrap()
    }

    #[test]
    fn energy_of_single_mode_potential() {
        let s = spec();
        let fs = FieldSolver::new(s);
        let v = ScalarField::from_fn(s, |x| (TWO_PI * x[0]).cos());
        let e = energy_parts(0.0, &v, 0.1, &fs);
        assert!((e.field_l2 - 0.05).abs() < 1e-14);
        assert!((e.field_perp - 0.1 * 4.0 * PI * PI / 2.0).abs() < 1e-12);
        assert!(e.field_par.abs() < 1e-20);
        let z = energy_parts(3.0, &ScalarField::zeros(s), 0.1, &fs);
        assert_eq!(z.total(Some(PoissonModel::Quasineutral)), 3.0);
    }

    #[test]
    fn density_norm_examples() {
        let s = spec();
        let one = density_norms(&ScalarField::from_fn(s, |_| 1.0));
        assert!((one.l32 - 1.0).abs() < 1e-14 && (one.l1 - 1.0).abs() < 1e-14);
        let half = density_norms(&ScalarField::from_fn(s, |x| if x[0] < 0.5 { 2.0 } else { 0.0 }));
        assert!((half.l32 - 2f64.powf(1.5) / 2.0).abs() < 1e-14);
        let neg = density_norms(&ScalarField::from_fn(s, |x| if x[1] < 0.25 { -0.1 } else { 1.0 }));
        assert_eq!(neg.clipped, s.len() / 4);
    }

    #[test]
    fn weak_parallel_norm() {
        let s = spec();
        let fs = FieldSolver::new(s);
        assert_eq!(epar_weak_norm(&ScalarField::zeros(s), &fs), 0.0);
        let e = ScalarField::from_fn(s, |x| (TWO_PI * x[2]).sin());
        let n = epar_weak_norm(&e, &fs);
        let expect = (0.5f64).sqrt() / (1.0 + 4.0 * PI * PI).sqrt();
        assert!((n - expect).abs() < 1e-14);
        assert!((epar_weak_norm(&e.scaled(2.0), &fs) - 2.0 * n).abs() < 1e-14);
    }

    #[test]
    fn mixed_norm_of_a_constant_and_a_mode() {
        let s = spec();
        let fs = FieldSolver::new(s);
        let e = VectorField::uniform(s, [2.0, 0.0, 0.0]);
        assert!((mixed_norm(&e, &fs) - 2.0).abs() < 1e-12);
        // E1 = sin(2πx₁): ∫|sin|^{3/2} + ∫|2π cos|^{3/2}, checked by fine quadrature.
        let s = GridSpec::new(64, 4, 4).unwrap();
        let fs = FieldSolver::new(s);
        let e = VectorField::new([
            ScalarField::from_fn(s, |x| (TWO_PI * x[0]).sin()),
            ScalarField::zeros(s),
            ScalarField::zeros(s),
        ])
        .unwrap();
        let m = 200_000;
        let q: f64 = (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) / m as f64;
                (TWO_PI * x).sin().abs().powf(1.5) + (TWO_PI * (TWO_PI * x).cos()).abs().powf(1.5)
            })
            .sum::<f64>()
            / m as f64;
        // |sin|^{3/2} has kinks, so node quadrature is only algebraically accurate.
        let got = mixed_norm(&e, &fs);
        assert!(
            (got - q.powf(2.0 / 3.0)).abs() < 1e-4 * got,
            "{got} vs {}",
            q.powf(2.0 / 3.0)
        );
    }

    #[test]
    fn parallel_mode_extraction() {
        let s = spec();
        let rho = ScalarField::from_fn(s, |x| 1.0 + 0.3 * (TWO_PI * x[2]).cos() + 0.2 * (TWO_PI * x[0]).cos());
        let c = par_mode_one(&rho);
        assert!((c.re - 0.15).abs() < 1e-15 && c.im.abs() < 1e-15);
    }
}
