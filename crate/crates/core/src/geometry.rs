//! Gyration geometry: the rotation `R(τ)`, the Larmor shift matrix `𝓡(τ)`,
//! the exact fast characteristic flow, and the change of variables between
//! physical and gyro (filtered) coordinates.
//!
//! Coordinates are `x = (x1, x2, x_par)` on the unit torus and `v` in R³; the
//! magnetic field points along the third axis.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{FlrError, Result};
use crate::sampling::radical_inverse;

pub type Vec3 = [f64; 3];

/// Reduce a torus coordinate to `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    // x - floor(x) rounds up to 1.0 for tiny negative x.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
pub fn wrap3(x: Vec3) -> Vec3 {
    [wrap(x[0]), wrap(x[1]), wrap(x[2])]
}

/// Signed shortest difference `a - b` between two torus coordinates.
#[inline]
pub fn torus_delta(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - d.round()
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn mul(&self, other: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn max_abs_diff(&self, other: &Mat3) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        d
    }
}

/// A point of phase space `T² × T × R³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: Vec3,
    pub v: Vec3,
}

impl PhasePoint {
    /// Builds a point, reducing the position onto the torus.
    pub fn new(x: Vec3, v: Vec3) -> Self {
        PhasePoint { x: wrap3(x), v }
    }

    /// Largest coordinate discrepancy, positions compared on the torus.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            d = d.max(torus_delta(self.x[i], other.x[i]).abs());
            d = d.max((self.v[i] - other.v[i]).abs());
        }
        d
    }
}

/// Sign applied to the perpendicular block of `𝓡`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convention {
    sign: f64,
}

impl Convention {
    pub const PLUS: Convention = Convention { sign: 1.0 };
    pub const MINUS: Convention = Convention { sign: -1.0 };

    pub fn with_sign(sign: f64) -> Result<Self> {
        if sign == 1.0 || sign == -1.0 {
            Ok(Convention { sign })
        } else {
            Err(FlrError::InvalidArgument(format!(
                "convention sign must be +1 or -1, got {sign}"
            )))
        }
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    /// The process-wide convention, fixed on first use by
    /// [`resolve_convention`].
    pub fn startup() -> Convention {
        static RESOLVED: OnceLock<Convention> = OnceLock::new();
        *RESOLVED.get_or_init(|| {
            let report = resolve_convention();
            if !report.unique {
                log::warn!(
                    "Larmor shift sign is ambiguous (residuals +1: {:e}, -1: {:e}); using {}",
                    report.residual_plus,
                    report.residual_minus,
                    report.sign
                );
            }
            Convention { sign: report.sign }
        })
    }
}

/// `R(τ)`: rotation by `τ` about the field axis.
pub fn rot(tau: f64) -> Mat3 {
    let (s, c) = tau.sin_cos();
    Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

/// `𝓡(τ)`: the Larmor shift matrix with perpendicular block
/// `sign · [[sin τ, cos τ − 1], [1 − cos τ, sin τ]]` and vanishing third row
/// and column.
pub fn larmor_shift(tau: f64, conv: Convention) -> Mat3 {
    let (s, c) = tau.sin_cos();
    let k = conv.sign;
    Mat3([
        [k * s, k * (c - 1.0), 0.0],
        [k * (1.0 - c), k * s, 0.0],
        [0.0, 0.0, 0.0],
    ])
}

/// `R(τ) v` without building the matrix.
#[inline]
pub fn rotate(tau: f64, v: Vec3) -> Vec3 {
    let (s, c) = tau.sin_cos();
    rotate_sc(s, c, v)
}

#[inline]
pub(crate) fn rotate_sc(s: f64, c: f64, v: Vec3) -> Vec3 {
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// `𝓡(τ) v` without building the matrix.
#[inline]
pub fn shift(tau: f64, conv: Convention, v: Vec3) -> Vec3 {
    let (s, c) = tau.sin_cos();
    shift_sc(s, c, conv.sign, v)
}

#[inline]
pub(crate) fn shift_sc(s: f64, c: f64, sign: f64, v: Vec3) -> Vec3 {
    [
        sign * (s * v[0] + (c - 1.0) * v[1]),
        sign * ((1.0 - c) * v[0] + s * v[1]),
        0.0,
    ]
}

/// Perpendicular displacement accumulated by the fast flow over phase `τ`,
/// `∫₀^τ R(−σ) v_⊥ dσ`.
#[inline]
pub fn gyration_displacement(tau: f64, v: Vec3) -> Vec3 {
    let (s, c) = tau.sin_cos();
    [s * v[0] + (1.0 - c) * v[1], (c - 1.0) * v[0] + s * v[1], 0.0]
}

/// Exact solution of the fast characteristics `dV/dτ = V ∧ e_z`,
/// `dX/dτ = V_⊥` after phase `τ`.
pub fn fast_flow(p: PhasePoint, tau: f64) -> PhasePoint {
    let d = gyration_displacement(tau, p.v);
    PhasePoint::new([p.x[0] + d[0], p.x[1] + d[1], p.x[2]], rotate(-tau, p.v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    PhysToGyro,
    GyroToPhys,
}

/// Change of variables at gyrophase `θ`:
/// physical `(x, v) = (y + 𝓡(−θ)w, R(−θ)w)` for gyro coordinates `(y, w)`.
pub fn gyro_transform(p: PhasePoint, theta: f64, dir: Direction, conv: Convention) -> PhasePoint {
    match dir {
        Direction::PhysToGyro => {
            let w = rotate(theta, p.v);
            let d = shift(-theta, conv, w);
            PhasePoint::new([p.x[0] - d[0], p.x[1] - d[1], p.x[2]], w)
        }
        Direction::GyroToPhys => {
            let d = shift(-theta, conv, p.v);
            PhasePoint::new([p.x[0] + d[0], p.x[1] + d[1], p.x[2]], rotate(-theta, p.v))
        }
    }
}

/// Integrates the fast characteristics with classical RK4 (no closed form),
/// step at most `h`.
pub fn integrate_fast_characteristics(p: PhasePoint, tau: f64, h: f64) -> PhasePoint {
    let steps = ((tau.abs() / h).ceil() as usize).max(1);
    let dt = tau / steps as f64;
    // State: unreduced perpendicular position and velocity.
    let rhs = |s: [f64; 5]| -> [f64; 5] { [s[2], s[3], s[3], -s[2], 0.0] };
    let mut s = [p.x[0], p.x[1], p.v[0], p.v[1], 0.0];
    for _ in 0..steps {
        let k1 = rhs(s);
        let k2 = rhs(axpy(&s, 0.5 * dt, &k1));
        let k3 = rhs(axpy(&s, 0.5 * dt, &k2));
        let k4 = rhs(axpy(&s, dt, &k3));
        for i in 0..5 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    PhasePoint::new([s[0], s[1], p.x[2]], [s[2], s[3], p.v[2]])
}

fn axpy(s: &[f64; 5], a: f64, k: &[f64; 5]) -> [f64; 5] {
    let mut out = *s;
    for i in 0..5 {
        out[i] += a * k[i];
    }
    out
}

/// Outcome of the sign determination for `𝓡`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConventionReport {
    pub sign: f64,
    /// Max filter-invariance residual with sign +1.
    pub residual_plus: f64,
    /// Max filter-invariance residual with sign −1.
    pub residual_minus: f64,
    /// Exactly one sign satisfies the invariance to `CONVENTION_TOLERANCE`.
    pub unique: bool,
}

pub const CONVENTION_TOLERANCE: f64 = 1e-12;
pub const CONVENTION_SAMPLES: usize = 100;

/// Deterministic sample set for the invariance check: positions on the
/// torus, velocities in `[-3, 3]³`, phases in `[-2π, 2π]`.
pub fn invariance_samples(n: usize) -> Vec<(PhasePoint, f64)> {
    (1..=n as u64)
        .map(|i| {
            let u = |d: usize| radical_inverse(i, crate::sampling::PRIMES[d]);
            let x = [u(0), u(1), u(2)];
            let v = [6.0 * u(3) - 3.0, 6.0 * u(4) - 3.0, 6.0 * u(5) - 3.0];
            let theta = 4.0 * PI * u(6) - 2.0 * PI;
            (PhasePoint::new(x, v), theta)
        })
        .collect()
}

/// Max over samples of `|phys_to_gyro(flow(p, θ), θ) − p|` where the flow is
/// the RK4 oracle.
pub fn invariance_residual(conv: Convention, samples: &[(PhasePoint, f64)]) -> f64 {
    samples
        .iter()
        .map(|&(p, theta)| {
            let moved = integrate_fast_characteristics(p, theta, 1e-3);
            gyro_transform(moved, theta, Direction::PhysToGyro, conv).distance(&p)
        })
        .fold(0.0, f64::max)
}

/// Picks the sign of `𝓡` for which gyro coordinates are invariant along the
/// fast characteristics.
pub fn resolve_convention() -> ConventionReport {
    let samples = invariance_samples(CONVENTION_SAMPLES);
    let residual_plus = invariance_residual(Convention::PLUS, &samples);
    let residual_minus = invariance_residual(Convention::MINUS, &samples);
    let plus_ok = residual_plus <= CONVENTION_TOLERANCE;
    let minus_ok = residual_minus <= CONVENTION_TOLERANCE;
    let sign = if residual_minus <= residual_plus { -1.0 } else { 1.0 };
    ConventionReport {
        sign,
        residual_plus,
        residual_minus,
        unique: plus_ok != minus_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        a.max_abs_diff(b) <= tol
    }

    #[test]
    fn rotation_examples() {
        assert!(close(&rot(0.0), &Mat3::IDENTITY, 0.0));
        let quarter = Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(close(&rot(PI / 2.0), &quarter, 1e-16));
        assert!(close(&rot(2.0 * PI), &Mat3::IDENTITY, 1e-15));
    }

    #[test]
    fn larmor_shift_examples() {
        assert!(close(&larmor_shift(0.0, Convention::PLUS), &Mat3::ZERO, 0.0));
        assert!(close(&larmor_shift(0.0, Convention::MINUS), &Mat3::ZERO, 0.0));
        let half = larmor_shift(PI, Convention::PLUS);
        let expected = Mat3([[0.0, -2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!(close(&half, &expected, 1e-15));
    }

    #[test]
    fn shift_matches_printed_rotation_combination() {
        // The explicit block equals -R(-π/2) + R(-π/2 + τ).
        for &tau in &[0.3, 1.7, -2.2, 5.0] {
            let a = rot(-PI / 2.0);
            let b = rot(-PI / 2.0 + tau);
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = b.0[i][j] - a.0[i][j];
                }
            }
            assert!(close(&larmor_shift(tau, Convention::PLUS), &Mat3(m), 1e-15));
        }
    }

    #[test]
    fn fast_flow_quarter_turn() {
        let p = PhasePoint::new([0.0; 3], [1.0, 0.0, 0.0]);
        let q = fast_flow(p, PI / 2.0);
        let expected = PhasePoint::new([1.0, -1.0, 0.0], [0.0, -1.0, 0.0]);
        assert!(q.distance(&expected) < 1e-15);
        let oracle = integrate_fast_characteristics(p, PI / 2.0, 1e-4);
        assert!(q.distance(&oracle) < 1e-12);
    }

    #[test]
    fn fast_flow_full_period_and_parallel_velocity() {
        let p = PhasePoint::new([0.2, 0.7, 0.4], [0.3, -1.1, 0.8]);
        assert!(fast_flow(p, 2.0 * PI).distance(&p) < 1e-14);
        for &tau in &[0.1, 1.0, -4.0, 30.0] {
            assert_eq!(fast_flow(p, tau).v[2], p.v[2]);
            assert_eq!(fast_flow(p, tau).x[2], p.x[2]);
        }
    }

    #[test]
    fn gyro_transform_identity_at_zero_phase() {
        let p = PhasePoint::new([0.1, 0.9, 0.5], [1.0, 2.0, -0.5]);
        for conv in [Convention::PLUS, Convention::MINUS] {
            for dir in [Direction::PhysToGyro, Direction::GyroToPhys] {
                assert_eq!(gyro_transform(p, 0.0, dir, conv), p);
            }
        }
    }

    #[test]
    fn gyro_transform_round_trip() {
        let p = PhasePoint::new([0.1, 0.9, 0.5], [1.0, 2.0, -0.5]);
        let g = gyro_transform(p, 1.3, Direction::PhysToGyro, Convention::MINUS);
        let back = gyro_transform(g, 1.3, Direction::GyroToPhys, Convention::MINUS);
        assert!(back.distance(&p) <= 1e-14);
    }

    #[test]
    fn convention_is_unique_and_negative() {
        let report = resolve_convention();
        assert!(report.unique, "{report:?}");
        assert_eq!(report.sign, -1.0);
        assert!(report.residual_minus <= CONVENTION_TOLERANCE);
        assert!(report.residual_plus > 0.1);
        assert_eq!(Convention::startup().sign(), -1.0);
    }

    #[test]
    fn transform_has_unit_jacobian() {
        // Central differences of an affine map are exact up to rounding.
        let conv = Convention::MINUS;
        for (p, theta) in invariance_samples(10) {
            for dir in [Direction::PhysToGyro, Direction::GyroToPhys] {
                let h = 1e-4;
                let mut jac = [[0.0; 6]; 6];
                for j in 0..6 {
                    let mut plus = p;
                    let mut minus = p;
                    if j < 3 {
                        plus.x[j] += h;
                        minus.x[j] -= h;
                    } else {
                        plus.v[j - 3] += h;
                        minus.v[j - 3] -= h;
                    }
                    let a = gyro_transform(plus, theta, dir, conv);
                    let b = gyro_transform(minus, theta, dir, conv);
                    for i in 0..3 {
                        jac[i][j] = torus_delta(a.x[i], b.x[i]) / (2.0 * h);
                        jac[i + 3][j] = (a.v[i] - b.v[i]) / (2.0 * h);
                    }
                }
                let det = det6(jac);
                assert!((det - 1.0).abs() < 1e-9, "det = {det}");
            }
        }
    }

    fn det6(mut a: [[f64; 6]; 6]) -> f64 {
        let mut det = 1.0;
        for col in 0..6 {
            let pivot = (col..6)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            if pivot != col {
                a.swap(pivot, col);
                det = -det;
            }
            det *= a[col][col];
            for row in col + 1..6 {
                let f = a[row][col] / a[col][col];
                for k in col..6 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
        det
    }

    #[test]
    fn shift_composition_is_a_cocycle() {
        // 𝓡(σ + ρ) = 𝓡(ρ) + 𝓡(σ) R(ρ) for the resolved convention.
        let conv = Convention::MINUS;
        for &(s, r) in &[(0.4, 1.1), (-2.0, 0.7), (3.0, 3.0)] {
            let lhs = larmor_shift(s + r, conv);
            let b = larmor_shift(s, conv).mul(&rot(r));
            let a = larmor_shift(r, conv);
            let mut sum = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    sum[i][j] = a.0[i][j] + b.0[i][j];
                }
            }
            assert!(close(&lhs, &Mat3(sum), 1e-14));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rotation_is_orthogonal_and_inverse(tau in -20.0f64..20.0) {
                let r = rot(tau);
                prop_assert!(r.mul(&rot(-tau)).max_abs_diff(&Mat3::IDENTITY) <= 1e-14);
                prop_assert!(r.mul(&r.transpose()).max_abs_diff(&Mat3::IDENTITY) <= 1e-14);
                prop_assert!((r.det() - 1.0).abs() <= 1e-14);
                prop_assert!(rot(tau + 2.0 * PI).max_abs_diff(&r) <= 1e-13);
            }

            #[test]
            fn shift_periodic_with_zero_third_row(tau in -20.0f64..20.0, minus in any::<bool>()) {
                let conv = if minus { Convention::MINUS } else { Convention::PLUS };
                let m = larmor_shift(tau, conv);
                prop_assert!(larmor_shift(tau + 2.0 * PI, conv).max_abs_diff(&m) <= 1e-13);
                for k in 0..3 {
                    prop_assert_eq!(m.0[2][k], 0.0);
                    prop_assert_eq!(m.0[k][2], 0.0);
                }
            }

            #[test]
            fn fast_flow_preserves_speeds(
                x in prop::array::uniform3(0.0f64..1.0),
                v in prop::array::uniform3(-5.0f64..5.0),
                tau in -50.0f64..50.0,
            ) {
                let p = PhasePoint::new(x, v);
                let q = fast_flow(p, tau);
                let perp = |v: Vec3| (v[0] * v[0] + v[1] * v[1]).sqrt();
                prop_assert!((perp(q.v) - perp(p.v)).abs() <= 1e-14 * (1.0 + perp(p.v)));
                prop_assert_eq!(q.v[2], p.v[2]);
                for c in q.x { prop_assert!((0.0..1.0).contains(&c)); }
            }

            #[test]
            fn gyro_transform_round_trips(
                x in prop::array::uniform3(0.0f64..1.0),
                v in prop::array::uniform3(-5.0f64..5.0),
                theta in -50.0f64..50.0,
            ) {
                let p = PhasePoint::new(x, v);
                let conv = Convention::MINUS;
                let g = gyro_transform(p, theta, Direction::PhysToGyro, conv);
                let back = gyro_transform(g, theta, Direction::GyroToPhys, conv);
                prop_assert!(back.distance(&p) <= 1e-13);
            }

            #[test]
            fn closed_form_flow_keeps_gyro_coordinates(
                x in prop::array::uniform3(0.0f64..1.0),
                v in prop::array::uniform3(-5.0f64..5.0),
                theta in -30.0f64..30.0,
            ) {
                let p = PhasePoint::new(x, v);
                let conv = Convention::MINUS;
                let g = gyro_transform(fast_flow(p, theta), theta, Direction::PhysToGyro, conv);
                prop_assert!(g.distance(&p) <= 1e-12);
            }
        }
    }
}
