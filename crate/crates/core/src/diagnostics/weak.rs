use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::ensemble::{Ensemble, Frame};
use crate::error::{FlrError, Result};
use crate::geometry::{gyro_transform, Convention, Direction, PhasePoint, Vec3};

/// Highest spatial mode per direction.
const MAX_MODE: i32 = 2;
/// Particles per partial sum; fixed so results do not depend on worker count.
const CHUNK: usize = 4096;
const VELOCITY_FACTORS: usize = 11;

/// Polynomial parts of the velocity factors, multiplied by `exp(−|v|²/2)`:
/// `1, v₁, v₂, v₃, v₁v₁, v₁v₂, v₁v₃, v₂v₂, v₂v₃, v₃v₃, |v|²`.
#[inline]
fn velocity_polys(v: Vec3) -> [f64; VELOCITY_FACTORS] {
    let [a, b, c] = v;
    [
        1.0,
        a,
        b,
        c,
        a * a,
        a * b,
        a * c,
        b * b,
        b * c,
        c * c,
        a * a + b * b + c * c,
    ]
}

/// Exponents `(p₁, p₂, p₃)` of each monomial, `None` for `|v|²`.
const MONOMIALS: [Option<[usize; 3]>; VELOCITY_FACTORS] = [
    Some([0, 0, 0]),
    Some([1, 0, 0]),
    Some([0, 1, 0]),
    Some([0, 0, 1]),
    Some([2, 0, 0]),
    Some([1, 1, 0]),
    Some([1, 0, 1]),
    Some([0, 2, 0]),
    Some([0, 1, 1]),
    Some([0, 0, 2]),
    None,
];

/// `∫ v^p e^{−v²} dv` for `p = 0..=4`, by the trapezoidal rule (spectrally
/// accurate for Gaussian integrands).
fn gaussian_moments() -> [f64; 5] {
    let (l, n) = (12.0, 4800);
    let h = 2.0 * l / n as f64;
    let mut m = [0.0; 5];
    for i in 0..=n {
        let v = -l + i as f64 * h;
        let g = (-v * v).exp() * h;
        let mut p = 1.0;
        for mk in &mut m {
            *mk += p * g;
            p *= v;
        }
    }
    m
}

/// Fixed family of smooth test functions `φ(x, v) = T_k(x)·P(v)e^{−|v|²/2}`
/// with `T_k` ranging over `1`, `cos(2πk·x)` and `sin(2πk·x)` for
/// `0 < |k_i| ≤ 2` in a half-space, each normalized by its `L²` norm.
#[derive(Debug, Clone)]
pub struct TestBattery {
    /// One representative of each `±k` pair, zero mode first.
    modes: Vec<[i32; 3]>,
    /// `1/‖P e^{−|v|²/2}‖` per velocity factor.
    inv_vnorm: [f64; VELOCITY_FACTORS],
}

impl Default for TestBattery {
    fn default() -> Self {
        Self::new()
    }
}

impl TestBattery {
    pub fn new() -> Self {
        let mut modes = Vec::new();
        for k1 in -MAX_MODE..=MAX_MODE {
            for k2 in -MAX_MODE..=MAX_MODE {
                for k3 in -MAX_MODE..=MAX_MODE {
                    let k = [k1, k2, k3];
                    let first = k.iter().copied().find(|&c| c != 0);
                    if first.is_none_or(|c| c > 0) {
                        modes.push(k);
                    }
                }
            }
        }
        modes.sort_by_key(|k| k != &[0, 0, 0]);

        let m = gaussian_moments();
        let mut inv_vnorm = [0.0; VELOCITY_FACTORS];
        for (j, mono) in MONOMIALS.iter().enumerate() {
            let sq = match mono {
                Some(p) => p.iter().map(|&e| m[2 * e]).product::<f64>(),
                // ∫(v₁²+v₂²+v₃²)² e^{−|v|²} = 3 m₄m₀² + 6 m₂²m₀.
                None => 3.0 * m[4] * m[0] * m[0] + 6.0 * m[2] * m[2] * m[0],
            };
            inv_vnorm[j] = 1.0 / sq.sqrt();
        }
        TestBattery { modes, inv_vnorm }
    }

    /// Number of spatial parts: the constant plus a cosine and a sine per mode.
    fn spatial_parts(&self) -> usize {
        2 * self.modes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.spatial_parts() * VELOCITY_FACTORS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(mode, is_sine, velocity factor)` of function `idx`.
    fn decode(&self, idx: usize) -> ([i32; 3], bool, usize) {
        let part = idx / VELOCITY_FACTORS;
        let j = idx % VELOCITY_FACTORS;
        if part == 0 {
            ([0, 0, 0], false, j)
        } else {
            let m = (part - 1) / 2 + 1;
            (self.modes[m], (part - 1) % 2 == 1, j)
        }
    }

    /// Direct evaluation of normalized test function `idx` at `(x, v)`.
    pub fn eval(&self, idx: usize, x: Vec3, v: Vec3) -> f64 {
        let (k, sine, j) = self.decode(idx);
        let arg = 2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]);
        let (t, snorm) = if k == [0, 0, 0] {
            (1.0, 1.0)
        } else if sine {
            (arg.sin(), std::f64::consts::FRAC_1_SQRT_2)
        } else {
            (arg.cos(), std::f64::consts::FRAC_1_SQRT_2)
        };
        let g = (-0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp();
        t * velocity_polys(v)[j] * g / snorm * self.inv_vnorm[j]
    }

    /// Normalized pairings `Σ_p w_p φ(x_p, v_p) / ‖φ‖` for every function.
    pub fn pairings(&self, points: &[PhasePoint], weights: &[f64]) -> Vec<f64> {
        let nm = self.modes.len();
        let partials: Vec<Vec<Complex64>> = points
            .par_chunks(CHUNK)
            .zip(weights.par_chunks(CHUNK))
            .map(|(ps, ws)| {
                let mut acc = vec![Complex64::new(0.0, 0.0); nm * VELOCITY_FACTORS];
                for (p, &w) in ps.iter().zip(ws) {
                    let phases = axis_phases(p.x);
                    let g = w * (-0.5 * (p.v[0] * p.v[0] + p.v[1] * p.v[1] + p.v[2] * p.v[2])).exp();
                    let polys = velocity_polys(p.v).map(|q| q * g);
                    for (mi, k) in self.modes.iter().enumerate() {
                        let z = phases[0][(k[0] + MAX_MODE) as usize]
                            * phases[1][(k[1] + MAX_MODE) as usize]
                            * phases[2][(k[2] + MAX_MODE) as usize];
                        let row = &mut acc[mi * VELOCITY_FACTORS..(mi + 1) * VELOCITY_FACTORS];
                        for (a, q) in row.iter_mut().zip(&polys) {
                            *a += z * *q;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![Complex64::new(0.0, 0.0); nm * VELOCITY_FACTORS];
        for part in &partials {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }

        let mut out = Vec::with_capacity(self.len());
        let root2 = std::f64::consts::SQRT_2;
        for (mi, k) in self.modes.iter().enumerate() {
            let row = &total[mi * VELOCITY_FACTORS..(mi + 1) * VELOCITY_FACTORS];
            if *k == [0, 0, 0] {
                out.extend(row.iter().zip(&self.inv_vnorm).map(|(z, n)| z.re * n));
            } else {
                out.extend(row.iter().zip(&self.inv_vnorm).map(|(z, n)| z.re * root2 * n));
                out.extend(row.iter().zip(&self.inv_vnorm).map(|(z, n)| z.im * root2 * n));
            }
        }
        out
    }

    /// Pairings of the gyroaverage: each point `(y, w)` is spread over the
    /// physical points `(y + 𝓡(−τ_j)w, R(−τ_j)w)` at `n_tau` uniform phases.
    pub fn pairings_gyroavg(&self, ens: &Ensemble, n_tau: usize, conv: Convention) -> Vec<f64> {
        let mut acc = vec![0.0; self.len()];
        for j in 0..n_tau {
            let tau = 2.0 * PI * j as f64 / n_tau as f64;
            let pts: Vec<PhasePoint> = ens
                .points()
                .iter()
                .map(|&p| gyro_transform(p, tau, Direction::GyroToPhys, conv))
                .collect();
            for (a, v) in acc.iter_mut().zip(self.pairings(&pts, ens.weights())) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / n_tau as f64).collect()
    }
}

/// `e^{2πi m x_a}` for `m = −2..=2` and each axis.
#[inline]
fn axis_phases(x: Vec3) -> [[Complex64; 5]; 3] {
    x.map(|xa| {
        let e1 = Complex64::from_polar(1.0, 2.0 * PI * xa);
        let e2 = e1 * e1;
        [e2.conj(), e1.conj(), Complex64::new(1.0, 0.0), e1, e2]
    })
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn same_frame(a: &Ensemble, b: &Ensemble) -> Result<()> {
    if a.frame() != b.frame() {
        return Err(FlrError::InvalidArgument(
            "weak error needs both ensembles in the same frame".into(),
        ));
    }
    Ok(())
}

/// Largest normalized pairing gap over the battery.
pub fn weak_error(a: &Ensemble, b: &Ensemble, battery: &TestBattery) -> Result<f64> {
    same_frame(a, b)?;
    Ok(max_gap(
        &battery.pairings(a.points(), a.weights()),
        &battery.pairings(b.points(), b.weights()),
    ))
}

/// Weak error between the gyroaverages of two gyro-frame ensembles.
pub fn weak_error_gyroavg(
    a: &Ensemble,
    b: &Ensemble,
    battery: &TestBattery,
    n_tau: usize,
    conv: Convention,
) -> Result<f64> {
    same_frame(a, b)?;
    if a.frame() != Frame::Gyro {
        return Err(FlrError::InvalidArgument(
            "gyroaveraged pairing needs gyro-frame ensembles".into(),
        ));
    }
    Ok(max_gap(
        &battery.pairings_gyroavg(a, n_tau, conv),
        &battery.pairings_gyroavg(b, n_tau, conv),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wrap3;
    use crate::sampling::halton;

    fn cloud(n: u64) -> Ensemble {
        let pts = (1..=n)
            .map(|i| {
                let h = halton(i, 6);
                PhasePoint::new(
                    [h[0], h[1], h[2]],
                    [3.0 * h[3] - 1.5, 2.0 * h[4] - 1.0, 4.0 * h[5] - 2.0],
                )
            })
            .collect();
        let weights = (0..n).map(|i| 0.5 + (i % 3) as f64).collect();
        Ensemble::new(pts, weights, Frame::Gyro).unwrap()
    }

    fn shifted(e: &Ensemble, d: Vec3) -> Ensemble {
        let pts = e
            .points()
            .iter()
            .map(|p| PhasePoint::new(wrap3([p.x[0] + d[0], p.x[1] + d[1], p.x[2] + d[2]]), p.v))
            .collect();
        Ensemble::new(pts, e.weights().to_vec(), e.frame()).unwrap()
    }

    #[test]
    fn battery_size_and_norms() {
        let b = TestBattery::new();
        assert_eq!(b.len(), 125 * 11);
        let rp = PI.powf(1.5);
        let expect = [1.0, 0.5, 0.5, 0.5, 0.75, 0.25, 0.25, 0.75, 0.25, 0.75, 3.75].map(|c| c * rp);
        for (inv, e) in b.inv_vnorm.iter().zip(expect) {
            assert!((1.0 / (inv * inv) - e).abs() < 1e-13 * e);
        }
    }

    #[test]
    fn fast_pairings_match_direct_sums() {
        let b = TestBattery::new();
        let e = cloud(10);
        let fast = b.pairings(e.points(), e.weights());
        for (idx, f) in fast.iter().enumerate() {
            let direct: f64 = e
                .points()
                .iter()
                .zip(e.weights())
                .map(|(p, w)| w * b.eval(idx, p.x, p.v))
                .sum();
            assert!((f - direct).abs() < 1e-13, "{idx}: {f} vs {direct}");
        }
    }

    #[test]
    fn identical_and_periodic_shift_give_zero() {
        let b = TestBattery::new();
        let e = cloud(10);
        assert_eq!(weak_error(&e, &e, &b).unwrap(), 0.0);
        let wrapped = shifted(&e, [1.0, 0.0, 0.0]);
        assert!(weak_error(&e, &wrapped, &b).unwrap() < 1e-14);
    }

    #[test]
    fn quarter_shift_matches_direct_gap() {
        let b = TestBattery::new();
        let e = cloud(10);
        let s = shifted(&e, [0.25, 0.0, 0.0]);
        let direct = (0..b.len())
            .map(|idx| {
                e.points()
                    .iter()
                    .zip(e.weights())
                    .map(|(p, w)| w * (b.eval(idx, p.x, p.v) - b.eval(idx, [p.x[0] + 0.25, p.x[1], p.x[2]], p.v)))
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max);
        let got = weak_error(&e, &s, &b).unwrap();
        assert!(direct > 0.1);
        assert!((got - direct).abs() < 1e-13);
    }

    #[test]
    fn gyroaveraged_pairing_converges_in_nodes() {
        let b = TestBattery::new();
        let e = cloud(50);
        let conv = Convention::MINUS;
        let a = b.pairings_gyroavg(&e, 64, conv);
        let c = b.pairings_gyroavg(&e, 128, conv);
        assert!(max_gap(&a, &c) < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn pseudometric(d1 in prop::array::uniform3(0.0f64..1.0), d2 in prop::array::uniform3(0.0f64..1.0)) {
                let b = TestBattery::new();
                let a = cloud(40);
                let x = shifted(&a, d1);
                let y = shifted(&a, d2);
                let ax = weak_error(&a, &x, &b).unwrap();
                let xa = weak_error(&x, &a, &b).unwrap();
                prop_assert_eq!(ax, xa);
                let ay = weak_error(&a, &y, &b).unwrap();
                let xy = weak_error(&x, &y, &b).unwrap();
                prop_assert!(ay <= ax + xy + 1e-12);
            }
        }
    }
}
