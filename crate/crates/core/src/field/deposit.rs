//! Cloud-in-cell charge deposition and the matching trilinear interpolation.

use rayon::prelude::*;

use super::grid::{GridSpec, ScalarField, VectorField};
use crate::ensemble::Ensemble;
use crate::error::{FlrError, Result};
use crate::geometry::Vec3;

/// Particles per private accumulation grid. Fixed so that the reduction order
/// (and therefore the result) does not depend on the worker count.
const CHUNK: usize = 8192;

/// Lower node index and upper-node weight along one axis.
#[inline]
fn axis_weights(x: f64, n: usize) -> (usize, usize, f64) {
    let s = x * n as f64;
    let fl = s.floor();
    // x < 1 can still round to s == n.
    let i = (fl as usize) % n;
    (i, (i + 1) % n, s - fl)
}

/// The eight node indices and trilinear weights of a position.
#[inline]
pub(crate) fn stencil(spec: &GridSpec, x: Vec3) -> [(usize, f64); 8] {
    let (a0, a1, fa) = axis_weights(x[0], spec.n1);
    let (b0, b1, fb) = axis_weights(x[1], spec.n2);
    let (c0, c1, fc) = axis_weights(x[2], spec.n3);
    let wa = [(a0, 1.0 - fa), (a1, fa)];
    let wb = [(b0, 1.0 - fb), (b1, fb)];
    let wc = [(c0, 1.0 - fc), (c1, fc)];
    let mut out = [(0usize, 0.0f64); 8];
    let mut k = 0;
    for &(ic, wz) in &wc {
        for &(ib, wy) in &wb {
            for &(ia, wx) in &wa {
                out[k] = (spec.index(ia, ib, ic), wx * wy * wz);
                k += 1;
            }
        }
    }
    out
}

/// Deposits weights at torus positions into a density: node value times cell
/// volume sums to the total weight.
pub fn deposit_positions(spec: GridSpec, positions: &[Vec3], weights: &[f64]) -> Result<ScalarField> {
    if positions.len() != weights.len() {
        return Err(FlrError::InvalidArgument(format!(
            "{} positions but {} weights",
            positions.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
        return Err(FlrError::NonFinite(format!("particle weight {w}")));
    }
    let inv_cell = 1.0 / spec.cell_volume();
    let partials: Vec<Vec<f64>> = positions
        .par_chunks(CHUNK)
        .zip(weights.par_chunks(CHUNK))
        .map(|(xs, ws)| {
            let mut grid = vec![0.0; spec.len()];
            for (x, &w) in xs.iter().zip(ws) {
                for (idx, s) in stencil(&spec, *x) {
                    grid[idx] += w * s;
                }
            }
            grid
        })
        .collect();
    let mut values = vec![0.0; spec.len()];
    for part in &partials {
        for (v, p) in values.iter_mut().zip(part) {
            *v += p;
        }
    }
    for v in &mut values {
        *v *= inv_cell;
    }
    ScalarField::from_values(spec, values)
}

/// Density of an ensemble at its stored positions.
pub fn deposit_charge(ens: &Ensemble, spec: GridSpec) -> Result<ScalarField> {
    let positions: Vec<Vec3> = ens.points().iter().map(|p| p.x).collect();
    deposit_positions(spec, &positions, ens.weights())
}

/// Trilinear interpolation of a scalar field.
#[inline]
pub fn interpolate(field: &ScalarField, x: Vec3) -> f64 {
    let vals = field.values();
    stencil(&field.spec(), x).iter().map(|&(i, w)| w * vals[i]).sum()
}

/// Trilinear interpolation of all three components, same kernel as
/// [`deposit_charge`].
#[inline]
pub fn eval_field(field: &VectorField, x: Vec3) -> Vec3 {
    let st = stencil(&field.spec(), x);
    let mut out = [0.0; 3];
    for (c, comp) in field.comps.iter().enumerate() {
        let vals = comp.values();
        out[c] = st.iter().map(|&(i, w)| w * vals[i]).sum();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Frame;
    use crate::geometry::PhasePoint;

    fn spec() -> GridSpec {
        GridSpec::new(8, 6, 4).unwrap()
    }

    #[test]
    fn node_particle_deposits_on_one_node() {
        let s = spec();
        let rho = deposit_positions(s, &[[2.0 / 8.0, 3.0 / 6.0, 0.25]], &[0.7]).unwrap();
        let target = s.index(2, 3, 1);
        for (i, v) in rho.values().iter().enumerate() {
            if i == target {
                assert!((v - 0.7 / s.cell_volume()).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn cell_center_splits_evenly() {
        let s = spec();
        let x = [1.5 / 8.0, 0.5 / 6.0, 3.5 / 4.0];
        let rho = deposit_positions(s, &[x], &[1.0]).unwrap();
        let expect = 1.0 / (8.0 * s.cell_volume());
        let nonzero: Vec<f64> = rho.values().iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nonzero.len(), 8);
        for v in nonzero {
            assert!((v - expect).abs() < 1e-9 * expect);
        }
        // Upper neighbour along x_par wraps to index 0.
        assert!(rho.values()[s.index(1, 0, 0)] > 0.0);
    }

    #[test]
    fn interpolation_reproduces_nodes_constants_and_midpoints() {
        let s = spec();
        let f = ScalarField::from_fn(s, |x| (x[0] * 7.0).sin() + x[1] * x[2]);
        assert!((interpolate(&f, s.node(s.index(3, 2, 1))) - f.values()[s.index(3, 2, 1)]).abs() < 1e-15);
        let mid = [3.5 / 8.0, 2.0 / 6.0, 0.25];
        let expect = 0.5 * (f.values()[s.index(3, 2, 1)] + f.values()[s.index(4, 2, 1)]);
        assert!((interpolate(&f, mid) - expect).abs() < 1e-15);
        let e = VectorField::uniform(s, [1.5, -2.0, 0.25]);
        let got = eval_field(&e, [0.123, 0.987, 0.5]);
        for (g, w) in got.iter().zip([1.5, -2.0, 0.25]) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_weight_rejected() {
        assert!(deposit_positions(spec(), &[[0.1; 3]], &[f64::INFINITY]).is_err());
    }

    #[test]
    fn deterministic_across_pool_sizes() {
        let s = GridSpec::new(16, 16, 8).unwrap();
        let pts: Vec<PhasePoint> = (0..50_000u64)
            .map(|i| {
                let h = crate::sampling::halton(i + 1, 3);
                PhasePoint::new([h[0], h[1], h[2]], [0.0; 3])
            })
            .collect();
        let ens = Ensemble::uniform(pts, Frame::Physical).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| deposit_charge(&ens, s).unwrap());
        let b = four.install(|| deposit_charge(&ens, s).unwrap());
        assert_eq!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cloud() -> impl Strategy<Value = (Vec<Vec3>, Vec<f64>)> {
            prop::collection::vec((prop::array::uniform3(0.0f64..1.0), 0.01f64..2.0), 1..200)
                .prop_map(|v| v.into_iter().unzip())
        }

        proptest! {
            #[test]
            fn deposit_conserves_weight((xs, ws) in cloud()) {
                let s = spec();
                let rho = deposit_positions(s, &xs, &ws).unwrap();
                let total: f64 = ws.iter().sum();
                let grid: f64 = rho.values().iter().sum::<f64>() * s.cell_volume();
                prop_assert!((grid - total).abs() <= 1e-13 * total);
            }

            #[test]
            fn deposition_adjoint_to_interpolation((xs, ws) in cloud(), seed in 0u64..1000) {
                let s = spec();
                let f = ScalarField::from_fn(s, |x| ((seed as f64) * 0.37 + 5.0 * x[0] - 3.0 * x[1] + 2.0 * x[2]).cos());
                let rho = deposit_positions(s, &xs, &ws).unwrap();
                let lhs: f64 = xs.iter().zip(&ws).map(|(x, w)| w * interpolate(&f, *x)).sum();
                let rhs: f64 = f.values().iter().zip(rho.values()).map(|(a, b)| a * b).sum::<f64>() * s.cell_volume();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }
}
