//! The gyrokinetic limit system in the variables `(y, w)` of `G`:
//!
//! `∂_t G + w_par ∂_par G + ⟨𝓡(τ)𝓔(τ, y + 𝓡(−τ)w)⟩·∇_y G + ⟨R(τ)𝓔(τ, y + 𝓡(−τ)w)⟩·∇_w G = 0`
//!
//! where `⟨·⟩` averages over the gyrophase. In the self-consistent case
//! `𝓔(τ) = (−∇_⊥V(τ), 0)` with `V(τ) − Δ_⊥V(τ) = ∫G(x + 𝓡(τ)v, R(τ)v)dv − 1`;
//! otherwise `𝓔` is a prescribed field.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::config::{Model, RunConfig};
use crate::diagnostics::{density_norms, energy_parts, mixed_norm, par_mode_one, DiagnosticsRecord};
use crate::ensemble::{Ensemble, Frame};
use crate::error::{FlrError, Result};
use crate::external::ExternalField;
use crate::field::{deposit_positions, eval_field, FieldSolver, GridSpec, PoissonModel, ScalarField, VectorField};
use crate::geometry::{rotate_sc, shift_sc, wrap, wrap3, Convention, PhasePoint, Vec3};
use crate::sampling::{init_ensemble, init_gyroaveraged};

/// Uniform quadrature `τ_j = 2πj/N` with weights `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauQuadrature {
    sin_cos: Vec<(f64, f64)>,
}

impl TauQuadrature {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(FlrError::InvalidArgument(format!(
                "need at least 4 phase nodes, got {n}"
            )));
        }
        let sin_cos = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin_cos()).collect();
        Ok(TauQuadrature { sin_cos })
    }

    pub fn len(&self) -> usize {
        self.sin_cos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sin_cos.is_empty()
    }

    pub fn node(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.len() as f64
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

/// Physical positions `y + 𝓡(−τ)w` at which the particles of a gyro-frame
/// ensemble contribute to the phase-`τ` density.
fn shifted_positions(ens: &Ensemble, s: f64, c: f64, conv: Convention) -> Vec<Vec3> {
    let sign = conv.sign();
    ens.points()
        .par_iter()
        .map(|p| {
            let d = shift_sc(-s, c, sign, p.v);
            [wrap(p.x[0] + d[0]), wrap(p.x[1] + d[1]), p.x[2]]
        })
        .collect()
}

/// `∫G(x + 𝓡(τ)v, R(τ)v)dv` on the grid.
///
/// Substituting `u = R(τ)v` (unit Jacobian) places particle `(y, w)` at
/// `y − 𝓡(τ)R(−τ)w = y + 𝓡(−τ)w`.
pub fn gyro_charge(ens: &Ensemble, tau: f64, spec: GridSpec, conv: Convention) -> Result<ScalarField> {
    let (s, c) = tau.sin_cos();
    deposit_positions(spec, &shifted_positions(ens, s, c, conv), ens.weights())
}

/// Per-node densities, potentials and fields `𝓔(τ_j)`.
#[derive(Debug, Clone)]
pub struct TauFieldSet {
    pub quad: TauQuadrature,
    pub rho: Vec<ScalarField>,
    pub potentials: Vec<ScalarField>,
    pub fields: Vec<VectorField>,
}

impl TauFieldSet {
    /// Self-consistent fields of a gyro-frame ensemble, one limit Poisson
    /// solve per node.
    pub fn build(ens: &Ensemble, quad: &TauQuadrature, fs: &FieldSolver, conv: Convention) -> Result<Self> {
        let spec = fs.spec();
        let per_node: Vec<Result<(ScalarField, ScalarField, VectorField)>> = quad
            .sin_cos
            .par_iter()
            .map(|&(s, c)| {
                let rho = deposit_positions(spec, &shifted_positions(ens, s, c, conv), ens.weights())?;
                let v = fs.solve_poisson(&rho, 0.0, PoissonModel::Limit)?;
                let e = fs.field_from_potential(&v, 0.0, PoissonModel::Limit);
                Ok((rho, v, e))
            })
            .collect();
        let mut set = TauFieldSet {
            quad: quad.clone(),
            rho: Vec::with_capacity(quad.len()),
            potentials: Vec::with_capacity(quad.len()),
            fields: Vec::with_capacity(quad.len()),
        };
        for node in per_node {
            let (rho, v, e) = node?;
            set.rho.push(rho);
            set.potentials.push(v);
            set.fields.push(e);
        }
        Ok(set)
    }

    /// The same field `e` at every node, with zero potential and density.
    pub fn uniform(quad: &TauQuadrature, e: VectorField) -> Self {
        let spec = e.spec();
        TauFieldSet {
            quad: quad.clone(),
            rho: vec![ScalarField::zeros(spec); quad.len()],
            potentials: vec![ScalarField::zeros(spec); quad.len()],
            fields: vec![e; quad.len()],
        }
    }
}

/// `(⟨𝓡(τ)E_τ(y + 𝓡(−τ)w)⟩, ⟨R(τ)E_τ(y + 𝓡(−τ)w)⟩)` for a field evaluator
/// `field(j, x)` at node `j`.
#[inline]
pub fn gyroaverage_with(
    quad: &TauQuadrature,
    conv: Convention,
    y: Vec3,
    w: Vec3,
    field: impl Fn(usize, Vec3) -> Vec3,
) -> (Vec3, Vec3) {
    let sign = conv.sign();
    let mut ax = [0.0; 3];
    let mut av = [0.0; 3];
    for (j, &(s, c)) in quad.sin_cos.iter().enumerate() {
        let d = shift_sc(-s, c, sign, w);
        let e = field(j, [wrap(y[0] + d[0]), wrap(y[1] + d[1]), y[2]]);
        let a = shift_sc(s, c, sign, e);
        let b = rotate_sc(s, c, e);
        for k in 0..3 {
            ax[k] += a[k];
            av[k] += b[k];
        }
    }
    let q = quad.weight();
    (ax.map(|a| a * q), av.map(|b| b * q))
}

/// Gyroaveraged position and velocity drifts of a particle at `(y, w)`.
pub fn gyroaverage_force(fields: &TauFieldSet, y: Vec3, w: Vec3, conv: Convention) -> (Vec3, Vec3) {
    gyroaverage_with(&fields.quad, conv, y, w, |j, x| eval_field(&fields.fields[j], x))
}

/// Where the limit field comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitSource {
    SelfConsistent,
    External(ExternalField),
}

/// Initial data of a limit run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitInit {
    /// `G(0) = f₀`.
    Profile,
    /// `G(0)` the gyroaverage of `f₀`.
    GyroAverage,
}

#[derive(Debug, Clone)]
pub struct LimitState {
    pub time: f64,
    /// Gyro-frame ensemble sampling `G`.
    pub ensemble: Ensemble,
    /// Fields at `time` (self-consistent runs only).
    pub fields: Option<TauFieldSet>,
}

#[derive(Debug)]
pub struct LimitSolver {
    spec: GridSpec,
    quad: TauQuadrature,
    source: LimitSource,
    conv: Convention,
    fs: FieldSolver,
}

impl LimitSolver {
    pub fn new(spec: GridSpec, n_tau: usize, source: LimitSource, conv: Convention) -> Result<Self> {
        Ok(LimitSolver {
            spec,
            quad: TauQuadrature::new(n_tau)?,
            source,
            conv,
            fs: FieldSolver::new(spec),
        })
    }

    pub fn quadrature(&self) -> &TauQuadrature {
        &self.quad
    }

    pub fn field_solver(&self) -> &FieldSolver {
        &self.fs
    }

    pub fn convention(&self) -> Convention {
        self.conv
    }

    fn fields_of(&self, ens: &Ensemble) -> Result<Option<TauFieldSet>> {
        match self.source {
            LimitSource::SelfConsistent => Ok(Some(TauFieldSet::build(ens, &self.quad, &self.fs, self.conv)?)),
            LimitSource::External(_) => Ok(None),
        }
    }

    pub fn init(&self, ens: Ensemble) -> Result<LimitState> {
        if ens.frame() != Frame::Gyro {
            return Err(FlrError::InvalidArgument(
                "limit ensembles live in the gyro frame".into(),
            ));
        }
        let fields = self.fields_of(&ens)?;
        Ok(LimitState {
            time: 0.0,
            ensemble: ens,
            fields,
        })
    }

    /// `(dY/dt, dW/dt)` for every particle.
    fn rhs(&self, fields: Option<&TauFieldSet>, points: &[PhasePoint]) -> Vec<(Vec3, Vec3)> {
        points
            .par_iter()
            .map(|p| {
                let (ax, av) = match (&self.source, fields) {
                    (LimitSource::External(e), _) => {
                        gyroaverage_with(&self.quad, self.conv, p.x, p.v, |_, x| e.eval(x))
                    }
                    (LimitSource::SelfConsistent, Some(f)) => gyroaverage_force(f, p.x, p.v, self.conv),
                    (LimitSource::SelfConsistent, None) => unreachable!("self-consistent state without fields"),
                };
                ([ax[0], ax[1], p.v[2] + ax[2]], av)
            })
            .collect()
    }

    /// One explicit midpoint step; the system has no stiffness, so any
    /// `dt > 0` is admissible.
    pub fn step(&self, state: &mut LimitState, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(FlrError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let k1 = self.rhs(state.fields.as_ref(), state.ensemble.points());
        let mut mid = state.ensemble.clone();
        advance(mid.points_mut(), &k1, 0.5 * dt);
        let mid_fields = self.fields_of(&mid)?;
        let k2 = self.rhs(mid_fields.as_ref(), mid.points());
        advance(state.ensemble.points_mut(), &k2, dt);
        state.time += dt;
        state.fields = self.fields_of(&state.ensemble)?;
        Ok(())
    }

    /// ε-free diagnostics averaged over the phase nodes; the parallel field
    /// vanishes identically.
    pub fn record(&self, state: &LimitState) -> Result<DiagnosticsRecord> {
        let owned;
        let fields = match &state.fields {
            Some(f) => f,
            None => {
                let e = match &self.source {
                    LimitSource::External(e) => e.sample(self.spec),
                    LimitSource::SelfConsistent => VectorField::zeros(self.spec),
                };
                let mut set = TauFieldSet::uniform(&self.quad, e);
                for (j, rho) in set.rho.iter_mut().enumerate() {
                    *rho = gyro_charge(&state.ensemble, self.quad.node(j), self.spec, self.conv)?;
                }
                owned = set;
                &owned
            }
        };
        let q = self.quad.weight();
        let kinetic = state.ensemble.kinetic();
        let (mut l2, mut perp, mut l32, mut mixed, mut clipped) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut mode = num_complex::Complex64::new(0.0, 0.0);
        for j in 0..self.quad.len() {
            let parts = energy_parts(0.0, &fields.potentials[j], 1.0, &self.fs);
            l2 += parts.field_l2 * q;
            perp += parts.field_perp * q;
            let dn = density_norms(&fields.rho[j]);
            l32 += dn.l32 * q;
            clipped += dn.clipped as f64 * q;
            mixed += mixed_norm(&fields.fields[j], &self.fs) * q;
            mode += par_mode_one(&fields.rho[j]) * q;
        }
        let mut extra = BTreeMap::new();
        extra.insert("clipped_cells".to_string(), clipped);
        extra.insert("rho_par_mode1_re".to_string(), mode.re);
        extra.insert("rho_par_mode1_im".to_string(), mode.im);
        Ok(DiagnosticsRecord {
            t: state.time,
            kinetic,
            field_l2: l2,
            field_perp: perp,
            field_par: 0.0,
            energy_total: kinetic + l2 + perp,
            mass: state.ensemble.total_weight(),
            rho_l32: l32,
            e_mixed_norm: mixed,
            epar_weak: 0.0,
            extra,
        })
    }
}

fn advance(points: &mut [PhasePoint], rate: &[(Vec3, Vec3)], h: f64) {
    points.par_iter_mut().zip(rate).for_each(|(p, (dy, dw))| {
        let x = [p.x[0] + h * dy[0], p.x[1] + h * dy[1], p.x[2] + h * dy[2]];
        let v = [p.v[0] + h * dw[0], p.v[1] + h * dw[1], p.v[2] + h * dw[2]];
        *p = PhasePoint { x: wrap3(x), v };
    });
}

#[derive(Debug, Clone)]
pub struct LimitRun {
    pub state: LimitState,
    pub records: Vec<DiagnosticsRecord>,
}

/// Runs a limit model. `observe` sees the state after every step and at
/// step 0.
pub fn run_limit(
    cfg: &RunConfig,
    conv: Convention,
    init: LimitInit,
    mut observe: impl FnMut(usize, &LimitSolver, &LimitState) -> Result<()>,
) -> Result<LimitRun> {
    cfg.validate()?;
    let source = match cfg.model {
        Model::LimitSelf => LimitSource::SelfConsistent,
        Model::LimitExternal => LimitSource::External(cfg.external_field.clone()),
        _ => return Err(FlrError::config("model", "not a limit model")),
    };
    let solver = LimitSolver::new(cfg.grid, cfg.n_tau, source, conv)?;
    let ens = match init {
        LimitInit::Profile => init_ensemble(&cfg.loading())?.to_frame(Frame::Gyro, 0.0, conv),
        LimitInit::GyroAverage => init_gyroaveraged(&cfg.loading(), conv)?,
    };
    let mut state = solver.init(ens)?;
    let dt = cfg.dt();
    let steps = cfg.steps();
    let mut records = vec![solver.record(&state)?];
    observe(0, &solver, &state)?;
    for step in 1..=steps {
        solver.step(&mut state, dt)?;
        state.time = step as f64 * dt;
        if step % cfg.diag_stride == 0 || step == steps {
            let rec = solver.record(&state)?;
            if !rec.is_finite() {
                return Err(FlrError::NonFiniteDiagnostics { step });
            }
            records.push(rec);
        }
        observe(step, &solver, &state)?;
    }
    Ok(LimitRun { state, records })
}
