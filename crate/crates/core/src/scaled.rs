//! Particle-in-cell integration of the ε-scaled Vlasov equation
//!
//! `∂_t f + v_par ∂_par f + (v_⊥/ε)·∇_⊥f + (E + v∧e_z/ε)·∇_v f = 0`
//!
//! either in physical coordinates (Strang splitting around the exact fast
//! flow) or in filtered coordinates co-rotating with the gyration.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::{Model, Pusher, RunConfig};
use crate::diagnostics::{density_norms, energy_parts, epar_weak_norm, mixed_norm, par_mode_one, DiagnosticsRecord};
use crate::ensemble::{Ensemble, Frame};
use crate::error::{FlrError, Result};
use crate::external::ExternalField;
use crate::field::{deposit_positions, eval_field, FieldSolver, GridSpec, PoissonModel, ScalarField, VectorField};
use crate::geometry::{rotate_sc, shift_sc, wrap, wrap3, Convention, PhasePoint, Vec3};
use crate::sampling::init_ensemble;

/// Relative slack on the `dt ≤ ε/4` precondition.
const DT_SLACK: f64 = 1e-9;

/// Where the electric field comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    SelfConsistent(PoissonModel),
    External(ExternalField),
}

/// Particles and the fields they generate at `time`.
#[derive(Debug, Clone)]
pub struct ScaledState {
    pub time: f64,
    /// Physical frame for the direct pusher, gyro frame at phase `time/ε`
    /// for the filtered pusher.
    pub ensemble: Ensemble,
    pub rho: ScalarField,
    pub potential: ScalarField,
    pub field: VectorField,
    /// Steps whose guiding-centre displacement exceeded one cell.
    pub cfl_warnings: usize,
}

/// Time integrator for one `ε`.
#[derive(Debug)]
pub struct ScaledSolver {
    spec: GridSpec,
    eps: f64,
    source: FieldSource,
    pusher: Pusher,
    conv: Convention,
    fs: FieldSolver,
    /// Node samples of an external field, for diagnostics.
    sampled: Option<VectorField>,
}

/// Exact field-free update over `dt` in physical coordinates: velocities turn
/// by `dt/ε`, perpendicular positions follow the Larmor circle, parallel
/// positions stream.
pub fn fast_step(ens: &mut Ensemble, eps: f64, dt: f64) {
    let (s, c) = (dt / eps).sin_cos();
    ens.points_mut().par_iter_mut().for_each(|p| {
        let v = p.v;
        let x = [
            p.x[0] + s * v[0] + (1.0 - c) * v[1],
            p.x[1] + (c - 1.0) * v[0] + s * v[1],
            p.x[2] + v[2] * dt,
        ];
        *p = PhasePoint {
            x: wrap3(x),
            v: rotate_sc(-s, c, v),
        };
    });
}

impl ScaledSolver {
    pub fn new(spec: GridSpec, eps: f64, source: FieldSource, pusher: Pusher, conv: Convention) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(FlrError::InvalidArgument(format!(
                "epsilon must lie in (0, 1], got {eps}"
            )));
        }
        if source == FieldSource::SelfConsistent(PoissonModel::Limit) {
            return Err(FlrError::InvalidArgument(
                "the limit Poisson model has no scaled dynamics".into(),
            ));
        }
        let sampled = match &source {
            FieldSource::External(e) => Some(e.sample(spec)),
            FieldSource::SelfConsistent(_) => None,
        };
        Ok(ScaledSolver {
            spec,
            eps,
            source,
            pusher,
            conv,
            fs: FieldSolver::new(spec),
            sampled,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn field_solver(&self) -> &FieldSolver {
        &self.fs
    }

    /// Gyrophase `t/ε`.
    pub fn phase(&self, t: f64) -> f64 {
        t / self.eps
    }

    /// Starts from a physical-frame ensemble at `t = 0`.
    pub fn init(&self, ens: Ensemble) -> Result<ScaledState> {
        if ens.frame() != Frame::Physical {
            return Err(FlrError::InvalidArgument(
                "initial ensemble must be in the physical frame".into(),
            ));
        }
        let ensemble = match self.pusher {
            Pusher::Direct => ens,
            // Gyro coordinates coincide with physical ones at phase 0.
            Pusher::Filtered => ens.to_frame(Frame::Gyro, 0.0, self.conv),
        };
        let mut state = ScaledState {
            time: 0.0,
            ensemble,
            rho: ScalarField::zeros(self.spec),
            potential: ScalarField::zeros(self.spec),
            field: VectorField::zeros(self.spec),
            cfl_warnings: 0,
        };
        self.refresh(&mut state)?;
        Ok(state)
    }

    /// Physical positions of the ensemble at `time`.
    fn positions(&self, ens: &Ensemble, time: f64) -> Vec<Vec3> {
        match ens.frame() {
            Frame::Physical => ens.points().iter().map(|p| p.x).collect(),
            Frame::Gyro => {
                let (s, c) = (-self.phase(time)).sin_cos();
                let sign = self.conv.sign();
                ens.points()
                    .par_iter()
                    .map(|p| {
                        let d = shift_sc(s, c, sign, p.v);
                        [wrap(p.x[0] + d[0]), wrap(p.x[1] + d[1]), p.x[2]]
                    })
                    .collect()
            }
        }
    }

    /// The ensemble in physical coordinates at `state.time`.
    pub fn physical(&self, state: &ScaledState) -> Ensemble {
        state
            .ensemble
            .to_frame(Frame::Physical, self.phase(state.time), self.conv)
    }

    /// The ensemble in gyro coordinates at `state.time`.
    pub fn filtered(&self, state: &ScaledState) -> Ensemble {
        state.ensemble.to_frame(Frame::Gyro, self.phase(state.time), self.conv)
    }

    fn solve_fields(&self, ens: &Ensemble, time: f64) -> Result<(ScalarField, ScalarField, VectorField)> {
        let rho = deposit_positions(self.spec, &self.positions(ens, time), ens.weights())?;
        match &self.source {
            FieldSource::SelfConsistent(model) => {
                let v = self.fs.solve_poisson(&rho, self.eps, *model)?;
                let e = self.fs.field_from_potential(&v, self.eps, *model);
                Ok((rho, v, e))
            }
            FieldSource::External(_) => {
                let e = self.sampled.clone().expect("external field is sampled at construction");
                Ok((rho, ScalarField::zeros(self.spec), e))
            }
        }
    }

    /// Recomputes density, potential and field from the ensemble.
    pub fn refresh(&self, state: &mut ScaledState) -> Result<()> {
        let (rho, v, e) = self.solve_fields(&state.ensemble, state.time)?;
        state.rho = rho;
        state.potential = v;
        state.field = e;
        Ok(())
    }

    #[inline]
    fn force(&self, grid: &VectorField, x: Vec3) -> Vec3 {
        match &self.source {
            FieldSource::External(e) => e.eval(x),
            FieldSource::SelfConsistent(_) => eval_field(grid, x),
        }
    }

    /// Whether a step of `dt` moves a guiding centre by more than one cell.
    ///
    /// In filtered coordinates the position moves at `W_par e_z + 𝓡(θ)E`,
    /// and `|𝓡(θ)E| ≤ 2|E_⊥|`; the gyration itself is exact and exempt.
    fn cfl_exceeded(&self, ens: &Ensemble, field: &VectorField, dt: f64) -> bool {
        let vpar = ens.points().iter().fold(0.0f64, |m, p| m.max(p.v[2].abs()));
        let eperp = field.max_abs_perp();
        let n_perp = self.spec.n1.max(self.spec.n2) as f64;
        vpar * dt * self.spec.n3 as f64 > 1.0 || 2.0 * eperp * dt * n_perp > 1.0
    }

    /// Advances by one step of the configured pusher.
    pub fn step(&self, state: &mut ScaledState, dt: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.eps / 4.0 * (1.0 + DT_SLACK) {
            return Err(FlrError::InvalidArgument(format!(
                "dt = {dt} must lie in (0, epsilon/4 = {}]",
                self.eps / 4.0
            )));
        }
        match self.pusher {
            Pusher::Direct => self.step_scaled(state, dt),
            Pusher::Filtered => self.step_filtered(state, dt),
        }
    }

    /// Strang splitting: half fast flow, field solve, kick, half fast flow.
    fn step_scaled(&self, state: &mut ScaledState, dt: f64) -> Result<()> {
        if state.ensemble.frame() != Frame::Physical {
            return Err(FlrError::InvalidArgument(
                "direct pusher needs a physical-frame ensemble".into(),
            ));
        }
        fast_step(&mut state.ensemble, self.eps, 0.5 * dt);
        let (_, _, e) = self.solve_fields(&state.ensemble, state.time + 0.5 * dt)?;
        if self.cfl_exceeded(&state.ensemble, &e, dt) {
            state.cfl_warnings += 1;
        }
        state.ensemble.points_mut().par_iter_mut().for_each(|p| {
            let f = self.force(&e, p.x);
            for k in 0..3 {
                p.v[k] += dt * f[k];
            }
        });
        fast_step(&mut state.ensemble, self.eps, 0.5 * dt);
        state.time += dt;
        self.refresh(state)
    }

    /// Right-hand side of the filtered characteristics at phase `θ`:
    /// `dY/dt = W_par e_z + 𝓡(θ)E(X)`, `dW/dt = R(θ)E(X)`, `X = Y + 𝓡(−θ)W`.
    fn filtered_rhs(&self, grid: &VectorField, theta: f64, points: &[PhasePoint]) -> Vec<(Vec3, Vec3)> {
        let (s, c) = theta.sin_cos();
        let sign = self.conv.sign();
        points
            .par_iter()
            .map(|p| {
                let d = shift_sc(-s, c, sign, p.v);
                let x = [wrap(p.x[0] + d[0]), wrap(p.x[1] + d[1]), p.x[2]];
                let e = self.force(grid, x);
                let a = shift_sc(s, c, sign, e);
                ([a[0], a[1], p.v[2] + a[2]], rotate_sc(s, c, e))
            })
            .collect()
    }

    /// Explicit midpoint rule on the filtered characteristics.
    fn step_filtered(&self, state: &mut ScaledState, dt: f64) -> Result<()> {
        if state.ensemble.frame() != Frame::Gyro {
            return Err(FlrError::InvalidArgument(
                "filtered pusher needs a gyro-frame ensemble".into(),
            ));
        }
        let t0 = state.time;
        let k1 = self.filtered_rhs(&state.field, self.phase(t0), state.ensemble.points());
        let mut mid = state.ensemble.clone();
        advance(mid.points_mut(), &k1, 0.5 * dt);

        let tm = t0 + 0.5 * dt;
        let (_, _, e) = self.solve_fields(&mid, tm)?;
        if self.cfl_exceeded(&mid, &e, dt) {
            state.cfl_warnings += 1;
        }
        let k2 = self.filtered_rhs(&e, self.phase(tm), mid.points());
        advance(state.ensemble.points_mut(), &k2, dt);
        state.time += dt;
        self.refresh(state)
    }

    /// Diagnostics of the current state.
    pub fn record(&self, state: &ScaledState) -> DiagnosticsRecord {
        let model = match &self.source {
            FieldSource::SelfConsistent(m) => Some(*m),
            FieldSource::External(_) => None,
        };
        let parts = energy_parts(state.ensemble.kinetic(), &state.potential, self.eps, &self.fs);
        let dn = density_norms(&state.rho);
        let mode = par_mode_one(&state.rho);
        let mut extra = BTreeMap::new();
        extra.insert("clipped_cells".to_string(), dn.clipped as f64);
        extra.insert("cfl_warnings".to_string(), state.cfl_warnings as f64);
        extra.insert("rho_par_mode1_re".to_string(), mode.re);
        extra.insert("rho_par_mode1_im".to_string(), mode.im);
        DiagnosticsRecord {
            t: state.time,
            kinetic: parts.kinetic,
            field_l2: parts.field_l2,
            field_perp: parts.field_perp,
            field_par: parts.field_par,
            energy_total: parts.total(model),
            mass: state.ensemble.total_weight(),
            rho_l32: dn.l32,
            e_mixed_norm: mixed_norm(&state.field, &self.fs),
            epar_weak: epar_weak_norm(&state.field.comps[2], &self.fs),
            extra,
        }
    }
}

fn advance(points: &mut [PhasePoint], rate: &[(Vec3, Vec3)], h: f64) {
    points.par_iter_mut().zip(rate).for_each(|(p, (dy, dw))| {
        let x = [p.x[0] + h * dy[0], p.x[1] + h * dy[1], p.x[2] + h * dy[2]];
        let v = [p.v[0] + h * dw[0], p.v[1] + h * dw[1], p.v[2] + h * dw[2]];
        *p = PhasePoint { x: wrap3(x), v };
    });
}

/// Final state and sampled diagnostics of a run.
#[derive(Debug, Clone)]
pub struct ScaledRun {
    pub state: ScaledState,
    pub records: Vec<DiagnosticsRecord>,
}

/// Builds the solver described by a scaled-model configuration.
pub fn scaled_solver(cfg: &RunConfig, conv: Convention) -> Result<ScaledSolver> {
    let source = match cfg.model {
        Model::Quasineutral => FieldSource::SelfConsistent(PoissonModel::Quasineutral),
        Model::FixedIons => FieldSource::SelfConsistent(PoissonModel::FixedIons),
        Model::External => FieldSource::External(cfg.external_field.clone()),
        Model::LimitSelf | Model::LimitExternal => {
            return Err(FlrError::config("model", "not a scaled model"));
        }
    };
    ScaledSolver::new(cfg.grid, cfg.epsilon, source, cfg.pusher, conv)
}

/// Runs a scaled model from `f₀`, sampling diagnostics every `diag_stride`
/// steps and at the end. `observe` sees the state after every step (and at
/// step 0).
pub fn run_scaled(
    cfg: &RunConfig,
    conv: Convention,
    mut observe: impl FnMut(usize, &ScaledSolver, &ScaledState) -> Result<()>,
) -> Result<ScaledRun> {
    cfg.validate()?;
    let solver = scaled_solver(cfg, conv)?;
    let mut state = solver.init(init_ensemble(&cfg.loading())?)?;
    let dt = cfg.dt();
    let steps = cfg.steps();
    let mut records = vec![solver.record(&state)];
    observe(0, &solver, &state)?;
    for step in 1..=steps {
        solver.step(&mut state, dt)?;
        // Pin the clock to the step grid so comparison times match exactly.
        state.time = step as f64 * dt;
        if step % cfg.diag_stride == 0 || step == steps {
            let rec = solver.record(&state);
            if !rec.is_finite() {
                return Err(FlrError::NonFiniteDiagnostics { step });
            }
            records.push(rec);
        }
        observe(step, &solver, &state)?;
    }
    if state.cfl_warnings > 0 {
        log::warn!(
            "{} of {steps} steps moved guiding centres by more than one cell",
            state.cfl_warnings
        );
    }
    Ok(ScaledRun { state, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gyro_transform, Direction};
    use std::f64::consts::PI;

    fn one(x: Vec3, v: Vec3) -> Ensemble {
        Ensemble::uniform(vec![PhasePoint::new(x, v)], Frame::Physical).unwrap()
    }

    #[test]
    fn fast_step_quarter_turn_and_full_period() {
        let mut e = one([0.0; 3], [1.0, 0.0, 0.0]);
        fast_step(&mut e, 0.1, 0.05 * PI);
        let p = e.points()[0];
        assert!((p.x[0] - 0.0).abs() < 1e-14 || (p.x[0] - 1.0).abs() < 1e-14);
        assert!((p.x[1] - 0.0).abs() < 1e-14 || (p.x[1] - 1.0).abs() < 1e-14);
        assert!((p.v[0]).abs() < 1e-15 && (p.v[1] + 1.0).abs() < 1e-15);

        let mut e = one([0.3, 0.6, 0.2], [0.4, -0.7, 0.9]);
        fast_step(&mut e, 0.1, 2.0 * PI * 0.1);
        let p = e.points()[0];
        assert!((p.x[0] - 0.3).abs() < 1e-13 && (p.x[1] - 0.6).abs() < 1e-13);
        assert!((p.x[2] - wrap(0.2 + 0.9 * 2.0 * PI * 0.1)).abs() < 1e-13);
        assert!((p.v[0] - 0.4).abs() < 1e-14 && (p.v[1] + 0.7).abs() < 1e-14);
    }

    #[test]
    fn fast_step_preserves_speed() {
        let mut e = one([0.1, 0.2, 0.3], [1.3, -0.2, 0.5]);
        let k0 = e.kinetic();
        for _ in 0..100 {
            fast_step(&mut e, 0.05, 0.0123);
        }
        assert!((e.kinetic() - k0).abs() < 1e-14);
    }

    fn free_solver(eps: f64, pusher: Pusher) -> ScaledSolver {
        let spec = GridSpec::new(8, 8, 8).unwrap();
        ScaledSolver::new(
            spec,
            eps,
            FieldSource::External(ExternalField::default()),
            pusher,
            Convention::MINUS,
        )
        .unwrap()
    }

    #[test]
    fn free_flight_keeps_gyro_coordinates() {
        let pts: Vec<PhasePoint> = (1..=50u64)
            .map(|i| {
                let h = crate::sampling::halton(i, 6);
                PhasePoint::new(
                    [h[0], h[1], h[2]],
                    [4.0 * h[3] - 2.0, 4.0 * h[4] - 2.0, 4.0 * h[5] - 2.0],
                )
            })
            .collect();
        for &eps in &[0.2, 0.1, 0.05] {
            let s = free_solver(eps, Pusher::Direct);
            let mut state = s
                .init(Ensemble::uniform(pts.clone(), Frame::Physical).unwrap())
                .unwrap();
            let g0 = s.filtered(&state);
            let dt = eps / 20.0;
            for _ in 0..(1.0 / dt).round() as usize {
                s.step(&mut state, dt).unwrap();
            }
            let g1 = s.filtered(&state);
            for (a, b) in g0.points().iter().zip(g1.points()) {
                let mut stream = *a;
                stream.x[2] = wrap(a.x[2] + a.v[2] * state.time);
                assert!(stream.distance(b) < 1e-10, "eps {eps}: {a:?} -> {b:?}");
            }
        }
    }

    #[test]
    fn filtered_free_flight_is_parallel_streaming() {
        let s = free_solver(0.1, Pusher::Filtered);
        let e = one([0.1, 0.2, 0.3], [0.5, 0.25, -0.75]);
        let mut state = s.init(e).unwrap();
        for _ in 0..40 {
            s.step(&mut state, 0.005).unwrap();
        }
        let p = state.ensemble.points()[0];
        assert!((p.x[0] - 0.1).abs() < 1e-15 && (p.x[1] - 0.2).abs() < 1e-15);
        assert!((p.x[2] - wrap(0.3 - 0.75 * 0.2)).abs() < 1e-14);
        assert_eq!(p.v, [0.5, 0.25, -0.75]);
    }

    #[test]
    fn rejects_large_steps() {
        let s = free_solver(0.1, Pusher::Direct);
        let mut state = s.init(one([0.0; 3], [0.0; 3])).unwrap();
        assert!(s.step(&mut state, 0.03).is_err());
    }

    fn external_solver(pusher: Pusher) -> ScaledSolver {
        let field = ExternalField::parse("1:1:0:0:0.6, 2:0:1:1:0.4:0.3, par:1:0:1:0.3").unwrap();
        ScaledSolver::new(
            GridSpec::new(8, 8, 8).unwrap(),
            0.1,
            FieldSource::External(field),
            pusher,
            Convention::MINUS,
        )
        .unwrap()
    }

    fn run_to(s: &ScaledSolver, p: PhasePoint, dt: f64, t: f64) -> PhasePoint {
        let mut state = s.init(one(p.x, p.v)).unwrap();
        for _ in 0..(t / dt).round() as usize {
            s.step(&mut state, dt).unwrap();
        }
        s.filtered(&state).points()[0]
    }

    #[test]
    fn second_order_in_time() {
        let p = PhasePoint::new([0.2, 0.7, 0.4], [0.8, -0.3, 0.6]);
        for pusher in [Pusher::Direct, Pusher::Filtered] {
            let s = external_solver(pusher);
            let t = 0.2;
            let a = run_to(&s, p, 0.02, t);
            let b = run_to(&s, p, 0.01, t);
            let c = run_to(&s, p, 0.005, t);
            let ratio = a.distance(&b) / b.distance(&c);
            assert!((3.0..5.5).contains(&ratio), "{pusher:?}: ratio {ratio}");
        }
    }

    #[test]
    fn direct_and_filtered_agree() {
        let p = PhasePoint::new([0.2, 0.7, 0.4], [0.8, -0.3, 0.6]);
        let direct = external_solver(Pusher::Direct);
        let filtered = external_solver(Pusher::Filtered);
        let mut last = f64::INFINITY;
        for dt in [0.01, 0.005, 0.0025] {
            let gap = run_to(&direct, p, dt, 0.2).distance(&run_to(&filtered, p, dt, 0.2));
            assert!(gap < 0.4 * last, "gap {gap} after {last}");
            last = gap;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn uniform_field_period_average_drift() {
        // Over one gyroperiod the filtered position drifts at e_z∧E times the
        // convention sign, i.e. (E₂, −E₁) for sign −1.
        let e = [0.3, -0.2, 0.0];
        let eps = 0.01;
        let s = ScaledSolver::new(
            GridSpec::new(8, 8, 8).unwrap(),
            eps,
            FieldSource::External(ExternalField::uniform(e)),
            Pusher::Filtered,
            Convention::MINUS,
        )
        .unwrap();
        let p0 = PhasePoint::new([0.5, 0.5, 0.5], [0.4, 0.1, 0.0]);
        let period = 2.0 * PI * eps;
        let n = 400;
        let q = run_to(&s, p0, period / n as f64, period);
        let drift = [(q.x[0] - p0.x[0]) / period, (q.x[1] - p0.x[1]) / period];
        assert!((drift[0] - e[1]).abs() < 1e-6, "{drift:?}");
        assert!((drift[1] + e[0]).abs() < 1e-6, "{drift:?}");
    }

    #[test]
    fn gyro_frame_matches_transform() {
        let s = free_solver(0.1, Pusher::Filtered);
        let p = PhasePoint::new([0.1, 0.9, 0.5], [0.3, 0.2, 0.1]);
        let mut state = s.init(one(p.x, p.v)).unwrap();
        s.step(&mut state, 0.01).unwrap();
        let phys = s.physical(&state).points()[0];
        let back = gyro_transform(phys, s.phase(state.time), Direction::PhysToGyro, Convention::MINUS);
        assert!(back.distance(&state.ensemble.points()[0]) < 1e-14);
    }
}
