//! Entry points behind the command line: single runs, ε sweeps and the two
//! self-checks.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{RunConfig, SweepConfig};
use crate::diagnostics::{weak_error, weak_error_gyroavg, DiagnosticsRecord, TestBattery};
use crate::ensemble::{Ensemble, Frame};
use crate::error::{FlrError, Result};
use crate::field::{FieldSolver, GridSpec, PoissonModel, ScalarField};
use crate::geometry::{resolve_convention, Convention, ConventionReport};
use crate::io::{write_diagnostics, write_field, write_particles, write_table};
use crate::limit::{gyro_charge, run_limit, LimitInit, LimitSolver, LimitState};
use crate::scaled::run_scaled;

pub const RESOLVED_CONFIG: &str = "resolved.cfg";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_COLUMNS: [&str; 6] = [
    "epsilon",
    "weak_error",
    "weak_error_gyroavg",
    "epar_weak",
    "max_rho_l32",
    "max_e_mixed_norm",
];

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| FlrError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| FlrError::io(path, e))
}

/// Outcome of one simulation.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    /// Final ensemble: physical frame for scaled runs, gyro frame for limit
    /// runs.
    pub ensemble: Ensemble,
    /// Final filtered-frame ensemble, comparable with a limit run.
    pub filtered: Ensemble,
    pub time: f64,
    pub files: Vec<PathBuf>,
}

fn snapshot_name(prefix: &str, t: f64, ext: &str) -> String {
    format!("{prefix}_t{t}.{ext}")
}

/// Phase-averaged density of a limit state.
fn limit_density(solver: &LimitSolver, state: &LimitState) -> Result<ScalarField> {
    let quad = solver.quadrature();
    let spec = solver.field_solver().spec();
    let mut acc = vec![0.0; spec.len()];
    for j in 0..quad.len() {
        let rho = match &state.fields {
            Some(f) => f.rho[j].clone(),
            None => gyro_charge(&state.ensemble, quad.node(j), spec, solver.convention())?,
        };
        acc.iter_mut()
            .zip(rho.values())
            .for_each(|(a, r)| *a += r * quad.weight());
    }
    ScalarField::from_values(spec, acc)
}

/// Runs `cfg` with initial data `init` for limit models, writing the
/// resolved configuration, the diagnostics CSV and the requested snapshots
/// into `cfg.output_dir`.
pub fn execute(cfg: &RunConfig, conv: Convention, init: LimitInit) -> Result<RunOutput> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let mut files = vec![dir.join(RESOLVED_CONFIG)];
    write_text(&files[0], &cfg.to_text())?;
    let due = cfg.snapshot_steps();
    let dt = cfg.dt();
    let mut snap = |step: usize, writes: &mut dyn FnMut(f64, &mut Vec<PathBuf>) -> Result<()>| -> Result<()> {
        if due.contains(&step) {
            writes(step as f64 * dt, &mut files)?;
        }
        Ok(())
    };
    let out = if cfg.model.is_limit() {
        let run = run_limit(cfg, conv, init, |step, solver, state| {
            snap(step, &mut |t, files| {
                let p = dir.join(snapshot_name("particles", t, "flrp"));
                write_particles(&p, &state.ensemble, state.time)?;
                let r = dir.join(snapshot_name("rho", t, "flrs"));
                write_field(&r, &limit_density(solver, state)?)?;
                files.extend([p, r]);
                Ok(())
            })
        })?;
        RunOutput {
            records: run.records,
            filtered: run.state.ensemble.clone(),
            ensemble: run.state.ensemble,
            time: run.state.time,
            files: Vec::new(),
        }
    } else {
        let run = run_scaled(cfg, conv, |step, solver, state| {
            snap(step, &mut |t, files| {
                let p = dir.join(snapshot_name("particles", t, "flrp"));
                write_particles(&p, &solver.physical(state), state.time)?;
                let r = dir.join(snapshot_name("rho", t, "flrs"));
                write_field(&r, &state.rho)?;
                let v = dir.join(snapshot_name("potential", t, "flrs"));
                write_field(&v, &state.potential)?;
                files.extend([p, r, v]);
                Ok(())
            })
        })?;
        let solver = crate::scaled::scaled_solver(cfg, conv)?;
        RunOutput {
            records: run.records,
            ensemble: solver.physical(&run.state),
            filtered: solver.filtered(&run.state),
            time: run.state.time,
            files: Vec::new(),
        }
    };
    let csv = dir.join(DIAGNOSTICS_CSV);
    write_diagnostics(&csv, &out.records)?;
    files.push(csv);
    Ok(RunOutput { files, ..out })
}

/// `flr run`: standalone limit runs of the external model start from the
/// gyroaveraged profile, self-consistent ones from the profile itself.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput> {
    let init = match cfg.model {
        crate::config::Model::LimitExternal => LimitInit::GyroAverage,
        _ => LimitInit::Profile,
    };
    execute(cfg, Convention::startup(), init)
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    /// Filtered-frame weak error against the limit solution.
    pub weak_error: f64,
    /// Weak error between the gyroaverages of both solutions.
    pub weak_error_gyroavg: f64,
    /// `epar_weak` at the comparison time.
    pub epar_weak: f64,
    pub max_rho_l32: f64,
    pub max_e_mixed_norm: f64,
}

impl SweepRow {
    pub fn values(&self) -> Vec<f64> {
        vec![
            self.epsilon,
            self.weak_error,
            self.weak_error_gyroavg,
            self.epar_weak,
            self.max_rho_l32,
            self.max_e_mixed_norm,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub limit: Vec<DiagnosticsRecord>,
    pub members: Vec<Vec<DiagnosticsRecord>>,
}

fn max_of(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    records.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
}

/// `flr sweep`: one limit run from `f₀`, then one scaled run per `ε`,
/// compared in the filtered frame at `comparison_time`.
pub fn cmd_sweep(sweep: &SweepConfig) -> Result<SweepOutput> {
    sweep.validate()?;
    let conv = Convention::startup();
    create_dir(&sweep.base.output_dir)?;
    write_text(&sweep.base.output_dir.join(RESOLVED_CONFIG), &sweep.to_text())?;
    let limit = execute(&sweep.limit(), conv, LimitInit::Profile)?;
    let battery = TestBattery::new();
    let n_tau = sweep.base.n_tau;
    let mut rows = Vec::new();
    let mut members = Vec::new();
    for &eps in &sweep.epsilons {
        let wrap = |source| FlrError::SweepMember {
            epsilon: eps,
            source: Box::new(source),
        };
        let member = execute(&sweep.member(eps), conv, LimitInit::Profile).map_err(wrap)?;
        if (member.time - limit.time).abs() > 1e-9 * limit.time.max(1.0) {
            return Err(wrap(FlrError::InvalidArgument(format!(
                "member ended at t={} but the limit run at t={}",
                member.time, limit.time
            ))));
        }
        let g = &member.filtered;
        debug_assert_eq!(g.frame(), Frame::Gyro);
        let last = member.records.last().expect("runs record their final state");
        rows.push(SweepRow {
            epsilon: eps,
            weak_error: weak_error(g, &limit.filtered, &battery).map_err(wrap)?,
            weak_error_gyroavg: weak_error_gyroavg(g, &limit.filtered, &battery, n_tau, conv).map_err(wrap)?,
            epar_weak: last.epar_weak,
            max_rho_l32: max_of(&member.records, |r| r.rho_l32),
            max_e_mixed_norm: max_of(&member.records, |r| r.e_mixed_norm),
        });
        log::info!("epsilon {eps}: weak error {:e}", rows.last().unwrap().weak_error);
        members.push(member.records);
    }
    let table: Vec<Vec<f64>> = rows.iter().map(SweepRow::values).collect();
    write_table(&sweep.base.output_dir.join(SWEEP_CSV), &SWEEP_COLUMNS, &table)?;
    Ok(SweepOutput {
        rows,
        limit: limit.records,
        members,
    })
}

/// Manufactured-solution check of one Poisson model.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonCheck {
    pub model: PoissonModel,
    /// `max|V − V_exact| / max|V_exact|`.
    pub relative_error: f64,
    pub seconds: f64,
}

pub const POISSON_TOLERANCE: f64 = 1e-12;

/// Band-limited potential with a fixed spread of modes up to half the
/// resolution, and its zero mode set to `mean`.
pub fn manufactured_potential(spec: GridSpec, mean: f64) -> ScalarField {
    use std::f64::consts::PI;
    let modes: [([f64; 3], f64, f64); 5] = [
        ([1.0, 0.0, 0.0], 1.0, 0.3),
        ([0.0, 2.0, 1.0], 0.5, 1.1),
        ([3.0, -1.0, 2.0], 0.25, -0.4),
        ([(spec.n1 / 2 - 1) as f64, 1.0, 0.0], 0.1, 2.0),
        ([1.0, 1.0, (spec.n3 / 2 - 1) as f64], 0.2, 0.7),
    ];
    ScalarField::from_fn(spec, |x| {
        mean + modes
            .iter()
            .map(|(k, a, p)| a * (2.0 * PI * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]) + p).cos())
            .sum::<f64>()
    })
}

/// Solves manufactured problems for every Poisson model at `eps`.
pub fn poisson_test(spec: GridSpec, eps: f64) -> Result<Vec<PoissonCheck>> {
    let fs = FieldSolver::new(spec);
    [PoissonModel::Quasineutral, PoissonModel::FixedIons, PoissonModel::Limit]
        .into_iter()
        .map(|model| {
            // The limit operator keeps the zero mode; the others fix it to 0.
            let (mean, shift) = match model {
                PoissonModel::Limit => (0.4, 1.0),
                _ => (0.0, 0.7),
            };
            let exact = manufactured_potential(spec, mean);
            let mut rho = fs.apply_operator(&exact, eps, model);
            rho.values_mut().iter_mut().for_each(|r| *r += shift);
            let start = Instant::now();
            let got = fs.solve_poisson(&rho, eps, model)?;
            let seconds = start.elapsed().as_secs_f64();
            Ok(PoissonCheck {
                model,
                relative_error: got.max_abs_diff(&exact) / exact.max_abs(),
                seconds,
            })
        })
        .collect()
}

/// Resolves the Larmor-shift sign from the invariance test.
pub fn convention_check() -> ConventionReport {
    resolve_convention()
}
