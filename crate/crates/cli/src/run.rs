//! Run orchestration for the four modes.
//!
//! The primary artifact (CSV or report) goes to `out`; progress and summaries
//! go to `log`. Floats are written with `{:.16e}`, so identical configs give
//! byte-identical output.

use std::io::Write;
use std::sync::Arc;

use lindkraus::diagnostics::choi_matrix;
use lindkraus::linalg::{eig_of_hermitian_part, frobenius, matrix_unit};
use lindkraus::scenarios::convergence_study_with;
use lindkraus::{
    extract_kraus, if_step_dense, kraus_count, rk_step_dense, validate_tableau, ComplexMatrix, Complex64,
    FlowOperator, Integrator, Observable, Reference, State, StepOptions, Stepper, TruncationPolicy,
};

use crate::config::{config_error, Mode, ReferenceKind, RunConfig, ScenarioSpec};
use crate::error::{CliError, CliResult};

/// Minimum eigenvalue below which an IF run is aborted.
pub const MIN_EIG_ABORT: f64 = -1e-6;

/// Largest state dimension for which Choi matrices (N² × N²) are formed.
pub const CHOI_MAX_DIM: usize = 24;

/// Tolerances of the kraus-verify and choi-probe monitors.
const KRAUS_DEFECT_TOLERANCE: f64 = 1e-10;
const CHOI_RELATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub renormalize: bool,
    pub force_tableau: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            renormalize: true,
            force_tableau: false,
        }
    }
}

impl RunOptions {
    fn step_options(&self) -> StepOptions {
        StepOptions {
            renormalize: self.renormalize,
            force_tableau: self.force_tableau,
        }
    }

    fn linear(&self) -> StepOptions {
        StepOptions {
            renormalize: false,
            force_tableau: self.force_tableau,
        }
    }
}

pub fn run(cfg: &RunConfig, opts: RunOptions, out: &mut dyn Write, log: &mut dyn Write) -> CliResult<()> {
    match cfg.mode {
        Mode::Simulate => simulate(cfg, opts, out),
        Mode::Converge => converge(cfg, opts, out, log),
        Mode::KrausVerify => kraus_verify(cfg, opts, out),
        Mode::ChoiProbe => choi_probe(cfg, opts, out, log),
    }
}

fn column_name(o: &Observable) -> String {
    match o {
        Observable::Excited { .. } => "excited".into(),
        Observable::Population(k) => format!("pop_{k}"),
    }
}

fn simulate(cfg: &RunConfig, opts: RunOptions, out: &mut dyn Write) -> CliResult<()> {
    let (t_final, steps, dt) = match (cfg.t_final, cfg.steps, cfg.dt) {
        (Some(t), Some(n), Some(h)) => (t, n, h),
        _ => return Err(config_error("simulate needs a resolved time grid")),
    };
    let scenario = cfg.scenario.build(t_final)?;
    let observable = cfg.observable.unwrap_or(scenario.observable);
    let policy = TruncationPolicy {
        epsilon: cfg.epsilon.resolve(dt),
        rank_max: cfg.rmax,
        pre_truncate: cfg.pre_truncate,
    };
    let stepper = Stepper::new(
        &scenario.model,
        cfg.integrator,
        cfg.tableau.clone(),
        cfg.flow,
        policy,
        dt,
        opts.step_options(),
    )?;
    // A forced non-CP tableau may legitimately lose positivity.
    let monitor = cfg.integrator != Integrator::Rk && validate_tableau(&cfg.tableau)?.is_cp_valid;

    let mut header = String::from("t,trace_defect,herm_defect,min_eig,rank,P_e");
    for o in &cfg.extra_observables {
        header.push(',');
        header.push_str(&column_name(o));
    }
    writeln!(out, "{header}")?;

    let mut state = State::initial(cfg.integrator, &scenario.initial);
    for n in 0..=steps {
        if n > 0 {
            state = stepper.step(&state)?;
        }
        if n % cfg.sample_stride != 0 && n != steps {
            continue;
        }
        let report = state.report()?;
        let rank = state.factor_rank().unwrap_or(report.rank_eps);
        let mut row = format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            n as f64 * dt,
            report.trace_defect,
            report.herm_defect,
            report.min_eig,
            rank,
            observable.eval(&state)?
        );
        for o in &cfg.extra_observables {
            row.push_str(&format!(",{:.16e}", o.eval(&state)?));
        }
        writeln!(out, "{row}")?;
        if monitor && report.min_eig < MIN_EIG_ABORT {
            out.flush()?;
            return Err(CliError::Invariant(format!(
                "minimum eigenvalue {:.3e} at step {n} (t = {:.6e}) in a {} run; CP integrators must keep rho PSD",
                report.min_eig,
                n as f64 * dt,
                cfg.integrator
            )));
        }
    }
    out.flush()?;
    Ok(())
}

fn converge(cfg: &RunConfig, opts: RunOptions, out: &mut dyn Write, log: &mut dyn Write) -> CliResult<()> {
    let t_final = cfg.t_final.ok_or_else(|| config_error("converge needs 't_final'"))?;
    let mut scenario = cfg.scenario.build(t_final)?;
    if let Some(o) = cfg.observable {
        scenario.observable = o;
    }
    let reference = match (cfg.reference, &cfg.scenario) {
        (ReferenceKind::SelfReference(n), _) => Reference::SelfReference { steps: n },
        (ReferenceKind::Analytic, ScenarioSpec::Damping { gamma }) => {
            if scenario.observable != (Observable::Excited { m: 1 }) {
                return Err(config_error("the analytic reference describes the excited population only"));
            }
            let gamma = *gamma;
            Reference::Analytic(Arc::new(move |t: f64| (-gamma * t).exp()))
        }
        (ReferenceKind::Analytic, _) => {
            return Err(config_error("an analytic reference exists only for the damping scenario"))
        }
    };
    let table = convergence_study_with(
        &scenario,
        &cfg.methods,
        &cfg.grid,
        &reference,
        &cfg.tableau,
        opts.step_options(),
    )?;

    writeln!(out, "method,steps,dt,l2_error,final_error,observed_order,exact")?;
    for r in &table.rows {
        let order = r.observed_order.map_or(String::new(), |o| format!("{o:.16e}"));
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{},{}",
            r.method, r.steps, r.dt, r.l2_error, r.final_error, order, r.exact
        )?;
    }
    out.flush()?;

    writeln!(log, "observed orders (L2 in time, successive refinements):")?;
    for m in &cfg.methods {
        let rows: Vec<_> = table.method_rows(&m.label).collect();
        let errors: Vec<String> = rows.iter().map(|r| format!("{:.2e}", r.l2_error)).collect();
        let orders: Vec<String> = rows
            .iter()
            .skip(1)
            .map(|r| match (r.observed_order, r.exact) {
                (Some(o), _) => format!("{o:.2}"),
                (None, true) => "exact".into(),
                (None, false) => "n/a".into(),
            })
            .collect();
        writeln!(log, "  {:<24} errors {}  orders {}", m.label, errors.join(" "), orders.join(" "))?;
    }
    Ok(())
}

/// Matrix units when they are affordable, otherwise two fixed dense probes.
fn probes(n: usize, rho0: &ComplexMatrix) -> Vec<ComplexMatrix> {
    if n <= CHOI_MAX_DIM {
        (0..n).flat_map(|i| (0..n).map(move |j| matrix_unit(n, i, j))).collect()
    } else {
        let skew = ComplexMatrix::from_fn(n, n, |i, j| {
            Complex64::new(((i * 7 + j * 3) % 11) as f64 / 11.0, ((i + 5 * j) % 13) as f64 / 13.0 - 0.5)
        });
        vec![rho0.clone(), skew]
    }
}

fn choi_spectrum<F>(step: F, n: usize) -> CliResult<(Vec<f64>, f64)>
where
    F: Fn(&ComplexMatrix) -> lindkraus::Result<ComplexMatrix> + Sync,
{
    let c = choi_matrix(step, n)?;
    Ok((eig_of_hermitian_part(&c).values, frobenius(&c)))
}

fn kraus_verify(cfg: &RunConfig, opts: RunOptions, out: &mut dyn Write) -> CliResult<()> {
    let dt = cfg.dt.ok_or_else(|| config_error("kraus-verify needs 'dt'"))?;
    let scenario = cfg.scenario.build(dt)?;
    let model = &scenario.model;
    let n = model.dim();
    let flow = FlowOperator::new(model, cfg.flow);
    let kraus = extract_kraus(model, &flow, &cfg.tableau, dt)?;
    let expected = kraus_count(&cfg.tableau, model.jumps().len());
    let step = |x: &ComplexMatrix| if_step_dense(model, &flow, &cfg.tableau, dt, x, opts.linear());

    let mut defect: f64 = 0.0;
    for p in probes(n, &scenario.initial.density()) {
        defect = defect.max(frobenius(&(kraus.apply(&p) - step(&p)?)));
    }
    writeln!(out, "tableau = {}", cfg.tableau.name())?;
    writeln!(out, "flow = {}", cfg.flow)?;
    writeln!(out, "dimension = {n}")?;
    writeln!(out, "jumps = {}", model.jumps().len())?;
    writeln!(out, "dt = {dt:.16e}")?;
    writeln!(out, "kraus_count = {}", kraus.len())?;
    writeln!(out, "kraus_count_formula = {expected}")?;
    writeln!(out, "max_reconstruction_defect = {defect:.16e}")?;
    let mut relative = None;
    if n <= CHOI_MAX_DIM {
        let (values, norm) = choi_spectrum(step, n)?;
        writeln!(out, "choi_min_eig = {:.16e}", values[0])?;
        writeln!(out, "choi_norm = {norm:.16e}")?;
        relative = Some(values[0] / norm);
    } else {
        writeln!(out, "choi_min_eig = skipped (dimension above {CHOI_MAX_DIM})")?;
    }
    out.flush()?;

    if kraus.len() != expected {
        return Err(CliError::Invariant(format!(
            "{} Kraus operators, recursion formula gives {expected}",
            kraus.len()
        )));
    }
    if defect > KRAUS_DEFECT_TOLERANCE {
        return Err(CliError::Invariant(format!(
            "Kraus sum differs from the IF step by {defect:.3e}"
        )));
    }
    if let Some(r) = relative.filter(|&r| r < -CHOI_RELATIVE_TOLERANCE) {
        return Err(CliError::Invariant(format!(
            "Choi matrix has relative minimum eigenvalue {r:.3e}"
        )));
    }
    Ok(())
}

fn choi_probe(cfg: &RunConfig, opts: RunOptions, out: &mut dyn Write, log: &mut dyn Write) -> CliResult<()> {
    let dt = cfg.dt.ok_or_else(|| config_error("choi-probe needs 'dt'"))?;
    let scenario = cfg.scenario.build(dt)?;
    let model = &scenario.model;
    let n = model.dim();
    if n > CHOI_MAX_DIM {
        return Err(config_error(format!(
            "choi-probe forms an N^2 x N^2 matrix; dimension {n} exceeds {CHOI_MAX_DIM}"
        )));
    }
    let linear = opts.linear();
    let flow = FlowOperator::new(model, cfg.flow);
    let (values, norm) = match cfg.integrator {
        Integrator::Rk => choi_spectrum(|x| rk_step_dense(model, &cfg.tableau, dt, x, linear), n)?,
        Integrator::IfDense => choi_spectrum(|x| if_step_dense(model, &flow, &cfg.tableau, dt, x, linear), n)?,
        Integrator::IfLowRank => {
            return Err(config_error(
                "choi-probe needs a map on arbitrary matrices; use integrator rk or if-dense",
            ))
        }
    };
    writeln!(out, "index,eigenvalue")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v:.16e}")?;
    }
    out.flush()?;
    let relative = values[0] / norm;
    writeln!(log, "choi min eigenvalue {:.3e} (relative {relative:.3e})", values[0])?;
    let monitor = cfg.integrator == Integrator::IfDense && validate_tableau(&cfg.tableau)?.is_cp_valid;
    if monitor && relative < -CHOI_RELATIVE_TOLERANCE {
        return Err(CliError::Invariant(format!(
            "Choi matrix of the IF step has relative minimum eigenvalue {relative:.3e}"
        )));
    }
    Ok(())
}
