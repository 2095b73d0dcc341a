//! Experiment models and the error measures used to compare methods on them.
//!
//! Composite systems use the qubit as the slow Kronecker index: basis state
//! `(q, n)` sits at `q·m + n`, with `q = 1` the excited level. The
//! excited-state population is then the weight of the second block.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowMethod;
use crate::integrators::StepOptions;
use crate::linalg::{c64, from_real_rows, hermiticity_defect, identity, kron, ComplexMatrix};
use crate::model::LindbladModel;
use crate::simulate::{run_trajectory, EpsilonPolicy, Integrator, State, Stepper};
use crate::tableau::ButcherTableau;
use crate::truncation::{LowRankFactor, TruncationPolicy};

/// Errors at or below this level count as exact in convergence tables.
pub const EXACT_ERROR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JcParams {
    /// Cavity levels kept.
    pub m: usize,
    /// Atom–cavity coupling.
    pub lambda: f64,
    /// Cavity decay rate.
    pub kappa: f64,
    /// Coherent-state amplitude.
    pub v: f64,
}

impl JcParams {
    /// `λ = 1` and `v = √(m/3)`.
    pub fn new(m: usize, kappa: f64) -> Self {
        JcParams {
            m,
            lambda: 1.0,
            kappa,
            v: (m as f64 / 3.0).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be non-negative, got {}", self.kappa));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return bad(format!("v must be positive, got {}", self.v));
        }
        Ok(())
    }

    pub fn revival_time(&self) -> f64 {
        2.0 * PI * self.v.abs() / self.lambda
    }
}

/// `t_r = 2π|v|/λ`.
pub fn revival_time(lambda: f64, v: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(2.0 * PI * v.abs() / lambda)
}

/// Lowering operator with `a[l−1, l] = √l`.
pub fn lowering(n: usize) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(n, n);
    for l in 1..n {
        a[(l - 1, l)] = c64((l as f64).sqrt(), 0.0);
    }
    a
}

/// Normalized amplitudes `∝ v^n/√(n!)`, `n = 0, …, m−1`.
pub fn coherent_amplitudes(v: f64, m: usize) -> Vec<f64> {
    let mut amps = Vec::with_capacity(m);
    let mut c = 1.0;
    for n in 0..m {
        if n > 0 {
            c *= v / (n as f64).sqrt();
        }
        amps.push(c);
    }
    let norm = amps.iter().map(|x| x * x).sum::<f64>().sqrt();
    amps.iter().map(|x| x / norm).collect()
}

fn sigma_plus() -> ComplexMatrix {
    from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]])
}

/// Jaynes–Cummings model with cavity loss, and the initial factor with the
/// atom excited and the cavity in a coherent state.
pub fn build_jaynes_cummings(p: &JcParams) -> Result<(LindbladModel, LowRankFactor)> {
    p.validate()?;
    let m = p.m;
    let b = kron(&identity(2), &lowering(m));
    let sp = kron(&sigma_plus(), &identity(m));
    let sm = sp.adjoint();
    let h = (&b * &sp + b.adjoint() * &sm).scale(p.lambda);
    let model = LindbladModel::new(h, vec![(1.0, b.scale(p.kappa.sqrt()))])?;
    let mut psi = vec![c64(0.0, 0.0); 2 * m];
    for (n, a) in coherent_amplitudes(p.v, m).into_iter().enumerate() {
        psi[m + n] = c64(a, 0.0);
    }
    Ok((model, LowRankFactor::pure(&psi)?))
}

/// `σ⁺σ⁻ ⊗ I + I ⊗ b̂†b̂`, conserved by the Jaynes–Cummings Hamiltonian.
pub fn total_excitation(m: usize) -> ComplexMatrix {
    let bh = lowering(m);
    let sp = sigma_plus();
    kron(&(&sp * sp.adjoint()), &identity(m)) + kron(&identity(2), &(bh.adjoint() * bh))
}

/// Default level count and base rate of the stiff decoherence model.
pub const STIFF_LEVELS: usize = 6;
pub const STIFF_GAMMA: f64 = 1e5;

/// Substitute Hamiltonian for the stiff model, in rad/s with time in seconds.
/// Level energies are spaced by `ω₀` and a strong drive `Ω` couples the
/// second and third levels, with weaker couplings along the ladder.
pub fn default_stiff_hamiltonian() -> ComplexMatrix {
    let omega0 = 3.0e14;
    let drive = 2.0e15;
    let weak = 1.0e14;
    let n = STIFF_LEVELS;
    let mut h = ComplexMatrix::zeros(n, n);
    for l in 0..n {
        h[(l, l)] = c64(omega0 * l as f64, 0.0);
    }
    for l in 0..n - 1 {
        let g = if l == 1 { drive } else { weak };
        h[(l, l + 1)] = c64(0.5 * g, 0.0);
        h[(l + 1, l)] = c64(0.5 * g, 0.0);
    }
    h
}

/// Jumps `Γ/√2 · a` (decay) and `Γ · a†a` (dephasing), both with unit rate.
pub fn build_stiff_decoherence(gamma: f64, h: &ComplexMatrix) -> Result<LindbladModel> {
    let n = h.nrows();
    if hermiticity_defect(h) > 1e-10 * h.norm().max(1.0) {
        return Err(Error::NotHermitian {
            defect: hermiticity_defect(h),
            tolerance: 1e-10 * h.norm().max(1.0),
        });
    }
    let a = lowering(n);
    let decay = a.scale(gamma / 2f64.sqrt());
    let dephase = (a.adjoint() * &a).scale(gamma);
    LindbladModel::new(h.clone(), vec![(1.0, decay), (1.0, dephase)])
}

/// `H = 0`, `L = σ⁻`, `γ`; `ρ_ee(t) = e^{−γt} ρ_ee(0)`.
pub fn build_amplitude_damping(gamma: f64) -> Result<LindbladModel> {
    LindbladModel::new(
        ComplexMatrix::zeros(2, 2),
        vec![(gamma, from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]))],
    )
}

fn check_rows(n: usize, m: usize) -> Result<()> {
    if n != 2 * m {
        return Err(Error::DimensionMismatch {
            context: "excited_population",
            expected: 2 * m,
            found: n,
        });
    }
    Ok(())
}

/// Trace of the lower-right `m × m` block of `ρ`.
pub fn excited_population(rho: &ComplexMatrix, m: usize) -> Result<f64> {
    check_rows(rho.nrows(), m)?;
    Ok((m..2 * m).map(|k| rho[(k, k)].re).sum())
}

/// `‖V[m.., :]‖_F²`, equal to [`excited_population`] of `VV†`.
pub fn excited_population_factor(v: &LowRankFactor, m: usize) -> Result<f64> {
    check_rows(v.dim(), m)?;
    Ok(v.matrix().rows(m, m).norm_squared())
}

/// Scalar observable recorded along trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// Excited-qubit population of a `2m`-dimensional composite.
    Excited { m: usize },
    /// A single diagonal entry `ρ_kk`.
    Population(usize),
}

impl Observable {
    pub fn eval(&self, state: &State) -> Result<f64> {
        match (*self, state) {
            (Observable::Excited { m }, State::Dense(rho)) => excited_population(rho, m),
            (Observable::Excited { m }, State::LowRank(v)) => excited_population_factor(v, m),
            (Observable::Population(k), s) => {
                if k >= s.dim() {
                    return Err(Error::DimensionMismatch {
                        context: "population index",
                        expected: s.dim(),
                        found: k,
                    });
                }
                Ok(match s {
                    State::Dense(rho) => rho[(k, k)].re,
                    State::LowRank(v) => v.matrix().row(k).norm_squared(),
                })
            }
        }
    }
}

/// A model, its initial state, the observable and the final time.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: LindbladModel,
    pub initial: LowRankFactor,
    pub observable: Observable,
    pub t_final: f64,
}

impl Scenario {
    pub fn jaynes_cummings(p: &JcParams, t_final: f64) -> Result<Self> {
        let (model, initial) = build_jaynes_cummings(p)?;
        Ok(Scenario {
            name: "jc".into(),
            model,
            initial,
            observable: Observable::Excited { m: p.m },
            t_final,
        })
    }

    /// Stiff model started in the second level; the observable is `ρ₃₃`.
    pub fn stiff(gamma: f64, h: &ComplexMatrix, t_final: f64) -> Result<Self> {
        let model = build_stiff_decoherence(gamma, h)?;
        let mut psi = vec![c64(0.0, 0.0); h.nrows()];
        psi[1.min(h.nrows() - 1)] = c64(1.0, 0.0);
        Ok(Scenario {
            name: "stiff".into(),
            model,
            initial: LowRankFactor::pure(&psi)?,
            observable: Observable::Population(2.min(h.nrows() - 1)),
            t_final,
        })
    }

    /// Amplitude damping from the excited state, with `γ = 1`.
    pub fn amplitude_damping(t_final: f64) -> Result<Self> {
        Ok(Scenario {
            name: "amplitude-damping".into(),
            model: build_amplitude_damping(1.0)?,
            initial: LowRankFactor::pure(&[c64(0.0, 0.0), c64(1.0, 0.0)])?,
            observable: Observable::Excited { m: 1 },
            t_final,
        })
    }
}

/// `√(Δt Σ_{n=1}^{N} (P_n − P_ref(t_n))²)`.
///
/// `series` holds `P_0, …, P_N`; `reference` may be sampled on a grid that is
/// an integer refinement of the series grid and is subsampled onto it.
pub fn l2_time_error(series: &[f64], dt: f64, reference: &[f64]) -> Result<f64> {
    let n = series.len().checked_sub(1).ok_or_else(|| Error::InvalidParameter("empty series".into()))?;
    let k = reference_stride(n, reference.len())?;
    let sum: f64 = (1..=n).map(|i| (series[i] - reference[i * k]).powi(2)).sum();
    Ok((dt * sum).sqrt())
}

fn reference_stride(steps: usize, reference_len: usize) -> Result<usize> {
    let ref_steps = reference_len.saturating_sub(1);
    if steps == 0 || ref_steps == 0 || !ref_steps.is_multiple_of(steps) {
        return Err(Error::InvalidParameter(format!(
            "reference with {ref_steps} steps cannot be subsampled onto {steps} steps"
        )));
    }
    Ok(ref_steps / steps)
}

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_order(h: &[f64], errors: &[f64]) -> Result<f64> {
    if h.len() != errors.len() || h.len() < 2 {
        return Err(Error::InvalidParameter(
            "order fit needs at least two (h, error) pairs".into(),
        ));
    }
    if h.iter().chain(errors).any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter(
            "order fit needs positive finite step sizes and errors".into(),
        ));
    }
    let xs: Vec<f64> = h.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|x| x.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// One method of a convergence study: integrator, flow and truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub integrator: Integrator,
    pub flow: FlowMethod,
    pub epsilon: EpsilonPolicy,
    pub rank_max: Option<usize>,
    pub pre_truncate: Option<f64>,
}

impl MethodSpec {
    pub fn new(integrator: Integrator, flow: FlowMethod, epsilon: EpsilonPolicy) -> Self {
        let label = match integrator {
            Integrator::IfLowRank => format!("if-lr-{flow}@{epsilon}"),
            other => other.to_string(),
        };
        MethodSpec {
            label,
            integrator,
            flow,
            epsilon,
            rank_max: None,
            pre_truncate: None,
        }
    }

    /// Parses `rk`, `if-dense`, `if-lr-exact` or `if-lr-taylor:k`, each
    /// optionally followed by `@<eps>` or `@dt_pow:<q>`. Low-rank methods
    /// without a suffix use `default_epsilon`.
    pub fn parse(text: &str, default_epsilon: EpsilonPolicy) -> Result<Self> {
        let text = text.trim();
        let (name, eps) = match text.split_once('@') {
            Some((n, e)) => (n.trim(), Some(e.parse::<EpsilonPolicy>()?)),
            None => (text, None),
        };
        let mut spec = match name {
            "rk" => MethodSpec::new(Integrator::Rk, FlowMethod::Exact, EpsilonPolicy::Fixed(0.0)),
            "if-dense" => MethodSpec::new(Integrator::IfDense, FlowMethod::Exact, EpsilonPolicy::Fixed(0.0)),
            _ => match name.strip_prefix("if-lr-") {
                Some(flow) => MethodSpec::new(
                    Integrator::IfLowRank,
                    flow.parse()?,
                    eps.unwrap_or(default_epsilon),
                ),
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown method '{name}' (expected rk, if-dense, if-lr-exact or if-lr-taylor:<k>)"
                    )))
                }
            },
        };
        if eps.is_some() && spec.integrator != Integrator::IfLowRank {
            return Err(Error::InvalidParameter(format!(
                "method '{name}' does not truncate; drop the '@' suffix"
            )));
        }
        spec.label = text.to_string();
        Ok(spec)
    }

    pub fn policy(&self, dt: f64) -> TruncationPolicy {
        TruncationPolicy {
            epsilon: self.epsilon.resolve(dt),
            rank_max: self.rank_max,
            pre_truncate: self.pre_truncate,
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodSpec::parse(s, EpsilonPolicy::Fixed(0.0))
    }
}

/// Observable samples `P_0, …, P_steps` of one run.
pub fn observe(
    scenario: &Scenario,
    method: &MethodSpec,
    tableau: &ButcherTableau,
    steps: usize,
    options: StepOptions,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidParameter("step count must be positive".into()));
    }
    let dt = scenario.t_final / steps as f64;
    let stepper = Stepper::new(
        &scenario.model,
        method.integrator,
        tableau.clone(),
        method.flow,
        method.policy(dt),
        dt,
        options,
    )?;
    let mut samples = Vec::with_capacity(steps + 1);
    let initial = State::initial(method.integrator, &scenario.initial);
    run_trajectory(&stepper, initial, steps, |_, s| {
        samples.push(scenario.observable.eval(s)?);
        Ok(())
    })?;
    Ok(samples)
}

/// What a convergence study measures errors against.
#[derive(Clone)]
pub enum Reference {
    /// Closed-form observable `P(t)`.
    Analytic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Dense IF run with the exact flow at this many steps.
    SelfReference { steps: usize },
}

impl fmt::Debug for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Analytic(_) => f.write_str("Analytic"),
            Reference::SelfReference { steps } => write!(f, "SelfReference({steps})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub method: String,
    pub steps: usize,
    pub dt: f64,
    /// L2-in-time error of the observable.
    pub l2_error: f64,
    /// Error of the observable at the final time.
    pub final_error: f64,
    /// `log(e_prev/e)/log(steps/steps_prev)` against the previous row of the
    /// same method; `None` on the coarsest row or when either error is exact.
    pub observed_order: Option<f64>,
    pub exact: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn method_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ConvergenceRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Observed order at the finest refinement of `method`.
    pub fn finest_order(&self, method: &str) -> Option<f64> {
        self.method_rows(method).last().and_then(|r| r.observed_order)
    }

    /// Least-squares order of the final-time error over all rows of `method`.
    pub fn fitted_final_order(&self, method: &str) -> Result<f64> {
        let (h, e): (Vec<f64>, Vec<f64>) = self.method_rows(method).map(|r| (r.dt, r.final_error)).unzip();
        fitted_order(&h, &e)
    }
}

/// Runs every `(method, steps)` pair, concurrently, and tabulates errors.
/// Rows are ordered by method (input order), then by step count.
pub fn convergence_study(
    scenario: &Scenario,
    methods: &[MethodSpec],
    steps: &[usize],
    reference: &Reference,
    tableau: &ButcherTableau,
) -> Result<ConvergenceTable> {
    convergence_study_with(scenario, methods, steps, reference, tableau, StepOptions::default())
}

/// [`convergence_study`] with explicit step options. The self-reference run
/// always renormalizes and never forces the tableau.
pub fn convergence_study_with(
    scenario: &Scenario,
    methods: &[MethodSpec],
    steps: &[usize],
    reference: &Reference,
    tableau: &ButcherTableau,
    options: StepOptions,
) -> Result<ConvergenceTable> {
    if steps.is_empty() || steps.windows(2).any(|w| w[1] <= w[0]) || steps[0] == 0 {
        return Err(Error::InvalidParameter(
            "step counts must be positive and strictly increasing".into(),
        ));
    }
    let finest = *steps.last().expect("non-empty");
    let reference_series: Option<Vec<f64>> = match reference {
        Reference::Analytic(_) => None,
        Reference::SelfReference { steps: ref_steps } => {
            for &n in steps {
                reference_stride(n, ref_steps + 1)?;
            }
            if *ref_steps < finest {
                return Err(Error::InvalidParameter(format!(
                    "reference run ({ref_steps} steps) is coarser than the finest grid ({finest})"
                )));
            }
            let dense = MethodSpec::new(Integrator::IfDense, FlowMethod::Exact, EpsilonPolicy::Fixed(0.0));
            Some(observe(scenario, &dense, tableau, *ref_steps, StepOptions::default())?)
        }
    };

    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|mi| steps.iter().map(move |&n| (mi, n)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(mi, n)| {
            let series = observe(scenario, &methods[mi], tableau, n, options)?;
            let dt = scenario.t_final / n as f64;
            let reference: Vec<f64> = match (&reference_series, reference) {
                (Some(r), _) => r.clone(),
                (None, Reference::Analytic(f)) => (0..=n).map(|i| f(i as f64 * dt)).collect(),
                (None, Reference::SelfReference { .. }) => unreachable!("reference run computed above"),
            };
            let l2 = l2_time_error(&series, dt, &reference)?;
            let last = *reference.last().expect("non-empty reference");
            let final_error = (series[n] - last).abs();
            Ok((mi, n, dt, l2, final_error))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(results.len());
    for (mi, n, dt, l2, final_error) in results {
        let exact = l2 <= EXACT_ERROR;
        let observed_order = match rows.last() {
            Some(prev) if prev.method == methods[mi].label && !prev.exact && !exact => {
                Some((prev.l2_error / l2).ln() / (n as f64 / prev.steps as f64).ln())
            }
            _ => None,
        };
        rows.push(ConvergenceRow {
            method: methods[mi].label.clone(),
            steps: n,
            dt,
            l2_error: l2,
            final_error,
            observed_order,
            exact,
        });
    }
    Ok(ConvergenceTable { rows })
}
