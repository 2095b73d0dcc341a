//! Fixed-step trajectories for the three integrators.

use std::fmt;
use std::str::FromStr;

use crate::diagnostics::{cptp_report, cptp_report_factor, CptpReport};
use crate::error::{Error, Result};
use crate::flow::{FlowMethod, FlowOperator};
use crate::integrators::{if_step_dense, if_step_lowrank, normalize_factor, normalize_trace, rk_step_dense, StepOptions};
use crate::linalg::ComplexMatrix;
use crate::model::LindbladModel;
use crate::tableau::{require_cp_valid, ButcherTableau};
use crate::truncation::{LowRankFactor, TruncationPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Plain explicit RK on the full right-hand side (not CP).
    Rk,
    IfDense,
    IfLowRank,
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Rk => "rk",
            Integrator::IfDense => "if-dense",
            Integrator::IfLowRank => "if-lowrank",
        })
    }
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rk" => Ok(Integrator::Rk),
            "if-dense" => Ok(Integrator::IfDense),
            "if-lowrank" | "if-lr" => Ok(Integrator::IfLowRank),
            other => Err(Error::InvalidParameter(format!(
                "unknown integrator '{other}' (expected rk, if-dense or if-lowrank)"
            ))),
        }
    }
}

/// How the truncation cutoff is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonPolicy {
    Fixed(f64),
    /// `ε = Δt^q`, fixed at the start of the run.
    DtPow(f64),
}

impl EpsilonPolicy {
    pub fn resolve(&self, dt: f64) -> f64 {
        match *self {
            EpsilonPolicy::Fixed(eps) => eps,
            EpsilonPolicy::DtPow(q) => dt.powf(q),
        }
    }
}

impl fmt::Display for EpsilonPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonPolicy::Fixed(eps) => write!(f, "{eps:e}"),
            EpsilonPolicy::DtPow(q) => write!(f, "dt_pow:{q}"),
        }
    }
}

impl FromStr for EpsilonPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |t: &str| {
            t.trim().parse::<f64>().map_err(|_| {
                Error::InvalidParameter(format!("malformed number '{t}' in epsilon policy"))
            })
        };
        let policy = match s.strip_prefix("dt_pow:") {
            Some(q) => EpsilonPolicy::DtPow(parse(q)?),
            None => EpsilonPolicy::Fixed(parse(s.strip_prefix("fixed:").unwrap_or(s))?),
        };
        match policy {
            EpsilonPolicy::Fixed(e) if !(e >= 0.0 && e.is_finite()) => Err(Error::InvalidParameter(
                format!("epsilon must be finite and non-negative, got {e}"),
            )),
            EpsilonPolicy::DtPow(q) if !(q > 0.0 && q.is_finite()) => Err(Error::InvalidParameter(
                format!("dt_pow exponent must be positive, got {q}"),
            )),
            p => Ok(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Dense(ComplexMatrix),
    LowRank(LowRankFactor),
}

impl State {
    /// Initial state in the representation an integrator works on.
    pub fn initial(integrator: Integrator, v: &LowRankFactor) -> Self {
        match integrator {
            Integrator::IfLowRank => State::LowRank(v.clone()),
            _ => State::Dense(v.density()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            State::Dense(rho) => rho.nrows(),
            State::LowRank(v) => v.dim(),
        }
    }

    pub fn density(&self) -> ComplexMatrix {
        match self {
            State::Dense(rho) => rho.clone(),
            State::LowRank(v) => v.density(),
        }
    }

    /// Column count of a factor, or the numerical rank of a dense state.
    pub fn report(&self) -> Result<CptpReport> {
        match self {
            State::Dense(rho) => cptp_report(rho, None),
            State::LowRank(v) => cptp_report_factor(v, None),
        }
    }

    pub fn factor_rank(&self) -> Option<usize> {
        match self {
            State::LowRank(v) => Some(v.rank()),
            State::Dense(_) => None,
        }
    }

    pub fn normalized(&self) -> Result<State> {
        Ok(match self {
            State::Dense(rho) => State::Dense(normalize_trace(rho)?),
            State::LowRank(v) => State::LowRank(normalize_factor(v)?),
        })
    }
}

/// Everything needed to advance a state by one fixed step.
pub struct Stepper<'a> {
    model: &'a LindbladModel,
    flow: FlowOperator,
    tableau: ButcherTableau,
    integrator: Integrator,
    policy: TruncationPolicy,
    dt: f64,
    options: StepOptions,
}

impl<'a> Stepper<'a> {
    pub fn new(
        model: &'a LindbladModel,
        integrator: Integrator,
        tableau: ButcherTableau,
        flow_method: FlowMethod,
        policy: TruncationPolicy,
        dt: f64,
        options: StepOptions,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive and finite, got {dt}"
            )));
        }
        policy.validate()?;
        if integrator != Integrator::Rk {
            require_cp_valid(&tableau, options.force_tableau && integrator == Integrator::IfDense)?;
        }
        let flow = FlowOperator::new(model, flow_method);
        if integrator != Integrator::Rk {
            flow.warm(dt, tableau.flow_coefficients())?;
        }
        Ok(Stepper {
            model,
            flow,
            tableau,
            integrator,
            policy,
            dt,
            options,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn flow(&self) -> &FlowOperator {
        &self.flow
    }

    pub fn tableau(&self) -> &ButcherTableau {
        &self.tableau
    }

    pub fn step(&self, state: &State) -> Result<State> {
        match (self.integrator, state) {
            (Integrator::Rk, State::Dense(rho)) => Ok(State::Dense(rk_step_dense(
                self.model,
                &self.tableau,
                self.dt,
                rho,
                self.options,
            )?)),
            (Integrator::IfDense, State::Dense(rho)) => Ok(State::Dense(if_step_dense(
                self.model,
                &self.flow,
                &self.tableau,
                self.dt,
                rho,
                self.options,
            )?)),
            (Integrator::IfLowRank, State::LowRank(v)) => Ok(State::LowRank(if_step_lowrank(
                self.model,
                &self.flow,
                &self.tableau,
                self.dt,
                &self.policy,
                v,
                self.options,
            )?)),
            (integrator, _) => Err(Error::InvalidParameter(format!(
                "state representation does not match integrator {integrator}"
            ))),
        }
    }
}

/// Runs `steps` steps from `initial`, calling `observer(n, state)` for
/// `n = 0, …, steps`. Returns the final state.
pub fn run_trajectory<F>(stepper: &Stepper<'_>, initial: State, steps: usize, mut observer: F) -> Result<State>
where
    F: FnMut(usize, &State) -> Result<()>,
{
    let mut state = initial;
    observer(0, &state)?;
    for n in 1..=steps {
        state = stepper.step(&state)?;
        observer(n, &state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, from_real_rows};

    fn damping() -> LindbladModel {
        LindbladModel::new(
            ComplexMatrix::zeros(2, 2),
            vec![(1.0, from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]))],
        )
        .unwrap()
    }

    #[test]
    fn parse_names() {
        assert_eq!("if-dense".parse::<Integrator>().unwrap(), Integrator::IfDense);
        assert_eq!("if-lowrank".parse::<Integrator>().unwrap(), Integrator::IfLowRank);
        assert!("euler".parse::<Integrator>().is_err());
        assert_eq!("1e-9".parse::<EpsilonPolicy>().unwrap(), EpsilonPolicy::Fixed(1e-9));
        assert_eq!("fixed:0".parse::<EpsilonPolicy>().unwrap(), EpsilonPolicy::Fixed(0.0));
        assert_eq!("dt_pow:5".parse::<EpsilonPolicy>().unwrap(), EpsilonPolicy::DtPow(5.0));
        assert!("dt_pow:x".parse::<EpsilonPolicy>().is_err());
        assert!("-1".parse::<EpsilonPolicy>().is_err());
        assert!((EpsilonPolicy::DtPow(5.0).resolve(0.1) - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn trajectory_of_amplitude_damping() {
        let model = damping();
        let v = LowRankFactor::pure(&[c64(0.0, 0.0), c64(1.0, 0.0)]).unwrap();
        for integrator in [Integrator::Rk, Integrator::IfDense, Integrator::IfLowRank] {
            let stepper = Stepper::new(
                &model,
                integrator,
                ButcherTableau::rk4(),
                FlowMethod::Exact,
                TruncationPolicy::exact(),
                0.01,
                StepOptions::linear(),
            )
            .unwrap();
            let mut seen = Vec::new();
            let last = run_trajectory(&stepper, State::initial(integrator, &v), 100, |n, s| {
                seen.push(n);
                assert_eq!(s.dim(), 2);
                Ok(())
            })
            .unwrap();
            assert_eq!(seen.len(), 101);
            let p = last.density()[(1, 1)].re;
            assert!((p - (-1.0f64).exp()).abs() < 1e-9, "{integrator}: {p}");
        }
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let model = damping();
        let stepper = Stepper::new(
            &model,
            Integrator::IfLowRank,
            ButcherTableau::rk4(),
            FlowMethod::Exact,
            TruncationPolicy::exact(),
            0.1,
            StepOptions::default(),
        )
        .unwrap();
        assert!(stepper.step(&State::Dense(ComplexMatrix::identity(2, 2))).is_err());
        assert!(Stepper::new(&model, Integrator::Rk, ButcherTableau::rk4(), FlowMethod::Exact, TruncationPolicy::exact(), 0.0, StepOptions::default()).is_err());
    }
}
