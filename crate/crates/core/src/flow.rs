//! The flow `U(τ) = e^{Jτ}` of `dV/dt = J V`, exact or by truncated Taylor series.
//!
//! Applying `U` to a factor `V` and conjugating a matrix `ρ ↦ U ρ U†` are the
//! only two uses. Either way the result stays in Kraus form, so an
//! approximate `U` keeps the step completely positive.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::linalg::{c64, identity, matexp, matmul, ComplexMatrix, Operator};
use crate::model::{effective_generator, EffectiveGenerator, LindbladModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMethod {
    /// Dense propagators from the matrix exponential, cached per offset.
    Exact,
    /// `Σ_{m=0}^{k} (τ^m/m!) J^m`, applied on the fly.
    Taylor(usize),
}

impl fmt::Display for FlowMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowMethod::Exact => write!(f, "exact"),
            FlowMethod::Taylor(k) => write!(f, "taylor:{k}"),
        }
    }
}

impl FromStr for FlowMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "exact" {
            return Ok(FlowMethod::Exact);
        }
        if let Some(order) = s.strip_prefix("taylor:") {
            return match order.trim().parse::<usize>() {
                Ok(k) if k >= 1 => Ok(FlowMethod::Taylor(k)),
                _ => Err(Error::InvalidParameter(format!(
                    "Taylor order must be a positive integer, got '{order}'"
                ))),
            };
        }
        Err(Error::InvalidParameter(format!(
            "unknown flow method '{s}' (expected exact or taylor:<k>)"
        )))
    }
}

// (Δt bits, coefficient bits)
type CacheKey = (u64, u64);

pub struct FlowOperator {
    generator: EffectiveGenerator,
    op: Operator,
    method: FlowMethod,
    cache: Mutex<HashMap<CacheKey, Arc<ComplexMatrix>>>,
}

impl fmt::Debug for FlowOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowOperator")
            .field("dim", &self.generator.dim())
            .field("method", &self.method)
            .field("cached", &self.cached_offsets())
            .finish()
    }
}

impl FlowOperator {
    pub fn new(model: &LindbladModel, method: FlowMethod) -> Self {
        Self::from_generator(effective_generator(model), method)
    }

    pub fn from_generator(generator: EffectiveGenerator, method: FlowMethod) -> Self {
        let op = Operator::new(generator.matrix().clone());
        FlowOperator {
            generator,
            op,
            method,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn method(&self) -> FlowMethod {
        self.method
    }

    pub fn generator(&self) -> &EffectiveGenerator {
        &self.generator
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// Number of dense propagators held by the cache.
    pub fn cached_offsets(&self) -> usize {
        self.cache.lock().expect("flow cache poisoned").len()
    }

    /// `U(τ) M` for `τ ≥ 0`.
    pub fn propagate(&self, tau: f64, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        forward(tau)?;
        self.propagate_offset(1.0, tau, m)
    }

    /// `U(coeff·Δt) M`; the exact variant caches by the pair `(Δt, coeff)`.
    ///
    /// A negative `coeff` evaluates the backward flow. It is still a single
    /// Kraus operator, but it amplifies the dissipative part of `J`; only
    /// tableaus with `c_i < c_j` for a used pair need it.
    pub fn propagate_offset(&self, coeff: f64, dt: f64, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        let tau = finite_offset(coeff, dt)?;
        if m.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "flow propagate",
                expected: self.dim(),
                found: m.nrows(),
            });
        }
        if tau == 0.0 || m.ncols() == 0 {
            return Ok(m.clone());
        }
        match self.method {
            FlowMethod::Exact => Ok(matmul(&*self.exact_propagator(coeff, dt)?, m)),
            FlowMethod::Taylor(order) => Ok(self.taylor(order, tau, m)),
        }
    }

    /// `Û(τ) ρ Û†` for `τ ≥ 0`.
    pub fn conjugate(&self, tau: f64, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        forward(tau)?;
        self.conjugate_offset(1.0, tau, rho)
    }

    pub fn conjugate_offset(&self, coeff: f64, dt: f64, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::NotSquare {
                rows: rho.nrows(),
                cols: rho.ncols(),
            });
        }
        // Û ρ Û† = (Û (Û ρ)†)†
        let left = self.propagate_offset(coeff, dt, rho)?;
        Ok(self.propagate_offset(coeff, dt, &left.adjoint())?.adjoint())
    }

    /// The dense matrix `Û(coeff·Δt)`. Cached for the exact method only.
    pub fn propagator(&self, coeff: f64, dt: f64) -> Result<ComplexMatrix> {
        let tau = finite_offset(coeff, dt)?;
        if tau == 0.0 {
            return Ok(identity(self.dim()));
        }
        match self.method {
            FlowMethod::Exact => Ok((*self.exact_propagator(coeff, dt)?).clone()),
            FlowMethod::Taylor(order) => Ok(self.taylor(order, tau, &identity(self.dim()))),
        }
    }

    /// Fills the cache for the given offsets so later use is read-only.
    pub fn warm(&self, dt: f64, coeffs: impl IntoIterator<Item = f64>) -> Result<()> {
        if self.method != FlowMethod::Exact {
            return Ok(());
        }
        for coeff in coeffs {
            if finite_offset(coeff, dt)? != 0.0 {
                self.exact_propagator(coeff, dt)?;
            }
        }
        Ok(())
    }

    fn exact_propagator(&self, coeff: f64, dt: f64) -> Result<Arc<ComplexMatrix>> {
        let key = (dt.to_bits(), coeff.to_bits());
        if let Some(u) = self.cache.lock().expect("flow cache poisoned").get(&key) {
            return Ok(Arc::clone(u));
        }
        let u = Arc::new(matexp(&self.generator.matrix().scale(coeff * dt))?);
        let mut cache = self.cache.lock().expect("flow cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(u)))
    }

    fn taylor(&self, order: usize, tau: f64, m: &ComplexMatrix) -> ComplexMatrix {
        let mut term = m.clone();
        let mut sum = m.clone();
        for k in 1..=order {
            term = self.op.apply(&term) * c64(tau / k as f64, 0.0);
            sum += &term;
        }
        sum
    }
}

fn finite_offset(coeff: f64, dt: f64) -> Result<f64> {
    let tau = coeff * dt;
    if !tau.is_finite() {
        return Err(Error::NonFinite("flow offset"));
    }
    Ok(tau)
}

fn forward(tau: f64) -> Result<()> {
    if tau < 0.0 {
        return Err(Error::NegativeOffset(tau));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig_of_hermitian_part, from_real_rows, real_diagonal, trace};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize, jumps: usize) -> LindbladModel {
        let a = random_matrix(rng, n, n);
        let h = (&a + a.adjoint()).scale(0.5);
        let js = (0..jumps).map(|_| (0.5, random_matrix(rng, n, n))).collect();
        LindbladModel::new(h, js).unwrap()
    }

    #[test]
    fn parses_methods() {
        assert_eq!("exact".parse::<FlowMethod>().unwrap(), FlowMethod::Exact);
        assert_eq!("taylor:4".parse::<FlowMethod>().unwrap(), FlowMethod::Taylor(4));
        assert!("taylor:0".parse::<FlowMethod>().is_err());
        assert!("krylov".parse::<FlowMethod>().is_err());
        assert_eq!(FlowMethod::Taylor(6).to_string(), "taylor:6");
    }

    #[test]
    fn zero_offset_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng, 4, 1);
        let v = random_matrix(&mut rng, 4, 2);
        for method in [FlowMethod::Exact, FlowMethod::Taylor(3)] {
            let flow = FlowOperator::new(&model, method);
            assert_eq!(flow.propagate(0.0, &v).unwrap(), v);
            let rho = &v * v.adjoint();
            assert_eq!(flow.conjugate(0.0, &rho).unwrap(), rho);
        }
    }

    #[test]
    fn unitary_flow_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = random_model(&mut rng, 5, 0);
        let flow = FlowOperator::new(&model, FlowMethod::Exact);
        let v = random_matrix(&mut rng, 5, 2);
        let out = flow.propagate(1.7, &v).unwrap();
        assert!((out.norm() - v.norm()).abs() < 1e-13);
    }

    #[test]
    fn negative_offsets_and_bad_shapes_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flow = FlowOperator::new(&random_model(&mut rng, 3, 1), FlowMethod::Exact);
        let v = random_matrix(&mut rng, 3, 1);
        assert!(matches!(flow.propagate(-0.1, &v), Err(Error::NegativeOffset(_))));
        assert!(matches!(
            flow.conjugate(-0.1, &identity(3)),
            Err(Error::NegativeOffset(_))
        ));
        // The offset form evaluates the backward flow: U(−τ)U(τ) = I.
        let back = flow.propagate_offset(-1.0, 0.1, &flow.propagate(0.1, &v).unwrap()).unwrap();
        assert!((back - &v).norm() < 1e-13);
        assert!(matches!(
            flow.propagate(0.1, &random_matrix(&mut rng, 4, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diagonal_conjugation_closed_form() {
        let model = LindbladModel::new(
            ComplexMatrix::zeros(2, 2),
            vec![(2.0, real_diagonal(&[1.0, 2f64.sqrt()]))],
        )
        .unwrap();
        // J = −½·2·diag(1, 2) = diag(−1, −2)
        let flow = FlowOperator::new(&model, FlowMethod::Exact);
        let out = flow.conjugate(1.0, &identity(2)).unwrap();
        let expected = real_diagonal(&[(-2.0f64).exp(), (-4.0f64).exp()]);
        assert!((out - expected).norm() < 1e-15);
    }

    #[test]
    fn taylor_error_scales_with_order_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = random_model(&mut rng, 6, 2);
        let v = random_matrix(&mut rng, 6, 2);
        let exact = FlowOperator::new(&model, FlowMethod::Exact);
        for k in 1..=4 {
            let taylor = FlowOperator::new(&model, FlowMethod::Taylor(k));
            let taus: Vec<f64> = (0..4).map(|i| 0.05 / 2f64.powi(i)).collect();
            let errs: Vec<f64> = taus
                .iter()
                .map(|&t| {
                    (taylor.propagate(t, &v).unwrap() - exact.propagate(t, &v).unwrap()).norm()
                })
                .collect();
            let slope = log_log_slope(&taus, &errs);
            assert!((slope - (k as f64 + 1.0)).abs() <= 0.3, "k={k} slope={slope}");
        }
    }

    fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        num / den
    }

    #[test]
    fn conjugation_preserves_positivity_and_trace_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_model(&mut rng, 5, 2);
        for method in [FlowMethod::Exact, FlowMethod::Taylor(2)] {
            let flow = FlowOperator::new(&model, method);
            for _ in 0..10 {
                let v = random_matrix(&mut rng, 5, 2);
                let rho = &v * v.adjoint();
                let out = flow.conjugate(0.3, &rho).unwrap();
                let min = eig_of_hermitian_part(&out).values[0];
                assert!(min >= -1e-12 * rho.norm());
                if method == FlowMethod::Exact {
                    assert!(trace(&out).re <= trace(&rho).re + 1e-12);
                }
            }
        }
    }

    #[test]
    fn semigroup_and_factor_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = random_model(&mut rng, 4, 1);
        let flow = FlowOperator::new(&model, FlowMethod::Exact);
        let v = random_matrix(&mut rng, 4, 2);
        let rho = &v * v.adjoint();
        let two = flow
            .conjugate(0.2, &flow.conjugate(0.3, &rho).unwrap())
            .unwrap();
        let one = flow.conjugate(0.5, &rho).unwrap();
        assert!((two - &one).norm() < 1e-11);

        let pv = flow.propagate(0.5, &v).unwrap();
        assert!((&pv * pv.adjoint() - one).norm() < 1e-12);
    }

    #[test]
    fn cache_holds_one_propagator_per_offset() {
        let model = LindbladModel::unitary(from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])).unwrap();
        let flow = FlowOperator::new(&model, FlowMethod::Exact);
        let v = identity(2);
        let dt = 0.1;
        for coeff in [0.0, 0.5, 0.5, 1.0, 0.5, 1.0] {
            flow.propagate_offset(coeff, dt, &v).unwrap();
        }
        assert_eq!(flow.cached_offsets(), 2);
        flow.warm(0.2, [0.0, 0.5, 1.0]).unwrap();
        assert_eq!(flow.cached_offsets(), 4);

        let taylor = FlowOperator::new(&model, FlowMethod::Taylor(4));
        taylor.propagate(0.1, &v).unwrap();
        taylor.warm(0.1, [1.0]).unwrap();
        assert_eq!(taylor.cached_offsets(), 0);
    }
}
