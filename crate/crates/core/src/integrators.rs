//! One-step maps: the integrating-factor scheme in dense and low-rank form,
//! the plain Runge–Kutta reference, and the Kraus operators of the IF step.
//!
//! Writing the generator as `ρ ↦ (Jρ + ρJ†) + Σ_α γ_α L_α ρ L_α†` and
//! integrating the first part exactly with `U(τ) = e^{Jτ}`, an explicit RK
//! tableau applied to the second part gives
//!
//! ```text
//! ρ⁽ⁱ⁾ = U(c_iΔt) ρ₀ U(c_iΔt)† + Δt Σ_{j<i} a_ij U((c_i−c_j)Δt) 𝓛_L ρ⁽ʲ⁾ U((c_i−c_j)Δt)†
//! ρ₁   = U(Δt) ρ₀ U(Δt)† + Δt Σ_i b_i U((1−c_i)Δt) 𝓛_L ρ⁽ⁱ⁾ U((1−c_i)Δt)†
//! ```
//!
//! which is a sum of `K ρ K†` terms whenever `A, b ≥ 0`. The trace is restored
//! once per step; stage values are never renormalized.

use crate::error::{Error, Result};
use crate::flow::FlowOperator;
use crate::linalg::{c64, ensure_finite, hermitian_part, trace, ComplexMatrix};
use crate::model::{dissipator_columns, jump_map, lindblad_rhs, LindbladModel};
use crate::tableau::{require_cp_valid, ButcherTableau};
use crate::truncation::{truncate, truncate_with_info, LowRankFactor, TruncationPolicy};

/// Allowed drift of `trace(ρ₀)` from one when renormalization is enabled.
const TRACE_INPUT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOptions {
    /// Divide by the trace at the end of the step and symmetrize dense output.
    /// Disable to probe the linear map itself (Choi matrix, Kraus comparison).
    pub renormalize: bool,
    /// Run dense schemes with a tableau that fails the CP check.
    pub force_tableau: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            renormalize: true,
            force_tableau: false,
        }
    }
}

impl StepOptions {
    /// The un-normalized linear map.
    pub fn linear() -> Self {
        StepOptions {
            renormalize: false,
            force_tableau: false,
        }
    }
}

/// `ρ / trace(ρ)`.
pub fn normalize_trace(rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    let tr = trace(rho).re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::NonPositiveTrace(tr));
    }
    Ok(rho.unscale(tr))
}

/// `V / ‖V‖_F`, the factor form of `ρ / trace(ρ)`.
pub fn normalize_factor(v: &LowRankFactor) -> Result<LowRankFactor> {
    let norm = v.matrix().norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::NonPositiveTrace(norm * norm));
    }
    LowRankFactor::new(v.matrix().unscale(norm))
}

fn check_step_size(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive and finite, got {dt}"
        )));
    }
    Ok(())
}

fn check_dim(model: &LindbladModel, m: &ComplexMatrix, context: &'static str) -> Result<()> {
    if m.nrows() != model.dim() {
        return Err(Error::DimensionMismatch {
            context,
            expected: model.dim(),
            found: m.nrows(),
        });
    }
    Ok(())
}

fn check_unit_trace(rho: &ComplexMatrix) -> Result<()> {
    let tr = trace(rho).re;
    if (tr - 1.0).abs() > TRACE_INPUT_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "density matrix must have unit trace, got {tr}"
        )));
    }
    Ok(())
}

fn finish_dense(rho: ComplexMatrix, options: StepOptions) -> Result<ComplexMatrix> {
    ensure_finite(&rho, "step output")?;
    if options.renormalize {
        normalize_trace(&hermitian_part(&rho))
    } else {
        Ok(rho)
    }
}

/// One dense integrating-factor step.
pub fn if_step_dense(
    model: &LindbladModel,
    flow: &FlowOperator,
    tab: &ButcherTableau,
    dt: f64,
    rho0: &ComplexMatrix,
    options: StepOptions,
) -> Result<ComplexMatrix> {
    check_step_size(dt)?;
    check_dim(model, rho0, "if_step_dense")?;
    if rho0.ncols() != rho0.nrows() {
        return Err(Error::NotSquare {
            rows: rho0.nrows(),
            cols: rho0.ncols(),
        });
    }
    require_cp_valid(tab, options.force_tableau)?;
    if options.renormalize {
        check_unit_trace(rho0)?;
    }
    let mut rho1 = flow.conjugate_offset(1.0, dt, rho0)?;
    if model.jumps().is_empty() {
        return finish_dense(rho1, options);
    }

    let c = tab.c();
    let s = tab.stages();
    // 𝓛_L ρ⁽ʲ⁾ for each finished stage.
    let mut jumped: Vec<ComplexMatrix> = Vec::with_capacity(s);
    for i in 0..s {
        let mut stage = flow.conjugate_offset(c[i], dt, rho0)?;
        for (j, lj) in jumped.iter().enumerate() {
            let a = tab.a(i, j);
            if a != 0.0 {
                stage += flow.conjugate_offset(c[i] - c[j], dt, lj)?.scale(dt * a);
            }
        }
        ensure_finite(&stage, "stage value")?;
        jumped.push(jump_map(model, &stage)?);
    }
    for (i, li) in jumped.iter().enumerate() {
        let b = tab.b()[i];
        if b != 0.0 {
            rho1 += flow.conjugate_offset(1.0 - c[i], dt, li)?.scale(dt * b);
        }
    }
    finish_dense(rho1, options)
}

/// Diagnostics of one low-rank step.
#[derive(Debug, Clone)]
pub struct LowRankStep {
    pub factor: LowRankFactor,
    /// Rank of each stage factor `V⁽ⁱ⁾` after truncation.
    pub stage_ranks: Vec<usize>,
    /// Column count of the final `W` before truncation.
    pub final_columns: usize,
    /// Widths of the column blocks of the final `W`, in assembly order.
    pub final_blocks: Vec<usize>,
    /// `‖WW† − ŴŴ†‖_F²` of the final truncation.
    pub discarded_energy: f64,
}

/// One low-rank integrating-factor step on the factor `V₀` of `ρ₀ = V₀V₀†`.
pub fn if_step_lowrank(
    model: &LindbladModel,
    flow: &FlowOperator,
    tab: &ButcherTableau,
    dt: f64,
    policy: &TruncationPolicy,
    v0: &LowRankFactor,
    options: StepOptions,
) -> Result<LowRankFactor> {
    if_step_lowrank_detailed(model, flow, tab, dt, policy, v0, options).map(|s| s.factor)
}

pub fn if_step_lowrank_detailed(
    model: &LindbladModel,
    flow: &FlowOperator,
    tab: &ButcherTableau,
    dt: f64,
    policy: &TruncationPolicy,
    v0: &LowRankFactor,
    options: StepOptions,
) -> Result<LowRankStep> {
    check_step_size(dt)?;
    check_dim(model, v0.matrix(), "if_step_lowrank")?;
    policy.validate()?;
    // √(weight) columns need non-negative weights, forced or not.
    require_cp_valid(tab, false)?;
    if v0.trace() == 0.0 {
        return Err(Error::ZeroFactor);
    }
    if options.renormalize && (v0.trace() - 1.0).abs() > TRACE_INPUT_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "factor must have unit trace, got {}",
            v0.trace()
        )));
    }
    let pre = policy.pre_policy();
    let c = tab.c();
    let s = tab.stages();
    let v0m = v0.matrix();
    let has_jumps = !model.jumps().is_empty();

    // √(weight·Δt) U(offset·Δt) L V columns, optionally pre-truncated.
    let jump_block = |v: &ComplexMatrix, weight: f64, offset: f64| -> Result<ComplexMatrix> {
        let d = dissipator_columns(model, v, dt * weight)?;
        let pd = flow.propagate_offset(offset, dt, &d)?;
        match &pre {
            Some(p) if pd.ncols() > 0 => Ok(truncate(&pd, p)?.into_matrix()),
            _ => Ok(pd),
        }
    };

    let mut stages: Vec<ComplexMatrix> = Vec::with_capacity(s);
    let mut stage_ranks = Vec::with_capacity(s);
    if has_jumps {
        for i in 0..s {
            let mut blocks = vec![flow.propagate_offset(c[i], dt, v0m)?];
            for (j, vj) in stages.iter().enumerate() {
                let a = tab.a(i, j);
                if a > 0.0 {
                    blocks.push(jump_block(vj, a, c[i] - c[j])?);
                }
            }
            let w = hstack(&blocks);
            ensure_finite(&w, "stage matrix")?;
            let vi = truncate(&w, policy)?;
            stage_ranks.push(vi.rank());
            stages.push(vi.into_matrix());
        }
    }

    let mut blocks = vec![flow.propagate_offset(1.0, dt, v0m)?];
    for (i, vi) in stages.iter().enumerate() {
        let b = tab.b()[i];
        if b > 0.0 {
            blocks.push(jump_block(vi, b, 1.0 - c[i])?);
        }
    }
    let final_blocks: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
    let w = hstack(&blocks);
    ensure_finite(&w, "final stage matrix")?;
    let (v1, info) = truncate_with_info(&w, policy)?;
    if info.degenerate {
        return Err(Error::ZeroFactor);
    }
    let factor = if options.renormalize {
        normalize_factor(&v1)?
    } else {
        v1
    };
    Ok(LowRankStep {
        factor,
        stage_ranks,
        final_columns: w.ncols(),
        final_blocks,
        discarded_energy: info.discarded_energy,
    })
}

fn hstack(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let rows = blocks[0].nrows();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.columns_mut(offset, b.ncols()).copy_from(b);
        offset += b.ncols();
    }
    out
}

/// Classic explicit RK applied directly to the Lindblad right-hand side.
/// Not completely positive; kept as the reference the IF scheme is measured
/// against. With `renormalize` the output is symmetrized and trace-normalized,
/// which cannot repair a negative eigenvalue.
pub fn rk_step_dense(
    model: &LindbladModel,
    tab: &ButcherTableau,
    dt: f64,
    rho0: &ComplexMatrix,
    options: StepOptions,
) -> Result<ComplexMatrix> {
    check_step_size(dt)?;
    check_dim(model, rho0, "rk_step_dense")?;
    let s = tab.stages();
    let mut slopes: Vec<ComplexMatrix> = Vec::with_capacity(s);
    for i in 0..s {
        let mut y = rho0.clone();
        for (j, kj) in slopes.iter().enumerate() {
            let a = tab.a(i, j);
            if a != 0.0 {
                y += kj.scale(dt * a);
            }
        }
        let k = lindblad_rhs(model, &y)?;
        ensure_finite(&k, "RK stage slope")?;
        slopes.push(k);
    }
    let mut rho1 = rho0.clone();
    for (i, k) in slopes.iter().enumerate() {
        let b = tab.b()[i];
        if b != 0.0 {
            rho1 += k.scale(dt * b);
        }
    }
    finish_dense(rho1, options)
}

/// Kraus operators `K_l` of the un-normalized IF step, `ρ ↦ Σ_l K_l ρ K_l†`.
#[derive(Debug, Clone)]
pub struct KrausList {
    pub ops: Vec<ComplexMatrix>,
}

impl KrausList {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(rho.nrows(), rho.ncols());
        for k in &self.ops {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// `Σ_l K_l† K_l`; the identity for an exactly trace-preserving map.
    pub fn gram(&self) -> ComplexMatrix {
        let n = self.ops.first().map_or(0, |k| k.ncols());
        let mut out = ComplexMatrix::zeros(n, n);
        for k in &self.ops {
            out += k.adjoint() * k;
        }
        out
    }
}

/// Number of Kraus operators produced by [`extract_kraus`]:
/// `|𝒦⁽ⁱ⁾| = 1 + n_L Σ_{j<i, a_ij>0} |𝒦⁽ʲ⁾|` and `1 + n_L Σ_{b_i>0} |𝒦⁽ⁱ⁾|`.
pub fn kraus_count(tab: &ButcherTableau, jumps: usize) -> usize {
    let s = tab.stages();
    let mut sizes: Vec<usize> = Vec::with_capacity(s);
    for i in 0..s {
        let inner: usize = (0..i).filter(|&j| tab.a(i, j) > 0.0).map(|j| sizes[j]).sum();
        sizes.push(1 + jumps * inner);
    }
    let inner: usize = (0..s).filter(|&i| tab.b()[i] > 0.0).map(|i| sizes[i]).sum();
    1 + jumps * inner
}

/// Expands the stage recursion into explicit Kraus operators.
pub fn extract_kraus(
    model: &LindbladModel,
    flow: &FlowOperator,
    tab: &ButcherTableau,
    dt: f64,
) -> Result<KrausList> {
    check_step_size(dt)?;
    require_cp_valid(tab, false)?;
    let c = tab.c();
    let s = tab.stages();
    let mut stage_sets: Vec<Vec<ComplexMatrix>> = Vec::with_capacity(s);

    let weighted = |set: &mut Vec<ComplexMatrix>, source: &[ComplexMatrix], weight: f64, offset: f64| -> Result<()> {
        let u = flow.propagator(offset, dt)?;
        for jump in model.jumps() {
            let ul = &u * jump.operator() * c64((dt * weight * jump.rate()).sqrt(), 0.0);
            set.extend(source.iter().map(|k| &ul * k));
        }
        Ok(())
    };

    for i in 0..s {
        let mut set = vec![flow.propagator(c[i], dt)?];
        for j in 0..i {
            let a = tab.a(i, j);
            if a > 0.0 {
                weighted(&mut set, &stage_sets[j], a, c[i] - c[j])?;
            }
        }
        stage_sets.push(set);
    }
    let mut ops = vec![flow.propagator(1.0, dt)?];
    for (i, set) in stage_sets.iter().enumerate() {
        let b = tab.b()[i];
        if b > 0.0 {
            weighted(&mut ops, set, b, 1.0 - c[i])?;
        }
    }
    Ok(KrausList { ops })
}
