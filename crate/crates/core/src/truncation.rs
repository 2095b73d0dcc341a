//! Rank truncation of `R = W W†` computed on the factor `W` alone.
//!
//! `W Π = Q R` (pivoted QR), then the eigen-decomposition `R R† = Û Λ Û†` of
//! the small Gram matrix gives `Ŵ = Q Û(:, 1:r) Λ(1:r, 1:r)^{1/2}`, the same
//! factor as the SVD route `R = Û Σ V̂†` with `Λ = Σ²`. The kept rank is `r = min(r_ε, r_max)`
//! where `r_ε` is the smallest rank whose discarded tail of singular values
//! of `R` (eigenvalues `λ_j = σ_j(W)²`) satisfies `Σ_{j>r} λ_j² < ε²`, that
//! is `‖W W† − Ŵ Ŵ†‖_F < ε`. Missing singular values (k < N) count as zero.
//!
//! The truncated matrix equals `P R P†` with `P` the orthogonal projector on
//! the kept eigenvectors, so truncation is itself a one-operator Kraus map
//! ([`kraus_witness`]).

use crate::error::{Error, Result};
use crate::linalg::{
    c64, eig_of_hermitian_part, ensure_finite, ensure_square, frobenius, matmul, pivoted_qr,
    ComplexMatrix, ZERO,
};

/// Relative tolerance on negative eigenvalues accepted by [`kraus_witness`].
const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    /// Energy cutoff `ε ≥ 0` on the Frobenius norm of the discarded part of `W W†`.
    pub epsilon: f64,
    /// Rank cap; `None` is unbounded.
    pub rank_max: Option<usize>,
    /// Cutoff for the optional extra truncation of each `O(√Δt)` column block
    /// before stage assembly. `None` disables it.
    pub pre_truncate: Option<f64>,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self::exact()
    }
}

impl TruncationPolicy {
    /// No truncation at all (`ε = 0`, unbounded rank).
    pub fn exact() -> Self {
        TruncationPolicy {
            epsilon: 0.0,
            rank_max: None,
            pre_truncate: None,
        }
    }

    pub fn with_epsilon(epsilon: f64) -> Self {
        TruncationPolicy {
            epsilon,
            ..Self::exact()
        }
    }

    pub fn with_rank_max(rank_max: usize) -> Self {
        TruncationPolicy {
            rank_max: Some(rank_max),
            ..Self::exact()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        if self.rank_max == Some(0) {
            return Err(Error::InvalidParameter("rmax must be at least 1".into()));
        }
        if let Some(pre) = self.pre_truncate {
            if !(pre >= 0.0 && pre.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "pre-truncation epsilon must be finite and non-negative, got {pre}"
                )));
            }
        }
        Ok(())
    }

    /// Policy used for the pre-truncation of a single column block.
    pub fn pre_policy(&self) -> Option<TruncationPolicy> {
        self.pre_truncate.map(|eps| TruncationPolicy {
            epsilon: eps,
            rank_max: None,
            pre_truncate: None,
        })
    }

    /// Rank kept for the eigenvalues `λ` of `W W†`, sorted in non-increasing order.
    pub fn kept_rank(&self, eigenvalues_desc: &[f64]) -> usize {
        let p = eigenvalues_desc.len();
        let eps_sq = self.epsilon * self.epsilon;
        // tail[r] = Σ_{j ≥ r} λ_j²
        let mut tail = vec![0.0; p + 1];
        for j in (0..p).rev() {
            tail[j] = tail[j + 1] + eigenvalues_desc[j] * eigenvalues_desc[j];
        }
        let r_eps = (0..=p).find(|&r| tail[r] < eps_sq).unwrap_or(p);
        let r = match self.rank_max {
            Some(cap) => r_eps.min(cap),
            None => r_eps,
        };
        r.clamp(1, p.max(1))
    }
}

/// Cholesky-style factor `V` (N×r, r ≤ N) of `ρ = V V†`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    v: ComplexMatrix,
}

impl LowRankFactor {
    pub fn new(v: ComplexMatrix) -> Result<Self> {
        let (n, r) = v.shape();
        if n == 0 || r == 0 {
            return Err(Error::Empty { rows: n, cols: r });
        }
        if r > n {
            return Err(Error::InvalidParameter(format!(
                "factor rank {r} exceeds dimension {n}"
            )));
        }
        ensure_finite(&v, "low-rank factor")?;
        Ok(LowRankFactor { v })
    }

    /// Rank-one factor of the pure state `ψ`.
    pub fn pure(psi: &[num_complex::Complex64]) -> Result<Self> {
        Self::new(ComplexMatrix::from_column_slice(psi.len(), 1, psi))
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.v
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.v
    }

    /// `V V†`.
    pub fn density(&self) -> ComplexMatrix {
        &self.v * self.v.adjoint()
    }

    /// `trace(V V†) = ‖V‖_F²`.
    pub fn trace(&self) -> f64 {
        self.v.norm_squared()
    }
}

/// Side information from a truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationInfo {
    pub input_columns: usize,
    pub kept: usize,
    /// `‖W W† − Ŵ Ŵ†‖_F² = Σ_{j>r} λ_j²`.
    pub discarded_energy: f64,
    /// `trace(W W†) − trace(Ŵ Ŵ†) = Σ_{j>r} λ_j`.
    pub discarded_trace: f64,
    /// `W` was identically zero and a zero rank-one factor was returned.
    pub degenerate: bool,
}

pub fn truncate(w: &ComplexMatrix, policy: &TruncationPolicy) -> Result<LowRankFactor> {
    truncate_with_info(w, policy).map(|(f, _)| f)
}

pub fn truncate_with_info(
    w: &ComplexMatrix,
    policy: &TruncationPolicy,
) -> Result<(LowRankFactor, TruncationInfo)> {
    let (n, k) = w.shape();
    if n == 0 || k == 0 {
        return Err(Error::Empty { rows: n, cols: k });
    }
    policy.validate()?;
    if w.iter().all(|z| *z == ZERO) {
        let info = TruncationInfo {
            input_columns: k,
            kept: 1,
            discarded_energy: 0.0,
            discarded_trace: 0.0,
            degenerate: true,
        };
        return Ok((LowRankFactor::new(ComplexMatrix::zeros(n, 1))?, info));
    }
    // W W† = Q (R R†) Q†, so the eigenpairs of the small Gram matrix R R†
    // give the eigenvalues λ_j = σ_j(W)² and the kept directions directly.
    // Once W is at least square the QR no longer shrinks anything.
    let (q, gram) = if k < n {
        let qr = pivoted_qr(w)?;
        (Some(qr.q), matmul(&qr.r, &qr.r.adjoint()))
    } else {
        (None, matmul(w, &w.adjoint()))
    };
    let eig = eig_of_hermitian_part(&gram);
    let p = eig.values.len();
    let eigenvalues: Vec<f64> = eig.values.iter().rev().map(|&l| l.max(0.0)).collect();
    let r = policy.kept_rank(&eigenvalues);
    let mut scaled = ComplexMatrix::zeros(p, r);
    for j in 0..r {
        let col = eig.vectors.column(p - 1 - j) * c64(eigenvalues[j].sqrt(), 0.0);
        scaled.column_mut(j).copy_from(&col);
    }
    let w_hat = match q {
        Some(q) => matmul(&q, &scaled),
        None => scaled,
    };
    let info = TruncationInfo {
        input_columns: k,
        kept: r,
        discarded_energy: eigenvalues[r..].iter().map(|l| l * l).sum(),
        discarded_trace: eigenvalues[r..].iter().sum(),
        degenerate: false,
    };
    Ok((LowRankFactor::new(w_hat)?, info))
}

/// Kraus form of the truncation of a PSD matrix `A = U Λ U†`.
#[derive(Debug, Clone)]
pub struct KrausWitness {
    /// `P = U D U†`, the projector onto the kept eigenvectors.
    pub projector: ComplexMatrix,
    /// `U D Λ D U†`, the truncated matrix.
    pub truncated: ComplexMatrix,
    pub kept: usize,
}

pub fn kraus_witness(a: &ComplexMatrix, policy: &TruncationPolicy) -> Result<KrausWitness> {
    let n = ensure_square(a)?;
    if n == 0 {
        return Err(Error::Empty { rows: 0, cols: 0 });
    }
    policy.validate()?;
    let eig = crate::linalg::hermitian_eig(a)?;
    let min = eig.values[0];
    if min < -PSD_TOLERANCE * frobenius(a) {
        return Err(Error::NotPsd { min_eig: min });
    }
    // Descending order; tiny negative round-off is clipped to zero.
    let desc: Vec<f64> = eig.values.iter().rev().map(|&l| l.max(0.0)).collect();
    let r = policy.kept_rank(&desc);
    let mut projector = ComplexMatrix::zeros(n, n);
    let mut truncated = ComplexMatrix::zeros(n, n);
    for (j, &lambda) in desc.iter().take(r).enumerate() {
        let u = eig.vectors.column(n - 1 - j);
        let outer = u * u.adjoint();
        truncated += outer.scale(lambda);
        projector += outer;
    }
    Ok(KrausWitness {
        projector,
        truncated,
        kept: r,
    })
}
