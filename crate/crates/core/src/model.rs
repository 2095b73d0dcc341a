//! The Lindblad problem `dρ/dt = −i[H, ρ] + Σ_α γ_α (L_α ρ L_α† − ½{L_α†L_α, ρ})`.

use crate::error::{Error, Result};
use crate::linalg::{
    c64, ensure_finite, ensure_square, frobenius, hermiticity_defect, ComplexMatrix, Operator, I,
};

/// Relative Hermiticity tolerance on the Hamiltonian.
const HAMILTONIAN_TOLERANCE: f64 = 1e-10;

/// A jump operator `L` with its non-negative rate `γ`.
#[derive(Debug, Clone)]
pub struct Jump {
    rate: f64,
    op: Operator,
    // L†L
    gram: Operator,
}

impl Jump {
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn operator(&self) -> &ComplexMatrix {
        self.op.dense()
    }

    /// `L · x`.
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.op.apply(x)
    }
}

/// Time-independent Hamiltonian plus an ordered list of jumps.
///
/// The jump order is preserved everywhere it is observable, in particular in
/// the column layout of [`dissipator_columns`].
#[derive(Debug, Clone)]
pub struct LindbladModel {
    hamiltonian: ComplexMatrix,
    h_op: Operator,
    jumps: Vec<Jump>,
}

impl LindbladModel {
    pub fn new(hamiltonian: ComplexMatrix, jumps: Vec<(f64, ComplexMatrix)>) -> Result<Self> {
        let n = ensure_square(&hamiltonian)?;
        if n == 0 {
            return Err(Error::Empty { rows: 0, cols: 0 });
        }
        ensure_finite(&hamiltonian, "Hamiltonian")?;
        let defect = hermiticity_defect(&hamiltonian);
        let tolerance = HAMILTONIAN_TOLERANCE * frobenius(&hamiltonian);
        if defect > tolerance {
            return Err(Error::NotHermitian { defect, tolerance });
        }
        let jumps = jumps
            .into_iter()
            .map(|(rate, op)| {
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "jump rate must be finite and non-negative, got {rate}"
                    )));
                }
                if op.shape() != (n, n) {
                    return Err(Error::DimensionMismatch {
                        context: "jump operator",
                        expected: n,
                        found: if op.nrows() != n { op.nrows() } else { op.ncols() },
                    });
                }
                ensure_finite(&op, "jump operator")?;
                let gram = Operator::new(op.adjoint() * &op);
                Ok(Jump {
                    rate,
                    op: Operator::new(op),
                    gram,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LindbladModel {
            h_op: Operator::new(hamiltonian.clone()),
            hamiltonian,
            jumps,
        })
    }

    /// Closed system: no jumps.
    pub fn unitary(hamiltonian: ComplexMatrix) -> Result<Self> {
        Self::new(hamiltonian, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Same operators with every rate multiplied by `factor`.
    pub fn with_scaled_rates(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.hamiltonian.clone(),
            self.jumps
                .iter()
                .map(|j| (j.rate * factor, j.operator().clone()))
                .collect(),
        )
    }

    fn check_dim(&self, m: &ComplexMatrix, context: &'static str) -> Result<()> {
        if m.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                found: m.nrows(),
            });
        }
        Ok(())
    }
}

/// `J = −i H_eff` with `H_eff = H − (i/2) Σ_α γ_α L_α†L_α`.
#[derive(Debug, Clone)]
pub struct EffectiveGenerator {
    j: ComplexMatrix,
}

impl EffectiveGenerator {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.j
    }

    pub fn dim(&self) -> usize {
        self.j.nrows()
    }
}

pub fn effective_generator(model: &LindbladModel) -> EffectiveGenerator {
    let mut j = model.hamiltonian().map(|h| -I * h);
    for jump in model.jumps() {
        let l = jump.operator();
        j -= (l.adjoint() * l).scale(0.5 * jump.rate());
    }
    EffectiveGenerator { j }
}

/// `Σ_α γ_α L_α ρ L_α†`, the part of the generator that is already in Kraus form.
pub fn jump_map(model: &LindbladModel, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    model.check_dim(rho, "jump_map")?;
    let n = model.dim();
    let mut out = ComplexMatrix::zeros(n, rho.ncols());
    for jump in model.jumps() {
        if jump.rate() == 0.0 {
            continue;
        }
        let l_rho = jump.apply(rho);
        // L ρ L† = (L (Lρ)†)†
        let sandwich = jump.apply(&l_rho.adjoint()).adjoint();
        out += sandwich.scale(jump.rate());
    }
    Ok(out)
}

/// The full Lindblad right-hand side in its standard commutator/anticommutator form.
pub fn lindblad_rhs(model: &LindbladModel, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    model.check_dim(rho, "lindblad_rhs")?;
    if rho.ncols() != model.dim() {
        return Err(Error::NotSquare {
            rows: rho.nrows(),
            cols: rho.ncols(),
        });
    }
    // ρX for Hermitian X is (Xρ†)†, so every product is a left application
    // and sparse operators stay sparse.
    let rho_adj = rho.adjoint();
    let right = |op: &Operator| op.apply(&rho_adj).adjoint();
    let commutator = model.h_op.apply(rho) - right(&model.h_op);
    let mut out = commutator.map(|z| -I * z);
    for jump in model.jumps() {
        if jump.rate == 0.0 {
            continue;
        }
        let sandwich = jump.apply(&jump.apply(rho).adjoint()).adjoint();
        let anti = jump.gram.apply(rho) + right(&jump.gram);
        out += (sandwich - anti.scale(0.5)).scale(jump.rate);
    }
    Ok(out)
}

/// Concatenates `√(scale·γ_α) L_α V` over the jumps, in jump order.
///
/// The result `D` satisfies `D D† = scale · Σ_α γ_α L_α V V† L_α†`.
pub fn dissipator_columns(
    model: &LindbladModel,
    v: &ComplexMatrix,
    scale: f64,
) -> Result<ComplexMatrix> {
    if !(scale >= 0.0) {
        return Err(Error::NegativeScale(scale));
    }
    model.check_dim(v, "dissipator_columns")?;
    let r = v.ncols();
    let mut out = ComplexMatrix::zeros(model.dim(), r * model.jumps().len());
    for (a, jump) in model.jumps().iter().enumerate() {
        let block = jump.apply(v) * c64((scale * jump.rate()).sqrt(), 0.0);
        out.columns_mut(a * r, r).copy_from(&block);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real_rows, real_diagonal, trace, ZERO};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lowering() -> ComplexMatrix {
        from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]])
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
        let a = random_matrix(rng, n, n);
        (&a + a.adjoint()).scale(0.5)
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize, jumps: usize) -> LindbladModel {
        let h = random_hermitian(rng, n);
        let js = (0..jumps)
            .map(|_| (rng.random_range(0.0..2.0), random_matrix(rng, n, n)))
            .collect();
        LindbladModel::new(h, js).unwrap()
    }

    #[test]
    fn generator_without_jumps_is_minus_i_h() {
        let h = from_real_rows(&[&[1.0, 0.5], &[0.5, -1.0]]);
        let model = LindbladModel::unitary(h.clone()).unwrap();
        let j = effective_generator(&model);
        assert!((j.matrix() - h.map(|z| -I * z)).norm() < 1e-15);
    }

    #[test]
    fn generator_for_amplitude_damping() {
        let model = LindbladModel::new(ComplexMatrix::zeros(2, 2), vec![(1.0, lowering())]).unwrap();
        let j = effective_generator(&model);
        assert!((j.matrix() - real_diagonal(&[0.0, -0.5])).norm() < 1e-15);
    }

    #[test]
    fn generator_dissipative_part_is_linear_in_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng, 4, 2);
        let herm = |m: &LindbladModel| {
            let j = effective_generator(m);
            j.matrix() + j.matrix().adjoint()
        };
        let doubled = model.with_scaled_rates(2.0).unwrap();
        assert!((herm(&doubled) - herm(&model).scale(2.0)).norm() < 1e-13);

        let mut expected = ComplexMatrix::zeros(4, 4);
        for jump in model.jumps() {
            let l = jump.operator();
            expected -= (l.adjoint() * l).scale(jump.rate());
        }
        let j = effective_generator(&model);
        assert!((herm(&model) - expected).norm() <= 1e-12 * j.matrix().norm());
    }

    #[test]
    fn rhs_on_ground_state_vanishes() {
        let model = LindbladModel::new(ComplexMatrix::zeros(2, 2), vec![(1.0, lowering())]).unwrap();
        let ground = real_diagonal(&[1.0, 0.0]);
        assert_eq!(lindblad_rhs(&model, &ground).unwrap().norm(), 0.0);
    }

    #[test]
    fn rhs_on_excited_state_transfers_population() {
        let model = LindbladModel::new(ComplexMatrix::zeros(2, 2), vec![(1.0, lowering())]).unwrap();
        let excited = real_diagonal(&[0.0, 1.0]);
        let out = lindblad_rhs(&model, &excited).unwrap();
        assert!((out - real_diagonal(&[1.0, -1.0])).norm() < 1e-15);
    }

    #[test]
    fn split_form_matches_standard_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..100 {
            let n = 2 + trial % 7;
            let model = random_model(&mut rng, n, 1 + trial % 3);
            let rho = random_hermitian(&mut rng, n);
            let j = effective_generator(&model);
            let split =
                j.matrix() * &rho + &rho * j.matrix().adjoint() + jump_map(&model, &rho).unwrap();
            let standard = lindblad_rhs(&model, &rho).unwrap();
            let scale = rho.norm() * (1.0 + model.hamiltonian().norm());
            assert!((split - &standard).norm() <= 1e-12 * scale * 10.0);
            assert!(trace(&standard).norm() <= 1e-12 * scale);
            assert!(hermiticity_defect(&standard) <= 1e-12 * scale);
        }
    }

    #[test]
    fn dissipator_columns_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let empty = LindbladModel::unitary(random_hermitian(&mut rng, 3)).unwrap();
        let v = random_matrix(&mut rng, 3, 2);
        assert_eq!(dissipator_columns(&empty, &v, 0.3).unwrap().ncols(), 0);

        let model = random_model(&mut rng, 3, 1);
        let out = dissipator_columns(&model, &v, 0.3).unwrap();
        let jump = &model.jumps()[0];
        let expected = jump.operator() * &v * c64((0.3 * jump.rate()).sqrt(), 0.0);
        assert_eq!(out.ncols(), 2);
        assert!((out - expected).norm() < 1e-15);
    }

    #[test]
    fn dissipator_columns_gram_matches_dense_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = random_model(&mut rng, 5, 2);
        let v = random_matrix(&mut rng, 5, 2);
        let s = 0.7;
        let out = dissipator_columns(&model, &v, s).unwrap();
        assert_eq!(out.ncols(), 4);
        let rho = &v * v.adjoint();
        let dense = jump_map(&model, &rho).unwrap().scale(s);
        assert!((&out * out.adjoint() - dense).norm() <= 1e-12);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let h = from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(
            LindbladModel::unitary(h),
            Err(Error::NotHermitian { .. })
        ));
        let h = ComplexMatrix::zeros(2, 2);
        assert!(LindbladModel::new(h.clone(), vec![(-1.0, lowering())]).is_err());
        assert!(matches!(
            LindbladModel::new(h.clone(), vec![(1.0, ComplexMatrix::zeros(3, 3))]),
            Err(Error::DimensionMismatch { .. })
        ));
        let model = LindbladModel::new(h, vec![(1.0, lowering())]).unwrap();
        let v = ComplexMatrix::from_element(2, 1, ZERO);
        assert!(matches!(
            dissipator_columns(&model, &v, -0.1),
            Err(Error::NegativeScale(_))
        ));
        assert!(lindblad_rhs(&model, &ComplexMatrix::zeros(3, 3)).is_err());
    }
}
