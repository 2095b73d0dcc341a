//! CPTP diagnostics: per-state reports and the Choi matrix of a one-step map.

use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::{
    ensure_finite, ensure_square, eig_of_hermitian_part, hermiticity_defect, matrix_unit, svd,
    trace, ComplexMatrix,
};
use crate::truncation::LowRankFactor;

/// Default rank threshold relative to the largest eigenvalue.
pub const RANK_THRESHOLD_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptpReport {
    /// `|trace(ρ) − 1|`
    pub trace_defect: f64,
    /// `‖ρ − ρ†‖_F`
    pub herm_defect: f64,
    /// Smallest eigenvalue of the Hermitian part.
    pub min_eig: f64,
    /// Eigenvalues above the rank threshold.
    pub rank_eps: usize,
}

fn count_above(values: &[f64], threshold: Option<f64>) -> usize {
    let largest = values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = threshold.unwrap_or(RANK_THRESHOLD_RELATIVE * largest);
    values.iter().filter(|&&x| x > cut).count()
}

/// Reports on a dense state. Defects are measured, never rejected, so a
/// non-Hermitian input still yields a report.
pub fn cptp_report(rho: &ComplexMatrix, rank_threshold: Option<f64>) -> Result<CptpReport> {
    ensure_square(rho)?;
    let eig = eig_of_hermitian_part(rho);
    Ok(CptpReport {
        trace_defect: (trace(rho).re - 1.0).abs(),
        herm_defect: hermiticity_defect(rho),
        min_eig: eig.values.first().copied().unwrap_or(0.0),
        rank_eps: count_above(&eig.values, rank_threshold),
    })
}

/// Report on `ρ = VV†` computed from the factor alone. `ρ` is Hermitian and
/// PSD by construction; its nonzero spectrum is `σ(V)²`, and its smallest
/// eigenvalue is zero whenever `V` has fewer columns than rows.
pub fn cptp_report_factor(v: &LowRankFactor, rank_threshold: Option<f64>) -> Result<CptpReport> {
    let s = svd(v.matrix())?;
    let eigs: Vec<f64> = s.sigma.iter().map(|x| x * x).collect();
    let min_eig = if v.rank() < v.dim() {
        0.0
    } else {
        eigs.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(CptpReport {
        trace_defect: (v.trace() - 1.0).abs(),
        herm_defect: 0.0,
        min_eig,
        rank_eps: count_above(&eigs, rank_threshold),
    })
}

/// `C = Σ_ij E_ij ⊗ step(E_ij)`, so `C[(iN + a), (jN + b)] = step(E_ij)[a, b]`.
///
/// The map is CP iff `C` is PSD. `step` must be linear: probe integrators with
/// renormalization switched off. The N² probes run in parallel.
pub fn choi_matrix<F>(step: F, n: usize) -> Result<ComplexMatrix>
where
    F: Fn(&ComplexMatrix) -> Result<ComplexMatrix> + Sync,
{
    let probes: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let images = probes
        .par_iter()
        .map(|&(i, j)| {
            let out = step(&matrix_unit(n, i, j))?;
            ensure_finite(&out, "probed step output")?;
            if out.shape() != (n, n) {
                return Err(crate::error::Error::DimensionMismatch {
                    context: "choi_matrix",
                    expected: n,
                    found: out.nrows(),
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut c = ComplexMatrix::zeros(n * n, n * n);
    for (&(i, j), image) in probes.iter().zip(&images) {
        c.view_mut((i * n, j * n), (n, n)).copy_from(image);
    }
    Ok(c)
}

/// Column count of each factor along a trajectory.
pub fn rank_series<'a>(trajectory: impl IntoIterator<Item = &'a LowRankFactor>) -> Vec<usize> {
    trajectory.into_iter().map(LowRankFactor::rank).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowMethod, FlowOperator};
    use crate::integrators::{extract_kraus, if_step_dense, StepOptions};
    use crate::linalg::{c64, from_real_rows, identity, matexp, real_diagonal, I};
    use crate::model::LindbladModel;
    use crate::tableau::ButcherTableau;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn min_eig(m: &ComplexMatrix) -> f64 {
        eig_of_hermitian_part(m).values[0]
    }

    #[test]
    fn report_closed_forms() {
        let r = cptp_report(&real_diagonal(&[0.5, 0.5]), None).unwrap();
        assert_eq!(r.trace_defect, 0.0);
        assert!((r.min_eig - 0.5).abs() < 1e-15);
        assert_eq!(r.rank_eps, 2);
        let r = cptp_report(&real_diagonal(&[1.1, -0.1]), None).unwrap();
        assert!((r.min_eig + 0.1).abs() < 1e-15);
        assert!(r.trace_defect < 1e-15);
        let r = cptp_report(&from_real_rows(&[&[1.0, 1.0], &[0.0, 0.0]]), None).unwrap();
        assert!((r.herm_defect - 2f64.sqrt()).abs() < 1e-15);
        assert!(r.min_eig.is_finite());
        let r = cptp_report(&real_diagonal(&[1.0, 1e-14]), Some(1e-15)).unwrap();
        assert_eq!(r.rank_eps, 2);
        assert!(cptp_report(&ComplexMatrix::zeros(2, 3), None).is_err());
    }

    #[test]
    fn factor_report_agrees_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, r) in [(5, 2), (4, 4), (6, 1)] {
            let v = LowRankFactor::new(random_matrix(&mut rng, n, r)).unwrap();
            let a = cptp_report_factor(&v, None).unwrap();
            let b = cptp_report(&v.density(), None).unwrap();
            assert!((a.trace_defect - b.trace_defect).abs() < 1e-12);
            assert!((a.min_eig - b.min_eig).abs() < 1e-12);
            assert_eq!(a.rank_eps, b.rank_eps);
        }
    }

    #[test]
    fn choi_of_identity_and_unitary() {
        let n = 3;
        let c = choi_matrix(|x| Ok(x.clone()), n).unwrap();
        assert!((trace(&c).re - n as f64).abs() < 1e-14);
        let r = cptp_report(&c, None).unwrap();
        assert_eq!(r.rank_eps, 1);
        assert!(r.min_eig > -1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_matrix(&mut rng, n, n);
        let u = matexp(&((&a + a.adjoint()) * I)).unwrap();
        let c = choi_matrix(|x| Ok(&u * x * u.adjoint()), n).unwrap();
        let r = cptp_report(&c, None).unwrap();
        assert_eq!(r.rank_eps, 1);
        assert!(r.min_eig > -1e-13);
    }

    #[test]
    fn choi_layout_and_linearity() {
        let n = 2;
        let map = |x: &ComplexMatrix| Ok(x.transpose());
        let c = choi_matrix(map, n).unwrap();
        // The transpose map gives the swap operator, which has eigenvalue −1.
        assert_eq!(c[(1, 2)], c64(1.0, 0.0));
        assert!((min_eig(&c) + 1.0).abs() < 1e-14);
        let scaled = choi_matrix(|x| Ok(x.transpose() * c64(2.5, 0.0)), n).unwrap();
        assert!((scaled - c.scale(2.5)).norm() < 1e-12);
    }

    #[test]
    fn choi_of_unnormalized_if_step_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 3;
        let a = random_matrix(&mut rng, n, n);
        let model = LindbladModel::new(
            (&a + a.adjoint()).scale(0.5),
            vec![(0.7, random_matrix(&mut rng, n, n))],
        )
        .unwrap();
        let flow = FlowOperator::new(&model, FlowMethod::Exact);
        let tab = ButcherTableau::rk4();
        for dt in [0.1, 2.0] {
            let c = choi_matrix(
                |x| if_step_dense(&model, &flow, &tab, dt, x, StepOptions::linear()),
                n,
            )
            .unwrap();
            assert!(min_eig(&c) >= -1e-10 * c.norm());
            let kraus = extract_kraus(&model, &flow, &tab, dt).unwrap();
            let ck = choi_matrix(|x| Ok(kraus.apply(x)), n).unwrap();
            assert!((ck - c).norm() < 1e-12);
        }
    }

    #[test]
    fn choi_rejects_non_finite_output() {
        let bad = |x: &ComplexMatrix| Ok(x * c64(f64::NAN, 0.0));
        assert!(choi_matrix(bad, 2).is_err());
    }

    #[test]
    fn ranks_of_trajectory() {
        let traj = vec![
            LowRankFactor::new(identity(3).columns(0, 1).into_owned()).unwrap(),
            LowRankFactor::new(identity(3).columns(0, 2).into_owned()).unwrap(),
        ];
        assert_eq!(rank_series(&traj), vec![1, 2]);
    }
}
