//! Dense complex linear algebra used by every other module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>` and therefore column-major.
//! The matrix exponential, the column-pivoted QR and the SVD (one-sided
//! Jacobi) are implemented here; the Hermitian eigensolver delegates to
//! nalgebra and only adds ordering guarantees and input checks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative Hermiticity defect below which inputs are silently symmetrized.
pub const HERMITIAN_TOLERANCE: f64 = 1e-8;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// Real matrix given row by row.
pub fn from_real_rows(rows: &[&[f64]]) -> ComplexMatrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    ComplexMatrix::from_fn(nrows, ncols, |i, j| c64(rows[i][j], 0.0))
}

pub fn real_diagonal(diag: &[f64]) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(diag.len(), diag.len());
    for (i, &d) in diag.iter().enumerate() {
        m[(i, i)] = c64(d, 0.0);
    }
    m
}

/// Matrix unit `E_ij` of size `n`.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut e = ComplexMatrix::zeros(n, n);
    e[(i, j)] = ONE;
    e
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.norm()
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Kronecker product `a ⊗ b`; `a` carries the slow index.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// `‖m − m†‖_F`.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

/// `(m + m†)/2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn ensure_finite(m: &ComplexMatrix, context: &'static str) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

pub fn ensure_square(m: &ComplexMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn one_norm(m: &ComplexMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

// Padé coefficients b_k of the [m/m] approximant of exp, and the largest
// 1-norm for which each degree reaches double precision backward error.
const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(f64, &[f64]); 4] = [
    (1.495585217958292e-2, &PADE_3),
    (2.539398330063230e-1, &PADE_5),
    (9.504178996162932e-1, &PADE_7),
    (2.097847961257068e0, &PADE_9),
];
const THETA_13: f64 = 5.371920351148152e0;

/// `a · b` through the cache-blocked complex kernel of `matrixmultiply`,
/// several times faster than nalgebra's generic product for complex entries.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = ComplexMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: `Complex64` is `#[repr(C)] { re, im }`, layout-identical to
    // `[f64; 2]`, and `DMatrix` storage is contiguous column-major, so the
    // strides below address exactly the m×k, k×n and m×n buffers.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr().cast(),
            1,
            m as isize,
            b.as_ptr().cast(),
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr().cast(),
            1,
            m as isize,
        );
    }
    c
}

/// Matrix exponential by scaling and squaring around a diagonal Padé
/// approximant of degree 3, 5, 7, 9 or 13 (chosen from the 1-norm).
pub fn matexp(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = ensure_square(a)?;
    ensure_finite(a, "matexp input")?;
    if n == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    let norm = one_norm(a);
    let id = identity(n);

    for &(theta, coeffs) in THETA.iter() {
        if norm <= theta {
            return pade_low(a, coeffs, &id);
        }
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(squarings));
    let mut x = pade_13(&scaled, &id)?;
    for _ in 0..squarings {
        x = matmul(&x, &x);
    }
    ensure_finite(&x, "matexp result")?;
    Ok(x)
}

fn pade_low(a: &ComplexMatrix, b: &[f64], id: &ComplexMatrix) -> Result<ComplexMatrix> {
    let a2 = matmul(a, a);
    let mut odd = id.scale(b[1]);
    let mut even = id.scale(b[0]);
    let mut power = id.clone();
    let degree = b.len() - 1;
    for k in (2..=degree).step_by(2) {
        power = matmul(&power, &a2);
        even += power.scale(b[k]);
        if k < degree {
            odd += power.scale(b[k + 1]);
        }
    }
    let u = matmul(a, &odd);
    pade_solve(&u, &even)
}

fn pade_13(a: &ComplexMatrix, id: &ComplexMatrix) -> Result<ComplexMatrix> {
    let b = &PADE_13;
    let a2 = matmul(a, a);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a4, &a2);
    let inner_u = a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]);
    let u = matmul(
        a,
        &(matmul(&a6, &inner_u) + a6.scale(b[7]) + a4.scale(b[5]) + a2.scale(b[3]) + id.scale(b[1])),
    );
    let inner_v = a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]);
    let v = matmul(&a6, &inner_v) + a6.scale(b[6]) + a4.scale(b[4]) + a2.scale(b[2]) + id.scale(b[0]);
    pade_solve(&u, &v)
}

// Solves (V − U) X = V + U.
fn pade_solve(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<ComplexMatrix> {
    let lhs = v - u;
    let rhs = v + u;
    lhs.lu()
        .solve(&rhs)
        .ok_or(Error::NonFinite("singular Padé denominator"))
}

/// Column-pivoted QR factorization `Q R = W Π`.
///
/// For `W` of size N×k, `Q` is N×p with orthonormal columns and `R` is p×k
/// upper trapezoidal with `p = min(N, k)`. Column `j` of `W Π` is column
/// `perm[j]` of `W`. The diagonal of `R` is real, non-negative and
/// non-increasing.
#[derive(Debug, Clone)]
pub struct PivotedQR {
    pub q: ComplexMatrix,
    pub r: ComplexMatrix,
    pub perm: Vec<usize>,
}

impl PivotedQR {
    /// `W Π` rebuilt from the original matrix.
    pub fn permuted(&self, w: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(w.nrows(), self.perm.len(), |i, j| w[(i, self.perm[j])])
    }
}

/// Householder QR with Businger–Golub column pivoting.
pub fn pivoted_qr(w: &ComplexMatrix) -> Result<PivotedQR> {
    let (n, k) = w.shape();
    if n == 0 || k == 0 {
        return Err(Error::Empty { rows: n, cols: k });
    }
    ensure_finite(w, "pivoted_qr input")?;
    let p = n.min(k);
    let mut a = w.clone();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut reflectors: Vec<(usize, DVector<Complex64>)> = Vec::with_capacity(p);

    for j in 0..p {
        // Pivot: largest remaining column norm, first one on ties.
        let mut best = j;
        let mut best_norm = -1.0;
        for col in j..k {
            let s: f64 = (j..n).map(|i| a[(i, col)].norm_sqr()).sum();
            if s > best_norm {
                best_norm = s;
                best = col;
            }
        }
        if best != j {
            a.swap_columns(j, best);
            perm.swap(j, best);
        }

        let norm_x = best_norm.sqrt();
        let tail_norm: f64 = (j + 1..n).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 || tail_norm == 0.0 {
            continue;
        }
        let x0 = a[(j, j)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        let alpha = -phase * norm_x;
        let mut v = DVector::from_fn(n - j, |i, _| a[(j + i, j)]);
        v[0] -= alpha;
        let vnorm = v.norm();
        v /= c64(vnorm, 0.0);
        apply_reflector(&mut a, &v, j, j);
        for i in j + 1..n {
            a[(i, j)] = ZERO;
        }
        reflectors.push((j, v));
    }

    let mut q = ComplexMatrix::zeros(n, p);
    for i in 0..p {
        q[(i, i)] = ONE;
    }
    for (j, v) in reflectors.iter().rev() {
        apply_reflector(&mut q, v, *j, 0);
    }
    let mut r = ComplexMatrix::zeros(p, k);
    for i in 0..p {
        for col in i..k {
            r[(i, col)] = a[(i, col)];
        }
    }
    // Make the diagonal of R real and non-negative.
    for i in 0..p {
        let d = r[(i, i)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for col in i..k {
                r[(i, col)] *= phase.conj();
            }
            for row in 0..n {
                q[(row, i)] *= phase;
            }
            r[(i, i)] = c64(d.norm(), 0.0);
        }
    }
    Ok(PivotedQR { q, r, perm })
}

// a[offset.., col_start..] ← (I − 2 v v†) a[offset.., col_start..], ‖v‖ = 1.
fn apply_reflector(
    a: &mut ComplexMatrix,
    v: &DVector<Complex64>,
    offset: usize,
    col_start: usize,
) {
    let n = a.nrows();
    for col in col_start..a.ncols() {
        let mut dot = ZERO;
        for i in offset..n {
            dot += v[i - offset].conj() * a[(i, col)];
        }
        if dot == ZERO {
            continue;
        }
        let dot2 = dot * 2.0;
        for i in offset..n {
            let vi = v[i - offset];
            a[(i, col)] -= vi * dot2;
        }
    }
}

/// Thin SVD `M = U diag(σ) V†` with σ sorted in non-increasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

/// One-sided (Hestenes) Jacobi SVD. Columns of a working copy of `M` are
/// rotated pairwise until mutually orthogonal; the rotations accumulate
/// into `V` and the column norms are the singular values.
pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty { rows, cols });
    }
    ensure_finite(m, "svd input")?;
    if rows < cols {
        let t = svd(&m.adjoint())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let mut a = m.clone();
    let mut v = identity(cols);
    let tol = f64::EPSILON * (rows as f64).sqrt();
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let g = a.column(p).dotc(&a.column(q));
                let gabs = g.norm();
                if gabs == 0.0 || gabs <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = g / gabs;
                let zeta = (beta - alpha) / (2.0 * gabs);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_columns(&mut a, p, q, phase, cs, sn);
                rotate_columns(&mut v, p, q, phase, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v_sorted = ComplexMatrix::from_fn(cols, cols, |i, j| v[(i, order[j])]);
    let mut u = ComplexMatrix::zeros(rows, cols);
    let floor = sigma[0] * f64::EPSILON * rows as f64;
    let mut filled = Vec::with_capacity(cols);
    for (j, &src) in order.iter().enumerate() {
        if sigma[j] > floor && sigma[j] > 0.0 {
            let col = a.column(src) / c64(sigma[j], 0.0);
            u.set_column(j, &col);
            filled.push(j);
        }
    }
    complete_orthonormal(&mut u, &filled);
    Ok(Svd {
        u,
        sigma,
        v: v_sorted,
    })
}

const JACOBI_MAX_SWEEPS: usize = 80;

// [x_p, x_q] ← [x_p, e^{-iφ} x_q] · [[c, s], [−s, c]]
fn rotate_columns(x: &mut ComplexMatrix, p: usize, q: usize, phase: Complex64, c: f64, s: f64) {
    let conj = phase.conj();
    for i in 0..x.nrows() {
        let xp = x[(i, p)];
        let xq = x[(i, q)] * conj;
        x[(i, p)] = xp * c - xq * s;
        x[(i, q)] = xp * s + xq * c;
    }
}

// Fills the columns of `u` not listed in `filled` with an orthonormal
// completion: each time the unit vector with the largest residual after
// (twice repeated) Gram–Schmidt against the current basis.
fn complete_orthonormal(u: &mut ComplexMatrix, filled: &[usize]) {
    let (rows, cols) = u.shape();
    let mut basis: Vec<usize> = filled.to_vec();
    let missing: Vec<usize> = (0..cols).filter(|j| !filled.contains(j)).collect();
    for j in missing {
        let mut best: Option<(f64, DVector<Complex64>)> = None;
        for candidate in 0..rows {
            let mut x = DVector::<Complex64>::zeros(rows);
            x[candidate] = ONE;
            for _ in 0..2 {
                for &b in &basis {
                    let col = u.column(b).into_owned();
                    let proj = col.dotc(&x);
                    x -= col * proj;
                }
            }
            let nx = x.norm();
            if best.as_ref().is_none_or(|(bn, _)| nx > *bn) {
                best = Some((nx, x));
            }
        }
        let (nx, x) = best.expect("at least one row");
        u.set_column(j, &(x / c64(nx, 0.0)));
        basis.push(j);
    }
}

/// Eigen-decomposition `A = U diag(λ) U†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

/// Symmetrizes `a` when its defect is within [`HERMITIAN_TOLERANCE`]
/// (relative to `‖a‖_F`) and errors otherwise.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<HermitianEig> {
    ensure_square(a)?;
    ensure_finite(a, "hermitian_eig input")?;
    let defect = hermiticity_defect(a);
    let tolerance = HERMITIAN_TOLERANCE * frobenius(a);
    if defect > tolerance {
        return Err(Error::NotHermitian { defect, tolerance });
    }
    Ok(eig_of_hermitian_part(a))
}

/// Eigen-decomposition of `(a + a†)/2` without any defect check.
pub fn eig_of_hermitian_part(a: &ComplexMatrix) -> HermitianEig {
    let n = a.nrows();
    if n == 0 {
        return HermitianEig {
            values: Vec::new(),
            vectors: ComplexMatrix::zeros(0, 0),
        };
    }
    let dec = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| dec.eigenvalues[x].total_cmp(&dec.eigenvalues[y]));
    let values = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| dec.eigenvectors[(i, order[j])]);
    HermitianEig { values, vectors }
}

/// Compressed-row copy of a dense operator, used when most entries vanish.
#[derive(Debug, Clone)]
pub struct SparseOp {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseOp {
    pub fn from_dense(m: &ComplexMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..rows {
            for j in 0..cols {
                let z = m[(i, j)];
                if z != ZERO {
                    col_idx.push(j);
                    vals.push(z);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseOp {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, x.nrows(), "sparse operator shape mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut oc = out.column_mut(c);
            for i in 0..self.rows {
                let mut acc = ZERO;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.vals[p] * xc[self.col_idx[p]];
                }
                oc[i] = acc;
            }
        }
        out
    }
}

/// Dense operator with an optional sparse shadow for fast left-application.
#[derive(Debug, Clone)]
pub struct Operator {
    dense: ComplexMatrix,
    sparse: Option<SparseOp>,
}

impl Operator {
    pub fn new(dense: ComplexMatrix) -> Self {
        let sparse = SparseOp::from_dense(&dense);
        let sparse = (4 * sparse.nnz() <= dense.nrows() * dense.ncols()).then_some(sparse);
        Operator { dense, sparse }
    }

    pub fn dense(&self) -> &ComplexMatrix {
        &self.dense
    }

    pub fn dim(&self) -> usize {
        self.dense.nrows()
    }

    /// `self · x`.
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        match &self.sparse {
            Some(s) => s.apply(x),
            None => matmul(&self.dense, x),
        }
    }
}
