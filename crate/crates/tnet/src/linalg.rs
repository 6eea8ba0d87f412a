//! Dense complex linear algebra kernels shared across the crate.
//!
//! Factorizations (QR, Hermitian eigen, Schur) come from `nalgebra`; the
//! general-matrix multiply in the contraction hot path is `matrixmultiply`'s
//! zgemm. On top of those this module adds the pieces the solvers need that no
//! pure-Rust dependency provides: a Lanczos iteration with full
//! reorthogonalization, eigenvectors of a general (non-Hermitian) matrix via
//! Schur triangularization, a scaling-and-squaring Padé matrix exponential,
//! and a singular value decomposition whose output is verified and, when the
//! primary backend misbehaves, recomputed by slower but stable methods.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Zero;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub(crate) type Mat = DMatrix<Complex64>;
pub(crate) type Vecc = DVector<Complex64>;

/// Row-major GEMM: `c = a * b` with `a` of shape `m x k`, `b` of shape `k x n`.
///
/// `c` is overwritten. Zero-sized products are handled by clearing `c`.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[Complex64],
    b: &[Complex64],
    c: &mut [Complex64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(Complex64::zero());
        return;
    }
    // Complex64 is repr(C) { re: f64, im: f64 }, so the cast to [f64; 2] is sound.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            k as isize,
            1,
            b.as_ptr() as *const [f64; 2],
            n as isize,
            1,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            n as isize,
            1,
        );
    }
}

/// Dense matrix-vector product `y = m_mat * x` for row-major `m_mat`.
pub(crate) fn matvec(rows: usize, cols: usize, m_mat: &[Complex64], x: &[Complex64], y: &mut [Complex64]) {
    debug_assert_eq!(m_mat.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(y.len(), rows);
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &m_mat[r * cols..(r + 1) * cols];
        let mut acc = Complex64::zero();
        for (a, b) in row.iter().zip(x.iter()) {
            acc += a * b;
        }
        *yr = acc;
    }
}

/// Flatten a matrix into row-major storage.
pub(crate) fn mat_rowmajor(m: &Mat) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Maximum absolute column sum (the induced 1-norm).
pub(crate) fn one_norm(m: &Mat) -> f64 {
    let mut best = 0.0f64;
    for c in 0..m.ncols() {
        let mut s = 0.0;
        for r in 0..m.nrows() {
            s += m[(r, c)].norm();
        }
        best = best.max(s);
    }
    best
}

/// Matrix exponential by scaling-and-squaring with a degree-9 Padé approximant.
///
/// The approximant is accurate to double precision once the scaled 1-norm is
/// below ~1.7; we scale to 1.5 for margin. Intended for the moderate sizes the
/// crate needs (transfer generators, two-site gates), not for huge matrices.
pub(crate) fn expm(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    const THETA: f64 = 1.5;
    // Padé [9/9] numerator coefficients for exp; the denominator uses the same
    // coefficients with alternating signs.
    const B: [f64; 10] = [
        17_643_225_600.0,
        8_821_612_800.0,
        2_075_673_600.0,
        302_702_400.0,
        30_270_240.0,
        2_162_160.0,
        110_880.0,
        3_960.0,
        90.0,
        1.0,
    ];
    let norm = one_norm(a);
    let s = if norm > THETA {
        (norm / THETA).log2().ceil() as u32
    } else {
        0
    };
    let scale = Complex64::new((0.5f64).powi(s as i32), 0.0);
    let a1 = a * scale;
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let a8 = &a6 * &a2;
    let id = Mat::identity(n, n);
    let even = &id * Complex64::new(B[0], 0.0)
        + &a2 * Complex64::new(B[2], 0.0)
        + &a4 * Complex64::new(B[4], 0.0)
        + &a6 * Complex64::new(B[6], 0.0)
        + &a8 * Complex64::new(B[8], 0.0);
    let odd_core = &id * Complex64::new(B[1], 0.0)
        + &a2 * Complex64::new(B[3], 0.0)
        + &a4 * Complex64::new(B[5], 0.0)
        + &a6 * Complex64::new(B[7], 0.0)
        + &a8 * Complex64::new(B[9], 0.0);
    let odd = &a1 * odd_core;
    let num = &even + &odd;
    let den = &even - &odd;
    let lu = den.lu();
    let mut x = lu
        .solve(&num)
        .ok_or_else(|| Error::Numerical("Padé denominator is singular".into()))?;
    for _ in 0..s {
        x = &x * &x;
    }
    Ok(x)
}

/// Anything that can apply itself to a vector; the matrix-free interface used
/// by the Lanczos solver.
pub(crate) trait LinOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

/// Dense row-major matrix as a `LinOp`.
pub(crate) struct DenseOp<'a> {
    pub dim: usize,
    pub data: &'a [Complex64],
}

impl LinOp for DenseOp<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        matvec(self.dim, self.dim, self.data, x, y);
    }
}

/// Outcome of a Lanczos run. `converged` reflects the residual test; callers
/// that can tolerate a warm but unconverged estimate (inner DMRG iterations)
/// may still use `value`/`vector`.
pub(crate) struct LanczosOutcome {
    pub value: f64,
    pub vector: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn random_unit(dim: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let n = norm2(&v);
    for z in &mut v {
        *z /= n;
    }
    v
}

/// Lowest eigenpair of a Hermitian operator by Lanczos iteration with full
/// reorthogonalization.
///
/// The Krylov basis is kept and every new vector is orthogonalized twice
/// against all of it, which is affordable at the dimensions this crate meets
/// (at most a few tens of thousands) and avoids ghost eigenvalues entirely.
/// A breakdown (invariant subspace) is escaped by injecting a fresh random
/// direction, so the run only fails if the iteration budget is exhausted.
pub(crate) fn lanczos_lowest(
    op: &dyn LinOp,
    start: Option<&[Complex64]>,
    tol: f64,
    max_iter: usize,
    rng: &mut impl Rng,
) -> Result<LanczosOutcome> {
    let dim = op.dim();
    if dim == 0 {
        return Err(Error::Shape("Lanczos on a zero-dimensional operator".into()));
    }
    if dim == 1 {
        let mut y = vec![Complex64::zero()];
        op.apply(&[Complex64::new(1.0, 0.0)], &mut y);
        return Ok(LanczosOutcome {
            value: y[0].re,
            vector: vec![Complex64::new(1.0, 0.0)],
            iterations: 1,
            residual: 0.0,
            converged: true,
        });
    }

    let mut v0 = match start {
        Some(s) if norm2(s) > 1e-300 => {
            let mut v = s.to_vec();
            let n = norm2(&v);
            for z in &mut v {
                *z /= n;
            }
            v
        }
        _ => random_unit(dim, rng),
    };
    // Basis vectors, diagonal and off-diagonal of the tridiagonal projection.
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![Complex64::zero(); dim];
    let budget = max_iter.min(dim).max(2);
    let mut scale_est = 0.0f64;

    let finish = |alpha: &[f64],
                  beta: &[f64],
                  basis: &[Vec<Complex64>],
                  b_next: f64,
                  tol: f64|
     -> LanczosOutcome {
        let j = alpha.len();
        let (theta, s) = tridiag_lowest(alpha, beta);
        let residual = b_next * s[j - 1].abs();
        let thresh = tol * theta.abs().max(1.0);
        let mut vec = vec![Complex64::zero(); dim];
        for (coef, b) in s.iter().zip(basis) {
            let c = Complex64::new(*coef, 0.0);
            for (vi, bi) in vec.iter_mut().zip(b) {
                *vi += c * bi;
            }
        }
        let n = norm2(&vec);
        for z in &mut vec {
            *z /= n;
        }
        LanczosOutcome {
            value: theta,
            vector: vec,
            iterations: j,
            residual,
            converged: residual <= thresh,
        }
    };

    loop {
        op.apply(&v0, &mut w);
        let a = dot(&v0, &w).re;
        alpha.push(a);
        basis.push(std::mem::take(&mut v0));
        scale_est = scale_est.max(a.abs());

        // w <- w - a v_j - b v_{j-1}, then full reorthogonalization (twice).
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let b_next = norm2(&w);
        scale_est = scale_est.max(b_next);

        let j = alpha.len();
        let breakdown = b_next < 1e-13 * scale_est.max(1.0);

        if breakdown {
            // The Krylov space became invariant. If it does not yet span the
            // whole space, the projected minimum may still miss the ground
            // state, so continue in a fresh random direction; a zero residual
            // here is only trustworthy once the basis is complete.
            if j < budget && j < dim {
                let mut injected = false;
                for _ in 0..3 {
                    let mut fresh = random_unit(dim, rng);
                    for _ in 0..2 {
                        for b in &basis {
                            let c = dot(b, &fresh);
                            for (fi, bi) in fresh.iter_mut().zip(b) {
                                *fi -= c * bi;
                            }
                        }
                    }
                    let n = norm2(&fresh);
                    if n > 1e-8 {
                        for z in &mut fresh {
                            *z /= n;
                        }
                        beta.push(0.0);
                        v0 = fresh;
                        injected = true;
                        break;
                    }
                }
                if injected {
                    continue;
                }
            }
            // Basis complete (or budget exhausted): projected answer is final.
            return Ok(finish(&alpha, &beta, &basis, b_next, tol));
        }

        if j % 5 == 0 || j >= budget {
            let (theta, s) = tridiag_lowest(&alpha, &beta);
            let residual = b_next * s[j - 1].abs();
            let thresh = tol * theta.abs().max(1.0);
            if residual <= thresh || j >= budget {
                return Ok(finish(&alpha, &beta, &basis, b_next, tol));
            }
        }

        beta.push(b_next);
        let inv = Complex64::new(1.0 / b_next, 0.0);
        v0 = w.iter().map(|z| z * inv).collect();
    }
}

/// Lowest eigenpair of the real symmetric tridiagonal matrix built from the
/// Lanczos coefficients.
fn tridiag_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let j = alpha.len();
    let mut t = DMatrix::<f64>::zeros(j, j);
    for (i, a) in alpha.iter().enumerate() {
        t[(i, i)] = *a;
    }
    for (i, b) in beta.iter().enumerate().take(j.saturating_sub(1)) {
        t[(i, i + 1)] = *b;
        t[(i + 1, i)] = *b;
    }
    let eig = t.symmetric_eigen();
    let mut best = 0;
    for i in 1..j {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).iter().copied().collect())
}

/// Full eigendecomposition of a dense Hermitian matrix; eigenvalues ascending.
pub(crate) fn hermitian_eig(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape("Hermitian eigen needs a square matrix".into()));
    }
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &eig.eigenvectors.column(old));
    }
    Ok((values, vectors))
}

/// A verified thin singular value decomposition: `a = u * diag(s) * vt` with
/// `u` of shape m x k, `vt` of shape k x n, k = min(m, n), and `s` sorted
/// non-increasing.
pub(crate) struct SvdFactors {
    pub u: Mat,
    pub s: Vec<f64>,
    pub vt: Mat,
}

/// Acceptance threshold for a candidate factorization, relative to the
/// Frobenius norm of the input. Healthy double-precision factorizations land
/// around 1e-14 at the sizes this crate handles; the failure mode this guards
/// against shows up at 1e-2.
const SVD_CHECK_TOL: f64 = 1e-10;

/// Iteration cap handed to nalgebra's implicitly shifted SVD. Zero would mean
/// "run forever", which is not acceptable on inputs where the shift strategy
/// cycles.
const SVD_QR_MAX_ITER: usize = 4096;

/// Sweep cap for the one-sided Jacobi fallback; convergence is quadratic once
/// columns are roughly orthogonal, so this is generous.
const JACOBI_MAX_SWEEPS: usize = 64;

/// A pair of columns is considered orthogonal once the normalized overlap
/// drops below this.
const JACOBI_TOL: f64 = 1e-14;

/// Thin SVD with verified output.
///
/// nalgebra's bidiagonalization SVD can return invalid factors on complex
/// matrices with (nearly) degenerate singular values: the reported values may
/// not even satisfy `sum s_i^2 = |a|_F^2` and the triple can fail to
/// reconstruct the input by parts in 1e-2. Every candidate is therefore
/// checked for orthonormality and reconstruction before being accepted. On
/// rejection the decomposition is redone from the Hermitian eigenproblem of
/// the Gram matrix, and if that also fails the check, by one-sided Jacobi
/// rotations, which are unconditionally stable. The checks cost a few
/// matrix products per call, roughly the price of one extra contraction.
pub(crate) fn robust_svd(a: &Mat) -> Result<SvdFactors> {
    if a.is_empty() {
        return Err(Error::Shape("SVD of an empty matrix".into()));
    }
    if let Some(f) = nalgebra_svd(a) {
        if svd_factors_ok(a, &f) {
            return Ok(f);
        }
    }
    if let Ok(f) = svd_from_gram(a) {
        if svd_factors_ok(a, &f) {
            return Ok(f);
        }
    }
    let f = jacobi_svd(a)?;
    if svd_factors_ok(a, &f) {
        return Ok(f);
    }
    Err(Error::Numerical(
        "singular value decomposition failed verification on every backend".into(),
    ))
}

/// Singular values only, non-increasing, through the same verified path.
pub(crate) fn singular_values(a: &Mat) -> Result<Vec<f64>> {
    robust_svd(a).map(|f| f.s)
}

fn nalgebra_svd(a: &Mat) -> Option<SvdFactors> {
    let svd = nalgebra::SVD::try_new(a.clone(), true, true, f64::EPSILON, SVD_QR_MAX_ITER)?;
    let u = svd.u?;
    let vt = svd.v_t?;
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    if s.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some(SvdFactors { u, s, vt })
}

/// Checks shapes, ordering, orthonormality of both factors, and reconstruction.
///
/// Reconstruction alone would be too weak: `u = a * v * inv(diag(s))` rebuilds
/// the input exactly even when `v` is garbage, so the orthonormality of both
/// sides is what actually pins the factorization down.
fn svd_factors_ok(a: &Mat, f: &SvdFactors) -> bool {
    let k = f.s.len();
    if f.u.nrows() != a.nrows()
        || f.u.ncols() != k
        || f.vt.nrows() != k
        || f.vt.ncols() != a.ncols()
    {
        return false;
    }
    if f.s.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return false;
    }
    if f.s.windows(2).any(|w| w[0] < w[1]) {
        return false;
    }
    let gu = f.u.adjoint() * &f.u;
    let gv = &f.vt * f.vt.adjoint();
    for i in 0..k {
        for j in 0..k {
            let eye = if i == j { 1.0 } else { 0.0 };
            if (gu[(i, j)] - Complex64::new(eye, 0.0)).norm() > SVD_CHECK_TOL {
                return false;
            }
            if (gv[(i, j)] - Complex64::new(eye, 0.0)).norm() > SVD_CHECK_TOL {
                return false;
            }
        }
    }
    let mut scaled = f.u.clone();
    for (j, s) in f.s.iter().enumerate() {
        for z in scaled.column_mut(j).iter_mut() {
            *z *= *s;
        }
    }
    let residual = (scaled * &f.vt - a).norm();
    residual <= SVD_CHECK_TOL * a.norm().max(f64::MIN_POSITIVE)
}

/// SVD from the Hermitian eigendecomposition of the smaller Gram matrix.
///
/// For m >= n: `a^H a = v diag(s^2) v^H`, then `u_i = a v_i / s_i`. Columns
/// belonging to singular values at the noise floor are replaced by an
/// orthonormal completion; they carry no weight in the reconstruction.
fn svd_from_gram(a: &Mat) -> Result<SvdFactors> {
    let (m, n) = (a.nrows(), a.ncols());
    if m < n {
        let f = svd_from_gram(&a.adjoint())?;
        return Ok(SvdFactors {
            u: f.vt.adjoint(),
            s: f.s,
            vt: f.u.adjoint(),
        });
    }
    let gram = a.adjoint() * a;
    let (vals, vecs) = hermitian_eig(&gram)?;
    let k = n;
    // Eigenvalues at the roundoff floor of the Gram matrix are noise; left as
    // tiny positive numbers they would pair a phantom singular value with an
    // arbitrary completion column. Snap them to exact zero.
    let lam_floor = vals.last().copied().unwrap_or(0.0).max(0.0) * f64::EPSILON * n as f64;
    let mut s = vec![0.0; k];
    let mut v = Mat::zeros(n, k);
    for i in 0..k {
        let j = k - 1 - i;
        let lam = vals[j].max(0.0);
        s[i] = if lam > lam_floor { lam.sqrt() } else { 0.0 };
        v.set_column(i, &vecs.column(j));
    }
    orthonormalize_columns(&mut v);
    let mut u = Mat::zeros(m, k);
    for i in 0..k {
        if s[i] > 0.0 {
            let col = a * v.column(i) / Complex64::new(s[i], 0.0);
            u.set_column(i, &col);
        }
    }
    // The division by a small s[i] amplifies whatever leakage v_i carries
    // from the dominant eigenvectors, so the left factor needs cleaning from
    // the largest singular value down; the correction is of order s[i] times
    // roundoff in the reconstruction and therefore harmless.
    orthonormalize_columns(&mut u);
    fill_null_columns(&mut u);
    Ok(SvdFactors { u, s, vt: v.adjoint() })
}

/// Modified Gram-Schmidt, left to right, two projection passes per column.
/// Columns that start near zero or collapse onto earlier ones are zeroed and
/// left for `fill_null_columns`.
fn orthonormalize_columns(u: &mut Mat) {
    let k = u.ncols();
    for i in 0..k {
        let mut col = u.column(i).clone_owned();
        if col.norm() < 0.5 {
            u.column_mut(i).fill(Complex64::new(0.0, 0.0));
            continue;
        }
        for _ in 0..2 {
            for j in 0..i {
                let prev = u.column(j).clone_owned();
                if prev.norm() < 0.5 {
                    continue;
                }
                let overlap = prev.dotc(&col);
                col -= prev * overlap;
            }
        }
        let nrm = col.norm();
        if nrm > 1e-3 {
            col /= Complex64::new(nrm, 0.0);
            u.set_column(i, &col);
        } else {
            u.column_mut(i).fill(Complex64::new(0.0, 0.0));
        }
    }
}

/// Replaces (near-)zero columns with unit vectors orthogonal to all others.
///
/// Needs ncols <= nrows, which every thin factor satisfies.
fn fill_null_columns(u: &mut Mat) {
    let (m, k) = (u.nrows(), u.ncols());
    for i in 0..k {
        if u.column(i).norm() > 0.5 {
            continue;
        }
        for b in 0..m {
            let mut cand = Vecc::zeros(m);
            cand[b] = Complex64::new(1.0, 0.0);
            // Two orthogonalization passes keep the result orthogonal to
            // working precision even when the basis vector starts nearly
            // parallel to an existing column.
            for _ in 0..2 {
                for j in 0..k {
                    if j == i {
                        continue;
                    }
                    let col = u.column(j).clone_owned();
                    let overlap = col.dotc(&cand);
                    cand -= col * overlap;
                }
            }
            let nrm = cand.norm();
            if nrm > 1e-3 {
                cand /= Complex64::new(nrm, 0.0);
                u.set_column(i, &cand);
                break;
            }
        }
    }
}

/// One-sided Jacobi SVD: unitary 2x2 rotations applied on the right until all
/// column pairs are orthogonal, accumulated into `v`; singular values are the
/// final column norms. Slow but unconditionally stable, including for exactly
/// degenerate spectra.
fn jacobi_svd(a: &Mat) -> Result<SvdFactors> {
    let (m, n) = (a.nrows(), a.ncols());
    if m < n {
        let f = jacobi_svd(&a.adjoint())?;
        return Ok(SvdFactors {
            u: f.vt.adjoint(),
            s: f.s,
            vt: f.u.adjoint(),
        });
    }
    let mut b = a.clone();
    let mut v = Mat::identity(n, n);
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut dirty = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let bp = b.column(p).clone_owned();
                let bq = b.column(q).clone_owned();
                let app = bp.norm_squared();
                let aqq = bq.norm_squared();
                let apq = bp.dotc(&bq);
                let scale = (app * aqq).sqrt();
                if scale <= f64::MIN_POSITIVE || apq.norm() <= JACOBI_TOL * scale {
                    continue;
                }
                dirty = true;
                // Diagonalize the 2x2 Gram block [[app, apq], [conj(apq), aqq]]
                // with the rotation of angle at most pi/4; the inner rotation
                // is what makes the cyclic sweep provably convergent, a larger
                // angle would let near-diagonal pairs swap back and forth
                // forever.
                let rho = apq.norm();
                let phase = apq / rho;
                let tau = (aqq - app) / (2.0 * rho);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sig = phase.conj() * (t * cs);
                for i in 0..m {
                    let x = b[(i, p)];
                    let y = b[(i, q)];
                    b[(i, p)] = x * cs + y * sig;
                    b[(i, q)] = -x * sig.conj() + y * cs;
                }
                for i in 0..n {
                    let x = v[(i, p)];
                    let y = v[(i, q)];
                    v[(i, p)] = x * cs + y * sig;
                    v[(i, q)] = -x * sig.conj() + y * cs;
                }
            }
        }
        if !dirty {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("one-sided Jacobi SVD did not converge".into()));
    }
    let raw: Vec<f64> = (0..n).map(|j| b.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| raw[y].partial_cmp(&raw[x]).unwrap());
    let mut s = vec![0.0; n];
    let mut u = Mat::zeros(m, n);
    let mut vs = Mat::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        s[new] = raw[old];
        vs.set_column(new, &v.column(old));
        if raw[old] > 0.0 {
            let col = b.column(old) / Complex64::new(raw[old], 0.0);
            u.set_column(new, &col);
        }
    }
    fill_null_columns(&mut u);
    Ok(SvdFactors { u, s, vt: vs.adjoint() })
}

/// Eigenvalues and (where defined) biorthonormal left/right eigenvectors of a
/// general complex matrix.
pub(crate) struct GeneralEig {
    /// Eigenvalues sorted by non-increasing modulus.
    pub values: Vec<Complex64>,
    /// Right eigenvectors, unit norm; `None` inside defective clusters.
    pub right: Vec<Option<Vecc>>,
    /// Left eigenvectors scaled so that `left[i]^H * right[j] = delta_ij`;
    /// `None` inside defective clusters.
    pub left: Vec<Option<Vecc>>,
    /// True if any eigenvalue cluster had deficient geometric multiplicity.
    pub defective: bool,
}

/// Relative tolerance for declaring two eigenvalue moduli degenerate.
pub(crate) const DEGENERACY_RTOL: f64 = 1e-9;

/// Schur-based general eigendecomposition.
///
/// Right eigenvectors come from guarded back-substitution on the triangular
/// factor, left eigenvectors from the corresponding forward substitution, and
/// each degenerate cluster is biorthonormalized through its (small) Gram
/// matrix. A cluster whose Gram matrix is numerically singular is defective:
/// its eigenvectors are omitted and the result is flagged.
pub(crate) fn general_eig(m: &Mat) -> Result<GeneralEig> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Shape("general eigen needs a square matrix".into()));
    }
    if n == 0 {
        return Ok(GeneralEig {
            values: vec![],
            right: vec![],
            left: vec![],
            defective: false,
        });
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-13, 100_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let tnorm = one_norm(&t).max(f64::MIN_POSITIVE);
    let guard = f64::EPSILON * tnorm;
    let lambdas: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();

    // Right eigenvector of T for eigenvalue at position i: back-substitution.
    let mut rights: Vec<Vecc> = Vec::with_capacity(n);
    for i in 0..n {
        let lam = lambdas[i];
        let mut y = vec![Complex64::zero(); n];
        y[i] = Complex64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut num = Complex64::zero();
            for k in (j + 1)..=i {
                num += t[(j, k)] * y[k];
            }
            let mut den = t[(j, j)] - lam;
            if den.norm() < guard {
                den = Complex64::new(guard, 0.0);
            }
            y[j] = -num / den;
            let mag = y[j].norm();
            if mag > 1e12 {
                // Rescale to keep the substitution bounded; direction is all
                // that matters.
                let inv = Complex64::new(1.0 / mag, 0.0);
                for z in y.iter_mut().take(i + 1) {
                    *z *= inv;
                }
            }
        }
        let yv = Vecc::from_vec(y);
        let v = &q * yv;
        let v = &v / Complex64::new(v.norm(), 0.0);
        rights.push(v);
    }

    // Left eigenvector: z^H T = lam z^H, i.e. forward substitution on T^H.
    let mut lefts: Vec<Vecc> = Vec::with_capacity(n);
    for i in 0..n {
        let lamc = lambdas[i].conj();
        let mut z = vec![Complex64::zero(); n];
        z[i] = Complex64::new(1.0, 0.0);
        for j in (i + 1)..n {
            let mut num = Complex64::zero();
            for k in i..j {
                num += t[(k, j)].conj() * z[k];
            }
            let mut den = lamc - t[(j, j)].conj();
            if den.norm() < guard {
                den = Complex64::new(guard, 0.0);
            }
            z[j] = num / den;
            let mag = z[j].norm();
            if mag > 1e12 {
                let inv = Complex64::new(1.0 / mag, 0.0);
                for w in z.iter_mut().skip(i) {
                    *w *= inv;
                }
            }
        }
        let zv = Vecc::from_vec(z);
        let l = &q * zv;
        let l = &l / Complex64::new(l.norm(), 0.0);
        lefts.push(l);
    }

    // Cluster degenerate eigenvalues and biorthonormalize within each cluster.
    let maxmod = lambdas.iter().map(|l| l.norm()).fold(0.0f64, f64::max);
    let ctol = DEGENERACY_RTOL * maxmod.max(1e-300);
    let mut cluster_of = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let mut found = None;
        for (ci, members) in clusters.iter().enumerate() {
            if (lambdas[members[0]] - lambdas[i]).norm() <= ctol {
                found = Some(ci);
                break;
            }
        }
        match found {
            Some(ci) => {
                cluster_of[i] = ci;
                clusters[ci].push(i);
            }
            None => {
                cluster_of[i] = clusters.len();
                clusters.push(vec![i]);
            }
        }
    }

    let mut right_out: Vec<Option<Vecc>> = rights.into_iter().map(Some).collect();
    let mut left_out: Vec<Option<Vecc>> = lefts.into_iter().map(Some).collect();
    let mut defective = false;

    for members in &clusters {
        let k = members.len();
        let mut g = Mat::zeros(k, k);
        for (a, &ia) in members.iter().enumerate() {
            for (b, &ib) in members.iter().enumerate() {
                g[(a, b)] = left_out[ia].as_ref().unwrap().dotc(right_out[ib].as_ref().unwrap());
            }
        }
        let smin = singular_values(&g)?
            .last()
            .copied()
            .expect("cluster Gram matrix is non-empty");
        // Both vector families are unit-norm here, so a healthy overlap matrix
        // has singular values of order 1/kappa; an absolute floor catches the
        // near-orthogonal left/right pairs of a (numerically) defective block,
        // whose eigenvalues split by ~sqrt(eps) and land in separate clusters.
        if smin <= 1e-8 {
            defective = true;
            for &i in members {
                right_out[i] = None;
                left_out[i] = None;
            }
            continue;
        }
        let ginv = g
            .try_inverse()
            .ok_or_else(|| Error::Numerical("cluster Gram matrix inversion failed".into()))?;
        // New left vectors: l'_a = sum_b conj(ginv[a,b]) l_b, giving
        // l'_a^H r_b = delta_ab within the cluster.
        let olds: Vec<Vecc> = members
            .iter()
            .map(|&i| left_out[i].as_ref().unwrap().clone())
            .collect();
        for (a, &ia) in members.iter().enumerate() {
            let mut acc = Vecc::zeros(n);
            for (b, old) in olds.iter().enumerate() {
                acc += old * ginv[(a, b)].conj();
            }
            left_out[ia] = Some(acc);
        }
    }

    // Sort everything by non-increasing modulus (stable).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambdas[b].norm().partial_cmp(&lambdas[a].norm()).unwrap());
    let values = order.iter().map(|&i| lambdas[i]).collect();
    let right = order.iter().map(|&i| right_out[i].take()).collect();
    let left = order.iter().map(|&i| left_out[i].take()).collect();
    Ok(GeneralEig {
        values,
        right,
        left,
        defective,
    })
}
