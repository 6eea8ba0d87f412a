//! Dense exact diagonalization and density-matrix toolkit for small chains.
//!
//! This is the ground truth the approximate methods are checked against, so
//! it deliberately shares no construction code with the operator compiler:
//! Hamiltonians are rebuilt here by direct Kronecker placement from the
//! [`ModelSpec`] alone, with the spin matrices spelled out locally. The two
//! independent routes are compared entry by entry in tests.
//!
//! Entropies are reported in bits throughout.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, lanczos_lowest, mat_rowmajor, LinOp, Mat};
use crate::model::{Couplings, ModelKind, ModelSpec, OpMatrix};
use crate::mps::Boundary;

/// Largest dense Hilbert space the oracle will build, in states.
pub const DENSE_STATE_CAP: usize = 1 << 14;

/// Pure state vector or density matrix on a chain with known site dimensions.
///
/// Vectors are normalized on construction; densities are accepted if they are
/// Hermitian and unit trace within 1e-8 (then symmetrized and rescaled
/// exactly). Positivity is only checked where a spectrum is actually needed.
#[derive(Clone, Debug)]
pub struct DenseState {
    dims: Vec<usize>,
    body: Body,
}

#[derive(Clone, Debug)]
enum Body {
    Vector(Vec<Complex64>),
    Density(Vec<Complex64>),
}

impl DenseState {
    pub fn from_vector(dims: Vec<usize>, amps: Vec<Complex64>) -> Result<Self> {
        let dim = checked_total(&dims)?;
        if amps.len() != dim {
            return Err(Error::Shape(format!(
                "state vector has {} entries, dims {:?} need {dim}",
                amps.len(),
                dims
            )));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid("state vector has non-finite entries".into()));
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-150 {
            return Err(Error::Numerical("state vector has zero norm".into()));
        }
        let scale = Complex64::from(1.0 / norm);
        Ok(DenseState {
            dims,
            body: Body::Vector(amps.into_iter().map(|z| z * scale).collect()),
        })
    }

    pub fn from_density(dims: Vec<usize>, entries: Vec<Complex64>) -> Result<Self> {
        let dim = checked_total(&dims)?;
        if entries.len() != dim * dim {
            return Err(Error::Shape(format!(
                "density matrix has {} entries, dims {:?} need {}",
                entries.len(),
                dims,
                dim * dim
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid(
                "density matrix has non-finite entries".into(),
            ));
        }
        let mut herm_dev: f64 = 0.0;
        for r in 0..dim {
            for c in r..dim {
                herm_dev = herm_dev.max((entries[r * dim + c] - entries[c * dim + r].conj()).norm());
            }
        }
        if herm_dev > 1e-8 {
            return Err(Error::Invalid(format!(
                "density matrix deviates from Hermitian by {herm_dev:.3e}"
            )));
        }
        let trace: Complex64 = (0..dim).map(|k| entries[k * dim + k]).sum();
        if (trace - Complex64::ONE).norm() > 1e-8 {
            return Err(Error::Invalid(format!(
                "density matrix has trace {trace}, expected 1"
            )));
        }
        let mut sym = vec![Complex64::ZERO; dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                sym[r * dim + c] =
                    (entries[r * dim + c] + entries[c * dim + r].conj()) * Complex64::from(0.5);
            }
        }
        let tr: f64 = (0..dim).map(|k| sym[k * dim + k].re).sum();
        let scale = Complex64::from(1.0 / tr);
        for z in &mut sym {
            *z *= scale;
        }
        Ok(DenseState {
            dims,
            body: Body::Density(sym),
        })
    }

    fn density_unchecked(dims: Vec<usize>, entries: Vec<Complex64>) -> Self {
        DenseState {
            dims,
            body: Body::Density(entries),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_density(&self) -> bool {
        matches!(self.body, Body::Density(_))
    }

    /// Amplitudes of a vector state; `None` for densities.
    pub fn amplitudes(&self) -> Option<&[Complex64]> {
        match &self.body {
            Body::Vector(v) => Some(v),
            Body::Density(_) => None,
        }
    }

    /// Row-major density matrix; vectors are expanded to their projector.
    pub fn density_rowmajor(&self) -> Vec<Complex64> {
        match &self.body {
            Body::Density(m) => m.clone(),
            Body::Vector(v) => {
                let dim = v.len();
                let mut out = vec![Complex64::ZERO; dim * dim];
                for r in 0..dim {
                    for c in 0..dim {
                        out[r * dim + c] = v[r] * v[c].conj();
                    }
                }
                out
            }
        }
    }
}

fn checked_total(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Invalid(format!("invalid site dimensions {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| {
            acc.checked_mul(d).filter(|&v| v <= DENSE_STATE_CAP)
        })
        .ok_or_else(|| Error::Invalid(format!("state space exceeds cap {DENSE_STATE_CAP}")))
}

/// Ground energy, gap, and ground-space dimension of one spectrum.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub ground_energy: f64,
    /// Distance from the ground energy to the first level above the
    /// degeneracy tolerance; zero if no such level was resolved.
    pub gap: f64,
    pub degeneracy: usize,
}

/// Knobs for [`solve_with`].
#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Eigenvalues within this absolute distance of the lowest count as
    /// degenerate.
    pub degeneracy_tol: f64,
    /// Spaces up to this dimension are diagonalized densely; larger ones use
    /// an iterative solver on a matrix-free operator.
    pub dense_cutoff: usize,
    /// Upper bound on the ground-space dimension the iterative path resolves.
    pub max_degeneracy: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            degeneracy_tol: 1e-9,
            dense_cutoff: 2048,
            max_degeneracy: 16,
        }
    }
}

// Local spin matrices, written out so this module stays an independent
// construction route.

fn px() -> Vec<Complex64> {
    [0.0, 1.0, 1.0, 0.0].iter().map(|&v| Complex64::from(v)).collect()
}

fn py() -> Vec<Complex64> {
    vec![
        Complex64::ZERO,
        Complex64::new(0.0, -1.0),
        Complex64::new(0.0, 1.0),
        Complex64::ZERO,
    ]
}

fn pz() -> Vec<Complex64> {
    [1.0, 0.0, 0.0, -1.0].iter().map(|&v| Complex64::from(v)).collect()
}

fn s1x() -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [0.0, s, 0.0, s, 0.0, s, 0.0, s, 0.0]
        .iter()
        .map(|&v| Complex64::from(v))
        .collect()
}

fn s1y() -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        Complex64::ZERO,
        Complex64::new(0.0, -s),
        Complex64::ZERO,
        Complex64::new(0.0, s),
        Complex64::ZERO,
        Complex64::new(0.0, -s),
        Complex64::ZERO,
        Complex64::new(0.0, s),
        Complex64::ZERO,
    ]
}

fn s1z() -> Vec<Complex64> {
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]
        .iter()
        .map(|&v| Complex64::from(v))
        .collect()
}

fn kron_local(a: &[Complex64], da: usize, b: &[Complex64], db: usize) -> Vec<Complex64> {
    let d = da * db;
    let mut out = vec![Complex64::ZERO; d * d];
    for ra in 0..da {
        for ca in 0..da {
            for rb in 0..db {
                for cb in 0..db {
                    out[(ra * db + rb) * d + (ca * db + cb)] = a[ra * da + ca] * b[rb * db + cb];
                }
            }
        }
    }
    out
}

fn matmul_local(a: &[Complex64], b: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::ZERO; d * d];
    for r in 0..d {
        for k in 0..d {
            let v = a[r * d + k];
            if v == Complex64::ZERO {
                continue;
            }
            for c in 0..d {
                out[r * d + c] += v * b[k * d + c];
            }
        }
    }
    out
}

fn axpy_local(acc: &mut [Complex64], scale: f64, m: &[Complex64]) {
    let s = Complex64::from(scale);
    for (a, v) in acc.iter_mut().zip(m) {
        *a += s * v;
    }
}

/// One local term: a dense operator with the listed sites as its factors,
/// first site most significant.
struct Term {
    sites: Vec<usize>,
    op: Vec<Complex64>,
    ldim: usize,
}

/// Site dimension and local terms, rebuilt directly from the model
/// description.
fn spec_terms(spec: &ModelSpec) -> Result<(usize, Vec<Term>)> {
    spec.validate()?;
    let n = spec.n;
    let Couplings { gamma, lambda, j } = spec.couplings;
    let spin_dot = |ops: &[(Vec<Complex64>, usize)]| -> Vec<Complex64> {
        let d = ops[0].1;
        let mut acc = vec![Complex64::ZERO; (d * d) * (d * d)];
        for (m, dd) in ops {
            axpy_local(&mut acc, 1.0, &kron_local(m, *dd, m, *dd));
        }
        acc
    };
    let (d, site, bond, nnn): (
        usize,
        Option<Vec<Complex64>>,
        Option<Vec<Complex64>>,
        Option<Vec<Complex64>>,
    ) = match &spec.kind {
        ModelKind::Xy => {
            let mut bond = vec![Complex64::ZERO; 16];
            axpy_local(&mut bond, -(1.0 + gamma) / 8.0, &kron_local(&px(), 2, &px(), 2));
            axpy_local(&mut bond, -(1.0 - gamma) / 8.0, &kron_local(&py(), 2, &py(), 2));
            let site = if lambda != 0.0 {
                let mut s = vec![Complex64::ZERO; 4];
                axpy_local(&mut s, -lambda / 2.0, &pz());
                Some(s)
            } else {
                None
            };
            (2, site, Some(bond), None)
        }
        ModelKind::HeisenbergSpin1 => {
            let mut bond = spin_dot(&[(s1x(), 3), (s1y(), 3), (s1z(), 3)]);
            for v in &mut bond {
                *v *= Complex64::from(j);
            }
            (3, None, Some(bond), None)
        }
        ModelKind::Aklt => {
            let ss = spin_dot(&[(s1x(), 3), (s1y(), 3), (s1z(), 3)]);
            let ss2 = matmul_local(&ss, &ss, 9);
            let mut bond = vec![Complex64::ZERO; 81];
            axpy_local(&mut bond, 0.5, &ss);
            axpy_local(&mut bond, 1.0 / 6.0, &ss2);
            for k in 0..9 {
                bond[k * 9 + k] += Complex64::from(1.0 / 3.0);
            }
            (3, None, Some(bond), None)
        }
        ModelKind::MajumdarGhosh => {
            let ss = spin_dot(&[(px(), 2), (py(), 2), (pz(), 2)]);
            let mut bond = vec![Complex64::ZERO; 16];
            axpy_local(&mut bond, 2.0, &ss);
            (2, None, Some(bond), Some(ss))
        }
        ModelKind::Custom(t) => (
            t.d,
            t.site.as_ref().map(|m| m.entries().to_vec()),
            t.bond.as_ref().map(|m| m.entries().to_vec()),
            t.nnn.as_ref().map(|m| m.entries().to_vec()),
        ),
    };
    let mut terms = Vec::new();
    if let Some(op) = site {
        for k in 0..n {
            terms.push(Term {
                sites: vec![k],
                op: op.clone(),
                ldim: d,
            });
        }
    }
    let periodic = spec.boundary == Boundary::Periodic;
    if let Some(op) = bond {
        let mut pairs: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if periodic {
            pairs.push((n - 1, 0));
        }
        for (i, k) in pairs {
            terms.push(Term {
                sites: vec![i, k],
                op: op.clone(),
                ldim: d * d,
            });
        }
    }
    if let Some(op) = nnn {
        let mut pairs: Vec<(usize, usize)> = (0..n.saturating_sub(2)).map(|i| (i, i + 2)).collect();
        if periodic {
            pairs.push((n - 2, 0));
            pairs.push((n - 1, 1));
        }
        for (i, k) in pairs {
            terms.push(Term {
                sites: vec![i, k],
                op: op.clone(),
                ldim: d * d,
            });
        }
    }
    Ok((d, terms))
}

/// Matrix-free sum of local terms acting on the full space.
struct TermOp {
    dim: usize,
    /// Per term: (local dim, non-zero entries (lrow, lcol, value), per-factor
    /// (full-space stride, local place value, site dim)).
    terms: Vec<TermPlan>,
}

struct TermPlan {
    entries: Vec<(usize, usize, Complex64)>,
    factors: Vec<(usize, usize, usize)>,
}

impl TermOp {
    fn new(spec: &ModelSpec) -> Result<Self> {
        let (d, terms) = spec_terms(spec)?;
        let n = spec.n;
        let dims = vec![d; n];
        let dim = checked_total(&dims)?;
        let stride = |s: usize| -> usize { dims[s + 1..].iter().product() };
        let plans = terms
            .iter()
            .map(|t| {
                let k = t.sites.len();
                let mut factors = Vec::with_capacity(k);
                for (m, &s) in t.sites.iter().enumerate() {
                    let place: usize = (m + 1..k).map(|_| d).product();
                    factors.push((stride(s), place, d));
                }
                let mut entries = Vec::new();
                for lr in 0..t.ldim {
                    for lc in 0..t.ldim {
                        let v = t.op[lr * t.ldim + lc];
                        if v != Complex64::ZERO {
                            entries.push((lr, lc, v));
                        }
                    }
                }
                TermPlan { entries, factors }
            })
            .collect();
        Ok(TermOp { dim, terms: plans })
    }

    /// Row shift when the local column digits are replaced by row digits.
    fn shift(plan: &TermPlan, f: usize, lrow: usize) -> isize {
        let mut delta = 0isize;
        for &(stride, place, d) in &plan.factors {
            let have = (f / stride) % d;
            let want = (lrow / place) % d;
            delta += (want as isize - have as isize) * stride as isize;
        }
        delta
    }

    fn local_index(plan: &TermPlan, f: usize) -> usize {
        let mut l = 0usize;
        for &(stride, place, d) in &plan.factors {
            l += ((f / stride) % d) * place;
        }
        l
    }
}

impl LinOp for TermOp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for v in y.iter_mut() {
            *v = Complex64::ZERO;
        }
        for plan in &self.terms {
            for f in 0..self.dim {
                let xv = x[f];
                if xv == Complex64::ZERO {
                    continue;
                }
                let lcol = Self::local_index(plan, f);
                for &(lr, lc, v) in &plan.entries {
                    if lc != lcol {
                        continue;
                    }
                    let row = (f as isize + Self::shift(plan, f, lr)) as usize;
                    y[row] += v * xv;
                }
            }
        }
    }
}

/// Full Hamiltonian of the model as a dense matrix, built by direct
/// Kronecker placement of its local terms.
pub fn dense_hamiltonian(spec: &ModelSpec) -> Result<OpMatrix> {
    let (d, terms) = spec_terms(spec)?;
    let dims = vec![d; spec.n];
    let dim = checked_total(&dims)?;
    let stride = |s: usize| -> usize { dims[s + 1..].iter().product() };
    let mut h = vec![Complex64::ZERO; dim * dim];
    for t in &terms {
        let k = t.sites.len();
        let places: Vec<usize> = (0..k).map(|m| (m + 1..k).map(|_| d).product()).collect();
        let strides: Vec<usize> = t.sites.iter().map(|&s| stride(s)).collect();
        for f in 0..dim {
            let mut lcol = 0usize;
            for m in 0..k {
                lcol += ((f / strides[m]) % d) * places[m];
            }
            for lrow in 0..t.ldim {
                let v = t.op[lrow * t.ldim + lcol];
                if v == Complex64::ZERO {
                    continue;
                }
                let mut row = f;
                for m in 0..k {
                    let have = (f / strides[m]) % d;
                    let want = (lrow / places[m]) % d;
                    row = row - have * strides[m] + want * strides[m];
                }
                h[row * dim + f] += v;
            }
        }
    }
    OpMatrix::new(dim, h)
}

/// Ground data of the model: spectrum summary plus an orthonormal basis of
/// the resolved ground space.
pub fn solve(spec: &ModelSpec) -> Result<(SpectralSummary, Vec<DenseState>)> {
    solve_with(spec, &SolveOptions::default())
}

pub fn solve_with(
    spec: &ModelSpec,
    opts: &SolveOptions,
) -> Result<(SpectralSummary, Vec<DenseState>)> {
    spec.validate()?;
    let (d, _) = spec_terms(spec)?;
    let dims = vec![d; spec.n];
    let dim = checked_total(&dims)?;
    if dim <= opts.dense_cutoff {
        let h = dense_hamiltonian(spec)?;
        let (values, vectors) = hermitian_eig(&h.to_mat())?;
        let e0 = values[0];
        let degeneracy = values
            .iter()
            .take_while(|&&v| v < e0 + opts.degeneracy_tol)
            .count();
        let gap = if degeneracy < dim {
            values[degeneracy] - e0
        } else {
            0.0
        };
        let ground = (0..degeneracy)
            .map(|k| {
                DenseState::from_vector(dims.clone(), vectors.column(k).iter().copied().collect())
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok((
            SpectralSummary {
                ground_energy: e0,
                gap,
                degeneracy,
            },
            ground,
        ));
    }

    // Iterative path: deflate resolved vectors upward and keep extracting the
    // lowest state until one lands above the degeneracy window.
    let op = TermOp::new(spec)?;
    let width: f64 = op
        .terms
        .iter()
        .map(|p| p.entries.iter().map(|(_, _, v)| v.norm()).sum::<f64>())
        .sum();
    let shift = 4.0 * (width + 1.0);
    let mut rng = ChaCha12Rng::seed_from_u64(0x0e_d0_5eed);
    let mut found: Vec<(f64, Vec<Complex64>)> = Vec::new();
    let max_iter = 700.min(dim + 16);
    loop {
        let deflated = Deflated {
            base: &op,
            shift,
            lifted: found.iter().map(|(_, v)| v.clone()).collect(),
        };
        let out = lanczos_lowest(&deflated, None, 1e-11, max_iter, &mut rng)?;
        if !out.converged {
            return Err(Error::NoConvergence(format!(
                "iterative eigensolver stalled at residual {:.3e}",
                out.residual
            )));
        }
        let mut vec = out.vector;
        orthonormalize_against(&mut vec, &found)?;
        let value = out.value;
        let e0 = found.first().map_or(value, |(v, _)| *v);
        if !found.is_empty() && value > e0 + opts.degeneracy_tol {
            let degeneracy = found.len();
            let ground = found
                .into_iter()
                .map(|(_, v)| DenseState::from_vector(dims.clone(), v))
                .collect::<Result<Vec<_>>>()?;
            return Ok((
                SpectralSummary {
                    ground_energy: e0,
                    gap: value - e0,
                    degeneracy,
                },
                ground,
            ));
        }
        found.push((value, vec));
        if found.len() >= opts.max_degeneracy || found.len() >= dim {
            let degeneracy = found.len();
            let e0 = found[0].0;
            let ground = found
                .into_iter()
                .map(|(_, v)| DenseState::from_vector(dims.clone(), v))
                .collect::<Result<Vec<_>>>()?;
            return Ok((
                SpectralSummary {
                    ground_energy: e0,
                    gap: 0.0,
                    degeneracy,
                },
                ground,
            ));
        }
    }
}

struct Deflated<'a> {
    base: &'a TermOp,
    shift: f64,
    lifted: Vec<Vec<Complex64>>,
}

impl LinOp for Deflated<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.base.apply(x, y);
        for v in &self.lifted {
            let amp: Complex64 = v.iter().zip(x).map(|(a, b)| a.conj() * b).sum();
            let s = amp * Complex64::from(self.shift);
            for (yk, vk) in y.iter_mut().zip(v) {
                *yk += s * vk;
            }
        }
    }
}

fn orthonormalize_against(vec: &mut [Complex64], found: &[(f64, Vec<Complex64>)]) -> Result<()> {
    for _ in 0..2 {
        for (_, prev) in found {
            let amp: Complex64 = prev.iter().zip(vec.iter()).map(|(a, b)| a.conj() * b).sum();
            for (v, p) in vec.iter_mut().zip(prev) {
                *v -= amp * p;
            }
        }
    }
    let norm = vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-8 {
        return Err(Error::Numerical(
            "deflated eigenvector collapsed onto the resolved space".into(),
        ));
    }
    let s = Complex64::from(1.0 / norm);
    for v in vec.iter_mut() {
        *v *= s;
    }
    Ok(())
}

/// Thermal state `exp(-beta H) / tr exp(-beta H)` of the model.
pub fn gibbs(spec: &ModelSpec, beta: f64) -> Result<DenseState> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::Invalid(format!(
            "inverse temperature must be finite and non-negative, got {beta}"
        )));
    }
    let h = dense_hamiltonian(spec)?;
    let dim = h.dim();
    let (values, vectors) = hermitian_eig(&h.to_mat())?;
    // Weights are shifted by the ground energy so the exponentials stay in
    // range for any beta.
    let raw: Vec<f64> = values.iter().map(|&v| (-beta * (v - values[0])).exp()).collect();
    let z: f64 = raw.iter().sum();
    let mut weighted = vectors.clone();
    for k in 0..dim {
        let w = Complex64::from(raw[k] / z);
        for r in 0..dim {
            weighted[(r, k)] *= w;
        }
    }
    let rho = weighted * vectors.adjoint();
    let d = spec_terms(spec)?.0;
    Ok(DenseState::density_unchecked(
        vec![d; spec.n],
        mat_rowmajor(&rho),
    ))
}

fn check_region(region: &[usize], n: usize) -> Result<()> {
    if region.is_empty() {
        return Err(Error::Invalid("region is empty".into()));
    }
    if region.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(format!(
            "region {region:?} must be strictly increasing"
        )));
    }
    if *region.last().unwrap() >= n {
        return Err(Error::Invalid(format!(
            "region {region:?} exceeds chain of {n} sites"
        )));
    }
    Ok(())
}

/// Full-space index contribution of every basis label of the subset `sites`.
fn index_map(dims: &[usize], sites: &[usize]) -> Vec<usize> {
    let n = dims.len();
    let stride: Vec<usize> = (0..n).map(|s| dims[s + 1..].iter().product()).collect();
    let sub_dims: Vec<usize> = sites.iter().map(|&s| dims[s]).collect();
    let total: usize = sub_dims.iter().product();
    let mut out = vec![0usize; total];
    for (idx, slot) in out.iter_mut().enumerate() {
        let mut rem = idx;
        let mut f = 0usize;
        for (m, &s) in sites.iter().enumerate() {
            let place: usize = sub_dims[m + 1..].iter().product();
            let digit = (rem / place) % dims[s];
            rem -= digit * place;
            f += digit * stride[s];
        }
        *slot = f;
    }
    out
}

/// Reduced density matrix on `region`, tracing out the complement.
pub fn reduce(state: &DenseState, region: &[usize]) -> Result<DenseState> {
    let n = state.n_sites();
    check_region(region, n)?;
    let dims = state.dims().to_vec();
    let rest: Vec<usize> = (0..n).filter(|s| !region.contains(s)).collect();
    let fa = index_map(&dims, region);
    let fb = index_map(&dims, &rest);
    let dim_a = fa.len();
    let dim_b = fb.len();
    let keep_dims: Vec<usize> = region.iter().map(|&s| dims[s]).collect();
    match &state.body {
        Body::Vector(amps) => {
            let mut m = Mat::zeros(dim_a, dim_b);
            for (ia, &fva) in fa.iter().enumerate() {
                for (ib, &fvb) in fb.iter().enumerate() {
                    m[(ia, ib)] = amps[fva + fvb];
                }
            }
            let rho = &m * m.adjoint();
            Ok(DenseState::density_unchecked(keep_dims, mat_rowmajor(&rho)))
        }
        Body::Density(entries) => {
            let dim = state.total_dim();
            let mut rho = vec![Complex64::ZERO; dim_a * dim_a];
            for (ia, &fra) in fa.iter().enumerate() {
                for (ja, &fca) in fa.iter().enumerate() {
                    let mut acc = Complex64::ZERO;
                    for &fvb in &fb {
                        acc += entries[(fra + fvb) * dim + (fca + fvb)];
                    }
                    rho[ia * dim_a + ja] = acc;
                }
            }
            Ok(DenseState::density_unchecked(keep_dims, rho))
        }
    }
}

/// Spectrum of a density matrix, validated non-negative within 1e-10.
fn density_spectrum(state: &DenseState) -> Result<Vec<f64>> {
    match &state.body {
        Body::Vector(_) => Ok(vec![1.0]),
        Body::Density(entries) => {
            let dim = state.total_dim();
            let mut m = Mat::zeros(dim, dim);
            for r in 0..dim {
                for c in 0..dim {
                    m[(r, c)] = entries[r * dim + c];
                }
            }
            let (values, _) = hermitian_eig(&m)?;
            if let Some(&worst) = values.first() {
                if worst < -1e-10 {
                    return Err(Error::Numerical(format!(
                        "density matrix has negative weight {worst:.3e}"
                    )));
                }
            }
            Ok(values.into_iter().map(|v| v.max(0.0)).collect())
        }
    }
}

fn entropy_bits(spectrum: &[f64]) -> f64 {
    -spectrum
        .iter()
        .filter(|&&p| p > 1e-300)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

fn renyi_bits(spectrum: &[f64], alpha: f64) -> f64 {
    if alpha.is_infinite() {
        let pmax = spectrum.iter().cloned().fold(0.0f64, f64::max);
        return -pmax.log2();
    }
    let z: f64 = spectrum.iter().filter(|&&p| p > 1e-300).map(|&p| p.powf(alpha)).sum();
    z.log2() / (1.0 - alpha)
}

/// Entanglement and correlation measures of one bipartition.
///
/// All values are in bits. `negativity` is the trace norm of the partial
/// transpose minus one.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EntropySuite {
    pub von_neumann: f64,
    pub renyi_half: f64,
    pub renyi_two: f64,
    pub min_entropy: f64,
    pub mutual_information: f64,
    pub negativity: f64,
}

/// Entropy suite of `state` across the bipartition (`region`, complement).
pub fn entropy_suite(state: &DenseState, region: &[usize]) -> Result<EntropySuite> {
    let n = state.n_sites();
    check_region(region, n)?;
    let rho_a = reduce(state, region)?;
    let spec_a = density_spectrum(&rho_a)?;
    let s_a = entropy_bits(&spec_a);
    let rest: Vec<usize> = (0..n).filter(|s| !region.contains(s)).collect();
    let s_b = if rest.is_empty() {
        0.0
    } else {
        entropy_bits(&density_spectrum(&reduce(state, &rest)?)?)
    };
    let s_full = entropy_bits(&density_spectrum(state)?);
    let dims = state.dims();
    let dim = state.total_dim();
    let rho = state.density_rowmajor();
    let fa = index_map(dims, region);
    let fb = index_map(dims, &rest);
    let mut pt = Mat::zeros(dim, dim);
    for &fia in &fa {
        for &fja in &fa {
            for &fib in &fb {
                for &fjb in &fb {
                    // Row and column swap their region-A labels.
                    pt[(fja + fib, fia + fjb)] = rho[(fia + fib) * dim + (fja + fjb)];
                }
            }
        }
    }
    let (pt_eigs, _) = hermitian_eig(&pt)?;
    let trace_norm: f64 = pt_eigs.iter().map(|v| v.abs()).sum();
    Ok(EntropySuite {
        von_neumann: s_a,
        renyi_half: renyi_bits(&spec_a, 0.5),
        renyi_two: renyi_bits(&spec_a, 2.0),
        min_entropy: renyi_bits(&spec_a, f64::INFINITY),
        mutual_information: s_a + s_b - s_full,
        negativity: trace_norm - 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{build_fixture, FixtureKind};
    use crate::model::{pauli_x, pauli_y};
    use crate::mpo::build_mpo;
    use rand::Rng;

    fn xy_spec(n: usize, gamma: f64, lambda: f64, boundary: Boundary) -> ModelSpec {
        let mut spec = ModelSpec::new(ModelKind::Xy, n, boundary);
        spec.couplings.gamma = gamma;
        spec.couplings.lambda = lambda;
        spec
    }

    #[test]
    fn xy_two_site_matrix_matches_hand_kronecker() {
        let spec = xy_spec(2, 0.0, 0.0, Boundary::Open);
        let h = dense_hamiltonian(&spec).unwrap();
        let want = pauli_x()
            .kron(&pauli_x())
            .plus(&pauli_y().kron(&pauli_y()))
            .unwrap()
            .scaled(-1.0 / 8.0);
        assert!(h.max_abs_diff(&want).unwrap() < 1e-15);
    }

    #[test]
    fn single_open_site_feels_only_the_field() {
        let spec = xy_spec(1, 0.3, 0.7, Boundary::Open);
        let (summary, ground) = solve(&spec).unwrap();
        assert!((summary.ground_energy + 0.35).abs() < 1e-12);
        assert!((summary.gap - 0.7).abs() < 1e-12);
        assert_eq!(summary.degeneracy, 1);
        let amp = ground[0].amplitudes().unwrap();
        assert!((amp[0].norm() - 1.0).abs() < 1e-10);
        // The operator compiler agrees on the degenerate chain length.
        let dense = build_mpo(&spec).unwrap().densify().unwrap();
        assert!(dense.max_abs_diff(&dense_hamiltonian(&spec).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn json_round_trip_reproduces_the_matrix() {
        let spec = xy_spec(4, 0.25, 0.6, Boundary::Periodic);
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        let a = dense_hamiltonian(&spec).unwrap();
        let b = dense_hamiltonian(&back).unwrap();
        assert_eq!(a.max_abs_diff(&b).unwrap(), 0.0);
    }

    #[test]
    fn dense_matches_mpo_densification_across_models() {
        let specs = vec![
            xy_spec(5, 0.5, 0.3, Boundary::Open),
            xy_spec(5, 0.5, 0.3, Boundary::Periodic),
            ModelSpec::new(ModelKind::HeisenbergSpin1, 4, Boundary::Open),
            ModelSpec::new(ModelKind::HeisenbergSpin1, 4, Boundary::Periodic),
            ModelSpec::new(ModelKind::Aklt, 4, Boundary::Open),
            ModelSpec::new(ModelKind::MajumdarGhosh, 5, Boundary::Open),
            ModelSpec::new(ModelKind::MajumdarGhosh, 5, Boundary::Periodic),
        ];
        for spec in &specs {
            let direct = dense_hamiltonian(spec).unwrap();
            let via_mpo = build_mpo(spec).unwrap().densify().unwrap();
            let diff = direct.max_abs_diff(&via_mpo).unwrap();
            assert!(
                diff < 1e-12,
                "{:?} {:?}: routes differ by {diff:.3e}",
                spec.kind,
                spec.boundary
            );
            assert!(direct.hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn aklt_rings_have_zero_ground_energy_with_the_fixture_in_the_kernel() {
        for n in [3usize, 4] {
            let spec = ModelSpec::new(ModelKind::Aklt, n, Boundary::Periodic);
            let (summary, _) = solve(&spec).unwrap();
            assert!(
                summary.ground_energy.abs() < 1e-10,
                "n={n}: E0 = {:.3e}",
                summary.ground_energy
            );
            assert_eq!(summary.degeneracy, 1, "n={n}");
            let psi = build_fixture(&FixtureKind::Aklt, n, Boundary::Periodic)
                .unwrap()
                .to_dense()
                .unwrap();
            let h = dense_hamiltonian(&spec).unwrap();
            let dim = h.dim();
            let mut residual: f64 = 0.0;
            for r in 0..dim {
                let mut acc = Complex64::ZERO;
                for c in 0..dim {
                    acc += h.get(r, c) * psi[c];
                }
                residual = residual.max(acc.norm());
            }
            assert!(residual < 1e-10, "n={n}: |H psi| = {residual:.3e}");
        }
    }

    #[test]
    fn aklt_open_chain_has_edge_degeneracy_four() {
        let spec = ModelSpec::new(ModelKind::Aklt, 4, Boundary::Open);
        let (summary, ground) = solve(&spec).unwrap();
        assert!(summary.ground_energy.abs() < 1e-10);
        assert_eq!(summary.degeneracy, 4);
        assert!((summary.gap - 0.448955866).abs() < 1e-6);
        assert_eq!(ground.len(), 4);
    }

    #[test]
    fn mg_degeneracy_counts_dimer_coverings() {
        // An open even chain has exactly one complete nearest-neighbor dimer
        // covering; a ring has two.
        for (n, boundary, e0, deg, gap) in [
            (6, Boundary::Open, -18.0, 1, 4.233035815059),
            (8, Boundary::Open, -24.0, 1, 3.547831274699),
            (6, Boundary::Periodic, -18.0, 2, 4.0),
        ] {
            let spec = ModelSpec::new(ModelKind::MajumdarGhosh, n, boundary);
            let (summary, ground) = solve(&spec).unwrap();
            assert!(
                (summary.ground_energy - e0).abs() < 1e-9,
                "n={n} {boundary:?}: E0 = {}",
                summary.ground_energy
            );
            assert_eq!(summary.degeneracy, deg, "n={n} {boundary:?}");
            assert!(
                (summary.gap - gap).abs() < 1e-6,
                "n={n} {boundary:?}: gap = {}",
                summary.gap
            );
            assert_eq!(ground.len(), deg);
        }
    }

    #[test]
    fn iterative_and_dense_paths_agree() {
        let spec = xy_spec(9, 0.4, 0.2, Boundary::Open);
        let dense = solve_with(
            &spec,
            &SolveOptions {
                dense_cutoff: 2048,
                ..SolveOptions::default()
            },
        )
        .unwrap()
        .0;
        let iterative = solve_with(
            &spec,
            &SolveOptions {
                dense_cutoff: 64,
                ..SolveOptions::default()
            },
        )
        .unwrap()
        .0;
        assert!((dense.ground_energy - iterative.ground_energy).abs() < 1e-9);
        assert_eq!(dense.degeneracy, iterative.degeneracy);
        assert!((dense.gap - iterative.gap).abs() < 1e-7);
    }

    #[test]
    fn mg_twelve_sites_solves_iteratively_to_the_dimer_energy() {
        let spec = ModelSpec::new(ModelKind::MajumdarGhosh, 12, Boundary::Open);
        let (summary, _) = solve(&spec).unwrap();
        assert!((summary.ground_energy + 36.0).abs() < 1e-8);
        assert_eq!(summary.degeneracy, 1);
        assert!(summary.gap > 1.0);
    }

    #[test]
    fn gibbs_interpolates_between_mixed_and_ground() {
        let spec = xy_spec(4, 1.0, 1.5, Boundary::Open);
        let dim = 16;
        let flat = gibbs(&spec, 0.0).unwrap();
        let rho0 = flat.density_rowmajor();
        let mut dev: f64 = 0.0;
        for r in 0..dim {
            for c in 0..dim {
                let want = if r == c {
                    Complex64::from(1.0 / dim as f64)
                } else {
                    Complex64::ZERO
                };
                dev = dev.max((rho0[r * dim + c] - want).norm());
            }
        }
        assert!(dev < 1e-12, "infinite temperature misses the flat state");

        let (summary, ground) = solve(&spec).unwrap();
        assert_eq!(summary.degeneracy, 1);
        let cold = gibbs(&spec, 50.0).unwrap().density_rowmajor();
        let g = ground[0].amplitudes().unwrap();
        let mut fidelity = Complex64::ZERO;
        for r in 0..dim {
            for c in 0..dim {
                fidelity += g[r].conj() * cold[r * dim + c] * g[c];
            }
        }
        assert!(fidelity.re > 1.0 - 1e-8, "cold-state fidelity {fidelity}");

        let h = dense_hamiltonian(&spec).unwrap();
        let energy = |rho: &[Complex64]| -> f64 {
            let mut e = Complex64::ZERO;
            for r in 0..dim {
                for c in 0..dim {
                    e += rho[r * dim + c] * h.get(c, r);
                }
            }
            e.re
        };
        let energies: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 5.0]
            .iter()
            .map(|&b| energy(&gibbs(&spec, b).unwrap().density_rowmajor()))
            .collect();
        for pair in energies.windows(2) {
            assert!(pair[1] < pair[0] + 1e-12, "energy rose with beta: {energies:?}");
        }
    }

    #[test]
    fn reduce_handles_product_ghz_and_full_regions() {
        // Product state: every reduction is pure.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 5;
        let mut amps = vec![Complex64::ONE];
        for _ in 0..n {
            let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let mut next = Vec::with_capacity(amps.len() * 2);
            for v in &amps {
                next.push(v * a);
                next.push(v * b);
            }
            amps = next;
        }
        let product = DenseState::from_vector(vec![2; n], amps).unwrap();
        let rho = reduce(&product, &[1, 3]).unwrap();
        let spectrum = density_spectrum(&rho).unwrap();
        assert!(entropy_bits(&spectrum) < 1e-10);
        assert!((spectrum.last().unwrap() - 1.0).abs() < 1e-10);

        // GHZ reduction is an even mixture of the two aligned strings.
        let ghz = build_fixture(&FixtureKind::Ghz, n, Boundary::Open).unwrap();
        let ghz = DenseState::from_vector(vec![2; n], ghz.to_dense().unwrap()).unwrap();
        let rho = reduce(&ghz, &[0, 2]).unwrap();
        let m = rho.density_rowmajor();
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c && (r == 0 || r == 3) { 0.5 } else { 0.0 };
                assert!(
                    (m[r * 4 + c] - Complex64::from(want)).norm() < 1e-12,
                    "({r},{c})"
                );
            }
        }

        // Full region returns the state's own density matrix.
        let rho_full = reduce(&ghz, &[0, 1, 2, 3, 4]).unwrap();
        let a = rho_full.density_rowmajor();
        let b = ghz.density_rowmajor();
        let dev = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(dev < 1e-12);

        // Invalid regions.
        assert!(reduce(&ghz, &[]).is_err());
        assert!(reduce(&ghz, &[2, 1]).is_err());
        assert!(reduce(&ghz, &[1, 1]).is_err());
        assert!(reduce(&ghz, &[0, 5]).is_err());
    }

    #[test]
    fn entropy_suite_examples_hold() {
        // Separable product of two mixed halves: no mutual information, no
        // negativity.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mixed = |rng: &mut ChaCha12Rng| -> Vec<Complex64> {
            let p = rng.gen_range(0.1..0.9);
            vec![
                Complex64::from(p),
                Complex64::ZERO,
                Complex64::ZERO,
                Complex64::from(1.0 - p),
            ]
        };
        let a = mixed(&mut rng);
        let b = mixed(&mut rng);
        let mut joint = vec![Complex64::ZERO; 16];
        for ra in 0..2 {
            for ca in 0..2 {
                for rb in 0..2 {
                    for cb in 0..2 {
                        joint[(ra * 2 + rb) * 4 + (ca * 2 + cb)] = a[ra * 2 + ca] * b[rb * 2 + cb];
                    }
                }
            }
        }
        let state = DenseState::from_density(vec![2, 2], joint).unwrap();
        let suite = entropy_suite(&state, &[0]).unwrap();
        assert!(suite.mutual_information.abs() < 1e-10);
        assert!(suite.negativity.abs() < 1e-10);

        // Pure bipartite state: mutual information doubles the entropy and
        // the suite's orders are consistent.
        let dim = 64;
        let amps: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let pure = DenseState::from_vector(vec![2; 6], amps).unwrap();
        let suite = entropy_suite(&pure, &[0, 1]).unwrap();
        assert!((suite.mutual_information - 2.0 * suite.von_neumann).abs() < 1e-10);
        assert!(suite.renyi_half >= suite.von_neumann - 1e-12);
        assert!(suite.von_neumann >= suite.renyi_two - 1e-12);
        assert!(suite.renyi_two >= suite.min_entropy - 1e-12);

        // GHZ across any cut: one bit of entropy, negativity one.
        let ghz = build_fixture(&FixtureKind::Ghz, 6, Boundary::Open).unwrap();
        let ghz = DenseState::from_vector(vec![2; 6], ghz.to_dense().unwrap()).unwrap();
        for cut in [1usize, 3, 5] {
            let region: Vec<usize> = (0..cut).collect();
            let suite = entropy_suite(&ghz, &region).unwrap();
            assert!((suite.von_neumann - 1.0).abs() < 1e-10, "cut {cut}");
            assert!((suite.negativity - 1.0).abs() < 1e-10, "cut {cut}");
        }
    }

    #[test]
    fn entropy_bound_and_log_negativity_hold_on_random_pures() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 6;
        for round in 0..100 {
            let amps: Vec<Complex64> = (0..64)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let state = DenseState::from_vector(vec![2; n], amps).unwrap();
            let size = rng.gen_range(1..n);
            let mut sites: Vec<usize> = (0..n).collect();
            for k in 0..size {
                let pick = rng.gen_range(k..n);
                sites.swap(k, pick);
            }
            let mut region: Vec<usize> = sites[..size].to_vec();
            region.sort_unstable();
            let suite = entropy_suite(&state, &region).unwrap();
            assert!(
                suite.von_neumann <= size as f64 + 1e-9,
                "round {round}: entropy beats the region size"
            );
            let log_neg = (suite.negativity + 1.0).log2();
            assert!(
                log_neg >= suite.von_neumann - 1e-9,
                "round {round}: log-negativity {log_neg} below entropy {}",
                suite.von_neumann
            );
        }
    }

    #[test]
    fn thermal_mutual_information_is_bounded_across_cuts() {
        let spec = xy_spec(8, 0.5, 0.4, Boundary::Open);
        let rho = gibbs(&spec, 1.0).unwrap();
        let values: Vec<f64> = (1..8)
            .map(|k| {
                let region: Vec<usize> = (0..k).collect();
                entropy_suite(&rho, &region).unwrap().mutual_information
            })
            .collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(0.0f64, f64::max);
        assert!(lo >= -1e-10, "mutual information went negative: {values:?}");
        // Growing the region does not grow the cross-cut information: the
        // profile stays flat instead of scaling with region size.
        assert!(
            hi <= 1.1 * values[0] + 1e-9,
            "profile not flat: {values:?}"
        );
        assert!(hi < 0.2, "beta=1 information unexpectedly large: {values:?}");
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let spec = xy_spec(15, 0.0, 0.0, Boundary::Open);
        assert!(dense_hamiltonian(&spec).is_err());
        assert!(solve(&spec).is_err());
        let small = xy_spec(3, 0.0, 0.0, Boundary::Open);
        assert!(gibbs(&small, -1.0).is_err());
        assert!(gibbs(&small, f64::NAN).is_err());
        // Density matrix with a genuinely negative eigenvalue passes the
        // constructor (it is Hermitian with unit trace) but entropy fails.
        let bad = DenseState::from_density(
            vec![2],
            vec![
                Complex64::from(1.5),
                Complex64::ZERO,
                Complex64::ZERO,
                Complex64::from(-0.5),
            ],
        )
        .unwrap();
        assert!(entropy_suite(&bad, &[0]).is_err());
        // Vector constructor is strict about shape.
        assert!(DenseState::from_vector(vec![2, 2], vec![Complex64::ONE; 3]).is_err());
        assert!(DenseState::from_vector(vec![2], vec![Complex64::ZERO; 2]).is_err());
    }
}
