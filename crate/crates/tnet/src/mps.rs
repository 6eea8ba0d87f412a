//! Matrix product states on open or periodic chains.
//!
//! Every site tensor carries the legs `("vl", "p", "vr")`: left virtual bond,
//! physical index, right virtual bond. Open chains pin the outer bonds to
//! extent 1; periodic chains close the loop, so amplitudes are bond traces.
//! Schmidt weights stored on a state are squared Schmidt values per internal
//! cut, normalized to unit trace.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::tensor::{tensor_to_dmatrix, Tensor, TruncationSpec};

/// Boundary condition of the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Orthogonality structure currently guaranteed by the site tensors.
///
/// `Left` means every site except the last satisfies
/// `sum_j A_j^H A_j = identity` (the last carries the state norm); `Right`
/// mirrors this with `sum_j A_j A_j^H = identity` on every site except the
/// first; `Mixed(c)` has left-orthonormal sites before `c`, right-orthonormal
/// sites after it, and the norm concentrated at site `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gauge {
    None,
    Left,
    Right,
    Mixed(usize),
}

/// Largest dense dimension [`MatrixProductState::to_dense`] will materialize.
pub const DENSE_CAP: usize = 1 << 20;

/// Largest admissible condition number for a gauge transformation.
pub const MAX_GAUGE_COND: f64 = 1e12;

/// A chain of site tensors with labels `("vl", "p", "vr")`.
#[derive(Clone, Debug)]
pub struct MatrixProductState {
    pub(crate) tensors: Vec<Tensor>,
    pub(crate) boundary: Boundary,
    pub(crate) gauge: Gauge,
    pub(crate) schmidt_weights: Option<Vec<Vec<f64>>>,
}

/// Entanglement diagnostics for one cut of an open chain.
///
/// `schmidt_values` are non-increasing and strictly positive;
/// `spectrum_of_rho_a` holds their squares (the reduced-state eigenvalues,
/// unit sum); `entanglement_hamiltonian_levels` are the natural-log levels
/// `-ln p` of the reduced state written as `exp(-H)`. All entropies are in
/// bits.
#[derive(Clone, Debug)]
pub struct EntanglementData {
    pub cut: usize,
    pub schmidt_values: Vec<f64>,
    pub spectrum_of_rho_a: Vec<f64>,
    pub entanglement_hamiltonian_levels: Vec<f64>,
    pub von_neumann: f64,
}

impl EntanglementData {
    /// Build from squared Schmidt values; sorts, drops exact zeros, and
    /// renormalizes defensively.
    pub(crate) fn from_weights(cut: usize, mut weights: Vec<f64>) -> Result<Self> {
        weights.retain(|&p| p > 0.0);
        if weights.is_empty() {
            return Err(Error::Numerical("empty Schmidt spectrum at cut".into()));
        }
        weights.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = weights.iter().sum();
        if total < 1e-300 {
            return Err(Error::Numerical("Schmidt spectrum has zero weight".into()));
        }
        for p in &mut weights {
            *p /= total;
        }
        let von_neumann = -weights
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2())
            .sum::<f64>();
        Ok(EntanglementData {
            cut,
            schmidt_values: weights.iter().map(|&p| p.sqrt()).collect(),
            entanglement_hamiltonian_levels: weights.iter().map(|&p| -p.ln()).collect(),
            spectrum_of_rho_a: weights,
            von_neumann,
        })
    }

    /// Number of Schmidt values counted as nonzero (relative floor 1e-24 on
    /// the squared values).
    pub fn rank(&self) -> usize {
        let floor = self.spectrum_of_rho_a[0] * 1e-24;
        self.spectrum_of_rho_a.iter().filter(|&&p| p > floor).count()
    }

    /// Renyi entropy of order `alpha`, in bits.
    ///
    /// `alpha = 0` counts the rank, `alpha = 1` is the von Neumann limit,
    /// `alpha = infinity` is the min-entropy `-log2(max p)`.
    pub fn renyi(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return (self.rank() as f64).log2();
        }
        if alpha.is_infinite() {
            return -self.spectrum_of_rho_a[0].log2();
        }
        if (alpha - 1.0).abs() < 1e-9 {
            return self.von_neumann;
        }
        let z: f64 = self.spectrum_of_rho_a.iter().map(|&p| p.powf(alpha)).sum();
        z.log2() / (1.0 - alpha)
    }
}

impl MatrixProductState {
    /// Wrap raw site tensors after validating leg structure and bond
    /// compatibility. No gauge is claimed.
    pub fn from_site_tensors(tensors: Vec<Tensor>, boundary: Boundary) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Invalid("a chain needs at least one site".into()));
        }
        for (k, t) in tensors.iter().enumerate() {
            if t.rank() != 3 || !t.has_label("vl") || !t.has_label("p") || !t.has_label("vr") {
                return Err(Error::Label(format!(
                    "site {k} must carry exactly the legs (vl, p, vr), got {:?}",
                    t.labels()
                )));
            }
        }
        let n = tensors.len();
        for k in 0..n {
            let next = (k + 1) % n;
            let joined = k + 1 < n || boundary == Boundary::Periodic;
            if joined && tensors[k].dim_of("vr")? != tensors[next].dim_of("vl")? {
                return Err(Error::Shape(format!(
                    "bond mismatch between sites {k} and {next}: {} vs {}",
                    tensors[k].dim_of("vr")?,
                    tensors[next].dim_of("vl")?
                )));
            }
        }
        if boundary == Boundary::Open
            && (tensors[0].dim_of("vl")? != 1 || tensors[n - 1].dim_of("vr")? != 1)
        {
            return Err(Error::Shape(
                "open chains need outer bond extent 1 on both ends".into(),
            ));
        }
        Ok(MatrixProductState {
            tensors,
            boundary,
            gauge: Gauge::None,
            schmidt_weights: None,
        })
    }

    /// Random state: complex Gaussian site tensors. Open chains come back
    /// right-canonical with unit norm; periodic chains are normalized but
    /// carry no gauge.
    pub fn new_random(
        n: usize,
        d: usize,
        max_bond: usize,
        boundary: Boundary,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n == 0 || d == 0 || max_bond == 0 {
            return Err(Error::Invalid(
                "need at least one site, one physical level, and bond extent 1".into(),
            ));
        }
        match boundary {
            Boundary::Open => {
                // Bond extents capped by the Schmidt rank reachable from the
                // nearer chain end.
                let bond = |k: usize| -> usize {
                    let side = k.min(n - k) as u32;
                    d.checked_pow(side).map_or(max_bond, |v| v.min(max_bond))
                };
                let mut tensors = Vec::with_capacity(n);
                for k in 0..n {
                    tensors.push(Tensor::random_gaussian(
                        &["vl", "p", "vr"],
                        &[bond(k), d, bond(k + 1)],
                        rng,
                    )?);
                }
                let raw = MatrixProductState {
                    tensors,
                    boundary,
                    gauge: Gauge::None,
                    schmidt_weights: None,
                };
                let mut out = raw.canonicalize(Gauge::Right)?;
                let nrm = out.tensors[0].norm();
                if nrm < 1e-300 {
                    return Err(Error::Numerical("random state collapsed to zero".into()));
                }
                out.tensors[0] = out.tensors[0].scaled(Complex64::new(1.0 / nrm, 0.0));
                Ok(out)
            }
            Boundary::Periodic => {
                let mut tensors = Vec::with_capacity(n);
                for _ in 0..n {
                    let t = Tensor::random_gaussian(&["vl", "p", "vr"], &[max_bond, d, max_bond], rng)?;
                    let f = t.norm().max(1e-300);
                    tensors.push(t.scaled(Complex64::new(1.0 / f, 0.0)));
                }
                let mut out = MatrixProductState {
                    tensors,
                    boundary,
                    gauge: Gauge::None,
                    schmidt_weights: None,
                };
                let nrm = out.norm()?;
                if nrm < 1e-300 {
                    return Err(Error::Numerical("random state collapsed to zero".into()));
                }
                let scale = Complex64::new(nrm.powf(-1.0 / n as f64), 0.0);
                for t in &mut out.tensors {
                    *t = t.scaled(scale);
                }
                Ok(out)
            }
        }
    }

    /// Decompose a unit-norm dense vector into an open chain by successive
    /// splitting, truncating each cut per `trunc`. The result is
    /// left-canonical with Schmidt weights populated.
    pub fn from_dense(
        psi: &[Complex64],
        phys_dims: &[usize],
        trunc: &TruncationSpec,
    ) -> Result<Self> {
        if phys_dims.is_empty() || phys_dims.iter().any(|&d| d == 0) {
            return Err(Error::Invalid("physical dimensions must be positive".into()));
        }
        let total = phys_dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Invalid("dense dimension overflows".into()))?;
        if total != psi.len() {
            return Err(Error::Shape(format!(
                "vector length {} does not match physical dimensions (product {})",
                psi.len(),
                total
            )));
        }
        let nrm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm < 1e-300 {
            return Err(Error::Invalid("zero vector cannot be normalized".into()));
        }
        if (nrm - 1.0).abs() > 1e-10 {
            return Err(Error::Invalid(format!(
                "input vector must have unit norm, got {nrm}"
            )));
        }
        let n = phys_dims.len();
        let phys_names: Vec<String> = (0..n).map(|k| format!("p{k}")).collect();
        let mut labels: Vec<&str> = vec!["vl"];
        labels.extend(phys_names.iter().map(|s| s.as_str()));
        let mut dims: Vec<usize> = vec![1];
        dims.extend_from_slice(phys_dims);
        let mut t = Tensor::new(&labels, &dims, psi.to_vec())?;

        let mut sites = Vec::with_capacity(n);
        let mut lambdas = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n.saturating_sub(1) {
            let res = t.svd_split(&["vl", &phys_names[k]], "m", trunc)?;
            sites.push(res.u.renamed(&phys_names[k], "p")?.renamed("m", "vr")?);
            let kept: f64 = res.s.iter().map(|s| s * s).sum();
            if kept < 1e-300 {
                return Err(Error::Numerical("state lost all weight at a cut".into()));
            }
            lambdas.push(res.s.iter().map(|s| s * s / kept).collect());
            // Carry diag(s) * vt onward; rows of vt are scaled in place.
            let mut carry = res.vt.renamed("m", "vl")?;
            let cols = carry.data().len() / res.rank;
            let d = carry.data_mut();
            for (i, &s) in res.s.iter().enumerate() {
                for j in 0..cols {
                    d[i * cols + j] *= s;
                }
            }
            t = carry;
        }
        let dl = t.dim_of("vl")?;
        let dp = t.dim_of(&phys_names[n - 1])?;
        let t = t.permuted(&["vl", &phys_names[n - 1]])?;
        let mut last = Tensor::new(&["vl", "p", "vr"], &[dl, dp, 1], t.data().to_vec())?;
        let f = last.norm();
        if f < 1e-300 {
            return Err(Error::Numerical("state lost all weight at a cut".into()));
        }
        last = last.scaled(Complex64::new(1.0 / f, 0.0));
        sites.push(last);
        Ok(MatrixProductState {
            tensors: sites,
            boundary: Boundary::Open,
            gauge: Gauge::Left,
            schmidt_weights: Some(lambdas),
        })
    }

    /// Contract the chain into a dense vector ordered with site 0 as the most
    /// significant index. Periodic chains close with a bond trace.
    pub fn to_dense(&self) -> Result<Vec<Complex64>> {
        let mut total = 1usize;
        for t in &self.tensors {
            total = total
                .checked_mul(t.dim_of("p")?)
                .filter(|&v| v <= DENSE_CAP)
                .ok_or_else(|| {
                    Error::Invalid(format!("dense dimension exceeds cap {DENSE_CAP}"))
                })?;
        }
        let n = self.tensors.len();
        let mut acc = self.tensors[0].renamed("p", "p0")?;
        for (k, a) in self.tensors.iter().enumerate().skip(1) {
            let ak = a.renamed("p", &format!("p{k}"))?;
            acc = acc.contract(&ak, &[("vr", "vl")])?;
        }
        let closed = acc.trace("vl", "vr")?;
        let names: Vec<String> = (0..n).map(|k| format!("p{k}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        Ok(closed.permuted(&refs)?.data().to_vec())
    }

    /// Insert `X X^{-1}` on the bond at `cut`, transforming the two adjacent
    /// site tensors without changing the state. `x` must carry labels
    /// `("r", "c")`; `"r"` contracts into the left site's `vr`.
    ///
    /// Cuts are 1-based: cut `k` sits between sites `k-1` and `k`. Periodic
    /// chains additionally accept `cut = n` for the wrap-around bond.
    pub fn apply_gauge(&self, cut: usize, x: &Tensor) -> Result<Self> {
        let n = self.tensors.len();
        let max_cut = match self.boundary {
            Boundary::Open => n - 1,
            Boundary::Periodic => n,
        };
        if cut == 0 || cut > max_cut {
            return Err(Error::Invalid(format!(
                "cut {cut} out of range 1..={max_cut}"
            )));
        }
        if !x.has_label("r") || !x.has_label("c") || x.rank() != 2 {
            return Err(Error::Label(
                "gauge tensor must carry exactly the legs (r, c)".into(),
            ));
        }
        let left = cut - 1;
        let right = cut % n;
        let d = self.tensors[left].dim_of("vr")?;
        if x.dim_of("r")? != d || x.dim_of("c")? != d {
            return Err(Error::Shape(format!(
                "gauge tensor must be {d}x{d} for this bond"
            )));
        }
        let xm = tensor_to_dmatrix(x, "r", "c")?;
        let svals = crate::linalg::singular_values(&xm)?;
        let smax = svals[0];
        let smin = *svals.last().expect("gauge matrix is non-empty");
        if smin <= f64::EPSILON * smax.max(1e-300) {
            return Err(Error::Invalid("gauge transformation is singular".into()));
        }
        if smax / smin > MAX_GAUGE_COND {
            return Err(Error::Invalid(format!(
                "gauge transformation condition number {:.3e} exceeds bound {MAX_GAUGE_COND:.1e}",
                smax / smin
            )));
        }
        let xinv = xm
            .try_inverse()
            .ok_or_else(|| Error::Invalid("gauge transformation is singular".into()))?;
        let xinv_t = crate::tensor::dmatrix_to_tensor(&xinv, "r", "c")?;

        let mut tensors = self.tensors.clone();
        tensors[left] = tensors[left]
            .contract(x, &[("vr", "r")])?
            .renamed("c", "vr")?
            .permuted(&["vl", "p", "vr"])?;
        tensors[right] = xinv_t
            .contract(&tensors[right], &[("c", "vl")])?
            .renamed("r", "vl")?;
        Ok(MatrixProductState {
            tensors,
            boundary: self.boundary,
            gauge: Gauge::None,
            schmidt_weights: None,
        })
    }

    /// One full orthogonalization pass over an open chain: a left QR sweep
    /// followed by a right split sweep that truncates per `trunc` and records
    /// the unit-trace squared Schmidt values of every internal cut.
    ///
    /// Returns right-canonical tensors (site 0 carries the norm), the Schmidt
    /// weights, and the total relative discarded weight.
    fn canonical_sweep(&self, trunc: &TruncationSpec) -> Result<(Vec<Tensor>, Vec<Vec<f64>>, f64)> {
        let n = self.tensors.len();
        let mut tensors: Vec<Tensor> = Vec::with_capacity(n);
        let mut carry: Option<Tensor> = None;
        for (k, t) in self.tensors.iter().enumerate() {
            let mut a = t.clone();
            if let Some(r) = carry.take() {
                a = r.contract(&a, &[("vr", "vl")])?.renamed("m", "vl")?;
            }
            if k + 1 < n {
                let (q, r) = a.qr_split(&["vl", "p"], "m")?;
                tensors.push(q.renamed("m", "vr")?);
                carry = Some(r);
            } else {
                tensors.push(a);
            }
        }

        let mut lambdas: Vec<Vec<f64>> = vec![Vec::new(); n.saturating_sub(1)];
        let mut discarded_total = 0.0;
        for k in (1..n).rev() {
            let res = tensors[k].svd_split(&["vl"], "m", trunc)?;
            let kept: f64 = res.s.iter().map(|s| s * s).sum();
            let cut_total = kept + res.discarded_weight;
            if cut_total < 1e-300 {
                return Err(Error::Numerical("state has zero norm".into()));
            }
            lambdas[k - 1] = res.s.iter().map(|s| s * s / kept).collect();
            discarded_total += res.discarded_weight / cut_total;
            tensors[k] = res.vt.renamed("m", "vl")?;
            let mut us = res.u;
            let rank = res.rank;
            let rows = us.data().len() / rank;
            let d = us.data_mut();
            for r_ in 0..rows {
                for (j, &s) in res.s.iter().enumerate() {
                    d[r_ * rank + j] *= s;
                }
            }
            tensors[k - 1] = tensors[k - 1]
                .contract(&us, &[("vr", "vl")])?
                .renamed("m", "vr")?;
        }
        Ok((tensors, lambdas, discarded_total))
    }

    /// Re-gauge an open chain into the target canonical form without changing
    /// the state (norm included). Populates Schmidt weights for every cut.
    pub fn canonicalize(&self, target: Gauge) -> Result<Self> {
        if self.boundary == Boundary::Periodic {
            return Err(Error::Unsupported(
                "canonical forms are not provided for periodic chains".into(),
            ));
        }
        let n = self.tensors.len();
        let upto = match target {
            Gauge::None => {
                return Err(Error::Invalid(
                    "canonicalization target must be Left, Right, or Mixed".into(),
                ))
            }
            Gauge::Right => 0,
            Gauge::Left => n - 1,
            Gauge::Mixed(c) => {
                if c >= n {
                    return Err(Error::Invalid(format!(
                        "center site {c} out of range for {n} sites"
                    )));
                }
                c
            }
        };
        let (mut tensors, lambdas, _) = self.canonical_sweep(&TruncationSpec::exact())?;
        // Move the orthogonality center from site 0 to `upto`.
        for k in 0..upto {
            let (q, r) = tensors[k].qr_split(&["vl", "p"], "m")?;
            tensors[k] = q.renamed("m", "vr")?;
            tensors[k + 1] = r
                .contract(&tensors[k + 1], &[("vr", "vl")])?
                .renamed("m", "vl")?;
        }
        Ok(MatrixProductState {
            tensors,
            boundary: self.boundary,
            gauge: target,
            schmidt_weights: Some(lambdas),
        })
    }

    /// Truncate every bond to the given spec. Returns the compressed state
    /// (right-canonical, renormalized to unit norm) and the total relative
    /// discarded weight, which bounds the squared-fidelity loss.
    pub fn compress(&self, trunc: &TruncationSpec) -> Result<(Self, f64)> {
        if self.boundary == Boundary::Periodic {
            return Err(Error::Unsupported(
                "compression relies on canonical forms, not provided for periodic chains".into(),
            ));
        }
        let (mut tensors, lambdas, weight) = self.canonical_sweep(trunc)?;
        let nrm = tensors[0].norm();
        if nrm < 1e-300 {
            return Err(Error::Numerical("compressed state has zero norm".into()));
        }
        tensors[0] = tensors[0].scaled(Complex64::new(1.0 / nrm, 0.0));
        Ok((
            MatrixProductState {
                tensors,
                boundary: self.boundary,
                gauge: Gauge::Right,
                schmidt_weights: Some(lambdas),
            },
            weight,
        ))
    }

    /// Entanglement diagnostics at a 1-based cut of an open chain, computed
    /// from stored Schmidt weights (canonicalizing first when absent).
    pub fn entanglement_at_cut(&self, cut: usize) -> Result<EntanglementData> {
        if self.boundary == Boundary::Periodic {
            return Err(Error::Unsupported(
                "cut entanglement needs an open chain".into(),
            ));
        }
        let n = self.tensors.len();
        if cut == 0 || cut >= n {
            return Err(Error::Invalid(format!(
                "cut {cut} out of range 1..={}",
                n - 1
            )));
        }
        match &self.schmidt_weights {
            Some(l) => EntanglementData::from_weights(cut, l[cut - 1].clone()),
            None => {
                let canon = self.canonicalize(Gauge::Right)?;
                let l = canon.schmidt_weights.as_ref().unwrap();
                EntanglementData::from_weights(cut, l[cut - 1].clone())
            }
        }
    }

    /// Euclidean norm of the represented state.
    pub fn norm(&self) -> Result<f64> {
        match self.boundary {
            Boundary::Open => {
                let mut env = Tensor::new(&["k", "b"], &[1, 1], vec![Complex64::new(1.0, 0.0)])?;
                for a in &self.tensors {
                    let ak = a.renamed("vr", "k2")?;
                    let ab = a.conj().renamed("vr", "b2")?;
                    let t1 = env.contract(&ak, &[("k", "vl")])?;
                    let t2 = t1.contract(&ab, &[("b", "vl"), ("p", "p")])?;
                    env = t2.renamed("k2", "k")?.renamed("b2", "b")?;
                }
                Ok(env.data()[0].re.max(0.0).sqrt())
            }
            Boundary::Periodic => {
                let mut prod: Option<Mat> = None;
                for a in &self.tensors {
                    let ak = a.renamed("vl", "kl")?.renamed("vr", "kr")?;
                    let ab = a.conj().renamed("vl", "bl")?.renamed("vr", "br")?;
                    let e = ak.contract(&ab, &[("p", "p")])?;
                    let (em, _) = e.permuted(&["kl", "bl", "kr", "br"])?.to_matrix(&["kl", "bl"])?;
                    prod = Some(match prod {
                        None => em,
                        Some(p) => p * em,
                    });
                }
                let p = prod.unwrap();
                let tr: Complex64 = (0..p.nrows()).map(|i| p[(i, i)]).sum();
                Ok(tr.re.max(0.0).sqrt())
            }
        }
    }

    /// Total number of stored complex parameters.
    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    /// Worst deviation from the orthogonality conditions implied by the
    /// current gauge tag; 0 when no gauge is claimed.
    pub fn canonical_residual(&self) -> Result<f64> {
        let n = self.tensors.len();
        let center = match self.gauge {
            Gauge::None => return Ok(0.0),
            Gauge::Left => n - 1,
            Gauge::Right => 0,
            Gauge::Mixed(c) => c,
        };
        let mut worst = 0.0f64;
        for (k, a) in self.tensors.iter().enumerate() {
            if k < center {
                let g = a
                    .conj()
                    .renamed("vr", "x")?
                    .contract(a, &[("vl", "vl"), ("p", "p")])?;
                worst = worst.max(max_dev_from_identity(&g)?);
            } else if k > center {
                let g = a
                    .renamed("vl", "x")?
                    .contract(&a.conj(), &[("vr", "vr"), ("p", "p")])?;
                worst = worst.max(max_dev_from_identity(&g)?);
            }
        }
        Ok(worst)
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    pub fn site(&self, k: usize) -> &Tensor {
        &self.tensors[k]
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.dim_of("p").unwrap()).collect()
    }

    /// Extents of the bonds from left to right: `n-1` internal bonds for an
    /// open chain, plus the wrap-around bond (last entry) when periodic.
    pub fn bond_dims(&self) -> Vec<usize> {
        let n = self.tensors.len();
        let upto = match self.boundary {
            Boundary::Open => n - 1,
            Boundary::Periodic => n,
        };
        (0..upto)
            .map(|k| self.tensors[k].dim_of("vr").unwrap())
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Squared Schmidt values per internal cut, when a canonical form has
    /// been established.
    pub fn schmidt_weights(&self) -> Option<&[Vec<f64>]> {
        self.schmidt_weights.as_deref()
    }
}

fn max_dev_from_identity(t: &Tensor) -> Result<f64> {
    let dims = t.dims();
    if dims.len() != 2 || dims[0] != dims[1] {
        return Err(Error::Shape("expected a square matrix tensor".into()));
    }
    let d = dims[0];
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let want = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            worst = worst.max((t.get(&[i, j])? - want).norm());
        }
    }
    Ok(worst)
}

/// Smallest word length `L <= l_max` at which the products
/// `A_{j_1} ... A_{j_L}` of a translation-invariant site tensor span the full
/// bond-matrix space, or `None` if none does. Rank is counted with a relative
/// singular-value threshold of 1e-10.
pub fn injectivity_length(a: &Tensor, l_max: usize) -> Result<Option<usize>> {
    if !a.has_label("vl") || !a.has_label("p") || !a.has_label("vr") || a.rank() != 3 {
        return Err(Error::Label(
            "site tensor must carry exactly the legs (vl, p, vr)".into(),
        ));
    }
    let dd = a.dim_of("vl")?;
    if a.dim_of("vr")? != dd {
        return Err(Error::Shape(
            "injectivity needs matching left and right bond extents".into(),
        ));
    }
    if l_max == 0 {
        return Err(Error::Invalid("word length bound must be at least 1".into()));
    }
    let d = a.dim_of("p")?;
    let ap = a.permuted(&["vl", "p", "vr"])?;
    let data = ap.data();
    let mats: Vec<Mat> = (0..d)
        .map(|j| Mat::from_fn(dd, dd, |al, be| data[(al * d + j) * dd + be]))
        .collect();

    let mut words = vec![Mat::identity(dd, dd)];
    for l in 1..=l_max {
        let grown: Vec<Mat> = words
            .iter()
            .flat_map(|w| mats.iter().map(move |m| w * m))
            .collect();
        if grown.len().saturating_mul(dd * dd) > 8_000_000 {
            return Err(Error::Invalid(format!(
                "injectivity search space too large at word length {l}"
            )));
        }
        words = grown;
        let mut stack = Mat::zeros(words.len(), dd * dd);
        for (r, w) in words.iter().enumerate() {
            for al in 0..dd {
                for be in 0..dd {
                    stack[(r, al * dd + be)] = w[(al, be)];
                }
            }
        }
        let svals = crate::linalg::singular_values(&stack)?;
        let smax = svals[0];
        if smax > 0.0 {
            let rank = svals.iter().filter(|&&s| s > 1e-10 * smax).count();
            if rank == dd * dd {
                return Ok(Some(l));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TruncationSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dense_overlap(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    fn ghz_vector(n: usize) -> Vec<Complex64> {
        let dim = 1usize << n;
        let mut v = vec![c(0.0, 0.0); dim];
        let a = c(1.0 / 2f64.sqrt(), 0.0);
        v[0] = a;
        v[dim - 1] = a;
        v
    }

    #[test]
    fn from_dense_ghz_has_flat_two_value_spectrum() {
        let mps = MatrixProductState::from_dense(
            &ghz_vector(3),
            &[2, 2, 2],
            &TruncationSpec::exact(),
        )
        .unwrap();
        assert_eq!(mps.bond_dims(), vec![2, 2]);
        for cut in 1..=2 {
            let ent = mps.entanglement_at_cut(cut).unwrap();
            assert_eq!(ent.schmidt_values.len(), 2);
            for s in &ent.schmidt_values {
                assert!((s - 1.0 / 2f64.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn from_dense_product_state_has_trivial_bonds() {
        let mut v = vec![c(0.0, 0.0); 8];
        v[2] = c(1.0, 0.0); // |010>
        let mps =
            MatrixProductState::from_dense(&v, &[2, 2, 2], &TruncationSpec::exact()).unwrap();
        assert_eq!(mps.bond_dims(), vec![1, 1]);
        let back = mps.to_dense().unwrap();
        assert!((dense_overlap(&back, &v).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_dense_round_trip_is_faithful() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let dim = 1usize << 8;
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| {
                c(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                )
            })
            .collect();
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut v {
            *z /= nrm;
        }
        let mps =
            MatrixProductState::from_dense(&v, &[2; 8], &TruncationSpec::exact()).unwrap();
        let back = mps.to_dense().unwrap();
        assert!(dense_overlap(&back, &v).norm() > 1.0 - 1e-12);
        assert!((mps.norm().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mps.gauge(), Gauge::Left);
        assert!(mps.canonical_residual().unwrap() < 1e-10);
    }

    #[test]
    fn from_dense_round_trip_qutrits() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let dim = 3usize.pow(6);
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| {
                c(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                )
            })
            .collect();
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut v {
            *z /= nrm;
        }
        let mps =
            MatrixProductState::from_dense(&v, &[3; 6], &TruncationSpec::exact()).unwrap();
        let back = mps.to_dense().unwrap();
        let diff: f64 = back
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-12, "round trip distance {diff}");
    }

    #[test]
    fn from_dense_rejects_bad_inputs() {
        let v = vec![c(0.5, 0.0); 8];
        assert!(MatrixProductState::from_dense(&v, &[2, 2], &TruncationSpec::exact()).is_err());
        let zero = vec![c(0.0, 0.0); 8];
        assert!(
            MatrixProductState::from_dense(&zero, &[2, 2, 2], &TruncationSpec::exact()).is_err()
        );
        let unnorm = vec![c(1.0, 0.0); 8];
        assert!(
            MatrixProductState::from_dense(&unnorm, &[2, 2, 2], &TruncationSpec::exact()).is_err()
        );
    }

    #[test]
    fn apply_gauge_preserves_the_state() {
        // A tiny tolerance drops the floating-point-zero Schmidt values, so
        // every bond has the minimal extent 2.
        let mps = MatrixProductState::from_dense(
            &ghz_vector(4),
            &[2, 2, 2, 2],
            &TruncationSpec {
                tol: 1e-24,
                max_rank: None,
            },
        )
        .unwrap();
        assert_eq!(mps.bond_dims(), vec![2, 2, 2]);
        let reference = mps.to_dense().unwrap();

        // Identity leaves the tensors unchanged.
        let id = Tensor::identity("r", "c", 2).unwrap();
        let same = mps.apply_gauge(2, &id).unwrap();
        for k in 0..4 {
            let d: f64 = same
                .site(k)
                .data()
                .iter()
                .zip(mps.site(k).data())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(d < 1e-13);
        }

        // A random well-conditioned transformation changes tensors, not the state.
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let x = Tensor::random_gaussian(&["r", "c"], &[2, 2], &mut rng).unwrap();
        let moved = mps.apply_gauge(2, &x).unwrap();
        let d2 = moved.to_dense().unwrap();
        let dist: f64 = d2
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(dist < 1e-10, "state moved by {dist}");

        // Diagonal rescaling is also invisible to the state.
        let diag = Tensor::new(
            &["r", "c"],
            &[2, 2],
            vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)],
        )
        .unwrap();
        let moved = mps.apply_gauge(3, &diag).unwrap();
        let d3 = moved.to_dense().unwrap();
        let dist: f64 = d3
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(dist < 1e-10);

        // Singular transformations are rejected.
        let sing = Tensor::new(
            &["r", "c"],
            &[2, 2],
            vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        assert!(mps.apply_gauge(2, &sing).is_err());
    }

    #[test]
    fn canonicalize_satisfies_target_conditions() {
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let mps =
            MatrixProductState::new_random(10, 2, 4, Boundary::Open, &mut rng).unwrap();
        let reference = mps.to_dense().unwrap();

        for target in [Gauge::Left, Gauge::Right, Gauge::Mixed(4)] {
            let canon = mps.canonicalize(target).unwrap();
            assert_eq!(canon.gauge(), target);
            assert!(
                canon.canonical_residual().unwrap() < 1e-10,
                "residual too large for {target:?}"
            );
            let d = canon.to_dense().unwrap();
            let dist: f64 = d
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(dist < 1e-10, "{target:?} moved the state by {dist}");
            // Idempotence.
            let again = canon.canonicalize(target).unwrap();
            assert!(again.canonical_residual().unwrap() < 1e-10);
            let d2 = again.to_dense().unwrap();
            let fid = dense_overlap(&d2, &reference).norm();
            assert!(fid > 1.0 - 1e-12);
        }
    }

    #[test]
    fn canonicalize_rejects_periodic_chains() {
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        let mps =
            MatrixProductState::new_random(6, 2, 3, Boundary::Periodic, &mut rng).unwrap();
        assert!(matches!(
            mps.canonicalize(Gauge::Right),
            Err(Error::Unsupported(_))
        ));
        assert!(mps.entanglement_at_cut(2).is_err());
        assert!(mps.compress(&TruncationSpec::exact()).is_err());
    }

    #[test]
    fn compress_ghz_is_exact_at_rank_two_and_half_fidelity_at_rank_one() {
        let mps = MatrixProductState::from_dense(
            &ghz_vector(5),
            &[2; 5],
            &TruncationSpec::exact(),
        )
        .unwrap();
        let reference = mps.to_dense().unwrap();

        let (kept, w) = mps
            .compress(&TruncationSpec {
                tol: 0.0,
                max_rank: Some(2),
            })
            .unwrap();
        assert!(w < 1e-15);
        let fid = dense_overlap(&kept.to_dense().unwrap(), &reference).norm();
        assert!(fid > 1.0 - 1e-12);

        let (cut, w1) = mps
            .compress(&TruncationSpec {
                tol: 0.0,
                max_rank: Some(1),
            })
            .unwrap();
        assert_eq!(cut.max_bond_dim(), 1);
        let overlap2 = dense_overlap(&cut.to_dense().unwrap(), &reference).norm_sqr();
        assert!((overlap2 - 0.5).abs() < 1e-10, "got squared overlap {overlap2}");
        assert!(1.0 - overlap2 <= w1 + 1e-12);
    }

    #[test]
    fn compress_infidelity_is_bounded_by_reported_weight() {
        let mut rng = ChaCha12Rng::seed_from_u64(36);
        for round in 0..5 {
            let mps = MatrixProductState::new_random(10, 2, 16, Boundary::Open, &mut rng)
                .unwrap();
            let reference = mps.to_dense().unwrap();
            let (small, w) = mps
                .compress(&TruncationSpec {
                    tol: 1e-4,
                    max_rank: Some(6),
                })
                .unwrap();
            let fid2 = dense_overlap(&small.to_dense().unwrap(), &reference).norm_sqr();
            assert!(
                1.0 - fid2 <= w + 1e-10,
                "round {round}: infidelity {} above weight {w}",
                1.0 - fid2
            );
            assert!(small.max_bond_dim() <= 6);
        }
    }

    #[test]
    fn entanglement_entropies_are_ordered_and_bounded() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let mps = MatrixProductState::new_random(8, 2, 8, Boundary::Open, &mut rng).unwrap();
        for cut in 1..8 {
            let ent = mps.entanglement_at_cut(cut).unwrap();
            let total: f64 = ent.spectrum_of_rho_a.iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            let s_inf = ent.renyi(f64::INFINITY);
            let s2 = ent.renyi(2.0);
            let s1 = ent.renyi(1.0);
            let s0 = ent.renyi(0.0);
            assert!(s_inf <= s2 + 1e-10);
            assert!(s2 <= s1 + 1e-10);
            assert!(s1 <= s0 + 1e-10);
            assert!(s1 <= 3.0 + 1e-10, "entropy above log2 of bond cap");
            assert!((ent.renyi(1.0) - ent.von_neumann).abs() < 1e-8);
            // Natural-log levels recover the spectrum.
            for (lvl, p) in ent
                .entanglement_hamiltonian_levels
                .iter()
                .zip(&ent.spectrum_of_rho_a)
            {
                assert!(((-lvl).exp() - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn entanglement_of_product_state_vanishes() {
        let mut v = vec![c(0.0, 0.0); 16];
        v[5] = c(1.0, 0.0);
        let mps =
            MatrixProductState::from_dense(&v, &[2; 4], &TruncationSpec::exact()).unwrap();
        for cut in 1..4 {
            let ent = mps.entanglement_at_cut(cut).unwrap();
            assert!(ent.von_neumann.abs() < 1e-12);
            assert!(ent.renyi(0.0).abs() < 1e-12);
            assert!(ent.renyi(f64::INFINITY).abs() < 1e-12);
        }
    }

    #[test]
    fn random_periodic_state_is_normalized() {
        let mut rng = ChaCha12Rng::seed_from_u64(38);
        let mps =
            MatrixProductState::new_random(7, 2, 3, Boundary::Periodic, &mut rng).unwrap();
        assert!((mps.norm().unwrap() - 1.0).abs() < 1e-10);
        let dense = mps.to_dense().unwrap();
        let nrm: f64 = dense.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((nrm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn parameter_count_obeys_the_quadratic_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(39);
        let (n, d, dmax) = (12, 3, 5);
        let mps = MatrixProductState::new_random(n, d, dmax, Boundary::Open, &mut rng).unwrap();
        assert!(mps.parameter_count() <= n * d * dmax * dmax);
    }

    #[test]
    fn to_dense_respects_the_cap() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let mps =
            MatrixProductState::new_random(25, 2, 2, Boundary::Open, &mut rng).unwrap();
        assert!(matches!(mps.to_dense(), Err(Error::Invalid(_))));
    }

    #[test]
    fn injectivity_of_random_and_structured_tensors() {
        // Bond-diagonal selector tensors never become injective: every word
        // stays diagonal, so the image dimension is stuck at the bond extent.
        let mut sel = Tensor::zeros(&["vl", "p", "vr"], &[2, 2, 2]).unwrap();
        sel.set(&[0, 0, 0], c(1.0, 0.0)).unwrap();
        sel.set(&[1, 1, 1], c(1.0, 0.0)).unwrap();
        assert_eq!(injectivity_length(&sel, 6).unwrap(), None);

        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let t = Tensor::random_gaussian(&["vl", "p", "vr"], &[2, 2, 2], &mut rng).unwrap();
        let l = injectivity_length(&t, 4).unwrap();
        assert!(matches!(l, Some(l) if l <= 2), "got {l:?}");
    }
}
