//! Dense complex tensors with named indices.
//!
//! Every tensor leg carries a string label; contraction, splitting, and
//! factorization address legs by label, never by position. Data is stored
//! row-major over the declared label order. Two legs may be contracted when
//! their labels are paired explicitly and their extents match, which keeps
//! chain-contraction code free of silent positional mistakes.


use num_complex::Complex64;
use num_traits::Zero;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Dense tensor with labeled legs; the workhorse of every network routine.
#[derive(Clone)]
pub struct Tensor {
    labels: Vec<String>,
    dims: Vec<usize>,
    data: Vec<Complex64>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor({:?} dims {:?})", self.labels, self.dims)
    }
}

fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Truncation policy for factorizations: keep the smallest rank whose
/// discarded squared singular weight is at most `tol`, then cap at `max_rank`.
#[derive(Clone, Copy, Debug)]
pub struct TruncationSpec {
    /// Upper bound on the discarded sum of squared singular values.
    pub tol: f64,
    /// Hard cap on the kept rank; `None` means no cap.
    pub max_rank: Option<usize>,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        TruncationSpec {
            tol: 0.0,
            max_rank: None,
        }
    }
}

impl TruncationSpec {
    /// Exact splitting: no weight discarded, no rank cap.
    pub fn exact() -> Self {
        Self::default()
    }

    /// Given singular values sorted non-increasing, the rank to keep and the
    /// discarded squared weight.
    pub(crate) fn decide(&self, sv: &[f64]) -> (usize, f64) {
        let n = sv.len();
        // Smallest rank whose tail satisfies the tolerance.
        let mut tail = 0.0f64;
        let mut rank_tol = n;
        for i in (0..n).rev() {
            let next = tail + sv[i] * sv[i];
            if next <= self.tol {
                tail = next;
                rank_tol = i;
            } else {
                break;
            }
        }
        let mut rank = rank_tol.max(1).min(n);
        if let Some(cap) = self.max_rank {
            rank = rank.min(cap.max(1));
        }
        let discarded: f64 = sv[rank..].iter().map(|s| s * s).sum();
        (rank, discarded)
    }
}

/// Result of a split-by-SVD: `t ≈ u · diag(s) · vt` with the new bond label
/// on the inner edges of `u` and `vt`.
pub struct SvdResult {
    pub u: Tensor,
    pub s: Vec<f64>,
    pub vt: Tensor,
    /// Rank actually kept after truncation.
    pub rank: usize,
    /// Sum of squared singular values that were discarded.
    pub discarded_weight: f64,
}

/// Options for the Hermitian lowest-eigenpair solver.
#[derive(Clone, Copy, Debug)]
pub struct EigOpts {
    /// Residual tolerance relative to the eigenvalue scale.
    pub tol: f64,
    /// Iteration budget for the Krylov solver.
    pub max_iter: usize,
}

impl Default for EigOpts {
    fn default() -> Self {
        EigOpts {
            tol: 1e-12,
            max_iter: 400,
        }
    }
}

/// Below this matrix dimension the lowest-eigenpair call uses a dense solve
/// instead of the Krylov iteration.
pub const DENSE_EIG_THRESHOLD: usize = 64;

/// Eigenvalues and eigenvectors of a general (non-Hermitian) square map.
///
/// `values` are sorted by non-increasing modulus. Left and right vectors are
/// biorthonormal (`<l_i|r_j> = delta_ij`) where defined; entries are `None`
/// for eigenvalue clusters with deficient geometric multiplicity, in which
/// case `defective` is set.
pub struct EigGeneral {
    pub values: Vec<Complex64>,
    pub right: Vec<Option<Tensor>>,
    pub left: Vec<Option<Tensor>>,
    pub defective: bool,
}

impl Tensor {
    /// Build a tensor from labels, extents, and row-major data.
    pub fn new(labels: &[&str], dims: &[usize], data: Vec<Complex64>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::Shape(format!(
                "{} labels but {} dims",
                labels.len(),
                dims.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::Label("empty label".into()));
            }
            if labels[..i].contains(l) {
                return Err(Error::Label(format!("duplicate label '{l}'")));
            }
        }
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {:?} (expected {})",
                data.len(),
                dims,
                expect
            )));
        }
        Ok(Tensor {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            dims: dims.to_vec(),
            data,
        })
    }

    /// All-zero tensor.
    pub fn zeros(labels: &[&str], dims: &[usize]) -> Result<Self> {
        let len: usize = dims.iter().product();
        Tensor::new(labels, dims, vec![Complex64::zero(); len])
    }

    /// Tensor populated from a function of the multi-index.
    pub fn from_fn(
        labels: &[&str],
        dims: &[usize],
        mut f: impl FnMut(&[usize]) -> Complex64,
    ) -> Result<Self> {
        let len: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for k in (0..dims.len()).rev() {
                idx[k] += 1;
                if idx[k] < dims[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Tensor::new(labels, dims, data)
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(v: Complex64) -> Self {
        Tensor {
            labels: vec![],
            dims: vec![],
            data: vec![v],
        }
    }

    /// Identity matrix as a two-leg tensor.
    pub fn identity(row: &str, col: &str, d: usize) -> Result<Self> {
        Tensor::from_fn(&[row, col], &[d, d], |ix| {
            if ix[0] == ix[1] {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::zero()
            }
        })
    }

    /// Tensor with independent standard complex Gaussian entries.
    pub fn random_gaussian(labels: &[&str], dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let len: usize = dims.iter().product();
        let data: Vec<Complex64> = (0..len)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Tensor::new(labels, dims, data)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.labels.iter().map(|s| s.as_str()).collect()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    fn axis(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Label(format!("no leg labeled '{label}' in {:?}", self.labels)))
    }

    /// Extent of the leg with the given label.
    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.axis(label)?])
    }

    /// Scales slice `i` of the given leg by `weights[i]`; the usual way to
    /// absorb singular values into one side of a split.
    pub(crate) fn scale_along(&self, label: &str, weights: &[f64]) -> Result<Tensor> {
        let axis = self.axis(label)?;
        if weights.len() != self.dims[axis] {
            return Err(Error::Shape(format!(
                "{} weights for a leg of extent {}",
                weights.len(),
                self.dims[axis]
            )));
        }
        let stride: usize = self.dims[axis + 1..].iter().product();
        let mut out = self.clone();
        for (i, z) in out.data.iter_mut().enumerate() {
            *z *= weights[(i / stride) % weights.len()];
        }
        Ok(out)
    }

    /// Value at a multi-index (slow; intended for tests and small tensors).
    pub fn get(&self, idx: &[usize]) -> Result<Complex64> {
        Ok(self.data[self.flat_index(idx)?])
    }

    /// Overwrite the value at a multi-index.
    pub fn set(&mut self, idx: &[usize], v: Complex64) -> Result<()> {
        let f = self.flat_index(idx)?;
        self.data[f] = v;
        Ok(())
    }

    fn flat_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dims.len() {
            return Err(Error::Shape(format!(
                "index rank {} vs tensor rank {}",
                idx.len(),
                self.dims.len()
            )));
        }
        let strides = row_major_strides(&self.dims);
        let mut f = 0usize;
        for ((i, d), s) in idx.iter().zip(&self.dims).zip(&strides) {
            if i >= d {
                return Err(Error::Shape(format!("index {i} out of bounds for extent {d}")));
            }
            f += i * s;
        }
        Ok(f)
    }

    /// Same tensor with one label replaced.
    pub fn renamed(&self, from: &str, to: &str) -> Result<Tensor> {
        let pos = self.axis(from)?;
        if from != to && self.labels.iter().any(|l| l == to) {
            return Err(Error::Label(format!("label '{to}' already present")));
        }
        let mut t = self.clone();
        t.labels[pos] = to.to_string();
        Ok(t)
    }

    /// Same data, completely relabeled (order matches the current leg order).
    pub fn with_labels(&self, labels: &[&str]) -> Result<Tensor> {
        if labels.len() != self.labels.len() {
            return Err(Error::Shape("relabel count mismatch".into()));
        }
        Tensor::new(labels, &self.dims, self.data.clone())
    }

    /// Complex conjugate of every entry (labels unchanged).
    pub fn conj(&self) -> Tensor {
        Tensor {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Tensor scaled by a complex factor.
    pub fn scaled(&self, f: Complex64) -> Tensor {
        Tensor {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().map(|z| z * f).collect(),
        }
    }

    /// Elementwise sum; the other tensor may carry its legs in any order but
    /// must have the same label set and extents.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let order: Vec<&str> = self.labels();
        let aligned = other.permuted(&order)?;
        if aligned.dims != self.dims {
            return Err(Error::Shape(format!(
                "extent mismatch in add: {:?} vs {:?}",
                self.dims, aligned.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&aligned.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            data,
        })
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Copy with legs reordered to the given label order.
    pub fn permuted(&self, order: &[&str]) -> Result<Tensor> {
        if order.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "permutation lists {} labels, tensor has {}",
                order.len(),
                self.labels.len()
            )));
        }
        let mut pos = Vec::with_capacity(order.len());
        for l in order {
            let p = self.axis(l)?;
            if pos.contains(&p) {
                return Err(Error::Label(format!("label '{l}' repeated in permutation")));
            }
            pos.push(p);
        }
        Ok(self.permuted_axes(&pos))
    }

    fn permuted_axes(&self, pos: &[usize]) -> Tensor {
        let rank = pos.len();
        let out_labels: Vec<String> = pos.iter().map(|&p| self.labels[p].clone()).collect();
        let out_dims: Vec<usize> = pos.iter().map(|&p| self.dims[p]).collect();
        let total = self.data.len();
        let identity = pos.iter().enumerate().all(|(i, &p)| i == p);
        if rank == 0 || total == 0 || identity {
            return Tensor {
                labels: out_labels,
                dims: out_dims,
                data: self.data.clone(),
            };
        }
        let in_strides = row_major_strides(&self.dims);
        let ax_stride: Vec<usize> = pos.iter().map(|&p| in_strides[p]).collect();
        let inner_dim = out_dims[rank - 1];
        let inner_stride = ax_stride[rank - 1];
        let mut out = Vec::with_capacity(total);
        let mut counters = vec![0usize; rank.saturating_sub(1)];
        let mut base = 0usize;
        'outer: loop {
            if inner_stride == 1 {
                out.extend_from_slice(&self.data[base..base + inner_dim]);
            } else {
                let mut off = base;
                for _ in 0..inner_dim {
                    out.push(self.data[off]);
                    off += inner_stride;
                }
            }
            if rank == 1 {
                break;
            }
            let mut k = rank - 2;
            loop {
                counters[k] += 1;
                base += ax_stride[k];
                if counters[k] < out_dims[k] {
                    break;
                }
                base -= ax_stride[k] * out_dims[k];
                counters[k] = 0;
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
            }
        }
        Tensor {
            labels: out_labels,
            dims: out_dims,
            data: out,
        }
    }

    /// Reshape by merging groups of legs. `layout` names every leg of the
    /// result; each entry gives the new label and the ordered old legs it
    /// absorbs (first constituent most significant). Every existing leg must
    /// appear exactly once across the groups.
    pub fn fused(&self, layout: &[(&str, &[&str])]) -> Result<Tensor> {
        let flat: Vec<&str> = layout
            .iter()
            .flat_map(|(_, parts)| parts.iter().copied())
            .collect();
        let perm = self.permuted(&flat)?;
        let mut labels: Vec<&str> = Vec::with_capacity(layout.len());
        let mut dims = Vec::with_capacity(layout.len());
        let mut pos = 0;
        for (new_label, parts) in layout {
            let mut extent = 1usize;
            for _ in parts.iter() {
                extent *= perm.dims[pos];
                pos += 1;
            }
            labels.push(new_label);
            dims.push(extent);
        }
        Tensor::new(&labels, &dims, perm.data)
    }

    /// Pairwise contraction. Each pair names one leg of `self` and one leg of
    /// `other`; paired extents must match. The result carries the unpaired
    /// legs of `self` (in order) followed by those of `other`, which must not
    /// collide.
    pub fn contract(&self, other: &Tensor, pairs: &[(&str, &str)]) -> Result<Tensor> {
        let mut a_pos = Vec::with_capacity(pairs.len());
        let mut b_pos = Vec::with_capacity(pairs.len());
        for (la, lb) in pairs {
            let pa = self.axis(la)?;
            let pb = other.axis(lb)?;
            if self.dims[pa] != other.dims[pb] {
                return Err(Error::Shape(format!(
                    "contracted pair ('{la}', '{lb}') has extents {} vs {}",
                    self.dims[pa], other.dims[pb]
                )));
            }
            if a_pos.contains(&pa) {
                return Err(Error::Label(format!("leg '{la}' paired twice")));
            }
            if b_pos.contains(&pb) {
                return Err(Error::Label(format!("leg '{lb}' paired twice")));
            }
            a_pos.push(pa);
            b_pos.push(pb);
        }
        let a_free: Vec<usize> = (0..self.rank()).filter(|p| !a_pos.contains(p)).collect();
        let b_free: Vec<usize> = (0..other.rank()).filter(|p| !b_pos.contains(p)).collect();
        for &pa in &a_free {
            for &pb in &b_free {
                if self.labels[pa] == other.labels[pb] {
                    return Err(Error::Label(format!(
                        "result would carry label '{}' twice; rename before contracting",
                        self.labels[pa]
                    )));
                }
            }
        }
        let mut a_order: Vec<usize> = a_free.clone();
        a_order.extend_from_slice(&a_pos);
        let mut b_order: Vec<usize> = b_pos.clone();
        b_order.extend_from_slice(&b_free);
        let a_perm = self.permuted_axes(&a_order);
        let b_perm = other.permuted_axes(&b_order);
        let m: usize = a_free.iter().map(|&p| self.dims[p]).product();
        let k: usize = a_pos.iter().map(|&p| self.dims[p]).product();
        let n: usize = b_free.iter().map(|&p| other.dims[p]).product();
        let mut out = vec![Complex64::zero(); m * n];
        linalg::gemm(m, k, n, &a_perm.data, &b_perm.data, &mut out);
        let mut labels: Vec<String> = a_free.iter().map(|&p| self.labels[p].clone()).collect();
        labels.extend(b_free.iter().map(|&p| other.labels[p].clone()));
        let mut dims: Vec<usize> = a_free.iter().map(|&p| self.dims[p]).collect();
        dims.extend(b_free.iter().map(|&p| other.dims[p]));
        Ok(Tensor {
            labels,
            dims,
            data: out,
        })
    }

    /// Partial trace over two equal-extent legs of the same tensor.
    pub fn trace(&self, l1: &str, l2: &str) -> Result<Tensor> {
        let p1 = self.axis(l1)?;
        let p2 = self.axis(l2)?;
        if p1 == p2 {
            return Err(Error::Label(format!("trace needs two distinct legs, got '{l1}' twice")));
        }
        if self.dims[p1] != self.dims[p2] {
            return Err(Error::Shape(format!(
                "trace legs '{l1}' ({}) and '{l2}' ({}) differ",
                self.dims[p1], self.dims[p2]
            )));
        }
        let rest: Vec<usize> = (0..self.rank()).filter(|&p| p != p1 && p != p2).collect();
        let mut order = rest.clone();
        order.push(p1);
        order.push(p2);
        let perm = self.permuted_axes(&order);
        let d = self.dims[p1];
        let outer: usize = rest.iter().map(|&p| self.dims[p]).product();
        let mut data = vec![Complex64::zero(); outer];
        for (j, out) in data.iter_mut().enumerate() {
            let base = j * d * d;
            let mut acc = Complex64::zero();
            for i in 0..d {
                acc += perm.data[base + i * d + i];
            }
            *out = acc;
        }
        Ok(Tensor {
            labels: rest.iter().map(|&p| self.labels[p].clone()).collect(),
            dims: rest.iter().map(|&p| self.dims[p]).collect(),
            data,
        })
    }

    /// View the tensor as a matrix with the given legs fused as rows and the
    /// remaining legs (in order) fused as columns.
    pub(crate) fn to_matrix(&self, row_labels: &[&str]) -> Result<(Mat, MatSplit)> {
        let mut row_pos = Vec::with_capacity(row_labels.len());
        for l in row_labels {
            let p = self.axis(l)?;
            if row_pos.contains(&p) {
                return Err(Error::Label(format!("row label '{l}' repeated")));
            }
            row_pos.push(p);
        }
        let col_pos: Vec<usize> = (0..self.rank()).filter(|p| !row_pos.contains(p)).collect();
        let mut order = row_pos.clone();
        order.extend_from_slice(&col_pos);
        let perm = self.permuted_axes(&order);
        let m: usize = row_pos.iter().map(|&p| self.dims[p]).product();
        let n: usize = col_pos.iter().map(|&p| self.dims[p]).product();
        let mat = Mat::from_row_slice(m, n, &perm.data);
        Ok((
            mat,
            MatSplit {
                row_labels: row_pos.iter().map(|&p| self.labels[p].clone()).collect(),
                row_dims: row_pos.iter().map(|&p| self.dims[p]).collect(),
                col_labels: col_pos.iter().map(|&p| self.labels[p].clone()).collect(),
                col_dims: col_pos.iter().map(|&p| self.dims[p]).collect(),
            },
        ))
    }

    /// Rebuild a tensor from a row-major matrix and explicit leg structure.
    pub(crate) fn from_matrix(
        mat: &Mat,
        labels: Vec<String>,
        dims: Vec<usize>,
    ) -> Result<Tensor> {
        let expect: usize = dims.iter().product();
        if mat.len() != expect {
            return Err(Error::Shape(format!(
                "matrix with {} entries cannot fill dims {:?}",
                mat.len(),
                dims
            )));
        }
        let mut data = Vec::with_capacity(mat.len());
        for r in 0..mat.nrows() {
            for c in 0..mat.ncols() {
                data.push(mat[(r, c)]);
            }
        }
        let label_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        Tensor::new(&label_refs, &dims, data)
    }

    /// Split by singular value decomposition across the given row legs.
    ///
    /// Returns `u` carrying the row legs plus a new `bond` leg, the singular
    /// values (non-increasing), and `vt` carrying `bond` plus the column legs.
    /// Truncation keeps the smallest rank with discarded squared weight at
    /// most `trunc.tol`, then caps at `trunc.max_rank`; at least one singular
    /// value is always kept.
    pub fn svd_split(
        &self,
        row_labels: &[&str],
        bond: &str,
        trunc: &TruncationSpec,
    ) -> Result<SvdResult> {
        if trunc.tol < 0.0 || !trunc.tol.is_finite() {
            return Err(Error::Invalid(format!("truncation tol {} out of range", trunc.tol)));
        }
        if row_labels.is_empty() || row_labels.len() == self.rank() {
            return Err(Error::Invalid(
                "svd_split needs a proper bipartition of the legs".into(),
            ));
        }
        if self.has_label(bond) {
            return Err(Error::Label(format!("bond label '{bond}' already present")));
        }
        let (mat, split) = self.to_matrix(row_labels)?;
        let factors = crate::linalg::robust_svd(&mat)?;
        let (rank, discarded) = trunc.decide(&factors.s);
        let kept: Vec<f64> = factors.s[..rank].to_vec();
        let u_mat = factors.u.columns(0, rank).into_owned();
        let vt_mat = factors.vt.rows(0, rank).into_owned();
        let mut u_labels = split.row_labels.clone();
        u_labels.push(bond.to_string());
        let mut u_dims = split.row_dims.clone();
        u_dims.push(rank);
        let u = Tensor::from_matrix(&u_mat, u_labels, u_dims)?;
        let mut vt_labels = vec![bond.to_string()];
        vt_labels.extend(split.col_labels.clone());
        let mut vt_dims = vec![rank];
        vt_dims.extend(split.col_dims.clone());
        let vt = Tensor::from_matrix(&vt_mat, vt_labels, vt_dims)?;
        Ok(SvdResult {
            u,
            s: kept,
            vt,
            rank,
            discarded_weight: discarded,
        })
    }

    /// Thin QR split across the given row legs.
    ///
    /// Returns `(q, r)` where `q` carries the row legs plus `bond` and has
    /// orthonormal columns (`q^H q` is the identity on the bond), and `r`
    /// carries `bond` plus the remaining legs; contracting over `bond`
    /// reconstructs the tensor.
    pub fn qr_split(&self, row_labels: &[&str], bond: &str) -> Result<(Tensor, Tensor)> {
        if row_labels.is_empty() || row_labels.len() == self.rank() {
            return Err(Error::Invalid(
                "qr_split needs a proper bipartition of the legs".into(),
            ));
        }
        if self.has_label(bond) {
            return Err(Error::Label(format!("bond label '{bond}' already present")));
        }
        let (mat, split) = self.to_matrix(row_labels)?;
        let k = mat.nrows().min(mat.ncols());
        let qr = mat.qr();
        let q_mat = qr.q();
        let r_mat = qr.r();
        let mut q_labels = split.row_labels.clone();
        q_labels.push(bond.to_string());
        let mut q_dims = split.row_dims.clone();
        q_dims.push(k);
        let q = Tensor::from_matrix(&q_mat, q_labels, q_dims)?;
        let mut r_labels = vec![bond.to_string()];
        r_labels.extend(split.col_labels.clone());
        let mut r_dims = vec![k];
        r_dims.extend(split.col_dims.clone());
        let r = Tensor::from_matrix(&r_mat, r_labels, r_dims)?;
        Ok((q, r))
    }

    /// Thin RQ split: the mirror of [`Tensor::qr_split`].
    ///
    /// Returns `(l, q)` where `l` carries the row legs plus `bond`, and `q`
    /// carries `bond` plus the remaining legs with orthonormal rows
    /// (`q q^H` is the identity on the bond).
    pub fn rq_split(&self, row_labels: &[&str], bond: &str) -> Result<(Tensor, Tensor)> {
        if row_labels.is_empty() || row_labels.len() == self.rank() {
            return Err(Error::Invalid(
                "rq_split needs a proper bipartition of the legs".into(),
            ));
        }
        if self.has_label(bond) {
            return Err(Error::Label(format!("bond label '{bond}' already present")));
        }
        let (mat, split) = self.to_matrix(row_labels)?;
        // A = L Q with Q Q^H = I comes from the QR of A^H: A^H = Q' R',
        // so L = R'^H and Q = Q'^H.
        let k = mat.nrows().min(mat.ncols());
        let qr = mat.adjoint().qr();
        let l_mat = qr.r().adjoint();
        let q_mat = qr.q().adjoint();
        let mut l_labels = split.row_labels.clone();
        l_labels.push(bond.to_string());
        let mut l_dims = split.row_dims.clone();
        l_dims.push(k);
        let l = Tensor::from_matrix(&l_mat, l_labels, l_dims)?;
        let mut q_labels = vec![bond.to_string()];
        q_labels.extend(split.col_labels.clone());
        let mut q_dims = vec![k];
        q_dims.extend(split.col_dims.clone());
        let q = Tensor::from_matrix(&q_mat, q_labels, q_dims)?;
        Ok((l, q))
    }

    /// Lowest eigenpair of the tensor viewed as a Hermitian matrix over the
    /// given row legs (columns are the remaining legs in order).
    ///
    /// Dense solve below [`DENSE_EIG_THRESHOLD`], Lanczos above. Errors with
    /// `NoConvergence` if the iteration budget runs out.
    pub fn eig_lowest(&self, row_labels: &[&str], opts: &EigOpts) -> Result<(f64, Tensor)> {
        let (mat, split) = self.to_matrix(row_labels)?;
        if mat.nrows() != mat.ncols() {
            return Err(Error::Shape(format!(
                "eig_lowest needs a square matricization, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let scale = self
            .data
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let herm_err = (0..mat.nrows())
            .flat_map(|r| (0..mat.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| (mat[(r, c)] - mat[(c, r)].conj()).norm())
            .fold(0.0f64, f64::max);
        if herm_err > 1e-10 * scale {
            return Err(Error::Invalid(format!(
                "matrix is not Hermitian (max deviation {herm_err:.3e})"
            )));
        }
        let dim = mat.nrows();
        let (value, vector) = if dim < DENSE_EIG_THRESHOLD {
            let (vals, vecs) = linalg::hermitian_eig(&mat)?;
            (vals[0], vecs.column(0).iter().copied().collect::<Vec<_>>())
        } else {
            let data = linalg::mat_rowmajor(&mat);
            let op = linalg::DenseOp { dim, data: &data };
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x7e1a_5eed);
            let out = linalg::lanczos_lowest(&op, None, opts.tol, opts.max_iter, &mut rng)?;
            if !out.converged {
                return Err(Error::NoConvergence(format!(
                    "Lanczos residual {:.3e} after {} iterations",
                    out.residual, out.iterations
                )));
            }
            (out.value, out.vector)
        };
        let label_refs: Vec<&str> = split.row_labels.iter().map(|s| s.as_str()).collect();
        let vec_t = Tensor::new(&label_refs, &split.row_dims, vector)?;
        Ok((value, vec_t))
    }

    /// Eigenvalues (by non-increasing modulus) and biorthonormal left/right
    /// eigenvectors of the tensor viewed as a general square matrix over the
    /// given row legs.
    pub fn eig_general(&self, row_labels: &[&str]) -> Result<EigGeneral> {
        let (mat, split) = self.to_matrix(row_labels)?;
        if mat.nrows() != mat.ncols() {
            return Err(Error::Shape(format!(
                "eig_general needs a square matricization, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let raw = linalg::general_eig(&mat)?;
        let label_refs: Vec<&str> = split.row_labels.iter().map(|s| s.as_str()).collect();
        let wrap = |v: Option<nalgebra::DVector<Complex64>>| -> Result<Option<Tensor>> {
            match v {
                Some(vec) => Ok(Some(Tensor::new(
                    &label_refs,
                    &split.row_dims,
                    vec.iter().copied().collect(),
                )?)),
                None => Ok(None),
            }
        };
        let right = raw.right.into_iter().map(wrap).collect::<Result<Vec<_>>>()?;
        let left = raw.left.into_iter().map(wrap).collect::<Result<Vec<_>>>()?;
        Ok(EigGeneral {
            values: raw.values,
            right,
            left,
            defective: raw.defective,
        })
    }
}

/// Leg bookkeeping for a matricized tensor.
pub(crate) struct MatSplit {
    pub row_labels: Vec<String>,
    pub row_dims: Vec<usize>,
    pub col_labels: Vec<String>,
    pub col_dims: Vec<usize>,
}

/// Convert a two-leg tensor into a dense matrix (row label first).
pub(crate) fn tensor_to_dmatrix(t: &Tensor, row: &str, col: &str) -> Result<Mat> {
    let (mat, _) = t.permuted(&[row, col])?.to_matrix(&[row])?;
    Ok(mat)
}

/// Convert a dense matrix into a two-leg tensor.
pub(crate) fn dmatrix_to_tensor(m: &Mat, row: &str, col: &str) -> Result<Tensor> {
    Tensor::from_matrix(m, vec![row.to_string(), col.to_string()], vec![m.nrows(), m.ncols()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Brute-force contraction by explicit index loops; the oracle the fast
    /// GEMM path is checked against.
    fn naive_contract(a: &Tensor, b: &Tensor, pairs: &[(&str, &str)]) -> Tensor {
        let a_labels = a.labels();
        let b_labels = b.labels();
        let a_pair: Vec<usize> = pairs
            .iter()
            .map(|(la, _)| a_labels.iter().position(|l| l == la).unwrap())
            .collect();
        let b_pair: Vec<usize> = pairs
            .iter()
            .map(|(_, lb)| b_labels.iter().position(|l| l == lb).unwrap())
            .collect();
        let a_free: Vec<usize> = (0..a.rank()).filter(|p| !a_pair.contains(p)).collect();
        let b_free: Vec<usize> = (0..b.rank()).filter(|p| !b_pair.contains(p)).collect();
        let mut out_labels: Vec<&str> = a_free.iter().map(|&p| a_labels[p]).collect();
        out_labels.extend(b_free.iter().map(|&p| b_labels[p]));
        let mut out_dims: Vec<usize> = a_free.iter().map(|&p| a.dims()[p]).collect();
        out_dims.extend(b_free.iter().map(|&p| b.dims()[p]));
        let pair_dims: Vec<usize> = a_pair.iter().map(|&p| a.dims()[p]).collect();
        let out_len: usize = out_dims.iter().product();
        let pair_len: usize = pair_dims.iter().product();
        let mut out = Tensor::zeros(&out_labels, &out_dims).unwrap();
        let mut out_idx = vec![0usize; out_dims.len()];
        for flat in 0..out_len {
            // decode flat into out_idx
            let mut rem = flat;
            for k in (0..out_dims.len()).rev() {
                out_idx[k] = rem % out_dims[k];
                rem /= out_dims[k];
            }
            let mut acc = Complex64::zero();
            let mut p_idx = vec![0usize; pair_dims.len()];
            for pflat in 0..pair_len {
                let mut rem = pflat;
                for k in (0..pair_dims.len()).rev() {
                    p_idx[k] = rem % pair_dims[k];
                    rem /= pair_dims[k];
                }
                let mut ai = vec![0usize; a.rank()];
                for (k, &p) in a_free.iter().enumerate() {
                    ai[p] = out_idx[k];
                }
                for (k, &p) in a_pair.iter().enumerate() {
                    ai[p] = p_idx[k];
                }
                let mut bi = vec![0usize; b.rank()];
                for (k, &p) in b_free.iter().enumerate() {
                    bi[p] = out_idx[a_free.len() + k];
                }
                for (k, &p) in b_pair.iter().enumerate() {
                    bi[p] = p_idx[k];
                }
                acc += a.get(&ai).unwrap() * b.get(&bi).unwrap();
            }
            out.set(&out_idx.clone(), acc).unwrap();
        }
        out
    }

    fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
        let diff = a.add(&b.scaled(c(-1.0, 0.0))).unwrap();
        assert!(
            diff.norm() < tol,
            "tensors differ by {} (> {tol})",
            diff.norm()
        );
    }

    #[test]
    fn contract_matches_naive_loops() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let a = Tensor::random_gaussian(&["i", "j", "k"], &[3, 4, 2], &mut rng).unwrap();
        let b = Tensor::random_gaussian(&["x", "j", "y"], &[2, 4, 5], &mut rng).unwrap();
        let fast = a.contract(&b, &[("j", "j")]).unwrap();
        let slow = naive_contract(&a, &b, &[("j", "j")]);
        assert_close(&fast, &slow, 1e-12);

        // Two paired legs at once.
        let b2 = Tensor::random_gaussian(&["k2", "j2", "z"], &[2, 4, 3], &mut rng).unwrap();
        let fast2 = a.contract(&b2, &[("k", "k2"), ("j", "j2")]).unwrap();
        let slow2 = naive_contract(&a, &b2, &[("k", "k2"), ("j", "j2")]);
        assert_close(&fast2, &slow2, 1e-12);

        // Outer product (no pairs).
        let v = Tensor::random_gaussian(&["p"], &[3], &mut rng).unwrap();
        let w = Tensor::random_gaussian(&["q"], &[2], &mut rng).unwrap();
        let fast3 = v.contract(&w, &[]).unwrap();
        let slow3 = naive_contract(&v, &w, &[]);
        assert_close(&fast3, &slow3, 1e-13);

        // Full contraction to a scalar.
        let u = Tensor::random_gaussian(&["p"], &[3], &mut rng).unwrap();
        let s = v.contract(&u, &[("p", "p")]).unwrap();
        assert_eq!(s.rank(), 0);
        let want: Complex64 = (0..3)
            .map(|i| v.get(&[i]).unwrap() * u.get(&[i]).unwrap())
            .sum();
        assert!((s.get(&[]).unwrap() - want).norm() < 1e-13);
    }

    #[test]
    fn contracting_identity_with_itself_traces_to_dimension() {
        let d = 5;
        let id = Tensor::identity("l", "r", d).unwrap();
        let tr = id.contract(&id, &[("l", "r"), ("r", "l")]).unwrap();
        assert_eq!(tr.rank(), 0);
        assert!((tr.get(&[]).unwrap() - c(d as f64, 0.0)).norm() < 1e-14);
        // Same thing through the single-tensor trace.
        let tr2 = id.trace("l", "r").unwrap();
        assert!((tr2.get(&[]).unwrap() - c(d as f64, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn contract_rejects_mismatents_and_collisions() {
        let a = Tensor::zeros(&["i", "j"], &[2, 3]).unwrap();
        let b = Tensor::zeros(&["j", "k"], &[4, 2]).unwrap();
        assert!(a.contract(&b, &[("j", "j")]).is_err()); // extent mismatch
        let b2 = Tensor::zeros(&["i", "k"], &[5, 3]).unwrap();
        assert!(a.contract(&b2, &[("j", "k")]).is_err()); // collision on free 'i'
        assert!(a.contract(&b, &[("nope", "j")]).is_err()); // unknown label
    }

    #[test]
    fn permute_round_trip_and_get_set() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let t = Tensor::random_gaussian(&["a", "b", "c"], &[2, 3, 4], &mut rng).unwrap();
        let p = t.permuted(&["c", "a", "b"]).unwrap();
        assert_eq!(p.dims(), &[4, 2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(t.get(&[i, j, k]).unwrap(), p.get(&[k, i, j]).unwrap());
                }
            }
        }
        let back = p.permuted(&["a", "b", "c"]).unwrap();
        assert_close(&t, &back, 1e-15);
    }

    #[test]
    fn svd_split_reconstructs_and_orders() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let t = Tensor::random_gaussian(&["a", "b", "c", "d"], &[3, 2, 4, 2], &mut rng).unwrap();
        let res = t
            .svd_split(&["a", "b"], "m", &TruncationSpec::exact())
            .unwrap();
        for w in res.s.windows(2) {
            assert!(w[0] >= w[1], "singular values not sorted: {:?}", res.s);
        }
        assert!(res.discarded_weight == 0.0);
        // u * diag(s) * vt reconstructs the tensor.
        let mut smat = Tensor::zeros(&["m", "m2"], &[res.rank, res.rank]).unwrap();
        for (i, s) in res.s.iter().enumerate() {
            smat.set(&[i, i], c(*s, 0.0)).unwrap();
        }
        let us = res.u.contract(&smat, &[("m", "m")]).unwrap();
        let rec = us.contract(&res.vt, &[("m2", "m")]).unwrap();
        let rec = rec.permuted(&["a", "b", "c", "d"]).unwrap();
        assert_close(&rec, &t, 1e-12);
        // Isometry: u^H u = identity on the bond. Both factors carry the bond
        // label "m", so one side is renamed before contracting.
        let uhu = res
            .u
            .conj()
            .renamed("m", "mc")
            .unwrap()
            .contract(&res.u, &[("a", "a"), ("b", "b")])
            .unwrap();
        let id = Tensor::identity("mc", "m", res.rank).unwrap();
        assert_close(&uhu, &id, 1e-12);
    }

    #[test]
    fn qr_and_rq_splits_reconstruct_with_orthonormal_factor() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let t = Tensor::random_gaussian(&["a", "b", "c"], &[3, 2, 4], &mut rng).unwrap();

        let (q, r) = t.qr_split(&["a", "b"], "m").unwrap();
        let rec = q.contract(&r, &[("m", "m")]).unwrap().permuted(&["a", "b", "c"]).unwrap();
        assert_close(&rec, &t, 1e-12);
        let qhq = q
            .conj()
            .renamed("m", "mc")
            .unwrap()
            .contract(&q, &[("a", "a"), ("b", "b")])
            .unwrap();
        let k = q.dim_of("m").unwrap();
        assert_close(&qhq, &Tensor::identity("mc", "m", k).unwrap(), 1e-12);

        let (l, q2) = t.rq_split(&["a"], "m").unwrap();
        let rec2 = l.contract(&q2, &[("m", "m")]).unwrap().permuted(&["a", "b", "c"]).unwrap();
        assert_close(&rec2, &t, 1e-12);
        let qqh = q2
            .contract(
                &q2.conj().renamed("m", "mc").unwrap(),
                &[("b", "b"), ("c", "c")],
            )
            .unwrap();
        let k2 = q2.dim_of("m").unwrap();
        assert_close(&qqh, &Tensor::identity("m", "mc", k2).unwrap(), 1e-12);
    }

    #[test]
    fn svd_truncation_keeps_smallest_admissible_rank() {
        // Build a matrix with known singular values via two random unitaries.
        let sv = [2.0f64, 1.0, 0.5, 1e-7];
        let d = sv.len();
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let a = Tensor::random_gaussian(&["r", "c"], &[d, d], &mut rng).unwrap();
        let qa = a
            .svd_split(&["r"], "m", &TruncationSpec::exact())
            .unwrap()
            .u; // random isometry r->m
        let b = Tensor::random_gaussian(&["c", "r"], &[d, d], &mut rng).unwrap();
        let qb = b
            .svd_split(&["c"], "m", &TruncationSpec::exact())
            .unwrap()
            .u; // random isometry c->m
        let mut smat = Tensor::zeros(&["m1", "m2"], &[d, d]).unwrap();
        for (i, s) in sv.iter().enumerate() {
            smat.set(&[i, i], c(*s, 0.0)).unwrap();
        }
        let t = qa
            .renamed("m", "m1")
            .unwrap()
            .contract(&smat, &[("m1", "m1")])
            .unwrap()
            .contract(&qb.renamed("m", "m2").unwrap(), &[("m2", "m2")])
            .unwrap();
        // tol just above the smallest squared value drops exactly one.
        let res = t
            .svd_split(
                &["r"],
                "m",
                &TruncationSpec {
                    tol: 1e-12,
                    max_rank: None,
                },
            )
            .unwrap();
        assert_eq!(res.rank, 3);
        assert!((res.discarded_weight - 1e-14).abs() < 1e-15);
        // max_rank cap wins over tolerance.
        let res2 = t
            .svd_split(
                &["r"],
                "m",
                &TruncationSpec {
                    tol: 0.0,
                    max_rank: Some(2),
                },
            )
            .unwrap();
        assert_eq!(res2.rank, 2);
        assert!((res2.discarded_weight - (0.25 + 1e-14)).abs() < 1e-12);
    }

    #[test]
    fn eig_lowest_pauli_x() {
        let x = Tensor::new(
            &["r", "c"],
            &[2, 2],
            vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        let (val, vec) = x.eig_lowest(&["r"], &EigOpts::default()).unwrap();
        assert!((val + 1.0).abs() < 1e-12);
        // Eigenvector proportional to (1, -1)/sqrt(2).
        let a = vec.get(&[0]).unwrap();
        let b = vec.get(&[1]).unwrap();
        assert!((a + b).norm() < 1e-10);
        assert!(((a.norm_sqr() + b.norm_sqr()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_lowest_dense_and_krylov_agree() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        // 100-dimensional Hermitian: above the dense threshold.
        let raw = Tensor::random_gaussian(&["r", "c"], &[100, 100], &mut rng).unwrap();
        let herm = raw
            .add(&raw.conj().permuted(&["c", "r"]).unwrap().with_labels(&["r", "c"]).unwrap())
            .unwrap()
            .scaled(c(0.5, 0.0));
        let (val, _) = herm.eig_lowest(&["r"], &EigOpts::default()).unwrap();
        let (mat, _) = herm.to_matrix(&["r"]).unwrap();
        let (dense_vals, _) = crate::linalg::hermitian_eig(&mat).unwrap();
        assert!((val - dense_vals[0]).abs() < 1e-9);
    }

    #[test]
    fn eig_lowest_rejects_non_hermitian() {
        let t = Tensor::new(
            &["r", "c"],
            &[2, 2],
            vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        assert!(t.eig_lowest(&["r"], &EigOpts::default()).is_err());
    }

    #[test]
    fn eig_general_on_rotation_and_jordan() {
        let rot = Tensor::new(
            &["r", "c"],
            &[2, 2],
            vec![c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        let eig = rot.eig_general(&["r"]).unwrap();
        assert!(!eig.defective);
        let mods: Vec<f64> = eig.values.iter().map(|v| v.norm()).collect();
        assert!((mods[0] - 1.0).abs() < 1e-12 && (mods[1] - 1.0).abs() < 1e-12);
        assert!(eig.values.iter().any(|v| (v - c(0.0, 1.0)).norm() < 1e-12));
        assert!(eig.values.iter().any(|v| (v - c(0.0, -1.0)).norm() < 1e-12));

        let jordan = Tensor::new(
            &["r", "c"],
            &[2, 2],
            vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        let eig = jordan.eig_general(&["r"]).unwrap();
        assert!(eig.defective);
        assert!(eig.right.iter().all(|v| v.is_none()));
    }

    #[test]
    fn eig_general_reproduces_transfer_style_spectrum() {
        // Sum_j kron(A_j, conj(A_j)) for the valence-bond tensor set
        // {Z, sqrt2 sigma+, -sqrt2 sigma-} has spectrum {3, -1, -1, -1}.
        let z = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)];
        let sp = [c(0.0, 0.0), c(2f64.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let sm = [c(0.0, 0.0), c(0.0, 0.0), c(-(2f64.sqrt()), 0.0), c(0.0, 0.0)];
        let mut e = Tensor::zeros(&["kl", "bl", "kr", "br"], &[2, 2, 2, 2]).unwrap();
        for mats in [&z, &sp, &sm] {
            for a in 0..2 {
                for b in 0..2 {
                    for a2 in 0..2 {
                        for b2 in 0..2 {
                            let cur = e.get(&[a, a2, b, b2]).unwrap();
                            e.set(
                                &[a, a2, b, b2],
                                cur + mats[a * 2 + b] * mats[a2 * 2 + b2].conj(),
                            )
                            .unwrap();
                        }
                    }
                }
            }
        }
        let eig = e.eig_general(&["kl", "bl"]).unwrap();
        assert!(!eig.defective);
        assert!((eig.values[0] - c(3.0, 0.0)).norm() < 1e-10);
        for j in 1..4 {
            assert!((eig.values[j] - c(-1.0, 0.0)).norm() < 1e-10, "value {}", eig.values[j]);
        }
    }

    #[test]
    fn add_aligns_leg_order() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let t = Tensor::random_gaussian(&["a", "b"], &[2, 3], &mut rng).unwrap();
        let p = t.permuted(&["b", "a"]).unwrap();
        let sum = t.add(&p).unwrap();
        assert_close(&sum, &t.scaled(c(2.0, 0.0)), 1e-13);
    }

    #[test]
    fn trace_contracts_matching_legs() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let t = Tensor::random_gaussian(&["a", "i", "j"], &[3, 4, 4], &mut rng).unwrap();
        let tr = t.trace("i", "j").unwrap();
        for a in 0..3 {
            let mut want = Complex64::zero();
            for i in 0..4 {
                want += t.get(&[a, i, i]).unwrap();
            }
            assert!((tr.get(&[a]).unwrap() - want).norm() < 1e-13);
        }
    }
}
