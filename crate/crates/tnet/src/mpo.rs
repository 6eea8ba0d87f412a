//! Matrix product operators and a compiler from local Hamiltonian terms.
//!
//! Site tensors carry the legs `("wl", "po", "pi", "wr")`: left operator
//! bond, outgoing (row) physical index, incoming (column) physical index,
//! right operator bond. Open chains pin the outer bonds to extent 1; on
//! periodic chains the dense operator is the trace over the wrap bond of the
//! site-tensor product.
//!
//! The compiler turns [`LocalTerms`] into a finite-state automaton walked
//! left to right. Two-site couplings are split into sum-of-product channels
//! by a singular value decomposition of the term with its indices regrouped
//! site-by-site; when a next-nearest term is present both terms enter one
//! joint factorization so they share left factors and bond states. Periodic
//! chains add dedicated states that thread the terms crossing the wrap bond
//! through the trace, so no separate boundary correction is ever applied.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{local_terms, LocalTerms, ModelSpec, OpMatrix};
use crate::mps::{Boundary, Gauge, MatrixProductState};
use crate::tensor::Tensor;

/// Relative singular value threshold below which a coupling channel is
/// dropped, and the absolute factor norm below which a channel is treated as
/// absent on one side.
const CHANNEL_TOL: f64 = 1e-12;

/// Largest dense dimension [`MatrixProductOperator::densify`] will build.
pub const DENSIFY_DIM_CAP: usize = 2048;

/// A chain of operator-valued site tensors with labels
/// `("wl", "po", "pi", "wr")`.
#[derive(Clone, Debug)]
pub struct MatrixProductOperator {
    pub(crate) tensors: Vec<Tensor>,
    pub(crate) boundary: Boundary,
}

impl MatrixProductOperator {
    /// Wraps explicit site tensors, checking leg names and bond consistency.
    pub fn from_site_tensors(tensors: Vec<Tensor>, boundary: Boundary) -> Result<Self> {
        let n = tensors.len();
        if n == 0 {
            return Err(Error::Invalid("operator needs at least one site".into()));
        }
        for (k, t) in tensors.iter().enumerate() {
            let labels = t.labels();
            if labels != ["wl", "po", "pi", "wr"] {
                return Err(Error::Label(format!(
                    "site {k} has legs {labels:?}, expected [\"wl\", \"po\", \"pi\", \"wr\"]"
                )));
            }
            if t.dim_of("po")? != t.dim_of("pi")? {
                return Err(Error::Shape(format!(
                    "site {k} has unequal physical extents {} and {}",
                    t.dim_of("po")?,
                    t.dim_of("pi")?
                )));
            }
        }
        for k in 0..n {
            let joined = k + 1 < n || boundary == Boundary::Periodic;
            if joined {
                let right = tensors[k].dim_of("wr")?;
                let left = tensors[(k + 1) % n].dim_of("wl")?;
                if right != left {
                    return Err(Error::Shape(format!(
                        "operator bond between sites {k} and {} has extents {right} vs {left}",
                        (k + 1) % n
                    )));
                }
            }
        }
        if boundary == Boundary::Open
            && (tensors[0].dim_of("wl")? != 1 || tensors[n - 1].dim_of("wr")? != 1)
        {
            return Err(Error::Shape(
                "open operator must have outer bonds of extent 1".into(),
            ));
        }
        Ok(MatrixProductOperator { tensors, boundary })
    }

    /// The identity operator on `n` sites of physical dimension `d`.
    pub fn identity(n: usize, d: usize, boundary: Boundary) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Invalid("identity operator needs n, d >= 1".into()));
        }
        let site = Tensor::from_fn(&["wl", "po", "pi", "wr"], &[1, d, d, 1], |idx| {
            if idx[1] == idx[2] {
                Complex64::ONE
            } else {
                Complex64::ZERO
            }
        })?;
        Ok(MatrixProductOperator {
            tensors: vec![site; n],
            boundary,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn site(&self, k: usize) -> &Tensor {
        &self.tensors[k]
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.tensors
            .iter()
            .map(|t| t.dim_of("po").expect("validated on construction"))
            .collect()
    }

    /// Extents of the operator bonds: the `n - 1` interior bonds for an open
    /// chain, plus the wrap bond (listed last) for a periodic one.
    pub fn bond_dims(&self) -> Vec<usize> {
        let n = self.tensors.len();
        let interior = n - 1;
        let mut out: Vec<usize> = (0..interior)
            .map(|k| self.tensors[k].dim_of("wr").expect("validated"))
            .collect();
        if self.boundary == Boundary::Periodic {
            out.push(self.tensors[n - 1].dim_of("wr").expect("validated"));
        }
        out
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Operator product `self * other` (apply `other` first). Physical
    /// dimensions must match site by site; bond extents multiply.
    pub fn times(&self, other: &MatrixProductOperator) -> Result<MatrixProductOperator> {
        if self.boundary != other.boundary {
            return Err(Error::Invalid(
                "operator product needs matching boundaries".into(),
            ));
        }
        if self.n_sites() != other.n_sites() {
            return Err(Error::Shape(format!(
                "operator product needs equal lengths, got {} and {}",
                self.n_sites(),
                other.n_sites()
            )));
        }
        let mut tensors = Vec::with_capacity(self.n_sites());
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            let b = b.renamed("wl", "xl")?.renamed("wr", "xr")?;
            let t = a.contract(&b, &[("pi", "po")])?;
            // Legs now (wl, po, wr, xl, pi, wr=xr): fuse the two bond pairs.
            tensors.push(t.fused(&[
                ("wl", &["wl", "xl"]),
                ("po", &["po"]),
                ("pi", &["pi"]),
                ("wr", &["wr", "xr"]),
            ])?);
        }
        Ok(MatrixProductOperator {
            tensors,
            boundary: self.boundary,
        })
    }

    /// Materializes the dense matrix, site 0 most significant in both
    /// physical indices. Refuses dimensions above [`DENSIFY_DIM_CAP`].
    pub fn densify(&self) -> Result<OpMatrix> {
        let mut dim = 1usize;
        for d in self.phys_dims() {
            dim = dim
                .checked_mul(d)
                .filter(|&v| v <= DENSIFY_DIM_CAP)
                .ok_or_else(|| {
                    Error::Unsupported(format!(
                        "dense operator dimension exceeds the cap of {DENSIFY_DIM_CAP}"
                    ))
                })?;
        }
        let mut acc = self.tensors[0].clone();
        for k in 1..self.tensors.len() {
            let w = self.tensors[k]
                .renamed("po", "qo")?
                .renamed("pi", "qi")?;
            let t = acc.contract(&w, &[("wr", "wl")])?;
            // Legs (wl, po, pi, qo, qi, wr): grow the physical groups.
            acc = t.fused(&[
                ("wl", &["wl"]),
                ("po", &["po", "qo"]),
                ("pi", &["pi", "qi"]),
                ("wr", &["wr"]),
            ])?;
        }
        let closed = match self.boundary {
            Boundary::Open => acc.fused(&[("po", &["wl", "po"]), ("pi", &["pi", "wr"])])?,
            Boundary::Periodic => acc.trace("wl", "wr")?,
        };
        let flat = closed.permuted(&["po", "pi"])?;
        OpMatrix::new(dim, flat.data().to_vec())
    }
}

/// Compiles a model description into its operator chain.
pub fn build_mpo(spec: &ModelSpec) -> Result<MatrixProductOperator> {
    let terms = local_terms(spec)?;
    compile(&terms, spec.n, spec.boundary)
}

/// Applies an operator to a state. Virtual bonds multiply (state bond times
/// operator bond); no truncation is performed, and the result carries no
/// gauge. Boundaries and physical dimensions must match.
pub fn apply_mpo(
    op: &MatrixProductOperator,
    mps: &MatrixProductState,
) -> Result<MatrixProductState> {
    check_compatible(mps, op)?;
    let mut tensors = Vec::with_capacity(mps.n_sites());
    for (w, a) in op.tensors.iter().zip(mps.tensors.iter()) {
        let t = w.contract(a, &[("pi", "p")])?;
        // Legs (wl, po, wr, vl, vr): fuse operator and state bonds, operator
        // index outermost so pairing is consistent across every bond.
        tensors.push(t.fused(&[
            ("vl", &["wl", "vl"]),
            ("p", &["po"]),
            ("vr", &["wr", "vr"]),
        ])?);
    }
    Ok(MatrixProductState {
        tensors,
        boundary: mps.boundary(),
        gauge: Gauge::None,
        schmidt_weights: None,
    })
}

/// The matrix element `<psi| O |psi>` without normalization.
///
/// Open chains are contracted in a single left-to-right sweep with a cached
/// three-leg environment; periodic chains multiply per-site transfer matrices
/// and take the trace. Works in any gauge.
pub fn expectation_mpo(
    mps: &MatrixProductState,
    op: &MatrixProductOperator,
) -> Result<Complex64> {
    check_compatible(mps, op)?;
    match mps.boundary() {
        Boundary::Open => {
            let mut env = Tensor::new(&["k", "w", "b"], &[1, 1, 1], vec![Complex64::ONE])?;
            for (a, w) in mps.tensors.iter().zip(op.tensors.iter()) {
                let bra = a.conj().renamed("vl", "bl")?.renamed("vr", "br")?;
                let t = env.contract(a, &[("k", "vl")])?;
                let t = t.contract(w, &[("w", "wl"), ("p", "pi")])?;
                let t = t.contract(&bra, &[("b", "bl"), ("po", "p")])?;
                env = t
                    .renamed("vr", "k")?
                    .renamed("wr", "w")?
                    .renamed("br", "b")?;
            }
            Ok(env.data()[0])
        }
        Boundary::Periodic => {
            let mut prod: Option<Mat> = None;
            for (a, w) in mps.tensors.iter().zip(op.tensors.iter()) {
                let bra = a
                    .conj()
                    .renamed("vl", "bl")?
                    .renamed("p", "pb")?
                    .renamed("vr", "br")?;
                let t = a.contract(w, &[("p", "pi")])?;
                let t = t.contract(&bra, &[("po", "pb")])?;
                // Legs (vl, vr, wl, wr, bl, br); rows and columns list the
                // ket, operator, and bra bonds in the same order.
                let (m, _) = t.permuted(&["vl", "wl", "bl", "vr", "wr", "br"])?.to_matrix(&[
                    "vl", "wl", "bl",
                ])?;
                prod = Some(match prod {
                    None => m,
                    Some(p) => p * m,
                });
            }
            let p = prod.expect("at least one site");
            Ok(p.diagonal().sum())
        }
    }
}

fn check_compatible(mps: &MatrixProductState, op: &MatrixProductOperator) -> Result<()> {
    if mps.n_sites() != op.n_sites() {
        return Err(Error::Shape(format!(
            "state has {} sites, operator {}",
            mps.n_sites(),
            op.n_sites()
        )));
    }
    if mps.boundary() != op.boundary() {
        return Err(Error::Invalid(
            "state and operator boundaries must match".into(),
        ));
    }
    let sd = mps.phys_dims();
    let od = op.phys_dims();
    if sd != od {
        return Err(Error::Shape(format!(
            "physical dimensions differ: state {sd:?} vs operator {od:?}"
        )));
    }
    Ok(())
}

/// One sum-of-products channel of the two-site couplings: `l` acts on the
/// left site; `r1` completes a nearest-neighbor placement, `r2` a
/// next-nearest one (after an identity on the skipped site). Factors absent
/// from a channel are `None`.
struct Channel {
    l: OpMatrix,
    r1: Option<OpMatrix>,
    r2: Option<OpMatrix>,
}

/// Splits the bond and next-nearest terms into shared channels.
///
/// Each term `h` is regrouped as a matrix from (left out, left in) to
/// (right out, right in); stacking the two regrouped terms side by side and
/// taking one singular value decomposition yields left factors common to
/// both, so a channel can feed a nearest-neighbor completion, a next-nearest
/// completion, or both.
fn factor_channels(terms: &LocalTerms) -> Result<Vec<Channel>> {
    let d = terms.d;
    let d2 = d * d;
    let parts: Vec<&OpMatrix> = [terms.bond.as_ref(), terms.nnn.as_ref()]
        .into_iter()
        .flatten()
        .collect();
    if parts.is_empty() {
        return Ok(Vec::new());
    }
    for p in &parts {
        if p.dim() != d2 {
            return Err(Error::Shape(format!(
                "two-site term has dimension {}, expected {d2}",
                p.dim()
            )));
        }
    }
    let nb = parts.len();
    let mut m = Mat::zeros(d2, nb * d2);
    for (blk, h) in parts.iter().enumerate() {
        for a in 0..d {
            for alpha in 0..d {
                for b in 0..d {
                    for beta in 0..d {
                        m[(a * d + alpha, blk * d2 + b * d + beta)] =
                            h.get(a * d + b, alpha * d + beta);
                    }
                }
            }
        }
    }
    let factors = crate::linalg::robust_svd(&m)?;
    let u = &factors.u;
    let vt = &factors.vt;
    let smax = factors.s[0];
    let mut channels = Vec::new();
    if smax <= 0.0 {
        return Ok(channels);
    }
    let has_bond = terms.bond.is_some();
    for (r, &s) in factors.s.iter().enumerate() {
        if s <= CHANNEL_TOL * smax {
            break;
        }
        let scale = s.sqrt();
        let mut l = OpMatrix::zeros(d);
        for a in 0..d {
            for alpha in 0..d {
                l.set(a, alpha, u[(a * d + alpha, r)] * scale);
            }
        }
        let right = |blk: usize| -> Option<OpMatrix> {
            let mut f = OpMatrix::zeros(d);
            let mut norm2 = 0.0;
            for b in 0..d {
                for beta in 0..d {
                    let v = vt[(r, blk * d2 + b * d + beta)] * scale;
                    norm2 += v.norm_sqr();
                    f.set(b, beta, v);
                }
            }
            if norm2.sqrt() <= CHANNEL_TOL * scale {
                None
            } else {
                Some(f)
            }
        };
        let (r1, r2) = if has_bond && nb == 2 {
            (right(0), right(1))
        } else if has_bond {
            (right(0), None)
        } else {
            (None, right(0))
        };
        if r1.is_none() && r2.is_none() {
            continue;
        }
        channels.push(Channel { l, r1, r2 });
    }
    Ok(channels)
}

/// Bond-state layout of the automaton. State 0 accumulates finished terms,
/// the last state means nothing placed yet; in between sit the coupling
/// channels, the skip states of next-nearest placements, and (periodically)
/// the states that carry wrap terms across the traced bond.
struct Layout {
    f: usize,
    s: usize,
    ch: Vec<usize>,
    pass: Vec<Option<usize>>,
    wrap_bond: Vec<Option<usize>>,
    wrap_a: Vec<Option<usize>>,
    wrap_b: Vec<Option<usize>>,
    dw: usize,
}

fn layout(channels: &[Channel], periodic: bool) -> Layout {
    let mut next = 1;
    let mut take = |cond: bool| {
        if cond {
            let v = next;
            next += 1;
            Some(v)
        } else {
            None
        }
    };
    let ch: Vec<usize> = channels.iter().map(|_| take(true).unwrap()).collect();
    let pass: Vec<Option<usize>> = channels.iter().map(|c| take(c.r2.is_some())).collect();
    let (wrap_bond, wrap_a, wrap_b) = if periodic {
        (
            channels.iter().map(|c| take(c.r1.is_some())).collect(),
            channels.iter().map(|c| take(c.r2.is_some())).collect(),
            channels.iter().map(|c| take(c.r2.is_some())).collect(),
        )
    } else {
        (
            vec![None; channels.len()],
            vec![None; channels.len()],
            vec![None; channels.len()],
        )
    };
    Layout {
        f: 0,
        s: next,
        ch,
        pass,
        wrap_bond,
        wrap_a,
        wrap_b,
        dw: next + 1,
    }
}

/// Sparse block matrix over automaton states, materialized into a site
/// tensor with optional row or column slicing for the chain ends.
struct Blocks {
    dw: usize,
    d: usize,
    entries: Vec<(usize, usize, OpMatrix)>,
}

impl Blocks {
    fn new(dw: usize, d: usize) -> Self {
        Blocks {
            dw,
            d,
            entries: Vec::new(),
        }
    }

    fn put(&mut self, row: usize, col: usize, op: OpMatrix) {
        debug_assert!(
            !self.entries.iter().any(|(r, c, _)| *r == row && *c == col),
            "automaton slot ({row}, {col}) assigned twice"
        );
        self.entries.push((row, col, op));
    }

    fn tensor(&self, rows: Option<usize>, cols: Option<usize>) -> Result<Tensor> {
        let nr = if rows.is_some() { 1 } else { self.dw };
        let nc = if cols.is_some() { 1 } else { self.dw };
        let d = self.d;
        let mut data = vec![Complex64::ZERO; nr * d * d * nc];
        for (r, c, op) in &self.entries {
            if rows.is_some_and(|keep| keep != *r) || cols.is_some_and(|keep| keep != *c) {
                continue;
            }
            let ri = if rows.is_some() { 0 } else { *r };
            let ci = if cols.is_some() { 0 } else { *c };
            for po in 0..d {
                for pi in 0..d {
                    data[((ri * d + po) * d + pi) * nc + ci] += op.get(po, pi);
                }
            }
        }
        Tensor::new(&["wl", "po", "pi", "wr"], &[nr, d, d, nc], data)
    }
}

/// Interior-site transition matrix shared by both boundaries.
fn bulk_blocks(lay: &Layout, channels: &[Channel], site: Option<&OpMatrix>, d: usize) -> Blocks {
    let eye = OpMatrix::identity(d);
    let mut w = Blocks::new(lay.dw, d);
    w.put(lay.s, lay.s, eye.clone());
    w.put(lay.f, lay.f, eye.clone());
    if let Some(h) = site {
        w.put(lay.s, lay.f, h.clone());
    }
    for (r, c) in channels.iter().enumerate() {
        w.put(lay.s, lay.ch[r], c.l.clone());
        if let Some(r1) = &c.r1 {
            w.put(lay.ch[r], lay.f, r1.clone());
        }
        if let Some(r2) = &c.r2 {
            let p = lay.pass[r].expect("pass state exists when r2 does");
            w.put(lay.ch[r], p, eye.clone());
            w.put(p, lay.f, r2.clone());
        }
    }
    w
}

fn compile(terms: &LocalTerms, n: usize, boundary: Boundary) -> Result<MatrixProductOperator> {
    terms.validate()?;
    let periodic = boundary == Boundary::Periodic;
    if n < 2 && periodic {
        return Err(Error::Model("operator ring needs at least 2 sites".into()));
    }
    if n == 0 {
        return Err(Error::Model("operator chain needs at least 1 site".into()));
    }
    if terms.nnn.is_some() && n < 3 {
        return Err(Error::Model(
            "next-nearest terms need at least 3 sites".into(),
        ));
    }
    let d = terms.d;
    let site = terms.site.as_ref();
    let channels = factor_channels(terms)?;
    let lay = layout(&channels, periodic);
    let bulk = bulk_blocks(&lay, &channels, site, d);
    let mut tensors = Vec::with_capacity(n);
    if !periodic {
        if n == 1 {
            // A lone open site keeps only the direct start-to-finish block,
            // which is the site term (or zero when the model has none).
            let t = bulk.tensor(Some(lay.s), Some(lay.f))?;
            return MatrixProductOperator::from_site_tensors(vec![t], boundary);
        }
        tensors.push(bulk.tensor(Some(lay.s), None)?);
        for _ in 1..n - 1 {
            tensors.push(bulk.tensor(None, None)?);
        }
        tensors.push(bulk.tensor(None, Some(lay.f))?);
        return MatrixProductOperator::from_site_tensors(tensors, boundary);
    }

    // First site: the bulk plus the exits of the wrap states. A bond term
    // crossing the traced bond finishes here; a next-nearest term crossing it
    // either finishes here or passes through toward site 2.
    let mut first = bulk_blocks(&lay, &channels, site, d);
    for (r, c) in channels.iter().enumerate() {
        if let Some(r1) = &c.r1 {
            first.put(lay.wrap_bond[r].unwrap(), lay.s, r1.clone());
        }
        if let Some(r2) = &c.r2 {
            first.put(lay.wrap_a[r].unwrap(), lay.s, r2.clone());
            first.put(
                lay.wrap_b[r].unwrap(),
                lay.pass[r].expect("pass state exists when r2 does"),
                OpMatrix::identity(d),
            );
        }
    }

    // Last site: every interior transition into the finished state instead
    // returns to the start state, which closes ordinary terms through the
    // bond trace; wrap terms are injected here by placing their left factor.
    let mut last = Blocks::new(lay.dw, d);
    let eye = OpMatrix::identity(d);
    last.put(lay.f, lay.s, eye.clone());
    if let Some(h) = site {
        last.put(lay.s, lay.s, h.clone());
    }
    for (r, c) in channels.iter().enumerate() {
        if let Some(r1) = &c.r1 {
            last.put(lay.ch[r], lay.s, r1.clone());
            last.put(lay.s, lay.wrap_bond[r].unwrap(), c.l.clone());
        }
        if let Some(r2) = &c.r2 {
            let p = lay.pass[r].expect("pass state exists when r2 does");
            last.put(p, lay.s, r2.clone());
            last.put(lay.ch[r], lay.wrap_a[r].unwrap(), eye.clone());
            last.put(lay.f, lay.wrap_b[r].unwrap(), c.l.clone());
        }
    }

    tensors.push(first.tensor(None, None)?);
    for _ in 1..n - 1 {
        tensors.push(bulk.tensor(None, None)?);
    }
    tensors.push(last.tensor(None, None)?);
    MatrixProductOperator::from_site_tensors(tensors, boundary)
}
