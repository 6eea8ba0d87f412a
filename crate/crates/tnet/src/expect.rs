//! Expectation values, overlaps, and two-point correlators of finite chains.
//!
//! The workhorse is [`ExpectationEngine`], which caches boundary environments
//! in both sweep directions (open chains) or per-site transfer matrices with
//! prefix and suffix products (periodic chains). Building the engine costs
//! one pass over the chain; each observable afterwards costs only the sites
//! it touches. All expectations are normalized by `<psi|psi>`, so unit-norm
//! input makes the division exact.
//!
//! Observables are dense [`OpMatrix`] blocks on one or more adjacent sites,
//! with the leftmost site as the most significant factor.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::OpMatrix;
use crate::mps::{Boundary, MatrixProductState};
use crate::tensor::Tensor;

/// The map between virtual-bond spaces induced by one site tensor and its
/// conjugate, as a dense matrix from (right ket, right bra) to (left ket,
/// left bra) index pairs; optionally dressed by a single-site observable.
///
/// Rows and columns pair the ket bond with the bra bond, ket index more
/// significant. For a right-orthonormal site the undressed map sends the
/// vectorized identity to itself.
pub struct TransferOperator {
    pub(crate) mat: Mat,
    rows: usize,
    cols: usize,
}

impl TransferOperator {
    /// Undressed transfer operator of one site tensor.
    pub fn from_site(a: &Tensor) -> Result<Self> {
        Self::build(a, None)
    }

    /// Transfer operator with a single-site observable inserted.
    pub fn dressed(a: &Tensor, obs: &OpMatrix) -> Result<Self> {
        Self::build(a, Some(obs))
    }

    fn build(a: &Tensor, obs: Option<&OpMatrix>) -> Result<Self> {
        let d = a.dim_of("p")?;
        if let Some(o) = obs {
            if o.dim() != d {
                return Err(Error::Shape(format!(
                    "observable dimension {} does not match physical dimension {d}",
                    o.dim()
                )));
            }
        }
        let bra = a
            .conj()
            .renamed("vl", "bl")?
            .renamed("p", "pb")?
            .renamed("vr", "br")?;
        let t = match obs {
            None => a.contract(&bra, &[("p", "pb")])?,
            Some(o) => {
                let om = Tensor::new(&["po", "pi"], &[d, d], o.entries().to_vec())?;
                let t = a.contract(&om, &[("p", "pi")])?;
                t.contract(&bra, &[("po", "pb")])?
            }
        };
        // Legs (vl, vr, bl, br).
        let (mat, _) = t
            .permuted(&["vl", "bl", "vr", "br"])?
            .to_matrix(&["vl", "bl"])?;
        Ok(TransferOperator {
            rows: mat.nrows(),
            cols: mat.ncols(),
            mat,
        })
    }

    /// Extent of the (left ket, left bra) row space.
    pub fn dim_out(&self) -> usize {
        self.rows
    }

    /// Extent of the (right ket, right bra) column space.
    pub fn dim_in(&self) -> usize {
        self.cols
    }

    /// Applies the map to a vector over (right ket, right bra) pairs.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "vector length {} does not match transfer extent {}",
                v.len(),
                self.cols
            )));
        }
        let mut out = vec![Complex64::ZERO; self.rows];
        for r in 0..self.rows {
            let mut acc = Complex64::ZERO;
            for c in 0..self.cols {
                acc += self.mat[(r, c)] * v[c];
            }
            out[r] = acc;
        }
        Ok(out)
    }
}

/// Cached two-directional environments of one state.
pub struct ExpectationEngine<'a> {
    mps: &'a MatrixProductState,
    /// `left[k]` contracts sites before `k`; legs `("k", "b")`.
    left: Vec<Tensor>,
    /// `right[k]` contracts sites from `k` on; legs `("k", "b")`.
    right: Vec<Tensor>,
    ring: Option<RingCache>,
    norm2: f64,
}

/// Per-site transfer matrices of a periodic chain with cached partial
/// products: `prefix[k]` multiplies sites before `k`, `suffix[k]` sites from
/// `k` on.
struct RingCache {
    prefix: Vec<Mat>,
    suffix: Vec<Mat>,
}

fn unit_env() -> Tensor {
    Tensor::new(&["k", "b"], &[1, 1], vec![Complex64::ONE]).expect("static shape")
}

impl<'a> ExpectationEngine<'a> {
    pub fn new(mps: &'a MatrixProductState) -> Result<Self> {
        let n = mps.n_sites();
        match mps.boundary() {
            Boundary::Open => {
                let mut left = Vec::with_capacity(n + 1);
                left.push(unit_env());
                for k in 0..n {
                    let a = mps.site(k);
                    let bra = a.conj().renamed("vl", "bl")?.renamed("vr", "br")?;
                    let t = left[k].contract(a, &[("k", "vl")])?;
                    let t = t.contract(&bra, &[("b", "bl"), ("p", "p")])?;
                    left.push(t.renamed("vr", "k")?.renamed("br", "b")?);
                }
                let mut right = vec![unit_env(); n + 1];
                for k in (0..n).rev() {
                    let a = mps.site(k);
                    let bra = a.conj().renamed("vl", "bl")?.renamed("vr", "br")?;
                    let t = a.contract(&right[k + 1], &[("vr", "k")])?;
                    let t = t.contract(&bra, &[("p", "p"), ("b", "br")])?;
                    right[k] = t.renamed("vl", "k")?.renamed("bl", "b")?;
                }
                let norm2 = real_norm(left[n].data()[0])?;
                Ok(ExpectationEngine {
                    mps,
                    left,
                    right,
                    ring: None,
                    norm2,
                })
            }
            Boundary::Periodic => {
                let mats: Vec<Mat> = (0..n)
                    .map(|k| TransferOperator::from_site(mps.site(k)).map(|t| t.mat))
                    .collect::<Result<_>>()?;
                let d0 = mats[0].nrows();
                let mut prefix = vec![Mat::identity(d0, d0)];
                for k in 0..n {
                    let next = &prefix[k] * &mats[k];
                    prefix.push(next);
                }
                let dn = mats[n - 1].ncols();
                let mut suffix = vec![Mat::identity(dn, dn); n + 1];
                for k in (0..n).rev() {
                    suffix[k] = &mats[k] * &suffix[k + 1];
                }
                let norm2 = real_norm(prefix[n].diagonal().sum())?;
                Ok(ExpectationEngine {
                    mps,
                    left: Vec::new(),
                    right: Vec::new(),
                    ring: Some(RingCache { prefix, suffix }),
                    norm2,
                })
            }
        }
    }

    pub fn n_sites(&self) -> usize {
        self.mps.n_sites()
    }

    /// Squared norm of the underlying state.
    pub fn norm_squared(&self) -> f64 {
        self.norm2
    }

    /// Number of sites the observable spans when anchored at `first_site`.
    fn span_for(&self, obs_dim: usize, first_site: usize) -> Result<usize> {
        let dims = self.mps.phys_dims();
        let n = dims.len();
        if first_site >= n {
            return Err(Error::Invalid(format!(
                "support starts at site {first_site} on a chain of {n} sites"
            )));
        }
        let mut acc = 1usize;
        let mut span = 0usize;
        while acc < obs_dim && first_site + span < n {
            acc *= dims[first_site + span];
            span += 1;
        }
        if acc != obs_dim || span == 0 {
            return Err(Error::Shape(format!(
                "observable of dimension {obs_dim} does not fit sites {first_site}.. of {dims:?}"
            )));
        }
        Ok(span)
    }

    /// Contracts the site tensors of `first..first + span` into one blob with
    /// a fused physical leg `P`, leftmost site most significant.
    fn ket_blob(&self, first: usize, span: usize) -> Result<Tensor> {
        let mut blob = self.mps.site(first).renamed("p", "p0")?;
        let mut parts = vec!["p0".to_string()];
        for s in 1..span {
            let name = format!("p{s}");
            let next = self.mps.site(first + s).renamed("p", &name)?;
            blob = blob.contract(&next, &[("vr", "vl")])?;
            parts.push(name);
        }
        let part_refs: Vec<&str> = parts.iter().map(|s| s.as_str()).collect();
        blob.fused(&[("vl", &["vl"]), ("P", &part_refs), ("vr", &["vr"])])
    }

    /// Dressed multi-site transfer block as legs (vl, bl, vr, br).
    fn dressed_block(&self, obs: &OpMatrix, first: usize, span: usize) -> Result<Tensor> {
        let blob = self.ket_blob(first, span)?;
        let m = blob.dim_of("P")?;
        let om = Tensor::new(&["po", "pi"], &[m, m], obs.entries().to_vec())?;
        let bra = blob
            .conj()
            .renamed("vl", "bl")?
            .renamed("P", "pb")?
            .renamed("vr", "br")?;
        let t = blob.contract(&om, &[("P", "pi")])?;
        t.contract(&bra, &[("po", "pb")])?
            .permuted(&["vl", "bl", "vr", "br"])
    }

    /// Normalized expectation of a dense observable anchored at `first_site`.
    pub fn local_expectation(&self, obs: &OpMatrix, first_site: usize) -> Result<Complex64> {
        let span = self.span_for(obs.dim(), first_site)?;
        let n = self.mps.n_sites();
        if first_site + span > n {
            return Err(Error::Invalid(format!(
                "support {first_site}..{} exceeds chain of {n} sites",
                first_site + span
            )));
        }
        let block = self.dressed_block(obs, first_site, span)?;
        match &self.ring {
            None => {
                let t = self.left[first_site].contract(&block, &[("k", "vl"), ("b", "bl")])?;
                let t = t.contract(&self.right[first_site + span], &[("vr", "k"), ("br", "b")])?;
                Ok(t.data()[0] / self.norm2)
            }
            Some(ring) => {
                let (bm, _) = block.to_matrix(&["vl", "bl"])?;
                let around = &ring.suffix[first_site + span] * &ring.prefix[first_site];
                let v = (bm * around).diagonal().sum();
                Ok(v / self.norm2)
            }
        }
    }

    /// Raw and connected two-point function of single-site observables at
    /// distinct sites. Means are computed from the same cached environments.
    pub fn connected_correlator(
        &self,
        obs_a: &OpMatrix,
        site_a: usize,
        obs_b: &OpMatrix,
        site_b: usize,
    ) -> Result<(Complex64, Complex64)> {
        if site_a == site_b {
            return Err(Error::Invalid(format!(
                "correlator needs distinct sites, got {site_a} twice"
            )));
        }
        let (first, ofirst, second, osecond) = if site_a < site_b {
            (site_a, obs_a, site_b, obs_b)
        } else {
            (site_b, obs_b, site_a, obs_a)
        };
        for (site, obs) in [(first, ofirst), (second, osecond)] {
            let span = self.span_for(obs.dim(), site)?;
            if span != 1 {
                return Err(Error::Shape(
                    "correlator observables must act on one site".into(),
                ));
            }
        }
        let raw = self.pair_raw(ofirst, first, osecond, second)?;
        let mean_a = self.local_expectation(obs_a, site_a)?;
        let mean_b = self.local_expectation(obs_b, site_b)?;
        Ok((raw, raw - mean_a * mean_b))
    }

    fn pair_raw(
        &self,
        obs_a: &OpMatrix,
        site_a: usize,
        obs_b: &OpMatrix,
        site_b: usize,
    ) -> Result<Complex64> {
        match &self.ring {
            None => {
                let mut env = self.dress_step(self.left[site_a].clone(), site_a, Some(obs_a))?;
                for k in site_a + 1..site_b {
                    env = self.dress_step(env, k, None)?;
                }
                env = self.dress_step(env, site_b, Some(obs_b))?;
                let t = env.contract(&self.right[site_b + 1], &[("k", "k"), ("b", "b")])?;
                Ok(t.data()[0] / self.norm2)
            }
            Some(ring) => {
                let ta = TransferOperator::dressed(self.mps.site(site_a), obs_a)?.mat;
                let tb = TransferOperator::dressed(self.mps.site(site_b), obs_b)?.mat;
                let mut mid = ta;
                for k in site_a + 1..site_b {
                    mid *= &TransferOperator::from_site(self.mps.site(k))?.mat;
                }
                mid *= &tb;
                let around = &ring.suffix[site_b + 1] * &ring.prefix[site_a];
                Ok((mid * around).diagonal().sum() / self.norm2)
            }
        }
    }

    /// One environment step, optionally dressed by a single-site observable.
    fn dress_step(&self, env: Tensor, k: usize, obs: Option<&OpMatrix>) -> Result<Tensor> {
        let a = self.mps.site(k);
        let bra = a.conj().renamed("vl", "bl")?.renamed("vr", "br")?;
        let t = env.contract(a, &[("k", "vl")])?;
        let t = match obs {
            None => t.contract(&bra, &[("b", "bl"), ("p", "p")])?,
            Some(o) => {
                let d = a.dim_of("p")?;
                if o.dim() != d {
                    return Err(Error::Shape(format!(
                        "observable dimension {} does not match site dimension {d}",
                        o.dim()
                    )));
                }
                let om = Tensor::new(&["po", "pi"], &[d, d], o.entries().to_vec())?;
                let t = t.contract(&om, &[("p", "pi")])?;
                t.contract(&bra, &[("b", "bl"), ("po", "p")])?
            }
        };
        t.renamed("vr", "k")?.renamed("br", "b")
    }
}

fn real_norm(v: Complex64) -> Result<f64> {
    if !v.re.is_finite() || v.re <= 1e-300 || v.im.abs() > 1e-8 * v.re.max(1e-30) {
        return Err(Error::Numerical(format!(
            "state norm is not a positive real: {v}"
        )));
    }
    Ok(v.re)
}

/// Normalized expectation of a dense observable on adjacent sites starting
/// at `first_site`.
pub fn local_expectation(
    mps: &MatrixProductState,
    obs: &OpMatrix,
    first_site: usize,
) -> Result<Complex64> {
    ExpectationEngine::new(mps)?.local_expectation(obs, first_site)
}

/// Raw and connected correlator `<O_A(i) O_B(j)>` of single-site
/// observables; see [`ExpectationEngine::connected_correlator`].
pub fn connected_correlator(
    mps: &MatrixProductState,
    obs_a: &OpMatrix,
    site_a: usize,
    obs_b: &OpMatrix,
    site_b: usize,
) -> Result<(Complex64, Complex64)> {
    ExpectationEngine::new(mps)?.connected_correlator(obs_a, site_a, obs_b, site_b)
}

/// Inner product `<a|b>`, unnormalized. States need equal length and
/// physical dimensions; boundaries may differ (an open chain is a ring with
/// unit wrap bond).
pub fn overlap(a: &MatrixProductState, b: &MatrixProductState) -> Result<Complex64> {
    if a.n_sites() != b.n_sites() {
        return Err(Error::Shape(format!(
            "overlap needs equal lengths, got {} and {}",
            a.n_sites(),
            b.n_sites()
        )));
    }
    if a.phys_dims() != b.phys_dims() {
        return Err(Error::Shape(
            "overlap needs matching physical dimensions".into(),
        ));
    }
    let n = a.n_sites();
    if a.boundary() == Boundary::Open && b.boundary() == Boundary::Open {
        let mut env = unit_env();
        for k in 0..n {
            let ket = b.site(k);
            let bra = a.site(k).conj().renamed("vl", "bl")?.renamed("vr", "br")?;
            let t = env.contract(ket, &[("k", "vl")])?;
            let t = t.contract(&bra, &[("b", "bl"), ("p", "p")])?;
            env = t.renamed("vr", "k")?.renamed("br", "b")?;
        }
        return Ok(env.data()[0]);
    }
    let mut prod: Option<Mat> = None;
    for k in 0..n {
        let ket = b.site(k);
        let bra = a.site(k).conj().renamed("vl", "bl")?.renamed("vr", "br")?;
        let t = ket.contract(&bra, &[("p", "p")])?;
        let (m, _) = t
            .permuted(&["vl", "bl", "vr", "br"])?
            .to_matrix(&["vl", "bl"])?;
        prod = Some(match prod {
            None => m,
            Some(p) => p * m,
        });
    }
    Ok(prod.expect("n >= 1").diagonal().sum())
}

/// One row of a correlator scan.
#[derive(Clone, Debug)]
pub struct CorrelatorRow {
    pub dist: usize,
    pub raw: Complex64,
    pub connected_abs: f64,
}

/// Connected correlator of `obs_a` at `anchor` against `obs_b` at every
/// distance `1..=max_dist`, sharing one environment cache.
pub fn correlator_series(
    mps: &MatrixProductState,
    obs_a: &OpMatrix,
    obs_b: &OpMatrix,
    anchor: usize,
    max_dist: usize,
) -> Result<Vec<CorrelatorRow>> {
    let engine = ExpectationEngine::new(mps)?;
    let n = mps.n_sites();
    if anchor + max_dist >= n {
        return Err(Error::Invalid(format!(
            "scan to distance {max_dist} from site {anchor} leaves the chain of {n} sites"
        )));
    }
    let mut rows = Vec::with_capacity(max_dist);
    for dist in 1..=max_dist {
        let (raw, connected) =
            engine.connected_correlator(obs_a, anchor, obs_b, anchor + dist)?;
        rows.push(CorrelatorRow {
            dist,
            raw,
            connected_abs: connected.norm(),
        });
    }
    Ok(rows)
}

/// Serializes scan rows as CSV with header `dist,raw_re,raw_im,connected_abs`.
pub fn correlator_csv(rows: &[CorrelatorRow]) -> String {
    let mut out = String::from("dist,raw_re,raw_im,connected_abs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.dist, r.raw.re, r.raw.im, r.connected_abs
        ));
    }
    out
}

/// Result of an exponential-decay fit `y = C exp(-dist / xi)`.
#[derive(Clone, Copy, Debug)]
pub struct DecayFit {
    pub amplitude: f64,
    pub xi: f64,
    pub r_squared: f64,
}

/// Least-squares fit of log-values against distance.
///
/// Samples with non-positive or non-finite values are dropped; at least 4
/// must survive. A non-decaying slope reports `xi` as infinite; constant
/// samples report fit quality near zero rather than failing.
pub fn fit_correlation_decay(samples: &[(f64, f64)]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(d, y)| d.is_finite() && y.is_finite() && *y > 0.0)
        .map(|(d, y)| (*d, y.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::Invalid(format!(
            "decay fit needs at least 4 positive samples, got {}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(d, _)| d).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(d, _)| d * d).sum();
    let sxy: f64 = pts.iter().map(|(d, y)| d * y).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::Invalid(
            "decay fit needs at least two distinct distances".into(),
        ));
    }
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    let mean = sy / m;
    let ss_tot: f64 = pts.iter().map(|(_, y)| (y - mean).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|(d, y)| (y - (intercept + slope * d)).powi(2))
        .sum();
    let r_squared = if ss_tot < 1e-30 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    };
    let xi = if slope < 0.0 {
        -1.0 / slope
    } else {
        f64::INFINITY
    };
    Ok(DecayFit {
        amplitude: intercept.exp(),
        xi,
        r_squared,
    })
}
