//! Named spin-chain Hamiltonians and their local interaction terms.
//!
//! A [`ModelSpec`] is a JSON-serializable description of a Hamiltonian on a
//! chain: which model, how many sites, which boundary, and coupling values.
//! [`local_terms`] expands it into dense one- and two-site operator blocks.
//! The MPO compiler, the Trotter gate builder, and the CLI all consume the
//! same expansion; the exact-diagonalization oracle shares only the spec
//! itself and rebuilds every operator from its own constants.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mps::Boundary;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Dense complex square matrix in row-major order.
///
/// This is the operator currency of the crate: model terms, observables, and
/// gates are all passed as `OpMatrix` values. For a two-site operator the
/// basis index is `j * d + k` with the left site most significant, matching
/// the ordering of dense state vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOpMatrix", into = "RawOpMatrix")]
pub struct OpMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

/// Serde shadow of [`OpMatrix`]; conversion re-runs the shape checks so a
/// hand-edited JSON file cannot smuggle in a ragged matrix.
#[derive(Serialize, Deserialize)]
struct RawOpMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl TryFrom<RawOpMatrix> for OpMatrix {
    type Error = Error;

    fn try_from(raw: RawOpMatrix) -> Result<Self> {
        OpMatrix::new(raw.dim, raw.entries)
    }
}

impl From<OpMatrix> for RawOpMatrix {
    fn from(m: OpMatrix) -> Self {
        RawOpMatrix {
            dim: m.dim,
            entries: m.entries,
        }
    }
}

impl OpMatrix {
    /// Wraps row-major entries as a `dim x dim` matrix.
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Shape(format!(
                "operator of dimension {} needs {} entries, got {}",
                dim,
                dim * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid("operator entries must be finite".into()));
        }
        Ok(OpMatrix { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        OpMatrix {
            dim,
            entries: vec![Complex64::ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = Complex64::ONE;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row * self.dim + col] = value;
    }

    /// Kronecker product; `self` indexes the more significant factor.
    pub fn kron(&self, other: &OpMatrix) -> OpMatrix {
        let (da, db) = (self.dim, other.dim);
        let dim = da * db;
        let mut out = OpMatrix::zeros(dim);
        for ra in 0..da {
            for ca in 0..da {
                let f = self.get(ra, ca);
                if f == Complex64::ZERO {
                    continue;
                }
                for rb in 0..db {
                    for cb in 0..db {
                        out.entries[(ra * db + rb) * dim + (ca * db + cb)] = f * other.get(rb, cb);
                    }
                }
            }
        }
        out
    }

    pub fn scaled<S: Into<Complex64>>(&self, s: S) -> OpMatrix {
        let s = s.into();
        OpMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    pub fn plus(&self, other: &OpMatrix) -> Result<OpMatrix> {
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "cannot add operators of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        Ok(OpMatrix {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Matrix product `self * other`.
    pub fn times(&self, other: &OpMatrix) -> Result<OpMatrix> {
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "cannot multiply operators of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let d = self.dim;
        let mut out = OpMatrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a == Complex64::ZERO {
                    continue;
                }
                for j in 0..d {
                    out.entries[i * d + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn adjoint(&self) -> OpMatrix {
        let d = self.dim;
        let mut out = OpMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.entries[j * d + i] = self.get(i, j).conj();
            }
        }
        out
    }

    /// Largest entry-wise deviation from the adjoint; zero for Hermitian input.
    pub fn hermiticity_error(&self) -> f64 {
        let adj = self.adjoint();
        self.entries
            .iter()
            .zip(&adj.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &OpMatrix) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "cannot compare operators of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub(crate) fn to_mat(&self) -> Mat {
        Mat::from_fn(self.dim, self.dim, |r, c| self.get(r, c))
    }

    pub(crate) fn from_mat(m: &Mat) -> Self {
        let dim = m.nrows();
        let mut out = OpMatrix::zeros(dim);
        for r in 0..dim {
            for cc in 0..dim {
                out.entries[r * dim + cc] = m[(r, cc)];
            }
        }
        out
    }
}

/// Pauli X on a single spin-1/2.
pub fn pauli_x() -> OpMatrix {
    OpMatrix {
        dim: 2,
        entries: vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
    }
}

/// Pauli Y on a single spin-1/2.
pub fn pauli_y() -> OpMatrix {
    OpMatrix {
        dim: 2,
        entries: vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)],
    }
}

/// Pauli Z on a single spin-1/2.
pub fn pauli_z() -> OpMatrix {
    OpMatrix {
        dim: 2,
        entries: vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
    }
}

/// Spin-1 S_x in the basis (m = +1, 0, -1).
pub fn spin1_x() -> OpMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    OpMatrix {
        dim: 3,
        entries: vec![
            c(0.0, 0.0),
            c(s, 0.0),
            c(0.0, 0.0),
            c(s, 0.0),
            c(0.0, 0.0),
            c(s, 0.0),
            c(0.0, 0.0),
            c(s, 0.0),
            c(0.0, 0.0),
        ],
    }
}

/// Spin-1 S_y in the basis (m = +1, 0, -1).
pub fn spin1_y() -> OpMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    OpMatrix {
        dim: 3,
        entries: vec![
            c(0.0, 0.0),
            c(0.0, -s),
            c(0.0, 0.0),
            c(0.0, s),
            c(0.0, 0.0),
            c(0.0, -s),
            c(0.0, 0.0),
            c(0.0, s),
            c(0.0, 0.0),
        ],
    }
}

/// Spin-1 S_z in the basis (m = +1, 0, -1).
pub fn spin1_z() -> OpMatrix {
    let mut m = OpMatrix::zeros(3);
    m.set(0, 0, c(1.0, 0.0));
    m.set(2, 2, c(-1.0, 0.0));
    m
}

/// Two-site dot product `sum_a kron(ops[a], ops[a])`.
fn spin_dot(ops: &[OpMatrix; 3]) -> OpMatrix {
    let d = ops[0].dim();
    let mut out = OpMatrix::zeros(d * d);
    for op in ops {
        out = out.plus(&op.kron(op)).expect("dims match by construction");
    }
    out
}

/// Model family selector.
///
/// Unit variants serialize as plain strings (`"xy"`, `"heisenberg_spin1"`,
/// `"aklt"`, `"majumdar_ghosh"`); `Custom` carries explicit local terms and
/// serializes as `{"custom": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Anisotropic XY chain in a transverse field; couplings `gamma`, `lambda`.
    Xy,
    /// Spin-1 Heisenberg chain; coupling `J`.
    HeisenbergSpin1,
    /// Spin-1 AKLT chain (no free couplings).
    Aklt,
    /// Majumdar-Ghosh chain: Pauli-vector exchange with half-strength
    /// next-nearest-neighbor term (no free couplings).
    MajumdarGhosh,
    /// Explicit user-provided local terms.
    Custom(LocalTerms),
}

/// Coupling constants; models read only the entries they define.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Couplings {
    pub gamma: f64,
    pub lambda: f64,
    #[serde(rename = "J")]
    pub j: f64,
}

impl Default for Couplings {
    fn default() -> Self {
        Couplings {
            gamma: 0.0,
            lambda: 0.0,
            j: 1.0,
        }
    }
}

/// Complete description of a Hamiltonian instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: usize,
    pub boundary: Boundary,
    #[serde(default)]
    pub couplings: Couplings,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, n: usize, boundary: Boundary) -> Self {
        ModelSpec {
            kind,
            n,
            boundary,
            couplings: Couplings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let needs_nnn = matches!(self.kind, ModelKind::MajumdarGhosh)
            || matches!(&self.kind, ModelKind::Custom(t) if t.nnn.is_some());
        // A single open site is allowed: bond terms then simply have no
        // placement and only site terms act. Rings need two sites before a
        // wrap bond makes sense, range-2 terms need three.
        let min_n = if needs_nnn {
            3
        } else if self.boundary == Boundary::Periodic {
            2
        } else {
            1
        };
        if self.n < min_n {
            return Err(Error::Model(format!(
                "model needs at least {} sites, got {}",
                min_n, self.n
            )));
        }
        let cpl = &self.couplings;
        if !(cpl.gamma.is_finite() && cpl.lambda.is_finite() && cpl.j.is_finite()) {
            return Err(Error::Model("couplings must be finite".into()));
        }
        if let ModelKind::Custom(t) = &self.kind {
            t.validate()?;
        }
        Ok(())
    }
}

/// Translation-invariant local terms of a chain Hamiltonian
/// `H = sum_j site_j + sum_j bond_(j,j+1) + sum_j nnn_(j,j+2)`.
///
/// `site` has dimension `d`, `bond` and `nnn` dimension `d^2` with the left
/// site as the more significant factor. On an open chain the sums run over
/// every placement that fits; on a periodic chain they wrap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTerms {
    pub d: usize,
    #[serde(default)]
    pub site: Option<OpMatrix>,
    #[serde(default)]
    pub bond: Option<OpMatrix>,
    #[serde(default)]
    pub nnn: Option<OpMatrix>,
}

impl LocalTerms {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Model("physical dimension must be positive".into()));
        }
        if self.site.is_none() && self.bond.is_none() && self.nnn.is_none() {
            return Err(Error::Model("local terms are all absent".into()));
        }
        if let Some(s) = &self.site {
            if s.dim() != self.d {
                return Err(Error::Shape(format!(
                    "site term has dimension {}, expected {}",
                    s.dim(),
                    self.d
                )));
            }
        }
        for (name, term) in [("bond", &self.bond), ("nnn", &self.nnn)] {
            if let Some(t) = term {
                if t.dim() != self.d * self.d {
                    return Err(Error::Shape(format!(
                        "{} term has dimension {}, expected {}",
                        name,
                        t.dim(),
                        self.d * self.d
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Expands a model description into its local operator blocks.
pub fn local_terms(spec: &ModelSpec) -> Result<LocalTerms> {
    spec.validate()?;
    match &spec.kind {
        ModelKind::Xy => {
            let g = spec.couplings.gamma;
            let l = spec.couplings.lambda;
            let x = pauli_x();
            let y = pauli_y();
            let bond = x
                .kron(&x)
                .scaled(-(1.0 + g) / 8.0)
                .plus(&y.kron(&y).scaled(-(1.0 - g) / 8.0))?;
            let site = if l != 0.0 {
                Some(pauli_z().scaled(-l / 2.0))
            } else {
                None
            };
            Ok(LocalTerms {
                d: 2,
                site,
                bond: Some(bond),
                nnn: None,
            })
        }
        ModelKind::HeisenbergSpin1 => {
            let bond = spin_dot(&[spin1_x(), spin1_y(), spin1_z()]).scaled(spec.couplings.j);
            Ok(LocalTerms {
                d: 3,
                site: None,
                bond: Some(bond),
                nnn: None,
            })
        }
        ModelKind::Aklt => {
            // h = P/2 + P^2/6 + 1/3 with P the spin-1 dot product; on total
            // spin sectors S = 0, 1, 2 the dot product takes values -2, -1, 1,
            // so h evaluates to 0, 0, 1: the projector onto combined spin 2.
            let p = spin_dot(&[spin1_x(), spin1_y(), spin1_z()]);
            let p2 = p.times(&p)?;
            let bond = p
                .scaled(0.5)
                .plus(&p2.scaled(1.0 / 6.0))?
                .plus(&OpMatrix::identity(9).scaled(1.0 / 3.0))?;
            Ok(LocalTerms {
                d: 3,
                site: None,
                bond: Some(bond),
                nnn: None,
            })
        }
        ModelKind::MajumdarGhosh => {
            // Pauli vectors, not spin-1/2 vectors: the nearest-neighbor
            // exchange is 2 sigma.sigma and the next-nearest half of that.
            let dot = spin_dot(&[pauli_x(), pauli_y(), pauli_z()]);
            Ok(LocalTerms {
                d: 2,
                site: None,
                bond: Some(dot.scaled(2.0)),
                nnn: Some(dot),
            })
        }
        ModelKind::Custom(t) => Ok(t.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn pauli_algebra_holds() {
        let (x, y, z) = (pauli_x(), pauli_y(), pauli_z());
        let i2 = OpMatrix::identity(2);
        assert_eq!(x.times(&x).unwrap(), i2);
        assert_eq!(y.times(&y).unwrap(), i2);
        assert_eq!(z.times(&z).unwrap(), i2);
        // XY = iZ
        let xy = x.times(&y).unwrap();
        assert_eq!(xy, z.scaled(c(0.0, 1.0)));
        for op in [&x, &y, &z] {
            assert_eq!(op.hermiticity_error(), 0.0);
        }
    }

    #[test]
    fn spin1_algebra_holds() {
        let (sx, sy, sz) = (spin1_x(), spin1_y(), spin1_z());
        // [Sx, Sy] = i Sz and cyclic.
        let pairs = [
            (&sx, &sy, &sz),
            (&sy, &sz, &sx),
            (&sz, &sx, &sy),
        ];
        for (a, b, cc) in pairs {
            let comm = a
                .times(b)
                .unwrap()
                .plus(&b.times(a).unwrap().scaled(-1.0))
                .unwrap();
            let diff = comm.max_abs_diff(&cc.scaled(c(0.0, 1.0))).unwrap();
            assert!(diff < 1e-15, "commutator deviates by {diff}");
        }
        // Casimir S^2 = s(s+1) = 2.
        let casimir = sx
            .times(&sx)
            .unwrap()
            .plus(&sy.times(&sy).unwrap())
            .unwrap()
            .plus(&sz.times(&sz).unwrap())
            .unwrap();
        let diff = casimir
            .max_abs_diff(&OpMatrix::identity(3).scaled(2.0))
            .unwrap();
        assert!(diff < 1e-15);
    }

    #[test]
    fn xy_bond_term_at_gamma_one_is_quarter_xx() {
        let spec = ModelSpec {
            kind: ModelKind::Xy,
            n: 2,
            boundary: Boundary::Open,
            couplings: Couplings {
                gamma: 1.0,
                lambda: 0.0,
                j: 1.0,
            },
        };
        let terms = local_terms(&spec).unwrap();
        assert!(terms.site.is_none());
        assert!(terms.nnn.is_none());
        let want = pauli_x().kron(&pauli_x()).scaled(-0.25);
        assert_eq!(terms.bond.unwrap(), want);
    }

    #[test]
    fn xy_site_term_tracks_field() {
        let spec = ModelSpec {
            kind: ModelKind::Xy,
            n: 4,
            boundary: Boundary::Open,
            couplings: Couplings {
                gamma: 0.3,
                lambda: 0.75,
                j: 1.0,
            },
        };
        let terms = local_terms(&spec).unwrap();
        assert_eq!(terms.site.unwrap(), pauli_z().scaled(-0.375));
        let bond = terms.bond.unwrap();
        assert!(bond.hermiticity_error() < 1e-15);
        // gamma = 0 keeps XX and YY weights equal.
        let mut iso = spec.clone();
        iso.couplings.gamma = 0.0;
        let bond0 = local_terms(&iso).unwrap().bond.unwrap();
        let want = pauli_x()
            .kron(&pauli_x())
            .plus(&pauli_y().kron(&pauli_y()))
            .unwrap()
            .scaled(-0.125);
        assert!(bond0.max_abs_diff(&want).unwrap() < 1e-16);
    }

    #[test]
    fn heisenberg_bond_scales_linearly_in_j() {
        let mut spec = ModelSpec::new(ModelKind::HeisenbergSpin1, 4, Boundary::Open);
        let unit = local_terms(&spec).unwrap().bond.unwrap();
        spec.couplings.j = -2.5;
        let scaled = local_terms(&spec).unwrap().bond.unwrap();
        assert!(scaled.max_abs_diff(&unit.scaled(-2.5)).unwrap() < 1e-15);
        assert!(unit.hermiticity_error() < 1e-15);
    }

    #[test]
    fn aklt_bond_is_the_spin_two_projector() {
        let spec = ModelSpec::new(ModelKind::Aklt, 2, Boundary::Open);
        let h = local_terms(&spec).unwrap().bond.unwrap();
        assert!(h.hermiticity_error() < 1e-15);
        // Idempotent within roundoff.
        let hh = h.times(&h).unwrap();
        assert!(hh.max_abs_diff(&h).unwrap() < 1e-14);
        // Rank equals the dimension of the spin-2 multiplet.
        let trace: Complex64 = (0..9).map(|i| h.get(i, i)).sum();
        assert!((trace - re(5.0)).norm() < 1e-13);
    }

    #[test]
    fn majumdar_ghosh_uses_pauli_vectors_with_two_to_one_weights() {
        let spec = ModelSpec::new(ModelKind::MajumdarGhosh, 6, Boundary::Periodic);
        let terms = local_terms(&spec).unwrap();
        let dot = pauli_x()
            .kron(&pauli_x())
            .plus(&pauli_y().kron(&pauli_y()))
            .unwrap()
            .plus(&pauli_z().kron(&pauli_z()))
            .unwrap();
        let bond = terms.bond.unwrap();
        let nnn = terms.nnn.unwrap();
        assert!(bond.max_abs_diff(&dot.scaled(2.0)).unwrap() < 1e-15);
        assert!(nnn.max_abs_diff(&dot).unwrap() < 1e-15);
    }

    #[test]
    fn spec_json_round_trips_and_defaults_apply() {
        let spec = ModelSpec {
            kind: ModelKind::Xy,
            n: 10,
            boundary: Boundary::Open,
            couplings: Couplings {
                gamma: 0.5,
                lambda: 0.75,
                j: 1.0,
            },
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kind\":\"xy\""));
        assert!(text.contains("\"boundary\":\"open\""));
        assert!(text.contains("\"J\":1.0"));
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);

        let literal = r#"{"kind":"heisenberg_spin1","n":8,"boundary":"periodic"}"#;
        let parsed: ModelSpec = serde_json::from_str(literal).unwrap();
        assert_eq!(parsed.kind, ModelKind::HeisenbergSpin1);
        assert_eq!(parsed.couplings, Couplings::default());
        assert_eq!(parsed.couplings.j, 1.0);

        let partial = r#"{"kind":"xy","n":4,"boundary":"open","couplings":{"gamma":0.25}}"#;
        let parsed: ModelSpec = serde_json::from_str(partial).unwrap();
        assert_eq!(parsed.couplings.gamma, 0.25);
        assert_eq!(parsed.couplings.j, 1.0);
    }

    #[test]
    fn custom_terms_round_trip_through_json() {
        let terms = LocalTerms {
            d: 2,
            site: Some(pauli_z().scaled(0.5)),
            bond: Some(pauli_x().kron(&pauli_x())),
            nnn: None,
        };
        let spec = ModelSpec::new(ModelKind::Custom(terms), 5, Boundary::Open);
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        // Too few sites: rings need two, bond terms simply vanish on a
        // single open site.
        assert!(local_terms(&ModelSpec::new(ModelKind::Xy, 0, Boundary::Open)).is_err());
        assert!(local_terms(&ModelSpec::new(ModelKind::Xy, 1, Boundary::Periodic)).is_err());
        assert!(local_terms(&ModelSpec::new(ModelKind::Xy, 1, Boundary::Open)).is_ok());
        // Majumdar-Ghosh needs room for the next-nearest term.
        let spec = ModelSpec::new(ModelKind::MajumdarGhosh, 2, Boundary::Open);
        assert!(local_terms(&spec).is_err());
        assert!(local_terms(&ModelSpec::new(
            ModelKind::MajumdarGhosh,
            3,
            Boundary::Open
        ))
        .is_ok());
        // Non-finite coupling.
        let mut spec = ModelSpec::new(ModelKind::Xy, 4, Boundary::Open);
        spec.couplings.lambda = f64::NAN;
        assert!(local_terms(&spec).is_err());
        // Custom terms with mismatched dimensions.
        let bad = LocalTerms {
            d: 2,
            site: None,
            bond: Some(OpMatrix::identity(3)),
            nnn: None,
        };
        assert!(local_terms(&ModelSpec::new(
            ModelKind::Custom(bad),
            4,
            Boundary::Open
        ))
        .is_err());
        // Serialized operator with a ragged entry list.
        let ragged = r#"{"dim":2,"entries":[{"re":1.0,"im":0.0}]}"#;
        assert!(serde_json::from_str::<OpMatrix>(ragged).is_err());
    }
}
