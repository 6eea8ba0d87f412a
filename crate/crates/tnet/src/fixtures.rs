//! Named reference states with known exact structure.
//!
//! These chains exercise the rest of the library: maximally correlated pairs
//! (`Ghz`), the stabilizer chain built from controlled-phase gates
//! (`Cluster`), the spin-1 valence-bond chain (`Aklt`), and unentangled
//! `Product` states. All fixtures come back with unit norm and no gauge
//! claimed.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mps::{Boundary, MatrixProductState};
use crate::tensor::Tensor;

/// Which reference state to build.
#[derive(Clone, Debug)]
pub enum FixtureKind {
    Ghz,
    Cluster,
    Aklt,
    /// One amplitude vector per site; bond extent stays 1.
    Product(Vec<Vec<Complex64>>),
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The translation-invariant spin-1 valence-bond site tensor, physical basis
/// ordered (m = +1, 0, -1). The induced bond transfer map has spectrum
/// {1, -1/3, -1/3, -1/3}.
pub fn aklt_site_tensor() -> Tensor {
    let q = (2.0f64 / 3.0).sqrt();
    let z = 1.0 / 3.0f64.sqrt();
    let mut t = Tensor::zeros(&["vl", "p", "vr"], &[2, 3, 2]).unwrap();
    t.set(&[0, 0, 1], c(q, 0.0)).unwrap(); // raising channel
    t.set(&[0, 1, 0], c(z, 0.0)).unwrap(); // diagonal channel
    t.set(&[1, 1, 1], c(-z, 0.0)).unwrap();
    t.set(&[1, 2, 0], c(-q, 0.0)).unwrap(); // lowering channel
    t
}

/// Build a named reference chain of `n` sites.
pub fn build_fixture(
    kind: &FixtureKind,
    n: usize,
    boundary: Boundary,
) -> Result<MatrixProductState> {
    match kind {
        FixtureKind::Ghz => ghz(n, boundary),
        FixtureKind::Cluster => cluster(n, boundary),
        FixtureKind::Aklt => aklt(n, boundary),
        FixtureKind::Product(amps) => product(amps, n, boundary),
    }
}

fn ghz(n: usize, boundary: Boundary) -> Result<MatrixProductState> {
    if n < 2 {
        return Err(Error::Invalid("ghz needs at least 2 sites".into()));
    }
    let s = 1.0 / 2f64.sqrt();
    match boundary {
        Boundary::Open => {
            let mut first = Tensor::zeros(&["vl", "p", "vr"], &[1, 2, 2])?;
            let mut bulk = Tensor::zeros(&["vl", "p", "vr"], &[2, 2, 2])?;
            let mut last = Tensor::zeros(&["vl", "p", "vr"], &[2, 2, 1])?;
            for j in 0..2 {
                first.set(&[0, j, j], c(s, 0.0))?;
                bulk.set(&[j, j, j], c(1.0, 0.0))?;
                last.set(&[j, j, 0], c(1.0, 0.0))?;
            }
            let mut tensors = vec![first];
            tensors.extend(std::iter::repeat_with(|| bulk.clone()).take(n - 2));
            tensors.push(last);
            MatrixProductState::from_site_tensors(tensors, Boundary::Open)
        }
        Boundary::Periodic => {
            // Bond-diagonal selectors; the closing trace leaves the two
            // aligned strings, so the norm before rescaling is sqrt(2).
            let scale = 2f64.powf(-1.0 / (2.0 * n as f64));
            let mut site = Tensor::zeros(&["vl", "p", "vr"], &[2, 2, 2])?;
            for j in 0..2 {
                site.set(&[j, j, j], c(scale, 0.0))?;
            }
            let tensors = vec![site; n];
            MatrixProductState::from_site_tensors(tensors, Boundary::Periodic)
        }
    }
}

fn cluster(n: usize, boundary: Boundary) -> Result<MatrixProductState> {
    if n < 3 {
        return Err(Error::Invalid("cluster needs at least 3 sites".into()));
    }
    if boundary == Boundary::Periodic {
        return Err(Error::Unsupported(
            "cluster fixture is built for open chains".into(),
        ));
    }
    // Amplitudes 2^{-n/2} prod_k (-1)^{j_k j_{k+1}}: each tensor forwards its
    // physical bit on the bond and applies the sign against the incoming bit.
    let s = 1.0 / 2f64.sqrt();
    let sign = |a: usize, j: usize| if a * j == 1 { -s } else { s };
    let mut first = Tensor::zeros(&["vl", "p", "vr"], &[1, 2, 2])?;
    let mut bulk = Tensor::zeros(&["vl", "p", "vr"], &[2, 2, 2])?;
    let mut last = Tensor::zeros(&["vl", "p", "vr"], &[2, 2, 1])?;
    for j in 0..2 {
        first.set(&[0, j, j], c(s, 0.0))?;
        for a in 0..2 {
            bulk.set(&[a, j, j], c(sign(a, j), 0.0))?;
            last.set(&[a, j, 0], c(sign(a, j), 0.0))?;
        }
    }
    let mut tensors = vec![first];
    tensors.extend(std::iter::repeat_with(|| bulk.clone()).take(n - 2));
    tensors.push(last);
    MatrixProductState::from_site_tensors(tensors, Boundary::Open)
}

fn aklt(n: usize, boundary: Boundary) -> Result<MatrixProductState> {
    if n < 3 {
        return Err(Error::Invalid("aklt needs at least 3 sites".into()));
    }
    let b = aklt_site_tensor();
    match boundary {
        Boundary::Periodic => {
            let mut state = MatrixProductState::from_site_tensors(
                vec![b; n],
                Boundary::Periodic,
            )?;
            let nrm = state.norm()?;
            let scale = c(nrm.powf(-1.0 / n as f64), 0.0);
            for t in &mut state.tensors {
                *t = t.scaled(scale);
            }
            Ok(state)
        }
        Boundary::Open => {
            // Cap the chain with fixed edge vectors: row 0 on the left,
            // column 1 on the right. Any caps stay inside the ground space of
            // the bond projectors; these make the state generic and nonzero.
            let mut first = Tensor::zeros(&["vl", "p", "vr"], &[1, 3, 2])?;
            let mut last = Tensor::zeros(&["vl", "p", "vr"], &[2, 3, 1])?;
            for j in 0..3 {
                for be in 0..2 {
                    first.set(&[0, j, be], b.get(&[0, j, be])?)?;
                }
                for al in 0..2 {
                    last.set(&[al, j, 0], b.get(&[al, j, 1])?)?;
                }
            }
            let mut tensors = vec![first];
            tensors.extend(std::iter::repeat_with(|| b.clone()).take(n - 2));
            tensors.push(last);
            let mut state = MatrixProductState::from_site_tensors(tensors, Boundary::Open)?;
            let nrm = state.norm()?;
            if nrm < 1e-300 {
                return Err(Error::Numerical("edge caps annihilated the state".into()));
            }
            state.tensors[0] = state.tensors[0].scaled(c(1.0 / nrm, 0.0));
            Ok(state)
        }
    }
}

fn product(
    amps: &[Vec<Complex64>],
    n: usize,
    boundary: Boundary,
) -> Result<MatrixProductState> {
    if amps.len() != n {
        return Err(Error::Invalid(format!(
            "product fixture got {} amplitude vectors for {n} sites",
            amps.len()
        )));
    }
    let mut tensors = Vec::with_capacity(n);
    for (k, amp) in amps.iter().enumerate() {
        if amp.is_empty() {
            return Err(Error::Invalid(format!("site {k} has no amplitudes")));
        }
        let nrm = amp.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm < 1e-300 {
            return Err(Error::Invalid(format!("site {k} amplitude vector is zero")));
        }
        let data: Vec<Complex64> = amp.iter().map(|z| z / nrm).collect();
        tensors.push(Tensor::new(&["vl", "p", "vr"], &[1, amp.len(), 1], data)?);
    }
    MatrixProductState::from_site_tensors(tensors, boundary)
}
