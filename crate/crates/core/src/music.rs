//! Conventional MUSIC in the spherical-harmonics domain, used as the
//! comparison baseline ("SHD-MUSIC (conventional)" in reports).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::encoder::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::linalg::hermitian_eigen;
use crate::lra::DoaEstimate;
use crate::mdp::MdpDictionary;

/// Diagonal loading added to the covariance, relative to `trace / C`.
pub const DIAGONAL_LOADING: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Pseudospectrum {
    pub values: Vec<f64>,
    pub block_index: usize,
    /// Largest eigenvalue over the trace of the covariance.
    pub dominance: f64,
}

impl Pseudospectrum {
    /// Index of the largest value; ties go to the lowest index.
    pub fn peak(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

pub fn covariance(a: &CoefficientMatrix) -> DMatrix<Complex64> {
    let m = a.entries();
    let f = m.ncols().max(1) as f64;
    let mut r = m * m.adjoint() / Complex64::new(f, 0.0);
    let c = r.nrows();
    let trace: f64 = (0..c).map(|i| r[(i, i)].re).sum();
    let load = DIAGONAL_LOADING * trace / c as f64;
    for i in 0..c {
        r[(i, i)] += Complex64::new(load, 0.0);
    }
    r
}

pub fn pseudospectrum(a: &CoefficientMatrix, dict: &MdpDictionary, n_sources: usize) -> Result<Pseudospectrum> {
    let c = dict.coeff_count();
    if dict.is_empty() {
        return Err(Error::config("empty dictionary"));
    }
    if dict.order() != a.order() {
        return Err(Error::config(format!(
            "dictionary order {} does not match coefficient order {}",
            dict.order(),
            a.order()
        )));
    }
    if n_sources == 0 || n_sources >= c {
        return Err(Error::config(format!("source count {n_sources} must be in 1..{c}")));
    }
    let m = a.entries();
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric(format!("block {}: non-finite coefficients", a.block_index())));
    }
    if m.ncols() < c {
        log::warn!(
            "block {}: {} columns for {c} coefficients, covariance is rank deficient",
            a.block_index(),
            m.ncols()
        );
    }
    let r = covariance(a);
    let trace: f64 = (0..c).map(|i| r[(i, i)].re).sum();
    if !(trace > 0.0) {
        return Err(Error::Numeric(format!("block {}: covariance has zero trace", a.block_index())));
    }
    let eig = hermitian_eigen(&r).map_err(|e| Error::Numeric(format!("block {}: {e}", a.block_index())))?;
    let noise = eig.eigenvectors.columns(0, c - n_sources).adjoint();
    let mut values = Vec::with_capacity(dict.len());
    let mut proj = vec![Complex64::new(0.0, 0.0); noise.nrows()];
    for (_, pattern) in dict.iter() {
        for (i, p) in proj.iter_mut().enumerate() {
            *p = noise.row(i).iter().zip(pattern).map(|(e, a)| e * a).sum();
        }
        let d: f64 = proj.iter().map(|z| z.norm_sqr()).sum();
        values.push(if d > 0.0 { 1.0 / d } else { f64::MAX });
    }
    let dominance = eig.eigenvalues[c - 1] / trace;
    Ok(Pseudospectrum { values, block_index: a.block_index(), dominance })
}

pub fn shd_music(a: &CoefficientMatrix, dict: &MdpDictionary, n_sources: usize) -> Result<DoaEstimate> {
    let p = pseudospectrum(a, dict, n_sources)?;
    let i = p.peak();
    Ok(DoaEstimate {
        direction: dict.direction(i),
        dict_index: i,
        residual: 1.0 / p.values[i],
        block_index: p.block_index,
        confidence: p.dominance,
    })
}
