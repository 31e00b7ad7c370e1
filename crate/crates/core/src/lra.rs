//! Localization by rank-1 approximation of the normalized coefficient matrix.
//!
//! Three steps per block: rescale every order block of every column to the
//! norm a single far-field source would give it, take the dominant left
//! singular vector of the result as the pattern estimate, and match that
//! estimate against a dictionary of patterns.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::encoder::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::linalg::svd_left;
use crate::mdp::{mdp_norm, MdpDictionary};
use crate::sh::{coeff_count, order_block, Direction};

/// Relative threshold under which an order block counts as empty.
pub const ZERO_BLOCK_RTOL: f64 = 1e-12;

/// Normalized coefficients with the per-column source magnitude estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedMatrix {
    entries: DMatrix<Complex64>,
    magnitudes: Vec<f64>,
    kept_columns: Vec<usize>,
    zero_blocks: usize,
    order: usize,
    block_index: usize,
}

impl NormalizedMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Source column of each kept column.
    pub fn kept_columns(&self) -> &[usize] {
        &self.kept_columns
    }

    /// Number of empty order blocks left at zero inside nonzero columns.
    pub fn zero_blocks(&self) -> usize {
        self.zero_blocks
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn block_index(&self) -> usize {
        self.block_index
    }

    /// Wraps an already normalized matrix (used by tests and bindings).
    pub fn from_entries(entries: DMatrix<Complex64>, order: usize) -> Result<Self> {
        if entries.nrows() != coeff_count(order) {
            return Err(Error::config(format!("{} rows do not match order {order}", entries.nrows())));
        }
        let kept_columns = (0..entries.ncols()).collect();
        let magnitudes = vec![f64::NAN; entries.ncols()];
        Ok(Self { entries, magnitudes, kept_columns, zero_blocks: 0, order, block_index: 0 })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdpEstimate {
    pub order: usize,
    pub alpha_hat: Vec<Complex64>,
    pub sigma1: f64,
    /// `sigma_1^2 / sum sigma_i^2`
    pub energy_ratio: f64,
    pub block_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoaEstimate {
    pub direction: Direction,
    pub dict_index: usize,
    pub residual: f64,
    pub block_index: usize,
    pub confidence: f64,
}

fn block_norm(col: &[Complex64], n: usize) -> f64 {
    col[order_block(n)].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Mean over orders of `||c_n|| / sqrt(4 pi (2n+1))`.
pub fn estimate_magnitude(column: &[Complex64], order: usize) -> Result<f64> {
    if column.len() != coeff_count(order) {
        return Err(Error::config(format!("column of length {} does not match order {order}", column.len())));
    }
    let sum: f64 = (0..=order)
        .map(|n| block_norm(column, n) / (4.0 * PI * (2 * n + 1) as f64).sqrt())
        .sum();
    Ok(sum / (order + 1) as f64)
}

pub fn normalize(a: &CoefficientMatrix) -> Result<NormalizedMatrix> {
    let order = a.order();
    let c = coeff_count(order);
    let src = a.entries();
    if src.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric(format!("block {}: non-finite coefficients", a.block_index())));
    }
    let mut kept_columns = Vec::new();
    let mut magnitudes = Vec::new();
    let mut data: Vec<Complex64> = Vec::with_capacity(src.len());
    let mut zero_blocks = 0;
    let mut col = vec![Complex64::new(0.0, 0.0); c];
    for j in 0..src.ncols() {
        col.copy_from_slice(src.column(j).as_slice());
        let total = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(total > 0.0) {
            continue;
        }
        let magnitude = estimate_magnitude(&col, order)?;
        for n in 0..=order {
            let norm = block_norm(&col, n);
            let block = &mut col[order_block(n)];
            if norm < ZERO_BLOCK_RTOL * total {
                zero_blocks += 1;
                block.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            } else {
                let scale = magnitude * (4.0 * PI * (2 * n + 1) as f64).sqrt() / norm;
                block.iter_mut().for_each(|z| *z *= scale);
            }
        }
        data.extend_from_slice(&col);
        kept_columns.push(j);
        magnitudes.push(magnitude);
    }
    if zero_blocks > 0 {
        log::debug!("block {}: {zero_blocks} empty order blocks left at zero", a.block_index());
    }
    let entries = DMatrix::from_vec(c, kept_columns.len(), data);
    Ok(NormalizedMatrix { entries, magnitudes, kept_columns, zero_blocks, order, block_index: a.block_index() })
}

/// Dominant left singular vector, scaled to the pattern norm.
pub fn rank1_extract(a: &NormalizedMatrix) -> Result<MdpEstimate> {
    let m = a.entries();
    if m.ncols() == 0 {
        return Err(Error::Numeric(format!("block {}: no nonzero columns to decompose", a.block_index())));
    }
    let svd = svd_left(m).map_err(|e| Error::Numeric(format!("block {}: {e}", a.block_index())))?;
    let sigma1 = svd.singular_values[0];
    let energy: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let energy_ratio = if energy > 0.0 { (sigma1 * sigma1 / energy).min(1.0) } else { 0.0 };
    let scale = mdp_norm(a.order());
    let alpha_hat = svd.u.column(0).iter().map(|z| z * scale).collect();
    Ok(MdpEstimate { order: a.order(), alpha_hat, sigma1, energy_ratio, block_index: a.block_index() })
}

/// Rotates the estimate so its order-0 coefficient is real and positive.
pub fn align_phase(alpha: &[Complex64]) -> Vec<Complex64> {
    let a0 = alpha[0];
    let rot = if a0.norm() > 0.0 { a0.conj() / a0.norm() } else { Complex64::new(1.0, 0.0) };
    alpha.iter().map(|z| z * rot).collect()
}

pub fn match_doa(est: &MdpEstimate, dict: &MdpDictionary) -> Result<DoaEstimate> {
    if dict.is_empty() {
        return Err(Error::config("empty dictionary"));
    }
    if dict.order() != est.order || est.alpha_hat.len() != dict.coeff_count() {
        return Err(Error::config(format!(
            "dictionary order {} does not match estimate order {}",
            dict.order(),
            est.order
        )));
    }
    let aligned = align_phase(&est.alpha_hat);
    let mut best = (0, f64::INFINITY);
    for (i, (_, pattern)) in dict.iter().enumerate() {
        let d: f64 = aligned.iter().zip(pattern).map(|(a, b)| (a - b).norm_sqr()).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(DoaEstimate {
        direction: dict.direction(best.0),
        dict_index: best.0,
        residual: best.1,
        block_index: est.block_index,
        confidence: est.energy_ratio,
    })
}

pub fn localize_block(a: &CoefficientMatrix, dict: &MdpDictionary) -> Result<DoaEstimate> {
    let normalized = normalize(a)?;
    let est = rank1_extract(&normalized)?;
    match_doa(&est, dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_dictionary, mdp};
    use approx::assert_abs_diff_eq;

    fn column_of(dir: Direction, order: usize, s: Complex64) -> Vec<Complex64> {
        mdp(dir, order).coeffs().iter().map(|z| z * s).collect()
    }

    #[test]
    fn magnitude_of_single_source_column() {
        let dir = Direction::from_degrees(38.0, 250.0).unwrap();
        let s = Complex64::from_polar(0.37, 1.1);
        let col = column_of(dir, 3, s);
        assert_abs_diff_eq!(estimate_magnitude(&col, 3).unwrap(), 0.37, epsilon = 1e-9);
        let zero = vec![Complex64::new(0.0, 0.0); 16];
        assert_eq!(estimate_magnitude(&zero, 3).unwrap(), 0.0);
        let scaled: Vec<_> = col.iter().map(|z| z * 2.5).collect();
        assert_abs_diff_eq!(estimate_magnitude(&scaled, 3).unwrap(), 2.5 * 0.37, epsilon = 1e-12);
    }

    #[test]
    fn normalization_of_single_source_and_fixed_point() {
        let dir = Direction::from_degrees(100.0, 20.0).unwrap();
        let s = Complex64::from_polar(2.0, -0.4);
        let col = column_of(dir, 3, s);
        let a = CoefficientMatrix::new(DMatrix::from_column_slice(16, 1, &col), 3).unwrap();
        let n = normalize(&a).unwrap();
        let expected = column_of(dir, 3, Complex64::from_polar(2.0, -0.4));
        for (x, y) in n.entries().iter().zip(&expected) {
            assert!((x - y).norm() < 1e-9);
        }
        let fixed = CoefficientMatrix::new(DMatrix::from_column_slice(16, 1, mdp(dir, 3).coeffs()), 3).unwrap();
        let n = normalize(&fixed).unwrap();
        for (x, y) in n.entries().iter().zip(mdp(dir, 3).coeffs()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn normalization_hits_target_block_norms() {
        let dir = Direction::from_degrees(70.0, 300.0).unwrap();
        let mut col = column_of(dir, 3, Complex64::new(1.3, 0.2));
        for (i, z) in col.iter_mut().enumerate() {
            *z += Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()) * 0.4;
        }
        let a = CoefficientMatrix::new(DMatrix::from_column_slice(16, 1, &col), 3).unwrap();
        let n = normalize(&a).unwrap();
        let mag = n.magnitudes()[0];
        let out: Vec<_> = n.entries().column(0).iter().copied().collect();
        for k in 0..=3 {
            assert_abs_diff_eq!(block_norm(&out, k), mag * (4.0 * PI * (2 * k + 1) as f64).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_columns_dropped_and_zero_blocks_kept() {
        let dir = Direction::from_degrees(10.0, 10.0).unwrap();
        let mut m = DMatrix::zeros(16, 3);
        m.set_column(1, &nalgebra::DVector::from_column_slice(mdp(dir, 3).coeffs()));
        m[(0, 2)] = Complex64::new(1.0, 0.0);
        let a = CoefficientMatrix::new(m, 3).unwrap();
        let n = normalize(&a).unwrap();
        assert_eq!(n.kept_columns(), &[1, 2]);
        assert_eq!(n.zero_blocks(), 3);
        assert!(n.entries().column(1).iter().skip(1).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rank1_of_outer_product() {
        let dir = Direction::from_degrees(55.0, 123.0).unwrap();
        let alpha = mdp(dir, 3);
        let s: Vec<Complex64> = (0..7).map(|j| Complex64::from_polar(1.0 + j as f64, j as f64)).collect();
        let m = DMatrix::from_fn(16, 7, |r, c| alpha.coeffs()[r] * s[c]);
        let est = rank1_extract(&NormalizedMatrix::from_entries(m, 3).unwrap()).unwrap();
        let s_norm = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert_abs_diff_eq!(est.sigma1, alpha.norm() * s_norm, epsilon = 1e-9);
        assert_abs_diff_eq!(est.energy_ratio, 1.0, epsilon = 1e-12);
        // alpha_hat = e^{i phi} alpha
        let aligned = align_phase(&est.alpha_hat);
        for (a, b) in aligned.iter().zip(alpha.coeffs()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn rank1_single_column() {
        let v: Vec<Complex64> = (0..16).map(|i| Complex64::new(i as f64 - 4.0, 1.0)).collect();
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut m = DMatrix::zeros(16, 4);
        m.set_column(2, &nalgebra::DVector::from_column_slice(&v));
        let est = rank1_extract(&NormalizedMatrix::from_entries(m, 3).unwrap()).unwrap();
        let u: Vec<_> = est.alpha_hat.iter().map(|z| z / mdp_norm(3)).collect();
        let phase = u[0] / (v[0] / vn);
        assert_abs_diff_eq!(phase.norm(), 1.0, epsilon = 1e-12);
        for (a, b) in u.iter().zip(&v) {
            assert!((a - phase * b / vn).norm() < 1e-12);
        }
    }

    #[test]
    fn rank1_empty_is_error() {
        let m = DMatrix::<Complex64>::zeros(16, 0);
        assert!(matches!(rank1_extract(&NormalizedMatrix::from_entries(m, 3).unwrap()), Err(Error::Numeric(_))));
    }

    #[test]
    fn matching_is_phase_invariant() {
        let dict = build_dictionary(30.0, 30.0, 3).unwrap();
        let g = dict.direction(17);
        let est = |phase: f64| MdpEstimate {
            order: 3,
            alpha_hat: mdp(g, 3).coeffs().iter().map(|z| z * Complex64::from_polar(1.0, phase)).collect(),
            sigma1: 1.0,
            energy_ratio: 1.0,
            block_index: 0,
        };
        let a = match_doa(&est(0.0), &dict).unwrap();
        assert_eq!(a.dict_index, 17);
        assert!(a.residual < 1e-20);
        let b = match_doa(&est(2.1), &dict).unwrap();
        assert_eq!(b.dict_index, 17);
        assert!(b.residual < 1e-9);
    }

    #[test]
    fn matching_rejects_mismatched_dictionary() {
        let dict = build_dictionary(30.0, 30.0, 2).unwrap();
        let est = MdpEstimate {
            order: 3,
            alpha_hat: vec![Complex64::new(1.0, 0.0); 16],
            sigma1: 1.0,
            energy_ratio: 1.0,
            block_index: 0,
        };
        assert!(matches!(match_doa(&est, &dict), Err(Error::Config(_))));
    }
}
