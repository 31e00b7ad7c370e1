//! Dense complex decompositions used by the localizers, with per-thread
//! call counters.

use std::cell::Cell;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::svd::{self, ComputeSvdVectors};
use faer::diag::Diag;
use faer::{Mat, MatRef, Par};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Decomposition calls made on the current thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub svd: u64,
    pub eig: u64,
}

thread_local! {
    static COUNTS: Cell<OpCounts> = const { Cell::new(OpCounts { svd: 0, eig: 0 }) };
}

pub fn op_counts() -> OpCounts {
    COUNTS.with(Cell::get)
}

fn bump(f: impl FnOnce(&mut OpCounts)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

fn to_faer(m: &DMatrix<Complex64>) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

fn from_faer(m: MatRef<'_, Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

struct ThinSvd {
    s: Vec<f64>,
    u: DMatrix<Complex64>,
    v: Option<DMatrix<Complex64>>,
}

fn thin_svd(m: &DMatrix<Complex64>, want_v: bool) -> Result<ThinSvd> {
    let a = to_faer(m);
    let (rows, cols) = a.shape();
    let size = rows.min(cols);
    let mut u = Mat::<Complex64>::zeros(rows, size);
    let mut v = Mat::<Complex64>::zeros(cols, size);
    let mut s = Diag::<Complex64>::zeros(size);
    let v_mode = if want_v { ComputeSvdVectors::Thin } else { ComputeSvdVectors::No };
    let scratch = svd::svd_scratch::<Complex64>(rows, cols, ComputeSvdVectors::Thin, v_mode, Par::Seq, Default::default());
    svd::svd(
        a.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        want_v.then(|| v.as_mut()),
        Par::Seq,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::Numeric(format!("SVD did not converge: {e:?}")))?;
    Ok(ThinSvd {
        s: s.column_vector().iter().map(|z| z.re).collect(),
        u: from_faer(u.as_ref()),
        v: want_v.then(|| from_faer(v.as_ref())),
    })
}

/// Left singular vectors and singular values, sorted by decreasing singular value.
pub struct LeftSvd {
    pub singular_values: Vec<f64>,
    pub u: DMatrix<Complex64>,
}

pub fn svd_left(m: &DMatrix<Complex64>) -> Result<LeftSvd> {
    bump(|c| c.svd += 1);
    let svd = thin_svd(m, false)?;
    Ok(LeftSvd { singular_values: svd.s, u: svd.u })
}

/// Moore-Penrose inverse, dropping singular values below `rcond * s_max`.
/// Returns the inverse and the condition number of the kept part.
pub fn pseudo_inverse(m: &DMatrix<Complex64>, rcond: f64) -> Result<(DMatrix<Complex64>, f64)> {
    let svd = thin_svd(m, true)?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let smin = svd.s.last().copied().unwrap_or(0.0);
    let mut vs = svd.v.expect("requested V");
    for (j, &s) in svd.s.iter().enumerate() {
        let inv = if s > rcond * smax { 1.0 / s } else { 0.0 };
        vs.column_mut(j).scale_mut(inv);
    }
    Ok((vs * svd.u.adjoint(), smax / smin))
}

/// Eigendecomposition of a Hermitian matrix, sorted by increasing eigenvalue.
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<Complex64>,
}

pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    bump(|c| c.eig += 1);
    let n = m.nrows();
    let mut u = Mat::<Complex64>::zeros(n, n);
    let mut s = Diag::<Complex64>::zeros(n);
    let scratch = evd::self_adjoint_evd_scratch::<Complex64>(n, ComputeEigenvectors::Yes, Par::Seq, Default::default());
    evd::self_adjoint_evd(
        to_faer(m).as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Par::Seq,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::Numeric(format!("eigendecomposition did not converge: {e:?}")))?;
    let eigenvalues = s.column_vector().iter().map(|z| z.re).collect();
    Ok(HermitianEigen { eigenvalues, eigenvectors: from_faer(u.as_ref()) })
}
