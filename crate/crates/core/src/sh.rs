//! Complex spherical harmonics on the unit sphere.
//!
//! Angles follow the physics convention: `theta` is the polar angle measured
//! from +z (0 at the north pole, pi at the south pole) and `phi` the azimuth
//! measured from +x towards +y.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Order/degree pair `(n, m)` with `|m| <= n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OrderIndex {
    n: u32,
    m: i32,
}

impl OrderIndex {
    pub fn new(n: u32, m: i32) -> Result<Self> {
        if m.unsigned_abs() > n {
            return Err(Error::Domain(format!("degree {m} exceeds order {n}")));
        }
        Ok(Self { n, m })
    }

    pub fn n(self) -> u32 {
        self.n
    }

    pub fn m(self) -> i32 {
        self.m
    }

    /// Flat (ACN) position `n^2 + n + m`.
    pub fn flat(self) -> usize {
        let n = self.n as i64;
        (n * n + n + self.m as i64) as usize
    }

    pub fn from_flat(p: usize) -> Self {
        let n = (p as f64).sqrt().floor() as u32;
        // guard against sqrt rounding for large p
        let n = if ((n + 1) * (n + 1)) as usize <= p { n + 1 } else { n };
        let m = p as i64 - (n as i64 * n as i64 + n as i64);
        Self { n, m: m as i32 }
    }

    /// All indices up to order `order`, in flat order.
    pub fn up_to(order: usize) -> impl Iterator<Item = OrderIndex> {
        (0..coeff_count(order)).map(OrderIndex::from_flat)
    }
}

/// Number of coefficients `(N+1)^2` for a truncation order `N`.
pub fn coeff_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Range of flat indices that hold the order-`n` block.
pub fn order_block(n: usize) -> std::ops::Range<usize> {
    n * n..(n + 1) * (n + 1)
}

/// A direction on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    theta: f64,
    phi: f64,
}

impl Direction {
    /// Builds a direction from polar angle `theta` in `[0, pi]` and azimuth `phi`
    /// (any real; wrapped into `[0, 2pi)`).
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::Domain("non-finite direction angle".into()));
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::Domain(format!("elevation {theta} outside [0, pi]")));
        }
        Ok(Self { theta, phi: wrap_azimuth(phi) })
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// Direction of a (not necessarily unit) nonzero vector.
    pub fn from_vector(v: &Vec3) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain("cannot take the direction of a zero vector".into()));
        }
        let theta = v.x.hypot(v.y).atan2(v.z);
        let phi = v.y.atan2(v.x);
        Ok(Self { theta, phi: wrap_azimuth(phi) })
    }

    pub fn theta(self) -> f64 {
        self.theta
    }

    pub fn phi(self) -> f64 {
        self.phi
    }

    pub fn theta_deg(self) -> f64 {
        self.theta.to_degrees()
    }

    pub fn phi_deg(self) -> f64 {
        self.phi.to_degrees()
    }

    pub fn unit_vector(self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(st * cp, st * sp, ct)
    }

    pub fn antipode(self) -> Self {
        Self { theta: PI - self.theta, phi: wrap_azimuth(self.phi + PI) }
    }
}

fn wrap_azimuth(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Phase convention of the associated Legendre functions.
///
/// Both variants use the `|m|` form, so `Y_{n,-m} = conj(Y_{n,m})` holds either
/// way; they differ by a factor `(-1)^|m|`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Convention {
    #[default]
    NoCondonShortley,
    CondonShortley,
}

impl Convention {
    pub fn tag(self) -> &'static str {
        match self {
            Convention::NoCondonShortley => "complex-orthonormal-acn-nocs",
            Convention::CondonShortley => "complex-orthonormal-acn-cs",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "complex-orthonormal-acn-nocs" => Some(Convention::NoCondonShortley),
            "complex-orthonormal-acn-cs" => Some(Convention::CondonShortley),
            _ => None,
        }
    }

    fn sign(self, m: u32) -> f64 {
        match self {
            Convention::CondonShortley if m % 2 == 1 => -1.0,
            _ => 1.0,
        }
    }
}

/// Associated Legendre function `P_n^m(x)` for `0 <= m <= n`, without the
/// Condon-Shortley phase.
pub fn assoc_legendre(n: u32, m: u32, x: f64) -> Result<f64> {
    if m > n {
        return Err(Error::Domain(format!("assoc_legendre: m = {m} > n = {n}")));
    }
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("assoc_legendre: |x| = {} > 1", x.abs())));
    }
    // P_m^m = (2m-1)!! (1-x^2)^{m/2}
    let s = ((1.0 - x) * (1.0 + x)).sqrt();
    let mut pmm = 1.0;
    for k in 1..=m {
        pmm *= (2 * k - 1) as f64 * s;
    }
    if n == m {
        return Ok(pmm);
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    for l in (m + 2)..=n {
        let next = ((2 * l - 1) as f64 * x * cur - (l + m - 1) as f64 * prev) / (l - m) as f64;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Orthonormal complex spherical harmonic `Y_nm(theta, phi)` in the default
/// (no Condon-Shortley) convention.
pub fn sph_harm(idx: OrderIndex, dir: Direction) -> Complex64 {
    sph_harm_with(idx, dir, Convention::default())
}

pub fn sph_harm_with(idx: OrderIndex, dir: Direction, conv: Convention) -> Complex64 {
    let n = idx.n();
    let am = idx.m().unsigned_abs();
    let p = assoc_legendre(n, am, dir.theta().cos().clamp(-1.0, 1.0))
        .expect("order index invariants guarantee a valid Legendre argument");
    let norm = normalization(n, am);
    let phase = Complex64::from_polar(1.0, idx.m() as f64 * dir.phi());
    phase * (conv.sign(am) * norm * p)
}

/// `sqrt((2n+1)/(4 pi) * (n-m)!/(n+m)!)`
fn normalization(n: u32, m: u32) -> f64 {
    let mut ratio = 1.0;
    for k in (n - m + 1)..=(n + m) {
        ratio /= k as f64;
    }
    ((2 * n + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// All harmonics up to `order` at `dir`, in flat order.
pub fn sh_vector(dir: Direction, order: usize, conv: Convention) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); coeff_count(order)];
    sh_vector_into(dir, order, conv, &mut out);
    out
}

/// Fills `out` (length `(order+1)^2`) with `Y_nm(dir)`.
pub fn sh_vector_into(dir: Direction, order: usize, conv: Convention, out: &mut [Complex64]) {
    assert_eq!(out.len(), coeff_count(order));
    let x = dir.theta().cos().clamp(-1.0, 1.0);
    let s = ((1.0 - x) * (1.0 + x)).sqrt();
    let phi = dir.phi();
    let nmax = order as u32;
    // Normalized recurrence over n for each m keeps the values O(1).
    let mut pmm = (1.0 / (4.0 * PI)).sqrt(); // normalized P_0^0
    for m in 0..=nmax {
        if m > 0 {
            // bar P_m^m = sqrt((2m+1)/(2m)) * s * bar P_{m-1}^{m-1}
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        let phase = Complex64::from_polar(conv.sign(m), m as f64 * phi);
        let mut set = |n: u32, val: f64| {
            let y = phase * val;
            let base = (n * n + n) as usize;
            out[base + m as usize] = y;
            if m > 0 {
                out[base - m as usize] = y.conj();
            }
        };
        set(m, pmm);
        if m == nmax {
            break;
        }
        let mut prev = pmm;
        let mut cur = x * ((2 * m + 3) as f64).sqrt() * pmm;
        set(m + 1, cur);
        for n in (m + 2)..=nmax {
            let nf = n as f64;
            let mf = m as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0)).sqrt();
            let next = a * (x * cur - b * prev);
            prev = cur;
            cur = next;
            set(n, cur);
        }
    }
}

/// `i^n` for integer `n >= 0`.
pub fn i_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_examples() {
        assert_eq!(assoc_legendre(0, 0, 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(assoc_legendre(1, 0, 0.5).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(assoc_legendre(1, 1, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        // P_2^1 = 3x sqrt(1-x^2), P_3^2 = 15 x (1-x^2) without the CS phase
        let x: f64 = 0.37;
        assert_abs_diff_eq!(
            assoc_legendre(2, 1, x).unwrap(),
            3.0 * x * (1.0 - x * x).sqrt(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            assoc_legendre(3, 2, x).unwrap(),
            15.0 * x * (1.0 - x * x),
            epsilon = 1e-13
        );
    }

    #[test]
    fn legendre_rejects_bad_args() {
        assert!(matches!(assoc_legendre(2, 1, 1.5), Err(Error::Domain(_))));
        assert!(matches!(assoc_legendre(1, 2, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sph_harm_examples() {
        let any = Direction::from_degrees(33.0, 71.0).unwrap();
        let y00 = sph_harm(OrderIndex::new(0, 0).unwrap(), any);
        assert_abs_diff_eq!(y00.re, 0.282_094_791_773_878_14, epsilon = 1e-15);
        assert_abs_diff_eq!(y00.im, 0.0, epsilon = 1e-15);

        let north = Direction::new(0.0, 0.0).unwrap();
        let y10 = sph_harm(OrderIndex::new(1, 0).unwrap(), north);
        assert_abs_diff_eq!(y10.re, 0.488_602_511_902_919_9, epsilon = 1e-15);

        let eq = Direction::new(PI / 2.0, 0.0).unwrap();
        let y11 = sph_harm(OrderIndex::new(1, 1).unwrap(), eq);
        assert_abs_diff_eq!(y11.re, 0.345_494_149_471_335_5, epsilon = 1e-15);
        assert_abs_diff_eq!(y11.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn vector_matches_scalar() {
        for conv in [Convention::NoCondonShortley, Convention::CondonShortley] {
            let dir = Direction::from_degrees(123.4, 301.0).unwrap();
            let v = sh_vector(dir, 8, conv);
            for idx in OrderIndex::up_to(8) {
                let s = sph_harm_with(idx, dir, conv);
                assert!((v[idx.flat()] - s).norm() < 1e-13, "{idx:?}");
            }
        }
    }

    #[test]
    fn flat_index_is_bijective() {
        for p in 0..81 {
            let idx = OrderIndex::from_flat(p);
            assert!(idx.m().unsigned_abs() <= idx.n());
            assert_eq!(idx.flat(), p);
        }
        assert_eq!(OrderIndex::new(1, -1).unwrap().flat(), 1);
        assert!(OrderIndex::new(1, 2).is_err());
    }

    #[test]
    fn direction_round_trip() {
        let d = Direction::from_degrees(47.0, 359.5).unwrap();
        let back = Direction::from_vector(&(d.unit_vector() * 3.0)).unwrap();
        assert_abs_diff_eq!(back.theta(), d.theta(), epsilon = 1e-12);
        assert_abs_diff_eq!(back.phi(), d.phi(), epsilon = 1e-12);
        assert!((d.unit_vector().norm() - 1.0).abs() < 1e-12);
        assert!(Direction::new(3.5, 0.0).is_err());
        assert!(Direction::from_vector(&Vec3::zeros()).is_err());
        assert_abs_diff_eq!(Direction::from_degrees(10.0, -90.0).unwrap().phi_deg(), 270.0, epsilon = 1e-12);
    }
}
