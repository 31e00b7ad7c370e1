//! Spherical Bessel and Hankel functions and spherical-array mode strengths.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Baffle type of a spherical array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SphereKind {
    Open,
    Rigid,
}

impl std::str::FromStr for SphereKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "open" => Ok(SphereKind::Open),
            "rigid" => Ok(SphereKind::Rigid),
            other => Err(Error::config(format!("unknown sphere kind '{other}' (expected open|rigid)"))),
        }
    }
}

/// Spherical Bessel functions `j_0(x) ..= j_nmax(x)`.
///
/// Upward recurrence is used while it is stable (`n < x`); the remaining
/// orders come from Miller's downward recurrence normalized with
/// `sum (2k+1) j_k^2 = 1`.
pub fn spherical_bessel_j_seq(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x < 0.0 {
        let mut v = spherical_bessel_j_seq(nmax, -x);
        for val in v.iter_mut().skip(1).step_by(2) {
            *val = -*val;
        }
        return v;
    }
    let (s, c) = x.sin_cos();
    out[0] = s / x;
    // The closed form for j_1 cancels badly below x = 1, so only use the
    // upward recurrence where every step has n < x.
    let upward = if x >= 1.0 { (x.floor() as usize).min(nmax) } else { 0 };
    if upward >= 1 {
        out[1] = s / (x * x) - c / x;
        for n in 1..upward {
            out[n + 1] = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
        }
    }
    if upward >= nmax {
        return out;
    }

    let start = nmax.max(x.ceil() as usize) + 20 + (40.0 * nmax as f64).sqrt() as usize;
    let mut tmp = vec![0.0; nmax + 1];
    let mut next = 0.0;
    let mut cur = 1.0;
    let mut sum = 0.0;
    for k in (0..=start).rev() {
        if k <= nmax {
            tmp[k] = cur;
        }
        sum += (2 * k + 1) as f64 * cur * cur;
        if k == 0 {
            break;
        }
        let prev = (2 * k + 1) as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > 1e100 {
            cur *= 1e-100;
            next *= 1e-100;
            sum *= 1e-200;
            tmp.iter_mut().for_each(|t| *t *= 1e-100);
        }
    }
    let mut norm = 1.0 / sum.sqrt();
    // sign from whichever of j_0, j_1 is better conditioned
    let j1 = s / (x * x) - c / x;
    let (reference, computed) = if out[0].abs() >= j1.abs() { (out[0], tmp[0]) } else { (j1, tmp[1]) };
    if (reference < 0.0) != (computed < 0.0) {
        norm = -norm;
    }
    for n in (upward + 1)..=nmax {
        out[n] = tmp[n] * norm;
    }
    out
}

/// Spherical Bessel function of the first kind `j_n(x)`.
pub fn spherical_bessel_j(n: usize, x: f64) -> f64 {
    spherical_bessel_j_seq(n, x)[n]
}

/// Spherical Bessel functions of the second kind `y_0(x) ..= y_nmax(x)`, `x > 0`.
pub fn spherical_bessel_y_seq(nmax: usize, x: f64) -> Result<Vec<f64>> {
    check_positive(x)?;
    let (s, c) = x.sin_cos();
    let mut out = vec![0.0; nmax + 1];
    out[0] = -c / x;
    if nmax >= 1 {
        out[1] = -c / (x * x) - s / x;
    }
    for n in 1..nmax {
        out[n + 1] = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
    }
    Ok(out)
}

fn check_positive(x: f64) -> Result<()> {
    if x == 0.0 {
        return Err(Error::Singularity("spherical Hankel/Neumann function at argument 0".into()));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("argument {x} must be positive and finite")));
    }
    Ok(())
}

/// Spherical Hankel functions of the first kind `h_n(x) = j_n(x) + i y_n(x)`.
pub fn spherical_hankel_h1_seq(nmax: usize, x: f64) -> Result<Vec<Complex64>> {
    let y = spherical_bessel_y_seq(nmax, x)?;
    let j = spherical_bessel_j_seq(nmax, x);
    Ok(j.into_iter().zip(y).map(|(a, b)| Complex64::new(a, b)).collect())
}

pub fn spherical_hankel_h1(n: usize, x: f64) -> Result<Complex64> {
    Ok(spherical_hankel_h1_seq(n, x)?[n])
}

/// `f'_n(x)` from a sequence `f_0..=f_{nmax+1}` using
/// `f'_n = f_{n-1} - (n+1)/x f_n` and `f'_0 = -f_1`.
fn derivative<T>(f: &[T], n: usize, x: f64) -> T
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Neg<Output = T>,
{
    if n == 0 {
        -f[1]
    } else {
        f[n - 1] - f[n] * ((n + 1) as f64 / x)
    }
}

/// Derivative of the spherical Hankel function `h'_n(x)`.
pub fn spherical_hankel_h1_derivative(n: usize, x: f64) -> Result<Complex64> {
    let h = spherical_hankel_h1_seq(n + 1, x)?;
    Ok(derivative(&h, n, x))
}

/// Mode strengths `b_0(x) ..= b_nmax(x)`.
///
/// For a rigid sphere at `x = 0` this is a singularity error; an open sphere
/// is defined there.
pub fn mode_strength_seq(nmax: usize, x: f64, kind: SphereKind) -> Result<Vec<Complex64>> {
    match kind {
        SphereKind::Open => {
            if x < 0.0 || !x.is_finite() {
                return Err(Error::Domain(format!("mode strength argument {x} must be >= 0")));
            }
            Ok(spherical_bessel_j_seq(nmax, x).into_iter().map(|v| Complex64::new(v, 0.0)).collect())
        }
        SphereKind::Rigid => {
            check_positive(x)?;
            let j = spherical_bessel_j_seq(nmax + 1, x);
            let y = spherical_bessel_y_seq(nmax + 1, x)?;
            let h: Vec<Complex64> = j.iter().zip(&y).map(|(&a, &b)| Complex64::new(a, b)).collect();
            Ok((0..=nmax)
                .map(|n| {
                    let dj = derivative(&j, n, x);
                    let dh = derivative(&h, n, x);
                    Complex64::new(j[n], 0.0) - h[n] * (dj / dh)
                })
                .collect())
        }
    }
}

pub fn mode_strength(n: usize, x: f64, kind: SphereKind) -> Result<Complex64> {
    Ok(mode_strength_seq(n, x, kind)?[n])
}

/// Mode strengths in the `x -> 0` limit: `b_0 = 1`, `b_n = 0` otherwise,
/// for either sphere kind.
pub fn mode_strength_dc(nmax: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); nmax + 1];
    v[0] = Complex64::new(1.0, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    // closed forms, independent of the recurrences
    fn j_closed(n: usize, x: f64) -> f64 {
        let (s, c) = x.sin_cos();
        match n {
            0 => s / x,
            1 => s / (x * x) - c / x,
            2 => (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x),
            3 => (15.0 / x.powi(3) - 6.0 / x) * s / x - (15.0 / (x * x) - 1.0) * c / x,
            _ => unreachable!(),
        }
    }

    #[test]
    fn bessel_examples() {
        assert_abs_diff_eq!(spherical_bessel_j(0, 1.0), 0.841_470_984_807_896_5, epsilon = 1e-15);
        assert_abs_diff_eq!(spherical_bessel_j(1, 1.0), 0.301_168_678_939_757_1, epsilon = 1e-15);
        assert_eq!(spherical_bessel_j(3, 0.0), 0.0);
        assert_eq!(spherical_bessel_j(0, 0.0), 1.0);
    }

    #[test]
    fn bessel_matches_closed_forms() {
        for &x in &[0.5, 0.77, 1.0, 1.92, 2.5, 3.08, 7.3, 15.0] {
            for n in 0..=3 {
                let got = spherical_bessel_j(n, x);
                let want = j_closed(n, x);
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "n={n} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn bessel_high_order_small_argument() {
        // j_n(x) ~ x^n / (2n+1)!! for x -> 0
        let x = 1e-3;
        let v = spherical_bessel_j(6, x);
        let approx = x.powi(6) / (1.0 * 3.0 * 5.0 * 7.0 * 9.0 * 11.0 * 13.0);
        assert!((v / approx - 1.0).abs() < 1e-6);
        // normalization sum rule for a zero of j_0
        let seq = spherical_bessel_j_seq(30, PI);
        let sum: f64 = seq.iter().enumerate().map(|(k, j)| (2 * k + 1) as f64 * j * j).sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(seq[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hankel_examples() {
        let h = spherical_hankel_h1(0, 1.0).unwrap();
        assert_abs_diff_eq!(h.re, 0.841_470_984_807_896_5, epsilon = 1e-15);
        assert_abs_diff_eq!(h.im, -0.540_302_305_868_139_8, epsilon = 1e-15);
        let h = spherical_hankel_h1(0, PI).unwrap();
        assert_abs_diff_eq!(h.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.im, 1.0 / PI, epsilon = 1e-15);
        let h = spherical_hankel_h1(1, 1.0).unwrap();
        assert_abs_diff_eq!(h.re, 0.301_168_678_939_757_1, epsilon = 1e-15);
        assert_abs_diff_eq!(h.im, -1.381_773_290_676_036_3, epsilon = 1e-14);
        assert!(matches!(spherical_hankel_h1(0, 0.0), Err(Error::Singularity(_))));
    }

    #[test]
    fn mode_strength_examples() {
        let b = mode_strength(0, 1.0, SphereKind::Open).unwrap();
        assert_abs_diff_eq!(b.re, 0.841_470_984_807_896_5, epsilon = 1e-15);
        assert_eq!(mode_strength(1, 0.0, SphereKind::Open).unwrap(), Complex64::new(0.0, 0.0));
        assert!(matches!(mode_strength(0, 0.0, SphereKind::Rigid), Err(Error::Singularity(_))));
        "rigid".parse::<SphereKind>().unwrap();
        assert!("soft".parse::<SphereKind>().is_err());
    }

    #[test]
    fn rigid_wronskian() {
        // b_n h'_n x^2 = i for the rigid sphere
        for n in 0..=6 {
            let mut x: f64 = 0.1;
            while x <= 20.0 {
                let b = mode_strength(n, x, SphereKind::Rigid).unwrap();
                let dh = spherical_hankel_h1_derivative(n, x).unwrap();
                let w = b * dh * x * x;
                assert!((w - Complex64::new(0.0, 1.0)).norm() < 1e-8, "n={n} x={x}: {w}");
                x += 0.1;
            }
        }
    }
}
