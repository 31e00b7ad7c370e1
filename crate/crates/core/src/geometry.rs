//! Spherical array layouts and the geometry file format.
//!
//! A geometry file is TOML:
//!
//! ```toml
//! radius_m = 0.042
//! kind = "rigid"            # or "open"
//! capsules = [              # [theta_deg, phi_deg, weight]
//!     [90.0, 0.0, 0.3927],
//! ]
//! ```

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::{coeff_count, sh_vector, Convention, Direction};
use crate::special::SphereKind;

const RIGID32: &str = include_str!("../data/rigid32.toml");

/// Name accepted wherever a geometry path is expected.
pub const BUILTIN_RIGID32: &str = "builtin:rigid32";

#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    capsules: Vec<Direction>,
    radius: f64,
    kind: SphereKind,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryFile {
    radius_m: f64,
    kind: SphereKind,
    capsules: Vec<[f64; 3]>,
}

impl ArrayGeometry {
    pub fn new(capsules: Vec<Direction>, radius: f64, kind: SphereKind, weights: Vec<f64>) -> Result<Self> {
        if capsules.is_empty() {
            return Err(Error::Geometry("array has no capsules".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Geometry(format!("radius {radius} m must be positive")));
        }
        if weights.len() != capsules.len() {
            return Err(Error::Geometry(format!(
                "{} weights for {} capsules",
                weights.len(),
                capsules.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Geometry("non-finite quadrature weight".into()));
        }
        Ok(Self { capsules, radius, kind, weights })
    }

    /// Equal weights `4 pi / Q`.
    pub fn with_uniform_weights(capsules: Vec<Direction>, radius: f64, kind: SphereKind) -> Result<Self> {
        let w = 4.0 * PI / capsules.len().max(1) as f64;
        let weights = vec![w; capsules.len()];
        Self::new(capsules, radius, kind, weights)
    }

    /// The bundled 32-capsule rigid layout (radius 0.042 m).
    pub fn rigid32() -> Self {
        Self::from_toml_str(RIGID32, BUILTIN_RIGID32).expect("bundled geometry is valid")
    }

    /// Loads `builtin:rigid32` or a geometry file path.
    pub fn resolve(spec: &str) -> Result<Self> {
        if spec == BUILTIN_RIGID32 {
            Ok(Self::rigid32())
        } else {
            Self::load(Path::new(spec))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let file: GeometryFile = toml::from_str(text)
            .map_err(|e| Error::Parse { path: origin.to_owned(), message: e.message().to_owned() })?;
        let mut capsules = Vec::with_capacity(file.capsules.len());
        let mut weights = Vec::with_capacity(file.capsules.len());
        for (q, [theta, phi, w]) in file.capsules.into_iter().enumerate() {
            let dir = Direction::from_degrees(theta, phi)
                .map_err(|e| Error::Geometry(format!("{origin}: capsule {q}: {e}")))?;
            capsules.push(dir);
            weights.push(w);
        }
        Self::new(capsules, file.radius_m, file.kind, weights)
    }

    pub fn to_toml_string(&self) -> String {
        let file = GeometryFile {
            radius_m: self.radius,
            kind: self.kind,
            capsules: self
                .capsules
                .iter()
                .zip(&self.weights)
                .map(|(d, &w)| [d.theta_deg(), d.phi_deg(), w])
                .collect(),
        };
        toml::to_string(&file).expect("geometry serializes")
    }

    pub fn capsules(&self) -> &[Direction] {
        &self.capsules
    }

    pub fn capsule_count(&self) -> usize {
        self.capsules.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kind(&self) -> SphereKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Checks the preconditions of quadrature encoding up to `order`.
    pub fn check_quadrature(&self, order: usize) -> Result<()> {
        let c = coeff_count(order);
        if self.capsule_count() < c {
            return Err(Error::Geometry(format!(
                "{} capsules cannot resolve {c} coefficients of order {order}",
                self.capsule_count()
            )));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 4.0 * PI).abs() > 1e-6 {
            return Err(Error::Geometry(format!("quadrature weights sum to {sum}, expected 4 pi")));
        }
        Ok(())
    }

    /// `Q x C` matrix of `Y_nm` evaluated at the capsule directions.
    pub fn sh_matrix(&self, order: usize, conv: Convention) -> DMatrix<Complex64> {
        let c = coeff_count(order);
        let mut m = DMatrix::zeros(self.capsule_count(), c);
        for (q, dir) in self.capsules.iter().enumerate() {
            for (p, y) in sh_vector(*dir, order, conv).into_iter().enumerate() {
                m[(q, p)] = y;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_layout() {
        let g = ArrayGeometry::rigid32();
        assert_eq!(g.capsule_count(), 32);
        assert_eq!(g.radius(), 0.042);
        assert_eq!(g.kind(), SphereKind::Rigid);
        g.check_quadrature(3).unwrap();
        g.check_quadrature(4).unwrap();
        assert!(g.check_quadrature(5).is_err());
    }

    #[test]
    fn bundled_layout_is_exact_to_order_three() {
        let g = ArrayGeometry::rigid32();
        let y = g.sh_matrix(3, Convention::default());
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            32,
            g.weights().iter().map(|&w| Complex64::new(w, 0.0)),
        ));
        let gram = y.adjoint() * w * &y;
        let err = (gram - DMatrix::identity(16, 16)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "orthonormality error {err}");
    }

    #[test]
    fn toml_round_trip() {
        let g = ArrayGeometry::rigid32();
        let back = ArrayGeometry::from_toml_str(&g.to_toml_string(), "mem").unwrap();
        assert_eq!(back.capsule_count(), 32);
        for (a, b) in g.capsules().iter().zip(back.capsules()) {
            assert!((a.unit_vector() - b.unit_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_files() {
        let err = ArrayGeometry::from_toml_str("radius_m = 0.04\nkind = \"soft\"\ncapsules = []", "x").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = ArrayGeometry::from_toml_str("radius_m = -1\nkind = \"open\"\ncapsules = [[0,0,1]]", "x").unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
        let err = ArrayGeometry::from_toml_str("radius_m = 1\nkind = \"open\"\ncapsules = [[190,0,1]]", "x").unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }
}
