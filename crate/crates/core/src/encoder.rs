//! Capsule spectra to spherical-harmonic coefficient matrices.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::linalg::pseudo_inverse;
use crate::sh::{coeff_count, order_block, Convention};
use crate::special::mode_strength_seq;
use crate::stft::Spectrogram;

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_MAX_EQ_GAIN_DB: f64 = 40.0;

/// `C x F` coefficients for one analysis block; column `j` holds `a_N(k_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMatrix {
    entries: DMatrix<Complex64>,
    order: usize,
    wavenumbers: Vec<f64>,
    block_index: usize,
}

impl CoefficientMatrix {
    pub fn new(entries: DMatrix<Complex64>, order: usize) -> Result<Self> {
        if entries.nrows() != coeff_count(order) {
            return Err(Error::config(format!(
                "{} rows do not match order {order} ({} coefficients)",
                entries.nrows(),
                coeff_count(order)
            )));
        }
        let wavenumbers = vec![f64::NAN; entries.ncols()];
        Ok(Self { entries, order, wavenumbers, block_index: 0 })
    }

    pub fn with_block_index(mut self, block_index: usize) -> Self {
        self.block_index = block_index;
        self
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Wavenumber of every column (NaN when built from raw entries).
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn block_index(&self) -> usize {
        self.block_index
    }

    pub fn scaled(&self, gamma: f64) -> Self {
        let mut out = self.clone();
        out.entries *= Complex64::new(gamma, 0.0);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderSettings {
    pub order: usize,
    pub speed_of_sound: f64,
    /// Magnitude limit on `1/b_n`, in dB; `None` disables the clamp.
    pub max_eq_gain_db: Option<f64>,
    pub convention: Convention,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            order: 3,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            max_eq_gain_db: Some(DEFAULT_MAX_EQ_GAIN_DB),
            convention: Convention::default(),
        }
    }
}

/// How capsule pressures are projected onto the harmonics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// Weighted quadrature sum over capsules.
    Quadrature,
    /// Least squares through the pseudoinverse of the capsule SH matrix.
    PseudoInverse,
}

/// Pre-computed projection for one geometry and order.
#[derive(Clone, Debug)]
pub struct Encoder {
    geometry: ArrayGeometry,
    settings: EncoderSettings,
    projection: Projection,
    // C x Q
    project: DMatrix<Complex64>,
}

/// Singular-value ratio below which the capsule SH matrix is rank deficient.
const PINV_RCOND: f64 = 1e-10;

impl Encoder {
    pub fn new(geometry: ArrayGeometry, settings: EncoderSettings, projection: Projection) -> Result<Self> {
        if !(settings.speed_of_sound > 0.0) {
            return Err(Error::config("speed of sound must be positive"));
        }
        if let Some(db) = settings.max_eq_gain_db {
            if !db.is_finite() {
                return Err(Error::config("max equalization gain must be finite"));
            }
        }
        let y = geometry.sh_matrix(settings.order, settings.convention);
        let project = match projection {
            Projection::Quadrature => {
                geometry.check_quadrature(settings.order)?;
                let mut p = y.adjoint();
                for (q, &w) in geometry.weights().iter().enumerate() {
                    p.column_mut(q).scale_mut(w);
                }
                p
            }
            Projection::PseudoInverse => {
                let c = coeff_count(settings.order);
                if geometry.capsule_count() < c {
                    return Err(Error::Geometry(format!(
                        "{} capsules cannot resolve {c} coefficients",
                        geometry.capsule_count()
                    )));
                }
                let (pinv, cond) = pseudo_inverse(&y, PINV_RCOND)?;
                if !(cond < 1.0 / PINV_RCOND) {
                    return Err(Error::Numeric(format!("capsule SH matrix is rank deficient (condition {cond:.3e})")));
                }
                pinv
            }
        };
        Ok(Self { geometry, settings, projection, project })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn settings(&self) -> EncoderSettings {
        self.settings
    }

    pub fn projection(&self) -> Projection {
        self.projection
    }

    pub fn order(&self) -> usize {
        self.settings.order
    }

    /// Per-order radial equalization `1/b_n(kR)` at `freq_hz`, clamped in
    /// magnitude with its phase kept.
    pub fn equalization(&self, freq_hz: f64) -> Result<Vec<Complex64>> {
        let k = 2.0 * PI * freq_hz / self.settings.speed_of_sound;
        let b = mode_strength_seq(self.settings.order, k * self.geometry.radius(), self.geometry.kind())?;
        let limit = self.settings.max_eq_gain_db.map(|db| 10f64.powf(db / 20.0));
        b.into_iter()
            .enumerate()
            .map(|(n, bn)| {
                let mag = bn.norm();
                match limit {
                    Some(limit) => {
                        if mag * limit <= 1.0 {
                            // |1/b| >= limit, including b = 0
                            let phase = if mag > 0.0 { bn.conj() / mag } else { Complex64::new(1.0, 0.0) };
                            Ok(phase * limit)
                        } else {
                            Ok(bn.inv())
                        }
                    }
                    None if mag == 0.0 => Err(Error::Numeric(format!(
                        "mode strength b_{n} vanishes at {freq_hz} Hz and equalization is unclamped"
                    ))),
                    None => Ok(bn.inv()),
                }
            })
            .collect()
    }

    /// Encodes frames `frames` of a band-limited spectrogram into one
    /// coefficient matrix, frame-major (all bins of the first frame first).
    pub fn encode_block(&self, band: &Spectrogram, frames: Range<usize>, block_index: usize) -> Result<CoefficientMatrix> {
        let q = self.geometry.capsule_count();
        if band.channel_count() != q {
            return Err(Error::Geometry(format!(
                "spectrogram has {} channels, geometry has {q} capsules",
                band.channel_count()
            )));
        }
        if frames.end > band.frame_count() || frames.is_empty() {
            return Err(Error::config(format!("frame range {frames:?} outside 0..{}", band.frame_count())));
        }
        let nbins = band.bin_count();
        let cols = nbins * frames.len();
        let pressures = DMatrix::from_fn(q, cols, |ch, j| {
            let (t, f) = (frames.start + j / nbins, j % nbins);
            band.bins()[(ch, f, t)]
        });
        let freqs: Vec<f64> = (0..cols).map(|j| band.bin_freqs()[j % nbins]).collect();
        Ok(self.encode_spectra(&pressures, &freqs)?.with_block_index(block_index))
    }

    /// Encodes capsule spectra (`Q x cols`, column `j` at `freqs_hz[j]`).
    pub fn encode_spectra(&self, pressures: &DMatrix<Complex64>, freqs_hz: &[f64]) -> Result<CoefficientMatrix> {
        if pressures.nrows() != self.geometry.capsule_count() {
            return Err(Error::Geometry(format!(
                "spectra have {} rows, geometry has {} capsules",
                pressures.nrows(),
                self.geometry.capsule_count()
            )));
        }
        if freqs_hz.len() != pressures.ncols() {
            return Err(Error::config(format!("{} frequencies for {} columns", freqs_hz.len(), pressures.ncols())));
        }
        let mut entries = &self.project * pressures;
        for (j, &f) in freqs_hz.iter().enumerate() {
            let gains = self.equalization(f)?;
            let mut col = entries.column_mut(j);
            for (n, g) in gains.iter().enumerate() {
                for p in order_block(n) {
                    col[p] *= *g;
                }
            }
        }
        let wavenumbers = freqs_hz.iter().map(|&f| 2.0 * PI * f / self.settings.speed_of_sound).collect();
        Ok(CoefficientMatrix { entries, order: self.settings.order, wavenumbers, block_index: 0 })
    }
}
