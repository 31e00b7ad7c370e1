//! TOML configuration for analysis, single scenes and sweeps. Every physical
//! quantity carries its unit in the key name.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderSettings, Projection, DEFAULT_SPEED_OF_SOUND};
use crate::error::{Error, Result};
use crate::mdp::GridSpec;
use crate::pipeline::{AnalysisSettings, Method};
use crate::sh::Convention;
use crate::stft::StftParams;

pub fn parse_toml<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_string(), message: e.message().to_string() })
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_toml(&text, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub order: usize,
    pub speed_of_sound_mps: f64,
    pub max_eq_gain_db: f64,
    pub eq_clamp: bool,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub block_s: f64,
    pub window_samples: usize,
    pub overlap: f64,
    pub fft_samples: usize,
    pub elev_step_deg: f64,
    pub azim_step_deg: f64,
    /// `quadrature` or `pinv`.
    pub projection: String,
    pub convention: String,
    pub music_sources: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            order: 3,
            speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND,
            max_eq_gain_db: 40.0,
            eq_clamp: true,
            band_lo_hz: 1000.0,
            band_hi_hz: 2500.0,
            block_s: 0.3,
            window_samples: 512,
            overlap: 0.5,
            fft_samples: 512,
            elev_step_deg: 3.0,
            azim_step_deg: 2.0,
            projection: "quadrature".into(),
            convention: Convention::default().tag().into(),
            music_sources: 1,
        }
    }
}

impl AnalysisConfig {
    pub fn convention(&self) -> Result<Convention> {
        Convention::from_tag(&self.convention)
            .ok_or_else(|| Error::config(format!("unknown SH convention {:?}", self.convention)))
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.elev_step_deg, self.azim_step_deg)
    }

    pub fn settings(&self) -> Result<AnalysisSettings> {
        let projection = match self.projection.as_str() {
            "quadrature" => Projection::Quadrature,
            "pinv" => Projection::PseudoInverse,
            other => return Err(Error::config(format!("unknown projection {other:?} (expected quadrature or pinv)"))),
        };
        let stft = StftParams { window_size: self.window_samples, overlap: self.overlap, fft_size: self.fft_samples };
        stft.validate()?;
        if self.order > crate::mdp::MAX_ORDER {
            return Err(Error::config(format!("order {} exceeds {}", self.order, crate::mdp::MAX_ORDER)));
        }
        if !(self.block_s > 0.0) {
            return Err(Error::config("block_s must be positive"));
        }
        Ok(AnalysisSettings {
            stft,
            band_lo_hz: self.band_lo_hz,
            band_hi_hz: self.band_hi_hz,
            block_s: self.block_s,
            encoder: EncoderSettings {
                order: self.order,
                speed_of_sound: self.speed_of_sound_mps,
                max_eq_gain_db: self.eq_clamp.then_some(self.max_eq_gain_db),
                convention: self.convention()?,
            },
            projection,
            music_sources: self.music_sources,
        })
    }
}

/// One simulated recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub room_dims_m: [f64; 3],
    pub t60_s: f64,
    pub speed_of_sound_mps: f64,
    /// Defaults to the room center.
    pub array_center_m: Option<[f64; 3]>,
    pub source_theta_deg: Option<f64>,
    pub source_phi_deg: Option<f64>,
    pub source_distance_m: f64,
    /// No noise when absent.
    pub snr_db: Option<f64>,
    pub seed: u64,
    /// `speech_noise` or a path to a mono WAV file.
    pub signal: String,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub geometry: String,
    /// Frames quieter than this many dB below the loudest are removed from
    /// the dry signal; absent disables trimming.
    pub trim_threshold_db: Option<f64>,
    pub render_floor_db: f64,
    pub block_s: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            room_dims_m: [10.0, 8.0, 6.0],
            t60_s: 0.0,
            speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND,
            array_center_m: None,
            source_theta_deg: None,
            source_phi_deg: None,
            source_distance_m: 2.0,
            snr_db: None,
            seed: 0,
            signal: "speech_noise".into(),
            duration_s: 3.0,
            sample_rate_hz: 8000.0,
            geometry: crate::geometry::BUILTIN_RIGID32.into(),
            trim_threshold_db: Some(35.0),
            render_floor_db: crate::room::DEFAULT_FLOOR_DB,
            block_s: 0.3,
        }
    }
}

/// A grid of conditions, each simulated `runs` times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub t60_s: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub runs: usize,
    pub master_seed: u64,
    pub methods: Vec<String>,
    pub duration_s: f64,
    pub source_distance_m: f64,
    pub wall_margin_m: f64,
    pub room_dims_m: [f64; 3],
    pub speed_of_sound_mps: f64,
    pub sample_rate_hz: f64,
    pub geometry: String,
    pub trim_threshold_db: Option<f64>,
    pub render_floor_db: f64,
    pub analysis: AnalysisConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            t60_s: vec![0.0, 0.5, 1.0],
            snr_db: vec![5.0, 10.0, 20.0, 40.0],
            runs: 10,
            master_seed: 1,
            methods: vec!["shd-lra".into(), "shd-music".into()],
            duration_s: 3.0,
            source_distance_m: 2.0,
            wall_margin_m: 0.5,
            room_dims_m: [10.0, 8.0, 6.0],
            speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND,
            sample_rate_hz: 8000.0,
            geometry: crate::geometry::BUILTIN_RIGID32.into(),
            trim_threshold_db: Some(35.0),
            render_floor_db: crate::room::DEFAULT_FLOOR_DB,
            analysis: AnalysisConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn methods(&self) -> Result<Vec<Method>> {
        if self.methods.is_empty() {
            return Err(Error::config("no methods selected"));
        }
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t60_s.is_empty() || self.snr_db.is_empty() || self.runs == 0 {
            return Err(Error::config("sweep needs at least one T60, one SNR and one run"));
        }
        if !(self.duration_s > 0.0) || !(self.sample_rate_hz > 0.0) {
            return Err(Error::config("duration_s and sample_rate_hz must be positive"));
        }
        self.methods()?;
        self.analysis.settings()?;
        self.analysis.grid()?;
        for &t60 in &self.t60_s {
            let room = crate::room::RoomSpec::new(self.room_dims_m, t60, self.speed_of_sound_mps)?;
            crate::room::sabine_beta(&room)?;
        }
        Ok(())
    }
}
