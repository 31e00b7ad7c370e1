//! Simulated scenes and sweeps over T60 x SNR x runs.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::audio::read_wav;
use crate::config::{SceneConfig, SweepConfig};
use crate::error::{Error, Result};
use crate::experiments::metrics::{angular_error, is_anomalous};
use crate::experiments::report::{summarize, CellSummary};
use crate::geometry::ArrayGeometry;
use crate::mdp::MdpDictionary;
use crate::pipeline::{Localizer, Method};
use crate::room::{
    add_noise_at_snr, render_scene, speech_shaped_noise, trim_low_energy, ImageLimits, RenderOrder, RenderSettings,
    RoomSpec, Scene, ScenePlacement,
};
use crate::sh::{Direction, Vec3};
use crate::stft::MultichannelSignal;

/// Frame length used when trimming quiet parts of the dry signal.
const TRIM_FRAME_S: f64 = 0.02;

/// One block estimate of one method in one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub method: Method,
    pub t60_s: f64,
    pub snr_db: f64,
    pub run: usize,
    pub block: usize,
    pub psi_e_deg: f64,
    pub anomalous: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneFailure {
    pub t60_s: f64,
    pub snr_db: f64,
    pub run: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub trials: Vec<TrialResult>,
    pub summary: Vec<CellSummary>,
    pub failures: Vec<SceneFailure>,
}

/// Seed for one purpose (`label`) of one scene, derived from the master seed.
pub fn derive_seed(master: u64, label: &str, t60_s: f64, snr_db: f64, run: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.update(t60_s.to_bits().to_le_bytes());
    h.update(snr_db.to_bits().to_le_bytes());
    h.update((run as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// A rendered scene and the true source direction.
pub struct SimulatedScene {
    pub signal: MultichannelSignal,
    pub truth: Direction,
    pub geometry: ArrayGeometry,
}

fn dry_signal(cfg: &SceneConfig) -> Result<Vec<f64>> {
    let len = (cfg.duration_s * cfg.sample_rate_hz).round() as usize;
    let signal = if cfg.signal == "speech_noise" {
        speech_shaped_noise(len, cfg.sample_rate_hz, cfg.seed)
    } else {
        let wav = read_wav(Path::new(&cfg.signal))?;
        if wav.sample_rate() != cfg.sample_rate_hz {
            return Err(Error::config(format!(
                "{} is sampled at {} Hz, the scene at {} Hz",
                cfg.signal,
                wav.sample_rate(),
                cfg.sample_rate_hz
            )));
        }
        wav.samples().row(0).iter().copied().take(len.max(1)).collect()
    };
    let signal = match cfg.trim_threshold_db {
        Some(db) => trim_low_energy(&signal, cfg.sample_rate_hz, TRIM_FRAME_S, db),
        None => signal,
    };
    if signal.is_empty() {
        return Err(Error::config("source signal is empty after trimming"));
    }
    Ok(signal)
}

/// Renders a scene file: dry signal, room response at the array, and noise.
pub fn simulate_scene(cfg: &SceneConfig) -> Result<SimulatedScene> {
    let geometry = ArrayGeometry::resolve(&cfg.geometry)?;
    let room = RoomSpec::new(cfg.room_dims_m, cfg.t60_s, cfg.speed_of_sound_mps)?;
    let theta = cfg.source_theta_deg.ok_or_else(|| Error::config("source_theta_deg is required"))?;
    let phi = cfg.source_phi_deg.ok_or_else(|| Error::config("source_phi_deg is required"))?;
    let truth = Direction::from_degrees(theta, phi).map_err(|e| Error::config(e.to_string()))?;
    let center = cfg.array_center_m.map(Vec3::from).unwrap_or_else(|| room.dims() / 2.0);
    if !(cfg.source_distance_m > 0.0) {
        return Err(Error::config("source_distance_m must be positive"));
    }
    let placement =
        ScenePlacement { array_center: center, sources: vec![center + truth.unit_vector() * cfg.source_distance_m] };
    let scene = Scene { room, placement, signals: vec![dry_signal(cfg)?], sample_rate: cfg.sample_rate_hz };
    let settings = RenderSettings {
        limits: ImageLimits { max_order: None, floor_db: cfg.render_floor_db },
        order: RenderOrder::Adaptive,
    };
    let mut signal = render_scene(&scene, &geometry, settings)?;
    if let Some(snr) = cfg.snr_db {
        signal = add_noise_at_snr(&signal, snr, cfg.seed)?;
    }
    Ok(SimulatedScene { signal, truth, geometry })
}

/// The randomized scene of one sweep cell and run.
pub fn sweep_scene(cfg: &SweepConfig, t60_s: f64, snr_db: f64, run: usize) -> Result<SimulatedScene> {
    let room = RoomSpec::new(cfg.room_dims_m, t60_s, cfg.speed_of_sound_mps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, "placement", t60_s, snr_db, run));
    let placement = ScenePlacement::random(&room, cfg.source_distance_m, cfg.wall_margin_m, &mut rng)?;
    let truth = placement.source_direction(0)?;
    let scene_cfg = SceneConfig {
        room_dims_m: cfg.room_dims_m,
        t60_s,
        speed_of_sound_mps: cfg.speed_of_sound_mps,
        array_center_m: Some(placement.array_center.into()),
        source_theta_deg: Some(truth.theta_deg()),
        source_phi_deg: Some(truth.phi_deg()),
        source_distance_m: cfg.source_distance_m,
        snr_db: Some(snr_db),
        seed: derive_seed(cfg.master_seed, "signal", t60_s, snr_db, run),
        signal: "speech_noise".into(),
        duration_s: cfg.duration_s,
        sample_rate_hz: cfg.sample_rate_hz,
        geometry: cfg.geometry.clone(),
        trim_threshold_db: cfg.trim_threshold_db,
        render_floor_db: cfg.render_floor_db,
        block_s: cfg.analysis.block_s,
    };
    let geometry = ArrayGeometry::resolve(&cfg.geometry)?;
    let scene = Scene { room, placement, signals: vec![dry_signal(&scene_cfg)?], sample_rate: cfg.sample_rate_hz };
    let settings = RenderSettings {
        limits: ImageLimits { max_order: None, floor_db: cfg.render_floor_db },
        order: RenderOrder::Adaptive,
    };
    let clean = render_scene(&scene, &geometry, settings)?;
    let noise_seed = derive_seed(cfg.master_seed, "noise", t60_s, snr_db, run);
    let signal = add_noise_at_snr(&clean, snr_db, noise_seed)?;
    Ok(SimulatedScene { signal, truth, geometry })
}

/// Simulates and localizes one scene of a sweep.
pub fn run_trial(
    cfg: &SweepConfig,
    localizer: &Localizer,
    methods: &[Method],
    t60_s: f64,
    snr_db: f64,
    run: usize,
) -> Result<Vec<TrialResult>> {
    let scene = sweep_scene(cfg, t60_s, snr_db, run)?;
    let rows = localizer.localize_signal(&scene.signal, methods)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            let psi = angular_error(r.estimate.direction, scene.truth);
            TrialResult {
                method: r.method,
                t60_s,
                snr_db,
                run,
                block: r.block_index,
                psi_e_deg: psi,
                anomalous: is_anomalous(psi),
            }
        })
        .collect())
}

/// Runs every (T60, SNR, run) scene on at most `jobs` workers. Results are
/// ordered by T60, SNR, run, block and method regardless of scheduling.
pub fn run_sweep(cfg: &SweepConfig, dict: MdpDictionary, jobs: Option<usize>) -> Result<SweepReport> {
    cfg.validate()?;
    let methods = cfg.methods()?;
    let geometry = ArrayGeometry::resolve(&cfg.geometry)?;
    let localizer = Localizer::new(geometry, dict, cfg.analysis.settings()?)?;
    let mut keys = Vec::new();
    for &t60 in &cfg.t60_s {
        for &snr in &cfg.snr_db {
            for run in 0..cfg.runs {
                keys.push((t60, snr, run));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<Vec<TrialResult>>> = pool.install(|| {
        keys.par_iter()
            .map(|&(t60, snr, run)| {
                log::info!("scene T60 = {t60} s, SNR = {snr} dB, run {run}");
                run_trial(cfg, &localizer, &methods, t60, snr, run)
            })
            .collect()
    });
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (&(t60_s, snr_db, run), outcome) in keys.iter().zip(outcomes) {
        match outcome {
            Ok(rows) => trials.extend(rows),
            Err(e) => {
                log::warn!("scene T60 = {t60_s} s, SNR = {snr_db} dB, run {run} failed: {e}");
                failures.push(SceneFailure { t60_s, snr_db, run, message: e.to_string() });
            }
        }
    }
    let summary = summarize(&trials, &failures, &methods, &cfg.t60_s, &cfg.snr_db);
    Ok(SweepReport { trials, summary, failures })
}
