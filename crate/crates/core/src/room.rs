//! Shoebox rooms simulated with the image-source method and rendered at the
//! capsules of a spherical array in the frequency domain.

use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::encoder::DEFAULT_SPEED_OF_SOUND;
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::sh::{coeff_count, i_pow, sh_vector_into, Convention, Direction, Vec3};
use crate::special::{mode_strength_dc, mode_strength_seq};
use crate::stft::MultichannelSignal;

/// Image truncation floor, in dB below the direct path.
pub const DEFAULT_FLOOR_DB: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoomSpec {
    dims: Vec3,
    t60_s: f64,
    speed_of_sound: f64,
}

impl RoomSpec {
    pub fn new(dims_m: [f64; 3], t60_s: f64, speed_of_sound: f64) -> Result<Self> {
        if dims_m.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::config(format!("room dimensions {dims_m:?} m must be positive")));
        }
        if !(t60_s >= 0.0) || !t60_s.is_finite() {
            return Err(Error::config(format!("T60 {t60_s} s must be >= 0")));
        }
        if !(speed_of_sound > 0.0) {
            return Err(Error::config("speed of sound must be positive"));
        }
        Ok(Self { dims: Vec3::from(dims_m), t60_s, speed_of_sound })
    }

    /// The 10 x 8 x 6 m room at 343 m/s.
    pub fn reference(t60_s: f64) -> Result<Self> {
        Self::new([10.0, 8.0, 6.0], t60_s, DEFAULT_SPEED_OF_SOUND)
    }

    pub fn dims(&self) -> Vec3 {
        self.dims
    }

    pub fn t60_s(&self) -> f64 {
        self.t60_s
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn volume(&self) -> f64 {
        self.dims.x * self.dims.y * self.dims.z
    }

    pub fn surface(&self) -> f64 {
        let d = self.dims;
        2.0 * (d.x * d.y + d.x * d.z + d.y * d.z)
    }

    /// Whether `p` lies inside the room with at least `margin` to every wall.
    pub fn contains(&self, p: &Vec3, margin: f64) -> bool {
        (0..3).all(|i| p[i] >= margin && p[i] <= self.dims[i] - margin)
    }
}

/// Uniform wall reflection coefficient from Sabine's formula. Zero for an
/// anechoic room.
pub fn sabine_beta(room: &RoomSpec) -> Result<f64> {
    if room.t60_s == 0.0 {
        return Ok(0.0);
    }
    let absorption = 0.161 * room.volume() / (room.surface() * room.t60_s);
    if absorption > 1.0 {
        return Err(Error::config(format!(
            "T60 {} s is too short for this room (absorption {absorption:.3} > 1)",
            room.t60_s
        )));
    }
    Ok((1.0 - absorption).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenePlacement {
    pub array_center: Vec3,
    pub sources: Vec<Vec3>,
}

impl ScenePlacement {
    pub fn validate(&self, room: &RoomSpec, array_radius: f64) -> Result<()> {
        if !room.contains(&self.array_center, array_radius) {
            return Err(Error::Geometry(format!(
                "array sphere at {:?} does not fit inside the room",
                self.array_center.as_slice()
            )));
        }
        if self.sources.is_empty() {
            return Err(Error::Geometry("scene has no sources".into()));
        }
        for s in &self.sources {
            if !room.contains(s, 0.0) {
                return Err(Error::Geometry(format!("source at {:?} is outside the room", s.as_slice())));
            }
            if (s - self.array_center).norm() <= array_radius {
                return Err(Error::Geometry("source lies inside the array sphere".into()));
            }
        }
        Ok(())
    }

    /// Direction of source `i` as seen from the array center.
    pub fn source_direction(&self, i: usize) -> Result<Direction> {
        Direction::from_vector(&(self.sources[i] - self.array_center))
    }

    /// Random array position and a single source at `distance` in a uniformly
    /// random direction, both at least `margin` from every wall.
    pub fn random(room: &RoomSpec, distance: f64, margin: f64, rng: &mut impl Rng) -> Result<Self> {
        let d = room.dims();
        if (0..3).any(|i| d[i] <= 2.0 * margin) {
            return Err(Error::config(format!("margin {margin} m leaves no room for the array")));
        }
        for _ in 0..10_000 {
            let center = Vec3::new(
                rng.gen_range(margin..d.x - margin),
                rng.gen_range(margin..d.y - margin),
                rng.gen_range(margin..d.z - margin),
            );
            let z: f64 = rng.gen_range(-1.0..1.0);
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).sqrt();
            let source = center + Vec3::new(r * phi.cos(), r * phi.sin(), z) * distance;
            if room.contains(&source, margin) {
                return Ok(Self { array_center: center, sources: vec![source] });
            }
        }
        Err(Error::config(format!("cannot place a source {distance} m from the array in this room")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageSource {
    pub position: Vec3,
    pub gain: f64,
    pub order: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageLimits {
    pub max_order: Option<u32>,
    /// Images whose gain including spherical spreading falls this many dB
    /// below the direct path are dropped.
    pub floor_db: f64,
}

impl Default for ImageLimits {
    fn default() -> Self {
        Self { max_order: None, floor_db: DEFAULT_FLOOR_DB }
    }
}

/// Image lattice of `source` for a receiver at `receiver`, direct path first,
/// then by increasing reflection order.
pub fn image_sources(room: &RoomSpec, source: Vec3, receiver: Vec3, limits: ImageLimits) -> Result<Vec<ImageSource>> {
    let beta = sabine_beta(room)?;
    let direct = ImageSource { position: source, gain: 1.0, order: 0 };
    if beta == 0.0 || limits.max_order == Some(0) {
        return Ok(vec![direct]);
    }
    let floor = 10f64.powf(-limits.floor_db / 20.0);
    let d0 = (source - receiver).norm();
    let by_gain = (floor.ln() / beta.ln()).ceil().max(1.0) as u32;
    let rmax = limits.max_order.map_or(by_gain, |m| m.min(by_gain));
    let dims = room.dims();
    let mut out = Vec::new();
    let nmax = (rmax as i64 + 1) / 2 + 1;
    for nx in -nmax..=nmax {
        for px in 0..2 {
            let rx = (2 * nx - px).unsigned_abs() as u32;
            if rx > rmax {
                continue;
            }
            for ny in -nmax..=nmax {
                for py in 0..2 {
                    let ry = (2 * ny - py).unsigned_abs() as u32;
                    if rx + ry > rmax {
                        continue;
                    }
                    for nz in -nmax..=nmax {
                        for pz in 0..2 {
                            let rz = (2 * nz - pz).unsigned_abs() as u32;
                            let r = rx + ry + rz;
                            if r > rmax {
                                continue;
                            }
                            let coord = |n: i64, p: i64, s: f64, l: f64| (1 - 2 * p) as f64 * s + 2.0 * n as f64 * l;
                            let pos = Vec3::new(
                                coord(nx, px, source.x, dims.x),
                                coord(ny, py, source.y, dims.y),
                                coord(nz, pz, source.z, dims.z),
                            );
                            let gain = beta.powi(r as i32);
                            let d = (pos - receiver).norm();
                            if r > 0 && gain * d0 / d < floor {
                                continue;
                            }
                            out.push(ImageSource { position: pos, gain, order: r });
                        }
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.order.cmp(&b.order).then_with(|| {
            let key = |p: &Vec3| (p.x, p.y, p.z);
            key(&a.position).partial_cmp(&key(&b.position)).expect("finite positions")
        })
    });
    Ok(out)
}

/// Expansion order used for the capsule pressures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderOrder {
    Fixed(usize),
    /// `ceil(kR) + 2`, evaluated per chunk of 64 bins at its highest bin.
    Adaptive,
}

impl RenderOrder {
    fn at(self, kr: f64) -> usize {
        match self {
            RenderOrder::Fixed(n) => n,
            RenderOrder::Adaptive => kr.ceil() as usize + 2,
        }
    }
}

/// Smallest `2^a 3^b 5^c` not below `n`.
pub fn smooth_fft_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Capsule pressure spectra of one source, bins `0..=nfft/2`, as a `Q x bins` matrix.
///
/// `spectrum` is the one-sided source spectrum on the same bins. Each image
/// contributes `g e^{-ikd}/(4 pi d)` times the rigid or open sphere response to
/// a plane wave from its direction.
pub fn render_spectra(
    images: &[ImageSource],
    array_center: Vec3,
    geom: &ArrayGeometry,
    spectrum: &[Complex64],
    nfft: usize,
    sample_rate: f64,
    speed_of_sound: f64,
    order: RenderOrder,
) -> Result<Array2<Complex64>> {
    let nbins = nfft / 2 + 1;
    if spectrum.len() != nbins {
        return Err(Error::config(format!("spectrum has {} bins, expected {nbins}", spectrum.len())));
    }
    let radius = geom.radius();
    let k_of = |b: usize| 2.0 * PI * b as f64 * sample_rate / nfft as f64 / speed_of_sound;
    let kr_max = k_of(nbins - 1) * radius;
    if let RenderOrder::Fixed(n) = order {
        let need = kr_max.ceil() as usize + 2;
        if n < need {
            return Err(Error::config(format!("render order {n} is below ceil(kR)+2 = {need} at Nyquist")));
        }
    }
    let nmax = order.at(kr_max);
    let cmax = coeff_count(nmax);
    let conv = Convention::default();

    // g/d * conj(Y(dir)) per image, as a cmax x images matrix; the 4 pi of
    // the pattern cancels the 1/(4 pi) of the Green's function
    let mut dists = Vec::with_capacity(images.len());
    let mut patterns = Mat::<Complex64>::zeros(cmax, images.len());
    let mut y = vec![Complex64::new(0.0, 0.0); cmax];
    for (i, img) in images.iter().enumerate() {
        let v = img.position - array_center;
        let d = v.norm();
        if !(d > 0.0) {
            return Err(Error::Geometry("image source coincides with the array center".into()));
        }
        if d <= radius {
            return Err(Error::Geometry("image source lies inside the array sphere".into()));
        }
        sh_vector_into(Direction::from_vector(&v)?, nmax, conv, &mut y);
        for (p, z) in y.iter().enumerate() {
            patterns[(p, i)] = z.conj() * (img.gain / d);
        }
        dists.push(d);
    }
    let q = geom.capsule_count();
    let mut caps = Mat::<Complex64>::zeros(q, cmax);
    for (c, dir) in geom.capsules().iter().enumerate() {
        sh_vector_into(*dir, nmax, conv, &mut y);
        for (p, z) in y.iter().enumerate() {
            caps[(c, p)] = *z;
        }
    }

    // Bins are processed in chunks; the adaptive order of a chunk is the one
    // of its highest bin.
    const CHUNK: usize = 64;
    let chunks: Vec<Result<Mat<Complex64>>> = (0..nbins.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let b0 = chunk * CHUNK;
            let b1 = (b0 + CHUNK).min(nbins);
            let width = b1 - b0;
            let n = order.at(k_of(b1 - 1) * radius).min(nmax);
            let c = coeff_count(n);
            let dk = k_of(1);
            let k0 = k_of(b0);
            let mut phasors = Mat::<Complex64>::zeros(images.len(), width);
            for (i, &d) in dists.iter().enumerate() {
                let step = Complex64::from_polar(1.0, -dk * d);
                let mut ph = Complex64::from_polar(1.0, -k0 * d);
                for j in 0..width {
                    phasors[(i, j)] = ph;
                    ph *= step;
                }
            }
            let mut coeffs = Mat::<Complex64>::zeros(c, width);
            let one = Complex64::new(1.0, 0.0);
            matmul(coeffs.as_mut(), Accum::Replace, patterns.as_ref().subrows(0, c), phasors.as_ref(), one, Par::Seq);
            for j in 0..width {
                let b = b0 + j;
                let kr = k_of(b) * radius;
                let modes = if b == 0 { mode_strength_dc(n) } else { mode_strength_seq(n, kr, geom.kind())? };
                for deg in 0..=n {
                    let g = modes[deg] * i_pow(deg) * spectrum[b];
                    for p in deg * deg..(deg + 1) * (deg + 1) {
                        coeffs[(p, j)] *= g;
                    }
                }
            }
            let mut out = Mat::<Complex64>::zeros(q, width);
            matmul(out.as_mut(), Accum::Replace, caps.as_ref().subcols(0, c), coeffs.as_ref(), one, Par::Seq);
            Ok(out)
        })
        .collect();
    let mut result = Array2::zeros((q, nbins));
    for (chunk, data) in chunks.into_iter().enumerate() {
        let data = data?;
        let b0 = chunk * CHUNK;
        for cap in 0..q {
            for j in 0..data.ncols() {
                result[(cap, b0 + j)] = data[(cap, j)];
            }
        }
    }
    Ok(result)
}

fn forward_spectrum(signal: &[f64], nfft: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    buf.truncate(nfft / 2 + 1);
    buf
}

fn inverse_real(half: &[Complex64], nfft: usize, len: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    buf[..half.len()].copy_from_slice(half);
    for b in 1..nfft.div_ceil(2) {
        buf[nfft - b] = half[b].conj();
    }
    if nfft % 2 == 0 {
        buf[nfft / 2] = Complex64::new(half[nfft / 2].re, 0.0);
    }
    buf[0] = Complex64::new(half[0].re, 0.0);
    FftPlanner::new().plan_fft_inverse(nfft).process(&mut buf);
    buf.iter().take(len).map(|z| z.re / nfft as f64).collect()
}

/// A complete scene: room, placement and one dry signal per source.
#[derive(Clone, Debug)]
pub struct Scene {
    pub room: RoomSpec,
    pub placement: ScenePlacement,
    pub signals: Vec<Vec<f64>>,
    pub sample_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub limits: ImageLimits,
    pub order: RenderOrder,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self { limits: ImageLimits::default(), order: RenderOrder::Adaptive }
    }
}

/// Renders the capsule signals of `scene`; the output has the length of the
/// longest source signal.
pub fn render_scene(scene: &Scene, geom: &ArrayGeometry, settings: RenderSettings) -> Result<MultichannelSignal> {
    scene.placement.validate(&scene.room, geom.radius())?;
    if scene.signals.len() != scene.placement.sources.len() {
        return Err(Error::config(format!(
            "{} signals for {} sources",
            scene.signals.len(),
            scene.placement.sources.len()
        )));
    }
    let len = scene.signals.iter().map(Vec::len).max().unwrap_or(0);
    if len == 0 {
        return Err(Error::config("scene signals are empty"));
    }
    let c = scene.room.speed_of_sound();
    let mut all_images = Vec::new();
    let mut max_delay: f64 = 0.0;
    for src in &scene.placement.sources {
        let images = image_sources(&scene.room, *src, scene.placement.array_center, settings.limits)?;
        for img in &images {
            max_delay = max_delay.max((img.position - scene.placement.array_center).norm() / c);
        }
        all_images.push(images);
    }
    let nfft = smooth_fft_len(len + (max_delay * scene.sample_rate).ceil() as usize + 1);
    let q = geom.capsule_count();
    let mut total = Array2::<Complex64>::zeros((q, nfft / 2 + 1));
    for (images, signal) in all_images.iter().zip(&scene.signals) {
        let spectrum = forward_spectrum(signal, nfft);
        let p = render_spectra(
            images,
            scene.placement.array_center,
            geom,
            &spectrum,
            nfft,
            scene.sample_rate,
            c,
            settings.order,
        )?;
        total += &p;
    }
    let mut samples = Array2::zeros((q, len));
    for cap in 0..q {
        let row: Vec<Complex64> = total.row(cap).to_vec();
        let x = inverse_real(&row, nfft, len);
        for (t, v) in x.into_iter().enumerate() {
            samples[(cap, t)] = v;
        }
    }
    MultichannelSignal::new(samples, scene.sample_rate)
}

/// Adds white Gaussian noise, independent per channel, at the given ratio of
/// mean signal power (over all channels) to noise power.
pub fn add_noise_at_snr(sig: &MultichannelSignal, snr_db: f64, seed: u64) -> Result<MultichannelSignal> {
    if !snr_db.is_finite() {
        return Err(Error::config(format!("SNR {snr_db} dB must be finite")));
    }
    let power = sig.mean_power();
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Numeric("cannot set an SNR on a signal with zero or non-finite power".into()));
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut out = sig.clone();
    for (q, mut row) in out.samples_mut().outer_iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(q as u64);
        for x in row.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *x += sigma * n;
        }
    }
    Ok(out)
}

/// Gaussian noise with a long-term speech-like spectrum and syllabic on/off
/// envelope.
pub fn speech_shaped_noise(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nfft = smooth_fft_len(len.max(2));
    let white: Vec<f64> = (0..nfft).map(|_| rng.sample(StandardNormal)).collect();
    let mut spec = forward_spectrum(&white, nfft);
    for (b, z) in spec.iter_mut().enumerate() {
        let f = b as f64 * sample_rate / nfft as f64;
        // flat-ish around 200-800 Hz, falling about 9 dB per octave above
        let shape = (f / (f + 150.0)) / (1.0 + (f / 800.0).powi(3)).sqrt();
        *z *= shape;
    }
    let mut x = inverse_real(&spec, nfft, len);

    let ramp = (0.02 * sample_rate) as usize;
    let mut envelope = vec![0.0; len];
    let mut t = 0;
    while t < len {
        let on = (rng.gen_range(0.15..0.5) * sample_rate) as usize;
        let level: f64 = rng.gen_range(0.5..1.0);
        for i in 0..on.min(len - t) {
            let edge = i.min(on - 1 - i);
            let w = if edge < ramp { 0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos() } else { 1.0 };
            envelope[t + i] = level * w;
        }
        t += on;
        t += (rng.gen_range(0.03..0.25) * sample_rate) as usize;
    }
    let power = x.iter().zip(&envelope).map(|(v, e)| (v * e).powi(2)).sum::<f64>() / len as f64;
    let norm = if power > 0.0 { 0.1 / power.sqrt() } else { 0.0 };
    for (v, e) in x.iter_mut().zip(&envelope) {
        *v *= e * norm;
    }
    x
}

/// Drops frames of `frame_s` seconds whose energy is more than `threshold_db`
/// below the loudest frame, and joins the rest.
pub fn trim_low_energy(signal: &[f64], sample_rate: f64, frame_s: f64, threshold_db: f64) -> Vec<f64> {
    let frame = ((frame_s * sample_rate).round() as usize).max(1);
    let energies: Vec<f64> = signal.chunks(frame).map(|c| c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64).collect();
    let peak = energies.iter().cloned().fold(0.0, f64::max);
    let limit = peak * 10f64.powf(-threshold_db.abs() / 10.0);
    signal
        .chunks(frame)
        .zip(&energies)
        .filter(|(_, &e)| e > 0.0 && e >= limit)
        .flat_map(|(c, _)| c.iter().copied())
        .collect()
}

/// Omnidirectional impulse response at `receiver`, each image rounded to the
/// nearest sample.
pub fn impulse_response(images: &[ImageSource], receiver: Vec3, speed_of_sound: f64, sample_rate: f64) -> Vec<f64> {
    let taps: Vec<(usize, f64)> = images
        .iter()
        .map(|img| {
            let d = (img.position - receiver).norm();
            ((d / speed_of_sound * sample_rate).round() as usize, img.gain / (4.0 * PI * d))
        })
        .collect();
    let len = taps.iter().map(|t| t.0).max().map_or(0, |m| m + 1);
    let mut h = vec![0.0; len];
    for (i, g) in taps {
        h[i] += g;
    }
    h
}

/// Backward-integrated energy decay in dB, normalized to 0 dB at the start.
pub fn schroeder_curve(h: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = vec![0.0; h.len()];
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        out[i] = acc;
    }
    let total = out.first().copied().unwrap_or(0.0);
    out.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

/// Decay time extrapolated to 60 dB from a least-squares fit of the Schroeder
/// curve between -5 and -25 dB.
pub fn estimate_t60(h: &[f64], sample_rate: f64) -> Option<f64> {
    let curve = schroeder_curve(h);
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .filter(|(_, &db)| (-25.0..=-5.0).contains(&db))
        .map(|(i, &db)| (i as f64 / sample_rate, db))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let md = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - md)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -60.0 / slope)
}
