//! Multichannel short-time Fourier analysis.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// `Q x T` real samples at a common sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct MultichannelSignal {
    samples: Array2<f64>,
    sample_rate: f64,
}

impl MultichannelSignal {
    pub fn new(samples: Array2<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::config(format!("sample rate {sample_rate} Hz must be positive")));
        }
        if samples.nrows() == 0 {
            return Err(Error::config("signal has no channels"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn from_channels(channels: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        let q = channels.len();
        let t = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != t) {
            return Err(Error::config("channels have unequal lengths"));
        }
        let flat: Vec<f64> = channels.into_iter().flatten().collect();
        let samples = Array2::from_shape_vec((q, t), flat).expect("shape checked");
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut Array2<f64> {
        &mut self.samples
    }

    pub fn channel_count(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Mean power per sample, averaged over channels.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }
}

/// Framing parameters of the analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StftParams {
    pub window_size: usize,
    pub overlap: f64,
    pub fft_size: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        Self { window_size: 512, overlap: 0.5, fft_size: 512 }
    }
}

impl StftParams {
    pub fn hop(&self) -> usize {
        (self.window_size as f64 * (1.0 - self.overlap)).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.window_size > self.fft_size {
            return Err(Error::config(format!(
                "window size {} must be in 1..={} (fft size)",
                self.window_size, self.fft_size
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::config(format!("overlap {} must be in [0, 1)", self.overlap)));
        }
        if self.hop() == 0 {
            return Err(Error::config("overlap leaves a zero hop"));
        }
        Ok(())
    }
}

/// Periodic Hamming window `0.54 - 0.46 cos(2 pi n / M)`.
pub fn hamming_periodic(size: usize) -> Vec<f64> {
    (0..size).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / size as f64).cos()).collect()
}

/// One-sided spectra, `Q x F x frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    bins: Array3<Complex64>,
    bin_freqs: Vec<f64>,
    first_bin: usize,
    params: StftParams,
    sample_rate: f64,
}

impl Spectrogram {
    pub fn bins(&self) -> &Array3<Complex64> {
        &self.bins
    }

    pub fn bin_freqs(&self) -> &[f64] {
        &self.bin_freqs
    }

    /// FFT index of the first retained bin.
    pub fn first_bin(&self) -> usize {
        self.first_bin
    }

    pub fn channel_count(&self) -> usize {
        self.bins.len_of(Axis(0))
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len_of(Axis(1))
    }

    pub fn frame_count(&self) -> usize {
        self.bins.len_of(Axis(2))
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn hop(&self) -> usize {
        self.params.hop()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn bin_width(&self) -> f64 {
        self.sample_rate / self.params.fft_size as f64
    }

    /// Start time of frame `t`, in seconds.
    pub fn frame_time(&self, t: usize) -> f64 {
        (t * self.hop()) as f64 / self.sample_rate
    }

    /// Keeps bins with `f_lo <= freq <= f_hi`, in order.
    pub fn select_band(&self, f_lo: f64, f_hi: f64) -> Result<Spectrogram> {
        let nyquist = self.sample_rate / 2.0;
        if !(f_lo < f_hi) || f_hi > nyquist + 1e-9 || f_lo < 0.0 {
            return Err(Error::config(format!(
                "band [{f_lo}, {f_hi}] Hz must satisfy 0 <= lo < hi <= {nyquist}"
            )));
        }
        let keep: Vec<usize> = self
            .bin_freqs
            .iter()
            .enumerate()
            .filter(|(_, &f)| f >= f_lo - 1e-9 && f <= f_hi + 1e-9)
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::config(format!("band [{f_lo}, {f_hi}] Hz contains no bins")));
        }
        let bins = self.bins.select(Axis(1), &keep);
        Ok(Spectrogram {
            bins,
            bin_freqs: keep.iter().map(|&i| self.bin_freqs[i]).collect(),
            first_bin: self.first_bin + keep[0],
            params: self.params,
            sample_rate: self.sample_rate,
        })
    }
}

pub fn stft_forward(sig: &MultichannelSignal, params: StftParams) -> Result<Spectrogram> {
    params.validate()?;
    let hop = params.hop();
    if sig.len() < params.window_size {
        return Err(Error::config(format!(
            "signal of {} samples is shorter than one {}-sample window",
            sig.len(),
            params.window_size
        )));
    }
    let frames = (sig.len() - params.window_size) / hop + 1;
    let nbins = params.fft_size / 2 + 1;
    let window = hamming_periodic(params.window_size);
    let fft = FftPlanner::new().plan_fft_forward(params.fft_size);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); params.fft_size];
    let mut bins = Array3::zeros((sig.channel_count(), nbins, frames));
    for (q, channel) in sig.samples().outer_iter().enumerate() {
        for t in 0..frames {
            let start = t * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < params.window_size {
                    Complex64::new(channel[start + i] * window[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for f in 0..nbins {
                bins[(q, f, t)] = buf[f];
            }
        }
    }
    let bin_freqs = (0..nbins).map(|f| f as f64 * sig.sample_rate() / params.fft_size as f64).collect();
    Ok(Spectrogram { bins, bin_freqs, first_bin: 0, params, sample_rate: sig.sample_rate() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tone(freq: f64, fs: f64, len: usize, amp: f64) -> MultichannelSignal {
        let ch: Vec<f64> = (0..len).map(|n| amp * (2.0 * PI * freq * n as f64 / fs).cos()).collect();
        MultichannelSignal::from_channels(vec![ch], fs).unwrap()
    }

    #[test]
    fn paper_framing_arithmetic() {
        let p = StftParams::default();
        assert_eq!(p.hop(), 256);
        let sig = MultichannelSignal::from_channels(vec![vec![0.0; 2048]], 8000.0).unwrap();
        let s = stft_forward(&sig, p).unwrap();
        assert_eq!(s.bin_count(), 257);
        assert_abs_diff_eq!(s.bin_width(), 15.625);
        assert_eq!(s.frame_count(), (2048 - 512) / 256 + 1);
        assert!(s.bins().iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn tone_at_bin_center() {
        // bin 100 at 8 kHz / 512 points
        let sig = tone(100.0 * 15.625, 8000.0, 4096, 0.7);
        let s = stft_forward(&sig, StftParams::default()).unwrap();
        // coherent gain of the periodic Hamming window is 0.54 * M; a real
        // cosine puts half its amplitude in the positive-frequency bin
        let expected = 0.7 * 0.54 * 512.0 / 2.0;
        for t in 0..s.frame_count() {
            let mags: Vec<f64> = (0..s.bin_count()).map(|f| s.bins()[(0, f, t)].norm()).collect();
            let peak = mags.iter().cloned().enumerate().fold((0, 0.0), |a, (i, m)| if m > a.1 { (i, m) } else { a });
            assert_eq!(peak.0, 100);
            assert_abs_diff_eq!(peak.1, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn band_selection() {
        let sig = MultichannelSignal::from_channels(vec![vec![0.1; 1024]], 8000.0).unwrap();
        let s = stft_forward(&sig, StftParams::default()).unwrap();
        let b = s.select_band(1000.0, 2500.0).unwrap();
        assert_eq!(b.bin_count(), 97);
        assert_eq!(b.first_bin(), 64);
        assert_eq!(b.bin_freqs()[96], 2500.0);
        let all = s.select_band(0.0, 4000.0).unwrap();
        assert_eq!(all, s);
        assert!(s.select_band(3000.0, 2000.0).is_err());
        assert!(s.select_band(1000.0, 5000.0).is_err());
        assert!(s.select_band(1001.0, 1010.0).is_err());
    }

    #[test]
    fn short_signal_rejected() {
        let sig = MultichannelSignal::from_channels(vec![vec![0.0; 100]], 8000.0).unwrap();
        assert!(matches!(stft_forward(&sig, StftParams::default()), Err(Error::Config(_))));
        let bad = StftParams { window_size: 600, overlap: 0.5, fft_size: 512 };
        assert!(bad.validate().is_err());
        let bad = StftParams { window_size: 512, overlap: 1.0, fft_size: 512 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parseval_per_frame() {
        let ch: Vec<f64> = (0..512).map(|n| ((n * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let sig = MultichannelSignal::from_channels(vec![ch.clone()], 8000.0).unwrap();
        let p = StftParams::default();
        let s = stft_forward(&sig, p).unwrap();
        let w = hamming_periodic(512);
        let time: f64 = ch.iter().zip(&w).map(|(x, w)| (x * w).powi(2)).sum();
        // rebuild the two-sided energy from the one-sided spectrum
        let mut freq = 0.0;
        for f in 0..s.bin_count() {
            let e = s.bins()[(0, f, 0)].norm_sqr();
            freq += if f == 0 || f == 256 { e } else { 2.0 * e };
        }
        assert!((freq / 512.0 - time).abs() < 1e-9 * time);
    }
}
