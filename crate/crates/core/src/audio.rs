//! WAV ingestion and export. Channel `q` of a file maps to capsule `q`.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::stft::MultichannelSignal;

/// Reads 16/24/32-bit integer or 32-bit float PCM, scaled to `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<MultichannelSignal> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => {
            reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?
        }
        (SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(Error::config(format!("unsupported WAV sample format {fmt:?} with {bits} bits")));
        }
    };
    let frames = interleaved.len() / channels;
    if frames == 0 {
        return Err(Error::config(format!("{} contains no samples", path.display())));
    }
    let samples = Array2::from_shape_fn((channels, frames), |(q, t)| interleaved[t * channels + q]);
    MultichannelSignal::new(samples, spec.sample_rate as f64)
}

/// Writes 32-bit float PCM.
pub fn write_wav(path: &Path, sig: &MultichannelSignal) -> Result<()> {
    let rate = sig.sample_rate();
    if rate.fract() != 0.0 || rate > u32::MAX as f64 {
        return Err(Error::config(format!("sample rate {rate} Hz cannot be stored in a WAV header")));
    }
    let spec = WavSpec {
        channels: sig.channel_count() as u16,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec)?;
    let s = sig.samples();
    for t in 0..sig.len() {
        for q in 0..sig.channel_count() {
            writer.write_sample(s[(q, t)] as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}
