//! 16-bit mono PCM WAV files at 16 kHz; anything else is rejected.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{DspError, Result, Waveform};

const REQUIRED_RATE: u32 = 16_000;

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != SampleFormat::Int
        || spec.sample_rate != REQUIRED_RATE
    {
        return Err(DspError::UnsupportedWav {
            path: path.display().to_string(),
            detail: format!(
                "need 16-bit mono PCM at {REQUIRED_RATE} Hz, found {} ch / {} bit / {} Hz",
                spec.channels, spec.bits_per_sample, spec.sample_rate
            ),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Write 16-bit PCM. A sample that would quantize outside `i16` is a
/// clipping error, not something to saturate silently.
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for (index, &s) in wave.samples.iter().enumerate() {
        let q = (s * 32768.0).round();
        if !(-32768.0..=32767.0).contains(&q) {
            return Err(DspError::Clipping { path: path.display().to_string(), index, value: s });
        }
        writer.write_sample(q as i16)?;
    }
    writer.finalize()?;
    Ok(())
}
