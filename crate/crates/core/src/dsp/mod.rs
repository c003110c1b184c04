//! Waveform and spectrogram processing.
//!
//! Analysis uses a periodic Hann window at 50% overlap; synthesis applies
//! the same window and divides by the accumulated squared-window envelope,
//! which inverts the transform exactly wherever the envelope is nonzero.
//! Everything here runs in `f64`; the model boundary casts to `f32`.

mod wav;

pub use wav::{read_wav, write_wav};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("frame {frame} with hop {hop} does not satisfy the overlap-add condition")]
    NonCola { frame: usize, hop: usize },
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("zero-power {0} signal")]
    ZeroPower(&'static str),
    #[error("sample {index} clips at {value:.4} while writing {path}")]
    Clipping { path: String, index: usize, value: f64 },
    #[error("unsupported wav layout in {path}: {detail}")]
    UnsupportedWav { path: String, detail: String },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Mono audio at a known rate. Samples are nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self { samples, sample_rate }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Window {
    #[default]
    HannPeriodic,
}

/// Frame geometry in milliseconds plus the FFT length in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub frame_ms: u32,
    pub hop_ms: u32,
    pub fft_size: usize,
    #[serde(default)]
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { frame_ms: 32, hop_ms: 16, fft_size: 512, window: Window::HannPeriodic }
    }
}

impl StftConfig {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (sample_rate as u64 * self.frame_ms as u64 / 1000) as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (sample_rate as u64 * self.hop_ms as u64 / 1000) as usize
    }

    /// One-sided bin count, `fft_size/2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    fn check(&self, sample_rate: u32) {
        let (frame, hop) = (self.frame_len(sample_rate), self.hop_len(sample_rate));
        assert!(frame >= 2, "frame shorter than 2 samples");
        assert!(hop >= 1 && hop <= frame, "hop {hop} outside 1..={frame}");
        assert!(self.fft_size >= frame, "fft size {} below frame {frame}", self.fft_size);
        assert!(self.fft_size.is_multiple_of(2), "fft size must be even");
    }
}

/// Magnitude and phase planes, stored row-major as `F x T` with the bin
/// index as the row.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    magnitude: Vec<f64>,
    phase: Vec<f64>,
    frames: usize,
    config: StftConfig,
    sample_rate: u32,
    original_len: usize,
}

impl Spectrogram {
    /// Assemble from raw planes; lengths must be `config.bins() * frames`.
    pub fn from_parts(
        magnitude: Vec<f64>,
        phase: Vec<f64>,
        frames: usize,
        config: StftConfig,
        sample_rate: u32,
        original_len: usize,
    ) -> Result<Self> {
        let want = config.bins() * frames;
        if magnitude.len() != want || phase.len() != want {
            return Err(DspError::Mismatch(format!(
                "planes of {} and {} values for {} bins x {frames} frames",
                magnitude.len(),
                phase.len(),
                config.bins()
            )));
        }
        if magnitude.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(DspError::Mismatch("magnitude must be finite and nonnegative".into()));
        }
        Ok(Self { magnitude, phase, frames, config, sample_rate, original_len })
    }

    /// Same phase and geometry under a replacement magnitude plane.
    pub fn with_magnitude(&self, magnitude: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            magnitude,
            self.phase.clone(),
            self.frames,
            self.config,
            self.sample_rate,
            self.original_len,
        )
    }

    pub fn bins(&self) -> usize {
        self.config.bins()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn magnitude(&self) -> &[f64] {
        &self.magnitude
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Sample count of the analyzed waveform, for post-synthesis trimming.
    pub fn original_len(&self) -> usize {
        self.original_len
    }
}

fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// Map an angle from atan2's `[-pi, pi]` onto `(-pi, pi]`.
fn principal_phase(p: f64) -> f64 {
    if p == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        p
    }
}

/// Analyze a waveform.
///
/// The signal is zero-extended to one frame if shorter, then reflect-padded
/// by half a frame on both ends, so `T = 1 + floor(len/hop)` and synthesis
/// plus [`istft_trimmed`] recovers the original extent.
pub fn stft(wave: &Waveform, config: &StftConfig) -> Spectrogram {
    config.check(wave.sample_rate);
    let frame = config.frame_len(wave.sample_rate);
    let hop = config.hop_len(wave.sample_rate);
    let original_len = wave.samples.len();

    let mut x = wave.samples.clone();
    if x.len() < frame {
        x.resize(frame, 0.0);
    }
    let frames = 1 + x.len() / hop;

    let pad = frame / 2;
    let mut padded = Vec::with_capacity(x.len() + 2 * pad);
    padded.extend((0..pad).map(|i| x[pad - i]));
    padded.extend_from_slice(&x);
    padded.extend((0..pad).map(|i| x[x.len() - 2 - i]));

    let window = hann_periodic(frame);
    let n = config.fft_size;
    let bins = config.bins();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];

    let mut magnitude = vec![0.0; bins * frames];
    let mut phase = vec![0.0; bins * frames];
    for t in 0..frames {
        let seg = &padded[t * hop..t * hop + frame];
        for (b, (s, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex::new(s * w, 0.0);
        }
        for b in buf.iter_mut().skip(frame) {
            *b = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for f in 0..bins {
            magnitude[f * frames + t] = buf[f].norm();
            phase[f * frames + t] = principal_phase(buf[f].arg());
        }
    }

    Spectrogram {
        magnitude,
        phase,
        frames,
        config: *config,
        sample_rate: wave.sample_rate,
        original_len,
    }
}

/// Synthesize by weighted overlap-add.
///
/// Output length is `frame + (T-1)*hop`, covering the padded analysis
/// extent; use [`istft_trimmed`] to recover the original signal region.
pub fn istft(spec: &Spectrogram) -> Result<Waveform> {
    let config = &spec.config;
    config.check(spec.sample_rate);
    let frame = config.frame_len(spec.sample_rate);
    let hop = config.hop_len(spec.sample_rate);
    if frame != 2 * hop {
        return Err(DspError::NonCola { frame, hop });
    }

    let n = config.fft_size;
    let bins = config.bins();
    let frames = spec.frames;
    let window = hann_periodic(frame);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];

    let out_len = frame + (frames.max(1) - 1) * hop;
    let mut num = vec![0.0f64; out_len];
    let mut den = vec![0.0f64; out_len];
    for t in 0..frames {
        buf[0] = Complex::from_polar(spec.magnitude[t], spec.phase[t]);
        buf[n / 2] = Complex::from_polar(
            spec.magnitude[(bins - 1) * frames + t],
            spec.phase[(bins - 1) * frames + t],
        );
        for f in 1..bins - 1 {
            let c = Complex::from_polar(spec.magnitude[f * frames + t], spec.phase[f * frames + t]);
            buf[f] = c;
            buf[n - f] = c.conj();
        }
        ifft.process(&mut buf);
        for j in 0..frame {
            let sample = buf[j].re / n as f64;
            num[t * hop + j] += sample * window[j];
            den[t * hop + j] += window[j] * window[j];
        }
    }

    let samples = num.iter().zip(&den).map(|(s, d)| if *d > 1e-12 { s / d } else { 0.0 }).collect();
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Synthesize and cut back to the originally analyzed sample range.
pub fn istft_trimmed(spec: &Spectrogram) -> Result<Waveform> {
    let full = istft(spec)?;
    let frame = spec.config.frame_len(spec.sample_rate);
    let lead = frame / 2;
    if lead + spec.original_len > full.samples.len() {
        return Err(DspError::Mismatch(format!(
            "synthesized {} samples cannot cover original {} after removing {lead} lead",
            full.samples.len(),
            spec.original_len
        )));
    }
    let samples = full.samples[lead..lead + spec.original_len].to_vec();
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Invert a replacement magnitude plane under the reference phase.
pub fn reconstruct_with_noisy_phase(enhanced_mag: &[f64], noisy: &Spectrogram) -> Result<Waveform> {
    istft(&noisy.with_magnitude(enhanced_mag.to_vec())?)
}

/// Scale `noise` so the clean-to-noise power ratio hits `snr_db`, then add.
///
/// Noise shorter than the clean signal wraps around; longer noise is
/// cropped. Both effects start at offset zero for reproducibility.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    if clean.sample_rate != noise.sample_rate {
        return Err(DspError::Mismatch(format!(
            "sample rates {} vs {}",
            clean.sample_rate, noise.sample_rate
        )));
    }
    let n = clean.samples.len();
    let p_clean: f64 = clean.samples.iter().map(|s| s * s).sum();
    if n == 0 || p_clean == 0.0 {
        return Err(DspError::ZeroPower("clean"));
    }
    if noise.samples.is_empty() {
        return Err(DspError::ZeroPower("noise"));
    }
    let matched: Vec<f64> = noise.samples.iter().copied().cycle().take(n).collect();
    let p_noise: f64 = matched.iter().map(|s| s * s).sum();
    if p_noise == 0.0 {
        return Err(DspError::ZeroPower("noise"));
    }
    let alpha = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean.samples.iter().zip(&matched).map(|(c, m)| c + alpha * m).collect();
    Ok(Waveform::new(samples, clean.sample_rate))
}

/// `10 log10` of reference power over residual power.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> f64 {
    assert_eq!(reference.len(), estimate.len(), "length mismatch in snr_db");
    let p_ref: f64 = reference.iter().map(|s| s * s).sum();
    let p_err: f64 = reference.iter().zip(estimate).map(|(r, e)| (r - e) * (r - e)).sum();
    if p_err == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (p_ref / p_err).log10()
}

/// Offset inside the log compressor, `log(mag + OFFSET)`.
pub const LOG_OFFSET: f64 = 1e-5;

pub fn log_compress(mag: f64) -> f64 {
    (mag + LOG_OFFSET).ln()
}

pub fn log_expand(log_mag: f64) -> f64 {
    (log_mag.exp() - LOG_OFFSET).max(0.0)
}

/// Scalar standardization of log-magnitude features.
///
/// One mean/std pair per corpus, stored in the manifest and checkpoint so
/// inference inverts training-time scaling exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: f64,
    pub std: f64,
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    /// Fit mean and standard deviation over a value stream.
    pub fn fit(values: impl Iterator<Item = f64>) -> Self {
        let mut acc = ScalerAccumulator::default();
        acc.extend(values);
        acc.finish()
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    /// Inverse scaling; the input is clamped to four standard deviations
    /// so unbounded model outputs cannot explode through the exponential.
    pub fn denormalize(&self, x: f64) -> f64 {
        x.clamp(-4.0, 4.0) * self.std + self.mean
    }
}

/// Running moments for fitting a [`FeatureScaler`] across many sources
/// without holding all values at once. Merge order changes nothing
/// observable beyond float rounding, so merge in a fixed order when
/// bit-reproducibility matters.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalerAccumulator {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl ScalerAccumulator {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }

    pub fn extend(&mut self, values: impl Iterator<Item = f64>) {
        for v in values {
            self.push(v);
        }
    }

    pub fn merge(&mut self, other: &ScalerAccumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Empty input falls back to the identity scaler; the standard
    /// deviation is floored at 1e-6 to keep normalization finite.
    pub fn finish(&self) -> FeatureScaler {
        if self.n == 0 {
            return FeatureScaler::identity();
        }
        let mean = self.sum / self.n as f64;
        let var = (self.sumsq / self.n as f64 - mean * mean).max(0.0);
        FeatureScaler { mean, std: var.sqrt().max(1e-6) }
    }
}
