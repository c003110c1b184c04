//! Objective evaluation: segmental SNR, log-likelihood ratio, and
//! weighted spectral slope distance computed natively, plus the standard
//! composite quality regressions (CSIG, CBAK, COVL) on top of an
//! externally supplied PESQ score.
//!
//! PESQ itself is never reimplemented here. A [`PesqSource`] either runs
//! an external command per utterance pair, looks scores up in a
//! precomputed table, or yields nothing, in which case composites are
//! omitted rather than defaulted.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{write_wav, DspError, Waveform};

/// Analysis frame of 32 ms with a 16 ms hop, expressed in samples.
fn frame_geometry(sample_rate: u32) -> (usize, usize) {
    let frame = (sample_rate as usize * 32) / 1000;
    (frame, frame / 2)
}

/// LPC order for the log-likelihood ratio, chosen for 16 kHz speech.
const LPC_ORDER: usize = 16;
/// Number of critical bands for the spectral slope distance.
const WSS_BANDS: usize = 25;
/// Per-frame segmental SNR clamp, in dB.
const SEG_SNR_FLOOR: f64 = -10.0;
const SEG_SNR_CEIL: f64 = 35.0;
/// Frames whose energy sits more than this far below the loudest frame
/// are treated as silence and excluded from the segmental SNR mean.
const SEG_SNR_GATE_DB: f64 = -40.0;
/// Valid range of an externally supplied PESQ score.
pub const PESQ_RANGE: (f64, f64) = (-0.5, 4.5);
/// Range the composite regressions are clamped to.
pub const COMPOSITE_RANGE: (f64, f64) = (1.0, 5.0);

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("signal overlap of {samples} samples is shorter than one {frame}-sample frame")]
    TooShort { samples: usize, frame: usize },
    #[error("no analysis frames cleared the energy gate")]
    Silent,
    #[error("sample rates differ: {clean} vs {processed}")]
    RateMismatch { clean: u32, processed: u32 },
    #[error("pesq score {0} outside [-0.5, 4.5]")]
    PesqRange(f64),
    #[error("pesq provider: {0}")]
    Pesq(String),
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Trimmed-mean frame statistic with its censoring counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameAggregate {
    pub value: f64,
    /// Frames entering the trimmed mean.
    pub frames_used: usize,
    /// Degenerate frames dropped before aggregation.
    pub frames_skipped: usize,
}

/// Aligned clean/processed frame pairs.
type FramePairs<'a> = Vec<(&'a [f64], &'a [f64])>;

fn common_frames<'a>(
    clean: &'a Waveform,
    processed: &'a Waveform,
) -> Result<(FramePairs<'a>, usize)> {
    if clean.sample_rate != processed.sample_rate {
        return Err(MetricsError::RateMismatch {
            clean: clean.sample_rate,
            processed: processed.sample_rate,
        });
    }
    let (frame, hop) = frame_geometry(clean.sample_rate);
    let len = clean.samples.len().min(processed.samples.len());
    if len < frame {
        return Err(MetricsError::TooShort { samples: len, frame });
    }
    let mut pairs = Vec::with_capacity(1 + (len - frame) / hop);
    let mut start = 0;
    while start + frame <= len {
        pairs
            .push((&clean.samples[start..start + frame], &processed.samples[start..start + frame]));
        start += hop;
    }
    Ok((pairs, frame))
}

/// Mean of the smallest 95% of values: the largest `n/20` are dropped as
/// outliers, matching the convention of the composite-metric literature.
fn trimmed_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let keep = values.len() - values.len() / 20;
    Some(values[..keep].iter().sum::<f64>() / keep as f64)
}

/// Segmental SNR in dB: the mean over energy-gated frames of the
/// per-frame ratio `10 log10(sum s^2 / sum (s - s_hat)^2)`, each frame
/// clamped to [-10, 35] dB. A perfect reconstruction therefore scores
/// exactly 35.
pub fn seg_snr(clean: &Waveform, processed: &Waveform) -> Result<f64> {
    let (pairs, _) = common_frames(clean, processed)?;
    let energies: Vec<f64> = pairs.iter().map(|(c, _)| c.iter().map(|s| s * s).sum()).collect();
    let loudest = energies.iter().fold(0.0f64, |a, &e| a.max(e));
    if loudest <= 0.0 {
        return Err(MetricsError::Silent);
    }
    let gate = loudest * 10f64.powf(SEG_SNR_GATE_DB / 10.0);
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((c, p), &sig) in pairs.iter().zip(&energies) {
        if sig <= gate {
            continue;
        }
        let err: f64 = c.iter().zip(*p).map(|(s, y)| (s - y) * (s - y)).sum();
        let snr = if err <= 0.0 { f64::INFINITY } else { 10.0 * (sig / err).log10() };
        sum += snr.clamp(SEG_SNR_FLOOR, SEG_SNR_CEIL);
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::Silent);
    }
    Ok(sum / n as f64)
}

fn metric_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn autocorrelation(frame: &[f64], order: usize) -> Vec<f64> {
    (0..=order).map(|lag| frame.iter().zip(&frame[lag..]).map(|(a, b)| a * b).sum()).collect()
}

/// Levinson-Durbin recursion; `r` holds lags 0..=p. Returns the monic
/// coefficient vector `[1, a_1, .., a_p]`, or None when the
/// autocorrelation is degenerate (silent or perfectly predictable frame).
fn levinson(r: &[f64]) -> Option<Vec<f64>> {
    let p = r.len() - 1;
    if r[0] <= 0.0 {
        return None;
    }
    let mut a = vec![0.0; p + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=p {
        let acc: f64 = r[i] + (1..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = -acc / err;
        if !k.is_finite() {
            return None;
        }
        let prev = a.clone();
        a[i] = k;
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        err *= 1.0 - k * k;
        if err <= 0.0 || !err.is_finite() {
            return None;
        }
    }
    Some(a)
}

/// Quadratic form `a R a^T` with `R` the Toeplitz matrix of lags `r`.
fn toeplitz_quadratic(a: &[f64], r: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            total += a[i] * a[j] * r[i.abs_diff(j)];
        }
    }
    total
}

fn llr_frame(clean: &[f64], processed: &[f64], window: &[f64]) -> Option<f64> {
    let wc: Vec<f64> = clean.iter().zip(window).map(|(s, w)| s * w).collect();
    let wp: Vec<f64> = processed.iter().zip(window).map(|(s, w)| s * w).collect();
    let rc = autocorrelation(&wc, LPC_ORDER);
    let rp = autocorrelation(&wp, LPC_ORDER);
    let ac = levinson(&rc)?;
    let ap = levinson(&rp)?;
    let num = toeplitz_quadratic(&ap, &rc);
    let den = toeplitz_quadratic(&ac, &rc);
    if den <= 0.0 || num <= 0.0 {
        return None;
    }
    Some((num / den).ln())
}

/// Log-likelihood ratio between the LPC fits of each frame, judged under
/// the clean signal's autocorrelation. Aggregated as the mean of the
/// smallest 95% of frame values; degenerate frames are skipped and
/// counted.
pub fn llr(clean: &Waveform, processed: &Waveform) -> Result<FrameAggregate> {
    let (pairs, frame) = common_frames(clean, processed)?;
    let window = metric_window(frame);
    let mut values = Vec::with_capacity(pairs.len());
    let mut skipped = 0usize;
    for (c, p) in &pairs {
        match llr_frame(c, p, &window) {
            Some(v) => values.push(v),
            None => skipped += 1,
        }
    }
    let value = trimmed_mean(values.clone()).ok_or(MetricsError::Silent)?;
    Ok(FrameAggregate {
        value,
        frames_used: values.len() - values.len() / 20,
        frames_skipped: skipped,
    })
}

/// Equal-width critical-band edges on the Bark axis from 0 Hz to the
/// Nyquist frequency (capped at 8 kHz), inverted numerically.
fn band_edges_hz(sample_rate: u32) -> Vec<f64> {
    fn bark(f: f64) -> f64 {
        13.0 * (0.00076 * f).atan() + 3.5 * ((f / 7500.0) * (f / 7500.0)).atan()
    }
    let top_hz = (sample_rate as f64 / 2.0).min(8000.0);
    let top_bark = bark(top_hz);
    (0..=WSS_BANDS)
        .map(|k| {
            let target = top_bark * k as f64 / WSS_BANDS as f64;
            let (mut lo, mut hi) = (0.0, top_hz);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if bark(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Sum squared spectral magnitudes into critical-band energies in dB.
fn band_energies_db(
    spectrum: &[Complex<f64>],
    edges: &[f64],
    sample_rate: u32,
    fft_len: usize,
) -> Vec<f64> {
    let df = sample_rate as f64 / fft_len as f64;
    let n_bins = fft_len / 2 + 1;
    let mut energies = vec![0.0f64; edges.len() - 1];
    for (bin, s) in spectrum.iter().take(n_bins).enumerate() {
        let f = bin as f64 * df;
        if f > *edges.last().expect("edges nonempty") {
            break;
        }
        let band = edges[1..].partition_point(|&e| e < f).min(energies.len() - 1);
        energies[band] += s.norm_sqr();
    }
    energies.iter().map(|&e| 10.0 * (e + 1e-10).log10()).collect()
}

/// Klatt-style weight for one band: proximity to the global maximum and
/// to the nearest spectral peak, with K = 20 and K_loc = 1.
fn wss_weights(bands_db: &[f64]) -> Vec<f64> {
    let n = bands_db.len();
    let slopes: Vec<f64> = (0..n - 1).map(|i| bands_db[i + 1] - bands_db[i]).collect();
    let global_max = bands_db.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    (0..n - 1)
        .map(|i| {
            let peak = if slopes[i] > 0.0 {
                let mut j = i;
                while j < n - 1 && slopes[j] > 0.0 {
                    j += 1;
                }
                bands_db[j]
            } else {
                let mut j = i;
                while j > 0 && slopes[j] <= 0.0 {
                    j -= 1;
                }
                bands_db[j + 1]
            };
            let w_max = 20.0 / (20.0 + global_max - bands_db[i]);
            let w_loc = 1.0 / (1.0 + peak - bands_db[i]);
            w_max * w_loc
        })
        .collect()
}

/// Weighted squared slope distance between two band spectra in dB.
/// Weights are averaged between the clean and processed spectra.
fn wss_frame_from_bands(clean_db: &[f64], processed_db: &[f64]) -> f64 {
    debug_assert_eq!(clean_db.len(), processed_db.len());
    let wc = wss_weights(clean_db);
    let wp = wss_weights(processed_db);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..clean_db.len() - 1 {
        let sc = clean_db[i + 1] - clean_db[i];
        let sp = processed_db[i + 1] - processed_db[i];
        let w = 0.5 * (wc[i] + wp[i]);
        num += w * (sc - sp) * (sc - sp);
        den += w;
    }
    num / den
}

/// Weighted spectral slope distance over Hann-windowed frames and 25
/// critical bands covering 0 to 8 kHz. Aggregated like [`llr`]: mean of
/// the smallest 95% of frames, fully silent frames skipped and counted.
pub fn wss(clean: &Waveform, processed: &Waveform) -> Result<FrameAggregate> {
    let (pairs, frame) = common_frames(clean, processed)?;
    let window = metric_window(frame);
    let fft_len = frame.next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(fft_len);
    let edges = band_edges_hz(clean.sample_rate);
    let spectrum = |samples: &[f64]| -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
        for (b, (s, w)) in buf.iter_mut().zip(samples.iter().zip(&window)) {
            b.re = s * w;
        }
        fft.process(&mut buf);
        band_energies_db(&buf, &edges, clean.sample_rate, fft_len)
    };
    let mut values = Vec::with_capacity(pairs.len());
    let mut skipped = 0usize;
    for (c, p) in &pairs {
        let silent = |s: &[f64]| s.iter().all(|&v| v == 0.0);
        if silent(c) || silent(p) {
            skipped += 1;
            continue;
        }
        values.push(wss_frame_from_bands(&spectrum(c), &spectrum(p)));
    }
    let value = trimmed_mean(values.clone()).ok_or(MetricsError::Silent)?;
    Ok(FrameAggregate {
        value,
        frames_used: values.len() - values.len() / 20,
        frames_skipped: skipped,
    })
}

/// Linear regression coefficients mapping (LLR, WSS, segSNR, PESQ) onto
/// the composite MOS predictions. The defaults are the standard published
/// fit; they ship as configuration so reports document their provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositeCoefficients {
    pub csig_base: f64,
    pub csig_llr: f64,
    pub csig_pesq: f64,
    pub csig_wss: f64,
    pub cbak_base: f64,
    pub cbak_pesq: f64,
    pub cbak_wss: f64,
    pub cbak_seg_snr: f64,
    pub covl_base: f64,
    pub covl_pesq: f64,
    pub covl_llr: f64,
    pub covl_wss: f64,
}

impl Default for CompositeCoefficients {
    fn default() -> Self {
        Self {
            csig_base: 3.093,
            csig_llr: -1.029,
            csig_pesq: 0.603,
            csig_wss: -0.009,
            cbak_base: 1.634,
            cbak_pesq: 0.478,
            cbak_wss: -0.007,
            cbak_seg_snr: 0.063,
            covl_base: 1.594,
            covl_pesq: 0.805,
            covl_llr: -0.512,
            covl_wss: -0.007,
        }
    }
}

impl CompositeCoefficients {
    /// (CSIG, CBAK, COVL), each clamped to [1, 5].
    pub fn compose(&self, llr: f64, wss: f64, seg_snr: f64, pesq: f64) -> (f64, f64, f64) {
        let clamp = |v: f64| v.clamp(COMPOSITE_RANGE.0, COMPOSITE_RANGE.1);
        let csig =
            self.csig_base + self.csig_llr * llr + self.csig_pesq * pesq + self.csig_wss * wss;
        let cbak = self.cbak_base
            + self.cbak_pesq * pesq
            + self.cbak_wss * wss
            + self.cbak_seg_snr * seg_snr;
        let covl =
            self.covl_base + self.covl_pesq * pesq + self.covl_llr * llr + self.covl_wss * wss;
        (clamp(csig), clamp(cbak), clamp(covl))
    }
}

/// Composite scores under the default coefficients.
pub fn composite_scores(llr: f64, wss: f64, seg_snr: f64, pesq: f64) -> (f64, f64, f64) {
    CompositeCoefficients::default().compose(llr, wss, seg_snr, pesq)
}

/// All scores of one clean/processed comparison. Composites exist only
/// when a PESQ score was supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub seg_snr: f64,
    pub llr: f64,
    pub wss: f64,
    pub pesq: Option<f64>,
    pub csig: Option<f64>,
    pub cbak: Option<f64>,
    pub covl: Option<f64>,
    pub llr_frames_skipped: usize,
    pub wss_frames_skipped: usize,
}

/// Score one comparison, attaching composites when `pesq` is given.
pub fn evaluate_pair(
    clean: &Waveform,
    processed: &Waveform,
    pesq: Option<f64>,
    coefficients: &CompositeCoefficients,
) -> Result<MetricReport> {
    if let Some(p) = pesq {
        if !(PESQ_RANGE.0..=PESQ_RANGE.1).contains(&p) {
            return Err(MetricsError::PesqRange(p));
        }
    }
    let seg = seg_snr(clean, processed)?;
    let llr_agg = llr(clean, processed)?;
    let wss_agg = wss(clean, processed)?;
    let (csig, cbak, covl) = match pesq {
        Some(p) => {
            let (a, b, c) = coefficients.compose(llr_agg.value, wss_agg.value, seg, p);
            (Some(a), Some(b), Some(c))
        }
        None => (None, None, None),
    };
    Ok(MetricReport {
        seg_snr: seg,
        llr: llr_agg.value,
        wss: wss_agg.value,
        pesq,
        csig,
        cbak,
        covl,
        llr_frames_skipped: llr_agg.frames_skipped,
        wss_frames_skipped: wss_agg.frames_skipped,
    })
}

static PESQ_TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Where PESQ scores come from. The algorithm itself is out of scope; an
/// external tool or a precomputed table supplies scores, and `None`
/// leaves the composites out of every report.
#[derive(Debug, Clone)]
pub enum PesqSource {
    None,
    /// External program invoked as `<cmd> <clean.wav> <degraded.wav>`,
    /// expected to print one decimal score on stdout.
    Command(String),
    /// Precomputed scores keyed by (utterance id, system).
    Table(BTreeMap<(String, String), f64>),
}

impl PesqSource {
    pub fn is_none(&self) -> bool {
        matches!(self, PesqSource::None)
    }

    /// Load a `id,system,pesq` CSV (header required) into a table source.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| MetricsError::Io { path: path.into(), source: e })?;
        let mut table = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(MetricsError::Pesq(format!(
                    "{}:{}: expected id,system,pesq",
                    path.display(),
                    lineno + 1
                )));
            }
            let score: f64 = fields[2].trim().parse().map_err(|_| {
                MetricsError::Pesq(format!("{}:{}: unparseable score", path.display(), lineno + 1))
            })?;
            table.insert((fields[0].trim().to_string(), fields[1].trim().to_string()), score);
        }
        Ok(PesqSource::Table(table))
    }

    /// Score for one comparison; `Ok(None)` means "not provided".
    fn score(
        &self,
        id: &str,
        system: &str,
        clean: &Waveform,
        degraded: &Waveform,
    ) -> Result<Option<f64>> {
        match self {
            PesqSource::None => Ok(None),
            PesqSource::Table(t) => Ok(t.get(&(id.to_string(), system.to_string())).copied()),
            PesqSource::Command(cmd) => run_pesq_command(cmd, clean, degraded).map(Some),
        }
    }
}

fn run_pesq_command(cmd: &str, clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    let tag = format!(
        "nitcg-pesq-{}-{}",
        std::process::id(),
        PESQ_TMP_COUNTER.fetch_add(1, Ordering::SeqCst)
    );
    let dir = std::env::temp_dir();
    let clean_path = dir.join(format!("{tag}-ref.wav"));
    let degraded_path = dir.join(format!("{tag}-deg.wav"));
    write_wav(&clean_path, clean)?;
    write_wav(&degraded_path, degraded)?;
    let output = std::process::Command::new(cmd).arg(&clean_path).arg(&degraded_path).output();
    let _ = fs::remove_file(&clean_path);
    let _ = fs::remove_file(&degraded_path);
    let output = output.map_err(|e| MetricsError::Pesq(format!("{cmd}: {e}")))?;
    if !output.status.success() {
        return Err(MetricsError::Pesq(format!("{cmd} exited with {}", output.status)));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    let score: f64 = text
        .split_whitespace()
        .last()
        .ok_or_else(|| MetricsError::Pesq(format!("{cmd} printed no score")))?
        .parse()
        .map_err(|_| MetricsError::Pesq(format!("{cmd} printed an unparseable score")))?;
    if !(PESQ_RANGE.0..=PESQ_RANGE.1).contains(&score) {
        return Err(MetricsError::PesqRange(score));
    }
    Ok(score)
}

/// The reference system names used in reports.
pub const SYSTEM_NOISY: &str = "noisy";
pub const SYSTEM_ENHANCED: &str = "enhanced";

/// One utterance's aligned signals for evaluation.
#[derive(Debug, Clone)]
pub struct EvalUtterance {
    pub id: String,
    pub noise: String,
    pub snr_db: f64,
    pub clean: Waveform,
    pub noisy: Waveform,
    pub enhanced: Waveform,
}

/// One scored comparison, or the reason it was skipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub system: String,
    pub noise: String,
    pub snr_db: f64,
    pub report: Option<MetricReport>,
    pub note: Option<String>,
}

/// Mean scores over a group of rows. Composite and PESQ means cover only
/// the rows that carry them; `n_pesq` records how many did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub n: usize,
    pub seg_snr: f64,
    pub llr: f64,
    pub wss: f64,
    pub n_pesq: usize,
    pub pesq: Option<f64>,
    pub csig: Option<f64>,
    pub cbak: Option<f64>,
    pub covl: Option<f64>,
}

fn aggregate(rows: &[&EvalRow]) -> Option<AggregateScores> {
    let reports: Vec<&MetricReport> = rows.iter().filter_map(|r| r.report.as_ref()).collect();
    if reports.is_empty() {
        return None;
    }
    let n = reports.len();
    let mean =
        |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n as f64;
    let with_pesq: Vec<&&MetricReport> = reports.iter().filter(|r| r.pesq.is_some()).collect();
    let n_pesq = with_pesq.len();
    let opt_mean = |f: &dyn Fn(&MetricReport) -> Option<f64>| {
        if n_pesq == 0 {
            None
        } else {
            Some(
                with_pesq.iter().map(|r| f(r).expect("pesq rows carry composites")).sum::<f64>()
                    / n_pesq as f64,
            )
        }
    };
    Some(AggregateScores {
        n,
        seg_snr: mean(&|r| r.seg_snr),
        llr: mean(&|r| r.llr),
        wss: mean(&|r| r.wss),
        n_pesq,
        pesq: opt_mean(&|r| r.pesq),
        csig: opt_mean(&|r| r.csig),
        cbak: opt_mean(&|r| r.cbak),
        covl: opt_mean(&|r| r.covl),
    })
}

/// Per-condition aggregate: one system evaluated at one noise and SNR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionRow {
    pub system: String,
    pub noise: String,
    pub snr_db: f64,
    pub scores: AggregateScores,
}

/// Full evaluation output: per-utterance rows, per-condition means, and
/// per-system overall means, plus the coefficients that produced the
/// composites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub coefficients: CompositeCoefficients,
    pub rows: Vec<EvalRow>,
    pub conditions: Vec<ConditionRow>,
    pub overall: Vec<(String, AggregateScores)>,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub coefficients: CompositeCoefficients,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { coefficients: CompositeCoefficients::default(), threads: 1 }
    }
}

fn system_rank(system: &str) -> (usize, &str) {
    match system {
        SYSTEM_NOISY => (0, system),
        SYSTEM_ENHANCED => (1, system),
        other => (2, other),
    }
}

fn eval_one(
    utt: &EvalUtterance,
    system: &str,
    processed: &Waveform,
    pesq: &PesqSource,
    coeffs: &CompositeCoefficients,
) -> EvalRow {
    let base = EvalRow {
        id: utt.id.clone(),
        system: system.to_string(),
        noise: utt.noise.clone(),
        snr_db: utt.snr_db,
        report: None,
        note: None,
    };
    let pesq_score = match pesq.score(&utt.id, system, &utt.clean, processed) {
        Ok(s) => s,
        Err(e) => return EvalRow { note: Some(e.to_string().replace(',', ";")), ..base },
    };
    match evaluate_pair(&utt.clean, processed, pesq_score, coeffs) {
        Ok(report) => EvalRow { report: Some(report), ..base },
        Err(e) => EvalRow { note: Some(e.to_string().replace(',', ";")), ..base },
    }
}

/// Score every utterance against the noisy and enhanced systems.
/// Per-utterance failures (length mismatch, silence) become annotated
/// rows rather than errors. Rows are ordered by (system, id) regardless
/// of thread count.
pub fn evaluate_pairs(
    utterances: &[EvalUtterance],
    pesq: &PesqSource,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if utterances.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let coeffs = options.coefficients;
    let jobs: Vec<(&EvalUtterance, &str, &Waveform)> = utterances
        .iter()
        .flat_map(|u| [(u, SYSTEM_NOISY, &u.noisy), (u, SYSTEM_ENHANCED, &u.enhanced)])
        .collect();
    let mut rows: Vec<EvalRow> = if options.threads <= 1 {
        jobs.iter().map(|(u, s, p)| eval_one(u, s, p, pesq, &coeffs)).collect()
    } else {
        let chunk = jobs.len().div_ceil(options.threads);
        let mut out: Vec<Vec<EvalRow>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|(u, s, p)| eval_one(u, s, p, pesq, &coeffs))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                out.push(h.join().expect("evaluation worker panicked"));
            }
        });
        out.into_iter().flatten().collect()
    };
    rows.sort_by(|a, b| {
        system_rank(&a.system).cmp(&system_rank(&b.system)).then_with(|| a.id.cmp(&b.id))
    });

    let mut conditions = Vec::new();
    let mut overall = Vec::new();
    let mut condition_keys: Vec<(String, String, f64)> =
        rows.iter().map(|r| (r.system.clone(), r.noise.clone(), r.snr_db)).collect();
    condition_keys.sort_by(|a, b| {
        system_rank(&a.0)
            .cmp(&system_rank(&b.0))
            .then_with(|| a.1.cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });
    condition_keys.dedup();
    for (system, noise, snr_db) in condition_keys {
        let group: Vec<&EvalRow> = rows
            .iter()
            .filter(|r| r.system == system && r.noise == noise && r.snr_db == snr_db)
            .collect();
        if let Some(scores) = aggregate(&group) {
            conditions.push(ConditionRow { system, noise, snr_db, scores });
        }
    }
    let mut systems: Vec<String> = rows.iter().map(|r| r.system.clone()).collect();
    systems.sort_by(|a, b| system_rank(a).cmp(&system_rank(b)));
    systems.dedup();
    for system in systems {
        let group: Vec<&EvalRow> = rows.iter().filter(|r| r.system == system).collect();
        if let Some(scores) = aggregate(&group) {
            overall.push((system, scores));
        }
    }
    let skipped = rows.iter().filter(|r| r.report.is_none()).count();
    Ok(EvalReport { coefficients: coeffs, rows, conditions, overall, skipped })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    /// One line per scored comparison, with empty PESQ-derived cells when
    /// no score was available and a note column for skipped rows.
    pub fn per_utterance_csv(&self) -> String {
        let mut out =
            String::from("id,system,noise,snr_db,seg_snr,llr,wss,pesq,csig,cbak,covl,note\n");
        for r in &self.rows {
            let (seg, llr, wss, pesq, csig, cbak, covl) = match &r.report {
                Some(m) => (
                    m.seg_snr.to_string(),
                    m.llr.to_string(),
                    m.wss.to_string(),
                    opt_cell(m.pesq),
                    opt_cell(m.csig),
                    opt_cell(m.cbak),
                    opt_cell(m.covl),
                ),
                None => Default::default(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.id,
                r.system,
                r.noise,
                r.snr_db,
                seg,
                llr,
                wss,
                pesq,
                csig,
                cbak,
                covl,
                r.note.as_deref().unwrap_or("")
            ));
        }
        out
    }

    /// Per-condition means, one row per (system, noise, SNR).
    pub fn conditions_csv(&self) -> String {
        let mut out = String::from("system,noise,snr_db,n,seg_snr,llr,wss,pesq,csig,cbak,covl\n");
        for c in &self.conditions {
            let s = &c.scores;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                c.system,
                c.noise,
                c.snr_db,
                s.n,
                s.seg_snr,
                s.llr,
                s.wss,
                opt_cell(s.pesq),
                opt_cell(s.csig),
                opt_cell(s.cbak),
                opt_cell(s.covl)
            ));
        }
        out
    }

    /// Overall system-by-metric table in the conventional column order.
    pub fn tables_csv(&self) -> String {
        let mut out = String::from("system,csig,cbak,covl,pesq\n");
        for (system, s) in &self.overall {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                system,
                opt_cell(s.csig),
                opt_cell(s.cbak),
                opt_cell(s.covl),
                opt_cell(s.pesq)
            ));
        }
        out
    }
}
