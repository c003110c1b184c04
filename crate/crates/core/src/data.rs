//! Corpus synthesis, manifests, and unpaired batch sampling.
//!
//! A corpus lives on disk as WAV files plus one manifest: a JSON header
//! line (label map, analysis config, normalization stats, SNR set, split
//! mode) followed by one JSON record per line. Record paths are relative
//! to the manifest's directory, so a corpus directory can be moved whole.
//!
//! Two content splits are supported. Paired-content uses every clean
//! utterance both as a mixing source and as a clean-pool member.
//! Disjoint-content halves the sorted clean id list: the first half only
//! sources noisy mixtures, the second half only populates the clean pool,
//! and the two id sets never overlap. Sources are still written as clean
//! records (with `pool: false`) so evaluation can resolve every noisy
//! record back to its reference.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::dsp::{
    log_compress, mix_at_snr, read_wav, stft, write_wav, DspError, FeatureScaler,
    ScalerAccumulator, StftConfig, Waveform,
};
use crate::rng::{
    stream_rng, STREAM_CROP, STREAM_DATA_SYNTH, STREAM_DEMO, STREAM_EPOCH_PERM, STREAM_SAMPLER,
    STREAM_TARGET_NOISE,
};

/// Domain name of clean records; label index 0 everywhere.
pub const CLEAN_DOMAIN: &str = "clean";
/// Conventional manifest file name inside a corpus directory.
pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Audio {
        path: PathBuf,
        #[source]
        source: DspError,
    },
    #[error("unreadable input files:\n{listing}")]
    UnreadableFiles { listing: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, DataError>;

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    PairedContent,
    DisjointContent,
}

/// One utterance on disk. Clean records carry no source or SNR; noisy
/// records name their source clean id, noise domain, mixing SNR, and the
/// sample offset into the noise file used for the excerpt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    /// Relative to the manifest directory.
    pub path: String,
    /// [`CLEAN_DOMAIN`] or a noise-type name from the label map.
    pub domain: String,
    pub speaker: String,
    pub split: Split,
    /// Clean records only: whether the utterance is a clean-pool member.
    /// Mixing sources in disjoint-content mode are recorded with `false`.
    #[serde(default)]
    pub pool: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_clean_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// Sample offset into the noise file, absent in manifest-only runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_offset: Option<usize>,
}

impl UtteranceRecord {
    pub fn is_clean(&self) -> bool {
        self.domain == CLEAN_DOMAIN
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    /// Domain name to label index; [`CLEAN_DOMAIN`] at 0, noises at 1..=N.
    pub label_map: BTreeMap<String, usize>,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub scaler: FeatureScaler,
    pub snrs: Vec<f64>,
    pub split_mode: SplitMode,
    pub seed: u64,
}

impl ManifestHeader {
    pub fn n_noise(&self) -> usize {
        self.label_map.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub header: ManifestHeader,
    pub records: Vec<UtteranceRecord>,
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: ManifestHeader,
}

impl CorpusManifest {
    /// Directory record paths resolve against.
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn resolve(&self, record: &UtteranceRecord) -> PathBuf {
        self.dir.join(&record.path)
    }

    /// Clean-pool members (P_S) of a split.
    pub fn clean_pool(&self, split: Split) -> Vec<&UtteranceRecord> {
        self.records.iter().filter(|r| r.is_clean() && r.pool && r.split == split).collect()
    }

    /// Noisy records (P_Y) of a split.
    pub fn noisy_pool(&self, split: Split) -> Vec<&UtteranceRecord> {
        self.records.iter().filter(|r| !r.is_clean() && r.split == split).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        let header = serde_json::to_string(&HeaderLine { header: self.header.clone() })?;
        writeln!(w, "{header}").map_err(|e| io_err(path, e))?;
        for record in &self.records {
            let line = serde_json::to_string(record)?;
            writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let first = match lines.next() {
            Some(line) => line.map_err(|e| io_err(path, e))?,
            None => return Err(DataError::Manifest("empty manifest file".into())),
        };
        let header: HeaderLine = serde_json::from_str(&first)?;
        let mut records = Vec::new();
        for line in lines {
            let line = line.map_err(|e| io_err(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Self { header: header.header, records, dir })
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub snrs: Vec<f64>,
    pub split_mode: SplitMode,
    pub seed: u64,
    pub stft: StftConfig,
    /// With this off, no audio is read or written and no files are
    /// created: the returned manifest carries the full record plan with
    /// an identity scaler and no noise offsets. Used for count-law checks
    /// at corpus scales that are unreasonable to render.
    pub render_audio: bool,
    /// Fan-out for mixing and writing noisy files; 1 keeps it serial.
    /// Outputs and manifest are identical at any width.
    pub threads: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            snrs: vec![-5.0, 0.0, 5.0],
            split_mode: SplitMode::PairedContent,
            seed: 0,
            stft: StftConfig::default(),
            render_audio: true,
            threads: 1,
        }
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn speaker_of(stem: &str) -> String {
    stem.split('_').next().unwrap_or(stem).to_string()
}

/// Display form used inside noisy record ids; f64's shortest round-trip
/// formatting keeps it stable.
fn snr_tag(snr: f64) -> String {
    format!("{snr}")
}

struct NoisyPlanItem {
    record: UtteranceRecord,
    clean_index: usize,
    noise_index: usize,
}

/// Mix every source clean utterance with every noise at every SNR.
///
/// Inputs are sorted by file stem first, so the record plan depends only
/// on the file sets and options. In disjoint-content mode, the first half
/// of the sorted clean list sources the mixtures and the second half
/// forms the clean pool. Rendered runs copy clean sources into the corpus
/// directory, write one noisy WAV per record with a seeded noise-offset
/// excerpt, fit the feature scaler over everything written, and save the
/// manifest as `manifest.jsonl`.
pub fn synthesize_corpus(
    clean_files: &[PathBuf],
    noise_files: &[PathBuf],
    out_dir: &Path,
    opts: &SynthesisOptions,
) -> Result<CorpusManifest> {
    if clean_files.is_empty() {
        return Err(DataError::Manifest("at least one clean file required".into()));
    }
    if noise_files.is_empty() {
        return Err(DataError::Manifest("at least one noise file required".into()));
    }
    if opts.snrs.is_empty() {
        return Err(DataError::Manifest("at least one SNR required".into()));
    }
    if opts.snrs.iter().any(|s| !s.is_finite()) {
        return Err(DataError::Manifest("SNRs must be finite".into()));
    }

    let mut clean: Vec<PathBuf> = clean_files.to_vec();
    clean.sort_by_key(|p| file_stem(p));
    let mut noise: Vec<PathBuf> = noise_files.to_vec();
    noise.sort_by_key(|p| file_stem(p));

    let clean_ids: Vec<String> = clean.iter().map(|p| file_stem(p)).collect();
    let noise_names: Vec<String> = noise.iter().map(|p| file_stem(p)).collect();
    for (name, items) in [("clean id", &clean_ids), ("noise name", &noise_names)] {
        let mut seen = HashSet::new();
        for item in items.iter() {
            if item.is_empty() || item == CLEAN_DOMAIN && name == "noise name" {
                return Err(DataError::Manifest(format!("invalid {name} {item:?}")));
            }
            if !seen.insert(item) {
                return Err(DataError::Manifest(format!("duplicate {name} {item:?}")));
            }
        }
    }

    let mut label_map = BTreeMap::new();
    label_map.insert(CLEAN_DOMAIN.to_string(), 0usize);
    for (i, name) in noise_names.iter().enumerate() {
        label_map.insert(name.clone(), i + 1);
    }

    let n_sources = match opts.split_mode {
        SplitMode::PairedContent => clean.len(),
        SplitMode::DisjointContent => clean.len() / 2,
    };
    if n_sources == 0 {
        return Err(DataError::Manifest(
            "disjoint-content mode needs at least two clean files".into(),
        ));
    }

    let mut records: Vec<UtteranceRecord> = Vec::new();
    for (i, id) in clean_ids.iter().enumerate() {
        let pool = match opts.split_mode {
            SplitMode::PairedContent => true,
            SplitMode::DisjointContent => i >= n_sources,
        };
        records.push(UtteranceRecord {
            id: id.clone(),
            path: format!("clean/{id}.wav"),
            domain: CLEAN_DOMAIN.to_string(),
            speaker: speaker_of(id),
            split: Split::Train,
            pool,
            source_clean_id: None,
            snr_db: None,
            noise_offset: None,
        });
    }

    let mut noisy_plan: Vec<NoisyPlanItem> = Vec::new();
    for (ci, src) in clean_ids.iter().take(n_sources).enumerate() {
        for (ni, noise_name) in noise_names.iter().enumerate() {
            for &snr in &opts.snrs {
                let id = format!("{src}__{noise_name}__snr{}", snr_tag(snr));
                noisy_plan.push(NoisyPlanItem {
                    record: UtteranceRecord {
                        id: id.clone(),
                        path: format!("noisy/{id}.wav"),
                        domain: noise_name.clone(),
                        speaker: speaker_of(src),
                        split: Split::Train,
                        pool: false,
                        source_clean_id: Some(src.clone()),
                        snr_db: Some(snr),
                        noise_offset: None,
                    },
                    clean_index: ci,
                    noise_index: ni,
                });
            }
        }
    }

    let mut scaler = FeatureScaler::identity();
    let mut sample_rate = 16_000;

    if opts.render_audio {
        let (clean_waves, noise_waves) = read_input_waves(&clean, &noise)?;
        sample_rate = clean_waves[0].sample_rate;

        // Noise excerpt offsets, drawn in plan order so the manifest is
        // independent of rendering order and thread count.
        for (ordinal, item) in noisy_plan.iter_mut().enumerate() {
            let len = noise_waves[item.noise_index].samples.len();
            let mut rng = stream_rng(opts.seed, STREAM_DATA_SYNTH, ordinal as u64);
            item.record.noise_offset = Some(rng.random_range(0..len));
        }

        for sub in ["clean", "noisy"] {
            let dir = out_dir.join(sub);
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        let mut acc = ScalerAccumulator::default();
        for (wave, record) in clean_waves.iter().zip(&records) {
            let path = out_dir.join(&record.path);
            write_wav(&path, wave).map_err(|e| DataError::Audio { path, source: e })?;
            acc.merge(&feature_moments(wave, &opts.stft));
        }
        let noisy_accs = render_noisy(
            &noisy_plan,
            &clean_waves,
            &noise_waves,
            out_dir,
            &opts.stft,
            opts.threads.max(1),
        )?;
        for item_acc in &noisy_accs {
            acc.merge(item_acc);
        }
        scaler = acc.finish();
    }

    records.extend(noisy_plan.into_iter().map(|item| item.record));

    let manifest = CorpusManifest {
        header: ManifestHeader {
            label_map,
            sample_rate,
            stft: opts.stft,
            scaler,
            snrs: opts.snrs.clone(),
            split_mode: opts.split_mode,
            seed: opts.seed,
        },
        records,
        dir: out_dir.to_path_buf(),
    };
    if opts.render_audio {
        manifest.save(&out_dir.join(MANIFEST_NAME))?;
    }
    Ok(manifest)
}

/// Read all inputs, collecting every failure into one listing.
fn read_input_waves(
    clean: &[PathBuf],
    noise: &[PathBuf],
) -> Result<(Vec<Waveform>, Vec<Waveform>)> {
    let mut failures: Vec<String> = Vec::new();
    let mut read_all = |paths: &[PathBuf]| -> Vec<Waveform> {
        paths
            .iter()
            .filter_map(|p| match read_wav(p) {
                Ok(w) => Some(w),
                Err(e) => {
                    failures.push(format!("  {}: {e}", p.display()));
                    None
                }
            })
            .collect()
    };
    let clean_waves = read_all(clean);
    let noise_waves = read_all(noise);
    if !failures.is_empty() {
        return Err(DataError::UnreadableFiles { listing: failures.join("\n") });
    }
    Ok((clean_waves, noise_waves))
}

fn feature_moments(wave: &Waveform, stft_cfg: &StftConfig) -> ScalerAccumulator {
    let spec = stft(wave, stft_cfg);
    let mut acc = ScalerAccumulator::default();
    acc.extend(spec.magnitude().iter().map(|&m| log_compress(m)));
    acc
}

fn render_one(
    item: &NoisyPlanItem,
    clean_waves: &[Waveform],
    noise_waves: &[Waveform],
    out_dir: &Path,
    stft_cfg: &StftConfig,
) -> Result<ScalerAccumulator> {
    let clean = &clean_waves[item.clean_index];
    let noise = &noise_waves[item.noise_index];
    let offset = item.record.noise_offset.expect("offset assigned before rendering");
    let mut excerpt = Vec::with_capacity(noise.samples.len());
    excerpt.extend_from_slice(&noise.samples[offset..]);
    excerpt.extend_from_slice(&noise.samples[..offset]);
    let excerpt = Waveform::new(excerpt, noise.sample_rate);
    let snr = item.record.snr_db.expect("noisy record has an SNR");
    let path = out_dir.join(&item.record.path);
    let mixed = mix_at_snr(clean, &excerpt, snr)
        .map_err(|e| DataError::Audio { path: path.clone(), source: e })?;
    write_wav(&path, &mixed).map_err(|e| DataError::Audio { path, source: e })?;
    Ok(feature_moments(&mixed, stft_cfg))
}

/// One accumulator per plan item, in plan order regardless of fan-out.
fn render_noisy(
    plan: &[NoisyPlanItem],
    clean_waves: &[Waveform],
    noise_waves: &[Waveform],
    out_dir: &Path,
    stft_cfg: &StftConfig,
    threads: usize,
) -> Result<Vec<ScalerAccumulator>> {
    if threads <= 1 || plan.len() <= 1 {
        return plan
            .iter()
            .map(|i| render_one(i, clean_waves, noise_waves, out_dir, stft_cfg))
            .collect();
    }
    let chunk = plan.len().div_ceil(threads);
    let results: Vec<Result<Vec<ScalerAccumulator>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = plan
            .chunks(chunk)
            .map(|items| {
                scope.spawn(move || {
                    items
                        .iter()
                        .map(|i| render_one(i, clean_waves, noise_waves, out_dir, stft_cfg))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("render worker panicked")).collect()
    });
    let mut accs = Vec::with_capacity(plan.len());
    for r in results {
        accs.extend(r?);
    }
    Ok(accs)
}

/// Machine-readable invariant check; failures are carried, not raised.
#[derive(Debug, Default, Clone, Serialize)]
pub struct ValidationReport {
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Check label-map shape, record cross-references, SNR membership, split
/// disjointness, and file existence.
pub fn validate_manifest(manifest: &CorpusManifest) -> ValidationReport {
    validate(manifest, true)
}

/// [`validate_manifest`] minus the file-existence check, for plans that
/// deliberately render no audio.
pub fn validate_manifest_entries(manifest: &CorpusManifest) -> ValidationReport {
    validate(manifest, false)
}

fn validate(manifest: &CorpusManifest, check_files: bool) -> ValidationReport {
    let mut failures = Vec::new();
    let header = &manifest.header;

    match header.label_map.get(CLEAN_DOMAIN) {
        Some(0) => {}
        other => {
            failures.push(format!("label map must place {CLEAN_DOMAIN:?} at 0, got {other:?}"))
        }
    }
    let mut indices: Vec<usize> = header.label_map.values().copied().collect();
    indices.sort_unstable();
    if indices != (0..header.label_map.len()).collect::<Vec<_>>() {
        failures
            .push(format!("label indices must cover 0..={} once each", header.label_map.len() - 1));
    }

    let mut ids = HashSet::new();
    let clean_ids: HashSet<&str> =
        manifest.records.iter().filter(|r| r.is_clean()).map(|r| r.id.as_str()).collect();
    for r in &manifest.records {
        if !ids.insert(r.id.as_str()) {
            failures.push(format!("duplicate record id {:?}", r.id));
        }
        if !header.label_map.contains_key(&r.domain) {
            failures.push(format!("record {:?} cites unknown domain {:?}", r.id, r.domain));
            continue;
        }
        if r.is_clean() {
            if r.source_clean_id.is_some() || r.snr_db.is_some() {
                failures.push(format!("clean record {:?} carries noisy-only fields", r.id));
            }
        } else {
            match &r.source_clean_id {
                Some(src) if clean_ids.contains(src.as_str()) => {}
                Some(src) => {
                    failures.push(format!("record {:?} cites missing clean source {src:?}", r.id))
                }
                None => failures.push(format!("noisy record {:?} lacks a clean source", r.id)),
            }
            match r.snr_db {
                Some(snr) if header.snrs.contains(&snr) => {}
                other => failures.push(format!(
                    "record {:?} SNR {other:?} outside configured set {:?}",
                    r.id, header.snrs
                )),
            }
        }
        if check_files && !manifest.resolve(r).exists() {
            failures.push(format!("record {:?} file missing: {}", r.id, r.path));
        }
    }

    if header.split_mode == SplitMode::DisjointContent {
        let pool: HashSet<&str> = manifest
            .records
            .iter()
            .filter(|r| r.is_clean() && r.pool)
            .map(|r| r.id.as_str())
            .collect();
        let mut overlap: Vec<&str> = manifest
            .records
            .iter()
            .filter(|r| !r.is_clean())
            .filter_map(|r| r.source_clean_id.as_deref())
            .filter(|src| pool.contains(src))
            .collect();
        overlap.sort_unstable();
        overlap.dedup();
        if !overlap.is_empty() {
            failures.push(format!(
                "disjoint-content violated: clean-pool ids also source mixtures: {overlap:?}"
            ));
        }
    }

    ValidationReport { failures }
}

/// A train-split utterance realized as normalized log-magnitude features.
#[derive(Debug, Clone)]
pub struct LoadedUtterance {
    pub id: String,
    pub domain_index: usize,
    /// `[F, T]`, bin-major.
    pub features: Tensor,
}

/// Both training pools with features cached in memory.
#[derive(Debug)]
pub struct LoadedCorpus {
    n_noise: usize,
    feature_rows: usize,
    clean: Vec<LoadedUtterance>,
    noisy: Vec<LoadedUtterance>,
}

impl LoadedCorpus {
    pub fn from_manifest(manifest: &CorpusManifest) -> Result<Self> {
        let header = &manifest.header;
        let n_noise = header.n_noise();
        if n_noise == 0 {
            return Err(DataError::Manifest("label map lists no noise types".into()));
        }
        let load = |records: Vec<&UtteranceRecord>| -> Result<Vec<LoadedUtterance>> {
            records
                .into_iter()
                .map(|r| {
                    let path = manifest.resolve(r);
                    let wave = read_wav(&path)
                        .map_err(|e| DataError::Audio { path: path.clone(), source: e })?;
                    if wave.sample_rate != header.sample_rate {
                        return Err(DataError::Manifest(format!(
                            "record {:?} sample rate {} differs from header {}",
                            r.id, wave.sample_rate, header.sample_rate
                        )));
                    }
                    let spec = stft(&wave, &header.stft);
                    let (bins, frames) = (spec.bins(), spec.frames());
                    let mag = spec.magnitude();
                    let features = Tensor::from_fn(vec![bins, frames], |i| {
                        header.scaler.normalize(log_compress(mag[i])) as f32
                    });
                    let domain_index = *header.label_map.get(&r.domain).ok_or_else(|| {
                        DataError::Manifest(format!("unknown domain {:?}", r.domain))
                    })?;
                    Ok(LoadedUtterance { id: r.id.clone(), domain_index, features })
                })
                .collect()
        };
        let clean = load(manifest.clean_pool(Split::Train))?;
        let noisy = load(manifest.noisy_pool(Split::Train))?;
        if clean.is_empty() {
            return Err(DataError::Manifest("empty clean training pool".into()));
        }
        if noisy.is_empty() {
            return Err(DataError::Manifest("empty noisy training pool".into()));
        }
        let feature_rows = header.stft.bins();
        Ok(Self { n_noise, feature_rows, clean, noisy })
    }

    pub fn n_noise(&self) -> usize {
        self.n_noise
    }

    /// Feature row count F shared by every utterance.
    pub fn feature_rows(&self) -> usize {
        self.feature_rows
    }

    pub fn clean(&self) -> &[LoadedUtterance] {
        &self.clean
    }

    pub fn noisy(&self) -> &[LoadedUtterance] {
        &self.noisy
    }

    /// One epoch passes once over the larger pool.
    pub fn steps_per_epoch(&self, batch_size: usize) -> u64 {
        let larger = self.clean.len().max(self.noisy.len());
        larger.div_ceil(batch_size.max(1)) as u64
    }
}

/// One cropped training example plus its conditioning indices.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub record_id: String,
    /// `[F, crop_frames]` normalized log-magnitude crop.
    pub features: Tensor,
    /// Ground-truth domain: 0 for clean, 1..=N for noise types.
    pub domain_index: usize,
    /// Conversion target: drawn noise type for clean samples, 0 for noisy.
    pub target_index: usize,
}

fn reflect_index(i: usize, len: usize) -> usize {
    if len <= 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let r = i % period;
    if r < len {
        r
    } else {
        period - r
    }
}

/// Fixed-width crop along time; positions past the end reflect, so
/// utterances shorter than the crop are mirror-extended.
fn crop_features(features: &Tensor, start: usize, crop: usize) -> Tensor {
    let (rows, cols) = features.dims2().expect("features are a matrix");
    let data = features.data();
    Tensor::from_fn(vec![rows, crop], |i| {
        let (r, t) = (i / crop, i % crop);
        data[r * cols + reflect_index(start + t, cols)]
    })
}

fn permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Draw one unpaired minibatch, a pure function of `(seed, step)`.
///
/// The larger pool is visited via a per-epoch permutation so an epoch is
/// exactly one pass over it; the smaller pool is drawn uniformly per
/// step. Clean samples get a uniformly drawn target noise type; noisy
/// samples keep their ground-truth type and target clean.
pub fn sample_unpaired_batch(
    corpus: &LoadedCorpus,
    batch_size: usize,
    crop_frames: usize,
    seed: u64,
    step: u64,
) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>)> {
    if batch_size == 0 || crop_frames == 0 {
        return Err(DataError::Manifest("batch size and crop frames must be positive".into()));
    }
    let noisy_is_pass = corpus.noisy.len() >= corpus.clean.len();
    let (pass_pool, draw_pool) =
        if noisy_is_pass { (&corpus.noisy, &corpus.clean) } else { (&corpus.clean, &corpus.noisy) };

    let steps_per_epoch = corpus.steps_per_epoch(batch_size);
    let epoch = step / steps_per_epoch;
    let pos = (step % steps_per_epoch) as usize;

    let mut perm_rng = stream_rng(seed, STREAM_EPOCH_PERM, epoch);
    let perm = permutation(pass_pool.len(), &mut perm_rng);
    let pass_indices: Vec<usize> =
        (0..batch_size).map(|j| perm[(pos * batch_size + j) % pass_pool.len()]).collect();

    let mut pick_rng = stream_rng(seed, STREAM_SAMPLER, step);
    let draw_indices: Vec<usize> =
        (0..batch_size).map(|_| pick_rng.random_range(0..draw_pool.len())).collect();

    let (clean_idx, noisy_idx) =
        if noisy_is_pass { (draw_indices, pass_indices) } else { (pass_indices, draw_indices) };

    let mut crop_rng = stream_rng(seed, STREAM_CROP, step);
    let mut crop_of = |u: &LoadedUtterance| {
        let cols = u.features.dims2().expect("matrix").1;
        let span = cols.saturating_sub(crop_frames);
        let start = crop_rng.random_range(0..=span);
        crop_features(&u.features, start, crop_frames)
    };

    let mut tn_rng = stream_rng(seed, STREAM_TARGET_NOISE, step);
    let s_batch: Vec<TrainingSample> = clean_idx
        .iter()
        .map(|&i| {
            let u = &corpus.clean[i];
            TrainingSample {
                record_id: u.id.clone(),
                features: crop_of(u),
                domain_index: u.domain_index,
                target_index: tn_rng.random_range(1..=corpus.n_noise),
            }
        })
        .collect();
    let y_batch: Vec<TrainingSample> = noisy_idx
        .iter()
        .map(|&i| {
            let u = &corpus.noisy[i];
            TrainingSample {
                record_id: u.id.clone(),
                features: crop_of(u),
                domain_index: u.domain_index,
                target_index: 0,
            }
        })
        .collect();
    Ok((s_batch, y_batch))
}

/// Synthetic demo inputs: multi-tone "speech" and filtered-noise types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSpec {
    pub n_clean: usize,
    pub n_noise: usize,
    pub duration_secs: f64,
    pub seed: u64,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self { n_clean: 8, n_noise: 2, duration_secs: 0.5, seed: 0 }
    }
}

const DEMO_RATE: u32 = 16_000;
const DEMO_RMS: f64 = 0.08;
const NOISE_NAMES: [&str; 4] = ["dark", "bright", "rumble", "hiss"];

fn scale_to_rms(samples: &mut [f64], target: f64) {
    let power: f64 = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
    if power > 0.0 {
        let k = target / power.sqrt();
        for s in samples.iter_mut() {
            *s *= k;
        }
    }
}

/// Write `clean/` and `noise/` WAV directories under `dir` and return the
/// sorted file lists, ready for [`synthesize_corpus`].
pub fn generate_demo_corpus(dir: &Path, spec: &DemoSpec) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
    if spec.n_clean == 0 || spec.n_noise == 0 || spec.duration_secs <= 0.0 {
        return Err(DataError::Manifest("demo spec must be positive in every field".into()));
    }
    let n = (spec.duration_secs * DEMO_RATE as f64).round() as usize;
    let clean_dir = dir.join("clean");
    let noise_dir = dir.join("noise");
    for d in [&clean_dir, &noise_dir] {
        fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }

    let mut clean_paths = Vec::with_capacity(spec.n_clean);
    for k in 0..spec.n_clean {
        let mut rng = stream_rng(spec.seed, STREAM_DEMO, k as u64);
        let tones: Vec<(f64, f64)> = (0..3)
            .map(|_| {
                (rng.random_range(200.0..3400.0), rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let (env_hz, env_phase) =
            (rng.random_range(1.0..3.0), rng.random_range(0.0..std::f64::consts::TAU));
        let mut samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / DEMO_RATE as f64;
                let env = 0.55 + 0.45 * (std::f64::consts::TAU * env_hz * t + env_phase).sin();
                env * tones
                    .iter()
                    .map(|(f, p)| (std::f64::consts::TAU * f * t + p).sin())
                    .sum::<f64>()
            })
            .collect();
        scale_to_rms(&mut samples, DEMO_RMS);
        let path = clean_dir.join(format!("spk{}_utt{k:03}.wav", k % 2));
        write_wav(&path, &Waveform::new(samples, DEMO_RATE))
            .map_err(|e| DataError::Audio { path: path.clone(), source: e })?;
        clean_paths.push(path);
    }

    let mut noise_paths = Vec::with_capacity(spec.n_noise);
    for j in 0..spec.n_noise {
        let mut rng = stream_rng(spec.seed, STREAM_DEMO, 1_000 + j as u64);
        let white: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mut samples = if j % 2 == 0 {
            // One-pole lowpass, progressively darker for later types.
            let a = 0.9 + 0.02 * (j / 2) as f64;
            let mut y = 0.0;
            white
                .iter()
                .map(|&x| {
                    y = a * y + (1.0 - a) * x;
                    y
                })
                .collect::<Vec<f64>>()
        } else {
            // First difference, a high-emphasis spectrum.
            std::iter::once(white[0])
                .chain(white.windows(2).map(|w| w[1] - w[0]))
                .collect::<Vec<f64>>()
        };
        scale_to_rms(&mut samples, DEMO_RMS);
        let name = NOISE_NAMES.get(j).map(|s| s.to_string()).unwrap_or_else(|| format!("noise{j}"));
        let path = noise_dir.join(format!("{name}.wav"));
        write_wav(&path, &Waveform::new(samples, DEMO_RATE))
            .map_err(|e| DataError::Audio { path: path.clone(), source: e })?;
        noise_paths.push(path);
    }

    clean_paths.sort();
    noise_paths.sort();
    Ok((clean_paths, noise_paths))
}

/// Sorted WAV paths directly inside a directory.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
