//! Adversarial training schedule and the enhancement (inference) path.
//!
//! Each step runs two phases in a fixed order. First both discriminators
//! update on the first- and second-adversarial losses, with every fake
//! computed by a detached forward pass (same kernels, frozen scratch
//! graph) so no generator gradient exists by construction. Then both
//! generators update jointly on the generator-side adversarial terms plus
//! the weighted cycle and identity terms, with discriminator parameters
//! bound frozen. One epoch is one pass over the larger pool; every random
//! draw is keyed by `(seed, step)`, so a resumed run replays the exact
//! batch sequence of an uninterrupted one.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdamOptimizer, AdamState, AutodiffError, Bind, Graph, Parameter, Tensor};
use crate::conditioning::{append_label, ConditioningError, DomainLabel, ExtendedFeature};
use crate::data::{sample_unpaired_batch, CorpusManifest, DataError, LoadedCorpus, TrainingSample};
use crate::dsp::{
    istft_trimmed, log_compress, log_expand, stft, DspError, FeatureScaler, StftConfig, Waveform,
};
use crate::losses::{
    adv1_discriminator_loss, adv1_generator_loss, adv2_discriminator_loss, compose_objectives,
    constants, cycle_loss, identity_loss, nit_cycle_loss, GeneratorAdvForm, LossError, LossReport,
    LossTerms, LossWeights,
};
use crate::models::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta, Discriminator,
    DiscriminatorSpec, Generator, GeneratorSpec,
};
use crate::rng::{
    stream_rng, STREAM_INIT_D_S, STREAM_INIT_D_Y, STREAM_INIT_G_SY, STREAM_INIT_G_YS,
};

const ADAM_EPS: f32 = 1e-8;
/// Loss log file name inside a run directory.
pub const LOSS_CSV_NAME: &str = "losses.csv";
/// Effective-config echo file name inside a run directory.
pub const CONFIG_ECHO_NAME: &str = "run_config.json";
/// Name of the checkpoint written when training finishes.
pub const FINAL_CHECKPOINT_NAME: &str = "checkpoint-final.bin";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite loss at step {step}: {report:?}")]
    NonFinite { step: u64, report: LossReport },
    #[error("sample rate {got} does not match the checkpoint's {want}")]
    SampleRate { got: u32, want: u32 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

fn io_err(path: &Path, source: std::io::Error) -> TrainError {
    TrainError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Baseline,
    Nit,
}

/// Run parameters. `Default` carries the reference recipe: 600 epochs,
/// Adam betas 0.5/0.999, learning rates 2e-4 (generators) and 1e-4
/// (discriminators), cycle/identity weights 10/5, 64-frame crops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    pub lr_g: f32,
    pub lr_d: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub batch_size: usize,
    pub crop_frames: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub weights: LossWeights,
    pub adv_form: GeneratorAdvForm,
    pub base_channels: usize,
    pub n_residual_blocks: usize,
    pub disc_layers: usize,
    /// Epochs between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    /// Optional global-step cap for short experiments.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 600,
            lr_g: 2e-4,
            lr_d: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 1,
            crop_frames: 64,
            seed: 0,
            mode: TrainMode::Nit,
            weights: LossWeights::default(),
            adv_form: GeneratorAdvForm::default(),
            base_channels: 16,
            n_residual_blocks: 2,
            disc_layers: 4,
            checkpoint_every: 0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("crop_frames", self.crop_frames as f64),
            ("base_channels", self.base_channels as f64),
            ("disc_layers", self.disc_layers as f64),
        ];
        for (name, v) in positives {
            if v < 1.0 {
                return Err(TrainError::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !v.is_finite() || v < 0.0 {
                return Err(TrainError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(TrainError::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        self.weights.validate()?;
        Ok(())
    }

    fn nit(&self) -> bool {
        self.mode == TrainMode::Nit
    }
}

/// The four networks of one experiment.
#[derive(Debug)]
pub struct Models {
    pub g_ys: Generator,
    pub g_sy: Generator,
    pub d_s: Discriminator,
    pub d_y: Discriminator,
}

/// Everything that evolves across steps. RNG state is deliberately
/// absent: all draws are pure functions of `(config.seed, step)`.
pub struct ExperimentState {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed steps.
    pub step: u64,
    pub models: Models,
    opt_g_ys: AdamOptimizer,
    opt_g_sy: AdamOptimizer,
    opt_d_s: AdamOptimizer,
    opt_d_y: AdamOptimizer,
    n_noise: usize,
    feature_rows: usize,
    /// Noise name to label index 1..=N; clean is implicit at 0.
    noise_labels: BTreeMap<String, usize>,
    stft: StftConfig,
    scaler: FeatureScaler,
    sample_rate: u32,
    pub history: Vec<LossReport>,
}

impl ExperimentState {
    /// Fresh models and optimizers for a manifest, seeded per network.
    pub fn new(config: TrainConfig, manifest: &CorpusManifest) -> Result<Self> {
        config.validate()?;
        let header = &manifest.header;
        let n_noise = header.n_noise();
        if n_noise == 0 {
            return Err(TrainError::Config("manifest lists no noise types".into()));
        }
        let feature_rows = header.stft.bins();
        let (gen_spec, disc_spec) = model_specs(&config, feature_rows, n_noise);
        let seed = config.seed;
        let models = Models {
            g_ys: Generator::init(gen_spec, "g_ys", &mut stream_rng(seed, STREAM_INIT_G_YS, 0))?,
            g_sy: Generator::init(gen_spec, "g_sy", &mut stream_rng(seed, STREAM_INIT_G_SY, 0))?,
            d_s: Discriminator::init(disc_spec, "d_s", &mut stream_rng(seed, STREAM_INIT_D_S, 0))?,
            d_y: Discriminator::init(disc_spec, "d_y", &mut stream_rng(seed, STREAM_INIT_D_Y, 0))?,
        };
        let noise_labels = header
            .label_map
            .iter()
            .filter(|(name, _)| name.as_str() != crate::data::CLEAN_DOMAIN)
            .map(|(name, &idx)| (name.clone(), idx))
            .collect();
        Ok(Self {
            opt_g_ys: AdamOptimizer::new(
                config.lr_g,
                config.beta1,
                config.beta2,
                ADAM_EPS,
                &models.g_ys.params(),
            ),
            opt_g_sy: AdamOptimizer::new(
                config.lr_g,
                config.beta1,
                config.beta2,
                ADAM_EPS,
                &models.g_sy.params(),
            ),
            opt_d_s: AdamOptimizer::new(
                config.lr_d,
                config.beta1,
                config.beta2,
                ADAM_EPS,
                &models.d_s.params(),
            ),
            opt_d_y: AdamOptimizer::new(
                config.lr_d,
                config.beta1,
                config.beta2,
                ADAM_EPS,
                &models.d_y.params(),
            ),
            config,
            epoch: 0,
            step: 0,
            models,
            n_noise,
            feature_rows,
            noise_labels,
            stft: header.stft,
            scaler: header.scaler,
            sample_rate: header.sample_rate,
            history: Vec::new(),
        })
    }

    /// Rebuild the exact state a checkpoint captured. The caller's config
    /// must agree with the checkpoint on seed, mode, and architecture; a
    /// mismatch would silently break resume determinism, so it errors.
    pub fn from_checkpoint(
        config: TrainConfig,
        manifest: &CorpusManifest,
        ckpt: &Checkpoint,
    ) -> Result<Self> {
        let mut state = Self::new(config, manifest)?;
        let meta = &ckpt.meta;
        if meta.seed != state.config.seed {
            return Err(TrainError::Config(format!(
                "checkpoint seed {} differs from configured seed {}",
                meta.seed, state.config.seed
            )));
        }
        if meta.nit != state.config.nit() {
            return Err(TrainError::Config("checkpoint mode differs from configured mode".into()));
        }
        if meta.stft != state.stft || meta.sample_rate != state.sample_rate {
            return Err(TrainError::Config(
                "checkpoint analysis config differs from manifest".into(),
            ));
        }
        if meta.scaler != state.scaler || meta.label_map != state.noise_labels {
            return Err(TrainError::Config("checkpoint corpus stats differ from manifest".into()));
        }
        let (gen_spec, disc_spec) = model_specs(&state.config, state.feature_rows, state.n_noise);
        if meta.gen_spec != gen_spec || meta.disc_spec != disc_spec {
            return Err(TrainError::Config("checkpoint architecture differs from config".into()));
        }
        state.epoch = meta.epoch;
        state.step = meta.step;

        load_model_params(state.models.g_ys.params_mut(), ckpt)?;
        load_model_params(state.models.g_sy.params_mut(), ckpt)?;
        load_model_params(state.models.d_s.params_mut(), ckpt)?;
        load_model_params(state.models.d_y.params_mut(), ckpt)?;

        restore_optimizer(&mut state.opt_g_ys, &state.models.g_ys.params(), "g_ys", ckpt)?;
        restore_optimizer(&mut state.opt_g_sy, &state.models.g_sy.params(), "g_sy", ckpt)?;
        restore_optimizer(&mut state.opt_d_s, &state.models.d_s.params(), "d_s", ckpt)?;
        restore_optimizer(&mut state.opt_d_y, &state.models.d_y.params(), "d_y", ckpt)?;
        Ok(state)
    }

    pub fn n_noise(&self) -> usize {
        self.n_noise
    }

    pub fn feature_rows(&self) -> usize {
        self.feature_rows
    }

    /// Serialize models, optimizer moments, and run coordinates.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let (gen_spec, disc_spec) = model_specs(&self.config, self.feature_rows, self.n_noise);
        let mut tensors = BTreeMap::new();
        let mut adam_steps = BTreeMap::new();
        let packs: [(&str, Vec<&Parameter>, &AdamOptimizer); 4] = [
            ("g_ys", self.models.g_ys.params(), &self.opt_g_ys),
            ("g_sy", self.models.g_sy.params(), &self.opt_g_sy),
            ("d_s", self.models.d_s.params(), &self.opt_d_s),
            ("d_y", self.models.d_y.params(), &self.opt_d_y),
        ];
        for (prefix, params, opt) in packs {
            let states = opt.states();
            let step = states.first().map(|s| s.step).unwrap_or(0);
            if states.iter().any(|s| s.step != step) {
                return Err(TrainError::Config(format!(
                    "optimizer {prefix} has non-uniform step counts"
                )));
            }
            adam_steps.insert(prefix.to_string(), step);
            for (p, s) in params.iter().zip(states) {
                let shape = p.value().shape().to_vec();
                tensors.insert(p.name().to_string(), p.value().clone());
                tensors.insert(
                    format!("adam.{}.m", p.name()),
                    Tensor::new(shape.clone(), s.m.clone()).map_err(TrainError::Autodiff)?,
                );
                tensors.insert(
                    format!("adam.{}.v", p.name()),
                    Tensor::new(shape, s.v.clone()).map_err(TrainError::Autodiff)?,
                );
            }
        }
        Ok(Checkpoint {
            meta: CheckpointMeta {
                seed: self.config.seed,
                epoch: self.epoch,
                step: self.step,
                n_noise: self.n_noise,
                label_map: self.noise_labels.clone(),
                nit: self.config.nit(),
                sample_rate: self.sample_rate,
                stft: self.stft,
                scaler: self.scaler,
                gen_spec,
                disc_spec,
                adam_steps,
            },
            tensors,
        })
    }
}

fn model_specs(
    config: &TrainConfig,
    feature_rows: usize,
    n_noise: usize,
) -> (GeneratorSpec, DiscriminatorSpec) {
    let in_rows = feature_rows + if config.nit() { n_noise + 1 } else { 0 };
    let gen_spec = GeneratorSpec {
        in_rows,
        base_channels: config.base_channels,
        n_residual_blocks: config.n_residual_blocks,
        downsample_factor: 4,
    };
    let disc_spec = DiscriminatorSpec {
        in_rows,
        base_channels: config.base_channels,
        n_layers: config.disc_layers,
    };
    (gen_spec, disc_spec)
}

fn load_model_params(params: Vec<&mut Parameter>, ckpt: &Checkpoint) -> Result<()> {
    for p in params {
        let stored = ckpt.tensor(p.name())?;
        if stored.shape() != p.value().shape() {
            return Err(TrainError::Config(format!(
                "checkpoint tensor {} has shape {:?}, model expects {:?}",
                p.name(),
                stored.shape(),
                p.value().shape()
            )));
        }
        *p.value_mut() = stored.clone();
    }
    Ok(())
}

fn restore_optimizer(
    opt: &mut AdamOptimizer,
    params: &[&Parameter],
    prefix: &str,
    ckpt: &Checkpoint,
) -> Result<()> {
    let step =
        *ckpt.meta.adam_steps.get(prefix).ok_or_else(|| {
            TrainError::Config(format!("checkpoint lacks adam step for {prefix}"))
        })?;
    let states = params
        .iter()
        .map(|p| {
            let m = ckpt.tensor(&format!("adam.{}.m", p.name()))?.data().to_vec();
            let v = ckpt.tensor(&format!("adam.{}.v", p.name()))?.data().to_vec();
            Ok(AdamState { step, m, v })
        })
        .collect::<Result<Vec<_>>>()?;
    opt.set_states(states).map_err(TrainError::Autodiff)
}

/// Per-item tensors of one step, already in model-input layout.
struct StepInputs {
    /// Clean-side real/target batch: `s_tc` conditioned, raw `s` otherwise.
    s_real: Vec<Tensor>,
    /// Clean-side generator input: `s_tn` conditioned, raw `s` otherwise.
    s_gen_in: Vec<Tensor>,
    /// Noisy-side real/target batch: `y_tn` conditioned, raw `y` otherwise.
    y_real: Vec<Tensor>,
    /// Noisy-side generator input: `y_tc` conditioned, raw `y` otherwise.
    y_gen_in: Vec<Tensor>,
    /// Ground-truth noise label per noisy item, conditioned mode only.
    y_noise_labels: Vec<DomainLabel>,
    clean_label: Option<DomainLabel>,
}

fn build_inputs(
    state: &ExperimentState,
    s_batch: &[TrainingSample],
    y_batch: &[TrainingSample],
) -> Result<StepInputs> {
    if s_batch.is_empty() || y_batch.is_empty() {
        return Err(TrainError::Loss(LossError::EmptyBatch));
    }
    let n = state.n_noise;
    if !state.config.nit() {
        return Ok(StepInputs {
            s_real: s_batch.iter().map(|s| s.features.clone()).collect(),
            s_gen_in: s_batch.iter().map(|s| s.features.clone()).collect(),
            y_real: y_batch.iter().map(|y| y.features.clone()).collect(),
            y_gen_in: y_batch.iter().map(|y| y.features.clone()).collect(),
            y_noise_labels: Vec::new(),
            clean_label: None,
        });
    }

    let clean = DomainLabel::clean(n);
    let mut s_real = Vec::with_capacity(s_batch.len());
    let mut s_gen_in = Vec::with_capacity(s_batch.len());
    for s in s_batch {
        if s.domain_index != 0 {
            return Err(TrainError::Config(format!(
                "clean sample {} carries domain index {}",
                s.record_id, s.domain_index
            )));
        }
        let tn = DomainLabel::new(s.target_index, n)?;
        s_real.push(append_label(&s.features, &clean)?.into_matrix());
        s_gen_in.push(append_label(&s.features, &tn)?.into_matrix());
    }
    let mut y_real = Vec::with_capacity(y_batch.len());
    let mut y_gen_in = Vec::with_capacity(y_batch.len());
    let mut y_noise_labels = Vec::with_capacity(y_batch.len());
    for y in y_batch {
        if y.domain_index == 0 {
            return Err(TrainError::Config(format!(
                "noisy sample {} carries the clean domain index",
                y.record_id
            )));
        }
        let tn = DomainLabel::new(y.domain_index, n)?;
        y_real.push(append_label(&y.features, &tn)?.into_matrix());
        y_gen_in.push(append_label(&y.features, &clean)?.into_matrix());
        y_noise_labels.push(tn);
    }

    // Batch validator: every model input must carry exactly N+1 label rows.
    let want_rows = state.feature_rows + n + 1;
    for t in s_real.iter().chain(&s_gen_in).chain(&y_real).chain(&y_gen_in) {
        let rows = t.dims2().map_err(TrainError::Autodiff)?.0;
        if rows != want_rows {
            return Err(TrainError::Config(format!(
                "conditioned input has {rows} rows, expected {want_rows}"
            )));
        }
    }
    Ok(StepInputs { s_real, s_gen_in, y_real, y_gen_in, y_noise_labels, clean_label: Some(clean) })
}

/// Detached label swap on a generator output, used only in the
/// discriminator phase where everything is plain values.
fn swap_label_host(matrix: Tensor, label: &DomainLabel, n_noise: usize) -> Result<Tensor> {
    Ok(ExtendedFeature::from_matrix(matrix, n_noise)?.replace_label(label)?.into_matrix())
}

struct DiscTerms {
    adv1_disc_s: f32,
    adv1_disc_y: f32,
    adv2_s: f32,
    adv2_y: f32,
}

/// Phase one: update both discriminators on detached fakes.
fn d_phase(state: &mut ExperimentState, inputs: &StepInputs) -> Result<DiscTerms> {
    let nit = state.config.nit();
    let n = state.n_noise;
    let models = &state.models;

    // First-hop fakes and two-hop cycled fakes as detached values.
    let mut fake_s = Vec::with_capacity(inputs.y_gen_in.len());
    let mut cycled_y = Vec::with_capacity(inputs.y_gen_in.len());
    for (y_in, i) in inputs.y_gen_in.iter().zip(0..) {
        let hop = models.g_ys.eval(y_in)?;
        let hop_for_cycle = if nit {
            swap_label_host(hop.clone(), &inputs.y_noise_labels[i], n)?
        } else {
            hop.clone()
        };
        cycled_y.push(models.g_sy.eval(&hop_for_cycle)?);
        fake_s.push(hop);
    }
    let mut fake_y = Vec::with_capacity(inputs.s_gen_in.len());
    let mut cycled_s = Vec::with_capacity(inputs.s_gen_in.len());
    for s_in in &inputs.s_gen_in {
        let hop = models.g_sy.eval(s_in)?;
        let hop_for_cycle = if nit {
            let clean = inputs.clean_label.as_ref().expect("conditioned inputs carry labels");
            swap_label_host(hop.clone(), clean, n)?
        } else {
            hop.clone()
        };
        cycled_s.push(models.g_ys.eval(&hop_for_cycle)?);
        fake_y.push(hop);
    }

    let mut g = Graph::new();
    let real_s = constants(&mut g, &inputs.s_real);
    let real_y = constants(&mut g, &inputs.y_real);
    let fake_s = constants(&mut g, &fake_s);
    let fake_y = constants(&mut g, &fake_y);
    let cycled_s = constants(&mut g, &cycled_s);
    let cycled_y = constants(&mut g, &cycled_y);

    let adv1_s = adv1_discriminator_loss(&mut g, &models.d_s, &real_s, &fake_s, Bind::Trainable)?;
    let adv1_y = adv1_discriminator_loss(&mut g, &models.d_y, &real_y, &fake_y, Bind::Trainable)?;
    let adv2_s = adv2_discriminator_loss(&mut g, &models.d_s, &real_s, &cycled_s, Bind::Trainable)?;
    let adv2_y = adv2_discriminator_loss(&mut g, &models.d_y, &real_y, &cycled_y, Bind::Trainable)?;

    let terms = DiscTerms {
        adv1_disc_s: g.scalar(adv1_s)?,
        adv1_disc_y: g.scalar(adv1_y)?,
        adv2_s: g.scalar(adv2_s)?,
        adv2_y: g.scalar(adv2_y)?,
    };

    let sum1 = g.add(adv1_s, adv1_y)?;
    let sum2 = g.add(adv2_s, adv2_y)?;
    let total = g.add(sum1, sum2)?;
    g.backward(total)?;

    apply_grads(&g, state.models.d_s.params_mut(), &mut state.opt_d_s)?;
    apply_grads(&g, state.models.d_y.params_mut(), &mut state.opt_d_y)?;
    Ok(terms)
}

struct GenTerms {
    cyc: f32,
    idm: f32,
    adv1_gen_s: f32,
    adv1_gen_y: f32,
}

/// Phase two: update both generators with discriminators frozen.
fn g_phase(state: &mut ExperimentState, inputs: &StepInputs) -> Result<GenTerms> {
    let nit = state.config.nit();
    let models = &state.models;
    let weights = state.config.weights;
    let mut g = Graph::new();

    let s_real = constants(&mut g, &inputs.s_real);
    let y_real = constants(&mut g, &inputs.y_real);

    let paths = if nit {
        let s_gen_in = constants(&mut g, &inputs.s_gen_in);
        let y_gen_in = constants(&mut g, &inputs.y_gen_in);
        nit_cycle_loss(
            &mut g,
            &models.g_ys,
            &models.g_sy,
            &s_real,
            &s_gen_in,
            &y_gen_in,
            &y_real,
            state.n_noise + 1,
            Bind::Trainable,
        )?
    } else {
        cycle_loss(&mut g, &models.g_ys, &models.g_sy, &s_real, &y_real, Bind::Trainable)?
    };

    let idm = identity_loss(&mut g, &models.g_ys, &models.g_sy, &s_real, &y_real, Bind::Trainable)?;
    let adv_s = adv1_generator_loss(
        &mut g,
        &models.d_s,
        &paths.fake_s,
        state.config.adv_form,
        Bind::Frozen,
    )?;
    let adv_y = adv1_generator_loss(
        &mut g,
        &models.d_y,
        &paths.fake_y,
        state.config.adv_form,
        Bind::Frozen,
    )?;

    let terms = GenTerms {
        cyc: g.scalar(paths.loss)?,
        idm: g.scalar(idm)?,
        adv1_gen_s: g.scalar(adv_s)?,
        adv1_gen_y: g.scalar(adv_y)?,
    };

    let weighted_cyc = g.affine(paths.loss, weights.lambda_cyc, 0.0);
    let weighted_idm = g.affine(idm, weights.lambda_idm, 0.0);
    let adv = g.add(adv_s, adv_y)?;
    let reg = g.add(weighted_cyc, weighted_idm)?;
    let total = g.add(adv, reg)?;
    g.backward(total)?;

    apply_grads(&g, state.models.g_ys.params_mut(), &mut state.opt_g_ys)?;
    apply_grads(&g, state.models.g_sy.params_mut(), &mut state.opt_g_sy)?;
    Ok(terms)
}

fn apply_grads(g: &Graph, mut params: Vec<&mut Parameter>, opt: &mut AdamOptimizer) -> Result<()> {
    let grads: Vec<Option<Tensor>> = params.iter().map(|p| g.export_grad(p.id())).collect();
    opt.step(&mut params, &grads).map_err(TrainError::Autodiff)
}

/// One full optimization step: discriminators first, then generators.
/// Advances the step counter and appends to the loss history.
pub fn train_step(
    state: &mut ExperimentState,
    s_batch: &[TrainingSample],
    y_batch: &[TrainingSample],
) -> Result<LossReport> {
    let inputs = build_inputs(state, s_batch, y_batch)?;
    let d = d_phase(state, &inputs)?;
    let gt = g_phase(state, &inputs)?;
    let report = compose_objectives(
        &state.config.weights,
        &LossTerms {
            cyc: gt.cyc,
            idm: gt.idm,
            adv1_disc_s: d.adv1_disc_s,
            adv1_disc_y: d.adv1_disc_y,
            adv1_gen_s: gt.adv1_gen_s,
            adv1_gen_y: gt.adv1_gen_y,
            adv2_s: d.adv2_s,
            adv2_y: d.adv2_y,
        },
    );
    if !report.is_finite() {
        return Err(TrainError::NonFinite { step: state.step, report });
    }
    state.history.push(report);
    state.step += 1;
    Ok(report)
}

/// A finished (or step-capped) run's artifacts.
pub struct TrainOutcome {
    pub state: ExperimentState,
    pub csv_path: PathBuf,
    pub checkpoint_paths: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
}

/// Train from scratch, writing the loss CSV, config echo, and checkpoints
/// into `out_dir`.
pub fn train(
    config: &TrainConfig,
    manifest: &CorpusManifest,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let corpus = LoadedCorpus::from_manifest(manifest)?;
    let state = ExperimentState::new(config.clone(), manifest)?;
    run_loop(state, &corpus, out_dir)
}

/// Continue a checkpointed run; epoch numbering and batch draws carry on
/// exactly where the checkpoint left off.
pub fn resume(
    config: &TrainConfig,
    manifest: &CorpusManifest,
    checkpoint_path: &Path,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let corpus = LoadedCorpus::from_manifest(manifest)?;
    let ckpt = load_checkpoint(checkpoint_path)?;
    let state = ExperimentState::from_checkpoint(config.clone(), manifest, &ckpt)?;
    run_loop(state, &corpus, out_dir)
}

fn run_loop(
    mut state: ExperimentState,
    corpus: &LoadedCorpus,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let echo_path = out_dir.join(CONFIG_ECHO_NAME);
    let echo = serde_json::to_string_pretty(&state.config)
        .map_err(|e| TrainError::Config(format!("config echo: {e}")))?;
    fs::write(&echo_path, format!("{echo}\n")).map_err(|e| io_err(&echo_path, e))?;

    let csv_path = out_dir.join(LOSS_CSV_NAME);
    let fresh = !(state.step > 0 && csv_path.exists());
    let file = fs::OpenOptions::new()
        .create(true)
        .append(!fresh)
        .write(true)
        .truncate(fresh)
        .open(&csv_path)
        .map_err(|e| io_err(&csv_path, e))?;
    let mut csv = BufWriter::new(file);
    if fresh {
        writeln!(csv, "{}", LossReport::CSV_HEADER).map_err(|e| io_err(&csv_path, e))?;
    }

    let steps_per_epoch = corpus.steps_per_epoch(state.config.batch_size);
    let mut checkpoint_paths = Vec::new();
    let config = state.config.clone();

    'epochs: while state.epoch < config.epochs {
        for _ in 0..steps_per_epoch {
            if config.max_steps.is_some_and(|cap| state.step >= cap) {
                break 'epochs;
            }
            let (s_batch, y_batch) = sample_unpaired_batch(
                corpus,
                config.batch_size,
                config.crop_frames,
                config.seed,
                state.step,
            )?;
            let step = state.step;
            let epoch = state.epoch;
            let report = match train_step(&mut state, &s_batch, &y_batch) {
                Ok(r) => r,
                Err(e) => {
                    csv.flush().map_err(|err| io_err(&csv_path, err))?;
                    return Err(e);
                }
            };
            writeln!(csv, "{}", report.csv_row(step, epoch)).map_err(|e| io_err(&csv_path, e))?;
        }
        state.epoch += 1;
        if config.checkpoint_every > 0 && state.epoch.is_multiple_of(config.checkpoint_every) {
            let path = out_dir.join(format!("checkpoint-epoch-{:04}.bin", state.epoch));
            save_checkpoint(&state.checkpoint()?, &path)?;
            checkpoint_paths.push(path);
        }
    }
    csv.flush().map_err(|e| io_err(&csv_path, e))?;

    let final_checkpoint = out_dir.join(FINAL_CHECKPOINT_NAME);
    save_checkpoint(&state.checkpoint()?, &final_checkpoint)?;
    Ok(TrainOutcome { state, csv_path, checkpoint_paths, final_checkpoint })
}

/// Read-only inference wrapper around a checkpoint's noisy-to-clean
/// generator and analysis settings.
pub struct Enhancer {
    g_ys: Generator,
    stft: StftConfig,
    scaler: FeatureScaler,
    sample_rate: u32,
    n_noise: usize,
    nit: bool,
}

impl Enhancer {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = &ckpt.meta;
        let mut g_ys =
            Generator::init(meta.gen_spec, "g_ys", &mut stream_rng(0, STREAM_INIT_G_YS, 0))?;
        load_model_params(g_ys.params_mut(), ckpt)?;
        Ok(Self {
            g_ys,
            stft: meta.stft,
            scaler: meta.scaler,
            sample_rate: meta.sample_rate,
            n_noise: meta.n_noise,
            nit: meta.nit,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Enhance one utterance: analyze, normalize, condition on the clean
    /// target label, run the generator, discard predicted label rows,
    /// invert scaling, and resynthesize under the noisy phase. Output
    /// length equals input length.
    pub fn enhance(&self, noisy: &Waveform) -> Result<Waveform> {
        if noisy.sample_rate != self.sample_rate {
            return Err(TrainError::SampleRate { got: noisy.sample_rate, want: self.sample_rate });
        }
        let spec = stft(noisy, &self.stft);
        let (bins, frames) = (spec.bins(), spec.frames());
        let mag = spec.magnitude();
        let features = Tensor::from_fn(vec![bins, frames], |i| {
            self.scaler.normalize(log_compress(mag[i])) as f32
        });
        let input = if self.nit {
            append_label(&features, &DomainLabel::clean(self.n_noise))?.into_matrix()
        } else {
            features
        };
        let output = self.g_ys.eval(&input)?;
        let enhanced_features = if self.nit {
            ExtendedFeature::from_matrix(output, self.n_noise)?.split_label().0
        } else {
            output
        };
        let enhanced_mag: Vec<f64> = enhanced_features
            .data()
            .iter()
            .map(|&v| log_expand(self.scaler.denormalize(v as f64)))
            .collect();
        let out = istft_trimmed(&spec.with_magnitude(enhanced_mag)?)?;
        debug_assert_eq!(out.samples.len(), noisy.samples.len());
        Ok(out)
    }
}

/// Convenience composition used by loss terms on full utterances.
pub fn log_spectral_l1(a: &Waveform, b: &Waveform, cfg: &StftConfig) -> f64 {
    let sa = stft(a, cfg);
    let sb = stft(b, cfg);
    let n = sa.magnitude().len().min(sb.magnitude().len());
    let sum: f64 = sa.magnitude()[..n]
        .iter()
        .zip(&sb.magnitude()[..n])
        .map(|(&x, &y)| (log_compress(x) - log_compress(y)).abs())
        .sum();
    sum / n as f64
}
