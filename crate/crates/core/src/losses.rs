//! Adversarial, cycle-consistency, and identity-mapping objectives.
//!
//! Every builder appends nodes to a caller-supplied graph and returns the
//! scalar loss node, so the training loop composes terms and runs one
//! backward per phase. Expectations are arithmetic means, first over each
//! item's elements and then over the minibatch. Discriminator scores
//! arrive already clamped inside (0,1), making the log forms finite.
//!
//! Label conventions for the conditioned cycle: the clean-path input
//! carries the drawn target-noise label and is reconstructed against the
//! clean-labeled target; the noisy-path input carries the clean label and
//! is reconstructed against its ground-truth-noise-labeled target. Between
//! the two generator hops the predicted label rows are overwritten with
//! the next hop's target label, exactly as the conversion schedule
//! prescribes, while feature rows pass through untouched. Targets keep
//! their ground-truth label rows, so mislabeled predictions are penalized
//! through the same L1 term.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Bind, Graph, NodeId, Tensor};
use crate::models::{Critic, FeatureMap};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch lengths differ: {0} vs {1}")]
    BatchLengths(usize, usize),
    #[error("{0} label rows do not fit in {1} total rows")]
    LabelRows(usize, usize),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Generator-side adversarial convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorAdvForm {
    /// Minimize `-E log D(fake)`.
    #[default]
    NonSaturating,
    /// Minimize `+E log(1 - D(fake))`, the literal minimax objective.
    LiteralMinimax,
}

/// Composition weights; the adversarial terms always carry weight one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_cyc: f32,
    pub lambda_idm: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_cyc: 10.0, lambda_idm: 5.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_cyc", self.lambda_cyc), ("lambda_idm", self.lambda_idm)] {
            if !v.is_finite() || v < 0.0 {
                return Err(LossError::Autodiff(AutodiffError::Invalid(format!(
                    "{name} must be finite and nonnegative, got {v}"
                ))));
            }
        }
        Ok(())
    }
}

/// Raw per-term scalars measured in one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub cyc: f32,
    pub idm: f32,
    pub adv1_disc_s: f32,
    pub adv1_disc_y: f32,
    pub adv1_gen_s: f32,
    pub adv1_gen_y: f32,
    pub adv2_s: f32,
    pub adv2_y: f32,
}

/// Terms plus the per-model weighted totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub terms: LossTerms,
    pub total_g_ys: f32,
    pub total_g_sy: f32,
    pub total_d_s: f32,
    pub total_d_y: f32,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "step,epoch,cyc,idm,adv1_disc_s,adv1_disc_y,adv1_gen_s,adv1_gen_y,adv2_s,adv2_y,total_g_ys,total_g_sy,total_d_s,total_d_y";

    pub fn csv_row(&self, step: u64, epoch: u64) -> String {
        let t = &self.terms;
        format!(
            "{step},{epoch},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.cyc,
            t.idm,
            t.adv1_disc_s,
            t.adv1_disc_y,
            t.adv1_gen_s,
            t.adv1_gen_y,
            t.adv2_s,
            t.adv2_y,
            self.total_g_ys,
            self.total_g_sy,
            self.total_d_s,
            self.total_d_y
        )
    }

    pub fn is_finite(&self) -> bool {
        let t = &self.terms;
        [
            t.cyc,
            t.idm,
            t.adv1_disc_s,
            t.adv1_disc_y,
            t.adv1_gen_s,
            t.adv1_gen_y,
            t.adv2_s,
            t.adv2_y,
            self.total_g_ys,
            self.total_g_sy,
            self.total_d_s,
            self.total_d_y,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Weighted totals from raw terms.
///
/// Each generator pairs with the discriminator of its output domain; the
/// shared cycle and identity terms count toward both generator totals.
pub fn compose_objectives(weights: &LossWeights, terms: &LossTerms) -> LossReport {
    LossReport {
        terms: *terms,
        total_g_ys: terms.adv1_gen_s
            + weights.lambda_cyc * terms.cyc
            + weights.lambda_idm * terms.idm,
        total_g_sy: terms.adv1_gen_y
            + weights.lambda_cyc * terms.cyc
            + weights.lambda_idm * terms.idm,
        total_d_s: terms.adv1_disc_s + terms.adv2_s,
        total_d_y: terms.adv1_disc_y + terms.adv2_y,
    }
}

/// Lift a host batch into graph constants.
pub fn constants(g: &mut Graph, batch: &[Tensor]) -> Vec<NodeId> {
    batch.iter().map(|t| g.constant(t.clone())).collect()
}

fn mean_scalars(g: &mut Graph, terms: &[NodeId]) -> Result<NodeId> {
    let Some((&first, rest)) = terms.split_first() else {
        return Err(LossError::EmptyBatch);
    };
    let mut acc = first;
    for &t in rest {
        acc = g.add(acc, t)?;
    }
    Ok(g.affine(acc, 1.0 / terms.len() as f32, 0.0))
}

/// Mean over the batch of per-item mean absolute differences.
fn l1_batch(g: &mut Graph, outputs: &[NodeId], targets: &[NodeId]) -> Result<NodeId> {
    if outputs.len() != targets.len() {
        return Err(LossError::BatchLengths(outputs.len(), targets.len()));
    }
    let mut terms = Vec::with_capacity(outputs.len());
    for (&o, &t) in outputs.iter().zip(targets) {
        terms.push(g.l1_distance(o, t)?);
    }
    mean_scalars(g, &terms)
}

/// First `label_rows` rows of a `[rows, cols]` matrix, as its own tensor.
pub fn label_block_of(t: &Tensor, label_rows: usize) -> Result<Tensor> {
    let (rows, cols) = t.dims2().map_err(LossError::Autodiff)?;
    if label_rows == 0 || label_rows >= rows {
        return Err(LossError::LabelRows(label_rows, rows));
    }
    Ok(Tensor::new(vec![label_rows, cols], t.data()[..label_rows * cols].to_vec())
        .expect("slice matches shape"))
}

/// Overwrite the first rows of a `[rows, cols]` node with a constant label
/// block, leaving the remaining rows on the gradient path. A zero-row
/// block is a no-op, which is what evaluating the conditioned losses on
/// label-free features degenerates to.
pub fn swap_label_rows(g: &mut Graph, ext: NodeId, label_block: &Tensor) -> Result<NodeId> {
    let (rows, cols) = g.value(ext).dims2().map_err(LossError::Autodiff)?;
    let (lr, bc) = label_block.dims2().map_err(LossError::Autodiff)?;
    if lr == 0 {
        return Ok(ext);
    }
    if lr >= rows {
        return Err(LossError::LabelRows(lr, rows));
    }
    if bc != cols {
        return Err(LossError::BatchLengths(bc, cols));
    }
    let x3 = g.reshape(ext, vec![1, rows, cols])?;
    let features = g.crop2d(x3, lr, 0, rows - lr, cols)?;
    let block = {
        let t = label_block.clone().reshape(vec![1, lr, cols]).expect("rank lift");
        g.constant(t)
    };
    let joined = g.concat_rows(block, features)?;
    Ok(g.reshape(joined, vec![rows, cols])?)
}

/// Both reconstruction terms of a cycle objective plus the first-hop fakes.
///
/// The first hops are the adversarial fakes of the same step, so the
/// training loop reuses these nodes instead of running extra forwards.
pub struct CyclePaths {
    pub loss: NodeId,
    /// Clean-to-noisy-to-clean reconstruction term.
    pub s_term: NodeId,
    /// Noisy-to-clean-to-noisy reconstruction term.
    pub y_term: NodeId,
    /// First hops of the clean path, living in the noisy domain.
    pub fake_y: Vec<NodeId>,
    /// First hops of the noisy path, living in the clean domain.
    pub fake_s: Vec<NodeId>,
}

/// Unconditioned cycle objective: both directions reconstructed against
/// their own inputs, summed.
pub fn cycle_loss(
    g: &mut Graph,
    gys: &dyn FeatureMap,
    gsy: &dyn FeatureMap,
    s_batch: &[NodeId],
    y_batch: &[NodeId],
    bind: Bind,
) -> Result<CyclePaths> {
    if s_batch.is_empty() || y_batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mut fake_y = Vec::with_capacity(s_batch.len());
    let mut s_recon = Vec::with_capacity(s_batch.len());
    for &s in s_batch {
        let hop = gsy.forward(g, s, bind)?;
        s_recon.push(gys.forward(g, hop, bind)?);
        fake_y.push(hop);
    }
    let mut fake_s = Vec::with_capacity(y_batch.len());
    let mut y_recon = Vec::with_capacity(y_batch.len());
    for &y in y_batch {
        let hop = gys.forward(g, y, bind)?;
        y_recon.push(gsy.forward(g, hop, bind)?);
        fake_s.push(hop);
    }
    let s_term = l1_batch(g, &s_recon, s_batch)?;
    let y_term = l1_batch(g, &y_recon, y_batch)?;
    let loss = g.add(s_term, y_term)?;
    Ok(CyclePaths { loss, s_term, y_term, fake_y, fake_s })
}

/// Conditioned cycle objective over extended features.
///
/// Clean path: `s_tn` through the clean-to-noisy generator, label rows
/// swapped to clean, back through the noisy-to-clean generator, compared
/// against `s_tc`. Noisy path mirrors it: `y_tc` in, swap to the item's
/// ground-truth noise label (taken from `y_tn`), compared against `y_tn`.
/// `label_rows` of zero turns both swaps off, reducing this to
/// [`cycle_loss`] on raw features.
#[allow(clippy::too_many_arguments)]
pub fn nit_cycle_loss(
    g: &mut Graph,
    gys: &dyn FeatureMap,
    gsy: &dyn FeatureMap,
    s_tc: &[NodeId],
    s_tn: &[NodeId],
    y_tc: &[NodeId],
    y_tn: &[NodeId],
    label_rows: usize,
    bind: Bind,
) -> Result<CyclePaths> {
    if s_tc.is_empty() || y_tc.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if s_tc.len() != s_tn.len() {
        return Err(LossError::BatchLengths(s_tc.len(), s_tn.len()));
    }
    if y_tc.len() != y_tn.len() {
        return Err(LossError::BatchLengths(y_tc.len(), y_tn.len()));
    }

    // The raw first hop, predicted label rows intact, is what the
    // adversarial losses score; only the second hop sees swapped labels.
    let mut fake_y = Vec::with_capacity(s_tn.len());
    let mut s_recon = Vec::with_capacity(s_tn.len());
    for (&input, &target) in s_tn.iter().zip(s_tc) {
        let hop = gsy.forward(g, input, bind)?;
        fake_y.push(hop);
        let hop = if label_rows > 0 {
            let clean_block = label_block_of(g.value(target), label_rows)?;
            swap_label_rows(g, hop, &clean_block)?
        } else {
            hop
        };
        s_recon.push(gys.forward(g, hop, bind)?);
    }

    let mut fake_s = Vec::with_capacity(y_tc.len());
    let mut y_recon = Vec::with_capacity(y_tc.len());
    for (&input, &target) in y_tc.iter().zip(y_tn) {
        let hop = gys.forward(g, input, bind)?;
        fake_s.push(hop);
        let hop = if label_rows > 0 {
            let noise_block = label_block_of(g.value(target), label_rows)?;
            swap_label_rows(g, hop, &noise_block)?
        } else {
            hop
        };
        y_recon.push(gsy.forward(g, hop, bind)?);
    }

    let s_term = l1_batch(g, &s_recon, s_tc)?;
    let y_term = l1_batch(g, &y_recon, y_tn)?;
    let loss = g.add(s_term, y_term)?;
    Ok(CyclePaths { loss, s_term, y_term, fake_y, fake_s })
}

/// Identity-mapping objective: each generator applied to a sample already
/// in its output domain should change nothing. In conditioned mode the
/// inputs are extended features (clean label on the clean batch, ground
/// truth noise label on the noisy batch) and the label rows participate
/// in the L1.
pub fn identity_loss(
    g: &mut Graph,
    gys: &dyn FeatureMap,
    gsy: &dyn FeatureMap,
    s_batch: &[NodeId],
    y_batch: &[NodeId],
    bind: Bind,
) -> Result<NodeId> {
    if s_batch.is_empty() || y_batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mut s_out = Vec::with_capacity(s_batch.len());
    for &s in s_batch {
        s_out.push(gys.forward(g, s, bind)?);
    }
    let mut y_out = Vec::with_capacity(y_batch.len());
    for &y in y_batch {
        y_out.push(gsy.forward(g, y, bind)?);
    }
    let s_term = l1_batch(g, &s_out, s_batch)?;
    let y_term = l1_batch(g, &y_out, y_batch)?;
    Ok(g.add(s_term, y_term)?)
}

enum ScoreLog {
    LogD,
    LogOneMinusD,
}

fn expected_log_score(
    g: &mut Graph,
    d: &dyn Critic,
    batch: &[NodeId],
    form: ScoreLog,
    bind_d: Bind,
) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(batch.len());
    for &x in batch {
        let score = d.forward(g, x, bind_d)?;
        let lg = match form {
            ScoreLog::LogD => g.log(score),
            ScoreLog::LogOneMinusD => {
                let flipped = g.affine(score, -1.0, 1.0);
                g.log(flipped)
            }
        };
        terms.push(g.mean(lg));
    }
    mean_scalars(g, &terms)
}

/// Discriminator side of the first adversarial objective:
/// `-(E log D(real) + E log(1 - D(fake)))`, minimized by the critic.
pub fn adv1_discriminator_loss(
    g: &mut Graph,
    d: &dyn Critic,
    real: &[NodeId],
    fake: &[NodeId],
    bind_d: Bind,
) -> Result<NodeId> {
    if real.is_empty() || fake.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let real_term = expected_log_score(g, d, real, ScoreLog::LogD, bind_d)?;
    let fake_term = expected_log_score(g, d, fake, ScoreLog::LogOneMinusD, bind_d)?;
    let sum = g.add(real_term, fake_term)?;
    Ok(g.affine(sum, -1.0, 0.0))
}

/// Generator side of the first adversarial objective. The critic must be
/// bound frozen by the caller; fakes are live generator outputs.
pub fn adv1_generator_loss(
    g: &mut Graph,
    d: &dyn Critic,
    fake: &[NodeId],
    form: GeneratorAdvForm,
    bind_d: Bind,
) -> Result<NodeId> {
    if fake.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    match form {
        GeneratorAdvForm::NonSaturating => {
            let term = expected_log_score(g, d, fake, ScoreLog::LogD, bind_d)?;
            Ok(g.affine(term, -1.0, 0.0))
        }
        GeneratorAdvForm::LiteralMinimax => {
            expected_log_score(g, d, fake, ScoreLog::LogOneMinusD, bind_d)
        }
    }
}

/// Second adversarial objective, discriminator only.
///
/// Functionally identical to [`adv1_discriminator_loss`] but evaluated on
/// two-generator cycled fakes. Callers pass the cycled batch as detached
/// values (graph constants), which is what confines gradients to the
/// critic.
pub fn adv2_discriminator_loss(
    g: &mut Graph,
    d: &dyn Critic,
    real: &[NodeId],
    cycled_fake: &[NodeId],
    bind_d: Bind,
) -> Result<NodeId> {
    adv1_discriminator_loss(g, d, real, cycled_fake, bind_d)
}
