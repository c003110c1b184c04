//! Conditional generator and discriminator networks.
//!
//! Both operate on extended feature matrices treated as 1-channel images
//! of rows x frames. The generator is shape-preserving: label rows go in,
//! predicted label rows come out. The discriminator emits a patch grid of
//! probabilities clamped to the open unit interval.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Bind, Graph, NodeId, Parameter, Result, Tensor};

/// Epsilon inside instance normalization.
pub const NORM_EPS: f32 = 1e-5;
/// Discriminator outputs are clamped to `(SCORE_EPS, 1 - SCORE_EPS)`.
pub const SCORE_EPS: f32 = 1e-7;
/// Standard deviation of the weight-init normal distribution.
pub const INIT_STD: f32 = 0.02;

/// Anything that maps a feature-matrix node to a same-shaped node.
pub trait FeatureMap {
    fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId>;
}

/// Anything that maps a feature-matrix node to a score-grid node in (0,1).
pub trait Critic {
    fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// Input rows, feature rows plus N+1 label rows.
    pub in_rows: usize,
    pub base_channels: usize,
    pub n_residual_blocks: usize,
    /// Total spatial reduction before upsampling; a power of two, with
    /// `log2(factor)` stride-2 stages mirrored by as many shuffle stages.
    pub downsample_factor: usize,
}

impl GeneratorSpec {
    pub fn new(in_rows: usize) -> Self {
        Self { in_rows, base_channels: 16, n_residual_blocks: 2, downsample_factor: 4 }
    }

    fn validate(&self) -> Result<()> {
        if self.in_rows == 0 || self.base_channels == 0 {
            return Err(invalid("generator spec", "in_rows and base_channels must be positive"));
        }
        if self.downsample_factor == 0 || !self.downsample_factor.is_power_of_two() {
            return Err(invalid(
                "generator spec",
                format!("downsample factor {} is not a power of two", self.downsample_factor),
            ));
        }
        Ok(())
    }

    fn n_down(&self) -> usize {
        self.downsample_factor.trailing_zeros() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub in_rows: usize,
    pub base_channels: usize,
    /// Stride-2 blocks before the 1-channel head.
    pub n_layers: usize,
}

impl DiscriminatorSpec {
    pub fn new(in_rows: usize) -> Self {
        Self { in_rows, base_channels: 16, n_layers: 4 }
    }

    fn validate(&self) -> Result<()> {
        if self.in_rows == 0 || self.base_channels == 0 || self.n_layers == 0 {
            return Err(invalid("discriminator spec", "all fields must be positive"));
        }
        Ok(())
    }
}

fn invalid(op: &'static str, detail: impl Into<String>) -> AutodiffError {
    AutodiffError::Shape { op, detail: detail.into() }
}

fn normal_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(0.0f32, INIT_STD).expect("valid std");
    Tensor::from_fn(shape, |_| dist.sample(rng))
}

/// 3x3 convolution, padding 1.
#[derive(Debug)]
struct Conv2d {
    weight: Parameter,
    bias: Option<Parameter>,
    stride: (usize, usize),
}

impl Conv2d {
    fn init(
        name: String,
        cin: usize,
        cout: usize,
        stride: usize,
        with_bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let weight =
            Parameter::new(format!("{name}.weight"), normal_tensor(vec![cout, cin, 3, 3], rng));
        let bias =
            with_bias.then(|| Parameter::new(format!("{name}.bias"), Tensor::zeros(vec![cout])));
        Self { weight, bias, stride: (stride, stride) }
    }

    fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId> {
        let w = g.param(&self.weight, bind);
        let b = self.bias.as_ref().map(|p| g.param(p, bind));
        g.conv2d(x, w, b, self.stride, (1, 1))
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.weight);
        if let Some(b) = &self.bias {
            out.push(b);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.weight);
        if let Some(b) = &mut self.bias {
            out.push(b);
        }
    }
}

#[derive(Debug)]
struct InstanceNorm2d {
    gamma: Parameter,
    beta: Parameter,
}

impl InstanceNorm2d {
    fn init(name: String, channels: usize) -> Self {
        Self {
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::filled(vec![channels], 1.0)),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(vec![channels])),
        }
    }

    fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId> {
        let gamma = g.param(&self.gamma, bind);
        let beta = g.param(&self.beta, bind);
        g.instance_norm(x, gamma, beta, NORM_EPS)
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}

/// conv -> instance norm -> GLU, the shared downsampling unit.
#[derive(Debug)]
struct GatedBlock {
    conv: Conv2d,
    norm: InstanceNorm2d,
}

impl GatedBlock {
    fn init(
        name: String,
        cin: usize,
        cout_pre_glu: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            conv: Conv2d::init(format!("{name}.conv"), cin, cout_pre_glu, stride, false, rng),
            norm: InstanceNorm2d::init(format!("{name}.norm"), cout_pre_glu),
        }
    }

    fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId> {
        let h = self.conv.forward(g, x, bind)?;
        let h = self.norm.forward(g, h, bind)?;
        g.glu(h, 0)
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.conv.collect(out);
        self.norm.collect(out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.conv.collect_mut(out);
        self.norm.collect_mut(out);
    }
}

#[derive(Debug)]
struct ResidualBlock {
    gate: GatedBlock,
    conv2: Conv2d,
    norm2: InstanceNorm2d,
}

impl ResidualBlock {
    fn init(name: String, channels: usize, rng: &mut impl Rng) -> Self {
        Self {
            gate: GatedBlock::init(format!("{name}.gate"), channels, 2 * channels, 1, rng),
            conv2: Conv2d::init(format!("{name}.conv2"), channels, channels, 1, false, rng),
            norm2: InstanceNorm2d::init(format!("{name}.norm2"), channels),
        }
    }

    fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId> {
        let h = self.gate.forward(g, x, bind)?;
        let h = self.conv2.forward(g, h, bind)?;
        let h = self.norm2.forward(g, h, bind)?;
        g.add(x, h)
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.gate.collect(out);
        self.conv2.collect(out);
        self.norm2.collect(out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.gate.collect_mut(out);
        self.conv2.collect_mut(out);
        self.norm2.collect_mut(out);
    }
}

/// Shape-preserving conditional generator.
///
/// Stem conv + GLU, `log2(downsample_factor)` strided gated blocks,
/// residual gated blocks at the bottleneck, pixel-shuffle + SiLU
/// upsampling back to full resolution, and a linear conv head. Inputs are
/// zero-padded on the bottom/right to a multiple of the downsample factor
/// and cropped back afterwards.
#[derive(Debug)]
pub struct Generator {
    spec: GeneratorSpec,
    stem: Conv2d,
    down: Vec<GatedBlock>,
    res: Vec<ResidualBlock>,
    up: Vec<Conv2d>,
    head: Conv2d,
}

impl Generator {
    /// Draws conv weights in construction order from `rng`; biases start
    /// at zero and norm scales at one.
    pub fn init(spec: GeneratorSpec, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let b = spec.base_channels;
        let n_down = spec.n_down();
        let stem = Conv2d::init(format!("{prefix}.stem"), 1, 2 * b, 1, true, rng);
        let down = (0..n_down)
            .map(|i| {
                let cin = b << i;
                GatedBlock::init(format!("{prefix}.down.{i}"), cin, 4 * cin, 2, rng)
            })
            .collect();
        let mid = b << n_down;
        let res = (0..spec.n_residual_blocks)
            .map(|i| ResidualBlock::init(format!("{prefix}.res.{i}"), mid, rng))
            .collect();
        let up = (0..n_down)
            .map(|i| {
                let cin = mid >> i;
                Conv2d::init(format!("{prefix}.up.{i}"), cin, 2 * cin, 1, true, rng)
            })
            .collect();
        let head = Conv2d::init(format!("{prefix}.head"), b, 1, 1, true, rng);
        Ok(Self { spec, stem, down, res, up, head })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        self.stem.collect(&mut out);
        for d in &self.down {
            d.collect(&mut out);
        }
        for r in &self.res {
            r.collect(&mut out);
        }
        for u in &self.up {
            u.collect(&mut out);
        }
        self.head.collect(&mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        self.stem.collect_mut(&mut out);
        for d in &mut self.down {
            d.collect_mut(&mut out);
        }
        for r in &mut self.res {
            r.collect_mut(&mut out);
        }
        for u in &mut self.up {
            u.collect_mut(&mut out);
        }
        self.head.collect_mut(&mut out);
        out
    }

    /// Map a `[rows, frames]` node to a same-shaped node.
    pub fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId> {
        let (rows, cols) = g.value(x).dims2()?;
        if rows != self.spec.in_rows {
            return Err(invalid(
                "generator",
                format!("input has {rows} rows, spec expects {}", self.spec.in_rows),
            ));
        }
        let f = self.spec.downsample_factor;
        let (pad_r, pad_c) = ((f - rows % f) % f, (f - cols % f) % f);

        let mut h = g.reshape(x, vec![1, rows, cols])?;
        if pad_r > 0 || pad_c > 0 {
            h = g.zero_pad2d(h, [0, pad_r, 0, pad_c])?;
        }
        h = self.stem.forward(g, h, bind)?;
        h = g.glu(h, 0)?;
        for d in &self.down {
            h = d.forward(g, h, bind)?;
        }
        for r in &self.res {
            h = r.forward(g, h, bind)?;
        }
        for u in &self.up {
            h = u.forward(g, h, bind)?;
            h = g.pixel_shuffle(h, 2)?;
            h = g.silu(h);
        }
        h = self.head.forward(g, h, bind)?;
        h = g.crop2d(h, 0, 0, rows, cols)?;
        g.reshape(h, vec![rows, cols])
    }

    /// Forward on a scratch graph with frozen parameters; returns values
    /// computed by exactly the kernels training uses.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let input = g.constant(x.clone());
        let out = self.forward(&mut g, input, Bind::Frozen)?;
        Ok(g.value(out).clone())
    }
}

impl FeatureMap for Generator {
    fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId> {
        Generator::forward(self, g, x, bind)
    }
}

/// Patch discriminator: strided gated blocks, 1-channel conv head,
/// sigmoid, clamp into the open unit interval.
#[derive(Debug)]
pub struct Discriminator {
    spec: DiscriminatorSpec,
    blocks: Vec<GatedBlock>,
    head: Conv2d,
}

impl Discriminator {
    pub fn init(spec: DiscriminatorSpec, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let b = spec.base_channels;
        let blocks = (0..spec.n_layers)
            .map(|i| {
                let cin = if i == 0 { 1 } else { b << (i - 1) };
                GatedBlock::init(format!("{prefix}.block.{i}"), cin, b << (i + 1), 2, rng)
            })
            .collect();
        let head =
            Conv2d::init(format!("{prefix}.head"), b << (spec.n_layers - 1), 1, 1, true, rng);
        Ok(Self { spec, blocks, head })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for blk in &self.blocks {
            blk.collect(&mut out);
        }
        self.head.collect(&mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for blk in &mut self.blocks {
            blk.collect_mut(&mut out);
        }
        self.head.collect_mut(&mut out);
        out
    }

    /// Map a `[rows, frames]` node to a `[1, gh, gw]` probability grid.
    pub fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId> {
        let (rows, cols) = g.value(x).dims2()?;
        if rows != self.spec.in_rows {
            return Err(invalid(
                "discriminator",
                format!("input has {rows} rows, spec expects {}", self.spec.in_rows),
            ));
        }
        let mut h = g.reshape(x, vec![1, rows, cols])?;
        for blk in &self.blocks {
            h = blk.forward(g, h, bind)?;
        }
        h = self.head.forward(g, h, bind)?;
        h = g.sigmoid(h);
        Ok(g.clamp(h, SCORE_EPS, 1.0 - SCORE_EPS))
    }

    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let input = g.constant(x.clone());
        let out = self.forward(&mut g, input, Bind::Frozen)?;
        Ok(g.value(out).clone())
    }
}

impl Critic for Discriminator {
    fn forward(&self, g: &mut Graph, x: NodeId, bind: Bind) -> Result<NodeId> {
        Discriminator::forward(self, g, x, bind)
    }
}
