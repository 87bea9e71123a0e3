//! Symbolic architecture accounting: parameters, multiply-accumulates and
//! receptive fields for backbone, RPN and R-CNN head variants.
//!
//! Nothing here instantiates weights. A model is an [`ArchSpec`], an ordered
//! list of [`Block`]s over an input of shape `(channels, height, width)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArchError {
    #[error("layer {index} ({kind:?}): {message}")]
    InvalidLayer {
        index: usize,
        kind: LayerKind,
        message: String,
    },
    #[error("layer {index} expects {expected} input channels but receives {actual}")]
    ChannelMismatch { index: usize, expected: u64, actual: u64 },
    #[error("layer {index}: kernel {kernel} does not fit a {size} input with padding {padding}")]
    SpatialUnderflow {
        index: usize,
        kernel: u64,
        size: u64,
        padding: u64,
    },
    #[error("residual body produces {body:?} but shortcut produces {shortcut:?}")]
    ResidualMismatch { body: Shape, shortcut: Shape },
    #[error("receptive field needs a sequential spec; analyze each branch separately")]
    Branched,
    #[error("layer {index} ({kind:?}) has no spatial receptive field")]
    NonSpatial { index: usize, kind: LayerKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    PointwiseConv,
    FullyConnected,
    BatchNorm,
    Pooling,
    GlobalPooling,
}

/// One layer. `in_ch` of a fully-connected layer is its flattened input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_ch: u64,
    pub out_ch: u64,
    pub kernel: u64,
    pub stride: u64,
    pub padding: u64,
    pub has_bias: bool,
}

impl LayerSpec {
    /// Bias-free convolution with "same" padding `k / 2`.
    pub fn conv(in_ch: u64, out_ch: u64, kernel: u64, stride: u64) -> Self {
        Self {
            kind: LayerKind::Conv,
            in_ch,
            out_ch,
            kernel,
            stride,
            padding: kernel / 2,
            has_bias: false,
        }
    }

    pub fn depthwise(channels: u64, kernel: u64, stride: u64) -> Self {
        Self {
            kind: LayerKind::DepthwiseConv,
            ..Self::conv(channels, channels, kernel, stride)
        }
    }

    pub fn pointwise(in_ch: u64, out_ch: u64) -> Self {
        Self {
            kind: LayerKind::PointwiseConv,
            ..Self::conv(in_ch, out_ch, 1, 1)
        }
    }

    pub fn fully_connected(in_features: u64, out_features: u64) -> Self {
        Self {
            kind: LayerKind::FullyConnected,
            has_bias: true,
            ..Self::conv(in_features, out_features, 1, 1)
        }
    }

    pub fn batch_norm(channels: u64) -> Self {
        Self {
            kind: LayerKind::BatchNorm,
            ..Self::conv(channels, channels, 1, 1)
        }
    }

    pub fn max_pool(channels: u64, kernel: u64, stride: u64) -> Self {
        Self {
            kind: LayerKind::Pooling,
            ..Self::conv(channels, channels, kernel, stride)
        }
    }

    pub fn global_pool(channels: u64) -> Self {
        Self {
            kind: LayerKind::GlobalPooling,
            ..Self::conv(channels, channels, 1, 1)
        }
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn with_padding(mut self, padding: u64) -> Self {
        self.padding = padding;
        self
    }

    fn check(&self, index: usize) -> Result<(), ArchError> {
        let fail = |message: &str| {
            Err(ArchError::InvalidLayer {
                index,
                kind: self.kind,
                message: message.to_string(),
            })
        };
        if self.in_ch == 0 || self.out_ch == 0 {
            return fail("channel counts must be positive");
        }
        if self.kernel == 0 || self.stride == 0 {
            return fail("kernel and stride must be positive");
        }
        let same_channels = matches!(
            self.kind,
            LayerKind::DepthwiseConv | LayerKind::BatchNorm | LayerKind::Pooling | LayerKind::GlobalPooling
        );
        if same_channels && self.in_ch != self.out_ch {
            return fail("in_ch must equal out_ch (channel multiplier 1)");
        }
        if self.kind == LayerKind::PointwiseConv && (self.kernel != 1 || self.stride != 1) {
            return fail("pointwise convolution is 1x1, stride 1");
        }
        Ok(())
    }
}

/// Learnable parameters of one layer. Batch-norm counts its scale and shift
/// only; running statistics are buffers, not parameters.
pub fn layer_params(layer: &LayerSpec) -> Result<u64, ArchError> {
    layer.check(0)?;
    let LayerSpec {
        in_ch,
        out_ch,
        kernel: k,
        has_bias,
        ..
    } = *layer;
    let bias = |n: u64| if has_bias { n } else { 0 };
    Ok(match layer.kind {
        LayerKind::Conv => k * k * in_ch * out_ch + bias(out_ch),
        LayerKind::DepthwiseConv => k * k * in_ch + bias(in_ch),
        LayerKind::PointwiseConv | LayerKind::FullyConnected => in_ch * out_ch + bias(out_ch),
        LayerKind::BatchNorm => 2 * out_ch,
        LayerKind::Pooling | LayerKind::GlobalPooling => 0,
    })
}

/// Output spatial size along one axis.
fn out_extent(size: u64, layer: &LayerSpec, index: usize) -> Result<u64, ArchError> {
    let padded = size + 2 * layer.padding;
    if padded < layer.kernel {
        return Err(ArchError::SpatialUnderflow {
            index,
            kernel: layer.kernel,
            size,
            padding: layer.padding,
        });
    }
    Ok((padded - layer.kernel) / layer.stride + 1)
}

/// Multiply-accumulates of one layer on an `in_h` x `in_w` input.
/// Normalization and pooling count as zero.
pub fn layer_flops(layer: &LayerSpec, in_h: u64, in_w: u64) -> Result<u64, ArchError> {
    layer.check(0)?;
    let k2 = layer.kernel * layer.kernel;
    let out_hw = || -> Result<u64, ArchError> { Ok(out_extent(in_h, layer, 0)? * out_extent(in_w, layer, 0)?) };
    Ok(match layer.kind {
        LayerKind::Conv => k2 * layer.in_ch * layer.out_ch * out_hw()?,
        LayerKind::DepthwiseConv => k2 * layer.in_ch * out_hw()?,
        LayerKind::PointwiseConv => layer.in_ch * layer.out_ch * out_hw()?,
        LayerKind::FullyConnected => layer.in_ch * layer.out_ch,
        LayerKind::BatchNorm | LayerKind::Pooling | LayerKind::GlobalPooling => 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: u64,
    pub height: u64,
    pub width: u64,
}

impl Shape {
    pub const fn new(channels: u64, height: u64, width: u64) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Block {
    Layer(LayerSpec),
    /// `body(x) + shortcut(x)`; an empty shortcut is the identity.
    Residual {
        body: Vec<Block>,
        shortcut: Vec<Block>,
    },
    /// Paths run on the same input and are concatenated along channels.
    /// Paths may end at different resolutions; the output takes the first
    /// path's resolution, the others being resampled without parameters.
    Parallel(Vec<Vec<Block>>),
}

impl From<LayerSpec> for Block {
    fn from(l: LayerSpec) -> Self {
        Block::Layer(l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    pub layers: Vec<Block>,
    pub input: Shape,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub params: u64,
    pub macs: u64,
}

impl std::ops::Add for Totals {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            params: self.params + o.params,
            macs: self.macs + o.macs,
        }
    }
}

struct Walker {
    index: usize,
}

impl Walker {
    fn walk(&mut self, blocks: &[Block], mut shape: Shape) -> Result<(Shape, Totals), ArchError> {
        let mut totals = Totals::default();
        for block in blocks {
            let (next, t) = match block {
                Block::Layer(l) => self.layer(l, shape)?,
                Block::Residual { body, shortcut } => {
                    let (b_shape, b_tot) = self.walk(body, shape)?;
                    let (s_shape, s_tot) = self.walk(shortcut, shape)?;
                    if b_shape != s_shape {
                        return Err(ArchError::ResidualMismatch {
                            body: b_shape,
                            shortcut: s_shape,
                        });
                    }
                    (b_shape, b_tot + s_tot)
                }
                Block::Parallel(paths) => {
                    let mut out: Option<Shape> = None;
                    let mut tot = Totals::default();
                    for path in paths {
                        let (p_shape, p_tot) = self.walk(path, shape)?;
                        tot = tot + p_tot;
                        out = Some(match out {
                            None => p_shape,
                            Some(o) => Shape {
                                channels: o.channels + p_shape.channels,
                                ..o
                            },
                        });
                    }
                    (out.unwrap_or(shape), tot)
                }
            };
            shape = next;
            totals = totals + t;
        }
        Ok((shape, totals))
    }

    fn layer(&mut self, l: &LayerSpec, shape: Shape) -> Result<(Shape, Totals), ArchError> {
        let index = self.index;
        self.index += 1;
        l.check(index)?;
        let flat = shape.channels * shape.height * shape.width;
        let expected_in = l.in_ch;
        let accepts = match l.kind {
            LayerKind::FullyConnected => expected_in == flat,
            _ => expected_in == shape.channels,
        };
        if !accepts {
            return Err(ArchError::ChannelMismatch {
                index,
                expected: expected_in,
                actual: if l.kind == LayerKind::FullyConnected {
                    flat
                } else {
                    shape.channels
                },
            });
        }
        let out = match l.kind {
            LayerKind::FullyConnected | LayerKind::GlobalPooling => Shape::new(l.out_ch, 1, 1),
            LayerKind::BatchNorm => shape,
            _ => Shape::new(
                l.out_ch,
                out_extent(shape.height, l, index)?,
                out_extent(shape.width, l, index)?,
            ),
        };
        let params = layer_params(l)?;
        let macs = layer_flops(l, shape.height, shape.width)?;
        Ok((out, Totals { params, macs }))
    }
}

impl ArchSpec {
    pub fn new(name: impl Into<String>, input: Shape, layers: Vec<Block>) -> Self {
        Self {
            name: name.into(),
            layers,
            input,
        }
    }

    pub fn with_input(mut self, input: Shape) -> Self {
        self.input = input;
        self
    }

    /// Check channel chaining and return the output shape with totals.
    pub fn analyze(&self) -> Result<(Shape, Totals), ArchError> {
        Walker { index: 0 }.walk(&self.layers, self.input)
    }

    /// Layers in order with residual bodies inlined and only the first path
    /// of each parallel block, stopping at the first non-spatial layer.
    pub fn trunk(&self) -> Vec<LayerSpec> {
        fn collect(blocks: &[Block], out: &mut Vec<LayerSpec>) -> bool {
            for b in blocks {
                let more = match b {
                    Block::Layer(l) => {
                        if matches!(l.kind, LayerKind::FullyConnected | LayerKind::GlobalPooling) {
                            return false;
                        }
                        out.push(*l);
                        true
                    }
                    Block::Residual { body, .. } => collect(body, out),
                    Block::Parallel(paths) => paths.first().is_none_or(|p| collect(p, out)),
                };
                if !more {
                    return false;
                }
            }
            true
        }
        let mut out = Vec::new();
        collect(&self.layers, &mut out);
        out
    }
}

pub fn model_params(spec: &ArchSpec) -> Result<u64, ArchError> {
    Ok(spec.analyze()?.1.params)
}

pub fn model_flops(spec: &ArchSpec) -> Result<u64, ArchError> {
    Ok(spec.analyze()?.1.macs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceptiveField {
    pub rf: u64,
    pub jump: u64,
}

/// `rf' = rf + (k - 1) * jump`, `jump' = jump * s` over a sequence of layers.
pub fn receptive_field_of(layers: &[LayerSpec]) -> Result<ReceptiveField, ArchError> {
    let mut acc = ReceptiveField { rf: 1, jump: 1 };
    for (index, l) in layers.iter().enumerate() {
        if matches!(l.kind, LayerKind::FullyConnected | LayerKind::GlobalPooling) {
            return Err(ArchError::NonSpatial { index, kind: l.kind });
        }
        acc.rf += (l.kernel - 1) * acc.jump;
        acc.jump *= l.stride;
    }
    Ok(acc)
}

/// Receptive field of a purely sequential spec.
pub fn receptive_field(spec: &ArchSpec) -> Result<ReceptiveField, ArchError> {
    let layers = spec
        .layers
        .iter()
        .map(|b| match b {
            Block::Layer(l) => Ok(*l),
            _ => Err(ArchError::Branched),
        })
        .collect::<Result<Vec<_>, _>>()?;
    receptive_field_of(&layers)
}

/// Exact parameter ratio of a bias-free depthwise-separable convolution to a
/// standard one with the same kernel and channels: `1/out + 1/k^2`, returned
/// as `(numerator, denominator)` = `(k^2 + out, k^2 * out)`.
pub fn separable_ratio(kernel: u64, out_ch: u64) -> (u64, u64) {
    (kernel * kernel + out_ch, kernel * kernel * out_ch)
}

pub mod presets {
    //! Parameterized specs for the backbone, RPN and R-CNN head variants.

    use super::*;

    /// Input used by the presets unless overridden: a 512 x 1024 RGB frame.
    pub const DEFAULT_INPUT: Shape = Shape::new(3, 512, 1024);
    /// Spatial-path width of the baseline backbone.
    pub const SP_WIDTH: u64 = 64;
    /// Channels entering the RPN and RoI head.
    pub const DETECTION_CHANNELS: u64 = 256;
    pub const ROI_POOL: u64 = 7;
    /// Classes of the R-CNN head: pedestrian and background.
    pub const HEAD_CLASSES: u64 = 2;
    pub const COMPACT_HEAD_WIDTH: u64 = 2048;
    pub const BASELINE_HEAD_WIDTH: u64 = 4096;
    pub const BASELINE_ANCHORS: u64 = 9;
    pub const COMPRESSED_ANCHORS: u64 = 25;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct SpatialPathConfig {
        pub width: u64,
        pub kernel: u64,
        pub separable: bool,
    }

    impl Default for SpatialPathConfig {
        fn default() -> Self {
            Self {
                width: SP_WIDTH,
                kernel: 3,
                separable: false,
            }
        }
    }

    /// Three stride-2 stages, each conv (or depthwise + pointwise) then BN.
    pub fn spatial_path_blocks(cfg: SpatialPathConfig) -> Vec<Block> {
        let mut blocks = Vec::new();
        let mut ch = 3;
        for _ in 0..3 {
            if cfg.separable {
                blocks.push(LayerSpec::depthwise(ch, cfg.kernel, 2).into());
                blocks.push(LayerSpec::pointwise(ch, cfg.width).into());
            } else {
                blocks.push(LayerSpec::conv(ch, cfg.width, cfg.kernel, 2).into());
            }
            blocks.push(LayerSpec::batch_norm(cfg.width).into());
            ch = cfg.width;
        }
        blocks
    }

    pub fn spatial_path(name: &str, cfg: SpatialPathConfig) -> ArchSpec {
        ArchSpec::new(name, DEFAULT_INPUT, spatial_path_blocks(cfg))
    }

    fn conv_bn(blocks: &mut Vec<Block>, in_ch: u64, out_ch: u64, k: u64, s: u64) {
        blocks.push(LayerSpec::conv(in_ch, out_ch, k, s).into());
        blocks.push(LayerSpec::batch_norm(out_ch).into());
    }

    fn downsample(in_ch: u64, out_ch: u64, stride: u64) -> Vec<Block> {
        if in_ch == out_ch && stride == 1 {
            return Vec::new();
        }
        let mut s = Vec::new();
        conv_bn(&mut s, in_ch, out_ch, 1, stride);
        s
    }

    fn stem(blocks: &mut Vec<Block>) {
        conv_bn(blocks, 3, 64, 7, 2);
        blocks.push(LayerSpec::max_pool(64, 3, 2).into());
    }

    fn basic_block(in_ch: u64, out_ch: u64, stride: u64) -> Block {
        let mut body = Vec::new();
        conv_bn(&mut body, in_ch, out_ch, 3, stride);
        conv_bn(&mut body, out_ch, out_ch, 3, 1);
        Block::Residual {
            body,
            shortcut: downsample(in_ch, out_ch, stride),
        }
    }

    fn bottleneck(in_ch: u64, width: u64, stride: u64) -> Block {
        let out_ch = width * 4;
        let mut body = Vec::new();
        conv_bn(&mut body, in_ch, width, 1, 1);
        conv_bn(&mut body, width, width, 3, stride);
        conv_bn(&mut body, width, out_ch, 1, 1);
        Block::Residual {
            body,
            shortcut: downsample(in_ch, out_ch, stride),
        }
    }

    fn classifier(blocks: &mut Vec<Block>, features: u64) {
        blocks.push(LayerSpec::global_pool(features).into());
        blocks.push(LayerSpec::fully_connected(features, 1000).into());
    }

    /// Standard 18-layer residual network; `head` adds global pooling and
    /// the 1000-way classifier.
    pub fn resnet18_blocks(head: bool) -> Vec<Block> {
        let mut blocks = Vec::new();
        stem(&mut blocks);
        let mut ch = 64;
        for (width, stride) in [(64, 1), (128, 2), (256, 2), (512, 2)] {
            blocks.push(basic_block(ch, width, stride));
            blocks.push(basic_block(width, width, 1));
            ch = width;
        }
        if head {
            classifier(&mut blocks, ch);
        }
        blocks
    }

    /// Standard 101-layer bottleneck network, stride on the 3x3 convolution.
    pub fn resnet101_blocks(head: bool) -> Vec<Block> {
        let mut blocks = Vec::new();
        stem(&mut blocks);
        let mut ch = 64;
        for (width, count, stride) in [(64, 3, 1), (128, 4, 2), (256, 23, 2), (512, 3, 2)] {
            for i in 0..count {
                blocks.push(bottleneck(ch, width, if i == 0 { stride } else { 1 }));
                ch = width * 4;
            }
        }
        if head {
            classifier(&mut blocks, ch);
        }
        blocks
    }

    pub fn resnet18(head: bool) -> ArchSpec {
        let name = if head { "resnet18" } else { "resnet18-backbone" };
        ArchSpec::new(name, DEFAULT_INPUT, resnet18_blocks(head))
    }

    pub fn resnet101(head: bool) -> ArchSpec {
        let name = if head { "resnet101" } else { "resnet101-backbone" };
        ArchSpec::new(name, DEFAULT_INPUT, resnet101_blocks(head))
    }

    /// Spatial path and context path side by side.
    pub fn two_path_backbone(name: &str, sp: SpatialPathConfig, context: Vec<Block>) -> ArchSpec {
        ArchSpec::new(
            name,
            DEFAULT_INPUT,
            vec![Block::Parallel(vec![spatial_path_blocks(sp), context])],
        )
    }

    /// The four backbone ablation rows, in order: baseline, 5x5 convolution,
    /// 5x5 depthwise-separable, and the latter with doubled SP channels.
    pub fn backbone_ablation() -> Vec<ArchSpec> {
        let base = SpatialPathConfig::default();
        let k5 = SpatialPathConfig { kernel: 5, ..base };
        let dw = SpatialPathConfig { separable: true, ..k5 };
        let wide = SpatialPathConfig {
            width: 2 * SP_WIDTH,
            ..dw
        };
        [
            ("SP+CP", base),
            ("SP+CP+5*5", k5),
            ("SP+CP+5*5Dw", dw),
            ("SP+CP+5*5Dw+Add channel", wide),
        ]
        .into_iter()
        .map(|(name, sp)| two_path_backbone(name, sp, resnet18_blocks(false)))
        .collect()
    }

    /// Reported backbone totals in millions of parameters for the ablation
    /// rows, kept for side-by-side display only.
    pub fn reference_params_millions(name: &str) -> Option<f64> {
        match name {
            "SP+CP" => Some(12.5),
            "SP+CP+5*5" => Some(14.1),
            "SP+CP+5*5Dw" => Some(11.7),
            "SP+CP+5*5Dw+Add channel" => Some(12.2),
            _ => None,
        }
    }

    fn rpn_heads(ch: u64, anchors: u64) -> Block {
        Block::Parallel(vec![
            vec![LayerSpec::pointwise(ch, 2 * anchors).with_bias(true).into()],
            vec![LayerSpec::pointwise(ch, 4 * anchors).with_bias(true).into()],
        ])
    }

    /// 3x3 convolution then objectness and box heads for 9 anchors.
    pub fn rpn_baseline() -> ArchSpec {
        let ch = DETECTION_CHANNELS;
        ArchSpec::new(
            "rpn-baseline",
            Shape::new(ch, 32, 64),
            vec![
                LayerSpec::conv(ch, ch, 3, 1).with_bias(true).into(),
                rpn_heads(ch, BASELINE_ANCHORS),
            ],
        )
    }

    /// 5x5 depthwise plus 1x1 pointwise, heads for 25 anchors.
    pub fn rpn_compressed() -> ArchSpec {
        let ch = DETECTION_CHANNELS;
        ArchSpec::new(
            "rpn-compressed",
            Shape::new(ch, 32, 64),
            vec![
                LayerSpec::depthwise(ch, 5, 1).with_bias(true).into(),
                LayerSpec::pointwise(ch, ch).with_bias(true).into(),
                rpn_heads(ch, COMPRESSED_ANCHORS),
            ],
        )
    }

    fn rcnn_outputs(width: u64) -> Block {
        Block::Parallel(vec![
            vec![LayerSpec::fully_connected(width, HEAD_CLASSES).into()],
            vec![LayerSpec::fully_connected(width, 4 * HEAD_CLASSES).into()],
        ])
    }

    /// Two wide fully-connected layers over the flattened pooled RoI.
    pub fn rcnn_head_baseline() -> ArchSpec {
        let ch = DETECTION_CHANNELS;
        let flat = ch * ROI_POOL * ROI_POOL;
        ArchSpec::new(
            "rcnn-head-baseline",
            Shape::new(ch, ROI_POOL, ROI_POOL),
            vec![
                LayerSpec::fully_connected(flat, BASELINE_HEAD_WIDTH).into(),
                LayerSpec::fully_connected(BASELINE_HEAD_WIDTH, BASELINE_HEAD_WIDTH).into(),
                rcnn_outputs(BASELINE_HEAD_WIDTH),
            ],
        )
    }

    /// A single 2048-wide fully-connected layer on the pooled RoI, without
    /// global pooling or dropout.
    pub fn rcnn_head_compact() -> ArchSpec {
        let ch = DETECTION_CHANNELS;
        let flat = ch * ROI_POOL * ROI_POOL;
        ArchSpec::new(
            "rcnn-head-compact",
            Shape::new(ch, ROI_POOL, ROI_POOL),
            vec![
                LayerSpec::fully_connected(flat, COMPACT_HEAD_WIDTH).into(),
                rcnn_outputs(COMPACT_HEAD_WIDTH),
            ],
        )
    }

    pub fn spatial_paths() -> Vec<ArchSpec> {
        let base = SpatialPathConfig::default();
        let k5 = SpatialPathConfig { kernel: 5, ..base };
        let dw = SpatialPathConfig { separable: true, ..k5 };
        vec![
            spatial_path("sp-baseline", base),
            spatial_path(
                "sp-wide",
                SpatialPathConfig {
                    width: 2 * SP_WIDTH,
                    ..base
                },
            ),
            spatial_path("sp-5x5", k5),
            spatial_path("sp-5x5-dw", dw),
            spatial_path(
                "sp-5x5-dw-wide",
                SpatialPathConfig {
                    width: 2 * SP_WIDTH,
                    ..dw
                },
            ),
        ]
    }

    /// Every named preset.
    pub fn preset_variants() -> Vec<ArchSpec> {
        let mut all = spatial_paths();
        all.extend([resnet18(false), resnet18(true), resnet101(false), resnet101(true)]);
        all.extend(backbone_ablation());
        all.extend([
            rpn_baseline(),
            rpn_compressed(),
            rcnn_head_baseline(),
            rcnn_head_compact(),
        ]);
        all
    }

    pub fn preset(name: &str) -> Option<ArchSpec> {
        preset_variants().into_iter().find(|a| a.name == name)
    }

    /// Candidate readings of "the spatial path shrinks to about a ninth":
    /// every ratio a plausible counting convention produces.
    pub fn spatial_path_ratio_candidates() -> Vec<(String, f64)> {
        let params = |cfg: SpatialPathConfig| model_params(&spatial_path("", cfg)).expect("valid preset") as f64;
        let base = SpatialPathConfig::default();
        let k5 = SpatialPathConfig { kernel: 5, ..base };
        let dw5 = SpatialPathConfig { separable: true, ..k5 };
        let dw3 = SpatialPathConfig {
            separable: true,
            ..base
        };
        let w = SP_WIDTH as f64;
        vec![
            ("SP 5x5 separable / SP 5x5 standard".into(), params(dw5) / params(k5)),
            ("SP 5x5 separable / SP 3x3 standard".into(), params(dw5) / params(base)),
            ("SP 3x3 separable / SP 3x3 standard".into(), params(dw3) / params(base)),
            (
                "layer 5x5 separable / 5x5 standard (1/C + 1/25)".into(),
                1.0 / w + 1.0 / 25.0,
            ),
            ("layer 5x5 separable / 3x3 standard".into(), (25.0 + w) / (9.0 * w)),
            ("layer 5x5 depthwise only / 5x5 standard (1/C)".into(), 1.0 / w),
            ("layer 5x5 depthwise only / 3x3 standard".into(), 25.0 / (9.0 * w)),
            (
                "layer 3x3 separable / 3x3 standard (1/C + 1/9)".into(),
                1.0 / w + 1.0 / 9.0,
            ),
        ]
    }
}
