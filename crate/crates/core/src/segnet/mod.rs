//! Encoder–decoder vessel segmentation network.
//!
//! Each encoder stage is two 3×3 same-padded convolutions with ReLU followed
//! by 2×2 max pooling; a two-convolution bottleneck sits at the coarsest
//! resolution; each decoder stage upsamples 2×, optionally concatenates the
//! matching encoder output (the skip connection), and applies two more 3×3
//! convolutions. A 1×1 convolution produces two-class logits.

mod loss;
mod train;
mod weight_map;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::tensor::{
    concat_channels, conv2d_backward, conv2d_forward, maxpool2x2, maxpool2x2_backward, pad_channels, relu,
    relu_backward, softmax_channels, split_channels, take_channels, upsample2x, upsample2x_backward, Padding,
    PoolIndices, Tensor,
};

pub use loss::weighted_cross_entropy;
pub use train::{pixel_accuracy, train_segnet, StopReason, TrainOptions, TrainReport};
pub use weight_map::{boundary_weight, compute_weight_map, edge_pixels, BoundaryForm, WeightMap, WeightMapParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-pixel binary vessel labels (1 = vessel), row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::shape(
                "SegMask::new",
                format!("{width}×{height} mask needs {} labels, got {}", width * height, labels.len()),
            ));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::config("labels", "mask labels must be 0 or 1"));
        }
        Ok(SegMask { width, height, labels })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        SegMask {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn vessel_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l != 0).count() as f64 / self.labels.len().max(1) as f64
    }

    /// Mask as a flat real vector, the vessel-channel feature.
    pub fn to_reals(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipMode {
    /// A skip connection at every level.
    All,
    /// Skip connections at every other level, deepest first.
    #[default]
    Halved,
    /// A skip connection at every level carrying half the channels.
    HalvedWidth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegNetConfig {
    pub input_size: usize,
    pub levels: usize,
    pub base_channels: usize,
    #[serde(default)]
    pub skip_mode: SkipMode,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_classes() -> usize {
    2
}

impl Default for SegNetConfig {
    fn default() -> Self {
        SegNetConfig {
            input_size: 64,
            levels: 3,
            base_channels: 8,
            skip_mode: SkipMode::Halved,
            classes: 2,
            seed: 0,
        }
    }
}

impl SegNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::config("levels", "must be at least 1"));
        }
        if self.base_channels < 1 {
            return Err(Error::config("base_channels", "must be at least 1"));
        }
        if self.classes != 2 {
            return Err(Error::config("classes", "only vessel/background (2) is supported"));
        }
        let stride = 1usize.checked_shl(self.levels as u32).unwrap_or(0);
        if stride == 0 || self.input_size == 0 || self.input_size % stride != 0 {
            return Err(Error::config(
                "input_size",
                format!(
                    "{} is not divisible by 2^levels = {}",
                    self.input_size,
                    1u128 << self.levels.min(127)
                ),
            ));
        }
        Ok(())
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    fn has_skip(&self, level: usize) -> bool {
        match self.skip_mode {
            SkipMode::All | SkipMode::HalvedWidth => true,
            SkipMode::Halved => (self.levels - 1 - level) % 2 == 0,
        }
    }

    fn skip_channels(&self, level: usize) -> usize {
        match self.skip_mode {
            SkipMode::All => self.channels(level),
            SkipMode::Halved if self.has_skip(level) => self.channels(level),
            SkipMode::Halved => 0,
            SkipMode::HalvedWidth => self.channels(level).div_ceil(2),
        }
    }

    /// Channels arriving from below at decoder `level` (before concatenation).
    fn up_channels(&self, level: usize) -> usize {
        self.channels(level + 1)
    }

    /// `(kernel side, in, out)` of every convolution, in parameter order:
    /// encoder stages, bottleneck, decoder stages (shallowest first), head.
    fn conv_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = Vec::new();
        let mut cin = 3;
        for l in 0..self.levels {
            let c = self.channels(l);
            shapes.push((3, cin, c));
            shapes.push((3, c, c));
            cin = c;
        }
        let cb = self.channels(self.levels);
        shapes.push((3, cin, cb));
        shapes.push((3, cb, cb));
        for l in 0..self.levels {
            let c = self.channels(l);
            shapes.push((3, self.up_channels(l) + self.skip_channels(l), c));
            shapes.push((3, c, c));
        }
        shapes.push((1, self.base_channels, self.classes));
        shapes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub kernels: Tensor,
    pub bias: Vec<f64>,
}

impl ConvParams {
    fn zeros_like(&self) -> Self {
        ConvParams {
            kernels: Tensor::zeros(self.kernels.shape()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn len(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegNet {
    config: SegNetConfig,
    convs: Vec<ConvParams>,
}

/// Gradient of the loss with respect to every network parameter, laid out
/// like [`SegNet`]'s parameters.
#[derive(Clone, Debug)]
pub struct NetGradients {
    pub convs: Vec<ConvParams>,
}

struct BlockCache {
    input: Tensor,
    z1: Tensor,
    h1: Tensor,
    z2: Tensor,
}

struct ForwardCache {
    enc: Vec<BlockCache>,
    pools: Vec<PoolIndices>,
    bottleneck: BlockCache,
    dec: Vec<Option<BlockCache>>,
    head_input: Tensor,
}

pub fn build_segnet(config: &SegNetConfig) -> Result<SegNet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let convs = config
        .conv_shapes()
        .into_iter()
        .map(|(k, cin, cout)| {
            let fan_in = (k * k * cin) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            let data = (0..k * k * cin * cout).map(|_| normal.sample(&mut rng)).collect();
            ConvParams {
                kernels: Tensor::new(vec![k, k, cin, cout], data).expect("shape by construction"),
                bias: vec![0.0; cout],
            }
        })
        .collect();
    Ok(SegNet {
        config: config.clone(),
        convs,
    })
}

impl SegNet {
    pub fn config(&self) -> &SegNetConfig {
        &self.config
    }

    pub fn convs(&self) -> &[ConvParams] {
        &self.convs
    }

    pub fn parameter_count(&self) -> usize {
        self.convs.iter().map(ConvParams::len).sum()
    }

    /// All parameters flattened in a fixed order (kernels then bias, per conv).
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for c in &self.convs {
            out.extend_from_slice(c.kernels.data());
            out.extend_from_slice(&c.bias);
        }
        out
    }

    pub fn set_flat_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Dimension {
                expected: self.parameter_count(),
                got: values.len(),
            });
        }
        let mut at = 0;
        for c in &mut self.convs {
            let n = c.kernels.len();
            c.kernels.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
            let b = c.bias.len();
            c.bias.copy_from_slice(&values[at..at + b]);
            at += b;
        }
        Ok(())
    }

    fn enc_index(&self, level: usize) -> usize {
        2 * level
    }

    fn bottleneck_index(&self) -> usize {
        2 * self.config.levels
    }

    fn dec_index(&self, level: usize) -> usize {
        2 * self.config.levels + 2 + 2 * level
    }

    fn head_index(&self) -> usize {
        4 * self.config.levels + 2
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let (h, w, c) = image.dims3()?;
        let s = self.config.input_size;
        if (h, w, c) != (s, s, 3) {
            return Err(Error::shape(
                "segnet",
                format!("image is {h}×{w}×{c}, network expects {s}×{s}×3"),
            ));
        }
        Ok(())
    }

    fn block_forward(&self, first: usize, x: Tensor) -> Result<(Tensor, BlockCache)> {
        let (a, b) = (&self.convs[first], &self.convs[first + 1]);
        let z1 = conv2d_forward(&x, &a.kernels, &a.bias, Padding::Same)?;
        let h1 = relu(&z1);
        let z2 = conv2d_forward(&h1, &b.kernels, &b.bias, Padding::Same)?;
        let out = relu(&z2);
        Ok((out, BlockCache { input: x, z1, h1, z2 }))
    }

    fn block_backward(&self, first: usize, cache: &BlockCache, dout: &Tensor, grads: &mut NetGradients) -> Result<Tensor> {
        let (a, b) = (&self.convs[first], &self.convs[first + 1]);
        let dz2 = relu_backward(&cache.z2, dout)?;
        let g2 = conv2d_backward(&cache.h1, &b.kernels, &dz2, Padding::Same)?;
        accumulate(&mut grads.convs[first + 1], &g2.parameter_grads);
        let dz1 = relu_backward(&cache.z1, &g2.input_grad)?;
        let g1 = conv2d_backward(&cache.input, &a.kernels, &dz1, Padding::Same)?;
        accumulate(&mut grads.convs[first], &g1.parameter_grads);
        Ok(g1.input_grad)
    }

    fn forward_cached(&self, image: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(image)?;
        let levels = self.config.levels;
        let mut enc = Vec::with_capacity(levels);
        let mut pools = Vec::with_capacity(levels);
        let mut skips = Vec::with_capacity(levels);
        let mut x = image.clone();
        for l in 0..levels {
            let (h, cache) = self.block_forward(self.enc_index(l), x)?;
            let (pooled, idx) = maxpool2x2(&h)?;
            enc.push(cache);
            pools.push(idx);
            skips.push(h);
            x = pooled;
        }
        let (mut prev, bottleneck) = self.block_forward(self.bottleneck_index(), x)?;
        let mut dec: Vec<Option<BlockCache>> = (0..levels).map(|_| None).collect();
        for l in (0..levels).rev() {
            let up = upsample2x(&prev)?;
            let sc = self.config.skip_channels(l);
            let cat = if sc > 0 {
                concat_channels(&up, &take_channels(&skips[l], sc)?)?
            } else {
                up
            };
            let (h, cache) = self.block_forward(self.dec_index(l), cat)?;
            dec[l] = Some(cache);
            prev = h;
        }
        let head = &self.convs[self.head_index()];
        let logits = conv2d_forward(&prev, &head.kernels, &head.bias, Padding::Same)?;
        Ok((
            logits,
            ForwardCache {
                enc,
                pools,
                bottleneck,
                dec,
                head_input: prev,
            },
        ))
    }

    /// Pre-softmax two-channel logits.
    pub fn logits(&self, image: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(image)?.0)
    }

    /// Per-pixel class probabilities.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        softmax_channels(&self.logits(image)?)
    }

    fn backward(&self, cache: &ForwardCache, dlogits: &Tensor) -> Result<NetGradients> {
        let levels = self.config.levels;
        let mut grads = NetGradients {
            convs: self.convs.iter().map(ConvParams::zeros_like).collect(),
        };
        let hi = self.head_index();
        let gh = conv2d_backward(&cache.head_input, &self.convs[hi].kernels, dlogits, Padding::Same)?;
        accumulate(&mut grads.convs[hi], &gh.parameter_grads);
        let mut dprev = gh.input_grad;
        let mut skip_grads: Vec<Option<Tensor>> = (0..levels).map(|_| None).collect();
        for l in 0..levels {
            let cache_l = cache.dec[l].as_ref().expect("decoder cache filled in forward");
            let dcat = self.block_backward(self.dec_index(l), cache_l, &dprev, &mut grads)?;
            let sc = self.config.skip_channels(l);
            let dup = if sc > 0 {
                let (dup, dskip) = split_channels(&dcat, self.config.up_channels(l))?;
                skip_grads[l] = Some(pad_channels(&dskip, self.config.channels(l))?);
                dup
            } else {
                dcat
            };
            dprev = upsample2x_backward(&dup)?;
        }
        let mut dx = self.block_backward(self.bottleneck_index(), &cache.bottleneck, &dprev, &mut grads)?;
        for l in (0..levels).rev() {
            let mut dh = maxpool2x2_backward(&cache.pools[l], &dx)?;
            if let Some(ds) = &skip_grads[l] {
                dh = dh.add(ds)?;
            }
            dx = self.block_backward(self.enc_index(l), &cache.enc[l], &dh, &mut grads)?;
        }
        Ok(grads)
    }

    /// Weighted cross-entropy of one labelled image and its parameter gradient.
    pub fn loss_and_gradient(&self, image: &Tensor, mask: &SegMask, wmap: &WeightMap) -> Result<(f64, NetGradients)> {
        let (logits, cache) = self.forward_cached(image)?;
        let probs = softmax_channels(&logits)?;
        let (loss, dlogits) = weighted_cross_entropy(&probs, mask, wmap)?;
        let grads = self.backward(&cache, &dlogits)?;
        Ok((loss, grads))
    }

    /// Loss only; used by finite-difference checks.
    pub fn loss(&self, image: &Tensor, mask: &SegMask, wmap: &WeightMap) -> Result<f64> {
        let probs = self.forward(image)?;
        Ok(weighted_cross_entropy(&probs, mask, wmap)?.0)
    }

    /// Pixelwise argmax of the softmax output; ties go to background.
    pub fn segment(&self, image: &Tensor) -> Result<SegMask> {
        let logits = self.logits(image)?;
        let (h, w, _) = logits.dims3()?;
        let labels = logits
            .data()
            .chunks_exact(2)
            .map(|px| (px[1] > px[0]) as u8)
            .collect();
        SegMask::new(w, h, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = SegNetFile {
            format_version: MODEL_FORMAT_VERSION,
            config: self.config.clone(),
            parameters: self
                .convs
                .iter()
                .map(|c| ConvFile {
                    shape: c.kernels.shape().to_vec(),
                    kernels: c.kernels.data().to_vec(),
                    bias: c.bias.clone(),
                })
                .collect(),
        };
        codec::write_text(path, &serde_json::to_string_pretty(&file)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&codec::read_text(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SegNetFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        file.config.validate()?;
        let shapes = file.config.conv_shapes();
        if shapes.len() != file.parameters.len() {
            return Err(Error::Decode(format!(
                "{} parameter blocks for an architecture with {}",
                file.parameters.len(),
                shapes.len()
            )));
        }
        let convs = shapes
            .iter()
            .zip(file.parameters)
            .map(|(&(k, cin, cout), p)| {
                if p.shape != [k, k, cin, cout] || p.bias.len() != cout {
                    return Err(Error::Decode(format!(
                        "parameter block {:?} does not match expected {:?}",
                        p.shape,
                        [k, k, cin, cout]
                    )));
                }
                Ok(ConvParams {
                    kernels: Tensor::new(p.shape, p.kernels)?,
                    bias: p.bias,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SegNet {
            config: file.config,
            convs,
        })
    }
}

impl NetGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.extend_from_slice(c.kernels.data());
            out.extend_from_slice(&c.bias);
        }
        out
    }

    pub(crate) fn add_assign(&mut self, other: &NetGradients) {
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            for (x, y) in a.kernels.data_mut().iter_mut().zip(b.kernels.data()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }
}

fn accumulate(dst: &mut ConvParams, grads: &[Tensor]) {
    for (d, g) in dst.kernels.data_mut().iter_mut().zip(grads[0].data()) {
        *d += g;
    }
    for (d, g) in dst.bias.iter_mut().zip(grads[1].data()) {
        *d += g;
    }
}

#[derive(Serialize, Deserialize)]
struct SegNetFile {
    format_version: u32,
    config: SegNetConfig,
    parameters: Vec<ConvFile>,
}

#[derive(Serialize, Deserialize)]
struct ConvFile {
    shape: Vec<usize>,
    #[serde(with = "codec::b64")]
    kernels: Vec<f64>,
    #[serde(with = "codec::b64")]
    bias: Vec<f64>,
}
