//! Siamese self-supervised pre-training on feature vectors.
//!
//! Two augmented views of each row go through one shared encoder; a
//! predictor MLP on each side is pulled toward the *other* side's encoder
//! output under a negative-cosine loss. The encoder outputs on the target
//! side are treated as constants, so gradient reaches the encoder only
//! through the predictor branch.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::EncoderConfig;
use crate::nn::{cosine_lr, Dense, Mlp, Sgd};
use crate::rng::{self, Purpose, Rng};

pub const NET_MAGIC: [u8; 4] = *b"PSN1";

/// Random view generator: `mask * (s * x + eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub drop_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { noise_sigma: 0.3, scale_lo: 0.8, scale_hi: 1.2, drop_prob: 0.2 }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self { noise_sigma: 0.0, scale_lo: 1.0, scale_hi: 1.0, drop_prob: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("augment: noise_sigma must be >= 0"));
        }
        if !(self.scale_lo > 0.0 && self.scale_lo <= self.scale_hi && self.scale_hi.is_finite()) {
            return Err(Error::invalid("augment: need 0 < scale_lo <= scale_hi"));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(Error::invalid("augment: drop_prob must lie in [0, 1)"));
        }
        Ok(())
    }
}

pub fn augment_vector(x: ArrayView1<'_, f64>, config: &AugmentConfig, rng: &mut Rng) -> Array1<f64> {
    let scale = if config.scale_lo == config.scale_hi {
        config.scale_lo
    } else {
        rng.random_range(config.scale_lo..=config.scale_hi)
    };
    let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
    x.mapv(|v| {
        let eps = if config.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        let keep = config.drop_prob == 0.0 || rng.random::<f64>() >= config.drop_prob;
        if keep {
            scale * v + eps
        } else {
            0.0
        }
    })
}

fn augment_rows(x: ArrayView2<'_, f64>, config: &AugmentConfig, rng: &mut Rng) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    for (src, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
        dst.assign(&augment_vector(src, config, rng));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiamNetConfig {
    pub encoder: EncoderConfig,
    pub predictor_hidden: usize,
}

impl Default for SiamNetConfig {
    fn default() -> Self {
        Self { encoder: EncoderConfig::default(), predictor_hidden: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiamTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for SiamTrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 64, base_lr: 0.03, momentum: 0.9, weight_decay: 1e-4, seed: 0 }
    }
}

impl SiamTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("simsiam: epochs and batch_size must be >= 1"));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("simsiam: base_lr must be a nonnegative finite number"));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::invalid("simsiam: momentum in [0, 1) and weight_decay >= 0 required"));
        }
        Ok(())
    }
}

/// Encoder (backbone + projection) and predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct SiamNet {
    pub encoder: Mlp,
    pub predictor: Mlp,
}

/// Both views of one input with their encoder and predictor outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub x1: Array1<f64>,
    pub x2: Array1<f64>,
    pub z1: Array1<f64>,
    pub z2: Array1<f64>,
    pub p1: Array1<f64>,
    pub p2: Array1<f64>,
}

/// Parameter gradients, shaped like the net.
#[derive(Debug, Clone, PartialEq)]
pub struct SiamGrads {
    pub encoder: Mlp,
    pub predictor: Mlp,
}

impl SiamNet {
    pub fn init(input_dim: usize, config: &SiamNetConfig, seed: u64) -> Result<Self> {
        if config.encoder.widths.is_empty() || config.predictor_hidden == 0 || input_dim == 0 {
            return Err(Error::invalid("simsiam: encoder needs at least one layer and a nonzero predictor width"));
        }
        let mut rng = rng::stream(seed, Purpose::SiamInit, 0);
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&config.encoder.widths);
        let encoder = Mlp::init(&widths, &mut rng);
        let e = encoder.output_dim();
        let predictor = Mlp::init(&[e, config.predictor_hidden, e], &mut rng);
        Ok(Self { encoder, predictor })
    }

    pub fn from_parts(encoder: Mlp, predictor: Mlp) -> Result<Self> {
        if predictor.input_dim() != encoder.output_dim() || predictor.output_dim() != encoder.output_dim() {
            return Err(Error::DimensionMismatch { expected: encoder.output_dim(), got: predictor.input_dim() });
        }
        Ok(Self { encoder, predictor })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = self.encoder.params_flat();
        v.extend(self.predictor.params_flat());
        v
    }

    pub fn set_params_flat(&mut self, values: &[f64]) {
        let k = self.encoder.num_params();
        self.encoder.set_params_flat(&values[..k]);
        self.predictor.set_params_flat(&values[k..]);
    }

    fn zero_grads(&self) -> SiamGrads {
        SiamGrads { encoder: self.encoder.zeros_like(), predictor: self.predictor.zeros_like() }
    }
}

impl SiamGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.encoder.params_flat();
        v.extend(self.predictor.params_flat());
        v
    }
}

pub fn siam_forward(net: &SiamNet, x1: ArrayView1<'_, f64>, x2: ArrayView1<'_, f64>) -> Result<ViewPair> {
    let batch = ndarray::stack(Axis(0), &[x1, x2]).map_err(|_| Error::LengthMismatch(x1.len(), x2.len()))?;
    let z = net.encoder.forward(batch.view())?;
    let p = net.predictor.forward(z.view())?;
    Ok(ViewPair {
        x1: x1.to_owned(),
        x2: x2.to_owned(),
        z1: z.row(0).to_owned(),
        z2: z.row(1).to_owned(),
        p1: p.row(0).to_owned(),
        p2: p.row(1).to_owned(),
    })
}

/// `-(p / |p|) . (z / |z|)`.
pub fn negative_cosine(p: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> Result<f64> {
    let np = p.dot(&p).sqrt();
    let nz = z.dot(&z).sqrt();
    if np == 0.0 || nz == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(-(p.dot(&z)) / (np * nz))
}

/// Gradient of [`negative_cosine`] with respect to `p`, `z` held constant.
fn negative_cosine_grad(p: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let np = p.dot(&p).sqrt();
    let nz = z.dot(&z).sqrt();
    if np == 0.0 || nz == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    let cos = p.dot(&z) / (np * nz);
    Ok((&p * (cos / (np * np)) - &z / (np * nz)).to_owned())
}

/// Symmetric loss `D(p1, z2)/2 + D(p2, z1)/2`.
pub fn siam_loss(pair: &ViewPair) -> Result<f64> {
    let d1 = negative_cosine(pair.p1.view(), pair.z2.view())?;
    let d2 = negative_cosine(pair.p2.view(), pair.z1.view())?;
    Ok(0.5 * d1 + 0.5 * d2)
}

/// Mean symmetric loss over a batch of view pairs and its stop-gradient
/// gradient.
///
/// Both views are stacked into one `2m` batch; row `r` of the predictor
/// output is compared against the encoder output of its partner row, which
/// enters as a constant.
pub fn siam_gradients(net: &SiamNet, x1: ArrayView2<'_, f64>, x2: ArrayView2<'_, f64>) -> Result<(f64, SiamGrads)> {
    if x1.dim() != x2.dim() {
        return Err(Error::LengthMismatch(x1.nrows(), x2.nrows()));
    }
    let m = x1.nrows();
    if m == 0 {
        return Err(Error::invalid("simsiam: empty batch"));
    }
    let stacked = concatenate(Axis(0), &[x1, x2]).expect("equal shapes");
    let enc_trace = net.encoder.forward_trace(stacked.view())?;
    let z = &enc_trace.output;
    let pred_trace = net.predictor.forward_trace(z.view())?;
    let p = &pred_trace.output;
    let targets = concatenate(Axis(0), &[z.slice(s![m.., ..]), z.slice(s![..m, ..])]).expect("equal shapes");

    let weight = 1.0 / (2 * m) as f64;
    let mut loss = 0.0;
    let mut grad_p = Array2::zeros(p.dim());
    for r in 0..2 * m {
        loss += weight * negative_cosine(p.row(r), targets.row(r))?;
        grad_p.row_mut(r).assign(&(negative_cosine_grad(p.row(r), targets.row(r))? * weight));
    }
    let mut grads = net.zero_grads();
    let grad_z = net.predictor.backward(&pred_trace, grad_p, &mut grads.predictor);
    net.encoder.backward(&enc_trace, grad_z, &mut grads.encoder);
    Ok((loss, grads))
}

/// Loss with the comparison targets supplied from outside. With targets set
/// to the current encoder outputs this is the function whose ordinary
/// gradient equals the stop-gradient gradient.
pub fn surrogate_loss(
    net: &SiamNet,
    x1: ArrayView2<'_, f64>,
    x2: ArrayView2<'_, f64>,
    frozen_z1: ArrayView2<'_, f64>,
    frozen_z2: ArrayView2<'_, f64>,
) -> Result<f64> {
    let m = x1.nrows();
    let p1 = net.predictor.forward(net.encoder.forward(x1)?.view())?;
    let p2 = net.predictor.forward(net.encoder.forward(x2)?.view())?;
    let mut loss = 0.0;
    for i in 0..m {
        loss += negative_cosine(p1.row(i), frozen_z2.row(i))? + negative_cosine(p2.row(i), frozen_z1.row(i))?;
    }
    Ok(loss / (2 * m) as f64)
}

/// Per-epoch mean losses from [`train_simsiam`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiamLog {
    pub epoch_losses: Vec<f64>,
}

/// Self-supervised training over all rows of `features`. Labels never enter.
pub fn train_simsiam(
    features: ArrayView2<'_, f64>,
    net_config: &SiamNetConfig,
    aug: &AugmentConfig,
    config: &SiamTrainConfig,
) -> Result<(SiamNet, SiamLog)> {
    let net = SiamNet::init(features.ncols(), net_config, config.seed)?;
    train_simsiam_from(net, features, aug, config)
}

/// Continues training an existing net.
pub fn train_simsiam_from(
    mut net: SiamNet,
    features: ArrayView2<'_, f64>,
    aug: &AugmentConfig,
    config: &SiamTrainConfig,
) -> Result<(SiamNet, SiamLog)> {
    config.validate()?;
    aug.validate()?;
    let n = features.nrows();
    if n == 0 {
        return Err(Error::invalid("simsiam: empty dataset"));
    }
    if features.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), got: features.ncols() });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("simsiam features"));
    }
    let batch = config.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let total_steps = config.epochs * steps_per_epoch;
    let mut enc_opt = Sgd::new(&net.encoder, config.momentum, config.weight_decay);
    let mut pred_opt = Sgd::new(&net.predictor, config.momentum, config.weight_decay);
    let mut rng = rng::stream(config.seed, Purpose::SiamTrain, 0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = SiamLog::default();
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch) {
            let xb = features.select(Axis(0), chunk);
            let v1 = augment_rows(xb.view(), aug, &mut rng);
            let v2 = augment_rows(xb.view(), aug, &mut rng);
            let (loss, grads) = siam_gradients(&net, v1.view(), v2.view())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let lr = cosine_lr(config.base_lr, step, total_steps);
            enc_opt.step(&mut net.encoder, &grads.encoder, lr);
            pred_opt.step(&mut net.predictor, &grads.predictor, lr);
            total += loss;
            batches += 1;
            step += 1;
        }
        log.epoch_losses.push(total / batches as f64);
    }
    if !net.encoder.is_finite() || !net.predictor.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs - 1 });
    }
    Ok((net, log))
}

/// Frozen encoder outputs; the predictor is not applied.
pub fn encode(net: &SiamNet, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    net.encoder.forward(features)
}

/// Frozen encoder followed by an optional per-dimension standardization whose
/// statistics come from the (unlabeled) pool embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEncoder {
    pub encoder: Mlp,
    pub mean: Option<Array1<f64>>,
    pub scale: Option<Array1<f64>>,
}

impl FrozenEncoder {
    pub fn new(net: &SiamNet, pool: ArrayView2<'_, f64>, standardize: bool) -> Result<Self> {
        let mut frozen = Self { encoder: net.encoder.clone(), mean: None, scale: None };
        if standardize {
            let emb = net.encoder.forward(pool)?;
            let mean = emb.mean_axis(Axis(0)).ok_or_else(|| Error::invalid("empty pool"))?;
            let scale = emb.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
            frozen.mean = Some(mean);
            frozen.scale = Some(scale);
        }
        Ok(frozen)
    }

    pub fn embed(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut emb = self.encoder.forward(features)?;
        if let (Some(mean), Some(scale)) = (&self.mean, &self.scale) {
            emb -= mean;
            emb /= scale;
        }
        Ok(emb)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }
}

/// Mean over dimensions of the per-dimension standard deviation of the
/// L2-normalized embeddings. Collapsed encoders drive this toward zero.
pub fn normalized_embedding_std(embeddings: ArrayView2<'_, f64>) -> Result<f64> {
    let mut unit = embeddings.to_owned();
    for mut row in unit.outer_iter_mut() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateEmbedding);
        }
        row /= norm;
    }
    let std = unit.std_axis(Axis(0), 0.0);
    Ok(std.mean().unwrap_or(0.0))
}

/// Writes the net as `PSN1 | u32 layer_count | layers`, encoder layers first,
/// predictor last. Each layer is `u32 rows | u32 cols | f64 weights
/// (row-major, rows = outputs) | f64 biases`.
pub fn encode_net(net: &SiamNet) -> Vec<u8> {
    let layers: Vec<&Dense> = net.encoder.layers().iter().chain(net.predictor.layers()).collect();
    let mut buf = Vec::new();
    buf.extend_from_slice(&NET_MAGIC);
    buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        buf.extend_from_slice(&(layer.fan_out() as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.fan_in() as u32).to_le_bytes());
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

/// Inverse of [`encode_net`]. The predictor is always the last two layers.
pub fn decode_net(bytes: &[u8]) -> Result<SiamNet> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.take(4)?;
    if magic != NET_MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(magic);
        return Err(Error::BadMagic { expected: NET_MAGIC, found });
    }
    let count = cursor.u32()? as usize;
    if count < 3 {
        return Err(Error::invalid(format!("net file has {count} layers, need at least 3")));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = cursor.u32()? as usize;
        let cols = cursor.u32()? as usize;
        let weights: Vec<f64> = (0..rows * cols).map(|_| cursor.f64()).collect::<Result<_>>()?;
        let bias: Vec<f64> = (0..rows).map(|_| cursor.f64()).collect::<Result<_>>()?;
        layers.push(Dense {
            weights: Array2::from_shape_vec((rows, cols), weights).map_err(|e| Error::invalid(e.to_string()))?,
            bias: Array1::from(bias),
        });
    }
    if cursor.pos != bytes.len() {
        return Err(Error::invalid("trailing bytes after net payload"));
    }
    let predictor = layers.split_off(count - 2);
    SiamNet::from_parts(Mlp::from_layers(layers)?, Mlp::from_layers(predictor)?)
}

pub fn save_net(net: &SiamNet, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_net(net))?;
    Ok(())
}

pub fn load_net(path: impl AsRef<Path>) -> Result<SiamNet> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_net(&fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.pos + k > self.bytes.len() {
            return Err(Error::Truncated { expected: (self.pos + k) as u64, found: self.bytes.len() as u64 });
        }
        let out = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
