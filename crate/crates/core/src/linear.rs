//! Linear classifiers over frozen features: the softmax probe, the
//! one-vs-rest linear SVM, and the from-scratch supervised baseline that
//! trains an encoder and a softmax head jointly.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{cosine_lr, Mlp, Sgd};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Cosine,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
}

impl Default for ProbeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            lr_schedule: LrSchedule::Cosine,
            seed: 0,
        }
    }
}

impl ProbeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("probe: epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("probe: batch_size must be >= 1"));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("probe: base_lr must be a nonnegative finite number"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("probe: momentum must lie in [0, 1)"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::invalid("probe: weight_decay must be >= 0"));
        }
        Ok(())
    }
}

/// Anything that maps feature rows to class probabilities.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

/// Multinomial logistic regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxProbe {
    /// `C x d`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl SoftmaxProbe {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self { weights: Array2::zeros((num_classes, dim)), bias: Array1::zeros(num_classes) }
    }

    fn init(num_classes: usize, dim: usize, rng: &mut rng::Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        Self {
            weights: Array2::from_shape_fn((num_classes, dim), |_| rng.random_range(-bound..bound)),
            bias: Array1::from_shape_fn(num_classes, |_| rng.random_range(-bound..bound)),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: features.ncols() });
        }
        let mut z = features.dot(&self.weights.t());
        z += &self.bias;
        Ok(z)
    }

    /// Mean cross-entropy and its gradient with respect to weights and bias.
    pub fn loss_and_grad(&self, features: ArrayView2<'_, f64>, labels: &[u32]) -> Result<(f64, SoftmaxProbe)> {
        let (loss, grad, _) = self.loss_grad_input(features, labels)?;
        Ok((loss, grad))
    }

    /// As [`Self::loss_and_grad`], also returning the gradient with respect to
    /// the input rows.
    fn loss_grad_input(&self, x: ArrayView2<'_, f64>, labels: &[u32]) -> Result<(f64, SoftmaxProbe, Array2<f64>)> {
        if labels.len() != x.nrows() {
            return Err(Error::LengthMismatch(x.nrows(), labels.len()));
        }
        let n = x.nrows() as f64;
        let mut p = softmax_rows(self.logits(x)?);
        let mut loss = 0.0;
        for (mut row, &y) in p.outer_iter_mut().zip(labels) {
            loss -= row[y as usize].max(f64::MIN_POSITIVE).ln();
            row[y as usize] -= 1.0;
        }
        p /= n;
        let grad = SoftmaxProbe { weights: p.t().dot(&x), bias: p.sum_axis(Axis(0)) };
        let grad_input = p.dot(&self.weights);
        Ok((loss / n, grad, grad_input))
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

impl Classifier for SoftmaxProbe {
    fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    fn input_dim(&self) -> usize {
        self.dim()
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(self.logits(features)?))
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

pub fn predict_proba(probe: &SoftmaxProbe, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    probe.predict_proba(features)
}

/// Loss values recorded while fitting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitLog {
    /// Full-batch loss before the first update.
    pub initial_loss: f64,
    /// Full-batch loss after the last update.
    pub final_loss: f64,
    /// Loss of every minibatch step, in order.
    pub step_losses: Vec<f64>,
}

/// Trains a softmax probe on frozen features.
pub fn train_probe(
    features: ArrayView2<'_, f64>,
    labels: &[u32],
    num_classes: usize,
    config: &ProbeTrainConfig,
) -> Result<SoftmaxProbe> {
    train_probe_logged(features, labels, num_classes, config).map(|(p, _)| p)
}

pub fn train_probe_logged(
    features: ArrayView2<'_, f64>,
    labels: &[u32],
    num_classes: usize,
    config: &ProbeTrainConfig,
) -> Result<(SoftmaxProbe, FitLog)> {
    let (_, probe, log) = fit_softmax(None, features, labels, num_classes, config, Purpose::ProbeInit)?;
    Ok((probe, log))
}

/// Layer widths of an encoder, excluding the input width. An empty list is
/// the identity map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub widths: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { widths: vec![64, 32] }
    }
}

/// Encoder plus softmax head trained end-to-end on labeled data only.
#[derive(Debug, Clone, PartialEq)]
pub struct ScratchModel {
    /// `None` when the encoder is the identity.
    pub encoder: Option<Mlp>,
    pub head: SoftmaxProbe,
}

impl ScratchModel {
    /// Encoder output, the space the head operates in.
    pub fn embed(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match &self.encoder {
            Some(enc) => enc.forward(features),
            None => Ok(features.to_owned()),
        }
    }
}

impl Classifier for ScratchModel {
    fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    fn input_dim(&self) -> usize {
        self.encoder.as_ref().map_or(self.head.dim(), Mlp::input_dim)
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.head.predict_proba(self.embed(features)?.view())
    }
}

/// From-scratch baseline: a freshly initialized encoder and head trained
/// jointly with softmax cross-entropy.
pub fn train_encoder_supervised(
    features: ArrayView2<'_, f64>,
    labels: &[u32],
    num_classes: usize,
    encoder: &EncoderConfig,
    config: &ProbeTrainConfig,
) -> Result<ScratchModel> {
    let enc = if encoder.widths.is_empty() {
        None
    } else {
        let mut widths = vec![features.ncols()];
        widths.extend_from_slice(&encoder.widths);
        let mut rng = rng::stream(config.seed, Purpose::ScratchInit, 0);
        Some(Mlp::init(&widths, &mut rng))
    };
    let (encoder, head, _) = fit_softmax(enc, features, labels, num_classes, config, Purpose::ProbeInit)?;
    Ok(ScratchModel { encoder, head })
}

/// Shared minibatch trainer for a softmax head on top of an optional
/// trainable encoder.
fn fit_softmax(
    mut encoder: Option<Mlp>,
    x: ArrayView2<'_, f64>,
    labels: &[u32],
    num_classes: usize,
    config: &ProbeTrainConfig,
    head_purpose: Purpose,
) -> Result<(Option<Mlp>, SoftmaxProbe, FitLog)> {
    config.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyLabeledSet);
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch(n, labels.len()));
    }
    if num_classes < 2 {
        return Err(Error::invalid("probe: num_classes must be >= 2"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::LabelOutOfRange { row: 0, label: bad, num_classes: num_classes as u32 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe features"));
    }
    if let Some(enc) = &encoder {
        if enc.input_dim() != x.ncols() {
            return Err(Error::DimensionMismatch { expected: enc.input_dim(), got: x.ncols() });
        }
    }
    let head_dim = encoder.as_ref().map_or(x.ncols(), Mlp::output_dim);
    let mut head_rng = rng::stream(config.seed, head_purpose, 0);
    let mut head = SoftmaxProbe::init(num_classes, head_dim, &mut head_rng);

    let full_loss = |encoder: &Option<Mlp>, head: &SoftmaxProbe| -> Result<f64> {
        let emb = match encoder {
            Some(e) => e.forward(x)?,
            None => x.to_owned(),
        };
        Ok(head.loss_and_grad(emb.view(), labels)?.0)
    };

    let mut log = FitLog { initial_loss: full_loss(&encoder, &head)?, ..FitLog::default() };
    let batch = config.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let total_steps = config.epochs * steps_per_epoch;
    let mut head_mlp = head_as_mlp(&head);
    let mut head_opt = Sgd::new(&head_mlp, config.momentum, config.weight_decay);
    let mut enc_opt = encoder.as_ref().map(|e| Sgd::new(e, config.momentum, config.weight_decay));
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::stream(config.seed, Purpose::ProbeTrain, 0);
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            let lr = match config.lr_schedule {
                LrSchedule::Cosine => cosine_lr(config.base_lr, step, total_steps),
                LrSchedule::Constant => config.base_lr,
            };
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<u32> = chunk.iter().map(|&i| labels[i]).collect();
            let trace = match &encoder {
                Some(e) => Some(e.forward_trace(xb.view())?),
                None => None,
            };
            let emb = trace.as_ref().map_or(xb.view(), |t| t.output.view());
            let (loss, grad, grad_emb) = head.loss_grad_input(emb, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            log.step_losses.push(loss);
            if let (Some(enc), Some(trace), Some(opt)) = (encoder.as_mut(), trace.as_ref(), enc_opt.as_mut()) {
                let mut enc_grads = enc.zeros_like();
                enc.backward(trace, grad_emb, &mut enc_grads);
                opt.step(enc, &enc_grads, lr);
            }
            head_opt.step(&mut head_mlp, &head_as_mlp(&grad), lr);
            head = mlp_as_head(&head_mlp);
            step += 1;
        }
    }
    if !head.is_finite() || encoder.as_ref().is_some_and(|e| !e.is_finite()) {
        return Err(Error::Diverged { epoch: config.epochs.saturating_sub(1) });
    }
    log.final_loss = full_loss(&encoder, &head)?;
    if !log.final_loss.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs.saturating_sub(1) });
    }
    Ok((encoder, head, log))
}

fn head_as_mlp(head: &SoftmaxProbe) -> Mlp {
    Mlp::from_layers(vec![crate::nn::Dense { weights: head.weights.clone(), bias: head.bias.clone() }])
        .expect("single layer is always consistent")
}

fn mlp_as_head(mlp: &Mlp) -> SoftmaxProbe {
    let layer = &mlp.layers()[0];
    SoftmaxProbe { weights: layer.weights.clone(), bias: layer.bias.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub reg_c: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Rank by geometric distance `|f_k(x)| / ||w_k||` instead of the raw
    /// decision value.
    pub normalize_margin: bool,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { reg_c: 5.0, tol: 1e-6, max_sweeps: 10_000, normalize_margin: false, seed: 0 }
    }
}

/// One-vs-rest linear SVM. Classes absent from training get no model and a
/// decision value of negative infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmOvrModel {
    /// `C x d`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub trained: Vec<bool>,
    pub reg_c: f64,
}

impl SvmOvrModel {
    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Result of one binary solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub sweeps: usize,
    pub duality_gap: f64,
    /// Dual objective after every sweep.
    pub dual_history: Vec<f64>,
}

/// Soft-margin hinge-loss SVM on `(x, 1)` by dual coordinate descent; the
/// bias is the weight of the constant feature and is regularized with it.
pub fn train_binary_svm(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    reg_c: f64,
    tol: f64,
    max_sweeps: usize,
    rng: &mut rng::Rng,
) -> Result<BinarySvm> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(Error::LengthMismatch(n, y.len()));
    }
    if reg_c.is_nan() || reg_c <= 0.0 {
        return Err(Error::invalid("svm: reg_c must be positive"));
    }
    let mut w = Array1::<f64>::zeros(d + 1);
    let mut alpha = vec![0.0; n];
    let qdiag: Vec<f64> = x.outer_iter().map(|r| r.dot(&r) + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut dual_history = Vec::new();
    let mut gap = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        order.shuffle(rng);
        for &i in &order {
            let xi = x.row(i);
            let margin = xi.dot(&w.slice(s![..d])) + w[d];
            let g = y[i] * margin - 1.0;
            let old = alpha[i];
            let new = (old - g / qdiag[i]).clamp(0.0, reg_c);
            let delta = new - old;
            if delta != 0.0 {
                alpha[i] = new;
                w.slice_mut(s![..d]).scaled_add(delta * y[i], &xi);
                w[d] += delta * y[i];
            }
        }
        sweeps += 1;
        let norm2 = w.dot(&w);
        let dual = alpha.iter().sum::<f64>() - 0.5 * norm2;
        let hinge: f64 = x
            .outer_iter()
            .zip(y)
            .map(|(r, &yi)| (1.0 - yi * (r.dot(&w.slice(s![..d])) + w[d])).max(0.0))
            .sum();
        let primal = 0.5 * norm2 + reg_c * hinge;
        dual_history.push(dual);
        gap = primal - dual;
        if gap <= tol * primal.abs().max(1.0) {
            break;
        }
    }
    Ok(BinarySvm { weights: w.slice(s![..d]).to_owned(), bias: w[d], sweeps, duality_gap: gap, dual_history })
}

pub fn train_svm_ovr(
    features: ArrayView2<'_, f64>,
    labels: &[u32],
    num_classes: usize,
    config: &SvmConfig,
) -> Result<SvmOvrModel> {
    let (n, d) = features.dim();
    if labels.len() != n {
        return Err(Error::LengthMismatch(n, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::LabelOutOfRange { row: 0, label: bad, num_classes: num_classes as u32 });
    }
    let mut present = vec![false; num_classes];
    for &l in labels {
        present[l as usize] = true;
    }
    if n < 2 || present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClass);
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svm features"));
    }
    let mut weights = Array2::zeros((num_classes, d));
    let mut bias = Array1::from_elem(num_classes, f64::NEG_INFINITY);
    for k in 0..num_classes {
        if !present[k] {
            continue;
        }
        let y: Vec<f64> = labels.iter().map(|&l| if l as usize == k { 1.0 } else { -1.0 }).collect();
        let mut rng = rng::stream(config.seed, Purpose::Svm, k as u32);
        let model = train_binary_svm(features, &y, config.reg_c, config.tol, config.max_sweeps, &mut rng)?;
        weights.row_mut(k).assign(&model.weights);
        bias[k] = model.bias;
    }
    Ok(SvmOvrModel { weights, bias, trained: present, reg_c: config.reg_c })
}

/// Signed margins `w_k . x + b_k`; untrained classes get negative infinity.
pub fn svm_decision_values(model: &SvmOvrModel, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if features.ncols() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: features.ncols() });
    }
    let mut out = features.dot(&model.weights.t());
    for (k, &trained) in model.trained.iter().enumerate() {
        let mut col = out.column_mut(k);
        if trained {
            col += model.bias[k];
        } else {
            col.fill(f64::NEG_INFINITY);
        }
    }
    Ok(out)
}

/// Decision values divided by `||w_k||`, i.e. signed Euclidean distance to
/// each hyperplane.
pub fn svm_geometric_margins(model: &SvmOvrModel, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut values = svm_decision_values(model, features)?;
    for (k, &trained) in model.trained.iter().enumerate() {
        if trained {
            let norm = model.weights.row(k).dot(&model.weights.row(k)).sqrt();
            if norm > 0.0 {
                values.column_mut(k).mapv_inplace(|v| v / norm);
            }
        }
    }
    Ok(values)
}

impl Classifier for SvmOvrModel {
    fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    fn input_dim(&self) -> usize {
        self.dim()
    }

    /// One-hot on the largest decision value.
    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let values = svm_decision_values(self, features)?;
        let mut out = Array2::zeros(values.dim());
        for (i, row) in values.outer_iter().enumerate() {
            out[[i, argmax(row.as_slice().unwrap_or(&row.to_vec()))]] = 1.0;
        }
        Ok(out)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_probe_is_uniform() {
        let probe = SoftmaxProbe::zeros(4, 3);
        let p = predict_proba(&probe, array![[1.0, -2.0, 3.0], [0.0, 0.0, 0.0]].view()).unwrap();
        for v in p.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn two_class_logits() {
        // 1 / (1 + e^-2) = 0.8807970779778823
        let p = softmax_rows(array![[2.0, 0.0]]);
        assert!((p[[0, 0]] - 0.880_797_077_977_882_3).abs() < 1e-12);
        assert!((p[[0, 1]] - 0.119_202_922_022_117_7).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax_rows(array![[1.0, 2.0, -3.0]]);
        let b = softmax_rows(array![[101.0, 102.0, 97.0]]);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let huge = softmax_rows(array![[1000.0, 0.0]]);
        assert!(huge.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let probe = SoftmaxProbe::zeros(2, 3);
        assert!(matches!(
            predict_proba(&probe, array![[1.0, 2.0]].view()),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn single_sample_overfit() {
        let x = array![[0.3, -1.2, 0.7]];
        let probe = train_probe(x.view(), &[2], 4, &ProbeTrainConfig::default()).unwrap();
        let p = predict_proba(&probe, x.view()).unwrap();
        assert!(p[[0, 2]] > 0.9, "p = {p:?}");
    }

    #[test]
    fn one_epoch_smoke_and_zero_epoch_rejected() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        let cfg = ProbeTrainConfig { epochs: 1, ..ProbeTrainConfig::default() };
        let (probe, log) = train_probe_logged(x.view(), &[0, 1, 1], 2, &cfg).unwrap();
        assert!(probe.is_finite());
        assert!(log.final_loss.is_finite());
        let zero = ProbeTrainConfig { epochs: 0, ..ProbeTrainConfig::default() };
        assert!(train_probe(x.view(), &[0, 1, 1], 2, &zero).is_err());
        let nan = array![[f64::NAN, 1.0]];
        assert!(matches!(train_probe(nan.view(), &[0], 2, &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_lr_keeps_initialization() {
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        let cfg = ProbeTrainConfig { base_lr: 0.0, ..ProbeTrainConfig::default() };
        let (probe, log) = train_probe_logged(x.view(), &[0, 1], 2, &cfg).unwrap();
        let mut rng = rng::stream(cfg.seed, Purpose::ProbeInit, 0);
        assert_eq!(probe, SoftmaxProbe::init(2, 2, &mut rng));
        assert_eq!(log.initial_loss, log.final_loss);
    }

    #[test]
    fn identity_encoder_reduces_to_probe() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [2.0, -1.0]];
        let y = [0, 1, 0, 1];
        let cfg = ProbeTrainConfig::default();
        let probe = train_probe(x.view(), &y, 2, &cfg).unwrap();
        let scratch = train_encoder_supervised(x.view(), &y, 2, &EncoderConfig { widths: vec![] }, &cfg).unwrap();
        assert!(scratch.encoder.is_none());
        assert_eq!(scratch.head, probe);
    }

    #[test]
    fn svm_symmetric_pair() {
        let x = array![[-1.0], [1.0]];
        let model = train_svm_ovr(x.view(), &[0, 1], 2, &SvmConfig::default()).unwrap();
        assert!((model.weights[[1, 0]] - 1.0).abs() < 1e-6);
        assert!(model.bias[1].abs() < 1e-6);
        let f = svm_decision_values(&model, x.view()).unwrap();
        assert!((f[[0, 1]] + 1.0).abs() < 1e-6);
        assert!((f[[1, 1]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn svm_rejects_single_class() {
        let x = array![[-1.0], [1.0]];
        assert!(matches!(train_svm_ovr(x.view(), &[1, 1], 2, &SvmConfig::default()), Err(Error::SingleClass)));
        assert!(matches!(train_svm_ovr(x.slice(s![..1, ..]), &[1], 2, &SvmConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn svm_absent_class_is_negative_infinity() {
        let x = array![[-1.0], [1.0]];
        let model = train_svm_ovr(x.view(), &[0, 2], 3, &SvmConfig::default()).unwrap();
        let f = svm_decision_values(&model, array![[0.5]].view()).unwrap();
        assert_eq!(f[[0, 1]], f64::NEG_INFINITY);
        assert!(f[[0, 0]].is_finite() && f[[0, 2]].is_finite());
    }

    #[test]
    fn decision_values_are_linear() {
        let model = SvmOvrModel {
            weights: array![[1.0], [-2.0]],
            bias: array![0.0, 0.0],
            trained: vec![true, true],
            reg_c: 5.0,
        };
        let f = svm_decision_values(&model, array![[0.3], [0.6]].view()).unwrap();
        assert!((f[[0, 0]] - 0.3).abs() < 1e-15);
        assert!((f[[1, 0]] - 2.0 * f[[0, 0]]).abs() < 1e-15);
        assert!((f[[1, 1]] - 2.0 * f[[0, 1]]).abs() < 1e-15);
        let on_plane = SvmOvrModel { bias: array![-0.3, 0.6], ..model };
        let f = svm_decision_values(&on_plane, array![[0.3]].view()).unwrap();
        assert!(f[[0, 0]].abs() < 1e-15 && f[[0, 1]].abs() < 1e-15);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }
}
