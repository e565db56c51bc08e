//! Trained models checked against independent reference computations.

use ndarray::{array, Array2, Axis};
use poolforge::data::generate_blobs;
use poolforge::linear::{
    svm_decision_values, train_binary_svm, train_probe, train_probe_logged, train_svm_ovr, Classifier,
};
use poolforge::orchestrator::{evaluate_accuracy, run_experiment};
use poolforge::rng::{stream, Purpose};
use poolforge::simsiam::{encode, normalized_embedding_std, train_simsiam};
use poolforge::{
    AugmentConfig, BlobSpec, BudgetSchedule, ExperimentConfig, FeatureDataset, Method, Mode, ProbeTrainConfig,
    SiamNetConfig, SiamTrainConfig, SvmConfig,
};
use rand::Rng;

/// Box-constrained dual of the bias-augmented soft-margin SVM, solved by
/// projected gradient ascent. Returns the dual objective.
fn qp_dual(x: &Array2<f64>, y: &[f64], reg_c: f64) -> f64 {
    let n = x.nrows();
    let mut q = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            q[[i, j]] = y[i] * y[j] * (x.row(i).dot(&x.row(j)) + 1.0);
        }
    }
    let step = 1.0 / q.diag().sum();
    let mut a = vec![0.0; n];
    for _ in 0..200_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[[i, j]] * a[j]).sum::<f64>()).collect();
        for i in 0..n {
            a[i] = (a[i] + step * grad[i]).clamp(0.0, reg_c);
        }
    }
    let quad: f64 = (0..n).map(|i| (0..n).map(|j| a[i] * q[[i, j]] * a[j]).sum::<f64>()).sum();
    a.iter().sum::<f64>() - 0.5 * quad
}

fn svm_primal(x: &Array2<f64>, y: &[f64], w: &ndarray::Array1<f64>, b: f64, reg_c: f64) -> f64 {
    let hinge: f64 = x.outer_iter().zip(y).map(|(r, yi)| (1.0 - yi * (r.dot(w) + b)).max(0.0)).sum();
    0.5 * (w.dot(w) + b * b) + reg_c * hinge
}

#[test]
fn svm_one_dimensional_matches_qp() {
    let x = array![[-1.0], [1.0]];
    let y = [-1.0, 1.0];
    let svm = train_binary_svm(x.view(), &y, 5.0, 1e-10, 10_000, &mut stream(0, Purpose::Svm, 0)).unwrap();
    let primal = svm_primal(&x, &y, &svm.weights, svm.bias, 5.0);
    let dual = qp_dual(&x, &y, 5.0);
    assert!((primal - dual).abs() < 1e-8, "primal {primal} dual {dual}");
    assert!((svm.weights[0] - 1.0).abs() < 1e-6);
    assert!(svm.bias.abs() < 1e-6);
}

#[test]
fn svm_random_problems_reach_qp_optimum() {
    let mut rng = stream(11, Purpose::Generate, 0);
    for trial in 0..10 {
        let n = rng.random_range(3..9);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-2.0..2.0));
        let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let reg_c = rng.random_range(0.1..5.0);
        let svm = train_binary_svm(x.view(), &y, reg_c, 1e-10, 10_000, &mut stream(trial, Purpose::Svm, 0)).unwrap();
        let primal = svm_primal(&x, &y, &svm.weights, svm.bias, reg_c);
        let dual = qp_dual(&x, &y, reg_c);
        assert!(primal >= dual - 1e-9);
        assert!((primal - dual) / primal.max(1.0) < 1e-5, "trial {trial}: primal {primal} dual {dual}");
    }
}

#[test]
fn svm_dual_is_non_decreasing() {
    let mut rng = stream(12, Purpose::Generate, 0);
    let x = Array2::from_shape_fn((40, 3), |_| rng.random_range(-1.0..1.0));
    let y: Vec<f64> = x.outer_iter().map(|r| if r[0] + 0.3 * r[1] > 0.0 { 1.0 } else { -1.0 }).collect();
    let svm = train_binary_svm(x.view(), &y, 2.0, 1e-12, 500, &mut stream(0, Purpose::Svm, 0)).unwrap();
    assert!(svm.dual_history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
}

#[test]
fn svm_large_c_separates_with_margin() {
    let mut rng = stream(13, Purpose::Generate, 0);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..30 {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        rows.extend([s * 2.0 + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]);
        y.push(s);
    }
    let x = Array2::from_shape_vec((30, 2), rows).unwrap();
    let svm = train_binary_svm(x.view(), &y, 1e4, 1e-9, 10_000, &mut stream(0, Purpose::Svm, 0)).unwrap();
    for (r, yi) in x.outer_iter().zip(&y) {
        assert!(yi * (r.dot(&svm.weights) + svm.bias) >= 1.0 - 1e-3);
    }
}

#[test]
fn svm_duplicating_points_with_half_c_is_invariant() {
    let mut rng = stream(14, Purpose::Generate, 0);
    let x = Array2::from_shape_fn((12, 2), |_| rng.random_range(-1.0..1.0));
    let y: Vec<f64> = x.outer_iter().map(|r| if r[0] - r[1] > 0.1 { 1.0 } else { -1.0 }).collect();
    let a = train_binary_svm(x.view(), &y, 2.0, 1e-12, 10_000, &mut stream(0, Purpose::Svm, 0)).unwrap();
    let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
    let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
    let b = train_binary_svm(x2.view(), &y2, 1.0, 1e-12, 10_000, &mut stream(1, Purpose::Svm, 0)).unwrap();
    assert!((&a.weights - &b.weights).iter().all(|d| d.abs() < 1e-4));
    assert!((a.bias - b.bias).abs() < 1e-4);
}

fn blobs_2d(c: usize, per_class: usize, sigma: f64, seed: u64) -> (Array2<f64>, Vec<u32>) {
    let mut rng = stream(seed, Purpose::Generate, 0);
    let centers = [[0.0, 3.0], [3.0, -2.0], [-3.0, -2.0]];
    let mut x = Array2::zeros((c * per_class, 2));
    let mut y = Vec::new();
    for (k, center) in centers.iter().enumerate().take(c) {
        for i in 0..per_class {
            let r = k * per_class + i;
            x[[r, 0]] = center[0] + sigma * rng.random_range(-1.0..1.0);
            x[[r, 1]] = center[1] + sigma * rng.random_range(-1.0..1.0);
            y.push(k as u32);
        }
    }
    (x, y)
}

#[test]
fn svm_three_class_blobs_own_class_positive() {
    let (x, y) = blobs_2d(3, 50, 0.5, 15);
    let model = train_svm_ovr(x.view(), &y, 3, &SvmConfig::default()).unwrap();
    let values = svm_decision_values(&model, x.view()).unwrap();
    let good = values.outer_iter().zip(&y).filter(|(v, &k)| v[k as usize] > 0.0).count();
    assert!(good as f64 >= 0.99 * y.len() as f64, "{good}/{}", y.len());
}

/// Perceptron run to convergence: independent witness of separability.
fn perceptron_separates(x: &Array2<f64>, y: &[u32], pos: u32) -> bool {
    let d = x.ncols();
    let mut w = vec![0.0; d + 1];
    for _ in 0..10_000 {
        let mut mistakes = 0;
        for (r, &l) in x.outer_iter().zip(y) {
            let t = if l == pos { 1.0 } else { -1.0 };
            let s: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d];
            if t * s <= 0.0 {
                mistakes += 1;
                for j in 0..d {
                    w[j] += t * r[j];
                }
                w[d] += t;
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

#[test]
fn separable_blobs_are_learned_by_probe() {
    let spec = BlobSpec { num_classes: 2, per_class: 50, dim: 2, noise_dim: 0, sigma: 0.05, seed: 3 };
    let (train, _) = generate_blobs(&spec).unwrap();
    let x = train.features_f64();
    assert!(perceptron_separates(&x, train.labels(), 1));
    let probe = train_probe(x.view(), train.labels(), 2, &ProbeTrainConfig::default()).unwrap();
    let proba = probe.predict_proba(x.view()).unwrap();
    let correct = proba.outer_iter().zip(train.labels()).filter(|(p, &l)| p[l as usize] > 0.5).count();
    assert!(correct as f64 >= 0.99 * train.len() as f64);
}

#[test]
fn probe_training_reduces_loss_and_fits_single_sample() {
    let x = array![[0.3, -1.2, 2.0]];
    let (probe, log) = train_probe_logged(x.view(), &[2], 4, &ProbeTrainConfig::default()).unwrap();
    assert!(log.final_loss <= log.initial_loss);
    assert!(probe.predict_proba(x.view()).unwrap()[[0, 2]] > 0.9);
}

fn two_clusters(per: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream(seed, Purpose::Generate, 0);
    Array2::from_shape_fn((2 * per, 8), |(i, _)| {
        let c = if i < per { 3.0 } else { -3.0 };
        c + 0.3 * rng.random_range(-1.0..1.0)
    })
}

#[test]
fn simsiam_two_clusters_converges_without_collapse() {
    let x = two_clusters(100, 21);
    let cfg = SiamTrainConfig { epochs: 30, seed: 5, ..SiamTrainConfig::default() };
    let (net, log) = train_simsiam(x.view(), &SiamNetConfig::default(), &AugmentConfig::default(), &cfg).unwrap();
    let last = *log.epoch_losses.last().unwrap();
    assert!(last < -0.8, "final loss {last}");
    assert!(last <= log.epoch_losses[0]);
    let emb = encode(&net, x.view()).unwrap();
    let std = normalized_embedding_std(emb.view()).unwrap();
    assert!(std > 0.1 / (emb.ncols() as f64).sqrt(), "std {std}");

    let (again, log2) = train_simsiam(x.view(), &SiamNetConfig::default(), &AugmentConfig::default(), &cfg).unwrap();
    assert_eq!(log.epoch_losses, log2.epoch_losses);
    assert_eq!(net.params_flat(), again.params_flat());
}

/// Softmax regression fitted by full-batch gradient descent: an oracle
/// probe on raw features.
struct RawOracle {
    w: Array2<f64>,
}

impl Classifier for RawOracle {
    fn num_classes(&self) -> usize {
        self.w.nrows()
    }

    fn input_dim(&self) -> usize {
        self.w.ncols() - 1
    }

    fn predict_proba(&self, features: ndarray::ArrayView2<'_, f64>) -> poolforge::Result<Array2<f64>> {
        let ones = Array2::ones((features.nrows(), 1));
        let xa = ndarray::concatenate(Axis(1), &[features, ones.view()]).unwrap();
        Ok(poolforge::linear::softmax_rows(xa.dot(&self.w.t())))
    }
}

fn raw_oracle(train: &FeatureDataset) -> RawOracle {
    let x = train.features_f64();
    let n = x.nrows();
    let ones = Array2::ones((n, 1));
    let xa = ndarray::concatenate(Axis(1), &[x.view(), ones.view()]).unwrap();
    let c = train.num_classes();
    let mut w = Array2::<f64>::zeros((c, xa.ncols()));
    for _ in 0..2000 {
        let mut p = poolforge::linear::softmax_rows(xa.dot(&w.t()));
        for (i, &l) in train.labels().iter().enumerate() {
            p[[i, l as usize]] -= 1.0;
        }
        w = w - p.t().dot(&xa) * (0.5 / n as f64);
    }
    RawOracle { w }
}

#[test]
fn end_to_end_on_separable_blobs_matches_raw_oracle() {
    let spec = BlobSpec { num_classes: 3, per_class: 60, dim: 3, noise_dim: 0, sigma: 0.1, seed: 4 };
    let (train, test) = generate_blobs(&spec).unwrap();
    let oracle = evaluate_accuracy(&raw_oracle(&train), &test).unwrap();
    let n = train.len();
    let initial = n / 4;
    let mut cfg = ExperimentConfig::new(BudgetSchedule::equal(initial, 3), Mode::Scratch, Method::Entropy, 1);
    cfg.scratch.epochs = 200;
    let result = run_experiment(&cfg, &train, &test, None).unwrap();
    let last = result.records.last().unwrap();
    assert_eq!(last.labeled_count, n);
    assert!(last.test_accuracy >= 0.95, "{}", last.test_accuracy);
    assert!(last.test_accuracy >= oracle - 1e-12, "run {} oracle {oracle}", last.test_accuracy);
}

#[test]
fn runs_are_deterministic() {
    let spec = BlobSpec { num_classes: 3, per_class: 30, dim: 4, noise_dim: 2, sigma: 0.3, seed: 9 };
    let (train, test) = generate_blobs(&spec).unwrap();
    for mode in [Mode::SelfTrain, Mode::Scratch] {
        let mut cfg = ExperimentConfig::new(BudgetSchedule::equal(6, 3), mode, Method::SvmMinMargin, 2);
        cfg.siam.epochs = 10;
        let a = run_experiment(&cfg, &train, &test, None).unwrap();
        let b = run_experiment(&cfg, &train, &test, None).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_eq!(a.records.iter().map(|r| r.labeled_count).collect::<Vec<_>>(), vec![6, 12, 18, 24]);
    }
}
