//! The active-learning loop: optional self-supervised pre-training, then
//! `cycles + 1` rounds of train / evaluate / acquire / annotate.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{
    acquire_entropy, acquire_kcenter_greedy, acquire_random, acquire_svm_min_margin, AcquisitionRequest, Method,
};
use crate::advisor::LearningCurve;
use crate::data::{initial_split, BudgetSchedule, FeatureDataset, Oracle, PoolState, SplitSpec};
use crate::error::{Error, Result};
use crate::linear::{
    argmax, svm_decision_values, svm_geometric_margins, train_encoder_supervised, train_probe, train_svm_ovr,
    Classifier, ProbeTrainConfig, SoftmaxProbe, SvmConfig,
};
use crate::rng::{self, Purpose};
use crate::simsiam::{train_simsiam, AugmentConfig, FrozenEncoder, SiamNet, SiamNetConfig, SiamTrainConfig};

/// Where the classifier's representation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Frozen self-supervised encoder plus a linear probe.
    SelfTrain,
    /// Encoder and head trained from a fresh initialization on labeled data.
    Scratch,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SelfTrain => "self_train",
            Mode::Scratch => "scratch",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self_train" => Ok(Mode::SelfTrain),
            "scratch" => Ok(Mode::Scratch),
            other => Err(Error::invalid(format!("unknown mode: {other}"))),
        }
    }
}

/// Fully resolved settings for one run. Sub-config seeds are ignored: every
/// random stream is derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schedule: BudgetSchedule,
    pub mode: Mode,
    pub method: Method,
    pub balanced_split: bool,
    pub probe: ProbeTrainConfig,
    /// Optimizer settings of the from-scratch network.
    pub scratch: ProbeTrainConfig,
    pub net: SiamNetConfig,
    pub siam: SiamTrainConfig,
    pub augment: AugmentConfig,
    pub svm: Option<SvmConfig>,
    pub standardize_embeddings: bool,
    /// Record wall-clock seconds per cycle. Off by default so that results
    /// are reproducible byte for byte.
    pub record_wall_time: bool,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(schedule: BudgetSchedule, mode: Mode, method: Method, seed: u64) -> Self {
        Self {
            schedule,
            mode,
            method,
            balanced_split: true,
            probe: ProbeTrainConfig::default(),
            scratch: ProbeTrainConfig::default(),
            net: SiamNetConfig::default(),
            siam: SiamTrainConfig::default(),
            augment: AugmentConfig::default(),
            svm: (method == Method::SvmMinMargin).then(SvmConfig::default),
            standardize_embeddings: true,
            record_wall_time: false,
            seed,
        }
    }

    pub fn validate(&self, train_len: usize) -> Result<()> {
        self.schedule.validate(train_len)?;
        self.probe.validate()?;
        self.scratch.validate()?;
        self.siam.validate()?;
        self.augment.validate()?;
        if self.method == Method::SvmMinMargin && self.svm.is_none() {
            return Err(Error::invalid("svm_min_margin requires an svm config"));
        }
        if let Some(svm) = &self.svm {
            if svm.reg_c.is_nan() || svm.reg_c <= 0.0 {
                return Err(Error::invalid("svm: reg_c must be positive"));
            }
        }
        Ok(())
    }

    /// SHA-256 (hex) of the canonical JSON form of this config.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub labeled_count: usize,
    pub test_accuracy: f64,
    pub method: Method,
    pub mode: Mode,
    pub wall_time: f64,
}

/// Bookkeeping collected along a run, for invariant checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunAudit {
    pub simsiam_trainings: usize,
    pub oracle_queries: usize,
    pub labels_revealed: usize,
    /// Pool at each evaluation point.
    pub pools: Vec<PoolState>,
    /// Encoder parameter hash at each evaluation point (self-train only).
    pub encoder_hashes: Vec<[u8; 32]>,
    /// Final SimSiam epoch loss, when pre-training ran.
    pub siam_final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub records: Vec<CycleRecord>,
    pub fingerprint: String,
    pub audit: RunAudit,
}

/// Frozen encoder + probe, evaluated on raw features.
#[derive(Debug, Clone)]
pub struct FrozenProbe<'a> {
    pub encoder: &'a FrozenEncoder,
    pub probe: SoftmaxProbe,
}

impl Classifier for FrozenProbe<'_> {
    fn num_classes(&self) -> usize {
        self.probe.num_classes()
    }

    fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.probe.predict_proba(self.encoder.embed(features)?.view())
    }
}

/// Fraction of test rows whose argmax prediction (lowest class id on ties)
/// equals the label.
pub fn evaluate_accuracy(classifier: &dyn Classifier, test: &FeatureDataset) -> Result<f64> {
    if classifier.input_dim() != test.dim() {
        return Err(Error::DimensionMismatch { expected: classifier.input_dim(), got: test.dim() });
    }
    let proba = classifier.predict_proba(test.features_f64().view())?;
    let correct = proba
        .outer_iter()
        .zip(test.labels())
        .filter(|(row, &y)| argmax(&row.to_vec()) == y as usize)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Runs one experiment end to end. `pretrained` replaces self-supervised
/// training in self-train mode.
pub fn run_experiment(
    config: &ExperimentConfig,
    train: &FeatureDataset,
    test: &FeatureDataset,
    pretrained: Option<&SiamNet>,
) -> Result<RunResult> {
    config.validate(train.len())?;
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch { expected: train.dim(), got: test.dim() });
    }
    if train.num_classes() != test.num_classes() {
        return Err(Error::invalid("train and test disagree on the number of classes"));
    }
    let seed = config.seed;
    let x_train = train.features_f64();
    let mut audit = RunAudit::default();

    let frozen = match config.mode {
        Mode::Scratch => None,
        Mode::SelfTrain => {
            let net = match pretrained {
                Some(net) => net.clone(),
                None => {
                    let siam = SiamTrainConfig { seed: rng::derive_seed(seed, Purpose::SiamTrain, 0), ..config.siam.clone() };
                    let (net, log) = train_simsiam(x_train.view(), &config.net, &config.augment, &siam)?;
                    audit.simsiam_trainings += 1;
                    audit.siam_final_loss = log.epoch_losses.last().copied();
                    net
                }
            };
            if net.input_dim() != train.dim() {
                return Err(Error::DimensionMismatch { expected: train.dim(), got: net.input_dim() });
            }
            Some(FrozenEncoder::new(&net, x_train.view(), config.standardize_embeddings)?)
        }
    };
    let frozen_train = frozen.as_ref().map(|f| f.embed(x_train.view())).transpose()?;

    let split = SplitSpec { seed: rng::derive_seed(seed, Purpose::Split, 0), balanced: config.balanced_split };
    let mut pool = initial_split(train, &config.schedule, &split)?;
    let mut oracle = Oracle::new(train);
    oracle.reveal_initial(&pool);

    let mut records = Vec::with_capacity(config.schedule.cycles + 1);
    for cycle in 0..=config.schedule.cycles {
        let started = Instant::now();
        let step = run_cycle(config, cycle, &pool, &oracle, train, test, &x_train, frozen.as_ref(), frozen_train.as_ref())
            .map_err(|e| Error::Cycle { cycle, source: Box::new(e) })?;
        audit.pools.push(pool.clone());
        if let Some(f) = &frozen {
            audit.encoder_hashes.push(f.encoder.param_hash());
        }
        if cycle < config.schedule.cycles {
            pool = oracle.query(&pool, &step.query).map_err(|e| Error::Cycle { cycle, source: Box::new(e) })?;
        }
        records.push(CycleRecord {
            cycle,
            labeled_count: step.labeled,
            test_accuracy: step.accuracy,
            method: config.method,
            mode: config.mode,
            wall_time: if config.record_wall_time { started.elapsed().as_secs_f64() } else { 0.0 },
        });
    }
    audit.oracle_queries = oracle.query_count();
    audit.labels_revealed = oracle.revealed_count();
    Ok(RunResult { records, fingerprint: config.fingerprint(), audit })
}

struct CycleOutcome {
    labeled: usize,
    accuracy: f64,
    query: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
fn run_cycle(
    config: &ExperimentConfig,
    cycle: usize,
    pool: &PoolState,
    oracle: &Oracle,
    train: &FeatureDataset,
    test: &FeatureDataset,
    x_train: &Array2<f64>,
    frozen: Option<&FrozenEncoder>,
    frozen_train: Option<&Array2<f64>>,
) -> Result<CycleOutcome> {
    let seed = config.seed;
    let t = cycle as u32;
    let c = train.num_classes();
    let labels = oracle.labels_for(pool.labeled())?;

    // `space` is the representation acquisition works in; `proba_u` the
    // classifier's predictive distribution over the unlabeled pool.
    let (accuracy, space, proba_u) = match (config.mode, frozen, frozen_train) {
        (Mode::SelfTrain, Some(frozen), Some(emb)) => {
            let probe_cfg = ProbeTrainConfig { seed: rng::derive_seed(seed, Purpose::ProbeTrain, t), ..config.probe.clone() };
            let probe = train_probe(emb.select(Axis(0), pool.labeled()).view(), &labels, c, &probe_cfg)?;
            let proba_u = probe.predict_proba(emb.select(Axis(0), pool.unlabeled()).view())?;
            let classifier = FrozenProbe { encoder: frozen, probe };
            (evaluate_accuracy(&classifier, test)?, emb.clone(), proba_u)
        }
        (Mode::Scratch, _, _) => {
            let cfg = ProbeTrainConfig { seed: rng::derive_seed(seed, Purpose::ScratchTrain, t), ..config.scratch.clone() };
            let x_l = x_train.select(Axis(0), pool.labeled());
            let model = train_encoder_supervised(x_l.view(), &labels, c, &config.net.encoder, &cfg)?;
            let accuracy = evaluate_accuracy(&model, test)?;
            let proba_u = model.predict_proba(x_train.select(Axis(0), pool.unlabeled()).view())?;
            (accuracy, model.embed(x_train.view())?, proba_u)
        }
        _ => unreachable!("self-train mode always has a frozen encoder"),
    };

    let query = if cycle < config.schedule.cycles {
        let request = AcquisitionRequest {
            pool,
            budget: config.schedule.per_cycle,
            method: config.method,
            seed: rng::derive_seed(seed, Purpose::Acquire, t),
        };
        acquire(config, &request, &space, &proba_u, &labels, c)?
    } else {
        Vec::new()
    };
    Ok(CycleOutcome { labeled: pool.labeled().len(), accuracy, query })
}

fn acquire(
    config: &ExperimentConfig,
    request: &AcquisitionRequest<'_>,
    space: &Array2<f64>,
    proba_u: &Array2<f64>,
    labels: &[u32],
    num_classes: usize,
) -> Result<Vec<usize>> {
    let pool = request.pool;
    let selection = match request.method {
        Method::Random => {
            let mut rng = rng::stream(request.seed, Purpose::Acquire, 0);
            acquire_random(request, &mut rng)?
        }
        Method::Entropy => acquire_entropy(proba_u.view(), request)?,
        Method::Kcenter => acquire_kcenter_greedy(space.view(), request)?,
        Method::SvmMinMargin => {
            let svm_cfg = config.svm.as_ref().ok_or_else(|| Error::invalid("missing svm config"))?;
            let svm_cfg = SvmConfig { seed: request.seed, ..svm_cfg.clone() };
            let model = train_svm_ovr(space.select(Axis(0), pool.labeled()).view(), labels, num_classes, &svm_cfg)?;
            let x_u = space.select(Axis(0), pool.unlabeled());
            let values = if svm_cfg.normalize_margin {
                svm_geometric_margins(&model, x_u.view())?
            } else {
                svm_decision_values(&model, x_u.view())?
            };
            acquire_svm_min_margin(values.view(), num_classes, request)?
        }
    };
    Ok(selection.chosen)
}

/// Accuracy-vs-budget curve of a run.
pub fn emit_curve(result: &RunResult) -> Result<LearningCurve> {
    let first = result.records.first().ok_or_else(|| Error::invalid("run has no records"))?;
    let mut records: Vec<&CycleRecord> = result.records.iter().collect();
    records.sort_by_key(|r| r.labeled_count);
    LearningCurve::new(
        records.iter().map(|r| r.labeled_count).collect(),
        records.iter().map(|r| r.test_accuracy).collect(),
        first.method,
        first.mode,
    )
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_blobs, BlobSpec, Split};
    use crate::linear::SoftmaxProbe;
    use ndarray::array;

    fn small() -> (FeatureDataset, FeatureDataset) {
        generate_blobs(&BlobSpec { num_classes: 3, per_class: 30, dim: 4, noise_dim: 2, sigma: 0.2, seed: 1 }).unwrap()
    }

    fn quick(mode: Mode, method: Method) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(BudgetSchedule::equal(6, 2), mode, method, 11);
        cfg.siam.epochs = 5;
        cfg.probe.epochs = 20;
        cfg.scratch.epochs = 20;
        cfg
    }

    #[test]
    fn records_follow_schedule() {
        let (tr, te) = small();
        for method in Method::ALL {
            for mode in [Mode::SelfTrain, Mode::Scratch] {
                let r = run_experiment(&quick(mode, method), &tr, &te, None).unwrap();
                let counts: Vec<usize> = r.records.iter().map(|r| r.labeled_count).collect();
                assert_eq!(counts, vec![6, 12, 18], "{method} {mode}");
                assert_eq!(r.audit.oracle_queries, 12);
                assert_eq!(r.audit.simsiam_trainings, usize::from(mode == Mode::SelfTrain));
            }
        }
    }

    #[test]
    fn pretrained_net_skips_simsiam() {
        let (tr, te) = small();
        let net = SiamNet::init(tr.dim(), &SiamNetConfig::default(), 0).unwrap();
        let r = run_experiment(&quick(Mode::SelfTrain, Method::Entropy), &tr, &te, Some(&net)).unwrap();
        assert_eq!(r.audit.simsiam_trainings, 0);
        let wrong = SiamNet::init(tr.dim() + 1, &SiamNetConfig::default(), 0).unwrap();
        assert!(run_experiment(&quick(Mode::SelfTrain, Method::Entropy), &tr, &te, Some(&wrong)).is_err());
    }

    #[test]
    fn config_validation() {
        let (tr, te) = small();
        let mut cfg = quick(Mode::Scratch, Method::SvmMinMargin);
        cfg.svm = None;
        assert!(run_experiment(&cfg, &tr, &te, None).is_err());
        let mut cfg = quick(Mode::Scratch, Method::Random);
        cfg.schedule = BudgetSchedule::equal(30, 5);
        assert!(run_experiment(&cfg, &tr, &te, None).is_err());
        cfg.schedule = BudgetSchedule { initial: 6, per_cycle: 5, cycles: 1 };
        assert!(run_experiment(&cfg, &tr, &te, None).is_err());
    }

    #[test]
    fn accuracy_of_perfect_and_uniform_classifiers() {
        let feats = array![[1.0f32, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let test = FeatureDataset::new(feats, vec![0, 1, 0, 1], 2, Split::Test).unwrap();
        let perfect = SoftmaxProbe { weights: array![[10.0, 0.0], [0.0, 10.0]], bias: array![0.0, 0.0] };
        assert_eq!(evaluate_accuracy(&perfect, &test).unwrap(), 1.0);
        let uniform = SoftmaxProbe::zeros(2, 2);
        assert_eq!(evaluate_accuracy(&uniform, &test).unwrap(), 0.5);
        assert!(evaluate_accuracy(&SoftmaxProbe::zeros(2, 3), &test).is_err());
    }

    #[test]
    fn curve_from_records() {
        let rec = |cycle, labeled_count| CycleRecord {
            cycle,
            labeled_count,
            test_accuracy: 0.5,
            method: Method::Random,
            mode: Mode::Scratch,
            wall_time: 0.0,
        };
        let run = RunResult { records: vec![rec(0, 5)], fingerprint: String::new(), audit: RunAudit::default() };
        assert_eq!(emit_curve(&run).unwrap().budgets, vec![5]);
        let run = RunResult { records: vec![rec(0, 5), rec(1, 10), rec(2, 15)], ..run };
        assert_eq!(emit_curve(&run).unwrap().budgets, vec![5, 10, 15]);
    }

    #[test]
    fn mode_names() {
        assert_eq!("self_train".parse::<Mode>().unwrap(), Mode::SelfTrain);
        assert_eq!(Mode::Scratch.to_string(), "scratch");
        assert!("finetune".parse::<Mode>().is_err());
    }
}
