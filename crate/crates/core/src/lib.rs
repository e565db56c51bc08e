//! Active-learning experimentation engine.
//!
//! A SimSiam-style encoder is pre-trained on the unlabeled pool, a linear
//! probe is fit on its frozen embeddings, and acquisition functions pick the
//! next batch to label, cycle after cycle, until the labeling budget runs
//! out. The [`advisor`] module turns the resulting learning curves into
//! crossover budgets and a class-count guideline.

pub mod acquisition;
pub mod advisor;
pub mod data;
pub mod error;
pub mod linear;
pub mod nn;
pub mod orchestrator;
pub mod rng;
pub mod simsiam;

pub use acquisition::{AcquisitionRequest, Method, ScoredSelection};
pub use advisor::{Advice, LearningCurve, LineFit, ThresholdPoint};
pub use data::{BlobSpec, BudgetSchedule, FeatureDataset, Oracle, PoolState, Split, SplitSpec};
pub use error::{Error, Result};
pub use linear::{Classifier, ProbeTrainConfig, SoftmaxProbe, SvmConfig, SvmOvrModel};
pub use orchestrator::{CycleRecord, ExperimentConfig, Mode, RunResult};
pub use simsiam::{AugmentConfig, SiamNet, SiamNetConfig, SiamTrainConfig};
