//! Datasets, pool bookkeeping, budget schedules and the simulated oracle.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub const FEATURE_MAGIC: [u8; 4] = *b"PFV1";
const HEADER_LEN: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Feature matrix plus ground-truth labels.
///
/// The split tag is not persisted; [`load_dataset`] yields `Split::Train` and
/// [`load_dataset_as`] lets the caller choose.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Array2<f32>,
    labels: Vec<u32>,
    num_classes: u32,
    split: Split,
}

impl FeatureDataset {
    pub fn new(features: Array2<f32>, labels: Vec<u32>, num_classes: u32, split: Split) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!("dataset must have n >= 1 and d >= 1, got {n}x{d}")));
        }
        if num_classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {num_classes}")));
        }
        if labels.len() != n {
            return Err(Error::LengthMismatch(n, labels.len()));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange { row, label, num_classes });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self { features, labels, num_classes, split })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes as usize
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn features(&self) -> ArrayView2<'_, f32> {
        self.features.view()
    }

    /// Features widened to `f64` for computation.
    pub fn features_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }

    /// Rows `indices` widened to `f64`.
    pub fn rows_f64(&self, indices: &[usize]) -> Array2<f64> {
        let d = self.dim();
        Array2::from_shape_fn((indices.len(), d), |(r, c)| f64::from(self.features[[indices[r], c]]))
    }

    /// Ground-truth labels. Training code must go through [`Oracle`] for the
    /// train split; this accessor exists for evaluation and persistence.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

/// Writes the `PFV1` binary format (little-endian).
pub fn save_dataset(dataset: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    let (n, d) = dataset.features.dim();
    let mut buf = Vec::with_capacity(HEADER_LEN as usize + 4 * n * d + 4 * n);
    buf.extend_from_slice(&FEATURE_MAGIC);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&dataset.num_classes.to_le_bytes());
    for v in dataset.features.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for l in &dataset.labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    file.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    load_dataset_as(path, Split::Train)
}

pub fn load_dataset_as(path: impl AsRef<Path>, split: Split) -> Result<FeatureDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    decode_dataset(&bytes, split)
}

fn decode_dataset(bytes: &[u8], split: Split) -> Result<FeatureDataset> {
    if bytes.len() >= 4 && bytes[..4] != FEATURE_MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(Error::BadMagic { expected: FEATURE_MAGIC, found });
    }
    if (bytes.len() as u64) < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() as u64 });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (n, d, c) = (word(4) as u64, word(8) as u64, word(12));
    let expected = HEADER_LEN + 4 * n * d + 4 * n;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated { expected, found: bytes.len() as u64 });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::invalid(format!(
            "{} trailing bytes after feature payload",
            bytes.len() as u64 - expected
        )));
    }
    let (n, d) = (n as usize, d as usize);
    let body = &bytes[HEADER_LEN as usize..];
    let features: Vec<f32> = body[..4 * n * d]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let labels: Vec<u32> = body[4 * n * d..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= c) {
        return Err(Error::LabelOutOfRange { row, label, num_classes: c });
    }
    let features = Array2::from_shape_vec((n, d), features).map_err(|e| Error::invalid(e.to_string()))?;
    FeatureDataset::new(features, labels, c, split)
}

/// Parameters of the Gaussian-blob generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub noise_dim: usize,
    pub sigma: f64,
    pub seed: u64,
}

/// Gaussian clusters around distinct vertices of the unit `dim`-cube, so any
/// two class means are at least unit distance apart.
///
/// Samples get isotropic noise of scale `sigma` in the informative
/// coordinates, `noise_dim` pure-noise coordinates of the same scale are
/// appended, and a fixed random rotation mixes everything. Each class is
/// split 80/20 into train and test.
pub fn generate_blobs(spec: &BlobSpec) -> Result<(FeatureDataset, FeatureDataset)> {
    let BlobSpec { num_classes, per_class, dim, noise_dim, sigma, seed } = *spec;
    if num_classes < 2 {
        return Err(Error::invalid("generate_blobs: num_classes must be >= 2"));
    }
    if per_class < 2 {
        return Err(Error::invalid("generate_blobs: per_class must be >= 2"));
    }
    if dim == 0 {
        return Err(Error::invalid("generate_blobs: dim must be >= 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("generate_blobs: sigma must be positive"));
    }
    let mut rng = rng::stream(seed, Purpose::Generate, 0);
    let means = cluster_means(num_classes, dim, &mut rng)?;
    let total_dim = dim + noise_dim;
    let rotation = random_rotation(total_dim, &mut rng);

    let train_per_class = ((per_class as f64) * 0.8).round().clamp(1.0, (per_class - 1) as f64) as usize;
    let mut train_rows: Vec<(Array1<f64>, u32)> = Vec::new();
    let mut test_rows: Vec<(Array1<f64>, u32)> = Vec::new();
    for (k, mean) in means.outer_iter().enumerate() {
        for i in 0..per_class {
            let mut raw = Array1::<f64>::zeros(total_dim);
            for j in 0..total_dim {
                let eps: f64 = StandardNormal.sample(&mut rng);
                let center = if j < dim { mean[j] } else { 0.0 };
                raw[j] = center + sigma * eps;
            }
            let x = rotation.dot(&raw);
            if i < train_per_class {
                train_rows.push((x, k as u32));
            } else {
                test_rows.push((x, k as u32));
            }
        }
    }
    train_rows.shuffle(&mut rng);
    test_rows.shuffle(&mut rng);
    let assemble = |rows: Vec<(Array1<f64>, u32)>, split| {
        let n = rows.len();
        let feats = Array2::from_shape_fn((n, total_dim), |(r, c)| rows[r].0[c] as f32);
        let labels = rows.iter().map(|(_, l)| *l).collect();
        FeatureDataset::new(feats, labels, num_classes as u32, split)
    };
    Ok((assemble(train_rows, Split::Train)?, assemble(test_rows, Split::Test)?))
}

fn cluster_means(c: usize, d: usize, rng: &mut rng::Rng) -> Result<Array2<f64>> {
    if d < usize::BITS as usize && c > 1usize << d {
        return Err(Error::invalid(format!("generate_blobs: {c} classes do not fit on the {d}-cube")));
    }
    let mut chosen: Vec<Vec<bool>> = Vec::with_capacity(c);
    while chosen.len() < c {
        let v: Vec<bool> = (0..d).map(|_| rng.random::<bool>()).collect();
        if !chosen.contains(&v) {
            chosen.push(v);
        }
    }
    Ok(Array2::from_shape_fn((c, d), |(k, j)| if chosen[k][j] { 1.0 } else { 0.0 }))
}

/// Orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
fn random_rotation(n: usize, rng: &mut rng::Rng) -> Array2<f64> {
    loop {
        let mut q: Array2<f64> = Array2::from_shape_fn((n, n), |_| StandardNormal.sample(rng));
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let proj = q.row(i).dot(&q.row(j));
                let rj = q.row(j).to_owned();
                q.row_mut(i).scaled_add(-proj, &rj);
            }
            let norm = q.row(i).dot(&q.row(i)).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.row_mut(i).mapv_inplace(|v| v / norm);
        }
        if ok {
            return q;
        }
    }
}

/// Initial, per-cycle and total labeling budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSchedule {
    pub initial: usize,
    pub per_cycle: usize,
    pub cycles: usize,
}

impl BudgetSchedule {
    /// Schedule where every cycle labels as many samples as the initial pool.
    pub fn equal(initial: usize, cycles: usize) -> Self {
        Self { initial, per_cycle: initial, cycles }
    }

    pub fn total(&self) -> usize {
        self.initial + self.cycles * self.per_cycle
    }

    /// Labeled count at evaluation point `cycle`.
    pub fn labeled_at(&self, cycle: usize) -> usize {
        self.initial + cycle * self.per_cycle
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.initial == 0 {
            return Err(Error::invalid("schedule: initial must be >= 1"));
        }
        if self.per_cycle != self.initial {
            return Err(Error::invalid(format!(
                "schedule: per_cycle ({}) must equal initial ({})",
                self.per_cycle, self.initial
            )));
        }
        if self.total() > n {
            return Err(Error::invalid(format!(
                "schedule: total budget {} exceeds pool size {n}",
                self.total()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub balanced: bool,
}

/// Disjoint labeled / unlabeled index sets.
///
/// `labeled` keeps insertion order; `unlabeled` is kept ascending so that
/// row `r` of any matrix scored over the unlabeled pool maps to
/// `unlabeled[r]` and lower rows are lower dataset indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    cycle: usize,
}

impl PoolState {
    /// Pool of size `n` with `labeled` already annotated.
    pub fn new(n: usize, labeled: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &labeled {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            if seen[i] {
                return Err(Error::DuplicateIndex(i));
            }
            seen[i] = true;
        }
        let unlabeled = (0..n).filter(|&i| !seen[i]).collect();
        Ok(Self { labeled, unlabeled, cycle: 0 })
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Moves `indices` from the unlabeled to the labeled set and advances
    /// the cycle counter.
    pub fn query(&self, indices: &[usize]) -> Result<PoolState> {
        let n = self.len();
        let mut labeled_mask = vec![false; n];
        for &i in &self.labeled {
            labeled_mask[i] = true;
        }
        let mut picked = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            if labeled_mask[i] {
                return Err(Error::AlreadyLabeled(i));
            }
            if picked[i] {
                return Err(Error::DuplicateIndex(i));
            }
            picked[i] = true;
        }
        let mut labeled = self.labeled.clone();
        labeled.extend_from_slice(indices);
        let unlabeled = self.unlabeled.iter().copied().filter(|&i| !picked[i]).collect();
        Ok(PoolState { labeled, unlabeled, cycle: self.cycle + 1 })
    }
}

/// Draws the initial labeled pool.
///
/// Balanced splits give every class `initial / C` samples; the `initial % C`
/// classes that come first in a seeded shuffle of class ids get one more.
pub fn initial_split(dataset: &FeatureDataset, schedule: &BudgetSchedule, spec: &SplitSpec) -> Result<PoolState> {
    let n = dataset.len();
    let c = dataset.num_classes();
    if schedule.initial > n {
        return Err(Error::invalid(format!("initial budget {} exceeds pool size {n}", schedule.initial)));
    }
    let mut rng = rng::stream(spec.seed, Purpose::Split, 0);
    if !spec.balanced {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.truncate(schedule.initial);
        return PoolState::new(n, all);
    }
    if schedule.initial < c {
        return Err(Error::invalid(format!(
            "balanced split needs initial ({}) >= num_classes ({c})",
            schedule.initial
        )));
    }
    let mut class_order: Vec<usize> = (0..c).collect();
    class_order.shuffle(&mut rng);
    let base = schedule.initial / c;
    let extra = schedule.initial % c;
    let mut quota = vec![base; c];
    for &k in class_order.iter().take(extra) {
        quota[k] += 1;
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &l) in dataset.labels().iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut labeled = Vec::with_capacity(schedule.initial);
    for k in 0..c {
        let members = &mut by_class[k];
        if members.len() < quota[k] {
            return Err(Error::invalid(format!(
                "class {k} has {} samples, balanced split needs {}",
                members.len(),
                quota[k]
            )));
        }
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..quota[k]]);
    }
    labeled.shuffle(&mut rng);
    PoolState::new(n, labeled)
}

/// Pure pool transition: moves `indices` into the labeled set.
pub fn query_oracle(pool: &PoolState, dataset: &FeatureDataset, indices: &[usize]) -> Result<PoolState> {
    if pool.len() != dataset.len() {
        return Err(Error::DimensionMismatch { expected: dataset.len(), got: pool.len() });
    }
    pool.query(indices)
}

/// Simulated annotator. Holds the train labels and hands out only those that
/// have been revealed, counting every reveal.
#[derive(Debug, Clone)]
pub struct Oracle {
    labels: Vec<u32>,
    revealed: Vec<bool>,
    queried: usize,
}

impl Oracle {
    pub fn new(train: &FeatureDataset) -> Self {
        Self {
            labels: train.labels().to_vec(),
            revealed: vec![false; train.len()],
            queried: 0,
        }
    }

    /// Reveals the labels of the initial pool. Not counted as queries.
    pub fn reveal_initial(&mut self, pool: &PoolState) {
        for &i in pool.labeled() {
            self.revealed[i] = true;
        }
    }

    /// Annotates `indices`, returning the advanced pool.
    pub fn query(&mut self, pool: &PoolState, indices: &[usize]) -> Result<PoolState> {
        if pool.len() != self.labels.len() {
            return Err(Error::DimensionMismatch { expected: self.labels.len(), got: pool.len() });
        }
        let next = pool.query(indices)?;
        for &i in indices {
            self.revealed[i] = true;
        }
        self.queried += indices.len();
        Ok(next)
    }

    /// Labels for already-revealed indices; asking for an unrevealed index is
    /// an error.
    pub fn labels_for(&self, indices: &[usize]) -> Result<Vec<u32>> {
        indices
            .iter()
            .map(|&i| {
                if i >= self.labels.len() {
                    Err(Error::IndexOutOfRange { index: i, n: self.labels.len() })
                } else if !self.revealed[i] {
                    Err(Error::invalid(format!("label of index {i} has not been revealed")))
                } else {
                    Ok(self.labels[i])
                }
            })
            .collect()
    }

    /// Number of labels handed out through [`Oracle::query`].
    pub fn query_count(&self) -> usize {
        self.queried
    }

    pub fn revealed_count(&self) -> usize {
        self.revealed.iter().filter(|&&r| r).count()
    }
}
