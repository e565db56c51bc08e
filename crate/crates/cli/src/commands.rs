use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use poolforge::advisor::{advise_budget, find_crossover, fit_threshold_line};
use poolforge::data::{generate_blobs, load_dataset_as, save_dataset};
use poolforge::orchestrator::run_experiment;
use poolforge::simsiam::{load_net, save_net, train_simsiam};
use poolforge::{
    AugmentConfig, BlobSpec, FeatureDataset, Method, Mode, SiamNet, SiamNetConfig, SiamTrainConfig, Split,
    ThresholdPoint,
};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::RunFile;
use crate::results::{mean_curves, read_rows, rows_of, write_entries, write_rows, ResultRow, RunEntry};

pub fn gen_data(spec: &BlobSpec, out: &Path) -> Result<(PathBuf, PathBuf)> {
    let (train, test) = generate_blobs(spec)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let train_path = out.join("train.pfv");
    let test_path = out.join("test.pfv");
    save_dataset(&train, &train_path)?;
    save_dataset(&test, &test_path)?;
    Ok((train_path, test_path))
}

/// Trains SimSiam on every row of `train` and writes the network to `out`.
/// Returns the final epoch's mean loss.
pub fn selftrain(
    train: &Path,
    out: &Path,
    net: &SiamNetConfig,
    aug: &AugmentConfig,
    siam: &SiamTrainConfig,
) -> Result<f64> {
    siam.validate()?;
    let data = load_dataset_as(train, Split::Train)?;
    let (trained, log) = train_simsiam(data.features_f64().view(), net, aug, siam)?;
    save_net(&trained, out)?;
    Ok(*log.epoch_losses.last().expect("at least one epoch"))
}

pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub entries: Vec<RunEntry>,
    pub csv_path: PathBuf,
    pub jsonl_path: PathBuf,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.status != "ok").count()
    }
}

fn load_data(file: &RunFile) -> Result<(FeatureDataset, FeatureDataset)> {
    let d = &file.data;
    match (&d.train, &d.test, &d.generate) {
        (Some(train), Some(test), None) => Ok((load_dataset_as(train, Split::Train)?, load_dataset_as(test, Split::Test)?)),
        (None, None, Some(spec)) => Ok(generate_blobs(spec)?),
        _ => bail!("data: give either both `train` and `test` paths or a `generate` table"),
    }
}

pub fn data_fingerprint(train: &FeatureDataset, test: &FeatureDataset) -> String {
    let mut h = Sha256::new();
    for ds in [train, test] {
        h.update((ds.num_classes() as u64).to_le_bytes());
        h.update((ds.len() as u64).to_le_bytes());
        h.update((ds.dim() as u64).to_le_bytes());
        for v in ds.features().iter() {
            h.update(v.to_le_bytes());
        }
        for l in ds.labels() {
            h.update(l.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every (mode, method, seed) combination and writes the results CSV
/// and JSONL sidecar under `output.dir`. Output order never depends on
/// `jobs`. Failed runs are recorded in the sidecar and contribute no rows.
pub fn run_sweep(file: &RunFile) -> Result<SweepOutcome> {
    let specs = file.expand()?;
    let (train, test) = load_data(file)?;
    let pretrained: Option<SiamNet> = file.experiment.pretrained.as_ref().map(load_net).transpose()?;
    let data_fp = data_fingerprint(&train, &test);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(file.output.jobs).build()?;
    let outcomes: Vec<_> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| run_experiment(&spec.config, &train, &test, pretrained.as_ref()))
            .collect()
    });

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (spec, outcome) in specs.iter().zip(outcomes) {
        let cfg = &spec.config;
        let mut entry = RunEntry {
            method: cfg.method,
            mode: cfg.mode,
            seed: cfg.seed,
            config_fingerprint: cfg.fingerprint(),
            data_fingerprint: data_fp.clone(),
            status: "ok".into(),
            error: None,
            siam_final_loss: None,
        };
        match outcome {
            Ok(result) => {
                entry.siam_final_loss = result.audit.siam_final_loss;
                rows.extend(rows_of(&result, cfg.seed));
            }
            Err(e) => {
                entry.status = "failed".into();
                entry.error = Some(e.to_string());
            }
        }
        entries.push(entry);
    }

    let dir = &file.output.dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join("results.csv");
    let jsonl_path = dir.join("runs.jsonl");
    write_rows(&csv_path, &rows, file.output.append)?;
    write_entries(&jsonl_path, &entries, file.output.append)?;
    Ok(SweepOutcome { rows, entries, csv_path, jsonl_path })
}

/// Crossover of one method's seed-averaged curve against random.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverLine {
    pub mode: Mode,
    pub method: Method,
    pub seeds: usize,
    pub budget: Option<usize>,
}

pub fn crossovers(rows: &[ResultRow]) -> Result<Vec<CrossoverLine>> {
    let curves = mean_curves(rows)?;
    let mut out = Vec::new();
    for ((mode, method), curve) in &curves {
        if *method == Method::Random {
            continue;
        }
        let random = curves
            .get(&(*mode, Method::Random))
            .with_context(|| format!("no random baseline for mode {mode}"))?;
        let budget = find_crossover(curve, random).with_context(|| format!("{mode} {method} vs random"))?;
        out.push(CrossoverLine { mode: *mode, method: *method, seeds: curve.seeds, budget });
    }
    Ok(out)
}

/// Prints crossovers from `results`, fits the threshold line through all
/// points and, when `query` is given, a budget recommendation.
pub fn advise(
    results: Option<&Path>,
    num_classes: Option<usize>,
    mut points: Vec<ThresholdPoint>,
    query: Option<usize>,
    out: &mut dyn std::io::Write,
) -> Result<()> {
    if let Some(path) = results {
        let rows = read_rows(path)?;
        for line in crossovers(&rows)? {
            match line.budget {
                Some(b) => {
                    write!(out, "crossover {} {}: {b} labels ({} seeds)", line.mode, line.method, line.seeds)?;
                    if let Some(c) = num_classes {
                        let p = ThresholdPoint::from_crossover(b, c)?;
                        write!(out, ", {:.4} per class", p.samples_per_class)?;
                        points.push(p);
                    }
                    writeln!(out)?;
                }
                None => writeln!(out, "crossover {} {}: none ({} seeds)", line.mode, line.method, line.seeds)?,
            }
        }
    }
    if points.len() < 2 {
        if query.is_some() {
            bail!("need at least two threshold points to fit a line (got {})", points.len());
        }
        return Ok(());
    }
    let fit = fit_threshold_line(&points)?;
    writeln!(
        out,
        "fit: slope={:.6} intercept={:.6} r={:.6} classes={}..{}",
        fit.slope, fit.intercept, fit.pearson_r, fit.class_range.0, fit.class_range.1
    )?;
    if let Some(c) = query {
        let a = advise_budget(&fit, c)?;
        write!(out, "advice: classes={c} samples_per_class={:.4} total_budget={}", a.samples_per_class, a.total_budget)?;
        if a.extrapolated {
            write!(out, " (extrapolated)")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parses `C:spc`.
pub fn parse_point(s: &str) -> Result<ThresholdPoint> {
    let (c, spc) = s.split_once(':').with_context(|| format!("point `{s}` is not classes:samples_per_class"))?;
    let num_classes: usize = c.trim().parse().with_context(|| format!("point `{s}`: bad class count"))?;
    let samples_per_class: f64 = spc.trim().parse().with_context(|| format!("point `{s}`: bad samples per class"))?;
    if num_classes == 0 || !(samples_per_class > 0.0 && samples_per_class.is_finite()) {
        bail!("point `{s}`: class count and samples per class must be positive");
    }
    Ok(ThresholdPoint { num_classes, samples_per_class })
}
