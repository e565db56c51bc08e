//! TOML run configuration. Every key can also be set on the command line
//! with `--set section.key=value`; command-line values win.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use poolforge::{
    AugmentConfig, BlobSpec, BudgetSchedule, ExperimentConfig, Method, Mode, ProbeTrainConfig, SiamNetConfig,
    SiamTrainConfig, SvmConfig,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunFile {
    pub data: DataSection,
    pub experiment: ExperimentSection,
    pub probe: ProbeTrainConfig,
    pub scratch: ProbeTrainConfig,
    pub network: SiamNetConfig,
    pub simsiam: SiamTrainConfig,
    pub augment: AugmentConfig,
    pub svm: SvmConfig,
    pub output: OutputSection,
}

/// Either a pair of dataset files or a blob generator spec.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub generate: Option<BlobSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub modes: Vec<Mode>,
    /// Kept as strings so an unknown name reports "unsupported method".
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub initial: usize,
    /// Defaults to `initial`.
    pub per_cycle: Option<usize>,
    pub cycles: usize,
    pub balanced_split: bool,
    pub standardize_embeddings: bool,
    pub record_wall_time: bool,
    /// Pre-trained network reused by every self-training run.
    pub pretrained: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            modes: vec![Mode::SelfTrain],
            methods: vec!["random".into()],
            seeds: vec![0],
            initial: 16,
            per_cycle: None,
            cycles: 10,
            balanced_split: true,
            standardize_embeddings: true,
            record_wall_time: false,
            pretrained: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub jobs: usize,
    /// Append rows to an existing results file instead of replacing it.
    pub append: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("results"), jobs: 1, append: false }
    }
}

/// Reads `path` (if any), applies `key=value` overrides in order and
/// deserializes the result.
pub fn load_run_file(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<RunFile> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<toml::Table>().with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for (key, value) in overrides {
        set_path(&mut table, key, value.clone())?;
    }
    let file: RunFile = toml::Value::Table(table).try_into().context("invalid run configuration")?;
    Ok(file)
}

/// Parses `section.key=value`. The value is read as a TOML literal and falls
/// back to a plain string.
pub fn parse_override(arg: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = arg.split_once('=').with_context(|| format!("override `{arg}` is not key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override `{arg}` has an empty key");
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for part in parts {
        let entry = cur.entry(part).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override `{key}`: `{part}` is not a section"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// One (mode, method, seed) run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub config: ExperimentConfig,
}

impl RunFile {
    pub fn methods(&self) -> Result<Vec<Method>> {
        if self.experiment.methods.is_empty() {
            bail!("experiment.methods is empty");
        }
        self.experiment.methods.iter().map(|m| Method::from_str(m).map_err(Into::into)).collect()
    }

    pub fn schedule(&self) -> BudgetSchedule {
        let e = &self.experiment;
        BudgetSchedule { initial: e.initial, per_cycle: e.per_cycle.unwrap_or(e.initial), cycles: e.cycles }
    }

    /// Expands the sweep in mode, method, seed order.
    pub fn expand(&self) -> Result<Vec<RunSpec>> {
        let methods = self.methods()?;
        let e = &self.experiment;
        if e.modes.is_empty() || e.seeds.is_empty() {
            bail!("experiment.modes and experiment.seeds must be non-empty");
        }
        if self.output.jobs == 0 {
            bail!("output.jobs must be >= 1");
        }
        let mut specs = Vec::new();
        for &mode in &e.modes {
            for &method in &methods {
                for &seed in &e.seeds {
                    let mut config = ExperimentConfig::new(self.schedule(), mode, method, seed);
                    config.balanced_split = e.balanced_split;
                    config.probe = self.probe.clone();
                    config.scratch = self.scratch.clone();
                    config.net = self.network.clone();
                    config.siam = self.simsiam.clone();
                    config.augment = self.augment.clone();
                    config.svm = (method == Method::SvmMinMargin).then(|| self.svm.clone());
                    config.standardize_embeddings = e.standardize_embeddings;
                    config.record_wall_time = e.record_wall_time;
                    specs.push(RunSpec { config });
                }
            }
        }
        Ok(specs)
    }
}
