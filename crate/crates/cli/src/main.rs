use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use poolforge::linear::EncoderConfig;
use poolforge::{AugmentConfig, BlobSpec, SiamNetConfig, SiamTrainConfig};
use poolforge_cli::commands;
use poolforge_cli::config::{load_run_file, parse_override};

#[derive(Parser)]
#[command(name = "poolforge", version, about = "Active learning on frozen self-supervised features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian-blob dataset as train.pfv / test.pfv.
    GenData(GenDataArgs),
    /// Pre-train a SimSiam network on a training set.
    Selftrain(SelftrainArgs),
    /// Run an active-learning sweep.
    Run(RunArgs),
    /// Crossover analysis and budget advice.
    Advise(AdviseArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 48)]
    noise_dim: usize,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    #[arg(long, env = "POOLFORGE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelftrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SiamTrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = SiamTrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = SiamTrainConfig::default().base_lr)]
    lr: f64,
    #[arg(long, default_value_t = SiamTrainConfig::default().momentum)]
    momentum: f64,
    #[arg(long, default_value_t = SiamTrainConfig::default().weight_decay)]
    weight_decay: f64,
    /// Encoder layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = EncoderConfig::default().widths)]
    widths: Vec<usize>,
    #[arg(long, default_value_t = SiamNetConfig::default().predictor_hidden)]
    predictor_hidden: usize,
    #[arg(long, default_value_t = AugmentConfig::default().noise_sigma)]
    noise_sigma: f64,
    #[arg(long, default_value_t = AugmentConfig::default().scale_lo)]
    scale_lo: f64,
    #[arg(long, default_value_t = AugmentConfig::default().scale_hi)]
    scale_hi: f64,
    #[arg(long, default_value_t = AugmentConfig::default().drop_prob)]
    drop_prob: f64,
    #[arg(long, env = "POOLFORGE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set probe.epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Single seed; used when neither `--seeds` nor the config lists any.
    #[arg(long, env = "POOLFORGE_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    initial: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    append: bool,
}

#[derive(Args)]
struct AdviseArgs {
    /// Results CSV from `run`.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Class count of the dataset behind `--results`.
    #[arg(long)]
    num_classes: Option<usize>,
    /// Extra threshold point `classes:samples_per_class`; repeatable.
    #[arg(long = "point")]
    points: Vec<String>,
    /// Class count to recommend a budget for.
    #[arg(long)]
    query: Option<usize>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData(a) => {
            let spec = BlobSpec {
                num_classes: a.classes,
                per_class: a.per_class,
                dim: a.dim,
                noise_dim: a.noise_dim,
                sigma: a.sigma,
                seed: a.seed,
            };
            let (train, test) = commands::gen_data(&spec, &a.out)?;
            println!("{}\n{}", train.display(), test.display());
        }
        Command::Selftrain(a) => {
            let net = SiamNetConfig { encoder: EncoderConfig { widths: a.widths }, predictor_hidden: a.predictor_hidden };
            let aug = AugmentConfig {
                noise_sigma: a.noise_sigma,
                scale_lo: a.scale_lo,
                scale_hi: a.scale_hi,
                drop_prob: a.drop_prob,
            };
            let siam = SiamTrainConfig {
                epochs: a.epochs,
                batch_size: a.batch_size,
                base_lr: a.lr,
                momentum: a.momentum,
                weight_decay: a.weight_decay,
                seed: a.seed,
            };
            let loss = commands::selftrain(&a.train, &a.out, &net, &aug, &siam)?;
            println!("final loss {loss:.6}");
        }
        Command::Run(a) => return run(a),
        Command::Advise(a) => {
            let points = a.points.iter().map(|p| commands::parse_point(p)).collect::<Result<Vec<_>>>()?;
            let stdout = std::io::stdout();
            commands::advise(a.results.as_deref(), a.num_classes, points, a.query, &mut stdout.lock())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let mut overrides = Vec::new();
    let quote = |s: &str| toml::Value::String(s.to_string());
    let list = |v: &[String]| toml::Value::Array(v.iter().map(|s| quote(s)).collect());
    if let Some(p) = &a.train {
        overrides.push(("data.train".into(), quote(&p.to_string_lossy())));
    }
    if let Some(p) = &a.test {
        overrides.push(("data.test".into(), quote(&p.to_string_lossy())));
    }
    if let Some(m) = &a.modes {
        overrides.push(("experiment.modes".into(), list(m)));
    }
    if let Some(m) = &a.methods {
        overrides.push(("experiment.methods".into(), list(m)));
    }
    if let Some(s) = &a.seeds {
        overrides.push(("experiment.seeds".into(), toml::Value::Array(s.iter().map(|&x| toml::Value::Integer(x as i64)).collect())));
    }
    if let Some(n) = a.initial {
        overrides.push(("experiment.initial".into(), toml::Value::Integer(n as i64)));
    }
    if let Some(n) = a.cycles {
        overrides.push(("experiment.cycles".into(), toml::Value::Integer(n as i64)));
    }
    if let Some(p) = &a.pretrained {
        overrides.push(("experiment.pretrained".into(), quote(&p.to_string_lossy())));
    }
    if let Some(p) = &a.out {
        overrides.push(("output.dir".into(), quote(&p.to_string_lossy())));
    }
    if let Some(n) = a.jobs {
        overrides.push(("output.jobs".into(), toml::Value::Integer(n as i64)));
    }
    if a.append {
        overrides.push(("output.append".into(), toml::Value::Boolean(true)));
    }
    for s in &a.set {
        overrides.push(parse_override(s)?);
    }
    let mut file = load_run_file(a.config.as_deref(), &overrides)?;
    let seeds_given = a.seeds.is_some() || a.set.iter().any(|s| s.trim_start().starts_with("experiment.seeds"));
    if let (Some(seed), false) = (a.seed, seeds_given || config_has_seeds(a.config.as_deref())?) {
        file.experiment.seeds = vec![seed];
    }

    let outcome = commands::run_sweep(&file)?;
    for e in &outcome.entries {
        match &e.error {
            None => eprintln!("ok     {} {} seed {}", e.mode, e.method, e.seed),
            Some(err) => eprintln!("failed {} {} seed {}: {err}", e.mode, e.method, e.seed),
        }
    }
    println!("{}", outcome.csv_path.display());
    Ok(if outcome.failures() > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn config_has_seeds(path: Option<&std::path::Path>) -> Result<bool> {
    let Some(path) = path else { return Ok(false) };
    let table: toml::Table = std::fs::read_to_string(path)?.parse()?;
    Ok(table.get("experiment").and_then(|e| e.get("seeds")).is_some())
}
