//! `xdomain`: dataset generation, training, evaluation, sweeps and latent
//! analysis for the two-embodiment pushing benchmark.
//!
//! Every successful command ends with one machine-readable summary line on
//! stdout: a JSON object whose keys appear in a fixed order.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::Value;

use xdomain_core::analysis::{dump_latents, latent_alignment_report, pca2, pca_svg, report_csv};
use xdomain_core::pushmini::{
    evaluate, generate_dataset, load_dataset_dir, reference_seeds, DatasetFiles, DatasetSpec, EvalResult, EvalSetting,
    ExpertPolicy, ModelPolicy, Policy,
};
use xdomain_core::trainer::{per_seed_csv, run_sweep, train, Checkpoint, Method, TrainConfig, CHECKPOINT_FILE};

/// Environment variable naming the default output root.
const OUT_ENV: &str = "XDOMAIN_OUT";

#[derive(Parser)]
#[command(
    name = "xdomain",
    version,
    about = "Cross-embodiment co-training with behaviour-shaped optimal transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations and normalisation statistics.
    GenData {
        /// Dataset spec (TOML), or `paper` for the reference mixture.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one method from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop evaluation of a checkpoint (or `expert`).
    Eval {
        #[arg(long)]
        checkpoint: String,
        /// `variant` or `domain:variant`, e.g. `target:purple_mirrored`.
        #[arg(long)]
        setting: String,
        /// `paper` or a comma-separated seed list.
        #[arg(long, default_value = "paper")]
        seeds: String,
        /// Per-seed reward CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Latent alignment report and PCA scatter for a checkpoint.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 256)]
        max_per_domain: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and evaluate several methods under one base config.
    Sweep {
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "paper")]
        seeds: String,
    },
}

/// Ordered key/value summary printed as a single JSON object.
struct Summary(Vec<(&'static str, Value)>);

impl Summary {
    fn new(command: &str) -> Self {
        Summary(vec![("command", Value::from(command))])
    }

    fn add(mut self, key: &'static str, value: impl Into<Value>) -> Self {
        self.0.push((key, value.into()));
        self
    }

    fn print(&self) {
        let body: Vec<String> = self.0.iter().map(|(k, v)| format!("\"{k}\":{v}")).collect();
        println!("{{{}}}", body.join(","));
    }
}

fn out_dir(flag: Option<PathBuf>, fallback: &str) -> PathBuf {
    flag.unwrap_or_else(|| {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
            .join(fallback)
    })
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if text == "paper" {
        return Ok(reference_seeds());
    }
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("empty seed list");
    }
    Ok(seeds)
}

/// Reads a training config; a relative `data_dir` is resolved against the
/// config file's directory.
fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = TrainConfig::from_toml(&text)?;
    let data = Path::new(&config.data_dir);
    if data.is_relative() {
        let base = path.parent().unwrap_or(Path::new("."));
        config.data_dir = base.join(data).to_string_lossy().into_owned();
    }
    Ok(config)
}

fn result_fields(summary: Summary, r: &EvalResult) -> Summary {
    summary
        .add("setting", r.setting.to_string())
        .add("seeds", r.rollouts.len())
        .add("mean_reward", r.mean_reward)
        .add("success_rate", r.success_rate)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { spec, out, seed } => {
            let spec = if spec == "paper" {
                DatasetSpec::reference_mixture()
            } else {
                let text = fs::read_to_string(&spec).with_context(|| format!("reading {spec}"))?;
                DatasetSpec::from_toml(&text)?
            };
            let dir = out_dir(out, "data");
            let episodes = generate_dataset(&spec, seed)?;
            let files = DatasetFiles::write(&dir, &episodes)?;
            let cells: serde_json::Map<String, Value> = spec
                .cells()?
                .into_iter()
                .filter(|c| c.2 > 0)
                .map(|(d, v, n)| (format!("{d}/{v}"), Value::from(n)))
                .collect();
            Summary::new("gen-data")
                .add("out", dir.display().to_string())
                .add("seed", seed)
                .add("episodes", episodes.len())
                .add("files", files.len())
                .add("cells", Value::Object(cells))
                .print();
        }
        Command::Train { config, out } => {
            let config = load_config(&config)?;
            let episodes = load_dataset_dir(Path::new(&config.data_dir))?;
            let dir = out_dir(out, config.method.as_str());
            let outcome = train(&config, &episodes, Some(&dir))?;
            let last = outcome.log.last();
            Summary::new("train")
                .add("method", config.method.as_str())
                .add("steps", outcome.checkpoint.step)
                .add("final_total", last.map_or(Value::Null, |r| r.loss.total.into()))
                .add("final_bc_R", last.map_or(Value::Null, |r| r.loss.bc_target.into()))
                .add("checkpoint", dir.join(CHECKPOINT_FILE).display().to_string())
                .print();
        }
        Command::Eval {
            checkpoint,
            setting,
            seeds,
            out,
        } => {
            let setting: EvalSetting = setting.parse()?;
            let seeds = parse_seeds(&seeds)?;
            let (result, label) = if checkpoint == "expert" {
                (evaluate(&mut ExpertPolicy, setting, &seeds)?, "expert".to_string())
            } else {
                let ckpt = Checkpoint::load(Path::new(&checkpoint))?;
                let model = ckpt.model()?;
                let mut policy = ModelPolicy {
                    model: &model,
                    norm: &ckpt.norm,
                };
                (
                    evaluate(&mut policy as &mut dyn Policy, setting, &seeds)?,
                    checkpoint.clone(),
                )
            };
            let csv = match out {
                Some(p) => p,
                None => out_dir(None, &format!("eval_{}_{}.csv", setting.domain, setting.variant)),
            };
            if let Some(parent) = csv.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&csv, per_seed_csv(&result)).with_context(|| format!("writing {}", csv.display()))?;
            result_fields(Summary::new("eval").add("checkpoint", label), &result)
                .add("csv", csv.display().to_string())
                .print();
        }
        Command::Analyze {
            checkpoint,
            data,
            out,
            k,
            max_per_domain,
            seed,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let model = ckpt.model()?;
            let episodes = load_dataset_dir(&data)?;
            let dump = dump_latents(&model, &ckpt.norm, &episodes, max_per_domain, seed)?;
            let report = latent_alignment_report(&dump, k, seed)?;
            let points = xdomain_core::numkit::DenseMatrix::from_rows(
                &dump.samples.iter().map(|s| s.latent.clone()).collect::<Vec<_>>(),
            )?;
            let pca = pca2(&points)?;
            let dir = out_dir(out, "analysis");
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("alignment.csv"), report_csv(&report, &dump))?;
            fs::write(dir.join("pca.svg"), pca_svg(&pca, &dump))?;
            Summary::new("analyze")
                .add("samples", dump.len())
                .add("w2", report.w2)
                .add("knn1_same_variant_share", report.same_variant_share)
                .add("pca_degenerate", pca.degenerate)
                .add("out", dir.display().to_string())
                .print();
        }
        Command::Sweep {
            methods,
            config,
            out,
            seeds,
        } => {
            let methods = methods
                .iter()
                .map(|m| m.parse::<Method>())
                .collect::<Result<Vec<_>, _>>()?;
            if methods.is_empty() {
                bail!("no methods given");
            }
            let config = load_config(&config)?;
            let episodes = load_dataset_dir(Path::new(&config.data_dir))?;
            let seeds = parse_seeds(&seeds)?;
            let dir = out_dir(out, "sweep");
            let table = run_sweep(&config, &methods, &episodes, &seeds, Some(&dir))?;
            print!("{}", table.to_csv());
            Summary::new("sweep")
                .add("methods", methods.iter().map(|m| m.as_str()).collect::<Vec<_>>())
                .add("rows", table.rows.len())
                .add("results", dir.join("results.csv").display().to_string())
                .print();
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
