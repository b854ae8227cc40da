//! Command-line front end: descriptor extraction, training, evaluation,
//! repeated experiments, the degradation study, synthetic-point generation,
//! and distance-preservation checks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spd_rp::embed::{build_projection_model, jl_distortion_report, ProjectionOptions};
use spd_rp::matrix_text::format_matrix_text;
use spd_rp::pipeline::{
    degradation_study, load_dataset, run_experiment, train_pipeline, Dataset, DatasetManifest, EntryKind,
    ExperimentConfig, FeatureMode, ManifestEntry, PipelineError, TrainedPipeline, WishartBenchmark,
};
use spd_rp::stein::KernelParams;
use spd_rp::synthesis::{generate_synthetic, DirectionMode, SynthesisConfig};

#[derive(Parser)]
#[command(name = "spd-rp", version, about = "Random projection classification of SPD matrices")]
struct Cli {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory; standard output when omitted and the
    /// command writes a single document.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ManifestArg {
    /// Dataset manifest (JSON); relative entry paths resolve against its directory.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compute descriptors and write them as matrix files plus a precomputed manifest into --out.
    Extract(ManifestArg),
    /// Train a projection model and classifier on a whole dataset.
    Train(ManifestArg),
    /// Score a trained model (--model) on a dataset.
    Eval {
        #[command(flatten)]
        data: ManifestArg,
        #[arg(long)]
        model: PathBuf,
    },
    /// Repeated train/test experiment; prints the JSON report.
    Run(ManifestArg),
    /// Training-set degradation study over excluded-class counts.
    Degrade {
        #[command(flatten)]
        data: ManifestArg,
        /// Comma-separated exclusion counts; defaults to 0..classes-1.
        #[arg(long, value_delimiter = ',')]
        excluded: Vec<usize>,
    },
    /// Generate synthetic points inside the training ball of a dataset.
    Synth {
        #[command(flatten)]
        data: ManifestArg,
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum, default_value = "tangent-gaussian")]
        direction: DirectionArg,
    },
    /// Distance-distortion report of a projection against its expected distances.
    JlCheck {
        #[command(flatten)]
        data: ManifestArg,
        /// Use the projection of a trained model instead of building one from the dataset.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        epsilon: f64,
        /// Hyperplane counts; one record per value, built once at the largest and truncated.
        #[arg(long, value_delimiter = ',')]
        k_sweep: Vec<usize>,
    },
    /// Write a synthetic Wishart-style benchmark as matrix files plus a manifest into --out.
    Bench {
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 6)]
        dim: usize,
        #[arg(long, default_value_t = 60)]
        dof: usize,
        #[arg(long, default_value_t = 2.5)]
        separation: f64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DirectionArg {
    TrainingPoint,
    TangentGaussian,
}

enum CliError {
    Config(String),
    Data(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| config_err("this command needs --config"))?;
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_manifest(arg: &ManifestArg) -> Result<Dataset, CliError> {
    let text = read_text(&arg.manifest)?;
    let manifest = DatasetManifest::from_json(&text)?;
    let base = arg.manifest.parent().unwrap_or(Path::new("."));
    Ok(load_dataset(&manifest, base)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).map_err(|e| data_err(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    emit(out, &serde_json::to_string_pretty(value).map_err(data_err)?)
}

/// Writes `points` as numbered matrix files plus a precomputed manifest.
fn write_matrix_set(dir: &Path, points: &[spd_rp::SpdMatrix], labels: &[usize]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))?;
    let mut entries = Vec::with_capacity(points.len());
    for (i, (x, &label)) in points.iter().zip(labels).enumerate() {
        let name = format!("{i:06}.txt");
        fs::write(dir.join(&name), format_matrix_text(x.matrix())).map_err(data_err)?;
        entries.push(ManifestEntry {
            path: name.into(),
            label,
            kind: EntryKind::Matrix,
        });
    }
    let manifest = DatasetManifest {
        entries,
        feature_mode: FeatureMode::Precomputed,
        grid: None,
        downsample: 1,
        eps_rel: spd_rp::descriptors::DEFAULT_EPS_REL,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(data_err)?;
    fs::write(dir.join("manifest.json"), text + "\n").map_err(data_err)
}

fn require_out(cli: &Cli) -> Result<&Path, CliError> {
    cli.out.as_deref().ok_or_else(|| config_err("this command needs --out <directory>"))
}

#[derive(Serialize)]
struct EvalOutput {
    accuracy: String,
    correct: usize,
    total: usize,
    confusion: Vec<Vec<usize>>,
}

fn jl_check(
    cli: &Cli,
    data: &ManifestArg,
    model: Option<&Path>,
    epsilon: f64,
    k_sweep: &[usize],
) -> Result<(), CliError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(config_err(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    let ds = load_manifest(data)?;
    let projection = match model {
        Some(path) => TrainedPipeline::from_json(&read_text(path)?)?.projection,
        None => {
            let cfg = load_config(cli)?;
            let k = k_sweep
                .iter()
                .copied()
                .max()
                .unwrap_or_else(|| cfg.k[0].resolve(ds.len()));
            let opts = ProjectionOptions {
                k,
                t: cfg.t,
                kernel: KernelParams::new(cfg.sigma[0], cfg.psd_policy).map_err(config_err)?,
                exponent_mode: cfg.exponent_mode,
                seed: cfg.seed,
            };
            build_projection_model(&ds.points, &opts).map_err(data_err)?
        }
    };
    if k_sweep.is_empty() {
        let report = jl_distortion_report(&projection, &ds.points, epsilon).map_err(data_err)?;
        return emit_json(cli.out.as_deref(), &report);
    }
    let reports = k_sweep
        .iter()
        .map(|&k| {
            let m = projection.truncated(k).map_err(config_err)?;
            jl_distortion_report(&m, &ds.points, epsilon).map_err(data_err)
        })
        .collect::<Result<Vec<_>, _>>()?;
    emit_json(cli.out.as_deref(), &reports)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Extract(data) => {
            let dir = require_out(cli)?;
            let ds = load_manifest(data)?;
            write_matrix_set(dir, &ds.points, &ds.labels)
        }
        Command::Train(data) => {
            let cfg = load_config(cli)?;
            let ds = load_manifest(data)?;
            let trained = train_pipeline(&cfg, &ds)?;
            emit(out, &trained.to_json()?)
        }
        Command::Eval { data, model } => {
            let trained = TrainedPipeline::from_json(&read_text(model)?)?;
            let ds = load_manifest(data)?;
            let e = trained.evaluate(&ds)?;
            emit_json(
                out,
                &EvalOutput {
                    accuracy: spd_rp::pipeline::accuracy_string(e.accuracy),
                    correct: e.correct,
                    total: e.total,
                    confusion: e.confusion,
                },
            )
        }
        Command::Run(data) => {
            let cfg = load_config(cli)?;
            let ds = load_manifest(data)?;
            emit(out, &run_experiment(&cfg, &ds)?.to_json()?)
        }
        Command::Degrade { data, excluded } => {
            let cfg = load_config(cli)?;
            let ds = load_manifest(data)?;
            let counts: Vec<usize> = if excluded.is_empty() {
                (0..ds.n_classes).collect()
            } else {
                excluded.clone()
            };
            emit(out, &degradation_study(&cfg, &ds, &counts)?.to_json()?)
        }
        Command::Synth { data, count, direction } => {
            let ds = load_manifest(data)?;
            let cfg = SynthesisConfig {
                count: *count,
                seed: cli.seed.unwrap_or(0),
                direction_mode: match direction {
                    DirectionArg::TrainingPoint => DirectionMode::TrainingPoint,
                    DirectionArg::TangentGaussian => DirectionMode::TangentGaussian,
                },
                ..SynthesisConfig::default()
            };
            let points = generate_synthetic(&ds.points, &cfg).map_err(data_err)?;
            match out {
                Some(dir) => write_matrix_set(dir, &points, &vec![0; points.len()]),
                None => {
                    let text: Vec<String> = points.iter().map(|x| format_matrix_text(x.matrix())).collect();
                    emit(None, text.join("\n").trim_end())
                }
            }
        }
        Command::JlCheck {
            data,
            model,
            epsilon,
            k_sweep,
        } => jl_check(cli, data, model.as_deref(), *epsilon, k_sweep),
        Command::Bench {
            classes,
            per_class,
            dim,
            dof,
            separation,
        } => {
            let dir = require_out(cli)?;
            let bench = WishartBenchmark {
                classes: *classes,
                dim: *dim,
                per_class: *per_class,
                dof: *dof,
                separation: *separation,
                seed: cli.seed.unwrap_or(0),
            };
            let ds = bench.generate()?;
            write_matrix_set(dir, &ds.points, &ds.labels)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("data error: {msg}");
            ExitCode::from(3)
        }
    }
}
