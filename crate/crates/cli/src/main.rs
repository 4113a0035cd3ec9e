use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use porogan::config::{self, validate_config};
use porogan::dataset::{self, Rasterizer};
use porogan::evaluation::{self, Surrogate};
use porogan::pipeline::{self, OUTPUT_ENV};
use porogan::{fields, fom};
use porogan::{Error, ExperimentConfig, FieldKind, GridSpec, PermeabilityField, Result, Split, Stage, TimeGrid, Variable, Variant};

/// Conditional GAN surrogate for transient linear poroelasticity.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
#[derive(Parser)]
#[command(name = "porogan", version)]
struct Cli {
    /// More log output (-v debug, -vv trace); RUST_LOG overrides.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Permeability ensembles.
    Fields {
        #[command(subcommand)]
        command: FieldsCommand,
    },
    /// Full-order Biot solves.
    Fom {
        #[command(subcommand)]
        command: FomCommand,
    },
    /// Training, validation and test containers.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train one generator against its critic.
    Train(TrainArgs),
    /// Relative RMSE of a checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// Predict a field's response at arbitrary times.
    Predict(PredictArgs),
    /// Collect metric and timing tables from a pipeline run.
    Report(ReportArgs),
    /// Run one pipeline stage, or all of them, from an experiment config.
    Run(RunArgs),
    /// Print the diagnostics of an experiment config.
    Validate {
        /// Experiment config file (flat key = value text).
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum FieldsCommand {
    /// Generate an ensemble of permeability fields.
    Generate {
        /// zinn_harvey or bimodal.
        #[arg(long)]
        kind: FieldKind,
        /// Number of fields.
        #[arg(long)]
        count: usize,
        /// Global seed; field i uses seed * 1000000 + i.
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Cells per side.
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// Side length of the square domain [m].
        #[arg(long, default_value_t = 1.0)]
        length: f64,
    },
}

#[derive(Subcommand)]
enum FomCommand {
    /// Solve every field of an ensemble.
    Run {
        /// Ensemble directory written by `fields generate`.
        #[arg(long)]
        fields: PathBuf,
        /// Parameter file with FomParameters and BoundaryConditions keys.
        #[arg(long)]
        params: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Solve on an N x N grid, resampling log10 k when it differs from the ensemble grid.
        #[arg(long)]
        grid: Option<usize>,
        /// Number of output snapshots.
        #[arg(long, default_value_t = 10)]
        nt: usize,
        /// Final time [s].
        #[arg(long, default_value_t = 250.0)]
        tau: f64,
        /// Implicit Euler steps per output interval.
        #[arg(long, default_value_t = 10)]
        substeps: usize,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Split FOM outputs, rasterize to 128 x 128 and normalize.
    Build {
        /// FOM output directory.
        #[arg(long)]
        fom: PathBuf,
        /// Training, validation and test sizes.
        #[arg(long, value_name = "TRAIN,VAL,TEST", value_parser = parse_splits)]
        splits: [usize; 3],
        /// Seed of the split permutation.
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `dataset build`.
    #[arg(long)]
    dataset: PathBuf,
    /// pressure or displacement.
    #[arg(long)]
    variable: Variable,
    /// nli or ili.
    #[arg(long)]
    variant: Variant,
    /// Training config file with TrainConfig keys; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoints and history.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset directory written by `dataset build`.
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint directory or its checkpoint.json.
    #[arg(long)]
    checkpoint: PathBuf,
    /// validation or test.
    #[arg(long, default_value = "test")]
    split: Split,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint directory or its checkpoint.json.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Ensemble directory (or its manifest.json) holding the field.
    #[arg(long)]
    field: PathBuf,
    /// Field id within the ensemble; the first field when omitted.
    #[arg(long)]
    id: Option<String>,
    /// Query time in (0, tau] seconds; repeat for several.
    #[arg(long = "time", required = true)]
    times: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Output root of a pipeline run.
    #[arg(long)]
    runs: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// fields, fom, dataset, train, evaluate, report or all.
    target: String,
    /// Experiment config file (flat key = value text).
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides `output_root` of the config.
    #[arg(long, env = OUTPUT_ENV)]
    out: Option<PathBuf>,
    /// Run stages even when their outputs are up to date or were produced under another config.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp_secs().init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fields { command: FieldsCommand::Generate { kind, count, seed, out, grid, length } } => {
            let cfg = ExperimentConfig { seed, field_kind: kind, field_count: count, fom_grid: grid, domain_length: length, ..ExperimentConfig::default() };
            let ensemble = fields::generate_ensemble(&cfg.fom_grid_spec(), &cfg.covariance_spec(), kind, count, cfg.field_seed(0), &cfg.field_params)?;
            let m = fields::write_ensemble(&out, &ensemble)?;
            println!("{} {kind} fields on a {grid}x{grid} grid written to {}", m.field_ids.len(), out.display());
        }
        Command::Fom { command: FomCommand::Run { fields: dir, params, out, grid, nt, tau, substeps } } => {
            let (p, bc) = config::read_fom_params(&params)?;
            let ensemble = fields::read_ensemble(&dir)?;
            let ensemble = match grid {
                Some(n) => resample(ensemble, n)?,
                None => ensemble,
            };
            let opts = fom::SolverOptions { substeps, ..fom::SolverOptions::default() };
            let m = fom::run_ensemble(&ensemble, &p, &bc, &TimeGrid::uniform(nt, tau), &opts, &out)?;
            println!("{} trajectories with {nt} snapshots written to {}", m.field_ids.len(), out.display());
        }
        Command::Dataset { command: DatasetCommand::Build { fom: dir, splits, seed, out } } => {
            let fm = fom::read_manifest(&dir)?;
            let grid = GridSpec { nx: porogan::RESOLUTION, ny: porogan::RESOLUTION, ..fm.grid };
            let s = dataset::build_dataset(&dir, splits, seed, grid, &out)?;
            let clamped: u64 = s.clamps.iter().map(|c| c.total()).sum();
            if clamped > 0 {
                log::warn!("{clamped} values fell outside the training ranges and were clamped");
            }
            println!("dataset with splits {splits:?} written to {}", out.display());
        }
        Command::Train(a) => {
            let tc = match &a.config {
                Some(path) => config::read_train_config(path)?,
                None => porogan::TrainConfig::default(),
            };
            let train = dataset::read_container(&a.dataset.join(Split::Training.name()))?;
            let val = dataset::read_container(&a.dataset.join(Split::Validation.name()))?;
            let s = pipeline::train_model(&train, &val, a.variable, a.variant, &tc, &a.out)?;
            println!("best epoch {} with validation mean relative RMSE {:.4}; checkpoint in {}", s.best_epoch, s.best_mean, a.out.join("best").display());
        }
        Command::Evaluate(a) => {
            if a.split == Split::Training {
                return Err(Error::config("evaluate takes --split validation or --split test"));
            }
            for m in pipeline::evaluate_model(&a.checkpoint, &a.dataset, &[a.split], &a.out)? {
                let b = &m.summary;
                println!("{} {}: n {} mean {:.4} q25 {:.4} q50 {:.4} q75 {:.4} pooled {:.4}", m.variable, m.split, b.n, b.mean, b.q25, b.q50, b.q75, m.pooled);
            }
        }
        Command::Predict(a) => {
            let model = Surrogate::load(&a.checkpoint)?;
            let field = select_field(&a.field, a.id.as_deref())?;
            let p = evaluation::predict_at_time(&model, &field, &a.times)?;
            evaluation::write_prediction(&a.out, &p)?;
            for (t, l) in p.times.iter().zip(&p.latency) {
                println!("t = {t} s: {:.1} ms", l * 1e3);
            }
        }
        Command::Report(a) => {
            let r = pipeline::write_report(&a.runs, &a.out)?;
            print!("{}", pipeline::metrics_csv(&r.metrics));
        }
        Command::Run(a) => {
            let cfg = ExperimentConfig::read(&a.config)?;
            let root = a.out.unwrap_or_else(|| cfg.output_root.clone());
            let manifests = if a.target == "all" {
                pipeline::run_all(&cfg, &root, a.force)?
            } else {
                vec![pipeline::run_stage(a.target.parse::<Stage>()?, &cfg, &root, a.force)?]
            };
            for m in manifests {
                println!("{}: {} outputs, {:.1} s", m.stage, m.outputs.len(), m.wall_time);
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::read(&config)?;
            let diagnostics = validate_config(&cfg);
            if !diagnostics.is_empty() {
                return Err(Error::config(diagnostics.join("; ")));
            }
            println!("{}: no diagnostics", config.display());
        }
    }
    Ok(())
}

fn parse_splits(s: &str) -> std::result::Result<[usize; 3], String> {
    let sizes = s.split(',').map(|v| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"))).collect::<std::result::Result<Vec<_>, _>>()?;
    sizes.try_into().map_err(|v: Vec<usize>| format!("expected three comma-separated sizes, got {}", v.len()))
}

fn resample(ensemble: Vec<PermeabilityField>, n: usize) -> Result<Vec<PermeabilityField>> {
    ensemble
        .into_iter()
        .map(|f| {
            let dst = GridSpec { nx: n, ny: n, ..f.grid };
            let r = Rasterizer::new(f.grid, dst)?;
            if r.is_identity() {
                return Ok(f);
            }
            let log_k: Vec<f64> = f.k.iter().map(|k| k.log10()).collect();
            let k = r.apply(&log_k).iter().map(|v| 10f64.powf(*v)).collect();
            Ok(PermeabilityField { grid: dst, k, ..f })
        })
        .collect()
}

fn select_field(path: &Path, id: Option<&str>) -> Result<PermeabilityField> {
    let dir = if path.is_dir() { path } else { path.parent().unwrap_or(Path::new(".")) };
    let ensemble = fields::read_ensemble(dir)?;
    match id {
        None => ensemble.into_iter().next().ok_or_else(|| Error::data("ensemble is empty")),
        Some(id) => ensemble.into_iter().find(|f| f.id == id).ok_or_else(|| Error::data(format!("field {id} is not in {}", dir.display()))),
    }
}
