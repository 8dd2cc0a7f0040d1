use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cats::baselines::{apply_noise, Mechanism};
use cats::mobility::io::{read_csv, write_csv, write_matrices};
use cats::mobility::Dataset;
use cats::pipeline::checkins::reconstruct_from_checkins;
use cats::pipeline::world::generate_world;
use cats::pipeline::{Pipeline, PipelineConfig, Stage};
use cats::provenance::provenance_line;
use cats::{Error, Result};

#[derive(Parser)]
#[command(name = "cats", version, about = "Synthetic trajectories from K-anonymized mobility matrices")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline directory.
    #[arg(long, global = true, default_value = "cats-out")]
    out_dir: PathBuf,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest raw trajectories and build per-user mobility matrices.
    Aggregate,
    /// Cluster users and average their matrices.
    Kama,
    /// Train the generator and critic, or load a checkpoint.
    Train,
    /// Produce every configured dataset.
    Generate,
    /// Collective and individual measures against raw.
    Evaluate,
    /// Trajectory-user linking and home-location clustering.
    Attack,
    /// Next-location recommendation AUC.
    Utility,
    /// Every stage in order.
    Pipeline,
    /// Geomask one CSV with a single mechanism.
    Mask {
        #[arg(long)]
        mechanism: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write the synthetic world as a trajectory CSV.
    World {
        #[arg(long)]
        output: PathBuf,
    },
    /// Disaggregate check-ins into per-user matrices.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Defaults to `reconstruct.users` from the configuration.
        #[arg(long)]
        users: Option<usize>,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::ConfigInvalid(format!("expected KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_stages(cfg: PipelineConfig, out_dir: &Path, last: Stage) -> Result<()> {
    let p = Pipeline::open(cfg, out_dir)?;
    for stage in Stage::ALL.into_iter().filter(|&s| s <= last) {
        let ran = p.run_stage(stage)?;
        eprintln!("{:<10} {}", stage.name(), if ran { "done" } else { "up to date" });
    }
    eprintln!("config {} -> {}", p.config_hash(), out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = &cli.common.out_dir;
    let stage = match &cli.command {
        Command::Aggregate => Some(Stage::Aggregate),
        Command::Kama => Some(Stage::Kama),
        Command::Train => Some(Stage::Train),
        Command::Generate => Some(Stage::Generate),
        Command::Evaluate => Some(Stage::Evaluate),
        Command::Attack => Some(Stage::Attack),
        Command::Utility | Command::Pipeline => Some(Stage::Utility),
        _ => None,
    };
    if let Some(last) = stage {
        return run_stages(cfg, out, last);
    }
    let prov = |stage: &str| vec![provenance_line(&cfg.hash(), cfg.seed, stage)];
    match cli.command {
        Command::Mask { mechanism, input, output } => {
            let mech: Mechanism = mechanism.parse()?;
            if mech == Mechanism::Tka {
                return Err(Error::ConfigInvalid(
                    "tka needs anonymized matrices; use the generate stage".into(),
                ));
            }
            let raw = Dataset::from_records(&read_csv(&input, cfg.grid.hours_per_day)?);
            let masked = apply_noise(&raw, &cfg.noise_for(mech))?;
            write_csv(&output, &masked, &prov("mask"), false)
        }
        Command::World { output } => {
            let (ds, _) = generate_world(&cfg.world, &cfg.grid, cfg.seed)?;
            write_csv(&output, &ds, &prov("world"), false)
        }
        Command::Reconstruct { input, output, users } => {
            let records = read_csv(&input, cfg.grid.hours_per_day)?;
            let n = users.unwrap_or(cfg.reconstruct_users);
            let rec = reconstruct_from_checkins(&records, &cfg.grid, n, cfg.decay_cells, cfg.seed)?;
            write_matrices(&output, &rec.matrices, &cfg.grid, &prov("reconstruct"))
        }
        _ => unreachable!("stage commands handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
