use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wodo::harness::{self, Experiment, ExperimentConfig};
use wodo::mds::mds_embed;
use wodo::qmcm::simulate_distance_distribution;
use wodo::weights::{load_snapshot, pairwise_distances_of};
use wodo::{Error, Result, WeightEnsemble};

#[derive(Parser)]
#[command(
    name = "wodo",
    version,
    about = "Weight-space distance experiments on small networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file overriding any subset of the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `ensemble_size`.
    #[arg(long)]
    ensemble_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Nearest-distance distribution of random unit vectors against a random subset.
    SimDist {
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Reference subset share; repeat for a sweep.
        #[arg(long = "fraction")]
        fractions: Vec<f64>,
        #[arg(long)]
        bins: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Classical MDS of snapshot files and ensemble directories.
    Mds {
        /// Snapshot files or directories holding an `ensemble.json`.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Output CSV; defaults to `<out-dir>/embedding.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Embeds initial and final weights of an ensemble trained from distinct seeds.
    InitEnsemble(Common),
    /// Trains half the ensemble from one init and half from another.
    TwoScratch(Common),
    /// Sweeps the share of retained classes.
    LabelFraction(Common),
    /// Sweeps the share of shuffled labels.
    LabelCorruption(Common),
    /// Init-to-final distance statistics of one ensemble.
    Stats(Common),
}

fn load_config(experiment: Experiment, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(experiment, path)?,
        None => ExperimentConfig::defaults_for(experiment),
    };
    if let Some(dir) = &common.out_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(size) = common.ensemble_size {
        cfg.ensemble_size = size;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_mds(inputs: &[PathBuf], m: usize, out: &Path) -> Result<()> {
    let mut points = Vec::new();
    let mut stages = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let ensemble = WeightEnsemble::load_dir(input)?;
            stages.extend(std::iter::repeat_n(ensemble.stage().as_str(), ensemble.len()));
            points.extend(ensemble.members().iter().cloned());
        } else {
            points.push(load_snapshot(input)?);
            stages.push("snapshot");
        }
    }
    let embedding = mds_embed(&pairwise_distances_of(&points)?, m)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    let file = std::fs::File::create(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    embedding.write_csv(std::io::BufWriter::new(file), &stages)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SimDist {
            size,
            dim,
            fractions,
            bins,
            common,
        } => {
            let mut cfg = load_config(Experiment::DistanceSim, &common)?;
            if let Some(size) = size {
                cfg.sim.population_size = size;
            }
            if let Some(dim) = dim {
                cfg.sim.dim = dim;
            }
            if !fractions.is_empty() {
                cfg.sim.fractions = fractions;
            }
            if let Some(bins) = bins {
                cfg.sim.bins = bins;
            }
            let sims = harness::sim_configs(&cfg)
                .iter()
                .map(|sc| Ok((sc.subset_fraction, simulate_distance_distribution(sc)?)))
                .collect::<Result<Vec<_>>>()?;
            harness::write_distance_sims(&cfg, &sims, &cfg.output_dir)
        }
        Command::Mds {
            inputs,
            m,
            out,
            out_dir,
        } => {
            let out = out.unwrap_or_else(|| out_dir.join("embedding.csv"));
            run_mds(&inputs, m, &out)
        }
        Command::InitEnsemble(common) => {
            let cfg = load_config(Experiment::InitEnsemble, &common)?;
            let out = harness::run_init_ensemble(&cfg)?;
            harness::write_init_ensemble(&cfg, &out, &cfg.output_dir)
        }
        Command::TwoScratch(common) => {
            let cfg = load_config(Experiment::TwoScratch, &common)?;
            let out = harness::run_two_scratch(&cfg)?;
            harness::write_two_scratch(&cfg, &out, &cfg.output_dir)
        }
        Command::LabelFraction(common) => {
            let cfg = load_config(Experiment::LabelFraction, &common)?;
            let arms = harness::run_label_fraction(&cfg)?;
            harness::write_sweep(&cfg, &arms, "fraction", &cfg.output_dir)
        }
        Command::LabelCorruption(common) => {
            let cfg = load_config(Experiment::LabelCorruption, &common)?;
            let arms = harness::run_label_corruption(&cfg)?;
            harness::write_sweep(&cfg, &arms, "rate", &cfg.output_dir)
        }
        Command::Stats(common) => {
            let cfg = load_config(Experiment::Stats, &common)?;
            let out = harness::run_stats(&cfg)?;
            harness::write_stats(&cfg, &out, &cfg.output_dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::PreconditionFailed(_)) => {
            eprintln!("precondition failed: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
