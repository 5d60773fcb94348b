//! Seeded experiment runner: one subcommand per pipeline stage.

mod config;
mod output;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use landscape_recon::Error;

use config::ExperimentConfig;
use output::Output;

#[derive(Parser, Debug)]
#[command(name = "recon", version, about = "Reconstruct last-passage geometry from two geodesic trees")]
struct Cli {
    #[command(subcommand)]
    stage: Stage,
    /// JSON experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "RECON_DEFAULT_THREADS")]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    /// Sample the weight field on the window.
    SampleField,
    /// Build geodesic trees and Busemann fields for every direction.
    BuildTrees,
    /// Differential distances and ancestry on random pairs.
    SweepDistances,
    /// Coalescence classes from the trees against plateaus of Δ.
    ReconPartition,
    /// Intermediate-direction tree from two trees and Δ.
    ReconTree,
    /// Differential distance from trees and Δ over nested windows.
    ReconDistance,
    /// Shock measure from passage times and from differential distances.
    ShockMeasure,
    /// Running-maximum increments from the zero set of one path.
    GaugeStudy,
    /// Stationary-horizon marginals, Δ increment law and coalescence.
    HorizonStudy,
    /// Competition-interface escape across slopes.
    InterfaceStudy,
    /// Every reconstruction stage, scored against the truth.
    EndToEnd,
    /// Re-score the report.json of an earlier end-to-end run.
    Report,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::SampleField => "sample-field",
            Stage::BuildTrees => "build-trees",
            Stage::SweepDistances => "sweep-distances",
            Stage::ReconPartition => "recon-partition",
            Stage::ReconTree => "recon-tree",
            Stage::ReconDistance => "recon-distance",
            Stage::ShockMeasure => "shock-measure",
            Stage::GaugeStudy => "gauge-study",
            Stage::HorizonStudy => "horizon-study",
            Stage::InterfaceStudy => "interface-study",
            Stage::EndToEnd => "end-to-end",
            Stage::Report => "report",
        }
    }
}

const USAGE: u8 = 2;
const FAILED: u8 = 1;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(USAGE);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    cfg.subcommand = Some(cli.stage.name().to_string());
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(FAILED);
        }
    }
    let dir = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match run(cli.stage, &cfg, dir) {
        Ok(failures) if failures.is_empty() => {
            println!("{}: all checks passed", cli.stage.name());
            ExitCode::SUCCESS
        }
        Ok(failures) => {
            eprintln!("{}: {} check(s) failed", cli.stage.name(), failures.len());
            for f in &failures {
                eprintln!("  - {f}");
            }
            ExitCode::from(FAILED)
        }
        Err(Error::Config(e)) => {
            eprintln!("error: invalid configuration: {e}");
            ExitCode::from(USAGE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(FAILED)
        }
    }
}

fn run(stage: Stage, cfg: &ExperimentConfig, dir: PathBuf) -> landscape_recon::Result<Vec<String>> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let mut out = Output::new(dir.clone(), cfg.hash(), cfg.seed()).map_err(io)?;
    out.json("config.json", cfg).map_err(io)?;
    let failures = match stage {
        Stage::SampleField => stages::sample_field(cfg, &mut out),
        Stage::BuildTrees => stages::build_trees(cfg, &mut out),
        Stage::SweepDistances => stages::sweep_distances(cfg, &mut out),
        Stage::ReconPartition => stages::recon_partition(cfg, &mut out),
        Stage::ReconTree => stages::recon_tree(cfg, &mut out),
        Stage::ReconDistance => stages::recon_distance(cfg, &mut out),
        Stage::ShockMeasure => stages::shock(cfg, &mut out),
        Stage::GaugeStudy => stages::gauge(cfg, &mut out),
        Stage::HorizonStudy => stages::horizon(cfg, &mut out),
        Stage::InterfaceStudy => stages::interface(cfg, &mut out),
        Stage::EndToEnd => stages::end_to_end_stage(cfg, &mut out),
        Stage::Report => stages::report(cfg, &mut out, &dir),
    }?;
    out.json("failures.json", &failures).map_err(io)?;
    out.manifest(stage.name(), &failures).map_err(io)?;
    Ok(failures)
}
