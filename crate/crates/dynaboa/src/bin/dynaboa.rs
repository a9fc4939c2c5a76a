use clap::{Parser, Subcommand};
use dynaboa::config::RunConfig;
use dynaboa::error::Result;
use dynaboa::harness::{
    cmd_ablate, cmd_adapt, cmd_benchmark_retrieval, cmd_keyframe_study, cmd_pretrain,
    pck_reference, slice_stats,
};
use dynaboa::kinematics::SkeletonTopology;
use std::path::PathBuf;

/// Online bilevel test-time adaptation for streaming skeleton reconstruction.
#[derive(Parser)]
#[command(name = "dynaboa", version)]
struct Cli {
    /// Config file (key = value sections); defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the adaptation scheme.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain on synthetic source data; writes the model checkpoint,
    /// parameter priors, exemplar bank, and cluster model.
    Pretrain,
    /// Adapt one scheme over the target stream; writes per-frame and
    /// aggregate CSVs.
    Adapt,
    /// Run every configured scheme on one shared stream; writes ablate.csv.
    Ablate,
    /// Time clustered vs complete retrieval on a large synthetic bank.
    BenchmarkRetrieval,
    /// Compare BOA and DynaBOA on keyframe-rich and mixed streams.
    KeyframeStudy,
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.adapt.seed = seed;
    }
    if let Some(scheme) = &cli.scheme {
        cfg.adapt.scheme = scheme.parse()?;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }

    match cli.command {
        Command::Pretrain => {
            let ctx = cmd_pretrain(&cfg)?;
            println!(
                "pretrained {} params on {} source frames; bank of {} exemplars in {} clusters -> {}",
                ctx.weights.config.n_params(),
                cfg.n_source,
                ctx.bank.len(),
                ctx.clusters.centers.len(),
                cfg.out_dir.display(),
            );
        }
        Command::Adapt => {
            let report = cmd_adapt(&cfg)?;
            let topology = SkeletonTopology::default_human();
            let summary = report.summary(pck_reference(&cfg, &topology))?;
            println!(
                "{}: {} frames, mean MPJPE {:.4}, PA-MPJPE {:.4}, PVE {:.4}, PCK {:.3}, AUC {:.3}",
                report.scheme.id(),
                summary.n_frames,
                summary.mean_mpjpe,
                summary.mean_pa_mpjpe,
                summary.mean_pve,
                summary.pck,
                summary.auc,
            );
        }
        Command::Ablate => {
            let reports = cmd_ablate(&cfg)?;
            for (scheme, report) in &reports {
                println!("{}: mean MPJPE {:.4}", scheme.id(), report.mean_mpjpe());
            }
        }
        Command::BenchmarkRetrieval => {
            let rows = cmd_benchmark_retrieval(&cfg)?;
            for row in &rows {
                println!(
                    "{}: {:.1} comparisons/query, {:.4} ms/query, {} bytes resident",
                    row.strategy, row.comparisons_per_query, row.ms_per_query, row.bytes_resident,
                );
            }
        }
        Command::KeyframeStudy => {
            let traces = cmd_keyframe_study(&cfg)?;
            for trace in &traces {
                for (scheme, report) in &trace.reports {
                    let stats = slice_stats(report);
                    println!(
                        "{} / {}: mean {:.4}, std {:.4}, keyframe mean {:.4} ({} keyframes)",
                        trace.stream_name,
                        scheme.id(),
                        stats.mean,
                        stats.std,
                        stats.keyframe_mean,
                        stats.n_keyframes,
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
