//! Run orchestration: the five commands behind the CLI, artifact caching,
//! and CSV emission.
//!
//! Every CSV starts with a `# config_hash=<hex>` line identifying the run
//! semantics; with timing recording off (the default) identical configs
//! produce byte-identical files. All randomness derives from the run seed
//! through fixed per-purpose salts, so the commands are independently
//! reproducible.

use crate::adaptation::{run_scheme, AdaptReport, RetrievalContext, Scheme};
use crate::cache::Container;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::kinematics::SkeletonTopology;
use crate::losses::PriorStats;
use crate::metrics::MetricSummary;
use crate::model::ModelWeights;
use crate::retrieval::{
    benchmark_retrieval, build_bank, spherical_kmeans, BenchmarkRow, ClusterModel, SourceBank,
};
use crate::stream::{
    generate_mixed_stream, generate_source, generate_stream, pretrain, stream_hash, DomainConfig,
    StreamFrame,
};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

// Per-purpose seed salts, fixed forever so artifacts stay reproducible.
const SALT_SOURCE: u64 = 0x736f_7572_6365;
const SALT_STREAM: u64 = 0x7374_7265_616d;
const SALT_CLUSTER: u64 = 0x636c_7573_7465;
const SALT_BENCH: u64 = 0x6265_6e63_68;
const SALT_QUERY: u64 = 0x7175_6572_79;
const SALT_RICH: u64 = 0x7269_6368;
const SALT_MIXED: u64 = 0x6d69_7865_64;

/// Artifact file names inside the output directory.
pub struct Artifacts {
    pub model: PathBuf,
    pub priors: PathBuf,
    pub bank: PathBuf,
    pub clusters: PathBuf,
    pub pretrain_log: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Artifacts {
            model: dir.join("model.ckpt"),
            priors: dir.join("priors.bin"),
            bank: dir.join("bank.bin"),
            clusters: dir.join("clusters.bin"),
            pretrain_log: dir.join("pretrain_log.csv"),
        }
    }
}

fn save_priors(priors: &PriorStats, path: &Path) -> Result<()> {
    let mut c = Container::new();
    c.put_f64("beta_mean", priors.beta_mean.clone())
        .put_f64("beta_var", priors.beta_var.clone())
        .put_f64("theta_mean", priors.theta_mean.clone())
        .put_f64("theta_var", priors.theta_var.clone());
    c.save(path)
}

fn load_priors(path: &Path) -> Result<PriorStats> {
    let c = Container::load(path)?;
    Ok(PriorStats {
        beta_mean: c.f64("beta_mean")?.to_vec(),
        beta_var: c.f64("beta_var")?.to_vec(),
        theta_mean: c.f64("theta_mean")?.to_vec(),
        theta_var: c.f64("theta_var")?.to_vec(),
    })
}

/// Formats a float with round-trip precision (CSV stays bit-faithful).
fn csv_f64(v: f64) -> String {
    format!("{v:?}")
}

fn write_csv(path: &Path, cfg: &RunConfig, header: &str, rows: &[String]) -> Result<()> {
    let mut text = format!("# config_hash={}\n{header}\n", cfg.hash_hex());
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Loaded pretraining products shared by the adaptation commands.
pub struct PretrainedContext {
    pub weights: ModelWeights,
    pub priors: PriorStats,
    pub bank: SourceBank,
    pub clusters: ClusterModel,
}

impl PretrainedContext {
    /// Loads all four artifacts, pointing at the pretrain command if any is
    /// missing.
    pub fn load(dir: &Path) -> Result<Self> {
        let paths = Artifacts::in_dir(dir);
        let ctx = |what: &str, e: Error| {
            Error::config(format!(
                "cannot load {what} from {}: {e}; run the pretrain command first",
                dir.display()
            ))
        };
        Ok(PretrainedContext {
            weights: ModelWeights::load(&paths.model).map_err(|e| ctx("model checkpoint", e))?,
            priors: load_priors(&paths.priors).map_err(|e| ctx("parameter priors", e))?,
            bank: SourceBank::load(&paths.bank).map_err(|e| ctx("exemplar bank", e))?,
            clusters: ClusterModel::load(&paths.clusters).map_err(|e| ctx("cluster model", e))?,
        })
    }

    /// Loads the artifacts from `cfg.out_dir`, pretraining into it first when
    /// the checkpoint is absent. Convenience for examples and one-shot runs.
    pub fn ensure(cfg: &RunConfig) -> Result<Self> {
        let dir = Path::new(&cfg.out_dir);
        if Artifacts::in_dir(dir).model.exists() {
            Self::load(dir)
        } else {
            cmd_pretrain(cfg)
        }
    }

    pub fn retrieval(&self) -> RetrievalContext<'_> {
        RetrievalContext {
            bank: &self.bank,
            clusters: &self.clusters,
        }
    }
}

/// Generates the labeled source data, pretrains the model, builds the
/// exemplar bank and its cluster structure, and writes all artifacts.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PretrainedContext> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let topology = SkeletonTopology::default_human();
    let source = generate_source(&topology, &cfg.source, cfg.n_source, cfg.seed ^ SALT_SOURCE)?;
    let outcome = pretrain(&topology, &source, cfg.model.clone(), &cfg.pretrain, cfg.seed)?;
    let bank = build_bank(&source, &outcome.weights)?;
    let n_clusters = cfg.clusters.n_clusters.min(bank.len());
    let clusters = spherical_kmeans(
        &bank,
        n_clusters,
        cfg.clusters.max_iters,
        cfg.clusters.subset_size,
        cfg.seed ^ SALT_CLUSTER,
    )?;

    let paths = Artifacts::in_dir(&cfg.out_dir);
    outcome.weights.save(&paths.model)?;
    save_priors(&outcome.priors, &paths.priors)?;
    bank.save(&paths.bank)?;
    clusters.save(&paths.clusters)?;
    let rows: Vec<String> = outcome
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(e, l)| format!("{e},{}", csv_f64(*l)))
        .collect();
    write_csv(&paths.pretrain_log, cfg, "epoch,loss", &rows)?;
    Ok(PretrainedContext {
        weights: outcome.weights,
        priors: outcome.priors,
        bank,
        clusters,
    })
}

fn frame_csv_rows(report: &AdaptReport, record_timing: bool) -> Vec<String> {
    report
        .rows
        .iter()
        .map(|r| {
            let ms = if record_timing { r.ms } else { 0.0 };
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.frame,
                r.is_keyframe as u8,
                r.aborted as u8,
                csv_f64(r.losses.frame),
                csv_f64(r.losses.motion),
                csv_f64(r.losses.teacher),
                csv_f64(r.losses.exemplar),
                csv_f64(r.losses.total),
                csv_f64(r.d),
                r.refines,
                csv_f64(r.mpjpe),
                csv_f64(r.pa_mpjpe),
                csv_f64(r.pve),
                csv_f64(ms),
            )
        })
        .collect()
}

const FRAME_CSV_HEADER: &str = "frame,is_keyframe,aborted,loss_frame,loss_motion,loss_teacher,\
loss_exemplar,loss_total,d,refines,mpjpe,pa_mpjpe,pve,ms";

fn aggregate_csv_row(report: &AdaptReport, summary: &MetricSummary, record_timing: bool) -> String {
    let n = report.rows.len() as f64;
    let mean_d = report.rows.iter().map(|r| r.d).sum::<f64>() / n;
    let mean_refines = report.rows.iter().map(|r| r.refines as f64).sum::<f64>() / n;
    let aborted = report.rows.iter().filter(|r| r.aborted).count();
    let mean_ms = if record_timing {
        report.rows.iter().map(|r| r.ms).sum::<f64>() / n
    } else {
        0.0
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        report.scheme.id(),
        summary.n_frames,
        csv_f64(summary.mean_mpjpe),
        csv_f64(summary.std_mpjpe),
        csv_f64(summary.mean_pa_mpjpe),
        csv_f64(summary.std_pa_mpjpe),
        csv_f64(summary.mean_pve),
        csv_f64(summary.std_pve),
        csv_f64(summary.mean_reproj_2d),
        csv_f64(summary.pck),
        csv_f64(summary.auc),
        summary.ambiguous_frames,
        csv_f64(mean_d),
        csv_f64(mean_refines),
        aborted,
        csv_f64(mean_ms),
    )
}

const AGGREGATE_CSV_HEADER: &str = "scheme,n_frames,mean_mpjpe,std_mpjpe,mean_pa_mpjpe,\
std_pa_mpjpe,mean_pve,std_pve,mean_reproj_2d,pck,auc,ambiguous_frames,mean_d,mean_refines,\
aborted_frames,mean_ms";

/// PCK/AUC reference distance for this run.
pub fn pck_reference(cfg: &RunConfig, topology: &SkeletonTopology) -> f64 {
    cfg.pck_fraction * topology.rest_height()
}

/// The target stream every adaptation command runs on.
pub fn target_stream(cfg: &RunConfig, topology: &SkeletonTopology) -> Result<Vec<StreamFrame>> {
    generate_stream(topology, &cfg.target, cfg.n_frames, cfg.seed ^ SALT_STREAM)
}

fn run_one(
    cfg: &RunConfig,
    topology: &SkeletonTopology,
    stream: &[StreamFrame],
    ctx: &PretrainedContext,
    scheme: Scheme,
) -> Result<AdaptReport> {
    let mut scheme_cfg = cfg.adapt.clone();
    scheme_cfg.scheme = scheme;
    run_scheme(
        topology,
        stream,
        &ctx.weights,
        &ctx.priors,
        Some(ctx.retrieval()),
        &scheme_cfg,
    )
}

/// Adapts `cfg.adapt.scheme` over the target stream and writes the
/// per-frame and aggregate CSVs. Returns the report for callers that want
/// the numbers directly.
pub fn cmd_adapt(cfg: &RunConfig) -> Result<AdaptReport> {
    cfg.validate()?;
    let ctx = PretrainedContext::load(&cfg.out_dir)?;
    let topology = SkeletonTopology::default_human();
    let stream = target_stream(cfg, &topology)?;
    let report = run_one(cfg, &topology, &stream, &ctx, cfg.adapt.scheme)?;
    let summary = report.summary(pck_reference(cfg, &topology))?;

    let scheme = report.scheme.id();
    write_csv(
        &cfg.out_dir.join(format!("frames_{scheme}.csv")),
        cfg,
        FRAME_CSV_HEADER,
        &frame_csv_rows(&report, cfg.record_timing),
    )?;
    write_csv(
        &cfg.out_dir.join(format!("aggregate_{scheme}.csv")),
        cfg,
        AGGREGATE_CSV_HEADER,
        &[aggregate_csv_row(&report, &summary, cfg.record_timing)],
    )?;
    Ok(report)
}

/// Runs every scheme in `cfg.ablate_schemes` over one shared target stream
/// and writes a one-row-per-scheme comparison CSV.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<(Scheme, AdaptReport)>> {
    cfg.validate()?;
    let ctx = PretrainedContext::load(&cfg.out_dir)?;
    let topology = SkeletonTopology::default_human();
    let stream = target_stream(cfg, &topology)?;
    let shared_hash = stream_hash(&stream);

    let schemes = cfg.ablate_schemes.clone();
    let reports: Vec<(Scheme, AdaptReport)> = if cfg.ablate_parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = schemes
                .iter()
                .map(|&scheme| {
                    let (stream, ctx, topology) = (&stream, &ctx, &topology);
                    scope.spawn(move || -> Result<(Scheme, AdaptReport)> {
                        Ok((scheme, run_one(cfg, topology, stream, ctx, scheme)?))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scheme worker panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        schemes
            .iter()
            .map(|&scheme| Ok((scheme, run_one(cfg, &topology, &stream, &ctx, scheme)?)))
            .collect::<Result<Vec<_>>>()?
    };

    let reference = pck_reference(cfg, &topology);
    let mut rows = Vec::with_capacity(reports.len());
    for (_, report) in &reports {
        let summary = report.summary(reference)?;
        rows.push(format!(
            "{},{:016x}",
            aggregate_csv_row(report, &summary, cfg.record_timing),
            shared_hash,
        ));
    }
    let header = format!("{AGGREGATE_CSV_HEADER},stream_hash");
    write_csv(&cfg.out_dir.join("ablate.csv"), cfg, &header, &rows)?;
    Ok(reports)
}

/// Builds a large synthetic bank and times clustered vs complete retrieval.
pub fn cmd_benchmark_retrieval(cfg: &RunConfig) -> Result<Vec<BenchmarkRow>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let topology = SkeletonTopology::default_human();
    // Random-init weights: the benchmark measures lookup structure, not
    // model quality, and skipping pretraining keeps it fast.
    let weights = ModelWeights::init_random(cfg.model.clone(), cfg.seed)?;
    let source = generate_source(
        &topology,
        &cfg.source,
        cfg.bench.bank_size,
        cfg.seed ^ SALT_BENCH,
    )?;
    let bank = build_bank(&source, &weights)?;
    let clusters = spherical_kmeans(
        &bank,
        cfg.bench.n_clusters.min(bank.len()),
        cfg.clusters.max_iters,
        cfg.bench.subset_size,
        cfg.seed ^ SALT_CLUSTER,
    )?;
    let query_frames = generate_stream(
        &topology,
        &cfg.target,
        cfg.bench.n_queries,
        cfg.seed ^ SALT_QUERY,
    )?;
    let queries: Vec<Vec<f64>> = query_frames
        .iter()
        .map(|f| weights.encode(&f.input.obs))
        .collect::<Result<_>>()?;
    let rows = benchmark_retrieval(&bank, &clusters, &queries, cfg.bench.k, cfg.seed)?;

    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.strategy,
                r.n_queries,
                csv_f64(r.comparisons_per_query),
                csv_f64(r.ms_per_query),
                r.bytes_resident,
            )
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("retrieval_bench.csv"),
        cfg,
        "strategy,n_queries,comparisons_per_query,ms_per_query,bytes_resident",
        &csv_rows,
    )?;
    Ok(rows)
}

/// Scales the difficulty-event rates of a domain (capped at probability 1).
fn boost_rates(base: &DomainConfig, factor: f64) -> DomainConfig {
    DomainConfig {
        occlusion_rate: (base.occlusion_rate * factor).min(1.0),
        scene_change_rate: (base.scene_change_rate * factor).min(1.0),
        sudden_rate: (base.sudden_rate * factor).min(1.0),
        ..base.clone()
    }
}

/// One keyframe-study stream with its per-scheme reports.
pub struct KeyframeTrace {
    pub stream_name: &'static str,
    pub reports: Vec<(Scheme, AdaptReport)>,
}

/// Compares BOA and DynaBOA on a keyframe-rich stream and on a mixed stream
/// alternating between the source-like and target domains. Writes per-frame
/// traces and a slice summary (all frames / keyframes / regular frames).
pub fn cmd_keyframe_study(cfg: &RunConfig) -> Result<Vec<KeyframeTrace>> {
    cfg.validate()?;
    let ctx = PretrainedContext::load(&cfg.out_dir)?;
    let topology = SkeletonTopology::default_human();

    let rich_cfg = boost_rates(&cfg.target, cfg.keyframe_rate_boost);
    let rich = generate_stream(
        &topology,
        &rich_cfg,
        cfg.keyframe_frames,
        cfg.seed ^ SALT_RICH,
    )?;
    let mixed = generate_mixed_stream(
        &topology,
        &cfg.source,
        &cfg.target,
        cfg.keyframe_block_len,
        cfg.keyframe_frames,
        cfg.seed ^ SALT_MIXED,
    )?;

    let schemes = [Scheme::Boa, Scheme::DynaBoa];
    let mut traces = Vec::new();
    let mut summary_rows = Vec::new();
    for (stream_name, stream) in [("rich", &rich), ("mixed", &mixed)] {
        let mut reports = Vec::new();
        for scheme in schemes {
            let report = run_one(cfg, &topology, stream, &ctx, scheme)?;
            write_csv(
                &cfg.out_dir
                    .join(format!("keyframe_{stream_name}_{}.csv", scheme.id())),
                cfg,
                FRAME_CSV_HEADER,
                &frame_csv_rows(&report, cfg.record_timing),
            )?;
            summary_rows.push(keyframe_summary_row(stream_name, &report));
            reports.push((scheme, report));
        }
        traces.push(KeyframeTrace {
            stream_name,
            reports,
        });
    }
    write_csv(
        &cfg.out_dir.join("keyframe_summary.csv"),
        cfg,
        "stream,scheme,n_frames,n_keyframes,mean_mpjpe,std_mpjpe,keyframe_mean_mpjpe,\
regular_mean_mpjpe,mean_refines",
        &summary_rows,
    )?;
    Ok(traces)
}

/// Error statistics over all frames and over the keyframe / regular slices.
pub struct SliceStats {
    pub mean: f64,
    pub std: f64,
    pub keyframe_mean: f64,
    pub regular_mean: f64,
    pub n_keyframes: usize,
}

pub fn slice_stats(report: &AdaptReport) -> SliceStats {
    let all: Vec<f64> = report.rows.iter().map(|r| r.mpjpe).collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let std = (all.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n).sqrt();
    let slice_mean = |keyframe: bool| {
        let vals: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.is_keyframe == keyframe)
            .map(|r| r.mpjpe)
            .collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    SliceStats {
        mean,
        std,
        keyframe_mean: slice_mean(true),
        regular_mean: slice_mean(false),
        n_keyframes: report.rows.iter().filter(|r| r.is_keyframe).count(),
    }
}

fn keyframe_summary_row(stream_name: &str, report: &AdaptReport) -> String {
    let stats = slice_stats(report);
    let mean_refines =
        report.rows.iter().map(|r| r.refines as f64).sum::<f64>() / report.rows.len() as f64;
    let mut row = String::new();
    let _ = write!(
        row,
        "{},{},{},{},{},{},{},{},{}",
        stream_name,
        report.scheme.id(),
        report.rows.len(),
        stats.n_keyframes,
        csv_f64(stats.mean),
        csv_f64(stats.std),
        csv_f64(stats.keyframe_mean),
        csv_f64(stats.regular_mean),
        csv_f64(mean_refines),
    );
    row
}
