//! Run configuration: a flat `key = value` text format with `[section]`
//! headers, full-line `#` comments, strict unknown-key rejection, and a
//! content hash that identifies a run's semantics.
//!
//! The canonical serialization ([`RunConfig::canonical`]) writes every key in
//! a fixed order with round-trip float formatting, so equal configs produce
//! byte-equal text and therefore equal hashes. The output directory is
//! deliberately excluded from the hash: it changes where artifacts land, not
//! what they contain.

use crate::adaptation::{RetrievalStrategy, Scheme, SchemeConfig};
use crate::cache::fnv1a64;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::stream::{DomainConfig, PretrainConfig};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

/// Spherical k-means build parameters for the exemplar bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterBuildConfig {
    pub n_clusters: usize,
    pub max_iters: usize,
    pub subset_size: usize,
}

impl Default for ClusterBuildConfig {
    fn default() -> Self {
        ClusterBuildConfig {
            n_clusters: 64,
            max_iters: 50,
            subset_size: 128,
        }
    }
}

/// Retrieval benchmark parameters (synthetic large bank).
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub bank_size: usize,
    pub n_clusters: usize,
    pub subset_size: usize,
    pub n_queries: usize,
    pub k: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            bank_size: 50_000,
            n_clusters: 64,
            subset_size: 128,
            n_queries: 200,
            k: 4,
        }
    }
}

/// Everything a run needs, with the frozen benchmark values as defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Target stream length for adapt / ablate.
    pub n_frames: usize,
    /// When false (the default), the per-frame ms column is written as zero
    /// so identical runs produce byte-identical CSVs.
    pub record_timing: bool,
    pub ablate_schemes: Vec<Scheme>,
    /// Run ablation schemes on worker threads.
    pub ablate_parallel: bool,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    /// Labeled source frames generated for pretraining and the bank.
    pub n_source: usize,
    pub adapt: SchemeConfig,
    pub source: DomainConfig,
    pub target: DomainConfig,
    /// Frames in each keyframe-study stream.
    pub keyframe_frames: usize,
    /// Block length of the alternating-domain mixed stream.
    pub keyframe_block_len: usize,
    /// Multiplier on the target's difficulty-event rates for the
    /// keyframe-rich stream.
    pub keyframe_rate_boost: f64,
    pub clusters: ClusterBuildConfig,
    pub bench: BenchConfig,
    /// PCK reference distance as a fraction of the rest-pose height.
    pub pck_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let source = DomainConfig::source_default();
        let mut model = ModelConfig::new(crate::kinematics::SkeletonTopology::default_human().n_joints());
        model.nuisance_dim = source.nuisance_dim;
        let mut adapt = SchemeConfig::new(Scheme::DynaBoa);
        adapt.seed = 7;
        RunConfig {
            seed: 7,
            out_dir: PathBuf::from("runs"),
            n_frames: 300,
            record_timing: false,
            ablate_schemes: Scheme::all().to_vec(),
            ablate_parallel: true,
            model,
            pretrain: PretrainConfig::default(),
            n_source: 1000,
            adapt,
            source,
            target: DomainConfig::target_default(),
            keyframe_frames: 300,
            keyframe_block_len: 50,
            keyframe_rate_boost: 5.0,
            clusters: ClusterBuildConfig::default(),
            bench: BenchConfig::default(),
            pck_fraction: 0.15,
        }
    }
}

type Entries = BTreeMap<(String, String), String>;

/// Removes `[section] key` from the map and parses it into `slot`; absent
/// keys keep the default already in the slot.
fn take<T>(
    entries: &mut Entries,
    section: &str,
    key: &str,
    slot: &mut T,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<()> {
    if let Some(raw) = entries.remove(&(section.to_string(), key.to_string())) {
        *slot = parse(&raw)
            .ok_or_else(|| Error::config(format!("bad value for [{section}] {key}: '{raw}'")))?;
    }
    Ok(())
}

fn f64p(s: &str) -> Option<f64> {
    s.parse().ok()
}

fn usizep(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn u64p(s: &str) -> Option<u64> {
    s.parse().ok()
}

fn boolp(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "on" | "1" => Some(true),
        "false" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn opt_boolp(s: &str) -> Option<Option<bool>> {
    match s.to_ascii_lowercase().as_str() {
        "default" => Some(None),
        "on" | "true" | "1" => Some(Some(true)),
        "off" | "false" | "0" => Some(Some(false)),
        _ => None,
    }
}

fn usize_listp(s: &str) -> Option<Vec<usize>> {
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

fn apply_domain(entries: &mut Entries, section: &str, d: &mut DomainConfig) -> Result<()> {
    take(entries, section, "scale_mean", &mut d.scale_mean, f64p)?;
    take(entries, section, "scale_std", &mut d.scale_std, f64p)?;
    take(entries, section, "trans_mean_x", &mut d.trans_mean[0], f64p)?;
    take(entries, section, "trans_mean_y", &mut d.trans_mean[1], f64p)?;
    take(entries, section, "trans_std", &mut d.trans_std, f64p)?;
    take(entries, section, "bone_mean", &mut d.bone_mean, f64p)?;
    take(entries, section, "bone_std", &mut d.bone_std, f64p)?;
    take(entries, section, "nuisance_dim", &mut d.nuisance_dim, usizep)?;
    take(entries, section, "nuisance_mean", &mut d.nuisance_mean, f64p)?;
    take(entries, section, "nuisance_scene_spread", &mut d.nuisance_scene_spread, f64p)?;
    take(entries, section, "nuisance_std", &mut d.nuisance_std, f64p)?;
    take(entries, section, "noise_sigma", &mut d.noise_sigma, f64p)?;
    take(entries, section, "occlusion_rate", &mut d.occlusion_rate, f64p)?;
    take(entries, section, "occlusion_len", &mut d.occlusion_len, usizep)?;
    take(entries, section, "occlusion_fraction", &mut d.occlusion_fraction, f64p)?;
    take(entries, section, "scene_change_rate", &mut d.scene_change_rate, f64p)?;
    take(entries, section, "delta_theta_max", &mut d.delta_theta_max, f64p)?;
    take(entries, section, "theta_revert", &mut d.theta_revert, f64p)?;
    take(entries, section, "sudden_rate", &mut d.sudden_rate, f64p)?;
    take(entries, section, "sudden_magnitude", &mut d.sudden_magnitude, f64p)?;
    take(entries, section, "theta_limit", &mut d.theta_limit, f64p)?;
    take(entries, section, "seq_len", &mut d.seq_len, usizep)?;
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_usizes(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_bool(v: bool) -> &'static str {
    if v {
        "true"
    } else {
        "false"
    }
}

fn fmt_opt_bool(v: Option<bool>) -> &'static str {
    match v {
        None => "default",
        Some(true) => "on",
        Some(false) => "off",
    }
}

impl RunConfig {
    /// Reads and parses a config file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Parses config text on top of the defaults. Unknown sections or keys
    /// are errors, as are malformed or out-of-range values.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<(String, String), String> = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::config(format!("line {}: malformed section header", lineno + 1))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value", lineno + 1))
            })?;
            if section.is_empty() {
                return Err(Error::config(format!(
                    "line {}: key outside any [section]",
                    lineno + 1
                )));
            }
            let prev = entries.insert(
                (section.clone(), key.trim().to_string()),
                value.trim().to_string(),
            );
            if prev.is_some() {
                return Err(Error::config(format!(
                    "duplicate key [{section}] {}",
                    key.trim()
                )));
            }
        }

        let mut cfg = RunConfig::default();
        cfg.apply(&mut entries)?;
        if let Some(((section, key), _)) = entries.iter().next() {
            return Err(Error::config(format!("unknown key [{section}] {key}")));
        }
        cfg.adapt.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Consumes every recognized key from `entries` into `self`.
    fn apply(&mut self, entries: &mut BTreeMap<(String, String), String>) -> Result<()> {
        take(entries, "run", "seed", &mut self.seed, u64p)?;
        take(entries, "run", "out_dir", &mut self.out_dir, |s| {
            Some(PathBuf::from(s))
        })?;
        take(entries, "run", "n_frames", &mut self.n_frames, usizep)?;
        take(entries, "run", "record_timing", &mut self.record_timing, boolp)?;
        take(entries, "run", "ablate_parallel", &mut self.ablate_parallel, boolp)?;
        take(entries, "run", "ablate_schemes", &mut self.ablate_schemes, |s| {
            s.split(',')
                .map(|x| Scheme::from_str(x.trim()).ok())
                .collect::<Option<Vec<Scheme>>>()
        })?;

        take(entries, "model", "feature_dim", &mut self.model.feature_dim, usizep)?;
        take(entries, "model", "encoder_hidden", &mut self.model.encoder_hidden, usize_listp)?;
        take(entries, "model", "regressor_hidden", &mut self.model.regressor_hidden, usize_listp)?;
        take(entries, "model", "positive_floor", &mut self.model.positive_floor, f64p)?;

        take(entries, "pretrain", "epochs", &mut self.pretrain.epochs, usizep)?;
        take(entries, "pretrain", "batch_size", &mut self.pretrain.batch_size, usizep)?;
        take(entries, "pretrain", "lr", &mut self.pretrain.lr, f64p)?;
        take(entries, "pretrain", "use_adam", &mut self.pretrain.use_adam, boolp)?;
        take(entries, "pretrain", "n_source", &mut self.n_source, usizep)?;

        // [losses] tunes the online objective; pretraining keeps its own
        // uniform supervision so the checkpoint is independent of it.
        let mut weights = self.adapt.weights;
        take(entries, "losses", "mu1", &mut weights.mu1, f64p)?;
        take(entries, "losses", "mu2", &mut weights.mu2, f64p)?;
        take(entries, "losses", "mu3", &mut weights.mu3, f64p)?;
        take(entries, "losses", "mu4", &mut weights.mu4, f64p)?;
        take(entries, "losses", "lambda1", &mut weights.lambda1, f64p)?;
        take(entries, "losses", "lambda2", &mut weights.lambda2, f64p)?;
        take(entries, "losses", "lambda3", &mut weights.lambda3, f64p)?;
        take(entries, "losses", "lambda4", &mut weights.lambda4, f64p)?;
        self.adapt.weights = weights;

        take(entries, "adapt", "scheme", &mut self.adapt.scheme, |s| {
            Scheme::from_str(s).ok()
        })?;
        take(entries, "adapt", "alpha", &mut self.adapt.alpha, f64p)?;
        take(entries, "adapt", "eta", &mut self.adapt.eta, f64p)?;
        take(entries, "adapt", "gamma", &mut self.adapt.gamma, f64p)?;
        take(entries, "adapt", "tau", &mut self.adapt.tau, usizep)?;
        take(entries, "adapt", "epsilon", &mut self.adapt.epsilon, f64p)?;
        take(entries, "adapt", "max_refine", &mut self.adapt.max_refine, usizep)?;
        take(entries, "adapt", "repeats", &mut self.adapt.repeats, usizep)?;
        take(entries, "adapt", "clip_norm", &mut self.adapt.clip_norm, f64p)?;
        take(entries, "adapt", "exemplar_guidance", &mut self.adapt.exemplar_guidance, opt_boolp)?;
        take(entries, "adapt", "dynamic_refine", &mut self.adapt.dynamic_refine, opt_boolp)?;
        take(entries, "adapt", "retrieval", &mut self.adapt.retrieval, |s| {
            RetrievalStrategy::from_str(s).ok()
        })?;
        take(entries, "adapt", "k_exemplars", &mut self.adapt.k_exemplars, usizep)?;
        take(entries, "adapt", "pve_samples", &mut self.adapt.pve_samples, usizep)?;

        apply_domain(entries, "source", &mut self.source)?;
        apply_domain(entries, "target", &mut self.target)?;

        take(entries, "keyframe", "n_frames", &mut self.keyframe_frames, usizep)?;
        take(entries, "keyframe", "block_len", &mut self.keyframe_block_len, usizep)?;
        take(entries, "keyframe", "rate_boost", &mut self.keyframe_rate_boost, f64p)?;

        take(entries, "retrieval", "n_clusters", &mut self.clusters.n_clusters, usizep)?;
        take(entries, "retrieval", "max_iters", &mut self.clusters.max_iters, usizep)?;
        take(entries, "retrieval", "subset_size", &mut self.clusters.subset_size, usizep)?;

        take(entries, "bench", "bank_size", &mut self.bench.bank_size, usizep)?;
        take(entries, "bench", "n_clusters", &mut self.bench.n_clusters, usizep)?;
        take(entries, "bench", "subset_size", &mut self.bench.subset_size, usizep)?;
        take(entries, "bench", "n_queries", &mut self.bench.n_queries, usizep)?;
        take(entries, "bench", "k", &mut self.bench.k, usizep)?;

        take(entries, "metrics", "pck_fraction", &mut self.pck_fraction, f64p)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pretrain_validate()?;
        self.adapt.validate()?;
        self.source.validate()?;
        self.target.validate()?;
        if self.source.nuisance_dim != self.target.nuisance_dim {
            return Err(Error::config(
                "source and target nuisance_dim must match (fixed observation layout)",
            ));
        }
        if self.model.nuisance_dim != self.source.nuisance_dim {
            return Err(Error::config(
                "model nuisance_dim must match the stream nuisance_dim",
            ));
        }
        if self.n_frames == 0 || self.keyframe_frames == 0 {
            return Err(Error::config("stream lengths must be at least 1"));
        }
        if self.keyframe_block_len == 0 {
            return Err(Error::config("keyframe block_len must be at least 1"));
        }
        if self.ablate_schemes.is_empty() {
            return Err(Error::config("ablate_schemes must not be empty"));
        }
        for (name, v) in [
            ("retrieval n_clusters", self.clusters.n_clusters),
            ("retrieval max_iters", self.clusters.max_iters),
            ("retrieval subset_size", self.clusters.subset_size),
            ("bench bank_size", self.bench.bank_size),
            ("bench n_clusters", self.bench.n_clusters),
            ("bench subset_size", self.bench.subset_size),
            ("bench n_queries", self.bench.n_queries),
            ("bench k", self.bench.k),
            ("pretrain n_source", self.n_source),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if !(self.pck_fraction > 0.0 && self.pck_fraction.is_finite()) {
            return Err(Error::config("pck_fraction must be finite and > 0"));
        }
        if !(self.keyframe_rate_boost >= 1.0 && self.keyframe_rate_boost.is_finite()) {
            return Err(Error::config("keyframe rate_boost must be finite and >= 1"));
        }
        Ok(())
    }

    fn pretrain_validate(&self) -> Result<()> {
        if self.pretrain.epochs == 0 || self.pretrain.batch_size == 0 {
            return Err(Error::config("pretrain epochs and batch_size must be >= 1"));
        }
        if !(self.pretrain.lr > 0.0 && self.pretrain.lr.is_finite()) {
            return Err(Error::config("pretrain lr must be finite and > 0"));
        }
        Ok(())
    }

    /// Deterministic serialization: fixed key order, round-trip floats.
    /// `RunConfig::parse` of this text reproduces the config exactly.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let w = &self.adapt.weights;
        let _ = write!(
            s,
            "[run]\nseed = {}\nout_dir = {}\nn_frames = {}\nrecord_timing = {}\nablate_parallel = {}\nablate_schemes = {}\n",
            self.seed,
            self.out_dir.display(),
            self.n_frames,
            fmt_bool(self.record_timing),
            fmt_bool(self.ablate_parallel),
            self.ablate_schemes
                .iter()
                .map(|x| x.id())
                .collect::<Vec<_>>()
                .join(","),
        );
        let _ = write!(
            s,
            "\n[model]\nfeature_dim = {}\nencoder_hidden = {}\nregressor_hidden = {}\npositive_floor = {}\n",
            self.model.feature_dim,
            fmt_usizes(&self.model.encoder_hidden),
            fmt_usizes(&self.model.regressor_hidden),
            fmt_f64(self.model.positive_floor),
        );
        let _ = write!(
            s,
            "\n[pretrain]\nepochs = {}\nbatch_size = {}\nlr = {}\nuse_adam = {}\nn_source = {}\n",
            self.pretrain.epochs,
            self.pretrain.batch_size,
            fmt_f64(self.pretrain.lr),
            fmt_bool(self.pretrain.use_adam),
            self.n_source,
        );
        let _ = write!(
            s,
            "\n[losses]\nmu1 = {}\nmu2 = {}\nmu3 = {}\nmu4 = {}\nlambda1 = {}\nlambda2 = {}\nlambda3 = {}\nlambda4 = {}\n",
            fmt_f64(w.mu1),
            fmt_f64(w.mu2),
            fmt_f64(w.mu3),
            fmt_f64(w.mu4),
            fmt_f64(w.lambda1),
            fmt_f64(w.lambda2),
            fmt_f64(w.lambda3),
            fmt_f64(w.lambda4),
        );
        let _ = write!(
            s,
            "\n[adapt]\nscheme = {}\nalpha = {}\neta = {}\ngamma = {}\ntau = {}\nepsilon = {}\nmax_refine = {}\nrepeats = {}\nclip_norm = {}\nexemplar_guidance = {}\ndynamic_refine = {}\nretrieval = {}\nk_exemplars = {}\npve_samples = {}\n",
            self.adapt.scheme.id(),
            fmt_f64(self.adapt.alpha),
            fmt_f64(self.adapt.eta),
            fmt_f64(self.adapt.gamma),
            self.adapt.tau,
            fmt_f64(self.adapt.epsilon),
            self.adapt.max_refine,
            self.adapt.repeats,
            fmt_f64(self.adapt.clip_norm),
            fmt_opt_bool(self.adapt.exemplar_guidance),
            fmt_opt_bool(self.adapt.dynamic_refine),
            self.adapt.retrieval,
            self.adapt.k_exemplars,
            self.adapt.pve_samples,
        );
        for (name, d) in [("source", &self.source), ("target", &self.target)] {
            let _ = write!(
                s,
                "\n[{name}]\nscale_mean = {}\nscale_std = {}\ntrans_mean_x = {}\ntrans_mean_y = {}\ntrans_std = {}\nbone_mean = {}\nbone_std = {}\nnuisance_dim = {}\nnuisance_mean = {}\nnuisance_scene_spread = {}\nnuisance_std = {}\nnoise_sigma = {}\nocclusion_rate = {}\nocclusion_len = {}\nocclusion_fraction = {}\nscene_change_rate = {}\ndelta_theta_max = {}\ntheta_revert = {}\nsudden_rate = {}\nsudden_magnitude = {}\ntheta_limit = {}\nseq_len = {}\n",
                fmt_f64(d.scale_mean),
                fmt_f64(d.scale_std),
                fmt_f64(d.trans_mean[0]),
                fmt_f64(d.trans_mean[1]),
                fmt_f64(d.trans_std),
                fmt_f64(d.bone_mean),
                fmt_f64(d.bone_std),
                d.nuisance_dim,
                fmt_f64(d.nuisance_mean),
                fmt_f64(d.nuisance_scene_spread),
                fmt_f64(d.nuisance_std),
                fmt_f64(d.noise_sigma),
                fmt_f64(d.occlusion_rate),
                d.occlusion_len,
                fmt_f64(d.occlusion_fraction),
                fmt_f64(d.scene_change_rate),
                fmt_f64(d.delta_theta_max),
                fmt_f64(d.theta_revert),
                fmt_f64(d.sudden_rate),
                fmt_f64(d.sudden_magnitude),
                fmt_f64(d.theta_limit),
                d.seq_len,
            );
        }
        let _ = write!(
            s,
            "\n[keyframe]\nn_frames = {}\nblock_len = {}\nrate_boost = {}\n",
            self.keyframe_frames,
            self.keyframe_block_len,
            fmt_f64(self.keyframe_rate_boost),
        );
        let _ = write!(
            s,
            "\n[retrieval]\nn_clusters = {}\nmax_iters = {}\nsubset_size = {}\n",
            self.clusters.n_clusters, self.clusters.max_iters, self.clusters.subset_size,
        );
        let _ = write!(
            s,
            "\n[bench]\nbank_size = {}\nn_clusters = {}\nsubset_size = {}\nn_queries = {}\nk = {}\n",
            self.bench.bank_size,
            self.bench.n_clusters,
            self.bench.subset_size,
            self.bench.n_queries,
            self.bench.k,
        );
        let _ = write!(s, "\n[metrics]\npck_fraction = {}\n", fmt_f64(self.pck_fraction));
        s
    }

    /// Hash of the run semantics: the canonical text minus the output
    /// directory. Written into every CSV header.
    pub fn hash(&self) -> u64 {
        let mut semantic = self.clone();
        semantic.out_dir = PathBuf::new();
        fnv1a64(semantic.canonical().as_bytes())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossWeights;

    #[test]
    fn default_round_trips_through_canonical_text() {
        let cfg = RunConfig::default();
        let parsed = RunConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.hash(), cfg.hash());
    }

    #[test]
    fn overrides_apply_and_others_stay_default() {
        let text = "\
# comment line
[run]
seed = 9

[adapt]
alpha = 0.001
scheme = B3
exemplar_guidance = on

[target]
noise_sigma = 0.02
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.adapt.seed, 9);
        assert_eq!(cfg.adapt.alpha, 0.001);
        assert_eq!(cfg.adapt.scheme, Scheme::B3);
        assert_eq!(cfg.adapt.exemplar_guidance, Some(true));
        assert_eq!(cfg.target.noise_sigma, 0.02);
        let def = RunConfig::default();
        assert_eq!(cfg.adapt.eta, def.adapt.eta);
        assert_eq!(cfg.source, def.source);
    }

    #[test]
    fn unknown_keys_sections_and_values_are_rejected() {
        for text in [
            "[run]\nspeed = 9\n",
            "[rum]\nseed = 9\n",
            "[adapt]\nalpha = fast\n",
            "[adapt]\nscheme = B9\n",
            "seed = 9\n",
            "[run]\nseed = 9\nseed = 10\n",
            "[run\nseed = 9\n",
        ] {
            assert!(
                matches!(RunConfig::parse(text), Err(Error::Config(_))),
                "accepted: {text}"
            );
        }
    }

    #[test]
    fn validation_catches_out_of_range_values() {
        for text in [
            "[adapt]\ngamma = 1.5\n",
            "[adapt]\nrepeats = 0\n",
            "[target]\nocclusion_rate = 2.0\n",
            "[target]\nnuisance_dim = 5\n",
            "[metrics]\npck_fraction = 0\n",
            "[pretrain]\nlr = -1\n",
        ] {
            assert!(
                matches!(RunConfig::parse(text), Err(Error::Config(_))),
                "accepted: {text}"
            );
        }
    }

    #[test]
    fn hash_tracks_semantics_not_output_location() {
        let base = RunConfig::default();
        let mut moved = base.clone();
        moved.out_dir = PathBuf::from("elsewhere");
        assert_eq!(moved.hash(), base.hash());

        let mut tweaked = base.clone();
        tweaked.adapt.alpha += 1e-9;
        assert_ne!(tweaked.hash(), base.hash());
        let mut timed = base.clone();
        timed.record_timing = true;
        assert_ne!(timed.hash(), base.hash());
    }

    #[test]
    fn loss_weights_tune_adaptation_but_not_pretraining() {
        let cfg = RunConfig::parse("[losses]\nmu2 = 0.25\nlambda2 = 0.5\n").unwrap();
        assert_eq!(cfg.adapt.weights.mu2, 0.25);
        assert_eq!(cfg.adapt.weights.lambda2, 0.5);
        assert_eq!(cfg.pretrain.weights, LossWeights::uniform_supervision());
    }
}
