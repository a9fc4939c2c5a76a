//! Synthetic data: labeled source sequences for pretraining and ordered
//! target streams for online adaptation, drawn from configurable domains.
//!
//! A domain fixes the camera, bone-scale and nuisance distributions plus the
//! stream's difficulty events (occlusion bursts, scene changes, sudden
//! motion). The source and target defaults differ in camera scale (about
//! x1.7), bone scale (about x0.95), camera translation and nuisance mean, so
//! a genuine distribution shift separates pretraining from deployment.
//!
//! Ground-truth 3D state lives in [`FrameTruth`]; adaptation code only ever
//! receives [`FrameInput`], so hidden truth is unreachable from the update
//! path by construction.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, project, BodyParams, CameraParams, Joints3D, Keypoints2D,
    SkeletonTopology,
};
use crate::losses::{loss_exemplar, run_pipeline, ExemplarTarget, LossWeights, PriorStats};
use crate::model::{gradient, ModelConfig, ModelWeights, Observation};
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Everything the adapter is allowed to see for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub obs: Observation,
    /// Noisy 2D keypoints; masked entries are zeroed.
    pub gt2d: Keypoints2D,
    /// 1.0 for visible keypoints, 0.0 for masked ones.
    pub visibility: Vec<f64>,
}

/// Hidden ground truth, used only for evaluation and pretraining labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub body: BodyParams,
    pub camera: CameraParams,
    pub joints: Joints3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamFrame {
    pub input: FrameInput,
    pub truth: FrameTruth,
    pub is_keyframe: bool,
}

/// Distribution parameters of one data domain plus its stream-event rates.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub scale_mean: f64,
    pub scale_std: f64,
    pub trans_mean: [f64; 2],
    pub trans_std: f64,
    pub bone_mean: f64,
    pub bone_std: f64,
    pub nuisance_dim: usize,
    /// Base mean of the nuisance vector; the domain's appearance signature.
    pub nuisance_mean: f64,
    /// Spread of per-scene nuisance means around the base mean.
    pub nuisance_scene_spread: f64,
    /// Per-frame nuisance noise around the scene mean.
    pub nuisance_std: f64,
    /// Std of the additive keypoint observation noise.
    pub noise_sigma: f64,
    /// Per-frame probability that an occlusion burst starts.
    pub occlusion_rate: f64,
    pub occlusion_len: usize,
    /// Fraction of joints masked during a burst.
    pub occlusion_fraction: f64,
    /// Per-frame probability of a scene change (new nuisance mean).
    pub scene_change_rate: f64,
    /// Bound on the per-frame pose random-walk step.
    pub delta_theta_max: f64,
    /// Mean-reversion rate of the pose walk toward the neutral pose. Keeps
    /// the walk stationary, so stream difficulty does not grow with length;
    /// initial poses are drawn from the stationary distribution.
    pub theta_revert: f64,
    /// Per-frame probability of a sudden-motion jump.
    pub sudden_rate: f64,
    pub sudden_magnitude: f64,
    /// Angles are clamped to [-theta_limit, theta_limit], kept below pi/2 to
    /// stay away from gimbal-lock configurations.
    pub theta_limit: f64,
    /// Length of the independent motion sequences in source datasets.
    pub seq_len: usize,
}

/// Fraction of angle coordinates hit by one sudden-motion jump.
const SUDDEN_COORD_FRACTION: f64 = 0.3;

impl DomainConfig {
    /// Pretraining domain: mild camera, unit bones, no difficulty events.
    pub fn source_default() -> Self {
        DomainConfig {
            scale_mean: 1.0,
            scale_std: 0.05,
            trans_mean: [0.0, 0.0],
            trans_std: 0.1,
            bone_mean: 1.0,
            bone_std: 0.05,
            nuisance_dim: 8,
            nuisance_mean: 0.0,
            nuisance_scene_spread: 0.5,
            nuisance_std: 0.3,
            noise_sigma: 0.01,
            occlusion_rate: 0.0,
            occlusion_len: 3,
            occlusion_fraction: 0.6,
            scene_change_rate: 0.0,
            delta_theta_max: 0.06,
            theta_revert: 0.005,
            sudden_rate: 0.0,
            sudden_magnitude: 0.8,
            theta_limit: 1.2,
            seq_len: 16,
        }
    }

    /// Deployment domain: camera scale about x1.7 and shifted translation,
    /// shorter bones, shifted nuisance mean, noisier keypoint extraction,
    /// plus occlusion bursts, scene changes and sudden motion.
    pub fn target_default() -> Self {
        DomainConfig {
            scale_mean: 1.711,
            trans_mean: [0.6, -0.4],
            bone_mean: 0.9,
            nuisance_mean: 3.0,
            noise_sigma: 0.03,
            occlusion_rate: 0.03,
            occlusion_fraction: 0.4,
            scene_change_rate: 0.01,
            sudden_rate: 0.02,
            ..DomainConfig::source_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("occlusion_rate", self.occlusion_rate),
            ("scene_change_rate", self.scene_change_rate),
            ("sudden_rate", self.sudden_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.occlusion_rate > 0.0 && self.occlusion_len == 0 {
            return Err(Error::config("occlusion_len must be positive when bursts occur"));
        }
        if !(0.0..=1.0).contains(&self.occlusion_fraction) || self.occlusion_fraction == 0.0 {
            return Err(Error::config("occlusion_fraction must lie in (0, 1]"));
        }
        for (name, v) in [
            ("scale_std", self.scale_std),
            ("trans_std", self.trans_std),
            ("bone_std", self.bone_std),
            ("nuisance_scene_spread", self.nuisance_scene_spread),
            ("nuisance_std", self.nuisance_std),
            ("noise_sigma", self.noise_sigma),
            ("delta_theta_max", self.delta_theta_max),
            ("sudden_magnitude", self.sudden_magnitude),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::config(format!("{name} must be non-negative")));
            }
        }
        if self.scale_mean <= 0.0 || self.bone_mean <= 0.0 {
            return Err(Error::config("scale_mean and bone_mean must be positive"));
        }
        if self.theta_limit <= 0.0 || self.theta_limit >= std::f64::consts::FRAC_PI_2 + 0.3 {
            return Err(Error::config("theta_limit must lie in (0, ~pi/2)"));
        }
        if !(0.0..1.0).contains(&self.theta_revert) {
            return Err(Error::config("theta_revert must lie in [0, 1)"));
        }
        if self.seq_len == 0 {
            return Err(Error::config("seq_len must be positive"));
        }
        Ok(())
    }

    /// Expected key-frame fraction implied by the event rates, treating the
    /// three mechanisms as independent. Used by the calibration tests.
    pub fn expected_keyframe_fraction(&self) -> f64 {
        let p_occluded = 1.0 - (1.0 - self.occlusion_rate).powi(self.occlusion_len as i32);
        1.0 - (1.0 - p_occluded) * (1.0 - self.scene_change_rate) * (1.0 - self.sudden_rate)
    }
}

/// Difficulty events of one stream, sampled up front so tests can also
/// inject exact schedules.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamSchedule {
    /// (start_frame, length) of each occlusion burst.
    pub occlusion_bursts: Vec<(usize, usize)>,
    pub scene_changes: Vec<usize>,
    pub sudden_frames: Vec<usize>,
}

pub fn sample_schedule(cfg: &DomainConfig, n: usize, rng: &mut ChaCha8Rng) -> StreamSchedule {
    let mut schedule = StreamSchedule::default();
    for t in 0..n {
        if cfg.occlusion_rate > 0.0 && rng.gen_bool(cfg.occlusion_rate) {
            schedule.occlusion_bursts.push((t, cfg.occlusion_len));
        }
        if t > 0 && cfg.scene_change_rate > 0.0 && rng.gen_bool(cfg.scene_change_rate) {
            schedule.scene_changes.push(t);
        }
        if t > 0 && cfg.sudden_rate > 0.0 && rng.gen_bool(cfg.sudden_rate) {
            schedule.sudden_frames.push(t);
        }
    }
    schedule
}

struct Scene {
    beta: Vec<f64>,
    camera: CameraParams,
    nuisance_mean: Vec<f64>,
}

fn sample_scene(topology: &SkeletonTopology, cfg: &DomainConfig, rng: &mut ChaCha8Rng) -> Scene {
    let bone = Normal::new(cfg.bone_mean, cfg.bone_std).expect("validated std");
    let beta: Vec<f64> = (0..topology.n_bones())
        .map(|_| bone.sample(rng).max(0.2))
        .collect();
    let scale = Normal::new(cfg.scale_mean, cfg.scale_std)
        .expect("validated std")
        .sample(rng)
        .max(0.05);
    let trans_noise = Normal::new(0.0, cfg.trans_std).expect("validated std");
    let camera = CameraParams {
        scale,
        trans: [
            cfg.trans_mean[0] + trans_noise.sample(rng),
            cfg.trans_mean[1] + trans_noise.sample(rng),
        ],
    };
    let spread = Normal::new(0.0, cfg.nuisance_scene_spread).expect("validated std");
    let nuisance_mean = (0..cfg.nuisance_dim)
        .map(|_| cfg.nuisance_mean + spread.sample(rng))
        .collect();
    Scene {
        beta,
        camera,
        nuisance_mean,
    }
}

/// Draws the walk's stationary pose distribution, so streams of any length
/// share the coverage of short source sequences. For revert rate r and step
/// bound d, the stationary std per coordinate is d / sqrt(3 r (2 - r)).
fn initial_theta(cfg: &DomainConfig, n_joints: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let r = cfg.theta_revert;
    if r > 0.0 {
        let sd = cfg.delta_theta_max / (3.0 * r * (2.0 - r)).sqrt();
        let dist = Normal::new(0.0, sd).expect("validated params");
        (0..3 * n_joints)
            .map(|_| dist.sample(rng).clamp(-cfg.theta_limit, cfg.theta_limit))
            .collect()
    } else {
        let a = (0.4f64).min(cfg.theta_limit);
        (0..3 * n_joints).map(|_| rng.gen_range(-a..a)).collect()
    }
}

/// Builds `n` frames continuing from `theta`, reading difficulty events from
/// `schedule` (frame indices are local to this block). `first_is_keyframe`
/// marks frame 0, used when a block boundary is itself a domain switch.
fn assemble_block(
    topology: &SkeletonTopology,
    cfg: &DomainConfig,
    schedule: &StreamSchedule,
    n: usize,
    theta: &mut Vec<f64>,
    rng: &mut ChaCha8Rng,
    first_is_keyframe: bool,
    out: &mut Vec<StreamFrame>,
) -> Result<()> {
    cfg.validate()?;
    let n_joints = topology.n_joints();
    let mut scene = sample_scene(topology, cfg, rng);

    // Resolve the occlusion mask for every frame up front.
    let mut masked: Vec<Vec<usize>> = vec![Vec::new(); n];
    let n_masked = ((cfg.occlusion_fraction * n_joints as f64).ceil() as usize).clamp(1, n_joints);
    for &(start, len) in &schedule.occlusion_bursts {
        let joints = index_sample(rng, n_joints, n_masked).into_vec();
        for t in start..(start + len).min(n) {
            for &j in &joints {
                if !masked[t].contains(&j) {
                    masked[t].push(j);
                }
            }
        }
    }

    let kp_noise = Normal::new(0.0, cfg.noise_sigma).expect("validated std");
    let nuis_noise = Normal::new(0.0, cfg.nuisance_std).expect("validated std");

    for t in 0..n {
        let scene_change = schedule.scene_changes.contains(&t);
        if scene_change {
            let spread =
                Normal::new(0.0, cfg.nuisance_scene_spread).expect("validated std");
            scene.nuisance_mean = (0..cfg.nuisance_dim)
                .map(|_| cfg.nuisance_mean + spread.sample(rng))
                .collect();
        }
        let sudden = schedule.sudden_frames.contains(&t);
        if t > 0 {
            if sudden {
                for a in theta.iter_mut() {
                    if rng.gen_bool(SUDDEN_COORD_FRACTION) {
                        *a += rng.gen_range(-cfg.sudden_magnitude..cfg.sudden_magnitude);
                    }
                }
            }
            for a in theta.iter_mut() {
                *a = (1.0 - cfg.theta_revert) * *a
                    + rng.gen_range(-cfg.delta_theta_max..cfg.delta_theta_max);
                *a = a.clamp(-cfg.theta_limit, cfg.theta_limit);
            }
        } else {
            for a in theta.iter_mut() {
                *a = a.clamp(-cfg.theta_limit, cfg.theta_limit);
            }
        }

        let body = BodyParams {
            beta: scene.beta.clone(),
            theta: theta.clone(),
        };
        let joints = forward_kinematics(topology, &body)?;
        let exact2d = project(&scene.camera, &joints);
        // Normal(0, 0) samples exactly 0.0, so zero sigma keeps projections
        // bit-exact.
        let mut gt2d = Keypoints2D {
            points: exact2d
                .points
                .iter()
                .map(|p| [p[0] + kp_noise.sample(rng), p[1] + kp_noise.sample(rng)])
                .collect(),
        };
        let mut visibility = vec![1.0; n_joints];
        for &j in &masked[t] {
            visibility[j] = 0.0;
            gt2d.points[j] = [0.0, 0.0];
        }
        let nuisance: Vec<f64> = scene
            .nuisance_mean
            .iter()
            .map(|m| m + nuis_noise.sample(rng))
            .collect();
        let obs = make_observation(&gt2d, &visibility, &nuisance);
        let is_keyframe =
            !masked[t].is_empty() || scene_change || sudden || (t == 0 && first_is_keyframe);
        out.push(StreamFrame {
            input: FrameInput {
                obs,
                gt2d,
                visibility,
            },
            truth: FrameTruth {
                body,
                camera: scene.camera.clone(),
                joints,
            },
            is_keyframe,
        });
    }
    Ok(())
}

/// Flattens masked keypoints, visibility flags and the nuisance vector into
/// the model's observation layout.
pub fn make_observation(gt2d: &Keypoints2D, visibility: &[f64], nuisance: &[f64]) -> Observation {
    let mut values = Vec::with_capacity(3 * visibility.len() + nuisance.len());
    for p in &gt2d.points {
        values.push(p[0]);
        values.push(p[1]);
    }
    values.extend_from_slice(visibility);
    values.extend_from_slice(nuisance);
    Observation { values }
}

/// One continuous target stream: a single subject and camera, difficulty
/// events sampled from the config rates.
pub fn generate_stream(
    topology: &SkeletonTopology,
    cfg: &DomainConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<StreamFrame>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = sample_schedule(cfg, n, &mut rng);
    generate_stream_with_schedule(topology, cfg, &schedule, n, &mut rng)
}

/// Stream assembly with an explicit schedule; exposed so tests can inject
/// exact event placements.
pub fn generate_stream_with_schedule(
    topology: &SkeletonTopology,
    cfg: &DomainConfig,
    schedule: &StreamSchedule,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StreamFrame>> {
    let mut theta = initial_theta(cfg, topology.n_joints(), rng);
    let mut frames = Vec::with_capacity(n);
    assemble_block(topology, cfg, schedule, n, &mut theta, rng, false, &mut frames)?;
    Ok(frames)
}

/// Labeled source dataset: independent smooth sequences of `cfg.seq_len`
/// frames, each with a fresh subject, camera and scene.
pub fn generate_source(
    topology: &SkeletonTopology,
    cfg: &DomainConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<StreamFrame>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(n);
    while frames.len() < n {
        let len = cfg.seq_len.min(n - frames.len());
        let schedule = sample_schedule(cfg, len, &mut rng);
        let mut theta = initial_theta(cfg, topology.n_joints(), &mut rng);
        assemble_block(topology, cfg, &schedule, len, &mut theta, &mut rng, false, &mut frames)?;
    }
    Ok(frames)
}

/// Stream alternating between two domains in fixed-length blocks while the
/// pose random walk continues across boundaries. Every block switch is a key
/// frame.
pub fn generate_mixed_stream(
    topology: &SkeletonTopology,
    cfg_a: &DomainConfig,
    cfg_b: &DomainConfig,
    block_len: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<StreamFrame>> {
    cfg_a.validate()?;
    cfg_b.validate()?;
    if block_len == 0 {
        return Err(Error::config("block_len must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = initial_theta(cfg_a, topology.n_joints(), &mut rng);
    let mut frames = Vec::with_capacity(n);
    let mut block = 0;
    while frames.len() < n {
        let cfg = if block % 2 == 0 { cfg_a } else { cfg_b };
        let len = block_len.min(n - frames.len());
        let schedule = sample_schedule(cfg, len, &mut rng);
        assemble_block(
            topology,
            cfg,
            &schedule,
            len,
            &mut theta,
            &mut rng,
            block > 0,
            &mut frames,
        )?;
        block += 1;
    }
    Ok(frames)
}

/// Platform-stable fingerprint of a stream's full content (inputs, truth and
/// key-frame flags). Two streams hash equal iff every float is bit-equal.
pub fn stream_hash(frames: &[StreamFrame]) -> u64 {
    let mut bytes = Vec::new();
    for f in frames {
        for v in &f.input.obs.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for p in &f.input.gt2d.points {
            bytes.extend_from_slice(&p[0].to_le_bytes());
            bytes.extend_from_slice(&p[1].to_le_bytes());
        }
        for v in &f.input.visibility {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for v in f.truth.body.beta.iter().chain(&f.truth.body.theta) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&f.truth.camera.scale.to_le_bytes());
        bytes.extend_from_slice(&f.truth.camera.trans[0].to_le_bytes());
        bytes.extend_from_slice(&f.truth.camera.trans[1].to_le_bytes());
        bytes.push(f.is_keyframe as u8);
    }
    crate::cache::fnv1a64(&bytes)
}

/// Pretraining hyperparameters. Full supervision on the source labels with
/// equal term weights; Adam by default for wall-clock reasons, the online
/// adapter itself stays plain gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub use_adam: bool,
    pub weights: LossWeights,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 100,
            batch_size: 32,
            lr: 3e-3,
            use_adam: true,
            weights: LossWeights::uniform_supervision(),
        }
    }
}

pub struct PretrainOutcome {
    pub weights: ModelWeights,
    pub priors: PriorStats,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch training on the fully labeled source set. Returns the trained
/// weights, the source parameter statistics feeding the prior loss, and the
/// per-epoch loss trace. A non-finite loss aborts with a numerical error.
pub fn pretrain(
    topology: &SkeletonTopology,
    source: &[StreamFrame],
    model_config: ModelConfig,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    if source.is_empty() {
        return Err(Error::config("pretraining needs a non-empty source dataset"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::config("epochs and batch_size must be positive"));
    }
    if model_config.n_joints != topology.n_joints() {
        return Err(Error::dimension(format!(
            "model expects {} joints, topology has {}",
            model_config.n_joints,
            topology.n_joints()
        )));
    }
    let priors =
        PriorStats::estimate(source.iter().map(|f| {
            (f.truth.body.beta.as_slice(), f.truth.body.theta.as_slice())
        }))
        .expect("non-empty source");

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut weights = ModelWeights::init_random(model_config, seed)?;
    let mut adam_m = vec![0.0; weights.values.len()];
    let mut adam_v = vec![0.0; weights.values.len()];
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    let mut order: Vec<usize> = (0..source.len()).collect();
    for _ in 0..cfg.epochs {
        // Fisher-Yates with the run RNG keeps epochs reproducible.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&StreamFrame> = chunk.iter().map(|&i| &source[i]).collect();
            let mut batch_loss = 0.0;
            let grad = gradient(&weights, |_, model| {
                let mut outputs = Vec::with_capacity(batch.len());
                let mut targets = Vec::with_capacity(batch.len());
                for frame in &batch {
                    let pred = model.predict(&frame.input.obs)?;
                    outputs.push(run_pipeline(topology, pred)?);
                    targets.push(ExemplarTarget {
                        beta: &frame.truth.body.beta,
                        theta: &frame.truth.body.theta,
                        joints: &frame.truth.joints,
                        keypoints: &frame.input.gt2d,
                    });
                }
                let loss: Var = loss_exemplar(&outputs, &targets, &cfg.weights);
                batch_loss = loss.value();
                Ok(loss)
            })?;
            step += 1;
            if cfg.use_adam {
                let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
                let bc1 = 1.0 - b1.powi(step as i32);
                let bc2 = 1.0 - b2.powi(step as i32);
                for i in 0..weights.values.len() {
                    adam_m[i] = b1 * adam_m[i] + (1.0 - b1) * grad[i];
                    adam_v[i] = b2 * adam_v[i] + (1.0 - b2) * grad[i] * grad[i];
                    let m_hat = adam_m[i] / bc1;
                    let v_hat = adam_v[i] / bc2;
                    weights.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + eps);
                }
            } else {
                for i in 0..weights.values.len() {
                    weights.values[i] -= cfg.lr * grad[i];
                }
            }
            epoch_loss += batch_loss;
            n_batches += 1;
        }
        let mean = epoch_loss / n_batches as f64;
        if !mean.is_finite() {
            return Err(Error::numerical("pretrain epoch loss", format!("value {mean}")));
        }
        epoch_losses.push(mean);
    }

    Ok(PretrainOutcome {
        weights,
        priors,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::PRIOR_VAR_FLOOR;

    fn topo() -> SkeletonTopology {
        SkeletonTopology::default_human()
    }

    #[test]
    fn same_seed_reproduces_stream_bitwise() {
        let topology = topo();
        let cfg = DomainConfig::target_default();
        let a = generate_stream(&topology, &cfg, 50, 9).unwrap();
        let b = generate_stream(&topology, &cfg, 50, 9).unwrap();
        assert_eq!(stream_hash(&a), stream_hash(&b));
        assert_eq!(a, b);
        let c = generate_stream(&topology, &cfg, 50, 10).unwrap();
        assert_ne!(stream_hash(&a), stream_hash(&c));
    }

    #[test]
    fn zero_noise_keypoints_equal_exact_projection() {
        let topology = topo();
        let cfg = DomainConfig {
            noise_sigma: 0.0,
            occlusion_rate: 0.0,
            ..DomainConfig::target_default()
        };
        let frames = generate_stream(&topology, &cfg, 20, 3).unwrap();
        for f in &frames {
            let exact = project(&f.truth.camera, &f.truth.joints);
            for (a, b) in f.input.gt2d.points.iter().zip(&exact.points) {
                assert_eq!(a[0].to_bits(), b[0].to_bits());
                assert_eq!(a[1].to_bits(), b[1].to_bits());
            }
        }
    }

    #[test]
    fn source_bone_scale_mean_matches_config() {
        let topology = topo();
        let cfg = DomainConfig::source_default();
        let n = 10_000;
        let frames = generate_source(&topology, &cfg, n, 17).unwrap();
        // Bone scales are drawn once per sequence; average per-sequence draws.
        let n_seq = n / cfg.seq_len;
        let mut mean = 0.0;
        for s in 0..n_seq {
            let f = &frames[s * cfg.seq_len];
            mean += f.truth.body.beta.iter().sum::<f64>() / f.truth.body.beta.len() as f64;
        }
        mean /= n_seq as f64;
        // Per-sequence means of 14 iid draws have std bone_std / sqrt(14).
        let se = cfg.bone_std / (topology.n_bones() as f64).sqrt() / (n_seq as f64).sqrt();
        assert!(
            (mean - cfg.bone_mean).abs() <= 3.0 * se,
            "mean {mean} vs {} (se {se})",
            cfg.bone_mean
        );
    }

    #[test]
    fn zero_rates_produce_no_keyframes() {
        let topology = topo();
        let cfg = DomainConfig {
            occlusion_rate: 0.0,
            scene_change_rate: 0.0,
            sudden_rate: 0.0,
            ..DomainConfig::target_default()
        };
        let frames = generate_stream(&topology, &cfg, 300, 21).unwrap();
        assert!(frames.iter().all(|f| !f.is_keyframe));
        assert!(frames.iter().all(|f| f.input.visibility.iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn injected_burst_masks_exactly_its_frames() {
        let topology = topo();
        let cfg = DomainConfig {
            occlusion_rate: 0.0,
            scene_change_rate: 0.0,
            sudden_rate: 0.0,
            ..DomainConfig::target_default()
        };
        let schedule = StreamSchedule {
            occlusion_bursts: vec![(10, 3)],
            ..StreamSchedule::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frames =
            generate_stream_with_schedule(&topology, &cfg, &schedule, 20, &mut rng).unwrap();
        for (t, f) in frames.iter().enumerate() {
            let occluded = (10..13).contains(&t);
            let any_masked = f.input.visibility.iter().any(|&v| v == 0.0);
            assert_eq!(any_masked, occluded, "frame {t}");
            assert_eq!(f.is_keyframe, occluded, "frame {t}");
            if occluded {
                // Masked keypoints are zeroed in both gt2d and the observation.
                for (j, &v) in f.input.visibility.iter().enumerate() {
                    if v == 0.0 {
                        assert_eq!(f.input.gt2d.points[j], [0.0, 0.0]);
                        assert_eq!(f.input.obs.values[2 * j], 0.0);
                        assert_eq!(f.input.obs.values[2 * j + 1], 0.0);
                    }
                }
                let expected = ((cfg.occlusion_fraction * topology.n_joints() as f64).ceil())
                    as usize;
                let masked = f.input.visibility.iter().filter(|&&v| v == 0.0).count();
                assert_eq!(masked, expected);
            }
        }
    }

    #[test]
    fn keyframe_fraction_tracks_configured_rates() {
        let topology = topo();
        let cfg = DomainConfig {
            occlusion_rate: 0.03,
            occlusion_len: 3,
            scene_change_rate: 0.02,
            sudden_rate: 0.03,
            ..DomainConfig::target_default()
        };
        let n = 5000;
        let frames = generate_stream(&topology, &cfg, n, 5).unwrap();
        let got = frames.iter().filter(|f| f.is_keyframe).count() as f64 / n as f64;
        let expect = cfg.expected_keyframe_fraction();
        assert!(
            (got - expect).abs() <= 0.2 * expect,
            "keyframe fraction {got} vs expected {expect}"
        );
    }

    #[test]
    fn mixed_stream_marks_block_switches() {
        let topology = topo();
        let a = DomainConfig {
            occlusion_rate: 0.0,
            scene_change_rate: 0.0,
            sudden_rate: 0.0,
            ..DomainConfig::target_default()
        };
        let b = DomainConfig {
            scale_mean: 1.3,
            ..a.clone()
        };
        let frames = generate_mixed_stream(&topology, &a, &b, 25, 100, 8).unwrap();
        assert_eq!(frames.len(), 100);
        for (t, f) in frames.iter().enumerate() {
            let boundary = t > 0 && t % 25 == 0;
            assert_eq!(f.is_keyframe, boundary, "frame {t}");
        }
        // Blocks draw cameras from different scale distributions.
        let cam_a = frames[0].truth.camera.scale;
        let cam_b = frames[25].truth.camera.scale;
        assert_ne!(cam_a, cam_b);
    }

    #[test]
    fn pretrain_smoke_descends_quickly() {
        let topology = topo();
        let cfg = DomainConfig::source_default();
        let source = generate_source(&topology, &cfg, 100, 2).unwrap();
        let pre_cfg = PretrainConfig {
            epochs: 5,
            batch_size: 25,
            ..PretrainConfig::default()
        };
        let start = std::time::Instant::now();
        let out = pretrain(&topology, &source, ModelConfig::new(topology.n_joints()), &pre_cfg, 1)
            .unwrap();
        assert!(start.elapsed().as_secs_f64() < 10.0, "smoke run too slow");
        assert_eq!(out.epoch_losses.len(), 5);
        assert!(
            out.epoch_losses.last().unwrap() < out.epoch_losses.first().unwrap(),
            "loss did not decrease: {:?}",
            out.epoch_losses
        );
        assert_eq!(out.priors.beta_mean.len(), topology.n_bones());
        assert!(out.priors.beta_var.iter().all(|&v| v >= PRIOR_VAR_FLOOR));
    }

    #[test]
    fn pretrain_same_seed_is_bit_identical() {
        let topology = topo();
        let cfg = DomainConfig::source_default();
        let source = generate_source(&topology, &cfg, 60, 6).unwrap();
        let pre_cfg = PretrainConfig {
            epochs: 2,
            batch_size: 20,
            ..PretrainConfig::default()
        };
        let mk = || {
            pretrain(
                &topology,
                &source,
                ModelConfig::new(topology.n_joints()),
                &pre_cfg,
                3,
            )
            .unwrap()
        };
        let a = mk();
        let b = mk();
        for (x, y) in a.weights.values.iter().zip(&b.weights.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn config_validation_rejects_bad_rates() {
        let mut cfg = DomainConfig::target_default();
        cfg.occlusion_rate = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = DomainConfig::target_default();
        cfg.occlusion_fraction = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = DomainConfig::target_default();
        cfg.theta_limit = 2.5;
        assert!(cfg.validate().is_err());
    }
}
