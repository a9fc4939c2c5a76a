//! The adaptation objectives. All of them are built from squared L2 terms on
//! the differentiable pipeline `observation -> prediction -> forward
//! kinematics -> projection`, so they are exact under reverse-mode autodiff.
//!
//! - [`loss_frame`]: masked 2D reprojection error plus a diagonal
//!   Mahalanobis pull toward source parameter statistics.
//! - [`loss_motion`]: consistency between predicted and observed 2D motion
//!   across a fixed temporal gap.
//! - [`loss_teacher`]: consistency of the student's parameter vector with a
//!   frozen mean-teacher prediction (gradients flow into the student only).
//! - [`loss_temporal`]: the weighted motion + teacher combination.
//! - [`loss_exemplar`]: fully supervised loss on retrieved source exemplars,
//!   averaged over the batch.

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, project, Joints3D, Keypoints2D, SkeletonTopology,
};
use crate::model::Prediction;

/// Per-coordinate mean and variance of source-domain body parameters,
/// estimated once after pretraining. Variances carry a small floor so the
/// Mahalanobis term stays finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorStats {
    pub beta_mean: Vec<f64>,
    pub beta_var: Vec<f64>,
    pub theta_mean: Vec<f64>,
    pub theta_var: Vec<f64>,
}

pub const PRIOR_VAR_FLOOR: f64 = 1e-6;

impl PriorStats {
    /// Sample statistics over parameter rows; each row is one `(beta, theta)`
    /// pair from the source dataset.
    pub fn estimate<'a>(rows: impl Iterator<Item = (&'a [f64], &'a [f64])>) -> Option<Self> {
        let mut n = 0usize;
        let mut beta_sum: Vec<f64> = Vec::new();
        let mut beta_sq: Vec<f64> = Vec::new();
        let mut theta_sum: Vec<f64> = Vec::new();
        let mut theta_sq: Vec<f64> = Vec::new();
        for (beta, theta) in rows {
            if n == 0 {
                beta_sum = vec![0.0; beta.len()];
                beta_sq = vec![0.0; beta.len()];
                theta_sum = vec![0.0; theta.len()];
                theta_sq = vec![0.0; theta.len()];
            }
            for (i, &b) in beta.iter().enumerate() {
                beta_sum[i] += b;
                beta_sq[i] += b * b;
            }
            for (i, &t) in theta.iter().enumerate() {
                theta_sum[i] += t;
                theta_sq[i] += t * t;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let finish = |sum: Vec<f64>, sq: Vec<f64>| -> (Vec<f64>, Vec<f64>) {
            let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
            let var = sq
                .iter()
                .zip(&mean)
                .map(|(s, m)| (s / n as f64 - m * m).max(PRIOR_VAR_FLOOR))
                .collect();
            (mean, var)
        };
        let (beta_mean, beta_var) = finish(beta_sum, beta_sq);
        let (theta_mean, theta_var) = finish(theta_sum, theta_sq);
        Some(PriorStats {
            beta_mean,
            beta_var,
            theta_mean,
            theta_var,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut c = crate::cache::Container::new();
        c.put_f64("beta_mean", self.beta_mean.clone());
        c.put_f64("beta_var", self.beta_var.clone());
        c.put_f64("theta_mean", self.theta_mean.clone());
        c.put_f64("theta_var", self.theta_var.clone());
        c.save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let c = crate::cache::Container::load(path)?;
        Ok(PriorStats {
            beta_mean: c.f64("beta_mean")?.to_vec(),
            beta_var: c.f64("beta_var")?.to_vec(),
            theta_mean: c.f64("theta_mean")?.to_vec(),
            theta_var: c.f64("theta_var")?.to_vec(),
        })
    }
}

/// Weights of the individual loss terms. `mu*` weight the online objectives,
/// `lambda*` weight the supervised exemplar terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// 2D reprojection term.
    pub mu1: f64,
    /// Parameter prior (Mahalanobis) term.
    pub mu2: f64,
    /// Motion consistency term.
    pub mu3: f64,
    /// Teacher consistency term.
    pub mu4: f64,
    /// Exemplar bone-scale term.
    pub lambda1: f64,
    /// Exemplar pose term.
    pub lambda2: f64,
    /// Exemplar 3D joint term.
    pub lambda3: f64,
    /// Exemplar 2D keypoint term.
    pub lambda4: f64,
}

impl Default for LossWeights {
    /// Online-adaptation weighting. The exemplar lambdas lean on the pose
    /// term: retrieved labels share motion statistics with the stream but
    /// carry source geometry, so the bone/joint/keypoint terms get small
    /// weights to avoid dragging predictions back towards source scale.
    fn default() -> Self {
        LossWeights {
            mu1: 1.0,
            mu2: 0.1,
            mu3: 1.0,
            mu4: 0.85,
            lambda1: 0.02,
            lambda2: 0.15,
            lambda3: 0.02,
            lambda4: 0.02,
        }
    }
}

impl LossWeights {
    /// Equal weighting of the supervised terms, used when fitting against
    /// fully labeled data rather than retrieved exemplars.
    pub fn uniform_supervision() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 1.0,
            ..LossWeights::default()
        }
    }


    pub fn validate(&self) -> Result<()> {
        let all = [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu3", self.mu3),
            ("mu4", self.mu4),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ];
        for (name, v) in all {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::config(format!(
                    "loss weight {name} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// A prediction pushed through the rest of the pipeline: its 3D joints and
/// their weak-perspective projection under the predicted camera.
pub struct PipelineOutput<T: Scalar> {
    pub prediction: Prediction<T>,
    pub joints: Joints3D<T>,
    pub keypoints: Keypoints2D<T>,
}

pub fn run_pipeline<T: Scalar>(
    topology: &SkeletonTopology,
    prediction: Prediction<T>,
) -> Result<PipelineOutput<T>> {
    let joints = forward_kinematics(topology, &prediction.body)?;
    let keypoints = project(&prediction.camera, &joints);
    Ok(PipelineOutput {
        prediction,
        joints,
        keypoints,
    })
}

/// Masked squared reprojection error plus the prior term:
/// `mu1 * sum_visible |j - j_hat|^2 + mu2 * rho(beta, theta)` where `rho` is
/// the squared diagonal Mahalanobis distance to the source statistics.
/// With every keypoint masked only the prior term remains; that is a valid
/// (fully occluded) frame, not an error.
pub fn loss_frame<T: Scalar>(
    out: &PipelineOutput<T>,
    gt2d: &Keypoints2D,
    visibility: &[f64],
    priors: &PriorStats,
    w: &LossWeights,
) -> T {
    let mut reproj = T::zero();
    for ((pred, gt), &vis) in out
        .keypoints
        .points
        .iter()
        .zip(&gt2d.points)
        .zip(visibility)
    {
        if vis == 0.0 {
            continue;
        }
        let dx = pred[0] - T::constant(gt[0]);
        let dy = pred[1] - T::constant(gt[1]);
        reproj = reproj + T::constant(vis) * (dx.sq() + dy.sq());
    }
    let mut prior = T::zero();
    for ((b, m), v) in out
        .prediction
        .body
        .beta
        .iter()
        .zip(&priors.beta_mean)
        .zip(&priors.beta_var)
    {
        let d = *b - T::constant(*m);
        prior = prior + d.sq() * T::constant(1.0 / v);
    }
    for ((t, m), v) in out
        .prediction
        .body
        .theta
        .iter()
        .zip(&priors.theta_mean)
        .zip(&priors.theta_var)
    {
        let d = *t - T::constant(*m);
        prior = prior + d.sq() * T::constant(1.0 / v);
    }
    T::constant(w.mu1) * reproj + T::constant(w.mu2) * prior
}

/// Squared difference between predicted and ground-truth 2D displacement
/// over a temporal gap: `|(j_hat_t - j_hat_prev) - (j_t - j_prev)|^2`.
/// Adding one constant offset to both predictions leaves it unchanged.
pub fn loss_motion<T: Scalar>(
    pred_t: &Keypoints2D<T>,
    pred_prev: &Keypoints2D<T>,
    gt_t: &Keypoints2D,
    gt_prev: &Keypoints2D,
) -> T {
    let mut acc = T::zero();
    for (((pt, pp), gt), gp) in pred_t
        .points
        .iter()
        .zip(&pred_prev.points)
        .zip(&gt_t.points)
        .zip(&gt_prev.points)
    {
        for k in 0..2 {
            let d = (pt[k] - pp[k]) - T::constant(gt[k] - gp[k]);
            acc = acc + d.sq();
        }
    }
    acc
}

/// Squared distance between the student's flattened parameter vector and a
/// frozen teacher prediction. The teacher side enters as constants, so no
/// gradient reaches it.
pub fn loss_teacher<T: Scalar>(teacher_flat: &[f64], student: &Prediction<T>) -> T {
    let student_flat = student.flatten();
    debug_assert_eq!(teacher_flat.len(), student_flat.len());
    let mut acc = T::zero();
    for (s, t) in student_flat.iter().zip(teacher_flat) {
        let d = *s - T::constant(*t);
        acc = acc + d.sq();
    }
    acc
}

/// Weighted combination of the temporal terms: `mu3 * motion + mu4 * teacher`.
pub fn loss_temporal<T: Scalar>(motion: T, teacher: T, w: &LossWeights) -> T {
    T::constant(w.mu3) * motion + T::constant(w.mu4) * teacher
}

/// Ground-truth labels of one retrieved source exemplar.
pub struct ExemplarTarget<'a> {
    pub beta: &'a [f64],
    pub theta: &'a [f64],
    pub joints: &'a Joints3D,
    pub keypoints: &'a Keypoints2D,
}

/// Fully supervised loss on a batch of source exemplars, averaged over the
/// batch: `lambda1 |beta|^2 + lambda2 |theta|^2 + lambda3 |J|^2 +
/// lambda4 |j|^2` residuals against the stored labels. An empty batch
/// contributes exactly zero.
pub fn loss_exemplar<T: Scalar>(
    outputs: &[PipelineOutput<T>],
    targets: &[ExemplarTarget<'_>],
    w: &LossWeights,
) -> T {
    debug_assert_eq!(outputs.len(), targets.len());
    if outputs.is_empty() {
        return T::zero();
    }
    let mut total = T::zero();
    for (out, target) in outputs.iter().zip(targets) {
        let mut beta_term = T::zero();
        for (b, g) in out.prediction.body.beta.iter().zip(target.beta) {
            beta_term = beta_term + (*b - T::constant(*g)).sq();
        }
        let mut theta_term = T::zero();
        for (t, g) in out.prediction.body.theta.iter().zip(target.theta) {
            theta_term = theta_term + (*t - T::constant(*g)).sq();
        }
        let mut joint_term = T::zero();
        for (p, g) in out.joints.points.iter().zip(&target.joints.points) {
            for k in 0..3 {
                joint_term = joint_term + (p[k] - T::constant(g[k])).sq();
            }
        }
        let mut kp_term = T::zero();
        for (p, g) in out.keypoints.points.iter().zip(&target.keypoints.points) {
            for k in 0..2 {
                kp_term = kp_term + (p[k] - T::constant(g[k])).sq();
            }
        }
        total = total
            + T::constant(w.lambda1) * beta_term
            + T::constant(w.lambda2) * theta_term
            + T::constant(w.lambda3) * joint_term
            + T::constant(w.lambda4) * kp_term;
    }
    total * T::constant(1.0 / outputs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{BodyParams, CameraParams};
    use crate::model::{gradient, ModelConfig, ModelWeights, Observation};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn topo() -> SkeletonTopology {
        SkeletonTopology::default_human()
    }

    fn flat_priors(topology: &SkeletonTopology) -> PriorStats {
        PriorStats {
            beta_mean: vec![1.0; topology.n_bones()],
            beta_var: vec![1.0; topology.n_bones()],
            theta_mean: vec![0.0; 3 * topology.n_joints()],
            theta_var: vec![1.0; 3 * topology.n_joints()],
        }
    }

    fn pipeline_at(
        topology: &SkeletonTopology,
        body: BodyParams,
        camera: CameraParams,
    ) -> PipelineOutput<f64> {
        let feature = vec![0.0; 4];
        run_pipeline(
            topology,
            Prediction {
                body,
                camera,
                feature,
            },
        )
        .unwrap()
    }

    #[test]
    fn frame_loss_zero_at_exact_match_with_zero_prior_weight() {
        let topology = topo();
        let body = BodyParams::rest(&topology);
        let camera = CameraParams {
            scale: 1.0,
            trans: [0.0, 0.0],
        };
        let out = pipeline_at(&topology, body, camera);
        let gt = Keypoints2D {
            points: out.keypoints.points.clone(),
        };
        let vis = vec![1.0; topology.n_joints()];
        let w = LossWeights {
            mu2: 0.0,
            ..LossWeights::default()
        };
        let l = loss_frame(&out, &gt, &vis, &flat_priors(&topology), &w);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn frame_loss_counts_only_visible_keypoints() {
        let topology = topo();
        let out = pipeline_at(
            &topology,
            BodyParams::rest(&topology),
            CameraParams {
                scale: 1.0,
                trans: [0.0, 0.0],
            },
        );
        // Ground truth shifted by 1 in x for every keypoint.
        let gt = Keypoints2D {
            points: out.keypoints.points.iter().map(|p| [p[0] + 1.0, p[1]]).collect(),
        };
        let mut vis = vec![0.0; topology.n_joints()];
        vis[3] = 1.0;
        vis[7] = 1.0;
        let w = LossWeights {
            mu1: 1.0,
            mu2: 0.0,
            ..LossWeights::default()
        };
        let l = loss_frame(&out, &gt, &vis, &flat_priors(&topology), &w);
        assert!((l - 2.0).abs() < 1e-12, "loss {l}");
    }

    #[test]
    fn fully_masked_frame_returns_prior_term_only() {
        let topology = topo();
        let mut body = BodyParams::rest(&topology);
        body.beta[0] = 1.5; // 0.25 squared deviation at unit variance
        let out = pipeline_at(
            &topology,
            body,
            CameraParams {
                scale: 1.0,
                trans: [0.0, 0.0],
            },
        );
        let gt = Keypoints2D {
            points: vec![[100.0, 100.0]; topology.n_joints()],
        };
        let vis = vec![0.0; topology.n_joints()];
        let w = LossWeights {
            mu1: 1.0,
            mu2: 2.0,
            ..LossWeights::default()
        };
        let l = loss_frame(&out, &gt, &vis, &flat_priors(&topology), &w);
        assert!((l - 2.0 * 0.25).abs() < 1e-12, "loss {l}");
    }

    // Independent straight-line recomputation of the frame loss on a random
    // instance.
    #[test]
    fn frame_loss_matches_straight_line_recomputation() {
        let topology = topo();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let body = BodyParams {
                beta: (0..topology.n_bones()).map(|_| rng.gen_range(0.5..1.5)).collect(),
                theta: (0..3 * topology.n_joints())
                    .map(|_| rng.gen_range(-0.8..0.8))
                    .collect(),
            };
            let camera = CameraParams {
                scale: rng.gen_range(0.5..2.0),
                trans: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            };
            let priors = {
                let mut p = flat_priors(&topology);
                for v in p.beta_var.iter_mut().chain(p.theta_var.iter_mut()) {
                    *v = rng.gen_range(0.5..2.0);
                }
                p
            };
            let gt = Keypoints2D {
                points: (0..topology.n_joints())
                    .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                    .collect(),
            };
            let vis: Vec<f64> = (0..topology.n_joints())
                .map(|_| if rng.gen_bool(0.8) { 1.0 } else { 0.0 })
                .collect();
            let w = LossWeights::default();
            let out = pipeline_at(&topology, body.clone(), camera.clone());
            let got = loss_frame(&out, &gt, &vis, &priors, &w);

            // Oracle: recompute keypoints and both sums with independent code.
            let joints = forward_kinematics(&topology, &body).unwrap();
            let mut reproj = 0.0;
            for j in 0..topology.n_joints() {
                if vis[j] == 0.0 {
                    continue;
                }
                let px = camera.scale * joints.points[j][0] + camera.trans[0];
                let py = camera.scale * joints.points[j][1] + camera.trans[1];
                reproj += (px - gt.points[j][0]).powi(2) + (py - gt.points[j][1]).powi(2);
            }
            let mut prior = 0.0;
            for i in 0..body.beta.len() {
                prior += (body.beta[i] - priors.beta_mean[i]).powi(2) / priors.beta_var[i];
            }
            for i in 0..body.theta.len() {
                prior += (body.theta[i] - priors.theta_mean[i]).powi(2) / priors.theta_var[i];
            }
            let expect = w.mu1 * reproj + w.mu2 * prior;
            assert!((got - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn motion_loss_zero_when_displacements_match() {
        let kp = |pts: Vec<[f64; 2]>| Keypoints2D { points: pts };
        let pred_prev = kp(vec![[0.0, 0.0], [1.0, 1.0]]);
        let pred_t = kp(vec![[0.5, 0.0], [1.5, 1.0]]);
        let gt_prev = kp(vec![[10.0, 10.0], [11.0, 11.0]]);
        let gt_t = kp(vec![[10.5, 10.0], [11.5, 11.0]]);
        assert_eq!(loss_motion(&pred_t, &pred_prev, &gt_t, &gt_prev), 0.0);
    }

    #[test]
    fn motion_loss_invariant_to_shared_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mk = |rng: &mut ChaCha8Rng| Keypoints2D {
            points: (0..6)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect::<Vec<[f64; 2]>>(),
        };
        let pred_t = mk(&mut rng);
        let pred_prev = mk(&mut rng);
        let gt_t = mk(&mut rng);
        let gt_prev = mk(&mut rng);
        let base = loss_motion(&pred_t, &pred_prev, &gt_t, &gt_prev);
        let offset = [0.37, -0.81];
        let shift = |kp: &Keypoints2D| Keypoints2D {
            points: kp.points.iter().map(|p| [p[0] + offset[0], p[1] + offset[1]]).collect(),
        };
        let shifted = loss_motion(&shift(&pred_t), &shift(&pred_prev), &gt_t, &gt_prev);
        assert!((base - shifted).abs() <= 1e-10);
    }

    #[test]
    fn teacher_loss_zero_iff_equal_and_no_teacher_gradient() {
        let cfg = ModelConfig {
            n_joints: 3,
            nuisance_dim: 2,
            feature_dim: 4,
            encoder_hidden: vec![5],
            regressor_hidden: vec![5],
            positive_floor: 1e-3,
        };
        let student = ModelWeights::init_random(cfg.clone(), 1).unwrap();
        let obs = Observation {
            values: (0..cfg.obs_dim()).map(|i| 0.05 * i as f64).collect(),
        };
        let own = student.predict(&obs).unwrap().flatten();
        // Teacher identical to student: zero loss, zero gradient.
        let g = gradient(&student, |_, model| {
            let pred = model.predict(&obs)?;
            Ok(loss_teacher(&own, &pred))
        })
        .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        // Different teacher: loss positive.
        let teacher = ModelWeights::init_random(cfg, 2).unwrap();
        let tflat = teacher.predict(&obs).unwrap().flatten();
        let s = student.predict(&obs).unwrap();
        let l: f64 = loss_teacher(&tflat, &s);
        assert!(l > 0.0);
    }

    #[test]
    fn temporal_combination_is_weighted_sum() {
        let w = LossWeights {
            mu3: 2.0,
            mu4: 0.5,
            ..LossWeights::default()
        };
        assert_eq!(loss_temporal(3.0, 4.0, &w), 8.0);
    }

    #[test]
    fn exemplar_loss_empty_batch_is_zero() {
        let outs: Vec<PipelineOutput<f64>> = Vec::new();
        let targets: Vec<ExemplarTarget> = Vec::new();
        assert_eq!(loss_exemplar(&outs, &targets, &LossWeights::default()), 0.0);
    }

    #[test]
    fn exemplar_loss_zero_on_perfect_predictions() {
        let topology = topo();
        let body = BodyParams::rest(&topology);
        let camera = CameraParams {
            scale: 1.3,
            trans: [0.2, -0.1],
        };
        let out = pipeline_at(&topology, body.clone(), camera);
        let joints = out.joints.clone();
        let kps = out.keypoints.clone();
        let target = ExemplarTarget {
            beta: &body.beta,
            theta: &body.theta,
            joints: &joints,
            keypoints: &kps,
        };
        let l = loss_exemplar(&[out], &[target], &LossWeights::default());
        assert!(l.abs() < 1e-20);
    }

    // Independent recomputation of the exemplar loss, including the batch
    // mean, on random instances.
    #[test]
    fn exemplar_loss_matches_straight_line_recomputation() {
        let topology = topo();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mk_body = |rng: &mut ChaCha8Rng| BodyParams {
            beta: (0..topology.n_bones()).map(|_| rng.gen_range(0.5..1.5)).collect(),
            theta: (0..3 * topology.n_joints())
                .map(|_| rng.gen_range(-0.7..0.7))
                .collect(),
        };
        let w = LossWeights {
            lambda1: 0.7,
            lambda2: 1.3,
            lambda3: 0.9,
            lambda4: 2.0,
            ..LossWeights::default()
        };
        let k = 3;
        let mut outs = Vec::new();
        let mut target_data = Vec::new();
        for _ in 0..k {
            let pred_body = mk_body(&mut rng);
            let cam = CameraParams {
                scale: rng.gen_range(0.8..1.5),
                trans: [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
            };
            outs.push(pipeline_at(&topology, pred_body, cam));
            let gt_body = mk_body(&mut rng);
            let gt_joints = forward_kinematics(&topology, &gt_body).unwrap();
            let gt_kps = Keypoints2D {
                points: (0..topology.n_joints())
                    .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                    .collect(),
            };
            target_data.push((gt_body, gt_joints, gt_kps));
        }
        let targets: Vec<ExemplarTarget> = target_data
            .iter()
            .map(|(b, j, kp)| ExemplarTarget {
                beta: &b.beta,
                theta: &b.theta,
                joints: j,
                keypoints: kp,
            })
            .collect();
        let got = loss_exemplar(&outs, &targets, &w);

        let mut expect = 0.0;
        for (out, (b, j, kp)) in outs.iter().zip(&target_data) {
            let mut t1 = 0.0;
            for (a, g) in out.prediction.body.beta.iter().zip(&b.beta) {
                t1 += (a - g) * (a - g);
            }
            let mut t2 = 0.0;
            for (a, g) in out.prediction.body.theta.iter().zip(&b.theta) {
                t2 += (a - g) * (a - g);
            }
            let mut t3 = 0.0;
            for (a, g) in out.joints.points.iter().zip(&j.points) {
                for kk in 0..3 {
                    t3 += (a[kk] - g[kk]) * (a[kk] - g[kk]);
                }
            }
            let mut t4 = 0.0;
            for (a, g) in out.keypoints.points.iter().zip(&kp.points) {
                for kk in 0..2 {
                    t4 += (a[kk] - g[kk]) * (a[kk] - g[kk]);
                }
            }
            expect += w.lambda1 * t1 + w.lambda2 * t2 + w.lambda3 * t3 + w.lambda4 * t4;
        }
        expect /= k as f64;
        assert!((got - expect).abs() <= 1e-10 * expect.max(1.0));
    }

    proptest! {
        #[test]
        fn losses_are_non_negative(seed in 0u64..500) {
            let topology = topo();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let body = BodyParams {
                beta: (0..topology.n_bones()).map(|_| rng.gen_range(0.3..2.0)).collect(),
                theta: (0..3 * topology.n_joints()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let cam = CameraParams {
                scale: rng.gen_range(0.3..2.5),
                trans: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            };
            let out = pipeline_at(&topology, body, cam);
            let gt = Keypoints2D {
                points: (0..topology.n_joints())
                    .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
                    .collect(),
            };
            let vis: Vec<f64> = (0..topology.n_joints())
                .map(|_| if rng.gen_bool(0.7) { 1.0 } else { 0.0 })
                .collect();
            let w = LossWeights::default();
            prop_assert!(loss_frame(&out, &gt, &vis, &flat_priors(&topology), &w) >= 0.0);
            prop_assert!(loss_motion(&out.keypoints, &out.keypoints, &gt, &gt) >= 0.0);
        }
    }
}
