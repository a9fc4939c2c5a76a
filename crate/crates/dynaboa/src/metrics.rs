//! Evaluation metrics for reconstructed skeletons: root-aligned joint error,
//! Procrustes-aligned joint error, a surface-error analog over virtual bone
//! vertices, PCK/AUC over per-joint errors, and the depth-ambiguity
//! diagnostic pairing per-frame 2D and 3D errors.
//!
//! Conventions, pinned here once: root alignment subtracts joint 0 from both
//! skeletons; PCK counts errors strictly below the threshold; the AUC grid
//! has 31 evenly spaced thresholds including both 0 and the reference (so a
//! perfect reconstruction scores 30/31, since nothing is below threshold 0);
//! quantiles use the nearest-rank method on the ascending sort.

use crate::error::{Error, Result};
use crate::kinematics::{virtual_vertices, BodyParams, Joints3D, Keypoints2D, SkeletonTopology};
use nalgebra::{Matrix3, Vector3};

/// Per-joint Euclidean distances after subtracting the root (joint 0) from
/// both skeletons.
pub fn root_aligned_errors(pred: &Joints3D, gt: &Joints3D) -> Vec<f64> {
    debug_assert_eq!(pred.points.len(), gt.points.len());
    let (pr, gr) = (pred.points[0], gt.points[0]);
    pred.points
        .iter()
        .zip(&gt.points)
        .map(|(p, g)| {
            let d = [
                (p[0] - pr[0]) - (g[0] - gr[0]),
                (p[1] - pr[1]) - (g[1] - gr[1]),
                (p[2] - pr[2]) - (g[2] - gr[2]),
            ];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .collect()
}

/// Mean per-joint error after root alignment.
pub fn mpjpe(pred: &Joints3D, gt: &Joints3D) -> f64 {
    let e = root_aligned_errors(pred, gt);
    e.iter().sum::<f64>() / e.len() as f64
}

/// Mean per-joint error after the similarity transform (rotation, uniform
/// scale, translation) that minimizes the total squared error of pred onto
/// gt. Absorbs any global similarity difference between the two skeletons.
pub fn pa_mpjpe(pred: &Joints3D, gt: &Joints3D) -> f64 {
    debug_assert_eq!(pred.points.len(), gt.points.len());
    let n = pred.points.len() as f64;
    let mean = |pts: &Joints3D| {
        let mut m = Vector3::zeros();
        for p in &pts.points {
            m += Vector3::new(p[0], p[1], p[2]);
        }
        m / n
    };
    let (pm, gm) = (mean(pred), mean(gt));
    let mut cov = Matrix3::zeros();
    let mut var_p = 0.0;
    for (p, g) in pred.points.iter().zip(&gt.points) {
        let pc = Vector3::new(p[0], p[1], p[2]) - pm;
        let gc = Vector3::new(g[0], g[1], g[2]) - gm;
        cov += gc * pc.transpose();
        var_p += pc.norm_squared();
    }
    if var_p == 0.0 {
        // Degenerate: every pred point coincides, only translation helps.
        let e: f64 = gt
            .points
            .iter()
            .map(|g| (Vector3::new(g[0], g[1], g[2]) - gm).norm())
            .sum();
        return e / n;
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("3x3 svd");
    let v_t = svd.v_t.expect("3x3 svd");
    // Keep the alignment a proper rotation: if the raw solution reflects,
    // flip the direction of the smallest singular value.
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        let sv = &svd.singular_values;
        let mut k = 0;
        for i in 1..3 {
            if sv[i] < sv[k] {
                k = i;
            }
        }
        signs[k] = -1.0;
    }
    let rot = u * Matrix3::from_diagonal(&signs) * v_t;
    let trace: f64 = (0..3).map(|i| svd.singular_values[i] * signs[i]).sum();
    let scale = trace / var_p;
    let t = gm - scale * rot * pm;

    let mut err = 0.0;
    for (p, g) in pred.points.iter().zip(&gt.points) {
        let aligned = scale * rot * Vector3::new(p[0], p[1], p[2]) + t;
        err += (aligned - Vector3::new(g[0], g[1], g[2])).norm();
    }
    err / n
}

/// Mean root-aligned distance over virtual bone vertices — the surface-error
/// analog for a stick skeleton. Not Procrustes-aligned.
pub fn pve(
    pred: &BodyParams,
    gt: &BodyParams,
    topology: &SkeletonTopology,
    samples_per_bone: usize,
) -> Result<f64> {
    let pv = virtual_vertices(topology, pred, samples_per_bone)?;
    let gv = virtual_vertices(topology, gt, samples_per_bone)?;
    // The root (joint 0) sits at the origin for both parameter sets, so the
    // vertices are already root-aligned.
    let e: f64 = pv
        .points
        .iter()
        .zip(&gv.points)
        .map(|(p, g)| {
            ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt()
        })
        .sum();
    Ok(e / pv.points.len() as f64)
}

/// Mean distance over visible keypoints; frames with nothing visible score 0.
pub fn reproj_error(pred: &Keypoints2D, gt: &Keypoints2D, visibility: &[f64]) -> f64 {
    let mut err = 0.0;
    let mut n = 0usize;
    for ((p, g), &v) in pred.points.iter().zip(&gt.points).zip(visibility) {
        if v != 0.0 {
            err += ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        err / n as f64
    }
}

/// `n` evenly spaced thresholds from 0 to `max` inclusive.
pub fn threshold_grid(max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least both endpoints");
    (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
}

/// Number of grid points in the AUC threshold sweep.
pub const AUC_GRID: usize = 31;

/// PCK at the reference threshold (fraction of errors strictly below it) and
/// AUC (mean PCK over [`AUC_GRID`] thresholds from 0 to the reference).
pub fn pck_auc(errors: &[f64], reference: f64) -> Result<(f64, f64)> {
    if errors.is_empty() {
        return Err(Error::config("pck needs at least one error value"));
    }
    if reference <= 0.0 {
        return Err(Error::config("pck reference threshold must be positive"));
    }
    let pck_at = |t: f64| errors.iter().filter(|&&e| e < t).count() as f64 / errors.len() as f64;
    let grid = threshold_grid(reference, AUC_GRID);
    let auc = grid.iter().map(|&t| pck_at(t)).sum::<f64>() / grid.len() as f64;
    Ok((pck_at(reference), auc))
}

/// Nearest-rank quantile: the element at ascending rank ceil(p * n).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Depth-ambiguity diagnostic over per-frame (2D error, 3D error) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySummary {
    pub median_2d: f64,
    pub q75_3d: f64,
    /// Frames whose 2D error is strictly below the median while their 3D
    /// error reaches the top quartile — good reprojection hiding a bad pose.
    pub ambiguous: usize,
    pub n_frames: usize,
}

pub fn ambiguity_scatter(pairs: &[(f64, f64)]) -> Result<AmbiguitySummary> {
    if pairs.is_empty() {
        return Err(Error::config("ambiguity scatter needs at least one frame"));
    }
    let mut e2: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut e3: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    e2.sort_by(f64::total_cmp);
    e3.sort_by(f64::total_cmp);
    let median_2d = quantile(&e2, 0.5);
    let q75_3d = quantile(&e3, 0.75);
    let ambiguous = pairs
        .iter()
        .filter(|(a, b)| *a < median_2d && *b >= q75_3d)
        .count();
    Ok(AmbiguitySummary {
        median_2d,
        q75_3d,
        ambiguous,
        n_frames: pairs.len(),
    })
}

/// One frame's evaluation results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pve: f64,
    pub reproj_2d: f64,
}

/// Aggregates over a run: means and population stds of the per-frame
/// metrics, PCK/AUC over the pooled per-joint errors, and the ambiguity
/// count.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub n_frames: usize,
    pub mean_mpjpe: f64,
    pub std_mpjpe: f64,
    pub mean_pa_mpjpe: f64,
    pub std_pa_mpjpe: f64,
    pub mean_pve: f64,
    pub std_pve: f64,
    pub mean_reproj_2d: f64,
    pub pck: f64,
    pub auc: f64,
    pub ambiguous_frames: usize,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summarizes a run. `joint_errors` are the pooled root-aligned per-joint
/// errors feeding PCK/AUC; `reference` is the PCK threshold.
pub fn summarize(
    frames: &[FrameMetrics],
    joint_errors: &[f64],
    reference: f64,
) -> Result<MetricSummary> {
    if frames.is_empty() {
        return Err(Error::config("metric summary needs at least one frame"));
    }
    let (mean_mpjpe, std_mpjpe) = mean_std(frames.iter().map(|f| f.mpjpe));
    let (mean_pa_mpjpe, std_pa_mpjpe) = mean_std(frames.iter().map(|f| f.pa_mpjpe));
    let (mean_pve, std_pve) = mean_std(frames.iter().map(|f| f.pve));
    let (mean_reproj_2d, _) = mean_std(frames.iter().map(|f| f.reproj_2d));
    let (pck, auc) = pck_auc(joint_errors, reference)?;
    let pairs: Vec<(f64, f64)> = frames.iter().map(|f| (f.reproj_2d, f.mpjpe)).collect();
    let ambiguous_frames = ambiguity_scatter(&pairs)?.ambiguous;
    Ok(MetricSummary {
        n_frames: frames.len(),
        mean_mpjpe,
        std_mpjpe,
        mean_pa_mpjpe,
        std_pa_mpjpe,
        mean_pve,
        std_pve,
        mean_reproj_2d,
        pck,
        auc,
        ambiguous_frames,
    })
}
