//! Articulated skeleton stand-in: a parent-indexed bone tree, forward
//! kinematics with per-bone length scales, and weak-perspective projection.
//!
//! Conventions, fixed for the whole crate:
//! - Joint 0 is the root and sits at the origin; there is no global
//!   translation in 3D. Bone `i` connects `parent(i)` to joint `i` (i >= 1),
//!   so a skeleton with `J` joints has `J - 1` bones.
//! - Per-joint rotations use Euler angles in X-Y-Z order: the local rotation
//!   matrix is `Rx(ax) * Ry(ay) * Rz(az)` acting on column vectors.
//! - A joint's rotation moves the bones emanating from it: the offset of a
//!   child is rotated by the accumulated rotation of its parent chain,
//!   including the parent's own angles but not the child's.
//! - Projection is weak-perspective: `(x, y, z) -> scale * (x, y) + trans`.
//!   Depth is dropped, which is exactly what makes monocular lifting
//!   ambiguous and adaptation on 2D evidence risky.

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// Bone tree plus rest-pose offsets. `parents[0]` is `None`; every other
/// joint's parent index is smaller than its own, so iterating in index order
/// is a valid topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    parents: Vec<Option<usize>>,
    rest_offsets: Vec<[f64; 3]>,
}

impl SkeletonTopology {
    pub fn new(parents: Vec<Option<usize>>, rest_offsets: Vec<[f64; 3]>) -> Result<Self> {
        if parents.is_empty() {
            return Err(Error::config("topology must contain at least the root joint"));
        }
        if parents.len() != rest_offsets.len() {
            return Err(Error::dimension(format!(
                "topology has {} parents but {} offsets",
                parents.len(),
                rest_offsets.len()
            )));
        }
        if parents[0].is_some() {
            return Err(Error::config("joint 0 must be the root (no parent)"));
        }
        for (j, parent) in parents.iter().enumerate().skip(1) {
            match parent {
                None => {
                    return Err(Error::config(format!("joint {j} lacks a parent; only joint 0 is the root")))
                }
                Some(p) if *p >= j => {
                    return Err(Error::config(format!(
                        "joint {j} has parent {p}; parents must precede children"
                    )))
                }
                _ => {}
            }
            let o = rest_offsets[j];
            if o[0] == 0.0 && o[1] == 0.0 && o[2] == 0.0 {
                return Err(Error::config(format!("joint {j} has a zero rest offset")));
            }
        }
        Ok(SkeletonTopology {
            parents,
            rest_offsets,
        })
    }

    pub fn n_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn n_bones(&self) -> usize {
        self.parents.len() - 1
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn rest_offset(&self, joint: usize) -> [f64; 3] {
        self.rest_offsets[joint]
    }

    /// Human-like tree: pelvis root, spine, head, two three-bone arms off the
    /// spine and two three-bone legs off the pelvis. 15 joints, 14 bones.
    pub fn default_human() -> Self {
        let table = [
            (None, [0.0, 0.0, 0.0]),          // 0 pelvis
            (Some(0), [0.0, 0.40, 0.0]),      // 1 spine
            (Some(1), [0.0, 0.25, 0.0]),      // 2 head
            (Some(1), [0.20, 0.15, 0.0]),     // 3 left shoulder
            (Some(3), [0.28, 0.0, 0.0]),      // 4 left elbow
            (Some(4), [0.25, 0.0, 0.0]),      // 5 left wrist
            (Some(1), [-0.20, 0.15, 0.0]),    // 6 right shoulder
            (Some(6), [-0.28, 0.0, 0.0]),     // 7 right elbow
            (Some(7), [-0.25, 0.0, 0.0]),     // 8 right wrist
            (Some(0), [0.12, -0.05, 0.0]),    // 9 left hip
            (Some(9), [0.0, -0.45, 0.0]),     // 10 left knee
            (Some(10), [0.0, -0.45, 0.0]),    // 11 left ankle
            (Some(0), [-0.12, -0.05, 0.0]),   // 12 right hip
            (Some(12), [0.0, -0.45, 0.0]),    // 13 right knee
            (Some(13), [0.0, -0.45, 0.0]),    // 14 right ankle
        ];
        let parents = table.iter().map(|(p, _)| *p).collect();
        let offsets = table.iter().map(|(_, o)| *o).collect();
        SkeletonTopology::new(parents, offsets).expect("built-in topology is valid")
    }

    /// Joint positions in the rest pose (all angles zero, all bone scales 1).
    pub fn rest_joints(&self) -> Vec<[f64; 3]> {
        let mut pos = vec![[0.0; 3]; self.n_joints()];
        for j in 1..self.n_joints() {
            let p = self.parents[j].unwrap();
            let o = self.rest_offsets[j];
            pos[j] = [pos[p][0] + o[0], pos[p][1] + o[1], pos[p][2] + o[2]];
        }
        pos
    }

    /// Vertical extent of the rest pose, used to scale PCK thresholds. Falls
    /// back to the total bone length for degenerate (flat) chains.
    pub fn rest_height(&self) -> f64 {
        let joints = self.rest_joints();
        let (min, max) = joints
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[1]), hi.max(p[1]))
            });
        let extent = max - min;
        if extent > 0.0 {
            extent
        } else {
            self.rest_offsets
                .iter()
                .map(|o| (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt())
                .sum()
        }
    }

    /// Parses the plain-text table format: one line per joint holding
    /// `joint_index parent_index offset_x offset_y offset_z`, parent -1 for
    /// the root, `#` comments and blank lines ignored. Joints must appear in
    /// index order.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut parents = Vec::new();
        let mut offsets = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(Error::config(format!(
                    "topology line {}: expected 5 fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| Error::config(format!("topology line {}: bad joint index", lineno + 1)))?;
            if idx != parents.len() {
                return Err(Error::config(format!(
                    "topology line {}: joint {} out of order (expected {})",
                    lineno + 1,
                    idx,
                    parents.len()
                )));
            }
            let parent: i64 = fields[1]
                .parse()
                .map_err(|_| Error::config(format!("topology line {}: bad parent index", lineno + 1)))?;
            parents.push(if parent < 0 { None } else { Some(parent as usize) });
            let mut o = [0.0; 3];
            for (k, f) in fields[2..].iter().enumerate() {
                o[k] = f
                    .parse()
                    .map_err(|_| Error::config(format!("topology line {}: bad offset", lineno + 1)))?;
            }
            offsets.push(o);
        }
        SkeletonTopology::new(parents, offsets)
    }

    /// Inverse of [`SkeletonTopology::parse_table`].
    pub fn to_table(&self) -> String {
        let mut out = String::from("# joint parent offset_x offset_y offset_z\n");
        for j in 0..self.n_joints() {
            let parent = self.parents[j].map(|p| p as i64).unwrap_or(-1);
            let o = self.rest_offsets[j];
            out.push_str(&format!("{} {} {} {} {}\n", j, parent, o[0], o[1], o[2]));
        }
        out
    }
}

/// Shape (per-bone length scales) and pose (per-joint Euler angles).
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams<T = f64> {
    /// One multiplicative length scale per bone; `beta[i - 1]` scales the
    /// bone ending at joint `i`. All entries must stay positive.
    pub beta: Vec<T>,
    /// Euler angles, three per joint, laid out `[x0, y0, z0, x1, y1, z1, ..]`.
    pub theta: Vec<T>,
}

/// Weak-perspective camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraParams<T = f64> {
    pub scale: T,
    pub trans: [T; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joints3D<T = f64> {
    pub points: Vec<[T; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoints2D<T = f64> {
    pub points: Vec<[T; 2]>,
}

/// Surface stand-in: evenly spaced samples along each bone.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualVertices<T = f64> {
    pub points: Vec<[T; 3]>,
}

type Mat3<T> = [[T; 3]; 3];

fn mat_mul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn mat_vec<T: Scalar>(a: &Mat3<T>, v: &[T; 3]) -> [T; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn euler_xyz<T: Scalar>(ax: T, ay: T, az: T) -> Mat3<T> {
    let (zero, one) = (T::zero(), T::constant(1.0));
    let (sx, cx) = (ax.sin(), ax.cos());
    let (sy, cy) = (ay.sin(), ay.cos());
    let (sz, cz) = (az.sin(), az.cos());
    let rx = [[one, zero, zero], [zero, cx, -sx], [zero, sx, cx]];
    let ry = [[cy, zero, sy], [zero, one, zero], [-sy, zero, cy]];
    let rz = [[cz, -sz, zero], [sz, cz, zero], [zero, zero, one]];
    mat_mul(&rx, &mat_mul(&ry, &rz))
}

/// Places every joint by accumulating rotated, scaled bone offsets down the
/// tree. The root stays at the origin.
pub fn forward_kinematics<T: Scalar>(
    topology: &SkeletonTopology,
    params: &BodyParams<T>,
) -> Result<Joints3D<T>> {
    let n = topology.n_joints();
    if params.beta.len() != topology.n_bones() {
        return Err(Error::dimension(format!(
            "expected {} bone scales, found {}",
            topology.n_bones(),
            params.beta.len()
        )));
    }
    if params.theta.len() != 3 * n {
        return Err(Error::dimension(format!(
            "expected {} angles, found {}",
            3 * n,
            params.theta.len()
        )));
    }
    let mut positions = vec![[T::zero(); 3]; n];
    let mut rotations: Vec<Mat3<T>> = Vec::with_capacity(n);
    rotations.push(euler_xyz(params.theta[0], params.theta[1], params.theta[2]));
    for j in 1..n {
        let p = topology.parent(j).unwrap();
        let rest = topology.rest_offset(j);
        let scale = params.beta[j - 1];
        let offset = [
            scale * T::constant(rest[0]),
            scale * T::constant(rest[1]),
            scale * T::constant(rest[2]),
        ];
        let rotated = mat_vec(&rotations[p], &offset);
        positions[j] = [
            positions[p][0] + rotated[0],
            positions[p][1] + rotated[1],
            positions[p][2] + rotated[2],
        ];
        let local = euler_xyz(
            params.theta[3 * j],
            params.theta[3 * j + 1],
            params.theta[3 * j + 2],
        );
        let global = mat_mul(&rotations[p], &local);
        rotations.push(global);
    }
    Ok(Joints3D { points: positions })
}

/// Weak-perspective projection of every joint; depth is discarded.
pub fn project<T: Scalar>(camera: &CameraParams<T>, joints: &Joints3D<T>) -> Keypoints2D<T> {
    let points = joints
        .points
        .iter()
        .map(|p| {
            [
                camera.scale * p[0] + camera.trans[0],
                camera.scale * p[1] + camera.trans[1],
            ]
        })
        .collect();
    Keypoints2D { points }
}

/// `samples_per_bone` evenly spaced points on each bone segment, at fractions
/// `m / samples_per_bone` for `m = 1..=samples_per_bone`, so the last sample
/// of every bone coincides with its child joint.
pub fn virtual_vertices<T: Scalar>(
    topology: &SkeletonTopology,
    params: &BodyParams<T>,
    samples_per_bone: usize,
) -> Result<VirtualVertices<T>> {
    if samples_per_bone == 0 {
        return Err(Error::config("samples_per_bone must be at least 1"));
    }
    let joints = forward_kinematics(topology, params)?;
    let mut points = Vec::with_capacity(topology.n_bones() * samples_per_bone);
    for j in 1..topology.n_joints() {
        let p = topology.parent(j).unwrap();
        let a = joints.points[p];
        let b = joints.points[j];
        for m in 1..=samples_per_bone {
            let t = T::constant(m as f64 / samples_per_bone as f64);
            points.push([
                a[0] + t * (b[0] - a[0]),
                a[1] + t * (b[1] - a[1]),
                a[2] + t * (b[2] - a[2]),
            ]);
        }
    }
    Ok(VirtualVertices { points })
}

impl BodyParams<f64> {
    /// Rest configuration for `topology`: unit bone scales, zero angles.
    pub fn rest(topology: &SkeletonTopology) -> Self {
        BodyParams {
            beta: vec![1.0; topology.n_bones()],
            theta: vec![0.0; 3 * topology.n_joints()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain3() -> SkeletonTopology {
        // 0 -> 1 -> 2, unit offsets along +x.
        SkeletonTopology::new(
            vec![None, Some(0), Some(1)],
            vec![[0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
        )
        .unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn rest_pose_accumulates_offsets() {
        let topo = chain3();
        let joints = forward_kinematics(&topo, &BodyParams::rest(&topo)).unwrap();
        assert_eq!(joints.points, vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
    }

    #[test]
    fn bone_scales_stretch_individual_bones() {
        let topo = chain3();
        let params = BodyParams {
            beta: vec![2.0, 0.5],
            theta: vec![0.0; 9],
        };
        let joints = forward_kinematics(&topo, &params).unwrap();
        assert_eq!(joints.points[1], [2.0, 0.0, 0.0]);
        assert_eq!(joints.points[2], [2.5, 0.0, 0.0]);
    }

    #[test]
    fn root_z_rotation_turns_whole_chain() {
        let topo = chain3();
        let mut params = BodyParams::rest(&topo);
        params.theta[2] = std::f64::consts::FRAC_PI_2;
        let joints = forward_kinematics(&topo, &params).unwrap();
        let expect = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 2.0, 0.0]];
        for (got, want) in joints.points.iter().zip(expect) {
            for k in 0..3 {
                assert_close(got[k], want[k], 1e-12);
            }
        }
    }

    // Independent check of the rotation convention: build the global
    // rotation of each joint by explicit 3x3 matrix composition and place
    // joints manually.
    #[test]
    fn fk_matches_explicit_matrix_composition() {
        fn rot(ax: f64, ay: f64, az: f64) -> [[f64; 3]; 3] {
            let (sx, cx) = (ax.sin(), ax.cos());
            let (sy, cy) = (ay.sin(), ay.cos());
            let (sz, cz) = (az.sin(), az.cos());
            let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
            let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
            let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
            let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
                let mut m = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        for (k, brow) in b.iter().enumerate() {
                            m[i][j] += a[i][k] * brow[j];
                        }
                    }
                }
                m
            };
            mul(rx, mul(ry, rz))
        }

        let topo = SkeletonTopology::default_human();
        let angles: Vec<f64> = (0..3 * topo.n_joints())
            .map(|i| ((i * 37 + 11) % 17) as f64 * 0.07 - 0.5)
            .collect();
        let betas: Vec<f64> = (0..topo.n_bones()).map(|i| 0.8 + 0.03 * i as f64).collect();
        let params = BodyParams {
            beta: betas.clone(),
            theta: angles.clone(),
        };
        let got = forward_kinematics(&topo, &params).unwrap();

        let mut pos = vec![[0.0f64; 3]; topo.n_joints()];
        let mut rots = vec![[[0.0f64; 3]; 3]; topo.n_joints()];
        rots[0] = rot(angles[0], angles[1], angles[2]);
        for j in 1..topo.n_joints() {
            let p = topo.parent(j).unwrap();
            let o = topo.rest_offset(j);
            let s = betas[j - 1];
            let v = [s * o[0], s * o[1], s * o[2]];
            for i in 0..3 {
                pos[j][i] =
                    pos[p][i] + rots[p][i][0] * v[0] + rots[p][i][1] * v[1] + rots[p][i][2] * v[2];
            }
            let local = rot(angles[3 * j], angles[3 * j + 1], angles[3 * j + 2]);
            let mut g = [[0.0; 3]; 3];
            for i in 0..3 {
                for jj in 0..3 {
                    for (k, lrow) in local.iter().enumerate() {
                        g[i][jj] += rots[p][i][k] * lrow[jj];
                    }
                }
            }
            rots[j] = g;
        }
        for (a, b) in got.points.iter().zip(&pos) {
            for k in 0..3 {
                assert_close(a[k], b[k], 1e-12);
            }
        }
    }

    #[test]
    fn projection_is_scale_and_shift() {
        let cam = CameraParams {
            scale: 2.0,
            trans: [0.5, -1.0],
        };
        let joints = Joints3D {
            points: vec![[1.0, 2.0, 3.0]],
        };
        assert_eq!(project(&cam, &joints).points, vec![[2.5, 3.0]]);
    }

    #[test]
    fn projection_drops_depth_bitwise() {
        let cam = CameraParams {
            scale: 1.7,
            trans: [0.3, 0.9],
        };
        let a = Joints3D {
            points: vec![[0.4, -0.2, 5.0], [1.0, 1.0, -3.0]],
        };
        let mut b = a.clone();
        b.points[0][2] = -11.0;
        b.points[1][2] = 0.125;
        let pa = project(&cam, &a);
        let pb = project(&cam, &b);
        for (x, y) in pa.points.iter().zip(&pb.points) {
            assert_eq!(x[0].to_bits(), y[0].to_bits());
            assert_eq!(x[1].to_bits(), y[1].to_bits());
        }
    }

    #[test]
    fn virtual_vertices_single_sample_hits_child_joints() {
        let topo = chain3();
        let params = BodyParams::rest(&topo);
        let vv = virtual_vertices(&topo, &params, 1).unwrap();
        let joints = forward_kinematics(&topo, &params).unwrap();
        assert_eq!(vv.points, vec![joints.points[1], joints.points[2]]);
    }

    #[test]
    fn virtual_vertices_two_samples_include_midpoints() {
        let topo = chain3();
        let params = BodyParams::rest(&topo);
        let vv = virtual_vertices(&topo, &params, 2).unwrap();
        assert_eq!(
            vv.points,
            vec![
                [0.5, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.5, 0.0, 0.0],
                [2.0, 0.0, 0.0]
            ]
        );
    }

    // Vertices of a rotated bone must lie on the parametric line between its
    // endpoint joints: p(t) = parent + t * (child - parent).
    #[test]
    fn virtual_vertices_lie_on_bone_lines() {
        let topo = SkeletonTopology::default_human();
        let mut params = BodyParams::rest(&topo);
        for (i, a) in params.theta.iter_mut().enumerate() {
            *a = ((i * 13 + 5) % 11) as f64 * 0.09 - 0.4;
        }
        let m = 3;
        let joints = forward_kinematics(&topo, &params).unwrap();
        let vv = virtual_vertices(&topo, &params, m).unwrap();
        let mut idx = 0;
        for j in 1..topo.n_joints() {
            let p = topo.parent(j).unwrap();
            for s in 1..=m {
                let t = s as f64 / m as f64;
                for k in 0..3 {
                    let expect =
                        joints.points[p][k] + t * (joints.points[j][k] - joints.points[p][k]);
                    assert_close(vv.points[idx][k], expect, 1e-12);
                }
                idx += 1;
            }
        }
        assert_eq!(idx, vv.points.len());
    }

    #[test]
    fn table_round_trip_and_validation() {
        let topo = SkeletonTopology::default_human();
        let parsed = SkeletonTopology::parse_table(&topo.to_table()).unwrap();
        assert_eq!(parsed, topo);

        assert!(SkeletonTopology::parse_table("0 -1 0 0 0\n1 2 1 0 0\n").is_err());
        assert!(SkeletonTopology::parse_table("0 -1 0 0 0\n1 0 0 0 0\n").is_err());
        assert!(SkeletonTopology::parse_table("0 0 0 0 0\n").is_err());
    }

    #[test]
    fn rest_height_spans_head_to_ankle() {
        let topo = SkeletonTopology::default_human();
        let h = topo.rest_height();
        assert!((h - 1.60).abs() < 1e-12, "height {h}");
    }

    #[test]
    fn param_length_checks() {
        let topo = chain3();
        let bad_beta = BodyParams {
            beta: vec![1.0],
            theta: vec![0.0; 9],
        };
        assert!(forward_kinematics(&topo, &bad_beta).is_err());
        let bad_theta = BodyParams {
            beta: vec![1.0, 1.0],
            theta: vec![0.0; 8],
        };
        assert!(forward_kinematics(&topo, &bad_theta).is_err());
    }

    proptest! {
        // Scaling every bone by c scales every joint position by c.
        #[test]
        fn fk_is_homogeneous_in_bone_scale(c in 0.1f64..3.0, seed in 0u64..1000) {
            let topo = SkeletonTopology::default_human();
            let mut params = BodyParams::rest(&topo);
            for (i, a) in params.theta.iter_mut().enumerate() {
                *a = (((seed as usize + i) * 29 % 13) as f64) * 0.08 - 0.5;
            }
            let base = forward_kinematics(&topo, &params).unwrap();
            let scaled_params = BodyParams {
                beta: params.beta.iter().map(|b| b * c).collect(),
                theta: params.theta.clone(),
            };
            let scaled = forward_kinematics(&topo, &scaled_params).unwrap();
            for (a, b) in base.points.iter().zip(&scaled.points) {
                for k in 0..3 {
                    prop_assert!((a[k] * c - b[k]).abs() < 1e-9);
                }
            }
        }

        // Shifting all joints post-hoc commutes with projection up to the
        // scaled shift: project(p + t) = project(p) + scale * (tx, ty).
        #[test]
        fn projection_commutes_with_translation(
            tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0, s in 0.2f64..3.0
        ) {
            let topo = SkeletonTopology::default_human();
            let joints = forward_kinematics(&topo, &BodyParams::rest(&topo)).unwrap();
            let shifted = Joints3D {
                points: joints.points.iter().map(|p| [p[0] + tx, p[1] + ty, p[2] + tz]).collect(),
            };
            let cam = CameraParams { scale: s, trans: [0.1, -0.6] };
            let a = project(&cam, &joints);
            let b = project(&cam, &shifted);
            for (pa, pb) in a.points.iter().zip(&b.points) {
                prop_assert!((pa[0] + s * tx - pb[0]).abs() < 1e-9);
                prop_assert!((pa[1] + s * ty - pb[1]).abs() < 1e-9);
            }
        }

        // Adding a post-hoc root translation shifts every joint equally.
        #[test]
        fn post_hoc_root_shift_is_uniform(tx in -1.0f64..1.0, ty in -1.0f64..1.0, tz in -1.0f64..1.0) {
            let topo = SkeletonTopology::default_human();
            let joints = forward_kinematics(&topo, &BodyParams::rest(&topo)).unwrap();
            let shifted: Vec<[f64; 3]> = joints.points.iter()
                .map(|p| [p[0] + tx, p[1] + ty, p[2] + tz])
                .collect();
            for (orig, s) in joints.points.iter().zip(&shifted) {
                prop_assert!((s[0] - orig[0] - tx).abs() < 1e-12);
                prop_assert!((s[1] - orig[1] - ty).abs() < 1e-12);
                prop_assert!((s[2] - orig[2] - tz).abs() < 1e-12);
            }
        }
    }
}
