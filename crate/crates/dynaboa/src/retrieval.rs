//! Exemplar retrieval: a labeled source bank with precomputed encoder
//! features, spherical k-means clustering of those features, and two lookup
//! strategies — nearest-cluster sampling (cheap, the default) and a complete
//! scan over the whole bank (the reference baseline).
//!
//! All similarity is cosine similarity. The clustering objective is the sum
//! of cosine similarities between each feature and its assigned center; both
//! the assignment and the recentering step can only increase it, so the
//! per-iteration trace is non-decreasing.

use crate::cache::Container;
use crate::error::{Error, Result};
use crate::kinematics::{BodyParams, CameraParams, Joints3D, Keypoints2D};
use crate::losses::ExemplarTarget;
use crate::model::{ModelWeights, Observation};
use crate::stream::StreamFrame;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

/// One fully labeled source record available for exemplar guidance.
#[derive(Debug, Clone, PartialEq)]
pub struct BankRecord {
    pub obs: Observation,
    pub body: BodyParams,
    pub camera: CameraParams,
    pub joints: Joints3D,
    pub keypoints: Keypoints2D,
}

/// All source records plus their encoder features under the pretrained
/// weights. Immutable after build; concurrent reads are safe.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBank {
    pub records: Vec<BankRecord>,
    pub features: Vec<Vec<f64>>,
}

/// Result of clustering the bank features: unit-norm centers, the cluster of
/// every bank index, and a pre-sampled subset per cluster that online
/// retrieval draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub subsets: Vec<Vec<usize>>,
    /// Clustering objective (sum of cosines) after every iteration.
    pub objective_trace: Vec<f64>,
}

/// Indices of the records drawn for one adaptation step. `cluster` is the
/// chosen cluster, or `None` for the complete-scan baseline. `comparisons`
/// counts similarity evaluations spent answering the query.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarBatch {
    pub indices: Vec<usize>,
    pub cluster: Option<usize>,
    pub comparisons: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity with a zero-vector guard: any zero-norm operand gives
/// similarity 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

fn normalized(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    if n == 0.0 {
        return a.to_vec();
    }
    a.iter().map(|x| x / n).collect()
}

impl SourceBank {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    /// Loss-ready views of the records at `indices`.
    pub fn exemplar_targets(&self, indices: &[usize]) -> Vec<ExemplarTarget<'_>> {
        indices
            .iter()
            .map(|&i| {
                let r = &self.records[i];
                ExemplarTarget {
                    beta: &r.body.beta,
                    theta: &r.body.theta,
                    joints: &r.joints,
                    keypoints: &r.keypoints,
                }
            })
            .collect()
    }

    /// Bytes needed to keep one labeled record resident (labels and
    /// observation, excluding its feature vector).
    pub fn record_bytes(&self) -> usize {
        let r = &self.records[0];
        8 * (r.obs.values.len()
            + r.body.beta.len()
            + r.body.theta.len()
            + 3
            + 3 * r.joints.points.len()
            + 2 * r.keypoints.points.len())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.len();
        let r0 = &self.records[0];
        let dims = vec![
            n as u64,
            r0.obs.values.len() as u64,
            r0.body.beta.len() as u64,
            r0.body.theta.len() as u64,
            r0.joints.points.len() as u64,
            self.feature_dim() as u64,
        ];
        let mut obs = Vec::new();
        let mut beta = Vec::new();
        let mut theta = Vec::new();
        let mut camera = Vec::new();
        let mut joints = Vec::new();
        let mut keypoints = Vec::new();
        let mut features = Vec::new();
        for (r, f) in self.records.iter().zip(&self.features) {
            obs.extend_from_slice(&r.obs.values);
            beta.extend_from_slice(&r.body.beta);
            theta.extend_from_slice(&r.body.theta);
            camera.extend_from_slice(&[r.camera.scale, r.camera.trans[0], r.camera.trans[1]]);
            for p in &r.joints.points {
                joints.extend_from_slice(p);
            }
            for p in &r.keypoints.points {
                keypoints.extend_from_slice(p);
            }
            features.extend_from_slice(f);
        }
        let mut c = Container::new();
        c.put_u64("dims", dims)
            .put_f64("obs", obs)
            .put_f64("beta", beta)
            .put_f64("theta", theta)
            .put_f64("camera", camera)
            .put_f64("joints", joints)
            .put_f64("keypoints", keypoints)
            .put_f64("features", features);
        c.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::load(path)?;
        let dims = c.u64("dims")?;
        if dims.len() != 6 {
            return Err(Error::config("bank cache has malformed dims"));
        }
        let (n, obs_d, n_beta, n_theta, n_joints, feat_d) = (
            dims[0] as usize,
            dims[1] as usize,
            dims[2] as usize,
            dims[3] as usize,
            dims[4] as usize,
            dims[5] as usize,
        );
        let take = |name: &str, per: usize| -> Result<&[f64]> {
            let v = c.f64(name)?;
            if v.len() != n * per {
                return Err(Error::config(format!(
                    "bank cache section {name} has {} values, expected {}",
                    v.len(),
                    n * per
                )));
            }
            Ok(v)
        };
        let obs = take("obs", obs_d)?;
        let beta = take("beta", n_beta)?;
        let theta = take("theta", n_theta)?;
        let camera = take("camera", 3)?;
        let joints = take("joints", 3 * n_joints)?;
        let keypoints = take("keypoints", 2 * n_joints)?;
        let features = take("features", feat_d)?;
        let mut records = Vec::with_capacity(n);
        let mut feats = Vec::with_capacity(n);
        for i in 0..n {
            records.push(BankRecord {
                obs: Observation {
                    values: obs[i * obs_d..(i + 1) * obs_d].to_vec(),
                },
                body: BodyParams {
                    beta: beta[i * n_beta..(i + 1) * n_beta].to_vec(),
                    theta: theta[i * n_theta..(i + 1) * n_theta].to_vec(),
                },
                camera: CameraParams {
                    scale: camera[3 * i],
                    trans: [camera[3 * i + 1], camera[3 * i + 2]],
                },
                joints: Joints3D {
                    points: joints[3 * n_joints * i..3 * n_joints * (i + 1)]
                        .chunks(3)
                        .map(|p| [p[0], p[1], p[2]])
                        .collect(),
                },
                keypoints: Keypoints2D {
                    points: keypoints[2 * n_joints * i..2 * n_joints * (i + 1)]
                        .chunks(2)
                        .map(|p| [p[0], p[1]])
                        .collect(),
                },
            });
            feats.push(features[i * feat_d..(i + 1) * feat_d].to_vec());
        }
        Ok(SourceBank {
            records,
            features: feats,
        })
    }
}

/// Extracts the encoder feature of every source frame under `weights` and
/// packages the labels the exemplar loss needs.
pub fn build_bank(source: &[StreamFrame], weights: &ModelWeights) -> Result<SourceBank> {
    if source.is_empty() {
        return Err(Error::config("source bank needs at least one record"));
    }
    let mut records = Vec::with_capacity(source.len());
    let mut features = Vec::with_capacity(source.len());
    for f in source {
        features.push(weights.encode(&f.input.obs)?);
        records.push(BankRecord {
            obs: f.input.obs.clone(),
            body: f.truth.body.clone(),
            camera: f.truth.camera.clone(),
            joints: f.truth.joints.clone(),
            keypoints: f.input.gt2d.clone(),
        });
    }
    Ok(SourceBank { records, features })
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }

    /// Checks the structural invariants against a bank of `n_points` records:
    /// unit-norm centers, valid assignments, subset indices that belong to
    /// their own cluster.
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.assignments.len() != n_points {
            return Err(Error::config("cluster model does not match bank size"));
        }
        for c in &self.centers {
            if (norm(c) - 1.0).abs() > 1e-9 {
                return Err(Error::config("cluster center is not unit-norm"));
            }
        }
        if self.subsets.len() != self.centers.len() {
            return Err(Error::config("one subset per cluster required"));
        }
        for &a in &self.assignments {
            if a >= self.centers.len() {
                return Err(Error::config("assignment references missing cluster"));
            }
        }
        for (n, subset) in self.subsets.iter().enumerate() {
            for &i in subset {
                if i >= n_points || self.assignments[i] != n {
                    return Err(Error::config("subset index outside its cluster"));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let d = self.centers.first().map_or(0, |c| c.len());
        let mut centers = Vec::with_capacity(self.centers.len() * d);
        for c in &self.centers {
            centers.extend_from_slice(c);
        }
        let mut subsets = Vec::new();
        let mut subset_lens = Vec::with_capacity(self.subsets.len());
        for s in &self.subsets {
            subset_lens.push(s.len() as u64);
            subsets.extend(s.iter().map(|&i| i as u64));
        }
        let mut c = Container::new();
        c.put_u64(
            "dims",
            vec![
                self.centers.len() as u64,
                d as u64,
                self.assignments.len() as u64,
            ],
        )
        .put_f64("centers", centers)
        .put_u64("assignments", self.assignments.iter().map(|&a| a as u64).collect())
        .put_u64("subset_lens", subset_lens)
        .put_u64("subsets", subsets)
        .put_f64("objective_trace", self.objective_trace.clone());
        c.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::load(path)?;
        let dims = c.u64("dims")?;
        if dims.len() != 3 {
            return Err(Error::config("cluster cache has malformed dims"));
        }
        let (n_c, d, n_pts) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
        let centers_flat = c.f64("centers")?;
        if centers_flat.len() != n_c * d {
            return Err(Error::config("cluster cache centers length mismatch"));
        }
        let centers = centers_flat.chunks(d).map(|c| c.to_vec()).collect();
        let assignments: Vec<usize> = c.u64("assignments")?.iter().map(|&a| a as usize).collect();
        if assignments.len() != n_pts {
            return Err(Error::config("cluster cache assignments length mismatch"));
        }
        let lens = c.u64("subset_lens")?;
        let flat = c.u64("subsets")?;
        if lens.len() != n_c || lens.iter().sum::<u64>() as usize != flat.len() {
            return Err(Error::config("cluster cache subsets length mismatch"));
        }
        let mut subsets = Vec::with_capacity(n_c);
        let mut off = 0;
        for &l in lens {
            let l = l as usize;
            subsets.push(flat[off..off + l].iter().map(|&i| i as usize).collect());
            off += l;
        }
        Ok(ClusterModel {
            centers,
            assignments,
            subsets,
            objective_trace: c.f64("objective_trace")?.to_vec(),
        })
    }
}

/// k-means++ seeding on the normalized features: first center uniform, each
/// further center drawn with probability proportional to (1 - cos) distance
/// to the nearest already-chosen center.
fn kmeans_pp_init(points: &[Vec<f64>], n_clusters: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_clusters);
    let first = rng.gen_range(0..points.len());
    centers.push(points[first].clone());
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| (1.0 - dot(p, &centers[0])).max(0.0))
        .collect();
    while centers.len() < n_clusters {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // All remaining mass is zero (duplicate points); pick uniformly.
            rng.gen_range(0..points.len())
        };
        centers.push(points[pick].clone());
        let c = centers.last().unwrap();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((1.0 - dot(p, c)).max(0.0));
        }
    }
    centers
}

/// Clusters the bank features by spherical k-means and pre-samples a subset
/// of at most `subset_size` member indices per cluster.
///
/// The objective (sum of cosine similarities to the assigned center) is
/// recorded after every iteration and never decreases: reassignment picks
/// the best center for each point, and the normalized member mean is the
/// unit vector maximizing a cluster's similarity sum. An emptied cluster is
/// re-seeded to the point farthest from its current center.
pub fn spherical_kmeans(
    bank: &SourceBank,
    n_clusters: usize,
    max_iters: usize,
    subset_size: usize,
    seed: u64,
) -> Result<ClusterModel> {
    let n = bank.len();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::config(format!(
            "n_clusters must lie in 1..={n}, got {n_clusters}"
        )));
    }
    if subset_size == 0 || max_iters == 0 {
        return Err(Error::config("subset_size and max_iters must be positive"));
    }
    let points: Vec<Vec<f64>> = bank.features.iter().map(|f| normalized(f)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp_init(&points, n_clusters, &mut rng);
    let mut assignments: Vec<usize> = vec![usize::MAX; n];
    let mut trace: Vec<f64> = Vec::new();

    for _ in 0..max_iters {
        // Assign each point to its most similar center; ties keep the lowest
        // cluster index.
        let mut next: Vec<usize> = points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut best_sim = dot(p, &centers[0]);
                for (j, c) in centers.iter().enumerate().skip(1) {
                    let s = dot(p, c);
                    if s > best_sim {
                        best_sim = s;
                        best = j;
                    }
                }
                best
            })
            .collect();

        // Re-seed any emptied cluster to the point currently farthest from
        // its own center. The moved point's similarity rises to 1, so the
        // objective still cannot decrease.
        let mut counts = vec![0usize; n_clusters];
        for &a in &next {
            counts[a] += 1;
        }
        for cl in 0..n_clusters {
            if counts[cl] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[next[i]] > 1)
                .min_by(|&a, &b| {
                    dot(&points[a], &centers[next[a]])
                        .total_cmp(&dot(&points[b], &centers[next[b]]))
                })
                .ok_or_else(|| Error::config("cannot re-seed empty cluster"))?;
            centers[cl] = points[far].clone();
            counts[next[far]] -= 1;
            next[far] = cl;
            counts[cl] = 1;
        }

        let stable = next == assignments;
        assignments = next;

        // Recenter: normalized mean of the members maximizes the cluster's
        // similarity sum. A zero mean (perfectly cancelling members) keeps
        // the old unit center.
        let d = points[0].len();
        let mut sums = vec![vec![0.0; d]; n_clusters];
        for (p, &a) in points.iter().zip(&assignments) {
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            let nrm = norm(s);
            if nrm > 0.0 {
                *c = s.iter().map(|x| x / nrm).collect();
            }
        }

        let objective: f64 = points
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| dot(p, &centers[a]))
            .sum();
        if let Some(&prev) = trace.last() {
            debug_assert!(
                objective >= prev - 1e-9,
                "objective decreased: {prev} -> {objective}"
            );
        }
        trace.push(objective);
        if stable {
            break;
        }
    }

    // Pre-sample the per-cluster retrieval subsets.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, &a) in assignments.iter().enumerate() {
        members[a].push(i);
    }
    let subsets = members
        .iter()
        .map(|m| {
            let take = subset_size.min(m.len());
            let mut picked: Vec<usize> =
                index_sample(&mut rng, m.len(), take).iter().map(|i| m[i]).collect();
            picked.sort_unstable();
            picked
        })
        .collect();

    let model = ClusterModel {
        centers,
        assignments,
        subsets,
        objective_trace: trace,
    };
    model.validate(n)?;
    Ok(model)
}

/// Exact nearest cluster by cosine similarity. Returns the winning cluster
/// id and the number of similarity evaluations spent (always the number of
/// centers). Ties go to the lowest index; a zero-norm query is an error.
pub fn nearest_cluster(query: &[f64], clusters: &ClusterModel) -> Result<(usize, usize)> {
    if norm(query) == 0.0 {
        return Err(Error::numerical(
            "retrieval query",
            "zero-norm feature has no direction",
        ));
    }
    let mut best = 0;
    let mut best_sim = cosine(query, &clusters.centers[0]);
    for (j, c) in clusters.centers.iter().enumerate().skip(1) {
        let s = cosine(query, c);
        if s > best_sim {
            best_sim = s;
            best = j;
        }
    }
    Ok((best, clusters.n_clusters()))
}

/// Cluster-based retrieval: find the nearest cluster, then draw `k` records
/// uniformly without replacement from its pre-sampled subset. If the subset
/// holds fewer than `k` records the whole subset is returned.
pub fn retrieve(
    query: &[f64],
    clusters: &ClusterModel,
    bank: &SourceBank,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ExemplarBatch> {
    let (cluster, comparisons) = nearest_cluster(query, clusters)?;
    let subset = &clusters.subsets[cluster];
    debug_assert!(subset.iter().all(|&i| i < bank.len()));
    let take = k.min(subset.len());
    let indices = index_sample(rng, subset.len(), take)
        .iter()
        .map(|i| subset[i])
        .collect();
    Ok(ExemplarBatch {
        indices,
        cluster: Some(cluster),
        comparisons,
    })
}

/// Baseline: scan every bank feature and return the top `k` by cosine
/// similarity, best first; equal similarities rank the lower index first.
/// Spends exactly one similarity evaluation per bank record.
pub fn complete_retrieve(query: &[f64], bank: &SourceBank, k: usize) -> Result<ExemplarBatch> {
    if norm(query) == 0.0 {
        return Err(Error::numerical(
            "retrieval query",
            "zero-norm feature has no direction",
        ));
    }
    // Bounded insertion keeps the scan O(N_S * k) without a full sort.
    let mut top: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, f) in bank.features.iter().enumerate() {
        let s = cosine(query, f);
        let pos = top.partition_point(|&(ts, ti)| ts > s || (ts == s && ti < i));
        if pos < k {
            top.insert(pos, (s, i));
            top.truncate(k);
        }
    }
    Ok(ExemplarBatch {
        indices: top.into_iter().map(|(_, i)| i).collect(),
        cluster: None,
        comparisons: bank.len(),
    })
}

/// One strategy's measurements in the retrieval benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub strategy: &'static str,
    pub n_queries: usize,
    pub comparisons_per_query: f64,
    pub ms_per_query: f64,
    /// Bytes that must stay resident to serve queries: features (complete)
    /// or centers (clustered), plus the reachable labeled records.
    pub bytes_resident: u64,
    /// Number of labeled records reachable by the strategy.
    pub resident_records: usize,
}

/// Runs every query through both strategies and reports comparison counts,
/// mean wall time and resident memory. Results depend only on the inputs and
/// `seed`; timings are measured, everything else is exact.
pub fn benchmark_retrieval(
    bank: &SourceBank,
    clusters: &ClusterModel,
    queries: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<Vec<BenchmarkRow>> {
    if queries.is_empty() {
        return Err(Error::config("retrieval benchmark needs at least one query"));
    }
    let record = bank.record_bytes() as u64;
    let feat = 8 * bank.feature_dim() as u64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comparisons = 0usize;
    let start = Instant::now();
    for q in queries {
        let batch = retrieve(q, clusters, bank, k, &mut rng)?;
        comparisons += batch.comparisons;
    }
    let clustered_ms = start.elapsed().as_secs_f64() * 1e3 / queries.len() as f64;
    let subset_records: usize = clusters.subsets.iter().map(|s| s.len()).sum();
    let clustered = BenchmarkRow {
        strategy: "cluster",
        n_queries: queries.len(),
        comparisons_per_query: comparisons as f64 / queries.len() as f64,
        ms_per_query: clustered_ms,
        bytes_resident: clusters.n_clusters() as u64 * feat + subset_records as u64 * record,
        resident_records: subset_records,
    };

    let mut comparisons = 0usize;
    let start = Instant::now();
    for q in queries {
        let batch = complete_retrieve(q, bank, k)?;
        comparisons += batch.comparisons;
    }
    let complete_ms = start.elapsed().as_secs_f64() * 1e3 / queries.len() as f64;
    let complete = BenchmarkRow {
        strategy: "complete",
        n_queries: queries.len(),
        comparisons_per_query: comparisons as f64 / queries.len() as f64,
        ms_per_query: complete_ms,
        bytes_resident: bank.len() as u64 * (feat + record),
        resident_records: bank.len(),
    };

    Ok(vec![clustered, complete])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::SkeletonTopology;
    use crate::model::ModelConfig;
    use crate::stream::{generate_source, DomainConfig};

    fn tiny_bank(n: usize, seed: u64) -> (SourceBank, ModelWeights) {
        let topology = SkeletonTopology::default_human();
        let cfg = DomainConfig::source_default();
        let source = generate_source(&topology, &cfg, n, seed).unwrap();
        let weights =
            ModelWeights::init_random(ModelConfig::new(topology.n_joints()), seed).unwrap();
        (build_bank(&source, &weights).unwrap(), weights)
    }

    /// Bank whose features are handed in directly, for geometry tests.
    fn feature_bank(features: Vec<Vec<f64>>) -> SourceBank {
        let (bank, _) = tiny_bank(1, 0);
        let record = bank.records[0].clone();
        SourceBank {
            records: vec![record; features.len()],
            features,
        }
    }

    #[test]
    fn bank_features_equal_encoder_output() {
        let topology = SkeletonTopology::default_human();
        let cfg = DomainConfig::source_default();
        let source = generate_source(&topology, &cfg, 8, 3).unwrap();
        let weights =
            ModelWeights::init_random(ModelConfig::new(topology.n_joints()), 3).unwrap();
        let bank = build_bank(&source, &weights).unwrap();
        assert_eq!(bank.len(), 8);
        for (f, frame) in bank.features.iter().zip(&source) {
            let direct = weights.encode(&frame.input.obs).unwrap();
            assert_eq!(f, &direct);
        }
    }

    #[test]
    fn antipodal_blobs_recover_blob_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 6;
        let mut features = Vec::new();
        for sign in [1.0, -1.0] {
            for _ in 0..40 {
                let mut f = vec![0.0; d];
                f[0] = sign * 2.0;
                for x in f.iter_mut().skip(1) {
                    *x = rng.gen_range(-0.01..0.01);
                }
                features.push(f);
            }
        }
        let bank = feature_bank(features.clone());
        let model = spherical_kmeans(&bank, 2, 50, 128, 5).unwrap();

        // Closed-form oracle: the optimal center of each blob is the
        // normalized mean of its normalized members.
        for blob in [&features[..40], &features[40..]] {
            let mut mean = vec![0.0; d];
            for f in blob {
                let nf = normalized(f);
                for (m, x) in mean.iter_mut().zip(&nf) {
                    *m += x;
                }
            }
            let oracle = normalized(&mean);
            let angle = model
                .centers
                .iter()
                .map(|c| cosine(c, &oracle).clamp(-1.0, 1.0).acos())
                .fold(f64::INFINITY, f64::min);
            assert!(angle < 1e-6, "no center within 1e-6 rad of blob mean");
        }
        // The blobs are separated, so the two centers split them exactly.
        let a0 = model.assignments[0];
        assert!(model.assignments[..40].iter().all(|&a| a == a0));
        assert!(model.assignments[40..].iter().all(|&a| a != a0));
    }

    #[test]
    fn one_cluster_per_point_reaches_max_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let features: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let bank = feature_bank(features);
        let model = spherical_kmeans(&bank, 12, 30, 4, 9).unwrap();
        let objective = *model.objective_trace.last().unwrap();
        assert!(
            (objective - 12.0).abs() < 1e-9,
            "objective {objective} != point count"
        );
    }

    #[test]
    fn same_seed_reproduces_cluster_model() {
        let (bank, _) = tiny_bank(64, 7);
        let a = spherical_kmeans(&bank, 8, 40, 16, 3).unwrap();
        let b = spherical_kmeans(&bank, 8, 40, 16, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn objective_non_decreasing_and_centers_unit_over_random_builds() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..10 {
            let n = rng.gen_range(20..60);
            let d = rng.gen_range(3..9);
            let features: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let bank = feature_bank(features);
            let k = rng.gen_range(2..8.min(n));
            let model = spherical_kmeans(&bank, k, 25, 8, trial).unwrap();
            for w in model.objective_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "objective decreased: {w:?}");
            }
            for c in &model.centers {
                assert!((norm(c) - 1.0).abs() <= 1e-9);
            }
            model.validate(bank.len()).unwrap();
        }
    }

    #[test]
    fn nearest_cluster_is_fixed_point_on_centers() {
        let (bank, _) = tiny_bank(50, 4);
        let model = spherical_kmeans(&bank, 6, 30, 8, 1).unwrap();
        for (n, c) in model.centers.iter().enumerate() {
            let (id, comparisons) = nearest_cluster(c, &model).unwrap();
            assert_eq!(id, n);
            assert_eq!(comparisons, model.n_clusters());
        }
    }

    #[test]
    fn nearest_cluster_matches_brute_force_and_breaks_ties_low() {
        let (bank, _) = tiny_bank(60, 8);
        let model = spherical_kmeans(&bank, 7, 30, 8, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let q: Vec<f64> = (0..bank.feature_dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let (id, _) = nearest_cluster(&q, &model).unwrap();
            // Oracle: independent exhaustive argmax with the lowest-index
            // tie rule.
            let mut best = 0usize;
            for j in 1..model.n_clusters() {
                if cosine(&q, &model.centers[j]) > cosine(&q, &model.centers[best]) {
                    best = j;
                }
            }
            assert_eq!(id, best);
        }

        // Exact tie: centers 1 and 4 both at 45 degrees from the query.
        let d = 4;
        let mut centers = vec![
            vec![0.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, -1.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
        ];
        for c in &mut centers {
            c.resize(d, 0.0);
        }
        let tie_model = ClusterModel {
            centers,
            assignments: vec![0; 5],
            subsets: vec![vec![], vec![], vec![], vec![], vec![]],
            objective_trace: vec![],
        };
        let query = vec![1.0, 1.0, 0.0, 0.0];
        let (id, _) = nearest_cluster(&query, &tie_model).unwrap();
        assert_eq!(id, 1);
    }

    #[test]
    fn zero_norm_query_is_numerical_error() {
        let (bank, _) = tiny_bank(20, 1);
        let model = spherical_kmeans(&bank, 4, 20, 8, 1).unwrap();
        let zero = vec![0.0; bank.feature_dim()];
        assert!(matches!(
            nearest_cluster(&zero, &model),
            Err(Error::Numerical { .. })
        ));
        assert!(matches!(
            complete_retrieve(&zero, &bank, 3),
            Err(Error::Numerical { .. })
        ));
    }

    #[test]
    fn retrieve_draws_distinct_members_of_chosen_cluster() {
        let (bank, _) = tiny_bank(80, 12);
        let model = spherical_kmeans(&bank, 5, 30, 8, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..40 {
            let q = &bank.features[i];
            let batch = retrieve(q, &model, &bank, 4, &mut rng).unwrap();
            let cluster = batch.cluster.unwrap();
            assert_eq!(batch.comparisons, model.n_clusters());
            assert!(batch.indices.len() <= 4);
            let mut seen = batch.indices.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), batch.indices.len(), "duplicate draw");
            for &idx in &batch.indices {
                assert_eq!(model.assignments[idx], cluster);
                assert!(model.subsets[cluster].contains(&idx));
            }
        }
    }

    #[test]
    fn retrieve_with_k_equal_subset_returns_whole_subset() {
        let (bank, _) = tiny_bank(40, 13);
        let model = spherical_kmeans(&bank, 4, 30, 3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = &bank.features[0];
        let (cluster, _) = nearest_cluster(q, &model).unwrap();
        let k = model.subsets[cluster].len();
        let batch = retrieve(q, &model, &bank, k, &mut rng).unwrap();
        let mut got = batch.indices.clone();
        got.sort_unstable();
        assert_eq!(got, model.subsets[cluster]);
    }

    #[test]
    fn complete_retrieve_matches_full_sort_oracle() {
        let (bank, _) = tiny_bank(100, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..25 {
            let q: Vec<f64> = (0..bank.feature_dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let batch = complete_retrieve(&q, &bank, 7).unwrap();
            assert_eq!(batch.comparisons, bank.len());
            assert_eq!(batch.cluster, None);
            // Oracle: full sort by (similarity desc, index asc).
            let mut order: Vec<usize> = (0..bank.len()).collect();
            order.sort_by(|&a, &b| {
                cosine(&q, &bank.features[b])
                    .total_cmp(&cosine(&q, &bank.features[a]))
                    .then(a.cmp(&b))
            });
            assert_eq!(batch.indices, order[..7]);
        }
    }

    #[test]
    fn complete_retrieve_ranks_exact_match_first() {
        let (bank, _) = tiny_bank(30, 15);
        let batch = complete_retrieve(&bank.features[17], &bank, 3).unwrap();
        assert_eq!(batch.indices[0], 17);
    }

    #[test]
    fn bank_and_clusters_round_trip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (bank, _) = tiny_bank(25, 16);
        let model = spherical_kmeans(&bank, 4, 30, 8, 7).unwrap();
        let bank_path = dir.path().join("bank.bin");
        let cl_path = dir.path().join("clusters.bin");
        bank.save(&bank_path).unwrap();
        model.save(&cl_path).unwrap();
        let bank2 = SourceBank::load(&bank_path).unwrap();
        let model2 = ClusterModel::load(&cl_path).unwrap();
        assert_eq!(bank, bank2);
        assert_eq!(model, model2);
    }

    #[test]
    fn subset_storage_is_bounded() {
        let (bank, _) = tiny_bank(200, 17);
        let subset_size = 8;
        let n_clusters = 6;
        let model = spherical_kmeans(&bank, n_clusters, 30, subset_size, 3).unwrap();
        let total: usize = model.subsets.iter().map(|s| s.len()).sum();
        assert!(total <= n_clusters * subset_size);
        assert!(total < bank.len());
    }

    #[test]
    fn benchmark_counters_are_exact() {
        let (bank, _) = tiny_bank(120, 18);
        let model = spherical_kmeans(&bank, 6, 30, 8, 2).unwrap();
        let queries: Vec<Vec<f64>> = bank.features[..10].to_vec();
        let rows = benchmark_retrieval(&bank, &model, &queries, 4, 1).unwrap();
        assert_eq!(rows.len(), 2);
        let cluster = &rows[0];
        let complete = &rows[1];
        assert_eq!(cluster.strategy, "cluster");
        assert_eq!(cluster.comparisons_per_query, model.n_clusters() as f64);
        assert_eq!(complete.comparisons_per_query, bank.len() as f64);
        assert!(cluster.bytes_resident < complete.bytes_resident);
        assert_eq!(complete.resident_records, bank.len());
        let subset_total: usize = model.subsets.iter().map(|s| s.len()).sum();
        assert_eq!(cluster.resident_records, subset_total);
    }
}
