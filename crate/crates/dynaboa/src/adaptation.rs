//! Online adaptation schemes, from a plain per-frame gradient step to the
//! full bilevel procedure with exemplar guidance and feature-distance-driven
//! refinement.
//!
//! Scheme catalogue (`Scheme`):
//! - `no-adapt`: inference only, the frozen pretrained model.
//! - `baseline-single`: one committed step on the frame loss at rate alpha.
//! - `B1`/`B2`/`B3`: one committed step at rate eta on the temporal loss,
//!   the frame loss, or their sum.
//! - `B4`/`B5`/`B6`: two committed steps — frame loss at alpha, then the
//!   temporal loss / frame loss / their sum at eta.
//! - `B7`/`B8`/`BOA`: bilevel — a probe step on the frame loss at alpha,
//!   then the upper gradient (temporal / frame / both) is evaluated at the
//!   probe weights but applied to the pre-probe weights at eta. This is the
//!   first-order shortcut for differentiating through the probe: the probe's
//!   own dependence on the weights is not differentiated.
//! - `DynaBOA`: `BOA` plus exemplar guidance in both optimization steps plus
//!   the dynamic refinement loop.
//!
//! A mean-teacher copy of the weights trails the student by an exponential
//! moving average and anchors the consistency part of the temporal loss.
//! Within one frame the teacher is the previous frame's (the update runs
//! after the frame's steps), so the consistency target never chases the
//! weights being optimized; teacher outputs enter losses as constants.

use crate::error::{Error, Result};
use crate::kinematics::SkeletonTopology;
use crate::losses::{
    loss_exemplar, loss_frame, loss_motion, loss_teacher, loss_temporal, run_pipeline,
    LossWeights, PriorStats,
};
use crate::metrics::{self, FrameMetrics};
use crate::model::{gradient, sgd_step, ModelWeights, Prediction};
use crate::retrieval::{complete_retrieve, retrieve, ClusterModel, SourceBank};
use crate::stream::{FrameInput, StreamFrame};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

/// Adaptation scheme identifiers. See the module docs for what each does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    NoAdapt,
    BaselineSingle,
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
    Boa,
    DynaBoa,
}

impl Scheme {
    /// Every scheme, in ablation-table order.
    pub fn all() -> [Scheme; 12] {
        [
            Scheme::NoAdapt,
            Scheme::BaselineSingle,
            Scheme::B1,
            Scheme::B2,
            Scheme::B3,
            Scheme::B4,
            Scheme::B5,
            Scheme::B6,
            Scheme::B7,
            Scheme::B8,
            Scheme::Boa,
            Scheme::DynaBoa,
        ]
    }

    pub fn id(&self) -> &'static str {
        match self {
            Scheme::NoAdapt => "no-adapt",
            Scheme::BaselineSingle => "baseline-single",
            Scheme::B1 => "B1",
            Scheme::B2 => "B2",
            Scheme::B3 => "B3",
            Scheme::B4 => "B4",
            Scheme::B5 => "B5",
            Scheme::B6 => "B6",
            Scheme::B7 => "B7",
            Scheme::B8 => "B8",
            Scheme::Boa => "BOA",
            Scheme::DynaBoa => "DynaBOA",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        for scheme in Scheme::all() {
            if lower == scheme.id().to_ascii_lowercase() {
                return Ok(scheme);
            }
        }
        Err(Error::config(format!(
            "unknown scheme '{s}'; valid ids: {}",
            Scheme::all().map(|s| s.id()).join(", ")
        )))
    }
}

/// Which bank lookup the exemplar steps use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalStrategy {
    /// Nearest cluster, then a draw from its pre-sampled subset.
    Cluster,
    /// Top-K scan over the whole bank.
    Complete,
}

impl fmt::Display for RetrievalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RetrievalStrategy::Cluster => "cluster",
            RetrievalStrategy::Complete => "complete",
        })
    }
}

impl FromStr for RetrievalStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cluster" => Ok(RetrievalStrategy::Cluster),
            "complete" => Ok(RetrievalStrategy::Complete),
            _ => Err(Error::config(format!(
                "unknown retrieval strategy '{s}'; valid: cluster, complete"
            ))),
        }
    }
}

/// Full parametrization of one adaptation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Learning rate of the probe / first committed stage.
    pub alpha: f64,
    /// Learning rate of the final committed step (and refinements).
    pub eta: f64,
    /// Teacher EMA rate; 1 freezes the teacher, 0 copies the student.
    pub gamma: f64,
    /// Motion-loss frame gap; frames earlier than `tau` get no motion term.
    pub tau: usize,
    /// Feature-distance threshold driving the refinement loop.
    pub epsilon: f64,
    /// Refinement step cap per frame.
    pub max_refine: usize,
    /// How many times the per-frame update block (steps + teacher EMA) runs.
    pub repeats: usize,
    /// Global-norm bound on every update gradient. Degenerate frames (heavy
    /// occlusion, post-jump poses) can spike the gradient by orders of
    /// magnitude; uncapped, one such step throws the encoder into saturation
    /// and the run never recovers. Inactive in the normal regime.
    pub clip_norm: f64,
    /// Adds the exemplar loss to every optimization step. `None` keeps the
    /// scheme default (on only for DynaBOA).
    pub exemplar_guidance: Option<bool>,
    /// Runs the refinement loop after the per-frame block. `None` keeps the
    /// scheme default (on only for DynaBOA).
    pub dynamic_refine: Option<bool>,
    pub retrieval: RetrievalStrategy,
    /// Exemplars per retrieval.
    pub k_exemplars: usize,
    pub weights: LossWeights,
    /// Virtual vertices per bone in the reported surface error.
    pub pve_samples: usize,
    pub seed: u64,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme) -> Self {
        SchemeConfig {
            scheme,
            alpha: 2e-3,
            eta: 1e-3,
            gamma: 0.99,
            tau: 2,
            epsilon: 7.7e-5,
            max_refine: 6,
            repeats: 1,
            clip_norm: 5.0,
            exemplar_guidance: None,
            dynamic_refine: None,
            retrieval: RetrievalStrategy::Complete,
            k_exemplars: 4,
            weights: LossWeights::default(),
            pve_samples: 3,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("eta", self.eta), ("epsilon", self.epsilon)] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1]"));
        }
        if !(self.clip_norm > 0.0) || !self.clip_norm.is_finite() {
            return Err(Error::config("clip_norm must be finite and > 0"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if self.tau == 0 {
            return Err(Error::config("tau must be at least 1"));
        }
        if self.k_exemplars == 0 {
            return Err(Error::config("k_exemplars must be at least 1"));
        }
        if self.pve_samples == 0 {
            return Err(Error::config("pve_samples must be at least 1"));
        }
        self.weights.validate()
    }

    pub fn uses_exemplars(&self) -> bool {
        self.exemplar_guidance
            .unwrap_or(self.scheme == Scheme::DynaBoa)
    }

    pub fn uses_refine(&self) -> bool {
        self.dynamic_refine
            .unwrap_or(self.scheme == Scheme::DynaBoa)
    }
}

/// Shared read-only retrieval structures for exemplar guidance.
#[derive(Clone, Copy)]
pub struct RetrievalContext<'a> {
    pub bank: &'a SourceBank,
    pub clusters: &'a ClusterModel,
}

/// Mutable state of one adaptation run.
pub struct AdapterState {
    /// Student weights, updated every frame.
    pub weights: ModelWeights,
    /// Teacher weights, the EMA trail of the student.
    pub teacher: ModelWeights,
    /// Probe weights of the most recent bilevel step; diagnostic only, the
    /// committed update never aliases them.
    pub last_probe: Option<ModelWeights>,
    /// Frames processed so far.
    pub t: usize,
    pub rng: ChaCha8Rng,
}

impl AdapterState {
    /// Starts a run with the teacher initialized to the student.
    pub fn new(weights: ModelWeights, seed: u64) -> Self {
        AdapterState {
            teacher: weights.clone(),
            weights,
            last_probe: None,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// 1 − cosine similarity, clamped into [0, 2]. Bit-equal inputs give exactly
/// 0; a zero-norm operand (no direction) gives 1 unless both are zero.
pub fn feature_distance(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    (1.0 - crate::retrieval::cosine(a, b)).clamp(0.0, 2.0)
}

/// One exponential-moving-average step of the teacher toward the student.
pub fn ema_update(teacher: &ModelWeights, student: &ModelWeights, gamma: f64) -> ModelWeights {
    debug_assert_eq!(teacher.values.len(), student.values.len());
    let values = teacher
        .values
        .iter()
        .zip(&student.values)
        .map(|(w, p)| gamma * w + (1.0 - gamma) * p)
        .collect();
    ModelWeights {
        config: teacher.config.clone(),
        values,
    }
}

/// Loss terms entering one optimization step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TermSet {
    frame: bool,
    temporal: bool,
    exemplar: bool,
}

impl TermSet {
    const F: TermSet = TermSet {
        frame: true,
        temporal: false,
        exemplar: false,
    };
    const T: TermSet = TermSet {
        frame: false,
        temporal: true,
        exemplar: false,
    };
    const FT: TermSet = TermSet {
        frame: true,
        temporal: true,
        exemplar: false,
    };

    fn with_exemplar(mut self, on: bool) -> TermSet {
        self.exemplar = self.exemplar || on;
        self
    }
}

/// Learning rate a committed stage resolves to.
#[derive(Debug, Clone, Copy)]
enum StageLr {
    Alpha,
    Eta,
}

impl StageLr {
    fn resolve(self, cfg: &SchemeConfig) -> f64 {
        match self {
            StageLr::Alpha => cfg.alpha,
            StageLr::Eta => cfg.eta,
        }
    }
}

/// Per-frame update structure of a scheme.
enum Plan {
    NoUpdate,
    Single(TermSet, StageLr),
    Sequential([(TermSet, StageLr); 2]),
    Bilevel { lower: TermSet, upper: TermSet },
}

fn plan_for(cfg: &SchemeConfig) -> Plan {
    let ex = cfg.uses_exemplars();
    let f = TermSet::F.with_exemplar(ex);
    let t = TermSet::T.with_exemplar(ex);
    let ft = TermSet::FT.with_exemplar(ex);
    match cfg.scheme {
        Scheme::NoAdapt => Plan::NoUpdate,
        Scheme::BaselineSingle => Plan::Single(f, StageLr::Alpha),
        Scheme::B1 => Plan::Single(t, StageLr::Eta),
        Scheme::B2 => Plan::Single(f, StageLr::Eta),
        Scheme::B3 => Plan::Single(ft, StageLr::Eta),
        Scheme::B4 => Plan::Sequential([(f, StageLr::Alpha), (t, StageLr::Eta)]),
        Scheme::B5 => Plan::Sequential([(f, StageLr::Alpha), (f, StageLr::Eta)]),
        Scheme::B6 => Plan::Sequential([(f, StageLr::Alpha), (ft, StageLr::Eta)]),
        Scheme::B7 => Plan::Bilevel { lower: f, upper: t },
        Scheme::B8 => Plan::Bilevel { lower: f, upper: f },
        Scheme::Boa | Scheme::DynaBoa => Plan::Bilevel { lower: f, upper: ft },
    }
}

/// Loss values of one optimization step, recorded at its evaluation point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLosses {
    pub frame: f64,
    pub motion: f64,
    pub teacher: f64,
    pub exemplar: f64,
    pub total: f64,
}

/// Everything a single gradient step needs to see. Deliberately holds only
/// observable frame data — ground truth cannot reach the update path.
struct FrameCtx<'a> {
    topology: &'a SkeletonTopology,
    input: &'a FrameInput,
    prev: Option<&'a FrameInput>,
    motion_active: bool,
    priors: &'a PriorStats,
    retrieval: Option<RetrievalContext<'a>>,
    cfg: &'a SchemeConfig,
}

/// Gradient of the selected loss terms at `eval_at`, plus the component
/// values. `teacher_flat` is the teacher's flattened prediction on the
/// current frame (a constant); `exemplar_ids` the retrieved bank rows.
fn loss_gradient(
    ctx: &FrameCtx,
    eval_at: &ModelWeights,
    terms: TermSet,
    teacher_flat: Option<&[f64]>,
    exemplar_ids: Option<&[usize]>,
) -> Result<(Vec<f64>, StepLosses)> {
    let mut comps = StepLosses::default();
    let grad = gradient(eval_at, |_, model| {
        let pred = model.predict(&ctx.input.obs)?;
        let out = run_pipeline(ctx.topology, pred)?;
        let mut total = crate::autodiff::Var::constant(0.0);
        if terms.frame {
            let lf = loss_frame(
                &out,
                &ctx.input.gt2d,
                &ctx.input.visibility,
                ctx.priors,
                &ctx.cfg.weights,
            );
            comps.frame = lf.value();
            total = total + lf;
        }
        if terms.temporal {
            let motion = if ctx.motion_active {
                let prev = ctx.prev.expect("motion_active implies a reference frame");
                let pred_prev = model.predict(&prev.obs)?;
                let out_prev = run_pipeline(ctx.topology, pred_prev)?;
                loss_motion(&out.keypoints, &out_prev.keypoints, &ctx.input.gt2d, &prev.gt2d)
            } else {
                crate::autodiff::Var::constant(0.0)
            };
            let teach = loss_teacher(
                teacher_flat.expect("temporal term needs the teacher prediction"),
                &out.prediction,
            );
            comps.motion = motion.value();
            comps.teacher = teach.value();
            total = total + loss_temporal(motion, teach, &ctx.cfg.weights);
        }
        if terms.exemplar {
            let ids = exemplar_ids.expect("exemplar term needs retrieved indices");
            let bank = ctx.retrieval.expect("validated at run start").bank;
            let targets = bank.exemplar_targets(ids);
            let mut outs = Vec::with_capacity(ids.len());
            for &i in ids {
                let p = model.predict(&bank.records[i].obs)?;
                outs.push(run_pipeline(ctx.topology, p)?);
            }
            let ls = loss_exemplar(&outs, &targets, &ctx.cfg.weights);
            comps.exemplar = ls.value();
            total = total + ls;
        }
        comps.total = total.value();
        Ok(total)
    })?;
    Ok((grad, comps))
}

/// Retrieves the exemplar batch for a step whose losses are evaluated at
/// `eval_at` (the query feature comes from that model's encoder).
fn stage_exemplars(
    ctx: &FrameCtx,
    eval_at: &ModelWeights,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let r = ctx.retrieval.expect("validated at run start");
    let query = eval_at.encode(&ctx.input.obs)?;
    let batch = match ctx.cfg.retrieval {
        RetrievalStrategy::Cluster => {
            retrieve(&query, r.clusters, r.bank, ctx.cfg.k_exemplars, rng)?
        }
        RetrievalStrategy::Complete => complete_retrieve(&query, r.bank, ctx.cfg.k_exemplars)?,
    };
    Ok(batch.indices)
}

/// Teacher's flattened prediction on the current frame, if the stage needs
/// the temporal term.
fn teacher_reference(
    ctx: &FrameCtx,
    teacher: &ModelWeights,
    terms: TermSet,
) -> Result<Option<Vec<f64>>> {
    if terms.temporal {
        Ok(Some(teacher.predict(&ctx.input.obs)?.flatten()))
    } else {
        Ok(None)
    }
}

/// Rescales `grad` to `limit` when its l2 norm exceeds it.
fn clip_gradient(grad: &mut [f64], limit: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > limit {
        let s = limit / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
}

/// One committed gradient step on `state.weights`.
fn committed_step(
    ctx: &FrameCtx,
    state: &mut AdapterState,
    terms: TermSet,
    lr: f64,
) -> Result<StepLosses> {
    let teacher_flat = teacher_reference(ctx, &state.teacher, terms)?;
    let ids = if terms.exemplar {
        Some(stage_exemplars(ctx, &state.weights, &mut state.rng)?)
    } else {
        None
    };
    let (mut grad, losses) = loss_gradient(
        ctx,
        &state.weights,
        terms,
        teacher_flat.as_deref(),
        ids.as_deref(),
    )?;
    clip_gradient(&mut grad, ctx.cfg.clip_norm);
    state.weights = sgd_step(&state.weights, &grad, lr)?;
    Ok(losses)
}

/// The bilevel update: probe at alpha on the lower terms, upper gradient
/// evaluated at the probe but applied to the pre-probe weights at eta.
fn bilevel_step(
    ctx: &FrameCtx,
    state: &mut AdapterState,
    lower: TermSet,
    upper: TermSet,
) -> Result<StepLosses> {
    let lower_ids = if lower.exemplar {
        Some(stage_exemplars(ctx, &state.weights, &mut state.rng)?)
    } else {
        None
    };
    let lower_teacher = teacher_reference(ctx, &state.teacher, lower)?;
    let (mut lower_grad, _) = loss_gradient(
        ctx,
        &state.weights,
        lower,
        lower_teacher.as_deref(),
        lower_ids.as_deref(),
    )?;
    clip_gradient(&mut lower_grad, ctx.cfg.clip_norm);
    let probe = sgd_step(&state.weights, &lower_grad, ctx.cfg.alpha)?;

    let upper_ids = if upper.exemplar {
        Some(stage_exemplars(ctx, &probe, &mut state.rng)?)
    } else {
        None
    };
    let upper_teacher = teacher_reference(ctx, &state.teacher, upper)?;
    let (mut upper_grad, losses) = loss_gradient(
        ctx,
        &probe,
        upper,
        upper_teacher.as_deref(),
        upper_ids.as_deref(),
    )?;
    clip_gradient(&mut upper_grad, ctx.cfg.clip_norm);
    state.weights = sgd_step(&state.weights, &upper_grad, ctx.cfg.eta)?;
    state.last_probe = Some(probe);
    Ok(losses)
}

/// Runs the scheme's update block `repeats` times (each block ends with the
/// teacher EMA), then the refinement loop if enabled. Returns the last
/// step's losses, the feature distance between the frame-start and
/// post-block encoders, and the refinement count.
fn frame_updates(
    ctx: &FrameCtx,
    state: &mut AdapterState,
    f_start: &[f64],
) -> Result<(StepLosses, f64, usize)> {
    let plan = plan_for(ctx.cfg);
    if matches!(plan, Plan::NoUpdate) {
        return Ok((StepLosses::default(), 0.0, 0));
    }
    // The refinement loss keeps the teacher from before this frame's updates.
    let teacher_at_frame_start = state.teacher.clone();

    let mut last = StepLosses::default();
    for _ in 0..ctx.cfg.repeats {
        last = match &plan {
            Plan::NoUpdate => unreachable!(),
            Plan::Single(terms, lr) => committed_step(ctx, state, *terms, lr.resolve(ctx.cfg))?,
            Plan::Sequential(stages) => {
                let mut out = StepLosses::default();
                for (terms, lr) in stages {
                    out = committed_step(ctx, state, *terms, lr.resolve(ctx.cfg))?;
                }
                out
            }
            Plan::Bilevel { lower, upper } => bilevel_step(ctx, state, *lower, *upper)?,
        };
        state.teacher = ema_update(&state.teacher, &state.weights, ctx.cfg.gamma);
    }

    let f_after = state.weights.encode(&ctx.input.obs)?;
    let d = feature_distance(&f_after, f_start);

    let mut refines = 0;
    if ctx.cfg.uses_refine() {
        let terms = TermSet::FT.with_exemplar(ctx.cfg.uses_exemplars());
        let teacher_flat = teacher_reference(ctx, &teacher_at_frame_start, terms)?;
        let mut f_ref = f_after;
        let mut d_cur = d;
        while d_cur > ctx.cfg.epsilon && refines < ctx.cfg.max_refine {
            let ids = if terms.exemplar {
                // The query feature is the current encoder's output on this
                // frame, which is exactly `f_ref`.
                let r = ctx.retrieval.expect("validated at run start");
                let batch = match ctx.cfg.retrieval {
                    RetrievalStrategy::Cluster => {
                        retrieve(&f_ref, r.clusters, r.bank, ctx.cfg.k_exemplars, &mut state.rng)?
                    }
                    RetrievalStrategy::Complete => {
                        complete_retrieve(&f_ref, r.bank, ctx.cfg.k_exemplars)?
                    }
                };
                Some(batch.indices)
            } else {
                None
            };
            let (grad, losses) = loss_gradient(
                ctx,
                &state.weights,
                terms,
                teacher_flat.as_deref(),
                ids.as_deref(),
            )?;
            state.weights = sgd_step(&state.weights, &grad, ctx.cfg.eta)?;
            let f_new = state.weights.encode(&ctx.input.obs)?;
            d_cur = feature_distance(&f_new, &f_ref);
            f_ref = f_new;
            state.teacher = ema_update(&state.teacher, &state.weights, ctx.cfg.gamma);
            refines += 1;
            last = losses;
        }
    }
    Ok((last, d, refines))
}

/// Outcome of adapting to one frame.
#[derive(Debug, Clone)]
pub struct FrameStep {
    pub losses: StepLosses,
    /// Feature distance between the frame-start and post-update encoders
    /// (the value the refinement decision is based on).
    pub d: f64,
    pub refines: usize,
    /// True if a non-finite loss aborted the frame; the state was rolled
    /// back and the prediction comes from the rolled-back weights.
    pub aborted: bool,
    pub prediction: Prediction<f64>,
}

/// Adapts to one frame and predicts. A numerical failure inside the frame
/// rolls weights and teacher back to their frame-start values and flags the
/// step instead of killing the run; structural errors still propagate.
#[allow(clippy::too_many_arguments)]
pub fn adapt_frame(
    state: &mut AdapterState,
    topology: &SkeletonTopology,
    input: &FrameInput,
    prev: Option<&FrameInput>,
    priors: &PriorStats,
    retrieval: Option<RetrievalContext<'_>>,
    cfg: &SchemeConfig,
) -> Result<FrameStep> {
    let ctx = FrameCtx {
        topology,
        input,
        prev,
        motion_active: prev.is_some() && state.t >= cfg.tau,
        priors,
        retrieval,
        cfg,
    };
    let weights_snapshot = state.weights.clone();
    let teacher_snapshot = state.teacher.clone();
    let f_start = state.weights.encode(&input.obs)?;

    let (losses, d, refines, aborted) = match frame_updates(&ctx, state, &f_start) {
        Ok((losses, d, refines)) => (losses, d, refines, false),
        Err(Error::Numerical { .. }) => {
            state.weights = weights_snapshot;
            state.teacher = teacher_snapshot;
            (StepLosses::default(), 0.0, 0, true)
        }
        Err(e) => return Err(e),
    };
    state.t += 1;
    let prediction = state.weights.predict(&input.obs)?;
    Ok(FrameStep {
        losses,
        d,
        refines,
        aborted,
        prediction,
    })
}

/// One frame's full record in a run report.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRow {
    pub frame: usize,
    pub is_keyframe: bool,
    pub aborted: bool,
    pub losses: StepLosses,
    pub d: f64,
    pub refines: usize,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pve: f64,
    pub reproj_2d: f64,
    pub ms: f64,
}

/// Full result of one adaptation run.
#[derive(Debug, Clone)]
pub struct AdaptReport {
    pub scheme: Scheme,
    pub rows: Vec<FrameRow>,
    /// Pooled root-aligned per-joint errors, for PCK/AUC.
    pub joint_errors: Vec<f64>,
}

impl AdaptReport {
    pub fn mean_mpjpe(&self) -> f64 {
        self.rows.iter().map(|r| r.mpjpe).sum::<f64>() / self.rows.len() as f64
    }

    pub fn summary(&self, pck_reference: f64) -> Result<metrics::MetricSummary> {
        let frames: Vec<FrameMetrics> = self
            .rows
            .iter()
            .map(|r| FrameMetrics {
                mpjpe: r.mpjpe,
                pa_mpjpe: r.pa_mpjpe,
                pve: r.pve,
                reproj_2d: r.reproj_2d,
            })
            .collect();
        metrics::summarize(&frames, &self.joint_errors, pck_reference)
    }
}

/// Runs one scheme over a stream: adapt on each frame in order, then score
/// the post-update prediction against the hidden truth. Ground truth is
/// touched only here, never inside the update path.
pub fn run_scheme(
    topology: &SkeletonTopology,
    stream: &[StreamFrame],
    pretrained: &ModelWeights,
    priors: &PriorStats,
    retrieval: Option<RetrievalContext<'_>>,
    cfg: &SchemeConfig,
) -> Result<AdaptReport> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(Error::config("adaptation needs a non-empty stream"));
    }
    if (cfg.uses_exemplars() || cfg.uses_refine() && cfg.uses_exemplars()) && retrieval.is_none() {
        return Err(Error::config(
            "scheme uses exemplar guidance but no retrieval context was given",
        ));
    }
    let mut state = AdapterState::new(pretrained.clone(), cfg.seed);
    let mut rows = Vec::with_capacity(stream.len());
    let mut joint_errors = Vec::with_capacity(stream.len() * topology.n_joints());

    for (t, frame) in stream.iter().enumerate() {
        let clock = Instant::now();
        let prev = (t >= cfg.tau).then(|| &stream[t - cfg.tau].input);
        let step = adapt_frame(
            &mut state,
            topology,
            &frame.input,
            prev,
            priors,
            retrieval,
            cfg,
        )?;
        let ms = clock.elapsed().as_secs_f64() * 1e3;

        let pred_joints =
            crate::kinematics::forward_kinematics(topology, &step.prediction.body)?;
        let pred_kp = crate::kinematics::project(&step.prediction.camera, &pred_joints);
        let errors = metrics::root_aligned_errors(&pred_joints, &frame.truth.joints);
        let mpjpe = errors.iter().sum::<f64>() / errors.len() as f64;
        joint_errors.extend(errors);
        rows.push(FrameRow {
            frame: t,
            is_keyframe: frame.is_keyframe,
            aborted: step.aborted,
            losses: step.losses,
            d: step.d,
            refines: step.refines,
            mpjpe,
            pa_mpjpe: metrics::pa_mpjpe(&pred_joints, &frame.truth.joints),
            pve: metrics::pve(
                &step.prediction.body,
                &frame.truth.body,
                topology,
                cfg.pve_samples,
            )?,
            reproj_2d: metrics::reproj_error(&pred_kp, &frame.input.gt2d, &frame.input.visibility),
            ms,
        });
    }
    Ok(AdaptReport {
        scheme: cfg.scheme,
        rows,
        joint_errors,
    })
}
