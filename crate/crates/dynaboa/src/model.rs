//! The regression model: a small MLP encoder producing a feature vector,
//! followed by an MLP head regressing shape, pose and camera parameters.
//!
//! Weights live in one flat `Vec<f64>` laid out layer by layer (row-major
//! weight matrix, then bias) so the whole model can be probed, stepped and
//! blended by plain vector arithmetic. The forward pass is generic over
//! [`Scalar`]: with `f64` it is a fast plain evaluation, with tape variables
//! it records the graph for exact reverse-mode gradients.

use crate::autodiff::{Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::kinematics::{BodyParams, CameraParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Flattened observation fed to the model: `2J` keypoint coordinates
/// (masked entries zeroed), `J` visibility flags, then the nuisance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
}

pub type FeatureVector = Vec<f64>;

/// Architecture description. The observation and output widths follow from
/// the joint count, so the config stays valid by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_joints: usize,
    pub nuisance_dim: usize,
    pub feature_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub regressor_hidden: Vec<usize>,
    /// Lower bound added to the softplus image for bone scales and the
    /// camera scale, keeping both strictly positive.
    pub positive_floor: f64,
}

impl ModelConfig {
    pub fn new(n_joints: usize) -> Self {
        ModelConfig {
            n_joints,
            nuisance_dim: 8,
            feature_dim: 32,
            encoder_hidden: vec![64, 64],
            regressor_hidden: vec![64, 64],
            positive_floor: 1e-3,
        }
    }

    pub fn obs_dim(&self) -> usize {
        3 * self.n_joints + self.nuisance_dim
    }

    /// Raw regressor width: bone scales, all Euler angles, camera scale and
    /// 2D translation.
    pub fn out_dim(&self) -> usize {
        (self.n_joints - 1) + 3 * self.n_joints + 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_joints < 2 {
            return Err(Error::config("model needs at least two joints"));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("feature_dim must be positive"));
        }
        if self.positive_floor <= 0.0 {
            return Err(Error::config("positive_floor must be positive"));
        }
        Ok(())
    }

    /// (input, output) widths of every linear layer, encoder then regressor.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut chain = |widths: &[usize]| {
            for w in widths.windows(2) {
                dims.push((w[0], w[1]));
            }
        };
        let mut enc = vec![self.obs_dim()];
        enc.extend(&self.encoder_hidden);
        enc.push(self.feature_dim);
        chain(&enc);
        let mut reg = vec![self.feature_dim];
        reg.extend(&self.regressor_hidden);
        reg.push(self.out_dim());
        chain(&reg);
        dims
    }

    pub fn n_encoder_layers(&self) -> usize {
        self.encoder_hidden.len() + 1
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(i, o)| i * o + o)
            .sum()
    }
}

/// Flat weight vector plus the architecture that gives it shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub values: Vec<f64>,
}

/// Model output: body parameters, camera, and the encoder feature the
/// regression was computed from.
#[derive(Debug, Clone)]
pub struct Prediction<T = f64> {
    pub body: BodyParams<T>,
    pub camera: CameraParams<T>,
    pub feature: Vec<T>,
}

impl<T: Scalar> Prediction<T> {
    /// Concatenated `(beta, theta, scale, trans)` vector, the representation
    /// compared by the teacher consistency loss.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.body.beta.len() + self.body.theta.len() + 3);
        out.extend_from_slice(&self.body.beta);
        out.extend_from_slice(&self.body.theta);
        out.push(self.camera.scale);
        out.push(self.camera.trans[0]);
        out.push(self.camera.trans[1]);
        out
    }
}

impl ModelWeights {
    /// Uniform Xavier-style init, fully determined by `seed`.
    pub fn init_random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(config.n_params());
        for (fan_in, fan_out) in config.layer_dims() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                values.push(rng.gen_range(-bound..bound));
            }
            values.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(ModelWeights { config, values })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_params();
        Ok(ModelWeights {
            config,
            values: vec![0.0; n],
        })
    }

    pub fn encode(&self, obs: &Observation) -> Result<FeatureVector> {
        let input: Vec<f64> = obs.values.clone();
        forward_encoder(&self.config, &self.values, input)
    }

    pub fn regress(&self, feature: &[f64]) -> Result<Prediction<f64>> {
        forward_regressor(&self.config, &self.values, feature.to_vec())
    }

    pub fn predict(&self, obs: &Observation) -> Result<Prediction<f64>> {
        let feature = self.encode(obs)?;
        self.regress(&feature)
    }

    /// Binds the weights to `tape`, producing a differentiable view.
    pub fn taped<'t>(&self, tape: &'t Tape) -> TapedModel<'t> {
        TapedModel {
            config: self.config.clone(),
            params: self.values.iter().map(|&v| tape.var(v)).collect(),
        }
    }

    /// Serializes architecture and parameters to the shared cache format.
    /// Identical weights always produce identical bytes.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut dims = vec![
            self.config.n_joints as u64,
            self.config.nuisance_dim as u64,
            self.config.feature_dim as u64,
            self.config.encoder_hidden.len() as u64,
        ];
        dims.extend(self.config.encoder_hidden.iter().map(|&h| h as u64));
        dims.push(self.config.regressor_hidden.len() as u64);
        dims.extend(self.config.regressor_hidden.iter().map(|&h| h as u64));
        let mut c = crate::cache::Container::new();
        c.put_u64("architecture", dims);
        c.put_f64("positive_floor", vec![self.config.positive_floor]);
        c.put_f64("values", self.values.clone());
        c.save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let c = crate::cache::Container::load(path)?;
        let dims = c.u64("architecture")?;
        if dims.len() < 4 {
            return Err(Error::Cache("truncated architecture section".into()));
        }
        let n_enc = dims[3] as usize;
        if dims.len() < 5 + n_enc {
            return Err(Error::Cache("truncated architecture section".into()));
        }
        let encoder_hidden: Vec<usize> = dims[4..4 + n_enc].iter().map(|&d| d as usize).collect();
        let n_reg = dims[4 + n_enc] as usize;
        if dims.len() != 5 + n_enc + n_reg {
            return Err(Error::Cache("truncated architecture section".into()));
        }
        let regressor_hidden: Vec<usize> =
            dims[5 + n_enc..].iter().map(|&d| d as usize).collect();
        let config = ModelConfig {
            n_joints: dims[0] as usize,
            nuisance_dim: dims[1] as usize,
            feature_dim: dims[2] as usize,
            encoder_hidden,
            regressor_hidden,
            positive_floor: c.f64("positive_floor")?[0],
        };
        config.validate()?;
        let values = c.f64("values")?.to_vec();
        if values.len() != config.n_params() {
            return Err(Error::Cache(format!(
                "checkpoint holds {} values, architecture needs {}",
                values.len(),
                config.n_params()
            )));
        }
        Ok(ModelWeights { config, values })
    }
}

/// Differentiable view of a [`ModelWeights`]: every parameter is a tape leaf.
pub struct TapedModel<'t> {
    config: ModelConfig,
    params: Vec<Var<'t>>,
}

impl<'t> TapedModel<'t> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Var<'t>] {
        &self.params
    }

    pub fn encode(&self, obs: &Observation) -> Result<Vec<Var<'t>>> {
        let input: Vec<Var<'t>> = obs.values.iter().map(|&v| Var::constant(v)).collect();
        forward_encoder(&self.config, &self.params, input)
    }

    pub fn predict(&self, obs: &Observation) -> Result<Prediction<Var<'t>>> {
        let feature = self.encode(obs)?;
        forward_regressor(&self.config, &self.params, feature)
    }
}

fn forward_encoder<T: Scalar>(config: &ModelConfig, params: &[T], input: Vec<T>) -> Result<Vec<T>> {
    if input.len() != config.obs_dim() {
        return Err(Error::dimension(format!(
            "observation has {} values, model expects {}",
            input.len(),
            config.obs_dim()
        )));
    }
    let dims = config.layer_dims();
    let mut offset = 0;
    let mut act = input;
    for (layer, &(fan_in, fan_out)) in dims.iter().take(config.n_encoder_layers()).enumerate() {
        let last = layer + 1 == config.n_encoder_layers();
        act = linear_layer(&params[offset..], fan_in, fan_out, &act, !last);
        offset += fan_in * fan_out + fan_out;
    }
    Ok(act)
}

fn forward_regressor<T: Scalar>(
    config: &ModelConfig,
    params: &[T],
    feature: Vec<T>,
) -> Result<Prediction<T>> {
    if feature.len() != config.feature_dim {
        return Err(Error::dimension(format!(
            "feature has {} values, model expects {}",
            feature.len(),
            config.feature_dim
        )));
    }
    let dims = config.layer_dims();
    let mut offset: usize = dims
        .iter()
        .take(config.n_encoder_layers())
        .map(|(i, o)| i * o + o)
        .sum();
    let n_layers = dims.len();
    let mut act = feature.clone();
    for (layer, &(fan_in, fan_out)) in dims.iter().enumerate().skip(config.n_encoder_layers()) {
        let last = layer + 1 == n_layers;
        act = linear_layer(&params[offset..], fan_in, fan_out, &act, !last);
        offset += fan_in * fan_out + fan_out;
    }
    Ok(map_outputs(config, &act, feature))
}

fn linear_layer<T: Scalar>(params: &[T], fan_in: usize, fan_out: usize, input: &[T], tanh: bool) -> Vec<T> {
    let mut out = Vec::with_capacity(fan_out);
    for row in 0..fan_out {
        let mut acc = params[fan_in * fan_out + row]; // bias
        let w = &params[row * fan_in..(row + 1) * fan_in];
        for (wi, xi) in w.iter().zip(input) {
            acc = acc + *wi * *xi;
        }
        out.push(if tanh { acc.tanh() } else { acc });
    }
    out
}

/// Maps raw regressor outputs to constrained parameters: bone scales and the
/// camera scale go through `floor + softplus`, angles and translation stay
/// linear.
fn map_outputs<T: Scalar>(config: &ModelConfig, raw: &[T], feature: Vec<T>) -> Prediction<T> {
    let n_bones = config.n_joints - 1;
    let n_angles = 3 * config.n_joints;
    let floor = T::constant(config.positive_floor);
    let beta: Vec<T> = raw[..n_bones].iter().map(|&r| floor + r.softplus()).collect();
    let theta: Vec<T> = raw[n_bones..n_bones + n_angles].to_vec();
    let scale = floor + raw[n_bones + n_angles].softplus();
    let trans = [raw[n_bones + n_angles + 1], raw[n_bones + n_angles + 2]];
    Prediction {
        body: BodyParams { beta, theta },
        camera: CameraParams { scale, trans },
        feature,
    }
}

/// Exact reverse-mode gradient of a scalar loss with respect to every model
/// parameter. The closure builds the loss on a fresh tape through the given
/// differentiable model view; a non-finite loss is rejected before any
/// gradient is taken.
pub fn gradient<F>(weights: &ModelWeights, loss_fn: F) -> Result<Vec<f64>>
where
    F: for<'t> FnOnce(&'t Tape, &TapedModel<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let model = weights.taped(&tape);
    let loss = loss_fn(&tape, &model)?;
    if !loss.value().is_finite() {
        return Err(Error::numerical("loss", format!("value {}", loss.value())));
    }
    let grads = loss.backward();
    Ok(model.params().iter().map(|&p| grads.wrt(p)).collect())
}

/// One plain gradient-descent step, returning the new weights.
pub fn sgd_step(weights: &ModelWeights, grad: &[f64], lr: f64) -> Result<ModelWeights> {
    if grad.len() != weights.values.len() {
        return Err(Error::dimension(format!(
            "gradient has {} entries, weights have {}",
            grad.len(),
            weights.values.len()
        )));
    }
    let values = weights
        .values
        .iter()
        .zip(grad)
        .map(|(w, g)| w - lr * g)
        .collect();
    Ok(ModelWeights {
        config: weights.config.clone(),
        values,
    })
}
