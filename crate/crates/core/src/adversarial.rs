//! Importance-weighted regression trained against a clipped critic.
//!
//! The generator `(G_f, G_y)` minimises
//!
//! ```text
//! L_R + λ L_DA,   L_R  = (1/n) Σ β_i (y_i − G_y(G_f(x_i)))²
//!                 L_DA = (1/n) Σ β_i d(G_f(x_i)) − (1/n_T) Σ d(G_f(x_j))
//! ```
//!
//! while the critic `d` maximises `L_DA` under weight clipping. Inputs and
//! outcomes are standardised with source statistics before training; all
//! reported losses are in outcome units.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DomainData, Features};
use crate::nn::{Activation, Gradients, Mlp, NnError, OptimizerState};
use crate::seed::rng_for;
use crate::stats::column_moments;

/// Losses above this magnitude abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversarialError {
    #[error("invalid adversarial configuration: {0}")]
    InvalidConfig(String),
    #[error("input shape: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch} ({} finite epochs recorded)", history.len())]
    Diverged { epoch: usize, history: Vec<EpochRecord> },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    /// Hidden tanh widths of `G_f`.
    pub feature_hidden: Vec<usize>,
    /// Output width of `G_f` (identity activation); `None` keeps the input width.
    pub feature_dim: Option<usize>,
    /// Hidden tanh widths of the critic.
    pub critic_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { feature_hidden: vec![16], feature_dim: Some(8), critic_hidden: vec![16] }
    }
}

impl Architecture {
    /// `G_f` a single linear map of the input width; `G_y ∘ G_f` is then linear.
    pub fn linear() -> Self {
        Self { feature_hidden: Vec::new(), feature_dim: None, critic_hidden: vec![16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdvConfig {
    pub lambda: f64,
    pub epochs: usize,
    /// `None` trains on the full data each step.
    pub batch_size: Option<usize>,
    pub critic_steps: usize,
    pub clip: f64,
    /// Adam step size for `G_f` and `G_y`.
    pub lr_generator: f64,
    pub lr_critic: f64,
    /// λ ramps linearly from 0 over this fraction of the epochs.
    pub warmup_fraction: f64,
    pub architecture: Architecture,
    pub seed: u64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            epochs: 1000,
            batch_size: None,
            critic_steps: 5,
            clip: 0.1,
            lr_generator: 1e-3,
            lr_critic: 5e-4,
            warmup_fraction: 0.1,
            architecture: Architecture::default(),
            seed: 0,
        }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<(), AdversarialError> {
        let bad = |m: &str| Err(AdversarialError::InvalidConfig(m.into()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.critic_steps == 0 {
            return bad("critic_steps must be at least 1");
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad("clip must be positive");
        }
        if !(self.lr_generator > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1]");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive");
        }
        let arch = &self.architecture;
        if arch.feature_hidden.iter().chain(&arch.critic_hidden).any(|&w| w == 0) || arch.feature_dim == Some(0) {
            return bad("layer widths must be positive");
        }
        Ok(())
    }
}

/// Source-based affine standardisation of inputs and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Scaling {
    pub fn identity(p: usize) -> Self {
        Self { x_mean: vec![0.0; p], x_scale: vec![1.0; p], y_mean: 0.0, y_scale: 1.0 }
    }

    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Self {
        let (x_mean, x_scale) = column_moments(x);
        let y_mean = crate::stats::mean(y);
        let y_scale = crate::stats::scale_or_one(y);
        Self { x_mean, x_scale, y_mean, y_scale }
    }

    pub fn x(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.x_mean[j], self.x_scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    pub fn y(&self, y: ArrayView1<f64>) -> Array1<f64> {
        y.mapv(|v| (v - self.y_mean) / self.y_scale)
    }
}

/// `x ↦ G_y(G_f(x))` with the scaling folded in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub feature: Mlp,
    pub head: Mlp,
    pub scaling: Scaling,
}

impl Predictor {
    pub fn input_dim(&self) -> usize {
        self.feature.input_dim()
    }

    /// Transformed features `G_f(x)`.
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, AdversarialError> {
        self.check(x)?;
        Ok(self.feature.forward(self.scaling.x(x).view())?)
    }

    /// Predictions in outcome units.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, AdversarialError> {
        let z = self.transform(x)?;
        let out = self.head.forward(z.view())?;
        let (m, s) = (self.scaling.y_mean, self.scaling.y_scale);
        Ok(out.column(0).mapv(|v| m + s * v))
    }

    fn check(&self, x: ArrayView2<f64>) -> Result<(), AdversarialError> {
        if x.ncols() != self.input_dim() {
            return Err(AdversarialError::Shape(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Weighted regression loss (outcome units²) before the generator step.
    pub regression: f64,
    /// Critic gap before the generator step; 0 when λ = 0.
    pub critic_gap: f64,
}

/// Result of one adversarial training session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedLearner {
    pub predictor: Predictor,
    pub critic: Mlp,
    /// `L_R` on the full source at the stored parameters.
    pub j_hat: f64,
    pub history: Vec<EpochRecord>,
}

impl AdaptedLearner {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, AdversarialError> {
        self.predictor.predict(x)
    }
}

fn check_weights(n: usize, beta: ArrayView1<f64>) -> Result<(), AdversarialError> {
    if beta.len() != n {
        return Err(AdversarialError::Shape(format!("{} weights for {n} source rows", beta.len())));
    }
    if beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(AdversarialError::Shape("weights must be finite and non-negative".into()));
    }
    Ok(())
}

/// `(1/n) Σ β_i (y_i − ŷ_i)²` in outcome units.
pub fn loss_regression(
    predictor: &Predictor,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    beta: ArrayView1<f64>,
) -> Result<f64, AdversarialError> {
    check_weights(y.len(), beta)?;
    if x.nrows() != y.len() {
        return Err(AdversarialError::Shape("feature rows and outcomes differ".into()));
    }
    let pred = predictor.predict(x)?;
    let n = y.len() as f64;
    Ok(pred.iter().zip(y).zip(beta).map(|((p, t), b)| b * (t - p) * (t - p)).sum::<f64>() / n)
}

/// `(1/n) Σ β_i d(G_f(x_i)) − (1/n_T) Σ d(G_f(x_j))`.
pub fn loss_da(
    critic: &Mlp,
    predictor: &Predictor,
    source_x: ArrayView2<f64>,
    target_x: ArrayView2<f64>,
    beta: ArrayView1<f64>,
) -> Result<f64, AdversarialError> {
    check_weights(source_x.nrows(), beta)?;
    let ds = critic.forward(predictor.transform(source_x)?.view())?;
    let dt = critic.forward(predictor.transform(target_x)?.view())?;
    Ok(critic_gap(ds.column(0), dt.column(0), beta))
}

fn critic_gap(ds: ArrayView1<f64>, dt: ArrayView1<f64>, beta: ArrayView1<f64>) -> f64 {
    ds.dot(&beta) / ds.len() as f64 - dt.sum() / dt.len() as f64
}

fn init_networks(p: usize, arch: &Architecture, seed: u64) -> (Mlp, Mlp, Mlp) {
    let width = arch.feature_dim.unwrap_or(p);
    let mut dims = vec![p];
    dims.extend(&arch.feature_hidden);
    dims.push(width);
    let mut acts = vec![Activation::Tanh; arch.feature_hidden.len()];
    acts.push(Activation::Identity);
    let feature = Mlp::init(&dims, &acts, &mut rng_for(seed, "adv-feature", &[]));
    let head = Mlp::init(&[width, 1], &[Activation::Identity], &mut rng_for(seed, "adv-head", &[]));
    let mut dims = vec![width];
    dims.extend(&arch.critic_hidden);
    dims.push(1);
    let mut acts = vec![Activation::Tanh; arch.critic_hidden.len()];
    acts.push(Activation::Identity);
    let critic = Mlp::init(&dims, &acts, &mut rng_for(seed, "adv-critic", &[]));
    (feature, head, critic)
}

/// Trains from a fresh initialisation.
pub fn train_adversarial(
    source: &DomainData,
    target: &Features,
    beta: ArrayView1<f64>,
    cfg: &AdvConfig,
) -> Result<AdaptedLearner, AdversarialError> {
    train_adversarial_from(source, target, beta, cfg, None)
}

/// Trains starting from `warm` (parameters and scaling) when given.
///
/// With `cfg.lambda == 0` the target features are never read.
pub fn train_adversarial_from(
    source: &DomainData,
    target: &Features,
    beta: ArrayView1<f64>,
    cfg: &AdvConfig,
    warm: Option<&AdaptedLearner>,
) -> Result<AdaptedLearner, AdversarialError> {
    cfg.validate()?;
    let labels = source.labels().ok_or_else(|| AdversarialError::Shape("source domain has no outcomes".into()))?;
    let n = source.n();
    if n == 0 {
        return Err(AdversarialError::Shape("empty source domain".into()));
    }
    check_weights(n, beta)?;
    let adversarial = cfg.lambda > 0.0;
    if adversarial && (target.n() == 0 || target.dim() != source.dim()) {
        return Err(AdversarialError::Shape(format!(
            "target has {} rows of dimension {}, source dimension is {}",
            target.n(),
            target.dim(),
            source.dim()
        )));
    }

    let xs_raw = source.features().x();
    let ys_raw = labels.y();
    let (mut feature, mut head, mut critic, scaling) = match warm {
        Some(w) => {
            if w.predictor.input_dim() != source.dim() {
                return Err(AdversarialError::Shape("warm start has a different input dimension".into()));
            }
            (w.predictor.feature.clone(), w.predictor.head.clone(), w.critic.clone(), w.predictor.scaling.clone())
        }
        None => {
            let (f, h, c) = init_networks(source.dim(), &cfg.architecture, cfg.seed);
            (f, h, c, Scaling::fit(xs_raw, ys_raw))
        }
    };
    critic.clip_weights(cfg.clip);
    let xs = scaling.x(xs_raw);
    let ys = scaling.y(ys_raw);
    let xt = if adversarial { Some(scaling.x(target.x())) } else { None };
    let y_var = scaling.y_scale * scaling.y_scale;

    let mut opt_feature = OptimizerState::adam(cfg.lr_generator);
    let mut opt_head = OptimizerState::adam(cfg.lr_generator);
    let mut opt_critic = OptimizerState::adam(cfg.lr_critic);
    let warmup = ((cfg.warmup_fraction * cfg.epochs as f64).ceil() as usize).max(1);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch_rng = rng_for(cfg.seed, "adv-batch", &[]);

    for epoch in 0..cfg.epochs {
        let lam = if adversarial { cfg.lambda * ((epoch + 1) as f64 / warmup as f64).min(1.0) } else { 0.0 };
        let batches = batch_plan(n, xt.as_ref().map_or(0, |t| t.nrows()), cfg.batch_size, &mut batch_rng);
        let mut record = EpochRecord { regression: 0.0, critic_gap: 0.0 };
        for (src_idx, tgt_idx) in &batches {
            let (xb, yb, bb);
            let (xb_v, yb_v, bb_v) = match src_idx {
                None => (xs.view(), ys.view(), beta),
                Some(idx) => {
                    xb = xs.select(Axis(0), idx);
                    yb = ys.select(Axis(0), idx);
                    bb = beta.select(Axis(0), idx);
                    (xb.view(), yb.view(), bb.view())
                }
            };
            let xtb;
            let xt_v = match (&xt, tgt_idx) {
                (Some(t), None) => Some(t.view()),
                (Some(t), Some(idx)) => {
                    xtb = t.select(Axis(0), idx);
                    Some(xtb.view())
                }
                (None, _) => None,
            };
            let step = Step { xs: xb_v, ys: yb_v, beta: bb_v, xt: xt_v, lambda: lam, cfg };
            let (lr, gap) =
                step.run(&mut feature, &mut head, &mut critic, [&mut opt_feature, &mut opt_head, &mut opt_critic])?;
            let w = yb_v.len() as f64 / n as f64;
            record.regression += w * lr * y_var;
            record.critic_gap += w * gap;
        }
        let finite = record.regression.is_finite() && record.critic_gap.is_finite();
        if !finite
            || record.regression.abs() > DIVERGENCE_LIMIT
            || record.critic_gap.abs() > DIVERGENCE_LIMIT
            || !feature.all_finite()
            || !head.all_finite()
        {
            return Err(AdversarialError::Diverged { epoch, history });
        }
        history.push(record);
    }

    let predictor = Predictor { feature, head, scaling };
    let j_hat = loss_regression(&predictor, xs_raw, ys_raw, beta)?;
    if !j_hat.is_finite() || j_hat > DIVERGENCE_LIMIT {
        return Err(AdversarialError::Diverged { epoch: cfg.epochs, history });
    }
    Ok(AdaptedLearner { predictor, critic, j_hat, history })
}

type BatchIndex = Option<Vec<usize>>;

/// `None` entries mean "all rows" so the full-batch path copies nothing.
fn batch_plan(
    n_src: usize,
    n_tgt: usize,
    batch: Option<usize>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<(BatchIndex, BatchIndex)> {
    let b = match batch {
        Some(b) if b < n_src => b,
        _ => return vec![(None, None)],
    };
    let mut src: Vec<usize> = (0..n_src).collect();
    src.shuffle(rng);
    let mut tgt: Vec<usize> = (0..n_tgt).collect();
    tgt.shuffle(rng);
    let n_batches = n_src.div_ceil(b);
    let tb = n_tgt.div_ceil(n_batches).max(1);
    src.chunks(b)
        .enumerate()
        .map(|(k, chunk)| {
            let t: Vec<usize> =
                if n_tgt == 0 { Vec::new() } else { (0..tb).map(|j| tgt[(k * tb + j) % n_tgt]).collect() };
            (Some(chunk.to_vec()), Some(t))
        })
        .collect()
}

/// One round of critic ascent followed by one generator step on a batch.
struct Step<'a> {
    xs: ArrayView2<'a, f64>,
    ys: ArrayView1<'a, f64>,
    beta: ArrayView1<'a, f64>,
    xt: Option<ArrayView2<'a, f64>>,
    lambda: f64,
    cfg: &'a AdvConfig,
}

impl Step<'_> {
    /// Returns the standardised regression loss and the critic gap, both
    /// measured before the generator update.
    fn run(
        &self,
        feature: &mut Mlp,
        head: &mut Mlp,
        critic: &mut Mlp,
        opts: [&mut OptimizerState; 3],
    ) -> Result<(f64, f64), AdversarialError> {
        let [opt_feature, opt_head, opt_critic] = opts;
        let n = self.ys.len() as f64;
        let src_trace = feature.forward_trace(self.xs)?;
        let tgt_trace = match self.xt {
            Some(xt) if self.lambda > 0.0 => Some(feature.forward_trace(xt)?),
            _ => None,
        };

        // critic ascent on L_DA at fixed features
        let mut gap = 0.0;
        if let Some(tt) = &tgt_trace {
            let zs = src_trace.output();
            let zt = tt.output();
            let nt = zt.nrows() as f64;
            let up_s = self.beta.mapv(|b| -b / n).insert_axis(Axis(1));
            let up_t = Array2::from_elem((zt.nrows(), 1), 1.0 / nt);
            for _ in 0..self.cfg.critic_steps {
                let cs = critic.forward_trace(zs.view())?;
                let ct = critic.forward_trace(zt.view())?;
                let mut g = critic.backward(&cs, up_s.view())?;
                g.add_params(&critic.backward(&ct, up_t.view())?);
                opt_critic.step_mlp(critic, &g);
                critic.clip_weights(self.cfg.clip);
            }
        }

        // generator descent on L_R + λ L_DA
        let zs = src_trace.output();
        let ht = head.forward_trace(zs.view())?;
        let pred = ht.output().column(0).to_owned();
        let resid = &self.ys - &pred;
        let lr = resid.iter().zip(self.beta).map(|(r, b)| b * r * r).sum::<f64>() / n;
        let up_head = (&resid * &self.beta).mapv(|v| -2.0 * v / n).insert_axis(Axis(1));
        let head_grads = head.backward(&ht, up_head.view())?;
        let mut dz_src = head_grads.input.clone();

        let mut feature_grads: Option<Gradients> = None;
        if let Some(tt) = &tgt_trace {
            let zt = tt.output();
            let nt = zt.nrows() as f64;
            let cs = critic.forward_trace(zs.view())?;
            let ct = critic.forward_trace(zt.view())?;
            gap = critic_gap(cs.output().column(0), ct.output().column(0), self.beta);
            let up_s = self.beta.mapv(|b| b / n).insert_axis(Axis(1));
            let up_t = Array2::from_elem((zt.nrows(), 1), -1.0 / nt);
            let gs = critic.backward(&cs, up_s.view())?;
            let gt = critic.backward(&ct, up_t.view())?;
            dz_src.scaled_add(self.lambda, &gs.input);
            let dz_tgt = gt.input * self.lambda;
            feature_grads = Some(feature.backward(tt, dz_tgt.view())?);
        }
        let mut fg = feature.backward(&src_trace, dz_src.view())?;
        if let Some(t) = &feature_grads {
            fg.add_params(t);
        }
        opt_head.step_mlp(head, &head_grads);
        opt_feature.step_mlp(feature, &fg);
        Ok((lr, gap))
    }
}
