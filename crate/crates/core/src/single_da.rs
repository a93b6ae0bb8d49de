//! Single-source adaptation: alternate weight estimation and adversarial training.
//!
//! Iteration 1 estimates weights on the raw features. Every later iteration
//! re-estimates them on the features produced by the current `G_f` and then
//! continues training from the current networks. The loop stops once the
//! per-category weights move by less than `tol` in sup-norm, or after
//! `max_iter` iterations.

use log::warn;
use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::adversarial::{train_adversarial_from, AdaptedLearner, AdvConfig};
use crate::data::{DomainData, Features};
use crate::error::{Error, Result};
use crate::label_shift::{estimate_importance, BbseConfig, ImportanceModel};
use crate::seed::derive_seed;
use crate::splines::knots_from_quantiles;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleDaConfig {
    /// Maximum number of outer iterations `T`.
    pub max_iter: usize,
    /// Sup-norm tolerance `τ` on successive per-category weights.
    pub tol: f64,
    /// Network settings; its `seed` is replaced by a derived per-iteration seed.
    pub adv: AdvConfig,
    pub bbse: BbseConfig,
    /// Skip weight estimation and train with `β ≡ 1` (the no-DA learner when `λ = 0`).
    pub force_unit_weights: bool,
    pub seed: u64,
}

impl Default for SingleDaConfig {
    fn default() -> Self {
        Self {
            max_iter: 5,
            tol: 1e-2,
            adv: AdvConfig::default(),
            bbse: BbseConfig::default(),
            force_unit_weights: false,
            seed: 0,
        }
    }
}

impl SingleDaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        self.bbse.validate().map_err(Error::InvalidConfig)?;
        self.adv.validate()?;
        Ok(())
    }

    /// Network settings used at outer iteration `t` (1-based).
    pub fn adv_for_iteration(&self, t: usize) -> AdvConfig {
        AdvConfig { seed: derive_seed(self.seed, "single-da-adv", &[t as u64]), ..self.adv.clone() }
    }

    pub fn bbse_seed(&self, t: usize) -> u64 {
        derive_seed(self.seed, "single-da-bbse", &[t as u64])
    }

    /// The no-DA learner: unit weights, no critic, one iteration.
    pub fn plain(&self) -> Self {
        Self {
            max_iter: 1,
            force_unit_weights: true,
            adv: AdvConfig { lambda: 0.0, ..self.adv.clone() },
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleDaResult {
    pub learner: AdaptedLearner,
    pub importance: ImportanceModel,
    /// Per-category weights after each completed iteration.
    pub snapshots: Vec<Array1<f64>>,
    /// Pointwise weights at the source outcomes used for the final learner.
    pub weights: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set when a later iteration failed and an earlier iterate was returned.
    pub degraded: Option<String>,
}

impl SingleDaResult {
    pub fn j_hat(&self) -> f64 {
        self.learner.j_hat
    }
}

fn unit_model(y: ndarray::ArrayView1<f64>, bbse: &BbseConfig) -> Result<ImportanceModel> {
    let disc = bbse.discretization(y)?;
    let spec = knots_from_quantiles(y, bbse.num_knots)?;
    let n = y.len() as f64;
    let props = disc.counts(y).into_iter().map(|c| c as f64 / n).collect();
    Ok(ImportanceModel::unit(spec, disc, props))
}

/// Runs the alternation for labeled `source` and unlabeled `target`.
pub fn run_single_da(source: &DomainData, target: &Features, cfg: &SingleDaConfig) -> Result<SingleDaResult> {
    cfg.validate()?;
    let labels = source.require_labels()?;
    if target.dim() != source.dim() {
        return Err(Error::InvalidData(format!("source has {} features, target has {}", source.dim(), target.dim())));
    }
    let y = labels.y();

    if cfg.force_unit_weights {
        let importance = unit_model(y, &cfg.bbse)?;
        let weights = Array1::ones(source.n());
        let learner = train_adversarial_from(source, target, weights.view(), &cfg.adv_for_iteration(1), None)?;
        return Ok(SingleDaResult {
            learner,
            snapshots: vec![importance.category_means.clone()],
            importance,
            weights,
            converged: true,
            iterations: 1,
            degraded: None,
        });
    }

    let mut last: Option<SingleDaResult> = None;
    for t in 1..=cfg.max_iter {
        match iterate(source, target, cfg, t, last.as_ref()) {
            Ok((learner, importance, weights)) => {
                let mut snapshots = last.as_ref().map(|r| r.snapshots.clone()).unwrap_or_default();
                let change = snapshots
                    .last()
                    .map(|prev: &Array1<f64>| {
                        (&importance.category_means - prev).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
                    })
                    .unwrap_or(f64::INFINITY);
                snapshots.push(importance.category_means.clone());
                let converged = change < cfg.tol;
                let result = SingleDaResult {
                    learner,
                    importance,
                    snapshots,
                    weights,
                    converged,
                    iterations: t,
                    degraded: None,
                };
                if converged {
                    return Ok(result);
                }
                last = Some(result);
            }
            Err(e) => match last {
                Some(mut prev) => {
                    warn!("single-source adaptation failed at iteration {t}: {e}; keeping iteration {}", t - 1);
                    prev.degraded = Some(format!("iteration {t}: {e}"));
                    return Ok(prev);
                }
                None => return Err(e.context("single-source adaptation, iteration 1")),
            },
        }
    }
    Ok(last.expect("max_iter >= 1"))
}

fn iterate(
    source: &DomainData,
    target: &Features,
    cfg: &SingleDaConfig,
    t: usize,
    prev: Option<&SingleDaResult>,
) -> Result<(AdaptedLearner, ImportanceModel, Array1<f64>)> {
    let y = source.require_labels()?.y();
    let fit = match prev {
        None => estimate_importance(source.features().x(), y, target.x(), &cfg.bbse, cfg.bbse_seed(t))?,
        Some(p) => {
            let zs = p.learner.predictor.transform(source.features().x())?;
            let zt = p.learner.predictor.transform(target.x())?;
            estimate_importance(zs.view(), y, zt.view(), &cfg.bbse, cfg.bbse_seed(t))?
        }
    };
    let warm = prev.map(|p| &p.learner);
    let learner = train_adversarial_from(source, target, fit.weights.view(), &cfg.adv_for_iteration(t), warm)?;
    Ok((learner, fit.model, fit.weights))
}

/// `G_y(G_f(x))` of the final learner.
pub fn predict(result: &SingleDaResult, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    Ok(result.learner.predict(x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::{train_adversarial, Architecture};
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn toy(n: usize, seed: u64) -> DomainData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let y: Array1<f64> = (0..n).map(|_| nrm.sample(&mut rng)).collect();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| y[i] + 0.3 * nrm.sample(&mut rng));
        DomainData::labeled(x, y).unwrap()
    }

    fn quick() -> SingleDaConfig {
        SingleDaConfig {
            max_iter: 2,
            adv: AdvConfig { epochs: 30, ..AdvConfig::default() },
            bbse: BbseConfig { num_categories: Some(3), num_knots: 5, ..BbseConfig::default() },
            seed: 17,
            ..SingleDaConfig::default()
        }
    }

    #[test]
    fn degenerate_configuration_is_plain_regression() {
        let src = toy(200, 1);
        let tgt = Features::new(toy(50, 2).features().x().to_owned()).unwrap();
        let cfg = SingleDaConfig { max_iter: 1, ..quick() }.plain();
        let res = run_single_da(&src, &tgt, &cfg).unwrap();
        let direct = train_adversarial(&src, &tgt, Array1::ones(200).view(), &cfg.adv_for_iteration(1)).unwrap();
        assert_eq!(res.learner, direct);
        assert_eq!(tgt.read_count(), 0);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.snapshots.len(), 1);
    }

    #[test]
    fn snapshots_track_iterations_and_respect_constraints() {
        let src = toy(300, 3);
        let tgt = Features::new(toy(300, 4).features().x().to_owned()).unwrap();
        let cfg = quick();
        let res = run_single_da(&src, &tgt, &cfg).unwrap();
        assert_eq!(res.snapshots.len(), res.iterations);
        assert!(res.iterations <= 2);
        for s in &res.snapshots {
            assert!(s.iter().all(|&v| v >= -1e-9));
        }
        let norm = res.importance.normalization();
        assert!((norm - 1.0).abs() <= cfg.bbse.epsilon + 1e-9);
        let j = crate::adversarial::loss_regression(
            &res.learner.predictor,
            src.features().x(),
            src.labels().unwrap().y(),
            res.weights.view(),
        )
        .unwrap();
        assert!((j - res.j_hat()).abs() < 1e-9);
        let again = run_single_da(&src, &tgt, &cfg).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn prediction_is_row_wise() {
        let src = toy(120, 5);
        let tgt = Features::new(toy(60, 6).features().x().to_owned()).unwrap();
        let res = run_single_da(&src, &tgt, &quick().plain()).unwrap();
        let x = array![[0.3], [-1.0], [2.0]];
        let p = predict(&res, x.view()).unwrap();
        let rev = predict(&res, array![[2.0], [-1.0], [0.3]].view()).unwrap();
        assert_eq!(p[0], rev[2]);
        assert_eq!(p[2], rev[0]);
        assert!(predict(&res, Array2::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn identity_head_prediction_by_hand() {
        let src = toy(40, 7);
        let tgt = Features::new(Array2::zeros((4, 1))).unwrap();
        let mut cfg = quick().plain();
        cfg.adv.architecture = Architecture::linear();
        let mut res = run_single_da(&src, &tgt, &cfg).unwrap();
        let layer = |w: f64, b: f64| crate::nn::Layer {
            weights: array![[w]],
            bias: array![b],
            activation: crate::nn::Activation::Identity,
        };
        res.learner.predictor.feature = crate::nn::Mlp::new(vec![layer(1.0, 0.0)]).unwrap();
        res.learner.predictor.head = crate::nn::Mlp::new(vec![layer(2.0, -1.0)]).unwrap();
        res.learner.predictor.scaling = crate::adversarial::Scaling::identity(1);
        assert_eq!(predict(&res, array![[0.0], [1.5]].view()).unwrap(), array![-1.0, 2.0]);
        res.learner.predictor.head = crate::nn::Mlp::new(vec![layer(0.0, 0.25)]).unwrap();
        assert_eq!(predict(&res, array![[7.0], [-3.0]].view()).unwrap(), array![0.25, 0.25]);
    }

    #[test]
    fn result_json_round_trip() {
        let src = toy(100, 8);
        let tgt = Features::new(toy(60, 9).features().x().to_owned()).unwrap();
        let res = run_single_da(&src, &tgt, &SingleDaConfig { max_iter: 1, ..quick() }).unwrap();
        let back: SingleDaResult = serde_json::from_str(&serde_json::to_string(&res).unwrap()).unwrap();
        assert_eq!(back, res);
    }
}
