use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DomainData, Features, Labels};
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    TsLinear,
    TsSine,
    TsMixture,
    MsdaHier,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::TsLinear, Scenario::TsSine, Scenario::TsMixture, Scenario::MsdaHier];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::TsLinear => "ts-linear",
            Scenario::TsSine => "ts-sine",
            Scenario::TsMixture => "ts-mixture",
            Scenario::MsdaHier => "msda-hier",
        }
    }

    /// Whether linear baselines get a quadratic covariate term.
    pub fn quadratic(self) -> bool {
        matches!(self, Scenario::TsSine | Scenario::TsMixture)
    }

    pub fn multi_source(self) -> bool {
        self == Scenario::MsdaHier
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (expected ts-linear, ts-sine, ts-mixture or msda-hier)"))
    }
}

/// How the second argument of `N(a, b)` in the scenario formulas is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `b` is a standard deviation.
    #[default]
    Sd,
    /// `b` is a variance.
    Variance,
}

impl Convention {
    pub fn sd(self, b: f64) -> f64 {
        match self {
            Convention::Sd => b,
            Convention::Variance => b.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    /// Study heterogeneity (`msda-hier` only).
    pub sigma: f64,
    /// Number of source domains (`msda-hier` only; single-source scenarios use 1).
    pub num_sources: usize,
    /// Rows per domain, target included.
    pub n: usize,
    pub convention: Convention,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self { scenario: Scenario::TsLinear, sigma: 0.5, num_sources: 3, n: 600, convention: Convention::Sd }
    }
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario) -> Self {
        Self { scenario, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::InvalidConfig("n must be at least 8 rows per domain".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig("sigma must be finite and non-negative".into()));
        }
        if self.scenario.multi_source() && self.num_sources == 0 {
            return Err(Error::InvalidConfig("num_sources must be at least 1".into()));
        }
        Ok(())
    }

    pub fn source_count(&self) -> usize {
        if self.scenario.multi_source() {
            self.num_sources
        } else {
            1
        }
    }
}

/// Target outcomes kept apart from every method; only the evaluator reads them.
#[derive(Debug, Clone)]
pub struct SealedLabels(Labels);

impl SealedLabels {
    /// Counted access reserved for scoring.
    pub fn reveal_for_evaluation(&self) -> ArrayView1<'_, f64> {
        self.0.y()
    }

    pub fn read_count(&self) -> usize {
        self.0.read_count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Hyperparameters drawn for one `msda-hier` domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub spec: ScenarioSpec,
    pub sources: Vec<DomainData>,
    pub target: Features,
    pub sealed: SealedLabels,
    /// Source domains first, then the target (`msda-hier` only).
    pub params: Vec<DomainParams>,
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

fn draw_outcomes(scenario: Scenario, conv: Convention, target: bool, n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    (0..n)
        .map(|_| match (scenario, target) {
            (Scenario::TsMixture, true) => {
                if rng.random::<f64>() < 0.2 {
                    normal(rng, 0.2, conv.sd(0.5))
                } else {
                    normal(rng, 1.0, conv.sd(1.0))
                }
            }
            (Scenario::TsMixture, false) => normal(rng, 0.0, conv.sd(2.0)),
            (_, true) => normal(rng, 0.5, conv.sd(0.5)),
            (_, false) => normal(rng, 0.0, 1.0),
        })
        .collect()
}

fn covariate(scenario: Scenario, conv: Convention, y: ArrayView1<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let x: Vec<f64> = y
        .iter()
        .map(|&v| match scenario {
            Scenario::TsLinear => v + normal(rng, 0.0, conv.sd(0.5)),
            Scenario::TsSine => v.sin() + normal(rng, 0.0, conv.sd(0.5)),
            Scenario::TsMixture => v + 3.0 * v.tanh() + normal(rng, 0.0, conv.sd(1.5)),
            Scenario::MsdaHier => unreachable!("msda-hier covariates depend on domain parameters"),
        })
        .collect();
    Array2::from_shape_vec((x.len(), 1), x).expect("n × 1")
}

/// Draws one dataset; identical `(spec, seed)` give identical data.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<SimData> {
    spec.validate()?;
    let conv = spec.convention;
    let n = spec.n;
    let mut sources = Vec::new();
    let mut params = Vec::new();
    let (tx, ty) = if spec.scenario.multi_source() {
        let k = spec.num_sources;
        let mut hyper = rng_for(seed, "sim-hyper", &[]);
        for d in 0..=k {
            // the target's mean is fixed, only its coefficients are drawn
            let mu = if d < k { normal(&mut hyper, 0.0, spec.sigma) } else { 0.5 };
            let beta1 = normal(&mut hyper, 1.0, spec.sigma);
            let beta2 = normal(&mut hyper, 2.0, spec.sigma);
            params.push(DomainParams { mu, beta1, beta2 });
        }
        let domain = |d: usize| {
            let mut rng = rng_for(seed, "sim-domain", &[d as u64]);
            let p = params[d];
            let y: Array1<f64> = (0..n)
                .map(|_| if d < k { normal(&mut rng, p.mu, 1.0) } else { normal(&mut rng, 0.5, conv.sd(0.5)) })
                .collect();
            let x = y.mapv(|v| p.beta1 * v + p.beta2 * v.tanh() + normal(&mut rng, 0.0, 1.0));
            (x.insert_axis(ndarray::Axis(1)), y)
        };
        for d in 0..k {
            let (x, y) = domain(d);
            sources.push(DomainData::labeled(x, y)?);
        }
        domain(k)
    } else {
        let mut rng = rng_for(seed, "sim-source", &[]);
        let ys = draw_outcomes(spec.scenario, conv, false, n, &mut rng);
        let xs = covariate(spec.scenario, conv, ys.view(), &mut rng);
        sources.push(DomainData::labeled(xs, ys)?);
        let mut rng = rng_for(seed, "sim-target", &[]);
        let yt = draw_outcomes(spec.scenario, conv, true, n, &mut rng);
        (covariate(spec.scenario, conv, yt.view(), &mut rng), yt)
    };
    Ok(SimData {
        spec: spec.clone(),
        sources,
        target: Features::new(tx)?,
        sealed: SealedLabels(Labels::new(ty)?),
        params,
    })
}

fn normal_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    (-(y - mean).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt())
}

/// True `T(y) / S(y)` of a single-source scenario.
pub fn oracle_weights(spec: &ScenarioSpec, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    let c = spec.convention;
    match spec.scenario {
        Scenario::TsLinear | Scenario::TsSine => {
            Ok(y.mapv(|v| normal_pdf(v, 0.5, c.sd(0.5)) / normal_pdf(v, 0.0, 1.0)))
        }
        Scenario::TsMixture => Ok(y.mapv(|v| {
            let t = 0.2 * normal_pdf(v, 0.2, c.sd(0.5)) + 0.8 * normal_pdf(v, 1.0, c.sd(1.0));
            t / normal_pdf(v, 0.0, c.sd(2.0))
        })),
        Scenario::MsdaHier => {
            Err(Error::InvalidConfig("oracle weights are defined for single-source scenarios".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean;

    #[test]
    fn linear_scenario_moments() {
        let d = generate(&ScenarioSpec::new(Scenario::TsLinear), 1).unwrap();
        let ys = d.sources[0].labels().unwrap().y();
        assert!(mean(ys).abs() < 0.15);
        assert!((mean(d.sealed.reveal_for_evaluation()) - 0.5).abs() < 0.15);
        assert_eq!(d.sealed.read_count(), 1);
    }

    #[test]
    fn mixture_target_mean() {
        let d = generate(&ScenarioSpec::new(Scenario::TsMixture), 2).unwrap();
        assert!((mean(d.sealed.reveal_for_evaluation()) - 0.84).abs() < 0.2);
    }

    #[test]
    fn zero_heterogeneity_fixes_parameters() {
        let spec = ScenarioSpec { scenario: Scenario::MsdaHier, sigma: 0.0, ..ScenarioSpec::default() };
        let d = generate(&spec, 3).unwrap();
        assert_eq!(d.sources.len(), 3);
        for p in &d.params[..3] {
            assert_eq!(*p, DomainParams { mu: 0.0, beta1: 1.0, beta2: 2.0 });
        }
        assert_eq!((d.params[3].beta1, d.params[3].beta2), (1.0, 2.0));
    }

    #[test]
    fn generation_is_a_function_of_spec_and_seed() {
        let spec = ScenarioSpec { scenario: Scenario::MsdaHier, ..ScenarioSpec::default() };
        let a = generate(&spec, 9).unwrap();
        let b = generate(&spec, 9).unwrap();
        let c = generate(&spec, 10).unwrap();
        assert_eq!(a.target.x(), b.target.x());
        assert_eq!(a.sources[2].labels().unwrap().y(), b.sources[2].labels().unwrap().y());
        assert_ne!(a.target.x(), c.target.x());
    }

    #[test]
    fn oracle_weights_average_to_one_on_source() {
        let spec = ScenarioSpec::new(Scenario::TsLinear);
        let d = generate(&spec, 4).unwrap();
        let w = oracle_weights(&spec, d.sources[0].labels().unwrap().y()).unwrap();
        assert!((mean(w.view()) - 1.0).abs() < 0.05, "{}", mean(w.view()));
    }

    #[test]
    fn variance_convention_changes_spread() {
        let sd = ScenarioSpec::new(Scenario::TsLinear);
        let var = ScenarioSpec { convention: Convention::Variance, ..sd.clone() };
        let a = generate(&sd, 5).unwrap();
        let b = generate(&var, 5).unwrap();
        let spread = |v: ArrayView1<f64>| crate::stats::scale_or_one(v);
        let (sa, sb) = (spread(a.sealed.reveal_for_evaluation()), spread(b.sealed.reveal_for_evaluation()));
        assert!((sa - 0.5).abs() < 0.05 && (sb - 0.5f64.sqrt()).abs() < 0.05, "{sa} {sb}");
        assert!("ts-cubic".parse::<Scenario>().is_err());
        assert_eq!("msda-hier".parse::<Scenario>().unwrap(), Scenario::MsdaHier);
    }
}
