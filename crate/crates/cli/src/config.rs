//! The run configuration: one TOML document plus command-line overrides.
//!
//! Every key has a default, so an empty file (or no file) is a valid
//! configuration. Unknown keys are rejected. Only the top-level `seed` is
//! user-facing; all other seeds are derived from it.

use std::path::Path;

use msda::adversarial::AdvConfig;
use msda::ensemble::{EnsembleConfig, Scheme};
use msda::label_shift::BbseConfig;
use msda::sim::{Convention, ExperimentConfig, Method, Scenario, ScenarioSpec};
use msda::single_da::SingleDaConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Ensemble weighting used by `fit`.
    pub scheme: Scheme,
    /// Outer iterations `T` of each single-source run.
    pub max_iter: usize,
    /// Convergence tolerance `τ` on the per-category weights.
    pub tol: f64,
    pub merged_mean_column: bool,
    pub cross_fit_diagonal: bool,
    /// Weight estimation (`L`, `ε`, spline knots `J`, ...).
    pub bbse: BbseConfig,
    /// Networks and adversarial training (`λ`, clip `c`, epochs, learning rates, ...).
    pub adv: AdvConfig,
    pub simulate: SimulateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let single = SingleDaConfig::default();
        let ens = EnsembleConfig::default();
        Self {
            seed: 0,
            scheme: Scheme::Blend,
            max_iter: single.max_iter,
            tol: single.tol,
            merged_mean_column: ens.merged_mean_column,
            cross_fit_diagonal: ens.cross_fit_diagonal,
            bbse: single.bbse,
            adv: single.adv,
            simulate: SimulateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub scenario: Scenario,
    pub sigma: f64,
    pub num_sources: usize,
    pub n: usize,
    pub convention: Convention,
    pub replicates: usize,
    pub methods: Vec<Method>,
    /// Category count used by every weight estimate inside `simulate`; it
    /// replaces `bbse.num_categories` there.
    pub num_categories: usize,
    pub parallel: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let spec = ScenarioSpec::default();
        Self {
            scenario: spec.scenario,
            sigma: spec.sigma,
            num_sources: spec.num_sources,
            n: spec.n,
            convention: spec.convention,
            replicates: 100,
            methods: vec![Method::WlsEst, Method::WlsOracle],
            num_categories: 4,
            parallel: true,
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(m) | ConfigError::Invalid(m) => f.write_str(m),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.adv.seed != 0 {
            return Err("adv.seed is derived from the top-level `seed`; set that instead".into());
        }
        self.ensemble().single.validate().map_err(|e| e.to_string())?;
        let sim = &self.simulate;
        if sim.num_categories < 2 {
            return Err("simulate.num_categories must be at least 2".into());
        }
        self.experiment().validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn single(&self) -> SingleDaConfig {
        SingleDaConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            adv: self.adv.clone(),
            bbse: self.bbse.clone(),
            force_unit_weights: false,
            seed: self.seed,
        }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            single: self.single(),
            merged_mean_column: self.merged_mean_column,
            cross_fit_diagonal: self.cross_fit_diagonal,
            seed: self.seed,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let sim = &self.simulate;
        let bbse = BbseConfig { num_categories: Some(sim.num_categories), ..self.bbse.clone() };
        let mut da = self.ensemble();
        da.single.bbse = bbse.clone();
        ExperimentConfig {
            scenario: ScenarioSpec {
                scenario: sim.scenario,
                sigma: sim.sigma,
                num_sources: sim.num_sources,
                n: sim.n,
                convention: sim.convention,
            },
            methods: sim.methods.clone(),
            replicates: sim.replicates,
            seed: self.seed,
            da,
            wls_bbse: bbse,
            parallel: sim.parallel,
        }
    }

    /// Compact JSON echo embedded in output artifacts.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sede = 3").is_err());
        assert!(RunConfig::parse("[adv]\nlamda = 1.0").is_err());
        assert!(RunConfig::parse("[simulate]\nscenario = \"ts-cubic\"").is_err());
    }

    #[test]
    fn nested_keys_reach_the_library_configs() {
        let cfg = RunConfig::parse(
            "seed = 11\nscheme = \"stack\"\n[bbse]\nepsilon = 0.1\n[adv]\nlambda = 0.5\nepochs = 20\n\
             [simulate]\nscenario = \"msda-hier\"\nmethods = [\"stack_da\"]\nnum_categories = 3",
        )
        .unwrap();
        cfg.validate().unwrap();
        let exp = cfg.experiment();
        assert_eq!(exp.seed, 11);
        assert_eq!(exp.da.single.adv.lambda, 0.5);
        assert_eq!(exp.da.single.bbse.num_categories, Some(3));
        assert_eq!(exp.wls_bbse.epsilon, 0.1);
        assert_eq!(exp.scenario.scenario, Scenario::MsdaHier);
        assert_eq!(cfg.scheme, Scheme::Stack);
    }

    #[test]
    fn explicit_network_seed_is_refused() {
        let cfg = RunConfig::parse("[adv]\nseed = 4").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::parse("seed = 5\n[adv]\nclip = 0.05").unwrap();
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }
}
