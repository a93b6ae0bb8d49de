use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{design_matrix, merge_da, merged_ols, stack_ols, wls};
use super::scenario::{generate, oracle_weights, ScenarioSpec, SimData};
use crate::data::Features;
use crate::ensemble::{fit_parts, EnsembleConfig, Scheme};
use crate::error::{Error, Result};
use crate::label_shift::{estimate_importance, BbseConfig};
use crate::seed::derive_seed;
use crate::stats::{median, quartiles, rmse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// OLS on the merged sources; the reference for every ratio.
    MergedOls,
    /// WLS with weights from the continuous-outcome BBSE.
    WlsEst,
    /// WLS with the true density ratio.
    WlsOracle,
    StackOls,
    MergeDa,
    StackDa,
    SimDa,
    StackSimDa,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::MergedOls,
        Method::WlsEst,
        Method::WlsOracle,
        Method::StackOls,
        Method::MergeDa,
        Method::StackDa,
        Method::SimDa,
        Method::StackSimDa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MergedOls => "merged_ols",
            Method::WlsEst => "wls_est",
            Method::WlsOracle => "wls_oracle",
            Method::StackOls => "stack_ols",
            Method::MergeDa => "merge_da",
            Method::StackDa => "stack_da",
            Method::SimDa => "sim_da",
            Method::StackSimDa => "stack_sim_da",
        }
    }

    fn scheme(self) -> Option<Scheme> {
        match self {
            Method::StackDa => Some(Scheme::Stack),
            Method::SimDa => Some(Scheme::Similarity),
            Method::StackSimDa => Some(Scheme::Blend),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            format!("unknown method `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Default adaptation settings for the simulator: four outcome categories and
/// twelve spline knots in every BBSE call.
pub fn default_sim_da() -> EnsembleConfig {
    let mut cfg = EnsembleConfig::default();
    cfg.single.bbse.num_categories = Some(4);
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    /// `merged_ols` is always evaluated first as the reference.
    pub methods: Vec<Method>,
    pub replicates: usize,
    /// Replicate `r` draws its data with seed `seed + r`.
    pub seed: u64,
    pub da: EnsembleConfig,
    /// Weight estimation for `wls_est`.
    pub wls_bbse: BbseConfig,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::default(),
            methods: vec![Method::MergedOls, Method::WlsEst, Method::WlsOracle],
            replicates: 100,
            seed: 0,
            da: default_sim_da(),
            wls_bbse: BbseConfig { num_categories: Some(4), ..BbseConfig::default() },
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("at least one method is required".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        self.wls_bbse.validate().map_err(Error::InvalidConfig)?;
        self.da.single.validate()?;
        Ok(())
    }

    /// Requested methods with the reference first and duplicates removed.
    pub fn method_order(&self) -> Vec<Method> {
        let mut out = vec![Method::MergedOls];
        for &m in &self.methods {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub sigma: f64,
    pub replicate: usize,
    pub method: String,
    pub rmse: Option<f64>,
    pub log_rmse_ratio: Option<f64>,
    pub warning: Option<String>,
}

/// Reads of the sealed target outcomes in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAudit {
    pub replicate: usize,
    /// Reads that happened while methods were running (must be 0).
    pub by_methods: usize,
    pub by_evaluator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub audits: Vec<LabelAudit>,
}

impl ExperimentResult {
    /// Log ratios of one method over the replicates where it succeeded.
    pub fn log_ratios(&self, method: Method) -> Vec<f64> {
        ratios_of(&self.rows, method.name())
    }

    pub fn summary(&self) -> Vec<MethodSummary> {
        summarize(&self.rows)
    }

    pub fn audit_clean(&self) -> bool {
        self.audits.iter().all(|a| a.by_methods == 0)
    }
}

fn ratios_of(rows: &[ResultRow], method: &str) -> Vec<f64> {
    rows.iter().filter(|r| r.method == method).filter_map(|r| r.log_rmse_ratio).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub replicates: usize,
    pub failures: usize,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
}

impl MethodSummary {
    pub fn iqr(&self) -> Option<f64> {
        Some(self.q75? - self.q25?)
    }
}

/// Per-method median and quartiles of the log ratios, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<MethodSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .map(|m| {
            let all = rows.iter().filter(|r| r.method == m).count();
            let v = ratios_of(rows, m);
            let (q25, q75) = if v.is_empty() {
                (None, None)
            } else {
                let (a, b) = quartiles(&v);
                (Some(a), Some(b))
            };
            MethodSummary {
                method: m.to_string(),
                replicates: all,
                failures: all - v.len(),
                median: (!v.is_empty()).then(|| median(&v)),
                q25,
                q75,
            }
        })
        .collect()
}

/// Predictions of every requested method; target outcomes are not reachable here.
fn run_methods(
    data: &SimData,
    cfg: &ExperimentConfig,
    rep_seed: u64,
) -> BTreeMap<Method, std::result::Result<Array1<f64>, String>> {
    let spec = &data.spec;
    let quadratic = spec.scenario.quadratic();
    let target: &Features = &data.target;
    let sources = &data.sources;
    let methods = cfg.method_order();
    let mut out = BTreeMap::new();

    let needs_parts: Vec<Method> = methods.iter().copied().filter(|m| m.scheme().is_some()).collect();
    let parts = if needs_parts.is_empty() {
        None
    } else {
        let with_stacking = needs_parts.iter().any(|m| *m != Method::SimDa);
        let ens = EnsembleConfig { seed: derive_seed(rep_seed, "ensemble", &[]), ..cfg.da.clone() };
        Some(fit_parts(sources, target, &ens, with_stacking).map_err(|e| e.to_string()))
    };

    for m in methods {
        let pred: Result<Array1<f64>> = match m {
            Method::MergedOls => merged_ols(sources, target, quadratic),
            Method::StackOls => stack_ols(sources, target, quadratic).map(|(p, _)| p),
            Method::WlsEst | Method::WlsOracle => single_source(sources).and_then(|src| {
                let y = src.require_labels()?.y();
                let weights = if m == Method::WlsOracle {
                    oracle_weights(spec, y)?
                } else {
                    let fs = design_matrix(src.features().x(), quadratic).slice_move(ndarray::s![.., 1..]);
                    let ft = design_matrix(target.x(), quadratic).slice_move(ndarray::s![.., 1..]);
                    let seed = derive_seed(rep_seed, "wls-bbse", &[]);
                    estimate_importance(fs.view(), y, ft.view(), &cfg.wls_bbse, seed)?.weights
                };
                wls(src, target, weights.view(), quadratic)
            }),
            Method::MergeDa => {
                let single = crate::single_da::SingleDaConfig {
                    seed: derive_seed(rep_seed, "merge-da", &[]),
                    ..cfg.da.single.clone()
                };
                merge_da(sources, target, &single)
            }
            Method::StackDa | Method::SimDa | Method::StackSimDa => match parts.as_ref().expect("fitted above") {
                Ok(p) => p
                    .model(m.scheme().expect("ensemble method"))
                    .and_then(|model| crate::ensemble::predict_ensemble(&model, target.x())),
                Err(e) => Err(Error::InvalidData(e.clone())),
            },
        };
        out.insert(m, pred.map_err(|e| e.to_string()));
    }
    out
}

fn single_source(sources: &[crate::DomainData]) -> Result<&crate::DomainData> {
    match sources {
        [one] => Ok(one),
        _ => Err(Error::InvalidConfig("weighted least squares needs a single-source scenario".into())),
    }
}

fn run_replicate(cfg: &ExperimentConfig, replicate: usize) -> Result<(Vec<ResultRow>, LabelAudit)> {
    let rep_seed = cfg.seed.wrapping_add(replicate as u64);
    let data = generate(&cfg.scenario, rep_seed)?;
    let preds = run_methods(&data, cfg, rep_seed);
    let by_methods = data.sealed.read_count();

    let truth = data.sealed.reveal_for_evaluation();
    let scores: BTreeMap<Method, std::result::Result<f64, String>> =
        preds.into_iter().map(|(m, p)| (m, p.map(|v| rmse(v.view(), truth)))).collect();
    let by_evaluator = data.sealed.read_count() - by_methods;

    let base = scores[&Method::MergedOls].as_ref().ok().copied();
    let rows = cfg
        .method_order()
        .into_iter()
        .map(|m| {
            let (rmse, warning) = match &scores[&m] {
                Ok(v) => (Some(*v), None),
                Err(e) => (None, Some(e.clone())),
            };
            let log_rmse_ratio = match (rmse, base) {
                (Some(r), Some(b)) if m == Method::MergedOls && r == b => Some(0.0),
                (Some(r), Some(b)) if b > 0.0 => Some((r / b).ln()),
                _ => None,
            };
            ResultRow {
                scenario: cfg.scenario.scenario.name().to_string(),
                sigma: cfg.scenario.sigma,
                replicate,
                method: m.name().to_string(),
                rmse,
                log_rmse_ratio,
                warning,
            }
        })
        .collect();
    Ok((rows, LabelAudit { replicate, by_methods, by_evaluator }))
}

/// Runs every replicate; method failures become warnings in the table.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let per_rep: Vec<(Vec<ResultRow>, LabelAudit)> = if cfg.parallel {
        (0..cfg.replicates).into_par_iter().map(|r| run_replicate(cfg, r)).collect::<Result<_>>()?
    } else {
        (0..cfg.replicates).map(|r| run_replicate(cfg, r)).collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    let mut audits = Vec::new();
    for (r, a) in per_rep {
        rows.extend(r);
        audits.push(a);
    }
    Ok(ExperimentResult { rows, audits })
}

pub const CSV_HEADER: [&str; 7] = ["scenario", "sigma", "replicate", "method", "rmse", "log_rmse_ratio", "warning"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the table with a leading `# config: <json>` provenance line.
pub fn write_results_csv<W: Write>(mut w: W, rows: &[ResultRow], config_json: &str) -> Result<()> {
    writeln!(w, "# config: {config_json}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(CSV_HEADER)?;
    for r in rows {
        csv.write_record([
            r.scenario.clone(),
            r.sigma.to_string(),
            r.replicate.to_string(),
            r.method.clone(),
            fmt_opt(r.rmse),
            fmt_opt(r.log_rmse_ratio),
            r.warning.clone().unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_results_csv<R: BufRead>(r: R) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::InvalidData(format!(
            "results header must be {}, found {}",
            CSV_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let parse_opt = |s: &str, what: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>()
            .map(Some)
            .map_err(|_| Error::InvalidData(format!("line {line}: `{s}` is not a number in column {what}")))
    };
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let sigma = parse_opt(&rec[1], "sigma", line)?.unwrap_or(f64::NAN);
        let replicate =
            rec[2].parse().map_err(|_| Error::InvalidData(format!("line {line}: bad replicate `{}`", &rec[2])))?;
        rows.push(ResultRow {
            scenario: rec[0].to_string(),
            sigma,
            replicate,
            method: rec[3].to_string(),
            rmse: parse_opt(&rec[4], "rmse", line)?,
            log_rmse_ratio: parse_opt(&rec[5], "log_rmse_ratio", line)?,
            warning: (!rec[6].is_empty()).then(|| rec[6].to_string()),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::Scenario;

    fn quick(scenario: Scenario, methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            scenario: ScenarioSpec { scenario, n: 120, ..ScenarioSpec::default() },
            methods,
            replicates: 2,
            seed: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn reference_ratio_is_exactly_zero() {
        let cfg = quick(Scenario::TsLinear, vec![Method::WlsOracle]);
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.rows.len(), 4);
        for r in res.rows.iter().filter(|r| r.method == "merged_ols") {
            assert_eq!(r.log_rmse_ratio, Some(0.0));
        }
        assert!(res.audit_clean());
        assert!(res.audits.iter().all(|a| a.by_evaluator == 1));
    }

    #[test]
    fn repeated_runs_give_identical_tables() {
        let cfg = quick(Scenario::TsSine, vec![Method::WlsEst]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&ExperimentConfig { parallel: false, ..cfg }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_source_method_on_single_source_is_a_warning() {
        let cfg = quick(Scenario::MsdaHier, vec![Method::WlsOracle, Method::StackOls]);
        let res = run_experiment(&cfg).unwrap();
        let wls: Vec<&ResultRow> = res.rows.iter().filter(|r| r.method == "wls_oracle").collect();
        assert!(wls.iter().all(|r| r.rmse.is_none() && r.warning.is_some()));
        assert!(res.rows.iter().filter(|r| r.method == "stack_ols").all(|r| r.rmse.is_some()));
    }

    #[test]
    fn csv_round_trip_and_summary() {
        let rows = vec![
            ResultRow {
                scenario: "ts-linear".into(),
                sigma: 0.5,
                replicate: 0,
                method: "merged_ols".into(),
                rmse: Some(0.4),
                log_rmse_ratio: Some(0.0),
                warning: None,
            },
            ResultRow {
                scenario: "ts-linear".into(),
                sigma: 0.5,
                replicate: 0,
                method: "wls_est".into(),
                rmse: None,
                log_rmse_ratio: None,
                warning: Some("failed, badly".into()),
            },
        ];
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &rows, "{\"a\":1}").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config: {\"a\":1}\nscenario,sigma,"));
        let back = read_results_csv(&buf[..]).unwrap();
        assert_eq!(back, rows);
        let s = summarize(&back);
        assert_eq!(s[0].median, Some(0.0));
        assert_eq!((s[1].failures, s[1].median), (1, None));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("darn".parse::<Method>().is_err());
    }
}
