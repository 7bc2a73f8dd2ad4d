//! Run-configuration document.
//!
//! One JSON file fully determines a run. Sections:
//!
//! * `scenario` — data-generating process (`vasicek_1d`, `heston_2d`, or
//!   `constant_vol`) with optional parameter overrides;
//! * `driver` — drift function; optional for the named scenarios, which
//!   carry their canonical drivers;
//! * `theta_box` — closed parameter search box;
//! * `rates` — `(l, k)` schedule exponents, used to derive `h` and `c`
//!   where they are not given explicitly;
//! * `simulate` / `estimate` / `experiment` — per-subcommand inputs.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::driver::{builtin_driver, DriverSpec, ThetaBox};
use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::optimize::OptimizerOptions;
use crate::rates;
use crate::sim::{CirParams, FactorModel, ScenarioSpec, VasicekParams, VolatilityRule};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<DriverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_box: Option<ThetaBoxConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_noise: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<FactorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volatility: Option<VolatilityConfig>,
    /// Price drift coefficient of the `heston_2d` scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum FactorConfig {
    None,
    Vasicek { a: f64, b: f64, sigma: f64, x0: f64 },
    Cir {
        #[serde(rename = "L")]
        speed: f64,
        beta: f64,
        sigma: f64,
        nu0: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum VolatilityConfig {
    SqrtAbsShift { offset: f64 },
    Constant { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaBoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub l: i64,
    pub k: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Path to the observation CSV (header `k,t,x_1..,y_1..`).
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_set: Vec<usize>,
    pub lk_pairs: Vec<(i64, i64)>,
    pub reps: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub allow_invalid_lk: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

/// A scenario assembled from the config, plus notes about defaulted choices
/// that should be echoed in run metadata.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub spec: ScenarioSpec,
    pub notes: Vec<String>,
}

fn matrix_from_rows(rows: &[Vec<f64>], key: &str) -> Result<Array2<f64>> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::Config(format!("{key}: matrix must be nonempty")));
    }
    let c = rows[0].len();
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{key}: ragged matrix rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((r, c), flat)
        .map_err(|e| Error::Config(format!("{key}: bad matrix shape: {e}")))
}

fn factor_from_config(cfg: &FactorConfig) -> FactorModel {
    match cfg {
        FactorConfig::None => FactorModel::None,
        FactorConfig::Vasicek { a, b, sigma, x0 } => FactorModel::Vasicek(VasicekParams {
            speed: *a,
            level: *b,
            sigma: *sigma,
            x0: *x0,
        }),
        FactorConfig::Cir {
            speed,
            beta,
            sigma,
            nu0,
        } => FactorModel::Cir(CirParams {
            speed: *speed,
            level: *beta,
            sigma: *sigma,
            nu0: *nu0,
        }),
    }
}

fn volatility_from_config(cfg: &VolatilityConfig) -> Result<VolatilityRule> {
    Ok(match cfg {
        VolatilityConfig::SqrtAbsShift { offset } => VolatilityRule::SqrtAbsShift { offset: *offset },
        VolatilityConfig::Constant { matrix } => {
            VolatilityRule::Constant(matrix_from_rows(matrix, "scenario.volatility.matrix")?)
        }
    })
}

fn driver_from_config(cfg: &DriverConfig) -> Result<DriverSpec> {
    builtin_driver(&cfg.name, &cfg.params)
}

/// Assemble the scenario described by the `scenario` (and optionally
/// `driver`) sections.
pub fn build_scenario(cfg: &RunConfig) -> Result<BuiltScenario> {
    let sc = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Config("missing config section `scenario`".into()))?;
    let mut notes = Vec::new();

    let mut spec = match sc.name.as_str() {
        "vasicek_1d" => ScenarioSpec::vasicek_1d(),
        "heston_2d" => {
            let mu = sc
                .mu
                .or_else(|| {
                    cfg.driver
                        .as_ref()
                        .and_then(|d| d.params.get("mu").copied())
                })
                .unwrap_or_else(|| {
                    notes.push(
                        "scenario.mu not specified for heston_2d; defaulting to mu = 0".into(),
                    );
                    0.0
                });
            ScenarioSpec::heston_2d(mu)
        }
        "constant_vol" => {
            let vol = sc.volatility.as_ref().ok_or_else(|| {
                Error::Config("constant_vol scenario requires `scenario.volatility`".into())
            })?;
            let rule = volatility_from_config(vol)?;
            let matrix = match rule {
                VolatilityRule::Constant(m) => m,
                _ => {
                    return Err(Error::Config(
                        "constant_vol scenario requires a constant volatility matrix".into(),
                    ))
                }
            };
            let driver_cfg = cfg.driver.as_ref().ok_or_else(|| {
                Error::Config("constant_vol scenario requires a `driver` section".into())
            })?;
            let driver = driver_from_config(driver_cfg)?;
            let theta0 = sc.theta0.as_ref().ok_or_else(|| {
                Error::Config("constant_vol scenario requires `scenario.theta0`".into())
            })?;
            let d_y = matrix.nrows();
            let y0 = sc.y0.clone().unwrap_or_else(|| vec![0.0; d_y]);
            ScenarioSpec::constant_vol(
                matrix,
                driver,
                Array1::from_vec(theta0.clone()),
                Array1::from_vec(y0),
            )
        }
        other => {
            return Err(Error::Config(format!(
                "unknown scenario name `{other}` (expected vasicek_1d, heston_2d, constant_vol)"
            )))
        }
    };

    if sc.name != "constant_vol" {
        if let Some(d) = &cfg.driver {
            spec.driver = driver_from_config(d)?;
        }
        if let Some(t0) = &sc.theta0 {
            spec.theta0 = Array1::from_vec(t0.clone());
        }
        if let Some(y0) = &sc.y0 {
            spec.y0 = Array1::from_vec(y0.clone());
        }
        if let Some(f) = &sc.factor {
            spec.factor = factor_from_config(f);
        }
        if let Some(v) = &sc.volatility {
            spec.volatility = volatility_from_config(v)?;
        }
    }
    if let Some(s) = sc.substeps {
        spec.substeps = s;
    }
    if let Some(shared) = sc.shared_noise {
        spec.shared_noise = shared;
    }
    spec.validate()?;
    Ok(BuiltScenario { spec, notes })
}

pub fn build_theta_box(cfg: &RunConfig) -> Result<ThetaBox> {
    let tb = cfg
        .theta_box
        .as_ref()
        .ok_or_else(|| Error::Config("missing config section `theta_box`".into()))?;
    ThetaBox::new(
        Array1::from_vec(tb.lower.clone()),
        Array1::from_vec(tb.upper.clone()),
    )
}

/// Step size for the simulate subcommand: explicit `simulate.h` wins,
/// otherwise it is derived from the `rates` section.
pub fn simulate_step(cfg: &RunConfig, n: usize) -> Result<f64> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("missing config section `simulate`".into()))?;
    if let Some(h) = sim.h {
        return Ok(h);
    }
    if let Some(r) = &cfg.rates {
        return Ok(rates::schedule(n, r.l, r.k).h);
    }
    Err(Error::Config(
        "simulate.h not given and no `rates` section to derive it from".into(),
    ))
}

/// `(c, h)` for the estimate subcommand, falling back to the `rates`
/// section for whichever is absent.
pub fn estimate_params(cfg: &RunConfig, n: usize) -> Result<(usize, f64)> {
    let est = cfg
        .estimate
        .as_ref()
        .ok_or_else(|| Error::Config("missing config section `estimate`".into()))?;
    let sched = cfg.rates.as_ref().map(|r| rates::schedule(n, r.l, r.k));
    let c = match (est.c, &sched) {
        (Some(c), _) => c,
        (None, Some(s)) => s.c,
        (None, None) => {
            return Err(Error::Config(
                "estimate.c not given and no `rates` section to derive it from".into(),
            ))
        }
    };
    let h = match (est.h, &sched) {
        (Some(h), _) => h,
        (None, Some(s)) => s.h,
        (None, None) => {
            return Err(Error::Config(
                "estimate.h not given and no `rates` section to derive it from".into(),
            ))
        }
    };
    Ok((c, h))
}

/// Assemble the full Monte Carlo experiment configuration.
pub fn build_experiment(cfg: &RunConfig) -> Result<(ExperimentConfig, Vec<String>)> {
    let section = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| Error::Config("missing config section `experiment`".into()))?;
    let built = build_scenario(cfg)?;
    let theta_box = build_theta_box(cfg)?;
    let mut optimizer = OptimizerOptions::default();
    if let Some(m) = section.max_iter {
        optimizer.max_iter = m;
    }
    let config = ExperimentConfig {
        scenario: built.spec,
        theta_box,
        n_set: section.n_set.clone(),
        lk_pairs: section.lk_pairs.clone(),
        reps: section.reps,
        base_seed: section.base_seed,
        allow_invalid_lk: section.allow_invalid_lk,
        optimizer,
    };
    config.validate()?;
    Ok((config, built.notes))
}
