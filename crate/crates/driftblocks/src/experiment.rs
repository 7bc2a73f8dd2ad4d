//! Monte Carlo harness: replicated simulate-then-estimate runs over a grid
//! of sample sizes and `(l, k)` schedules, with the aggregations used to
//! judge the estimator (relative-error grid, MAE curve, and an empirical
//! check of the limiting normal law).
//!
//! Replications are embarrassingly parallel; each one derives its own seed
//! from `(base_seed, n, l, k, rep)` so any cell can be recomputed in
//! isolation, and results are folded in fixed index order so reruns are
//! byte-identical regardless of thread count.

use ndarray::{Array1, ArrayView2};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::blocks::build_blocks;
use crate::driver::ThetaBox;
use crate::error::{Error, Result};
use crate::linalg;
use crate::optimize::{maximize_quasi_lik, OptimizerOptions};
use crate::rates::{check_rate_conditions, schedule, K_RANGE, L_RANGE};
use crate::rng::derive_seed;
use crate::sim::{simulate_scenario, ScenarioSpec};

/// Standard-deviation convention used in all summaries: sample, `n - 1`
/// denominator.
pub const SD_CONVENTION: &str = "sample (n-1 denominator)";

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub theta_box: ThetaBox,
    /// Sample sizes to sweep.
    pub n_set: Vec<usize>,
    /// Schedule exponent pairs `(l, k)`.
    pub lk_pairs: Vec<(i64, i64)>,
    pub reps: usize,
    pub base_seed: u64,
    /// Accept `(l, k)` pairs that fail the admissibility rules.
    pub allow_invalid_lk: bool,
    pub optimizer: OptimizerOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.n_set.is_empty() {
            return Err(Error::Config("experiment n_set must be nonempty".into()));
        }
        if self.theta_box.dim() != self.scenario.driver.d_theta() {
            return Err(Error::Dim(format!(
                "theta box dim {} but driver d_theta={}",
                self.theta_box.dim(),
                self.scenario.driver.d_theta()
            )));
        }
        if !self.theta_box.contains(self.scenario.theta0.view()) {
            return Err(Error::Config(
                "scenario theta0 lies outside the theta box".into(),
            ));
        }
        if !self.allow_invalid_lk {
            for &(l, k) in &self.lk_pairs {
                let (ok, violated) = check_rate_conditions(l, k);
                if !ok {
                    return Err(Error::Config(format!(
                        "schedule (l={l}, k={k}) violates rate conditions {violated:?}; \
                         set allow_invalid_lk to override"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One simulate-then-estimate run.
#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub n: usize,
    pub l: i64,
    pub k: i64,
    pub rep: usize,
    pub seed: u64,
    pub theta_hat: Array1<f64>,
    pub std_errors: Array1<f64>,
    pub converged: bool,
    pub dropped_blocks: usize,
}

fn run_one(config: &ExperimentConfig, n: usize, l: i64, k: i64, rep: usize) -> ReplicationResult {
    let seed = derive_seed(config.base_seed, &[n as u64, l as u64, k as u64, rep as u64]);
    let d_theta = config.scenario.driver.d_theta();
    let failed = |seed| ReplicationResult {
        n,
        l,
        k,
        rep,
        seed,
        theta_hat: Array1::from_elem(d_theta, f64::NAN),
        std_errors: Array1::from_elem(d_theta, f64::NAN),
        converged: false,
        dropped_blocks: 0,
    };
    let sched = schedule(n, l, k);
    let obs = match simulate_scenario(&config.scenario, n, sched.h, seed) {
        Ok(obs) => obs,
        Err(_) => return failed(seed),
    };
    let scheme = match build_blocks(n, sched.c) {
        Ok(s) => s,
        Err(_) => return failed(seed),
    };
    match maximize_quasi_lik(
        &obs,
        &scheme,
        &config.scenario.driver,
        &config.theta_box,
        &config.optimizer,
    ) {
        Ok(res) => ReplicationResult {
            n,
            l,
            k,
            rep,
            seed,
            theta_hat: res.theta_hat,
            std_errors: res.std_errors,
            converged: res.converged,
            dropped_blocks: res.dropped_blocks,
        },
        Err(_) => failed(seed),
    }
}

/// Run every `(n, (l,k), rep)` combination. Individual failures are
/// recorded with `converged = false`; they never abort the batch. Results
/// come back ordered by `(n, l, k, rep)` as listed in the config.
pub fn run_replications(config: &ExperimentConfig) -> Result<Vec<ReplicationResult>> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &n in &config.n_set {
        for &(l, k) in &config.lk_pairs {
            for rep in 0..config.reps {
                jobs.push((n, l, k, rep));
            }
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(n, l, k, rep)| run_one(config, n, l, k, rep))
        .collect())
}

/// Relative-error grid in the layout of the reference tables: rows
/// `k = 1..18`, columns `l = 13..19`. A cell averages
/// `|theta_hat - theta0| / theta0` over every sample size and converged
/// replication mapped to it; cells without data or with an inadmissible
/// `(l, k)` stay blank. Defined for scalar parameters only.
#[derive(Debug, Clone)]
pub struct ErrorTable {
    /// `cells[k-1][l-13]`.
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn error_table(results: &[ReplicationResult], theta0: f64) -> Result<ErrorTable> {
    if theta0 == 0.0 {
        return Err(Error::MetricUndefined);
    }
    let k_len = K_RANGE.count();
    let l_len = L_RANGE.count();
    let mut sums = vec![vec![(0.0f64, 0usize); l_len]; k_len];
    for r in results {
        if !r.converged {
            continue;
        }
        if r.theta_hat.len() != 1 {
            return Err(Error::Dim(
                "error_table is defined for scalar theta".into(),
            ));
        }
        if !K_RANGE.contains(&r.k) || !L_RANGE.contains(&r.l) {
            continue;
        }
        if !check_rate_conditions(r.l, r.k).0 {
            continue;
        }
        let cell = &mut sums[(r.k - 1) as usize][(r.l - 13) as usize];
        cell.0 += (r.theta_hat[0] - theta0).abs() / theta0.abs();
        cell.1 += 1;
    }
    let cells = sums
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(s, cnt)| if cnt > 0 { Some(s / cnt as f64) } else { None })
                .collect()
        })
        .collect();
    Ok(ErrorTable { cells })
}

pub fn error_table_csv(table: &ErrorTable) -> String {
    let mut out = String::from("k");
    for l in L_RANGE {
        out.push_str(&format!(",{l}"));
    }
    out.push('\n');
    for (i, row) in table.cells.iter().enumerate() {
        out.push_str(&(i + 1).to_string());
        for cell in row {
            match cell {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Mean absolute error by sample size, averaged over replications and
/// parameter components. Sorted by `n`.
pub fn mae_curve(results: &[ReplicationResult], theta0: &Array1<f64>) -> Vec<(usize, f64)> {
    let mut by_n: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for r in results {
        if !r.converged {
            continue;
        }
        let entry = by_n.entry(r.n).or_insert((0.0, 0));
        for (est, truth) in r.theta_hat.iter().zip(theta0.iter()) {
            entry.0 += (est - truth).abs();
            entry.1 += 1;
        }
    }
    by_n
        .into_iter()
        .map(|(n, (s, cnt))| (n, s / cnt as f64))
        .collect()
}

pub fn mae_curve_csv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("n,mae\n");
    for (n, mae) in curve {
        out.push_str(&format!("{n},{mae}\n"));
    }
    out
}

/// Per-component distribution summary of the standardized estimates.
#[derive(Debug, Clone)]
pub struct ComponentNormality {
    pub mean: f64,
    pub sd: f64,
    pub ks_stat: f64,
}

#[derive(Debug, Clone)]
pub struct NormalitySummary {
    pub components: Vec<ComponentNormality>,
    pub reps: usize,
}

/// Standardize the estimates of the replications at sample size `n` by
/// `s_i = A^T sqrt(n h) (theta_hat_i - theta0)` with `gamma = A A^T` the
/// lower Cholesky factorization, and summarize each component against the
/// standard normal (sample mean, sample sd, Kolmogorov-Smirnov statistic).
pub fn normality_summary(
    results: &[ReplicationResult],
    gamma: ArrayView2<f64>,
    theta0: &Array1<f64>,
    n: usize,
    h: f64,
) -> Result<NormalitySummary> {
    let chol = linalg::cholesky(gamma).ok_or(Error::DegenerateGamma)?;
    let d = theta0.len();
    let scale = (n as f64 * h).sqrt();
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); d];
    for r in results {
        if r.n != n || !r.converged {
            continue;
        }
        let centered = (&r.theta_hat - theta0) * scale;
        let s = chol.t().dot(&centered);
        for j in 0..d {
            samples[j].push(s[j]);
        }
    }
    let reps = samples.first().map_or(0, |v| v.len());
    let components = samples
        .iter()
        .map(|v| ComponentNormality {
            mean: mean(v),
            sd: sample_sd(v),
            ks_stat: ks_statistic_standard_normal(v),
        })
        .collect();
    Ok(NormalitySummary { components, reps })
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return if n == 1 { 0.0 } else { f64::NAN };
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Kolmogorov-Smirnov statistic of a sample against N(0, 1):
/// `sup_x |F_n(x) - Phi(x)|`.
pub fn ks_statistic_standard_normal(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in KS input"));
    let n = sorted.len() as f64;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal.cdf(x);
        d = d.max((cdf - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - cdf).abs());
    }
    d
}

/// CSV rendering of per-cell normality summaries,
/// columns `n,l,k,component,mean,sd,ks_stat,reps`.
pub fn normality_csv(rows: &[(usize, i64, i64, NormalitySummary)]) -> String {
    let mut out = String::from("n,l,k,component,mean,sd,ks_stat,reps\n");
    for (n, l, k, summary) in rows {
        for (j, c) in summary.components.iter().enumerate() {
            out.push_str(&format!(
                "{n},{l},{k},{},{},{},{},{}\n",
                j + 1,
                c.mean,
                c.sd,
                c.ks_stat,
                summary.reps
            ));
        }
    }
    out
}

/// CSV rendering of raw replication results, one row each, ordered as
/// produced by [`run_replications`].
pub fn replications_csv(results: &[ReplicationResult]) -> String {
    let d = results.first().map_or(0, |r| r.theta_hat.len());
    let mut out = String::from("n,l,k,rep,seed,converged,dropped_blocks");
    for j in 0..d {
        out.push_str(&format!(",theta_{}", j + 1));
    }
    for j in 0..d {
        out.push_str(&format!(",se_{}", j + 1));
    }
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            r.n, r.l, r.k, r.rep, r.seed, r.converged, r.dropped_blocks
        ));
        for v in r.theta_hat.iter() {
            out.push_str(&format!(",{v}"));
        }
        for v in r.std_errors.iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
