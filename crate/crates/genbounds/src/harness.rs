//! Experiment orchestration: config ingestion, replicate scheduling,
//! coverage and sweep experiments, and CSV/JSON/SVG emission.
//!
//! Replicates are the unit of parallelism. Every random stream is derived
//! from (master_seed, replicate index, role tag), so results are
//! bit-identical regardless of worker count or scheduling; aggregation
//! consumes replicates in index order.

use crate::bounds::{
    rhs_thm13, rhs_thm2, rhs_thm3, rhs_thm4, BoundInputs, BoundReport, Variant,
};
use crate::dynamics::{
    geometric_gap, integral_gap, integrate_coupled, worst_case_gap, CoupledTrajectory,
    DynamicsError, SdeConfig,
};
use crate::fractal::estimate_trajectory_dimension;
use crate::pacbayes::{
    eval_thm5, eval_thm6, kl_oracle, kl_upper_bound, median_grid_gap, optimal_lambda,
    renyi_oracle, renyi_upper_bound, SmoothedOccupation,
};
use crate::problems::{
    estimate_dissipativity, make_problem, sample_dataset, DissipativityCertificate,
    LearningProblem, ProblemConfig,
};
use crate::rng::substream;
use crate::stats::{binomial_interval_95, iqr, linear_fit, mean, median};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("sweep needs at least 3 values, got {0}")]
    TooFewSweepValues(usize),
    #[error("unknown sweep parameter {0:?} (expected n, alpha, t or s)")]
    BadSweepParam(String),
    #[error("replicate failed: {0}")]
    Replicate(String),
}

// role tags for stream derivation
const TAG_PROBLEM: u64 = 1;
const TAG_DATASET: u64 = 2;
const TAG_TRAJECTORY: u64 = 3;
const TAG_THM5_MC: u64 = 4;
const TAG_THM6_DRAW: u64 = 5;
const TAG_CERTIFICATE: u64 = 6;

const DISSIPATIVITY_PROBES: usize = 2000;
const DISSIPATIVITY_RADIUS: f64 = 1.0;
const DISSIPATIVITY_K_MAX: f64 = 0.5;

/// Smoothing scale rule: a fixed number or "median_grid_gap".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SmoothingRule {
    Fixed(f64),
    Named(String),
}

impl Default for SmoothingRule {
    fn default() -> Self {
        SmoothingRule::Named("median_grid_gap".into())
    }
}

impl SmoothingRule {
    fn resolve(&self, traj: &CoupledTrajectory) -> Result<f64, HarnessError> {
        match self {
            SmoothingRule::Fixed(s) if *s > 0.0 => Ok(*s),
            SmoothingRule::Fixed(s) => {
                Err(HarnessError::Config(format!("smoothing must be > 0, got {s}")))
            }
            SmoothingRule::Named(name) if name == "median_grid_gap" => {
                Ok(median_grid_gap(&traj.w))
            }
            SmoothingRule::Named(name) => Err(HarnessError::Config(format!(
                "unknown smoothing rule {name:?}"
            ))),
        }
    }
}

/// Lambda rule: "sqrt_n", "optimize" (closed-form minimizer of the
/// theorem-5 bound normalized by lambda), or a fixed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaRule {
    Fixed(f64),
    Named(String),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Named("sqrt_n".into())
    }
}

impl LambdaRule {
    fn resolve(
        &self,
        n: usize,
        zeta: f64,
        sigma: f64,
        divergence: f64,
    ) -> Result<f64, HarnessError> {
        match self {
            LambdaRule::Fixed(l) if *l > 0.0 => Ok(*l),
            LambdaRule::Fixed(l) => {
                Err(HarnessError::Config(format!("lambda must be > 0, got {l}")))
            }
            LambdaRule::Named(name) if name == "sqrt_n" => Ok((n as f64).sqrt()),
            LambdaRule::Named(name) if name == "optimize" => {
                let a = divergence + (1.0 / zeta).ln();
                let b = sigma * sigma / (2.0 * n as f64);
                Ok(optimal_lambda(a.max(1e-12), b.max(1e-300)))
            }
            LambdaRule::Named(name) => Err(HarnessError::Config(format!(
                "unknown lambda rule {name:?}"
            ))),
        }
    }
}

/// Gamma source: "alpha" (noise tail index capped by the ambient
/// dimension), "estimate" (box-dimension of the empirical path), or a
/// fixed override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSource {
    Fixed(f64),
    Named(String),
}

impl Default for GammaSource {
    fn default() -> Self {
        GammaSource::Named("alpha".into())
    }
}

impl GammaSource {
    fn resolve(&self, traj: &CoupledTrajectory) -> Result<f64, HarnessError> {
        let cap = traj.meta.dim as f64 + 0.5;
        match self {
            GammaSource::Fixed(g) if *g >= 0.0 => Ok(g.min(cap)),
            GammaSource::Fixed(g) => {
                Err(HarnessError::Config(format!("gamma must be >= 0, got {g}")))
            }
            GammaSource::Named(name) if name == "alpha" => {
                Ok(traj.meta.alpha.min(traj.meta.dim as f64))
            }
            GammaSource::Named(name) if name == "estimate" => {
                let est = estimate_trajectory_dimension(&traj.w, 9)
                    .map_err(|e| HarnessError::Config(format!("gamma estimate failed: {e}")))?;
                Ok(est.gamma_hat.min(cap))
            }
            GammaSource::Named(name) => Err(HarnessError::Config(format!(
                "unknown gamma source {name:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub zeta: f64,
    #[serde(default)]
    pub smoothing: SmoothingRule,
    #[serde(default)]
    pub lambda: LambdaRule,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub gamma_source: GammaSource,
    #[serde(default)]
    pub variant: Variant,
}

fn default_beta() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub replicates: usize,
    /// Dataset size n.
    pub n: usize,
    pub master_seed: u64,
    #[serde(default = "default_theorems")]
    pub theorems: Vec<u8>,
    /// Worker threads; None lets the thread pool decide. Outputs do not
    /// depend on this.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_thm5_draws")]
    pub thm5_draws: usize,
}

fn default_theorems() -> Vec<u8> {
    vec![2, 3, 4, 5, 6, 13]
}

fn default_thm5_draws() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub dynamics: SdeConfig,
    pub bounds: BoundsSection,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if let Ok(seed) = std::env::var("GENBOUNDS_SEED") {
            let seed: u64 = seed.parse().map_err(|_| {
                HarnessError::Config(format!("GENBOUNDS_SEED must be a u64, got {seed:?}"))
            })?;
            cfg.experiment.master_seed = seed;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.bounds.zeta > 0.0 && self.bounds.zeta < 1.0) {
            return Err(HarnessError::Config("zeta must lie in (0, 1)".into()));
        }
        if !(self.bounds.beta > 1.0) {
            return Err(HarnessError::Config("beta must exceed 1".into()));
        }
        if self.experiment.n == 0 {
            return Err(HarnessError::Config("dataset size n must be >= 1".into()));
        }
        for t in &self.experiment.theorems {
            if ![2u8, 3, 4, 5, 6, 13].contains(t) {
                return Err(HarnessError::Config(format!("unknown theorem id {t}")));
            }
        }
        // problem/dynamics sections validate through their own modules
        let probe = make_problem(&self.problem, &mut substream(0, 0, TAG_PROBLEM))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.dynamics
            .validate(&probe)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}

/// One replicate's evaluated bounds and summary scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub reports: Vec<BoundReport>,
    pub geometric_gap: f64,
    pub worst_case_gap: f64,
    pub integral_gap: f64,
    pub gamma: f64,
    pub smoothing_s: f64,
    pub lambda: f64,
}

/// Shared per-experiment state derived once from the master seed.
pub struct ExperimentContext {
    pub problem: LearningProblem,
    pub certificate: Option<DissipativityCertificate>,
    pub notes: Vec<String>,
}

pub fn prepare_context(cfg: &ExperimentConfig) -> Result<ExperimentContext, HarnessError> {
    let seed = cfg.experiment.master_seed;
    let mut problem = make_problem(&cfg.problem, &mut substream(seed, 0, TAG_PROBLEM))
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut notes = Vec::new();
    let certificate = if cfg.experiment.theorems.contains(&13) {
        match estimate_dissipativity(
            &problem,
            &mut substream(seed, 0, TAG_CERTIFICATE),
            DISSIPATIVITY_PROBES,
            DISSIPATIVITY_RADIUS,
            DISSIPATIVITY_K_MAX,
        ) {
            Ok(cert) => {
                problem.dissipativity = Some(cert);
                Some(cert)
            }
            Err(e) => {
                notes.push(format!("thm13 disabled: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(ExperimentContext {
        problem,
        certificate,
        notes,
    })
}

/// Run one replicate end to end: dataset, coupled trajectory, and every
/// enabled bound. Errors come back as strings so the caller can count
/// them without aborting the batch.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    ctx: &ExperimentContext,
    index: usize,
) -> Result<ReplicateOutcome, String> {
    let seed = cfg.experiment.master_seed;
    let r = index as u64;
    let err = |e: &dyn std::fmt::Display| format!("replicate {index}: {e}");

    let dataset = sample_dataset(
        &ctx.problem,
        cfg.experiment.n,
        &mut substream(seed, r, TAG_DATASET),
    )
    .map_err(|e| err(&e))?;
    let traj = integrate_coupled(
        &ctx.problem,
        &dataset,
        &cfg.dynamics,
        &mut substream(seed, r, TAG_TRAJECTORY),
    )
    .map_err(|e| err(&e))?;
    evaluate_bounds(
        cfg,
        &ctx.problem,
        ctx.certificate,
        &dataset,
        &traj,
        index,
        &mut substream(seed, r, TAG_THM5_MC),
        &mut substream(seed, r, TAG_THM6_DRAW),
    )
    .map_err(|e| err(&e))
}

/// Evaluate every enabled bound on an existing dataset/trajectory pair.
/// Used by `run_replicate` and by the CLI when re-scoring a persisted run.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_bounds(
    cfg: &ExperimentConfig,
    problem: &LearningProblem,
    certificate: Option<DissipativityCertificate>,
    dataset: &crate::problems::Dataset,
    traj: &CoupledTrajectory,
    index: usize,
    rng_thm5: &mut crate::rng::RandomStream,
    rng_thm6: &mut crate::rng::RandomStream,
) -> Result<ReplicateOutcome, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();

    let gamma = cfg.bounds.gamma_source.resolve(traj).map_err(|e| err(&e))?;
    let s = cfg.bounds.smoothing.resolve(traj).map_err(|e| err(&e))?;
    let geom = geometric_gap(traj);
    let integral = integral_gap(traj);
    let worst = worst_case_gap(traj, problem, dataset).map_err(|e| err(&e))?;
    let lambda = cfg
        .bounds
        .lambda
        .resolve(
            cfg.experiment.n,
            cfg.bounds.zeta,
            problem.constants().sigma,
            integral / (s * s),
        )
        .map_err(|e| err(&e))?;

    let constants = problem.constants();
    let inputs = BoundInputs {
        n: cfg.experiment.n,
        zeta: cfg.bounds.zeta,
        gamma,
        lipschitz: constants.lipschitz,
        smoothness: constants.smoothness,
        sigma: constants.sigma,
        sigma_coord: constants.sigma_coord,
        horizon: traj.meta.horizon,
        dim: problem.dim(),
        smoothing_s: s,
        lambda,
        beta: cfg.bounds.beta,
        dissipativity_m: certificate.map(|c| c.m),
        dissipativity_k: certificate.map(|c| c.k),
    };

    let variant = cfg.bounds.variant;
    let mut reports = Vec::new();
    for theorem in &cfg.experiment.theorems {
        let report = match theorem {
            2 => rhs_thm2(geom, &inputs).map_err(|e| err(&e))?.with_lhs(worst),
            3 => {
                let rhs = rhs_thm3(&inputs, variant).map_err(|e| err(&e))?;
                synthetic_report("thm3", rhs, &inputs).with_lhs(geom)
            }
            4 => rhs_thm4(&inputs, variant)
                .map_err(|e| err(&e))?
                .with_lhs(worst),
            5 => eval_thm5(
                traj,
                problem,
                dataset,
                &inputs,
                cfg.experiment.thm5_draws,
                rng_thm5,
            )
            .map_err(|e| err(&e))?,
            6 => eval_thm6(traj, problem, dataset, &inputs, rng_thm6).map_err(|e| err(&e))?,
            13 => {
                if certificate.is_none() {
                    continue;
                }
                rhs_thm13(&inputs)
                    .map_err(|e| err(&e))?
                    .with_lhs(geom * geom)
            }
            other => return Err(format!("unknown theorem {other}")),
        };
        reports.push(report);
    }
    Ok(ReplicateOutcome {
        index,
        reports,
        geometric_gap: geom,
        worst_case_gap: worst,
        integral_gap: integral,
        gamma,
        smoothing_s: s,
        lambda,
    })
}

/// Re-score a persisted run: the problem carries its own certificate and
/// the trajectory/dataset come from disk.
pub fn evaluate_run(
    cfg: &ExperimentConfig,
    problem: &LearningProblem,
    dataset: &crate::problems::Dataset,
    traj: &CoupledTrajectory,
) -> Result<ReplicateOutcome, HarnessError> {
    let seed = cfg.experiment.master_seed;
    evaluate_bounds(
        cfg,
        problem,
        problem.dissipativity,
        dataset,
        traj,
        0,
        &mut substream(seed, 0, TAG_THM5_MC),
        &mut substream(seed, 0, TAG_THM6_DRAW),
    )
    .map_err(HarnessError::Replicate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub steps: usize,
    pub geometric_gap: f64,
    pub worst_case_gap: f64,
    pub integral_gap: f64,
    /// Box-dimension estimate of the empirical path, when the covering
    /// curve has enough usable levels.
    pub gamma_hat: Option<f64>,
}

pub struct SimulationArtifacts {
    pub problem: LearningProblem,
    pub dataset: crate::problems::Dataset,
    pub trajectory: CoupledTrajectory,
    pub summary: SimulationSummary,
}

/// Replicate 0 of the configured experiment, kept whole for persistence.
pub fn run_simulation(cfg: &ExperimentConfig) -> Result<SimulationArtifacts, HarnessError> {
    let ctx = prepare_context(cfg)?;
    let seed = cfg.experiment.master_seed;
    let dataset = sample_dataset(
        &ctx.problem,
        cfg.experiment.n,
        &mut substream(seed, 0, TAG_DATASET),
    )
    .map_err(|e| HarnessError::Replicate(e.to_string()))?;
    let trajectory = integrate_coupled(
        &ctx.problem,
        &dataset,
        &cfg.dynamics,
        &mut substream(seed, 0, TAG_TRAJECTORY),
    )?;
    let worst = worst_case_gap(&trajectory, &ctx.problem, &dataset)
        .map_err(|e| HarnessError::Replicate(e.to_string()))?;
    let gamma_hat = estimate_trajectory_dimension(&trajectory.w, 9)
        .ok()
        .map(|e| e.gamma_hat);
    let summary = SimulationSummary {
        steps: trajectory.times.len().saturating_sub(1),
        geometric_gap: geometric_gap(&trajectory),
        worst_case_gap: worst,
        integral_gap: integral_gap(&trajectory),
        gamma_hat,
    };
    Ok(SimulationArtifacts {
        problem: ctx.problem,
        dataset,
        trajectory,
        summary,
    })
}

/// A single-term report for theorems whose evaluator returns a bare rhs.
fn synthetic_report(theorem: &str, rhs: f64, inputs: &BoundInputs) -> BoundReport {
    BoundReport {
        theorem: theorem.to_string(),
        lhs: None,
        rhs,
        terms: [("total".to_string(), rhs)].into_iter().collect(),
        holds: None,
        caveats: vec!["asymptotic-N".into(), "grid sup".into()],
        inputs: *inputs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCoverage {
    pub holds: u64,
    pub evaluated: u64,
    pub hold_rate: f64,
    /// Exact binomial 95% interval on the hold rate.
    pub interval95: (f64, f64),
    pub mean_lhs: f64,
    pub mean_rhs: f64,
    /// Mean lhs/rhs; how vacuous the bound is in practice.
    pub mean_ratio: f64,
    pub mean_terms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replicates: usize,
    pub errors: usize,
    pub notes: Vec<String>,
    pub theorems: BTreeMap<String, TheoremCoverage>,
}

fn install_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport, HarnessError> {
    let r = cfg.experiment.replicates;
    if r == 0 {
        return Ok(CoverageReport {
            replicates: 0,
            errors: 0,
            notes: vec!["no replicates".into()],
            theorems: BTreeMap::new(),
        });
    }
    let ctx = prepare_context(cfg)?;
    let results: Vec<Result<ReplicateOutcome, String>> = install_pool(
        cfg.experiment.workers,
        || (0..r).into_par_iter().map(|i| run_replicate(cfg, &ctx, i)).collect(),
    );
    let mut notes = ctx.notes.clone();
    let mut outcomes = Vec::with_capacity(r);
    let mut errors = 0usize;
    for res in results {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                errors += 1;
                notes.push(e);
            }
        }
    }
    Ok(aggregate_coverage(r, errors, notes, &outcomes))
}

fn aggregate_coverage(
    replicates: usize,
    errors: usize,
    notes: Vec<String>,
    outcomes: &[ReplicateOutcome],
) -> CoverageReport {
    let mut by_theorem: BTreeMap<String, Vec<&BoundReport>> = BTreeMap::new();
    for o in outcomes {
        for rep in &o.reports {
            by_theorem.entry(rep.theorem.clone()).or_default().push(rep);
        }
    }
    let theorems = by_theorem
        .into_iter()
        .map(|(name, reps)| {
            let evaluated = reps.len() as u64;
            let holds = reps.iter().filter(|r| r.holds == Some(true)).count() as u64;
            let lhs: Vec<f64> = reps.iter().filter_map(|r| r.lhs).collect();
            let rhs: Vec<f64> = reps.iter().map(|r| r.rhs).collect();
            let ratios: Vec<f64> = reps
                .iter()
                .filter_map(|r| r.lhs.map(|l| l / r.rhs))
                .collect();
            let mut mean_terms = BTreeMap::new();
            for key in reps[0].terms.keys() {
                let vals: Vec<f64> = reps.iter().filter_map(|r| r.terms.get(key).copied()).collect();
                mean_terms.insert(key.clone(), mean(&vals));
            }
            let cov = TheoremCoverage {
                holds,
                evaluated,
                hold_rate: holds as f64 / evaluated as f64,
                interval95: binomial_interval_95(holds, evaluated),
                mean_lhs: if lhs.is_empty() { f64::NAN } else { mean(&lhs) },
                mean_rhs: mean(&rhs),
                mean_ratio: if ratios.is_empty() { f64::NAN } else { mean(&ratios) },
                mean_terms,
            };
            (name, cov)
        })
        .collect();
    CoverageReport {
        replicates,
        errors,
        notes,
        theorems,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    Alpha,
    T,
    S,
}

impl std::str::FromStr for SweepParam {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(SweepParam::N),
            "alpha" => Ok(SweepParam::Alpha),
            "t" => Ok(SweepParam::T),
            "s" => Ok(SweepParam::S),
            other => Err(HarnessError::BadSweepParam(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub median_geometric_gap: f64,
    pub iqr_geometric_gap: f64,
    pub median_worst_case_gap: f64,
    pub iqr_worst_case_gap: f64,
    pub median_gamma_hat: f64,
    pub iqr_gamma_hat: f64,
    pub median_rhs: BTreeMap<String, f64>,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    /// log-log slope of median geometric gap against the swept value
    /// (reported for n sweeps; the rate check).
    pub loglog_slope_geometric_gap: Option<f64>,
}

fn apply_sweep_value(
    cfg: &ExperimentConfig,
    param: SweepParam,
    value: f64,
) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = cfg.clone();
    match param {
        SweepParam::N => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(HarnessError::Config(format!(
                    "n sweep values must be positive integers, got {value}"
                )));
            }
            cfg.experiment.n = value as usize;
        }
        SweepParam::Alpha => {
            let noise = cfg.dynamics.noise;
            cfg.dynamics.noise =
                crate::stable::StableSpec::new(value, noise.scale(), noise.dim())
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        SweepParam::T => {
            if !(value > 0.0) {
                return Err(HarnessError::Config("T sweep values must be > 0".into()));
            }
            cfg.dynamics.horizon_t = value;
        }
        SweepParam::S => {
            if !(value > 0.0) {
                return Err(HarnessError::Config("s sweep values must be > 0".into()));
            }
            cfg.bounds.smoothing = SmoothingRule::Fixed(value);
        }
    }
    Ok(cfg)
}

pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<SweepTable, HarnessError> {
    if values.len() < 3 {
        return Err(HarnessError::TooFewSweepValues(values.len()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let point_cfg = apply_sweep_value(cfg, param, value)?;
        let ctx = prepare_context(&point_cfg)?;
        let r = point_cfg.experiment.replicates;
        let results: Vec<Result<ReplicateOutcome, String>> = install_pool(
            point_cfg.experiment.workers,
            || {
                (0..r)
                    .into_par_iter()
                    .map(|i| run_replicate(&point_cfg, &ctx, i))
                    .collect()
            },
        );
        let outcomes: Vec<ReplicateOutcome> =
            results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
        let errors = r - outcomes.len();
        if outcomes.is_empty() {
            return Err(HarnessError::Config(format!(
                "sweep value {value}: every replicate failed"
            )));
        }
        let geo: Vec<f64> = outcomes.iter().map(|o| o.geometric_gap).collect();
        let worst: Vec<f64> = outcomes.iter().map(|o| o.worst_case_gap).collect();
        let gammas: Vec<f64> = outcomes.iter().map(|o| o.gamma).collect();
        let mut median_rhs = BTreeMap::new();
        for rep in &outcomes[0].reports {
            let vals: Vec<f64> = outcomes
                .iter()
                .flat_map(|o| {
                    o.reports
                        .iter()
                        .filter(|x| x.theorem == rep.theorem)
                        .map(|x| x.rhs)
                })
                .collect();
            median_rhs.insert(rep.theorem.clone(), median(&vals));
        }
        rows.push(SweepRow {
            value,
            median_geometric_gap: median(&geo),
            iqr_geometric_gap: iqr(&geo),
            median_worst_case_gap: median(&worst),
            iqr_worst_case_gap: iqr(&worst),
            median_gamma_hat: median(&gammas),
            iqr_gamma_hat: iqr(&gammas),
            median_rhs,
            errors,
        });
    }
    let loglog = if param == SweepParam::N
        && rows.iter().all(|r| r.median_geometric_gap > 0.0)
    {
        let xs: Vec<f64> = rows.iter().map(|r| r.value.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.median_geometric_gap.ln()).collect();
        Some(linear_fit(&xs, &ys).0)
    } else {
        None
    };
    Ok(SweepTable {
        param,
        rows,
        loglog_slope_geometric_gap: loglog,
    })
}

// ---- lemma validation ---------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCase {
    pub case: usize,
    pub s: f64,
    pub beta: f64,
    pub oracle_value: f64,
    pub upper_bound: f64,
    pub margin: f64,
}

/// Validate the divergence dominance lemmas on short random d=1 runs:
/// quadrature KL vs the coupling bound (beta = 1 rows) and quadrature
/// Rényi-2 vs the sup bound (beta = 2 rows).
pub fn run_lemma_validation(cases: usize, master_seed: u64) -> Result<Vec<LemmaCase>, HarnessError> {
    use crate::dynamics::InitSpec;
    let mut rows = Vec::with_capacity(cases * 2);
    for case in 0..cases {
        let seed = master_seed.wrapping_add(case as u64);
        let problem_cfg = ProblemConfig {
            dim: 1,
            atoms: 8,
            data_bound: 1.0,
            loss: crate::problems::LossFamily::Sigmoid,
            atom_layout: crate::problems::AtomLayout::Sphere,
            label_flip_prob: 0.1,
        };
        let problem = make_problem(&problem_cfg, &mut substream(seed, 0, TAG_PROBLEM))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let dataset = sample_dataset(&problem, 32, &mut substream(seed, 0, TAG_DATASET))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let steps = 40 + (case % 4) * 20; // <= 100 grid points
        let sde = SdeConfig {
            step_h: 0.002,
            horizon_t: 0.002 * steps as f64,
            noise: crate::stable::StableSpec::new(1.6, 0.2, 1)
                .map_err(|e| HarnessError::Config(e.to_string()))?,
            init_z0: InitSpec::default(),
            allow_large_step: false,
        };
        let traj = integrate_coupled(
            &problem,
            &dataset,
            &sde,
            &mut substream(seed, 0, TAG_TRAJECTORY),
        )?;
        let s = median_grid_gap(&traj.w).max(0.05);
        let post = SmoothedOccupation::posterior(&traj, s)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let prior = SmoothedOccupation::prior(&traj, s)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let kl = kl_oracle(&post, &prior).map_err(|e| HarnessError::Config(e.to_string()))?;
        let kl_ub = kl_upper_bound(&traj, s).map_err(|e| HarnessError::Config(e.to_string()))?;
        rows.push(LemmaCase {
            case,
            s,
            beta: 1.0,
            oracle_value: kl,
            upper_bound: kl_ub,
            margin: kl_ub - kl,
        });
        let ry = renyi_oracle(&post, &prior, 2.0)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let ry_ub = renyi_upper_bound(&traj, s, 2.0)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        rows.push(LemmaCase {
            case,
            s,
            beta: 2.0,
            oracle_value: ry,
            upper_bound: ry_ub,
            margin: ry_ub - ry,
        });
    }
    Ok(rows)
}

// ---- emission -----------------------------------------------------------

pub fn coverage_csv(report: &CoverageReport) -> String {
    let mut out = String::from(
        "theorem,holds,evaluated,hold_rate,interval_lo,interval_hi,mean_lhs,mean_rhs,mean_ratio\n",
    );
    for (name, cov) in &report.theorems {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            name,
            cov.holds,
            cov.evaluated,
            cov.hold_rate,
            cov.interval95.0,
            cov.interval95.1,
            cov.mean_lhs,
            cov.mean_rhs,
            cov.mean_ratio
        ));
    }
    out
}

pub fn sweep_csv(table: &SweepTable) -> String {
    let rhs_keys: Vec<String> = table
        .rows
        .first()
        .map(|r| r.median_rhs.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = String::from(
        "value,median_geometric_gap,iqr_geometric_gap,median_worst_case_gap,iqr_worst_case_gap,median_gamma_hat,iqr_gamma_hat,errors",
    );
    for k in &rhs_keys {
        header.push_str(&format!(",median_rhs_{k}"));
    }
    let mut out = header + "\n";
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            row.value,
            row.median_geometric_gap,
            row.iqr_geometric_gap,
            row.median_worst_case_gap,
            row.iqr_worst_case_gap,
            row.median_gamma_hat,
            row.iqr_gamma_hat,
            row.errors
        ));
        for k in &rhs_keys {
            match row.median_rhs.get(k) {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn lemma_csv(rows: &[LemmaCase]) -> String {
    let mut out = String::from("case,s,beta,oracle_value,upper_bound,margin\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.case, r.s, r.beta, r.oracle_value, r.upper_bound, r.margin
        ));
    }
    out
}

/// One named polyline for the SVG plotter.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const SVG_COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Minimal line/scatter plot. With `loglog` both axes are log10-scaled
/// (non-positive points are dropped).
pub fn svg_plot(
    series: &[PlotSeries],
    x_label: &str,
    y_label: &str,
    loglog: bool,
) -> String {
    const W: f64 = 720.0;
    const H: f64 = 480.0;
    const MARGIN: f64 = 60.0;
    let transform = |v: f64| if loglog { v.log10() } else { v };
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::new();
    for s in series {
        pts.push(
            s.points
                .iter()
                .filter(|(x, y)| !loglog || (*x > 0.0 && *y > 0.0))
                .map(|&(x, y)| (transform(x), transform(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect(),
        );
    }
    let all: Vec<(f64, f64)> = pts.iter().flatten().cloned().collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        x0 = 0.0;
        x1 = 1.0;
        y0 = 0.0;
        y1 = 1.0;
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <line x1=\"{m}\" y1=\"{yb}\" x2=\"{xr}\" y2=\"{yb}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{yb}\" stroke=\"black\"/>\n\
         <text x=\"{xc}\" y=\"{ylab}\" text-anchor=\"middle\" font-size=\"14\">{x_label}</text>\n\
         <text x=\"16\" y=\"{yc}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 {yc})\">{y_label}</text>\n",
        m = MARGIN,
        yb = H - MARGIN,
        xr = W - MARGIN,
        xc = W / 2.0,
        ylab = H - 16.0,
        yc = H / 2.0,
    );
    // axis end labels
    svg.push_str(&format!(
        "<text x=\"{m}\" y=\"{yb2}\" font-size=\"11\">{x0:.3}</text>\n\
         <text x=\"{xr}\" y=\"{yb2}\" text-anchor=\"end\" font-size=\"11\">{x1:.3}</text>\n\
         <text x=\"{m2}\" y=\"{yb}\" text-anchor=\"end\" font-size=\"11\">{y0:.3}</text>\n\
         <text x=\"{m2}\" y=\"{mt}\" text-anchor=\"end\" font-size=\"11\">{y1:.3}</text>\n",
        m = MARGIN,
        m2 = MARGIN - 4.0,
        yb = H - MARGIN,
        yb2 = H - MARGIN + 16.0,
        xr = W - MARGIN,
        mt = MARGIN + 4.0,
    ));
    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        if p.is_empty() {
            continue;
        }
        let color = SVG_COLORS[i % SVG_COLORS.len()];
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{},{}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in p {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        // legend entry
        let ly = MARGIN + 18.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{lx}\" y=\"{ry}\" width=\"12\" height=\"3\" fill=\"{color}\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" font-size=\"12\">{}</text>\n",
            s.name,
            lx = W - MARGIN - 150.0,
            ry = ly - 4.0,
            tx = W - MARGIN - 132.0,
            ty = ly,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Sweep plot: one series per theorem rhs plus the simulated gaps.
pub fn sweep_svg(table: &SweepTable) -> String {
    let mut series = vec![
        PlotSeries {
            name: "median geometric gap".into(),
            points: table
                .rows
                .iter()
                .map(|r| (r.value, r.median_geometric_gap))
                .collect(),
        },
        PlotSeries {
            name: "median worst-case gap".into(),
            points: table
                .rows
                .iter()
                .map(|r| (r.value, r.median_worst_case_gap))
                .collect(),
        },
    ];
    let keys: Vec<String> = table
        .rows
        .first()
        .map(|r| r.median_rhs.keys().cloned().collect())
        .unwrap_or_default();
    for k in keys {
        series.push(PlotSeries {
            name: format!("median rhs {k}"),
            points: table
                .rows
                .iter()
                .filter_map(|r| r.median_rhs.get(&k).map(|v| (r.value, *v)))
                .collect(),
        });
    }
    let loglog = table.param == SweepParam::N;
    let x_label = match table.param {
        SweepParam::N => "dataset size n (log10)",
        SweepParam::Alpha => "tail index alpha",
        SweepParam::T => "horizon T",
        SweepParam::S => "smoothing scale s",
    };
    svg_plot(&series, x_label, "gap / bound value", loglog)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable report")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_config(replicates: usize, n: usize) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "problem": {{"dim": 2, "atoms": 16, "data_bound": 1.0}},
                "dynamics": {{
                    "step_h": 0.002,
                    "horizon_t": 0.2,
                    "noise": {{"alpha": 1.6, "scale": 0.1, "dim": 2}}
                }},
                "bounds": {{"zeta": 0.1}},
                "experiment": {{"replicates": {replicates}, "n": {n}, "master_seed": 7}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let bad = r#"{
            "problem": {"dim": 2, "atoms": 16, "data_bound": 1.0, "typo_key": 3},
            "dynamics": {"step_h": 0.002, "horizon_t": 0.2,
                         "noise": {"alpha": 1.6, "scale": 0.1, "dim": 2}},
            "bounds": {"zeta": 0.1},
            "experiment": {"replicates": 2, "n": 32, "master_seed": 7}
        }"#;
        assert!(matches!(
            ExperimentConfig::from_json(bad),
            Err(HarnessError::Config(_))
        ));
        let bad_zeta = test_config(2, 32);
        let mut v = serde_json::to_value(&bad_zeta).unwrap();
        v["bounds"]["zeta"] = serde_json::json!(1.5);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        v["bounds"]["zeta"] = serde_json::json!(0.1);
        v["experiment"]["theorems"] = serde_json::json!([2, 99]);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn coverage_zero_replicates_flags_error() {
        let cfg = test_config(0, 32);
        let report = run_coverage(&cfg).unwrap();
        assert_eq!(report.replicates, 0);
        assert!(report.notes.iter().any(|n| n == "no replicates"));
        assert!(report.theorems.is_empty());
    }

    #[test]
    fn coverage_runs_and_aggregates() {
        let mut cfg = test_config(8, 256);
        cfg.experiment.theorems = vec![2, 3, 5];
        cfg.experiment.thm5_draws = 1000;
        let report = run_coverage(&cfg).unwrap();
        assert_eq!(report.errors, 0, "notes: {:?}", report.notes);
        for name in ["thm2", "thm3", "thm5"] {
            let cov = &report.theorems[name];
            assert_eq!(cov.evaluated, 8);
            assert!(cov.hold_rate >= 0.0 && cov.hold_rate <= 1.0);
            assert!(cov.interval95.0 <= cov.hold_rate && cov.hold_rate <= cov.interval95.1);
        }
        // the large-constant bounds are expected to hold at this scale
        assert_eq!(report.theorems["thm2"].hold_rate, 1.0);
    }

    #[test]
    fn coverage_deterministic_across_worker_counts() {
        let mut cfg = test_config(6, 32);
        cfg.experiment.theorems = vec![2, 6];
        let mut outputs = Vec::new();
        for workers in [Some(1), Some(4), None] {
            let mut c = cfg.clone();
            c.experiment.workers = workers;
            let report = run_coverage(&c).unwrap();
            outputs.push((coverage_csv(&report), to_json_pretty(&report)));
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[1], outputs[2]);
    }

    #[test]
    fn coverage_json_round_trips() {
        let mut cfg = test_config(4, 32);
        cfg.experiment.theorems = vec![2];
        let report = run_coverage(&cfg).unwrap();
        let json = to_json_pretty(&report);
        let back: CoverageReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn sweep_runs_and_emits() {
        let mut cfg = test_config(4, 256);
        cfg.experiment.theorems = vec![2, 3];
        let table = run_sweep(&cfg, SweepParam::N, &[128.0, 512.0, 2048.0]).unwrap();
        assert_eq!(table.rows.len(), 3);
        // gaps shrink with n (median over few replicates: direction only)
        assert!(
            table.rows[0].median_geometric_gap > table.rows[2].median_geometric_gap,
            "{:?}",
            table.rows.iter().map(|r| r.median_geometric_gap).collect::<Vec<_>>()
        );
        assert!(table.loglog_slope_geometric_gap.is_some());

        let csv = sweep_csv(&table);
        assert!(csv.starts_with("value,median_geometric_gap"));
        assert_eq!(csv.lines().count(), 4);
        let svg = sweep_svg(&table);
        // one polyline per series: 2 gap series + 2 theorem series
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("dataset size n"));

        assert!(run_sweep(&cfg, SweepParam::N, &[16.0, 64.0]).is_err());
    }

    #[test]
    fn sweep_horizon_gap_monotone() {
        let mut cfg = test_config(3, 64);
        cfg.experiment.theorems = vec![2];
        let table = run_sweep(&cfg, SweepParam::T, &[0.1, 0.2, 0.4]).unwrap();
        // same seeds, growing window: sup can only grow
        assert!(table.rows[0].median_geometric_gap <= table.rows[1].median_geometric_gap);
        assert!(table.rows[1].median_geometric_gap <= table.rows[2].median_geometric_gap);
    }

    #[test]
    fn lemma_validation_all_cases_dominated() {
        let rows = run_lemma_validation(5, 123).unwrap();
        assert_eq!(rows.len(), 10);
        for row in &rows {
            assert!(
                row.margin >= -1e-6,
                "case {} beta {}: oracle {} > bound {}",
                row.case,
                row.beta,
                row.oracle_value,
                row.upper_bound
            );
        }
        let csv = lemma_csv(&rows);
        assert!(csv.starts_with("case,s,beta,oracle_value,upper_bound,margin"));
        assert_eq!(csv.lines().count(), 11);
    }

    #[test]
    fn svg_plot_empty_and_basic() {
        let empty = svg_plot(&[], "x", "y", false);
        assert!(empty.contains("</svg>"));
        let series = vec![PlotSeries {
            name: "demo".into(),
            points: vec![(1.0, 1.0), (2.0, 4.0), (3.0, 9.0)],
        }];
        let svg = svg_plot(&series, "x", "y", true);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("demo"));
    }

    #[test]
    fn seed_override_via_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let cfg = test_config(1, 16);
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        std::env::set_var("GENBOUNDS_SEED", "999");
        let loaded = ExperimentConfig::load(&path).unwrap();
        std::env::remove_var("GENBOUNDS_SEED");
        assert_eq!(loaded.experiment.master_seed, 999);
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded.experiment.master_seed, 7);
    }
}
