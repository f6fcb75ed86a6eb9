//! Coupled empirical/population SDE integration and trajectory geometry.
//!
//! The two Euler-Maruyama recursions share the same initial point and the
//! same Lévy increments; that coupling is what makes the pathwise gap
//! `sup_k ||W_k - Y_k||` small and worth measuring. All geometric
//! functionals consumed by the bound evaluators live here as well.

use crate::problems::{Dataset, LearningProblem, ProblemError};
use crate::rng::RandomStream;
use crate::stable::{levy_path_increments, standard_normal, StableError, StableSpec};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("step must be positive, got {0}")]
    BadStep(f64),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("step {step} exceeds stability ceiling {ceiling} (0.01 min(1, 1/M)); set allow_large_step to override")]
    StepTooLarge { step: f64, ceiling: f64 },
    #[error("noise dimension {noise} does not match problem dimension {problem}")]
    DimMismatch { noise: usize, problem: usize },
    #[error("initial point has dimension {got}, expected {expected}")]
    BadInit { got: usize, expected: usize },
    #[error("unrecognized init spec {0:?} (expected \"zero\" or \"gaussian(radius)\")")]
    BadInitSpec(String),
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("trajectory file malformed: {0}")]
    BadFile(String),
    #[error(transparent)]
    Noise(#[from] StableError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Initial condition: an explicit point, or a named rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Point(Vec<f64>),
    Named(String),
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Named("zero".into())
    }
}

impl InitSpec {
    /// Resolve to a concrete Z0. `"zero"` is the origin;
    /// `"gaussian(r)"` draws each coordinate from N(0, r^2).
    pub fn sample(&self, dim: usize, rng: &mut RandomStream) -> Result<Vec<f64>, DynamicsError> {
        match self {
            InitSpec::Point(p) => {
                if p.len() != dim {
                    return Err(DynamicsError::BadInit {
                        got: p.len(),
                        expected: dim,
                    });
                }
                Ok(p.clone())
            }
            InitSpec::Named(name) => {
                let name = name.trim();
                if name == "zero" {
                    return Ok(vec![0.0; dim]);
                }
                if let Some(arg) = name
                    .strip_prefix("gaussian(")
                    .and_then(|s| s.strip_suffix(')'))
                {
                    let radius: f64 = arg
                        .trim()
                        .parse()
                        .map_err(|_| DynamicsError::BadInitSpec(name.into()))?;
                    if !(radius >= 0.0) {
                        return Err(DynamicsError::BadInitSpec(name.into()));
                    }
                    return Ok((0..dim).map(|_| radius * standard_normal(rng)).collect());
                }
                Err(DynamicsError::BadInitSpec(name.into()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub step_h: f64,
    pub horizon_t: f64,
    pub noise: StableSpec,
    #[serde(default)]
    pub init_z0: InitSpec,
    /// Lifts the default step ceiling 0.01 min(1, 1/M).
    #[serde(default)]
    pub allow_large_step: bool,
}

impl SdeConfig {
    /// Number of Euler steps: the horizon is rounded up to a whole number
    /// of steps; `adjusted_horizon` reports the grid actually used.
    pub fn steps(&self) -> usize {
        (self.horizon_t / self.step_h - 1e-9).ceil().max(1.0) as usize
    }

    pub fn adjusted_horizon(&self) -> f64 {
        self.steps() as f64 * self.step_h
    }

    pub fn validate(&self, problem: &LearningProblem) -> Result<(), DynamicsError> {
        if !(self.step_h > 0.0) || !self.step_h.is_finite() {
            return Err(DynamicsError::BadStep(self.step_h));
        }
        if !(self.horizon_t > 0.0) || !self.horizon_t.is_finite() {
            return Err(DynamicsError::BadHorizon(self.horizon_t));
        }
        // re-run the noise spec's own validation (configs may arrive from JSON)
        StableSpec::new(self.noise.alpha(), self.noise.scale(), self.noise.dim())?;
        if self.noise.dim() != problem.dim() {
            return Err(DynamicsError::DimMismatch {
                noise: self.noise.dim(),
                problem: problem.dim(),
            });
        }
        let ceiling = 0.01 * 1.0f64.min(1.0 / problem.constants().smoothness);
        if self.step_h > ceiling && !self.allow_large_step {
            return Err(DynamicsError::StepTooLarge {
                step: self.step_h,
                ceiling,
            });
        }
        Ok(())
    }
}

/// Seeds and shape recorded alongside an integrated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub dim: usize,
    pub step_h: f64,
    pub horizon: f64,
    pub alpha: f64,
    pub noise_scale: f64,
    pub dataset_seed: u64,
    pub noise_seed: u64,
}

/// One coupled run: the empirical path W, the population path Y, the grid
/// and the shared increments that drove both.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrajectory {
    pub times: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub increments: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl CoupledTrajectory {
    pub fn gap_at(&self, k: usize) -> f64 {
        dist(&self.w[k], &self.y[k])
    }

    pub fn check_invariants(&self) -> Result<(), DynamicsError> {
        let n = self.times.len();
        if self.w.len() != n || self.y.len() != n || self.increments.len() + 1 != n {
            return Err(DynamicsError::BadFile("inconsistent lengths".into()));
        }
        for (k, (w, y)) in self.w.iter().zip(&self.y).enumerate() {
            if w.iter().chain(y.iter()).any(|x| !x.is_finite()) {
                return Err(DynamicsError::NonFiniteState { step: k });
            }
        }
        Ok(())
    }
}

/// Integrate both recursions from an explicit Z0 with explicit shared
/// increments. This is the deterministic core: callers control every
/// random input, which the refinement tests rely on.
pub fn integrate_coupled_with_increments(
    problem: &LearningProblem,
    dataset: &Dataset,
    config: &SdeConfig,
    z0: &[f64],
    increments: &[Vec<f64>],
    meta: TrajectoryMeta,
) -> Result<CoupledTrajectory, DynamicsError> {
    let h = config.step_h;
    let steps = increments.len();
    let mut w = Vec::with_capacity(steps + 1);
    let mut y = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    w.push(z0.to_vec());
    y.push(z0.to_vec());
    times.push(0.0);
    for (k, dl) in increments.iter().enumerate() {
        let wk = &w[k];
        let yk = &y[k];
        let gw = problem.risk_gradient(wk, Some(dataset))?;
        let gy = problem.risk_gradient(yk, None)?;
        let next_w: Vec<f64> = wk
            .iter()
            .zip(&gw)
            .zip(dl)
            .map(|((x, g), d)| x - h * g + d)
            .collect();
        let next_y: Vec<f64> = yk
            .iter()
            .zip(&gy)
            .zip(dl)
            .map(|((x, g), d)| x - h * g + d)
            .collect();
        if next_w.iter().chain(next_y.iter()).any(|x| !x.is_finite()) {
            return Err(DynamicsError::NonFiniteState { step: k + 1 });
        }
        w.push(next_w);
        y.push(next_y);
        times.push((k + 1) as f64 * h);
    }
    Ok(CoupledTrajectory {
        times,
        w,
        y,
        increments: increments.to_vec(),
        meta,
    })
}

/// Euler-Maruyama on the coupled pair: W follows the empirical risk
/// gradient, Y the population one, both fed the SAME increments and Z0.
pub fn integrate_coupled(
    problem: &LearningProblem,
    dataset: &Dataset,
    config: &SdeConfig,
    rng: &mut RandomStream,
) -> Result<CoupledTrajectory, DynamicsError> {
    config.validate(problem)?;
    let z0 = config.init_z0.sample(problem.dim(), rng)?;
    let increments = levy_path_increments(&config.noise, config.step_h, config.steps(), rng);
    let meta = TrajectoryMeta {
        dim: problem.dim(),
        step_h: config.step_h,
        horizon: config.adjusted_horizon(),
        alpha: config.noise.alpha(),
        noise_scale: config.noise.scale(),
        dataset_seed: dataset.seed_note,
        noise_seed: 0,
    };
    integrate_coupled_with_increments(problem, dataset, config, &z0, &increments, meta)
}

/// `sup_k ||W_k - Y_k||` over the grid.
pub fn geometric_gap(traj: &CoupledTrajectory) -> f64 {
    (0..traj.times.len())
        .map(|k| traj.gap_at(k))
        .fold(0.0, f64::max)
}

/// Time-averaged squared gap, left-endpoint rule:
/// `(1/T) sum_k h ||W_k - Y_k||^2`.
pub fn integral_gap(traj: &CoupledTrajectory) -> f64 {
    let steps = traj.increments.len();
    let h = traj.meta.step_h;
    let t = steps as f64 * h;
    let sum: f64 = (0..steps).map(|k| traj.gap_at(k).powi(2) * h).sum();
    sum / t
}

/// Symmetric Hausdorff distance between finite point clouds.
pub fn hausdorff_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, DynamicsError> {
    if a.is_empty() || b.is_empty() {
        return Err(DynamicsError::EmptyPointSet);
    }
    let one_sided = |from: &[Vec<f64>], to: &[Vec<f64>]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| dist(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(one_sided(a, b).max(one_sided(b, a)))
}

/// `max_k R(W_k) - R_hat(W_k)`: worst generalization gap along the
/// empirical path, both risks exact.
pub fn worst_case_gap(
    traj: &CoupledTrajectory,
    problem: &LearningProblem,
    dataset: &Dataset,
) -> Result<f64, DynamicsError> {
    let mut worst = f64::NEG_INFINITY;
    for w in &traj.w {
        let gap = problem.risk(w, None)? - problem.risk(w, Some(dataset))?;
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// `max_k ||grad R_hat(Y_k) - grad R(Y_k)||` along the population path.
pub fn g_nabla(
    traj: &CoupledTrajectory,
    problem: &LearningProblem,
    dataset: &Dataset,
) -> Result<f64, DynamicsError> {
    let mut worst = 0.0f64;
    for y in &traj.y {
        let ge = problem.risk_gradient(y, Some(dataset))?;
        let gp = problem.risk_gradient(y, None)?;
        worst = worst.max(dist(&ge, &gp));
    }
    Ok(worst)
}

/// Gap between empirical and population gradients maximized over the grid
/// points of BOTH paths; stands in for the continuous-time sup in the
/// Grönwall envelope.
pub fn g_nabla_both(
    traj: &CoupledTrajectory,
    problem: &LearningProblem,
    dataset: &Dataset,
) -> Result<f64, DynamicsError> {
    let mut worst = 0.0f64;
    for p in traj.w.iter().chain(traj.y.iter()) {
        let ge = problem.risk_gradient(p, Some(dataset))?;
        let gp = problem.risk_gradient(p, None)?;
        worst = worst.max(dist(&ge, &gp));
    }
    Ok(worst)
}

/// Result of checking the pathwise Grönwall envelope
/// `||V_k|| <= (G/M)(exp(M t_k) - 1) + tol(h)` on one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    /// max over k of ||V_k|| - envelope(t_k), before adding tol.
    pub max_violation: f64,
    /// Discretization allowance tol(h) = h M L T.
    pub tol: f64,
    pub holds: bool,
    pub g: f64,
}

/// Check the discrete Grönwall envelope on every grid point. For
/// left-endpoint Euler with shared increments the discrete recursion
/// satisfies the envelope with no slack at all; the tolerance only
/// absorbs the grid-vs-continuous mismatch in G and is reported, not
/// hidden.
pub fn gronwall_pathwise_check(
    traj: &CoupledTrajectory,
    problem: &LearningProblem,
    dataset: &Dataset,
) -> Result<GronwallReport, DynamicsError> {
    let m = problem.constants().smoothness;
    let l = problem.constants().lipschitz;
    let g = g_nabla_both(traj, problem, dataset)?;
    let t = traj.meta.horizon;
    let tol = traj.meta.step_h * m * l * t;
    let mut max_violation = f64::NEG_INFINITY;
    for (k, tk) in traj.times.iter().enumerate() {
        let envelope = (g / m) * (m * tk).exp_m1();
        max_violation = max_violation.max(traj.gap_at(k) - envelope);
    }
    Ok(GronwallReport {
        max_violation,
        tol,
        holds: max_violation <= tol,
        g,
    })
}

/// Write `(k, t, W_1..W_d, Y_1..Y_d)` rows; floats use the shortest
/// round-trip decimal form, so read_trajectory_csv restores them
/// bit-exactly. A JSON sidecar `<path>.meta.json` carries the metadata.
pub fn write_trajectory_csv(traj: &CoupledTrajectory, path: &Path) -> Result<(), DynamicsError> {
    let d = traj.meta.dim;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "k,t")?;
    for j in 1..=d {
        write!(out, ",w_{j}")?;
    }
    for j in 1..=d {
        write!(out, ",y_{j}")?;
    }
    writeln!(out)?;
    for k in 0..traj.times.len() {
        write!(out, "{},{}", k, traj.times[k])?;
        for x in &traj.w[k] {
            write!(out, ",{x}")?;
        }
        for x in &traj.y[k] {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    let sidecar = path.with_extension("meta.json");
    let json = serde_json::to_string_pretty(&traj.meta)
        .map_err(|e| DynamicsError::BadFile(e.to_string()))?;
    std::fs::write(sidecar, json)?;
    Ok(())
}

/// Inverse of `write_trajectory_csv`. The shared increments are not part
/// of the CSV (they are not recoverable without the dataset anyway), so
/// the loaded trajectory carries an empty increment list; it supports the
/// geometric and fractal functionals but not re-integration.
pub fn read_trajectory_csv(path: &Path) -> Result<CoupledTrajectory, DynamicsError> {
    let sidecar = path.with_extension("meta.json");
    let meta: TrajectoryMeta = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)
        .map_err(|e| DynamicsError::BadFile(format!("sidecar: {e}")))?;
    let d = meta.dim;
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut times = Vec::new();
    let mut w = Vec::new();
    let mut y = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + 2 * d {
            return Err(DynamicsError::BadFile(format!(
                "line {}: expected {} fields, got {}",
                lineno + 1,
                2 + 2 * d,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, DynamicsError> {
            s.parse()
                .map_err(|_| DynamicsError::BadFile(format!("line {}: bad float {s:?}", lineno + 1)))
        };
        times.push(parse(fields[1])?);
        w.push(fields[2..2 + d].iter().map(|s| parse(s)).collect::<Result<_, _>>()?);
        y.push(
            fields[2 + d..2 + 2 * d]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_, _>>()?,
        );
    }
    if times.is_empty() {
        return Err(DynamicsError::BadFile("no data rows".into()));
    }
    Ok(CoupledTrajectory {
        times,
        w,
        y,
        increments: Vec::new(),
        meta,
    })
}
