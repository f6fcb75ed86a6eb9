//! Box-counting dimension of trajectory point clouds.
//!
//! Counting occupied cells of an axis-aligned grid stands in for minimal
//! ball covers (whose computation is NP-hard); the constant-factor gap
//! between the two covering numbers disappears in the log-log slope that
//! defines the dimension.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FractalError {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("scale must be positive, got {0}")]
    BadDelta(f64),
    #[error("degenerate schedule: need 0 < delta_min < delta_max and at least 4 levels")]
    BadSchedule,
    #[error("insufficient resolution: every level saturated, no fit window")]
    InsufficientResolution,
}

/// Occupied-cell counts across a decreasing schedule of grid scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringCurve {
    pub deltas: Vec<f64>,
    pub counts: Vec<u64>,
    /// Total points counted, used by the saturation heuristic downstream.
    pub points: usize,
}

/// Slope of log N_delta against log(1/delta) over the selected window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub gamma_hat: f64,
    /// Inclusive index range of curve levels used in the regression.
    pub fit_window: (usize, usize),
    pub r_squared: f64,
    pub curve: CoveringCurve,
}

/// Number of occupied cells of an axis-aligned grid of side `delta`
/// anchored at the cloud's minimum corner.
pub fn covering_number(points: &[Vec<f64>], delta: f64) -> Result<u64, FractalError> {
    if points.is_empty() {
        return Err(FractalError::EmptyPointSet);
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(FractalError::BadDelta(delta));
    }
    let d = points[0].len();
    let mut anchor = vec![f64::INFINITY; d];
    let mut top = vec![f64::NEG_INFINITY; d];
    for p in points {
        for j in 0..d {
            anchor[j] = anchor[j].min(p[j]);
            top[j] = top[j].max(p[j]);
        }
    }
    // cells are half-open [a + k delta, a + (k+1) delta) except the last
    // one per axis, which absorbs the upper boundary of the bounding box
    let max_index: Vec<i64> = (0..d)
        .map(|j| (((top[j] - anchor[j]) / delta - 1e-9).ceil() as i64 - 1).max(0))
        .collect();
    let mut cells: HashSet<Vec<i64>> = HashSet::with_capacity(points.len());
    for p in points {
        let cell: Vec<i64> = (0..d)
            .map(|j| {
                (((p[j] - anchor[j]) / delta).floor() as i64).clamp(0, max_index[j])
            })
            .collect();
        cells.insert(cell);
    }
    Ok(cells.len() as u64)
}

/// Counts along a dyadic schedule from `delta_max` down to (at least)
/// `delta_min`: delta_j = delta_max / 2^j. Halving scales keep counts
/// monotone under the shared anchor, which a generic geometric ratio does
/// not guarantee.
pub fn covering_curve(
    points: &[Vec<f64>],
    delta_max: f64,
    delta_min: f64,
    levels: usize,
) -> Result<CoveringCurve, FractalError> {
    if points.is_empty() {
        return Err(FractalError::EmptyPointSet);
    }
    if !(delta_min > 0.0) || !(delta_min < delta_max) || levels < 4 {
        return Err(FractalError::BadSchedule);
    }
    // dyadic refinement; run enough levels to pass delta_min, but at least
    // the requested count
    let needed = (delta_max / delta_min).log2().ceil() as usize + 1;
    let levels = levels.max(needed);
    let mut deltas = Vec::with_capacity(levels);
    let mut counts = Vec::with_capacity(levels);
    for j in 0..levels {
        let delta = delta_max / (1u64 << j.min(62)) as f64;
        deltas.push(delta);
        counts.push(covering_number(points, delta)?);
    }
    Ok(CoveringCurve {
        deltas,
        counts,
        points: points.len(),
    })
}

/// Least-squares slope of log N over log(1/delta) on the unsaturated
/// middle window: the coarsest level is dropped (anchor effects), as is
/// every level where the count exceeds half the point total (the grid has
/// resolved individual points and the curve flattens).
pub fn estimate_box_dimension(curve: &CoveringCurve) -> Result<DimensionEstimate, FractalError> {
    let n_levels = curve.deltas.len();
    let saturation = (curve.points as u64) / 2;
    let mut lo = 1usize; // drop the coarsest level
    let mut hi = n_levels; // exclusive
    for (j, &c) in curve.counts.iter().enumerate() {
        if c > saturation.max(1) {
            hi = hi.min(j);
        }
    }
    // a fit needs at least 3 levels
    if hi <= lo + 2 {
        // fall back to the coarsest levels only if nothing else exists
        if hi >= 3 {
            lo = 0;
        } else {
            return Err(FractalError::InsufficientResolution);
        }
    }
    let xs: Vec<f64> = curve.deltas[lo..hi].iter().map(|d| (1.0 / d).ln()).collect();
    let ys: Vec<f64> = curve.counts[lo..hi].iter().map(|&c| (c as f64).ln()).collect();
    let (slope, _intercept, r2) = crate::stats::linear_fit(&xs, &ys);
    Ok(DimensionEstimate {
        gamma_hat: slope.max(0.0),
        fit_window: (lo, hi - 1),
        r_squared: r2,
        curve: curve.clone(),
    })
}

/// Convenience: curve plus estimate with a schedule inferred from the
/// cloud's extent.
pub fn estimate_trajectory_dimension(
    points: &[Vec<f64>],
    levels: usize,
) -> Result<DimensionEstimate, FractalError> {
    if points.is_empty() {
        return Err(FractalError::EmptyPointSet);
    }
    let d = points[0].len();
    let mut extent = 0.0f64;
    for j in 0..d {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo = lo.min(p[j]);
            hi = hi.max(p[j]);
        }
        extent = extent.max(hi - lo);
    }
    if extent == 0.0 {
        // a single repeated point: dimension zero by definition
        let curve = CoveringCurve {
            deltas: (0..levels.max(4)).map(|j| 1.0 / (1u64 << j) as f64).collect(),
            counts: vec![1; levels.max(4)],
            points: points.len(),
        };
        return Ok(DimensionEstimate {
            gamma_hat: 0.0,
            fit_window: (1, levels.max(4) - 1),
            r_squared: 1.0,
            curve,
        });
    }
    let delta_max = extent / 2.0;
    let delta_min = delta_max / (1u64 << (levels.max(4) - 1).min(62)) as f64;
    let curve = covering_curve(points, delta_max, delta_min, levels.max(4))?;
    estimate_box_dimension(&curve)
}
