//! Continuity-constrained assignment of spiral samples to grid cells.
//!
//! For each step `k` in order, the unassigned cell `u` minimizing
//!
//! ```text
//! score(u) = (1 - lambda_c) * |u - p_k| / eta_f + lambda_c * |u - pi_{k-1}| / eta_c
//! ```
//!
//! becomes `pi_k`; ties go to the smaller linear index and the continuity
//! term is zero at `k = 0`. The exhaustive mode scans every unassigned cell.
//! The accelerated mode pulls nearest-`m` candidates around `p_k` and around
//! `pi_{k-1}` from a kd-tree and only accepts its best candidate once a
//! lower bound on every unexamined cell's score is strictly larger,
//! doubling `m` otherwise. Both modes evaluate scores through the same
//! function, so they return identical orders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDims, ScanOrder};
use crate::index::{dist2, UnassignedIndex};
use crate::spiral::{gen_spiral_points, SpiralParams, SpiralPoint};

pub const DEFAULT_LAMBDA_C: f64 = 0.7;
pub const DEFAULT_CANDIDATES: usize = 32;

/// Relative slack between the best examined score and the bound on the rest.
/// Scores and bounds are sums of a few non-negative rounded terms, so their
/// rounding error is many orders of magnitude below this.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Exhaustive,
    Accelerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub lambda_c: f64,
    pub eta_f: f64,
    pub eta_c: f64,
    pub candidate_count: usize,
    pub mode: MatchMode,
}

impl MatchConfig {
    /// Defaults for `dims`: `lambda_c = 0.7`, both normalizers equal to the
    /// grid diagonal, 32 candidates, accelerated.
    pub fn for_grid(dims: GridDims) -> Self {
        let diag = dims.diagonal();
        Self {
            lambda_c: DEFAULT_LAMBDA_C,
            eta_f: diag,
            eta_c: diag,
            candidate_count: DEFAULT_CANDIDATES,
            mode: MatchMode::Accelerated,
        }
    }

    pub fn with_lambda(mut self, lambda_c: f64) -> Self {
        self.lambda_c = lambda_c;
        self
    }

    pub fn with_mode(mut self, mode: MatchMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_c) {
            return Err(Error::InvalidParameter {
                name: "lambda_c",
                reason: format!("must lie in [0, 1], got {}", self.lambda_c),
            });
        }
        for (name, v) in [("eta_f", self.eta_f), ("eta_c", self.eta_c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if self.candidate_count == 0 {
            return Err(Error::InvalidParameter {
                name: "candidate_count",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[inline]
fn score_at(cell: [f64; 2], target: [f64; 2], prev: Option<[f64; 2]>, cfg: &MatchConfig) -> f64 {
    let fermat = (1.0 - cfg.lambda_c) * dist2(cell, target).sqrt() / cfg.eta_f;
    match prev {
        Some(q) => fermat + cfg.lambda_c * dist2(cell, q).sqrt() / cfg.eta_c,
        None => fermat,
    }
}

/// Score of placing `cell` at the step of `spiral` (step index `spiral.k`),
/// given the previously placed cell.
pub fn match_score(
    cell: usize,
    prev: Option<usize>,
    spiral: &SpiralPoint,
    cfg: &MatchConfig,
    dims: GridDims,
) -> Result<f64> {
    let n = dims.n_cells();
    for (position, c) in [(0, Some(cell)), (1, prev)] {
        if let Some(c) = c {
            if c >= n {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    position,
                    n_cells: n,
                });
            }
        }
    }
    Ok(score_at(
        dims.cell_center(cell),
        spiral.xy(),
        prev.map(|p| dims.cell_center(p)),
        cfg,
    ))
}

pub fn match_grid(spiral: &[SpiralPoint], dims: GridDims, cfg: &MatchConfig) -> Result<ScanOrder> {
    cfg.validate()?;
    let n = dims.n_cells();
    if spiral.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: spiral.len(),
        });
    }
    if let Some(i) = spiral
        .iter()
        .position(|p| !(p.x.is_finite() && p.y.is_finite()))
    {
        return Err(Error::NonFinite(i));
    }
    let order = match cfg.mode {
        MatchMode::Exhaustive => match_exhaustive(spiral, dims, cfg),
        MatchMode::Accelerated => match_accelerated(spiral, dims, cfg),
    };
    ScanOrder::new(dims, order)
}

/// Default Fermat scan: spiral from [`SpiralParams::for_grid`] matched with
/// `cfg`.
pub fn fermat_scan(dims: GridDims, cfg: &MatchConfig) -> Result<ScanOrder> {
    fermat_scan_with(&SpiralParams::for_grid(dims), dims, cfg)
}

pub fn fermat_scan_with(params: &SpiralParams, dims: GridDims, cfg: &MatchConfig) -> Result<ScanOrder> {
    let points = gen_spiral_points(params)?;
    match_grid(&points, dims, cfg)
}

fn match_exhaustive(spiral: &[SpiralPoint], dims: GridDims, cfg: &MatchConfig) -> Vec<usize> {
    let n = dims.n_cells();
    let centers: Vec<[f64; 2]> = (0..n).map(|c| dims.cell_center(c)).collect();
    let mut assigned = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut prev: Option<usize> = None;
    for p in spiral {
        let target = p.xy();
        let prev_center = prev.map(|c| centers[c]);
        let mut best = usize::MAX;
        let mut best_score = f64::INFINITY;
        for (cell, &center) in centers.iter().enumerate() {
            if assigned[cell] {
                continue;
            }
            let s = score_at(center, target, prev_center, cfg);
            if s < best_score || best == usize::MAX {
                best = cell;
                best_score = s;
            }
        }
        assigned[best] = true;
        order.push(best);
        prev = Some(best);
    }
    order
}

fn match_accelerated(spiral: &[SpiralPoint], dims: GridDims, cfg: &MatchConfig) -> Vec<usize> {
    let n = dims.n_cells();
    let mut free = UnassignedIndex::new(dims);
    let mut order = Vec::with_capacity(n);
    let mut prev: Option<usize> = None;
    let w_fermat = (1.0 - cfg.lambda_c) / cfg.eta_f;
    let w_contin = cfg.lambda_c / cfg.eta_c;
    let mut seen = vec![u32::MAX; n];
    let mut candidates: Vec<usize> = Vec::new();

    for (k, p) in spiral.iter().enumerate() {
        let target = p.xy();
        let prev_center = prev.map(|c| dims.cell_center(c));
        let use_fermat = w_fermat > 0.0 || prev_center.is_none();
        let use_contin = w_contin > 0.0 && prev_center.is_some();
        let gap = prev_center.map_or(0.0, |q| dist2(target, q).sqrt());
        let mut m = cfg.candidate_count;

        let chosen = loop {
            let remaining = free.len();
            let m_eff = m.min(remaining);
            candidates.clear();
            let mut reach_f = 0.0;
            let mut reach_c = 0.0;
            if use_fermat {
                let nn = free.nearest(target, m_eff);
                reach_f = nn.last().map_or(0.0, |x| x.dist);
                candidates.extend(nn.iter().map(|x| x.id));
            }
            if use_contin {
                let nn = free.nearest(prev_center.unwrap(), m_eff);
                reach_c = nn.last().map_or(0.0, |x| x.dist);
                candidates.extend(nn.iter().map(|x| x.id));
            }

            let mut best = usize::MAX;
            let mut best_score = f64::INFINITY;
            for &cell in &candidates {
                if seen[cell] == k as u32 {
                    continue;
                }
                seen[cell] = k as u32;
                let s = score_at(dims.cell_center(cell), target, prev_center, cfg);
                if s < best_score || (s == best_score && cell < best) || best == usize::MAX {
                    best = cell;
                    best_score = s;
                }
            }
            // Reset marks so the next round re-examines the widened set.
            for &cell in &candidates {
                seen[cell] = u32::MAX;
            }

            if m_eff == remaining {
                break best;
            }
            // Every unexamined cell u has |u - p| >= reach_f and
            // |u - q| >= reach_c, and |u - p| + |u - q| >= |p - q|.
            let slack_len = (gap - reach_f - reach_c).max(0.0);
            let bound = w_fermat * reach_f + w_contin * reach_c + w_fermat.min(w_contin) * slack_len;
            if best_score < bound * (1.0 - BOUND_SLACK) {
                break best;
            }
            m = m.saturating_mul(2);
        };

        free.remove(chosen);
        order.push(chosen);
        prev = Some(chosen);
    }
    order
}
