//! Golden-angle Fermat spiral sampling: `r_k = alpha * sqrt(k)`,
//! `theta_k = k * phi_g`, placed around a center point in grid coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDims;

/// `2*pi*(1 - 1/phi) = pi*(3 - sqrt(5))` radians, about 137.5078 degrees.
pub const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralParams {
    pub alpha: f64,
    pub phi_g: f64,
    pub n_points: usize,
    pub center: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralPoint {
    pub k: usize,
    pub r: f64,
    /// Unwrapped angle, exactly `k * phi_g`.
    pub theta: f64,
    pub x: f64,
    pub y: f64,
}

impl SpiralPoint {
    #[inline]
    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Scale that puts the outermost sample `alpha * sqrt(N - 1)` at half the
/// grid diagonal, so the trajectory reaches the corners. `1` for a single
/// cell.
pub fn default_alpha(dims: GridDims) -> f64 {
    let n = dims.n_cells();
    if n == 1 {
        return 1.0;
    }
    (dims.diagonal() / 2.0) / ((n - 1) as f64).sqrt()
}

impl SpiralParams {
    pub fn new(alpha: f64, phi_g: f64, n_points: usize, center: [f64; 2]) -> Result<Self> {
        let p = Self {
            alpha,
            phi_g,
            n_points,
            center,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default spiral for `dims`: one point per cell, golden angle, centered.
    pub fn for_grid(dims: GridDims) -> Self {
        Self {
            alpha: default_alpha(dims),
            phi_g: GOLDEN_ANGLE,
            n_points: dims.n_cells(),
            center: dims.center_point(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must be positive and finite, got {}", self.alpha),
            });
        }
        if !(self.phi_g > 0.0 && self.phi_g < std::f64::consts::TAU) {
            return Err(Error::InvalidParameter {
                name: "phi_g",
                reason: format!("must lie in (0, 2*pi), got {}", self.phi_g),
            });
        }
        if self.n_points == 0 {
            return Err(Error::InvalidParameter {
                name: "n_points",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.center[0].is_finite() && self.center[1].is_finite()) {
            return Err(Error::InvalidParameter {
                name: "center",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    pub fn point(&self, k: usize) -> SpiralPoint {
        let r = self.alpha * (k as f64).sqrt();
        let theta = k as f64 * self.phi_g;
        let (s, c) = theta.sin_cos();
        SpiralPoint {
            k,
            r,
            theta,
            x: self.center[0] + r * c,
            y: self.center[1] + r * s,
        }
    }
}

pub fn gen_spiral_points(params: &SpiralParams) -> Result<Vec<SpiralPoint>> {
    params.validate()?;
    Ok((0..params.n_points).map(|k| params.point(k)).collect())
}
