//! Spatial uniformity and path-continuity statistics for scan trajectories.
//!
//! Spacing metrics run on a [`PointSet`], which shifts points so the bounding
//! box starts at the origin and divides by the larger box side, landing in
//! `[0, 1]^2` with the aspect ratio preserved. All variances are population
//! variances.

mod delaunay;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use delaunay::delaunay_edges;

use crate::error::{Error, Result};
use crate::grid::{GridDims, ScanOrder};
use crate::index::KdIndex;
use crate::matching::{match_grid, MatchConfig};
use crate::spiral::{gen_spiral_points, SpiralParams};
use crate::strategy::Strategy;

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<[f64; 2]>,
}

impl PointSet {
    /// Normalizes `points` into the unit square by their own bounding box.
    pub fn normalized(points: &[[f64; 2]]) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
        Ok(Self {
            points: points
                .iter()
                .map(|p| [(p[0] - lo[0]) * scale, (p[1] - lo[1]) * scale])
                .collect(),
        })
    }

    pub fn from_grid(dims: GridDims) -> Result<Self> {
        let pts: Vec<[f64; 2]> = (0..dims.n_cells()).map(|c| dims.cell_center(c)).collect();
        Self::normalized(&pts)
    }

    #[inline]
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Mean and population variance.
pub(crate) fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Distance from each point to its nearest other point.
pub fn nn_distances(ps: &PointSet) -> Result<Vec<f64>> {
    if ps.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            actual: ps.len(),
        });
    }
    let tree = KdIndex::new(ps.points.clone());
    Ok(ps
        .points
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            tree.nearest(p, 2)
                .into_iter()
                .find(|n| n.id != i)
                .expect("at least two points")
                .dist
        })
        .collect())
}

/// `(variance, mean)` of nearest-neighbor distances.
pub fn nn_spacing_variance(ps: &PointSet) -> Result<(f64, f64)> {
    let d = nn_distances(ps)?;
    let (mean, var) = mean_variance(&d);
    Ok((var, mean))
}

/// Population variance of the unique Delaunay edge lengths.
pub fn delaunay_edge_variance(ps: &PointSet) -> Result<f64> {
    let edges = delaunay_edges(&ps.points)?;
    let lengths: Vec<f64> = edges
        .iter()
        .map(|&(a, b)| {
            let (p, q) = (ps.points[a], ps.points[b]);
            (p[0] - q[0]).hypot(p[1] - q[1])
        })
        .collect();
    Ok(mean_variance(&lengths).1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub mean: f64,
    pub max: f64,
    pub variance: f64,
}

/// Statistics of consecutive Euclidean step lengths along a point path.
pub fn step_stats(path: &[[f64; 2]]) -> Result<StepStats> {
    if path.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            actual: path.len(),
        });
    }
    let steps: Vec<f64> = path
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .collect();
    let (mean, variance) = mean_variance(&steps);
    let max = steps.iter().copied().fold(0.0, f64::max);
    Ok(StepStats {
        mean,
        max,
        variance,
    })
}

/// Step statistics of a scan in cell units.
pub fn path_step_stats(order: &ScanOrder) -> Result<StepStats> {
    let dims = order.dims();
    let path: Vec<[f64; 2]> = order.as_slice().iter().map(|&c| dims.cell_center(c)).collect();
    step_stats(&path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub nn_variance: f64,
    pub nn_mean: f64,
    /// `None` when the point set has fewer than three distinct points or is
    /// collinear.
    pub delaunay_edge_variance: Option<f64>,
    pub step_mean: f64,
    pub step_max: f64,
    pub step_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Spacing {
    nn_variance: f64,
    nn_mean: f64,
    delaunay: Option<f64>,
}

fn spacing(points: &[[f64; 2]]) -> Result<Spacing> {
    let ps = PointSet::normalized(points)?;
    let (nn_variance, nn_mean) = nn_spacing_variance(&ps)?;
    let delaunay = match delaunay_edge_variance(&ps) {
        Ok(v) => Some(v),
        Err(Error::Collinear | Error::TooFewPoints { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Spacing {
        nn_variance,
        nn_mean,
        delaunay,
    })
}

fn report(s: Spacing, steps: StepStats) -> IsotropyReport {
    IsotropyReport {
        nn_variance: s.nn_variance,
        nn_mean: s.nn_mean,
        delaunay_edge_variance: s.delaunay,
        step_mean: steps.mean,
        step_max: steps.max,
        step_variance: steps.variance,
    }
}

/// Full report for one scan: spacing over the visited cell centers plus the
/// scan's step statistics.
pub fn scan_report(order: &ScanOrder) -> Result<IsotropyReport> {
    let dims = order.dims();
    let steps = path_step_stats(order)?;
    let centers: Vec<[f64; 2]> = (0..dims.n_cells()).map(|c| dims.cell_center(c)).collect();
    Ok(report(spacing(&centers)?, steps))
}

/// Key under which [`compare_strategies`] stores the metrics of the
/// continuous spiral samples.
pub const FERMAT_CONTINUOUS: &str = "fermat_continuous";

/// Metrics for raster, rectangular spiral and Fermat scans of `dims`.
///
/// Keys are the strategy names. Cell-center spacing is shared by all three
/// since every scan visits the same cells. The Fermat spiral's own samples
/// are reported separately under [`FERMAT_CONTINUOUS`], with step statistics
/// along the continuous trajectory.
pub fn compare_strategies(dims: GridDims, cfg: &MatchConfig) -> Result<BTreeMap<String, IsotropyReport>> {
    compare_strategies_with(dims, &SpiralParams::for_grid(dims), cfg)
}

pub fn compare_strategies_with(
    dims: GridDims,
    spiral: &SpiralParams,
    cfg: &MatchConfig,
) -> Result<BTreeMap<String, IsotropyReport>> {
    let points = gen_spiral_points(spiral)?;
    let fermat = match_grid(&points, dims, cfg)?;
    let orders = [
        (Strategy::Raster, Strategy::Raster.baseline(dims).expect("baseline")),
        (Strategy::Rect, Strategy::Rect.baseline(dims).expect("baseline")),
        (Strategy::Fermat, fermat),
    ];

    let centers: Vec<[f64; 2]> = (0..dims.n_cells()).map(|c| dims.cell_center(c)).collect();
    let cell_spacing = spacing(&centers)?;

    let mut out = BTreeMap::new();
    for (strategy, order) in &orders {
        out.insert(
            strategy.name().to_string(),
            report(cell_spacing, path_step_stats(order)?),
        );
    }
    let xy: Vec<[f64; 2]> = points.iter().map(|p| p.xy()).collect();
    out.insert(
        FERMAT_CONTINUOUS.to_string(),
        report(spacing(&xy)?, step_stats(&xy)?),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::raster_scan;
    use crate::matching::fermat_scan;

    fn ps(points: &[[f64; 2]]) -> PointSet {
        PointSet::normalized(points).unwrap()
    }

    fn lattice(m: usize) -> Vec<[f64; 2]> {
        (0..m * m).map(|i| [(i % m) as f64, (i / m) as f64]).collect()
    }

    #[test]
    fn unit_square_corners() {
        let pts = ps(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        assert_eq!(nn_spacing_variance(&pts).unwrap(), (0.0, 1.0));
        // Edges {1, 1, 1, 1, sqrt 2}.
        let lengths = [1.0, 1.0, 1.0, 1.0, 2f64.sqrt()];
        let mean = lengths.iter().sum::<f64>() / 5.0;
        let expected = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 5.0;
        let got = delaunay_edge_variance(&pts).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.027_45).abs() < 1e-5);
    }

    #[test]
    fn two_points() {
        let pts = ps(&[[3.0, 1.0], [5.0, 1.0]]);
        assert_eq!(nn_spacing_variance(&pts).unwrap(), (0.0, 1.0));
        assert!(nn_spacing_variance(&ps(&[[0.0, 0.0]])).is_err());
    }

    #[test]
    fn lattice_spacing_closed_form() {
        for m in [2usize, 3, 7, 16] {
            let (var, mean) = nn_spacing_variance(&ps(&lattice(m))).unwrap();
            assert!(var.abs() < 1e-30, "m={m}");
            assert!((mean - 1.0 / (m - 1) as f64).abs() < 1e-15, "m={m}");
        }
    }

    #[test]
    fn equilateral_triangle_and_triangular_lattice() {
        let h = 3f64.sqrt() / 2.0;
        let tri = ps(&[[0.0, 0.0], [1.0, 0.0], [0.5, h]]);
        assert!(delaunay_edge_variance(&tri).unwrap() < 1e-30);

        // A hexagonal patch of the triangular lattice is the regular lattice
        // on which both spacing statistics vanish; its hull edges are unit
        // edges too.
        let radius = 5i32;
        let mut pts = Vec::new();
        for q in -radius..=radius {
            for r in -radius..=radius {
                if (q + r).abs() <= radius {
                    pts.push([8.0 * (q as f64 + r as f64 / 2.0), 8.0 * r as f64 * h]);
                }
            }
        }
        let set = ps(&pts);
        let (nn_var, _) = nn_spacing_variance(&set).unwrap();
        let del = delaunay_edge_variance(&set).unwrap();
        assert!(nn_var < 1e-24, "{nn_var}");
        assert!(del < 1e-24, "{del}");
    }

    #[test]
    fn collinear_delaunay_errors() {
        let pts = ps(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert_eq!(delaunay_edge_variance(&pts), Err(Error::Collinear));
    }

    #[test]
    fn metrics_are_translation_and_scale_invariant() {
        let base: Vec<[f64; 2]> = (0..60)
            .map(|k| {
                let r = (k as f64).sqrt();
                let t = k as f64 * crate::spiral::GOLDEN_ANGLE;
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        let moved: Vec<[f64; 2]> = base.iter().map(|p| [p[0] * 4.0 + 17.0, p[1] * 4.0 - 3.0]).collect();
        let (a, b) = (ps(&base), ps(&moved));
        let (va, ma) = nn_spacing_variance(&a).unwrap();
        let (vb, mb) = nn_spacing_variance(&b).unwrap();
        assert!((va - vb).abs() < 1e-12 && (ma - mb).abs() < 1e-12);
        let da = delaunay_edge_variance(&a).unwrap();
        let db = delaunay_edge_variance(&b).unwrap();
        assert!((da - db).abs() < 1e-12);
    }

    #[test]
    fn raster_step_closed_form() {
        for (h, w) in [(1usize, 9usize), (4, 4), (3, 7)] {
            let d = GridDims::new(h, w).unwrap();
            let s = path_step_stats(&raster_scan(d)).unwrap();
            let mut steps = vec![1.0; h * (w - 1)];
            steps.extend(std::iter::repeat_n((1.0 + ((w - 1) * (w - 1)) as f64).sqrt(), h - 1));
            let (mean, var) = mean_variance(&steps);
            assert!((s.mean - mean).abs() < 1e-12);
            assert!((s.variance - var).abs() < 1e-12);
            assert_eq!(s.max, steps.iter().copied().fold(0.0, f64::max));
        }
        let one = ScanOrder::new(GridDims::new(1, 1).unwrap(), vec![0]).unwrap();
        assert!(path_step_stats(&one).is_err());
    }

    #[test]
    fn continuity_shortens_steps() {
        let d = GridDims::new(16, 16).unwrap();
        let s0 = path_step_stats(&fermat_scan(d, &MatchConfig::for_grid(d).with_lambda(0.0)).unwrap()).unwrap();
        let s1 = path_step_stats(&fermat_scan(d, &MatchConfig::for_grid(d).with_lambda(1.0)).unwrap()).unwrap();
        assert!(s1.mean <= s0.mean);
    }

    #[test]
    fn degenerate_compare() {
        let d = GridDims::new(1, 2).unwrap();
        let r = compare_strategies(d, &MatchConfig::for_grid(d)).unwrap();
        for rep in r.values() {
            assert_eq!(rep.delaunay_edge_variance, None);
            assert_eq!(rep.step_mean, rep.step_max);
        }
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn compare_is_deterministic() {
        let d = GridDims::new(12, 9).unwrap();
        let cfg = MatchConfig::for_grid(d);
        let a = compare_strategies(d, &cfg).unwrap();
        let b = compare_strategies(d, &cfg).unwrap();
        assert_eq!(a, b);
        for (k, rep) in &a {
            assert!(rep.step_max >= rep.step_mean, "{k}");
            assert!(rep.nn_variance >= 0.0 && rep.step_variance >= 0.0);
        }
    }
}
