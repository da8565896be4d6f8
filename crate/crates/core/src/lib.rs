//! Serialization orders for grid-shaped feature data.
//!
//! The centerpiece is a golden-angle Fermat spiral matched onto the grid by a
//! greedy, continuity-weighted assignment ([`matching`]). Raster and
//! concentric-ring baselines live in [`baseline`], uniformity diagnostics in
//! [`isotropy`], and a small bidirectional state-space block with
//! Jacobian footprint measurement in [`ssm`].

pub mod baseline;
pub mod error;
pub mod grid;
pub mod index;
pub mod io;
pub mod isotropy;
pub mod matching;
pub mod spiral;
pub mod ssm;
pub mod strategy;

pub use error::{Error, Result};
pub use grid::{apply_scan, flip_sequence, invert_scan, FeatureMap, GridDims, ScanOrder, SerialSequence};
pub use matching::{fermat_scan, match_grid, match_score, MatchConfig, MatchMode};
pub use spiral::{default_alpha, gen_spiral_points, SpiralParams, SpiralPoint, GOLDEN_ANGLE};
pub use strategy::Strategy;
