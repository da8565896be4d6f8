use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{raster_scan, rect_spiral_scan};
use crate::error::{Error, Result};
use crate::grid::{GridDims, ScanOrder};
use crate::matching::{fermat_scan_with, MatchConfig};
use crate::spiral::SpiralParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Raster,
    Rect,
    Fermat,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Raster, Strategy::Rect, Strategy::Fermat];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Raster => "raster",
            Strategy::Rect => "rect",
            Strategy::Fermat => "fermat",
        }
    }

    /// The order for parameter-free strategies; `None` for Fermat.
    pub fn baseline(self, dims: GridDims) -> Option<ScanOrder> {
        match self {
            Strategy::Raster => Some(raster_scan(dims)),
            Strategy::Rect => Some(rect_spiral_scan(dims)),
            Strategy::Fermat => None,
        }
    }

    pub fn build(self, dims: GridDims, spiral: &SpiralParams, cfg: &MatchConfig) -> Result<ScanOrder> {
        match self.baseline(dims) {
            Some(order) => Ok(order),
            None => fermat_scan_with(spiral, dims, cfg),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raster" => Ok(Strategy::Raster),
            "rect" => Ok(Strategy::Rect),
            "fermat" => Ok(Strategy::Fermat),
            other => Err(Error::InvalidParameter {
                name: "strategy",
                reason: format!("unknown strategy `{other}`"),
            }),
        }
    }
}
