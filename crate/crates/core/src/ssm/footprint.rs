use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::block::{sigmoid, BlockParams};
use super::{advance, gaussian, FIXED_DELTA};
use crate::error::{Error, Result};
use crate::grid::{FeatureMap, GridDims, ScanOrder};
use crate::isotropy::mean_variance;

/// Output position whose sensitivity is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Probe {
    Center,
    Corner,
    Cell { row: usize, col: usize },
}

impl Probe {
    pub fn resolve(self, dims: GridDims) -> Result<usize> {
        match self {
            Probe::Center => Ok(dims.center_cell()),
            Probe::Corner => Ok(0),
            Probe::Cell { row, col } => {
                if row >= dims.height() || col >= dims.width() {
                    return Err(Error::InvalidParameter {
                        name: "probe",
                        reason: format!("cell ({row},{col}) is outside a {dims} grid"),
                    });
                }
                Ok(dims.index(row, col))
            }
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probe::Center => f.write_str("center"),
            Probe::Corner => f.write_str("corner"),
            Probe::Cell { row, col } => write!(f, "{row},{col}"),
        }
    }
}

impl FromStr for Probe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => return Ok(Probe::Center),
            "corner" => return Ok(Probe::Corner),
            _ => {}
        }
        let bad = || Error::InvalidParameter {
            name: "probe",
            reason: format!("expected `center`, `corner` or `row,col`, got `{s}`"),
        };
        let (r, c) = s.split_once(',').ok_or_else(bad)?;
        Ok(Probe::Cell {
            row: r.trim().parse().map_err(|_| bad())?,
            col: c.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// How partials over channel pairs collapse to one value per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    SumAbs,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    FiniteDifference,
    /// Closed form; only valid for non-selective SSMs.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintConfig {
    pub channels: usize,
    pub state_dim: usize,
    pub selective: bool,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub probe: Probe,
    pub aggregation: Aggregation,
    pub method: Method,
    pub fd_step: f64,
}

impl Default for FootprintConfig {
    fn default() -> Self {
        Self {
            channels: 4,
            state_dim: 8,
            selective: true,
            n_seeds: 5,
            base_seed: 0,
            probe: Probe::Center,
            aggregation: Aggregation::SumAbs,
            method: Method::FiniteDifference,
            fd_step: 1e-4,
        }
    }
}

impl FootprintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::InvalidParameter {
                name: "n_seeds",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "fd_step",
                reason: format!("must be positive, got {}", self.fd_step),
            });
        }
        if self.method == Method::Analytic && self.selective {
            return Err(Error::InvalidParameter {
                name: "method",
                reason: "the analytic Jacobian needs a non-selective SSM".into(),
            });
        }
        Ok(())
    }

    /// Block parameters and input map for seed `base_seed + i`.
    pub fn draw(&self, dims: GridDims, i: usize) -> Result<(BlockParams, FeatureMap)> {
        let seed = self.base_seed.wrapping_add(i as u64);
        let bp = BlockParams::random(self.channels, self.state_dim, self.selective, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let x = FeatureMap::new(dims, self.channels, gaussian(&mut rng, self.channels * dims.n_cells(), 1.0))?;
        Ok((bp, x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintMap {
    pub dims: GridDims,
    /// Row-major, max-normalized to 1 unless `degenerate`.
    pub values: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub probe_cell: usize,
    pub probe: Probe,
    pub n_seeds: usize,
    /// The averaged map was identically zero, so no normalization was applied.
    pub degenerate: bool,
}

impl FootprintMap {
    /// Averages raw maps in the given order, normalizes by the maximum and
    /// computes population mean and standard deviation.
    pub fn from_raw(dims: GridDims, probe: Probe, probe_cell: usize, raw: &[Vec<f64>]) -> Result<Self> {
        let n = dims.n_cells();
        if raw.is_empty() {
            return Err(Error::InvalidParameter {
                name: "n_seeds",
                reason: "must be at least 1".into(),
            });
        }
        let mut values = vec![0.0; n];
        for m in raw {
            if m.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: m.len(),
                });
            }
            for (v, x) in values.iter_mut().zip(m) {
                *v += x;
            }
        }
        let k = raw.len() as f64;
        values.iter_mut().for_each(|v| *v /= k);
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let max = values.iter().cloned().fold(0.0, f64::max);
        let degenerate = max <= 0.0;
        if !degenerate {
            values.iter_mut().for_each(|v| *v /= max);
        }
        let (mu, var) = mean_variance(&values);
        Ok(Self {
            dims,
            values,
            mu,
            sigma: var.sqrt(),
            probe_cell,
            probe,
            n_seeds: raw.len(),
            degenerate,
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Dense Jacobian of the `C` outputs at one probe cell with respect to every
/// input entry, stored `[c_out][cell][c_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub dims: GridDims,
    pub channels: usize,
    pub probe_cell: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    fn zeros(dims: GridDims, channels: usize, probe_cell: usize) -> Self {
        Self {
            dims,
            channels,
            probe_cell,
            data: vec![0.0; channels * dims.n_cells() * channels],
        }
    }

    #[inline]
    fn offset(&self, co: usize, cell: usize, ci: usize) -> usize {
        (co * self.dims.n_cells() + cell) * self.channels + ci
    }

    #[inline]
    pub fn get(&self, co: usize, cell: usize, ci: usize) -> f64 {
        self.data[self.offset(co, cell, ci)]
    }

    pub fn sensitivity(&self, agg: Aggregation) -> Vec<f64> {
        let c = self.channels;
        (0..self.dims.n_cells())
            .map(|cell| {
                let parts = (0..c).flat_map(|co| (0..c).map(move |ci| (co, ci)));
                match agg {
                    Aggregation::SumAbs => parts.map(|(co, ci)| self.get(co, cell, ci).abs()).sum(),
                    Aggregation::L2 => parts
                        .map(|(co, ci)| self.get(co, cell, ci).powi(2))
                        .sum::<f64>()
                        .sqrt(),
                }
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Jacobian) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_inputs(map: &FeatureMap, order: &ScanOrder, bp: &BlockParams) -> Result<()> {
    bp.validate()?;
    if map.channels() != bp.channels {
        return Err(Error::DimensionMismatch(format!(
            "feature map has {} channels, block expects {}",
            map.channels(),
            bp.channels
        )));
    }
    if order.dims() != map.dims() {
        return Err(Error::DimensionMismatch(format!(
            "scan order is for {}, feature map is {}",
            order.dims(),
            map.dims()
        )));
    }
    Ok(())
}

/// Per-direction cache of one SSM pass: step terms and states for every
/// serialized step, in the order that direction consumes them.
struct Pass {
    decay: Vec<f64>,
    drive: Vec<f64>,
    states: Vec<f64>,
}

impl Pass {
    fn run(p: &super::SsmParams, xs: &[Vec<f64>]) -> Self {
        let s = p.state_dim;
        let n = xs.len();
        let mut decay = vec![0.0; n * s];
        let mut drive = vec![0.0; n * s];
        let mut states = vec![0.0; n * s];
        let mut h = vec![0.0; s];
        for (t, x) in xs.iter().enumerate() {
            let r = t * s..(t + 1) * s;
            p.step_terms(x, &mut decay[r.clone()], &mut drive[r.clone()]);
            advance(&mut h, &decay[r.clone()], &drive[r.clone()]);
            states[r].copy_from_slice(&h);
        }
        Self { decay, drive, states }
    }

    /// State at step `target` when step `t <= target` sees input `x` instead.
    fn replay(&self, p: &super::SsmParams, t: usize, target: usize, x: &[f64], h: &mut [f64]) {
        let s = p.state_dim;
        if t == 0 {
            h.iter_mut().for_each(|v| *v = 0.0);
        } else {
            h.copy_from_slice(&self.states[(t - 1) * s..t * s]);
        }
        let mut decay = vec![0.0; s];
        let mut drive = vec![0.0; s];
        p.step_terms(x, &mut decay, &mut drive);
        advance(h, &decay, &drive);
        for u in t + 1..=target {
            advance(h, &self.decay[u * s..(u + 1) * s], &self.drive[u * s..(u + 1) * s]);
        }
    }
}

/// Evaluates the block output at one probe cell under single-entry input
/// perturbations, replaying only the recurrence steps a perturbation can
/// reach. Results are bit-identical to a full forward pass.
pub struct ProbeEvaluator<'a> {
    map: &'a FeatureMap,
    bp: &'a BlockParams,
    positions: Vec<usize>,
    probe_cell: usize,
    probe_pos: usize,
    fwd: Pass,
    bwd: Pass,
}

impl<'a> ProbeEvaluator<'a> {
    pub fn new(map: &'a FeatureMap, order: &ScanOrder, bp: &'a BlockParams, probe_cell: usize) -> Result<Self> {
        check_inputs(map, order, bp)?;
        let dims = map.dims();
        if probe_cell >= dims.n_cells() {
            return Err(Error::IndexOutOfRange {
                index: probe_cell,
                position: 0,
                n_cells: dims.n_cells(),
            });
        }
        let c = bp.channels;
        let column = |cell: usize| (0..c).map(|ch| map.get(ch, cell)).collect::<Vec<_>>();
        let mut xs: Vec<Vec<f64>> = order.as_slice().iter().map(|&cell| column(cell)).collect();
        let fwd = Pass::run(&bp.ssm_fwd, &xs);
        xs.reverse();
        let bwd = Pass::run(&bp.ssm_bwd, &xs);
        let positions = order.positions();
        Ok(Self {
            map,
            bp,
            probe_pos: positions[probe_cell],
            positions,
            probe_cell,
            fwd,
            bwd,
        })
    }

    pub fn probe_cell(&self) -> usize {
        self.probe_cell
    }

    /// Output channels at the probe cell with input entry `(channel, cell)`
    /// replaced by `value`.
    pub fn eval(&self, channel: usize, cell: usize, value: f64) -> Vec<f64> {
        let bp = self.bp;
        let c = bp.channels;
        let s = bp.ssm_fwd.state_dim;
        let n = self.positions.len();
        let dims = self.map.dims();
        let x_at = |ch: usize, q: usize| {
            if ch == channel && q == cell {
                value
            } else {
                self.map.get(ch, q)
            }
        };
        let mut x = (0..c).map(|ch| self.map.get(ch, cell)).collect::<Vec<_>>();
        x[channel] = value;

        let t = self.positions[cell];
        let to = self.probe_pos;
        let mut hf = vec![0.0; s];
        if t <= to {
            self.fwd.replay(&bp.ssm_fwd, t, to, &x, &mut hf);
        } else {
            hf.copy_from_slice(&self.fwd.states[to * s..(to + 1) * s]);
        }
        let (tb, tob) = (n - 1 - t, n - 1 - to);
        let sb = bp.ssm_bwd.state_dim;
        let mut hb = vec![0.0; sb];
        if tb <= tob {
            self.bwd.replay(&bp.ssm_bwd, tb, tob, &x, &mut hb);
        } else {
            hb.copy_from_slice(&self.bwd.states[tob * sb..(tob + 1) * sb]);
        }
        let mut yf = vec![0.0; c];
        let mut yb = vec![0.0; c];
        bp.ssm_fwd.readout(&hf, &mut yf);
        bp.ssm_bwd.readout(&hb, &mut yb);

        let o = self.probe_cell;
        (0..c)
            .map(|co| {
                let fm = bp.fuse(co, &yf, &yb);
                let g = sigmoid(bp.gate_preact(dims, x_at, co, o));
                x_at(co, o) + (g + fm)
            })
            .collect()
    }

    /// Unperturbed output at the probe cell.
    pub fn base(&self) -> Vec<f64> {
        self.eval(0, self.probe_cell, self.map.get(0, self.probe_cell))
    }
}

/// Central finite-difference Jacobian at `probe_cell`. The denominator is the
/// realized step `(x + h) - (x - h)`.
pub fn fd_jacobian(
    map: &FeatureMap,
    order: &ScanOrder,
    bp: &BlockParams,
    probe_cell: usize,
    step: f64,
) -> Result<Jacobian> {
    let ev = ProbeEvaluator::new(map, order, bp, probe_cell)?;
    let dims = map.dims();
    let c = bp.channels;
    let n = dims.n_cells();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|cell| {
            let mut col = vec![0.0; c * c];
            for ci in 0..c {
                let x0 = map.get(ci, cell);
                let (xp, xm) = (x0 + step, x0 - step);
                let yp = ev.eval(ci, cell, xp);
                let ym = ev.eval(ci, cell, xm);
                for co in 0..c {
                    col[co * c + ci] = (yp[co] - ym[co]) / (xp - xm);
                }
            }
            col
        })
        .collect();
    let mut jac = Jacobian::zeros(dims, c, probe_cell);
    for (cell, col) in columns.iter().enumerate() {
        for co in 0..c {
            for ci in 0..c {
                let k = jac.offset(co, cell, ci);
                jac.data[k] = col[co * c + ci];
            }
        }
    }
    Ok(jac)
}

/// Closed-form Jacobian for non-selective SSMs. The state path from serial
/// position `s` to `t` contributes `c_proj · diag(Π Ā) · Δ b_proj`, with the
/// product taken over steps `s+1..=t`.
pub fn analytic_jacobian(map: &FeatureMap, order: &ScanOrder, bp: &BlockParams, probe_cell: usize) -> Result<Jacobian> {
    check_inputs(map, order, bp)?;
    if bp.ssm_fwd.selective || bp.ssm_bwd.selective {
        return Err(Error::InvalidParameter {
            name: "selective",
            reason: "the analytic Jacobian needs non-selective SSMs".into(),
        });
    }
    let dims = map.dims();
    let n = dims.n_cells();
    if probe_cell >= n {
        return Err(Error::IndexOutOfRange {
            index: probe_cell,
            position: 0,
            n_cells: n,
        });
    }
    let c = bp.channels;
    let mut jac = Jacobian::zeros(dims, c, probe_cell);
    let seq = order.as_slice();
    let to = order.positions()[probe_cell];

    // d y_branch[c'] / d x[ci] at serial distance given by the running decay product.
    let branch = |p: &super::SsmParams, prod: &[f64], out: &mut [f64]| {
        let s = p.state_dim;
        for cp in 0..c {
            for ci in 0..c {
                out[cp * c + ci] = (0..s)
                    .map(|k| p.c_proj[cp * s + k] * prod[k] * FIXED_DELTA * p.b_proj[k * c + ci])
                    .sum();
            }
        }
    };
    let mut add_branch = |cell: usize, d: &[f64], backward: bool| {
        for co in 0..c {
            let w = &bp.fuse_weight[co * 2 * c..(co + 1) * 2 * c];
            let w = if backward { &w[c..] } else { &w[..c] };
            for ci in 0..c {
                let v: f64 = (0..c).map(|cp| w[cp] * d[cp * c + ci]).sum();
                let k = jac.offset(co, cell, ci);
                jac.data[k] += v;
            }
        }
    };

    let mut d = vec![0.0; c * c];
    let p = &bp.ssm_fwd;
    let abar: Vec<f64> = p.a_diag.iter().map(|a| (FIXED_DELTA * a).exp()).collect();
    let mut prod = vec![1.0; p.state_dim];
    for &cell in seq[..=to].iter().rev() {
        branch(p, &prod, &mut d);
        add_branch(cell, &d, false);
        prod.iter_mut().zip(&abar).for_each(|(q, a)| *q *= a);
    }
    let p = &bp.ssm_bwd;
    let abar: Vec<f64> = p.a_diag.iter().map(|a| (FIXED_DELTA * a).exp()).collect();
    let mut prod = vec![1.0; p.state_dim];
    for &cell in &seq[to..] {
        branch(p, &prod, &mut d);
        add_branch(cell, &d, true);
        prod.iter_mut().zip(&abar).for_each(|(q, a)| *q *= a);
    }

    // Residual and gate linearization.
    for co in 0..c {
        let k = jac.offset(co, probe_cell, co);
        jac.data[k] += 1.0;
        let g = sigmoid(bp.gate_preact(dims, |ch, q| map.get(ch, q), co, probe_cell));
        let slope = g * (1.0 - g);
        let (row, col) = dims.row_col(probe_cell);
        for ci in 0..c {
            let kern = &bp.gate_kernel[(co * c + ci) * 9..(co * c + ci + 1) * 9];
            for dy in 0..3 {
                let r = row as isize + dy as isize - 1;
                if r < 0 || r >= dims.height() as isize {
                    continue;
                }
                for dx in 0..3 {
                    let cc = col as isize + dx as isize - 1;
                    if cc < 0 || cc >= dims.width() as isize {
                        continue;
                    }
                    let k = jac.offset(co, dims.index(r as usize, cc as usize), ci);
                    jac.data[k] += slope * kern[dy * 3 + dx];
                }
            }
        }
    }
    Ok(jac)
}

/// Unnormalized sensitivity of the probe outputs to each input cell.
pub fn sensitivity_map(
    map: &FeatureMap,
    order: &ScanOrder,
    bp: &BlockParams,
    probe_cell: usize,
    agg: Aggregation,
    method: Method,
    fd_step: f64,
) -> Result<Vec<f64>> {
    let jac = match method {
        Method::FiniteDifference => fd_jacobian(map, order, bp, probe_cell, fd_step)?,
        Method::Analytic => analytic_jacobian(map, order, bp, probe_cell)?,
    };
    Ok(jac.sensitivity(agg))
}

/// Seed-averaged, max-normalized operator footprint of `order`. Seeds run in
/// parallel; the reduction follows seed order, so results do not depend on
/// the thread count.
pub fn footprint(order: &ScanOrder, cfg: &FootprintConfig) -> Result<FootprintMap> {
    cfg.validate()?;
    let dims = order.dims();
    let probe_cell = cfg.probe.resolve(dims)?;
    let raw = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|i| {
            let (bp, x) = cfg.draw(dims, i)?;
            sensitivity_map(&x, order, &bp, probe_cell, cfg.aggregation, cfg.method, cfg.fd_step)
        })
        .collect::<Result<Vec<_>>>()?;
    FootprintMap::from_raw(dims, cfg.probe, probe_cell, &raw)
}
