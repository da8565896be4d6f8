use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian, ssm_forward, SsmParams};
use crate::error::{Error, Result};
use crate::grid::{apply_scan, flip_sequence, invert_scan, FeatureMap, GridDims, ScanOrder};

/// Parameters of one bidirectional block.
///
/// `fuse_weight` is `C x 2C` row-major; columns `0..C` read the forward
/// branch and `C..2C` the backward branch. `gate_kernel` is
/// `[c_out][c_in][dy][dx]` with `dy, dx` in `0..3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub channels: usize,
    pub ssm_fwd: SsmParams,
    pub ssm_bwd: SsmParams,
    pub fuse_weight: Vec<f64>,
    pub fuse_bias: Vec<f64>,
    pub gate_kernel: Vec<f64>,
    pub gate_bias: Vec<f64>,
    pub seed: u64,
}

impl BlockParams {
    /// Independent forward and backward SSMs plus fusion and gate weights,
    /// all Gaussian with scale `1/sqrt(fan_in)`.
    pub fn random(channels: usize, state_dim: usize, selective: bool, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ssm_fwd = SsmParams::random(channels, state_dim, selective, rng.next_u64())?;
        let ssm_bwd = SsmParams::random(channels, state_dim, selective, rng.next_u64())?;
        let fuse_scale = 1.0 / ((2 * channels) as f64).sqrt();
        let gate_scale = 1.0 / ((9 * channels) as f64).sqrt();
        let p = Self {
            channels,
            ssm_fwd,
            ssm_bwd,
            fuse_weight: gaussian(&mut rng, 2 * channels * channels, fuse_scale),
            fuse_bias: gaussian(&mut rng, channels, fuse_scale),
            gate_kernel: gaussian(&mut rng, 9 * channels * channels, gate_scale),
            gate_bias: gaussian(&mut rng, channels, gate_scale),
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        self.ssm_fwd.validate()?;
        self.ssm_bwd.validate()?;
        if self.ssm_fwd.channels != c || self.ssm_bwd.channels != c {
            return Err(Error::DimensionMismatch(format!(
                "block has {c} channels but SSMs have {} and {}",
                self.ssm_fwd.channels, self.ssm_bwd.channels
            )));
        }
        let shapes = [
            ("fuse_weight", self.fuse_weight.len(), 2 * c * c),
            ("fuse_bias", self.fuse_bias.len(), c),
            ("gate_kernel", self.gate_kernel.len(), 9 * c * c),
            ("gate_bias", self.gate_bias.len(), c),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("expected {want} entries, got {got}"),
                });
            }
        }
        Ok(())
    }

    /// Swaps the SSMs and the two column blocks of the fusion weights. Paired
    /// with a reversed scan order this leaves the fused branch unchanged.
    pub fn mirrored(&self) -> Self {
        let c = self.channels;
        let mut out = self.clone();
        std::mem::swap(&mut out.ssm_fwd, &mut out.ssm_bwd);
        for row in out.fuse_weight.chunks_exact_mut(2 * c) {
            let (a, b) = row.split_at_mut(c);
            a.swap_with_slice(b);
        }
        out
    }

    /// Pre-activation of the 3x3 zero-padded gate convolution at `cell`,
    /// reading input values through `x(channel, cell)`.
    #[inline]
    pub(crate) fn gate_preact(&self, dims: GridDims, x: impl Fn(usize, usize) -> f64, co: usize, cell: usize) -> f64 {
        let c = self.channels;
        let (row, col) = dims.row_col(cell);
        let mut z = self.gate_bias[co];
        for ci in 0..c {
            let k = &self.gate_kernel[(co * c + ci) * 9..(co * c + ci + 1) * 9];
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
                    z += k[dy * 3 + dx] * x(ci, dims.index(r as usize, cc as usize));
                }
            }
        }
        z
    }

    /// Fused branch value for output channel `co` given the branch outputs at
    /// one cell. The two halves are summed separately so that mirroring the
    /// block reproduces the value exactly.
    #[inline]
    pub(crate) fn fuse(&self, co: usize, fwd: &[f64], bwd: &[f64]) -> f64 {
        let c = self.channels;
        let w = &self.fuse_weight[co * 2 * c..(co + 1) * 2 * c];
        let f: f64 = w[..c].iter().zip(fwd).map(|(a, b)| a * b).sum();
        let b: f64 = w[c..].iter().zip(bwd).map(|(a, b)| a * b).sum();
        (f + b) + self.fuse_bias[co]
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParts {
    /// Fused bidirectional SSM branch.
    pub fused: FeatureMap,
    /// `sigmoid(conv3x3(input))`.
    pub gate: FeatureMap,
    /// `input + (gate + fused)`.
    pub output: FeatureMap,
}

/// Runs the block and returns every intermediate map.
pub fn bfs_block_parts(map: &FeatureMap, order: &ScanOrder, bp: &BlockParams) -> Result<BlockParts> {
    bp.validate()?;
    if map.channels() != bp.channels {
        return Err(Error::DimensionMismatch(format!(
            "feature map has {} channels, block expects {}",
            map.channels(),
            bp.channels
        )));
    }
    let dims = map.dims();
    let seq = apply_scan(map, order)?;
    let out_fwd = invert_scan(&ssm_forward(&seq, &bp.ssm_fwd)?, order)?;
    let out_bwd = invert_scan(
        &flip_sequence(&ssm_forward(&flip_sequence(&seq), &bp.ssm_bwd)?),
        order,
    )?;

    let c = bp.channels;
    let n = dims.n_cells();
    let mut fused = FeatureMap::zeros(dims, c)?;
    let mut gate = FeatureMap::zeros(dims, c)?;
    let mut output = FeatureMap::zeros(dims, c)?;
    let mut fv = vec![0.0; c];
    let mut bv = vec![0.0; c];
    for cell in 0..n {
        for ch in 0..c {
            fv[ch] = out_fwd.get(ch, cell);
            bv[ch] = out_bwd.get(ch, cell);
        }
        for co in 0..c {
            let fm = bp.fuse(co, &fv, &bv);
            let g = sigmoid(bp.gate_preact(dims, |ch, q| map.get(ch, q), co, cell));
            fused.data_mut()[co * n + cell] = fm;
            gate.data_mut()[co * n + cell] = g;
            output.data_mut()[co * n + cell] = map.get(co, cell) + (g + fm);
        }
    }
    Ok(BlockParts {
        fused,
        gate,
        output,
    })
}

pub fn bfs_block_forward(map: &FeatureMap, order: &ScanOrder, bp: &BlockParams) -> Result<FeatureMap> {
    Ok(bfs_block_parts(map, order, bp)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::raster_scan;
    use crate::matching::{fermat_scan, MatchConfig};
    use crate::ssm::SsmParams;

    fn random_map(dims: GridDims, c: usize, seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap::new(dims, c, gaussian(&mut rng, c * dims.n_cells(), 1.0)).unwrap()
    }

    fn zero_block(c: usize, s: usize) -> BlockParams {
        // a_diag must stay negative; with zero projections it has no effect.
        let ssm = SsmParams {
            channels: c,
            state_dim: s,
            a_diag: vec![-1.0; s],
            b_proj: vec![0.0; s * c],
            c_proj: vec![0.0; s * c],
            delta_proj: vec![0.0; c],
            selective: true,
            seed: 0,
        };
        BlockParams {
            channels: c,
            ssm_fwd: ssm.clone(),
            ssm_bwd: ssm,
            fuse_weight: vec![0.0; 2 * c * c],
            fuse_bias: vec![0.0; c],
            gate_kernel: vec![0.0; 9 * c * c],
            gate_bias: vec![0.0; c],
            seed: 0,
        }
    }

    #[test]
    fn shape_is_preserved() {
        let d = GridDims::new(16, 16).unwrap();
        let map = random_map(d, 3, 1);
        let bp = BlockParams::random(3, 4, true, 5).unwrap();
        let out = bfs_block_forward(&map, &raster_scan(d), &bp).unwrap();
        assert_eq!(out.dims(), d);
        assert_eq!(out.channels(), 3);
    }

    #[test]
    fn zero_parameters_give_half_everywhere() {
        let d = GridDims::new(5, 4).unwrap();
        let map = FeatureMap::zeros(d, 2).unwrap();
        let out = bfs_block_forward(&map, &raster_scan(d), &zero_block(2, 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let d = GridDims::new(9, 7).unwrap();
        let order = fermat_scan(d, &MatchConfig::for_grid(d)).unwrap();
        let a = bfs_block_forward(&random_map(d, 2, 3), &order, &BlockParams::random(2, 4, true, 8).unwrap()).unwrap();
        let b = bfs_block_forward(&random_map(d, 2, 3), &order, &BlockParams::random(2, 4, true, 8).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn independent_directions() {
        let bp = BlockParams::random(3, 4, true, 12).unwrap();
        assert_ne!(bp.ssm_fwd, bp.ssm_bwd);
    }

    #[test]
    fn reversed_order_with_mirrored_block_keeps_fused_branch() {
        for (h, w, seed) in [(8, 8, 1u64), (5, 11, 2), (16, 3, 3)] {
            let d = GridDims::new(h, w).unwrap();
            let map = random_map(d, 3, seed);
            let order = fermat_scan(d, &MatchConfig::for_grid(d)).unwrap();
            for selective in [false, true] {
                let bp = BlockParams::random(3, 5, selective, seed + 10).unwrap();
                let a = bfs_block_parts(&map, &order, &bp).unwrap();
                let b = bfs_block_parts(&map, &order.reversed(), &bp.mirrored()).unwrap();
                assert_eq!(a.fused, b.fused);
            }
        }
    }

    #[test]
    fn rejects_mismatches() {
        let d = GridDims::new(4, 4).unwrap();
        let bp = BlockParams::random(2, 3, true, 0).unwrap();
        let map = random_map(d, 3, 0);
        assert!(bfs_block_forward(&map, &raster_scan(d), &bp).is_err());
        let map = random_map(d, 2, 0);
        let other = raster_scan(GridDims::new(2, 8).unwrap());
        assert!(bfs_block_forward(&map, &other, &bp).is_err());
    }
}
