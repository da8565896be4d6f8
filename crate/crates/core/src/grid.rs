//! Grid shapes, scan permutations, and the serialization algebra that moves
//! multi-channel grid data to and from 1D sequences.
//!
//! All cells are linearized row-major: `index = row * width + col`. Cell
//! centers live at integer coordinates `(x, y) = (col, row)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    height: usize,
    width: usize,
}

impl GridDims {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDims {
                height,
                width,
                reason: "both sides must be at least 1",
            });
        }
        if height.checked_mul(width).is_none() {
            return Err(Error::InvalidDims {
                height,
                width,
                reason: "cell count overflows the index type",
            });
        }
        Ok(Self { height, width })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    #[inline]
    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    /// Center of `cell` in grid coordinates, `x` along columns.
    #[inline]
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let (row, col) = self.row_col(cell);
        [col as f64, row as f64]
    }

    /// Geometric center of the grid in cell-center coordinates. Half-integral
    /// for even sides.
    pub fn center_point(&self) -> [f64; 2] {
        [
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        ]
    }

    /// The cell at `(floor((H-1)/2), floor((W-1)/2))`.
    pub fn center_cell(&self) -> usize {
        self.index((self.height - 1) / 2, (self.width - 1) / 2)
    }

    pub fn diagonal(&self) -> f64 {
        (self.height as f64).hypot(self.width as f64)
    }
}

impl std::fmt::Display for GridDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// A validated permutation of the cells of a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanOrder {
    dims: GridDims,
    order: Vec<usize>,
}

impl ScanOrder {
    /// Validates that `order` visits every cell of `dims` exactly once.
    /// The error names the first violation found, scanning positions in order.
    pub fn new(dims: GridDims, order: Vec<usize>) -> Result<Self> {
        let n = dims.n_cells();
        if order.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: order.len(),
            });
        }
        let mut seen = vec![false; n];
        for (position, &index) in order.iter().enumerate() {
            if index >= n {
                return Err(Error::IndexOutOfRange {
                    index,
                    position,
                    n_cells: n,
                });
            }
            if std::mem::replace(&mut seen[index], true) {
                return Err(Error::DuplicateIndex { index, position });
            }
        }
        Ok(Self { dims, order })
    }

    #[inline]
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    #[inline]
    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.order.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.order
    }

    /// Inverse permutation: `positions()[cell]` is the step at which `cell`
    /// is visited.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (t, &cell) in self.order.iter().enumerate() {
            pos[cell] = t;
        }
        pos
    }

    pub fn reversed(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        Self {
            dims: self.dims,
            order,
        }
    }
}

/// Multi-channel grid data, stored channel-major and row-major within a
/// channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dims: GridDims,
    channels: usize,
    data: Vec<f64>,
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(offset) => Err(Error::NonFinite(offset)),
        None => Ok(()),
    }
}

impl FeatureMap {
    pub fn new(dims: GridDims, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter {
                name: "channels",
                reason: "must be at least 1".into(),
            });
        }
        let expected = channels * dims.n_cells();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self {
            dims,
            channels,
            data,
        })
    }

    pub fn zeros(dims: GridDims, channels: usize) -> Result<Self> {
        Self::new(dims, channels, vec![0.0; channels * dims.n_cells()])
    }

    #[inline]
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, channel: usize, cell: usize) -> f64 {
        self.data[channel * self.dims.n_cells() + cell]
    }

    /// Callers that write through this must keep values finite.
    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// A serialized sequence, stored position-major: `data[t * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialSequence {
    len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl SerialSequence {
    pub fn new(len: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter {
                name: "channels",
                reason: "must be at least 1".into(),
            });
        }
        let expected = len * channels;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self {
            len,
            channels,
            data,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Serializes `map` along `order`: position `t` receives the channel vector
/// of cell `order[t]`.
pub fn apply_scan(map: &FeatureMap, order: &ScanOrder) -> Result<SerialSequence> {
    if map.dims != order.dims {
        return Err(Error::DimensionMismatch(format!(
            "feature map is {} but scan order is {}",
            map.dims, order.dims
        )));
    }
    let n = map.dims.n_cells();
    let c = map.channels;
    let mut data = vec![0.0; n * c];
    for (t, &cell) in order.order.iter().enumerate() {
        let row = &mut data[t * c..(t + 1) * c];
        for (ch, slot) in row.iter_mut().enumerate() {
            *slot = map.data[ch * n + cell];
        }
    }
    Ok(SerialSequence {
        len: n,
        channels: c,
        data,
    })
}

/// Places sequence position `t` back on cell `order[t]`.
pub fn invert_scan(seq: &SerialSequence, order: &ScanOrder) -> Result<FeatureMap> {
    let n = order.dims.n_cells();
    if seq.len != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: seq.len,
        });
    }
    let c = seq.channels;
    let mut data = vec![0.0; n * c];
    for (t, &cell) in order.order.iter().enumerate() {
        for ch in 0..c {
            data[ch * n + cell] = seq.data[t * c + ch];
        }
    }
    Ok(FeatureMap {
        dims: order.dims,
        channels: c,
        data,
    })
}

/// Reverses the position axis, leaving each channel vector intact.
pub fn flip_sequence(seq: &SerialSequence) -> SerialSequence {
    let c = seq.channels;
    let mut data = Vec::with_capacity(seq.data.len());
    for chunk in seq.data.chunks_exact(c).rev() {
        data.extend_from_slice(chunk);
    }
    SerialSequence {
        len: seq.len,
        channels: c,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims(h: usize, w: usize) -> GridDims {
        GridDims::new(h, w).unwrap()
    }

    fn two_by_two() -> FeatureMap {
        FeatureMap::new(dims(2, 2), 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(GridDims::new(0, 3).is_err());
        assert!(GridDims::new(3, 0).is_err());
        assert!(GridDims::new(usize::MAX, 2).is_err());
    }

    #[test]
    fn scan_order_rejects_duplicates_and_out_of_range() {
        let d = dims(2, 2);
        assert_eq!(
            ScanOrder::new(d, vec![0, 1, 1, 3]),
            Err(Error::DuplicateIndex {
                index: 1,
                position: 2
            })
        );
        assert_eq!(
            ScanOrder::new(d, vec![0, 4, 1, 3]),
            Err(Error::IndexOutOfRange {
                index: 4,
                position: 1,
                n_cells: 4
            })
        );
        assert!(matches!(
            ScanOrder::new(d, vec![0, 1, 2]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn apply_identity_and_reversal() {
        let m = two_by_two();
        let raster = ScanOrder::new(m.dims(), vec![0, 1, 2, 3]).unwrap();
        assert_eq!(apply_scan(&m, &raster).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
        let rev = ScanOrder::new(m.dims(), vec![3, 2, 1, 0]).unwrap();
        assert_eq!(apply_scan(&m, &rev).unwrap().data(), &[4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn invert_known_sequences() {
        let d = dims(2, 2);
        let raster = ScanOrder::new(d, vec![0, 1, 2, 3]).unwrap();
        let s = SerialSequence::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(invert_scan(&s, &raster).unwrap(), two_by_two());
        let rev = ScanOrder::new(d, vec![3, 2, 1, 0]).unwrap();
        let s = SerialSequence::new(4, 1, vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(invert_scan(&s, &rev).unwrap(), two_by_two());
    }

    #[test]
    fn apply_rejects_mismatched_dims() {
        let m = two_by_two();
        let other = ScanOrder::new(dims(1, 4), vec![0, 1, 2, 3]).unwrap();
        assert!(matches!(
            apply_scan(&m, &other),
            Err(Error::DimensionMismatch(_))
        ));
        let s = SerialSequence::new(3, 1, vec![0.0; 3]).unwrap();
        let raster = ScanOrder::new(dims(2, 2), vec![0, 1, 2, 3]).unwrap();
        assert!(invert_scan(&s, &raster).is_err());
    }

    #[test]
    fn feature_map_rejects_non_finite() {
        assert_eq!(
            FeatureMap::new(dims(1, 2), 1, vec![0.0, f64::NAN]),
            Err(Error::NonFinite(1))
        );
    }

    #[test]
    fn flip_examples() {
        let s = SerialSequence::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(flip_sequence(&s).data(), &[3.0, 2.0, 1.0]);
        let one = SerialSequence::new(1, 2, vec![5.0, 6.0]).unwrap();
        assert_eq!(flip_sequence(&one), one);
        let multi = SerialSequence::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(flip_sequence(&multi).data(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn random_round_trips_are_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = dims(8, 8);
        let data: Vec<f64> = (0..3 * 64).map(|_| rng.random::<f64>() - 0.5).collect();
        let m = FeatureMap::new(d, 3, data).unwrap();
        let mut perm: Vec<usize> = (0..64).collect();
        perm.shuffle(&mut rng);
        let order = ScanOrder::new(d, perm).unwrap();
        let back = invert_scan(&apply_scan(&m, &order).unwrap(), &order).unwrap();
        assert_eq!(back.data(), m.data());

        let d = dims(16, 16);
        let data: Vec<f64> = (0..2 * 256).map(|_| rng.random::<f64>()).collect();
        let s = SerialSequence::new(256, 2, data).unwrap();
        let mut perm: Vec<usize> = (0..256).collect();
        perm.shuffle(&mut rng);
        let order = ScanOrder::new(d, perm).unwrap();
        let again = apply_scan(&invert_scan(&s, &order).unwrap(), &order).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn positions_inverts_order() {
        let order = ScanOrder::new(dims(2, 3), vec![4, 0, 5, 1, 3, 2]).unwrap();
        let pos = order.positions();
        for (t, &cell) in order.as_slice().iter().enumerate() {
            assert_eq!(pos[cell], t);
        }
    }

    #[test]
    fn centers() {
        let d = dims(4, 6);
        assert_eq!(d.center_point(), [2.5, 1.5]);
        assert_eq!(d.center_cell(), d.index(1, 2));
        assert_eq!(d.cell_center(d.index(3, 5)), [5.0, 3.0]);
    }
}
