//! Reference scans: row-major raster and the concentric-ring rectangular
//! spiral.

use crate::grid::{GridDims, ScanOrder};

pub fn raster_scan(dims: GridDims) -> ScanOrder {
    ScanOrder::new(dims, (0..dims.n_cells()).collect()).expect("identity is a permutation")
}

/// Concentric square rings around `dims.center_cell()`, innermost first.
///
/// Ring `r` holds the cells at Chebyshev distance `r` from the center. Each
/// ring is walked clockwise (right along the top edge, down, left along the
/// bottom, up the left side), starting at the cell just right of its top-left
/// corner and ending on that corner. The start sits directly above where the
/// previous ring ended. Ring cells outside the grid are skipped.
pub fn rect_spiral_scan(dims: GridDims) -> ScanOrder {
    let h = dims.height() as i64;
    let w = dims.width() as i64;
    let cr = (h - 1) / 2;
    let cc = (w - 1) / 2;
    let max_ring = cr.max(h - 1 - cr).max(cc).max(w - 1 - cc);

    let mut order = Vec::with_capacity(dims.n_cells());
    let mut push = |r: i64, c: i64| {
        if (0..h).contains(&r) && (0..w).contains(&c) {
            order.push(dims.index(r as usize, c as usize));
        }
    };
    push(cr, cc);
    for ring in 1..=max_ring {
        let (top, bottom, left, right) = (cr - ring, cr + ring, cc - ring, cc + ring);
        for c in left + 1..=right {
            push(top, c);
        }
        for r in top + 1..=bottom {
            push(r, right);
        }
        for c in (left..right).rev() {
            push(bottom, c);
        }
        for r in (top..bottom).rev() {
            push(r, left);
        }
    }
    ScanOrder::new(dims, order).expect("rings cover every cell exactly once")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(h: usize, w: usize) -> GridDims {
        GridDims::new(h, w).unwrap()
    }

    #[test]
    fn raster_examples() {
        assert_eq!(raster_scan(dims(2, 3)).as_slice(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(raster_scan(dims(1, 1)).as_slice(), &[0]);
    }

    #[test]
    fn raster_step_structure() {
        let d = dims(5, 7);
        let o = raster_scan(d);
        let mut unit = 0;
        let mut transitions = 0;
        for w in o.as_slice().windows(2) {
            let (r0, _) = d.row_col(w[0]);
            let (r1, _) = d.row_col(w[1]);
            if r0 == r1 {
                let a = d.cell_center(w[0]);
                let b = d.cell_center(w[1]);
                assert_eq!((a[0] - b[0]).hypot(a[1] - b[1]), 1.0);
                unit += 1;
            } else {
                transitions += 1;
            }
        }
        assert_eq!(transitions, 4);
        assert_eq!(unit, 5 * 6);
    }

    #[test]
    fn rect_single_and_three_by_three() {
        assert_eq!(rect_spiral_scan(dims(1, 1)).as_slice(), &[0]);
        let o = rect_spiral_scan(dims(3, 3));
        assert_eq!(o.as_slice()[0], 4);
        // Right of the top-left corner, clockwise, ending on the corner.
        assert_eq!(o.as_slice(), &[4, 1, 2, 5, 8, 7, 6, 3, 0]);
    }

    #[test]
    fn rect_ring_index_is_non_decreasing() {
        for h in 1..=64 {
            for w in [1, 2, 3, 5, 8, 13, 31, 64] {
                let d = dims(h, w);
                let o = rect_spiral_scan(d);
                let (cr, cc) = d.row_col(d.center_cell());
                let ring = |cell: usize| {
                    let (r, c) = d.row_col(cell);
                    (r as i64 - cr as i64).abs().max((c as i64 - cc as i64).abs())
                };
                for pair in o.as_slice().windows(2) {
                    assert!(ring(pair[0]) <= ring(pair[1]), "{h}x{w}");
                }
            }
        }
    }

    #[test]
    fn rect_even_dims_start_at_floor_center() {
        let d = dims(4, 6);
        assert_eq!(rect_spiral_scan(d).as_slice()[0], d.index(1, 2));
    }
}
