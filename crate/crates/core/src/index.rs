//! A 2D kd-tree over a fixed point set with point deletion and exact
//! nearest-`m` queries.
//!
//! Results are ordered by `(squared distance, id)`, so equidistant points
//! come back smallest id first. Deleted points stay in the tree; subtrees
//! whose live count drops to zero are skipped during search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::grid::GridDims;

const LEAF_SIZE: usize = 8;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub dist: f64,
}

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 2],
    hi: [f64; 2],
    start: u32,
    end: u32,
    left: u32,
    right: u32,
    parent: u32,
    live: u32,
}

impl Node {
    #[inline]
    fn is_leaf(&self) -> bool {
        self.left == NONE
    }

    /// Lower bound on the squared distance from `q` to any point in the box.
    /// Uses the same operation order as [`dist2`], which keeps the bound
    /// below every contained point's rounded distance.
    #[inline]
    fn box_dist2(&self, q: [f64; 2]) -> f64 {
        let gx = if q[0] < self.lo[0] {
            self.lo[0] - q[0]
        } else if q[0] > self.hi[0] {
            q[0] - self.hi[0]
        } else {
            0.0
        };
        let gy = if q[1] < self.lo[1] {
            self.lo[1] - q[1]
        } else if q[1] > self.hi[1] {
            q[1] - self.hi[1]
        } else {
            0.0
        };
        gx * gx + gy * gy
    }
}

#[inline]
pub(crate) fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[derive(Clone, Copy, PartialEq)]
struct Key {
    d2: f64,
    id: u32,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct KdIndex {
    points: Vec<[f64; 2]>,
    nodes: Vec<Node>,
    items: Vec<u32>,
    leaf_of: Vec<u32>,
    alive: Vec<bool>,
    live: usize,
}

impl KdIndex {
    /// Builds the tree over `points`; point `i` gets id `i`.
    ///
    /// Panics if there are `u32::MAX` points or more, or if a coordinate is
    /// NaN.
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        assert!(points.len() < NONE as usize, "too many points for KdIndex");
        assert!(
            points.iter().all(|p| !p[0].is_nan() && !p[1].is_nan()),
            "NaN coordinate"
        );
        let n = points.len();
        let mut index = Self {
            items: (0..n as u32).collect(),
            leaf_of: vec![NONE; n],
            alive: vec![true; n],
            live: n,
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            points,
        };
        if n > 0 {
            index.build(0, n, NONE);
        }
        index
    }

    fn build(&mut self, start: usize, end: usize, parent: u32) -> u32 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &id in &self.items[start..end] {
            let p = self.points[id as usize];
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let me = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo,
            hi,
            start: start as u32,
            end: end as u32,
            left: NONE,
            right: NONE,
            parent,
            live: (end - start) as u32,
        });
        if end - start <= LEAF_SIZE {
            for &id in &self.items[start..end] {
                self.leaf_of[id as usize] = me;
            }
            return me;
        }
        let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
        let mid = (end - start) / 2;
        let points = &self.points;
        self.items[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let left = self.build(start, start + mid, me);
        let right = self.build(start + mid, end, me);
        let node = &mut self.nodes[me as usize];
        node.left = left;
        node.right = right;
        me
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.live
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    #[inline]
    pub fn contains(&self, id: usize) -> bool {
        self.alive.get(id).copied().unwrap_or(false)
    }

    #[inline]
    pub fn point(&self, id: usize) -> [f64; 2] {
        self.points[id]
    }

    /// Deletes `id`. Returns `false` if it was already gone or never existed.
    pub fn remove(&mut self, id: usize) -> bool {
        if !self.contains(id) {
            return false;
        }
        self.alive[id] = false;
        self.live -= 1;
        let mut node = self.leaf_of[id];
        while node != NONE {
            let n = &mut self.nodes[node as usize];
            n.live -= 1;
            node = n.parent;
        }
        true
    }

    /// The `m` live points closest to `query`, ordered by distance then id.
    /// Returns fewer than `m` only when fewer points are live.
    pub fn nearest(&self, query: [f64; 2], m: usize) -> Vec<Neighbor> {
        if m == 0 || self.live == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(m + 1);
        self.search(0, query, m, &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|k| Neighbor {
                id: k.id as usize,
                dist: k.d2.sqrt(),
            })
            .collect()
    }

    fn search(&self, node: u32, q: [f64; 2], m: usize, heap: &mut BinaryHeap<Key>) {
        let n = &self.nodes[node as usize];
        if n.live == 0 {
            return;
        }
        if heap.len() == m && n.box_dist2(q) > heap.peek().map_or(f64::INFINITY, |k| k.d2) {
            return;
        }
        if n.is_leaf() {
            for &id in &self.items[n.start as usize..n.end as usize] {
                if !self.alive[id as usize] {
                    continue;
                }
                let key = Key {
                    d2: dist2(self.points[id as usize], q),
                    id,
                };
                if heap.len() < m {
                    heap.push(key);
                } else if key < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(key);
                }
            }
            return;
        }
        let (l, r) = (n.left, n.right);
        let dl = self.nodes[l as usize].box_dist2(q);
        let dr = self.nodes[r as usize].box_dist2(q);
        if dl <= dr {
            self.search(l, q, m, heap);
            self.search(r, q, m, heap);
        } else {
            self.search(r, q, m, heap);
            self.search(l, q, m, heap);
        }
    }
}

/// The set of grid cells not yet placed in a scan, keyed by linear index.
#[derive(Debug, Clone)]
pub struct UnassignedIndex {
    tree: KdIndex,
}

impl UnassignedIndex {
    pub fn new(dims: GridDims) -> Self {
        let points = (0..dims.n_cells()).map(|c| dims.cell_center(c)).collect();
        Self {
            tree: KdIndex::new(points),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.tree.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    #[inline]
    pub fn contains(&self, cell: usize) -> bool {
        self.tree.contains(cell)
    }

    pub fn remove(&mut self, cell: usize) -> bool {
        self.tree.remove(cell)
    }

    pub fn nearest(&self, query: [f64; 2], m: usize) -> Vec<Neighbor> {
        self.tree.nearest(query, m)
    }
}
