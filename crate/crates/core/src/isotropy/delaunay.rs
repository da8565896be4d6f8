//! Incremental Bowyer-Watson Delaunay triangulation.
//!
//! Points are inserted in input order into a large enclosing super-triangle.
//! Each insertion locates its triangle by a visibility walk from the last
//! insertion, grows the cavity of triangles whose circumcircle strictly
//! contains the point, and fans the cavity boundary to the new point.
//! Orientation and in-circle tests use exact adaptive predicates, so
//! co-circular lattice points are never treated as inside; the result on
//! degenerate inputs is fixed by insertion order.

use robust::{incircle, orient2d, Coord};

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;
/// Super-triangle half-width, in multiples of the input extent.
const SUPER_SCALE: f64 = 1e5;

#[derive(Debug, Clone, Copy)]
struct Tri {
    v: [u32; 3],
    /// `nb[i]` lies across the edge opposite `v[i]`.
    nb: [u32; 3],
}

struct Builder {
    pts: Vec<[f64; 2]>,
    tris: Vec<Tri>,
    alive: Vec<bool>,
    mark: Vec<u32>,
    free: Vec<u32>,
    n_alive: usize,
}

#[inline]
fn coord(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

impl Builder {
    #[inline]
    fn orient(&self, a: u32, b: u32, p: [f64; 2]) -> f64 {
        orient2d(coord(self.pts[a as usize]), coord(self.pts[b as usize]), coord(p))
    }

    #[inline]
    fn in_circumcircle(&self, t: u32, p: [f64; 2]) -> bool {
        let v = self.tris[t as usize].v;
        incircle(
            coord(self.pts[v[0] as usize]),
            coord(self.pts[v[1] as usize]),
            coord(self.pts[v[2] as usize]),
            coord(p),
        ) > 0.0
    }

    fn contains(&self, t: u32, p: [f64; 2]) -> bool {
        let v = self.tris[t as usize].v;
        (0..3).all(|i| self.orient(v[(i + 1) % 3], v[(i + 2) % 3], p) >= 0.0)
    }

    fn alloc(&mut self, tri: Tri) -> u32 {
        self.n_alive += 1;
        if let Some(id) = self.free.pop() {
            self.tris[id as usize] = tri;
            self.alive[id as usize] = true;
            self.mark[id as usize] = 0;
            id
        } else {
            self.tris.push(tri);
            self.alive.push(true);
            self.mark.push(0);
            (self.tris.len() - 1) as u32
        }
    }

    fn locate(&self, start: u32, p: [f64; 2]) -> u32 {
        let mut t = start;
        let limit = 4 * self.n_alive + 16;
        for step in 0..limit {
            let tri = self.tris[t as usize];
            let mut next = NONE;
            for j in 0..3 {
                // Rotating the first tested edge keeps the walk from cycling.
                let i = (j + step) % 3;
                if self.orient(tri.v[(i + 1) % 3], tri.v[(i + 2) % 3], p) < 0.0 {
                    next = tri.nb[i];
                    break;
                }
            }
            if next == NONE {
                if self.contains(t, p) {
                    return t;
                }
                break;
            }
            t = next;
        }
        (0..self.tris.len() as u32)
            .find(|&t| self.alive[t as usize] && self.contains(t, p))
            .expect("point lies inside the super-triangle")
    }

    fn insert(&mut self, id: u32, start: u32, epoch: u32) -> u32 {
        let p = self.pts[id as usize];
        let t0 = self.locate(start, p);

        let mut cavity = vec![t0];
        self.mark[t0 as usize] = epoch;
        let mut i = 0;
        while i < cavity.len() {
            let t = cavity[i];
            i += 1;
            for nb in self.tris[t as usize].nb {
                if nb != NONE && self.mark[nb as usize] != epoch && self.in_circumcircle(nb, p) {
                    self.mark[nb as usize] = epoch;
                    cavity.push(nb);
                }
            }
        }

        // Boundary edges (a, b) in counter-clockwise order, with the
        // triangle across them.
        let mut boundary: Vec<(u32, u32, u32)> = Vec::new();
        for &t in &cavity {
            let tri = self.tris[t as usize];
            for k in 0..3 {
                let nb = tri.nb[k];
                if nb == NONE || self.mark[nb as usize] != epoch {
                    boundary.push((tri.v[(k + 1) % 3], tri.v[(k + 2) % 3], nb));
                }
            }
        }
        for &t in &cavity {
            self.alive[t as usize] = false;
            self.free.push(t);
            self.n_alive -= 1;
        }

        let new_ids: Vec<u32> = boundary
            .iter()
            .map(|&(a, b, out)| {
                self.alloc(Tri {
                    v: [a, b, id],
                    nb: [NONE, NONE, out],
                })
            })
            .collect();

        for (e, &(a, b, out)) in boundary.iter().enumerate() {
            let me = new_ids[e];
            let starts_at_b = boundary.iter().position(|&(s, _, _)| s == b).unwrap();
            let ends_at_a = boundary.iter().position(|&(_, t, _)| t == a).unwrap();
            self.tris[me as usize].nb[0] = new_ids[starts_at_b];
            self.tris[me as usize].nb[1] = new_ids[ends_at_a];
            if out != NONE {
                let o = &mut self.tris[out as usize];
                for k in 0..3 {
                    if o.v[(k + 1) % 3] == b && o.v[(k + 2) % 3] == a {
                        o.nb[k] = me;
                    }
                }
            }
        }
        new_ids[0]
    }
}

/// Unique edges of the Delaunay triangulation of `points`, as pairs of
/// input indices `(i, j)` with `i < j`, sorted. Exact duplicate points are
/// merged into their first occurrence.
pub fn delaunay_edges(points: &[[f64; 2]]) -> Result<Vec<(usize, usize)>> {
    if let Some(i) = points
        .iter()
        .position(|p| !(p[0].is_finite() && p[1].is_finite()))
    {
        return Err(Error::NonFinite(i));
    }
    let mut by_pos: Vec<usize> = (0..points.len()).collect();
    by_pos.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(a.cmp(&b))
    });
    let mut keep = vec![true; points.len()];
    for w in by_pos.windows(2) {
        if points[w[0]] == points[w[1]] {
            keep[w[0].max(w[1])] = false;
        }
    }
    let unique: Vec<usize> = (0..points.len()).filter(|&i| keep[i]).collect();
    if unique.len() < 3 {
        return Err(Error::TooFewPoints {
            required: 3,
            actual: unique.len(),
        });
    }
    let a = coord(points[unique[0]]);
    let b = coord(points[unique[1]]);
    if unique
        .iter()
        .all(|&i| orient2d(a, b, coord(points[i])) == 0.0)
    {
        return Err(Error::Collinear);
    }

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &i in &unique {
        for k in 0..2 {
            lo[k] = lo[k].min(points[i][k]);
            hi[k] = hi[k].max(points[i][k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let cx = (lo[0] + hi[0]) / 2.0;
    let cy = (lo[1] + hi[1]) / 2.0;
    let s = SUPER_SCALE * extent;

    let n = unique.len();
    let mut pts: Vec<[f64; 2]> = unique.iter().map(|&i| points[i]).collect();
    pts.push([cx - s, cy - s]);
    pts.push([cx + s, cy - s]);
    pts.push([cx, cy + s]);
    let (s0, s1, s2) = (n as u32, n as u32 + 1, n as u32 + 2);

    let mut b = Builder {
        pts,
        tris: Vec::with_capacity(2 * n + 8),
        alive: Vec::with_capacity(2 * n + 8),
        mark: Vec::with_capacity(2 * n + 8),
        free: Vec::new(),
        n_alive: 0,
    };
    let mut last = b.alloc(Tri {
        v: [s0, s1, s2],
        nb: [NONE; 3],
    });
    for id in 0..n as u32 {
        last = b.insert(id, last, id + 1);
    }

    let mut edges = Vec::with_capacity(3 * n);
    for (t, tri) in b.tris.iter().enumerate() {
        if !b.alive[t] {
            continue;
        }
        for k in 0..3 {
            let (u, v) = (tri.v[(k + 1) % 3], tri.v[(k + 2) % 3]);
            if u < s0 && v < s0 {
                let (u, v) = (unique[u as usize], unique[v as usize]);
                edges.push((u.min(v), u.max(v)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}
