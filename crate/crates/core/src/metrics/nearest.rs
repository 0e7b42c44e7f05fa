//! Exact nearest-neighbour distances through a uniform bucket grid.

use rayon::prelude::*;

use super::Point;

/// Points bucketed into a uniform grid of cubic cells (CSR layout).
pub struct PointIndex<'a> {
    points: &'a [Point],
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    order: Vec<u32>,
}

#[inline]
fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl<'a> PointIndex<'a> {
    /// Returns `None` for an empty set.
    pub fn new(points: &'a [Point]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0f64, f64::max);
        let n = points.len() as f64;
        let cell = if extent > 0.0 { extent / n.cbrt().max(1.0) } else { 1.0 };
        let dims: [usize; 3] = std::array::from_fn(|k| ((hi[k] - lo[k]) / cell) as usize + 1);
        let total = dims[0] * dims[1] * dims[2];

        let mut index = PointIndex {
            points,
            origin: lo,
            cell,
            dims,
            starts: vec![0; total + 1],
            order: vec![0; points.len()],
        };
        let cells: Vec<usize> = points.iter().map(|p| index.flat(index.cell_of(p))).collect();
        for &c in &cells {
            index.starts[c + 1] += 1;
        }
        for c in 0..total {
            index.starts[c + 1] += index.starts[c];
        }
        let mut fill = index.starts.clone();
        for (i, &c) in cells.iter().enumerate() {
            index.order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Some(index)
    }

    #[inline]
    fn cell_of(&self, p: &Point) -> [usize; 3] {
        std::array::from_fn(|k| {
            let c = ((p[k] - self.origin[k]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[k] - 1)
        })
    }

    #[inline]
    fn flat(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    #[inline]
    fn scan_cell(&self, c: [usize; 3], q: &Point, best: &mut f64) {
        let f = self.flat(c);
        for &i in &self.order[self.starts[f] as usize..self.starts[f + 1] as usize] {
            let d = dist2(q, &self.points[i as usize]);
            if d < *best {
                *best = d;
            }
        }
    }

    /// Euclidean distance from `q` to the closest indexed point.
    pub fn nearest(&self, q: &Point) -> f64 {
        let qc = self.cell_of(q);
        let mut best = f64::INFINITY;
        let slack = 1e-7 * self.cell;
        let max_r = (0..3).map(|k| qc[k].max(self.dims[k] - 1 - qc[k])).max().unwrap();
        for r in 0..=max_r {
            self.scan_shell(qc, r, q, &mut best);

            // distance from q to the nearest face of the visited box that is
            // not also a grid boundary
            let mut bound = f64::INFINITY;
            for k in 0..3 {
                if qc[k] > r {
                    let face = self.origin[k] + (qc[k] - r) as f64 * self.cell;
                    bound = bound.min(q[k] - face);
                }
                if qc[k] + r + 1 < self.dims[k] {
                    let face = self.origin[k] + (qc[k] + r + 1) as f64 * self.cell;
                    bound = bound.min(face - q[k]);
                }
            }
            if bound == f64::INFINITY {
                break;
            }
            if best.is_finite() && best.sqrt() <= bound - slack {
                break;
            }
        }
        best.sqrt()
    }

    /// Visits cells at Chebyshev distance exactly `r` from `c`.
    fn scan_shell(&self, c: [usize; 3], r: usize, q: &Point, best: &mut f64) {
        let range = |k: usize| {
            let lo = c[k].saturating_sub(r);
            let hi = (c[k] + r).min(self.dims[k] - 1);
            (lo, hi)
        };
        let ((x0, x1), (y0, y1), (z0, z1)) = (range(0), range(1), range(2));
        let on_shell = |v: usize, k: usize| v + r == c[k] || v == c[k] + r;
        for z in z0..=z1 {
            let zs = on_shell(z, 2);
            for y in y0..=y1 {
                if zs || on_shell(y, 1) {
                    for x in x0..=x1 {
                        self.scan_cell([x, y, z], q, best);
                    }
                } else {
                    if x0 + r == c[0] {
                        self.scan_cell([x0, y, z], q, best);
                    }
                    if c[0] + r == x1 && r > 0 {
                        self.scan_cell([x1, y, z], q, best);
                    }
                }
            }
        }
    }
}

/// `d(a, B)` for every `a` in `from`. Empty `to` yields infinities.
pub fn directed_distances(from: &[Point], to: &[Point]) -> Vec<f64> {
    match PointIndex::new(to) {
        Some(index) => from.par_iter().map(|a| index.nearest(a)).collect(),
        None => vec![f64::INFINITY; from.len()],
    }
}
