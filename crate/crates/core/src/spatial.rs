//! Uniform-grid spatial hash for fixed-radius ball queries over a static point set.

use crate::geom::Vec3;

pub struct SpatialHash {
    cell: f64,
    origin: Vec3,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl SpatialHash {
    /// Bucket `points` into cubic cells of side `cell`.
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize) + 1);
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; n_cells + 1];
        let cell_ids: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = [0, 1, 2].map(|a| (((p[a] - lo[a]) / cell) as usize).min(dims[a] - 1));
                c[0] + dims[0] * (c[1] + dims[1] * c[2])
            })
            .collect();
        for &c in &cell_ids {
            counts[c + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, &c) in cell_ids.iter().enumerate() {
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Self {
            cell,
            origin: lo,
            dims,
            starts: counts,
            items,
        }
    }

    /// Call `f(index)` for every point within distance `r` of `q` (inclusive),
    /// in a deterministic order.
    pub fn for_each_within<F: FnMut(usize)>(&self, points: &[Vec3], q: &Vec3, r: f64, mut f: F) {
        let r2 = r * r;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let l = ((q[a] - r - self.origin[a]) / self.cell).floor();
            let h = ((q[a] + r - self.origin[a]) / self.cell).floor();
            if h < 0.0 || l > (self.dims[a] - 1) as f64 {
                return;
            }
            lo[a] = l.max(0.0) as usize;
            hi[a] = (h as usize).min(self.dims[a] - 1);
        }
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let c = i + self.dims[0] * (j + self.dims[1] * k);
                    let (s, e) = (self.starts[c] as usize, self.starts[c + 1] as usize);
                    for &it in &self.items[s..e] {
                        let idx = it as usize;
                        if (points[idx] - q).norm_squared() <= r2 {
                            f(idx);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::v3;
    use rand::{Rng, SeedableRng};

    #[test]
    fn ball_query_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| v3(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.1..0.1)))
            .collect();
        let hash = SpatialHash::new(&pts, 0.07);
        for _ in 0..50 {
            let q = v3(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(-0.3..0.3));
            let r = rng.random_range(0.01..0.2);
            let mut got = Vec::new();
            hash.for_each_within(&pts, &q, r, |i| got.push(i));
            got.sort_unstable();
            let want: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= r).collect();
            assert_eq!(got, want);
        }
    }
}
