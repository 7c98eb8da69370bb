use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::geom::{v3, Aabb, Vec3};

/// Default world box that contains every field the pipeline handles.
pub const DEFAULT_BBOX_HALF: f64 = 0.6;

/// Regular voxel grid over a box. Voxel `(i, j, k)` is the cell whose center is
/// `min + (idx + 0.5) * voxel`; linear indices are x-fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub bbox: Aabb,
}

impl GridSpec {
    pub fn new(dims: [usize; 3], bbox: Aabb) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidSpec(format!("resolution must be positive, got {dims:?}")));
        }
        let ext = bbox.extent();
        if (0..3).any(|i| !(ext[i] > 0.0) || !ext[i].is_finite()) {
            return Err(Error::InvalidSpec(format!("degenerate bbox {bbox:?}")));
        }
        Ok(Self { dims, bbox })
    }

    /// Cubic grid of `res` voxels per axis over `[-0.6, 0.6]^3`.
    pub fn cubic(res: usize) -> Result<Self> {
        Self::new([res; 3], Aabb::cube(DEFAULT_BBOX_HALF))
    }

    pub fn with_bbox(res: usize, bbox: Aabb) -> Result<Self> {
        Self::new([res; 3], bbox)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_sizes(&self) -> Vec3 {
        let e = self.bbox.extent();
        v3(
            e.x / self.dims[0] as f64,
            e.y / self.dims[1] as f64,
            e.z / self.dims[2] as f64,
        )
    }

    /// Edge length of a voxel (smallest axis for non-cubic voxels).
    pub fn voxel_size(&self) -> f64 {
        self.voxel_sizes().min()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let vs = self.voxel_sizes();
        v3(
            self.bbox.min.x + (i as f64 + 0.5) * vs.x,
            self.bbox.min.y + (j as f64 + 0.5) * vs.y,
            self.bbox.min.z + (k as f64 + 0.5) * vs.z,
        )
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.center(i, j, k)
    }

    /// Voxel containing `p`, or `None` outside the box.
    pub fn voxel_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let vs = self.voxel_sizes();
        let mut out = [0usize; 3];
        for a in 0..3 {
            let u = ((p[a] - self.bbox.min[a]) / vs[a]).floor();
            if u < 0.0 || u >= self.dims[a] as f64 {
                return None;
            }
            out[a] = u as usize;
        }
        Some(out)
    }

    /// Face-adjacent neighbors of a voxel, in -x,+x,-y,+y,-z,+z order.
    pub fn neighbors6(&self, idx: usize) -> impl Iterator<Item = usize> {
        let [i, j, k] = self.coords(idx);
        let d = self.dims;
        let sx = 1;
        let sy = d[0];
        let sz = d[0] * d[1];
        [
            (i > 0).then(|| idx - sx),
            (i + 1 < d[0]).then(|| idx + sx),
            (j > 0).then(|| idx - sy),
            (j + 1 < d[1]).then(|| idx + sy),
            (k > 0).then(|| idx - sz),
            (k + 1 < d[2]).then(|| idx + sz),
        ]
        .into_iter()
        .flatten()
    }

    /// Neighbors in the +x, +y, +z directions; enumerates each adjacent pair once.
    pub fn forward_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> {
        let [i, j, k] = self.coords(idx);
        let d = self.dims;
        [
            (i + 1 < d[0]).then(|| idx + 1),
            (j + 1 < d[1]).then(|| idx + d[0]),
            (k + 1 < d[2]).then(|| idx + d[0] * d[1]),
        ]
        .into_iter()
        .flatten()
    }

    /// True when the voxel lies on the outer layer of the grid.
    pub(crate) fn on_grid_boundary(&self, idx: usize) -> bool {
        let c = self.coords(idx);
        (0..3).any(|a| c[a] == 0 || c[a] + 1 == self.dims[a])
    }
}

/// Unsigned distance values sampled at voxel centers, evaluated by trilinear
/// interpolation between centers. Queries outside the center lattice clamp to it.
#[derive(Debug)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
    clamped: AtomicUsize,
}

impl Clone for GridField {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec,
            values: self.values.clone(),
            clamped: AtomicUsize::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidSpec(format!(
                "expected {} grid values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(Self {
            spec,
            values,
            clamped: AtomicUsize::new(0),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// How many queries fell outside the sampled lattice and were clamped.
    pub fn clamped_queries(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    pub fn eval(&self, p: &Vec3) -> f64 {
        let vs = self.spec.voxel_sizes();
        let mut base = [0usize; 3];
        let mut t = [0.0f64; 3];
        let mut clamped = false;
        for a in 0..3 {
            let n = self.spec.dims[a];
            let mut u = (p[a] - self.spec.bbox.min[a]) / vs[a] - 0.5;
            // snap queries at voxel centers so node values come back exactly
            let r = u.round();
            if (u - r).abs() < 1e-9 {
                u = r;
            }
            let hi = (n - 1) as f64;
            if !(u >= 0.0) {
                clamped |= u < 0.0 || u.is_nan();
                u = 0.0;
            } else if u > hi {
                clamped = true;
                u = hi;
            }
            if n == 1 {
                base[a] = 0;
                t[a] = 0.0;
                continue;
            }
            let i0 = (u.floor() as usize).min(n - 2);
            base[a] = i0;
            t[a] = u - i0 as f64;
        }
        if clamped {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        let d = self.spec.dims;
        let step = |a: usize| usize::from(d[a] > 1);
        let at = |di: usize, dj: usize, dk: usize| {
            self.values[self.spec.index(
                base[0] + di * step(0),
                base[1] + dj * step(1),
                base[2] + dk * step(2),
            )]
        };
        let lerp = |a: f64, b: f64, s: f64| if s == 0.0 { a } else { a * (1.0 - s) + b * s };
        let c00 = lerp(at(0, 0, 0), at(1, 0, 0), t[0]);
        let c10 = lerp(at(0, 1, 0), at(1, 1, 0), t[0]);
        let c01 = lerp(at(0, 0, 1), at(1, 0, 1), t[0]);
        let c11 = lerp(at(0, 1, 1), at(1, 1, 1), t[0]);
        let c0 = lerp(c00, c10, t[1]);
        let c1 = lerp(c01, c11, t[1]);
        lerp(c0, c1, t[2])
    }
}
