//! Oriented point cloud extraction from a UDF: band sampling, projection onto the
//! zero set, voxel downsampling and PCA normals oriented along a minimum spanning tree.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::num::NonZeroUsize;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geom::{v3, Vec3};

/// Points with unit normals. Normals may be flipped between disconnected pieces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl OrientedPointCloud {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::InvalidConfig(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        let normals = normals
            .into_iter()
            .map(|n| {
                let l = n.norm();
                if l > 0.0 { n / l } else { v3(0.0, 0.0, 1.0) }
            })
            .collect();
        Ok(Self { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn flipped(&self) -> Self {
        Self {
            points: self.points.clone(),
            normals: self.normals.iter().map(|n| -n).collect(),
        }
    }
}

const PROPOSAL_CELLS: usize = 32;
const CHUNK: usize = 8192;
const MAX_ATTEMPTS_PER_POINT: usize = 10_000;

/// Draw `n` points uniformly from the band `{p : field(p) <= r1}` inside the field's box.
///
/// Candidates come from the cells of a coarse lattice that can intersect the band
/// (by the 1-Lipschitz bound), then are rejected against the band. Output is
/// deterministic for a given seed regardless of thread count.
pub fn sample_level_band(field: &ScalarField, r1: f64, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if !(r1 > 0.0) {
        return Err(Error::InvalidConfig(format!("band radius must be positive, got {r1}")));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let bbox = field.bbox();
    let cell = bbox.extent() / PROPOSAL_CELLS as f64;
    let half_diag = 0.5 * cell.norm();
    let cells: Vec<Vec3> = (0..PROPOSAL_CELLS.pow(3))
        .into_par_iter()
        .filter_map(|c| {
            let i = c % PROPOSAL_CELLS;
            let j = (c / PROPOSAL_CELLS) % PROPOSAL_CELLS;
            let k = c / (PROPOSAL_CELLS * PROPOSAL_CELLS);
            let lo = bbox.min + v3(i as f64 * cell.x, j as f64 * cell.y, k as f64 * cell.z);
            let center = lo + cell * 0.5;
            (field.eval(&center) <= r1 + half_diag).then_some(lo)
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::Sampling(format!("no part of the box lies within {r1} of the surface")));
    }
    let n_chunks = n.div_ceil(CHUNK);
    let chunks: Vec<Result<Vec<Vec3>>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let want = CHUNK.min(n - chunk * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64 + 1);
            let mut out = Vec::with_capacity(want);
            let mut attempts = 0usize;
            while out.len() < want {
                attempts += 1;
                if attempts > want * MAX_ATTEMPTS_PER_POINT {
                    return Err(Error::Sampling(format!(
                        "band of radius {r1} has (almost) zero volume; gave up after {attempts} proposals"
                    )));
                }
                let lo = cells[rng.random_range(0..cells.len())];
                let p = lo
                    + v3(
                        rng.random::<f64>() * cell.x,
                        rng.random::<f64>() * cell.y,
                        rng.random::<f64>() * cell.z,
                    );
                if field.eval(&p) <= r1 {
                    out.push(p);
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(n);
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub point: Vec3,
    /// Set when the gradient vanished (medial point) and the input was returned.
    pub skipped: bool,
}

/// Move `p` toward the nearest local minimum of the field by repeated steps
/// `p <- p - f(p) * g(p)/|g(p)|`. A step that increases the field is shortened by
/// 0.9 until it does not; the best iterate is returned.
pub fn project_to_minimum(field: &ScalarField, p: &Vec3, steps: usize, h: f64) -> Projected {
    let mut cur = *p;
    let mut f_cur = field.eval(&cur);
    for _ in 0..steps.max(1) {
        if f_cur == 0.0 {
            break;
        }
        let g = field.gradient(&cur, h);
        let gn = g.norm();
        if !(gn > 1e-12) || !gn.is_finite() {
            if cur == *p {
                return Projected {
                    point: *p,
                    skipped: true,
                };
            }
            break;
        }
        let dir = g / gn;
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let cand = cur - dir * (alpha * f_cur);
            let f_cand = field.eval(&cand);
            if f_cand < f_cur {
                cur = cand;
                f_cur = f_cand;
                moved = true;
                break;
            }
            alpha *= 0.9;
        }
        if !moved {
            break;
        }
    }
    Projected {
        point: cur,
        skipped: false,
    }
}

type CellKey = (i64, i64, i64);

fn cell_key(p: &Vec3, voxel: f64) -> CellKey {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

/// Replace the points in each occupied cube of side `voxel` by their centroid.
/// Output is ordered by cell.
pub fn voxel_downsample(points: &[Vec3], voxel: f64) -> Result<Vec<Vec3>> {
    if !(voxel > 0.0) {
        return Err(Error::InvalidConfig(format!("downsample voxel must be positive, got {voxel}")));
    }
    let mut cells: HashMap<CellKey, (Vec3, usize)> = HashMap::new();
    for p in points {
        let e = cells.entry(cell_key(p, voxel)).or_insert((Vec3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    let mut keyed: Vec<(CellKey, Vec3)> = cells
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();
    keyed.sort_unstable_by_key(|(k, _)| (k.2, k.1, k.0));
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEdge {
    weight: f64,
    node: usize,
    parent: usize,
}

impl Eq for HeapEdge {}

impl Ord for HeapEdge {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (weight, node)
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// k nearest neighbors of every point, excluding the point itself.
pub(crate) fn knn_lists(points: &[Vec3], k: usize) -> Result<Vec<Vec<usize>>> {
    let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = ImmutableKdTree::new_from_slice(&raw)
        .map_err(|e| Error::Degenerate(format!("kd-tree construction failed: {e:?}")))?;
    let want = NonZeroUsize::new((k + 1).min(points.len())).expect("non-empty");
    Ok(raw
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            tree.query(q)
                .nearest_n::<SquaredEuclidean<f64>>(want)
                .execute()
                .into_iter()
                .map(|r| r.item as usize)
                .filter(|&j| j != i)
                .take(k)
                .collect()
        })
        .collect())
}

/// PCA normals over k-nearest neighborhoods, oriented by propagation along a
/// minimum spanning tree of the k-NN graph with edge cost `1 - |n_i . n_j|`.
/// Each connected component is rooted at its highest (max z) point, whose normal
/// is oriented toward +z.
pub fn estimate_normals(points: &[Vec3], k: usize) -> Result<OrientedPointCloud> {
    if k < 3 {
        return Err(Error::InvalidConfig(format!("normal estimation needs k >= 3, got {k}")));
    }
    if points.len() <= k {
        return Err(Error::Degenerate(format!(
            "normal estimation needs more than {k} points, got {}",
            points.len()
        )));
    }
    let knn = knn_lists(points, k)?;
    let pca: Vec<Option<Vec3>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| pca_normal(p, knn[i].iter().map(|&j| &points[j])))
        .collect();
    let mut normals: Vec<Vec3> = (0..points.len())
        .map(|i| {
            pca[i]
                .or_else(|| knn[i].iter().find_map(|&j| pca[j]))
                .unwrap_or_else(|| v3(0.0, 0.0, 1.0))
        })
        .collect();

    let mut adj: Vec<Vec<usize>> = knn.clone();
    for (i, list) in knn.iter().enumerate() {
        for &j in list {
            adj[j].push(i);
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].z.total_cmp(&points[a].z).then(a.cmp(&b)));
    let mut visited = vec![false; points.len()];
    let mut heap = BinaryHeap::new();
    for &root in &order {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        if normals[root].z < 0.0 {
            normals[root] = -normals[root];
        }
        push_edges(&mut heap, &adj, &normals, &visited, root);
        while let Some(e) = heap.pop() {
            if visited[e.node] {
                continue;
            }
            visited[e.node] = true;
            if normals[e.node].dot(&normals[e.parent]) < 0.0 {
                normals[e.node] = -normals[e.node];
            }
            push_edges(&mut heap, &adj, &normals, &visited, e.node);
        }
    }
    OrientedPointCloud::new(points.to_vec(), normals)
}

fn push_edges(
    heap: &mut BinaryHeap<HeapEdge>,
    adj: &[Vec<usize>],
    normals: &[Vec3],
    visited: &[bool],
    from: usize,
) {
    for &to in &adj[from] {
        if !visited[to] {
            heap.push(HeapEdge {
                weight: 1.0 - normals[from].dot(&normals[to]).abs(),
                node: to,
                parent: from,
            });
        }
    }
}

/// Smallest-eigenvalue eigenvector of the neighborhood covariance, or `None` when
/// the neighborhood is (nearly) collinear.
fn pca_normal<'a>(p: &Vec3, neighbors: impl Iterator<Item = &'a Vec3> + Clone) -> Option<Vec3> {
    let mut n = 1usize;
    let mut centroid = *p;
    for q in neighbors.clone() {
        centroid += q;
        n += 1;
    }
    centroid /= n as f64;
    let mut cov = (p - centroid) * (p - centroid).transpose();
    for q in neighbors {
        let d = q - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov as Matrix3<f64>);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l1, l2) = (eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]);
    if !(l2 > 0.0) || l1 <= 1e-10 * l2 {
        return None;
    }
    let v: Vec3 = eig.eigenvectors.column(idx[0]).into_owned();
    Some(v.normalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::fixtures;

    fn plane_grid(n: usize, spacing: f64) -> Vec<Vec3> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(v3(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        pts
    }

    #[test]
    fn band_samples_satisfy_bound_and_are_deterministic() {
        let f = ScalarField::from(fixtures::sphere(0.4));
        let a = sample_level_band(&f, 0.05, 1000, 7).unwrap();
        assert_eq!(a.len(), 1000);
        assert!(a.iter().all(|p| f.eval(p) <= 0.05));
        let b = sample_level_band(&f, 0.05, 1000, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_level_band(&f, 0.05, 1000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn band_sampling_rejects_bad_arguments() {
        let f = ScalarField::from(fixtures::sphere(0.4));
        assert!(sample_level_band(&f, 0.0, 10, 0).is_err());
        assert!(sample_level_band(&f, 0.05, 0, 0).is_err());
        let far = ScalarField::from(fixtures::sphere(5.0));
        assert!(matches!(sample_level_band(&far, 0.05, 10, 0), Err(Error::Sampling(_))));
    }

    #[test]
    fn projection_on_plane_and_sphere() {
        let plane = ScalarField::from(fixtures::plane());
        let p = project_to_minimum(&plane, &v3(0.0, 0.0, 0.04), 10, 1e-3);
        assert!(p.point.z.abs() < 1e-4 && !p.skipped);
        let on = v3(0.1, -0.2, 0.0);
        assert_eq!(project_to_minimum(&plane, &on, 10, 1e-3).point, on);

        let sphere = ScalarField::from(fixtures::sphere(0.4));
        let p = project_to_minimum(&sphere, &v3(0.43, 0.0, 0.0), 10, 1e-3);
        assert!((p.point.norm() - 0.4).abs() < 1e-4);
    }

    #[test]
    fn projection_skips_medial_points() {
        let planes = ScalarField::from(fixtures::two_parallel_planes(0.4, 0.06));
        let q = v3(0.0, 0.0, 0.0);
        let p = project_to_minimum(&planes, &q, 10, 1e-3);
        assert!(p.skipped);
        assert_eq!(p.point, q);
    }

    #[test]
    fn downsample_merges_cell_members() {
        let out = voxel_downsample(&[v3(0.001, 0.001, 0.001), v3(0.003, 0.002, 0.004)], 0.005).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0] - v3(0.002, 0.0015, 0.0025)).norm() < 1e-15);
        let grid = plane_grid(10, 0.01);
        assert_eq!(voxel_downsample(&grid, 0.005).unwrap().len(), 100);
        assert!(voxel_downsample(&[], 0.005).unwrap().is_empty());
        assert!(voxel_downsample(&grid, 0.0).is_err());
    }

    #[test]
    fn plane_normals_are_consistent() {
        let pts = plane_grid(30, 0.005);
        let cloud = estimate_normals(&pts, 30).unwrap();
        for n in &cloud.normals {
            assert!((n - v3(0.0, 0.0, 1.0)).norm() < 1e-9, "{n:?}");
        }
    }

    #[test]
    fn normal_estimation_rejects_small_inputs() {
        assert!(estimate_normals(&plane_grid(3, 0.01), 30).is_err());
        assert!(estimate_normals(&plane_grid(10, 0.01), 2).is_err());
    }

    #[test]
    fn collinear_neighborhoods_fall_back() {
        assert!(pca_normal(&v3(0.0, 0.0, 0.0), [v3(1.0, 0.0, 0.0), v3(2.0, 0.0, 0.0)].iter()).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

        fn fixture_field(which: usize) -> ScalarField {
            match which {
                0 => ScalarField::from(fixtures::sphere(0.4)),
                1 => ScalarField::from(fixtures::plane()),
                _ => ScalarField::from(crate::fields::make_fixture("t-junction", None).unwrap()),
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn projection_never_raises_the_field(which in 0usize..3, x in -0.6f64..0.6, y in -0.6f64..0.6, z in -0.6f64..0.6) {
                let f = fixture_field(which);
                let p = v3(x, y, z);
                let out = project_to_minimum(&f, &p, 10, 0.0025);
                prop_assert!(f.eval(&out.point) <= f.eval(&p));
            }

            #[test]
            fn downsample_is_idempotent(seed in 0u64..1000, voxel in 0.001f64..0.05) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts: Vec<Vec3> = (0..500)
                    .map(|_| v3(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)))
                    .collect();
                let once = voxel_downsample(&pts, voxel).unwrap();
                let twice = voxel_downsample(&once, voxel).unwrap();
                prop_assert_eq!(once.len(), twice.len());
            }
        }
    }
}
