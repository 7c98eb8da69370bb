//! Chamfer distance, surface sampling and edge/Euler topology counts.

use std::collections::HashMap;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{edge_incidence_map, LabeledMesh};
use crate::geom::Vec3;

/// Scale applied to reported Chamfer distances.
pub const CHAMFER_SCALE: f64 = 1e4;

fn tree_of(points: &[Vec3]) -> Result<ImmutableKdTree<f64, 3>> {
    let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
    ImmutableKdTree::new_from_slice(&raw).map_err(|e| Error::Degenerate(format!("kd-tree construction failed: {e:?}")))
}

/// Mean over `from` of the squared distance to the nearest point of `to`.
fn one_sided(from: &[Vec3], to: &ImmutableKdTree<f64, 3>) -> f64 {
    let d: Vec<f64> = from
        .par_iter()
        .map(|p| to.query(&[p.x, p.y, p.z]).nearest_one::<SquaredEuclidean<f64>>().execute().distance)
        .collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Symmetric squared Chamfer distance, scaled by [`CHAMFER_SCALE`].
pub fn chamfer_l2(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("chamfer distance needs two non-empty point sets"));
    }
    let ab = one_sided(a, &tree_of(b)?);
    let ba = one_sided(b, &tree_of(a)?);
    Ok(ab.min(ba) * CHAMFER_SCALE + ab.max(ba) * CHAMFER_SCALE)
}

/// `n` points drawn uniformly by area from the mesh surface.
pub fn area_weighted_sample(mesh: &LabeledMesh, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if mesh.is_empty() {
        return Err(Error::EmptyInput("cannot sample an empty mesh"));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("mesh has zero total area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let f = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let [a, b, c] = mesh.triangle(f);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub boundary_edges: usize,
    pub manifold_edges: usize,
    pub nonmanifold_edges: usize,
    pub components: usize,
    pub euler_characteristic: i64,
    pub label_count: usize,
}

impl TopologyReport {
    pub fn is_watertight(&self) -> bool {
        self.boundary_edges == 0 && self.nonmanifold_edges == 0 && self.faces > 0
    }
}

/// Merge vertices at bit-identical positions and drop unreferenced ones.
pub fn weld(mesh: &LabeledMesh) -> LabeledMesh {
    let mut ids: HashMap<[u64; 3], u32> = HashMap::new();
    let mut out = LabeledMesh {
        face_labels: mesh.face_labels.clone(),
        ..Default::default()
    };
    for face in &mesh.faces {
        out.faces.push(face.map(|i| {
            let p = mesh.vertices[i as usize];
            *ids.entry([p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).or_insert_with(|| {
                out.vertices.push(p);
                (out.vertices.len() - 1) as u32
            })
        }));
    }
    out
}

pub fn topology_report(mesh: &LabeledMesh) -> TopologyReport {
    let m = weld(mesh);
    let inc = edge_incidence_map(&m);
    let mut r = TopologyReport {
        vertices: m.vertices.len(),
        edges: inc.len(),
        faces: m.faces.len(),
        label_count: m.labels().len(),
        ..Default::default()
    };
    for &c in inc.values() {
        match c {
            1 => r.boundary_edges += 1,
            2 => r.manifold_edges += 1,
            _ => r.nonmanifold_edges += 1,
        }
    }
    r.euler_characteristic = r.vertices as i64 - r.edges as i64 + r.faces as i64;
    let mut parent: Vec<u32> = (0..m.vertices.len() as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    for f in &m.faces {
        for e in 1..3 {
            let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[e]));
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    r.components = (0..m.vertices.len() as u32).filter(|&v| find(&mut parent, v) == v).count();
    r
}
