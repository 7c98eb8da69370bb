//! Labeled, possibly non-manifold triangle meshes extracted from a multi-label
//! voxel partition.

mod m3c;
mod trim;

pub use m3c::multi_label_mc;
pub use trim::{trim_outside, TrimOutcome};

use std::collections::BTreeMap;

use crate::geom::{triangle_area, Vec3};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Unordered partition pair `(a, b)`, `a < b`, separated by each face. Faces
    /// are wound so their normal points from `a` toward `b`.
    pub face_labels: Vec<(u32, u32)>,
}

impl LabeledMesh {
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i as usize])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        triangle_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Partition labels appearing on at least one face.
    pub fn labels(&self) -> Vec<u32> {
        let mut l: Vec<u32> = self.face_labels.iter().flat_map(|&(a, b)| [a, b]).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    /// Keep only the faces for which `keep` holds, then drop unreferenced vertices.
    pub fn retain_faces(&mut self, mut keep: impl FnMut(usize) -> bool) {
        let mut faces = Vec::with_capacity(self.faces.len());
        let mut labels = Vec::with_capacity(self.faces.len());
        for f in 0..self.faces.len() {
            if keep(f) {
                faces.push(self.faces[f]);
                labels.push(self.face_labels[f]);
            }
        }
        self.faces = faces;
        self.face_labels = labels;
        self.drop_unreferenced_vertices();
    }

    pub fn drop_unreferenced_vertices(&mut self) {
        let mut map = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for face in &mut self.faces {
            for i in face.iter_mut() {
                let m = &mut map[*i as usize];
                if *m == u32::MAX {
                    *m = vertices.len() as u32;
                    vertices.push(self.vertices[*i as usize]);
                }
                *i = *m;
            }
        }
        self.vertices = vertices;
    }

    /// Append another mesh, offsetting its indices.
    pub fn append(&mut self, other: &LabeledMesh) {
        let off = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(other.faces.iter().map(|f| f.map(|i| i + off)));
        self.face_labels.extend_from_slice(&other.face_labels);
    }
}

/// Undirected edge key with the smaller vertex first.
#[inline]
pub fn edge_key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Number of faces incident to every undirected edge.
pub fn edge_incidence_map(mesh: &LabeledMesh) -> BTreeMap<(u32, u32), usize> {
    let mut map = BTreeMap::new();
    for f in &mesh.faces {
        for e in 0..3 {
            *map.entry(edge_key(f[e], f[(e + 1) % 3])).or_insert(0) += 1;
        }
    }
    map
}
