use std::collections::{HashMap, VecDeque};

use super::{edge_key, LabeledMesh};
use crate::fields::ScalarField;

#[derive(Debug, Clone)]
pub struct TrimOutcome {
    pub mesh: LabeledMesh,
    pub removed_faces: usize,
    /// Set when nothing survived.
    pub emptied: bool,
}

struct Peeler<'a> {
    mesh: &'a LabeledMesh,
    alive: Vec<bool>,
    count: HashMap<(u32, u32), u32>,
    faces_of: HashMap<(u32, u32), Vec<u32>>,
}

impl<'a> Peeler<'a> {
    fn new(mesh: &'a LabeledMesh) -> Self {
        let mut count = HashMap::new();
        let mut faces_of: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for (f, face) in mesh.faces.iter().enumerate() {
            for e in edges(face) {
                *count.entry(e).or_insert(0) += 1;
                faces_of.entry(e).or_default().push(f as u32);
            }
        }
        Self {
            mesh,
            alive: vec![true; mesh.faces.len()],
            count,
            faces_of,
        }
    }

    fn boundary_edges(&self, f: usize) -> usize {
        edges(&self.mesh.faces[f]).iter().filter(|e| self.count[e] == 1).count()
    }

    fn kill(&mut self, f: usize) {
        self.alive[f] = false;
        for e in edges(&self.mesh.faces[f]) {
            *self.count.get_mut(&e).unwrap() -= 1;
        }
    }

    /// Remove faces satisfying `removable` with at least `min_boundary` open
    /// edges, following the newly opened edges until nothing qualifies.
    fn peel(&mut self, removable: &[bool], min_boundary: usize) -> usize {
        let mut queue: VecDeque<usize> = (0..self.alive.len()).collect();
        let mut removed = 0;
        while let Some(f) = queue.pop_front() {
            if !self.alive[f] || !removable[f] || self.boundary_edges(f) < min_boundary {
                continue;
            }
            self.kill(f);
            removed += 1;
            for e in edges(&self.mesh.faces[f]) {
                queue.extend(self.faces_of[&e].iter().map(|&g| g as usize).filter(|&g| self.alive[g]));
            }
        }
        removed
    }
}

fn edges(face: &[u32; 3]) -> [(u32, u32); 3] {
    [edge_key(face[0], face[1]), edge_key(face[1], face[2]), edge_key(face[2], face[0])]
}

/// Remove the faces that extend from the surface boundaries outside the r2
/// envelope. Faces with every vertex farther than `r2` are peeled starting from
/// open edges, and connected pieces lying wholly outside are dropped; then
/// flaps (faces with two or more open edges and every vertex farther than
/// `r2 / 2`) are peeled. Both steps repeat until nothing changes.
pub fn trim_outside(mesh: &LabeledMesh, field: &ScalarField, r2: f64) -> TrimOutcome {
    let dist: Vec<f64> = mesh.vertices.iter().map(|v| field.eval(v)).collect();
    let beyond = |t: f64| -> Vec<bool> {
        mesh.faces.iter().map(|f| f.iter().all(|&i| dist[i as usize] > t)).collect()
    };
    let outside = beyond(r2);
    let flap = beyond(0.5 * r2);
    let mut p = Peeler::new(mesh);

    // pieces with no face inside the envelope
    let mut parent: Vec<u32> = (0..mesh.vertices.len() as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    for f in &mesh.faces {
        for e in 1..3 {
            let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[e]));
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    let mut keeps_any = vec![false; mesh.vertices.len()];
    for (f, face) in mesh.faces.iter().enumerate() {
        if !outside[f] {
            keeps_any[find(&mut parent, face[0]) as usize] = true;
        }
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        if !keeps_any[find(&mut parent, face[0]) as usize] {
            p.kill(f);
        }
    }

    while p.peel(&outside, 1) + p.peel(&flap, 2) > 0 {}

    let alive = p.alive;
    let mut out = mesh.clone();
    out.retain_faces(|f| alive[f]);
    if out.is_empty() && !mesh.is_empty() {
        log::warn!("trimming removed every face");
    }
    TrimOutcome {
        removed_faces: mesh.faces.len() - out.faces.len(),
        emptied: out.is_empty(),
        mesh: out,
    }
}
