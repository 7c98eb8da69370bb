//! Vertex refinement against the distance field with one umbrella Laplacian per
//! label group. A face separating labels a and b belongs to both groups a and b,
//! and each group is smoothed on its own so junctions are not dragged across.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extraction::{edge_key, LabeledMesh};
use crate::fields::ScalarField;
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub lambda1: f64,
    pub iterations: usize,
    pub step: f64,
    /// Finite-difference step for non-analytic fields; `None` uses half a voxel.
    pub gradient_h: Option<f64>,
    /// Step halvings allowed per iteration before an update is rejected.
    pub max_halvings: usize,
    /// Smooth over all neighbors in a single group instead of per label.
    /// Only meant for comparisons.
    pub naive_laplacian: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            lambda1: 1000.0,
            iterations: 200,
            step: 5e-4,
            gradient_h: None,
            max_halvings: 5,
            naive_laplacian: false,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda1 must be non-negative, got {}", self.lambda1)));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidConfig(format!("refine step must be positive, got {}", self.step)));
        }
        if let Some(h) = self.gradient_h {
            if !(h > 0.0) {
                return Err(Error::InvalidConfig(format!("gradient step must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Faces of one label together with the 1-ring of every vertex inside them.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub label: u32,
    pub faces: Vec<u32>,
    pub vertices: Vec<u32>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Group {
    fn build(label: u32, faces: Vec<u32>, mesh: &LabeledMesh) -> Self {
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(faces.len() * 6);
        for &f in &faces {
            let t = mesh.faces[f as usize];
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                pairs.push((a, b));
                pairs.push((b, a));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut vertices = Vec::new();
        let mut offsets = vec![0];
        let mut neighbors = Vec::with_capacity(pairs.len());
        for (i, &(a, b)) in pairs.iter().enumerate() {
            if i == 0 || pairs[i - 1].0 != a {
                if i > 0 {
                    offsets.push(neighbors.len());
                }
                vertices.push(a);
            }
            neighbors.push(b);
        }
        if !vertices.is_empty() {
            offsets.push(neighbors.len());
        }
        Self {
            label,
            faces,
            vertices,
            offsets,
            neighbors,
        }
    }

    /// Neighbors of the `k`-th vertex of the group.
    pub fn ring(&self, k: usize) -> &[u32] {
        &self.neighbors[self.offsets[k]..self.offsets[k + 1]]
    }

    /// Edges of the group with more than two incident faces.
    pub fn nonmanifold_edges(&self, mesh: &LabeledMesh) -> usize {
        let mut inc = std::collections::HashMap::new();
        for &f in &self.faces {
            let t = mesh.faces[f as usize];
            for e in 0..3 {
                *inc.entry(edge_key(t[e], t[(e + 1) % 3])).or_insert(0usize) += 1;
            }
        }
        inc.values().filter(|&&c| c > 2).count()
    }
}

/// One group per label, in increasing label order. Every face lands in exactly
/// two groups.
pub fn group_submeshes(mesh: &LabeledMesh) -> Vec<Group> {
    let mut by_label: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
    for (f, &(a, b)) in mesh.face_labels.iter().enumerate() {
        by_label.entry(a).or_default().push(f as u32);
        by_label.entry(b).or_default().push(f as u32);
    }
    let groups: Vec<Group> = by_label.into_iter().map(|(l, faces)| Group::build(l, faces, mesh)).collect();
    for g in &groups {
        let bad = g.nonmanifold_edges(mesh);
        if bad > 0 {
            log::warn!("label group {} has {bad} non-manifold edges", g.label);
        }
    }
    groups
}

fn smoothing_groups(mesh: &LabeledMesh, naive: bool) -> Vec<Group> {
    if naive {
        vec![Group::build(0, (0..mesh.faces.len() as u32).collect(), mesh)]
    } else {
        group_submeshes(mesh)
    }
}

fn umbrella_residual(g: &Group, k: usize, pos: &[Vec3]) -> Vec3 {
    let ring = g.ring(k);
    let mean = ring.iter().map(|&j| pos[j as usize]).sum::<Vec3>() / ring.len() as f64;
    pos[g.vertices[k] as usize] - mean
}

/// Distance and Laplacian parts of the objective, summed over groups.
fn loss_parts(groups: &[Group], pos: &[Vec3], dist: &[f64]) -> (f64, f64) {
    let mut d = 0.0;
    let mut lap = 0.0;
    for g in groups {
        for (k, &v) in g.vertices.iter().enumerate() {
            d += dist[v as usize];
            lap += umbrella_residual(g, k, pos).norm_squared();
        }
    }
    (d, lap)
}

/// Objective value: for every label group and every vertex in it, the distance
/// at the vertex plus `lambda1` times its squared umbrella residual.
pub fn loss(mesh: &LabeledMesh, field: &ScalarField, lambda1: f64) -> f64 {
    let groups = group_submeshes(mesh);
    let dist: Vec<f64> = mesh.vertices.iter().map(|p| field.eval(p)).collect();
    let (d, lap) = loss_parts(&groups, &mesh.vertices, &dist);
    d + lambda1 * lap
}

struct Objective<'a> {
    groups: Vec<Group>,
    /// Number of groups containing each vertex.
    multiplicity: Vec<f64>,
    field: &'a ScalarField,
    h: f64,
    lambda1: f64,
}

struct State {
    pos: Vec<Vec3>,
    grad_f: Vec<Vec3>,
    loss: f64,
}

impl Objective<'_> {
    fn state(&self, pos: Vec<Vec3>) -> State {
        let bbox = self.field.bbox();
        let (dist, grad_f): (Vec<f64>, Vec<Vec3>) = pos
            .par_iter()
            .map(|p| {
                let g = if bbox.contains(p) {
                    self.field.gradient(p, self.h)
                } else {
                    Vec3::repeat(f64::NAN)
                };
                (self.field.eval(p), g)
            })
            .unzip();
        let (d, lap) = loss_parts(&self.groups, &pos, &dist);
        State {
            pos,
            grad_f,
            loss: d + self.lambda1 * lap,
        }
    }

    /// Full gradient; vertices with a non-finite field gradient are frozen.
    fn gradient(&self, s: &State, frozen: &mut Vec<bool>) -> Vec<Vec3> {
        let mut g: Vec<Vec3> = s
            .grad_f
            .iter()
            .zip(&self.multiplicity)
            .map(|(gf, &m)| gf * m)
            .collect();
        let two_l = 2.0 * self.lambda1;
        for grp in &self.groups {
            for (k, &v) in grp.vertices.iter().enumerate() {
                let r = umbrella_residual(grp, k, &s.pos) * two_l;
                g[v as usize] += r;
                let ring = grp.ring(k);
                let share = r / ring.len() as f64;
                for &j in ring {
                    g[j as usize] -= share;
                }
            }
        }
        frozen.clear();
        frozen.extend(g.iter().map(|v| !v.iter().all(|c| c.is_finite())));
        for (v, &fz) in g.iter_mut().zip(frozen.iter()) {
            if fz {
                *v = Vec3::zeros();
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub mesh: LabeledMesh,
    /// Objective before the first and after every iteration.
    pub loss_history: Vec<f64>,
    pub rejected_steps: usize,
    /// Vertex-iterations skipped because the field gradient was not finite.
    pub frozen_vertex_steps: usize,
    /// Step length the next iteration would have tried.
    pub final_step: f64,
}

/// Gradient descent on the grouped objective. A step that raises the objective
/// is halved, at most `max_halvings` times per iteration; if it still raises
/// it the iteration leaves the mesh as is. The step then carries over to the
/// next iteration, doubling back toward `cfg.step` after each success.
pub fn refine(mesh: &LabeledMesh, field: &ScalarField, cfg: &RefineConfig, voxel: f64) -> Result<RefineOutcome> {
    cfg.validate()?;
    let groups = smoothing_groups(mesh, cfg.naive_laplacian);
    let mut multiplicity = vec![0.0; mesh.vertices.len()];
    for g in &groups {
        for &v in &g.vertices {
            multiplicity[v as usize] += 1.0;
        }
    }
    let obj = Objective {
        groups,
        multiplicity,
        field,
        h: cfg.gradient_h.unwrap_or(0.5 * voxel),
        lambda1: cfg.lambda1,
    };
    let mut state = obj.state(mesh.vertices.clone());
    let mut history = vec![state.loss];
    let mut step = cfg.step;
    let mut rejected = 0;
    let mut frozen_steps = 0;
    let mut frozen = Vec::new();
    for _ in 0..cfg.iterations {
        let g = obj.gradient(&state, &mut frozen);
        frozen_steps += frozen.iter().filter(|&&f| f).count();
        let mut accepted = None;
        for attempt in 0..=cfg.max_halvings {
            if attempt > 0 {
                step *= 0.5;
            }
            let pos: Vec<Vec3> = state.pos.iter().zip(&g).map(|(p, d)| p - d * step).collect();
            let cand = obj.state(pos);
            if cand.loss <= state.loss {
                accepted = Some(cand);
                break;
            }
        }
        match accepted {
            Some(s) => {
                state = s;
                step = (2.0 * step).min(cfg.step);
            }
            None => rejected += 1,
        }
        history.push(state.loss);
    }
    if frozen_steps > 0 {
        log::warn!("{frozen_steps} vertex updates skipped for non-finite gradients");
    }
    let mut out = mesh.clone();
    out.vertices = state.pos;
    Ok(RefineOutcome {
        mesh: out,
        loss_history: history,
        rejected_steps: rejected,
        frozen_vertex_steps: frozen_steps,
        final_step: step,
    })
}

/// Analytic gradient of [`loss`], exposed for derivative checks.
pub fn loss_gradient(mesh: &LabeledMesh, field: &ScalarField, lambda1: f64, h: f64) -> Vec<Vec3> {
    let groups = group_submeshes(mesh);
    let mut multiplicity = vec![0.0; mesh.vertices.len()];
    for g in &groups {
        for &v in &g.vertices {
            multiplicity[v as usize] += 1.0;
        }
    }
    let obj = Objective {
        groups,
        multiplicity,
        field,
        h,
        lambda1,
    };
    let s = obj.state(mesh.vertices.clone());
    obj.gradient(&s, &mut Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::fixtures;
    use crate::geom::v3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Regular triangulated n x n grid in the plane z = 0 with spacing `d`.
    fn flat_grid(n: u32, d: f64) -> LabeledMesh {
        let mut m = LabeledMesh::default();
        for j in 0..n {
            for i in 0..n {
                m.vertices.push(v3(i as f64 * d, j as f64 * d, 0.0));
            }
        }
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let a = j * n + i;
                m.faces.push([a, a + 1, a + n + 1]);
                m.faces.push([a, a + n + 1, a + n]);
                m.face_labels.extend([(1, 2), (1, 2)]);
            }
        }
        m
    }

    #[test]
    fn groups_of_a_two_label_mesh_coincide() {
        let m = flat_grid(4, 0.01);
        let g = group_submeshes(&m);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].faces, g[1].faces);
        assert_eq!(g[0].vertices.len(), 16);
        assert!(group_submeshes(&LabeledMesh::default()).is_empty());
    }

    #[test]
    fn junction_vertex_sits_in_three_groups() {
        // three fins sharing the edge (0,1)
        let m = LabeledMesh {
            vertices: vec![v3(0.0, 0.0, 0.0), v3(0.0, 1.0, 0.0), v3(1.0, 0.5, 0.0), v3(-0.5, 0.5, 0.8), v3(-0.5, 0.5, -0.8)],
            faces: vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]],
            face_labels: vec![(1, 2), (2, 3), (1, 3)],
        };
        let groups = group_submeshes(&m);
        assert_eq!(groups.iter().filter(|g| g.vertices.contains(&0)).count(), 3);
    }

    #[test]
    fn doubling_lambda_doubles_the_laplacian_part() {
        let f = ScalarField::from(fixtures::plane());
        let mut m = flat_grid(5, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        m.vertices.iter_mut().for_each(|v| v.z = rng.random_range(-0.002..0.002));
        let base = loss(&m, &f, 0.0);
        let one = loss(&m, &f, 10.0) - base;
        let two = loss(&m, &f, 20.0) - base;
        assert!((two - 2.0 * one).abs() < 1e-12 * two);
    }

    #[test]
    fn flat_uniform_grid_is_a_fixed_point() {
        let f = ScalarField::from(fixtures::plane());
        let m = flat_grid(5, 0.01);
        // boundary rings are lopsided, so only the interior residual vanishes
        let groups = group_submeshes(&m);
        let interior = groups[0].vertices.iter().position(|&v| v == 6).unwrap();
        assert!(umbrella_residual(&groups[0], interior, &m.vertices).norm() < 1e-15);
        let out = refine(&m, &f, &RefineConfig { lambda1: 0.0, ..Default::default() }, 0.01).unwrap();
        assert_eq!(out.mesh.vertices, m.vertices);
    }

    #[test]
    fn pure_distance_descent_reaches_the_plane() {
        let f = ScalarField::from(fixtures::plane());
        let m = LabeledMesh {
            vertices: vec![v3(0.0, 0.0, 0.01), v3(0.01, 0.0, 0.01), v3(0.0, 0.01, 0.01)],
            faces: vec![[0, 1, 2]],
            face_labels: vec![(1, 2)],
        };
        let cfg = RefineConfig {
            lambda1: 0.0,
            iterations: 50,
            step: 1e-3,
            ..Default::default()
        };
        let out = refine(&m, &f, &cfg, 0.01).unwrap();
        assert!(out.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.mesh.vertices.iter().all(|v| v.z.abs() < 1e-3));
    }

    #[test]
    fn perturbed_plane_flattens() {
        let f = ScalarField::from(fixtures::plane());
        let mut m = flat_grid(12, 0.005);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        m.vertices.iter_mut().for_each(|v| v.z = rng.random_range(-0.002..0.002));
        let max0 = m.vertices.iter().map(|v| v.z.abs()).fold(0.0, f64::max);
        let mean0 = m.vertices.iter().map(|v| f.eval(v)).sum::<f64>();
        let out = refine(&m, &f, &RefineConfig::default(), 0.005).unwrap();
        let max1 = out.mesh.vertices.iter().map(|v| v.z.abs()).fold(0.0, f64::max);
        let mean1 = out.mesh.vertices.iter().map(|v| f.eval(v)).sum::<f64>();
        assert!(max1 * 10.0 <= max0, "{max0} -> {max1}");
        assert!(mean1 < mean0);
        assert!(out.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(out.mesh.faces, m.faces);
        assert_eq!(out.mesh.face_labels, m.face_labels);
        assert_eq!(out.mesh.vertices.len(), m.vertices.len());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = ScalarField::from(fixtures::sphere(0.4));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let mut m = flat_grid(4, 0.02);
            for v in m.vertices.iter_mut() {
                *v += v3(0.5, 0.1, 0.1) + v3(rng.random(), rng.random(), rng.random()) * 0.01;
            }
            m.face_labels[3] = (2, 3);
            let g = loss_gradient(&m, &f, 3.0, 1e-6);
            let eps = 1e-6;
            for v in 0..m.vertices.len() {
                for a in 0..3 {
                    let mut hi = m.clone();
                    let mut lo = m.clone();
                    hi.vertices[v][a] += eps;
                    lo.vertices[v][a] -= eps;
                    let fd = (loss(&hi, &f, 3.0) - loss(&lo, &f, 3.0)) / (2.0 * eps);
                    let err = (fd - g[v][a]).abs() / fd.abs().max(g[v][a].abs()).max(1e-3);
                    assert!(err <= 1e-4, "vertex {v} axis {a}: {fd} vs {}", g[v][a]);
                }
            }
        }
    }
}
