//! Relabeling of eroded voxels by alpha-expansion on a Potts energy with hard
//! seed constraints and a 0/1 data term that prefers the labels a voxel's original
//! partition split into.

use std::collections::VecDeque;

use super::maxflow::FlowGraph;
use super::LabelField;
use crate::error::{Error, Result};
use crate::fields::GridSpec;

/// Marker for a voxel with no originating partition (its data term is always 0).
pub const NO_ORIGIN: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct RelabelProblem {
    pub spec: GridSpec,
    /// Voxels taking part in the energy (the r1 envelope).
    pub active: Vec<bool>,
    /// Fixed label per seed voxel, 0 for free voxels.
    pub seed: Vec<u32>,
    /// Origin partition of each free voxel, indexing `allowed_sets`, or [`NO_ORIGIN`].
    pub origin: Vec<u32>,
    /// Labels a free voxel may take at zero data cost; an empty set allows all.
    pub allowed_sets: Vec<Vec<u32>>,
}

impl RelabelProblem {
    pub fn is_free(&self, v: usize) -> bool {
        self.active[v] && self.seed[v] == 0
    }

    pub fn data_cost(&self, v: usize, label: u32) -> i64 {
        let o = self.origin[v];
        if o == NO_ORIGIN {
            return 0;
        }
        let set = &self.allowed_sets[o as usize];
        i64::from(!set.is_empty() && !set.contains(&label))
    }

    fn validate(&self) -> Result<()> {
        let n = self.spec.len();
        if self.active.len() != n || self.seed.len() != n || self.origin.len() != n {
            return Err(Error::SpecMismatch);
        }
        for v in 0..n {
            if self.seed[v] != 0 && !self.active[v] {
                return Err(Error::InvalidConfig(format!("seed voxel {v} lies outside the active region")));
            }
            let o = self.origin[v];
            if self.is_free(v) && o != NO_ORIGIN && o as usize >= self.allowed_sets.len() {
                return Err(Error::InvalidConfig(format!("voxel {v} has unknown origin {o}")));
            }
        }
        Ok(())
    }
}

/// Total energy of a labeling: data terms over free voxels plus Potts terms over
/// all 6-adjacent active pairs.
pub fn energy(problem: &RelabelProblem, labels: &[u32]) -> i64 {
    let spec = problem.spec;
    let mut e = 0i64;
    for v in 0..spec.len() {
        if !problem.active[v] {
            continue;
        }
        if problem.seed[v] == 0 {
            e += problem.data_cost(v, labels[v]);
        }
        for m in spec.forward_neighbors(v) {
            if problem.active[m] && labels[m] != labels[v] {
                e += 1;
            }
        }
    }
    e
}

#[derive(Debug, Clone)]
pub struct AlphaOutcome {
    pub field: LabelField,
    /// Energy after initialization and after every sweep.
    pub energy_history: Vec<i64>,
    /// Free voxels in regions with no adjacent seed and no preferred labels,
    /// filled with the label of the nearest seed.
    pub unreachable: usize,
    pub sweeps: usize,
}

struct Component {
    voxels: Vec<usize>,
    labels: Vec<u32>,
}

/// Minimize the relabeling energy by alpha-expansion. Each free connected region
/// is solved independently over the labels it can see (adjacent seeds plus its
/// preferred sets); two-label regions are solved exactly by a single cut.
pub fn alpha_expansion(problem: &RelabelProblem, max_sweeps: usize) -> Result<AlphaOutcome> {
    problem.validate()?;
    let spec = problem.spec;
    let n = spec.len();
    let mut labels: Vec<u32> = (0..n)
        .map(|v| if problem.active[v] { problem.seed[v] } else { 0 })
        .collect();
    let has_seed = problem.seed.iter().any(|&s| s != 0);

    // free components
    let mut comp_of = vec![u32::MAX; n];
    let mut comps: Vec<Component> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !problem.is_free(start) || comp_of[start] != u32::MAX {
            continue;
        }
        let id = comps.len() as u32;
        let mut voxels = vec![start];
        let mut universe = Vec::new();
        comp_of[start] = id;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            let o = problem.origin[v];
            if o != NO_ORIGIN {
                universe.extend_from_slice(&problem.allowed_sets[o as usize]);
            }
            for m in spec.neighbors6(v) {
                if !problem.active[m] {
                    continue;
                }
                if problem.seed[m] != 0 {
                    universe.push(problem.seed[m]);
                } else if comp_of[m] == u32::MAX {
                    comp_of[m] = id;
                    voxels.push(m);
                    queue.push_back(m);
                }
            }
        }
        universe.sort_unstable();
        universe.dedup();
        comps.push(Component {
            voxels,
            labels: universe,
        });
    }

    if !comps.is_empty() && !has_seed {
        return Err(Error::Degenerate("no seed voxels survived erosion".into()));
    }

    let mut unreachable = 0usize;
    for comp in &comps {
        if comp.labels.is_empty() {
            unreachable += comp.voxels.len();
            fill_from_nearest_seed(problem, &comp.voxels, &mut labels);
        } else if comp.labels.len() == 2 {
            for &v in &comp.voxels {
                labels[v] = comp.labels[1];
            }
        } else {
            init_from_adjacent_seeds(problem, comp, &comp_of, &mut labels);
        }
    }

    let mut history = vec![energy(problem, &labels)];
    let mut sweeps = 0;
    let mut scratch = MoveScratch::new(n);
    for _ in 0..max_sweeps {
        sweeps += 1;
        let mut improved = false;
        for comp in comps.iter().filter(|c| c.labels.len() > 1) {
            for &alpha in &comp.labels {
                improved |= expansion_move(problem, comp, alpha, &mut labels, &mut scratch);
            }
        }
        history.push(energy(problem, &labels));
        if !improved {
            break;
        }
    }
    Ok(AlphaOutcome {
        field: LabelField::new(spec, labels),
        energy_history: history,
        unreachable,
        sweeps,
    })
}

fn init_from_adjacent_seeds(problem: &RelabelProblem, comp: &Component, comp_of: &[u32], labels: &mut [u32]) {
    let spec = problem.spec;
    let id = comp_of[comp.voxels[0]];
    let mut queue = VecDeque::new();
    let mut done = vec![];
    for &v in &comp.voxels {
        labels[v] = 0;
    }
    for &v in &comp.voxels {
        if let Some(l) = spec.neighbors6(v).map(|m| problem.seed[m]).filter(|&l| l != 0).min() {
            labels[v] = l;
            queue.push_back(v);
            done.push(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        for m in spec.neighbors6(v) {
            if comp_of[m] == id && labels[m] == 0 {
                labels[m] = labels[v];
                queue.push_back(m);
            }
        }
    }
    // components whose only labels come from preferred sets
    for &v in &comp.voxels {
        if labels[v] == 0 {
            labels[v] = comp.labels[0];
        }
    }
}

fn fill_from_nearest_seed(problem: &RelabelProblem, voxels: &[usize], labels: &mut [u32]) {
    let spec = problem.spec;
    let mut dist = vec![u32::MAX; spec.len()];
    let mut queue = VecDeque::new();
    for &v in voxels {
        dist[v] = 0;
        queue.push_back(v);
    }
    // search outward through the whole grid for the closest seed
    let mut found = None;
    while let Some(v) = queue.pop_front() {
        if problem.seed[v] != 0 {
            found = Some(problem.seed[v]);
            break;
        }
        for m in spec.neighbors6(v) {
            if dist[m] == u32::MAX {
                dist[m] = dist[v] + 1;
                queue.push_back(m);
            }
        }
    }
    let l = found.expect("caller checked that seeds exist");
    for &v in voxels {
        labels[v] = l;
    }
}

struct MoveScratch {
    node: Vec<u32>,
}

impl MoveScratch {
    fn new(n: usize) -> Self {
        Self {
            node: vec![u32::MAX; n],
        }
    }
}

/// One alpha-expansion move restricted to a free component. Returns true when the
/// labeling changed with a strict energy decrease.
fn expansion_move(
    problem: &RelabelProblem,
    comp: &Component,
    alpha: u32,
    labels: &mut [u32],
    scratch: &mut MoveScratch,
) -> bool {
    let spec = problem.spec;
    let nodes: Vec<usize> = comp.voxels.iter().copied().filter(|&v| labels[v] != alpha).collect();
    if nodes.is_empty() {
        return false;
    }
    for (i, &v) in nodes.iter().enumerate() {
        scratch.node[v] = i as u32;
    }
    let s = nodes.len();
    let t = s + 1;
    let mut g = FlowGraph::with_capacity(nodes.len() + 2, nodes.len() * 4);
    let mut unary = vec![(0i64, 0i64); nodes.len()];
    for (i, &v) in nodes.iter().enumerate() {
        let fp = labels[v];
        unary[i].0 += problem.data_cost(v, fp);
        unary[i].1 += problem.data_cost(v, alpha);
        for m in spec.neighbors6(v) {
            if !problem.active[m] {
                continue;
            }
            let j = scratch.node[m];
            if j == u32::MAX {
                // fixed neighbor: seed, or a free voxel already labeled alpha
                let lq = labels[m];
                unary[i].0 += i64::from(fp != lq);
                unary[i].1 += i64::from(alpha != lq);
            } else if (j as usize) > i {
                // x = 1 means switching to alpha
                let fq = labels[m];
                let a = i64::from(fp != fq);
                // E = a + (1-a) x_p - x_q + (2-a)(1-x_p) x_q
                unary[i].1 += 1 - a;
                unary[j as usize].1 -= 1;
                // constant `a` does not affect the argmin
                g.add_edge_pair(i, j as usize, 2 - a, 0);
            }
        }
    }
    for (i, &(keep, switch)) in unary.iter().enumerate() {
        let d = switch - keep;
        if d > 0 {
            g.add_edge(s, i, d);
        } else if d < 0 {
            g.add_edge(i, t, -d);
        }
    }
    g.max_flow(s, t);
    let side = g.source_side(s);

    let before: Vec<u32> = nodes.iter().map(|&v| labels[v]).collect();
    let old = local_energy(problem, &nodes, labels, scratch);
    for (i, &v) in nodes.iter().enumerate() {
        if !side[i] {
            labels[v] = alpha;
        }
    }
    let new = local_energy(problem, &nodes, labels, scratch);
    let improved = new < old;
    if !improved {
        for (i, &v) in nodes.iter().enumerate() {
            labels[v] = before[i];
        }
    }
    for &v in &nodes {
        scratch.node[v] = u32::MAX;
    }
    improved
}

/// Energy terms touching the move's nodes (each pair counted once).
fn local_energy(problem: &RelabelProblem, nodes: &[usize], labels: &[u32], scratch: &MoveScratch) -> i64 {
    let spec = problem.spec;
    let mut e = 0i64;
    for (i, &v) in nodes.iter().enumerate() {
        e += problem.data_cost(v, labels[v]);
        for m in spec.neighbors6(v) {
            if !problem.active[m] {
                continue;
            }
            let j = scratch.node[m];
            if j == u32::MAX || (j as usize) > i {
                e += i64::from(labels[m] != labels[v]);
            }
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;

    fn strip_problem() -> RelabelProblem {
        let spec = GridSpec::new([5, 1, 1], Aabb::cube(1.0)).unwrap();
        RelabelProblem {
            spec,
            active: vec![true; 5],
            seed: vec![3, 0, 0, 0, 3],
            origin: vec![NO_ORIGIN; 5],
            allowed_sets: vec![],
        }
    }

    #[test]
    fn strip_between_equal_seeds_takes_their_label() {
        let out = alpha_expansion(&strip_problem(), 10).unwrap();
        assert_eq!(out.field.labels, vec![3; 5]);
        assert_eq!(*out.energy_history.last().unwrap(), 0);
    }

    #[test]
    fn data_term_pulls_toward_preferred_labels() {
        let spec = GridSpec::new([5, 1, 1], Aabb::cube(1.0)).unwrap();
        let p = RelabelProblem {
            spec,
            active: vec![true; 5],
            seed: vec![1, 0, 0, 0, 2],
            origin: vec![NO_ORIGIN, 0, 0, 0, NO_ORIGIN],
            allowed_sets: vec![vec![2]],
        };
        let out = alpha_expansion(&p, 10).unwrap();
        assert_eq!(out.field.labels, vec![1, 2, 2, 2, 2]);
        assert_eq!(energy(&p, &out.field.labels), 1);
    }

    #[test]
    fn isolated_free_region_takes_nearest_seed() {
        let spec = GridSpec::new([6, 1, 1], Aabb::cube(1.0)).unwrap();
        let p = RelabelProblem {
            spec,
            active: vec![true, false, true, true, false, true],
            seed: vec![0, 0, 0, 0, 0, 9],
            origin: vec![NO_ORIGIN; 6],
            allowed_sets: vec![],
        };
        let out = alpha_expansion(&p, 10).unwrap();
        assert_eq!(out.field.labels, vec![9, 0, 9, 9, 0, 9]);
        assert_eq!(out.unreachable, 3);
    }

    #[test]
    fn no_seeds_is_an_error() {
        let mut p = strip_problem();
        p.seed = vec![0; 5];
        assert!(alpha_expansion(&p, 10).is_err());
    }

    fn random_problem(rng: &mut impl rand::Rng, n_labels: u32, max_free: usize) -> RelabelProblem {
        let dims = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let spec = GridSpec::new(dims, Aabb::cube(1.0)).unwrap();
        let n = spec.len();
        let allowed_sets: Vec<Vec<u32>> = (0..3)
            .map(|_| (1..=n_labels).filter(|_| rng.random_bool(0.4)).collect())
            .collect();
        let mut p = RelabelProblem {
            spec,
            active: (0..n).map(|_| rng.random_bool(0.9)).collect(),
            seed: vec![0; n],
            origin: vec![NO_ORIGIN; n],
            allowed_sets,
        };
        let mut free = 0;
        for v in 0..n {
            if !p.active[v] {
                continue;
            }
            if free < max_free && rng.random_bool(0.6) {
                free += 1;
                p.origin[v] = if rng.random_bool(0.8) { rng.random_range(0..3) } else { NO_ORIGIN };
            } else {
                p.seed[v] = rng.random_range(1..=n_labels);
            }
        }
        p
    }

    fn brute_force(p: &RelabelProblem, n_labels: u32) -> i64 {
        let free: Vec<usize> = (0..p.spec.len()).filter(|&v| p.is_free(v)).collect();
        let mut labels: Vec<u32> = p.seed.clone();
        let mut best = i64::MAX;
        let total = (n_labels as u64).pow(free.len() as u32);
        for code in 0..total {
            let mut c = code;
            for &v in &free {
                labels[v] = (c % n_labels as u64) as u32 + 1;
                c /= n_labels as u64;
            }
            best = best.min(energy(p, &labels));
        }
        best
    }

    #[test]
    fn matches_brute_force_on_small_instances() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut tried = 0;
        while tried < 60 {
            let labels = if tried % 2 == 0 { 2 } else { 3 };
            let p = random_problem(&mut rng, labels, if labels == 2 { 14 } else { 9 });
            if !p.seed.iter().any(|&s| s != 0) {
                continue;
            }
            tried += 1;
            let out = alpha_expansion(&p, 10).unwrap();
            let e = energy(&p, &out.field.labels);
            let opt = brute_force(&p, labels);
            assert!(out.energy_history.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*out.energy_history.last().unwrap(), e);
            for v in 0..p.spec.len() {
                if p.seed[v] != 0 {
                    assert_eq!(out.field.labels[v], p.seed[v]);
                }
            }
            if labels == 2 {
                assert_eq!(e, opt);
            } else {
                assert!(opt <= e && e <= 2 * opt, "{opt} {e}");
            }
        }
    }
}
