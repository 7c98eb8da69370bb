//! Multi-label marching cubes on the dual grid (cube corners at voxel centers).
//!
//! Each cube face is resolved on its own from its four corner labels into
//! segments separating label pairs, so neighboring cubes always agree. Faces
//! whose corners carry three or four labels with no equal diagonal get a face
//! vertex; checkerboards and single equal diagonals connect the diagonal label
//! (the smaller one for two-label checkerboards). Inside a cube the segments
//! form clusters: plain loops are fanned (or closed with a center vertex when
//! long), clusters through face vertices are closed with a center vertex.

use std::collections::HashMap;

use super::LabeledMesh;
use crate::error::{Error, Result};
use crate::geom::{v3, Vec3};
use crate::labeling::LabelField;
use crate::signfield::SignField;

const fn corner(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Local edges as (lower corner, upper corner, axis).
const EDGES: [(usize, usize, usize); 12] = {
    let mut out = [(0, 0, 0); 12];
    let mut n = 0;
    let mut axis = 0;
    while axis < 3 {
        let mut c = 0;
        while c < 8 {
            if c & (1 << axis) == 0 {
                out[n] = (c, c | (1 << axis), axis);
                n += 1;
            }
            c += 1;
        }
        axis += 1;
    }
    out
};

const fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mut e = 0;
    while e < 12 {
        if EDGES[e].0 == lo && EDGES[e].1 == hi {
            return e;
        }
        e += 1;
    }
    panic!("corners are not adjacent");
}

/// Faces as (normal axis, side); corners listed cyclically.
const FACES: [(usize, usize, [usize; 4]); 6] = {
    let mut out = [(0, 0, [0; 4]); 6];
    let mut n = 0;
    let mut axis = 0;
    while axis < 3 {
        let u = (axis + 1) % 3;
        let v = (axis + 2) % 3;
        let mut side = 0;
        while side < 2 {
            let base = side << axis;
            out[n] = (
                axis,
                side,
                [base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)],
            );
            n += 1;
            side += 1;
        }
        axis += 1;
    }
    out
};

/// Local edge index of side `i` (corner i to corner i+1) of each face.
const FACE_EDGES: [[usize; 4]; 6] = {
    let mut out = [[0; 4]; 6];
    let mut f = 0;
    while f < 6 {
        let c = FACES[f].2;
        let mut i = 0;
        while i < 4 {
            out[f][i] = edge_between(c[i], c[(i + 1) % 4]);
            i += 1;
        }
        f += 1;
    }
    out
};

/// Node of the per-cube segment graph: local edges 0..12, faces 12..18.
type Node = usize;
const FACE_NODE: usize = 12;

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: Node,
    b: Node,
    /// A crossed edge on the segment, used for the label pair and orientation.
    edge: usize,
}

/// Segments a single cube face contributes, given its cyclic corner labels.
/// Returns whether the face needs a face vertex.
fn face_segments(f: usize, labels: &[u32; 4], out: &mut Vec<Segment>) -> bool {
    let crossed: Vec<usize> = (0..4).filter(|&i| labels[i] != labels[(i + 1) % 4]).collect();
    let edge = |i: usize| FACE_EDGES[f][i];
    // sides i-1 and i meet at corner i
    let cut_corner = |i: usize, out: &mut Vec<Segment>| {
        let (p, q) = (edge((i + 3) % 4), edge(i));
        out.push(Segment { a: p, b: q, edge: p });
    };
    match crossed.len() {
        0 => false,
        2 => {
            let (p, q) = (edge(crossed[0]), edge(crossed[1]));
            out.push(Segment { a: p, b: q, edge: p });
            false
        }
        3 => {
            for &i in &crossed {
                out.push(Segment {
                    a: edge(i),
                    b: FACE_NODE + f,
                    edge: edge(i),
                });
            }
            true
        }
        _ => {
            let d02 = labels[0] == labels[2];
            let d13 = labels[1] == labels[3];
            if d02 && d13 {
                // two-label checkerboard: the smaller label stays connected
                let keep_even = labels[0] < labels[1];
                let isolated = if keep_even { [1, 3] } else { [0, 2] };
                isolated.iter().for_each(|&i| cut_corner(i, out));
                false
            } else if d02 {
                cut_corner(1, out);
                cut_corner(3, out);
                false
            } else if d13 {
                cut_corner(0, out);
                cut_corner(2, out);
                false
            } else {
                for i in 0..4 {
                    out.push(Segment {
                        a: edge(i),
                        b: FACE_NODE + f,
                        edge: edge(i),
                    });
                }
                true
            }
        }
    }
}

const KIND_EDGE: u64 = 0;
const KIND_FACE: u64 = 1 << 62;
const KIND_CENTER: u64 = 2 << 62;

struct Builder {
    mesh: LabeledMesh,
    ids: HashMap<u64, u32>,
}

impl Builder {
    fn vertex(&mut self, key: u64, pos: impl FnOnce() -> Vec3) -> u32 {
        *self.ids.entry(key).or_insert_with(|| {
            self.mesh.vertices.push(pos());
            (self.mesh.vertices.len() - 1) as u32
        })
    }
}

fn canonical_corner(c: usize) -> Vec3 {
    let [x, y, z] = corner(c);
    v3(x as f64, y as f64, z as f64)
}

fn canonical_node(n: Node) -> Vec3 {
    if n < FACE_NODE {
        let (c0, c1, _) = EDGES[n];
        (canonical_corner(c0) + canonical_corner(c1)) * 0.5
    } else {
        let c = FACES[n - FACE_NODE].2;
        c.iter().map(|&k| canonical_corner(k)).sum::<Vec3>() * 0.25
    }
}

/// Extract the interfaces between all pairs of non-background labels.
pub fn multi_label_mc(lf: &LabelField, sf: &SignField) -> Result<LabeledMesh> {
    if lf.spec != sf.spec {
        return Err(Error::SpecMismatch);
    }
    let spec = lf.spec;
    let [nx, ny, nz] = spec.dims;
    let mut b = Builder {
        mesh: LabeledMesh::default(),
        ids: HashMap::new(),
    };
    if nx < 2 || ny < 2 || nz < 2 {
        return Ok(b.mesh);
    }
    let mut segs = Vec::with_capacity(24);
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let vox: [usize; 8] = std::array::from_fn(|c| {
                    let [dx, dy, dz] = corner(c);
                    spec.index(i + dx, j + dy, k + dz)
                });
                let lab: [u32; 8] = vox.map(|v| lf.labels[v]);
                // faces need two distinct non-background labels
                let first = lab.iter().copied().find(|&l| l != 0);
                if first.is_none_or(|f| lab.iter().all(|&l| l == 0 || l == f)) {
                    continue;
                }
                process_cube(&mut b, sf, spec.index(i, j, k), &vox, &lab, &mut segs);
            }
        }
    }
    Ok(b.mesh)
}

fn process_cube(b: &mut Builder, sf: &SignField, cell: usize, vox: &[usize; 8], lab: &[u32; 8], segs: &mut Vec<Segment>) {
    let spec = sf.spec;
    // edge vertices
    let mut ev = [u32::MAX; 12];
    for (e, &(c0, c1, axis)) in EDGES.iter().enumerate() {
        if lab[c0] == lab[c1] {
            continue;
        }
        let (v0, v1) = (vox[c0], vox[c1]);
        ev[e] = b.vertex(KIND_EDGE | (v0 * 3 + axis) as u64, || {
            let (w0, w1) = (sf.w[v0], sf.w[v1]);
            let t = if !sf.empty[v0] && !sf.empty[v1] && w0 * w1 < 0.0 {
                (w0 / (w0 - w1)).clamp(0.1, 0.9)
            } else {
                0.5
            };
            let (p0, p1) = (spec.center_of(v0), spec.center_of(v1));
            p0 + (p1 - p0) * t
        });
    }
    let average = |edges: &mut dyn Iterator<Item = usize>, verts: &[Vec3]| {
        let (sum, n) = edges.fold((Vec3::zeros(), 0usize), |(s, n), e| (s + verts[ev[e] as usize], n + 1));
        sum / n as f64
    };

    // face segments and face vertices
    segs.clear();
    let mut fv = [u32::MAX; 6];
    for (f, &(axis, side, corners)) in FACES.iter().enumerate() {
        let labels = corners.map(|c| lab[c]);
        if face_segments(f, &labels, segs) {
            let base = vox[side << axis];
            let key = KIND_FACE | (base * 3 + axis) as u64;
            let pos = average(&mut FACE_EDGES[f].iter().copied().filter(|&e| ev[e] != u32::MAX), &b.mesh.vertices);
            fv[f] = b.vertex(key, || pos);
        }
    }
    let vid = |n: Node| if n < FACE_NODE { ev[n] } else { fv[n - FACE_NODE] };

    // clusters of connected segments
    let mut parent: [usize; 18] = std::array::from_fn(|i| i);
    fn find(p: &mut [usize; 18], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for s in segs.iter() {
        let (ra, rb) = (find(&mut parent, s.a), find(&mut parent, s.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut roots: Vec<usize> = segs.iter().map(|s| find(&mut parent, s.a)).collect();
    let mut order = roots.clone();
    order.sort_unstable();
    order.dedup();
    for r in roots.iter_mut() {
        *r = order.binary_search(r).unwrap();
    }

    for (ci, _) in order.iter().enumerate() {
        let members: Vec<Segment> = segs.iter().zip(&roots).filter(|(_, &r)| r == ci).map(|(s, _)| *s).collect();
        let has_face = members.iter().any(|s| s.b >= FACE_NODE);
        if !has_face && members.len() <= 4 {
            let ring = walk_loop(&members);
            for t in 1..ring.len() - 1 {
                let edge = ring[t];
                emit(b, lab, [ring[0], ring[t], ring[t + 1]], [vid(ring[0]), vid(ring[t]), vid(ring[t + 1])], None, edge);
            }
        } else {
            let mut nodes: Vec<Node> = members.iter().flat_map(|s| [s.a, s.b]).collect();
            nodes.sort_unstable();
            nodes.dedup();
            let canon = nodes.iter().map(|&n| canonical_node(n)).sum::<Vec3>() / nodes.len() as f64;
            let edges: Vec<usize> = nodes.iter().copied().filter(|&n| n < FACE_NODE).collect();
            let pos = average(&mut edges.iter().copied(), &b.mesh.vertices);
            let key = KIND_CENTER | (cell as u64 * 32 + ci as u64);
            let c = b.vertex(key, || pos);
            for s in &members {
                emit(b, lab, [s.a, s.b, usize::MAX], [vid(s.a), vid(s.b), c], Some(canon), s.edge);
            }
        }
    }
}

/// Order the nodes of a simple cycle of segments.
fn walk_loop(members: &[Segment]) -> Vec<Node> {
    let mut ring = vec![members[0].a, members[0].b];
    let mut used = vec![false; members.len()];
    used[0] = true;
    loop {
        let last = *ring.last().unwrap();
        let next = members
            .iter()
            .enumerate()
            .find(|(i, s)| !used[*i] && (s.a == last || s.b == last));
        let Some((i, s)) = next else { break };
        used[i] = true;
        let other = if s.a == last { s.b } else { s.a };
        if other == ring[0] {
            break;
        }
        ring.push(other);
    }
    ring
}

/// Add one triangle, wound so its normal points from the smaller label of
/// `edge` toward the larger. Canonical node positions decide the winding; a
/// node of `usize::MAX` stands for the cluster center at `center`.
fn emit(b: &mut Builder, lab: &[u32; 8], nodes: [Node; 3], mut ids: [u32; 3], center: Option<Vec3>, edge: usize) {
    let (c0, c1, _) = EDGES[edge];
    let (l0, l1) = (lab[c0], lab[c1]);
    let pair = (l0.min(l1), l0.max(l1));
    if pair.0 == 0 {
        return;
    }
    let mut d = canonical_corner(c1) - canonical_corner(c0);
    if l0 > l1 {
        d = -d;
    }
    let canon = nodes.map(|n| if n == usize::MAX { center.unwrap() } else { canonical_node(n) });
    let mut s = (canon[1] - canon[0]).cross(&(canon[2] - canon[0])).dot(&d);
    if s == 0.0 {
        let p = ids.map(|i| b.mesh.vertices[i as usize]);
        s = (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&d);
    }
    if s < 0.0 {
        ids.swap(1, 2);
    }
    b.mesh.faces.push(ids);
    b.mesh.face_labels.push(pair);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::edge_incidence_map;
    use crate::fields::GridSpec;
    use crate::geom::Aabb;

    fn single_cube(labels: [u32; 8], w: [f64; 8]) -> (LabelField, SignField) {
        let spec = GridSpec::new([2, 2, 2], Aabb::cube(1.0)).unwrap();
        let sf = SignField {
            spec,
            w: w.to_vec(),
            inside_omega1: vec![true; 8],
            inside_omega2: vec![true; 8],
            empty: vec![false; 8],
        };
        (LabelField::new(spec, labels.to_vec()), sf)
    }

    #[test]
    fn tables_are_consistent() {
        for f in 0..6 {
            for i in 0..4 {
                let (c0, c1, _) = EDGES[FACE_EDGES[f][i]];
                let c = FACES[f].2;
                assert!([c0, c1].contains(&c[i]) && [c0, c1].contains(&c[(i + 1) % 4]));
            }
        }
    }

    #[test]
    fn axis_split_is_one_quad_at_the_zero_crossing() {
        // z = 0 layer label 1, z = 1 layer label 2, w crosses a quarter of the way up
        let (lf, sf) = single_cube([1, 1, 1, 1, 2, 2, 2, 2], [-1.0, -1.0, -1.0, -1.0, 3.0, 3.0, 3.0, 3.0]);
        let m = multi_label_mc(&lf, &sf).unwrap();
        assert_eq!(m.faces.len(), 2);
        assert_eq!(m.vertices.len(), 4);
        assert!(m.face_labels.iter().all(|&p| p == (1, 2)));
        // voxel centers at z = -0.5 and 0.5
        for v in &m.vertices {
            assert!((v.z - (-0.25)).abs() < 1e-12);
        }
        for f in 0..2 {
            let [a, b, c] = m.triangle(f);
            assert!((b - a).cross(&(c - a)).z > 0.0);
        }
    }

    #[test]
    fn t_arrangement_has_a_triple_edge() {
        // bottom layer a; top layer split by x into b and c
        let (lf, sf) = single_cube([1, 1, 1, 1, 2, 3, 2, 3], [0.0; 8]);
        let m = multi_label_mc(&lf, &sf).unwrap();
        let inc = edge_incidence_map(&m);
        let triple: Vec<_> = inc.iter().filter(|(_, &c)| c == 3).collect();
        assert_eq!(triple.len(), 2);
        let mut pairs = m.face_labels.clone();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs, vec![(1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn background_faces_are_suppressed() {
        let (lf, sf) = single_cube([0, 4, 4, 4, 4, 4, 4, 4], [1.0; 8]);
        assert!(multi_label_mc(&lf, &sf).unwrap().is_empty());
    }

    #[test]
    fn vertices_stay_inside_their_cube() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let labels: [u32; 8] = std::array::from_fn(|_| rng.random_range(0..4));
            let w: [f64; 8] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let (lf, sf) = single_cube(labels, w);
            let m = multi_label_mc(&lf, &sf).unwrap();
            for v in &m.vertices {
                assert!(v.iter().all(|c| (-0.5..=0.5).contains(c)));
            }
            assert!(m.face_labels.iter().all(|&(a, b)| a != 0 && a < b));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        fn random_grid(seed: u64) -> (LabelField, SignField) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = GridSpec::new([3, 3, 3], Aabb::cube(1.0)).unwrap();
            let labels: Vec<u32> = (0..spec.len()).map(|_| rng.random_range(0..4)).collect();
            let sf = SignField {
                spec,
                w: (0..spec.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                inside_omega1: labels.iter().map(|&l| l != 0).collect(),
                inside_omega2: vec![true; spec.len()],
                empty: vec![false; spec.len()],
            };
            (LabelField::new(spec, labels), sf)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn faces_separate_labels_of_their_cube(seed in 0u64..100_000) {
                let (lf, sf) = random_grid(seed);
                let m = multi_label_mc(&lf, &sf).unwrap();
                prop_assert_eq!(&m, &multi_label_mc(&lf, &sf).unwrap());
                let spec = lf.spec;
                for f in 0..m.face_count() {
                    let tri = m.triangle(f);
                    let (a, b) = m.face_labels[f];
                    let found = (0..2).flat_map(|i| (0..2).flat_map(move |j| (0..2).map(move |k| [i, j, k]))).any(|[i, j, k]| {
                        let lo = spec.center(i, j, k);
                        let hi = spec.center(i + 1, j + 1, k + 1);
                        let inside = tri.iter().all(|p| (0..3).all(|ax| p[ax] >= lo[ax] - 1e-9 && p[ax] <= hi[ax] + 1e-9));
                        let corner: Vec<u32> = (0..8)
                            .map(|c| lf.labels[spec.index(i + (c & 1), j + ((c >> 1) & 1), k + (c >> 2))])
                            .collect();
                        inside && corner.contains(&a) && corner.contains(&b)
                    });
                    prop_assert!(found, "face {} labels {:?}", f, (a, b));
                }
            }
        }
    }
}
