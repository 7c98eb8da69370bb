use std::collections::VecDeque;

use super::LabelField;

/// Voxels peeled off each partition (`eroded`) and the survivors (`remnant`).
#[derive(Debug, Clone, PartialEq)]
pub struct Erosion {
    pub eroded: Vec<bool>,
    pub remnant: Vec<bool>,
}

/// Peel `iterations` layers off every partition. A voxel is peeled in round 1 when
/// one of its 6-neighbors carries another label, the background, or lies outside
/// the grid; in round r when it touches a voxel peeled in round r-1.
pub fn erode(lf: &LabelField, iterations: usize) -> Erosion {
    let spec = lf.spec;
    let n = spec.len();
    let mut depth = vec![0u32; n];
    let mut queue = VecDeque::new();
    for v in 0..n {
        let l = lf.labels[v];
        if l == 0 {
            continue;
        }
        let boundary = spec.on_grid_boundary(v) || spec.neighbors6(v).any(|m| lf.labels[m] != l);
        if boundary {
            depth[v] = 1;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        if depth[v] as usize >= iterations {
            continue;
        }
        for m in spec.neighbors6(v) {
            if depth[m] == 0 && lf.labels[m] == lf.labels[v] {
                depth[m] = depth[v] + 1;
                queue.push_back(m);
            }
        }
    }
    let eroded: Vec<bool> = (0..n)
        .map(|v| lf.labels[v] != 0 && depth[v] != 0 && depth[v] as usize <= iterations)
        .collect();
    let remnant = (0..n).map(|v| lf.labels[v] != 0 && !eroded[v]).collect();
    Erosion { eroded, remnant }
}

/// Fresh labels for the connected pieces of every partition's remnant.
#[derive(Debug, Clone, PartialEq)]
pub struct Seeds {
    /// Seed label per voxel, 0 where the voxel is not a seed.
    pub labels: Vec<u32>,
    /// For each original partition (indexed by its label), the seed labels its
    /// remnant split into. Empty when the partition eroded away.
    pub origin_sets: Vec<Vec<u32>>,
    pub count: usize,
}

/// Give each 6-connected component of each partition's remnant a new label.
/// Voxels with `remnant[v] == false` never become seeds.
pub fn split_remnants(lf: &LabelField, remnant: &[bool]) -> Seeds {
    let spec = lf.spec;
    let max_label = lf.labels.iter().copied().max().unwrap_or(0) as usize;
    let mut origin_sets = vec![Vec::new(); max_label + 1];
    let mut labels = vec![0u32; spec.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..spec.len() {
        if !remnant[start] || labels[start] != 0 || lf.labels[start] == 0 {
            continue;
        }
        next += 1;
        let origin = lf.labels[start];
        origin_sets[origin as usize].push(next);
        labels[start] = next;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for m in spec.neighbors6(v) {
                if remnant[m] && labels[m] == 0 && lf.labels[m] == origin {
                    labels[m] = next;
                    queue.push_back(m);
                }
            }
        }
    }
    Seeds {
        labels,
        origin_sets,
        count: next as usize,
    }
}
