//! From the local two-signed field to a global multi-labeled partition of the
//! r1 envelope: connected components, erosion, seed splitting, alpha-expansion
//! relabeling and envelope-ratio merging.

mod alpha;
mod ccl;
mod erosion;
pub mod maxflow;
mod merge;

pub use alpha::{alpha_expansion, energy, AlphaOutcome, RelabelProblem, NO_ORIGIN};
pub use ccl::{connected_components, Components};
pub use erosion::{erode, split_remnants, Erosion, Seeds};
pub use merge::{adjacency_counts, merge_partitions, MergeOutcome, PairCounts};

use std::collections::BTreeSet;

use crate::error::Result;
use crate::fields::GridSpec;
use crate::signfield::SignField;

/// Per-voxel partition labels; 0 is the background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    pub spec: GridSpec,
    pub labels: Vec<u32>,
}

impl LabelField {
    pub fn new(spec: GridSpec, labels: Vec<u32>) -> Self {
        assert_eq!(spec.len(), labels.len(), "label count must match grid");
        Self { spec, labels }
    }

    pub fn background(spec: GridSpec) -> Self {
        Self::new(spec, vec![0; spec.len()])
    }

    /// Distinct non-background labels.
    pub fn label_set(&self) -> BTreeSet<u32> {
        self.labels.iter().copied().filter(|&l| l != 0).collect()
    }

    pub fn label_count(&self) -> usize {
        self.label_set().len()
    }

    /// Renumber labels 1..n in order of first appearance in scan order.
    pub fn compact(&mut self) {
        let max = self.labels.iter().copied().max().unwrap_or(0) as usize;
        let mut map = vec![0u32; max + 1];
        let mut next = 0u32;
        for l in self.labels.iter_mut() {
            if *l == 0 {
                continue;
            }
            let m = &mut map[*l as usize];
            if *m == 0 {
                next += 1;
                *m = next;
            }
            *l = *m;
        }
    }
}

/// Summary of the labeling stage.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct LabelingReport {
    pub components: usize,
    pub seed_labels: usize,
    /// Sign-consistent components whose every voxel was removed by erosion.
    pub lost_partitions: usize,
    pub unreachable_free_voxels: usize,
    pub relabeled_partitions: usize,
    pub final_partitions: usize,
    pub alpha_energy: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelingParams {
    pub erosion_iters: usize,
    pub merge_ratio: f64,
    pub max_sweeps: usize,
}

impl Default for LabelingParams {
    fn default() -> Self {
        Self {
            erosion_iters: 2,
            merge_ratio: 3.0,
            max_sweeps: 10,
        }
    }
}

/// Full labeling stage: sign components, erosion, seed splitting, relabeling of
/// eroded voxels and envelope-ratio merging. Fails with `Degenerate` when erosion
/// leaves no seed at all.
pub fn label_partitions(sf: &SignField, params: &LabelingParams) -> Result<(LabelField, LabelingReport)> {
    let comps = connected_components(sf);
    let ero = erode(&comps.field, params.erosion_iters);
    // voxels without a meaningful sign never seed a partition
    let remnant: Vec<bool> = ero
        .remnant
        .iter()
        .zip(&comps.field.labels)
        .map(|(&r, &l)| r && comps.sign[l as usize] != 0)
        .collect();
    let seeds = split_remnants(&comps.field, &remnant);
    let lost_partitions = (1..=comps.count())
        .filter(|&l| comps.sign[l] != 0 && seeds.origin_sets[l].is_empty())
        .count();
    if lost_partitions > 0 {
        log::warn!("{lost_partitions} partition(s) lost to erosion");
    }
    let problem = RelabelProblem {
        spec: sf.spec,
        active: sf.inside_omega1.clone(),
        seed: seeds.labels.clone(),
        origin: comps
            .field
            .labels
            .iter()
            .map(|&l| if l == 0 { NO_ORIGIN } else { l })
            .collect(),
        allowed_sets: seeds.origin_sets.clone(),
    };
    let relabeled = alpha_expansion(&problem, params.max_sweeps)?;
    let merged = merge_partitions(&relabeled.field, &sf.inside_omega2, params.merge_ratio)?;
    let report = LabelingReport {
        components: comps.count(),
        seed_labels: seeds.count,
        lost_partitions,
        unreachable_free_voxels: relabeled.unreachable,
        relabeled_partitions: relabeled.field.label_count(),
        final_partitions: merged.field.label_count(),
        alpha_energy: relabeled.energy_history,
    };
    Ok((merged.field, report))
}
