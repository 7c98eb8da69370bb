use std::collections::BTreeMap;

use super::LabelField;
use crate::error::{Error, Result};

/// Face adjacencies between two labels, split by whether both voxels lie in omega2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairCounts {
    pub inside: u64,
    pub outside: u64,
}

impl PairCounts {
    fn add(&mut self, o: PairCounts) {
        self.inside += o.inside;
        self.outside += o.outside;
    }

    fn score(&self) -> f64 {
        self.outside as f64 / self.inside.max(1) as f64
    }

    pub fn should_merge(&self, ratio: f64) -> bool {
        self.outside as f64 > ratio * self.inside as f64
    }
}

/// Adjacency counts for every unordered pair `(a, b)`, `a < b`, of distinct
/// non-background labels.
pub fn adjacency_counts(lf: &LabelField, omega2: &[bool]) -> Result<BTreeMap<(u32, u32), PairCounts>> {
    let spec = lf.spec;
    if omega2.len() != spec.len() {
        return Err(Error::SpecMismatch);
    }
    let mut counts: BTreeMap<(u32, u32), PairCounts> = BTreeMap::new();
    for v in 0..spec.len() {
        let a = lf.labels[v];
        if a == 0 {
            continue;
        }
        for m in spec.forward_neighbors(v) {
            let b = lf.labels[m];
            if b == 0 || b == a {
                continue;
            }
            let c = counts.entry((a.min(b), a.max(b))).or_default();
            if omega2[v] && omega2[m] {
                c.inside += 1;
            } else {
                c.outside += 1;
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub field: LabelField,
    /// Label pairs merged, in the order they were applied (pre-compaction ids).
    pub merges: Vec<(u32, u32)>,
}

/// Greedily merge adjacent partitions whose shared boundary lies mostly between
/// the two envelopes, highest outside/inside ratio first, until no pair
/// qualifies. Labels are compacted afterwards.
pub fn merge_partitions(lf: &LabelField, omega2: &[bool], ratio: f64) -> Result<MergeOutcome> {
    if !(ratio > 0.0) {
        return Err(Error::InvalidConfig(format!("merge ratio must be positive, got {ratio}")));
    }
    let mut counts = adjacency_counts(lf, omega2)?;
    let max = lf.labels.iter().copied().max().unwrap_or(0) as usize;
    let mut parent: Vec<u32> = (0..=max as u32).collect();
    let mut merges = Vec::new();
    loop {
        let best = counts
            .iter()
            .filter(|(_, c)| c.should_merge(ratio))
            .max_by(|(ka, a), (kb, b)| a.score().total_cmp(&b.score()).then(kb.cmp(ka)));
        let Some((&(a, b), _)) = best else { break };
        merges.push((a, b));
        parent[b as usize] = a;
        // fold b's adjacencies into a
        let mut folded: BTreeMap<(u32, u32), PairCounts> = BTreeMap::new();
        for (&(x, y), &c) in &counts {
            let x = if x == b { a } else { x };
            let y = if y == b { a } else { y };
            if x != y {
                folded.entry((x.min(y), x.max(y))).or_default().add(c);
            }
        }
        counts = folded;
    }
    let find = |mut l: u32| {
        while parent[l as usize] != l {
            l = parent[l as usize];
        }
        l
    };
    let labels = lf.labels.iter().map(|&l| find(l)).collect();
    let mut field = LabelField::new(lf.spec, labels);
    field.compact();
    Ok(MergeOutcome { field, merges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;
    use crate::geom::Aabb;

    fn line(labels: Vec<u32>) -> LabelField {
        let spec = GridSpec::new([labels.len(), 1, 1], Aabb::cube(1.0)).unwrap();
        LabelField::new(spec, labels)
    }

    #[test]
    fn counts_split_by_envelope() {
        let lf = line(vec![1, 2, 2, 3, 0, 3]);
        let o2 = vec![true, true, false, false, true, true];
        let c = adjacency_counts(&lf, &o2).unwrap();
        assert_eq!(c[&(1, 2)], PairCounts { inside: 1, outside: 0 });
        assert_eq!(c[&(2, 3)], PairCounts { inside: 0, outside: 1 });
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn outside_boundary_merges() {
        let lf = line(vec![1, 1, 2, 2]);
        let out = merge_partitions(&lf, &[false; 4], 3.0).unwrap();
        assert_eq!(out.field.labels, vec![1; 4]);
        let kept = merge_partitions(&lf, &[true; 4], 3.0).unwrap();
        assert_eq!(kept.field.labels, vec![1, 1, 2, 2]);
    }

    #[test]
    fn single_label_is_unchanged() {
        let lf = line(vec![0, 5, 5, 0]);
        let out = merge_partitions(&lf, &[false; 4], 3.0).unwrap();
        assert_eq!(out.field.labels, vec![0, 1, 1, 0]);
        assert!(out.merges.is_empty());
    }

    #[test]
    fn fixed_point_of_merge_rule() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let spec = GridSpec::new([10, 10, 10], Aabb::cube(1.0)).unwrap();
        for _ in 0..20 {
            let labels = (0..spec.len()).map(|_| rng.random_range(0..5)).collect();
            let o2: Vec<bool> = (0..spec.len()).map(|_| rng.random_bool(0.6)).collect();
            let lf = LabelField::new(spec, labels);
            let out = merge_partitions(&lf, &o2, 3.0).unwrap();
            for c in adjacency_counts(&out.field, &o2).unwrap().values() {
                assert!(!c.should_merge(3.0));
            }
        }
    }
}
