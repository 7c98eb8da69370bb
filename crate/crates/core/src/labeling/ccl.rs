use std::collections::VecDeque;

use super::LabelField;
use crate::signfield::SignField;

/// Result of sign-based connected-component labeling.
#[derive(Debug, Clone)]
pub struct Components {
    pub field: LabelField,
    /// Sign class of each label (index 0 unused): +1, -1, or 0 for empty-neighborhood voxels.
    pub sign: Vec<i8>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sign.len() - 1
    }
}

/// Group omega1 voxels into 6-connected components of equal sign class. Labels
/// are assigned in scan order of each component's first voxel.
pub fn connected_components(sf: &SignField) -> Components {
    let spec = sf.spec;
    let mut labels = vec![0u32; spec.len()];
    let mut sign = vec![0i8];
    let mut queue = VecDeque::new();
    for start in 0..spec.len() {
        if !sf.inside_omega1[start] || labels[start] != 0 {
            continue;
        }
        let class = sf.sign_class(start);
        sign.push(class);
        let label = (sign.len() - 1) as u32;
        labels[start] = label;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for n in spec.neighbors6(v) {
                if labels[n] == 0 && sf.inside_omega1[n] && sf.sign_class(n) == class {
                    labels[n] = label;
                    queue.push_back(n);
                }
            }
        }
    }
    Components {
        field: LabelField::new(spec, labels),
        sign,
    }
}
