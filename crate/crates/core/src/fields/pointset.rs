use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};

/// Unsigned distance to the nearest point of a point cloud.
pub struct PointSetField {
    points: Vec<Vec3>,
    tree: ImmutableKdTree<f64, 3>,
    bbox: Aabb,
}

impl std::fmt::Debug for PointSetField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PointSetField")
            .field("points", &self.points.len())
            .field("bbox", &self.bbox)
            .finish()
    }
}

impl PointSetField {
    pub fn new(points: Vec<Vec3>, bbox: Aabb) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("point-set field needs at least one point"));
        }
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = ImmutableKdTree::new_from_slice(&raw)
            .map_err(|e| Error::Degenerate(format!("kd-tree construction failed: {e:?}")))?;
        Ok(Self { points, tree, bbox })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn bbox(&self) -> Aabb {
        self.bbox
    }

    pub fn eval(&self, p: &Vec3) -> f64 {
        let hit = self
            .tree
            .query(&[p.x, p.y, p.z])
            .nearest_one::<SquaredEuclidean<f64>>()
            .execute();
        hit.distance.sqrt()
    }
}
