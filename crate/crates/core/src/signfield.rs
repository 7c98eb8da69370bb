//! Local two-signed field: a winding-number-like sum restricted to a ball of
//! oriented points around each voxel center, evaluated only inside the r1 envelope.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{GridSpec, ScalarField};
use crate::geom::Vec3;
use crate::sampling::OrientedPointCloud;
use crate::spatial::SpatialHash;

pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SignField {
    pub spec: GridSpec,
    /// Side value per voxel; 0 outside omega1 and where no point was in range.
    pub w: Vec<f64>,
    pub inside_omega1: Vec<bool>,
    pub inside_omega2: Vec<bool>,
    /// Voxels inside omega1 whose neighborhood held no points.
    pub empty: Vec<bool>,
}

impl SignField {
    /// Attach the tighter envelope. Voxels outside omega1 are never inside omega2.
    pub fn with_omega2(mut self, omega2: Vec<bool>) -> Result<Self> {
        if omega2.len() != self.spec.len() {
            return Err(Error::SpecMismatch);
        }
        self.inside_omega2 = omega2
            .into_iter()
            .zip(&self.inside_omega1)
            .map(|(a, &b)| a && b)
            .collect();
        Ok(self)
    }

    pub fn omega1_count(&self) -> usize {
        self.inside_omega1.iter().filter(|&&b| b).count()
    }

    pub fn empty_count(&self) -> usize {
        self.empty.iter().filter(|&&b| b).count()
    }

    /// Sign class used by connected-component labeling: +1, -1, or 0 for voxels
    /// with no contributing points.
    pub fn sign_class(&self, idx: usize) -> i8 {
        if self.empty[idx] || self.w[idx] == 0.0 {
            0
        } else if self.w[idx] > 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Voxels whose center is strictly closer than `r` to the surface.
pub fn envelope_mask(field: &ScalarField, spec: &GridSpec, r: f64) -> Result<Vec<bool>> {
    if !(r > 0.0) {
        return Err(Error::InvalidConfig(format!("envelope radius must be positive, got {r}")));
    }
    Ok((0..spec.len())
        .into_par_iter()
        .map(|idx| field.eval(&spec.center_of(idx)) < r)
        .collect())
}

/// One summand of the discrete side field.
#[inline]
pub fn side_contribution(x: &Vec3, n: &Vec3, q: &Vec3, eps: f64) -> f64 {
    let d = x - q;
    let r = d.norm();
    d.dot(n) / (r * r * r + eps)
}

/// Brute-force side value at `q` over every cloud point within `radius`.
pub fn side_value(cloud: &OrientedPointCloud, q: &Vec3, radius: f64, eps: f64) -> f64 {
    cloud
        .points
        .iter()
        .zip(&cloud.normals)
        .filter(|(x, _)| (*x - q).norm() <= radius)
        .map(|(x, n)| side_contribution(x, n, q, eps))
        .sum()
}

pub fn local_two_signed_field(
    cloud: &OrientedPointCloud,
    spec: &GridSpec,
    omega1: &[bool],
    radius: f64,
    eps: f64,
) -> Result<SignField> {
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!("neighborhood radius must be positive, got {radius}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyInput("oriented point cloud"));
    }
    if omega1.len() != spec.len() {
        return Err(Error::SpecMismatch);
    }
    let hash = SpatialHash::new(&cloud.points, radius * 0.5);
    let values: Vec<(f64, bool)> = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            if !omega1[idx] {
                return (0.0, false);
            }
            let q = spec.center_of(idx);
            let mut sum = 0.0;
            let mut hits = 0usize;
            hash.for_each_within(&cloud.points, &q, radius, |i| {
                sum += side_contribution(&cloud.points[i], &cloud.normals[i], &q, eps);
                hits += 1;
            });
            if hits == 0 {
                (0.0, true)
            } else {
                (sum, false)
            }
        })
        .collect();
    let (w, empty): (Vec<f64>, Vec<bool>) = values.into_iter().unzip();
    Ok(SignField {
        spec: *spec,
        w,
        inside_omega1: omega1.to_vec(),
        inside_omega2: vec![false; spec.len()],
        empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::fixtures;
    use crate::geom::{v3, Aabb};

    fn single_point() -> OrientedPointCloud {
        OrientedPointCloud::new(vec![v3(0.0, 0.0, 0.0)], vec![v3(0.0, 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn single_point_formula_and_antisymmetry() {
        let c = single_point();
        let up = side_value(&c, &v3(0.0, 0.0, 0.01), 0.015, 1e-8);
        let expected = -0.01 / (0.01f64.powi(3) + 1e-8);
        // (x - q) . n with q above the point is negative
        assert_eq!(up, expected);
        let down = side_value(&c, &v3(0.0, 0.0, -0.01), 0.015, 1e-8);
        assert_eq!(down, -up);
    }

    #[test]
    fn envelope_is_a_shell_and_monotone() {
        let f = ScalarField::from(fixtures::sphere(0.4));
        let spec = GridSpec::cubic(32).unwrap();
        let m1 = envelope_mask(&f, &spec, 0.05).unwrap();
        let m2 = envelope_mask(&f, &spec, 0.01).unwrap();
        for idx in 0..spec.len() {
            let r = spec.center_of(idx).norm();
            assert_eq!(m1[idx], (r - 0.4).abs() < 0.05);
            assert!(!m2[idx] || m1[idx]);
        }
        assert!(envelope_mask(&f, &spec, 0.0).is_err());
    }

    #[test]
    fn empty_neighborhoods_are_flagged() {
        let spec = GridSpec::new([4, 4, 4], Aabb::cube(1.0)).unwrap();
        let sf = local_two_signed_field(&single_point(), &spec, &vec![true; spec.len()], 0.3, 1e-8).unwrap();
        assert_eq!(sf.empty_count(), spec.len());
        assert!(sf.w.iter().all(|&w| w == 0.0));
        assert!(local_two_signed_field(&OrientedPointCloud::default(), &spec, &vec![true; 64], 0.3, 1e-8).is_err());
    }

    #[test]
    fn omega2_is_clipped_to_omega1() {
        let spec = GridSpec::new([2, 1, 1], Aabb::cube(1.0)).unwrap();
        let sf = local_two_signed_field(&single_point(), &spec, &[true, false], 5.0, 1e-8)
            .unwrap()
            .with_omega2(vec![true, true])
            .unwrap();
        assert_eq!(sf.inside_omega2, vec![true, false]);
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        fn random_cloud(seed: u64) -> OrientedPointCloud {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut unit = || v3(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let points: Vec<Vec3> = (0..40).map(|_| unit() * 0.5).collect();
            let normals: Vec<Vec3> = (0..40).map(|_| (unit() + v3(0.0, 0.0, 2.0)).normalize()).collect();
            OrientedPointCloud::new(points, normals).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn flipping_normals_negates_w(seed in 0u64..10_000) {
                let cloud = random_cloud(seed);
                let spec = GridSpec::new([6, 6, 6], Aabb::cube(0.5)).unwrap();
                let all = vec![true; spec.len()];
                let a = local_two_signed_field(&cloud, &spec, &all, 0.4, 1e-8).unwrap();
                let b = local_two_signed_field(&cloud.flipped(), &spec, &all, 0.4, 1e-8).unwrap();
                for (x, y) in a.w.iter().zip(&b.w) {
                    prop_assert_eq!(*x, -*y);
                }
                prop_assert_eq!(a.empty, b.empty);
            }

            /// Rounding in `x - q` grows with the magnitude of each summand, so
            /// the bound is relative to the sum of absolute contributions.
            #[test]
            fn translation_leaves_w_unchanged(seed in 0u64..10_000, tx in -1.0f64..1.0, ty in -1.0f64..1.0, tz in -1.0f64..1.0) {
                let cloud = random_cloud(seed);
                let t = v3(tx, ty, tz);
                let spec = GridSpec::new([6, 6, 6], Aabb::cube(0.5)).unwrap();
                let moved_spec = GridSpec::new([6, 6, 6], Aabb::cube(0.5).translated(&t)).unwrap();
                let moved = OrientedPointCloud::new(
                    cloud.points.iter().map(|p| p + t).collect(),
                    cloud.normals.clone(),
                ).unwrap();
                let all = vec![true; spec.len()];
                let a = local_two_signed_field(&cloud, &spec, &all, 0.4, 1e-8).unwrap();
                let b = local_two_signed_field(&moved, &moved_spec, &all, 0.4, 1e-8).unwrap();
                for idx in 0..spec.len() {
                    let q = spec.center_of(idx);
                    let scale: f64 = cloud
                        .points
                        .iter()
                        .zip(&cloud.normals)
                        .filter(|(x, _)| (*x - q).norm() <= 0.4)
                        .map(|(x, n)| side_contribution(x, n, &q, 1e-8).abs())
                        .sum();
                    // membership of points sitting on the ball boundary may differ
                    let near_rim = cloud.points.iter().any(|x| ((x - q).norm() - 0.4).abs() < 1e-12);
                    if !near_rim {
                        prop_assert!((a.w[idx] - b.w[idx]).abs() <= 1e-12 * scale.max(1.0),
                            "voxel {} {} vs {}", idx, a.w[idx], b.w[idx]);
                    }
                }
            }
        }
    }
}
