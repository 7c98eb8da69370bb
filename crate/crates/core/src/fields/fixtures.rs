//! Analytic surfaces with exact unsigned distance, used as test and demo inputs.
//!
//! Every fixture is a union of simple primitives (spheres, disks, convex planar
//! polygons, planes). The distance is the minimum over primitives, and the
//! gradient is the unit vector from the closest surface point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{closest_on_segment, v3, Aabb, Vec3};

/// Names accepted by [`make_fixture`].
pub const FIXTURE_NAMES: &[&str] = &[
    "plane-disk",
    "t-junction",
    "triple-junction",
    "sphere",
    "open-box-7",
    "two-parallel-planes",
    "plane",
    "thin-pocket",
];

#[derive(Debug, Clone)]
pub struct ConvexPolygon {
    vertices: Vec<Vec3>,
    normal: Vec3,
}

impl ConvexPolygon {
    /// Planar convex polygon; vertices in order (either winding).
    pub fn new(vertices: Vec<Vec3>) -> Self {
        assert!(vertices.len() >= 3, "polygon needs at least 3 vertices");
        let mut n = Vec3::zeros();
        for i in 0..vertices.len() {
            let a = vertices[i];
            let b = vertices[(i + 1) % vertices.len()];
            n += a.cross(&b);
        }
        let normal = n.normalize();
        Self { vertices, normal }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    fn closest_point(&self, p: &Vec3) -> Vec3 {
        let o = self.vertices[0];
        let proj = p - self.normal * (p - o).dot(&self.normal);
        let m = self.vertices.len();
        let inside = (0..m).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % m];
            (b - a).cross(&(proj - a)).dot(&self.normal) >= 0.0
        });
        if inside {
            return proj;
        }
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for i in 0..m {
            let c = closest_on_segment(p, &self.vertices[i], &self.vertices[(i + 1) % m]);
            let d = (p - c).norm_squared();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    fn fan(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        (1..self.vertices.len() - 1).map(|i| [self.vertices[0], self.vertices[i], self.vertices[i + 1]])
    }

    fn area(&self) -> f64 {
        self.fan().map(|[a, b, c]| crate::geom::triangle_area(&a, &b, &c)).sum()
    }
}

#[derive(Debug, Clone)]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64 },
    Disk { center: Vec3, normal: Vec3, radius: f64 },
    Polygon(ConvexPolygon),
    Plane { point: Vec3, normal: Vec3 },
}

impl Primitive {
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        match self {
            Primitive::Sphere { center, radius } => {
                let d = p - center;
                let n = d.norm();
                if n == 0.0 {
                    center + v3(*radius, 0.0, 0.0)
                } else {
                    center + d * (*radius / n)
                }
            }
            Primitive::Disk { center, normal, radius } => {
                let d = p - center;
                let radial = d - normal * d.dot(normal);
                let r = radial.norm();
                if r <= *radius {
                    center + radial
                } else {
                    center + radial * (*radius / r)
                }
            }
            Primitive::Polygon(poly) => poly.closest_point(p),
            Primitive::Plane { point, normal } => p - normal * (p - point).dot(normal),
        }
    }

    pub fn area(&self) -> Option<f64> {
        match self {
            Primitive::Sphere { radius, .. } => Some(4.0 * std::f64::consts::PI * radius * radius),
            Primitive::Disk { radius, .. } => Some(std::f64::consts::PI * radius * radius),
            Primitive::Polygon(poly) => Some(poly.area()),
            Primitive::Plane { .. } => None,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec3 {
        match self {
            Primitive::Sphere { center, radius } => {
                let z: f64 = rng.random_range(-1.0..=1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s = (1.0 - z * z).max(0.0).sqrt();
                center + v3(s * phi.cos(), s * phi.sin(), z) * *radius
            }
            Primitive::Disk { center, normal, radius } => {
                let (u, w) = orthonormal_basis(normal);
                let r = radius * rng.random::<f64>().sqrt();
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                center + u * (r * phi.cos()) + w * (r * phi.sin())
            }
            Primitive::Polygon(poly) => {
                let tris: Vec<[Vec3; 3]> = poly.fan().collect();
                let areas: Vec<f64> = tris
                    .iter()
                    .map(|[a, b, c]| crate::geom::triangle_area(a, b, c))
                    .collect();
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random::<f64>() * total;
                let mut chosen = tris.len() - 1;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        chosen = i;
                        break;
                    }
                    pick -= a;
                }
                let [a, b, c] = tris[chosen];
                sample_triangle(&a, &b, &c, rng)
            }
            Primitive::Plane { .. } => unreachable!("unbounded primitives are not sampled"),
        }
    }
}

pub(crate) fn sample_triangle<R: Rng>(a: &Vec3, b: &Vec3, c: &Vec3, rng: &mut R) -> Vec3 {
    let mut u: f64 = rng.random();
    let mut v: f64 = rng.random();
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    a + (b - a) * u + (c - a) * v
}

fn orthonormal_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { v3(1.0, 0.0, 0.0) } else { v3(0.0, 1.0, 0.0) };
    let u = n.cross(&helper).normalize();
    let w = n.cross(&u);
    (u, w)
}

/// Closest-point ties closer than this are treated as medial.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Fixture {
    name: String,
    primitives: Vec<Primitive>,
    junctions: Vec<[Vec3; 2]>,
    bbox: Aabb,
}

impl Fixture {
    pub fn new(name: impl Into<String>, primitives: Vec<Primitive>) -> Self {
        Self {
            name: name.into(),
            primitives,
            junctions: Vec::new(),
            bbox: Aabb::cube(super::grid::DEFAULT_BBOX_HALF),
        }
    }

    pub fn with_junctions(mut self, junctions: Vec<[Vec3; 2]>) -> Self {
        self.junctions = junctions;
        self
    }

    pub fn with_bbox(mut self, bbox: Aabb) -> Self {
        self.bbox = bbox;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bbox(&self) -> Aabb {
        self.bbox
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    /// Segments along which three or more sheets of the surface meet.
    pub fn junctions(&self) -> &[[Vec3; 2]] {
        &self.junctions
    }

    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        let mut best = *p;
        let mut best_d = f64::INFINITY;
        for prim in &self.primitives {
            let c = prim.closest_point(p);
            let d = (p - c).norm_squared();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    pub fn eval(&self, p: &Vec3) -> f64 {
        self.primitives
            .iter()
            .map(|prim| (p - prim.closest_point(p)).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Exact gradient of the distance. On the surface it is zero; at medial points
    /// (several equally close primitives) the tied unit directions are averaged.
    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        let dists: Vec<(f64, Vec3)> = self
            .primitives
            .iter()
            .map(|prim| {
                let c = prim.closest_point(p);
                ((p - c).norm(), p - c)
            })
            .collect();
        let dmin = dists.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
        if dmin <= 0.0 {
            return Vec3::zeros();
        }
        let mut sum = Vec3::zeros();
        let mut n = 0usize;
        for (d, v) in &dists {
            if *d - dmin <= TIE_EPS {
                sum += v / *d;
                n += 1;
            }
        }
        sum / n as f64
    }

    /// `n` points distributed uniformly by area over the surface.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<Vec<Vec3>> {
        let mut areas = Vec::with_capacity(self.primitives.len());
        for prim in &self.primitives {
            areas.push(prim.area().ok_or_else(|| {
                Error::Degenerate(format!("fixture `{}` has unbounded area", self.name))
            })?);
        }
        let total: f64 = areas.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("zero surface area".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = areas.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    chosen = i;
                    break;
                }
                pick -= a;
            }
            out.push(self.primitives[chosen].sample(&mut rng));
        }
        Ok(out)
    }

    pub fn translated(&self, t: &Vec3) -> Fixture {
        let primitives = self
            .primitives
            .iter()
            .map(|p| match p {
                Primitive::Sphere { center, radius } => Primitive::Sphere {
                    center: center + t,
                    radius: *radius,
                },
                Primitive::Disk { center, normal, radius } => Primitive::Disk {
                    center: center + t,
                    normal: *normal,
                    radius: *radius,
                },
                Primitive::Polygon(poly) => {
                    Primitive::Polygon(ConvexPolygon::new(poly.vertices.iter().map(|v| v + t).collect()))
                }
                Primitive::Plane { point, normal } => Primitive::Plane {
                    point: point + t,
                    normal: *normal,
                },
            })
            .collect();
        Fixture {
            name: self.name.clone(),
            primitives,
            junctions: self.junctions.iter().map(|[a, b]| [a + t, b + t]).collect(),
            bbox: self.bbox.translated(t),
        }
    }
}

fn rect(corner: Vec3, u: Vec3, v: Vec3) -> Primitive {
    Primitive::Polygon(ConvexPolygon::new(vec![corner, corner + u, corner + u + v, corner + v]))
}

pub fn sphere(radius: f64) -> Fixture {
    Fixture::new(
        "sphere",
        vec![Primitive::Sphere {
            center: Vec3::zeros(),
            radius,
        }],
    )
}

pub fn plane() -> Fixture {
    Fixture::new(
        "plane",
        vec![Primitive::Plane {
            point: Vec3::zeros(),
            normal: v3(0.0, 0.0, 1.0),
        }],
    )
}

/// Disk of the given radius in the plane z = 0.
pub fn plane_disk(radius: f64) -> Fixture {
    Fixture::new(
        "plane-disk",
        vec![Primitive::Disk {
            center: Vec3::zeros(),
            normal: v3(0.0, 0.0, 1.0),
            radius,
        }],
    )
}

/// Vertical square plate in x = 0 plus a horizontal half-plate z = 0, x >= 0,
/// joined along the y-axis.
pub fn t_junction(half: f64) -> Fixture {
    let a = half;
    Fixture::new(
        "t-junction",
        vec![
            rect(v3(0.0, -a, -a), v3(0.0, 2.0 * a, 0.0), v3(0.0, 0.0, 2.0 * a)),
            rect(v3(0.0, -a, 0.0), v3(a, 0.0, 0.0), v3(0.0, 2.0 * a, 0.0)),
        ],
    )
    .with_junctions(vec![[v3(0.0, -a, 0.0), v3(0.0, a, 0.0)]])
}

/// Three half-planes at 120 degrees sharing the y-axis.
pub fn triple_junction(half: f64) -> Fixture {
    let a = half;
    let prims = [90.0f64, 210.0, 330.0]
        .iter()
        .map(|deg| {
            let t = deg.to_radians();
            let d = v3(t.cos(), 0.0, t.sin());
            rect(v3(0.0, -a, 0.0), d * a, v3(0.0, 2.0 * a, 0.0))
        })
        .collect();
    Fixture::new("triple-junction", prims).with_junctions(vec![[v3(0.0, -a, 0.0), v3(0.0, a, 0.0)]])
}

/// Two parallel squares at z = +-gap/2.
pub fn two_parallel_planes(half: f64, gap: f64) -> Fixture {
    let a = half;
    let h = gap / 2.0;
    Fixture::new(
        "two-parallel-planes",
        vec![
            rect(v3(-a, -a, -h), v3(2.0 * a, 0.0, 0.0), v3(0.0, 2.0 * a, 0.0)),
            rect(v3(-a, -a, h), v3(2.0 * a, 0.0, 0.0), v3(0.0, 2.0 * a, 0.0)),
        ],
    )
}

/// Closed cube of half-size `s` whose exterior is split into six face regions by
/// twelve fins of width `fin` running outward from the cube edges. Together with the
/// interior this gives seven regions.
pub fn open_box_7(s: f64, fin: f64) -> Fixture {
    let mut prims = Vec::new();
    // cube faces
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut corner = Vec3::zeros();
            corner[axis] = sign * s;
            corner[i] = -s;
            corner[j] = -s;
            let mut u = Vec3::zeros();
            u[i] = 2.0 * s;
            let mut v = Vec3::zeros();
            v[j] = 2.0 * s;
            prims.push(rect(corner, u, v));
        }
    }
    let mut junctions = Vec::new();
    let outer = s + fin;
    // fins: one per cube edge, lying in the bisector plane of the two faces
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        for si in [-1.0, 1.0] {
            for sj in [-1.0, 1.0] {
                let point = |t: f64, zk: f64| {
                    let mut p = Vec3::zeros();
                    p[i] = si * t;
                    p[j] = sj * t;
                    p[k] = zk;
                    p
                };
                prims.push(Primitive::Polygon(ConvexPolygon::new(vec![
                    point(s, -s),
                    point(outer, -outer),
                    point(outer, outer),
                    point(s, s),
                ])));
                junctions.push([point(s, -s), point(s, s)]);
            }
        }
    }
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let d = v3(sx, sy, sz);
                junctions.push([d * s, d * outer]);
            }
        }
    }
    Fixture::new("open-box-7", prims).with_junctions(junctions)
}

/// Disk of radius 0.3 in z = 0 plus a small closed sphere of radius `radius`
/// floating above it. At desk resolutions the sphere's interior is thinner than
/// the erosion depth in every direction.
pub fn thin_pocket(radius: f64) -> Fixture {
    Fixture::new(
        "thin-pocket",
        vec![
            Primitive::Disk {
                center: Vec3::zeros(),
                normal: v3(0.0, 0.0, 1.0),
                radius: 0.3,
            },
            Primitive::Sphere {
                center: v3(0.0, 0.0, 0.2),
                radius,
            },
        ],
    )
}

/// Build a named fixture. `size` overrides the fixture's main dimension
/// (sphere/disk radius, plate half-size, cube half-size, gap, pocket radius).
pub fn make_fixture(name: &str, size: Option<f64>) -> Result<Fixture> {
    if let Some(s) = size {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidConfig(format!("fixture size must be positive, got {s}")));
        }
    }
    Ok(match name {
        "sphere" => sphere(size.unwrap_or(0.4)),
        "plane-disk" => plane_disk(size.unwrap_or(0.4)),
        "t-junction" => t_junction(size.unwrap_or(0.4)),
        "triple-junction" => triple_junction(size.unwrap_or(0.4)),
        "two-parallel-planes" => two_parallel_planes(0.4, size.unwrap_or(0.06)),
        "open-box-7" => {
            let s = size.unwrap_or(0.25);
            open_box_7(s, 0.4 * s)
        }
        "plane" => plane(),
        "thin-pocket" => thin_pocket(size.unwrap_or(0.015)),
        other => return Err(Error::UnknownFixture(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_distances() {
        assert_eq!(plane().eval(&v3(0.1, 0.2, 0.3)), 0.3);
        assert_eq!(sphere(0.4).eval(&v3(0.4, 0.0, 0.0)), 0.0);
        assert!((sphere(0.4).eval(&Vec3::zeros()) - 0.4).abs() < 1e-15);
        assert!((plane_disk(0.4).eval(&v3(0.5, 0.0, 0.0)) - 0.1).abs() < 1e-15);
        let t = t_junction(0.4);
        for y in [-0.3, 0.0, 0.25] {
            assert_eq!(t.eval(&v3(0.0, y, 0.0)), 0.0);
        }
    }

    #[test]
    fn exact_gradients() {
        let g = plane().gradient(&v3(0.0, 0.0, 0.2));
        assert!((g - v3(0.0, 0.0, 1.0)).norm() < 1e-9);
        let g = two_parallel_planes(0.4, 0.06).gradient(&v3(0.0, 0.0, 0.0));
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn unknown_fixture_rejected() {
        assert!(matches!(make_fixture("torus", None), Err(Error::UnknownFixture(_))));
        for name in FIXTURE_NAMES {
            assert!(make_fixture(name, None).is_ok());
        }
    }

    #[test]
    fn open_box_has_six_faces_and_twelve_fins() {
        let f = make_fixture("open-box-7", None).unwrap();
        assert_eq!(f.primitives().len(), 18);
        assert_eq!(f.junctions().len(), 20);
        // fin corner rays meet the cube corners
        assert!(f.eval(&v3(0.3, 0.3, 0.3)) < 1e-12);
        assert!(f.eval(&v3(0.3, 0.3, 0.0)) < 1e-12);
    }

    #[test]
    fn surface_samples_lie_on_surface() {
        for name in ["sphere", "plane-disk", "t-junction", "open-box-7", "triple-junction"] {
            let f = make_fixture(name, None).unwrap();
            let pts = f.sample_surface(500, 3).unwrap();
            assert!(pts.iter().all(|p| f.eval(p) < 1e-12), "{name}");
        }
        assert!(plane().sample_surface(10, 0).is_err());
    }

    fn any_fixture() -> impl Strategy<Value = Fixture> {
        prop::sample::select(vec!["sphere", "plane-disk", "t-junction", "triple-junction", "open-box-7", "two-parallel-planes", "thin-pocket"])
            .prop_map(|n| make_fixture(n, None).unwrap())
    }

    fn point() -> impl Strategy<Value = Vec3> {
        (-0.6f64..0.6, -0.6f64..0.6, -0.6f64..0.6).prop_map(|(x, y, z)| v3(x, y, z))
    }

    proptest! {
        #[test]
        fn fixtures_are_one_lipschitz_and_nonnegative(f in any_fixture(), p in point(), q in point()) {
            let (a, b) = (f.eval(&p), f.eval(&q));
            prop_assert!(a >= 0.0 && b >= 0.0);
            prop_assert!((a - b).abs() <= (p - q).norm() + 1e-12);
        }
    }
}
