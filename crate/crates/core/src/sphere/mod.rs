//! Geodesic polygons on the unit sphere: clipping, areas, bounding caps and
//! exact integrals of height functions.
//!
//! Polygons are oriented counterclockwise as seen from outside the sphere and
//! every edge is a minor arc. The kernel is generic over [`Real`] so the same
//! code path yields derivatives with respect to rotation parameters.

pub mod arrangement;
pub mod chart;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{EctError, Result};
use crate::linalg::{Mat3, Vec3};
use crate::real::Real;

pub use arrangement::{build_arrangement, Arrangement, Cell};
pub use chart::integrate_height_chart;

/// Side classification tolerance for clipping.
pub const CLIP_EPS: f64 = 1e-10;
/// Consecutive vertices closer than this are merged.
const MERGE_EPS: f64 = 1e-12;

/// Great circle `{v : v·n = 0}` with a canonical unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreatCircle {
    normal: Vec3,
}

impl GreatCircle {
    /// Normalizes `n` and flips it so its first nonzero coordinate is positive.
    pub fn new(n: Vec3) -> Result<GreatCircle> {
        let len = n.norm();
        if !(len > 1e-300) || !len.is_finite() {
            return Err(EctError::Degenerate("great circle normal is zero".into()));
        }
        let mut u = n.scaled(1.0 / len);
        let lead = [u.x, u.y, u.z].into_iter().find(|c| *c != 0.0).unwrap_or(1.0);
        if lead < 0.0 {
            u = -u;
        }
        Ok(GreatCircle { normal: u })
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    /// True when the two circles coincide within `1 - |n_i·n_j| < 1e-10`.
    pub fn coincides(&self, other: &GreatCircle) -> bool {
        self.normal.dot(&other.normal).abs() > 1.0 - 1e-10
    }
}

/// Directions along which `x_i` and `x_j` have equal height.
pub fn bisector_circle(x_i: &Vec3, x_j: &Vec3) -> Result<GreatCircle> {
    let d = *x_i - *x_j;
    if d.norm() <= 1e-12 {
        return Err(EctError::Degenerate(format!(
            "bisector of coincident points {x_i:?} and {x_j:?}"
        )));
    }
    GreatCircle::new(d)
}

/// Geodesic polygon given by its vertex cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalPolygon<T = f64> {
    vertices: Vec<Vec3<T>>,
}

impl<T: Real> SphericalPolygon<T> {
    /// Wraps a vertex cycle that the caller has already validated.
    pub fn from_vertices_unchecked(vertices: Vec<Vec3<T>>) -> Self {
        SphericalPolygon { vertices }
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn lift(p: &SphericalPolygon<f64>) -> Self {
        SphericalPolygon {
            vertices: p.vertices.iter().map(|v| Vec3::lift(*v)).collect(),
        }
    }

    pub fn value(&self) -> SphericalPolygon<f64> {
        SphericalPolygon {
            vertices: self.vertices.iter().map(|v| v.value()).collect(),
        }
    }

    /// Image under a linear map; no orthogonality check.
    pub fn rotated(&self, r: &Mat3<T>) -> Self {
        SphericalPolygon {
            vertices: self.vertices.iter().map(|v| r.apply(v)).collect(),
        }
    }

    fn edges(&self) -> impl Iterator<Item = (&Vec3<T>, &Vec3<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (&self.vertices[k], &self.vertices[(k + 1) % n]))
    }

    /// `∫_P v dσ`, as half the arc-length-weighted sum of edge pole vectors.
    pub fn vector_area(&self) -> Vec3<T> {
        let mut acc = Vec3::zero();
        for (a, b) in self.edges() {
            let c = a.cross(b);
            let s = c.norm();
            if s.value() <= 0.0 {
                continue;
            }
            let theta = s.atan2(a.dot(b));
            acc = acc + c.scaled(theta / s);
        }
        acc.scaled(T::from_f64(0.5))
    }

    /// Unit vector inside the polygon used as fan apex and cap center.
    fn interior_direction(&self) -> Vec3<T> {
        let va = self.vector_area();
        if va.norm().value() > 1e-300 {
            va.normalized()
        } else {
            let s = self.vertices.iter().fold(Vec3::zero(), |acc, v| acc + *v);
            s.normalized()
        }
    }

    /// Area as a sum of signed triangle excesses fanned from an interior point.
    pub fn area(&self) -> T {
        if self.vertices.len() < 3 {
            return T::zero();
        }
        let c = self.interior_direction();
        let one = T::from_f64(1.0);
        let mut total = T::zero();
        for (a, b) in self.edges() {
            let num = c.dot(&a.cross(b));
            let den = one + c.dot(a) + a.dot(b) + b.dot(&c);
            total += num.atan2(den);
        }
        total.scale(2.0)
    }

    /// `∫_P (anchor·v) dσ` in closed form.
    pub fn integrate_height(&self, anchor: &Vec3<T>) -> T {
        anchor.dot(&self.vector_area())
    }
}

impl SphericalPolygon<f64> {
    /// Validated polygon: ≥ 3 unit vertices, consecutive vertices neither equal
    /// nor antipodal.
    pub fn new(vertices: Vec<Vec3>) -> Result<SphericalPolygon> {
        if vertices.len() < 3 {
            return Err(EctError::Degenerate(format!(
                "spherical polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        for (k, v) in vertices.iter().enumerate() {
            if (v.norm() - 1.0).abs() > 1e-10 {
                return Err(EctError::Argument(format!("polygon vertex {k} is not a unit vector")));
            }
        }
        let n = vertices.len();
        for k in 0..n {
            let (a, b) = (vertices[k], vertices[(k + 1) % n]);
            if a.max_abs_diff(&b) < 1e-10 || a.max_abs_diff(&(-b)) < 1e-10 {
                return Err(EctError::Degenerate(format!(
                    "polygon edge {k} joins equal or antipodal vertices"
                )));
            }
        }
        Ok(SphericalPolygon { vertices })
    }

    /// Triangle `a, b, c`, reordered to be counterclockwise from outside.
    pub fn triangle(a: Vec3, b: Vec3, c: Vec3) -> Result<SphericalPolygon> {
        let (a, b, c) = (a.normalized(), b.normalized(), c.normalized());
        if a.dot(&b.cross(&c)) >= 0.0 {
            SphericalPolygon::new(vec![a, b, c])
        } else {
            SphericalPolygon::new(vec![a, c, b])
        }
    }

    /// The closed hemisphere `{v : v·n ≥ 0}` as a quadrilateral on its rim.
    pub fn hemisphere(n: Vec3) -> SphericalPolygon {
        let n = n.normalized();
        let helper = if n.x.abs() < 0.9 { Vec3::E1 } else { Vec3::E2 };
        let a = helper.cross(&n).normalized();
        let b = n.cross(&a);
        SphericalPolygon {
            vertices: vec![a, b, -a, -b],
        }
    }

    /// Gauss–Bonnet area from interior angles. Reference implementation for tests.
    pub fn angle_sum_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut sum = 0.0;
        for k in 0..n {
            let a = self.vertices[(k + n - 1) % n];
            let b = self.vertices[k];
            let c = self.vertices[(k + 1) % n];
            sum += interior_angle(&a, &b, &c);
        }
        sum - (n as f64 - 2.0) * PI
    }

    /// Interior angles in vertex order.
    pub fn interior_angles(&self) -> Vec<f64> {
        let n = self.vertices.len();
        (0..n)
            .map(|k| {
                interior_angle(
                    &self.vertices[(k + n - 1) % n],
                    &self.vertices[k],
                    &self.vertices[(k + 1) % n],
                )
            })
            .collect()
    }

    /// True when `v` lies in the polygon (boundary included within `eps`).
    pub fn contains(&self, v: &Vec3, eps: f64) -> bool {
        self.edges().all(|(a, b)| a.cross(b).normalized().dot(v) >= -eps)
    }

    /// Smallest signed distance from `v` to an edge circle (negative outside).
    pub fn boundary_margin(&self, v: &Vec3) -> f64 {
        self.edges()
            .map(|(a, b)| a.cross(b).normalized().dot(v))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Interior angle at `b` of the path `a → b → c` with the interior on the left.
fn interior_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let t1 = *a - b.scaled(a.dot(b));
    let t2 = *c - b.scaled(c.dot(b));
    let ang = b.dot(&t2.cross(&t1)).atan2(t2.dot(&t1));
    if ang < 0.0 {
        ang + TAU
    } else {
        ang
    }
}

/// Area with a degeneracy check.
pub fn polygon_area(p: &SphericalPolygon) -> Result<f64> {
    let a = p.area();
    if !(a >= 1e-14) {
        return Err(EctError::Degenerate(format!("polygon area {a:e} is below 1e-14")));
    }
    Ok(a)
}

/// `∫_p (anchor·v) dσ` over the surface measure.
pub fn integrate_height(p: &SphericalPolygon, anchor: &Vec3) -> f64 {
    p.integrate_height(anchor)
}

/// Image of `p` under a proper rotation.
pub fn rotate_polygon(p: &SphericalPolygon, r: &Mat3) -> Result<SphericalPolygon> {
    check_rotation(r)?;
    Ok(p.rotated(r))
}

pub(crate) fn check_rotation(r: &Mat3) -> Result<()> {
    if r.orthogonality_defect() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
        return Err(EctError::Argument("matrix is not a proper rotation".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    In,
    On,
    Out,
}

/// Part of `p` with `v·n ≥ 0`: zero or one polygon.
pub fn clip_halfspace<T: Real>(p: &SphericalPolygon<T>, n: &Vec3<T>) -> Vec<SphericalPolygon<T>> {
    let verts = &p.vertices;
    let len = verts.len();
    if len < 3 {
        return Vec::new();
    }
    let n = n.normalized();
    let s: Vec<T> = verts.iter().map(|v| v.dot(&n)).collect();
    let side: Vec<Side> = s
        .iter()
        .map(|x| {
            let x = x.value();
            if x > CLIP_EPS {
                Side::In
            } else if x < -CLIP_EPS {
                Side::Out
            } else {
                Side::On
            }
        })
        .collect();
    if side.iter().all(|x| *x == Side::On) {
        // A hemisphere bounded by the clipping circle itself.
        return if p.vector_area().dot(&n).value() > 0.0 {
            vec![p.clone()]
        } else {
            Vec::new()
        };
    }
    if !side.contains(&Side::Out) {
        return vec![p.clone()];
    }
    let Some(start) = side.iter().position(|s| *s == Side::In) else {
        return Vec::new();
    };

    // Point of the arc a→b on the circle; s[a] and s[b] have opposite signs.
    let crossing = |a: usize, b: usize| -> Vec3<T> {
        let x = verts[b].scaled(s[a]) - verts[a].scaled(s[b]);
        if s[a].value() < 0.0 {
            (-x).normalized()
        } else {
            x.normalized()
        }
    };

    let mut out: Vec<Vec3<T>> = Vec::with_capacity(len + 4);
    let mut exit: Option<Vec3<T>> = None;
    for k in 0..len {
        let i = (start + k) % len;
        let j = (i + 1) % len;
        if side[i] != Side::Out {
            if let Some(e) = exit.take() {
                push_rim_arc(&mut out, &e, &verts[i], &n);
            }
            out.push(verts[i]);
            if side[j] == Side::Out {
                if side[i] == Side::In {
                    let x = crossing(i, j);
                    out.push(x);
                    exit = Some(x);
                } else {
                    exit = Some(verts[i]);
                }
            }
        } else if side[j] == Side::In {
            let x = crossing(i, j);
            if let Some(e) = exit.take() {
                push_rim_arc(&mut out, &e, &x, &n);
            }
            out.push(x);
        }
    }

    dedup_cycle(&mut out);
    if out.len() < 3 {
        return Vec::new();
    }
    vec![SphericalPolygon { vertices: out }]
}

/// Pushes the interior points needed to follow the circle `v·n = 0` from `e`
/// to `f` (exclusive) counterclockwise about `n`, keeping every piece below a
/// quarter turn.
fn push_rim_arc<T: Real>(out: &mut Vec<Vec3<T>>, e: &Vec3<T>, f: &Vec3<T>, n: &Vec3<T>) {
    let sin_phi = n.dot(&e.cross(f));
    let cos_phi = e.dot(f);
    let mut phi = sin_phi.atan2(cos_phi);
    if phi.value() < 0.0 {
        phi += T::from_f64(TAU);
    }
    let pv = phi.value();
    if pv > TAU - 1e-9 || pv <= FRAC_PI_2 + 1e-12 {
        return;
    }
    let pieces = (pv / FRAC_PI_2).ceil() as usize;
    let t = n.cross(e);
    for j in 1..pieces {
        let psi = phi.scale(j as f64 / pieces as f64);
        out.push(e.scaled(psi.cos()) + t.scaled(psi.sin()));
    }
}

fn dedup_cycle<T: Real>(v: &mut Vec<Vec3<T>>) {
    let close = |a: &Vec3<T>, b: &Vec3<T>| a.value().max_abs_diff(&b.value()) < MERGE_EPS;
    v.dedup_by(|b, a| close(a, b));
    while v.len() > 1 && close(&v[0], &v[v.len() - 1]) {
        v.pop();
    }
}

/// `p ∩ q` for convex `q`, by clipping `p` against every edge circle of `q`.
pub fn intersect_convex<T: Real>(
    p: &SphericalPolygon<T>,
    q: &SphericalPolygon<T>,
) -> Vec<SphericalPolygon<T>> {
    let mut current = p.clone();
    for (a, b) in q.edges() {
        let n = a.cross(b);
        if n.norm().value() <= 1e-300 {
            continue;
        }
        match clip_halfspace(&current, &n).pop() {
            Some(next) => current = next,
            None => return Vec::new(),
        }
    }
    vec![current]
}

/// Spherical cap `{v : angle(v, center) ≤ radius}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cap {
    pub center: Vec3,
    pub radius: f64,
}

impl Cap {
    /// Caps that fail this test certify disjoint polygons.
    pub fn may_intersect(&self, other: &Cap, margin: f64) -> bool {
        if self.radius >= PI || other.radius >= PI {
            return true;
        }
        self.center.angle_to(&other.center) <= self.radius + other.radius + margin
    }

    pub fn rotated(&self, r: &Mat3) -> Cap {
        Cap {
            center: r.apply(&self.center),
            radius: self.radius,
        }
    }
}

/// Cap around the polygon's vector-area direction containing all of it.
///
/// A radius above a quarter turn is widened to the whole sphere, since only
/// caps within a hemisphere are geodesically convex.
pub fn bounding_cap(p: &SphericalPolygon) -> Cap {
    let center = p.interior_direction();
    let radius = p
        .vertices
        .iter()
        .map(|v| center.angle_to(v))
        .fold(0.0, f64::max);
    let radius = if radius > FRAC_PI_2 + 1e-12 { PI } else { radius };
    Cap { center, radius }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn octant() -> SphericalPolygon {
        SphericalPolygon::new(vec![Vec3::E1, Vec3::E2, Vec3::E3]).unwrap()
    }

    #[test]
    fn bisector_examples() {
        let c = bisector_circle(&Vec3::E3, &(-Vec3::E3)).unwrap();
        assert_eq!(c.normal(), Vec3::E3);
        let c = bisector_circle(&Vec3::E1, &Vec3::E2).unwrap();
        let s = 0.5f64.sqrt();
        assert!(c.normal().max_abs_diff(&Vec3::new(s, -s, 0.0)) < 1e-15);
        assert!(bisector_circle(&Vec3::E1, &Vec3::E1).is_err());
        let flipped = GreatCircle::new(Vec3::new(-1.0, 1.0, 0.0)).unwrap();
        assert!(flipped.normal().x > 0.0 && flipped.coincides(&c));
    }

    #[test]
    fn areas_of_standard_polygons() {
        assert_relative_eq!(octant().area(), FRAC_PI_2, epsilon = 1e-14);
        assert_relative_eq!(octant().angle_sum_area(), FRAC_PI_2, epsilon = 1e-14);
        for a in octant().interior_angles() {
            assert_relative_eq!(a, FRAC_PI_2, epsilon = 1e-14);
        }
        let h = SphericalPolygon::hemisphere(Vec3::new(0.3, -0.2, 0.5));
        assert_relative_eq!(h.area(), TAU, epsilon = 1e-13);
        let va = h.vector_area();
        assert!(va.max_abs_diff(&Vec3::new(0.3, -0.2, 0.5).normalized().scaled(PI)) < 1e-13);
    }

    #[test]
    fn lune_area_is_twice_dihedral_angle() {
        let theta = FRAC_PI_2;
        let lune = SphericalPolygon::new(vec![
            Vec3::E3,
            Vec3::E1,
            -Vec3::E3,
            Vec3::new(theta.cos(), theta.sin(), 0.0),
        ])
        .unwrap();
        assert_relative_eq!(lune.area(), 2.0 * theta, epsilon = 1e-14);
        let theta = 0.7;
        let lune = SphericalPolygon::new(vec![
            Vec3::E3,
            Vec3::E1,
            -Vec3::E3,
            Vec3::new(theta.cos(), theta.sin(), 0.0),
        ])
        .unwrap();
        assert_relative_eq!(lune.area(), 2.0 * theta, epsilon = 1e-14);
    }

    #[test]
    fn tiny_triangle_is_nearly_flat() {
        let e = 1e-4;
        let t = SphericalPolygon::triangle(
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, e, 0.0),
            Vec3::new(1.0, 0.0, e),
        )
        .unwrap();
        let flat = 0.5 * e * e;
        assert!((t.area() - flat).abs() < 0.01 * flat);
        assert!(bounding_cap(&t).radius < 1e-3);
        assert!(polygon_area(&t).is_ok());
    }

    #[test]
    fn clip_examples() {
        let o = octant();
        let kept = clip_halfspace(&o, &Vec3::E3);
        assert_eq!(kept, vec![o.clone()]);
        assert!(clip_halfspace(&o, &(-Vec3::E3)).is_empty());

        let band = SphericalPolygon::new(vec![
            Vec3::new(1.0, -0.2, -0.3).normalized(),
            Vec3::new(1.0, 0.2, -0.3).normalized(),
            Vec3::new(1.0, 0.2, 0.3).normalized(),
            Vec3::new(1.0, -0.2, 0.3).normalized(),
        ])
        .unwrap();
        let upper = clip_halfspace(&band, &Vec3::E3);
        assert_relative_eq!(upper[0].area(), band.area() / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn clipping_a_hemisphere_gives_a_lune() {
        let h = SphericalPolygon::hemisphere(Vec3::E3);
        let n = Vec3::new(1.0, 0.0, 0.4).normalized();
        let lune = clip_halfspace(&h, &n);
        let rest = clip_halfspace(&h, &(-n));
        let a = lune[0].area();
        assert_relative_eq!(a + rest[0].area(), TAU, epsilon = 1e-12);
        let dihedral = PI - n.angle_to(&Vec3::E3);
        assert_relative_eq!(a, 2.0 * dihedral, epsilon = 1e-12);
        assert_relative_eq!(lune[0].angle_sum_area(), a, epsilon = 1e-12);
    }

    #[test]
    fn intersect_examples() {
        let o = octant();
        assert_relative_eq!(intersect_convex(&o, &o)[0].area(), o.area(), epsilon = 1e-12);
        let anti = SphericalPolygon::triangle(-Vec3::E1, -Vec3::E2, -Vec3::E3).unwrap();
        assert!(intersect_convex(&o, &anti).is_empty());
        let h = SphericalPolygon::hemisphere(Vec3::new(1.0, 1.0, 1.0));
        assert_relative_eq!(intersect_convex(&o, &h)[0].area(), FRAC_PI_2, epsilon = 1e-12);
        let up = SphericalPolygon::hemisphere(Vec3::E3);
        let down = SphericalPolygon::hemisphere(-Vec3::E3);
        assert!(intersect_convex(&up, &down).is_empty());
        assert_relative_eq!(intersect_convex(&up, &up)[0].area(), TAU, epsilon = 1e-12);
    }

    #[test]
    fn height_integral_examples() {
        let o = octant();
        assert_relative_eq!(integrate_height(&o, &Vec3::E3), PI / 4.0, epsilon = 1e-14);
        assert_eq!(integrate_height(&o, &Vec3::zero()), 0.0);
        let band = SphericalPolygon::new(vec![
            Vec3::new(1.0, -0.2, -0.3).normalized(),
            Vec3::new(1.0, 0.2, -0.3).normalized(),
            Vec3::new(1.0, 0.2, 0.3).normalized(),
            Vec3::new(1.0, -0.2, 0.3).normalized(),
        ])
        .unwrap();
        assert!(integrate_height(&band, &Vec3::E3).abs() < 1e-15);
    }

    #[test]
    fn rotation_preserves_area_and_rejects_non_rotations() {
        let o = octant();
        let r = Mat3::rot_z(FRAC_PI_2);
        let ro = rotate_polygon(&o, &r).unwrap();
        assert!(ro.vertices()[0].max_abs_diff(&Vec3::E2) < 1e-15);
        assert_relative_eq!(ro.area(), FRAC_PI_2, epsilon = 1e-14);
        assert_eq!(rotate_polygon(&o, &Mat3::identity()).unwrap(), o);
        let mut bad = Mat3::identity();
        bad.m[0][0] = 2.0;
        assert!(rotate_polygon(&o, &bad).is_err());
    }

    #[test]
    fn octant_cap() {
        let cap = bounding_cap(&octant());
        let c = Vec3::new(1.0, 1.0, 1.0).normalized();
        assert!(cap.center.max_abs_diff(&c) < 1e-14);
        assert!(cap.radius >= c.angle_to(&Vec3::E1) - 1e-15);
        let far = bounding_cap(&SphericalPolygon::triangle(-Vec3::E1, -Vec3::E2, -Vec3::E3).unwrap());
        assert!(!cap.may_intersect(&far, 1e-9));
    }

    #[test]
    fn polygon_validation() {
        assert!(SphericalPolygon::new(vec![Vec3::E1, Vec3::E2]).is_err());
        assert!(SphericalPolygon::new(vec![Vec3::E1, -Vec3::E1, Vec3::E3]).is_err());
        assert!(SphericalPolygon::new(vec![Vec3::E1, Vec3::E2, Vec3::new(0.0, 0.0, 2.0)]).is_err());
    }
}
