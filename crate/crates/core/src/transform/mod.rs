//! Exact ECT representations.
//!
//! A 3D mesh's transform is a finite sum of terms `g · 1_P(v) · 1[h ≥ x·v]`
//! with an integer gain `g`, an anchor vertex `x` and a convex spherical
//! polygon `P`. Each vertex contributes the cells of the arrangement cut by
//! the bisector circles of its star, weighted by the jump of the Euler curve
//! at that vertex.

pub mod planar;

use rayon::prelude::*;

use crate::error::{EctError, Result};
use crate::linalg::{Mat3, Vec3};
use crate::mesh::{Mesh, Star};
use crate::sphere::arrangement::dedup_circles;
use crate::sphere::{
    bisector_circle, bounding_cap, build_arrangement, check_rotation, clip_halfspace, Cap,
    GreatCircle, SphericalPolygon,
};

/// Circle used to split full-sphere supports into two hemispheres.
pub const DEFAULT_SPLIT_NORMAL: Vec3 = Vec3::E3;

/// Height tolerance below which two vertices are considered tied.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub gain: i64,
    pub anchor: Vec3,
    pub support: SphericalPolygon,
    pub cap: Cap,
}

impl Term {
    pub fn new(gain: i64, anchor: Vec3, support: SphericalPolygon) -> Term {
        let cap = bounding_cap(&support);
        Term {
            gain,
            anchor,
            support,
            cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtoTransform {
    pub dimension: usize,
    pub terms: Vec<Term>,
    /// Label of the source mesh.
    pub id: String,
}

impl ProtoTransform {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Merge equal-gain cells whose union is again a convex cell.
    pub merge: bool,
}

/// Jump of the Euler curve at the star's center given which link vertices
/// lie strictly below it.
fn gain_with(star: &Star, is_below: impl Fn(usize) -> bool) -> i64 {
    let c = star.center;
    let lower = |s: &[usize]| s.iter().all(|&v| v == c || is_below(v));
    let mut g = 1;
    for e in &star.edges {
        if lower(e) {
            g -= 1;
        }
    }
    for t in &star.triangles {
        if lower(t) {
            g += 1;
        }
    }
    g
}

/// Gain of the star's center in direction `v`.
pub fn local_gain(star: &Star, positions: &[Vec3], v: &Vec3) -> Result<i64> {
    let hc = positions[star.center].dot(v);
    for &j in &star.link {
        if (positions[j].dot(v) - hc).abs() <= TIE_EPS {
            return Err(EctError::Degenerate(format!(
                "vertices {} and {j} tie in height along {v:?}",
                star.center
            )));
        }
    }
    Ok(gain_with(star, |j| positions[j].dot(v) < hc))
}

/// Side vector with `0` for circles that do not constrain the region.
type SignKey = Vec<i8>;

/// Convex supports of nonzero gain for one vertex.
pub fn vertex_regions(m: &Mesh, i: usize) -> Result<Vec<(SphericalPolygon, i64)>> {
    let star = m.star(i)?;
    vertex_regions_of_star(m.vertices(), &star, BuildOptions::default())
}

fn vertex_regions_of_star(
    positions: &[Vec3],
    star: &Star,
    opts: BuildOptions,
) -> Result<Vec<(SphericalPolygon, i64)>> {
    let center = positions[star.center];
    if star.link.is_empty() {
        let g = gain_with(star, |_| false);
        return Ok(full_sphere(g));
    }

    let mut raw = Vec::with_capacity(star.link.len());
    for &j in &star.link {
        raw.push(bisector_circle(&center, &positions[j]).map_err(|e| {
            EctError::Degenerate(format!("vertex {}: {e}", star.center))
        })?);
    }
    let circles = dedup_circles(&raw);
    // For each link vertex: its circle and the side on which it lies below
    // the center.
    let mut link_side = vec![(0usize, 0i8); positions.len()];
    for (&j, rc) in star.link.iter().zip(&raw) {
        let (c, circle) = circles
            .iter()
            .enumerate()
            .find(|(_, k)| k.coincides(rc))
            .expect("deduplicated list contains every circle");
        let o = if circle.normal().dot(&(center - positions[j])) > 0.0 { 1 } else { -1 };
        link_side[j] = (c, o);
    }

    let arrangement = build_arrangement(&circles);
    let mut regions: Vec<(SignKey, SphericalPolygon, i64)> = Vec::new();
    for cell in arrangement.cells() {
        let g = gain_with(star, |j| {
            let (c, o) = link_side[j];
            o * cell.signs[c] > 0
        });
        if g != 0 {
            regions.push((cell.signs.clone(), cell.polygon.clone(), g));
        }
    }

    if !opts.merge {
        return Ok(regions.into_iter().map(|(_, p, g)| (p, g)).collect());
    }
    let keys: Vec<(SignKey, i64)> = regions.into_iter().map(|(k, _, g)| (k, g)).collect();
    let merged = merge_keys(keys);
    let mut out = Vec::new();
    for (key, g) in merged {
        for p in region_from_key(&circles, &key) {
            out.push((p, g));
        }
    }
    Ok(out)
}

fn full_sphere(gain: i64) -> Vec<(SphericalPolygon, i64)> {
    if gain == 0 {
        return Vec::new();
    }
    vec![
        (SphericalPolygon::hemisphere(DEFAULT_SPLIT_NORMAL), gain),
        (SphericalPolygon::hemisphere(-DEFAULT_SPLIT_NORMAL), gain),
    ]
}

/// Repeatedly fuses pairs of equal-gain regions that differ only by the side
/// of a single circle.
fn merge_keys(mut keys: Vec<(SignKey, i64)>) -> Vec<(SignKey, i64)> {
    loop {
        let mut fused = None;
        'search: for a in 0..keys.len() {
            for b in (a + 1)..keys.len() {
                if keys[a].1 != keys[b].1 {
                    continue;
                }
                let (ka, kb) = (&keys[a].0, &keys[b].0);
                let mut diff = ka.iter().zip(kb).enumerate().filter(|(_, (x, y))| x != y);
                if let (Some((c, (x, y))), None) = (diff.next(), diff.next()) {
                    if *x != 0 && *y != 0 {
                        fused = Some((a, b, c));
                        break 'search;
                    }
                }
            }
        }
        let Some((a, b, c)) = fused else {
            return keys;
        };
        let (mut key, g) = keys.remove(b);
        key[c] = 0;
        keys[a] = (key, g);
    }
}

/// Convex region cut out by the specified sides of `key`.
fn region_from_key(circles: &[GreatCircle], key: &[i8]) -> Vec<SphericalPolygon> {
    let constraints: Vec<Vec3> = circles
        .iter()
        .zip(key)
        .filter(|(_, &s)| s != 0)
        .map(|(c, &s)| c.normal().scaled(s as f64))
        .collect();
    let Some((first, rest)) = constraints.split_first() else {
        return full_sphere(1).into_iter().map(|(p, _)| p).collect();
    };
    let mut poly = SphericalPolygon::hemisphere(*first);
    for n in rest {
        match clip_halfspace(&poly, n).pop() {
            Some(p) => poly = p,
            None => return Vec::new(),
        }
    }
    vec![poly]
}

/// Proto-transform of a normalized 3D mesh with default options.
pub fn build_proto_transform(m: &Mesh) -> Result<ProtoTransform> {
    build_proto_transform_with(m, BuildOptions::default())
}

pub fn build_proto_transform_with(m: &Mesh, opts: BuildOptions) -> Result<ProtoTransform> {
    if m.dim() != 3 {
        return Err(EctError::Argument(format!(
            "expected a 3D mesh, got dimension {}",
            m.dim()
        )));
    }
    let r = m.max_vertex_norm();
    if r > 1.0 + 1e-12 {
        return Err(EctError::Argument(format!(
            "mesh is not inside the unit ball (max vertex norm {r})"
        )));
    }
    let stars = m.stars();
    let per_vertex: Vec<Result<Vec<Term>>> = stars
        .par_iter()
        .map(|star| {
            let x = m.vertices()[star.center];
            let regions = vertex_regions_of_star(m.vertices(), star, opts)?;
            Ok(regions
                .into_iter()
                .map(|(p, g)| Term::new(g, x, p))
                .collect())
        })
        .collect();
    let mut terms = Vec::new();
    for r in per_vertex {
        terms.extend(r?);
    }
    Ok(ProtoTransform {
        dimension: 3,
        terms,
        id: String::new(),
    })
}

/// `Σ gain · [v ∈ P] · [h ≥ anchor·v]`.
pub fn evaluate_ect(t: &ProtoTransform, v: &Vec3, h: f64) -> i64 {
    evaluate_ect_checked(t, v, h).value
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evaluation {
    pub value: i64,
    /// False when `(v, h)` lies within 1e-10 of a support boundary or an
    /// anchor height; the value then uses closed supports and `h ≥ x·v`.
    pub generic: bool,
}

pub fn evaluate_ect_checked(t: &ProtoTransform, v: &Vec3, h: f64) -> Evaluation {
    let mut value = 0;
    let mut generic = true;
    for term in &t.terms {
        let margin = term.support.boundary_margin(v);
        if margin < -1e-10 {
            continue;
        }
        if margin <= 1e-10 {
            generic = false;
        }
        let ht = term.anchor.dot(v);
        if (h - ht).abs() <= 1e-10 {
            generic = false;
        }
        if h >= ht {
            value += term.gain;
        }
    }
    Evaluation { value, generic }
}

/// Rotates anchors and supports so the result represents the rotated mesh.
pub fn rotate_transform(t: &ProtoTransform, r: &Mat3) -> Result<ProtoTransform> {
    check_rotation(r)?;
    Ok(ProtoTransform {
        dimension: t.dimension,
        terms: t
            .terms
            .iter()
            .map(|term| Term {
                gain: term.gain,
                anchor: r.apply(&term.anchor),
                support: term.support.rotated(r),
                cap: term.cap.rotated(r),
            })
            .collect(),
        id: t.id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn random_unit(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v.scaled(1.0 / n);
            }
        }
    }

    fn tetrahedron() -> Mesh {
        let v = vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.3),
        ];
        Mesh::new(3, v, vec![], vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
            .unwrap()
            .normalize()
            .unwrap()
    }

    #[test]
    fn local_gain_examples() {
        let pts = vec![Vec3::zero()];
        let lone = Mesh::new(3, pts.clone(), vec![], vec![]).unwrap();
        assert_eq!(local_gain(&lone.star(0).unwrap(), &pts, &Vec3::E1).unwrap(), 1);

        let pts = vec![Vec3::zero(), Vec3::E3];
        let edge = Mesh::new(3, pts.clone(), vec![[0, 1]], vec![]).unwrap();
        let s = edge.star(0).unwrap();
        assert_eq!(local_gain(&s, &pts, &Vec3::E3).unwrap(), 1);
        assert_eq!(local_gain(&s, &pts, &(-Vec3::E3)).unwrap(), 0);
        assert!(local_gain(&s, &pts, &Vec3::E1).is_err());

        let pts = vec![Vec3::E3, Vec3::E1, Vec3::E2];
        let tri = Mesh::new(3, pts.clone(), vec![], vec![[0, 1, 2]]).unwrap();
        assert_eq!(local_gain(&tri.star(0).unwrap(), &pts, &Vec3::E3).unwrap(), 0);
    }

    #[test]
    fn gain_matches_euler_curve_jump() {
        let m = tetrahedron();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = random_unit(&mut rng);
            let mut total = 0;
            for (i, star) in m.stars().iter().enumerate() {
                let g = local_gain(star, m.vertices(), &v).unwrap();
                let h = m.vertices()[i].dot(&v);
                let jump = m.restriction_chi(&v, h) - m.restriction_chi(&v, h - 1e-9);
                assert_eq!(g, jump);
                total += g;
            }
            assert_eq!(total, m.euler_characteristic());
        }
    }

    #[test]
    fn isolated_vertex_covers_the_sphere() {
        let m = Mesh::new(3, vec![Vec3::new(0.1, 0.2, 0.3)], vec![], vec![]).unwrap();
        let r = vertex_regions(&m, 0).unwrap();
        assert_eq!(r.len(), 2);
        let total: f64 = r.iter().map(|(p, g)| p.area() * *g as f64).sum();
        assert_relative_eq!(total, 4.0 * PI, epsilon = 1e-12);
        let t = build_proto_transform(&m).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.terms[0].anchor, Vec3::new(0.1, 0.2, 0.3));
    }

    #[test]
    fn edge_endpoint_has_one_hemisphere() {
        let m = Mesh::new(3, vec![Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.2, 0.0, -0.5)], vec![[0, 1]], vec![])
            .unwrap();
        let regions = vertex_regions(&m, 0).unwrap();
        assert_eq!(regions.len(), 1);
        let (p, g) = &regions[0];
        assert_eq!(*g, 1);
        assert_relative_eq!(p.area(), TAU, epsilon = 1e-12);
        let t = build_proto_transform(&m).unwrap();
        assert_eq!(t.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let v = random_unit(&mut rng);
            let inside = p.contains(&v, 0.0);
            let above = m.vertices()[1].dot(&v) > m.vertices()[0].dot(&v);
            assert_eq!(inside, above);
        }
    }

    #[test]
    fn tetrahedron_regions_are_bounded() {
        let m = tetrahedron();
        for i in 0..4 {
            assert!(vertex_regions(&m, i).unwrap().len() <= 8);
        }
        let t = build_proto_transform(&m).unwrap();
        assert!(t.len() <= 32);
    }

    #[test]
    fn evaluation_matches_restriction_oracle() {
        let m = tetrahedron();
        let plain = build_proto_transform(&m).unwrap();
        let merged = build_proto_transform_with(&m, BuildOptions { merge: true }).unwrap();
        assert!(merged.len() <= plain.len());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let v = random_unit(&mut rng);
            let h = rng.random_range(-1.2..1.2);
            let want = m.restriction_chi(&v, h);
            let e = evaluate_ect_checked(&plain, &v, h);
            assert!(e.generic);
            assert_eq!(e.value, want);
            assert_eq!(evaluate_ect(&merged, &v, h), want);
        }
        let v = Vec3::new(0.3, -0.4, 0.5).normalized();
        assert_eq!(evaluate_ect(&plain, &v, 1.0), 2);
        assert_eq!(evaluate_ect(&plain, &v, -1.5), 0);
        assert!(!evaluate_ect_checked(&plain, &Vec3::E1, 0.0).generic);
    }

    #[test]
    fn rotation_is_equivariant() {
        let m = tetrahedron();
        let t = build_proto_transform(&m).unwrap();
        let r = Mat3::axis_angle(Vec3::new(0.2, -0.5, 0.8).normalized(), 1.1);
        let rt = rotate_transform(&t, &r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let v = random_unit(&mut rng);
            let h = rng.random_range(-1.0..1.0);
            let back = r.transpose().apply(&v);
            assert_eq!(evaluate_ect(&rt, &v, h), m.restriction_chi(&back, h));
        }
        assert!(rotate_transform(&t, &Mat3::rot_x(0.3).matmul(&Mat3 { m: [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] })).is_err());
    }

    #[test]
    fn planar_meshes_are_rejected() {
        let m = Mesh::planar(&[[0.0, 0.0], [0.5, 0.0]], vec![[0, 1]], vec![]).unwrap();
        assert!(build_proto_transform(&m).is_err());
    }
}
