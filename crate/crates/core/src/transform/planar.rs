//! Transforms of planar meshes, where directions live on the unit circle.
//!
//! Two representations are provided. [`ArcTable`] partitions the circle at
//! every equi-height angle of every vertex pair and stores, per arc, the
//! vertex order and the Euler characteristic after each vertex.
//! [`PlanarTransform`] is the star-local form: per vertex, arcs of constant
//! gain bounded by equi-height angles with its neighbors.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{EctError, Result};
use crate::linalg::Vec3;
use crate::mesh::Mesh;

const ANGLE_EPS: f64 = 1e-12;

/// One equi-height solution for a vertex pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquiHeight {
    pub i: usize,
    pub j: usize,
    /// `(x_i − x_j) / (y_j − y_i)`; `None` when the vertices share a `y`.
    pub d: Option<f64>,
    /// Representative in `(−π/2, π/2]`; the other solution is `theta + π`.
    pub theta: f64,
}

/// Directions `(cos θ, sin θ)` along which `x_i` and `x_j` have equal height.
pub fn equi_height_angles(points: &[[f64; 2]]) -> Vec<EquiHeight> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let (p, q) = (points[i], points[j]);
            let dy = q[1] - p[1];
            let (d, theta) = if dy == 0.0 {
                (None, FRAC_PI_2)
            } else {
                let d = (p[0] - q[0]) / dy;
                (Some(d), d.atan())
            };
            out.push(EquiHeight { i, j, d, theta });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub end: f64,
    /// Vertex indices by increasing height inside the arc.
    pub order: Vec<usize>,
    /// Euler characteristic of the sublevel set just after each vertex of `order`.
    pub chi: Vec<i64>,
}

impl Arc {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcTable {
    pub points: Vec<[f64; 2]>,
    /// Consecutive arcs covering `[arcs[0].start, arcs[0].start + 2π)`.
    pub arcs: Vec<Arc>,
}

fn direction(theta: f64) -> Vec3 {
    Vec3::new(theta.cos(), theta.sin(), 0.0)
}

fn wrap(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU - ANGLE_EPS {
        0.0
    } else {
        t
    }
}

/// Sorted distinct angles in `[0, 2π)`.
fn breakpoints(mut angles: Vec<f64>) -> Vec<f64> {
    for a in angles.iter_mut() {
        *a = wrap(*a);
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|b, a| (*b - *a).abs() < ANGLE_EPS);
    angles
}

/// Arcs `[b_k, b_{k+1}]` with the last one wrapping past `2π`.
fn arcs_between(b: &[f64]) -> Vec<(f64, f64)> {
    if b.is_empty() {
        return vec![(0.0, TAU)];
    }
    (0..b.len())
        .map(|k| {
            let end = if k + 1 < b.len() { b[k + 1] } else { b[0] + TAU };
            (b[k], end)
        })
        .collect()
}

fn planar_points(m: &Mesh) -> Result<Vec<[f64; 2]>> {
    if m.dim() != 2 {
        return Err(EctError::Argument(format!(
            "expected a planar mesh, got dimension {}",
            m.dim()
        )));
    }
    Ok(m.vertices().iter().map(|v| [v.x, v.y]).collect())
}

/// Arc table from all pairwise equi-height angles.
pub fn build_proto_transform_2d(m: &Mesh) -> Result<ArcTable> {
    let points = planar_points(m)?;
    let mut angles = Vec::new();
    for e in equi_height_angles(&points) {
        angles.push(e.theta);
        angles.push(e.theta + PI);
    }
    let b = breakpoints(angles);
    let arcs = arcs_between(&b)
        .into_iter()
        .map(|(start, end)| {
            let v = direction(0.5 * (start + end));
            let heights: Vec<f64> = m.vertices().iter().map(|x| x.dot(&v)).collect();
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| heights[a].total_cmp(&heights[b]));
            let chi = order.iter().map(|&i| m.restriction_chi(&v, heights[i])).collect();
            Arc {
                start,
                end,
                order,
                chi,
            }
        })
        .collect();
    Ok(ArcTable { points, arcs })
}

/// `∫_τ^θ p·(cos t, sin t) dt`.
pub fn arc_height_integral(tau: f64, theta: f64, p: [f64; 2]) -> f64 {
    (tau.cos() - theta.cos()) * p[1] + (theta.sin() - tau.sin()) * p[0]
}

/// `∫_τ^θ max(p·u, q·u) dt`, splitting where the two heights cross.
fn arc_max_integral(tau: f64, theta: f64, p: [f64; 2], q: [f64; 2]) -> f64 {
    let d = [p[0] - q[0], p[1] - q[1]];
    if d == [0.0, 0.0] {
        return arc_height_integral(tau, theta, p);
    }
    // Heights cross at base + π/2 + kπ.
    let root = d[1].atan2(d[0]) + FRAC_PI_2;
    let mut cuts = vec![tau];
    let mut r = root + ((tau - root) / PI).ceil() * PI;
    while r < theta {
        if r > tau {
            cuts.push(r);
        }
        r += PI;
    }
    cuts.push(theta);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (s, e) = (w[0], w[1]);
        if e <= s {
            continue;
        }
        let mid = 0.5 * (s + e);
        let upper = if d[0] * mid.cos() + d[1] * mid.sin() >= 0.0 { p } else { q };
        total += arc_height_integral(s, e, upper);
    }
    total
}

/// `∫_{[τ,θ]} ∫_{−R}^{R} [h ≥ p·u][h ≥ q·u] dh dt`.
fn arc_pair_integral(tau: f64, theta: f64, p: [f64; 2], q: [f64; 2], radius: f64) -> f64 {
    radius * (theta - tau) - arc_max_integral(tau, theta, p, q)
}

fn check_radius(points: &[[f64; 2]], radius: f64) -> Result<()> {
    if !(radius > 0.0) {
        return Err(EctError::Argument(format!("height radius must be positive, got {radius}")));
    }
    for p in points {
        if p[0].hypot(p[1]) > radius * (1.0 + 1e-12) {
            return Err(EctError::Argument(format!(
                "vertex ({}, {}) lies outside the height radius {radius}",
                p[0], p[1]
            )));
        }
    }
    Ok(())
}

/// Index of the arc containing angle `t` (taken modulo 2π).
fn locate(arcs: &[Arc], t: f64) -> usize {
    let s0 = arcs[0].start;
    let t = s0 + (t - s0).rem_euclid(TAU);
    arcs.iter()
        .position(|a| t >= a.start && t < a.end)
        .unwrap_or(arcs.len() - 1)
}

/// Per-vertex jumps `(vertex, χ_k − χ_{k−1})` of an arc.
fn jumps(arc: &Arc) -> Vec<(usize, i64)> {
    let mut prev = 0;
    arc.order
        .iter()
        .zip(&arc.chi)
        .filter_map(|(&v, &c)| {
            let g = c - prev;
            prev = c;
            (g != 0).then_some((v, g))
        })
        .collect()
}

/// `⟨a, b⟩` over `S¹ × [−R, R]` on the common refinement of both arc sets.
pub fn inner_product_2d(a: &ArcTable, b: &ArcTable, radius: f64) -> Result<f64> {
    check_radius(&a.points, radius)?;
    check_radius(&b.points, radius)?;
    let mut cuts: Vec<f64> = a.arcs.iter().chain(&b.arcs).map(|x| x.start).collect();
    cuts = breakpoints(cuts);
    let mut total = 0.0;
    for (s, e) in arcs_between(&cuts) {
        let mid = 0.5 * (s + e);
        let ja = jumps(&a.arcs[locate(&a.arcs, mid)]);
        let jb = jumps(&b.arcs[locate(&b.arcs, mid)]);
        for &(i, gi) in &ja {
            for &(j, gj) in &jb {
                total += (gi * gj) as f64 * arc_pair_integral(s, e, a.points[i], b.points[j], radius);
            }
        }
    }
    Ok(total)
}

/// Gain `g` on directions in the arc `[start, end]` for the vertex `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarTerm {
    pub gain: i64,
    pub anchor: [f64; 2],
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarTransform {
    pub terms: Vec<PlanarTerm>,
    pub id: String,
}

/// Star-local transform: each vertex splits the circle only at the
/// equi-height angles with its own neighbors.
pub fn build_planar_transform(m: &Mesh) -> Result<PlanarTransform> {
    let points = planar_points(m)?;
    let mut terms = Vec::new();
    for star in m.stars() {
        let c = star.center;
        let mut angles = Vec::new();
        for &j in &star.link {
            let d = [points[c][0] - points[j][0], points[c][1] - points[j][1]];
            let base = d[1].atan2(d[0]);
            angles.push(base + FRAC_PI_2);
            angles.push(base - FRAC_PI_2);
        }
        for (start, end) in arcs_between(&breakpoints(angles)) {
            let v = direction(0.5 * (start + end));
            let g = super::local_gain(&star, m.vertices(), &v)?;
            if g != 0 {
                terms.push(PlanarTerm {
                    gain: g,
                    anchor: points[c],
                    start,
                    end,
                });
            }
        }
    }
    Ok(PlanarTransform {
        terms,
        id: String::new(),
    })
}

/// `⟨a, b⟩` over `S¹ × [−R, R]` as a sum over term pairs.
pub fn planar_inner_product(a: &PlanarTransform, b: &PlanarTransform, radius: f64) -> Result<f64> {
    let anchors = |t: &PlanarTransform| t.terms.iter().map(|x| x.anchor).collect::<Vec<_>>();
    check_radius(&anchors(a), radius)?;
    check_radius(&anchors(b), radius)?;
    let mut total = 0.0;
    for s in &a.terms {
        for t in &b.terms {
            for (lo, hi) in arc_overlaps(s.start, s.end, t.start, t.end) {
                total += (s.gain * t.gain) as f64 * arc_pair_integral(lo, hi, s.anchor, t.anchor, radius);
            }
        }
    }
    Ok(total)
}

/// Intersections of two circular arcs given by increasing endpoints.
fn arc_overlaps(s0: f64, s1: f64, t0: f64, t1: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for shift in [-TAU, 0.0, TAU] {
        let lo = s0.max(t0 + shift);
        let hi = s1.min(t1 + shift);
        if hi > lo {
            out.push((lo, hi));
        }
    }
    out
}

/// Value of the transform at direction angle `theta` and height `h`.
pub fn evaluate_planar(t: &PlanarTransform, theta: f64, h: f64) -> i64 {
    let v = [theta.cos(), theta.sin()];
    t.terms
        .iter()
        .filter(|term| {
            let s = term.start + (theta - term.start).rem_euclid(TAU);
            s <= term.end && h >= term.anchor[0] * v[0] + term.anchor[1] * v[1]
        })
        .map(|term| term.gain)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example() -> Mesh {
        Mesh::planar(
            &[[-2.0, -1.0], [0.0, 1.0], [0.0, 4.0], [2.0, 0.0]],
            vec![],
            vec![[0, 1, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn equi_height_values() {
        let pts: Vec<[f64; 2]> = vec![[-2.0, -1.0], [0.0, 1.0], [0.0, 4.0], [2.0, 0.0]];
        let d: Vec<f64> = equi_height_angles(&pts).iter().map(|e| e.d.unwrap()).collect();
        let expect = [-1.0, -0.4, -4.0, 0.0, 2.0, 0.5];
        for (a, b) in d.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        let flat = equi_height_angles(&[[0.0, 1.0], [3.0, 1.0]]);
        assert_eq!(flat[0].d, None);
        assert_eq!(flat[0].theta, FRAC_PI_2);
    }

    #[test]
    fn single_point_table() {
        let m = Mesh::planar(&[[0.3, -0.2]], vec![], vec![]).unwrap();
        let t = build_proto_transform_2d(&m).unwrap();
        assert_eq!(t.arcs.len(), 1);
        assert_eq!((t.arcs[0].start, t.arcs[0].end), (0.0, TAU));
        assert_eq!(t.arcs[0].order, vec![0]);
        assert_eq!(t.arcs[0].chi, vec![1]);
        assert_relative_eq!(inner_product_2d(&t, &t, 1.0).unwrap(), TAU, epsilon = 1e-14);
    }

    #[test]
    fn arc_integrals() {
        assert_relative_eq!(arc_height_integral(0.0, FRAC_PI_2, [1.0, 0.0]), 1.0, epsilon = 1e-15);
        assert_relative_eq!(arc_height_integral(0.0, FRAC_PI_2, [0.0, 1.0]), 1.0, epsilon = 1e-15);
        assert!(arc_height_integral(0.0, TAU, [0.4, -0.9]).abs() < 1e-15);
    }

    #[test]
    fn example_inner_product_both_routes() {
        let m = example();
        // Grid quadrature of χ² (4000 directions × 800 heights) gives 41.9379.
        let want = 41.93731604635505;
        let table = build_proto_transform_2d(&m).unwrap();
        assert_eq!(table.arcs.len(), 12);
        assert_relative_eq!(inner_product_2d(&table, &table, 4.0).unwrap(), want, epsilon = 1e-9);
        let local = build_planar_transform(&m).unwrap();
        assert_relative_eq!(planar_inner_product(&local, &local, 4.0).unwrap(), want, epsilon = 1e-9);
    }

    #[test]
    fn vertex_order_constant_inside_arcs() {
        let m = example();
        let table = build_proto_transform_2d(&m).unwrap();
        for arc in &table.arcs {
            for f in [0.1, 0.5, 0.9] {
                let v = direction(arc.start + f * (arc.end - arc.start));
                let h: Vec<f64> = m.vertices().iter().map(|x| x.dot(&v)).collect();
                for w in arc.order.windows(2) {
                    assert!(h[w[0]] < h[w[1]]);
                }
            }
        }
    }

    #[test]
    fn planar_transform_matches_restriction() {
        let m = example();
        let t = build_planar_transform(&m).unwrap();
        for k in 0..200 {
            let theta = 0.0137 + k as f64 * 0.0311;
            let h = -4.0 + (k as f64 * 0.173) % 8.0;
            assert_eq!(evaluate_planar(&t, theta, h), m.restriction_chi(&direction(theta), h));
        }
    }

    #[test]
    fn radius_is_checked() {
        let t = build_proto_transform_2d(&example()).unwrap();
        assert!(inner_product_2d(&t, &t, 1.0).is_err());
    }
}
