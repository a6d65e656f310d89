//! Independent reference computations and input generators shared by the
//! integration tests.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use exact_ect::linalg::Vec3;
use exact_ect::mesh::Mesh;
use exact_ect::sphere::SphericalPolygon;
use rand::seq::SliceRandom;
use rand::Rng;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// `∫ f` over the spherical triangle `abc` through the central projection of
/// the flat triangle, `dσ = |((b−a)×(c−a))·p| / |p|³ ds dt`, with a collapsed
/// square rule.
fn triangle_rule(a: Vec3, b: Vec3, c: Vec3, f: &dyn Fn(Vec3) -> f64, rule: &[(f64, f64)]) -> f64 {
    let n = (b - a).cross(&(c - a));
    let mut acc = 0.0;
    for &(u, wu) in rule {
        for &(w, ww) in rule {
            let s = u;
            let t = (1.0 - u) * w;
            let p = a.scaled(1.0 - s - t) + b.scaled(s) + c.scaled(t);
            let r = p.norm();
            let jac = n.dot(&p).abs() / (r * r * r) * (1.0 - u);
            acc += wu * ww * jac * f(p.scaled(1.0 / r));
        }
    }
    acc
}

fn adaptive(a: Vec3, b: Vec3, c: Vec3, f: &dyn Fn(Vec3) -> f64, tol: f64, depth: usize, rule: &[(f64, f64)]) -> f64 {
    let whole = triangle_rule(a, b, c, f, rule);
    let (ab, bc, ca) = ((a + b).normalized(), (b + c).normalized(), (c + a).normalized());
    let parts = [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)];
    let split: f64 = parts.iter().map(|&(x, y, z)| triangle_rule(x, y, z, f, rule)).sum();
    if (whole - split).abs() <= tol || depth == 0 {
        return split;
    }
    parts
        .iter()
        .map(|&(x, y, z)| adaptive(x, y, z, f, tol / 4.0, depth - 1, rule))
        .sum()
}

/// Adaptive quadrature of `f` over a convex spherical polygon, fanned from
/// its first vertex.
pub fn integrate_over(p: &SphericalPolygon, f: &dyn Fn(Vec3) -> f64, tol: f64) -> f64 {
    let v = p.vertices();
    let rule = gauss_legendre(10);
    (1..v.len() - 1)
        .map(|k| adaptive(v[0], v[k], v[k + 1], f, tol, 8, &rule))
        .sum()
}

/// Unit vector at angular distance `r` from `c` in the direction `phi`.
fn offset(c: Vec3, r: f64, phi: f64) -> Vec3 {
    let helper = if c.x.abs() < 0.9 { Vec3::E1 } else { Vec3::E2 };
    let e1 = c.cross(&helper).normalized();
    let e2 = c.cross(&e1);
    let t = e1.scaled(phi.cos()) + e2.scaled(phi.sin());
    c.scaled(r.cos()) + t.scaled(r.sin())
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v.scaled(1.0 / n);
        }
    }
}

pub fn random_in_ball(rng: &mut impl Rng, radius: f64) -> Vec3 {
    random_unit(rng).scaled(radius * rng.random_range(0.0f64..1.0).cbrt())
}

/// Convex polygon inscribed in a small circle; vertices counterclockwise
/// seen from outside.
pub fn random_convex_polygon(rng: &mut impl Rng) -> SphericalPolygon {
    let c = random_unit(rng);
    let r = rng.random_range(0.05..1.4);
    let k = rng.random_range(3..9);
    let mut phis: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..TAU)).collect();
    phis.sort_by(f64::total_cmp);
    phis.dedup_by(|a, b| (*a - *b).abs() < 0.05);
    if phis.len() < 3 || phis.windows(2).any(|w| w[1] - w[0] >= PI) || phis[0] + TAU - phis[phis.len() - 1] >= PI {
        return random_convex_polygon(rng);
    }
    let verts: Vec<Vec3> = phis.iter().map(|&p| offset(c, r, p)).collect();
    let poly = SphericalPolygon::new(verts.clone()).unwrap();
    if poly.vector_area().dot(&c) > 0.0 {
        poly
    } else {
        SphericalPolygon::new(verts.into_iter().rev().collect()).unwrap()
    }
}

/// Random simplicial complex with at least two vertices in the unit ball, a random subset of
/// triangles and a few extra edges.
pub fn random_mesh(rng: &mut impl Rng, max_vertices: usize) -> Mesh {
    let n = rng.random_range(2..=max_vertices);
    let vertices: Vec<Vec3> = (0..n).map(|_| random_in_ball(rng, 1.0)).collect();
    let mut triangles = Vec::new();
    if n >= 3 {
        let nt = rng.random_range(0..=n);
        for _ in 0..nt {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            triangles.push([idx[0], idx[1], idx[2]]);
        }
    }
    let mut edges = Vec::new();
    if n >= 2 {
        for _ in 0..rng.random_range(0..=n) {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                edges.push([i, j]);
            }
        }
    }
    Mesh::new(3, vertices, edges, triangles).unwrap()
}

/// Icosahedron scaled per axis and perturbed radially; a small asymmetric
/// closed surface with 12 vertices and 20 faces.
pub fn bumpy_icosahedron(rng: &mut impl Rng, noise: f64, stretch: [f64; 3]) -> Mesh {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, g, 0.0],
        [1.0, g, 0.0],
        [-1.0, -g, 0.0],
        [1.0, -g, 0.0],
        [0.0, -1.0, g],
        [0.0, 1.0, g],
        [0.0, -1.0, -g],
        [0.0, 1.0, -g],
        [g, 0.0, -1.0],
        [g, 0.0, 1.0],
        [-g, 0.0, -1.0],
        [-g, 0.0, 1.0],
    ];
    let faces = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let verts = raw
        .iter()
        .map(|p| {
            let v = Vec3::from_array(*p).normalized().scaled(1.0 + noise * rng.random_range(-1.0..1.0));
            Vec3::new(v.x * stretch[0], v.y * stretch[1], v.z * stretch[2])
        })
        .collect();
    Mesh::new(3, verts, vec![], faces.to_vec()).unwrap().normalize().unwrap()
}

/// Nearly uniform directions on a golden-angle spiral.
pub fn fibonacci_directions(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Euler curve of a mesh in one direction at ascending heights, counting
/// each simplex from the height of its highest vertex.
pub fn sweep_curve(m: &Mesh, v: &Vec3, heights: &[f64]) -> Vec<i64> {
    let h: Vec<f64> = m.vertices().iter().map(|x| x.dot(v)).collect();
    let mut events: Vec<(f64, i64)> = h.iter().map(|&x| (x, 1)).collect();
    for e in m.edges() {
        events.push((h[e[0]].max(h[e[1]]), -1));
    }
    for t in m.triangles() {
        events.push((h[t[0]].max(h[t[1]]).max(h[t[2]]), 1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(heights.len());
    let (mut k, mut chi) = (0, 0);
    for &t in heights {
        while k < events.len() && events[k].0 <= t {
            chi += events[k].1;
            k += 1;
        }
        out.push(chi);
    }
    out
}

/// Midpoint-rule `∫_{S²×[−1,1]} ECT_a · ECT_b` on a dense grid.
pub fn quadrature_inner_product(a: &Mesh, b: &Mesh, n_dirs: usize, n_heights: usize) -> f64 {
    use rayon::prelude::*;
    let dirs = fibonacci_directions(n_dirs);
    let dh = 2.0 / n_heights as f64;
    let heights: Vec<f64> = (0..n_heights).map(|i| -1.0 + (i as f64 + 0.5) * dh).collect();
    let total: i64 = dirs
        .par_iter()
        .map(|v| {
            let ca = sweep_curve(a, v, &heights);
            let cb = sweep_curve(b, v, &heights);
            ca.iter().zip(&cb).map(|(x, y)| x * y).sum::<i64>()
        })
        .sum();
    total as f64 * (4.0 * PI / n_dirs as f64) * dh
}

/// Spearman rank correlation, averaging ranks over ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}
