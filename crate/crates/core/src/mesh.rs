//! Simplicial surface meshes: ingestion, normalization, stars, and the
//! brute-force restriction oracle.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use crate::error::{EctError, Result};
use crate::linalg::Vec3;

/// Geometric simplicial complex of dimension ≤ 2 embedded in R² or R³.
///
/// Planar meshes store their vertices with `z = 0`. Every vertex is a
/// 0-simplex; edges and triangles are stored as sorted index tuples and the
/// complex is closed under faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Vec3>,
    edges: Vec<[usize; 2]>,
    triangles: Vec<[usize; 3]>,
}

/// All simplices containing one vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Star {
    pub center: usize,
    pub edges: Vec<[usize; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Non-center vertices of the star's simplices, ascending.
    pub link: Vec<usize>,
}

impl Star {
    /// Number of simplices, counting the center vertex itself.
    pub fn simplex_count(&self) -> usize {
        1 + self.edges.len() + self.triangles.len()
    }
}

impl Mesh {
    /// Builds a mesh, adding every missing edge of the given triangles.
    pub fn new(
        dim: usize,
        vertices: Vec<Vec3>,
        edges: Vec<[usize; 2]>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Mesh> {
        if dim != 2 && dim != 3 {
            return Err(EctError::Argument(format!("unsupported dimension {dim}")));
        }
        let n = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(EctError::Argument(format!("vertex {i} is not finite")));
            }
            if dim == 2 && v.z != 0.0 {
                return Err(EctError::Argument(format!(
                    "vertex {i} has a nonzero z coordinate in a planar mesh"
                )));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for (i, v) in vertices.iter().enumerate() {
            let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
            if !seen.insert(key) {
                return Err(EctError::Degenerate(format!("vertex {i} duplicates another vertex")));
            }
        }

        let mut tri_set = BTreeSet::new();
        for t in &triangles {
            let mut s = *t;
            s.sort_unstable();
            if s[2] >= n {
                return Err(EctError::Argument(format!("triangle {t:?}: index out of range")));
            }
            if s[0] == s[1] || s[1] == s[2] {
                return Err(EctError::Degenerate(format!("triangle {t:?} repeats a vertex")));
            }
            tri_set.insert(s);
        }
        let mut edge_set = BTreeSet::new();
        for e in &edges {
            let mut s = *e;
            s.sort_unstable();
            if s[1] >= n {
                return Err(EctError::Argument(format!("edge {e:?}: index out of range")));
            }
            if s[0] == s[1] {
                return Err(EctError::Degenerate(format!("edge {e:?} repeats a vertex")));
            }
            edge_set.insert(s);
        }
        for t in &tri_set {
            edge_set.insert([t[0], t[1]]);
            edge_set.insert([t[0], t[2]]);
            edge_set.insert([t[1], t[2]]);
        }

        Ok(Mesh {
            dim,
            vertices,
            edges: edge_set.into_iter().collect(),
            triangles: tri_set.into_iter().collect(),
        })
    }

    /// Planar mesh from 2D coordinates.
    pub fn planar(
        points: &[[f64; 2]],
        edges: Vec<[usize; 2]>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Mesh> {
        let vertices = points.iter().map(|p| Vec3::new(p[0], p[1], 0.0)).collect();
        Mesh::new(2, vertices, edges, triangles)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Simplex counts by dimension.
    pub fn f_vector(&self) -> [usize; 3] {
        [self.vertices.len(), self.edges.len(), self.triangles.len()]
    }

    /// Alternating sum of simplex counts.
    pub fn euler_characteristic(&self) -> i64 {
        let [v, e, t] = self.f_vector();
        v as i64 - e as i64 + t as i64
    }

    pub fn max_vertex_norm(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Translates by the vertex centroid and scales into the unit ball.
    pub fn normalize(&self) -> Result<Mesh> {
        if self.vertices.is_empty() {
            return Err(EctError::Degenerate("mesh has no vertices".into()));
        }
        let n = self.vertices.len() as f64;
        let sum = self.vertices.iter().fold(Vec3::zero(), |acc, v| acc + *v);
        let centroid = sum.scaled(1.0 / n);
        let centered: Vec<Vec3> = self.vertices.iter().map(|v| *v - centroid).collect();
        let radius = centered.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !(radius > 0.0) {
            return Err(EctError::Degenerate(
                "all vertices coincide; the mesh cannot be scaled".into(),
            ));
        }
        let vertices = centered.into_iter().map(|v| v.scaled(1.0 / radius)).collect();
        Ok(Mesh {
            dim: self.dim,
            vertices,
            edges: self.edges.clone(),
            triangles: self.triangles.clone(),
        })
    }

    /// Applies a linear map to every vertex (used to build rotated copies).
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Mesh> {
        Mesh::new(
            self.dim,
            self.vertices.iter().map(f).collect(),
            self.edges.clone(),
            self.triangles.clone(),
        )
    }

    pub fn star(&self, i: usize) -> Result<Star> {
        if i >= self.vertices.len() {
            return Err(EctError::Argument(format!("vertex index {i} out of range")));
        }
        let edges: Vec<[usize; 2]> = self.edges.iter().filter(|e| e.contains(&i)).copied().collect();
        let triangles: Vec<[usize; 3]> =
            self.triangles.iter().filter(|t| t.contains(&i)).copied().collect();
        Ok(make_star(i, edges, triangles))
    }

    /// Stars of all vertices, computed in one pass over the simplices.
    pub fn stars(&self) -> Vec<Star> {
        let n = self.vertices.len();
        let mut edges = vec![Vec::new(); n];
        let mut triangles = vec![Vec::new(); n];
        for e in &self.edges {
            for &v in e {
                edges[v].push(*e);
            }
        }
        for t in &self.triangles {
            for &v in t {
                triangles[v].push(*t);
            }
        }
        edges
            .into_iter()
            .zip(triangles)
            .enumerate()
            .map(|(i, (e, t))| make_star(i, e, t))
            .collect()
    }

    /// Euler characteristic of the subcomplex of simplices whose vertices all
    /// satisfy `x · v ≤ h`.
    pub fn restriction_chi(&self, v: &Vec3, h: f64) -> i64 {
        let heights: Vec<f64> = self.vertices.iter().map(|x| x.dot(v)).collect();
        let mut chi = heights.iter().filter(|&&x| x <= h).count() as i64;
        chi -= self
            .edges
            .iter()
            .filter(|e| heights[e[0]].max(heights[e[1]]) <= h)
            .count() as i64;
        chi += self
            .triangles
            .iter()
            .filter(|t| heights[t[0]].max(heights[t[1]]).max(heights[t[2]]) <= h)
            .count() as i64;
        chi
    }

    /// For direction `v`: every simplex's entry height paired with its sign
    /// `(-1)^dim`, sorted by height.
    pub fn signed_entry_heights(&self, v: &Vec3) -> Vec<(f64, i64)> {
        let heights: Vec<f64> = self.vertices.iter().map(|x| x.dot(v)).collect();
        let mut out = Vec::with_capacity(self.vertices.len() + self.edges.len() + self.triangles.len());
        out.extend(heights.iter().map(|&h| (h, 1)));
        out.extend(self.edges.iter().map(|e| (heights[e[0]].max(heights[e[1]]), -1)));
        out.extend(
            self.triangles
                .iter()
                .map(|t| (heights[t[0]].max(heights[t[1]]).max(heights[t[2]]), 1)),
        );
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

fn make_star(center: usize, edges: Vec<[usize; 2]>, triangles: Vec<[usize; 3]>) -> Star {
    let mut link = BTreeSet::new();
    for e in &edges {
        link.extend(e.iter().copied().filter(|&v| v != center));
    }
    for t in &triangles {
        link.extend(t.iter().copied().filter(|&v| v != center));
    }
    Star {
        center,
        edges,
        triangles,
        link: link.into_iter().collect(),
    }
}

/// Directions from the regular subdivision of the octahedron: each edge split
/// into `k` segments, lattice points projected to the sphere. Yields `4k² + 2`
/// distinct unit vectors in a fixed order.
pub fn octahedron_directions(k: usize) -> Result<Vec<Vec3>> {
    if k == 0 {
        return Err(EctError::Argument("octahedron subdivision level must be ≥ 1".into()));
    }
    let k = k as i64;
    let mut lattice = BTreeSet::new();
    for sx in [-1i64, 1] {
        for sy in [-1i64, 1] {
            for sz in [-1i64, 1] {
                for i in 0..=k {
                    for j in 0..=(k - i) {
                        let l = k - i - j;
                        lattice.insert((sx * i, sy * j, sz * l));
                    }
                }
            }
        }
    }
    Ok(lattice
        .into_iter()
        .map(|(a, b, c)| Vec3::new(a as f64, b as f64, c as f64).normalized())
        .collect())
}

pub fn load_off(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EctError::io(path, e))?;
    parse_off(&text)
}

/// Parses ASCII OFF with triangle faces. Comments (`#`) and blank lines are
/// skipped; per-face extras such as colors are ignored.
pub fn parse_off(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| EctError::parse(1, "empty file, expected OFF header"))?;
    let mut header_tokens = header.split_whitespace();
    if header_tokens.next() != Some("OFF") {
        return Err(EctError::parse(header_line, "malformed header, expected `OFF`"));
    }
    let rest: Vec<&str> = header_tokens.collect();
    let (count_line, count_tokens) = if rest.is_empty() {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| EctError::parse(header_line, "missing element counts"))?;
        (ln, l.split_whitespace().collect::<Vec<_>>())
    } else {
        (header_line, rest)
    };
    if count_tokens.len() < 2 {
        return Err(EctError::parse(count_line, "malformed counts, expected `vertices faces [edges]`"));
    }
    let parse_count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| EctError::parse(count_line, format!("malformed count `{s}`")))
    };
    let nv = parse_count(count_tokens[0])?;
    let nf = parse_count(count_tokens[1])?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| EctError::parse(count_line, "unexpected end of file in vertex list"))?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| EctError::parse(ln, format!("malformed coordinate `{t}`")))
            })
            .collect::<Result<_>>()?;
        if coords.len() < 3 {
            return Err(EctError::parse(ln, "vertex needs three coordinates"));
        }
        vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
    }

    let mut triangles = Vec::with_capacity(nf);
    let mut edges = Vec::new();
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| EctError::parse(count_line, "unexpected end of file in face list"))?;
        let mut tokens = l.split_whitespace();
        let arity: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| EctError::parse(ln, "malformed face record"))?;
        if arity != 2 && arity != 3 {
            return Err(EctError::parse(ln, format!("non-triangle face with {arity} vertices")));
        }
        let mut idx = [0usize; 3];
        for slot in idx.iter_mut().take(arity) {
            let t = tokens
                .next()
                .ok_or_else(|| EctError::parse(ln, format!("face has fewer than {arity} indices")))?;
            let v: usize = t
                .parse()
                .map_err(|_| EctError::parse(ln, format!("malformed vertex index `{t}`")))?;
            if v >= nv {
                return Err(EctError::parse(ln, format!("index out of range: {v} ≥ {nv}")));
            }
            *slot = v;
        }
        if arity == 2 {
            if idx[0] == idx[1] {
                return Err(EctError::parse(ln, "edge repeats a vertex"));
            }
            edges.push([idx[0], idx[1]]);
            continue;
        }
        if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
            return Err(EctError::parse(ln, "face repeats a vertex"));
        }
        triangles.push(idx);
    }
    Mesh::new(3, vertices, edges, triangles)
}

/// Writes ASCII OFF; edges outside every triangle become 2-vertex faces.
pub fn write_off(mesh: &Mesh) -> String {
    let covered: HashSet<[usize; 2]> = mesh
        .triangles()
        .iter()
        .flat_map(|t| [[t[0], t[1]], [t[0], t[2]], [t[1], t[2]]])
        .collect();
    let loose: Vec<&[usize; 2]> = mesh.edges().iter().filter(|e| !covered.contains(*e)).collect();
    let mut s = format!("OFF\n{} {} 0\n", mesh.vertex_count(), mesh.triangles().len() + loose.len());
    for v in mesh.vertices() {
        s.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", v.x, v.y, v.z));
    }
    for t in mesh.triangles() {
        s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    for e in loose {
        s.push_str(&format!("2 {} {}\n", e[0], e[1]));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn octahedron() -> Mesh {
        let v = vec![
            Vec3::E1,
            -Vec3::E1,
            Vec3::E2,
            -Vec3::E2,
            Vec3::E3,
            -Vec3::E3,
        ];
        let mut tris = Vec::new();
        for &a in &[0usize, 1] {
            for &b in &[2usize, 3] {
                for &c in &[4usize, 5] {
                    tris.push([a, b, c]);
                }
            }
        }
        Mesh::new(3, v, vec![], tris).unwrap()
    }

    #[test]
    fn off_single_triangle_closes_faces() {
        let m = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(m.f_vector(), [3, 3, 1]);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn off_shared_edge_is_deduplicated() {
        let text = "OFF\n# two triangles\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n1 1 1\n\n3 0 1 2 255 0 0\n3 1 2 3\n";
        let m = parse_off(text).unwrap();
        assert_eq!(m.f_vector(), [4, 5, 2]);
    }

    #[test]
    fn off_loose_edges_round_trip() {
        let text = "OFF\n5 2 0\n0 0 0\n1 0 0\n0 1 0\n1 1 1\n2 2 2\n3 0 1 2\n2 3 4\n";
        let m = parse_off(text).unwrap();
        assert_eq!(m.f_vector(), [5, 4, 1]);
        let back = parse_off(&write_off(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn off_out_of_range_index_names_the_line() {
        let text = "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 1\n3 0 1 7\n";
        let err = parse_off(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 7"), "{msg}");
        assert!(msg.contains("index out of range"), "{msg}");
    }

    #[test]
    fn off_rejects_quads_and_bad_headers() {
        let quad = "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 2 3\n";
        assert!(matches!(parse_off(quad), Err(EctError::Parse { line: 7, .. })));
        assert!(matches!(parse_off("PLY\n"), Err(EctError::Parse { line: 1, .. })));
        let counts_inline = "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        assert_eq!(parse_off(counts_inline).unwrap().f_vector(), [3, 3, 1]);
    }

    #[test]
    fn normalize_symmetric_pair() {
        let m = Mesh::new(3, vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(-2.0, 0.0, 0.0)], vec![], vec![])
            .unwrap();
        let n = m.normalize().unwrap();
        assert_eq!(n.vertices()[0], Vec3::E1);
        assert_eq!(n.vertices()[1], -Vec3::E1);
    }

    #[test]
    fn normalize_is_idempotent() {
        let m = Mesh::new(
            3,
            vec![
                Vec3::new(0.3, 2.0, -1.0),
                Vec3::new(4.0, 0.1, 0.2),
                Vec3::new(-1.0, -0.5, 3.0),
            ],
            vec![],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let once = m.normalize().unwrap();
        let twice = once.normalize().unwrap();
        assert!((once.max_vertex_norm() - 1.0).abs() < 1e-15);
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            assert!(a.max_abs_diff(b) < 1e-15);
        }
    }

    #[test]
    fn normalize_single_point_is_degenerate() {
        let m = Mesh::new(3, vec![Vec3::new(1.0, 1.0, 1.0)], vec![], vec![]).unwrap();
        assert!(matches!(m.normalize(), Err(EctError::Degenerate(_))));
    }

    #[test]
    fn euler_characteristics() {
        assert_eq!(octahedron().euler_characteristic(), 2);
        // 3×3 grid torus: 9 vertices, 27 edges, 18 triangles.
        let n = 3;
        let idx = |i: usize, j: usize| (i % n) * n + (j % n);
        let mut tris = Vec::new();
        let mut verts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (u, v) = (i as f64 / n as f64 * std::f64::consts::TAU, j as f64 / n as f64 * std::f64::consts::TAU);
                verts.push(Vec3::new((2.0 + v.cos()) * u.cos(), (2.0 + v.cos()) * u.sin(), v.sin()));
                tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let torus = Mesh::new(3, verts, vec![], tris).unwrap();
        assert_eq!(torus.f_vector(), [9, 27, 18]);
        assert_eq!(torus.euler_characteristic(), 0);
    }

    #[test]
    fn stars_of_small_complexes() {
        let tri = Mesh::new(3, vec![Vec3::E1, Vec3::E2, Vec3::E3], vec![], vec![[0, 1, 2]]).unwrap();
        let s = tri.star(0).unwrap();
        assert_eq!((s.edges.len(), s.triangles.len(), s.link.clone()), (2, 1, vec![1, 2]));

        let lonely = Mesh::new(3, vec![Vec3::E1, Vec3::E2], vec![], vec![]).unwrap();
        let s = lonely.star(1).unwrap();
        assert_eq!(s.simplex_count(), 1);
        assert!(s.link.is_empty());

        let mut verts = vec![Vec3::zero()];
        let mut tris = Vec::new();
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            verts.push(Vec3::new(a.cos(), a.sin(), 0.0));
            tris.push([0, 1 + k, 1 + (k + 1) % 6]);
        }
        let fan = Mesh::new(3, verts, vec![], tris).unwrap();
        let s = fan.star(0).unwrap();
        assert_eq!((s.simplex_count(), s.link.len()), (13, 6));
        assert_eq!(fan.stars()[0], s);
    }

    #[test]
    fn restriction_extremes_and_single_edge() {
        let oct = octahedron();
        let v = Vec3::new(0.2, -0.3, 0.9).normalized();
        assert_eq!(oct.restriction_chi(&v, 1.0), 2);
        assert_eq!(oct.restriction_chi(&v, -1.5), 0);
        let edge = Mesh::new(3, vec![Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.0, 0.0, -0.5)], vec![[0, 1]], vec![])
            .unwrap();
        assert_eq!(edge.restriction_chi(&Vec3::E3, 0.0), 1);
        assert_eq!(edge.restriction_chi(&Vec3::E3, 0.5), 1);
    }

    #[test]
    fn octahedron_direction_counts() {
        assert_eq!(octahedron_directions(1).unwrap().len(), 6);
        assert_eq!(octahedron_directions(2).unwrap().len(), 18);
        assert_eq!(octahedron_directions(9).unwrap().len(), 326);
        assert!(octahedron_directions(0).is_err());
        let dirs = octahedron_directions(4).unwrap();
        for d in &dirs {
            assert!((d.norm() - 1.0).abs() < 1e-12);
            assert!(dirs.iter().any(|e| e.max_abs_diff(&(-*d)) < 1e-15));
        }
    }
}
