//! Plain-text `ECTP 1` serialization of transforms.
//!
//! ```text
//! ECTP 1 <dim> <n_terms>
//! g= <gain> a= <anchor coords> p= <m> <m unit vectors>
//! ```
//!
//! Three-dimensional terms list the vertices of their convex support. Planar
//! terms list two unit vectors, the start and end of a counterclockwise arc;
//! full circles are written as two half arcs. Floats use 17 significant
//! digits so 3D transforms round-trip bit for bit.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{EctError, Result};
use crate::linalg::Vec3;
use crate::sphere::SphericalPolygon;
use crate::transform::planar::{PlanarTerm, PlanarTransform};
use crate::transform::{ProtoTransform, Term};

const UNIT_TOL: f64 = 1e-9;

/// Contents of an `ECTP` file.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Spherical(ProtoTransform),
    Planar(PlanarTransform),
}

impl Transform {
    pub fn id(&self) -> &str {
        match self {
            Transform::Spherical(t) => &t.id,
            Transform::Planar(t) => &t.id,
        }
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        match self {
            Transform::Spherical(t) => t.id = id.into(),
            Transform::Planar(t) => t.id = id.into(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Transform::Spherical(t) => t.dimension,
            Transform::Planar(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Transform::Spherical(t) => t.terms.len(),
            Transform::Planar(t) => t.terms.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn push_floats(out: &mut String, xs: &[f64]) {
    for x in xs {
        let _ = write!(out, " {x:.16e}");
    }
}

pub fn to_string(t: &ProtoTransform) -> String {
    let mut out = format!("ECTP 1 3 {}\n", t.terms.len());
    for term in &t.terms {
        let _ = write!(out, "g= {} a=", term.gain);
        push_floats(&mut out, &term.anchor.to_array());
        let _ = write!(out, " p= {}", term.support.len());
        for v in term.support.vertices() {
            push_floats(&mut out, &v.to_array());
        }
        out.push('\n');
    }
    out
}

/// Arcs of a planar transform with full circles split in two.
fn planar_arcs(t: &PlanarTransform) -> Vec<PlanarTerm> {
    let mut out = Vec::with_capacity(t.terms.len());
    for term in &t.terms {
        if term.end - term.start >= TAU - 1e-12 {
            out.push(PlanarTerm { end: term.start + PI, ..*term });
            out.push(PlanarTerm { start: term.start + PI, end: term.start + TAU, ..*term });
        } else {
            out.push(*term);
        }
    }
    out
}

pub fn planar_to_string(t: &PlanarTransform) -> String {
    let arcs = planar_arcs(t);
    let mut out = format!("ECTP 1 2 {}\n", arcs.len());
    for term in &arcs {
        let _ = write!(out, "g= {} a=", term.gain);
        push_floats(&mut out, &term.anchor);
        out.push_str(" p= 2");
        push_floats(&mut out, &[term.start.cos(), term.start.sin(), term.end.cos(), term.end.sin()]);
        out.push('\n');
    }
    out
}

pub fn transform_to_string(t: &Transform) -> String {
    match t {
        Transform::Spherical(t) => to_string(t),
        Transform::Planar(t) => planar_to_string(t),
    }
}

struct Tokens<'a> {
    line: usize,
    it: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.it
            .next()
            .ok_or_else(|| EctError::parse(self.line, format!("missing {what}")))
    }

    fn keyword(&mut self, key: &str) -> Result<()> {
        let tok = self.next(key)?;
        if tok != key {
            return Err(EctError::parse(self.line, format!("expected `{key}`, found `{tok}`")));
        }
        Ok(())
    }

    fn int<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.next(what)?;
        tok.parse()
            .map_err(|_| EctError::parse(self.line, format!("malformed {what} `{tok}`")))
    }

    fn float(&mut self, what: &str) -> Result<f64> {
        let tok = self.next(what)?;
        match tok.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(EctError::parse(self.line, format!("malformed {what} `{tok}`"))),
        }
    }

    fn unit<const N: usize>(&mut self) -> Result<[f64; N]> {
        let mut v = [0.0; N];
        for x in v.iter_mut() {
            *x = self.float("vertex coordinate")?;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(EctError::parse(self.line, format!("vertex has norm {norm}, expected 1")));
        }
        Ok(v)
    }

    fn finish(&mut self) -> Result<()> {
        match self.it.next() {
            None => Ok(()),
            Some(tok) => Err(EctError::parse(self.line, format!("unexpected trailing token `{tok}`"))),
        }
    }
}

/// Parses either dimension; bounding caps are recomputed.
pub fn parse(text: &str) -> Result<Transform> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("")))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| EctError::parse(1, "empty transform file"))?;
    let mut h = Tokens { line: hline, it: header.split_whitespace() };
    let magic = h.next("header")?;
    if magic != "ECTP" {
        return Err(EctError::parse(hline, format!("expected `ECTP` header, found `{magic}`")));
    }
    let version: u32 = h.int("format version")?;
    if version != 1 {
        return Err(EctError::parse(hline, format!("unsupported format version {version}")));
    }
    let dim: usize = h.int("dimension")?;
    if dim != 2 && dim != 3 {
        return Err(EctError::parse(hline, format!("dimension must be 2 or 3, got {dim}")));
    }
    let n: usize = h.int("term count")?;
    h.finish()?;

    let mut spherical = Vec::new();
    let mut planar = Vec::new();
    let mut last = hline;
    for _ in 0..n {
        let (line, body) = lines
            .next()
            .ok_or_else(|| EctError::parse(last + 1, format!("expected {n} terms")))?;
        last = line;
        let mut t = Tokens { line, it: body.split_whitespace() };
        t.keyword("g=")?;
        let gain: i64 = t.int("gain")?;
        t.keyword("a=")?;
        if dim == 3 {
            let anchor = Vec3::new(t.float("anchor")?, t.float("anchor")?, t.float("anchor")?);
            t.keyword("p=")?;
            let m: usize = t.int("vertex count")?;
            if m < 3 {
                return Err(EctError::parse(line, format!("support needs at least 3 vertices, got {m}")));
            }
            let verts = (0..m)
                .map(|_| t.unit::<3>().map(Vec3::from_array))
                .collect::<Result<Vec<_>>>()?;
            t.finish()?;
            spherical.push(Term::new(gain, anchor, SphericalPolygon::from_vertices_unchecked(verts)));
        } else {
            let anchor = [t.float("anchor")?, t.float("anchor")?];
            t.keyword("p=")?;
            let m: usize = t.int("vertex count")?;
            if m != 2 {
                return Err(EctError::parse(line, format!("planar arcs have 2 endpoints, got {m}")));
            }
            let a = t.unit::<2>()?;
            let b = t.unit::<2>()?;
            t.finish()?;
            let start = a[1].atan2(a[0]).rem_euclid(TAU);
            let mut span = (b[1].atan2(b[0]) - start).rem_euclid(TAU);
            if span == 0.0 {
                span = TAU;
            }
            planar.push(PlanarTerm { gain, anchor, start, end: start + span });
        }
    }
    if let Some((line, _)) = lines.next() {
        return Err(EctError::parse(line, format!("more than the declared {n} terms")));
    }
    Ok(if dim == 3 {
        Transform::Spherical(ProtoTransform { dimension: 3, terms: spherical, id: String::new() })
    } else {
        Transform::Planar(PlanarTransform { terms: planar, id: String::new() })
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a transform and labels it with the file stem.
pub fn load(path: impl AsRef<Path>) -> Result<Transform> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EctError::io(path, e))?;
    let mut t = parse(&text)?;
    t.set_id(stem(path));
    Ok(t)
}

pub fn save(path: impl AsRef<Path>, t: &Transform) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, transform_to_string(t)).map_err(|e| EctError::io(path, e))
}
