//! Exact inner products and distances between transforms, the discrete
//! baseline on a direction × height grid, and Mantel correlation.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{EctError, Result};
use crate::linalg::{Mat3, Vec3};
use crate::mesh::{octahedron_directions, Mesh};
use crate::real::Real;
use crate::sphere::{clip_halfspace, intersect_convex, Cap, SphericalPolygon};
use crate::transform::planar::{planar_inner_product, PlanarTransform};
use crate::transform::{ProtoTransform, Term};

/// Extra angular slack for the cap prefilter.
const CAP_MARGIN: f64 = 1e-9;
/// Squared distances in `[-CLAMP_EPS, 0)` are rounding noise.
const CLAMP_EPS: f64 = 1e-9;

/// How per-row partial sums are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Fixed pairwise tree over rows in index order; bit-reproducible.
    #[default]
    Ordered,
    /// Whatever order the thread pool produces.
    Unordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairOptions {
    /// Skip term pairs whose bounding caps are disjoint.
    pub prefilter: bool,
    pub reduction: Reduction,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            prefilter: true,
            reduction: Reduction::Ordered,
        }
    }
}

/// `∫_{P_s ∩ P_t} ∫_{-1}^{1} [h ≥ x_s·v][h ≥ x_t·v] dh dσ` scaled by both gains.
pub fn term_pair_integral(s: &Term, t: &Term) -> f64 {
    pair_integral(s.gain * t.gain, &s.anchor, &s.support, &t.anchor, &t.support)
}

/// Generic kernel: `g · (area(Q) − ∫_Q max(x_s·v, x_t·v) dσ)` with `Q = P_s ∩ P_t`.
pub fn pair_integral<T: Real>(
    gain: i64,
    xs: &Vec3<T>,
    ps: &SphericalPolygon<T>,
    xt: &Vec3<T>,
    pt: &SphericalPolygon<T>,
) -> T {
    let Some(q) = intersect_convex(ps, pt).pop() else {
        return T::zero();
    };
    let area = q.area();
    let d = *xs - *xt;
    let upper = if d.norm().value() <= 1e-15 {
        q.integrate_height(xs)
    } else {
        let mut acc = T::zero();
        for part in clip_halfspace(&q, &d) {
            acc += part.integrate_height(xs);
        }
        for part in clip_halfspace(&q, &(-d)) {
            acc += part.integrate_height(xt);
        }
        acc
    };
    (area - upper).scale(gain as f64)
}

/// Sum with a balanced binary tree in index order.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Term of a transform carried into a generic scalar type.
#[derive(Debug, Clone)]
pub struct LiftedTerm<T> {
    pub gain: i64,
    pub anchor: Vec3<T>,
    pub support: SphericalPolygon<T>,
    pub cap: Cap,
}

impl<T: Real> LiftedTerm<T> {
    pub fn lift(t: &Term) -> Self {
        LiftedTerm {
            gain: t.gain,
            anchor: Vec3::lift(t.anchor),
            support: SphericalPolygon::lift(&t.support),
            cap: t.cap,
        }
    }

    /// Image under `r`; the cap follows the real part of `r`.
    pub fn rotated(&self, r: &Mat3<T>) -> Self {
        LiftedTerm {
            gain: self.gain,
            anchor: r.apply(&self.anchor),
            support: self.support.rotated(r),
            cap: self.cap.rotated(&r.value()),
        }
    }
}

/// `Σ_{s,t} pair_integral(s, t)` over all pairs of the two term lists.
pub fn correlate<T: Real>(a: &[LiftedTerm<T>], b: &[LiftedTerm<T>], opts: PairOptions) -> T {
    let row = |s: &LiftedTerm<T>| -> T {
        let mut parts = Vec::new();
        for t in b {
            if opts.prefilter && !s.cap.may_intersect(&t.cap, CAP_MARGIN) {
                continue;
            }
            parts.push(pair_integral(s.gain * t.gain, &s.anchor, &s.support, &t.anchor, &t.support));
        }
        pairwise_sum(&parts)
    };
    match opts.reduction {
        Reduction::Ordered => {
            let rows: Vec<T> = a.par_iter().map(row).collect();
            pairwise_sum(&rows)
        }
        Reduction::Unordered => a
            .par_iter()
            .map(row)
            .reduce(T::zero, |x, y| x + y),
    }
}

fn check_pair(a: &ProtoTransform, b: &ProtoTransform) -> Result<()> {
    if a.dimension != 3 || b.dimension != 3 {
        return Err(EctError::Argument(format!(
            "inner product needs two 3D transforms, got dimensions {} and {}",
            a.dimension, b.dimension
        )));
    }
    Ok(())
}

fn lift_all<T: Real>(t: &ProtoTransform) -> Vec<LiftedTerm<T>> {
    t.terms.iter().map(LiftedTerm::lift).collect()
}

/// ECT inner product over `S² × [−1, 1]`.
pub fn inner_product(a: &ProtoTransform, b: &ProtoTransform) -> Result<f64> {
    inner_product_with(a, b, PairOptions::default())
}

pub fn inner_product_with(a: &ProtoTransform, b: &ProtoTransform, opts: PairOptions) -> Result<f64> {
    check_pair(a, b)?;
    Ok(correlate::<f64>(&lift_all(a), &lift_all(b), opts))
}

fn clamp_squared(d2: f64) -> Result<f64> {
    if d2 >= 0.0 {
        Ok(d2)
    } else if d2 >= -CLAMP_EPS {
        Ok(0.0)
    } else {
        Err(EctError::Numerical(format!("squared distance {d2:e} is negative")))
    }
}

/// `⟨a,a⟩ − 2⟨a,b⟩ + ⟨b,b⟩`, clamped at zero within 1e-9.
pub fn squared_distance(a: &ProtoTransform, b: &ProtoTransform) -> Result<f64> {
    squared_distance_with(a, b, PairOptions::default())
}

/// Total order on transforms by their terms' bit patterns.
fn transform_cmp(a: &ProtoTransform, b: &ProtoTransform) -> std::cmp::Ordering {
    let key = |t: &ProtoTransform| -> Vec<u64> {
        let mut k = vec![t.terms.len() as u64];
        for term in &t.terms {
            k.push(term.gain as u64);
            k.extend(term.anchor.to_array().map(f64::to_bits));
            k.push(term.support.len() as u64);
            for v in term.support.vertices() {
                k.extend(v.to_array().map(f64::to_bits));
            }
        }
        k
    };
    key(a).cmp(&key(b))
}

/// Arguments are evaluated in a canonical order, so the result is exactly
/// symmetric.
pub fn squared_distance_with(a: &ProtoTransform, b: &ProtoTransform, opts: PairOptions) -> Result<f64> {
    let (a, b) = if transform_cmp(a, b).is_gt() { (b, a) } else { (a, b) };
    let aa = inner_product_with(a, a, opts)?;
    let bb = inner_product_with(b, b, opts)?;
    let ab = inner_product_with(a, b, opts)?;
    clamp_squared(aa - 2.0 * ab + bb)
}

pub fn distance(a: &ProtoTransform, b: &ProtoTransform) -> Result<f64> {
    Ok(squared_distance(a, b)?.sqrt())
}

/// Symmetric matrix of pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Fills the upper triangle from `f(i, j)` in parallel and mirrors it.
    pub fn from_pairs(
        labels: Vec<String>,
        f: impl Fn(usize, usize) -> Result<f64> + Sync,
    ) -> Result<DistanceMatrix> {
        let n = labels.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        let d: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| f(i, j))
            .collect::<Result<_>>()?;
        let mut values = vec![vec![0.0; n]; n];
        for (&(i, j), &x) in pairs.iter().zip(&d) {
            values[i][j] = x;
            values[j][i] = x;
        }
        Ok(DistanceMatrix { labels, values })
    }

    /// CSV with a header of labels; each row starts with its label.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(csv_error)?;
        for (label, row) in self.labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|x| format_float(*x)));
            w.write_record(&rec).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| EctError::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| EctError::Internal(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<DistanceMatrix> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut rows = r.records();
        let header = rows
            .next()
            .ok_or_else(|| EctError::parse(1, "empty distance matrix file"))?
            .map_err(|e| EctError::parse(1, e.to_string()))?;
        let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let n = labels.len();
        let mut values = Vec::with_capacity(n);
        for (k, rec) in rows.enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| EctError::parse(line, e.to_string()))?;
            if rec.len() != n + 1 {
                return Err(EctError::parse(line, format!("expected {} fields, got {}", n + 1, rec.len())));
            }
            if rec[0] != labels[k.min(n.saturating_sub(1))] || k >= n {
                return Err(EctError::parse(line, "row label does not match the header"));
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| EctError::parse(line, format!("malformed number `{s}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        if values.len() != n {
            return Err(EctError::parse(n + 1, format!("expected {n} rows, got {}", values.len())));
        }
        Ok(DistanceMatrix { labels, values })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| EctError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EctError::io(path, e))?;
        DistanceMatrix::from_csv(&text)
    }

    /// Entries strictly above the diagonal, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.len();
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| self.values[i][j]).collect()
    }
}

fn csv_error(e: csv::Error) -> EctError {
    EctError::Internal(format!("csv: {e}"))
}

/// 17 significant digits, which round-trips every `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pairwise exact distances; self products are computed once per transform.
pub fn distance_matrix(collection: &[ProtoTransform]) -> Result<DistanceMatrix> {
    distance_matrix_with(collection, PairOptions::default())
}

pub fn distance_matrix_with(collection: &[ProtoTransform], opts: PairOptions) -> Result<DistanceMatrix> {
    if collection.len() < 2 {
        return Err(EctError::Argument("a distance matrix needs at least two transforms".into()));
    }
    let lifted: Vec<Vec<LiftedTerm<f64>>> = collection
        .iter()
        .map(|t| {
            check_pair(t, t)?;
            Ok(lift_all(t))
        })
        .collect::<Result<_>>()?;
    let selfs: Vec<f64> = lifted.iter().map(|l| correlate(l, l, opts)).collect();
    DistanceMatrix::from_pairs(collection.iter().map(|t| t.id.clone()).collect(), |i, j| {
        let ab = correlate(&lifted[i], &lifted[j], opts);
        Ok(clamp_squared(selfs[i] - 2.0 * ab + selfs[j])?.sqrt())
    })
}

/// Pairwise exact distances between planar transforms over heights `[−R, R]`.
pub fn planar_distance_matrix(collection: &[PlanarTransform], radius: f64) -> Result<DistanceMatrix> {
    if collection.len() < 2 {
        return Err(EctError::Argument("a distance matrix needs at least two transforms".into()));
    }
    let selfs: Vec<f64> = collection
        .iter()
        .map(|t| planar_inner_product(t, t, radius))
        .collect::<Result<_>>()?;
    DistanceMatrix::from_pairs(collection.iter().map(|t| t.id.clone()).collect(), |i, j| {
        let ab = planar_inner_product(&collection[i], &collection[j], radius)?;
        Ok(clamp_squared(selfs[i] - 2.0 * ab + selfs[j])?.sqrt())
    })
}

/// ECT sampled on a direction × height grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteEct {
    pub directions: Vec<Vec3>,
    pub heights: Vec<f64>,
    /// `values[d][h]` for direction `d` and height `h`.
    pub values: Vec<Vec<i64>>,
}

/// `n` equally spaced values from −1 to 1 inclusive.
pub fn linspace_heights(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| if i == n - 1 { 1.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Euler characteristics of the sublevel sets at each sorted height of one
/// direction, by sweeping the simplices' entry heights.
pub fn euler_curve(m: &Mesh, v: &Vec3, sorted_heights: &[f64]) -> Vec<i64> {
    let events = m.signed_entry_heights(v);
    let mut out = Vec::with_capacity(sorted_heights.len());
    let mut k = 0;
    let mut chi = 0;
    for &h in sorted_heights {
        while k < events.len() && events[k].0 <= h {
            chi += events[k].1;
            k += 1;
        }
        out.push(chi);
    }
    out
}

pub fn discrete_ect(m: &Mesh, directions: &[Vec3], n_heights: usize) -> Result<DiscreteEct> {
    if n_heights < 2 {
        return Err(EctError::Argument("at least two heights are required".into()));
    }
    discrete_ect_at(m, directions, &linspace_heights(n_heights))
}

/// Discrete ECT on explicit ascending heights.
pub fn discrete_ect_at(m: &Mesh, directions: &[Vec3], heights: &[f64]) -> Result<DiscreteEct> {
    if directions.is_empty() || heights.is_empty() {
        return Err(EctError::Argument("empty direction or height grid".into()));
    }
    if heights.windows(2).any(|w| w[1] < w[0]) {
        return Err(EctError::Argument("heights must be ascending".into()));
    }
    let values = directions.par_iter().map(|v| euler_curve(m, v, heights)).collect();
    Ok(DiscreteEct {
        directions: directions.to_vec(),
        heights: heights.to_vec(),
        values,
    })
}

impl DiscreteEct {
    /// Restriction to the given direction and height indices.
    pub fn subset(&self, dirs: &[usize], heights: &[usize]) -> DiscreteEct {
        DiscreteEct {
            directions: dirs.iter().map(|&d| self.directions[d]).collect(),
            heights: heights.iter().map(|&h| self.heights[h]).collect(),
            values: dirs
                .iter()
                .map(|&d| heights.iter().map(|&h| self.values[d][h]).collect())
                .collect(),
        }
    }

    /// Area-times-height weight of one grid cell.
    pub fn cell_weight(&self) -> f64 {
        (4.0 * std::f64::consts::PI / self.directions.len() as f64) * (2.0 / self.heights.len() as f64)
    }
}

fn check_grids(a: &DiscreteEct, b: &DiscreteEct) -> Result<()> {
    if a.directions != b.directions || a.heights != b.heights {
        return Err(EctError::Argument("discrete transforms use different grids".into()));
    }
    Ok(())
}

fn squared_difference(a: &DiscreteEct, b: &DiscreteEct) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| ((x - y) * (x - y)) as f64))
        .sum()
}

/// Quadrature-weighted L² distance, an approximation of the exact distance.
pub fn discrete_distance(a: &DiscreteEct, b: &DiscreteEct) -> Result<f64> {
    check_grids(a, b)?;
    Ok((squared_difference(a, b) * a.cell_weight()).sqrt())
}

/// Plain Frobenius distance between the value matrices.
pub fn discrete_distance_unweighted(a: &DiscreteEct, b: &DiscreteEct) -> Result<f64> {
    check_grids(a, b)?;
    Ok(squared_difference(a, b).sqrt())
}

pub fn discrete_distance_matrix(labels: Vec<String>, ects: &[DiscreteEct], weighted: bool) -> Result<DistanceMatrix> {
    if ects.len() < 2 || labels.len() != ects.len() {
        return Err(EctError::Argument("need at least two labelled discrete transforms".into()));
    }
    DistanceMatrix::from_pairs(labels, |i, j| {
        if weighted {
            discrete_distance(&ects[i], &ects[j])
        } else {
            discrete_distance_unweighted(&ects[i], &ects[j])
        }
    })
}

/// Pearson correlation of the strictly upper-triangular entries.
pub fn mantel_correlation(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EctError::Argument(format!(
            "matrices have different sizes ({} and {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(EctError::Argument("Mantel correlation needs at least 3 items".into()));
    }
    pearson(&a.upper_triangle(), &b.upper_triangle())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(EctError::Numerical("correlation undefined for constant distances".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One resolution of a subsampling sweep: octahedron level `k` and every
/// `height_stride`-th height counted down from `h = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepLevel {
    pub k: usize,
    pub height_stride: usize,
}

/// 326 × 100, 326 × 50, 38 × 25 and 6 × 10 grids.
pub const DEFAULT_SWEEP: [SweepLevel; 4] = [
    SweepLevel { k: 9, height_stride: 1 },
    SweepLevel { k: 9, height_stride: 2 },
    SweepLevel { k: 3, height_stride: 4 },
    SweepLevel { k: 1, height_stride: 10 },
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub level: SweepLevel,
    pub n_directions: usize,
    pub n_heights: usize,
    pub mantel: f64,
}

/// Indices of `octahedron_directions(k)` inside a finer direction list.
pub fn nested_direction_indices(full: &[Vec3], k: usize) -> Result<Vec<usize>> {
    octahedron_directions(k)?
        .iter()
        .map(|d| {
            full.iter().position(|f| f.max_abs_diff(d) < 1e-12).ok_or_else(|| {
                EctError::Argument(format!("level {k} directions are not nested in the full grid"))
            })
        })
        .collect()
}

/// Height indices kept by a stride, always including the top height.
pub fn strided_height_indices(n: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).filter(|i| (n - 1 - i) % stride.max(1) == 0).collect();
    idx.sort_unstable();
    idx
}

/// Mantel correlation of the exact matrix against subsampled discrete grids.
pub fn discretization_sweep(
    exact: &DistanceMatrix,
    full: &[DiscreteEct],
    levels: &[SweepLevel],
) -> Result<Vec<SweepRow>> {
    let first = full
        .first()
        .ok_or_else(|| EctError::Argument("no discrete transforms".into()))?;
    levels
        .iter()
        .map(|&level| {
            let dirs = nested_direction_indices(&first.directions, level.k)?;
            let hs = strided_height_indices(first.heights.len(), level.height_stride);
            let subs: Vec<DiscreteEct> = full.iter().map(|d| d.subset(&dirs, &hs)).collect();
            let m = discrete_distance_matrix(exact.labels.clone(), &subs, true)?;
            Ok(SweepRow {
                level,
                n_directions: dirs.len(),
                n_heights: hs.len(),
                mantel: mantel_correlation(exact, &m)?,
            })
        })
        .collect()
}
