//! Rotational alignment of two transforms by maximizing their inner product
//! over Euler angles `R = R_z(α) R_y(β) R_x(γ)`.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{EctError, Result};
use crate::linalg::Mat3;
use crate::metric::{correlate, format_float, LiftedTerm, PairOptions};
use crate::real::{Dual, Real};
use crate::transform::ProtoTransform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerAngles {
    pub const ZERO: EulerAngles = EulerAngles { alpha: 0.0, beta: 0.0, gamma: 0.0 };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        EulerAngles { alpha, beta, gamma }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        EulerAngles::new(a[0], a[1], a[2])
    }

    /// Representative in `[0,2π) × [0,2π) × [0,π)` of the same rotation.
    pub fn canonical(self) -> Self {
        let mut e = EulerAngles::new(wrap(self.alpha), wrap(self.beta), wrap(self.gamma));
        if e.gamma >= PI {
            e = EulerAngles::new(wrap(e.alpha + PI), wrap(PI - e.beta), wrap(e.gamma - PI));
        }
        e
    }

    pub fn matrix(self) -> Mat3 {
        euler_to_matrix(self)
    }
}

/// Angle in `[0, 2π)`; rounding up to `2π` maps to 0.
fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn euler_to_matrix(e: EulerAngles) -> Mat3 {
    euler_to_matrix_generic(e.alpha, e.beta, e.gamma)
}

pub fn euler_to_matrix_generic<T: Real>(alpha: T, beta: T, gamma: T) -> Mat3<T> {
    Mat3::rot_z(alpha).matmul(&Mat3::rot_y(beta)).matmul(&Mat3::rot_x(gamma))
}

/// Canonical angles of a rotation matrix.
pub fn matrix_to_euler(r: &Mat3) -> EulerAngles {
    let m = &r.m;
    let sb = (-m[2][0]).clamp(-1.0, 1.0);
    let beta = sb.asin();
    let cb = (m[2][1] * m[2][1] + m[2][2] * m[2][2]).sqrt();
    let (alpha, gamma) = if cb > 1e-12 {
        (m[1][0].atan2(m[0][0]), m[2][1].atan2(m[2][2]))
    } else {
        ((-m[0][1]).atan2(m[1][1]), 0.0)
    };
    EulerAngles::new(alpha, beta, gamma).canonical()
}

/// Geodesic angle between two rotations.
pub fn so3_distance(a: &Mat3, b: &Mat3) -> f64 {
    let t = a.matmul(&b.transpose()).trace();
    ((t - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Haar-uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation(seed: u64) -> EulerAngles {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            let [w, x, y, z] = q.map(|c| c / n);
            let r = Mat3 {
                m: [
                    [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
                    [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
                    [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
                ],
            };
            return matrix_to_euler(&r);
        }
    }
}

fn check_pair(x: &ProtoTransform, y: &ProtoTransform) -> Result<()> {
    if x.dimension != 3 || y.dimension != 3 {
        return Err(EctError::Argument("alignment needs two 3D transforms".into()));
    }
    Ok(())
}

/// Precomputed state for repeated evaluation of `e ↦ ⟨x, R(e) y⟩`.
pub struct Aligner {
    x: Vec<LiftedTerm<f64>>,
    y: Vec<LiftedTerm<f64>>,
    opts: PairOptions,
}

impl Aligner {
    pub fn new(x: &ProtoTransform, y: &ProtoTransform) -> Result<Aligner> {
        check_pair(x, y)?;
        Ok(Aligner {
            x: x.terms.iter().map(LiftedTerm::lift).collect(),
            y: y.terms.iter().map(LiftedTerm::lift).collect(),
            opts: PairOptions::default(),
        })
    }

    pub fn with_options(mut self, opts: PairOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn x_len(&self) -> usize {
        self.x.len()
    }

    pub fn objective(&self, e: EulerAngles) -> f64 {
        let r = euler_to_matrix(e);
        let y: Vec<_> = self.y.iter().map(|t| t.rotated(&r)).collect();
        correlate(&self.x, &y, self.opts)
    }

    fn dual_objective(&self, e: EulerAngles, x: &[LiftedTerm<f64>]) -> Dual<3> {
        let r = euler_to_matrix_generic(
            Dual::<3>::variable(e.alpha, 0),
            Dual::variable(e.beta, 1),
            Dual::variable(e.gamma, 2),
        );
        let y: Vec<LiftedTerm<Dual<3>>> = self.y.iter().map(|t| lift_term(t).rotated(&r)).collect();
        let x: Vec<LiftedTerm<Dual<3>>> = x.iter().map(lift_term).collect();
        correlate(&x, &y, self.opts)
    }

    /// Objective value and its gradient in `(α, β, γ)`.
    pub fn value_and_gradient(&self, e: EulerAngles) -> (f64, [f64; 3]) {
        let d = self.dual_objective(e, &self.x);
        (d.re, d.eps)
    }

    pub fn gradient(&self, e: EulerAngles) -> [f64; 3] {
        self.value_and_gradient(e).1
    }

    /// Central differences with step `h` on each angle.
    pub fn finite_difference_gradient(&self, e: EulerAngles, h: f64) -> [f64; 3] {
        let a = e.to_array();
        std::array::from_fn(|i| {
            let mut p = a;
            let mut m = a;
            p[i] += h;
            m[i] -= h;
            (self.objective(EulerAngles::from_array(p)) - self.objective(EulerAngles::from_array(m))) / (2.0 * h)
        })
    }

    /// Unbiased estimate from the rows of `x` listed in `batch`.
    pub fn stochastic_gradient(&self, e: EulerAngles, batch: &[usize]) -> Result<[f64; 3]> {
        if batch.is_empty() {
            return Err(EctError::Argument("empty gradient batch".into()));
        }
        let sub = batch
            .iter()
            .map(|&i| {
                self.x.get(i).cloned().ok_or_else(|| {
                    EctError::Argument(format!("batch index {i} out of range for {} terms", self.x.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = self.x.len() as f64 / batch.len() as f64;
        Ok(self.dual_objective(e, &sub).eps.map(|g| g * scale))
    }
}

fn lift_term<T: Real>(t: &LiftedTerm<f64>) -> LiftedTerm<T> {
    LiftedTerm {
        gain: t.gain,
        anchor: crate::linalg::Vec3::lift(t.anchor),
        support: crate::sphere::SphericalPolygon::lift(&t.support),
        cap: t.cap,
    }
}

/// `⟨x, R(e) y⟩`.
pub fn alignment_objective(x: &ProtoTransform, y: &ProtoTransform, e: EulerAngles) -> Result<f64> {
    Ok(Aligner::new(x, y)?.objective(e))
}

pub fn objective_gradient(x: &ProtoTransform, y: &ProtoTransform, e: EulerAngles) -> Result<[f64; 3]> {
    Ok(Aligner::new(x, y)?.gradient(e))
}

/// Step used to cross-check the exact gradient.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative disagreement with finite differences.
pub const FD_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckedGradient {
    pub gradient: [f64; 3],
    pub finite_difference: [f64; 3],
    pub relative_error: f64,
    /// False when the two disagree, which marks a non-smooth point.
    pub smooth: bool,
}

fn norm3(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖g − f‖ / ‖f‖`, with absolute error when `f` vanishes.
pub fn relative_error(g: &[f64; 3], f: &[f64; 3]) -> f64 {
    let diff = [g[0] - f[0], g[1] - f[1], g[2] - f[2]];
    let scale = norm3(f);
    if scale > 1e-8 {
        norm3(&diff) / scale
    } else {
        norm3(&diff)
    }
}

pub fn checked_gradient(aligner: &Aligner, e: EulerAngles) -> CheckedGradient {
    let gradient = aligner.gradient(e);
    let finite_difference = aligner.finite_difference_gradient(e, FD_STEP);
    let relative_error = relative_error(&gradient, &finite_difference);
    CheckedGradient {
        gradient,
        finite_difference,
        relative_error,
        smooth: relative_error <= FD_TOLERANCE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub angles: EulerAngles,
    pub objective: f64,
    pub so3_distance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub rows: Vec<TraceRow>,
    /// Set when the run stopped because the gradient vanished at the start.
    pub zero_gradient_at_start: bool,
}

impl SearchTrace {
    fn push(&mut self, iteration: usize, angles: EulerAngles, objective: f64, truth: Option<&Mat3>) {
        self.rows.push(TraceRow {
            iteration,
            angles,
            objective,
            so3_distance: truth.map(|t| so3_distance(&euler_to_matrix(angles), t)),
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,alpha,beta,gamma,objective,so3_distance\n");
        for r in &self.rows {
            let d = r.so3_distance.map(format_float).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                format_float(r.angles.alpha),
                format_float(r.angles.beta),
                format_float(r.angles.gamma),
                format_float(r.objective),
                d
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| EctError::io(path, e))
    }
}

/// Coarse grid: α, β ∈ {0, π/4, …, 7π/4}, γ ∈ {0, π/4, …, π}.
pub fn initial_grid() -> Vec<EulerAngles> {
    let mut out = Vec::with_capacity(320);
    for i in 0..8 {
        for j in 0..8 {
            for k in 0..5 {
                out.push(EulerAngles::new(
                    i as f64 * FRAC_PI_4,
                    j as f64 * FRAC_PI_4,
                    k as f64 * FRAC_PI_4,
                ));
            }
        }
    }
    out
}

/// `c ± Δ/4` and `c ± 3Δ/4` on every axis.
pub fn refinement_grid(c: EulerAngles, delta: f64) -> Vec<EulerAngles> {
    let offsets = [-0.75 * delta, -0.25 * delta, 0.25 * delta, 0.75 * delta];
    let mut out = Vec::with_capacity(64);
    for da in offsets {
        for db in offsets {
            for dg in offsets {
                out.push(EulerAngles::new(c.alpha + da, c.beta + db, c.gamma + dg));
            }
        }
    }
    out
}

/// Best point by objective; ties keep the earliest.
fn argmax(points: &[EulerAngles], values: &[f64]) -> (EulerAngles, f64) {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    (points[best], values[best])
}

/// Coarse-to-fine search; each refinement is centered on the best point so
/// far and the spacing halves. The trace holds the running best.
pub fn adaptive_grid_search(
    aligner: &Aligner,
    iters: usize,
    truth: Option<&Mat3>,
) -> Result<(EulerAngles, SearchTrace)> {
    if iters == 0 {
        return Err(EctError::Argument("grid search needs at least one iteration".into()));
    }
    let mut trace = SearchTrace::default();
    let mut points = initial_grid();
    let mut delta = FRAC_PI_4;
    let mut best: Option<(EulerAngles, f64)> = None;
    for it in 1..=iters {
        let values: Vec<f64> = points.par_iter().map(|e| aligner.objective(*e)).collect();
        let (p, v) = argmax(&points, &values);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((p, v));
        }
        let (c, v) = best.expect("grid is nonempty");
        trace.push(it, c.canonical(), v, truth);
        points = refinement_grid(c, delta);
        delta *= 0.5;
    }
    let (c, _) = best.expect("grid is nonempty");
    Ok((c.canonical(), trace))
}

/// Piecewise-constant step sizes for normalized gradient ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `(last iteration, rate)` pairs in increasing order of iteration.
    pub phases: Vec<(usize, f64)>,
    pub final_rate: f64,
    pub max_iters: usize,
}

impl Default for Schedule {
    /// Rate 1 for iterations 1–30, 0.1 for 31–50, 0.01 afterwards.
    fn default() -> Self {
        Schedule {
            phases: vec![(30, 1.0), (50, 0.1)],
            final_rate: 0.01,
            max_iters: 70,
        }
    }
}

impl Schedule {
    /// Small steps for refining an already close start.
    pub fn warm_start() -> Self {
        Schedule {
            phases: vec![(20, 0.01), (40, 0.003)],
            final_rate: 0.001,
            max_iters: 60,
        }
    }

    pub fn rate(&self, iteration: usize) -> f64 {
        self.phases
            .iter()
            .find(|(last, _)| iteration <= *last)
            .map(|(_, r)| *r)
            .unwrap_or(self.final_rate)
    }
}

/// Stop once the gradient norm falls below this.
pub const GRADIENT_STOP: f64 = 1e-8;

/// Normalized gradient ascent returning the best point visited.
/// Row 0 of the trace is the start.
pub fn gradient_ascent(
    aligner: &Aligner,
    e0: EulerAngles,
    schedule: &Schedule,
    truth: Option<&Mat3>,
) -> (EulerAngles, SearchTrace) {
    gradient_ascent_with(e0, schedule, truth, |e| Ok(aligner.value_and_gradient(e)))
        .expect("exact gradient is infallible")
}

/// Gradient ascent driven by `step`, which returns the objective and an
/// ascent direction at a point.
pub fn gradient_ascent_with(
    e0: EulerAngles,
    schedule: &Schedule,
    truth: Option<&Mat3>,
    mut step: impl FnMut(EulerAngles) -> Result<(f64, [f64; 3])>,
) -> Result<(EulerAngles, SearchTrace)> {
    let mut trace = SearchTrace::default();
    let mut e = e0;
    let mut best = (e0, f64::NEG_INFINITY);
    for it in 0..=schedule.max_iters {
        let (v, g) = step(e)?;
        trace.push(it, e.canonical(), v, truth);
        if v > best.1 {
            best = (e, v);
        }
        let n = norm3(&g);
        if n < GRADIENT_STOP {
            trace.zero_gradient_at_start = it == 0;
            break;
        }
        if it == schedule.max_iters {
            break;
        }
        let rate = schedule.rate(it + 1) / n;
        e = EulerAngles::new(e.alpha + rate * g[0], e.beta + rate * g[1], e.gamma + rate * g[2]);
    }
    Ok((best.0.canonical(), trace))
}

/// Gradient estimate from a subset of `x`'s terms.
pub fn stochastic_gradient_step(aligner: &Aligner, e: EulerAngles, batch: &[usize]) -> Result<[f64; 3]> {
    aligner.stochastic_gradient(e, batch)
}
