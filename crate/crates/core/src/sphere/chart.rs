//! Height integrals through the azimuth/latitude chart.
//!
//! With `v = (cos τ cos φ, cos τ sin φ, sin τ)`, the integrand `(p·v) cos τ`
//! is the exterior derivative of
//! `ω = (¼ sin τ_p cos 2τ − ¼ cos τ_p sin 2τ cos(φ−φ_p) − ½ cos τ_p τ cos(φ−φ_p)) dφ`,
//! so the integral over a polygon is a sum of edge integrals of `ω`. A
//! non-polar great circle is the graph `tan τ = a cos(φ − φ0)`, which turns
//! each edge integral into one-dimensional closed forms.
//!
//! The chart is valid away from the poles and the seam `φ = 0`. Pieces are
//! kept inside a cap of radius below 1.2 rad and rotated so the cap center is
//! `(−1, 0, 0)`, which keeps them clear of both.

use std::f64::consts::TAU;

use crate::error::{EctError, Result};
use crate::linalg::{Mat3, Vec3};

use super::{bounding_cap, clip_halfspace, SphericalPolygon};

const MAX_PIECE_RADIUS: f64 = 1.2;
const SMALL_SLOPE: f64 = 1e-2;

/// `∫_p (anchor·v) dσ` evaluated edge by edge in spherical coordinates.
pub fn integrate_height_chart(p: &SphericalPolygon, anchor: &Vec3) -> Result<f64> {
    let scale = anchor.norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let dir = anchor.scaled(1.0 / scale);
    let mut total = 0.0;
    for piece in chart_pieces(p)? {
        let cap = bounding_cap(&piece);
        let r = Mat3::rotation_between(cap.center, -Vec3::E1);
        let q = piece.rotated(&r);
        let d = r.apply(&dir);
        total += polygon_integral(&q, &d)?;
    }
    Ok(scale * total)
}

/// Splits `p` along the coordinate planes when it is too wide for one chart.
fn chart_pieces(p: &SphericalPolygon) -> Result<Vec<SphericalPolygon>> {
    if bounding_cap(p).radius <= MAX_PIECE_RADIUS {
        return Ok(vec![p.clone()]);
    }
    let mut pieces = vec![p.clone()];
    for axis in [Vec3::E1, Vec3::E2, Vec3::E3] {
        let mut next = Vec::new();
        for piece in &pieces {
            next.extend(clip_halfspace(piece, &axis));
            next.extend(clip_halfspace(piece, &(-axis)));
        }
        pieces = next;
    }
    for piece in &pieces {
        let r = bounding_cap(piece).radius;
        if r > 1.4 {
            return Err(EctError::Internal(format!(
                "chart piece of angular radius {r} cannot avoid the poles"
            )));
        }
    }
    Ok(pieces)
}

fn azimuth(v: &Vec3) -> f64 {
    let phi = v.y.atan2(v.x);
    if phi < 0.0 {
        phi + TAU
    } else {
        phi
    }
}

fn polygon_integral(q: &SphericalPolygon, dir: &Vec3) -> Result<f64> {
    let tau_i = dir.z.clamp(-1.0, 1.0).asin();
    let phi_i = dir.y.atan2(dir.x);
    let (sin_ti, cos_ti) = tau_i.sin_cos();
    let verts = q.vertices();
    let n = verts.len();
    let mut total = 0.0;
    for k in 0..n {
        let (a, b) = (verts[k], verts[(k + 1) % n]);
        for (x, y) in split_wide_edge(a, b) {
            if x.z.abs() > 1.0 - 1e-8 || y.z.abs() > 1.0 - 1e-8 {
                return Err(EctError::Internal("chart edge touches a pole".into()));
            }
            total += edge_integral(&x, &y, sin_ti, cos_ti, phi_i);
        }
    }
    Ok(total)
}

/// Halves edges until each spans less than a quarter turn of azimuth.
fn split_wide_edge(a: Vec3, b: Vec3) -> Vec<(Vec3, Vec3)> {
    let d = (azimuth(&b) - azimuth(&a)).abs();
    if d < std::f64::consts::FRAC_PI_2 {
        return vec![(a, b)];
    }
    let m = (a + b).normalized();
    let mut out = split_wide_edge(a, m);
    out.extend(split_wide_edge(m, b));
    out
}

/// `∫` of the 1-form along the minor arc from `p` to `q`.
fn edge_integral(p: &Vec3, q: &Vec3, sin_ti: f64, cos_ti: f64, phi_i: f64) -> f64 {
    let phi_p = azimuth(p);
    let phi_q = azimuth(q);
    let du = phi_q - phi_p;
    if du.abs() < 1e-15 {
        return 0.0;
    }
    let nrm = p.cross(q);
    let rho = nrm.x.hypot(nrm.y);
    if nrm.z.abs() <= 1e-15 * rho {
        return 0.0;
    }
    let a = -rho / nrm.z;
    let phi0 = nrm.y.atan2(nrm.x);
    let (u1, u2) = (phi_p - phi0, phi_q - phi0);
    let (s1, c1) = u1.sin_cos();
    let (s2, c2) = u2.sin_cos();

    // F(u) = atan(tan u / s) / s with s = √(1 + a²), so F' = 1 / (1 + a² cos² u).
    let s = (1.0 + a * a).sqrt();
    let d_f = (s * du.sin()).atan2(s * s * c1 * c2 + s1 * s2) / s;

    let i1 = -du + 2.0 * d_f;

    // g = ∫ a cos² u / (1 + a² cos² u) du
    let g = if a.abs() < SMALL_SLOPE {
        let a2 = a * a;
        a * (cos_pow_integral(2, u2) - cos_pow_integral(2, u1))
            - a * a2 * (cos_pow_integral(4, u2) - cos_pow_integral(4, u1))
            + a * a2 * a2 * (cos_pow_integral(6, u2) - cos_pow_integral(6, u1))
    } else {
        (du - d_f) / a
    };
    // l(w) = ln(1 + a² w²) / a
    let l = |w: f64| {
        if a.abs() < SMALL_SLOPE {
            let aw2 = a * w * w;
            let t = a * aw2 * w * w;
            aw2 - a * t / 2.0 + a * a * a * t * w * w / 3.0
        } else {
            (a * a * w * w).ln_1p() / a
        }
    };

    let delta = phi0 - phi_i;
    let (sd, cd) = delta.sin_cos();
    let i2 = 2.0 * cd * g + sd * (l(c2) - l(c1));

    let big_a = (s2 * (a * c2).atan() - s1 * (a * c1).atan()) + a * d_f - g;
    let prim_b = |w: f64| w * (a * w).atan() - l(w) / 2.0;
    let big_b = -(prim_b(c2) - prim_b(c1));
    let i3 = cd * big_a - sd * big_b;

    0.25 * sin_ti * i1 - 0.25 * cos_ti * i2 - 0.5 * cos_ti * i3
}

/// Antiderivative of `cos^k u` for `k ∈ {2, 4, 6}`.
fn cos_pow_integral(k: u32, u: f64) -> f64 {
    let (s2, s4, s6) = ((2.0 * u).sin(), (4.0 * u).sin(), (6.0 * u).sin());
    match k {
        2 => u / 2.0 + s2 / 4.0,
        4 => 3.0 * u / 8.0 + s2 / 4.0 + s4 / 32.0,
        6 => 5.0 * u / 16.0 + 15.0 * s2 / 64.0 + 3.0 * s4 / 64.0 + s6 / 192.0,
        _ => unreachable!("unsupported power"),
    }
}
