//! Small fixed-size vector and matrix types, generic over [`Real`].

use std::ops::{Add, Mul, Neg, Sub};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn lift(v: Vec3<f64>) -> Self {
        Vec3::new(T::from_f64(v.x), T::from_f64(v.y), T::from_f64(v.z))
    }

    #[inline]
    pub fn value(&self) -> Vec3<f64> {
        Vec3::new(self.x.value(), self.y.value(), self.z.value())
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn scaled(&self, k: T) -> Self {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }

    /// Unit vector in the same direction. The caller guarantees a non-zero norm.
    #[inline]
    pub fn normalized(&self) -> Self {
        let inv = T::from_f64(1.0) / self.norm();
        self.scaled(inv)
    }

    /// Angle between two non-zero vectors, stable near 0 and π.
    #[inline]
    pub fn angle_to(&self, o: &Self) -> T {
        self.cross(o).norm().atan2(self.dot(o))
    }
}

impl Vec3<f64> {
    pub const E1: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const E2: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const E3: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        (self.x - o.x)
            .abs()
            .max((self.y - o.y).abs())
            .max((self.z - o.z).abs())
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<Vec3<f64>> for f64 {
    type Output = Vec3<f64>;
    #[inline]
    fn mul(self, v: Vec3<f64>) -> Vec3<f64> {
        v.scaled(self)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T = f64> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let o = T::from_f64(1.0);
        let z = T::zero();
        Mat3 {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn rot_x(t: T) -> Self {
        let (c, s) = (t.cos(), t.sin());
        let o = T::from_f64(1.0);
        let z = T::zero();
        Mat3 {
            m: [[o, z, z], [z, c, -s], [z, s, c]],
        }
    }

    pub fn rot_y(t: T) -> Self {
        let (c, s) = (t.cos(), t.sin());
        let o = T::from_f64(1.0);
        let z = T::zero();
        Mat3 {
            m: [[c, z, s], [z, o, z], [-s, z, c]],
        }
    }

    pub fn rot_z(t: T) -> Self {
        let (c, s) = (t.cos(), t.sin());
        let o = T::from_f64(1.0);
        let z = T::zero();
        Mat3 {
            m: [[c, -s, z], [s, c, z], [z, z, o]],
        }
    }

    pub fn lift(a: &Mat3<f64>) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = T::from_f64(a.m[i][j]);
            }
        }
        Mat3 { m }
    }

    pub fn value(&self) -> Mat3<f64> {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = self.m[i][j].value();
            }
        }
        Mat3 { m }
    }

    #[inline]
    pub fn apply(&self, v: &Vec3<T>) -> Vec3<T> {
        let r = &self.m;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn transpose(&self) -> Self {
        let mut m = self.m;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.m[j][i];
            }
        }
        Mat3 { m }
    }

    pub fn matmul(&self, o: &Self) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Mat3 { m }
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn determinant(&self) -> T {
        let r = &self.m;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }
}

impl Mat3<f64> {
    /// Rotation by `angle` about the unit `axis` (Rodrigues).
    pub fn axis_angle(axis: Vec3, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let Vec3 { x, y, z } = axis;
        Mat3 {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.m[i][j] - o.m[i][j]).abs());
            }
        }
        worst
    }

    /// Largest entry of `M Mᵀ − I` in absolute value.
    pub fn orthogonality_defect(&self) -> f64 {
        let p = self.matmul(&self.transpose());
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.m[i][j] - target).abs());
            }
        }
        worst
    }

    /// A rotation taking unit vector `from` onto unit vector `to`.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Self {
        let axis = from.cross(&to);
        let s = axis.norm();
        let c = from.dot(&to);
        if s < 1e-15 {
            if c > 0.0 {
                return Mat3::identity();
            }
            // Half turn about any axis orthogonal to `from`.
            let helper = if from.x.abs() < 0.9 { Vec3::E1 } else { Vec3::E2 };
            let perp = from.cross(&helper).normalized();
            return Mat3::axis_angle(perp, std::f64::consts::PI);
        }
        Mat3::axis_angle(axis.scaled(1.0 / s), s.atan2(c))
    }
}
