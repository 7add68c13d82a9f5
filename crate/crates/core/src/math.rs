//! Small fixed-size linear algebra for planar problems.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A point or vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Counterclockwise rotation by 90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// z-component of the cross product `self x other`.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// General (not necessarily symmetric) 2x2 matrix, row major.
/// Used for displacement-field Jacobians.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Mat2 {
            m: [[m00, m01], [m10, m11]],
        }
    }

    /// Jacobian of the field `x -> a * basis_x(x) + b * basis_y(x)` given the
    /// gradient rows: entry (i,j) = d psi_i / d x_j.
    pub fn from_rows(r0: Vec2, r1: Vec2) -> Self {
        Mat2::new(r0.x, r0.y, r1.x, r1.y)
    }

    pub fn trace(self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn transpose(self) -> Mat2 {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    pub fn mul_mat(self, o: Mat2) -> Mat2 {
        let mut r = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        Mat2 { m: r }
    }
}

/// Symmetric 2x2 matrix stored as its three independent entries.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymMat2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat2 {
    pub const ZERO: SymMat2 = SymMat2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        SymMat2 { xx, xy, yy }
    }

    pub fn identity() -> Self {
        SymMat2::new(1.0, 0.0, 1.0)
    }

    pub fn isotropic(c: f64) -> Self {
        SymMat2::new(c, 0.0, c)
    }

    /// Symmetric part of the outer product `a (x) b`.
    pub fn sym_outer(a: Vec2, b: Vec2) -> Self {
        SymMat2::new(a.x * b.x, 0.5 * (a.x * b.y + a.y * b.x), a.y * b.y)
    }

    pub fn scale(self, s: f64) -> SymMat2 {
        SymMat2::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn add(self, o: SymMat2) -> SymMat2 {
        SymMat2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    pub fn trace(self) -> f64 {
        self.xx + self.yy
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    /// Full contraction A : B (off-diagonal counted twice).
    pub fn ddot(self, o: SymMat2) -> f64 {
        self.xx * o.xx + 2.0 * self.xy * o.xy + self.yy * o.yy
    }

    pub fn frobenius_norm(self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn to_mat(self) -> Mat2 {
        Mat2::new(self.xx, self.xy, self.xy, self.yy)
    }

    /// Eigenvalues sorted descending.
    pub fn eigenvalues(self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let delta = 0.5 * (self.xx - self.yy);
        let r = delta.hypot(self.xy);
        (mean + r, mean - r)
    }

    /// Spectral decomposition: eigenvalues sorted descending with unit
    /// eigenvectors. When the matrix is (numerically) a multiple of the
    /// identity the eigenvectors are the coordinate axes, which keeps
    /// downstream constructions deterministic.
    pub fn eigen_decomposition(self) -> Eigen2 {
        let delta = 0.5 * (self.xx - self.yy);
        let r = delta.hypot(self.xy);
        let scale = self.xx.abs().max(self.yy.abs()).max(self.xy.abs());
        if r <= 1e-14 * scale.max(1e-300) || r == 0.0 {
            let mean = 0.5 * (self.xx + self.yy);
            return Eigen2 {
                values: (mean, mean),
                vectors: (Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)),
            };
        }
        let mean = 0.5 * (self.xx + self.yy);
        let (l1, l2) = (mean + r, mean - r);
        // Eigenvector for the larger eigenvalue; pick the better-conditioned
        // column of (A - l2 I).
        let c1 = Vec2::new(self.xx - l2, self.xy);
        let c2 = Vec2::new(self.xy, self.yy - l2);
        let mut v1 = if c1.norm_sq() >= c2.norm_sq() { c1 } else { c2 };
        let n = v1.norm();
        v1 = v1 * (1.0 / n);
        // Deterministic sign: first nonzero component positive.
        if v1.x < 0.0 || (v1.x == 0.0 && v1.y < 0.0) {
            v1 = -v1;
        }
        let v2 = v1.perp();
        Eigen2 {
            values: (l1, l2),
            vectors: (v1, v2),
        }
    }

    /// Reassembles `R diag(l1, l2) R^T` from an eigenbasis.
    pub fn from_eigen(values: (f64, f64), vectors: (Vec2, Vec2)) -> SymMat2 {
        let (l1, l2) = values;
        let (v1, v2) = vectors;
        SymMat2::new(
            l1 * v1.x * v1.x + l2 * v2.x * v2.x,
            l1 * v1.x * v1.y + l2 * v2.x * v2.y,
            l1 * v1.y * v1.y + l2 * v2.y * v2.y,
        )
    }
}

/// Area-weighted triangle quantities used all over the P1 machinery.
pub fn triangle_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * (b - a).cross(c - a)
}


/// Result of [`SymMat2::eigen_decomposition`].
#[derive(Clone, Copy, Debug)]
pub struct Eigen2 {
    /// `(l1, l2)` with `l1 >= l2`.
    pub values: (f64, f64),
    /// Orthonormal eigenvectors matching `values`.
    pub vectors: (Vec2, Vec2),
}
