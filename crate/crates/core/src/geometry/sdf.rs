//! Closed signed-distance expressions over a few primitives.
//!
//! Primitives evaluate the exact signed distance. Composites (min/max/negate)
//! give a conservative signed-distance bound with the correct sign everywhere,
//! which is all the level-set initialisation needs.

use crate::math::Vec2;

/// CSG tree of signed-distance primitives; negative inside.
#[derive(Clone, Debug)]
pub enum SignedDistanceExpr {
    /// Half plane `{ x : n . x <= offset }` with `n` a unit normal.
    HalfPlane { normal: Vec2, offset: f64 },
    /// Axis-aligned box `[min.x, max.x] x [min.y, max.y]`.
    Box { min: Vec2, max: Vec2 },
    Disk { center: Vec2, radius: f64 },
    Union(Box<SignedDistanceExpr>, Box<SignedDistanceExpr>),
    Intersection(Box<SignedDistanceExpr>, Box<SignedDistanceExpr>),
    Complement(Box<SignedDistanceExpr>),
}

impl SignedDistanceExpr {
    pub fn disk(center: Vec2, radius: f64) -> Self {
        SignedDistanceExpr::Disk { center, radius }
    }

    pub fn rect(min: Vec2, max: Vec2) -> Self {
        SignedDistanceExpr::Box { min, max }
    }

    pub fn union(a: SignedDistanceExpr, b: SignedDistanceExpr) -> Self {
        SignedDistanceExpr::Union(Box::new(a), Box::new(b))
    }

    pub fn intersection(a: SignedDistanceExpr, b: SignedDistanceExpr) -> Self {
        SignedDistanceExpr::Intersection(Box::new(a), Box::new(b))
    }

    pub fn complement(a: SignedDistanceExpr) -> Self {
        SignedDistanceExpr::Complement(Box::new(a))
    }

    /// `a` minus `b`.
    pub fn difference(a: SignedDistanceExpr, b: SignedDistanceExpr) -> Self {
        Self::intersection(a, Self::complement(b))
    }
}

/// Evaluates the expression at a point; negative inside the described set.
pub fn eval_sdf(expr: &SignedDistanceExpr, p: Vec2) -> f64 {
    match expr {
        SignedDistanceExpr::HalfPlane { normal, offset } => normal.dot(p) - offset,
        SignedDistanceExpr::Box { min, max } => {
            let cx = 0.5 * (min.x + max.x);
            let cy = 0.5 * (min.y + max.y);
            let hx = 0.5 * (max.x - min.x);
            let hy = 0.5 * (max.y - min.y);
            let dx = (p.x - cx).abs() - hx;
            let dy = (p.y - cy).abs() - hy;
            if dx > 0.0 || dy > 0.0 {
                Vec2::new(dx.max(0.0), dy.max(0.0)).norm()
            } else {
                dx.max(dy)
            }
        }
        SignedDistanceExpr::Disk { center, radius } => p.dist(*center) - radius,
        SignedDistanceExpr::Union(a, b) => eval_sdf(a, p).min(eval_sdf(b, p)),
        SignedDistanceExpr::Intersection(a, b) => eval_sdf(a, p).max(eval_sdf(b, p)),
        SignedDistanceExpr::Complement(a) => -eval_sdf(a, p),
    }
}
