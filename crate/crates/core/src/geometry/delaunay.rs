//! Incremental Bowyer-Watson Delaunay triangulation.
//!
//! Input point sets come from the mesher: exact boundary rings plus a jittered
//! interior lattice, so the generic-position assumptions hold with wide
//! margins. Points exactly on a circumcircle count as outside, which keeps
//! cavity computation consistent for the cocircular hole-boundary points.

use crate::math::Vec2;
use std::collections::HashMap;

struct Tri {
    v: [usize; 3],
    circumcenter: Vec2,
    radius_sq: f64,
    alive: bool,
}

fn circumcircle(a: Vec2, b: Vec2, c: Vec2) -> (Vec2, f64) {
    let bb = b - a;
    let cc = c - a;
    let d = 2.0 * bb.cross(cc);
    debug_assert!(d != 0.0, "degenerate triangle in Delaunay construction");
    let b2 = bb.norm_sq();
    let c2 = cc.norm_sq();
    let u = Vec2::new((cc.y * b2 - bb.y * c2) / d, (bb.x * c2 - cc.x * b2) / d);
    (a + u, u.norm_sq())
}

/// Triangulates the given points; returns CCW triangles indexing into `points`.
pub fn triangulate(points: &[Vec2]) -> Vec<[usize; 3]> {
    assert!(points.len() >= 3);
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let extent = (max.x - min.x).max(max.y - min.y).max(1.0);
    let mid = (min + max) * 0.5;
    let n = points.len();
    // Super triangle well clear of the data.
    let sup = [
        mid + Vec2::new(-20.0 * extent, -10.0 * extent),
        mid + Vec2::new(20.0 * extent, -10.0 * extent),
        mid + Vec2::new(0.0, 25.0 * extent),
    ];
    let coord = |i: usize| -> Vec2 {
        if i < n {
            points[i]
        } else {
            sup[i - n]
        }
    };

    let mut tris: Vec<Tri> = Vec::with_capacity(2 * n + 16);
    let (cc, rr) = circumcircle(sup[0], sup[1], sup[2]);
    tris.push(Tri {
        v: [n, n + 1, n + 2],
        circumcenter: cc,
        radius_sq: rr,
        alive: true,
    });

    let mut bad: Vec<usize> = Vec::new();
    let mut cavity: Vec<(usize, usize)> = Vec::new();
    let mut edge_seen: HashMap<(usize, usize), bool> = HashMap::new();

    for p_idx in 0..n {
        let p = points[p_idx];
        bad.clear();
        for (t, tri) in tris.iter().enumerate() {
            if tri.alive {
                let d = (p - tri.circumcenter).norm_sq();
                // Strictly inside with a relative margin: cocircular points
                // do not enter the cavity.
                if d < tri.radius_sq * (1.0 - 1e-12) {
                    bad.push(t);
                }
            }
        }
        debug_assert!(!bad.is_empty(), "point outside all circumcircles");

        // Directed cavity boundary: edges of bad triangles whose reverse is
        // not an edge of another bad triangle.
        edge_seen.clear();
        for &t in &bad {
            let v = tris[t].v;
            for k in 0..3 {
                let e = (v[k], v[(k + 1) % 3]);
                edge_seen.insert(e, true);
            }
        }
        cavity.clear();
        for &t in &bad {
            let v = tris[t].v;
            for k in 0..3 {
                let e = (v[k], v[(k + 1) % 3]);
                if !edge_seen.contains_key(&(e.1, e.0)) {
                    cavity.push(e);
                }
            }
            tris[t].alive = false;
        }
        for &(a, b) in &cavity {
            let (pa, pb) = (coord(a), coord(b));
            let (cc, rr) = circumcircle(pa, pb, p);
            tris.push(Tri {
                v: [a, b, p_idx],
                circumcenter: cc,
                radius_sq: rr,
                alive: true,
            });
        }
    }

    tris.iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| t.v)
        .collect()
}
