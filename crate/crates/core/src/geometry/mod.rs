//! Triangulated background domain, level-set machinery and submesh extraction.

mod delaunay;
pub mod levelset;
pub mod mesher;
pub mod sdf;

pub use levelset::{
    extract_interface, extract_submesh, init_levelset, measure_region, reinitialize,
    volume_correct, LevelSetField, Submesh,
};
pub use mesher::{generate_background_mesh, Gamma0Spec, MeshDomain, MeshSpec};
pub use sdf::{eval_sdf, SignedDistanceExpr};

use crate::math::{triangle_area, Vec2};
use std::collections::HashMap;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid mesh parameter: {0}")]
    BadParameter(String),
    #[error("mesh invariant violated: {0}")]
    InvalidMesh(String),
    #[error("no triangle lies inside the level-set region")]
    EmptyDomain,
    #[error("a Gamma0 edge is not on the submesh boundary (triangle {0} excluded)")]
    DetachedGamma0(usize),
    #[error("free boundary edge at ({0:.6}, {1:.6}) satisfies neither Q1 nor Q2")]
    UntaggedBoundary(f64, f64),
    #[error("level set has uniform sign, no interface to extract")]
    NoInterface,
    #[error("volume-correction bisection could not bracket the target")]
    NoBracket,
}

/// Boundary-edge classification.
///
/// `Gamma0` is the fixed Dirichlet boundary, `Gamma1`/`Gamma2` are the free
/// Dirichlet/Neumann parts assigned during submesh extraction, and `OuterD`
/// marks the outer wall of the background domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Gamma0,
    Gamma1,
    Gamma2,
    OuterD,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Conforming triangulation with tagged boundary edges.
///
/// Immutable after construction; all per-triangle P1 quantities (areas, hat
/// gradients) are precomputed, and a bucket grid for point location is built
/// lazily.
#[derive(Debug)]
pub struct TriMesh {
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    areas: Vec<f64>,
    /// Gradient of the hat function of local vertex `i` on each triangle.
    hat_gradients: Vec<[Vec2; 3]>,
    locator: OnceLock<BucketGrid>,
}

impl TriMesh {
    /// Builds a mesh and checks the structural invariants: strictly positive
    /// triangle areas, edge-manifold connectivity and a boundary-edge list
    /// that exactly covers the topological boundary with one tag per edge.
    pub fn new(
        vertices: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self, GeomError> {
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        let mut hat_gradients = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(GeomError::InvalidMesh(format!(
                        "triangle {t} references vertex {v} out of {nv}"
                    )));
                }
            }
            let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let area = triangle_area(a, b, c);
            if area <= 0.0 {
                return Err(GeomError::InvalidMesh(format!(
                    "triangle {t} has non-positive area {area:e}"
                )));
            }
            // grad of hat_i = perp(edge opposite i) / (2 area), oriented inward.
            let g = [
                (c - b).perp() * (0.5 / area),
                (a - c).perp() * (0.5 / area),
                (b - a).perp() * (0.5 / area),
            ];
            areas.push(area);
            hat_gradients.push(g);
        }

        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let e = ordered(tri[k], tri[(k + 1) % 3]);
                *edge_count.entry(e).or_insert(0) += 1;
            }
        }
        if let Some((e, n)) = edge_count.iter().find(|(_, &n)| n > 2) {
            return Err(GeomError::InvalidMesh(format!(
                "edge {e:?} shared by {n} triangles"
            )));
        }
        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for be in &boundary_edges {
            let e = ordered(be.vertices[0], be.vertices[1]);
            if tagged.insert(e, be.tag).is_some() {
                return Err(GeomError::InvalidMesh(format!(
                    "boundary edge {e:?} tagged twice"
                )));
            }
            if edge_count.get(&e) != Some(&1) {
                return Err(GeomError::InvalidMesh(format!(
                    "tagged edge {e:?} is not a topological boundary edge"
                )));
            }
        }
        let n_boundary = edge_count.values().filter(|&&n| n == 1).count();
        if n_boundary != boundary_edges.len() {
            return Err(GeomError::InvalidMesh(format!(
                "{} boundary edges but {} tags",
                n_boundary,
                boundary_edges.len()
            )));
        }

        Ok(TriMesh {
            vertices,
            triangles,
            boundary_edges,
            areas,
            hat_gradients,
            locator: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, tri: usize) -> f64 {
        self.areas[tri]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn hat_gradients(&self, tri: usize) -> &[Vec2; 3] {
        &self.hat_gradients[tri]
    }

    pub fn centroid(&self, tri: usize) -> Vec2 {
        let [a, b, c] = self.triangle_points(tri);
        (a + b + c) * (1.0 / 3.0)
    }

    pub fn triangle_points(&self, tri: usize) -> [Vec2; 3] {
        let t = self.triangles[tri];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
        ]
    }

    /// P1 gradient of a nodal field on a triangle.
    pub fn field_gradient(&self, tri: usize, nodal: &[f64]) -> Vec2 {
        let t = self.triangles[tri];
        let g = &self.hat_gradients[tri];
        g[0] * nodal[t[0]] + g[1] * nodal[t[1]] + g[2] * nodal[t[2]]
    }

    /// Mean of nodal values at the triangle vertices (the P1 centroid value).
    pub fn centroid_value(&self, tri: usize, nodal: &[f64]) -> f64 {
        let t = self.triangles[tri];
        (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) / 3.0
    }

    pub fn mean_edge_length(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if a < b {
                    sum += self.vertices[a].dist(self.vertices[b]);
                    n += 1;
                }
            }
        }
        sum / n.max(1) as f64
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut m: f64 = 0.0;
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                m = m.max(self.vertices[a].dist(self.vertices[b]));
            }
        }
        m
    }

    /// Vertices touched by boundary edges carrying the given tag.
    pub fn tagged_vertices(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut flags = vec![false; self.n_vertices()];
        for be in &self.boundary_edges {
            if be.tag == tag {
                flags[be.vertices[0]] = true;
                flags[be.vertices[1]] = true;
            }
        }
        flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    /// Locates the triangle containing a point.
    ///
    /// Returns the triangle index and barycentric coordinates; points on
    /// shared edges resolve to the lowest adjacent triangle index. `None`
    /// means the point lies outside the mesh.
    pub fn locate_point(&self, p: Vec2) -> Option<(usize, [f64; 3])> {
        let grid = self.locator.get_or_init(|| BucketGrid::build(self));
        let candidates = grid.candidates(p)?;
        for &t in candidates {
            if let Some(bary) = self.barycentric_inside(t as usize, p) {
                return Some((t as usize, bary));
            }
        }
        None
    }

    fn barycentric_inside(&self, tri: usize, p: Vec2) -> Option<[f64; 3]> {
        let [a, b, c] = self.triangle_points(tri);
        let area = self.areas[tri];
        let la = triangle_area(p, b, c) / area;
        let lb = triangle_area(a, p, c) / area;
        let lc = triangle_area(a, b, p) / area;
        let tol = -1e-12;
        if la >= tol && lb >= tol && lc >= tol {
            let la = la.clamp(0.0, 1.0);
            let lb = lb.clamp(0.0, 1.0);
            let lc = lc.clamp(0.0, 1.0);
            let s = la + lb + lc;
            Some([la / s, lb / s, lc / s])
        } else {
            None
        }
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Uniform bucket grid over triangle bounding boxes. Candidate lists are kept
/// in ascending triangle order so the first hit honours the lowest-index tie
/// rule.
#[derive(Debug)]
struct BucketGrid {
    min: Vec2,
    max: Vec2,
    nx: usize,
    ny: usize,
    cell: f64,
    buckets: Vec<Vec<u32>>,
}

impl BucketGrid {
    fn build(mesh: &TriMesh) -> BucketGrid {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in mesh.vertices() {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        let extent = (max.x - min.x).max(max.y - min.y).max(1e-12);
        let target = ((mesh.n_triangles() as f64 / 2.0).sqrt() as usize).clamp(1, 512);
        let cell = extent / target as f64;
        let nx = (((max.x - min.x) / cell).ceil() as usize).max(1);
        let ny = (((max.y - min.y) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for t in 0..mesh.n_triangles() {
            let pts = mesh.triangle_points(t);
            let (mut lo, mut hi) = (pts[0], pts[0]);
            for p in &pts[1..] {
                lo.x = lo.x.min(p.x);
                lo.y = lo.y.min(p.y);
                hi.x = hi.x.max(p.x);
                hi.y = hi.y.max(p.y);
            }
            let i0 = (((lo.x - min.x) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let i1 = (((hi.x - min.x) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let j0 = (((lo.y - min.y) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            let j1 = (((hi.y - min.y) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t as u32);
                }
            }
        }
        BucketGrid {
            min,
            max,
            nx,
            ny,
            cell,
            buckets,
        }
    }

    fn candidates(&self, p: Vec2) -> Option<&[u32]> {
        if p.x < self.min.x - 1e-12
            || p.y < self.min.y - 1e-12
            || p.x > self.max.x + 1e-12
            || p.y > self.max.y + 1e-12
        {
            return None;
        }
        let i = (((p.x - self.min.x) / self.cell).floor() as isize).clamp(0, self.nx as isize - 1)
            as usize;
        let j = (((p.y - self.min.y) / self.cell).floor() as isize).clamp(0, self.ny as isize - 1)
            as usize;
        Some(&self.buckets[j * self.nx + i])
    }
}
