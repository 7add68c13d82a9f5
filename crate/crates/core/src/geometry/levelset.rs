//! Nodal level-set fields on the background mesh: the working domain is the
//! negativity set, triangles are assigned by the sign of the centroid value.

use super::sdf::{eval_sdf, SignedDistanceExpr};
use super::{BoundaryEdge, BoundaryTag, GeomError, TriMesh};
use crate::math::Vec2;
use std::collections::HashMap;
use std::sync::Arc;

/// Scalar level-set field; the domain is `{phi < 0}`.
#[derive(Clone)]
pub struct LevelSetField {
    mesh: Arc<TriMesh>,
    phi: Vec<f64>,
}

impl LevelSetField {
    pub fn new(mesh: Arc<TriMesh>, phi: Vec<f64>) -> Self {
        assert_eq!(phi.len(), mesh.n_vertices());
        assert!(phi.iter().all(|v| v.is_finite()), "level set must be finite");
        LevelSetField { mesh, phi }
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn shifted(&self, c: f64) -> LevelSetField {
        LevelSetField::new(
            self.mesh.clone(),
            self.phi.iter().map(|&v| v - c).collect(),
        )
    }

    pub fn with_values(&self, phi: Vec<f64>) -> LevelSetField {
        LevelSetField::new(self.mesh.clone(), phi)
    }
}

/// Samples a signed-distance expression at the mesh vertices.
pub fn init_levelset(mesh: &Arc<TriMesh>, expr: &SignedDistanceExpr) -> LevelSetField {
    let phi = mesh.vertices().iter().map(|&v| eval_sdf(expr, v)).collect();
    LevelSetField::new(mesh.clone(), phi)
}

/// Area of `{phi < shift}` under the centroid-sign rule; nondecreasing in
/// `shift`, and a centroid value of exactly `shift` counts as outside.
pub fn measure_region(ls: &LevelSetField, shift: f64) -> f64 {
    let mesh = ls.mesh();
    let mut area = 0.0;
    for t in 0..mesh.n_triangles() {
        if mesh.centroid_value(t, ls.phi()) - shift < 0.0 {
            area += mesh.area(t);
        }
    }
    area
}

/// Shifts the level set by the constant that matches the target volume.
///
/// Bisection on the shift; the bracket is doubled until it straddles the
/// target (`NoBracket` after 200 doublings). The returned field satisfies
/// `|measure - target| <= 1e-3 * target` up to the discrete one-triangle
/// granularity of the centroid rule.
pub fn volume_correct(ls: &LevelSetField, v_target: f64) -> Result<LevelSetField, GeomError> {
    let total = ls.mesh().total_area();
    if !(v_target > 0.0 && v_target < total) {
        return Err(GeomError::BadParameter(format!(
            "volume target {v_target} outside (0, {total})"
        )));
    }
    let tol = 1e-3 * v_target;
    let scale = ls
        .phi()
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-9);
    let mut lo = -scale / 64.0;
    let mut hi = scale / 64.0;
    let mut expansions = 0;
    while measure_region(ls, lo) > v_target {
        lo *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(GeomError::NoBracket);
        }
    }
    while measure_region(ls, hi) < v_target {
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(GeomError::NoBracket);
        }
    }
    let mut best_c = 0.0;
    let mut best_err = f64::INFINITY;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = measure_region(ls, mid);
        let err = (m - v_target).abs();
        if err < best_err {
            best_err = err;
            best_c = mid;
        }
        if err <= tol {
            break;
        }
        if m < v_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ls.shifted(best_c))
}

/// Zero-contour segments from sign-changing triangles (linear interpolation
/// along edges).
pub fn extract_interface(ls: &LevelSetField) -> Result<Vec<[Vec2; 2]>, GeomError> {
    let mesh = ls.mesh();
    let phi = ls.phi();
    let mut segments = Vec::new();
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let mut pts: Vec<Vec2> = Vec::with_capacity(2);
        let push_unique = |p: Vec2, pts: &mut Vec<Vec2>| {
            if pts.iter().all(|q| q.dist(p) > 1e-14) {
                pts.push(p);
            }
        };
        for k in 0..3 {
            if phi[tri[k]] == 0.0 {
                push_unique(mesh.vertices()[tri[k]], &mut pts);
            }
        }
        for k in 0..3 {
            let (i, j) = (tri[k], tri[(k + 1) % 3]);
            if phi[i] * phi[j] < 0.0 {
                let t_cross = phi[i] / (phi[i] - phi[j]);
                let p = mesh.vertices()[i] + (mesh.vertices()[j] - mesh.vertices()[i]) * t_cross;
                push_unique(p, &mut pts);
            }
        }
        if pts.len() >= 2 {
            segments.push([pts[0], pts[1]]);
        }
    }
    if segments.is_empty() {
        return Err(GeomError::NoInterface);
    }
    Ok(segments)
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Rebuilds the field as signed distance to the extracted interface. The sign
/// pattern at every vertex is preserved exactly.
pub fn reinitialize(ls: &LevelSetField) -> Result<LevelSetField, GeomError> {
    let segments = extract_interface(ls)?;
    let mesh = ls.mesh();
    let mut phi = Vec::with_capacity(mesh.n_vertices());
    for (v, &old) in ls.phi().iter().enumerate() {
        let p = mesh.vertices()[v];
        let mut d = f64::INFINITY;
        for s in &segments {
            d = d.min(point_segment_distance(p, s[0], s[1]));
        }
        phi.push(if old < 0.0 { -d } else { d });
    }
    Ok(ls.with_values(phi))
}

/// Active submesh of `{phi < 0}` with index maps back to the background mesh.
pub struct Submesh {
    pub mesh: Arc<TriMesh>,
    /// Submesh triangle -> background triangle.
    pub tri_parent: Vec<usize>,
    /// Submesh vertex -> background vertex.
    pub vtx_parent: Vec<usize>,
    /// Background vertex -> submesh vertex.
    pub parent_vtx: Vec<Option<usize>>,
    /// Background triangle -> submesh triangle.
    pub parent_tri: Vec<Option<usize>>,
}

/// Extracts the triangles whose centroid value is strictly negative and tags
/// the free boundary through the `q1`/`q2` point predicates (Gamma0 tags are
/// inherited from the background mesh).
pub fn extract_submesh(
    ls: &LevelSetField,
    q1: &dyn Fn(Vec2) -> bool,
    q2: &dyn Fn(Vec2) -> bool,
) -> Result<Submesh, GeomError> {
    let mesh = ls.mesh();
    let phi = ls.phi();
    let keep: Vec<bool> = (0..mesh.n_triangles())
        .map(|t| mesh.centroid_value(t, phi) < 0.0)
        .collect();
    if !keep.iter().any(|&k| k) {
        return Err(GeomError::EmptyDomain);
    }

    // Ownership map of background boundary edges for the Gamma0 check.
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let e = if a < b { (a, b) } else { (b, a) };
            owner.entry(e).and_modify(|_| {}).or_insert(t);
        }
    }
    let mut background_tag: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
    for be in mesh.boundary_edges() {
        let (a, b) = (be.vertices[0], be.vertices[1]);
        let e = if a < b { (a, b) } else { (b, a) };
        background_tag.insert(e, be.tag);
        if be.tag == BoundaryTag::Gamma0 {
            let t = owner[&e];
            if !keep[t] {
                return Err(GeomError::DetachedGamma0(t));
            }
        }
    }

    let mut parent_vtx = vec![None; mesh.n_vertices()];
    let mut parent_tri = vec![None; mesh.n_triangles()];
    let mut vertices = Vec::new();
    let mut vtx_parent = Vec::new();
    let mut triangles = Vec::new();
    let mut tri_parent = Vec::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !keep[t] {
            continue;
        }
        let mut nt = [0usize; 3];
        for (k, &v) in tri.iter().enumerate() {
            let nv = *parent_vtx[v].get_or_insert_with(|| {
                vertices.push(mesh.vertices()[v]);
                vtx_parent.push(v);
                vertices.len() - 1
            });
            nt[k] = nv;
        }
        parent_tri[t] = Some(triangles.len());
        triangles.push(nt);
        tri_parent.push(t);
    }

    // Free-boundary tagging.
    let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
    for tri in &triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let e = if a < b { (a, b) } else { (b, a) };
            *edge_count.entry(e).or_insert(0) += 1;
        }
    }
    let mut keys: Vec<_> = edge_count
        .iter()
        .filter_map(|(&e, &n)| (n == 1).then_some(e))
        .collect();
    keys.sort_unstable();
    let mut boundary = Vec::new();
    for (a, b) in keys {
        let (pa, pb) = (vtx_parent[a], vtx_parent[b]);
        let e = if pa < pb { (pa, pb) } else { (pb, pa) };
        let inherited = background_tag.get(&e).copied();
        let tag = if inherited == Some(BoundaryTag::Gamma0) {
            BoundaryTag::Gamma0
        } else {
            let mid = (vertices[a] + vertices[b]) * 0.5;
            if q1(mid) {
                BoundaryTag::Gamma1
            } else if q2(mid) {
                BoundaryTag::Gamma2
            } else {
                return Err(GeomError::UntaggedBoundary(mid.x, mid.y));
            }
        };
        boundary.push(BoundaryEdge {
            vertices: [a, b],
            tag,
        });
    }

    let submesh = TriMesh::new(vertices, triangles, boundary)?;
    Ok(Submesh {
        mesh: Arc::new(submesh),
        tri_parent,
        vtx_parent,
        parent_vtx,
        parent_tri,
    })
}
