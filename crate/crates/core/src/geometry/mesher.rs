//! Background-mesh generation.
//!
//! Rectangles get a structured split-cell triangulation. The square-with-hole
//! domain is meshed by Delaunay triangulation of exact boundary rings (hole
//! polygon on the circle, uniform points along the outer square) plus a
//! jittered hexagonal interior lattice, then dropping triangles whose
//! centroid falls in the hole. Boundary chords are Delaunay edges by the
//! interior clearance, so the kept triangles tile the polygonal domain
//! exactly.

use super::delaunay;
use super::{BoundaryEdge, BoundaryTag, GeomError, TriMesh};
use crate::math::Vec2;

/// Interior lattice spacing as a multiple of `h_target`.
const SPACING_FACTOR: f64 = 1.15;
/// Clearance band between boundary points and the interior lattice, in units
/// of the lattice spacing. Must stay above 0.5 so boundary chords keep empty
/// diametral disks and remain Delaunay edges.
const CLEARANCE: f64 = 0.55;
/// Deterministic lattice jitter amplitude in units of the lattice spacing;
/// breaks the cocircular quadruples of the perfect lattice.
const JITTER: f64 = 0.02;
/// Boundary-ring spacing relative to the interior spacing. Denser rings keep
/// the corner diagonals and the boundary seams under the edge-length bound.
const BOUNDARY_FACTOR: f64 = 0.85;
/// Laplacian smoothing passes (with re-triangulation) that relax the seam
/// between the boundary rings and the interior lattice.
const SMOOTH_PASSES: usize = 8;
/// Rotation of the interior lattice relative to the coordinate axes.
const LATTICE_ANGLE: f64 = 0.4363323129985824; // 25 degrees

/// Geometry of the background domain.
#[derive(Clone, Debug)]
pub enum MeshDomain {
    Rectangle { min: Vec2, max: Vec2 },
    /// `[-half_width, half_width]^2` minus the disk of `hole_radius` at the
    /// origin.
    SquareWithHole { half_width: f64, hole_radius: f64 },
}

/// Where the fixed Dirichlet boundary lives on the background mesh.
#[derive(Clone, Debug)]
pub enum Gamma0Spec {
    None,
    /// All hole-boundary edges (square-with-hole domains).
    HoleBoundary,
    /// Horizontal segment `[x0, x1] x {y}` on the rectangle boundary.
    SegmentY { y: f64, x0: f64, x1: f64 },
}

#[derive(Clone, Debug)]
pub struct MeshSpec {
    pub domain: MeshDomain,
    pub gamma0: Gamma0Spec,
}

impl MeshSpec {
    pub fn unit_square_top_gamma0() -> Self {
        MeshSpec {
            domain: MeshDomain::Rectangle {
                min: Vec2::ZERO,
                max: Vec2::new(1.0, 1.0),
            },
            gamma0: Gamma0Spec::SegmentY {
                y: 1.0,
                x0: 0.0,
                x1: 1.0,
            },
        }
    }

    pub fn square_with_hole(half_width: f64, hole_radius: f64) -> Self {
        MeshSpec {
            domain: MeshDomain::SquareWithHole {
                half_width,
                hole_radius,
            },
            gamma0: Gamma0Spec::HoleBoundary,
        }
    }
}

/// Meshes the background domain at the requested resolution.
pub fn generate_background_mesh(spec: &MeshSpec, h_target: f64) -> Result<TriMesh, GeomError> {
    if !(h_target > 0.0) || h_target > 0.5 {
        return Err(GeomError::BadParameter(format!(
            "h_target = {h_target} outside (0, 0.5]"
        )));
    }
    match spec.domain {
        MeshDomain::Rectangle { min, max } => {
            if !(max.x > min.x && max.y > min.y) {
                return Err(GeomError::BadParameter("empty rectangle".into()));
            }
            rectangle_mesh(min, max, h_target, &spec.gamma0)
        }
        MeshDomain::SquareWithHole {
            half_width,
            hole_radius,
        } => {
            if !(hole_radius > 0.0 && half_width > hole_radius) {
                return Err(GeomError::BadParameter("hole does not fit the square".into()));
            }
            if h_target > hole_radius / 2.0 {
                return Err(GeomError::BadParameter(format!(
                    "h_target = {h_target} too coarse for hole radius {hole_radius}"
                )));
            }
            square_with_hole_mesh(half_width, hole_radius, h_target, &spec.gamma0)
        }
    }
}

fn rectangle_mesh(
    min: Vec2,
    max: Vec2,
    h: f64,
    gamma0: &Gamma0Spec,
) -> Result<TriMesh, GeomError> {
    // Cell size <= 1.05 h keeps the diagonal under the 1.5 h edge bound.
    let w = max.x - min.x;
    let hgt = max.y - min.y;
    let nx = ((w / (1.05 * h)).ceil() as usize).max(1);
    let ny = ((hgt / (1.05 * h)).ceil() as usize).max(1);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec2::new(
                min.x + w * (i as f64 / nx as f64),
                min.y + hgt * (j as f64 / ny as f64),
            ));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mut boundary = Vec::new();
    let mut push_edge = |a: usize, b: usize, vertices: &[Vec2]| {
        let mid = (vertices[a] + vertices[b]) * 0.5;
        let tag = match gamma0 {
            Gamma0Spec::SegmentY { y, x0, x1 }
                if (mid.y - y).abs() <= 1e-9 && mid.x >= x0 - 1e-9 && mid.x <= x1 + 1e-9 =>
            {
                BoundaryTag::Gamma0
            }
            _ => BoundaryTag::OuterD,
        };
        boundary.push(BoundaryEdge {
            vertices: [a, b],
            tag,
        });
    };
    for i in 0..nx {
        push_edge(idx(i, 0), idx(i + 1, 0), &vertices);
        push_edge(idx(i, ny), idx(i + 1, ny), &vertices);
    }
    for j in 0..ny {
        push_edge(idx(0, j), idx(0, j + 1), &vertices);
        push_edge(idx(nx, j), idx(nx, j + 1), &vertices);
    }
    TriMesh::new(vertices, triangles, boundary)
}

/// splitmix64; used for the deterministic lattice jitter.
fn hash64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn jitter_pair(i: i64, j: i64) -> (f64, f64) {
    let h = hash64((i as u64).wrapping_mul(0x100000001b3) ^ (j as u64));
    let a = ((h >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
    let h2 = hash64(h ^ 0xdeadbeefcafef00d);
    let b = ((h2 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
    (a, b)
}

fn square_with_hole_mesh(
    w: f64,
    r: f64,
    h: f64,
    gamma0: &Gamma0Spec,
) -> Result<TriMesh, GeomError> {
    let ell = SPACING_FACTOR * h;
    let mut points = Vec::new();

    // Hole ring, exactly on the circle.
    let ell_b = BOUNDARY_FACTOR * ell;
    let n_circle = ((2.0 * std::f64::consts::PI * r) / ell_b).ceil() as usize;
    let n_circle = n_circle.max(8);
    for k in 0..n_circle {
        let phi = 2.0 * std::f64::consts::PI * (k as f64) / (n_circle as f64);
        points.push(Vec2::new(r * phi.cos(), r * phi.sin()));
    }
    let n_hole_pts = points.len();

    // Outer square, corners exact, uniform per side, counterclockwise.
    let m = ((2.0 * w) / ell_b).ceil() as usize;
    let side = |k: usize| -> f64 { -w + 2.0 * w * (k as f64 / m as f64) };
    for k in 0..m {
        points.push(Vec2::new(side(k), -w));
    }
    for k in 0..m {
        points.push(Vec2::new(w, side(k)));
    }
    for k in 0..m {
        points.push(Vec2::new(-side(k), w));
    }
    for k in 0..m {
        points.push(Vec2::new(-w, -side(k)));
    }
    let n_boundary_pts = points.len();

    // Staggered cushion rings one equilateral layer inside each boundary;
    // they participate in smoothing but start the seams in a good state.
    let layer = ell_b * 3f64.sqrt() / 2.0;
    let r_cushion = r + layer;
    let n_cushion = ((2.0 * std::f64::consts::PI * r_cushion) / ell_b).ceil() as usize;
    for k in 0..n_cushion {
        let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / (n_cushion as f64);
        points.push(Vec2::new(r_cushion * phi.cos(), r_cushion * phi.sin()));
    }
    let w_cushion = w - layer;
    let m_c = ((2.0 * w_cushion) / ell_b).ceil() as usize;
    let side_c = |k: usize| -> f64 { -w_cushion + 2.0 * w_cushion * ((k as f64 + 0.5) / m_c as f64) };
    for k in 0..m_c {
        points.push(Vec2::new(side_c(k), -w_cushion));
    }
    for k in 0..m_c {
        points.push(Vec2::new(w_cushion, side_c(k)));
    }
    for k in 0..m_c {
        points.push(Vec2::new(-side_c(k), w_cushion));
    }
    for k in 0..m_c {
        points.push(Vec2::new(-w_cushion, -side_c(k)));
    }

    // Jittered hexagonal interior lattice with clearance from the cushions.
    // The lattice is rotated by a generic angle so that axis-aligned level-set
    // boundaries never run parallel to lattice rows, which would make the
    // centroid-rule staircase error coherent along whole edges.
    let (sin_t, cos_t) = LATTICE_ANGLE.sin_cos();
    let dy = ell * 3f64.sqrt() / 2.0;
    let half_span = w * std::f64::consts::SQRT_2 + ell;
    let j_max = (2.0 * half_span / dy).floor() as i64;
    let i_max = (2.0 * half_span / ell).floor() as i64;
    let clearance = layer + CLEARANCE * ell;
    for j in 0..=j_max {
        let y0 = -half_span + dy * j as f64;
        let x_shift = if j % 2 == 0 { 0.0 } else { 0.5 * ell };
        for i in 0..=i_max {
            let x0 = -half_span + ell * i as f64 + x_shift;
            let (ja, jb) = jitter_pair(i, j);
            let q = Vec2::new(x0 + JITTER * ell * ja, y0 + JITTER * ell * jb);
            let p = Vec2::new(cos_t * q.x - sin_t * q.y, sin_t * q.x + cos_t * q.y);
            let wall = w - p.x.abs().max(p.y.abs());
            let hole = p.norm() - r;
            if wall >= clearance && hole >= clearance {
                points.push(p);
            }
        }
    }

    // Laplacian smoothing with re-triangulation: each interior point moves to
    // the mean of its Delaunay neighbours, clamped to the boundary clearance.
    // This relaxes the lattice/boundary seam below the edge-length bound.
    // Edge-length weights make long edges pull harder, which evens out the
    // seam between the boundary rings and the lattice.
    let clamp_clearance = 0.5 * ell + 1e-9;
    for _ in 0..SMOOTH_PASSES {
        let tris = delaunay::triangulate(&points);
        let mut sum = vec![Vec2::ZERO; points.len()];
        let mut weight = vec![0f64; points.len()];
        let mut seen = std::collections::HashSet::new();
        for t in &tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let e = if a < b { (a, b) } else { (b, a) };
                if seen.insert(e) {
                    sum[a] += points[b];
                    weight[a] += 1.0;
                    sum[b] += points[a];
                    weight[b] += 1.0;
                }
            }
        }
        for v in n_boundary_pts..points.len() {
            if weight[v] == 0.0 {
                continue;
            }
            let mut p = sum[v] * (1.0 / weight[v]);
            // Keep the diametral disks of the boundary chords empty.
            let radius = p.norm();
            if radius < r + clamp_clearance {
                p = p * ((r + clamp_clearance) / radius);
            }
            p.x = p.x.clamp(-(w - clamp_clearance), w - clamp_clearance);
            p.y = p.y.clamp(-(w - clamp_clearance), w - clamp_clearance);
            points[v] = p;
        }
    }

    let raw_triangles = delaunay::triangulate(&points);

    // Keep triangles inside the domain (centroid test; boundary conformity
    // makes this exact).
    let mut kept = Vec::new();
    for t in &raw_triangles {
        let c = (points[t[0]] + points[t[1]] + points[t[2]]) * (1.0 / 3.0);
        let in_hole = c.norm() < r;
        let in_square = c.x.abs() <= w && c.y.abs() <= w;
        if !in_hole && in_square {
            kept.push(*t);
        }
    }

    // Compact vertex reindexing.
    let mut new_index = vec![usize::MAX; points.len()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(kept.len());
    for t in &kept {
        let mut nt = [0usize; 3];
        for (k, &v) in t.iter().enumerate() {
            if new_index[v] == usize::MAX {
                new_index[v] = vertices.len();
                vertices.push(points[v]);
            }
            nt[k] = new_index[v];
        }
        triangles.push(nt);
    }
    let on_circle = |v: usize| v < n_hole_pts;
    let on_square = |v: usize| v >= n_hole_pts && v < n_boundary_pts;
    let mut original = vec![usize::MAX; vertices.len()];
    for (old, &new) in new_index.iter().enumerate() {
        if new != usize::MAX {
            original[new] = old;
        }
    }

    // Boundary edges = edges adjacent to exactly one kept triangle.
    let mut edge_count: std::collections::HashMap<(usize, usize), u32> =
        std::collections::HashMap::new();
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let e = if a < b { (a, b) } else { (b, a) };
            *edge_count.entry(e).or_insert(0) += 1;
        }
    }
    let mut boundary = Vec::new();
    let mut keys: Vec<_> = edge_count
        .iter()
        .filter_map(|(&e, &n)| (n == 1).then_some(e))
        .collect();
    keys.sort_unstable();
    for (a, b) in keys {
        let (oa, ob) = (original[a], original[b]);
        let tag = if on_circle(oa) && on_circle(ob) {
            match gamma0 {
                Gamma0Spec::HoleBoundary => BoundaryTag::Gamma0,
                _ => BoundaryTag::OuterD,
            }
        } else if on_square(oa) && on_square(ob) {
            BoundaryTag::OuterD
        } else {
            return Err(GeomError::InvalidMesh(format!(
                "boundary edge ({a}, {b}) not on the circle or the square"
            )));
        };
        boundary.push(BoundaryEdge {
            vertices: [a, b],
            tag,
        });
    }

    TriMesh::new(vertices, triangles, boundary)
}

/// Area of the regular polygon inscribed in the hole circle; the analytic
/// area of the generated square-with-hole mesh is `4 w^2` minus this.
pub fn inscribed_polygon_area(radius: f64, n_vertices: usize) -> f64 {
    0.5 * n_vertices as f64 * radius * radius * (2.0 * std::f64::consts::PI / n_vertices as f64).sin()
}

/// Number of hole-ring vertices the mesher places at a given resolution.
pub fn hole_ring_count(hole_radius: f64, h_target: f64) -> usize {
    let ell_b = BOUNDARY_FACTOR * SPACING_FACTOR * h_target;
    (((2.0 * std::f64::consts::PI * hole_radius) / ell_b).ceil() as usize).max(8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_resolution_triangle_count() {
        let mesh =
            generate_background_mesh(&MeshSpec::square_with_hole(2.6, 1.0), 0.1).unwrap();
        let n = mesh.n_triangles();
        assert!((2450..=4550).contains(&n), "count {n} outside +-30% of 3500");
        assert!(mesh.max_edge_length() <= 1.5 * 0.1 + 1e-12);
    }

    #[test]
    fn hole_vertices_on_unit_circle() {
        let mesh =
            generate_background_mesh(&MeshSpec::square_with_hole(2.6, 1.0), 0.1).unwrap();
        let n_ring = hole_ring_count(1.0, 0.1);
        let on_circle = mesh
            .vertices()
            .iter()
            .filter(|v| (v.norm() - 1.0).abs() <= 1e-12)
            .count();
        assert_eq!(on_circle, n_ring);
        let n_gamma0 = mesh
            .boundary_edges()
            .iter()
            .filter(|e| e.tag == BoundaryTag::Gamma0)
            .count();
        assert_eq!(n_gamma0, n_ring);
    }

    #[test]
    fn mesh_area_matches_polygon_area() {
        for h in [0.1, 0.05] {
            let mesh =
                generate_background_mesh(&MeshSpec::square_with_hole(2.6, 1.0), h).unwrap();
            let analytic = 5.2 * 5.2 - inscribed_polygon_area(1.0, hole_ring_count(1.0, h));
            let rel = (mesh.total_area() - analytic).abs() / analytic;
            assert!(rel <= 1e-9, "h={h}: relative area defect {rel:e}");
        }
    }

    #[test]
    fn hole_area_converges_to_disk_area() {
        let mesh = generate_background_mesh(&MeshSpec::square_with_hole(2.6, 1.0), 0.05).unwrap();
        let exact = 5.2 * 5.2 - std::f64::consts::PI;
        let rel = (mesh.total_area() - exact).abs() / exact;
        assert!(rel <= 0.002, "area {} vs {exact}: rel {rel}", mesh.total_area());
    }

    #[test]
    fn unit_square_coarse() {
        let mesh = generate_background_mesh(&MeshSpec::unit_square_top_gamma0(), 0.5).unwrap();
        assert!((mesh.total_area() - 1.0).abs() <= 1e-9);
        assert!(mesh.max_edge_length() <= 0.75 + 1e-12);
        // Top edges carry Gamma0, the rest is the outer wall.
        for e in mesh.boundary_edges() {
            let mid = (mesh.vertices()[e.vertices[0]] + mesh.vertices()[e.vertices[1]]) * 0.5;
            if (mid.y - 1.0).abs() < 1e-9 {
                assert_eq!(e.tag, BoundaryTag::Gamma0);
            } else {
                assert_eq!(e.tag, BoundaryTag::OuterD);
            }
        }
    }

    #[test]
    fn rejects_bad_h() {
        assert!(generate_background_mesh(&MeshSpec::unit_square_top_gamma0(), 0.0).is_err());
        assert!(generate_background_mesh(&MeshSpec::unit_square_top_gamma0(), -0.1).is_err());
        assert!(generate_background_mesh(&MeshSpec::unit_square_top_gamma0(), 0.6).is_err());
    }

    #[test]
    fn max_edge_bound_across_resolutions() {
        for h in [0.3, 0.12, 0.06] {
            let mesh =
                generate_background_mesh(&MeshSpec::square_with_hole(2.6, 1.0), h).unwrap();
            assert!(
                mesh.max_edge_length() <= 1.5 * h + 1e-12,
                "h={h}: max edge {}",
                mesh.max_edge_length()
            );
        }
    }
}
