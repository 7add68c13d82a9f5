//! P1 finite elements for the multi-state diffusion system, its adjoint, and
//! the cost functional.
//!
//! Quadrature conventions: the stiffness integral is exact for per-triangle
//! constant tensors; loads and cost integrals use vertex-lumped quadrature
//! (one point per vertex, weight area/3). The adjoint right-hand side uses
//! the same lumped rule, so the discrete adjoint is exactly the transpose
//! sensitivity of the discrete objective.

pub mod sparse;

use crate::geometry::{BoundaryTag, TriMesh};
use crate::math::{SymMat2, Vec2};
use sparse::{pcg, CsrMatrix};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("triangle {0} has near-zero area {1:e}")]
    SingularElement(usize, f64),
    #[error("no Dirichlet boundary: the state problem is ill-posed")]
    NoDirichletBoundary,
    #[error("solver stalled at relative residual {0:e} after {1} iterations")]
    SolverDivergence(f64, usize),
}

pub type ScalarFn = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
pub type PredicateFn = Arc<dyn Fn(Vec2) -> bool + Send + Sync>;
pub type CostFn = Arc<dyn Fn(Vec2, &[f64]) -> f64 + Send + Sync>;
pub type CostDuFn = Arc<dyn Fn(Vec2, &[f64], usize) -> f64 + Send + Sync>;
pub type CostGradXFn = Arc<dyn Fn(Vec2, &[f64]) -> Vec2 + Send + Sync>;

/// Data of one state equation: source term, its spatial gradient (analytic),
/// and the fixed-boundary values.
#[derive(Clone)]
pub struct StateData {
    pub source: ScalarFn,
    pub source_gradient: VectorFn,
    pub dirichlet: ScalarFn,
}

/// One phase cost integrand g(x, u) with its u-derivatives and x-gradient.
#[derive(Clone)]
pub struct CostIntegrand {
    pub value: CostFn,
    pub du: CostDuFn,
    pub grad_x: CostGradXFn,
}

impl CostIntegrand {
    pub fn zero() -> Self {
        CostIntegrand {
            value: Arc::new(|_, _| 0.0),
            du: Arc::new(|_, _, _| 0.0),
            grad_x: Arc::new(|_, _| Vec2::ZERO),
        }
    }
}

/// Full problem description: conductivities, constraint levels, states, cost
/// integrands, and the point predicates that split the free boundary into
/// Dirichlet (Q1) and Neumann (Q2) parts.
#[derive(Clone)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub beta: f64,
    /// Target domain measure |Omega|.
    pub volume: f64,
    /// Prescribed amount of the alpha phase.
    pub q_alpha: f64,
    pub states: Vec<StateData>,
    pub g_alpha: CostIntegrand,
    pub g_beta: CostIntegrand,
    pub q1: PredicateFn,
    pub q2: PredicateFn,
}

impl ProblemSpec {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn validate(&self) {
        assert!(
            0.0 < self.alpha && self.alpha < self.beta,
            "conductivities must satisfy 0 < alpha < beta"
        );
        assert!(
            0.0 < self.q_alpha && self.q_alpha < self.volume,
            "phase quantity must lie in (0, V)"
        );
        assert!(!self.states.is_empty());
    }
}

/// Per-triangle symmetric conductivity tensors.
#[derive(Clone, Debug)]
pub struct TensorField {
    values: Vec<SymMat2>,
}

impl TensorField {
    pub fn new(values: Vec<SymMat2>) -> Self {
        TensorField { values }
    }

    pub fn isotropic(n: usize, c: f64) -> Self {
        TensorField {
            values: vec![SymMat2::isotropic(c); n],
        }
    }

    pub fn values(&self) -> &[SymMat2] {
        &self.values
    }

    pub fn get(&self, tri: usize) -> SymMat2 {
        self.values[tri]
    }

    pub fn set(&mut self, tri: usize, a: SymMat2) {
        self.values[tri] = a;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Eigenvalues of every tensor must lie in `[alpha, beta]` up to `tol`.
    pub fn check_bounds(&self, alpha: f64, beta: f64, tol: f64) -> bool {
        self.values.iter().all(|a| {
            let (l1, l2) = a.eigenvalues();
            l2 >= alpha - tol && l1 <= beta + tol
        })
    }
}

/// Nodal states and adjoints on the active mesh.
#[derive(Clone, Debug)]
pub struct StateSolution {
    pub u: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

/// Assembled stiffness matrix over all mesh vertices (no constraints applied).
pub struct StiffnessMatrix {
    pub matrix: CsrMatrix,
}

/// Entry (i, j) = sum over shared triangles of area * (A grad hat_i) . grad
/// hat_j; exact for P1 with per-triangle constant A.
pub fn assemble_stiffness(mesh: &TriMesh, a: &TensorField) -> Result<StiffnessMatrix, FemError> {
    assert_eq!(a.len(), mesh.n_triangles());
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let area = mesh.area(t);
        if area < 1e-14 {
            return Err(FemError::SingularElement(t, area));
        }
        let tri = mesh.triangles()[t];
        let grads = mesh.hat_gradients(t);
        let tensor = a.get(t);
        for i in 0..3 {
            let agi = tensor.mul_vec(grads[i]);
            for j in 0..3 {
                triplets.push((tri[i] as u32, tri[j] as u32, area * agi.dot(grads[j])));
            }
        }
    }
    Ok(StiffnessMatrix {
        matrix: CsrMatrix::from_triplets(mesh.n_vertices(), triplets),
    })
}

/// Vertex-lumped load vector: b_v = sum over triangles at v of area/3 * f(x_v).
pub fn lumped_load(mesh: &TriMesh, f: &dyn Fn(Vec2) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let w = mesh.area(t) / 3.0;
        for &v in &mesh.triangles()[t] {
            b[v] += w * f(mesh.vertices()[v]);
        }
    }
    b
}

/// Dirichlet data per vertex (`None` = free). Gamma1 zeros take precedence
/// over Gamma0 values at junction vertices.
pub fn dirichlet_values(mesh: &TriMesh, h: Option<&ScalarFn>) -> Vec<Option<f64>> {
    let mut values = vec![None; mesh.n_vertices()];
    for be in mesh.boundary_edges() {
        if be.tag == BoundaryTag::Gamma0 {
            for &v in &be.vertices {
                values[v] = Some(match h {
                    Some(f) => f(mesh.vertices()[v]),
                    None => 0.0,
                });
            }
        }
    }
    for be in mesh.boundary_edges() {
        if be.tag == BoundaryTag::Gamma1 {
            for &v in &be.vertices {
                values[v] = Some(0.0);
            }
        }
    }
    values
}

/// Stiffness matrix reduced by symmetric elimination of constrained vertices.
pub struct ReducedSystem {
    pub free: Vec<usize>,
    pub index_of: Vec<Option<usize>>,
    pub reduced: CsrMatrix,
}

impl ReducedSystem {
    pub fn new(stiffness: &StiffnessMatrix, constrained: &[Option<f64>]) -> ReducedSystem {
        let n = stiffness.matrix.n;
        let mut index_of = vec![None; n];
        let mut free = Vec::new();
        for v in 0..n {
            if constrained[v].is_none() {
                index_of[v] = Some(free.len());
                free.push(v);
            }
        }
        let k = &stiffness.matrix;
        let mut triplets = Vec::new();
        for (ri, &v) in free.iter().enumerate() {
            for idx in k.row_ptr[v]..k.row_ptr[v + 1] {
                let c = k.cols[idx];
                if let Some(cj) = index_of[c] {
                    triplets.push((ri as u32, cj as u32, k.vals[idx]));
                }
            }
        }
        let reduced = CsrMatrix::from_triplets(free.len(), triplets);
        ReducedSystem {
            free,
            index_of,
            reduced,
        }
    }

    /// Moves known Dirichlet columns to the right-hand side.
    pub fn reduce_rhs(
        &self,
        stiffness: &StiffnessMatrix,
        b: &[f64],
        constrained: &[Option<f64>],
    ) -> Vec<f64> {
        let k = &stiffness.matrix;
        let mut rhs = Vec::with_capacity(self.free.len());
        for &v in &self.free {
            let mut acc = b[v];
            for idx in k.row_ptr[v]..k.row_ptr[v + 1] {
                if let Some(g) = constrained[k.cols[idx]] {
                    acc -= k.vals[idx] * g;
                }
            }
            rhs.push(acc);
        }
        rhs
    }

    /// CG solve of the reduced system; iterates toward 1e-13 and accepts any
    /// residual at or below 1e-10 relative.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        let n = self.reduced.n;
        if n == 0 {
            return Ok(Vec::new());
        }
        let max_iter = 20 * (n as f64).sqrt().ceil() as usize;
        let (x, report) = pcg(&self.reduced, rhs, 1e-13, max_iter.max(50));
        if report.residual > 1e-10 {
            return Err(FemError::SolverDivergence(report.residual, report.iterations));
        }
        Ok(x)
    }

    pub fn expand(&self, x_free: &[f64], constrained: &[Option<f64>]) -> Vec<f64> {
        let mut full = vec![0.0; constrained.len()];
        for (v, c) in constrained.iter().enumerate() {
            full[v] = match c {
                Some(g) => *g,
                None => x_free[self.index_of[v].unwrap()],
            };
        }
        full
    }
}

fn require_dirichlet(mesh: &TriMesh) -> Result<(), FemError> {
    let has = mesh
        .boundary_edges()
        .iter()
        .any(|e| matches!(e.tag, BoundaryTag::Gamma0 | BoundaryTag::Gamma1));
    if has {
        Ok(())
    } else {
        Err(FemError::NoDirichletBoundary)
    }
}

/// Solves the state system for every right-hand side: u_i = h_i on Gamma0,
/// u_i = 0 on Gamma1, natural condition on Gamma2.
pub fn solve_state(
    mesh: &TriMesh,
    a: &TensorField,
    spec: &ProblemSpec,
) -> Result<Vec<Vec<f64>>, FemError> {
    require_dirichlet(mesh)?;
    let stiffness = assemble_stiffness(mesh, a)?;
    let mut solutions = Vec::with_capacity(spec.n_states());
    for state in &spec.states {
        let constrained = dirichlet_values(mesh, Some(&state.dirichlet));
        let system = ReducedSystem::new(&stiffness, &constrained);
        let b = lumped_load(mesh, &*state.source);
        let rhs = system.reduce_rhs(&stiffness, &b, &constrained);
        let x = system.solve(&rhs)?;
        solutions.push(system.expand(&x, &constrained));
    }
    Ok(solutions)
}

/// Collects the nodal state vector (u_1(v), ..., u_m(v)).
pub fn state_at_vertex(u: &[Vec<f64>], v: usize) -> Vec<f64> {
    u.iter().map(|ui| ui[v]).collect()
}

/// Adjoint right-hand side density at a vertex for state `i`:
/// theta dgA/du_i + (1 - theta) dgB/du_i, lumped over incident triangles.
pub fn adjoint_load(
    mesh: &TriMesh,
    theta: &[f64],
    u: &[Vec<f64>],
    spec: &ProblemSpec,
    state_index: usize,
) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_vertices()];
    let u_at: Vec<Vec<f64>> = (0..mesh.n_vertices())
        .map(|v| state_at_vertex(u, v))
        .collect();
    for t in 0..mesh.n_triangles() {
        let w = mesh.area(t) / 3.0;
        let th = theta[t];
        for &v in &mesh.triangles()[t] {
            let x = mesh.vertices()[v];
            let ga = (spec.g_alpha.du)(x, &u_at[v], state_index);
            let gb = (spec.g_beta.du)(x, &u_at[v], state_index);
            b[v] += w * (th * ga + (1.0 - th) * gb);
        }
    }
    b
}

/// Solves the adjoint systems; p_i vanishes on Gamma0 and Gamma1.
pub fn solve_adjoint(
    mesh: &TriMesh,
    a: &TensorField,
    theta: &[f64],
    u: &[Vec<f64>],
    spec: &ProblemSpec,
) -> Result<Vec<Vec<f64>>, FemError> {
    require_dirichlet(mesh)?;
    let stiffness = assemble_stiffness(mesh, a)?;
    let constrained = dirichlet_values(mesh, None);
    let system = ReducedSystem::new(&stiffness, &constrained);
    let mut adjoints = Vec::with_capacity(spec.n_states());
    for i in 0..spec.n_states() {
        let b = adjoint_load(mesh, theta, u, spec, i);
        let rhs = system.reduce_rhs(&stiffness, &b, &constrained);
        let x = system.solve(&rhs)?;
        adjoints.push(system.expand(&x, &constrained));
    }
    Ok(adjoints)
}

/// Per-triangle M = Sym sum_i grad u_i (x) grad p_i with P1 gradients.
pub fn compute_m(mesh: &TriMesh, u: &[Vec<f64>], p: &[Vec<f64>]) -> Vec<SymMat2> {
    let mut m = vec![SymMat2::ZERO; mesh.n_triangles()];
    for t in 0..mesh.n_triangles() {
        let mut acc = SymMat2::ZERO;
        for (ui, pi) in u.iter().zip(p) {
            let gu = mesh.field_gradient(t, ui);
            let gp = mesh.field_gradient(t, pi);
            acc = acc.add(SymMat2::sym_outer(gu, gp));
        }
        m[t] = acc;
    }
    m
}

/// Relaxed objective: integral of theta gA(x, u) + (1 - theta) gB(x, u),
/// vertex-lumped, summed in ascending triangle order.
pub fn evaluate_objective(mesh: &TriMesh, theta: &[f64], u: &[Vec<f64>], spec: &ProblemSpec) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let w = mesh.area(t) / 3.0;
        let th = theta[t];
        for &v in &mesh.triangles()[t] {
            let x = mesh.vertices()[v];
            let uv = state_at_vertex(u, v);
            total += w * (th * (spec.g_alpha.value)(x, &uv) + (1.0 - th) * (spec.g_beta.value)(x, &uv));
        }
    }
    total
}

/// Gateaux derivative of the objective in the design direction
/// (delta_theta, delta_a):
/// integral of delta_theta (gA - gB) minus sum_i delta_a grad u_i . grad p_i.
pub fn evaluate_design_variation(
    mesh: &TriMesh,
    u: &[Vec<f64>],
    p: &[Vec<f64>],
    spec: &ProblemSpec,
    delta_theta: &[f64],
    delta_a: &[SymMat2],
) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let w = mesh.area(t) / 3.0;
        for &v in &mesh.triangles()[t] {
            let x = mesh.vertices()[v];
            let uv = state_at_vertex(u, v);
            total +=
                w * delta_theta[t] * ((spec.g_alpha.value)(x, &uv) - (spec.g_beta.value)(x, &uv));
        }
        let mut grad_term = 0.0;
        for (ui, pi) in u.iter().zip(p) {
            let gu = mesh.field_gradient(t, ui);
            let gp = mesh.field_gradient(t, pi);
            grad_term += delta_a[t].mul_vec(gu).dot(gp);
        }
        total -= mesh.area(t) * grad_term;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        extract_submesh, generate_background_mesh, BoundaryEdge, Gamma0Spec, LevelSetField,
        MeshDomain, MeshSpec,
    };
    use std::f64::consts::PI;

    fn one_triangle() -> TriMesh {
        let vertices = vec![Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let boundary = [(0, 1), (1, 2), (2, 0)]
            .iter()
            .map(|&(a, b)| BoundaryEdge {
                vertices: [a, b],
                tag: BoundaryTag::OuterD,
            })
            .collect();
        TriMesh::new(vertices, vec![[0, 1, 2]], boundary).unwrap()
    }

    #[test]
    fn local_stiffness_unit_right_triangle() {
        let mesh = one_triangle();
        let k = assemble_stiffness(&mesh, &TensorField::isotropic(1, 1.0)).unwrap();
        let expect = [
            [1.0, -0.5, -0.5],
            [-0.5, 0.5, 0.0],
            [-0.5, 0.0, 0.5],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (k.matrix.get(i, j) - expect[i][j]).abs() <= 1e-14,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn stiffness_scales_linearly_in_tensor() {
        let mesh = one_triangle();
        let k1 = assemble_stiffness(&mesh, &TensorField::isotropic(1, 1.0)).unwrap();
        let k3 = assemble_stiffness(&mesh, &TensorField::isotropic(1, 3.0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(3.0 * k1.matrix.get(i, j), k3.matrix.get(i, j));
            }
        }
    }

    #[test]
    fn stiffness_symmetric_for_anisotropic_tensor() {
        let mesh = rectangle_mesh(0.21);
        let n = mesh.n_triangles();
        let mut field = TensorField::isotropic(n, 1.0);
        for t in 0..n {
            let s = (t % 7) as f64 / 7.0;
            field.set(t, SymMat2::new(1.0 + s, 0.3 * s, 1.5 - 0.4 * s));
        }
        let k = assemble_stiffness(&mesh, &field).unwrap();
        assert!(k.matrix.symmetry_defect() <= 1e-12);
        for i in 0..mesh.n_vertices() {
            assert!(k.matrix.get(i, i) >= 0.0);
        }
    }

    fn rectangle_mesh(h: f64) -> TriMesh {
        generate_background_mesh(&MeshSpec::unit_square_top_gamma0(), h).unwrap()
    }

    fn fourier_spec() -> ProblemSpec {
        ProblemSpec {
            alpha: 0.5,
            beta: 2.0,
            volume: 1.0,
            q_alpha: 0.5,
            states: vec![StateData {
                source: Arc::new(|_| 0.0),
                source_gradient: Arc::new(|_| Vec2::ZERO),
                dirichlet: Arc::new(|p: Vec2| (PI * p.x).sin()),
            }],
            g_alpha: CostIntegrand::zero(),
            g_beta: CostIntegrand::zero(),
            q1: Arc::new(|p: Vec2| p.y > 1e-9),
            q2: Arc::new(|p: Vec2| p.y <= 1e-9),
        }
    }

    fn relative_l2_error(
        mesh: &TriMesh,
        numeric: &[f64],
        exact: &dyn Fn(Vec2) -> f64,
    ) -> f64 {
        // Edge-midpoint rule, exact for quadratics.
        let mut err = 0.0;
        let mut nrm = 0.0;
        for t in 0..mesh.n_triangles() {
            let tri = mesh.triangles()[t];
            let w = mesh.area(t) / 3.0;
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let mid = (mesh.vertices()[a] + mesh.vertices()[b]) * 0.5;
                let uh = 0.5 * (numeric[a] + numeric[b]);
                let ue = exact(mid);
                err += w * (uh - ue) * (uh - ue);
                nrm += w * ue * ue;
            }
        }
        (err / nrm).sqrt()
    }

    /// Mixed problem on the unit square: data sin(pi x) on the top, zero
    /// Dirichlet on the sides, zero flux along the bottom.
    fn solve_fourier_mixed(h: f64) -> (std::sync::Arc<TriMesh>, Vec<f64>) {
        let mesh = Arc::new(rectangle_mesh(h));
        let ls = LevelSetField::new(mesh.clone(), vec![-1.0; mesh.n_vertices()]);
        let spec = fourier_spec();
        let sub = extract_submesh(&ls, &*spec.q1.clone(), &*spec.q2.clone()).unwrap();
        let a = TensorField::isotropic(sub.mesh.n_triangles(), 1.0);
        let u = solve_state(&sub.mesh, &a, &spec).unwrap();
        (sub.mesh.clone(), u.into_iter().next().unwrap())
    }

    #[test]
    fn fourier_mixed_solution_matches_closed_form() {
        let (mesh, u) = solve_fourier_mixed(0.05);
        let exact = |p: Vec2| (PI * p.y).cosh() / PI.cosh() * (PI * p.x).sin();
        let err = relative_l2_error(&mesh, &u, &exact);
        assert!(err <= 0.01, "relative L2 error {err}");
    }

    #[test]
    fn fourier_dirichlet_strip_matches_closed_form() {
        let mesh = Arc::new(rectangle_mesh(0.02));
        let phi: Vec<f64> = mesh.vertices().iter().map(|v| 0.25 - v.y).collect();
        let ls = LevelSetField::new(mesh.clone(), phi);
        let spec = fourier_spec();
        let sub = extract_submesh(&ls, &*spec.q1.clone(), &*spec.q2.clone()).unwrap();
        let a = TensorField::isotropic(sub.mesh.n_triangles(), 1.0);
        let u = &solve_state(&sub.mesh, &a, &spec).unwrap()[0];
        let exact =
            |p: Vec2| (PI * (p.y - 0.25)).sinh() / (0.75 * PI).sinh() * (PI * p.x).sin();
        let err = relative_l2_error(&sub.mesh, u, &exact);
        assert!(err <= 1e-3, "relative L2 error {err}");
    }

    #[test]
    fn constant_dirichlet_data_gives_constant_solution() {
        let mesh = Arc::new(rectangle_mesh(0.11));
        let ls = LevelSetField::new(mesh.clone(), vec![-1.0; mesh.n_vertices()]);
        // Neumann everywhere on the free boundary, constant data on Gamma0.
        let sub = extract_submesh(&ls, &|_| false, &|_| true).unwrap();
        let spec = ProblemSpec {
            states: vec![StateData {
                source: Arc::new(|_| 0.0),
                source_gradient: Arc::new(|_| Vec2::ZERO),
                dirichlet: Arc::new(|_| 3.0),
            }],
            ..fourier_spec()
        };
        let mut a = TensorField::isotropic(sub.mesh.n_triangles(), 1.0);
        for t in 0..a.len() {
            let s = (t % 5) as f64 / 5.0;
            a.set(t, SymMat2::new(0.8 + s, 0.2 * s, 1.7 - s));
        }
        let u = &solve_state(&sub.mesh, &a, &spec).unwrap()[0];
        for &v in u {
            assert!((v - 3.0).abs() <= 1e-8, "value {v}");
        }
    }

    #[test]
    fn no_dirichlet_boundary_is_rejected() {
        let mesh = generate_background_mesh(
            &MeshSpec {
                domain: MeshDomain::Rectangle {
                    min: Vec2::ZERO,
                    max: Vec2::new(1.0, 1.0),
                },
                gamma0: Gamma0Spec::None,
            },
            0.25,
        )
        .unwrap();
        let a = TensorField::isotropic(mesh.n_triangles(), 1.0);
        assert!(matches!(
            solve_state(&mesh, &a, &fourier_spec()),
            Err(FemError::NoDirichletBoundary)
        ));
    }

    #[test]
    fn self_adjoint_cost_gives_negated_state() {
        // g = -f u with homogeneous Dirichlet data: the adjoint system is the
        // state system with negated load, so p = -u to solver accuracy.
        let mesh = Arc::new(rectangle_mesh(0.05));
        let ls = LevelSetField::new(mesh.clone(), vec![-1.0; mesh.n_vertices()]);
        let sub = extract_submesh(&ls, &|_| true, &|_| false).unwrap();
        let source: ScalarFn = Arc::new(|p: Vec2| 1.0 + p.x * p.y);
        let f = source.clone();
        let spec = ProblemSpec {
            states: vec![StateData {
                source: source.clone(),
                source_gradient: Arc::new(|p: Vec2| Vec2::new(p.y, p.x)),
                dirichlet: Arc::new(|_| 0.0),
            }],
            g_alpha: CostIntegrand {
                value: Arc::new({
                    let f = f.clone();
                    move |x, u: &[f64]| -f(x) * u[0]
                }),
                du: Arc::new({
                    let f = f.clone();
                    move |x, _u: &[f64], _i| -f(x)
                }),
                grad_x: Arc::new(|_, _| Vec2::ZERO),
            },
            g_beta: CostIntegrand {
                value: Arc::new({
                    let f = f.clone();
                    move |x, u: &[f64]| -f(x) * u[0]
                }),
                du: Arc::new({
                    let f = f.clone();
                    move |x, _u: &[f64], _i| -f(x)
                }),
                grad_x: Arc::new(|_, _| Vec2::ZERO),
            },
            ..fourier_spec()
        };
        let a = TensorField::isotropic(sub.mesh.n_triangles(), 1.3);
        let u = solve_state(&sub.mesh, &a, &spec).unwrap();
        let theta = vec![0.37; sub.mesh.n_triangles()];
        let p = solve_adjoint(&sub.mesh, &a, &theta, &u, &spec).unwrap();
        let umax = u[0].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        for (uv, pv) in u[0].iter().zip(&p[0]) {
            assert!(
                (uv + pv).abs() <= 1e-9 * umax,
                "u + p = {:e}",
                (uv + pv).abs()
            );
        }
    }

    #[test]
    fn zero_cost_derivative_gives_zero_adjoint() {
        let mesh = Arc::new(rectangle_mesh(0.2));
        let ls = LevelSetField::new(mesh.clone(), vec![-1.0; mesh.n_vertices()]);
        let sub = extract_submesh(&ls, &|_| true, &|_| false).unwrap();
        let spec = fourier_spec();
        let a = TensorField::isotropic(sub.mesh.n_triangles(), 1.0);
        let u = solve_state(&sub.mesh, &a, &spec).unwrap();
        let theta = vec![0.5; sub.mesh.n_triangles()];
        let p = solve_adjoint(&sub.mesh, &a, &theta, &u, &spec).unwrap();
        assert!(p[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_assembled_adjoint_on_union_jack_square() {
        // Four triangles around the centre of the unit square, boundary fully
        // Dirichlet. dG/du = 1: the centre row reads K_cc p_c = area/3 sums,
        // K_cc = 4 and rhs = 1/3, so p_c = 1/12.
        let vertices = vec![
            Vec2::ZERO,
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.5, 0.5),
        ];
        let triangles = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        let boundary = [(0, 1), (1, 2), (2, 3), (3, 0)]
            .iter()
            .map(|&(a, b)| BoundaryEdge {
                vertices: [a, b],
                tag: BoundaryTag::Gamma1,
            })
            .collect();
        let mesh = TriMesh::new(vertices, triangles, boundary).unwrap();
        let spec = ProblemSpec {
            g_alpha: CostIntegrand {
                value: Arc::new(|_, u: &[f64]| u[0]),
                du: Arc::new(|_, _, _| 1.0),
                grad_x: Arc::new(|_, _| Vec2::ZERO),
            },
            g_beta: CostIntegrand {
                value: Arc::new(|_, u: &[f64]| u[0]),
                du: Arc::new(|_, _, _| 1.0),
                grad_x: Arc::new(|_, _| Vec2::ZERO),
            },
            ..fourier_spec()
        };
        let a = TensorField::isotropic(4, 1.0);
        let u = vec![vec![0.0; 5]];
        let theta = vec![1.0; 4];
        let p = solve_adjoint(&mesh, &a, &theta, &u, &spec).unwrap();
        assert!((p[0][4] - 1.0 / 12.0).abs() <= 1e-12, "centre {}", p[0][4]);
        for v in 0..4 {
            assert_eq!(p[0][v], 0.0);
        }

        // Degenerate two-triangle square: every vertex constrained, p = 0.
        let vertices = vec![
            Vec2::ZERO,
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let boundary = [(0, 1), (1, 2), (2, 3), (3, 0)]
            .iter()
            .map(|&(a, b)| BoundaryEdge {
                vertices: [a, b],
                tag: BoundaryTag::Gamma1,
            })
            .collect();
        let mesh2 = TriMesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]], boundary).unwrap();
        let a2 = TensorField::isotropic(2, 1.0);
        let p2 = solve_adjoint(&mesh2, &a2, &vec![1.0; 2], &vec![vec![0.0; 4]], &spec).unwrap();
        assert!(p2[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn m_matrix_from_crossed_linear_fields() {
        let mesh = one_triangle();
        let u = vec![mesh.vertices().iter().map(|p| p.x).collect::<Vec<_>>()];
        let p = vec![mesh.vertices().iter().map(|p| p.y).collect::<Vec<_>>()];
        let m = compute_m(&mesh, &u, &p);
        assert!((m[0].xx).abs() <= 1e-14);
        assert!((m[0].xy - 0.5).abs() <= 1e-14);
        assert!((m[0].yy).abs() <= 1e-14);
    }

    #[test]
    fn m_matrix_sign_structure() {
        let (mesh, u) = solve_fourier_mixed(0.1);
        let u = vec![u];
        let negated: Vec<Vec<f64>> = u.iter().map(|f| f.iter().map(|v| -v).collect()).collect();
        for m in compute_m(&mesh, &u, &negated) {
            let (l1, _l2) = m.eigenvalues();
            assert!(l1 <= 1e-12, "not negative semidefinite: {l1}");
        }
        for m in compute_m(&mesh, &u, &u) {
            let (_l1, l2) = m.eigenvalues();
            assert!(l2 >= -1e-12, "not positive semidefinite: {l2}");
        }
    }

    #[test]
    fn objective_measures_domain_for_unit_cost() {
        let mesh = rectangle_mesh(0.15);
        let spec = ProblemSpec {
            g_beta: CostIntegrand {
                value: Arc::new(|_, _| 1.0),
                du: Arc::new(|_, _, _| 0.0),
                grad_x: Arc::new(|_, _| Vec2::ZERO),
            },
            ..fourier_spec()
        };
        let theta = vec![0.0; mesh.n_triangles()];
        let u = vec![vec![0.0; mesh.n_vertices()]];
        let j = evaluate_objective(&mesh, &theta, &u, &spec);
        assert!((j - mesh.total_area()).abs() <= 1e-12);
    }

    #[test]
    fn objective_linear_in_integrands() {
        let (mesh, u) = solve_fourier_mixed(0.1);
        let u = vec![u];
        let theta: Vec<f64> = (0..mesh.n_triangles())
            .map(|t| ((t % 10) as f64) / 10.0)
            .collect();
        let ga = CostIntegrand {
            value: Arc::new(|p: Vec2, u: &[f64]| p.x * u[0]),
            du: Arc::new(|p: Vec2, _, _| p.x),
            grad_x: Arc::new(|_, u: &[f64]| Vec2::new(u[0], 0.0)),
        };
        let gb = CostIntegrand {
            value: Arc::new(|p: Vec2, u: &[f64]| p.y + u[0] * u[0]),
            du: Arc::new(|_, u: &[f64], _| 2.0 * u[0]),
            grad_x: Arc::new(|_, _| Vec2::new(0.0, 1.0)),
        };
        let base = fourier_spec();
        let ja = evaluate_objective(
            &mesh,
            &theta,
            &u,
            &ProblemSpec {
                g_alpha: ga.clone(),
                ..base.clone()
            },
        );
        let jb = evaluate_objective(
            &mesh,
            &theta,
            &u,
            &ProblemSpec {
                g_beta: gb.clone(),
                ..base.clone()
            },
        );
        let jab = evaluate_objective(
            &mesh,
            &theta,
            &u,
            &ProblemSpec {
                g_alpha: ga,
                g_beta: gb,
                ..base
            },
        );
        assert!((jab - ja - jb).abs() <= 1e-12 * (1.0 + jab.abs()));
    }

    #[test]
    fn design_variation_trivial_cases() {
        let (mesh, u) = solve_fourier_mixed(0.1);
        let u = vec![u];
        let p: Vec<Vec<f64>> = u.iter().map(|f| f.iter().map(|v| -v).collect()).collect();
        let spec = fourier_spec();
        let zero_t = vec![0.0; mesh.n_triangles()];
        let zero_a = vec![SymMat2::ZERO; mesh.n_triangles()];
        assert_eq!(
            evaluate_design_variation(&mesh, &u, &p, &spec, &zero_t, &zero_a),
            0.0
        );
        // Equal integrands: the theta part cancels for any perturbation.
        let dt: Vec<f64> = (0..mesh.n_triangles()).map(|t| (t as f64).sin()).collect();
        let j = evaluate_design_variation(&mesh, &u, &p, &spec, &dt, &zero_a);
        assert_eq!(j, 0.0);
    }
}
