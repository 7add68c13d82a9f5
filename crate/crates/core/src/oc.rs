//! Optimality-criteria inner loop: alternating pointwise updates of the
//! local fraction and the conductivity tensor, with a Lagrange multiplier
//! enforcing the phase-quantity constraint.

use crate::fem::{
    compute_m, solve_adjoint, solve_state, state_at_vertex, FemError, ProblemSpec, TensorField,
};
use crate::gclosure::{argmax_tensor, df_dtheta, in_gclosure, solve_theta_update, tensor_norm};
use crate::geometry::TriMesh;
use crate::math::SymMat2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OcError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("multiplier bisection failed: {0}")]
    MultiplierFailure(String),
}

/// Interior design: local fraction and conductivity tensor per triangle.
#[derive(Clone, Debug)]
pub struct DesignField {
    pub theta: Vec<f64>,
    pub tensor: TensorField,
}

impl DesignField {
    /// The inner-loop initialisation: full alpha phase everywhere.
    pub fn full_alpha(n_triangles: usize, alpha: f64) -> DesignField {
        DesignField {
            theta: vec![1.0; n_triangles],
            tensor: TensorField::isotropic(n_triangles, alpha),
        }
    }

    pub fn theta_mass(&self, mesh: &TriMesh) -> f64 {
        self.theta
            .iter()
            .enumerate()
            .map(|(t, &th)| th * mesh.area(t))
            .sum()
    }

    /// Checks the per-triangle invariants: fractions in [0,1] and tensors in
    /// K(theta) within `tol`.
    pub fn is_feasible(&self, spec: &ProblemSpec, tol: f64) -> bool {
        self.theta.len() == self.tensor.len()
            && self
                .theta
                .iter()
                .zip(self.tensor.values())
                .all(|(&th, &a)| {
                    (0.0..=1.0).contains(&th) && in_gclosure(th, a, spec.alpha, spec.beta, tol)
                })
    }
}

/// Multiplier search outcome with its evaluation history.
#[derive(Clone, Debug)]
pub struct MultiplierState {
    pub multiplier: f64,
    pub bracket: (f64, f64),
    /// (multiplier, theta mass) pairs in evaluation order; the relation is
    /// nonincreasing in the multiplier.
    pub history: Vec<(f64, f64)>,
}

/// The cost gap gA - gB at a triangle centroid, with the state interpolated
/// there.
fn centroid_g_gap(mesh: &TriMesh, u: &[Vec<f64>], spec: &ProblemSpec, tri: usize) -> f64 {
    let c = mesh.centroid(tri);
    let uc: Vec<f64> = u.iter().map(|ui| mesh.centroid_value(tri, ui)).collect();
    (spec.g_alpha.value)(c, &uc) - (spec.g_beta.value)(c, &uc)
}

/// Pointwise fraction update over all triangles for a fixed multiplier.
/// `flat_fill` is used where the update map is identically zero (M = 0 and
/// l + g_gap below 1e-12), where every fraction is optimal.
pub fn update_theta_field(
    mesh: &TriMesh,
    u: &[Vec<f64>],
    m_field: &[SymMat2],
    spec: &ProblemSpec,
    l: f64,
    flat_fill: f64,
) -> Vec<f64> {
    let mut theta = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let g_gap = centroid_g_gap(mesh, u, spec, t);
        let m = m_field[t];
        if tensor_norm(m) == 0.0 && (l + g_gap).abs() <= 1e-12 {
            theta.push(flat_fill);
        } else {
            theta.push(solve_theta_update(l, g_gap, m, spec.alpha, spec.beta));
        }
    }
    theta
}

/// Finds the multiplier enforcing the phase-quantity target by bisection.
/// The theta mass is nonincreasing in the multiplier; the bracket doubles
/// until it straddles the target.
pub fn find_multiplier(
    mesh: &TriMesh,
    u: &[Vec<f64>],
    m_field: &[SymMat2],
    spec: &ProblemSpec,
    q_target: f64,
) -> Result<(MultiplierState, Vec<f64>), OcError> {
    let area: f64 = mesh.total_area();
    if !(q_target > 0.0 && q_target < area) {
        return Err(OcError::MultiplierFailure(format!(
            "target {q_target} outside (0, {area})"
        )));
    }
    let flat_fill = q_target / area;
    let mut scale = 0.0f64;
    for t in 0..mesh.n_triangles() {
        scale = scale.max(centroid_g_gap(mesh, u, spec, t).abs());
    }
    let m_max = m_field.iter().fold(0.0f64, |m, v| m.max(tensor_norm(*v)));
    scale += spec.beta * m_max;
    let scale = scale.max(1e-6);

    let mut history = Vec::new();
    let mut mass_at = |l: f64, history: &mut Vec<(f64, f64)>| -> (f64, Vec<f64>) {
        let theta = update_theta_field(mesh, u, m_field, spec, l, flat_fill);
        let mass = theta
            .iter()
            .enumerate()
            .map(|(t, &th)| th * mesh.area(t))
            .sum::<f64>();
        history.push((l, mass));
        (mass, theta)
    };

    let mut lo = -10.0 * spec.beta * scale;
    let mut hi = 10.0 * spec.beta * scale;
    let mut expansions = 0;
    let (mut mass_lo, mut theta_lo) = mass_at(lo, &mut history);
    while mass_lo < q_target {
        lo *= 2.0;
        expansions += 1;
        if expansions > 100 {
            return Err(OcError::MultiplierFailure("bracket expansion (low)".into()));
        }
        let r = mass_at(lo, &mut history);
        mass_lo = r.0;
        theta_lo = r.1;
    }
    let (mut mass_hi, mut theta_hi) = mass_at(hi, &mut history);
    while mass_hi > q_target {
        hi *= 2.0;
        expansions += 1;
        if expansions > 100 {
            return Err(OcError::MultiplierFailure("bracket expansion (high)".into()));
        }
        let r = mass_at(hi, &mut history);
        mass_hi = r.0;
        theta_hi = r.1;
    }

    let tol = 1e-3 * q_target;
    let mut best = if (mass_lo - q_target).abs() <= (mass_hi - q_target).abs() {
        (lo, mass_lo, theta_lo)
    } else {
        (hi, mass_hi, theta_hi)
    };
    let mut iterations = 0;
    while (best.1 - q_target).abs() > tol {
        iterations += 1;
        if iterations > 200 {
            return Err(OcError::MultiplierFailure(format!(
                "no convergence: |mass - target| = {:e}",
                (best.1 - q_target).abs()
            )));
        }
        let mid = 0.5 * (lo + hi);
        let (mass_mid, theta_mid) = mass_at(mid, &mut history);
        if (mass_mid - q_target).abs() < (best.1 - q_target).abs() {
            best = (mid, mass_mid, theta_mid);
        }
        if mass_mid >= q_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    Ok((
        MultiplierState {
            multiplier: best.0,
            bracket: (lo, hi),
            history,
        },
        best.2,
    ))
}

/// The pointwise optimality residual at the current iterate:
/// q = l + gA - gB - dF/dtheta(theta, M). Positive values demand theta = 0,
/// negative values theta = 1.
pub fn optimality_indicator(
    mesh: &TriMesh,
    u: &[Vec<f64>],
    m_field: &[SymMat2],
    spec: &ProblemSpec,
    theta: &[f64],
    l: f64,
) -> Vec<f64> {
    (0..mesh.n_triangles())
        .map(|t| {
            l + centroid_g_gap(mesh, u, spec, t)
                - df_dtheta(theta[t], m_field[t], spec.alpha, spec.beta)
        })
        .collect()
}

/// Outcome of the inner loop: the design after the last sweep, the final
/// multiplier and the per-sweep objective trace.
pub struct OcOutcome {
    pub design: DesignField,
    pub multiplier: f64,
    pub sweeps: usize,
}

/// Runs `k_h` sweeps of state solve, adjoint solve, pointwise fraction update
/// with the mass-enforcing multiplier, and tensor update.
pub fn oc_inner_loop(
    mesh: &TriMesh,
    spec: &ProblemSpec,
    design0: DesignField,
    k_h: usize,
) -> Result<OcOutcome, OcError> {
    assert!(k_h >= 1);
    let mut design = design0;
    let mut multiplier = 0.0;
    for _ in 0..k_h {
        let u = solve_state(mesh, &design.tensor, spec)?;
        let p = solve_adjoint(mesh, &design.tensor, &design.theta, &u, spec)?;
        let m_field = compute_m(mesh, &u, &p);
        let (state, theta) = find_multiplier(mesh, &u, &m_field, spec, spec.q_alpha)?;
        multiplier = state.multiplier;
        let mut tensor = TensorField::isotropic(mesh.n_triangles(), spec.alpha);
        for t in 0..mesh.n_triangles() {
            tensor.set(t, argmax_tensor(theta[t], m_field[t], spec.alpha, spec.beta));
        }
        design = DesignField { theta, tensor };
        debug_assert!(design.is_feasible(spec, 1e-6));
    }
    Ok(OcOutcome {
        design,
        multiplier,
        sweeps: k_h,
    })
}

/// Interpolates the nodal states at a triangle centroid.
pub fn centroid_state(mesh: &TriMesh, u: &[Vec<f64>], tri: usize) -> Vec<f64> {
    u.iter().map(|ui| mesh.centroid_value(tri, ui)).collect()
}

/// Convenience used by audits: nodal state vector at a vertex.
pub fn vertex_state(u: &[Vec<f64>], v: usize) -> Vec<f64> {
    state_at_vertex(u, v)
}
