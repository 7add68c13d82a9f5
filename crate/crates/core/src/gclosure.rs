//! The set K(theta) of effective conductivities of two isotropic phases mixed
//! in local fraction theta, and the maximization map F(theta, M) driving the
//! optimality-criteria update.
//!
//! For d = 2 the set is characterised by eigenvalue constraints: both
//! eigenvalues lie between the harmonic and arithmetic means, and the sums
//! 1/(lambda_j - alpha) resp. 1/(beta - lambda_j) are bounded by their values
//! at the extreme pair. Because K(theta) is invariant under orthogonal
//! conjugation and A -> A : M is linear, F reduces to maximising
//! l1 m1 + l2 m2 over the admissible eigenvalue region with sorted pairing;
//! the maximum sits at a corner of the region or at the closed-form
//! stationary point of one of the two hyperbolic constraint arcs.

use crate::math::SymMat2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GClosureError {
    #[error("argument outside domain: {0}")]
    Domain(String),
}

/// Extreme eigenvalues achievable at fraction `theta`.
#[derive(Clone, Copy, Debug)]
pub struct GClosureBounds {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Harmonic and arithmetic means of the conductivities with weight `theta`.
pub fn lambda_bounds(theta: f64, alpha: f64, beta: f64) -> Result<GClosureBounds, GClosureError> {
    check_phase(alpha, beta)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(GClosureError::Domain(format!("theta = {theta}")));
    }
    Ok(GClosureBounds {
        lambda_minus: 1.0 / (theta / alpha + (1.0 - theta) / beta),
        lambda_plus: theta * alpha + (1.0 - theta) * beta,
        theta,
        alpha,
        beta,
    })
}

fn check_phase(alpha: f64, beta: f64) -> Result<(), GClosureError> {
    if !(0.0 < alpha && alpha < beta) {
        return Err(GClosureError::Domain(format!(
            "conductivities ({alpha}, {beta})"
        )));
    }
    Ok(())
}

/// Constraint right-hand sides: sums evaluated at the extreme pair.
fn constraint_levels(b: &GClosureBounds) -> (f64, f64) {
    let c_alpha = 1.0 / (b.lambda_minus - b.alpha) + 1.0 / (b.lambda_plus - b.alpha);
    let c_beta = 1.0 / (b.beta - b.lambda_minus) + 1.0 / (b.beta - b.lambda_plus);
    (c_alpha, c_beta)
}

/// Membership test for K(theta) within additive tolerance `tol`.
pub fn in_gclosure(theta: f64, a: SymMat2, alpha: f64, beta: f64, tol: f64) -> bool {
    let Ok(bounds) = lambda_bounds(theta, alpha, beta) else {
        return false;
    };
    let (l1, l2) = a.eigenvalues();
    if theta <= 0.0 {
        return (l1 - beta).abs() <= tol && (l2 - beta).abs() <= tol;
    }
    if theta >= 1.0 {
        return (l1 - alpha).abs() <= tol && (l2 - alpha).abs() <= tol;
    }
    if l2 < bounds.lambda_minus - tol || l1 > bounds.lambda_plus + tol {
        return false;
    }
    let (c_alpha, c_beta) = constraint_levels(&bounds);
    // Clamp into the open interval so the sums stay finite under tolerance.
    let l1c = l1.clamp(bounds.lambda_minus, bounds.lambda_plus);
    let l2c = l2.clamp(bounds.lambda_minus, bounds.lambda_plus);
    let sum_alpha = 1.0 / (l1c - alpha) + 1.0 / (l2c - alpha);
    let sum_beta = 1.0 / (beta - l1c) + 1.0 / (beta - l2c);
    sum_alpha <= c_alpha + tol && sum_beta <= c_beta + tol
}

/// Result of the maximization map.
#[derive(Clone, Copy, Debug)]
pub struct FMax {
    pub value: f64,
    /// Eigenvalues of the maximizer paired with the sorted (descending)
    /// eigenvalues of M.
    pub lambda: (f64, f64),
}

/// F(theta, M) = max over K(theta) of A : M with the attaining eigenvalue
/// pair.
pub fn maximize_f(theta: f64, m: SymMat2, alpha: f64, beta: f64) -> Result<FMax, GClosureError> {
    let bounds = lambda_bounds(theta, alpha, beta)?;
    let (m1, m2) = m.eigenvalues();
    if theta <= 0.0 {
        return Ok(FMax {
            value: beta * m.trace(),
            lambda: (beta, beta),
        });
    }
    if theta >= 1.0 {
        return Ok(FMax {
            value: alpha * m.trace(),
            lambda: (alpha, alpha),
        });
    }
    let (lm, lp) = (bounds.lambda_minus, bounds.lambda_plus);
    let (c_alpha, c_beta) = constraint_levels(&bounds);
    let mut best = FMax {
        value: lp * m1 + lm * m2,
        lambda: (lp, lm),
    };
    let corner2 = FMax {
        value: lm * m1 + lp * m2,
        lambda: (lm, lp),
    };
    if corner2.value > best.value {
        best = corner2;
    }
    let in_range = |l: f64| (lm - 1e-12..=lp + 1e-12).contains(&l);
    if m1 > 0.0 && m2 > 0.0 {
        // Stationary point on the upper constraint arc.
        let t = (m1.sqrt() + m2.sqrt()) / c_beta;
        let l1 = beta - t / m1.sqrt();
        let l2 = beta - t / m2.sqrt();
        if in_range(l1) && in_range(l2) {
            let value = l1 * m1 + l2 * m2;
            if value > best.value {
                best = FMax {
                    value,
                    lambda: (l1, l2),
                };
            }
        }
    }
    if m1 < 0.0 && m2 < 0.0 {
        // Stationary point on the lower constraint arc.
        let t = ((-m1).sqrt() + (-m2).sqrt()) / c_alpha;
        let l1 = alpha + t / (-m1).sqrt();
        let l2 = alpha + t / (-m2).sqrt();
        if in_range(l1) && in_range(l2) {
            let value = l1 * m1 + l2 * m2;
            if value > best.value {
                best = FMax {
                    value,
                    lambda: (l1, l2),
                };
            }
        }
    }
    Ok(best)
}

/// Derivative of F in theta by guarded central differences; one-sided at the
/// endpoints. At kinks of the piecewise-smooth map the value lies between the
/// one-sided slopes.
pub fn df_dtheta(theta: f64, m: SymMat2, alpha: f64, beta: f64) -> f64 {
    let f = |t: f64| maximize_f(t, m, alpha, beta).expect("theta in [0,1]").value;
    let h0 = 1e-5;
    if theta <= h0 {
        let h = h0;
        (f(theta + h) - f(theta.max(0.0))) / h
    } else if theta >= 1.0 - h0 {
        let h = h0;
        (f(theta.min(1.0)) - f(theta - h)) / h
    } else {
        let h = h0.min(theta).min(1.0 - theta);
        (f(theta + h) - f(theta - h)) / (2.0 * h)
    }
}

/// A maximizer of A : M over K(theta): shares M's eigenvectors with the
/// sorted pairing from [`maximize_f`]. Degenerate M keeps the coordinate
/// axes.
pub fn argmax_tensor(theta: f64, m: SymMat2, alpha: f64, beta: f64) -> SymMat2 {
    let fmax = maximize_f(theta, m, alpha, beta).expect("theta in [0,1]");
    let eig = m.eigen_decomposition();
    SymMat2::from_eigen(fmax.lambda, eig.vectors)
}

/// Pointwise fraction update: the zero in [0,1] of
/// `theta -> l + g_gap - dF/dtheta(theta, M)`, clamped to 0 where the map is
/// positive throughout and to 1 where it is negative throughout. The map is
/// monotone in theta (either direction, depending on the signature of M);
/// bisection adapts to the orientation. A map that is identically zero at
/// both endpoints returns 1/2; callers with a mass constraint substitute
/// their own fill value for that degenerate case.
pub fn solve_theta_update(l: f64, g_gap: f64, m: SymMat2, alpha: f64, beta: f64) -> f64 {
    let map = |theta: f64| l + g_gap - df_dtheta(theta, m, alpha, beta);
    let a = map(0.0);
    let b = map(1.0);
    if a == 0.0 && b == 0.0 {
        return 0.5;
    }
    if a == 0.0 {
        return 0.0;
    }
    if b == 0.0 {
        return 1.0;
    }
    if a > 0.0 && b > 0.0 {
        return 0.0;
    }
    if a < 0.0 && b < 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut f_lo = a;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f_mid = map(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Frobenius-type magnitude used for multiplier bracket scaling.
pub fn tensor_norm(m: SymMat2) -> f64 {
    m.frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: f64 = 1.0;
    const B: f64 = 2.0;

    #[test]
    fn bounds_at_endpoints_and_midpoint() {
        let b0 = lambda_bounds(0.0, A, B).unwrap();
        assert_eq!((b0.lambda_minus, b0.lambda_plus), (B, B));
        let b1 = lambda_bounds(1.0, A, B).unwrap();
        assert_eq!((b1.lambda_minus, b1.lambda_plus), (A, A));
        let bh = lambda_bounds(0.5, A, B).unwrap();
        assert!((bh.lambda_minus - 4.0 / 3.0).abs() <= 1e-15);
        assert!((bh.lambda_plus - 1.5).abs() <= 1e-15);
    }

    #[test]
    fn bounds_ordering_over_grid() {
        for k in 0..=100 {
            let theta = k as f64 / 100.0;
            let b = lambda_bounds(theta, A, B).unwrap();
            if theta == 0.0 || theta == 1.0 {
                assert_eq!(b.lambda_minus, b.lambda_plus);
            } else {
                assert!(b.lambda_minus < b.lambda_plus);
            }
            assert!(b.lambda_minus >= A - 1e-15 && b.lambda_plus <= B + 1e-15);
        }
    }

    #[test]
    fn bounds_reject_bad_arguments() {
        assert!(lambda_bounds(-0.1, A, B).is_err());
        assert!(lambda_bounds(1.1, A, B).is_err());
        assert!(lambda_bounds(0.5, 2.0, 1.0).is_err());
        assert!(lambda_bounds(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn membership_examples() {
        // lambda_plus I at theta = 1/2 violates the beta constraint:
        // 2/(1/2) = 4 > 1/(2/3) + 1/(1/2) = 3.5.
        let lp = 1.5;
        assert!(!in_gclosure(0.5, SymMat2::isotropic(lp), A, B, 1e-9));
        // The extreme diagonal pair saturates both constraints.
        for k in 1..10 {
            let theta = k as f64 / 10.0;
            let b = lambda_bounds(theta, A, B).unwrap();
            let diag = SymMat2::new(b.lambda_minus, 0.0, b.lambda_plus);
            assert!(in_gclosure(theta, diag, A, B, 1e-9));
        }
        // K(0) is the single point beta I.
        assert!(in_gclosure(0.0, SymMat2::isotropic(B), A, B, 1e-9));
        assert!(!in_gclosure(0.0, SymMat2::isotropic(B - 1e-3), A, B, 1e-9));
        assert!(in_gclosure(1.0, SymMat2::isotropic(A), A, B, 1e-9));
        assert!(!in_gclosure(1.0, SymMat2::isotropic(A + 1e-3), A, B, 1e-9));
    }

    #[test]
    fn f_identity_anchor() {
        // Maximise l1 + l2 subject to 1/(2-l1) + 1/(2-l2) <= 3.5: the
        // symmetric point 10/7 gives F = 20/7.
        let f = maximize_f(0.5, SymMat2::identity(), A, B).unwrap();
        assert!((f.value - 20.0 / 7.0).abs() <= 1e-9, "F = {}", f.value);
        assert!((f.lambda.0 - 10.0 / 7.0).abs() <= 1e-9);
        assert!((f.lambda.1 - 10.0 / 7.0).abs() <= 1e-9);
    }

    #[test]
    fn f_negated_identity_anchor() {
        // Minimise l1 + l2 subject to 1/(l1-1) + 1/(l2-1) <= 5: the symmetric
        // point 7/5 gives F = -14/5.
        let f = maximize_f(0.5, SymMat2::isotropic(-1.0), A, B).unwrap();
        assert!((f.value + 14.0 / 5.0).abs() <= 1e-9, "F = {}", f.value);
        assert!((f.lambda.0 - 7.0 / 5.0).abs() <= 1e-9);
        assert!((f.lambda.1 - 7.0 / 5.0).abs() <= 1e-9);
    }

    #[test]
    fn f_zero_matrix_and_endpoints() {
        for k in 0..=10 {
            let theta = k as f64 / 10.0;
            assert_eq!(maximize_f(theta, SymMat2::ZERO, A, B).unwrap().value, 0.0);
        }
        let m = SymMat2::new(0.7, -0.2, -1.1);
        let f0 = maximize_f(0.0, m, A, B).unwrap();
        assert_eq!(f0.value, B * m.trace());
        let f1 = maximize_f(1.0, m, A, B).unwrap();
        assert_eq!(f1.value, A * m.trace());
    }

    #[test]
    fn f_mixed_signature_closed_form() {
        // With m1 > 0 > m2 no arc stationary point exists; the maximum is the
        // corner lambda_plus m1 + lambda_minus m2 for every theta.
        let m = SymMat2::new(0.8, 0.0, -0.3);
        for k in 1..20 {
            let theta = k as f64 / 20.0;
            let b = lambda_bounds(theta, A, B).unwrap();
            let f = maximize_f(theta, m, A, B).unwrap();
            let expect = b.lambda_plus * 0.8 + b.lambda_minus * (-0.3);
            assert!((f.value - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn df_matches_symbolic_slope_at_half() {
        // F(theta, I) = 2 beta - 4 / c_beta(theta); at theta = 1/2 the slope
        // evaluates to -96/49.
        let d = df_dtheta(0.5, SymMat2::identity(), A, B);
        assert!((d - (-96.0 / 49.0)).abs() <= 1e-6, "slope {d}");
    }

    #[test]
    fn df_identity_monotone_decreasing_f() {
        let m = SymMat2::identity();
        assert!((maximize_f(0.0, m, A, B).unwrap().value - 4.0).abs() <= 1e-12);
        assert!((maximize_f(1.0, m, A, B).unwrap().value - 2.0).abs() <= 1e-12);
        for k in 0..99 {
            let theta = (k as f64 + 0.5) / 99.0;
            assert!(df_dtheta(theta, m, A, B) < 0.0);
        }
    }

    #[test]
    fn df_zero_matrix() {
        for k in 0..=10 {
            assert_eq!(df_dtheta(k as f64 / 10.0, SymMat2::ZERO, A, B), 0.0);
        }
    }

    #[test]
    fn argmax_endpoint_and_midpoint() {
        let m = SymMat2::new(0.3, 0.1, -0.9);
        let a0 = argmax_tensor(0.0, m, A, B);
        assert!((a0.xx - B).abs() <= 1e-12 && (a0.yy - B).abs() <= 1e-12 && a0.xy.abs() <= 1e-12);
        let ah = argmax_tensor(0.5, SymMat2::identity(), A, B);
        assert!((ah.xx - 10.0 / 7.0).abs() <= 1e-9);
        assert!((ah.yy - 10.0 / 7.0).abs() <= 1e-9);
        assert!(ah.xy.abs() <= 1e-12);
    }

    #[test]
    fn argmax_attains_f_for_rotated_matrix() {
        // Eigenvectors at 45 degrees.
        let m = SymMat2::new(0.0, 0.5, 0.0);
        for k in 1..10 {
            let theta = k as f64 / 10.0;
            let a = argmax_tensor(theta, m, A, B);
            let f = maximize_f(theta, m, A, B).unwrap();
            assert!(in_gclosure(theta, a, A, B, 1e-8));
            assert!((a.ddot(m) - f.value).abs() <= 1e-8 * (1.0 + f.value.abs()));
        }
    }

    #[test]
    fn theta_update_clamps_by_sign() {
        assert_eq!(solve_theta_update(2.0, 0.0, SymMat2::ZERO, A, B), 0.0);
        assert_eq!(solve_theta_update(-2.0, 0.0, SymMat2::ZERO, A, B), 1.0);
        assert_eq!(solve_theta_update(0.0, 0.0, SymMat2::ZERO, A, B), 0.5);
    }

    #[test]
    fn theta_update_inverts_its_own_derivative() {
        let m = SymMat2::identity();
        let l = df_dtheta(0.5, m, A, B);
        let theta = solve_theta_update(l, 0.0, m, A, B);
        assert!((theta - 0.5).abs() <= 1e-6, "theta {theta}");

        // Same inversion on a negative-definite matrix, where the map has the
        // opposite monotonicity direction.
        let mn = SymMat2::isotropic(-1.0);
        let ln = df_dtheta(0.3, mn, A, B);
        let theta_n = solve_theta_update(ln, 0.0, mn, A, B);
        assert!((theta_n - 0.3).abs() <= 1e-6, "theta {theta_n}");
    }

    #[test]
    fn rotation_invariance_spot_check() {
        let m = SymMat2::new(0.9, -0.4, -0.2);
        let (s, c) = (0.6f64, 0.8f64);
        let r = crate::math::Mat2::new(c, -s, s, c);
        let rm = r.mul_mat(m.to_mat()).mul_mat(r.transpose());
        let m_rot = SymMat2::new(rm.m[0][0], 0.5 * (rm.m[0][1] + rm.m[1][0]), rm.m[1][1]);
        for k in 1..10 {
            let theta = k as f64 / 10.0;
            let f1 = maximize_f(theta, m, A, B).unwrap().value;
            let f2 = maximize_f(theta, m_rot, A, B).unwrap().value;
            assert!((f1 - f2).abs() <= 1e-10 * (1.0 + f1.abs()));
        }
    }

    #[test]
    fn positive_homogeneity() {
        let m = SymMat2::new(0.4, 0.25, -1.3);
        for c in [0.5, 2.0, 7.5] {
            let f1 = maximize_f(0.3, m, A, B).unwrap().value;
            let fc = maximize_f(0.3, m.scale(c), A, B).unwrap().value;
            assert!((fc - c * f1).abs() <= 1e-10 * (1.0 + fc.abs()));
        }
    }

}
