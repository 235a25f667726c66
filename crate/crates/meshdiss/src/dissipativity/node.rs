//! Node-level dissipativity problems.
//!
//! The scalar SIS node `x' = -gamma(t) x + (1 - x) u` with
//! `|gamma(t) - gamma_bar| <= delta` is X-dissipative for
//! `X = [[a, b], [b, c]]`, storage `p x^2 / 2`, whenever `p > 0`,
//! `c + p (gamma_bar - delta) >= 0` and either
//!
//! * branch 1: `a >= 0` and `2b - p >= 0`, or
//! * branch 2: `a > 0`, `b <= 0` and `4a (c + p(gamma_bar - delta)) >= (p - 2b)^2`.
//!
//! Branch 2 differs from the usual `a(c + p(gamma_bar - delta)) >= b^2`
//! reduction: for `p > 0`, `b <= 0` the binding point of the completed square
//! `((2b - p) + p x)^2` over `x in (0, 1]` is the `x -> 0` end, whose value is
//! `(p - 2b)^2`, not `4b^2`. The weaker form admits supply rates that the
//! proof's own check `Phi_bar(u, x) >= 0` rejects (e.g. a = 1, b = 0, c = -30,
//! p = 100 at margin 0.3 fails at (u, x) = (20, 0.5)), so the corrected
//! quadratic is enforced here; it coincides with the usual form at p -> 0.
//!
//! Both branches are solved as separate LMIs and the better objective is
//! kept. Objectives maximize the passivity indices, i.e. minimize `a + c`
//! (see the module docs for the sign map).

use nalgebra::DMatrix;

use super::{NodeCertificate, NodeShadow, SolveDiagnostics, XSpec};
use crate::error::{Error, Result};
use crate::lmicore::{AffineMatrixExpr, LmiProblem, LmiStatus, Tolerances};
use crate::netmodel::NodeParams;

/// Node certificate search mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeMode {
    /// b fixed at 1/2, maximize nu + rho (minimize a + c).
    MaxIndices,
    /// b fixed at the given value.
    Fixed(f64),
}

fn check_params(n: &NodeParams) -> Result<f64> {
    let margin = n.margin();
    if margin <= 0.0 {
        return Err(Error::Precondition(format!(
            "node dissipativity requires gamma_bar - delta > 0, got {margin}"
        )));
    }
    Ok(margin)
}

struct BranchSolution {
    p: f64,
    a: f64,
    c: f64,
    objective: f64,
    diagnostics: SolveDiagnostics,
}

/// Branch 1: a >= 0, 2b - p >= 0, c + p margin >= 0 (a pure LP).
fn solve_branch1(b: f64, margin: f64, tol: &Tolerances) -> Result<Option<BranchSolution>> {
    if 2.0 * b < tol.strict {
        return Ok(None); // p <= 2b cannot hold together with p > 0
    }
    let mut prob = LmiProblem::new(*tol);
    let p = prob.scalar_var("p");
    let a = prob.scalar_var("a");
    let c = prob.scalar_var("c");
    prob.add_ineq_strict(prob.expr(p), "p > 0");
    prob.add_ineq(prob.expr(a), "a >= 0");
    prob.add_ineq(
        AffineMatrixExpr::constant(DMatrix::from_element(1, 1, 2.0 * b)).sub(&prob.expr(p)),
        "2b - p >= 0",
    );
    prob.add_ineq(
        prob.expr(c).add(&prob.expr(p).scale(margin)),
        "c + p margin >= 0",
    );
    prob.minimize(prob.expr(a).add(&prob.expr(c)));
    let sol = prob.solve()?;
    if !sol.is_feasible() {
        return Ok(None);
    }
    // Project onto the exact branch region so the certificate satisfies
    // Phi_bar >= 0 identically, not just up to solver residuals.
    let mut pv = sol.scalar(p).clamp(tol.strict, 2.0 * b);
    if !pv.is_finite() {
        pv = tol.strict;
    }
    let av = sol.scalar(a).max(0.0);
    let cv = sol.scalar(c).max(-pv * margin);
    let drift = (pv - sol.scalar(p))
        .abs()
        .max((av - sol.scalar(a)).abs())
        .max((cv - sol.scalar(c)).abs());
    if drift > 10.0 * sol.accepted_tol {
        return Err(Error::Numerical(format!(
            "branch-1 projection moved by {drift:.3e}"
        )));
    }
    Ok(Some(BranchSolution {
        p: pv,
        a: av,
        c: cv,
        objective: av + cv,
        diagnostics: SolveDiagnostics::from_solution(&sol),
    }))
}

/// Branch 2: a > 0, b <= 0, [[2a, p - 2b], [p - 2b, 2(c + p margin)]] >= 0.
fn solve_branch2(b: f64, margin: f64, tol: &Tolerances) -> Result<Option<BranchSolution>> {
    if b > 0.0 {
        return Ok(None);
    }
    let mut prob = LmiProblem::new(*tol);
    let p = prob.scalar_var("p");
    let a = prob.scalar_var("a");
    let c = prob.scalar_var("c");
    prob.add_ineq_strict(prob.expr(p), "p > 0");
    prob.add_ineq_strict(prob.expr(a), "a > 0");
    // Keep the problem bounded: minimizing a + c drives c to its Schur bound,
    // which decreases in p only up to p = 2b <= 0, so p stays finite through
    // the (p - 2b)^2 growth; no extra bound is needed. The Schur form:
    let p_minus_2b = prob
        .expr(p)
        .sub(&AffineMatrixExpr::constant(DMatrix::from_element(
            1,
            1,
            2.0 * b,
        )));
    let schur = AffineMatrixExpr::block(&[
        vec![prob.expr(a).scale(2.0), p_minus_2b.clone()],
        vec![
            p_minus_2b,
            prob.expr(c).add(&prob.expr(p).scale(margin)).scale(2.0),
        ],
    ]);
    prob.add_psd(schur, "branch-2 Schur block");
    prob.minimize(prob.expr(a).add(&prob.expr(c)));
    let sol = prob.solve()?;
    if !sol.is_feasible() {
        return Ok(None);
    }
    let pv = sol.scalar(p).max(tol.strict);
    let av = sol.scalar(a).max(tol.strict);
    let cbound = (pv - 2.0 * b).powi(2) / (4.0 * av) - pv * margin;
    let cv = sol.scalar(c).max(cbound);
    let drift = (cv - sol.scalar(c)).abs();
    if drift > 10.0 * sol.accepted_tol {
        return Err(Error::Numerical(format!(
            "branch-2 projection moved by {drift:.3e}"
        )));
    }
    Ok(Some(BranchSolution {
        p: pv,
        a: av,
        c: cv,
        objective: av + cv,
        diagnostics: SolveDiagnostics::from_solution(&sol),
    }))
}

/// Find a node dissipativity certificate (Eq.-3 disjunction).
pub fn node_dissipativity(
    n: &NodeParams,
    mode: NodeMode,
    tol: &Tolerances,
) -> Result<NodeCertificate> {
    let margin = check_params(n)?;
    let b = match mode {
        NodeMode::MaxIndices => 0.5,
        NodeMode::Fixed(b) => b,
    };
    let b1 = solve_branch1(b, margin, tol)?;
    let b2 = solve_branch2(b, margin, tol)?;
    let best = match (b1, b2) {
        (Some(x), None) | (None, Some(x)) => x,
        (Some(x), Some(y)) => {
            if x.objective <= y.objective {
                x
            } else {
                y
            }
        }
        (None, None) => {
            return Err(Error::Infeasible {
                stage: "node dissipativity".into(),
                detail: format!(
                    "no branch feasible for b = {b} (margin {margin}); \
                     the precondition gamma_bar - delta > 0 guarantees feasibility for b = 1/2"
                ),
            })
        }
    };
    Ok(NodeCertificate {
        x: XSpec::scalar(best.a, b, best.c),
        p: best.p,
        shadow: None,
        diagnostics: best.diagnostics,
    })
}

/// The 4x4 necessary-condition matrix joined into problem P_ik, with
/// b = b_bar = 1/2 (so the (3,4) entry -b + b_bar vanishes):
///
/// ```text
/// [ a      0       a m     a ]
/// [ 0     -cb     -cb      0 ]
/// [ a m   -cb   -m - c     0 ]
/// [ a      0       0      ab ]
/// ```
fn phi_tilde_ik(
    prob: &LmiProblem,
    a: crate::lmicore::VarId,
    c: crate::lmicore::VarId,
    ab: crate::lmicore::VarId,
    cb: crate::lmicore::VarId,
    m: f64,
) -> AffineMatrixExpr {
    let z = || AffineMatrixExpr::zero(1, 1);
    let ea = prob.expr(a);
    let neg_cb = prob.expr(cb).neg();
    let e33 = AffineMatrixExpr::constant(DMatrix::from_element(1, 1, -m)).sub(&prob.expr(c));
    AffineMatrixExpr::block(&[
        vec![ea.clone(), z(), ea.clone().scale(m), ea.clone()],
        vec![z(), neg_cb.clone(), neg_cb.clone(), z()],
        vec![ea.clone().scale(m), neg_cb, e33, z()],
        vec![ea, z(), z(), prob.expr(ab)],
    ])
}

struct PikVars {
    p: crate::lmicore::VarId,
    a: crate::lmicore::VarId,
    c: crate::lmicore::VarId,
    ab: crate::lmicore::VarId,
    cb: crate::lmicore::VarId,
}

fn solve_pik_at(
    n: &NodeParams,
    m_self: f64,
    tol: &Tolerances,
) -> Result<(crate::lmicore::LmiSolution, PikVars)> {
    let margin = n.margin();
    let mut prob = LmiProblem::new(*tol);
    let p = prob.scalar_var("p");
    let a = prob.scalar_var("a");
    let c = prob.scalar_var("c");
    let ab = prob.scalar_var("a_bar");
    let cb = prob.scalar_var("c_bar");
    // Node dissipativity, branch 1 with b = 1/2 (branch 2 requires b <= 0).
    // The strict floor on a is scaled to the recovery margin: As. 1 only
    // needs a > 0, but an epsilon-level a makes the group problem's (1,1)
    // block vanish against its other entries and stalls the interior point.
    // The group stage rescales node supply rates by p_{i,k} anyway, so the
    // floor costs no generality.
    let a_floor = 0.01 * margin;
    prob.add_ineq_strict(prob.expr(p), "p > 0");
    prob.add_ineq(
        prob.expr(a)
            .sub(&AffineMatrixExpr::constant(DMatrix::from_element(
                1, 1, a_floor,
            ))),
        "a >= a_floor",
    );
    prob.add_ineq(
        AffineMatrixExpr::constant(DMatrix::from_element(1, 1, 1.0)).sub(&prob.expr(p)),
        "1 - p >= 0",
    );
    prob.add_ineq(
        prob.expr(c).add(&prob.expr(p).scale(margin)),
        "c + p margin >= 0",
    );
    // Group-level necessary condition.
    prob.add_psd_strict(phi_tilde_ik(&prob, a, c, ab, cb, m_self), "Phi_tilde_ik");
    // Maximize nu + rho + nu_bar + rho_bar.
    prob.minimize(
        prob.expr(a)
            .add(&prob.expr(c))
            .add(&prob.expr(ab))
            .add(&prob.expr(cb)),
    );
    Ok((prob.solve()?, PikVars { p, a, c, ab, cb }))
}

/// Problem P_ik: the Eq.-3 disjunction jointly with the group-level
/// necessary condition, under the IF-OFP parameterization b = b_bar = 1/2.
///
/// `m_self` is the node's intra-group self-loop weight `M_ii[k, k]`. On
/// infeasibility the largest feasible self-loop weight is located by
/// bisection and reported, signalling that the intra-group self-loop is too
/// strong relative to the recovery margin.
pub fn node_problem_pik(n: &NodeParams, m_self: f64, tol: &Tolerances) -> Result<NodeCertificate> {
    let margin = check_params(n)?;
    if m_self < 0.0 {
        return Err(Error::Precondition(format!(
            "m_self must be >= 0, got {m_self}"
        )));
    }
    let (sol, vars) = solve_pik_at(n, m_self, tol)?;
    match sol.status {
        LmiStatus::Optimal | LmiStatus::Feasible => {
            let (pv, av, cv) = (sol.scalar(vars.p), sol.scalar(vars.a), sol.scalar(vars.c));
            // Project onto the exact branch-1 region; Phi_tilde keeps its
            // strict margin since the moves are at solver-residual scale.
            let pv2 = pv.clamp(tol.strict, 1.0);
            let av2 = av.max(0.0);
            let cv2 = cv.max(-pv2 * margin);
            let drift = (pv2 - pv).abs().max((av2 - av).abs()).max((cv2 - cv).abs());
            if drift > 10.0 * sol.accepted_tol {
                return Err(Error::Numerical(format!(
                    "P_ik projection moved by {drift:.3e}"
                )));
            }
            Ok(NodeCertificate {
                x: XSpec::scalar(av2, 0.5, cv2),
                p: pv2,
                shadow: Some(NodeShadow {
                    a_bar: sol.scalar(vars.ab),
                    b_bar: 0.5,
                    c_bar: sol.scalar(vars.cb),
                }),
                diagnostics: SolveDiagnostics::from_solution(&sol),
            })
        }
        LmiStatus::Infeasible => {
            let largest = largest_feasible_m_self(n, m_self, tol)?;
            Err(Error::Infeasible {
                stage: "P_ik".into(),
                detail: format!(
                    "intra-group self-loop too strong: m_self = {m_self} with recovery margin \
                     {margin}; largest feasible self-loop ≈ {largest:.6}; recommendation: reduce \
                     M_ii[k,k] below that value"
                ),
            })
        }
        LmiStatus::NumericalFailure => Err(Error::Numerical(format!(
            "P_ik solve failed: {}",
            sol.detail
        ))),
    }
}

/// Bisect the feasibility boundary of P_ik in the self-loop weight.
pub fn largest_feasible_m_self(n: &NodeParams, upper: f64, tol: &Tolerances) -> Result<f64> {
    let feasible = |m: f64| -> Result<bool> { Ok(solve_pik_at(n, m, tol)?.0.is_feasible()) };
    let mut lo = 0.0;
    if !feasible(lo)? {
        return Ok(0.0);
    }
    let mut hi = upper.max(n.margin());
    if feasible(hi)? {
        return Ok(hi);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn max_indices_recovers_extremal_certificate() {
        // gamma_bar = 0.5, delta = 0: optimum is nu = 0, rho = margin at p = 1.
        let n = NodeParams::new(0.5, 0.0, 0.0).unwrap();
        let cert = node_dissipativity(&n, NodeMode::MaxIndices, &tol()).unwrap();
        assert!((cert.p - 1.0).abs() < 1e-6, "p = {}", cert.p);
        assert!(cert.x.a().abs() < 1e-6, "a = {}", cert.x.a());
        assert!((cert.x.c() + 0.5).abs() < 1e-6, "c = {}", cert.x.c());
        match cert.x.role {
            super::super::XRole::IfOfp { nu, rho } => {
                assert!(nu.abs() < 1e-6);
                assert!((rho - 0.5).abs() < 1e-6);
            }
            ref other => panic!("expected IF-OFP role, got {other:?}"),
        }
    }

    #[test]
    fn branch2_fixed_negative_b() {
        // gamma_bar = 0.4, delta = 0.1, b = -0.1: the corrected branch-2 bound
        // at p = 1, a = 1 is c >= (p - 2b)^2 / (4a) - p margin = 0.36 - 0.3.
        let n = NodeParams::new(0.4, 0.1, 0.0).unwrap();
        let cert = node_dissipativity(&n, NodeMode::Fixed(-0.1), &tol()).unwrap();
        let margin = 0.3;
        let bound = (cert.p + 0.2).powi(2) / (4.0 * cert.x.a()) - cert.p * margin;
        assert!(
            cert.x.c() >= bound - 1e-9,
            "c = {} < bound {}",
            cert.x.c(),
            bound
        );
    }

    #[test]
    fn pik_zero_self_loop_feasible() {
        let n = NodeParams::new(0.4, 0.1, 0.0).unwrap();
        let cert = node_problem_pik(&n, 0.0, &tol()).unwrap();
        assert!(cert.x.a() > 0.0);
        assert!(cert.p > 0.0 && cert.p <= 1.0 + 1e-9);
        let sh = cert.shadow.unwrap();
        assert!(sh.a_bar > 0.0);
        assert!(sh.c_bar < 0.0);
    }

    #[test]
    fn pik_huge_self_loop_infeasible_with_recommendation() {
        let n = NodeParams::new(0.4, 0.1, 0.0).unwrap();
        let err = node_problem_pik(&n, 100.0, &tol()).unwrap_err();
        match err {
            Error::Infeasible { stage, detail } => {
                assert_eq!(stage, "P_ik");
                assert!(detail.contains("largest feasible"), "{detail}");
            }
            other => panic!("expected infeasibility, got {other}"),
        }
    }

    #[test]
    fn pik_feasibility_boundary_near_margin() {
        // The (3,3) entry -m - c with c >= -p margin, p <= 1 forces
        // m < margin; the boundary found by bisection reflects that.
        let n = NodeParams::new(0.4, 0.1, 0.0).unwrap();
        let boundary = largest_feasible_m_self(&n, 1.0, &tol()).unwrap();
        assert!(
            boundary > 0.0 && boundary < n.margin(),
            "boundary = {boundary}"
        );
        assert!(boundary > 0.5 * n.margin(), "boundary = {boundary}");
    }
}
