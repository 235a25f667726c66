//! LMI modeling layer: symmetric-matrix decision variables, affine matrix
//! expressions, PSD and elementwise constraints, and a linear objective,
//! lowered to a conic program over PSD / nonnegative cones and handed to an
//! interior-point backend. Every accepted solution is re-verified here by
//! direct eigenvalue computation, independent of the backend's own residuals.

mod expr;
mod solver;

pub use expr::AffineMatrixExpr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Handle to a declared matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Structural restriction of a matrix variable. Structured variables are
/// parameterized by their free entries only.
#[derive(Debug, Clone)]
pub enum VarStructure {
    /// Square symmetric, n(n+1)/2 free entries.
    FullSymmetric,
    /// Square diagonal, n free entries.
    Diagonal,
    /// Square multiple of the identity, 1 free entry.
    ScalarTimesIdentity,
    /// Rectangular with free entries only at the given (row, col) positions.
    FixedSparsity(Vec<(usize, usize)>),
}

#[derive(Debug, Clone)]
pub struct MatrixVariable {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub structure: VarStructure,
    pub(crate) param_offset: usize,
    pub(crate) n_params: usize,
}

impl MatrixVariable {
    fn n_params_for(rows: usize, _cols: usize, structure: &VarStructure) -> usize {
        match structure {
            VarStructure::FullSymmetric => rows * (rows + 1) / 2,
            VarStructure::Diagonal => rows,
            VarStructure::ScalarTimesIdentity => 1,
            VarStructure::FixedSparsity(p) => p.len(),
        }
    }

    /// Reconstruct the matrix value from its parameter slice.
    pub(crate) fn materialize(&self, params: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        match &self.structure {
            VarStructure::FullSymmetric => {
                let mut idx = 0;
                for c in 0..self.cols {
                    for r in 0..=c {
                        m[(r, c)] = params[idx];
                        m[(c, r)] = params[idx];
                        idx += 1;
                    }
                }
            }
            VarStructure::Diagonal => {
                for (j, &v) in params.iter().enumerate() {
                    m[(j, j)] = v;
                }
            }
            VarStructure::ScalarTimesIdentity => {
                for i in 0..self.rows {
                    m[(i, i)] = params[0];
                }
            }
            VarStructure::FixedSparsity(p) => {
                for (j, &(r, c)) in p.iter().enumerate() {
                    m[(r, c)] = params[j];
                }
            }
        }
        m
    }
}

/// Numeric tolerances shared by every LMI problem.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Feasibility tolerance on re-verified residuals.
    pub feas: f64,
    /// Duality-gap tolerance passed to the backend.
    pub gap: f64,
    /// Margin realizing strict inequalities: `X > 0` becomes `X >= strict * I`.
    pub strict: f64,
    pub max_iter: u32,
    /// Wall-clock cap per solve, seconds. A capped solve whose final iterate
    /// verifies feasible is reported Feasible; otherwise it is reported
    /// Infeasible with an "uncertified" detail, like an iteration-limit exit.
    pub time_limit: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feas: 1e-8,
            gap: 1e-8,
            strict: 1e-6,
            max_iter: 200,
            time_limit: 30.0,
        }
    }
}

/// Solve outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LmiStatus {
    Optimal,
    Feasible,
    Infeasible,
    NumericalFailure,
}

/// Residuals computed by this crate's own eigenvalue re-check.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// Largest shortfall of any PSD constraint's minimum eigenvalue.
    pub psd: f64,
    /// Largest violation of any scalar inequality.
    pub elem: f64,
}

#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub status: LmiStatus,
    /// Matrix value per declared variable (empty unless Optimal/Feasible).
    pub assignment: Vec<DMatrix<f64>>,
    pub objective_value: Option<f64>,
    pub residuals: Residuals,
    /// Residual bound the acceptance used (10x feas for the independent check).
    pub accepted_tol: f64,
    pub iterations: u32,
    /// Backend status detail, e.g. distinguishing certified infeasibility
    /// from an iteration limit with a large residual.
    pub detail: String,
}

impl LmiSolution {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, LmiStatus::Optimal | LmiStatus::Feasible)
    }

    pub fn value(&self, id: VarId) -> &DMatrix<f64> {
        &self.assignment[id.0]
    }

    pub fn scalar(&self, id: VarId) -> f64 {
        self.assignment[id.0][(0, 0)]
    }
}

pub(crate) struct PsdConstraint {
    pub expr: AffineMatrixExpr,
    /// Required margin: expr ⪰ shift * I.
    pub shift: f64,
    pub label: String,
}

pub(crate) struct ScalarConstraint {
    pub expr: AffineMatrixExpr,
    /// Required margin: expr >= shift.
    pub shift: f64,
    pub label: String,
}

/// An LMI feasibility / minimization problem under construction.
pub struct LmiProblem {
    pub(crate) vars: Vec<MatrixVariable>,
    pub(crate) n_params: usize,
    pub(crate) psd: Vec<PsdConstraint>,
    pub(crate) scalar: Vec<ScalarConstraint>,
    pub(crate) objective: Option<AffineMatrixExpr>,
    pub tol: Tolerances,
}

impl LmiProblem {
    pub fn new(tol: Tolerances) -> Self {
        Self {
            vars: Vec::new(),
            n_params: 0,
            psd: Vec::new(),
            scalar: Vec::new(),
            objective: None,
            tol,
        }
    }

    pub fn add_var(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        structure: VarStructure,
    ) -> VarId {
        if let VarStructure::FixedSparsity(p) = &structure {
            for &(r, c) in p {
                assert!(
                    r < rows && c < cols,
                    "sparsity pattern outside dims for {name}"
                );
            }
        } else {
            assert_eq!(rows, cols, "structured variable {name} must be square");
        }
        let n = MatrixVariable::n_params_for(rows, cols, &structure);
        let v = MatrixVariable {
            name: name.to_string(),
            rows,
            cols,
            structure,
            param_offset: self.n_params,
            n_params: n,
        };
        self.n_params += n;
        self.vars.push(v);
        VarId(self.vars.len() - 1)
    }

    pub fn scalar_var(&mut self, name: &str) -> VarId {
        self.add_var(name, 1, 1, VarStructure::ScalarTimesIdentity)
    }

    /// Expression wrapping a bare variable occurrence.
    pub fn expr(&self, id: VarId) -> AffineMatrixExpr {
        let v = &self.vars[id.0];
        AffineMatrixExpr::var(id, v.rows, v.cols)
    }

    /// Constrain `expr ⪰ 0` (non-strict).
    pub fn add_psd(&mut self, expr: AffineMatrixExpr, label: &str) {
        assert_eq!(
            expr.rows(),
            expr.cols(),
            "PSD constraint must be square: {label}"
        );
        self.psd.push(PsdConstraint {
            expr,
            shift: 0.0,
            label: label.to_string(),
        });
    }

    /// Constrain `expr > 0`, realized as `expr ⪰ strict * I`.
    pub fn add_psd_strict(&mut self, expr: AffineMatrixExpr, label: &str) {
        assert_eq!(
            expr.rows(),
            expr.cols(),
            "PSD constraint must be square: {label}"
        );
        self.psd.push(PsdConstraint {
            expr,
            shift: self.tol.strict,
            label: label.to_string(),
        });
    }

    /// Constrain a 1x1 expression `expr >= 0`.
    pub fn add_ineq(&mut self, expr: AffineMatrixExpr, label: &str) {
        assert_eq!(
            (expr.rows(), expr.cols()),
            (1, 1),
            "scalar constraint must be 1x1: {label}"
        );
        self.scalar.push(ScalarConstraint {
            expr,
            shift: 0.0,
            label: label.to_string(),
        });
    }

    /// Constrain a 1x1 expression `expr > 0`, realized as `expr >= strict`.
    pub fn add_ineq_strict(&mut self, expr: AffineMatrixExpr, label: &str) {
        assert_eq!(
            (expr.rows(), expr.cols()),
            (1, 1),
            "scalar constraint must be 1x1: {label}"
        );
        self.scalar.push(ScalarConstraint {
            expr,
            shift: self.tol.strict,
            label: label.to_string(),
        });
    }

    /// Minimize a 1x1 affine expression.
    pub fn minimize(&mut self, expr: AffineMatrixExpr) {
        assert_eq!((expr.rows(), expr.cols()), (1, 1), "objective must be 1x1");
        self.objective = Some(expr);
    }

    pub fn solve(&self) -> Result<LmiSolution> {
        solver::solve(self)
    }

    /// Self-describing conic export (cones, A triplets, b, q) for
    /// cross-checking against external solvers.
    pub fn conic_export(&self) -> serde_json::Value {
        solver::conic_export(self)
    }
}

/// True iff the symmetrized matrix has minimum eigenvalue >= -tol.
pub fn check_psd(m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(min_eigenvalue(m)? >= -tol)
}

/// Minimum eigenvalue of the symmetrized matrix (m + m^T)/2.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "check_psd requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    Ok(eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_problem() -> LmiProblem {
        LmiProblem::new(Tolerances::default())
    }

    #[test]
    fn minimize_t_on_psd_disc() {
        // minimize t s.t. [[t, 1], [1, t]] ⪰ 0; eigenvalues t ± 1, so t* = 1.
        let mut p = default_problem();
        let t = p.scalar_var("t");
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 1)] = 1.0;
        c[(1, 0)] = 1.0;
        let expr = AffineMatrixExpr::block(&[
            vec![p.expr(t), AffineMatrixExpr::zero(1, 1)],
            vec![AffineMatrixExpr::zero(1, 1), p.expr(t)],
        ])
        .add(&AffineMatrixExpr::constant(c));
        p.add_psd(expr, "disc");
        p.minimize(p.expr(t));
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, LmiStatus::Optimal);
        assert!((sol.scalar(t) - 1.0).abs() < 1e-6, "t = {}", sol.scalar(t));
    }

    #[test]
    fn scalar_feasibility_returns_strict_margin() {
        let mut p = default_problem();
        let x = p.scalar_var("x");
        p.add_ineq_strict(p.expr(x), "x > 0");
        // Keep the problem bounded so the minimum sits at the margin.
        p.minimize(p.expr(x));
        let sol = p.solve().unwrap();
        assert!(sol.is_feasible());
        assert!(
            (sol.scalar(x) - p.tol.strict).abs() < 1e-7,
            "x = {}",
            sol.scalar(x)
        );
    }

    #[test]
    fn constant_indefinite_constraint_is_infeasible() {
        // [[1, 2], [2, 1]] has eigenvalues {3, -1}: no variables can fix it.
        let mut p = default_problem();
        let _unused = p.scalar_var("unused");
        p.add_psd(
            AffineMatrixExpr::constant(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])),
            "indefinite",
        );
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, LmiStatus::Infeasible, "detail: {}", sol.detail);
    }

    #[test]
    fn check_psd_examples() {
        assert!(check_psd(&DMatrix::identity(3, 3), 0.0).unwrap());
        assert!(!check_psd(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 1e-9).unwrap());
        assert!(check_psd(&DMatrix::zeros(2, 2), 0.0).unwrap());
        assert!(check_psd(&DMatrix::from_row_slice(1, 2, &[0.0, 0.0]), 0.0).is_err());
    }

    #[test]
    fn structured_variables_materialize() {
        let mut p = default_problem();
        let d = p.add_var("d", 3, 3, VarStructure::Diagonal);
        let s = p.add_var("s", 2, 2, VarStructure::FullSymmetric);
        let v = &p.vars[d.0];
        assert_eq!(v.n_params, 3);
        let m = v.materialize(&[1.0, 2.0, 3.0]);
        assert_eq!(m[(1, 1)], 2.0);
        assert_eq!(m[(0, 1)], 0.0);
        let v = &p.vars[s.0];
        assert_eq!(v.n_params, 3);
        let m = v.materialize(&[1.0, 2.0, 3.0]);
        assert_eq!(m[(0, 1)], m[(1, 0)]);
    }
}
