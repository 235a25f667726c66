//! Dissipativity analysis and synthesis.
//!
//! Node certificates, group certificates, network topology design, generic
//! networked design, necessary-condition problems, scalable mesh stability
//! and the three-stage pipeline (per-node problems, per-group problems, one
//! network problem) are all expressed as LMI feasibility / minimization
//! problems over [`crate::lmicore`].
//!
//! Sign conventions follow the IF-OFP map `X = [[-nu I, I/2], [I/2, -rho I]]`:
//! with supply-rate blocks written `[[a, b], [b, c]]` the passivity indices
//! are `nu = -a` and `rho = -c`, so "maximize the indices" is implemented as
//! minimizing `a + c` (and its shadow analogues).

mod generic;
mod group;
mod network;
mod node;
mod pipeline;
mod sms;

pub use generic::{
    generic_design, necessary_condition_block, GenericDesign, GenericMode, NecessaryShadow,
};
pub use group::group_problem_pi;
pub use network::{
    assemble_group_phi, assemble_network_phi, network_analyze, network_design,
    network_design_export, NetworkGain,
};
pub use node::{node_dissipativity, node_problem_pik, NodeMode};
pub use pipeline::{run_pipeline, PipelineOutput};
pub use sms::{sms_coefficients, sms_report, SmsCoefficients, SmsGroupReport, SmsReport};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmicore::{min_eigenvalue, LmiSolution, LmiStatus, Residuals, Tolerances};

/// Role tag of a dissipativity coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum XRole {
    General,
    Passive,
    IfOfp { nu: f64, rho: f64 },
    L2Gain { gamma: f64 },
}

/// 2x2-block symmetric supply-rate coefficient matrix
/// `X = [[X11, X12], [X21, X22]]` with `X21 = X12^T` implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XSpec {
    pub x11: DMatrix<f64>,
    pub x12: DMatrix<f64>,
    pub x22: DMatrix<f64>,
    pub role: XRole,
}

impl XSpec {
    pub fn general(x11: DMatrix<f64>, x12: DMatrix<f64>, x22: DMatrix<f64>) -> Result<Self> {
        let x = Self {
            x11,
            x12,
            x22,
            role: XRole::General,
        };
        x.validate()?;
        Ok(x)
    }

    /// Passive: `X = [[0, I/2], [I/2, 0]]`.
    pub fn passive(n: usize) -> Self {
        Self {
            x11: DMatrix::zeros(n, n),
            x12: DMatrix::identity(n, n) * 0.5,
            x22: DMatrix::zeros(n, n),
            role: XRole::Passive,
        }
    }

    /// IF-OFP(nu, rho): `X = [[-nu I, I/2], [I/2, -rho I]]`.
    pub fn ifofp(nu: f64, rho: f64, n: usize) -> Self {
        Self {
            x11: DMatrix::identity(n, n) * (-nu),
            x12: DMatrix::identity(n, n) * 0.5,
            x22: DMatrix::identity(n, n) * (-rho),
            role: XRole::IfOfp { nu, rho },
        }
    }

    /// L2G(gamma): `X = [[gamma^2 I, 0], [0, -I]]`.
    pub fn l2_gain(gamma: f64, n: usize) -> Self {
        Self {
            x11: DMatrix::identity(n, n) * (gamma * gamma),
            x12: DMatrix::zeros(n, n),
            x22: -DMatrix::identity(n, n),
            role: XRole::L2Gain { gamma },
        }
    }

    /// Scalar node supply rate `[[a, b], [b, c]]`. Tagged IF-OFP when b = 1/2.
    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        let role = if b == 0.5 {
            XRole::IfOfp { nu: -a, rho: -c }
        } else {
            XRole::General
        };
        Self {
            x11: DMatrix::from_element(1, 1, a),
            x12: DMatrix::from_element(1, 1, b),
            x22: DMatrix::from_element(1, 1, c),
            role,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x11.nrows();
        let m = self.x22.nrows();
        if self.x11.ncols() != n || self.x22.ncols() != m {
            return Err(Error::Dimension(
                "XSpec diagonal blocks must be square".into(),
            ));
        }
        if self.x12.nrows() != n || self.x12.ncols() != m {
            return Err(Error::Dimension(format!(
                "XSpec x12 must be {n}x{m}, got {}x{}",
                self.x12.nrows(),
                self.x12.ncols()
            )));
        }
        let sym_tol = 1e-12;
        let asym11 = (&self.x11 - self.x11.transpose()).abs().max();
        let asym22 = (&self.x22 - self.x22.transpose()).abs().max();
        if asym11 > sym_tol || asym22 > sym_tol {
            return Err(Error::Dimension(
                "XSpec diagonal blocks must be symmetric".into(),
            ));
        }
        match self.role {
            XRole::Passive => {
                let ok = self.x11.iter().all(|&v| v == 0.0)
                    && self.x22.iter().all(|&v| v == 0.0)
                    && self.x12 == DMatrix::identity(n, n) * 0.5;
                if !ok {
                    return Err(Error::Precondition(
                        "Passive role requires X11=0, X12=I/2, X22=0".into(),
                    ));
                }
            }
            XRole::IfOfp { nu, rho } => {
                let ok = self.x11 == DMatrix::identity(n, n) * (-nu)
                    && self.x12 == DMatrix::identity(n, n) * 0.5
                    && self.x22 == DMatrix::identity(n, n) * (-rho);
                if !ok {
                    return Err(Error::Precondition(
                        "IF-OFP role requires X11=-nu I, X12=I/2, X22=-rho I".into(),
                    ));
                }
            }
            XRole::L2Gain { gamma } => {
                let ok = self.x11 == DMatrix::identity(n, n) * (gamma * gamma)
                    && self.x12.iter().all(|&v| v == 0.0)
                    && self.x22 == -DMatrix::identity(n, n);
                if !ok {
                    return Err(Error::Precondition(
                        "L2G role requires X11=gamma^2 I, X12=0, X22=-I".into(),
                    ));
                }
            }
            XRole::General => {}
        }
        Ok(())
    }

    /// Input dimension (rows of X11).
    pub fn input_dim(&self) -> usize {
        self.x11.nrows()
    }

    /// Output dimension (rows of X22).
    pub fn output_dim(&self) -> usize {
        self.x22.nrows()
    }

    /// Assembled symmetric matrix `[[X11, X12], [X21, X22]]`.
    pub fn assemble(&self) -> DMatrix<f64> {
        let (n, m) = (self.input_dim(), self.output_dim());
        let mut x = DMatrix::zeros(n + m, n + m);
        x.view_mut((0, 0), (n, n)).copy_from(&self.x11);
        x.view_mut((0, n), (n, m)).copy_from(&self.x12);
        x.view_mut((n, 0), (m, n)).copy_from(&self.x12.transpose());
        x.view_mut((n, n), (m, m)).copy_from(&self.x22);
        x
    }

    /// Composability requirement (As. 1): `X11 > 0`.
    pub fn x11_positive_definite(&self, tol: f64) -> bool {
        min_eigenvalue(&self.x11).map(|l| l > tol).unwrap_or(false)
    }

    /// Supply rate value `[u; y]^T X [u; y]`.
    pub fn supply(&self, u: &[f64], y: &[f64]) -> f64 {
        let n = self.input_dim();
        let m = self.output_dim();
        assert_eq!(u.len(), n);
        assert_eq!(y.len(), m);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += u[i] * self.x11[(i, j)] * u[j];
            }
            for j in 0..m {
                s += 2.0 * u[i] * self.x12[(i, j)] * y[j];
            }
        }
        for i in 0..m {
            for j in 0..m {
                s += y[i] * self.x22[(i, j)] * y[j];
            }
        }
        s
    }

    /// Scalar accessors for 1x1 node supply rates.
    pub fn a(&self) -> f64 {
        self.x11[(0, 0)]
    }
    pub fn b(&self) -> f64 {
        self.x12[(0, 0)]
    }
    pub fn c(&self) -> f64 {
        self.x22[(0, 0)]
    }
}

/// Solver-side diagnostics carried with every certificate for audit and
/// regression diffing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub status: LmiStatus,
    pub objective: Option<f64>,
    pub residual_psd: f64,
    pub residual_elem: f64,
    pub iterations: u32,
    pub detail: String,
}

impl SolveDiagnostics {
    pub fn from_solution(sol: &LmiSolution) -> Self {
        Self {
            status: sol.status,
            objective: sol.objective_value,
            residual_psd: sol.residuals.psd,
            residual_elem: sol.residuals.elem,
            iterations: sol.iterations,
            detail: sol.detail.clone(),
        }
    }

    /// Diagnostics for a certificate built in closed form rather than solved.
    pub fn constructed() -> Self {
        Self {
            status: LmiStatus::Feasible,
            objective: None,
            residual_psd: 0.0,
            residual_elem: 0.0,
            iterations: 0,
            detail: "constructed in closed form".into(),
        }
    }

    pub fn with_residuals(mut self, r: Residuals) -> Self {
        self.residual_psd = r.psd;
        self.residual_elem = r.elem;
        self
    }
}

/// Group-level shadow variables carried by a node certificate from problem
/// P_ik (the node's view of the group supply rate, b_bar fixed at 1/2).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NodeShadow {
    pub a_bar: f64,
    pub b_bar: f64,
    pub c_bar: f64,
}

/// Node dissipativity certificate: supply rate X = [[a,b],[b,c]] and storage
/// V(x) = p x^2 / 2 with p > 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeCertificate {
    pub x: XSpec,
    pub p: f64,
    pub shadow: Option<NodeShadow>,
    pub diagnostics: SolveDiagnostics,
}

impl NodeCertificate {
    /// The closed-form passive certificate: X = [[0, 1/2], [1/2, 0]], p = 1.
    /// Valid whenever `gamma_bar - delta >= 0`.
    pub fn passive(params: &crate::netmodel::NodeParams) -> Result<Self> {
        if params.margin() < 0.0 {
            return Err(Error::Precondition(format!(
                "passivity requires gamma_bar - delta >= 0, got {}",
                params.margin()
            )));
        }
        Ok(Self {
            x: XSpec::passive(1),
            p: 1.0,
            shadow: None,
            diagnostics: SolveDiagnostics::constructed(),
        })
    }

    /// The extremal closed-form IF-OFP certificate: nu = 0,
    /// rho = p (gamma_bar - delta) at p = 1 (the largest output index a unit
    /// storage multiplier admits).
    pub fn ifofp_extremal(params: &crate::netmodel::NodeParams) -> Result<Self> {
        if params.margin() < 0.0 {
            return Err(Error::Precondition(format!(
                "IF-OFP requires gamma_bar - delta >= 0, got {}",
                params.margin()
            )));
        }
        Ok(Self {
            x: XSpec::ifofp(0.0, params.margin(), 1),
            p: 1.0,
            shadow: None,
            diagnostics: SolveDiagnostics::constructed(),
        })
    }
}

/// Network-level shadow carried by a group certificate from problem P_i:
/// the L2G parameterization `X_bar_i = [[gamma_bar_i I, 0], [0, -I]]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GroupShadow {
    pub gamma_bar: f64,
}

/// Group dissipativity certificate (from group input u_i^G to state x_i).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupCertificate {
    /// Diagonal X11 / X22 blocks, X12 fixed at I/2.
    pub x: XSpec,
    /// Per-node storage multipliers p_{i,k} > 0.
    pub p_nodes: Vec<f64>,
    pub shadow: Option<GroupShadow>,
    pub diagnostics: SolveDiagnostics,
}

impl GroupCertificate {
    pub fn len(&self) -> usize {
        self.p_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_nodes.is_empty()
    }

    /// Diagonal entries of X11 (all positive under As. 1).
    pub fn d11(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.x.x11[(k, k)]).collect()
    }

    pub fn d22(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.x.x22[(k, k)]).collect()
    }
}

/// Choice of the constant Y in the spectral-norm deviation constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum YChoice {
    Identity,
    Estimate(DMatrix<f64>),
}

/// Configuration of the network design problem P.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Weight on the interconnection-deviation term ||L - X_p11 M0||_1.
    pub c_m: f64,
    /// Fractional deviation limit in [0, 1]: (1 - delta_m) M0 <= M <= M0.
    pub delta_m: f64,
    /// Weight on ||X_p11||_1.
    pub alpha: f64,
    /// Weight on gamma_bar.
    pub beta: f64,
    pub y_choice: YChoice,
    /// Include the spectral-norm deviation LMI.
    pub enforce_spectral: bool,
    /// Include the elementwise deviation bounds.
    pub enforce_elementwise: bool,
    /// Drop the upper bound M <= M0 (research flag; designs may then amplify
    /// transmission).
    pub relax_upper: bool,
    /// Add the SMS small-gain constraints to problem P.
    pub sms: bool,
    pub tol: Tolerances,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            c_m: 1.0,
            delta_m: 1.0,
            alpha: 0.0,
            beta: 1.0,
            y_choice: YChoice::Identity,
            enforce_spectral: false,
            enforce_elementwise: true,
            relax_upper: false,
            sms: false,
            tol: Tolerances::default(),
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_m < 0.0 || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("design weights must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.delta_m) {
            return Err(Error::Config(format!(
                "delta_m must lie in [0, 1], got {}",
                self.delta_m
            )));
        }
        Ok(())
    }
}

/// Result of the network topology design (problem P).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDesign {
    /// Designed inter-group transmission matrix M = (X_p11)^{-1} L.
    pub m_inter: DMatrix<f64>,
    /// Certified value of the decision variable g with X11 = g I.
    pub gamma_bar: f64,
    /// Reported L2 gain, gamma = sqrt(gamma_bar).
    pub gamma: f64,
    /// Group storage multipliers p_i.
    pub p_groups: Vec<f64>,
    /// Raw design variable L (shares the sparsity of M0).
    pub l_matrix: DMatrix<f64>,
    pub objective: f64,
    pub sms: Option<SmsReport>,
    pub diagnostics: SolveDiagnostics,
}
