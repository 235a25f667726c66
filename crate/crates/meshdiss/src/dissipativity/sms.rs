//! Scalable mesh stability: small-gain coefficients derived from group
//! certificates and the post-hoc row-gain check
//! `lambda1_i * sum_j |M^{ij}| < 1`.
//!
//! With quadratic storage `V_i = x_i^T P_i x_i`, `P_i = diag(p_{i,k}) / 2`
//! from node storage composition, the bounding matrices are chosen as
//! `Q_i = -sym(X_i^22 + X_i^21) - eps I` (must be PD, else SMS is
//! inapplicable) and `R_i = sym(X_i^11 + X_i^12) + eps I`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::GroupCertificate;
use crate::error::{Error, Result};
use crate::netmodel::SpreadingNetwork;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmsCoefficients {
    /// Input-to-state gain factor: sqrt(lmax(R) lmax(P) / (lmin(P) lmin(Q))).
    pub lambda1: f64,
    /// Transient factor: sqrt(lmax(P) / lmin(P)).
    pub lambda2: f64,
    /// Decay rate: lmin(Q) / lmax(P).
    pub mu: f64,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = sym(m).symmetric_eigen();
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Per-group SMS coefficients from a group certificate.
pub fn sms_coefficients(cert: &GroupCertificate, eps: f64) -> Result<SmsCoefficients> {
    let n = cert.len();
    let x21 = cert.x.x12.transpose();
    let q = -(sym(&(&cert.x.x22 + &x21))) - DMatrix::identity(n, n) * eps;
    let (q_min, _) = eig_range(&q);
    if q_min <= 0.0 {
        return Err(Error::SmsInapplicable(format!(
            "Q = -sym(X22 + X21) - eps I is not positive definite (lambda_min = {q_min:.3e}); \
             the certificate's output passivity is too weak for the small-gain bound"
        )));
    }
    let r = sym(&(&cert.x.x11 + &cert.x.x12)) + DMatrix::identity(n, n) * eps;
    let (_, r_max) = eig_range(&r);
    let p = DMatrix::from_fn(
        n,
        n,
        |i, j| if i == j { 0.5 * cert.p_nodes[i] } else { 0.0 },
    );
    let (p_min, p_max) = eig_range(&p);
    if p_min <= 0.0 {
        return Err(Error::SmsInapplicable(format!(
            "storage matrix P is not positive definite (lambda_min = {p_min:.3e})"
        )));
    }
    Ok(SmsCoefficients {
        lambda1: (r_max * p_max / (p_min * q_min)).sqrt(),
        lambda2: (p_max / p_min).sqrt(),
        mu: q_min / p_max,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmsGroupReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    /// lambda1_i * sum_j |M^{ij}| (spectral norms of the inter blocks).
    pub row_gain: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmsReport {
    pub groups: Vec<SmsGroupReport>,
    pub pass: bool,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 || m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Post-hoc SMS check of an interconnection matrix against the certificates.
pub fn sms_report(
    net: &SpreadingNetwork,
    m_inter: &DMatrix<f64>,
    certs: &[GroupCertificate],
    eps: f64,
) -> Result<SmsReport> {
    let n_groups = net.groups.len();
    let mut groups = Vec::with_capacity(n_groups);
    let mut pass = true;
    for i in 0..n_groups {
        let coeffs = sms_coefficients(&certs[i], eps)
            .map_err(|e| Error::SmsInapplicable(format!("group {i}: {e}")))?;
        let mut row_gain = 0.0;
        for j in 0..n_groups {
            if i == j {
                continue;
            }
            row_gain += spectral_norm(&net.inter_block(m_inter, i, j));
        }
        row_gain *= coeffs.lambda1;
        let ok = row_gain < 1.0;
        pass &= ok;
        groups.push(SmsGroupReport {
            lambda1: coeffs.lambda1,
            lambda2: coeffs.lambda2,
            mu: coeffs.mu,
            row_gain,
            pass: ok,
        });
    }
    Ok(SmsReport { groups, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissipativity::{SolveDiagnostics, XRole, XSpec};
    use crate::netmodel::{generate_random, GenConfig};

    fn cert(d11: f64, d22: f64, p: Vec<f64>) -> GroupCertificate {
        let n = p.len();
        GroupCertificate {
            x: XSpec {
                x11: DMatrix::identity(n, n) * d11,
                x12: DMatrix::identity(n, n) * 0.5,
                x22: DMatrix::identity(n, n) * d22,
                role: XRole::General,
            },
            p_nodes: p,
            shadow: None,
            diagnostics: SolveDiagnostics::constructed(),
        }
    }

    #[test]
    fn uniform_storage_gives_lambda2_one() {
        let c = cert(0.1, -2.0, vec![0.7, 0.7, 0.7]);
        let k = sms_coefficients(&c, 1e-6).unwrap();
        assert!((k.lambda2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weak_output_passivity_is_inapplicable() {
        // X22 = -0.4 I gives Q = (0.4 - 0.5) I - eps I which is negative.
        let c = cert(0.1, -0.4, vec![1.0, 1.0]);
        assert!(matches!(
            sms_coefficients(&c, 1e-6),
            Err(Error::SmsInapplicable(_))
        ));
    }

    #[test]
    fn zero_interconnection_trivially_passes() {
        let mut cfg = GenConfig::reference(3);
        cfg.group_sizes = vec![2, 2];
        cfg.p_inter = 0.0;
        let net = generate_random(&cfg).unwrap();
        let certs = vec![
            cert(0.1, -2.0, vec![1.0, 1.0]),
            cert(0.1, -2.0, vec![1.0, 1.0]),
        ];
        let report = sms_report(&net, &net.m_inter, &certs, 1e-6).unwrap();
        assert!(report.pass);
        assert!(report.groups.iter().all(|g| g.row_gain == 0.0));
    }
}
