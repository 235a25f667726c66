//! Node-level dissipativity certificates and the independent grid oracle.
//!
//! Run with: cargo run --example node_certificates

use meshdiss::dissipativity::{node_dissipativity, node_problem_pik, NodeCertificate, NodeMode};
use meshdiss::evaluation::{verify_node_certificate, OracleGrid};
use meshdiss::lmicore::Tolerances;
use meshdiss::netmodel::NodeParams;

fn main() {
    let tol = Tolerances::default();
    let grid = OracleGrid::default();
    let node = NodeParams::new(0.6, 0.03, 0.2).unwrap();

    // Closed-form certificates.
    let passive = NodeCertificate::passive(&node).unwrap();
    let report = verify_node_certificate(&passive, &node, &grid);
    println!(
        "passive certificate: oracle min = {:.3e}, pass = {}",
        report.min_value, report.pass
    );

    let ifofp = NodeCertificate::ifofp_extremal(&node).unwrap();
    let report = verify_node_certificate(&ifofp, &node, &grid);
    println!(
        "IF-OFP certificate (nu = 0, rho = {:.3}): oracle min = {:.3e}, pass = {}",
        node.margin(),
        report.min_value,
        report.pass
    );

    // Solver-found certificate with maximal indices.
    let cert = node_dissipativity(&node, NodeMode::MaxIndices, &tol).unwrap();
    println!(
        "solved certificate: a = {:.4}, b = {:.1}, c = {:.4}, p = {:.4}",
        cert.x.a(),
        cert.x.b(),
        cert.x.c(),
        cert.p
    );
    let report = verify_node_certificate(&cert, &node, &grid);
    println!(
        "  oracle min = {:.3e} at (u, x) = ({}, {})",
        report.min_value, report.argmin_u, report.argmin_x
    );

    // Joint problem with the group-level necessary condition for a node
    // carrying an intra-group self-loop.
    let cert = node_problem_pik(&node, 0.2, &tol).unwrap();
    let shadow = cert.shadow.unwrap();
    println!(
        "P_ik certificate at m_self = 0.2: a = {:.4}, c = {:.4}, shadow (a, c) = ({:.4}, {:.4})",
        cert.x.a(),
        cert.x.c(),
        shadow.a_bar,
        shadow.c_bar
    );
    let report = verify_node_certificate(&cert, &node, &grid);
    println!("  oracle pass = {}", report.pass);

    // A self-loop stronger than the recovery margin is infeasible.
    match node_problem_pik(&node, 5.0, &tol) {
        Err(e) => println!("m_self = 5.0: {e}"),
        Ok(_) => unreachable!(),
    }
}
