//! Generic networked design: synthesize an interconnection matrix for
//! arbitrary X-dissipative subsystems so the closed network meets an L2-gain
//! target, plus the per-subsystem necessary condition.
//!
//! Run with: cargo run --example generic_interconnection

use meshdiss::dissipativity::{generic_design, necessary_condition_block, GenericMode, XSpec};
use meshdiss::lmicore::Tolerances;
use nalgebra::DMatrix;

fn main() {
    let tol = Tolerances::default();
    let subsystems = vec![
        XSpec::ifofp(-0.1, 0.4, 1),
        XSpec::ifofp(-0.2, 0.3, 1),
        XSpec::ifofp(-0.05, 0.5, 1),
    ];
    let target = XSpec::l2_gain(5.0, 3);

    let fixed = generic_design(&subsystems, &target, GenericMode::FixedBlocks, &tol).unwrap();
    println!("fixed-blocks design: p = {:?}", fixed.p);
    println!("M_uy =\n{:.4}", fixed.m_uy);

    let full = generic_design(&subsystems, &target, GenericMode::Full, &tol).unwrap();
    println!("full design: p = {:?}", full.p);

    // Necessary condition for a subsystem with a self-connection block.
    let shadow =
        necessary_condition_block(&subsystems[0], &DMatrix::from_element(1, 1, 0.1), &tol).unwrap();
    println!(
        "necessary-condition shadow: X11 = {:.4}, X22 = {:.4}",
        shadow.x11[(0, 0)],
        shadow.x22[(0, 0)]
    );

    // A strongly self-connected subsystem cannot participate.
    match necessary_condition_block(&subsystems[0], &DMatrix::from_element(1, 1, 50.0), &tol) {
        Err(e) => println!("m_self = 50: {e}"),
        Ok(_) => unreachable!(),
    }
}
