//! Table-style comparison of design methods at matched effort: no
//! interconnections, the nominal network, the dissipativity-based design,
//! and both pruning baselines, all simulated against the same disturbance
//! realization.
//!
//! Run with: cargo run --release --example compare_baselines

use meshdiss::cli::{compare_run, CompareSetup};
use meshdiss::dissipativity::DesignConfig;
use meshdiss::netmodel::{generate_random, GenConfig};

fn main() {
    let net = generate_random(&GenConfig::reference(7)).unwrap();
    let setup = CompareSetup::new(42, DesignConfig::default());
    let (report, _series, _times) = compare_run(&net, &setup).unwrap();
    println!("{:<34} {:>9} {:>9} {:>10}", "method", "J_x", "J_M", "gamma");
    for row in &report.rows {
        println!(
            "{:<34} {:>9.4} {:>9.4} {:>10}",
            row.method,
            row.j_x,
            row.j_m,
            row.gamma
                .map(|g| format!("{g:.2}"))
                .unwrap_or_else(|| "-".into())
        );
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
}
