//! L2-gain analysis of given topologies: the nominal network (expected
//! uncertifiable for reference parameters), the designed one, and a pruned
//! baseline.
//!
//! Run with: cargo run --release --example analyze_gain

use meshdiss::dissipativity::{network_analyze, run_pipeline, DesignConfig};
use meshdiss::evaluation::BaselineSpec;
use meshdiss::lmicore::Tolerances;
use meshdiss::netmodel::{generate_random, GenConfig};

fn main() {
    let tol = Tolerances::default();
    let net = generate_random(&GenConfig::reference(7)).unwrap();
    let out = run_pipeline(&net, &DesignConfig::default()).unwrap();

    let report = |name: &str, m: Option<&nalgebra::DMatrix<f64>>| match network_analyze(
        &net,
        &out.group_certs,
        m,
        &tol,
    )
    .unwrap()
    {
        Some(g) => println!(
            "{name}: gamma = {:.3} (gamma_bar = {:.3})",
            g.gamma, g.gamma_bar
        ),
        None => println!("{name}: uncertifiable"),
    };
    report("nominal topology", None);
    report("designed topology", Some(&out.design.m_inter));
    let pruned = BaselineSpec::Tbc { t_m: 0.18 }.apply(&net.m_inter);
    report("threshold-pruned (t_m = 0.18)", Some(&pruned));
    let zero = nalgebra::DMatrix::zeros(net.total_nodes(), net.total_nodes());
    report("decoupled groups", Some(&zero));
}
