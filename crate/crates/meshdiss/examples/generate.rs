//! Generate a random hierarchical spreading network, save it to JSON and
//! load it back.
//!
//! Run with: cargo run --example generate

use meshdiss::netmodel::{generate_random, load_network, save_network, GenConfig};

fn main() {
    let cfg = GenConfig::reference(7);
    let net = generate_random(&cfg).unwrap();
    println!(
        "generated {} groups, {} nodes",
        net.groups.len(),
        net.total_nodes()
    );
    for (i, g) in net.groups.iter().enumerate() {
        let edges = g.m_intra.iter().filter(|&&v| v != 0.0).count();
        let margins: Vec<f64> = g.nodes.iter().map(|n| n.margin()).collect();
        println!(
            "  group {i}: {} nodes, {} intra edges, recovery margins {:.2}..{:.2}",
            g.len(),
            edges,
            margins.iter().cloned().fold(f64::INFINITY, f64::min),
            margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
    }
    println!(
        "inter-group edges: {}",
        net.m_inter.iter().filter(|&&v| v != 0.0).count()
    );

    let dir = std::env::temp_dir().join("meshdiss-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("network.json");
    save_network(&net, &path).unwrap();
    let reloaded = load_network(&path).unwrap();
    assert_eq!(net, reloaded);
    println!("round-tripped through {}", path.display());
}
