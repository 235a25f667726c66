//! End-to-end integration: file round trips through the pipeline,
//! certificate-tree serialization, oracle agreement, and the CLI binary's
//! exit-code contract.

use meshdiss::dissipativity::{run_pipeline, DesignConfig};
use meshdiss::evaluation::{
    verify_node_certificate, verify_trajectory_dissipation, DissipationLevel, OracleGrid,
};
use meshdiss::netmodel::{
    generate_random, load_network, save_network, GenConfig, SpreadingNetwork,
};
use meshdiss::sim::{simulate, DisturbanceProfile};

fn small_net(seed: u64) -> SpreadingNetwork {
    let mut cfg = GenConfig::reference(seed);
    cfg.group_sizes = vec![3, 2];
    generate_random(&cfg).unwrap()
}

#[test]
fn file_round_trip_through_pipeline() {
    let net = small_net(3);
    let dir = std::env::temp_dir().join("meshdiss-pipeline-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("net.json");
    save_network(&net, &path).unwrap();
    let loaded = load_network(&path).unwrap();
    assert_eq!(net, loaded);

    let out = run_pipeline(&loaded, &DesignConfig::default()).unwrap();
    let designed = SpreadingNetwork {
        groups: loaded.groups.clone(),
        m_inter: out.design.m_inter.clone(),
    };
    let dpath = dir.join("designed.json");
    save_network(&designed, &dpath).unwrap();
    let reloaded = load_network(&dpath).unwrap();
    assert_eq!(designed, reloaded);
}

#[test]
fn certificate_tree_serializes_with_residuals() {
    let net = small_net(5);
    let out = run_pipeline(&net, &DesignConfig::default()).unwrap();
    let json = serde_json::to_value(&out).unwrap();
    // Audit fields present at every level.
    let node = &json["node_certs"][0][0];
    assert!(node["diagnostics"]["residual_psd"].is_number());
    assert!(node["x"]["x11"].is_object() || node["x"]["x11"].is_array());
    let group = &json["group_certs"][0];
    assert!(group["diagnostics"]["status"].is_string());
    assert!(group["shadow"]["gamma_bar"].is_number());
    assert!(json["design"]["gamma"].is_number());
    assert!(json["design"]["diagnostics"]["residual_psd"].is_number());
}

#[test]
fn oracle_agreement_on_solved_certificates() {
    // Everything the LMI path accepts must pass the independent oracles:
    // the grid check at node level, the trajectory residual at group level.
    let net = small_net(7);
    let out = run_pipeline(&net, &DesignConfig::default()).unwrap();
    let grid = OracleGrid::default();
    for (i, g) in net.groups.iter().enumerate() {
        for (k, node) in g.nodes.iter().enumerate() {
            let rep = verify_node_certificate(&out.node_certs[i][k], node, &grid);
            assert!(rep.pass, "node ({i},{k}) oracle min {:.3e}", rep.min_value);
        }
    }
    let profile = DisturbanceProfile::default_for(&net, 9);
    let traj = simulate(&net, Some(&out.design.m_inter), &profile, 130.0, 0.01, 9).unwrap();
    for i in 0..net.groups.len() {
        let rep = verify_trajectory_dissipation(
            &traj,
            &net,
            &DissipationLevel::Group { group: i },
            &out.node_certs,
            &out.group_certs,
            Some(&out.design),
        )
        .unwrap();
        assert!(
            rep.pass,
            "group {i} residual {:.3e}",
            rep.min_prefix_residual
        );
    }
    // Node-level check on one node.
    let rep = verify_trajectory_dissipation(
        &traj,
        &net,
        &DissipationLevel::Node { group: 0, node: 0 },
        &out.node_certs,
        &out.group_certs,
        Some(&out.design),
    )
    .unwrap();
    assert!(rep.pass, "node residual {:.3e}", rep.min_prefix_residual);
}

#[test]
fn cli_binary_exit_code_contract() {
    let bin = env!("CARGO_BIN_EXE_meshdiss");
    let dir = std::env::temp_dir().join("meshdiss-cli-test");
    std::fs::create_dir_all(&dir).unwrap();

    // Missing seed: configuration error, code 3.
    let out = std::process::Command::new(bin)
        .args(["generate", "--groups", "2,2", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Valid generation: success.
    let out = std::process::Command::new(bin)
        .args([
            "generate",
            "--groups",
            "2,2",
            "--seed",
            "3",
            "--p-inter",
            "0.3",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("network.json").exists());

    // Missing file: I/O error, code 4.
    let out = std::process::Command::new(bin)
        .args(["analyze", "--network", "/nonexistent/net.json", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(4),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Zero inter-group edges reported in the summary.
    let out = std::process::Command::new(bin)
        .args([
            "generate",
            "--groups",
            "2,2",
            "--seed",
            "3",
            "--p-inter",
            "0",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0 inter edges"), "summary: {stdout}");
}

#[test]
fn solver_tolerance_env_override_is_validated() {
    // The variable is read per call; an invalid value must become a
    // configuration error rather than a panic.
    let bin = env!("CARGO_BIN_EXE_meshdiss");
    let dir = std::env::temp_dir().join("meshdiss-cli-test-tol");
    std::fs::create_dir_all(&dir).unwrap();
    let out = std::process::Command::new(bin)
        .args(["generate", "--groups", "2,2", "--seed", "3", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let net = dir.join("network.json");
    let out = std::process::Command::new(bin)
        .env("MESHDISS_SOLVER_TOL", "not-a-number")
        .args(["analyze", "--network"])
        .arg(&net)
        .args(["--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}
