//! Command-line front end: generation, analysis, design, simulation,
//! comparison and verification, with reproducible JSON reports and plot
//! data (CSV time series plus a small plot manifest; rendering is left to
//! external tooling).
//!
//! Exit codes: 0 success, 2 infeasible design, 3 configuration error,
//! 4 I/O error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dissipativity::{network_analyze, run_pipeline, DesignConfig, PipelineOutput, YChoice};
use crate::error::{Error, Result};
use crate::evaluation::{
    metric_jm, tune_to_effort, verify_node_certificate, verify_trajectory_dissipation,
    BaselineSpec, DissipationLevel, OracleGrid,
};
use crate::lmicore::Tolerances;
use crate::netmodel::{generate_random, load_network, save_network, GenConfig, SpreadingNetwork};
use crate::sim::{metric_jx, simulate, DisturbanceProfile};

#[derive(Debug, Parser)]
#[command(
    name = "meshdiss",
    version,
    about = "Dissipativity-based analysis and design of SIS spreading networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random spreading network file.
    Generate(GenerateArgs),
    /// Certify the L2 gain of a network (nominal or designed topology).
    Analyze(AnalyzeArgs),
    /// Run the full design pipeline and write the design artifacts.
    Design(DesignArgs),
    /// Simulate the SIS dynamics and write trajectory data.
    Simulate(SimulateArgs),
    /// Compare design methods at matched effort in one report.
    Compare(CompareArgs),
    /// Re-verify certificates with the independent oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Optional JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Comma-separated group sizes, e.g. 5,6,7,4.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5usize, 6, 7, 4])]
    pub groups: Vec<usize>,
    /// RNG seed (required: every stochastic step must be reproducible).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.4, 0.9])]
    pub gamma_range: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub delta_frac: f64,
    #[arg(long, default_value_t = 0.3)]
    pub p_intra: f64,
    #[arg(long, default_value_t = 0.2)]
    pub p_inter: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.4])]
    pub w_range: Vec<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub intra_scale: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Analyze this topology instead of the nominal one (a network file
    /// whose inter-group matrix replaces the nominal).
    #[arg(long)]
    pub designed: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub c_m: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta_m: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Add the SMS small-gain constraints and report.
    #[arg(long)]
    pub sms: bool,
    /// Add the spectral-norm deviation constraint (Y = I).
    #[arg(long)]
    pub spectral: bool,
    /// Dump the conic form of problem P for external cross-checking.
    #[arg(long)]
    pub dump_conic: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Simulate this topology instead of the nominal one.
    #[arg(long)]
    pub designed: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Disturbance event scale; defaults to half the mean nominal weight.
    #[arg(long)]
    pub dist_scale: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Deviation weight c_M (flag > config file > 1).
    #[arg(long)]
    pub c_m: Option<f64>,
    /// Deviation limit delta_M (flag > config file > 1).
    #[arg(long)]
    pub delta_m: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sms: bool,
    /// Tune baseline parameters to the designed J_M (on by default; pass
    /// --match-effort=false together with --t-m/--d-m for explicit values).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub match_effort: bool,
    /// Explicit threshold parameter (used when --match-effort=false).
    #[arg(long)]
    pub t_m: Option<f64>,
    /// Explicit degree fraction (used when --match-effort=false).
    #[arg(long)]
    pub d_m: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub dist_scale: Option<f64>,
    /// Extra variants: dissbc:C,D | tbc:T | degbc:D (repeatable).
    #[arg(long)]
    pub variants: Vec<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Optional JSON config file; any present field acts as a default that flags
/// can override. The effective configuration is echoed into every report.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub c_m: Option<f64>,
    pub delta_m: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub sms: Option<bool>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub dist_scale: Option<f64>,
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

/// Solver tolerances, honoring the MESHDISS_SOLVER_TOL override.
pub fn solver_tolerances() -> Result<Tolerances> {
    let mut tol = Tolerances::default();
    if let Ok(v) = std::env::var("MESHDISS_SOLVER_TOL") {
        let parsed: f64 = v.parse().map_err(|_| {
            Error::Config(format!("MESHDISS_SOLVER_TOL must be a number, got '{v}'"))
        })?;
        if !(parsed > 0.0) {
            return Err(Error::Config("MESHDISS_SOLVER_TOL must be positive".into()));
        }
        tol.feas = parsed;
        tol.gap = parsed;
    }
    Ok(tol)
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn require_seed(seed: Option<u64>, cfg: &FileConfig) -> Result<u64> {
    seed.or(cfg.seed).ok_or_else(|| {
        Error::Config("a --seed is required: stochastic steps must be reproducible".into())
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[derive(Serialize)]
struct ReportHeader {
    version: &'static str,
    /// Excluded from determinism comparisons.
    timestamp: u64,
}

fn header() -> ReportHeader {
    ReportHeader {
        version: env!("CARGO_PKG_VERSION"),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Design(args) => cmd_design(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => {
            let report = cmd_compare(args)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            Ok(())
        }
        Command::Verify(args) => cmd_verify(args),
    }
}

pub fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let file_cfg = load_file_config(&args.common.config)?;
    let seed = require_seed(args.seed, &file_cfg)?;
    let parse_range = |v: &[f64], name: &str| -> Result<(f64, f64)> {
        if v.len() != 2 {
            return Err(Error::Config(format!("{name} must be 'lo,hi'")));
        }
        Ok((v[0], v[1]))
    };
    let cfg = GenConfig {
        group_sizes: args.groups.clone(),
        gamma_range: parse_range(&args.gamma_range, "--gamma-range")?,
        delta_frac: args.delta_frac,
        p_intra: args.p_intra,
        p_inter: args.p_inter,
        w_range: parse_range(&args.w_range, "--w-range")?,
        intra_scale: args.intra_scale,
        seed,
    };
    let net = generate_random(&cfg)?;
    ensure_out(&args.common.out)?;
    let path = args.common.out.join("network.json");
    save_network(&net, &path)?;
    let inter_edges = net.m_inter.iter().filter(|&&v| v != 0.0).count();
    let intra_edges: usize = net
        .groups
        .iter()
        .map(|g| g.m_intra.iter().filter(|&&v| v != 0.0).count())
        .sum();
    println!(
        "generated {} groups / {} nodes: {} intra edges, {} inter edges -> {}",
        net.groups.len(),
        net.total_nodes(),
        intra_edges,
        inter_edges,
        path.display()
    );
    Ok(())
}

/// Stage-1/2 certificates shared by analyze / design / compare / verify.
fn certify(net: &SpreadingNetwork, cfg: &DesignConfig) -> Result<PipelineOutput> {
    run_pipeline(net, cfg)
}

pub fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let tol = solver_tolerances()?;
    let net = load_network(&args.network)?;
    let m_override = match &args.designed {
        Some(p) => Some(load_network(p)?.m_inter),
        None => None,
    };
    // Group certificates depend only on intra-group structure, so the
    // pipeline runs on the nominal network and the analysis swaps in the
    // requested topology.
    let cfg = DesignConfig {
        tol,
        ..DesignConfig::default()
    };
    let out = certify(&net, &cfg)?;
    let gain = network_analyze(&net, &out.group_certs, m_override.as_ref(), &tol)?;
    ensure_out(&args.common.out)?;
    let report = serde_json::json!({
        "header": header(),
        "network": args.network.display().to_string(),
        "designed": args.designed.as_ref().map(|p| p.display().to_string()),
        "group_gamma_bars": out.group_certs.iter().map(|c| c.shadow.map(|s| s.gamma_bar)).collect::<Vec<_>>(),
        "gamma_bar": gain.as_ref().map(|g| g.gamma_bar),
        "gamma": gain.as_ref().map(|g| g.gamma),
        "certifiable": gain.is_some(),
    });
    write_json(&args.common.out.join("analysis.json"), &report)?;
    match gain {
        Some(g) => println!(
            "certified L2 gain: gamma = {:.4} (gamma_bar = {:.4})",
            g.gamma, g.gamma_bar
        ),
        None => println!("uncertifiable: no L2 gain certificate exists for this topology"),
    }
    Ok(())
}

fn design_config_from(
    c_m: f64,
    delta_m: f64,
    alpha: f64,
    beta: f64,
    sms: bool,
    spectral: bool,
    tol: Tolerances,
) -> DesignConfig {
    DesignConfig {
        c_m,
        delta_m,
        alpha,
        beta,
        y_choice: YChoice::Identity,
        enforce_spectral: spectral,
        enforce_elementwise: true,
        relax_upper: false,
        sms,
        tol,
    }
}

pub fn cmd_design(args: DesignArgs) -> Result<()> {
    let tol = solver_tolerances()?;
    let net = load_network(&args.network)?;
    let cfg = design_config_from(
        args.c_m,
        args.delta_m,
        args.alpha,
        args.beta,
        args.sms,
        args.spectral,
        tol,
    );
    ensure_out(&args.common.out)?;
    if args.dump_conic {
        let dump = crate::dissipativity::network_design_export(&net, &cfg)?;
        write_json(&args.common.out.join("problem_p_conic.json"), &dump)?;
    }
    let out = run_pipeline(&net, &cfg)?;
    let jm = metric_jm(&net.m_inter, &out.design.m_inter)?;
    let designed = SpreadingNetwork {
        groups: net.groups.clone(),
        m_inter: out.design.m_inter.clone(),
    };
    save_network(&designed, &args.common.out.join("designed_network.json"))?;
    write_json(
        &args.common.out.join("certificates.json"),
        &serde_json::to_value(&out).map_err(Error::from)?,
    )?;
    let report = serde_json::json!({
        "header": header(),
        "config": { "c_m": args.c_m, "delta_m": args.delta_m, "alpha": args.alpha, "beta": args.beta, "sms": args.sms },
        "gamma_bar": out.design.gamma_bar,
        "gamma": out.design.gamma,
        "j_m": jm,
        "objective": out.design.objective,
        "sms": out.design.sms,
    });
    write_json(&args.common.out.join("design_report.json"), &report)?;
    println!(
        "designed topology: gamma = {:.4}, J_M = {:.4}{}",
        out.design.gamma,
        jm,
        out.design
            .sms
            .as_ref()
            .map(|s| format!(", SMS {}", if s.pass { "pass" } else { "FAIL" }))
            .unwrap_or_default()
    );
    Ok(())
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let file_cfg = load_file_config(&args.common.config)?;
    let seed = require_seed(args.seed, &file_cfg)?;
    let net = load_network(&args.network)?;
    let m_override = match &args.designed {
        Some(p) => Some(load_network(p)?.m_inter),
        None => None,
    };
    let profile = match args.dist_scale.or(file_cfg.dist_scale) {
        Some(s) => DisturbanceProfile::scaled(s, seed),
        None => DisturbanceProfile::default_for(&net, seed),
    };
    let traj = simulate(
        &net,
        m_override.as_ref(),
        &profile,
        args.horizon,
        args.dt,
        seed,
    )?;
    let jx = metric_jx(&traj, args.horizon)?;
    ensure_out(&args.common.out)?;
    let mut csv = Vec::new();
    traj.write_csv(&net, &mut csv)?;
    std::fs::write(args.common.out.join("trajectory.csv"), csv)?;
    let max_state = traj
        .states
        .iter()
        .flat_map(|row| row.iter().cloned())
        .fold(0.0f64, f64::max);
    let metrics = serde_json::json!({
        "header": header(),
        "j_x": jx,
        "max_state": max_state,
        "max_box_violation": traj.max_box_violation,
        "horizon": args.horizon,
        "dt": args.dt,
        "seed": seed,
    });
    write_json(&args.common.out.join("metrics.json"), &metrics)?;
    println!("J_x = {jx:.4}, max state = {max_state:.4}");
    Ok(())
}

/// One row of the comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub j_x: f64,
    pub j_m: f64,
    /// Certified L2 gain; `None` means uncertifiable.
    pub gamma: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub config: serde_json::Value,
    pub rows: Vec<CompareRow>,
    pub warnings: Vec<String>,
}

/// Parameters of a comparison run (library surface; the CLI wraps it).
#[derive(Debug, Clone)]
pub struct CompareSetup {
    pub seed: u64,
    pub design: DesignConfig,
    pub extra_variants: Vec<String>,
    pub horizon: f64,
    pub dt: f64,
    pub dist_scale: Option<f64>,
    pub match_effort: bool,
    pub explicit_t_m: Option<f64>,
    pub explicit_d_m: Option<f64>,
}

impl CompareSetup {
    pub fn new(seed: u64, design: DesignConfig) -> Self {
        Self {
            seed,
            design,
            extra_variants: Vec::new(),
            horizon: 200.0,
            dt: 0.01,
            dist_scale: None,
            match_effort: true,
            explicit_t_m: None,
            explicit_d_m: None,
        }
    }
}

/// Run the comparison. All variants are simulated against the same
/// disturbance realization and the same recovery-rate realization.
pub fn compare_run(
    net: &SpreadingNetwork,
    setup: &CompareSetup,
) -> Result<(CompareReport, Vec<(String, Vec<f64>)>, Vec<f64>)> {
    let mut warnings = Vec::new();
    let cfg = &setup.design;
    let out = run_pipeline(net, cfg)?;
    let jm_diss = metric_jm(&net.m_inter, &out.design.m_inter)?;

    let profile = match setup.dist_scale {
        Some(s) => DisturbanceProfile::scaled(s, setup.seed),
        None => DisturbanceProfile::default_for(net, setup.seed),
    };

    let n = net.total_nodes();
    let zero = DMatrix::zeros(n, n);
    let mut variants: Vec<(String, DMatrix<f64>, String)> = vec![
        (
            "without_interconnections".into(),
            zero,
            "all inter-group links removed".into(),
        ),
        (
            "with_interconnections".into(),
            net.m_inter.clone(),
            "nominal topology".into(),
        ),
        (
            format!("dissbc({},{})", cfg.c_m, cfg.delta_m),
            out.design.m_inter.clone(),
            "dissipativity-based design".into(),
        ),
    ];

    let t_m = if setup.match_effort {
        let m = tune_to_effort("tbc", &net.m_inter, jm_diss, 0.02)?;
        if let Some(w) = &m.warning {
            warnings.push(format!("tbc effort match: {w}"));
        }
        match m.spec {
            BaselineSpec::Tbc { t_m } => t_m,
            _ => unreachable!(),
        }
    } else {
        setup
            .explicit_t_m
            .ok_or_else(|| Error::Config("--t-m required when effort matching is off".into()))?
    };
    let d_m = if setup.match_effort {
        let m = tune_to_effort("degbc", &net.m_inter, jm_diss, 0.02)?;
        if let Some(w) = &m.warning {
            warnings.push(format!("degbc effort match: {w}"));
        }
        match m.spec {
            BaselineSpec::DegBc { d_m } => d_m,
            _ => unreachable!(),
        }
    } else {
        setup
            .explicit_d_m
            .ok_or_else(|| Error::Config("--d-m required when effort matching is off".into()))?
    };
    variants.push((
        format!("tbc({t_m:.4})"),
        BaselineSpec::Tbc { t_m }.apply(&net.m_inter),
        "threshold pruning".into(),
    ));
    variants.push((
        format!("degbc({d_m:.4})"),
        BaselineSpec::DegBc { d_m }.apply(&net.m_inter),
        "degree pruning".into(),
    ));

    let mut rows = Vec::new();
    for v in &setup.extra_variants {
        match parse_variant(net, v, cfg) {
            Ok((name, matrix)) => variants.push((name, matrix, format!("extra variant '{v}'"))),
            Err(e) => {
                warnings.push(format!("variant '{v}' failed: {e}"));
                rows.push(CompareRow {
                    method: v.clone(),
                    j_x: f64::NAN,
                    j_m: f64::NAN,
                    gamma: None,
                    note: format!("failed: {e}"),
                });
            }
        }
    }

    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    let mut times = Vec::new();
    for (name, matrix, note) in &variants {
        let jm = metric_jm(&net.m_inter, matrix)?;
        let traj = simulate(
            net,
            Some(matrix),
            &profile,
            setup.horizon,
            setup.dt,
            setup.seed,
        )?;
        let jx = metric_jx(&traj, setup.horizon)?;
        let gamma = if name.starts_with("dissbc(") && *matrix == out.design.m_inter {
            Some(out.design.gamma)
        } else {
            network_analyze(net, &out.group_certs, Some(matrix), &cfg.tol)?.map(|g| g.gamma)
        };
        series.push((name.clone(), traj.mean_state()));
        times = traj.times.clone();
        rows.push(CompareRow {
            method: name.clone(),
            j_x: jx,
            j_m: jm,
            gamma,
            note: note.clone(),
        });
    }

    let config = serde_json::json!({
        "seed": setup.seed,
        "c_m": cfg.c_m,
        "delta_m": cfg.delta_m,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "sms": cfg.sms,
        "horizon": setup.horizon,
        "dt": setup.dt,
        "dist_scale": setup.dist_scale,
        "match_effort": setup.match_effort,
        "t_m": t_m,
        "d_m": d_m,
        "extra_variants": setup.extra_variants,
    });
    Ok((
        CompareReport {
            config,
            rows,
            warnings,
        },
        series,
        times,
    ))
}

fn parse_variant(
    net: &SpreadingNetwork,
    spec: &str,
    base_cfg: &DesignConfig,
) -> Result<(String, DMatrix<f64>)> {
    let (kind, params) = spec
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("variant '{spec}' must look like kind:params")))?;
    match kind {
        "dissbc" => {
            let (c, d) = params.split_once(',').ok_or_else(|| {
                Error::Config(format!("dissbc variant '{spec}' needs c_m,delta_m"))
            })?;
            let c_m: f64 = c
                .parse()
                .map_err(|_| Error::Config(format!("bad c_m in '{spec}'")))?;
            let delta_m: f64 = d
                .parse()
                .map_err(|_| Error::Config(format!("bad delta_m in '{spec}'")))?;
            let cfg = DesignConfig {
                c_m,
                delta_m,
                ..base_cfg.clone()
            };
            let out = run_pipeline(net, &cfg)?;
            Ok((format!("dissbc({c_m},{delta_m})"), out.design.m_inter))
        }
        "tbc" => {
            let t_m: f64 = params
                .parse()
                .map_err(|_| Error::Config(format!("bad t_m in '{spec}'")))?;
            Ok((
                format!("tbc({t_m})"),
                BaselineSpec::Tbc { t_m }.apply(&net.m_inter),
            ))
        }
        "degbc" => {
            let d_m: f64 = params
                .parse()
                .map_err(|_| Error::Config(format!("bad d_m in '{spec}'")))?;
            Ok((
                format!("degbc({d_m})"),
                BaselineSpec::DegBc { d_m }.apply(&net.m_inter),
            ))
        }
        other => Err(Error::Config(format!("unknown variant kind '{other}'"))),
    }
}

pub fn cmd_compare(args: CompareArgs) -> Result<CompareReport> {
    let tol = solver_tolerances()?;
    let file_cfg = load_file_config(&args.common.config)?;
    let seed = require_seed(args.seed, &file_cfg)?;
    let net = load_network(&args.network)?;
    // Precedence: explicit flag, then config file, then default.
    let cfg = design_config_from(
        args.c_m.or(file_cfg.c_m).unwrap_or(1.0),
        args.delta_m.or(file_cfg.delta_m).unwrap_or(1.0),
        args.alpha.or(file_cfg.alpha).unwrap_or(0.0),
        args.beta.or(file_cfg.beta).unwrap_or(1.0),
        args.sms || file_cfg.sms.unwrap_or(false),
        false,
        tol,
    );
    let setup = CompareSetup {
        seed,
        design: cfg,
        extra_variants: args.variants.clone(),
        horizon: args.horizon.or(file_cfg.horizon).unwrap_or(200.0),
        dt: args.dt.or(file_cfg.dt).unwrap_or(0.01),
        dist_scale: args.dist_scale.or(file_cfg.dist_scale),
        match_effort: args.match_effort,
        explicit_t_m: args.t_m,
        explicit_d_m: args.d_m,
    };
    let (report, series, times) = compare_run(&net, &setup)?;
    ensure_out(&args.common.out)?;
    let table = serde_json::json!({
        "header": header(),
        "config": report.config,
        "rows": report.rows,
        "warnings": report.warnings,
    });
    write_json(&args.common.out.join("comparison.json"), &table)?;

    // Fig-2-style long-format time series of mean infection per method,
    // thinned to every 10th sample to keep the CSV manageable.
    let mut csv = String::from("method,t,mean_infection\n");
    for (name, mean) in &series {
        for (k, v) in mean.iter().enumerate() {
            if k % 10 == 0 {
                csv.push_str(&format!("{},{},{}\n", name, times[k], v));
            }
        }
    }
    std::fs::write(args.common.out.join("timeseries.csv"), &csv)?;
    let manifest = serde_json::json!({
        "header": header(),
        "plots": [{
            "kind": "line",
            "data": "timeseries.csv",
            "x": "t",
            "y": "mean_infection",
            "series": "method",
            "title": "Average infection level under different designs",
        }],
    });
    write_json(&args.common.out.join("plot_manifest.json"), &manifest)?;

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
    Ok(report)
}

pub fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let tol = solver_tolerances()?;
    let file_cfg = load_file_config(&args.common.config)?;
    let seed = require_seed(args.seed, &file_cfg)?;
    let net = load_network(&args.network)?;
    let cfg = DesignConfig {
        tol,
        ..DesignConfig::default()
    };
    let out = certify(&net, &cfg)?;

    let mut all_pass = true;
    let mut checks = Vec::new();
    let record = |all_pass: &mut bool,
                  checks: &mut Vec<serde_json::Value>,
                  name: &str,
                  pass: bool,
                  detail: String| {
        println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        checks.push(serde_json::json!({ "check": name, "pass": pass, "detail": detail }));
        *all_pass &= pass;
    };

    // Grid oracle on every node certificate.
    let grid = OracleGrid::default();
    let mut worst = f64::INFINITY;
    let mut oracle_ok = true;
    for (i, g) in net.groups.iter().enumerate() {
        for (k, node) in g.nodes.iter().enumerate() {
            let rep = verify_node_certificate(&out.node_certs[i][k], node, &grid);
            worst = worst.min(rep.min_value);
            oracle_ok &= rep.pass;
        }
    }
    record(
        &mut all_pass,
        &mut checks,
        "node grid oracle",
        oracle_ok,
        format!("minimum Phi_bar over all nodes and grid points: {worst:.3e}"),
    );

    // Direct eigenvalue re-checks of the certified block matrices.
    let mut phi_ok = true;
    let mut worst_phi = f64::INFINITY;
    for (i, g) in net.groups.iter().enumerate() {
        let phi =
            crate::dissipativity::assemble_group_phi(g, &out.node_certs[i], &out.group_certs[i]);
        let lam = crate::lmicore::min_eigenvalue(&phi)?;
        worst_phi = worst_phi.min(lam);
        phi_ok &= lam >= -1e-6;
    }
    let phi_net = crate::dissipativity::assemble_network_phi(
        &net,
        &out.group_certs,
        &out.design.p_groups,
        &out.design.m_inter,
        out.design.gamma_bar,
    )?;
    let lam = crate::lmicore::min_eigenvalue(&phi_net)?;
    worst_phi = worst_phi.min(lam);
    phi_ok &= lam >= -1e-6;
    record(
        &mut all_pass,
        &mut checks,
        "Phi eigenvalue re-check",
        phi_ok,
        format!("minimum eigenvalue over all Phi_i and Phi: {worst_phi:.3e}"),
    );

    // Trajectory dissipation for groups and network on the designed topology.
    let profile = DisturbanceProfile::default_for(&net, seed);
    let traj = simulate(
        &net,
        Some(&out.design.m_inter),
        &profile,
        args.horizon,
        args.dt,
        seed,
    )?;
    let mut diss_ok = true;
    let mut worst_res = f64::INFINITY;
    for i in 0..net.groups.len() {
        let rep = verify_trajectory_dissipation(
            &traj,
            &net,
            &DissipationLevel::Group { group: i },
            &out.node_certs,
            &out.group_certs,
            Some(&out.design),
        )?;
        worst_res = worst_res.min(rep.min_prefix_residual);
        diss_ok &= rep.pass;
    }
    let rep = verify_trajectory_dissipation(
        &traj,
        &net,
        &DissipationLevel::Network,
        &out.node_certs,
        &out.group_certs,
        Some(&out.design),
    )?;
    worst_res = worst_res.min(rep.min_prefix_residual);
    diss_ok &= rep.pass;
    record(
        &mut all_pass,
        &mut checks,
        "trajectory dissipation",
        diss_ok,
        format!(
            "minimum prefix residual: {worst_res:.3e} (tolerance -{:.1e})",
            1e-4 * args.horizon
        ),
    );

    ensure_out(&args.common.out)?;
    write_json(
        &args.common.out.join("verify.json"),
        &serde_json::json!({ "header": header(), "checks": checks, "pass": all_pass }),
    )?;
    if all_pass {
        Ok(())
    } else {
        Err(Error::Infeasible {
            stage: "verify".into(),
            detail: "one or more checks failed".into(),
        })
    }
}
