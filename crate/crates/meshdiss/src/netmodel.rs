//! Hierarchical spreading-network data model.
//!
//! A [`SpreadingNetwork`] is an ordered list of groups; each group holds its
//! nodes (recovery parameters, initial infection) and an intra-group
//! transmission matrix `M_ii`. Inter-group transmission lives in one block
//! matrix `M̄` whose diagonal blocks are identically zero. The index
//! convention is fixed repository-wide: row = receiving node, column =
//! infecting node, so `M[k, l] > 0` means node `l` can infect node `k`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-node recovery parameters and initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    /// Mean recovery rate (1/time). Must satisfy `gamma_bar - delta > 0`.
    pub gamma_bar: f64,
    /// Recovery-rate deviation bound (1/time, >= 0).
    pub delta: f64,
    /// Initial infected fraction in [0, 1].
    pub x0: f64,
}

impl NodeParams {
    pub fn new(gamma_bar: f64, delta: f64, x0: f64) -> Result<Self> {
        let n = Self {
            gamma_bar,
            delta,
            x0,
        };
        n.validate("node")?;
        Ok(n)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::Schema {
                path: format!("{path}.delta"),
                msg: format!("delta must be >= 0, got {}", self.delta),
            });
        }
        if !(self.gamma_bar - self.delta > 0.0) {
            return Err(Error::Schema {
                path: format!("{path}.gamma_bar"),
                msg: format!(
                    "gamma_bar - delta must be > 0, got {} - {}",
                    self.gamma_bar, self.delta
                ),
            });
        }
        if !(0.0..=1.0).contains(&self.x0) {
            return Err(Error::Schema {
                path: format!("{path}.x0"),
                msg: format!("x0 must lie in [0, 1], got {}", self.x0),
            });
        }
        Ok(())
    }

    /// The guaranteed recovery margin `gamma_bar - delta`.
    pub fn margin(&self) -> f64 {
        self.gamma_bar - self.delta
    }
}

/// One group: its nodes and the intra-group transmission matrix `M_ii`.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub nodes: Vec<NodeParams>,
    pub m_intra: DMatrix<f64>,
}

impl Group {
    pub fn new(nodes: Vec<NodeParams>, m_intra: DMatrix<f64>) -> Result<Self> {
        let g = Self { nodes, m_intra };
        g.validate("group")?;
        Ok(g)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Schema {
                path: format!("{path}.nodes"),
                msg: "group must contain at least one node".into(),
            });
        }
        for (k, n) in self.nodes.iter().enumerate() {
            n.validate(&format!("{path}.nodes[{k}]"))?;
        }
        let n = self.nodes.len();
        if self.m_intra.nrows() != n || self.m_intra.ncols() != n {
            return Err(Error::Schema {
                path: format!("{path}.m_intra"),
                msg: format!(
                    "m_intra must be {n}x{n}, got {}x{}",
                    self.m_intra.nrows(),
                    self.m_intra.ncols()
                ),
            });
        }
        for r in 0..n {
            for c in 0..n {
                if !(self.m_intra[(r, c)] >= 0.0) {
                    return Err(Error::Schema {
                        path: format!("{path}.m_intra[{r}][{c}]"),
                        msg: format!("negative or non-finite weight {}", self.m_intra[(r, c)]),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// The full hierarchy: groups plus the inter-group block matrix `M̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingNetwork {
    pub groups: Vec<Group>,
    /// `M̄` over the full node space, diagonal blocks identically zero.
    pub m_inter: DMatrix<f64>,
}

impl SpreadingNetwork {
    pub fn new(groups: Vec<Group>, m_inter: DMatrix<f64>) -> Result<Self> {
        let net = Self { groups, m_inter };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Schema {
                path: "groups".into(),
                msg: "network must contain at least one group".into(),
            });
        }
        for (i, g) in self.groups.iter().enumerate() {
            g.validate(&format!("groups[{i}]"))?;
        }
        let n = self.total_nodes();
        if self.m_inter.nrows() != n || self.m_inter.ncols() != n {
            return Err(Error::Schema {
                path: "m_inter".into(),
                msg: format!(
                    "m_inter must be {n}x{n}, got {}x{}",
                    self.m_inter.nrows(),
                    self.m_inter.ncols()
                ),
            });
        }
        for r in 0..n {
            for c in 0..n {
                let v = self.m_inter[(r, c)];
                if !(v >= 0.0) {
                    return Err(Error::Schema {
                        path: format!("m_inter[{r}][{c}]"),
                        msg: format!("negative or non-finite weight {v}"),
                    });
                }
            }
        }
        let offs = self.group_offsets();
        for (i, g) in self.groups.iter().enumerate() {
            for r in 0..g.len() {
                for c in 0..g.len() {
                    if self.m_inter[(offs[i] + r, offs[i] + c)] != 0.0 {
                        return Err(Error::Schema {
                            path: format!("m_inter[{}][{}]", offs[i] + r, offs[i] + c),
                            msg: format!("diagonal block of M̄ must be zero (group {i})"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn total_nodes(&self) -> usize {
        self.groups.iter().map(Group::len).sum()
    }

    /// Start offset of each group in the flat node index space.
    pub fn group_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.groups.len());
        let mut acc = 0;
        for g in &self.groups {
            offs.push(acc);
            acc += g.len();
        }
        offs
    }

    /// Full transmission matrix `blockdiag(M_ii) + M̄` over the flat node space.
    pub fn full_transmission(&self, m_inter_override: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let n = self.total_nodes();
        let offs = self.group_offsets();
        let mut m = m_inter_override.unwrap_or(&self.m_inter).clone();
        assert_eq!(m.nrows(), n, "override dimension mismatch");
        for (i, g) in self.groups.iter().enumerate() {
            for r in 0..g.len() {
                for c in 0..g.len() {
                    m[(offs[i] + r, offs[i] + c)] += g.m_intra[(r, c)];
                }
            }
        }
        m
    }

    /// Extract the (i, j) block of an inter-group-shaped matrix.
    pub fn inter_block(&self, m: &DMatrix<f64>, i: usize, j: usize) -> DMatrix<f64> {
        let offs = self.group_offsets();
        m.view(
            (offs[i], offs[j]),
            (self.groups[i].len(), self.groups[j].len()),
        )
        .into_owned()
    }

    /// Flat node parameters in group order.
    pub fn node_params(&self) -> Vec<&NodeParams> {
        self.groups.iter().flat_map(|g| g.nodes.iter()).collect()
    }

    /// Map a flat node index to (group, node-within-group).
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let offs = self.group_offsets();
        for (i, g) in self.groups.iter().enumerate() {
            if flat < offs[i] + g.len() {
                return (i, flat - offs[i]);
            }
        }
        panic!("flat node index {flat} out of range");
    }
}

/// Parameters for random network generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub group_sizes: Vec<usize>,
    /// Interval for the uniform mean-recovery-rate draw.
    pub gamma_range: (f64, f64),
    /// Fraction of the drawn rate used as the deviation bound.
    pub delta_frac: f64,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Interval for the uniform edge-weight draw.
    pub w_range: (f64, f64),
    /// Stabilization factor theta: M_ii is scaled by
    /// `min(1, theta * min_k(gamma_bar_k - delta_k) / rho(M_ii))`.
    pub intra_scale: f64,
    pub seed: u64,
}

impl GenConfig {
    /// The generation parameters used throughout the experiments section:
    /// groups of 5, 6, 7, 4 nodes, recovery rates uniform in [0.4, 0.9] with a
    /// 5% deviation bound, edge probabilities 0.3 (intra) / 0.2 (inter) and
    /// weights uniform in [0.1, 0.4].
    pub fn reference(seed: u64) -> Self {
        Self {
            group_sizes: vec![5, 6, 7, 4],
            gamma_range: (0.4, 0.9),
            delta_frac: 0.05,
            p_intra: 0.3,
            p_inter: 0.2,
            w_range: (0.1, 0.4),
            intra_scale: 0.9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_sizes.is_empty() || self.group_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(
                "group_sizes must be non-empty and positive".into(),
            ));
        }
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.gamma_range.0 <= self.gamma_range.1) || self.gamma_range.0 <= 0.0 {
            return Err(Error::Config(format!(
                "gamma_range must be a nonempty positive interval, got {:?}",
                self.gamma_range
            )));
        }
        if !(self.w_range.0 <= self.w_range.1) || self.w_range.0 < 0.0 {
            return Err(Error::Config(format!(
                "w_range must be a nonempty nonnegative interval, got {:?}",
                self.w_range
            )));
        }
        if !(0.0..1.0).contains(&self.delta_frac) {
            return Err(Error::Config(format!(
                "delta_frac must lie in [0, 1), got {}",
                self.delta_frac
            )));
        }
        if !(self.intra_scale > 0.0) {
            return Err(Error::Config(format!(
                "intra_scale must be > 0, got {}",
                self.intra_scale
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

/// Spectral radius of a small dense matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Generate a random spreading network.
///
/// Draw order (one ChaCha8 stream seeded with `cfg.seed`): all mean recovery
/// rates (group-major, node order), then all x0, then intra edges row-major
/// per group, then inter edges block row-major (receiver group outer). For
/// each candidate edge a presence draw is made first and the weight is drawn
/// only when present. After generation each `M_ii` is scaled by
/// `s_i = min(1, intra_scale * min_k(margin_k) / rho(M_ii))`, which makes the
/// isolated linearized group Hurwitz.
pub fn generate_random(cfg: &GenConfig) -> Result<SpreadingNetwork> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_groups = cfg.group_sizes.len();

    // Phase 1: recovery rates.
    let mut gammas: Vec<Vec<f64>> = Vec::with_capacity(n_groups);
    for &sz in &cfg.group_sizes {
        gammas.push(
            (0..sz)
                .map(|_| uniform(&mut rng, cfg.gamma_range))
                .collect(),
        );
    }
    // Phase 2: initial infection levels.
    let mut x0s: Vec<Vec<f64>> = Vec::with_capacity(n_groups);
    for &sz in &cfg.group_sizes {
        x0s.push((0..sz).map(|_| rng.random_range(0.0..1.0)).collect());
    }
    // Phase 3: intra-group edges (self-loops allowed).
    let mut intras: Vec<DMatrix<f64>> = Vec::with_capacity(n_groups);
    for &sz in &cfg.group_sizes {
        let mut m = DMatrix::zeros(sz, sz);
        for r in 0..sz {
            for c in 0..sz {
                if rng.random_range(0.0..1.0) < cfg.p_intra {
                    m[(r, c)] = uniform(&mut rng, cfg.w_range);
                }
            }
        }
        intras.push(m);
    }
    // Phase 4: inter-group edges.
    let total: usize = cfg.group_sizes.iter().sum();
    let mut offs = Vec::with_capacity(n_groups);
    let mut acc = 0;
    for &sz in &cfg.group_sizes {
        offs.push(acc);
        acc += sz;
    }
    let mut m_inter = DMatrix::zeros(total, total);
    for i in 0..n_groups {
        for j in 0..n_groups {
            if i == j {
                continue;
            }
            for r in 0..cfg.group_sizes[i] {
                for c in 0..cfg.group_sizes[j] {
                    if rng.random_range(0.0..1.0) < cfg.p_inter {
                        m_inter[(offs[i] + r, offs[j] + c)] = uniform(&mut rng, cfg.w_range);
                    }
                }
            }
        }
    }

    // Stabilization scaling of each M_ii.
    let mut groups = Vec::with_capacity(n_groups);
    for (gi, &sz) in cfg.group_sizes.iter().enumerate() {
        let margins: Vec<f64> = gammas[gi].iter().map(|&g| g - cfg.delta_frac * g).collect();
        let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
        let rho = spectral_radius(&intras[gi]);
        let scale = if rho > 0.0 {
            (cfg.intra_scale * min_margin / rho).min(1.0)
        } else {
            1.0
        };
        let m_intra = &intras[gi] * scale;
        let nodes = (0..sz)
            .map(|k| NodeParams {
                gamma_bar: gammas[gi][k],
                delta: cfg.delta_frac * gammas[gi][k],
                x0: x0s[gi][k],
            })
            .collect();
        groups.push(Group { nodes, m_intra });
    }

    SpreadingNetwork::new(groups, m_inter)
}

/// Group interconnection matrix `[[M_ii, I], [I, 0]]`.
pub fn assemble_group_interconnection(g: &Group) -> DMatrix<f64> {
    let n = g.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&g.m_intra);
    m.view_mut((0, n), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    m.view_mut((n, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    m
}

/// Network interconnection matrix `[[M̄, I], [I, 0]]`.
pub fn assemble_network_interconnection(net: &SpreadingNetwork) -> DMatrix<f64> {
    let n = net.total_nodes();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&net.m_inter);
    m.view_mut((0, n), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    m.view_mut((n, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    m
}

// ---------------------------------------------------------------------------
// On-disk format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FileNetwork {
    version: u32,
    groups: Vec<FileGroup>,
    #[serde(default)]
    m_inter: Vec<FileInterBlock>,
}

#[derive(Serialize, Deserialize)]
struct FileGroup {
    id: String,
    nodes: Vec<NodeParams>,
    m_intra: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct FileInterBlock {
    to_group: usize,
    from_group: usize,
    matrix: Vec<Vec<f64>>,
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != nc {
            return Err(Error::Schema {
                path: format!("{path}[{r}]"),
                msg: format!(
                    "ragged matrix: row has {} entries, expected {nc}",
                    row.len()
                ),
            });
        }
    }
    Ok(DMatrix::from_fn(nr, nc, |r, c| rows[r][c]))
}

/// Serialize a network to the versioned JSON schema. All-zero inter blocks are
/// omitted; numbers round-trip exactly.
pub fn save_network(net: &SpreadingNetwork, path: &std::path::Path) -> Result<()> {
    net.validate()?;
    let offs = net.group_offsets();
    let mut inter_blocks = Vec::new();
    for i in 0..net.groups.len() {
        for j in 0..net.groups.len() {
            if i == j {
                continue;
            }
            let block = net
                .m_inter
                .view(
                    (offs[i], offs[j]),
                    (net.groups[i].len(), net.groups[j].len()),
                )
                .into_owned();
            if block.iter().any(|&v| v != 0.0) {
                inter_blocks.push(FileInterBlock {
                    to_group: i,
                    from_group: j,
                    matrix: matrix_to_rows(&block),
                });
            }
        }
    }
    let file = FileNetwork {
        version: 1,
        groups: net
            .groups
            .iter()
            .enumerate()
            .map(|(i, g)| FileGroup {
                id: format!("g{i}"),
                nodes: g.nodes.clone(),
                m_intra: matrix_to_rows(&g.m_intra),
            })
            .collect(),
        m_inter: inter_blocks,
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Parse and validate a network file.
pub fn load_network(path: &std::path::Path) -> Result<SpreadingNetwork> {
    let text = std::fs::read_to_string(path)?;
    let file: FileNetwork = serde_json::from_str(&text)?;
    if file.version != 1 {
        return Err(Error::Schema {
            path: "version".into(),
            msg: format!("unsupported version {}", file.version),
        });
    }
    let mut groups = Vec::with_capacity(file.groups.len());
    for (i, fg) in file.groups.iter().enumerate() {
        let m_intra = rows_to_matrix(&fg.m_intra, &format!("groups[{i}].m_intra"))?;
        let g = Group {
            nodes: fg.nodes.clone(),
            m_intra,
        };
        g.validate(&format!("groups[{i}]"))?;
        groups.push(g);
    }
    let total: usize = groups.iter().map(Group::len).sum();
    let mut offs = Vec::with_capacity(groups.len());
    let mut acc = 0;
    for g in &groups {
        offs.push(acc);
        acc += g.len();
    }
    let mut m_inter = DMatrix::zeros(total, total);
    let mut seen = std::collections::HashSet::new();
    for (bi, b) in file.m_inter.iter().enumerate() {
        let path = format!("m_inter[{bi}]");
        if b.to_group >= groups.len() || b.from_group >= groups.len() {
            return Err(Error::Schema {
                path,
                msg: format!(
                    "group index out of range: ({}, {})",
                    b.to_group, b.from_group
                ),
            });
        }
        if !seen.insert((b.to_group, b.from_group)) {
            return Err(Error::Schema {
                path,
                msg: format!("duplicate block ({}, {})", b.to_group, b.from_group),
            });
        }
        let m = rows_to_matrix(&b.matrix, &format!("{path}.matrix"))?;
        let (ni, nj) = (groups[b.to_group].len(), groups[b.from_group].len());
        if m.nrows() != ni || m.ncols() != nj {
            return Err(Error::Schema {
                path: format!("{path}.matrix"),
                msg: format!("block must be {ni}x{nj}, got {}x{}", m.nrows(), m.ncols()),
            });
        }
        if b.to_group == b.from_group && m.iter().any(|&v| v != 0.0) {
            return Err(Error::Schema {
                path: format!("{path}.matrix"),
                msg: "diagonal block of M̄ must be zero".into(),
            });
        }
        m_inter
            .view_mut((offs[b.to_group], offs[b.from_group]), (ni, nj))
            .copy_from(&m);
    }
    SpreadingNetwork::new(groups, m_inter)
}
