//! Agents, clusters ("components") and the matrices they induce.
//!
//! Agent indices are 1-based at every public boundary (constructors, JSON,
//! edge lists) and 0-based internally.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{kron, DenseMatrix, Vector};

/// Default number of consecutive seeds tried before giving up on a connected
/// random geometric graph.
pub const RGG_MAX_RETRIES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("component {index} has {size} agent(s); every component needs at least two")]
    ComponentTooSmall { index: usize, size: usize },
    #[error("agent index {agent} outside 1..={n_agents}")]
    AgentOutOfRange { agent: usize, n_agents: usize },
    #[error("agent {agent} listed twice in component {index}")]
    DuplicateAgent { index: usize, agent: usize },
    #[error("self loop on agent {0}")]
    SelfLoop(usize),
    #[error("edge {{{0}, {1}}} listed twice")]
    DuplicateEdge(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no connected random geometric graph after {retries} seeds starting at {seed}")]
    NotConnected { seed: u64, retries: usize },
    #[error("topology is not an edge clustering")]
    NotEdgeClustering,
    #[error("topology fails validation: {0}")]
    Invalid(ValidationReport),
}

/// Outcome of checking coverage of all agents and connectivity of the
/// component graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub covered: bool,
    /// Agents (1-based) not in any component.
    pub uncovered: Vec<usize>,
    pub connected: bool,
    /// Connected components of the component graph.
    pub graph_components: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.covered && self.connected
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "covered={} uncovered={:?} connected={} graph_components={}",
            self.covered, self.uncovered, self.connected, self.graph_components
        )
    }
}

/// Graph whose vertices are components, adjacent when they share an agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentGraph {
    pub adjacency: Vec<Vec<usize>>,
}

impl ComponentGraph {
    pub fn n_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Number of connected components, by breadth-first traversal.
    pub fn connected_components(&self) -> usize {
        let n = self.adjacency.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }
}

/// The three lifted matrices `M = S⊗I_K`, `Π = blockdiag(J)` and `P = Π⊗I_K`.
#[derive(Debug, Clone)]
pub struct MixingMatrices {
    pub m: DenseMatrix,
    pub pi: DenseMatrix,
    pub p: DenseMatrix,
}

/// Agents `1..=N`, parameter dimension `K`, and the component collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentStructure {
    n_agents: usize,
    dim: usize,
    /// Sorted, 0-based agent indices per component.
    components: Vec<Vec<usize>>,
    /// Agent (0-based) behind each of the `T` stacked rows.
    row_agent: Vec<usize>,
    /// First stacked row of each component.
    offsets: Vec<usize>,
    /// Components containing each agent, ascending.
    memberships: Vec<Vec<usize>>,
}

/// On-disk form: `{"n_agents", "dim", "components": [[1,2],[4,5],[2,3,4]]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub n_agents: usize,
    pub dim: usize,
    pub components: Vec<Vec<usize>>,
}

impl ComponentStructure {
    /// Builds a structure from 1-based agent sets. Each set is stored in
    /// ascending order, which fixes the row order of its selection block.
    pub fn new(
        n_agents: usize,
        dim: usize,
        components: Vec<Vec<usize>>,
    ) -> Result<Self, TopologyError> {
        if n_agents == 0 {
            return Err(TopologyError::InvalidParameter(
                "n_agents must be positive".into(),
            ));
        }
        if dim == 0 {
            return Err(TopologyError::InvalidParameter(
                "dim must be positive".into(),
            ));
        }
        let mut internal = Vec::with_capacity(components.len());
        for (index, comp) in components.into_iter().enumerate() {
            if comp.len() < 2 {
                return Err(TopologyError::ComponentTooSmall {
                    index: index + 1,
                    size: comp.len(),
                });
            }
            let mut set = BTreeSet::new();
            for &agent in &comp {
                if agent == 0 || agent > n_agents {
                    return Err(TopologyError::AgentOutOfRange { agent, n_agents });
                }
                if !set.insert(agent - 1) {
                    return Err(TopologyError::DuplicateAgent {
                        index: index + 1,
                        agent,
                    });
                }
            }
            internal.push(set.into_iter().collect::<Vec<_>>());
        }
        let mut row_agent = Vec::new();
        let mut offsets = Vec::with_capacity(internal.len());
        let mut memberships = vec![Vec::new(); n_agents];
        for (l, comp) in internal.iter().enumerate() {
            offsets.push(row_agent.len());
            for &n in comp {
                row_agent.push(n);
                memberships[n].push(l);
            }
        }
        Ok(Self {
            n_agents,
            dim,
            components: internal,
            row_agent,
            offsets,
            memberships,
        })
    }

    /// Single component holding every agent.
    pub fn centralized(n_agents: usize, dim: usize) -> Result<Self, TopologyError> {
        if n_agents < 2 {
            return Err(TopologyError::InvalidParameter(
                "centralized topology needs at least two agents".into(),
            ));
        }
        Self::new(n_agents, dim, vec![(1..=n_agents).collect()])
    }

    /// Ring: `A_ℓ = {ℓ, ℓ+1}` for `ℓ < N` and `A_N = {1, N}`.
    pub fn ring(n_agents: usize, dim: usize) -> Result<Self, TopologyError> {
        if n_agents < 3 {
            return Err(TopologyError::InvalidParameter("ring needs N >= 3".into()));
        }
        let edges: Vec<(usize, usize)> = (1..=n_agents)
            .map(|l| {
                if l < n_agents {
                    (l, l + 1)
                } else {
                    (1, n_agents)
                }
            })
            .collect();
        Self::from_edges(&edges, n_agents, dim)
    }

    /// One two-agent component per edge of a simple undirected graph.
    pub fn from_edges(
        edges: &[(usize, usize)],
        n_agents: usize,
        dim: usize,
    ) -> Result<Self, TopologyError> {
        let mut seen = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(TopologyError::DuplicateEdge(a.min(b), a.max(b)));
            }
        }
        Self::new(
            n_agents,
            dim,
            edges.iter().map(|&(a, b)| vec![a, b]).collect(),
        )
    }

    pub fn from_file(file: &TopologyFile) -> Result<Self, TopologyError> {
        Self::new(file.n_agents, file.dim, file.components.clone())
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            n_agents: self.n_agents,
            dim: self.dim,
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|&n| n + 1).collect())
                .collect(),
        }
    }

    /// Same components, different parameter dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self, TopologyError> {
        Self::new(self.n_agents, dim, self.to_file().components)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// `T = Σ|A_ℓ|`.
    pub fn total_rows(&self) -> usize {
        self.row_agent.len()
    }

    /// Component `l` (0-based) as 0-based agent indices.
    pub fn component(&self, l: usize) -> &[usize] {
        &self.components[l]
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    /// Agent (0-based) of stacked row `i`.
    pub fn row_agent(&self, i: usize) -> usize {
        self.row_agent[i]
    }

    /// First stacked row of component `l`.
    pub fn component_offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    /// `σ(n)` for a 0-based agent.
    pub fn memberships(&self, agent: usize) -> &[usize] {
        &self.memberships[agent]
    }

    /// Row of agent `agent` inside component `l`'s block, if a member.
    pub fn row_of(&self, l: usize, agent: usize) -> Option<usize> {
        self.components[l]
            .binary_search(&agent)
            .ok()
            .map(|pos| self.offsets[l] + pos)
    }

    pub fn is_edge_clustering(&self) -> bool {
        self.components.iter().all(|c| c.len() == 2)
    }

    /// Neighbours (0-based, ascending) of each agent in an edge clustering.
    pub fn neighbors(&self) -> Result<Vec<Vec<usize>>, TopologyError> {
        if !self.is_edge_clustering() {
            return Err(TopologyError::NotEdgeClustering);
        }
        let mut out = vec![Vec::new(); self.n_agents];
        for c in &self.components {
            out[c[0]].push(c[1]);
            out[c[1]].push(c[0]);
        }
        for list in &mut out {
            list.sort_unstable();
        }
        Ok(out)
    }

    pub fn component_graph(&self) -> ComponentGraph {
        let l = self.components.len();
        let mut adjacency = vec![Vec::new(); l];
        for members in &self.memberships {
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        ComponentGraph { adjacency }
    }

    pub fn validate(&self) -> ValidationReport {
        let uncovered: Vec<usize> = (0..self.n_agents)
            .filter(|&n| self.memberships[n].is_empty())
            .map(|n| n + 1)
            .collect();
        let graph_components = self.component_graph().connected_components();
        ValidationReport {
            covered: uncovered.is_empty(),
            uncovered,
            connected: graph_components == 1,
            graph_components,
        }
    }

    /// Validation as a `Result`, for callers that cannot proceed otherwise.
    pub fn ensure_valid(&self) -> Result<(), TopologyError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(TopologyError::Invalid(report))
        }
    }

    /// The `T×N` selection matrix `S`.
    pub fn selection_matrix(&self) -> DenseMatrix {
        let mut s = DenseMatrix::zeros(self.total_rows(), self.n_agents);
        for (i, &n) in self.row_agent.iter().enumerate() {
            s[(i, n)] = 1.0;
        }
        s
    }

    /// Block-diagonal averaging matrix `Π` (`T×T`).
    pub fn averaging_matrix(&self) -> DenseMatrix {
        let t = self.total_rows();
        let mut pi = DenseMatrix::zeros(t, t);
        for (l, c) in self.components.iter().enumerate() {
            let o = self.offsets[l];
            let w = 1.0 / c.len() as f64;
            for i in 0..c.len() {
                for j in 0..c.len() {
                    pi[(o + i, o + j)] = w;
                }
            }
        }
        pi
    }

    pub fn mixing_matrices(&self) -> MixingMatrices {
        let ik = DenseMatrix::identity(self.dim, self.dim);
        let pi = self.averaging_matrix();
        MixingMatrices {
            m: kron(&self.selection_matrix(), &ik),
            p: kron(&pi, &ik),
            pi,
        }
    }

    /// `Mx` without forming `M`: each row block copies its agent's block.
    pub fn lift(&self, x: &Vector) -> Vector {
        let k = self.dim;
        assert_eq!(x.len(), self.n_agents * k, "lift: length mismatch");
        let mut y = Vector::zeros(self.total_rows() * k);
        for (i, &n) in self.row_agent.iter().enumerate() {
            y.rows_mut(i * k, k).copy_from(&x.rows(n * k, k));
        }
        y
    }

    /// `Py` without forming `P`: block means per component.
    pub fn average(&self, y: &Vector) -> Vector {
        let k = self.dim;
        assert_eq!(y.len(), self.total_rows() * k, "average: length mismatch");
        let mut out = Vector::zeros(y.len());
        for (l, c) in self.components.iter().enumerate() {
            let o = self.offsets[l] * k;
            let mut mean = Vector::zeros(k);
            for i in 0..c.len() {
                mean += y.rows(o + i * k, k);
            }
            mean /= c.len() as f64;
            for i in 0..c.len() {
                out.rows_mut(o + i * k, k).copy_from(&mean);
            }
        }
        out
    }
}

/// A sampled random geometric graph on the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RggSample {
    /// Seed that produced this (connected) sample.
    pub seed: u64,
    pub radius: f64,
    pub points: Vec<[f64; 2]>,
    /// 1-based agent pairs, `a < b`, lexicographic order.
    pub edges: Vec<(usize, usize)>,
}

impl RggSample {
    pub fn topology(&self, dim: usize) -> Result<ComponentStructure, TopologyError> {
        ComponentStructure::from_edges(&self.edges, self.points.len(), dim)
    }
}

/// Samples one RGG with the given seed; no connectivity requirement.
pub fn sample_geometric_graph(n: usize, radius: f64, seed: u64) -> RggSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            if (dx * dx + dy * dy).sqrt() <= radius {
                edges.push((i + 1, j + 1));
            }
        }
    }
    RggSample {
        seed,
        radius,
        points,
        edges,
    }
}

fn graph_is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a - 1].push(b - 1);
        adj[b - 1].push(a - 1);
    }
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}

/// Connected RGG: tries seeds `seed, seed+1, …` up to `max_retries` times.
pub fn random_geometric_graph_with_retries(
    n: usize,
    radius: f64,
    seed: u64,
    max_retries: usize,
) -> Result<RggSample, TopologyError> {
    if n < 2 {
        return Err(TopologyError::InvalidParameter("RGG needs N >= 2".into()));
    }
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
        return Err(TopologyError::InvalidParameter(format!(
            "RGG radius {radius} outside (0, sqrt(2)]"
        )));
    }
    for attempt in 0..max_retries {
        let s = seed.wrapping_add(attempt as u64);
        let sample = sample_geometric_graph(n, radius, s);
        if graph_is_connected(n, &sample.edges) {
            return Ok(sample);
        }
    }
    Err(TopologyError::NotConnected {
        seed,
        retries: max_retries,
    })
}

pub fn random_geometric_graph(
    n: usize,
    radius: f64,
    seed: u64,
) -> Result<RggSample, TopologyError> {
    random_geometric_graph_with_retries(n, radius, seed, RGG_MAX_RETRIES)
}
