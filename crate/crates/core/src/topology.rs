//! Communication graphs, Laplacians and observability checks.

use std::collections::{BTreeSet, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

use crate::rng::{stream, StreamTag};

/// Relative singular-value cutoff for numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) references a node outside [0, {2})")]
    NodeOutOfRange(usize, usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("{positions} positions given for {nodes} nodes")]
    PositionCount { positions: usize, nodes: usize },
    #[error("no connected graph found after {0} seeds")]
    RetryExhausted(usize),
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Undirected simple graph on nodes `0..node_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    positions: Option<Vec<[f64; 2]>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range
    /// endpoints. Edge `(j, i)` and `(i, j)` are the same edge.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if node_count == 0 {
            return Err(TopologyError::Empty);
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(TopologyError::NodeOutOfRange(a, b, node_count));
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(TopologyError::DuplicateEdge(a, b));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            adjacency,
            positions: None,
        })
    }

    pub fn complete(node_count: usize) -> Result<Self, TopologyError> {
        let edges: Vec<_> = (0..node_count)
            .flat_map(|i| (i + 1..node_count).map(move |j| (i, j)))
            .collect();
        Self::new(node_count, &edges)
    }

    pub fn path(node_count: usize) -> Result<Self, TopologyError> {
        let edges: Vec<_> = (1..node_count).map(|i| (i - 1, i)).collect();
        Self::new(node_count, &edges)
    }

    pub fn with_positions(mut self, positions: Vec<[f64; 2]>) -> Result<Self, TopologyError> {
        if positions.len() != self.node_count {
            return Err(TopologyError::PositionCount {
                positions: positions.len(),
                nodes: self.node_count,
            });
        }
        self.positions = Some(positions);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sorted neighborhood of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    /// Subgraph induced by `nodes`, relabelled `0..nodes.len()` in the given
    /// order. Returns the subgraph and the original label of each new node.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<(Graph, Vec<usize>), TopologyError> {
        let mut index = vec![usize::MAX; self.node_count];
        for (new, &old) in nodes.iter().enumerate() {
            index[old] = new;
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .filter(|(a, b)| index[*a] != usize::MAX && index[*b] != usize::MAX)
            .map(|&(a, b)| (index[a], index[b]))
            .collect();
        let mut g = Graph::new(nodes.len(), &edges)?;
        if let Some(p) = &self.positions {
            g.positions = Some(nodes.iter().map(|&n| p[n]).collect());
        }
        Ok((g, nodes.to_vec()))
    }
}

/// Connects every pair of points at Euclidean distance `<= radius`.
pub fn geometric_graph(positions: Vec<[f64; 2]>, radius: f64) -> Result<Graph, TopologyError> {
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            if dx * dx + dy * dy <= r2 {
                edges.push((i, j));
            }
        }
    }
    Graph::new(positions.len(), &edges)?.with_positions(positions)
}

/// Random geometric graph: `n` points i.i.d. uniform on `[0, side]^2`.
/// The result may be disconnected.
pub fn random_geometric_graph(n: usize, side: f64, radius: f64, seed: u64) -> Result<Graph, TopologyError> {
    if n == 0 || !(side > 0.0) || !(radius > 0.0) {
        return Err(TopologyError::InvalidParameters(format!(
            "n={n}, side={side}, radius={radius}"
        )));
    }
    let mut rng = stream(seed, StreamTag::Graph, n as u64, 0);
    let positions = (0..n)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect();
    geometric_graph(positions, radius)
}

/// Tries `seed, seed + 1, ...` until a connected graph appears.
/// Returns the graph and the seed that produced it.
pub fn connected_random_geometric_graph(
    n: usize,
    side: f64,
    radius: f64,
    seed: u64,
    retry_cap: usize,
) -> Result<(Graph, u64), TopologyError> {
    for k in 0..retry_cap.max(1) {
        let s = seed.wrapping_add(k as u64);
        let g = random_geometric_graph(n, side, radius, s)?;
        if is_connected(&g) {
            return Ok((g, s));
        }
    }
    Err(TopologyError::RetryExhausted(retry_cap))
}

/// Breadth-first search from node 0.
pub fn is_connected(g: &Graph) -> bool {
    let mut seen = vec![false; g.node_count()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &u in g.neighbors(v) {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == g.node_count()
}

/// Combinatorial graph Laplacian `D - A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian(DMatrix<f64>);

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Second-smallest eigenvalue (0 for a single node).
    pub fn algebraic_connectivity(&self) -> f64 {
        self.eigenvalues().get(1).copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }
}

pub fn laplacian(g: &Graph) -> Laplacian {
    let n = g.node_count();
    let mut l = DMatrix::zeros(n, n);
    for &(a, b) in g.edges() {
        l[(a, b)] = -1.0;
        l[(b, a)] = -1.0;
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
    }
    Laplacian(l)
}

/// Rank counting singular values above `RANK_TOLERANCE * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// Whether `sum_{n in subset} H_n^T H_n` has full rank.
///
/// # Panics
/// If the matrices in `h_list` disagree on column count or `subset`
/// indexes past the list.
pub fn is_globally_observable(h_list: &[DMatrix<f64>], subset: &[usize]) -> bool {
    let Some(m) = h_list.first().map(|h| h.ncols()) else {
        return false;
    };
    let mut gram = DMatrix::zeros(m, m);
    for &n in subset {
        let h = &h_list[n];
        assert_eq!(h.ncols(), m, "measurement matrices must share a column count");
        gram += h.transpose() * h;
    }
    numerical_rank(&gram) == m
}

pub fn write_edge_list(g: &Graph, path: &Path) -> Result<(), TopologyError> {
    let io = |source| TopologyError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for &(a, b) in g.edges() {
        writeln!(f, "{a} {b}").map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Reads an edge list (`i j` per line, `#` comments allowed). The node
/// count is `max index + 1` unless `node_count` is given.
pub fn read_edge_list(path: &Path, node_count: Option<usize>) -> Result<Graph, TopologyError> {
    let name = path.display().to_string();
    let f = std::fs::File::open(path).map_err(|source| TopologyError::Io {
        path: name.clone(),
        source,
    })?;
    let mut edges = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| TopologyError::Io {
            path: name.clone(),
            source,
        })?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: &str| TopologyError::Parse {
            path: name.clone(),
            line: i + 1,
            msg: msg.to_string(),
        };
        let mut it = line.split_whitespace().map(str::parse::<usize>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b)), None) => edges.push((a, b)),
            _ => return Err(parse_err("expected two node indices")),
        }
    }
    let n = node_count.unwrap_or_else(|| edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(1));
    Graph::new(n, &edges)
}

pub fn write_positions_csv(g: &Graph, path: &Path) -> Result<(), TopologyError> {
    let io = |e: csv::Error| TopologyError::Io {
        path: path.display().to_string(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["node", "x", "y"]).map_err(io)?;
    if let Some(p) = g.positions() {
        for (n, [x, y]) in p.iter().enumerate() {
            w.write_record([n.to_string(), x.to_string(), y.to_string()])
                .map_err(io)?;
        }
    }
    w.flush().map_err(|e| TopologyError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Reads `node,x,y` rows; every node in `0..rows` must appear once.
pub fn read_positions_csv(path: &Path) -> Result<Vec<[f64; 2]>, TopologyError> {
    let name = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| TopologyError::Io {
        path: name.clone(),
        source: e.into(),
    })?;
    let mut rows: Vec<(usize, [f64; 2])> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let parse_err = |msg: String| TopologyError::Parse {
            path: name.clone(),
            line: i + 2,
            msg,
        };
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let field = |k: usize| rec.get(k).ok_or_else(|| parse_err(format!("missing column {k}")));
        let node = field(0)?
            .trim()
            .parse::<usize>()
            .map_err(|e| parse_err(e.to_string()))?;
        let x = field(1)?.trim().parse::<f64>().map_err(|e| parse_err(e.to_string()))?;
        let y = field(2)?.trim().parse::<f64>().map_err(|e| parse_err(e.to_string()))?;
        rows.push((node, [x, y]));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, (node, _)) in rows.iter().enumerate() {
        if *node != expect {
            return Err(TopologyError::Parse {
                path: name,
                line: 0,
                msg: format!("node {expect} missing or duplicated"),
            });
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}
