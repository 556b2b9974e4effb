//! Road-network graphs: the instance topology, start and target sets, the
//! plain-text graph file format, and seeded generators.
//!
//! Roads are undirected. Every edge is stored normalized as `(min, max)` and
//! identified by its position in the sorted edge list.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected edge normalized so that `self.0 <= self.1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge(pub u32, pub u32);

impl Edge {
    pub fn new(u: u32, v: u32) -> Self {
        if u <= v {
            Edge(u, v)
        } else {
            Edge(v, u)
        }
    }
}

impl std::fmt::Display for Edge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

pub const UNREACHABLE: u32 = u32::MAX;

/// A validated game graph.
#[derive(Clone, Debug)]
pub struct GameGraph {
    vertex_count: usize,
    edges: Vec<Edge>,
    edge_ids: HashMap<Edge, usize>,
    adjacency: Vec<Vec<u32>>,
    starts: Vec<u32>,
    targets: BTreeMap<u32, f64>,
    is_target: Vec<bool>,
    max_path_length: usize,
    // hop distance to the nearest target, never passing through another target
    target_distance: Vec<u32>,
    // neighbor one hop closer to a target (lowest id on ties)
    next_hop: Vec<u32>,
}

impl GameGraph {
    /// Builds and validates a graph. `max_path_length` caps the number of
    /// vertices on an attacker path.
    pub fn new(
        vertex_count: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
        starts: impl IntoIterator<Item = u32>,
        targets: impl IntoIterator<Item = (u32, f64)>,
        max_path_length: usize,
    ) -> Result<Self> {
        let n = vertex_count;
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        let mut edge_set = HashSet::new();
        let mut edges_v = Vec::new();
        for (u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u},{v}) has an endpoint outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {u}")));
            }
            let e = Edge::new(u, v);
            if !edge_set.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge {e}")));
            }
            edges_v.push(e);
        }
        edges_v.sort_unstable();
        let edge_ids = edges_v.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges_v {
            adjacency[e.0 as usize].push(e.1);
            adjacency[e.1 as usize].push(e.0);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }

        let mut starts: Vec<u32> = starts.into_iter().collect();
        starts.sort_unstable();
        starts.dedup();
        if starts.is_empty() {
            return Err(Error::InvalidGraph("start set is empty".into()));
        }
        let mut target_map = BTreeMap::new();
        for (t, value) in targets {
            if t as usize >= n {
                return Err(Error::InvalidGraph(format!("target {t} outside 0..{n}")));
            }
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "target {t} has non-positive value {value}"
                )));
            }
            if target_map.insert(t, value).is_some() {
                return Err(Error::InvalidGraph(format!("target {t} listed twice")));
            }
        }
        if target_map.is_empty() {
            return Err(Error::InvalidGraph("target set is empty".into()));
        }
        for &s in &starts {
            if s as usize >= n {
                return Err(Error::InvalidGraph(format!("start {s} outside 0..{n}")));
            }
            if target_map.contains_key(&s) {
                return Err(Error::InvalidGraph(format!(
                    "vertex {s} is both a start and a target"
                )));
            }
        }
        if max_path_length < 2 {
            return Err(Error::InvalidGraph(
                "max_path_length must allow at least two vertices".into(),
            ));
        }
        let mut is_target = vec![false; n];
        for &t in target_map.keys() {
            is_target[t as usize] = true;
        }
        let (target_distance, next_hop) = target_distances(&adjacency, &is_target);
        let graph = GameGraph {
            vertex_count: n,
            edges: edges_v,
            edge_ids,
            adjacency,
            starts,
            targets: target_map,
            is_target,
            max_path_length,
            target_distance,
            next_hop,
        };
        if !graph.starts.iter().any(|&s| graph.start_is_viable(s)) {
            return Err(Error::InvalidGraph(format!(
                "no start reaches a target within {max_path_length} vertices"
            )));
        }
        Ok(graph)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_id(&self, u: u32, v: u32) -> Option<usize> {
        self.edge_ids.get(&Edge::new(u, v)).copied()
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adjacency[v as usize]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn starts(&self) -> &[u32] {
        &self.starts
    }

    pub fn targets(&self) -> &BTreeMap<u32, f64> {
        &self.targets
    }

    pub fn is_target(&self, v: u32) -> bool {
        self.is_target[v as usize]
    }

    pub fn target_value(&self, v: u32) -> Option<f64> {
        self.targets.get(&v).copied()
    }

    pub fn max_path_length(&self) -> usize {
        self.max_path_length
    }

    /// Static hop distance from `v` to the nearest target.
    pub fn target_distance(&self, v: u32) -> u32 {
        self.target_distance[v as usize]
    }

    pub(crate) fn next_hop(&self, v: u32) -> u32 {
        self.next_hop[v as usize]
    }

    pub(crate) fn start_is_viable(&self, s: u32) -> bool {
        let d = self.target_distance[s as usize];
        d != UNREACHABLE && (d as usize) < self.max_path_length
    }

    /// Same topology with a different path-length cap.
    pub fn with_max_path_length(&self, max_path_length: usize) -> Result<Self> {
        GameGraph::new(
            self.vertex_count,
            self.edges.iter().map(|e| (e.0, e.1)),
            self.starts.iter().copied(),
            self.targets.iter().map(|(&t, &v)| (t, v)),
            max_path_length,
        )
    }

    /// Serializes to the plain-text graph format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes {}", self.vertex_count);
        for e in &self.edges {
            let _ = writeln!(out, "edge {} {}", e.0, e.1);
        }
        let starts: Vec<String> = self.starts.iter().map(u32::to_string).collect();
        let _ = writeln!(out, "start {}", starts.join(" "));
        for (t, v) in &self.targets {
            let _ = writeln!(out, "target {t} {v}");
        }
        let _ = writeln!(out, "max_path_length {}", self.max_path_length);
        out
    }
}

/// Multi-source BFS from every target. Targets are terminal, so the search
/// never expands through one.
fn target_distances(adjacency: &[Vec<u32>], is_target: &[bool]) -> (Vec<u32>, Vec<u32>) {
    let n = adjacency.len();
    let mut dist = vec![UNREACHABLE; n];
    let mut queue = VecDeque::new();
    for v in 0..n {
        if is_target[v] {
            dist[v] = 0;
            queue.push_back(v as u32);
        }
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[v as usize];
        for &w in &adjacency[v as usize] {
            if dist[w as usize] == UNREACHABLE {
                dist[w as usize] = d + 1;
                queue.push_back(w);
            }
        }
    }
    let next_hop = (0..n)
        .map(|v| {
            if dist[v] == 0 || dist[v] == UNREACHABLE {
                return UNREACHABLE;
            }
            adjacency[v]
                .iter()
                .copied()
                .find(|&w| dist[w as usize] + 1 == dist[v])
                .unwrap_or(UNREACHABLE)
        })
        .collect();
    (dist, next_hop)
}

/// Contents of a graph file before a path-length cap is attached.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFile {
    pub vertex_count: usize,
    pub edges: Vec<(u32, u32)>,
    pub starts: Vec<u32>,
    pub targets: Vec<(u32, f64)>,
    pub max_path_length: Option<usize>,
}

impl GraphFile {
    /// Parses the text format:
    ///
    /// ```text
    /// nodes <n>                      first directive, exactly once
    /// edge <u> <v>                   one undirected road per line
    /// start <v> [<v> ...]            repeatable
    /// target <v> <value> [<v> <value> ...]   repeatable
    /// max_path_length <k>            optional
    /// ```
    ///
    /// `#` starts a comment. Any other directive is rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut vertex_count = None;
        let mut file = GraphFile {
            vertex_count: 0,
            edges: Vec::new(),
            starts: Vec::new(),
            targets: Vec::new(),
            max_path_length: None,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let directive = tokens.next().unwrap_or_default();
            let args: Vec<&str> = tokens.collect();
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let int = |s: &str| {
                s.parse::<u32>()
                    .map_err(|_| perr(format!("expected a vertex id, got `{s}`")))
            };
            if vertex_count.is_none() && directive != "nodes" {
                return Err(perr("first directive must be `nodes <n>`".into()));
            }
            match directive {
                "nodes" => {
                    if vertex_count.is_some() {
                        return Err(perr("`nodes` given twice".into()));
                    }
                    let [n] = args[..] else {
                        return Err(perr("usage: nodes <n>".into()));
                    };
                    let n = n
                        .parse::<usize>()
                        .map_err(|_| perr(format!("bad node count `{n}`")))?;
                    vertex_count = Some(n);
                    file.vertex_count = n;
                }
                "edge" => {
                    let [u, v] = args[..] else {
                        return Err(perr("usage: edge <u> <v>".into()));
                    };
                    file.edges.push((int(u)?, int(v)?));
                }
                "start" => {
                    if args.is_empty() {
                        return Err(perr("usage: start <v> [<v> ...]".into()));
                    }
                    for a in args {
                        file.starts.push(int(a)?);
                    }
                }
                "target" => {
                    if args.is_empty() || !args.len().is_multiple_of(2) {
                        return Err(perr("usage: target <v> <value> [<v> <value> ...]".into()));
                    }
                    for pair in args.chunks(2) {
                        let value = pair[1]
                            .parse::<f64>()
                            .map_err(|_| perr(format!("bad target value `{}`", pair[1])))?;
                        file.targets.push((int(pair[0])?, value));
                    }
                }
                "max_path_length" => {
                    let [k] = args[..] else {
                        return Err(perr("usage: max_path_length <k>".into()));
                    };
                    let k = k
                        .parse::<usize>()
                        .map_err(|_| perr(format!("bad path length `{k}`")))?;
                    file.max_path_length = Some(k);
                }
                other => return Err(perr(format!("unknown directive `{other}`"))),
            }
        }
        if vertex_count.is_none() {
            return Err(Error::Parse {
                line: 1,
                msg: "missing `nodes <n>`".into(),
            });
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Builds the graph; `max_path_length` overrides the file's own value.
    pub fn into_graph(self, max_path_length: Option<usize>) -> Result<GameGraph> {
        let cap = max_path_length.or(self.max_path_length).ok_or_else(|| {
            Error::InvalidGraph("no max_path_length in the file or the config".into())
        })?;
        GameGraph::new(self.vertex_count, self.edges, self.starts, self.targets, cap)
    }
}

/// Topology generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    /// `rows x cols` lattice with 4-neighbor roads.
    Grid { rows: usize, cols: usize },
    /// Connected graph with exactly `nodes` vertices and `edges` roads: a random
    /// spanning tree plus uniformly drawn extra roads. With `locality = r`,
    /// vertices sit on a square lattice and every road joins vertices at
    /// Chebyshev distance at most `r`, which gives street-like layouts.
    Random {
        nodes: usize,
        edges: usize,
        #[serde(default)]
        locality: Option<u32>,
    },
    /// Topology (and optionally starts/targets) read from a graph file.
    File { path: String },
}

/// Where starts and targets go on a generated topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    #[serde(default = "one")]
    pub num_starts: usize,
    #[serde(default = "one")]
    pub num_targets: usize,
    /// One value per target; a single value is broadcast. Empty means 1.0.
    #[serde(default)]
    pub target_values: Vec<f64>,
    pub max_path_length: usize,
    /// Minimum hop distance between any start and any target.
    #[serde(default = "one_hop")]
    pub min_start_target_distance: u32,
}

fn one() -> usize {
    1
}

fn one_hop() -> u32 {
    1
}

impl Placement {
    pub fn new(num_starts: usize, num_targets: usize, max_path_length: usize) -> Self {
        Placement {
            num_starts,
            num_targets,
            target_values: Vec::new(),
            max_path_length,
            min_start_target_distance: 1,
        }
    }

    fn value_of(&self, i: usize) -> f64 {
        match self.target_values.len() {
            0 => 1.0,
            1 => self.target_values[0],
            _ => self.target_values[i],
        }
    }
}

const GENERATOR_ATTEMPTS: u64 = 100;

/// Deterministic graph generation. Infeasible placements are retried on up to
/// 100 attempt streams derived from `seed` before giving up.
pub fn generate_graph(topology: &Topology, placement: &Placement, seed: u64) -> Result<GameGraph> {
    if let Topology::File { path } = topology {
        let file = GraphFile::load(Path::new(path))?;
        if !file.starts.is_empty() && !file.targets.is_empty() {
            return file.into_graph(Some(placement.max_path_length));
        }
        return place_with_retries(file.vertex_count, &file.edges, placement, seed);
    }
    validate_topology(topology)?;
    if placement.target_values.len() > 1 && placement.target_values.len() != placement.num_targets {
        return Err(Error::Infeasible(format!(
            "{} target values for {} targets",
            placement.target_values.len(),
            placement.num_targets
        )));
    }
    let mut last_err = None;
    for attempt in 0..GENERATOR_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let (n, edges) = build_topology(topology, &mut rng);
        match place(n, &edges, placement, &mut rng) {
            Ok(g) => return Ok(g),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Infeasible(format!(
        "no feasible instance after {GENERATOR_ATTEMPTS} attempts: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn place_with_retries(
    n: usize,
    edges: &[(u32, u32)],
    placement: &Placement,
    seed: u64,
) -> Result<GameGraph> {
    let mut last_err = None;
    for attempt in 0..GENERATOR_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        match place(n, edges, placement, &mut rng) {
            Ok(g) => return Ok(g),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Infeasible(format!(
        "no feasible placement after {GENERATOR_ATTEMPTS} attempts: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn validate_topology(topology: &Topology) -> Result<()> {
    match *topology {
        Topology::Grid { rows, cols } => {
            if rows == 0 || cols == 0 || rows * cols < 2 {
                return Err(Error::Infeasible("grid needs at least two vertices".into()));
            }
        }
        Topology::Random {
            nodes,
            edges,
            locality,
        } => {
            if nodes < 2 {
                return Err(Error::Infeasible("need at least two nodes".into()));
            }
            let max_edges = match locality {
                None => nodes * (nodes - 1) / 2,
                Some(r) => local_pairs(nodes, r).len(),
            };
            if edges + 1 < nodes || edges > max_edges {
                return Err(Error::Infeasible(format!(
                    "{edges} edges impossible for a connected graph on {nodes} nodes (max {max_edges})"
                )));
            }
            if locality == Some(0) {
                return Err(Error::Infeasible("locality radius must be at least 1".into()));
            }
        }
        Topology::File { .. } => {}
    }
    Ok(())
}

fn lattice_side(nodes: usize) -> usize {
    (nodes as f64).sqrt().ceil() as usize
}

/// Vertex pairs within Chebyshev distance `r` on the lattice layout.
fn local_pairs(nodes: usize, r: u32) -> Vec<(u32, u32)> {
    let side = lattice_side(nodes);
    let pos = |v: usize| ((v / side) as i64, (v % side) as i64);
    let mut pairs = Vec::new();
    for u in 0..nodes {
        for v in u + 1..nodes {
            let (a, b) = (pos(u), pos(v));
            if (a.0 - b.0).abs().max((a.1 - b.1).abs()) <= r as i64 {
                pairs.push((u as u32, v as u32));
            }
        }
    }
    pairs
}

fn build_topology(topology: &Topology, rng: &mut ChaCha8Rng) -> (usize, Vec<(u32, u32)>) {
    match *topology {
        Topology::Grid { rows, cols } => {
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let v = (r * cols + c) as u32;
                    if c + 1 < cols {
                        edges.push((v, v + 1));
                    }
                    if r + 1 < rows {
                        edges.push((v, v + cols as u32));
                    }
                }
            }
            (rows * cols, edges)
        }
        Topology::Random {
            nodes,
            edges,
            locality,
        } => {
            let candidates = locality.map(|r| local_pairs(nodes, r));
            (nodes, random_connected(nodes, edges, candidates.as_deref(), rng))
        }
        Topology::File { .. } => unreachable!("file topologies are loaded, not built"),
    }
}

/// Random spanning tree over the allowed pairs, then extra pairs drawn
/// uniformly without replacement.
fn random_connected(
    n: usize,
    m: usize,
    allowed: Option<&[(u32, u32)]>,
    rng: &mut ChaCha8Rng,
) -> Vec<(u32, u32)> {
    let mut chosen: HashSet<Edge> = HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    match allowed {
        None => {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.shuffle(rng);
            for i in 1..n {
                let parent = order[rng.gen_range(0..i)];
                let e = Edge::new(order[i], parent);
                chosen.insert(e);
                edges.push((e.0, e.1));
            }
            let max_edges = n * (n - 1) / 2;
            if m * 2 > max_edges {
                let mut rest: Vec<Edge> = (0..n as u32)
                    .flat_map(|u| (u + 1..n as u32).map(move |v| Edge(u, v)))
                    .filter(|e| !chosen.contains(e))
                    .collect();
                rest.shuffle(rng);
                edges.extend(rest.into_iter().take(m - edges.len()).map(|e| (e.0, e.1)));
            } else {
                while edges.len() < m {
                    let u = rng.gen_range(0..n as u32);
                    let v = rng.gen_range(0..n as u32);
                    if u == v {
                        continue;
                    }
                    let e = Edge::new(u, v);
                    if chosen.insert(e) {
                        edges.push((e.0, e.1));
                    }
                }
            }
        }
        Some(pairs) => {
            // randomized Kruskal over the shuffled local pairs
            let mut pairs = pairs.to_vec();
            pairs.shuffle(rng);
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(p: &mut [usize], mut x: usize) -> usize {
                while p[x] != x {
                    p[x] = p[p[x]];
                    x = p[x];
                }
                x
            }
            let mut extra = Vec::new();
            for &(u, v) in &pairs {
                let (a, b) = (find(&mut parent, u as usize), find(&mut parent, v as usize));
                if a != b {
                    parent[a] = b;
                    edges.push((u, v));
                } else {
                    extra.push((u, v));
                }
            }
            edges.extend(extra.into_iter().take(m.saturating_sub(edges.len())));
        }
    }
    edges
}

fn place(
    n: usize,
    edges: &[(u32, u32)],
    placement: &Placement,
    rng: &mut ChaCha8Rng,
) -> Result<GameGraph> {
    let ns = placement.num_starts;
    let nt = placement.num_targets;
    if ns == 0 || nt == 0 || ns + nt > n {
        return Err(Error::Infeasible(format!(
            "{ns} starts and {nt} targets on {n} vertices"
        )));
    }
    let mut adjacency = vec![Vec::new(); n];
    for &(u, v) in edges {
        adjacency[u as usize].push(v);
        adjacency[v as usize].push(u);
    }
    let mut vertices: Vec<u32> = (0..n as u32).collect();
    vertices.shuffle(rng);
    let starts: Vec<u32> = vertices[..ns].to_vec();
    // hop distance from the start set, used for the separation constraint
    let mut dist = vec![UNREACHABLE; n];
    let mut queue: VecDeque<u32> = starts.iter().copied().collect();
    for &s in &starts {
        dist[s as usize] = 0;
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v as usize] {
            if dist[w as usize] == UNREACHABLE {
                dist[w as usize] = dist[v as usize] + 1;
                queue.push_back(w);
            }
        }
    }
    let pool: Vec<u32> = vertices[ns..]
        .iter()
        .copied()
        .filter(|&v| {
            let d = dist[v as usize];
            d != UNREACHABLE && d >= placement.min_start_target_distance
        })
        .collect();
    if pool.len() < nt {
        return Err(Error::Infeasible(
            "not enough vertices satisfy the start/target separation".into(),
        ));
    }
    let targets: Vec<(u32, f64)> = pool[..nt]
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, placement.value_of(i)))
        .collect();
    GameGraph::new(n, edges.iter().copied(), starts, targets, placement.max_path_length)
}

/// The four-vertex diamond `0-1-3`, `0-2-3` with start 0 and target 3.
pub fn diamond() -> GameGraph {
    GameGraph::new(4, [(0, 1), (0, 2), (1, 3), (2, 3)], [0], [(3, 1.0)], 4)
        .expect("diamond is valid")
}

/// Complete graph on four vertices with start 0 and target 3.
pub fn k4() -> GameGraph {
    GameGraph::new(
        4,
        [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
        [0],
        [(3, 1.0)],
        4,
    )
    .expect("K4 is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_are_normalized() {
        let g = GameGraph::new(3, [(2, 0), (1, 2)], [0], [(1, 1.0)], 3).unwrap();
        assert_eq!(g.edges(), &[Edge(0, 2), Edge(1, 2)]);
        assert_eq!(g.edge_id(2, 0), Some(0));
        assert_eq!(g.edge_id(0, 1), None);
    }

    #[test]
    fn rejects_bad_instances() {
        assert!(GameGraph::new(3, [(0, 3)], [0], [(1, 1.0)], 3).is_err());
        assert!(GameGraph::new(3, [(0, 1)], [0], [(0, 1.0)], 3).is_err());
        assert!(GameGraph::new(3, [(0, 1)], [0], [(1, 0.0)], 3).is_err());
        assert!(GameGraph::new(3, [(0, 1), (1, 0)], [0], [(1, 1.0)], 3).is_err());
        // no start-target connectivity
        assert!(GameGraph::new(4, [(0, 1), (2, 3)], [0], [(3, 1.0)], 4).is_err());
        // connected, but the only path is too long
        assert!(GameGraph::new(4, [(0, 1), (1, 2), (2, 3)], [0], [(3, 1.0)], 3).is_err());
    }

    #[test]
    fn target_distance_does_not_pass_through_targets() {
        // 0 - 1(target) - 2(target); distance from 0 is 1 and from 2 is 0
        let g = GameGraph::new(3, [(0, 1), (1, 2)], [0], [(1, 1.0), (2, 2.0)], 3).unwrap();
        assert_eq!(g.target_distance(0), 1);
        assert_eq!(g.target_distance(2), 0);
    }

    #[test]
    fn text_format_round_trips() {
        let g = diamond();
        let text = g.to_text();
        let back = GraphFile::parse(&text).unwrap().into_graph(None).unwrap();
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parser_rejects_unknown_directives() {
        let err = GraphFile::parse("nodes 2\nedge 0 1\nroad 0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = GraphFile::parse("edge 0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = GraphFile::parse("nodes 2\ntarget 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn parser_accepts_comments_and_multi_targets() {
        let text = "# a test\nnodes 4\nedge 0 1\nedge 1 2\nedge 1 3\nstart 0\ntarget 2 1.5 3 2\n";
        let g = GraphFile::parse(text).unwrap().into_graph(Some(3)).unwrap();
        assert_eq!(g.target_value(2), Some(1.5));
        assert_eq!(g.target_value(3), Some(2.0));
    }

    #[test]
    fn random_generator_hits_requested_counts() {
        let topo = Topology::Random {
            nodes: 16,
            edges: 40,
            locality: None,
        };
        let g = generate_graph(&topo, &Placement::new(1, 1, 9), 3407).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (16, 40));

        let topo = Topology::Random {
            nodes: 64,
            edges: 300,
            locality: None,
        };
        let g = generate_graph(&topo, &Placement::new(1, 4, 8), 11).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (64, 300));
    }

    #[test]
    fn local_generator_hits_requested_counts() {
        let topo = Topology::Random {
            nodes: 16,
            edges: 40,
            locality: Some(1),
        };
        let g = generate_graph(&topo, &Placement::new(1, 1, 9), 1).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (16, 40));
        let side = lattice_side(16) as i64;
        for e in g.edges() {
            let (a, b) = (e.0 as i64, e.1 as i64);
            let dr = (a / side - b / side).abs();
            let dc = (a % side - b % side).abs();
            assert!(dr.max(dc) <= 1, "edge {e} is not local");
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let topo = Topology::Random {
            nodes: 30,
            edges: 70,
            locality: None,
        };
        let p = Placement::new(2, 2, 7);
        let a = generate_graph(&topo, &p, 99).unwrap();
        let b = generate_graph(&topo, &p, 99).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = generate_graph(&topo, &p, 100).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn generator_rejects_infeasible_params() {
        let topo = Topology::Random {
            nodes: 4,
            edges: 10,
            locality: None,
        };
        assert!(generate_graph(&topo, &Placement::new(1, 1, 4), 0).is_err());
        let topo = Topology::Grid { rows: 2, cols: 2 };
        assert!(generate_graph(&topo, &Placement::new(3, 2, 4), 0).is_err());
    }

    #[test]
    fn grid_has_lattice_edges() {
        let g = generate_graph(&Topology::Grid { rows: 3, cols: 4 }, &Placement::new(1, 1, 12), 5)
            .unwrap();
        assert_eq!(g.edge_count(), 3 * 3 + 2 * 4);
    }
}
