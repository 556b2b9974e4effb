//! The security game itself: defender resources, pure actions, the payoff
//! oracle, enumeration of both action spaces, and mixed strategies.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Edge, GameGraph, UNREACHABLE};

/// Default per-side cap for exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// Per-defender candidate edges, stored as graph edge ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DefenderSpec {
    candidates: Vec<Vec<u32>>,
    allow_duplicate_edges: bool,
    // sorted union of all candidate sets; the defender mask width
    unified: Vec<u32>,
}

impl DefenderSpec {
    pub fn new(
        graph: &GameGraph,
        candidates: Vec<Vec<u32>>,
        allow_duplicate_edges: bool,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidDefenderSpec("no defenders".into()));
        }
        let mut sets = Vec::with_capacity(candidates.len());
        for (m, mut c) in candidates.into_iter().enumerate() {
            c.sort_unstable();
            c.dedup();
            if c.is_empty() {
                return Err(Error::InvalidDefenderSpec(format!(
                    "defender {m} has no candidate edges"
                )));
            }
            if let Some(&bad) = c.iter().find(|&&e| e as usize >= graph.edge_count()) {
                return Err(Error::InvalidDefenderSpec(format!(
                    "defender {m} references unknown edge id {bad}"
                )));
            }
            sets.push(c);
        }
        let unified: BTreeSet<u32> = sets.iter().flatten().copied().collect();
        let spec = DefenderSpec {
            candidates: sets,
            allow_duplicate_edges,
            unified: unified.into_iter().collect(),
        };
        if !allow_duplicate_edges && spec.count_without_duplicates_is_zero() {
            return Err(Error::InvalidDefenderSpec(
                "no duplicate-free joint placement exists".into(),
            ));
        }
        Ok(spec)
    }

    /// `num_defenders` defenders sharing one candidate set given as vertex pairs.
    pub fn shared(
        graph: &GameGraph,
        num_defenders: usize,
        edges: &[(u32, u32)],
        allow_duplicate_edges: bool,
    ) -> Result<Self> {
        let ids = edges
            .iter()
            .map(|&(u, v)| {
                graph.edge_id(u, v).map(|i| i as u32).ok_or_else(|| {
                    Error::InvalidDefenderSpec(format!("edge ({u},{v}) is not in the graph"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(graph, vec![ids; num_defenders], allow_duplicate_edges)
    }

    fn count_without_duplicates_is_zero(&self) -> bool {
        // greedy matching is enough to detect the trivially infeasible cases
        let mut used = BTreeSet::new();
        let mut order: Vec<&Vec<u32>> = self.candidates.iter().collect();
        order.sort_by_key(|c| c.len());
        for c in order {
            match c.iter().find(|e| !used.contains(*e)) {
                Some(&e) => {
                    used.insert(e);
                }
                None => return true,
            }
        }
        false
    }

    pub fn num_defenders(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidates(&self, defender: usize) -> &[u32] {
        &self.candidates[defender]
    }

    pub fn allow_duplicate_edges(&self) -> bool {
        self.allow_duplicate_edges
    }

    /// Sorted union of all candidate edge ids.
    pub fn unified_edges(&self) -> &[u32] {
        &self.unified
    }

    pub fn unified_slot(&self, edge_id: u32) -> Option<usize> {
        self.unified.binary_search(&edge_id).ok()
    }
}

/// How the candidate edge set is chosen for generated instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum CandidateRule {
    /// Every edge of the graph.
    All,
    /// The `count` edges closest to a target (ties broken by a seeded shuffle).
    NearTargets { count: usize },
    /// `count` edges drawn uniformly.
    Random { count: usize },
    /// Explicit vertex pairs.
    Explicit { edges: Vec<(u32, u32)> },
}

impl CandidateRule {
    pub fn select(&self, graph: &GameGraph, seed: u64) -> Result<Vec<(u32, u32)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdef0_5eed);
        let mut all: Vec<Edge> = graph.edges().to_vec();
        let take = |count: usize, list: Vec<Edge>| -> Result<Vec<(u32, u32)>> {
            if count == 0 || count > list.len() {
                return Err(Error::Infeasible(format!(
                    "asked for {count} candidate edges, graph has {}",
                    list.len()
                )));
            }
            let mut picked: Vec<Edge> = list.into_iter().take(count).collect();
            picked.sort_unstable();
            Ok(picked.into_iter().map(|e| (e.0, e.1)).collect())
        };
        match self {
            CandidateRule::All => Ok(all.into_iter().map(|e| (e.0, e.1)).collect()),
            CandidateRule::NearTargets { count } => {
                all.shuffle(&mut rng);
                let key = |e: &Edge| {
                    let d = graph.target_distance(e.0).min(graph.target_distance(e.1));
                    if d == UNREACHABLE {
                        u32::MAX
                    } else {
                        d
                    }
                };
                all.sort_by_key(key);
                take(*count, all)
            }
            CandidateRule::Random { count } => {
                all.shuffle(&mut rng);
                take(*count, all)
            }
            CandidateRule::Explicit { edges } => Ok(edges.clone()),
        }
    }
}

/// A simple start-to-target path.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttackerAction {
    pub path: Vec<u32>,
}

/// One edge id per defender, in defender order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DefenderAction {
    pub edges: Vec<u32>,
}

impl fmt::Display for AttackerAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.path.iter().map(u32::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// A full game instance. Immutable once built; share it behind an `Arc`.
#[derive(Clone, Debug)]
pub struct Game {
    pub graph: GameGraph,
    pub defenders: DefenderSpec,
    pub enumeration_cap: usize,
}

impl Game {
    pub fn new(graph: GameGraph, defenders: DefenderSpec) -> Arc<Self> {
        Arc::new(Game {
            graph,
            defenders,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        })
    }

    pub fn with_cap(graph: GameGraph, defenders: DefenderSpec, cap: usize) -> Arc<Self> {
        Arc::new(Game {
            graph,
            defenders,
            enumeration_cap: cap,
        })
    }

    /// The 2x2 diamond game: one defender choosing between `(1,3)` and `(2,3)`.
    pub fn diamond() -> Arc<Self> {
        let graph = crate::graph::diamond();
        let defenders = DefenderSpec::shared(&graph, 1, &[(1, 3), (2, 3)], true).unwrap();
        Game::new(graph, defenders)
    }

    /// K4 with one defender over every edge.
    pub fn k4() -> Arc<Self> {
        let graph = crate::graph::k4();
        let all: Vec<(u32, u32)> = graph.edges().iter().map(|e| (e.0, e.1)).collect();
        let defenders = DefenderSpec::shared(&graph, 1, &all, true).unwrap();
        Game::new(graph, defenders)
    }

    /// Stable digest of the instance, used to tag checkpoints.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.graph.to_text().as_bytes());
        for (m, c) in self.defenders.candidates.iter().enumerate() {
            h.update(format!("def {m}:{c:?}\n").as_bytes());
        }
        h.update(format!("dup {}\n", self.defenders.allow_duplicate_edges).as_bytes());
        hex::encode(&h.finalize()[..16])
    }

    pub fn validate_attacker(&self, a: &AttackerAction) -> Result<()> {
        let g = &self.graph;
        let path = &a.path;
        let bad = |m: String| Err(Error::InstanceMismatch(m));
        if path.len() < 2 {
            return bad(format!("path {a} is too short"));
        }
        if path.len() > g.max_path_length() {
            return bad(format!("path {a} exceeds {} vertices", g.max_path_length()));
        }
        if path.iter().any(|&v| v as usize >= g.vertex_count()) {
            return bad(format!("path {a} leaves the graph"));
        }
        if !g.starts().contains(&path[0]) {
            return bad(format!("path {a} does not begin at a start vertex"));
        }
        let last = *path.last().unwrap();
        if !g.is_target(last) {
            return bad(format!("path {a} does not end at a target"));
        }
        if path[..path.len() - 1].iter().any(|&v| g.is_target(v)) {
            return bad(format!("path {a} passes through a target"));
        }
        let mut seen = vec![false; g.vertex_count()];
        for w in path.windows(2) {
            if g.edge_id(w[0], w[1]).is_none() {
                return bad(format!("path {a} uses missing edge ({},{})", w[0], w[1]));
            }
        }
        for &v in path {
            if std::mem::replace(&mut seen[v as usize], true) {
                return bad(format!("path {a} repeats vertex {v}"));
            }
        }
        Ok(())
    }

    pub fn validate_defender(&self, d: &DefenderAction) -> Result<()> {
        let spec = &self.defenders;
        if d.edges.len() != spec.num_defenders() {
            return Err(Error::InstanceMismatch(format!(
                "defender action has {} edges for {} defenders",
                d.edges.len(),
                spec.num_defenders()
            )));
        }
        for (m, e) in d.edges.iter().enumerate() {
            if spec.candidates(m).binary_search(e).is_err() {
                return Err(Error::InstanceMismatch(format!(
                    "edge id {e} is not a candidate of defender {m}"
                )));
            }
        }
        if !spec.allow_duplicate_edges() {
            let distinct: BTreeSet<_> = d.edges.iter().collect();
            if distinct.len() != d.edges.len() {
                return Err(Error::InstanceMismatch(
                    "duplicate edges are not allowed".into(),
                ));
            }
        }
        Ok(())
    }

    /// Attacker payoff without validation: `+U(target)` unless some defended
    /// edge joins two consecutive path vertices, `-U(target)` otherwise.
    pub fn payoff(&self, path: &[u32], defended: &[u32]) -> f64 {
        let target = *path.last().expect("non-empty path");
        let value = self.graph.target_value(target).expect("path ends at a target");
        let edges = self.graph.edges();
        let caught = defended.iter().any(|&id| {
            let Edge(a, b) = edges[id as usize];
            path.windows(2)
                .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
        });
        if caught {
            -value
        } else {
            value
        }
    }

    /// Zero-sum payoff for the attacker after validating both actions.
    pub fn attacker_utility(&self, att: &AttackerAction, def: &DefenderAction) -> Result<f64> {
        self.validate_attacker(att)?;
        self.validate_defender(def)?;
        Ok(self.payoff(&att.path, &def.edges))
    }

    pub fn defender_utility(&self, att: &AttackerAction, def: &DefenderAction) -> Result<f64> {
        self.attacker_utility(att, def).map(|u| -u)
    }

    /// Every valid attacker path in lexicographic order. Exhaustive DFS over
    /// simple paths, pruned only by the static distance bound.
    pub fn enumerate_attacker_actions(&self) -> Result<Vec<AttackerAction>> {
        let g = &self.graph;
        let cap = self.enumeration_cap;
        let mut out = Vec::new();
        let mut on_path = vec![false; g.vertex_count()];
        let mut path = Vec::with_capacity(g.max_path_length());
        fn dfs(
            g: &GameGraph,
            path: &mut Vec<u32>,
            on_path: &mut [bool],
            out: &mut Vec<AttackerAction>,
            cap: usize,
        ) -> Result<()> {
            let v = *path.last().unwrap();
            if g.is_target(v) {
                if out.len() == cap {
                    return Err(Error::EnumerationOverflow {
                        what: "attacker",
                        cap,
                    });
                }
                out.push(AttackerAction { path: path.clone() });
                return Ok(());
            }
            for &w in g.neighbors(v) {
                let d = g.target_distance(w);
                if on_path[w as usize] || d == UNREACHABLE {
                    continue;
                }
                if path.len() + 1 + d as usize > g.max_path_length() {
                    continue;
                }
                on_path[w as usize] = true;
                path.push(w);
                dfs(g, path, on_path, out, cap)?;
                path.pop();
                on_path[w as usize] = false;
            }
            Ok(())
        }
        for &s in g.starts() {
            on_path[s as usize] = true;
            path.push(s);
            dfs(g, &mut path, &mut on_path, &mut out, cap)?;
            path.pop();
            on_path[s as usize] = false;
        }
        Ok(out)
    }

    /// Cartesian product of the candidate sets in lexicographic order,
    /// dropping repeated edges when duplicates are disallowed.
    pub fn enumerate_defender_actions(&self) -> Result<Vec<DefenderAction>> {
        let spec = &self.defenders;
        let cap = self.enumeration_cap;
        let n = spec.num_defenders();
        let mut out = Vec::new();
        let mut idx = vec![0usize; n];
        loop {
            let edges: Vec<u32> = (0..n).map(|m| spec.candidates(m)[idx[m]]).collect();
            let ok = spec.allow_duplicate_edges() || {
                let distinct: BTreeSet<_> = edges.iter().collect();
                distinct.len() == n
            };
            if ok {
                if out.len() == cap {
                    return Err(Error::EnumerationOverflow {
                        what: "defender",
                        cap,
                    });
                }
                out.push(DefenderAction { edges });
            }
            // odometer increment, last defender fastest
            let mut m = n;
            loop {
                if m == 0 {
                    return Ok(out);
                }
                m -= 1;
                idx[m] += 1;
                if idx[m] < spec.candidates(m).len() {
                    break;
                }
                idx[m] = 0;
            }
        }
    }

    pub fn describe_defender(&self, d: &DefenderAction) -> String {
        let parts: Vec<String> = d
            .edges
            .iter()
            .map(|&id| self.graph.edges()[id as usize].to_string())
            .collect();
        format!("[{}]", parts.join(","))
    }
}

/// A probability vector over an enumerated action list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    probs: Vec<f64>,
}

impl MixedStrategy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InstanceMismatch("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InstanceMismatch(format!("probabilities sum to {total}")));
        }
        Ok(MixedStrategy { probs })
    }

    pub fn uniform(n: usize) -> Self {
        MixedStrategy {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn pure(n: usize, index: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        MixedStrategy { probs }
    }

    /// Normalizes a nonnegative weight vector.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InstanceMismatch("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Attacker payoffs over enumerated action lists; rows are attacker actions.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PayoffMatrix {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let data = (0..rows)
            .into_par_iter()
            .flat_map_iter(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        PayoffMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InstanceMismatch("ragged payoff rows".into()));
        }
        Ok(PayoffMatrix {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Full payoff matrix of an enumerated game.
    pub fn build(game: &Game, att: &[AttackerAction], def: &[DefenderAction]) -> Self {
        Self::from_fn(att.len(), def.len(), |i, j| {
            game.payoff(&att[i].path, &def[j].edges)
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `A y`: attacker value of every row against a column strategy.
    pub fn row_values(&self, y: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(y)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `x^T A`: attacker value of every column against a row strategy.
    pub fn col_values(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += xi * a;
            }
        }
        out
    }
}

/// Attacker expected utility `x^T A y`; the defender's is its negation.
pub fn expected_utility(
    att: &MixedStrategy,
    def: &MixedStrategy,
    payoff: &PayoffMatrix,
) -> Result<f64> {
    if att.len() != payoff.rows() {
        return Err(Error::DimensionMismatch {
            expected: payoff.rows(),
            got: att.len(),
        });
    }
    if def.len() != payoff.cols() {
        return Err(Error::DimensionMismatch {
            expected: payoff.cols(),
            got: def.len(),
        });
    }
    Ok(payoff
        .row_values(def.probs())
        .iter()
        .zip(att.probs())
        .map(|(v, x)| v * x)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(v: &[u32]) -> AttackerAction {
        AttackerAction { path: v.to_vec() }
    }

    fn def(game: &Game, pairs: &[(u32, u32)]) -> DefenderAction {
        DefenderAction {
            edges: pairs
                .iter()
                .map(|&(u, v)| game.graph.edge_id(u, v).unwrap() as u32)
                .collect(),
        }
    }

    #[test]
    fn diamond_utilities() {
        let g = Game::diamond();
        let d23 = def(&g, &[(2, 3)]);
        let d13 = def(&g, &[(1, 3)]);
        assert_eq!(g.attacker_utility(&path(&[0, 1, 3]), &d23).unwrap(), 1.0);
        assert_eq!(g.attacker_utility(&path(&[0, 1, 3]), &d13).unwrap(), -1.0);
        assert_eq!(g.defender_utility(&path(&[0, 1, 3]), &d13).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_coverage_never_intercepts() {
        // defenders can only sit on the spur 3-4, which no path uses
        let graph =
            GameGraph::new(5, [(0, 1), (1, 2), (0, 3), (3, 4)], [0], [(2, 2.5)], 5).unwrap();
        let spec = DefenderSpec::shared(&graph, 1, &[(3, 4)], true).unwrap();
        let g = Game::new(graph, spec);
        let att = g.enumerate_attacker_actions().unwrap();
        let def = g.enumerate_defender_actions().unwrap();
        for a in &att {
            for d in &def {
                assert_eq!(g.attacker_utility(a, d).unwrap(), 2.5);
            }
        }
    }

    #[test]
    fn invalid_actions_are_rejected() {
        let g = Game::diamond();
        let d = def(&g, &[(2, 3)]);
        assert!(g.attacker_utility(&path(&[0, 3]), &d).is_err());
        assert!(g.attacker_utility(&path(&[1, 3]), &d).is_err());
        assert!(g.attacker_utility(&path(&[0, 1, 0, 2, 3]), &d).is_err());
        let bogus = DefenderAction { edges: vec![0] };
        assert!(g.attacker_utility(&path(&[0, 1, 3]), &bogus).is_err());
    }

    #[test]
    fn enumerates_diamond_and_k4() {
        let g = Game::diamond();
        let paths: Vec<Vec<u32>> = g
            .enumerate_attacker_actions()
            .unwrap()
            .into_iter()
            .map(|a| a.path)
            .collect();
        assert_eq!(paths, vec![vec![0, 1, 3], vec![0, 2, 3]]);
        let k4 = Game::k4();
        assert_eq!(k4.enumerate_attacker_actions().unwrap().len(), 5);
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let k4 = Game::k4();
        let paths = k4.enumerate_attacker_actions().unwrap();
        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted);
    }

    #[test]
    fn defender_products() {
        let graph = crate::graph::k4();
        let three = [(0, 1), (0, 2), (0, 3)];
        let spec = DefenderSpec::shared(&graph, 2, &three, false).unwrap();
        let g = Game::new(graph.clone(), spec);
        assert_eq!(g.enumerate_defender_actions().unwrap().len(), 6);
        let spec = DefenderSpec::shared(&graph, 2, &three, true).unwrap();
        let g = Game::new(graph, spec);
        assert_eq!(g.enumerate_defender_actions().unwrap().len(), 9);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let k4 = Game::k4();
        let capped = Game::with_cap(k4.graph.clone(), k4.defenders.clone(), 4);
        assert!(matches!(
            capped.enumerate_attacker_actions(),
            Err(Error::EnumerationOverflow { what: "attacker", cap: 4 })
        ));
        assert!(matches!(
            capped.enumerate_defender_actions(),
            Err(Error::EnumerationOverflow { what: "defender", .. })
        ));
    }

    #[test]
    fn expected_utility_examples() {
        let g = Game::diamond();
        let att = g.enumerate_attacker_actions().unwrap();
        let dfn = g.enumerate_defender_actions().unwrap();
        let a = PayoffMatrix::build(&g, &att, &dfn);
        let u = MixedStrategy::uniform(2);
        assert_eq!(expected_utility(&u, &u, &a).unwrap(), 0.0);
        // defender actions are ordered by edge id: (1,3) then (2,3)
        let d23 = dfn.iter().position(|d| *d == def(&g, &[(2, 3)])).unwrap();
        let d13 = 1 - d23;
        let x = MixedStrategy::pure(2, 0);
        let y = MixedStrategy::pure(2, d23);
        assert_eq!(expected_utility(&x, &y, &a).unwrap(), 1.0);
        let y = MixedStrategy::pure(2, d13);
        assert_eq!(expected_utility(&u, &y, &a).unwrap(), 0.0);
        assert!(expected_utility(&MixedStrategy::uniform(3), &u, &a).is_err());
    }

    #[test]
    fn mixed_strategy_validation() {
        assert!(MixedStrategy::new(vec![0.5, 0.5]).is_ok());
        assert!(MixedStrategy::new(vec![0.5, 0.6]).is_err());
        assert!(MixedStrategy::new(vec![1.5, -0.5]).is_err());
    }
}
