//! Attacker and defender decision trees. Nodes are identified by their
//! history (the label sequence from the root) and children are generated on
//! demand; nothing is materialized.
//!
//! Attacker labels are vertex ids and a history is the visited vertex
//! sequence. Defender labels are edge ids and a history is the ordered list of
//! edges chosen by the defenders that already acted.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{AttackerAction, DefenderAction, DefenderSpec, Game};
use crate::graph::{GameGraph, UNREACHABLE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Attacker,
    Defender,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::Attacker, Player::Defender];

    pub fn index(self) -> usize {
        match self {
            Player::Attacker => 0,
            Player::Defender => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Player::Attacker => "attacker",
            Player::Defender => "defender",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct AttackerHistory {
    pub visited: Vec<u32>,
}

impl AttackerHistory {
    pub fn current(&self) -> Option<u32> {
        self.visited.last().copied()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct DefenderHistory {
    pub chosen: Vec<u32>,
}

impl DefenderHistory {
    pub fn depth(&self) -> usize {
        self.chosen.len()
    }
}

/// Fixed-width validity mask over a tree's output slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionMask {
    bits: Vec<bool>,
}

impl ActionMask {
    pub fn from_slots(width: usize, slots: impl IntoIterator<Item = u32>) -> Self {
        let mut bits = vec![false; width];
        for s in slots {
            bits[s as usize] = true;
        }
        ActionMask { bits }
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn is_set(&self, slot: usize) -> bool {
        self.bits[slot]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// A child of a tree node: the label appended to the history and the output
/// slot whose logit scores it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Child {
    pub label: u32,
    pub slot: u32,
}

/// Whether `w` may follow the visited prefix: it must be unvisited and some
/// target must stay reachable from it, avoiding visited vertices, within the
/// remaining vertex budget.
fn attacker_child_is_valid(g: &GameGraph, visited: &[u32], on_path: &[bool], w: u32) -> bool {
    if on_path[w as usize] {
        return false;
    }
    let len_with_w = visited.len() + 1;
    if len_with_w > g.max_path_length() {
        return false;
    }
    if g.is_target(w) {
        return true;
    }
    let budget = (g.max_path_length() - len_with_w) as u32;
    let d = g.target_distance(w);
    if d == UNREACHABLE || d > budget {
        return false;
    }
    // the static shortest route usually survives; only search when it is blocked
    let mut u = w;
    while !g.is_target(u) {
        u = g.next_hop(u);
        if on_path[u as usize] {
            return residual_reachable(g, on_path, w, budget);
        }
    }
    true
}

/// Depth-bounded BFS from `w` over vertices not on the path; targets are not
/// expanded. Static distances (a lower bound) prune hopeless vertices.
fn residual_reachable(g: &GameGraph, on_path: &[bool], w: u32, budget: u32) -> bool {
    let mut depth = vec![UNREACHABLE; g.vertex_count()];
    let mut queue = VecDeque::new();
    depth[w as usize] = 0;
    queue.push_back(w);
    while let Some(u) = queue.pop_front() {
        let du = depth[u as usize];
        for &x in g.neighbors(u) {
            if on_path[x as usize] || depth[x as usize] != UNREACHABLE {
                continue;
            }
            let dx = du + 1;
            if g.is_target(x) {
                return true;
            }
            let rest = g.target_distance(x);
            if rest == UNREACHABLE || dx + rest > budget {
                continue;
            }
            depth[x as usize] = dx;
            queue.push_back(x);
        }
    }
    false
}

/// Valid next vertices after history `h`, in ascending order. The root's
/// children are the viable start vertices; a history ending at a target has
/// none.
pub fn attacker_valid_actions(graph: &GameGraph, h: &AttackerHistory) -> Vec<u32> {
    match h.current() {
        None => graph
            .starts()
            .iter()
            .copied()
            .filter(|&s| graph.start_is_viable(s))
            .collect(),
        Some(v) if graph.is_target(v) => Vec::new(),
        Some(v) => {
            let mut on_path = vec![false; graph.vertex_count()];
            for &x in &h.visited {
                on_path[x as usize] = true;
            }
            graph
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&w| attacker_child_is_valid(graph, &h.visited, &on_path, w))
                .collect()
        }
    }
}

/// Edges the next defender may take after history `h`, in ascending id order.
pub fn defender_valid_actions(spec: &DefenderSpec, h: &DefenderHistory) -> Result<Vec<u32>> {
    let depth = h.depth();
    if depth >= spec.num_defenders() {
        return Err(Error::DepthOutOfRange {
            depth,
            num_defenders: spec.num_defenders(),
        });
    }
    let own = spec.candidates(depth);
    if spec.allow_duplicate_edges() {
        return Ok(own.to_vec());
    }
    let mut taken: Vec<u32> = h.chosen.clone();
    Ok(own
        .iter()
        .copied()
        .filter(|e| !h.chosen.contains(e))
        .filter(|&e| {
            taken.push(e);
            let ok = remaining_defenders_fit(spec, depth + 1, &taken);
            taken.pop();
            ok
        })
        .collect())
}

/// Whether defenders `from..N` can each get a distinct edge outside `taken`
/// (bipartite matching by augmenting paths).
fn remaining_defenders_fit(spec: &DefenderSpec, from: usize, taken: &[u32]) -> bool {
    let rest: Vec<Vec<u32>> = (from..spec.num_defenders())
        .map(|m| {
            spec.candidates(m)
                .iter()
                .copied()
                .filter(|e| !taken.contains(e))
                .collect()
        })
        .collect();
    let mut owner: std::collections::HashMap<u32, usize> = Default::default();
    fn augment(
        m: usize,
        rest: &[Vec<u32>],
        owner: &mut std::collections::HashMap<u32, usize>,
        seen: &mut Vec<u32>,
    ) -> bool {
        for &e in &rest[m] {
            if seen.contains(&e) {
                continue;
            }
            seen.push(e);
            let free = match owner.get(&e) {
                None => true,
                Some(&other) => augment(other, rest, owner, seen),
            };
            if free {
                owner.insert(e, m);
                return true;
            }
        }
        false
    }
    (0..rest.len()).all(|m| augment(m, &rest, &mut owner, &mut Vec::new()))
}

/// One player's decision tree over a shared game instance.
#[derive(Clone, Debug)]
pub struct ActionTree {
    game: Arc<Game>,
    player: Player,
    width: usize,
}

impl ActionTree {
    pub fn new(game: Arc<Game>, player: Player) -> Self {
        let width = match player {
            Player::Attacker => game.graph.max_degree() + game.graph.starts().len(),
            Player::Defender => game.defenders.unified_edges().len(),
        };
        ActionTree {
            game,
            player,
            width,
        }
    }

    pub fn attacker(game: Arc<Game>) -> Self {
        Self::new(game, Player::Attacker)
    }

    pub fn defender(game: Arc<Game>) -> Self {
        Self::new(game, Player::Defender)
    }

    pub fn game(&self) -> &Arc<Game> {
        &self.game
    }

    pub fn player(&self) -> Player {
        self.player
    }

    /// Number of output slots (logits) per node.
    pub fn mask_width(&self) -> usize {
        self.width
    }

    /// Upper bound on the number of decisions along any root-to-leaf path.
    pub fn max_depth(&self) -> usize {
        match self.player {
            Player::Attacker => self.game.graph.max_path_length(),
            Player::Defender => self.game.defenders.num_defenders(),
        }
    }

    pub fn is_leaf(&self, history: &[u32]) -> bool {
        match self.player {
            Player::Attacker => history
                .last()
                .is_some_and(|&v| self.game.graph.is_target(v)),
            Player::Defender => history.len() == self.game.defenders.num_defenders(),
        }
    }

    /// Children of the node at `history`, ordered by slot. Empty at leaves.
    pub fn children(&self, history: &[u32], out: &mut Vec<Child>) -> Result<()> {
        out.clear();
        match self.player {
            Player::Attacker => {
                let g = &self.game.graph;
                let Some(&v) = history.last() else {
                    let offset = g.max_degree() as u32;
                    for (i, &s) in g.starts().iter().enumerate() {
                        if g.start_is_viable(s) {
                            out.push(Child {
                                label: s,
                                slot: offset + i as u32,
                            });
                        }
                    }
                    return Ok(());
                };
                if g.is_target(v) {
                    return Ok(());
                }
                let mut on_path = vec![false; g.vertex_count()];
                for &x in history {
                    on_path[x as usize] = true;
                }
                for (i, &w) in g.neighbors(v).iter().enumerate() {
                    if attacker_child_is_valid(g, history, &on_path, w) {
                        out.push(Child {
                            label: w,
                            slot: i as u32,
                        });
                    }
                }
                Ok(())
            }
            Player::Defender => {
                let spec = &self.game.defenders;
                if history.len() == spec.num_defenders() {
                    return Ok(());
                }
                let h = DefenderHistory {
                    chosen: history.to_vec(),
                };
                for e in defender_valid_actions(spec, &h)? {
                    out.push(Child {
                        label: e,
                        slot: spec.unified_slot(e).expect("candidate in union") as u32,
                    });
                }
                Ok(())
            }
        }
    }

    pub fn mask(&self, history: &[u32]) -> Result<ActionMask> {
        let mut children = Vec::new();
        self.children(history, &mut children)?;
        Ok(ActionMask::from_slots(
            self.width,
            children.iter().map(|c| c.slot),
        ))
    }

    /// Every leaf's label sequence, in slot (= lexicographic) order.
    pub fn leaves(&self, cap: usize) -> Result<Vec<Vec<u32>>> {
        let mut out = Vec::new();
        self.walk(&mut Vec::new(), &mut |h| {
            if out.len() == cap {
                return Err(Error::EnumerationOverflow {
                    what: self.player.name(),
                    cap,
                });
            }
            out.push(h.to_vec());
            Ok(())
        })?;
        Ok(out)
    }

    pub fn count_leaves(&self, cap: usize) -> Result<usize> {
        let mut n = 0usize;
        self.walk(&mut Vec::new(), &mut |_| {
            if n == cap {
                return Err(Error::EnumerationOverflow {
                    what: self.player.name(),
                    cap,
                });
            }
            n += 1;
            Ok(())
        })?;
        Ok(n)
    }

    /// True when the tree has at least two leaves.
    pub fn has_alternatives(&self) -> Result<bool> {
        match self.count_leaves(2) {
            Ok(n) => Ok(n >= 2),
            Err(Error::EnumerationOverflow { .. }) => Ok(true),
            Err(e) => Err(e),
        }
    }

    fn walk(
        &self,
        history: &mut Vec<u32>,
        visit: &mut dyn FnMut(&[u32]) -> Result<()>,
    ) -> Result<()> {
        if self.is_leaf(history) {
            return visit(history);
        }
        let mut children = Vec::new();
        self.children(history, &mut children)?;
        for c in children {
            history.push(c.label);
            self.walk(history, visit)?;
            history.pop();
        }
        Ok(())
    }

    pub fn to_attacker_action(&self, labels: &[u32]) -> AttackerAction {
        AttackerAction {
            path: labels.to_vec(),
        }
    }

    pub fn to_defender_action(&self, labels: &[u32]) -> DefenderAction {
        DefenderAction {
            edges: labels.to_vec(),
        }
    }
}

/// Leaf counts of both trees, by traversal.
pub fn count_leaves(game: &Arc<Game>) -> Result<(usize, usize)> {
    let cap = game.enumeration_cap;
    Ok((
        ActionTree::attacker(game.clone()).count_leaves(cap)?,
        ActionTree::defender(game.clone()).count_leaves(cap)?,
    ))
}
