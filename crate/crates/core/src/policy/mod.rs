//! Parameterized conditional distributions over tree children, exact
//! log-probability gradients, and parameter updates.

mod checkpoint;
pub mod network;
pub mod optim;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{ActionMask, ActionTree, Child, Player};
use network::Mlp;
pub use optim::{Moments, Optimizer, OptimizerConfig};

pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    /// One logit vector per tree node, created lazily at zero.
    Tabular,
    /// A shared network mapping node features to logits.
    Network {
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::Network {
            hidden: DEFAULT_HIDDEN,
        }
    }
}

#[derive(Clone, Debug)]
struct TabularEntry {
    logits: Vec<f64>,
    moments: Moments,
}

#[derive(Clone, Debug)]
enum Params {
    Tabular(BTreeMap<Vec<u32>, TabularEntry>),
    Network { net: Mlp, moments: Vec<Moments> },
}

/// A node's valid children and the policy's conditional distribution over
/// them (aligned with `children`).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeDist {
    pub children: Vec<Child>,
    pub probs: Vec<f64>,
}

impl NodeDist {
    /// Conditional probability of child `i` after per-step mixing with the
    /// uniform distribution over children.
    #[inline]
    pub fn mixed(&self, i: usize, eps: f64) -> f64 {
        (1.0 - eps) * self.probs[i] + eps / self.children.len() as f64
    }

    pub fn position(&self, label: u32) -> Option<usize> {
        self.children.iter().position(|c| c.label == label)
    }
}

/// Normalized exponential over the entries of `logits`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Softmax over the set bits of `mask`; masked slots get exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &ActionMask) -> Result<Vec<f64>> {
    if logits.len() != mask.width() {
        return Err(Error::DimensionMismatch {
            expected: mask.width(),
            got: logits.len(),
        });
    }
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let live: Vec<f64> = (0..logits.len())
        .filter(|&i| mask.is_set(i))
        .map(|i| logits[i])
        .collect();
    let mut probs = softmax(&live).into_iter();
    Ok((0..logits.len())
        .map(|i| if mask.is_set(i) { probs.next().unwrap() } else { 0.0 })
        .collect())
}

/// Per-step record of a root-to-leaf walk.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub labels: Vec<u32>,
    /// Index of the chosen child at each step.
    pub choices: Vec<usize>,
    /// Policy conditional probability of each choice.
    pub cond: Vec<f64>,
}

/// Probability summary of one leaf under the policy and its mixed variant.
#[derive(Clone, Debug, PartialEq)]
pub struct PathStats {
    pub log: StepLog,
    /// Chain-rule probability under the policy.
    pub prob: f64,
    /// Chain-rule probability under the per-step mixed law.
    pub mixed: f64,
    /// `1 - mixed`, summed over sibling mass so it stays accurate near 1.
    pub mixed_complement: f64,
}

/// Logit-space gradient per visited node, keyed by history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientAccumulator {
    nodes: BTreeMap<Vec<u32>, NodeGrad>,
}

#[derive(Clone, Debug, PartialEq)]
struct NodeGrad {
    slots: Vec<u32>,
    dlogits: Vec<f64>,
}

impl GradientAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds `coef * (e_choice - p)` at one node.
    pub fn add_step(&mut self, history: &[u32], node: &NodeDist, choice: usize, coef: f64) {
        let entry = self
            .nodes
            .entry(history.to_vec())
            .or_insert_with(|| NodeGrad {
                slots: node.children.iter().map(|c| c.slot).collect(),
                dlogits: vec![0.0; node.children.len()],
            });
        for (i, (d, p)) in entry.dlogits.iter_mut().zip(&node.probs).enumerate() {
            let e = if i == choice { 1.0 } else { 0.0 };
            *d += coef * (e - p);
        }
    }

    /// Adds `other` node by node, in key order.
    pub fn merge(&mut self, other: GradientAccumulator) {
        for (k, g) in other.nodes {
            match self.nodes.get_mut(&k) {
                Some(mine) => mine
                    .dlogits
                    .iter_mut()
                    .zip(&g.dlogits)
                    .for_each(|(a, b)| *a += b),
                None => {
                    self.nodes.insert(k, g);
                }
            }
        }
    }

    /// Full-width logit gradient at `history`, if the node was touched.
    pub fn node_gradient(&self, history: &[u32], width: usize) -> Option<Vec<f64>> {
        self.nodes.get(history).map(|g| {
            let mut out = vec![0.0; width];
            for (&s, &d) in g.slots.iter().zip(&g.dlogits) {
                out[s as usize] = d;
            }
            out
        })
    }

    fn all_finite(&self) -> bool {
        self.nodes
            .values()
            .all(|g| g.dlogits.iter().all(|d| d.is_finite()))
    }
}

/// The conditional-distribution model for one player's tree.
#[derive(Clone, Debug)]
pub struct TreePolicy {
    tree: Arc<ActionTree>,
    params: Params,
}

impl TreePolicy {
    pub fn new(tree: Arc<ActionTree>, config: &PolicyConfig, seed: u64) -> Self {
        let params = match config {
            PolicyConfig::Tabular => Params::Tabular(BTreeMap::new()),
            PolicyConfig::Network { hidden } => {
                let (in_dim, active) = feature_shape(&tree);
                let net = Mlp::new(in_dim, *hidden, tree.mask_width(), active, seed);
                let moments = net.blocks().iter().map(|b| Moments::zeros(b.len())).collect();
                Params::Network { net, moments }
            }
        };
        TreePolicy { tree, params }
    }

    pub fn tabular(tree: Arc<ActionTree>) -> Self {
        Self::new(tree, &PolicyConfig::Tabular, 0)
    }

    pub fn tree(&self) -> &Arc<ActionTree> {
        &self.tree
    }

    pub fn player(&self) -> Player {
        self.tree.player()
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self.params, Params::Tabular(_))
    }

    pub fn config(&self) -> PolicyConfig {
        match &self.params {
            Params::Tabular(_) => PolicyConfig::Tabular,
            Params::Network { net, .. } => PolicyConfig::Network { hidden: net.hidden },
        }
    }

    /// Logits of the given children at `history`.
    fn child_logits(&self, history: &[u32], children: &[Child]) -> Vec<f64> {
        match &self.params {
            Params::Tabular(table) => match table.get(history) {
                Some(e) => children.iter().map(|c| e.logits[c.slot as usize]).collect(),
                None => vec![0.0; children.len()],
            },
            Params::Network { net, .. } => {
                let act = net.hidden_forward(&features(&self.tree, history));
                children
                    .iter()
                    .map(|c| net.output(&act, c.slot as usize))
                    .collect()
            }
        }
    }

    /// Full-width logit vector at `history`.
    pub fn logits(&self, history: &[u32]) -> Vec<f64> {
        let width = self.tree.mask_width();
        match &self.params {
            Params::Tabular(table) => table
                .get(history)
                .map_or_else(|| vec![0.0; width], |e| e.logits.clone()),
            Params::Network { net, .. } => {
                let act = net.hidden_forward(&features(&self.tree, history));
                (0..width).map(|s| net.output(&act, s)).collect()
            }
        }
    }

    /// Masked conditional distribution over all slots.
    pub fn conditional_distribution(&self, history: &[u32], mask: &ActionMask) -> Result<Vec<f64>> {
        masked_softmax(&self.logits(history), mask)
    }

    /// Children and conditional probabilities at a non-leaf node.
    pub fn node(&self, history: &[u32]) -> Result<NodeDist> {
        let mut children = Vec::new();
        self.tree.children(history, &mut children)?;
        if children.is_empty() {
            return Err(Error::EmptyMask);
        }
        let probs = softmax(&self.child_logits(history, &children));
        Ok(NodeDist { children, probs })
    }

    /// Overwrites the logits at one node (tabular only).
    pub fn set_logits(&mut self, history: &[u32], logits: Vec<f64>) -> Result<()> {
        let width = self.tree.mask_width();
        if logits.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: logits.len(),
            });
        }
        match &mut self.params {
            Params::Tabular(table) => {
                table
                    .entry(history.to_vec())
                    .or_insert_with(|| TabularEntry {
                        logits: Vec::new(),
                        moments: Moments::zeros(width),
                    })
                    .logits = logits;
                Ok(())
            }
            Params::Network { .. } => Err(Error::Config(
                "per-node logits can only be set on tabular policies".into(),
            )),
        }
    }

    /// Histories with stored logits (tabular only; empty for networks).
    pub fn known_nodes(&self) -> Vec<Vec<u32>> {
        match &self.params {
            Params::Tabular(t) => t.keys().cloned().collect(),
            Params::Network { .. } => Vec::new(),
        }
    }

    /// All parameters as one vector, in a fixed order.
    pub fn flat_params(&self) -> Vec<f64> {
        match &self.params {
            Params::Tabular(t) => t.values().flat_map(|e| e.logits.iter().copied()).collect(),
            Params::Network { net, .. } => net.blocks().iter().flat_map(|b| b.iter().copied()).collect(),
        }
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.flat_params().len();
        if flat.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        match &mut self.params {
            Params::Tabular(t) => t
                .values_mut()
                .for_each(|e| e.logits.iter_mut().for_each(|p| *p = it.next().unwrap())),
            Params::Network { net, .. } => net
                .blocks_mut()
                .into_iter()
                .for_each(|b| b.iter_mut().for_each(|p| *p = it.next().unwrap())),
        }
        Ok(())
    }

    /// Parameter-space gradient aligned with `flat_params`. Tabular nodes
    /// absent from the table are ignored, so seed them first.
    pub fn flat_gradient(&self, acc: &GradientAccumulator) -> Vec<f64> {
        let width = self.tree.mask_width();
        match &self.params {
            Params::Tabular(t) => t
                .keys()
                .flat_map(|k| acc.node_gradient(k, width).unwrap_or_else(|| vec![0.0; width]))
                .collect(),
            Params::Network { net, .. } => {
                let grads = self.network_gradient(net, acc);
                grads.into_iter().flatten().collect()
            }
        }
    }

    fn network_gradient(&self, net: &Mlp, acc: &GradientAccumulator) -> [Vec<f64>; 6] {
        let mut grads = net.zeros_like();
        for (history, g) in &acc.nodes {
            let feats = features(&self.tree, history);
            let act = net.hidden_forward(&feats);
            let dl: Vec<(usize, f64)> = g
                .slots
                .iter()
                .zip(&g.dlogits)
                .map(|(&s, &d)| (s as usize, d))
                .collect();
            net.backward(&feats, &act, &dl, &mut grads);
        }
        grads
    }

    /// Log-probability of a leaf and the per-step log for gradient replay.
    pub fn action_probability(&self, labels: &[u32]) -> Result<(f64, StepLog)> {
        let stats = NodeCache::new(self).path_stats(labels, 0.0)?;
        Ok((stats.prob, stats.log))
    }

    pub fn log_prob(&self, labels: &[u32]) -> Result<f64> {
        Ok(self.action_probability(labels)?.0.ln())
    }

    /// Gradient of `log prob(leaf)` in logit space.
    pub fn action_log_prob_grad(&self, log: &StepLog) -> Result<GradientAccumulator> {
        let mut cache = NodeCache::new(self);
        let mut acc = GradientAccumulator::new();
        cache.accumulate(&mut acc, log, 1.0)?;
        Ok(acc)
    }

    /// One descent step along `acc`.
    pub fn apply_update(
        &mut self,
        acc: &GradientAccumulator,
        opt: &mut Optimizer,
        lr: f64,
        iteration: usize,
    ) -> Result<()> {
        if !acc.all_finite() {
            return Err(Error::NonFinite {
                what: "gradient",
                iteration,
            });
        }
        opt.advance();
        let width = self.tree.mask_width();
        let grads = self.network().map(|net| self.network_gradient(net, acc));
        match &mut self.params {
            Params::Tabular(table) => {
                for (k, g) in &acc.nodes {
                    if !table.contains_key(k) {
                        table.insert(
                            k.clone(),
                            TabularEntry {
                                logits: vec![0.0; width],
                                moments: Moments::zeros(width),
                            },
                        );
                    }
                    if !opt.uses_moments() {
                        let e = table.get_mut(k).unwrap();
                        for (&s, &d) in g.slots.iter().zip(&g.dlogits) {
                            e.logits[s as usize] -= lr * d;
                        }
                    }
                }
                if opt.uses_moments() {
                    for (k, e) in table.iter_mut() {
                        let g = acc.node_gradient(k, width);
                        opt.apply(&mut e.logits, g.as_deref(), &mut e.moments, lr);
                    }
                }
            }
            Params::Network { net, moments } => {
                let grads = grads.expect("network gradient");
                for ((block, grad), mo) in net.blocks_mut().into_iter().zip(&grads).zip(moments) {
                    opt.apply(block, Some(grad), mo, lr);
                }
            }
        }
        Ok(())
    }

    fn network(&self) -> Option<&Mlp> {
        match &self.params {
            Params::Network { net, .. } => Some(net),
            Params::Tabular(_) => None,
        }
    }
}

/// Input layout: attacker = one-hot(current) ++ visited bitmap ++ remaining
/// budget fraction; defender = one-hot(depth) ++ chosen-edge counts.
fn feature_shape(tree: &ActionTree) -> (usize, usize) {
    let game = tree.game();
    match tree.player() {
        Player::Attacker => {
            let v = game.graph.vertex_count();
            (2 * v + 1, game.graph.max_path_length() + 2)
        }
        Player::Defender => {
            let n = game.defenders.num_defenders();
            (n + game.defenders.unified_edges().len(), n + 1)
        }
    }
}

fn features(tree: &ActionTree, history: &[u32]) -> Vec<(usize, f64)> {
    let game = tree.game();
    let mut out = Vec::with_capacity(history.len() + 2);
    match tree.player() {
        Player::Attacker => {
            let v = game.graph.vertex_count();
            let cap = game.graph.max_path_length();
            if let Some(&cur) = history.last() {
                out.push((cur as usize, 1.0));
            }
            for &x in history {
                out.push((v + x as usize, 1.0));
            }
            out.push((2 * v, (cap - history.len()) as f64 / cap as f64));
        }
        Player::Defender => {
            let n = game.defenders.num_defenders();
            out.push((history.len(), 1.0));
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for &e in history {
                let slot = game.defenders.unified_slot(e).expect("candidate edge");
                *counts.entry(n + slot).or_default() += 1.0;
            }
            out.extend(counts);
        }
    }
    out
}

/// Memo of node distributions for a frozen policy. Histories shared between
/// samples are evaluated once.
pub struct NodeCache<'p> {
    policy: &'p TreePolicy,
    index: HashMap<Vec<u32>, usize>,
    nodes: Vec<NodeDist>,
}

impl<'p> NodeCache<'p> {
    pub fn new(policy: &'p TreePolicy) -> Self {
        NodeCache {
            policy,
            index: HashMap::new(),
            nodes: Vec::new(),
        }
    }

    pub fn policy(&self) -> &'p TreePolicy {
        self.policy
    }

    pub fn node(&mut self, history: &[u32]) -> Result<&NodeDist> {
        if let Some(&i) = self.index.get(history) {
            return Ok(&self.nodes[i]);
        }
        let node = self.policy.node(history)?;
        let i = self.nodes.len();
        self.nodes.push(node);
        self.index.insert(history.to_vec(), i);
        Ok(&self.nodes[i])
    }

    /// Draws a leaf from the per-step mixed law (`eps = 0` is the policy).
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R, eps: f64) -> Result<Vec<u32>> {
        let tree = self.policy.tree().clone();
        let mut labels = Vec::with_capacity(tree.max_depth());
        while !tree.is_leaf(&labels) {
            let node = self.node(&labels)?;
            let n = node.children.len();
            let u: f64 = rng.gen();
            let i = pick(u, n, |i| node.mixed(i, eps));
            labels.push(node.children[i].label);
        }
        Ok(labels)
    }

    /// Walks an existing leaf, collecting policy and mixed probabilities.
    pub fn path_stats(&mut self, labels: &[u32], eps: f64) -> Result<PathStats> {
        let tree = self.policy.tree().clone();
        let mut choices = Vec::with_capacity(labels.len());
        let mut cond = Vec::with_capacity(labels.len());
        let mut prob = 1.0;
        let mut mixed = 1.0;
        let mut complement = 0.0;
        for step in 0..labels.len() {
            let history = &labels[..step];
            if tree.is_leaf(history) {
                return Err(Error::Inconsistent { step });
            }
            let node = self.node(history)?;
            let i = node
                .position(labels[step])
                .ok_or(Error::Inconsistent { step })?;
            let q = node.mixed(i, eps);
            let others: f64 = (0..node.children.len())
                .filter(|&j| j != i)
                .map(|j| node.mixed(j, eps))
                .sum();
            complement += mixed * others;
            mixed *= q;
            prob *= node.probs[i];
            choices.push(i);
            cond.push(node.probs[i]);
        }
        if !tree.is_leaf(labels) {
            return Err(Error::Inconsistent {
                step: labels.len(),
            });
        }
        Ok(PathStats {
            log: StepLog {
                labels: labels.to_vec(),
                choices,
                cond,
            },
            prob,
            mixed,
            mixed_complement: complement,
        })
    }

    /// Exact draw from the mixed law conditioned on avoiding the leaf
    /// `excluded`: along the excluded path each node discounts the excluded
    /// child by the mass of the excluded leaf beneath it.
    pub fn sample_excluding<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        eps: f64,
        excluded: &[u32],
    ) -> Result<Vec<u32>> {
        let stats = self.path_stats(excluded, eps)?;
        let len = excluded.len();
        // tail[i] = 1 - prob(excluded leaf | node at depth i), summed stably
        let mut tail = vec![0.0; len + 1];
        for i in (0..len).rev() {
            let node = self.node(&excluded[..i])?;
            let c = stats.log.choices[i];
            let q = node.mixed(c, eps);
            let others: f64 = (0..node.children.len())
                .filter(|&j| j != c)
                .map(|j| node.mixed(j, eps))
                .sum();
            tail[i] = others + q * tail[i + 1];
        }
        if !(tail[0] > 0.0) {
            return Err(Error::Degenerate(
                "no alternative leaf has positive probability".into(),
            ));
        }
        let tree = self.policy.tree().clone();
        let mut labels = Vec::with_capacity(tree.max_depth());
        let mut on_excluded = true;
        while !tree.is_leaf(&labels) {
            let depth = labels.len();
            let node = self.node(&labels)?;
            let n = node.children.len();
            let u: f64 = rng.gen();
            let i = if on_excluded {
                let c = stats.log.choices[depth];
                let weight = |j: usize| {
                    let q = node.mixed(j, eps);
                    if j == c {
                        q * tail[depth + 1]
                    } else {
                        q
                    }
                };
                let i = pick(u * tail[depth], n, weight);
                on_excluded = i == c;
                i
            } else {
                pick(u, n, |j| node.mixed(j, eps))
            };
            labels.push(node.children[i].label);
        }
        Ok(labels)
    }

    /// Adds `coef * grad log prob(leaf)` for a logged walk.
    pub fn accumulate(
        &mut self,
        acc: &mut GradientAccumulator,
        log: &StepLog,
        coef: f64,
    ) -> Result<()> {
        for (step, &choice) in log.choices.iter().enumerate() {
            let history = &log.labels[..step];
            let node = self.node(history)?;
            acc.add_step(history, node, choice, coef);
        }
        Ok(())
    }
}

/// Inverse-CDF pick: first index whose running weight exceeds `target`,
/// falling back to the last positive weight on rounding.
fn pick(target: f64, n: usize, weight: impl Fn(usize) -> f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for i in 0..n {
        let w = weight(i);
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if target < acc {
            return i;
        }
    }
    last_positive
}
