//! Exact exploitability on enumerable games and Monte-Carlo win rates on
//! everything else.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{AttackerAction, DefenderAction, Game, MixedStrategy, PayoffMatrix};
use crate::policy::{NodeCache, TreePolicy};
use crate::tree::Player;

/// A game with both action spaces enumerated and its payoff matrix built.
#[derive(Clone, Debug)]
pub struct EnumeratedGame {
    pub game: Arc<Game>,
    pub attacker: Vec<AttackerAction>,
    pub defender: Vec<DefenderAction>,
    pub payoff: PayoffMatrix,
}

impl EnumeratedGame {
    pub fn new(game: Arc<Game>) -> Result<Self> {
        let attacker = game.enumerate_attacker_actions()?;
        let defender = game.enumerate_defender_actions()?;
        let payoff = PayoffMatrix::build(&game, &attacker, &defender);
        Ok(EnumeratedGame {
            game,
            attacker,
            defender,
            payoff,
        })
    }

    pub fn labels(&self, player: Player) -> Vec<&[u32]> {
        match player {
            Player::Attacker => self.attacker.iter().map(|a| a.path.as_slice()).collect(),
            Player::Defender => self.defender.iter().map(|d| d.edges.as_slice()).collect(),
        }
    }

    pub fn action_count(&self, player: Player) -> usize {
        match player {
            Player::Attacker => self.attacker.len(),
            Player::Defender => self.defender.len(),
        }
    }

    /// Index of a leaf label sequence in the enumeration.
    pub fn index_map(&self, player: Player) -> HashMap<Vec<u32>, usize> {
        self.labels(player)
            .into_iter()
            .enumerate()
            .map(|(i, l)| (l.to_vec(), i))
            .collect()
    }

    /// Duality gap of the mixed strategies induced by two tree policies.
    pub fn policy_gap(&self, attacker: &TreePolicy, defender: &TreePolicy) -> Result<f64> {
        let x = extract_mixed_strategy(attacker, &self.labels(Player::Attacker))?;
        let y = extract_mixed_strategy(defender, &self.labels(Player::Defender))?;
        duality_gap(&x, &y, &self.payoff)
    }
}

/// The explicit mixed strategy a tree policy induces over `actions`.
pub fn extract_mixed_strategy(policy: &TreePolicy, actions: &[&[u32]]) -> Result<MixedStrategy> {
    let mut cache = NodeCache::new(policy);
    let probs = actions
        .iter()
        .map(|a| cache.path_stats(a, 0.0).map(|s| s.prob))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::InstanceMismatch(format!(
            "policy mass over the enumerated actions is {total}, not 1"
        )));
    }
    MixedStrategy::from_weights(&probs)
}

/// Sum over both players of best-response value minus current value.
pub fn duality_gap(att: &MixedStrategy, def: &MixedStrategy, payoff: &PayoffMatrix) -> Result<f64> {
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
    let rows = payoff.row_values(def.probs());
    let cols = payoff.col_values(att.probs());
    let best_att = rows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_def = cols.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((best_att - best_def).max(0.0))
}

/// Attacker success rates for every attacker/defender policy pairing.
#[derive(Clone, Debug, PartialEq)]
pub struct WinRateMatrix {
    pub attacker_labels: Vec<String>,
    pub defender_labels: Vec<String>,
    /// Row-major, attackers by defenders.
    pub rates: Vec<Vec<f64>>,
    pub rollouts_per_cell: usize,
}

impl WinRateMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("attacker");
        for d in &self.defender_labels {
            s.push(',');
            s.push_str(d);
        }
        s.push('\n');
        for (label, row) in self.attacker_labels.iter().zip(&self.rates) {
            s.push_str(label);
            for r in row {
                s.push(',');
                s.push_str(&r.to_string());
            }
            s.push('\n');
        }
        s
    }
}

pub(crate) fn stream_rng(seed: u64, a: u64, b: u64, tag: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&a.to_le_bytes());
    bytes[16..24].copy_from_slice(&b.to_le_bytes());
    bytes[24..].copy_from_slice(&tag.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Plays `rollouts` independent games per cell. Each cell draws from its own
/// seeded stream, so results do not depend on scheduling.
pub fn win_rate_matrix(
    game: &Game,
    attackers: &[(String, &TreePolicy)],
    defenders: &[(String, &TreePolicy)],
    rollouts: usize,
    seed: u64,
) -> Result<WinRateMatrix> {
    let fp = game.fingerprint();
    for (name, p) in attackers.iter().chain(defenders) {
        if p.tree().game().fingerprint() != fp {
            return Err(Error::InstanceMismatch(format!(
                "policy `{name}` belongs to another instance"
            )));
        }
    }
    if let Some((name, _)) = attackers.iter().find(|(_, p)| p.player() != Player::Attacker) {
        return Err(Error::InstanceMismatch(format!("`{name}` is not an attacker policy")));
    }
    if let Some((name, _)) = defenders.iter().find(|(_, p)| p.player() != Player::Defender) {
        return Err(Error::InstanceMismatch(format!("`{name}` is not a defender policy")));
    }
    let cells: Vec<(usize, usize)> = (0..attackers.len())
        .flat_map(|i| (0..defenders.len()).map(move |j| (i, j)))
        .collect();
    let rates = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut rng = stream_rng(seed, i as u64, j as u64, 0x57a7);
            let mut ac = NodeCache::new(attackers[i].1);
            let mut dc = NodeCache::new(defenders[j].1);
            let mut wins = 0usize;
            for _ in 0..rollouts {
                let a = ac.sample(&mut rng, 0.0)?;
                let d = dc.sample(&mut rng, 0.0)?;
                if game.payoff(&a, &d) > 0.0 {
                    wins += 1;
                }
            }
            Ok(wins as f64 / rollouts.max(1) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(WinRateMatrix {
        attacker_labels: attackers.iter().map(|(l, _)| l.clone()).collect(),
        defender_labels: defenders.iter().map(|(l, _)| l.clone()).collect(),
        rates: rates.chunks(defenders.len().max(1)).map(<[f64]>::to_vec).collect(),
        rollouts_per_cell: rollouts,
    })
}

/// Draws `n` leaves and returns their empirical frequencies over `actions`.
pub fn empirical_frequencies<R: Rng>(
    policy: &TreePolicy,
    actions: &[&[u32]],
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let index: HashMap<&[u32], usize> = actions.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut counts = vec![0usize; actions.len()];
    let mut cache = NodeCache::new(policy);
    for _ in 0..n {
        let leaf = cache.sample(rng, 0.0)?;
        let i = index
            .get(leaf.as_slice())
            .ok_or_else(|| Error::InstanceMismatch("sampled leaf is not enumerated".into()))?;
        counts[*i] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}
