//! Double oracle with exact enumerative best responses.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::best_response::best_response;
use super::matrix_solver::{solve_restricted, DEFAULT_MAX_ITERS};
use crate::error::Result;
use crate::eval::EnumeratedGame;
use crate::game::{MixedStrategy, PayoffMatrix};
use crate::metrics::{MetricsRow, MetricsSink};
use crate::tree::Player;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoConfig {
    pub max_iterations: usize,
    /// Minimum best-response improvement that still expands a pool.
    pub tolerance: f64,
    pub solver_max_iters: usize,
    /// Stop once this many simulator queries have been spent.
    pub max_samples: Option<u64>,
}

impl Default for DoConfig {
    fn default() -> Self {
        DoConfig {
            max_iterations: 1000,
            tolerance: 1e-6,
            solver_max_iters: DEFAULT_MAX_ITERS,
            max_samples: None,
        }
    }
}

/// Pools after one iteration, as printable actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSnapshot {
    pub iteration: usize,
    pub samples: u64,
    pub duality_gap: f64,
    pub attacker_pool: Vec<String>,
    pub defender_pool: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoOutcome {
    /// Meta strategies lifted to the full action lists.
    pub attacker: MixedStrategy,
    pub defender: MixedStrategy,
    pub duality_gap: f64,
    pub samples: u64,
    pub iterations: usize,
    /// True when neither best response could expand its pool.
    pub converged: bool,
    /// Set when some restricted solve hit its iteration cap.
    pub solver_warning: bool,
    pub pools: Vec<PoolSnapshot>,
}

fn lift(pool: &[usize], meta: &MixedStrategy, n: usize) -> MixedStrategy {
    let mut full = vec![0.0; n];
    for (&i, &p) in pool.iter().zip(meta.probs()) {
        full[i] += p;
    }
    MixedStrategy::from_weights(&full).expect("meta strategy has mass")
}

/// Runs double oracle to convergence, the iteration cap, or the sample budget.
/// Every payoff cell and every best-response utility evaluation counts as one
/// simulator query.
pub fn double_oracle(
    game: &EnumeratedGame,
    config: &DoConfig,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<DoOutcome> {
    let (na, nd) = (game.attacker.len(), game.defender.len());
    let a = &game.payoff;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut att_pool = vec![rng.gen_range(0..na)];
    let mut def_pool = vec![rng.gen_range(0..nd)];
    let mut samples: u64 = 1;
    let mut pools = Vec::new();
    let mut solver_warning = false;
    let mut iterations = 0;
    let mut converged = false;
    let describe = |pool: &[usize], side: Player| -> Vec<String> {
        pool.iter()
            .map(|&i| match side {
                Player::Attacker => game.attacker[i].to_string(),
                Player::Defender => game.game.describe_defender(&game.defender[i]),
            })
            .collect()
    };
    let (mut x, mut y, mut gap);
    loop {
        iterations += 1;
        let sub = PayoffMatrix::from_fn(att_pool.len(), def_pool.len(), |i, j| {
            a.get(att_pool[i], def_pool[j])
        });
        let solved = solve_restricted(&sub, config.tolerance / 10.0, config.solver_max_iters);
        if !solved.converged {
            solver_warning = true;
            warn!(
                "restricted solve stopped at exploitability {:.3e} after {} iterations",
                solved.exploitability, solved.iterations
            );
        }
        x = lift(&att_pool, &solved.attacker, na);
        y = lift(&def_pool, &solved.defender, nd);
        let support = |s: &MixedStrategy| s.probs().iter().filter(|&&p| p > 0.0).count() as u64;
        let (ia, va) = best_response(a, &y, Player::Attacker)?;
        let (id, vd) = best_response(a, &x, Player::Defender)?;
        samples += na as u64 * support(&y) + nd as u64 * support(&x);
        gap = (va + vd).max(0.0);
        sink.record(&MetricsRow {
            step: iterations as u64,
            samples,
            duality_gap: Some(gap),
            ..Default::default()
        })?;
        pools.push(PoolSnapshot {
            iteration: iterations,
            samples,
            duality_gap: gap,
            attacker_pool: describe(&att_pool, Player::Attacker),
            defender_pool: describe(&def_pool, Player::Defender),
        });
        let grow_a = va - solved.value > config.tolerance && !att_pool.contains(&ia);
        let grow_d = vd + solved.value > config.tolerance && !def_pool.contains(&id);
        if !grow_a && !grow_d {
            converged = true;
            break;
        }
        if iterations >= config.max_iterations
            || config.max_samples.is_some_and(|b| samples >= b)
        {
            break;
        }
        if grow_a {
            att_pool.push(ia);
            samples += def_pool.len() as u64;
        }
        if grow_d {
            def_pool.push(id);
            samples += att_pool.len() as u64;
        }
    }
    Ok(DoOutcome {
        attacker: x,
        defender: y,
        duality_gap: gap,
        samples,
        iterations,
        converged,
        solver_warning,
        pools,
    })
}
