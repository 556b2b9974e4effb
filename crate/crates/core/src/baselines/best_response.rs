use crate::error::{Error, Result};
use crate::game::{MixedStrategy, PayoffMatrix};
use crate::tree::Player;

/// Exact pure best response of `side` against an opponent mixed strategy.
/// Returns the lowest-index maximizer and its value in the responder's own
/// utility (the defender's utility is the negated attacker payoff).
pub fn best_response(
    payoff: &PayoffMatrix,
    opponent: &MixedStrategy,
    side: Player,
) -> Result<(usize, f64)> {
    let values: Vec<f64> = match side {
        Player::Attacker => {
            if opponent.len() != payoff.cols() {
                return Err(Error::DimensionMismatch {
                    expected: payoff.cols(),
                    got: opponent.len(),
                });
            }
            payoff.row_values(opponent.probs())
        }
        Player::Defender => {
            if opponent.len() != payoff.rows() {
                return Err(Error::DimensionMismatch {
                    expected: payoff.rows(),
                    got: opponent.len(),
                });
            }
            payoff
                .col_values(opponent.probs())
                .into_iter()
                .map(|v| -v)
                .collect()
        }
    };
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Ok((best, values[best]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::EnumeratedGame;
    use crate::game::Game;

    #[test]
    fn diamond_best_responses() {
        let e = EnumeratedGame::new(Game::diamond()).unwrap();
        let (i, v) = best_response(&e.payoff, &MixedStrategy::uniform(2), Player::Attacker).unwrap();
        assert_eq!((i, v), (0, 0.0));
        // defender pure on (1,3), which is defender index 0
        let (i, v) = best_response(&e.payoff, &MixedStrategy::pure(2, 0), Player::Attacker).unwrap();
        assert_eq!(e.attacker[i].path, vec![0, 2, 3]);
        assert_eq!(v, 1.0);
        let (i, v) = best_response(&e.payoff, &MixedStrategy::pure(2, 0), Player::Defender).unwrap();
        assert_eq!((i, v), (0, 1.0));
    }
}
