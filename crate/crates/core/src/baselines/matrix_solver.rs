//! Regret-matching-plus for two-player zero-sum matrix games.

use log::debug;
use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::game::{MixedStrategy, PayoffMatrix};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// How iterates are combined into the reported average strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    Uniform,
    /// Iterate `t` weighted by `t`.
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub attacker: MixedStrategy,
    pub defender: MixedStrategy,
    /// Row player's value under the averaged profile.
    pub value: f64,
    pub exploitability: f64,
    pub iterations: usize,
    /// False when neither regret matching nor the exact refinement reached
    /// the tolerance.
    pub converged: bool,
    /// True when the returned profile came from the linear-programming step.
    pub refined: bool,
}

/// Best-response gap of a profile in the matrix game.
pub fn exploitability(a: &PayoffMatrix, x: &[f64], y: &[f64]) -> f64 {
    let best_row = a
        .row_values(y)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let best_col = a
        .col_values(x)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    (best_row - best_col).max(0.0)
}

fn normalize_positive(r: &[f64]) -> Vec<f64> {
    let total: f64 = r.iter().sum();
    if total > 0.0 {
        r.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / r.len() as f64; r.len()]
    }
}

/// Alternating regret-matching-plus. The row player maximizes.
pub fn solve(a: &PayoffMatrix, tolerance: f64, max_iters: usize, averaging: Averaging) -> SolveResult {
    let (m, n) = (a.rows(), a.cols());
    let mut rx = vec![0.0; m];
    let mut ry = vec![0.0; n];
    let mut sx = vec![0.0; m];
    let mut sy = vec![0.0; n];
    let mut weight_total = 0.0;
    let check_every = 16;
    let mut t = 0;
    let average = |s: &[f64], w: f64| -> Vec<f64> { s.iter().map(|v| v / w).collect() };
    loop {
        t += 1;
        let w = match averaging {
            Averaging::Uniform => 1.0,
            Averaging::Linear => t as f64,
        };
        let x = normalize_positive(&rx);
        let u = a.row_values(&normalize_positive(&ry));
        let ux: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
        for i in 0..m {
            rx[i] = (rx[i] + u[i] - ux).max(0.0);
        }
        let x = normalize_positive(&rx);
        let y = normalize_positive(&ry);
        // column player minimizes the row payoff
        let c = a.col_values(&x);
        let cy: f64 = c.iter().zip(&y).map(|(a, b)| a * b).sum();
        for j in 0..n {
            ry[j] = (ry[j] + cy - c[j]).max(0.0);
        }
        let y = normalize_positive(&ry);
        for i in 0..m {
            sx[i] += w * x[i];
        }
        for j in 0..n {
            sy[j] += w * y[j];
        }
        weight_total += w;
        if t % check_every == 0 || t >= max_iters {
            let (ax, ay) = (average(&sx, weight_total), average(&sy, weight_total));
            let gap = exploitability(a, &ax, &ay);
            if gap < tolerance || t >= max_iters {
                let value: f64 = a.row_values(&ay).iter().zip(&ax).map(|(u, p)| u * p).sum();
                return SolveResult {
                    attacker: MixedStrategy::from_weights(&ax).expect("nonzero mass"),
                    defender: MixedStrategy::from_weights(&ay).expect("nonzero mass"),
                    value,
                    exploitability: gap,
                    iterations: t,
                    converged: gap < tolerance,
                    refined: false,
                };
            }
        }
    }
}

/// Optimal mixed strategy of one side by linear programming: maximize the
/// guaranteed value `v` subject to every opposing pure action yielding at
/// least `v`.
fn lp_side(a: &PayoffMatrix, row_player: bool) -> Option<Vec<f64>> {
    let (own, opp) = if row_player { (a.rows(), a.cols()) } else { (a.cols(), a.rows()) };
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let probs: Vec<_> = (0..own).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let v = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for j in 0..opp {
        let mut terms: Vec<_> = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                // the column player maximizes the negated payoff
                let u = if row_player { a.get(i, j) } else { -a.get(j, i) };
                (p, u)
            })
            .collect();
        terms.push((v, -1.0));
        lp.add_constraint(&terms, ComparisonOp::Ge, 0.0);
    }
    let ones: Vec<_> = probs.iter().map(|&p| (p, 1.0)).collect();
    lp.add_constraint(&ones, ComparisonOp::Eq, 1.0);
    let solution = lp.solve().ok()?;
    let raw: Vec<f64> = probs.iter().map(|&p| solution[p].max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    (total > 0.0).then(|| raw.iter().map(|p| p / total).collect())
}

/// Exact equilibrium of the matrix game, when the LP solver succeeds.
pub fn solve_exact(a: &PayoffMatrix) -> Option<SolveResult> {
    let x = lp_side(a, true)?;
    let y = lp_side(a, false)?;
    let value: f64 = a.row_values(&y).iter().zip(&x).map(|(u, p)| u * p).sum();
    Some(SolveResult {
        exploitability: exploitability(a, &x, &y),
        attacker: MixedStrategy::from_weights(&x).ok()?,
        defender: MixedStrategy::from_weights(&y).ok()?,
        value,
        iterations: 0,
        converged: true,
        refined: true,
    })
}

/// Regret matching with uniform averaging. When it stops short of
/// `tolerance`, the profile is replaced by the linear-programming solution if
/// that one is within tolerance.
pub fn solve_restricted(a: &PayoffMatrix, tolerance: f64, max_iters: usize) -> SolveResult {
    let rm = solve(a, tolerance, max_iters, Averaging::Uniform);
    if rm.converged {
        return rm;
    }
    match solve_exact(a) {
        Some(mut exact) if exact.exploitability < tolerance => {
            debug!(
                "regret matching stopped at {:.3e}; exact refinement reached {:.3e}",
                rm.exploitability, exact.exploitability
            );
            exact.iterations = rm.iterations;
            exact
        }
        _ => rm,
    }
}
