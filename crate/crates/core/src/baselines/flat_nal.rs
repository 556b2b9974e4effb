//! Nash-advantage-loss training on the enumerated (normal-form) game: one
//! logit per pure action and action-level uniform mixing.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{duality_gap, stream_rng, EnumeratedGame};
use crate::game::MixedStrategy;
use crate::metrics::{MetricsRow, MetricsSink};
use crate::policy::{softmax, Moments, Optimizer};
use crate::tso::Hyperparameters;

/// Defaults for the flat learner: slower, gentler decay than the tree learner
/// and no pruning.
pub fn flat_defaults() -> Hyperparameters {
    Hyperparameters {
        learning_rate: 1e-4,
        tau: 0.1,
        lr_decay: 0.9,
        tau_decay: 0.9,
        decay_fraction: 0.1,
        epsilon: 0.8,
        ablate_prune: true,
        ..Hyperparameters::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatRecord {
    pub alt: usize,
    pub reward: f64,
    pub p: f64,
    pub alt_prob: f64,
}

pub struct FlatTrainer<'g> {
    game: &'g EnumeratedGame,
    hyper: Hyperparameters,
    seed: u64,
    logits: [Vec<f64>; 2],
    moments: [Moments; 2],
    optimizers: [Optimizer; 2],
    iteration: usize,
    eta: f64,
    tau: f64,
    samples: u64,
}

fn categorical<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64>, total: f64) -> usize {
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if target < acc {
            return i;
        }
    }
    last
}

impl<'g> FlatTrainer<'g> {
    pub fn new(game: &'g EnumeratedGame, hyper: Hyperparameters, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let sizes = [game.attacker.len(), game.defender.len()];
        if !hyper.ablate_prune && sizes.iter().any(|&n| n < 2) {
            return Err(Error::Degenerate("pruning needs at least two actions per side".into()));
        }
        Ok(FlatTrainer {
            eta: hyper.learning_rate,
            tau: hyper.tau,
            logits: sizes.map(|n| vec![0.0; n]),
            moments: sizes.map(Moments::zeros),
            optimizers: [Optimizer::new(hyper.optimizer), Optimizer::new(hyper.optimizer)],
            game,
            hyper,
            seed,
            iteration: 0,
            samples: 0,
        })
    }

    pub fn with_logits(mut self, logits: [Vec<f64>; 2]) -> Result<Self> {
        for k in 0..2 {
            if logits[k].len() != self.logits[k].len() {
                return Err(Error::DimensionMismatch {
                    expected: self.logits[k].len(),
                    got: logits[k].len(),
                });
            }
        }
        self.logits = logits;
        Ok(self)
    }

    pub fn strategies(&self) -> [MixedStrategy; 2] {
        [0, 1].map(|k| MixedStrategy::from_weights(&softmax(&self.logits[k])).expect("softmax"))
    }

    pub fn gap(&self) -> Result<f64> {
        let [x, y] = self.strategies();
        duality_gap(&x, &y, &self.game.payoff)
    }

    fn sample_alt<R: Rng>(&self, rng: &mut R, probs: &[f64], first: usize, eps: f64) -> (usize, f64) {
        let n = probs.len() as f64;
        let mixed = |i: usize| (1.0 - eps) * probs[i] + eps / n;
        if self.hyper.ablate_prune {
            let alt = categorical(rng, (0..probs.len()).map(mixed), 1.0);
            return (alt, mixed(alt));
        }
        let remaining: f64 = (0..probs.len()).filter(|&i| i != first).map(mixed).sum();
        let weights = (0..probs.len()).map(|i| if i == first { 0.0 } else { mixed(i) });
        let alt = categorical(rng, weights, remaining);
        (alt, mixed(alt) / remaining)
    }

    /// Draws one batch; records are per player in sample order.
    pub fn collect_batch(&self) -> [Vec<FlatRecord>; 2] {
        let probs = [softmax(&self.logits[0]), softmax(&self.logits[1])];
        let eps = self.hyper.epsilon;
        let floor = self.hyper.log_prob_floor;
        let tau = self.tau;
        let a = &self.game.payoff;
        let pairs: Vec<[FlatRecord; 2]> = (0..self.hyper.batch_size)
            .into_par_iter()
            .map(|s| {
                let mut rng = stream_rng(self.seed, self.iteration as u64, s as u64, 0xf1a7);
                let fa = categorical(&mut rng, probs[0].iter().copied(), 1.0);
                let fd = categorical(&mut rng, probs[1].iter().copied(), 1.0);
                let (aa, pa) = self.sample_alt(&mut rng, &probs[0], fa, eps);
                let (ad, pd) = self.sample_alt(&mut rng, &probs[1], fd, eps);
                let reg = |p: f64| tau * p.max(floor).ln();
                [
                    FlatRecord {
                        alt: aa,
                        reward: -a.get(aa, fd) + reg(probs[0][aa]),
                        p: pa,
                        alt_prob: probs[0][aa],
                    },
                    FlatRecord {
                        alt: ad,
                        reward: a.get(fa, ad) + reg(probs[1][ad]),
                        p: pd,
                        alt_prob: probs[1][ad],
                    },
                ]
            })
            .collect();
        let mut out = [Vec::new(), Vec::new()];
        for [x, y] in pairs {
            out[0].push(x);
            out[1].push(y);
        }
        out
    }

    /// Gradient of the surrogate loss for player `k` from weighted records,
    /// with `baseline` standing in for the batch mean reward. Returns the
    /// gradient and the summed loss estimate.
    pub fn gradient(&self, k: usize, records: &[(FlatRecord, f64)], baseline: f64) -> (Vec<f64>, f64) {
        let probs = softmax(&self.logits[k]);
        let mut grad = vec![0.0; probs.len()];
        let mut loss = 0.0;
        for (r, weight) in records {
            let coef = weight * (r.reward - baseline) / r.p * r.alt_prob;
            loss += coef;
            // d prob(alt) / d logits = prob(alt) * (e_alt - probs)
            for (i, g) in grad.iter_mut().enumerate() {
                let e = if i == r.alt { 1.0 } else { 0.0 };
                *g += coef * (e - probs[i]);
            }
        }
        (grad, loss)
    }

    pub fn step(&mut self) -> Result<f64> {
        let batch = self.collect_batch();
        let mut total = 0.0;
        let mut grads = [Vec::new(), Vec::new()];
        for k in 0..2 {
            let v = batch[k].iter().map(|r| r.reward).sum::<f64>() / batch[k].len() as f64;
            let weighted: Vec<_> = batch[k].iter().map(|r| (r.clone(), 1.0)).collect();
            let (grad, loss) = self.gradient(k, &weighted, v);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    what: "flat gradient",
                    iteration: self.iteration,
                });
            }
            total += loss;
            grads[k] = grad;
        }
        for (k, grad) in grads.iter().enumerate() {
            self.optimizers[k].advance();
            self.optimizers[k].apply(&mut self.logits[k], Some(grad), &mut self.moments[k], self.eta);
        }
        self.iteration += 1;
        self.samples += self.hyper.batch_size as u64;
        if self.iteration.is_multiple_of(self.hyper.decay_period()) {
            self.eta *= self.hyper.lr_decay;
            self.tau *= self.hyper.tau_decay;
        }
        Ok(total)
    }

    pub fn run(&mut self, sink: &mut dyn MetricsSink) -> Result<()> {
        let start = Instant::now();
        let total = self.hyper.effective_iterations();
        let every = self.hyper.eval_interval();
        let row = |t: &FlatTrainer, loss: Option<f64>| -> Result<MetricsRow> {
            Ok(MetricsRow {
                step: t.iteration as u64,
                samples: t.samples,
                loss_estimate: loss,
                duality_gap: Some(t.gap()?),
                eta: Some(t.eta),
                tau: Some(t.tau),
                epsilon: Some(t.hyper.epsilon),
                wallclock_ms: t
                    .hyper
                    .record_wallclock
                    .then(|| start.elapsed().as_millis() as u64),
            })
        };
        if self.iteration == 0 {
            sink.record(&row(self, None)?)?;
        }
        let (mut sum, mut n) = (0.0, 0usize);
        while self.iteration < total {
            sum += self.step()?;
            n += 1;
            if self.iteration.is_multiple_of(every) || self.iteration == total {
                sink.record(&row(self, Some(sum / n as f64))?)?;
                sum = 0.0;
                n = 0;
            }
        }
        Ok(())
    }
}
