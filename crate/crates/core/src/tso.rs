//! Tree-based stochastic optimization: sampled Nash-advantage-loss
//! gradients with the sample-and-prune draw, on tree-factored policies.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{stream_rng, EnumeratedGame};
use crate::game::Game;
use crate::metrics::{MetricsRow, MetricsSink};
use crate::policy::{
    GradientAccumulator, NodeCache, Optimizer, OptimizerConfig, PolicyConfig, StepLog, TreePolicy,
};
use crate::tree::{ActionTree, Player};

/// Rejected mixed draws before switching to exact conditional sampling.
pub const MAX_REJECTIONS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier at each decay event.
    pub lr_decay: f64,
    pub tau: f64,
    /// Regularization multiplier at each decay event.
    pub tau_decay: f64,
    /// Decay interval as a fraction of `iterations`.
    pub decay_fraction: f64,
    pub epsilon: f64,
    /// Linearly anneal epsilon to 5% of its initial value.
    pub epsilon_decay: bool,
    /// Draw the alternative action without removing the first one.
    pub ablate_prune: bool,
    pub log_prob_floor: f64,
    pub optimizer: OptimizerConfig,
    pub policy: PolicyConfig,
    /// Iterations between evaluations; defaults to `max(iterations / 200, 1)`.
    pub eval_every: Option<usize>,
    /// Stop once this many samples have been consumed.
    pub max_samples: Option<u64>,
    pub record_wallclock: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            iterations: 50_000,
            batch_size: 100,
            learning_rate: 1e-4,
            lr_decay: 0.8,
            tau: 0.05,
            tau_decay: 0.7,
            decay_fraction: 0.01,
            epsilon: 0.8,
            epsilon_decay: false,
            ablate_prune: false,
            log_prob_floor: 1e-12,
            optimizer: OptimizerConfig::default(),
            policy: PolicyConfig::default(),
            eval_every: None,
            max_samples: None,
            record_wallclock: false,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iterations == 0 || self.batch_size == 0 {
            return bad("iterations and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.tau >= 0.0) {
            return bad("learning_rate must be positive and tau nonnegative");
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1)");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || !(self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return bad("decay weights must lie in (0, 1]");
        }
        if !(self.decay_fraction > 0.0 && self.decay_fraction <= 1.0) {
            return bad("decay_fraction must lie in (0, 1]");
        }
        if !(self.log_prob_floor > 0.0) {
            return bad("log_prob_floor must be positive");
        }
        if self.eval_every == Some(0) {
            return bad("eval_every must be positive");
        }
        Ok(())
    }

    /// Iterations between decay events.
    pub fn decay_period(&self) -> usize {
        ((self.decay_fraction * self.iterations as f64).round() as usize).max(1)
    }

    pub fn eval_interval(&self) -> usize {
        self.eval_every.unwrap_or((self.iterations / 200).max(1))
    }

    /// Iterations actually run once the sample budget is applied.
    pub fn effective_iterations(&self) -> usize {
        match self.max_samples {
            Some(b) => self.iterations.min((b / self.batch_size as u64) as usize),
            None => self.iterations,
        }
    }
}

/// Outcome of one sample-and-prune draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PrunedDraw {
    pub alt: Vec<u32>,
    /// Probability with which `alt` was drawn.
    pub p: f64,
    /// Policy probability of `alt`.
    pub alt_prob: f64,
    pub log: StepLog,
    /// Whether the exact conditional sampler had to be used.
    pub fell_back: bool,
}

/// Draws an alternative to `first` from the mixed law. With pruning, `first`
/// is removed and the rest renormalized; without, the mixed law is used as is.
pub fn prune_and_resample<R: Rng + ?Sized>(
    cache: &mut NodeCache<'_>,
    rng: &mut R,
    first: &[u32],
    eps: f64,
    prune: bool,
) -> Result<PrunedDraw> {
    if !prune {
        let alt = cache.sample(rng, eps)?;
        let s = cache.path_stats(&alt, eps)?;
        return Ok(PrunedDraw {
            alt,
            p: s.mixed,
            alt_prob: s.prob,
            log: s.log,
            fell_back: false,
        });
    }
    let first_stats = cache.path_stats(first, eps)?;
    let remaining = first_stats.mixed_complement;
    if !(remaining > 0.0) {
        return Err(Error::Degenerate(
            "the first action carries all probability; nothing to prune to".into(),
        ));
    }
    let mut alt = None;
    for _ in 0..MAX_REJECTIONS {
        let a = cache.sample(rng, eps)?;
        if a != first {
            alt = Some(a);
            break;
        }
    }
    let fell_back = alt.is_none();
    let alt = match alt {
        Some(a) => a,
        None => cache.sample_excluding(rng, eps, first)?,
    };
    let s = cache.path_stats(&alt, eps)?;
    Ok(PrunedDraw {
        alt,
        p: s.mixed / remaining,
        alt_prob: s.prob,
        log: s.log,
        fell_back,
    })
}

/// First draw from the policy, then the pruned alternative.
pub fn sample_and_prune<R: Rng + ?Sized>(
    cache: &mut NodeCache<'_>,
    rng: &mut R,
    eps: f64,
    prune: bool,
) -> Result<(Vec<u32>, PrunedDraw)> {
    let first = cache.sample(rng, 0.0)?;
    let draw = prune_and_resample(cache, rng, &first, eps, prune)?;
    Ok((first, draw))
}

/// One player's entry in the sample buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub player: Player,
    pub alt: Vec<u32>,
    /// `-payoff + tau * ln max(prob, floor)`.
    pub reward: f64,
    pub p: f64,
    pub alt_prob: f64,
    pub log: StepLog,
}

/// Per-player records of one batch, in sample order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub records: [Vec<SampleRecord>; 2],
}

/// Scalars derived from a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchEstimate {
    /// Batch mean of the rewards per player.
    pub baseline: [f64; 2],
    /// `(r - v) / p` per record.
    pub coefficients: [Vec<f64>; 2],
    /// `sum over records of coefficient * prob(alt)`, both players.
    pub loss: f64,
}

impl Batch {
    pub fn estimate(&self) -> BatchEstimate {
        let mut baseline = [0.0; 2];
        let mut coefficients = [Vec::new(), Vec::new()];
        let mut loss = 0.0;
        for k in 0..2 {
            let recs = &self.records[k];
            let v = recs.iter().map(|r| r.reward).sum::<f64>() / recs.len().max(1) as f64;
            baseline[k] = v;
            coefficients[k] = recs.iter().map(|r| (r.reward - v) / r.p).collect();
            loss += recs
                .iter()
                .zip(&coefficients[k])
                .map(|(r, g)| g * r.alt_prob)
                .sum::<f64>();
        }
        BatchEstimate {
            baseline,
            coefficients,
            loss,
        }
    }
}

/// Mutable training state: both policies, their optimizers and schedules.
pub struct Trainer {
    game: Arc<Game>,
    hyper: Hyperparameters,
    seed: u64,
    policies: [TreePolicy; 2],
    optimizers: [Optimizer; 2],
    iteration: usize,
    eta: f64,
    tau: f64,
    samples: u64,
}

impl Trainer {
    pub fn new(game: Arc<Game>, hyper: Hyperparameters, seed: u64) -> Result<Self> {
        let policies = [Player::Attacker, Player::Defender].map(|p| {
            let tree = Arc::new(ActionTree::new(game.clone(), p));
            TreePolicy::new(tree, &hyper.policy, seed ^ (0x9e37_79b9 + p.index() as u64))
        });
        Self::with_policies(game, hyper, seed, policies)
    }

    pub fn with_policies(
        game: Arc<Game>,
        hyper: Hyperparameters,
        seed: u64,
        policies: [TreePolicy; 2],
    ) -> Result<Self> {
        hyper.validate()?;
        for (k, pol) in policies.iter().enumerate() {
            if pol.player() != Player::BOTH[k] {
                return Err(Error::Config("policies must be ordered attacker, defender".into()));
            }
            if !hyper.ablate_prune && !pol.tree().has_alternatives()? {
                return Err(Error::Degenerate(format!(
                    "the {} has a single action, so there is nothing to prune to",
                    pol.player().name()
                )));
            }
        }
        let optimizers = [Optimizer::new(hyper.optimizer), Optimizer::new(hyper.optimizer)];
        Ok(Trainer {
            eta: hyper.learning_rate,
            tau: hyper.tau,
            game,
            hyper,
            seed,
            policies,
            optimizers,
            iteration: 0,
            samples: 0,
        })
    }

    pub fn policies(&self) -> &[TreePolicy; 2] {
        &self.policies
    }

    pub fn into_policies(self) -> [TreePolicy; 2] {
        self.policies
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn epsilon(&self) -> f64 {
        let e0 = self.hyper.epsilon;
        if !self.hyper.epsilon_decay {
            return e0;
        }
        let frac = self.iteration as f64 / self.hyper.iterations as f64;
        e0 * (1.0 - 0.95 * frac.min(1.0))
    }

    /// Draws one batch against the current (frozen) policies.
    pub fn collect_batch(&self) -> Result<Batch> {
        let eps = self.epsilon();
        let tau = self.tau;
        let floor = self.hyper.log_prob_floor;
        let prune = !self.hyper.ablate_prune;
        let game = &self.game;
        let [att, def] = &self.policies;
        let iteration = self.iteration as u64;
        let seed = self.seed;
        let pairs = (0..self.hyper.batch_size)
            .into_par_iter()
            .map_init(
                || (NodeCache::new(att), NodeCache::new(def)),
                |(ac, dc), s| -> Result<[SampleRecord; 2]> {
                    let mut rng = stream_rng(seed, iteration, s as u64, 0x750);
                    let a_first = ac.sample(&mut rng, 0.0)?;
                    let d_first = dc.sample(&mut rng, 0.0)?;
                    let a = prune_and_resample(ac, &mut rng, &a_first, eps, prune)?;
                    let d = prune_and_resample(dc, &mut rng, &d_first, eps, prune)?;
                    let reg = |prob: f64| tau * prob.max(floor).ln();
                    // each player's own payoff is negated into a cost
                    let a_reward = -game.payoff(&a.alt, &d_first) + reg(a.alt_prob);
                    let d_reward = game.payoff(&a_first, &d.alt) + reg(d.alt_prob);
                    Ok([
                        SampleRecord {
                            player: Player::Attacker,
                            alt: a.alt,
                            reward: a_reward,
                            p: a.p,
                            alt_prob: a.alt_prob,
                            log: a.log,
                        },
                        SampleRecord {
                            player: Player::Defender,
                            alt: d.alt,
                            reward: d_reward,
                            p: d.p,
                            alt_prob: d.alt_prob,
                            log: d.log,
                        },
                    ])
                },
            )
            .collect::<Result<Vec<_>>>()?;
        let mut batch = Batch::default();
        for [a, d] in pairs {
            batch.records[0].push(a);
            batch.records[1].push(d);
        }
        Ok(batch)
    }

    /// Loss gradient of a batch for each player, merged in sample order.
    pub fn batch_gradients(&self, batch: &Batch, est: &BatchEstimate) -> Result<[GradientAccumulator; 2]> {
        let mut out = [GradientAccumulator::new(), GradientAccumulator::new()];
        for k in 0..2 {
            let mut cache = NodeCache::new(&self.policies[k]);
            for (rec, g) in batch.records[k].iter().zip(&est.coefficients[k]) {
                // d(prob)/d(theta) = prob * d(log prob)/d(theta)
                cache.accumulate(&mut out[k], &rec.log, g * rec.alt_prob)?;
            }
        }
        Ok(out)
    }

    /// One iteration: sample, estimate, update, decay. Returns the batch
    /// loss estimate.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.collect_batch()?;
        let est = batch.estimate();
        if !est.loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss estimate",
                iteration: self.iteration,
            });
        }
        let grads = self.batch_gradients(&batch, &est)?;
        for (k, g) in grads.iter().enumerate() {
            self.policies[k].apply_update(g, &mut self.optimizers[k], self.eta, self.iteration)?;
        }
        self.iteration += 1;
        self.samples += self.hyper.batch_size as u64;
        if self.iteration.is_multiple_of(self.hyper.decay_period()) {
            self.eta *= self.hyper.lr_decay;
            self.tau *= self.hyper.tau_decay;
        }
        Ok(est.loss)
    }

    /// Runs to the iteration or sample budget, emitting a metrics row at
    /// step 0, every evaluation interval, and at the end.
    pub fn run(&mut self, eval: Option<&EnumeratedGame>, sink: &mut dyn MetricsSink) -> Result<()> {
        let start = Instant::now();
        let total = self.hyper.effective_iterations();
        let every = self.hyper.eval_interval();
        let emit = |t: &Trainer, loss: Option<f64>, sink: &mut dyn MetricsSink| -> Result<()> {
            let gap = match eval {
                Some(e) => Some(e.policy_gap(&t.policies[0], &t.policies[1])?),
                None => None,
            };
            sink.record(&MetricsRow {
                step: t.iteration as u64,
                samples: t.samples,
                loss_estimate: loss,
                duality_gap: gap,
                eta: Some(t.eta),
                tau: Some(t.tau),
                epsilon: Some(t.epsilon()),
                wallclock_ms: t
                    .hyper
                    .record_wallclock
                    .then(|| start.elapsed().as_millis() as u64),
            })
        };
        if self.iteration == 0 {
            emit(self, None, sink)?;
        }
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        while self.iteration < total {
            loss_sum += self.step()?;
            loss_n += 1;
            if self.iteration.is_multiple_of(every) || self.iteration == total {
                emit(self, Some(loss_sum / loss_n as f64), sink)?;
                loss_sum = 0.0;
                loss_n = 0;
            }
        }
        Ok(())
    }
}
