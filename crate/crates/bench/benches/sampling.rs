use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tso_core::baselines::{double_oracle, DoConfig};
use tso_core::harness::preset;
use tso_core::metrics::NullSink;
use tso_core::tso::sample_and_prune;
use tso_core::{
    ActionTree, EnumeratedGame, Hyperparameters, NodeCache, Player, PolicyConfig, Trainer, TreePolicy,
};

fn s1() -> EnumeratedGame {
    let game = preset("S-1").unwrap().build_game().unwrap();
    EnumeratedGame::new(game).unwrap()
}

fn sampling(c: &mut Criterion) {
    let e = s1();
    let tree = Arc::new(ActionTree::new(e.game.clone(), Player::Attacker));
    for (name, config) in [("tabular", PolicyConfig::Tabular), ("network", PolicyConfig::default())] {
        let pol = TreePolicy::new(tree.clone(), &config, 1);
        c.bench_function(&format!("s1/attacker_sample_and_prune/{name}"), |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            b.iter_batched(
                || NodeCache::new(&pol),
                |mut cache| {
                    for _ in 0..100 {
                        sample_and_prune(&mut cache, &mut rng, 0.8, true).unwrap();
                    }
                },
                BatchSize::SmallInput,
            )
        });
    }
}

fn training(c: &mut Criterion) {
    let e = s1();
    let mut group = c.benchmark_group("s1/trainer_step");
    group.sample_size(20);
    for (name, config) in [("tabular", PolicyConfig::Tabular), ("network", PolicyConfig::default())] {
        let hyper = Hyperparameters {
            policy: config,
            ..Default::default()
        };
        let mut t = Trainer::new(e.game.clone(), hyper, 3).unwrap();
        group.bench_function(name, |b| b.iter(|| t.step().unwrap()));
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let e = s1();
    let mut group = c.benchmark_group("s1/evaluation");
    group.sample_size(20);
    let t = Trainer::new(e.game.clone(), Hyperparameters::default(), 4).unwrap();
    let [att, def] = t.policies();
    group.bench_function("policy_gap", |b| b.iter(|| e.policy_gap(att, def).unwrap()));
    group.bench_function("double_oracle", |b| {
        b.iter(|| double_oracle(&e, &DoConfig::default(), 5, &mut NullSink).unwrap())
    });
    group.finish();
}

criterion_group!(benches, sampling, training, evaluation);
criterion_main!(benches);
