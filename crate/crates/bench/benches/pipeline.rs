use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tunekg::check::{fixture_samples, fixture_trace};
use tunekg::embed::{
    assemble_matrix, build_column_universe, pad_to_shape, ChannelRegistry, DEFAULT_C_MAX,
};
use tunekg::model::{train, Architecture, RewardModel, TrainConfig};
use tunekg::policy::{candidate_set, score, select_arm};
use tunekg::sql::{extract_template_features, parse_sql_subset};

fn features(c: &mut Criterion) {
    let trace = fixture_trace();
    let entry = &trace.entries[0];
    let registry = ChannelRegistry::v1();
    c.bench_function("feature_matrix", |b| {
        b.iter(|| {
            let pq = parse_sql_subset(black_box(&entry.sql_text)).unwrap();
            let universe = build_column_universe(&pq);
            let tf = extract_template_features(&pq, Some(&entry.plans[0]));
            let m = assemble_matrix(
                &tf,
                &pq,
                Some(&entry.plans[0]),
                &universe,
                &registry,
                &trace.catalog,
                &entry.template_id,
            )
            .unwrap();
            pad_to_shape(&m, DEFAULT_C_MAX).unwrap()
        })
    });
}

fn model(c: &mut Criterion) {
    let trace = fixture_trace();
    let samples = fixture_samples(&trace);
    let arch = Architecture::new(
        ChannelRegistry::v1().len(),
        DEFAULT_C_MAX,
        trace.arm_count(),
    );
    let init = RewardModel::init(arch, 1).unwrap();
    let x = &trace.entries[0].features;
    c.bench_function("predict_all_arms", |b| {
        b.iter(|| {
            (0..trace.arm_count())
                .map(|a| init.predict(black_box(x), a).unwrap())
                .sum::<f64>()
        })
    });
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        learning_rate: 0.05,
        seed: 1,
    };
    c.bench_function("train_epoch_300_samples", |b| {
        b.iter(|| train(&init, black_box(&samples), &cfg).unwrap())
    });
}

fn policy(c: &mut Criterion) {
    let y = [12.0, 8.5, 30.0, 9.1, 14.2];
    let n = [10, 3, 0, 7, 1];
    let banned = BTreeSet::from([2]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    c.bench_function("policy_select", |b| {
        b.iter(|| {
            let s = score(black_box(&y), &n, 0.1);
            let cand = candidate_set(&s, &n, &banned, 3, 0);
            select_arm(&cand, &s, 0.1, &mut rng).unwrap().chosen
        })
    });
}

criterion_group!(benches, features, model, policy);
criterion_main!(benches);
