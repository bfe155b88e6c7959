use proptest::prelude::*;

use edgesplit_core::data::{generate, shard, stratified_split, ShardMode};
use edgesplit_core::fl::{aggregate, ClientUpdate, FedVariant, ServerOptimizer};
use edgesplit_core::metrics::classification_metrics;
use edgesplit_core::nn::{LayerSpec, ModelSpec, Params};
use edgesplit_core::train::latency_of;

fn small_spec() -> ModelSpec {
    ModelSpec::new(vec![LayerSpec::Dense { fan_in: 3, fan_out: 2 }], vec![3]).unwrap()
}

fn params_from(spec: &ModelSpec, values: &[f64]) -> Params {
    let mut p = Params::zeros(spec);
    let mut it = values.iter().cycle();
    for s in p.slices_mut() {
        for x in s {
            *x = *it.next().unwrap();
        }
    }
    p
}

fn update(spec: &ModelSpec, values: &[f64], samples: usize) -> ClientUpdate {
    ClientUpdate { client_id: 0, params: params_from(spec, values), samples, payload_bytes: 0, loss: None }
}

fn client_strategy() -> impl Strategy<Value = Vec<(Vec<f64>, usize)>> {
    prop::collection::vec((prop::collection::vec(-10.0f64..10.0, 8), 1usize..50), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_mean_matches_an_independent_computation(clients in client_strategy()) {
        let spec = small_spec();
        let updates: Vec<ClientUpdate> = clients.iter().map(|(v, d)| update(&spec, v, *d)).collect();
        let global = Params::zeros(&spec);
        let got = aggregate(&updates, &global, &mut ServerOptimizer::new(FedVariant::FedAvg, &global)).unwrap().flatten();
        let total: usize = clients.iter().map(|c| c.1).sum();
        for (k, g) in got.iter().enumerate() {
            let want: f64 = clients.iter().map(|(v, d)| v[k] * *d as f64 / total as f64).sum();
            prop_assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn averaging_commutes_with_a_constant_shift(clients in client_strategy(), shift in -5.0f64..5.0) {
        let spec = small_spec();
        let global = Params::zeros(&spec);
        let plain: Vec<ClientUpdate> = clients.iter().map(|(v, d)| update(&spec, v, *d)).collect();
        let shifted: Vec<ClientUpdate> = clients
            .iter()
            .map(|(v, d)| update(&spec, &v.iter().map(|x| x + shift).collect::<Vec<_>>(), *d))
            .collect();
        let mut server = ServerOptimizer::new(FedVariant::FedAvg, &global);
        let a = aggregate(&plain, &global, &mut server).unwrap().flatten();
        let b = aggregate(&shifted, &global, &mut server).unwrap().flatten();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x + shift - y).abs() < 1e-9);
        }
    }

    #[test]
    fn shards_partition_the_dataset(n in 20usize..120, clients in 1usize..5, seed in 0u64..1000, dirichlet in any::<bool>()) {
        let ds = generate(n, 4, 4, 0.4, seed).unwrap();
        let mode = if dirichlet { ShardMode::Dirichlet { beta: 0.5 } } else { ShardMode::Stratified };
        let shards = shard(&ds, clients, mode, seed).unwrap();
        prop_assert_eq!(shards.len(), clients);
        prop_assert_eq!(shards.iter().map(|s| s.len()).sum::<usize>(), n);
        prop_assert_eq!(shards.iter().map(|s| s.positives()).sum::<usize>(), ds.positives());
    }

    #[test]
    fn splits_partition_and_stratify(n in 30usize..300, seed in 0u64..1000) {
        let ds = generate(n, 4, 4, 0.3, seed).unwrap();
        let (tr, va, te) = stratified_split(&ds, [0.7, 0.15, 0.15], seed).unwrap();
        prop_assert_eq!(tr.len() + va.len() + te.len(), n);
        prop_assert_eq!(tr.positives() + va.positives() + te.positives(), ds.positives());
        let ratio = ds.class_ratio();
        for part in [&tr, &va, &te] {
            let expected = ratio * part.len() as f64;
            prop_assert!((part.positives() as f64 - expected).abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn classification_rates_lie_in_the_unit_interval(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200)) {
        let (p, y): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let m = classification_metrics(&p, &y).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn latency_halves_when_the_rate_doubles(bytes in 0u64..10_000_000, rate in 1.0f64..1e9) {
        let a = latency_of(bytes, rate).unwrap();
        let b = latency_of(bytes, 2.0 * rate).unwrap();
        prop_assert!((a - 2.0 * b).abs() <= 1e-12 * a.max(1.0));
    }
}
