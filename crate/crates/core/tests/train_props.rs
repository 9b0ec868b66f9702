use std::ops::ControlFlow;

use gdnn_core::diagnostics::fixture_graph;
use gdnn_core::distance::encode_features;
use gdnn_core::model::DropoutMasks;
use gdnn_core::nn::AdamState;
use gdnn_core::train::{
    aggregate, evaluate, mean_and_std, run_experiment, sample_negatives, select_best, train_epoch, train_seed,
    TrainData,
};
use gdnn_core::{hits_at_k, EdgeMode, EdgeSplit, FeatureMatrix, GdnnConfig, GdnnModel, Graph, TrainConfig, UpdateRule};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixture split: two ring edges held out, negatives are all remaining
/// non-edges of the full fixture graph.
fn fixture_split() -> (Graph, EdgeSplit) {
    let full = fixture_graph();
    let held = vec![(3, 4), (5, 6)];
    let train: Vec<(u32, u32)> = full.edges().iter().copied().filter(|e| !held.contains(e)).collect();
    let mut negatives = Vec::new();
    for u in 0..10u32 {
        for v in u + 1..10 {
            if !full.has_edge(u, v) {
                negatives.push((u, v));
            }
        }
    }
    let split = EdgeSplit {
        train_pos: train.clone(),
        valid_pos: held.clone(),
        valid_neg: negatives.clone(),
        test_pos: held,
        test_neg: negatives,
    };
    split.validate().unwrap();
    (Graph::build(&train, 10).unwrap(), split)
}

fn fixture_features(g: &Graph) -> FeatureMatrix<f64> {
    encode_features::<f64>(g, &(0..10).collect::<Vec<u32>>()).unwrap()
}

fn small_model_config(input_dim: usize) -> GdnnConfig {
    GdnnConfig {
        hidden_dim: 16,
        input_dim,
        edge_dim: 4,
        predictor_hidden: vec![16],
        ..GdnnConfig::default()
    }
}

fn short_train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        hits_k: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_and_matches_eval_loss() {
    let (g, split) = fixture_split();
    let features = fixture_features(&g);
    let data = TrainData {
        graph: &g,
        features: &features,
        split: &split,
    };
    let mut mc = small_model_config(10);
    mc.dropout = 0.0;
    mc.fanout = g.max_degree();
    let config = TrainConfig {
        lr: 0.0,
        ..short_train_config(1)
    };
    let mut model = GdnnModel::<f64>::new(mc, g.num_edges(), None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let before = model.params.checksum();
    let mut adam = AdamState::new(config.adam(), &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut replay = rng.clone();
    let loss = train_epoch(&data, &mut model, &mut adam, &config, &mut rng).unwrap();
    assert_eq!(model.params.checksum(), before);

    // Replay the epoch's random draws and score the same batch in eval mode.
    let mut order = split.train_pos.clone();
    order.shuffle(&mut replay);
    let _ = model.sample_neighborhoods(&g, &mut replay, None);
    let negatives = sample_negatives(&g, order.len(), &mut replay).unwrap();
    let mut pairs = order.clone();
    pairs.extend(negatives);
    let mut labels = vec![1.0; order.len()];
    labels.resize(pairs.len(), 0.0);
    let eval_loss = model
        .loss_with(&model.params, &features.data, &model.full_neighborhoods(&g, None), &DropoutMasks::none(), &pairs, &labels)
        .unwrap();
    assert_eq!(loss, eval_loss);
}

#[test]
fn training_is_reproducible() {
    let (g, split) = fixture_split();
    let features = fixture_features(&g);
    let data = TrainData {
        graph: &g,
        features: &features,
        split: &split,
    };
    let mc = small_model_config(10);
    let config = short_train_config(15);
    let (m1, r1) = train_seed(&data, &mc, None, &config, 3, false, |_| Ok(ControlFlow::Continue(()))).unwrap();
    let (m2, r2) = train_seed(&data, &mc, None, &config, 3, false, |_| Ok(ControlFlow::Continue(()))).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(m1.params.checksum(), m2.params.checksum());
    let (_, r3) = train_seed(&data, &mc, None, &config, 4, false, |_| Ok(ControlFlow::Continue(()))).unwrap();
    assert_ne!(r1[0].train_loss, r3[0].train_loss);
}

#[test]
fn evaluation_is_pure() {
    let (g, split) = fixture_split();
    let features = fixture_features(&g);
    let data = TrainData {
        graph: &g,
        features: &features,
        split: &split,
    };
    let config = short_train_config(5);
    let (model, _) = train_seed(&data, &small_model_config(10), None, &config, 0, false, |_| Ok(ControlFlow::Continue(()))).unwrap();
    let before = model.params.checksum();
    let a = evaluate(&data, &model, &config).unwrap();
    let b = evaluate(&data, &model, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(model.params.checksum(), before);
}

#[test]
fn all_zero_model_scores_no_hits() {
    let (g, split) = fixture_split();
    let features = fixture_features(&g);
    let data = TrainData {
        graph: &g,
        features: &features,
        split: &split,
    };
    let mut model = GdnnModel::<f64>::new(small_model_config(10), g.num_edges(), None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    for name in names {
        model.params.value_mut(&name).unwrap().fill(0.0);
    }
    let m = evaluate(&data, &model, &short_train_config(1)).unwrap();
    assert_eq!(m.valid_hits_at_k, 0.0);
    assert_eq!(m.test_hits_at_k, 0.0);
}

#[test]
fn fixture_overfits_for_every_seed() {
    // Epoch loss is one dropout-perturbed batch, so the check is that it
    // gets below the bar within the budget, not that it stays there.
    let (g, split) = fixture_split();
    let features = fixture_features(&g);
    let data = TrainData {
        graph: &g,
        features: &features,
        split: &split,
    };
    let mc = GdnnConfig {
        input_dim: 10,
        ..GdnnConfig::default()
    };
    let config = TrainConfig {
        eval_every: 500,
        ..short_train_config(500)
    };
    for seed in 0..10 {
        let (_, records) = train_seed(&data, &mc, None, &config, seed, false, |_| Ok(ControlFlow::Continue(()))).unwrap();
        let best = records.iter().map(|r| r.train_loss).fold(f64::INFINITY, f64::min);
        assert!(best < 0.2, "seed {seed}: lowest epoch loss {best}");
    }
}

#[test]
fn experiment_aggregate_matches_records() {
    let (g, split) = fixture_split();
    let features = fixture_features(&g);
    let data = TrainData {
        graph: &g,
        features: &features,
        split: &split,
    };
    let mc = GdnnConfig {
        edge_mode: EdgeMode::Learned,
        update_rule: UpdateRule::SampledMean,
        ..small_model_config(10)
    };
    let config = short_train_config(6);
    let seeds: Vec<u64> = (0..10).collect();
    let report = run_experiment(&seeds, |seed| Ok(train_seed(&data, &mc, None, &config, seed, false, |_| Ok(ControlFlow::Continue(())))?.1)).unwrap();
    let mut outcomes = Vec::new();
    for &seed in &seeds {
        let records: Vec<_> = report.records.iter().filter(|r| r.seed == seed).cloned().collect();
        assert_eq!(records.len(), 6);
        outcomes.push(select_best(seed, &records).unwrap());
    }
    assert_eq!(outcomes, report.seeds);
    assert_eq!(aggregate(&outcomes), report.aggregate);
    let tests: Vec<f64> = outcomes.iter().map(|o| o.test_hits_at_k).collect();
    let (mean, std) = mean_and_std(&tests);
    assert_eq!((mean, std), (report.aggregate.test_hits_mean, report.aggregate.test_hits_std));
}

/// Rank-based oracle: a positive is a hit when fewer than `k` negatives
/// score at least as high as it does.
fn brute_force_hits(pos: &[f64], neg: &[f64], k: usize) -> f64 {
    let hits = pos.iter().filter(|&&p| neg.iter().filter(|&&n| n >= p).count() < k).count();
    hits as f64 / pos.len() as f64
}

fn scores(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    // Small integer grid so ties are frequent.
    prop::collection::vec((-6i32..6).prop_map(f64::from), len)
}

proptest! {
    #[test]
    fn hits_matches_rank_oracle(pos in scores(1..30), neg in scores(1..60), k in 1usize..25) {
        prop_assume!(neg.len() >= k);
        prop_assert_eq!(hits_at_k(&pos, &neg, k).unwrap(), brute_force_hits(&pos, &neg, k));
    }

    #[test]
    fn hits_is_monotone_in_k(pos in scores(1..30), neg in scores(5..60)) {
        let mut last = 0.0;
        for k in 1..=neg.len() {
            let h = hits_at_k(&pos, &neg, k).unwrap();
            prop_assert!(h >= last);
            last = h;
        }
    }

    #[test]
    fn hits_ignores_monotone_maps(pos in scores(1..30), neg in scores(3..40), k in 1usize..4, a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let f = |x: &f64| (a * x + b).exp();
        let fp: Vec<f64> = pos.iter().map(f).collect();
        let fneg: Vec<f64> = neg.iter().map(f).collect();
        prop_assert_eq!(hits_at_k(&pos, &neg, k).unwrap(), hits_at_k(&fp, &fneg, k).unwrap());
    }

    #[test]
    fn low_negatives_do_not_matter(pos in scores(1..30), neg in scores(3..40), k in 1usize..4) {
        let before = hits_at_k(&pos, &neg, k).unwrap();
        let mut more = neg.clone();
        more.push(-100.0);
        prop_assert_eq!(hits_at_k(&pos, &more, k).unwrap(), before);
    }
}

#[test]
fn separating_scores_hit_everything() {
    let pos: Vec<f64> = (0..50).map(|i| 10.0 + i as f64).collect();
    let neg: Vec<f64> = (0..100).map(|i| -(i as f64)).collect();
    assert_eq!(hits_at_k(&pos, &neg, 20).unwrap(), 1.0);
}
