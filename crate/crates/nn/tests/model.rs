//! Transformer contracts: gradients, equivariance, decoder masking, rollout
//! statistics, positional encoding, checkpoints and inference cost.

use std::collections::HashMap;

use kemeny_core::ranking::{cost_to_f64, kemeny_distance, validate_ranking};
use kemeny_core::rng::{derive_seed, rng_from_seed};
use kemeny_core::{generate, GeneratorKind, GeneratorSpec, Profile, Ranking};
use kemeny_nn::checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
use kemeny_nn::transformer::model_input;
use kemeny_nn::{
    positional_encoding, Checkpoint, CheckpointMetadata, Error, KemenyTransformer, ModelConfig, Policy, RolloutMode,
    Scalar, Tape, Tensor,
};
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn random_profile(n: usize, m: usize, seed: u64) -> Profile {
    if n == 1 {
        return Profile::from_orders(vec![vec![0]; m]).unwrap();
    }
    generate(&GeneratorSpec::new(GeneratorKind::Random, n, m, seed)).unwrap()
}

fn tiny(max_m: usize) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        d_ff: 16,
        encoder_layers: 1,
        decoder_layers: 1,
        max_m,
        pe_base: 10000.0,
    }
}

/// All parameters zero except the scoring head, whose projections are the identity.
fn uniform_logit_model(config: ModelConfig) -> KemenyTransformer<f64> {
    let mut model = KemenyTransformer::<f64>::new(config.clone(), 0).unwrap();
    let store = model.params_mut();
    for i in 0..store.len() {
        store.get_mut(i).data_mut().fill(0.0);
    }
    for name in ["head.wq", "head.wk"] {
        let idx = store.index(name).unwrap();
        let t = store.get_mut(idx);
        for d in 0..config.d_model {
            t.set(d, d, 1.0);
        }
    }
    model
}

#[test]
fn full_model_log_prob_gradient_matches_fd() {
    let profile = random_profile(5, 3, 11);
    let model = KemenyTransformer::<f64>::new(tiny(3), 5).unwrap();
    let order = [3, 0, 4, 1, 2];
    let tape = Tape::new();
    let (_, total) = model.rollout_on_tape(&tape, &profile, Policy::Forced(&order)).unwrap();
    let analytic = tape.backward(total).unwrap().params(model.params());

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for p in 0..model.params().len() {
        for k in 0..model.params().get(p).len() {
            let mut plus = model.clone();
            plus.params_mut().get_mut(p).data_mut()[k] += h;
            let mut minus = model.clone();
            minus.params_mut().get_mut(p).data_mut()[k] -= h;
            let num = (plus.log_prob(&profile, &order).unwrap() - minus.log_prob(&profile, &order).unwrap()) / (2.0 * h);
            let a = analytic.tensor(p).data()[k];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-4);
            worst = worst.max(rel);
            coords += 1;
        }
    }
    assert_eq!(coords, model.params().num_scalars());
    assert!(worst <= 1e-4, "max relative error {worst:e}");
}

#[test]
fn encoder_is_row_permutation_equivariant() {
    let config = ModelConfig::desk(5);
    let model = KemenyTransformer::<f32>::new(config, 3).unwrap();
    let profile = random_profile(10, 5, 4);
    let input = model_input::<f32>(&profile, 5).unwrap();
    let mut perm: Vec<usize> = (0..10).collect();
    perm.shuffle(&mut rng_from_seed(9));
    let permuted = Tensor::from_fn(10, 5, |r, c| input.get(perm[r], c));

    let tape = Tape::new();
    let out = model.encode(&tape, &input).unwrap().value();
    let out_p = model.encode(&tape, &permuted).unwrap().value();
    assert_eq!(out.shape(), [10, 64]);
    let mut worst: f32 = 0.0;
    for r in 0..10 {
        for c in 0..64 {
            worst = worst.max((out_p.get(r, c) - out.get(perm[r], c)).abs());
        }
    }
    assert!(worst <= 1e-5, "max deviation {worst:e}");
}

#[test]
fn identical_rows_encode_identically() {
    let model = KemenyTransformer::<f64>::new(ModelConfig::desk(4), 8).unwrap();
    let mut input = model_input::<f64>(&random_profile(6, 4, 2), 4).unwrap();
    let row: Vec<f64> = input.row(1).to_vec();
    input.row_mut(4).copy_from_slice(&row);
    let tape = Tape::new();
    let out = model.encode(&tape, &input).unwrap().value();
    for c in 0..out.cols() {
        assert!((out.get(1, c) - out.get(4, c)).abs() <= 1e-6);
    }
}

#[test]
fn encoder_output_shape_for_any_n() {
    let model = KemenyTransformer::<f32>::new(tiny(4), 1).unwrap();
    for n in [1, 2, 7, 30] {
        let tape = Tape::new();
        let out = model.encode_profile(&tape, &random_profile(n, 3, n as u64)).unwrap();
        assert_eq!(out.shape(), [n, 8]);
    }
}

/// Randomized parameters, scaled to produce both flat and peaked step distributions.
fn fuzz_model<S: Scalar>(seed: u64) -> KemenyTransformer<S> {
    let mut rng = rng_from_seed(derive_seed(seed, &[77]));
    let config = ModelConfig {
        d_model: [8, 16][rng.random_range(0..2)],
        n_heads: [1, 2, 4][rng.random_range(0..3)],
        d_ff: 16,
        encoder_layers: rng.random_range(1..3),
        decoder_layers: rng.random_range(1..3),
        max_m: 6,
        pe_base: 10000.0,
    };
    let mut model = KemenyTransformer::<S>::new(config, seed).unwrap();
    let gain = S::lit([0.5, 1.0, 3.0, 8.0][rng.random_range(0..4)]);
    let store = model.params_mut();
    for i in 0..store.len() {
        for v in store.get_mut(i).data_mut() {
            *v = *v * gain;
        }
    }
    model
}

/// Drives the decoder by hand and checks the mask and normalization contract
/// at every step; returns the number of rollouts checked.
fn fuzz_rollouts<S: Scalar>(model: &KemenyTransformer<S>, rollouts: usize, seed: u64) -> usize {
    let mut rng = rng_from_seed(seed);
    for r in 0..rollouts {
        let n = rng.random_range(1..11);
        let m = rng.random_range(1..7);
        let profile = random_profile(n, m, derive_seed(seed, &[r as u64]));
        let tape = Tape::new();
        let encoded = model.encode_profile(&tape, &profile).unwrap();
        let mut state = model.begin_decode(&tape, encoded).unwrap();
        let mut mask = vec![false; n];
        let mut order = Vec::new();
        for t in 0..n {
            assert_eq!(mask.iter().filter(|&&b| b).count(), t);
            let out = model.decode_step(&tape, &mut state, order.last().copied(), &mask).unwrap();
            let lp = out.log_probs.value();
            let probs: Vec<f64> = lp.row(0).iter().map(|v| v.to_f64_lossy().exp()).collect();
            let mut total = 0.0;
            for i in 0..n {
                if mask[i] {
                    assert!(probs[i] <= 1e-12, "masked probability {}", probs[i]);
                } else {
                    total += probs[i];
                }
            }
            assert!((total - 1.0).abs() <= 1e-6, "step mass {total}");
            let open: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
            if open.len() == 1 {
                assert!((probs[open[0]] - 1.0).abs() <= 1e-6);
            }
            let mut u = rng.random::<f64>() * total;
            let mut pick = *open.last().unwrap();
            for &i in &open {
                if u < probs[i] {
                    pick = i;
                    break;
                }
                u -= probs[i];
            }
            mask[pick] = true;
            order.push(pick);
        }
        assert!(validate_ranking(&order, n));
        assert_eq!(state.cache_len(), n);
    }
    rollouts
}

#[test]
fn decoder_fuzz_ten_thousand_rollouts() {
    let mut done = 0;
    for k in 0..20u64 {
        done += if k % 2 == 0 {
            fuzz_rollouts(&fuzz_model::<f32>(k), 500, k)
        } else {
            fuzz_rollouts(&fuzz_model::<f64>(k), 500, k)
        };
    }
    assert_eq!(done, 10_000);
}

#[test]
fn rollouts_are_permutations_in_every_mode() {
    for k in 0..10u64 {
        let model = fuzz_model::<f32>(100 + k);
        let profile = random_profile(1 + k as usize, 3, k);
        for mode in [RolloutMode::Greedy, RolloutMode::Sample] {
            let traj = model.rollout(&profile, mode, k).unwrap();
            assert!(validate_ranking(traj.ranking.order(), profile.n()));
            assert_eq!(traj.step_log_probs.len(), profile.n());
            assert!(traj.total_log_prob <= 0.0);
        }
    }
}

#[test]
fn uniform_logits_give_uniform_permutations() {
    let model = uniform_logit_model(tiny(3));
    let profile = random_profile(4, 3, 21);
    let trials = 10_000;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let tape_free_seed = 5;
    for i in 0..trials {
        let traj = model.rollout(&profile, RolloutMode::Sample, derive_seed(tape_free_seed, &[i])).unwrap();
        *counts.entry(traj.ranking.order().to_vec()).or_default() += 1;
    }
    assert_eq!(counts.len(), 24);
    let expected = trials as f64 / 24.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(23.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi-square {chi2}, p {p}");
}

#[test]
fn uniform_logit_rollouts_match_random_permutation_cost() {
    let model = uniform_logit_model(tiny(5));
    let trials = 10_000u64;
    let mut rng = rng_from_seed(33);
    let (mut model_total, mut uniform_total) = (0.0, 0.0);
    for i in 0..trials {
        let profile = random_profile(8, 5, derive_seed(31, &[i]));
        let traj = model.rollout(&profile, RolloutMode::Sample, derive_seed(32, &[i])).unwrap();
        model_total += cost_to_f64(&kemeny_distance(&traj.ranking, &profile).unwrap());
        let mut order: Vec<usize> = (0..8).collect();
        order.shuffle(&mut rng);
        uniform_total += cost_to_f64(&kemeny_distance(&Ranking::new(order).unwrap(), &profile).unwrap());
    }
    let rel = (model_total - uniform_total).abs() / uniform_total;
    assert!(rel <= 0.02, "relative difference {rel}");
}

#[test]
fn teacher_forcing_reproduces_sampled_log_prob() {
    for k in 0..8u64 {
        let model = KemenyTransformer::<f32>::new(ModelConfig::desk(5), k).unwrap();
        let profile = random_profile(9, 5, 40 + k);
        let traj = model.rollout(&profile, RolloutMode::Sample, k + 1).unwrap();
        let summed: f64 = traj.step_log_probs.iter().sum();
        assert!((summed - traj.total_log_prob).abs() <= 1e-5);
        let forced = model.log_prob(&profile, traj.ranking.order()).unwrap();
        assert!((forced - traj.total_log_prob).abs() <= 1e-5, "{forced} vs {}", traj.total_log_prob);
    }
}

#[test]
fn greedy_ignores_seed_and_sampling_is_seeded() {
    let model = KemenyTransformer::<f32>::new(ModelConfig::desk(5), 2).unwrap();
    let profile = random_profile(10, 5, 3);
    let g = model.rollout(&profile, RolloutMode::Greedy, 0).unwrap();
    for seed in 1..6 {
        assert_eq!(model.rollout(&profile, RolloutMode::Greedy, seed).unwrap(), g);
    }
    let a = model.rollout(&profile, RolloutMode::Sample, 9).unwrap();
    assert_eq!(model.rollout(&profile, RolloutMode::Sample, 9).unwrap(), a);
}

#[test]
fn greedy_ties_break_to_lowest_index() {
    let model = uniform_logit_model(tiny(2));
    let traj = model.rollout(&random_profile(6, 2, 1), RolloutMode::Greedy, 0).unwrap();
    assert_eq!(traj.ranking.order(), [0, 1, 2, 3, 4, 5]);
}

#[test]
fn positional_encoding_is_bounded_and_collision_free() {
    let d = 64;
    for t in [1usize, 2, 17, 999, 123_456, 1_000_000] {
        let pe = positional_encoding(t, d, 10000.0);
        assert!((pe[0] - (t as f64).sin()).abs() < 1e-12);
        assert!(pe.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
    }
    let table: Vec<Vec<f64>> = (1..=1000).map(|t| positional_encoding(t, d, 10000.0)).collect();
    let mut closest = f64::INFINITY;
    for i in 0..table.len() {
        for j in i + 1..table.len() {
            let linf = table[i].iter().zip(&table[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            closest = closest.min(linf);
        }
    }
    assert!(closest > 1e-8, "closest pair at L-inf {closest:e}");
}

#[test]
fn checkpoint_round_trip_and_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let model = KemenyTransformer::<f32>::new(ModelConfig::paper(6), 12).unwrap();
    let meta = CheckpointMetadata {
        epochs_completed: 3,
        seed: 12,
        baseline_replacements: 1,
    };
    let path = dir.path().join("model.json");
    save_checkpoint(&Checkpoint::from_model(&model, meta.clone()), &path).unwrap();
    let loaded = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(loaded.metadata, meta);
    let back = loaded.into_model().unwrap();
    for ((na, a), (nb, b)) in model.params().iter().zip(back.params().iter()) {
        assert_eq!(na, nb);
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    let err = load_checkpoint_for::<f32>(&path, &ModelConfig::desk(6)).unwrap_err();
    assert!(matches!(err, Error::ConfigMismatch(_)), "{err}");

    let text = std::fs::read_to_string(&path).unwrap();
    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_checkpoint::<f32>(&cut), Err(Error::CorruptCheckpoint(_))));

    let bumped = dir.path().join("v2.json");
    std::fs::write(&bumped, text.replacen("\"version\":1", "\"version\":2", 1)).unwrap();
    assert!(matches!(load_checkpoint::<f32>(&bumped), Err(Error::UnsupportedVersion { found: 2, .. })));
}

#[test]
fn tokenize_rejects_too_many_voters() {
    let model = KemenyTransformer::<f32>::new(tiny(3), 0).unwrap();
    let err = model.rollout(&random_profile(5, 4, 0), RolloutMode::Greedy, 0).unwrap_err();
    assert!(matches!(err, Error::Capacity { m: 4, max_m: 3 }));
}

/// Least-squares fit of `c1 n^2 + c2 n`; returns the coefficient of determination.
fn quadratic_r2(ns: &[f64], ys: &[f64]) -> f64 {
    let (mut s4, mut s3, mut s2, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&n, &y) in ns.iter().zip(ys) {
        s4 += n.powi(4);
        s3 += n.powi(3);
        s2 += n * n;
        b1 += y * n * n;
        b2 += y * n;
    }
    let det = s4 * s2 - s3 * s3;
    let c1 = (b1 * s2 - s3 * b2) / det;
    let c2 = (s4 * b2 - s3 * b1) / det;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = ns.iter().zip(ys).map(|(&n, &y)| (y - c1 * n * n - c2 * n).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn rollout_macs_grow_quadratically() {
    let model = KemenyTransformer::<f32>::new(ModelConfig::desk(5), 1).unwrap();
    let ns = [20.0, 50.0, 100.0, 150.0];
    let macs: Vec<f64> = ns
        .iter()
        .map(|&n| model.rollout_macs(&random_profile(n as usize, 5, n as u64)).unwrap() as f64)
        .collect();
    let r2 = quadratic_r2(&ns, &macs);
    assert!(r2 >= 0.99, "R^2 = {r2}, macs {macs:?}");
}
