//! REINFORCE gradients, baseline bookkeeping, evaluation and the t-test.

use std::f64::consts::PI;

use kemeny_core::ranking::{cost_to_f64, kemeny_distance};
use kemeny_core::{generate, solve_subset_dp, GeneratorKind, GeneratorSpec, Profile, Ranking};
use kemeny_nn::training::{policy_gradient, InstanceSource};
use kemeny_nn::ttest::{baseline_decision, student_t_cdf};
use kemeny_nn::{
    evaluate, paired_t_test_one_sided, reinforce_step, train, Error, KemenyTransformer, ModelConfig, RolloutMode,
    TrainConfig, TrainState, Trainer,
};

fn random_profile(n: usize, m: usize, seed: u64) -> Profile {
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

fn small_config(epochs: usize, lr: f64) -> TrainConfig {
    let mut c = TrainConfig::new(vec![InstanceSource::new(GeneratorKind::Random, 6, 3)]);
    c.epochs = epochs;
    c.steps_per_epoch = 4;
    c.batch_size = 8;
    c.validation_size = 24;
    c.learning_rate = lr;
    c.seed = 99;
    c.model = Some(tiny(3));
    c
}

#[test]
fn surrogate_gradient_matches_fd_over_frozen_rollouts() {
    let model = KemenyTransformer::<f64>::new(tiny(3), 17).unwrap();
    let batch = vec![random_profile(5, 3, 1), random_profile(5, 3, 2)];
    let orders = vec![Ranking::new(vec![2, 0, 1, 4, 3]).unwrap(), Ranking::new(vec![4, 3, 2, 1, 0]).unwrap()];
    let advantages = [1.4, -0.6];
    let (_, analytic) = policy_gradient(&model, &batch, &orders, &advantages).unwrap();

    let surrogate = |m: &KemenyTransformer<f64>| -> f64 {
        batch
            .iter()
            .zip(&orders)
            .zip(&advantages)
            .map(|((p, o), a)| a * m.log_prob(p, o.order()).unwrap())
            .sum::<f64>()
            / batch.len() as f64
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for p in 0..model.params().len() {
        for k in 0..model.params().get(p).len() {
            let mut plus = model.clone();
            plus.params_mut().get_mut(p).data_mut()[k] += h;
            let mut minus = model.clone();
            minus.params_mut().get_mut(p).data_mut()[k] -= h;
            let num = (surrogate(&plus) - surrogate(&minus)) / (2.0 * h);
            let a = analytic.tensor(p).data()[k];
            worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-4));
        }
    }
    assert!(worst <= 1e-4, "max relative error {worst:e}");
}

#[test]
fn zero_advantage_gives_zero_gradient() {
    let model = KemenyTransformer::<f64>::new(tiny(3), 4).unwrap();
    let batch = vec![random_profile(6, 3, 5), random_profile(4, 2, 6)];
    let orders = vec![Ranking::identity(6), Ranking::identity(4).reversed()];
    let (loss, grads) = policy_gradient(&model, &batch, &orders, &[0.0, 0.0]).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(grads.max_abs(), 0.0);
}

#[test]
fn single_item_instances_have_zero_advantage_and_gradient() {
    let model = KemenyTransformer::<f64>::new(tiny(3), 4).unwrap();
    let batch = vec![Profile::from_orders(vec![vec![0]; 3]).unwrap(); 3];
    let (grads, stats) = reinforce_step(&model, &model, &batch, &[1, 2, 3]).unwrap();
    assert!(stats.advantages.iter().all(|&d| d == 0.0));
    assert_eq!(grads.max_abs(), 0.0);
}

#[test]
fn advantages_match_independent_costs_exactly() {
    let model = KemenyTransformer::<f32>::new(tiny(4), 8).unwrap();
    let baseline = KemenyTransformer::<f32>::new(tiny(4), 9).unwrap();
    let batch: Vec<Profile> = (0..6).map(|i| random_profile(7, 4, 30 + i)).collect();
    let (_, stats) = reinforce_step(&model, &baseline, &batch, &[5, 6, 7, 8, 9, 10]).unwrap();
    for i in 0..batch.len() {
        let s = cost_to_f64(&kemeny_distance(&stats.sampled[i], &batch[i]).unwrap());
        let b = cost_to_f64(&kemeny_distance(&stats.baseline[i], &batch[i]).unwrap());
        assert_eq!(stats.sample_costs[i], s);
        assert_eq!(stats.baseline_costs[i], b);
        assert_eq!(stats.advantages[i], s - b);
        let greedy = baseline.rollout(&batch[i], RolloutMode::Greedy, 0).unwrap();
        assert_eq!(stats.baseline[i], greedy.ranking);
    }
}

#[test]
fn incompatible_baseline_rejected() {
    let model = KemenyTransformer::<f32>::new(tiny(3), 1).unwrap();
    let other = KemenyTransformer::<f32>::new(ModelConfig::desk(3), 1).unwrap();
    let err = reinforce_step(&model, &other, &[random_profile(4, 3, 0)], &[0]).unwrap_err();
    assert!(matches!(err, Error::ConfigMismatch(_)), "{err}");
}

#[test]
fn zero_learning_rate_keeps_validation_constant() {
    let (_, report) = train::<f32>(small_config(3, 0.0)).unwrap();
    assert_eq!(report.epochs.len(), 3);
    for e in &report.epochs {
        assert_eq!(e.mean_greedy_cost, report.initial_validation_cost);
        assert!(!e.replaced);
    }
}

#[test]
fn training_is_reproducible() {
    let (ca, ra) = train::<f32>(small_config(2, 1e-3)).unwrap();
    let (cb, rb) = train::<f32>(small_config(2, 1e-3)).unwrap();
    assert_eq!(ra.without_timing(), rb.without_timing());
    assert_eq!(ca.params, cb.params);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let config = small_config(4, 1e-3);
    let (full_ckpt, full) = train::<f32>(config.clone()).unwrap();

    let mut first = Trainer::<f32>::new(config).unwrap();
    first.run_epoch().unwrap();
    first.run_epoch().unwrap();
    let saved = first.state().to_json().unwrap();
    drop(first);
    let mut resumed = Trainer::<f32>::from_state(TrainState::from_json(&saved).unwrap()).unwrap();
    while !resumed.is_finished() {
        resumed.run_epoch().unwrap();
    }
    assert_eq!(resumed.report().without_timing(), full.without_timing());
    assert_eq!(resumed.checkpoint().params, full_ckpt.params);
}

#[test]
fn replacement_only_when_candidate_measured_better() {
    let mut config = small_config(6, 3e-3);
    config.alpha = 0.2;
    let (_, report) = train::<f32>(config).unwrap();
    for e in &report.epochs {
        if e.replaced {
            assert!(e.mean_greedy_cost < e.mean_baseline_cost, "{e:?}");
        }
    }
}

#[test]
fn zero_epochs_yield_initial_checkpoint() {
    let config = small_config(0, 1e-3);
    let trainer = Trainer::<f32>::new(config.clone()).unwrap();
    let (ckpt, report) = train::<f32>(config).unwrap();
    assert!(report.epochs.is_empty());
    assert_eq!(ckpt.params, *trainer.model().params());
    assert_eq!(ckpt.metadata.epochs_completed, 0);
}

#[test]
fn evaluate_against_itself_and_exact() {
    let model = KemenyTransformer::<f32>::new(tiny(4), 3).unwrap();
    let profiles: Vec<Profile> = (0..12).map(|i| random_profile(7, 4, 60 + i)).collect();
    let own = evaluate(&model, &profiles, RolloutMode::Greedy, 0, None).unwrap();
    let mean = own.costs.iter().sum::<f64>() / own.costs.len() as f64;
    assert!((own.mean_cost - mean).abs() <= 1e-9);

    let again = evaluate(&model, &profiles, RolloutMode::Greedy, 0, Some(&own.costs)).unwrap();
    assert_eq!(again.mean_gap, Some(0.0));

    let exact: Vec<f64> = profiles.iter().map(|p| cost_to_f64(&solve_subset_dp(p).unwrap().cost)).collect();
    let vs_exact = evaluate(&model, &profiles, RolloutMode::Greedy, 0, Some(&exact)).unwrap();
    assert!(vs_exact.mean_gap.unwrap() >= 0.0);
    assert!(own.costs.iter().zip(&exact).all(|(c, e)| c >= e));

    let too_wide = vec![random_profile(5, 6, 0)];
    assert!(matches!(
        evaluate(&model, &too_wide, RolloutMode::Greedy, 0, None),
        Err(Error::ConfigMismatch(_))
    ));
}

/// Student t CDF in closed form for small integer degrees of freedom.
fn t_cdf_closed(t: f64, df: usize) -> f64 {
    match df {
        1 => 0.5 + t.atan() / PI,
        2 => 0.5 + t / (2.0 * (2.0 + t * t).sqrt()),
        3 => {
            let u = t / 3f64.sqrt();
            0.5 + (u / (1.0 + t * t / 3.0) + u.atan()) / PI
        }
        4 => {
            let q = 1.0 + t * t / 4.0;
            0.5 + 0.375 * (t / q.sqrt()) * (1.0 - t * t / (12.0 * q))
        }
        5 => {
            let q = 1.0 + t * t / 5.0;
            let u = t / 5f64.sqrt();
            0.5 + (u / q * (1.0 + 2.0 / (3.0 * q)) + u.atan()) / PI
        }
        _ => unreachable!("no closed form in this table"),
    }
}

fn oracle_t(d: &[f64]) -> f64 {
    let k = d.len() as f64;
    let mean = d.iter().sum::<f64>() / k;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    mean / (sd / k.sqrt())
}

#[test]
fn worked_example_matches_closed_form() {
    let a = [2.0, 3.0, 0.0, 5.0];
    let b = [1.0, 2.0, 1.0, 4.0];
    let r = paired_t_test_one_sided(&a, &b).unwrap();
    assert!((r.t - 1.0).abs() < 1e-12);
    assert_eq!(r.df, 3.0);
    assert!((r.p - t_cdf_closed(1.0, 3)).abs() <= 1e-9);
    assert!((r.p - 0.8045).abs() < 1e-3);
}

#[test]
fn t_test_matches_closed_forms_on_handcrafted_vectors() {
    let diffs: Vec<Vec<f64>> = vec![
        vec![1.0, 2.0],
        vec![-1.0, -3.0],
        vec![0.5, -0.25],
        vec![4.0, 1.0],
        vec![1.0, 1.0, -1.0],
        vec![-2.0, -1.0, 0.5],
        vec![0.1, 0.2, 0.4],
        vec![-5.0, 3.0, -4.0],
        vec![1.0, 1.0, -1.0, 1.0],
        vec![-1.0, -2.0, -1.5, 0.5],
        vec![3.0, -1.0, 2.0, 0.0],
        vec![-0.3, -0.2, -0.4, -0.1],
        vec![10.0, -10.0, 1.0, -2.0],
        vec![1.0, 2.0, 3.0, 4.0, -1.0],
        vec![-1.0, -1.0, 0.0, -2.0, 0.5],
        vec![0.25, -0.5, 0.75, -1.0, 0.1],
        vec![-7.0, -6.0, -8.0, -5.0, -9.0],
        vec![2.0, 0.0, -2.0, 1.0, -1.5],
        vec![1.0, -1.0, 1.0, -1.0, 1.0, 2.0],
        vec![-0.5, -1.5, -1.0, 0.0, -2.0, -0.75],
        vec![3.0, 2.0, 4.0, 1.0, 5.0, 0.5],
        vec![-1.0, 1.0, -1.0, 1.0, -1.0, -0.5],
    ];
    assert!(diffs.len() >= 20);
    for d in &diffs {
        let b: Vec<f64> = (0..d.len()).map(|i| 10.0 + i as f64).collect();
        let a: Vec<f64> = b.iter().zip(d).map(|(b, d)| b + d).collect();
        let r = paired_t_test_one_sided(&a, &b).unwrap();
        let t = oracle_t(d);
        assert!((r.t - t).abs() <= 1e-9 * t.abs().max(1.0), "{d:?}");
        let p = t_cdf_closed(t, d.len() - 1);
        assert!((r.p - p).abs() <= 1e-9, "{d:?}: {} vs {p}", r.p);
        assert!((student_t_cdf(t, (d.len() - 1) as f64) - p).abs() <= 1e-9);
    }
}

#[test]
fn degenerate_t_tests() {
    let a = [1.0, 2.0, 3.0];
    assert!(matches!(paired_t_test_one_sided(&a, &a), Err(Error::DegenerateTest(_))));
    let better = [0.0, 1.0, 2.0, 3.0];
    let base = [1.0, 2.0, 3.0, 4.0];
    assert!(matches!(paired_t_test_one_sided(&better, &base), Err(Error::DegenerateTest(_))));
    let d = baseline_decision(&better, &base, 0.05);
    assert!(d.replace && d.test.is_none());
    let d = baseline_decision(&base, &better, 0.05);
    assert!(!d.replace);
    let d = baseline_decision(&a, &a, 0.05);
    assert!(!d.replace);
    assert!(paired_t_test_one_sided(&[1.0], &[2.0]).is_err());
}
