//! Policy-gradient training against a frozen greedy baseline.
//!
//! Every random draw is keyed on `(seed, epoch, step, instance)` through
//! [`derive_seed`], so a run resumed from a saved [`TrainState`] replays the
//! same instances and samples as an uninterrupted one.

use std::time::{Duration, Instant};

use kemeny_core::generators::generate;
use kemeny_core::ranking::{cost_to_f64, kemeny_distance};
use kemeny_core::rng::{derive_seed, rng_from_seed};
use kemeny_core::{GeneratorKind, GeneratorSpec, Profile, Ranking};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::checkpoint::{Checkpoint, CheckpointMetadata};
use crate::error::{Error, Result};
use crate::optim::{adam_step, AdamState, DEFAULT_LEARNING_RATE};
use crate::params::{ParamGrads, ParamStore};
use crate::scalar::Scalar;
use crate::transformer::{KemenyTransformer, ModelConfig, Policy, RolloutMode};
use crate::ttest::baseline_decision;

const TAG_INIT: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_VALIDATION: u64 = 3;
const TAG_PICK: u64 = 0;
const TAG_PROFILE: u64 = 1;
const TAG_SAMPLE: u64 = 2;

/// One component of the training instance mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSource {
    pub kind: GeneratorKind,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_count: Option<usize>,
    #[serde(default = "one")]
    pub scale_m: f64,
    #[serde(default = "one_usize")]
    pub swap_passes: usize,
    /// Relative sampling weight within the mix.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl InstanceSource {
    pub fn new(kind: GeneratorKind, n: usize, m: usize) -> Self {
        Self {
            kind,
            n,
            m,
            repeat_count: None,
            scale_m: 1.0,
            swap_passes: 1,
            weight: 1.0,
        }
    }

    pub fn spec(&self, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            kind: self.kind,
            n: self.n,
            m: self.m,
            seed,
            repeat_count: self.repeat_count,
            scale_m: self.scale_m,
            swap_passes: self.swap_passes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub instances: Vec<InstanceSource>,
    /// Defaults to the desk configuration sized for the largest `m` in the mix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}

fn default_validation_size() -> usize {
    256
}

fn default_seed() -> u64 {
    kemeny_core::rng::DEFAULT_SEED
}

impl TrainConfig {
    pub fn new(instances: Vec<InstanceSource>) -> Self {
        Self {
            epochs: 1,
            steps_per_epoch: 1,
            batch_size: 1,
            alpha: default_alpha(),
            learning_rate: default_lr(),
            validation_size: default_validation_size(),
            seed: default_seed(),
            instances,
            model: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model.clone().unwrap_or_else(|| {
            ModelConfig::desk(self.instances.iter().map(|s| s.m).max().unwrap_or(1))
        })
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Err(Error::InvalidConfig(format!("{name}: {msg}")));
        for (name, v) in [
            ("steps_per_epoch", self.steps_per_epoch),
            ("batch_size", self.batch_size),
            ("validation_size", self.validation_size),
        ] {
            if v == 0 {
                return field(name, "must be positive".into());
            }
        }
        if self.validation_size < 2 {
            return field("validation_size", "the paired test needs at least 2 profiles".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return field("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return field("learning_rate", format!("must be a finite non-negative number, got {}", self.learning_rate));
        }
        if self.instances.is_empty() {
            return field("instances", "at least one instance source is required".into());
        }
        let model = self.model_config();
        model.validate()?;
        for (i, src) in self.instances.iter().enumerate() {
            src.spec(0)
                .validate()
                .map_err(|e| Error::InvalidConfig(format!("instances[{i}]: {e}")))?;
            if !(src.weight > 0.0 && src.weight.is_finite()) {
                return field(&format!("instances[{i}].weight"), "must be positive".into());
            }
            if src.m > model.max_m {
                return field(
                    &format!("instances[{i}].m"),
                    format!("{} exceeds model max_m {}", src.m, model.max_m),
                );
            }
        }
        Ok(())
    }

    /// Draws one profile from the mix using only `seed`.
    pub fn sample_instance(&self, seed: u64) -> Result<Profile> {
        let total: f64 = self.instances.iter().map(|s| s.weight).sum();
        let mut u = rng_from_seed(derive_seed(seed, &[TAG_PICK])).random::<f64>() * total;
        let mut source = self.instances.last().expect("validated non-empty");
        for s in &self.instances {
            if u < s.weight {
                source = s;
                break;
            }
            u -= s.weight;
        }
        Ok(generate(&source.spec(derive_seed(seed, &[TAG_PROFILE])))?)
    }

    /// The fixed validation profiles of this run.
    pub fn validation_set(&self) -> Result<Vec<Profile>> {
        (0..self.validation_size)
            .map(|j| self.sample_instance(derive_seed(self.seed, &[TAG_VALIDATION, j as u64])))
            .collect()
    }

    fn step_seed(&self, epoch: usize, step: usize, instance: usize) -> u64 {
        derive_seed(self.seed, &[TAG_TRAIN, epoch as u64, step as u64, instance as u64])
    }
}

/// Per-instance outcome of one policy-gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub sampled: Vec<Ranking>,
    pub baseline: Vec<Ranking>,
    pub sample_costs: Vec<f64>,
    pub baseline_costs: Vec<f64>,
    /// `sample_cost - baseline_cost`.
    pub advantages: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub loss: f64,
}

fn kemeny(ranking: &Ranking, profile: &Profile) -> Result<f64> {
    Ok(cost_to_f64(&kemeny_distance(ranking, profile)?))
}

/// Gradient of `(1/B) sum_i advantages[i] * log p(orders[i])` for fixed orders.
/// Returns the surrogate value and its gradient.
pub fn policy_gradient<S: Scalar>(
    model: &KemenyTransformer<S>,
    batch: &[Profile],
    orders: &[Ranking],
    advantages: &[f64],
) -> Result<(f64, ParamGrads<S>)> {
    if batch.is_empty() || batch.len() != orders.len() || batch.len() != advantages.len() {
        return Err(Error::InvalidState(format!(
            "batch of {} profiles, {} orders, {} advantages",
            batch.len(),
            orders.len(),
            advantages.len()
        )));
    }
    let b = batch.len() as f64;
    let parts: Vec<(f64, ParamGrads<S>)> = batch
        .par_iter()
        .zip(orders.par_iter().zip(advantages.par_iter()))
        .map(|(profile, (order, &adv))| {
            let tape = Tape::new();
            let (_, total) = model.rollout_on_tape(&tape, profile, Policy::Forced(order.order()))?;
            let loss = total.scale(S::lit(adv / b));
            let grads = tape.backward(loss)?.params(model.params());
            Ok((loss.value().item().to_f64_lossy(), grads))
        })
        .collect::<Result<_>>()?;
    Ok(reduce(model.params(), parts))
}

/// Sums per-instance results in batch order.
fn reduce<S: Scalar>(store: &ParamStore<S>, parts: Vec<(f64, ParamGrads<S>)>) -> (f64, ParamGrads<S>) {
    let mut total = ParamGrads::zeros_like(store);
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        total.add_assign(&g);
    }
    (loss, total)
}

/// Samples one rollout per instance under `model`, compares it with the
/// greedy rollout of `baseline`, and returns the surrogate gradient.
/// `seeds[i]` drives the sampling of instance `i`.
pub fn reinforce_step<S: Scalar>(
    model: &KemenyTransformer<S>,
    baseline: &KemenyTransformer<S>,
    batch: &[Profile],
    seeds: &[u64],
) -> Result<(ParamGrads<S>, BatchStats)> {
    if batch.is_empty() || batch.len() != seeds.len() {
        return Err(Error::InvalidState(format!(
            "batch of {} profiles with {} seeds",
            batch.len(),
            seeds.len()
        )));
    }
    model.params().check_compatible(baseline.params())?;
    let b = batch.len() as f64;
    type Part<S> = (Ranking, Ranking, f64, f64, f64, f64, ParamGrads<S>);
    let parts: Vec<Part<S>> = batch
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(profile, &seed)| {
            let greedy = baseline.rollout(profile, RolloutMode::Greedy, 0)?.ranking;
            let base_cost = kemeny(&greedy, profile)?;
            let tape = Tape::new();
            let mut rng = rng_from_seed(seed);
            let (traj, total) = model.rollout_on_tape(&tape, profile, Policy::Sample(&mut rng))?;
            let cost = kemeny(&traj.ranking, profile)?;
            let adv = cost - base_cost;
            let loss = total.scale(S::lit(adv / b));
            let grads = tape.backward(loss)?.params(model.params());
            let loss_value = loss.value().item().to_f64_lossy();
            Ok((traj.ranking, greedy, cost, base_cost, traj.total_log_prob, loss_value, grads))
        })
        .collect::<Result<_>>()?;
    let mut stats = BatchStats {
        sampled: Vec::with_capacity(parts.len()),
        baseline: Vec::with_capacity(parts.len()),
        sample_costs: Vec::with_capacity(parts.len()),
        baseline_costs: Vec::with_capacity(parts.len()),
        advantages: Vec::with_capacity(parts.len()),
        log_probs: Vec::with_capacity(parts.len()),
        loss: 0.0,
    };
    let mut grads = Vec::with_capacity(parts.len());
    for (sampled, greedy, cost, base_cost, lp, loss, g) in parts {
        stats.sampled.push(sampled);
        stats.baseline.push(greedy);
        stats.sample_costs.push(cost);
        stats.baseline_costs.push(base_cost);
        stats.advantages.push(cost - base_cost);
        stats.log_probs.push(lp);
        grads.push((loss, g));
    }
    let (loss, total) = reduce(model.params(), grads);
    stats.loss = loss;
    Ok((total, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rankings: Vec<Ranking>,
    pub costs: Vec<f64>,
    pub mean_cost: f64,
    /// Mean of `cost - oracle` when oracle costs were supplied.
    pub mean_gap: Option<f64>,
    /// Mean of `(cost - oracle) / oracle` over instances with a positive oracle.
    pub mean_relative_gap: Option<f64>,
    pub total_time: Duration,
}

/// Rolls the model out on every profile and summarizes the costs.
pub fn evaluate<S: Scalar>(
    model: &KemenyTransformer<S>,
    profiles: &[Profile],
    mode: RolloutMode,
    seed: u64,
    oracle: Option<&[f64]>,
) -> Result<Evaluation> {
    let max_m = model.config().max_m;
    if let Some((i, p)) = profiles.iter().enumerate().find(|(_, p)| p.m() > max_m) {
        return Err(Error::ConfigMismatch(format!(
            "profile {i} has {} voters, model supports at most {max_m}",
            p.m()
        )));
    }
    if let Some(o) = oracle {
        if o.len() != profiles.len() {
            return Err(Error::InvalidState(format!(
                "{} oracle costs for {} profiles",
                o.len(),
                profiles.len()
            )));
        }
    }
    let start = Instant::now();
    let rankings: Vec<Ranking> = profiles
        .par_iter()
        .enumerate()
        .map(|(i, p)| Ok(model.rollout(p, mode, derive_seed(seed, &[i as u64]))?.ranking))
        .collect::<Result<_>>()?;
    let total_time = start.elapsed();
    let costs: Vec<f64> = rankings
        .iter()
        .zip(profiles)
        .map(|(r, p)| kemeny(r, p))
        .collect::<Result<_>>()?;
    let k = costs.len().max(1) as f64;
    let mean_cost = costs.iter().sum::<f64>() / k;
    let (mean_gap, mean_relative_gap) = match oracle {
        Some(o) => {
            let gap = costs.iter().zip(o).map(|(c, o)| c - o).sum::<f64>() / k;
            let rel: Vec<f64> = costs
                .iter()
                .zip(o)
                .filter(|(_, &o)| o > 0.0)
                .map(|(c, o)| (c - o) / o)
                .collect();
            let rel = (!rel.is_empty()).then(|| rel.iter().sum::<f64>() / rel.len() as f64);
            (Some(gap), rel)
        }
        None => (None, None),
    };
    Ok(Evaluation {
        rankings,
        costs,
        mean_cost,
        mean_gap,
        mean_relative_gap,
        total_time,
    })
}

/// Summary of one epoch, emitted as one progress record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean sampled-rollout cost over the epoch's training instances.
    pub mean_sample_cost: f64,
    /// Mean baseline greedy cost over the same instances.
    pub mean_train_baseline_cost: f64,
    /// Greedy validation mean of the trained policy after the epoch.
    pub mean_greedy_cost: f64,
    /// Greedy validation mean of the baseline before any replacement.
    pub mean_baseline_cost: f64,
    pub t_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub replaced: bool,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Greedy validation mean of the initial parameters.
    pub initial_validation_cost: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    /// Greedy validation mean after the last completed epoch.
    pub fn final_validation_cost(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_validation_cost, |e| e.mean_greedy_cost)
    }

    /// Same report with wall-clock fields cleared, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for e in &mut r.epochs {
            e.wall_seconds = 0.0;
        }
        r
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainState<S: Scalar> {
    pub config: TrainConfig,
    pub epochs_completed: usize,
    pub params: ParamStore<S>,
    pub baseline: ParamStore<S>,
    pub adam: AdamState<S>,
    pub report: TrainReport,
}

impl<S: Scalar> TrainState<S> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }
}

pub struct Trainer<S: Scalar> {
    config: TrainConfig,
    model: KemenyTransformer<S>,
    baseline: KemenyTransformer<S>,
    adam: AdamState<S>,
    report: TrainReport,
    validation: Vec<Profile>,
    baseline_costs: Vec<f64>,
    replacements: usize,
}

impl<S: Scalar> Trainer<S> {
    /// Initializes the policy; the baseline starts as an exact copy.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = KemenyTransformer::new(config.model_config(), derive_seed(config.seed, &[TAG_INIT]))?;
        let validation = config.validation_set()?;
        let costs = evaluate(&model, &validation, RolloutMode::Greedy, 0, None)?.costs;
        let report = TrainReport {
            initial_validation_cost: mean(&costs),
            epochs: Vec::new(),
        };
        Ok(Self {
            adam: AdamState::new(model.params(), config.learning_rate),
            baseline: model.clone(),
            model,
            config,
            report,
            validation,
            baseline_costs: costs,
            replacements: 0,
        })
    }

    pub fn from_state(state: TrainState<S>) -> Result<Self> {
        state.config.validate()?;
        if state.report.epochs.len() != state.epochs_completed {
            return Err(Error::CorruptCheckpoint(format!(
                "state claims {} epochs but reports {}",
                state.epochs_completed,
                state.report.epochs.len()
            )));
        }
        let model_config = state.config.model_config();
        let model = KemenyTransformer::from_params(model_config.clone(), state.params)?;
        let baseline = KemenyTransformer::from_params(model_config, state.baseline)?;
        let validation = state.config.validation_set()?;
        let baseline_costs = evaluate(&baseline, &validation, RolloutMode::Greedy, 0, None)?.costs;
        let replacements = state.report.epochs.iter().filter(|e| e.replaced).count();
        Ok(Self {
            config: state.config,
            model,
            baseline,
            adam: state.adam,
            report: state.report,
            validation,
            baseline_costs,
            replacements,
        })
    }

    pub fn state(&self) -> TrainState<S> {
        TrainState {
            config: self.config.clone(),
            epochs_completed: self.report.epochs.len(),
            params: self.model.params().clone(),
            baseline: self.baseline.params().clone(),
            adam: self.adam.clone(),
            report: self.report.clone(),
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &KemenyTransformer<S> {
        &self.model
    }

    pub fn baseline(&self) -> &KemenyTransformer<S> {
        &self.baseline
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn validation_profiles(&self) -> &[Profile] {
        &self.validation
    }

    pub fn epochs_completed(&self) -> usize {
        self.report.epochs.len()
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_completed() >= self.config.epochs
    }

    /// The training batch of a given step; a pure function of the config.
    pub fn batch(&self, epoch: usize, step: usize) -> Result<(Vec<Profile>, Vec<u64>)> {
        let mut profiles = Vec::with_capacity(self.config.batch_size);
        let mut seeds = Vec::with_capacity(self.config.batch_size);
        for i in 0..self.config.batch_size {
            let s = self.config.step_seed(epoch, step, i);
            profiles.push(self.config.sample_instance(s)?);
            seeds.push(derive_seed(s, &[TAG_SAMPLE]));
        }
        Ok((profiles, seeds))
    }

    /// Runs one epoch of updates followed by the baseline test.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let start = Instant::now();
        let epoch = self.epochs_completed();
        let mut sample_sum = 0.0;
        let mut base_sum = 0.0;
        let mut count = 0usize;
        for step in 0..self.config.steps_per_epoch {
            let (profiles, seeds) = self.batch(epoch, step)?;
            let (grads, stats) = reinforce_step(&self.model, &self.baseline, &profiles, &seeds)?;
            adam_step(self.model.params_mut(), &grads, &mut self.adam)?;
            sample_sum += stats.sample_costs.iter().sum::<f64>();
            base_sum += stats.baseline_costs.iter().sum::<f64>();
            count += profiles.len();
        }
        let candidate = evaluate(&self.model, &self.validation, RolloutMode::Greedy, 0, None)?.costs;
        let decision = baseline_decision(&candidate, &self.baseline_costs, self.config.alpha);
        let record = EpochRecord {
            epoch,
            mean_sample_cost: sample_sum / count as f64,
            mean_train_baseline_cost: base_sum / count as f64,
            mean_greedy_cost: mean(&candidate),
            mean_baseline_cost: mean(&self.baseline_costs),
            t_statistic: decision.test.map(|t| t.t),
            p_value: decision.test.map(|t| t.p),
            replaced: decision.replace,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if decision.replace {
            self.baseline = self.model.clone();
            self.baseline_costs = candidate;
            self.replacements += 1;
        }
        self.report.epochs.push(record);
        Ok(self.report.epochs.last().expect("just pushed"))
    }

    pub fn checkpoint(&self) -> Checkpoint<S> {
        Checkpoint::from_model(
            &self.model,
            CheckpointMetadata {
                epochs_completed: self.epochs_completed(),
                seed: self.config.seed,
                baseline_replacements: self.replacements,
            },
        )
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Runs every configured epoch.
pub fn train<S: Scalar>(config: TrainConfig) -> Result<(Checkpoint<S>, TrainReport)> {
    let mut trainer = Trainer::<S>::new(config)?;
    while !trainer.is_finished() {
        trainer.run_epoch()?;
    }
    Ok((trainer.checkpoint(), trainer.report.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
epochs = 2
steps_per_epoch = 3
batch_size = 4
validation_size = 8
seed = 7

[[instances]]
kind = "random"
n = 5
m = 3

[model]
d_model = 8
n_heads = 2
d_ff = 16
encoder_layers = 1
decoder_layers = 1
max_m = 3
"#;

    #[test]
    fn parses_toml() {
        let c = TrainConfig::from_toml(CONFIG).unwrap();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.instances[0].weight, 1.0);
        assert_eq!(TrainConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn missing_instances_is_named() {
        let text = "epochs = 1\nsteps_per_epoch = 1\nbatch_size = 1\n";
        let err = TrainConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("instances"), "{err}");
        let text = CONFIG.replace("alpha", "x").replace("seed = 7", "seed = 7\nalpha = 1.5");
        let err = TrainConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let mut c = TrainConfig::from_toml(CONFIG).unwrap();
        c.epochs = 0;
        let (ck, report) = train::<f64>(c.clone()).unwrap();
        assert!(report.epochs.is_empty());
        let fresh = KemenyTransformer::<f64>::new(c.model_config(), derive_seed(c.seed, &[TAG_INIT])).unwrap();
        assert_eq!(&ck.params, fresh.params());
        assert_eq!(ck.metadata.epochs_completed, 0);
    }

    #[test]
    fn validation_set_is_fixed() {
        let c = TrainConfig::from_toml(CONFIG).unwrap();
        assert_eq!(c.validation_set().unwrap(), c.validation_set().unwrap());
        assert_eq!(c.validation_set().unwrap().len(), 8);
    }
}
