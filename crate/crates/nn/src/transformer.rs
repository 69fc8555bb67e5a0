//! Encoder/decoder policy that emits a ranking one item at a time.
//!
//! Each item is a token carrying its normalized positions in every base
//! ranking. The encoder uses no positional encoding, so it is equivariant to
//! item relabeling. The decoder feeds the encoding of the previously chosen
//! item plus a sinusoidal step encoding, attends causally over its own past
//! and over the unselected items, and scores the remaining items with a
//! single-head dot product.

use kemeny_core::rng::{rng_from_seed, DetRng};
use kemeny_core::{Profile, Ranking};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat_cols, concat_rows, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Init, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stand-in for minus infinity on selected items.
pub const MASK_VALUE: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub max_m: usize,
    #[serde(default = "default_pe_base")]
    pub pe_base: f64,
}

fn default_pe_base() -> f64 {
    10_000.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(10)
    }
}

impl ModelConfig {
    /// The large configuration: 128 wide, 8 heads, 3 + 2 layers.
    pub fn paper(max_m: usize) -> Self {
        Self {
            d_model: 128,
            n_heads: 8,
            d_ff: 512,
            encoder_layers: 3,
            decoder_layers: 2,
            max_m,
            pe_base: default_pe_base(),
        }
    }

    /// CPU-sized configuration: 64 wide, 4 heads, 2 + 1 layers.
    pub fn desk(max_m: usize) -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            encoder_layers: 2,
            decoder_layers: 1,
            max_m,
            pe_base: default_pe_base(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("max_m", self.max_m),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.pe_base > 1.0) || !self.pe_base.is_finite() {
            return Err(Error::InvalidConfig(format!("pe_base must exceed 1, got {}", self.pe_base)));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Every parameter with its shape and initializer.
    pub fn param_specs(&self) -> Vec<(String, [usize; 2], Init)> {
        let d = self.d_model;
        let mut specs = vec![
            ("encoder.input.weight".to_string(), [self.max_m, d], Init::Xavier),
            ("encoder.input.bias".to_string(), [1, d], Init::Zeros),
            ("decoder.start".to_string(), [1, d], Init::Xavier),
            ("head.wq".to_string(), [d, d], Init::Xavier),
            ("head.wk".to_string(), [d, d], Init::Xavier),
        ];
        let attn = |specs: &mut Vec<_>, prefix: &str| {
            for w in ["wq", "wk", "wv", "wo"] {
                specs.push((format!("{prefix}.{w}"), [d, d], Init::Xavier));
            }
        };
        let norm = |specs: &mut Vec<_>, prefix: &str| {
            specs.push((format!("{prefix}.gain"), [1, d], Init::Ones));
            specs.push((format!("{prefix}.bias"), [1, d], Init::Zeros));
        };
        let ff = |specs: &mut Vec<_>, prefix: &str| {
            specs.push((format!("{prefix}.w1"), [d, self.d_ff], Init::Xavier));
            specs.push((format!("{prefix}.b1"), [1, self.d_ff], Init::Zeros));
            specs.push((format!("{prefix}.w2"), [self.d_ff, d], Init::Xavier));
            specs.push((format!("{prefix}.b2"), [1, d], Init::Zeros));
        };
        for l in 0..self.encoder_layers {
            let p = format!("encoder.layer{l}");
            attn(&mut specs, &format!("{p}.attn"));
            norm(&mut specs, &format!("{p}.norm1"));
            ff(&mut specs, &format!("{p}.ff"));
            norm(&mut specs, &format!("{p}.norm2"));
        }
        for l in 0..self.decoder_layers {
            let p = format!("decoder.layer{l}");
            attn(&mut specs, &format!("{p}.self_attn"));
            norm(&mut specs, &format!("{p}.norm1"));
            attn(&mut specs, &format!("{p}.cross_attn"));
            norm(&mut specs, &format!("{p}.norm2"));
            ff(&mut specs, &format!("{p}.ff"));
            norm(&mut specs, &format!("{p}.norm3"));
        }
        specs
    }
}

/// Sinusoidal step encoding: sine on even coordinates, cosine on odd ones.
pub fn positional_encoding(t: usize, d_model: usize, base: f64) -> Vec<f64> {
    (0..d_model)
        .map(|j| {
            let i = (j / 2) as f64;
            let angle = t as f64 / base.powf(2.0 * i / d_model as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// `n x m` matrix whose row `i` holds the 1-based positions of item `i`
/// in each base ranking divided by `n`.
pub fn tokenize<S: Scalar>(profile: &Profile, max_m: usize) -> Result<Tensor<S>> {
    let (n, m) = (profile.n(), profile.m());
    if m > max_m {
        return Err(Error::Capacity { m, max_m });
    }
    let nf = n as f64;
    Ok(Tensor::from_fn(n, m, |i, k| {
        S::lit((profile.rankings()[k].position(i) + 1) as f64 / nf)
    }))
}

/// Right-pads to `max_m` columns with each row's mean.
pub fn pad_voters<S: Scalar>(h: &Tensor<S>, max_m: usize) -> Result<Tensor<S>> {
    let m = h.cols();
    if m > max_m {
        return Err(Error::Capacity { m, max_m });
    }
    let means: Vec<S> = (0..h.rows())
        .map(|r| h.row(r).iter().copied().sum::<S>() / S::lit(m as f64))
        .collect();
    Ok(Tensor::from_fn(h.rows(), max_m, |r, c| {
        if c < m {
            h.get(r, c)
        } else {
            means[r]
        }
    }))
}

/// The encoder input for a profile at a given voter capacity.
pub fn model_input<S: Scalar>(profile: &Profile, max_m: usize) -> Result<Tensor<S>> {
    pad_voters(&tokenize(profile, max_m)?, max_m)
}

#[derive(Debug, Clone, PartialEq)]
struct AttnIdx {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct NormIdx {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct FfIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayer {
    attn: AttnIdx,
    norm1: NormIdx,
    ff: FfIdx,
    norm2: NormIdx,
}

#[derive(Debug, Clone, PartialEq)]
struct DecoderLayer {
    self_attn: AttnIdx,
    norm1: NormIdx,
    cross_attn: AttnIdx,
    norm2: NormIdx,
    ff: FfIdx,
    norm3: NormIdx,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    input_w: usize,
    input_b: usize,
    start: usize,
    head_q: usize,
    head_k: usize,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
}

impl Layout {
    fn resolve<S: Scalar>(config: &ModelConfig, store: &ParamStore<S>) -> Result<Self> {
        let mut expected: Vec<(String, [usize; 2])> =
            config.param_specs().into_iter().map(|(n, s, _)| (n, s)).collect();
        expected.sort();
        if store.len() != expected.len() {
            return Err(Error::ConfigMismatch(format!(
                "config declares {} parameters, store has {}",
                expected.len(),
                store.len()
            )));
        }
        for ((name, shape), (have, tensor)) in expected.iter().zip(store.iter()) {
            if name != have {
                return Err(Error::ConfigMismatch(format!(
                    "expected parameter {name}, found {have}"
                )));
            }
            if *shape != tensor.shape() {
                return Err(Error::ConfigMismatch(format!(
                    "parameter {name}: config shape {shape:?}, stored {:?}",
                    tensor.shape()
                )));
            }
        }
        let idx = |name: String| store.index(&name).expect("checked above");
        let attn = |p: &str| AttnIdx {
            wq: idx(format!("{p}.wq")),
            wk: idx(format!("{p}.wk")),
            wv: idx(format!("{p}.wv")),
            wo: idx(format!("{p}.wo")),
        };
        let norm = |p: &str| NormIdx {
            gain: idx(format!("{p}.gain")),
            bias: idx(format!("{p}.bias")),
        };
        let ff = |p: &str| FfIdx {
            w1: idx(format!("{p}.w1")),
            b1: idx(format!("{p}.b1")),
            w2: idx(format!("{p}.w2")),
            b2: idx(format!("{p}.b2")),
        };
        let encoder = (0..config.encoder_layers)
            .map(|l| {
                let p = format!("encoder.layer{l}");
                EncoderLayer {
                    attn: attn(&format!("{p}.attn")),
                    norm1: norm(&format!("{p}.norm1")),
                    ff: ff(&format!("{p}.ff")),
                    norm2: norm(&format!("{p}.norm2")),
                }
            })
            .collect();
        let decoder = (0..config.decoder_layers)
            .map(|l| {
                let p = format!("decoder.layer{l}");
                DecoderLayer {
                    self_attn: attn(&format!("{p}.self_attn")),
                    norm1: norm(&format!("{p}.norm1")),
                    cross_attn: attn(&format!("{p}.cross_attn")),
                    norm2: norm(&format!("{p}.norm2")),
                    ff: ff(&format!("{p}.ff")),
                    norm3: norm(&format!("{p}.norm3")),
                }
            })
            .collect();
        Ok(Self {
            input_w: idx("encoder.input.weight".into()),
            input_b: idx("encoder.input.bias".into()),
            start: idx("decoder.start".into()),
            head_q: idx("head.wq".into()),
            head_k: idx("head.wk".into()),
            encoder,
            decoder,
        })
    }
}

/// How the next item is chosen at each decoding step.
pub enum Policy<'a> {
    /// Highest probability, lowest index on ties.
    Greedy,
    /// Draw from the step distribution.
    Sample(&'a mut DetRng),
    /// Follow a given order (teacher forcing).
    Forced(&'a [usize]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ranking: Ranking,
    pub step_log_probs: Vec<f64>,
    pub total_log_prob: f64,
}

/// Per-rollout decoder state: projected encoder keys and the causal cache.
pub struct DecoderState<'t, S> {
    n: usize,
    steps: usize,
    encoded: Var<'t, S>,
    cross_k: Vec<Vec<Var<'t, S>>>,
    cross_v: Vec<Vec<Var<'t, S>>>,
    head_k: Var<'t, S>,
    self_k: Vec<Vec<Option<Var<'t, S>>>>,
    self_v: Vec<Vec<Option<Var<'t, S>>>>,
}

impl<S> DecoderState<'_, S> {
    /// Number of decoding steps already taken (length of the causal cache).
    pub fn cache_len(&self) -> usize {
        self.steps
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Result of one decoding step.
pub struct StepOutput<'t, S> {
    /// Scores with the mask already added.
    pub logits: Tensor<S>,
    /// `1 x n` log-probabilities; selected items sit near `MASK_VALUE`.
    pub log_probs: Var<'t, S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KemenyTransformer<S> {
    config: ModelConfig,
    params: ParamStore<S>,
    layout: Layout,
}

fn split_heads<'t, S: Scalar>(x: Var<'t, S>, heads: usize) -> Result<Vec<Var<'t, S>>> {
    let dh = x.shape()[1] / heads;
    (0..heads).map(|h| x.slice_cols(h * dh, dh)).collect()
}

fn mask_tensor<S: Scalar>(mask: &[bool]) -> Tensor<S> {
    let neg = S::lit(MASK_VALUE);
    Tensor::from_fn(1, mask.len(), |_, c| if mask[c] { neg } else { S::zero() })
}

impl<S: Scalar> KemenyTransformer<S> {
    /// Freshly initialized model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::init(&config.param_specs(), &mut rng_from_seed(seed))?;
        Self::from_params(config, params)
    }

    /// Wraps existing parameters, rejecting any name or shape mismatch.
    pub fn from_params(config: ModelConfig, params: ParamStore<S>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::resolve(&config, &params)?;
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<S> {
        self.params
    }

    pub fn cast<T: Scalar>(&self) -> KemenyTransformer<T> {
        KemenyTransformer {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    fn p<'t>(&self, tape: &'t Tape<S>, index: usize) -> Var<'t, S> {
        tape.param(&self.params, index)
    }

    fn norm<'t>(&self, tape: &'t Tape<S>, x: Var<'t, S>, idx: &NormIdx) -> Result<Var<'t, S>> {
        x.layer_norm(self.p(tape, idx.gain), self.p(tape, idx.bias))
    }

    fn feed_forward<'t>(&self, tape: &'t Tape<S>, x: Var<'t, S>, idx: &FfIdx) -> Result<Var<'t, S>> {
        let hidden = x
            .matmul(self.p(tape, idx.w1))?
            .add_row(self.p(tape, idx.b1))?
            .relu();
        hidden.matmul(self.p(tape, idx.w2))?.add_row(self.p(tape, idx.b2))
    }

    /// Scaled dot-product attention per head, then the output projection.
    fn attend<'t>(
        &self,
        tape: &'t Tape<S>,
        q: &[Var<'t, S>],
        k: &[Var<'t, S>],
        v: &[Var<'t, S>],
        mask: Option<&Tensor<S>>,
        wo: usize,
    ) -> Result<Var<'t, S>> {
        let scale = S::one() / S::lit(self.config.d_head() as f64).sqrt();
        let mut heads = Vec::with_capacity(q.len());
        for h in 0..q.len() {
            let weights = q[h].matmul_nt(k[h])?.scale(scale).softmax(mask)?;
            heads.push(weights.matmul(v[h])?);
        }
        concat_cols(&heads)?.matmul(self.p(tape, wo))
    }

    /// `n x d_model` item encodings for a padded input matrix.
    pub fn encode<'t>(&self, tape: &'t Tape<S>, input: &Tensor<S>) -> Result<Var<'t, S>> {
        let heads = self.config.n_heads;
        let h_in = tape.constant(input.clone());
        let mut x = h_in
            .matmul(self.p(tape, self.layout.input_w))?
            .add_row(self.p(tape, self.layout.input_b))?;
        for layer in &self.layout.encoder {
            let a = &layer.attn;
            let q = split_heads(x.matmul(self.p(tape, a.wq))?, heads)?;
            let k = split_heads(x.matmul(self.p(tape, a.wk))?, heads)?;
            let v = split_heads(x.matmul(self.p(tape, a.wv))?, heads)?;
            let attended = self.attend(tape, &q, &k, &v, None, a.wo)?;
            x = self.norm(tape, x.add(attended)?, &layer.norm1)?;
            let ff = self.feed_forward(tape, x, &layer.ff)?;
            x = self.norm(tape, x.add(ff)?, &layer.norm2)?;
        }
        Ok(x)
    }

    /// Encodes a profile.
    pub fn encode_profile<'t>(&self, tape: &'t Tape<S>, profile: &Profile) -> Result<Var<'t, S>> {
        self.encode(tape, &model_input(profile, self.config.max_m)?)
    }

    /// Projects the encodings once for every later decoding step.
    pub fn begin_decode<'t>(&self, tape: &'t Tape<S>, encoded: Var<'t, S>) -> Result<DecoderState<'t, S>> {
        let [n, d] = encoded.shape();
        if d != self.config.d_model {
            return Err(Error::InvalidState(format!(
                "encodings have width {d}, model expects {}",
                self.config.d_model
            )));
        }
        let heads = self.config.n_heads;
        let mut cross_k = Vec::new();
        let mut cross_v = Vec::new();
        for layer in &self.layout.decoder {
            let a = &layer.cross_attn;
            cross_k.push(split_heads(encoded.matmul(self.p(tape, a.wk))?, heads)?);
            cross_v.push(split_heads(encoded.matmul(self.p(tape, a.wv))?, heads)?);
        }
        let layers = self.layout.decoder.len();
        Ok(DecoderState {
            n,
            steps: 0,
            encoded,
            cross_k,
            cross_v,
            head_k: encoded.matmul(self.p(tape, self.layout.head_k))?,
            self_k: vec![vec![None; heads]; layers],
            self_v: vec![vec![None; heads]; layers],
        })
    }

    /// One decoding step. `mask[i]` marks items already selected and must
    /// agree with the cache; `prev` is the item chosen at the previous step.
    pub fn decode_step<'t>(
        &self,
        tape: &'t Tape<S>,
        state: &mut DecoderState<'t, S>,
        prev: Option<usize>,
        mask: &[bool],
    ) -> Result<StepOutput<'t, S>> {
        let n = state.n;
        if mask.len() != n {
            return Err(Error::InvalidState(format!("mask has {} entries for {n} items", mask.len())));
        }
        let selected = mask.iter().filter(|&&s| s).count();
        if selected != state.steps {
            return Err(Error::InvalidState(format!(
                "mask selects {selected} items but the cache holds {} steps",
                state.steps
            )));
        }
        if state.steps == n {
            return Err(Error::InvalidState("every item is already selected".into()));
        }
        let base = match (state.steps, prev) {
            (0, None) => self.p(tape, self.layout.start),
            (0, Some(_)) => {
                return Err(Error::InvalidState("first step takes no previous item".into()));
            }
            (_, None) => return Err(Error::InvalidState("previous item missing".into())),
            (_, Some(p)) if p >= n || !mask[p] => {
                return Err(Error::InvalidState(format!("previous item {p} is not masked")));
            }
            (_, Some(p)) => state.encoded.gather_rows(&[p])?,
        };
        let pe = positional_encoding(state.steps + 1, self.config.d_model, self.config.pe_base);
        let pe = tape.constant(Tensor::from_fn(1, pe.len(), |_, c| S::lit(pe[c])));
        let mut x = base.add(pe)?;
        let mask_t = mask_tensor::<S>(mask);
        let heads = self.config.n_heads;

        for (l, layer) in self.layout.decoder.iter().enumerate() {
            let a = &layer.self_attn;
            let q = split_heads(x.matmul(self.p(tape, a.wq))?, heads)?;
            let k_new = split_heads(x.matmul(self.p(tape, a.wk))?, heads)?;
            let v_new = split_heads(x.matmul(self.p(tape, a.wv))?, heads)?;
            for h in 0..heads {
                state.self_k[l][h] = Some(match state.self_k[l][h] {
                    Some(k) => concat_rows(&[k, k_new[h]])?,
                    None => k_new[h],
                });
                state.self_v[l][h] = Some(match state.self_v[l][h] {
                    Some(v) => concat_rows(&[v, v_new[h]])?,
                    None => v_new[h],
                });
            }
            let k: Vec<_> = state.self_k[l].iter().map(|k| k.expect("filled above")).collect();
            let v: Vec<_> = state.self_v[l].iter().map(|v| v.expect("filled above")).collect();
            let attended = self.attend(tape, &q, &k, &v, None, a.wo)?;
            x = self.norm(tape, x.add(attended)?, &layer.norm1)?;

            let c = &layer.cross_attn;
            let q = split_heads(x.matmul(self.p(tape, c.wq))?, heads)?;
            let attended = self.attend(tape, &q, &state.cross_k[l], &state.cross_v[l], Some(&mask_t), c.wo)?;
            x = self.norm(tape, x.add(attended)?, &layer.norm2)?;

            let ff = self.feed_forward(tape, x, &layer.ff)?;
            x = self.norm(tape, x.add(ff)?, &layer.norm3)?;
        }

        let q = x.matmul(self.p(tape, self.layout.head_q))?;
        let scale = S::one() / S::lit(self.config.d_model as f64).sqrt();
        let raw = q.matmul_nt(state.head_k)?.scale(scale);
        let mut logits = (*raw.value()).clone();
        logits.add_assign(&mask_t);
        let log_probs = raw.log_softmax(Some(&mask_t))?;
        state.steps += 1;
        Ok(StepOutput { logits, log_probs })
    }

    /// Full rollout recorded on `tape`; also returns the summed
    /// log-probability as a differentiable scalar.
    pub fn rollout_on_tape<'t>(
        &self,
        tape: &'t Tape<S>,
        profile: &Profile,
        mut policy: Policy<'_>,
    ) -> Result<(Trajectory, Var<'t, S>)> {
        let n = profile.n();
        if let Policy::Forced(order) = &policy {
            Ranking::new(order.to_vec())?;
            if order.len() != n {
                return Err(Error::InvalidState(format!("forced order has {} items for {n}", order.len())));
            }
        }
        let encoded = self.encode_profile(tape, profile)?;
        let mut state = self.begin_decode(tape, encoded)?;
        let mut mask = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut picks = Vec::with_capacity(n);
        let mut step_log_probs = Vec::with_capacity(n);
        for t in 0..n {
            let out = self.decode_step(tape, &mut state, order.last().copied(), &mask)?;
            let lp = out.log_probs.value();
            let row = lp.row(0);
            let choice = match &mut policy {
                Policy::Greedy => {
                    let mut best: Option<usize> = None;
                    for i in (0..n).filter(|&i| !mask[i]) {
                        if best.is_none_or(|b| row[i] > row[b]) {
                            best = Some(i);
                        }
                    }
                    best.expect("an unselected item remains")
                }
                Policy::Sample(rng) => {
                    let open: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
                    let probs: Vec<f64> = open.iter().map(|&i| row[i].to_f64_lossy().exp()).collect();
                    let total: f64 = probs.iter().sum();
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = *open.last().expect("an unselected item remains");
                    for (&i, &p) in open.iter().zip(&probs) {
                        if u < p {
                            pick = i;
                            break;
                        }
                        u -= p;
                    }
                    pick
                }
                Policy::Forced(given) => given[t],
            };
            step_log_probs.push(row[choice].to_f64_lossy());
            picks.push(out.log_probs.slice_cols(choice, 1)?);
            mask[choice] = true;
            order.push(choice);
        }
        let total = concat_cols(&picks)?.sum();
        let total_log_prob = step_log_probs.iter().sum();
        Ok((
            Trajectory {
                ranking: Ranking::new(order)?,
                step_log_probs,
                total_log_prob,
            },
            total,
        ))
    }

    /// Greedy or seeded sampling rollout.
    pub fn rollout(&self, profile: &Profile, mode: RolloutMode, seed: u64) -> Result<Trajectory> {
        let tape = Tape::new();
        let mut rng = rng_from_seed(seed);
        let policy = match mode {
            RolloutMode::Greedy => Policy::Greedy,
            RolloutMode::Sample => Policy::Sample(&mut rng),
        };
        Ok(self.rollout_on_tape(&tape, profile, policy)?.0)
    }

    /// Log-probability of producing `order`, by teacher forcing.
    pub fn log_prob(&self, profile: &Profile, order: &[usize]) -> Result<f64> {
        let tape = Tape::new();
        let (_, total) = self.rollout_on_tape(&tape, profile, Policy::Forced(order))?;
        Ok(total.value().item().to_f64_lossy())
    }

    /// Multiply-accumulates of one greedy rollout.
    pub fn rollout_macs(&self, profile: &Profile) -> Result<u64> {
        let tape = Tape::new();
        self.rollout_on_tape(&tape, profile, Policy::Greedy)?;
        Ok(tape.macs())
    }
}
