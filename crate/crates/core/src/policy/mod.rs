//! Log-linear tactic policy (the prover) and a squashed linear regressor
//! (the score generator), both over hashed `(state, tactic)` features.

mod checkpoint;
mod features;
mod regressor;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{CheckpointError, ModelKind};
pub use features::{featurize, goal_gap, FeatureVector, StateFeatures, DEFAULT_FEATURE_DIM};
pub use regressor::{
    regressor_fit, regressor_loss_and_grad, ScoreExample, ScoreRegressor,
};

use crate::corpus::Triplet;
use crate::kernel::{KernelError, ProofState, Tactic};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("tactic {0} is not applicable at this state")]
    TacticNotApplicable(String),
    #[error("state has no applicable tactics")]
    NoApplicableTactics,
    #[error("empty training set")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("score generator has not been fitted")]
    UnfittedRegressor,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Order in which training examples are consumed within an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchMode {
    /// One gradient step per epoch over every example.
    Full,
    /// Seeded reshuffle every epoch, then one step per chunk of `size`.
    Mini { size: usize, seed: u64 },
}

impl BatchMode {
    /// Index batches for one epoch.
    pub fn batches(&self, n: usize, epoch: usize) -> Vec<Vec<usize>> {
        match *self {
            BatchMode::Full => vec![(0..n).collect()],
            BatchMode::Mini { size, seed } => {
                let mut idx: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(crate::hashing::derive_seed(
                    seed,
                    &[epoch as u64],
                ));
                idx.shuffle(&mut rng);
                idx.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch: BatchMode,
}

/// Applicable tactics at a state with their successors and features.
#[derive(Debug, Clone)]
pub struct ActionSet {
    pub tactics: Vec<Tactic>,
    pub successors: Vec<ProofState>,
    pub features: Vec<FeatureVector>,
}

impl ActionSet {
    pub fn of(state: &ProofState, dim: usize) -> ActionSet {
        let succ = state.successors();
        let shared = StateFeatures::new(state, dim);
        let mut tactics = Vec::with_capacity(succ.len());
        let mut successors = Vec::with_capacity(succ.len());
        let mut features = Vec::with_capacity(succ.len());
        for (t, n) in succ {
            features.push(shared.featurize(&t, &n));
            tactics.push(t);
            successors.push(n);
        }
        ActionSet {
            tactics,
            successors,
            features,
        }
    }

    pub fn len(&self) -> usize {
        self.tactics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tactics.is_empty()
    }

    pub fn index_of(&self, tactic: &Tactic) -> Option<usize> {
        self.tactics.iter().position(|t| t == tactic)
    }
}

/// An action set scored by a policy.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub actions: ActionSet,
    pub log_probs: Vec<f64>,
}

impl Evaluation {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }
}

/// A distinct sampled tactic and how many of the draws produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub tactic: Tactic,
    pub multiplicity: u32,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + z.ln();
    logits.iter().map(|l| l - lse).collect()
}

/// `π(t|s) ∝ exp(w·φ(s,t) / temperature)` over the applicable tactics.
#[derive(Debug, Clone, PartialEq)]
pub struct TacticPolicy {
    pub model_id: String,
    pub temperature: f64,
    pub weights: Vec<f64>,
}

/// Glorot-uniform draws for a `dim × 1` layer, shrunk by 10x.
fn xavier_uniform(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let bound = 0.1 * (6.0 / (dim as f64 + 1.0)).sqrt();
    (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect()
}

impl TacticPolicy {
    /// All-zero weights: the uniform policy.
    pub fn zeros(model_id: impl Into<String>, dim: usize, temperature: f64) -> Self {
        TacticPolicy {
            model_id: model_id.into(),
            temperature,
            weights: vec![0.0; dim],
        }
    }

    /// Small seeded Xavier-style initialization.
    pub fn seeded(model_id: impl Into<String>, dim: usize, temperature: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TacticPolicy {
            model_id: model_id.into(),
            temperature,
            weights: xavier_uniform(&mut rng, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    pub fn logits(&self, features: &[FeatureVector]) -> Vec<f64> {
        features
            .iter()
            .map(|f| f.dot(&self.weights) / self.temperature)
            .collect()
    }

    pub fn log_probs(&self, features: &[FeatureVector]) -> Vec<f64> {
        log_softmax(&self.logits(features))
    }

    pub fn score(&self, actions: ActionSet) -> Evaluation {
        let log_probs = self.log_probs(&actions.features);
        Evaluation { actions, log_probs }
    }

    pub fn evaluate(&self, state: &ProofState) -> Evaluation {
        self.score(ActionSet::of(state, self.dim()))
    }

    /// Exact log-probability of `tactic` among the applicable tactics.
    pub fn log_prob(&self, state: &ProofState, tactic: &Tactic) -> Result<f64, PolicyError> {
        let eval = self.evaluate(state);
        let i = eval
            .actions
            .index_of(tactic)
            .ok_or_else(|| PolicyError::TacticNotApplicable(tactic.to_string()))?;
        Ok(eval.log_probs[i])
    }

    /// `k` draws with replacement at the policy temperature, deduplicated in
    /// first-draw order.
    pub fn sample_tactics(
        &self,
        state: &ProofState,
        k: usize,
        seed: u64,
    ) -> Result<Vec<Candidate>, PolicyError> {
        let eval = self.evaluate(state);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_candidates(&eval, k, &mut rng)
    }

    /// Model weights as little-endian bytes, header included.
    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::encode(ModelKind::Policy, &self.model_id, self.temperature, true, &self.weights)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let raw = checkpoint::decode(bytes)?;
        if raw.kind != ModelKind::Policy {
            return Err(CheckpointError::WrongKind);
        }
        Ok(TacticPolicy {
            model_id: raw.model_id,
            temperature: raw.temperature,
            weights: raw.weights,
        })
    }
}

/// Inverse-CDF draw from a categorical distribution.
pub fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed on the rounding slack at the top; take the last positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn sample_candidates(
    eval: &Evaluation,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Candidate>, PolicyError> {
    if eval.actions.is_empty() {
        return Err(PolicyError::NoApplicableTactics);
    }
    let probs = eval.probs();
    let mut out: Vec<Candidate> = Vec::new();
    for _ in 0..k {
        let i = draw(&probs, rng);
        match out.iter_mut().find(|c| c.index == i) {
            Some(c) => c.multiplicity += 1,
            None => out.push(Candidate {
                index: i,
                tactic: eval.actions.tactics[i].clone(),
                multiplicity: 1,
            }),
        }
    }
    Ok(out)
}

/// A supervised example: the action set at a state and the recorded choice.
#[derive(Debug, Clone)]
pub struct SftExample {
    pub features: Vec<FeatureVector>,
    pub target: usize,
}

impl SftExample {
    pub fn from_triplet(t: &Triplet, dim: usize) -> Result<SftExample, PolicyError> {
        let actions = ActionSet::of(&t.state, dim);
        let target = actions
            .index_of(&t.tactic)
            .ok_or_else(|| PolicyError::TacticNotApplicable(t.tactic.to_string()))?;
        Ok(SftExample {
            features: actions.features,
            target,
        })
    }
}

/// Mean negative log-likelihood over `batch` and its gradient in `grad`.
pub fn sft_loss_and_grad(
    weights: &[f64],
    temperature: f64,
    examples: &[SftExample],
    batch: &[usize],
    grad: Option<&mut [f64]>,
) -> f64 {
    let mut loss = 0.0;
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    for &i in batch {
        let ex = &examples[i];
        let logits: Vec<f64> = ex
            .features
            .iter()
            .map(|f| f.dot(weights) / temperature)
            .collect();
        let lp = log_softmax(&logits);
        loss -= lp[ex.target];
        if let Some(g) = grad.as_deref_mut() {
            // d(-log p_y)/dw = (E_p[φ] - φ_y) / T
            for (f, l) in ex.features.iter().zip(&lp) {
                f.add_scaled(g, scale * l.exp() / temperature);
            }
            ex.features[ex.target].add_scaled(g, -scale / temperature);
        }
    }
    loss * scale
}

/// Supervised fit of the policy on recorded `(state, tactic)` choices by
/// gradient descent on the mean negative log-likelihood.
///
/// Returns the fitted policy and the full-set loss before training and
/// after every epoch.
pub fn sft_fit(
    policy: &TacticPolicy,
    triplets: &[Triplet],
    cfg: &FitConfig,
) -> Result<(TacticPolicy, Vec<f64>), PolicyError> {
    if triplets.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let examples = triplets
        .iter()
        .map(|t| SftExample::from_triplet(t, policy.dim()))
        .collect::<Result<Vec<_>, _>>()?;
    sft_fit_examples(policy, &examples, cfg)
}

pub fn sft_fit_examples(
    policy: &TacticPolicy,
    examples: &[SftExample],
    cfg: &FitConfig,
) -> Result<(TacticPolicy, Vec<f64>), PolicyError> {
    if examples.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut out = policy.clone();
    let all: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; out.dim()];
    let mut history = vec![sft_loss_and_grad(&out.weights, out.temperature, examples, &all, None)];
    for epoch in 0..cfg.epochs {
        for batch in cfg.batch.batches(examples.len(), epoch) {
            sft_loss_and_grad(&out.weights, out.temperature, examples, &batch, Some(&mut grad));
            for (w, g) in out.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
        let loss = sft_loss_and_grad(&out.weights, out.temperature, examples, &all, None);
        if !loss.is_finite() {
            return Err(PolicyError::NonFiniteLoss { epoch });
        }
        history.push(loss);
    }
    Ok((out, history))
}
