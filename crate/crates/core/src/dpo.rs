//! Direct preference optimization of the tactic policy against a frozen
//! reference.
//!
//! Per pair, with `h = β[(log πθ(w) − log πref(w)) − (log πθ(l) − log πref(l))]`
//! the loss is `−log σ(h)` and its gradient is
//! `−σ(−h) · β · (∇log πθ(w) − ∇log πθ(l))`, where for a softmax policy at
//! temperature `T`, `∇log πθ(t) = (φ_t − E_πθ[φ]) / T`.

use serde::{Deserialize, Serialize};

use crate::pairing::PreferencePair;
use crate::policy::{ActionSet, BatchMode, FeatureVector, PolicyError, TacticPolicy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DpoError {
    #[error("no preference pairs")]
    EmptyPairs,
    #[error("non-finite value in loss or gradient")]
    NonFiniteValue,
    /// Training diverged; `last_finite` holds the weights before the bad step.
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        last_finite: Box<TacticPolicy>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: BatchMode,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig {
            beta: 0.1,
            learning_rate: 0.05,
            epochs: 1,
            batch: BatchMode::Full,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<(), DpoError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(DpoError::InvalidArgument("beta must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(DpoError::InvalidArgument("learning rate must be non-negative".into()));
        }
        if self.epochs == 0 {
            return Err(DpoError::InvalidArgument("epochs must be positive".into()));
        }
        if let BatchMode::Mini { size: 0, .. } = self.batch {
            return Err(DpoError::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoBatchStats {
    pub loss: f64,
    /// Mean of `h`, the implicit reward margin.
    pub margin: f64,
    /// Fraction of pairs with `h > 0`.
    pub accuracy: f64,
    pub grad_norm: f64,
}

/// A pair resolved against its state's action set, with the reference
/// log-probabilities fixed.
pub struct PreparedPair {
    features: Vec<FeatureVector>,
    w: usize,
    l: usize,
    ref_w: f64,
    ref_l: f64,
}

pub fn prepare(reference: &TacticPolicy, pairs: &[PreferencePair]) -> Result<Vec<PreparedPair>, DpoError> {
    pairs
        .iter()
        .map(|p| {
            let actions = ActionSet::of(&p.state, reference.dim());
            let find = |t| {
                actions
                    .index_of(t)
                    .ok_or_else(|| PolicyError::TacticNotApplicable(t.to_string()))
            };
            let (w, l) = (find(&p.chosen)?, find(&p.rejected)?);
            let lp = reference.log_probs(&actions.features);
            Ok(PreparedPair {
                features: actions.features,
                w,
                l,
                ref_w: lp[w],
                ref_l: lp[l],
            })
        })
        .collect()
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss, stats and (optionally) gradient over the pairs in `batch`.
fn evaluate(
    theta: &TacticPolicy,
    prepared: &[PreparedPair],
    batch: &[usize],
    beta: f64,
    mut grad: Option<&mut [f64]>,
) -> DpoBatchStats {
    let n = batch.len().max(1) as f64;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    let (mut loss, mut margin, mut correct) = (0.0, 0.0, 0usize);
    for &i in batch {
        let p = &prepared[i];
        let lp = theta.log_probs(&p.features);
        let h = beta * ((lp[p.w] - p.ref_w) - (lp[p.l] - p.ref_l));
        loss -= log_sigmoid(h);
        margin += h;
        correct += usize::from(h > 0.0);
        if let Some(g) = grad.as_deref_mut() {
            // The expectation terms of ∇log π(w) and ∇log π(l) cancel.
            let c = -sigmoid(-h) * beta / (theta.temperature * n);
            p.features[p.w].add_scaled(g, c);
            p.features[p.l].add_scaled(g, -c);
        }
    }
    let grad_norm = grad.map_or(0.0, |g| g.iter().map(|x| x * x).sum::<f64>().sqrt());
    DpoBatchStats {
        loss: loss / n,
        margin: margin / n,
        accuracy: correct as f64 / n,
        grad_norm,
    }
}

pub fn dpo_loss(
    theta: &TacticPolicy,
    reference: &TacticPolicy,
    pairs: &[PreferencePair],
    beta: f64,
) -> Result<f64, DpoError> {
    if pairs.is_empty() {
        return Err(DpoError::EmptyPairs);
    }
    let prepared = prepare(reference, pairs)?;
    let all: Vec<usize> = (0..pairs.len()).collect();
    let loss = evaluate(theta, &prepared, &all, beta, None).loss;
    if !loss.is_finite() {
        return Err(DpoError::NonFiniteValue);
    }
    Ok(loss)
}

/// Gradient of `dpo_loss` with respect to `theta`'s weights.
pub fn dpo_grad(
    theta: &TacticPolicy,
    reference: &TacticPolicy,
    pairs: &[PreferencePair],
    beta: f64,
) -> Result<Vec<f64>, DpoError> {
    if pairs.is_empty() {
        return Err(DpoError::EmptyPairs);
    }
    let prepared = prepare(reference, pairs)?;
    let all: Vec<usize> = (0..pairs.len()).collect();
    let mut g = vec![0.0; theta.dim()];
    evaluate(theta, &prepared, &all, beta, Some(&mut g));
    if g.iter().any(|x| !x.is_finite()) {
        return Err(DpoError::NonFiniteValue);
    }
    Ok(g)
}

pub fn dpo_stats(
    theta: &TacticPolicy,
    reference: &TacticPolicy,
    pairs: &[PreferencePair],
    beta: f64,
) -> Result<DpoBatchStats, DpoError> {
    if pairs.is_empty() {
        return Err(DpoError::EmptyPairs);
    }
    let prepared = prepare(reference, pairs)?;
    let all: Vec<usize> = (0..pairs.len()).collect();
    let mut g = vec![0.0; theta.dim()];
    Ok(evaluate(theta, &prepared, &all, beta, Some(&mut g)))
}

/// Gradient descent on the DPO loss starting from `init`. The reference is
/// only read. Returns the trained policy and per-step batch statistics,
/// measured before each step.
pub fn dpo_fit(
    init: &TacticPolicy,
    reference: &TacticPolicy,
    pairs: &[PreferencePair],
    cfg: &DpoConfig,
) -> Result<(TacticPolicy, Vec<DpoBatchStats>), DpoError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(DpoError::EmptyPairs);
    }
    if init.dim() != reference.dim() {
        return Err(DpoError::InvalidArgument("policy and reference dimensions differ".into()));
    }
    let prepared = prepare(reference, pairs)?;
    let mut theta = init.clone();
    let mut grad = vec![0.0; theta.dim()];
    let mut history = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for batch in cfg.batch.batches(pairs.len(), epoch) {
            let stats = evaluate(&theta, &prepared, &batch, cfg.beta, Some(&mut grad));
            let before = theta.clone();
            for (w, g) in theta.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
            if !stats.loss.is_finite() || theta.weights.iter().any(|w| !w.is_finite()) {
                return Err(DpoError::NonFiniteLoss {
                    epoch,
                    step,
                    last_finite: Box::new(before),
                });
            }
            history.push(stats);
            step += 1;
        }
    }
    Ok((theta, history))
}
