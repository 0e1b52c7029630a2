use super::checkpoint::{self, CheckpointError, ModelKind};
use super::{featurize, FeatureVector, FitConfig, PolicyError};
use crate::kernel::{ProofState, Tactic};

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Predicts a tactic's success score as `σ(w·φ(s,t))`, always in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRegressor {
    pub model_id: String,
    pub weights: Vec<f64>,
    pub fitted: bool,
}

#[derive(Debug, Clone)]
pub struct ScoreExample {
    pub features: FeatureVector,
    pub score: f64,
}

impl ScoreExample {
    pub fn new(state: &ProofState, tactic: &Tactic, score: f64, dim: usize) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(PolicyError::ScoreOutOfRange(score));
        }
        let next = state.apply(tactic)?;
        Ok(ScoreExample {
            features: featurize(state, tactic, &next, dim),
            score,
        })
    }
}

impl ScoreRegressor {
    /// Zero weights, not yet fitted.
    pub fn zeros(model_id: impl Into<String>, dim: usize) -> Self {
        ScoreRegressor {
            model_id: model_id.into(),
            weights: vec![0.0; dim],
            fitted: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_features(&self, f: &FeatureVector) -> f64 {
        sigmoid(f.dot(&self.weights))
    }

    pub fn predict(&self, state: &ProofState, tactic: &Tactic) -> Result<f64, PolicyError> {
        let next = state.apply(tactic)?;
        Ok(self.predict_features(&featurize(state, tactic, &next, self.dim())))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::encode(ModelKind::Regressor, &self.model_id, 1.0, self.fitted, &self.weights)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let raw = checkpoint::decode(bytes)?;
        if raw.kind != ModelKind::Regressor {
            return Err(CheckpointError::WrongKind);
        }
        Ok(ScoreRegressor {
            model_id: raw.model_id,
            weights: raw.weights,
            fitted: raw.fitted,
        })
    }
}

/// Mean squared error of the squashed output over `batch`, with gradient.
pub fn regressor_loss_and_grad(
    weights: &[f64],
    examples: &[ScoreExample],
    batch: &[usize],
    grad: Option<&mut [f64]>,
) -> f64 {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    let mut loss = 0.0;
    for &i in batch {
        let ex = &examples[i];
        let p = sigmoid(ex.features.dot(weights));
        let r = p - ex.score;
        loss += r * r;
        if let Some(g) = grad.as_deref_mut() {
            ex.features.add_scaled(g, scale * 2.0 * r * p * (1.0 - p));
        }
    }
    loss * scale
}

/// Fits (or continues fitting, when `init` is already trained) the score
/// regressor on `(state, tactic, score)` data.
///
/// Returns the model and the full-set loss before training and after each
/// epoch.
pub fn regressor_fit(
    init: &ScoreRegressor,
    data: &[(ProofState, Tactic, f64)],
    cfg: &FitConfig,
) -> Result<(ScoreRegressor, Vec<f64>), PolicyError> {
    let examples = data
        .iter()
        .map(|(s, t, y)| ScoreExample::new(s, t, *y, init.dim()))
        .collect::<Result<Vec<_>, _>>()?;
    regressor_fit_examples(init, &examples, cfg)
}

pub fn regressor_fit_examples(
    init: &ScoreRegressor,
    examples: &[ScoreExample],
    cfg: &FitConfig,
) -> Result<(ScoreRegressor, Vec<f64>), PolicyError> {
    if examples.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    if let Some(bad) = examples.iter().find(|e| !(0.0..=1.0).contains(&e.score)) {
        return Err(PolicyError::ScoreOutOfRange(bad.score));
    }
    let mut model = init.clone();
    let all: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; model.dim()];
    let mut history = vec![regressor_loss_and_grad(&model.weights, examples, &all, None)];
    for epoch in 0..cfg.epochs {
        for batch in cfg.batch.batches(examples.len(), epoch) {
            regressor_loss_and_grad(&model.weights, examples, &batch, Some(&mut grad));
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
        let loss = regressor_loss_and_grad(&model.weights, examples, &all, None);
        if !loss.is_finite() {
            return Err(PolicyError::NonFiniteLoss { epoch });
        }
        history.push(loss);
    }
    model.fitted = true;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::parse_equation;
    use crate::policy::{BatchMode, DEFAULT_FEATURE_DIM};
    use proptest::prelude::*;

    fn data(score: f64) -> Vec<(ProofState, Tactic, f64)> {
        let mut out = Vec::new();
        for eq in ["0 + a + b = b + a", "a * b + c = c + b * a", "S(a) + b = S(a + b)"] {
            let s = ProofState::single(parse_equation(eq).unwrap());
            for t in s.enumerate_tactics() {
                out.push((s.clone(), t, score));
            }
        }
        out
    }

    #[test]
    fn constant_target_is_learned() {
        let cfg = FitConfig {
            epochs: 3000,
            learning_rate: 2.0,
            batch: BatchMode::Full,
        };
        for c in [0.3, 0.85] {
            let d = data(c);
            let init = ScoreRegressor::zeros("g", DEFAULT_FEATURE_DIM);
            let (g, hist) = regressor_fit(&init, &d, &cfg).unwrap();
            assert!(g.fitted);
            assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-15));
            for (s, t, _) in &d {
                assert!((g.predict(s, t).unwrap() - c).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn out_of_range_scores_rejected() {
        let mut d = data(0.5);
        d[0].2 = 1.5;
        let init = ScoreRegressor::zeros("g", 32);
        let cfg = FitConfig {
            epochs: 1,
            learning_rate: 0.1,
            batch: BatchMode::Full,
        };
        assert_eq!(
            regressor_fit(&init, &d, &cfg).unwrap_err(),
            PolicyError::ScoreOutOfRange(1.5)
        );
        assert_eq!(
            regressor_fit(&init, &[], &cfg).unwrap_err(),
            PolicyError::EmptyDataset
        );
    }

    #[test]
    fn checkpoint_round_trip_keeps_fitted_flag() {
        let mut g = ScoreRegressor::zeros("g1", 8);
        g.weights[3] = -0.25;
        g.fitted = true;
        assert_eq!(ScoreRegressor::from_bytes(&g.to_bytes()).unwrap(), g);
    }

    proptest! {
        #[test]
        fn predictions_stay_in_unit_interval(
            weights in proptest::collection::vec(-50.0f64..50.0, DEFAULT_FEATURE_DIM),
        ) {
            let g = ScoreRegressor { model_id: "g".into(), weights, fitted: true };
            for (s, t, _) in data(0.0) {
                let p = g.predict(&s, &t).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
