//! Uniform handle over the two tagger families.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Labeled, Observed, TagSet};
use crate::crf::{train_crf, CrfError, CrfModel, CrfParams};
use crate::neural::{train_neural, McConfig, NeuralError, NeuralModel, NeuralParams, StochasticPredictions};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("crf: {0}")]
    Crf(#[from] CrfError),
    #[error("neural: {0}")]
    Neural(#[from] NeuralError),
}

/// Model family plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Crf(CrfParams),
    Neural(NeuralParams),
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Crf(CrfParams::default())
    }
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Crf(_) => "crf",
            ModelSpec::Neural(_) => "neural",
        }
    }

    /// Whether the model can produce Monte Carlo predictions.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, ModelSpec::Neural(_))
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            ModelSpec::Crf(p) => {
                if !(p.l1 >= 0.0 && p.l2 >= 0.0 && p.l1.is_finite() && p.l2.is_finite()) {
                    return Err("crf l1 and l2 must be finite and non-negative".into());
                }
                Ok(())
            }
            ModelSpec::Neural(p) => p.validate().map_err(|e| e.to_string()),
        }
    }

    /// Trains a fresh model. `dev` is only consulted by the neural tagger when
    /// best-epoch selection is enabled; the CRF ignores `seed`.
    pub fn train(&self, train: &[Labeled], dev: &[Labeled], tagset: &TagSet, seed: u64) -> Result<TrainedModel, ModelError> {
        Ok(match self {
            ModelSpec::Crf(p) => TrainedModel::Crf(train_crf(train, tagset, p)?),
            ModelSpec::Neural(p) => TrainedModel::Neural(train_neural(train, dev, tagset, p, seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Crf(CrfModel),
    Neural(NeuralModel),
}

impl TrainedModel {
    /// Most likely tag sequence and its log-probability (`<= 0`).
    ///
    /// For the CRF this is the Viterbi path under the sequence distribution;
    /// for the per-token neural tagger it is the per-token argmax.
    pub fn best_path(&self, obs: &Observed) -> (Vec<usize>, f64) {
        match self {
            TrainedModel::Crf(m) => m.best_path(obs),
            TrainedModel::Neural(m) => m.best_path(obs),
        }
    }

    pub fn predict(&self, obs: &Observed) -> Vec<usize> {
        self.best_path(obs).0
    }

    pub fn tagset(&self) -> &TagSet {
        match self {
            TrainedModel::Crf(m) => &m.tagset,
            TrainedModel::Neural(m) => &m.tagset,
        }
    }

    /// Monte Carlo predictions, or `None` for models without dropout.
    pub fn predict_stochastic(&self, obs: &Observed, mc: &McConfig, seed: u64) -> Option<StochasticPredictions> {
        match self {
            TrainedModel::Crf(_) => None,
            TrainedModel::Neural(m) => Some(m.predict_stochastic(obs, mc, seed)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_shape() {
        let spec: ModelSpec = serde_json::from_str(r#"{"kind":"crf","l1":0.2}"#).unwrap();
        assert_eq!(spec, ModelSpec::Crf(CrfParams { l1: 0.2, ..Default::default() }));
        let spec: ModelSpec = serde_json::from_str(r#"{"kind":"neural","epochs":3}"#).unwrap();
        match &spec {
            ModelSpec::Neural(p) => assert_eq!(p.epochs, 3),
            _ => panic!(),
        }
        let back: ModelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"crf","l3":1}"#).is_err());
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"svm"}"#).is_err());
    }
}
