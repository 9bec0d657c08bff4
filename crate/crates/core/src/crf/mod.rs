//! Feature-based linear-chain CRF.
//!
//! Training maximises the conditional log-likelihood of whole tag sequences
//! with elastic-net regularisation,
//!
//! ```text
//! sum_s log P(y_s | x_s) - l1 * |w|_1 - l2 * |w|_2^2
//! ```
//!
//! using OWL-QN from zero weights. Gradients of the smooth part are exact
//! expected feature counts from forward-backward.

pub mod features;
pub mod inference;
pub mod objective;
pub mod owlqn;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Labeled, Observed, TagSet};
use features::{FeatureDictionary, FeatureVector};
use inference::Potentials;
use objective::{Instance, Layout};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("no training sentences")]
    EmptyTrainingSet,
    #[error("tag index {0} outside the tag set")]
    UnknownTag(usize),
    #[error("objective became non-finite at optimiser iteration {0}")]
    NonFinite(usize),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrfParams {
    #[serde(default = "default_reg")]
    pub l1: f64,
    #[serde(default = "default_reg")]
    pub l2: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_reg() -> f64 {
    0.1
}

fn default_max_iter() -> usize {
    100
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams { l1: default_reg(), l2: default_reg(), max_iter: default_max_iter() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub format_version: u32,
    pub tagset: TagSet,
    pub dictionary: FeatureDictionary,
    pub params: CrfParams,
    /// Flat weights; see [`Layout`].
    pub weights: Vec<f64>,
    pub optimizer_iterations: usize,
}

/// Trains a CRF on revealed sentences.
///
/// The optimiser is deterministic and starts from zero weights, so equal
/// inputs always give bit-identical models.
pub fn train_crf(data: &[Labeled], tagset: &TagSet, params: &CrfParams) -> Result<CrfModel, CrfError> {
    if data.is_empty() {
        return Err(CrfError::EmptyTrainingSet);
    }
    let c = tagset.len();
    if let Some(&bad) = data.iter().flat_map(|s| s.tags.iter()).find(|&&t| t >= c) {
        return Err(CrfError::UnknownTag(bad));
    }
    let dictionary = FeatureDictionary::build(data);
    let layout = Layout { features: dictionary.len(), tags: c };
    let instances: Vec<Instance> = data
        .iter()
        .map(|s| Instance { features: dictionary.encode(&s.obs), tags: s.tags.clone() })
        .collect();

    let l2 = params.l2;
    let smooth = |w: &[f64], g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let ll = objective::log_likelihood_and_gradient(&layout, w, &instances, g);
        let mut f = -ll;
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi = -*gi + 2.0 * l2 * wi;
            f += l2 * wi * wi;
        }
        f
    };
    let cfg = owlqn::OwlqnConfig { l1: params.l1, max_iter: params.max_iter, ..Default::default() };
    let min = owlqn::minimize(vec![0.0; layout.len()], smooth, &cfg)
        .map_err(|e| CrfError::NonFinite(e.iteration))?;

    Ok(CrfModel {
        format_version: MODEL_FORMAT_VERSION,
        tagset: tagset.clone(),
        dictionary,
        params: params.clone(),
        weights: min.x,
        optimizer_iterations: min.iterations,
    })
}

impl CrfModel {
    pub fn layout(&self) -> Layout {
        Layout { features: self.dictionary.len(), tags: self.tagset.len() }
    }

    pub fn encode(&self, obs: &Observed) -> Vec<FeatureVector> {
        self.dictionary.encode(obs)
    }

    pub fn potentials(&self, obs: &Observed) -> Potentials {
        self.layout().potentials(&self.weights, &self.encode(obs))
    }

    /// Best tag path and its unnormalised score.
    pub fn viterbi_decode(&self, obs: &Observed) -> (Vec<usize>, f64) {
        inference::viterbi(&self.potentials(obs))
    }

    pub fn log_partition(&self, obs: &Observed) -> f64 {
        inference::log_partition(&self.potentials(obs))
    }

    /// Best path together with its normalised log-probability (always `<= 0`).
    pub fn best_path(&self, obs: &Observed) -> (Vec<usize>, f64) {
        let p = self.potentials(obs);
        let (path, score) = inference::viterbi(&p);
        let lp = (score - inference::log_partition(&p)).min(0.0);
        (path, lp)
    }

    pub fn sequence_log_prob(&self, obs: &Observed) -> f64 {
        self.best_path(obs).1
    }

    /// Posterior tag marginals, one row per token.
    pub fn token_marginals(&self, obs: &Observed) -> Vec<Vec<f64>> {
        let c = self.tagset.len();
        let m = inference::forward_backward(&self.potentials(obs));
        m.unary.chunks(c).map(<[f64]>::to_vec).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), CrfError> {
        let json = serde_json::to_vec(self).map_err(|e| CrfError::Format(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CrfError> {
        let bytes = fs::read(path)?;
        let model: CrfModel = serde_json::from_slice(&bytes).map_err(|e| CrfError::Format(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(CrfError::Format(format!("unsupported version {}", model.format_version)));
        }
        if model.weights.len() != model.layout().len() {
            return Err(CrfError::Format("weight count does not match dictionary and tag set".into()));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Scheme, TagSet};

    fn sent(id: usize, words: &[&str], tags: &[usize]) -> Labeled {
        Labeled {
            obs: Observed { id, words: words.iter().map(|s| s.to_string()).collect(), pos: None },
            tags: tags.to_vec(),
        }
    }

    fn toy() -> (Vec<Labeled>, TagSet) {
        let ts = TagSet::new(["LOC", "PER"], Scheme::Iob2).unwrap();
        // O=0 B-LOC=1 I-LOC=2 B-PER=3 I-PER=4
        let data = vec![
            sent(0, &["john", "lives", "in", "paris"], &[3, 0, 0, 1]),
            sent(1, &["mary", "smith", "visited", "rome"], &[3, 4, 0, 1]),
            sent(2, &["rome", "is", "big"], &[1, 0, 0]),
            sent(3, &["john", "smith", "saw", "mary"], &[3, 4, 0, 3]),
            sent(4, &["new", "york", "and", "paris"], &[1, 2, 0, 1]),
        ];
        (data, ts)
    }

    #[test]
    fn fits_deterministic_data() {
        let (data, ts) = toy();
        let params = CrfParams { l1: 0.0, l2: 0.01, max_iter: 200 };
        let model = train_crf(&data, &ts, &params).unwrap();
        for s in &data {
            assert_eq!(model.viterbi_decode(&s.obs).0, s.tags);
            let lp = model.sequence_log_prob(&s.obs);
            assert!(lp <= 0.0 && lp > -1.0);
        }
        let again = train_crf(&data, &ts, &params).unwrap();
        assert_eq!(model.weights, again.weights);
    }

    #[test]
    fn heavy_l2_flattens_weights() {
        let (data, ts) = toy();
        let model = train_crf(&data, &ts, &CrfParams { l1: 0.0, l2: 1e6, max_iter: 100 }).unwrap();
        assert!(model.weights.iter().all(|w| w.abs() < 1e-3));
    }

    #[test]
    fn l1_produces_sparsity() {
        let (data, ts) = toy();
        let model = train_crf(&data, &ts, &CrfParams { l1: 1.0, l2: 0.0, max_iter: 100 }).unwrap();
        let zeros = model.weights.iter().filter(|&&w| w == 0.0).count();
        assert!(zeros > model.weights.len() / 2, "{zeros} of {}", model.weights.len());
    }

    #[test]
    fn marginals_rows_sum_to_one() {
        let (data, ts) = toy();
        let model = train_crf(&data, &ts, &CrfParams::default()).unwrap();
        let unseen = Observed { id: 9, words: vec!["zork".into(), "in".into(), "Quux".into()], pos: None };
        for row in model.token_marginals(&unseen) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let (data, ts) = toy();
        let model = train_crf(&data, &ts, &CrfParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crf.json");
        model.save(&path).unwrap();
        let back = CrfModel::load(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_bad_input() {
        let ts = TagSet::new(["PER"], Scheme::Iob2).unwrap();
        assert!(matches!(train_crf(&[], &ts, &CrfParams::default()), Err(CrfError::EmptyTrainingSet)));
        let bad = vec![sent(0, &["a"], &[7])];
        assert!(matches!(train_crf(&bad, &ts, &CrfParams::default()), Err(CrfError::UnknownTag(7))));
    }
}
