//! Acquisition functions and token-budgeted batch selection.
//!
//! Every score is "higher means more informative". Sequence-level scores use
//! the best path's log-probability `lp`:
//!
//! ```text
//! LC   = 1 - exp(lp)
//! MNLP = -lp / n
//! ```
//!
//! Monte Carlo scores average a per-token quantity over the sentence. With
//! `M` passes and class probabilities `p[m][i][c]`:
//!
//! ```text
//! VR_i   = 1 - count(mode of argmax_c p[m][i]) / M
//! BALD_i = H(mean_m p[m][i]) - mean_m H(p[m][i])
//! ```
//!
//! Entropies are in nats with `0 ln 0 = 0`. All ties resolve to the lower
//! index.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Observed;
use crate::model::TrainedModel;
use crate::neural::{argmax, McConfig, McVariant, StochasticPredictions};
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("{strategy} needs a model with Monte Carlo dropout")]
    NeedsStochasticModel { strategy: Strategy },
    #[error("{strategy} needs an mc variant other than NONE")]
    NeedsMcVariant { strategy: Strategy },
    #[error("invalid mc configuration: {0}")]
    Mc(String),
    #[error("sentence {0} is not in the unlabeled pool")]
    NotInPool(usize),
    #[error("unknown strategy {0:?}")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    Random,
    Lc,
    Mnlp,
    Vr,
    Bald,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Random => "RANDOM",
            Strategy::Lc => "LC",
            Strategy::Mnlp => "MNLP",
            Strategy::Vr => "VR",
            Strategy::Bald => "BALD",
        }
    }

    pub fn needs_mc(&self) -> bool {
        matches!(self, Strategy::Vr | Strategy::Bald)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RANDOM" => Ok(Strategy::Random),
            "LC" => Ok(Strategy::Lc),
            "MNLP" => Ok(Strategy::Mnlp),
            "VR" => Ok(Strategy::Vr),
            "BALD" => Ok(Strategy::Bald),
            _ => Err(StrategyError::Unknown(s.to_string())),
        }
    }
}

/// Least confidence of the best path.
pub fn lc_score(seq_log_prob: f64, _n: usize) -> f64 {
    -seq_log_prob.min(0.0).exp_m1()
}

/// Negative length-normalised best-path log-probability.
pub fn mnlp_score(seq_log_prob: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    -seq_log_prob / n as f64
}

/// Mean per-token variation ratio.
pub fn vr_score(preds: &StochasticPredictions) -> f64 {
    let (m, n, c) = (preds.passes, preds.tokens, preds.classes);
    if n == 0 || m == 0 {
        return 0.0;
    }
    let mut votes = vec![0usize; c];
    // integer vote counts and one division keep the maximum at exactly (M-1)/M
    let mut dissent = 0usize;
    for i in 0..n {
        votes.iter_mut().for_each(|v| *v = 0);
        for pass in 0..m {
            votes[argmax(preds.row(pass, i)).0] += 1;
        }
        let mut mode = 0;
        for (k, &v) in votes.iter().enumerate() {
            if v > votes[mode] {
                mode = k;
            }
        }
        dissent += m - votes[mode];
    }
    dissent as f64 / (m * n) as f64
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Mean per-token mutual information between the prediction and the dropout mask.
pub fn bald_score(preds: &StochasticPredictions) -> f64 {
    let (m, n, c) = (preds.passes, preds.tokens, preds.classes);
    if n == 0 || m == 0 {
        return 0.0;
    }
    let mut mean = vec![0.0; c];
    let mut total = 0.0;
    for i in 0..n {
        // unanimous passes carry no information; skip the rounding of the mean
        if (1..m).all(|pass| preds.row(pass, i) == preds.row(0, i)) {
            continue;
        }
        mean.iter_mut().for_each(|v| *v = 0.0);
        let mut expected_h = 0.0;
        for pass in 0..m {
            let row = preds.row(pass, i);
            for (a, b) in mean.iter_mut().zip(row) {
                *a += b;
            }
            expected_h += entropy(row);
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        total += (entropy(&mean) - expected_h / m as f64).max(0.0);
    }
    total / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScore {
    pub sentence_id: usize,
    pub score: f64,
    pub strategy: Strategy,
    pub mc_variant: McVariant,
}

/// Scores for a pool plus inference cost counters.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolScores {
    pub scores: Vec<AcquisitionScore>,
    /// Lower-layer evaluations summed over the pool (Monte Carlo strategies only).
    pub lower_layer_passes: usize,
}

/// Labeled / unlabeled partition of a training pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    labeled: BTreeSet<usize>,
    unlabeled: BTreeSet<usize>,
    lengths: Vec<usize>,
    labeled_tokens: usize,
    total_tokens: usize,
}

impl PoolState {
    /// Everything unlabeled; `lengths[id]` is the token count of sentence `id`.
    pub fn new(lengths: Vec<usize>) -> Self {
        PoolState {
            labeled: BTreeSet::new(),
            unlabeled: (0..lengths.len()).collect(),
            labeled_tokens: 0,
            total_tokens: lengths.iter().sum(),
            lengths,
        }
    }

    pub fn labeled(&self) -> &BTreeSet<usize> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    pub fn labeled_tokens(&self) -> usize {
        self.labeled_tokens
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    pub fn length(&self, id: usize) -> usize {
        self.lengths[id]
    }

    pub fn is_exhausted(&self) -> bool {
        self.unlabeled.is_empty()
    }

    /// Moves sentences from the unlabeled to the labeled set.
    pub fn reveal(&mut self, ids: &[usize]) -> Result<(), StrategyError> {
        if let Some(&bad) = ids.iter().find(|id| !self.unlabeled.contains(id)) {
            return Err(StrategyError::NotInPool(bad));
        }
        for &id in ids {
            self.unlabeled.remove(&id);
            self.labeled.insert(id);
            self.labeled_tokens += self.lengths[id];
        }
        Ok(())
    }
}

/// Scores every sentence of `pool` under `strategy`.
///
/// Sentences are scored in parallel; Monte Carlo passes draw from sub-streams
/// keyed by `(seed, sentence id, pass)`, so the result does not depend on
/// scheduling.
pub fn score_pool(
    model: &TrainedModel,
    pool: &[Observed],
    strategy: Strategy,
    mc: &McConfig,
    seed: u64,
) -> Result<PoolScores, StrategyError> {
    let variant = mc.variant;
    let make = |sentence_id, score| AcquisitionScore { sentence_id, score, strategy, mc_variant: variant };
    match strategy {
        Strategy::Random => {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.shuffle(&mut seed::rng(seed, &[pool.len() as u64]));
            let k = pool.len() as f64;
            let scores = order.iter().enumerate().map(|(rank, &i)| make(pool[i].id, k - rank as f64)).collect();
            let mut scores: Vec<AcquisitionScore> = scores;
            scores.sort_by_key(|s| s.sentence_id);
            Ok(PoolScores { scores, lower_layer_passes: 0 })
        }
        Strategy::Lc | Strategy::Mnlp => {
            let scores = pool
                .par_iter()
                .map(|obs| {
                    let (_, lp) = model.best_path(obs);
                    let s = if strategy == Strategy::Lc { lc_score(lp, obs.len()) } else { mnlp_score(lp, obs.len()) };
                    make(obs.id, s)
                })
                .collect();
            Ok(PoolScores { scores, lower_layer_passes: 0 })
        }
        Strategy::Vr | Strategy::Bald => {
            if variant == McVariant::None {
                return Err(StrategyError::NeedsMcVariant { strategy });
            }
            mc.validate().map_err(StrategyError::Mc)?;
            if !matches!(model, TrainedModel::Neural(_)) {
                return Err(StrategyError::NeedsStochasticModel { strategy });
            }
            let scored: Vec<(AcquisitionScore, usize)> = pool
                .par_iter()
                .map(|obs| {
                    let preds = model.predict_stochastic(obs, mc, seed).expect("neural model");
                    let s = if strategy == Strategy::Vr { vr_score(&preds) } else { bald_score(&preds) };
                    (make(obs.id, s), preds.lower_passes)
                })
                .collect();
            let lower_layer_passes = scored.iter().map(|(_, p)| p).sum();
            Ok(PoolScores { scores: scored.into_iter().map(|(s, _)| s).collect(), lower_layer_passes })
        }
    }
}

/// Greedy take-until-budget selection over the unlabeled pool.
///
/// Sentences are ranked by score (descending, ties to the lower id) and taken
/// until their token total reaches `token_budget`; the last one may overshoot.
pub fn select_batch(scores: &[AcquisitionScore], pool: &PoolState, token_budget: usize) -> Vec<usize> {
    if token_budget == 0 {
        return Vec::new();
    }
    let mut ranked: Vec<&AcquisitionScore> =
        scores.iter().filter(|s| pool.unlabeled.contains(&s.sentence_id)).collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.sentence_id.cmp(&b.sentence_id)));
    let mut taken = 0;
    let mut out = Vec::new();
    for s in ranked {
        if taken >= token_budget {
            break;
        }
        out.push(s.sentence_id);
        taken += pool.lengths[s.sentence_id];
    }
    out
}

/// Writes `sentence_id,score,strategy,mc_variant` rows.
pub fn write_scores_csv<W: Write>(scores: &[AcquisitionScore], mut w: W) -> io::Result<()> {
    writeln!(w, "sentence_id,score,strategy,mc_variant")?;
    for s in scores {
        writeln!(w, "{},{},{},{}", s.sentence_id, s.score, s.strategy, s.mc_variant.as_str())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, Strategy as _};

    fn score(id: usize, s: f64) -> AcquisitionScore {
        AcquisitionScore { sentence_id: id, score: s, strategy: Strategy::Mnlp, mc_variant: McVariant::None }
    }

    fn one_hot(c: usize, k: usize) -> Vec<f64> {
        (0..c).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn lc_examples() {
        assert_eq!(lc_score(0.0, 3), 0.0);
        assert!((lc_score(0.5f64.ln(), 3) - 0.5).abs() < 1e-15);
        let s = lc_score(-50.0, 3);
        assert!(s.is_finite() && (s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mnlp_examples() {
        assert_eq!(mnlp_score(-2.0, 4), 0.5);
        assert_eq!(mnlp_score(0.0, 4), 0.0);
        let per_token = -0.3;
        assert!((mnlp_score(5.0 * per_token, 5) - mnlp_score(50.0 * per_token, 50)).abs() < 1e-12);
        assert!(lc_score(50.0 * per_token, 50) > lc_score(5.0 * per_token, 5));
    }

    #[test]
    fn vr_examples() {
        let rows: Vec<Vec<Vec<f64>>> =
            (0..10).map(|m| vec![one_hot(3, if m < 7 { 1 } else { 2 })]).collect();
        assert!((vr_score(&StochasticPredictions::from_nested(&rows)) - 0.3).abs() < 1e-15);
        let same: Vec<Vec<Vec<f64>>> = (0..5).map(|_| vec![vec![0.2, 0.8], vec![0.6, 0.4]]).collect();
        assert_eq!(vr_score(&StochasticPredictions::from_nested(&same)), 0.0);
        let tie: Vec<Vec<Vec<f64>>> = [0, 0, 1, 1].iter().map(|&k| vec![one_hot(2, k)]).collect();
        assert_eq!(vr_score(&StochasticPredictions::from_nested(&tie)), 0.5);
    }

    #[test]
    fn bald_examples() {
        let same: Vec<Vec<Vec<f64>>> = (0..4).map(|_| vec![vec![0.3, 0.7]]).collect();
        assert_eq!(bald_score(&StochasticPredictions::from_nested(&same)), 0.0);
        let split = vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]];
        assert!((bald_score(&StochasticPredictions::from_nested(&split)) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn select_examples() {
        let mut pool = PoolState::new(vec![6, 5, 4, 3]);
        let scores = vec![score(0, 0.9), score(1, 0.8), score(2, 0.7), score(3, 0.1)];
        assert_eq!(select_batch(&scores, &pool, 10), vec![0, 1]);
        assert!(select_batch(&scores, &pool, 0).is_empty());
        let flat: Vec<_> = (0..4).map(|i| score(i, 1.0)).collect();
        assert_eq!(select_batch(&flat, &pool, 7), vec![0, 1]);
        pool.reveal(&[0]).unwrap();
        assert_eq!(select_batch(&flat, &pool, 7), vec![1, 2]);
        assert_eq!(pool.reveal(&[0]), Err(StrategyError::NotInPool(0)));
        assert_eq!(select_batch(&flat, &pool, 1000), vec![1, 2, 3]);
    }

    #[test]
    fn scores_csv() {
        let mut buf = Vec::new();
        write_scores_csv(&[score(3, 0.25)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sentence_id,score,strategy,mc_variant\n3,0.25,MNLP,NONE\n");
    }

    fn tensor(max_m: usize, max_n: usize, max_c: usize) -> impl proptest::strategy::Strategy<Value = Vec<Vec<Vec<f64>>>> {
        (2..=max_m, 1..=max_n, 2..=max_c).prop_flat_map(|(m, n, c)| {
            proptest::collection::vec(
                proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, c), n),
                m,
            )
            .prop_map(|t| {
                t.into_iter()
                    .map(|pass| {
                        pass.into_iter()
                            .map(|row| {
                                let s: f64 = row.iter().sum::<f64>() + 1e-12;
                                row.iter().map(|x| (x + 1e-12 / row.len() as f64) / s).collect()
                            })
                            .collect()
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn bounds_hold(t in tensor(8, 6, 5)) {
            let p = StochasticPredictions::from_nested(&t);
            let m = p.passes as f64;
            let vr = vr_score(&p);
            let bald = bald_score(&p);
            prop_assert!(vr >= 0.0 && vr <= (m - 1.0) / m);
            prop_assert!(bald >= 0.0 && bald <= (p.classes as f64).ln() + 1e-12);
        }

        #[test]
        fn class_permutation_invariance(t in tensor(6, 4, 4), rot in 0usize..4) {
            let p = StochasticPredictions::from_nested(&t);
            let c = p.classes;
            // rotate the class indices
            let permuted: Vec<Vec<Vec<f64>>> = t.iter().map(|pass| pass.iter().map(|row| {
                (0..c).map(|k| row[(k + rot) % c]).collect()
            }).collect()).collect();
            let q = StochasticPredictions::from_nested(&permuted);
            prop_assert!((bald_score(&p) - bald_score(&q)).abs() < 1e-12);
            // VR is invariant whenever no argmax or vote ties occur; random reals make that almost sure
            prop_assert!((vr_score(&p) - vr_score(&q)).abs() < 1e-12 || has_vote_tie(&p));
        }

        #[test]
        fn lc_mnlp_rank_equivalent(lps in proptest::collection::vec(-30.0f64..0.0, 2..20), n in 1usize..40) {
            for a in &lps {
                for b in &lps {
                    let lc = lc_score(*a, n).partial_cmp(&lc_score(*b, n)).unwrap();
                    let mn = mnlp_score(*a, n).partial_cmp(&mnlp_score(*b, n)).unwrap();
                    // exp_m1 saturates to 1.0 for very negative inputs; the order never inverts
                    prop_assert!(lc == mn || lc == std::cmp::Ordering::Equal);
                }
            }
        }

        #[test]
        fn selection_meets_budget(lengths in proptest::collection::vec(1usize..30, 1..40), budget in 0usize..400, seed in any::<u64>()) {
            let pool = PoolState::new(lengths.clone());
            let mut rng = seed::rng(seed, &[]);
            let mut ids: Vec<usize> = (0..lengths.len()).collect();
            ids.shuffle(&mut rng);
            let scores: Vec<_> = ids.iter().enumerate().map(|(r, &i)| score(i, (r % 5) as f64)).collect();
            let picked = select_batch(&scores, &pool, budget);
            prop_assert_eq!(&picked, &select_batch(&scores, &pool, budget));
            let total: usize = picked.iter().map(|&i| lengths[i]).sum();
            let all: usize = lengths.iter().sum();
            prop_assert!(total >= budget.min(all));
            let set: BTreeSet<_> = picked.iter().collect();
            prop_assert_eq!(set.len(), picked.len());
        }
    }

    fn has_vote_tie(p: &StochasticPredictions) -> bool {
        (0..p.tokens).any(|i| {
            let mut votes = vec![0; p.classes];
            for m in 0..p.passes {
                votes[argmax(p.row(m, i)).0] += 1;
            }
            let top = *votes.iter().max().unwrap();
            votes.iter().filter(|&&v| v == top).count() > 1
        })
    }
}
