//! Windowed per-token neural tagger with Monte Carlo dropout.
//!
//! Each token is the sum of hashed feature embeddings (lowercased form,
//! suffixes, capitalisation shape). A window of `2w + 1` token vectors feeds a
//! tanh hidden layer and a softmax output layer:
//!
//! ```text
//! e_j = word_j * sum_f E[f]              word dropout: whole token vectors
//! z_j = e_j (.) locked                   locked dropout: one mask per sentence
//! a_i = tanh(W1^T [z_{i-w} .. z_{i+w}] + b1)
//! p_i = softmax(W2^T (a_i (.) last_i) + b2)   last dropout: per token
//! ```
//!
//! All three sites use inverted scaling, so a kept unit is multiplied by
//! `1 / (1 - p)`. Monte Carlo inference makes only the sites selected by the
//! [`McVariant`] stochastic; with [`McVariant::Last`] the hidden layer is
//! computed once and only the output layer is re-sampled.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Labeled, Observed, TagSet};
use crate::crf::features::{is_digit, suffix, CapClass};
use crate::metrics::span_f1;
use crate::seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("no training sentences")]
    EmptyTrainingSet,
    #[error("invalid hyperparameter: {0}")]
    Config(String),
    #[error("tag index {0} outside the tag set")]
    UnknownTag(usize),
    #[error("training loss became non-finite in epoch {0}")]
    NonFinite(usize),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutRates {
    pub word: f64,
    pub locked: f64,
    pub last: f64,
}

impl Default for DropoutRates {
    fn default() -> Self {
        DropoutRates { word: 0.05, locked: 0.5, last: 0.5 }
    }
}

impl DropoutRates {
    pub const NONE: DropoutRates = DropoutRates { word: 0.0, locked: 0.0, last: 0.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuralParams {
    pub hash_buckets: usize,
    pub embedding_dim: usize,
    pub hidden: usize,
    pub window: usize,
    pub dropout: DropoutRates,
    pub epochs: usize,
    pub base_batch: usize,
    pub learning_rate: f64,
    /// Keep the parameters of the epoch with the best development-set span F1.
    pub best_epoch_on_dev: bool,
}

impl Default for NeuralParams {
    fn default() -> Self {
        NeuralParams {
            hash_buckets: 1 << 15,
            embedding_dim: 32,
            hidden: 64,
            window: 1,
            dropout: DropoutRates::default(),
            epochs: 30,
            base_batch: 16,
            learning_rate: 0.1,
            best_epoch_on_dev: false,
        }
    }
}

impl NeuralParams {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::Config(m.to_string()));
        if self.hash_buckets == 0 || self.embedding_dim == 0 || self.hidden == 0 {
            return bad("hash_buckets, embedding_dim and hidden must be positive");
        }
        if self.base_batch == 0 {
            return bad("base_batch must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        for (name, p) in [("word", self.dropout.word), ("locked", self.dropout.locked), ("last", self.dropout.last)] {
            if !(0.0..1.0).contains(&p) {
                return Err(NeuralError::Config(format!("dropout.{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Mini-batch size: `base` when that gives at least 50 batches per epoch,
/// otherwise `max(4, examples / 50)`.
pub fn effective_batch(examples: usize, base: usize) -> usize {
    if examples.div_ceil(base) >= 50 {
        base
    } else {
        (examples / 50).max(4)
    }
}

/// Which dropout sites are stochastic at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum McVariant {
    #[serde(rename = "NONE")]
    None,
    #[serde(rename = "MC_WORD")]
    Word,
    #[serde(rename = "MC_LOCKED")]
    Locked,
    #[serde(rename = "MC_LAST")]
    Last,
    #[serde(rename = "MC_ALL")]
    All,
}

impl McVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            McVariant::None => "NONE",
            McVariant::Word => "MC_WORD",
            McVariant::Locked => "MC_LOCKED",
            McVariant::Last => "MC_LAST",
            McVariant::All => "MC_ALL",
        }
    }

    fn sites(&self) -> (bool, bool, bool) {
        match self {
            McVariant::None => (false, false, false),
            McVariant::Word => (true, false, false),
            McVariant::Locked => (false, true, false),
            McVariant::Last => (false, false, true),
            McVariant::All => (true, true, true),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub variant: McVariant,
    pub passes: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { variant: McVariant::None, passes: 10 }
    }
}

impl McConfig {
    pub fn new(variant: McVariant, passes: usize) -> Self {
        McConfig { variant, passes }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.variant != McVariant::None && self.passes < 2 {
            return Err(format!("mc.passes must be at least 2 for {}, got {}", self.variant.as_str(), self.passes));
        }
        Ok(())
    }
}

/// `M x n x C` class probabilities from stochastic forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPredictions {
    pub passes: usize,
    pub tokens: usize,
    pub classes: usize,
    probs: Vec<f64>,
    /// Number of lower-layer (embedding + hidden) evaluations performed.
    pub lower_passes: usize,
}

impl StochasticPredictions {
    /// Builds a tensor from `[pass][token][class]` rows.
    pub fn from_nested(rows: &[Vec<Vec<f64>>]) -> Self {
        let passes = rows.len();
        let tokens = rows.first().map_or(0, Vec::len);
        let classes = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(passes * tokens * classes);
        for pass in rows {
            assert_eq!(pass.len(), tokens, "ragged tensor");
            for row in pass {
                assert_eq!(row.len(), classes, "ragged tensor");
                probs.extend_from_slice(row);
            }
        }
        StochasticPredictions { passes, tokens, classes, probs, lower_passes: 0 }
    }

    #[inline]
    pub fn row(&self, pass: usize, token: usize) -> &[f64] {
        let start = (pass * self.tokens + token) * self.classes;
        &self.probs[start..start + self.classes]
    }

    #[inline]
    pub fn get(&self, pass: usize, token: usize, class: usize) -> f64 {
        self.row(pass, token)[class]
    }
}

/// Dropout masks of one forward pass; `None` leaves a site deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Masks {
    /// One factor per token.
    pub word: Option<Vec<f64>>,
    /// One factor per embedding dimension, shared by every position.
    pub locked: Option<Vec<f64>>,
    /// `n x hidden` factors.
    pub last: Option<Vec<f64>>,
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else `1 / (1 - p)`.
pub fn dropout_mask(rng: &mut ChaCha8Rng, len: usize, p: f64) -> Vec<f64> {
    if p <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn token_keys(word: &str) -> [String; 5] {
    let lower = word.to_lowercase();
    [
        format!("w:{lower}"),
        format!("s3:{}", suffix(&lower, 3)),
        format!("s2:{}", suffix(&lower, 2)),
        format!("c:{}", CapClass::of(word).as_str()),
        format!("d:{}", is_digit(word) as u8),
    ]
}

/// Hashed feature buckets per padded position (`n + 2w` rows).
#[derive(Debug, Clone)]
pub struct Encoded {
    n: usize,
    feats: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    buckets: usize,
    dim: usize,
    window: usize,
    hidden: usize,
    classes: usize,
}

impl Shape {
    fn span(&self) -> usize {
        2 * self.window + 1
    }
    fn input(&self) -> usize {
        self.span() * self.dim
    }
    fn w1(&self) -> usize {
        self.buckets * self.dim
    }
    fn b1(&self) -> usize {
        self.w1() + self.input() * self.hidden
    }
    fn w2(&self) -> usize {
        self.b1() + self.hidden
    }
    fn b2(&self) -> usize {
        self.w2() + self.hidden * self.classes
    }
    fn len(&self) -> usize {
        self.b2() + self.classes
    }
}

/// Sparse gradient: touched embedding rows plus the dense layers.
#[derive(Debug, Clone)]
pub struct Gradient {
    emb: HashMap<u32, Vec<f64>>,
    dense: Vec<f64>,
}

struct Lower {
    /// Window inputs, `n x input`.
    x: Vec<f64>,
    /// Hidden activations before last-layer dropout, `n x hidden`.
    a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralModel {
    pub format_version: u32,
    pub tagset: TagSet,
    pub params: NeuralParams,
    weights: Vec<f64>,
}

impl NeuralModel {
    /// Freshly initialised (untrained) model.
    pub fn init(tagset: &TagSet, params: &NeuralParams, seed: u64) -> Result<Self, NeuralError> {
        params.validate()?;
        let mut model = NeuralModel {
            format_version: MODEL_FORMAT_VERSION,
            tagset: tagset.clone(),
            params: params.clone(),
            weights: Vec::new(),
        };
        let sh = model.shape();
        let mut rng = seed::rng(seed, &[0x1417]);
        let mut w = vec![0.0; sh.len()];
        for v in &mut w[..sh.w1()] {
            *v = rng.gen_range(-0.1..0.1);
        }
        let r1 = (6.0 / (sh.input() + sh.hidden) as f64).sqrt();
        for v in &mut w[sh.w1()..sh.b1()] {
            *v = rng.gen_range(-r1..r1);
        }
        let r2 = (6.0 / (sh.hidden + sh.classes) as f64).sqrt();
        for v in &mut w[sh.w2()..sh.b2()] {
            *v = rng.gen_range(-r2..r2);
        }
        model.weights = w;
        Ok(model)
    }

    fn shape(&self) -> Shape {
        Shape {
            buckets: self.params.hash_buckets,
            dim: self.params.embedding_dim,
            window: self.params.window,
            hidden: self.params.hidden,
            classes: self.tagset.len(),
        }
    }

    pub fn parameters(&self) -> &[f64] {
        &self.weights
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Zeroes the output layer, making every prediction uniform.
    pub fn zero_output_layer(&mut self) {
        let sh = self.shape();
        self.weights[sh.w2()..].iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn encode(&self, obs: &Observed) -> Encoded {
        let buckets = self.params.hash_buckets as u64;
        let w = self.params.window;
        let hash = |k: &str| (fnv1a(k.as_bytes()) % buckets) as u32;
        let mut feats = Vec::with_capacity(obs.len() + 2 * w);
        feats.extend((0..w).map(|_| vec![hash("<pad-left>")]));
        feats.extend(obs.words.iter().map(|word| token_keys(word).iter().map(|k| hash(k)).collect()));
        feats.extend((0..w).map(|_| vec![hash("<pad-right>")]));
        Encoded { n: obs.len(), feats }
    }

    /// Samples masks for the sites enabled in `sites` = (word, locked, last).
    pub fn sample_masks(&self, n: usize, sites: (bool, bool, bool), rng: &mut ChaCha8Rng) -> Masks {
        let d = &self.params.dropout;
        Masks {
            word: sites.0.then(|| dropout_mask(rng, n, d.word)),
            locked: sites.1.then(|| dropout_mask(rng, self.params.embedding_dim, d.locked)),
            last: sites.2.then(|| dropout_mask(rng, n * self.params.hidden, d.last)),
        }
    }

    /// Token vectors after word and locked dropout, one per real position.
    pub fn masked_inputs(&self, obs: &Observed, masks: &Masks) -> Vec<Vec<f64>> {
        let enc = self.encode(obs);
        let w = self.params.window;
        let dim = self.params.embedding_dim;
        let z = self.token_vectors(&enc, masks);
        (0..enc.n).map(|i| z[(i + w) * dim..(i + w + 1) * dim].to_vec()).collect()
    }

    fn token_vectors(&self, enc: &Encoded, masks: &Masks) -> Vec<f64> {
        let sh = self.shape();
        let w = sh.window;
        let mut z = vec![0.0; enc.feats.len() * sh.dim];
        for (p, fs) in enc.feats.iter().enumerate() {
            let zp = &mut z[p * sh.dim..(p + 1) * sh.dim];
            for &f in fs {
                let row = &self.weights[f as usize * sh.dim..(f as usize + 1) * sh.dim];
                for (a, b) in zp.iter_mut().zip(row) {
                    *a += b;
                }
            }
            let word = match &masks.word {
                Some(m) if p >= w && p < w + enc.n => m[p - w],
                _ => 1.0,
            };
            match &masks.locked {
                Some(l) => zp.iter_mut().zip(l).for_each(|(a, m)| *a *= word * m),
                None if word != 1.0 => zp.iter_mut().for_each(|a| *a *= word),
                None => {}
            }
        }
        z
    }

    fn lower(&self, enc: &Encoded, masks: &Masks) -> Lower {
        let sh = self.shape();
        let (n, input, h) = (enc.n, sh.input(), sh.hidden);
        let z = self.token_vectors(enc, masks);
        let mut x = vec![0.0; n * input];
        for i in 0..n {
            x[i * input..(i + 1) * input].copy_from_slice(&z[i * sh.dim..i * sh.dim + input]);
        }
        let w1 = &self.weights[sh.w1()..sh.b1()];
        let b1 = &self.weights[sh.b1()..sh.w2()];
        let mut a = vec![0.0; n * h];
        for i in 0..n {
            let ai = &mut a[i * h..(i + 1) * h];
            ai.copy_from_slice(b1);
            for (j, &xj) in x[i * input..(i + 1) * input].iter().enumerate() {
                if xj == 0.0 {
                    continue;
                }
                let row = &w1[j * h..(j + 1) * h];
                for (acc, wv) in ai.iter_mut().zip(row) {
                    *acc += xj * wv;
                }
            }
            ai.iter_mut().for_each(|v| *v = v.tanh());
        }
        Lower { x, a }
    }

    /// Output distribution of token `i` given its hidden activations.
    fn upper(&self, a: &[f64], last: Option<&[f64]>, out: &mut [f64]) {
        let sh = self.shape();
        let (h, c) = (sh.hidden, sh.classes);
        let w2 = &self.weights[sh.w2()..sh.b2()];
        out.copy_from_slice(&self.weights[sh.b2()..]);
        for k in 0..h {
            let ak = a[k] * last.map_or(1.0, |m| m[k]);
            if ak == 0.0 {
                continue;
            }
            for (o, wv) in out.iter_mut().zip(&w2[k * c..(k + 1) * c]) {
                *o += ak * wv;
            }
        }
        softmax(out);
    }

    /// Per-token class distributions with dropout disabled.
    pub fn predict_deterministic(&self, obs: &Observed) -> Vec<Vec<f64>> {
        let enc = self.encode(obs);
        let lower = self.lower(&enc, &Masks::default());
        let (h, c) = (self.params.hidden, self.tagset.len());
        (0..enc.n)
            .map(|i| {
                let mut out = vec![0.0; c];
                self.upper(&lower.a[i * h..(i + 1) * h], None, &mut out);
                out
            })
            .collect()
    }

    /// `M` stochastic passes with the dropout sites chosen by `mc.variant`.
    ///
    /// Pass `m` draws its masks from a sub-stream of `(seed, sentence id, m)`,
    /// so results do not depend on evaluation order.
    pub fn predict_stochastic(&self, obs: &Observed, mc: &McConfig, seed: u64) -> StochasticPredictions {
        let enc = self.encode(obs);
        let (n, h, c) = (enc.n, self.params.hidden, self.tagset.len());
        let sites = mc.variant.sites();
        let mut probs = vec![0.0; mc.passes * n * c];
        let mut lower_passes = 0;
        let cached = if mc.variant == McVariant::Last {
            lower_passes += 1;
            Some(self.lower(&enc, &Masks::default()))
        } else {
            None
        };
        for m in 0..mc.passes {
            let mut rng = seed::rng(seed, &[obs.id as u64, m as u64]);
            let masks = self.sample_masks(n, sites, &mut rng);
            let fresh;
            let lower = match &cached {
                Some(l) => l,
                None => {
                    lower_passes += 1;
                    fresh = self.lower(&enc, &masks);
                    &fresh
                }
            };
            for i in 0..n {
                let last = masks.last.as_ref().map(|v| &v[i * h..(i + 1) * h]);
                let start = (m * n + i) * c;
                self.upper(&lower.a[i * h..(i + 1) * h], last, &mut probs[start..start + c]);
            }
        }
        StochasticPredictions { passes: mc.passes, tokens: n, classes: c, probs, lower_passes }
    }

    /// Per-token argmax path (ties to the lower tag) and its log-probability.
    pub fn best_path(&self, obs: &Observed) -> (Vec<usize>, f64) {
        let mut lp = 0.0;
        let path = self
            .predict_deterministic(obs)
            .iter()
            .map(|row| {
                let (arg, p) = argmax(row);
                lp += p.ln();
                arg
            })
            .collect();
        (path, lp.min(0.0))
    }

    /// Accumulates the gradient of the summed token cross-entropy, scaled by
    /// `scale`, and returns the scaled loss.
    fn backprop(&self, enc: &Encoded, tags: &[usize], masks: &Masks, scale: f64, grad: &mut Gradient) -> f64 {
        let sh = self.shape();
        let (n, input, h, c, dim) = (enc.n, sh.input(), sh.hidden, sh.classes, sh.dim);
        let lower = self.lower(enc, masks);
        let w1 = &self.weights[sh.w1()..sh.b1()];
        let w2 = &self.weights[sh.w2()..sh.b2()];
        let off = sh.w1();
        let mut loss = 0.0;
        let mut probs = vec![0.0; c];
        let mut a_drop = vec![0.0; h];
        let mut d_pre = vec![0.0; h];
        let mut dz = vec![0.0; enc.feats.len() * dim];
        for i in 0..n {
            let a = &lower.a[i * h..(i + 1) * h];
            let last = masks.last.as_ref().map(|v| &v[i * h..(i + 1) * h]);
            for k in 0..h {
                a_drop[k] = a[k] * last.map_or(1.0, |m| m[k]);
            }
            self.upper(a, last, &mut probs);
            loss -= probs[tags[i]].max(f64::MIN_POSITIVE).ln() * scale;
            probs[tags[i]] -= 1.0;
            probs.iter_mut().for_each(|v| *v *= scale);
            let d_out = &probs;

            for (k, &ak) in a_drop.iter().enumerate() {
                let g = &mut grad.dense[sh.w2() - off + k * c..sh.w2() - off + (k + 1) * c];
                for (gv, dv) in g.iter_mut().zip(d_out) {
                    *gv += ak * dv;
                }
            }
            for (gv, dv) in grad.dense[sh.b2() - off..].iter_mut().zip(d_out) {
                *gv += dv;
            }
            for k in 0..h {
                let back: f64 = w2[k * c..(k + 1) * c].iter().zip(d_out).map(|(w, d)| w * d).sum();
                d_pre[k] = back * last.map_or(1.0, |m| m[k]) * (1.0 - a[k] * a[k]);
            }
            let xi = &lower.x[i * input..(i + 1) * input];
            for (j, &xj) in xi.iter().enumerate() {
                let row = &w1[j * h..(j + 1) * h];
                let mut dx = 0.0;
                let gbase = j * h;
                for k in 0..h {
                    if xj != 0.0 {
                        grad.dense[gbase + k] += xj * d_pre[k];
                    }
                    dx += row[k] * d_pre[k];
                }
                dz[i * dim + j] += dx;
            }
            for (gv, dv) in grad.dense[sh.b1() - off..sh.w2() - off].iter_mut().zip(&d_pre) {
                *gv += dv;
            }
        }
        let w = sh.window;
        for (p, fs) in enc.feats.iter().enumerate() {
            let word = match &masks.word {
                Some(m) if p >= w && p < w + n => m[p - w],
                _ => 1.0,
            };
            if word == 0.0 {
                continue;
            }
            let de: Vec<f64> = (0..dim)
                .map(|k| dz[p * dim + k] * word * masks.locked.as_ref().map_or(1.0, |l| l[k]))
                .collect();
            if de.iter().all(|&v| v == 0.0) {
                continue;
            }
            for &f in fs {
                let row = grad.emb.entry(f).or_insert_with(|| vec![0.0; dim]);
                for (r, v) in row.iter_mut().zip(&de) {
                    *r += v;
                }
            }
        }
        loss
    }

    fn empty_gradient(&self) -> Gradient {
        let sh = self.shape();
        Gradient { emb: HashMap::new(), dense: vec![0.0; sh.len() - sh.w1()] }
    }

    /// Mean token cross-entropy with dropout disabled.
    pub fn loss(&self, data: &[Labeled]) -> f64 {
        self.loss_and_gradient(data).0
    }

    /// Mean token cross-entropy and its gradient over all parameters, with
    /// dropout disabled.
    pub fn loss_and_gradient(&self, data: &[Labeled]) -> (f64, Vec<f64>) {
        let masks: Vec<Masks> = data.iter().map(|_| Masks::default()).collect();
        self.loss_and_gradient_with_masks(data, &masks)
    }

    /// As [`NeuralModel::loss_and_gradient`] but under fixed dropout masks.
    pub fn loss_and_gradient_with_masks(&self, data: &[Labeled], masks: &[Masks]) -> (f64, Vec<f64>) {
        let tokens: usize = data.iter().map(|s| s.tags.len()).sum();
        let scale = 1.0 / tokens.max(1) as f64;
        let mut grad = self.empty_gradient();
        let mut loss = 0.0;
        for (s, m) in data.iter().zip(masks) {
            loss += self.backprop(&self.encode(&s.obs), &s.tags, m, scale, &mut grad);
        }
        let sh = self.shape();
        let mut dense = vec![0.0; sh.len()];
        for (&f, row) in &grad.emb {
            let base = f as usize * sh.dim;
            for (k, v) in row.iter().enumerate() {
                dense[base + k] += v;
            }
        }
        dense[sh.w1()..].copy_from_slice(&grad.dense);
        (loss, dense)
    }

    fn apply(&mut self, grad: &Gradient, lr: f64) {
        let sh = self.shape();
        for (&f, row) in &grad.emb {
            let base = f as usize * sh.dim;
            for (w, g) in self.weights[base..base + sh.dim].iter_mut().zip(row) {
                *w -= lr * g;
            }
        }
        for (w, g) in self.weights[sh.w1()..].iter_mut().zip(&grad.dense) {
            *w -= lr * g;
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        let json = serde_json::to_vec(self).map_err(|e| NeuralError::Format(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let bytes = fs::read(path)?;
        let model: NeuralModel = serde_json::from_slice(&bytes).map_err(|e| NeuralError::Format(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(NeuralError::Format(format!("unsupported version {}", model.format_version)));
        }
        if model.weights.len() != model.shape().len() {
            return Err(NeuralError::Format("parameter count does not match hyperparameters".into()));
        }
        Ok(model)
    }
}

fn softmax(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Index and value of the maximum; ties go to the lower index.
pub fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in row.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Trains by mini-batch SGD with a linearly decaying learning rate.
pub fn train_neural(
    data: &[Labeled],
    dev: &[Labeled],
    tagset: &TagSet,
    params: &NeuralParams,
    seed: u64,
) -> Result<NeuralModel, NeuralError> {
    train_neural_traced(data, dev, tagset, params, seed, false).map(|(m, _)| m)
}

/// Like [`train_neural`]; with `trace` set, also returns the dropout-free
/// training loss after each epoch.
pub fn train_neural_traced(
    data: &[Labeled],
    dev: &[Labeled],
    tagset: &TagSet,
    params: &NeuralParams,
    seed: u64,
    trace: bool,
) -> Result<(NeuralModel, Vec<f64>), NeuralError> {
    if data.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    let c = tagset.len();
    if let Some(&bad) = data.iter().flat_map(|s| s.tags.iter()).find(|&&t| t >= c) {
        return Err(NeuralError::UnknownTag(bad));
    }
    let mut model = NeuralModel::init(tagset, params, seed)?;
    let encoded: Vec<Encoded> = data.iter().map(|s| model.encode(&s.obs)).collect();
    let batch = effective_batch(data.len(), params.base_batch);
    let batches_per_epoch = data.len().div_ceil(batch);
    let total_steps = (batches_per_epoch * params.epochs).max(1);
    let mut rng = seed::rng(seed, &[0x7a11]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let all_sites = (true, true, true);
    let mut step = 0;
    let mut trace_out = Vec::new();
    let use_dev = params.best_epoch_on_dev && !dev.is_empty();
    let mut best: Option<(f64, Vec<f64>)> = None;

    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let tokens: usize = chunk.iter().map(|&k| data[k].tags.len()).sum();
            let scale = 1.0 / tokens.max(1) as f64;
            let mut grad = model.empty_gradient();
            let mut loss = 0.0;
            for &k in chunk {
                let masks = model.sample_masks(encoded[k].n, all_sites, &mut rng);
                loss += model.backprop(&encoded[k], &data[k].tags, &masks, scale, &mut grad);
            }
            if !loss.is_finite() {
                return Err(NeuralError::NonFinite(epoch));
            }
            let lr = params.learning_rate * (1.0 - step as f64 / total_steps as f64);
            model.apply(&grad, lr);
            step += 1;
        }
        if trace {
            let l = model.loss(data);
            if !l.is_finite() {
                return Err(NeuralError::NonFinite(epoch));
            }
            trace_out.push(l);
        }
        if use_dev {
            let f1 = dev_f1(&model, dev);
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, model.weights.clone()));
            }
        }
    }
    if let Some((_, w)) = best {
        model.weights = w;
    }
    Ok((model, trace_out))
}

fn dev_f1(model: &NeuralModel, dev: &[Labeled]) -> f64 {
    let ts = &model.tagset;
    let pred: Vec<Vec<&str>> = dev.iter().map(|s| ts.decode(&model.best_path(&s.obs).0)).collect();
    let gold: Vec<Vec<&str>> = dev.iter().map(|s| ts.decode(&s.tags)).collect();
    span_f1(&pred, &gold, ts.scheme()).map(|r| r.f1).unwrap_or(0.0)
}
