//! Binary token features for the CRF.
//!
//! Per token: lowercased form, 3- and 2-character suffixes, capitalisation
//! class, digit indicator, POS and generalised POS (when the corpus has a POS
//! column), sentence begin/end indicators, and the same minus suffixes for the
//! previous and next token. Missing neighbours produce boundary markers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Labeled, Observed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapClass {
    AllCaps,
    InitCap,
    /// No uppercase letters at all, which includes digits and punctuation.
    Lower,
    Mixed,
}

impl CapClass {
    pub fn of(word: &str) -> CapClass {
        let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
        let upper = letters.iter().filter(|c| c.is_uppercase()).count();
        if upper == 0 {
            CapClass::Lower
        } else if upper == letters.len() {
            CapClass::AllCaps
        } else if word.chars().next().is_some_and(char::is_uppercase) && upper == 1 {
            CapClass::InitCap
        } else {
            CapClass::Mixed
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CapClass::AllCaps => "allcaps",
            CapClass::InitCap => "initcap",
            CapClass::Lower => "lower",
            CapClass::Mixed => "mixed",
        }
    }
}

/// Last `k` characters of `word`, or all of it when shorter.
pub fn suffix(word: &str, k: usize) -> &str {
    let count = word.chars().count();
    if count <= k {
        return word;
    }
    let start = word.char_indices().nth(count - k).map(|(i, _)| i).unwrap_or(0);
    &word[start..]
}

pub fn is_digit(word: &str) -> bool {
    !word.is_empty() && word.chars().all(|c| c.is_ascii_digit())
}

fn describe(obs: &Observed, j: usize, prefix: &str, out: &mut Vec<String>) {
    let word = &obs.words[j];
    out.push(format!("{prefix}w={}", word.to_lowercase()));
    out.push(format!("{prefix}cap={}", CapClass::of(word).as_str()));
    out.push(format!("{prefix}digit={}", is_digit(word) as u8));
    if let Some(pos) = &obs.pos {
        let tag = &pos[j];
        out.push(format!("{prefix}pos={tag}"));
        if let Some(g) = tag.chars().next() {
            out.push(format!("{prefix}gpos={g}"));
        }
    }
    if j == 0 {
        out.push(format!("{prefix}bos"));
    }
    if j + 1 == obs.words.len() {
        out.push(format!("{prefix}eos"));
    }
}

/// Feature strings of the token at `position`.
pub fn token_features(obs: &Observed, position: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(24);
    out.push("bias".to_string());
    let lower = obs.words[position].to_lowercase();
    out.push(format!("s3={}", suffix(&lower, 3)));
    out.push(format!("s2={}", suffix(&lower, 2)));
    describe(obs, position, "", &mut out);
    if position > 0 {
        describe(obs, position - 1, "-1:", &mut out);
    } else {
        out.push("-1:__BOS__".to_string());
    }
    if position + 1 < obs.words.len() {
        describe(obs, position + 1, "+1:", &mut out);
    } else {
        out.push("+1:__EOS__".to_string());
    }
    out
}

/// Sorted, deduplicated feature indices of one token.
pub type FeatureVector = Vec<u32>;

/// Feature-string interning, built from labeled training data only.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureDictionary {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for FeatureDictionary {
    fn from(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        FeatureDictionary { names, index }
    }
}

impl From<FeatureDictionary> for Vec<String> {
    fn from(d: FeatureDictionary) -> Self {
        d.names
    }
}

impl FeatureDictionary {
    pub fn build(data: &[Labeled]) -> Self {
        let mut dict = FeatureDictionary::default();
        for s in data {
            for i in 0..s.obs.len() {
                for f in token_features(&s.obs, i) {
                    if !dict.index.contains_key(&f) {
                        dict.index.insert(f.clone(), dict.names.len() as u32);
                        dict.names.push(f);
                    }
                }
            }
        }
        dict
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: u32) -> &str {
        &self.names[index as usize]
    }

    pub fn get(&self, feature: &str) -> Option<u32> {
        self.index.get(feature).copied()
    }

    /// Encodes every position; features missing from the dictionary are dropped.
    pub fn encode(&self, obs: &Observed) -> Vec<FeatureVector> {
        (0..obs.len())
            .map(|i| {
                let mut v: Vec<u32> =
                    token_features(obs, i).iter().filter_map(|f| self.get(f)).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect()
    }
}
