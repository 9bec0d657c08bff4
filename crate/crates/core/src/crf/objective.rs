//! Conditional log-likelihood of tag sequences and its exact gradient.

use super::features::FeatureVector;
use super::inference::{forward_backward, Potentials};

/// Flat parameter layout: emission block (`features x tags`, row-major by
/// feature), transition block (`tags x tags`), start vector, end vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub features: usize,
    pub tags: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.features * self.tags + self.tags * self.tags + 2 * self.tags
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn emission(&self, f: usize, y: usize) -> usize {
        f * self.tags + y
    }

    #[inline]
    pub fn transition(&self, a: usize, b: usize) -> usize {
        self.features * self.tags + a * self.tags + b
    }

    #[inline]
    pub fn start(&self, y: usize) -> usize {
        self.features * self.tags + self.tags * self.tags + y
    }

    #[inline]
    pub fn end(&self, y: usize) -> usize {
        self.start(y) + self.tags
    }

    /// Score potentials of an encoded sentence under `weights`.
    pub fn potentials(&self, weights: &[f64], features: &[FeatureVector]) -> Potentials {
        let c = self.tags;
        let n = features.len();
        let mut p = Potentials::zeros(n, c);
        for (i, fv) in features.iter().enumerate() {
            let row = &mut p.emission[i * c..(i + 1) * c];
            for &f in fv {
                let base = f as usize * c;
                for (y, r) in row.iter_mut().enumerate() {
                    *r += weights[base + y];
                }
            }
        }
        let t0 = self.transition(0, 0);
        p.transition.copy_from_slice(&weights[t0..t0 + c * c]);
        p.start.copy_from_slice(&weights[self.start(0)..self.start(0) + c]);
        p.end.copy_from_slice(&weights[self.end(0)..self.end(0) + c]);
        p
    }
}

/// An encoded training sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<FeatureVector>,
    pub tags: Vec<usize>,
}

/// Sum of `log P(y | x)` over `data`; adds its gradient into `grad`.
pub fn log_likelihood_and_gradient(layout: &Layout, weights: &[f64], data: &[Instance], grad: &mut [f64]) -> f64 {
    debug_assert_eq!(grad.len(), layout.len());
    let c = layout.tags;
    let mut total = 0.0;
    for inst in data {
        let n = inst.tags.len();
        if n == 0 {
            continue;
        }
        let p = layout.potentials(weights, &inst.features);
        let m = forward_backward(&p);
        total += p.path_score(&inst.tags) - m.log_z;

        for (i, fv) in inst.features.iter().enumerate() {
            let gold = inst.tags[i];
            let post = &m.unary[i * c..(i + 1) * c];
            for &f in fv {
                let base = f as usize * c;
                grad[base + gold] += 1.0;
                for (y, &q) in post.iter().enumerate() {
                    grad[base + y] -= q;
                }
            }
        }
        let t0 = layout.transition(0, 0);
        for i in 1..n {
            grad[layout.transition(inst.tags[i - 1], inst.tags[i])] += 1.0;
            let pair = &m.pairwise[(i - 1) * c * c..i * c * c];
            for (k, &q) in pair.iter().enumerate() {
                grad[t0 + k] -= q;
            }
        }
        grad[layout.start(inst.tags[0])] += 1.0;
        grad[layout.end(inst.tags[n - 1])] += 1.0;
        for y in 0..c {
            grad[layout.start(y)] -= m.unary[y];
            grad[layout.end(y)] -= m.unary[(n - 1) * c + y];
        }
    }
    total
}

pub fn log_likelihood(layout: &Layout, weights: &[f64], data: &[Instance]) -> f64 {
    data.iter()
        .filter(|inst| !inst.tags.is_empty())
        .map(|inst| {
            let p = layout.potentials(weights, &inst.features);
            p.path_score(&inst.tags) - super::inference::log_partition(&p)
        })
        .sum()
}
