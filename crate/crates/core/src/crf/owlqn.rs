//! Orthant-wise limited-memory quasi-Newton minimisation.
//!
//! Minimises `f(x) + l1 * |x|_1` for a smooth `f`. With `l1 = 0` this is plain
//! L-BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct OwlqnConfig {
    pub l1: f64,
    pub max_iter: usize,
    /// Number of stored correction pairs.
    pub memory: usize,
    /// Stop when `|pseudo-gradient| / max(1, |x|)` falls below this.
    pub epsilon: f64,
    /// Stop when the objective improved by less than this fraction over `period` iterations.
    pub delta: f64,
    pub period: usize,
    pub max_linesearch: usize,
}

impl Default for OwlqnConfig {
    fn default() -> Self {
        OwlqnConfig { l1: 0.0, max_iter: 100, memory: 6, epsilon: 1e-5, delta: 1e-5, period: 10, max_linesearch: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    MaxIterations,
    Converged,
    NoProgress,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonFinite {
    pub iteration: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn l1_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

fn pseudo_gradient(x: &[f64], g: &[f64], l1: f64, out: &mut [f64]) {
    if l1 == 0.0 {
        out.copy_from_slice(g);
        return;
    }
    for i in 0..x.len() {
        out[i] = if x[i] > 0.0 {
            g[i] + l1
        } else if x[i] < 0.0 {
            g[i] - l1
        } else if g[i] + l1 < 0.0 {
            g[i] + l1
        } else if g[i] - l1 > 0.0 {
            g[i] - l1
        } else {
            0.0
        };
    }
}

/// Minimises `smooth + l1 * |x|_1` starting at `x0`.
///
/// `smooth(x, grad)` returns the smooth objective and overwrites `grad` with
/// its gradient.
pub fn minimize<F>(x0: Vec<f64>, mut smooth: F, cfg: &OwlqnConfig) -> Result<Minimum, NonFinite>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let l1 = cfg.l1;
    let mut x = x0;
    let mut g = vec![0.0; dim];
    let mut f = smooth(&x, &mut g) + l1 * l1_norm(&x);
    if !f.is_finite() {
        return Err(NonFinite { iteration: 0 });
    }
    let mut pg = vec![0.0; dim];
    let mut d = vec![0.0; dim];
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut past: Vec<f64> = vec![f];
    let mut alpha = vec![0.0; cfg.memory];

    for iter in 0..cfg.max_iter {
        pseudo_gradient(&x, &g, l1, &mut pg);
        if norm(&pg) / norm(&x).max(1.0) < cfg.epsilon {
            return Ok(Minimum { x, value: f, iterations: iter, termination: Termination::Converged });
        }

        // two-loop recursion: d = -H * pg
        for (k, v) in d.iter_mut().enumerate() {
            *v = -pg[k];
        }
        for (j, (s, y, rho)) in history.iter().enumerate().rev() {
            alpha[j] = rho * dot(s, &d);
            for k in 0..dim {
                d[k] -= alpha[j] * y[k];
            }
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for (j, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &d);
            for k in 0..dim {
                d[k] += s[k] * (alpha[j] - beta);
            }
        }
        if l1 > 0.0 {
            for k in 0..dim {
                if d[k] * pg[k] >= 0.0 {
                    d[k] = 0.0;
                }
            }
        }
        if dot(&d, &pg) >= 0.0 {
            history.clear();
            for k in 0..dim {
                d[k] = -pg[k];
            }
        }

        let orthant: Vec<f64> = if l1 > 0.0 {
            (0..dim)
                .map(|k| if x[k] != 0.0 { x[k].signum() } else { -pg[k].signum() * (pg[k] != 0.0) as u8 as f64 })
                .collect()
        } else {
            Vec::new()
        };

        let mut step = if history.is_empty() { 1.0 / norm(&d).max(1e-12) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..cfg.max_linesearch {
            for k in 0..dim {
                let mut v = x[k] + step * d[k];
                if l1 > 0.0 && v * orthant[k] <= 0.0 {
                    v = 0.0;
                }
                x_new[k] = v;
            }
            let f_new = smooth(&x_new, &mut g_new) + l1 * l1_norm(&x_new);
            if !f_new.is_finite() {
                return Err(NonFinite { iteration: iter + 1 });
            }
            let decrease: f64 = (0..dim).map(|k| pg[k] * (x_new[k] - x[k])).sum();
            if f_new <= f + 1e-4 * decrease {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            return Ok(Minimum { x, value: f, iterations: iter, termination: Termination::LineSearchFailed });
        };

        let s: Vec<f64> = (0..dim).map(|k| x_new[k] - x[k]).collect();
        let y: Vec<f64> = (0..dim).map(|k| g_new[k] - g[k]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        past.push(f);

        if past.len() > cfg.period {
            let before = past[past.len() - 1 - cfg.period];
            if (before - f) / f.abs().max(1e-12) < cfg.delta {
                return Ok(Minimum { x, value: f, iterations: iter + 1, termination: Termination::NoProgress });
            }
        }
    }
    Ok(Minimum { x, value: f, iterations: cfg.max_iter, termination: Termination::MaxIterations })
}
