//! Monte Carlo acquisition scores against direct formula implementations.

use std::collections::HashMap;

use al_seqtag::neural::StochasticPredictions;
use al_seqtag::seed;
use al_seqtag::strategies::{bald_score, vr_score};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Tensor = Vec<Vec<Vec<f64>>>;

fn random_tensor(rng: &mut ChaCha8Rng) -> Tensor {
    let (m, n, c) = (rng.gen_range(2..=10), rng.gen_range(1..=8), rng.gen_range(2..=6));
    (0..m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    // occasional exact zeros exercise the 0 ln 0 convention
                    let raw: Vec<f64> =
                        (0..c).map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen::<f64>().powi(3) }).collect();
                    let s: f64 = raw.iter().sum();
                    if s == 0.0 {
                        let mut v = vec![0.0; c];
                        v[0] = 1.0;
                        v
                    } else {
                        raw.iter().map(|x| x / s).collect()
                    }
                })
                .collect()
        })
        .collect()
}

/// Variation ratio via explicit vote maps.
fn vr_direct(t: &Tensor) -> f64 {
    let m = t.len();
    let n = t[0].len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut votes: HashMap<usize, usize> = HashMap::new();
        for pass in t {
            let row = &pass[i];
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let arg = row.iter().position(|&v| v == best).unwrap();
            *votes.entry(arg).or_insert(0) += 1;
        }
        let top = *votes.values().max().unwrap();
        acc += 1.0 - top as f64 / m as f64;
    }
    acc / n as f64
}

/// Mutual information as the mean KL divergence of each pass from the average.
fn bald_direct(t: &Tensor) -> f64 {
    let m = t.len() as f64;
    let n = t[0].len();
    let c = t[0][0].len();
    let mut acc = 0.0;
    for i in 0..n {
        let avg: Vec<f64> = (0..c).map(|k| t.iter().map(|p| p[i][k]).sum::<f64>() / m).collect();
        let mut kl = 0.0;
        for pass in t {
            for k in 0..c {
                let p = pass[i][k];
                if p > 0.0 {
                    kl += p * (p / avg[k]).ln();
                }
            }
        }
        acc += kl / m;
    }
    acc / n as f64
}

#[test]
fn scores_match_direct_formulas() {
    let mut rng = seed::rng(2024, &[]);
    for _ in 0..1000 {
        let t = random_tensor(&mut rng);
        let p = StochasticPredictions::from_nested(&t);
        assert!((vr_score(&p) - vr_direct(&t)).abs() < 1e-10);
        assert!((bald_score(&p) - bald_direct(&t)).abs() < 1e-10);
    }
}

#[test]
fn identical_passes_score_zero() {
    let mut rng = seed::rng(7, &[]);
    for _ in 0..200 {
        let t = random_tensor(&mut rng);
        let same: Tensor = (0..t.len()).map(|_| t[0].clone()).collect();
        let p = StochasticPredictions::from_nested(&same);
        assert_eq!(vr_score(&p), 0.0);
        assert_eq!(bald_score(&p), 0.0);
    }
}
