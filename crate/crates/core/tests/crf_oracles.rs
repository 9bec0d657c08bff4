//! Exact CRF inference and gradients checked against brute force.

use al_seqtag::crf::features::FeatureVector;
use al_seqtag::crf::inference::{forward_backward, log_partition, log_sum_exp, viterbi, Potentials};
use al_seqtag::crf::objective::{log_likelihood, log_likelihood_and_gradient, Instance, Layout};
use al_seqtag::seed;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn all_paths(n: usize, c: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out.into_iter().flat_map(|p| (0..c).map(move |y| [p.clone(), vec![y]].concat())).collect();
    }
    out
}

fn random_potentials(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Potentials {
    let mut p = Potentials::zeros(n, c);
    let mut fill = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = rng.gen_range(-3.0..3.0));
    fill(&mut p.emission);
    fill(&mut p.transition);
    fill(&mut p.start);
    fill(&mut p.end);
    p
}

#[test]
fn inference_matches_enumeration() {
    let mut rng = seed::rng(11, &[]);
    for _ in 0..100 {
        let n = rng.gen_range(1..=5);
        let c = rng.gen_range(1..=4);
        let p = random_potentials(&mut rng, n, c);
        let paths = all_paths(n, c);
        let scores: Vec<f64> = paths.iter().map(|y| p.path_score(y)).collect();
        let log_z = log_sum_exp(&scores);
        let best = (0..paths.len()).fold(0, |b, k| if scores[k] > scores[b] { k } else { b });

        let (path, score) = viterbi(&p);
        assert_eq!(path, paths[best]);
        assert!((score - scores[best]).abs() < 1e-9);
        assert!((log_partition(&p) - log_z).abs() < 1e-9);

        let m = forward_backward(&p);
        for i in 0..n {
            for y in 0..c {
                let brute: f64 =
                    paths.iter().zip(&scores).filter(|(q, _)| q[i] == y).map(|(_, s)| (s - log_z).exp()).sum();
                assert!((m.unary[i * c + y] - brute).abs() < 1e-9);
            }
        }
        for i in 1..n {
            for a in 0..c {
                for b in 0..c {
                    let brute: f64 = paths
                        .iter()
                        .zip(&scores)
                        .filter(|(q, _)| q[i - 1] == a && q[i] == b)
                        .map(|(_, s)| (s - log_z).exp())
                        .sum();
                    assert!((m.pairwise[(i - 1) * c * c + a * c + b] - brute).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn viterbi_ties_go_low() {
    // two tags with identical scores everywhere: the all-zero path wins
    let mut p = Potentials::zeros(4, 2);
    p.emission = vec![1.0; 8];
    assert_eq!(viterbi(&p).0, vec![0, 0, 0, 0]);
}

fn random_instances(rng: &mut ChaCha8Rng, layout: &Layout, count: usize) -> Vec<Instance> {
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=5);
            let features: Vec<FeatureVector> = (0..n)
                .map(|_| {
                    let mut f: Vec<u32> =
                        (0..layout.features as u32).filter(|_| rng.gen_bool(0.5)).collect();
                    f.dedup();
                    f
                })
                .collect();
            let tags = (0..n).map(|_| rng.gen_range(0..layout.tags)).collect();
            Instance { features, tags }
        })
        .collect()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = seed::rng(5, &[]);
    for _ in 0..10 {
        let layout = Layout { features: rng.gen_range(1..=5), tags: rng.gen_range(1..=3) };
        let data = random_instances(&mut rng, &layout, 3);
        let w: Vec<f64> = (0..layout.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut grad = vec![0.0; layout.len()];
        let ll = log_likelihood_and_gradient(&layout, &w, &data, &mut grad);
        assert!((ll - log_likelihood(&layout, &w, &data)).abs() < 1e-10);
        let h = 1e-5;
        for k in 0..w.len() {
            let mut up = w.clone();
            up[k] += h;
            let mut down = w.clone();
            down[k] -= h;
            let numeric = (log_likelihood(&layout, &up, &data) - log_likelihood(&layout, &down, &data)) / (2.0 * h);
            let denom = grad[k].abs().max(numeric.abs()).max(1e-6);
            assert!((grad[k] - numeric).abs() / denom < 1e-4, "k={k}: {} vs {numeric}", grad[k]);
        }
    }
}
