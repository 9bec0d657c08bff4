//! Exact linear-chain inference over score potentials.

/// Unnormalised log-potentials of one sentence.
///
/// `emission[i * c + y]` scores tag `y` at position `i`; `transition[a * c + b]`
/// scores the move from tag `a` to tag `b`; `start` and `end` score the first
/// and last tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub n: usize,
    pub c: usize,
    pub emission: Vec<f64>,
    pub transition: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl Potentials {
    pub fn zeros(n: usize, c: usize) -> Self {
        Potentials {
            n,
            c,
            emission: vec![0.0; n * c],
            transition: vec![0.0; c * c],
            start: vec![0.0; c],
            end: vec![0.0; c],
        }
    }

    #[inline]
    pub fn emit(&self, i: usize, y: usize) -> f64 {
        self.emission[i * self.c + y]
    }

    #[inline]
    pub fn trans(&self, a: usize, b: usize) -> f64 {
        self.transition[a * self.c + b]
    }

    /// Unnormalised score of a complete tag path.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        assert_eq!(path.len(), self.n);
        if path.is_empty() {
            return 0.0;
        }
        let mut s = self.start[path[0]] + self.end[path[self.n - 1]];
        for (i, &y) in path.iter().enumerate() {
            s += self.emit(i, y);
            if i > 0 {
                s += self.trans(path[i - 1], y);
            }
        }
        s
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Highest-scoring path and its unnormalised score.
///
/// Ties resolve to the lower tag index, both at each backpointer and at the
/// final position.
pub fn viterbi(p: &Potentials) -> (Vec<usize>, f64) {
    let (n, c) = (p.n, p.c);
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let mut delta: Vec<f64> = (0..c).map(|y| p.start[y] + p.emit(0, y)).collect();
    let mut back = vec![0usize; n * c];
    let mut next = vec![0.0; c];
    for i in 1..n {
        for y in 0..c {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for a in 0..c {
                let s = delta[a] + p.trans(a, y);
                if s > best {
                    best = s;
                    arg = a;
                }
            }
            next[y] = best + p.emit(i, y);
            back[i * c + y] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for y in 0..c {
        let s = delta[y] + p.end[y];
        if s > best {
            best = s;
            last = y;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for i in (1..n).rev() {
        path[i - 1] = back[i * c + path[i]];
    }
    (path, best)
}

/// Forward log-messages `alpha[i * c + y]`, excluding the end potentials.
pub fn forward(p: &Potentials) -> Vec<f64> {
    let (n, c) = (p.n, p.c);
    let mut alpha = vec![0.0; n * c];
    if n == 0 {
        return alpha;
    }
    for y in 0..c {
        alpha[y] = p.start[y] + p.emit(0, y);
    }
    let mut buf = vec![0.0; c];
    for i in 1..n {
        for y in 0..c {
            for a in 0..c {
                buf[a] = alpha[(i - 1) * c + a] + p.trans(a, y);
            }
            alpha[i * c + y] = log_sum_exp(&buf) + p.emit(i, y);
        }
    }
    alpha
}

/// Backward log-messages `beta[i * c + y]`, including the end potentials.
pub fn backward(p: &Potentials) -> Vec<f64> {
    let (n, c) = (p.n, p.c);
    let mut beta = vec![0.0; n * c];
    if n == 0 {
        return beta;
    }
    beta[(n - 1) * c..].copy_from_slice(&p.end);
    let mut buf = vec![0.0; c];
    for i in (0..n - 1).rev() {
        for a in 0..c {
            for y in 0..c {
                buf[y] = p.trans(a, y) + p.emit(i + 1, y) + beta[(i + 1) * c + y];
            }
            beta[i * c + a] = log_sum_exp(&buf);
        }
    }
    beta
}

fn log_z_from_alpha(p: &Potentials, alpha: &[f64]) -> f64 {
    let c = p.c;
    let last: Vec<f64> = (0..c).map(|y| alpha[(p.n - 1) * c + y] + p.end[y]).collect();
    log_sum_exp(&last)
}

/// Log partition function by the forward recursion.
pub fn log_partition(p: &Potentials) -> f64 {
    if p.n == 0 {
        return 0.0;
    }
    log_z_from_alpha(p, &forward(p))
}

/// Posterior marginals from forward-backward.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_z: f64,
    /// `unary[i * c + y] = P(y_i = y)`.
    pub unary: Vec<f64>,
    /// `pairwise[(i - 1) * c * c + a * c + b] = P(y_{i-1} = a, y_i = b)` for `i >= 1`.
    pub pairwise: Vec<f64>,
}

pub fn forward_backward(p: &Potentials) -> Marginals {
    let (n, c) = (p.n, p.c);
    if n == 0 {
        return Marginals { log_z: 0.0, unary: Vec::new(), pairwise: Vec::new() };
    }
    let alpha = forward(p);
    let beta = backward(p);
    let log_z = log_z_from_alpha(p, &alpha);
    let unary = (0..n * c).map(|k| (alpha[k] + beta[k] - log_z).exp()).collect();
    let mut pairwise = vec![0.0; (n - 1) * c * c];
    for i in 1..n {
        let base = (i - 1) * c * c;
        for a in 0..c {
            let left = alpha[(i - 1) * c + a];
            for b in 0..c {
                pairwise[base + a * c + b] =
                    (left + p.trans(a, b) + p.emit(i, b) + beta[i * c + b] - log_z).exp();
            }
        }
    }
    Marginals { log_z, unary, pairwise }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_argmax() {
        let mut p = Potentials::zeros(1, 2);
        p.emission = vec![2.0, 1.0];
        assert_eq!(viterbi(&p), (vec![0], 2.0));
    }

    #[test]
    fn zero_scores_pick_lowest_tags() {
        let p = Potentials::zeros(5, 3);
        assert_eq!(viterbi(&p), (vec![0; 5], 0.0));
    }

    #[test]
    fn partition_small_cases() {
        let p = Potentials::zeros(1, 2);
        assert!((log_partition(&p) - 2f64.ln()).abs() < 1e-15);
        let mut p = Potentials::zeros(3, 1);
        p.emission = vec![0.5, -1.0, 2.0];
        p.start = vec![0.25];
        p.end = vec![-0.5];
        assert!((log_partition(&p) - p.path_score(&[0, 0, 0])).abs() < 1e-12);
    }

    #[test]
    fn uniform_marginals() {
        let m = forward_backward(&Potentials::zeros(4, 3));
        assert!(m.unary.iter().all(|&u| (u - 1.0 / 3.0).abs() < 1e-12));
        assert!(m.pairwise.iter().all(|&u| (u - 1.0 / 9.0).abs() < 1e-12));
    }
}
