//! Linear-chain CRF over emission scores with explicit start and stop
//! states.
//!
//! Emissions are `T × K`; transitions are `(K + 2) × (K + 2)` with row/column
//! `K` the start state and `K + 1` the stop state. `transitions[(i, j)]` scores
//! moving from `i` to `j`.

use crate::corpus::Tag;
use crate::linalg::Matrix;

/// Score given to forbidden BIO transitions.
pub const FORBIDDEN: f64 = -1e4;

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn start(k: usize) -> usize {
    k
}

fn stop(k: usize) -> usize {
    k + 1
}

/// Unnormalized log score of one tag path.
pub fn path_score(emissions: &Matrix, transitions: &Matrix, path: &[usize]) -> f64 {
    let k = emissions.cols;
    debug_assert_eq!(path.len(), emissions.rows);
    if path.is_empty() {
        return transitions[(start(k), stop(k))];
    }
    let mut s = transitions[(start(k), path[0])];
    for (t, &y) in path.iter().enumerate() {
        s += emissions[(t, y)];
        if t > 0 {
            s += transitions[(path[t - 1], y)];
        }
    }
    s + transitions[(path[path.len() - 1], stop(k))]
}

/// Forward log-sum-exp table `alpha[t][j]`.
fn forward_table(emissions: &Matrix, transitions: &Matrix) -> Vec<Vec<f64>> {
    let (steps, k) = (emissions.rows, emissions.cols);
    let mut alpha = Vec::with_capacity(steps);
    alpha.push(
        (0..k)
            .map(|j| transitions[(start(k), j)] + emissions[(0, j)])
            .collect::<Vec<_>>(),
    );
    let mut buf = vec![0.0; k];
    for t in 1..steps {
        let prev = &alpha[t - 1];
        let row = (0..k)
            .map(|j| {
                for i in 0..k {
                    buf[i] = prev[i] + transitions[(i, j)];
                }
                logsumexp(&buf) + emissions[(t, j)]
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

/// `log Σ_y exp(score(y))` over all tag paths.
pub fn log_partition(emissions: &Matrix, transitions: &Matrix) -> f64 {
    let k = emissions.cols;
    if emissions.rows == 0 {
        return transitions[(start(k), stop(k))];
    }
    let alpha = forward_table(emissions, transitions);
    let last = alpha.last().unwrap();
    let fin: Vec<f64> = (0..k)
        .map(|j| last[j] + transitions[(j, stop(k))])
        .collect();
    logsumexp(&fin)
}

pub fn neg_log_likelihood(emissions: &Matrix, transitions: &Matrix, gold: &[usize]) -> f64 {
    log_partition(emissions, transitions) - path_score(emissions, transitions, gold)
}

/// Gradients of the negative log-likelihood.
#[derive(Debug, Clone)]
pub struct CrfGrad {
    pub emissions: Matrix,
    pub transitions: Matrix,
}

/// NLL and its gradients via forward-backward marginals.
pub fn nll_with_grad(emissions: &Matrix, transitions: &Matrix, gold: &[usize]) -> (f64, CrfGrad) {
    let (steps, k) = (emissions.rows, emissions.cols);
    assert!(steps > 0, "CRF over an empty sentence");
    let alpha = forward_table(emissions, transitions);
    let mut beta = vec![vec![0.0; k]; steps];
    for j in 0..k {
        beta[steps - 1][j] = transitions[(j, stop(k))];
    }
    let mut buf = vec![0.0; k];
    for t in (0..steps - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = transitions[(i, j)] + emissions[(t + 1, j)] + beta[t + 1][j];
            }
            beta[t][i] = logsumexp(&buf);
        }
    }
    let fin: Vec<f64> = (0..k)
        .map(|j| alpha[steps - 1][j] + transitions[(j, stop(k))])
        .collect();
    let log_z = logsumexp(&fin);

    let mut d_em = Matrix::zeros(steps, k);
    let mut d_tr = Matrix::zeros(k + 2, k + 2);
    for t in 0..steps {
        for j in 0..k {
            d_em[(t, j)] = (alpha[t][j] + beta[t][j] - log_z).exp();
        }
    }
    for j in 0..k {
        d_tr[(start(k), j)] += d_em[(0, j)];
        d_tr[(j, stop(k))] += d_em[(steps - 1, j)];
    }
    for t in 1..steps {
        for i in 0..k {
            for j in 0..k {
                d_tr[(i, j)] +=
                    (alpha[t - 1][i] + transitions[(i, j)] + emissions[(t, j)] + beta[t][j]
                        - log_z)
                        .exp();
            }
        }
    }
    // Subtract the gold path's feature counts.
    d_tr[(start(k), gold[0])] -= 1.0;
    d_tr[(gold[steps - 1], stop(k))] -= 1.0;
    for t in 0..steps {
        d_em[(t, gold[t])] -= 1.0;
        if t > 0 {
            d_tr[(gold[t - 1], gold[t])] -= 1.0;
        }
    }
    let loss = log_z - path_score(emissions, transitions, gold);
    (
        loss,
        CrfGrad {
            emissions: d_em,
            transitions: d_tr,
        },
    )
}

/// Best-scoring path and its score. Among equal scores the lowest tag index
/// wins, both for the final tag and for every backpointer.
pub fn viterbi(emissions: &Matrix, transitions: &Matrix) -> (Vec<usize>, f64) {
    let (steps, k) = (emissions.rows, emissions.cols);
    if steps == 0 {
        return (Vec::new(), transitions[(start(k), stop(k))]);
    }
    let mut score: Vec<f64> = (0..k)
        .map(|j| transitions[(start(k), j)] + emissions[(0, j)])
        .collect();
    let mut back = vec![vec![0usize; k]; steps];
    for t in 1..steps {
        let mut next = vec![0.0; k];
        for j in 0..k {
            let mut best = 0;
            let mut best_s = score[0] + transitions[(0, j)];
            for i in 1..k {
                let s = score[i] + transitions[(i, j)];
                if s > best_s {
                    best = i;
                    best_s = s;
                }
            }
            back[t][j] = best;
            next[j] = best_s + emissions[(t, j)];
        }
        score = next;
    }
    let mut last = 0;
    let mut last_s = score[0] + transitions[(0, stop(k))];
    for j in 1..k {
        let s = score[j] + transitions[(j, stop(k))];
        if s > last_s {
            last = j;
            last_s = s;
        }
    }
    let mut path = vec![0; steps];
    path[steps - 1] = last;
    for t in (1..steps).rev() {
        path[t - 1] = back[t][path[t]];
    }
    (path, last_s)
}

/// Whether the transition `from → to` over the fixed tag alphabet (plus
/// start/stop) is allowed in BIO2.
pub fn transition_allowed(from: usize, to: usize) -> bool {
    match Tag::from_index(to) {
        Some(to_tag) => to_tag.may_follow(Tag::from_index(from)),
        None => true,
    }
}

/// Copy of `transitions` with every BIO2-illegal entry set to
/// [`FORBIDDEN`].
pub fn constrain(transitions: &Matrix) -> Matrix {
    let mut out = transitions.clone();
    let n = Tag::COUNT + 2;
    debug_assert_eq!((out.rows, out.cols), (n, n));
    for from in 0..n {
        for to in 0..Tag::COUNT {
            let from_stop = from == Tag::COUNT + 1;
            if !from_stop && !transition_allowed(from, to) {
                out[(from, to)] = FORBIDDEN;
            }
        }
    }
    out
}

/// Zeroes gradient entries that [`constrain`] overrides.
pub fn mask_constrained_grad(grad: &mut Matrix) {
    let n = Tag::COUNT + 2;
    for from in 0..n {
        for to in 0..Tag::COUNT {
            if from != Tag::COUNT + 1 && !transition_allowed(from, to) {
                grad[(from, to)] = 0.0;
            }
        }
    }
}
