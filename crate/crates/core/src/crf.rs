//! Linear-chain CRF inference: forward-backward marginals and Viterbi.
//!
//! Scores are `emissions[t][y]` plus `transitions[y_prev][y]`; there are no
//! start or end scores, so a length-1 chain is a plain softmax.

use crate::tensor::log_sum_exp;

/// Returns `(log Z, unary marginals (n x l), pairwise marginals summed over positions (l x l))`.
pub(crate) fn marginals(em: &[f64], tr: &[f64], n: usize, l: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let alpha = forward(em, tr, n, l);
    let log_z = log_sum_exp(&alpha[(n - 1) * l..]);
    let mut buf = vec![0.0; l];

    let mut beta = vec![0.0; n * l];
    for t in (0..n - 1).rev() {
        for yp in 0..l {
            for (y, b) in buf.iter_mut().enumerate() {
                *b = tr[yp * l + y] + em[(t + 1) * l + y] + beta[(t + 1) * l + y];
            }
            beta[t * l + yp] = log_sum_exp(&buf);
        }
    }

    let unary: Vec<f64> = (0..n * l).map(|i| (alpha[i] + beta[i] - log_z).exp()).collect();
    let mut pairwise = vec![0.0; l * l];
    for t in 1..n {
        for yp in 0..l {
            for y in 0..l {
                pairwise[yp * l + y] += (alpha[(t - 1) * l + yp] + tr[yp * l + y] + em[t * l + y] + beta[t * l + y]
                    - log_z)
                    .exp();
            }
        }
    }
    (log_z, unary, pairwise)
}

/// Forward log-scores `alpha` (`n x l`).
fn forward(em: &[f64], tr: &[f64], n: usize, l: usize) -> Vec<f64> {
    let mut alpha = vec![0.0; n * l];
    alpha[..l].copy_from_slice(&em[..l]);
    let mut buf = vec![0.0; l];
    for t in 1..n {
        for y in 0..l {
            for (yp, b) in buf.iter_mut().enumerate() {
                *b = alpha[(t - 1) * l + yp] + tr[yp * l + y];
            }
            alpha[t * l + y] = log_sum_exp(&buf) + em[t * l + y];
        }
    }
    alpha
}

/// Log partition function by the forward recursion; an empty chain has
/// exactly one (empty) labelling, so its value is 0.
pub fn log_partition(em: &[f64], tr: &[f64], n: usize, l: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    log_sum_exp(&forward(em, tr, n, l)[(n - 1) * l..])
}

/// Unnormalized score of one labelling.
pub fn sequence_score(em: &[f64], tr: &[f64], labels: &[usize], l: usize) -> f64 {
    let mut s = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        s += em[t * l + y];
        if t > 0 {
            s += tr[labels[t - 1] * l + y];
        }
    }
    s
}

/// Highest-scoring label sequence. Ties resolve toward lower label indices,
/// both when choosing a predecessor and when choosing the final label.
pub fn viterbi(em: &[f64], tr: &[f64], n: usize, l: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut score = em[..l].to_vec();
    let mut back = vec![0usize; n * l];
    let mut next = vec![0.0; l];
    for t in 1..n {
        for y in 0..l {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for yp in 0..l {
                let s = score[yp] + tr[yp * l + y];
                if s > best {
                    best = s;
                    arg = yp;
                }
            }
            next[y] = best + em[t * l + y];
            back[t * l + y] = arg;
        }
        std::mem::swap(&mut score, &mut next);
    }
    let mut last = 0;
    for y in 1..l {
        if score[y] > score[last] {
            last = y;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t * l + path[t]];
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// All label sequences of length `n` over `l` labels, in lexicographic order.
    fn all_sequences(n: usize, l: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..l).map(move |y| {
                        let mut q = p.clone();
                        q.push(y);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
        (1usize..=6, 1usize..=5).prop_flat_map(|(n, l)| {
            (
                Just(n),
                Just(l),
                prop::collection::vec(-3.0f64..3.0, n * l),
                prop::collection::vec(-3.0f64..3.0, l * l),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn partition_matches_enumeration((n, l, em, tr) in instance()) {
            let scores: Vec<f64> = all_sequences(n, l).iter().map(|y| sequence_score(&em, &tr, y, l)).collect();
            let brute = log_sum_exp(&scores);
            prop_assert!((log_partition(&em, &tr, n, l) - brute).abs() < 1e-9);
        }

        #[test]
        fn viterbi_matches_enumeration((n, l, em, tr) in instance()) {
            let best = all_sequences(n, l)
                .into_iter()
                .map(|y| (sequence_score(&em, &tr, &y, l), y))
                .fold(None::<(f64, Vec<usize>)>, |acc, (s, y)| match acc {
                    Some((bs, by)) if bs >= s => Some((bs, by)),
                    _ => Some((s, y)),
                })
                .unwrap();
            prop_assert_eq!(viterbi(&em, &tr, n, l), best.1);
        }

        #[test]
        fn unary_marginals_sum_to_one((n, l, em, tr) in instance()) {
            let (_, unary, _) = marginals(&em, &tr, n, l);
            for t in 0..n {
                let s: f64 = unary[t * l..(t + 1) * l].iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_scores_give_n_ln_l() {
        let (n, l) = (4, 5);
        let z = log_partition(&vec![0.0; n * l], &vec![0.0; l * l], n, l);
        assert!((z - n as f64 * (l as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ties_prefer_lower_labels() {
        assert_eq!(viterbi(&[0.0; 9], &[0.0; 9], 3, 3), vec![0, 0, 0]);
    }

    #[test]
    fn single_step_prefers_strong_emission() {
        assert_eq!(viterbi(&[5.0, 0.0, 0.0], &[0.0; 9], 1, 3), vec![0]);
    }
}
