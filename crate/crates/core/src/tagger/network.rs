//! Forward and backward passes of the BiLSTM-CRF for one sentence.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::crf;
use super::lstm::LstmTrace;
use super::params::{Gradients, TaggerParams};
use super::vocab::EncodedSentence;
use super::TaggerConfig;
use crate::linalg::Matrix;
use crate::par::Execution;

struct TokenTrace {
    char_fwd: LstmTrace,
    char_bwd: LstmTrace,
    /// Inverted-dropout multipliers; empty when dropout is off.
    mask: Vec<f64>,
}

struct SentenceTrace {
    tokens: Vec<TokenTrace>,
    word_fwd: LstmTrace,
    word_bwd: LstmTrace,
    hidden: Vec<Vec<f64>>,
}

fn reversed(xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    xs.iter().rev().cloned().collect()
}

fn forward(
    params: &TaggerParams,
    config: &TaggerConfig,
    sentence: &EncodedSentence,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> (Matrix, SentenceTrace) {
    let n = sentence.words.len();
    let mut reps = Vec::with_capacity(n);
    let mut tokens = Vec::with_capacity(n);
    for (&w, chars) in sentence.words.iter().zip(&sentence.chars) {
        let xs: Vec<Vec<f64>> = chars
            .iter()
            .map(|&c| params.char_emb.row(c).to_vec())
            .collect();
        let char_bwd = params.char_bwd.forward(reversed(&xs));
        let char_fwd = params.char_fwd.forward(xs);
        let mut rep = params.word_emb.row(w).to_vec();
        rep.extend_from_slice(char_fwd.last());
        rep.extend_from_slice(char_bwd.last());
        let mut mask = Vec::new();
        if let Some(rng) = dropout.as_deref_mut() {
            if config.dropout > 0.0 {
                let keep = 1.0 - config.dropout;
                mask = (0..rep.len())
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                rep.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
            }
        }
        reps.push(rep);
        tokens.push(TokenTrace {
            char_fwd,
            char_bwd,
            mask,
        });
    }
    let word_bwd = params.word_bwd.forward(reversed(&reps));
    let word_fwd = params.word_fwd.forward(reps);
    let k = params.out_b.len();
    let mut emissions = Matrix::zeros(n, k);
    let mut hidden = Vec::with_capacity(n);
    for t in 0..n {
        let mut h = word_fwd.outputs()[t].clone();
        h.extend_from_slice(&word_bwd.outputs()[n - 1 - t]);
        let row = emissions.row_mut(t);
        row.copy_from_slice(&params.out_b);
        params.out_w.matvec_add(&h, row);
        hidden.push(h);
    }
    (
        emissions,
        SentenceTrace {
            tokens,
            word_fwd,
            word_bwd,
            hidden,
        },
    )
}

/// Unnormalized tag scores, one row per token. `dropout` supplies the
/// random stream in training mode; `None` is inference and deterministic.
pub fn encode_sentence(
    params: &TaggerParams,
    config: &TaggerConfig,
    sentence: &EncodedSentence,
    dropout: Option<&mut ChaCha8Rng>,
) -> Matrix {
    forward(params, config, sentence, dropout).0
}

/// Transition matrix used for training under `config`.
pub(crate) fn training_transitions(params: &TaggerParams, config: &TaggerConfig) -> Matrix {
    if config.constrain_training {
        crf::constrain(&params.transitions)
    } else {
        params.transitions.clone()
    }
}

/// NLL of one sentence and its gradient with respect to every parameter.
pub fn sentence_loss_and_grad(
    params: &TaggerParams,
    config: &TaggerConfig,
    sentence: &EncodedSentence,
    dropout: Option<&mut ChaCha8Rng>,
) -> (f64, Gradients) {
    let mut grad = Gradients::zeros_like(params);
    if sentence.words.is_empty() {
        return (0.0, grad);
    }
    let (emissions, trace) = forward(params, config, sentence, dropout);
    let transitions = training_transitions(params, config);
    let (loss, crf_grad) = crf::nll_with_grad(&emissions, &transitions, &sentence.tags);
    grad.transitions = crf_grad.transitions;
    if config.constrain_training {
        crf::mask_constrained_grad(&mut grad.transitions);
    }

    let n = sentence.words.len();
    let hw = params.word_fwd.hidden();
    let mut d_fwd = vec![Vec::new(); n];
    let mut d_bwd = vec![Vec::new(); n];
    for t in 0..n {
        let de = crf_grad.emissions.row(t);
        grad.out_w.add_outer(de, &trace.hidden[t]);
        grad.out_b.iter_mut().zip(de).for_each(|(g, d)| *g += d);
        let mut dh = vec![0.0; 2 * hw];
        params.out_w.matvec_t_add(de, &mut dh);
        d_bwd[n - 1 - t] = dh.split_off(hw);
        d_fwd[t] = dh;
    }
    let dreps_f = params
        .word_fwd
        .backward(&trace.word_fwd, &d_fwd, &mut grad.word_fwd);
    let dreps_b = params
        .word_bwd
        .backward(&trace.word_bwd, &d_bwd, &mut grad.word_bwd);

    let we = params.word_emb.cols;
    let hc = params.char_fwd.hidden();
    for t in 0..n {
        let tok = &trace.tokens[t];
        let mut drep: Vec<f64> = dreps_f[t]
            .iter()
            .zip(&dreps_b[n - 1 - t])
            .map(|(a, b)| a + b)
            .collect();
        if !tok.mask.is_empty() {
            drep.iter_mut().zip(&tok.mask).for_each(|(d, m)| *d *= m);
        }
        let row = grad
            .word_emb
            .entry(sentence.words[t])
            .or_insert_with(|| vec![0.0; we]);
        row.iter_mut().zip(&drep[..we]).for_each(|(g, d)| *g += d);

        let chars = &sentence.chars[t];
        let m = chars.len();
        if m == 0 {
            continue;
        }
        let mut d_out = vec![vec![0.0; hc]; m];
        d_out[m - 1].copy_from_slice(&drep[we..we + hc]);
        let dx_f = params
            .char_fwd
            .backward(&tok.char_fwd, &d_out, &mut grad.char_fwd);
        d_out[m - 1].copy_from_slice(&drep[we + hc..]);
        let dx_b = params
            .char_bwd
            .backward(&tok.char_bwd, &d_out, &mut grad.char_bwd);
        let ce = params.char_emb.cols;
        for (i, &c) in chars.iter().enumerate() {
            let row = grad.char_emb.entry(c).or_insert_with(|| vec![0.0; ce]);
            let (a, b) = (&dx_f[i], &dx_b[m - 1 - i]);
            for j in 0..ce {
                row[j] += a[j] + b[j];
            }
        }
    }
    (loss, grad)
}

/// Mean NLL over `batch` and its gradient. Sentence `i` draws dropout from
/// `rngs[i]` when given. Per-sentence work runs under `exec`; the reduction
/// is in batch order, so the result does not depend on the strategy.
pub fn batch_loss_and_grad(
    params: &TaggerParams,
    config: &TaggerConfig,
    batch: &[EncodedSentence],
    rngs: Option<&[ChaCha8Rng]>,
    exec: Execution,
) -> (f64, Gradients) {
    let parts = exec.map_indexed(batch.len(), |i| {
        let mut rng = rngs.map(|r| r[i].clone());
        sentence_loss_and_grad(params, config, &batch[i], rng.as_mut())
    });
    let mut total = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g);
    }
    let scale = 1.0 / batch.len().max(1) as f64;
    total.scale(scale);
    (loss * scale, total)
}

/// Mean NLL without gradients (inference mode).
pub fn batch_loss(
    params: &TaggerParams,
    config: &TaggerConfig,
    batch: &[EncodedSentence],
    exec: Execution,
) -> f64 {
    let transitions = training_transitions(params, config);
    let losses = exec.map(batch, |s| {
        if s.words.is_empty() {
            return 0.0;
        }
        let e = encode_sentence(params, config, s, None);
        crf::neg_log_likelihood(&e, &transitions, &s.tags)
    });
    losses.iter().sum::<f64>() / batch.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::corpus::fixtures::danish_examples;
    use crate::corpus::Tag;
    use crate::tagger::params::{init_params, TENSOR_NAMES};
    use crate::tagger::vocab::{build_vocab, Vocab};

    fn tiny_config() -> TaggerConfig {
        TaggerConfig {
            word_emb_dim: 3,
            word_lstm_dim: 4,
            char_emb_dim: 3,
            char_lstm_dim: 5,
            dropout: 0.0,
            ..TaggerConfig::default()
        }
    }

    fn setup(config: &TaggerConfig) -> (Vocab, TaggerParams, Vec<EncodedSentence>) {
        let c = danish_examples();
        let v = build_vocab(&[&c], None, &[]);
        let p = init_params(config, &v, None).unwrap();
        let batch = c.sentences.iter().map(|s| v.encode(s)).collect();
        (v, p, batch)
    }

    #[test]
    fn emissions_have_one_row_per_token() {
        let config = tiny_config();
        let (_, p, batch) = setup(&config);
        for s in &batch {
            let e = encode_sentence(&p, &config, s, None);
            assert_eq!((e.rows, e.cols), (s.words.len(), Tag::COUNT));
            assert_eq!(e, encode_sentence(&p, &config, s, None));
        }
    }

    #[test]
    fn dropout_is_reproducible_from_the_stream() {
        let config = TaggerConfig {
            dropout: 0.5,
            ..tiny_config()
        };
        let (_, p, batch) = setup(&config);
        let run = |seed| {
            encode_sentence(
                &p,
                &config,
                &batch[0],
                Some(&mut ChaCha8Rng::seed_from_u64(seed)),
            )
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        assert_ne!(run(1), encode_sentence(&p, &config, &batch[0], None));
    }

    /// Central differences on every scalar of every tensor.
    fn check_gradients(config: &TaggerConfig, p: &TaggerParams, batch: &[EncodedSentence]) {
        let (_, g) = batch_loss_and_grad(p, config, batch, None, Execution::Sequential);
        let analytic = g.to_dense(p);
        let h = 1e-5;
        let mut q = p.clone();
        for (ti, name) in TENSOR_NAMES.iter().enumerate() {
            for j in 0..analytic[ti].len() {
                let orig = q.tensors()[ti][j];
                q.tensors_mut()[ti][j] = orig + h;
                let up = batch_loss(&q, config, batch, Execution::Sequential);
                q.tensors_mut()[ti][j] = orig - h;
                let down = batch_loss(&q, config, batch, Execution::Sequential);
                q.tensors_mut()[ti][j] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[ti][j];
                let tol = (1e-4 * a.abs().max(numeric.abs())).max(1e-6);
                assert!(
                    (a - numeric).abs() <= tol,
                    "{name}[{j}]: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let config = tiny_config();
        let (_, p, batch) = setup(&config);
        check_gradients(&config, &p, &batch);
    }

    #[test]
    fn constrained_training_gradients_match_finite_differences() {
        let config = TaggerConfig {
            constrain_training: true,
            ..tiny_config()
        };
        let (_, p, batch) = setup(&config);
        check_gradients(&config, &p, &batch);
    }

    #[test]
    fn unused_rows_get_exactly_zero_gradient() {
        let config = tiny_config();
        let c = danish_examples();
        let v = Vocab::from_parts(
            vec!["Rom".into(), "ubrugt".into(), "aldrig".into()],
            "Romzq".chars().collect(),
        );
        let p = init_params(&config, &v, None).unwrap();
        let batch = vec![v.encode(&c.sentences[0])];
        let (_, g) = batch_loss_and_grad(&p, &config, &batch, None, Execution::Sequential);
        let dense = g.to_dense(&p);
        let unused = [v.word_id("ubrugt"), v.word_id("aldrig")];
        for i in unused {
            assert!(dense[0][i * 3..(i + 1) * 3].iter().all(|&x| x == 0.0));
        }
        assert!(!g.word_emb.contains_key(&v.word_id("ubrugt")));
        assert!(!g.char_emb.contains_key(&v.char_id('z')));
    }

    #[test]
    fn small_step_decreases_loss() {
        let config = TaggerConfig {
            word_emb_dim: 8,
            word_lstm_dim: 6,
            ..tiny_config()
        };
        let (_, mut p, batch) = setup(&config);
        let (before, g) = batch_loss_and_grad(&p, &config, &batch, None, Execution::Sequential);
        g.apply_sgd(&mut p, 1e-3);
        let after = batch_loss(&p, &config, &batch, Execution::Sequential);
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn strategies_agree_bitwise() {
        let config = tiny_config();
        let (_, p, batch) = setup(&config);
        let (l1, g1) = batch_loss_and_grad(&p, &config, &batch, None, Execution::Sequential);
        let (l2, g2) = batch_loss_and_grad(&p, &config, &batch, None, Execution::Parallel);
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }

    /// Swapping two vocabulary rows that the sentence does not use, together
    /// with their index entries, changes nothing.
    #[test]
    fn permuting_unrelated_rows_keeps_emissions() {
        let config = tiny_config();
        let c = danish_examples();
        let s = &c.sentences[0];
        let words = |order: [&str; 3]| order.iter().map(|w| w.to_string()).collect::<Vec<_>>();
        let mut chars: Vec<char> = s.words().flat_map(str::chars).collect();
        chars.sort();
        chars.dedup();
        let va = Vocab::from_parts(words(["x", "y", "Rom"]), chars.clone());
        let vb = Vocab::from_parts(words(["y", "x", "Rom"]), chars);
        let pa = init_params(&config, &va, None).unwrap();
        let mut pb = pa.clone();
        let (ix, iy) = (va.word_id("x"), va.word_id("y"));
        let (rx, ry) = (pa.word_emb.row(ix).to_vec(), pa.word_emb.row(iy).to_vec());
        pb.word_emb.row_mut(vb.word_id("x")).copy_from_slice(&rx);
        pb.word_emb.row_mut(vb.word_id("y")).copy_from_slice(&ry);
        let ea = encode_sentence(&pa, &config, &va.encode(s), None);
        let eb = encode_sentence(&pb, &config, &vb.encode(s), None);
        assert_eq!(ea, eb);
    }
}
