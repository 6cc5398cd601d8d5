use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{fill_uniform, Lstm};
use super::vocab::{Vocab, UNK};
use super::TaggerConfig;
use crate::corpus::Tag;
use crate::embeddings::{EmbeddingTable, UNK_WORD};
use crate::linalg::Matrix;
use crate::{Error, Result};

/// All trainable weights of the BiLSTM-CRF.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerParams {
    pub word_emb: Matrix,
    pub char_emb: Matrix,
    pub char_fwd: Lstm,
    pub char_bwd: Lstm,
    pub word_fwd: Lstm,
    pub word_bwd: Lstm,
    /// `K × 2·word_lstm_dim` emission projection.
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
    /// `(K + 2) × (K + 2)` including start and stop states.
    pub transitions: Matrix,
}

pub const TENSOR_NAMES: [&str; 17] = [
    "word_emb",
    "char_emb",
    "char_fwd.w",
    "char_fwd.u",
    "char_fwd.b",
    "char_bwd.w",
    "char_bwd.u",
    "char_bwd.b",
    "word_fwd.w",
    "word_fwd.u",
    "word_fwd.b",
    "word_bwd.w",
    "word_bwd.u",
    "word_bwd.b",
    "out.w",
    "out.b",
    "crf.transitions",
];

impl TaggerParams {
    pub fn zeros(config: &TaggerConfig, words: usize, chars: usize) -> Self {
        let k = Tag::COUNT;
        let token_dim = config.word_emb_dim + 2 * config.char_lstm_dim;
        TaggerParams {
            word_emb: Matrix::zeros(words, config.word_emb_dim),
            char_emb: Matrix::zeros(chars, config.char_emb_dim),
            char_fwd: Lstm::zeros(config.char_emb_dim, config.char_lstm_dim),
            char_bwd: Lstm::zeros(config.char_emb_dim, config.char_lstm_dim),
            word_fwd: Lstm::zeros(token_dim, config.word_lstm_dim),
            word_bwd: Lstm::zeros(token_dim, config.word_lstm_dim),
            out_w: Matrix::zeros(k, 2 * config.word_lstm_dim),
            out_b: vec![0.0; k],
            transitions: Matrix::zeros(k + 2, k + 2),
        }
    }

    /// Tensors in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.word_emb.data, &self.char_emb.data];
        for l in [
            &self.char_fwd,
            &self.char_bwd,
            &self.word_fwd,
            &self.word_bwd,
        ] {
            v.extend(l.tensors());
        }
        v.extend([
            &self.out_w.data[..],
            &self.out_b[..],
            &self.transitions.data[..],
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.word_emb.data, &mut self.char_emb.data];
        for l in [
            &mut self.char_fwd,
            &mut self.char_bwd,
            &mut self.word_fwd,
            &mut self.word_bwd,
        ] {
            v.extend(l.tensors_mut());
        }
        v.extend([
            &mut self.out_w.data[..],
            &mut self.out_b[..],
            &mut self.transitions.data[..],
        ]);
        v
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut v = vec![
            vec![self.word_emb.rows, self.word_emb.cols],
            vec![self.char_emb.rows, self.char_emb.cols],
        ];
        for l in [
            &self.char_fwd,
            &self.char_bwd,
            &self.word_fwd,
            &self.word_bwd,
        ] {
            v.extend(l.shapes());
        }
        v.push(vec![self.out_w.rows, self.out_w.cols]);
        v.push(vec![self.out_b.len()]);
        v.push(vec![self.transitions.rows, self.transitions.cols]);
        v
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Appends rows for words and characters added to `vocab` since these
    /// params were built, drawing from `rng` (or copying `pretrained`).
    pub(crate) fn grow(
        &mut self,
        vocab: &Vocab,
        pretrained: Option<&EmbeddingTable>,
        rng: &mut ChaCha8Rng,
    ) {
        let dim = self.word_emb.cols;
        let mut row = vec![0.0; dim];
        for w in &vocab.words()[self.word_emb.rows..] {
            fill_uniform(&mut row, dim, rng);
            if let Some(v) = pretrained.and_then(|t| t.resolve(w)) {
                row.copy_from_slice(v);
            }
            self.word_emb.data.extend_from_slice(&row);
            self.word_emb.rows += 1;
        }
        let cdim = self.char_emb.cols;
        let mut crow = vec![0.0; cdim];
        for _ in self.char_emb.rows..vocab.char_count() {
            fill_uniform(&mut crow, cdim, rng);
            self.char_emb.data.extend_from_slice(&crow);
            self.char_emb.rows += 1;
        }
    }
}

/// Deterministic initialization from `config.seed`. Rows of words covered by
/// `pretrained` are copied; everything else is uniform in ±√(3 / fan_in).
pub fn init_params(
    config: &TaggerConfig,
    vocab: &Vocab,
    pretrained: Option<&EmbeddingTable>,
) -> Result<TaggerParams> {
    config.validate()?;
    if let Some(t) = pretrained {
        if t.dim() != config.word_emb_dim {
            return Err(Error::DimensionMismatch {
                expected: config.word_emb_dim,
                found: t.dim(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut p = TaggerParams::zeros(config, vocab.word_count(), vocab.char_count());
    let k = Tag::COUNT;
    let token_dim = config.word_emb_dim + 2 * config.char_lstm_dim;
    fill_uniform(&mut p.word_emb.data, config.word_emb_dim, &mut rng);
    fill_uniform(&mut p.char_emb.data, config.char_emb_dim, &mut rng);
    p.char_fwd = Lstm::random(config.char_emb_dim, config.char_lstm_dim, &mut rng);
    p.char_bwd = Lstm::random(config.char_emb_dim, config.char_lstm_dim, &mut rng);
    p.word_fwd = Lstm::random(token_dim, config.word_lstm_dim, &mut rng);
    p.word_bwd = Lstm::random(token_dim, config.word_lstm_dim, &mut rng);
    fill_uniform(&mut p.out_w.data, 2 * config.word_lstm_dim, &mut rng);
    fill_uniform(&mut p.out_b, 2 * config.word_lstm_dim, &mut rng);
    fill_uniform(&mut p.transitions.data, k + 2, &mut rng);

    if let Some(table) = pretrained {
        for (i, w) in vocab.words().iter().enumerate() {
            let v = if i == UNK {
                table.get(UNK_WORD)
            } else {
                table.resolve(w)
            };
            if let Some(v) = v {
                p.word_emb.row_mut(i).copy_from_slice(v);
            }
        }
    }
    Ok(p)
}

/// Gradients with sparse rows for the two embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub word_emb: BTreeMap<usize, Vec<f64>>,
    pub char_emb: BTreeMap<usize, Vec<f64>>,
    pub char_fwd: Lstm,
    pub char_bwd: Lstm,
    pub word_fwd: Lstm,
    pub word_bwd: Lstm,
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
    pub transitions: Matrix,
}

impl Gradients {
    pub fn zeros_like(p: &TaggerParams) -> Self {
        let z = |l: &Lstm| Lstm::zeros(l.input(), l.hidden());
        Gradients {
            word_emb: BTreeMap::new(),
            char_emb: BTreeMap::new(),
            char_fwd: z(&p.char_fwd),
            char_bwd: z(&p.char_bwd),
            word_fwd: z(&p.word_fwd),
            word_bwd: z(&p.word_bwd),
            out_w: Matrix::zeros(p.out_w.rows, p.out_w.cols),
            out_b: vec![0.0; p.out_b.len()],
            transitions: Matrix::zeros(p.transitions.rows, p.transitions.cols),
        }
    }

    fn dense_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in [
            &mut self.char_fwd,
            &mut self.char_bwd,
            &mut self.word_fwd,
            &mut self.word_bwd,
        ] {
            v.extend(l.tensors_mut());
        }
        v.extend([
            &mut self.out_w.data[..],
            &mut self.out_b[..],
            &mut self.transitions.data[..],
        ]);
        v
    }

    fn dense(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in [
            &self.char_fwd,
            &self.char_bwd,
            &self.word_fwd,
            &self.word_bwd,
        ] {
            v.extend(l.tensors());
        }
        v.extend([
            &self.out_w.data[..],
            &self.out_b[..],
            &self.transitions.data[..],
        ]);
        v
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (rows, orows) in [
            (&mut self.word_emb, &other.word_emb),
            (&mut self.char_emb, &other.char_emb),
        ] {
            for (i, g) in orows {
                let e = rows.entry(*i).or_insert_with(|| vec![0.0; g.len()]);
                e.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        for (a, b) in self.dense_mut().into_iter().zip(other.dense()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for rows in [&mut self.word_emb, &mut self.char_emb] {
            rows.values_mut().flatten().for_each(|x| *x *= factor);
        }
        for t in self.dense_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        let sparse: f64 = self
            .word_emb
            .values()
            .chain(self.char_emb.values())
            .flatten()
            .map(|x| x * x)
            .sum();
        let dense: f64 = self
            .dense()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum();
        (sparse + dense).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.norm().is_finite()
    }

    /// Dense copies in [`TENSOR_NAMES`] order, shaped like `params`.
    pub fn to_dense(&self, params: &TaggerParams) -> Vec<Vec<f64>> {
        let rows_to_dense = |rows: &BTreeMap<usize, Vec<f64>>, m: &Matrix| {
            let mut d = vec![0.0; m.data.len()];
            for (i, g) in rows {
                d[i * m.cols..(i + 1) * m.cols].copy_from_slice(g);
            }
            d
        };
        let mut out = vec![
            rows_to_dense(&self.word_emb, &params.word_emb),
            rows_to_dense(&self.char_emb, &params.char_emb),
        ];
        out.extend(self.dense().into_iter().map(<[f64]>::to_vec));
        out
    }

    /// `params -= lr · self`
    pub fn apply_sgd(&self, params: &mut TaggerParams, lr: f64) {
        for (i, g) in &self.word_emb {
            params
                .word_emb
                .row_mut(*i)
                .iter_mut()
                .zip(g)
                .for_each(|(p, g)| *p -= lr * g);
        }
        for (i, g) in &self.char_emb {
            params
                .char_emb
                .row_mut(*i)
                .iter_mut()
                .zip(g)
                .for_each(|(p, g)| *p -= lr * g);
        }
        let mut dense_params: Vec<&mut [f64]> = params.tensors_mut().into_iter().skip(2).collect();
        for (p, g) in dense_params.iter_mut().zip(self.dense()) {
            p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
        }
    }
}
