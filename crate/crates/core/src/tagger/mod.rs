//! BiLSTM-CRF sequence tagger.
//!
//! Each token is represented by its word embedding concatenated with the
//! final states of a forward and a backward character LSTM. A bidirectional
//! word LSTM feeds a linear emission layer, and a linear-chain CRF with
//! start and stop states scores tag sequences.

pub mod crf;
mod io;
pub mod lstm;
mod network;
mod params;
mod train;
mod vocab;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC};
pub use network::{batch_loss, batch_loss_and_grad, encode_sentence, sentence_loss_and_grad};
pub use params::{init_params, Gradients, TaggerParams, TENSOR_NAMES};
pub use train::{fit, TrainHistory};
pub use vocab::{build_vocab, EncodedSentence, Vocab, UNK, UNK_WORD};

use crate::corpus::{Corpus, Sentence, Tag};
use crate::embeddings::EmbeddingTable;
use crate::kv::KeyValues;
use crate::linalg::Matrix;
use crate::par::Execution;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggerConfig {
    pub word_emb_dim: usize,
    pub word_lstm_dim: usize,
    pub char_emb_dim: usize,
    /// Per direction.
    pub char_lstm_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Rescale batch gradients whose L2 norm exceeds this.
    pub clip_norm: Option<f64>,
    /// Replace singleton training words by UNK with probability 0.5.
    pub word_unk_dropout: bool,
    pub constrain_decoding: bool,
    pub constrain_training: bool,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            word_emb_dim: 64,
            word_lstm_dim: 50,
            char_emb_dim: 50,
            char_lstm_dim: 50,
            dropout: 0.25,
            learning_rate: 0.1,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            batch_size: 1,
            clip_norm: Some(5.0),
            word_unk_dropout: false,
            constrain_decoding: true,
            constrain_training: false,
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_emb_dim", self.word_emb_dim),
            ("word_lstm_dim", self.word_lstm_dim),
            ("char_emb_dim", self.char_emb_dim),
            ("char_lstm_dim", self.char_lstm_dim),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!("clip_norm {c} must be positive")));
            }
        }
        Ok(())
    }

    /// Reads `tagger.<field> = <json>` entries over the defaults; `none`
    /// stands for null. Keys without the prefix are ignored.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut value = serde_json::to_value(TaggerConfig::default())?;
        let fields = value
            .as_object_mut()
            .expect("config serializes to an object");
        for key in kv.keys() {
            let Some(field) = key.strip_prefix("tagger.") else {
                continue;
            };
            if !fields.contains_key(field) {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
            let raw = kv.get(key).unwrap_or_default();
            let parsed = match raw {
                "none" => serde_json::Value::Null,
                _ => serde_json::from_str(raw)
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{raw}`")))?,
            };
            fields.insert(field.to_string(), parsed);
        }
        let config: TaggerConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("tagger settings: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Inverse of [`TaggerConfig::from_kv`].
    pub fn write_kv(&self, kv: &mut KeyValues) {
        if let Ok(serde_json::Value::Object(fields)) = serde_json::to_value(self) {
            for (k, v) in fields {
                let text = if v.is_null() {
                    "none".to_string()
                } else {
                    v.to_string()
                };
                kv.set(format!("tagger.{k}"), text);
            }
        }
    }
}

/// Config, vocabulary and weights: everything needed to tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub config: TaggerConfig,
    pub vocab: Vocab,
    pub params: TaggerParams,
}

impl TaggerModel {
    /// Freshly initialized model.
    pub fn new(
        config: TaggerConfig,
        vocab: Vocab,
        pretrained: Option<&EmbeddingTable>,
    ) -> Result<Self> {
        let params = init_params(&config, &vocab, pretrained)?;
        Ok(TaggerModel {
            config,
            vocab,
            params,
        })
    }

    pub fn emissions(&self, sentence: &Sentence) -> Matrix {
        encode_sentence(
            &self.params,
            &self.config,
            &self.vocab.encode(sentence),
            None,
        )
    }

    fn decode_transitions(&self) -> Matrix {
        if self.config.constrain_decoding {
            crf::constrain(&self.params.transitions)
        } else {
            self.params.transitions.clone()
        }
    }

    fn tag_with(&self, sentence: &Sentence, transitions: &Matrix) -> Sentence {
        if sentence.is_empty() {
            return sentence.clone();
        }
        let (path, _) = crf::viterbi(&self.emissions(sentence), transitions);
        let tags: Vec<Tag> = path
            .into_iter()
            .map(|i| Tag::from_index(i).expect("viterbi returns tag indices"))
            .collect();
        sentence.with_tags(&tags)
    }

    pub fn tag_sentence(&self, sentence: &Sentence) -> Sentence {
        self.tag_with(sentence, &self.decode_transitions())
    }

    /// Viterbi tags for every sentence; token texts and extra columns are
    /// kept, only tags change.
    pub fn tag(&self, corpus: &Corpus, exec: Execution) -> Corpus {
        let transitions = self.decode_transitions();
        let sentences = exec.map(&corpus.sentences, |s| self.tag_with(s, &transitions));
        Corpus {
            sentences,
            language: corpus.language.clone(),
        }
    }

    /// Adds words and characters from `train` (and pretrained-covered words
    /// of `extra`) with fresh rows. Returns the number of words added.
    pub fn extend_vocab(
        &mut self,
        train: &[&Corpus],
        pretrained: Option<&EmbeddingTable>,
        extra: &[&Corpus],
    ) -> Result<usize> {
        if let Some(t) = pretrained {
            if t.dim() != self.config.word_emb_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.config.word_emb_dim,
                    found: t.dim(),
                });
            }
        }
        let added = self.vocab.extend(train, pretrained, extra);
        let mut rng = ChaCha8Rng::seed_from_u64(train::mix(&[
            self.config.seed,
            self.vocab.word_count() as u64,
            self.vocab.char_count() as u64,
        ]));
        self.params.grow(&self.vocab, pretrained, &mut rng);
        Ok(added)
    }
}

/// Builds the vocabulary (training words, plus words of `train`, `dev` and
/// `extra` covered by `pretrained`), initializes, and trains.
pub fn train(
    config: &TaggerConfig,
    train: &Corpus,
    dev: &Corpus,
    pretrained: Option<&EmbeddingTable>,
    extra: &[&Corpus],
    exec: Execution,
) -> Result<(TaggerModel, TrainHistory)> {
    config.validate()?;
    let mut covered: Vec<&Corpus> = vec![dev];
    covered.extend_from_slice(extra);
    let vocab = build_vocab(&[train], pretrained, &covered);
    let mut model = TaggerModel::new(config.clone(), vocab, pretrained)?;
    let history = fit(&mut model, train, dev, exec)?;
    Ok((model, history))
}
