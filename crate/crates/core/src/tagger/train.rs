//! Shuffled mini-batch SGD with dev-F1 early stopping.

use std::collections::HashMap;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::batch_loss_and_grad;
use super::vocab::{EncodedSentence, UNK};
use super::TaggerModel;
use crate::corpus::Corpus;
use crate::eval::evaluate;
use crate::par::Execution;
use crate::{Error, Result};

/// Per-epoch record of one training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Dev span F1 (percent) after each epoch.
    pub dev_f1: Vec<f64>,
    /// Mean training NLL per epoch.
    pub train_loss: Vec<f64>,
    /// 1-based epoch of the kept parameters; 0 when no epoch ran.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.dev_f1.len()
    }

    pub fn best_f1(&self) -> Option<f64> {
        self.best_epoch.checked_sub(1).map(|i| self.dev_f1[i])
    }
}

/// SplitMix64 over a few words; derives independent sub-seeds.
pub(crate) fn mix(parts: &[u64]) -> u64 {
    let mut z: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn singletons(train: &[EncodedSentence]) -> HashMap<usize, usize> {
    let mut counts = HashMap::new();
    for s in train {
        for &w in &s.words {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts.retain(|_, c| *c == 1);
    counts
}

/// Trains `model` in place from its current parameters. The returned
/// history describes the run; `model` ends holding the best-dev parameters
/// (unchanged when `max_epochs` is 0).
pub fn fit(
    model: &mut TaggerModel,
    train: &Corpus,
    dev: &Corpus,
    exec: Execution,
) -> Result<TrainHistory> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Invalid(
            "training and dev corpora must be non-empty".into(),
        ));
    }
    let config = model.config.clone();
    config.validate()?;
    let encoded: Vec<EncodedSentence> = train
        .sentences
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| model.vocab.encode(s))
        .collect();
    let rare = if config.word_unk_dropout {
        singletons(&encoded)
    } else {
        HashMap::new()
    };

    let mut history = TrainHistory::default();
    let mut best = model.params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 1..=config.max_epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(&[config.seed, epoch as u64]));
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut rngs = Vec::with_capacity(chunk.len());
            let batch: Vec<EncodedSentence> = chunk
                .iter()
                .map(|&i| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(mix(&[config.seed, epoch as u64, i as u64]));
                    let mut s = encoded[i].clone();
                    if !rare.is_empty() {
                        for w in &mut s.words {
                            if rare.contains_key(w) && rng.random::<f64>() < 0.5 {
                                *w = UNK;
                            }
                        }
                    }
                    rngs.push(rng);
                    s
                })
                .collect();
            let (loss, mut grad) =
                batch_loss_and_grad(&model.params, &config, &batch, Some(&rngs), exec);
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {loss} at epoch {epoch}, batch {b} (learning rate {})",
                    config.learning_rate
                )));
            }
            if let Some(clip) = config.clip_norm {
                let norm = grad.norm();
                if norm > clip {
                    grad.scale(clip / norm);
                }
            }
            grad.apply_sgd(&mut model.params, config.learning_rate);
            epoch_loss += loss * chunk.len() as f64;
        }
        let mean_loss = epoch_loss / encoded.len().max(1) as f64;
        let predicted = model.tag(dev, exec);
        let f1 = evaluate(dev, &predicted)?.overall.f1;
        history.train_loss.push(mean_loss);
        history.dev_f1.push(f1);
        debug!("epoch {epoch}: loss {mean_loss:.4}, dev F1 {f1:.2}");
        if f1 > best_f1 {
            best_f1 = f1;
            best = model.params.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    model.params = best;
    if history.best_epoch > 0 {
        info!(
            "kept epoch {} of {} (dev F1 {:.2})",
            history.best_epoch,
            history.epochs_run(),
            best_f1
        );
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_separates_streams() {
        assert_ne!(mix(&[1, 2]), mix(&[2, 1]));
        assert_ne!(mix(&[1]), mix(&[1, 0]));
        assert_eq!(mix(&[7, 3]), mix(&[7, 3]));
    }

    #[test]
    fn history_best_lookup() {
        let h = TrainHistory {
            dev_f1: vec![10.0, 30.0, 20.0],
            train_loss: vec![3.0, 2.0, 1.0],
            best_epoch: 2,
            stopped_early: false,
        };
        assert_eq!(h.best_f1(), Some(30.0));
        assert_eq!(TrainHistory::default().best_f1(), None);
    }
}
