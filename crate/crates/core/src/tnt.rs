//! Second-order HMM tagger after TnT.
//!
//! Transitions are a deleted-interpolation mix of unigram, bigram and
//! trigram relative frequencies, with two start pads and a stop tag around
//! every sentence. Known words emit with their maximum-likelihood
//! probability; unknown words go through a suffix model built from rare
//! training words, with separate statistics for capitalized forms.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Reader, Writer};
use crate::corpus::{Corpus, Sentence, Tag};
use crate::par::Execution;
use crate::{Error, Result};

pub const TNT_MAGIC: &[u8; 8] = b"XLNERTNT";
pub const MAX_SUFFIX: usize = 10;
/// Words seen fewer times than this feed the suffix model.
pub const RARE_THRESHOLD: usize = 10;

/// Decoding beam over `(previous tag, tag)` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Beam {
    #[default]
    Exact,
    Width(usize),
}

impl std::str::FromStr for Beam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "inf" => Ok(Beam::Exact),
            _ => match s.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Beam::Width(k)),
                _ => Err(Error::Config(format!(
                    "beam must be `exact` or a width >= 1, got `{s}`"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
struct SuffixTrie {
    counts: HashMap<String, Vec<f64>>,
    base: Vec<f64>,
}

impl SuffixTrie {
    fn new(tags: usize) -> Self {
        SuffixTrie {
            counts: HashMap::new(),
            base: vec![0.0; tags],
        }
    }

    fn is_empty(&self) -> bool {
        self.base.iter().all(|&c| c == 0.0)
    }

    fn add(&mut self, word: &str, tag: usize, count: f64) {
        self.base[tag] += count;
        let chars: Vec<char> = word.chars().collect();
        for len in 1..=chars.len().min(MAX_SUFFIX) {
            let suffix: String = chars[chars.len() - len..].iter().collect();
            let tags = self.base.len();
            self.counts.entry(suffix).or_insert_with(|| vec![0.0; tags])[tag] += count;
        }
    }

    /// Successive abstraction from the empty suffix up to the longest one
    /// observed.
    fn distribution(&self, word: &str, theta: f64) -> Vec<f64> {
        let normalized = |c: &[f64]| {
            let total: f64 = c.iter().sum();
            c.iter().map(|x| x / total).collect::<Vec<f64>>()
        };
        let mut p = normalized(&self.base);
        let chars: Vec<char> = word.chars().collect();
        for len in 1..=chars.len().min(MAX_SUFFIX) {
            let suffix: String = chars[chars.len() - len..].iter().collect();
            let Some(c) = self.counts.get(&suffix) else {
                break;
            };
            let phat = normalized(c);
            for (pi, hi) in p.iter_mut().zip(phat) {
                *pi = (hi + theta * *pi) / (1.0 + theta);
            }
        }
        p
    }
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

/// Estimated trigram HMM. Tag index `n` (the number of tags) stands for the
/// start pad as a context and the stop tag as a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TntModel {
    tags: Vec<Tag>,
    /// `[λ1, λ2, λ3]` for unigram, bigram, trigram.
    lambdas: [f64; 3],
    unigram: Vec<f64>,
    bigram: Vec<Vec<f64>>,
    trigram: Vec<Vec<Vec<f64>>>,
    /// Smoothed `P(t3 | t1, t2)`, indexed `[t1][t2][t3]`.
    transitions: Vec<Vec<Vec<f64>>>,
    lexicon: HashMap<String, Vec<f64>>,
    tag_counts: Vec<f64>,
    suffix_lower: SuffixTrie,
    suffix_upper: SuffixTrie,
    theta: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl TntModel {
    pub fn estimate(train: &Corpus) -> Result<TntModel> {
        let sentences: Vec<&Sentence> = train.sentences.iter().filter(|s| !s.is_empty()).collect();
        if sentences.is_empty() {
            return Err(Error::Invalid(
                "cannot estimate a tagger from an empty corpus".into(),
            ));
        }
        let mut present = [false; Tag::COUNT];
        for s in &sentences {
            for t in s.tags() {
                present[t.index()] = true;
            }
        }
        let tags: Vec<Tag> = Tag::ALL
            .into_iter()
            .filter(|t| present[t.index()])
            .collect();
        let n = tags.len();
        let mut index = [usize::MAX; Tag::COUNT];
        for (i, t) in tags.iter().enumerate() {
            index[t.index()] = i;
        }

        let mut unigram = vec![0.0; n + 1];
        let mut bigram = vec![vec![0.0; n + 1]; n + 1];
        let mut trigram = vec![vec![vec![0.0; n + 1]; n + 1]; n + 1];
        let mut lexicon: HashMap<String, Vec<f64>> = HashMap::new();
        let mut tag_counts = vec![0.0; n];
        for s in &sentences {
            let mut seq = vec![n, n];
            seq.extend(s.tokens.iter().map(|t| index[t.tag.index()]));
            seq.push(n);
            for w in seq.windows(3) {
                unigram[w[2]] += 1.0;
                bigram[w[1]][w[2]] += 1.0;
                trigram[w[0]][w[1]][w[2]] += 1.0;
            }
            for tok in &s.tokens {
                let t = index[tok.tag.index()];
                tag_counts[t] += 1.0;
                lexicon
                    .entry(tok.text.clone())
                    .or_insert_with(|| vec![0.0; n])[t] += 1.0;
            }
        }

        let lambdas = deleted_interpolation(&unigram, &bigram, &trigram);

        let total: f64 = unigram.iter().sum();
        let mut transitions = vec![vec![vec![0.0; n + 1]; n + 1]; n + 1];
        for t1 in 0..=n {
            for t2 in 0..=n {
                let c1: f64 = bigram[t2].iter().sum();
                let c2: f64 = trigram[t1][t2].iter().sum();
                for t3 in 0..=n {
                    let p1 = unigram[t3] / total;
                    let p2 = if c1 > 0.0 { bigram[t2][t3] / c1 } else { p1 };
                    let p3 = if c2 > 0.0 {
                        trigram[t1][t2][t3] / c2
                    } else {
                        p2
                    };
                    transitions[t1][t2][t3] = lambdas[0] * p1 + lambdas[1] * p2 + lambdas[2] * p3;
                }
            }
        }

        let mut suffix_lower = SuffixTrie::new(n);
        let mut suffix_upper = SuffixTrie::new(n);
        for (word, counts) in &lexicon {
            let freq: f64 = counts.iter().sum();
            if freq >= RARE_THRESHOLD as f64 {
                continue;
            }
            let trie = if is_capitalized(word) {
                &mut suffix_upper
            } else {
                &mut suffix_lower
            };
            for (t, &c) in counts.iter().enumerate() {
                if c > 0.0 {
                    trie.add(word, t, c);
                }
            }
        }

        let tokens: f64 = tag_counts.iter().sum();
        let theta = if n > 1 {
            let probs: Vec<f64> = tag_counts.iter().map(|c| c / tokens).collect();
            let mean = probs.iter().sum::<f64>() / n as f64;
            (probs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };

        Ok(TntModel {
            tags,
            lambdas,
            unigram,
            bigram,
            trigram,
            transitions,
            lexicon,
            tag_counts,
            suffix_lower,
            suffix_upper,
            theta,
        })
    }

    /// Tags observed in training, in fixed label order.
    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn lambdas(&self) -> [f64; 3] {
        self.lambdas
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn suffix_model_is_empty(&self) -> bool {
        self.suffix_lower.is_empty() && self.suffix_upper.is_empty()
    }

    fn position(&self, tag: Option<Tag>) -> Option<usize> {
        match tag {
            None => Some(self.tags.len()),
            Some(t) => self.tags.iter().position(|&x| x == t),
        }
    }

    /// Smoothed `P(t3 | t1, t2)`; `None` is the start pad in context
    /// position and the stop tag as `t3`. Zero for tags never seen.
    pub fn transition(&self, t1: Option<Tag>, t2: Option<Tag>, t3: Option<Tag>) -> f64 {
        match (self.position(t1), self.position(t2), self.position(t3)) {
            (Some(a), Some(b), Some(c)) => self.transitions[a][b][c],
            _ => 0.0,
        }
    }

    /// Emission score of `word` under `tag` (see [`TntModel::decode`]); zero
    /// for tags never seen in training.
    pub fn emission(&self, word: &str, tag: Tag) -> f64 {
        match self.tags.iter().position(|&t| t == tag) {
            Some(i) => self.emissions(word)[i],
            None => 0.0,
        }
    }

    pub fn is_known(&self, word: &str) -> bool {
        self.lexicon.contains_key(word)
    }

    /// Emission score for each tag index: `P(w | t)` for known words, and
    /// `P(t | suffix) / P(t)` for unknown ones (uniform when there is no
    /// suffix model).
    fn emissions(&self, word: &str) -> Vec<f64> {
        if let Some(counts) = self.lexicon.get(word) {
            return counts
                .iter()
                .zip(&self.tag_counts)
                .map(|(c, n)| c / n)
                .collect();
        }
        let n = self.tags.len();
        let (primary, other) = if is_capitalized(word) {
            (&self.suffix_upper, &self.suffix_lower)
        } else {
            (&self.suffix_lower, &self.suffix_upper)
        };
        let trie = if primary.is_empty() { other } else { primary };
        if trie.is_empty() {
            return vec![1.0 / n as f64; n];
        }
        let tokens: f64 = self.tag_counts.iter().sum();
        trie.distribution(word, self.theta)
            .iter()
            .zip(&self.tag_counts)
            .map(|(p, c)| ratio(*p, c / tokens))
            .collect()
    }

    /// Log probability of a complete tagging, stop transition included.
    pub fn sequence_log_prob(&self, words: &[&str], tags: &[Tag]) -> f64 {
        let n = self.tags.len();
        let mut idx = Vec::with_capacity(tags.len());
        for t in tags {
            match self.position(Some(*t)) {
                Some(i) => idx.push(i),
                None => return f64::NEG_INFINITY,
            }
        }
        let (mut a, mut b) = (n, n);
        let mut score = 0.0;
        for (w, &c) in words.iter().zip(&idx) {
            score += self.transitions[a][b][c].ln() + self.emissions(w)[c].ln();
            (a, b) = (b, c);
        }
        score + self.transitions[a][b][n].ln()
    }

    /// Best tag sequence within `beam`.
    pub fn decode(&self, words: &[&str], beam: Beam) -> Vec<Tag> {
        if words.is_empty() {
            return Vec::new();
        }
        let n = self.tags.len();
        let states = (n + 1) * (n + 1);
        let width = match beam {
            Beam::Exact => states,
            Beam::Width(k) => k.max(1),
        };
        let log_tr: Vec<Vec<Vec<f64>>> = self
            .transitions
            .iter()
            .map(|m| {
                m.iter()
                    .map(|r| r.iter().map(|p| p.ln()).collect())
                    .collect()
            })
            .collect();
        // State s = prev * (n + 1) + cur.
        let mut alive: Vec<(usize, f64)> = vec![(n * (n + 1) + n, 0.0)];
        let mut back: Vec<Vec<usize>> = Vec::with_capacity(words.len());
        for w in words {
            let em: Vec<f64> = self.emissions(w).iter().map(|p| p.ln()).collect();
            let mut score = vec![f64::NEG_INFINITY; states];
            let mut from = vec![usize::MAX; states];
            for &(s, base) in &alive {
                let (a, b) = (s / (n + 1), s % (n + 1));
                for c in 0..n {
                    let next = b * (n + 1) + c;
                    let v = base + log_tr[a][b][c] + em[c];
                    if from[next] == usize::MAX || v > score[next] {
                        score[next] = v;
                        from[next] = s;
                    }
                }
            }
            let mut next: Vec<(usize, f64)> = (0..states)
                .filter(|&s| from[s] != usize::MAX)
                .map(|s| (s, score[s]))
                .collect();
            if next.len() > width {
                next.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
                next.truncate(width);
                next.sort_by_key(|x| x.0);
            }
            alive = next;
            back.push(from);
        }
        let mut best = alive[0].0;
        let mut best_score = f64::NEG_INFINITY;
        let mut first = true;
        for &(s, v) in &alive {
            let (a, b) = (s / (n + 1), s % (n + 1));
            let total = v + log_tr[a][b][n];
            if first || total > best_score {
                best = s;
                best_score = total;
                first = false;
            }
        }
        let mut path = vec![0; words.len()];
        let mut s = best;
        for t in (0..words.len()).rev() {
            path[t] = s % (n + 1);
            s = back[t][s];
        }
        path.into_iter().map(|i| self.tags[i]).collect()
    }

    pub fn tag_sentence(&self, sentence: &Sentence, beam: Beam) -> Sentence {
        let words: Vec<&str> = sentence.words().collect();
        sentence.with_tags(&self.decode(&words, beam))
    }

    pub fn tag(&self, corpus: &Corpus, beam: Beam, exec: Execution) -> Corpus {
        Corpus {
            sentences: exec.map(&corpus.sentences, |s| self.tag_sentence(s, beam)),
            language: corpus.language.clone(),
        }
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = Writer::new(out, TNT_MAGIC)?;
        w.str(&serde_json::to_string(self)?)?;
        w.finish()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<TntModel> {
        let mut r = Reader::new(input, TNT_MAGIC)?;
        Ok(serde_json::from_str(&r.str()?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<TntModel> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        TntModel::read(BufReader::new(file))
    }
}

/// Brants' credit rule: each trigram type adds its count to the order whose
/// leave-one-out estimate is largest. Tied maxima share the credit equally.
fn deleted_interpolation(
    unigram: &[f64],
    bigram: &[Vec<f64>],
    trigram: &[Vec<Vec<f64>>],
) -> [f64; 3] {
    let total: f64 = unigram.iter().sum();
    let mut credit = [0.0; 3];
    for plane in trigram {
        for (t2, row) in plane.iter().enumerate() {
            let c2: f64 = row.iter().sum();
            let c1: f64 = bigram[t2].iter().sum();
            for (t3, &f) in row.iter().enumerate() {
                if f == 0.0 {
                    continue;
                }
                let cases = [
                    ratio(unigram[t3] - 1.0, total - 1.0),
                    ratio(bigram[t2][t3] - 1.0, c1 - 1.0),
                    ratio(f - 1.0, c2 - 1.0),
                ];
                let max = cases.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let winners: Vec<usize> = (0..3).filter(|&i| cases[i] == max).collect();
                for i in &winners {
                    credit[*i] += f / winners.len() as f64;
                }
            }
        }
    }
    let sum: f64 = credit.iter().sum();
    if sum == 0.0 {
        return [1.0 / 3.0; 3];
    }
    credit.map(|c| c / sum)
}
