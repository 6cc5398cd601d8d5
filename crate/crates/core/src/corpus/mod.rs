//! Tokenized, BIO-tagged corpora and the operations defined over them.

mod bio;
mod conll;
mod kappa;
mod stats;
mod tag;

use serde::{Deserialize, Serialize};

pub use bio::{
    extract_spans, iob1_spans, iob1_to_bio2, repair_bio, spans_of, validate_bio, Violation,
    ViolationKind,
};
pub use conll::{parse_conll, read_conll, write_conll, ColumnLayout};
pub use kappa::{cohen_kappa, corpus_entity_kappa, entity_kappa, Agreement};
pub use stats::{corpus_stats, StatsReport};
pub use tag::{EntityType, Tag};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Middle columns (POS, chunk, ...) carried through untouched.
    pub extra: Vec<String>,
    pub tag: Tag,
}

impl Token {
    pub fn new(text: impl Into<String>, tag: Tag) -> Self {
        Token {
            text: text.into(),
            extra: Vec::new(),
            tag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence { tokens }
    }

    /// Builds a sentence from `(word, tag)` pairs; panics on an unknown tag.
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        Sentence {
            tokens: pairs
                .iter()
                .map(|(w, t)| Token::new(*w, t.parse().expect("valid tag literal")))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tags(&self) -> Vec<Tag> {
        self.tokens.iter().map(|t| t.tag).collect()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    /// Copy of the sentence with its tags replaced.
    pub fn with_tags(&self, tags: &[Tag]) -> Sentence {
        debug_assert_eq!(tags.len(), self.len());
        Sentence {
            tokens: self
                .tokens
                .iter()
                .zip(tags)
                .map(|(tok, &tag)| Token { tag, ..tok.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub language: String,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Corpus {
            sentences,
            language: String::new(),
        }
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = language.into();
        self
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Whole sentences, in order, until adding the next one would push the
    /// token count past `n`.
    pub fn take_first_tokens(&self, n: usize) -> Corpus {
        let mut total = 0;
        let sentences = self
            .sentences
            .iter()
            .take_while(|s| {
                total += s.len();
                total <= n
            })
            .cloned()
            .collect();
        Corpus {
            sentences,
            language: self.language.clone(),
        }
    }

    /// Sentence-wise concatenation; the language of `self` is kept.
    pub fn concat(&self, other: &Corpus) -> Corpus {
        let mut sentences = self.sentences.clone();
        sentences.extend(other.sentences.iter().cloned());
        Corpus {
            sentences,
            language: self.language.clone(),
        }
    }

    /// Splits off the trailing `fraction` of sentences (rounded down, at
    /// least one sentence when the corpus has two or more).
    pub fn split_tail(&self, fraction: f64) -> (Corpus, Corpus) {
        let n = self.len();
        let mut tail = (n as f64 * fraction).floor() as usize;
        if tail == 0 && n >= 2 && fraction > 0.0 {
            tail = 1;
        }
        let head = n - tail;
        (
            Corpus {
                sentences: self.sentences[..head].to_vec(),
                language: self.language.clone(),
            },
            Corpus {
                sentences: self.sentences[head..].to_vec(),
                language: self.language.clone(),
            },
        )
    }

    /// Converts every sentence from IOB1 to BIO2.
    pub fn to_bio2(&self) -> Corpus {
        let sentences = self
            .sentences
            .iter()
            .map(|s| s.with_tags(&iob1_to_bio2(&s.tags())))
            .collect();
        Corpus {
            sentences,
            language: self.language.clone(),
        }
    }

    /// All BIO violations as `(sentence index, violation)`.
    pub fn violations(&self) -> Vec<(usize, Violation)> {
        self.sentences
            .iter()
            .enumerate()
            .flat_map(|(i, s)| validate_bio(&s.tags()).into_iter().map(move |v| (i, v)))
            .collect()
    }
}

/// A typed entity mention with inclusive token boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
    pub label: EntityType,
}
