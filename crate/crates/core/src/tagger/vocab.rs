use std::collections::{BTreeSet, HashMap};

use crate::corpus::{Corpus, Sentence, Tag};
use crate::embeddings::{normalize_digits, EmbeddingTable};

pub const UNK: usize = 0;
pub const UNK_WORD: &str = "<UNK>";

/// Dense word and character indices. Index 0 is the unknown entry in both;
/// the tag alphabet is the fixed nine-label BIO2 set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    word_index: HashMap<String, usize>,
    chars: Vec<String>,
    char_index: HashMap<char, usize>,
}

/// A sentence mapped to indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
    pub tags: Vec<usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from_parts(Vec::new(), Vec::new())
    }
}

impl Vocab {
    /// `words` and `chars` exclude the unknown entries.
    pub fn from_parts(words: Vec<String>, chars: Vec<char>) -> Self {
        let mut v = Vocab {
            words: vec![UNK_WORD.to_string()],
            word_index: HashMap::new(),
            chars: vec![UNK_WORD.to_string()],
            char_index: HashMap::new(),
        };
        for w in words {
            v.add_word(&w);
        }
        for c in chars {
            v.add_char(c);
        }
        v
    }

    fn add_word(&mut self, w: &str) -> bool {
        if self.word_index.contains_key(w) {
            return false;
        }
        self.word_index.insert(w.to_string(), self.words.len());
        self.words.push(w.to_string());
        true
    }

    fn add_char(&mut self, c: char) -> bool {
        if self.char_index.contains_key(&c) {
            return false;
        }
        self.char_index.insert(c, self.chars.len());
        self.chars.push(c.to_string());
        true
    }

    /// Word list including the unknown entry at index 0.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Character list including the unknown entry at index 0.
    pub fn chars(&self) -> &[String] {
        &self.chars
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    pub fn tag_count(&self) -> usize {
        Tag::COUNT
    }

    /// Exact form, then lowercased, then digit-normalized, then unknown.
    pub fn word_id(&self, word: &str) -> usize {
        self.word_index
            .get(word)
            .or_else(|| self.word_index.get(&word.to_lowercase()))
            .or_else(|| self.word_index.get(&normalize_digits(word)))
            .copied()
            .unwrap_or(UNK)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(UNK)
    }

    pub fn encode(&self, sentence: &Sentence) -> EncodedSentence {
        EncodedSentence {
            words: sentence.words().map(|w| self.word_id(w)).collect(),
            chars: sentence
                .words()
                .map(|w| w.chars().map(|c| self.char_id(c)).collect())
                .collect(),
            tags: sentence.tokens.iter().map(|t| t.tag.index()).collect(),
        }
    }

    /// Adds the words and characters of `corpora` (plus, for `extra`, only
    /// words covered by `pretrained`). Returns how many words were added.
    pub fn extend(
        &mut self,
        train: &[&Corpus],
        pretrained: Option<&EmbeddingTable>,
        extra: &[&Corpus],
    ) -> usize {
        let before = self.words.len();
        let train_words: BTreeSet<&str> = train
            .iter()
            .flat_map(|c| c.sentences.iter().flat_map(Sentence::words))
            .collect();
        let mut words: BTreeSet<&str> = train_words.clone();
        if let Some(table) = pretrained {
            words.extend(
                train
                    .iter()
                    .chain(extra)
                    .flat_map(|c| c.sentences.iter().flat_map(Sentence::words))
                    .filter(|w| table.resolve(w).is_some()),
            );
        }
        let chars: BTreeSet<char> = train_words.iter().flat_map(|w| w.chars()).collect();
        for w in words {
            self.add_word(w);
        }
        for c in chars {
            self.add_char(c);
        }
        self.words.len() - before
    }
}

/// Word vocabulary: every training word plus every word of any corpus that
/// `pretrained` covers. Characters come from the training words only.
pub fn build_vocab(
    train: &[&Corpus],
    pretrained: Option<&EmbeddingTable>,
    extra: &[&Corpus],
) -> Vocab {
    let mut v = Vocab::default();
    v.extend(train, pretrained, extra);
    v
}
