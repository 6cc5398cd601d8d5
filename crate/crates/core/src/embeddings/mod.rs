//! Word embedding tables and cross-lingual alignment.

mod align;
mod io;

use std::collections::HashMap;

use crate::linalg::Matrix;

pub use align::{
    align_tables, apply_mapping, mine_identical_seeds, nearest_neighbors, procrustes_align,
    procrustes_loss, seed_precision, AlignmentReport, Direction, OrthogonalMap, SeedLexicon,
};
pub use io::{
    load_embeddings, read_binary, read_embeddings, save_embeddings, write_binary, UNK_WORD,
};

/// A word-to-vector store with a dedicated vector for unknown words.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    unk: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            unk: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Adds `word` unless it is already present; returns whether it was
    /// inserted.
    pub fn insert(&mut self, word: impl Into<String>, vector: &[f64]) -> bool {
        assert_eq!(vector.len(), self.dim, "embedding dimension");
        let word = word.into();
        if self.index.contains_key(&word) {
            return false;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(vector);
        true
    }

    pub fn set_unk(&mut self, vector: &[f64]) {
        assert_eq!(vector.len(), self.dim, "embedding dimension");
        self.unk = vector.to_vec();
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }

    pub fn words(&self) -> impl ExactSizeIterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vector(i))
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn vector_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact form, then lowercased form, then digit-normalized form.
    pub fn resolve(&self, word: &str) -> Option<&[f64]> {
        self.get(word)
            .or_else(|| self.get(&word.to_lowercase()))
            .or_else(|| self.get(&normalize_digits(word)))
    }

    /// [`resolve`](Self::resolve) falling back to the unknown-word vector.
    pub fn lookup(&self, word: &str) -> &[f64] {
        self.resolve(word).unwrap_or(&self.unk)
    }

    /// All vectors as a `len × dim` matrix, in insertion order.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.len(), self.dim, self.vectors.clone())
    }

    /// Union of two tables over the same space; on collisions the entry of
    /// `self` wins. The unknown-word vector of `self` is kept.
    pub fn merged_with(&self, other: &EmbeddingTable) -> EmbeddingTable {
        assert_eq!(self.dim, other.dim, "embedding dimension");
        let mut out = self.clone();
        for (i, w) in other.words.iter().enumerate() {
            out.insert(w.clone(), other.vector(i));
        }
        out
    }

    pub(crate) fn map_vectors(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> EmbeddingTable {
        let mut out = self.clone();
        for i in 0..self.len() {
            f(self.vector(i), out.vector_mut(i));
        }
        f(&self.unk, &mut out.unk);
        out
    }
}

/// Replaces every ASCII digit with `#`.
pub fn normalize_digits(word: &str) -> String {
    word.chars()
        .map(|c| if c.is_ascii_digit() { '#' } else { c })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2);
        t.insert("rom", &[1.0, 0.0]);
        t.insert("Sun", &[0.0, 1.0]);
        t.insert("##.#", &[0.5, 0.5]);
        t.set_unk(&[-1.0, -1.0]);
        t
    }

    #[test]
    fn lookup_fallback_chain() {
        let t = table();
        assert_eq!(t.lookup("Sun"), &[0.0, 1.0]);
        assert_eq!(t.lookup("Rom"), &[1.0, 0.0]);
        assert_eq!(t.lookup("12.5"), &[0.5, 0.5]);
        assert_eq!(t.lookup("Elvis"), &[-1.0, -1.0]);
        assert_eq!(t.resolve("Elvis"), None);
    }

    #[test]
    fn insert_keeps_first() {
        let mut t = table();
        assert!(!t.insert("rom", &[9.0, 9.0]));
        assert_eq!(t.get("rom"), Some(&[1.0, 0.0][..]));
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn merge_prefers_self() {
        let mut other = EmbeddingTable::new(2);
        other.insert("rom", &[7.0, 7.0]);
        other.insert("dag", &[3.0, 3.0]);
        let m = table().merged_with(&other);
        assert_eq!(m.len(), 4);
        assert_eq!(m.get("rom"), Some(&[1.0, 0.0][..]));
        assert_eq!(m.get("dag"), Some(&[3.0, 3.0][..]));
    }
}
