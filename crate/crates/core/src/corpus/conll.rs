use std::fs;
use std::path::Path;

use super::{Corpus, Sentence, Tag, Token};
use crate::{Error, Result};

/// Column expectations for CoNLL input. The word is always the first column
/// and the tag the last; anything in between is kept verbatim.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ColumnLayout {
    /// Exact column count, or `None` to take it from the first token line.
    pub columns: Option<usize>,
}

impl ColumnLayout {
    pub fn fixed(columns: usize) -> Self {
        ColumnLayout {
            columns: Some(columns),
        }
    }
}

/// Parses one-token-per-line text with blank lines between sentences.
/// `-DOCSTART-` lines are dropped.
pub fn parse_conll(text: &str, layout: &ColumnLayout) -> Result<Corpus> {
    if let Some(n) = layout.columns {
        if n < 2 {
            return Err(Error::Config(format!(
                "a CoNLL layout needs at least 2 columns, got {n}"
            )));
        }
    }
    let mut expected = layout.columns;
    let mut sentences = Vec::new();
    let mut current = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            if !current.is_empty() {
                sentences.push(Sentence::new(std::mem::take(&mut current)));
            }
            continue;
        }
        if cols[0] == "-DOCSTART-" {
            continue;
        }
        let want = *expected.get_or_insert(cols.len());
        if cols.len() != want || want < 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {want} columns, found {}", cols.len()),
            });
        }
        let tag_str = cols[want - 1];
        let tag: Tag = tag_str.parse().map_err(|_| Error::UnknownTag {
            line: line_no,
            tag: tag_str.to_string(),
        })?;
        current.push(Token {
            text: cols[0].to_string(),
            extra: cols[1..want - 1].iter().map(|s| s.to_string()).collect(),
            tag,
        });
    }
    if !current.is_empty() {
        sentences.push(Sentence::new(current));
    }
    Ok(Corpus::new(sentences))
}

pub fn read_conll(path: impl AsRef<Path>, layout: &ColumnLayout) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, layout)
}

/// Space-separated columns, one token per line, a blank line after every
/// sentence.
pub fn write_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for sentence in &corpus.sentences {
        for tok in &sentence.tokens {
            out.push_str(&tok.text);
            for col in &tok.extra {
                out.push(' ');
                out.push_str(col);
            }
            out.push(' ');
            out.push_str(&tok.tag.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
