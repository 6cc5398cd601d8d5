use serde::Serialize;

use super::{Corpus, EntitySpan, EntityType, Sentence, Tag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// `I-X` at sentence start or after `O`.
    OrphanI,
    /// `I-X` after `B-Y`/`I-Y` with `Y != X`.
    TypeMismatchI,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub position: usize,
    pub kind: ViolationKind,
}

/// Every position where `tags` departs from BIO2. Empty iff valid.
pub fn validate_bio(tags: &[Tag]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut prev = None;
    for (position, &tag) in tags.iter().enumerate() {
        if let Tag::I(ty) = tag {
            match prev {
                None | Some(Tag::O) => out.push(Violation {
                    position,
                    kind: ViolationKind::OrphanI,
                }),
                Some(Tag::B(p)) | Some(Tag::I(p)) if p != ty => out.push(Violation {
                    position,
                    kind: ViolationKind::TypeMismatchI,
                }),
                _ => {}
            }
        }
        prev = Some(tag);
    }
    out
}

/// IOB1 to BIO2: an `I-X` that opens a chunk becomes `B-X`.
pub fn iob1_to_bio2(tags: &[Tag]) -> Vec<Tag> {
    let mut out = Vec::with_capacity(tags.len());
    let mut prev: Option<Tag> = None;
    for &tag in tags {
        let converted = match tag {
            Tag::I(ty) if !tag.may_follow(prev) => Tag::B(ty),
            other => other,
        };
        out.push(converted);
        prev = Some(tag);
    }
    out
}

/// Rewrites every ill-formed `I-X` as `B-X` (the conlleval reading) and
/// returns the number of rewrites.
pub fn repair_bio(tags: &[Tag]) -> (Vec<Tag>, usize) {
    let mut repairs = 0;
    let mut out = Vec::with_capacity(tags.len());
    for &tag in tags {
        let prev = out.last().copied();
        match tag {
            Tag::I(ty) if !tag.may_follow(prev) => {
                repairs += 1;
                out.push(Tag::B(ty));
            }
            other => out.push(other),
        }
    }
    (out, repairs)
}

/// Spans of a BIO2 sequence as `(start, end, label)` with inclusive ends.
pub fn spans_of(tags: &[Tag]) -> Result<Vec<(usize, usize, EntityType)>> {
    if let Some(v) = validate_bio(tags).first() {
        return Err(Error::InvalidBio {
            sentence: 0,
            detail: format!("{:?} at position {}", v.kind, v.position),
        });
    }
    let mut spans = Vec::new();
    let mut open: Option<(usize, EntityType)> = None;
    for (i, &tag) in tags.iter().enumerate() {
        match tag {
            Tag::B(ty) => {
                if let Some((start, label)) = open.take() {
                    spans.push((start, i - 1, label));
                }
                open = Some((i, ty));
            }
            Tag::I(_) => {}
            Tag::O => {
                if let Some((start, label)) = open.take() {
                    spans.push((start, i - 1, label));
                }
            }
        }
    }
    if let Some((start, label)) = open {
        spans.push((start, tags.len() - 1, label));
    }
    Ok(spans)
}

/// Spans of an IOB1 sequence: `I-X` continues a chunk of type X and opens
/// one otherwise; `B-X` always opens one.
pub fn iob1_spans(tags: &[Tag]) -> Vec<(usize, usize, EntityType)> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, EntityType)> = None;
    for (i, &tag) in tags.iter().enumerate() {
        let continues = matches!((tag, open), (Tag::I(t), Some((_, o))) if t == o);
        if continues {
            continue;
        }
        if let Some((start, label)) = open.take() {
            spans.push((start, i - 1, label));
        }
        if let Some(ty) = tag.entity_type() {
            open = Some((i, ty));
        }
    }
    if let Some((start, label)) = open {
        spans.push((start, tags.len() - 1, label));
    }
    spans
}

impl Sentence {
    pub fn spans(&self, sentence_index: usize) -> Result<Vec<EntitySpan>> {
        let spans = spans_of(&self.tags()).map_err(|e| match e {
            Error::InvalidBio { detail, .. } => Error::InvalidBio {
                sentence: sentence_index,
                detail,
            },
            other => other,
        })?;
        Ok(spans
            .into_iter()
            .map(|(start, end, label)| EntitySpan {
                sentence_index,
                start,
                end,
                label,
            })
            .collect())
    }
}

/// All spans of a BIO2 corpus in (sentence, start) order.
pub fn extract_spans(corpus: &Corpus) -> Result<Vec<EntitySpan>> {
    let mut out = Vec::new();
    for (i, s) in corpus.sentences.iter().enumerate() {
        out.extend(s.spans(i)?);
    }
    Ok(out)
}
