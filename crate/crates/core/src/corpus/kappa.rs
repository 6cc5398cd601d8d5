use std::collections::BTreeMap;

use serde::Serialize;

use super::{Corpus, Tag};
use crate::{Error, Result};

/// Cohen's kappa with the quantities it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub kappa: f64,
    /// Observed agreement p_o.
    pub observed: f64,
    /// Chance agreement p_e from the two annotators' marginals.
    pub expected: f64,
    pub items: usize,
    /// Set when p_e = 1 (or there are no items) and kappa is reported as 1.
    pub degenerate: bool,
}

/// Chance-corrected agreement between two label assignments over the same
/// items.
pub fn cohen_kappa<L: Ord>(a: &[L], b: &[L]) -> Result<Agreement> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n == 0 {
        return Ok(Agreement {
            kappa: 1.0,
            observed: 1.0,
            expected: 1.0,
            items: 0,
            degenerate: true,
        });
    }
    let mut marginals: BTreeMap<&L, (usize, usize)> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        if x == y {
            agree += 1;
        }
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
    }
    let nf = n as f64;
    let observed = agree as f64 / nf;
    let expected: f64 = marginals
        .values()
        .map(|&(ca, cb)| (ca as f64 / nf) * (cb as f64 / nf))
        .sum();
    // Float sums of marginal products can land a hair off 1.0.
    if (1.0 - expected).abs() < 1e-12 {
        if observed < 1.0 {
            log::warn!("chance agreement is 1 but observed agreement is {observed}");
        }
        return Ok(Agreement {
            kappa: 1.0,
            observed,
            expected: 1.0,
            items: n,
            degenerate: true,
        });
    }
    Ok(Agreement {
        kappa: (observed - expected) / (1.0 - expected),
        observed,
        expected,
        items: n,
        degenerate: false,
    })
}

/// Kappa over entity tokens only: the items are the positions that at least
/// one annotator tagged as part of an entity, labelled by entity type
/// (`None` standing for outside).
pub fn entity_kappa(a: &[Tag], b: &[Tag]) -> Result<Agreement> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (la, lb): (Vec<_>, Vec<_>) = a
        .iter()
        .zip(b)
        .filter(|(x, y)| !x.is_outside() || !y.is_outside())
        .map(|(x, y)| (x.entity_type(), y.entity_type()))
        .unzip();
    cohen_kappa(&la, &lb)
}

/// [`entity_kappa`] over two annotations of the same token sequence.
pub fn corpus_entity_kappa(a: &Corpus, b: &Corpus) -> Result<Agreement> {
    if a.len() != b.len() {
        return Err(Error::StructureMismatch {
            sentence: a.len().min(b.len()),
            detail: format!("{} vs {} sentences", a.len(), b.len()),
        });
    }
    let mut ta = Vec::new();
    let mut tb = Vec::new();
    for (i, (sa, sb)) in a.sentences.iter().zip(&b.sentences).enumerate() {
        if sa.len() != sb.len() || sa.words().ne(sb.words()) {
            return Err(Error::StructureMismatch {
                sentence: i,
                detail: "token sequences differ".into(),
            });
        }
        ta.extend(sa.tags());
        tb.extend(sb.tags());
    }
    entity_kappa(&ta, &tb)
}
