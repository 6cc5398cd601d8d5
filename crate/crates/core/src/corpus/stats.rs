use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{repair_bio, spans_of, Corpus};

/// Size, lexical richness and entity density of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub sentences: usize,
    pub tokens: usize,
    /// Distinct case-sensitive surface forms.
    pub types: usize,
    /// `types / tokens`; absent for an empty corpus.
    pub ttr: Option<f64>,
    pub sentences_with_ne: usize,
    pub sentences_with_ne_pct: Option<f64>,
    pub entities: usize,
}

/// Entities are counted on the conlleval reading of the tags, so an
/// ill-formed `I-X` opens a new entity instead of failing.
pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut types = HashSet::new();
    let mut tokens = 0;
    let mut entities = 0;
    let mut sentences_with_ne = 0;
    for s in &corpus.sentences {
        tokens += s.len();
        types.extend(s.words());
        let (tags, _) = repair_bio(&s.tags());
        let n = spans_of(&tags).map(|v| v.len()).unwrap_or(0);
        entities += n;
        if n > 0 {
            sentences_with_ne += 1;
        }
    }
    let sentences = corpus.len();
    StatsReport {
        sentences,
        tokens,
        types: types.len(),
        ttr: (tokens > 0).then(|| types.len() as f64 / tokens as f64),
        sentences_with_ne,
        sentences_with_ne_pct: (sentences > 0).then(|| sentences_with_ne as f64 / sentences as f64),
        entities,
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ratio = |v: Option<f64>| v.map_or_else(|| "---".to_string(), |x| format!("{x:.2}"));
        let pct =
            |v: Option<f64>| v.map_or_else(|| "---".to_string(), |x| format!("{:.0}%", 100.0 * x));
        writeln!(f, "{:<14}{:>10}", "Sentences", self.sentences)?;
        writeln!(f, "{:<14}{:>10}", "Tokens", self.tokens)?;
        writeln!(f, "{:<14}{:>10}", "Types", self.types)?;
        writeln!(f, "{:<14}{:>10}", "TTR", ratio(self.ttr))?;
        writeln!(f, "{:<14}{:>10}", "Sent.w/ NE", self.sentences_with_ne)?;
        writeln!(
            f,
            "{:<14}{:>10}",
            "Sent.w/ NE%",
            pct(self.sentences_with_ne_pct)
        )?;
        writeln!(f, "{:<14}{:>10}", "Entities", self.entities)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::danish_examples;

    #[test]
    fn counts_example_sentences() {
        let r = corpus_stats(&danish_examples());
        assert_eq!(r.sentences, 2);
        assert_eq!(r.tokens, 16);
        assert_eq!(r.types, 16);
        assert_eq!(r.entities, 3);
        assert_eq!(r.sentences_with_ne, 2);
        assert_eq!(r.ttr, Some(1.0));
        assert_eq!(r.sentences_with_ne_pct, Some(1.0));
    }

    #[test]
    fn empty_corpus_is_all_zero() {
        let r = corpus_stats(&Corpus::default());
        assert_eq!(
            (
                r.sentences,
                r.tokens,
                r.types,
                r.entities,
                r.sentences_with_ne
            ),
            (0, 0, 0, 0, 0)
        );
        assert_eq!(r.ttr, None);
        assert_eq!(r.sentences_with_ne_pct, None);
    }

    #[test]
    fn types_are_case_sensitive() {
        let mut c = danish_examples();
        c.sentences[0].tokens[1].text = "Rom".into();
        c.sentences[0].tokens[2].text = "rom".into();
        let r = corpus_stats(&c);
        assert_eq!(r.types, 15);
        assert_eq!(r.ttr, Some(15.0 / 16.0));
    }

    #[test]
    fn renders_table_rows() {
        let text = corpus_stats(&danish_examples()).to_string();
        assert!(text.contains("Sent.w/ NE%"));
        assert!(text.contains("100%"));
        assert!(text.contains("TTR"));
    }
}
