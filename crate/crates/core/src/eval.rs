//! Exact-match span evaluation in the style of the CoNLL shared task script.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{repair_bio, Corpus, EntitySpan, EntityType, Sentence, Tag};
use crate::{Error, Result};

/// Precision, recall and F1 in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    pub fn from_counts(counts: Counts) -> Scores {
        let ratio = |a: usize, b: usize| {
            if b == 0 {
                0.0
            } else {
                100.0 * a as f64 / b as f64
            }
        };
        let precision = ratio(counts.correct, counts.predicted);
        let recall = ratio(counts.correct, counts.gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Scores {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub label: EntityType,
    pub counts: Counts,
    pub scores: Scores,
}

impl TypeReport {
    /// The system produced no span of this type, rendered as `---`.
    pub fn is_absent(&self) -> bool {
        self.counts.predicted == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Scores,
    pub counts: Counts,
    /// Always the four types in PER, LOC, ORG, MISC order.
    pub per_type: Vec<TypeReport>,
    pub tokens: usize,
    pub token_accuracy: f64,
    /// Ill-formed `I-X` labels rewritten to `B-X` before scoring.
    pub pred_repairs: usize,
    pub gold_repairs: usize,
}

impl EvalReport {
    pub fn type_report(&self, label: EntityType) -> &TypeReport {
        &self.per_type[label.index()]
    }

    /// F1 as a fraction in [0, 1].
    pub fn f1_fraction(&self) -> f64 {
        self.overall.f1 / 100.0
    }
}

fn repaired_spans(s: &Sentence, index: usize, repairs: &mut usize) -> Vec<EntitySpan> {
    let (tags, n) = repair_bio(&s.tags());
    *repairs += n;
    s.with_tags(&tags)
        .spans(index)
        .expect("repaired tags are valid BIO2")
}

/// Scores `pred` against `gold`. Both must hold the same sentences and
/// tokens; only the tags may differ.
pub fn evaluate(gold: &Corpus, pred: &Corpus) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::StructureMismatch {
            sentence: gold.len().min(pred.len()),
            detail: format!("{} gold vs {} predicted sentences", gold.len(), pred.len()),
        });
    }
    let mut per_type = [Counts::default(); 4];
    let mut pred_repairs = 0;
    let mut gold_repairs = 0;
    let mut tokens = 0;
    let mut tokens_correct = 0;
    for (i, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        if g.len() != p.len() {
            return Err(Error::StructureMismatch {
                sentence: i,
                detail: format!("{} gold vs {} predicted tokens", g.len(), p.len()),
            });
        }
        if let Some(pos) = g.words().zip(p.words()).position(|(a, b)| a != b) {
            return Err(Error::StructureMismatch {
                sentence: i,
                detail: format!("token {pos} differs"),
            });
        }
        tokens += g.len();
        tokens_correct += g
            .tokens
            .iter()
            .zip(&p.tokens)
            .filter(|(a, b)| a.tag == b.tag)
            .count();
        let gs: HashSet<EntitySpan> = repaired_spans(g, i, &mut gold_repairs)
            .into_iter()
            .collect();
        let ps = repaired_spans(p, i, &mut pred_repairs);
        for s in &gs {
            per_type[s.label.index()].gold += 1;
        }
        for s in &ps {
            let c = &mut per_type[s.label.index()];
            c.predicted += 1;
            if gs.contains(s) {
                c.correct += 1;
            }
        }
    }
    let counts = per_type.iter().fold(Counts::default(), |acc, c| Counts {
        gold: acc.gold + c.gold,
        predicted: acc.predicted + c.predicted,
        correct: acc.correct + c.correct,
    });
    Ok(EvalReport {
        overall: Scores::from_counts(counts),
        counts,
        per_type: EntityType::ALL
            .iter()
            .map(|&label| TypeReport {
                label,
                counts: per_type[label.index()],
                scores: Scores::from_counts(per_type[label.index()]),
            })
            .collect(),
        tokens,
        token_accuracy: if tokens == 0 {
            0.0
        } else {
            100.0 * tokens_correct as f64 / tokens as f64
        },
        pred_repairs,
        gold_repairs,
    })
}

/// conlleval-style text block.
impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "processed {} tokens with {} phrases; found: {} phrases; correct: {}.",
            self.tokens, self.counts.gold, self.counts.predicted, self.counts.correct
        )?;
        writeln!(
            f,
            "accuracy: {:6.2}%; precision: {:6.2}%; recall: {:6.2}%; FB1: {:6.2}",
            self.token_accuracy, self.overall.precision, self.overall.recall, self.overall.f1
        )?;
        for t in &self.per_type {
            if t.is_absent() {
                writeln!(
                    f,
                    "{:>17}: precision:    ---; recall:    ---; FB1:    ---  0",
                    t.label
                )?;
            } else {
                writeln!(
                    f,
                    "{:>17}: precision: {:6.2}%; recall: {:6.2}%; FB1: {:6.2}  {}",
                    t.label, t.scores.precision, t.scores.recall, t.scores.f1, t.counts.predicted
                )?;
            }
        }
        if self.pred_repairs > 0 || self.gold_repairs > 0 {
            writeln!(
                f,
                "repaired labels: {} predicted, {} gold",
                self.pred_repairs, self.gold_repairs
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub label: EntityType,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    /// Absent in every run.
    pub absent: bool,
}

/// Mean and spread of several runs (seeds) of the same configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub per_type: Vec<TypeSummary>,
}

pub fn aggregate(reports: &[EvalReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::Invalid("cannot aggregate zero reports".into()));
    }
    let col = |f: &dyn Fn(&EvalReport) -> f64| -> MeanStd {
        MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>())
    };
    Ok(Summary {
        runs: reports.len(),
        precision: col(&|r| r.overall.precision),
        recall: col(&|r| r.overall.recall),
        f1: col(&|r| r.overall.f1),
        per_type: EntityType::ALL
            .iter()
            .map(|&label| TypeSummary {
                label,
                precision: col(&|r| r.type_report(label).scores.precision),
                recall: col(&|r| r.type_report(label).scores.recall),
                f1: col(&|r| r.type_report(label).scores.f1),
                absent: reports.iter().all(|r| r.type_report(label).is_absent()),
            })
            .collect(),
    })
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "runs: {}; precision: {:.2} ± {:.2}; recall: {:.2} ± {:.2}; FB1: {:.2} ± {:.2}",
            self.runs,
            self.precision.mean,
            self.precision.std,
            self.recall.mean,
            self.recall.std,
            self.f1.mean,
            self.f1.std
        )?;
        for t in &self.per_type {
            if t.absent {
                writeln!(f, "{:>17}: FB1:    ---", t.label)?;
            } else {
                writeln!(
                    f,
                    "{:>17}: FB1: {:6.2} ± {:.2}",
                    t.label, t.f1.mean, t.f1.std
                )?;
            }
        }
        Ok(())
    }
}

/// Tags every token with its most frequent training tag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MajorityTagger {
    best: BTreeMap<String, Tag>,
}

impl MajorityTagger {
    /// Ties go to the lowest tag index, which makes `O` win any tie it is
    /// part of.
    pub fn fit(train: &Corpus) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Invalid(
                "majority baseline needs training data".into(),
            ));
        }
        let mut counts: HashMap<&str, [usize; Tag::COUNT]> = HashMap::new();
        for tok in train.sentences.iter().flat_map(|s| &s.tokens) {
            counts.entry(&tok.text).or_insert([0; Tag::COUNT])[tok.tag.index()] += 1;
        }
        let best = counts
            .into_iter()
            .map(|(w, c)| {
                let mut arg = 0;
                for i in 1..Tag::COUNT {
                    if c[i] > c[arg] {
                        arg = i;
                    }
                }
                (w.to_string(), Tag::ALL[arg])
            })
            .collect();
        Ok(MajorityTagger { best })
    }

    /// Unseen words get `O`; the result is repaired to valid BIO2.
    pub fn tag(&self, input: &Corpus) -> Corpus {
        let sentences = input
            .sentences
            .iter()
            .map(|s| {
                let raw: Vec<Tag> = s
                    .words()
                    .map(|w| self.best.get(w).copied().unwrap_or(Tag::O))
                    .collect();
                s.with_tags(&repair_bio(&raw).0)
            })
            .collect();
        Corpus {
            sentences,
            language: input.language.clone(),
        }
    }
}

pub fn majority_baseline(train: &Corpus, input: &Corpus) -> Result<Corpus> {
    Ok(MajorityTagger::fit(train)?.tag(input))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{Sentence, Token};

    fn corpus(lines: &[&[(&str, &str)]]) -> Corpus {
        Corpus::new(lines.iter().map(|l| Sentence::from_pairs(l)).collect())
    }

    #[test]
    fn perfect_prediction() {
        let c = corpus(&[
            &[("Rom", "B-LOC"), ("blev", "O")],
            &[("Sun", "B-MISC"), ("Records", "I-MISC")],
        ]);
        let r = evaluate(&c, &c).unwrap();
        assert_eq!(
            r.overall,
            Scores {
                precision: 100.0,
                recall: 100.0,
                f1: 100.0
            }
        );
        assert!(r.type_report(EntityType::Per).is_absent());
        assert!(!r.type_report(EntityType::Loc).is_absent());
    }

    #[test]
    fn boundary_error_is_fully_wrong() {
        let gold = corpus(&[&[("Rom", "B-LOC"), ("blev", "O")]]);
        let pred = corpus(&[&[("Rom", "B-LOC"), ("blev", "I-LOC")]]);
        let r = evaluate(&gold, &pred).unwrap();
        assert_eq!(r.overall, Scores::default());
        assert_eq!(
            r.counts,
            Counts {
                gold: 1,
                predicted: 1,
                correct: 0
            }
        );
    }

    #[test]
    fn one_correct_one_spurious() {
        let gold = corpus(&[&[("a", "B-PER"), ("b", "O"), ("c", "B-ORG")]]);
        let pred = corpus(&[&[("a", "B-PER"), ("b", "B-LOC"), ("c", "O")]]);
        let r = evaluate(&gold, &pred).unwrap();
        assert_eq!(
            r.overall,
            Scores {
                precision: 50.0,
                recall: 50.0,
                f1: 50.0
            }
        );
    }

    #[test]
    fn repairs_orphan_predictions() {
        let gold = corpus(&[&[("a", "B-PER"), ("b", "O")]]);
        let pred = corpus(&[&[("a", "I-PER"), ("b", "O")]]);
        let r = evaluate(&gold, &pred).unwrap();
        assert_eq!(r.pred_repairs, 1);
        assert_eq!(r.overall.f1, 100.0);
    }

    #[test]
    fn structure_mismatch_names_sentence() {
        let gold = corpus(&[&[("a", "O")], &[("b", "O")]]);
        let pred = corpus(&[&[("a", "O")], &[("c", "O")]]);
        assert!(matches!(
            evaluate(&gold, &pred),
            Err(Error::StructureMismatch { sentence: 1, .. })
        ));
        let short = corpus(&[&[("a", "O")]]);
        assert!(evaluate(&gold, &short).is_err());
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let gold = corpus(&[&[("a", "B-PER")]]);
        let base = evaluate(&gold, &gold).unwrap();
        let with_f1 = |f1| EvalReport {
            overall: Scores { f1, ..base.overall },
            ..base.clone()
        };
        let s = aggregate(&[with_f1(60.0), with_f1(70.0), with_f1(80.0)]).unwrap();
        assert!((s.f1.mean - 70.0).abs() < 1e-12);
        assert!((s.f1.std - 10.0).abs() < 1e-12);
        let p = aggregate(&[with_f1(80.0), with_f1(60.0), with_f1(70.0)]).unwrap();
        assert_eq!(s, p);
        let one = aggregate(std::slice::from_ref(&base)).unwrap();
        assert_eq!(
            one.f1,
            MeanStd {
                mean: 100.0,
                std: 0.0
            }
        );
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn majority_examples() {
        let train = corpus(&[
            &[
                ("Anna", "B-PER"),
                ("bor", "O"),
                ("i", "O"),
                ("Aarhus", "B-LOC"),
            ],
            &[("Anna", "B-PER"), ("smiler", "O")],
            &[("Aarhus", "O")],
        ]);
        let input = corpus(&[&[("Anna", "O"), ("ukendt", "O"), ("Aarhus", "O")]]);
        let out = majority_baseline(&train, &input).unwrap();
        assert_eq!(
            out.sentences[0].tags(),
            vec![Tag::B(EntityType::Per), Tag::O, Tag::O]
        );
    }

    #[test]
    fn majority_repairs_orphans() {
        let train = corpus(&[&[("New", "B-LOC"), ("York", "I-LOC")]]);
        let input = corpus(&[&[("York", "O")]]);
        let out = majority_baseline(&train, &input).unwrap();
        assert_eq!(out.sentences[0].tags(), vec![Tag::B(EntityType::Loc)]);
    }

    #[test]
    fn majority_echoes_dominant_name_pattern() {
        // One frequent person name; locations and organisations are all
        // different between train and test.
        let train = corpus(&[
            &[("Hansen", "B-PER"), ("besøgte", "O"), ("Odense", "B-LOC")],
            &[
                ("Hansen", "B-PER"),
                ("talte", "O"),
                ("med", "O"),
                ("Novo", "B-ORG"),
            ],
        ]);
        let test = corpus(&[
            &[("Hansen", "B-PER"), ("besøgte", "O"), ("Vejle", "B-LOC")],
            &[
                ("Hansen", "B-PER"),
                ("talte", "O"),
                ("med", "O"),
                ("Lego", "B-ORG"),
            ],
        ]);
        let r = evaluate(&test, &majority_baseline(&train, &test).unwrap()).unwrap();
        assert_eq!(r.type_report(EntityType::Per).scores.recall, 100.0);
        assert_eq!(r.type_report(EntityType::Loc).scores.recall, 0.0);
        assert_eq!(r.type_report(EntityType::Org).scores.recall, 0.0);
    }

    fn valid_corpus() -> impl Strategy<Value = Corpus> {
        let sent = proptest::collection::vec(0..Tag::COUNT, 1..8).prop_map(|ix| {
            let tags: Vec<Tag> = ix.into_iter().map(|i| Tag::ALL[i]).collect();
            let (tags, _) = repair_bio(&tags);
            Sentence::new(
                tags.into_iter()
                    .enumerate()
                    .map(|(i, t)| Token::new(format!("w{i}"), t))
                    .collect(),
            )
        });
        proptest::collection::vec(sent, 0..6).prop_map(Corpus::new)
    }

    proptest! {
        #[test]
        fn self_evaluation_is_perfect(c in valid_corpus()) {
            let r = evaluate(&c, &c).unwrap();
            if r.counts.gold > 0 {
                prop_assert_eq!(r.overall, Scores { precision: 100.0, recall: 100.0, f1: 100.0 });
            }
            let sum: usize = r.per_type.iter().map(|t| t.counts.correct).sum();
            prop_assert_eq!(sum, r.counts.correct);
        }

        #[test]
        fn spurious_span_lowers_precision_only(c in valid_corpus()) {
            // Add a spurious single-token span on an O token, if any.
            let slot = c.sentences.iter().enumerate().find_map(|(i, s)| {
                s.tokens.iter().position(|t| t.tag == Tag::O).and_then(|j| {
                    let next_is_i = s.tokens.get(j + 1).is_some_and(|t| matches!(t.tag, Tag::I(_)));
                    (!next_is_i).then_some((i, j))
                })
            });
            if let (Some((i, j)), true) = (slot, extract_count(&c) > 0) {
                let mut pred = c.clone();
                pred.sentences[i].tokens[j].tag = Tag::B(EntityType::Misc);
                let base = evaluate(&c, &c).unwrap();
                let r = evaluate(&c, &pred).unwrap();
                prop_assert!(r.overall.precision < base.overall.precision);
                prop_assert_eq!(r.overall.recall, base.overall.recall);
            }
        }
    }

    fn extract_count(c: &Corpus) -> usize {
        crate::corpus::extract_spans(c).unwrap().len()
    }
}
