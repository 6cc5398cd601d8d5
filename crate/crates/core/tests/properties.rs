//! Invariants checked through the public API on random inputs.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xlner::corpus::{
    cohen_kappa, corpus_stats, repair_bio, validate_bio, Corpus, EntityType, Sentence, Tag, Token,
};
use xlner::embeddings::{
    align_tables, apply_mapping, mine_identical_seeds, Direction, EmbeddingTable,
};
use xlner::eval::evaluate;
use xlner::linalg::{orthogonality_error, random_orthogonal, Matrix};
use xlner::tagger::crf;
use xlner::tnt::TntModel;

fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-scale..scale))
            .collect(),
    )
}

fn any_tag() -> impl Strategy<Value = Tag> {
    (0..Tag::COUNT).prop_map(|i| Tag::ALL[i])
}

fn valid_sentence() -> impl Strategy<Value = Sentence> {
    prop::collection::vec((0..6usize, any_tag()), 1..10).prop_map(|pairs| {
        let raw: Vec<Tag> = pairs.iter().map(|p| p.1).collect();
        let tags = repair_bio(&raw).0;
        Sentence::new(
            pairs
                .iter()
                .zip(tags)
                .map(|(&(w, _), t)| Token::new(["de", "Rom", "og", "Lego", "ser", "Anna"][w], t))
                .collect(),
        )
    })
}

fn valid_corpus() -> impl Strategy<Value = Corpus> {
    prop::collection::vec(valid_sentence(), 1..6).prop_map(Corpus::new)
}

/// `(O | B-X I-X*)*`, read left to right.
fn bio2_grammar(tags: &[Tag]) -> bool {
    let mut i = 0;
    while i < tags.len() {
        match tags[i] {
            Tag::O => i += 1,
            Tag::B(x) => {
                i += 1;
                while i < tags.len() && tags[i] == Tag::I(x) {
                    i += 1;
                }
            }
            Tag::I(_) => return false,
        }
    }
    true
}

#[test]
fn validate_bio_accepts_exactly_the_grammar() {
    let [per, loc, ..] = EntityType::ALL;
    let alphabet = [Tag::O, Tag::B(per), Tag::I(per), Tag::B(loc), Tag::I(loc)];
    let mut seqs: Vec<Vec<Tag>> = vec![Vec::new()];
    let mut checked = 0;
    for _ in 0..4 {
        seqs = seqs
            .iter()
            .flat_map(|s| {
                alphabet.iter().map(move |&t| {
                    let mut n = s.clone();
                    n.push(t);
                    n
                })
            })
            .collect();
        for s in &seqs {
            assert_eq!(validate_bio(s).is_empty(), bio2_grammar(s), "{s:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, 5 + 25 + 125 + 625);
}

fn rename(c: &Corpus, perm: &[usize; 4]) -> Corpus {
    let map = |t: Tag| match t {
        Tag::O => Tag::O,
        Tag::B(x) => Tag::B(EntityType::ALL[perm[x.index()]]),
        Tag::I(x) => Tag::I(EntityType::ALL[perm[x.index()]]),
    };
    Corpus::new(
        c.sentences
            .iter()
            .map(|s| s.with_tags(&s.tags().into_iter().map(map).collect::<Vec<_>>()))
            .collect(),
    )
}

fn permutation() -> impl Strategy<Value = [usize; 4]> {
    Just([0usize, 1, 2, 3])
        .prop_shuffle()
        .prop_map(|v| [v[0], v[1], v[2], v[3]])
}

proptest! {
    #[test]
    fn stats_ratios_are_exact(c in valid_corpus()) {
        let s = corpus_stats(&c);
        prop_assert_eq!(s.ttr, Some(s.types as f64 / s.tokens as f64));
        prop_assert_eq!(s.sentences_with_ne_pct, Some(s.sentences_with_ne as f64 / s.sentences as f64));
        prop_assert!(s.ttr.unwrap() > 0.0 && s.ttr.unwrap() <= 1.0);
        prop_assert!(s.sentences_with_ne <= s.sentences);
        prop_assert!(s.entities >= s.sentences_with_ne);
    }

    #[test]
    fn kappa_is_one_iff_identical(
        a in prop::collection::vec(0..4u8, 1..40),
        flips in prop::collection::vec(any::<bool>(), 40),
    ) {
        let b: Vec<u8> = a.iter().zip(&flips).map(|(&x, &f)| if f { (x + 1) % 4 } else { x }).collect();
        let k = cohen_kappa(&a, &b).unwrap().kappa;
        if a == b {
            prop_assert_eq!(k, 1.0);
        } else {
            prop_assert!(k < 1.0);
        }
        prop_assert!((-1.0..=1.0).contains(&k));
    }

    #[test]
    fn kappa_ignores_consistent_relabeling(
        a in prop::collection::vec(0..4usize, 1..40),
        b in prop::collection::vec(0..4usize, 40),
        perm in permutation(),
    ) {
        let b = &b[..a.len()];
        let k = cohen_kappa(&a, b).unwrap();
        let pa: Vec<usize> = a.iter().map(|&x| perm[x]).collect();
        let pb: Vec<usize> = b.iter().map(|&x| perm[x]).collect();
        let kp = cohen_kappa(&pa, &pb).unwrap();
        prop_assert!((k.kappa - kp.kappa).abs() < 1e-12);
    }

    #[test]
    fn crf_partition_dominates_every_path(seed in any::<u64>(), steps in 1..6usize, k in 1..5usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = uniform(steps, k, 3.0, &mut rng);
        let tr = uniform(k + 2, k + 2, 3.0, &mut rng);
        let z = crf::log_partition(&e, &tr);
        let path: Vec<usize> = (0..steps).map(|t| (seed as usize >> t) % k).collect();
        // equality is attainable (a single path), so allow rounding
        prop_assert!(z >= crf::path_score(&e, &tr, &path) - 1e-9);
        let (best, score) = crf::viterbi(&e, &tr);
        prop_assert!(z >= score - 1e-9);
        prop_assert!((crf::path_score(&e, &tr, &best) - score).abs() < 1e-9);
    }

    #[test]
    fn constrained_viterbi_is_bio_valid(seed in any::<u64>(), steps in 1..12usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = uniform(steps, Tag::COUNT, 5.0, &mut rng);
        let tr = crf::constrain(&uniform(Tag::COUNT + 2, Tag::COUNT + 2, 5.0, &mut rng));
        let tags: Vec<Tag> = crf::viterbi(&e, &tr).0.into_iter().map(|i| Tag::ALL[i]).collect();
        prop_assert!(validate_bio(&tags).is_empty(), "{:?}", tags);
    }

    #[test]
    fn alignment_preserves_norms_and_is_deterministic(seed in any::<u64>(), dim in 2..12usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n"];
        let x = uniform(words.len(), dim, 1.0, &mut rng);
        let r = random_orthogonal(dim, &mut rng);
        let y = x.matmul(&r);
        let mut src = EmbeddingTable::new(dim);
        let mut tgt = EmbeddingTable::new(dim);
        for (i, w) in words.iter().enumerate() {
            src.insert(*w, x.row(i));
            tgt.insert(*w, y.row(i));
        }
        tgt.insert("kun-dansk", &vec![0.5; dim]);
        let seeds = mine_identical_seeds(&src, &tgt).unwrap();
        let back = mine_identical_seeds(&tgt, &src).unwrap();
        prop_assert_eq!(&seeds.pairs, &back.pairs);
        let w = align_tables(&src, &tgt, &seeds, Direction::TargetToSource).unwrap();
        let again = align_tables(&src, &tgt, &seeds, Direction::TargetToSource).unwrap();
        prop_assert_eq!(&w, &again);
        prop_assert!(orthogonality_error(&w.matrix) < 1e-8);
        let mapped = apply_mapping(&tgt, &w).unwrap();
        for word in tgt.words() {
            let before: f64 = tgt.get(word).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
            let after: f64 = mapped.get(word).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((before - after).abs() <= 1e-6 * before.max(1.0));
        }
    }

    #[test]
    fn tnt_transitions_are_distributions(c in valid_corpus()) {
        let model = TntModel::estimate(&c).unwrap();
        let mut contexts: Vec<Option<Tag>> = vec![None];
        contexts.extend(model.tags().iter().copied().map(Some));
        let mut targets: Vec<Option<Tag>> = model.tags().iter().copied().map(Some).collect();
        targets.push(None);
        for &t1 in &contexts {
            for &t2 in &contexts {
                if t1.is_some() && t2.is_none() {
                    continue;
                }
                let total: f64 = targets.iter().map(|&t3| model.transition(t1, t2, t3)).sum();
                prop_assert!((total - 1.0).abs() < 1e-9, "{:?} {:?}: {}", t1, t2, total);
            }
        }
        let l = model.lambdas();
        prop_assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-12 && l.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn eval_counts_are_consistent(gold in valid_corpus(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = Corpus::new(
            gold.sentences
                .iter()
                .map(|s| {
                    let noisy: Vec<Tag> = s
                        .tags()
                        .into_iter()
                        .map(|t| if rng.random_bool(0.3) { Tag::ALL[rng.random_range(0..Tag::COUNT)] } else { t })
                        .collect();
                    s.with_tags(&noisy)
                })
                .collect(),
        );
        let r = evaluate(&gold, &pred).unwrap();
        let sum = |f: fn(&xlner::eval::Counts) -> usize| r.per_type.iter().map(|t| f(&t.counts)).sum::<usize>();
        prop_assert_eq!(sum(|c| c.correct), r.counts.correct);
        prop_assert_eq!(sum(|c| c.gold), r.counts.gold);
        prop_assert_eq!(sum(|c| c.predicted), r.counts.predicted);
        prop_assert!(r.counts.correct <= r.counts.gold.min(r.counts.predicted));
        if r.counts.predicted > 0 {
            prop_assert_eq!(r.overall.precision, 100.0 * r.counts.correct as f64 / r.counts.predicted as f64);
        }
        if r.counts.gold > 0 {
            prop_assert_eq!(r.overall.recall, 100.0 * r.counts.correct as f64 / r.counts.gold as f64);
        }
    }

    #[test]
    fn eval_is_invariant_under_label_renaming(gold in valid_corpus(), pred_seed in valid_corpus(), perm in permutation()) {
        // reuse the gold tokens with another corpus's tags where lengths allow
        let pred = Corpus::new(
            gold.sentences
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let donor = pred_seed.sentences[i % pred_seed.len()].tags();
                    let tags: Vec<Tag> = (0..s.len()).map(|j| donor.get(j).copied().unwrap_or(Tag::O)).collect();
                    s.with_tags(&repair_bio(&tags).0)
                })
                .collect(),
        );
        let r = evaluate(&gold, &pred).unwrap();
        let rr = evaluate(&rename(&gold, &perm), &rename(&pred, &perm)).unwrap();
        prop_assert_eq!(r.overall, rr.overall);
        prop_assert_eq!(r.counts, rr.counts);
        for t in EntityType::ALL {
            let renamed = EntityType::ALL[perm[t.index()]];
            prop_assert_eq!(r.type_report(t).counts, rr.type_report(renamed).counts);
            prop_assert_eq!(r.type_report(t).scores, rr.type_report(renamed).scores);
        }
    }
}
