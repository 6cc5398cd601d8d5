//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p xlner-core --test acceptance`. Pass criterion
//! numbers as arguments to run a subset. Criteria 9 and 10 read real corpora
//! from `XLNER_DATA_DIR` and are skipped when the files are missing;
//! criterion 10 additionally needs `XLNER_ACCEPTANCE_FULL=1` because it
//! trains full-size models.

use std::env;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use xlner::corpus::{
    cohen_kappa, corpus_stats, read_conll, repair_bio, ColumnLayout, Corpus, Sentence, Tag,
};
use xlner::embeddings::{procrustes_align, procrustes_loss, Direction};
use xlner::eval::evaluate;
use xlner::linalg::{orthogonality_error, random_orthogonal, Matrix};
use xlner::par::Execution;
use xlner::synthetic::{learnability_corpus, TwinConfig, TwinLanguages};
use xlner::tagger::{
    self, batch_loss, batch_loss_and_grad, build_vocab, crf, init_params, TaggerConfig,
    TENSOR_NAMES,
};
use xlner::tnt::{Beam, TntModel};
use xlner::transfer::{load_data, run_grid, CellKey, ExperimentConfig};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn all_paths(k: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// Score of a path written out directly from the definition.
fn brute_score(e: &Matrix, tr: &Matrix, path: &[usize]) -> f64 {
    let k = e.cols;
    let mut s = tr[(k, path[0])] + tr[(path[path.len() - 1], k + 1)];
    for t in 0..path.len() {
        s += e[(t, path[t])];
        if t > 0 {
            s += tr[(path[t - 1], path[t])];
        }
    }
    s
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut viterbi_mismatch = 0;
    let mut mass_error: f64 = 0.0;
    for _ in 0..200 {
        let steps = rng.random_range(1..=5);
        let k = rng.random_range(1..=4);
        let e = gaussian_matrix(steps, k, 2.0, &mut rng);
        let tr = gaussian_matrix(k + 2, k + 2, 2.0, &mut rng);
        let paths = all_paths(k, steps);
        let scores: Vec<f64> = paths.iter().map(|p| brute_score(&e, &tr, p)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        worst = worst.max((crf::log_partition(&e, &tr) - log_z).abs());
        let gold = &paths[rng.random_range(0..paths.len())];
        let nll = log_z - brute_score(&e, &tr, gold);
        worst = worst.max((crf::neg_log_likelihood(&e, &tr, gold) - nll).abs());
        let mut best = 0;
        for i in 1..paths.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        if crf::viterbi(&e, &tr).0 != paths[best] {
            viterbi_mismatch += 1;
        }
        let z = crf::log_partition(&e, &tr);
        let mass: f64 = scores.iter().map(|s| (s - z).exp()).sum();
        mass_error = mass_error.max((mass - 1.0).abs());
    }
    check(
        worst <= 1e-10 && viterbi_mismatch == 0 && mass_error <= 1e-10,
        format!("max |Δ| {worst:.2e}, viterbi mismatches {viterbi_mismatch}, path mass error {mass_error:.2e}"),
    )
}

fn criterion_2() -> Verdict {
    let mut worst_ratio: f64 = 0.0;
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for batch_no in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + batch_no);
        let (pool, _) = learnability_corpus(300 + batch_no, 10, 1);
        let picks: Vec<Sentence> = (0..2 + batch_no as usize)
            .map(|_| pool.sentences[rng.random_range(0..pool.len())].clone())
            .collect();
        let corpus = Corpus::new(picks);
        let config = TaggerConfig {
            word_emb_dim: rng.random_range(3..=5),
            word_lstm_dim: rng.random_range(3..=5),
            char_emb_dim: rng.random_range(3..=5),
            char_lstm_dim: rng.random_range(3..=5),
            dropout: 0.0,
            seed: batch_no,
            constrain_training: batch_no == 2,
            ..TaggerConfig::default()
        };
        let vocab = build_vocab(&[&corpus], None, &[]);
        let mut params = init_params(&config, &vocab, None).unwrap();
        let batch: Vec<_> = corpus.sentences.iter().map(|s| vocab.encode(s)).collect();
        let (_, grad) = batch_loss_and_grad(&params, &config, &batch, None, Execution::Sequential);
        let analytic = grad.to_dense(&params);
        let h = 1e-5;
        for (ti, name) in TENSOR_NAMES.iter().enumerate() {
            for j in 0..analytic[ti].len() {
                let orig = params.tensors()[ti][j];
                params.tensors_mut()[ti][j] = orig + h;
                let up = batch_loss(&params, &config, &batch, Execution::Sequential);
                params.tensors_mut()[ti][j] = orig - h;
                let down = batch_loss(&params, &config, &batch, Execution::Sequential);
                params.tensors_mut()[ti][j] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[ti][j];
                let tol = (1e-4 * a.abs().max(numeric.abs())).max(1e-6);
                worst_ratio = worst_ratio.max((a - numeric).abs() / tol);
                checked += 1;
                if (a - numeric).abs() > tol && failures.len() < 3 {
                    failures.push(format!(
                        "batch {batch_no} {name}[{j}] {a:.3e} vs {numeric:.3e}"
                    ));
                }
            }
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{checked} scalars over 3 batches, worst |Δ|/tol {worst_ratio:.3} {}",
            failures.join("; ")
        ),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut ortho: f64 = 0.0;
    let mut recovery: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(2..=16);
        let x = gaussian_matrix(d + 10, d, 1.0, &mut rng);
        let r = random_orthogonal(d, &mut rng);
        let w = procrustes_align(&x, &x.matmul(&r)).unwrap().matrix;
        ortho = ortho.max(orthogonality_error(&w));
        recovery = recovery.max(w.sub(&r).frobenius_norm());
    }
    let mut beaten = 0;
    let mut margin = f64::INFINITY;
    for _ in 0..20 {
        let d = rng.random_range(2..=8);
        let x = gaussian_matrix(3 * d, d, 1.0, &mut rng);
        let r = random_orthogonal(d, &mut rng);
        let noise = gaussian_matrix(3 * d, d, 0.3, &mut rng);
        let mut y = x.matmul(&r);
        y.data
            .iter_mut()
            .zip(&noise.data)
            .for_each(|(a, b)| *a += b);
        let w = procrustes_align(&x, &y).unwrap().matrix;
        ortho = ortho.max(orthogonality_error(&w));
        let loss = procrustes_loss(&x, &y, &w);
        for _ in 0..1000 {
            let q = random_orthogonal(d, &mut rng);
            let other = procrustes_loss(&x, &y, &q);
            margin = margin.min(other - loss);
            if other < loss {
                beaten += 1;
            }
        }
    }
    // a rank-deficient cross-covariance still yields an orthogonal map
    let x = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]);
    let w = procrustes_align(&x, &x).unwrap().matrix;
    ortho = ortho.max(orthogonality_error(&w));
    check(
        ortho < 1e-8 && recovery <= 1e-6 && beaten == 0,
        format!(
            "‖WᵀW−I‖ max {ortho:.2e}, planted ‖W−R‖ max {recovery:.2e}, random rotations better: {beaten}/20000 (min margin {margin:.3})"
        ),
    )
}

fn corpus_with(words: &[&str], labels: &[&str]) -> Corpus {
    let pairs: Vec<(&str, &str)> = words.iter().copied().zip(labels.iter().copied()).collect();
    Corpus::new(vec![Sentence::from_pairs(&pairs)])
}

fn criterion_4() -> Verdict {
    let mut problems = Vec::new();
    let mut expect = |name: &str, gold: &Corpus, pred: &Corpus, p: f64, r: f64, f: f64| {
        let rep = evaluate(gold, pred).unwrap();
        let got = (rep.overall.precision, rep.overall.recall, rep.overall.f1);
        if got != (p, r, f) {
            problems.push(format!("{name}: got {got:?}"));
        }
    };
    let words = ["Rom", "blev", "ikke", "bygget"];
    let gold = corpus_with(&words[..2], &["B-LOC", "O"]);
    expect("identity", &gold, &gold, 100.0, 100.0, 100.0);
    expect(
        "boundary",
        &gold,
        &corpus_with(&words[..2], &["B-LOC", "I-LOC"]),
        0.0,
        0.0,
        0.0,
    );
    let gold2 = corpus_with(&words, &["B-PER", "O", "B-LOC", "O"]);
    let spurious = corpus_with(&words, &["B-PER", "O", "O", "B-ORG"]);
    expect("spurious", &gold2, &spurious, 50.0, 50.0, 50.0);
    // 3 gold spans, 2 predicted, 1 correct: P 50, R 100/3, F1 40
    let gold3 = corpus_with(&words, &["B-PER", "B-LOC", "O", "B-ORG"]);
    let pred3 = corpus_with(&words, &["B-PER", "O", "O", "B-MISC"]);
    let rep = evaluate(&gold3, &pred3).unwrap();
    let want_f1 = 2.0 * 50.0 * (100.0 / 3.0) / (50.0 + 100.0 / 3.0);
    if rep.overall.precision != 50.0
        || rep.overall.recall != 100.0 / 3.0
        || (rep.overall.f1 - want_f1).abs() > 1e-12
    {
        problems.push(format!("mixed: got {:?}", rep.overall));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut self_checks = 0;
    for _ in 0..200 {
        let sentences: Vec<Sentence> = (0..rng.random_range(1..6))
            .map(|_| {
                let n = rng.random_range(1..10);
                let raw: Vec<Tag> = (0..n)
                    .map(|_| Tag::ALL[rng.random_range(0..Tag::COUNT)])
                    .collect();
                let mut fixed = repair_bio(&raw).0;
                fixed[0] = Tag::ALL[1 + 2 * rng.random_range(0..4)];
                let pairs: Vec<(String, String)> = fixed
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (format!("w{i}"), t.to_string()))
                    .collect();
                let refs: Vec<(&str, &str)> = pairs
                    .iter()
                    .map(|(a, b)| (a.as_str(), b.as_str()))
                    .collect();
                Sentence::from_pairs(&refs)
            })
            .collect();
        let c = Corpus::new(sentences);
        let rep = evaluate(&c, &c).unwrap();
        if (rep.overall.precision, rep.overall.recall, rep.overall.f1) != (100.0, 100.0, 100.0) {
            problems.push(format!("self-evaluation gave {:?}", rep.overall));
        }
        self_checks += 1;
    }
    check(
        problems.is_empty(),
        format!(
            "4 fixtures, {self_checks} random self-evaluations {}",
            problems.join("; ")
        ),
    )
}

fn criterion_5() -> Verdict {
    let (train, dev) = learnability_corpus(5, 50, 25);
    let config = TaggerConfig {
        max_epochs: 30,
        seed: 1,
        ..TaggerConfig::default()
    };
    let start = Instant::now();
    let (model, history) =
        tagger::train(&config, &train, &dev, None, &[], Execution::Sequential).unwrap();
    let elapsed = start.elapsed();
    let (model2, history2) =
        tagger::train(&config, &train, &dev, None, &[], Execution::Sequential).unwrap();
    let deterministic = history == history2 && model == model2;
    let best = history.best_f1().unwrap_or(0.0);
    check(
        best > 90.0 && history.best_epoch <= 30 && deterministic && elapsed < Duration::from_secs(120),
        format!(
            "best dev F1 {best:.2} at epoch {} of {}, deterministic {deterministic}, {:.1} s per run",
            history.best_epoch,
            history.epochs_run(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Verdict {
    let twins = TwinLanguages::generate(&TwinConfig::default());
    let mut data = twins.experiment_data();
    data.align(Direction::TargetToSource, Execution::Sequential)
        .unwrap();
    let cells: Vec<CellKey> = [
        "zero_shot/medium/none",
        "majority/none/tiny",
        "joint/medium/tiny",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect();
    let config = ExperimentConfig {
        cells: cells.clone(),
        seeds: vec![1, 2, 3],
        tiny_tokens: usize::MAX,
        tagger: TaggerConfig {
            word_emb_dim: 16,
            word_lstm_dim: 25,
            char_emb_dim: 10,
            char_lstm_dim: 10,
            max_epochs: 15,
            patience: 4,
            ..TaggerConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let matrix = run_grid(&config, &data, None, Execution::Sequential).unwrap();
    let f1 = |i: usize| matrix.get(cells[i]).unwrap().summary.f1.mean;
    let (zero_shot, majority, joint) = (f1(0), f1(1), f1(2));
    check(
        zero_shot > majority && joint >= zero_shot - 1.0,
        format!("zero-shot {zero_shot:.2}, majority {majority:.2}, joint {joint:.2}"),
    )
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let labels = ["O", "O", "B-PER", "I-PER", "B-LOC", "B-ORG", "I-ORG"];
    let words = ["a", "b", "c", "Dd", "Ee", "ff", "Gg"];
    let mut lambda_error: f64 = 0.0;
    let mut decode_mismatch = 0;
    let mut instances = 0;
    for _ in 0..100 {
        let sentences: Vec<Sentence> = (0..rng.random_range(1..6))
            .map(|_| {
                let pairs: Vec<(&str, &str)> = (0..rng.random_range(1..6))
                    .map(|_| {
                        (
                            words[rng.random_range(0..words.len())],
                            labels[rng.random_range(0..labels.len())],
                        )
                    })
                    .collect();
                Sentence::from_pairs(&pairs)
            })
            .collect();
        let model = TntModel::estimate(&Corpus::new(sentences)).unwrap();
        let l = model.lambdas();
        lambda_error = lambda_error.max((l.iter().sum::<f64>() - 1.0).abs());
        if l.iter().any(|&x| x < 0.0) {
            lambda_error = f64::INFINITY;
        }
        let len = rng.random_range(1..=4);
        let test: Vec<&str> = (0..len)
            .map(|_| {
                *["a", "Dd", "ff", "Zq", "xy"]
                    .get(rng.random_range(0..5))
                    .unwrap()
            })
            .collect();
        let tagset = model.tags().to_vec();
        let mut best_score = f64::NEG_INFINITY;
        for path in all_paths(tagset.len(), len) {
            let seq: Vec<Option<Tag>> = path.iter().map(|&i| Some(tagset[i])).collect();
            let mut score = 0.0;
            let (mut a, mut b) = (None, None);
            for (w, &t) in test.iter().zip(&seq) {
                score += model.transition(a, b, t).ln() + model.emission(w, t.unwrap()).ln();
                (a, b) = (b, t);
            }
            score += model.transition(a, b, None).ln();
            best_score = best_score.max(score);
        }
        let decoded = model.decode(&test, Beam::Exact);
        let got = model.sequence_log_prob(&test, &decoded);
        if !(got == best_score || (got - best_score).abs() <= 1e-9 * best_score.abs().max(1.0)) {
            decode_mismatch += 1;
        }
        instances += 1;
    }
    let (train, _) = learnability_corpus(77, 30, 1);
    let mut overfit_failures = 0;
    for s in &train.sentences {
        let model = TntModel::estimate(&Corpus::new(vec![s.clone()])).unwrap();
        if model.tag_sentence(s, Beam::Exact) != *s {
            overfit_failures += 1;
        }
    }
    check(
        lambda_error < 1e-12 && decode_mismatch == 0 && overfit_failures == 0,
        format!(
            "λ sum error {lambda_error:.1e}, exact-decode mismatches {decode_mismatch}/{instances}, overfit failures {overfit_failures}/{}",
            train.len()
        ),
    )
}

fn criterion_8() -> Verdict {
    let a = [1, 1, 0, 0];
    let b = [1, 0, 0, 0];
    let hand = cohen_kappa(&a, &b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let n = 100_000;
    let draw = |rng: &mut ChaCha8Rng, weights: &[f64]| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.len() - 1
    };
    let x: Vec<usize> = (0..n)
        .map(|_| draw(&mut rng, &[0.6, 0.2, 0.15, 0.05]))
        .collect();
    let y: Vec<usize> = (0..n)
        .map(|_| draw(&mut rng, &[0.5, 0.3, 0.1, 0.1]))
        .collect();
    let mc = cohen_kappa(&x, &y).unwrap();
    check(
        hand.observed == 0.75 && hand.expected == 0.5 && hand.kappa == 0.5 && mc.kappa.abs() < 0.05,
        format!(
            "hand κ {} (p_o {}, p_e {}), independent κ {:.4} at n={n}",
            hand.kappa, hand.observed, hand.expected, mc.kappa
        ),
    )
}

fn data_dir() -> Option<PathBuf> {
    env::var_os("XLNER_DATA_DIR").map(PathBuf::from)
}

fn criterion_9() -> Verdict {
    let Some(dir) = data_dir() else {
        return Verdict::Skip("XLNER_DATA_DIR not set".into());
    };
    let layout = ColumnLayout::default();
    let mut notes = Vec::new();
    let mut ok = true;
    let mut any = false;
    let dev = dir.join("da.dev");
    if dev.is_file() {
        any = true;
        let s = corpus_stats(&read_conll(&dev, &layout).unwrap());
        let ttr = s.ttr.unwrap_or(0.0);
        let good = s.sentences == 564
            && s.tokens == 10_332
            && s.entities == 347
            && (ttr - 0.35).abs() <= 0.005;
        ok &= good;
        notes.push(format!(
            "da.dev {} sentences, {} tokens, {} entities, TTR {ttr:.3}",
            s.sentences, s.tokens, s.entities
        ));
    }
    for (file, target) in [("eng.testa", 3250.0), ("eng.train", 14000.0)] {
        let path = dir.join(file);
        if path.is_file() {
            any = true;
            let n = read_conll(&path, &layout).unwrap().len() as f64;
            ok &= (n - target).abs() <= 0.02 * target;
            notes.push(format!("{file} {n} sentences (expected ≈{target})"));
        }
    }
    if !any {
        return Verdict::Skip(format!(
            "no da.dev, eng.testa or eng.train under {}",
            dir.display()
        ));
    }
    check(ok, notes.join("; "))
}

fn criterion_10() -> Verdict {
    let Some(dir) = data_dir() else {
        return Verdict::Skip("XLNER_DATA_DIR not set".into());
    };
    let needed = ["eng.testa", "da.train", "da.dev", "en.vec", "da.vec"];
    if let Some(missing) = needed.iter().find(|f| !dir.join(f).is_file()) {
        return Verdict::Skip(format!("{missing} not found under {}", dir.display()));
    }
    if env::var("XLNER_ACCEPTANCE_FULL").as_deref() != Ok("1") {
        return Verdict::Skip("set XLNER_ACCEPTANCE_FULL=1 to train the full-size models".into());
    }
    let text = "cells = in_language_plain/none/small, in_language_pretrained/none/small, \
                zero_shot/medium/none, joint/medium/small";
    let config = ExperimentConfig::parse(text, Some(&dir)).unwrap();
    let data = load_data(&config, Execution::Parallel).unwrap();
    let matrix = run_grid(&config, &data, None, Execution::Parallel).unwrap();
    let f1 = |i: usize| matrix.get(config.cells[i]).unwrap().summary.f1.mean;
    let (plain, poly, zero_shot, joint) = (f1(0), f1(1), f1(2), f1(3));
    check(
        poly >= plain + 5.0 && joint >= zero_shot + 5.0,
        format!("Small plain {plain:.2}, +Poly {poly:.2}; zero-shot Medium {zero_shot:.2}, joint Medium+Small {joint:.2}"),
    )
}

const CRITERIA: [(&str, fn() -> Verdict, Option<u64>); 10] = [
    ("CRF oracle equivalence", criterion_1, Some(10)),
    ("gradient correctness", criterion_2, Some(30)),
    ("Procrustes", criterion_3, Some(10)),
    ("evaluator fixtures", criterion_4, None),
    ("learnability", criterion_5, None),
    ("synthetic transfer ordering", criterion_6, Some(300)),
    ("TnT", criterion_7, None),
    ("Cohen's kappa", criterion_8, None),
    ("Danish and CoNLL statistics", criterion_9, None),
    ("full pipeline orderings", criterion_10, None),
];

fn main() -> ExitCode {
    let selected: Vec<usize> = env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run, limit)) in CRITERIA.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let mut verdict = run();
        let secs = start.elapsed().as_secs_f64();
        if let (Some(limit), Verdict::Pass(detail)) = (limit, &verdict) {
            if secs >= *limit as f64 {
                verdict = Verdict::Fail(format!("{detail}; exceeded {limit} s"));
            }
        }
        let (status, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!(
            "criterion {n:>2} {status} {name} ({secs:.2} s): {}",
            detail.trim_end()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
