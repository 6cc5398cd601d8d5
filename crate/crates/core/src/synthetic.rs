//! Seeded toy languages for tests, benchmarks and demos.
//!
//! [`learnability_corpus`] produces a small corpus whose entities are fully
//! determined by their word form. [`TwinLanguages`] produces a source and a
//! target language that share one set of concepts: every concept has a latent
//! vector, the source embedding is that vector and the target embedding is the
//! vector under a random rotation plus noise. Surfaces differ between the two
//! languages except for punctuation, numerals and some names, which are
//! spelled identically and serve as alignment seeds.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{Corpus, EntityType, Sentence, Tag, Token};
use crate::embeddings::EmbeddingTable;
use crate::linalg::{random_orthogonal, Matrix};
use crate::transfer::{ExperimentData, SourceSplit};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "re", "su", "ta", "ne", "vo", "pi", "da", "ro", "le", "mu", "si", "ga", "to",
    "be", "fa", "hu", "ni", "ko", "ve", "za", "ri",
];
const PUNCT: [&str; 6] = [".", ",", ":", ";", "!", "?"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Name(EntityType),
    Verb,
    Prep,
    Noun,
    Num,
    Punct,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Entity(EntityType),
    Word(Class),
    Stop,
}

const TEMPLATES: [&[Slot]; 6] = {
    use EntityType::*;
    use Slot::*;
    [
        &[
            Entity(Per),
            Word(Class::Verb),
            Word(Class::Prep),
            Entity(Loc),
            Stop,
        ],
        &[
            Entity(Org),
            Word(Class::Verb),
            Word(Class::Noun),
            Word(Class::Prep),
            Entity(Loc),
            Stop,
        ],
        &[
            Word(Class::Noun),
            Word(Class::Verb),
            Entity(Per),
            Word(Class::Punct),
            Entity(Per),
            Word(Class::Verb),
            Stop,
        ],
        &[
            Entity(Per),
            Word(Class::Verb),
            Entity(Misc),
            Word(Class::Noun),
            Word(Class::Num),
            Stop,
        ],
        &[
            Word(Class::Prep),
            Word(Class::Num),
            Word(Class::Verb),
            Entity(Org),
            Word(Class::Noun),
            Stop,
        ],
        &[
            Word(Class::Noun),
            Word(Class::Verb),
            Word(Class::Prep),
            Word(Class::Noun),
            Stop,
        ],
    ]
};

#[derive(Debug, Clone)]
struct Concept {
    class: Class,
    source: String,
    target: String,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn invent(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let syllables = rng.random_range(min..=max);
    (0..syllables)
        .map(|_| *SYLLABLES.choose(rng).unwrap())
        .collect()
}

/// Target spelling: syllables reversed and vowels shifted.
fn translate(word: &str) -> String {
    let shifted: String = word
        .chars()
        .map(|c| match c {
            'a' => 'e',
            'e' => 'i',
            'i' => 'o',
            'o' => 'u',
            'u' => 'a',
            other => other,
        })
        .collect();
    let chars: Vec<char> = shifted.chars().collect();
    let mut out: Vec<String> = chars.chunks(2).map(|c| c.iter().collect()).collect();
    out.reverse();
    out.concat() + "n"
}

struct Lexicon {
    concepts: Vec<Concept>,
}

impl Lexicon {
    fn generate(rng: &mut ChaCha8Rng, names_per_type: usize, shared_fraction: f64) -> Lexicon {
        let mut concepts = Vec::new();
        let mut seen = HashSet::new();
        let mut add = |rng: &mut ChaCha8Rng, class: Class, concepts: &mut Vec<Concept>| loop {
            let (source, target) = match class {
                Class::Punct | Class::Num => unreachable!(),
                Class::Name(_) => {
                    let s = capitalize(&invent(rng, 2, 3));
                    let shared = rng.random::<f64>() < shared_fraction;
                    let t = if shared {
                        s.clone()
                    } else {
                        capitalize(&translate(&s.to_lowercase()))
                    };
                    (s, t)
                }
                _ => {
                    let s = invent(rng, 1, 3);
                    (s.clone(), translate(&s))
                }
            };
            if seen.contains(&source) || seen.contains(&target) {
                continue;
            }
            seen.insert(source.clone());
            seen.insert(target.clone());
            concepts.push(Concept {
                class,
                source,
                target,
            });
            break;
        };
        for ty in EntityType::ALL {
            for _ in 0..names_per_type {
                add(rng, Class::Name(ty), &mut concepts);
            }
        }
        for (class, n) in [(Class::Verb, 12), (Class::Prep, 6), (Class::Noun, 16)] {
            for _ in 0..n {
                add(rng, class, &mut concepts);
            }
        }
        for p in PUNCT {
            concepts.push(Concept {
                class: Class::Punct,
                source: p.into(),
                target: p.into(),
            });
        }
        for year in 1990..2010 {
            let y = year.to_string();
            concepts.push(Concept {
                class: Class::Num,
                source: y.clone(),
                target: y,
            });
        }
        Lexicon { concepts }
    }

    fn of_class(&self, class: Class) -> Vec<usize> {
        (0..self.concepts.len())
            .filter(|&i| self.concepts[i].class == class)
            .collect()
    }
}

struct SentenceMaker<'a> {
    lexicon: &'a Lexicon,
    names: [Vec<usize>; 4],
    target: bool,
}

impl SentenceMaker<'_> {
    fn word(&self, i: usize) -> &str {
        let c = &self.lexicon.concepts[i];
        if self.target {
            &c.target
        } else {
            &c.source
        }
    }

    fn sentence(&self, rng: &mut ChaCha8Rng) -> Sentence {
        let template = TEMPLATES.choose(rng).unwrap();
        let mut tokens = Vec::new();
        for slot in template.iter() {
            match *slot {
                Slot::Entity(ty) => {
                    let pool = &self.names[ty.index()];
                    let len = if rng.random::<f64>() < 0.3 { 2 } else { 1 };
                    for k in 0..len {
                        let w = self.word(*pool.choose(rng).unwrap());
                        let tag = if k == 0 { Tag::B(ty) } else { Tag::I(ty) };
                        tokens.push(Token::new(w, tag));
                    }
                }
                Slot::Word(class) => {
                    let pool = self.lexicon.of_class(class);
                    tokens.push(Token::new(self.word(*pool.choose(rng).unwrap()), Tag::O));
                }
                Slot::Stop => tokens.push(Token::new(".", Tag::O)),
            }
        }
        Sentence::new(tokens)
    }

    fn corpus(&self, n: usize, rng: &mut ChaCha8Rng, language: &str) -> Corpus {
        Corpus::new((0..n).map(|_| self.sentence(rng)).collect()).with_language(language)
    }
}

/// A training corpus of `sentences` sentences and a dev corpus of `dev`
/// sentences over the same closed name lexicon, so every entity in dev is a
/// word seen with the same type in training.
pub fn learnability_corpus(seed: u64, sentences: usize, dev: usize) -> (Corpus, Corpus) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = Lexicon::generate(&mut rng, 6, 0.0);
    let names = EntityType::ALL.map(|t| lexicon.of_class(Class::Name(t)));
    let maker = SentenceMaker {
        lexicon: &lexicon,
        names,
        target: false,
    };
    let train = maker.corpus(sentences, &mut rng, "src");
    let dev = maker.corpus(dev, &mut rng, "src");
    (train, dev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinConfig {
    pub seed: u64,
    pub dim: usize,
    pub names_per_type: usize,
    /// Fraction of names spelled identically in both languages.
    pub shared_names: f64,
    /// Spread of concept vectors around their class centroid.
    pub spread: f64,
    /// Gaussian noise added to rotated target vectors.
    pub noise: f64,
    pub source_train: usize,
    pub source_dev: usize,
    pub target_train: usize,
    pub target_dev: usize,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            seed: 1,
            dim: 16,
            names_per_type: 40,
            shared_names: 0.3,
            spread: 0.4,
            noise: 0.02,
            source_train: 300,
            source_dev: 60,
            target_train: 40,
            target_dev: 120,
        }
    }
}

/// Twin source and target languages with embeddings.
#[derive(Debug, Clone)]
pub struct TwinLanguages {
    pub source_train: Corpus,
    pub source_dev: Corpus,
    pub target_train: Corpus,
    pub target_dev: Corpus,
    pub source_embeddings: EmbeddingTable,
    pub target_embeddings: EmbeddingTable,
    /// Maps source vectors onto (noise-free) target vectors.
    pub rotation: Matrix,
}

impl TwinLanguages {
    /// Half of each type's names appear in training data (source train and
    /// target train); the target dev set uses only the other half, so a
    /// target tagger can only recognize them through the embeddings.
    pub fn generate(config: &TwinConfig) -> TwinLanguages {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let lexicon = Lexicon::generate(&mut rng, config.names_per_type, config.shared_names);
        let dim = config.dim;
        let gaussian = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| rng.sample(StandardNormal)).collect()
        };

        let classes: Vec<Class> = EntityType::ALL
            .iter()
            .map(|&t| Class::Name(t))
            .chain([
                Class::Verb,
                Class::Prep,
                Class::Noun,
                Class::Num,
                Class::Punct,
            ])
            .collect();
        let centroids: Vec<Vec<f64>> = classes.iter().map(|_| gaussian(&mut rng)).collect();
        let rotation = random_orthogonal(dim, &mut rng);
        let mut source_embeddings = EmbeddingTable::new(dim);
        let mut target_embeddings = EmbeddingTable::new(dim);
        let mut mapped = vec![0.0; dim];
        for c in &lexicon.concepts {
            let k = classes.iter().position(|&x| x == c.class).unwrap();
            let latent: Vec<f64> = gaussian(&mut rng)
                .iter()
                .zip(&centroids[k])
                .map(|(n, m)| m + config.spread * n)
                .collect();
            for (j, out) in mapped.iter_mut().enumerate() {
                *out = (0..dim).map(|i| latent[i] * rotation[(i, j)]).sum::<f64>()
                    + config.noise * rng.sample::<f64, _>(StandardNormal);
            }
            source_embeddings.insert(c.source.clone(), &latent);
            target_embeddings.insert(c.target.clone(), &mapped);
        }

        let split = |t: EntityType| -> (Vec<usize>, Vec<usize>) {
            let all = lexicon.of_class(Class::Name(t));
            let half = all.len() / 2;
            (all[..half].to_vec(), all[half..].to_vec())
        };
        let seen = EntityType::ALL.map(|t| split(t).0);
        let novel = EntityType::ALL.map(|t| split(t).1);
        let source = SentenceMaker {
            lexicon: &lexicon,
            names: seen.clone(),
            target: false,
        };
        let target_seen = SentenceMaker {
            lexicon: &lexicon,
            names: seen,
            target: true,
        };
        let target_novel = SentenceMaker {
            lexicon: &lexicon,
            names: novel,
            target: true,
        };
        TwinLanguages {
            source_train: source.corpus(config.source_train, &mut rng, "src"),
            source_dev: source.corpus(config.source_dev, &mut rng, "src"),
            target_train: target_seen.corpus(config.target_train, &mut rng, "tgt"),
            target_dev: target_novel.corpus(config.target_dev, &mut rng, "tgt"),
            source_embeddings,
            target_embeddings,
            rotation,
        }
    }

    /// The twins as experiment inputs: the source corpora play the medium
    /// source, and the target training corpus is the pool the target sizes
    /// draw from. Alignment is left to [`ExperimentData::align`].
    pub fn experiment_data(&self) -> ExperimentData {
        ExperimentData {
            medium: Some(SourceSplit {
                train: self.source_train.clone(),
                dev: self.source_dev.clone(),
            }),
            large: None,
            target_train: Some(self.target_train.clone()),
            target_dev: Some(self.target_dev.clone()),
            source_embeddings: Some(self.source_embeddings.clone()),
            target_embeddings: Some(self.target_embeddings.clone()),
            bilingual: None,
        }
    }
}
