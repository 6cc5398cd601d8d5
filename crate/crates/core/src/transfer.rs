//! Experiment grid over transfer regimes, source sizes, target sizes and
//! seeds.
//!
//! A cell is `(regime, source size, target size)`; every cell runs once per
//! seed and is summarized by the mean and sample standard deviation of its
//! span scores on the target dev set.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Serialize, Serializer};

use crate::corpus::{read_conll, ColumnLayout, Corpus};
use crate::embeddings::{
    align_tables, apply_mapping, mine_identical_seeds, read_embeddings, AlignmentReport, Direction,
    EmbeddingTable,
};
use crate::eval::{aggregate, evaluate, EvalReport, MajorityTagger, Summary};
use crate::kv::KeyValues;
use crate::par::Execution;
use crate::tagger::{self, fit, save_model, TaggerConfig, TaggerModel, TrainHistory};
use crate::tnt::{Beam, TntModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    ZeroShot,
    InLanguagePlain,
    InLanguagePretrained,
    Joint,
    FineTune,
    TntBaseline,
    Majority,
}

impl Regime {
    pub const ALL: [Regime; 7] = [
        Regime::ZeroShot,
        Regime::InLanguagePlain,
        Regime::InLanguagePretrained,
        Regime::Joint,
        Regime::FineTune,
        Regime::TntBaseline,
        Regime::Majority,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::ZeroShot => "zero_shot",
            Regime::InLanguagePlain => "in_language_plain",
            Regime::InLanguagePretrained => "in_language_pretrained",
            Regime::Joint => "joint",
            Regime::FineTune => "fine_tune",
            Regime::TntBaseline => "tnt_baseline",
            Regime::Majority => "majority",
        }
    }

    fn uses_bilingual(self) -> bool {
        matches!(self, Regime::ZeroShot | Regime::Joint | Regime::FineTune)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceSize {
    None,
    Medium,
    Large,
}

impl SourceSize {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceSize::None => "none",
            SourceSize::Medium => "medium",
            SourceSize::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetSize {
    None,
    Tiny,
    Small,
}

impl TargetSize {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetSize::None => "none",
            TargetSize::Tiny => "tiny",
            TargetSize::Small => "small",
        }
    }
}

macro_rules! parse_by_name {
    ($ty:ty, [$($v:expr),*], $what:literal) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                [$($v),*]
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| Error::Config(format!(concat!("unknown ", $what, " `{}`"), s)))
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

parse_by_name!(
    Regime,
    [
        Regime::ZeroShot,
        Regime::InLanguagePlain,
        Regime::InLanguagePretrained,
        Regime::Joint,
        Regime::FineTune,
        Regime::TntBaseline,
        Regime::Majority
    ],
    "regime"
);
parse_by_name!(
    SourceSize,
    [SourceSize::None, SourceSize::Medium, SourceSize::Large],
    "source size"
);
parse_by_name!(
    TargetSize,
    [TargetSize::None, TargetSize::Tiny, TargetSize::Small],
    "target size"
);

/// One experiment cell, written `regime/source/target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub regime: Regime,
    pub source: SourceSize,
    pub target: TargetSize,
}

impl CellKey {
    pub fn new(regime: Regime, source: SourceSize, target: TargetSize) -> Self {
        CellKey {
            regime,
            source,
            target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let has_source = self.source != SourceSize::None;
        let has_target = self.target != TargetSize::None;
        let ok = match self.regime {
            Regime::ZeroShot => has_source && !has_target,
            Regime::Joint => has_source,
            Regime::FineTune => has_source && has_target,
            Regime::InLanguagePlain
            | Regime::InLanguagePretrained
            | Regime::TntBaseline
            | Regime::Majority => !has_source && has_target,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "cell `{self}` combines incompatible sizes"
            )))
        }
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.regime, self.source, self.target)
    }
}

impl FromStr for CellKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        match parts[..] {
            [r, src, tgt] => Ok(CellKey::new(r.parse()?, src.parse()?, tgt.parse()?)),
            _ => Err(Error::Config(format!(
                "cell `{s}` is not `regime/source/target`"
            ))),
        }
    }
}

impl Serialize for CellKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Where the corpora and embeddings live. Unset entries are only an error
/// when a configured cell needs them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataPaths {
    /// Full English training data (the large source).
    pub source_train: Option<PathBuf>,
    /// English development data (the medium source, and large-source dev).
    pub source_testa: Option<PathBuf>,
    pub target_train: Option<PathBuf>,
    pub target_dev: Option<PathBuf>,
    pub source_embeddings: Option<PathBuf>,
    pub target_embeddings: Option<PathBuf>,
}

/// File names looked up under the data directory when a path key is absent.
pub const DEFAULT_FILES: [(&str, &str); 6] = [
    ("source_train", "eng.train"),
    ("source_testa", "eng.testa"),
    ("target_train", "da.train"),
    ("target_dev", "da.dev"),
    ("source_embeddings", "en.vec"),
    ("target_embeddings", "da.vec"),
];

impl DataPaths {
    fn slot(&mut self, key: &str) -> &mut Option<PathBuf> {
        match key {
            "source_train" => &mut self.source_train,
            "source_testa" => &mut self.source_testa,
            "target_train" => &mut self.target_train,
            "target_dev" => &mut self.target_dev,
            "source_embeddings" => &mut self.source_embeddings,
            _ => &mut self.target_embeddings,
        }
    }

    fn get(&self, key: &str) -> Option<&PathBuf> {
        match key {
            "source_train" => self.source_train.as_ref(),
            "source_testa" => self.source_testa.as_ref(),
            "target_train" => self.target_train.as_ref(),
            "target_dev" => self.target_dev.as_ref(),
            "source_embeddings" => self.source_embeddings.as_ref(),
            _ => self.target_embeddings.as_ref(),
        }
    }

    /// Default file names under `dir`.
    pub fn under(dir: &Path) -> Self {
        let mut p = DataPaths::default();
        for (key, file) in DEFAULT_FILES {
            *p.slot(key) = Some(dir.join(file));
        }
        p
    }

    fn require(&self, key: &str) -> Result<&Path> {
        self.get(key)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::Config(format!("`{key}` is required by the configured cells")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub cells: Vec<CellKey>,
    pub seeds: Vec<u64>,
    pub paths: DataPaths,
    pub direction: Direction,
    pub beam: Beam,
    pub tagger: TaggerConfig,
    /// Epoch budget of the second fine-tuning stage; `None` reuses
    /// `tagger.max_epochs`.
    pub fine_tune_epochs: Option<usize>,
    pub tiny_tokens: usize,
    pub small_tokens: usize,
    /// Share of the medium source held out (from the end) for early stopping.
    pub medium_dev_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cells: Vec::new(),
            seeds: vec![1, 2, 3],
            paths: DataPaths::default(),
            direction: Direction::default(),
            beam: Beam::Exact,
            tagger: TaggerConfig::default(),
            fine_tune_epochs: None,
            tiny_tokens: 5000,
            small_tokens: 10000,
            medium_dev_fraction: 0.1,
        }
    }
}

const KEYS: [&str; 17] = [
    "cells",
    "regime",
    "source",
    "target",
    "seeds",
    "data_dir",
    "source_train",
    "source_testa",
    "target_train",
    "target_dev",
    "source_embeddings",
    "target_embeddings",
    "direction",
    "beam",
    "fine_tune_epochs",
    "tiny_tokens",
    "small_tokens",
];

fn list<T: FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

impl ExperimentConfig {
    /// Parses the flat key-value format. Relative paths, and the default
    /// file names for absent path keys, resolve against `data_dir` (the
    /// file's own `data_dir` key wins over the argument).
    pub fn parse(text: &str, data_dir: Option<&Path>) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let unknown = kv
            .keys()
            .find(|k| !k.starts_with("tagger.") && !KEYS.contains(k));
        if let Some(k) = unknown {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let cells = match kv.get("cells") {
            Some(v) => list(v)?,
            None => match (kv.get("regime"), kv.get("source"), kv.get("target")) {
                (Some(r), s, t) => vec![CellKey::new(
                    r.parse()?,
                    s.unwrap_or("none").parse()?,
                    t.unwrap_or("none").parse()?,
                )],
                (None, None, None) => Vec::new(),
                _ => {
                    return Err(Error::Config(
                        "`source`/`target` given without `regime`".into(),
                    ))
                }
            },
        };
        let mut c = ExperimentConfig {
            cells,
            ..ExperimentConfig::default()
        };
        if let Some(v) = kv.get("seeds") {
            c.seeds = v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::Config(format!("bad seed `{s}`")))
                })
                .collect::<Result<_>>()?;
        }
        let dir = kv
            .get("data_dir")
            .map(PathBuf::from)
            .or_else(|| data_dir.map(Path::to_path_buf));
        c.paths = match &dir {
            Some(d) => DataPaths::under(d),
            None => DataPaths::default(),
        };
        for (key, _) in DEFAULT_FILES {
            if let Some(v) = kv.get(key) {
                let p = PathBuf::from(v);
                *c.paths.slot(key) = Some(match &dir {
                    Some(d) if p.is_relative() => d.join(p),
                    _ => p,
                });
            }
        }
        if let Some(d) = kv.parsed("direction")? {
            c.direction = d;
        }
        if let Some(b) = kv.parsed("beam")? {
            c.beam = b;
        }
        c.fine_tune_epochs = kv.parsed("fine_tune_epochs")?;
        if let Some(n) = kv.parsed("tiny_tokens")? {
            c.tiny_tokens = n;
        }
        if let Some(n) = kv.parsed("small_tokens")? {
            c.small_tokens = n;
        }
        c.tagger = TaggerConfig::from_kv(&kv)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = HashSet::new();
        for cell in &self.cells {
            cell.validate()?;
            if !seen.insert(cell) {
                return Err(Error::Config(format!("duplicate cell `{cell}`")));
            }
        }
        self.tagger.validate()
    }

    /// The effective configuration in the same key-value format.
    pub fn render(&self) -> String {
        let mut kv = KeyValues::default();
        let cells: Vec<String> = self.cells.iter().map(CellKey::to_string).collect();
        kv.set("cells", cells.join(", "));
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        kv.set("seeds", seeds.join(", "));
        for (key, _) in DEFAULT_FILES {
            if let Some(p) = self.paths.get(key) {
                kv.set(key, p.display().to_string());
            }
        }
        kv.set(
            "direction",
            match self.direction {
                Direction::TargetToSource => "target-to-source",
                Direction::SourceToTarget => "source-to-target",
            },
        );
        kv.set(
            "beam",
            match self.beam {
                Beam::Exact => "exact".to_string(),
                Beam::Width(k) => k.to_string(),
            },
        );
        if let Some(n) = self.fine_tune_epochs {
            kv.set("fine_tune_epochs", n.to_string());
        }
        kv.set("tiny_tokens", self.tiny_tokens.to_string());
        kv.set("small_tokens", self.small_tokens.to_string());
        self.tagger.write_kv(&mut kv);
        kv.render()
    }

    fn needs(&self, pred: impl Fn(&CellKey) -> bool) -> bool {
        self.cells.iter().any(pred)
    }
}

/// Source-language training data and its early-stopping dev set.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSplit {
    pub train: Corpus,
    pub dev: Corpus,
}

fn load_bio2(path: &Path, language: &str) -> Result<Corpus> {
    Ok(read_conll(path, &ColumnLayout::default())?
        .to_bio2()
        .with_language(language))
}

/// Large trains on the full English training file and stops early on the
/// English dev file. Medium trains on the English dev file minus its last
/// `medium_dev_fraction` of sentences, which become its dev set. Tags are
/// converted to BIO2.
pub fn prepare_sources(config: &ExperimentConfig, size: SourceSize) -> Result<Option<SourceSplit>> {
    match size {
        SourceSize::None => Ok(None),
        SourceSize::Medium => {
            let testa = load_bio2(config.paths.require("source_testa")?, "src")?;
            let (train, dev) = testa.split_tail(config.medium_dev_fraction);
            Ok(Some(SourceSplit { train, dev }))
        }
        SourceSize::Large => Ok(Some(SourceSplit {
            train: load_bio2(config.paths.require("source_train")?, "src")?,
            dev: load_bio2(config.paths.require("source_testa")?, "src")?,
        })),
    }
}

/// Everything a grid reads, loaded once.
#[derive(Debug, Clone, Default)]
pub struct ExperimentData {
    pub medium: Option<SourceSplit>,
    pub large: Option<SourceSplit>,
    /// Full target training data; the target sizes take prefixes of it.
    pub target_train: Option<Corpus>,
    pub target_dev: Option<Corpus>,
    pub source_embeddings: Option<EmbeddingTable>,
    pub target_embeddings: Option<EmbeddingTable>,
    /// Source and aligned target vectors in one space.
    pub bilingual: Option<EmbeddingTable>,
}

/// Aligns the two tables with identical-string seeds and returns the union
/// in the shared space; on a word present in both, the source vector wins.
pub fn bilingual_table(
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    direction: Direction,
    exec: Execution,
) -> Result<(EmbeddingTable, AlignmentReport)> {
    let seeds = mine_identical_seeds(source, target)?;
    let map = align_tables(source, target, &seeds, direction)?;
    let report = AlignmentReport::build(source, target, &seeds, direction, &map, exec)?;
    let table = match direction {
        Direction::TargetToSource => source.merged_with(&apply_mapping(target, &map)?),
        Direction::SourceToTarget => apply_mapping(source, &map)?.merged_with(target),
    };
    Ok((table, report))
}

impl ExperimentData {
    /// Computes `bilingual` from the two monolingual tables.
    pub fn align(&mut self, direction: Direction, exec: Execution) -> Result<AlignmentReport> {
        let (src, tgt) = match (&self.source_embeddings, &self.target_embeddings) {
            (Some(s), Some(t)) => (s, t),
            _ => {
                return Err(Error::Config(
                    "alignment needs source and target embeddings".into(),
                ))
            }
        };
        let (table, report) = bilingual_table(src, tgt, direction, exec)?;
        info!(
            "aligned {} seeds, seed loss {:.3} -> {:.3}",
            report.seeds, report.seed_loss_before, report.seed_loss_after
        );
        self.bilingual = Some(table);
        Ok(report)
    }

    fn source(&self, size: SourceSize) -> Result<&SourceSplit> {
        match size {
            SourceSize::Medium => self.medium.as_ref(),
            SourceSize::Large => self.large.as_ref(),
            SourceSize::None => None,
        }
        .ok_or_else(|| Error::Config(format!("source data for `{size}` is not loaded")))
    }

    fn target_dev(&self) -> Result<&Corpus> {
        self.target_dev
            .as_ref()
            .ok_or_else(|| Error::Config("target dev data is not loaded".into()))
    }

    fn target_train(&self, size: TargetSize, config: &ExperimentConfig) -> Result<Corpus> {
        let full = self
            .target_train
            .as_ref()
            .ok_or_else(|| Error::Config("target training data is not loaded".into()))?;
        Ok(match size {
            TargetSize::None => Corpus::new(Vec::new()),
            TargetSize::Tiny => full.take_first_tokens(config.tiny_tokens),
            TargetSize::Small => full.take_first_tokens(config.small_tokens),
        })
    }

    fn bilingual(&self) -> Result<&EmbeddingTable> {
        self.bilingual
            .as_ref()
            .ok_or_else(|| Error::Config("bilingual embeddings are not prepared".into()))
    }
}

/// Loads what the configured cells need and aligns the embeddings when a
/// cross-lingual regime is present.
pub fn load_data(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentData> {
    config.validate()?;
    let mut data = ExperimentData::default();
    if config.needs(|c| c.source == SourceSize::Medium) {
        data.medium = prepare_sources(config, SourceSize::Medium)?;
    }
    if config.needs(|c| c.source == SourceSize::Large) {
        data.large = prepare_sources(config, SourceSize::Large)?;
    }
    if config.needs(|c| c.target != TargetSize::None || c.regime == Regime::FineTune) {
        data.target_train = Some(load_bio2(config.paths.require("target_train")?, "tgt")?);
    }
    if !config.cells.is_empty() {
        data.target_dev = Some(load_bio2(config.paths.require("target_dev")?, "tgt")?);
    }
    let bilingual = config.needs(|c| c.regime.uses_bilingual());
    if bilingual {
        let p = config.paths.require("source_embeddings")?;
        data.source_embeddings = Some(read_embeddings(p, None)?);
    }
    if bilingual || config.needs(|c| c.regime == Regime::InLanguagePretrained) {
        let p = config.paths.require("target_embeddings")?;
        data.target_embeddings = Some(read_embeddings(p, None)?);
    }
    if bilingual {
        data.align(config.direction, exec)?;
    }
    Ok(data)
}

/// The trained system of one seed run.
#[derive(Debug, Clone)]
pub enum Artifact {
    Neural(Box<TaggerModel>),
    Tnt(Box<TntModel>),
    Majority(MajorityTagger),
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub report: EvalReport,
    /// One history per training stage (two for fine-tuning, none for the
    /// count-based baselines).
    pub histories: Vec<TrainHistory>,
    pub artifact: Artifact,
}

fn zero_shot(
    tc: &TaggerConfig,
    source: &SourceSplit,
    data: &ExperimentData,
    exec: Execution,
) -> Result<(TaggerModel, TrainHistory)> {
    let dev = data.target_dev()?;
    tagger::train(
        tc,
        &source.train,
        &source.dev,
        Some(data.bilingual()?),
        &[dev],
        exec,
    )
}

/// Trains and evaluates one cell for one seed.
pub fn run_seed(
    key: CellKey,
    seed: u64,
    config: &ExperimentConfig,
    data: &ExperimentData,
    exec: Execution,
) -> Result<SeedRun> {
    key.validate()?;
    let tc = TaggerConfig {
        seed,
        ..config.tagger.clone()
    };
    let dev = data.target_dev()?;
    let mut histories = Vec::new();
    let artifact = match key.regime {
        Regime::ZeroShot => {
            let (m, h) = zero_shot(&tc, data.source(key.source)?, data, exec)?;
            histories.push(h);
            Artifact::Neural(Box::new(m))
        }
        Regime::Joint if key.target == TargetSize::None => {
            let (m, h) = zero_shot(&tc, data.source(key.source)?, data, exec)?;
            histories.push(h);
            Artifact::Neural(Box::new(m))
        }
        Regime::Joint => {
            let train = data
                .source(key.source)?
                .train
                .concat(&data.target_train(key.target, config)?);
            let (m, h) = tagger::train(&tc, &train, dev, Some(data.bilingual()?), &[], exec)?;
            histories.push(h);
            Artifact::Neural(Box::new(m))
        }
        Regime::FineTune => {
            let (mut m, h) = zero_shot(&tc, data.source(key.source)?, data, exec)?;
            histories.push(h);
            let epochs = config.fine_tune_epochs.unwrap_or(tc.max_epochs);
            if epochs > 0 {
                let target = data.target_train(key.target, config)?;
                m.extend_vocab(&[&target], Some(data.bilingual()?), &[dev])?;
                m.config.max_epochs = epochs;
                histories.push(fit(&mut m, &target, dev, exec)?);
            }
            Artifact::Neural(Box::new(m))
        }
        Regime::InLanguagePlain | Regime::InLanguagePretrained => {
            let pretrained = match key.regime {
                Regime::InLanguagePretrained => Some(
                    data.target_embeddings
                        .as_ref()
                        .ok_or_else(|| Error::Config("target embeddings are not loaded".into()))?,
                ),
                _ => None,
            };
            let train = data.target_train(key.target, config)?;
            let (m, h) = tagger::train(&tc, &train, dev, pretrained, &[], exec)?;
            histories.push(h);
            Artifact::Neural(Box::new(m))
        }
        Regime::TntBaseline => Artifact::Tnt(Box::new(TntModel::estimate(
            &data.target_train(key.target, config)?,
        )?)),
        Regime::Majority => Artifact::Majority(MajorityTagger::fit(
            &data.target_train(key.target, config)?,
        )?),
    };
    let predicted = match &artifact {
        Artifact::Neural(m) => m.tag(dev, exec),
        Artifact::Tnt(m) => m.tag(dev, config.beam, exec),
        Artifact::Majority(m) => m.tag(dev),
    };
    let report = evaluate(dev, &predicted)?;
    info!("{key} seed {seed}: F1 {:.2}", report.overall.f1);
    Ok(SeedRun {
        seed,
        report,
        histories,
        artifact,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub report: EvalReport,
    pub histories: Vec<TrainHistory>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub cell: CellKey,
    pub summary: Summary,
    pub runs: Vec<SeedResult>,
}

/// Every configured cell, in configuration order.
#[derive(Debug, Clone, Serialize)]
pub struct ResultMatrix {
    pub cells: Vec<CellResult>,
}

fn summarize(key: CellKey, runs: Vec<SeedRun>) -> Result<(CellResult, Vec<SeedRun>)> {
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let result = CellResult {
        cell: key,
        summary: aggregate(&reports)?,
        runs: runs
            .iter()
            .map(|r| SeedResult {
                seed: r.seed,
                report: r.report.clone(),
                histories: r.histories.clone(),
            })
            .collect(),
    };
    Ok((result, runs))
}

/// Runs one cell over all configured seeds; any failing seed fails the cell.
pub fn run_regime(
    key: CellKey,
    config: &ExperimentConfig,
    data: &ExperimentData,
    exec: Execution,
) -> Result<CellResult> {
    let runs = exec
        .map(&config.seeds, |&seed| {
            run_seed(key, seed, config, data, exec)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(key, runs)?.0)
}

/// Runs every `(cell, seed)` job under `exec`. When `out` is given, writes
/// `<regime>/<src>/<tgt>/<seed>/{model, report.json, log}` below it, plus
/// `matrix.json` and `matrix.txt`.
pub fn run_grid(
    config: &ExperimentConfig,
    data: &ExperimentData,
    out: Option<&Path>,
    exec: Execution,
) -> Result<ResultMatrix> {
    config.validate()?;
    let jobs: Vec<(CellKey, u64)> = config
        .cells
        .iter()
        .flat_map(|&c| config.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let mut outcomes = exec
        .map(&jobs, |&(cell, seed)| {
            run_seed(cell, seed, config, data, exec)
        })
        .into_iter();
    let mut cells = Vec::new();
    for &cell in &config.cells {
        let runs = outcomes
            .by_ref()
            .take(config.seeds.len())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Invalid(format!("cell `{cell}`: {e}")))?;
        let (result, runs) = summarize(cell, runs)?;
        if let Some(dir) = out {
            for run in &runs {
                write_seed(dir, cell, run)?;
            }
        }
        cells.push(result);
    }
    let matrix = ResultMatrix { cells };
    if let Some(dir) = out {
        write_file(
            &dir.join("matrix.json"),
            &serde_json::to_string_pretty(&matrix)?,
        )?;
        write_file(&dir.join("matrix.txt"), &matrix.to_string())?;
    }
    Ok(matrix)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn seed_dir(root: &Path, cell: CellKey, seed: u64) -> PathBuf {
    root.join(cell.regime.as_str())
        .join(cell.source.as_str())
        .join(cell.target.as_str())
        .join(seed.to_string())
}

fn write_seed(root: &Path, cell: CellKey, run: &SeedRun) -> Result<()> {
    let dir = seed_dir(root, cell, run.seed);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let model = dir.join("model");
    match &run.artifact {
        Artifact::Neural(m) => save_model(m, &model)?,
        Artifact::Tnt(m) => m.save(&model)?,
        Artifact::Majority(m) => write_file(&model, &serde_json::to_string(m)?)?,
    }
    let result = SeedResult {
        seed: run.seed,
        report: run.report.clone(),
        histories: run.histories.clone(),
    };
    write_file(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(&result)?,
    )?;
    let mut log = format!("cell {cell}\nseed {}\n", run.seed);
    for (stage, h) in run.histories.iter().enumerate() {
        for (e, (loss, f1)) in h.train_loss.iter().zip(&h.dev_f1).enumerate() {
            log += &format!(
                "stage {} epoch {} loss {loss:.6} dev_f1 {f1:.2}\n",
                stage + 1,
                e + 1
            );
        }
        log += &format!(
            "stage {} best_epoch {} stopped_early {}\n",
            stage + 1,
            h.best_epoch,
            h.stopped_early
        );
    }
    log += &run.report.to_string();
    write_file(&dir.join("log"), &log)
}

/// Column headings of the main table and the cell feeding each, per row.
const COLUMNS: [&str; 6] = [
    "TnT",
    "plain",
    "+Poly",
    "+Medium src",
    "+Large src",
    "FineTune",
];

fn table_cell(row: TargetSize, column: usize) -> Option<CellKey> {
    use Regime::*;
    use SourceSize as S;
    let key = |r, s| Some(CellKey::new(r, s, row));
    match (row, column) {
        (TargetSize::None, 3) => key(ZeroShot, S::Medium),
        (TargetSize::None, 4) => key(ZeroShot, S::Large),
        (TargetSize::None, _) => None,
        (_, 0) => key(TntBaseline, S::None),
        (_, 1) => key(InLanguagePlain, S::None),
        (_, 2) => key(InLanguagePretrained, S::None),
        (_, 3) => key(Joint, S::Medium),
        (_, 4) => key(Joint, S::Large),
        (_, 5) => key(FineTune, S::Medium),
        _ => None,
    }
}

impl ResultMatrix {
    pub fn get(&self, key: CellKey) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.cell == key)
    }
}

impl fmt::Display for ResultMatrix {
    /// Mean F1 per cell in the regime × target-size layout, `---` for cells
    /// that were not run, then every cell with mean ± std.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10}", "")?;
        for c in COLUMNS {
            write!(f, " {c:>12}")?;
        }
        writeln!(f)?;
        let mut shown = HashSet::new();
        for (row, label) in [
            (TargetSize::None, "zero-shot"),
            (TargetSize::Tiny, "Tiny"),
            (TargetSize::Small, "Small"),
        ] {
            write!(f, "{label:<10}")?;
            for col in 0..COLUMNS.len() {
                match table_cell(row, col).and_then(|k| self.get(k)) {
                    Some(c) => {
                        shown.insert(c.cell);
                        write!(f, " {:>12.2}", c.summary.f1.mean)?;
                    }
                    None => write!(f, " {:>12}", "---")?,
                }
            }
            writeln!(f)?;
        }
        let others: Vec<&CellResult> = self
            .cells
            .iter()
            .filter(|c| !shown.contains(&c.cell))
            .collect();
        if !others.is_empty() {
            writeln!(f, "\nother cells (F1)")?;
            for c in others {
                writeln!(f, "{:<36} {:>6.2}", c.cell.to_string(), c.summary.f1.mean)?;
            }
        }
        writeln!(f, "\nall cells (mean ± std over seeds)")?;
        let mut by_key: BTreeMap<String, &CellResult> = BTreeMap::new();
        for c in &self.cells {
            by_key.insert(c.cell.to_string(), c);
        }
        for (name, c) in by_key {
            let s = &c.summary;
            writeln!(
                f,
                "{name:<36} runs {}  P {:6.2} ± {:5.2}  R {:6.2} ± {:5.2}  F1 {:6.2} ± {:5.2}",
                s.runs,
                s.precision.mean,
                s.precision.std,
                s.recall.mean,
                s.recall.std,
                s.f1.mean,
                s.f1.std
            )?;
        }
        Ok(())
    }
}
