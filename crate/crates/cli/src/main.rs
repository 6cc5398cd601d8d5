//! `xlner`: one entry point for every pipeline stage.
//!
//! Data goes to stdout (or `--out`), logs and the effective-config header go
//! to stderr. Exit codes: 0 on success, 1 on an operation error (one
//! `error: ...` line on stderr), 2 on a usage error.

use std::env;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use xlner::corpus::{
    cohen_kappa, corpus_entity_kappa, corpus_stats, read_conll, write_conll, ColumnLayout, Corpus,
};
use xlner::embeddings::{
    align_tables, apply_mapping, mine_identical_seeds, read_embeddings, save_embeddings,
    AlignmentReport, Direction,
};
use xlner::eval::{evaluate, MajorityTagger};
use xlner::kv::KeyValues;
use xlner::par::{with_jobs, Execution};
use xlner::tagger::{self, load_model, save_model, TaggerConfig, MODEL_MAGIC};
use xlner::tnt::{Beam, TntModel, TNT_MAGIC};
use xlner::transfer::{load_data, run_grid, ExperimentConfig};

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser, Debug)]
#[command(
    name = "xlner",
    version,
    about = "Cross-lingual named entity recognition toolkit"
)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory (meaning depends on the command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// CoNLL column count; inferred from the first token line when absent.
    #[arg(long, global = true)]
    columns: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corpus statistics (sentences, tokens, types, TTR, entities).
    Stats { files: Vec<PathBuf> },
    /// Report BIO2 violations; exits 1 when any are found.
    Validate { files: Vec<PathBuf> },
    /// Rewrite an IOB1-tagged corpus as BIO2.
    Convert { input: PathBuf },
    /// Cohen's kappa between two annotations of the same tokens.
    Kappa { a: PathBuf, b: PathBuf },
    /// Rotate one embedding space onto the other using identical-string seeds.
    Align(AlignArgs),
    /// Train a BiLSTM-CRF tagger; `--out` receives the model.
    Train(TrainArgs),
    /// Tag a corpus with a saved model (neural, TnT or majority).
    Tag(TagArgs),
    /// Span-level precision, recall and F1.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Estimate a TnT or majority baseline.
    Baseline(BaselineArgs),
    /// Run a grid of transfer cells; `--out` is the results directory.
    Experiment,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value = "target-to-source")]
    direction: Direction,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Pretrained word vectors used to initialize the embedding layer.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    input: PathBuf,
    /// TnT beam: `exact` or a width.
    #[arg(long, default_value = "exact")]
    beam: Beam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BaselineKind {
    Tnt,
    Majority,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    kind: BaselineKind,
    #[arg(long)]
    train: PathBuf,
    /// Corpus to tag with the fresh model; written as CoNLL to stdout.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "exact")]
    beam: Beam,
}

/// `# key = value` lines on stderr describing the resolved invocation.
#[derive(Default)]
struct Header(KeyValues);

impl Header {
    fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.set(key, value.to_string());
        self
    }

    fn path(&mut self, key: &str, path: &Path) -> &mut Self {
        self.set(key, path.display())
    }

    fn print(&self, command: &str) {
        let mut text = format!("# xlner {} {command}\n", env!("CARGO_PKG_VERSION"));
        for line in self.0.render().lines() {
            let _ = writeln!(text, "# {line}");
        }
        eprint!("{text}");
    }
}

struct Context {
    format: Format,
    out: Option<PathBuf>,
    layout: ColumnLayout,
    exec: Execution,
    data_dir: Option<PathBuf>,
}

impl Context {
    /// A relative path that does not exist here is looked up under
    /// `XLNER_DATA_DIR`.
    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_relative() && !path.exists() {
            if let Some(dir) = &self.data_dir {
                let candidate = dir.join(path);
                if candidate.exists() {
                    return candidate;
                }
            }
        }
        path.to_path_buf()
    }

    fn corpus(&self, path: &Path) -> CliResult<Corpus> {
        Ok(read_conll(self.resolve(path), &self.layout)?)
    }

    fn emit(&self, text: &str) -> CliResult {
        match &self.out {
            Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?,
            None => io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    fn json(value: &impl serde::Serialize) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(value)? + "\n")
    }

    fn require_out(&self, what: &str) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| format!("--out is required to save the {what}").into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let jobs = cli.jobs;
    let result = match jobs {
        Some(n) => with_jobs(n, || run(cli).map_err(|e| e.to_string())),
        None => run(cli).map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {}", message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let ctx = Context {
        format: cli.format,
        out: cli.out.clone(),
        layout: ColumnLayout {
            columns: cli.columns,
        },
        exec: if cli.jobs == Some(1) {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        data_dir: env::var_os("XLNER_DATA_DIR").map(PathBuf::from),
    };
    let mut header = Header::default();
    header.set("format", format!("{:?}", cli.format).to_lowercase());
    if let Some(dir) = &ctx.data_dir {
        header.path("data_dir", dir);
    }
    if let Some(n) = cli.jobs {
        header.set("jobs", n);
    }
    if let Some(n) = cli.columns {
        header.set("columns", n);
    }
    if let Some(out) = &cli.out {
        header.path("out", out);
    }
    match &cli.command {
        Command::Stats { files } => stats(&ctx, &mut header, files),
        Command::Validate { files } => validate(&ctx, &mut header, files),
        Command::Convert { input } => {
            header.path("input", &ctx.resolve(input)).print("convert");
            let corpus = ctx.corpus(input)?;
            ctx.emit(&write_conll(&corpus.to_bio2()))
        }
        Command::Kappa { a, b } => kappa(&ctx, &mut header, a, b),
        Command::Align(args) => align(&ctx, &mut header, args),
        Command::Train(args) => train(&ctx, &mut header, &cli, args),
        Command::Tag(args) => tag(&ctx, &mut header, args),
        Command::Eval { gold, pred } => {
            header
                .path("gold", &ctx.resolve(gold))
                .path("pred", &ctx.resolve(pred))
                .print("eval");
            let report = evaluate(&ctx.corpus(gold)?, &ctx.corpus(pred)?)?;
            match ctx.format {
                Format::Text => ctx.emit(&report.to_string()),
                Format::Json => ctx.emit(&Context::json(&report)?),
            }
        }
        Command::Baseline(args) => baseline(&ctx, &mut header, args),
        Command::Experiment => experiment(&ctx, &mut header, &cli),
    }
}

fn require_files(files: &[PathBuf]) -> CliResult {
    if files.is_empty() {
        return Err("at least one input file is required".into());
    }
    Ok(())
}

fn stats(ctx: &Context, header: &mut Header, files: &[PathBuf]) -> CliResult {
    require_files(files)?;
    let paths: Vec<PathBuf> = files.iter().map(|f| ctx.resolve(f)).collect();
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    header.set("files", names.join(", ")).print("stats");
    let mut text = String::new();
    let mut reports = Vec::new();
    for (path, name) in paths.iter().zip(&names) {
        let report = corpus_stats(&read_conll(path, &ctx.layout)?);
        if files.len() > 1 {
            let _ = writeln!(text, "== {name}");
        }
        text += &report.to_string();
        reports.push(json!({ "file": name, "stats": report }));
    }
    match ctx.format {
        Format::Text => ctx.emit(&text),
        Format::Json if files.len() == 1 => ctx.emit(&Context::json(&reports[0]["stats"])?),
        Format::Json => ctx.emit(&Context::json(&reports)?),
    }
}

fn validate(ctx: &Context, header: &mut Header, files: &[PathBuf]) -> CliResult {
    require_files(files)?;
    let paths: Vec<PathBuf> = files.iter().map(|f| ctx.resolve(f)).collect();
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    header.set("files", names.join(", ")).print("validate");
    let mut text = String::new();
    let mut reports = Vec::new();
    let mut total = 0;
    for (path, name) in paths.iter().zip(&names) {
        let corpus = read_conll(path, &ctx.layout)?;
        let violations = corpus.violations();
        total += violations.len();
        for (sentence, v) in &violations {
            let tag = corpus.sentences[*sentence].tokens[v.position].tag;
            let kind = serde_json::to_value(v.kind)?;
            let _ = writeln!(
                text,
                "{name}: sentence {} token {}: {} ({tag})",
                sentence + 1,
                v.position + 1,
                kind.as_str().unwrap_or_default()
            );
        }
        let _ = writeln!(
            text,
            "{name}: {} sentences, {} violations",
            corpus.len(),
            violations.len()
        );
        let list: Vec<_> = violations
            .iter()
            .map(|(s, v)| json!({ "sentence": s, "position": v.position, "kind": v.kind }))
            .collect();
        reports.push(json!({ "file": name, "sentences": corpus.len(), "violations": list }));
    }
    match ctx.format {
        Format::Text => ctx.emit(&text)?,
        Format::Json => ctx.emit(&Context::json(&reports)?)?,
    }
    if total > 0 {
        return Err(format!("{total} BIO violation(s)").into());
    }
    Ok(())
}

fn kappa(ctx: &Context, header: &mut Header, a: &Path, b: &Path) -> CliResult {
    header
        .path("a", &ctx.resolve(a))
        .path("b", &ctx.resolve(b))
        .print("kappa");
    let (ca, cb) = (ctx.corpus(a)?, ctx.corpus(b)?);
    let entity = corpus_entity_kappa(&ca, &cb)?;
    let ta: Vec<_> = ca.sentences.iter().flat_map(|s| s.tags()).collect();
    let tb: Vec<_> = cb.sentences.iter().flat_map(|s| s.tags()).collect();
    let tokens = cohen_kappa(&ta, &tb)?;
    match ctx.format {
        Format::Text => {
            let mut text = String::new();
            for (name, k) in [("entity tokens", entity), ("all tokens", tokens)] {
                let _ = writeln!(
                    text,
                    "{name:<14} kappa {:.4}  p_o {:.4}  p_e {:.4}  items {}{}",
                    k.kappa,
                    k.observed,
                    k.expected,
                    k.items,
                    if k.degenerate { "  (degenerate)" } else { "" }
                );
            }
            ctx.emit(&text)
        }
        Format::Json => ctx.emit(&Context::json(
            &json!({ "entity_tokens": entity, "all_tokens": tokens }),
        )?),
    }
}

fn align(ctx: &Context, header: &mut Header, args: &AlignArgs) -> CliResult {
    let (src_path, tgt_path) = (ctx.resolve(&args.source), ctx.resolve(&args.target));
    header
        .path("source", &src_path)
        .path("target", &tgt_path)
        .set("direction", format!("{:?}", args.direction))
        .print("align");
    let src = read_embeddings(&src_path, None)?;
    let tgt = read_embeddings(&tgt_path, Some(src.dim()))?;
    let seeds = mine_identical_seeds(&src, &tgt)?;
    info!("{} identical seed words", seeds.len());
    let map = align_tables(&src, &tgt, &seeds, args.direction)?;
    let report = AlignmentReport::build(&src, &tgt, &seeds, args.direction, &map, ctx.exec)?;
    if let Some(out) = &ctx.out {
        let moved = match args.direction {
            Direction::TargetToSource => &tgt,
            Direction::SourceToTarget => &src,
        };
        let file = File::create(out).map_err(|e| format!("{}: {e}", out.display()))?;
        save_embeddings(&apply_mapping(moved, &map)?, BufWriter::new(file))?;
        info!("mapped table written to {}", out.display());
    }
    let text = match ctx.format {
        Format::Text => format!(
            "seeds {}\ndim {}\northogonality error {:.3e}\nseed loss before {:.6}\nseed loss after {:.6}\nseed precision@1 {:.4}\n",
            report.seeds,
            report.dim,
            report.orthogonality_error,
            report.seed_loss_before,
            report.seed_loss_after,
            report.seed_precision_at_1
        ),
        Format::Json => Context::json(&report)?,
    };
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn read_kv(path: &Path) -> CliResult<KeyValues> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(KeyValues::parse(&text)?)
}

fn train(ctx: &Context, header: &mut Header, cli: &Cli, args: &TrainArgs) -> CliResult {
    let mut config = match &cli.config {
        Some(path) => {
            let kv = read_kv(path)?;
            if let Some(k) = kv.keys().find(|k| !k.starts_with("tagger.")) {
                return Err(format!("unknown key `{k}` (train only reads `tagger.*` keys)").into());
            }
            TaggerConfig::from_kv(&kv)?
        }
        None => TaggerConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    let out = ctx.require_out("model")?;
    let embeddings = args.embeddings.as_ref().map(|p| ctx.resolve(p));
    header
        .path("train", &ctx.resolve(&args.train))
        .path("dev", &ctx.resolve(&args.dev));
    if let Some(p) = &embeddings {
        header.path("embeddings", p);
    }
    config.write_kv(&mut header.0);
    header.print("train");
    let train = ctx.corpus(&args.train)?;
    let dev = ctx.corpus(&args.dev)?;
    let pretrained = embeddings
        .map(|p| read_embeddings(p, Some(config.word_emb_dim)))
        .transpose()?;
    let (model, history) =
        tagger::train(&config, &train, &dev, pretrained.as_ref(), &[], ctx.exec)?;
    save_model(&model, out)?;
    info!("model written to {}", out.display());
    let text = match ctx.format {
        Format::Text => {
            let mut t = String::new();
            for (e, (loss, f1)) in history.train_loss.iter().zip(&history.dev_f1).enumerate() {
                let _ = writeln!(t, "epoch {:>3}  loss {loss:.6}  dev F1 {f1:6.2}", e + 1);
            }
            let _ = writeln!(
                t,
                "best epoch {}  dev F1 {}{}",
                history.best_epoch,
                history
                    .best_f1()
                    .map_or("---".into(), |f| format!("{f:.2}")),
                if history.stopped_early {
                    "  (stopped early)"
                } else {
                    ""
                }
            );
            t
        }
        Format::Json => Context::json(&history)?,
    };
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

enum Loaded {
    Neural(Box<tagger::TaggerModel>),
    Tnt(Box<TntModel>),
    Majority(MajorityTagger),
}

fn load_any(path: &Path) -> CliResult<Loaded> {
    let mut magic = [0u8; 8];
    let n = File::open(path)
        .and_then(|mut f| f.read(&mut magic))
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let head = &magic[..n];
    if head == MODEL_MAGIC {
        Ok(Loaded::Neural(Box::new(load_model(path)?)))
    } else if head == TNT_MAGIC {
        Ok(Loaded::Tnt(Box::new(TntModel::load(path)?)))
    } else if head.first() == Some(&b'{') {
        let text = fs::read_to_string(path)?;
        Ok(Loaded::Majority(serde_json::from_str(&text)?))
    } else {
        Err(format!("{}: not a model file", path.display()).into())
    }
}

fn tag(ctx: &Context, header: &mut Header, args: &TagArgs) -> CliResult {
    let model_path = ctx.resolve(&args.model);
    header
        .path("model", &model_path)
        .path("input", &ctx.resolve(&args.input))
        .set("beam", beam_name(args.beam))
        .print("tag");
    let input = ctx.corpus(&args.input)?;
    let tagged = match load_any(&model_path)? {
        Loaded::Neural(m) => m.tag(&input, ctx.exec),
        Loaded::Tnt(m) => m.tag(&input, args.beam, ctx.exec),
        Loaded::Majority(m) => m.tag(&input),
    };
    ctx.emit(&write_conll(&tagged))
}

fn beam_name(beam: Beam) -> String {
    match beam {
        Beam::Exact => "exact".into(),
        Beam::Width(k) => k.to_string(),
    }
}

fn baseline(ctx: &Context, header: &mut Header, args: &BaselineArgs) -> CliResult {
    header
        .set("kind", format!("{:?}", args.kind).to_lowercase())
        .path("train", &ctx.resolve(&args.train));
    if let Some(p) = &args.input {
        header.path("input", &ctx.resolve(p));
    }
    header.set("beam", beam_name(args.beam)).print("baseline");
    let train = ctx.corpus(&args.train)?;
    let input = args.input.as_ref().map(|p| ctx.corpus(p)).transpose()?;
    let (summary, tagged) = match args.kind {
        BaselineKind::Tnt => {
            let model = TntModel::estimate(&train)?;
            if let Some(out) = &ctx.out {
                model.save(out)?;
            }
            let summary = json!({
                "kind": "tnt",
                "tags": model.tags().iter().map(|t| t.to_string()).collect::<Vec<_>>(),
                "lambdas": model.lambdas(),
                "theta": model.theta(),
            });
            (summary, input.map(|c| model.tag(&c, args.beam, ctx.exec)))
        }
        BaselineKind::Majority => {
            let model = MajorityTagger::fit(&train)?;
            if let Some(out) = &ctx.out {
                fs::write(out, serde_json::to_string(&model)?)
                    .map_err(|e| format!("{}: {e}", out.display()))?;
            }
            (json!({ "kind": "majority" }), input.map(|c| model.tag(&c)))
        }
    };
    if let Some(out) = &ctx.out {
        info!("model written to {}", out.display());
    }
    let text = match (tagged, ctx.format) {
        (Some(c), _) => write_conll(&c),
        (None, Format::Json) => Context::json(&summary)?,
        (None, Format::Text) => {
            let mut t = format!("kind {}\n", summary["kind"].as_str().unwrap_or_default());
            if let Some(l) = summary["lambdas"].as_array() {
                let l: Vec<String> = l
                    .iter()
                    .map(|x| format!("{:.4}", x.as_f64().unwrap_or(f64::NAN)))
                    .collect();
                let _ = writeln!(t, "lambdas {}", l.join(" "));
                let _ = writeln!(
                    t,
                    "theta {:.4}",
                    summary["theta"].as_f64().unwrap_or(f64::NAN)
                );
            }
            t
        }
    };
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn experiment(ctx: &Context, header: &mut Header, cli: &Cli) -> CliResult {
    let path = cli.config.as_ref().ok_or("--config is required")?;
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut config = ExperimentConfig::parse(&text, ctx.data_dir.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if config.cells.is_empty() {
        return Err(format!("{}: no cells configured", path.display()).into());
    }
    let out = ctx.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    header.path("out", &out);
    for line in config.render().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            header.set(k, v);
        }
    }
    header.print("experiment");
    let data = load_data(&config, ctx.exec)?;
    let matrix = run_grid(&config, &data, Some(&out), ctx.exec)?;
    info!("results written to {}", out.display());
    let text = match ctx.format {
        Format::Text => matrix.to_string(),
        Format::Json => Context::json(&matrix)?,
    };
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}
