//! Command-line entry point.
//!
//! Exit codes: 0 ok, 2 validation or usage error, 3 I/O error, 4 backend unavailable.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ppl_verify::backend::{LmBackend, NgramModel, RemoteBackend, RemoteConfig, ScoringMode};
use ppl_verify::classify::{fit_threshold, Objective, Search, ThresholdClassifier};
use ppl_verify::convert::{convert_fever, convert_politifact, ConvertOptions};
use ppl_verify::data::{dataset_hash, load_dataset, Dataset};
use ppl_verify::eval::experiment::{write_rows_csv, DEFAULT_SEEDS};
use ppl_verify::eval::negation::{NegationMode, Negator, NEGATED_SUFFIX};
use ppl_verify::eval::{
    make_split, negate_dataset, ppl_gap_report, rank_claims, run_major_class, run_on_scores,
    ExperimentConfig,
};
use ppl_verify::manifest::{timestamp, RunManifest};
use ppl_verify::scoring::{
    load_scores, score_dataset, write_scores, ScoreOptions, ScoresFile, ScoresHeader,
};
use ppl_verify::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ppl-verify",
    version,
    about = "Few-shot claim verification with evidence-conditioned perplexity"
)]
#[command(args_override_self = true)]
struct Cli {
    /// TOML file with one table per subcommand; keys are long flag names.
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an additive-smoothed n-gram model on a text corpus (one sequence per line).
    NgramTrain(NgramTrainArgs),
    /// Score every claim of a dataset and write a scores file.
    Score(ScoreArgs),
    /// Multi-seed few-shot threshold experiment over a scores file.
    Run(RunArgs),
    /// Majority-class baseline under the same few-shot splits.
    Baseline(BaselineArgs),
    /// Fit and save a threshold classifier.
    Fit(FitArgs),
    /// Apply a saved threshold classifier to a scores file.
    Predict(PredictArgs),
    /// Precision at top-k of the perplexity ranking against random ranking.
    Rank(RankArgs),
    /// Add negated copies of claims with flipped labels.
    Negate(NegateArgs),
    /// Mean and max perplexity gap between claims and their negations.
    Gap(GapArgs),
    /// Convert a FEVER-style or Politifact-style export to the native format.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct NgramTrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Extra vocabulary, one token per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Causal,
    Masked,
}

impl From<ModeArg> for ScoringMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Causal => ScoringMode::Causal,
            ModeArg::Masked => ScoringMode::Masked,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// `ngram:PATH` or `remote:URL`.
    #[arg(long)]
    backend: String,
    /// Served model id (remote backends).
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum, default_value = "causal")]
    mode: ModeArg,
    /// Score claims without the evidence prefix.
    #[arg(long)]
    no_evidence: bool,
    /// Concurrent scoring workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    fail_fast: bool,
    /// Leave per-token log-probabilities out of the scores file.
    #[arg(long)]
    no_logprobs: bool,
    /// Retries for remote requests after the first attempt.
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Initial retry backoff in milliseconds (doubles per retry).
    #[arg(long, default_value_t = 250)]
    backoff_ms: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ProtocolArgs {
    #[arg(long)]
    shots: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
    seeds: Vec<u64>,
    /// Force both classes into the shot set when possible.
    #[arg(long)]
    stratified: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// `f1_macro` or `accuracy`.
    #[arg(long, default_value = "f1_macro")]
    objective: String,
    /// `exact`, `unit` (0..=1000 in steps of 1) or `grid:LO:HI:STEP`.
    #[arg(long, default_value = "exact")]
    search: String,
    /// Aggregate report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Also write the table row as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Dataset to sample shots from; with --shots and --seed.
    #[arg(long, requires = "shots")]
    dataset: Option<PathBuf>,
    /// Fit on a seeded n-shot sample instead of every scored claim.
    #[arg(long, requires = "dataset")]
    shots: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEEDS[0])]
    seed: u64,
    #[arg(long, default_value = "f1_macro")]
    objective: String,
    #[arg(long, default_value = "exact")]
    search: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Report P@k for k = 1..=K (defaults to every claim).
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_SEEDS[0])]
    seed: u64,
    /// CSV of k, P@k, baseline P@k.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NegateModeArg {
    FirstMatch,
    AllMatch,
}

#[derive(Args)]
struct NegateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "first-match")]
    mode: NegateModeArg,
    /// Verb lexicon for do-support (one third-person verb per line).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Leave out originals that could not be negated.
    #[arg(long)]
    drop_skipped: bool,
}

#[derive(Args)]
struct GapArgs {
    /// Scores of a negation-augmented dataset.
    #[arg(long)]
    scores: PathBuf,
    /// Optional separate scores file for the negated claims.
    #[arg(long)]
    negated: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceFormat {
    Fever,
    Politifact,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    format: SourceFormat,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dataset name (defaults to the output file stem).
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    max_evidence_sentences: Option<usize>,
    /// FEVER: take equal numbers of REFUTES and NOT ENOUGH INFO claims.
    #[arg(long)]
    balance: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(value).expect("serializable") + "\n"),
    )
}

fn check_positive(flag: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::validation(format!("--{flag} must be >= 1")));
    }
    Ok(())
}

fn ngram_train(a: &NgramTrainArgs) -> Result<()> {
    if a.order == 0 {
        return Err(Error::validation("--order must be >= 1"));
    }
    if !(a.alpha > 0.0 && a.alpha.is_finite()) {
        return Err(Error::validation("--alpha must be a positive number"));
    }
    let corpus = std::fs::read_to_string(&a.corpus).map_err(|e| Error::io(&a.corpus, e))?;
    let declared = match &a.vocab {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    let model = NgramModel::train_with_vocab(corpus.lines(), declared.lines(), a.order, a.alpha)?;
    model.save(&a.out)?;
    let mut m = RunManifest::new(
        "ngram-train",
        json!({"order": a.order, "alpha": a.alpha, "vocab_size": model.vocab_size(), "model": model.fingerprint()}),
    )
    .input("corpus", &a.corpus)?;
    if let Some(p) = &a.vocab {
        m = m.input("vocab", p)?;
    }
    m.write_for(&a.out)?;
    eprintln!("wrote {} (|V| = {})", a.out.display(), model.vocab_size());
    Ok(())
}

fn open_backend(target: &str, model: Option<&str>, a: &ScoreArgs) -> Result<Box<dyn LmBackend>> {
    if let Some(path) = target.strip_prefix("ngram:") {
        return Ok(Box::new(NgramModel::load(path)?));
    }
    if let Some(url) = target.strip_prefix("remote:") {
        let model =
            model.ok_or_else(|| Error::validation("--model is required for remote backends"))?;
        let mut cfg = RemoteConfig::new(url, model);
        cfg.max_in_flight = a.jobs.max(1);
        cfg.max_retries = a.retries;
        cfg.backoff = Duration::from_millis(a.backoff_ms);
        let backend = RemoteBackend::new(cfg);
        backend.wait_ready()?;
        return Ok(Box::new(backend));
    }
    Err(Error::validation(format!(
        "--backend must be ngram:PATH or remote:URL, got {target:?}"
    )))
}

fn score(a: &ScoreArgs) -> Result<()> {
    check_positive("jobs", a.jobs)?;
    let ds = load_dataset(&a.dataset)?;
    let mode = ScoringMode::from(a.mode);
    let backend = open_backend(&a.backend, a.model.as_deref(), a)?;
    let opts = ScoreOptions {
        mode,
        conditioned: !a.no_evidence,
        jobs: a.jobs,
        fail_fast: a.fail_fast,
    };
    let run = score_dataset(backend.as_ref(), &ds, &opts)?;
    let header = ScoresHeader::new(run.provenance.clone(), &ds, timestamp());
    let mut out = create(&a.out)?;
    write_scores(&mut out, &header, &run.scored, &run.errors, !a.no_logprobs)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(&a.out, e))?;
    RunManifest::new(
        "score",
        json!({
            "backend": a.backend, "model": run.provenance.model, "mode": mode,
            "conditioned": opts.conditioned, "jobs": a.jobs, "fail_fast": a.fail_fast,
            "tokenizer_note": run.provenance.tokenizer_note,
            "normalization": run.provenance.normalization,
            "provenance_hash": header.provenance_hash, "dataset_hash": header.dataset_hash,
        }),
    )
    .input("dataset", &a.dataset)?
    .write_for(&a.out)?;
    eprintln!(
        "scored {} claims, {} errors -> {}",
        run.scored.len(),
        run.errors.len(),
        a.out.display()
    );
    Ok(())
}

fn load_matching_scores(dataset: &Dataset, scores_path: &Path) -> Result<ScoresFile> {
    let scores = load_scores(scores_path)?;
    let expected = dataset_hash(dataset);
    if scores.header.dataset_hash != expected {
        return Err(Error::validation(format!(
            "{} was scored from dataset {} but the given dataset hashes to {}",
            scores_path.display(),
            scores.header.dataset_hash,
            expected
        )));
    }
    Ok(scores)
}

fn experiment_config(p: &ProtocolArgs, objective: &str, search: &str) -> Result<ExperimentConfig> {
    check_positive("shots", p.shots)?;
    Ok(ExperimentConfig {
        n: p.shots,
        seeds: p.seeds.clone(),
        objective: objective.parse::<Objective>()?,
        search: search.parse::<Search>()?,
        stratified: p.stratified,
    })
}

fn run(a: &RunArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let scores = load_matching_scores(&ds, &a.scores)?;
    let cfg = experiment_config(&a.protocol, &a.objective, &a.search)?;
    let report = run_on_scores(&ds, &scores.scored, &scores.header.provenance.model, &cfg)?;
    write_json(&a.out, &report)?;
    if let Some(csv) = &a.csv {
        write_rows_csv(create(csv)?, &[report.row()])?;
    }
    RunManifest::new(
        "run",
        json!({"experiment": cfg, "provenance_hash": scores.header.provenance_hash}),
    )
    .input("dataset", &a.dataset)?
    .input("scores", &a.scores)?
    .write_for(&a.out)?;
    let row = report.row();
    println!(
        "{} n={} acc={:.4} f1_macro={:.4} (seeds {})",
        row.dataset, row.n, row.acc_mean, row.f1_mean, row.seeds
    );
    Ok(())
}

fn baseline(a: &BaselineArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let cfg = experiment_config(&a.protocol, "f1_macro", "exact")?;
    let report = run_major_class(&ds, &cfg)?;
    write_json(&a.out, &report)?;
    if let Some(csv) = &a.csv {
        write_rows_csv(create(csv)?, &[report.row()])?;
    }
    RunManifest::new(
        "baseline",
        json!({"shots": cfg.n, "seeds": cfg.seeds, "stratified": cfg.stratified}),
    )
    .input("dataset", &a.dataset)?
    .write_for(&a.out)?;
    println!(
        "major-class n={} acc={:.4} f1_macro={:.4}",
        cfg.n, report.accuracy.mean, report.f1_macro.mean
    );
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let objective: Objective = a.objective.parse()?;
    let search: Search = a.search.parse()?;
    let (provenance_hash, shots) = match (&a.dataset, a.shots) {
        (Some(dpath), Some(n)) => {
            let ds = load_dataset(dpath)?;
            let scores = load_matching_scores(&ds, &a.scores)?;
            let split = make_split(&ds, n, a.seed, false)?;
            let shots = split
                .shot_ids
                .iter()
                .map(|id| {
                    scores
                        .scored
                        .iter()
                        .find(|s| &s.id == id)
                        .cloned()
                        .ok_or_else(|| Error::validation(format!("record {id} has no score")))
                })
                .collect::<Result<Vec<_>>>()?;
            (scores.header.provenance_hash, shots)
        }
        _ => {
            let scores = load_scores(&a.scores)?;
            (scores.header.provenance_hash, scores.scored)
        }
    };
    let mut clf = fit_threshold(&shots, objective, search)?;
    if a.shots.is_some() {
        clf.fit_report.seed = Some(a.seed);
    }
    write_json(&a.out, &clf)?;
    RunManifest::new(
        "fit",
        json!({"objective": objective, "search": search, "shots": a.shots, "seed": a.seed, "provenance_hash": provenance_hash}),
    )
        .input("scores", &a.scores)?
        .write_for(&a.out)?;
    println!(
        "th = {} ({} = {:.4} on {} shots)",
        clf.th,
        objective,
        clf.fit_report.objective_value,
        shots.len()
    );
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let scores = load_scores(&a.scores)?;
    let text = std::fs::read_to_string(&a.classifier).map_err(|e| Error::io(&a.classifier, e))?;
    let clf: ThresholdClassifier = serde_json::from_str(&text).map_err(|e| {
        Error::validation(format!(
            "{}: invalid classifier: {e}",
            a.classifier.display()
        ))
    })?;
    let mut out = create(&a.out)?;
    let mut pairs = Vec::with_capacity(scores.scored.len());
    for s in &scores.scored {
        let predicted = clf.predict(s)?;
        pairs.push((predicted, s.label));
        let line = json!({"id": s.id, "perplexity": s.perplexity, "predicted": predicted, "gold": s.label});
        writeln!(out, "{line}").map_err(|e| Error::io(&a.out, e))?;
    }
    out.flush().map_err(|e| Error::io(&a.out, e))?;
    RunManifest::new("predict", json!({"th": clf.th}))
        .input("scores", &a.scores)?
        .input("classifier", &a.classifier)?
        .write_for(&a.out)?;
    if !pairs.is_empty() {
        let r = ppl_verify::eval::evaluate(&pairs)?;
        println!(
            "acc={:.4} f1_macro={:.4} over {} claims",
            r.accuracy,
            r.f1_macro,
            pairs.len()
        );
    }
    Ok(())
}

fn rank(a: &RankArgs) -> Result<()> {
    let scores = load_scores(&a.scores)?;
    let k_max = a.k_max.unwrap_or(scores.scored.len());
    check_positive("k-max", k_max)?;
    let ks: Vec<usize> = (1..=k_max).collect();
    let report = rank_claims(&scores.scored, &ks, a.trials, a.seed)?;
    report.write_csv(create(&a.out)?)?;
    RunManifest::new(
        "rank",
        json!({"k_max": k_max, "trials": a.trials, "seed": a.seed}),
    )
    .input("scores", &a.scores)?
    .write_for(&a.out)?;
    Ok(())
}

fn negate(a: &NegateArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let mode = match a.mode {
        NegateModeArg::FirstMatch => NegationMode::FirstMatch,
        NegateModeArg::AllMatch => NegationMode::AllMatch,
    };
    let negator = match &a.lexicon {
        Some(p) => Negator::new(Negator::load_lexicon(p)?, mode),
        None => Negator::default().with_mode(mode),
    };
    let out = negate_dataset(&ds, &negator)?;
    let result = if a.drop_skipped {
        out.without_skipped()
    } else {
        out.dataset.clone()
    };
    let mut w = create(&a.out)?;
    result
        .write_jsonl(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&a.out, e))?;

    let mut skip_path = a.out.as_os_str().to_owned();
    skip_path.push(".skipped.json");
    write_json(
        Path::new(&skip_path),
        &json!({"skipped": out.skipped, "count": out.skipped.len()}),
    )?;

    let mut m = RunManifest::new(
        "negate",
        json!({"mode": mode, "drop_skipped": a.drop_skipped, "negated": out.dataset.len() - ds.len(), "skipped": out.skipped.len()}),
    )
    .input("dataset", &a.dataset)?;
    if let Some(p) = &a.lexicon {
        m = m.input("lexicon", p)?;
    }
    m.write_for(&a.out)?;
    eprintln!(
        "{} records in, {} out, {} skipped",
        ds.len(),
        result.len(),
        out.skipped.len()
    );
    Ok(())
}

fn gap(a: &GapArgs) -> Result<()> {
    let scores = load_scores(&a.scores)?;
    let report = match &a.negated {
        Some(p) => {
            let neg = load_scores(p)?;
            if neg.header.provenance_hash != scores.header.provenance_hash {
                return Err(Error::validation(
                    "original and negated scores come from different score spaces",
                ));
            }
            ppl_gap_report(&scores.scored, &neg.scored)?
        }
        None => {
            let (neg, orig): (Vec<_>, Vec<_>) = scores
                .scored
                .iter()
                .cloned()
                .partition(|s| s.id.ends_with(NEGATED_SUFFIX));
            ppl_gap_report(&orig, &neg)?
        }
    };
    println!("{}", serde_json::to_string(&report).expect("serializable"));
    Ok(())
}

fn convert(a: &ConvertArgs) -> Result<()> {
    let name = a.name.clone().unwrap_or_else(|| {
        a.out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let opts = ConvertOptions {
        max_evidence_sentences: a.max_evidence_sentences,
        balance_unsupported: a.balance,
        seed: a.seed,
    };
    let file = File::open(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let origin = a.input.display().to_string();
    let ds = match a.format {
        SourceFormat::Fever => convert_fever(&name, &origin, BufReader::new(file), &opts)?,
        SourceFormat::Politifact => {
            if a.balance {
                return Err(Error::validation("--balance only applies to FEVER exports"));
            }
            convert_politifact(&name, &origin, BufReader::new(file), &opts)?
        }
    };
    let mut w = create(&a.out)?;
    ds.write_jsonl(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&a.out, e))?;
    RunManifest::new(
        "convert",
        json!({"format": match a.format { SourceFormat::Fever => "fever", SourceFormat::Politifact => "politifact" },
               "max_evidence_sentences": a.max_evidence_sentences, "balance": a.balance, "seed": a.seed,
               "class_counts": ds.class_counts()}),
    )
    .input("input", &a.input)?
    .write_for(&a.out)?;
    eprintln!("wrote {} records to {}", ds.len(), a.out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::NgramTrain(a) => ngram_train(a),
        Command::Score(a) => score(a),
        Command::Run(a) => run(a),
        Command::Baseline(a) => baseline(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Rank(a) => rank(a),
        Command::Negate(a) => negate(a),
        Command::Gap(a) => gap(a),
        Command::Convert(a) => convert(a),
    }
}

/// Finds `--config FILE` (or `--config=FILE`) in raw arguments.
fn config_path(args: &[String]) -> Option<PathBuf> {
    args.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            args.get(i + 1).map(PathBuf::from)
        } else {
            a.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

/// Expands the subcommand's table of the config file into flags placed right
/// after the subcommand name, so explicit flags that follow override them.
fn apply_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    let Some(pos) = args.iter().position(|a| table.contains_key(a.as_str())) else {
        return Ok(args);
    };
    let Some(toml::Value::Table(section)) = table.get(&args[pos]) else {
        return Err(Error::validation(format!(
            "{}: [{}] must be a table",
            path.display(),
            args[pos]
        )));
    };
    let mut injected = Vec::new();
    for (key, value) in section {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => injected.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => injected.extend([flag, s.clone()]),
            toml::Value::Integer(i) => injected.extend([flag, i.to_string()]),
            toml::Value::Float(f) => injected.extend([flag, f.to_string()]),
            toml::Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                injected.extend([flag, joined.join(",")]);
            }
            other => {
                return Err(Error::validation(format!(
                    "{}: unsupported value for {key}: {other}",
                    path.display()
                )))
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn main() -> ExitCode {
    let args = match apply_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
