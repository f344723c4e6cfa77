use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kvc_core::corpus::{
    corpus_stats, ensure_disjoint, generate_synthetic_corpus, parse_corpus, parse_key_file, write_corpus,
    write_key_file, Corpus, CorpusKind, KeyFile, SyntheticProfile, EVALUATION_SESSIONS, MIN_DEVELOPMENT_SESSIONS,
};
use kvc_core::features::{
    extract_features, fit_normalizer, session_stats, Normalizer, DEFAULT_CLIP_QUANTILES, STAT_COMPONENTS,
};
use kvc_core::metrics::{aggregate, build_report, evaluate_score_set, parse_summary, render_table, write_curve};
use kvc_core::protocol::{
    generate_comparison_list, parse_scores, write_scores, ComparisonList, DemographicBinning, Roster,
};
use kvc_core::verifier::{
    fit_stat_weights, run_comparisons, train_embedding, EmbeddingVerifier, StatWeights, StatisticalScorer, TrainConfig,
    TrainingSet,
};

use crate::args::{
    Common, EvaluateArgs, FeaturesArgs, HyperArgs, IngestArgs, PipelineArgs, ProfileArgs, ProtocolArgs, ReportArgs,
    ScoreArgs, SynthArgs, TrainArgs,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, sha256_file, RunManifest};
use crate::settings::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Statistical,
    Embedding,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Statistical => "statistical",
            Self::Embedding => "embedding",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "statistical" | "stat" => Ok(Self::Statistical),
            "embedding" => Ok(Self::Embedding),
            other => Err(format!("unknown method `{other}` (expected statistical or embedding)")),
        }
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::file(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::file(path, e))
}

fn write_file<F>(path: &Path, write: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> kvc_core::Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::file(path, e))?;
    let mut out = BufWriter::new(file);
    write(&mut out).map_err(|e| CliError::file(path, e))?;
    out.flush().map_err(|e| CliError::file(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_file(path, |out| Ok(out.write_all(text.as_bytes())?))
}

fn read_corpus(path: &Path, kind: CorpusKind) -> CliResult<Corpus> {
    parse_corpus(open(path)?, kind).map_err(|e| CliError::file(path, e))
}

fn read_key(path: &Path) -> CliResult<KeyFile> {
    parse_key_file(open(path)?).map_err(|e| CliError::file(path, e))
}

fn read_list(path: &Path) -> CliResult<ComparisonList> {
    ComparisonList::parse(open(path)?).map_err(|e| CliError::file(path, e))
}

/// Writes the manifest next to `primary` unless `common.manifest` says otherwise.
fn finish(common: &Common, primary: &Path, manifest: RunManifest) -> CliResult<RunManifest> {
    let path = common.manifest.clone().unwrap_or_else(|| manifest_path_for(primary));
    manifest.write(&path)?;
    Ok(manifest)
}

fn resolve_profile(
    s: &mut Settings,
    args: &ProfileArgs,
    inputs: &mut Vec<(String, PathBuf)>,
) -> CliResult<SyntheticProfile> {
    let shared = s.switch("shared", args.shared)?;
    let mut profile = if shared {
        SyntheticProfile::shared()
    } else {
        SyntheticProfile::default()
    };
    let mut overrides = s.prefixed("profile.");
    if let Some(path) = &args.profile {
        inputs.push(("profile".into(), path.clone()));
        for (i, line) in read_text(path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::file(
                    path,
                    kvc_core::Error::Parse {
                        line: i + 1,
                        message: "expected key=value".into(),
                    },
                )
            })?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    for (k, v) in overrides {
        profile.set(&k, &v)?;
    }
    profile.validate()?;
    for (k, v) in profile.entries() {
        s.record(format!("profile.{k}"), v);
    }
    Ok(profile)
}

pub fn synth(args: SynthArgs) -> CliResult<RunManifest> {
    let mut s = Settings::load(args.common.config.as_deref(), "synth")?;
    let subjects: usize = s.get("subjects", args.subjects, None)?;
    let kind: CorpusKind = s.get("kind", args.kind, Some(CorpusKind::Development))?;
    let default_sessions = match kind {
        CorpusKind::Development => MIN_DEVELOPMENT_SESSIONS,
        CorpusKind::Evaluation => EVALUATION_SESSIONS,
    };
    let sessions: usize = s.get("sessions", args.sessions, Some(default_sessions))?;
    let seed: u64 = s.get("seed", args.seed, None)?;
    let mut inputs = Vec::new();
    let profile = resolve_profile(&mut s, &args.profile, &mut inputs)?;
    let out = s.path("out", args.out)?;
    let key_out = s.path("key_out", args.key_out)?;

    let synth = generate_synthetic_corpus(subjects, sessions, seed, &profile, kind)?;
    write_file(&out, |w| write_corpus(&synth.corpus, w))?;
    write_file(&key_out, |w| write_key_file(&synth.key, w))?;
    println!(
        "synth: {} sessions of {subjects} subjects ({kind}) -> {}",
        synth.corpus.session_count(),
        out.display()
    );

    let mut manifest = RunManifest::new("synth", s.into_config());
    for (role, path) in &inputs {
        manifest.input(role, path)?;
    }
    manifest.output("corpus", &out)?;
    manifest.output("key", &key_out)?;
    finish(&args.common, &out, manifest)
}

pub fn ingest(args: IngestArgs) -> CliResult<RunManifest> {
    let mut s = Settings::load(args.common.config.as_deref(), "ingest")?;
    let input = s.path("input", args.input)?;
    let kind: CorpusKind = s.get("kind", args.kind, Some(CorpusKind::Development))?;
    let key_path = s.opt_path("key", args.key);
    let min_sessions: usize = s.get("min_sessions", args.min_sessions, Some(MIN_DEVELOPMENT_SESSIONS))?;
    let disjoint_from = s.opt_path("disjoint_from", args.disjoint_from);
    let out = s.path("out", args.out)?;
    let key_out = s.opt_path("key_out", args.key_out);

    let mut corpus = read_corpus(&input, kind)?;
    let key = key_path.as_deref().map(read_key).transpose()?;
    match (kind, &key) {
        (CorpusKind::Development, Some(key)) => corpus = corpus.with_demographics(key)?,
        (CorpusKind::Evaluation, Some(key)) => {
            let owners = key.owner_index();
            if let Some(missing) = corpus.sessions().find(|s| !owners.contains_key(s.id())) {
                return Err(kvc_core::Error::UnknownSession(format!("{} (not in key file)", missing.id())).into());
            }
        }
        _ => {}
    }
    if kind == CorpusKind::Development {
        let before = corpus.subjects().len();
        corpus = corpus.exclude_sparse_subjects(min_sessions);
        let dropped = before - corpus.subjects().len();
        if dropped > 0 {
            println!("ingest: dropped {dropped} subjects with fewer than {min_sessions} sessions");
        }
    }
    if let Some(path) = &disjoint_from {
        if kind != CorpusKind::Development {
            return Err(CliError::Usage("--disjoint-from applies to development corpora".into()));
        }
        ensure_disjoint(&corpus, &read_key(path)?)?;
    }
    let stats = corpus_stats(&corpus)?;
    println!(
        "ingest: {} subjects, {} sessions, {} events, {:.2} +/- {:.2} events per session",
        stats.subjects, stats.sessions, stats.events, stats.mean_session_length, stats.std_session_length
    );
    write_file(&out, |w| write_corpus(&corpus, w))?;
    let written_key = match (&key_out, kind, &key) {
        (Some(path), CorpusKind::Development, Some(_)) => Some((path, corpus.key_file())),
        (Some(path), CorpusKind::Evaluation, Some(k)) => Some((path, k.clone())),
        (Some(_), _, None) => return Err(CliError::Usage("--key-out needs --key".into())),
        _ => None,
    };
    if let Some((path, k)) = &written_key {
        write_file(path, |w| write_key_file(k, w))?;
    }

    let mut manifest = RunManifest::new("ingest", s.into_config());
    manifest.input("corpus", &input)?;
    if let Some(p) = &key_path {
        manifest.input("key", p)?;
    }
    if let Some(p) = &disjoint_from {
        manifest.input("disjoint_from", p)?;
    }
    manifest.output("corpus", &out)?;
    if let Some((path, _)) = &written_key {
        manifest.output("key", path)?;
    }
    finish(&args.common, &out, manifest)
}

pub fn features(args: FeaturesArgs) -> CliResult<RunManifest> {
    let mut s = Settings::load(args.common.config.as_deref(), "features")?;
    let corpus_path = s.path("corpus", args.corpus)?;
    let clip_low: f64 = s.get("clip_low", args.clip_low, Some(DEFAULT_CLIP_QUANTILES.0))?;
    let clip_high: f64 = s.get("clip_high", args.clip_high, Some(DEFAULT_CLIP_QUANTILES.1))?;
    let normalizer_out = s.path("normalizer_out", args.normalizer_out)?;
    let weights_out = s.path("weights_out", args.weights_out)?;
    let stats_out = s.opt_path("stats_out", args.stats_out);

    let corpus = read_corpus(&corpus_path, CorpusKind::Development)?;
    let sequences: Vec<_> = corpus.sessions().map(extract_features).collect();
    let normalizer = fit_normalizer(&sequences, (clip_low, clip_high))?;
    let weights = fit_stat_weights(&corpus)?;
    write_text(&normalizer_out, &normalizer.to_text())?;
    write_text(&weights_out, &weights.to_text())?;
    if let Some(path) = &stats_out {
        write_file(path, |w| {
            writeln!(w, "session_id,{}", STAT_COMPONENTS.join(","))?;
            for (session, seq) in corpus.sessions().zip(&sequences) {
                let values: Vec<String> = session_stats(seq).to_vec().iter().map(f64::to_string).collect();
                writeln!(w, "{},{}", session.id(), values.join(","))?;
            }
            Ok(())
        })?;
    }
    println!(
        "features: fitted on {} sessions -> {}, {}",
        sequences.len(),
        normalizer_out.display(),
        weights_out.display()
    );

    let mut manifest = RunManifest::new("features", s.into_config());
    manifest.input("corpus", &corpus_path)?;
    manifest.output("normalizer", &normalizer_out)?;
    manifest.output("weights", &weights_out)?;
    if let Some(p) = &stats_out {
        manifest.output("stats", p)?;
    }
    finish(&args.common, &normalizer_out, manifest)
}

pub fn protocol(args: ProtocolArgs) -> CliResult<RunManifest> {
    let mut s = Settings::load(args.common.config.as_deref(), "protocol")?;
    let key_path = s.path("key", args.key)?;
    let seed: u64 = s.get("seed", args.seed, None)?;
    let binning: DemographicBinning = s.get(
        "age_bins",
        args.age_bins.map(|b| b.parse()).transpose()?,
        Some(DemographicBinning::default()),
    )?;
    let out = s.path("out", args.out)?;

    let key = read_key(&key_path)?;
    let roster = Roster::from_key(&key);
    let list = generate_comparison_list(&roster, &binning, seed)?;
    list.validate_against_key(&key)?;
    write_file(&out, |w| list.write(w))?;
    println!(
        "protocol: {} comparisons for {} subjects -> {}",
        list.len(),
        list.target_subjects().len(),
        out.display()
    );

    let mut manifest = RunManifest::new("protocol", s.into_config());
    manifest.input("key", &key_path)?;
    manifest.output("list", &out)?;
    finish(&args.common, &out, manifest)
}

fn resolve_train_config(s: &mut Settings, hyper: &HyperArgs, seed: u64) -> CliResult<TrainConfig> {
    let d = TrainConfig::default();
    let hidden_default: Vec<String> = d.hidden.iter().map(|h| h.to_string()).collect();
    let mut cfg = TrainConfig {
        margin: s.get("margin", hyper.margin, Some(d.margin))?,
        learning_rate: s.get("learning_rate", hyper.learning_rate, Some(d.learning_rate))?,
        epochs: s.get("epochs", hyper.epochs, Some(d.epochs))?,
        subjects_per_batch: s.get(
            "subjects_per_batch",
            hyper.subjects_per_batch,
            Some(d.subjects_per_batch),
        )?,
        sessions_per_subject: s.get(
            "sessions_per_subject",
            hyper.sessions_per_subject,
            Some(d.sessions_per_subject),
        )?,
        embedding_dim: s.get("embedding_dim", hyper.embedding_dim, Some(d.embedding_dim))?,
        sequence_length: s.get("sequence_length", hyper.sequence_length, Some(d.sequence_length))?,
        seed,
        ..d
    };
    let hidden: String = s.get("hidden", hyper.hidden.clone(), Some(hidden_default.join(",")))?;
    cfg.set("hidden", &hidden)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(args: TrainArgs) -> CliResult<RunManifest> {
    let mut s = Settings::load(args.common.config.as_deref(), "train")?;
    let corpus_path = s.path("corpus", args.corpus)?;
    let normalizer_path = s.path("normalizer", args.normalizer)?;
    let seed: u64 = s.get("seed", args.seed, None)?;
    let config = resolve_train_config(&mut s, &args.hyper, seed)?;
    let out = s.path("out", args.out)?;
    let trace_out = s.opt_path("trace_out", args.trace_out);

    let corpus = read_corpus(&corpus_path, CorpusKind::Development)?;
    let normalizer = Normalizer::parse(open(&normalizer_path)?).map_err(|e| CliError::file(&normalizer_path, e))?;
    let data = TrainingSet::from_corpus(&corpus, &normalizer, config.sequence_length)?;
    let trained = train_embedding(&data, &config)?;
    let verifier = EmbeddingVerifier::new(trained.model, normalizer, &config)?;
    write_file(&out, |w| verifier.write(w))?;
    if let Some(path) = &trace_out {
        write_file(path, |w| {
            writeln!(w, "epoch,loss")?;
            for (e, loss) in trained.loss_trace.iter().enumerate() {
                writeln!(w, "{e},{loss}")?;
            }
            Ok(())
        })?;
    }
    println!(
        "train: {} epochs, final loss {:.4} -> {}",
        trained.loss_trace.len(),
        trained.loss_trace.last().copied().unwrap_or(f64::NAN),
        out.display()
    );

    let mut manifest = RunManifest::new("train", s.into_config());
    manifest.input("corpus", &corpus_path)?;
    manifest.input("normalizer", &normalizer_path)?;
    manifest.output("model", &out)?;
    if let Some(p) = &trace_out {
        manifest.output("trace", p)?;
    }
    finish(&args.common, &out, manifest)
}

pub fn score(args: ScoreArgs) -> CliResult<RunManifest> {
    let mut s = Settings::load(args.common.config.as_deref(), "score")?;
    let method: Method = s.get("method", args.method, None)?;
    let corpus_path = s.path("corpus", args.corpus)?;
    let kind: CorpusKind = s.get("kind", args.kind, Some(CorpusKind::Evaluation))?;
    let list_path = s.path("list", args.list)?;
    let weights_path = s.opt_path("weights", args.weights);
    let model_path = s.opt_path("model", args.model);
    let workers: usize = s.get("workers", args.workers, Some(1))?;
    let out = s.path("out", args.out)?;

    let list = read_list(&list_path)?;
    let corpus = read_corpus(&corpus_path, kind)?;
    let (scores, parameters) = match method {
        Method::Statistical => {
            let path = weights_path
                .as_ref()
                .ok_or_else(|| CliError::Usage("--weights is required for the statistical method".into()))?;
            let weights = StatWeights::parse(open(path)?).map_err(|e| CliError::file(path, e))?;
            (
                run_comparisons(&list, &corpus, &StatisticalScorer::new(weights), workers)?,
                path,
            )
        }
        Method::Embedding => {
            let path = model_path
                .as_ref()
                .ok_or_else(|| CliError::Usage("--model is required for the embedding method".into()))?;
            let verifier = EmbeddingVerifier::parse(open(path)?).map_err(|e| CliError::file(path, e))?;
            (run_comparisons(&list, &corpus, &verifier, workers)?, path)
        }
    };
    write_file(&out, |w| write_scores(&scores, w))?;
    println!("score: {} comparisons ({method}) -> {}", scores.len(), out.display());

    let mut manifest = RunManifest::new("score", s.into_config());
    manifest.input("corpus", &corpus_path)?;
    manifest.input("list", &list_path)?;
    manifest.input(&method.to_string(), parameters)?;
    manifest.output("scores", &out)?;
    finish(&args.common, &out, manifest)
}

pub fn evaluate(args: EvaluateArgs) -> CliResult<RunManifest> {
    let mut s = Settings::load(args.common.config.as_deref(), "evaluate")?;
    let scores_path = s.path("scores", args.scores)?;
    let list_path = s.path("list", args.list)?;
    let key_path = s.opt_path("key", args.key);
    let system: String = s.get("system", args.system, Some("system".to_string()))?;
    let out = s.path("out", args.out)?;
    let summary_out = s.get(
        "summary_out",
        args.summary_out.map(|p| p.display().to_string()),
        Some(format!("{}.summary", out.display())),
    )?;
    let summary_out = PathBuf::from(summary_out);
    let curve_out = s.opt_path("curve_out", args.curve_out);
    let probit = s.switch("probit", args.probit)?;

    let list = read_list(&list_path)?;
    let scores = parse_scores(open(&scores_path)?).map_err(|e| CliError::file(&scores_path, e))?;
    if let Some(path) = &key_path {
        list.validate_against_key(&read_key(path)?)?;
    }
    let set = aggregate(&scores, &list).map_err(|e| match e {
        kvc_core::Error::CountMismatch { expected, found, .. } if found != expected && scores.len() != list.len() => {
            CliError::file(
                &scores_path,
                kvc_core::Error::CountMismatch {
                    what: format!("score lines (comparison list {} has {expected})", list_path.display()),
                    expected,
                    found,
                },
            )
        }
        other => other.into(),
    })?;
    let evaluation = evaluate_score_set(&set)?;

    let mut echo: Vec<(String, String)> = list
        .metadata()
        .iter()
        .map(|(k, v)| (format!("list.{k}"), v.clone()))
        .collect();
    echo.push(("list_sha256".into(), sha256_file(&list_path)?));
    echo.push(("scores_sha256".into(), sha256_file(&scores_path)?));
    let report = build_report(&system, &evaluation, echo);
    let rendered = report.render();
    write_text(&out, &rendered)?;
    write_text(&summary_out, &report.to_summary())?;
    if let Some(path) = &curve_out {
        write_file(path, |w| write_curve(&evaluation.curve, probit, w))?;
    }
    print!("{rendered}");

    let mut manifest = RunManifest::new("evaluate", s.into_config());
    manifest.input("scores", &scores_path)?;
    manifest.input("list", &list_path)?;
    if let Some(p) = &key_path {
        manifest.input("key", p)?;
    }
    manifest.output("report", &out)?;
    manifest.output("summary", &summary_out)?;
    if let Some(p) = &curve_out {
        manifest.output("curve", p)?;
    }
    finish(&args.common, &out, manifest)
}

pub fn report(args: ReportArgs) -> CliResult<RunManifest> {
    let mut s = Settings::load(args.common.config.as_deref(), "report")?;
    let summaries = s.paths("summary", args.summaries);
    if summaries.is_empty() {
        return Err(CliError::Usage("missing required --summary".into()));
    }
    let out = s.path("out", args.out)?;

    let mut rows = Vec::new();
    let mut list_digest: Option<(PathBuf, String)> = None;
    for path in &summaries {
        let report = parse_summary(&read_text(path)?).map_err(|e| CliError::file(path, e))?;
        if let Some((_, digest)) = report.config.iter().find(|(k, _)| k == "list_sha256") {
            match &list_digest {
                Some((first, d)) if d != digest => {
                    return Err(kvc_core::Error::Validation(format!(
                        "{} and {} were evaluated on different comparison lists",
                        first.display(),
                        path.display()
                    ))
                    .into())
                }
                None => list_digest = Some((path.clone(), digest.clone())),
                _ => {}
            }
        }
        rows.push((report.system, report.pooled));
    }
    let table = render_table(&rows, true);
    write_text(&out, &table)?;
    print!("{table}");

    let mut manifest = RunManifest::new("report", s.into_config());
    for (i, p) in summaries.iter().enumerate() {
        manifest.input(&format!("summary{i}"), p)?;
    }
    manifest.output("ranking", &out)?;
    finish(&args.common, &out, manifest)
}

fn stage<T>(name: &'static str, result: CliResult<T>) -> CliResult<T> {
    result.map_err(|e| CliError::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Runs synth (development and evaluation), ingest, features, protocol,
/// train, score and evaluate for both baselines, and the ranking report.
pub fn pipeline(args: PipelineArgs) -> CliResult<RunManifest> {
    let mut s = Settings::load(args.common.config.as_deref(), "pipeline")?;
    let dir = s.path("out_dir", args.out_dir)?;
    let seed: u64 = s.get("seed", args.seed, None)?;
    let dev_subjects: usize = s.get("dev_subjects", args.dev_subjects, Some(1000))?;
    let eval_subjects: usize = s.get("eval_subjects", args.eval_subjects, Some(1000))?;
    let dev_sessions: usize = s.get("dev_sessions", args.dev_sessions, Some(MIN_DEVELOPMENT_SESSIONS))?;
    let workers: usize = s.get("workers", args.workers, Some(1))?;
    let mut profile_inputs = Vec::new();
    let profile = resolve_profile(&mut s, &args.profile, &mut profile_inputs)?;
    let train_config = resolve_train_config(&mut s, &args.hyper, seed)?;
    fs::create_dir_all(&dir).map_err(|e| CliError::file(&dir, e))?;

    let p = |name: &str| dir.join(name);
    let at = |name: &str| Common {
        config: None,
        manifest: Some(dir.join(format!("{name}.manifest"))),
    };
    let profile_args = |prefix: &str| ProfileArgs {
        shared: false,
        profile: None,
        set: profile
            .entries()
            .into_iter()
            .map(|(k, v)| {
                if k == "id_prefix" {
                    format!("{k}={prefix}")
                } else {
                    format!("{k}={v}")
                }
            })
            .collect(),
    };
    let hyper = HyperArgs {
        margin: Some(train_config.margin),
        learning_rate: Some(train_config.learning_rate),
        epochs: Some(train_config.epochs),
        subjects_per_batch: Some(train_config.subjects_per_batch),
        sessions_per_subject: Some(train_config.sessions_per_subject),
        hidden: Some(
            train_config
                .hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
        embedding_dim: Some(train_config.embedding_dim),
        sequence_length: Some(train_config.sequence_length),
    };

    let mut manifests = vec![stage(
        "synth-dev",
        synth(SynthArgs {
            subjects: Some(dev_subjects),
            sessions: Some(dev_sessions),
            kind: Some(CorpusKind::Development),
            seed: Some(seed),
            profile: profile_args("d"),
            out: Some(p("dev_corpus.csv")),
            key_out: Some(p("dev_key.csv")),
            common: at("synth_dev"),
        }),
    )?];
    manifests.push(stage(
        "synth-eval",
        synth(SynthArgs {
            subjects: Some(eval_subjects),
            sessions: Some(EVALUATION_SESSIONS),
            kind: Some(CorpusKind::Evaluation),
            seed: Some(seed.wrapping_add(1)),
            profile: profile_args("e"),
            out: Some(p("eval_corpus.csv")),
            key_out: Some(p("eval_key.csv")),
            common: at("synth_eval"),
        }),
    )?);
    manifests.push(stage(
        "ingest",
        ingest(IngestArgs {
            input: Some(p("dev_corpus.csv")),
            kind: Some(CorpusKind::Development),
            key: Some(p("dev_key.csv")),
            min_sessions: Some(MIN_DEVELOPMENT_SESSIONS),
            disjoint_from: Some(p("eval_key.csv")),
            out: Some(p("dev_ingested.csv")),
            key_out: Some(p("dev_ingested_key.csv")),
            common: at("ingest"),
        }),
    )?);
    manifests.push(stage(
        "features",
        features(FeaturesArgs {
            corpus: Some(p("dev_ingested.csv")),
            clip_low: None,
            clip_high: None,
            normalizer_out: Some(p("normalizer.csv")),
            weights_out: Some(p("stat_weights.csv")),
            stats_out: None,
            common: at("features"),
        }),
    )?);
    manifests.push(stage(
        "protocol",
        protocol(ProtocolArgs {
            key: Some(p("eval_key.csv")),
            seed: Some(seed),
            age_bins: None,
            out: Some(p("comparisons.csv")),
            common: at("protocol"),
        }),
    )?);
    manifests.push(stage(
        "train",
        train(TrainArgs {
            corpus: Some(p("dev_ingested.csv")),
            normalizer: Some(p("normalizer.csv")),
            seed: Some(seed),
            hyper,
            out: Some(p("model.txt")),
            trace_out: Some(p("loss_trace.csv")),
            common: at("train"),
        }),
    )?);
    let mut summaries = Vec::new();
    for method in [Method::Statistical, Method::Embedding] {
        let scores = p(&format!("scores_{method}.txt"));
        manifests.push(stage(
            "score",
            score(ScoreArgs {
                method: Some(method),
                corpus: Some(p("eval_corpus.csv")),
                kind: Some(CorpusKind::Evaluation),
                list: Some(p("comparisons.csv")),
                weights: (method == Method::Statistical).then(|| p("stat_weights.csv")),
                model: (method == Method::Embedding).then(|| p("model.txt")),
                workers: Some(workers),
                out: Some(scores.clone()),
                common: at(&format!("score_{method}")),
            }),
        )?);
        let summary = p(&format!("summary_{method}.txt"));
        manifests.push(stage(
            "evaluate",
            evaluate(EvaluateArgs {
                scores: Some(scores),
                list: Some(p("comparisons.csv")),
                key: Some(p("eval_key.csv")),
                system: Some(method.to_string()),
                out: Some(p(&format!("report_{method}.txt"))),
                summary_out: Some(summary.clone()),
                curve_out: Some(p(&format!("curve_{method}.csv"))),
                probit: true,
                common: at(&format!("evaluate_{method}")),
            }),
        )?);
        summaries.push(summary);
    }
    manifests.push(stage(
        "report",
        report(ReportArgs {
            summaries,
            out: Some(p("ranking.txt")),
            common: at("report"),
        }),
    )?);

    let mut manifest = RunManifest::new("pipeline", s.into_config());
    for path in &profile_inputs {
        manifest.input(&path.0, &path.1)?;
    }
    for m in manifests {
        for f in m.outputs {
            manifest.output(&format!("{}.{}", m.command, f.role), &f.path)?;
        }
    }
    let path = args
        .common
        .manifest
        .clone()
        .unwrap_or_else(|| dir.join("pipeline.manifest"));
    manifest.write(&path)?;
    Ok(manifest)
}
