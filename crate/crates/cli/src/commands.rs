use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::thread;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgr_core::dataset::{
    build_edit_dataset, load_dfoil, load_edit_tuples, load_error_annotations, load_graph_records, load_instances,
    write_edit_tuples, write_jsonl, DatasetManifest, LoadOptions, MANIFEST_FILE,
};
use sgr_core::edit::{CorruptionConfig, EditTuple, InsertionPool};
use sgr_core::eval::{
    corpus_stats, corpus_tokens, dfoil_accuracy, error_rates, kendall_tau_b, mattr, mtld, pairwise_agreement,
    select_diverse, spearman_rho, tfidf_retrieve, Agreement, GraphScorer, RankedPair,
};
use sgr_core::generator::{generate_initial, FileSentenceParser, Instance, SentenceParser};
use sgr_core::graph::{canonicalize, parse_graph, parse_lenient, NormalizationPolicy, ParseMode, SceneGraph, Triple};
use sgr_core::metrics::{bsspice, default_embedder, spice, EmbeddingPort, MetricError, RemoteEmbedder, SynonymLexicon};
use sgr_core::refine::{
    refine, HeuristicProgrammer, NoopProgrammer, OracleProgrammer, Programmer, ProgrammerError, RefineStatus,
    RefinementConfig, RefinementTrace, RemoteProgrammer, ReplayProgrammer,
};

use crate::{
    Cli, CliError, Command, CorruptArgs, DeriveArgs, EmbedderKind, EvalDfoilArgs, EvalErrorsArgs, EvalRankArgs,
    MergeArgs, MetricArgs, MetricKind, ParseArgs, Pool, ProgrammerKind, RefineArgs, RetrieveArgs, ScoreArgs,
    SourceArgs, StatsArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Parse(a) => parse(a),
        Command::Merge(a) => merge(a),
        Command::DeriveEdits(a) => derive_edits(a),
        Command::Corrupt(a) => corrupt(cli, a),
        Command::Refine(a) => refine_cmd(cli, a),
        Command::Score(a) => score(cli, a),
        Command::Stats(a) => stats(a),
        Command::EvalRank(a) => eval_rank(a),
        Command::EvalDfoil(a) => eval_dfoil(a),
        Command::EvalErrors(a) => eval_errors(a),
        Command::Retrieve(a) => retrieve(cli, a),
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = open_output(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(data)
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    emit(path, &(serde_json::to_string_pretty(value).map_err(data)? + "\n"))
}

fn emit_rows<T: Serialize>(path: Option<&Path>, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = open_output(path)?;
    write_jsonl(&mut w, rows)?;
    w.flush().map_err(data)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn policy() -> NormalizationPolicy {
    NormalizationPolicy::default()
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

// ---- parse ----

#[derive(Serialize)]
struct ParsedGraph<'a> {
    triples: Vec<&'a Triple>,
    malformed: &'a [String],
}

fn parse(a: &ParseArgs) -> Result<()> {
    let text = match &a.input {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(data)?;
            s
        }
    };
    let mut g = if a.lenient {
        parse_lenient(&text)
    } else {
        parse_graph(&text, ParseMode::Strict).map_err(data)?
    };
    if a.canonicalize {
        g = canonicalize(&g, &policy());
    }
    if a.json {
        return emit_json(
            None,
            &ParsedGraph {
                triples: g.iter().collect(),
                malformed: g.malformed_units(),
            },
        );
    }
    for unit in g.malformed_units() {
        log::warn!("malformed unit: {unit}");
    }
    emit(None, &(g.to_flat() + "\n"))
}

// ---- shared loading ----

fn load_source(s: &SourceArgs) -> Result<(Vec<Instance>, Option<FileSentenceParser>)> {
    let instances = load_instances(&s.input, &LoadOptions::default())?;
    let parser = s
        .sentence_graphs
        .as_ref()
        .map(FileSentenceParser::load)
        .transpose()
        .map_err(data)?;
    Ok((instances, parser))
}

/// Initial graphs in instance order, from an explicit file or by merging
/// sentence graphs.
fn initial_graphs(
    instances: &[Instance],
    parser: Option<&FileSentenceParser>,
    initial: Option<&Path>,
) -> Result<Vec<SceneGraph>> {
    match initial {
        Some(path) => {
            let mut by_id: HashMap<String, SceneGraph> = load_graph_records(path, &LoadOptions::default(), ParseMode::Lenient)?
                .into_iter()
                .collect();
            instances
                .iter()
                .map(|i| {
                    by_id
                        .remove(&i.id)
                        .ok_or_else(|| CliError::Data(format!("{}: no initial graph for {}", path.display(), i.id)))
                })
                .collect()
        }
        None => instances
            .iter()
            .map(|i| {
                generate_initial(i, parser.map(|p| p as &dyn SentenceParser), &policy())
                    .map(|g| g.graph)
                    .map_err(data)
            })
            .collect(),
    }
}

// ---- merge / derive-edits / corrupt ----

#[derive(Serialize)]
struct MergedRow {
    id: String,
    caption: String,
    graph: String,
    /// Sentence index that first produced each triple.
    provenance: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    malformed: Vec<String>,
}

fn merge(a: &MergeArgs) -> Result<()> {
    let (instances, parser) = load_source(&a.source)?;
    let rows = instances
        .iter()
        .map(|i| {
            let g = generate_initial(i, parser.as_ref().map(|p| p as &dyn SentenceParser), &policy()).map_err(data)?;
            Ok(MergedRow {
                id: i.id.clone(),
                caption: i.caption.clone(),
                graph: g.graph.to_flat(),
                provenance: g.provenance,
                malformed: g.graph.malformed_units().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit_rows(a.output.as_deref(), rows)
}

fn derive_edits(a: &DeriveArgs) -> Result<()> {
    let (instances, parser) = load_source(&a.source)?;
    let initials = initial_graphs(&instances, parser.as_ref(), a.initial.as_deref())?;
    let rows = instances
        .iter()
        .zip(&initials)
        .map(|(i, y0)| {
            let gold = i
                .gold_graph
                .as_ref()
                .ok_or_else(|| CliError::Data(format!("instance {} has no gold graph", i.id)))?;
            Ok(EditTuple::new(i.id.clone(), i.caption.clone(), y0, gold))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = open_output(a.output.as_deref())?;
    write_edit_tuples(&mut w, &rows)?;
    w.flush().map_err(data)
}

fn corrupt(cli: &Cli, a: &CorruptArgs) -> Result<()> {
    let (mut instances, parser) = load_source(&a.source)?;
    let cfg = CorruptionConfig {
        n_variants: a.variants,
        delete_fraction: a.delete_fraction,
        insert_fraction: a.insert_fraction,
        insertion_pool: match a.pool {
            Pool::Corpus => InsertionPool::Corpus,
            Pool::Perturb => InsertionPool::Perturb,
        },
        seed: cli.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let parser = if a.no_merged {
        instances.iter_mut().for_each(|i| i.sentence_graphs = None);
        None
    } else {
        parser
    };
    let rows = build_edit_dataset(
        &instances,
        &cfg,
        parser.as_ref().map(|p| p as &dyn SentenceParser),
        &policy(),
    )?;
    let mut w = open_output(Some(&a.output))?;
    write_edit_tuples(&mut w, &rows)?;
    w.flush().map_err(data)?;
    drop(w);
    log::info!("wrote {} edit rows to {}", rows.len(), a.output.display());

    if let Some(name) = &a.manifest {
        let dir = a.output.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let file = a
            .output
            .file_name()
            .ok_or_else(|| CliError::Usage("--output must name a file".into()))?
            .to_string_lossy();
        let mut manifest = if dir.join(MANIFEST_FILE).exists() {
            let m = DatasetManifest::read(dir)?;
            if &m.name != name {
                return Err(CliError::Data(format!("{} belongs to dataset {:?}", dir.display(), m.name)));
            }
            m
        } else {
            DatasetManifest::new(name.clone(), &policy())
        };
        manifest.add_split(dir, &a.split, &file)?;
        manifest.write(dir)?;
    }
    Ok(())
}

// ---- refine ----

#[derive(Serialize)]
struct RefinedRow<'a> {
    id: &'a str,
    caption: &'a str,
    graph: String,
    steps_run: usize,
    #[serde(flatten)]
    status: &'a RefineStatus,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    trace: &'a RefinementTrace,
}

fn probe(remote: &RemoteProgrammer, attempts: usize, backoff: Duration) -> Result<()> {
    let mut wait = backoff;
    for attempt in 1..=attempts.max(1) {
        match remote.health() {
            Ok(h) => {
                log::info!("programmer at {} is {} (mode {})", remote.endpoint(), h.status, h.mode);
                return Ok(());
            }
            Err(ProgrammerError::Protocol(e)) => {
                return Err(CliError::Programmer(format!("{}: bad health response: {e}", remote.endpoint())))
            }
            Err(ProgrammerError::Unavailable(e)) => {
                log::warn!("health check attempt {attempt} failed: {e}");
                if attempt < attempts {
                    thread::sleep(wait);
                    wait *= 2;
                }
            }
        }
    }
    Err(CliError::Programmer(format!(
        "{} unreachable after {} attempts",
        remote.endpoint(),
        attempts.max(1)
    )))
}

fn programmer(a: &RefineArgs, instances: &[Instance]) -> Result<Box<dyn Programmer>> {
    if a.edits.is_some() && a.programmer != ProgrammerKind::Replay {
        return Err(CliError::Usage("--edits only applies to --programmer replay".into()));
    }
    Ok(match a.programmer {
        ProgrammerKind::Heuristic => Box::new(HeuristicProgrammer::default()),
        ProgrammerKind::Noop => Box::new(NoopProgrammer),
        ProgrammerKind::Oracle => Box::new(OracleProgrammer::from_instances(instances)),
        ProgrammerKind::Replay => {
            let path = a
                .edits
                .as_ref()
                .ok_or_else(|| CliError::Usage("--programmer replay needs --edits".into()))?;
            let tuples = load_edit_tuples(path, &LoadOptions::default())?;
            Box::new(ReplayProgrammer::from_tuples(&tuples))
        }
        ProgrammerKind::Remote => {
            let endpoint = a.endpoint.as_ref().ok_or_else(|| {
                CliError::Usage("--programmer remote needs --endpoint or SGR_PROGRAMMER_ENDPOINT".into())
            })?;
            let backoff = Duration::from_millis(a.backoff_ms);
            let remote = RemoteProgrammer::new(endpoint.clone()).with_retries(a.retries, backoff);
            probe(&remote, a.retries, backoff)?;
            Box::new(remote)
        }
    })
}

fn refine_cmd(cli: &Cli, a: &RefineArgs) -> Result<()> {
    let (instances, parser) = load_source(&a.source)?;
    let initials = initial_graphs(&instances, parser.as_ref(), a.initial.as_deref())?;
    let programmer = programmer(a, &instances)?;
    let cfg = RefinementConfig {
        iterations: a.iterations,
        stop_on_empty_edits: !a.no_early_stop,
        record_trace: a.trace.is_some(),
    };
    let results: Vec<_> = pool(cli.jobs)?.install(|| {
        instances
            .par_iter()
            .zip(initials.par_iter())
            .map(|(inst, y0)| refine(inst, y0, &cfg, programmer.as_ref()))
            .collect()
    });

    emit_rows(
        a.output.as_deref(),
        instances.iter().zip(&results).map(|(i, r)| RefinedRow {
            id: &i.id,
            caption: &i.caption,
            graph: r.graph.to_flat(),
            steps_run: r.steps_run,
            status: &r.status,
        }),
    )?;
    if let Some(dir) = &a.trace {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        emit_rows(
            Some(&dir.join("trace.jsonl")),
            instances.iter().zip(&results).map(|(i, r)| TraceRow {
                id: &i.id,
                trace: &r.trace,
            }),
        )?;
    }

    let degraded: Vec<(&str, &str)> = instances
        .iter()
        .zip(&results)
        .filter_map(|(i, r)| match &r.status {
            RefineStatus::Degraded { error, .. } => Some((i.id.as_str(), error.as_str())),
            RefineStatus::Complete => None,
        })
        .collect();
    match degraded.first() {
        None => Ok(()),
        Some((id, error)) => Err(CliError::Programmer(format!(
            "{} of {} instances degraded (first: {id}: {error})",
            degraded.len(),
            instances.len()
        ))),
    }
}

// ---- score ----

fn lexicon(a: &MetricArgs) -> Result<SynonymLexicon> {
    match &a.lexicon {
        Some(p) => SynonymLexicon::load(p).map_err(data),
        None => Ok(SynonymLexicon::empty()),
    }
}

fn embedder(a: &MetricArgs) -> Result<Box<dyn EmbeddingPort>> {
    Ok(match a.embedder {
        EmbedderKind::Hashed => Box::new(default_embedder()),
        EmbedderKind::Remote => {
            let ep = a.embed_endpoint.as_ref().ok_or_else(|| {
                CliError::Usage("--embedder remote needs --embed-endpoint or SGR_EMBEDDER_ENDPOINT".into())
            })?;
            Box::new(RemoteEmbedder::new(ep.clone(), a.embed_dim))
        }
    })
}

fn metric_error(e: MetricError) -> CliError {
    match e {
        MetricError::Embedding(m) => CliError::Programmer(format!("embedding service: {m}")),
        other => data(other),
    }
}

#[derive(Debug, Clone, Serialize)]
struct ScoreRow {
    id: String,
    precision: f64,
    recall: f64,
    f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bsspice: Option<f64>,
}

#[derive(Serialize)]
struct ScoreReport {
    metric: MetricKind,
    instances: Vec<ScoreRow>,
    mean: ScoreRow,
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<()> {
    let opts = LoadOptions::default();
    let gold = load_graph_records(&a.gold, &opts, ParseMode::Strict)?;
    let mut pred: HashMap<String, SceneGraph> = load_graph_records(&a.pred, &opts, ParseMode::Lenient)?
        .into_iter()
        .collect();
    let pairs: Vec<(String, SceneGraph, SceneGraph)> = gold
        .into_iter()
        .map(|(id, g)| {
            let p = pred.remove(&id).unwrap_or_else(|| {
                log::warn!("no prediction for {id}; scoring an empty graph");
                SceneGraph::new()
            });
            (id, p, g)
        })
        .collect();
    if !pred.is_empty() {
        log::warn!("{} predictions have no gold graph and were ignored", pred.len());
    }
    if pairs.is_empty() {
        return Err(CliError::Data(format!("{}: no gold graphs", a.gold.display())));
    }
    let lex = lexicon(&a.metrics)?;
    let emb = match a.metric {
        MetricKind::Spice => None,
        _ => Some(embedder(&a.metrics)?),
    };
    let rows: Vec<ScoreRow> = pool(cli.jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|(id, p, g)| {
                let s = spice(p, g, &lex);
                Ok(ScoreRow {
                    id: id.clone(),
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                    bsspice: emb.as_deref().map(|e| bsspice(p, g, e)).transpose().map_err(metric_error)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n = rows.len() as f64;
    let mean = ScoreRow {
        id: "mean".into(),
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
        bsspice: emb.as_ref().map(|_| rows.iter().filter_map(|r| r.bsspice).sum::<f64>() / n),
    };
    if a.json {
        return emit_json(
            a.output.as_deref(),
            &ScoreReport {
                metric: a.metric,
                instances: rows,
                mean,
            },
        );
    }
    let show_spice = a.metric != MetricKind::Bsspice;
    let width = rows.iter().map(|r| r.id.len()).max().unwrap_or(2).max(4);
    let mut out = format!("{:<width$}", "id");
    if show_spice {
        out += "   SPICE";
    }
    if emb.is_some() {
        out += " BSSPICE";
    }
    out.push('\n');
    for r in rows.iter().chain(std::iter::once(&mean)) {
        out += &format!("{:<width$}", r.id);
        if show_spice {
            out += &format!(" {:>7}", pct(r.f1));
        }
        if let Some(b) = r.bsspice {
            out += &format!(" {:>7}", pct(b));
        }
        out.push('\n');
    }
    emit(a.output.as_deref(), &out)
}

// ---- stats ----

#[derive(Serialize)]
struct StatsReport {
    #[serde(flatten)]
    stats: sgr_core::eval::CorpusStats,
    mattr: Option<f64>,
    mattr_window: usize,
    mtld: Option<f64>,
    mtld_threshold: f64,
}

fn stats(a: &StatsArgs) -> Result<()> {
    if a.window == 0 {
        return Err(CliError::Usage("--window must be at least 1".into()));
    }
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(CliError::Usage(format!("--threshold {} outside (0, 1)", a.threshold)));
    }
    let instances = load_instances(&a.input, &LoadOptions::default())?;
    let stats = corpus_stats(&instances);
    let captions: Vec<&str> = instances.iter().map(|i| i.caption.as_str()).collect();
    let tokens = corpus_tokens(&captions);
    let report = StatsReport {
        stats,
        mattr: mattr(&tokens, a.window).ok(),
        mattr_window: a.window,
        mtld: mtld(&tokens, a.threshold).ok(),
        mtld_threshold: a.threshold,
    };
    if a.json {
        return emit_json(a.output.as_deref(), &report);
    }
    let opt = |v: Option<f64>, prec: usize| v.map_or("n/a".to_string(), |x| format!("{x:.prec$}"));
    let text = format!(
        "{stats}\n\ninstances with gold: {}\nMATTR (window {}): {}\nMTLD (threshold {}): {}\n",
        stats.instances,
        a.window,
        opt(report.mattr, 4),
        a.threshold,
        opt(report.mtld, 2),
    );
    emit(a.output.as_deref(), &text)
}

// ---- eval ----

#[derive(Deserialize)]
struct ScorePair {
    metric: f64,
    reference: f64,
}

#[derive(Deserialize)]
struct Preference {
    preferred: f64,
    other: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

#[derive(Serialize)]
struct RankReport {
    n: usize,
    kendall_tau_b: f64,
    spearman_rho: f64,
}

fn agreement_line(name: &str, a: &Agreement) -> String {
    format!(
        "{name:<9} accuracy {:>5}  correct {}/{}  ties {}\n",
        pct(a.accuracy),
        a.correct,
        a.total,
        a.ties
    )
}

fn eval_rank(a: &EvalRankArgs) -> Result<()> {
    if a.pairwise {
        let prefs: Vec<(f64, f64)> = read_rows::<Preference>(&a.input)?
            .into_iter()
            .map(|p| (p.preferred, p.other))
            .collect();
        let agreement = pairwise_agreement(&prefs);
        return if a.json {
            emit_json(a.output.as_deref(), &agreement)
        } else {
            emit(a.output.as_deref(), &agreement_line("pairwise", &agreement))
        };
    }
    let rows: Vec<ScorePair> = read_rows(&a.input)?;
    let pairs = RankedPair::new(
        rows.iter().map(|r| r.metric).collect(),
        rows.iter().map(|r| r.reference).collect(),
    )
    .map_err(data)?;
    let report = RankReport {
        n: pairs.len(),
        kendall_tau_b: kendall_tau_b(&pairs).map_err(data)?,
        spearman_rho: spearman_rho(&pairs).map_err(data)?,
    };
    if a.json {
        emit_json(a.output.as_deref(), &report)
    } else {
        emit(
            a.output.as_deref(),
            &format!(
                "n             {}\nKendall tau-b {:.4}\nSpearman rho  {:.4}\n",
                report.n, report.kendall_tau_b, report.spearman_rho
            ),
        )
    }
}

fn eval_dfoil(a: &EvalDfoilArgs) -> Result<()> {
    let items = load_dfoil(&a.input, &LoadOptions::default())?;
    let lex = lexicon(&a.metrics)?;
    let emb = match a.metric {
        MetricKind::Spice => None,
        _ => Some(embedder(&a.metrics)?),
    };
    let mut scorers = Vec::new();
    if a.metric != MetricKind::Bsspice {
        scorers.push(GraphScorer::Spice(&lex));
    }
    if let Some(e) = emb.as_deref() {
        scorers.push(GraphScorer::Bsspice(e));
    }
    let results = scorers
        .iter()
        .map(|s| Ok((s.name(), dfoil_accuracy(&items, s).map_err(metric_error)?)))
        .collect::<Result<Vec<_>>>()?;
    if a.json {
        let map: std::collections::BTreeMap<&str, Agreement> = results.into_iter().collect();
        return emit_json(a.output.as_deref(), &map);
    }
    let text: String = results.iter().map(|(n, r)| agreement_line(n, r)).collect();
    emit(a.output.as_deref(), &text)
}

#[derive(Serialize)]
struct ErrorRow {
    file: String,
    #[serde(flatten)]
    rates: sgr_core::eval::ErrorRates,
}

fn eval_errors(a: &EvalErrorsArgs) -> Result<()> {
    let rows = a
        .input
        .iter()
        .map(|p| {
            let ann = load_error_annotations(p, &LoadOptions::default())?;
            Ok(ErrorRow {
                file: p.display().to_string(),
                rates: error_rates(&ann),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if a.json {
        return emit_json(a.output.as_deref(), &rows);
    }
    let width = rows.iter().map(|r| r.file.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<width$} | {:>5} | {:>6} | {:>6} | {:>8} | {:>9}\n",
        "File", "N", "Cross", "Long", "Implicit", "Coherence"
    );
    for r in &rows {
        out += &format!(
            "{:<width$} | {:>5} | {:>6.1} | {:>6.1} | {:>8.1} | {:>9.1}\n",
            r.file, r.rates.instances, r.rates.cross, r.rates.long, r.rates.implicit, r.rates.coherence
        );
    }
    emit(a.output.as_deref(), &out)
}

// ---- retrieve ----

#[derive(Serialize)]
struct Hit<'a> {
    rank: usize,
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    caption: &'a str,
}

fn retrieve(cli: &Cli, a: &RetrieveArgs) -> Result<()> {
    let instances = load_instances(&a.corpus, &LoadOptions::default())?;
    let captions: Vec<&str> = instances.iter().map(|i| i.caption.as_str()).collect();
    let hits: Vec<Hit> = if a.diverse {
        select_diverse(&captions, a.k, cli.seed)
            .map_err(|e| CliError::Usage(e.to_string()))?
            .into_iter()
            .enumerate()
            .map(|(rank, i)| Hit {
                rank: rank + 1,
                id: &instances[i].id,
                score: None,
                caption: captions[i],
            })
            .collect()
    } else {
        let query = a.query.as_deref().expect("clap requires --query without --diverse");
        tfidf_retrieve(query, &captions, a.k)
            .map_err(|e| CliError::Usage(e.to_string()))?
            .into_iter()
            .enumerate()
            .map(|(rank, r)| Hit {
                rank: rank + 1,
                id: &instances[r.index].id,
                score: Some(r.score),
                caption: captions[r.index],
            })
            .collect()
    };
    if a.json {
        return emit_rows(a.output.as_deref(), hits);
    }
    let text: String = hits
        .iter()
        .map(|h| match h.score {
            Some(s) => format!("{:>3}  {:.4}  {}  {}\n", h.rank, s, h.id, h.caption),
            None => format!("{:>3}  {}  {}\n", h.rank, h.id, h.caption),
        })
        .collect();
    emit(a.output.as_deref(), &text)
}
