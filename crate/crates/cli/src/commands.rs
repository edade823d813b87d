use std::fmt;
use std::io::Write;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::Path;
use std::process::ExitCode;

use malpara::annotation::{
    agreement_kappa, aggregate as aggregate_judgments, assignment_from_ids, assignment_from_records, human_rates,
    read_journal, read_labels_jsonl, run_service, write_labels_jsonl, AnnotationError, OverlapPolicy, ServiceConfig,
    Store,
};
use malpara::backends::BackendRegistry;
use malpara::corpus::{load_pairs_tsv, load_synonyms_csv, read_candidates_jsonl, write_candidates_jsonl, PipelineId};
use malpara::metrics::{score_corpus, Metric};
use malpara::pipelines::{run_batch, Pipeline};
use malpara::report::{build_report, render, EvaluationReport, Format, ReportRow};

use super::config::RunConfig;
use super::{
    AggregateArgs, FormatArg, GenerateArgs, HealthArgs, MetricArg, PipelineArg, ReportArgs, ScoreArgs, ServeArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input files.
    Usage(String),
    /// Failure while doing the work.
    Fatal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Fatal(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Fatal(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn fatal(e: impl fmt::Display) -> CliError {
    CliError::Fatal(e.to_string())
}

const PARTIAL: u8 = 3;

impl From<PipelineArg> for PipelineId {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::M1 => PipelineId::M1,
            PipelineArg::M2 => PipelineId::M2,
            PipelineArg::M3 => PipelineId::M3,
            PipelineArg::M4 => PipelineId::M4,
        }
    }
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Bleu => Metric::Bleu,
            MetricArg::Meteor => Metric::Meteor,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => Format::Markdown,
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

pub fn generate(args: GenerateArgs) -> Result<ExitCode, CliError> {
    let cfg = RunConfig::load(&args.config).map_err(CliError::Usage)?;
    if args.parallel == 0 {
        return Err(usage("--parallel must be at least 1"));
    }
    let pairs_path = cfg.paths.pairs.as_ref().ok_or_else(|| usage("config has no [paths] pairs"))?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.paths.candidates.clone())
        .ok_or_else(|| usage("no --out given and config has no [paths] candidates"))?;
    let pairs = load_pairs_tsv(pairs_path).map_err(usage)?;
    let registry = BackendRegistry::from_configs(cfg.backends.clone()).map_err(usage)?;

    let mut ids: Vec<PipelineId> = Vec::new();
    for p in args.pipeline {
        let id = PipelineId::from(p);
        if !ids.contains(&id) {
            ids.push(id);
        }
    }

    let mut records = Vec::new();
    let (mut total, mut failed) = (0usize, 0usize);
    for id in ids {
        let spec = cfg.pipeline_spec(id, args.seed).map_err(CliError::Usage)?;
        let pipeline = Pipeline::new(spec, &registry).map_err(usage)?;
        let batch = run_batch(&pairs, &pipeline, args.sample, args.seed, args.parallel).map_err(usage)?;
        for (_, error) in batch.failures() {
            eprintln!("failed: {error}");
            failed += 1;
        }
        total += batch.items.len();
        records.extend(batch.records());
    }

    let written = write_candidates_jsonl(&records, &out).map_err(fatal)?;
    println!("wrote {written} records to {}", out.display());
    if failed == 0 {
        Ok(ExitCode::SUCCESS)
    } else if failed == total {
        Err(fatal(format!("all {total} records failed")))
    } else {
        eprintln!("{failed} of {total} records failed");
        Ok(ExitCode::from(PARTIAL))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

pub fn score(args: ScoreArgs) -> Result<ExitCode, CliError> {
    let records = read_candidates_jsonl(&args.input).map_err(usage)?;
    let mut metrics: Vec<Metric> = Vec::new();
    for m in args.metrics {
        let m = Metric::from(m);
        if !metrics.contains(&m) {
            metrics.push(m);
        }
    }
    let lexicon = match &args.synonyms {
        Some(path) => Some(load_synonyms_csv(path).map_err(usage)?.lexicon),
        None => None,
    };

    let scored = score_corpus(&records, &metrics, lexicon.as_ref());
    if scored.skipped > 0 {
        eprintln!("skipped {} records with an empty side after tokenization", scored.skipped);
    }
    let out = args.out.as_ref().unwrap_or(&args.input);
    write_candidates_jsonl(&scored.records, out).map_err(fatal)?;

    println!("direction: {}", scored.direction);
    println!("pipeline\tn\tbleu\tmeteor\tcosine");
    for (pipeline, means) in &scored.means {
        println!(
            "{pipeline}\t{}\t{}\t{}\t{}",
            means.n,
            fmt_opt(means.bleu),
            fmt_opt(means.meteor),
            fmt_opt(means.cosine)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn socket_addr(host: &str, port: u16) -> Result<SocketAddr, CliError> {
    (host, port)
        .to_socket_addrs()
        .map_err(|e| usage(format!("cannot resolve {host}:{port}: {e}")))?
        .next()
        .ok_or_else(|| usage(format!("no address for {host}:{port}")))
}

pub fn serve(args: ServeArgs) -> Result<ExitCode, CliError> {
    let cfg = RunConfig::load(&args.config).map_err(CliError::Usage)?;
    let candidates = cfg
        .paths
        .candidates
        .as_ref()
        .ok_or_else(|| usage("config has no [paths] candidates"))?;
    let journal = cfg.paths.journal.as_ref().ok_or_else(|| usage("config has no [paths] journal"))?;
    let pairs: Vec<_> = read_candidates_jsonl(candidates)
        .map_err(usage)?
        .into_iter()
        .map(|r| r.pair)
        .collect();

    let (store, replay) = Store::open(pairs, cfg.policy, journal).map_err(|e| match e {
        AnnotationError::Corrupt { .. } => fatal(format!("refusing to start: {e}")),
        other => fatal(other),
    })?;
    if let Some(q) = &replay.quarantined {
        eprintln!("truncated final journal line moved to {}", q.display());
    }

    let host = args.host.unwrap_or(cfg.service.host);
    let config = ServiceConfig {
        addr: socket_addr(&host, args.port.unwrap_or(cfg.service.port))?,
        ui_dir: args.ui.or(cfg.service.ui_dir),
    };
    println!(
        "serving {} pairs ({} judgments replayed) on http://{}",
        store.pairs().count(),
        replay.judgments.len(),
        config.addr
    );
    run_service(store, &config).map_err(fatal)?;
    Ok(ExitCode::SUCCESS)
}

pub fn aggregate(args: AggregateArgs) -> Result<ExitCode, CliError> {
    let replay = read_journal(&args.journal).map_err(usage)?;
    if let Some(tail) = &replay.truncated_tail {
        eprintln!("ignoring truncated final journal line ({} bytes)", tail.len());
    }
    let mut policy = match &args.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Usage)?.policy,
        None => OverlapPolicy::default(),
    };
    if let Some(n) = args.min_votes {
        policy.min_votes = n;
    }
    if let Some(t) = args.threshold {
        policy.threshold = t;
    }
    policy.validate().map_err(usage)?;

    let labels = aggregate_judgments(&replay.judgments, &policy);
    write_labels_jsonl(&labels, &args.out).map_err(fatal)?;

    let assignment = match &args.candidates {
        Some(path) => assignment_from_records(&read_candidates_jsonl(path).map_err(usage)?),
        None => assignment_from_ids(labels.iter().map(|l| l.pair_id.as_str())),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut emit = || -> std::io::Result<()> {
        writeln!(out, "pipeline\tpairs\tcorrect\thuman_rate")?;
        for (pipeline, rate) in human_rates(&labels, &assignment) {
            writeln!(out, "{pipeline}\t{}\t{}\t{:.6}", rate.pairs, rate.correct, rate.rate)?;
        }
        match agreement_kappa(&replay.judgments) {
            Some(k) => writeln!(out, "fleiss_kappa\t{k:.6}"),
            None => writeln!(out, "fleiss_kappa\tundefined"),
        }
    };
    emit().map_err(fatal)?;
    Ok(ExitCode::SUCCESS)
}

fn load_rows(path: &Path) -> Result<EvaluationReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    match serde_json::from_str::<Vec<ReportRow>>(&text) {
        Ok(rows) => EvaluationReport::from_rows(rows).map_err(usage),
        Err(_) => {
            let report = EvaluationReport::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            // recompute so a hand-edited report cannot carry stale correlations
            let pair_level = report.pair_level;
            let mut rebuilt = EvaluationReport::from_rows(report.rows).map_err(usage)?;
            rebuilt.pair_level = pair_level;
            Ok(rebuilt)
        }
    }
}

pub fn report(args: ReportArgs) -> Result<ExitCode, CliError> {
    let report = match (&args.rows, &args.scores, &args.labels) {
        (Some(rows), _, _) => load_rows(rows)?,
        (None, Some(scores), Some(labels)) => {
            let records = read_candidates_jsonl(scores).map_err(usage)?;
            let labels = read_labels_jsonl(labels).map_err(usage)?;
            build_report(&records, &labels)
        }
        _ => return Err(usage("give either --rows or both --scores and --labels")),
    };
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    let text = render(&report, args.format.into());
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| fatal(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn health(args: HealthArgs) -> Result<ExitCode, CliError> {
    let cfg = RunConfig::load(&args.config).map_err(CliError::Usage)?;
    let registry = BackendRegistry::from_configs(cfg.backends.clone()).map_err(usage)?;
    let mut all_ok = true;
    for backend in &cfg.backends {
        let b = registry.get(&backend.id).map_err(fatal)?;
        match b.health_check() {
            Ok(h) if h.ok => println!("{}\tok\t{} ms", b.id(), h.latency.as_millis()),
            Ok(_) => {
                all_ok = false;
                println!("{}\tunhealthy", b.id());
            }
            Err(e) => {
                all_ok = false;
                println!("{}\tfailed\t{e}", b.id());
            }
        }
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
