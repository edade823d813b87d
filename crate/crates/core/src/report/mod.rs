//! Per-pipeline summaries and metric-versus-human correlations.
//!
//! Rows hold metric means and the high-confidence human rate. Correlations
//! are computed at two levels: pair level (each metric against the binary
//! human label of every judged record) and model level (per-pipeline means
//! against per-pipeline human rates).

mod stats;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::AggregatedLabel;
use crate::corpus::{CandidateRecord, PipelineId};
use crate::metrics::Metric;

pub use stats::{average_ranks, pearson, spearman, StatsError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("invalid report row {model:?}: {message}")]
    InvalidRow { model: String, message: String },
    #[error("cannot parse report: {0}")]
    Parse(String),
    #[error("unknown format {0:?} (valid: markdown, json, csv)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    /// `None` for external reference rows.
    #[serde(default)]
    pub pipeline: Option<PipelineId>,
    #[serde(default)]
    pub n_pairs: usize,
    pub bleu_mean: Option<f64>,
    pub meteor_mean: Option<f64>,
    pub cosine_mean: Option<f64>,
    pub human_rate: Option<f64>,
}

impl ReportRow {
    pub fn metric(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Bleu => self.bleu_mean,
            Metric::Meteor => self.meteor_mean,
            Metric::Cosine => self.cosine_mean,
        }
    }

    fn validate(&self) -> Result<(), ReportError> {
        let cells = [
            ("bleu_mean", self.bleu_mean),
            ("meteor_mean", self.meteor_mean),
            ("cosine_mean", self.cosine_mean),
            ("human_rate", self.human_rate),
        ];
        for (name, value) in cells {
            if let Some(v) = value {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ReportError::InvalidRow {
                        model: self.model.clone(),
                        message: format!("{name} = {v} outside [0, 1]"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Correlation of one metric with the human column; `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

impl Correlation {
    fn between(x: &[f64], y: &[f64]) -> Self {
        Self {
            n: x.len(),
            pearson: pearson(x, y).ok().flatten(),
            spearman: spearman(x, y).ok().flatten(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub pair_level: BTreeMap<Metric, Correlation>,
    #[serde(default)]
    pub model_level: BTreeMap<Metric, Correlation>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn model_level(rows: &[ReportRow]) -> BTreeMap<Metric, Correlation> {
    Metric::ALL
        .into_iter()
        .map(|metric| {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| Some((r.metric(metric)?, r.human_rate?)))
                .unzip();
            (metric, Correlation::between(&x, &y))
        })
        .collect()
}

impl EvaluationReport {
    /// Report from precomputed rows; only model-level correlations.
    pub fn from_rows(rows: Vec<ReportRow>) -> Result<Self, ReportError> {
        for row in &rows {
            row.validate()?;
        }
        Ok(Self {
            model_level: model_level(&rows),
            rows,
            pair_level: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let report: Self = serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))?;
        for row in &report.rows {
            row.validate()?;
        }
        Ok(report)
    }
}

/// Builds the report from scored records and aggregated labels, joined on
/// record id. A pipeline's human rate is over all its scored records, with
/// unlabelled ones counting as not correct.
pub fn build_report(records: &[CandidateRecord], labels: &[AggregatedLabel]) -> EvaluationReport {
    let correct: HashMap<&str, bool> = labels
        .iter()
        .map(|l| (l.pair_id.as_str(), l.high_confidence_correct))
        .collect();

    let mut by_pipeline: BTreeMap<PipelineId, Vec<&CandidateRecord>> = BTreeMap::new();
    for r in records {
        by_pipeline.entry(r.pipeline).or_default();
        if r.scores.is_some() {
            by_pipeline.entry(r.pipeline).or_default().push(r);
        }
    }

    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    for (pipeline, scored) in by_pipeline {
        if scored.is_empty() {
            let message = format!("pipeline {pipeline} has no scored pairs; row omitted");
            log::warn!("{message}");
            warnings.push(message);
            continue;
        }
        let mean_of = |metric: Metric| {
            let values: Vec<f64> = scored.iter().filter_map(|r| metric.get(r.scores.as_ref()?)).collect();
            (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
        };
        let hits = scored
            .iter()
            .filter(|r| correct.get(r.id()).copied().unwrap_or(false))
            .count();
        rows.push(ReportRow {
            model: pipeline.display_name().to_string(),
            pipeline: Some(pipeline),
            n_pairs: scored.len(),
            bleu_mean: mean_of(Metric::Bleu),
            meteor_mean: mean_of(Metric::Meteor),
            cosine_mean: mean_of(Metric::Cosine),
            human_rate: Some(hits as f64 / scored.len() as f64),
        });
    }

    let pair_level = Metric::ALL
        .into_iter()
        .map(|metric| {
            let (x, y): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter_map(|r| {
                    let value = metric.get(r.scores.as_ref()?)?;
                    let label = *correct.get(r.id())?;
                    Some((value, if label { 1.0 } else { 0.0 }))
                })
                .unzip();
            (metric, Correlation::between(&x, &y))
        })
        .collect();

    EvaluationReport {
        model_level: model_level(&rows),
        rows,
        pair_level,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Format::Markdown),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn render(report: &EvaluationReport, format: Format) -> String {
    match format {
        Format::Markdown => render_markdown(report),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => render_csv(report),
    }
}

fn column_max(rows: &[ReportRow], cell: impl Fn(&ReportRow) -> Option<f64>) -> Option<f64> {
    rows.iter().filter_map(cell).reduce(f64::max)
}

fn render_markdown(report: &EvaluationReport) -> String {
    type Cell = fn(&ReportRow) -> Option<f64>;
    let columns: [Cell; 4] = [|r| r.bleu_mean, |r| r.meteor_mean, |r| r.cosine_mean, |r| r.human_rate];
    let maxima: Vec<Option<f64>> = columns.iter().map(|c| column_max(&report.rows, c)).collect();

    let mut out = String::new();
    out.push_str("| Model | BLEU | METEOR | cosine similarity | human labels |\n");
    out.push_str("|---|---|---|---|---|\n");
    for row in &report.rows {
        out.push_str("| ");
        out.push_str(&row.model.replace('|', "\\|"));
        for (cell, max) in columns.iter().zip(&maxima) {
            let text = match cell(row) {
                Some(v) if Some(v) == *max => format!("**{v:.2}**"),
                Some(v) => format!("{v:.2}"),
                None => "-".to_string(),
            };
            let _ = write!(out, " | {text}");
        }
        out.push_str(" |\n");
    }

    let corr = |c: Option<f64>| c.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"));
    for (title, table) in [("Model-level", &report.model_level), ("Pair-level", &report.pair_level)] {
        if table.is_empty() {
            continue;
        }
        let _ = write!(out, "\n{title} correlation with human labels:\n\n");
        out.push_str("| Metric | n | Pearson | Spearman |\n");
        out.push_str("|---|---|---|---|\n");
        for (metric, c) in table {
            let _ = writeln!(out, "| {metric} | {} | {} | {} |", c.n, corr(c.pearson), corr(c.spearman));
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(report: &EvaluationReport) -> String {
    let num = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("model,pipeline,n_pairs,bleu_mean,meteor_mean,cosine_mean,human_rate\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&r.model),
            r.pipeline.map(|p| p.as_str()).unwrap_or(""),
            r.n_pairs,
            num(r.bleu_mean),
            num(r.meteor_mean),
            num(r.cosine_mean),
            num(r.human_rate),
        );
    }
    out
}

/// The four pipeline rows of the published results table.
pub fn table1_rows() -> Vec<ReportRow> {
    let row = |pipeline: PipelineId, bleu, meteor, cosine, human| ReportRow {
        model: pipeline.display_name().to_string(),
        pipeline: Some(pipeline),
        n_pairs: 200,
        bleu_mean: Some(bleu),
        meteor_mean: Some(meteor),
        cosine_mean: Some(cosine),
        human_rate: Some(human),
    };
    vec![
        row(PipelineId::M1, 0.04, 0.25, 0.70, 0.37),
        row(PipelineId::M2, 0.05, 0.28, 0.60, 0.42),
        row(PipelineId::M3, 0.20, 0.31, 0.96, 0.31),
        row(PipelineId::M4, 0.34, 0.63, 0.83, 0.23),
    ]
}
