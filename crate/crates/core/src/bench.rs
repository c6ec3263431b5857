//! Benchmark harness: scores predictions per task and domain and renders
//! table-shaped reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::shifted_mean;
use crate::error::{Error, Result};
use crate::format::parse;
use crate::metrics::{self, AdLabel, TextMetricConfig, VariableAnnotation, VC_CATEGORIES};
use crate::model::{AgentResponse, LogSample, SubTask};
use crate::policy::{PolicyClient, PolicyRequest};

/// Row order for domains that appear in the log-parsing benchmark.
pub const DOMAIN_ORDER: [&str; 7] = [
    "HDFS",
    "Hadoop",
    "Zookeeper",
    "BGL",
    "HPC",
    "Linux",
    "Proxifier",
];

pub const AVG_DOMAIN: &str = "Avg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: SubTask,
    pub domain: String,
    pub n: usize,
    pub metrics: BTreeMap<String, f64>,
}

/// Metric aggregates per (task, domain). Rates are in [0, 1]; BLEU/ROUGE in [0, 100].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

/// Columns (metric key, header) shown for each task.
pub fn columns(task: SubTask) -> Vec<(&'static str, &'static str)> {
    match task {
        SubTask::Lp => vec![("rand_index", "RI"), ("variable_f1", "F1")],
        SubTask::Ad => vec![("precision", "Pre"), ("recall", "Rec"), ("f1", "F1")],
        SubTask::Li | SubTask::Rc | SubTask::Sr => {
            vec![
                ("bleu", "BLEU"),
                ("rouge1", "R-1"),
                ("rouge2", "R-2"),
                ("rougeL", "R-L"),
            ]
        }
        SubTask::Vc => VC_CATEGORIES.iter().map(|c| (*c, *c)).collect(),
    }
}

fn domain_rank(domain: &str) -> (usize, String) {
    let pos = if domain == AVG_DOMAIN {
        DOMAIN_ORDER.len() + 1
    } else {
        DOMAIN_ORDER
            .iter()
            .position(|d| *d == domain)
            .unwrap_or(DOMAIN_ORDER.len())
    };
    (pos, domain.to_string())
}

/// Variable-category annotations read from a `CATEGORY: value` per line (or `;`) answer.
///
/// Positions are the value plus its occurrence index, so repeated values stay distinct.
pub fn parse_vc_annotations(log_id: &str, answer: &str) -> Vec<VariableAnnotation> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    answer
        .split(['\n', ';'])
        .filter_map(|entry| entry.split_once(':'))
        .filter_map(|(cat, value)| {
            let value = value.trim();
            let cat = cat.trim().to_ascii_uppercase();
            (!value.is_empty() && !cat.is_empty()).then(|| {
                let k = seen.entry(value.to_string()).or_insert(0);
                *k += 1;
                VariableAnnotation {
                    log_id: log_id.to_string(),
                    position: format!("{value}#{}", *k - 1),
                    category: cat,
                }
            })
        })
        .collect()
}

fn normalize_template(t: &str) -> String {
    t.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Per-sample metrics as stored in a prediction dump.
pub fn sample_metrics(
    sample: &LogSample,
    answer: &str,
    text: &TextMetricConfig,
) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    match sample.task {
        SubTask::Lp => {
            let a = metrics::variable_f1_log_anchored(&sample.log, &sample.answer, answer);
            m.insert("variable_f1".into(), a.f1);
            m.insert("aligned".into(), f64::from(u8::from(a.pred_aligned)));
            m.insert(
                "exact".into(),
                f64::from(u8::from(
                    normalize_template(answer) == normalize_template(&sample.answer),
                )),
            );
        }
        SubTask::Ad => {
            let ok = AdLabel::parse(answer, true) == AdLabel::parse(&sample.answer, true);
            m.insert("correct".into(), f64::from(u8::from(ok)));
        }
        SubTask::Li | SubTask::Rc | SubTask::Sr => {
            m.insert("bleu".into(), metrics::bleu(&sample.answer, answer, text));
            m.insert(
                "rouge1".into(),
                metrics::rouge_n(&sample.answer, answer, 1, text),
            );
            m.insert(
                "rouge2".into(),
                metrics::rouge_n(&sample.answer, answer, 2, text),
            );
            m.insert(
                "rougeL".into(),
                metrics::rouge_l(&sample.answer, answer, text),
            );
        }
        SubTask::Vc => {
            m.insert(
                "annotations".into(),
                parse_vc_annotations(&sample.id, answer).len() as f64,
            );
        }
    }
    m
}

fn answer_of(r: &AgentResponse) -> &str {
    if r.format_valid {
        r.answer.as_deref().unwrap_or("")
    } else {
        ""
    }
}

fn domain_metrics(
    task: SubTask,
    items: &[(&LogSample, &str, &BTreeMap<String, f64>)],
) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    let mean_of =
        |key: &str| shifted_mean(&items.iter().map(|(_, _, s)| s[key]).collect::<Vec<_>>());
    match task {
        SubTask::Lp => {
            if items.len() >= 2 {
                let gold: Vec<String> = items
                    .iter()
                    .map(|(s, _, _)| normalize_template(&s.answer))
                    .collect();
                let pred: Vec<String> = items
                    .iter()
                    .map(|(_, a, _)| normalize_template(a))
                    .collect();
                m.insert("rand_index".into(), metrics::rand_index(&gold, &pred)?);
            }
            m.insert("variable_f1".into(), mean_of("variable_f1"));
        }
        SubTask::Ad => {
            let gold: Vec<AdLabel> = items
                .iter()
                .map(|(s, _, _)| AdLabel::parse(&s.answer, true))
                .collect();
            let pred: Vec<AdLabel> = items
                .iter()
                .map(|(_, a, _)| AdLabel::parse(a, true))
                .collect();
            let (p, r, f) = metrics::binary_prf(&gold, &pred)?;
            m.insert("precision".into(), p);
            m.insert("recall".into(), r);
            m.insert("f1".into(), f);
        }
        SubTask::Li | SubTask::Rc | SubTask::Sr => {
            for key in ["bleu", "rouge1", "rouge2", "rougeL"] {
                m.insert(key.into(), mean_of(key));
            }
        }
        SubTask::Vc => {
            let gold: Vec<_> = items
                .iter()
                .flat_map(|(s, _, _)| parse_vc_annotations(&s.id, &s.answer))
                .collect();
            let pred: Vec<_> = items
                .iter()
                .flat_map(|(s, a, _)| parse_vc_annotations(&s.id, a))
                .collect();
            // Categories absent from both sides have no defined F1 and are left out.
            let present: Vec<&str> = VC_CATEGORIES
                .iter()
                .copied()
                .filter(|c| gold.iter().chain(&pred).any(|a| a.category == *c))
                .collect();
            m.extend(metrics::category_f1(&gold, &pred, &present));
        }
    }
    Ok(m)
}

/// Scores predictions against samples of any mix of tasks.
///
/// Invalid-format predictions are scored as empty answers. Rows come out
/// ordered by task, then by the standard domain order, with an `Avg` row per
/// task when it spans more than one domain.
pub fn evaluate(
    samples: &[&LogSample],
    predictions: &[AgentResponse],
    text: &TextMetricConfig,
) -> Result<EvalReport> {
    if samples.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            left: samples.len(),
            right: predictions.len(),
        });
    }
    let per_sample: Vec<BTreeMap<String, f64>> = samples
        .par_iter()
        .zip(predictions.par_iter())
        .map(|(s, p)| sample_metrics(s, answer_of(p), text))
        .collect();
    aggregate(samples, predictions, &per_sample)
}

fn aggregate(
    samples: &[&LogSample],
    predictions: &[AgentResponse],
    per_sample: &[BTreeMap<String, f64>],
) -> Result<EvalReport> {
    let mut groups: BTreeMap<SubTask, BTreeMap<(usize, String), Vec<usize>>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups
            .entry(s.task)
            .or_default()
            .entry(domain_rank(&s.domain))
            .or_default()
            .push(i);
    }
    let mut rows = Vec::new();
    for (task, domains) in groups {
        let mut task_rows = Vec::new();
        for ((_, domain), idx) in domains {
            let items: Vec<_> = idx
                .iter()
                .map(|&i| (samples[i], answer_of(&predictions[i]), &per_sample[i]))
                .collect();
            task_rows.push(ReportRow {
                task,
                domain,
                n: idx.len(),
                metrics: domain_metrics(task, &items)?,
            });
        }
        if task_rows.len() > 1 {
            let mut avg = BTreeMap::new();
            for (key, _) in columns(task) {
                let vals: Vec<f64> = task_rows
                    .iter()
                    .filter_map(|r| r.metrics.get(key).copied())
                    .collect();
                if !vals.is_empty() {
                    avg.insert(key.to_string(), shifted_mean(&vals));
                }
            }
            let n = task_rows.iter().map(|r| r.n).sum();
            task_rows.push(ReportRow {
                task,
                domain: AVG_DOMAIN.into(),
                n,
                metrics: avg,
            });
        }
        rows.extend(task_rows);
    }
    Ok(EvalReport { rows })
}

/// One line of a prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub sample_id: String,
    pub raw: String,
    pub answer: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

/// Re-scores a prediction dump; equal to the report produced alongside it.
pub fn evaluate_dump(
    samples: &[LogSample],
    dump: &[DumpRecord],
    text: &TextMetricConfig,
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &LogSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let picked: Vec<&LogSample> = dump
        .iter()
        .enumerate()
        .map(|(i, d)| {
            by_id
                .get(d.sample_id.as_str())
                .copied()
                .ok_or_else(|| Error::at(i, Error::UnknownSample(d.sample_id.clone())))
        })
        .collect::<Result<_>>()?;
    let preds: Vec<AgentResponse> = dump.iter().map(|d| parse(&d.raw)).collect();
    evaluate(&picked, &preds, text)
}

pub struct BenchRun {
    pub report: EvalReport,
    pub dump: Vec<DumpRecord>,
}

impl BenchRun {
    pub fn transport_failures(&self) -> usize {
        self.dump
            .iter()
            .filter(|d| d.transport_error.is_some())
            .count()
    }
}

/// Queries the policy for every sample of the selected tasks and scores the answers.
///
/// Transport failures are kept in the dump and scored as empty predictions.
pub fn run_benchmark(
    policy: &PolicyClient,
    samples: &[LogSample],
    tasks: Option<&[SubTask]>,
    parallelism: usize,
    text: &TextMetricConfig,
) -> Result<BenchRun> {
    let picked: Vec<&LogSample> = samples
        .iter()
        .filter(|s| tasks.is_none_or(|t| t.contains(&s.task)))
        .collect();
    let prompts: Vec<String> = picked.iter().map(|s| s.prompt()).collect();
    let reqs: Vec<PolicyRequest<'_>> = picked
        .iter()
        .zip(&prompts)
        .map(|(s, p)| PolicyRequest {
            prompt: p,
            sample: Some(s),
        })
        .collect();
    let outs = policy.complete_batch(&reqs, 1, parallelism);
    let mut preds = Vec::with_capacity(picked.len());
    let mut errors = Vec::with_capacity(picked.len());
    for (s, out) in picked.iter().zip(outs) {
        match out {
            Ok(c) => {
                preds.push(parse(&c.texts.into_iter().next().unwrap_or_default()));
                errors.push(None);
            }
            Err(e) if e.is_transport() => {
                log::warn!("sample {}: {e}", s.id);
                preds.push(parse(""));
                errors.push(Some(e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let per_sample: Vec<BTreeMap<String, f64>> = picked
        .par_iter()
        .zip(preds.par_iter())
        .map(|(s, p)| sample_metrics(s, answer_of(p), text))
        .collect();
    let report = aggregate(&picked, &preds, &per_sample)?;
    let dump = picked
        .iter()
        .zip(preds)
        .zip(per_sample)
        .zip(errors)
        .map(|(((s, p), metrics), transport_error)| DumpRecord {
            sample_id: s.id.clone(),
            answer: p.format_valid.then(|| p.answer.clone()).flatten(),
            raw: p.raw,
            metrics,
            transport_error,
        })
        .collect();
    Ok(BenchRun { report, dump })
}

pub const DUMP_FILE: &str = "predictions.jsonl";
pub const REPORT_JSON_FILE: &str = "report.json";

pub fn report_file_name(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Markdown => "report.md",
        ReportFormat::Csv => "report.csv",
        ReportFormat::Json => REPORT_JSON_FILE,
    }
}

/// Runs the benchmark and writes the dump, `report.json` and the rendered report into `out_dir`.
pub fn evaluate_endpoint(
    policy: &PolicyClient,
    samples: &[LogSample],
    tasks: Option<&[SubTask]>,
    parallelism: usize,
    text: &TextMetricConfig,
    out_dir: &Path,
    format: ReportFormat,
) -> Result<BenchRun> {
    let run = run_benchmark(policy, samples, tasks, parallelism, text)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let dump_path = out_dir.join(DUMP_FILE);
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(&dump_path).map_err(|e| Error::io(&dump_path, e))?,
    );
    for d in &run.dump {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(|e| Error::io(&dump_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&dump_path, e))?;
    for f in [ReportFormat::Json, format] {
        let path = out_dir.join(report_file_name(f));
        std::fs::write(&path, render_report(&run.report, f)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(run)
}

pub fn read_dump(path: &Path) -> Result<Vec<DumpRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn fmt_metric(key: &str, v: f64) -> String {
    if matches!(key, "bleu" | "rouge1" | "rouge2" | "rougeL") {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn render_markdown(report: &EvalReport) -> String {
    let mut tasks: Vec<SubTask> = report.rows.iter().map(|r| r.task).collect();
    tasks.dedup();
    if tasks.is_empty() {
        tasks = SubTask::ALL.to_vec();
    }
    let mut out = String::new();
    for task in tasks {
        let cols = columns(task);
        let _ = writeln!(out, "### {task}\n");
        let _ = writeln!(
            out,
            "| Domain | {} |",
            cols.iter().map(|c| c.1).collect::<Vec<_>>().join(" | ")
        );
        let _ = writeln!(out, "|---|{}", "---|".repeat(cols.len()));
        for row in report.rows.iter().filter(|r| r.task == task) {
            let cells: Vec<String> = cols
                .iter()
                .map(|(k, _)| {
                    row.metrics
                        .get(*k)
                        .map(|v| fmt_metric(k, *v))
                        .unwrap_or_else(|| "-".into())
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", row.domain, cells.join(" | "));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvLine {
    task: SubTask,
    domain: String,
    n: usize,
    metric: String,
    value: f64,
}

fn render_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if report.rows.is_empty() {
        w.write_record(["task", "domain", "n", "metric", "value"])?;
    }
    for row in &report.rows {
        for (metric, value) in &row.metrics {
            w.serialize(CsvLine {
                task: row.task,
                domain: row.domain.clone(),
                n: row.n,
                metric: metric.clone(),
                value: *value,
            })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads the long-format CSV written by [`render_report`].
pub fn parse_csv_report(text: &str) -> Result<EvalReport> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows: Vec<ReportRow> = Vec::new();
    for line in rdr.deserialize::<CsvLine>() {
        let line = line?;
        match rows.last_mut() {
            Some(r) if r.task == line.task && r.domain == line.domain => {
                r.metrics.insert(line.metric, line.value);
            }
            _ => rows.push(ReportRow {
                task: line.task,
                domain: line.domain,
                n: line.n,
                metrics: BTreeMap::from([(line.metric, line.value)]),
            }),
        }
    }
    Ok(EvalReport { rows })
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Markdown => Ok(render_markdown(report)),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
    }
}
