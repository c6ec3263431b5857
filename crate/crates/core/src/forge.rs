//! Builds reasoning datasets: each (log, answer) pair is paired with a random
//! reasoning template of its task, an LLM writes the analyst's monologue from
//! log to answer, and validated monologues become SFT targets.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{find_tag, wrap, BlockOrder};
use crate::model::{LogSample, ReasoningTemplate, SubTask};
use crate::policy::{PolicyClient, PolicyRequest};

const DEFAULT_PROMPTS: &str = include_str!("../assets/prompts.toml");

pub const SLOT_TEMPLATE: &str = "{Reasoning Template}";
pub const SLOT_LOG: &str = "{Log X}";
pub const SLOT_LABEL: &str = "{Label Y}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PromptEntry {
    prompt: String,
}

/// Generation prompt wording per task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTable {
    prompts: BTreeMap<SubTask, String>,
}

impl Default for PromptTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_PROMPTS).expect("bundled prompt table parses")
    }
}

impl PromptTable {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, PromptEntry> =
            toml::from_str(text).map_err(|e| Error::Config(format!("prompt table: {e}")))?;
        Self::from_entries(raw)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_entries(serde_json::from_str(text)?)
    }

    /// Reads a `.toml` or `.json` wording table.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    fn from_entries(raw: BTreeMap<String, PromptEntry>) -> Result<Self> {
        let mut prompts = BTreeMap::new();
        for (key, entry) in raw {
            let task: SubTask = key.parse()?;
            for slot in [SLOT_TEMPLATE, SLOT_LOG, SLOT_LABEL] {
                if !entry.prompt.contains(slot) {
                    return Err(Error::Config(format!("prompt for {task} lacks {slot}")));
                }
            }
            prompts.insert(task, entry.prompt);
        }
        Ok(Self { prompts })
    }

    pub fn get(&self, task: SubTask) -> Option<&str> {
        self.prompts.get(&task).map(String::as_str)
    }
}

fn slot_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{(Reasoning Template|Log X|Label Y)\}").unwrap())
}

/// Fills the task's prompt with the template guidance, the log and the label.
///
/// Substitution is single-pass, so slot-like text inside the log is left alone.
pub fn assemble_prompt(
    table: &PromptTable,
    template: &ReasoningTemplate,
    sample: &LogSample,
) -> Result<String> {
    if template.task != sample.task {
        return Err(Error::TaskMismatch {
            template: template.task,
            sample: sample.task,
        });
    }
    let text = table
        .get(sample.task)
        .ok_or_else(|| Error::Config(format!("no prompt wording for task {}", sample.task)))?;
    let guidance = template.guidance();
    Ok(slot_regex()
        .replace_all(text, |c: &regex::Captures<'_>| match &c[1] {
            "Reasoning Template" => guidance.clone(),
            "Log X" => sample.log.clone(),
            _ => sample.answer.clone(),
        })
        .into_owned())
}

/// Conclusion cues that, followed by the gold label early on, reveal the answer.
pub const LEAKAGE_CUES: [&str; 5] = [
    "the label is",
    "the answer is",
    "answer:",
    "label:",
    "conclusion:",
];

/// Number of leading tokens inspected for an anomaly label leak.
pub const LEAK_WINDOW_TOKENS: usize = 15;

/// Longest allowed overlap between the opening quarter and a long answer,
/// relative to the shorter of the two.
pub const LEAK_OVERLAP_RATIO: f64 = 0.6;

pub const MIN_STEPS: usize = 2;
pub const MIN_TOKENS: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validation {
    pub passed: bool,
    pub reasons: Vec<String>,
}

fn step_count(text: &str) -> usize {
    static STEP: OnceLock<Regex> = OnceLock::new();
    static NUMBERED: OnceLock<Regex> = OnceLock::new();
    let step = STEP.get_or_init(|| Regex::new(r"(?i)\bstep\s*\d+").unwrap());
    let numbered = NUMBERED.get_or_init(|| Regex::new(r"(?m)^\s*\d+[.)]\s").unwrap());
    step.find_iter(text)
        .count()
        .max(numbered.find_iter(text).count())
}

fn longest_common_substring(a: &[char], b: &[char]) -> usize {
    let mut best = 0;
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { 0 };
            best = best.max(row[j + 1]);
            diag = up;
        }
    }
    best
}

fn normalized(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn leaks_label(reasoning: &str, label: &str) -> bool {
    let window = normalized(
        &reasoning
            .split_whitespace()
            .take(LEAK_WINDOW_TOKENS)
            .collect::<Vec<_>>()
            .join(" "),
    );
    let label = normalized(label);
    LEAKAGE_CUES.iter().any(|cue| {
        window.match_indices(cue).any(|(i, _)| {
            let after = window[i + cue.len()..].trim_start();
            after.strip_prefix(label.as_str()).is_some_and(|rest| {
                // whole word only: "normal" must not match the start of "normality"
                !rest.starts_with(|c: char| c.is_alphanumeric())
            })
        })
    })
}

fn leaks_answer_text(reasoning: &str, answer: &str) -> bool {
    let tokens: Vec<&str> = reasoning.split_whitespace().collect();
    let quarter = tokens.len().div_ceil(4);
    let head: Vec<char> = normalized(&tokens[..quarter].join(" ")).chars().collect();
    let answer: Vec<char> = normalized(answer).chars().collect();
    let shorter = head.len().min(answer.len());
    if shorter == 0 {
        return false;
    }
    longest_common_substring(&head, &answer) as f64 >= LEAK_OVERLAP_RATIO * shorter as f64
}

/// Checks a generated monologue before it is accepted into the dataset.
pub fn validate_trajectory(reasoning: &str, sample: &LogSample, leakage_check: bool) -> Validation {
    if reasoning.trim().is_empty() {
        return Validation {
            passed: false,
            reasons: vec!["empty_reasoning".into()],
        };
    }
    let mut reasons = Vec::new();
    if step_count(reasoning) < MIN_STEPS && reasoning.split_whitespace().count() < MIN_TOKENS {
        reasons.push("too_short".to_string());
    }
    if find_tag(reasoning).is_some() {
        reasons.push("contains_tags".to_string());
    }
    if leakage_check {
        let leaked = match sample.task {
            SubTask::Ad => leaks_label(reasoning, &sample.answer),
            t if t.is_free_text() => leaks_answer_text(reasoning, &sample.answer),
            _ => false,
        };
        if leaked {
            reasons.push("leakage".to_string());
        }
    }
    Validation {
        passed: reasons.is_empty(),
        reasons,
    }
}

#[derive(Debug, Clone)]
pub struct ForgeJob {
    pub sources: Vec<LogSample>,
    pub templates: Vec<ReasoningTemplate>,
    pub prompts: PromptTable,
    pub seed: u64,
    pub order: BlockOrder,
    pub leakage_check: bool,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub sample_id: String,
    /// Templates tried, in order.
    pub template_ids: Vec<String>,
    /// Reasons from the last attempt.
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeReport {
    pub total: usize,
    pub accepted: usize,
    /// Accepted only after a second template draw.
    pub accepted_on_retry: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgeOutcome {
    /// Accepted records in source order, reasoning and template id filled in.
    pub accepted: Vec<LogSample>,
    pub report: ForgeReport,
}

impl ForgeJob {
    fn templates_by_task(&self) -> Result<HashMap<SubTask, Vec<&ReasoningTemplate>>> {
        let mut by_task: HashMap<SubTask, Vec<&ReasoningTemplate>> = HashMap::new();
        for t in &self.templates {
            by_task.entry(t.task).or_default().push(t);
        }
        for s in &self.sources {
            if !by_task.contains_key(&s.task) {
                return Err(Error::NoTemplates(s.task));
            }
        }
        Ok(by_task)
    }
}

/// Generates one trajectory per (source, template) pair and validates it.
fn attempt(
    job: &ForgeJob,
    policy: &PolicyClient,
    items: &[(usize, &ReasoningTemplate)],
) -> Result<Vec<std::result::Result<String, Vec<String>>>> {
    let prompts: Vec<String> = items
        .iter()
        .map(|(i, t)| assemble_prompt(&job.prompts, t, &job.sources[*i]))
        .collect::<Result<_>>()?;
    let reqs: Vec<PolicyRequest<'_>> = items
        .iter()
        .zip(&prompts)
        .map(|((i, _), p)| PolicyRequest {
            prompt: p,
            sample: Some(&job.sources[*i]),
        })
        .collect();
    let outs = policy.complete_batch(&reqs, 1, job.parallelism);
    items
        .iter()
        .zip(outs)
        .map(|((i, _), out)| match out {
            Ok(c) => {
                let text = c
                    .texts
                    .into_iter()
                    .next()
                    .unwrap_or_default()
                    .trim()
                    .to_string();
                let v = validate_trajectory(&text, &job.sources[*i], job.leakage_check);
                Ok(if v.passed { Ok(text) } else { Err(v.reasons) })
            }
            Err(e) if e.is_transport() => Ok(Err(vec!["transport".to_string()])),
            Err(e) => Err(e),
        })
        .collect()
}

/// Instantiates reasoning for every source sample.
///
/// Templates are drawn uniformly per task from a seeded stream in source
/// order. A sample that fails is retried once with a fresh draw.
pub fn instantiate(job: &ForgeJob, policy: &PolicyClient) -> Result<ForgeOutcome> {
    let by_task = job.templates_by_task()?;
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let mut draw = |task: SubTask| {
        let pool = &by_task[&task];
        pool[rng.gen_range(0..pool.len())]
    };

    let first: Vec<(usize, &ReasoningTemplate)> = job
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| (i, draw(s.task)))
        .collect();
    let mut results: Vec<(
        Vec<&ReasoningTemplate>,
        std::result::Result<String, Vec<String>>,
    )> = first
        .iter()
        .zip(attempt(job, policy, &first)?)
        .map(|((_, t), r)| (vec![*t], r))
        .collect();

    let retry: Vec<(usize, &ReasoningTemplate)> = results
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| r.is_err())
        .map(|(i, _)| (i, draw(job.sources[i].task)))
        .collect();
    let mut accepted_on_retry = 0;
    if !retry.is_empty() {
        log::info!(
            "retrying {} rejected samples with a new template",
            retry.len()
        );
        for ((i, t), r) in retry.iter().zip(attempt(job, policy, &retry)?) {
            accepted_on_retry += usize::from(r.is_ok());
            results[*i].0.push(t);
            results[*i].1 = r;
        }
    }

    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (src, (tried, r)) in job.sources.iter().zip(results) {
        match r {
            Ok(reasoning) => accepted.push(LogSample {
                reasoning: Some(reasoning),
                template_id: Some(tried.last().expect("one draw at least").id.clone()),
                ..src.clone()
            }),
            Err(reasons) => rejected.push(Rejection {
                sample_id: src.id.clone(),
                template_ids: tried.iter().map(|t| t.id.clone()).collect(),
                reasons,
            }),
        }
    }
    Ok(ForgeOutcome {
        report: ForgeReport {
            total: job.sources.len(),
            accepted: accepted.len(),
            accepted_on_retry,
            rejected,
        },
        accepted,
    })
}

/// One supervised training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub input: String,
    pub target: String,
}

pub fn sft_record(sample: &LogSample, order: BlockOrder) -> Result<SftRecord> {
    let reasoning = sample
        .reasoning
        .as_deref()
        .ok_or_else(|| Error::MissingReasoning(sample.id.clone()))?;
    Ok(SftRecord {
        input: sample.prompt(),
        target: wrap(reasoning, &sample.answer, order)
            .map_err(|e| Error::Config(format!("record `{}`: {e}", sample.id)))?,
    })
}

/// Writes SFT JSONL; fails before writing anything if a record lacks reasoning.
pub fn emit_sft<W: Write>(mut w: W, records: &[LogSample], order: BlockOrder) -> Result<usize> {
    let lines: Vec<SftRecord> = records
        .iter()
        .map(|r| sft_record(r, order))
        .collect::<Result<_>>()?;
    for line in &lines {
        serde_json::to_writer(&mut w, line)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io("<sft output>", e))?;
    }
    Ok(lines.len())
}
