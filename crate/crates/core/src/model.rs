//! Domain types shared across the crate, plus dataset and template I/O.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// The log-analysis sub-tasks. `Vc` is evaluation-only and never rewarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubTask {
    /// Log parsing.
    Lp,
    /// Anomaly detection.
    Ad,
    /// Log interpretation.
    Li,
    /// Root cause analysis.
    Rc,
    /// Solution recommendation.
    Sr,
    /// Variable classification (held out from training).
    Vc,
}

impl SubTask {
    pub const ALL: [SubTask; 6] = [
        SubTask::Lp,
        SubTask::Ad,
        SubTask::Li,
        SubTask::Rc,
        SubTask::Sr,
        SubTask::Vc,
    ];

    pub const TRAINABLE: [SubTask; 5] = [
        SubTask::Lp,
        SubTask::Ad,
        SubTask::Li,
        SubTask::Rc,
        SubTask::Sr,
    ];

    /// Index used by the reward's case analysis (1..=5). `None` for `Vc`.
    pub fn reward_index(self) -> Option<u8> {
        match self {
            SubTask::Lp => Some(1),
            SubTask::Ad => Some(2),
            SubTask::Li => Some(3),
            SubTask::Rc => Some(4),
            SubTask::Sr => Some(5),
            SubTask::Vc => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SubTask::Lp => "lp",
            SubTask::Ad => "ad",
            SubTask::Li => "li",
            SubTask::Rc => "rc",
            SubTask::Sr => "sr",
            SubTask::Vc => "vc",
        }
    }

    /// Interpretation, root cause and solution tasks share free-text scoring.
    pub fn is_free_text(self) -> bool {
        matches!(self, SubTask::Li | SubTask::Rc | SubTask::Sr)
    }
}

impl fmt::Display for SubTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label().to_ascii_uppercase())
    }
}

impl FromStr for SubTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lp" => Ok(SubTask::Lp),
            "ad" => Ok(SubTask::Ad),
            "li" => Ok(SubTask::Li),
            "rc" => Ok(SubTask::Rc),
            "sr" => Ok(SubTask::Sr),
            "vc" => Ok(SubTask::Vc),
            _ => Err(Error::UnknownTask(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// One instruction/log/answer record, optionally carrying a reasoning trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSample {
    pub id: String,
    pub task: SubTask,
    pub domain: String,
    pub instruction: String,
    pub log: String,
    pub answer: String,
    pub reasoning: Option<String>,
    pub template_id: Option<String>,
    pub split: Split,
}

/// Separator between instruction and log in a prompt.
pub const PROMPT_SEPARATOR: &str = "\n";

impl LogSample {
    /// The state text presented to an agent: instruction, newline, log.
    pub fn prompt(&self) -> String {
        let mut s = String::with_capacity(self.instruction.len() + self.log.len() + 1);
        s.push_str(&self.instruction);
        s.push_str(PROMPT_SEPARATOR);
        s.push_str(&self.log);
        s
    }

    /// Checks the record invariants, returning the offending field name and a message.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.id.trim().is_empty() {
            return Err(("id", "must be non-empty".into()));
        }
        if self.log.trim().is_empty() {
            return Err(("log", "must be non-empty".into()));
        }
        if self.answer.trim().is_empty() {
            return Err(("answer", "must be non-empty".into()));
        }
        if let Some(r) = &self.reasoning {
            if r.trim().is_empty() {
                return Err(("reasoning", "must be null or non-empty".into()));
            }
        }
        if self.template_id.is_some() && self.reasoning.is_none() {
            return Err(("reasoning", "template_id set but reasoning missing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateStyle {
    Conceptual,
    Procedural,
}

/// A step-wise human analysis strategy for one sub-task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTemplate {
    pub id: String,
    pub task: SubTask,
    pub style: TemplateStyle,
    pub steps: Vec<String>,
}

impl ReasoningTemplate {
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Template {
            id: self.id.clone(),
            message,
        };
        if self.steps.is_empty() {
            return Err(fail("steps must be non-empty".into()));
        }
        for (i, step) in self.steps.iter().enumerate() {
            let want = format!("Step {}:", i + 1);
            if !step.trim_start().starts_with(&want) {
                return Err(fail(format!("step {} must start with `{want}`", i + 1)));
            }
        }
        if self.task == SubTask::Vc {
            return Err(fail(
                "variable classification has no reasoning templates".into(),
            ));
        }
        Ok(())
    }

    /// Steps joined one per line, as inserted into a generation prompt.
    pub fn guidance(&self) -> String {
        self.steps.join("\n")
    }
}

/// Loads every `*.json` template file in `dir` (sorted by file name).
///
/// Each file holds either one template object or an array of them. Every
/// trainable task must end up with at least one conceptual and one
/// procedural template.
pub fn load_templates(dir: &Path) -> Result<Vec<ReasoningTemplate>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();

    let mut out = Vec::new();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let value: Value = serde_json::from_str(&text)?;
        let items = match value {
            Value::Array(items) => items,
            other => vec![other],
        };
        for item in items {
            let t: ReasoningTemplate = serde_json::from_value(item)?;
            t.validate()?;
            out.push(t);
        }
    }
    check_template_coverage(&out)?;
    Ok(out)
}

pub fn check_template_coverage(templates: &[ReasoningTemplate]) -> Result<()> {
    for task in SubTask::TRAINABLE {
        for style in [TemplateStyle::Conceptual, TemplateStyle::Procedural] {
            if !templates.iter().any(|t| t.task == task && t.style == style) {
                return Err(Error::Template {
                    id: format!("<{task}>"),
                    message: format!("task {task} lacks a {style:?} template"),
                });
            }
        }
    }
    Ok(())
}

/// Parsed model output together with the format-validity flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub raw: String,
    pub reasoning: Option<String>,
    pub answer: Option<String>,
    pub format_valid: bool,
}

/// Scalar reward with its per-term decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub task: SubTask,
    pub delta_f: u8,
    pub omega_f: f64,
    /// Only set for log parsing.
    pub delta_v: Option<u8>,
    pub task_term: f64,
    pub total: f64,
}

/// One environment interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub sample_id: String,
    /// The prompt text, only kept when prompt logging is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    /// SHA-256 of the prompt text, always present.
    pub state_sha256: String,
    pub response: AgentResponse,
    pub reward: RewardBreakdown,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

pub fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn field_str(obj: &Map<String, Value>, name: &str) -> std::result::Result<String, String> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err("expected a string".into()),
        None => Err("missing".into()),
    }
}

fn field_opt_str(
    obj: &Map<String, Value>,
    name: &str,
) -> std::result::Result<Option<String>, String> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err("expected a string or null".into()),
    }
}

fn parse_record(line: &str) -> std::result::Result<LogSample, (String, String)> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| ("<line>".to_string(), e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(("<line>".into(), "expected a JSON object".into()));
    };
    let get = |name: &str| field_str(&obj, name).map_err(|m| (name.to_string(), m));
    let get_opt = |name: &str| field_opt_str(&obj, name).map_err(|m| (name.to_string(), m));

    let task_label = get("task")?;
    let task = task_label.parse::<SubTask>().map_err(|_| {
        (
            "task".to_string(),
            format!("unknown task label `{task_label}`"),
        )
    })?;
    let split_label = get("split")?;
    let split = split_label.parse::<Split>().map_err(|_| {
        (
            "split".to_string(),
            format!("unknown split `{split_label}`"),
        )
    })?;

    let sample = LogSample {
        id: get("id")?,
        task,
        domain: get("domain")?,
        instruction: get("instruction")?,
        log: get("log")?,
        answer: get("answer")?,
        reasoning: get_opt("reasoning")?,
        template_id: get_opt("template_id")?,
        split,
    };
    sample
        .check()
        .map_err(|(field, msg)| (field.to_string(), msg))?;
    Ok(sample)
}

/// Reads a JSONL dataset, validating each record. Blank lines are skipped.
pub fn load_dataset(path: &Path, expected_split: Option<Split>) -> Result<Vec<LogSample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |field: String, message: String| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            field,
            message,
        };
        let sample = parse_record(&line).map_err(|(f, m)| record_err(f, m))?;
        if let Some(want) = expected_split {
            if sample.split != want {
                return Err(record_err(
                    "split".into(),
                    format!("expected {want:?}, found {:?}", sample.split),
                ));
            }
        }
        out.push(sample);
    }
    Ok(out)
}

/// Writes samples as JSONL in the same schema `load_dataset` reads.
pub fn write_dataset<W: Write>(mut w: W, samples: &[LogSample]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset(path: &Path, samples: &[LogSample]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset(&mut w, samples).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub task: SubTask,
    pub domain: String,
    pub count: usize,
    pub mean_reasoning_tokens: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub per_task: BTreeMap<SubTask, usize>,
    pub groups: Vec<GroupStats>,
    pub with_reasoning: usize,
    pub mean_reasoning_tokens: Option<f64>,
}

#[derive(Default)]
struct Acc {
    count: usize,
    reasoned: usize,
    tokens: usize,
}

impl Acc {
    fn add(&mut self, s: &LogSample) {
        self.count += 1;
        if let Some(r) = &s.reasoning {
            self.reasoned += 1;
            self.tokens += whitespace_tokens(r);
        }
    }

    fn mean(&self) -> Option<f64> {
        (self.reasoned > 0).then(|| self.tokens as f64 / self.reasoned as f64)
    }
}

/// Counts per task and per (task, domain), and mean whitespace-token length of reasoning.
pub fn dataset_stats(samples: &[LogSample]) -> DatasetStats {
    let mut all = Acc::default();
    let mut per_task = BTreeMap::new();
    let mut groups: BTreeMap<(SubTask, &str), Acc> = BTreeMap::new();
    for s in samples {
        all.add(s);
        *per_task.entry(s.task).or_insert(0) += 1;
        groups
            .entry((s.task, s.domain.as_str()))
            .or_default()
            .add(s);
    }
    DatasetStats {
        total: all.count,
        per_task,
        groups: groups
            .into_iter()
            .map(|((task, domain), acc)| GroupStats {
                task,
                domain: domain.to_string(),
                count: acc.count,
                mean_reasoning_tokens: acc.mean(),
            })
            .collect(),
        with_reasoning: all.reasoned,
        mean_reasoning_tokens: all.mean(),
    }
}
