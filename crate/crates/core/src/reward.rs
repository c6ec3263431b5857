//! The joint reward and group-relative advantages.
//!
//! A response that fails the format gate receives `-20 * omega_f`. Otherwise
//! it earns `omega_f` plus a task term in `[0, 1]`:
//!
//! * log parsing: variable F1 when the gold template has a `<*>`, otherwise
//!   normalized edit-distance similarity of the templates;
//! * anomaly detection: 1 when the answer is exactly `normal`/`abnormal` and
//!   matches the gold label;
//! * interpretation, root cause, solution: `(BLEU + ROUGE-1 + ROUGE-2 + ROUGE-L) / 400`.
//!
//! The reasoning block never contributes to the reward.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, AdLabel, TextMetricConfig, PLACEHOLDER};
use crate::model::{AgentResponse, LogSample, RewardBreakdown, SubTask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub omega_f: f64,
    pub text: TextMetricConfig,
    pub ad_case_insensitive: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            omega_f: 0.1,
            text: TextMetricConfig::default(),
            ad_case_insensitive: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_f > 0.0 && self.omega_f.is_finite()) {
            return Err(Error::Config(format!(
                "omega_f must be positive, got {}",
                self.omega_f
            )));
        }
        Ok(())
    }

    /// Reward given to a response that fails the format gate.
    pub fn format_penalty(&self) -> f64 {
        -20.0 * self.omega_f
    }
}

pub fn reward(
    sample: &LogSample,
    response: &AgentResponse,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    if sample.task == SubTask::Vc {
        return Err(Error::EvalOnlyTask(SubTask::Vc));
    }
    let gold = sample.answer.as_str();
    let has_vars = gold.contains(PLACEHOLDER);
    let delta_v = (sample.task == SubTask::Lp).then_some(u8::from(has_vars));

    let answer = match (&response.answer, response.format_valid) {
        (Some(a), true) => a.as_str(),
        _ => {
            return Ok(RewardBreakdown {
                task: sample.task,
                delta_f: 0,
                omega_f: cfg.omega_f,
                delta_v,
                task_term: 0.0,
                total: cfg.format_penalty(),
            })
        }
    };

    let task_term = match sample.task {
        SubTask::Lp if has_vars => metrics::variable_f1_templates(gold, answer),
        SubTask::Lp => metrics::normalized_template_similarity(gold, answer),
        SubTask::Ad => {
            let pred = AdLabel::parse(answer, cfg.ad_case_insensitive);
            let want = AdLabel::parse(gold, cfg.ad_case_insensitive);
            if pred != AdLabel::Invalid && pred == want {
                1.0
            } else {
                0.0
            }
        }
        SubTask::Li | SubTask::Rc | SubTask::Sr => {
            let t = &cfg.text;
            let sum = metrics::bleu(gold, answer, t)
                + metrics::rouge_n(gold, answer, 1, t)
                + metrics::rouge_n(gold, answer, 2, t)
                + metrics::rouge_l(gold, answer, t);
            sum / 400.0
        }
        SubTask::Vc => unreachable!(),
    }
    .clamp(0.0, 1.0);

    Ok(RewardBreakdown {
        task: sample.task,
        delta_f: 1,
        omega_f: cfg.omega_f,
        delta_v,
        task_term,
        total: cfg.omega_f + task_term,
    })
}

/// Scores pairs in parallel; the output order always matches the input.
///
/// `parallelism` of 0 or 1 runs on the calling thread.
pub fn reward_batch(
    samples: &[&LogSample],
    responses: &[AgentResponse],
    cfg: &RewardConfig,
    parallelism: usize,
) -> Result<Vec<RewardBreakdown>> {
    if samples.len() != responses.len() {
        return Err(Error::LengthMismatch {
            left: samples.len(),
            right: responses.len(),
        });
    }
    let score = |(i, (s, r)): (usize, (&&LogSample, &AgentResponse))| {
        reward(s, r, cfg).map_err(|e| Error::at(i, e))
    };
    if parallelism <= 1 {
        return samples
            .iter()
            .zip(responses)
            .enumerate()
            .map(score)
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    // collect keeps order; pick the lowest failing index so the error is stable
    let results: Vec<Result<RewardBreakdown>> = pool.install(|| {
        samples
            .par_iter()
            .zip(responses.par_iter())
            .enumerate()
            .map(score)
            .collect()
    });
    results.into_iter().collect()
}

/// Group-relative advantages: rewards standardized by the group's mean and
/// population standard deviation.
///
/// The deviation is floored at `epsilon`; a group whose rewards are all equal
/// gets exact zeros.
pub fn grpo_advantages(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::TooFew {
            min: 2,
            got: rewards.len(),
        });
    }
    let (lo, hi) = rewards
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(r), hi.max(r))
        });
    if hi - lo == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt().max(epsilon);
    Ok(rewards.iter().map(|r| (r - mean) / scale).collect())
}

pub const DEFAULT_ADVANTAGE_EPSILON: f64 = 1e-8;

/// Rewards of one rollout group and their advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageGroup {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub epsilon: f64,
}

impl AdvantageGroup {
    pub fn new(rewards: Vec<f64>, epsilon: f64) -> Result<Self> {
        let advantages = grpo_advantages(&rewards, epsilon)?;
        Ok(Self {
            rewards,
            advantages,
            epsilon,
        })
    }
}

/// One line of a reward audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardAudit {
    pub sample_id: String,
    pub task: SubTask,
    pub delta_f: u8,
    pub delta_v: Option<u8>,
    pub task_term: f64,
    pub total: f64,
}

impl RewardAudit {
    pub fn new(sample_id: &str, r: &RewardBreakdown) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            task: r.task,
            delta_f: r.delta_f,
            delta_v: r.delta_v,
            task_term: r.task_term,
            total: r.total,
        }
    }
}
