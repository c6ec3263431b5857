//! The multi-task O&M environment: draws incidents from a dataset, presents
//! `instruction \n log` states, scores responses and records episodes.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::parse;
use crate::model::{
    load_dataset, sha256_hex, AgentResponse, EpisodeRecord, LogSample, RewardBreakdown, Split,
    SubTask,
};
use crate::policy::{PolicyClient, PolicyRequest};
use crate::reward::{grpo_advantages, reward, RewardConfig, DEFAULT_ADVANTAGE_EPSILON};

/// How incidents are drawn across sub-tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMix {
    /// Every eligible sample equally likely, so tasks follow dataset composition.
    #[default]
    Proportional,
    /// Task first (uniformly over tasks present), then a sample within it.
    Uniform,
    Single(SubTask),
}

impl std::str::FromStr for TaskMix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proportional" => Ok(TaskMix::Proportional),
            "uniform" => Ok(TaskMix::Uniform),
            other => other
                .parse::<SubTask>()
                .map(TaskMix::Single)
                .map_err(|_| Error::Config(format!("unknown task mix `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub dataset: PathBuf,
    pub split: Option<Split>,
    pub task_mix: TaskMix,
    pub seed: u64,
    pub group_size: usize,
    pub reward: RewardConfig,
    /// Keep the prompt text in episode records (off by default).
    pub log_prompts: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            split: None,
            task_mix: TaskMix::Proportional,
            seed: 0,
            group_size: 8,
            reward: RewardConfig::default(),
            log_prompts: false,
        }
    }
}

/// A state handed to the agent. Only valid for the environment that issued it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    env_id: u64,
    pub state_id: u64,
    sample_index: usize,
    pub prompt: String,
}

/// Rewards and advantages of one rollout group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub n: usize,
    pub mean_reward: f64,
    pub format_failure_rate: f64,
}

/// Aggregates over an episode log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: usize,
    pub mean_reward: f64,
    pub per_task: BTreeMap<SubTask, TaskSummary>,
    /// Share of episodes where the model's own text failed the format gate.
    pub format_failure_rate: f64,
    /// Share of episodes where no text arrived from the policy.
    pub transport_failure_rate: f64,
}

impl RunSummary {
    pub fn from_episodes(episodes: &[EpisodeRecord]) -> Self {
        #[derive(Default)]
        struct Acc {
            n: usize,
            rewards: Vec<f64>,
            format_failures: usize,
        }
        let mut all = Acc::default();
        let mut transport = 0usize;
        let mut per_task: BTreeMap<SubTask, Acc> = BTreeMap::new();
        for e in episodes {
            let format_failure = e.reward.delta_f == 0 && e.transport_error.is_none();
            transport += usize::from(e.transport_error.is_some());
            for acc in [&mut all, per_task.entry(e.reward.task).or_default()] {
                acc.n += 1;
                acc.rewards.push(e.reward.total);
                acc.format_failures += usize::from(format_failure);
            }
        }
        let rate = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        RunSummary {
            n: all.n,
            mean_reward: shifted_mean(&all.rewards),
            per_task: per_task
                .into_iter()
                .map(|(t, a)| {
                    (
                        t,
                        TaskSummary {
                            n: a.n,
                            mean_reward: shifted_mean(&a.rewards),
                            format_failure_rate: rate(a.format_failures, a.n),
                        },
                    )
                })
                .collect(),
            format_failure_rate: rate(all.format_failures, all.n),
            transport_failure_rate: rate(transport, all.n),
        }
    }
}

/// Mean taken relative to the first value, so a constant series is reproduced exactly.
pub fn shifted_mean(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return 0.0;
    };
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

static NEXT_ENV_ID: AtomicU64 = AtomicU64::new(1);

pub struct Environment {
    env_id: u64,
    cfg: EnvConfig,
    samples: Vec<LogSample>,
    /// Eligible sample indices per task, in dataset order.
    by_task: BTreeMap<SubTask, Vec<usize>>,
    pool: Vec<usize>,
    rng: ChaCha8Rng,
    next_state: u64,
    outstanding: HashMap<u64, usize>,
    episodes: Vec<EpisodeRecord>,
}

impl Environment {
    /// Loads the dataset named in `cfg` and starts a fresh sample stream.
    pub fn reset(cfg: EnvConfig) -> Result<Self> {
        let samples = load_dataset(&cfg.dataset, None)?;
        Self::from_samples(samples, cfg)
    }

    pub fn from_samples(samples: Vec<LogSample>, cfg: EnvConfig) -> Result<Self> {
        cfg.reward.validate()?;
        if cfg.group_size == 0 {
            return Err(Error::Config("group size must be at least 1".into()));
        }
        let mut by_task: BTreeMap<SubTask, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            let eligible = s.task != SubTask::Vc
                && cfg.split.is_none_or(|sp| sp == s.split)
                && match cfg.task_mix {
                    TaskMix::Single(t) => s.task == t,
                    _ => true,
                };
            if eligible {
                by_task.entry(s.task).or_default().push(i);
            }
        }
        let pool: Vec<usize> = {
            let mut p: Vec<usize> = by_task.values().flatten().copied().collect();
            p.sort_unstable();
            p
        };
        if pool.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "no trainable samples match split {:?} and mix {:?}",
                cfg.split, cfg.task_mix
            )));
        }
        Ok(Self {
            env_id: NEXT_ENV_ID.fetch_add(1, Ordering::Relaxed),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            samples,
            by_task,
            pool,
            next_state: 0,
            outstanding: HashMap::new(),
            episodes: Vec::new(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn samples(&self) -> &[LogSample] {
        &self.samples
    }

    pub fn sample(&self, state: &EnvState) -> &LogSample {
        &self.samples[state.sample_index]
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    fn draw(&mut self) -> usize {
        match self.cfg.task_mix {
            TaskMix::Proportional | TaskMix::Single(_) => {
                *self.pool.choose(&mut self.rng).expect("pool is non-empty")
            }
            TaskMix::Uniform => {
                let t = self.rng.gen_range(0..self.by_task.len());
                let bucket = self.by_task.values().nth(t).expect("index in range");
                *bucket.choose(&mut self.rng).expect("buckets are non-empty")
            }
        }
    }

    pub fn next_state(&mut self) -> EnvState {
        let idx = self.draw();
        let state_id = self.next_state;
        self.next_state += 1;
        self.outstanding.insert(state_id, idx);
        EnvState {
            env_id: self.env_id,
            state_id,
            sample_index: idx,
            prompt: self.samples[idx].prompt(),
        }
    }

    fn check(&self, state: &EnvState) -> Result<()> {
        if state.env_id != self.env_id
            || self.outstanding.get(&state.state_id) != Some(&state.sample_index)
        {
            return Err(Error::StaleState(state.state_id));
        }
        Ok(())
    }

    fn record(
        &mut self,
        state: &EnvState,
        response: AgentResponse,
        group_id: Option<u64>,
        transport_error: Option<String>,
    ) -> Result<(RewardBreakdown, EpisodeRecord)> {
        let sample = &self.samples[state.sample_index];
        let r = reward(sample, &response, &self.cfg.reward)?;
        let rec = EpisodeRecord {
            episode: self.episodes.len() as u64,
            sample_id: sample.id.clone(),
            state: self.cfg.log_prompts.then(|| state.prompt.clone()),
            state_sha256: sha256_hex(&state.prompt),
            response,
            reward: r,
            group_id,
            transport_error,
        };
        self.episodes.push(rec.clone());
        Ok((r, rec))
    }

    /// Scores one response and consumes the state.
    pub fn step(
        &mut self,
        state: &EnvState,
        raw_response: &str,
    ) -> Result<(RewardBreakdown, EpisodeRecord)> {
        self.check(state)?;
        self.outstanding.remove(&state.state_id);
        self.record(state, parse(raw_response), None, None)
    }

    /// Records an episode whose policy produced no text; scored as a format failure.
    pub fn step_transport_failure(
        &mut self,
        state: &EnvState,
        error: &str,
    ) -> Result<(RewardBreakdown, EpisodeRecord)> {
        self.check(state)?;
        self.outstanding.remove(&state.state_id);
        self.record(state, parse(""), None, Some(error.to_string()))
    }

    /// Scores `group_size` responses to the same state and returns their advantages.
    ///
    /// The state stays outstanding; each response is logged with the state id as group id.
    pub fn rollout_group(
        &mut self,
        state: &EnvState,
        raw_responses: &[String],
    ) -> Result<GroupOutcome> {
        self.check(state)?;
        if raw_responses.len() != self.cfg.group_size {
            return Err(Error::GroupSize {
                expected: self.cfg.group_size,
                got: raw_responses.len(),
            });
        }
        let mut rewards = Vec::with_capacity(raw_responses.len());
        for raw in raw_responses {
            let (r, _) = self.record(state, parse(raw), Some(state.state_id), None)?;
            rewards.push(r.total);
        }
        let advantages = if rewards.len() < 2 {
            vec![0.0; rewards.len()]
        } else {
            grpo_advantages(&rewards, DEFAULT_ADVANTAGE_EPSILON)?
        };
        Ok(GroupOutcome {
            rewards,
            advantages,
        })
    }

    /// Plays `n` single-response episodes against `policy`.
    ///
    /// States are drawn up front so the stream does not depend on completion
    /// timing; generation runs with bounded parallelism and episodes are
    /// recorded in draw order.
    pub fn run_episodes(
        &mut self,
        policy: &PolicyClient,
        n: usize,
        parallelism: usize,
    ) -> Result<RunSummary> {
        let start = self.episodes.len();
        let states: Vec<EnvState> = (0..n).map(|_| self.next_state()).collect();
        let reqs: Vec<PolicyRequest<'_>> = states
            .iter()
            .map(|s| PolicyRequest {
                prompt: &s.prompt,
                sample: Some(&self.samples[s.sample_index]),
            })
            .collect();
        let completions = policy.complete_batch(&reqs, 1, parallelism);
        for (state, out) in states.iter().zip(completions) {
            match out {
                Ok(c) => {
                    let text = c.texts.into_iter().next().unwrap_or_default();
                    self.step(state, &text)?;
                }
                Err(e) if e.is_transport() => {
                    log::warn!(
                        "episode for sample {}: {e}",
                        self.samples[state.sample_index].id
                    );
                    self.step_transport_failure(state, &e.to_string())?;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(RunSummary::from_episodes(&self.episodes[start..]))
    }
}

pub fn write_episode_log<W: Write>(mut w: W, episodes: &[EpisodeRecord]) -> std::io::Result<()> {
    for e in episodes {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episode_log(path: &Path) -> Result<Vec<EpisodeRecord>> {
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

/// Re-scores every logged response against the dataset.
pub fn replay(
    samples: &[LogSample],
    episodes: &[EpisodeRecord],
    cfg: &RewardConfig,
) -> Result<Vec<RewardBreakdown>> {
    let by_id: HashMap<&str, &LogSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    episodes
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let s = by_id
                .get(e.sample_id.as_str())
                .ok_or_else(|| Error::at(i, Error::UnknownSample(e.sample_id.clone())))?;
            reward(s, &parse(&e.response.raw), cfg).map_err(|err| Error::at(i, err))
        })
        .collect()
}
