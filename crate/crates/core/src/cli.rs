//! Command-line front end. `run` parses arguments, dispatches, and maps
//! failures to exit codes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{self, ReportFormat};
use crate::env::{write_episode_log, EnvConfig, Environment, TaskMix};
use crate::error::{Error, Result};
use crate::forge::{self, ForgeJob, PromptTable};
use crate::format::{parse, BlockOrder};
use crate::model::{
    dataset_stats, load_dataset, load_templates, save_dataset, LogSample, Split, SubTask,
};
use crate::policy::{EndpointClient, EndpointConfig, PolicyClient, DEFAULT_TOKEN_ENV};
use crate::reward::{
    grpo_advantages, reward, RewardAudit, RewardConfig, DEFAULT_ADVANTAGE_EPSILON,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "logreason",
    version,
    about = "Reward engine, RL environment, reasoning-dataset builder and benchmark for multi-task log analysis"
)]
pub struct Cli {
    /// TOML file with run settings; explicit flags take precedence over it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random draw [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Format weight ω_f; invalid format scores -20·ω_f [default: 0.1]
    #[arg(long = "omega-f", global = true)]
    pub omega_f: Option<f64>,
    /// Maximum concurrent endpoint requests / scoring threads [default: number of CPUs]
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// More log output on stderr (-v info, -vv debug) [default: warnings only]
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or check the reasoning dataset
    #[command(subcommand)]
    Forge(ForgeCmd),
    /// Score responses with the joint reward
    #[command(subcommand)]
    Score(ScoreCmd),
    /// Run episodes in the O&M environment
    #[command(subcommand)]
    Env(EnvCmd),
    /// Group-relative advantage computation
    #[command(subcommand)]
    Grpo(GrpoCmd),
    /// Benchmark a policy on the test tasks
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Inspect datasets
    #[command(subcommand)]
    Dataset(DatasetCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyKind {
    /// Gold answer wrapped with canned reasoning
    Oracle,
    /// Oracle with answers corrupted at rate --noise
    NoisyOracle,
    /// Untagged output that always fails the format gate
    Malformed,
    /// Always returns --fixed-text
    Fixed,
    /// Chat-completions endpoint given by --endpoint
    Endpoint,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    ThinkFirst,
    AnswerFirst,
}

impl From<OrderArg> for BlockOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::ThinkFirst => BlockOrder::ThinkFirst,
            OrderArg::AnswerFirst => BlockOrder::AnswerFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Policy to query [default: endpoint when --endpoint is set]
    #[arg(long, value_enum)]
    pub policy: Option<PolicyKind>,
    /// Corruption probability for noisy-oracle [default: 0.2]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Response text for the fixed policy [default: empty]
    #[arg(long, value_name = "TEXT")]
    pub fixed_text: Option<String>,
    /// Base URL of a chat-completions endpoint
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint [default: default]
    #[arg(long)]
    pub model: Option<String>,
    /// Per-request timeout in seconds [default: 60]
    #[arg(long = "timeout-s")]
    pub timeout_s: Option<f64>,
    /// Retries after a failed request [default: 3]
    #[arg(long)]
    pub retries: Option<u32>,
    /// Sampling temperature [default: 0.7]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Environment variable holding the bearer token [default: LOGREASON_API_KEY]
    #[arg(long, value_name = "VAR")]
    pub token_env: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ForgeCmd {
    /// Generate reasoning for source samples and emit dataset + SFT files
    Build {
        /// Directory of reasoning-template JSON files
        #[arg(long, value_name = "DIR")]
        templates: PathBuf,
        /// Source dataset JSONL (reasoning may be empty)
        #[arg(long, value_name = "FILE")]
        source: PathBuf,
        /// Block order of SFT targets
        #[arg(long, value_enum, default_value = "think-first")]
        order: OrderArg,
        /// Reject trajectories that leak the label early
        #[arg(long)]
        leakage_check: bool,
        /// Per-task prompt wording table, TOML or JSON [default: built-in]
        #[arg(long, value_name = "FILE")]
        prompts: Option<PathBuf>,
        /// Output directory for dataset.jsonl, sft.jsonl and forge_report.json
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Check templates and the reasoning of an existing dataset
    Validate {
        /// Directory of reasoning-template JSON files
        #[arg(long, value_name = "DIR")]
        templates: Option<PathBuf>,
        /// Dataset JSONL whose reasoning is checked
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// Apply the leakage heuristics
        #[arg(long)]
        leakage_check: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScoreCmd {
    /// Score JSONL lines {"sample_id", "raw"} and print reward audits as JSONL
    Reward {
        /// Dataset JSONL holding the gold answers
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// Responses file [default: stdin]
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Output file [default: stdout]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Compare anomaly labels case-sensitively
        #[arg(long)]
        ad_case_sensitive: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum EnvCmd {
    /// Play single-response episodes and write the episode log and run summary
    Run {
        /// Dataset JSONL
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// Required split of every record [default: any]
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Number of episodes
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// proportional, uniform, or a single task (lp, ad, li, rc, sr)
        #[arg(long, default_value = "proportional")]
        task_mix: String,
        /// Episode log JSONL [default: not written]
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
        /// Keep prompt text in the episode log instead of only its hash
        #[arg(long)]
        log_prompts: bool,
        /// Run summary JSON [default: stdout]
        #[arg(long, value_name = "FILE")]
        summary: Option<PathBuf>,
        #[command(flatten)]
        policy: PolicyArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum GrpoCmd {
    /// Read one reward group per line (whitespace or comma separated) and print advantages
    Advantages {
        /// Input file [default: stdin]
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Floor for the group standard deviation
        #[arg(long, default_value_t = DEFAULT_ADVANTAGE_EPSILON)]
        epsilon: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Evaluate a policy (or re-score a prediction dump) and render the report
    Eval {
        /// Dataset JSONL
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// Comma-separated tasks to evaluate [default: all in the dataset]
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<String>>,
        /// Re-score this prediction dump instead of querying a policy
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
        /// Directory for predictions.jsonl and reports [default: report to stdout only]
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Report format
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[command(flatten)]
        policy: PolicyArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Print sample counts and mean reasoning lengths as JSON
    Stats {
        /// Dataset JSONL
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
    },
}

/// Settings accepted in the `--config` file. All optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub omega_f: Option<f64>,
    pub parallelism: Option<usize>,
    pub ad_case_insensitive: Option<bool>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_s: Option<f64>,
    pub retries: Option<u32>,
    pub temperature: Option<f64>,
    pub token_env: Option<String>,
    pub backoff_ms: Option<u64>,
    pub noise: Option<f64>,
}

struct Ctx {
    file: FileConfig,
    seed: u64,
    parallelism: usize,
    reward: RewardConfig,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::AtIndex { source, .. } => exit_code(source),
        e if e.is_transport() => EXIT_TRANSPORT,
        _ => EXIT_DATA,
    }
}

/// Runs the tool and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn context(cli: &Cli) -> Result<Ctx> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let reward = RewardConfig {
        omega_f: cli.omega_f.or(file.omega_f).unwrap_or(0.1),
        ad_case_insensitive: file.ad_case_insensitive.unwrap_or(true),
        ..RewardConfig::default()
    };
    reward.validate()?;
    let parallelism = cli
        .parallelism
        .or(file.parallelism)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if parallelism == 0 {
        return Err(usage("--parallelism must be at least 1"));
    }
    Ok(Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        parallelism,
        reward,
        file,
    })
}

fn build_policy(args: &PolicyArgs, ctx: &Ctx) -> Result<PolicyClient> {
    let endpoint = args.endpoint.clone().or_else(|| ctx.file.endpoint.clone());
    let kind = match (args.policy, &endpoint) {
        (Some(k), _) => k,
        (None, Some(_)) => PolicyKind::Endpoint,
        (None, None) => return Err(usage("choose a policy with --policy or --endpoint")),
    };
    let policy = match kind {
        PolicyKind::Oracle => PolicyClient::Oracle,
        PolicyKind::NoisyOracle => PolicyClient::NoisyOracle {
            p: args.noise.or(ctx.file.noise).unwrap_or(0.2),
            seed: ctx.seed,
        },
        PolicyKind::Malformed => PolicyClient::Malformed,
        PolicyKind::Fixed => PolicyClient::Fixed(args.fixed_text.clone().unwrap_or_default()),
        PolicyKind::Endpoint => {
            let url = endpoint.ok_or_else(|| usage("--policy endpoint needs --endpoint URL"))?;
            let defaults = EndpointConfig::default();
            let timeout_s = args.timeout_s.or(ctx.file.timeout_s).unwrap_or(60.0);
            if !(timeout_s > 0.0 && timeout_s.is_finite()) {
                return Err(usage("--timeout-s must be positive"));
            }
            PolicyClient::Endpoint(EndpointClient::new(EndpointConfig {
                url,
                model: args
                    .model
                    .clone()
                    .or_else(|| ctx.file.model.clone())
                    .unwrap_or(defaults.model),
                token_env: args
                    .token_env
                    .clone()
                    .or_else(|| ctx.file.token_env.clone())
                    .unwrap_or_else(|| DEFAULT_TOKEN_ENV.into()),
                timeout: Duration::from_secs_f64(timeout_s),
                max_retries: args
                    .retries
                    .or(ctx.file.retries)
                    .unwrap_or(defaults.max_retries),
                temperature: args
                    .temperature
                    .or(ctx.file.temperature)
                    .unwrap_or(defaults.temperature),
                backoff_base: ctx
                    .file
                    .backoff_ms
                    .map_or(defaults.backoff_base, Duration::from_millis),
            })?)
        }
    };
    policy.validate()?;
    Ok(policy)
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) => Box::new(io::BufReader::new(
            File::open(p).map_err(|e| Error::io(p, e))?,
        )),
        None => Box::new(io::BufReader::new(io::stdin())),
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::io(p, e))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn dispatch(cli: Cli) -> Result<i32> {
    let ctx = context(&cli)?;
    match cli.command {
        Command::Forge(ForgeCmd::Build {
            templates,
            source,
            order,
            leakage_check,
            prompts,
            out,
            policy,
        }) => forge_build(
            &ctx,
            &templates,
            &source,
            order.into(),
            leakage_check,
            prompts.as_deref(),
            &out,
            &policy,
        ),
        Command::Forge(ForgeCmd::Validate {
            templates,
            dataset,
            leakage_check,
        }) => forge_validate(templates.as_deref(), dataset.as_deref(), leakage_check),
        Command::Score(ScoreCmd::Reward {
            dataset,
            input,
            out,
            ad_case_sensitive,
        }) => {
            let mut cfg = ctx.reward;
            if ad_case_sensitive {
                cfg.ad_case_insensitive = false;
            }
            score_reward(&cfg, &dataset, input.as_deref(), out.as_deref())
        }
        Command::Env(EnvCmd::Run {
            dataset,
            split,
            n,
            task_mix,
            log,
            log_prompts,
            summary,
            policy,
        }) => {
            let cfg = EnvConfig {
                dataset,
                split: split.map(Split::from),
                task_mix: task_mix.parse::<TaskMix>()?,
                seed: ctx.seed,
                reward: ctx.reward,
                log_prompts,
                ..EnvConfig::default()
            };
            env_run(&ctx, cfg, n, log.as_deref(), summary.as_deref(), &policy)
        }
        Command::Grpo(GrpoCmd::Advantages { input, epsilon }) => grpo(input.as_deref(), epsilon),
        Command::Bench(BenchCmd::Eval {
            dataset,
            tasks,
            replay,
            out,
            format,
            policy,
        }) => bench_eval(
            &ctx,
            &dataset,
            tasks,
            replay.as_deref(),
            out.as_deref(),
            format.into(),
            &policy,
        ),
        Command::Dataset(DatasetCmd::Stats { dataset }) => {
            let samples = load_dataset(&dataset, None)?;
            print!("{}", to_json(&dataset_stats(&samples))?);
            Ok(EXIT_OK)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn forge_build(
    ctx: &Ctx,
    templates: &Path,
    source: &Path,
    order: BlockOrder,
    leakage_check: bool,
    prompts: Option<&Path>,
    out: &Path,
    policy: &PolicyArgs,
) -> Result<i32> {
    let job = ForgeJob {
        sources: load_dataset(source, None)?,
        templates: load_templates(templates)?,
        prompts: match prompts {
            Some(p) => PromptTable::load(p)?,
            None => PromptTable::default(),
        },
        seed: ctx.seed,
        order,
        leakage_check,
        parallelism: ctx.parallelism,
    };
    let policy = build_policy(policy, ctx)?;
    let outcome = forge::instantiate(&job, &policy)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_dataset(&out.join("dataset.jsonl"), &outcome.accepted)?;
    let sft_path = out.join("sft.jsonl");
    let mut sft = BufWriter::new(File::create(&sft_path).map_err(|e| Error::io(&sft_path, e))?);
    forge::emit_sft(&mut sft, &outcome.accepted, order)?;
    sft.flush().map_err(|e| Error::io(&sft_path, e))?;
    let report = to_json(&outcome.report)?;
    write_file(&out.join("forge_report.json"), report.as_bytes())?;
    print!("{report}");

    let r = &outcome.report;
    let all_transport = r.total > 0
        && r.accepted == 0
        && r.rejected
            .iter()
            .all(|x| x.reasons.iter().any(|s| s == "transport"));
    Ok(if all_transport {
        EXIT_TRANSPORT
    } else {
        EXIT_OK
    })
}

#[derive(Serialize)]
struct ValidationLine<'a> {
    sample_id: &'a str,
    reasons: Vec<String>,
}

fn forge_validate(
    templates: Option<&Path>,
    dataset: Option<&Path>,
    leakage_check: bool,
) -> Result<i32> {
    if templates.is_none() && dataset.is_none() {
        return Err(usage("give --templates and/or --dataset"));
    }
    if let Some(dir) = templates {
        let t = load_templates(dir)?;
        eprintln!("{} templates ok", t.len());
    }
    let mut failed = 0;
    if let Some(path) = dataset {
        let samples = load_dataset(path, None)?;
        let mut out = BufWriter::new(io::stdout());
        for s in &samples {
            let reasons = match &s.reasoning {
                None => vec!["missing_reasoning".to_string()],
                Some(r) => forge::validate_trajectory(r, s, leakage_check).reasons,
            };
            if !reasons.is_empty() {
                failed += 1;
                serde_json::to_writer(
                    &mut out,
                    &ValidationLine {
                        sample_id: &s.id,
                        reasons,
                    },
                )?;
                writeln!(out).map_err(|e| Error::io("<stdout>", e))?;
            }
        }
        out.flush().map_err(|e| Error::io("<stdout>", e))?;
        eprintln!(
            "{} of {} records pass",
            samples.len() - failed,
            samples.len()
        );
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_DATA })
}

#[derive(Deserialize)]
struct ResponseLine {
    sample_id: String,
    raw: String,
}

fn score_reward(
    cfg: &RewardConfig,
    dataset: &Path,
    input: Option<&Path>,
    out: Option<&Path>,
) -> Result<i32> {
    let samples = load_dataset(dataset, None)?;
    let by_id: HashMap<&str, &LogSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let reader = open_input(input)?;
    let mut w = open_output(out)?;
    let out_name = out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(input.unwrap_or(Path::new("<stdin>")), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ResponseLine = serde_json::from_str(&line).map_err(|e| Error::at(i, e.into()))?;
        let sample = by_id
            .get(r.sample_id.as_str())
            .ok_or_else(|| Error::at(i, Error::UnknownSample(r.sample_id.clone())))?;
        let b = reward(sample, &parse(&r.raw), cfg).map_err(|e| Error::at(i, e))?;
        serde_json::to_writer(&mut w, &RewardAudit::new(&r.sample_id, &b))?;
        writeln!(w).map_err(|e| Error::io(&out_name, e))?;
    }
    w.flush().map_err(|e| Error::io(&out_name, e))?;
    Ok(EXIT_OK)
}

fn env_run(
    ctx: &Ctx,
    cfg: EnvConfig,
    n: usize,
    log: Option<&Path>,
    summary: Option<&Path>,
    policy: &PolicyArgs,
) -> Result<i32> {
    let policy = build_policy(policy, ctx)?;
    let mut env = Environment::reset(cfg)?;
    let s = env.run_episodes(&policy, n, ctx.parallelism)?;
    if let Some(path) = log {
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        write_episode_log(&mut w, env.episodes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let text = to_json(&s)?;
    match summary {
        Some(path) => write_file(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(if s.n > 0 && s.transport_failure_rate == 1.0 {
        EXIT_TRANSPORT
    } else {
        EXIT_OK
    })
}

/// Formats each advantage with an explicit sign, e.g. `+1.0 -1.0`.
pub fn format_advantages(adv: &[f64]) -> String {
    adv.iter()
        .map(|a| format!("{a:+?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn grpo(input: Option<&Path>, epsilon: f64) -> Result<i32> {
    let mut text = String::new();
    open_input(input)?
        .read_to_string(&mut text)
        .map_err(|e| Error::io(input.unwrap_or(Path::new("<stdin>")), e))?;
    let mut out = BufWriter::new(io::stdout());
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rewards: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::at(i, Error::Config(format!("not a finite number: `{t}`")))
                    })
            })
            .collect::<Result<_>>()
            .map_err(|e| match e {
                Error::AtIndex { index, source } => Error::Record {
                    path: PathBuf::from(
                        input.map_or("<stdin>".into(), |p| p.display().to_string()),
                    ),
                    line: index + 1,
                    field: "reward".into(),
                    message: source.to_string(),
                },
                other => other,
            })?;
        let adv = grpo_advantages(&rewards, epsilon).map_err(|e| Error::at(i, e))?;
        writeln!(out, "{}", format_advantages(&adv)).map_err(|e| Error::io("<stdout>", e))?;
    }
    out.flush().map_err(|e| Error::io("<stdout>", e))?;
    Ok(EXIT_OK)
}

fn bench_eval(
    ctx: &Ctx,
    dataset: &Path,
    tasks: Option<Vec<String>>,
    replay: Option<&Path>,
    out: Option<&Path>,
    format: ReportFormat,
    policy: &PolicyArgs,
) -> Result<i32> {
    let samples = load_dataset(dataset, None)?;
    let tasks: Option<Vec<SubTask>> = tasks
        .map(|t| {
            t.iter()
                .map(|s| {
                    s.trim()
                        .parse::<SubTask>()
                        .map_err(|_| usage(format!("unknown task `{s}`")))
                })
                .collect::<Result<_>>()
        })
        .transpose()?;
    let text = ctx.reward.text;

    if let Some(dump_path) = replay {
        let dump: Vec<_> = bench::read_dump(dump_path)?
            .into_iter()
            .filter(|d| {
                tasks.as_ref().is_none_or(|t| {
                    samples
                        .iter()
                        .any(|s| s.id == d.sample_id && t.contains(&s.task))
                })
            })
            .collect();
        let report = bench::evaluate_dump(&samples, &dump, &text)?;
        let rendered = bench::render_report(&report, format)?;
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_file(
                &dir.join(bench::report_file_name(format)),
                rendered.as_bytes(),
            )?;
        }
        print!("{rendered}");
        return Ok(EXIT_OK);
    }

    let policy = build_policy(policy, ctx)?;
    let run = match out {
        Some(dir) => bench::evaluate_endpoint(
            &policy,
            &samples,
            tasks.as_deref(),
            ctx.parallelism,
            &text,
            dir,
            format,
        )?,
        None => bench::run_benchmark(&policy, &samples, tasks.as_deref(), ctx.parallelism, &text)?,
    };
    print!("{}", bench::render_report(&run.report, format)?);
    let failures = run.transport_failures();
    if failures > 0 {
        eprintln!(
            "{failures} of {} requests failed in transport",
            run.dump.len()
        );
    }
    Ok(if !run.dump.is_empty() && failures == run.dump.len() {
        EXIT_TRANSPORT
    } else {
        EXIT_OK
    })
}
