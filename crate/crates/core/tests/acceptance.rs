//! Acceptance checks, one line of output per criterion. Exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{chat_body, ok_json, reference_corpus, sample, StubServer, MONOLOGUE};
use logreason::env::{read_episode_log, replay, write_episode_log, EnvConfig, Environment};
use logreason::forge::emit_sft;
use logreason::format::{parse, wrap, BlockOrder};
use logreason::metrics::{
    bleu, edit_distance, rand_index, rouge_l, rouge_n, variable_f1_templates, TextMetricConfig,
};
use logreason::model::{AgentResponse, LogSample, SubTask};
use logreason::policy::PolicyClient;
use logreason::reward::{
    grpo_advantages, reward, reward_batch, RewardConfig, DEFAULT_ADVANTAGE_EPSILON,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pick<'a>(r: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(r).unwrap()
}

fn words(r: &mut ChaCha8Rng, vocab: &[&str], lo: usize, hi: usize) -> String {
    let n = r.gen_range(lo..=hi);
    (0..n).map(|_| pick(r, vocab)).collect::<Vec<_>>().join(" ")
}

const VOCAB: [&str; 12] = [
    "disk", "node", "failed", "the", "block", "error", "read", "write", "timeout", "root", "cause",
    "Disk",
];

fn random_template(r: &mut ChaCha8Rng) -> String {
    let toks = [
        "<*>", "blk_<*>", "failed", "open", "file", "at", "<*>:<*>", "node",
    ];
    words(r, &toks, 1, 8)
}

fn random_gold(r: &mut ChaCha8Rng, task: SubTask) -> String {
    match task {
        SubTask::Lp => random_template(r),
        SubTask::Ad => pick(r, &["normal", "abnormal"]).into(),
        _ => words(r, &VOCAB, 1, 12),
    }
}

/// Responses across the whole format space: valid, missing tags, duplicated, nested, empty answers.
fn random_response(r: &mut ChaCha8Rng, gold: &str) -> String {
    let body = match r.gen_range(0..4) {
        0 => gold.to_string(),
        1 => random_template(r),
        2 => words(r, &VOCAB, 0, 10),
        _ => pick(r, &["normal", "abnormal", "Normal", " ", ""]).to_string(),
    };
    let reasoning = words(r, &VOCAB, 0, 6);
    match r.gen_range(0..10) {
        0..=3 => format!("<think>{reasoning}</think>\n<answer>{body}</answer>"),
        4 => format!("<answer>{body}</answer><think>{reasoning}</think>"),
        5 => format!("<think>{reasoning}\n<answer>{body}</answer>"),
        6 => format!("<think>{reasoning}</think><answer>{body}</answer><answer>{body}</answer>"),
        7 => format!("<think>{reasoning}<answer>{body}</answer></think>"),
        8 => body,
        _ => format!("<think></think><answer>{body}"),
    }
}

fn reward_range_law() -> Outcome {
    let cfg = RewardConfig::default();
    let mut r = rng(1);
    let start = Instant::now();
    let n = 100_000;
    let (mut valid, mut invalid) = (0, 0);
    for i in 0..n {
        let task = SubTask::TRAINABLE[i % 5];
        let gold = random_gold(&mut r, task);
        let raw = random_response(&mut r, &gold);
        let s = sample("f", task, "D", "event failed at node 7", &gold);
        let resp = parse(&raw);
        let b = reward(&s, &resp, &cfg).map_err(|e| e.to_string())?;
        ensure((-2.0..=1.1).contains(&b.total), || {
            format!("{raw:?} -> {}", b.total)
        })?;
        ensure((b.total == -2.0) == !resp.format_valid, || {
            format!("penalty law broken on {raw:?}")
        })?;
        ensure((b.total >= 0.1) == resp.format_valid, || {
            format!("floor law broken on {raw:?}")
        })?;
        if resp.format_valid {
            valid += 1;
        } else {
            invalid += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{n} triples ({valid} valid, {invalid} invalid) in {secs:.2}s"
    ))
}

fn oracle_maximality() -> Outcome {
    let mut env = Environment::from_samples(
        reference_corpus(),
        EnvConfig {
            seed: 5,
            ..EnvConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let s = env
        .run_episodes(&PolicyClient::Oracle, 1000, 4)
        .map_err(|e| e.to_string())?;
    ensure(s.n == 1000, || format!("n = {}", s.n))?;
    ensure(s.per_task.len() == 5, || {
        format!("only {} tasks drawn", s.per_task.len())
    })?;
    ensure(s.mean_reward == 1.1, || {
        format!("mean reward {:?}", s.mean_reward)
    })?;
    ensure(s.format_failure_rate == 0.0, || {
        format!("format failures {}", s.format_failure_rate)
    })?;
    Ok(format!(
        "mean {:?}, format failure rate {:?}",
        s.mean_reward, s.format_failure_rate
    ))
}

fn ad_two_value_law() -> Outcome {
    let cfg = RewardConfig::default();
    let mut seen = BTreeSet::new();
    for gold in ["normal", "abnormal"] {
        for ans in ["normal", "abnormal", "Normal", "garbage", ""] {
            let s = sample("a", SubTask::Ad, "BGL", "x", gold);
            let raw = format!("<think>r</think>\n<answer>{ans}</answer>");
            let resp = parse(&raw);
            let b = reward(&s, &resp, &cfg).map_err(|e| e.to_string())?;
            if !resp.format_valid {
                ensure(ans.is_empty() && b.total == -2.0, || {
                    format!("{ans:?} invalid with {}", b.total)
                })?;
                continue;
            }
            let want = if ans.eq_ignore_ascii_case(gold) {
                1.1
            } else {
                0.1
            };
            ensure(b.total == want, || {
                format!("gold {gold}, answer {ans:?}: {} != {want}", b.total)
            })?;
            seen.insert(b.total.to_bits());
        }
    }
    ensure(seen.len() == 2, || {
        format!("{} distinct values", seen.len())
    })?;
    Ok("valid-format rewards are exactly {0.1, 1.1}".into())
}

fn ed_oracle(a: &[u8], b: &[u8], memo: &mut [[u8; 7]; 7], i: usize, j: usize) -> u8 {
    if i == a.len() {
        return (b.len() - j) as u8;
    }
    if j == b.len() {
        return (a.len() - i) as u8;
    }
    if memo[i][j] != u8::MAX {
        return memo[i][j];
    }
    let v = if a[i] == b[j] {
        ed_oracle(a, b, memo, i + 1, j + 1)
    } else {
        1 + ed_oracle(a, b, memo, i + 1, j)
            .min(ed_oracle(a, b, memo, i, j + 1))
            .min(ed_oracle(a, b, memo, i + 1, j + 1))
    };
    memo[i][j] = v;
    v
}

fn all_strings(max: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max {
        frontier = frontier
            .iter()
            .flat_map(|s| ['a', 'b', 'c'].map(|c| format!("{s}{c}")))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn ri_oracle(g: &[usize], p: &[usize]) -> f64 {
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            total += 1;
            agree += u64::from((g[i] == g[j]) == (p[i] == p[j]));
        }
    }
    agree as f64 / total as f64
}

fn var_f1_oracle(gold: &str, pred: &str) -> f64 {
    let g: Vec<&str> = gold.split_whitespace().collect();
    let p: Vec<&str> = pred.split_whitespace().collect();
    let var = |t: &str| t.contains("<*>");
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for k in 0..g.len().max(p.len()) {
        let gv = g.get(k).is_some_and(|t| var(t));
        let pv = p.get(k).is_some_and(|t| var(t));
        match (gv, pv) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0.0 {
        return 1.0;
    }
    2.0 * tp / (2.0 * tp + fp + fn_)
}

/// Clipped n-gram matches by direct scanning.
fn count_matches(r: &[String], c: &[String], n: usize) -> (usize, usize) {
    if c.len() < n {
        return (0, 0);
    }
    let cand: Vec<&[String]> = c.windows(n).collect();
    let refs: Vec<&[String]> = if r.len() >= n {
        r.windows(n).collect()
    } else {
        vec![]
    };
    let mut done: Vec<&[String]> = Vec::new();
    let mut matched = 0;
    for g in &cand {
        if done.contains(g) {
            continue;
        }
        done.push(g);
        let in_c = cand.iter().filter(|x| *x == g).count();
        let in_r = refs.iter().filter(|x| *x == g).count();
        matched += in_c.min(in_r);
    }
    (matched, cand.len())
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

fn bleu_oracle(reference: &str, candidate: &str) -> f64 {
    let (r, c) = (toks(reference), toks(candidate));
    if c.is_empty() {
        return 0.0;
    }
    let mut prod = 1.0;
    for n in 1..=4 {
        let (m, total) = count_matches(&r, &c, n);
        prod *= if m == 0 {
            1e-9 / total.max(1) as f64
        } else {
            m as f64 / total as f64
        };
    }
    let bp = if c.len() >= r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * prod.powf(0.25)
}

fn rouge_n_oracle(reference: &str, candidate: &str, n: usize) -> f64 {
    let (r, c) = (toks(reference), toks(candidate));
    if r.len() < n {
        return 0.0;
    }
    // Recall: clipped matches over reference n-grams.
    let (m, total) = count_matches(&c, &r, n);
    m as f64 / total as f64
}

fn rouge_l_oracle(reference: &str, candidate: &str) -> f64 {
    let (r, c) = (toks(reference), toks(candidate));
    if r.is_empty() {
        return 0.0;
    }
    let mut t = vec![vec![0usize; c.len() + 1]; r.len() + 1];
    for i in 1..=r.len() {
        for j in 1..=c.len() {
            t[i][j] = if r[i - 1] == c[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[r.len()][c.len()] as f64 / r.len() as f64
}

fn metric_oracle_equivalence() -> Outcome {
    let strings = all_strings(6);
    let bytes: Vec<&[u8]> = strings.iter().map(|s| s.as_bytes()).collect();
    for (a, sa) in bytes.iter().zip(&strings) {
        for (b, sb) in bytes.iter().zip(&strings) {
            let want = ed_oracle(a, b, &mut [[u8::MAX; 7]; 7], 0, 0) as usize;
            let got = edit_distance(sa, sb);
            ensure(got == want, || {
                format!("edit_distance({sa:?}, {sb:?}) = {got}, oracle {want}")
            })?;
        }
    }
    let ed_pairs = strings.len() * strings.len();

    let mut r = rng(2);
    for _ in 0..200 {
        let n = r.gen_range(2..=50);
        let (kg, kp) = (r.gen_range(1..=8), r.gen_range(1..=8));
        let g: Vec<usize> = (0..n).map(|_| r.gen_range(0..kg)).collect();
        let p: Vec<usize> = (0..n).map(|_| r.gen_range(0..kp)).collect();
        let got = rand_index(&g, &p).map_err(|e| e.to_string())?;
        let want = ri_oracle(&g, &p);
        ensure((got - want).abs() <= 1e-12, || {
            format!("rand_index {got} vs {want}")
        })?;
    }

    for _ in 0..1000 {
        let (g, p) = (random_template(&mut r), random_template(&mut r));
        let (got, want) = (variable_f1_templates(&g, &p), var_f1_oracle(&g, &p));
        ensure(got == want, || {
            format!("variable F1 {g:?} / {p:?}: {got} vs {want}")
        })?;
    }

    let cfg = TextMetricConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (a, b) = (words(&mut r, &VOCAB, 1, 10), words(&mut r, &VOCAB, 1, 10));
        let pairs = [
            (bleu(&a, &b, &cfg) / 100.0, bleu_oracle(&a, &b), "BLEU"),
            (
                rouge_n(&a, &b, 1, &cfg) / 100.0,
                rouge_n_oracle(&a, &b, 1),
                "ROUGE-1",
            ),
            (
                rouge_n(&a, &b, 2, &cfg) / 100.0,
                rouge_n_oracle(&a, &b, 2),
                "ROUGE-2",
            ),
            (
                rouge_l(&a, &b, &cfg) / 100.0,
                rouge_l_oracle(&a, &b),
                "ROUGE-L",
            ),
        ];
        for (got, want, name) in pairs {
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() <= 1e-9, || {
                format!("{name} on {a:?} / {b:?}: {got} vs {want}")
            })?;
        }
    }
    Ok(format!(
        "edit distance {ed_pairs} pairs exact; rand index 200; variable F1 1000 exact; BLEU/ROUGE 200 pairs, max |d| {worst:.1e}"
    ))
}

fn text_metric_boundaries() -> Outcome {
    let cfg = TextMetricConfig::default();
    let mut r = rng(3);
    for _ in 0..100 {
        let s = words(&mut r, &VOCAB, 4, 20);
        for (name, v) in [
            ("BLEU", bleu(&s, &s, &cfg)),
            ("ROUGE-1", rouge_n(&s, &s, 1, &cfg)),
            ("ROUGE-2", rouge_n(&s, &s, 2, &cfg)),
            ("ROUGE-L", rouge_l(&s, &s, &cfg)),
        ] {
            ensure(v == 100.0, || format!("{name}({s:?}, itself) = {v}"))?;
        }
    }
    let a = "alpha beta gamma delta epsilon";
    let b = "one two three four five six";
    let rouge = [
        rouge_n(a, b, 1, &cfg),
        rouge_n(a, b, 2, &cfg),
        rouge_l(a, b, &cfg),
    ];
    ensure(rouge.iter().all(|v| *v == 0.0), || {
        format!("disjoint ROUGE {rouge:?}")
    })?;
    let bl = bleu(a, b, &cfg);
    ensure(bl <= 0.001, || format!("disjoint BLEU {bl}"))?;
    Ok(format!(
        "identical = 100.0 on 100 sentences; disjoint ROUGE 0, BLEU {bl:.1e}"
    ))
}

fn grpo_laws() -> Outcome {
    let eps = DEFAULT_ADVANTAGE_EPSILON;
    let mut r = rng(4);
    let adv = |x: &[f64]| grpo_advantages(x, eps).map_err(|e| e.to_string());
    for _ in 0..1000 {
        let g = r.gen_range(2..=16);
        let mut xs: Vec<f64> = (0..g).map(|_| r.gen_range(-2.0..=1.1)).collect();
        xs[0] = -2.0;
        xs[1] = 1.1;
        let a = adv(&xs)?;
        let mean = a.iter().sum::<f64>() / g as f64;
        let std = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / g as f64).sqrt();
        ensure(mean.abs() <= 1e-9, || format!("mean {mean}"))?;
        ensure((std - 1.0).abs() <= 1e-6, || format!("std {std}"))?;
        let shift = r.gen_range(-5.0..5.0);
        let scale = r.gen_range(0.1..10.0);
        let shifted = adv(&xs.iter().map(|v| v + shift).collect::<Vec<_>>())?;
        let scaled = adv(&xs.iter().map(|v| v * scale).collect::<Vec<_>>())?;
        for k in 0..g {
            ensure((shifted[k] - a[k]).abs() <= 1e-9, || {
                format!("translation {} vs {}", shifted[k], a[k])
            })?;
            ensure((scaled[k] - a[k]).abs() <= 1e-9, || {
                format!("scale {} vs {}", scaled[k], a[k])
            })?;
        }
        let c = r.gen_range(-2.0..=1.1);
        ensure(adv(&vec![c; g])?.iter().all(|v| *v == 0.0), || {
            "all-equal group not zero".into()
        })?;
    }
    let pair = adv(&[1.0, 0.0])?;
    ensure(pair == vec![1.0, -1.0], || format!("[1, 0] -> {pair:?}"))?;
    Ok(
        "1000 groups: mean 0, std 1, shift/scale invariant, flat groups zero, [1,0] -> [+1,-1]"
            .into(),
    )
}

fn random_text(r: &mut ChaCha8Rng, max: usize) -> String {
    let alphabet: Vec<char> = "ab <>/thinkswer\n\t:é".chars().collect();
    let n = r.gen_range(0..=max);
    (0..n).map(|_| *alphabet.choose(r).unwrap()).collect()
}

fn round_trip_laws() -> Outcome {
    let mut r = rng(6);
    let mut pairs = 0;
    while pairs < 10_000 {
        let reasoning = random_text(&mut r, 40);
        let answer = random_text(&mut r, 20).trim().to_string();
        let Ok(t) = wrap(&reasoning, &answer, BlockOrder::ThinkFirst) else {
            continue;
        };
        let a = wrap(&reasoning, &answer, BlockOrder::AnswerFirst).map_err(|e| e.to_string())?;
        for raw in [t, a] {
            let p = parse(&raw);
            ensure(p.format_valid, || format!("{raw:?} not valid"))?;
            ensure(p.reasoning.as_deref() == Some(reasoning.as_str()), || {
                format!("reasoning lost in {raw:?}")
            })?;
            ensure(p.answer.as_deref() == Some(answer.as_str()), || {
                format!("answer lost in {raw:?}")
            })?;
        }
        pairs += 1;
    }

    let corpus = reference_corpus();
    let mut lines = 0;
    for order in [BlockOrder::ThinkFirst, BlockOrder::AnswerFirst] {
        let mut buf = Vec::new();
        let n = emit_sft(&mut buf, &corpus, order).map_err(|e| e.to_string())?;
        for line in String::from_utf8(buf).unwrap().lines() {
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            let target = v["target"].as_str().ok_or("target missing")?;
            ensure(parse(target).format_valid, || {
                format!("invalid SFT target {target:?}")
            })?;
            lines += 1;
        }
        ensure(n == corpus.len(), || format!("{n} records emitted"))?;
    }

    let mut env = Environment::from_samples(
        corpus.clone(),
        EnvConfig {
            seed: 9,
            ..EnvConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    env.run_episodes(&PolicyClient::NoisyOracle { p: 0.4, seed: 9 }, 600, 2)
        .map_err(|e| e.to_string())?;
    env.run_episodes(&PolicyClient::Malformed, 100, 1)
        .map_err(|e| e.to_string())?;
    env.run_episodes(
        &PolicyClient::Fixed("<think>x</think><answer>event 1 from <*> extra</answer>".into()),
        300,
        1,
    )
    .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("episodes.jsonl");
    write_episode_log(
        std::fs::File::create(&path).map_err(|e| e.to_string())?,
        env.episodes(),
    )
    .map_err(|e| e.to_string())?;
    let logged = read_episode_log(&path).map_err(|e| e.to_string())?;
    let replayed = replay(&corpus, &logged, &RewardConfig::default()).map_err(|e| e.to_string())?;
    ensure(logged.len() == 1000, || {
        format!("{} episodes logged", logged.len())
    })?;
    for (e, b) in logged.iter().zip(&replayed) {
        ensure(
            e.reward.total.to_bits() == b.total.to_bits() && e.reward == *b,
            || {
                format!(
                    "episode {} replays to {:?}, logged {:?}",
                    e.episode, b, e.reward
                )
            },
        )?;
    }
    Ok(format!("10000 wrap/parse pairs x 2 orders; {lines} SFT lines valid; 1000 episodes replay bit-exact"))
}

fn exe() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_logreason"));
    c.env_remove("RUST_LOG");
    c
}

fn data(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

fn run_ok(c: &mut Command) -> Result<std::process::Output, String> {
    let o = c.output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(o)
    } else {
        Err(format!(
            "{:?} exited {:?}: {}",
            c,
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        ))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut logs = Vec::new();
    for (k, par) in ["1", "4"].iter().enumerate() {
        let log = dir.path().join(format!("run{k}.jsonl"));
        run_ok(
            exe()
                .args([
                    "env",
                    "run",
                    "--seed",
                    "7",
                    "--parallelism",
                    par,
                    "--policy",
                    "noisy-oracle",
                    "--n",
                    "500",
                    "--dataset",
                ])
                .arg(data("sample.jsonl"))
                .arg("--log")
                .arg(&log),
        )?;
        logs.push(std::fs::read(&log).map_err(|e| e.to_string())?);
    }
    ensure(!logs[0].is_empty() && logs[0] == logs[1], || {
        "episode logs differ".into()
    })?;
    Ok(format!(
        "two `env run --seed 7` logs byte-identical ({} bytes)",
        logs[0].len()
    ))
}

fn throughput() -> Outcome {
    let corpus = reference_corpus();
    let mut r = rng(8);
    let responses: Vec<AgentResponse> = corpus
        .iter()
        .map(|s| parse(&random_response(&mut r, &s.answer)))
        .collect();
    let refs: Vec<&LogSample> = corpus.iter().collect();
    let cfg = RewardConfig::default();
    let start = Instant::now();
    let seq = reward_batch(&refs, &responses, &cfg, 1).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("{secs:.2}s"))?;
    let par = reward_batch(&refs, &responses, &cfg, 8).map_err(|e| e.to_string())?;
    ensure(par == seq, || "parallel output differs".into())?;
    Ok(format!(
        "{} responses scored in {secs:.3}s single-threaded; parallel == sequential",
        seq.len()
    ))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(10);
    let source: Vec<LogSample> = (0..50)
        .map(|i| {
            let task = SubTask::TRAINABLE[i % 5];
            sample(
                &format!("src-{i}"),
                task,
                "HDFS",
                &format!("block blk_{i} failed on node{}", i % 7),
                &random_gold(&mut r, task),
            )
        })
        .collect();
    let src = dir.path().join("source.jsonl");
    common::write_jsonl(&src, &source);

    let forge_stub = StubServer::start(|_, _| ok_json(chat_body(&[MONOLOGUE])));
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("forge{k}"));
        let o = run_ok(
            exe()
                .args([
                    "forge",
                    "build",
                    "--seed",
                    "3",
                    "--order",
                    "think-first",
                    "--leakage-check",
                    "--endpoint",
                    &forge_stub.url,
                ])
                .arg("--templates")
                .arg(data("templates"))
                .arg("--source")
                .arg(&src)
                .arg("--out")
                .arg(&out),
        )?;
        let report: serde_json::Value =
            serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())?;
        let accepted = report["accepted"].as_u64().unwrap_or(0);
        ensure(accepted * 100 >= 95 * 50, || {
            format!("forge accepted {accepted}/50")
        })?;
        outputs.push((
            accepted,
            std::fs::read(out.join("dataset.jsonl")).map_err(|e| e.to_string())?,
            std::fs::read(out.join("sft.jsonl")).map_err(|e| e.to_string())?,
        ));
    }
    ensure(outputs[0] == outputs[1], || "forge reruns differ".into())?;

    let bench_stub = StubServer::start(|c, _| {
        let p = c.prompt();
        let answer = if p.contains("ciod") || p.contains("error") {
            "abnormal"
        } else {
            "normal"
        };
        ok_json(chat_body(&[&format!(
            "<think>inspect the log</think>\n<answer>{answer}</answer>"
        )]))
    });
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("bench{k}"));
        let o = run_ok(
            exe()
                .args([
                    "bench",
                    "eval",
                    "--format",
                    "markdown",
                    "--endpoint",
                    &bench_stub.url,
                    "--dataset",
                ])
                .arg(data("sample.jsonl"))
                .arg("--out")
                .arg(&out),
        )?;
        let md = String::from_utf8(o.stdout).map_err(|e| e.to_string())?;
        let file = std::fs::read_to_string(out.join("report.md")).map_err(|e| e.to_string())?;
        ensure(md == file, || "stdout and report.md differ".into())?;
        reports.push(md);
    }
    for header in [
        "| Domain | RI | F1 |",
        "| Domain | Pre | Rec | F1 |",
        "| Domain | BLEU | R-1 | R-2 | R-L |",
    ] {
        ensure(reports[0].contains(header), || {
            format!("report lacks {header:?}")
        })?;
    }
    ensure(reports[0] == reports[1], || "bench reruns differ".into())?;
    Ok(format!("forge accepted {}/50 (identical reruns); bench report with LP/AD/IRS headers, identical reruns", outputs[0].0))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("reward range law", reward_range_law),
        ("oracle maximality", oracle_maximality),
        ("AD two-value law", ad_two_value_law),
        ("metric-oracle equivalence", metric_oracle_equivalence),
        ("BLEU/ROUGE boundary cases", text_metric_boundaries),
        ("GRPO advantage laws", grpo_laws),
        ("round-trip laws", round_trip_laws),
        ("determinism", determinism),
        ("throughput", throughput),
        ("end-to-end stub endpoint", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
