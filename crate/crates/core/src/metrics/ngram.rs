use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Tokenization and smoothing knobs for BLEU and ROUGE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextMetricConfig {
    /// Lowercase before splitting on whitespace.
    pub lowercase: bool,
    /// Highest n-gram order in BLEU.
    pub max_order: usize,
    /// Numerator used in place of a zero n-gram match count.
    pub epsilon: f64,
}

impl Default for TextMetricConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            max_order: 4,
            epsilon: 1e-9,
        }
    }
}

pub fn tokenize(text: &str, cfg: &TextMetricConfig) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            if cfg.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Matches of candidate n-grams against the reference, clipped by reference counts.
fn clipped_matches(reference: &[String], candidate: &[String], n: usize) -> usize {
    let refs = ngram_counts(reference, n);
    ngram_counts(candidate, n)
        .into_iter()
        .map(|(g, c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Sentence-level smoothed BLEU on a 0–100 scale.
pub fn bleu(reference: &str, candidate: &str, cfg: &TextMetricConfig) -> f64 {
    let r = tokenize(reference, cfg);
    let c = tokenize(candidate, cfg);
    if c.is_empty() || cfg.max_order == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=cfg.max_order {
        let total = c.len().saturating_sub(n - 1);
        let matched = clipped_matches(&r, &c, n);
        let p = if matched == 0 {
            cfg.epsilon / total.max(1) as f64
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let geo = (log_sum / cfg.max_order as f64).exp();
    let bp = if c.len() >= r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    (100.0 * bp * geo).clamp(0.0, 100.0)
}

/// ROUGE-n recall on a 0–100 scale. Zero when the reference has fewer than `n` tokens.
pub fn rouge_n(reference: &str, candidate: &str, n: usize, cfg: &TextMetricConfig) -> f64 {
    let r = tokenize(reference, cfg);
    let c = tokenize(candidate, cfg);
    if n == 0 || r.len() < n {
        return 0.0;
    }
    let total = r.len() - n + 1;
    100.0 * clipped_matches(&r, &c, n) as f64 / total as f64
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L recall (LCS over reference length) on a 0–100 scale.
pub fn rouge_l(reference: &str, candidate: &str, cfg: &TextMetricConfig) -> f64 {
    let r = tokenize(reference, cfg);
    if r.is_empty() {
        return 0.0;
    }
    let c = tokenize(candidate, cfg);
    100.0 * lcs_len(&r, &c) as f64 / r.len() as f64
}
