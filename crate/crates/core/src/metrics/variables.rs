use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ConfusionCounts;

/// Placeholder marking a variable in a log template.
pub const PLACEHOLDER: &str = "<*>";

fn is_variable(token: &str) -> bool {
    token.contains(PLACEHOLDER)
}

/// Positional confusion counts of variable tokens between two templates.
pub fn template_variable_counts(gold: &str, pred: &str) -> ConfusionCounts {
    let g: Vec<bool> = gold.split_whitespace().map(is_variable).collect();
    let p: Vec<bool> = pred.split_whitespace().map(is_variable).collect();
    let mut counts = ConfusionCounts::default();
    for i in 0..g.len().max(p.len()) {
        let gv = g.get(i).copied().unwrap_or(false);
        let pv = p.get(i).copied().unwrap_or(false);
        counts.record(gv, pv);
    }
    counts
}

/// Binary F1 of variable positions, aligning the two templates token by token.
///
/// A token is a variable when it contains `<*>`. With no variable on either
/// side the score is 1.
pub fn variable_f1_templates(gold_template: &str, pred_template: &str) -> f64 {
    template_variable_counts(gold_template, pred_template).f1_or_one()
}

/// Glob match of one log token against a template token; each `<*>` covers ≥1 char.
fn token_matches(pattern: &str, token: &str) -> bool {
    enum Elem {
        Lit(char),
        Wild,
    }
    let mut elems = Vec::new();
    for (i, part) in pattern.split(PLACEHOLDER).enumerate() {
        if i > 0 {
            elems.push(Elem::Wild);
        }
        elems.extend(part.chars().map(Elem::Lit));
    }
    let text: Vec<char> = token.chars().collect();
    // ok[j]: elems[i..] matches text[j..], filled from the back
    let mut ok = vec![false; text.len() + 1];
    ok[text.len()] = true;
    for e in elems.iter().rev() {
        let mut next = vec![false; text.len() + 1];
        for j in (0..text.len()).rev() {
            next[j] = match e {
                Elem::Lit(c) => text[j] == *c && ok[j + 1],
                // consume text[j], then either stop here or keep consuming
                Elem::Wild => ok[j + 1] || next[j + 1],
            };
        }
        ok = next;
    }
    ok[0]
}

/// Labels each log token as variable (`true`) or static by aligning the template.
///
/// Static template tokens must match log tokens exactly and in order; a bare
/// `<*>` absorbs one or more log tokens, preferring the shortest span; a mixed
/// token such as `blk_<*>` covers exactly one log token. Returns `None` when
/// the template cannot be aligned.
pub fn label_log_tokens(log_tokens: &[&str], template: &str) -> Option<Vec<bool>> {
    let tpl: Vec<&str> = template.split_whitespace().collect();
    let mut labels = vec![false; log_tokens.len()];
    let mut dead = HashSet::new();
    fn walk(
        tpl: &[&str],
        log: &[&str],
        ti: usize,
        li: usize,
        labels: &mut [bool],
        dead: &mut HashSet<(usize, usize)>,
    ) -> bool {
        if ti == tpl.len() {
            return li == log.len();
        }
        if li >= log.len() || dead.contains(&(ti, li)) {
            return false;
        }
        let t = tpl[ti];
        let ok = if t == PLACEHOLDER {
            (li + 1..=log.len()).any(|end| {
                walk(tpl, log, ti + 1, end, labels, dead) && {
                    labels[li..end].iter_mut().for_each(|l| *l = true);
                    true
                }
            })
        } else if is_variable(t) {
            token_matches(t, log[li]) && walk(tpl, log, ti + 1, li + 1, labels, dead) && {
                labels[li] = true;
                true
            }
        } else {
            t == log[li] && walk(tpl, log, ti + 1, li + 1, labels, dead) && {
                labels[li] = false;
                true
            }
        };
        if !ok {
            dead.insert((ti, li));
        }
        ok
    }
    walk(&tpl, log_tokens, 0, 0, &mut labels, &mut dead).then_some(labels)
}

fn fallback_labels(log_tokens: &[&str], template: &str) -> Vec<bool> {
    let statics: HashSet<&str> = template
        .split_whitespace()
        .filter(|t| !is_variable(t))
        .collect();
    log_tokens.iter().map(|t| !statics.contains(t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchoredF1 {
    pub f1: f64,
    pub counts: ConfusionCounts,
    pub gold_aligned: bool,
    pub pred_aligned: bool,
}

/// Variable-level F1 over the raw log's tokens, labelled through each template.
///
/// Templates that cannot be aligned fall back to marking a log token static
/// when it equals any static token of that template; the result records which
/// side was unaligned.
pub fn variable_f1_log_anchored(
    raw_log: &str,
    gold_template: &str,
    pred_template: &str,
) -> AnchoredF1 {
    let log: Vec<&str> = raw_log.split_whitespace().collect();
    let label = |tpl: &str| match label_log_tokens(&log, tpl) {
        Some(l) => (l, true),
        None => (fallback_labels(&log, tpl), false),
    };
    let (gold, gold_aligned) = label(gold_template);
    let (pred, pred_aligned) = label(pred_template);
    let mut counts = ConfusionCounts::default();
    for (g, p) in gold.into_iter().zip(pred) {
        counts.record(g, p);
    }
    AnchoredF1 {
        f1: counts.f1_or_one(),
        counts,
        gold_aligned,
        pred_aligned,
    }
}
