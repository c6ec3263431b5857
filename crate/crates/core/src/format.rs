//! The `<think>`/`<answer>` response protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AgentResponse;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

const TAGS: [&str; 4] = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

/// Which tagged block comes first in a wrapped target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOrder {
    #[default]
    ThinkFirst,
    AnswerFirst,
}

/// Returns the first reserved tag that occurs in `text`, if any.
pub fn find_tag(text: &str) -> Option<&'static str> {
    TAGS.into_iter().find(|t| text.contains(t))
}

pub fn wrap(reasoning: &str, answer: &str, order: BlockOrder) -> Result<String> {
    if answer.trim().is_empty() {
        return Err(Error::EmptyAnswer);
    }
    if let Some(tag) = find_tag(reasoning).or_else(|| find_tag(answer)) {
        return Err(Error::ReservedTag(tag));
    }
    let think = format!("{THINK_OPEN}{reasoning}{THINK_CLOSE}");
    let ans = format!("{ANSWER_OPEN}{answer}{ANSWER_CLOSE}");
    Ok(match order {
        BlockOrder::ThinkFirst => format!("{think}\n{ans}"),
        BlockOrder::AnswerFirst => format!("{ans}\n{think}"),
    })
}

/// Byte span of a block's inner text, located by its unique open/close tags.
fn block(raw: &str, open: &str, close: &str) -> Option<(usize, usize)> {
    let mut opens = raw.match_indices(open);
    let mut closes = raw.match_indices(close);
    let (o, _) = opens.next()?;
    let (c, _) = closes.next()?;
    if opens.next().is_some() || closes.next().is_some() {
        return None;
    }
    let start = o + open.len();
    (start <= c).then_some((start, c))
}

/// Splits raw model output into reasoning and answer.
///
/// Valid output holds exactly one think block and exactly one answer block,
/// in either order and not overlapping, with a non-blank answer. Text outside
/// the two blocks is ignored. Never fails.
pub fn parse(raw: &str) -> AgentResponse {
    let think = block(raw, THINK_OPEN, THINK_CLOSE);
    let answer = block(raw, ANSWER_OPEN, ANSWER_CLOSE);

    let (think, answer) = match (think, answer) {
        (Some(t), Some(a)) => {
            // outer spans include the tags themselves
            let t_outer = (t.0 - THINK_OPEN.len(), t.1 + THINK_CLOSE.len());
            let a_outer = (a.0 - ANSWER_OPEN.len(), a.1 + ANSWER_CLOSE.len());
            if t_outer.1 <= a_outer.0 || a_outer.1 <= t_outer.0 {
                (Some(t), Some(a))
            } else {
                (None, None)
            }
        }
        other => other,
    };

    let reasoning = think.map(|(s, e)| raw[s..e].to_string());
    let answer = answer.map(|(s, e)| raw[s..e].trim().to_string());
    let format_valid = reasoning.is_some() && answer.as_deref().is_some_and(|a| !a.is_empty());
    AgentResponse {
        raw: raw.to_string(),
        reasoning,
        answer,
        format_valid,
    }
}
