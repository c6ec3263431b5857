use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

fn pairs(n: usize) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Fraction of item pairs on which two clusterings agree.
///
/// Computed from the contingency table rather than by enumerating pairs.
pub fn rand_index<A, B>(gold: &[A], pred: &[B]) -> Result<f64>
where
    A: Eq + Hash,
    B: Eq + Hash,
{
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let n = gold.len();
    if n < 2 {
        return Err(Error::TooFew { min: 2, got: n });
    }
    let mut rows: HashMap<&A, usize> = HashMap::new();
    let mut cols: HashMap<&B, usize> = HashMap::new();
    let mut cells: HashMap<(&A, &B), usize> = HashMap::new();
    for (g, p) in gold.iter().zip(pred) {
        *rows.entry(g).or_default() += 1;
        *cols.entry(p).or_default() += 1;
        *cells.entry((g, p)).or_default() += 1;
    }
    let both: u128 = cells.values().map(|&c| pairs(c)).sum();
    let same_gold: u128 = rows.values().map(|&c| pairs(c)).sum();
    let same_pred: u128 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    // together in both + apart in both
    let agree = both + (total + both - same_gold - same_pred);
    Ok(agree as f64 / total as f64)
}
