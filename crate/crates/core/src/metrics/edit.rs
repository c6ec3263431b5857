/// Character-level Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    // single rolling row over b
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// `1 - ED / max(|gold|, |pred|)` with lengths in characters; two empty strings score 1.
pub fn normalized_template_similarity(gold: &str, pred: &str) -> f64 {
    let longest = gold.chars().count().max(pred.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(gold, pred) as f64 / longest as f64
}
