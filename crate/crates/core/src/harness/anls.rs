//! Average Normalized Levenshtein Similarity.

/// Case-folds, trims and collapses internal whitespace runs to one space.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Character-level edit distance (unit insert/delete/substitute).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - dist / max(len)` on normalised answers; 1 when both are empty.
pub fn nls(prediction: &str, truth: &str) -> f64 {
    let (p, t) = (normalize_answer(prediction), normalize_answer(truth));
    let longest = p.chars().count().max(t.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&p, &t) as f64 / longest as f64
}

/// Thresholded similarity: scores below `threshold` count as zero.
pub fn anls(prediction: &str, truth: &str, threshold: f64) -> f64 {
    let s = nls(prediction, truth);
    if s >= threshold {
        s
    } else {
        0.0
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Mean ANLS over `(prediction, truth)` pairs; 0 for an empty set.
pub fn mean_anls<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>, threshold: f64) -> f64 {
    let (sum, n) = pairs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), (p, t)| (s + anls(p, t, threshold), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
