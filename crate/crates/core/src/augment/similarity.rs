use crate::text::collapse_whitespace;

/// Character-level edit distance (insert, delete, substitute; unit costs).
pub fn edit_distance(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn prepare(s: &str) -> Vec<char> {
    collapse_whitespace(&s.to_lowercase()).chars().collect()
}

/// `1 - distance / max_len` over case-folded, whitespace-collapsed text.
/// Two empty strings are identical; one empty string scores 0.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (prepare(a), prepare(b));
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(&a, &b) as f64 / longest as f64
}
