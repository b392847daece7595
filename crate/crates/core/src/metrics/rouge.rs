use super::{MetricError, TokenSequence};

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with beta = 1.
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let lcs = lcs_len(candidate.tokens(), reference.tokens()) as f64;
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    Ok(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
}
