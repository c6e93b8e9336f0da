//! Keyword extraction by within-document lemma frequency.

use std::collections::BTreeMap;

use crate::envelope::Token;
use crate::nlp::StopList;

/// Rank non-stop lemmas by frequency; score = count / total non-stop count.
/// Ties break lexicographically; the top `n` come back in descending score
/// order.
pub fn extract_keywords(tokens: &[Token], stops: &StopList, n: usize) -> Vec<(String, f64)> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for token in tokens {
        let lemma = token.lemma_or_surface();
        if stops.contains(&lemma.to_lowercase()) {
            continue;
        }
        *counts.entry(lemma).or_insert(0) += 1;
        total += 1;
    }
    if total == 0 {
        return Vec::new();
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(n)
        .map(|(lemma, count)| (lemma, count as f64 / total as f64))
        .collect()
}
