//! Extractive summarization by document-frequency sentence scoring.

use std::collections::HashMap;

use crate::nlp::StopList;

/// Score each sentence as the mean document frequency of its non-stop
/// lemmas: `score(s) = sum(df(lemma) for lemma occurrences in s) / count`,
/// where `df` counts lemma occurrences over the whole document. Sentences
/// with zero non-stop lemmas score 0.
pub fn sentence_scores(sentence_lemmas: &[Vec<String>], stops: &StopList) -> Vec<f64> {
    let mut df: HashMap<&str, u64> = HashMap::new();
    for lemmas in sentence_lemmas {
        for lemma in lemmas {
            if !stops.contains(&lemma.to_lowercase()) {
                *df.entry(lemma.as_str()).or_insert(0) += 1;
            }
        }
    }
    sentence_lemmas
        .iter()
        .map(|lemmas| {
            let mut sum = 0u64;
            let mut count = 0u64;
            for lemma in lemmas {
                if !stops.contains(&lemma.to_lowercase()) {
                    sum += df[lemma.as_str()];
                    count += 1;
                }
            }
            if count == 0 {
                0.0
            } else {
                sum as f64 / count as f64
            }
        })
        .collect()
}

/// Indices of the top-`k` scores, ties broken by earlier position, returned
/// in ascending (document) order.
pub fn select_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then_with(|| a.cmp(&b))
    });
    let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
    chosen.sort_unstable();
    chosen
}

/// Select the top-`k` sentences by score and return them in original
/// document order. `sentence_lemmas[i]` holds the lemmas of `sentences[i]`.
pub fn summarize(
    sentences: &[String],
    sentence_lemmas: &[Vec<String>],
    stops: &StopList,
    k: usize,
) -> Vec<String> {
    assert_eq!(
        sentences.len(),
        sentence_lemmas.len(),
        "one lemma list per sentence"
    );
    let scores = sentence_scores(sentence_lemmas, stops);
    select_top_k(&scores, k)
        .into_iter()
        .map(|i| sentences[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{tokenize, StopList};

    fn lemmas_of(sentence: &str) -> Vec<String> {
        tokenize(sentence)
            .iter()
            .map(|t| t.lemma_or_surface())
            .collect()
    }

    fn doc() -> (Vec<String>, Vec<Vec<String>>) {
        let sentences: Vec<String> = ["Cats purr.", "Cats sleep.", "Dogs bark."]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let lemmas = sentences.iter().map(|s| lemmas_of(s)).collect();
        (sentences, lemmas)
    }

    #[test]
    fn hand_computed_scores_and_tie_break() {
        // df: cats=2, purr=1, sleep=1, dogs=1, bark=1
        // S1=(2+1)/2=1.5, S2=(2+1)/2=1.5, S3=(1+1)/2=1.0; tie S1 vs S2 -> S1.
        let (sentences, lemmas) = doc();
        let scores = sentence_scores(&lemmas, &StopList::new());
        assert_eq!(scores, vec![1.5, 1.5, 1.0]);
        let out = summarize(&sentences, &lemmas, &StopList::new(), 1);
        assert_eq!(out, vec!["Cats purr."]);
    }

    #[test]
    fn k_at_least_len_returns_all_in_order() {
        let (sentences, lemmas) = doc();
        let out = summarize(&sentences, &lemmas, &StopList::new(), 10);
        assert_eq!(out, sentences);
    }

    #[test]
    fn k_zero_is_empty() {
        let (sentences, lemmas) = doc();
        assert!(summarize(&sentences, &lemmas, &StopList::new(), 0).is_empty());
    }

    #[test]
    fn stop_only_sentences_score_zero() {
        let stops = StopList::from_words(["the", "a"]);
        let sentences = vec!["The a the.".to_string(), "Cats purr.".to_string()];
        let lemmas: Vec<Vec<String>> = sentences.iter().map(|s| lemmas_of(s)).collect();
        let scores = sentence_scores(&lemmas, &stops);
        assert_eq!(scores[0], 0.0);
        let out = summarize(&sentences, &lemmas, &stops, 1);
        assert_eq!(out, vec!["Cats purr."]);
    }

    #[test]
    fn output_preserves_document_order() {
        let sentences: Vec<String> = ["Dogs bark.", "Cats purr cats.", "Cats sleep."]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let lemmas: Vec<Vec<String>> = sentences.iter().map(|s| lemmas_of(s)).collect();
        let out = summarize(&sentences, &lemmas, &StopList::new(), 2);
        // Whatever the two best are, they come back in document order.
        let pos: Vec<usize> = out
            .iter()
            .map(|s| sentences.iter().position(|x| x == s).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn matches_exhaustive_subset_search() {
        // Brute-force oracle on a small fixed document: enumerate all
        // k-subsets, maximize total score, tie-break by earliest positions.
        let sentences: Vec<String> = [
            "Alpha beta gamma.",
            "Alpha alpha delta.",
            "Beta beta beta.",
            "Gamma delta epsilon.",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let lemmas: Vec<Vec<String>> = sentences.iter().map(|s| lemmas_of(s)).collect();
        let stops = StopList::new();
        let scores = sentence_scores(&lemmas, &stops);
        for k in 1..=3 {
            let expected = brute_force_top_k(&scores, k);
            let got: Vec<usize> = select_top_k(&scores, k);
            assert_eq!(got, expected, "k={k}");
        }
    }

    fn brute_force_top_k(scores: &[f64], k: usize) -> Vec<usize> {
        let n = scores.len();
        let k = k.min(n);
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let total: f64 = subset.iter().map(|&i| scores[i]).sum();
            let better = match &best {
                None => true,
                Some((best_total, best_subset)) => {
                    total > best_total + 1e-12
                        || ((total - best_total).abs() <= 1e-12 && subset < *best_subset)
                }
            };
            if better {
                best = Some((total, subset));
            }
        }
        best.map(|(_, s)| s).unwrap_or_default()
    }
}
