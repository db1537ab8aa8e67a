//! Fuzzy answer-match ruling.
//!
//! A prediction is ruled correct when its character-level matching rate
//! against the gold answer or any alias reaches a threshold. The matching
//! rate is 1 − levenshtein(a, b) / max(|a|, |b|) over normalized strings.

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::Question;

/// Normalization flags and the match threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchConfig {
    pub threshold: f64,
    pub lowercase: bool,
    pub strip_punct: bool,
    pub strip_diacritics: bool,
    pub strip_articles: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            threshold: 0.75,
            lowercase: true,
            strip_punct: true,
            strip_diacritics: true,
            strip_articles: true,
        }
    }
}

/// Outcome of ruling one prediction against one question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ruling {
    pub correct: bool,
    pub similarity: f64,
}

/// Trivia-equivalence cleanup: lowercase, drop diacritics (via canonical
/// decomposition), drop punctuation, collapse whitespace, strip one leading
/// article.
pub fn normalize_answer(s: &str, cfg: &MatchConfig) -> String {
    let mut text: String = if cfg.strip_diacritics {
        s.nfd().filter(|c| !is_combining_mark(*c)).collect()
    } else {
        s.to_string()
    };
    if cfg.lowercase {
        text = text.to_lowercase();
    }
    if cfg.strip_punct {
        text.retain(|c| c.is_alphanumeric() || c.is_whitespace());
    }
    let mut tokens: Vec<&str> = text.split_whitespace().collect();
    if cfg.strip_articles && tokens.len() > 1 {
        if matches!(tokens[0], "the" | "a" | "an") {
            tokens.remove(0);
        }
    }
    tokens.join(" ")
}

/// Levenshtein distance over unicode scalar values, two-row DP.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character-level matching rate between two already-normalized strings:
/// 1 − edit distance / max length, and 1.0 when both are empty.
pub fn similarity(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    let max_len = la.max(lb);
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / max_len as f64
}

/// Rule a predicted answer against a question's answer and aliases.
/// The reported similarity is the best rate across all accepted forms.
pub fn rule_answer(prediction: &str, gold: &Question, cfg: &MatchConfig) -> Ruling {
    let pred = normalize_answer(prediction, cfg);
    let mut best = 0.0f64;
    for candidate in std::iter::once(&gold.answer).chain(gold.aliases.iter()) {
        let cand = normalize_answer(candidate, cfg);
        let sim = similarity(&pred, &cand);
        if sim > best {
            best = sim;
        }
    }
    Ruling {
        correct: best >= cfg.threshold,
        similarity: best,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn question(answer: &str, aliases: &[&str]) -> Question {
        Question {
            qid: "q1".into(),
            clues: vec!["clue".into()],
            answer: answer.into(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
            category: String::new(),
            subcategory: None,
            wiki_summary: None,
        }
    }

    #[test]
    fn exact_match_is_one() {
        let q = question("Paris", &[]);
        let r = rule_answer("Paris", &q, &MatchConfig::default());
        assert_eq!(r.similarity, 1.0);
        assert!(r.correct);
    }

    #[test]
    fn empty_prediction_vs_nonempty_gold() {
        let q = question("Paris", &[]);
        let r = rule_answer("", &q, &MatchConfig::default());
        assert_eq!(r.similarity, 0.0);
        assert!(!r.correct);
    }

    #[test]
    fn alias_match() {
        let q = question("Piano", &["Pianoforte"]);
        let r = rule_answer("pianoforte", &q, &MatchConfig::default());
        assert!(r.correct);
        assert_eq!(r.similarity, 1.0);
    }

    #[test]
    fn normalization_strips_articles_diacritics_punctuation() {
        let cfg = MatchConfig::default();
        assert_eq!(normalize_answer("The  Café, du Monde!", &cfg), "cafe du monde");
        assert_eq!(normalize_answer("A Wrinkle in Time", &cfg), "wrinkle in time");
        // a lone article is kept: never normalize to an empty string
        assert_eq!(normalize_answer("The", &cfg), "the");
    }

    #[test]
    fn levenshtein_known_value() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
    }

    /// Full-matrix DP oracle, written independently of the two-row version.
    pub(crate) fn levenshtein_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 0..=a.len() {
            dp[i][0] = i;
        }
        for j in 0..=b.len() {
            dp[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                dp[i][j] = (dp[i - 1][j] + 1)
                    .min(dp[i][j - 1] + 1)
                    .min(dp[i - 1][j - 1] + cost);
            }
        }
        dp[a.len()][b.len()]
    }

    proptest! {
        #[test]
        fn similarity_matches_dp_oracle(a in ".{0,12}", b in ".{0,12}") {
            let la = a.chars().count();
            let lb = b.chars().count();
            let max_len = la.max(lb);
            let expect = if max_len == 0 {
                1.0
            } else {
                1.0 - levenshtein_oracle(&a, &b) as f64 / max_len as f64
            };
            prop_assert_eq!(similarity(&a, &b), expect);
        }

        #[test]
        fn similarity_symmetric_and_reflexive(a in ".{0,10}", b in ".{0,10}") {
            prop_assert_eq!(similarity(&a, &b), similarity(&b, &a));
            prop_assert_eq!(similarity(&a, &a), 1.0);
        }
    }
}
