//! Text normalization shared by the quality gate and the feedback merge.

use std::collections::BTreeSet;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "because", "by", "disproved", "for", "from", "if",
    "in", "is", "it", "of", "on", "or", "that", "the", "then", "this", "to", "will", "with",
];

const NEGATIONS: &[&str] = &["not", "no", "never", "without", "cannot"];

pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Token-set Jaccard similarity; two empty texts count as identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

pub fn text_similarity(a: &str, b: &str) -> f64 {
    jaccard(&tokens(a), &tokens(b))
}

/// Content tokens with negations removed, plus whether any negation occurred.
pub fn polarity_split(text: &str) -> (BTreeSet<String>, bool) {
    let mut all = tokens(text);
    let negated = NEGATIONS.iter().any(|n| all.contains(*n));
    all.retain(|t| !NEGATIONS.contains(&t.as_str()));
    (all, negated)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StructuredClauses {
    pub choice: Option<String>,
    pub scope: Option<String>,
    pub effect: Option<String>,
    pub mechanism: Option<String>,
    pub falsifier: Option<String>,
}

fn clean(s: &str) -> Option<String> {
    let t = s.trim().trim_matches(|c: char| c == ',' || c == '.' || c == ';' || c == ':').trim();
    (!t.is_empty()).then(|| t.to_string())
}

/// Byte offset of a whole-word, upper-case keyword.
fn find_keyword(text: &str, keyword: &str, from: usize) -> Option<usize> {
    let mut start = from;
    while let Some(rel) = text.get(start..)?.find(keyword) {
        let at = start + rel;
        let before_ok = at == 0 || !text[..at].chars().next_back().is_some_and(char::is_alphanumeric);
        let end = at + keyword.len();
        let after_ok = end >= text.len() || !text[end..].chars().next().is_some_and(char::is_alphanumeric);
        if before_ok && after_ok {
            return Some(at);
        }
        start = at + keyword.len();
    }
    None
}

/// Splits `IF <choice> IN <scope>, THEN <effect>, BECAUSE <mechanism>.
/// DISPROVED IF <falsifier>.` into its clauses. Keywords are matched in
/// upper case only; missing clauses come back as `None`.
pub fn structured_clauses(text: &str) -> StructuredClauses {
    let disproved = find_keyword(text, "DISPROVED IF", 0);
    let head_end = disproved.unwrap_or(text.len());
    let head = &text[..head_end];
    let falsifier = disproved.and_then(|at| clean(&text[at + "DISPROVED IF".len()..]));

    let because = find_keyword(head, "BECAUSE", 0);
    let mechanism = because.and_then(|at| clean(&head[at + "BECAUSE".len()..]));
    let head = &head[..because.unwrap_or(head.len())];

    let then = find_keyword(head, "THEN", 0);
    let effect = then.and_then(|at| clean(&head[at + "THEN".len()..]));
    let head = &head[..then.unwrap_or(head.len())];

    let if_at = find_keyword(head, "IF", 0);
    let (choice, scope) = match if_at {
        Some(at) => {
            let body = &head[at + 2..];
            match find_keyword(body, "IN", 0) {
                Some(in_at) => (clean(&body[..in_at]), clean(&body[in_at + 2..])),
                None => (clean(body), None),
            }
        }
        None => (None, None),
    };
    StructuredClauses {
        choice,
        scope,
        effect,
        mechanism,
        falsifier,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_statement() {
        let c = structured_clauses(
            "IF per-band anchors are L2-normalized IN multi-band backbones, THEN shape recall improves, BECAUSE bounded anchors preserve token identity. DISPROVED IF recall is unchanged.",
        );
        assert_eq!(c.choice.as_deref(), Some("per-band anchors are L2-normalized"));
        assert_eq!(c.scope.as_deref(), Some("multi-band backbones"));
        assert_eq!(c.effect.as_deref(), Some("shape recall improves"));
        assert_eq!(c.mechanism.as_deref(), Some("bounded anchors preserve token identity"));
        assert_eq!(c.falsifier.as_deref(), Some("recall is unchanged"));
    }

    #[test]
    fn missing_clauses_are_none() {
        let c = structured_clauses("IF gating is added, THEN accuracy rises.");
        assert_eq!(c.choice.as_deref(), Some("gating is added"));
        assert!(c.scope.is_none());
        assert!(c.mechanism.is_none());
        assert!(c.falsifier.is_none());
    }

    #[test]
    fn lowercase_keywords_do_not_split() {
        let c = structured_clauses("IF mixing happens in stages THEN it helps BECAUSE if so");
        assert_eq!(c.choice.as_deref(), Some("mixing happens in stages"));
        assert_eq!(c.mechanism.as_deref(), Some("if so"));
    }

    #[test]
    fn keywords_inside_words_ignored() {
        let c = structured_clauses("IF INTERLEAVED blocks are used THEN gains appear");
        assert_eq!(c.choice.as_deref(), Some("INTERLEAVED blocks are used"));
        assert!(c.scope.is_none());
    }

    #[test]
    fn jaccard_basics() {
        assert_eq!(text_similarity("Gated mixing", "gated, MIXING!"), 1.0);
        assert_eq!(text_similarity("alpha", "beta"), 0.0);
        let (t, neg) = polarity_split("gating does not help");
        assert!(neg);
        assert!(!t.contains("not"));
    }
}
