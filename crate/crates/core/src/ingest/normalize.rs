/// Placeholder emitted for `r/...` subreddit references.
pub const SUB_TOKEN: &str = "r/SUB";
/// Placeholder emitted for `u/...` user references.
pub const USER_TOKEN: &str = "u/USER";
/// Placeholder emitted for hyperlinks.
pub const URL_TOKEN: &str = "URL";

/// Text normalization settings.
///
/// Placeholders contain uppercase letters, so they can never collide with a
/// lowercased user token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationRules {
    pub repeat_cap: usize,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        Self { repeat_cap: 3 }
    }
}

fn is_url(raw: &str) -> bool {
    let lower = raw.trim_start_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn ends_sentence(raw: &str) -> bool {
    raw.chars()
        .rev()
        .take_while(|c| !c.is_alphanumeric())
        .any(|c| matches!(c, '.' | '!' | '?'))
}

/// Collapses any run of one character longer than `cap` down to `cap`.
pub fn collapse_repeats(token: &str, cap: usize) -> String {
    let mut out = String::with_capacity(token.len());
    let mut prev = None;
    let mut run = 0usize;
    for c in token.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= cap {
            out.push(c);
        }
    }
    out
}

fn normalize_word(raw: &str, rules: &NormalizationRules) -> Option<String> {
    if raw == URL_TOKEN || is_url(raw) {
        return Some(URL_TOKEN.to_string());
    }
    let lower = raw.to_lowercase();
    let stripped = lower.trim_matches(|c: char| !c.is_alphanumeric());
    if stripped.is_empty() {
        return None;
    }
    // "/r/funny" strips to "r/funny"
    if let Some(rest) = stripped.strip_prefix("r/") {
        if !rest.is_empty() {
            return Some(SUB_TOKEN.to_string());
        }
    }
    if let Some(rest) = stripped.strip_prefix("u/") {
        if !rest.is_empty() {
            return Some(USER_TOKEN.to_string());
        }
    }
    Some(collapse_repeats(stripped, rules.repeat_cap))
}

/// Lowercases, tokenizes on whitespace, replaces references and links with
/// placeholders, caps character repeats, and groups tokens by sentence.
///
/// Sentences end at a token whose trailing punctuation contains `.`, `!`
/// or `?`, and at every line break. Empty sentences are dropped.
pub fn normalize_tokens(body: &str, rules: &NormalizationRules) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    for line in body.lines() {
        let mut current: Vec<String> = Vec::new();
        for raw in line.split_whitespace() {
            let url = raw == URL_TOKEN || is_url(raw);
            if let Some(tok) = normalize_word(raw, rules) {
                current.push(tok);
            }
            // a link's trailing dot is part of the link, not a sentence end
            if !url && ends_sentence(raw) && !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            sentences.push(current);
        }
    }
    sentences
}

/// Renders normalized sentences back to text: tokens joined by spaces,
/// sentences by newlines. Normalizing the rendering reproduces the input.
pub fn render_sentences(sentences: &[Vec<String>]) -> String {
    sentences
        .iter()
        .map(|s| s.join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(s: &str) -> Vec<Vec<String>> {
        normalize_tokens(s, &NormalizationRules::default())
    }

    fn flat(s: &str) -> Vec<String> {
        norm(s).concat()
    }

    #[test]
    fn caps_repeated_characters() {
        assert_eq!(flat("loooool"), ["loool"]);
        assert_eq!(flat("aaa"), ["aaa"]);
        assert_eq!(flat("LOOOOOL!!!!"), ["loool"]);
    }

    #[test]
    fn replaces_references_and_links() {
        assert_eq!(flat("see r/funny now"), ["see", SUB_TOKEN, "now"]);
        assert_eq!(flat("ask /u/Someone pls"), ["ask", USER_TOKEN, "pls"]);
        assert_eq!(
            flat("go to https://example.com/a.b and www.x.org."),
            ["go", "to", URL_TOKEN, "and", URL_TOKEN]
        );
    }

    #[test]
    fn keeps_internal_apostrophes_and_hyphens() {
        assert_eq!(flat("\"That's well-known,\" she said"), ["that's", "well-known", "she", "said"]);
    }

    #[test]
    fn splits_sentences() {
        let s = norm("that's cool af haha. lol!\nok then");
        assert_eq!(
            s,
            vec![
                vec!["that's", "cool", "af", "haha"],
                vec!["lol"],
                vec!["ok", "then"]
            ]
        );
        assert_eq!(norm("no terminal punctuation here").len(), 1);
        assert!(norm("... !!! ?").is_empty());
    }

    #[test]
    fn link_dot_does_not_split() {
        assert_eq!(norm("see www.x.org. then").len(), 1);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(body in "([a-zA-Z'\\-]{1,8}[.!?,]?|r/[a-z]{1,5}|u/[A-Z]{1,4}|http://[a-z.]{1,6}|URL|[ \n]){1,30}") {
            let once = norm(&body);
            let twice = norm(&render_sentences(&once));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn idempotent_on_arbitrary_text(body in "\\PC{0,60}") {
            let once = norm(&body);
            prop_assert_eq!(norm(&render_sentences(&once)), once);
        }
    }
}
