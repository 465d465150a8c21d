/// Placeholder for links.
pub const URL: &str = "<url>";
/// Placeholder for `@user` mentions.
pub const MENTION: &str = "<mention>";

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// Lowercases, replaces links and mentions with placeholders, and splits
/// punctuation into separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            out.push(URL.to_string());
            continue;
        }
        let mut rest = chunk;
        if let Some(after) = rest.strip_prefix('@') {
            let end = after.find(|c: char| !(c.is_alphanumeric() || c == '_')).unwrap_or(after.len());
            if end > 0 {
                out.push(MENTION.to_string());
                rest = &after[end..];
            }
        }
        let mut word = String::new();
        for c in rest.chars() {
            if is_word_char(c) {
                word.extend(c.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.extend(c.to_lowercase().map(String::from));
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mention_and_punctuation() {
        assert_eq!(tokenize("@CP24 True?"), vec![MENTION, "true", "?"]);
    }

    #[test]
    fn urls_and_case() {
        assert_eq!(
            tokenize("Look: https://t.co/abc WOW!!"),
            vec!["look", ":", URL, "wow", "!", "!"]
        );
        assert_eq!(tokenize("doesn't"), vec!["doesn't"]);
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn bare_at_sign_is_punctuation() {
        assert_eq!(tokenize("@ home"), vec!["@", "home"]);
        assert_eq!(tokenize("@a_b, hi"), vec![MENTION, ",", "hi"]);
    }
}
