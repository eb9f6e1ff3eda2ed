use serde::{Deserialize, Serialize};

/// A word or a punctuation mark.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    surface: String,
    is_word: bool,
}

impl Token {
    /// Panics on an empty surface.
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        assert!(!surface.is_empty(), "empty token");
        let is_word = surface.chars().any(char::is_alphanumeric);
        Token { surface, is_word }
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn is_word(&self) -> bool {
        self.is_word
    }

    /// Length in characters.
    pub fn char_len(&self) -> usize {
        self.surface.chars().count()
    }
}

/// Splits on whitespace, then peels leading and trailing non-alphanumeric
/// characters off each piece as one-character punctuation tokens. Anything
/// between the first and last alphanumeric character (apostrophes, hyphens,
/// inner dots) stays inside the word.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let chars: Vec<(usize, char)> = piece.char_indices().collect();
        let first = chars.iter().position(|(_, c)| c.is_alphanumeric());
        let Some(first) = first else {
            out.extend(chars.iter().map(|(_, c)| Token::new(c.to_string())));
            continue;
        };
        let last = chars.iter().rposition(|(_, c)| c.is_alphanumeric()).unwrap_or(first);
        out.extend(chars[..first].iter().map(|(_, c)| Token::new(c.to_string())));
        let start = chars[first].0;
        let end = chars[last].0 + chars[last].1.len_utf8();
        out.push(Token::new(&piece[start..end]));
        out.extend(chars[last + 1..].iter().map(|(_, c)| Token::new(c.to_string())));
    }
    out
}

/// Joins surfaces with single spaces.
pub fn detokenize(tokens: &[Token]) -> String {
    let mut s = String::with_capacity(tokens.iter().map(|t| t.surface.len() + 1).sum());
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&t.surface);
    }
    s
}

pub fn word_count(tokens: &[Token]) -> usize {
    tokens.iter().filter(|t| t.is_word).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(Token::surface).collect()
    }

    #[test]
    fn splits_punctuation() {
        let t = tokenize("Hello, world!");
        assert_eq!(surfaces(&t), ["Hello", ",", "world", "!"]);
        assert_eq!(t.iter().map(Token::is_word).collect::<Vec<_>>(), [true, false, true, false]);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \n\t ").is_empty());
    }

    #[test]
    fn keeps_inner_apostrophes_and_hyphens() {
        let t = tokenize("\"Don't\" well-known U.S. (ok)...");
        assert_eq!(
            surfaces(&t),
            ["\"", "Don't", "\"", "well-known", "U.S", ".", "(", "ok", ")", ".", ".", "."]
        );
    }

    #[test]
    fn hand_counted_paragraph() {
        let para = include_str!("../../tests/data/paragraph.txt");
        let reference: Vec<&str> = include_str!("../../tests/data/paragraph.tokens").lines().collect();
        assert_eq!(reference.len(), 67);
        assert_eq!(surfaces(&tokenize(para)), reference);
        assert_eq!(word_count(&tokenize(para)), 56);
    }

    proptest! {
        #[test]
        fn retokenizing_is_stable(s in "[ a-zA-Z0-9,.;:!?'\"()\\-]{0,120}") {
            let once = tokenize(&s);
            let twice = tokenize(&detokenize(&once));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn words_survive_a_round_trip(s in "\\PC{0,80}") {
            let toks = tokenize(&s);
            for t in &toks {
                prop_assert!(!t.surface().is_empty());
                prop_assert_eq!(t.is_word(), t.surface().chars().any(char::is_alphanumeric));
            }
            prop_assert_eq!(tokenize(&detokenize(&toks)), toks);
        }
    }
}
