use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::Token;
use crate::{Error, Result};

/// A coarse universal-style part-of-speech tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Pron,
    Det,
    Adp,
    Num,
    Conj,
    Prt,
    Punct,
    X,
}

impl PosTag {
    pub const ALL: [PosTag; 12] = [
        PosTag::Noun,
        PosTag::Verb,
        PosTag::Adj,
        PosTag::Adv,
        PosTag::Pron,
        PosTag::Det,
        PosTag::Adp,
        PosTag::Num,
        PosTag::Conj,
        PosTag::Prt,
        PosTag::Punct,
        PosTag::X,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Pron => "PRON",
            PosTag::Det => "DET",
            PosTag::Adp => "ADP",
            PosTag::Num => "NUM",
            PosTag::Conj => "CONJ",
            PosTag::Prt => "PRT",
            PosTag::Punct => "PUNCT",
            PosTag::X => "X",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tag `{s}`"))
    }
}

const BUNDLED_LEXICON: &str = include_str!("../../data/pos_lexicon.tsv");
const BUNDLED_SUFFIXES: &str = include_str!("../../data/suffix_rules.tsv");

/// Lexicon lookup, then the longest matching suffix rule, then NOUN.
/// Non-word tokens are PUNCT; digit strings are NUM.
#[derive(Clone, Debug)]
pub struct PosTagger {
    lexicon: HashMap<String, PosTag>,
    suffixes: Vec<(String, PosTag)>,
}

fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(String, PosTag)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (word, tag) = line
            .split_once('\t')
            .ok_or_else(|| malformed("expected `entry<TAB>TAG`".into()))?;
        let tag = tag.trim().parse().map_err(malformed)?;
        out.push((word.trim().to_lowercase(), tag));
    }
    Ok(out)
}

impl PosTagger {
    pub fn bundled() -> Self {
        PosTagger::from_strs(BUNDLED_LEXICON, BUNDLED_SUFFIXES, Path::new("<bundled>"))
            .expect("bundled tagger data is well formed")
    }

    pub fn from_files(lexicon: &Path, suffixes: &Path) -> Result<Self> {
        let lex = std::fs::read_to_string(lexicon).map_err(|e| Error::io(lexicon, e))?;
        let suf = std::fs::read_to_string(suffixes).map_err(|e| Error::io(suffixes, e))?;
        let mut t = PosTagger::from_strs(&lex, BUNDLED_SUFFIXES, lexicon)?;
        t.suffixes = PosTagger::from_strs("", &suf, suffixes)?.suffixes;
        Ok(t)
    }

    fn from_strs(lexicon: &str, suffixes: &str, path: &Path) -> Result<Self> {
        let lexicon = parse_pairs(lexicon, path)?.into_iter().collect();
        let mut suffixes = parse_pairs(suffixes, path)?;
        suffixes.sort_by(|a, b| b.0.chars().count().cmp(&a.0.chars().count()).then(a.0.cmp(&b.0)));
        Ok(PosTagger { lexicon, suffixes })
    }

    pub fn tag_one(&self, token: &Token) -> PosTag {
        if !token.is_word() {
            return PosTag::Punct;
        }
        let lower = token.surface().to_lowercase();
        if let Some(&t) = self.lexicon.get(&lower) {
            return t;
        }
        let has_digit = lower.chars().any(|c| c.is_ascii_digit());
        let has_alpha = lower.chars().any(char::is_alphabetic);
        if has_digit && !has_alpha {
            return PosTag::Num;
        }
        if has_digit || !has_alpha {
            return PosTag::X;
        }
        let len = lower.chars().count();
        for (suffix, tag) in &self.suffixes {
            if len > suffix.chars().count() && lower.ends_with(suffix.as_str()) {
                return *tag;
            }
        }
        PosTag::Noun
    }

    pub fn tag(&self, tokens: &[Token]) -> Vec<PosTag> {
        tokens.iter().map(|t| self.tag_one(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn lexicon_first() {
        let t = PosTagger::bundled();
        assert_eq!(t.tag(&tokenize("the")), [PosTag::Det]);
        assert_eq!(t.tag(&tokenize("The")), [PosTag::Det]);
    }

    #[test]
    fn suffix_rules() {
        let t = PosTagger::bundled();
        assert_eq!(t.tag(&tokenize("blorfly")), [PosTag::Adv]);
        assert_eq!(t.tag(&tokenize("zarbing")), [PosTag::Verb]);
        assert_eq!(t.tag(&tokenize("glimmerousness")), [PosTag::Noun]);
        assert_eq!(t.tag(&tokenize("qwx")), [PosTag::Noun]);
    }

    #[test]
    fn punctuation_and_numbers() {
        let t = PosTagger::bundled();
        assert_eq!(t.tag(&tokenize("1984 , a1")), [PosTag::Num, PosTag::Punct, PosTag::X]);
        assert!(t.tag(&[]).is_empty());
    }

    #[test]
    fn custom_files() {
        let dir = tempfile::tempdir().unwrap();
        let lex = dir.path().join("lex.tsv");
        let suf = dir.path().join("suf.tsv");
        std::fs::write(&lex, "cat\tVERB\n").unwrap();
        std::fs::write(&suf, "at\tADJ\nt\tADV\n").unwrap();
        let t = PosTagger::from_files(&lex, &suf).unwrap();
        assert_eq!(t.tag(&tokenize("cat mat pot the")), [PosTag::Verb, PosTag::Adj, PosTag::Adv, PosTag::Noun]);
        std::fs::write(&suf, "at ADJ\n").unwrap();
        assert!(matches!(PosTagger::from_files(&lex, &suf), Err(Error::Malformed { line: 1, .. })));
    }
}
