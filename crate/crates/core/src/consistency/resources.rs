//! Word lists and rule tables for the edit tests.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

const INSERTION_WORDS: &str = include_str!("../../data/insertion_words.txt");
const STOPWORDS: &str = include_str!("../../data/stopwords.txt");
const ANTONYMS: &str = include_str!("../../data/antonyms.txt");
const SYNONYMS: &str = include_str!("../../data/synonyms.txt");

fn entries(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_word_list(text: &str) -> Vec<String> {
    entries(text).map(str::to_string).collect()
}

/// Two whitespace-separated words per line.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    entries(text)
        .map(|line| {
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => Ok((a.to_lowercase(), b.to_lowercase())),
                _ => Err(Error::invalid(format!("rule table line {line:?} is not a word pair"))),
            }
        })
        .collect()
}

/// Pairs read in both directions; the first mapping of a word wins.
pub fn symmetric_table(pairs: &[(String, String)]) -> HashMap<String, String> {
    let mut map = HashMap::new();
    for (a, b) in pairs {
        map.entry(a.clone()).or_insert_with(|| b.clone());
        map.entry(b.clone()).or_insert_with(|| a.clone());
    }
    map
}

pub fn directed_table(pairs: &[(String, String)]) -> HashMap<String, String> {
    let mut map = HashMap::new();
    for (a, b) in pairs {
        map.entry(a.clone()).or_insert_with(|| b.clone());
    }
    map
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordLists {
    pub insertion_words: Vec<String>,
    pub stopwords: HashSet<String>,
    pub antonyms: HashMap<String, String>,
    pub synonyms: HashMap<String, String>,
}

impl WordLists {
    /// The lists shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_texts(INSERTION_WORDS, STOPWORDS, ANTONYMS, SYNONYMS).expect("bundled word lists parse")
    }

    fn from_texts(insertion: &str, stop: &str, antonyms: &str, synonyms: &str) -> Result<Self> {
        let insertion_words = parse_word_list(insertion);
        if insertion_words.is_empty() {
            return Err(Error::invalid("insertion word list is empty"));
        }
        Ok(Self {
            insertion_words,
            stopwords: parse_word_list(stop).into_iter().map(|w| w.to_lowercase()).collect(),
            antonyms: symmetric_table(&parse_pairs(antonyms)?),
            synonyms: directed_table(&parse_pairs(synonyms)?),
        })
    }

    /// Bundled lists, each replaced by the same-named file in `dir` when present.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str, fallback: &'static str| -> Result<String> {
            let path = dir.join(name);
            if path.exists() {
                Ok(std::fs::read_to_string(path)?)
            } else {
                Ok(fallback.to_string())
            }
        };
        Self::from_texts(
            &read("insertion_words.txt", INSERTION_WORDS)?,
            &read("stopwords.txt", STOPWORDS)?,
            &read("antonyms.txt", ANTONYMS)?,
            &read("synonyms.txt", SYNONYMS)?,
        )
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&word.to_lowercase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lists_load() {
        let w = WordLists::bundled();
        for word in ["trial-and-error", "allogamous", "geothermic"] {
            assert!(w.insertion_words.iter().any(|x| x == word));
        }
        assert_eq!(w.antonyms["no"], "some");
        assert_eq!(w.antonyms["some"], "no");
        assert!(w.is_stopword("The"));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("insertion_words.txt"), "zany\n").unwrap();
        let w = WordLists::from_dir(dir.path()).unwrap();
        assert_eq!(w.insertion_words, vec!["zany"]);
        assert!(!w.antonyms.is_empty());
        std::fs::write(dir.path().join("insertion_words.txt"), "# nothing\n").unwrap();
        assert!(WordLists::from_dir(dir.path()).is_err());
    }

    #[test]
    fn bad_pair_line() {
        assert!(parse_pairs("one two three").is_err());
    }
}
