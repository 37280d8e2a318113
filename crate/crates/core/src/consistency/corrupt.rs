//! Chain-of-thought corruptions.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::MeasureKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    Truncate,
    Mistake,
    Filler,
    Paraphrase,
}

impl CorruptionMode {
    pub const ALL: [CorruptionMode; 4] = [
        CorruptionMode::Truncate,
        CorruptionMode::Mistake,
        CorruptionMode::Filler,
        CorruptionMode::Paraphrase,
    ];

    pub fn measure(self) -> MeasureKind {
        match self {
            CorruptionMode::Truncate => MeasureKind::EarlyAnswering,
            CorruptionMode::Mistake => MeasureKind::AddingMistakes,
            CorruptionMode::Filler => MeasureKind::FillerTokens,
            CorruptionMode::Paraphrase => MeasureKind::Paraphrasing,
        }
    }

    pub fn from_measure(kind: MeasureKind) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.measure() == kind)
    }
}

/// Inserts an error into a chain of thought. `None` when nothing can be changed.
pub trait MistakeGenerator: Send + Sync {
    fn add_mistake(&self, cot: &[String], seed: u64) -> Option<Vec<String>>;
}

/// Rewords a chain of thought without changing its meaning.
pub trait Paraphraser: Send + Sync {
    fn paraphrase(&self, cot: &[String], seed: u64) -> Vec<String>;
}

/// Leaves the text untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityParaphraser;

impl Paraphraser for IdentityParaphraser {
    fn paraphrase(&self, cot: &[String], _seed: u64) -> Vec<String> {
        cot.to_vec()
    }
}

/// Splits "(word)," into ("(", "word", "),").
fn split_punct(token: &str) -> (&str, &str, &str) {
    let start = token.find(|c: char| c.is_alphanumeric()).unwrap_or(token.len());
    let end = token
        .rfind(|c: char| c.is_alphanumeric())
        .map_or(start, |i| i + token[i..].chars().next().map_or(1, char::len_utf8));
    (&token[..start], &token[start..end], &token[end..])
}

fn match_case(template: &str, word: &str) -> String {
    let mut chars = template.chars();
    match chars.next() {
        Some(c) if c.is_uppercase() => {
            let mut out: String = word.chars().take(1).flat_map(char::to_uppercase).collect();
            out.extend(word.chars().skip(1));
            out
        }
        _ => word.to_string(),
    }
}

fn is_list_marker(token: &str) -> bool {
    let (pre, core, post) = split_punct(token);
    pre.is_empty() && !core.is_empty() && core.bytes().all(|b| b.is_ascii_digit()) && (post == "." || post == ")")
}

/// Flips one number (n to n+1, list markers excluded) or swaps one word for
/// its antonym; the candidate is chosen by `seed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleMistakes {
    pub antonyms: HashMap<String, String>,
}

impl MistakeGenerator for RuleMistakes {
    fn add_mistake(&self, cot: &[String], seed: u64) -> Option<Vec<String>> {
        let candidates: Vec<(usize, String)> = cot
            .iter()
            .enumerate()
            .filter_map(|(i, tok)| {
                let (pre, core, post) = split_punct(tok);
                if core.is_empty() {
                    return None;
                }
                if core.bytes().all(|b| b.is_ascii_digit()) {
                    if is_list_marker(tok) {
                        return None;
                    }
                    let n: u128 = core.parse().ok()?;
                    return Some((i, format!("{pre}{}{post}", n + 1)));
                }
                let swap = self.antonyms.get(&core.to_lowercase())?;
                Some((i, format!("{pre}{}{post}", match_case(core, swap))))
            })
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let (i, replacement) = &candidates[ChaCha8Rng::seed_from_u64(seed).gen_range(0..candidates.len())];
        let mut out = cot.to_vec();
        out[*i] = replacement.clone();
        Some(out)
    }
}

/// Substitutes every word found in a fixed replacement table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymParaphraser {
    pub table: HashMap<String, String>,
}

impl Paraphraser for SynonymParaphraser {
    fn paraphrase(&self, cot: &[String], _seed: u64) -> Vec<String> {
        cot.iter()
            .map(|tok| {
                let (pre, core, post) = split_punct(tok);
                match self.table.get(&core.to_lowercase()) {
                    Some(sub) => format!("{pre}{}{post}", match_case(core, sub)),
                    None => tok.clone(),
                }
            })
            .collect()
    }
}

pub struct Corruptor {
    pub truncate_fraction: f64,
    pub mistakes: Box<dyn MistakeGenerator>,
    pub paraphraser: Box<dyn Paraphraser>,
}

impl Corruptor {
    /// Corrupts the words of a chain of thought. Deterministic in (cot, mode, seed).
    pub fn corrupt(&self, cot: &[String], mode: CorruptionMode, seed: u64) -> Result<Vec<String>> {
        if cot.is_empty() {
            return Err(Error::invalid("cannot corrupt an empty chain of thought"));
        }
        match mode {
            CorruptionMode::Truncate => {
                let keep = (self.truncate_fraction * cot.len() as f64).ceil() as usize;
                Ok(cot[..keep.clamp(1, cot.len())].to_vec())
            }
            CorruptionMode::Filler => Ok(vec!["...".to_string(); cot.len()]),
            CorruptionMode::Mistake => self
                .mistakes
                .add_mistake(cot, seed)
                .ok_or_else(|| Error::invalid("no number or antonym to alter in the chain of thought")),
            CorruptionMode::Paraphrase => Ok(self.paraphraser.paraphrase(cot, seed)),
        }
    }
}
