//! Answer parsing and benchmark scores.

use serde::{Deserialize, Serialize};

use super::prompts::Choice;
use crate::text::fold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedChoice {
    A,
    B,
    Unparseable,
}

impl ParsedChoice {
    pub fn choice(self) -> Option<Choice> {
        match self {
            ParsedChoice::A => Some(Choice::A),
            ParsedChoice::B => Some(Choice::B),
            ParsedChoice::Unparseable => None,
        }
    }
}

impl From<Choice> for ParsedChoice {
    fn from(c: Choice) -> Self {
        match c {
            Choice::A => ParsedChoice::A,
            Choice::B => ParsedChoice::B,
        }
    }
}

fn letter(c: char) -> Option<ParsedChoice> {
    match c {
        'A' => Some(ParsedChoice::A),
        'B' => Some(ParsedChoice::B),
        _ => None,
    }
}

/// Reads an A/B answer from a generation.
///
/// Looks right after the last `(` first, then for the first standalone
/// `A` or `B` token. Case-sensitive, so the article "a" never counts.
pub fn parse_choice(generation: &str) -> ParsedChoice {
    if let Some(i) = generation.rfind('(') {
        if let Some(p) = generation[i + 1..].chars().next().and_then(letter) {
            return p;
        }
    }
    generation
        .split(|c: char| !c.is_alphanumeric())
        .find_map(|tok| match tok {
            "A" => Some(ParsedChoice::A),
            "B" => Some(ParsedChoice::B),
            _ => None,
        })
        .unwrap_or(ParsedChoice::Unparseable)
}

/// Case-folded exact match against any reference answer, ignoring
/// surrounding punctuation.
pub fn short_answer_matches(generation: &str, answers: &[String]) -> bool {
    let norm = |s: &str| fold(s).trim_matches(|c: char| c.is_ascii_punctuation()).trim().to_string();
    let g = norm(generation);
    answers.iter().any(|a| norm(a) == g)
}

/// Which benchmark cell a scored answer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Alignment prompt shown the true caption.
    AlignmentCaption,
    /// Alignment prompt shown the foil.
    AlignmentFoil,
    /// Caption-vs-foil ranking prompt.
    Pairwise,
    /// Free-form question answering.
    ShortAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgement {
    Correct,
    Incorrect,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub sample_id: String,
    pub setting: Setting,
    pub judgement: Judgement,
}

impl MetricRecord {
    /// Judges a multiple-choice generation against its key.
    pub fn judge(sample_id: impl Into<String>, setting: Setting, generation: &str, key: Choice) -> Self {
        let judgement = match parse_choice(generation).choice() {
            None => Judgement::Unparseable,
            Some(c) if c == key => Judgement::Correct,
            Some(_) => Judgement::Incorrect,
        };
        Self {
            sample_id: sample_id.into(),
            setting,
            judgement,
        }
    }
}

/// Correct answer of an alignment prompt: (A) for the caption, (B) for the foil.
pub fn alignment_key(setting: Setting) -> Choice {
    match setting {
        Setting::AlignmentFoil => Choice::B,
        _ => Choice::A,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub correct: usize,
    pub incorrect: usize,
    pub unparseable: usize,
}

impl CellCount {
    pub fn total(&self) -> usize {
        self.correct + self.incorrect + self.unparseable
    }

    /// Percentage correct; unparseable answers count against it.
    pub fn percent(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| 100.0 * self.correct as f64 / n as f64)
    }

    fn add(&mut self, j: Judgement) {
        match j {
            Judgement::Correct => self.correct += 1,
            Judgement::Incorrect => self.incorrect += 1,
            Judgement::Unparseable => self.unparseable += 1,
        }
    }
}

/// Percentages are `None` when their cell is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScores {
    pub p_c: Option<f64>,
    pub p_f: Option<f64>,
    /// Mean of `p_c` and `p_f`.
    pub acc: Option<f64>,
    pub acc_r: Option<f64>,
    pub vqa_acc: Option<f64>,
    pub caption: CellCount,
    pub foil: CellCount,
    pub pairwise: CellCount,
    pub short_answer: CellCount,
}

pub fn compute_metrics(records: &[MetricRecord]) -> BenchmarkScores {
    let mut caption = CellCount::default();
    let mut foil = CellCount::default();
    let mut pairwise = CellCount::default();
    let mut short_answer = CellCount::default();
    for r in records {
        let cell = match r.setting {
            Setting::AlignmentCaption => &mut caption,
            Setting::AlignmentFoil => &mut foil,
            Setting::Pairwise => &mut pairwise,
            Setting::ShortAnswer => &mut short_answer,
        };
        cell.add(r.judgement);
    }
    BenchmarkScores {
        p_c: caption.percent(),
        p_f: foil.percent(),
        acc: match (caption.percent(), foil.percent()) {
            (Some(c), Some(f)) => Some((c + f) / 2.0),
            _ => None,
        },
        acc_r: pairwise.percent(),
        vqa_acc: short_answer.percent(),
        caption,
        foil,
        pairwise,
        short_answer,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(setting: Setting, correct: usize, wrong: usize) -> Vec<MetricRecord> {
        (0..correct + wrong)
            .map(|i| MetricRecord {
                sample_id: format!("{i}"),
                setting,
                judgement: if i < correct { Judgement::Correct } else { Judgement::Incorrect },
            })
            .collect()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_choice("A)"), ParsedChoice::A);
        assert_eq!(parse_choice("The best answer is: (B)"), ParsedChoice::B);
        assert_eq!(parse_choice("a girl in a green shirt"), ParsedChoice::Unparseable);
        assert_eq!(parse_choice("(A) no wait, (B)"), ParsedChoice::B);
        assert_eq!(parse_choice("(x) B is right"), ParsedChoice::B);
        assert_eq!(parse_choice(""), ParsedChoice::Unparseable);
    }

    #[test]
    fn table_row_average() {
        let mut r = recs(Setting::AlignmentCaption, 71, 29);
        r.extend(recs(Setting::AlignmentFoil, 47, 53));
        let s = compute_metrics(&r);
        assert_eq!(s.p_c, Some(71.0));
        assert_eq!(s.p_f, Some(47.0));
        assert_eq!(s.acc, Some(59.0));
        assert_eq!(s.acc_r, None);
    }

    #[test]
    fn unparseable_scores_incorrect() {
        let r = vec![
            MetricRecord::judge("1", Setting::Pairwise, "A)", Choice::A),
            MetricRecord::judge("2", Setting::Pairwise, "hmm", Choice::A),
        ];
        let s = compute_metrics(&r);
        assert_eq!(s.acc_r, Some(50.0));
        assert_eq!(s.pairwise.unparseable, 1);
    }

    #[test]
    fn empty_is_undefined() {
        let s = compute_metrics(&[]);
        assert!(s.p_c.is_none() && s.p_f.is_none() && s.acc.is_none() && s.acc_r.is_none());
    }

    #[test]
    fn short_answers() {
        assert!(short_answer_matches(" On sidewalk.", &["on sidewalk".into()]));
        assert!(!short_answer_matches("a girl in a green shirt", &["sidewalk".into()]));
    }
}
