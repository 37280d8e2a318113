//! Prompt templates and conversation rendering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::samples::FoilSample;
use crate::bridge::ChatTemplate;
use crate::error::{Error, Result};

pub const PAIRWISE_QUESTION: &str = "Which caption is a correct description of the image?";
pub const ANSWER_CUE: &str = "The correct answer is: (";
pub const MC_ANSWER_PREFIX: &str = "The best answer is: (";
pub const MC_ANSWER_REQUEST: &str = "The best answer is:";
pub const QA_ANSWER_PREFIX: &str = "The best short answer is:";
pub const EXPLAIN_REQUEST: &str = "Why? Please explain how you arrived at your answer.";
pub const EXPLANATION_PREFIX: &str = "Explanation:";
pub const COT_PREFIX: &str = "Let's think step by step:";
pub const MC_COT_INSTRUCTION: &str = "Please verbalize how you are thinking about the problem, then give your answer in the format \"The best answer is: (X)\". It's very important that you stick to this format.";
pub const QA_COT_INSTRUCTION: &str = "Please verbalize how you are thinking about the problem, then directly give a short answer to the question about the image.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

impl Choice {
    pub fn other(self) -> Self {
        match self {
            Choice::A => Choice::B,
            Choice::B => Choice::A,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Choice::A => "A",
            Choice::B => "B",
        }
    }
}

/// Question part of the pairwise prompt with the two options in the given order.
pub fn pairwise_question(first: &str, second: &str) -> String {
    format!("{PAIRWISE_QUESTION} Is it (A): \"{first}\" or is it (B): \"{second}\"?")
}

/// Pairwise caption-vs-foil prompt. The option order is drawn from `seed`;
/// the returned key is the letter of the true caption.
pub fn build_pairwise_prompt(sample: &FoilSample, seed: u64) -> (String, Choice) {
    let caption_first = caption_goes_first(seed);
    let (first, second, key) = if caption_first {
        (&sample.caption, &sample.foil, Choice::A)
    } else {
        (&sample.foil, &sample.caption, Choice::B)
    };
    (format!("{} {ANSWER_CUE}", pairwise_question(first, second)), key)
}

pub(crate) fn caption_goes_first(seed: u64) -> bool {
    ChaCha8Rng::seed_from_u64(seed).gen_bool(0.5)
}

pub fn alignment_question(sentence: &str) -> String {
    format!(
        "Here is a tentative caption for the image: \"{sentence}\". Does the caption accurately describe the image or is there something wrong with it? Choose one of the following answers: (A): The caption is correct; (B): The caption is incorrect."
    )
}

/// Image-sentence alignment prompt; (A) means the caption fits.
pub fn build_alignment_prompt(sentence: &str) -> Result<String> {
    if sentence.trim().is_empty() {
        return Err(Error::invalid("alignment prompt needs a non-empty sentence"));
    }
    Ok(format!("{} {ANSWER_CUE}", alignment_question(sentence)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Turn {
    User(String),
    /// Assistant text; the last assistant turn is the open prefix the model continues.
    Assistant(String),
}

/// Renders `turns` as a single prompt string.
pub fn render(template: ChatTemplate, turns: &[Turn]) -> String {
    let mut out = String::new();
    let mut first_user = true;
    for turn in turns {
        if !out.is_empty() {
            out.push(' ');
        }
        match (template, turn) {
            (ChatTemplate::UserAssistant, Turn::User(u)) => {
                out.push_str("USER: ");
                out.push_str(u);
            }
            (ChatTemplate::UserAssistant, Turn::Assistant(a)) => {
                out.push_str("ASSISTANT:");
                if !a.is_empty() {
                    out.push(' ');
                    out.push_str(a);
                }
            }
            (ChatTemplate::Inst, Turn::User(u)) => {
                out.push_str(if first_user { "[INST]: " } else { "[INST] " });
                out.push_str(u);
                out.push_str(" [/INST]");
            }
            (ChatTemplate::Inst, Turn::Assistant(a)) => {
                // The [/INST] marker already closed the user turn.
                if out.ends_with(' ') {
                    out.pop();
                }
                if !a.is_empty() {
                    out.push(' ');
                    out.push_str(a);
                }
            }
        }
        if matches!(turn, Turn::User(_)) {
            first_user = false;
        }
    }
    out
}

/// Number of words the template puts before the first user message.
pub fn user_prefix_words(_template: ChatTemplate) -> usize {
    // "USER:" and "[INST]:" are one word each.
    1
}

/// Appends a generated continuation to an assistant prefix.
pub fn continue_with(prefix: &str, generation: &str) -> String {
    let glue = prefix.is_empty()
        || prefix.ends_with('(')
        || prefix.ends_with(char::is_whitespace)
        || generation.starts_with(char::is_whitespace)
        || generation.is_empty();
    if glue {
        format!("{prefix}{generation}")
    } else {
        format!("{prefix} {generation}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FoilSample {
        FoilSample {
            id: "s1".into(),
            image: "img.jpg".into(),
            caption: "There are no people in the picture.".into(),
            foil: "There are people in the picture.".into(),
            phenomenon: "existence".into(),
        }
    }

    #[test]
    fn pairwise_template_is_byte_exact() {
        let s = sample();
        let seed = (0..100).find(|&s| caption_goes_first(s)).unwrap();
        let (prompt, key) = build_pairwise_prompt(&s, seed);
        assert_eq!(key, Choice::A);
        assert_eq!(
            prompt,
            "Which caption is a correct description of the image? Is it (A): \"There are no people in the picture.\" or is it (B): \"There are people in the picture.\"? The correct answer is: ("
        );
        let seed = (0..100).find(|&s| !caption_goes_first(s)).unwrap();
        let (prompt, key) = build_pairwise_prompt(&s, seed);
        assert_eq!(key, Choice::B);
        assert!(prompt.contains("(A): \"There are people in the picture.\""));
    }

    #[test]
    fn pairwise_order_is_balanced() {
        let a = (0..1000u64).filter(|&s| build_pairwise_prompt(&sample(), s).1 == Choice::A).count();
        assert!((450..=550).contains(&a), "{a} of 1000 keyed A");
    }

    #[test]
    fn alignment_template_is_byte_exact() {
        assert_eq!(
            build_alignment_prompt("A dog runs.").unwrap(),
            "Here is a tentative caption for the image: \"A dog runs.\". Does the caption accurately describe the image or is there something wrong with it? Choose one of the following answers: (A): The caption is correct; (B): The caption is incorrect. The correct answer is: ("
        );
        assert!(build_alignment_prompt("  ").is_err());
    }

    #[test]
    fn render_templates() {
        let turns = [
            Turn::User("Where is the horse?".into()),
            Turn::Assistant("The best short answer is: On sidewalk".into()),
            Turn::User(EXPLAIN_REQUEST.into()),
            Turn::Assistant(EXPLANATION_PREFIX.into()),
        ];
        assert_eq!(
            render(ChatTemplate::UserAssistant, &turns),
            "USER: Where is the horse? ASSISTANT: The best short answer is: On sidewalk USER: Why? Please explain how you arrived at your answer. ASSISTANT: Explanation:"
        );
        assert_eq!(
            render(ChatTemplate::Inst, &turns),
            "[INST]: Where is the horse? [/INST] The best short answer is: On sidewalk [INST] Why? Please explain how you arrived at your answer. [/INST] Explanation:"
        );
    }

    #[test]
    fn continuation_glue() {
        assert_eq!(continue_with("The best answer is: (", "A)"), "The best answer is: (A)");
        assert_eq!(continue_with("The best short answer is:", "On sidewalk"), "The best short answer is: On sidewalk");
        assert_eq!(continue_with("Explanation:", " Because."), "Explanation: Because.");
    }
}
