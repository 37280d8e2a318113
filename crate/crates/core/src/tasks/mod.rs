//! Task settings: prompts, samples, answer parsing and benchmark metrics.

mod metrics;
mod prompts;
mod samples;

pub use metrics::{
    alignment_key, compute_metrics, parse_choice, short_answer_matches, BenchmarkScores, CellCount, Judgement,
    MetricRecord, ParsedChoice, Setting,
};
pub use prompts::{
    alignment_question, build_alignment_prompt, build_pairwise_prompt, continue_with, pairwise_question, render,
    user_prefix_words, Choice, Turn, ANSWER_CUE, COT_PREFIX, EXPLAIN_REQUEST, EXPLANATION_PREFIX, MC_ANSWER_PREFIX,
    MC_ANSWER_REQUEST, MC_COT_INSTRUCTION, PAIRWISE_QUESTION, QA_ANSWER_PREFIX, QA_COT_INSTRUCTION,
};
pub use samples::{load_manifest, parse_manifest, FoilSample, ManifestSample, QaSample};

use crate::bridge::ChatTemplate;
use crate::text::words;

/// A sample in the form the consistency measures ask it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskItem {
    pub id: String,
    pub image: String,
    /// The question shown in the first user turn.
    pub question: String,
    pub format: AnswerFormat,
    /// Correct option or accepted answers, when known.
    pub key: Option<Choice>,
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    MultipleChoice,
    ShortAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSetting {
    #[default]
    Pairwise,
    Alignment,
}

impl std::str::FromStr for TaskSetting {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "pairwise" => Ok(Self::Pairwise),
            "alignment" => Ok(Self::Alignment),
            other => Err(crate::error::Error::invalid(format!("unknown task setting {other:?}"))),
        }
    }
}

impl TaskItem {
    /// Expands a manifest sample into the items it contributes. Foil samples
    /// give one pairwise item, or two alignment items (caption and foil).
    pub fn from_manifest(sample: &ManifestSample, setting: TaskSetting, seed: u64) -> Vec<TaskItem> {
        match sample {
            ManifestSample::Qa(q) => vec![TaskItem {
                id: q.id.clone(),
                image: q.image.clone(),
                question: q.question.clone(),
                format: AnswerFormat::ShortAnswer,
                key: None,
                answers: q.answers.clone(),
            }],
            ManifestSample::Foil(f) => match setting {
                TaskSetting::Pairwise => {
                    let (prompt, key) = build_pairwise_prompt(f, seed ^ id_salt(&f.id));
                    let question = prompt.trim_end_matches(ANSWER_CUE).trim_end().to_string();
                    vec![TaskItem {
                        id: f.id.clone(),
                        image: f.image.clone(),
                        question,
                        format: AnswerFormat::MultipleChoice,
                        key: Some(key),
                        answers: Vec::new(),
                    }]
                }
                TaskSetting::Alignment => [(&f.caption, "caption", Choice::A), (&f.foil, "foil", Choice::B)]
                    .into_iter()
                    .map(|(sentence, tag, key)| TaskItem {
                        id: format!("{}#{tag}", f.id),
                        image: f.image.clone(),
                        question: alignment_question(sentence),
                        format: AnswerFormat::MultipleChoice,
                        key: Some(key),
                        answers: Vec::new(),
                    })
                    .collect(),
            },
        }
    }

    pub fn with_question(&self, question: String) -> TaskItem {
        TaskItem {
            question,
            ..self.clone()
        }
    }

    pub fn answer_prefix(&self) -> &'static str {
        match self.format {
            AnswerFormat::MultipleChoice => MC_ANSWER_PREFIX,
            AnswerFormat::ShortAnswer => QA_ANSWER_PREFIX,
        }
    }

    pub fn cot_instruction(&self) -> &'static str {
        match self.format {
            AnswerFormat::MultipleChoice => MC_COT_INSTRUCTION,
            AnswerFormat::ShortAnswer => QA_COT_INSTRUCTION,
        }
    }

    /// `USER: <question> ASSISTANT: <answer prefix>`.
    pub fn answer_prompt(&self, template: ChatTemplate) -> String {
        render(
            template,
            &[Turn::User(self.question.clone()), Turn::Assistant(self.answer_prefix().into())],
        )
    }

    /// Answer prompt followed by the answer and the request for an explanation.
    pub fn posthoc_prompt(&self, template: ChatTemplate, answer: &str) -> String {
        render(
            template,
            &[
                Turn::User(self.question.clone()),
                Turn::Assistant(continue_with(self.answer_prefix(), answer)),
                Turn::User(EXPLAIN_REQUEST.into()),
                Turn::Assistant(EXPLANATION_PREFIX.into()),
            ],
        )
    }

    /// Question plus reasoning instruction, with the assistant turn opened
    /// by "Let's think step by step:". `extra` is appended to the user turn.
    pub fn cot_prompt(&self, template: ChatTemplate, extra: Option<&str>) -> String {
        let mut user = format!("{} {}", self.question, self.cot_instruction());
        if let Some(extra) = extra {
            user.push(' ');
            user.push_str(extra);
        }
        render(template, &[Turn::User(user), Turn::Assistant(COT_PREFIX.into())])
    }

    /// The CoT prompt continued with `cot` and a request for the final answer.
    pub fn cot_answer_prompt(&self, template: ChatTemplate, extra: Option<&str>, cot: &str) -> String {
        let mut user = format!("{} {}", self.question, self.cot_instruction());
        if let Some(extra) = extra {
            user.push(' ');
            user.push_str(extra);
        }
        let (request, prefix) = match self.format {
            AnswerFormat::MultipleChoice => (MC_ANSWER_REQUEST, "("),
            AnswerFormat::ShortAnswer => (QA_ANSWER_PREFIX, ""),
        };
        render(
            template,
            &[
                Turn::User(user),
                Turn::Assistant(continue_with(COT_PREFIX, cot)),
                Turn::User(request.into()),
                Turn::Assistant(prefix.into()),
            ],
        )
    }

    /// Range of prompt words holding the question in every prompt built from this item.
    pub fn question_span(&self, template: ChatTemplate) -> std::ops::Range<usize> {
        let start = user_prefix_words(template);
        start..start + words(&self.question).len()
    }
}

pub(crate) fn id_salt(id: &str) -> u64 {
    // FNV-1a, stable across platforms and releases.
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
