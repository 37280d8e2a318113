//! Self-consistency from input contributions.
//!
//! The answer and the explanation are attributed separately; their
//! contribution distributions over the question words and image patches
//! (the positions both prompts share) are then compared.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmshap::score_episode;
use crate::session::{Generation, Session};
use crate::shapley::{attribute, EstimatorProvenance};
use crate::tasks::TaskItem;
use crate::types::{ConsistencyRecord, GenerationEpisode, MeasureKind, TranscriptEntry};

/// Contributions on the positions common to both contexts.
///
/// Positions index the original input: question words first, then patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionVector {
    pub values: Vec<f64>,
    pub positions: Vec<usize>,
}

impl ContributionVector {
    pub fn new(values: Vec<f64>, positions: Vec<usize>) -> Result<Self> {
        if values.len() != positions.len() {
            return Err(Error::invalid("contribution values and positions differ in length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("contribution values must be finite"));
        }
        Ok(Self { values, positions })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    Pearson,
}

impl std::str::FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "pearson" => Ok(Self::Pearson),
            other => Err(Error::invalid(format!("unknown similarity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcShapValue {
    pub value: f64,
    /// One vector had nothing to compare (all zero, or constant under Pearson).
    pub degenerate: bool,
}

/// Similarity of two contribution vectors, in [−1, 1].
pub fn cc_shap(a: &ContributionVector, b: &ContributionVector, similarity: Similarity) -> Result<CcShapValue> {
    if a.positions != b.positions {
        return Err(Error::invalid("contribution vectors cover different positions"));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = match similarity {
        Similarity::Cosine => (a.values.clone(), b.values.clone()),
        Similarity::Pearson => (centred(&a.values), centred(&b.values)),
    };
    let (x, y) = (rescaled(&x), rescaled(&y));
    let (sxx, syy): (f64, f64) = (x.iter().map(|v| v * v).sum(), y.iter().map(|v| v * v).sum());
    if sxx == 0.0 || syy == 0.0 {
        return Ok(CcShapValue {
            value: 0.0,
            degenerate: true,
        });
    }
    let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
    Ok(CcShapValue {
        value: (dot / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

fn centred(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// Divides by the largest magnitude so tiny contributions do not underflow.
fn rescaled(v: &[f64]) -> Vec<f64> {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / max).collect()
}

/// Mean over samples that produced a value.
pub fn mean_cc_shap(records: &[ConsistencyRecord]) -> Option<f64> {
    let values: Vec<f64> = records.iter().filter_map(ConsistencyRecord::value).collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Picks the shared positions out of per-feature contributions of an episode
/// whose prompt holds the question at `question_span`.
pub fn restrict_to_shared(
    contributions: &[f64],
    episode: &GenerationEpisode,
    question_span: Range<usize>,
) -> Result<ContributionVector> {
    let input = &episode.input;
    if contributions.len() != input.len() || question_span.end > input.text_len() {
        return Err(Error::invalid("question span does not fit the episode"));
    }
    let nq = question_span.len();
    let mut values = Vec::with_capacity(nq + input.image_len());
    let mut positions = Vec::with_capacity(nq + input.image_len());
    for (k, j) in question_span.enumerate() {
        values.push(contributions[j]);
        positions.push(k);
    }
    for (k, v) in contributions[input.text_len()..].iter().enumerate() {
        values.push(*v);
        positions.push(nq + k);
    }
    ContributionVector::new(values, positions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationMode {
    PostHoc,
    Cot,
}

impl ExplanationMode {
    pub fn measure(self) -> MeasureKind {
        match self {
            ExplanationMode::PostHoc => MeasureKind::CcShapPosthoc,
            ExplanationMode::Cot => MeasureKind::CcShapCot,
        }
    }
}

/// One attributed generation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGeneration {
    pub generation: Generation,
    pub episode: GenerationEpisode,
    pub contributions: ContributionVector,
    pub t_shap: Option<f64>,
    pub provenance: EstimatorProvenance,
}

/// Everything a CC-SHAP record keeps besides the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcShapDetails {
    pub prediction: ContributionVector,
    pub explanation: ContributionVector,
    pub prediction_t_shap: Option<f64>,
    pub explanation_t_shap: Option<f64>,
    pub prediction_tokens: Vec<String>,
    pub explanation_tokens: Vec<String>,
    /// The question words, i.e. the text part of the shared positions.
    pub question_tokens: Vec<String>,
    pub grid_side: usize,
    pub estimator: EstimatorProvenance,
}

fn attribute_generation(session: &Session, item: &TaskItem, generation: Generation) -> Result<AttributedGeneration> {
    let template = session.template()?;
    let episode = session.episode(&generation, &item.image)?;
    let attribution = attribute(&episode, session.bridge, &session.shapley)?;
    let (agg, score) = score_episode(&attribution.matrix, &episode.input, session.agg_mode)?;
    let contributions = restrict_to_shared(&agg.phi_bar, &episode, item.question_span(template))?;
    Ok(AttributedGeneration {
        generation,
        episode,
        contributions,
        t_shap: score.t_shap(),
        provenance: attribution.provenance,
    })
}

fn nonempty(generation: Generation, what: &str) -> Result<Generation> {
    if generation.text().trim().is_empty() {
        return Err(Error::invalid(format!("empty {what} generation")));
    }
    Ok(generation)
}

/// Generates and attributes the answer to the item's question.
pub fn prediction_contributions(session: &Session, item: &TaskItem) -> Result<AttributedGeneration> {
    let template = session.template()?;
    let prompt = item.answer_prompt(template);
    let generation = session.generate(&prompt, &item.image, session.limits.answer, None)?;
    attribute_generation(session, item, nonempty(generation, "answer")?)
}

/// Generates and attributes an explanation. Post-hoc mode explains
/// `answer`; CoT mode reasons before answering and ignores it. The patch
/// grid of `grid_side` is kept so image positions line up.
pub fn explanation_contributions(
    session: &Session,
    item: &TaskItem,
    mode: ExplanationMode,
    answer: &str,
    grid_side: usize,
) -> Result<AttributedGeneration> {
    let template = session.template()?;
    let prompt = match mode {
        ExplanationMode::PostHoc => item.posthoc_prompt(template, answer),
        ExplanationMode::Cot => item.cot_prompt(template, None),
    };
    let generation = session.generate(&prompt, &item.image, session.limits.explanation, Some(grid_side))?;
    attribute_generation(session, item, nonempty(generation, "explanation")?)
}

/// Runs the whole measurement for one item. Failures that make the sample
/// unusable become a skipped record rather than an error.
pub fn measure(session: &Session, item: &TaskItem, mode: ExplanationMode, similarity: Similarity) -> ConsistencyRecord {
    let measure = mode.measure();
    let seed = session.shapley.seed;
    let mut transcript = Vec::new();
    let prediction = match prediction_contributions(session, item) {
        Ok(p) => p,
        Err(e) => return ConsistencyRecord::skipped(&item.id, measure, e.to_string(), transcript, seed),
    };
    transcript.push(TranscriptEntry::new(
        "prediction",
        &prediction.generation.prompt,
        prediction.generation.text(),
    ));
    let explanation = match explanation_contributions(
        session,
        item,
        mode,
        &prediction.generation.text(),
        prediction.generation.grid_side,
    ) {
        Ok(e) => e,
        Err(e) => return ConsistencyRecord::skipped(&item.id, measure, e.to_string(), transcript, seed),
    };
    transcript.push(TranscriptEntry::new(
        "explanation",
        &explanation.generation.prompt,
        explanation.generation.text(),
    ));
    let value = match cc_shap(&prediction.contributions, &explanation.contributions, similarity) {
        Ok(v) => v,
        Err(e) => return ConsistencyRecord::skipped(&item.id, measure, e.to_string(), transcript, seed),
    };
    let details = CcShapDetails {
        question_tokens: crate::text::words(&item.question),
        grid_side: prediction.generation.grid_side,
        prediction_t_shap: prediction.t_shap,
        explanation_t_shap: explanation.t_shap,
        prediction_tokens: prediction.generation.tokens,
        explanation_tokens: explanation.generation.tokens,
        prediction: prediction.contributions,
        explanation: explanation.contributions,
        estimator: prediction.provenance,
    };
    ConsistencyRecord::score(
        &item.id,
        measure,
        value.value,
        value.degenerate,
        transcript,
        seed,
        Some(details),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(values: &[f64]) -> ContributionVector {
        ContributionVector::new(values.to_vec(), (0..values.len()).collect()).unwrap()
    }

    #[test]
    fn boundary_values() {
        let a = cv(&[0.5, -0.25, 0.25]);
        let neg = cv(&[-0.5, 0.25, -0.25]);
        assert_eq!(cc_shap(&a, &a, Similarity::Cosine).unwrap().value, 1.0);
        assert_eq!(cc_shap(&a, &neg, Similarity::Cosine).unwrap().value, -1.0);
        assert_eq!(cc_shap(&cv(&[1.0, 0.0]), &cv(&[0.0, 2.0]), Similarity::Cosine).unwrap().value, 0.0);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        let v = cc_shap(&cv(&[0.0, 0.0]), &cv(&[1.0, 2.0]), Similarity::Cosine).unwrap();
        assert_eq!(v, CcShapValue { value: 0.0, degenerate: true });
        let v = cc_shap(&cv(&[3.0, 3.0]), &cv(&[1.0, 2.0]), Similarity::Pearson).unwrap();
        assert!(v.degenerate);
    }

    #[test]
    fn position_mismatch() {
        let b = ContributionVector::new(vec![1.0, 2.0], vec![0, 2]).unwrap();
        assert!(cc_shap(&cv(&[1.0, 2.0]), &b, Similarity::Cosine).is_err());
        assert!(ContributionVector::new(vec![f64::NAN], vec![0]).is_err());
    }

    #[test]
    fn pearson_ignores_offsets() {
        let v = cc_shap(&cv(&[1.0, 2.0, 3.0]), &cv(&[11.0, 12.0, 13.0]), Similarity::Pearson).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_values_do_not_underflow() {
        let a = cv(&[1e-200, 2e-200]);
        assert!((cc_shap(&a, &a, Similarity::Cosine).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restriction_keeps_question_and_patches() {
        let input = crate::types::MultimodalInput::build(["USER:", "q1", "q2", "ASSISTANT:"], 2, "img").unwrap();
        let ep = GenerationEpisode::new(input, vec!["A".into()]).unwrap();
        let contributions: Vec<f64> = (0..8).map(f64::from).collect();
        let v = restrict_to_shared(&contributions, &ep, 1..3).unwrap();
        assert_eq!(v.values, vec![1.0, 2.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(v.positions, vec![0, 1, 2, 3, 4, 5]);
        assert!(restrict_to_shared(&contributions, &ep, 1..5).is_err());
    }
}
