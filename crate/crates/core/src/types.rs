//! Domain types shared by every stage of the pipeline.
//!
//! The flat feature index puts all text positions first and all image-patch
//! positions after them, row-major over the patch grid. Masks travel over
//! the wire in that same order.

use serde::{Deserialize, Serialize};

use crate::ccshap::CcShapDetails;
use crate::consistency::EditTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextToken {
    pub surface: String,
    pub position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePatch {
    pub row: usize,
    pub col: usize,
    pub position: usize,
}

/// One maskable feature of a [`MultimodalInput`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature<'a> {
    Text(&'a TextToken),
    Image(&'a ImagePatch),
}

impl Feature<'_> {
    pub fn position(&self) -> usize {
        match self {
            Feature::Text(t) => t.position,
            Feature::Image(p) => p.position,
        }
    }

    pub fn is_text(&self) -> bool {
        matches!(self, Feature::Text(_))
    }
}

/// The feature universe of one episode: prompt tokens followed by an n×n patch grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultimodalInput {
    text_tokens: Vec<TextToken>,
    image_patches: Vec<ImagePatch>,
    image_handle: String,
    grid_side: usize,
}

impl MultimodalInput {
    /// Assigns dense positions to `tokens` and to a `grid_side`×`grid_side` patch grid.
    pub fn build<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
        grid_side: usize,
        image_handle: impl Into<String>,
    ) -> Result<Self> {
        let text_tokens: Vec<TextToken> = tokens
            .into_iter()
            .enumerate()
            .map(|(position, s)| TextToken {
                surface: s.into(),
                position,
            })
            .collect();
        if text_tokens.is_empty() {
            return Err(Error::invalid("multimodal input needs at least one text token"));
        }
        if grid_side == 0 {
            return Err(Error::invalid("patch grid side must be at least 1"));
        }
        let offset = text_tokens.len();
        let image_patches = (0..grid_side * grid_side)
            .map(|k| ImagePatch {
                row: k / grid_side,
                col: k % grid_side,
                position: offset + k,
            })
            .collect();
        Ok(Self {
            text_tokens,
            image_patches,
            image_handle: image_handle.into(),
            grid_side,
        })
    }

    pub fn text_tokens(&self) -> &[TextToken] {
        &self.text_tokens
    }

    pub fn image_patches(&self) -> &[ImagePatch] {
        &self.image_patches
    }

    pub fn image_handle(&self) -> &str {
        &self.image_handle
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    /// p_T
    pub fn text_len(&self) -> usize {
        self.text_tokens.len()
    }

    /// p_I
    pub fn image_len(&self) -> usize {
        self.image_patches.len()
    }

    /// p
    pub fn len(&self) -> usize {
        self.text_len() + self.image_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn surfaces(&self) -> Vec<String> {
        self.text_tokens.iter().map(|t| t.surface.clone()).collect()
    }

    pub fn is_text_position(&self, position: usize) -> bool {
        position < self.text_len()
    }

    pub fn features(&self) -> impl Iterator<Item = Feature<'_>> {
        self.text_tokens
            .iter()
            .map(Feature::Text)
            .chain(self.image_patches.iter().map(Feature::Image))
    }
}

/// A coalition S: `true` marks a visible feature, `false` a masked one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoalitionMask {
    bits: Vec<bool>,
}

impl CoalitionMask {
    pub fn full(p: usize) -> Self {
        Self { bits: vec![true; p] }
    }

    pub fn empty(p: usize) -> Self {
        Self { bits: vec![false; p] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Mask whose bit `j` is bit `j` of `index`.
    pub fn from_index(index: u64, p: usize) -> Self {
        Self {
            bits: (0..p).map(|j| (index >> j) & 1 == 1).collect(),
        }
    }

    pub fn parse(bits: &str) -> Result<Self> {
        bits.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::protocol(None, format!("invalid mask character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_visible(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn visible_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn is_all_masked(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }
}

/// A fixed output sequence produced for one input, scored later by teacher forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationEpisode {
    pub input: MultimodalInput,
    pub output_tokens: Vec<String>,
}

impl GenerationEpisode {
    pub fn new(input: MultimodalInput, output_tokens: Vec<String>) -> Result<Self> {
        if output_tokens.is_empty() {
            return Err(Error::invalid("generation episode needs at least one output token"));
        }
        Ok(Self {
            input,
            output_tokens,
        })
    }

    /// T
    pub fn output_len(&self) -> usize {
        self.output_tokens.len()
    }
}

/// Shapley values φ_j^t, one row per output token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix {
    pub phi: Vec<Vec<f64>>,
    pub base_values: Vec<f64>,
    pub full_values: Vec<f64>,
}

impl AttributionMatrix {
    pub fn output_len(&self) -> usize {
        self.phi.len()
    }

    pub fn feature_count(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    /// |Σ_j φ_j^t − (v_t(full) − v_t(∅))| for row `t`.
    pub fn efficiency_gap(&self, t: usize) -> f64 {
        let sum: f64 = self.phi[t].iter().sum();
        (sum - (self.full_values[t] - self.base_values[t])).abs()
    }

    pub fn max_efficiency_gap(&self) -> f64 {
        (0..self.output_len())
            .map(|t| self.efficiency_gap(t))
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            phi: self
                .phi
                .iter()
                .map(|row| row.iter().map(|v| v * factor).collect())
                .collect(),
            base_values: self.base_values.clone(),
            full_values: self.full_values.clone(),
        }
    }
}

/// Contribution ratios r_j^t (rows L1-normalised).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioMatrix {
    pub r: Vec<Vec<f64>>,
}

/// Per-feature contribution after aggregation over output tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedAttribution {
    pub phi_bar: Vec<f64>,
}

/// Textual and visual degree of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ModalityScore {
    Defined {
        phi_text: f64,
        phi_image: f64,
        t_shap: f64,
        v_shap: f64,
    },
    /// Both modality sums are zero, so the proportions are undefined.
    Degenerate,
}

impl ModalityScore {
    pub fn t_shap(&self) -> Option<f64> {
        match self {
            ModalityScore::Defined { t_shap, .. } => Some(*t_shap),
            ModalityScore::Degenerate => None,
        }
    }

    pub fn v_shap(&self) -> Option<f64> {
        match self {
            ModalityScore::Defined { v_shap, .. } => Some(*v_shap),
            ModalityScore::Degenerate => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    CcShapPosthoc,
    CcShapCot,
    CounterfactualEdits,
    BiasingFeatures,
    EarlyAnswering,
    AddingMistakes,
    FillerTokens,
    Paraphrasing,
}

impl MeasureKind {
    pub const EDIT_TESTS: [MeasureKind; 6] = [
        MeasureKind::CounterfactualEdits,
        MeasureKind::BiasingFeatures,
        MeasureKind::EarlyAnswering,
        MeasureKind::AddingMistakes,
        MeasureKind::FillerTokens,
        MeasureKind::Paraphrasing,
    ];

    pub const ALL: [MeasureKind; 8] = [
        MeasureKind::CcShapPosthoc,
        MeasureKind::CcShapCot,
        MeasureKind::CounterfactualEdits,
        MeasureKind::BiasingFeatures,
        MeasureKind::EarlyAnswering,
        MeasureKind::AddingMistakes,
        MeasureKind::FillerTokens,
        MeasureKind::Paraphrasing,
    ];

    /// Kebab-case name, as serialized.
    pub fn slug(&self) -> &'static str {
        match self {
            MeasureKind::CcShapPosthoc => "cc-shap-posthoc",
            MeasureKind::CcShapCot => "cc-shap-cot",
            MeasureKind::CounterfactualEdits => "counterfactual-edits",
            MeasureKind::BiasingFeatures => "biasing-features",
            MeasureKind::EarlyAnswering => "early-answering",
            MeasureKind::AddingMistakes => "adding-mistakes",
            MeasureKind::FillerTokens => "filler-tokens",
            MeasureKind::Paraphrasing => "paraphrasing",
        }
    }

    pub fn is_cc_shap(&self) -> bool {
        matches!(self, MeasureKind::CcShapPosthoc | MeasureKind::CcShapCot)
    }

    pub fn label(&self) -> &'static str {
        match self {
            MeasureKind::CcShapPosthoc => "CC-SHAP post-hoc",
            MeasureKind::CcShapCot => "CC-SHAP CoT",
            MeasureKind::CounterfactualEdits => "Counterfactual Edits",
            MeasureKind::BiasingFeatures => "Biasing Features",
            MeasureKind::EarlyAnswering => "Early Answering",
            MeasureKind::AddingMistakes => "Adding Mistakes",
            MeasureKind::FillerTokens => "Filler Tokens",
            MeasureKind::Paraphrasing => "Paraphrasing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Faithful,
    Unfaithful,
    Inapplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// CC-SHAP value; `degenerate` is set when one contribution vector was all-zero.
    Score { value: f64, degenerate: bool },
    Verdict { verdict: Verdict, reason: String },
    /// CC-SHAP could not be computed for this sample.
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub label: String,
    pub prompt: String,
    pub generation: String,
}

impl TranscriptEntry {
    pub fn new(label: &str, prompt: impl Into<String>, generation: impl Into<String>) -> Self {
        Self {
            label: label.to_string(),
            prompt: prompt.into(),
            generation: generation.into(),
        }
    }
}

/// Result of one self-consistency measurement on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub sample_id: String,
    pub measure: MeasureKind,
    pub outcome: Outcome,
    pub transcript: Vec<TranscriptEntry>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<CcShapDetails>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<EditTrace>,
}

impl ConsistencyRecord {
    pub fn score(
        sample_id: impl Into<String>,
        measure: MeasureKind,
        value: f64,
        degenerate: bool,
        transcript: Vec<TranscriptEntry>,
        seed: u64,
        details: Option<CcShapDetails>,
    ) -> Self {
        assert!(measure.is_cc_shap(), "{measure:?} does not carry a value");
        Self {
            sample_id: sample_id.into(),
            measure,
            outcome: Outcome::Score { value, degenerate },
            transcript,
            seed,
            details,
            trace: None,
        }
    }

    pub fn skipped(
        sample_id: impl Into<String>,
        measure: MeasureKind,
        reason: impl Into<String>,
        transcript: Vec<TranscriptEntry>,
        seed: u64,
    ) -> Self {
        assert!(measure.is_cc_shap(), "edit tests report inapplicable verdicts instead");
        Self {
            sample_id: sample_id.into(),
            measure,
            outcome: Outcome::Skipped {
                reason: reason.into(),
            },
            transcript,
            seed,
            details: None,
            trace: None,
        }
    }

    pub fn verdict(
        sample_id: impl Into<String>,
        measure: MeasureKind,
        verdict: Verdict,
        reason: impl Into<String>,
        transcript: Vec<TranscriptEntry>,
        seed: u64,
    ) -> Self {
        assert!(!measure.is_cc_shap(), "{measure:?} carries a value, not a verdict");
        Self {
            sample_id: sample_id.into(),
            measure,
            outcome: Outcome::Verdict {
                verdict,
                reason: reason.into(),
            },
            transcript,
            seed,
            details: None,
            trace: None,
        }
    }

    pub fn with_trace(mut self, trace: EditTrace) -> Self {
        self.trace = Some(trace);
        self
    }

    pub fn value(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Score { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn verdict_value(&self) -> Option<Verdict> {
        match self.outcome {
            Outcome::Verdict { verdict, .. } => Some(verdict),
            _ => None,
        }
    }
}
