//! Modality shares from per-token attributions.
//!
//! Each output token's Shapley row is first divided by its L1 norm so rows
//! from high- and low-probability tokens are comparable, then rows are
//! averaged into one contribution per input feature, and finally absolute
//! contributions are summed per modality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AggregatedAttribution, AttributionMatrix, ModalityScore, MultimodalInput, RatioMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Average the normalised ratios r_j^t.
    #[default]
    Ratio,
    /// Average the raw Shapley values φ_j^t.
    Raw,
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(Self::Ratio),
            "raw" => Ok(Self::Raw),
            other => Err(Error::invalid(format!("unknown aggregation mode {other:?}"))),
        }
    }
}

/// r_j^t = φ_j^t / Σ_i |φ_i^t|; an all-zero row stays all-zero.
pub fn normalize_ratios(phi: &AttributionMatrix) -> RatioMatrix {
    RatioMatrix {
        r: phi.phi.iter().map(|row| normalize_row(row)).collect(),
    }
}

pub(crate) fn normalize_row(row: &[f64]) -> Vec<f64> {
    let l1: f64 = row.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 {
        vec![0.0; row.len()]
    } else {
        row.iter().map(|v| v / l1).collect()
    }
}

/// Column means of `rows`.
pub fn aggregate_over_outputs(rows: &[Vec<f64>]) -> Result<AggregatedAttribution> {
    let t_len = rows.len();
    if t_len == 0 {
        return Err(Error::invalid("cannot aggregate over zero output tokens"));
    }
    let p = rows[0].len();
    let mut phi_bar = vec![0.0; p];
    for row in rows {
        if row.len() != p {
            return Err(Error::invalid("attribution rows have unequal lengths"));
        }
        for (acc, v) in phi_bar.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut phi_bar {
        *v /= t_len as f64;
    }
    Ok(AggregatedAttribution { phi_bar })
}

/// Normalises (in ratio mode) and aggregates an attribution matrix.
pub fn aggregate(phi: &AttributionMatrix, mode: AggregationMode) -> Result<AggregatedAttribution> {
    match mode {
        AggregationMode::Ratio => aggregate_over_outputs(&normalize_ratios(phi).r),
        AggregationMode::Raw => aggregate_over_outputs(&phi.phi),
    }
}

/// (Φ_T, Φ_I): sums of absolute contributions over text and image positions.
pub fn modality_contributions(agg: &AggregatedAttribution, input: &MultimodalInput) -> Result<(f64, f64)> {
    if agg.phi_bar.len() != input.len() {
        return Err(Error::invalid(format!(
            "{} contributions for an input of {} features",
            agg.phi_bar.len(),
            input.len()
        )));
    }
    Ok(split_modalities(&agg.phi_bar, input.text_len()))
}

/// Absolute sums over `contributions[..text_len]` and `contributions[text_len..]`.
pub fn split_modalities(contributions: &[f64], text_len: usize) -> (f64, f64) {
    let (text, image) = contributions.split_at(text_len);
    (
        text.iter().map(|v| v.abs()).sum(),
        image.iter().map(|v| v.abs()).sum(),
    )
}

/// T-SHAP = Φ_T / (Φ_T + Φ_I), V-SHAP its complement.
pub fn mm_shap(phi_text: f64, phi_image: f64) -> Result<ModalityScore> {
    if !(phi_text >= 0.0 && phi_image >= 0.0) {
        return Err(Error::invalid(format!(
            "modality contributions must be non-negative, got ({phi_text}, {phi_image})"
        )));
    }
    let total = phi_text + phi_image;
    if total == 0.0 {
        return Ok(ModalityScore::Degenerate);
    }
    let t_shap = phi_text / total;
    Ok(ModalityScore::Defined {
        phi_text,
        phi_image,
        t_shap,
        v_shap: 1.0 - t_shap,
    })
}

/// Full pipeline from an attribution matrix to the modality score.
pub fn score_episode(
    phi: &AttributionMatrix,
    input: &MultimodalInput,
    mode: AggregationMode,
) -> Result<(AggregatedAttribution, ModalityScore)> {
    let agg = aggregate(phi, mode)?;
    let (t, i) = modality_contributions(&agg, input)?;
    Ok((agg, mm_shap(t, i)?))
}
