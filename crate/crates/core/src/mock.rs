//! Deterministic in-process backends.
//!
//! The linear models have a closed-form value function
//! `v(S) = σ(b + Σ_{j∈S} w_j)` for the target `"A"` (and `1 − v(S)` for
//! `"B"`), which makes exact Shapley values computable by enumeration. The
//! scripted model replays a fixture table and refuses anything it does not
//! know.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{
    Backend, ChatTemplate, Decoding, GenerateRequest, GenerateResponse, Handshake, ImageMaskPolicy,
    ScoreRequest, ScoreResponse,
};
use crate::error::{Error, Result};
use crate::text::{output_pieces, words};

const ALL_POLICIES: [ImageMaskPolicy; 3] = [
    ImageMaskPolicy::Zeros,
    ImageMaskPolicy::Mean,
    ImageMaskPolicy::Blur,
];

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn default_output_len() -> usize {
    1
}

/// Logistic model over a two-token vocabulary `{"A", "B"}`.
///
/// Features beyond the configured weight vectors act as dummies (weight 0),
/// so prompts may carry extra text such as explanation requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLogitModel {
    pub bias: f64,
    #[serde(default)]
    pub text_weights: Vec<f64>,
    #[serde(default)]
    pub image_weights: Vec<f64>,
    #[serde(default = "default_output_len")]
    pub output_len: usize,
}

impl LinearLogitModel {
    pub fn new(text_weights: Vec<f64>, image_weights: Vec<f64>, bias: f64) -> Self {
        Self {
            bias,
            text_weights,
            image_weights,
            output_len: 1,
        }
    }

    pub fn with_output_len(mut self, len: usize) -> Self {
        self.output_len = len;
        self
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Weight vector w over a flat input with `n_text` words and `n_image` patches.
    pub fn weights(&self, n_text: usize, n_image: usize) -> Vec<f64> {
        (0..n_text)
            .map(|i| self.text_weights.get(i).copied().unwrap_or(0.0))
            .chain((0..n_image).map(|k| self.image_weights.get(k).copied().unwrap_or(0.0)))
            .collect()
    }

    /// Probability of `"A"` when exactly the features marked in `visible` are shown.
    pub fn prob_a(&self, weights: &[f64], visible: &[bool]) -> f64 {
        let logit = self.bias
            + weights
                .iter()
                .zip(visible)
                .filter(|(_, &v)| v)
                .map(|(w, _)| w)
                .sum::<f64>();
        sigmoid(logit)
    }

    fn target_prob(&self, p_a: f64, target: &str, id: u64) -> Result<f64> {
        match target.trim() {
            "A" => Ok(p_a),
            "B" => Ok(1.0 - p_a),
            other => Err(Error::protocol(id, format!("token {other:?} is outside the A/B vocabulary"))),
        }
    }

    fn score_with(&self, weights: &[f64], req: &ScoreRequest) -> Result<ScoreResponse> {
        req.validate()?;
        let p_a = self.prob_a(weights, req.mask.bits());
        let target_probs = req
            .targets
            .iter()
            .map(|t| self.target_prob(p_a, t, req.id))
            .collect::<Result<_>>()?;
        Ok(ScoreResponse {
            id: req.id,
            target_probs,
        })
    }

    fn generate_with(&self, weights: &[f64], req: &GenerateRequest) -> Result<GenerateResponse> {
        req.validate()?;
        let p_a = self.prob_a(weights, &vec![true; weights.len()]);
        let n = self.output_len.max(1).min(req.max_new_tokens);
        let mut rng = match req.decoding {
            Decoding::Greedy => None,
            Decoding::Sampled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        let tokens = (0..n)
            .map(|i| {
                let is_a = match rng.as_mut() {
                    None => p_a >= 0.5,
                    Some(rng) => rng.gen::<f64>() < p_a,
                };
                let tok = if is_a { "A" } else { "B" };
                if i == 0 {
                    tok.to_string()
                } else {
                    format!(" {tok}")
                }
            })
            .collect();
        Ok(GenerateResponse { id: req.id, tokens })
    }

    fn generate_weights(&self, req: &GenerateRequest) -> Vec<f64> {
        let n_text = words(&req.prompt).len();
        let n_image = req
            .grid_side
            .map_or(self.image_weights.len(), |s| s * s);
        self.weights(n_text, n_image)
    }

    fn handshake_named(&self, name: &str) -> Handshake {
        Handshake {
            backend: name.to_string(),
            tokenizer: "whitespace".to_string(),
            pad_token: "<pad>".to_string(),
            mask_policies: ALL_POLICIES.to_vec(),
            chat_template: ChatTemplate::UserAssistant,
        }
    }
}

impl Backend for LinearLogitModel {
    fn handshake(&self) -> Result<Handshake> {
        Ok(self.handshake_named("mock:linear"))
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        let w = self.weights(req.text_tokens.len(), req.grid_side * req.grid_side);
        self.score_with(&w, req)
    }

    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse> {
        self.generate_with(&self.generate_weights(req), req)
    }
}

/// A linear model that ignores the image entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextOnlyModel {
    inner: LinearLogitModel,
}

impl TextOnlyModel {
    pub fn new(text_weights: Vec<f64>, bias: f64) -> Self {
        Self {
            inner: LinearLogitModel::new(text_weights, Vec::new(), bias),
        }
    }

    /// Drops any image weights of `model`.
    pub fn from_linear(mut model: LinearLogitModel) -> Self {
        model.image_weights.clear();
        Self { inner: model }
    }

    pub fn linear(&self) -> &LinearLogitModel {
        &self.inner
    }
}

impl Backend for TextOnlyModel {
    fn handshake(&self) -> Result<Handshake> {
        Ok(self.inner.handshake_named("mock:textonly"))
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        self.inner.score(req)
    }

    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse> {
        self.inner.generate(req)
    }
}

/// Exact Shapley values of the linear model's value function for `target`,
/// by enumerating all 2^p coalitions. Test oracle; refuses p > 20.
pub fn closed_form_shapley(
    model: &LinearLogitModel,
    n_text: usize,
    n_image: usize,
    target: &str,
) -> Result<Vec<f64>> {
    let weights = model.weights(n_text, n_image);
    let p = weights.len();
    if p > 20 {
        return Err(Error::OracleRefused(format!(
            "{p} features is too many for coalition enumeration (max 20)"
        )));
    }
    let flip = match target.trim() {
        "A" => false,
        "B" => true,
        other => return Err(Error::invalid(format!("target {other:?} is not A or B"))),
    };
    let n_masks = 1usize << p;
    // v(S) for every coalition, building each logit from the one without its lowest bit.
    let mut logits = vec![model.bias; n_masks];
    for s in 1..n_masks {
        let low = s.trailing_zeros() as usize;
        logits[s] = logits[s & (s - 1)] + weights[low];
    }
    let value: Vec<f64> = logits
        .iter()
        .map(|&l| {
            let a = sigmoid(l);
            if flip {
                1.0 - a
            } else {
                a
            }
        })
        .collect();

    // |S|!(p-|S|-1)!/p! = 1 / (p * C(p-1, |S|))
    let coalition_weight: Vec<f64> = (0..p)
        .map(|s| {
            let mut binom = 1.0;
            for i in 0..s {
                binom = binom * (p - 1 - i) as f64 / (i + 1) as f64;
            }
            1.0 / (p as f64 * binom)
        })
        .collect();

    Ok((0..p)
        .map(|j| {
            let bit = 1usize << j;
            (0..n_masks)
                .filter(|s| s & bit == 0)
                .map(|s| {
                    coalition_weight[s.count_ones() as usize] * (value[s | bit] - value[s])
                })
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Free-form label for fixture authors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    /// Exact prompt (whitespace-normalised) this entry answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Substrings that must all occur in the prompt; consulted after exact prompts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    /// Mask pattern over `0`, `1` and `?`; absent matches any mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<String>,
    /// Probabilities aligned with the request's targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// Probability per target token, looked up by trimmed surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_probs: Option<std::collections::BTreeMap<String, f64>>,
}

impl ScriptEntry {
    fn matches_prompt_exact(&self, prompt: &str) -> bool {
        self.prompt.as_deref().map(normalise).as_deref() == Some(prompt)
    }

    fn matches_prompt_contains(&self, prompt: &str) -> bool {
        self.prompt.is_none() && self.contains.iter().all(|c| prompt.contains(c.as_str()))
    }

    fn matches_mask(&self, mask: &str) -> bool {
        match &self.mask {
            None => true,
            Some(pattern) => {
                pattern.len() == mask.len()
                    && pattern
                        .chars()
                        .zip(mask.chars())
                        .all(|(p, m)| p == '?' || p == m)
            }
        }
    }

    fn answers_score(&self) -> bool {
        self.probs.is_some() || self.token_probs.is_some()
    }
}

fn normalise(s: &str) -> String {
    words(s).join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedModel {
    #[serde(default)]
    pub chat_template: ChatTemplate,
    pub entries: Vec<ScriptEntry>,
}

impl ScriptedModel {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            chat_template: ChatTemplate::UserAssistant,
            entries,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    fn lookup<'a>(
        &'a self,
        prompt: &str,
        accept: impl Fn(&ScriptEntry) -> bool,
    ) -> Option<&'a ScriptEntry> {
        let prompt = normalise(prompt);
        self.entries
            .iter()
            .find(|e| e.matches_prompt_exact(&prompt) && accept(e))
            .or_else(|| {
                self.entries
                    .iter()
                    .find(|e| e.matches_prompt_contains(&prompt) && accept(e))
            })
    }
}

impl Backend for ScriptedModel {
    fn handshake(&self) -> Result<Handshake> {
        Ok(Handshake {
            backend: "mock:scripted".to_string(),
            tokenizer: "whitespace".to_string(),
            pad_token: "<pad>".to_string(),
            mask_policies: ALL_POLICIES.to_vec(),
            chat_template: self.chat_template,
        })
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        req.validate()?;
        let prompt = req.text_tokens.join(" ");
        let mask = req.mask.to_bit_string();
        let entry = self
            .lookup(&prompt, |e| e.answers_score() && e.matches_mask(&mask))
            .ok_or_else(|| {
                Error::protocol(req.id, format!("no scripted score for prompt {prompt:?} mask {mask}"))
            })?;
        let target_probs = if let Some(probs) = &entry.probs {
            if probs.len() != req.targets.len() {
                return Err(Error::protocol(
                    req.id,
                    format!("scripted entry has {} probabilities for {} targets", probs.len(), req.targets.len()),
                ));
            }
            probs.clone()
        } else {
            let table = entry.token_probs.as_ref().expect("answers_score");
            req.targets
                .iter()
                .map(|t| {
                    table.get(t.trim()).copied().ok_or_else(|| {
                        Error::protocol(req.id, format!("no scripted probability for token {t:?}"))
                    })
                })
                .collect::<Result<_>>()?
        };
        Ok(ScoreResponse {
            id: req.id,
            target_probs,
        })
    }

    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse> {
        req.validate()?;
        let entry = self
            .lookup(&req.prompt, |e| e.generation.is_some())
            .ok_or_else(|| {
                Error::protocol(req.id, format!("no scripted generation for prompt {:?}", req.prompt))
            })?;
        let mut tokens = output_pieces(entry.generation.as_deref().unwrap_or_default());
        tokens.truncate(req.max_new_tokens);
        Ok(GenerateResponse { id: req.id, tokens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::MaskPolicy;
    use crate::types::CoalitionMask;

    fn score_req(tokens: &[&str], side: usize, mask: &str, targets: &[&str]) -> ScoreRequest {
        ScoreRequest {
            id: 1,
            text_tokens: tokens.iter().map(|s| s.to_string()).collect(),
            image: "img".into(),
            grid_side: side,
            mask: CoalitionMask::parse(mask).unwrap(),
            targets: targets.iter().map(|s| s.to_string()).collect(),
            mask_policy: MaskPolicy::default(),
        }
    }

    #[test]
    fn linear_value_function() {
        let m = LinearLogitModel::new(vec![1.0, -2.0], vec![0.5], 0.25);
        let r = m.score(&score_req(&["a", "b"], 1, "101", &["A", "B"])).unwrap();
        let p = sigmoid(0.25 + 1.0 + 0.5);
        assert_eq!(r.target_probs, vec![p, 1.0 - p]);
        assert!(m.score(&score_req(&["a", "b"], 1, "101", &["C"])).is_err());
    }

    #[test]
    fn text_only_ignores_image_bits() {
        let m = TextOnlyModel::new(vec![0.7, -0.3], -0.1);
        let base = m.score(&score_req(&["a", "b"], 2, "100000", &["A"])).unwrap();
        for mask in ["101111", "100101", "100010"] {
            let r = m.score(&score_req(&["a", "b"], 2, mask, &["A"])).unwrap();
            assert_eq!(r.target_probs, base.target_probs);
        }
        // All masked: base rate σ(b).
        let empty = m.score(&score_req(&["a", "b"], 2, "000000", &["A"])).unwrap();
        assert_eq!(empty.target_probs, vec![sigmoid(-0.1)]);
    }

    #[test]
    fn oracle_refuses_large_inputs() {
        let m = LinearLogitModel::new(vec![0.1; 21], vec![], 0.0);
        assert!(matches!(
            closed_form_shapley(&m, 21, 0, "A"),
            Err(Error::OracleRefused(_))
        ));
    }

    #[test]
    fn oracle_axioms() {
        let m = LinearLogitModel::new(vec![0.0, 0.0, 0.0], vec![], 0.3);
        assert!(closed_form_shapley(&m, 3, 0, "A").unwrap().iter().all(|&v| v == 0.0));

        let m = LinearLogitModel::new(vec![0.8, 0.8, -0.2], vec![], 0.1);
        let phi = closed_form_shapley(&m, 3, 0, "A").unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-12);
    }

    #[test]
    fn scripted_lookup_order() {
        let m = ScriptedModel::new(vec![
            ScriptEntry {
                contains: vec!["horse".into()],
                generation: Some("City intersection".into()),
                ..Default::default()
            },
            ScriptEntry {
                prompt: Some("Where is the  horse?".into()),
                generation: Some("On sidewalk".into()),
                ..Default::default()
            },
        ]);
        let gen = |prompt: &str| {
            m.generate(&GenerateRequest {
                id: 1,
                prompt: prompt.into(),
                image: "i".into(),
                max_new_tokens: 10,
                decoding: Decoding::Greedy,
                grid_side: None,
            })
        };
        assert_eq!(gen("Where is the horse?").unwrap().text(), "On sidewalk");
        assert_eq!(gen("Where is the odd horse?").unwrap().text(), "City intersection");
        assert!(matches!(gen("nothing"), Err(Error::Protocol { .. })));
    }

    #[test]
    fn scripted_mask_patterns() {
        let m = ScriptedModel::new(vec![
            ScriptEntry {
                prompt: Some("a b".into()),
                mask: Some("?1?".into()),
                probs: Some(vec![0.9]),
                ..Default::default()
            },
            ScriptEntry {
                prompt: Some("a b".into()),
                probs: Some(vec![0.2]),
                ..Default::default()
            },
        ]);
        let s = |mask| m.score(&score_req(&["a", "b"], 1, mask, &["A"])).unwrap().target_probs;
        assert_eq!(s("010"), vec![0.9]);
        assert_eq!(s("111"), vec![0.9]);
        assert_eq!(s("101"), vec![0.2]);
    }
}
