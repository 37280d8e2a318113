//! Masked-inference protocol between the engine and a model backend.
//!
//! A [`Backend`] answers three kinds of request: a handshake, teacher-forced
//! scoring of target tokens under a coalition mask, and free generation.
//! [`Bridge`] wraps any backend with request-id assignment and contract
//! checks on both directions, and is the handle the rest of the crate uses.

mod protocol;
mod tiling;
mod transport;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CoalitionMask, MultimodalInput};

pub use protocol::{ErrorKind, WireRequest, WireResponse};
pub use tiling::{negotiate_tiling, TilingConfig, TilingProposal};
pub use transport::{serve, LineClient};

/// Smallest probability that crosses the wire.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageMaskPolicy {
    #[default]
    Zeros,
    Mean,
    Blur,
}

impl std::str::FromStr for ImageMaskPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeros" => Ok(Self::Zeros),
            "mean" => Ok(Self::Mean),
            "blur" => Ok(Self::Blur),
            other => Err(Error::invalid(format!("unknown image mask policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMaskPolicy {
    /// Replace masked words with the backend's pad token.
    #[default]
    Pad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub text: TextMaskPolicy,
    pub image: ImageMaskPolicy,
}

/// How the backend wraps conversation turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatTemplate {
    /// `USER: ... ASSISTANT: ...`
    #[default]
    UserAssistant,
    /// `[INST]: ... [/INST] ...`
    Inst,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Handshake {
    pub backend: String,
    pub tokenizer: String,
    pub pad_token: String,
    pub mask_policies: Vec<ImageMaskPolicy>,
    #[serde(default)]
    pub chat_template: ChatTemplate,
}

mod mask_bits {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::types::CoalitionMask;

    pub fn serialize<S: Serializer>(mask: &CoalitionMask, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&mask.to_bit_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CoalitionMask, D::Error> {
        let bits = String::deserialize(d)?;
        CoalitionMask::parse(&bits).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: u64,
    pub text_tokens: Vec<String>,
    pub image: String,
    pub grid_side: usize,
    #[serde(with = "mask_bits")]
    pub mask: CoalitionMask,
    pub targets: Vec<String>,
    #[serde(default)]
    pub mask_policy: MaskPolicy,
}

impl ScoreRequest {
    pub fn feature_count(&self) -> usize {
        self.text_tokens.len() + self.grid_side * self.grid_side
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::protocol(self.id, "score request has no target tokens"));
        }
        if self.mask.len() != self.feature_count() {
            return Err(Error::protocol(
                self.id,
                format!(
                    "mask has {} bits but input has {} text tokens and {} patches",
                    self.mask.len(),
                    self.text_tokens.len(),
                    self.grid_side * self.grid_side
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: u64,
    pub target_probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Decoding {
    #[default]
    Greedy,
    Sampled {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub id: u64,
    pub prompt: String,
    pub image: String,
    pub max_new_tokens: usize,
    #[serde(default)]
    pub decoding: Decoding,
    /// Patch grid the engine will use when attributing this generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_side: Option<usize>,
}

impl GenerateRequest {
    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::invalid("max_new_tokens must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub id: u64,
    pub tokens: Vec<String>,
}

impl GenerateResponse {
    pub fn text(&self) -> String {
        self.tokens.concat()
    }
}

/// A model behind the masked-inference protocol.
///
/// Implementations must be callable from many threads at once; the engine
/// pipelines score requests and matches answers by id.
pub trait Backend: Send + Sync {
    fn handshake(&self) -> Result<Handshake>;
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse>;
    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn handshake(&self) -> Result<Handshake> {
        (**self).handshake()
    }
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        (**self).score(req)
    }
    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse> {
        (**self).generate(req)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn handshake(&self) -> Result<Handshake> {
        (**self).handshake()
    }
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        (**self).score(req)
    }
    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse> {
        (**self).generate(req)
    }
}

/// Engine-side handle to a backend.
pub struct Bridge {
    backend: Box<dyn Backend>,
    next_id: AtomicU64,
    mask_policy: MaskPolicy,
    handshake: OnceLock<Handshake>,
}

impl Bridge {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Self {
            backend: Box::new(backend),
            next_id: AtomicU64::new(1),
            mask_policy: MaskPolicy::default(),
            handshake: OnceLock::new(),
        }
    }

    pub fn with_mask_policy(mut self, policy: MaskPolicy) -> Self {
        self.mask_policy = policy;
        self
    }

    pub fn mask_policy(&self) -> MaskPolicy {
        self.mask_policy
    }

    /// Handshake, performed once and cached.
    pub fn handshake(&self) -> Result<&Handshake> {
        if let Some(h) = self.handshake.get() {
            return Ok(h);
        }
        let h = self.backend.handshake()?;
        if !h.mask_policies.contains(&self.mask_policy.image) {
            return Err(Error::protocol(
                None,
                format!(
                    "backend {} does not support image mask policy {:?}",
                    h.backend, self.mask_policy.image
                ),
            ));
        }
        Ok(self.handshake.get_or_init(|| h))
    }

    pub fn chat_template(&self) -> Result<ChatTemplate> {
        Ok(self.handshake()?.chat_template)
    }

    fn fresh_id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }

    /// Probability of each target token under `mask`, teacher-forced on the preceding targets.
    pub fn score_targets(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        req.validate()?;
        let resp = self.backend.score(req)?;
        if resp.target_probs.len() != req.targets.len() {
            return Err(Error::protocol(
                req.id,
                format!(
                    "expected {} target probabilities, got {}",
                    req.targets.len(),
                    resp.target_probs.len()
                ),
            ));
        }
        let mut probs = Vec::with_capacity(resp.target_probs.len());
        for &p in &resp.target_probs {
            if !p.is_finite() || !(0.0..=1.0 + 1e-9).contains(&p) {
                return Err(Error::protocol(req.id, format!("probability {p} out of range")));
            }
            probs.push(p.clamp(PROB_FLOOR, 1.0));
        }
        Ok(ScoreResponse {
            id: req.id,
            target_probs: probs,
        })
    }

    /// Scores `targets` for `input` under `mask`.
    pub fn score_masked(
        &self,
        input: &MultimodalInput,
        mask: &CoalitionMask,
        targets: &[String],
    ) -> Result<Vec<f64>> {
        let req = ScoreRequest {
            id: self.fresh_id(),
            text_tokens: input.surfaces(),
            image: input.image_handle().to_string(),
            grid_side: input.grid_side(),
            mask: mask.clone(),
            targets: targets.to_vec(),
            mask_policy: self.mask_policy,
        };
        self.score_targets(&req).map(|r| r.target_probs)
    }

    pub fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse> {
        req.validate()?;
        let resp = self.backend.generate(req)?;
        if resp.tokens.len() > req.max_new_tokens {
            return Err(Error::protocol(
                req.id,
                format!(
                    "backend returned {} tokens for max_new_tokens {}",
                    resp.tokens.len(),
                    req.max_new_tokens
                ),
            ));
        }
        Ok(resp)
    }

    /// Generates a continuation of `prompt` and returns its token pieces.
    pub fn generate_text(
        &self,
        prompt: &str,
        image: &str,
        max_new_tokens: usize,
        decoding: Decoding,
        grid_side: Option<usize>,
    ) -> Result<Vec<String>> {
        let req = GenerateRequest {
            id: self.fresh_id(),
            prompt: prompt.to_string(),
            image: image.to_string(),
            max_new_tokens,
            decoding,
            grid_side,
        };
        self.generate(&req).map(|r| r.tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_request_validation() {
        let mut req = ScoreRequest {
            id: 7,
            text_tokens: vec!["a".into(), "b".into()],
            image: "img".into(),
            grid_side: 2,
            mask: CoalitionMask::full(6),
            targets: vec!["A".into()],
            mask_policy: MaskPolicy::default(),
        };
        assert!(req.validate().is_ok());
        req.mask = CoalitionMask::full(5);
        assert!(matches!(
            req.validate(),
            Err(Error::Protocol { request_id: Some(7), .. })
        ));
        req.mask = CoalitionMask::full(6);
        req.targets.clear();
        assert!(req.validate().is_err());
    }

    #[test]
    fn generate_rejects_zero_tokens() {
        let req = GenerateRequest {
            id: 1,
            prompt: "p".into(),
            image: "i".into(),
            max_new_tokens: 0,
            decoding: Decoding::Greedy,
            grid_side: None,
        };
        assert!(matches!(req.validate(), Err(Error::InvalidInput(_))));
    }
}
