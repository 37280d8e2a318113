//! Shared context for measurements that talk to a backend.

use crate::bridge::{negotiate_tiling, Bridge, ChatTemplate, Decoding, TilingConfig};
use crate::error::Result;
use crate::mmshap::AggregationMode;
use crate::shapley::ShapleyConfig;
use crate::text::words;
use crate::types::{GenerationEpisode, MultimodalInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationLimits {
    pub answer: usize,
    pub explanation: usize,
}

impl Default for GenerationLimits {
    fn default() -> Self {
        Self {
            answer: 12,
            explanation: 60,
        }
    }
}

pub struct Session<'a> {
    pub bridge: &'a Bridge,
    pub shapley: ShapleyConfig,
    pub tiling: TilingConfig,
    pub agg_mode: AggregationMode,
    pub limits: GenerationLimits,
}

/// A prompt, the model's continuation and the patch grid it was produced with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub prompt: String,
    pub tokens: Vec<String>,
    pub grid_side: usize,
}

impl Generation {
    pub fn text(&self) -> String {
        self.tokens.concat()
    }
}

impl<'a> Session<'a> {
    pub fn new(bridge: &'a Bridge) -> Self {
        Self {
            bridge,
            shapley: ShapleyConfig::default(),
            tiling: TilingConfig::default(),
            agg_mode: AggregationMode::default(),
            limits: GenerationLimits::default(),
        }
    }

    pub fn template(&self) -> Result<ChatTemplate> {
        self.bridge.chat_template()
    }

    /// Patch grid for a prompt, from its word count.
    pub fn grid_for(&self, prompt: &str) -> usize {
        negotiate_tiling(words(prompt).len(), &self.tiling).grid_side
    }

    /// Greedy continuation of `prompt`. `grid_side` defaults to the prompt's own tiling.
    pub fn generate(&self, prompt: &str, image: &str, max_new_tokens: usize, grid_side: Option<usize>) -> Result<Generation> {
        let grid_side = grid_side.unwrap_or_else(|| self.grid_for(prompt));
        let tokens = self
            .bridge
            .generate_text(prompt, image, max_new_tokens, Decoding::Greedy, Some(grid_side))?;
        Ok(Generation {
            prompt: prompt.to_string(),
            tokens,
            grid_side,
        })
    }

    /// The episode whose output is `generation`'s tokens.
    pub fn episode(&self, generation: &Generation, image: &str) -> Result<GenerationEpisode> {
        let input = MultimodalInput::build(words(&generation.prompt), generation.grid_side, image)?;
        GenerationEpisode::new(input, generation.tokens.clone())
    }
}
