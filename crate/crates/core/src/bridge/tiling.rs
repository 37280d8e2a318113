use serde::{Deserialize, Serialize};

/// Allowed patch-grid sides, with an optional fixed override.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingConfig {
    pub min_side: usize,
    pub max_side: usize,
    pub fixed_side: Option<usize>,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self {
            min_side: 2,
            max_side: 12,
            fixed_side: None,
        }
    }
}

impl TilingConfig {
    pub fn fixed(side: usize) -> Self {
        Self {
            fixed_side: Some(side),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingProposal {
    pub text_token_count: usize,
    pub grid_side: usize,
}

impl TilingProposal {
    pub fn patch_count(&self) -> usize {
        self.grid_side * self.grid_side
    }
}

/// Picks the smallest grid whose patch count reaches the text length, so both
/// modalities contribute sequences of similar size. Longer prompts get more,
/// smaller patches; the side is clamped to the configured range.
pub fn negotiate_tiling(text_token_count: usize, config: &TilingConfig) -> TilingProposal {
    let grid_side = match config.fixed_side {
        Some(side) => side,
        None => (config.min_side..=config.max_side)
            .find(|s| s * s >= text_token_count)
            .unwrap_or(config.max_side),
    };
    TilingProposal {
        text_token_count,
        grid_side,
    }
}
