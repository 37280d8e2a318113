//! Per-output-token Shapley values for a generation episode.
//!
//! The value of a coalition S for output token t is the probability the
//! backend assigns to that token, teacher-forced on the episode's earlier
//! output tokens, with every feature outside S masked.

mod plan;
mod solve;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::Bridge;
use crate::error::{Error, Result};
use crate::types::{AttributionMatrix, GenerationEpisode};

pub use plan::{kernel_weight, plan_coalitions, CoalitionPlan, PlanMode};
pub use solve::{solve_shapley, Solution, RIDGE_LAMBDA};

pub const DEFAULT_BUDGET: usize = 2048;

/// v_t(S) for every coalition of a plan, in plan order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub rows: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(v) = rows.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("coalition value {v} is not a probability")));
        }
        Ok(Self { rows })
    }

    pub fn output_len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Scores the episode's own output tokens under every coalition of `plan`.
///
/// Requests may run concurrently; rows are stored in plan order regardless
/// of completion order.
pub fn evaluate_plan(
    episode: &GenerationEpisode,
    plan: &CoalitionPlan,
    bridge: &Bridge,
) -> Result<ValueTable> {
    let p = episode.input.len();
    if plan.features != p {
        return Err(Error::invalid(format!(
            "plan covers {} features but the episode has {p}",
            plan.features
        )));
    }
    let rows = plan
        .masks
        .par_iter()
        .enumerate()
        .map(|(i, mask)| {
            bridge
                .score_masked(&episode.input, mask, &episode.output_tokens)
                .map_err(|e| Error::Coalition {
                    mask_index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    ValueTable::new(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub budget: usize,
    pub seed: u64,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            seed: 0,
        }
    }
}

/// How an attribution was estimated, stored next to every result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorProvenance {
    pub estimator: String,
    pub mode: PlanMode,
    pub budget: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub regularized_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub matrix: AttributionMatrix,
    pub provenance: EstimatorProvenance,
}

/// Plans, evaluates and solves in one go.
pub fn attribute(episode: &GenerationEpisode, bridge: &Bridge, config: &ShapleyConfig) -> Result<Attribution> {
    let plan = plan_coalitions(episode.input.len(), config.budget, config.seed)?;
    let values = evaluate_plan(episode, &plan, bridge)?;
    let solution = solve_shapley(&values, &plan)?;
    let estimator = match plan.mode {
        PlanMode::Exact => "exact-enumeration",
        PlanMode::Sampled => "kernel-wls-efficiency-constrained",
    };
    Ok(Attribution {
        matrix: solution.matrix,
        provenance: EstimatorProvenance {
            estimator: estimator.to_string(),
            mode: plan.mode,
            budget: config.budget,
            seed: config.seed,
            evaluations: plan.len(),
            regularized_rows: solution.regularized_rows,
        },
    })
}
