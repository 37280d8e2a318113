use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::CoalitionMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Exact,
    Sampled,
}

/// Which coalitions to evaluate, and how much each one weighs in the solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionPlan {
    pub features: usize,
    pub budget: usize,
    pub seed: u64,
    pub mode: PlanMode,
    pub masks: Vec<CoalitionMask>,
    /// Exact mode: Shapley kernel weight of the mask's size. Sampled mode:
    /// number of times the mask was drawn. Zero for the empty and full masks,
    /// which enter the solve through the efficiency constraint instead.
    pub weights: Vec<f64>,
    pub empty_index: usize,
    pub full_index: usize,
}

impl CoalitionPlan {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// Shapley kernel weight (p−1) / (C(p,s)·s·(p−s)) for a coalition of size `s`.
pub fn kernel_weight(p: usize, s: usize) -> f64 {
    if s == 0 || s >= p {
        return 0.0;
    }
    (p - 1) as f64 / (binomial(p, s) * s as f64 * (p - s) as f64)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of draws after which sampling gives up on filling the budget.
const DRAWS_PER_SLOT: usize = 64;

/// Builds the coalition plan for `p` features.
///
/// Every coalition is enumerated when 2^p fits in `budget`. Otherwise
/// coalitions are drawn with probability proportional to their kernel
/// weight (a size `s` with mass ∝ 1/(s(p−s)), then a uniform subset of that
/// size), each draw paired with its complement, until `budget` distinct
/// masks including the empty and full coalitions are collected. A pair
/// is never split, so an odd budget may leave one slot unused.
pub fn plan_coalitions(p: usize, budget: usize, seed: u64) -> Result<CoalitionPlan> {
    if p == 0 {
        return Err(Error::invalid("cannot plan coalitions over zero features"));
    }
    if budget < p + 2 {
        return Err(Error::InvalidBudget {
            budget,
            features: p,
            needed: p + 2,
        });
    }
    let exhaustive = u32::try_from(p)
        .ok()
        .and_then(|p| 1usize.checked_shl(p))
        .filter(|&n| n <= budget);
    match exhaustive {
        Some(n) => Ok(exact_plan(p, n, budget, seed)),
        None => Ok(sampled_plan(p, budget, seed)),
    }
}

fn exact_plan(p: usize, n: usize, budget: usize, seed: u64) -> CoalitionPlan {
    let masks: Vec<CoalitionMask> = (0..n as u64).map(|i| CoalitionMask::from_index(i, p)).collect();
    let weights = masks
        .iter()
        .map(|m| kernel_weight(p, m.visible_count()))
        .collect();
    CoalitionPlan {
        features: p,
        budget,
        seed,
        mode: PlanMode::Exact,
        masks,
        weights,
        empty_index: 0,
        full_index: n - 1,
    }
}

fn sampled_plan(p: usize, budget: usize, seed: u64) -> CoalitionPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (1..p).collect();
    let size_dist = WeightedIndex::new(sizes.iter().map(|&s| 1.0 / (s * (p - s)) as f64))
        .expect("p >= 3 gives positive size weights");

    let mut masks = vec![CoalitionMask::empty(p), CoalitionMask::full(p)];
    let mut weights = vec![0.0, 0.0];
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    index.insert(masks[0].bits().to_vec(), 0);
    index.insert(masks[1].bits().to_vec(), 1);

    let max_draws = DRAWS_PER_SLOT * budget;
    let mut draws = 0;
    while masks.len() < budget && draws < max_draws {
        draws += 1;
        let s = sizes[size_dist.sample(&mut rng)];
        let mut bits = vec![false; p];
        for j in rand::seq::index::sample(&mut rng, p, s) {
            bits[j] = true;
        }
        let complement: Vec<bool> = bits.iter().map(|b| !b).collect();
        let fresh = [&bits, &complement].iter().filter(|c| !index.contains_key(**c)).count();
        if masks.len() + fresh > budget {
            break;
        }
        for candidate in [bits, complement] {
            if let Some(&i) = index.get(&candidate) {
                weights[i] += 1.0;
            } else {
                index.insert(candidate.clone(), masks.len());
                masks.push(CoalitionMask::from_bits(candidate));
                weights.push(1.0);
            }
        }
    }

    CoalitionPlan {
        features: p,
        budget,
        seed,
        mode: PlanMode::Sampled,
        masks,
        weights,
        empty_index: 0,
        full_index: 1,
    }
}
