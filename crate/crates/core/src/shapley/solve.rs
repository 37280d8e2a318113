use nalgebra::{DMatrix, DVector};

use super::plan::{CoalitionPlan, PlanMode};
use super::ValueTable;
use crate::error::{Error, Result};
use crate::types::AttributionMatrix;

/// Ridge added to the normal equations when they are singular.
pub const RIDGE_LAMBDA: f64 = 1e-6;

/// Pivot ratio below which the normal equations count as singular.
const CONDITION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub matrix: AttributionMatrix,
    /// Output rows solved with the ridge fallback.
    pub regularized_rows: Vec<usize>,
}

/// Turns evaluated coalition values into Shapley values, one row per output token.
///
/// Exact plans use the closed Shapley sum over all coalitions. Sampled
/// plans solve a weighted least-squares fit of the mask indicators with
/// Σ_j φ_j^t = v_t(full) − v_t(∅) imposed exactly by eliminating the last
/// feature.
pub fn solve_shapley(values: &ValueTable, plan: &CoalitionPlan) -> Result<Solution> {
    if values.rows.len() != plan.len() {
        return Err(Error::invalid(format!(
            "value table has {} rows for a plan of {} coalitions",
            values.rows.len(),
            plan.len()
        )));
    }
    let t_len = values.output_len();
    if values.rows.iter().any(|r| r.len() != t_len) {
        return Err(Error::invalid("value table rows have unequal lengths"));
    }
    let base_values = values.rows[plan.empty_index].clone();
    let full_values = values.rows[plan.full_index].clone();
    let (phi, regularized_rows) = match plan.mode {
        PlanMode::Exact => (exact_sum(values, plan), Vec::new()),
        PlanMode::Sampled => constrained_regression(values, plan, &base_values, &full_values),
    };
    Ok(Solution {
        matrix: AttributionMatrix {
            phi,
            base_values,
            full_values,
        },
        regularized_rows,
    })
}

fn exact_sum(values: &ValueTable, plan: &CoalitionPlan) -> Vec<Vec<f64>> {
    let p = plan.features;
    let t_len = values.output_len();
    // Weight of v(S) for a feature inside S, (s−1)!(p−s)!/p!, and outside S, s!(p−s−1)!/p!.
    let inside: Vec<f64> = (0..=p)
        .map(|s| if s == 0 { 0.0 } else { 1.0 / (p as f64 * super::plan::binomial(p - 1, s - 1)) })
        .collect();
    let outside: Vec<f64> = (0..=p)
        .map(|s| if s == p { 0.0 } else { 1.0 / (p as f64 * super::plan::binomial(p - 1, s)) })
        .collect();

    let mut phi = vec![vec![0.0; p]; t_len];
    for (mask, row) in plan.masks.iter().zip(&values.rows) {
        let s = mask.visible_count();
        let (w_in, w_out) = (inside[s], outside[s]);
        for (t, &v) in row.iter().enumerate() {
            let target = &mut phi[t];
            for (j, &visible) in mask.bits().iter().enumerate() {
                if visible {
                    target[j] += w_in * v;
                } else {
                    target[j] -= w_out * v;
                }
            }
        }
    }
    phi
}

fn constrained_regression(
    values: &ValueTable,
    plan: &CoalitionPlan,
    base: &[f64],
    full: &[f64],
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let p = plan.features;
    let d = p - 1;
    let t_len = values.output_len();
    let last = p - 1;

    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DMatrix::<f64>::zeros(d, t_len);
    let mut x = DVector::<f64>::zeros(d);
    for (i, (mask, row)) in plan.masks.iter().zip(&values.rows).enumerate() {
        let w = plan.weights[i];
        if w == 0.0 || i == plan.empty_index || i == plan.full_index {
            continue;
        }
        let z_last = if mask.is_visible(last) { 1.0 } else { 0.0 };
        for k in 0..d {
            x[k] = (if mask.is_visible(k) { 1.0 } else { 0.0 }) - z_last;
        }
        gram.ger(w, &x, &x, 1.0);
        for t in 0..t_len {
            let delta = full[t] - base[t];
            let y = row[t] - base[t] - z_last * delta;
            let mut col = rhs.column_mut(t);
            col.axpy(w * y, &x, 1.0);
        }
    }

    let (factor, regularized) = match well_conditioned_cholesky(gram.clone()) {
        Some(c) => (c, false),
        None => {
            let ridge = gram + DMatrix::<f64>::identity(d, d) * RIDGE_LAMBDA;
            let c = nalgebra::Cholesky::new(ridge)
                .expect("ridge-regularised gram matrix is positive definite");
            (c, true)
        }
    };
    let solved = factor.solve(&rhs);

    let phi = (0..t_len)
        .map(|t| {
            let mut row: Vec<f64> = solved.column(t).iter().copied().collect();
            let delta = full[t] - base[t];
            row.push(delta - row.iter().sum::<f64>());
            row
        })
        .collect();
    let regularized_rows = if regularized { (0..t_len).collect() } else { Vec::new() };
    (phi, regularized_rows)
}

fn well_conditioned_cholesky(m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let c = nalgebra::Cholesky::new(m)?;
    let diag = c.l_dirty().diagonal();
    let max = diag.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = diag.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    if max == 0.0 || (min / max).powi(2) < CONDITION_FLOOR {
        return None;
    }
    Some(c)
}
