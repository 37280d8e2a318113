//! Reference computations shared by the integration tests. Nothing here
//! calls into the library's estimators.

#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Value of every coalition (bit j set = feature j visible) of a logistic
/// model with weights `w` and bias `b`, for target "A" or its complement "B".
pub fn linear_values(w: &[f64], b: f64, target_b: bool) -> Vec<f64> {
    let p = w.len();
    (0..1usize << p)
        .map(|s| {
            let logit = b + (0..p).filter(|j| s >> j & 1 == 1).map(|j| w[j]).sum::<f64>();
            let a = logistic(logit);
            if target_b {
                1.0 - a
            } else {
                a
            }
        })
        .collect()
}

/// Shapley values by averaging marginal contributions over all p! orderings.
pub fn permutation_shapley(values: &[f64], p: usize) -> Vec<f64> {
    assert!(p <= 12, "p! orderings is too many beyond 12 features");
    let mut phi = vec![0.0; p];
    let mut order: Vec<usize> = (0..p).collect();
    let mut count = 0u64;
    let mut visit = |order: &[usize]| {
        let mut s = 0usize;
        for &j in order {
            phi[j] += values[s | 1 << j] - values[s];
            s |= 1 << j;
        }
        count += 1;
    };
    // Heap's algorithm.
    let mut c = vec![0usize; p];
    visit(&order);
    let mut i = 0;
    while i < p {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    phi.iter().map(|v| v / count as f64).collect()
}

/// Shapley values by the subset formula
/// φ_j = Σ_{S ∌ j} |S|! (p−|S|−1)! / p! · (v(S ∪ {j}) − v(S)).
pub fn subset_shapley(values: &[f64], p: usize) -> Vec<f64> {
    let fact: Vec<f64> = (0..=p).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    })
    .collect();
    (0..p)
        .map(|j| {
            (0..1usize << p)
                .filter(|s| s >> j & 1 == 0)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    fact[size] * fact[p - size - 1] / fact[p] * (values[s | 1 << j] - values[s])
                })
                .sum()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Deterministic pseudo-random weights in (−scale, scale).
pub fn weights(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * scale
        })
        .collect()
}
