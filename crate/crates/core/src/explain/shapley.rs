//! Interventional Shapley values: absent features take their values from
//! background rows and the prediction is averaged over the background.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_zoo::Design;
use crate::rng::{rng_from, shuffle};

/// Largest feature count for the 2^K enumeration.
pub const EXACT_MAX_FEATURES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyAttribution {
    /// Target year of the explained row.
    pub instance: i32,
    pub phi: Vec<f64>,
    /// Mean prediction over the background rows.
    pub baseline: f64,
    pub prediction: f64,
}

impl ShapleyAttribution {
    /// `prediction - baseline - sum(phi)`.
    pub fn efficiency_gap(&self) -> f64 {
        self.prediction - self.baseline - self.phi.iter().sum::<f64>()
    }
}

/// Coalition value: mean prediction with features in `mask` taken from the
/// instance and the rest from each background row.
struct Game<'a, F> {
    f: &'a F,
    background: &'a Design,
    instance: &'a [f64],
}

impl<F: Fn(&[f64]) -> f64> Game<'_, F> {
    fn value(&self, present: &[bool], buf: &mut [f64]) -> f64 {
        let n = self.background.n_rows();
        let mut sum = 0.0;
        for i in 0..n {
            for (j, slot) in buf.iter_mut().enumerate() {
                *slot = if present[j] {
                    self.instance[j]
                } else {
                    self.background.value(i, j)
                };
            }
            sum += (self.f)(buf);
        }
        sum / n as f64
    }
}

fn check(background: &Design, instance: &[f64]) -> Result<()> {
    if background.n_rows() == 0 {
        return Err(Error::contract("background set is empty"));
    }
    if instance.len() != background.n_cols() {
        return Err(Error::contract(format!(
            "instance has {} values, background {} columns",
            instance.len(),
            background.n_cols()
        )));
    }
    Ok(())
}

/// Exact Shapley values by enumerating all coalitions.
pub fn shapley_exact<F: Fn(&[f64]) -> f64>(
    f: &F,
    background: &Design,
    instance: &[f64],
    year: i32,
) -> Result<ShapleyAttribution> {
    check(background, instance)?;
    let k = instance.len();
    if k > EXACT_MAX_FEATURES {
        return Err(Error::contract(format!(
            "{k} features exceed the exact limit of {EXACT_MAX_FEATURES}; use shapley_sampling"
        )));
    }
    let game = Game { f, background, instance };
    let mut buf = vec![0.0; k];
    let mut present = vec![false; k];
    let values: Vec<f64> = (0..1usize << k)
        .map(|s| {
            for (j, p) in present.iter_mut().enumerate() {
                *p = s >> j & 1 == 1;
            }
            game.value(&present, &mut buf)
        })
        .collect();
    // weight(|S|) = |S|! (K - |S| - 1)! / K!
    let mut weight = vec![0.0; k];
    for (s, w) in weight.iter_mut().enumerate() {
        let mut v = 1.0 / k as f64;
        for i in 1..=s {
            v *= i as f64 / (k - i) as f64;
        }
        *w = v;
    }
    let mut phi = vec![0.0; k];
    for s in 0..1usize << k {
        let size = s.count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if s >> j & 1 == 0 {
                *p += weight[size] * (values[s | 1 << j] - values[s]);
            }
        }
    }
    Ok(ShapleyAttribution {
        instance: year,
        phi,
        baseline: values[0],
        prediction: values[(1 << k) - 1],
    })
}

/// Permutation-sampling estimate. Permutations are drawn in antithetic
/// pairs (a permutation and its reverse) from a stream seeded by `seed`.
/// Each permutation telescopes, so the efficiency identity holds exactly.
pub fn shapley_sampling<F: Fn(&[f64]) -> f64>(
    f: &F,
    background: &Design,
    instance: &[f64],
    year: i32,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyAttribution> {
    check(background, instance)?;
    if n_permutations == 0 {
        return Err(Error::contract("n_permutations must be at least 1"));
    }
    let k = instance.len();
    let game = Game { f, background, instance };
    let mut buf = vec![0.0; k];
    let mut present = vec![false; k];
    let baseline = game.value(&present, &mut buf);
    let prediction = game.value(&vec![true; k], &mut buf);
    let mut rng = rng_from(seed, &[year as u64]);
    let mut order: Vec<usize> = (0..k).collect();
    let mut phi = vec![0.0; k];
    for p in 0..n_permutations {
        if p % 2 == 0 {
            shuffle(&mut rng, &mut order);
        } else {
            order.reverse();
        }
        present.iter_mut().for_each(|v| *v = false);
        let mut prev = baseline;
        for (step, &j) in order.iter().enumerate() {
            present[j] = true;
            let next = if step + 1 == k {
                prediction
            } else {
                game.value(&present, &mut buf)
            };
            phi[j] += next - prev;
            prev = next;
        }
    }
    phi.iter_mut().for_each(|v| *v /= n_permutations as f64);
    Ok(ShapleyAttribution {
        instance: year,
        phi,
        baseline,
        prediction,
    })
}
