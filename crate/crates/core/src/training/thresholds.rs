//! Exhaustive `(T1, alpha)` search minimising `err_FA² + err_miss²`.

use super::{RouteEnergies, TrainingConfig, TrainingSample};
use crate::detect::DetectionRules;

/// Selected thresholds and the training error rates they produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub t1: f64,
    pub alpha: f64,
    pub err_fa: f64,
    pub err_miss: f64,
}

impl ThresholdChoice {
    pub fn objective(&self) -> f64 {
        self.err_fa * self.err_fa + self.err_miss * self.err_miss
    }
}

/// `alpha_min, alpha_min + step, ...` up to `alpha_max` inclusive.
pub fn alpha_grid(cfg: &TrainingConfig) -> Vec<f64> {
    if cfg.alpha_step.is_nan() || cfg.alpha_step <= 0.0 || cfg.alpha_max < cfg.alpha_min {
        return vec![cfg.alpha_min];
    }
    let steps = ((cfg.alpha_max - cfg.alpha_min) / cfg.alpha_step + 1e-9).floor() as usize;
    (0..=steps)
        .map(|k| cfg.alpha_min + k as f64 * cfg.alpha_step)
        .collect()
}

/// Midpoints between consecutive distinct total energies, a sentinel above
/// the largest one, and the previous `T1` if given. Sorted ascending.
pub fn t1_candidates(totals: &[f64], previous: Option<f64>) -> Vec<f64> {
    let mut sorted: Vec<f64> = totals.iter().copied().filter(|e| e.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out: Vec<f64> = sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    out.push(sorted.last().map_or(1.0, |m| m + 1.0));
    if let Some(p) = previous.filter(|p| *p > 0.0 && p.is_finite()) {
        out.push(p);
    }
    out.retain(|t| *t > 0.0);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Picks `(T1, alpha)` on the training energies. Ties go to the smaller `T1`,
/// then the smaller `alpha`. An empty class contributes a zero error rate.
pub fn update_thresholds(
    samples: &[TrainingSample],
    energies: &[RouteEnergies],
    previous_t1: Option<f64>,
    cfg: &TrainingConfig,
) -> ThresholdChoice {
    let totals: Vec<f64> = energies.iter().map(RouteEnergies::total).collect();
    let abnormal: Vec<bool> = samples.iter().map(|s| s.label.is_abnormal()).collect();
    let n_abn = abnormal.iter().filter(|&&a| a).count();
    let n_norm = abnormal.len() - n_abn;
    let rate = |count: usize, of: usize| {
        if of > 0 {
            count as f64 / of as f64
        } else {
            0.0
        }
    };

    let t1s = t1_candidates(&totals, previous_t1);
    let alphas = alpha_grid(cfg);

    // flagged by anything other than E_final > T1, per alpha and sample
    let other: Vec<Vec<bool>> = alphas
        .iter()
        .map(|&alpha| {
            // T1 = inf switches criterion 1 off
            let rules = DetectionRules::new(f64::INFINITY, alpha);
            energies.iter().map(|e| e.is_flagged(&rules)).collect()
        })
        .collect();

    let mut best: Option<ThresholdChoice> = None;
    for &t1 in &t1s {
        for (a, &alpha) in alphas.iter().enumerate() {
            let (mut fa, mut miss) = (0, 0);
            for k in 0..totals.len() {
                // a prefix can only exceed T1 if the final energy does
                let flagged = other[a][k] || totals[k] > t1;
                match (abnormal[k], flagged) {
                    (false, true) => fa += 1,
                    (true, false) => miss += 1,
                    _ => {}
                }
            }
            let choice = ThresholdChoice {
                t1,
                alpha,
                err_fa: rate(fa, n_norm),
                err_miss: rate(miss, n_abn),
            };
            if best.is_none_or(|b| choice.objective() < b.objective()) {
                best = Some(choice);
            }
        }
    }
    best.expect("candidate grids are never empty")
}
