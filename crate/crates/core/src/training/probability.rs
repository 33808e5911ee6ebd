//! Classifiers usable inside the training loop.

use crate::classifier::{GradientConfig, LogisticUnit, Standardizer};
use crate::error::{NtbError, Result};

/// A binary classifier over the `[E, E / E_min]` feature that reports how
/// confident it is in each prediction.
pub trait ProbabilityClassifier {
    /// Re-trains from scratch; `labels[k]` is `true` for abnormal routes.
    fn fit(&mut self, features: &[[f64; 2]], labels: &[bool]) -> Result<()>;

    /// `(abnormal?, P)` with `P` in `[0, 1]` the confidence of that answer.
    fn predict(&self, feature: &[f64; 2]) -> (bool, f64);
}

#[derive(Debug, Clone, PartialEq)]
enum Fitted {
    Unfitted,
    Constant(bool),
    Linear {
        standardizer: Standardizer,
        unit: LogisticUnit,
    },
}

/// Logistic regression on `log(1 + x)` of each feature, standardised.
/// Energies span several orders of magnitude (unreachable edges cost `L`),
/// hence the log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbabilityClassifier {
    pub config: GradientConfig,
    fitted: Fitted,
}

impl Default for LogisticProbabilityClassifier {
    fn default() -> Self {
        Self::new(GradientConfig::default())
    }
}

fn squash(f: &[f64; 2]) -> Vec<f64> {
    f.iter().map(|v| v.max(0.0).ln_1p()).collect()
}

impl LogisticProbabilityClassifier {
    pub fn new(config: GradientConfig) -> Self {
        Self {
            config,
            fitted: Fitted::Unfitted,
        }
    }

    /// Probability that `feature` is abnormal.
    pub fn probability(&self, feature: &[f64; 2]) -> f64 {
        match &self.fitted {
            Fitted::Unfitted => 0.5,
            Fitted::Constant(abnormal) => f64::from(*abnormal),
            Fitted::Linear { standardizer, unit } => {
                unit.probability(&standardizer.transform(&squash(feature)))
            }
        }
    }
}

impl ProbabilityClassifier for LogisticProbabilityClassifier {
    fn fit(&mut self, features: &[[f64; 2]], labels: &[bool]) -> Result<()> {
        if features.len() != labels.len() {
            return Err(NtbError::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if features.is_empty() {
            return Err(NtbError::EmptyInput("classifier features"));
        }
        if labels.iter().all(|&l| l == labels[0]) {
            self.fitted = Fitted::Constant(labels[0]);
            return Ok(());
        }
        let rows: Vec<Vec<f64>> = features.iter().map(squash).collect();
        let standardizer = Standardizer::fit(&rows)?;
        let z: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.transform(r)).collect();
        let t: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        let unit = LogisticUnit::fit(&z, &t, &self.config);
        if unit.bias.is_nan() || unit.weights.iter().any(|w| w.is_nan()) {
            return Err(NtbError::Classifier("gradient descent diverged".into()));
        }
        self.fitted = Fitted::Linear { standardizer, unit };
        Ok(())
    }

    fn predict(&self, feature: &[f64; 2]) -> (bool, f64) {
        let p = self.probability(feature);
        if p > 0.5 {
            (true, p)
        } else {
            (false, 1.0 - p)
        }
    }
}
