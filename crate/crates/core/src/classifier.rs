//! Linear classifiers trained by full-batch gradient descent on the
//! L2-regularised logistic loss.
//!
//! Inputs are standardised column-wise first (a constant column keeps scale
//! 1). Weights start at zero and the data are visited in a fixed order, so a
//! given training set always produces the same model.

use serde::{Deserialize, Serialize};

use crate::error::{NtbError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

/// Column mean and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or(NtbError::EmptyInput("feature rows"))?;
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(NtbError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n)
            .collect();
        let scale = (0..dim)
            .map(|d| {
                let var = rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary logistic model on already-standardised inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticUnit {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticUnit {
    pub fn margin(&self, z: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn probability(&self, z: &[f64]) -> f64 {
        sigmoid(self.margin(z))
    }

    /// Fits on standardised rows with targets in {0, 1}.
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], cfg: &GradientConfig) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut unit = Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        };
        let mut grad = vec![0.0; dim];
        for _ in 0..cfg.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (z, &t) in rows.iter().zip(targets) {
                let err = unit.probability(z) - t;
                for (g, v) in grad.iter_mut().zip(z) {
                    *g += err * v;
                }
                grad_b += err;
            }
            for (w, g) in unit.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * (g / n + cfg.l2 * *w);
            }
            unit.bias -= cfg.learning_rate * grad_b / n;
        }
        unit
    }
}

/// One-vs-rest linear classifier over named classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOvr {
    pub classes: Vec<String>,
    pub standardizer: Standardizer,
    pub units: Vec<LogisticUnit>,
}

impl LinearOvr {
    /// Trains one unit per class. Classes are kept in sorted order, which is
    /// also the tie-break order at prediction time.
    pub fn fit(rows: &[Vec<f64>], labels: &[String], cfg: &GradientConfig) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(NtbError::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let mut classes: Vec<String> = labels.to_vec();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(NtbError::Degenerate(format!(
                "need at least two classes, got {}",
                classes.len()
            )));
        }
        for c in &classes {
            let count = labels.iter().filter(|l| *l == c).count();
            if count < 2 {
                return Err(NtbError::Degenerate(format!(
                    "class {c:?} has {count} sample(s), need at least two"
                )));
            }
        }
        let standardizer = Standardizer::fit(rows)?;
        let z: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.transform(r)).collect();
        let units = classes
            .iter()
            .map(|c| {
                let t: Vec<f64> = labels.iter().map(|l| f64::from(l == c)).collect();
                LogisticUnit::fit(&z, &t, cfg)
            })
            .collect();
        Ok(Self {
            classes,
            standardizer,
            units,
        })
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// Per-class confidences in `classes` order.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(NtbError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let z = self.standardizer.transform(x);
        Ok(self.units.iter().map(|u| u.probability(&z)).collect())
    }

    /// Highest-scoring class; the first class in label order wins ties.
    pub fn predict(&self, x: &[f64]) -> Result<(String, Vec<f64>)> {
        let scores = self.scores(x)?;
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        Ok((self.classes[best].clone(), scores))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn constant_column_keeps_unit_scale() {
        let s = Standardizer::fit(&[vec![3.0, 1.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(s.scale[0], 1.0);
        assert_eq!(s.transform(&[3.0, 1.5]), vec![0.0, 0.0]);
    }

    #[test]
    fn separable_two_class() {
        let rows: Vec<Vec<f64>> = (-5..=5)
            .filter(|&v| v != 0)
            .map(|v| vec![v as f64, 1.0])
            .collect();
        let y: Vec<String> = rows
            .iter()
            .map(|r| if r[0] > 0.0 { "in" } else { "out" }.to_string())
            .collect();
        let m = LinearOvr::fit(&rows, &y, &GradientConfig::default()).unwrap();
        for (r, l) in rows.iter().zip(&y) {
            assert_eq!(&m.predict(r).unwrap().0, l);
        }
    }

    #[test]
    fn contradictory_labels_still_train() {
        let rows = vec![vec![1.0], vec![1.0], vec![2.0], vec![2.0]];
        let y = labels(&["a", "b", "a", "b"]);
        let m = LinearOvr::fit(&rows, &y, &GradientConfig::default()).unwrap();
        let correct = rows
            .iter()
            .zip(&y)
            .filter(|(r, l)| &m.predict(r).unwrap().0 == *l)
            .count();
        assert!(correct < rows.len());
    }

    #[test]
    fn symmetric_tie_goes_to_first_label() {
        let rows = vec![vec![-1.0], vec![-2.0], vec![1.0], vec![2.0]];
        let y = labels(&["left", "left", "right", "right"]);
        let m = LinearOvr::fit(&rows, &y, &GradientConfig::default()).unwrap();
        let (c, s) = m.predict(&[0.0]).unwrap();
        assert_eq!(s[0], s[1]);
        assert_eq!(c, "left");
    }

    #[test]
    fn single_class_is_degenerate() {
        let rows = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            LinearOvr::fit(&rows, &labels(&["a", "a"]), &GradientConfig::default()),
            Err(NtbError::Degenerate(_))
        ));
    }

    #[test]
    fn dimension_mismatch_on_predict() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![-1.0, 0.0],
            vec![-2.0, 0.0],
        ];
        let m = LinearOvr::fit(
            &rows,
            &labels(&["a", "a", "b", "b"]),
            &GradientConfig::default(),
        )
        .unwrap();
        assert!(matches!(
            m.predict(&[1.0, 2.0, 3.0]),
            Err(NtbError::DimensionMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let rows = vec![
            vec![1.0, 3.0],
            vec![2.0, 1.0],
            vec![-1.0, 0.5],
            vec![-2.0, 2.0],
        ];
        let y = labels(&["a", "a", "b", "b"]);
        let cfg = GradientConfig::default();
        assert_eq!(
            LinearOvr::fit(&rows, &y, &cfg).unwrap(),
            LinearOvr::fit(&rows, &y, &cfg).unwrap()
        );
    }
}
