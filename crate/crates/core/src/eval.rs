//! Error rates, confusion matrices, dataset splits and ROC sweeps.
//!
//! `FA = N_fp / N⁻`, `Miss = N_fn / N⁺`, `TER = wrong / total`. A rate whose
//! denominator is zero is `None` (JSON `null`, "undefined" in tables), never 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NtbError, Result};
use crate::training::Label;

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One-vs-rest counts and rates for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub class: String,
    /// `N⁺`: samples of this class.
    pub positives: usize,
    /// `N⁻`: samples of every other class.
    pub negatives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub fa: Option<f64>,
    pub miss: Option<f64>,
}

impl ClassRates {
    fn new(
        class: String,
        positives: usize,
        negatives: usize,
        false_positives: usize,
        false_negatives: usize,
    ) -> Self {
        Self {
            class,
            positives,
            negatives,
            false_positives,
            false_negatives,
            fa: ratio(false_positives, negatives),
            miss: ratio(false_negatives, positives),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// `confusion[truth][predicted]`, indexed like `classes`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
    pub wrong: usize,
    pub ter: Option<f64>,
    /// Abnormal-vs-normal rates; only for the abnormality task.
    pub overall: Option<ClassRates>,
    /// Abnormality task: one entry per type, where a miss means the route was
    /// called normal and a false alarm means a normal route was given this
    /// type. Group task: one-vs-rest per class.
    pub per_class: Vec<ClassRates>,
}

fn confusion(classes: &[String], pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes.len()]; classes.len()];
    for &(t, p) in pairs {
        m[t][p] += 1;
    }
    m
}

fn check_ids<K: Ord + std::fmt::Debug, V>(
    pred: &BTreeMap<K, V>,
    truth: &BTreeMap<K, V>,
) -> Result<()> {
    let missing: Vec<&K> = truth.keys().filter(|k| !pred.contains_key(k)).collect();
    let extra: Vec<&K> = pred.keys().filter(|k| !truth.contains_key(k)).collect();
    if missing.is_empty() && extra.is_empty() {
        Ok(())
    } else {
        Err(NtbError::InvalidArgument(format!(
            "prediction/ground-truth id mismatch: missing predictions {missing:?}, unknown ids {extra:?}"
        )))
    }
}

const ABNORMALITY_CLASSES: [&str; 4] = ["normal", "I", "II", "III"];

fn label_index(l: Label) -> usize {
    use crate::training::AbnormalityType::*;
    match l {
        Label::Normal => 0,
        Label::Abnormal(I) => 1,
        Label::Abnormal(II) => 2,
        Label::Abnormal(III) => 3,
    }
}

/// Metrics of abnormality predictions keyed by track id.
pub fn abnormality_metrics(
    predictions: &BTreeMap<u64, Label>,
    truth: &BTreeMap<u64, Label>,
) -> Result<EvalReport> {
    check_ids(predictions, truth)?;
    let classes: Vec<String> = ABNORMALITY_CLASSES.iter().map(|s| s.to_string()).collect();
    let pairs: Vec<(usize, usize)> = truth
        .iter()
        .map(|(id, &t)| (label_index(t), label_index(predictions[id])))
        .collect();
    let m = confusion(&classes, &pairs);
    let n_neg = m[0].iter().sum::<usize>();
    let n_pos = pairs.len() - n_neg;
    let fp = n_neg - m[0][0];
    let fn_ = (1..4).map(|t| m[t][0]).sum::<usize>();
    let per_class = (1..4)
        .map(|t| {
            ClassRates::new(
                classes[t].clone(),
                m[t].iter().sum(),
                n_neg,
                m[0][t],
                m[t][0],
            )
        })
        .collect();
    Ok(EvalReport {
        classes,
        confusion: m,
        total: pairs.len(),
        wrong: fp + fn_,
        ter: ratio(fp + fn_, pairs.len()),
        overall: Some(ClassRates::new("abnormal".into(), n_pos, n_neg, fp, fn_)),
        per_class,
    })
}

/// One-vs-rest metrics of group predictions keyed by pair id.
pub fn group_metrics(
    predictions: &BTreeMap<String, String>,
    truth: &BTreeMap<String, String>,
    classes: &[String],
) -> Result<EvalReport> {
    check_ids(predictions, truth)?;
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(k, c)| (c.as_str(), k))
        .collect();
    let lookup = |l: &String| {
        index
            .get(l.as_str())
            .copied()
            .ok_or_else(|| NtbError::UnknownLabel(l.clone()))
    };
    let pairs = truth
        .iter()
        .map(|(id, t)| Ok((lookup(t)?, lookup(&predictions[id])?)))
        .collect::<Result<Vec<_>>>()?;
    let m = confusion(classes, &pairs);
    let total = pairs.len();
    let wrong = pairs.iter().filter(|(t, p)| t != p).count();
    let per_class = classes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let pos: usize = m[k].iter().sum();
            let predicted: usize = m.iter().map(|row| row[k]).sum();
            ClassRates::new(
                c.clone(),
                pos,
                total - pos,
                predicted - m[k][k],
                pos - m[k][k],
            )
        })
        .collect();
    Ok(EvalReport {
        classes: classes.to_vec(),
        confusion: m,
        total,
        wrong,
        ter: ratio(wrong, total),
        overall: None,
        per_class,
    })
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".to_string(), |v| format!("{:.2}%", 100.0 * v))
}

impl EvalReport {
    /// Mean accuracy over classes that have at least one sample.
    pub fn macro_accuracy(&self) -> Option<f64> {
        let recalls: Vec<f64> = self
            .per_class
            .iter()
            .filter_map(|c| c.miss.map(|m| 1.0 - m))
            .collect();
        (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64)
    }

    /// Aligned plain-text rendering: rates first, then the confusion matrix.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let w = self
            .classes
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(5)
            .max(8);
        let _ = writeln!(
            out,
            "{:<w$}  {:>10}  {:>10}  {:>6}  {:>6}",
            "class", "Miss", "FA", "N+", "N-"
        );
        for c in self.overall.iter().chain(&self.per_class) {
            let _ = writeln!(
                out,
                "{:<w$}  {:>10}  {:>10}  {:>6}  {:>6}",
                c.class,
                fmt_rate(c.miss),
                fmt_rate(c.fa),
                c.positives,
                c.negatives
            );
        }
        let _ = writeln!(
            out,
            "TER {} ({} of {} wrong)",
            fmt_rate(self.ter),
            self.wrong,
            self.total
        );
        let _ = writeln!(out);
        let _ = write!(out, "{:<w$}", "truth\\pred");
        for c in &self.classes {
            let _ = write!(out, "  {c:>w$}");
        }
        let _ = writeln!(out);
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            let _ = write!(out, "{c:<w$}");
            for v in row {
                let _ = write!(out, "  {v:>w$}");
            }
            let _ = writeln!(out);
        }
        out
    }
}

/// Stratified seeded split into `(train, test)` index lists, both ascending.
///
/// Each class sends `round(fraction * n)` samples to training, clamped so
/// that both sides get at least one. Classes with fewer than two samples go
/// entirely to training.
pub fn split_dataset<L: Ord + Clone + std::fmt::Debug>(
    labels: &[L],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(NtbError::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (k, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut idx) in by_class {
        let n = idx.len();
        if n < 2 {
            log::warn!("class {class:?} has {n} sample(s); keeping it in the training split");
            train.extend(idx);
            continue;
        }
        idx.shuffle(&mut rng);
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        test.extend_from_slice(&idx[n_train..]);
        train.extend_from_slice(&idx[..n_train]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// A point of a threshold sweep: samples with `score > threshold` are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Sweeps the threshold from below the lowest score up through every
/// distinct score. TPR and FPR are non-increasing along the result.
pub fn roc_sweep(scores: &[f64], positive: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != positive.len() {
        return Err(NtbError::DimensionMismatch {
            expected: scores.len(),
            got: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(NtbError::Degenerate(
            "ROC needs both positive and negative samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        tpr: 1.0,
        fpr: 1.0,
    }];
    let (mut tp, mut fp) = (n_pos, n_neg);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if positive[order[k]] {
                tp -= 1;
            } else {
                fp -= 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: s,
            tpr: tp as f64 / n_pos as f64,
            fpr: fp as f64 / n_neg as f64,
        });
    }
    Ok(points)
}

/// Area under the ROC curve by rank statistics (ties count one half).
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let points = roc_sweep(scores, positive)?;
    // trapezoids between consecutive points of the sweep
    Ok(points
        .windows(2)
        .map(|w| (w[0].fpr - w[1].fpr) * 0.5 * (w[0].tpr + w[1].tpr))
        .sum())
}

/// Distinct labels, sorted.
pub fn class_list<'a>(labels: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    labels
        .into_iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::AbnormalityType;

    fn ids(labels: &[Label]) -> BTreeMap<u64, Label> {
        labels
            .iter()
            .enumerate()
            .map(|(k, &l)| (k as u64, l))
            .collect()
    }

    #[test]
    fn four_false_alarms_in_a_hundred() {
        let truth = ids(&[Label::Normal; 100]);
        let mut pred = truth.clone();
        for k in 0..4 {
            pred.insert(k, Label::Abnormal(AbnormalityType::I));
        }
        let r = abnormality_metrics(&pred, &truth).unwrap();
        let o = r.overall.unwrap();
        assert_eq!(o.fa, Some(0.04));
        assert_eq!(o.miss, None);
    }

    #[test]
    fn all_correct() {
        let truth = ids(&[Label::Normal, Label::Abnormal(AbnormalityType::II)]);
        let r = abnormality_metrics(&truth, &truth).unwrap();
        let o = r.overall.unwrap();
        assert_eq!((o.fa, o.miss, r.ter), (Some(0.0), Some(0.0), Some(0.0)));
    }

    #[test]
    fn ter_three_of_ten() {
        let abn = Label::Abnormal(AbnormalityType::III);
        let truth = ids(&[
            Label::Normal,
            Label::Normal,
            Label::Normal,
            Label::Normal,
            Label::Normal,
            abn,
            abn,
            abn,
            abn,
            abn,
        ]);
        let mut pred = truth.clone();
        pred.insert(0, abn);
        pred.insert(5, Label::Normal);
        pred.insert(6, Label::Normal);
        let r = abnormality_metrics(&pred, &truth).unwrap();
        assert_eq!(r.ter, Some(0.3));
        let o = r.overall.unwrap();
        assert_eq!(
            r.ter.unwrap() * r.total as f64,
            (o.false_positives + o.false_negatives) as f64
        );
        assert_eq!(r.per_class[2].miss, Some(0.4));
    }

    #[test]
    fn mistyped_abnormal_is_not_binary_error() {
        let truth = ids(&[Label::Abnormal(AbnormalityType::I)]);
        let pred = ids(&[Label::Abnormal(AbnormalityType::II)]);
        let r = abnormality_metrics(&pred, &truth).unwrap();
        assert_eq!(r.ter, Some(0.0));
        assert_eq!(r.confusion[1][2], 1);
    }

    #[test]
    fn id_mismatch_errors() {
        let truth = ids(&[Label::Normal, Label::Normal]);
        let pred = ids(&[Label::Normal]);
        assert!(abnormality_metrics(&pred, &truth).is_err());
    }

    fn named(v: &[&str]) -> BTreeMap<String, String> {
        v.iter()
            .enumerate()
            .map(|(k, l)| (format!("p{k:02}"), l.to_string()))
            .collect()
    }

    #[test]
    fn group_one_error_in_twenty() {
        let classes: Vec<String> = ["exchange", "return"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let truth = named(&[["exchange"; 10], ["return"; 10]].concat());
        let mut pred = truth.clone();
        pred.insert("p10".into(), "exchange".into());
        let r = group_metrics(&pred, &truth, &classes).unwrap();
        assert_eq!(r.ter, Some(0.05));
        assert_eq!(r.confusion, vec![vec![10, 0], vec![1, 9]]);
        assert_eq!(r.per_class[0].fa, Some(0.1));
        assert_eq!(r.per_class[1].miss, Some(0.1));
    }

    #[test]
    fn single_class_truth_has_undefined_fa() {
        let classes = vec!["meet".to_string()];
        let truth = named(&["meet", "meet"]);
        let r = group_metrics(&truth, &truth, &classes).unwrap();
        assert_eq!(r.per_class[0].fa, None);
        assert!(r.to_table().contains("undefined"));
        assert!(serde_json::to_string(&r).unwrap().contains("\"fa\":null"));
    }

    #[test]
    fn unknown_group_label() {
        let classes = vec!["meet".to_string()];
        let truth = named(&["meet"]);
        let pred = named(&["dance"]);
        assert!(matches!(
            group_metrics(&pred, &truth, &classes),
            Err(NtbError::UnknownLabel(_))
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let labels = vec![0u8; 100];
        let (tr, te) = split_dataset(&labels, 0.75, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (75, 25));
        assert_eq!(split_dataset(&labels, 0.75, 7).unwrap(), (tr, te));
    }

    #[test]
    fn singleton_class_stays_in_train() {
        let labels = vec!["a", "a", "a", "a", "b"];
        let (tr, te) = split_dataset(&labels, 0.5, 1).unwrap();
        assert!(tr.contains(&4));
        assert_eq!(tr.len() + te.len(), 5);
    }

    #[test]
    fn bad_fraction() {
        assert!(split_dataset(&[1, 2], 1.0, 0).is_err());
    }

    #[test]
    fn roc_of_perfect_ranking() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let pos = [false, false, true, true];
        assert_eq!(auc(&scores, &pos).unwrap(), 1.0);
        let pts = roc_sweep(&scores, &pos).unwrap();
        assert!(pts
            .windows(2)
            .all(|w| w[1].tpr <= w[0].tpr && w[1].fpr <= w[0].fpr));
        assert_eq!(pts.last().map(|p| (p.tpr, p.fpr)), Some((0.0, 0.0)));
    }

    #[test]
    fn auc_matches_pair_counting() {
        let scores = [0.3, 0.5, 0.5, 0.1, 0.9, 0.5, 0.2];
        let pos = [true, false, true, false, true, false, false];
        // P(score+ > score-) + 0.5 P(tie), over all 12 pairs
        let mut acc = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                if pos[i] && !pos[j] {
                    acc += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((auc(&scores, &pos).unwrap() - acc / 12.0).abs() < 1e-12);
    }
}
