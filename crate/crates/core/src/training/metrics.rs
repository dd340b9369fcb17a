use serde::Serialize;

use crate::error::{Error, Result};

/// Confusion counts for one class at a fixed threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ClassCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn add(&mut self, o: &ClassCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// `num / den` with 0/0 defined as 0.
pub fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2PR / (P + R)`, 0 when `P + R = 0`.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub threshold: f64,
    pub n_items: usize,
    pub labels: Vec<String>,
    /// Mean over (item, class) of `[prob ≥ threshold] == target`.
    pub binary_accuracy: f64,
    pub confusion: Vec<ClassCounts>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    /// Micro-averaged ROC over every (item, class) pair. Empty when all
    /// pairs share one target value.
    pub roc_points: Vec<(f64, f64)>,
    pub auc: Option<f64>,
    pub per_class_auc: Vec<Option<f64>>,
}

/// Metrics from per-item class probabilities and 0/1 targets.
pub fn compute_metrics(probs: &[Vec<f32>], targets: &[Vec<bool>], labels: &[String], threshold: f64) -> Result<Metrics> {
    if probs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} not in (0, 1)")));
    }
    let n_classes = probs[0].len();
    if probs.len() != targets.len() || probs.iter().any(|p| p.len() != n_classes) || targets.iter().any(|t| t.len() != n_classes) {
        return Err(Error::Shape("probabilities and targets disagree in shape".into()));
    }
    let mut confusion = vec![ClassCounts::default(); n_classes];
    let mut matches = 0usize;
    for (p, t) in probs.iter().zip(targets) {
        for c in 0..n_classes {
            let predicted = p[c] as f64 >= threshold;
            let counts = &mut confusion[c];
            match (predicted, t[c]) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
            matches += usize::from(predicted == t[c]);
        }
    }
    let mut total = ClassCounts::default();
    confusion.iter().for_each(|c| total.add(c));
    let precision: Vec<f64> = confusion.iter().map(ClassCounts::precision).collect();
    let recall: Vec<f64> = confusion.iter().map(ClassCounts::recall).collect();
    let f1s: Vec<f64> = confusion.iter().map(ClassCounts::f1).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let scores: Vec<f64> = probs.iter().flatten().map(|&p| p as f64).collect();
    let flat: Vec<bool> = targets.iter().flatten().copied().collect();
    let (roc_points, auc) = match roc_auc(&scores, &flat) {
        Ok((pts, a)) => (pts, Some(a)),
        Err(_) => (Vec::new(), None),
    };
    let per_class_auc = (0..n_classes)
        .map(|c| {
            let s: Vec<f64> = probs.iter().map(|p| p[c] as f64).collect();
            let t: Vec<bool> = targets.iter().map(|t| t[c]).collect();
            roc_auc(&s, &t).ok().map(|(_, a)| a)
        })
        .collect();
    Ok(Metrics {
        threshold,
        n_items: probs.len(),
        labels: labels.to_vec(),
        binary_accuracy: ratio(matches, probs.len() * n_classes),
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1s),
        micro_precision: total.precision(),
        micro_recall: total.recall(),
        micro_f1: total.f1(),
        confusion,
        precision,
        recall,
        f1: f1s,
        roc_points,
        auc,
        per_class_auc,
    })
}

/// ROC curve from a sweep over distinct scores (highest first), starting at
/// (0, 0), and its trapezoidal area. Tied scores move diagonally, so the
/// area equals the Mann–Whitney statistic with ties counted as 1/2.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(Vec<(f64, f64)>, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument("ROC needs at least one positive and one negative".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x, y) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        area += (x - x0) * (y + y0) / 2.0;
        points.push((x, y));
    }
    Ok((points, area))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::RngStream;
    use proptest::prelude::*;

    fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1;
                    total += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        total / pairs as f64
    }

    fn trapezoid(points: &[(f64, f64)]) -> f64 {
        points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
    }

    #[test]
    fn f1_of_precision_096_recall_049() {
        let v = f1(0.96, 0.49);
        assert!((v - 0.6488).abs() < 1e-4);
        assert_eq!((v * 100.0).round() / 100.0, 0.65);
    }

    #[test]
    fn hand_confusion() {
        let c = ClassCounts { tp: 1, fp: 1, fn_: 1, tn: 0 };
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.5, 0.5, 0.5));
        let empty = ClassCounts::default();
        assert_eq!((empty.precision(), empty.recall(), empty.f1()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn perfect_predictions() {
        let probs = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.7, 0.6]];
        let targets = vec![vec![true, false], vec![false, true], vec![true, true]];
        let m = compute_metrics(&probs, &targets, &[], 0.5).unwrap();
        assert_eq!(m.binary_accuracy, 1.0);
        assert!(m.precision.iter().chain(&m.recall).chain(&m.f1).all(|&v| v == 1.0));
        assert_eq!(m.auc, Some(1.0));
    }

    #[test]
    fn auc_edge_cases() {
        let (_, a) = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(a, 1.0);
        let (pts, a) = roc_auc(&[0.4; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(a, 0.5);
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(compute_metrics(&[], &[], &[], 0.5).is_err());
    }

    #[test]
    fn random_auc_matches_pair_count() {
        let mut rng = RngStream::new(3);
        let scores: Vec<f64> = (0..50).map(|_| (rng.uniform() * 10.0).round() / 10.0).collect();
        let labels: Vec<bool> = (0..50).map(|i| i % 3 == 0 || rng.uniform() < 0.3).collect();
        let (pts, a) = roc_auc(&scores, &labels).unwrap();
        assert!((a - pair_count_auc(&scores, &labels)).abs() < 1e-9);
        assert!((a - trapezoid(&pts)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn auc_equals_pair_statistic(pairs in proptest::collection::vec((0u8..20, any::<bool>()), 2..60)) {
            let scores: Vec<f64> = pairs.iter().map(|&(s, _)| s as f64 / 20.0).collect();
            let labels: Vec<bool> = pairs.iter().map(|&(_, l)| l).collect();
            match roc_auc(&scores, &labels) {
                Ok((pts, a)) => {
                    prop_assert!((a - pair_count_auc(&scores, &labels)).abs() < 1e-9);
                    prop_assert!((a - trapezoid(&pts)).abs() < 1e-9);
                    prop_assert!(pts.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
                }
                Err(_) => prop_assert!(labels.iter().all(|&l| l) || labels.iter().all(|&l| !l)),
            }
        }

        #[test]
        fn recall_is_threshold_monotone(rows in proptest::collection::vec((0f32..1.0, 0f32..1.0, any::<bool>(), any::<bool>()), 1..40),
                                        t1 in 0.01f64..0.99, dt in 0.0f64..0.5) {
            let probs: Vec<Vec<f32>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
            let targets: Vec<Vec<bool>> = rows.iter().map(|r| vec![r.2, r.3]).collect();
            let t2 = (t1 + dt).min(0.99);
            let lo = compute_metrics(&probs, &targets, &[], t1).unwrap();
            let hi = compute_metrics(&probs, &targets, &[], t2).unwrap();
            for c in 0..2 {
                prop_assert!(hi.recall[c] <= lo.recall[c]);
                prop_assert!((lo.f1[c] - f1(lo.precision[c], lo.recall[c])).abs() < 1e-12);
            }
            for v in lo.precision.iter().chain(&lo.recall).chain(&lo.f1).chain([&lo.binary_accuracy, &lo.macro_f1, &lo.micro_f1]) {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
