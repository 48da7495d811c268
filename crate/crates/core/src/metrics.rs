//! Disparate impact, its normalized form, and F1.

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::models::Prediction;

/// Degenerate-case rules applied while computing a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeFlag {
    /// Both groups had a zero positive rate; DI resolved to 1.
    BothRatesZero,
    /// Only the privileged group had a zero positive rate; DI resolved to +inf.
    PrivilegedRateZero,
    /// No true positives, false positives or false negatives; F1 resolved to 0.
    F1Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupOutcomeCounts {
    /// Row count per group, indexed by s (1 = privileged).
    pub n: [usize; 2],
    /// Positive-prediction count per group.
    pub pos: [usize; 2],
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(with = "extended_f64")]
    pub di: f64,
    pub ndi: f64,
    pub f1: f64,
    /// Plain accuracy, reported alongside F1.
    pub accuracy: f64,
    pub counts: GroupOutcomeCounts,
    pub edge_flags: Vec<EdgeFlag>,
}

/// Disparate impact with the edge rule that was applied, if any.
pub fn disparate_impact_flagged(pred_labels: &[u8], groups: &[u8]) -> Result<(f64, Option<EdgeFlag>)> {
    let weights = vec![1.0; pred_labels.len()];
    weighted_disparate_impact(pred_labels, groups, &weights)
}

/// `P(pred = 1 | unprivileged) / P(pred = 1 | privileged)`.
pub fn disparate_impact(pred_labels: &[u8], groups: &[u8]) -> Result<f64> {
    disparate_impact_flagged(pred_labels, groups).map(|(di, _)| di)
}

/// Disparate impact where every row counts with its weight.
pub fn weighted_disparate_impact(
    labels: &[u8],
    groups: &[u8],
    weights: &[f64],
) -> Result<(f64, Option<EdgeFlag>)> {
    if labels.len() != groups.len() || labels.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} labels, {} groups, {} weights",
            labels.len(),
            groups.len(),
            weights.len()
        )));
    }
    let mut total = [0.0f64; 2];
    let mut pos = [0.0f64; 2];
    for ((&l, &g), &w) in labels.iter().zip(groups).zip(weights) {
        total[g as usize] += w;
        if l == 1 {
            pos[g as usize] += w;
        }
    }
    for g in [0u8, 1] {
        if total[g as usize] == 0.0 {
            return Err(Error::MissingGroup(g));
        }
    }
    let unpriv = pos[0] / total[0];
    let priv_ = pos[1] / total[1];
    Ok(match (unpriv == 0.0, priv_ == 0.0) {
        (true, true) => (1.0, Some(EdgeFlag::BothRatesZero)),
        (false, true) => (f64::INFINITY, Some(EdgeFlag::PrivilegedRateZero)),
        _ => (unpriv / priv_, None),
    })
}

/// Folds DI into [0, 1]: `di` when `di <= 1`, else `1 / di`.
pub fn normalize_di(di: f64) -> Result<f64> {
    if di.is_nan() || di < 0.0 {
        return Err(Error::InvalidParameter(format!("disparate impact {di} is negative")));
    }
    Ok(if di <= 1.0 { di } else { 1.0 / di })
}

fn confusion(pred: &[u8], truth: &[u8]) -> Result<(usize, usize, usize, usize)> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    Ok((tp, fp, fn_, tn))
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, Option<EdgeFlag>) {
    if tp + fp + fn_ == 0 {
        return (0.0, Some(EdgeFlag::F1Undefined));
    }
    (tp as f64 / (tp as f64 + 0.5 * (fp + fn_) as f64), None)
}

/// `TP / (TP + (FP + FN) / 2)`; 0 when all three counts are zero.
pub fn f1_score(pred_labels: &[u8], true_labels: &[u8]) -> Result<f64> {
    let (tp, fp, fn_, _) = confusion(pred_labels, true_labels)?;
    Ok(f1_from_counts(tp, fp, fn_).0)
}

pub fn evaluate(pred: &Prediction, test: &TabularDataset) -> Result<MetricReport> {
    evaluate_labels(&pred.labels, test.y(), test.s())
}

pub fn evaluate_labels(pred: &[u8], truth: &[u8], groups: &[u8]) -> Result<MetricReport> {
    if groups.len() != pred.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions vs {} groups",
            pred.len(),
            groups.len()
        )));
    }
    let (tp, fp, fn_, tn) = confusion(pred, truth)?;
    let (di, di_flag) = disparate_impact_flagged(pred, groups)?;
    let (f1, f1_flag) = f1_from_counts(tp, fp, fn_);
    let mut n = [0usize; 2];
    let mut pos = [0usize; 2];
    for (&p, &g) in pred.iter().zip(groups) {
        n[g as usize] += 1;
        pos[g as usize] += p as usize;
    }
    let total = pred.len().max(1) as f64;
    Ok(MetricReport {
        di,
        ndi: normalize_di(di)?,
        f1,
        accuracy: (tp + tn) as f64 / total,
        counts: GroupOutcomeCounts { n, pos, tp, fp, fn_, tn },
        edge_flags: di_flag.into_iter().chain(f1_flag).collect(),
    })
}

/// Serializes `+inf` as the string `"inf"` so reports stay valid JSON.
pub(crate) mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(de::Error::custom(format!("bad number `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn di_examples() {
        assert_eq!(disparate_impact(&[1, 0, 1, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
        // unprivileged 1/4, privileged 2/4
        let di = disparate_impact(&[1, 0, 0, 0, 1, 1, 0, 0], &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        assert!((di - 0.5).abs() < 1e-15);
        let (di, flag) = disparate_impact_flagged(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap();
        assert_eq!((di, flag), (1.0, Some(EdgeFlag::BothRatesZero)));
        let (di, flag) = disparate_impact_flagged(&[1, 0, 0, 0], &[0, 1, 0, 1]).unwrap();
        assert!(di.is_infinite());
        assert_eq!(flag, Some(EdgeFlag::PrivilegedRateZero));
        assert!(matches!(disparate_impact(&[1, 0], &[1, 1]), Err(Error::MissingGroup(0))));
    }

    #[test]
    fn ndi_examples() {
        assert_eq!(normalize_di(1.0).unwrap(), 1.0);
        assert_eq!(normalize_di(2.0).unwrap(), 0.5);
        assert_eq!(normalize_di(0.0).unwrap(), 0.0);
        assert_eq!(normalize_di(f64::INFINITY).unwrap(), 0.0);
        assert!(normalize_di(-0.1).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        // TP=1 FP=1 FN=1
        assert_eq!(f1_score(&[1, 1, 0], &[1, 0, 1]).unwrap(), 0.5);
        let r = evaluate_labels(&[0, 0], &[0, 0], &[0, 1]).unwrap();
        assert_eq!(r.f1, 0.0);
        assert!(r.edge_flags.contains(&EdgeFlag::F1Undefined));
        assert!(f1_score(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn evaluate_best_and_worst_cases() {
        let truth = [1, 0, 1, 0];
        let groups = [0, 0, 1, 1];
        let best = evaluate_labels(&truth, &truth, &groups).unwrap();
        assert_eq!((best.ndi, best.f1), (1.0, 1.0));
        let worst = evaluate_labels(&[0, 0, 1, 1], &truth, &groups).unwrap();
        assert_eq!(worst.ndi, 0.0);
    }

    #[test]
    fn eight_row_hand_count() {
        let pred = [1, 1, 0, 0, 1, 0, 1, 1];
        let truth = [1, 0, 0, 1, 1, 0, 0, 1];
        let groups = [0, 0, 0, 0, 1, 1, 1, 1];
        let r = evaluate_labels(&pred, &truth, &groups).unwrap();
        assert_eq!(r.counts, GroupOutcomeCounts { n: [4, 4], pos: [2, 3], tp: 3, fp: 2, fn_: 1, tn: 2 });
        assert!((r.di - (0.5 / 0.75)).abs() < 1e-15);
        assert!((r.f1 - 3.0 / 4.5).abs() < 1e-15);
        assert_eq!(r.accuracy, 5.0 / 8.0);
    }

    #[test]
    fn infinite_di_round_trips_through_json() {
        let r = evaluate_labels(&[1, 0], &[1, 0], &[0, 1]).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"di\":\"inf\""));
        let back: MetricReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn ndi_reciprocal_symmetry(x in 1e-6f64..1e6) {
            prop_assert!((normalize_di(x).unwrap() - normalize_di(1.0 / x).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn di_permutation_invariant(pairs in proptest::collection::vec((0u8..2, 0u8..2), 2..60), rot in 0usize..60) {
            let mut pairs = pairs;
            pairs.push((1, 0));
            pairs.push((1, 1));
            let (p, g): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
            let k = rot % pairs.len();
            let mut rotated = pairs.clone();
            rotated.rotate_left(k);
            rotated.reverse();
            let (p2, g2): (Vec<u8>, Vec<u8>) = rotated.into_iter().unzip();
            let a = disparate_impact(&p, &g).unwrap();
            let b = disparate_impact(&p2, &g2).unwrap();
            prop_assert!(a == b || (a - b).abs() < 1e-12);
        }

        #[test]
        fn bounded_report(rows in proptest::collection::vec((0u8..2, 0u8..2), 1..80)) {
            let mut rows = rows;
            rows.push((0, 0));
            rows.push((1, 1));
            let pred: Vec<u8> = rows.iter().map(|r| r.0).collect();
            let truth: Vec<u8> = rows.iter().map(|r| r.1).collect();
            let groups: Vec<u8> = (0..rows.len()).map(|i| (i % 2) as u8).collect();
            let r = evaluate_labels(&pred, &truth, &groups).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.ndi));
            prop_assert!((0.0..=1.0).contains(&r.f1));
        }

        #[test]
        fn group_blind_predictions_are_fair(k in 0usize..10, m in 1usize..10) {
            // identical positive rate in both groups by construction
            let mut pred = Vec::new();
            let mut groups = Vec::new();
            for g in [0u8, 1] {
                for i in 0..(m * 10) {
                    pred.push(u8::from(i % 10 < k));
                    groups.push(g);
                }
            }
            let truth = vec![1; pred.len()];
            prop_assert_eq!(evaluate_labels(&pred, &truth, &groups).unwrap().ndi, 1.0);
        }
    }
}
