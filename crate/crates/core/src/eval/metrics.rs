//! Binary classification metrics and inter-rater agreement.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Contingency {
    pub fn from_labels(predicted: &[bool], gold: &[bool]) -> Result<Self> {
        check_lengths(predicted.len(), gold.len())?;
        let mut c = Contingency { tp: 0, fp: 0, fn_: 0, tn: 0 };
        for (&p, &g) in predicted.iter().zip(gold) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Invalid(format!("label lists differ in length ({a} vs {b})")));
    }
    if a == 0 {
        return Err(Error::Invalid("label lists are empty".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub counts: Contingency,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No positive predictions; precision reported as 0.
    pub precision_undefined: bool,
    /// No positive gold labels; recall reported as 0.
    pub recall_undefined: bool,
}

pub fn metrics_from_counts(c: Contingency) -> Result<ClassificationMetrics> {
    if c.total() == 0 {
        return Err(Error::Invalid("empty contingency table".into()));
    }
    let ratio = |num: usize, den: usize| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(ClassificationMetrics {
        counts: c,
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
    })
}

pub fn classification_metrics(predicted: &[bool], gold: &[bool]) -> Result<ClassificationMetrics> {
    metrics_from_counts(Contingency::from_labels(predicted, gold)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    /// Expected agreement is 1, so the usual ratio is undefined.
    pub degenerate: bool,
}

pub fn kappa_from_counts(c: Contingency) -> Result<Kappa> {
    let n = c.total();
    if n == 0 {
        return Err(Error::Invalid("empty contingency table".into()));
    }
    let n = n as f64;
    let p_o = (c.tp + c.tn) as f64 / n;
    let a_yes = (c.tp + c.fp) as f64 / n;
    let b_yes = (c.tp + c.fn_) as f64 / n;
    let p_e = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(Kappa {
            kappa: if (1.0 - p_o).abs() < 1e-15 { 1.0 } else { 0.0 },
            observed_agreement: p_o,
            expected_agreement: p_e,
            degenerate: true,
        });
    }
    Ok(Kappa { kappa: (p_o - p_e) / (1.0 - p_e), observed_agreement: p_o, expected_agreement: p_e, degenerate: false })
}

/// Cohen's kappa for two binary raters. `labels_a` plays the predicted role in the table.
pub fn cohens_kappa(labels_a: &[bool], labels_b: &[bool]) -> Result<Kappa> {
    kappa_from_counts(Contingency::from_labels(labels_a, labels_b)?)
}

/// Reads labels as one value per line (`1/0`, `true/false`, `yes/no`, `A`/`B` answers
/// count as positive). Blank lines are skipped.
pub fn parse_labels(text: &str) -> Result<Vec<bool>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "y" | "a" | "b" => Ok(true),
            "0" | "false" | "no" | "n" | "c" | "d" | "e" => Ok(false),
            other => Err(Error::Invalid(format!("line {}: not a binary label: {other:?}", i + 1))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(tp: usize, fp: usize, fn_: usize, tn: usize) -> Contingency {
        Contingency { tp, fp, fn_, tn }
    }

    #[test]
    fn identity_predictions() {
        let gold = [true, false, true, true, false, false, true, false, true, false];
        let m = classification_metrics(&gold, &gold).unwrap();
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
    }

    #[test]
    fn worked_table() {
        let m = metrics_from_counts(table(3, 1, 2, 4)).unwrap();
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.6).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.accuracy - 0.7).abs() < 1e-12);
    }

    #[test]
    fn all_negative_predictions() {
        let m = classification_metrics(&[false; 4], &[true, false, true, false]).unwrap();
        assert!(m.precision_undefined && !m.recall_undefined);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(classification_metrics(&[true], &[true, false]).is_err());
        assert!(classification_metrics(&[], &[]).is_err());
    }

    #[test]
    fn kappa_cases() {
        let k = kappa_from_counts(table(20, 5, 5, 20)).unwrap();
        assert!((k.kappa - 0.6).abs() < 1e-12);
        let mixed = [true, false, true, false];
        assert_eq!(cohens_kappa(&mixed, &mixed).unwrap().kappa, 1.0);
        let k = cohens_kappa(&[true; 4], &mixed).unwrap();
        assert!(k.kappa <= 0.0 && !k.degenerate);
        let k = cohens_kappa(&[true; 3], &[true; 3]).unwrap();
        assert!(k.degenerate && k.kappa == 1.0);
        let k = cohens_kappa(&[true; 3], &[false; 3]).unwrap();
        assert!(!k.degenerate && k.kappa == 0.0);
    }

    #[test]
    fn label_files() {
        assert_eq!(parse_labels("1\n0\n\ntrue\nB\n").unwrap(), vec![true, false, true, true]);
        assert!(parse_labels("1\nmaybe\n").is_err());
    }

    proptest! {
        #[test]
        fn kappa_symmetric(a in proptest::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
            let b: Vec<bool> = a.iter().enumerate().map(|(i, &x)| x ^ ((seed >> (i % 64)) & 1 == 1)).collect();
            let ab = cohens_kappa(&a, &b).unwrap();
            let ba = cohens_kappa(&b, &a).unwrap();
            prop_assert!((ab.kappa - ba.kappa).abs() < 1e-12);
            prop_assert!(ab.kappa <= 1.0 + 1e-12);
        }

        #[test]
        fn kappa_self_agreement(a in proptest::collection::vec(any::<bool>(), 2..40)) {
            prop_assume!(a.iter().any(|&x| x) && a.iter().any(|&x| !x));
            prop_assert!((cohens_kappa(&a, &a).unwrap().kappa - 1.0).abs() < 1e-12);
        }
    }
}
