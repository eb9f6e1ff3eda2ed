use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Error, Result};

/// Counts of a binary verifier's decisions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        Confusion { tp, fp, fn_, tn }
    }

    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
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

/// `2tp / (2tp + fp + fn)`, and 1 when there is nothing to find and
/// nothing was wrongly flagged.
pub fn f1(c: Confusion) -> f64 {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / den as f64
    }
}

/// True-positive rate plus true-negative rate minus one; a missing class
/// counts its present counterpart twice.
pub fn k_metric(c: Confusion) -> Result<f64> {
    let pos = c.tp + c.fn_;
    let neg = c.tn + c.fp;
    match (pos, neg) {
        (0, 0) => Err(Error::InvalidArgument("K is undefined for an empty confusion matrix".into())),
        (0, _) => Ok(2.0 * c.tn as f64 / neg as f64 - 1.0),
        (_, 0) => Ok(2.0 * c.tp as f64 / pos as f64 - 1.0),
        _ => Ok(c.tp as f64 / pos as f64 + c.tn as f64 / neg as f64 - 1.0),
    }
}

/// Relative change in percent; `None` when the base is zero.
pub fn delta_pct(base: f64, aug: f64) -> Option<f64> {
    (base != 0.0).then(|| 100.0 * (aug - base) / base)
}

/// Outcome of McNemar's test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// First system right, second wrong.
    pub b: usize,
    /// First system wrong, second right.
    pub c: usize,
    pub p_value: f64,
    pub exact: bool,
}

pub const MCNEMAR_EXACT_BELOW: usize = 25;

/// Paired test on per-item correctness of two systems.
pub fn mcnemar(first_correct: &[bool], second_correct: &[bool]) -> Result<McNemar> {
    if first_correct.len() != second_correct.len() {
        return Err(Error::Shape(format!(
            "paired outcomes of different lengths: {} and {}",
            first_correct.len(),
            second_correct.len()
        )));
    }
    let mut b = 0;
    let mut c = 0;
    for (&x, &y) in first_correct.iter().zip(second_correct) {
        match (x, y) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_counts(b, c))
}

/// Exact two-sided binomial test when `b + c < 25`, otherwise the
/// continuity-corrected chi-square with one degree of freedom.
pub fn mcnemar_counts(b: usize, c: usize) -> McNemar {
    let n = b + c;
    if n < MCNEMAR_EXACT_BELOW {
        let k = b.min(c);
        let tail: f64 = (0..=k).map(|i| binomial(n, i)).sum::<f64>() / 2f64.powi(n as i32);
        McNemar {
            b,
            c,
            p_value: (2.0 * tail).min(1.0),
            exact: true,
        }
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let stat = diff.max(0.0).powi(2) / n as f64;
        let chi = ChiSquared::new(1.0).expect("one degree of freedom");
        McNemar {
            b,
            c,
            p_value: chi.sf(stat),
            exact: false,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f1_cases() {
        assert_eq!(f1(Confusion::new(0, 0, 0, 10)), 1.0);
        assert_eq!(f1(Confusion::new(5, 0, 0, 0)), 1.0);
        assert_eq!(f1(Confusion::new(1, 1, 1, 0)), 0.5);
    }

    #[test]
    fn k_cases() {
        assert_eq!(k_metric(Confusion::new(0, 0, 0, 10)).unwrap(), 1.0);
        assert!((k_metric(Confusion::new(3, 4, 1, 4)).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(k_metric(Confusion::new(1, 0, 1, 0)).unwrap(), 0.0);
        assert!(k_metric(Confusion::default()).is_err());
    }

    #[test]
    fn delta_cases() {
        assert!((delta_pct(0.5, 0.55).unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(delta_pct(0.4, 0.4), Some(0.0));
        assert_eq!(delta_pct(0.0, 0.3), None);
        assert!((delta_pct(0.455, 0.427).unwrap() + 6.1538).abs() < 1e-3);
    }

    #[test]
    fn mcnemar_cases() {
        assert_eq!(mcnemar_counts(0, 0).p_value, 1.0);
        assert!((mcnemar_counts(10, 0).p_value - 0.001953125).abs() < 1e-12);
        assert_eq!(mcnemar_counts(5, 5).p_value, 1.0);
        let big = mcnemar_counts(30, 10);
        assert!(!big.exact);
        // (|30 - 10| - 1)^2 / 40 = 9.025; survival of chi2(1) there.
        assert!((big.p_value - 0.002663).abs() < 1e-5, "{}", big.p_value);
    }

    #[test]
    fn mcnemar_counts_discordant_pairs() {
        let a = [true, true, false, false, true];
        let b = [true, false, true, false, false];
        let m = mcnemar(&a, &b).unwrap();
        assert_eq!((m.b, m.c), (2, 1));
        assert!(mcnemar(&a, &b[..2]).is_err());
    }

    proptest! {
        #[test]
        fn scaling_counts_changes_nothing(tp in 0usize..20, fp in 0usize..20, fn_ in 0usize..20, tn in 0usize..20, s in 1usize..5) {
            let c = Confusion::new(tp, fp, fn_, tn);
            let d = Confusion::new(tp * s, fp * s, fn_ * s, tn * s);
            prop_assert!((f1(c) - f1(d)).abs() < 1e-12);
            if c.total() > 0 {
                prop_assert!((k_metric(c).unwrap() - k_metric(d).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn mcnemar_is_symmetric(b in 0usize..60, c in 0usize..60) {
            let p = mcnemar_counts(b, c).p_value;
            prop_assert_eq!(p, mcnemar_counts(c, b).p_value);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn concordant_order_does_not_matter(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..60), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let (x, y): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::rng::rng_from(seed));
            let (sx, sy): (Vec<bool>, Vec<bool>) = shuffled.into_iter().unzip();
            prop_assert_eq!(mcnemar(&x, &y).unwrap(), mcnemar(&sx, &sy).unwrap());
            prop_assert_eq!(mcnemar(&x, &y).unwrap().p_value, mcnemar(&y, &x).unwrap().p_value);
        }
    }
}
