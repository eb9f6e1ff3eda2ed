use super::ngrams::SparseVector;
use crate::{Error, Result};

/// χ² statistic of a 2x2 table: `a` present/positive, `b` present/negative,
/// `c` absent/positive, `d` absent/negative. Zero when a margin is empty.
pub fn chi2_statistic(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let n = a + b + c + d;
    let den = (a + b) * (c + d) * (a + c) * (b + d);
    if den == 0.0 {
        return 0.0;
    }
    n * (a * d - b * c).powi(2) / den
}

/// Presence-based χ² score of every feature against the labels.
pub fn chi2_scores(features: &[SparseVector], labels: &[bool]) -> Result<Vec<f64>> {
    if features.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let dim = features[0].dim;
    let mut present_pos = vec![0usize; dim];
    let mut present_neg = vec![0usize; dim];
    for (x, &l) in features.iter().zip(labels) {
        for &(i, v) in &x.entries {
            if v != 0.0 {
                if l {
                    present_pos[i] += 1;
                } else {
                    present_neg[i] += 1;
                }
            }
        }
    }
    Ok((0..dim)
        .map(|i| {
            let a = present_pos[i] as f64;
            let b = present_neg[i] as f64;
            chi2_statistic(a, b, n_pos as f64 - a, n_neg as f64 - b)
        })
        .collect())
}

/// Indices of the `ceil(keep_fraction * dim)` highest-scoring features,
/// ties to the lower index, returned in ascending order.
pub fn chi2_select(features: &[SparseVector], labels: &[bool], keep_fraction: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::InvalidArgument(format!("keep fraction {keep_fraction} outside [0, 1]")));
    }
    let scores = chi2_scores(features, labels)?;
    let dim = scores.len();
    let k = ((keep_fraction * dim as f64 - 1e-9).ceil().max(0.0) as usize).min(dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(keep)
}
