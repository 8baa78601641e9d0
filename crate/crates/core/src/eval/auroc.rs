use alloc::vec::Vec;

use crate::datagen::Adjacency;
use crate::recnet::CausalMatrix;
use crate::{Error, Result};

/// Area under the ROC curve via the Mann-Whitney statistic, with tied scores
/// given their average rank.
pub fn auroc_flat(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("auroc", &[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric(alloc::string::String::from("NaN score")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(alloc::string::String::from(
            "AUROC needs at least one positive and one negative label",
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = alloc::vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// AUROC of a score matrix against a truth graph over all `M^2` entries,
/// or only the off-diagonal ones when `include_diagonal` is false.
pub fn auroc(scores: &CausalMatrix, truth: &Adjacency, include_diagonal: bool) -> Result<f64> {
    let m = scores.size();
    if truth.size() != m {
        return Err(Error::shape("auroc", &[m, m], &[truth.size(), truth.size()]));
    }
    let mut s = Vec::with_capacity(m * m);
    let mut l = Vec::with_capacity(m * m);
    for p in 0..m {
        for v in 0..m {
            if include_diagonal || p != v {
                s.push(scores.get(p, v));
                l.push(truth.get(p, v));
            }
        }
    }
    auroc_flat(&s, &l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn hand_cases() {
        let l = [true, false, false, true];
        assert_eq!(auroc_flat(&[0.9, 0.1, 0.4, 0.8], &l).unwrap(), 1.0);
        assert_eq!(auroc_flat(&[0.3; 4], &l).unwrap(), 0.5);
        assert_eq!(auroc_flat(&[0.0, 1.0, 1.0, 0.0], &l).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_truth_is_an_error() {
        assert!(matches!(
            auroc_flat(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn matches_pairwise_oracle_with_ties() {
        let s = [0.1, 0.5, 0.5, 0.2, 0.9, 0.5, 0.0, 0.2];
        let l = [false, true, false, true, true, false, false, false];
        assert!((auroc_flat(&s, &l).unwrap() - brute(&s, &l)).abs() < 1e-12);
    }
}
