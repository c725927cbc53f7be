//! Ranking and threshold metrics.

use crate::dataset::Label;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("metric needs both classes present")]
    SingleClass,
    #[error("score at position {0} is not finite")]
    NonFinite(usize),
}

fn check(scores: &[f64], labels: &[Label]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Positive).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    Ok((pos, neg))
}

/// Area under the ROC curve via the Mann–Whitney rank sum. Tied scores get
/// their average rank, which counts each tied positive/negative pair as 1/2.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share their mean.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k] == Label::Positive).count();
        rank_sum_pos += avg_rank * tied_pos as f64;
        i = j;
    }
    let p = pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * neg as f64))
}

/// `(TPR + TNR) / 2` for the rule `score > threshold`.
pub fn balanced_accuracy(scores: &[f64], labels: &[Label], threshold: f64) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    let mut tp = 0usize;
    let mut tn = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > threshold, l) {
            (true, Label::Positive) => tp += 1,
            (false, Label::Negative) => tn += 1,
            _ => {}
        }
    }
    Ok((tp as f64 / pos as f64 + tn as f64 / neg as f64) / 2.0)
}

/// Threshold maximising balanced accuracy. Candidates are one unit below the
/// smallest score, every midpoint between consecutive distinct scores, and
/// the largest score; the lowest candidate wins ties.
pub fn best_balanced_threshold(scores: &[f64], labels: &[Label]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sweep upward: everything at or below the candidate is predicted negative.
    let mut best_threshold = scores[order[0]] - 1.0;
    let mut best = 0.5;
    let (mut fn_, mut tn) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            match labels[order[i]] {
                Label::Positive => fn_ += 1,
                Label::Negative => tn += 1,
            }
            i += 1;
        }
        let threshold = if i < order.len() { (v + scores[order[i]]) / 2.0 } else { v };
        let value = ((pos - fn_) as f64 / pos as f64 + tn as f64 / neg as f64) / 2.0;
        if value > best {
            best = value;
            best_threshold = threshold;
        }
    }
    Ok(best_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    #[test]
    fn perfect_and_reversed() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[P, P, N, N]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[N, N, P, P]).unwrap(), 0.0);
    }

    #[test]
    fn all_ties_is_half() {
        assert_eq!(auc(&[0.3; 6], &[P, N, N, P, N, N]).unwrap(), 0.5);
    }

    #[test]
    fn pair_counting_example() {
        // Pairs: (0.9,0.8) ok, (0.9,0.1) ok, (0.3,0.8) wrong, (0.3,0.1) ok.
        assert_eq!(auc(&[0.9, 0.8, 0.3, 0.1], &[P, N, P, N]).unwrap(), 0.75);
    }

    #[test]
    fn errors() {
        assert_eq!(auc(&[0.1, 0.2], &[P, P]), Err(MetricError::SingleClass));
        assert_eq!(auc(&[0.1], &[P, N]), Err(MetricError::LengthMismatch { scores: 1, labels: 2 }));
        assert_eq!(auc(&[0.1, f64::NAN], &[P, N]), Err(MetricError::NonFinite(1)));
    }

    #[test]
    fn balanced_threshold_separable() {
        let scores = [-0.5, -0.2, 0.1, 0.4];
        let labels = [N, N, P, P];
        let t = best_balanced_threshold(&scores, &labels).unwrap();
        assert!((t - (-0.05)).abs() < 1e-15);
        assert_eq!(balanced_accuracy(&scores, &labels, t).unwrap(), 1.0);
    }

    #[test]
    fn balanced_threshold_matches_exhaustive_scan() {
        let scores = [0.3, 0.1, 0.1, 0.7, -0.2, 0.5, 0.3, 0.0, 0.9, -0.4];
        let labels = [P, N, P, P, N, N, N, N, P, P];
        let t = best_balanced_threshold(&scores, &labels).unwrap();
        let got = balanced_accuracy(&scores, &labels, t).unwrap();

        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let mut candidates = vec![sorted[0] - 1.0, *sorted.last().unwrap()];
        candidates.extend(sorted.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        let best = candidates
            .iter()
            .map(|&c| balanced_accuracy(&scores, &labels, c).unwrap())
            .fold(f64::MIN, f64::max);
        assert_eq!(got, best);
    }
}
