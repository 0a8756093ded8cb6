use crate::error::{Error, Result};

/// Area under the ROC curve via the Mann-Whitney rank statistic; tied
/// scores count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        pos_rank_sum += midrank * pos_in_group as f64;
        start = end;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Mean binomial deviance / 2 for log-odds margins.
pub fn log_loss(margins: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| {
            // log(1 + e^m) - y*m, evaluated stably
            let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
            softplus - f64::from(y) * m
        })
        .sum();
    total / margins.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pairwise enumeration oracle.
    fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.9], &[0, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        let s = [0.2, 0.4, 0.6, 0.8];
        let y = [0, 1, 0, 1];
        assert_eq!(auc_pairs(&s, &y), 0.75);
        assert_eq!(auc(&s, &y).unwrap(), 0.75);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn log_loss_at_zero_margin() {
        assert!((log_loss(&[0.0, 0.0], &[0, 1]) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rank_auc_matches_pair_enumeration(
                data in prop::collection::vec((0u8..6, 0u8..2), 2..40)
            ) {
                let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0)).collect();
                let labels: Vec<u8> = data.iter().map(|d| d.1).collect();
                prop_assume!(labels.contains(&0) && labels.contains(&1));
                let a = auc(&scores, &labels).unwrap();
                prop_assert!((a - auc_pairs(&scores, &labels)).abs() < 1e-12);
            }
        }
    }
}
