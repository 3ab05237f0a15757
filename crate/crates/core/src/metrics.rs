//! Accuracy, AUROC, log-loss and Brier score of a [`PredictionSet`].

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PredictionSet;
use crate::scalar::Real;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 1e-15;

fn non_empty<F: Real>(p: &PredictionSet<F>) -> Result<()> {
    if p.is_empty() {
        Err(Error::Empty(format!("prediction set `{}`", p.model_name())))
    } else {
        Ok(())
    }
}

/// Fraction of games where `p >= threshold` agrees with the label.
pub fn accuracy<F: Real>(p: &PredictionSet<F>, threshold: F) -> Result<F> {
    non_empty(p)?;
    let hits = p
        .home_picks(threshold)
        .zip(p.labels())
        .filter(|(pick, &y)| *pick == y)
        .count();
    Ok(F::count(hits) / F::count(p.len()))
}

/// Mann-Whitney AUROC with ties counted one half.
///
/// Midranks are kept doubled so the rank sum stays an exact integer; the
/// only rounding is the final division.
pub fn auroc<F: Real>(p: &PredictionSet<F>) -> Result<F> {
    non_empty(p)?;
    let n_pos = p.labels().iter().filter(|&&y| y).count();
    let n_neg = p.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let probs = p.p_home();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).expect("finite probabilities"));
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share the midrank (i+1+j)/2
        let doubled = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| p.labels()[k]).count() as u128;
        doubled_rank_sum += doubled * pos_in_group;
        i = j;
    }
    let np = n_pos as u128;
    let u_doubled = doubled_rank_sum - np * (np + 1);
    let denom = 2 * np * n_neg as u128;
    Ok(F::of(u_doubled as f64 / denom as f64))
}

/// Mean cross-entropy with probabilities clamped to `[eps, 1 - eps]`.
pub fn log_loss_eps<F: Real>(p: &PredictionSet<F>, eps: F) -> Result<F> {
    non_empty(p)?;
    if !(eps > F::zero() && eps < F::of(0.5)) {
        return Err(Error::InvalidInput(format!(
            "log-loss epsilon {eps} outside (0, 0.5)"
        )));
    }
    let eps = eps.max(F::epsilon());
    let total: F = p
        .p_home()
        .iter()
        .zip(p.labels())
        .map(|(&q, &y)| {
            let q = if y { q } else { F::one() - q };
            -q.max(eps).min(F::one() - eps).ln()
        })
        .sum();
    Ok(total / F::count(p.len()))
}

pub fn log_loss<F: Real>(p: &PredictionSet<F>) -> Result<F> {
    log_loss_eps(p, F::of(DEFAULT_EPSILON))
}

/// Mean squared difference between probability and outcome.
pub fn brier<F: Real>(p: &PredictionSet<F>) -> Result<F> {
    non_empty(p)?;
    let total: F = p
        .p_home()
        .iter()
        .zip(p.labels())
        .map(|(&q, &y)| {
            let e = q - if y { F::one() } else { F::zero() };
            e * e
        })
        .sum();
    Ok(total / F::count(p.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub n_games: usize,
    pub accuracy: f64,
    pub auroc: f64,
    pub log_loss: f64,
    pub brier: f64,
    pub threshold: f64,
}

pub fn report<F: Real>(p: &PredictionSet<F>) -> Result<MetricsReport> {
    report_with(p, F::of(DEFAULT_THRESHOLD))
}

pub fn report_with<F: Real>(p: &PredictionSet<F>, threshold: F) -> Result<MetricsReport> {
    Ok(MetricsReport {
        model: p.model_name().to_string(),
        n_games: p.len(),
        accuracy: accuracy(p, threshold)?.f64(),
        auroc: auroc(p)?.f64(),
        log_loss: log_loss(p)?.f64(),
        brier: brier(p)?.f64(),
        threshold: threshold.f64(),
    })
}

/// CSV with header `model,n_games,accuracy,auroc,log_loss,brier`.
pub fn write_reports<W: Write>(reports: &[MetricsReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "n_games", "accuracy", "auroc", "log_loss", "brier"])?;
    for r in reports {
        w.write_record([
            r.model.clone(),
            r.n_games.to_string(),
            r.accuracy.to_string(),
            r.auroc.to_string(),
            r.log_loss.to_string(),
            r.brier.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<metrics writer>", e))?;
    Ok(())
}

pub fn save_reports(reports: &[MetricsReport], csv_path: impl AsRef<Path>) -> Result<()> {
    let path = csv_path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_reports(reports, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(p: &[f64], y: &[bool]) -> PredictionSet<f64> {
        PredictionSet::from_probs("t", p.to_vec(), y.to_vec()).unwrap()
    }

    fn pairs_oracle(p: &[f64], y: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..p.len() {
            for j in 0..p.len() {
                if y[i] && !y[j] {
                    den += 1.0;
                    num += if p[i] > p[j] {
                        1.0
                    } else if p[i] == p[j] {
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
    fn accuracy_hand_set() {
        let p = [0.9, 0.2, 0.5, 0.49, 0.7, 0.51, 0.1];
        let y = [true, false, true, true, false, true, false];
        // picks: H A H A H H A -> hits 1,1,1,0,0,1,1
        assert_eq!(accuracy(&set(&p, &y), 0.5).unwrap(), 5.0 / 7.0);
        assert!(accuracy(&set(&[], &[]), 0.5).is_err());
    }

    #[test]
    fn auroc_constant_and_perfect() {
        let y = [true, false, true, false, false];
        assert_eq!(auroc(&set(&[0.7; 5], &y)).unwrap(), 0.5);
        assert_eq!(auroc(&set(&[0.9, 0.1, 0.8, 0.2, 0.3], &y)).unwrap(), 1.0);
        assert!(matches!(
            auroc(&set(&[0.5, 0.6], &[true, true])),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn auroc_twelve_with_ties() {
        let p = [0.3, 0.3, 0.5, 0.5, 0.5, 0.8, 0.1, 0.3, 0.9, 0.5, 0.2, 0.8];
        let y = [
            true, false, true, false, false, true, false, true, true, false, false, false,
        ];
        assert!((auroc(&set(&p, &y)).unwrap() - pairs_oracle(&p, &y)).abs() < 1e-15);
    }

    #[test]
    fn log_loss_cases() {
        let hard = set(&[1.0, 0.0], &[true, false]);
        assert_eq!(log_loss(&hard).unwrap(), -(1.0 - 1e-15f64).ln());
        let half = set(&[0.5; 4], &[true, false, true, true]);
        assert!((log_loss(&half).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn brier_cases() {
        assert_eq!(brier(&set(&[0.5; 3], &[true, false, true])).unwrap(), 0.25);
        let p = [0.1, 0.4, 0.8, 0.55, 0.3, 0.95, 0.6, 0.2, 0.5];
        let y = [false, true, true, false, false, true, true, false, true];
        let hand = (0.01 + 0.36 + 0.04 + 0.3025 + 0.09 + 0.0025 + 0.16 + 0.04 + 0.25) / 9.0;
        assert!((brier(&set(&p, &y)).unwrap() - hand).abs() < 1e-15);
    }

    #[test]
    fn homewin_row_identities() {
        // 10000 games with 5315 home wins, constant p = 1
        let y: Vec<bool> = (0..10000).map(|i| i < 5315).collect();
        let r = report(&set(&vec![1.0; 10000], &y)).unwrap();
        assert_eq!(r.accuracy, 0.5315);
        assert_eq!(r.auroc, 0.5);
        assert!((r.brier - 0.4685).abs() < 1e-12);
        assert!((r.log_loss - 16.182).abs() < 0.01, "{}", r.log_loss);
    }

    #[test]
    fn f32_metrics_are_finite() {
        let p = PredictionSet::<f32>::from_probs("t", vec![1.0, 0.0, 0.3], vec![false, true, true]).unwrap();
        assert!(log_loss(&p).unwrap().is_finite());
    }

    #[test]
    fn csv_header() {
        let r = report(&set(&[0.5, 0.7], &[true, false])).unwrap();
        let mut buf = Vec::new();
        write_reports(&[r], &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("model,n_games,accuracy,auroc,log_loss,brier\nt,2,"));
    }

    fn labelled() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(
                    prop::sample::select(vec![0.0, 0.1, 0.25, 0.5, 0.5, 0.75, 0.9, 1.0]),
                    n,
                ),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn complement_symmetry((p, y) in labelled()) {
            let a = set(&p, &y);
            let flipped: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
            let ny: Vec<bool> = y.iter().map(|v| !v).collect();
            let b = set(&flipped, &ny);
            prop_assert!((log_loss(&a).unwrap() - log_loss(&b).unwrap()).abs() < 1e-9);
            prop_assert!((brier(&a).unwrap() - brier(&b).unwrap()).abs() < 1e-12);
            if y.iter().any(|&v| v) && y.iter().any(|&v| !v) {
                // flipping both leaves the ranking of positives over negatives intact;
                // flipping one of them mirrors it
                let base = auroc(&a).unwrap();
                prop_assert!((base - auroc(&b).unwrap()).abs() < 1e-12);
                let one_flip = auroc(&set(&flipped, &y)).unwrap();
                prop_assert!((base - (1.0 - one_flip)).abs() < 1e-12);
            }
        }

        #[test]
        fn auroc_matches_pairs_and_is_monotone_invariant((p, y) in labelled()) {
            prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
            let a = auroc(&set(&p, &y)).unwrap();
            prop_assert!((a - pairs_oracle(&p, &y)).abs() < 1e-12);
            let squashed: Vec<f64> = p.iter().map(|v| v * v * 0.5 + 0.1).collect();
            prop_assert_eq!(a, auroc(&set(&squashed, &y)).unwrap());
        }

        #[test]
        fn ranges((p, y) in labelled()) {
            let s = set(&p, &y);
            let b = brier(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!(log_loss(&s).unwrap() >= 0.0);
            let hard: Vec<f64> = p.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
            let h = set(&hard, &y);
            let acc = accuracy(&h, 0.5).unwrap();
            prop_assert!((brier(&h).unwrap() - (1.0 - acc)).abs() < 1e-12);
            let expected = (1.0 - acc) * -(1e-15f64).ln() + acc * -(1.0 - 1e-15f64).ln();
            prop_assert!((log_loss(&h).unwrap() - expected).abs() < 1e-9);
        }
    }
}
