//! Agreement between models, majority voting and oracle accuracy.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PredictionSet;
use crate::scalar::Real;

fn check_aligned<F: Real>(preds: &[&PredictionSet<F>]) -> Result<()> {
    let Some(first) = preds.first() else {
        return Err(Error::Empty("no prediction sets".into()));
    };
    if preds[1..]
        .iter()
        .any(|p| p.game_ids() != first.game_ids() || p.labels() != first.labels())
    {
        return Err(Error::MismatchedGames);
    }
    Ok(())
}

fn picks<F: Real>(p: &PredictionSet<F>, threshold: F) -> Vec<bool> {
    p.home_picks(threshold).collect()
}

fn correct<F: Real>(p: &PredictionSet<F>, threshold: F) -> Vec<bool> {
    p.home_picks(threshold)
        .zip(p.labels())
        .map(|(h, &y)| h == y)
        .collect()
}

fn fraction(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub model_names: Vec<String>,
    /// Row-major, `agree_fraction[i][j]` for models `i` and `j`.
    pub agree_fraction: Vec<Vec<f64>>,
}

/// Fraction of games on which each pair of models picks the same winner.
pub fn agreement_matrix<F: Real>(preds: &[PredictionSet<F>], threshold: F) -> Result<AgreementMatrix> {
    let refs: Vec<_> = preds.iter().collect();
    check_aligned(&refs)?;
    let n = preds[0].len();
    let all: Vec<Vec<bool>> = preds.iter().map(|p| picks(p, threshold)).collect();
    let m = preds.len();
    let mut agree = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let same = all[i].iter().zip(&all[j]).filter(|(a, b)| a == b).count();
            let f = if n == 0 { 1.0 } else { fraction(same, n) };
            agree[i][j] = f;
            agree[j][i] = f;
        }
    }
    Ok(AgreementMatrix {
        model_names: preds.iter().map(|p| p.model_name().to_string()).collect(),
        agree_fraction: agree,
    })
}

/// Result of a vote: the voted class per game, and the (weighted) mean of the
/// input probabilities carried for downstream analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote<F: Real> {
    pub home_pick: Vec<bool>,
    pub mean: PredictionSet<F>,
}

impl<F: Real> Vote<F> {
    pub fn accuracy(&self) -> f64 {
        let hits = self
            .home_pick
            .iter()
            .zip(self.mean.labels())
            .filter(|(a, b)| a == b)
            .count();
        fraction(hits, self.home_pick.len())
    }
}

/// Majority of thresholded votes. With `weights`, a side wins when it holds
/// more than half the total weight; an exact split goes to the home side.
pub fn majority_vote<F: Real>(
    preds: &[&PredictionSet<F>],
    threshold: F,
    weights: Option<&[f64]>,
) -> Result<Vote<F>> {
    check_aligned(preds)?;
    let weights: Vec<F> = match weights {
        None => vec![F::one(); preds.len()],
        Some(w) if w.len() != preds.len() => {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} models",
                w.len(),
                preds.len()
            )))
        }
        Some(w) if w.iter().any(|&x| !(x.is_finite() && x > 0.0)) => {
            return Err(Error::InvalidInput(
                "vote weights must be positive and finite".into(),
            ))
        }
        Some(w) => w.iter().map(|&x| F::of(x)).collect(),
    };
    let n = preds[0].len();
    let mut home_pick = Vec::with_capacity(n);
    let mut mean = Vec::with_capacity(n);
    let mut cast: Vec<(F, F)> = Vec::with_capacity(preds.len());
    for g in 0..n {
        cast.clear();
        cast.extend(preds.iter().zip(&weights).map(|(p, &w)| (p.p_home()[g], w)));
        // fixed summation order regardless of input order
        cast.sort_by(|a, b| a.partial_cmp(b).expect("probabilities are finite"));
        let total: F = cast.iter().map(|&(_, w)| w).sum();
        let home: F = cast
            .iter()
            .filter(|&&(p, _)| p >= threshold)
            .map(|&(_, w)| w)
            .sum();
        home_pick.push(home + home >= total);
        let m = cast.iter().map(|&(p, w)| p * w).sum::<F>() / total;
        mean.push(m.max(F::zero()).min(F::one()));
    }
    let mut names: Vec<&str> = preds.iter().map(|p| p.model_name()).collect();
    names.sort_unstable();
    let name = names.join("+");
    let first = preds[0];
    Ok(Vote {
        home_pick,
        mean: PredictionSet::new(
            name,
            first.game_ids().to_vec(),
            mean,
            first.labels().to_vec(),
            first.score_diff().to_vec(),
        )?,
    })
}

/// Fraction of games that at least one model gets right.
pub fn oracle_accuracy<F: Real>(preds: &[&PredictionSet<F>], threshold: F) -> Result<f64> {
    check_aligned(preds)?;
    let n = preds[0].len();
    if n == 0 {
        return Err(Error::Empty("prediction sets have no games".into()));
    }
    let mut any = vec![false; n];
    for p in preds {
        for (a, c) in any.iter_mut().zip(correct(p, threshold)) {
            *a |= c;
        }
    }
    Ok(fraction(any.iter().filter(|&&a| a).count(), n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletResult {
    pub models: [String; 3],
    pub individual_accuracy: [f64; 3],
    pub majority_accuracy: f64,
    pub oracle_accuracy: f64,
}

/// Every 3-combination of models, taken in lexicographic order of model name.
pub fn triplet_table<F: Real>(preds: &[PredictionSet<F>], threshold: F) -> Result<Vec<TripletResult>> {
    if preds.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "triplets need at least 3 models, got {}",
            preds.len()
        )));
    }
    let mut order: Vec<&PredictionSet<F>> = preds.iter().collect();
    order.sort_by(|a, b| a.model_name().cmp(b.model_name()));
    check_aligned(&order)?;
    let m = order.len();
    let mut combos = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                combos.push([i, j, k]);
            }
        }
    }
    let n = order[0].len();
    combos
        .par_iter()
        .map(|idx| {
            let trio = idx.map(|i| order[i]);
            let vote = majority_vote(&trio, threshold, None)?;
            let individual = trio.map(|p| fraction(correct(p, threshold).iter().filter(|&&c| c).count(), n));
            Ok(TripletResult {
                models: trio.map(|p| p.model_name().to_string()),
                individual_accuracy: individual,
                majority_accuracy: vote.accuracy(),
                oracle_accuracy: oracle_accuracy(&trio, threshold)?,
            })
        })
        .collect()
}

/// Square CSV with model names along the header row and first column.
pub fn write_agreement<W: Write>(m: &AgreementMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once("model").chain(m.model_names.iter().map(String::as_str)))?;
    for (name, row) in m.model_names.iter().zip(&m.agree_fraction) {
        w.write_record(std::iter::once(name.clone()).chain(row.iter().map(f64::to_string)))?;
    }
    w.flush().map_err(|e| Error::io("<agreement writer>", e))?;
    Ok(())
}

/// CSV `model_1,model_2,model_3,majority_accuracy,oracle_accuracy`.
pub fn write_triplets<W: Write>(rows: &[TripletResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "model_1",
        "model_2",
        "model_3",
        "majority_accuracy",
        "oracle_accuracy",
    ])?;
    for r in rows {
        let [a, b, c] = &r.models;
        w.write_record([
            a.clone(),
            b.clone(),
            c.clone(),
            r.majority_accuracy.to_string(),
            r.oracle_accuracy.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<triplets writer>", e))?;
    Ok(())
}

pub fn save_agreement(m: &AgreementMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_agreement(m, std::io::BufWriter::new(file))
}

pub fn save_triplets(rows: &[TripletResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_triplets(rows, std::io::BufWriter::new(file))
}
