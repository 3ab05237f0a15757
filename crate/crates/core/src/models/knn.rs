//! K-nearest neighbours with Minkowski distance.
//!
//! The probability of a home win is the fraction of the `k` closest training
//! rows that are home wins, so outputs are multiples of `1/k`. Equal
//! distances are ordered by training-row index.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PredictionSet, ProbClassifier, Standardizer};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    /// Minkowski exponent; 2 is Euclidean.
    pub p: f64,
    pub standardize: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 150,
            p: 2.0,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KnnModel<F: Real> {
    config: KnnConfig,
    scaler: Standardizer<F>,
    xs: Vec<F>,
    labels: Vec<bool>,
    d: usize,
}

impl<F: Real> KnnModel<F> {
    /// Minkowski distance raised to the power `p` (same ordering, no root).
    fn distance_pow(&self, a: &[F], b: &[F]) -> F {
        let p = self.config.p;
        if p == 2.0 {
            a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
        } else if p == 1.0 {
            a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
        } else {
            let pf = F::of(p);
            a.iter().zip(b).map(|(&x, &y)| (x - y).abs().powf(pf)).sum()
        }
    }

    /// Indices of the `k` nearest training rows, nearest first.
    pub fn neighbours(&self, x: &[F]) -> Vec<usize> {
        let q = self.scaler.transform_row(x);
        let mut dist: Vec<(F, usize)> = self
            .xs
            .chunks_exact(self.d)
            .enumerate()
            .map(|(i, row)| (self.distance_pow(&q, row), i))
            .collect();
        let k = self.config.k;
        let cmp = |a: &(F, usize), b: &(F, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }
}

impl<F: Real> ProbClassifier<F> for KnnModel<F> {
    fn name(&self) -> &str {
        "knn"
    }

    fn hyperparameters(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(&self.config) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        }
    }

    fn n_features(&self) -> Option<usize> {
        Some(self.d)
    }

    fn predict_row(&self, x: &[F]) -> F {
        let wins = self.neighbours(x).into_iter().filter(|&i| self.labels[i]).count();
        F::count(wins) / F::count(self.config.k)
    }
}

pub fn knn_fit<F: Real>(train: &FeatureMatrix<F>, config: &KnnConfig) -> Result<KnnModel<F>> {
    if train.n_rows() == 0 {
        return Err(Error::Empty("knn training set".into()));
    }
    if config.k == 0 || config.k > train.n_rows() {
        return Err(Error::InvalidConfig(format!(
            "k = {} must lie in 1..={}",
            config.k,
            train.n_rows()
        )));
    }
    if !(config.p >= 1.0) || !config.p.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "Minkowski p = {} must be finite and >= 1",
            config.p
        )));
    }
    let scaler = if config.standardize {
        Standardizer::fit(train)
    } else {
        Standardizer::identity(train.n_cols())
    };
    Ok(KnnModel {
        config: config.clone(),
        xs: scaler.transform(train),
        scaler,
        labels: train.labels().to_vec(),
        d: train.n_cols(),
    })
}

pub fn knn_fit_predict<F: Real>(
    train: &FeatureMatrix<F>,
    test: &FeatureMatrix<F>,
    k: usize,
    minkowski_p: f64,
) -> Result<PredictionSet<F>> {
    let model = knn_fit(
        train,
        &KnnConfig {
            k,
            p: minkowski_p,
            standardize: true,
        },
    )?;
    model.predict(test)
}
