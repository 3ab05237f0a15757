//! Logistic regression fitted by full-batch gradient descent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{softplus, ProbClassifier, Standardizer};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty `l2 / 2 * ||w||^2` on the non-intercept weights.
    pub l2: f64,
    pub standardize: bool,
    /// Stop early once every gradient component is below this.
    pub tolerance: f64,
}

impl Default for LogRConfig {
    fn default() -> Self {
        LogRConfig {
            learning_rate: 0.1,
            epochs: 2000,
            l2: 0.0,
            standardize: true,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticRegression<F: Real> {
    config: LogRConfig,
    scaler: Standardizer<F>,
    intercept: F,
    /// In standardized units when `standardize` is on.
    weights: Vec<F>,
    loss_history: Vec<F>,
}

impl<F: Real> LogisticRegression<F> {
    /// Intercept and weights on the original feature scale.
    pub fn coefficients(&self) -> (F, Vec<F>) {
        let w: Vec<F> = self
            .weights
            .iter()
            .zip(&self.scaler.scale)
            .map(|(&w, &s)| w / s)
            .collect();
        let shift: F = w.iter().zip(&self.scaler.mean).map(|(&w, &m)| w * m).sum();
        (self.intercept - shift, w)
    }

    /// Training objective before the first step and after each epoch.
    pub fn loss_history(&self) -> &[F] {
        &self.loss_history
    }

    pub fn decision(&self, x: &[F]) -> F {
        let z = self.scaler.transform_row(x);
        self.intercept + z.iter().zip(&self.weights).map(|(&a, &b)| a * b).sum::<F>()
    }
}

impl<F: Real> ProbClassifier<F> for LogisticRegression<F> {
    fn name(&self) -> &str {
        "logr"
    }

    fn hyperparameters(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(&self.config) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        }
    }

    fn n_features(&self) -> Option<usize> {
        Some(self.weights.len())
    }

    fn predict_row(&self, x: &[F]) -> F {
        self.decision(x).sigmoid()
    }
}

/// Objective value and gradient `(d intercept, d weights)` over all rows.
fn objective<F: Real>(xs: &[F], y: &[bool], d: usize, b: F, w: &[F], l2: F) -> (F, F, Vec<F>) {
    let mut loss = F::zero();
    let mut gb = F::zero();
    let mut gw = vec![F::zero(); d];
    for (row, &label) in xs.chunks_exact(d.max(1)).zip(y) {
        let z = b + row.iter().zip(w).map(|(&a, &c)| a * c).sum::<F>();
        let t = if label { F::one() } else { F::zero() };
        loss = loss + softplus(z) - t * z;
        let r = z.sigmoid() - t;
        gb = gb + r;
        for (g, &a) in gw.iter_mut().zip(row) {
            *g = *g + r * a;
        }
    }
    let n = F::count(y.len());
    let penalty: F = w.iter().map(|&v| v * v).sum::<F>() * l2 / F::of(2.0);
    let gw = gw.into_iter().zip(w).map(|(g, &v)| g / n + l2 * v).collect();
    (loss / n + penalty, gb / n, gw)
}

pub fn logr_fit<F: Real>(train: &FeatureMatrix<F>, config: &LogRConfig) -> Result<LogisticRegression<F>> {
    if train.n_rows() < 2 {
        return Err(Error::InvalidInput(
            "logistic regression needs at least two rows".into(),
        ));
    }
    if !train.has_both_classes() {
        return Err(Error::SingleClass);
    }
    if !(config.learning_rate > 0.0) || !(config.l2 >= 0.0) {
        return Err(Error::InvalidConfig(
            "learning_rate must be > 0 and l2 >= 0".into(),
        ));
    }
    let d = train.n_cols();
    let scaler = if config.standardize {
        Standardizer::fit(train)
    } else {
        Standardizer::identity(d)
    };
    let xs = scaler.transform(train);
    let y = train.labels();
    let lr = F::of(config.learning_rate);
    let l2 = F::of(config.l2);
    let tol = F::of(config.tolerance);

    let mut b = F::zero();
    let mut w = vec![F::zero(); d];
    let mut history = Vec::with_capacity(config.epochs + 1);
    let (mut loss, mut gb, mut gw) = objective(&xs, y, d, b, &w, l2);
    history.push(loss);
    for _ in 0..config.epochs {
        let max_grad = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if max_grad < tol {
            break;
        }
        b = b - lr * gb;
        w.iter_mut().zip(&gw).for_each(|(v, &g)| *v = *v - lr * g);
        (loss, gb, gw) = objective(&xs, y, d, b, &w, l2);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("logistic loss became {loss}")));
        }
        history.push(loss);
    }
    Ok(LogisticRegression {
        config: config.clone(),
        scaler,
        intercept: b,
        weights: w,
        loss_history: history,
    })
}
