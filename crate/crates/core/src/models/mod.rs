//! Probabilistic home-win classifiers behind one interface.
//!
//! Every model except Elo consumes a [`FeatureMatrix`]; Elo walks the game
//! list itself. Fitting returns a separate fitted type, so a model can only
//! predict once it has been trained.

mod ann;
mod elo_model;
mod gbdt;
mod grid;
mod homewin;
mod knn;
mod logr;
mod prediction;
mod svm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EloParams, FeatureMatrix};
use crate::scalar::Real;

pub use ann::{ann_fit, Activation, AnnConfig, Mlp};
pub use elo_model::elo_model_predict;
pub use gbdt::{gbdt_fit, GbdtConfig, GbdtModel, Tree, TreeNode};
pub use grid::{grid_search, CellOutcome, GridCell, GridSearchResult, ScoreMetric};
pub use homewin::{homewin_predict, HomeWin};
pub use knn::{knn_fit, knn_fit_predict, KnnConfig, KnnModel};
pub use logr::{logr_fit, LogRConfig, LogisticRegression};
pub use prediction::{
    load_predictions, read_predictions, save_predictions, write_predictions, PredictionSet,
};
pub use svm::{svm_fit, SvmConfig, SvmModel};

/// A fitted model mapping a feature row to `P(home win)`.
pub trait ProbClassifier<F: Real>: Send + Sync {
    fn name(&self) -> &str;

    fn hyperparameters(&self) -> BTreeMap<String, serde_json::Value>;

    /// Width of the rows this model was fitted on; `None` if any width works.
    fn n_features(&self) -> Option<usize>;

    /// Probability in `[0, 1]` for one raw (unstandardized) feature row.
    fn predict_row(&self, x: &[F]) -> F;

    fn predict(&self, m: &FeatureMatrix<F>) -> Result<PredictionSet<F>> {
        if let Some(d) = self.n_features() {
            if d != m.n_cols() {
                return Err(Error::InvalidInput(format!(
                    "model `{}` was fitted on {d} features, matrix has {}",
                    self.name(),
                    m.n_cols()
                )));
            }
        }
        let p: Vec<F> = (0..m.n_rows())
            .into_par_iter()
            .map(|i| self.predict_row(m.row(i)))
            .collect();
        PredictionSet::for_matrix(self.name(), m, p)
    }
}

/// Per-column centring and scaling fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<F: Real> {
    pub mean: Vec<F>,
    pub scale: Vec<F>,
}

impl<F: Real> Standardizer<F> {
    /// Population standard deviation; constant columns get scale 1.
    pub fn fit(m: &FeatureMatrix<F>) -> Self {
        let (n, d) = (m.n_rows(), m.n_cols());
        let nf = F::count(n.max(1));
        let mut mean = vec![F::zero(); d];
        for row in m.rows() {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        mean.iter_mut().for_each(|v| *v = *v / nf);
        let mut var = vec![F::zero(); d];
        for row in m.rows() {
            for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc = *acc + (v - mu) * (v - mu);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / nf).sqrt();
                if sd > F::of(1e-12) {
                    sd
                } else {
                    F::one()
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![F::zero(); d],
            scale: vec![F::one(); d],
        }
    }

    pub fn transform_row(&self, x: &[F]) -> Vec<F> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &mu), &s)| (v - mu) / s)
            .collect()
    }

    /// Row-major standardized copy of the matrix values.
    pub fn transform(&self, m: &FeatureMatrix<F>) -> Vec<F> {
        m.rows().flat_map(|r| self.transform_row(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    HomeWin,
    LogR,
    Svm,
    Knn,
    Gbdt,
    Ann,
    Elo,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 7] = [
        ModelFamily::HomeWin,
        ModelFamily::LogR,
        ModelFamily::Svm,
        ModelFamily::Knn,
        ModelFamily::Gbdt,
        ModelFamily::Ann,
        ModelFamily::Elo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::HomeWin => "homewin",
            ModelFamily::LogR => "logr",
            ModelFamily::Svm => "svm",
            ModelFamily::Knn => "knn",
            ModelFamily::Gbdt => "gbdt",
            ModelFamily::Ann => "ann",
            ModelFamily::Elo => "elo",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model family `{s}`")))
    }
}

/// Fully resolved configuration of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelConfig {
    HomeWin,
    LogR(LogRConfig),
    Svm(SvmConfig),
    Knn(KnnConfig),
    Gbdt(GbdtConfig),
    Ann(AnnConfig),
    Elo(EloParams),
}

impl ModelConfig {
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::HomeWin => ModelConfig::HomeWin,
            ModelFamily::LogR => ModelConfig::LogR(LogRConfig::default()),
            ModelFamily::Svm => ModelConfig::Svm(SvmConfig::default()),
            ModelFamily::Knn => ModelConfig::Knn(KnnConfig::default()),
            ModelFamily::Gbdt => ModelConfig::Gbdt(GbdtConfig::default()),
            ModelFamily::Ann => ModelConfig::Ann(AnnConfig::default()),
            ModelFamily::Elo => ModelConfig::Elo(EloParams::default()),
        }
    }

    /// Family defaults overridden by the keys of a JSON object.
    pub fn from_overrides(family: ModelFamily, overrides: &serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(ModelConfig::default_for(family))?;
        if let (Some(obj), Some(over)) = (base.as_object_mut(), overrides.as_object()) {
            for (k, v) in over {
                if k != "model" {
                    obj.insert(k.clone(), v.clone());
                }
            }
        } else if !overrides.is_null() {
            return Err(Error::InvalidConfig(
                "model overrides must be a JSON object".into(),
            ));
        }
        serde_json::from_value(base).map_err(|e| Error::InvalidConfig(format!("{family}: {e}")))
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            ModelConfig::HomeWin => ModelFamily::HomeWin,
            ModelConfig::LogR(_) => ModelFamily::LogR,
            ModelConfig::Svm(_) => ModelFamily::Svm,
            ModelConfig::Knn(_) => ModelFamily::Knn,
            ModelConfig::Gbdt(_) => ModelFamily::Gbdt,
            ModelConfig::Ann(_) => ModelFamily::Ann,
            ModelConfig::Elo(_) => ModelFamily::Elo,
        }
    }

    /// Hyperparameters as a flat JSON map (without the family tag).
    pub fn hyperparameters(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(map)) => map.into_iter().filter(|(k, _)| k != "model").collect(),
            _ => BTreeMap::new(),
        }
    }

    /// Ordering key used to break score ties toward the simpler model.
    pub fn complexity(&self) -> Vec<f64> {
        match self {
            ModelConfig::HomeWin => vec![],
            ModelConfig::LogR(c) => vec![c.epochs as f64, -c.l2],
            ModelConfig::Svm(c) => vec![c.c, c.gamma.unwrap_or(0.0)],
            ModelConfig::Knn(c) => vec![c.k as f64],
            ModelConfig::Gbdt(c) => vec![c.rounds as f64, c.depth as f64],
            ModelConfig::Ann(c) => vec![c.hidden_sizes.iter().sum::<usize>() as f64, c.epochs as f64],
            ModelConfig::Elo(c) => vec![c.k_factor],
        }
    }
}

/// Fits any feature-based model. Elo needs the game list; use
/// [`elo_model_predict`] for it.
pub fn fit_model<F: Real>(
    config: &ModelConfig,
    train: &FeatureMatrix<F>,
) -> Result<Box<dyn ProbClassifier<F>>> {
    Ok(match config {
        ModelConfig::HomeWin => Box::new(HomeWin),
        ModelConfig::LogR(c) => Box::new(logr_fit(train, c)?),
        ModelConfig::Svm(c) => Box::new(svm_fit(train, c)?),
        ModelConfig::Knn(c) => Box::new(knn_fit(train, c)?),
        ModelConfig::Gbdt(c) => Box::new(gbdt_fit(train, c)?),
        ModelConfig::Ann(c) => Box::new(ann_fit(train, c)?),
        ModelConfig::Elo(_) => {
            return Err(Error::InvalidConfig(
                "the elo model is driven by game results, not a feature matrix".into(),
            ))
        }
    })
}

/// Mean logistic loss of probabilities against labels, probabilities clamped
/// to `[1e-15, 1 - 1e-15]`.
pub(crate) fn mean_log_loss<F: Real>(p: &[F], y: &[bool]) -> F {
    let eps = F::of(1e-15).max(F::epsilon());
    let total: F = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = if y { p } else { F::one() - p };
            -p.max(eps).min(F::one() - eps).ln()
        })
        .sum();
    total / F::count(p.len().max(1))
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus<F: Real>(z: F) -> F {
    z.max(F::zero()) + (-z.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_round_trip() {
        for f in ModelFamily::ALL {
            assert_eq!(f.as_str().parse::<ModelFamily>().unwrap(), f);
        }
        assert!("xgb".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn overrides_merge_onto_defaults() {
        let c = ModelConfig::from_overrides(ModelFamily::Knn, &serde_json::json!({"k": 7})).unwrap();
        assert_eq!(
            c,
            ModelConfig::Knn(KnnConfig {
                k: 7,
                ..Default::default()
            })
        );
        assert!(ModelConfig::from_overrides(ModelFamily::Knn, &serde_json::json!({"kk": 7})).is_err());
        let hp = c.hyperparameters();
        assert_eq!(hp["k"], serde_json::json!(7));
        assert!(!hp.contains_key("model"));
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let m = FeatureMatrix::<f64>::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]], &[true, false]).unwrap();
        let s = Standardizer::fit(&m);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.transform_row(&[3.0, 5.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for z in [-20.0f64, -1.0, 0.0, 2.0, 30.0] {
            assert!((softplus(z) - (1.0 + z.exp()).ln()).abs() < 1e-12);
        }
        assert!(softplus(1000.0f64).is_finite());
    }
}
