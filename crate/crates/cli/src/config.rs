//! Pipeline configuration, read from TOML with one section per stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use runline_core::features::DEFAULT_FEATURE_SPEC;
use runline_core::models::{ModelFamily, ScoreMetric};
use runline_core::strength::SdKind;
use runline_core::synth::SyntheticConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    /// Relative to the config file; overridden by `--out` and `RUNLINE_LAB_OUT`.
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub features: FeaturesConfig,
    pub split: SplitConfig,
    pub models: ModelsConfig,
    pub gridsearch: GridSearchConfig,
    pub evaluate: EvaluateConfig,
    pub strength: StrengthConfig,
    pub ensemble: EnsembleConfig,
    pub backtest: BacktestConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            name: "run".into(),
            output_dir: None,
            data: DataConfig::default(),
            features: FeaturesConfig::default(),
            split: SplitConfig::default(),
            models: ModelsConfig::default(),
            gridsearch: GridSearchConfig::default(),
            evaluate: EvaluateConfig::default(),
            strength: StrengthConfig::default(),
            ensemble: EnsembleConfig::default(),
            backtest: BacktestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Games CSV, required for `files`.
    pub games: Option<PathBuf>,
    /// Team-stats CSV, required for `files`.
    pub stats: Option<PathBuf>,
    pub exclude_playoffs: bool,
    pub synth: SyntheticConfig,
    /// Seed of the synthetic team-stat noise.
    pub stats_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            games: None,
            stats: None,
            exclude_playoffs: true,
            synth: SyntheticConfig::default(),
            stats_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    /// Spec file, one column per line.
    pub spec: Option<PathBuf>,
    /// Inline column list; used when `spec` is absent.
    pub columns: Option<Vec<String>>,
}

impl FeaturesConfig {
    pub fn inline_columns(&self) -> Vec<String> {
        self.columns
            .clone()
            .unwrap_or_else(|| DEFAULT_FEATURE_SPEC.iter().map(|s| s.to_string()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Defaults to the second-to-last season present.
    pub last_train_season: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub include: Vec<ModelFamily>,
    /// Per-family overrides of the default hyperparameters.
    pub params: BTreeMap<ModelFamily, serde_json::Value>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            include: ModelFamily::ALL.to_vec(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSearchConfig {
    pub enabled: bool,
    pub folds: usize,
    pub metric: ScoreMetric,
    /// Cells per family, each a table of overrides.
    pub grids: BTreeMap<ModelFamily, Vec<serde_json::Value>>,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        GridSearchConfig {
            enabled: false,
            folds: 3,
            metric: ScoreMetric::LogLoss,
            grids: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub threshold: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrengthConfig {
    pub bin_width: f64,
    pub sd: SdKind,
}

impl Default for StrengthConfig {
    fn default() -> Self {
        StrengthConfig {
            bin_width: 0.1,
            sd: SdKind::Sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub enabled: bool,
    pub threshold: f64,
    /// Defaults to every trained model.
    pub models: Option<Vec<ModelFamily>>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            enabled: true,
            threshold: 0.5,
            models: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub enabled: bool,
    /// Odds CSV. Synthetic data without one gets quotes priced from the
    /// latent strengths.
    pub odds: Option<PathBuf>,
    pub vig: f64,
    pub n_low: usize,
    pub n_high: usize,
    pub stake: f64,
    /// Defaults to every trained model.
    pub models: Option<Vec<ModelFamily>>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            enabled: true,
            odds: None,
            vig: 0.045,
            n_low: 20,
            n_high: 20,
            stake: 1.0,
            models: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))
    }

    /// Paths in the config are relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.data.games);
        fix(&mut self.data.stats);
        fix(&mut self.features.spec);
        fix(&mut self.backtest.odds);
        fix(&mut self.output_dir);
    }
}

/// Reference configuration with every default spelled out.
pub fn reference_config() -> String {
    let cfg = PipelineConfig::default();
    let body = toml::to_string_pretty(&cfg).expect("config serializes");
    format!("# runline-lab pipeline configuration; every value shown is the default.\n\n{body}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let cfg = PipelineConfig::from_toml(
            r#"
            name = "x"
            [data.synth]
            n_teams = 8
            seed = 9
            [models]
            include = ["logr", "knn"]
            [models.params.knn]
            k = 25
            [gridsearch.grids]
            knn = [{ k = 5 }, { k = 15 }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.data.synth.n_teams, 8);
        assert_eq!(cfg.data.synth.games_per_team, 162);
        assert_eq!(cfg.models.include, vec![ModelFamily::LogR, ModelFamily::Knn]);
        assert_eq!(cfg.models.params[&ModelFamily::Knn]["k"], 25);
        assert_eq!(cfg.gridsearch.grids[&ModelFamily::Knn].len(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml("[backtest]\nvigg = 0.1").is_err());
    }

    #[test]
    fn reference_round_trips() {
        let text = reference_config();
        assert_eq!(
            PipelineConfig::from_toml(&text).unwrap(),
            PipelineConfig::default()
        );
    }
}
