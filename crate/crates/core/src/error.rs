use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}, column `{column}`: {message}")]
    Malformed {
        line: u64,
        column: String,
        message: String,
    },

    #[error("duplicate game_id `{0}`")]
    DuplicateGameId(String),

    #[error("game `{game_id}` is tied {score}-{score}; ties are not valid regular-season results")]
    TiedGame { game_id: String, score: u32 },

    #[error("invalid game `{game_id}`: {message}")]
    InvalidGame { game_id: String, message: String },

    #[error("invalid season split: {0}")]
    InvalidSplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown stat `{0}`")]
    UnknownStat(String),

    #[error("unknown feature transform in column `{0}`")]
    UnknownTransform(String),

    #[error("no value for `{stat}` of {team} in {season} (and no league fallback)")]
    MissingStat { team: String, season: i32, stat: String },

    #[error("lookahead: stats for {team} in {season} are all dated on or after game `{game_id}` ({date})")]
    Lookahead {
        game_id: String,
        team: String,
        season: i32,
        date: chrono::NaiveDate,
    },

    #[error("unknown team `{0}`")]
    UnknownTeam(String),

    #[error("games out of date order at `{0}`")]
    OutOfOrder(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training data has a single class")]
    SingleClass,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("SMO did not converge in {iterations} iterations (max KKT violation {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("prediction sets cover different games")]
    MismatchedGames,

    #[error("probabilities from model `{0}` are constant; regression slope undefined")]
    ConstantPredictions(String),

    #[error("missing run-line quote for game `{0}`")]
    MissingQuote(String),

    #[error("American odds {0} invalid; |odds| must be at least 100")]
    InvalidOdds(i32),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: u64, column: &str, message: impl Into<String>) -> Self {
        Error::Malformed {
            line,
            column: column.to_string(),
            message: message.into(),
        }
    }
}
