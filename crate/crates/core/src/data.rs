//! Game records, CSV ingestion and season-based splitting.
//!
//! A [`Dataset`] is validated on construction and immutable afterwards:
//! games are sorted by date, ids are unique, scores never tie and every
//! record's season matches the year of its date.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GAMES_HEADER: [&str; 8] = [
    "game_id",
    "date",
    "season",
    "home_team",
    "away_team",
    "home_score",
    "away_score",
    "is_playoff",
];

/// One game between two teams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: String,
    pub date: NaiveDate,
    pub season: i32,
    pub home_team: String,
    pub away_team: String,
    pub home_score: u32,
    pub away_score: u32,
    pub is_playoff: bool,
}

impl GameRecord {
    /// Home final score minus away final score. Never zero for a valid record.
    pub fn score_diff(&self) -> i32 {
        self.home_score as i32 - self.away_score as i32
    }

    pub fn home_win(&self) -> bool {
        self.home_score > self.away_score
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidGame {
            game_id: self.game_id.clone(),
            message,
        };
        if self.game_id.is_empty() {
            return Err(invalid("empty game_id".into()));
        }
        if self.home_team == self.away_team {
            return Err(invalid(format!("home and away team are both {}", self.home_team)));
        }
        if self.home_score == self.away_score {
            return Err(Error::TiedGame {
                game_id: self.game_id.clone(),
                score: self.home_score,
            });
        }
        if self.season != self.date.year() {
            return Err(invalid(format!(
                "season {} does not match date {}",
                self.season, self.date
            )));
        }
        Ok(())
    }
}

/// Date-ordered collection of validated games.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    games: Vec<GameRecord>,
}

impl Dataset {
    /// Validates every record and id uniqueness, then sorts by date (stable,
    /// so same-day games keep their input order).
    pub fn new(mut games: Vec<GameRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(games.len());
        for g in &games {
            g.validate()?;
            if !seen.insert(g.game_id.as_str()) {
                return Err(Error::DuplicateGameId(g.game_id.clone()));
            }
        }
        games.sort_by_key(|g| g.date);
        Ok(Dataset { games })
    }

    pub fn games(&self) -> &[GameRecord] {
        &self.games
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    pub fn seasons(&self) -> BTreeSet<i32> {
        self.games.iter().map(|g| g.season).collect()
    }

    pub fn without_playoffs(self) -> Self {
        Dataset {
            games: self.games.into_iter().filter(|g| !g.is_playoff).collect(),
        }
    }

    /// Fraction of games won by the home team.
    pub fn home_win_rate(&self) -> f64 {
        if self.games.is_empty() {
            return 0.0;
        }
        self.games.iter().filter(|g| g.home_win()).count() as f64 / self.games.len() as f64
    }

    fn filter_seasons(&self, keep: impl Fn(i32) -> bool) -> Dataset {
        Dataset {
            games: self.games.iter().filter(|g| keep(g.season)).cloned().collect(),
        }
    }
}

/// Train/test partition where every training season precedes every test season.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeasonSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// Seasons `<= last_train_season` train, later seasons test.
pub fn split_by_season(data: &Dataset, last_train_season: i32) -> Result<SeasonSplit> {
    let train = data.filter_seasons(|s| s <= last_train_season);
    let test = data.filter_seasons(|s| s > last_train_season);
    if train.is_empty() || test.is_empty() {
        let seasons = data.seasons();
        return Err(Error::InvalidSplit(format!(
            "last_train_season {last_train_season} leaves {} side empty (data covers {:?}..={:?})",
            if train.is_empty() { "the train" } else { "the test" },
            seasons.first(),
            seasons.last()
        )));
    }
    Ok(SeasonSplit { train, test })
}

/// Reads a games CSV from disk.
pub fn ingest_games(path: impl AsRef<Path>, exclude_playoffs: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_games(file, exclude_playoffs)
}

/// Parses games CSV content. Errors carry the 1-based file line and column.
pub fn read_games<R: Read>(reader: R, exclude_playoffs: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 8];
    for (slot, name) in index.iter_mut().zip(GAMES_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::malformed(1, name, "missing column in header"))?;
    }

    let mut games = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            let col = GAMES_HEADER[i];
            record
                .get(index[i])
                .map(str::trim)
                .ok_or_else(|| Error::malformed(line, col, "missing field"))
        };
        let parse_u32 = |i: usize| -> Result<u32> {
            let raw = field(i)?;
            raw.parse().map_err(|_| {
                Error::malformed(
                    line,
                    GAMES_HEADER[i],
                    format!("`{raw}` is not a non-negative integer"),
                )
            })
        };

        let game_id = field(0)?.to_string();
        if game_id.is_empty() {
            return Err(Error::malformed(line, "game_id", "empty"));
        }
        let raw_date = field(1)?;
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| Error::malformed(line, "date", format!("`{raw_date}` is not YYYY-MM-DD")))?;
        let raw_season = field(2)?;
        let season: i32 = raw_season
            .parse()
            .map_err(|_| Error::malformed(line, "season", format!("`{raw_season}` is not an integer")))?;
        let home_team = field(3)?.to_string();
        let away_team = field(4)?.to_string();
        let home_score = parse_u32(5)?;
        let away_score = parse_u32(6)?;
        let is_playoff = match field(7)? {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::malformed(
                    line,
                    "is_playoff",
                    format!("`{other}` is not 0 or 1"),
                ))
            }
        };

        let game = GameRecord {
            game_id,
            date,
            season,
            home_team,
            away_team,
            home_score,
            away_score,
            is_playoff,
        };
        if game.home_team == game.away_team {
            return Err(Error::malformed(
                line,
                "away_team",
                format!("same as home_team `{}`", game.home_team),
            ));
        }
        if game.season != game.date.year() {
            return Err(Error::malformed(
                line,
                "season",
                format!("{} does not match the year of {}", game.season, game.date),
            ));
        }
        game.validate()?;
        if !seen.insert(game.game_id.clone()) {
            return Err(Error::DuplicateGameId(game.game_id));
        }
        if exclude_playoffs && game.is_playoff {
            continue;
        }
        games.push(game);
    }
    Dataset::new(games)
}

/// Writes games in the CSV schema accepted by [`read_games`].
pub fn write_games<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(GAMES_HEADER)?;
    for g in data.games() {
        w.write_record([
            g.game_id.as_str(),
            &g.date.format("%Y-%m-%d").to_string(),
            &g.season.to_string(),
            &g.home_team,
            &g.away_team,
            &g.home_score.to_string(),
            &g.away_score.to_string(),
            if g.is_playoff { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(|e| Error::io("<games writer>", e))?;
    Ok(())
}

pub fn save_games(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_games(data, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "\
game_id,date,season,home_team,away_team,home_score,away_score,is_playoff
g1,2015-04-06,2015,NYY,BOS,5,3,0
g2,2015-04-07,2015,BOS,NYY,2,4,0
g3,2015-10-20,2015,KCR,TOR,7,1,1
g4,2015-04-06,2015,LAD,SDP,1,0,0
";

    #[test]
    fn playoff_rows_dropped_when_excluded() {
        let data = read_games(CSV.as_bytes(), true).unwrap();
        assert_eq!(data.len(), 3);
        assert!(data.games().iter().all(|g| !g.is_playoff));
        let all = read_games(CSV.as_bytes(), false).unwrap();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn three_valid_rows_one_playoff() {
        let csv = "\
game_id,date,season,home_team,away_team,home_score,away_score,is_playoff
a,2019-05-01,2019,SEA,OAK,3,2,0
b,2019-05-02,2019,OAK,SEA,6,2,0
c,2019-10-05,2019,HOU,TBR,6,2,1
";
        assert_eq!(read_games(csv.as_bytes(), true).unwrap().len(), 2);
    }

    #[test]
    fn sorted_by_date_after_ingest() {
        let data = read_games(CSV.as_bytes(), false).unwrap();
        let dates: Vec<_> = data.games().iter().map(|g| g.date).collect();
        let mut sorted = dates.clone();
        sorted.sort();
        assert_eq!(dates, sorted);
        // stable: g1 precedes g4 on the same day
        assert_eq!(data.games()[0].game_id, "g1");
        assert_eq!(data.games()[1].game_id, "g4");
    }

    #[test]
    fn tie_rejected_with_game_id() {
        let csv = "\
game_id,date,season,home_team,away_team,home_score,away_score,is_playoff
ok,2015-04-06,2015,NYY,BOS,5,3,0
tied-one,2015-04-07,2015,BOS,NYY,4,4,0
";
        let err = read_games(csv.as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::TiedGame { ref game_id, .. } if game_id == "tied-one"));
        assert!(err.to_string().contains("tied-one"));
    }

    #[test]
    fn malformed_row_reports_line_and_column() {
        let csv = "\
game_id,date,season,home_team,away_team,home_score,away_score,is_playoff
g1,2015-04-06,2015,NYY,BOS,5,3,0
g2,2015-04-07,2015,BOS,NYY,two,4,0
";
        match read_games(csv.as_bytes(), false).unwrap_err() {
            Error::Malformed { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "home_score");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_date_and_playoff_flag() {
        let bad_date = "game_id,date,season,home_team,away_team,home_score,away_score,is_playoff\n\
                        g1,2015/04/06,2015,NYY,BOS,5,3,0\n";
        assert!(matches!(
            read_games(bad_date.as_bytes(), false).unwrap_err(),
            Error::Malformed { ref column, .. } if column == "date"
        ));
        let bad_flag = "game_id,date,season,home_team,away_team,home_score,away_score,is_playoff\n\
                        g1,2015-04-06,2015,NYY,BOS,5,3,yes\n";
        assert!(matches!(
            read_games(bad_flag.as_bytes(), false).unwrap_err(),
            Error::Malformed { ref column, .. } if column == "is_playoff"
        ));
    }

    #[test]
    fn duplicate_id_rejected() {
        let csv = "\
game_id,date,season,home_team,away_team,home_score,away_score,is_playoff
g1,2015-04-06,2015,NYY,BOS,5,3,0
g1,2015-04-07,2015,BOS,NYY,2,4,0
";
        assert!(matches!(
            read_games(csv.as_bytes(), false).unwrap_err(),
            Error::DuplicateGameId(id) if id == "g1"
        ));
    }

    #[test]
    fn season_must_match_date_year() {
        let csv = "\
game_id,date,season,home_team,away_team,home_score,away_score,is_playoff
g1,2015-04-06,2016,NYY,BOS,5,3,0
";
        let err = read_games(csv.as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_header_column() {
        let csv = "game_id,date,season,home_team,away_team,home_score,away_score\n";
        assert!(matches!(
            read_games(csv.as_bytes(), false).unwrap_err(),
            Error::Malformed { line: 1, ref column, .. } if column == "is_playoff"
        ));
    }

    fn seasons_dataset(seasons: std::ops::RangeInclusive<i32>) -> Dataset {
        let mut games = Vec::new();
        for s in seasons {
            for d in 0..3u32 {
                games.push(GameRecord {
                    game_id: format!("{s}-{d}"),
                    date: NaiveDate::from_ymd_opt(s, 5, 1 + d).unwrap(),
                    season: s,
                    home_team: "AAA".into(),
                    away_team: "BBB".into(),
                    home_score: 3 + d,
                    away_score: 2,
                    is_playoff: false,
                });
            }
        }
        Dataset::new(games).unwrap()
    }

    #[test]
    fn split_2001_2019_at_2015() {
        let data = seasons_dataset(2001..=2019);
        let split = split_by_season(&data, 2015).unwrap();
        assert_eq!(split.train.seasons().len(), 15);
        assert_eq!(split.test.seasons().len(), 4);
        assert_eq!(split.train.len() + split.test.len(), data.len());
    }

    #[test]
    fn split_with_empty_side_is_error() {
        let data = seasons_dataset(2010..=2010);
        assert!(matches!(
            split_by_season(&data, 2010),
            Err(Error::InvalidSplit(_))
        ));
        assert!(matches!(
            split_by_season(&data, 2009),
            Err(Error::InvalidSplit(_))
        ));
    }

    #[test]
    fn split_is_temporally_ordered() {
        let data = seasons_dataset(2001..=2004);
        let split = split_by_season(&data, 2002).unwrap();
        let last_train = split.train.games().iter().map(|g| g.date).max().unwrap();
        let first_test = split.test.games().iter().map(|g| g.date).min().unwrap();
        assert!(last_train < first_test);
    }
}
