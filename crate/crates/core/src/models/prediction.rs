use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Real;

/// Per-game home-win probabilities from one model over one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet<F: Real> {
    model_name: String,
    game_ids: Vec<String>,
    p_home: Vec<F>,
    label: Vec<bool>,
    score_diff: Vec<i32>,
}

impl<F: Real> PredictionSet<F> {
    pub fn new(
        model_name: impl Into<String>,
        game_ids: Vec<String>,
        p_home: Vec<F>,
        label: Vec<bool>,
        score_diff: Vec<i32>,
    ) -> Result<Self> {
        let n = game_ids.len();
        if p_home.len() != n || label.len() != n || score_diff.len() != n {
            return Err(Error::InvalidInput(
                "prediction set fields have different lengths".into(),
            ));
        }
        if let Some(i) = p_home
            .iter()
            .position(|p| !p.is_finite() || *p < F::zero() || *p > F::one())
        {
            return Err(Error::InvalidInput(format!(
                "probability {} for `{}` outside [0, 1]",
                p_home[i], game_ids[i]
            )));
        }
        Ok(PredictionSet {
            model_name: model_name.into(),
            game_ids,
            p_home,
            label,
            score_diff,
        })
    }

    /// Pairs probabilities with the rows of `m`.
    pub fn for_matrix(model_name: impl Into<String>, m: &FeatureMatrix<F>, p_home: Vec<F>) -> Result<Self> {
        PredictionSet::new(
            model_name,
            m.game_ids().to_vec(),
            p_home,
            m.labels().to_vec(),
            m.score_diff().to_vec(),
        )
    }

    /// Synthetic set where only probabilities and labels matter; score
    /// differentials are `+1` for wins and `-1` for losses.
    pub fn from_probs(model_name: impl Into<String>, p_home: Vec<F>, label: Vec<bool>) -> Result<Self> {
        let n = p_home.len();
        let diffs = label.iter().map(|&l| if l { 1 } else { -1 }).collect();
        PredictionSet::new(
            model_name,
            (0..n).map(|i| format!("g{i}")).collect(),
            p_home,
            label,
            diffs,
        )
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.model_name = name.into();
        self
    }

    pub fn game_ids(&self) -> &[String] {
        &self.game_ids
    }

    pub fn p_home(&self) -> &[F] {
        &self.p_home
    }

    pub fn labels(&self) -> &[bool] {
        &self.label
    }

    pub fn score_diff(&self) -> &[i32] {
        &self.score_diff
    }

    pub fn len(&self) -> usize {
        self.game_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.game_ids.is_empty()
    }

    /// Thresholded class per game; `p == threshold` predicts a home win.
    pub fn home_picks(&self, threshold: F) -> impl Iterator<Item = bool> + '_ {
        self.p_home.iter().map(move |&p| p >= threshold)
    }
}

const HEADER: [&str; 5] = ["game_id", "model", "p_home", "label", "score_diff"];

/// Predictions CSV: `game_id,model,p_home,label,score_diff`.
pub fn write_predictions<F: Real, W: Write>(preds: &PredictionSet<F>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for i in 0..preds.len() {
        w.write_record([
            preds.game_ids[i].as_str(),
            &preds.model_name,
            &preds.p_home[i].to_string(),
            if preds.label[i] { "1" } else { "0" },
            &preds.score_diff[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<predictions writer>", e))?;
    Ok(())
}

pub fn read_predictions<F: Real, R: Read>(reader: R) -> Result<PredictionSet<F>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).ne(HEADER) {
        return Err(Error::malformed(
            1,
            "header",
            format!("expected {}", HEADER.join(",")),
        ));
    }
    let mut model = None::<String>;
    let (mut ids, mut ps, mut labels, mut diffs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        match &model {
            None => model = Some(get(1).to_string()),
            Some(m) if m != get(1) => {
                return Err(Error::malformed(
                    line,
                    "model",
                    format!("mixes models `{m}` and `{}`", get(1)),
                ))
            }
            _ => {}
        }
        ids.push(get(0).to_string());
        let p: f64 = get(2)
            .parse()
            .map_err(|_| Error::malformed(line, "p_home", format!("`{}` is not a number", get(2))))?;
        ps.push(F::of(p));
        labels.push(match get(3) {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::malformed(
                    line,
                    "label",
                    format!("`{other}` is not 0 or 1"),
                ))
            }
        });
        diffs.push(
            get(4)
                .parse()
                .map_err(|_| Error::malformed(line, "score_diff", "not an integer"))?,
        );
    }
    PredictionSet::new(model.unwrap_or_default(), ids, ps, labels, diffs)
}

pub fn save_predictions<F: Real>(preds: &PredictionSet<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_predictions(preds, std::io::BufWriter::new(file))
}

pub fn load_predictions<F: Real>(path: impl AsRef<Path>) -> Result<PredictionSet<F>> {
    let path = path.as_ref();
    read_predictions(File::open(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(PredictionSet::from_probs("m", vec![0.5f64, 1.2], vec![true, false]).is_err());
        assert!(PredictionSet::from_probs("m", vec![f64::NAN], vec![true]).is_err());
        assert!(PredictionSet::from_probs("m", vec![0.5f64], vec![true, false]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = PredictionSet::new(
            "logr",
            vec!["a".into(), "b".into()],
            vec![0.25f64, 0.8125],
            vec![false, true],
            vec![-3, 2],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_predictions(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("game_id,model,p_home,label,score_diff\na,logr,0.25,0,-3\n"));
        assert_eq!(read_predictions::<f64, _>(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn mixed_models_rejected() {
        let csv = "game_id,model,p_home,label,score_diff\na,x,0.5,1,1\nb,y,0.5,0,-1\n";
        assert!(read_predictions::<f64, _>(csv.as_bytes()).is_err());
    }
}
