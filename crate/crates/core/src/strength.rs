//! How predicted win probability relates to the realized score differential.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PredictionSet;
use crate::scalar::Real;

pub const DEFAULT_BIN_WIDTH: f64 = 0.1;

/// Probability ranges of the toss-up, home-favourite and home-underdog tables.
pub const STANDARD_RANGES: [(f64, f64); 6] = [
    (0.45, 0.55),
    (0.49, 0.51),
    (0.75, 1.0),
    (0.85, 1.0),
    (0.0, 0.25),
    (0.0, 0.15),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdKind {
    /// `n - 1` denominator.
    #[default]
    Sample,
    Population,
}

/// Mean and standard deviation of integer samples; sd needs at least two.
fn summarize(xs: &[i32], kind: SdKind) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let ss: f64 = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum();
    let denom = match kind {
        SdKind::Sample => n - 1.0,
        SdKind::Population => n,
    };
    (Some(mean), Some((ss / denom).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin_center: f64,
    pub n_games: usize,
    pub mean_diff: Option<f64>,
    pub sd_diff: Option<f64>,
}

/// Groups games by `p_home` rounded to the nearest multiple of `bin_width`
/// (halves round up) and summarizes the score differential per bin. Every
/// bin from 0 to 1 is returned, empty or not.
pub fn bin_by_probability<F: Real>(
    p: &PredictionSet<F>,
    bin_width: f64,
    sd: SdKind,
) -> Result<Vec<BinSummary>> {
    if p.is_empty() {
        return Err(Error::Empty(format!("prediction set `{}`", p.model_name())));
    }
    let k = 1.0 / bin_width;
    if !(bin_width > 0.0 && bin_width <= 1.0) || (k - k.round()).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "bin width {bin_width} does not divide 1"
        )));
    }
    let n_bins = k.round() as usize + 1;
    let mut groups: Vec<Vec<i32>> = vec![Vec::new(); n_bins];
    for (&q, &d) in p.p_home().iter().zip(p.score_diff()) {
        let idx = ((q.f64() / bin_width).round() as usize).min(n_bins - 1);
        groups[idx].push(d);
    }
    Ok(groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let (mean_diff, sd_diff) = summarize(g, sd);
            BinSummary {
                bin_center: i as f64 / k.round(),
                n_games: g.len(),
                mean_diff,
                sd_diff,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub n_games: usize,
    /// Runs per unit of probability.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line of score differential on `p_home`.
pub fn prob_diff_regression<F: Real>(p: &PredictionSet<F>) -> Result<FitSummary> {
    if p.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "regression needs at least 3 games, `{}` has {}",
            p.model_name(),
            p.len()
        )));
    }
    let x: Vec<F> = p.p_home().to_vec();
    let y: Vec<F> = p.score_diff().iter().map(|&d| F::of(d as f64)).collect();
    let n = F::count(x.len());
    let mx = x.iter().copied().sum::<F>() / n;
    let my = y.iter().copied().sum::<F>() / n;
    let sxx: F = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    let sxy: F = x.iter().zip(&y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let syy: F = y.iter().map(|&v| (v - my) * (v - my)).sum();
    if !(sxx > F::zero()) {
        return Err(Error::ConstantPredictions(p.model_name().to_string()));
    }
    if !(syy > F::zero()) {
        return Err(Error::InvalidInput(format!(
            "score differentials of `{}` are constant",
            p.model_name()
        )));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: F = x
        .iter()
        .zip(&y)
        .map(|(&a, &b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let r2 = (F::one() - sse / syy).max(F::zero()).min(F::one());
    Ok(FitSummary {
        model: p.model_name().to_string(),
        n_games: p.len(),
        slope: slope.f64(),
        intercept: intercept.f64(),
        r_squared: r2.f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeReport {
    pub model: String,
    pub low: f64,
    pub high: f64,
    pub n_games: usize,
    pub mean_diff: Option<f64>,
    pub sd_diff: Option<f64>,
}

/// Score-differential statistics over games with `low <= p_home <= high`.
pub fn range_report<F: Real>(p: &PredictionSet<F>, low: f64, high: f64, sd: SdKind) -> Result<RangeReport> {
    if !(0.0 <= low && low < high && high <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "range [{low}, {high}] is not inside [0, 1] with low < high"
        )));
    }
    let (lo, hi) = (F::of(low), F::of(high));
    let diffs: Vec<i32> = p
        .p_home()
        .iter()
        .zip(p.score_diff())
        .filter(|(&q, _)| lo <= q && q <= hi)
        .map(|(_, &d)| d)
        .collect();
    let (mean_diff, sd_diff) = summarize(&diffs, sd);
    Ok(RangeReport {
        model: p.model_name().to_string(),
        low,
        high,
        n_games: diffs.len(),
        mean_diff,
        sd_diff,
    })
}

pub fn standard_report_suite<F: Real>(p: &PredictionSet<F>, sd: SdKind) -> Vec<RangeReport> {
    STANDARD_RANGES
        .iter()
        .map(|&(lo, hi)| range_report(p, lo, hi, sd).expect("standard ranges are valid"))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV `bin_center,n,mean_diff,sd_diff`; undefined statistics are empty cells.
pub fn write_bins<W: Write>(bins: &[BinSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_center", "n", "mean_diff", "sd_diff"])?;
    for b in bins {
        w.write_record([
            b.bin_center.to_string(),
            b.n_games.to_string(),
            opt(b.mean_diff),
            opt(b.sd_diff),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<bins writer>", e))?;
    Ok(())
}

/// CSV `model,low,high,n_games,mean_diff,sd_diff`; empty ranges leave the
/// statistics blank.
pub fn write_ranges<W: Write>(reports: &[RangeReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "low", "high", "n_games", "mean_diff", "sd_diff"])?;
    for r in reports {
        w.write_record([
            r.model.clone(),
            r.low.to_string(),
            r.high.to_string(),
            r.n_games.to_string(),
            opt(r.mean_diff),
            opt(r.sd_diff),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ranges writer>", e))?;
    Ok(())
}

pub fn save_bins(bins: &[BinSummary], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_bins(bins, std::io::BufWriter::new(file))
}

pub fn save_ranges(reports: &[RangeReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ranges(reports, std::io::BufWriter::new(file))
}
