//! Numeric comparison of two run directories.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::Value;

use crate::manifest::RunManifest;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FileStatus {
    Identical,
    /// Bytes differ but every value is within tolerance.
    WithinTolerance {
        max_abs_diff: f64,
    },
    Differs {
        /// Largest numeric difference; infinite when a non-numeric value changed.
        max_abs_diff: f64,
        n_values: usize,
        first: String,
    },
    OnlyInA,
    OnlyInB,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDiff {
    pub path: String,
    #[serde(flatten)]
    pub status: FileStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub tolerance: f64,
    pub files: Vec<FileDiff>,
    /// Manifest settings that differ, as `key: a -> b`.
    pub config_changes: Vec<String>,
}

impl DiffReport {
    pub fn within_tolerance(&self) -> bool {
        self.files.iter().all(|f| {
            matches!(
                f.status,
                FileStatus::Identical | FileStatus::WithinTolerance { .. }
            )
        })
    }

    pub fn differing(&self) -> impl Iterator<Item = &FileDiff> {
        self.files.iter().filter(|f| {
            !matches!(
                f.status,
                FileStatus::Identical | FileStatus::WithinTolerance { .. }
            )
        })
    }

    /// One line per file that is not identical, then a summary line. Empty
    /// (apart from the summary) for identical runs.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.config_changes {
            let _ = writeln!(s, "config  {c}");
        }
        for f in &self.files {
            let _ = match &f.status {
                FileStatus::Identical => Ok(()),
                FileStatus::WithinTolerance { max_abs_diff } => {
                    writeln!(s, "~ {}  max |diff| {max_abs_diff:e} (within tolerance)", f.path)
                }
                FileStatus::Differs {
                    max_abs_diff,
                    n_values,
                    first,
                } => writeln!(
                    s,
                    "! {}  {n_values} value(s) differ, max |diff| {max_abs_diff:e}; first: {first}",
                    f.path
                ),
                FileStatus::OnlyInA => writeln!(s, "- {}  only in first run", f.path),
                FileStatus::OnlyInB => writeln!(s, "+ {}  only in second run", f.path),
            };
        }
        let n_diff = self.differing().count();
        let _ = writeln!(
            s,
            "{} file(s) compared, {n_diff} outside tolerance {:e}",
            self.files.len(),
            self.tolerance
        );
        s
    }
}

#[derive(Default)]
struct Tally {
    max_abs: f64,
    n: usize,
    first: Option<String>,
}

impl Tally {
    fn note(&mut self, at: &str, a: &str, b: &str, abs: f64, tol: f64) {
        if abs > self.max_abs || abs.is_nan() {
            self.max_abs = if abs.is_nan() { f64::INFINITY } else { abs };
        }
        if !(abs <= tol) {
            self.n += 1;
            self.first.get_or_insert_with(|| format!("{at}: {a} vs {b}"));
        }
    }

    fn into_status(self) -> FileStatus {
        match self.first {
            None => FileStatus::WithinTolerance {
                max_abs_diff: self.max_abs,
            },
            Some(first) => FileStatus::Differs {
                max_abs_diff: self.max_abs,
                n_values: self.n,
                first,
            },
        }
    }
}

fn compare_scalar(at: &str, a: &str, b: &str, tol: f64, t: &mut Tally) {
    if a == b {
        return;
    }
    let abs = match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_nan() && y.is_nan() => 0.0,
        (Ok(x), Ok(y)) if x == y => 0.0,
        (Ok(x), Ok(y)) => (x - y).abs(),
        _ => f64::INFINITY,
    };
    t.note(at, a, b, abs, tol);
}

fn compare_csv(rel: &str, a: &[u8], b: &[u8], tol: f64) -> anyhow::Result<FileStatus> {
    let read = |bytes: &[u8]| -> anyhow::Result<Vec<csv::StringRecord>> {
        csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(bytes)
            .records()
            .collect::<Result<_, _>>()
            .with_context(|| format!("{rel}: unreadable CSV"))
    };
    let (ra, rb) = (read(a)?, read(b)?);
    if ra.len() != rb.len() {
        bail!("{rel}: incompatible schemas ({} vs {} rows)", ra.len(), rb.len());
    }
    if let (Some(ha), Some(hb)) = (ra.first(), rb.first()) {
        if ha.len() != hb.len() {
            bail!(
                "{rel}: incompatible schemas ({} vs {} columns)",
                ha.len(),
                hb.len()
            );
        }
    }
    let mut t = Tally::default();
    for (i, (x, y)) in ra.iter().zip(&rb).enumerate() {
        if x.len() != y.len() {
            bail!("{rel}: incompatible schemas at line {}", i + 1);
        }
        for (j, (u, v)) in x.iter().zip(y.iter()).enumerate() {
            compare_scalar(&format!("line {}, column {}", i + 1, j + 1), u, v, tol, &mut t);
        }
    }
    Ok(t.into_status())
}

fn compare_json(rel: &str, at: &str, a: &Value, b: &Value, tol: f64, t: &mut Tally) -> anyhow::Result<()> {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let kx: BTreeSet<_> = x.keys().collect();
            let ky: BTreeSet<_> = y.keys().collect();
            if kx != ky {
                bail!("{rel}: incompatible schemas at `{at}` (different keys)");
            }
            for k in kx {
                compare_json(rel, &format!("{at}.{k}"), &x[k], &y[k], tol, t)?;
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                bail!(
                    "{rel}: incompatible schemas at `{at}` ({} vs {} items)",
                    x.len(),
                    y.len()
                );
            }
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                compare_json(rel, &format!("{at}[{i}]"), u, v, tol, t)?;
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            let (u, v) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            if u != v {
                t.note(at, &x.to_string(), &y.to_string(), (u - v).abs(), tol);
            }
        }
        (Value::Object(_) | Value::Array(_), _) | (_, Value::Object(_) | Value::Array(_)) => {
            bail!("{rel}: incompatible schemas at `{at}`");
        }
        _ if a != b => t.note(at, &a.to_string(), &b.to_string(), f64::INFINITY, tol),
        _ => {}
    }
    Ok(())
}

fn compare_file(rel: &str, a: &[u8], b: &[u8], tol: f64) -> anyhow::Result<FileStatus> {
    if a == b {
        return Ok(FileStatus::Identical);
    }
    if rel.ends_with(".csv") {
        compare_csv(rel, a, b, tol)
    } else if rel.ends_with(".json") {
        let va: Value = serde_json::from_slice(a).with_context(|| format!("{rel}: unreadable JSON"))?;
        let vb: Value = serde_json::from_slice(b).with_context(|| format!("{rel}: unreadable JSON"))?;
        let mut t = Tally::default();
        compare_json(rel, "$", &va, &vb, tol, &mut t)?;
        Ok(t.into_status())
    } else {
        Ok(FileStatus::Differs {
            max_abs_diff: f64::INFINITY,
            n_values: 1,
            first: "binary content differs".into(),
        })
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        _ => out.push((prefix.to_string(), v.to_string())),
    }
}

fn config_changes(a: &RunManifest, b: &RunManifest) -> Vec<String> {
    let wrap = |m: &RunManifest| serde_json::json!({ "config": m.config, "models": m.models, "seeds": m.seeds, "version": m.version });
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    flatten("", &wrap(a), &mut fa);
    flatten("", &wrap(b), &mut fb);
    let ma: std::collections::BTreeMap<_, _> = fa.into_iter().collect();
    let mb: std::collections::BTreeMap<_, _> = fb.into_iter().collect();
    let keys: BTreeSet<&String> = ma.keys().chain(mb.keys()).collect();
    let none = "(absent)".to_string();
    keys.into_iter()
        .filter(|k| ma.get(*k) != mb.get(*k))
        .map(|k| {
            format!(
                "{k}: {} -> {}",
                ma.get(k).unwrap_or(&none),
                mb.get(k).unwrap_or(&none)
            )
        })
        .collect()
}

/// Compares every output declared by either run's manifest. Numbers match
/// when they differ by at most `tolerance` in absolute value; anything else
/// must be equal.
pub fn diff_runs(a: &Path, b: &Path, tolerance: f64) -> anyhow::Result<DiffReport> {
    if !(tolerance >= 0.0) {
        bail!("tolerance must be >= 0");
    }
    let ma = RunManifest::load(a)?;
    let mb = RunManifest::load(b)?;
    let paths: BTreeSet<&String> = ma.outputs.keys().chain(mb.outputs.keys()).collect();
    let mut files = Vec::with_capacity(paths.len());
    for rel in paths {
        let status = match (ma.outputs.get(rel), mb.outputs.get(rel)) {
            (Some(_), None) => FileStatus::OnlyInA,
            (None, Some(_)) => FileStatus::OnlyInB,
            _ => {
                let read = |dir: &Path| {
                    std::fs::read(dir.join(rel))
                        .with_context(|| format!("cannot read {}", dir.join(rel).display()))
                };
                compare_file(rel, &read(a)?, &read(b)?, tolerance)?
            }
        };
        files.push(FileDiff {
            path: rel.clone(),
            status,
        });
    }
    Ok(DiffReport {
        tolerance,
        files,
        config_changes: config_changes(&ma, &mb),
    })
}
