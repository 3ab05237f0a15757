//! Gradient-boosted regression trees on the logistic loss.
//!
//! Each round fits a depth-limited tree to the per-row gradient and hessian
//! of the loss; leaves take the regularized Newton step scaled by the
//! learning rate. Candidate thresholds come from a per-feature histogram
//! that is exact whenever a feature has at most `max_bins` distinct values.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_log_loss, ProbClassifier};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub rounds: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub l2_leaf: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
    pub max_bins: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            rounds: 200,
            depth: 4,
            learning_rate: 0.1,
            l2_leaf: 1.0,
            min_child_weight: 1.0,
            max_bins: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<F> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: F,
        gain: F,
        left: usize,
        right: usize,
    },
    /// Already scaled by the learning rate.
    Leaf { value: F },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree<F> {
    /// `nodes[0]` is the root.
    pub nodes: Vec<TreeNode<F>>,
}

impl<F: Real> Tree<F> {
    pub fn predict(&self, x: &[F]) -> F {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn root(&self) -> &TreeNode<F> {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        fn go<F>(nodes: &[TreeNode<F>], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone)]
pub struct GbdtModel<F: Real> {
    config: GbdtConfig,
    d: usize,
    base_score: F,
    trees: Vec<Tree<F>>,
    loss_history: Vec<F>,
}

impl<F: Real> GbdtModel<F> {
    /// Log-odds of the training base rate.
    pub fn base_score(&self) -> F {
        self.base_score
    }

    pub fn trees(&self) -> &[Tree<F>] {
        &self.trees
    }

    /// Training log-loss of the prior and after every round.
    pub fn loss_history(&self) -> &[F] {
        &self.loss_history
    }

    pub fn raw_score(&self, x: &[F]) -> F {
        self.trees.iter().fold(self.base_score, |s, t| s + t.predict(x))
    }
}

impl<F: Real> ProbClassifier<F> for GbdtModel<F> {
    fn name(&self) -> &str {
        "gbdt"
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
        self.raw_score(x).sigmoid()
    }
}

/// Per-feature cut points; bin `k` holds values in `(cuts[k-1], cuts[k]]`.
fn cut_points<F: Real>(column: &[F], max_bins: usize) -> Vec<F> {
    let mut v: Vec<F> = column.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
    v.dedup();
    let two = F::one() + F::one();
    if v.len() <= max_bins {
        return v.windows(2).map(|w| w[0] + (w[1] - w[0]) / two).collect();
    }
    let m = v.len();
    let mut cuts: Vec<F> = (1..max_bins)
        .map(|k| {
            let idx = (k * m / max_bins).clamp(1, m - 1);
            v[idx - 1] + (v[idx] - v[idx - 1]) / two
        })
        .collect();
    cuts.dedup();
    cuts
}

fn bin_of<F: Real>(cuts: &[F], x: F) -> u16 {
    cuts.partition_point(|&c| c < x) as u16
}

struct Binned<F> {
    cuts: Vec<Vec<F>>,
    /// Column-major bin indices.
    bins: Vec<Vec<u16>>,
}

#[derive(Clone, Copy)]
struct Candidate<F> {
    feature: usize,
    bin: usize,
    gain: F,
}

struct Builder<'a, F: Real> {
    data: &'a Binned<F>,
    grad: &'a [F],
    hess: &'a [F],
    lambda: F,
    min_child: F,
    lr: F,
    max_depth: usize,
    nodes: Vec<TreeNode<F>>,
    /// Leaf value reached by each training row.
    row_value: Vec<F>,
}

impl<F: Real> Builder<'_, F> {
    fn score(&self, g: F, h: F) -> F {
        g * g / (h + self.lambda)
    }

    fn best_split(&self, rows: &[usize], g_tot: F, h_tot: F) -> Option<Candidate<F>> {
        let parent = self.score(g_tot, h_tot);
        let half = F::of(0.5);
        let per_feature: Vec<Option<Candidate<F>>> = (0..self.data.bins.len())
            .into_par_iter()
            .map(|f| {
                let n_bins = self.data.cuts[f].len() + 1;
                if n_bins < 2 {
                    return None;
                }
                let col = &self.data.bins[f];
                let mut hg = vec![F::zero(); n_bins];
                let mut hh = vec![F::zero(); n_bins];
                for &r in rows {
                    let b = col[r] as usize;
                    hg[b] = hg[b] + self.grad[r];
                    hh[b] = hh[b] + self.hess[r];
                }
                let (mut gl, mut hl) = (F::zero(), F::zero());
                let mut best: Option<Candidate<F>> = None;
                for b in 0..n_bins - 1 {
                    gl = gl + hg[b];
                    hl = hl + hh[b];
                    let (gr, hr) = (g_tot - gl, h_tot - hl);
                    if hl < self.min_child || hr < self.min_child {
                        continue;
                    }
                    let gain = half * (self.score(gl, hl) + self.score(gr, hr) - parent);
                    if gain > F::zero() && best.is_none_or(|c| gain > c.gain) {
                        best = Some(Candidate {
                            feature: f,
                            bin: b,
                            gain,
                        });
                    }
                }
                best
            })
            .collect();
        per_feature
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<Candidate<F>>, c| match acc {
                Some(a) if a.gain >= c.gain => Some(a),
                _ => Some(c),
            })
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: F = rows.iter().map(|&r| self.grad[r]).sum();
        let h: F = rows.iter().map(|&r| self.hess[r]).sum();
        let id = self.nodes.len();
        let split = if depth < self.max_depth && rows.len() > 1 {
            self.best_split(&rows, g, h)
        } else {
            None
        };
        match split {
            None => {
                let value = -g / (h + self.lambda) * self.lr;
                for &r in &rows {
                    self.row_value[r] = value;
                }
                self.nodes.push(TreeNode::Leaf { value });
            }
            Some(c) => {
                self.nodes.push(TreeNode::Leaf { value: F::zero() });
                let col = &self.data.bins[c.feature];
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] as usize <= c.bin);
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                self.nodes[id] = TreeNode::Split {
                    feature: c.feature,
                    threshold: self.data.cuts[c.feature][c.bin],
                    gain: c.gain,
                    left,
                    right,
                };
            }
        }
        id
    }
}

pub fn gbdt_fit<F: Real>(train: &FeatureMatrix<F>, config: &GbdtConfig) -> Result<GbdtModel<F>> {
    if config.rounds == 0 || config.depth == 0 {
        return Err(Error::InvalidConfig(
            "gbdt needs rounds >= 1 and depth >= 1".into(),
        ));
    }
    if !(config.learning_rate >= 0.0) || !(config.l2_leaf >= 0.0) || !(config.min_child_weight >= 0.0) {
        return Err(Error::InvalidConfig(
            "gbdt learning_rate, l2_leaf and min_child_weight must be >= 0".into(),
        ));
    }
    if !(2..=u16::MAX as usize).contains(&config.max_bins) {
        return Err(Error::InvalidConfig(format!(
            "max_bins = {} outside 2..=65535",
            config.max_bins
        )));
    }
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::Empty("gbdt training set".into()));
    }
    let d = train.n_cols();
    let y: Vec<F> = train
        .labels()
        .iter()
        .map(|&l| if l { F::one() } else { F::zero() })
        .collect();
    let binned = {
        let cols: Vec<Vec<F>> = (0..d).map(|f| train.rows().map(|r| r[f]).collect()).collect();
        let cuts: Vec<Vec<F>> = cols.par_iter().map(|c| cut_points(c, config.max_bins)).collect();
        let bins = cols
            .iter()
            .zip(&cuts)
            .map(|(c, cuts)| c.iter().map(|&x| bin_of(cuts, x)).collect())
            .collect();
        Binned { cuts, bins }
    };

    let rate = y.iter().copied().sum::<F>() / F::count(n);
    let eps = F::of(1e-15).max(F::epsilon());
    let rate = rate.max(eps).min(F::one() - eps);
    let base_score = (rate / (F::one() - rate)).ln();
    let mut raw = vec![base_score; n];
    let mut history = Vec::with_capacity(config.rounds + 1);
    let loss = |raw: &[F]| {
        mean_log_loss(
            &raw.iter().map(|&z| z.sigmoid()).collect::<Vec<_>>(),
            train.labels(),
        )
    };
    history.push(loss(&raw));
    let mut trees = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let p: Vec<F> = raw.iter().map(|&z| z.sigmoid()).collect();
        let grad: Vec<F> = p.iter().zip(&y).map(|(&p, &y)| p - y).collect();
        let hess: Vec<F> = p.iter().map(|&p| p * (F::one() - p)).collect();
        let mut b = Builder {
            data: &binned,
            grad: &grad,
            hess: &hess,
            lambda: F::of(config.l2_leaf),
            min_child: F::of(config.min_child_weight),
            lr: F::of(config.learning_rate),
            max_depth: config.depth,
            nodes: Vec::new(),
            row_value: vec![F::zero(); n],
        };
        b.build((0..n).collect(), 0);
        for (z, &v) in raw.iter_mut().zip(&b.row_value) {
            *z = *z + v;
        }
        history.push(loss(&raw));
        trees.push(Tree { nodes: b.nodes });
    }
    Ok(GbdtModel {
        config: config.clone(),
        d,
        base_score,
        trees,
        loss_history: history,
    })
}
