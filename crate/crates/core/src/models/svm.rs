//! RBF-kernel support vector classifier.
//!
//! The dual is solved by SMO with second-order working-set selection. Decision
//! values are turned into probabilities by a Platt sigmoid fitted on
//! out-of-fold decision values.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ProbClassifier, Standardizer};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Real;

const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    /// RBF width; `None` means `1 / n_features`.
    pub gamma: Option<f64>,
    pub subsample_cap: usize,
    pub seed: u64,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// `None` means `max(10_000_000, 100 * n)`.
    pub max_iter: Option<usize>,
    /// Folds used to collect out-of-sample decision values for Platt scaling.
    pub platt_folds: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            gamma: None,
            subsample_cap: 5000,
            seed: 0,
            tolerance: 1e-3,
            max_iter: None,
            platt_folds: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvmModel<F: Real> {
    config: SvmConfig,
    scaler: Standardizer<F>,
    gamma: F,
    d: usize,
    /// Standardized support vectors, row-major.
    support: Vec<F>,
    /// `alpha_i * y_i` for each support vector.
    coef: Vec<F>,
    bias: F,
    platt_a: F,
    platt_b: F,
    train_rows: Vec<usize>,
    alphas: Vec<F>,
}

impl<F: Real> SvmModel<F> {
    pub fn decision_value(&self, x: &[F]) -> F {
        let z = self.scaler.transform_row(x);
        let k: F = self
            .support
            .chunks_exact(self.d)
            .zip(&self.coef)
            .map(|(sv, &c)| c * rbf(sv, &z, self.gamma))
            .sum();
        k + self.bias
    }

    /// Platt mapping from a decision value to `P(home win)`.
    pub fn probability(&self, f: F) -> F {
        (-(self.platt_a * f + self.platt_b)).sigmoid()
    }

    pub fn platt_coefficients(&self) -> (F, F) {
        (self.platt_a, self.platt_b)
    }

    pub fn bias(&self) -> F {
        self.bias
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    /// Rows of the training matrix that entered the final solve.
    pub fn train_rows(&self) -> &[usize] {
        &self.train_rows
    }

    /// Dual coefficients aligned with [`Self::train_rows`].
    pub fn alphas(&self) -> &[F] {
        &self.alphas
    }

    pub fn n_support(&self) -> usize {
        self.coef.len()
    }
}

impl<F: Real> ProbClassifier<F> for SvmModel<F> {
    fn name(&self) -> &str {
        "svm"
    }

    fn hyperparameters(&self) -> BTreeMap<String, serde_json::Value> {
        let mut m: BTreeMap<String, serde_json::Value> = match serde_json::to_value(&self.config) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        m.insert("gamma".into(), serde_json::json!(self.gamma.f64()));
        m
    }

    fn n_features(&self) -> Option<usize> {
        Some(self.d)
    }

    fn predict_row(&self, x: &[F]) -> F {
        self.probability(self.decision_value(x))
    }
}

fn rbf<F: Real>(a: &[F], b: &[F], gamma: F) -> F {
    let d2: F = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Kernel rows computed on demand with FIFO eviction.
struct KernelCache<'a, F: Real> {
    xs: &'a [F],
    d: usize,
    gamma: F,
    rows: Vec<Option<Vec<F>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a, F: Real> KernelCache<'a, F> {
    fn new(xs: &'a [F], d: usize, gamma: F) -> Self {
        let n = xs.len() / d.max(1);
        let row_bytes = (n * std::mem::size_of::<F>()).max(1);
        KernelCache {
            xs,
            d,
            gamma,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity: (CACHE_BYTES / row_bytes).max(2),
        }
    }

    fn row(&mut self, i: usize) -> &[F] {
        if self.rows[i].is_none() {
            if self.order.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows[old] = None;
                }
            }
            let xi = &self.xs[i * self.d..(i + 1) * self.d];
            let row = self
                .xs
                .chunks_exact(self.d)
                .map(|xj| rbf(xi, xj, self.gamma))
                .collect();
            self.rows[i] = Some(row);
            self.order.push_back(i);
        }
        self.rows[i].as_deref().unwrap_or(&[])
    }
}

struct Solution<F> {
    alpha: Vec<F>,
    rho: F,
}

/// Solves the C-SVC dual for labels `y` in `{-1, +1}`.
fn smo<F: Real>(xs: &[F], d: usize, y: &[F], c: F, gamma: F, tol: F, max_iter: usize) -> Result<Solution<F>> {
    let n = y.len();
    let mut cache = KernelCache::new(xs, d, gamma);
    let mut alpha = vec![F::zero(); n];
    let mut grad = vec![-F::one(); n];
    let tau = F::of(TAU);
    let is_up = |a: F, y: F| (y > F::zero() && a < c) || (y < F::zero() && a > F::zero());
    let is_low = |a: F, y: F| (y > F::zero() && a > F::zero()) || (y < F::zero() && a < c);

    let mut iter = 0;
    loop {
        // i: maximal violating index in I_up
        let mut gmax = F::neg_infinity();
        let mut i = usize::MAX;
        for t in 0..n {
            if is_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmin = F::infinity();
        for t in 0..n {
            if is_low(alpha[t], y[t]) {
                gmin = gmin.min(-y[t] * grad[t]);
            }
        }
        let residual = gmax - gmin;
        if i == usize::MAX || residual < tol {
            break;
        }
        if iter >= max_iter {
            return Err(Error::NotConverged {
                iterations: iter,
                residual: residual.f64(),
            });
        }
        iter += 1;

        let ki: Vec<F> = cache.row(i).to_vec();
        // j: second-order choice among violators in I_low
        let mut best = F::infinity();
        let mut j = usize::MAX;
        for t in 0..n {
            if !is_low(alpha[t], y[t]) {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > F::zero() {
                let mut a = two_of::<F>() - two_of::<F>() * ki[t];
                if a <= F::zero() {
                    a = tau;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            break;
        }
        let kj: Vec<F> = cache.row(j).to_vec();
        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let two = F::one() + F::one();
        if y[i] != y[j] {
            let mut quad = two - two * ki[j];
            if quad <= F::zero() {
                quad = tau;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] = alpha[i] + delta;
            alpha[j] = alpha[j] + delta;
            if diff > F::zero() {
                if alpha[j] < F::zero() {
                    alpha[j] = F::zero();
                    alpha[i] = diff;
                }
            } else if alpha[i] < F::zero() {
                alpha[i] = F::zero();
                alpha[j] = -diff;
            }
            if diff > F::zero() {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = two - two * ki[j];
            if quad <= F::zero() {
                quad = tau;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] = alpha[i] - delta;
            alpha[j] = alpha[j] + delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < F::zero() {
                alpha[j] = F::zero();
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < F::zero() {
                alpha[i] = F::zero();
                alpha[j] = sum;
            }
        }
        let dai = alpha[i] - ai_old;
        let daj = alpha[j] - aj_old;
        for t in 0..n {
            grad[t] = grad[t] + y[t] * (y[i] * ki[t] * dai + y[j] * kj[t] * daj);
        }
    }

    let (mut ub, mut lb) = (F::infinity(), F::neg_infinity());
    let (mut free, mut sum_free) = (0usize, F::zero());
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < F::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= F::zero() {
            if y[t] > F::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free = sum_free + yg;
        }
    }
    let rho = if free > 0 {
        sum_free / F::count(free)
    } else {
        (ub + lb) / two_of::<F>()
    };
    Ok(Solution { alpha, rho })
}

fn two_of<F: Real>() -> F {
    F::one() + F::one()
}

/// Fits `1 / (1 + exp(a f + b))` to labels by Newton's method with
/// backtracking, using smoothed targets.
pub(crate) fn platt_fit(dec: &[f64], labels: &[bool]) -> (f64, f64) {
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let t: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();
    let (min_step, sigma) = (1e-10, 1e-12);
    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let fa = f * a + b;
                if fa >= 0.0 {
                    ti * fa + (1.0 + (-fa).exp()).ln()
                } else {
                    (ti - 1.0) * fa + (1.0 + fa.exp()).ln()
                }
            })
            .sum()
    };
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&f, &ti) in dec.iter().zip(&t) {
            let fa = f * a + b;
            let (p, q) = if fa >= 0.0 {
                let e = (-fa).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = fa.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            break;
        }
    }
    (a, b)
}

/// Stratified seeded subsample of at most `cap` row indices, in row order.
fn stratified_subsample(labels: &[bool], cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = labels.len();
    if n <= cap {
        return (0..n).collect();
    }
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    pos.shuffle(rng);
    neg.shuffle(rng);
    let take_pos = ((pos.len() as f64 * cap as f64 / n as f64).round() as usize).clamp(1, pos.len());
    let take_neg = (cap - take_pos.min(cap)).clamp(1, neg.len());
    let mut rows: Vec<usize> = pos[..take_pos].iter().chain(&neg[..take_neg]).copied().collect();
    rows.sort_unstable();
    rows
}

fn gather<F: Real>(xs: &[F], d: usize, rows: &[usize]) -> Vec<F> {
    rows.iter()
        .flat_map(|&r| xs[r * d..(r + 1) * d].iter().copied())
        .collect()
}

struct Fitted<F> {
    alpha: Vec<F>,
    bias: F,
}

fn solve<F: Real>(xs: &[F], d: usize, labels: &[bool], cfg: &SvmConfig, gamma: F) -> Result<Fitted<F>> {
    let y: Vec<F> = labels
        .iter()
        .map(|&l| if l { F::one() } else { -F::one() })
        .collect();
    let max_iter = cfg.max_iter.unwrap_or_else(|| (100 * y.len()).max(10_000_000));
    let sol = smo(xs, d, &y, F::of(cfg.c), gamma, F::of(cfg.tolerance), max_iter)?;
    Ok(Fitted {
        alpha: sol.alpha,
        bias: -sol.rho,
    })
}

fn decision_with<F: Real>(fit: &Fitted<F>, xs: &[F], labels: &[bool], d: usize, gamma: F, q: &[F]) -> F {
    xs.chunks_exact(d)
        .zip(&fit.alpha)
        .zip(labels)
        .filter(|((_, &a), _)| a > F::zero())
        .map(|((sv, &a), &l)| {
            let s = if l { a } else { -a };
            s * rbf(sv, q, gamma)
        })
        .sum::<F>()
        + fit.bias
}

pub fn svm_fit<F: Real>(train: &FeatureMatrix<F>, config: &SvmConfig) -> Result<SvmModel<F>> {
    if !train.has_both_classes() {
        return Err(Error::SingleClass);
    }
    if !(config.c > 0.0) || config.subsample_cap < 2 || !(config.tolerance > 0.0) {
        return Err(Error::InvalidConfig(
            "svm needs c > 0, subsample_cap >= 2, tolerance > 0".into(),
        ));
    }
    if let Some(g) = config.gamma {
        if !(g > 0.0) {
            return Err(Error::InvalidConfig(format!("svm gamma = {g} must be > 0")));
        }
    }
    let d = train.n_cols();
    if d == 0 {
        return Err(Error::InvalidInput("svm needs at least one feature".into()));
    }
    let gamma = F::of(config.gamma.unwrap_or(1.0 / d as f64));
    let scaler = Standardizer::fit(train);
    let all = scaler.transform(train);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rows = stratified_subsample(train.labels(), config.subsample_cap, &mut rng);
    let xs = gather(&all, d, &rows);
    let labels: Vec<bool> = rows.iter().map(|&r| train.labels()[r]).collect();
    let fit = solve(&xs, d, &labels, config, gamma)?;

    // out-of-fold decision values for the Platt sigmoid
    let folds = config.platt_folds.max(2);
    let mut fold_of = vec![0usize; rows.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..rows.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            fold_of[i] = k % folds;
        }
    }
    let mut dec = vec![0.0f64; rows.len()];
    let mut oof_ok = true;
    for f in 0..folds {
        let tr: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] != f).collect();
        let te: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] == f).collect();
        let tr_labels: Vec<bool> = tr.iter().map(|&i| labels[i]).collect();
        if te.is_empty() || !tr_labels.contains(&true) || !tr_labels.contains(&false) {
            oof_ok = false;
            break;
        }
        let tr_x = gather(&xs, d, &tr);
        let sub = solve(&tr_x, d, &tr_labels, config, gamma)?;
        for &i in &te {
            dec[i] = decision_with(&sub, &tr_x, &tr_labels, d, gamma, &xs[i * d..(i + 1) * d]).f64();
        }
    }
    if !oof_ok {
        for i in 0..rows.len() {
            dec[i] = decision_with(&fit, &xs, &labels, d, gamma, &xs[i * d..(i + 1) * d]).f64();
        }
    }
    let (pa, pb) = platt_fit(&dec, &labels);

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (i, &a) in fit.alpha.iter().enumerate() {
        if a > F::zero() {
            support.extend_from_slice(&xs[i * d..(i + 1) * d]);
            coef.push(if labels[i] { a } else { -a });
        }
    }
    Ok(SvmModel {
        config: config.clone(),
        scaler,
        gamma,
        d,
        support,
        coef,
        bias: fit.bias,
        platt_a: F::of(pa),
        platt_b: F::of(pb),
        train_rows: rows,
        alphas: fit.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn xor(n_per: usize, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (cx, cy, l) in [
            (1.0, 1.0, true),
            (-1.0, -1.0, true),
            (1.0, -1.0, false),
            (-1.0, 1.0, false),
        ] {
            for _ in 0..n_per {
                rows.push(vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]);
                labels.push(l);
            }
        }
        FeatureMatrix::from_rows(&rows, &labels).unwrap()
    }

    #[test]
    fn xor_clusters() {
        let model = svm_fit(&xor(50, 1), &SvmConfig::default()).unwrap();
        let p = model.predict(&xor(50, 2)).unwrap();
        let acc = crate::metrics::accuracy(&p, 0.5).unwrap();
        assert!(acc >= 0.95, "{acc}");
    }

    #[test]
    fn kkt_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + 0.5 * r[1] > 0.0).collect();
        let train = FeatureMatrix::from_rows(&rows, &labels).unwrap();
        let cfg = SvmConfig::default();
        let model = svm_fit(&train, &cfg).unwrap();
        let tol = cfg.tolerance;
        for (k, &r) in model.train_rows().iter().enumerate() {
            let a = model.alphas()[k];
            let y = if labels[r] { 1.0 } else { -1.0 };
            let m = y * model.decision_value(&rows[r]);
            if a <= 0.0 {
                assert!(m >= 1.0 - tol, "row {r}: alpha 0, margin {m}");
            } else if a >= cfg.c {
                assert!(m <= 1.0 + tol, "row {r}: alpha C, margin {m}");
            } else {
                assert!((m - 1.0).abs() <= tol, "row {r}: free, margin {m}");
            }
        }
        // equality constraint
        let s: f64 = model
            .train_rows()
            .iter()
            .zip(model.alphas())
            .map(|(&r, &a)| if labels[r] { a } else { -a })
            .sum();
        assert!(s.abs() < 1e-9, "{s}");
    }

    #[test]
    fn platt_monotone() {
        let model = svm_fit(&xor(30, 4), &SvmConfig::default()).unwrap();
        let (a, _) = model.platt_coefficients();
        assert!(a < 0.0);
        let ps: Vec<f64> = (-40..=40).map(|i| model.probability(i as f64 / 10.0)).collect();
        assert!(ps.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn subsample_is_stratified_and_capped() {
        let labels: Vec<bool> = (0..1000).map(|i| i % 4 != 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows = stratified_subsample(&labels, 100, &mut rng);
        assert_eq!(rows.len(), 100);
        assert_eq!(rows.iter().filter(|&&r| labels[r]).count(), 75);
        assert!(rows.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn iteration_budget_reports_residual() {
        let cfg = SvmConfig {
            max_iter: Some(1),
            ..Default::default()
        };
        match svm_fit(&xor(20, 5), &cfg) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual > cfg.tolerance);
            }
            other => panic!("expected NotConverged, got {:?}", other.map(|m| m.n_support())),
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SvmConfig {
            subsample_cap: 80,
            ..Default::default()
        };
        let train = xor(40, 6);
        let a = svm_fit(&train, &cfg).unwrap().predict(&train).unwrap();
        let b = svm_fit(&train, &cfg).unwrap().predict(&train).unwrap();
        assert_eq!(a, b);
    }
}
