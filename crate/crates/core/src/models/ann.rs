//! Feed-forward network with a sigmoid output unit trained by mini-batch SGD.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softplus, ProbClassifier, Standardizer};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply<F: Real>(self, z: F) -> F {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(F::zero()),
            Activation::Sigmoid => z.sigmoid(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative<F: Real>(self, a: F) -> F {
        match self {
            Activation::Tanh => F::one() - a * a,
            Activation::Relu => {
                if a > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => a * (F::one() - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnConfig {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AnnConfig {
    fn default() -> Self {
        AnnConfig {
            hidden_sizes: vec![64],
            activation: Activation::Tanh,
            epochs: 50,
            learning_rate: 0.05,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer<F> {
    n_in: usize,
    n_out: usize,
    /// `n_out x n_in`, row-major.
    w: Vec<F>,
    b: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F: Real> {
    config: AnnConfig,
    scaler: Standardizer<F>,
    layers: Vec<Layer<F>>,
    loss_history: Vec<F>,
}

impl<F: Real> Mlp<F> {
    /// Xavier-uniform weights and zero biases, with an identity input scaler.
    pub fn init(n_inputs: usize, config: &AnnConfig) -> Result<Self> {
        if config.hidden_sizes.is_empty() {
            return Err(Error::InvalidConfig(
                "ann needs at least one hidden layer; use logr for a linear model".into(),
            ));
        }
        if n_inputs == 0 || config.hidden_sizes.contains(&0) {
            return Err(Error::InvalidConfig("ann layer widths must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut sizes = vec![n_inputs];
        sizes.extend(&config.hidden_sizes);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                Layer {
                    n_in,
                    n_out,
                    w: (0..n_in * n_out)
                        .map(|_| F::of(rng.random_range(-limit..limit)))
                        .collect(),
                    b: vec![F::zero(); n_out],
                }
            })
            .collect();
        Ok(Mlp {
            config: config.clone(),
            scaler: Standardizer::identity(n_inputs),
            layers,
            loss_history: Vec::new(),
        })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All weights then biases, layer by layer.
    pub fn params(&self) -> Vec<F> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[F]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                p.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Mean epoch training loss.
    pub fn loss_history(&self) -> &[F] {
        &self.loss_history
    }

    /// Activations of every layer; the last entry holds the output logit.
    fn forward(&self, x: &[F]) -> Vec<Vec<F>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let a = acts.last().expect("input present");
            let z: Vec<F> = (0..l.n_out)
                .map(|o| {
                    l.w[o * l.n_in..(o + 1) * l.n_in]
                        .iter()
                        .zip(a)
                        .map(|(&w, &v)| w * v)
                        .sum::<F>()
                        + l.b[o]
                })
                .collect();
            acts.push(if li == last {
                z
            } else {
                z.into_iter().map(|v| self.config.activation.apply(v)).collect()
            });
        }
        acts
    }

    fn logit(&self, x: &[F]) -> F {
        self.forward(&self.scaler.transform_row(x))
            .last()
            .expect("output layer")[0]
    }

    /// Mean logistic loss over `xs` (row-major raw features).
    pub fn loss(&self, xs: &[F], labels: &[bool]) -> F {
        let d = self.layers[0].n_in;
        let total: F = xs
            .chunks_exact(d)
            .zip(labels)
            .map(|(x, &y)| {
                let z = self.logit(x);
                softplus(z) - if y { z } else { F::zero() }
            })
            .sum();
        total / F::count(labels.len().max(1))
    }

    /// Gradient of [`Self::loss`] in [`Self::params`] order.
    pub fn gradient(&self, xs: &[F], labels: &[bool]) -> Vec<F> {
        let d = self.layers[0].n_in;
        let mut gw: Vec<Vec<F>> = self.layers.iter().map(|l| vec![F::zero(); l.w.len()]).collect();
        let mut gb: Vec<Vec<F>> = self.layers.iter().map(|l| vec![F::zero(); l.b.len()]).collect();
        for (x, &y) in xs.chunks_exact(d).zip(labels) {
            let acts = self.forward(&self.scaler.transform_row(x));
            let out = acts.last().expect("output layer")[0];
            let mut delta = vec![out.sigmoid() - if y { F::one() } else { F::zero() }];
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                let a_prev = &acts[li];
                for o in 0..l.n_out {
                    gb[li][o] = gb[li][o] + delta[o];
                    let row = &mut gw[li][o * l.n_in..(o + 1) * l.n_in];
                    for (g, &a) in row.iter_mut().zip(a_prev) {
                        *g = *g + delta[o] * a;
                    }
                }
                if li > 0 {
                    delta = (0..l.n_in)
                        .map(|i| {
                            let back: F = (0..l.n_out).map(|o| l.w[o * l.n_in + i] * delta[o]).sum();
                            back * self.config.activation.derivative(a_prev[i])
                        })
                        .collect();
                }
            }
        }
        let n = F::count(labels.len().max(1));
        gw.into_iter()
            .zip(gb)
            .flat_map(|(w, b)| w.into_iter().chain(b))
            .map(|g| g / n)
            .collect()
    }
}

impl<F: Real> ProbClassifier<F> for Mlp<F> {
    fn name(&self) -> &str {
        "ann"
    }

    fn hyperparameters(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(&self.config) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        }
    }

    fn n_features(&self) -> Option<usize> {
        Some(self.layers[0].n_in)
    }

    fn predict_row(&self, x: &[F]) -> F {
        self.logit(x).sigmoid()
    }
}

pub fn ann_fit<F: Real>(train: &FeatureMatrix<F>, config: &AnnConfig) -> Result<Mlp<F>> {
    if train.n_rows() == 0 {
        return Err(Error::Empty("ann training set".into()));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidConfig(
            "ann needs batch_size >= 1 and learning_rate > 0".into(),
        ));
    }
    let d = train.n_cols();
    let mut net = Mlp::init(d, config)?;
    let scaler = Standardizer::fit(train);
    let xs = scaler.transform(train);
    let labels = train.labels();
    let n = train.n_rows();
    let lr = F::of(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut params = net.params();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = F::zero();
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<F> = batch
                .iter()
                .flat_map(|&r| xs[r * d..(r + 1) * d].iter().copied())
                .collect();
            let by: Vec<bool> = batch.iter().map(|&r| labels[r]).collect();
            let loss = net.loss(&bx, &by);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "ann loss became {loss} in epoch {epoch}"
                )));
            }
            epoch_loss = epoch_loss + loss * F::count(batch.len());
            let g = net.gradient(&bx, &by);
            params.iter_mut().zip(&g).for_each(|(p, &g)| *p = *p - lr * g);
            net.set_params(&params)?;
        }
        let mean = epoch_loss / F::count(n);
        if !mean.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged(format!(
                "ann parameters became non-finite in epoch {epoch}"
            )));
        }
        net.loss_history.push(mean);
    }
    net.scaler = scaler;
    Ok(net)
}
