//! Single-hidden-layer regression network for cell output currents.
//!
//! A network maps node voltages to a compressed current value: inputs are
//! z-score normalized, pushed through one `tanh` layer, the scalar output is
//! de-normalized, and the compression transform is inverted to recover
//! amperes. The module provides the forward pass, exact analytic gradients,
//! full-batch Adam training, an ascending hidden-size search that keeps the
//! smallest network meeting a waveform-accuracy threshold, and the
//! core-count/latency figures a data-parallel deployment of such a network
//! needs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::celllib::{CellKind, TechnologyParams};
use crate::characterize::{sample_dataset, split_dataset, Dataset, Transform};
use crate::engine::{reference_simulate, simulate, ModelSet, SimConfig, Stimulus};
use crate::error::{Error, Result};
use crate::metrics::e_sim;
use crate::netlist::MappedCircuit;

/// Smallest hidden size the default search tries.
pub const HIDDEN_MIN: usize = 5;
/// Largest hidden size the default search tries.
pub const HIDDEN_MAX: usize = 40;
/// Default accuracy threshold for the search: maximum waveform error over
/// the noisy suite must fall below 1%.
pub const DEFAULT_SEARCH_THRESHOLD: f64 = 0.01;

/// Optimizer and initialization settings for [`train`].
///
/// Training is plain Adam over mean squared error in the normalized target
/// space. The default batch size covers any dataset, so updates are
/// full-batch and the whole procedure is deterministic given `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate applied on the last epoch. The rate holds at
    /// `learning_rate` for the first half of the run, then decays
    /// geometrically to this value by the final epoch; setting it equal to
    /// `learning_rate` keeps the rate constant throughout. The decaying tail
    /// quenches the late-run parameter dither that a fixed-rate Adam never
    /// escapes, which is worth more than an order of magnitude of final
    /// loss on the current corpora.
    pub final_learning_rate: f64,
    pub epochs: usize,
    /// Samples per optimizer step; values at or above the dataset size give
    /// one full-batch update per epoch. Mini-batches are consumed in dataset
    /// order (no shuffling), keeping runs reproducible.
    pub batch_size: usize,
    /// Seed for weight initialization.
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            final_learning_rate: 1e-3,
            epochs: 2000,
            batch_size: usize::MAX,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.final_learning_rate.is_finite() && self.final_learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "final learning rate must be positive, got {}",
                self.final_learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch count must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::Config(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Provenance of a trained model: how it was produced and how far the loss
/// moved. Losses are mean squared error in the normalized target space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    /// Full-batch MSE before the first update.
    pub initial_loss: f64,
    /// Full-batch MSE after the first epoch's updates.
    pub first_epoch_loss: f64,
    /// Full-batch MSE after the last epoch's updates.
    pub final_loss: f64,
}

/// One-hidden-layer network with `tanh` activation.
///
/// Weight layout is row-major: `w1[k*d_in + j]` connects input `j` to hidden
/// unit `k`; `w2[k]` connects hidden unit `k` to the scalar output.
/// `input_mean`/`input_std` and `target_mean`/`target_std` hold the z-score
/// statistics of the training split; `transform` is the compression applied
/// to currents before regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub kind: CellKind,
    pub transform: Transform,
    pub d_in: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub meta: TrainingMeta,
}

impl MlpModel {
    pub fn validate(&self) -> Result<()> {
        self.transform.validate()?;
        if self.d_in == 0 || self.hidden == 0 {
            return Err(Error::Contract(format!(
                "network shape must be positive, got {} inputs and {} hidden units",
                self.d_in, self.hidden
            )));
        }
        let shapes = [
            ("w1", self.w1.len(), self.hidden * self.d_in),
            ("b1", self.b1.len(), self.hidden),
            ("w2", self.w2.len(), self.hidden),
            ("input_mean", self.input_mean.len(), self.d_in),
            ("input_std", self.input_std.len(), self.d_in),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Contract(format!(
                    "{name} holds {got} entries but the shape requires {want}"
                )));
            }
        }
        let all_finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain([&self.b2, &self.target_mean, &self.target_std])
            .chain(&self.input_mean)
            .chain(&self.input_std)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Contract("model contains a non-finite parameter".into()));
        }
        if self.input_std.iter().any(|&s| s <= 0.0) || self.target_std <= 0.0 {
            return Err(Error::Contract(
                "normalization standard deviations must be positive".into(),
            ));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d_in {
            return Err(Error::Contract(format!(
                "{} network takes {} inputs, got {}",
                self.kind,
                self.d_in,
                x.len()
            )));
        }
        Ok(())
    }

    /// Network output in the normalized target space (no de-normalization,
    /// no transform inversion). `x` is in raw volts.
    pub fn forward_normalized(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut acc = self.b2;
        for k in 0..self.hidden {
            let mut pre = self.b1[k];
            for j in 0..self.d_in {
                let xn = (x[j] - self.input_mean[j]) / self.input_std[j];
                pre += self.w1[k * self.d_in + j] * xn;
            }
            acc += self.w2[k] * pre.tanh();
        }
        Ok(acc)
    }

    /// Predicted output current in amperes at node voltages `x`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let y_norm = self.forward_normalized(x)?;
        let y = y_norm * self.target_std + self.target_mean;
        Ok(self.transform.invert(y))
    }

    /// Element-wise [`forward`] over a batch of rows.
    pub fn forward_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.forward(r)).collect()
    }

    /// Cores needed to evaluate one instance fully in parallel: one
    /// multiplier per first-layer weight, `d_in × hidden`.
    pub fn core_requirement(&self) -> Result<usize> {
        if self.d_in == 0 || self.hidden == 0 {
            return Err(Error::Contract(format!(
                "core requirement is defined for positive shapes, got {}x{}",
                self.d_in, self.hidden
            )));
        }
        Ok(self.d_in * self.hidden)
    }

    /// Pipeline depth in cycles to evaluate this network, see
    /// [`gpu_latency_cycles`].
    pub fn latency_cycles(&self) -> Result<usize> {
        gpu_latency_cycles(self.d_in, self.hidden)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Contract(format!("model serialization failed: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: MlpModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("not a valid model file: {e}"),
        })?;
        model.validate()?;
        Ok(model)
    }
}

/// Gradient of one sample's squared error `(prediction − target)²` with
/// respect to every parameter, in the normalized target space. Layout
/// matches [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl ParamGradient {
    fn zeros(d_in: usize, hidden: usize) -> Self {
        ParamGradient {
            w1: vec![0.0; hidden * d_in],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }
}

/// Exact backpropagation gradient of `(forward_normalized(x) − y_target)²`.
/// `x` is in raw volts; `y_target` lives in the normalized target space.
pub fn gradient(m: &MlpModel, x: &[f64], y_target: f64) -> Result<ParamGradient> {
    m.check_input(x)?;
    let d = m.d_in;
    let h = m.hidden;
    let mut xn = vec![0.0; d];
    for j in 0..d {
        xn[j] = (x[j] - m.input_mean[j]) / m.input_std[j];
    }
    let mut act = vec![0.0; h];
    let mut pred = m.b2;
    for k in 0..h {
        let mut pre = m.b1[k];
        for j in 0..d {
            pre += m.w1[k * d + j] * xn[j];
        }
        act[k] = pre.tanh();
        pred += m.w2[k] * act[k];
    }
    let r2 = 2.0 * (pred - y_target);
    let mut grad = ParamGradient::zeros(d, h);
    grad.b2 = r2;
    for k in 0..h {
        grad.w2[k] = r2 * act[k];
        let through = r2 * m.w2[k] * (1.0 - act[k] * act[k]);
        grad.b1[k] = through;
        for j in 0..d {
            grad.w1[k * d + j] = through * xn[j];
        }
    }
    Ok(grad)
}

fn column_stats(rows: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in rows {
        for j in 0..dim {
            mean[j] += row[j];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; dim];
    for row in rows {
        for j in 0..dim {
            let d = row[j] - mean[j];
            std[j] += d * d;
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            // A constant column carries no signal; unit scale keeps the
            // z-score finite and the column inert.
            *s = 1.0;
        }
    }
    (mean, std)
}

fn scalar_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std == 0.0 { 1.0 } else { std })
}

/// Train a network of `hidden` units on `data` with Adam. Normalization
/// statistics come from `data` itself, so callers pass the training split
/// only. Deterministic given `cfg.seed`.
pub fn train(data: &Dataset, hidden: usize, cfg: &TrainConfig) -> Result<MlpModel> {
    data.validate()?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Contract("training dataset is empty".into()));
    }
    if hidden == 0 {
        return Err(Error::Contract("hidden size must be at least 1".into()));
    }
    let d = data.kind.eval_dim();
    let n = data.len();

    let (input_mean, input_std) = column_stats(&data.inputs, d);
    let (target_mean, target_std) = scalar_stats(&data.targets);
    let xn: Vec<Vec<f64>> = data
        .inputs
        .iter()
        .map(|row| {
            (0..d)
                .map(|j| (row[j] - input_mean[j]) / input_std[j])
                .collect()
        })
        .collect();
    let yn: Vec<f64> = data
        .targets
        .iter()
        .map(|t| (t - target_mean) / target_std)
        .collect();

    // Parameter vector layout: w1 row-major, b1, w2, b2.
    let n_params = hidden * d + hidden + hidden + 1;
    let (w1_at, b1_at, w2_at, b2_at) = (0, hidden * d, hidden * d + hidden, n_params - 1);
    let mut params = vec![0.0; n_params];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound1 = 1.0 / (d as f64).sqrt();
    for p in &mut params[w1_at..w2_at] {
        *p = rng.random_range(-bound1..=bound1);
    }
    let bound2 = 1.0 / (hidden as f64).sqrt();
    for p in &mut params[w2_at..] {
        *p = rng.random_range(-bound2..=bound2);
    }

    let mut act = vec![0.0; hidden];
    let predict = |params: &[f64], x: &[f64], act: &mut [f64]| -> f64 {
        let mut acc = params[b2_at];
        for k in 0..hidden {
            let mut pre = params[b1_at + k];
            for j in 0..d {
                pre += params[w1_at + k * d + j] * x[j];
            }
            act[k] = pre.tanh();
            acc += params[w2_at + k] * act[k];
        }
        acc
    };
    let mse = |params: &[f64], act: &mut [f64]| -> f64 {
        let mut acc = 0.0;
        for (x, &y) in xn.iter().zip(&yn) {
            let r = predict(params, x, act) - y;
            acc += r * r;
        }
        acc / n as f64
    };

    let initial_loss = mse(&params, &mut act);
    let mut adam_m = vec![0.0; n_params];
    let mut adam_v = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut step = 0usize;
    let mut first_epoch_loss = initial_loss;
    let mut final_loss = initial_loss;
    let batch = cfg.batch_size.min(n);

    let lr_ratio = cfg.final_learning_rate / cfg.learning_rate;
    // Hold phase: full rate while the optimizer still travels. Decay phase:
    // geometric taper hitting exactly `final_learning_rate` on the last epoch.
    let hold = cfg.epochs / 2;
    for epoch in 1..=cfg.epochs {
        let frac = if epoch <= hold {
            0.0
        } else {
            (epoch - hold) as f64 / (cfg.epochs - hold) as f64
        };
        let lr = cfg.learning_rate * lr_ratio.powf(frac);
        let mut start = 0;
        while start < n {
            let end = (start + batch).min(n);
            grad.fill(0.0);
            for idx in start..end {
                let x = &xn[idx];
                let mut acc = params[b2_at];
                for k in 0..hidden {
                    let mut pre = params[b1_at + k];
                    for j in 0..d {
                        pre += params[w1_at + k * d + j] * x[j];
                    }
                    act[k] = pre.tanh();
                    acc += params[w2_at + k] * act[k];
                }
                let r2 = 2.0 * (acc - yn[idx]);
                grad[b2_at] += r2;
                for k in 0..hidden {
                    grad[w2_at + k] += r2 * act[k];
                    let through = r2 * params[w2_at + k] * (1.0 - act[k] * act[k]);
                    grad[b1_at + k] += through;
                    for j in 0..d {
                        grad[w1_at + k * d + j] += through * x[j];
                    }
                }
            }
            let inv_len = 1.0 / (end - start) as f64;
            step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(step as i32);
            let bc2 = 1.0 - cfg.beta2.powi(step as i32);
            for p in 0..n_params {
                let g = grad[p] * inv_len;
                adam_m[p] = cfg.beta1 * adam_m[p] + (1.0 - cfg.beta1) * g;
                adam_v[p] = cfg.beta2 * adam_v[p] + (1.0 - cfg.beta2) * g * g;
                let m_hat = adam_m[p] / bc1;
                let v_hat = adam_v[p] / bc2;
                params[p] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
            start = end;
        }
        let loss = mse(&params, &mut act);
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("loss became {loss} with learning rate {lr}"),
            });
        }
        if epoch == 1 {
            first_epoch_loss = loss;
        }
        final_loss = loss;
    }

    let model = MlpModel {
        kind: data.kind,
        transform: data.transform,
        d_in: d,
        hidden,
        w1: params[w1_at..b1_at].to_vec(),
        b1: params[b1_at..w2_at].to_vec(),
        w2: params[w2_at..b2_at].to_vec(),
        b2: params[b2_at],
        input_mean,
        input_std,
        target_mean,
        target_std,
        meta: TrainingMeta {
            seed: cfg.seed,
            epochs: cfg.epochs,
            initial_loss,
            first_epoch_loss,
            final_loss,
        },
    };
    model.validate()?;
    Ok(model)
}

fn ceil_log2(n: usize) -> usize {
    debug_assert!(n >= 2);
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

/// Cycles to evaluate one single-hidden-layer network when every multiplier
/// runs on its own core: one multiply wave, an adder tree over the `d_in`
/// products plus bias, one multiply wave for the output layer, and an adder
/// tree over the `hidden` products plus bias:
/// `1 + ⌈log₂(d_in+1)⌉ + 1 + ⌈log₂(hidden+1)⌉`.
pub fn gpu_latency_cycles(d_in: usize, hidden: usize) -> Result<usize> {
    if d_in == 0 || hidden == 0 {
        return Err(Error::Contract(format!(
            "latency is defined for positive shapes, got {d_in}x{hidden}"
        )));
    }
    Ok(1 + ceil_log2(d_in + 1) + 1 + ceil_log2(hidden + 1))
}

/// The hidden sizes the default search sweeps, ascending.
pub fn default_hidden_sizes() -> Vec<usize> {
    (HIDDEN_MIN..=HIDDEN_MAX).collect()
}

/// One row per attempted hidden size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub rows: Vec<SearchRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub hidden: usize,
    pub max_e_sim: f64,
}

/// Everything [`architecture_search`] needs besides the candidate sizes and
/// the stimulus suite: how to sample and split the training corpus, how to
/// train each candidate, and how to run the accuracy simulations.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// A candidate passes when its maximum waveform error over the suite is
    /// strictly below this ratio.
    pub threshold: f64,
    /// Rows sampled for the training corpus.
    pub samples: usize,
    pub train_fraction: f64,
    pub data_seed: u64,
    pub transform: Transform,
    pub train: TrainConfig,
    pub sim: SimConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            threshold: DEFAULT_SEARCH_THRESHOLD,
            samples: 2000,
            train_fraction: 0.9,
            data_seed: 7,
            transform: Transform::default(),
            // The sub-percent regime needs the longer schedule: mini-batches
            // break Adam's full-batch limit cycle and the decaying tail lets
            // the loss settle 20-40x below the constant-rate floor.
            train: TrainConfig {
                epochs: 6000,
                batch_size: 225,
                final_learning_rate: 1e-6,
                ..TrainConfig::default()
            },
            sim: SimConfig::default(),
        }
    }
}

/// Train candidates in ascending hidden-size order and keep the first whose
/// maximum waveform error over `noisy_suite` — network-backed simulation of a
/// lone `kind` cell against the fine-step analytic reference — falls below
/// `cfg.threshold`. The report lists every size attempted; if none passes,
/// the failure carries the full report.
pub fn architecture_search(
    kind: CellKind,
    tech: &TechnologyParams,
    sizes: &[usize],
    noisy_suite: &[Stimulus],
    cfg: &SearchConfig,
) -> Result<(MlpModel, SearchReport)> {
    tech.validate()?;
    cfg.train.validate()?;
    if sizes.is_empty() {
        return Err(Error::Contract("no candidate hidden sizes supplied".into()));
    }
    if !sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Contract(
            "candidate hidden sizes must be strictly ascending".into(),
        ));
    }
    if sizes[0] == 0 {
        return Err(Error::Contract("hidden sizes must be positive".into()));
    }
    if noisy_suite.is_empty() {
        return Err(Error::Contract("the stimulus suite is empty".into()));
    }
    if !(cfg.threshold.is_finite() && cfg.threshold >= 0.0) {
        return Err(Error::Contract(format!(
            "threshold must be a non-negative ratio, got {}",
            cfg.threshold
        )));
    }

    let circuit = MappedCircuit::single_cell(kind);
    let dataset = sample_dataset(kind, tech, cfg.transform, cfg.samples, cfg.data_seed)?;
    let (train_split, _holdout) = split_dataset(&dataset, cfg.train_fraction, cfg.data_seed)?;

    // The analytic reference per stimulus is the same for every candidate.
    let references: Vec<_> = noisy_suite
        .iter()
        .map(|stim| {
            let set = reference_simulate(&circuit, stim, &cfg.sim, tech)?;
            set.waveform("y")
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &hidden in sizes {
        let model = train(&train_split, hidden, &cfg.train)?;
        let models = ModelSet::analytic().with_nn(model.clone())?;
        let mut max_e = 0.0f64;
        for (stim, reference) in noisy_suite.iter().zip(&references) {
            let (waves, _trace) = simulate(&circuit, stim, &cfg.sim, tech, &models)?;
            let e = e_sim(reference, &waves.waveform("y")?, tech.v_dd)?;
            max_e = max_e.max(e);
        }
        rows.push(SearchRow { hidden, max_e_sim: max_e });
        if max_e < cfg.threshold {
            return Ok((model, SearchReport { rows }));
        }
    }
    Err(Error::SearchFailed { report: SearchReport { rows } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_model(kind: CellKind, d_in: usize, hidden: usize) -> MlpModel {
        MlpModel {
            kind,
            transform: Transform::Identity,
            d_in,
            hidden,
            w1: vec![0.0; hidden * d_in],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            input_mean: vec![0.0; d_in],
            input_std: vec![1.0; d_in],
            target_mean: 0.0,
            target_std: 1.0,
            meta: TrainingMeta {
                seed: 0,
                epochs: 0,
                initial_loss: 0.0,
                first_epoch_loss: 0.0,
                final_loss: 0.0,
            },
        }
    }

    fn seeded_model(kind: CellKind, d_in: usize, hidden: usize, seed: u64) -> MlpModel {
        let mut m = identity_model(kind, d_in, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in m.w1.iter_mut().chain(&mut m.b1).chain(&mut m.w2) {
            *w = rng.random_range(-0.8..=0.8);
        }
        m.b2 = rng.random_range(-0.8..=0.8);
        m
    }

    #[test]
    fn output_bias_network_returns_the_bias_current() {
        let transform = Transform::default();
        let mut m = identity_model(CellKind::Inv, 2, 3);
        m.transform = transform;
        m.b2 = transform.apply(5e-6);
        let i = m.forward(&[0.3, 0.6]).unwrap();
        assert_relative_eq!(i, 5e-6, max_relative = 1e-12);
    }

    #[test]
    fn hand_computed_single_unit_forward() {
        let mut m = identity_model(CellKind::Inv, 1, 1);
        m.w1 = vec![1.0];
        m.w2 = vec![1.0];
        let y = m.forward(&[0.5]).unwrap();
        assert_relative_eq!(y, 0.46211715726, max_relative = 1e-10);
        assert_relative_eq!(y, 0.5f64.tanh(), max_relative = 1e-15);
    }

    #[test]
    fn forward_batch_matches_elementwise() {
        let m = seeded_model(CellKind::Nand2, 3, 7, 11);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![0.03 * i as f64, 0.7 - 0.02 * i as f64, 0.01 * i as f64])
            .collect();
        let batch = m.forward_batch(&rows).unwrap();
        for (row, out) in rows.iter().zip(&batch) {
            assert_eq!(m.forward(row).unwrap().to_bits(), out.to_bits());
        }
    }

    #[test]
    fn hidden_unit_permutation_leaves_forward_unchanged() {
        let m = seeded_model(CellKind::Inv, 2, 5, 3);
        let perm = [3usize, 0, 4, 1, 2];
        let mut p = m.clone();
        for (new_k, &old_k) in perm.iter().enumerate() {
            for j in 0..m.d_in {
                p.w1[new_k * m.d_in + j] = m.w1[old_k * m.d_in + j];
            }
            p.b1[new_k] = m.b1[old_k];
            p.w2[new_k] = m.w2[old_k];
        }
        for a in 0..=20 {
            for b in 0..=20 {
                let x = [-0.14 + 0.049 * a as f64, -0.14 + 0.049 * b as f64];
                let y0 = m.forward(&x).unwrap();
                let y1 = p.forward(&x).unwrap();
                assert!((y0 - y1).abs() <= 1e-12 * y0.abs().max(1.0));
            }
        }
    }

    #[test]
    fn forward_is_finite_and_bounded_on_a_dense_box() {
        let m = seeded_model(CellKind::Inv, 2, 9, 21);
        // |normalized output| can never exceed the l1 mass of the output layer.
        let bound = m.w2.iter().map(|w| w.abs()).sum::<f64>() + m.b2.abs();
        for a in 0..=40 {
            for b in 0..=40 {
                let x = [-0.2 + 0.026 * a as f64, -0.2 + 0.026 * b as f64];
                let y = m.forward_normalized(&x).unwrap();
                assert!(y.is_finite() && y.abs() <= bound + 1e-12);
                assert!(m.forward(&x).unwrap().is_finite());
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let m = identity_model(CellKind::Inv, 2, 2);
        assert!(matches!(m.forward(&[0.1]), Err(Error::Contract(_))));
        assert!(matches!(gradient(&m, &[0.1, 0.2, 0.3], 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_network_gradient_vanishes_at_bias_target() {
        let mut m = identity_model(CellKind::Inv, 2, 4);
        m.b2 = 0.37;
        let g = gradient(&m, &[0.2, 0.5], 0.37).unwrap();
        assert_eq!(g.b2, 0.0);
        assert!(g.w1.iter().all(|&v| v == 0.0));
        assert!(g.b1.iter().all(|&v| v == 0.0));
        assert!(g.w2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_bias_gradient_is_twice_the_residual() {
        let m = seeded_model(CellKind::Inv, 2, 5, 9);
        let x = [0.31, 0.66];
        let y_target = 0.12;
        let pred = m.forward_normalized(&x).unwrap();
        let g = gradient(&m, &x, y_target).unwrap();
        assert_relative_eq!(g.b2, 2.0 * (pred - y_target), max_relative = 1e-14);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let m = seeded_model(CellKind::Nand2, 3, 4, 17);
        let samples = [
            (vec![0.1, 0.6, 0.3], 0.4),
            (vec![0.7, 0.0, 0.5], -0.3),
            (vec![0.35, 0.35, 0.1], 0.9),
        ];
        let h = 1e-6;
        for (x, y) in &samples {
            let g = gradient(&m, x, *y).unwrap();
            let analytic: Vec<f64> = g
                .w1
                .iter()
                .chain(&g.b1)
                .chain(&g.w2)
                .chain(std::iter::once(&g.b2))
                .copied()
                .collect();
            let n_params = analytic.len();
            for p in 0..n_params {
                let probe = |delta: f64| -> f64 {
                    let mut mm = m.clone();
                    let slot: &mut f64 = if p < mm.w1.len() {
                        &mut mm.w1[p]
                    } else if p < mm.w1.len() + mm.b1.len() {
                        let i = p - mm.w1.len();
                        &mut mm.b1[i]
                    } else if p < mm.w1.len() + mm.b1.len() + mm.w2.len() {
                        let i = p - mm.w1.len() - mm.b1.len();
                        &mut mm.w2[i]
                    } else {
                        &mut mm.b2
                    };
                    *slot += delta;
                    let r = mm.forward_normalized(x).unwrap() - y;
                    r * r
                };
                let fd = (probe(h) - probe(-h)) / (2.0 * h);
                let denom = analytic[p].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (analytic[p] - fd).abs() / denom <= 1e-4,
                    "param {p}: analytic {} vs finite difference {fd}",
                    analytic[p]
                );
            }
        }
    }

    fn constant_dataset(c: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.random_range(0.0..=0.7), rng.random_range(0.0..=0.7)])
            .collect();
        Dataset {
            kind: CellKind::Inv,
            transform: Transform::Identity,
            seed: 5,
            targets: vec![c; inputs.len()],
            inputs,
        }
    }

    #[test]
    fn training_fits_a_constant_target() {
        let data = constant_dataset(3.0);
        let model = train(&data, 4, &TrainConfig::default()).unwrap();
        // The fixed-rate optimizer dithers around the optimum at the scale
        // of its step size, so ask for 1% of the normalized scale, not
        // machine precision.
        for row in &data.inputs {
            assert!((model.forward(row).unwrap() - 3.0).abs() < 1e-2);
        }
        assert!(model.meta.final_loss < model.meta.initial_loss);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let tech = TechnologyParams::default();
        let data =
            sample_dataset(CellKind::Inv, &tech, Transform::default(), 60, 31).unwrap();
        let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
        let a = train(&data, 6, &cfg).unwrap();
        let b = train(&data, 6, &cfg).unwrap();
        assert_eq!(a, b);
        let other = train(&data, 6, &TrainConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.w1, other.w1);
    }

    #[test]
    fn training_reduces_the_loss_on_the_standard_inverter_corpus() {
        let tech = TechnologyParams::default();
        let data =
            sample_dataset(CellKind::Inv, &tech, Transform::default(), 500, 7).unwrap();
        let (train_split, _) = split_dataset(&data, 0.9, 7).unwrap();
        assert_eq!(train_split.len(), 450);
        let model = train(&train_split, 10, &TrainConfig::default()).unwrap();
        assert!(model.meta.final_loss <= model.meta.first_epoch_loss);
        assert!(
            model.meta.final_loss * 10.0 <= model.meta.initial_loss,
            "final {} vs initial {}",
            model.meta.final_loss,
            model.meta.initial_loss
        );
    }

    #[test]
    fn heldout_error_stays_close_to_the_training_error() {
        let tech = TechnologyParams::default();
        let data =
            sample_dataset(CellKind::Inv, &tech, Transform::default(), 500, 7).unwrap();
        let (train_split, holdout) = split_dataset(&data, 0.9, 7).unwrap();
        let model = train(&train_split, 10, &TrainConfig::default()).unwrap();
        let mae = |ds: &Dataset| -> f64 {
            let mut acc = 0.0;
            for (x, &t) in ds.inputs.iter().zip(&ds.targets) {
                let pred = model.forward_normalized(x).unwrap() * model.target_std
                    + model.target_mean;
                acc += (pred - t).abs();
            }
            acc / ds.len() as f64
        };
        let train_mae = mae(&train_split);
        let holdout_mae = mae(&holdout);
        assert!(
            holdout_mae <= 2.0 * train_mae,
            "holdout {holdout_mae} vs train {train_mae}"
        );
    }

    #[test]
    fn divergence_reports_the_failing_epoch() {
        let tech = TechnologyParams::default();
        let data =
            sample_dataset(CellKind::Inv, &tech, Transform::default(), 50, 3).unwrap();
        let cfg = TrainConfig { learning_rate: 1e160, epochs: 10, ..TrainConfig::default() };
        match train(&data, 3, &cfg) {
            Err(Error::Training { epoch, .. }) => assert!(epoch >= 1 && epoch <= 10),
            other => panic!("expected training divergence, got {other:?}"),
        }
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let empty = Dataset {
            kind: CellKind::Inv,
            transform: Transform::Identity,
            seed: 0,
            inputs: vec![],
            targets: vec![],
        };
        assert!(matches!(
            train(&empty, 3, &TrainConfig::default()),
            Err(Error::Contract(_))
        ));
        let data = constant_dataset(1.0);
        assert!(matches!(
            train(&data, 0, &TrainConfig::default()),
            Err(Error::Contract(_))
        ));
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(matches!(train(&data, 3, &bad), Err(Error::Config(_))));
        let bad = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(train(&data, 3, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn latency_matches_the_pipeline_formula() {
        assert_eq!(gpu_latency_cycles(2, 9).unwrap(), 8);
        assert_eq!(gpu_latency_cycles(1, 1).unwrap(), 4);
        assert_eq!(gpu_latency_cycles(3, 21).unwrap(), 9);
        assert_eq!(gpu_latency_cycles(2, 10).unwrap(), 8);
        assert_eq!(gpu_latency_cycles(3, 20).unwrap(), 9);
        assert_eq!(gpu_latency_cycles(4, 20).unwrap(), 10);
        assert!(matches!(gpu_latency_cycles(0, 5), Err(Error::Contract(_))));
        assert!(matches!(gpu_latency_cycles(5, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn latency_is_monotone_in_both_shape_parameters() {
        for d in 1..=8usize {
            for h in 1..=64usize {
                let here = gpu_latency_cycles(d, h).unwrap();
                assert!(gpu_latency_cycles(d + 1, h).unwrap() >= here);
                assert!(gpu_latency_cycles(d, h + 1).unwrap() >= here);
            }
        }
    }

    #[test]
    fn core_requirement_is_the_weight_count_of_the_first_layer() {
        let m = identity_model(CellKind::Inv, 2, 9);
        assert_eq!(m.core_requirement().unwrap(), 18);
        let m = identity_model(CellKind::Nand2, 3, 20);
        assert_eq!(m.core_requirement().unwrap(), 60);
        let mut broken = identity_model(CellKind::Inv, 2, 1);
        broken.hidden = 0;
        assert!(matches!(broken.core_requirement(), Err(Error::Contract(_))));
    }

    #[test]
    fn model_json_round_trips_bit_exactly() {
        let tech = TechnologyParams::default();
        let data =
            sample_dataset(CellKind::Nor2, &tech, Transform::default(), 60, 13).unwrap();
        let cfg = TrainConfig { epochs: 30, ..TrainConfig::default() };
        let model = train(&data, 5, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nor2.json");
        model.save_json(&path).unwrap();
        let reloaded = MlpModel::load_json(&path).unwrap();
        assert_eq!(model, reloaded);

        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(MlpModel::load_json(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn default_size_sweep_covers_thirty_six_candidates() {
        let sizes = default_hidden_sizes();
        assert_eq!(sizes.len(), 36);
        assert_eq!(sizes[0], 5);
        assert_eq!(*sizes.last().unwrap(), 40);
    }

    #[test]
    fn search_rejects_malformed_requests() {
        let tech = TechnologyParams::default();
        let cfg = SearchConfig::default();
        let err = architecture_search(CellKind::Inv, &tech, &[], &[], &cfg);
        assert!(matches!(err, Err(Error::Contract(_))));
        let err = architecture_search(CellKind::Inv, &tech, &[5, 5], &[], &cfg);
        assert!(matches!(err, Err(Error::Contract(_))));
    }
}
