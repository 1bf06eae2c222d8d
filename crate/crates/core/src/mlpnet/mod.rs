//! Two-branch dense ReLU network: branch A reads eight features, branch B
//! reads the sun-patch feature, their outputs are concatenated into a head
//! that ends in one output node.

pub mod kernel;
mod model;
mod train;

pub use model::{load_model, save_model, Model, ModelMetadata, MODEL_FORMAT_VERSION};
pub use train::{
    build_training_rows, train, train_on_rows, EpochRecord, History, TrainConfig, TrainingRows,
};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoding::{feature, N_FEATURES};
use crate::error::{Error, Result};

/// Feature columns consumed by branch A, in order.
pub const BRANCH_A_FEATURES: [usize; 8] = [
    feature::PX,
    feature::PY,
    feature::ALTITUDE,
    feature::AZIMUTH,
    feature::DNI,
    feature::DHI,
    feature::AVG,
    feature::SKYMAP,
];
/// Feature column consumed by branch B.
pub const BRANCH_B_FEATURE: usize = feature::SUNPATCH;

/// Rows per chunk in forward/backward passes. Chunk partials are reduced in
/// chunk order, so results do not depend on the worker count.
pub const CHUNK_ROWS: usize = 4096;

/// Hidden-layer widths. Empty lists are allowed: an empty branch passes its
/// inputs straight to the head, and an empty head feeds the concatenation
/// straight to the output node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub branch_a: Vec<usize>,
    pub branch_b: Vec<usize>,
    pub head: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            branch_a: vec![600; 4],
            branch_b: vec![400],
            head: vec![600],
        }
    }
}

impl Architecture {
    /// `[64, 64, 64, 64 | 32 | 64]`.
    pub fn reduced() -> Self {
        Self {
            branch_a: vec![64; 4],
            branch_b: vec![32],
            head: vec![64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.branch_a.iter().chain(&self.branch_b).chain(&self.head);
        if all.copied().any(|w| w == 0) {
            return Err(Error::invalid("layer widths must be at least 1"));
        }
        Ok(())
    }

    fn branch_a_out(&self) -> usize {
        self.branch_a.last().copied().unwrap_or(BRANCH_A_FEATURES.len())
    }

    fn branch_b_out(&self) -> usize {
        self.branch_b.last().copied().unwrap_or(1)
    }

    /// Width of the concatenated layer.
    pub fn head_input(&self) -> usize {
        self.branch_a_out() + self.branch_b_out()
    }

    /// `(outputs, inputs)` of every layer: branch A, branch B, head, output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut chain = |widths: &[usize], mut input: usize| {
            for &w in widths {
                shapes.push((w, input));
                input = w;
            }
        };
        chain(&self.branch_a, BRANCH_A_FEATURES.len());
        chain(&self.branch_b, 1);
        chain(&self.head, self.head_input());
        let last = self.head.last().copied().unwrap_or(self.head_input());
        shapes.push((1, last));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(o, i)| o * (i + 1)).sum()
    }

    fn ranges(&self) -> [std::ops::Range<usize>; 3] {
        let a = self.branch_a.len();
        let b = a + self.branch_b.len();
        let h = b + self.head.len() + 1;
        [0..a, a..b, b..h]
    }
}

/// A dense layer: `weights` is `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weights.nrows(), self.weights.ncols())
    }

    fn add_assign(&mut self, other: &Layer) {
        self.weights += &other.weights;
        self.bias += &other.bias;
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Architecture plus parameters, layers ordered as in
/// [`Architecture::layer_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub architecture: Architecture,
    pub layers: Vec<Layer>,
}

/// He-normal weights (`σ = √(2/fan_in)`), zero biases.
pub fn init_network(arch: &Architecture, seed: u64) -> Result<Network> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .layer_shapes()
        .into_iter()
        .map(|(o, i)| {
            let normal = Normal::new(0.0, (2.0 / i as f64).sqrt()).expect("positive std");
            Layer {
                weights: Array2::from_shape_simple_fn((o, i), || normal.sample(&mut rng)),
                bias: Array1::zeros(o),
            }
        })
        .collect();
    Ok(Network {
        architecture: arch.clone(),
        layers,
    })
}

/// Activations of one chunk; `acts[c][0]` is chain `c`'s input.
struct Trace {
    acts: [Vec<Array2<f64>>; 3],
}

impl Trace {
    fn output(&self) -> &Array2<f64> {
        self.acts[2].last().expect("head chain has an output")
    }
}

fn dense_relu(x: &ArrayView2<'_, f64>, layer: &Layer) -> Array2<f64> {
    let mut z = x.dot(&layer.weights.t());
    z += &layer.bias;
    z.mapv_inplace(|v| v.max(0.0));
    z
}

fn chain_forward(layers: &[Layer], input: Array2<f64>) -> Vec<Array2<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(input);
    for layer in layers {
        let next = dense_relu(&acts.last().expect("nonempty").view(), layer);
        acts.push(next);
    }
    acts
}

/// Backpropagates `d_out` through a chain, writing parameter gradients and
/// returning the gradient with respect to the chain input when requested.
fn chain_backward(
    layers: &[Layer],
    acts: &[Array2<f64>],
    mut d_out: Array2<f64>,
    grads: &mut [Layer],
    need_input: bool,
) -> Option<Array2<f64>> {
    for i in (0..layers.len()).rev() {
        // ReLU(z) > 0 exactly when z > 0; the subgradient at 0 is 0.
        ndarray::Zip::from(&mut d_out)
            .and(&acts[i + 1])
            .for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
        grads[i].weights = d_out.t().dot(&acts[i]);
        grads[i].bias = d_out.sum_axis(Axis(0));
        if i > 0 || need_input {
            d_out = d_out.dot(&layers[i].weights);
        }
    }
    need_input.then_some(d_out)
}

impl Network {
    pub fn check_shapes(&self) -> Result<()> {
        self.architecture.validate()?;
        let shapes = self.architecture.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::format(format!(
                "architecture has {} layers, parameters have {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (k, ((o, i), layer)) in shapes.iter().zip(&self.layers).enumerate() {
            if layer.weights.dim() != (*o, *i) || layer.bias.len() != *o {
                return Err(Error::format(format!(
                    "layer {k}: expected {o}x{i} weights and {o} biases, found {:?} and {}",
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    fn split(&self) -> [&[Layer]; 3] {
        let [a, b, h] = self.architecture.ranges();
        [&self.layers[a], &self.layers[b], &self.layers[h]]
    }

    fn trace(&self, rows: ArrayView2<'_, f64>) -> Trace {
        let [la, lb, lh] = self.split();
        let xa = rows.select(Axis(1), &BRANCH_A_FEATURES);
        let xb = rows.slice(s![.., BRANCH_B_FEATURE..BRANCH_B_FEATURE + 1]).to_owned();
        let acts_a = chain_forward(la, xa);
        let acts_b = chain_forward(lb, xb);
        let head_in = ndarray::concatenate(
            Axis(1),
            &[acts_a.last().expect("input").view(), acts_b.last().expect("input").view()],
        )
        .expect("equal row counts");
        let acts_h = chain_forward(lh, head_in);
        Trace {
            acts: [acts_a, acts_b, acts_h],
        }
    }

    fn backward(&self, trace: &Trace, d_y: Array2<f64>) -> Vec<Layer> {
        let [la, lb, lh] = self.split();
        let [ra, rb, rh] = self.architecture.ranges();
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        let d_head = chain_backward(lh, &trace.acts[2], d_y, &mut grads[rh], true)
            .expect("input gradient requested");
        let wa = trace.acts[0].last().expect("input").ncols();
        let d_a = d_head.slice(s![.., ..wa]).to_owned();
        let d_b = d_head.slice(s![.., wa..]).to_owned();
        chain_backward(la, &trace.acts[0], d_a, &mut grads[ra], false);
        chain_backward(lb, &trace.acts[1], d_b, &mut grads[rb], false);
        grads
    }

    /// Predicted encoded luminance for each row (`n × 9` input).
    pub fn forward(&self, rows: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        check_rows(rows)?;
        let n = rows.nrows();
        let mut out = Array1::zeros(n);
        let chunks = chunk_ranges(n);
        let parts = map_chunks(&chunks, |r| {
            self.trace(rows.slice(s![r.clone(), ..])).output().column(0).to_owned()
        });
        for (r, part) in chunks.iter().zip(parts) {
            out.slice_mut(s![r.clone()]).assign(&part);
        }
        Ok(out)
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn gradients(
        &self,
        rows: ArrayView2<'_, f64>,
        targets: &[f64],
        omega: &[f64],
        lambda: f64,
    ) -> Result<(LossValue, Vec<Layer>)> {
        check_rows(rows)?;
        check_lengths(rows.nrows(), targets, omega)?;
        let chunks = chunk_ranges(rows.nrows());
        let traces = map_chunks(&chunks, |r| self.trace(rows.slice(s![r.clone(), ..])));
        let mut sums = LossSums::default();
        for (r, t) in chunks.iter().zip(&traces) {
            sums.add(t.output().column(0).iter().copied(), &targets[r.clone()], &omega[r.clone()]);
        }
        let value = sums.finish(lambda);
        let coeff = sums.error_coefficient(lambda);
        let work: Vec<(std::ops::Range<usize>, &Trace)> = chunks.iter().cloned().zip(&traces).collect();
        let parts = map_chunks(&work, |(r, t)| {
            let y = t.output().column(0);
            let d_y = Array2::from_shape_fn((r.len(), 1), |(i, _)| {
                let k = r.start + i;
                2.0 * coeff * omega[k] * (y[i] - targets[k])
            });
            self.backward(t, d_y)
        });
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for part in &parts {
            for (g, p) in grads.iter_mut().zip(part) {
                g.add_assign(p);
            }
        }
        Ok((value, grads))
    }
}

fn check_rows(rows: ArrayView2<'_, f64>) -> Result<()> {
    if rows.ncols() != N_FEATURES {
        return Err(Error::invalid(format!(
            "rows have {} features, expected {N_FEATURES}",
            rows.ncols()
        )));
    }
    Ok(())
}

fn check_lengths(n: usize, targets: &[f64], omega: &[f64]) -> Result<()> {
    if n == 0 || targets.len() != n || omega.len() != n {
        return Err(Error::invalid(format!(
            "need equal nonzero lengths, got {n} rows, {} targets, {} weights",
            targets.len(),
            omega.len()
        )));
    }
    Ok(())
}

fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(CHUNK_ROWS))
        .map(|c| c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(n))
        .collect()
}

fn map_chunks<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// `(total, mse, rer)` plus a flag set when `Σωt² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub mse: f64,
    pub rer: f64,
    pub degenerate: bool,
}

/// Running sums `S = Σω(y−t)²`, `W = Σω`, `T = Σωt²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSums {
    pub sq_err: f64,
    pub weight: f64,
    pub sq_target: f64,
}

impl LossSums {
    pub fn add(&mut self, pred: impl IntoIterator<Item = f64>, targets: &[f64], omega: &[f64]) {
        for ((y, &t), &w) in pred.into_iter().zip(targets).zip(omega) {
            self.sq_err += w * (y - t) * (y - t);
            self.weight += w;
            self.sq_target += w * t * t;
        }
    }

    pub fn finish(&self, lambda: f64) -> LossValue {
        let mse = self.sq_err / self.weight;
        let degenerate = self.sq_target <= 0.0;
        let rer = if degenerate { 0.0 } else { (self.sq_err / self.sq_target).sqrt() };
        LossValue {
            total: mse + lambda * rer,
            mse,
            rer,
            degenerate,
        }
    }

    /// `∂L/∂S`; the RER part is 0 where its square root is not differentiable.
    fn error_coefficient(&self, lambda: f64) -> f64 {
        let mut c = 1.0 / self.weight;
        if self.sq_err > 0.0 && self.sq_target > 0.0 {
            c += lambda / (2.0 * (self.sq_err * self.sq_target).sqrt());
        }
        c
    }
}

/// Solid-angle-weighted MSE plus `λ`·RER.
pub fn loss(pred: &[f64], target: &[f64], omega: &[f64], lambda: f64) -> Result<LossValue> {
    check_lengths(pred.len(), target, omega)?;
    if omega.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::invalid("loss weights must be positive"));
    }
    let mut sums = LossSums::default();
    sums.add(pred.iter().copied(), target, omega);
    Ok(sums.finish(lambda))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates; `t` counts completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zeros: Vec<Layer> = net.layers.iter().map(Layer::zeros_like).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update.
pub fn adam_step(net: &mut Network, grads: &[Layer], state: &mut AdamState, lr: f64) {
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - ADAM_BETA1.powf(t);
    let c2 = 1.0 - ADAM_BETA2.powf(t);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
    };
    for (((layer, g), m), v) in net
        .layers
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        ndarray::Zip::from(&mut layer.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(|p, &g, m, v| update(p, g, m, v));
        ndarray::Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
}
