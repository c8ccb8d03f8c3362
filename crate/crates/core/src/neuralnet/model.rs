//! Architecture construction, forward passes and batch loss/gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Conv1d, Dense, Elman, Layer};
use super::NetError;
use crate::dataio::{NormalizationStats, N_FEATURES};
use crate::exec;
use crate::powercurve::TurbineSpec;

/// The five compared architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchKind {
    Feedforward,
    Recurrent,
    Convolutional,
    SparseAutoencoder,
    NarTimeSeries,
}

impl ArchKind {
    pub const ALL: [ArchKind; 5] = [
        ArchKind::Feedforward,
        ArchKind::Recurrent,
        ArchKind::Convolutional,
        ArchKind::SparseAutoencoder,
        ArchKind::NarTimeSeries,
    ];

    /// CLI short name.
    pub fn short(self) -> &'static str {
        match self {
            ArchKind::Feedforward => "ff",
            ArchKind::Recurrent => "rnn",
            ArchKind::Convolutional => "cnn",
            ArchKind::SparseAutoencoder => "sae",
            ArchKind::NarTimeSeries => "nar",
        }
    }

    pub fn from_short(s: &str) -> Option<ArchKind> {
        ArchKind::ALL.into_iter().find(|k| k.short() == s)
    }

    /// Row label used in the comparison report.
    pub fn display_name(self) -> &'static str {
        match self {
            ArchKind::Feedforward => "Feedforward Network",
            ArchKind::Recurrent => "Recurrent Neural Network (RNN)",
            ArchKind::Convolutional => "Convolutional Neural Network (CNN)",
            ArchKind::SparseAutoencoder => "Sparse Autoencoder",
            ArchKind::NarTimeSeries => "Dynamic Time Series Non Linear Autoregressive (NAR)",
        }
    }

    /// Whether inputs are past fault labels rather than feature vectors.
    pub fn uses_labels(self) -> bool {
        self == ArchKind::NarTimeSeries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    /// Target mean activation of each code unit.
    pub rho: f64,
    /// Weight of the KL penalty.
    pub beta: f64,
}

/// Optional topology overrides; `None` keeps the documented default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchOverrides {
    /// Hidden widths: dense stack (ff, nar), recurrent width (rnn, one
    /// entry), filter count (cnn, one entry) or code width (sae, one entry).
    pub hidden: Option<Vec<usize>>,
    /// Sequence / lag length for rnn, cnn and nar.
    pub window: Option<usize>,
    /// Convolution width (cnn).
    pub kernel_width: Option<usize>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
}

pub const DEFAULT_WINDOW: usize = 12;

/// Layered network plus its architecture descriptor.
///
/// Layer roles by kind:
/// - `Feedforward`, `NarTimeSeries`: a dense stack ending in a 1-unit sigmoid.
/// - `Recurrent`: `[Elman, Dense]`, read-out from the final hidden state.
/// - `Convolutional`: `[Conv1d (mean-pooled over time), Dense]`.
/// - `SparseAutoencoder`: `[encoder, decoder, head]`; prediction is
///   `head(encoder(x))`, the decoder only serves reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetModel {
    pub kind: ArchKind,
    pub layers: Vec<Layer>,
    /// Input steps per window.
    pub window: usize,
    /// Values per step (9 features, or 1 for label inputs).
    pub input_width: usize,
    pub sparsity: Option<Sparsity>,
    /// Normalization used for the training features, for self-contained
    /// inference.
    pub stats: Option<NormalizationStats>,
    /// Labelling geometry, needed to derive past labels for NAR inference.
    pub spec: Option<TurbineSpec>,
}

/// Which loss `loss_and_gradients` evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// MSE between predictions and {0,1} labels.
    Supervised,
    /// Sparse-autoencoder pretraining: reconstruction MSE plus
    /// `β · Σⱼ KL(ρ ‖ ρ̂ⱼ)` over code units.
    Reconstruction,
}

/// Flat windows: `inputs` holds `len × window × width` values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowSet {
    pub window: usize,
    pub width: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
}

impl WindowSet {
    pub fn new(window: usize, width: usize) -> Self {
        WindowSet {
            window,
            width,
            inputs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.window * self.width
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let s = self.stride();
        &self.inputs[i * s..(i + 1) * s]
    }

    pub fn push(&mut self, input: &[f64], label: f64) {
        assert_eq!(input.len(), self.stride(), "window shape");
        self.inputs.extend_from_slice(input);
        self.labels.push(label);
    }

    pub fn subset(&self, idx: &[usize]) -> WindowSet {
        let mut out = WindowSet::new(self.window, self.width);
        for &i in idx {
            out.push(self.input(i), self.labels[i]);
        }
        out
    }
}

/// Per-layer gradient buffers, same layout as the layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(model: &NetModel) -> Self {
        Gradients(model.layers.iter().map(|l| vec![0.0; l.params().len()]).collect())
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|g| g.is_finite())
    }
}

fn bad(msg: impl Into<String>) -> NetError {
    NetError::BadOverride(msg.into())
}

/// Builds a freshly initialized model of the given kind.
///
/// Defaults: ff `9→32→16→1` (tanh, tanh, sigmoid); rnn Elman 32 over 12
/// steps; cnn 16 tanh filters of width 3 over 12 steps, mean-pooled, then
/// `16→1`; sae `9→16` sigmoid code, `16→9` linear decoder, `16→1` head,
/// `ρ = 0.05`, `β = 3`; nar `12→16→1` over the 12 previous labels.
pub fn build_arch(kind: ArchKind, input_width: usize, overrides: &ArchOverrides, seed: u64) -> Result<NetModel, NetError> {
    if input_width == 0 {
        return Err(bad("input width must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = overrides.window.unwrap_or(DEFAULT_WINDOW);
    if overrides.window.is_some() && !matches!(kind, ArchKind::Recurrent | ArchKind::Convolutional | ArchKind::NarTimeSeries) {
        return Err(bad(format!("{} takes no window override", kind.short())));
    }
    if window == 0 {
        return Err(bad("window must be >= 1"));
    }
    // An empty list is allowed for dense stacks (a single output layer).
    let hidden = |default: &[usize]| -> Result<Vec<usize>, NetError> {
        let h = overrides.hidden.clone().unwrap_or_else(|| default.to_vec());
        if h.contains(&0) {
            return Err(bad("hidden widths must be positive"));
        }
        Ok(h)
    };
    let single = |h: Vec<usize>| -> Result<usize, NetError> {
        match h.as_slice() {
            [w] => Ok(*w),
            _ => Err(bad(format!("{} takes exactly one hidden width", kind.short()))),
        }
    };
    let dense_stack = |rng: &mut ChaCha8Rng, input: usize, widths: &[usize]| {
        let mut layers = Vec::new();
        let mut prev = input;
        for &w in widths {
            layers.push(Layer::Dense(Dense::new(prev, w, Activation::Tanh, rng)));
            prev = w;
        }
        layers.push(Layer::Dense(Dense::new(prev, 1, Activation::Sigmoid, rng)));
        layers
    };

    let (layers, window, width, sparsity) = match kind {
        ArchKind::Feedforward => (dense_stack(&mut rng, input_width, &hidden(&[32, 16])?), 1, input_width, None),
        ArchKind::NarTimeSeries => (dense_stack(&mut rng, window, &hidden(&[16])?), window, 1, None),
        ArchKind::Recurrent => {
            let h = single(hidden(&[32])?)?;
            let layers = vec![
                Layer::Elman(Elman::new(input_width, h, &mut rng)),
                Layer::Dense(Dense::new(h, 1, Activation::Sigmoid, &mut rng)),
            ];
            (layers, window, input_width, None)
        }
        ArchKind::Convolutional => {
            let f = single(hidden(&[16])?)?;
            let k = overrides.kernel_width.unwrap_or(3);
            if k == 0 || k > window {
                return Err(bad(format!("kernel width {k} must be in 1..={window}")));
            }
            let layers = vec![
                Layer::Conv1d(Conv1d::new(input_width, f, k, Activation::Tanh, &mut rng)),
                Layer::Dense(Dense::new(f, 1, Activation::Sigmoid, &mut rng)),
            ];
            (layers, window, input_width, None)
        }
        ArchKind::SparseAutoencoder => {
            let code = single(hidden(&[16])?)?;
            let rho = overrides.rho.unwrap_or(0.05);
            let beta = overrides.beta.unwrap_or(3.0);
            if !(rho > 0.0 && rho < 1.0) || !(beta >= 0.0 && beta.is_finite()) {
                return Err(bad(format!("sparsity needs 0 < rho < 1 and beta >= 0, got {rho}, {beta}")));
            }
            let layers = vec![
                Layer::Dense(Dense::new(input_width, code, Activation::Sigmoid, &mut rng)),
                Layer::Dense(Dense::new(code, input_width, Activation::Linear, &mut rng)),
                Layer::Dense(Dense::new(code, 1, Activation::Sigmoid, &mut rng)),
            ];
            (layers, 1, input_width, Some(Sparsity { rho, beta }))
        }
    };
    if kind != ArchKind::Convolutional && overrides.kernel_width.is_some() {
        return Err(bad("kernel_width applies to cnn only"));
    }
    if kind != ArchKind::SparseAutoencoder && (overrides.rho.is_some() || overrides.beta.is_some()) {
        return Err(bad("rho/beta apply to sae only"));
    }
    let model = NetModel {
        kind,
        layers,
        window,
        input_width: width,
        sparsity,
        stats: None,
        spec: None,
    };
    model.check_topology()?;
    Ok(model)
}

impl NetModel {
    /// Default topology over the nine features.
    pub fn default_for(kind: ArchKind, seed: u64) -> Self {
        build_arch(kind, N_FEATURES, &ArchOverrides::default(), seed).expect("default topology is valid")
    }

    pub fn input_len(&self) -> usize {
        self.window * self.input_width
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params().len()).sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| l.params().iter().all(|p| p.is_finite()))
    }

    /// Checks that adjacent widths line up for this kind.
    pub fn check_topology(&self) -> Result<(), NetError> {
        let mismatch = |m: String| Err(NetError::BadOverride(m));
        let ends_in_scalar = |l: &Layer| l.widths().1 == 1 && l.activation() == Activation::Sigmoid;
        match self.kind {
            ArchKind::Feedforward | ArchKind::NarTimeSeries => {
                if self.layers.is_empty() || !self.layers.iter().all(|l| matches!(l, Layer::Dense(_))) {
                    return mismatch("dense stack expected".into());
                }
                if self.layers[0].widths().0 != self.input_len() {
                    return mismatch("first layer width must equal window × input width".into());
                }
                for w in self.layers.windows(2) {
                    if w[0].widths().1 != w[1].widths().0 {
                        return mismatch("adjacent dense widths differ".into());
                    }
                }
                if !ends_in_scalar(self.layers.last().unwrap()) {
                    return mismatch("output layer must be 1-unit sigmoid".into());
                }
            }
            ArchKind::Recurrent | ArchKind::Convolutional => {
                let ok_kind = match (self.kind, self.layers.first()) {
                    (ArchKind::Recurrent, Some(Layer::Elman(_))) => true,
                    (ArchKind::Convolutional, Some(Layer::Conv1d(c))) => c.width <= self.window,
                    _ => false,
                };
                if self.layers.len() != 2 || !ok_kind || !matches!(self.layers[1], Layer::Dense(_)) {
                    return mismatch("expected [recurrent|conv, dense] layers".into());
                }
                if self.layers[0].widths().0 != self.input_width || self.layers[0].widths().1 != self.layers[1].widths().0 {
                    return mismatch("layer widths do not line up".into());
                }
                if !ends_in_scalar(&self.layers[1]) {
                    return mismatch("output layer must be 1-unit sigmoid".into());
                }
            }
            ArchKind::SparseAutoencoder => {
                if self.layers.len() != 3 || !self.layers.iter().all(|l| matches!(l, Layer::Dense(_))) {
                    return mismatch("expected [encoder, decoder, head]".into());
                }
                let (ei, eo) = self.layers[0].widths();
                let (di, dout) = self.layers[1].widths();
                let (hi, _) = self.layers[2].widths();
                if self.window != 1 || ei != self.input_width || di != eo || dout != ei || hi != eo {
                    return mismatch("autoencoder widths do not line up".into());
                }
                if self.layers[0].activation() != Activation::Sigmoid {
                    return mismatch("encoder must be sigmoid for the KL penalty".into());
                }
                if !ends_in_scalar(&self.layers[2]) {
                    return mismatch("head must be 1-unit sigmoid".into());
                }
                if self.sparsity.is_none() {
                    return mismatch("sparse autoencoder needs rho/beta".into());
                }
            }
        }
        Ok(())
    }

    /// Prediction in `(0, 1)` for one window.
    pub fn forward(&self, input: &[f64]) -> Result<f64, NetError> {
        if input.len() != self.input_len() {
            return Err(NetError::ShapeMismatch {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        Ok(self.predict_unchecked(input))
    }

    pub(crate) fn predict_unchecked(&self, input: &[f64]) -> f64 {
        match self.kind {
            ArchKind::Feedforward | ArchKind::NarTimeSeries => {
                let mut cur = input.to_vec();
                for l in &self.layers {
                    let d = l.as_dense();
                    let mut next = vec![0.0; d.output];
                    d.forward(&cur, &mut next);
                    cur = next;
                }
                cur[0]
            }
            ArchKind::Recurrent => {
                let Layer::Elman(rnn) = &self.layers[0] else { unreachable!() };
                let hs = rnn.forward_seq(input);
                let last = &hs[hs.len() - rnn.hidden..];
                let mut out = [0.0];
                self.layers[1].as_dense().forward(last, &mut out);
                out[0]
            }
            ArchKind::Convolutional => {
                let Layer::Conv1d(conv) = &self.layers[0] else { unreachable!() };
                let (_, pooled) = conv.forward(input);
                let mut out = [0.0];
                self.layers[1].as_dense().forward(&pooled, &mut out);
                out[0]
            }
            ArchKind::SparseAutoencoder => {
                let enc = self.layers[0].as_dense();
                let mut code = vec![0.0; enc.output];
                enc.forward(input, &mut code);
                let mut out = [0.0];
                self.layers[2].as_dense().forward(&code, &mut out);
                out[0]
            }
        }
    }

    /// Predictions for every window, in order.
    pub fn predict_set(&self, set: &WindowSet) -> Result<Vec<f64>, NetError> {
        if set.stride() != self.input_len() {
            return Err(NetError::ShapeMismatch {
                expected: self.input_len(),
                got: set.stride(),
            });
        }
        Ok(exec::map_range(set.len(), |i| self.predict_unchecked(set.input(i))))
    }

    /// Supervised MSE over a window set.
    pub fn evaluate(&self, set: &WindowSet) -> Result<f64, NetError> {
        if set.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let preds = self.predict_set(set)?;
        let sum: f64 = preds.iter().zip(&set.labels).map(|(p, y)| (p - y) * (p - y)).sum();
        Ok(sum / set.len() as f64)
    }

    /// Forward + backward for one window under the supervised loss;
    /// `dloss` scales `d(pred)`. Returns the prediction.
    fn backprop_supervised(&self, input: &[f64], label: f64, scale: f64, grads: &mut Gradients) -> f64 {
        match self.kind {
            ArchKind::Feedforward | ArchKind::NarTimeSeries => {
                let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
                acts.push(input.to_vec());
                for l in &self.layers {
                    let d = l.as_dense();
                    let mut next = vec![0.0; d.output];
                    d.forward(acts.last().unwrap(), &mut next);
                    acts.push(next);
                }
                let pred = acts.last().unwrap()[0];
                let mut g = vec![scale * 2.0 * (pred - label)];
                for li in (0..self.layers.len()).rev() {
                    let d = self.layers[li].as_dense();
                    let mut gx = vec![0.0; d.input];
                    let want_gx = li > 0;
                    d.backward(&acts[li], &acts[li + 1], &g, &mut grads.0[li], want_gx.then_some(gx.as_mut_slice()));
                    g = gx;
                }
                pred
            }
            ArchKind::Recurrent => {
                let Layer::Elman(rnn) = &self.layers[0] else { unreachable!() };
                let hs = rnn.forward_seq(input);
                let last = &hs[hs.len() - rnn.hidden..];
                let head = self.layers[1].as_dense();
                let mut out = [0.0];
                head.forward(last, &mut out);
                let pred = out[0];
                let mut gh = vec![0.0; rnn.hidden];
                let (g0, g1) = grads.0.split_at_mut(1);
                head.backward(last, &out, &[scale * 2.0 * (pred - label)], &mut g1[0], Some(&mut gh));
                rnn.backward_seq(input, &hs, &gh, &mut g0[0]);
                pred
            }
            ArchKind::Convolutional => {
                let Layer::Conv1d(conv) = &self.layers[0] else { unreachable!() };
                let (acts, pooled) = conv.forward(input);
                let head = self.layers[1].as_dense();
                let mut out = [0.0];
                head.forward(&pooled, &mut out);
                let pred = out[0];
                let mut gp = vec![0.0; conv.filters];
                let (g0, g1) = grads.0.split_at_mut(1);
                head.backward(&pooled, &out, &[scale * 2.0 * (pred - label)], &mut g1[0], Some(&mut gp));
                conv.backward(input, &acts, &gp, &mut g0[0]);
                pred
            }
            ArchKind::SparseAutoencoder => {
                let enc = self.layers[0].as_dense();
                let head = self.layers[2].as_dense();
                let mut code = vec![0.0; enc.output];
                enc.forward(input, &mut code);
                let mut out = [0.0];
                head.forward(&code, &mut out);
                let pred = out[0];
                let mut gc = vec![0.0; enc.output];
                head.backward(&code, &out, &[scale * 2.0 * (pred - label)], &mut grads.0[2], Some(&mut gc));
                enc.backward(input, &code, &gc, &mut grads.0[0], None);
                pred
            }
        }
    }

    /// Mean encoder activation over the batch (sparse autoencoder only).
    fn mean_code(&self, batch: &WindowSet, idx: &[usize]) -> Vec<f64> {
        let enc = self.layers[0].as_dense();
        let codes = exec::map_slice(idx, |&i| {
            let mut c = vec![0.0; enc.output];
            enc.forward(batch.input(i), &mut c);
            c
        });
        let mut mean = vec![0.0; enc.output];
        for c in &codes {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
        mean
    }

    /// Mean loss over `idx` rows of `batch` and its exact gradient.
    ///
    /// Samples are processed in fixed chunks (in parallel when enabled) and
    /// the chunk results summed in order, so the result does not depend on
    /// the thread count.
    pub fn loss_and_gradients_at(&self, batch: &WindowSet, idx: &[usize], objective: Objective) -> Result<(f64, Gradients), NetError> {
        if idx.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        if batch.stride() != self.input_len() {
            return Err(NetError::ShapeMismatch {
                expected: self.input_len(),
                got: batch.stride(),
            });
        }
        let b = idx.len() as f64;
        const CHUNK: usize = 16;
        let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();

        match objective {
            Objective::Supervised => {
                let parts = exec::map_slice(&chunks, |chunk| {
                    let mut g = Gradients::zeros_like(self);
                    let mut sq = 0.0;
                    for &i in chunk.iter() {
                        let y = batch.labels[i];
                        let p = self.backprop_supervised(batch.input(i), y, 1.0 / b, &mut g);
                        sq += (p - y) * (p - y);
                    }
                    (sq, g)
                });
                let mut total = Gradients::zeros_like(self);
                let mut sq = 0.0;
                for (s, g) in &parts {
                    sq += s;
                    total.add(g);
                }
                Ok((sq / b, total))
            }
            Objective::Reconstruction => {
                let Some(sp) = self.sparsity else {
                    return Err(NetError::UnsupportedObjective(self.kind));
                };
                let enc = self.layers[0].as_dense();
                let dec = self.layers[1].as_dense();
                let d = enc.input as f64;
                let rho_hat = self.mean_code(batch, idx);
                // d/dρ̂ of β·KL(ρ‖ρ̂), spread over the batch by dρ̂/dh = 1/B
                let kl_grad: Vec<f64> = rho_hat
                    .iter()
                    .map(|&r| sp.beta * (-sp.rho / r + (1.0 - sp.rho) / (1.0 - r)) / b)
                    .collect();
                let kl: f64 = rho_hat
                    .iter()
                    .map(|&r| sp.rho * (sp.rho / r).ln() + (1.0 - sp.rho) * ((1.0 - sp.rho) / (1.0 - r)).ln())
                    .sum();
                let parts = exec::map_slice(&chunks, |chunk| {
                    let mut g = Gradients::zeros_like(self);
                    let mut sq = 0.0;
                    let mut code = vec![0.0; enc.output];
                    let mut recon = vec![0.0; dec.output];
                    let mut g_out = vec![0.0; dec.output];
                    let mut g_code = vec![0.0; enc.output];
                    for &i in chunk.iter() {
                        let x = batch.input(i);
                        enc.forward(x, &mut code);
                        dec.forward(&code, &mut recon);
                        for k in 0..dec.output {
                            let e = recon[k] - x[k];
                            sq += e * e;
                            g_out[k] = 2.0 * e / (b * d);
                        }
                        dec.backward(&code, &recon, &g_out, &mut g.0[1], Some(&mut g_code));
                        for (gc, kg) in g_code.iter_mut().zip(&kl_grad) {
                            *gc += kg;
                        }
                        enc.backward(x, &code, &g_code, &mut g.0[0], None);
                    }
                    (sq, g)
                });
                let mut total = Gradients::zeros_like(self);
                let mut sq = 0.0;
                for (s, g) in &parts {
                    sq += s;
                    total.add(g);
                }
                Ok((sq / (b * d) + sp.beta * kl, total))
            }
        }
    }

    /// Loss and gradients over a whole batch.
    pub fn loss_and_gradients(&self, batch: &WindowSet, objective: Objective) -> Result<(f64, Gradients), NetError> {
        let idx: Vec<usize> = (0..batch.len()).collect();
        self.loss_and_gradients_at(batch, &idx, objective)
    }

    /// Objective value only (used for validation and finite differences).
    pub fn loss(&self, batch: &WindowSet, objective: Objective) -> Result<f64, NetError> {
        match objective {
            Objective::Supervised => self.evaluate(batch),
            Objective::Reconstruction => Ok(self.loss_and_gradients(batch, objective)?.0),
        }
    }
}
