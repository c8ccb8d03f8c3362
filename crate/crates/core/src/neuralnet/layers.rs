//! Dense, Elman and 1-D convolution layers with hand-written backward
//! passes. Each layer keeps all of its parameters in one flat vector; the
//! gradient buffers handed to `backward` have the same layout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Scaled-uniform init, bound `√(6 / (fan_in + fan_out))`.
fn init_uniform(rng: &mut ChaCha8Rng, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in out {
        *w = rng.random_range(-bound..bound);
    }
}

/// Fully connected layer. Params: `W (output × input)` row-major, then `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl Dense {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let mut params = vec![0.0; output * input + output];
        init_uniform(rng, &mut params[..output * input], input, output);
        Dense {
            input,
            output,
            activation,
            params,
        }
    }

    pub fn param_count(input: usize, output: usize) -> usize {
        output * input + output
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        let (w, b) = self.params.split_at(self.output * self.input);
        for o in 0..self.output {
            let row = &w[o * self.input..(o + 1) * self.input];
            let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            out[o] = self.activation.apply(z);
        }
    }

    /// Accumulates parameter gradients for upstream gradient `grad_out`
    /// (w.r.t. the activations `a`). Writes the input gradient if asked.
    pub fn backward(&self, x: &[f64], a: &[f64], grad_out: &[f64], grad: &mut [f64], grad_x: Option<&mut [f64]>) {
        let n_w = self.output * self.input;
        let mut dz = vec![0.0; self.output];
        for o in 0..self.output {
            dz[o] = grad_out[o] * self.activation.derivative(a[o]);
        }
        {
            let (gw, gb) = grad.split_at_mut(n_w);
            for o in 0..self.output {
                if dz[o] == 0.0 {
                    continue;
                }
                let row = &mut gw[o * self.input..(o + 1) * self.input];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dz[o] * xi;
                }
                gb[o] += dz[o];
            }
        }
        if let Some(gx) = grad_x {
            let w = &self.params[..n_w];
            gx.iter_mut().for_each(|g| *g = 0.0);
            for o in 0..self.output {
                let row = &w[o * self.input..(o + 1) * self.input];
                for (g, wi) in gx.iter_mut().zip(row) {
                    *g += dz[o] * wi;
                }
            }
        }
    }
}

/// Elman recurrent layer with tanh units:
/// `h_t = tanh(W_in x_t + W_rec h_{t−1} + b)`, `h_0 = 0`.
/// Params: `W_in (hidden × input)`, `W_rec (hidden × hidden)`, `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Elman {
    pub input: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl Elman {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut params = vec![0.0; Self::param_count(input, hidden)];
        init_uniform(rng, &mut params[..hidden * input], input, hidden);
        init_uniform(rng, &mut params[hidden * input..hidden * input + hidden * hidden], hidden, hidden);
        Elman { input, hidden, params }
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        hidden * input + hidden * hidden + hidden
    }

    fn split(&self) -> (&[f64], &[f64], &[f64]) {
        let (w_in, rest) = self.params.split_at(self.hidden * self.input);
        let (w_rec, b) = rest.split_at(self.hidden * self.hidden);
        (w_in, w_rec, b)
    }

    /// Runs the whole sequence (`steps × input`, time-major); returns every
    /// hidden state (`steps × hidden`).
    pub fn forward_seq(&self, xs: &[f64]) -> Vec<f64> {
        let (h, d) = (self.hidden, self.input);
        let steps = xs.len() / d;
        let (w_in, w_rec, b) = self.split();
        let mut hs = vec![0.0; steps * h];
        for t in 0..steps {
            let x = &xs[t * d..(t + 1) * d];
            let (prev, cur) = hs.split_at_mut(t * h);
            let prev = if t == 0 { None } else { Some(&prev[(t - 1) * h..]) };
            let cur = &mut cur[..h];
            for j in 0..h {
                let mut z = b[j] + w_in[j * d..(j + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if let Some(p) = prev {
                    z += w_rec[j * h..(j + 1) * h].iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
                }
                cur[j] = z.tanh();
            }
        }
        hs
    }

    /// Backpropagation through time from a gradient on the final hidden
    /// state.
    pub fn backward_seq(&self, xs: &[f64], hs: &[f64], grad_last: &[f64], grad: &mut [f64]) {
        let (h, d) = (self.hidden, self.input);
        let steps = xs.len() / d;
        let (_, w_rec, _) = self.split();
        let (g_in, rest) = grad.split_at_mut(h * d);
        let (g_rec, g_b) = rest.split_at_mut(h * h);
        let mut gh = grad_last.to_vec();
        let mut dz = vec![0.0; h];
        for t in (0..steps).rev() {
            let ht = &hs[t * h..(t + 1) * h];
            let x = &xs[t * d..(t + 1) * d];
            for j in 0..h {
                dz[j] = gh[j] * (1.0 - ht[j] * ht[j]);
            }
            for j in 0..h {
                let row = &mut g_in[j * d..(j + 1) * d];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dz[j] * xi;
                }
                g_b[j] += dz[j];
            }
            if t == 0 {
                break;
            }
            let hp = &hs[(t - 1) * h..t * h];
            for j in 0..h {
                let row = &mut g_rec[j * h..(j + 1) * h];
                for (g, hv) in row.iter_mut().zip(hp) {
                    *g += dz[j] * hv;
                }
            }
            gh.iter_mut().for_each(|g| *g = 0.0);
            for j in 0..h {
                let row = &w_rec[j * h..(j + 1) * h];
                for (g, w) in gh.iter_mut().zip(row) {
                    *g += dz[j] * w;
                }
            }
        }
    }
}

/// Valid 1-D convolution over the time axis followed by a mean over time.
/// Params: `W (filters × width × channels)`, then `b (filters)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub channels: usize,
    pub filters: usize,
    pub width: usize,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl Conv1d {
    pub fn new(channels: usize, filters: usize, width: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let mut params = vec![0.0; Self::param_count(channels, filters, width)];
        let n_w = filters * width * channels;
        init_uniform(rng, &mut params[..n_w], width * channels, filters);
        Conv1d {
            channels,
            filters,
            width,
            activation,
            params,
        }
    }

    pub fn param_count(channels: usize, filters: usize, width: usize) -> usize {
        filters * width * channels + filters
    }

    /// Returns per-position activations (`positions × filters`) and the
    /// time-pooled vector (`filters`).
    pub fn forward(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (c, f, k) = (self.channels, self.filters, self.width);
        let steps = xs.len() / c;
        let positions = steps + 1 - k;
        let n_w = f * k * c;
        let (w, b) = self.params.split_at(n_w);
        let mut acts = vec![0.0; positions * f];
        let mut pooled = vec![0.0; f];
        for p in 0..positions {
            let patch = &xs[p * c..(p + k) * c];
            for fi in 0..f {
                let wf = &w[fi * k * c..(fi + 1) * k * c];
                let z = b[fi] + wf.iter().zip(patch).map(|(a, b)| a * b).sum::<f64>();
                let a = self.activation.apply(z);
                acts[p * f + fi] = a;
                pooled[fi] += a;
            }
        }
        pooled.iter_mut().for_each(|v| *v /= positions as f64);
        (acts, pooled)
    }

    pub fn backward(&self, xs: &[f64], acts: &[f64], grad_pooled: &[f64], grad: &mut [f64]) {
        let (c, f, k) = (self.channels, self.filters, self.width);
        let steps = xs.len() / c;
        let positions = steps + 1 - k;
        let n_w = f * k * c;
        let (gw, gb) = grad.split_at_mut(n_w);
        let inv = 1.0 / positions as f64;
        for p in 0..positions {
            let patch = &xs[p * c..(p + k) * c];
            for fi in 0..f {
                let dz = grad_pooled[fi] * inv * self.activation.derivative(acts[p * f + fi]);
                let row = &mut gw[fi * k * c..(fi + 1) * k * c];
                for (g, xv) in row.iter_mut().zip(patch) {
                    *g += dz * xv;
                }
                gb[fi] += dz;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Elman(Elman),
    Conv1d(Conv1d),
}

impl Layer {
    pub fn params(&self) -> &[f64] {
        match self {
            Layer::Dense(l) => &l.params,
            Layer::Elman(l) => &l.params,
            Layer::Conv1d(l) => &l.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Layer::Dense(l) => &mut l.params,
            Layer::Elman(l) => &mut l.params,
            Layer::Conv1d(l) => &mut l.params,
        }
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Elman(_) => "elman",
            Layer::Conv1d(_) => "conv1d",
        }
    }

    /// `(input width, output width)` per time step.
    pub fn widths(&self) -> (usize, usize) {
        match self {
            Layer::Dense(l) => (l.input, l.output),
            Layer::Elman(l) => (l.input, l.hidden),
            Layer::Conv1d(l) => (l.channels, l.filters),
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::Dense(l) => l.activation,
            Layer::Elman(_) => Activation::Tanh,
            Layer::Conv1d(l) => l.activation,
        }
    }

    pub fn as_dense(&self) -> &Dense {
        match self {
            Layer::Dense(l) => l,
            other => panic!("expected a dense layer, found {}", other.kind_str()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sigmoid_is_stable_and_centered() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn init_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Dense::new(9, 32, Activation::Tanh, &mut rng);
        let bound = (6.0f64 / 41.0).sqrt();
        assert!(d.params[..9 * 32].iter().all(|w| w.abs() <= bound));
        assert!(d.params[9 * 32..].iter().all(|b| *b == 0.0));
    }

    #[test]
    fn elman_with_zero_recurrence_is_dense_on_last_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rnn = Elman::new(3, 5, &mut rng);
        let n_in = 15;
        for w in &mut rnn.params[n_in..n_in + 25] {
            *w = 0.0;
        }
        let dense = Dense {
            input: 3,
            output: 5,
            activation: Activation::Tanh,
            params: [&rnn.params[..n_in], &rnn.params[n_in + 25..]].concat(),
        };
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let hs = rnn.forward_seq(&xs);
        let mut out = vec![0.0; 5];
        dense.forward(&xs[9..12], &mut out);
        assert_eq!(&hs[15..20], out.as_slice());
    }
}
