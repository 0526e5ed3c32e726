use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};

pub const HIDDEN_LAYERS: usize = 4;
pub const HIDDEN_WIDTH: usize = 20;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Fully connected network: Tanh on hidden layers, identity on the output.
///
/// Parameters live in one flat vector, layer by layer, each layer storing
/// its `out x in` weight matrix row-major followed by its biases.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.params == other.params
    }
}

/// Activations of one forward pass, tied to the parameter version used.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache has at least the input layer")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut n = 0;
        for w in sizes.windows(2) {
            offsets.push(n);
            n += w[0] * w[1] + w[1];
        }
        offsets.push(n);
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
            offsets,
            version: fresh_version(),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in 0..net.layers() {
            let (fan_in, fan_out) = (net.sizes[layer], net.sizes[layer + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = net.offsets[layer];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    /// Input layer, four Tanh hidden layers of width 20, and an output layer.
    pub fn standard<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend([HIDDEN_WIDTH; HIDDEN_LAYERS]);
        sizes.push(output);
        Self::glorot(&sizes, rng)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of weight layers.
    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version = fresh_version();
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                context: "network parameters",
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params_mut().copy_from_slice(params);
        Ok(())
    }

    pub fn copy_from(&mut self, other: &Mlp) -> Result<()> {
        if self.sizes != other.sizes {
            return Err(Error::Mismatch("network topologies differ".into()));
        }
        self.set_params(&other.params)
    }

    /// `self <- tau * other + (1 - tau) * self`.
    pub fn soft_update(&mut self, other: &Mlp, tau: f64) -> Result<()> {
        if self.sizes != other.sizes {
            return Err(Error::Mismatch("network topologies differ".into()));
        }
        if tau == 1.0 {
            return self.copy_from(other);
        }
        for (p, q) in self.params_mut().iter_mut().zip(&other.params) {
            *p = tau * q + (1.0 - tau) * *p;
        }
        Ok(())
    }

    fn weight_index(&self, layer: usize, out: usize, inp: usize) -> usize {
        self.offsets[layer] + out * self.sizes[layer] + inp
    }

    fn bias_index(&self, layer: usize, out: usize) -> usize {
        self.offsets[layer] + self.sizes[layer] * self.sizes[layer + 1] + out
    }

    pub fn weight(&self, layer: usize, out: usize, inp: usize) -> f64 {
        self.params[self.weight_index(layer, out, inp)]
    }

    pub fn set_weight(&mut self, layer: usize, out: usize, inp: usize, value: f64) {
        let i = self.weight_index(layer, out, inp);
        self.params_mut()[i] = value;
    }

    pub fn bias(&self, layer: usize, out: usize) -> f64 {
        self.params[self.bias_index(layer, out)]
    }

    pub fn set_bias(&mut self, layer: usize, out: usize, value: f64) {
        let i = self.bias_index(layer, out);
        self.params_mut()[i] = value;
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, layer: usize, input: &[f64], out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let w = &self.params[self.offsets[layer]..self.offsets[layer] + n_in * n_out];
        let b = &self.params[self.offsets[layer] + n_in * n_out..self.offsets[layer + 1]];
        let hidden = layer + 1 < self.layers();
        out.clear();
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let z = b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
            out.push(if hidden { z.tanh() } else { z });
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        let mut next = Vec::new();
        for layer in 0..self.layers() {
            self.layer_forward(layer, &a, &mut next);
            std::mem::swap(&mut a, &mut next);
        }
        Ok(a)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        for layer in 0..self.layers() {
            let mut next = Vec::with_capacity(self.sizes[layer + 1]);
            self.layer_forward(layer, &activations[layer], &mut next);
            activations.push(next);
        }
        Ok(ForwardCache {
            version: self.version,
            activations,
        })
    }

    /// Backpropagates `upstream` (gradient of a scalar with respect to the
    /// network output), accumulating parameter gradients into `grads` and
    /// returning the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape {
                context: "upstream gradient",
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape {
                context: "gradient buffer",
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let mut delta = upstream.to_vec();
        for layer in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let a_prev = &cache.activations[layer];
            let w_start = self.offsets[layer];
            let b_start = w_start + n_in * n_out;
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grads[b_start + o] += d;
                let g_row = &mut grads[w_start + o * n_in..w_start + (o + 1) * n_in];
                for (g, a) in g_row.iter_mut().zip(a_prev) {
                    *g += d * a;
                }
                let w_row = &self.params[w_start + o * n_in..w_start + (o + 1) * n_in];
                for (p, w) in prev.iter_mut().zip(w_row) {
                    *p += d * w;
                }
            }
            if layer > 0 {
                for (p, a) in prev.iter_mut().zip(a_prev) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Decimal text section: `network <name>`, sizes, one line per layer
    /// tensor, terminated by `end`.
    pub fn to_text(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "network {name}");
        let sizes: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "sizes {}", sizes.join(" "));
        for layer in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let w = &self.params[self.offsets[layer]..self.offsets[layer] + n_in * n_out];
            let b = &self.params[self.offsets[layer] + n_in * n_out..self.offsets[layer + 1]];
            let _ = writeln!(s, "layer {layer} weights {}", join_exp(w));
            let _ = writeln!(s, "layer {layer} biases {}", join_exp(b));
        }
        s.push_str("end\n");
        s
    }

    /// Parses a section written by [`Mlp::to_text`] from `lines`, which must
    /// be positioned at the `network` line.
    pub fn from_text<'a, I>(lines: &mut I, expected_name: &str) -> Result<Mlp>
    where
        I: Iterator<Item = &'a str>,
    {
        let head = lines
            .next()
            .ok_or_else(|| Error::parse(format!("network {expected_name}"), "missing section"))?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some("network") || parts.next() != Some(expected_name) {
            return Err(Error::parse(
                format!("network {expected_name}"),
                format!("expected section header, found `{head}`"),
            ));
        }
        let field = |f: &str| format!("{expected_name}.{f}");
        let sizes_line = lines.next().unwrap_or("");
        let mut parts = sizes_line.split_whitespace();
        if parts.next() != Some("sizes") {
            return Err(Error::parse(field("sizes"), "missing sizes line"));
        }
        let sizes: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| Error::parse(field("sizes"), format!("`{p}` is not a size"))))
            .collect::<Result<_>>()?;
        let mut net = Mlp::zeros(&sizes).map_err(|e| Error::parse(field("sizes"), e.to_string()))?;
        let mut params = Vec::with_capacity(net.param_count());
        for layer in 0..net.layers() {
            for (kind, n) in [
                ("weights", sizes[layer] * sizes[layer + 1]),
                ("biases", sizes[layer + 1]),
            ] {
                let name = field(&format!("layer[{layer}].{kind}"));
                let line = lines.next().unwrap_or("");
                let mut parts = line.split_whitespace();
                let idx = layer.to_string();
                if parts.next() != Some("layer") || parts.next() != Some(idx.as_str()) || parts.next() != Some(kind) {
                    return Err(Error::parse(name, format!("unexpected line `{line}`")));
                }
                let values: Vec<&str> = parts.collect();
                if values.len() != n {
                    return Err(Error::parse(name, format!("expected {n} values, found {}", values.len())));
                }
                for (i, v) in values.iter().enumerate() {
                    let x: f64 = v
                        .parse()
                        .map_err(|_| Error::parse(format!("{name}[{i}]"), format!("`{v}` is not a number")))?;
                    if !x.is_finite() {
                        return Err(Error::parse(format!("{name}[{i}]"), "non-finite parameter"));
                    }
                    params.push(x);
                }
            }
        }
        if lines.next().map(str::trim) != Some("end") {
            return Err(Error::parse(field("end"), "missing section terminator"));
        }
        net.set_params(&params)?;
        Ok(net)
    }
}

fn join_exp(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}
