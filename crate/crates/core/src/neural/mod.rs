//! Dense ReLU networks with hand-written reverse-mode gradients.
//!
//! Batches are row-major: one sample per row. Weights are stored
//! `fan_in x fan_out` so a layer computes `x · W + b`.

mod adam;
mod gradcheck;
mod textfmt;

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_difference_gradients, max_relative_error};
pub use textfmt::{read_f64s, write_f64s, TextReader, FLOAT_DIGITS};

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Activation applied after the final layer. Hidden layers always use ReLU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    /// `max_action * tanh(z)`.
    TanhScaled { max_action: f64 },
    Linear,
}

impl OutputActivation {
    fn tag(&self) -> String {
        match self {
            OutputActivation::TanhScaled { max_action } => format!("tanh_scaled:{}", fmt_f64(*max_action)),
            OutputActivation::Linear => "linear".to_string(),
        }
    }

    fn parse(tag: &str) -> Result<Self> {
        if tag == "linear" {
            return Ok(OutputActivation::Linear);
        }
        let max = tag
            .strip_prefix("tanh_scaled:")
            .ok_or_else(|| Error::parse("network header", format!("unknown activation {tag:?}")))?;
        let max_action = max.parse().map_err(|e| Error::parse("network header", e))?;
        Ok(OutputActivation::TanhScaled { max_action })
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{:.*e}", FLOAT_DIGITS - 1, v)
}

/// One fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, bound: f64, rng: &mut R) -> Self {
        let mut layer = Self::zeros(fan_in, fan_out);
        // Row-major fill keeps the draw order independent of ndarray internals.
        for w in layer.weights.iter_mut() {
            *w = rng.random_range(-bound..=bound);
        }
        for b in layer.bias.iter_mut() {
            *b = rng.random_range(-bound..=bound);
        }
        layer
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

/// Parameters of a feed-forward network.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    output: OutputActivation,
    generation: u64,
}

/// Networks are equal when their parameters and output activation are.
impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.output == other.output
    }
}

/// Per-layer values saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    generation: u64,
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

impl Mlp {
    /// Zero-initialised network with the given layer widths
    /// `[input, hidden.., output]`.
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            output,
            generation: next_generation(),
        })
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation for every layer.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Dense::uniform(w[0], w[1], 1.0 / (w[0] as f64).sqrt(), rng))
            .collect();
        Ok(Self {
            layers,
            output,
            generation: next_generation(),
        })
    }

    /// Actor initialisation: like [`Mlp::new`] but the last layer is drawn
    /// from `±3e-3` so initial actions sit near zero.
    pub fn new_actor<R: Rng + ?Sized>(sizes: &[usize], max_action: f64, rng: &mut R) -> Result<Self> {
        validate_sizes(sizes)?;
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = if i + 1 == n { 3e-3 } else { 1.0 / (w[0] as f64).sqrt() };
                Dense::uniform(w[0], w[1], bound, rng)
            })
            .collect();
        Ok(Self {
            layers,
            output: OutputActivation::TanhScaled { max_action },
            generation: next_generation(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>, output: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::shape(pair[0].fan_out(), pair[1].fan_in()));
            }
        }
        for l in &layers {
            if l.bias.len() != l.fan_out() {
                return Err(Error::shape(l.fan_out(), l.bias.len()));
            }
        }
        Ok(Self {
            layers,
            output,
            generation: next_generation(),
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].fan_in()];
        sizes.extend(self.layers.iter().map(Dense::fan_out));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to the parameters. Invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation = next_generation();
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| Dense::zeros(l.fan_in(), l.fan_out())).collect(),
        }
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim()),
                format!("{} columns", input.ncols()),
            ));
        }
        Ok(())
    }

    /// Output for a batch without keeping intermediate values.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut x = affine(input, &self.layers[0]);
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                x = affine(x.view(), layer);
            }
            if i == last {
                self.apply_output(&mut x);
            } else {
                x.mapv_inplace(relu);
            }
        }
        Ok(x)
    }

    /// Output for a single sample.
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::shape(self.input_dim(), e))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, Cache)> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(x.view(), layer);
            let mut a = z.clone();
            if i == last {
                self.apply_output(&mut a);
            } else {
                a.mapv_inplace(relu);
            }
            inputs.push(x);
            pre_activations.push(z);
            x = a;
        }
        let cache = Cache {
            generation: self.generation,
            inputs,
            pre_activations,
        };
        Ok((x, cache))
    }

    /// Reverse-mode pass: parameter gradients and the gradient with respect
    /// to the network input, given `d_output = dL/d(output)`.
    pub fn backward(&self, cache: &Cache, d_output: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if cache.generation != self.generation {
            return Err(Error::Usage("backward called with a cache from different parameters".into()));
        }
        let last = self.layers.len() - 1;
        let batch = cache.inputs[0].nrows();
        if d_output.dim() != (batch, self.output_dim()) {
            return Err(Error::shape(
                format!("{batch}x{}", self.output_dim()),
                format!("{}x{}", d_output.nrows(), d_output.ncols()),
            ));
        }
        let mut delta = d_output.to_owned();
        if let OutputActivation::TanhScaled { max_action } = self.output {
            Zip::from(&mut delta).and(&cache.pre_activations[last]).for_each(|d, &z| {
                let t = z.tanh();
                *d *= max_action * (1.0 - t * t);
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..=last).rev() {
            let layer = &self.layers[i];
            let weights = cache.inputs[i].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Dense { weights, bias });
            let mut d_in = delta.dot(&layer.weights.t());
            if i > 0 {
                Zip::from(&mut d_in).and(&cache.pre_activations[i - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = d_in;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    fn apply_output(&self, x: &mut Array2<f64>) {
        if let OutputActivation::TanhScaled { max_action } = self.output {
            x.mapv_inplace(|z| max_action * z.tanh());
        }
    }

    fn check_same_shape(&self, other: &Mlp) -> Result<()> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(Error::shape(
                format!("{:?}", self.layer_sizes()),
                format!("{:?}", other.layer_sizes()),
            ));
        }
        Ok(())
    }

    /// Writes the network in the versioned text format.
    pub fn write_text(&self, out: &mut String) {
        use std::fmt::Write as _;
        let sizes: Vec<String> = self.layer_sizes().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "mlp 1");
        let _ = writeln!(out, "layers {}", sizes.join(" "));
        let mut acts: Vec<String> = vec!["relu".into(); self.layers.len() - 1];
        acts.push(self.output.tag());
        let _ = writeln!(out, "activations {}", acts.join(" "));
        for (i, l) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "weights {i} {}", l.weights.len());
            write_f64s(out, l.weights.iter().copied());
            let _ = writeln!(out, "bias {i} {}", l.bias.len());
            write_f64s(out, l.bias.iter().copied());
        }
    }

    pub fn read_text(reader: &mut TextReader<'_>) -> Result<Self> {
        let version = reader.expect_key("mlp")?;
        if version != ["1"] {
            return Err(Error::parse("network", format!("unsupported version {version:?}")));
        }
        let sizes: Vec<usize> = reader
            .expect_key("layers")?
            .iter()
            .map(|t| t.parse().map_err(|e| Error::parse("network header", e)))
            .collect::<Result<_>>()?;
        validate_sizes(&sizes)?;
        let acts = reader.expect_key("activations")?;
        if acts.len() != sizes.len() - 1 || acts[..acts.len() - 1].iter().any(|a| *a != "relu") {
            return Err(Error::parse("network header", format!("bad activations {acts:?}")));
        }
        let output = OutputActivation::parse(acts[acts.len() - 1])?;
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, w) in sizes.windows(2).enumerate() {
            let weights = reader.read_array("weights", i, w[0] * w[1])?;
            let bias = reader.read_array("bias", i, w[1])?;
            layers.push(Dense {
                weights: Array2::from_shape_vec((w[0], w[1]), weights).map_err(|e| Error::parse("network", e))?,
                bias: Array1::from_vec(bias),
            });
        }
        Self::from_layers(layers, output)
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

fn affine(x: ArrayView2<f64>, layer: &Dense) -> Array2<f64> {
    let mut z = x.dot(&layer.weights);
    z += &layer.bias;
    z
}

/// Soft target update `target = (1 - tau) * target + tau * online`.
pub fn polyak_blend(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InputDomain(format!("polyak rate {tau} outside (0, 1]")));
    }
    target.check_same_shape(online)?;
    let keep = 1.0 - tau;
    for (t, o) in target.layers_mut().iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weights).and(&o.weights).for_each(|t, &o| *t = keep * *t + tau * o);
        Zip::from(&mut t.bias).and(&o.bias).for_each(|t, &o| *t = keep * *t + tau * o);
    }
    Ok(())
}
