use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_for;

use super::triplet::euclidean;

/// A dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid("layer", "dimensions must be positive"));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::DimensionMismatch {
                context: "layer weights",
                expected: inputs * outputs,
                found: weights.len(),
            });
        }
        if bias.len() != outputs {
            return Err(Error::DimensionMismatch {
                context: "layer bias",
                expected: outputs,
                found: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(Error::Validation("layer parameters must be finite".into()));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `W x + b`.
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b),
        );
    }

    pub(crate) fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Feed-forward network: rectified hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    layers: Vec<Layer>,
}

impl EmbeddingModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("layers", "model needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::DimensionMismatch {
                    context: "layer chain",
                    expected: w[0].outputs,
                    found: w[1].inputs,
                });
            }
        }
        Ok(Self { layers })
    }

    /// Layer widths from input to output, e.g. `[420, 128, 64]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(
                "dims",
                format!("need at least input and output widths, all positive; got {dims:?}"),
            ));
        }
        Ok(())
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        Self::check_dims(dims)?;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut rng = rng_for(seed, "init", &format!("layer{i}"));
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Layer::new(fan_in, fan_out, weights, vec![0.0; fan_out])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| Layer::new(w[0], w[1], vec![0.0; w[0] * w[1]], vec![0.0; w[1]]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|w| w.is_finite()))
    }

    /// Pre-activation output of every layer.
    pub fn pre_activations(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(input)?;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&x, &mut z);
            x = z.clone();
            if i + 1 < self.layers.len() {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            out.push(z);
        }
        Ok(out)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "model input",
                expected: self.input_width(),
                found: input.len(),
            });
        }
        Ok(())
    }

    /// Post-activation outputs of every layer (the last one is the embedding).
    pub(crate) fn forward_cached(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = if i == 0 { input } else { &acts[i - 1] };
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(x, &mut z);
            if i + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub(crate) fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).pop().expect("at least one layer")
    }

    /// Accumulates parameter gradients for one sample into `grads` (laid out
    /// like [`Layer::parameters_mut`], layer by layer).
    pub(crate) fn backward(&self, input: &[f64], acts: &[Vec<f64>], grad_output: &[f64], grads: &mut [Vec<f64>]) {
        let mut delta = grad_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l + 1 < self.layers.len() {
                for (d, a) in delta.iter_mut().zip(&acts[l]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = if l == 0 { input } else { &acts[l - 1] };
            let (gw, gb) = grads[l].split_at_mut(layer.weights.len());
            for ((row, d), b) in gw.chunks_exact_mut(layer.inputs).zip(&delta).zip(gb.iter_mut()) {
                if *d == 0.0 {
                    continue;
                }
                for (g, v) in row.iter_mut().zip(x) {
                    *g += d * v;
                }
                *b += d;
            }
            if l > 0 {
                let mut next = vec![0.0; layer.inputs];
                for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                    if *d == 0.0 {
                        continue;
                    }
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                delta = next;
            }
        }
    }
}

/// Forward pass of a flattened fixed-length feature matrix.
pub fn embed(input: &[f64], model: &EmbeddingModel) -> Result<Vec<f64>> {
    model.check_input(input)?;
    Ok(model.forward(input))
}

/// `1 / (1 + |e1 - e2|)`.
///
/// # Panics
/// If the embeddings differ in length.
pub fn embedding_score(e1: &[f64], e2: &[f64]) -> f64 {
    assert_eq!(e1.len(), e2.len(), "embedding dimensions differ");
    1.0 / (1.0 + euclidean(e1, e2))
}
