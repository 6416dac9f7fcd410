use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense layer; `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    #[inline]
    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.biases))
        {
            *o = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
        }
    }
}

/// Multilayer perceptron with a single tanh output, so predictions lie in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

impl MlpModel {
    /// All-zero parameters.
    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for &w in hidden.iter().chain(std::iter::once(&1)) {
            layers.push(Layer::zeros(prev, w));
            prev = w;
        }
        Self { layers }
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut model = Self::zeros(input_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        model
    }

    pub fn from_layers(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ModelValidation("model has no layers".into()));
        }
        let mut prev = input_dim;
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim != prev {
                return Err(Error::ModelValidation(format!(
                    "layer {i}: input width {} does not match previous width {prev}",
                    l.in_dim
                )));
            }
            if l.out_dim == 0 {
                return Err(Error::ModelValidation(format!("layer {i}: zero width")));
            }
            if i == last && l.out_dim != 1 {
                return Err(Error::ModelValidation(format!(
                    "layer {i}: output layer has width {}, expected 1",
                    l.out_dim
                )));
            }
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::ModelValidation(format!(
                    "layer {i}: parameter count does not match shape {}x{}",
                    l.out_dim, l.in_dim
                )));
            }
            if l.weights.iter().chain(&l.biases).any(|p| !p.is_finite()) {
                return Err(Error::ModelValidation(format!("layer {i}: non-finite parameter")));
            }
            prev = l.out_dim;
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn hidden_layers(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.out_dim)
            .collect()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// Parameters flattened layer by layer: weights (row-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    fn widest(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim).max().unwrap_or(1)
    }

    /// Single-example forward pass using caller-provided scratch buffers.
    fn forward_one(&self, x: &[f64], a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
        let last = self.layers.len() - 1;
        a.clear();
        a.extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            b.clear();
            b.resize(layer.out_dim, 0.0);
            layer.apply(a, b);
            if i < last {
                for v in b.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(a, b);
        }
        a[0].tanh()
    }

    /// Forward pass over `inputs.len() / input_dim` row-major feature vectors.
    pub fn forward_flat(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if !inputs.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "input length {} is not a multiple of input_dim {d}",
                inputs.len()
            )));
        }
        let mut a = Vec::with_capacity(self.widest().max(d));
        let mut b = Vec::with_capacity(self.widest().max(d));
        Ok(inputs
            .chunks_exact(d)
            .map(|x| self.forward_one(x, &mut a, &mut b))
            .collect())
    }

    pub fn forward<V: AsRef<[f64]>>(&self, batch: &[V]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        let mut a = Vec::with_capacity(self.widest().max(d));
        let mut b = Vec::with_capacity(self.widest().max(d));
        batch
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let x = x.as_ref();
                if x.len() != d {
                    return Err(Error::Shape(format!(
                        "row {i} has dimension {}, expected {d}",
                        x.len()
                    )));
                }
                Ok(self.forward_one(x, &mut a, &mut b))
            })
            .collect()
    }

    /// Mean loss over the batch and its gradient with respect to `params()`.
    /// `loss` maps `(prediction, target)` to `(value, d value / d prediction)`.
    pub fn loss_and_gradient(
        &self,
        inputs: &[f64],
        targets: &[f64],
        loss: impl Fn(f64, f64) -> (f64, f64),
    ) -> Result<(f64, Vec<f64>)> {
        let d = self.input_dim();
        if inputs.len() != targets.len() * d {
            return Err(Error::Shape(format!(
                "{} inputs for {} targets of dimension {d}",
                inputs.len(),
                targets.len()
            )));
        }
        let mut grad = vec![0.0; self.num_params()];
        let mut ws = Workspace::new(self);
        let mut total = 0.0;
        for (x, &t) in inputs.chunks_exact(d).zip(targets) {
            total += ws.accumulate(self, x, t, &loss, &mut grad);
        }
        let m = targets.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= m);
        Ok((total / m, grad))
    }
}

/// Per-layer activations for backpropagation.
pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    offsets: Vec<usize>,
}

impl Workspace {
    pub(crate) fn new(model: &MlpModel) -> Self {
        let mut acts = vec![vec![0.0; model.input_dim()]];
        let mut deltas = Vec::new();
        let mut offsets = Vec::new();
        let mut off = 0;
        for l in &model.layers {
            acts.push(vec![0.0; l.out_dim]);
            deltas.push(vec![0.0; l.out_dim]);
            offsets.push(off);
            off += l.num_params();
        }
        Self {
            acts,
            deltas,
            offsets,
        }
    }

    /// Adds the per-example gradient into `grad`; returns the example loss.
    pub(crate) fn accumulate(
        &mut self,
        model: &MlpModel,
        x: &[f64],
        target: f64,
        loss: &impl Fn(f64, f64) -> (f64, f64),
        grad: &mut [f64],
    ) -> f64 {
        let n = model.layers.len();
        self.acts[0].copy_from_slice(x);
        for (i, layer) in model.layers.iter().enumerate() {
            let (lo, hi) = self.acts.split_at_mut(i + 1);
            layer.apply(&lo[i], &mut hi[0]);
            if i + 1 < n {
                for v in hi[0].iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        let y = self.acts[n][0].tanh();
        let (value, dy) = loss(y, target);
        self.deltas[n - 1][0] = dy * (1.0 - y * y);

        for i in (0..n).rev() {
            let layer = &model.layers[i];
            let off = self.offsets[i];
            let input = &self.acts[i];
            let delta = &self.deltas[i];
            let (gw, gb) = grad[off..off + layer.num_params()].split_at_mut(layer.weights.len());
            for (o, &dz) in delta.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, &a) in row.iter_mut().zip(input) {
                    *g += dz * a;
                }
                gb[o] += dz;
            }
            if i > 0 {
                let (lo, hi) = self.deltas.split_at_mut(i);
                let prev = &mut lo[i - 1];
                let delta = &hi[0];
                prev.iter_mut().for_each(|p| *p = 0.0);
                for (o, &dz) in delta.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += dz * w;
                    }
                }
                // relu'(z) is 1 where the post-activation is positive
                for (p, &a) in prev.iter_mut().zip(&self.acts[i]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let m = MlpModel::zeros(40, &[7]);
        let out = m.forward(&[vec![3.0; 40], vec![-1.0; 40]]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_set_single_neuron() {
        let layers = vec![
            Layer { in_dim: 1, out_dim: 1, weights: vec![1.0], biases: vec![0.0] },
            Layer { in_dim: 1, out_dim: 1, weights: vec![1.0], biases: vec![0.0] },
        ];
        let m = MlpModel::from_layers(1, layers).unwrap();
        let y = m.forward(&[vec![2.0]]).unwrap()[0];
        assert!((y - 0.9640275800758169).abs() < 1e-12);
        // negative input is cut by the relu
        assert_eq!(m.forward(&[vec![-2.0]]).unwrap()[0], 0.0);
    }

    #[test]
    fn batch_of_copies_is_uniform() {
        let m = MlpModel::init(12, &[8], 3);
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 - 0.4).collect();
        let out = m.forward(&vec![x; 9]).unwrap();
        assert!(out.windows(2).all(|w| w[0] == w[1]));
        assert!(out[0].abs() <= 1.0);
    }

    #[test]
    fn shape_errors() {
        let m = MlpModel::zeros(4, &[3]);
        assert!(matches!(m.forward(&[vec![0.0; 3]]), Err(Error::Shape(_))));
        assert!(matches!(m.forward_flat(&[0.0; 6]), Err(Error::Shape(_))));
        assert_eq!(m.forward_flat(&[0.0; 8]).unwrap().len(), 2);
    }

    #[test]
    fn layer_validation_names_the_layer() {
        let layers = vec![
            Layer { in_dim: 2, out_dim: 3, weights: vec![0.0; 6], biases: vec![0.0; 3] },
            Layer { in_dim: 2, out_dim: 1, weights: vec![0.0; 2], biases: vec![0.0] },
        ];
        let err = MlpModel::from_layers(2, layers).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
    }

    #[test]
    fn params_round_trip() {
        let m = MlpModel::init(5, &[4, 3], 11);
        let mut z = MlpModel::zeros(5, &[4, 3]);
        z.set_params(&m.params()).unwrap();
        assert_eq!(z, m);
        assert_eq!(m.num_params(), 5 * 4 + 4 + 4 * 3 + 3 + 3 + 1);
        assert_eq!(m.hidden_layers(), vec![4, 3]);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = MlpModel::init(40, &[7], 42);
        assert_eq!(a, MlpModel::init(40, &[7], 42));
        assert_ne!(a, MlpModel::init(40, &[7], 43));
        let limit = (6.0f64 / 47.0).sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= limit));
    }
}
