use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Fully connected layer `y = x·W + b`, `W` stored row-major as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// He-uniform weights, zero bias.
    pub fn he_uniform(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Dense {
            in_dim,
            out_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        let mut y = x.matmul_slice(&self.weight, self.out_dim);
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }
}

/// Multi-layer perceptron: ReLU after every layer but the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    /// Input to each layer from the last caching forward pass.
    cache: Option<Vec<Tensor>>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Per-layer `(weight, bias)` gradients, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

/// Serialized form used inside checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSnapshot {
    pub widths: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Seeded He-uniform initialisation for the given layer widths.
    pub fn new(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::check_widths(widths)?;
        Ok(Mlp {
            layers: widths
                .windows(2)
                .map(|w| Dense::he_uniform(w[0], w[1], rng))
                .collect(),
            cache: None,
        })
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        Self::check_widths(widths)?;
        Ok(Mlp {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            cache: None,
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for l in &layers {
            if l.weight.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Config("layer parameter sizes do not match widths".into()));
            }
        }
        for w in layers.windows(2) {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Config("consecutive layer widths disagree".into()));
            }
        }
        if layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias)).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "mlp_load" });
        }
        Ok(Mlp {
            layers,
            cache: None,
        })
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must list at least two positive sizes, got {widths:?}"
            )));
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].in_dim];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape {
                op: "mlp_forward",
                expected: format!("{} input columns", self.in_dim()),
                got: x.cols().to_string(),
            });
        }
        Ok(())
    }

    fn run(&self, x: &Tensor, mut keep: Option<&mut Vec<Tensor>>) -> Result<Tensor> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.apply(&h);
            if i < last {
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            y.check_finite("dense_forward")?;
            if let Some(k) = keep.as_deref_mut() {
                k.push(h);
            }
            h = y;
        }
        Ok(h)
    }

    /// Pure inference; no cache is touched.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, None)
    }

    /// Forward pass that keeps layer inputs for [`Mlp::backward`].
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut keep = Vec::with_capacity(self.layers.len());
        let out = self.run(x, Some(&mut keep))?;
        self.cache = Some(keep);
        Ok(out)
    }

    /// Back-propagates `upstream` (gradient w.r.t. the output of the last
    /// caching forward). Returns parameter gradients and the input gradient.
    pub fn backward(&mut self, upstream: &Tensor) -> Result<(MlpGrads, Tensor)> {
        let inputs = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        let rows = inputs[0].rows();
        if upstream.shape() != [rows, self.out_dim()] {
            return Err(Error::Shape {
                op: "mlp_backward",
                expected: format!("{rows}x{}", self.out_dim()),
                got: format!("{}x{}", upstream.rows(), upstream.cols()),
            });
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &inputs[i];
            let (gw, gb) = &mut grads.layers[i];
            input.matmul_tn_into(&g, gw);
            for r in g.iter_rows() {
                for (b, v) in gb.iter_mut().zip(r) {
                    *b += v;
                }
            }
            let mut gx = g.matmul_nt_slice(&layer.weight, layer.in_dim);
            if i > 0 {
                // input of layer i is ReLU output of layer i-1
                for (d, &a) in gx.data_mut().iter_mut().zip(input.data()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            gx.check_finite("dense_backward")?;
            g = gx;
        }
        Ok((grads, g))
    }

    pub fn snapshot(&self) -> MlpSnapshot {
        MlpSnapshot {
            widths: self.widths(),
            weights: self.layers.iter().map(|l| l.weight.clone()).collect(),
            biases: self.layers.iter().map(|l| l.bias.clone()).collect(),
        }
    }

    pub fn from_snapshot(s: &MlpSnapshot) -> Result<Self> {
        Self::check_widths(&s.widths)?;
        if s.weights.len() != s.widths.len() - 1 || s.biases.len() != s.widths.len() - 1 {
            return Err(Error::Config("snapshot layer count does not match widths".into()));
        }
        let layers = s
            .widths
            .windows(2)
            .zip(s.weights.iter().zip(&s.biases))
            .map(|(w, (wt, b))| Dense {
                in_dim: w[0],
                out_dim: w[1],
                weight: wt.clone(),
                bias: b.clone(),
            })
            .collect();
        Mlp::from_layers(layers)
    }
}
