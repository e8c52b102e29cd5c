use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::{normalize_in_place, SeededRng};

/// SiLU, `a * sigmoid(a)`: a smooth ramp used on every hidden layer.
#[inline]
pub fn silu(a: f64) -> f64 {
    a / (1.0 + (-a).exp())
}

#[inline]
pub fn silu_grad(a: f64) -> f64 {
    let s = 1.0 / (1.0 + (-a).exp());
    s * (1.0 + a * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully connected projection head: SiLU on hidden layers, linear output,
/// rows l2-normalized at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    layers: Vec<Layer>,
}

pub(crate) struct HeadCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    /// Normalized output rows.
    pub(crate) out: Array2<f64>,
    norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub layers: Vec<Layer>,
}

impl MlpHead {
    /// Random head with the given layer widths `[in, h_1, ..., out]`.
    pub fn new(dims: &[usize], rng: &mut SeededRng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::param(format!("invalid head dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_fn((fan_out, fan_in), |_| std * rng.standard_normal()),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("head needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(Error::shape(format!("layer {i}: bias/weight mismatch")));
            }
            if i > 0 && layers[i - 1].weight.nrows() != l.weight.ncols() {
                return Err(Error::shape(format!("layer {i}: input width mismatch")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.nrows()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.nrows())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Normalized embeddings for a batch of feature rows.
    pub fn forward(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(features)?.out)
    }

    pub(crate) fn forward_cached(&self, features: ArrayView2<f64>) -> Result<HeadCache> {
        if features.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "features have {} columns, head expects {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = features.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let a = h.dot(&layer.weight.t()) + &layer.bias;
            let next = if i < last { a.mapv(silu) } else { a.clone() };
            inputs.push(h);
            pre.push(a);
            h = next;
        }
        let mut out = h;
        let norms = out
            .axis_iter_mut(Axis(0))
            .map(|mut r| normalize_in_place(r.as_slice_mut().expect("contiguous row")))
            .collect();
        Ok(HeadCache {
            inputs,
            pre,
            out,
            norms,
        })
    }

    /// Gradients of the parameters given the gradient w.r.t. the normalized
    /// output rows.
    pub(crate) fn backward(&self, cache: &HeadCache, d_out: &Array2<f64>) -> HeadGrads {
        let mut da = normalize_rows_backward(&cache.out, &cache.norms, d_out);
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let weight = da.t().dot(&cache.inputs[i]);
            let bias = da.sum_axis(Axis(0));
            if i > 0 {
                let dh = da.dot(&self.layers[i].weight);
                da = dh * cache.pre[i - 1].mapv(silu_grad);
            }
            grads.push(Layer { weight, bias });
        }
        grads.reverse();
        HeadGrads { layers: grads }
    }
}

/// Backward through row normalization `y = u / |u|`. Zero rows pass no
/// gradient.
pub(crate) fn normalize_rows_backward(y: &Array2<f64>, norms: &[f64], dy: &Array2<f64>) -> Array2<f64> {
    let mut du = dy.clone();
    for ((mut row, yr), &n) in du.axis_iter_mut(Axis(0)).zip(y.axis_iter(Axis(0))).zip(norms) {
        if n > 0.0 {
            let proj = row.dot(&yr);
            row.zip_mut_with(&yr, |g, &yv| *g = (*g - yv * proj) / n);
        } else {
            row.fill(0.0);
        }
    }
    du
}
