//! Minimal dense-tensor kernel for the per-target branches.
//!
//! Tensors are `W x H x C`, stored row-major with channels innermost:
//! element `(x, y, c)` lives at `(y * W + x) * C + c`. Two-dimensional maps
//! (visibility, attention) are tensors with `C = 1`.

mod gradcheck;
mod layer;
mod ops;

pub use gradcheck::{
    grad_check, grad_check_input, grad_check_params, Differentiable, GradCheckReport, FD_STEP, REL_ERROR_FLOOR,
};
pub use layer::{Layer, LayerKind, Sequential};
pub use ops::{
    bce_logits, bce_logits_grad, conv2d, conv2d_backward, cross_entropy, fully_connected,
    fully_connected_backward, locally_connected, locally_connected_backward, relu, relu_backward,
    sigmoid, sigmoid_backward, sigmoid_scalar, spatial_softmax, spatial_softmax_backward,
    CE_EPSILON,
};

pub(crate) use ops::{axpy, conv2d_backward_into, dot, fully_connected_backward_into};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!(width >= 1 && height >= 1 && channels >= 1, "empty tensor");
        Tensor3 {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        let mut t = Self::zeros(width, height, channels);
        t.data.fill(value);
        t
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "tensor dims must be >= 1, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height}x{channels} tensor",
                data.len()
            )));
        }
        Ok(Tensor3 {
            width,
            height,
            channels,
            data,
        })
    }

    /// A single-channel `W x H` map.
    pub fn map(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    /// All channels of one spatial cell.
    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels]
    }

    pub fn cell_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = self.index(x, y, 0);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.dims() == other.dims()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mapv(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Geometry of one trainable layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    /// Zero-padded "same" convolution, stride 1. Weights are laid out
    /// `[ky][kx][cin][cout]`.
    Conv {
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
    },
    /// Dense layer, weights laid out `[output][input]`.
    Dense { input: usize, output: usize },
    /// One independent weight and bias per cell of a `width x height` map.
    Local { width: usize, height: usize },
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        match *self {
            LayerShape::Conv { kh, kw, cin, cout } => kh * kw * cin * cout,
            LayerShape::Dense { input, output } => input * output,
            LayerShape::Local { width, height } => width * height,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerShape::Conv { cout, .. } => cout,
            LayerShape::Dense { output, .. } => output,
            LayerShape::Local { width, height } => width * height,
        }
    }
}

/// Weights and biases for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    shape: LayerShape,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(shape: LayerShape) -> Self {
        LayerParams {
            shape,
            weights: vec![0.0; shape.weight_len()],
            bias: vec![0.0; shape.bias_len()],
        }
    }

    /// Weights drawn from `N(0, std^2)`, biases zero.
    pub fn gaussian<R: Rng + ?Sized>(shape: LayerShape, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut p = Self::zeros(shape);
        for w in &mut p.weights {
            *w = normal.sample(rng);
        }
        p
    }

    pub fn from_parts(shape: LayerShape, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != shape.weight_len() || bias.len() != shape.bias_len() {
            return Err(Error::Shape(format!(
                "{shape:?} expects {} weights and {} biases, got {} and {}",
                shape.weight_len(),
                shape.bias_len(),
                weights.len(),
                bias.len()
            )));
        }
        Ok(LayerParams {
            shape,
            weights,
            bias,
        })
    }

    pub fn shape(&self) -> LayerShape {
        self.shape
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Flat view index `i` over weights followed by biases.
    pub fn param(&self, i: usize) -> f64 {
        if i < self.weights.len() {
            self.weights[i]
        } else {
            self.bias[i - self.weights.len()]
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let nw = self.weights.len();
        if i < nw {
            self.weights[i] = v;
        } else {
            self.bias[i - nw] = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Gradients mirroring a [`LayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    shape: LayerShape,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradientBuffer {
    pub fn zeros(shape: LayerShape) -> Self {
        GradientBuffer {
            shape,
            weights: vec![0.0; shape.weight_len()],
            bias: vec![0.0; shape.bias_len()],
        }
    }

    pub fn zeros_like(params: &LayerParams) -> Self {
        Self::zeros(params.shape)
    }

    pub fn shape(&self) -> LayerShape {
        self.shape
    }

    pub fn clear(&mut self) {
        self.weights.fill(0.0);
        self.bias.fill(0.0);
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GradientBuffer, scale: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "gradient {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        axpy(scale, &other.weights, &mut self.weights);
        axpy(scale, &other.bias, &mut self.bias);
        Ok(())
    }

    /// Flat view over weights followed by biases, same order as
    /// [`LayerParams::param`].
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(&self.bias).copied()
    }
}

/// Plain gradient-descent update `p <- p - lr * g`.
pub fn sgd_step(params: &mut LayerParams, grads: &GradientBuffer, lr: f64) -> Result<()> {
    if params.shape != grads.shape {
        return Err(Error::Shape(format!(
            "params {:?} vs gradients {:?}",
            params.shape, grads.shape
        )));
    }
    axpy(-lr, &grads.weights, &mut params.weights);
    axpy(-lr, &grads.bias, &mut params.bias);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_arithmetic() {
        let shape = LayerShape::Dense {
            input: 1,
            output: 1,
        };
        let mut p = LayerParams::from_parts(shape, vec![1.0], vec![1.0]).unwrap();
        let mut g = GradientBuffer::zeros(shape);
        g.weights[0] = 2.0;
        g.bias[0] = 2.0;
        sgd_step(&mut p, &g, 0.1).unwrap();
        assert!((p.weights[0] - 0.8).abs() < 1e-15);
        assert!((p.bias[0] - 0.8).abs() < 1e-15);

        let before = p.clone();
        sgd_step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p, before);
        sgd_step(&mut p, &GradientBuffer::zeros(shape), 0.5).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn sgd_shape_mismatch() {
        let mut p = LayerParams::zeros(LayerShape::Dense {
            input: 2,
            output: 1,
        });
        let g = GradientBuffer::zeros(LayerShape::Dense {
            input: 1,
            output: 2,
        });
        assert!(matches!(sgd_step(&mut p, &g, 0.1), Err(Error::Shape(_))));
    }

    #[test]
    fn tensor_layout() {
        let mut t = Tensor3::zeros(3, 2, 4);
        t.set(2, 1, 3, 7.0);
        assert_eq!(t.as_slice()[(1 * 3 + 2) * 4 + 3], 7.0);
        assert_eq!(t.cell(2, 1), &[0.0, 0.0, 0.0, 7.0]);
        assert!(Tensor3::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
    }
}
