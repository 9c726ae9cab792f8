use super::ops::{
    conv2d, conv2d_backward, fully_connected, fully_connected_backward, locally_connected,
    locally_connected_backward, relu, relu_backward, sigmoid, sigmoid_backward, spatial_softmax,
    spatial_softmax_backward,
};
use super::{dot, Differentiable, GradientBuffer, LayerParams, Tensor3};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum LayerKind {
    Conv2d(LayerParams),
    /// Flattens its input; output is a `out x 1 x 1` tensor.
    FullyConnected(LayerParams),
    LocallyConnected(LayerParams),
    SpatialSoftmax,
    Relu,
    Sigmoid,
}

/// A layer that remembers its last forward pass so `backward` can run.
#[derive(Debug, Clone)]
pub struct Layer {
    pub kind: LayerKind,
    cache: Option<(Tensor3, Tensor3)>,
}

impl Layer {
    pub fn new(kind: LayerKind) -> Self {
        Layer { kind, cache: None }
    }

    pub fn params(&self) -> Option<&LayerParams> {
        match &self.kind {
            LayerKind::Conv2d(p) | LayerKind::FullyConnected(p) | LayerKind::LocallyConnected(p) => {
                Some(p)
            }
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<&mut LayerParams> {
        match &mut self.kind {
            LayerKind::Conv2d(p) | LayerKind::FullyConnected(p) | LayerKind::LocallyConnected(p) => {
                Some(p)
            }
            _ => None,
        }
    }

    /// Forward pass without touching the cache.
    pub fn apply(&self, input: &Tensor3) -> Result<Tensor3> {
        match &self.kind {
            LayerKind::Conv2d(p) => conv2d(input, p),
            LayerKind::FullyConnected(p) => {
                let y = fully_connected(input.as_slice(), p)?;
                let n = y.len();
                Tensor3::from_vec(n, 1, 1, y)
            }
            LayerKind::LocallyConnected(p) => locally_connected(input, p),
            LayerKind::SpatialSoftmax => Ok(spatial_softmax(input)),
            LayerKind::Relu => Ok(relu(input)),
            LayerKind::Sigmoid => Ok(sigmoid(input)),
        }
    }

    pub fn forward(&mut self, input: &Tensor3) -> Result<Tensor3> {
        let out = self.apply(input)?;
        self.cache = Some((input.clone(), out.clone()));
        Ok(out)
    }

    /// Consumes the stored forward pass and returns the input gradient and,
    /// for trainable layers, the parameter gradient.
    pub fn backward(&mut self, grad_out: &Tensor3) -> Result<(Tensor3, Option<GradientBuffer>)> {
        let (input, output) = self.cache.take().ok_or(Error::NoForward)?;
        self.backward_with(&input, &output, grad_out)
    }

    fn backward_with(
        &self,
        input: &Tensor3,
        output: &Tensor3,
        grad_out: &Tensor3,
    ) -> Result<(Tensor3, Option<GradientBuffer>)> {
        match &self.kind {
            LayerKind::Conv2d(p) => {
                let (gi, gp) = conv2d_backward(input, p, grad_out)?;
                Ok((gi, Some(gp)))
            }
            LayerKind::FullyConnected(p) => {
                let (gi, gp) = fully_connected_backward(input.as_slice(), p, grad_out.as_slice())?;
                let (w, h, c) = input.dims();
                Ok((Tensor3::from_vec(w, h, c, gi)?, Some(gp)))
            }
            LayerKind::LocallyConnected(p) => {
                let (gi, gp) = locally_connected_backward(input, p, grad_out)?;
                Ok((gi, Some(gp)))
            }
            LayerKind::SpatialSoftmax => Ok((spatial_softmax_backward(output, grad_out)?, None)),
            LayerKind::Relu => Ok((relu_backward(input, grad_out)?, None)),
            LayerKind::Sigmoid => Ok((sigmoid_backward(output, grad_out)?, None)),
        }
    }
}

/// A chain of layers, scored by a fixed linear read-out `sum(r * f(x))`.
/// Used to gradient-check layers and layer stacks in isolation.
#[derive(Debug, Clone)]
pub struct Sequential {
    pub layers: Vec<Layer>,
    pub readout: Vec<f64>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>, readout: Vec<f64>) -> Self {
        Sequential { layers, readout }
    }

    pub fn forward(&mut self, input: &Tensor3) -> Result<Tensor3> {
        let mut x = input.clone();
        for l in &mut self.layers {
            x = l.forward(&x)?;
        }
        Ok(x)
    }

    fn evaluate(&self, input: &Tensor3) -> Result<(f64, u64, Vec<Tensor3>)> {
        let mut acts = vec![input.clone()];
        let mut signature = 0xcbf2_9ce4_8422_2325u64;
        for l in &self.layers {
            let y = l.apply(acts.last().expect("non-empty"))?;
            if matches!(l.kind, LayerKind::Relu) {
                for &v in acts.last().expect("non-empty").as_slice() {
                    signature = (signature ^ u64::from(v > 0.0)).wrapping_mul(0x100_0000_01b3);
                }
            }
            acts.push(y);
        }
        let out = acts.last().expect("non-empty");
        if out.len() != self.readout.len() {
            return Err(Error::Shape(format!(
                "read-out of length {} for output of length {}",
                self.readout.len(),
                out.len()
            )));
        }
        Ok((dot(out.as_slice(), &self.readout), signature, acts))
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if let Some(p) = l.params() {
                if i < p.num_params() {
                    return (li, i);
                }
                i -= p.num_params();
            }
        }
        panic!("parameter index out of range");
    }
}

impl Differentiable for Sequential {
    type Input = Tensor3;

    fn num_params(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|p| p.num_params())
            .sum()
    }

    fn param(&self, i: usize) -> f64 {
        let (li, j) = self.locate(i);
        self.layers[li].params().expect("trainable").param(j)
    }

    fn set_param(&mut self, i: usize, v: f64) {
        let (li, j) = self.locate(i);
        self.layers[li].params_mut().expect("trainable").set_param(j, v);
    }

    fn loss(&self, input: &Tensor3) -> (f64, u64) {
        let (l, sig, _) = self.evaluate(input).expect("valid network");
        (l, sig)
    }

    fn gradient(&self, input: &Tensor3) -> Vec<f64> {
        let (_, _, acts) = self.evaluate(input).expect("valid network");
        let out = acts.last().expect("non-empty");
        let (w, h, c) = out.dims();
        let mut g = Tensor3::from_vec(w, h, c, self.readout.clone()).expect("read-out shape");
        let mut per_layer: Vec<Option<GradientBuffer>> = vec![None; self.layers.len()];
        for (li, l) in self.layers.iter().enumerate().rev() {
            let (gi, gp) = l
                .backward_with(&acts[li], &acts[li + 1], &g)
                .expect("valid network");
            per_layer[li] = gp;
            g = gi;
        }
        per_layer.into_iter().flatten().flat_map(|b| b.flat().collect::<Vec<_>>()).collect()
    }

    fn input_gradient(&self, input: &Tensor3) -> Option<Vec<f64>> {
        let (_, _, acts) = self.evaluate(input).ok()?;
        let out = acts.last()?;
        let (w, h, c) = out.dims();
        let mut g = Tensor3::from_vec(w, h, c, self.readout.clone()).ok()?;
        for (li, l) in self.layers.iter().enumerate().rev() {
            g = l.backward_with(&acts[li], &acts[li + 1], &g).ok()?.0;
        }
        Some(g.into_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LayerShape;

    #[test]
    fn backward_requires_forward() {
        let mut l = Layer::new(LayerKind::Relu);
        let g = Tensor3::zeros(2, 2, 1);
        assert!(matches!(l.backward(&g), Err(Error::NoForward)));
        l.forward(&Tensor3::filled(2, 2, 1, 1.0)).unwrap();
        let (gi, gp) = l.backward(&Tensor3::filled(2, 2, 1, 3.0)).unwrap();
        assert_eq!(gi.as_slice(), &[3.0; 4]);
        assert!(gp.is_none());
        // the cache is consumed
        assert!(matches!(l.backward(&g), Err(Error::NoForward)));
    }

    #[test]
    fn trainable_layer_returns_param_gradient() {
        let p = LayerParams::zeros(LayerShape::Dense { input: 4, output: 2 });
        let mut l = Layer::new(LayerKind::FullyConnected(p));
        let x = Tensor3::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        l.forward(&x).unwrap();
        let (gi, gp) = l.backward(&Tensor3::from_vec(2, 1, 1, vec![1.0, -1.0]).unwrap()).unwrap();
        assert_eq!(gi.dims(), (2, 2, 1));
        let gp = gp.unwrap();
        assert_eq!(gp.weights, vec![1.0, 2.0, 3.0, 4.0, -1.0, -2.0, -3.0, -4.0]);
        assert_eq!(gp.bias, vec![1.0, -1.0]);
    }
}
