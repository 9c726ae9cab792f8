use super::{GradientBuffer, LayerParams, LayerShape, Tensor3};
use crate::error::{Error, Result};

/// Probability clamp used by [`cross_entropy`].
pub const CE_EPSILON: f64 = 1e-7;

/// Dot product with eight independent accumulators so the loop vectorizes.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += a * x`.
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn conv_dims(params: &LayerParams) -> Result<(usize, usize, usize, usize)> {
    match params.shape() {
        LayerShape::Conv { kh, kw, cin, cout } => Ok((kh, kw, cin, cout)),
        s => Err(Error::Shape(format!("expected conv params, got {s:?}"))),
    }
}

/// Valid kernel offsets along one axis for output position `pos`.
#[inline]
fn taps(pos: usize, k: usize, extent: usize) -> (usize, usize) {
    let pad = (k - 1) / 2;
    // input index = pos + t - pad, must lie in [0, extent)
    let lo = pad.saturating_sub(pos);
    let hi = (extent + pad - pos).min(k);
    (lo, hi)
}

/// Zero-padded "same" convolution with stride 1.
pub fn conv2d(input: &Tensor3, params: &LayerParams) -> Result<Tensor3> {
    let (kh, kw, cin, cout) = conv_dims(params)?;
    if input.channels() != cin {
        return Err(Error::Shape(format!(
            "conv expects {cin} input channels, got {}",
            input.channels()
        )));
    }
    let (w, h) = (input.width(), input.height());
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut out = Tensor3::zeros(w, h, cout);
    let src = input.as_slice();
    let weights = &params.weights;
    let dst = out.as_mut_slice();
    for y in 0..h {
        let (ky0, ky1) = taps(y, kh, h);
        for x in 0..w {
            let (kx0, kx1) = taps(x, kw, w);
            let o = &mut dst[(y * w + x) * cout..][..cout];
            o.copy_from_slice(&params.bias);
            for ky in ky0..ky1 {
                let iy = y + ky - ph;
                for kx in kx0..kx1 {
                    let ix = x + kx - pw;
                    let inp = &src[(iy * w + ix) * cin..][..cin];
                    let wbase = (ky * kw + kx) * cin * cout;
                    for (ci, &a) in inp.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        axpy(a, &weights[wbase + ci * cout..][..cout], o);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to its input and parameters.
pub fn conv2d_backward(
    input: &Tensor3,
    params: &LayerParams,
    grad_out: &Tensor3,
) -> Result<(Tensor3, GradientBuffer)> {
    let mut grads = GradientBuffer::zeros_like(params);
    let grad_in = conv2d_backward_into(input, params, grad_out, &mut grads, true)?;
    Ok((grad_in.expect("input gradient requested"), grads))
}

/// Accumulates parameter gradients into `grads`; returns the input gradient
/// when `want_input` is set.
pub(crate) fn conv2d_backward_into(
    input: &Tensor3,
    params: &LayerParams,
    grad_out: &Tensor3,
    grads: &mut GradientBuffer,
    want_input: bool,
) -> Result<Option<Tensor3>> {
    let (kh, kw, cin, cout) = conv_dims(params)?;
    let (w, h) = (input.width(), input.height());
    if input.channels() != cin || grad_out.dims() != (w, h, cout) || grads.shape() != params.shape()
    {
        return Err(Error::Shape("conv backward dimensions".into()));
    }
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut grad_in = want_input.then(|| Tensor3::zeros(w, h, cin));
    let src = input.as_slice();
    let g = grad_out.as_slice();
    for y in 0..h {
        let (ky0, ky1) = taps(y, kh, h);
        for x in 0..w {
            let (kx0, kx1) = taps(x, kw, w);
            let go = &g[(y * w + x) * cout..][..cout];
            if go.iter().all(|&v| v == 0.0) {
                continue;
            }
            axpy(1.0, go, &mut grads.bias);
            for ky in ky0..ky1 {
                let iy = y + ky - ph;
                for kx in kx0..kx1 {
                    let ix = x + kx - pw;
                    let ibase = (iy * w + ix) * cin;
                    let wbase = (ky * kw + kx) * cin * cout;
                    for ci in 0..cin {
                        let a = src[ibase + ci];
                        let woff = wbase + ci * cout;
                        if a != 0.0 {
                            axpy(a, go, &mut grads.weights[woff..woff + cout]);
                        }
                        if let Some(gi) = grad_in.as_mut() {
                            gi.as_mut_slice()[ibase + ci] +=
                                dot(go, &params.weights[woff..woff + cout]);
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}

fn dense_dims(params: &LayerParams) -> Result<(usize, usize)> {
    match params.shape() {
        LayerShape::Dense { input, output } => Ok((input, output)),
        s => Err(Error::Shape(format!("expected dense params, got {s:?}"))),
    }
}

/// `y = W x + b` over the flattened input.
pub fn fully_connected(input: &[f64], params: &LayerParams) -> Result<Vec<f64>> {
    let (n_in, n_out) = dense_dims(params)?;
    if input.len() != n_in {
        return Err(Error::Shape(format!(
            "dense layer expects {n_in} inputs, got {}",
            input.len()
        )));
    }
    Ok((0..n_out)
        .map(|o| params.bias[o] + dot(&params.weights[o * n_in..(o + 1) * n_in], input))
        .collect())
}

pub fn fully_connected_backward(
    input: &[f64],
    params: &LayerParams,
    grad_out: &[f64],
) -> Result<(Vec<f64>, GradientBuffer)> {
    let mut grads = GradientBuffer::zeros_like(params);
    let gi = fully_connected_backward_into(input, params, grad_out, &mut grads, true)?;
    Ok((gi.expect("input gradient requested"), grads))
}

pub(crate) fn fully_connected_backward_into(
    input: &[f64],
    params: &LayerParams,
    grad_out: &[f64],
    grads: &mut GradientBuffer,
    want_input: bool,
) -> Result<Option<Vec<f64>>> {
    let (n_in, n_out) = dense_dims(params)?;
    if input.len() != n_in || grad_out.len() != n_out || grads.shape() != params.shape() {
        return Err(Error::Shape("dense backward dimensions".into()));
    }
    let mut grad_in = want_input.then(|| vec![0.0; n_in]);
    for (o, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grads.bias[o] += g;
        axpy(g, input, &mut grads.weights[o * n_in..(o + 1) * n_in]);
        if let Some(gi) = grad_in.as_mut() {
            axpy(g, &params.weights[o * n_in..(o + 1) * n_in], gi);
        }
    }
    Ok(grad_in)
}

fn local_check(map: &Tensor3, params: &LayerParams) -> Result<()> {
    match params.shape() {
        LayerShape::Local { width, height }
            if map.dims() == (width, height, 1) =>
        {
            Ok(())
        }
        s => Err(Error::Shape(format!(
            "locally connected {s:?} applied to {:?}",
            map.dims()
        ))),
    }
}

/// `out[i, j] = weight[i, j] * in[i, j] + bias[i, j]`.
pub fn locally_connected(map: &Tensor3, params: &LayerParams) -> Result<Tensor3> {
    local_check(map, params)?;
    let data = map
        .as_slice()
        .iter()
        .zip(&params.weights)
        .zip(&params.bias)
        .map(|((v, w), b)| w * v + b)
        .collect();
    Tensor3::map(map.width(), map.height(), data)
}

pub fn locally_connected_backward(
    map: &Tensor3,
    params: &LayerParams,
    grad_out: &Tensor3,
) -> Result<(Tensor3, GradientBuffer)> {
    local_check(map, params)?;
    if !grad_out.same_shape(map) {
        return Err(Error::Shape("local backward dimensions".into()));
    }
    let mut grads = GradientBuffer::zeros_like(params);
    let g = grad_out.as_slice();
    for (i, (&gv, &v)) in g.iter().zip(map.as_slice()).enumerate() {
        grads.weights[i] = gv * v;
        grads.bias[i] = gv;
    }
    let gi = g.iter().zip(&params.weights).map(|(gv, w)| gv * w).collect();
    Ok((Tensor3::map(map.width(), map.height(), gi)?, grads))
}

/// Softmax over every entry of the map, with max subtraction.
pub fn spatial_softmax(map: &Tensor3) -> Tensor3 {
    let m = map
        .as_slice()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = map.as_slice().iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let data = exps.into_iter().map(|e| e / z).collect();
    Tensor3::from_vec(map.width(), map.height(), map.channels(), data).expect("same shape")
}

/// Input gradient of the softmax, given its output `y`:
/// `g_in = y * (g - sum(y * g))`.
pub fn spatial_softmax_backward(output: &Tensor3, grad_out: &Tensor3) -> Result<Tensor3> {
    if !output.same_shape(grad_out) {
        return Err(Error::Shape("softmax backward dimensions".into()));
    }
    let y = output.as_slice();
    let g = grad_out.as_slice();
    let s = dot(y, g);
    let data = y.iter().zip(g).map(|(yi, gi)| yi * (gi - s)).collect();
    Tensor3::from_vec(output.width(), output.height(), output.channels(), data)
}

pub fn relu(t: &Tensor3) -> Tensor3 {
    t.mapv(|v| v.max(0.0))
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor3, grad_out: &Tensor3) -> Result<Tensor3> {
    if !input.same_shape(grad_out) {
        return Err(Error::Shape("relu backward dimensions".into()));
    }
    let data = input
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor3::from_vec(input.width(), input.height(), input.channels(), data)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(t: &Tensor3) -> Tensor3 {
    t.mapv(sigmoid_scalar)
}

/// Input gradient of the sigmoid, given its output `y`: `g * y * (1 - y)`.
pub fn sigmoid_backward(output: &Tensor3, grad_out: &Tensor3) -> Result<Tensor3> {
    if !output.same_shape(grad_out) {
        return Err(Error::Shape("sigmoid backward dimensions".into()));
    }
    let data = output
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&y, &g)| g * y * (1.0 - y))
        .collect();
    Tensor3::from_vec(output.width(), output.height(), output.channels(), data)
}

/// Mean binary cross-entropy of probabilities against `{0, 1}` targets, with
/// predictions clamped to `[CE_EPSILON, 1 - CE_EPSILON]`.
pub fn cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "cross entropy over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(CE_EPSILON, 1.0 - CE_EPSILON);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok((total / pred.len() as f64).max(0.0))
}

/// Binary cross-entropy of `sigmoid(z)` against `t`, evaluated from the
/// logit: `softplus(z) - t * z`. Smooth everywhere, no clamping.
#[inline]
pub fn bce_logits(z: f64, t: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - t * z
}

/// Derivative of [`bce_logits`] with respect to the logit.
#[inline]
pub fn bce_logits_grad(z: f64, t: f64) -> f64 {
    sigmoid_scalar(z) - t
}
