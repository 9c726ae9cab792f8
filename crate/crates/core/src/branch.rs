//! Target-specific branch: visibility map, spatial attention, classifier and
//! temporal attention, trained online per target.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{replace_region, CellRect, FeatureGeometry};
use crate::tensor::{
    bce_logits, bce_logits_grad, conv2d, conv2d_backward_into, fully_connected,
    fully_connected_backward_into, locally_connected, relu, sgd_step,
    sigmoid_scalar, spatial_softmax, Differentiable, GradientBuffer, LayerParams, LayerShape,
    Tensor3,
};

/// Channels of the visibility and classifier convolutions.
pub const VIS_CHANNELS: usize = 32;
pub const CLS_CHANNELS: usize = 5;
/// Kernel height x width.
pub const KERNEL: (usize, usize) = (3, 7);

/// Learnable weights of the temporal attention `alpha = sigmoid(gamma*s + beta*o + bias)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalParams {
    pub gamma: f64,
    pub beta: f64,
    pub bias: f64,
}

impl Default for TemporalParams {
    fn default() -> Self {
        TemporalParams {
            gamma: -1.0,
            beta: 1.0,
            bias: 0.0,
        }
    }
}

/// Temporal attention value with the inputs it was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalAttention {
    pub alpha: f64,
    /// Mean visibility.
    pub s: f64,
    /// Largest overlap with any other target.
    pub o: f64,
}

impl TemporalAttention {
    /// A fixed weight with no inputs attached, used when temporal attention
    /// is switched off.
    pub fn fixed(alpha: f64) -> Self {
        TemporalAttention { alpha, s: 0.0, o: 0.0 }
    }
}

pub fn temporal_attention(p: &TemporalParams, s: f64, o: f64) -> TemporalAttention {
    TemporalAttention {
        alpha: sigmoid_scalar(p.gamma * s + p.beta * o + p.bias),
        s,
        o,
    }
}

/// Training hyper-parameters for one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_init: f64,
    /// Rate of the visibility pre-training stage of initialization.
    pub lr_vis: f64,
    pub lr_online: f64,
    pub iters_init: usize,
    pub iters_online: usize,
    /// Samples per SGD step during initialization; 0 uses the whole set.
    pub init_batch: usize,
    pub history_cap: usize,
    pub init_std: f64,
    pub learn_temporal: bool,
    pub temporal: TemporalParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_init: 1e-3,
            lr_vis: 1e-3,
            lr_online: 5e-4,
            iters_init: 50,
            iters_online: 5,
            init_batch: 0,
            history_cap: 50,
            init_std: 0.01,
            learn_temporal: false,
            temporal: TemporalParams::default(),
        }
    }
}

/// Multiplies every channel of `phi` by the attention map.
pub fn attend(phi: &Tensor3, psi: &Tensor3) -> Result<Tensor3> {
    if psi.channels() != 1 || (phi.width(), phi.height()) != (psi.width(), psi.height()) {
        return Err(Error::Shape(format!(
            "attention {:?} for features {:?}",
            psi.dims(),
            phi.dims()
        )));
    }
    let c = phi.channels();
    let mut out = phi.clone();
    for (cell, &a) in out.as_mut_slice().chunks_exact_mut(c).zip(psi.as_slice()) {
        cell.iter_mut().for_each(|v| *v *= a);
    }
    Ok(out)
}

fn uniform_attention(geom: &FeatureGeometry) -> Tensor3 {
    Tensor3::filled(geom.width, geom.height, 1, 1.0 / geom.cells() as f64)
}

/// Per-layer gradients of a whole branch.
#[derive(Debug, Clone)]
struct Grads {
    vis_conv: GradientBuffer,
    vis_fc: GradientBuffer,
    att: GradientBuffer,
    cls_conv: GradientBuffer,
    cls_fc: GradientBuffer,
}

/// Which parts of the branch a forward pass uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionMode {
    /// `Psi` computed from the visibility map.
    Spatial,
    /// `Psi` fixed to the uniform map.
    Uniform,
}

/// Intermediate values of one forward pass through the full branch.
struct Trace {
    vis: Option<VisTrace>,
    psi: Tensor3,
    /// Classifier input, `Phi_att` times the input gain.
    cls_in: Tensor3,
    a2: Tensor3,
    r2: Tensor3,
    z: f64,
}

struct VisTrace {
    a1: Tensor3,
    r1: Tensor3,
    v: Tensor3,
}

#[derive(Debug, Clone)]
pub struct Branch {
    geom: FeatureGeometry,
    pub vis_conv: LayerParams,
    pub vis_fc: LayerParams,
    pub att: LayerParams,
    pub cls_conv: LayerParams,
    pub cls_fc: LayerParams,
    pub temporal: TemporalParams,
    history: VecDeque<Tensor3>,
    history_cap: usize,
}

/// Loss terms of one update batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub neg: f64,
    pub pos_t: f64,
    pub pos_h: f64,
    pub total: f64,
}

/// One online update's samples.
#[derive(Debug, Clone, Copy)]
pub struct UpdateBatch<'a> {
    pub pos_t: &'a [&'a Tensor3],
    pub pos_h: &'a [&'a Tensor3],
    pub neg: &'a [&'a Tensor3],
}

/// Everything branch initialization trains on.
#[derive(Debug, Clone)]
pub struct InitSet {
    /// Pooled features of the initial state.
    pub pristine: Tensor3,
    /// Jittered samples around the initial state with their visibility
    /// ground truth (1 on cells inside the initial box).
    pub jittered: Vec<(Tensor3, Tensor3)>,
    /// Features of other targets or background, used for replacement and
    /// as negatives.
    pub donors: Vec<Tensor3>,
    /// Additional negatives away from the initial state.
    pub background: Vec<Tensor3>,
}

/// The samples built from an [`InitSet`].
#[derive(Debug, Clone)]
pub struct AugmentedSet {
    /// Visibility training pairs (features, ground-truth map).
    pub visibility: Vec<(Tensor3, Tensor3)>,
    pub positives: Vec<Tensor3>,
    pub negatives: Vec<Tensor3>,
}

impl Branch {
    pub fn zeros(geom: FeatureGeometry, history_cap: usize) -> Self {
        let (vis_conv, vis_fc, att, cls_conv, cls_fc) = shapes(&geom);
        Branch {
            geom,
            vis_conv: LayerParams::zeros(vis_conv),
            vis_fc: LayerParams::zeros(vis_fc),
            att: LayerParams::zeros(att),
            cls_conv: LayerParams::zeros(cls_conv),
            cls_fc: LayerParams::zeros(cls_fc),
            temporal: TemporalParams::default(),
            history: VecDeque::new(),
            history_cap,
        }
    }

    /// Gaussian weights with standard deviation `std`, zero biases.
    pub fn random<R: Rng + ?Sized>(
        geom: FeatureGeometry,
        std: f64,
        history_cap: usize,
        rng: &mut R,
    ) -> Self {
        let (vis_conv, vis_fc, att, cls_conv, cls_fc) = shapes(&geom);
        Branch {
            geom,
            vis_conv: LayerParams::gaussian(vis_conv, std, rng),
            vis_fc: LayerParams::gaussian(vis_fc, std, rng),
            att: LayerParams::gaussian(att, std, rng),
            cls_conv: LayerParams::gaussian(cls_conv, std, rng),
            cls_fc: LayerParams::gaussian(cls_fc, std, rng),
            temporal: TemporalParams::default(),
            history: VecDeque::new(),
            history_cap,
        }
    }

    pub fn geometry(&self) -> FeatureGeometry {
        self.geom
    }

    pub fn layers(&self) -> [&LayerParams; 5] {
        [&self.vis_conv, &self.vis_fc, &self.att, &self.cls_conv, &self.cls_fc]
    }

    pub fn layers_mut(&mut self) -> [&mut LayerParams; 5] {
        [
            &mut self.vis_conv,
            &mut self.vis_fc,
            &mut self.att,
            &mut self.cls_conv,
            &mut self.cls_fc,
        ]
    }

    pub fn history(&self) -> &VecDeque<Tensor3> {
        &self.history
    }

    pub fn history_cap(&self) -> usize {
        self.history_cap
    }

    /// Appends a positive sample, evicting the oldest at capacity.
    pub fn push_history(&mut self, phi: Tensor3) -> Result<()> {
        self.geom.check(&phi)?;
        if self.history_cap == 0 {
            return Ok(());
        }
        if self.history.len() == self.history_cap {
            self.history.pop_front();
        }
        self.history.push_back(phi);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|p| p.is_finite())
    }

    fn vis_forward(&self, phi: &Tensor3) -> Result<VisTrace> {
        self.geom.check(phi)?;
        let a1 = conv2d(phi, &self.vis_conv)?;
        let r1 = relu(&a1);
        let z = fully_connected(r1.as_slice(), &self.vis_fc)?;
        let v = Tensor3::map(
            self.geom.width,
            self.geom.height,
            z.into_iter().map(sigmoid_scalar).collect(),
        )?;
        Ok(VisTrace { a1, r1, v })
    }

    /// Visibility map `V` in `[0, 1]`.
    pub fn visibility(&self, phi: &Tensor3) -> Result<Tensor3> {
        Ok(self.vis_forward(phi)?.v)
    }

    /// `Psi = softmax(local(V))`.
    pub fn spatial_attention(&self, v: &Tensor3) -> Result<Tensor3> {
        Ok(spatial_softmax(&locally_connected(v, &self.att)?))
    }

    /// Fixed gain `W * H` on the classifier input. Attention maps sum to
    /// one, so this keeps the convolution input at the feature scale.
    pub fn cls_gain(&self) -> f64 {
        self.geom.cells() as f64
    }

    fn cls_logit(&self, phi_att: &Tensor3) -> Result<(Tensor3, Tensor3, Tensor3, f64)> {
        self.geom.check(phi_att)?;
        let gain = self.cls_gain();
        let mut x = phi_att.clone();
        x.as_mut_slice().iter_mut().for_each(|v| *v *= gain);
        let a2 = conv2d(&x, &self.cls_conv)?;
        let r2 = relu(&a2);
        let z = fully_connected(r2.as_slice(), &self.cls_fc)?[0];
        Ok((x, a2, r2, z))
    }

    /// Target probability of attended features.
    pub fn classify(&self, phi_att: &Tensor3) -> Result<f64> {
        Ok(sigmoid_scalar(self.cls_logit(phi_att)?.3))
    }

    fn trace(&self, phi: &Tensor3, mode: AttentionMode) -> Result<Trace> {
        let (vis, psi) = match mode {
            AttentionMode::Spatial => {
                let vt = self.vis_forward(phi)?;
                let psi = self.spatial_attention(&vt.v)?;
                (Some(vt), psi)
            }
            AttentionMode::Uniform => {
                self.geom.check(phi)?;
                (None, uniform_attention(&self.geom))
            }
        };
        let (cls_in, a2, r2, z) = self.cls_logit(&attend(phi, &psi)?)?;
        Ok(Trace {
            vis,
            psi,
            cls_in,
            a2,
            r2,
            z,
        })
    }

    /// Full pipeline score of a pooled candidate.
    pub fn score(&self, phi: &Tensor3, mode: AttentionMode) -> Result<f64> {
        Ok(sigmoid_scalar(self.trace(phi, mode)?.z))
    }

    pub fn temporal_attention(&self, s: f64, o: f64) -> TemporalAttention {
        temporal_attention(&self.temporal, s, o)
    }

    fn zero_grads(&self) -> Grads {
        Grads {
            vis_conv: GradientBuffer::zeros_like(&self.vis_conv),
            vis_fc: GradientBuffer::zeros_like(&self.vis_fc),
            att: GradientBuffer::zeros_like(&self.att),
            cls_conv: GradientBuffer::zeros_like(&self.cls_conv),
            cls_fc: GradientBuffer::zeros_like(&self.cls_fc),
        }
    }

    /// Backpropagates `dL/dz = gz` through the classifier and, in spatial
    /// mode, the attention and visibility layers.
    fn backward_logit(&self, phi: &Tensor3, t: &Trace, gz: f64, g: &mut Grads) -> Result<()> {
        let dr2 = fully_connected_backward_into(
            t.r2.as_slice(),
            &self.cls_fc,
            &[gz],
            &mut g.cls_fc,
            true,
        )?
        .expect("input gradient");
        let mut da2 = Tensor3::from_vec(t.a2.width(), t.a2.height(), t.a2.channels(), dr2)?;
        for (d, &a) in da2.as_mut_slice().iter_mut().zip(t.a2.as_slice()) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        let Some(vt) = &t.vis else {
            conv2d_backward_into(&t.cls_in, &self.cls_conv, &da2, &mut g.cls_conv, false)?;
            return Ok(());
        };
        let mut dphi_att = conv2d_backward_into(&t.cls_in, &self.cls_conv, &da2, &mut g.cls_conv, true)?
            .expect("input gradient");
        let gain = self.cls_gain();
        dphi_att.as_mut_slice().iter_mut().for_each(|d| *d *= gain);
        let c = phi.channels();
        // dPsi(i) = sum_c dPhi_att(i, c) * Phi(i, c)
        let dpsi: Vec<f64> = dphi_att
            .as_slice()
            .chunks_exact(c)
            .zip(phi.as_slice().chunks_exact(c))
            .map(|(d, p)| crate::tensor::dot(d, p))
            .collect();
        let psi = t.psi.as_slice();
        let inner: f64 = crate::tensor::dot(psi, &dpsi);
        let du: Vec<f64> = psi.iter().zip(&dpsi).map(|(y, d)| y * (d - inner)).collect();
        let v = vt.v.as_slice();
        let mut dzv = Vec::with_capacity(v.len());
        for (i, &d) in du.iter().enumerate() {
            g.att.weights[i] += d * v[i];
            g.att.bias[i] += d;
            let dv = d * self.att.weights[i];
            dzv.push(dv * v[i] * (1.0 - v[i]));
        }
        self.vis_backward(phi, vt, &dzv, g)
    }

    /// Backpropagates `dL/dz_v` (pre-sigmoid visibility) into the
    /// visibility layers.
    fn vis_backward(&self, phi: &Tensor3, vt: &VisTrace, dzv: &[f64], g: &mut Grads) -> Result<()> {
        let dr1 = fully_connected_backward_into(vt.r1.as_slice(), &self.vis_fc, dzv, &mut g.vis_fc, true)?
            .expect("input gradient");
        let mut da1 = Tensor3::from_vec(vt.a1.width(), vt.a1.height(), vt.a1.channels(), dr1)?;
        for (d, &a) in da1.as_mut_slice().iter_mut().zip(vt.a1.as_slice()) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        conv2d_backward_into(phi, &self.vis_conv, &da1, &mut g.vis_conv, false)?;
        Ok(())
    }

    fn apply(&mut self, g: &Grads, lr: f64, mode: AttentionMode) -> Result<()> {
        sgd_step(&mut self.cls_conv, &g.cls_conv, lr)?;
        sgd_step(&mut self.cls_fc, &g.cls_fc, lr)?;
        if mode == AttentionMode::Spatial {
            sgd_step(&mut self.att, &g.att, lr)?;
            sgd_step(&mut self.vis_fc, &g.vis_fc, lr)?;
            sgd_step(&mut self.vis_conv, &g.vis_conv, lr)?;
        }
        Ok(())
    }

    /// Mean cross-entropy of the visibility map against `target`.
    pub fn visibility_loss(&self, phi: &Tensor3, target: &Tensor3) -> Result<f64> {
        let vt = self.vis_forward(phi)?;
        let z = self.vis_logits(&vt);
        Ok(z.iter()
            .zip(target.as_slice())
            .map(|(&z, &t)| bce_logits(z, t))
            .sum::<f64>()
            / z.len() as f64)
    }

    fn vis_logits(&self, vt: &VisTrace) -> Vec<f64> {
        fully_connected(vt.r1.as_slice(), &self.vis_fc).expect("checked shapes")
    }

    /// One SGD step on the visibility cross-entropy, averaged over `batch`.
    fn vis_step(&mut self, batch: &[&(Tensor3, Tensor3)], lr: f64) -> Result<()> {
        let mut g = self.zero_grads();
        let n = (batch.len() * self.geom.cells()) as f64;
        for (phi, target) in batch {
            let vt = self.vis_forward(phi)?;
            let dz: Vec<f64> = self
                .vis_logits(&vt)
                .iter()
                .zip(target.as_slice())
                .map(|(&z, &t)| bce_logits_grad(z, t) / n)
                .collect();
            self.vis_backward(phi, &vt, &dz, &mut g)?;
        }
        sgd_step(&mut self.vis_fc, &g.vis_fc, lr)?;
        sgd_step(&mut self.vis_conv, &g.vis_conv, lr)
    }

    /// Accumulates the gradient of `weight * mean(BCE(sample, label))`.
    fn accumulate(
        &self,
        samples: &[&Tensor3],
        label: f64,
        weight: f64,
        mode: AttentionMode,
        g: &mut Grads,
    ) -> Result<f64> {
        if samples.is_empty() || weight == 0.0 {
            return Ok(0.0);
        }
        let scale = weight / samples.len() as f64;
        let mut loss = 0.0;
        for phi in samples {
            let t = self.trace(phi, mode)?;
            loss += bce_logits(t.z, label);
            self.backward_logit(phi, &t, scale * bce_logits_grad(t.z, label), g)?;
        }
        Ok(loss / samples.len() as f64)
    }

    fn mean_bce(&self, samples: &[&Tensor3], label: f64, mode: AttentionMode) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for phi in samples {
            s += bce_logits(self.trace(phi, mode)?.z, label);
        }
        Ok(s / samples.len() as f64)
    }

    /// `L = L_neg + (1 - alpha) L_pos_t + alpha L_pos_h`, each a mean
    /// cross-entropy. An empty set contributes zero.
    pub fn loss(
        &self,
        batch: &UpdateBatch<'_>,
        alpha: f64,
        mode: AttentionMode,
    ) -> Result<LossParts> {
        let neg = self.mean_bce(batch.neg, 0.0, mode)?;
        let pos_t = self.mean_bce(batch.pos_t, 1.0, mode)?;
        let pos_h = self.mean_bce(batch.pos_h, 1.0, mode)?;
        Ok(LossParts {
            neg,
            pos_t,
            pos_h,
            total: neg + (1.0 - alpha) * pos_t + alpha * pos_h,
        })
    }

    /// Runs `iters` SGD steps on the weighted loss.
    pub fn update(
        &mut self,
        batch: &UpdateBatch<'_>,
        alpha: &TemporalAttention,
        cfg: &TrainConfig,
        mode: AttentionMode,
    ) -> Result<()> {
        if batch.neg.is_empty() {
            return Err(Error::NoNegatives);
        }
        let a = alpha.alpha;
        for _ in 0..cfg.iters_online {
            let mut g = self.zero_grads();
            self.accumulate(batch.neg, 0.0, 1.0, mode, &mut g)?;
            let lt = self.accumulate(batch.pos_t, 1.0, 1.0 - a, mode, &mut g)?;
            let lh = self.accumulate(batch.pos_h, 1.0, a, mode, &mut g)?;
            self.apply(&g, cfg.lr_online, mode)?;
            if cfg.learn_temporal && !batch.pos_t.is_empty() && !batch.pos_h.is_empty() {
                // dL/dalpha = L_h - L_t, through alpha = sigmoid(gamma s + beta o + b)
                let d = (lh - lt) * a * (1.0 - a) * cfg.lr_online;
                self.temporal.gamma -= d * alpha.s;
                self.temporal.beta -= d * alpha.o;
                self.temporal.bias -= d;
            }
        }
        Ok(())
    }
}

fn shapes(geom: &FeatureGeometry) -> (LayerShape, LayerShape, LayerShape, LayerShape, LayerShape) {
    let cells = geom.cells();
    let (kh, kw) = KERNEL;
    (
        LayerShape::Conv {
            kh,
            kw,
            cin: geom.channels,
            cout: VIS_CHANNELS,
        },
        LayerShape::Dense {
            input: cells * VIS_CHANNELS,
            output: cells,
        },
        LayerShape::Local {
            width: geom.width,
            height: geom.height,
        },
        LayerShape::Conv {
            kh,
            kw,
            cin: geom.channels,
            cout: CLS_CHANNELS,
        },
        LayerShape::Dense {
            input: cells * CLS_CHANNELS,
            output: 1,
        },
    )
}

/// The four strip directions used for feature replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strip {
    Left,
    Right,
    Top,
    Bottom,
}

impl Strip {
    pub const ALL: [Strip; 4] = [Strip::Left, Strip::Right, Strip::Top, Strip::Bottom];

    /// Cells covered by a strip of `fraction` of the grid along its axis,
    /// at least one cell and never the whole grid.
    pub fn region(self, width: usize, height: usize, fraction: f64) -> CellRect {
        let n = |len: usize| ((fraction * len as f64).round() as usize).clamp(1, len - 1);
        match self {
            Strip::Left => CellRect::new(0, 0, n(width), height),
            Strip::Right => CellRect::new(width - n(width), 0, width, height),
            Strip::Top => CellRect::new(0, 0, width, n(height)),
            Strip::Bottom => CellRect::new(0, height - n(height), width, height),
        }
    }
}

/// Builds the visibility and classification training sets: each base sample
/// (initial plus jittered) together with four strip-replaced copies whose
/// replaced cells are labelled invisible.
pub fn augment<R: Rng + ?Sized>(set: &InitSet, rng: &mut R) -> Result<AugmentedSet> {
    if set.donors.is_empty() {
        return Err(Error::EmptyDonors);
    }
    let (w, h, _) = set.pristine.dims();
    let mut base = vec![(set.pristine.clone(), Tensor3::filled(w, h, 1, 1.0))];
    base.extend(set.jittered.iter().cloned());
    let mut visibility = Vec::with_capacity(base.len() * 5);
    for (phi, gt) in &base {
        visibility.push((phi.clone(), gt.clone()));
        for strip in Strip::ALL {
            let region = strip.region(w, h, rng.random_range(0.2..=0.5));
            let donor = &set.donors[rng.random_range(0..set.donors.len())];
            let (feat, mask) = replace_region(phi, donor, region)?;
            let gt: Vec<f64> = gt
                .as_slice()
                .iter()
                .zip(mask.as_slice())
                .map(|(g, m)| g * m)
                .collect();
            visibility.push((feat, Tensor3::map(w, h, gt)?));
        }
    }
    let positives = visibility.iter().map(|(f, _)| f.clone()).collect();
    let negatives = set.donors.iter().chain(&set.background).cloned().collect();
    Ok(AugmentedSet {
        visibility,
        positives,
        negatives,
    })
}

fn minibatch<'a, T, R: Rng + ?Sized>(items: &'a [T], size: usize, rng: &mut R) -> Vec<&'a T> {
    if size == 0 || size >= items.len() {
        return items.iter().collect();
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.partial_shuffle(rng, size);
    idx[..size].iter().map(|&i| &items[i]).collect()
}

/// Creates and trains a new branch.
///
/// The visibility layers are first fitted to the augmented visibility
/// labels; then the classifier, attention and visibility layers are trained
/// jointly to separate positives from negatives. `train_visibility = false`
/// skips the first stage (the map is unused when neither attention is on).
pub fn init_branch<R: Rng + ?Sized>(
    set: &InitSet,
    cfg: &TrainConfig,
    mode: AttentionMode,
    train_visibility: bool,
    rng: &mut R,
) -> Result<Branch> {
    let geom = FeatureGeometry::new(
        set.pristine.width(),
        set.pristine.height(),
        set.pristine.channels(),
    )?;
    let aug = augment(set, rng)?;
    let mut b = Branch::random(geom, cfg.init_std, cfg.history_cap, rng);
    b.temporal = cfg.temporal;
    if train_visibility {
        for _ in 0..cfg.iters_init {
            let batch = minibatch(&aug.visibility, cfg.init_batch, rng);
            b.vis_step(&batch, cfg.lr_vis)?;
        }
    }
    let half = cfg.init_batch / 2;
    for _ in 0..cfg.iters_init {
        let pos = minibatch(&aug.positives, half, rng);
        let neg = minibatch(&aug.negatives, half, rng);
        let mut g = b.zero_grads();
        b.accumulate(&pos, 1.0, 1.0, mode, &mut g)?;
        b.accumulate(&neg, 0.0, 1.0, mode, &mut g)?;
        b.apply(&g, cfg.lr_init, mode)?;
    }
    b.push_history(set.pristine.clone())?;
    Ok(b)
}

/// Sub-networks of a branch exposed for gradient checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    /// Input `Phi`, objective `sum(r * V)`.
    Visibility,
    /// Input `V`, objective `sum(r * Psi)`.
    Attention,
    /// Input `Phi_att`, objective the classifier probability.
    Classifier,
    /// Input `Phi`, objective the classifier probability through
    /// visibility, attention and classifier.
    Composition,
}

/// A branch viewed as a differentiable function of one part's parameters.
#[derive(Debug, Clone)]
pub struct BranchProbe {
    pub branch: Branch,
    pub part: Part,
    pub readout: Vec<f64>,
}

impl BranchProbe {
    fn params(&self) -> Vec<&LayerParams> {
        let b = &self.branch;
        match self.part {
            Part::Visibility => vec![&b.vis_conv, &b.vis_fc],
            Part::Attention => vec![&b.att],
            Part::Classifier => vec![&b.cls_conv, &b.cls_fc],
            Part::Composition => vec![&b.vis_conv, &b.vis_fc, &b.att, &b.cls_conv, &b.cls_fc],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        let b = &mut self.branch;
        match self.part {
            Part::Visibility => vec![&mut b.vis_conv, &mut b.vis_fc],
            Part::Attention => vec![&mut b.att],
            Part::Classifier => vec![&mut b.cls_conv, &mut b.cls_fc],
            Part::Composition => vec![
                &mut b.vis_conv,
                &mut b.vis_fc,
                &mut b.att,
                &mut b.cls_conv,
                &mut b.cls_fc,
            ],
        }
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (li, p) in self.params().iter().enumerate() {
            if i < p.num_params() {
                return (li, i);
            }
            i -= p.num_params();
        }
        panic!("parameter index out of range");
    }

    fn grads(&self, input: &Tensor3) -> Grads {
        let b = &self.branch;
        let mut g = b.zero_grads();
        match self.part {
            Part::Visibility => {
                let vt = b.vis_forward(input).expect("valid input");
                let dz: Vec<f64> = vt
                    .v
                    .as_slice()
                    .iter()
                    .zip(&self.readout)
                    .map(|(v, r)| r * v * (1.0 - v))
                    .collect();
                b.vis_backward(input, &vt, &dz, &mut g).expect("valid input");
            }
            Part::Attention => {
                let psi = b.spatial_attention(input).expect("valid input");
                let p = psi.as_slice();
                let inner = crate::tensor::dot(p, &self.readout);
                for (i, (&y, &r)) in p.iter().zip(&self.readout).enumerate() {
                    let du = y * (r - inner);
                    g.att.weights[i] = du * input.as_slice()[i];
                    g.att.bias[i] = du;
                }
            }
            Part::Classifier => {
                let (cls_in, a2, r2, z) = b.cls_logit(input).expect("valid input");
                let t = Trace {
                    vis: None,
                    psi: uniform_attention(&b.geom),
                    cls_in,
                    a2,
                    r2,
                    z,
                };
                let y = sigmoid_scalar(z);
                b.backward_logit(input, &t, y * (1.0 - y), &mut g).expect("valid input");
            }
            Part::Composition => {
                let t = b.trace(input, AttentionMode::Spatial).expect("valid input");
                let y = sigmoid_scalar(t.z);
                b.backward_logit(input, &t, y * (1.0 - y), &mut g).expect("valid input");
            }
        }
        g
    }
}

fn relu_signature(mut h: u64, pre: &Tensor3) -> u64 {
    for &v in pre.as_slice() {
        h = (h ^ u64::from(v > 0.0)).wrapping_mul(0x100_0000_01b3);
    }
    h
}

impl Differentiable for BranchProbe {
    type Input = Tensor3;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.num_params()).sum()
    }

    fn param(&self, i: usize) -> f64 {
        let (li, j) = self.locate(i);
        self.params()[li].param(j)
    }

    fn set_param(&mut self, i: usize, v: f64) {
        let (li, j) = self.locate(i);
        self.params_mut()[li].set_param(j, v);
    }

    fn loss(&self, input: &Tensor3) -> (f64, u64) {
        let b = &self.branch;
        let sig = 0xcbf2_9ce4_8422_2325u64;
        match self.part {
            Part::Visibility => {
                let vt = b.vis_forward(input).expect("valid input");
                (crate::tensor::dot(vt.v.as_slice(), &self.readout), relu_signature(sig, &vt.a1))
            }
            Part::Attention => {
                let psi = b.spatial_attention(input).expect("valid input");
                (crate::tensor::dot(psi.as_slice(), &self.readout), sig)
            }
            Part::Classifier => {
                let (_, a2, _, z) = b.cls_logit(input).expect("valid input");
                (sigmoid_scalar(z), relu_signature(sig, &a2))
            }
            Part::Composition => {
                let t = b.trace(input, AttentionMode::Spatial).expect("valid input");
                let vt = t.vis.as_ref().expect("spatial trace");
                let sig = relu_signature(relu_signature(sig, &vt.a1), &t.a2);
                (sigmoid_scalar(t.z), sig)
            }
        }
    }

    fn gradient(&self, input: &Tensor3) -> Vec<f64> {
        let g = self.grads(input);
        let bufs: Vec<&GradientBuffer> = match self.part {
            Part::Visibility => vec![&g.vis_conv, &g.vis_fc],
            Part::Attention => vec![&g.att],
            Part::Classifier => vec![&g.cls_conv, &g.cls_fc],
            Part::Composition => vec![&g.vis_conv, &g.vis_fc, &g.att, &g.cls_conv, &g.cls_fc],
        };
        bufs.into_iter().flat_map(|b| b.flat().collect::<Vec<_>>()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{cross_entropy, grad_check};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom() -> FeatureGeometry {
        FeatureGeometry::new(7, 4, 3).unwrap()
    }

    fn random_tensor(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Tensor3 {
        Tensor3::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn spread(b: &mut Branch, rng: &mut ChaCha8Rng, std: f64) {
        for p in b.layers_mut() {
            for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
                *v = rng.random_range(-std..std);
            }
        }
    }

    #[test]
    fn zero_parameters_give_half() {
        let b = Branch::zeros(geom(), 10);
        let phi = Tensor3::filled(7, 4, 3, 0.3);
        let v = b.visibility(&phi).unwrap();
        assert!(v.as_slice().iter().all(|&x| x == 0.5));
        assert_eq!(b.classify(&phi).unwrap(), 0.5);
        assert!(b.visibility(&Tensor3::zeros(7, 5, 3)).is_err());
    }

    #[test]
    fn attention_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = Branch::zeros(geom(), 10);
        b.att.weights.fill(1.0);
        let psi = b.spatial_attention(&Tensor3::filled(7, 4, 1, 0.4)).unwrap();
        assert!(psi.as_slice().iter().all(|&p| (p - 1.0 / 28.0).abs() < 1e-15));
        spread(&mut b, &mut rng, 2.0);
        let v = random_tensor(&mut rng, 7, 4, 1);
        let psi = b.spatial_attention(&v).unwrap();
        let u: Vec<f64> = (0..28).map(|i| b.att.weights[i] * v.as_slice()[i] + b.att.bias[i]).collect();
        let z: f64 = u.iter().map(|x| x.exp()).sum();
        for (p, x) in psi.as_slice().iter().zip(&u) {
            assert!((p - x.exp() / z).abs() < 1e-12);
        }
        assert!((psi.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attend_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let phi = random_tensor(&mut rng, 7, 4, 3);
        let uni = Tensor3::filled(7, 4, 1, 1.0 / 28.0);
        let out = attend(&phi, &uni).unwrap();
        for (a, b) in out.as_slice().iter().zip(phi.as_slice()) {
            assert_eq!(*a, b * (1.0 / 28.0));
        }
        let mut hot = Tensor3::zeros(7, 4, 1);
        hot.set(2, 3, 0, 1.0);
        let out = attend(&phi, &hot).unwrap();
        for y in 0..4 {
            for x in 0..7 {
                for c in 0..3 {
                    let e = if (x, y) == (2, 3) { phi.get(x, y, c) } else { 0.0 };
                    assert_eq!(out.get(x, y, c), e);
                }
            }
        }
        let psi = random_tensor(&mut rng, 7, 4, 1);
        let out = attend(&phi, &psi).unwrap();
        for y in 0..4 {
            for x in 0..7 {
                for c in 0..3 {
                    assert_eq!(out.get(x, y, c), phi.get(x, y, c) * psi.get(x, y, 0));
                }
            }
        }
        assert!(attend(&phi, &Tensor3::zeros(4, 7, 1)).is_err());
    }

    #[test]
    fn temporal_attention_values() {
        let p = TemporalParams::default();
        assert_eq!(temporal_attention(&p, 0.5, 0.5).alpha, 0.5);
        let a = temporal_attention(&p, 1.0, 0.0).alpha;
        assert!((a - 1.0 / (1.0 + 1f64.exp())).abs() < 1e-12);
        assert!((a - 0.2689414213699951).abs() < 1e-12);
        let a = temporal_attention(&p, 0.0, 1.0).alpha;
        assert!((a - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn loss_is_affine_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut b = Branch::random(geom(), 0.3, 10, &mut rng);
        spread(&mut b, &mut rng, 0.3);
        let s: Vec<Tensor3> = (0..6).map(|_| random_tensor(&mut rng, 7, 4, 3)).collect();
        let (t, h, n) = ([&s[0], &s[1]], [&s[2], &s[3]], [&s[4], &s[5]]);
        let batch = UpdateBatch {
            pos_t: &t,
            pos_h: &h,
            neg: &n,
        };
        for mode in [AttentionMode::Spatial, AttentionMode::Uniform] {
            let l = b.loss(&batch, 0.3, mode).unwrap();
            assert!((l.total - (l.neg + 0.7 * l.pos_t + 0.3 * l.pos_h)).abs() < 1e-12);
            // the parts agree with the clamped probability form
            let p: Vec<f64> = t.iter().map(|x| b.score(x, mode).unwrap()).collect();
            assert!((cross_entropy(&p, &[1.0, 1.0]).unwrap() - l.pos_t).abs() < 1e-9);
            let l0 = b.loss(&batch, 0.0, mode).unwrap();
            assert!((l0.total - (l0.neg + l0.pos_t)).abs() < 1e-12);
            let l1 = b.loss(&batch, 1.0, mode).unwrap();
            assert!((l1.total - (l1.neg + l1.pos_h)).abs() < 1e-12);
        }
    }

    #[test]
    fn update_ignores_the_zero_weighted_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b0 = Branch::random(geom(), 0.1, 10, &mut rng);
        let s: Vec<Tensor3> = (0..4).map(|_| random_tensor(&mut rng, 7, 4, 3)).collect();
        let cfg = TrainConfig {
            lr_online: 0.05,
            ..TrainConfig::default()
        };
        let run = |pos_t: &[&Tensor3], pos_h: &[&Tensor3], alpha: f64| {
            let mut b = b0.clone();
            let neg = [&s[3]];
            b.update(
                &UpdateBatch { pos_t, pos_h, neg: &neg },
                &TemporalAttention::fixed(alpha),
                &cfg,
                AttentionMode::Spatial,
            )
            .unwrap();
            b
        };
        let a = run(&[&s[0]], &[&s[1]], 0.0);
        let b = run(&[&s[0]], &[&s[2]], 0.0);
        assert_eq!(a.layers(), b.layers());
        let a = run(&[&s[0]], &[&s[1]], 1.0);
        let b = run(&[&s[2]], &[&s[1]], 1.0);
        assert_eq!(a.layers(), b.layers());

        let mut b = b0.clone();
        let r = b.update(
            &UpdateBatch { pos_t: &[&s[0]], pos_h: &[], neg: &[] },
            &TemporalAttention::fixed(0.5),
            &cfg,
            AttentionMode::Spatial,
        );
        assert!(matches!(r, Err(Error::NoNegatives)));
    }

    #[test]
    fn history_is_fifo_bounded() {
        let mut b = Branch::zeros(geom(), 3);
        for i in 0..5 {
            b.push_history(Tensor3::filled(7, 4, 3, i as f64)).unwrap();
        }
        let firsts: Vec<f64> = b.history().iter().map(|t| t.get(0, 0, 0)).collect();
        assert_eq!(firsts, vec![2.0, 3.0, 4.0]);
        assert!(b.push_history(Tensor3::zeros(7, 4, 2)).is_err());
    }

    #[test]
    fn strips_cover_the_requested_side() {
        assert_eq!(Strip::Left.region(7, 9, 0.5), CellRect::new(0, 0, 4, 9));
        assert_eq!(Strip::Right.region(7, 9, 0.2), CellRect::new(6, 0, 7, 9));
        assert_eq!(Strip::Top.region(7, 9, 0.3), CellRect::new(0, 0, 7, 3));
        assert_eq!(Strip::Bottom.region(7, 9, 0.5), CellRect::new(0, 4, 7, 9));
    }

    #[test]
    fn probes_pass_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = FeatureGeometry::new(7, 3, 2).unwrap();
        for part in [Part::Visibility, Part::Attention, Part::Classifier, Part::Composition] {
            let mut b = Branch::random(g, 0.2, 1, &mut rng);
            spread(&mut b, &mut rng, 0.3);
            let input = match part {
                Part::Attention => random_tensor(&mut rng, 7, 3, 1),
                _ => random_tensor(&mut rng, 7, 3, 2),
            };
            let readout = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut probe = BranchProbe { branch: b, part, readout };
            let r = grad_check(&mut probe, &input);
            assert!(r.max_rel_error < 1e-4, "{part:?}: {r:?}");
            assert!(r.checked > r.skipped_kinks, "{part:?}: {r:?}");
        }
    }

    #[test]
    fn init_requires_donors_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pristine = random_tensor(&mut rng, 7, 4, 3);
        let mut set = InitSet {
            pristine,
            jittered: vec![],
            donors: vec![],
            background: vec![],
        };
        let cfg = TrainConfig {
            iters_init: 3,
            ..TrainConfig::default()
        };
        let r = init_branch(&set, &cfg, AttentionMode::Spatial, true, &mut rng);
        assert!(matches!(r, Err(Error::EmptyDonors)));
        set.donors.push(random_tensor(&mut rng, 7, 4, 3));
        let a = init_branch(&set, &cfg, AttentionMode::Spatial, true, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = init_branch(&set, &cfg, AttentionMode::Spatial, true, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.layers(), b.layers());
        assert_eq!(a.history().len(), 1);
    }
}
