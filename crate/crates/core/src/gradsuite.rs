//! Seeded finite-difference checks of every layer and branch sub-network.

use rand::seq::index;
use rand::Rng;

use crate::branch::{Branch, BranchProbe, Part};
use crate::features::FeatureGeometry;
use crate::rng::{substream, StreamRng};
use crate::tensor::{
    bce_logits, bce_logits_grad, grad_check_input, grad_check_params, Differentiable,
    GradCheckReport, Layer, LayerKind, LayerParams, LayerShape, Sequential, Tensor3,
};

/// Failure bound on the relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Parameters compared per trial after the first, which sweeps them all.
pub const SAMPLED_PARAMS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub trials: usize,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < TOLERANCE && self.report.checked > 0
    }
}

/// Geometry of the checked branches: the smallest the kernel allows.
pub fn suite_geometry() -> FeatureGeometry {
    FeatureGeometry {
        width: 7,
        height: 3,
        channels: 4,
    }
}

fn tensor(rng: &mut StreamRng, w: usize, h: usize, c: usize) -> Tensor3 {
    let v = (0..w * h * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor3::from_vec(w, h, c, v).expect("positive dims")
}

fn params(rng: &mut StreamRng, shape: LayerShape, range: f64) -> LayerParams {
    let mut p = LayerParams::zeros(shape);
    for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
        *v = rng.random_range(-range..range);
    }
    p
}

fn readout(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Parameter indices for one trial: all of them on trial 0.
fn coordinates(rng: &mut StreamRng, n: usize, trial: usize) -> Vec<usize> {
    if trial == 0 || n <= SAMPLED_PARAMS {
        (0..n).collect()
    } else {
        let mut v = index::sample(rng, n, SAMPLED_PARAMS).into_vec();
        v.sort_unstable();
        v
    }
}

fn check<N: Differentiable<Input = Tensor3>>(
    net: &mut N,
    input: &Tensor3,
    rng: &mut StreamRng,
    trial: usize,
) -> GradCheckReport {
    let idx = coordinates(rng, net.num_params(), trial);
    let mut r = grad_check_params(net, input, &idx);
    if let Some(ri) = grad_check_input(net, input) {
        r = r.merge(ri);
    }
    r
}

fn layer_net(kind: &str, rng: &mut StreamRng) -> (Sequential, Tensor3) {
    let g = suite_geometry();
    let (w, h, c) = (g.width, g.height, g.channels);
    let (layer, input, out) = match kind {
        "conv2d" => {
            let shape = LayerShape::Conv { kh: 3, kw: 7, cin: c, cout: 3 };
            (LayerKind::Conv2d(params(rng, shape, 0.5)), tensor(rng, w, h, c), w * h * 3)
        }
        "fully_connected" => {
            let shape = LayerShape::Dense { input: w * h * c, output: 5 };
            (LayerKind::FullyConnected(params(rng, shape, 0.5)), tensor(rng, w, h, c), 5)
        }
        "locally_connected" => {
            let shape = LayerShape::Local { width: w, height: h };
            (LayerKind::LocallyConnected(params(rng, shape, 1.0)), tensor(rng, w, h, 1), w * h)
        }
        "spatial_softmax" => (LayerKind::SpatialSoftmax, tensor(rng, w, h, 1), w * h),
        "relu" => (LayerKind::Relu, tensor(rng, w, h, c), w * h * c),
        "sigmoid" => (LayerKind::Sigmoid, tensor(rng, w, h, c), w * h * c),
        other => unreachable!("unknown layer {other}"),
    };
    (Sequential::new(vec![Layer::new(layer)], readout(rng, out)), input)
}

/// Binary cross-entropy on a logit, differentiated in the logit.
struct LogitLoss {
    z: f64,
    target: f64,
}

impl Differentiable for LogitLoss {
    type Input = Tensor3;

    fn num_params(&self) -> usize {
        1
    }

    fn param(&self, _: usize) -> f64 {
        self.z
    }

    fn set_param(&mut self, _: usize, v: f64) {
        self.z = v;
    }

    fn loss(&self, _: &Tensor3) -> (f64, u64) {
        (bce_logits(self.z, self.target), 0)
    }

    fn gradient(&self, _: &Tensor3) -> Vec<f64> {
        vec![bce_logits_grad(self.z, self.target)]
    }
}

const LAYERS: [&str; 6] = ["conv2d", "fully_connected", "locally_connected", "spatial_softmax", "relu", "sigmoid"];
const PARTS: [(&str, Part); 4] = [
    ("visibility", Part::Visibility),
    ("attention", Part::Attention),
    ("classifier", Part::Classifier),
    ("composition", Part::Composition),
];

/// Runs `trials` seeded checks of each layer, the logit cross-entropy and
/// each branch sub-network.
pub fn gradient_suite(seed: u64, trials: usize) -> Vec<SuiteEntry> {
    let g = suite_geometry();
    let mut out = Vec::new();
    for (k, name) in LAYERS.iter().enumerate() {
        let mut report = GradCheckReport::empty();
        for t in 0..trials {
            let mut rng = substream(seed, "gradcheck-layer", &[k as u64, t as u64]);
            let (mut net, input) = layer_net(name, &mut rng);
            report = report.merge(check(&mut net, &input, &mut rng, t));
        }
        out.push(SuiteEntry { name, trials, report });
    }
    let mut report = GradCheckReport::empty();
    for t in 0..trials {
        let mut rng = substream(seed, "gradcheck-ce", &[t as u64]);
        let mut net = LogitLoss {
            z: rng.random_range(-4.0..4.0),
            target: f64::from(u8::from(rng.random_bool(0.5))),
        };
        let input = Tensor3::zeros(1, 1, 1);
        report = report.merge(check(&mut net, &input, &mut rng, t));
    }
    out.push(SuiteEntry { name: "cross_entropy", trials, report });
    for (k, (name, part)) in PARTS.iter().enumerate() {
        let mut report = GradCheckReport::empty();
        for t in 0..trials {
            let mut rng = substream(seed, "gradcheck-branch", &[k as u64, t as u64]);
            let mut branch = Branch::zeros(g, 1);
            for p in branch.layers_mut() {
                for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
                    *v = rng.random_range(-0.3..0.3);
                }
            }
            let input = match part {
                Part::Attention => tensor(&mut rng, g.width, g.height, 1),
                _ => tensor(&mut rng, g.width, g.height, g.channels),
            };
            let readout = readout(&mut rng, g.cells());
            let mut probe = BranchProbe { branch, part: *part, readout };
            report = report.merge(check(&mut probe, &input, &mut rng, t));
        }
        out.push(SuiteEntry { name, trials, report });
    }
    out
}
