//! Central finite-difference gradient checking.

use super::Tensor3;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute terms; below it the
/// central difference is dominated by round-off in the objective.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// A scalar objective over a flat parameter vector.
pub trait Differentiable {
    type Input;

    fn num_params(&self) -> usize;
    fn param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, v: f64);

    /// Objective value plus a signature of every non-smooth switch taken
    /// during evaluation (ReLU on/off pattern). Objectives without kinks
    /// return a constant signature.
    fn loss(&self, input: &Self::Input) -> (f64, u64);

    /// Analytic gradient, in parameter-index order.
    fn gradient(&self, input: &Self::Input) -> Vec<f64>;

    /// Analytic gradient with respect to the input, when supported.
    fn input_gradient(&self, _input: &Self::Input) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    /// Coordinates whose `+-step` evaluation crossed a ReLU kink; the
    /// central difference is meaningless there, so they are not compared.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        let (max_rel_error, worst_index) = if other.max_rel_error > self.max_rel_error {
            (other.max_rel_error, other.worst_index)
        } else {
            (self.max_rel_error, self.worst_index)
        };
        GradCheckReport {
            max_rel_error,
            worst_index,
            checked: self.checked + other.checked,
            skipped_kinks: self.skipped_kinks + other.skipped_kinks,
        }
    }

    pub fn empty() -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            worst_index: 0,
            checked: 0,
            skipped_kinks: 0,
        }
    }
}

pub(crate) fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the analytic gradient against central differences over every
/// parameter.
pub fn grad_check<N: Differentiable>(net: &mut N, input: &N::Input) -> GradCheckReport {
    let all: Vec<usize> = (0..net.num_params()).collect();
    grad_check_params(net, input, &all)
}

/// Same comparison restricted to the parameter indices in `indices`.
pub fn grad_check_params<N: Differentiable>(
    net: &mut N,
    input: &N::Input,
    indices: &[usize],
) -> GradCheckReport {
    let analytic = net.gradient(input);
    assert_eq!(analytic.len(), net.num_params(), "gradient length");
    let (_, base_sig) = net.loss(input);
    let mut report = GradCheckReport::empty();
    for &i in indices {
        let a = analytic[i];
        let orig = net.param(i);
        net.set_param(i, orig + FD_STEP);
        let (lp, sp) = net.loss(input);
        net.set_param(i, orig - FD_STEP);
        let (lm, sm) = net.loss(input);
        net.set_param(i, orig);
        if sp != base_sig || sm != base_sig {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        report = report.merge(GradCheckReport {
            max_rel_error: rel_error(a, numeric),
            worst_index: i,
            checked: 1,
            skipped_kinks: 0,
        });
    }
    report
}

/// Same check for the gradient with respect to a tensor input.
pub fn grad_check_input<N: Differentiable<Input = Tensor3>>(
    net: &N,
    input: &Tensor3,
) -> Option<GradCheckReport> {
    let analytic = net.input_gradient(input)?;
    let (_, base_sig) = net.loss(input);
    let mut x = input.clone();
    let mut report = GradCheckReport::empty();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = x.as_slice()[i];
        x.as_mut_slice()[i] = orig + FD_STEP;
        let (lp, sp) = net.loss(&x);
        x.as_mut_slice()[i] = orig - FD_STEP;
        let (lm, sm) = net.loss(&x);
        x.as_mut_slice()[i] = orig;
        if sp != base_sig || sm != base_sig {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        report = report.merge(GradCheckReport {
            max_rel_error: rel_error(a, numeric),
            worst_index: i,
            checked: 1,
            skipped_kinks: 0,
        });
    }
    Some(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Layer, LayerKind, LayerParams, LayerShape, Sequential};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pm(rng: &mut ChaCha8Rng) -> f64 {
        // magnitudes in [0.5, 1] keep every gradient entry well above the floor
        let m = rng.random_range(0.5..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    }

    #[test]
    fn linear_network_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = LayerShape::Dense { input: 6, output: 3 };
        let mut p = LayerParams::zeros(shape);
        for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
            *v = pm(&mut rng);
        }
        let readout = (0..3).map(|_| pm(&mut rng)).collect();
        let mut net = Sequential::new(vec![Layer::new(LayerKind::FullyConnected(p))], readout);
        let x = Tensor3::from_vec(3, 2, 1, (0..6).map(|_| pm(&mut rng)).collect()).unwrap();
        let r = grad_check(&mut net, &x);
        assert_eq!(r.checked, 21);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        let ri = grad_check_input(&net, &x).unwrap();
        assert!(ri.max_rel_error < 1e-8, "{ri:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        struct Broken(f64);
        impl Differentiable for Broken {
            type Input = ();
            fn num_params(&self) -> usize {
                1
            }
            fn param(&self, _: usize) -> f64 {
                self.0
            }
            fn set_param(&mut self, _: usize, v: f64) {
                self.0 = v;
            }
            fn loss(&self, _: &()) -> (f64, u64) {
                (self.0 * self.0, 0)
            }
            fn gradient(&self, _: &()) -> Vec<f64> {
                vec![self.0] // should be 2x
            }
        }
        let r = grad_check(&mut Broken(1.5), &());
        assert!(r.max_rel_error > 0.4);
    }
}
