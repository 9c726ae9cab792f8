//! Constant-velocity motion with an adaptive search area.

use std::collections::VecDeque;

use crate::domain::TargetState;

/// Lower and upper prediction-error ratios of the variance rule.
pub const R_LOW: f64 = 0.25;
pub const R_HIGH: f64 = 0.75;
/// Per-frame search-area growth while untracked.
pub const UNTRACKED_GROWTH: f64 = 1.05;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    /// Velocity `(vx, vy)` in pixels per frame.
    pub v: [f64; 2],
    /// Search standard deviations `(x, y, w, h)` in pixels.
    pub sigma: [f64; 4],
    /// Untracked streak.
    pub untracked: u32,
    t_gap: u32,
    /// Recent centers of tracked frames, oldest first.
    locations: VecDeque<(u32, [f64; 2])>,
}

impl MotionState {
    /// A newborn target: zero velocity, `sigma_xy = h/20`, `sigma_wh = h/30`.
    pub fn new(x0: &TargetState, frame: u32, t_gap: u32) -> Self {
        let mut locations = VecDeque::new();
        locations.push_back((frame, x0.center()));
        MotionState {
            v: [0.0, 0.0],
            sigma: initial_sigma(x0.h),
            untracked: 0,
            t_gap: t_gap.max(1),
            locations,
        }
    }

    pub fn t_gap(&self) -> u32 {
        self.t_gap
    }

    pub fn locations(&self) -> impl Iterator<Item = &(u32, [f64; 2])> {
        self.locations.iter()
    }

    /// Next-frame prediction: the center moves by `v`, size is kept.
    pub fn predict(&self, x: &TargetState) -> TargetState {
        x.translated(self.v[0], self.v[1])
    }

    /// Records the tracked center at `frame` and blends the velocity
    /// measured over the last `g <= t_gap` frames into `v`. Returns the
    /// measured velocity, or `None` when no earlier location is known.
    pub fn update_velocity(&mut self, frame: u32, l_t: [f64; 2], alpha: f64) -> Option<[f64; 2]> {
        let oldest = frame.saturating_sub(self.t_gap);
        while self.locations.front().is_some_and(|&(f, _)| f < oldest) {
            self.locations.pop_front();
        }
        let measured = self
            .locations
            .front()
            .filter(|&&(f, _)| f < frame)
            .map(|&(f, l_old)| measured_velocity(l_t, l_old, frame - f));
        if let Some(vt) = measured {
            self.v = blend_velocity(self.v, vt, alpha);
        }
        self.locations.push_back((frame, l_t));
        while self.locations.len() > self.t_gap as usize + 1 {
            self.locations.pop_front();
        }
        measured
    }

    /// Applies the variance rule for a frame whose final state is `x_t`,
    /// given the predicted center `predicted`.
    pub fn update_variance(&mut self, x_t: &TargetState, tracked: bool, predicted: [f64; 2]) {
        if tracked {
            self.untracked = 0;
        } else {
            self.untracked += 1;
        }
        let c = x_t.center();
        let err = (c[0] - predicted[0]).hypot(c[1] - predicted[1]);
        let s = self.sigma[0];
        let r = err / (3.0 * s);
        let next = next_sigma(s, r, x_t.h, self.untracked > 0);
        let wh = x_t.h / 30.0;
        self.sigma = [next, next, wh, wh];
    }
}

pub fn initial_sigma(h: f64) -> [f64; 4] {
    [h / 20.0, h / 20.0, h / 30.0, h / 30.0]
}

/// `(l_t - l_{t-g}) / g`.
pub fn measured_velocity(l_t: [f64; 2], l_old: [f64; 2], g: u32) -> [f64; 2] {
    let g = g as f64;
    [(l_t[0] - l_old[0]) / g, (l_t[1] - l_old[1]) / g]
}

/// `alpha * v_prev + (1 - alpha) * v_measured`.
pub fn blend_velocity(v_prev: [f64; 2], measured: [f64; 2], alpha: f64) -> [f64; 2] {
    [
        alpha * v_prev[0] + (1.0 - alpha) * measured[0],
        alpha * v_prev[1] + (1.0 - alpha) * measured[1],
    ]
}

/// The four-case location variance rule. `r` is the prediction error in
/// units of `3 sigma_prev`; the band edges themselves leave `sigma` as is.
pub fn next_sigma(sigma_prev: f64, r: f64, h: f64, untracked: bool) -> f64 {
    if untracked {
        UNTRACKED_GROWTH * sigma_prev
    } else if r > R_HIGH {
        r * sigma_prev / R_HIGH
    } else if r < R_LOW {
        (h / 20.0).max(sigma_prev / 2.0)
    } else {
        sigma_prev
    }
}
