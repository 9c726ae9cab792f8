//! The per-frame tracking loop: candidates, estimation, refinement, sample
//! collection, branch and motion updates, and object management.

mod config;

pub use config::*;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::branch::{init_branch, AttentionMode, Branch, InitSet, TemporalAttention, UpdateBatch};
use crate::domain::{iou, Detection, TargetState, TrackId, TrackStatus};
use crate::error::{Error, Result};
use crate::features::{covering_window, roi_pool, FeatureBackend, FeatureGeometry, FrameData, FrameFeatureMap};
use crate::io::ResultRow;
use crate::motion::{initial_sigma, MotionState};
use crate::rng::substream;
use crate::tensor::Tensor3;

/// Smallest width or height a sampled candidate may take.
const MIN_SIZE: f64 = 1.0;
/// Rejection-sampling attempts per jittered or background sample.
const MAX_TRIES: usize = 100;
/// Negatives scale each side by up to this factor, in log space (ln 4).
const NEG_LOG_SCALE: f64 = std::f64::consts::LN_2 * 2.0;

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Sample,
    Predicted,
    /// Index into the frame's detection list.
    Detection(usize),
}

/// Candidate states of one target in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub states: Vec<TargetState>,
    pub origins: Vec<Origin>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn gated_detections(&self) -> impl Iterator<Item = usize> + '_ {
        self.origins.iter().filter_map(|o| match o {
            Origin::Detection(i) => Some(*i),
            _ => None,
        })
    }
}

/// Whether `d` lies within three standard deviations of `predicted` in
/// every dimension.
pub fn gate(predicted: &TargetState, sigma: &[f64; 4], d: &TargetState) -> bool {
    let p = predicted.as_array();
    let q = d.as_array();
    (0..4).all(|k| (q[k] - p[k]).abs() < 3.0 * sigma[k])
}

/// `n` Gaussian samples around `predicted`, then `predicted` itself, then
/// every gated detection.
pub fn generate_candidates<R: Rng + ?Sized>(
    predicted: &TargetState,
    sigma: &[f64; 4],
    detections: &[Detection],
    n: usize,
    rng: &mut R,
) -> CandidateSet {
    let mut states = Vec::with_capacity(n + 1 + detections.len());
    let mut origins = Vec::with_capacity(states.capacity());
    let p = predicted.as_array();
    let normals: Vec<Option<Normal<f64>>> = sigma
        .iter()
        .map(|&s| (s > 0.0).then(|| Normal::new(0.0, s).expect("positive sigma")))
        .collect();
    for _ in 0..n {
        let mut v = p;
        for k in 0..4 {
            if let Some(d) = &normals[k] {
                v[k] += d.sample(rng);
            }
        }
        states.push(TargetState {
            x: v[0],
            y: v[1],
            w: v[2].max(MIN_SIZE),
            h: v[3].max(MIN_SIZE),
        });
        origins.push(Origin::Sample);
    }
    states.push(*predicted);
    origins.push(Origin::Predicted);
    for (i, d) in detections.iter().enumerate() {
        if gate(predicted, sigma, &d.state) {
            states.push(d.state);
            origins.push(Origin::Detection(i));
        }
    }
    CandidateSet { states, origins }
}

/// Index and value of the first maximum; `None` if no score is finite.
pub fn argmax(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

/// Blends the estimate toward the detection when their overlap `o`
/// exceeds `o0`.
pub fn blend_refinement(xhat: &TargetState, xd: &TargetState, o: f64, o0: f64) -> TargetState {
    if o > o0 {
        xhat.lerp(xd, o)
    } else {
        *xhat
    }
}

/// Final state: the estimate blended with its best-overlapping detection.
pub fn refine_state(xhat: &TargetState, detections: &[Detection], o0: f64) -> TargetState {
    let best = detections
        .iter()
        .map(|d| (iou(xhat, &d.state), d.state))
        .fold(None, |acc: Option<(f64, TargetState)>, (o, s)| match acc {
            Some((b, _)) if b >= o => acc,
            _ => Some((o, s)),
        });
    match best {
        Some((o, xd)) => blend_refinement(xhat, &xd, o, o0),
        None => *xhat,
    }
}

/// Uniform jitter of position by `±frac` of the size and of scale by
/// `[0.8, 1.25]`, kept if the overlap with `x` is at least `min_iou`.
pub fn jitter_positive<R: Rng + ?Sized>(
    x: &TargetState,
    frac: f64,
    min_iou: f64,
    rng: &mut R,
) -> Option<TargetState> {
    for _ in 0..MAX_TRIES {
        let s = rng.random_range(0.8..=1.25);
        let c = TargetState {
            x: x.x + rng.random_range(-frac..=frac) * x.w,
            y: x.y + rng.random_range(-frac..=frac) * x.h,
            w: x.w * s,
            h: x.h * s,
        };
        if iou(&c, x) >= min_iou {
            return Some(c);
        }
    }
    None
}

/// A box near `x` overlapping it by at most `max_iou`, centered inside
/// the frame. One draw in three keeps roughly the same center and only
/// rescales, so that boxes inside or around the target are negatives too.
pub fn background_negative<R: Rng + ?Sized>(
    x: &TargetState,
    max_iou: f64,
    frame: (f64, f64),
    rng: &mut R,
) -> Option<TargetState> {
    let (sx, sy) = if rng.random_bool(1.0 / 3.0) { (0.25, 0.25) } else { (1.5, 1.0) };
    let [cx, cy] = x.center();
    for _ in 0..MAX_TRIES {
        // independent log-uniform scales so that boxes much thinner, wider,
        // shorter or taller than the target also serve as negatives
        let w = x.w * rng.random_range(-NEG_LOG_SCALE..=NEG_LOG_SCALE).exp();
        let h = x.h * rng.random_range(-NEG_LOG_SCALE..=NEG_LOG_SCALE).exp();
        let (ux, uy) = (cx + rng.random_range(-sx..=sx) * x.w, cy + rng.random_range(-sy..=sy) * x.h);
        let c = TargetState { x: ux - w / 2.0, y: uy - h / 2.0, w, h };
        let inside = ux >= 0.0 && uy >= 0.0 && ux < frame.0 && uy < frame.1;
        if inside && iou(&c, x) <= max_iou {
            return Some(c);
        }
    }
    None
}

/// Visibility ground truth of a box sampled near `x0`: 1 on pooled cells
/// whose center lies inside `x0`.
pub fn overlap_mask(sample: &TargetState, x0: &TargetState, geom: &FeatureGeometry) -> Tensor3 {
    let c = sample.to_corners();
    let k = x0.to_corners();
    let (bw, bh) = (sample.w / geom.width as f64, sample.h / geom.height as f64);
    let mut m = Tensor3::zeros(geom.width, geom.height, 1);
    for j in 0..geom.height {
        for i in 0..geom.width {
            let px = c.left + (i as f64 + 0.5) * bw;
            let py = c.top + (j as f64 + 0.5) * bh;
            if px >= k.left && px <= k.right && py >= k.top && py <= k.bottom {
                m.set(i, j, 0, 1.0);
            }
        }
    }
    m
}

/// One loaded frame and the means to pool boxes from it.
pub struct FrameContext<'a> {
    backend: &'a FeatureBackend,
    data: FrameData,
    shared: Option<FrameFeatureMap>,
    extent: (usize, usize),
    geom: FeatureGeometry,
    calls: &'a AtomicU64,
}

impl<'a> FrameContext<'a> {
    pub fn new(
        backend: &'a FeatureBackend,
        frame: u32,
        geom: FeatureGeometry,
        mode: BackboneMode,
        calls: &'a AtomicU64,
    ) -> Result<Self> {
        let data = backend.load(frame)?;
        let extent = backend.extent(&data)?;
        let shared = match mode {
            BackboneMode::Shared => {
                calls.fetch_add(1, Ordering::Relaxed);
                Some(backend.compute(&data)?)
            }
            BackboneMode::Recompute => None,
        };
        Ok(FrameContext {
            backend,
            data,
            shared,
            extent,
            geom,
            calls,
        })
    }

    /// ROI-pooled features of `roi`.
    pub fn pool(&self, roi: &TargetState) -> Result<Tensor3> {
        match &self.shared {
            Some(m) => roi_pool(m, roi, &self.geom),
            None => {
                let stride = self.backend.stride();
                let w = covering_window(roi, stride, self.extent).ok_or(Error::BoxOutsideFrame)?;
                self.calls.fetch_add(1, Ordering::Relaxed);
                let m = self.backend.compute_window(&self.data, w)?;
                roi_pool(&m, roi, &self.geom)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: TrackId,
    pub state: TargetState,
    pub status: TrackStatus,
    pub branch: Branch,
    pub motion: MotionState,
    pub birth_frame: u32,
    /// Score of the last estimate.
    pub last_score: f64,
    /// Temporal attention of the last update.
    pub temporal: TemporalAttention,
    /// Attention map at the current state after the last update, when
    /// spatial attention is on.
    pub attention: Option<Tensor3>,
    confirmed: bool,
    pending: Vec<ResultRow>,
}

impl Track {
    pub fn is_confirmed(&self) -> bool {
        self.confirmed
    }
}

/// What step 2-3 produced for one track.
#[derive(Debug, Clone)]
struct Estimate {
    predicted: TargetState,
    score: f64,
    tracked: bool,
    /// Final state of the frame.
    state: TargetState,
    /// Pooled features at `state`, if it overlaps the frame.
    phi: Option<Tensor3>,
    /// Mean visibility at `state`.
    s: f64,
}

/// Counters for throughput and sharing checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub frames: u64,
    /// Backbone evaluations (whole frames or per-box windows).
    pub backbone_calls: u64,
    pub births: u64,
    pub discarded: u64,
    pub terminated: u64,
}

pub struct Engine {
    cfg: EngineConfig,
    backend: FeatureBackend,
    frame_size: (f64, f64),
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
    calls: Arc<AtomicU64>,
    stats: EngineStats,
    pool: Option<rayon::ThreadPool>,
}

impl Engine {
    /// `frame_size` is the image size in pixels.
    pub fn new(cfg: EngineConfig, backend: FeatureBackend, frame_size: (f64, f64)) -> Result<Self> {
        cfg.validate()?;
        if backend.channels() != cfg.geometry.channels {
            return Err(Error::Config(format!(
                "backend yields {} channels, geometry expects {}",
                backend.channels(),
                cfg.geometry.channels
            )));
        }
        let pool = if cfg.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.threads)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Engine {
            cfg,
            backend,
            frame_size,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            calls: Arc::new(AtomicU64::new(0)),
            stats: EngineStats::default(),
            pool,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn stats(&self) -> EngineStats {
        EngineStats {
            backbone_calls: self.calls.load(Ordering::Relaxed),
            ..self.stats
        }
    }

    fn mode(&self) -> AttentionMode {
        if self.cfg.flags.spatial_attention {
            AttentionMode::Spatial
        } else {
            AttentionMode::Uniform
        }
    }

    fn needs_visibility(&self) -> bool {
        self.cfg.flags.spatial_attention || self.cfg.flags.temporal_attention
    }

    fn par_map<T: Send, R: Send>(&self, items: &mut [T], f: impl Fn(&mut T) -> R + Sync + Send) -> Vec<R> {
        match &self.pool {
            Some(p) => p.install(|| items.par_iter_mut().map(&f).collect()),
            None => items.iter_mut().map(f).collect(),
        }
    }

    /// Processes one frame and returns the rows that became final: tracked
    /// targets of confirmed tracks, plus the held-back rows of tracks that
    /// just finished probation.
    pub fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<ResultRow>> {
        if self.last_frame.is_some_and(|l| frame <= l) {
            return Err(Error::FrameMismatch(format!(
                "frame {frame} after frame {}",
                self.last_frame.unwrap_or(0)
            )));
        }
        self.last_frame = Some(frame);
        self.stats.frames += 1;
        let backend = self.backend.clone();
        let calls = Arc::clone(&self.calls);
        let ctx = FrameContext::new(&backend, frame, self.cfg.geometry, self.cfg.backbone, &calls)?;
        let mut tracks = std::mem::take(&mut self.tracks);

        let estimates = self
            .par_map(&mut tracks, |t| self.estimate(t, &ctx, detections, frame))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

        let states: Vec<TargetState> = estimates.iter().map(|e| e.state).collect();
        let overlaps: Vec<f64> = (0..states.len())
            .map(|i| {
                (0..states.len())
                    .filter(|&j| j != i)
                    .map(|j| iou(&states[i], &states[j]))
                    .fold(0.0, f64::max)
            })
            .collect();
        let mut work: Vec<(&mut Track, usize)> = tracks.iter_mut().zip(0..).collect();
        self.par_map(&mut work, |(t, i)| self.update(t, *i, &estimates, overlaps[*i], &ctx, frame))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        drop(work);

        let mut out = Vec::new();
        let rows = self.manage(&mut tracks, &estimates, detections, frame);
        out.extend(rows);
        let born = self.births(&mut tracks, detections, &ctx, frame)?;
        out.extend(born);
        self.tracks = tracks;
        out.sort_by_key(|r| (r.frame, r.id));
        Ok(out)
    }

    /// Steps 1-3: candidates, best candidate, tracked flag, refinement and
    /// visibility at the final state.
    fn estimate(&self, t: &Track, ctx: &FrameContext<'_>, dets: &[Detection], frame: u32) -> Result<Estimate> {
        let cfg = &self.cfg;
        let predicted = if cfg.flags.motion {
            t.motion.predict(&t.state)
        } else {
            t.state
        };
        let sigma = if cfg.flags.motion {
            t.motion.sigma
        } else {
            initial_sigma(t.state.h)
        };
        let mut rng = substream(cfg.seed, "candidates", &[t.id.0, u64::from(frame)]);
        let cands = generate_candidates(&predicted, &sigma, dets, cfg.num_candidates, &mut rng);
        let mode = self.mode();
        let scores: Vec<f64> = cands
            .states
            .iter()
            .map(|c| match ctx.pool(c) {
                Ok(phi) => t.branch.score(&phi, mode),
                Err(Error::BoxOutsideFrame) => Ok(f64::NEG_INFINITY),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        let (xhat, score) = match argmax(&scores) {
            Some((i, s)) => (cands.states[i], s),
            None => (predicted, 0.0),
        };
        let tracked = score >= cfg.p0;
        let state = if tracked {
            refine_state(&xhat, dets, cfg.o0)
        } else {
            predicted
        };
        let phi = match ctx.pool(&state) {
            Ok(p) => Some(p),
            Err(Error::BoxOutsideFrame) => None,
            Err(e) => return Err(e),
        };
        let s = match (&phi, self.needs_visibility()) {
            (Some(p), true) => t.branch.visibility(p)?.mean(),
            _ => 1.0,
        };
        Ok(Estimate {
            predicted,
            score,
            tracked: tracked && phi.is_some(),
            state,
            phi,
            s,
        })
    }

    /// Step 4-5: temporal attention, sample collection, branch update,
    /// history and motion.
    fn update(
        &self,
        t: &mut Track,
        i: usize,
        estimates: &[Estimate],
        o: f64,
        ctx: &FrameContext<'_>,
        frame: u32,
    ) -> Result<()> {
        let cfg = &self.cfg;
        let e = &estimates[i];
        let alpha = if cfg.flags.temporal_attention {
            t.branch.temporal_attention(e.s, o)
        } else {
            TemporalAttention {
                s: e.s,
                o,
                ..TemporalAttention::fixed(cfg.fixed_alpha)
            }
        };
        let mut rng = substream(cfg.seed, "samples", &[t.id.0, u64::from(frame)]);
        let mut pos_t = Vec::new();
        if e.tracked {
            pos_t.extend(e.phi.clone());
            while pos_t.len() < cfg.num_pos {
                let Some(b) = jitter_positive(&e.state, 0.1, cfg.pos_iou, &mut rng) else {
                    break;
                };
                if let Ok(p) = ctx.pool(&b) {
                    pos_t.push(p);
                }
            }
        }
        let mut neg: Vec<Tensor3> = Vec::with_capacity(cfg.num_neg + estimates.len());
        for _ in 0..cfg.num_neg {
            if let Some(b) = background_negative(&e.state, cfg.neg_iou, self.frame_size, &mut rng) {
                if let Ok(p) = ctx.pool(&b) {
                    neg.push(p);
                }
            }
        }
        let others: Vec<&Tensor3> = estimates
            .iter()
            .enumerate()
            .filter(|&(j, x)| j != i && x.tracked)
            .filter_map(|(_, x)| x.phi.as_ref())
            .collect();
        let history = t.branch.history();
        let picked: Vec<Tensor3> = if cfg.history_batch == 0 || cfg.history_batch >= history.len() {
            history.iter().cloned().collect()
        } else {
            index::sample(&mut rng, history.len(), cfg.history_batch)
                .into_iter()
                .map(|k| history[k].clone())
                .collect()
        };
        let pos_t_refs: Vec<&Tensor3> = pos_t.iter().collect();
        let pos_h_refs: Vec<&Tensor3> = picked.iter().collect();
        let mut neg_refs: Vec<&Tensor3> = neg.iter().collect();
        neg_refs.extend(others);
        if !neg_refs.is_empty() {
            let batch = UpdateBatch {
                pos_t: &pos_t_refs,
                pos_h: &pos_h_refs,
                neg: &neg_refs,
            };
            t.branch.update(&batch, &alpha, &cfg.train_config(), self.mode())?;
        }
        // history takes only confident, unoccluded states
        let gate = !cfg.flags.temporal_attention || alpha.alpha < cfg.alpha0;
        if e.tracked && gate {
            if let Some(p) = &e.phi {
                t.branch.push_history(p.clone())?;
            }
        }
        if cfg.flags.motion {
            if e.tracked {
                t.motion.update_velocity(frame, e.state.center(), alpha.alpha);
            }
            t.motion.update_variance(&e.state, e.tracked, e.predicted.center());
        }
        t.attention = match (&e.phi, cfg.flags.spatial_attention) {
            (Some(p), true) => Some(t.branch.spatial_attention(&t.branch.visibility(p)?)?),
            _ => None,
        };
        t.temporal = alpha;
        t.state = e.state;
        t.last_score = e.score;
        t.status = if e.tracked {
            TrackStatus::Tracked
        } else {
            TrackStatus::Untracked {
                streak: t.status.streak() + 1,
            }
        };
        Ok(())
    }

    /// Step 6 for existing tracks: probation, termination and output.
    fn manage(&mut self, tracks: &mut Vec<Track>, est: &[Estimate], dets: &[Detection], frame: u32) -> Vec<ResultRow> {
        let t_init = self.cfg.t_init();
        let t_term = self.cfg.t_term();
        let mut out = Vec::new();
        let mut keep = Vec::with_capacity(tracks.len());
        for (mut t, e) in tracks.drain(..).zip(est) {
            if !t.confirmed {
                let detected = dets
                    .iter()
                    .any(|d| iou(&d.state, &e.state) >= self.cfg.new_track_cover_iou);
                if !e.tracked || !detected {
                    log::debug!(
                        "frame {frame}: newborn {} discarded (score {:.3}, detected {detected})",
                        t.id.0,
                        e.score
                    );
                    self.stats.discarded += 1;
                    continue;
                }
            }
            let [cx, cy] = t.state.center();
            let outside = cx < 0.0 || cy < 0.0 || cx >= self.frame_size.0 || cy >= self.frame_size.1;
            if t.status.streak() > t_term || outside {
                log::debug!("frame {frame}: track {} terminated", t.id.0);
                t.status = TrackStatus::Terminated;
                self.stats.terminated += 1;
                continue;
            }
            if e.tracked {
                let row = ResultRow {
                    frame,
                    id: t.id.0,
                    state: t.state,
                    score: e.score,
                };
                if t.confirmed {
                    out.push(row);
                } else {
                    t.pending.push(row);
                }
            }
            if !t.confirmed && frame - t.birth_frame >= t_init {
                t.confirmed = true;
                out.append(&mut t.pending);
            }
            keep.push(t);
        }
        *tracks = keep;
        out
    }

    /// Step 6 for new targets: confident detections not covered by any
    /// active track start a track with a freshly trained branch.
    fn births(
        &mut self,
        tracks: &mut Vec<Track>,
        dets: &[Detection],
        ctx: &FrameContext<'_>,
        frame: u32,
    ) -> Result<Vec<ResultRow>> {
        let cfg = self.cfg.clone();
        let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].score > cfg.det_score_min).collect();
        order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
        let mut covered: Vec<TargetState> = tracks.iter().map(|t| t.state).collect();
        let mut chosen = Vec::new();
        for i in order {
            let d = dets[i].state;
            if covered.iter().any(|c| iou(c, &d) >= cfg.new_track_cover_iou) {
                continue;
            }
            let [cx, cy] = d.center();
            if cx < 0.0 || cy < 0.0 || cx >= self.frame_size.0 || cy >= self.frame_size.1 {
                continue;
            }
            covered.push(d);
            chosen.push(i);
        }
        if chosen.is_empty() {
            return Ok(Vec::new());
        }
        // donors are the pooled features of everything already present
        let mut donors: Vec<Tensor3> = Vec::new();
        for t in tracks.iter() {
            if let Ok(p) = ctx.pool(&t.state) {
                donors.push(p);
            }
        }
        let mut newborn: Vec<(TrackId, Detection)> = chosen
            .iter()
            .map(|&i| {
                let id = TrackId(self.next_id);
                self.next_id += 1;
                (id, dets[i])
            })
            .collect();
        let mode = self.mode();
        let train_vis = self.needs_visibility();
        let built = self
            .par_map(&mut newborn, |(id, d)| {
                let mut rng = substream(cfg.seed, "init", &[id.0]);
                let set = init_set(&d.state, &donors, |b| ctx.pool(b), &cfg, self.frame_size, &mut rng)?;
                let branch = init_branch(&set, &cfg.train_config(), mode, train_vis, &mut rng)?;
                Ok::<_, Error>((*id, *d, branch))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        for (id, d, branch) in built {
            self.stats.births += 1;
            log::debug!("frame {frame}: track {} born at {:?}", id.0, d.state.as_array());
            let row = ResultRow {
                frame,
                id: id.0,
                state: d.state,
                score: d.score,
            };
            let confirmed = cfg.t_init() == 0;
            if confirmed {
                out.push(row);
            }
            tracks.push(Track {
                id,
                state: d.state,
                status: TrackStatus::Tracked,
                branch,
                motion: MotionState::new(&d.state, frame, cfg.t_gap()),
                birth_frame: frame,
                last_score: d.score,
                temporal: TemporalAttention::fixed(cfg.fixed_alpha),
                attention: None,
                confirmed,
                pending: if confirmed { Vec::new() } else { vec![row] },
            });
        }
        Ok(out)
    }

    /// Rows still held back for unconfirmed tracks; they are discarded if
    /// the sequence ends before probation does.
    pub fn pending(&self) -> usize {
        self.tracks.iter().map(|t| t.pending.len()).sum()
    }
}

/// Training material for a target born at `x0`: its pooled features,
/// jittered copies with their visibility masks, replacement donors (the
/// `others` plus background crops) and background negatives.
pub fn init_set<R: Rng + ?Sized>(
    x0: &TargetState,
    others: &[Tensor3],
    pool: impl Fn(&TargetState) -> Result<Tensor3>,
    cfg: &EngineConfig,
    frame_size: (f64, f64),
    rng: &mut R,
) -> Result<InitSet> {
    let pristine = pool(x0)?;
    let mut jittered = Vec::with_capacity(cfg.num_jitter);
    for _ in 0..cfg.num_jitter {
        if let Some(b) = jitter_positive(x0, 0.3, cfg.pos_iou, rng) {
            if let Ok(p) = pool(&b) {
                jittered.push((p, overlap_mask(&b, x0, &cfg.geometry)));
            }
        }
    }
    let mut donors = others.to_vec();
    let mut background = Vec::new();
    for k in 0..cfg.num_background_donors + cfg.num_jitter {
        if let Some(b) = background_negative(x0, cfg.neg_iou, frame_size, rng) {
            if let Ok(p) = pool(&b) {
                if k < cfg.num_background_donors {
                    donors.push(p);
                } else {
                    background.push(p);
                }
            }
        }
    }
    if donors.is_empty() {
        // a frame too small for any background crop
        donors.push(Tensor3::zeros(cfg.geometry.width, cfg.geometry.height, cfg.geometry.channels));
    }
    Ok(InitSet {
        pristine,
        jittered,
        donors,
        background,
    })
}

/// Runs the engine over frames `1..=frames` and returns every emitted row.
pub fn run_sequence(
    engine: &mut Engine,
    frames: u32,
    detections: &crate::io::DetectionStream,
) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for f in 1..=frames {
        let d = detections.get(&f).map(Vec::as_slice).unwrap_or(&[]);
        rows.extend(engine.step(f, d)?);
    }
    Ok(rows)
}
