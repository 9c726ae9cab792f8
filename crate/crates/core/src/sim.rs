//! Synthetic sequences with scripted crossings and occlusions.
//!
//! Scenes live on a grid of unit cells. Each target paints its appearance
//! signature into the cells whose centers its box covers; nearer targets
//! paint over farther ones. Feature maps are emitted at cell resolution
//! (stride 1); [`render_image`] draws the same scene as an RGB frame for
//! image-based backends.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{iou, Detection, TargetState};
use crate::error::{Error, Result};
use crate::engine::{run_sequence, Engine, EngineConfig, EngineStats};
use crate::features::{write_feature_file, FeatureBackend, FrameFeatureMap, ImageSource};
use crate::io::{
    normalize_stream, write_detections, write_ground_truth, write_seqinfo, DetectionStream,
    LabeledBox, LabeledFrames, ResultRow, SequenceMeta,
};
use crate::rng::substream;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptTarget {
    pub signature: Vec<f64>,
    /// Per-channel change across the body from the left edge to the right
    /// edge; empty for none.
    #[serde(default)]
    pub texture_x: Vec<f64>,
    /// As `texture_x`, top to bottom.
    #[serde(default)]
    pub texture_y: Vec<f64>,
    pub width: f64,
    pub height: f64,
    /// Smaller is nearer to the camera.
    pub depth: u32,
    /// Center positions; the target exists from the first to the last
    /// waypoint frame and moves linearly in between.
    pub waypoints: Vec<Waypoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frames: u32,
    pub frame_rate: f64,
    pub channels: usize,
    /// Detection center jitter, in cells.
    #[serde(default)]
    pub det_sigma: f64,
    #[serde(default)]
    pub miss_rate: f64,
    /// Expected false positives per frame.
    #[serde(default)]
    pub fp_rate: f64,
    /// Amplitude of the static background texture.
    #[serde(default)]
    pub background: f64,
    /// Per-frame feature noise.
    #[serde(default)]
    pub noise: f64,
    /// Targets less visible than this are not detected.
    #[serde(default = "default_min_visible")]
    pub min_visible: f64,
    #[serde(default)]
    pub seed: u64,
    pub targets: Vec<ScriptTarget>,
}

fn default_min_visible() -> f64 {
    0.5
}

impl SceneScript {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Script(format!("{}: {m}", self.name)));
        if self.width == 0 || self.height == 0 || self.frames == 0 || self.channels == 0 {
            return bad("frame size, frame count and channels must be >= 1".into());
        }
        if !(self.frame_rate > 0.0) {
            return bad("frame rate must be positive".into());
        }
        for (k, v) in [
            ("det_sigma", self.det_sigma),
            ("fp_rate", self.fp_rate),
            ("background", self.background),
            ("noise", self.noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{k} must be finite and >= 0"));
            }
        }
        for (k, v) in [("miss_rate", self.miss_rate), ("min_visible", self.min_visible)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{k} must lie in [0, 1]"));
            }
        }
        let mut depths: Vec<u32> = self.targets.iter().map(|t| t.depth).collect();
        depths.sort_unstable();
        if depths.windows(2).any(|w| w[0] == w[1]) {
            return bad("target depths must be distinct".into());
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.signature.len() != self.channels || t.signature.iter().any(|v| !v.is_finite()) {
                return bad(format!("target {i}: signature needs {} finite values", self.channels));
            }
            for tex in [&t.texture_x, &t.texture_y] {
                if !(tex.is_empty() || tex.len() == self.channels) || tex.iter().any(|v| !v.is_finite()) {
                    return bad(format!("target {i}: texture needs 0 or {} finite values", self.channels));
                }
            }
            if !(t.width > 0.0 && t.height > 0.0) {
                return bad(format!("target {i}: size must be positive"));
            }
            if t.waypoints.is_empty() {
                return bad(format!("target {i}: no waypoints"));
            }
            if t.waypoints.windows(2).any(|w| w[0].frame >= w[1].frame) {
                return bad(format!("target {i}: waypoint frames must increase"));
            }
            for w in &t.waypoints {
                if w.frame < 1 || w.frame > self.frames {
                    return bad(format!("target {i}: waypoint frame {} outside 1..={}", w.frame, self.frames));
                }
                let inside = w.x - t.width / 2.0 >= 0.0
                    && w.y - t.height / 2.0 >= 0.0
                    && w.x + t.width / 2.0 <= self.width as f64
                    && w.y + t.height / 2.0 <= self.height as f64;
                if !inside {
                    return bad(format!("target {i}: waypoint at frame {} leaves the frame", w.frame));
                }
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> SequenceMeta {
        SequenceMeta {
            name: self.name.clone(),
            frame_count: self.frames,
            frame_rate: self.frame_rate,
            width: self.width as u32,
            height: self.height as u32,
            image_dir: None,
            feature_dir: Some("features".into()),
            feature_stride: Some(1.0),
            feature_channels: Some(self.channels),
        }
    }
}

/// Ground-truth box of `t` at `frame`, if it exists then.
pub fn target_state(t: &ScriptTarget, frame: u32) -> Option<TargetState> {
    let first = t.waypoints.first()?;
    let last = t.waypoints.last()?;
    if frame < first.frame || frame > last.frame {
        return None;
    }
    let k = t.waypoints.partition_point(|w| w.frame <= frame);
    let a = &t.waypoints[k - 1];
    let (x, y) = match t.waypoints.get(k) {
        Some(b) => {
            let s = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
            (a.x + s * (b.x - a.x), a.y + s * (b.y - a.y))
        }
        None => (a.x, a.y),
    };
    TargetState::new(x, y, t.width, t.height).ok()
}

/// Whether the center of cell `(cx, cy)` lies inside `s`.
pub fn covers(s: &TargetState, cx: usize, cy: usize) -> bool {
    let c = s.to_corners();
    let (px, py) = (cx as f64 + 0.5, cy as f64 + 0.5);
    px >= c.left && px < c.right && py >= c.top && py < c.bottom
}

/// Cells covered by a box, clamped to the grid.
fn cell_span(s: &TargetState, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let c = s.to_corners();
    let lo = |v: f64, n: usize| ((v - 0.5).ceil().max(0.0) as usize).min(n);
    let hi = |v: f64, n: usize| ((v - 0.5).ceil().max(0.0) as usize).min(n);
    (lo(c.left, w), lo(c.top, h), hi(c.right, w), hi(c.bottom, h))
}

/// Index of the frontmost target covering each cell, or `None`.
pub fn owner_map(script: &SceneScript, frame: u32) -> Vec<Option<usize>> {
    let (w, h) = (script.width, script.height);
    let mut owner = vec![None; w * h];
    let mut order: Vec<usize> = (0..script.targets.len()).collect();
    // farthest first so nearer targets overwrite
    order.sort_by_key(|&i| std::cmp::Reverse(script.targets[i].depth));
    for i in order {
        let Some(s) = target_state(&script.targets[i], frame) else {
            continue;
        };
        let (x0, y0, x1, y1) = cell_span(&s, w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                owner[y * w + x] = Some(i);
            }
        }
    }
    owner
}

fn background_field(script: &SceneScript) -> Vec<f64> {
    let mut rng = substream(script.seed, "sim-background", &[]);
    (0..script.width * script.height * script.channels)
        .map(|_| script.background * rng.random_range(-1.0..1.0))
        .collect()
}

/// Cell-resolution feature map of `frame`. Values are rounded to `f32`
/// precision so in-memory and file-backed runs see identical features.
pub fn render_features(script: &SceneScript, frame: u32) -> Result<FrameFeatureMap> {
    if frame < 1 || frame > script.frames {
        return Err(Error::FrameMismatch(format!(
            "frame {frame} outside 1..={}",
            script.frames
        )));
    }
    let c = script.channels;
    let mut data = background_field(script);
    let owner = owner_map(script, frame);
    let states: Vec<Option<TargetState>> = script.targets.iter().map(|t| target_state(t, frame)).collect();
    for (cell, o) in owner.iter().enumerate() {
        let Some(i) = *o else {
            continue;
        };
        let t = &script.targets[i];
        let out = &mut data[cell * c..(cell + 1) * c];
        out.copy_from_slice(&t.signature);
        let k = states[i].expect("owner exists").to_corners();
        let (x, y) = ((cell % script.width) as f64 + 0.5, (cell / script.width) as f64 + 0.5);
        let u = 2.0 * (x - k.left) / (k.right - k.left) - 1.0;
        let v = 2.0 * (y - k.top) / (k.bottom - k.top) - 1.0;
        for (tex, r) in [(&t.texture_x, u), (&t.texture_y, v)] {
            for (o, d) in out.iter_mut().zip(tex.iter()) {
                *o += d * r;
            }
        }
    }
    if script.noise > 0.0 {
        let mut rng = substream(script.seed, "sim-noise", &[u64::from(frame)]);
        let n = Normal::new(0.0, script.noise).expect("finite noise");
        data.iter_mut().for_each(|v| *v += n.sample(&mut rng));
    }
    data.iter_mut().for_each(|v| *v = *v as f32 as f64);
    FrameFeatureMap::new(Tensor3::from_vec(script.width, script.height, c, data)?, 1.0)
}

/// RGB rendering of `frame` with `scale` pixels per cell. Targets are
/// striped in a signature-dependent color and orientation.
pub fn render_image(script: &SceneScript, frame: u32, scale: usize) -> Result<image::RgbImage> {
    if frame < 1 || frame > script.frames || scale == 0 {
        return Err(Error::FrameMismatch(format!(
            "frame {frame} (scale {scale}) outside 1..={}",
            script.frames
        )));
    }
    let (w, h) = (script.width * scale, script.height * scale);
    let bg = background_field(script);
    let c = script.channels;
    let states: Vec<Option<TargetState>> =
        script.targets.iter().map(|t| target_state(t, frame)).collect();
    let mut order: Vec<usize> = (0..script.targets.len()).collect();
    order.sort_by_key(|&i| script.targets[i].depth);
    let looks: Vec<([f64; 3], f64, f64)> = script
        .targets
        .iter()
        .map(|t| {
            let s = |k: usize| t.signature[k % c];
            let rgb = [128.0 + 110.0 * s(0), 128.0 + 110.0 * s(1), 128.0 + 110.0 * s(2)];
            let theta = s(3).atan2(s(4));
            (rgb, theta.cos(), theta.sin())
        })
        .collect();
    let mut rng = substream(script.seed, "sim-image-noise", &[u64::from(frame)]);
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for (px, py, p) in img.enumerate_pixels_mut() {
        let (sx, sy) = ((px as f64 + 0.5) / scale as f64, (py as f64 + 0.5) / scale as f64);
        let hit = order.iter().find(|&&i| {
            states[i].is_some_and(|s| {
                let k = s.to_corners();
                sx >= k.left && sx < k.right && sy >= k.top && sy < k.bottom
            })
        });
        let rgb = match hit {
            Some(&i) => {
                let (base, cx, cy) = looks[i];
                let s = states[i].expect("covering target");
                let (u, v) = (sx - s.x, sy - s.y);
                let stripe = 45.0 * (std::f64::consts::TAU * (u * cx + v * cy) * scale as f64 / STRIPE_PERIOD).sin();
                base.map(|b| b + stripe)
            }
            None => {
                let cell = (sy as usize).min(script.height - 1) * script.width
                    + (sx as usize).min(script.width - 1);
                let t = bg[cell * c];
                [110.0 + 60.0 * t; 3]
            }
        };
        let jitter = 4.0 * rng.random_range(-1.0..1.0);
        *p = image::Rgb(rgb.map(|v| (v + jitter).clamp(0.0, 255.0) as u8));
    }
    Ok(img)
}

/// Ground truth of the whole scene; ids are target indices plus one.
pub fn ground_truth(script: &SceneScript) -> LabeledFrames {
    let mut gt = LabeledFrames::new();
    for f in 1..=script.frames {
        let boxes: Vec<LabeledBox> = script
            .targets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                target_state(t, f).map(|state| LabeledBox {
                    id: i as i64 + 1,
                    state,
                    score: 1.0,
                })
            })
            .collect();
        if !boxes.is_empty() {
            gt.insert(f, boxes);
        }
    }
    gt
}

/// Fraction of each target's covered cells in which it is frontmost.
pub fn visible_fractions(script: &SceneScript, frame: u32) -> Vec<f64> {
    let owner = owner_map(script, frame);
    script
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let Some(s) = target_state(t, frame) else {
                return 0.0;
            };
            let (x0, y0, x1, y1) = cell_span(&s, script.width, script.height);
            let total = (x1 - x0) * (y1 - y0);
            if total == 0 {
                return 0.0;
            }
            let mut seen = 0;
            for y in y0..y1 {
                for x in x0..x1 {
                    if owner[y * script.width + x] == Some(i) {
                        seen += 1;
                    }
                }
            }
            seen as f64 / total as f64
        })
        .collect()
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Rounds a box the way result files store it.
fn stored(left: f64, top: f64, w: f64, h: f64) -> Option<TargetState> {
    TargetState::from_top_left(round2(left), round2(top), round2(w), round2(h)).ok()
}

/// Raw detections: jittered ground truth of sufficiently visible targets,
/// minus random misses, plus false positives. Raw scores are in `[0, 1]`,
/// true detections scoring higher than false ones.
pub fn detections(script: &SceneScript) -> BTreeMap<u32, Vec<Detection>> {
    let mut out = BTreeMap::new();
    let (fw, fh) = (script.width as f64, script.height as f64);
    let mean_w = script.targets.iter().map(|t| t.width).sum::<f64>() / script.targets.len().max(1) as f64;
    let mean_h = script.targets.iter().map(|t| t.height).sum::<f64>() / script.targets.len().max(1) as f64;
    for f in 1..=script.frames {
        let mut rng = substream(script.seed, "sim-detections", &[u64::from(f)]);
        let vis = visible_fractions(script, f);
        let mut dets = Vec::new();
        for (i, t) in script.targets.iter().enumerate() {
            let Some(s) = target_state(t, f) else {
                continue;
            };
            let missed = rng.random::<f64>() < script.miss_rate;
            let (dx, dy, dw, dh): (f64, f64, f64, f64) = if script.det_sigma > 0.0 {
                let n = Normal::new(0.0, script.det_sigma).expect("finite sigma");
                (n.sample(&mut rng), n.sample(&mut rng), 0.5 * n.sample(&mut rng), 0.5 * n.sample(&mut rng))
            } else {
                (0.0, 0.0, 0.0, 0.0)
            };
            let score = rng.random_range(0.45..1.0);
            if missed || vis[i] < script.min_visible {
                continue;
            }
            let w = (s.w + dw).max(1.0);
            let h = (s.h + dh).max(1.0);
            let (l, t) = (s.x + dx - w / 2.0, s.y + dy - h / 2.0);
            if let Some(state) = stored(l, t, w, h) {
                dets.push(Detection { state, score: round2(score) });
            }
        }
        let n_fp = script.fp_rate.floor() as usize
            + usize::from(rng.random::<f64>() < script.fp_rate.fract());
        for _ in 0..n_fp {
            let w = (mean_w * rng.random_range(0.7..1.3)).min(fw);
            let h = (mean_h * rng.random_range(0.7..1.3)).min(fh);
            let l = rng.random_range(0.0..=(fw - w));
            let t = rng.random_range(0.0..=(fh - h));
            let score = rng.random_range(0.0..0.3);
            if let Some(state) = stored(l, t, w, h) {
                dets.push(Detection { state, score: round2(score) });
            }
        }
        if !dets.is_empty() {
            out.insert(f, dets);
        }
    }
    out
}

/// A generated sequence held in memory.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub script: SceneScript,
    pub meta: SequenceMeta,
    pub gt: LabeledFrames,
    pub raw_detections: BTreeMap<u32, Vec<Detection>>,
    /// Detections with normalized scores, as the tracker reads them.
    pub detections: DetectionStream,
}

pub fn simulate(script: &SceneScript) -> Result<Sequence> {
    script.validate()?;
    let raw = detections(script);
    Ok(Sequence {
        script: script.clone(),
        meta: script.meta(),
        gt: ground_truth(script),
        detections: normalize_stream(&raw)?,
        raw_detections: raw,
    })
}

/// Writes `seqinfo.ini`, `gt/gt.txt`, `det/det.txt`, `features/*.fmap`
/// and `script.toml` under `dir`.
pub fn generate_sequence(script: &SceneScript, dir: &Path) -> Result<Sequence> {
    let seq = simulate(script)?;
    for sub in ["gt", "det", "features"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    write_seqinfo(&seq.meta, &dir.join("seqinfo.ini"))?;
    write_ground_truth(&seq.gt, &dir.join("gt").join("gt.txt"))?;
    write_detections(&seq.raw_detections, &dir.join("det").join("det.txt"))?;
    for f in 1..=script.frames {
        let m = render_features(script, f)?;
        write_feature_file(&dir.join("features").join(format!("{f:06}.fmap")), m.cells())?;
    }
    save_script(script, &dir.join("script.toml"))?;
    Ok(seq)
}

/// Tracks a simulated sequence in memory with the synthetic backend.
pub fn track_sequence(seq: &Sequence, mut cfg: EngineConfig) -> Result<(Vec<ResultRow>, EngineStats)> {
    cfg.frame_rate = seq.script.frame_rate;
    let backend = FeatureBackend::Synthetic(Arc::new(seq.script.clone()));
    let size = (seq.script.width as f64, seq.script.height as f64);
    let mut engine = Engine::new(cfg, backend, size)?;
    let rows = run_sequence(&mut engine, seq.script.frames, &seq.detections)?;
    Ok((rows, engine.stats()))
}

/// Like [`track_sequence`], but the tracker reads RGB frames rendered at
/// `scale` pixels per scene unit through the gradient-histogram backend
/// with one cell per scene unit. Rows come back in scene units.
pub fn track_rendered(seq: &Sequence, mut cfg: EngineConfig, scale: usize) -> Result<(Vec<ResultRow>, EngineStats)> {
    cfg.frame_rate = seq.script.frame_rate;
    let backend = FeatureBackend::GradientHistogram {
        images: ImageSource::Rendered {
            script: Arc::new(seq.script.clone()),
            scale,
        },
        stride: scale,
        channels: cfg.geometry.channels,
    };
    let k = scale as f64;
    let zoom = |s: &TargetState, k: f64| TargetState { x: s.x * k, y: s.y * k, w: s.w * k, h: s.h * k };
    let dets: DetectionStream = seq
        .detections
        .iter()
        .map(|(f, ds)| (*f, ds.iter().map(|d| Detection { state: zoom(&d.state, k), score: d.score }).collect()))
        .collect();
    let size = (seq.script.width as f64 * k, seq.script.height as f64 * k);
    let mut engine = Engine::new(cfg, backend, size)?;
    let mut rows = run_sequence(&mut engine, seq.script.frames, &dets)?;
    for r in &mut rows {
        r.state = zoom(&r.state, 1.0 / k);
    }
    Ok((rows, engine.stats()))
}

pub fn save_script(script: &SceneScript, path: &Path) -> Result<()> {
    let text = toml::to_string(script).map_err(|e| Error::Script(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_script(path: &Path) -> Result<SceneScript> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: SceneScript =
        toml::from_str(&text).map_err(|e| Error::Script(format!("{}: {e}", path.display())))?;
    s.validate()?;
    Ok(s)
}

/// Random unit vectors whose pairwise cosine similarity stays below 0.5.
pub fn signatures<R: Rng + ?Sized>(n: usize, channels: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        assert!(attempts < 100_000, "cannot place {n} signatures in {channels} dimensions");
        let mut v: Vec<f64> = (0..channels).map(|_| normal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        if out
            .iter()
            .all(|u| u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() < 0.5)
        {
            out.push(v);
        }
    }
    out
}

/// Stripe period of rendered targets, in pixels.
pub const STRIPE_PERIOD: f64 = 5.0;

/// Channels used by the standard suite.
pub const SUITE_CHANNELS: usize = 8;
pub const SUITE_SEQUENCES: usize = 20;
/// Norm of the suite targets' texture vectors (signatures have unit norm).
pub const TEXTURE_STRENGTH: f64 = 1.5;

/// Straight-line path through `(cx, cy)` at frame `fc` with velocity `v`,
/// cut to the frames during which the box stays inside the scene.
fn crossing_path(
    (cx, cy): (f64, f64),
    fc: u32,
    v: (f64, f64),
    (w, h): (f64, f64),
    (fw, fh): (f64, f64),
    frames: u32,
) -> Vec<Waypoint> {
    let inside = |f: u32| {
        let t = f as f64 - fc as f64;
        let (x, y) = (cx + v.0 * t, cy + v.1 * t);
        x - w / 2.0 >= 0.0 && y - h / 2.0 >= 0.0 && x + w / 2.0 <= fw && y + h / 2.0 <= fh
    };
    let mut a = fc;
    while a > 1 && inside(a - 1) {
        a -= 1;
    }
    let mut b = fc;
    while b < frames && inside(b + 1) {
        b += 1;
    }
    let at = |f: u32| {
        let t = f as f64 - fc as f64;
        Waypoint { frame: f, x: cx + v.0 * t, y: cy + v.1 * t }
    };
    vec![at(a), at(b)]
}

/// A wandering path: straight segments with random turns, kept inside
/// the scene.
fn wander<R: Rng + ?Sized>(
    rng: &mut R,
    (w, h): (f64, f64),
    (fw, fh): (f64, f64),
    birth: u32,
    death: u32,
) -> Vec<Waypoint> {
    let clamp_x = |x: f64| x.clamp(w / 2.0 + 1.0, fw - w / 2.0 - 1.0);
    let clamp_y = |y: f64| y.clamp(h / 2.0 + 1.0, fh - h / 2.0 - 1.0);
    let mut x = clamp_x(rng.random_range(0.0..fw));
    let mut y = clamp_y(rng.random_range(0.0..fh));
    let mut f = birth;
    let mut out = vec![Waypoint { frame: f, x, y }];
    while f < death {
        let len = rng.random_range(25..60).min(death - f);
        let speed = rng.random_range(0.4..1.4);
        let dir = rng.random_range(0.0..std::f64::consts::TAU);
        x = clamp_x(x + speed * len as f64 * dir.cos());
        y = clamp_y(y + speed * len as f64 * dir.sin());
        f += len;
        out.push(Waypoint { frame: f, x, y });
    }
    out
}

/// The fixed family of twenty evaluation scenes. Each has two to four
/// targets, 100 to 130 frames and at least one pair of targets crossing
/// with the farther one occluded.
pub fn standard_suite(seed: u64) -> Vec<SceneScript> {
    (0..SUITE_SEQUENCES as u64).map(|i| suite_scene(seed, i)).collect()
}

fn suite_scene(seed: u64, index: u64) -> SceneScript {
    let mut rng = substream(seed, "sim-suite", &[index]);
    let (fw, fh) = (96.0, 64.0);
    let frames = rng.random_range(100..=130);
    let n = rng.random_range(2..=4usize);
    let sigs = signatures(n, SUITE_CHANNELS, &mut rng);
    let size = |rng: &mut crate::rng::StreamRng| (rng.random_range(9.0..12.0f64), rng.random_range(20.0..26.0f64));
    let mut targets = Vec::with_capacity(n);
    // the crossing pair: opposite horizontal motion through a common point
    let fc = rng.random_range(35..=frames - 35);
    let cx = rng.random_range(40.0..56.0);
    let cy = rng.random_range(20.0..44.0);
    let speed = rng.random_range(0.6..1.3);
    let dy = rng.random_range(-2.5..2.5);
    let s0 = size(&mut rng);
    let s1 = (s0.0 * rng.random_range(0.92..1.0), s0.1 * rng.random_range(0.92..1.0));
    let v0 = (speed, rng.random_range(-0.1..0.1));
    let v1 = (-speed * rng.random_range(0.8..1.2), rng.random_range(-0.1..0.1));
    targets.push((s0, crossing_path((cx, cy), fc, v0, s0, (fw, fh), frames)));
    targets.push((s1, crossing_path((cx, cy + dy), fc, v1, s1, (fw, fh), frames)));
    for _ in 2..n {
        let s = size(&mut rng);
        let birth = rng.random_range(1..=30);
        let death = rng.random_range((frames - 30).max(birth + 20)..=frames);
        targets.push((s, wander(&mut rng, s, (fw, fh), birth, death)));
    }
    let mut trng = substream(seed, "sim-texture", &[index]);
    let tex = Normal::new(0.0, TEXTURE_STRENGTH / (SUITE_CHANNELS as f64).sqrt()).expect("finite");
    let mut draw = || (0..SUITE_CHANNELS).map(|_| tex.sample(&mut trng)).collect::<Vec<f64>>();
    let textures: Vec<(Vec<f64>, Vec<f64>)> = (0..n).map(|_| (draw(), draw())).collect();
    let mut depth_order: Vec<u32> = (0..n as u32).collect();
    // the pair keeps its order (first in front); others are shuffled around it
    if n > 2 {
        let others = &mut depth_order[2..];
        for k in (1..others.len()).rev() {
            others.swap(k, rng.random_range(0..=k));
        }
    }
    SceneScript {
        name: format!("suite-{seed}-{index:02}"),
        width: fw as usize,
        height: fh as usize,
        frames,
        frame_rate: 30.0,
        channels: SUITE_CHANNELS,
        det_sigma: 0.6,
        miss_rate: 0.05,
        fp_rate: 0.3,
        background: 0.35,
        noise: 0.05,
        min_visible: 0.5,
        seed: crate::rng::stream_seed(seed, "sim-suite-scene", &[index]),
        targets: targets
            .into_iter()
            .zip(sigs)
            .zip(depth_order)
            .zip(textures)
            .map(|((((size, waypoints), signature), depth), (texture_x, texture_y))| ScriptTarget {
                signature,
                texture_x,
                texture_y,
                width: size.0,
                height: size.1,
                depth,
                waypoints,
            })
            .collect(),
    }
}

/// `n` targets wandering for the whole of `frames` frames in a 192×96
/// scene.
pub fn crowd_scene(seed: u64, n: usize, frames: u32) -> SceneScript {
    let mut rng = substream(seed, "sim-crowd", &[n as u64]);
    let (fw, fh) = (192.0, 96.0);
    let sigs = signatures(n, SUITE_CHANNELS, &mut rng);
    let tex = Normal::new(0.0, TEXTURE_STRENGTH / (SUITE_CHANNELS as f64).sqrt()).expect("finite");
    let targets = sigs
        .into_iter()
        .enumerate()
        .map(|(i, signature)| {
            let size = (rng.random_range(9.0..12.0f64), rng.random_range(20.0..26.0f64));
            let waypoints = wander(&mut rng, size, (fw, fh), 1, frames);
            ScriptTarget {
                signature,
                texture_x: (0..SUITE_CHANNELS).map(|_| tex.sample(&mut rng)).collect(),
                texture_y: (0..SUITE_CHANNELS).map(|_| tex.sample(&mut rng)).collect(),
                width: size.0,
                height: size.1,
                depth: i as u32,
                waypoints,
            }
        })
        .collect();
    SceneScript {
        name: format!("crowd-{seed}-{n}"),
        width: fw as usize,
        height: fh as usize,
        frames,
        frame_rate: 30.0,
        channels: SUITE_CHANNELS,
        det_sigma: 0.6,
        miss_rate: 0.05,
        fp_rate: 0.3,
        background: 0.35,
        noise: 0.05,
        min_visible: 0.5,
        seed: crate::rng::stream_seed(seed, "sim-crowd-scene", &[n as u64]),
        targets,
    }
}

/// Largest IoU between two ground-truth boxes in any frame.
pub fn max_gt_overlap(gt: &LabeledFrames) -> f64 {
    let mut best: f64 = 0.0;
    for boxes in gt.values() {
        for (i, a) in boxes.iter().enumerate() {
            for b in &boxes[i + 1..] {
                best = best.max(iou(&a.state, &b.state));
            }
        }
    }
    best
}

/// Writes every suite scene to `dir/<name>/`.
pub fn write_suite(seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for s in standard_suite(seed) {
        let p = dir.join(&s.name);
        generate_sequence(&s, &p)?;
        out.push(p);
    }
    Ok(out)
}
