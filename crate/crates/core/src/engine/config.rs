use std::fmt::Write as _;
use std::str::FromStr;

use crate::branch::{TemporalParams, TrainConfig};
use crate::error::{Error, Result};
use crate::features::FeatureGeometry;

/// Which optional components are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationFlags {
    pub motion: bool,
    pub spatial_attention: bool,
    pub temporal_attention: bool,
}

impl AblationFlags {
    pub const ALL: AblationFlags = AblationFlags {
        motion: true,
        spatial_attention: true,
        temporal_attention: true,
    };
}

/// The five component presets: baseline, +motion, +spatial, +temporal, all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ablation {
    P1,
    P2,
    P3,
    P4,
    P5,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::P1, Ablation::P2, Ablation::P3, Ablation::P4, Ablation::P5];

    pub fn flags(self) -> AblationFlags {
        let (motion, spatial_attention, temporal_attention) = match self {
            Ablation::P1 => (false, false, false),
            Ablation::P2 => (true, false, false),
            Ablation::P3 => (true, true, false),
            Ablation::P4 => (true, false, true),
            Ablation::P5 => (true, true, true),
        };
        AblationFlags {
            motion,
            spatial_attention,
            temporal_attention,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::P1 => "p1",
            Ablation::P2 => "p2",
            Ablation::P3 => "p3",
            Ablation::P4 => "p4",
            Ablation::P5 => "p5",
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown ablation preset `{s}` (p1..p5)")))
    }
}

/// How candidate features are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneMode {
    /// One feature map per frame, shared by all targets and candidates.
    Shared,
    /// Features recomputed from the frame for every pooled box.
    Recompute,
}

/// Which feature backend the command line should build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    /// Precomputed maps if the sequence ships them, else images.
    Auto,
    Synthetic,
    GradientHistogram,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Tracked if the best candidate scores at least this.
    pub p0: f64,
    /// Refinement overlap threshold.
    pub o0: f64,
    /// History gating threshold on the temporal attention.
    pub alpha0: f64,
    pub det_score_min: f64,
    pub pos_iou: f64,
    pub neg_iou: f64,
    pub num_candidates: usize,
    pub frame_rate: f64,
    pub t_init: Option<u32>,
    pub t_term: Option<u32>,
    pub t_gap: Option<u32>,
    pub lr_init: f64,
    /// Visibility pre-training rate; `lr_init` if unset.
    pub lr_vis: Option<f64>,
    pub lr_online: f64,
    pub iters_init: usize,
    pub iters_online: usize,
    /// Samples per SGD step at initialization; 0 means the whole set.
    pub init_batch: usize,
    pub history_cap: usize,
    /// Historical positives drawn per update; 0 means the whole history.
    pub history_batch: usize,
    pub new_track_cover_iou: f64,
    pub seed: u64,
    pub flags: AblationFlags,
    pub learn_temporal: bool,
    /// Temporal weight used when temporal attention is off.
    pub fixed_alpha: f64,
    pub init_std: f64,
    pub geometry: FeatureGeometry,
    pub num_pos: usize,
    pub num_neg: usize,
    pub num_jitter: usize,
    pub num_background_donors: usize,
    pub threads: usize,
    pub backbone: BackboneMode,
    pub feature_backend: BackendChoice,
    pub feature_stride: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            p0: 0.7,
            o0: 0.5,
            alpha0: 0.3,
            det_score_min: 0.25,
            pos_iou: 0.7,
            neg_iou: 0.3,
            num_candidates: 256,
            frame_rate: 30.0,
            t_init: None,
            t_term: None,
            t_gap: None,
            lr_init: 1e-3,
            lr_vis: None,
            lr_online: 5e-4,
            iters_init: 50,
            iters_online: 5,
            init_batch: 0,
            history_cap: 50,
            history_batch: 0,
            new_track_cover_iou: 0.5,
            seed: 0,
            flags: AblationFlags::ALL,
            learn_temporal: false,
            fixed_alpha: 0.5,
            init_std: 0.01,
            geometry: FeatureGeometry::default(),
            num_pos: 8,
            num_neg: 24,
            num_jitter: 32,
            num_background_donors: 4,
            threads: 1,
            backbone: BackboneMode::Shared,
            feature_backend: BackendChoice::Auto,
            feature_stride: 4,
        }
    }
}

/// `ceil(factor * rate)`, tolerant of representation error in the product.
fn frames(factor: f64, rate: f64) -> u32 {
    ((factor * rate - 1e-9).ceil().max(1.0)) as u32
}

impl EngineConfig {
    /// Smaller networks and sample counts for desk-scale runs on synthetic
    /// sequences.
    pub fn compact() -> Self {
        EngineConfig {
            num_candidates: 64,
            lr_init: 0.2,
            lr_vis: Some(1.0),
            lr_online: 0.05,
            iters_init: 60,
            iters_online: 2,
            init_batch: 16,
            history_batch: 4,
            init_std: 0.1,
            geometry: FeatureGeometry {
                width: 7,
                height: 5,
                channels: 8,
            },
            num_pos: 4,
            num_neg: 8,
            num_jitter: 12,
            new_track_cover_iou: 0.3,
            ..EngineConfig::default()
        }
    }

    pub fn with_ablation(mut self, a: Ablation) -> Self {
        self.flags = a.flags();
        self
    }

    /// Probation length.
    pub fn t_init(&self) -> u32 {
        self.t_init.unwrap_or_else(|| frames(0.2, self.frame_rate))
    }

    /// Untracked frames tolerated before termination.
    pub fn t_term(&self) -> u32 {
        self.t_term.unwrap_or_else(|| frames(2.0, self.frame_rate))
    }

    /// Velocity measurement gap.
    pub fn t_gap(&self) -> u32 {
        self.t_gap.unwrap_or_else(|| frames(0.3, self.frame_rate))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr_init: self.lr_init,
            lr_vis: self.lr_vis.unwrap_or(self.lr_init),
            lr_online: self.lr_online,
            iters_init: self.iters_init,
            iters_online: self.iters_online,
            init_batch: self.init_batch,
            history_cap: self.history_cap,
            init_std: self.init_std,
            learn_temporal: self.learn_temporal,
            temporal: TemporalParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("p0", self.p0),
            ("o0", self.o0),
            ("alpha0", self.alpha0),
            ("det_score_min", self.det_score_min),
            ("pos_iou", self.pos_iou),
            ("neg_iou", self.neg_iou),
            ("new_track_cover_iou", self.new_track_cover_iou),
            ("fixed_alpha", self.fixed_alpha),
        ];
        for (k, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{k} = {v} must lie in [0, 1]")));
            }
        }
        let counts = [
            ("num_candidates", self.num_candidates),
            ("iters_init", self.iters_init),
            ("iters_online", self.iters_online),
            ("history_cap", self.history_cap),
            ("num_pos", self.num_pos),
            ("num_neg", self.num_neg),
            ("threads", self.threads),
            ("feature_stride", self.feature_stride),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be >= 1")));
            }
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Config(format!("frame_rate {} must be > 0", self.frame_rate)));
        }
        for (k, v) in [("lr_init", self.lr_init), ("lr_vis", self.lr_vis.unwrap_or(self.lr_init)), ("lr_online", self.lr_online), ("init_std", self.init_std)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} = {v} must be finite and >= 0")));
            }
        }
        FeatureGeometry::new(self.geometry.width, self.geometry.height, self.geometry.channels)?;
        Ok(())
    }

    /// Sets one `key = value` entry. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("cannot parse `{v}` for {key}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v.to_ascii_lowercase().as_str() {
                "1" | "true" | "on" | "yes" => Ok(true),
                "0" | "false" | "off" | "no" => Ok(false),
                _ => Err(Error::Config(format!("cannot parse `{v}` for {key}"))),
            }
        }
        let v = value.trim();
        match key.trim() {
            "p0" => self.p0 = p(key, v)?,
            "o0" => self.o0 = p(key, v)?,
            "alpha0" => self.alpha0 = p(key, v)?,
            "det_score_min" => self.det_score_min = p(key, v)?,
            "pos_iou" => self.pos_iou = p(key, v)?,
            "neg_iou" => self.neg_iou = p(key, v)?,
            "num_candidates" => self.num_candidates = p(key, v)?,
            "frame_rate" => self.frame_rate = p(key, v)?,
            "t_init" => self.t_init = Some(p(key, v)?),
            "t_term" => self.t_term = Some(p(key, v)?),
            "t_gap" => self.t_gap = Some(p(key, v)?),
            "lr_init" => self.lr_init = p(key, v)?,
            "lr_vis" => self.lr_vis = Some(p(key, v)?),
            "lr_online" => self.lr_online = p(key, v)?,
            "iters_init" => self.iters_init = p(key, v)?,
            "iters_online" => self.iters_online = p(key, v)?,
            "init_batch" => self.init_batch = p(key, v)?,
            "history_cap" => self.history_cap = p(key, v)?,
            "history_batch" => self.history_batch = p(key, v)?,
            "new_track_cover_iou" => self.new_track_cover_iou = p(key, v)?,
            "seed" => self.seed = p(key, v)?,
            "motion" => self.flags.motion = flag(key, v)?,
            "spatial_attention" => self.flags.spatial_attention = flag(key, v)?,
            "temporal_attention" => self.flags.temporal_attention = flag(key, v)?,
            "ablation" => self.flags = v.parse::<Ablation>()?.flags(),
            "learn_temporal" => self.learn_temporal = flag(key, v)?,
            "fixed_alpha" => self.fixed_alpha = p(key, v)?,
            "init_std" => self.init_std = p(key, v)?,
            "roi_width" => self.geometry.width = p(key, v)?,
            "roi_height" => self.geometry.height = p(key, v)?,
            "channels" => self.geometry.channels = p(key, v)?,
            "num_pos" => self.num_pos = p(key, v)?,
            "num_neg" => self.num_neg = p(key, v)?,
            "num_jitter" => self.num_jitter = p(key, v)?,
            "num_background_donors" => self.num_background_donors = p(key, v)?,
            "threads" => self.threads = p(key, v)?,
            "backbone" => {
                self.backbone = match v {
                    "shared" => BackboneMode::Shared,
                    "recompute" => BackboneMode::Recompute,
                    _ => return Err(Error::Config(format!("backbone `{v}` (shared|recompute)"))),
                }
            }
            "feature_backend" => {
                self.feature_backend = match v {
                    "auto" => BackendChoice::Auto,
                    "synthetic" => BackendChoice::Synthetic,
                    "gradient_histogram" => BackendChoice::GradientHistogram,
                    "precomputed" => BackendChoice::Precomputed,
                    _ => {
                        return Err(Error::Config(format!(
                            "feature_backend `{v}` (auto|synthetic|gradient_histogram|precomputed)"
                        )))
                    }
                }
            }
            "feature_stride" => self.feature_stride = p(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every setting as `key = value` lines, readable by [`EngineConfig::set`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("p0", self.p0.to_string());
        put("o0", self.o0.to_string());
        put("alpha0", self.alpha0.to_string());
        put("det_score_min", self.det_score_min.to_string());
        put("pos_iou", self.pos_iou.to_string());
        put("neg_iou", self.neg_iou.to_string());
        put("num_candidates", self.num_candidates.to_string());
        put("frame_rate", self.frame_rate.to_string());
        put("t_init", self.t_init().to_string());
        put("t_term", self.t_term().to_string());
        put("t_gap", self.t_gap().to_string());
        put("lr_init", self.lr_init.to_string());
        put("lr_vis", self.lr_vis.unwrap_or(self.lr_init).to_string());
        put("lr_online", self.lr_online.to_string());
        put("iters_init", self.iters_init.to_string());
        put("iters_online", self.iters_online.to_string());
        put("init_batch", self.init_batch.to_string());
        put("history_cap", self.history_cap.to_string());
        put("history_batch", self.history_batch.to_string());
        put("new_track_cover_iou", self.new_track_cover_iou.to_string());
        put("seed", self.seed.to_string());
        put("motion", self.flags.motion.to_string());
        put("spatial_attention", self.flags.spatial_attention.to_string());
        put("temporal_attention", self.flags.temporal_attention.to_string());
        put("learn_temporal", self.learn_temporal.to_string());
        put("fixed_alpha", self.fixed_alpha.to_string());
        put("init_std", self.init_std.to_string());
        put("roi_width", self.geometry.width.to_string());
        put("roi_height", self.geometry.height.to_string());
        put("channels", self.geometry.channels.to_string());
        put("num_pos", self.num_pos.to_string());
        put("num_neg", self.num_neg.to_string());
        put("num_jitter", self.num_jitter.to_string());
        put("num_background_donors", self.num_background_donors.to_string());
        put("threads", self.threads.to_string());
        let backbone = match self.backbone {
            BackboneMode::Shared => "shared",
            BackboneMode::Recompute => "recompute",
        };
        put("backbone", backbone.into());
        let backend = match self.feature_backend {
            BackendChoice::Auto => "auto",
            BackendChoice::Synthetic => "synthetic",
            BackendChoice::GradientHistogram => "gradient_histogram",
            BackendChoice::Precomputed => "precomputed",
        };
        put("feature_backend", backend.into());
        put("feature_stride", self.feature_stride.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rate_derived_constants() {
        let c = EngineConfig::default();
        assert_eq!((c.t_init(), c.t_term(), c.t_gap()), (6, 60, 9));
        let c = EngineConfig {
            frame_rate: 25.0,
            ..EngineConfig::default()
        };
        assert_eq!((c.t_init(), c.t_term(), c.t_gap()), (5, 50, 8));
        let c = EngineConfig {
            frame_rate: 7.0,
            ..EngineConfig::default()
        };
        assert_eq!((c.t_init(), c.t_term(), c.t_gap()), (2, 14, 3));
    }

    #[test]
    fn presets_map_to_flags() {
        let f = Ablation::P1.flags();
        assert!(!f.motion && !f.spatial_attention && !f.temporal_attention);
        assert_eq!(Ablation::P5.flags(), AblationFlags::ALL);
        assert!(Ablation::P2.flags().motion && !Ablation::P2.flags().spatial_attention);
        assert!(Ablation::P3.flags().spatial_attention && !Ablation::P3.flags().temporal_attention);
        assert!(!Ablation::P4.flags().spatial_attention && Ablation::P4.flags().temporal_attention);
        assert_eq!("P3".parse::<Ablation>().unwrap(), Ablation::P3);
        assert!("p6".parse::<Ablation>().is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = EngineConfig::compact().with_ablation(Ablation::P4);
        c.seed = 42;
        c.backbone = BackboneMode::Recompute;
        let mut d = EngineConfig::default();
        for line in c.to_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            assert!(d.set(k.trim(), v).unwrap(), "{k}");
        }
        // derived frame counts come back as explicit overrides
        assert_eq!(d.t_init(), c.t_init());
        d.t_init = None;
        d.t_term = None;
        d.t_gap = None;
        assert_eq!(d, c);
        assert!(!d.set("nonsense", "1").unwrap());
        assert!(d.set("p0", "high").is_err());
    }

    #[test]
    fn validation() {
        assert!(EngineConfig::default().validate().is_ok());
        let c = EngineConfig {
            p0: 1.5,
            ..EngineConfig::default()
        };
        assert!(c.validate().is_err());
        let c = EngineConfig {
            num_candidates: 0,
            ..EngineConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
