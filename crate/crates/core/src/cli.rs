//! Command-line interface: `track`, `eval`, `simulate`, `gradcheck` and
//! `overlay`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::engine::{run_sequence, Ablation, BackboneMode, BackendChoice, Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureBackend, ImageSource};
use crate::io::{
    load_config, read_detections, read_ground_truth, read_results, read_seqinfo, save_checkpoint,
    write_results, SequenceMeta,
};
use crate::metrics::{evaluate, frames_from_rows, IOU_MIN};
use crate::sim::{generate_sequence, load_script, render_image, write_suite};

#[derive(Debug, Parser)]
#[command(name = "spatiotrack", version, about = "Online multi-object tracking with attention-guided per-target branches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Full-size networks and sample counts.
    Full,
    /// Small networks for synthetic sequences.
    Compact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AblationArg {
    P1,
    P2,
    P3,
    P4,
    P5,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::P1 => Ablation::P1,
            AblationArg::P2 => Ablation::P2,
            AblationArg::P3 => Ablation::P3,
            AblationArg::P4 => Ablation::P4,
            AblationArg::P5 => Ablation::P5,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackboneArg {
    Shared,
    Recompute,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Auto,
    Synthetic,
    GradientHistogram,
    Precomputed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track one sequence and write a result file.
    Track {
        /// Sequence directory containing `seqinfo.ini`.
        #[arg(long)]
        seq: PathBuf,
        /// Detection file (MOTChallenge det format).
        #[arg(long)]
        det: PathBuf,
        /// Result file to write.
        #[arg(long)]
        out: PathBuf,
        /// Key-value configuration applied over the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Component preset: p1 baseline, p2 motion, p3 motion+spatial,
        /// p4 motion+temporal, p5 all.
        #[arg(long, value_enum)]
        ablation: Option<AblationArg>,
        #[arg(long, value_enum, default_value = "full")]
        preset: Preset,
        /// Worker threads for per-target work; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum)]
        backbone: Option<BackboneArg>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Writes an engine checkpoint after the last frame.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Ground truth to evaluate against after tracking.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Evaluate a result file against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        res: PathBuf,
        #[arg(long, default_value_t = IOU_MIN)]
        iou: f64,
    },
    /// Generate synthetic sequences.
    Simulate {
        /// The twenty-sequence evaluation suite.
        #[arg(long, conflicts_with = "script", required_unless_present = "script")]
        suite: bool,
        /// A single scene script (TOML).
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Suite seed, or an override of the script's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also render RGB frames into `img1/` at this many pixels per cell.
        #[arg(long)]
        images: Option<usize>,
    },
    /// Finite-difference check of every layer and branch sub-network.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Draw result boxes over frames (or feature heat maps).
    Overlay {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        res: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Picks the feature backend for a sequence directory.
pub fn build_backend(seq: &Path, meta: &SequenceMeta, choice: BackendChoice, cfg: &EngineConfig) -> Result<FeatureBackend> {
    let script = || -> Result<Arc<crate::sim::SceneScript>> { Ok(Arc::new(load_script(&seq.join("script.toml"))?)) };
    let precomputed = || -> Result<FeatureBackend> {
        let dir = meta
            .feature_dir
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{}: seqinfo names no featureDir", seq.display())))?;
        Ok(FeatureBackend::Precomputed {
            dir: seq.join(dir),
            stride: meta.feature_stride.unwrap_or(1.0),
            channels: meta.feature_channels.unwrap_or(cfg.geometry.channels),
        })
    };
    let images = || -> Result<FeatureBackend> {
        let images = match &meta.image_dir {
            Some(d) => ImageSource::Directory(seq.join(d)),
            None => ImageSource::Rendered {
                script: script()?,
                scale: 1,
            },
        };
        Ok(FeatureBackend::GradientHistogram {
            images,
            stride: cfg.feature_stride,
            channels: cfg.geometry.channels,
        })
    };
    match choice {
        BackendChoice::Precomputed => precomputed(),
        BackendChoice::GradientHistogram => images(),
        BackendChoice::Synthetic => Ok(FeatureBackend::Synthetic(script()?)),
        BackendChoice::Auto => {
            if meta.feature_dir.is_some() {
                precomputed()
            } else {
                images()
            }
        }
    }
}

struct TrackArgs<'a> {
    seq: &'a Path,
    det: &'a Path,
    out: &'a Path,
    config: Option<&'a Path>,
    seed: u64,
    ablation: Option<AblationArg>,
    preset: Preset,
    threads: Option<usize>,
    backbone: Option<BackboneArg>,
    backend: Option<BackendArg>,
    checkpoint: Option<&'a Path>,
    gt: Option<&'a Path>,
}

fn track(a: TrackArgs<'_>) -> Result<()> {
    let meta = read_seqinfo(&a.seq.join("seqinfo.ini"))?;
    let base = match a.preset {
        Preset::Full => EngineConfig::default(),
        Preset::Compact => EngineConfig::compact(),
    };
    let mut cfg = load_config(a.config, base)?;
    cfg.frame_rate = meta.frame_rate;
    cfg.seed = a.seed;
    if let Some(p) = a.ablation {
        cfg = cfg.with_ablation(p.into());
    }
    if let Some(t) = a.threads {
        cfg.threads = t.max(1);
    }
    if let Some(b) = a.backbone {
        cfg.backbone = match b {
            BackboneArg::Shared => BackboneMode::Shared,
            BackboneArg::Recompute => BackboneMode::Recompute,
        };
    }
    if let Some(b) = a.backend {
        cfg.feature_backend = match b {
            BackendArg::Auto => BackendChoice::Auto,
            BackendArg::Synthetic => BackendChoice::Synthetic,
            BackendArg::GradientHistogram => BackendChoice::GradientHistogram,
            BackendArg::Precomputed => BackendChoice::Precomputed,
        };
    }
    let backend = build_backend(a.seq, &meta, cfg.feature_backend, &cfg)?;
    cfg.geometry.channels = backend.channels();
    cfg.validate()?;
    let dets = read_detections(a.det)?;
    if let Some((&last, _)) = dets.last_key_value() {
        if last > meta.frame_count {
            return Err(Error::FrameMismatch(format!(
                "detections reach frame {last}, sequence has {}",
                meta.frame_count
            )));
        }
    }
    let size = (
        f64::from(meta.width),
        f64::from(meta.height),
    );
    let mut engine = Engine::new(cfg, backend, size)?;
    let start = Instant::now();
    let rows = run_sequence(&mut engine, meta.frame_count, &dets)?;
    let secs = start.elapsed().as_secs_f64();
    write_results(&rows, a.out)?;
    if let Some(dir) = a.checkpoint {
        save_checkpoint(&engine, Some(meta.frame_count), dir)?;
    }
    println!(
        "sequence {}: {} frames in {:.2} s ({:.2} frames/s), {} rows",
        meta.name,
        meta.frame_count,
        secs,
        f64::from(meta.frame_count) / secs.max(1e-9),
        rows.len()
    );
    if let Some(gt) = a.gt {
        let report = evaluate(&read_ground_truth(gt)?, &frames_from_rows(&rows), IOU_MIN)?;
        print!("{}", report.table(&meta.name));
    }
    Ok(())
}

fn simulate(suite: bool, script: Option<&Path>, out: &Path, seed: Option<u64>, images: Option<usize>) -> Result<()> {
    let dirs = if suite {
        write_suite(seed.unwrap_or(0), out)?
    } else {
        let path = script.ok_or_else(|| Error::Config("--script or --suite is required".into()))?;
        let mut s = load_script(path)?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        let dir = out.join(&s.name);
        generate_sequence(&s, &dir)?;
        vec![dir]
    };
    if let Some(scale) = images {
        for d in &dirs {
            let s = load_script(&d.join("script.toml"))?;
            let img = d.join("img1");
            std::fs::create_dir_all(&img).map_err(|e| Error::io(&img, e))?;
            for f in 1..=s.frames {
                render_image(&s, f, scale)?.save(img.join(format!("{f:06}.png")))?;
            }
        }
    }
    for d in &dirs {
        println!("{}", d.display());
    }
    Ok(())
}

fn gradcheck(seed: u64, trials: usize) -> Result<bool> {
    let start = Instant::now();
    let entries = crate::gradsuite::gradient_suite(seed, trials);
    let mut ok = true;
    for e in &entries {
        ok &= e.passed();
        println!(
            "{:<18} max_rel_error={:.3e} checked={} skipped_kinks={} trials={} {}",
            e.name,
            e.report.max_rel_error,
            e.report.checked,
            e.report.skipped_kinks,
            e.trials,
            if e.passed() { "ok" } else { "FAIL" }
        );
    }
    println!("elapsed={:.2}s", start.elapsed().as_secs_f64());
    Ok(ok)
}

/// Runs a parsed command; `Ok(false)` is a check that ran and failed.
pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Track {
            seq,
            det,
            out,
            config,
            seed,
            ablation,
            preset,
            threads,
            backbone,
            backend,
            checkpoint,
            gt,
        } => track(TrackArgs {
            seq: &seq,
            det: &det,
            out: &out,
            config: config.as_deref(),
            seed,
            ablation,
            preset,
            threads,
            backbone,
            backend,
            checkpoint: checkpoint.as_deref(),
            gt: gt.as_deref(),
        })
        .map(|_| true),
        Command::Eval { gt, res, iou } => {
            if !(0.0..=1.0).contains(&iou) {
                return Err(Error::Config(format!("--iou {iou} outside [0, 1]")));
            }
            let report = evaluate(&read_ground_truth(&gt)?, &read_results(&res)?, iou)?;
            let name = res.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            print!("{}", report.table(&name));
            print!("{}", report.key_values());
            Ok(true)
        }
        Command::Simulate {
            suite,
            script,
            out,
            seed,
            images,
        } => simulate(suite, script.as_deref(), &out, seed, images).map(|_| true),
        Command::Gradcheck { seed, trials } => gradcheck(seed, trials),
        Command::Overlay { seq, res, out } => {
            let n = crate::overlay::overlay_sequence(&seq, &read_results(&res)?, &out)?;
            println!("{n} frames written to {}", out.display());
            Ok(true)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 on a runtime failure, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: kind=check message=gradient check failed");
            1
        }
        Err(e) => {
            eprintln!("error: kind={} message={}", e.kind(), e.to_string().replace('\n', " "));
            1
        }
    }
}
