//! Generates one synthetic sequence on disk in MOTChallenge layout, tracks
//! it from the files with the full component set and scores the result.
//!
//! `cargo run --release --example pipeline -- [out_dir] [suite_index]`

use std::path::PathBuf;

use spatiotrack::engine::{run_sequence, Ablation, Engine, EngineConfig};
use spatiotrack::features::FeatureBackend;
use spatiotrack::io::{read_detections, read_ground_truth, read_seqinfo, write_results};
use spatiotrack::metrics::{evaluate, frames_from_rows, IOU_MIN};
use spatiotrack::sim::{generate_sequence, standard_suite};

fn main() -> spatiotrack::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("spatiotrack-pipeline"), PathBuf::from);
    let index: usize = args.next().map_or(0, |s| s.parse().expect("suite index"));
    let script = standard_suite(0).swap_remove(index);
    let dir = out.join(&script.name);
    generate_sequence(&script, &dir)?;

    let meta = read_seqinfo(&dir.join("seqinfo.ini"))?;
    let dets = read_detections(&dir.join("det").join("det.txt"))?;
    let gt = read_ground_truth(&dir.join("gt").join("gt.txt"))?;
    println!("{}: {} frames of {}x{}, {} detection frames", meta.name, meta.frame_count, meta.width, meta.height, dets.len());

    let mut cfg = EngineConfig::compact().with_ablation(Ablation::P5);
    cfg.frame_rate = meta.frame_rate;
    let backend = FeatureBackend::Precomputed {
        dir: dir.join(meta.feature_dir.as_deref().unwrap_or("features")),
        stride: meta.feature_stride.unwrap_or(1.0),
        channels: cfg.geometry.channels,
    };
    let mut engine = Engine::new(cfg, backend, (meta.width as f64, meta.height as f64))?;
    let rows = run_sequence(&mut engine, meta.frame_count, &dets)?;
    let res = dir.join("res.txt");
    write_results(&rows, &res)?;
    let stats = engine.stats();
    println!("{} rows -> {}; births {}, discarded {}, terminated {}", rows.len(), res.display(), stats.births, stats.discarded, stats.terminated);

    let report = evaluate(&gt, &frames_from_rows(&rows), IOU_MIN)?;
    print!("{}", report.table(&meta.name));
    Ok(())
}
