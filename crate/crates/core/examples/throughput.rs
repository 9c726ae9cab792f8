//! Times the tracker on a ten-target scene with one shared feature map per
//! frame against recomputing features for every candidate window.
//!
//! `cargo run --release --example throughput -- [frames] [scale]`

use std::time::Instant;

use spatiotrack::engine::{Ablation, BackboneMode, EngineConfig};
use spatiotrack::sim::{crowd_scene, simulate, track_rendered};

fn main() -> spatiotrack::Result<()> {
    let frames: u32 = std::env::args().nth(1).map_or(100, |s| s.parse().expect("frame count"));
    let scale: usize = std::env::args().nth(2).map_or(4, |s| s.parse().expect("scale"));
    let seq = simulate(&crowd_scene(0, 10, frames))?;
    let mut times = Vec::new();
    for mode in [BackboneMode::Shared, BackboneMode::Recompute] {
        let mut cfg = EngineConfig::compact().with_ablation(Ablation::P5);
        cfg.backbone = mode;
        let start = Instant::now();
        let (rows, stats) = track_rendered(&seq, cfg, scale)?;
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{mode:?}: {secs:.1} s, {:.2} frames/s, {} backbone calls, {} rows",
            frames as f64 / secs,
            stats.backbone_calls,
            rows.len()
        );
        times.push(secs);
    }
    println!("speedup {:.2}x", times[1] / times[0]);
    Ok(())
}
