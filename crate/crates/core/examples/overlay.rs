//! Renders a synthetic scene as images, tracks it and draws the tracked
//! boxes, one color per identity, into PNG frames.
//!
//! `cargo run --release --example overlay -- [out_dir]`

use std::path::PathBuf;

use spatiotrack::engine::{Ablation, EngineConfig};
use spatiotrack::metrics::frames_from_rows;
use spatiotrack::overlay::overlay_sequence;
use spatiotrack::sim::{generate_sequence, render_image, standard_suite, track_sequence};

fn main() -> spatiotrack::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("spatiotrack-overlay"), PathBuf::from);
    let script = standard_suite(0).swap_remove(0);
    let dir = out.join(&script.name);
    let seq = generate_sequence(&script, &dir)?;
    let img = dir.join("img1");
    std::fs::create_dir_all(&img).expect("create image dir");
    for f in 1..=script.frames {
        render_image(&script, f, 1)?.save(img.join(format!("{f:06}.png"))).expect("write frame");
    }
    let (rows, _) = track_sequence(&seq, EngineConfig::compact().with_ablation(Ablation::P5))?;
    let mut meta = seq.meta.clone();
    meta.image_dir = Some("img1".into());
    spatiotrack::io::write_seqinfo(&meta, &dir.join("seqinfo.ini"))?;
    let n = overlay_sequence(&dir, &frames_from_rows(&rows), &dir.join("overlay"))?;
    println!("{n} frames with {} boxes written to {}", rows.len(), dir.join("overlay").display());
    Ok(())
}
