//! Runs the five component presets over the standard synthetic suite and
//! prints mean MOTA and total identity switches per preset.
//!
//! `cargo run --release --example ablation -- [seed] [sequences] [key=value ...]`
//!
//! Extra `key=value` pairs override the compact config; `presets=p1,p5`
//! restricts the run.

use std::time::Instant;

use spatiotrack::engine::{Ablation, EngineConfig};
use spatiotrack::metrics::{evaluate, frames_from_rows, IOU_MIN};
use spatiotrack::sim::{simulate, standard_suite, track_sequence};

fn main() -> spatiotrack::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let take: usize = args.next().map_or(usize::MAX, |s| s.parse().expect("sequence count"));
    let suite: Vec<_> = standard_suite(seed)
        .iter()
        .take(take)
        .map(simulate)
        .collect::<Result<_, _>>()?;
    let mut presets = Ablation::ALL.to_vec();
    let mut base = EngineConfig::compact();
    for kv in args {
        let (k, v) = kv.split_once('=').expect("key=value");
        if k == "presets" {
            presets = v.split(',').map(|p| p.parse().expect("preset")).collect();
        } else if !base.set(k, v)? {
            panic!("unknown key {k}");
        }
    }
    println!("{} sequences, seed {seed}", suite.len());
    for preset in presets {
        let start = Instant::now();
        let mut motas = Vec::new();
        let (mut ids, mut fp, mut fn_) = (0, 0, 0);
        let mut line = String::new();
        for seq in &suite {
            let cfg = base.clone().with_ablation(preset);
            let (rows, _) = track_sequence(seq, cfg)?;
            let r = evaluate(&seq.gt, &frames_from_rows(&rows), IOU_MIN)?;
            motas.push(r.mota);
            ids += r.ids;
            fp += r.fp;
            fn_ += r.fn_;
            line.push_str(&format!(" {:5.1}/{}", 100.0 * r.mota, r.ids));
        }
        let mean = motas.iter().sum::<f64>() / motas.len() as f64;
        println!(
            "{}: mean MOTA {:.2}%  IDS {ids}  FP {fp}  FN {fn_}  ({:.1} s)\n   {line}",
            preset.name(),
            100.0 * mean,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
