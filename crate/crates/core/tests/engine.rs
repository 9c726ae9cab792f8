use std::collections::BTreeSet;
use std::sync::Arc;

use spatiotrack::engine::{run_sequence, Ablation, AblationFlags, BackboneMode, Engine, EngineConfig};
use spatiotrack::features::FeatureBackend;
use spatiotrack::io::ResultRow;
use spatiotrack::metrics::{evaluate, frames_from_rows, IOU_MIN};
use spatiotrack::sim::{simulate, standard_suite, track_sequence, SceneScript, Sequence, Waypoint};

fn lone_walker() -> SceneScript {
    let mut s = standard_suite(0).swap_remove(0);
    s.name = "lone".into();
    s.frames = 50;
    s.fp_rate = 0.0;
    s.miss_rate = 0.0;
    s.targets.truncate(1);
    let t = &mut s.targets[0];
    t.waypoints = vec![Waypoint { frame: 1, x: 20.0, y: 32.0 }, Waypoint { frame: 50, x: 70.0, y: 30.0 }];
    s
}

fn run(seq: &Sequence, cfg: EngineConfig) -> (Vec<ResultRow>, u64) {
    let backend = FeatureBackend::Synthetic(Arc::new(seq.script.clone()));
    let mut e = Engine::new(cfg, backend, (seq.script.width as f64, seq.script.height as f64)).unwrap();
    let rows = run_sequence(&mut e, seq.script.frames, &seq.detections).unwrap();
    (rows, e.stats().backbone_calls)
}

#[test]
fn single_target_keeps_one_identity() {
    let seq = simulate(&lone_walker()).unwrap();
    let (rows, stats) = track_sequence(&seq, EngineConfig::compact().with_ablation(Ablation::P5)).unwrap();
    let ids: BTreeSet<u64> = rows.iter().map(|r| r.id).collect();
    assert_eq!(ids.len(), 1, "ids {ids:?}");
    assert_eq!(stats.births, 1);
    let r = evaluate(&seq.gt, &frames_from_rows(&rows), IOU_MIN).unwrap();
    assert_eq!(r.ids, 0);
    assert!(r.mota > 0.9, "mota {}", r.mota);
}

#[test]
fn ids_unique_per_frame_and_never_reused() {
    let seq = simulate(&standard_suite(2)[1]).unwrap();
    let backend = FeatureBackend::Synthetic(Arc::new(seq.script.clone()));
    let cfg = EngineConfig::compact().with_ablation(Ablation::P5);
    let mut e = Engine::new(cfg, backend, (seq.script.width as f64, seq.script.height as f64)).unwrap();
    let mut gone: BTreeSet<u64> = BTreeSet::new();
    let mut live: BTreeSet<u64> = BTreeSet::new();
    for f in 1..=seq.script.frames {
        let d = seq.detections.get(&f).map(Vec::as_slice).unwrap_or(&[]);
        let rows = e.step(f, d).unwrap();
        let ids: Vec<u64> = rows.iter().filter(|r| r.frame == f).map(|r| r.id).collect();
        let unique: BTreeSet<u64> = ids.iter().copied().collect();
        assert_eq!(unique.len(), ids.len(), "duplicate id in frame {f}");
        let now: BTreeSet<u64> = e.tracks().iter().filter(|t| t.status.is_active()).map(|t| t.id.0).collect();
        assert!(now.is_disjoint(&gone), "frame {f}: removed id came back");
        assert!(rows.iter().all(|r| !gone.contains(&r.id)));
        gone.extend(live.difference(&now));
        live = now;
    }
    assert!(!gone.is_empty() || !live.is_empty());
}

#[test]
fn shared_backbone_runs_once_per_frame() {
    let seq = simulate(&lone_walker()).unwrap();
    let (_, calls) = run(&seq, EngineConfig::compact().with_ablation(Ablation::P5));
    assert_eq!(calls, u64::from(seq.script.frames));
    let mut cfg = EngineConfig::compact().with_ablation(Ablation::P5);
    cfg.backbone = BackboneMode::Recompute;
    let (_, recompute) = run(&seq, cfg);
    assert!(recompute > calls);
}

#[test]
fn thread_count_does_not_change_results() {
    let seq = simulate(&standard_suite(1)[0]).unwrap();
    let base = EngineConfig::compact().with_ablation(Ablation::P5);
    let (one, _) = run(&seq, base.clone());
    let mut cfg = base;
    cfg.threads = 3;
    let (three, _) = run(&seq, cfg);
    assert_eq!(one, three);
}

#[test]
fn flags_off_is_the_baseline_preset() {
    let seq = simulate(&lone_walker()).unwrap();
    let p1 = EngineConfig::compact().with_ablation(Ablation::P1);
    let mut off = EngineConfig::compact();
    off.flags = AblationFlags { motion: false, spatial_attention: false, temporal_attention: false };
    assert_eq!(run(&seq, p1).0, run(&seq, off).0);
}

#[test]
fn same_seed_same_rows() {
    let seq = simulate(&standard_suite(4)[2]).unwrap();
    let cfg = EngineConfig::compact().with_ablation(Ablation::P3);
    assert_eq!(run(&seq, cfg.clone()).0, run(&seq, cfg).0);
}
