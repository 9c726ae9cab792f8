//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so that every line is printed; exits non-zero if any fails.

use std::collections::HashMap;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spatiotrack::branch::{init_branch, temporal_attention, AttentionMode, Strip, TemporalParams};
use spatiotrack::engine::{
    background_negative, blend_refinement, init_set, Ablation, BackboneMode, Engine, EngineConfig,
};
use spatiotrack::features::{replace_region, roi_pool, FeatureBackend};
use spatiotrack::gradsuite::gradient_suite;
use spatiotrack::io::{LabeledBox, LabeledFrames};
use spatiotrack::metrics::{evaluate, frames_from_rows, IOU_MIN};
use spatiotrack::motion::{blend_velocity, measured_velocity, next_sigma};
use spatiotrack::sim::{
    crowd_scene, render_features, save_script, simulate, standard_suite, target_state, track_rendered,
    track_sequence, visible_fractions,
};
use spatiotrack::{iou, TargetState};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 8] = [
        ("gradient suite", gradient_check),
        ("attention invariants", attention_invariants),
        ("exact arithmetic", exact_arithmetic),
        ("metrics oracle", metrics_oracle),
        ("ablation direction", ablation_direction),
        ("feature-sharing throughput", throughput),
        ("determinism", determinism),
        ("occlusion discrimination", occlusion_discrimination),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("acceptance {tag} {name}: {} [{secs:.1} s]", o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let entries = gradient_suite(1, 100);
    let secs = start.elapsed().as_secs_f64();
    let worst = entries
        .iter()
        .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
        .expect("entries");
    let failing: Vec<&str> = entries.iter().filter(|e| !e.passed()).map(|e| e.name).collect();
    outcome(
        failing.is_empty() && secs < 60.0 && entries.iter().all(|e| e.trials == 100),
        format!(
            "{} entries x 100 inputs, worst {} at {:.2e}, failing {failing:?}, {secs:.1} s (< 60 s)",
            entries.len(),
            worst.name,
            worst.report.max_rel_error
        ),
    )
}

fn attention_invariants() -> Outcome {
    let script = standard_suite(0)
        .into_iter()
        .find(|s| s.frames >= 100)
        .expect("a long scene");
    let seq = simulate(&script).expect("simulate");
    let mut cfg = EngineConfig::compact().with_ablation(Ablation::P5);
    cfg.frame_rate = script.frame_rate;
    let size = (script.width as f64, script.height as f64);
    let backend = FeatureBackend::Synthetic(std::sync::Arc::new(script.clone()));
    let mut engine = Engine::new(cfg, backend, size).expect("engine");
    let (mut maps, mut worst_sum, mut min_value) = (0usize, 0.0f64, f64::INFINITY);
    for f in 1..=script.frames {
        let d = seq.detections.get(&f).cloned().unwrap_or_default();
        engine.step(f, &d).expect("step");
        for t in engine.tracks() {
            if let Some(a) = &t.attention {
                maps += 1;
                let sum: f64 = a.as_slice().iter().sum();
                worst_sum = worst_sum.max((sum - 1.0).abs());
                min_value = a.as_slice().iter().copied().fold(min_value, f64::min);
            }
        }
    }
    outcome(
        maps > 0 && worst_sum <= 1e-6 && min_value >= 0.0,
        format!(
            "{} frames, {maps} maps after updates, max |sum - 1| {worst_sum:.1e}, min entry {min_value:.2e}",
            script.frames
        ),
    )
}

fn exact_arithmetic() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let st = |x, y, w, h| TargetState { x, y, w, h };
    let mut fails = Vec::new();
    // refinement: blend toward the detection when the overlap exceeds o0
    let xhat = st(10.0, 10.0, 20.0, 40.0);
    let xd = st(12.0, 10.0, 20.0, 40.0);
    for (o, want) in [(0.6, [11.2, 10.0, 20.0, 40.0]), (0.5, [10.0, 10.0, 20.0, 40.0]), (0.4, [10.0, 10.0, 20.0, 40.0])] {
        let got = blend_refinement(&xhat, &xd, o, 0.5).as_array();
        if !got.iter().zip(want).all(|(a, b)| close(*a, b)) {
            fails.push(format!("refinement o={o}: {got:?}"));
        }
    }
    // temporal attention with the default weights
    let p = TemporalParams::default();
    let e = std::f64::consts::E;
    for (s, o, want) in [(0.5, 0.5, 0.5), (1.0, 0.0, 1.0 / (1.0 + e)), (0.0, 1.0, e / (1.0 + e))] {
        let got = temporal_attention(&p, s, o).alpha;
        if !close(got, want) {
            fails.push(format!("temporal s={s} o={o}: {got}"));
        }
    }
    // velocity: measured over a gap of 9 frames, blended with the previous one
    let measured = measured_velocity([18.0, 0.0], [0.0, 0.0], 9);
    if !(close(measured[0], 2.0) && close(measured[1], 0.0)) {
        fails.push(format!("measured velocity {measured:?}"));
    }
    let prev = [0.5, -1.0];
    for (alpha, want) in [(0.0, [2.0, 0.0]), (0.5, [1.25, -0.5]), (1.0, [0.5, -1.0])] {
        let got = blend_velocity(prev, measured, alpha);
        if !(close(got[0], want[0]) && close(got[1], want[1])) {
            fails.push(format!("velocity alpha={alpha}: {got:?}"));
        }
    }
    // search-area variance, all four cases
    for (sigma, r, h, untracked, want) in [
        (10.0, 0.0, 60.0, true, 10.5),
        (10.0, 0.9, 60.0, false, 12.0),
        (10.0, 0.1, 60.0, false, 5.0),
        (10.0, 0.5, 60.0, false, 10.0),
    ] {
        let got = next_sigma(sigma, r, h, untracked);
        if !close(got, want) {
            fails.push(format!("variance r={r} untracked={untracked}: {got}"));
        }
    }
    outcome(fails.is_empty(), format!("13 hand-derived cases at 1e-12, mismatches {fails:?}"))
}

/// Full CLEAR MOT bookkeeping with every per-frame assignment enumerated.
fn brute_force(gt: &LabeledFrames, hyp: &LabeledFrames, thr: f64) -> (usize, usize, usize, f64) {
    fn best(
        gi: &[usize],
        hj: &[usize],
        w: &dyn Fn(usize, usize) -> f64,
        k: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        total: f64,
        out: &mut (f64, Vec<(usize, usize)>),
    ) {
        if k == gi.len() {
            if total > out.0 {
                *out = (total, cur.clone());
            }
            return;
        }
        best(gi, hj, w, k + 1, used, cur, total, out);
        for (m, &j) in hj.iter().enumerate() {
            let o = w(gi[k], j);
            if !used[m] && o >= 0.0 {
                used[m] = true;
                cur.push((gi[k], j));
                best(gi, hj, w, k + 1, used, cur, total + o, out);
                cur.pop();
                used[m] = false;
            }
        }
    }
    let frames: std::collections::BTreeSet<u32> = gt.keys().chain(hyp.keys()).copied().collect();
    let empty = Vec::new();
    let (mut fp, mut fn_, mut ids, mut n_gt) = (0, 0, 0, 0);
    let mut previous: HashMap<i64, i64> = HashMap::new();
    let mut last: HashMap<i64, i64> = HashMap::new();
    for f in frames {
        let g: &Vec<LabeledBox> = gt.get(&f).unwrap_or(&empty);
        let h: &Vec<LabeledBox> = hyp.get(&f).unwrap_or(&empty);
        let mut pairs = Vec::new();
        let (mut gu, mut hu) = (vec![false; g.len()], vec![false; h.len()]);
        for (i, b) in g.iter().enumerate() {
            if let Some(&hid) = previous.get(&b.id) {
                if let Some(j) = h.iter().position(|x| x.id == hid) {
                    if iou(&b.state, &h[j].state) >= thr {
                        gu[i] = true;
                        hu[j] = true;
                        pairs.push((i, j));
                    }
                }
            }
        }
        let gi: Vec<usize> = (0..g.len()).filter(|&i| !gu[i]).collect();
        let hj: Vec<usize> = (0..h.len()).filter(|&j| !hu[j]).collect();
        let w = |i: usize, j: usize| {
            let o = iou(&g[i].state, &h[j].state);
            if o >= thr { o } else { -1.0 }
        };
        let mut out = (0.0, Vec::new());
        best(&gi, &hj, &w, 0, &mut vec![false; hj.len()], &mut Vec::new(), 0.0, &mut out);
        pairs.extend(out.1);
        let mut now = HashMap::new();
        for &(i, j) in &pairs {
            if last.get(&g[i].id).is_some_and(|&p| p != h[j].id) {
                ids += 1;
            }
            last.insert(g[i].id, h[j].id);
            now.insert(g[i].id, h[j].id);
        }
        previous = now;
        fp += h.len() - pairs.len();
        fn_ += g.len() - pairs.len();
        n_gt += g.len();
    }
    let mota = 1.0 - (fn_ + fp + ids) as f64 / n_gt as f64;
    (fp, fn_, ids, mota)
}

fn scenario(seed: u64) -> (LabeledFrames, LabeledFrames) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = rng.random_range(1..=3usize);
    let frames = rng.random_range(1..=5u32);
    let mut gt = LabeledFrames::new();
    let mut hyp = LabeledFrames::new();
    let mut pos: Vec<[f64; 2]> = (0..targets).map(|_| [rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)]).collect();
    for f in 1..=frames {
        let mut g = Vec::new();
        let mut h: Vec<LabeledBox> = Vec::new();
        let mut free: Vec<i64> = (1..=5).collect();
        for (k, p) in pos.iter_mut().enumerate() {
            p[0] += rng.random_range(-4.0..4.0);
            p[1] += rng.random_range(-4.0..4.0);
            let state = TargetState { x: p[0], y: p[1], w: 10.0, h: 20.0 };
            if rng.random_bool(0.9) {
                g.push(LabeledBox { id: k as i64 + 1, state, score: 1.0 });
            }
            if rng.random_bool(0.8) {
                let id = free.remove(rng.random_range(0..free.len()));
                let j = |rng: &mut ChaCha8Rng| rng.random_range(-3.0..3.0);
                let s = TargetState { x: state.x + j(&mut rng), y: state.y + j(&mut rng), w: 10.0 + j(&mut rng), h: 20.0 + j(&mut rng) };
                h.push(LabeledBox { id, state: s, score: 1.0 });
            }
        }
        if rng.random_bool(0.3) {
            let id = free.remove(rng.random_range(0..free.len()));
            let state = TargetState { x: rng.random_range(0.0..30.0), y: rng.random_range(0.0..30.0), w: 10.0, h: 20.0 };
            h.push(LabeledBox { id, state, score: 1.0 });
        }
        if !g.is_empty() {
            gt.insert(f, g);
        }
        if !h.is_empty() {
            hyp.insert(f, h);
        }
    }
    if gt.is_empty() {
        gt.insert(1, vec![LabeledBox { id: 1, state: TargetState { x: 0.0, y: 0.0, w: 10.0, h: 20.0 }, score: 1.0 }]);
    }
    (gt, hyp)
}

fn metrics_oracle() -> Outcome {
    let cases = 200;
    let mut mismatches = Vec::new();
    let (mut with_ids, mut with_fp) = (0, 0);
    for seed in 0..cases {
        let (gt, hyp) = scenario(seed);
        let r = evaluate(&gt, &hyp, IOU_MIN).expect("evaluate");
        let (fp, fn_, ids, mota) = brute_force(&gt, &hyp, IOU_MIN);
        with_ids += usize::from(ids > 0);
        with_fp += usize::from(fp > 0);
        if (r.fp, r.fn_, r.ids) != (fp, fn_, ids) || r.mota != mota {
            mismatches.push(seed);
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{cases} seeded cases (<= 3 targets, <= 5 frames; {with_ids} with switches, {with_fp} with FP), mismatching seeds {mismatches:?}"),
    )
}

fn ablation_direction() -> Outcome {
    let start = Instant::now();
    let suite: Vec<_> = standard_suite(0).iter().map(|s| simulate(s).expect("simulate")).collect();
    let mut mota = Vec::new();
    let mut ids = Vec::new();
    for preset in Ablation::ALL {
        let (mut sum, mut n_ids) = (0.0, 0);
        for seq in &suite {
            let (rows, _) = track_sequence(seq, EngineConfig::compact().with_ablation(preset)).expect("track");
            let r = evaluate(&seq.gt, &frames_from_rows(&rows), IOU_MIN).expect("evaluate");
            sum += r.mota;
            n_ids += r.ids;
        }
        mota.push(sum / suite.len() as f64);
        ids.push(n_ids);
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = mota[0] < mota[1]
        && mota[1] < mota[4]
        && mota[2] > mota[1]
        && mota[3] > mota[1]
        && (ids[4] as f64) <= 0.7 * ids[0] as f64
        && secs < 900.0;
    let table: Vec<String> = (0..5).map(|k| format!("p{} {:.2}%/{}", k + 1, 100.0 * mota[k], ids[k])).collect();
    outcome(
        ok,
        format!(
            "{} sequences, mean MOTA/IDS {}, IDS reduction p5 vs p1 {:.0}% (>= 30%), {secs:.0} s (< 900 s)",
            suite.len(),
            table.join(", "),
            100.0 * (1.0 - ids[4] as f64 / ids[0].max(1) as f64)
        ),
    )
}

fn throughput() -> Outcome {
    let frames = 100;
    let seq = simulate(&crowd_scene(0, 10, frames)).expect("simulate");
    let mut secs = Vec::new();
    let mut outputs = Vec::new();
    for mode in [BackboneMode::Shared, BackboneMode::Recompute] {
        let mut cfg = EngineConfig::compact().with_ablation(Ablation::P5);
        cfg.backbone = mode;
        let start = Instant::now();
        let (rows, _) = track_rendered(&seq, cfg, 8).expect("track");
        secs.push(start.elapsed().as_secs_f64());
        outputs.push(rows);
    }
    let ratio = secs[1] / secs[0];
    outcome(
        ratio >= 3.0,
        format!(
            "10 targets, {frames} frames: shared {:.1} s, recompute {:.1} s, ratio {ratio:.2} (>= 3), same output {}",
            secs[0],
            secs[1],
            outputs[0] == outputs[1]
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let script = dir.path().join("scene.toml");
    let scene = &standard_suite(3)[0];
    save_script(scene, &script).expect("script");
    let out_dir = dir.path().join("seq");
    let seq = out_dir.join(&scene.name);
    let bin = env!("CARGO_BIN_EXE_spatiotrack");
    let run = |args: &[&std::ffi::OsStr]| Command::new(bin).args(args).output().expect("run binary");
    let sim = run(&["simulate".as_ref(), "--script".as_ref(), script.as_os_str(), "--out".as_ref(), out_dir.as_os_str()]);
    if !sim.status.success() {
        return outcome(false, format!("simulate failed: {}", String::from_utf8_lossy(&sim.stderr)));
    }
    let mut files = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("res{k}.txt"));
        let det = seq.join("det").join("det.txt");
        let r = run(&[
            "track".as_ref(),
            "--seq".as_ref(),
            seq.as_os_str(),
            "--det".as_ref(),
            det.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
            "--preset".as_ref(),
            "compact".as_ref(),
            "--ablation".as_ref(),
            "p5".as_ref(),
            "--seed".as_ref(),
            "7".as_ref(),
        ]);
        if !r.status.success() {
            return outcome(false, format!("track failed: {}", String::from_utf8_lossy(&r.stderr)));
        }
        files.push(std::fs::read(&out).expect("result file"));
    }
    outcome(
        files[0] == files[1] && !files[0].is_empty(),
        format!("two `track` runs with seed 7: {} and {} bytes, identical {}", files[0].len(), files[1].len(), files[0] == files[1]),
    )
}

fn occlusion_discrimination() -> Outcome {
    let cfg = EngineConfig::compact();
    let g = cfg.geometry;
    let (mut rep, mut n_rep, mut int, mut n_int) = (0.0, 0usize, 0.0, 0usize);
    let mut inits = 0;
    for (k, script) in standard_suite(0).iter().enumerate().take(20) {
        // the first frame in which target 0 is fully visible
        let Some(frame) = (1..=script.frames)
            .find(|&f| target_state(&script.targets[0], f).is_some() && visible_fractions(script, f)[0] >= 1.0)
        else {
            continue;
        };
        let map = render_features(script, frame).expect("features");
        let x0 = target_state(&script.targets[0], frame).expect("present");
        let others: Vec<_> = script.targets[1..]
            .iter()
            .filter_map(|t| target_state(t, frame))
            .filter_map(|s| roi_pool(&map, &s, &g).ok())
            .collect();
        let size = (script.width as f64, script.height as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let set = init_set(&x0, &others, |b| roi_pool(&map, b, &g), &cfg, size, &mut rng).expect("init set");
        let branch = init_branch(&set, &cfg.train_config(), AttentionMode::Spatial, true, &mut rng).expect("init");
        inits += 1;
        // held-out donors: fresh background crops and the other targets
        let mut test_rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
        let mut donors = others.clone();
        while donors.len() < 4 {
            if let Some(b) = background_negative(&x0, cfg.neg_iou, size, &mut test_rng) {
                if let Ok(p) = roi_pool(&map, &b, &g) {
                    donors.push(p);
                }
            }
        }
        for (s, strip) in Strip::ALL.into_iter().enumerate() {
            let region = strip.region(g.width, g.height, 0.35);
            let (feat, mask) = replace_region(&set.pristine, &donors[s % donors.len()], region).expect("replace");
            let v = branch.visibility(&feat).expect("visibility");
            for (val, m) in v.as_slice().iter().zip(mask.as_slice()) {
                if *m == 0.0 {
                    rep += val;
                    n_rep += 1;
                } else {
                    int += val;
                    n_int += 1;
                }
            }
        }
    }
    let (rep, int) = (rep / n_rep as f64, int / n_int as f64);
    outcome(
        inits == 20 && rep < 0.3 && int > 0.8,
        format!("{inits} initializations, held-out replacements: replaced cells {rep:.3} (< 0.3), intact cells {int:.3} (> 0.8)"),
    )
}
