//! Branch initialization with feature replacement, then the visibility map
//! and spatial attention of the same target while another one walks in
//! front of it.
//!
//! `cargo run --release --example occlusion -- [suite_index]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spatiotrack::branch::{init_branch, AttentionMode, Strip};
use spatiotrack::engine::{init_set, EngineConfig};
use spatiotrack::features::{replace_region, roi_pool};
use spatiotrack::sim::{render_features, standard_suite, target_state, visible_fractions};
use spatiotrack::tensor::Tensor3;

fn show(title: &str, m: &Tensor3) {
    println!("{title}");
    let (w, h, _) = m.dims();
    for y in 0..h {
        let row: Vec<String> = (0..w).map(|x| format!("{:4.2}", m.get(x, y, 0))).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> spatiotrack::Result<()> {
    let index: usize = std::env::args().nth(1).map_or(0, |s| s.parse().expect("suite index"));
    let script = standard_suite(0).swap_remove(index);
    let cfg = EngineConfig::compact();
    let g = cfg.geometry;
    let size = (script.width as f64, script.height as f64);
    let visible = |f: u32| visible_fractions(&script, f)[1];
    // target 1 is the farther one of the crossing pair
    let first = (1..=script.frames)
        .find(|&f| target_state(&script.targets[1], f).is_some() && visible(f) >= 1.0)
        .expect("target visible at some point");
    let map = render_features(&script, first)?;
    let x0 = target_state(&script.targets[1], first).expect("present");
    let others: Vec<Tensor3> = [0usize]
        .iter()
        .filter_map(|&i| target_state(&script.targets[i], first))
        .filter_map(|s| roi_pool(&map, &s, &g).ok())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let set = init_set(&x0, &others, |b| roi_pool(&map, b, &g), &cfg, size, &mut rng)?;
    let branch = init_branch(&set, &cfg.train_config(), AttentionMode::Spatial, true, &mut rng)?;
    println!("initialized at frame {first}, score on own features {:.3}", branch.score(&set.pristine, AttentionMode::Spatial)?);
    show("visibility, intact:", &branch.visibility(&set.pristine)?);
    let region = Strip::Left.region(g.width, g.height, 0.4);
    let (feat, _) = replace_region(&set.pristine, &set.donors[0], region)?;
    show("visibility, left 40% replaced:", &branch.visibility(&feat)?);

    // a frame where about half of the target is hidden
    let half = (first..=script.frames)
        .filter(|&f| target_state(&script.targets[1], f).is_some())
        .min_by(|&a, &b| (visible(a) - 0.5).abs().total_cmp(&(visible(b) - 0.5).abs()))
        .expect("frames");
    let map = render_features(&script, half)?;
    let x = target_state(&script.targets[1], half).expect("present");
    let phi = roi_pool(&map, &x, &g)?;
    let v = branch.visibility(&phi)?;
    println!("\nframe {half}: {:.0}% of the target visible, mean visibility {:.2}", 100.0 * visible(half), v.mean());
    show("visibility:", &v);
    show("spatial attention:", &branch.spatial_attention(&v)?);
    println!(
        "score with attention {:.3}, uniform {:.3}",
        branch.score(&phi, AttentionMode::Spatial)?,
        branch.score(&phi, AttentionMode::Uniform)?
    );
    Ok(())
}
