//! Central finite-difference check of every layer and branch sub-network.
//!
//! `cargo run --release --example gradcheck -- [seed] [trials]`

use spatiotrack::gradsuite::{gradient_suite, TOLERANCE};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let trials: usize = args.next().map_or(20, |s| s.parse().expect("trials"));
    let mut ok = true;
    for e in gradient_suite(seed, trials) {
        ok &= e.passed();
        println!(
            "{:<18} {:>4} inputs  {:>7} coordinates  max rel error {:.2e}",
            e.name, e.trials, e.report.checked, e.report.max_rel_error
        );
    }
    println!("{} (tolerance {TOLERANCE:e})", if ok { "all passed" } else { "FAILED" });
}
