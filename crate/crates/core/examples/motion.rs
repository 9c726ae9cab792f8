//! The constant-velocity motion model on a target that walks right, is lost
//! for a few frames and reappears: velocity smoothing and the search area
//! growing while untracked, then shrinking once predictions are good again.

use spatiotrack::motion::MotionState;
use spatiotrack::TargetState;

fn main() {
    let start = TargetState { x: 10.0, y: 20.0, w: 12.0, h: 30.0 };
    let mut m = MotionState::new(&start, 1, 9);
    let mut x = start;
    println!("frame  tracked   center          v              sigma_xy");
    for f in 2..=30u32 {
        let truth = TargetState { x: 10.0 + 1.5 * (f - 1) as f64, ..start };
        let predicted = m.predict(&x);
        let tracked = !(12..=16).contains(&f);
        x = if tracked { truth } else { predicted };
        if tracked {
            m.update_velocity(f, x.center(), 0.5);
        }
        m.update_variance(&x, tracked, predicted.center());
        let [cx, cy] = x.center();
        println!(
            "{f:>5}  {:<8}  ({cx:6.2},{cy:5.1})  ({:5.2},{:5.2})  {:6.2}",
            tracked, m.v[0], m.v[1], m.sigma[0]
        );
    }
}
