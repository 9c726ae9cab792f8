//! CLEAR MOT scoring of a tiny hand-made case: two people, a tracker that
//! swaps their identities halfway and emits one stray box.

use spatiotrack::io::{LabeledBox, LabeledFrames};
use spatiotrack::metrics::{evaluate, IOU_MIN};
use spatiotrack::TargetState;

fn person(id: i64, x: f64) -> LabeledBox {
    LabeledBox { id, state: TargetState { x, y: 10.0, w: 10.0, h: 24.0 }, score: 1.0 }
}

fn main() -> spatiotrack::Result<()> {
    let mut gt = LabeledFrames::new();
    let mut hyp = LabeledFrames::new();
    for f in 1..=6u32 {
        let (a, b) = (5.0 + 2.0 * f as f64, 60.0 - 2.0 * f as f64);
        gt.insert(f, vec![person(1, a), person(2, b)]);
        // ids 7 and 8 trade places from frame 4 on
        let (ha, hb) = if f < 4 { (7, 8) } else { (8, 7) };
        let mut boxes = vec![person(ha, a + 1.0), person(hb, b - 1.0)];
        if f == 5 {
            boxes.push(person(9, 90.0));
        }
        hyp.insert(f, boxes);
    }
    let r = evaluate(&gt, &hyp, IOU_MIN)?;
    print!("{}", r.table("swap"));
    print!("{}", r.key_values());
    Ok(())
}
