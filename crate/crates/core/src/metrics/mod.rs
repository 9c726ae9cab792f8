//! CLEAR MOT accuracy and precision with trajectory-level MT, ML and Frag.

mod hungarian;

pub use hungarian::max_weight_assignment;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use crate::domain::iou;
use crate::error::{Error, Result};
use crate::io::{LabeledBox, LabeledFrames};

/// Default match threshold.
pub const IOU_MIN: f64 = 0.5;
/// Coverage bounds for mostly tracked and mostly lost, inclusive.
pub const MT_COVERAGE: f64 = 0.8;
pub const ML_COVERAGE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport {
    pub mota: f64,
    /// Mean IoU over matches; 0 without matches.
    pub motp: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub frag: usize,
    /// Mostly tracked and mostly lost trajectories.
    pub mt: usize,
    pub ml: usize,
    pub gt_tracks: usize,
    pub gt_boxes: usize,
    pub matches: usize,
    /// Sum of IoU over matches.
    pub iou_sum: f64,
}

impl TrackReport {
    fn finish(fp: usize, fn_: usize, ids: usize, frag: usize, mt: usize, ml: usize, gt_tracks: usize, gt_boxes: usize, matches: usize, iou_sum: f64) -> Self {
        let mota = if gt_boxes == 0 {
            if fp + ids == 0 { 1.0 } else { f64::NEG_INFINITY }
        } else {
            1.0 - (fn_ + fp + ids) as f64 / gt_boxes as f64
        };
        TrackReport {
            mota,
            motp: if matches == 0 { 0.0 } else { iou_sum / matches as f64 },
            fp,
            fn_,
            ids,
            frag,
            mt,
            ml,
            gt_tracks,
            gt_boxes,
            matches,
            iou_sum,
        }
    }

    /// Mostly tracked share in percent.
    pub fn mt_percent(&self) -> f64 {
        percent(self.mt, self.gt_tracks)
    }

    pub fn ml_percent(&self) -> f64 {
        percent(self.ml, self.gt_tracks)
    }

    /// Aggregate over sequences: counts are summed and the ratios recomputed.
    pub fn combine(reports: &[TrackReport]) -> TrackReport {
        let sum = |f: fn(&TrackReport) -> usize| reports.iter().map(f).sum::<usize>();
        TrackReport::finish(
            sum(|r| r.fp),
            sum(|r| r.fn_),
            sum(|r| r.ids),
            sum(|r| r.frag),
            sum(|r| r.mt),
            sum(|r| r.ml),
            sum(|r| r.gt_tracks),
            sum(|r| r.gt_boxes),
            sum(|r| r.matches),
            reports.iter().map(|r| r.iou_sum).sum(),
        )
    }

    /// One `KEY=value` pair per line.
    pub fn key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "MOTA={:.3}", self.mota);
        let _ = writeln!(s, "MOTP={:.3}", self.motp);
        let _ = writeln!(s, "FP={}", self.fp);
        let _ = writeln!(s, "FN={}", self.fn_);
        let _ = writeln!(s, "IDS={}", self.ids);
        let _ = writeln!(s, "Frag={}", self.frag);
        let _ = writeln!(s, "MT={:.1}", self.mt_percent());
        let _ = writeln!(s, "ML={:.1}", self.ml_percent());
        let _ = writeln!(s, "GT={}", self.gt_boxes);
        let _ = writeln!(s, "GT_TRACKS={}", self.gt_tracks);
        s
    }

    /// A header line and one row.
    pub fn table(&self, name: &str) -> String {
        format!(
            "{:<16} {:>7} {:>6} {:>6} {:>6} {:>5} {:>5} {:>6} {:>6}\n{:<16} {:>7.1} {:>6.1} {:>6} {:>6} {:>5} {:>5} {:>5.1}% {:>5.1}%\n",
            "sequence", "MOTA%", "MOTP%", "FP", "FN", "IDS", "Frag", "MT", "ML",
            name,
            100.0 * self.mota,
            100.0 * self.motp,
            self.fp,
            self.fn_,
            self.ids,
            self.frag,
            self.mt_percent(),
            self.ml_percent(),
        )
    }
}

fn percent(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

fn check_unique(frames: &LabeledFrames) -> Result<()> {
    for (&frame, boxes) in frames {
        let mut seen = HashSet::new();
        for b in boxes {
            if !seen.insert(b.id) {
                return Err(Error::Duplicate { frame, id: b.id });
            }
        }
    }
    Ok(())
}

/// Matches of one frame as `(gt index, hyp index)` pairs.
pub type FrameMatches = Vec<(usize, usize)>;

/// Per-frame correspondence: pairs still overlapping from the previous
/// frame are kept (lower gt id first); the rest are assigned to maximize
/// total IoU among pairs reaching `iou_min`.
pub fn match_frame(
    gt: &[LabeledBox],
    hyp: &[LabeledBox],
    previous: &HashMap<i64, i64>,
    iou_min: f64,
) -> FrameMatches {
    let mut pairs = Vec::new();
    let mut gt_used = vec![false; gt.len()];
    let mut hyp_used = vec![false; hyp.len()];
    let mut order: Vec<usize> = (0..gt.len()).collect();
    order.sort_by_key(|&i| gt[i].id);
    for i in order {
        let Some(&h) = previous.get(&gt[i].id) else {
            continue;
        };
        if let Some(j) = hyp.iter().position(|b| b.id == h) {
            if !hyp_used[j] && iou(&gt[i].state, &hyp[j].state) >= iou_min {
                gt_used[i] = true;
                hyp_used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    let gi: Vec<usize> = (0..gt.len()).filter(|&i| !gt_used[i]).collect();
    let hj: Vec<usize> = (0..hyp.len()).filter(|&j| !hyp_used[j]).collect();
    if !gi.is_empty() && !hj.is_empty() {
        let w: Vec<Vec<f64>> = gi
            .iter()
            .map(|&i| {
                hj.iter()
                    .map(|&j| {
                        let o = iou(&gt[i].state, &hyp[j].state);
                        if o >= iou_min { o } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        for (r, c) in max_weight_assignment(&w).into_iter().enumerate() {
            if let Some(c) = c {
                if w[r][c] > 0.0 {
                    pairs.push((gi[r], hj[c]));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Accumulates counts over frames given a per-frame matcher, so that the
/// brute-force oracle in the tests shares the bookkeeping.
pub fn evaluate_with<M>(gt: &LabeledFrames, hyp: &LabeledFrames, iou_min: f64, mut matcher: M) -> Result<TrackReport>
where
    M: FnMut(&[LabeledBox], &[LabeledBox], &HashMap<i64, i64>, f64) -> FrameMatches,
{
    check_unique(gt)?;
    check_unique(hyp)?;
    let frames: BTreeSet<u32> = gt.keys().chain(hyp.keys()).copied().collect();
    let empty = Vec::new();
    let (mut fp, mut fn_, mut ids, mut matches, mut iou_sum, mut gt_boxes) = (0, 0, 0, 0, 0.0, 0);
    let mut previous: HashMap<i64, i64> = HashMap::new();
    let mut last_hyp: HashMap<i64, i64> = HashMap::new();
    // per gt id: (frames present, frames matched, fragments, currently matched)
    let mut traj: BTreeMap<i64, (usize, usize, usize, Option<bool>)> = BTreeMap::new();
    for f in frames {
        let g = gt.get(&f).unwrap_or(&empty);
        let h = hyp.get(&f).unwrap_or(&empty);
        let pairs = matcher(g, h, &previous, iou_min);
        let mut current = HashMap::new();
        let mut matched_gt = HashSet::new();
        for &(i, j) in &pairs {
            let (gid, hid) = (g[i].id, h[j].id);
            if last_hyp.get(&gid).is_some_and(|&p| p != hid) {
                ids += 1;
            }
            last_hyp.insert(gid, hid);
            current.insert(gid, hid);
            matched_gt.insert(i);
            iou_sum += iou(&g[i].state, &h[j].state);
        }
        matches += pairs.len();
        fp += h.len() - pairs.len();
        fn_ += g.len() - pairs.len();
        gt_boxes += g.len();
        for (i, b) in g.iter().enumerate() {
            let e = traj.entry(b.id).or_insert((0, 0, 0, None));
            let now = matched_gt.contains(&i);
            e.0 += 1;
            if now {
                e.1 += 1;
                if e.3 == Some(false) {
                    e.2 += 1;
                }
                e.3 = Some(true);
            } else if e.3 == Some(true) {
                e.3 = Some(false);
            }
        }
        previous = current;
    }
    let mut mt = 0;
    let mut ml = 0;
    let mut frag = 0;
    for &(present, covered, fragments, _) in traj.values() {
        let c = covered as f64 / present as f64;
        if c >= MT_COVERAGE {
            mt += 1;
        }
        if c <= ML_COVERAGE {
            ml += 1;
        }
        frag += fragments;
    }
    Ok(TrackReport::finish(fp, fn_, ids, frag, mt, ml, traj.len(), gt_boxes, matches, iou_sum))
}

/// CLEAR MOT evaluation of `hyp` against `gt`.
pub fn evaluate(gt: &LabeledFrames, hyp: &LabeledFrames, iou_min: f64) -> Result<TrackReport> {
    evaluate_with(gt, hyp, iou_min, match_frame)
}

/// Converts result rows into labelled frames for evaluation.
pub fn frames_from_rows(rows: &[crate::io::ResultRow]) -> LabeledFrames {
    let mut out = LabeledFrames::new();
    for r in rows {
        out.entry(r.frame).or_default().push(LabeledBox {
            id: r.id as i64,
            state: r.state,
            score: r.score,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TargetState;

    fn b(id: i64, x: f64) -> LabeledBox {
        LabeledBox {
            id,
            state: TargetState::new(x, 50.0, 10.0, 20.0).unwrap(),
            score: 1.0,
        }
    }

    fn two_tracks() -> LabeledFrames {
        (1..=3).map(|f| (f, vec![b(1, 10.0), b(2, 40.0)])).collect()
    }

    #[test]
    fn perfect_and_empty() {
        let gt = two_tracks();
        let r = evaluate(&gt, &gt, IOU_MIN).unwrap();
        assert_eq!((r.mota, r.motp, r.fp, r.fn_, r.ids, r.frag), (1.0, 1.0, 0, 0, 0, 0));
        assert_eq!(r.mt_percent(), 100.0);
        let r = evaluate(&gt, &LabeledFrames::new(), IOU_MIN).unwrap();
        assert_eq!((r.mota, r.fn_, r.mt, r.ml), (0.0, 6, 0, 2));
        assert_eq!(r.ml_percent(), 100.0);
    }

    #[test]
    fn swap_counts_two_switches() {
        let gt = two_tracks();
        let mut hyp = two_tracks();
        // ids swap from frame 2 on
        for f in 2..=3 {
            hyp.insert(f, vec![b(2, 10.0), b(1, 40.0)]);
        }
        let r = evaluate(&gt, &hyp, IOU_MIN).unwrap();
        assert_eq!(r.ids, 2);
        assert!((r.mota - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fragmentation_and_coverage() {
        let gt: LabeledFrames = (1..=10).map(|f| (f, vec![b(1, 10.0)])).collect();
        let hyp: LabeledFrames = (1..=10)
            .filter(|f| !(4..=5).contains(f))
            .map(|f| (f, vec![b(7, 10.0)]))
            .collect();
        let r = evaluate(&gt, &hyp, IOU_MIN).unwrap();
        assert_eq!((r.frag, r.fn_, r.ids, r.mt), (1, 2, 0, 1));
    }

    #[test]
    fn duplicates_rejected() {
        let mut gt = two_tracks();
        gt.get_mut(&1).unwrap().push(b(1, 70.0));
        assert!(matches!(evaluate(&gt, &two_tracks(), 0.5), Err(Error::Duplicate { frame: 1, id: 1 })));
    }

    #[test]
    fn carry_over_beats_better_overlap() {
        // hyp 5 tracks gt 1; at frame 2 hyp 6 fits gt 1 better but 5 still
        // overlaps enough, so no switch
        let gt: LabeledFrames = (1..=2).map(|f| (f, vec![b(1, 10.0)])).collect();
        let mut hyp = LabeledFrames::new();
        hyp.insert(1, vec![b(5, 10.0)]);
        hyp.insert(2, vec![b(5, 12.0), b(6, 10.0)]);
        let r = evaluate(&gt, &hyp, IOU_MIN).unwrap();
        assert_eq!((r.ids, r.fp), (0, 1));
    }

    #[test]
    fn relabeling_is_invisible() {
        let gt = two_tracks();
        let mut hyp = two_tracks();
        hyp.insert(2, vec![b(2, 10.0), b(1, 40.0)]);
        let relabeled: LabeledFrames = hyp
            .iter()
            .map(|(&f, v)| (f, v.iter().map(|x| LabeledBox { id: 100 - x.id, ..*x }).collect()))
            .collect();
        assert_eq!(evaluate(&gt, &hyp, 0.5).unwrap(), evaluate(&gt, &relabeled, 0.5).unwrap());
    }
}
