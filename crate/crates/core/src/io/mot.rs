//! MOTChallenge CSV files: detections, ground truth and results.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::domain::{Detection, TargetState};
use crate::error::{Error, Result};

/// Detections keyed by 1-based frame index.
pub type DetectionStream = BTreeMap<u32, Vec<Detection>>;

/// One labelled box in a ground-truth or result file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub id: i64,
    pub state: TargetState,
    pub score: f64,
}

/// Labelled boxes keyed by frame.
pub type LabeledFrames = BTreeMap<u32, Vec<LabeledBox>>;

/// One row of a result file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub frame: u32,
    pub id: u64,
    pub state: TargetState,
    pub score: f64,
}

struct Row {
    line: usize,
    frame: u32,
    id: i64,
    state: TargetState,
    conf: f64,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses CSV rows; `columns` is the accepted column-count range.
fn parse_rows(path: &Path, columns: std::ops::RangeInclusive<usize>) -> Result<Vec<Row>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim_end_matches('\r').trim();
        if l.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if !columns.contains(&fields.len()) {
            return Err(err(format!(
                "expected {} to {} columns, found {}",
                columns.start(),
                columns.end(),
                fields.len()
            )));
        }
        let mut nums = Vec::with_capacity(7);
        for (k, f) in fields.iter().take(7).enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| err(format!("column {}: `{f}` is not a number", k + 1)))?;
            if !v.is_finite() {
                return Err(err(format!("column {}: non-finite value", k + 1)));
            }
            nums.push(v);
        }
        if nums[0] < 1.0 || nums[0].fract() != 0.0 || nums[0] > u32::MAX as f64 {
            return Err(err(format!("bad frame index `{}`", fields[0])));
        }
        if nums[1].fract() != 0.0 {
            return Err(err(format!("bad id `{}`", fields[1])));
        }
        let state = TargetState::from_top_left(nums[2], nums[3], nums[4], nums[5])
            .map_err(|e| err(e.to_string()))?;
        rows.push(Row {
            line,
            frame: nums[0] as u32,
            id: nums[1] as i64,
            state,
            conf: nums.get(6).copied().unwrap_or(1.0),
        });
    }
    Ok(rows)
}

/// Min-max normalization to `[0, 1]`. A constant list maps to all ones.
pub fn normalize_scores(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        raw.iter().map(|&s| (s - lo) / (hi - lo)).collect()
    } else {
        vec![1.0; raw.len()]
    }
}

/// Reads a 10-column detection file. Scores are min-max normalized over the
/// whole file.
pub fn read_detections(path: &Path) -> Result<DetectionStream> {
    let rows = parse_rows(path, 10..=10)?;
    let raw: Vec<f64> = rows.iter().map(|r| r.conf).collect();
    let mut out = DetectionStream::new();
    for (r, s) in rows.iter().zip(normalize_scores(&raw)) {
        out.entry(r.frame)
            .or_default()
            .push(Detection::new(r.state, s.clamp(0.0, 1.0))?);
    }
    Ok(out)
}

/// Min-max normalizes the scores of an in-memory stream, as
/// [`read_detections`] does for files.
pub fn normalize_stream(raw: &BTreeMap<u32, Vec<Detection>>) -> Result<DetectionStream> {
    let scores: Vec<f64> = raw.values().flatten().map(|d| d.score).collect();
    let mut norm = normalize_scores(&scores).into_iter();
    raw.iter()
        .map(|(&f, dets)| {
            let v = dets
                .iter()
                .map(|d| Detection::new(d.state, norm.next().expect("one score per detection").clamp(0.0, 1.0)))
                .collect::<Result<Vec<_>>>()?;
            Ok((f, v))
        })
        .collect()
}

fn labeled(path: &Path, rows: Vec<Row>) -> Result<LabeledFrames> {
    let mut seen = HashSet::new();
    let mut out = LabeledFrames::new();
    for r in rows {
        if !seen.insert((r.frame, r.id)) {
            log::debug!("{}:{}: duplicate", path.display(), r.line);
            return Err(Error::Duplicate {
                frame: r.frame,
                id: r.id,
            });
        }
        out.entry(r.frame).or_default().push(LabeledBox {
            id: r.id,
            state: r.state,
            score: r.conf,
        });
    }
    Ok(out)
}

/// Reads a ground-truth file (6 to 10 columns). Rows whose confidence
/// column is 0 are marked as ignored by the benchmark and are skipped.
pub fn read_ground_truth(path: &Path) -> Result<LabeledFrames> {
    let rows = parse_rows(path, 6..=10)?
        .into_iter()
        .filter(|r| r.conf != 0.0)
        .collect();
    labeled(path, rows)
}

/// Reads a result file (6 to 10 columns).
pub fn read_results(path: &Path) -> Result<LabeledFrames> {
    let rows = parse_rows(path, 6..=10)?;
    labeled(path, rows)
}

fn push_row(s: &mut String, frame: u32, id: i64, state: &TargetState, score: f64) {
    let (l, t) = state.top_left();
    // avoid printing "-0.00"
    let f = |v: f64| {
        let r = (v * 100.0).round() / 100.0;
        if r == 0.0 {
            0.0
        } else {
            r
        }
    };
    let _ = writeln!(
        s,
        "{frame},{id},{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
        f(l),
        f(t),
        f(state.w),
        f(state.h),
        f(score)
    );
}

/// Formats result rows frame-major, then by ascending id.
pub fn format_results(rows: &[ResultRow]) -> Result<String> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut s = String::new();
    for (i, r) in sorted.iter().enumerate() {
        if i > 0 && sorted[i - 1].frame == r.frame && sorted[i - 1].id == r.id {
            return Err(Error::Duplicate {
                frame: r.frame,
                id: r.id as i64,
            });
        }
        push_row(&mut s, r.frame, r.id as i64, &r.state, r.score);
    }
    Ok(s)
}

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let s = format_results(rows)?;
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes detections with id `-1` and their raw scores.
pub fn write_detections(dets: &BTreeMap<u32, Vec<Detection>>, path: &Path) -> Result<()> {
    let mut s = String::new();
    for (&frame, ds) in dets {
        for d in ds {
            push_row(&mut s, frame, -1, &d.state, d.score);
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes ground truth with confidence 1.
pub fn write_ground_truth(gt: &LabeledFrames, path: &Path) -> Result<()> {
    let mut s = String::new();
    for (&frame, boxes) in gt {
        let mut boxes: Vec<&LabeledBox> = boxes.iter().collect();
        boxes.sort_by_key(|b| b.id);
        for b in boxes {
            push_row(&mut s, frame, b.id, &b.state, 1.0);
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
