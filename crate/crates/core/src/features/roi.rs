use super::{FeatureGeometry, FrameFeatureMap};
use crate::domain::TargetState;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

const EDGE_EPS: f64 = 1e-9;

/// Half-open range of feature-cell indices `[start, end)` covered by bin
/// `i` of `n` bins spanning `[lo, hi)`, clamped to `[0, extent)`.
fn bin_range(lo: f64, hi: f64, i: usize, n: usize, extent: usize) -> (usize, usize) {
    let bw = (hi - lo) / n as f64;
    let a = lo + i as f64 * bw;
    let b = lo + (i + 1) as f64 * bw;
    let mut start = (a + EDGE_EPS).floor();
    let mut end = (b - EDGE_EPS).ceil();
    if end <= start {
        end = start + 1.0;
    }
    start = start.max(0.0);
    end = end.min(extent as f64);
    if end <= start {
        return (0, 0);
    }
    (start as usize, end as usize)
}

/// Max-pools the box into a fixed `W x H x C` tensor.
///
/// The box is split into `W x H` bins in feature-cell coordinates; bins snap
/// outward to whole cells, are clamped to the map, and bins falling fully
/// outside the map pool to zero.
pub fn roi_pool(
    map: &FrameFeatureMap,
    roi: &TargetState,
    geom: &FeatureGeometry,
) -> Result<Tensor3> {
    if map.channels() != geom.channels {
        return Err(Error::Shape(format!(
            "map has {} channels, geometry expects {}",
            map.channels(),
            geom.channels
        )));
    }
    let c = roi.to_corners();
    let s = map.stride();
    let (l, t, r, b) = (c.left / s, c.top / s, c.right / s, c.bottom / s);
    let (fw, fh) = map.extent();
    if r <= 0.0 || b <= 0.0 || l >= fw as f64 || t >= fh as f64 {
        return Err(Error::BoxOutsideFrame);
    }
    let (ox, oy) = map.origin();
    let ch = geom.channels;
    let src = map.cells();
    // clamp a global cell range to the cells held by this map, in local indices
    let local = |(a, b): (usize, usize), o: usize, n: usize| {
        let a = a.max(o).min(o + n);
        let b = b.max(o).min(o + n);
        (a - o, b - o)
    };
    let mut out = Tensor3::zeros(geom.width, geom.height, ch);
    let xbins: Vec<_> = (0..geom.width)
        .map(|i| local(bin_range(l, r, i, geom.width, fw), ox, map.width()))
        .collect();
    for j in 0..geom.height {
        let (y0, y1) = local(bin_range(t, b, j, geom.height, fh), oy, map.height());
        if y0 >= y1 {
            continue;
        }
        for (i, &(x0, x1)) in xbins.iter().enumerate() {
            if x0 >= x1 {
                continue;
            }
            let dst = out.cell_mut(i, j);
            dst.copy_from_slice(src.cell(x0, y0));
            for y in y0..y1 {
                for x in x0..x1 {
                    for (d, &v) in dst.iter_mut().zip(src.cell(x, y)) {
                        if v > *d {
                            *d = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Frame cells `[x0, x1) x [y0, y1)` that pooling `roi` can read, or `None`
/// when the box lies entirely outside the frame grid.
pub fn covering_window(
    roi: &TargetState,
    stride: f64,
    extent: (usize, usize),
) -> Option<CellRect> {
    let c = roi.to_corners();
    let (l, t, r, b) = (c.left / stride, c.top / stride, c.right / stride, c.bottom / stride);
    if r <= 0.0 || b <= 0.0 || l >= extent.0 as f64 || t >= extent.1 as f64 {
        return None;
    }
    // bins snap outward by at most one cell past the box edges
    let lo = |v: f64| ((v + EDGE_EPS).floor().max(0.0)) as usize;
    let hi = |v: f64, n: usize| ((v - EDGE_EPS).ceil() + 1.0).clamp(1.0, n as f64) as usize;
    Some(CellRect::new(
        lo(l).min(extent.0 - 1),
        lo(t).min(extent.1 - 1),
        hi(r, extent.0),
        hi(b, extent.1),
    ))
}

/// Rectangle of pooled cells `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CellRect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        CellRect { x0, y0, x1, y1 }
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

/// Copies `donor` into `feat` inside `region`. The returned mask is the
/// ground-truth visibility: 1 outside the region, 0 inside.
pub fn replace_region(
    feat: &Tensor3,
    donor: &Tensor3,
    region: CellRect,
) -> Result<(Tensor3, Tensor3)> {
    if !feat.same_shape(donor) {
        return Err(Error::Shape(format!(
            "donor {:?} vs feature {:?}",
            donor.dims(),
            feat.dims()
        )));
    }
    let (w, h, _) = feat.dims();
    if region.x1 > w || region.y1 > h || region.x0 > region.x1 || region.y0 > region.y1 {
        return Err(Error::OutOfBounds(format!("{region:?} in a {w}x{h} grid")));
    }
    let mut out = feat.clone();
    let mut mask = Tensor3::filled(w, h, 1, 1.0);
    for y in region.y0..region.y1 {
        for x in region.x0..region.x1 {
            out.cell_mut(x, y).copy_from_slice(donor.cell(x, y));
            mask.set(x, y, 0, 0.0);
        }
    }
    Ok((out, mask))
}
