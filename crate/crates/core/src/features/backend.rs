use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{CellRect, FrameFeatureMap};
use crate::error::{Error, Result};
use crate::sim::{self, SceneScript};
use crate::tensor::Tensor3;

/// `b"FMAP"` read as a little-endian `u32`.
pub const FEATURE_MAGIC: u32 = u32::from_le_bytes(*b"FMAP");

/// Where raw frames come from for image-based backends.
#[derive(Debug, Clone)]
pub enum ImageSource {
    /// `DIR/000001.png`, `DIR/000001.jpg`, ...
    Directory(PathBuf),
    /// Frames drawn on the fly from a scene, `scale` pixels per scene unit.
    Rendered { script: Arc<SceneScript>, scale: usize },
}

/// Produces the shared per-frame feature map.
#[derive(Debug, Clone)]
pub enum FeatureBackend {
    /// Renders target signatures straight into cells (stride 1).
    Synthetic(Arc<SceneScript>),
    /// Magnitude-weighted orientation histograms of luminance gradients.
    GradientHistogram {
        images: ImageSource,
        stride: usize,
        channels: usize,
    },
    /// One `%06d.fmap` tensor file per frame.
    Precomputed {
        dir: PathBuf,
        stride: f64,
        channels: usize,
    },
}

/// A loaded frame, ready for feature computation.
#[derive(Debug, Clone)]
pub enum FrameData {
    Map(FrameFeatureMap),
    Luma(Luma),
}

/// Grayscale frame with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Luma {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Luma {
    pub fn from_rgb(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let values = img
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
            })
            .collect();
        Luma {
            width: w as usize,
            height: h as usize,
            values,
        }
    }

    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.values[y * self.width + x]
    }
}

impl FeatureBackend {
    pub fn channels(&self) -> usize {
        match self {
            FeatureBackend::Synthetic(s) => s.channels,
            FeatureBackend::GradientHistogram { channels, .. }
            | FeatureBackend::Precomputed { channels, .. } => *channels,
        }
    }

    pub fn stride(&self) -> f64 {
        match self {
            FeatureBackend::Synthetic(_) => 1.0,
            FeatureBackend::GradientHistogram { stride, .. } => *stride as f64,
            FeatureBackend::Precomputed { stride, .. } => *stride,
        }
    }

    /// Reads or renders frame `frame` (1-based).
    pub fn load(&self, frame: u32) -> Result<FrameData> {
        match self {
            FeatureBackend::Synthetic(script) => {
                Ok(FrameData::Map(sim::render_features(script, frame)?))
            }
            FeatureBackend::GradientHistogram { images, .. } => {
                let img = match images {
                    ImageSource::Directory(dir) => load_image(dir, frame)?,
                    ImageSource::Rendered { script, scale } => {
                        sim::render_image(script, frame, *scale)?
                    }
                };
                Ok(FrameData::Luma(Luma::from_rgb(&img)))
            }
            FeatureBackend::Precomputed {
                dir,
                stride,
                channels,
            } => {
                let path = dir.join(format!("{frame:06}.fmap"));
                let t = read_feature_file(&path)?;
                if t.channels() != *channels {
                    return Err(Error::Shape(format!(
                        "{}: {} channels, configured {}",
                        path.display(),
                        t.channels(),
                        channels
                    )));
                }
                Ok(FrameData::Map(FrameFeatureMap::new(t, *stride)?))
            }
        }
    }

    /// Feature map of the whole frame.
    pub fn compute(&self, data: &FrameData) -> Result<FrameFeatureMap> {
        match data {
            FrameData::Map(m) => Ok(m.clone()),
            FrameData::Luma(l) => {
                let (stride, bins) = self.histogram_params()?;
                gradient_histogram(l, stride, bins)
            }
        }
    }

    /// Cells `window` of the frame grid only, as a window map.
    pub fn compute_window(&self, data: &FrameData, window: CellRect) -> Result<FrameFeatureMap> {
        match data {
            FrameData::Map(m) => crop(m, window),
            FrameData::Luma(l) => {
                let (stride, bins) = self.histogram_params()?;
                let extent = grid_size(l, stride);
                let cells = histogram_cells(l, stride, bins, window)?;
                FrameFeatureMap::window(cells, stride as f64, (window.x0, window.y0), extent)
            }
        }
    }

    /// Size of the frame grid in cells.
    pub fn extent(&self, data: &FrameData) -> Result<(usize, usize)> {
        match data {
            FrameData::Map(m) => Ok(m.extent()),
            FrameData::Luma(l) => Ok(grid_size(l, self.histogram_params()?.0)),
        }
    }

    fn histogram_params(&self) -> Result<(usize, usize)> {
        match self {
            FeatureBackend::GradientHistogram {
                stride, channels, ..
            } => Ok((*stride, *channels)),
            _ => Err(Error::Config("image frame given to a map backend".into())),
        }
    }
}

/// Frame `frame` of an image directory, trying `.png`, `.jpg` and `.jpeg`.
pub fn load_image(dir: &Path, frame: u32) -> Result<image::RgbImage> {
    for ext in ["png", "jpg", "jpeg"] {
        let p = dir.join(format!("{frame:06}.{ext}"));
        if p.exists() {
            return Ok(image::open(&p)?.to_rgb8());
        }
    }
    let p = dir.join(format!("{frame:06}.png"));
    Err(Error::io(
        p,
        std::io::Error::new(std::io::ErrorKind::NotFound, "frame image not found"),
    ))
}

fn crop(m: &FrameFeatureMap, w: CellRect) -> Result<FrameFeatureMap> {
    let (ox, oy) = m.origin();
    if w.is_empty() || w.x0 < ox || w.y0 < oy || w.x1 > ox + m.width() || w.y1 > oy + m.height()
    {
        return Err(Error::OutOfBounds(format!("crop {w:?} of a map at {:?}", m.origin())));
    }
    let mut cells = Tensor3::zeros(w.x1 - w.x0, w.y1 - w.y0, m.channels());
    for y in w.y0..w.y1 {
        for x in w.x0..w.x1 {
            cells
                .cell_mut(x - w.x0, y - w.y0)
                .copy_from_slice(m.cells().cell(x - ox, y - oy));
        }
    }
    FrameFeatureMap::window(cells, m.stride(), (w.x0, w.y0), m.extent())
}

fn grid_size(l: &Luma, stride: usize) -> (usize, usize) {
    (l.width.div_ceil(stride), l.height.div_ceil(stride))
}

/// Orientation histogram features over the whole frame.
///
/// Each `stride x stride` cell accumulates gradient magnitude into `bins`
/// unsigned-orientation bins (linear interpolation between the two nearest
/// bin centers), then is L2-normalized. Border cells covering fewer pixels
/// only sum the pixels they have.
pub fn gradient_histogram(l: &Luma, stride: usize, bins: usize) -> Result<FrameFeatureMap> {
    let (gw, gh) = grid_size(l, stride);
    let cells = histogram_cells(l, stride, bins, CellRect::new(0, 0, gw, gh))?;
    FrameFeatureMap::new(cells, stride as f64)
}

fn histogram_cells(l: &Luma, stride: usize, bins: usize, w: CellRect) -> Result<Tensor3> {
    if stride == 0 || bins == 0 {
        return Err(Error::Config("histogram stride and bins must be >= 1".into()));
    }
    let (gw, gh) = grid_size(l, stride);
    if w.is_empty() || w.x1 > gw || w.y1 > gh {
        return Err(Error::OutOfBounds(format!("window {w:?} of a {gw}x{gh} grid")));
    }
    let mut out = Tensor3::zeros(w.x1 - w.x0, w.y1 - w.y0, bins);
    let px1 = (w.x1 * stride).min(l.width);
    let py1 = (w.y1 * stride).min(l.height);
    let scale = bins as f64 / std::f64::consts::PI;
    for py in w.y0 * stride..py1 {
        for px in w.x0 * stride..px1 {
            let (x, y) = (px as isize, py as isize);
            let gx = l.at(x + 1, y) - l.at(x - 1, y);
            let gy = l.at(x, y + 1) - l.at(x, y - 1);
            let m = gx.hypot(gy);
            if m == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += std::f64::consts::PI;
            }
            let pos = theta * scale - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as isize).rem_euclid(bins as isize) as usize;
            let b1 = (b0 + 1) % bins;
            let cell = out.cell_mut(px / stride - w.x0, py / stride - w.y0);
            cell[b0] += m * (1.0 - frac);
            cell[b1] += m * frac;
        }
    }
    for y in 0..out.height() {
        for x in 0..out.width() {
            let c = out.cell_mut(x, y);
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                let inv = 1.0 / (norm + 1e-3);
                c.iter_mut().for_each(|v| *v *= inv);
            }
        }
    }
    Ok(out)
}

/// Writes a tensor as `magic, width, height, channels` (little-endian `u32`)
/// followed by `f32` values in `(y, x, c)` order.
pub fn write_feature_file(path: &Path, t: &Tensor3) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let (tw, th, tc) = t.dims();
    let mut buf = Vec::with_capacity(16 + 4 * t.len());
    for v in [FEATURE_MAGIC, tw as u32, th as u32, tc as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in t.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<Tensor3> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 16 {
        return Err(bad(format!("{} bytes is too short for a header", bytes.len())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    if word(0) != FEATURE_MAGIC {
        return Err(bad(format!("bad magic {:#010x}", word(0))));
    }
    let (w, h, c) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    if bytes.len() != 16 + 4 * n {
        return Err(bad(format!(
            "{w}x{h}x{c} needs {} payload bytes, found {}",
            4 * n,
            bytes.len() - 16
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    Tensor3::from_vec(w, h, c, data).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::roi_pool;
    use crate::features::FeatureGeometry;
    use crate::domain::TargetState;

    fn luma(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Luma {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Luma {
            width,
            height,
            values,
        }
    }

    #[test]
    fn uniform_frame_has_no_gradients() {
        let l = luma(37, 22, |_, _| 0.4);
        let m = gradient_histogram(&l, 4, 8).unwrap();
        assert_eq!((m.width(), m.height(), m.channels()), (10, 6, 8));
        assert!(m.cells().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_lands_in_horizontal_gradient_bin() {
        // intensity steps along x, so the gradient points along x (theta = 0)
        let l = luma(16, 16, |x, _| if x < 8 { 0.0 } else { 1.0 });
        let m = gradient_histogram(&l, 4, 4).unwrap();
        let c = m.cells().cell(1, 1);
        // theta = 0 sits between the first and last bin centers
        assert!(c[0] > 0.0 && (c[0] - c[3]).abs() < 1e-12 && c[1] == 0.0 && c[2] == 0.0);
        assert!(m.cells().cell(0, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn histogram_is_deterministic_and_windows_agree() {
        let l = luma(50, 41, |x, y| ((x * 7 + y * 13) % 17) as f64 / 17.0);
        let a = gradient_histogram(&l, 4, 6).unwrap();
        let b = gradient_histogram(&l, 4, 6).unwrap();
        assert_eq!(a, b);
        let w = CellRect::new(3, 2, 9, 11);
        let win = histogram_cells(&l, 4, 6, w).unwrap();
        for y in w.y0..w.y1 {
            for x in w.x0..w.x1 {
                assert_eq!(win.cell(x - w.x0, y - w.y0), a.cells().cell(x, y));
            }
        }
    }

    #[test]
    fn window_maps_pool_like_full_maps() {
        let l = luma(64, 48, |x, y| ((x * x + 3 * y) % 11) as f64 / 11.0);
        let backend = FeatureBackend::GradientHistogram {
            images: ImageSource::Directory(PathBuf::new()),
            stride: 4,
            channels: 8,
        };
        let data = FrameData::Luma(l);
        let full = backend.compute(&data).unwrap();
        let g = FeatureGeometry::new(7, 5, 8).unwrap();
        let roi = TargetState::new(30.3, 20.7, 17.0, 23.5).unwrap();
        let w = crate::features::covering_window(&roi, 4.0, full.extent()).unwrap();
        let win = backend.compute_window(&data, w).unwrap();
        assert_eq!(roi_pool(&win, &roi, &g).unwrap(), roi_pool(&full, &roi, &g).unwrap());
    }

    #[test]
    fn tensor_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("000001.fmap");
        let data: Vec<f64> = (0..7 * 3 * 2).map(|i| i as f64 * 0.25 - 3.0).collect();
        let t = Tensor3::from_vec(7, 3, 2, data).unwrap();
        write_feature_file(&p, &t).unwrap();
        assert_eq!(read_feature_file(&p).unwrap(), t);

        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_feature_file(&p), Err(Error::Format { .. })));
        bytes[0] ^= 0xff;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_feature_file(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn precomputed_backend_checks_channels() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor3::filled(10, 10, 3, 0.5);
        write_feature_file(&dir.path().join("000001.fmap"), &t).unwrap();
        let ok = FeatureBackend::Precomputed {
            dir: dir.path().into(),
            stride: 1.0,
            channels: 3,
        };
        let data = ok.load(1).unwrap();
        assert_eq!(ok.compute(&data).unwrap().cells(), &t);
        assert!(matches!(ok.load(2), Err(Error::Io { .. })));
        let wrong = FeatureBackend::Precomputed {
            dir: dir.path().into(),
            stride: 1.0,
            channels: 4,
        };
        assert!(matches!(wrong.load(1), Err(Error::Shape(_))));
    }
}
