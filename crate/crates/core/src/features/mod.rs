//! Shared per-frame feature maps and ROI pooling.
//!
//! A [`FrameFeatureMap`] is computed once per frame by a [`FeatureBackend`]
//! and every target pools its candidates from it.

mod backend;
mod roi;

pub use backend::{load_image, 
    gradient_histogram, read_feature_file, write_feature_file, FeatureBackend, FrameData,
    ImageSource, FEATURE_MAGIC,
};
pub use roi::{covering_window, replace_region, roi_pool, CellRect};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// A grid of `channels`-dimensional feature vectors covering the frame.
///
/// A map may also be a window onto a larger frame grid: `origin` is the
/// window's top-left cell and `extent` the full frame grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureMap {
    cells: Tensor3,
    /// Pixels per feature cell.
    stride: f64,
    origin: (usize, usize),
    extent: (usize, usize),
}

impl FrameFeatureMap {
    pub fn new(cells: Tensor3, stride: f64) -> Result<Self> {
        let extent = (cells.width(), cells.height());
        Self::window(cells, stride, (0, 0), extent)
    }

    pub fn window(
        cells: Tensor3,
        stride: f64,
        origin: (usize, usize),
        extent: (usize, usize),
    ) -> Result<Self> {
        if !(stride >= 1.0 && stride.is_finite()) {
            return Err(Error::Config(format!("feature stride {stride} must be >= 1")));
        }
        if !cells.is_finite() {
            return Err(Error::Shape("non-finite feature values".into()));
        }
        if origin.0 + cells.width() > extent.0 || origin.1 + cells.height() > extent.1 {
            return Err(Error::OutOfBounds(format!(
                "window at {origin:?} of size {}x{} exceeds {extent:?}",
                cells.width(),
                cells.height()
            )));
        }
        Ok(FrameFeatureMap {
            cells,
            stride,
            origin,
            extent,
        })
    }

    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    /// Size of the full frame grid in cells.
    pub fn extent(&self) -> (usize, usize) {
        self.extent
    }

    pub fn cells(&self) -> &Tensor3 {
        &self.cells
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn width(&self) -> usize {
        self.cells.width()
    }

    pub fn height(&self) -> usize {
        self.cells.height()
    }

    pub fn channels(&self) -> usize {
        self.cells.channels()
    }
}

/// Pooled ROI size `W x H x C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureGeometry {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl FeatureGeometry {
    /// The 3x7 branch kernels need `W >= 7` and `H >= 3`.
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        if width < 7 || height < 3 || channels < 1 {
            return Err(Error::Config(format!(
                "feature geometry {width}x{height}x{channels} needs W >= 7, H >= 3, C >= 1"
            )));
        }
        Ok(FeatureGeometry {
            width,
            height,
            channels,
        })
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn check(&self, t: &Tensor3) -> Result<()> {
        if t.dims() != (self.width, self.height, self.channels) {
            return Err(Error::Shape(format!(
                "expected {}x{}x{} features, got {:?}",
                self.width,
                self.height,
                self.channels,
                t.dims()
            )));
        }
        Ok(())
    }
}

impl Default for FeatureGeometry {
    fn default() -> Self {
        FeatureGeometry {
            width: 9,
            height: 21,
            channels: 64,
        }
    }
}
