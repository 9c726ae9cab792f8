//! Result visualization: boxes drawn over frames, or over a heat map of the
//! feature grid for sequences without images.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::features::{load_image, read_feature_file};
use crate::io::{read_seqinfo, LabeledFrames};
use crate::tensor::Tensor3;

/// Pixels per cell of heat-map renderings.
pub const HEATMAP_SCALE: u32 = 8;

/// A stable, saturated color for an id.
pub fn id_color(id: i64) -> Rgb<u8> {
    let h = (id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 40;
    let hue = (h % 360) as f64 / 60.0;
    let x = 1.0 - (hue % 2.0 - 1.0).abs();
    let (r, g, b) = match hue as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    Rgb([(255.0 * r) as u8, (255.0 * g) as u8, (255.0 * b) as u8])
}

/// Outline of the box `(left, top, right, bottom)` in pixels, clipped.
pub fn draw_box(img: &mut RgbImage, (l, t, r, b): (f64, f64, f64, f64), color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (l, t, r, b) = (l.round() as i64, t.round() as i64, r.round() as i64 - 1, b.round() as i64 - 1);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for x in l..=r {
        put(x, t);
        put(x, b);
    }
    for y in t..=b {
        put(l, y);
        put(r, y);
    }
}

/// Gray-scale image of per-cell feature norms, `scale` pixels per cell.
pub fn heatmap(cells: &Tensor3, scale: u32) -> RgbImage {
    let (w, h, _) = cells.dims();
    let norms: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| cells.cell(x, y).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let hi = norms.iter().copied().fold(0.0, f64::max).max(1e-12);
    RgbImage::from_fn(w as u32 * scale, h as u32 * scale, |px, py| {
        let v = norms[(py / scale) as usize * w + (px / scale) as usize] / hi;
        let g = (255.0 * v) as u8;
        Rgb([g, g, g])
    })
}

/// Writes one PNG per frame of the sequence to `out`; returns the count.
pub fn overlay_sequence(seq: &Path, results: &LabeledFrames, out: &Path) -> Result<usize> {
    let meta = read_seqinfo(&seq.join("seqinfo.ini"))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for f in 1..=meta.frame_count {
        let (mut img, scale) = match (&meta.image_dir, &meta.feature_dir) {
            (Some(d), _) => (load_image(&seq.join(d), f)?, 1.0),
            (None, Some(d)) => {
                let cells = read_feature_file(&seq.join(d).join(format!("{f:06}.fmap")))?;
                let stride = meta.feature_stride.unwrap_or(1.0);
                (heatmap(&cells, HEATMAP_SCALE), f64::from(HEATMAP_SCALE) / stride)
            }
            (None, None) => {
                return Err(Error::Config(format!(
                    "{}: sequence has neither images nor features",
                    seq.display()
                )))
            }
        };
        for b in results.get(&f).into_iter().flatten() {
            let c = b.state.to_corners();
            draw_box(
                &mut img,
                (c.left * scale, c.top * scale, c.right * scale, c.bottom * scale),
                id_color(b.id),
            );
        }
        let p = out.join(format!("{f:06}.png"));
        img.save(&p)?;
    }
    Ok(meta.frame_count as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_outline_is_clipped() {
        let mut img = RgbImage::new(10, 10);
        draw_box(&mut img, (2.0, 2.0, 6.0, 8.0), Rgb([255, 0, 0]));
        assert_eq!(img.get_pixel(2, 2), &Rgb([255, 0, 0]));
        assert_eq!(img.get_pixel(5, 7), &Rgb([255, 0, 0]));
        assert_eq!(img.get_pixel(4, 4), &Rgb([0, 0, 0]));
        draw_box(&mut img, (-5.0, -5.0, 50.0, 50.0), Rgb([0, 255, 0]));
    }

    #[test]
    fn heatmap_scales_cells() {
        let mut t = Tensor3::zeros(2, 1, 2);
        t.set(1, 0, 0, 3.0);
        t.set(1, 0, 1, 4.0);
        let img = heatmap(&t, 4);
        assert_eq!(img.dimensions(), (8, 4));
        assert_eq!(img.get_pixel(0, 0)[0], 0);
        assert_eq!(img.get_pixel(7, 3)[0], 255);
    }
}
