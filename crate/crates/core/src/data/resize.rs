use crate::datamodel::RawImage;
use crate::error::{Error, Result};

/// Bilinear resampling of a square raster to `target x target`, using
/// half-pixel centres (`src = (dst + 0.5) * scale - 0.5`, clamped at edges).
pub fn resize_image(raw: &RawImage, target: usize) -> Result<RawImage> {
    if !raw.is_square() {
        return Err(Error::Image(format!(
            "cannot resize non-square {}x{} image",
            raw.height, raw.width
        )));
    }
    if target == 0 || raw.height == 0 {
        return Err(Error::Image("resize needs positive sizes".into()));
    }
    let src = raw.height;
    if src == target {
        return Ok(raw.clone());
    }
    let scale = src as f64 / target as f64;
    // Per-axis sample positions and weights are shared by rows and columns.
    let taps: Vec<(usize, usize, f64)> = (0..target)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect();

    let mut data = Vec::with_capacity(raw.channels * target * target);
    for c in 0..raw.channels {
        let plane = &raw.data[c * src * src..(c + 1) * src * src];
        for &(y0, y1, wy) in &taps {
            for &(x0, x1, wx) in &taps {
                let p = |y: usize, x: usize| f64::from(plane[y * src + x]);
                let top = p(y0, x0) * (1.0 - wx) + p(y0, x1) * wx;
                let bottom = p(y1, x0) * (1.0 - wx) + p(y1, x1) * wx;
                data.push((top * (1.0 - wy) + bottom * wy) as f32);
            }
        }
    }
    RawImage::new(raw.channels, target, target, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let data: Vec<f32> = (0..3 * 64 * 64).map(|i| (i % 256) as f32).collect();
        let raw = RawImage::new(3, 64, 64, data).unwrap();
        assert_eq!(resize_image(&raw, 64).unwrap(), raw);
    }

    #[test]
    fn constants_preserved() {
        let raw = RawImage::new(3, 37, 37, vec![200.0; 3 * 37 * 37]).unwrap();
        for target in [5, 16, 64] {
            let out = resize_image(&raw, target).unwrap();
            assert!(out.data.iter().all(|&v| (v - 200.0).abs() < 1e-4));
        }
    }

    #[test]
    fn halving_averages_blocks() {
        // 4x4 gradient; with half-pixel centres each output samples exactly
        // between two source pixels on both axes, i.e. the 2x2 block mean.
        let grad: Vec<f32> = (0..16).map(|i| (i * 10) as f32).collect();
        let mut data = grad.clone();
        data.extend(grad.iter().map(|v| v + 1.0));
        data.extend(grad.iter().map(|v| v + 2.0));
        let raw = RawImage::new(3, 4, 4, data).unwrap();
        let out = resize_image(&raw, 2).unwrap();
        let block = |by: usize, bx: usize| {
            let mut s = 0.0;
            for y in 0..2 {
                for x in 0..2 {
                    s += grad[(2 * by + y) * 4 + 2 * bx + x];
                }
            }
            s / 4.0
        };
        for c in 0..3 {
            for by in 0..2 {
                for bx in 0..2 {
                    let got = out.data[c * 4 + by * 2 + bx];
                    assert!((got - (block(by, bx) + c as f32)).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn range_preserved_when_downsampling() {
        let data: Vec<f32> = (0..3 * 50 * 50).map(|i| ((i * 37) % 256) as f32).collect();
        let raw = RawImage::new(3, 50, 50, data).unwrap();
        let out = resize_image(&raw, 8).unwrap();
        assert!(out.data.iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn non_square_rejected() {
        let raw = RawImage::new(3, 4, 5, vec![0.0; 60]).unwrap();
        assert!(resize_image(&raw, 2).is_err());
    }
}
