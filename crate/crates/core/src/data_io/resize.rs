use super::Image;
use crate::error::{ensure, Result};

/// Bilinear resize with pixel-centre alignment; channels are interpolated
/// independently and source coordinates are clamped at the borders.
pub fn resize(image: &Image, height: usize, width: usize) -> Result<Image> {
    ensure!(height >= 1 && width >= 1, "target size must be non-empty, got {height}x{width}");
    if image.height() == height && image.width() == width {
        return Ok(image.clone());
    }
    let c = image.channels();
    let sy = image.height() as f64 / height as f64;
    let sx = image.width() as f64 / width as f64;
    let axis = |dst: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut data = Vec::with_capacity(height * width * c);
    for y in 0..height {
        let (y0, y1, fy) = axis(y, sy, image.height());
        for x in 0..width {
            let (x0, x1, fx) = axis(x, sx, image.width());
            let (p00, p01) = (image.pixel(y0, x0), image.pixel(y0, x1));
            let (p10, p11) = (image.pixel(y1, x0), image.pixel(y1, x1));
            for ch in 0..c {
                let top = p00[ch] * (1.0 - fx) + p01[ch] * fx;
                let bottom = p10[ch] * (1.0 - fx) + p11[ch] * fx;
                data.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(height, width, c, data)
}
