//! Binary PPM export of vision frames.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Result};

/// Encodes an HWC frame with red, green, blue and distance channels as a
/// P6 image: colour on the left, distance as grey on the right, each pixel
/// repeated `zoom` times in both directions.
pub fn encode(frame: &[f64], size: usize, zoom: usize) -> Result<Vec<u8>> {
    ensure!(frame.len() == size * size * 4, "frame has {} values, expected {}", frame.len(), size * size * 4);
    let zoom = zoom.max(1);
    let (w, h) = (2 * size * zoom, size * zoom);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let byte = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    for y in 0..h {
        let row = y / zoom;
        for x in 0..w {
            let col = (x / zoom) % size;
            let px = &frame[(row * size + col) * 4..][..4];
            if x < size * zoom {
                out.extend([byte(px[0]), byte(px[1]), byte(px[2])]);
            } else {
                out.extend([byte(px[3]); 3]);
            }
        }
    }
    Ok(out)
}

pub fn save(path: &Path, frame: &[f64], size: usize, zoom: usize) -> Result<()> {
    fs::write(path, encode(frame, size, zoom)?)?;
    Ok(())
}
