use std::io::Cursor;

use crate::{Error, Result};

fn encode_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(Cursor::new(&mut out), width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Io(std::io::Error::other(e)))?;
        w.write_image_data(rgb).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    Ok(out)
}

/// Dark blue through teal to yellow, `t` in `[0, 1]`.
fn ramp(t: f64) -> [u8; 3] {
    let stops = [(0.0, [68.0, 1.0, 84.0]), (0.5, [33.0, 145.0, 140.0]), (1.0, [253.0, 231.0, 37.0])];
    let t = t.clamp(0.0, 1.0);
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let u = (t - a.0) / (b.0 - a.0);
    let mut c = [0u8; 3];
    for k in 0..3 {
        c[k] = (a.1[k] + u * (b.1[k] - a.1[k])).round() as u8;
    }
    c
}

/// Heatmap of `log(1 + v)` with each matrix entry drawn as a
/// `scale × scale` block.
pub fn heatmap_png(values: &[f64], rows: usize, cols: usize, scale: usize) -> Result<Vec<u8>> {
    if values.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!("{} values for a {rows}×{cols} heatmap", values.len())));
    }
    let logv: Vec<f64> = values.iter().map(|v| v.max(0.0).ln_1p()).collect();
    let hi = logv.iter().cloned().fold(0.0, f64::max);
    let (w, h) = (cols * scale, rows * scale);
    let mut rgb = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let v = logv[(y / scale) * cols + x / scale];
            let c = ramp(if hi > 0.0 { v / hi } else { 0.0 });
            rgb[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
        }
    }
    encode_rgb(w, h, &rgb)
}

const PALETTE: [[u8; 3]; 7] = [
    [0, 0, 0],
    [230, 159, 0],
    [86, 180, 233],
    [0, 158, 115],
    [213, 94, 0],
    [204, 121, 167],
    [0, 114, 178],
];

/// Line chart of several equally long series on shared axes. Non-finite
/// points break the line.
pub fn line_chart_png(series: &[Vec<f64>], width: usize, height: usize) -> Result<Vec<u8>> {
    let margin = 20;
    if width <= 2 * margin || height <= 2 * margin {
        return Err(Error::ShapeMismatch("chart too small".into()));
    }
    let mut rgb = vec![255u8; width * height * 3];
    let put = |rgb: &mut [u8], x: i64, y: i64, c: [u8; 3]| {
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            let i = (y as usize * width + x as usize) * 3;
            rgb[i..i + 3].copy_from_slice(&c);
        }
    };
    let (x0, y0) = (margin as i64, (height - margin) as i64);
    let (x1, y1) = ((width - margin) as i64, margin as i64);
    for x in x0..=x1 {
        put(&mut rgb, x, y0, [0, 0, 0]);
    }
    for y in y1..=y0 {
        put(&mut rgb, x0, y, [0, 0, 0]);
    }
    let len = series.iter().map(|s| s.len()).max().unwrap_or(0);
    let hi = series
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .cloned()
        .fold(0.0, f64::max);
    let hi = if hi > 0.0 { hi } else { 1.0 };
    let px = |i: usize| x0 + ((x1 - x0) as f64 * i as f64 / (len.max(2) - 1) as f64).round() as i64;
    let py = |v: f64| y0 - ((y0 - y1) as f64 * v / hi).round() as i64;
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        for i in 1..s.len() {
            if !(s[i - 1].is_finite() && s[i].is_finite()) {
                continue;
            }
            let (ax, ay, bx, by) = (px(i - 1), py(s[i - 1]), px(i), py(s[i]));
            let steps = (bx - ax).abs().max((by - ay).abs()).max(1);
            for t in 0..=steps {
                let x = ax + (bx - ax) * t / steps;
                let y = ay + (by - ay) * t / steps;
                put(&mut rgb, x, y, c);
                put(&mut rgb, x, y + 1, c);
            }
        }
    }
    encode_rgb(width, height, &rgb)
}
