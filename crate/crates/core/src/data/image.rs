//! Image codecs and resampling.
//!
//! Images are `H×W×C` tensors with values in `[0, 1]`. PPM (binary `P6`,
//! 8-bit) is read and written natively; PNG is decoded through the `image`
//! crate.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

fn image_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Decodes a binary PPM (`P6`) with maxval at most 255.
pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        fields.push(&bytes[start..pos]);
    }
    if fields[0] != b"P6" {
        return Err("not a binary PPM (P6)".into());
    }
    let parse = |f: &[u8], what: &str| -> std::result::Result<usize, String> {
        std::str::from_utf8(f)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {what}"))
    };
    let width = parse(fields[1], "width")?;
    let height = parse(fields[2], "height")?;
    let maxval = parse(fields[3], "maxval")?;
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height * 3;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| "truncated raster".to_string())?;
    let maxval = maxval as f64;
    let data = raster.iter().map(|&b| (b as f64 / maxval).min(1.0)).collect();
    Tensor::new(vec![height, width, 3], data).map_err(|e| e.to_string())
}

/// Encodes an `H×W×3` image as binary PPM with maxval 255.
pub fn encode_ppm(img: &Tensor) -> Result<Vec<u8>> {
    let shape = img.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::Shape {
            expected: vec![shape.first().copied().unwrap_or(0), shape.get(1).copied().unwrap_or(0), 3],
            actual: shape.to_vec(),
        });
    }
    let mut out = format!("P6\n{} {}\n255\n", shape[1], shape[0]).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

/// Maps `[0, 1]` to the nearest 8-bit level.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ppm(path: &Path, img: &Tensor) -> Result<()> {
    fs::write(path, encode_ppm(img)?)?;
    Ok(())
}

/// Reads a PPM or PNG file into an `H×W×3` tensor.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| image_err(path, e.to_string()))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => {
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                .map_err(|e| image_err(path, e.to_string()))?
                .to_rgb8();
            let (w, h) = img.dimensions();
            let data = img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
            Tensor::new(vec![h as usize, w as usize, 3], data)
        }
        _ => decode_ppm(&bytes).map_err(|m| image_err(path, m)),
    }
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (in_h, in_w, c) = dims(img);
    if in_h == out_h && in_w == out_w {
        return img.clone();
    }
    let src = img.data();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    let sy = in_h as f64 / out_h as f64;
    let sx = in_w as f64 / out_w as f64;
    for y in 0..out_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = fy - y0 as f64;
        for x in 0..out_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let at = |yy: usize, xx: usize| src[(yy * in_w + xx) * c + ch];
                let top = at(y0, x0) * (1.0 - wx) + at(y0, x1) * wx;
                let bottom = at(y1, x0) * (1.0 - wx) + at(y1, x1) * wx;
                out.push(top * (1.0 - wy) + bottom * wy);
            }
        }
    }
    Tensor::new(vec![out_h, out_w, c], out).expect("sizes agree")
}

/// Mirrors an image left-to-right.
pub fn flip_horizontal(img: &Tensor) -> Tensor {
    let (h, w, c) = dims(img);
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in (0..w).rev() {
            let p = (y * w + x) * c;
            out.extend_from_slice(&src[p..p + c]);
        }
    }
    Tensor::new(vec![h, w, c], out).expect("sizes agree")
}

/// Copies the `rows × cols` window starting at `(top, left)`.
pub fn crop(img: &Tensor, top: usize, left: usize, rows: usize, cols: usize) -> Tensor {
    let (h, w, c) = dims(img);
    assert!(top + rows <= h && left + cols <= w, "crop window out of bounds");
    let src = img.data();
    let mut out = Vec::with_capacity(rows * cols * c);
    for y in top..top + rows {
        let start = (y * w + left) * c;
        out.extend_from_slice(&src[start..start + cols * c]);
    }
    Tensor::new(vec![rows, cols, c], out).expect("sizes agree")
}

/// `(height, width, channels)` of an image tensor.
pub fn dims(img: &Tensor) -> (usize, usize, usize) {
    match *img.shape() {
        [h, w, c] => (h, w, c),
        _ => panic!("image tensors are H×W×C, got {:?}", img.shape()),
    }
}
