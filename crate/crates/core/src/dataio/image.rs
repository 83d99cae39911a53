//! PNG decode/encode and resampling for `H×W×3` image tensors in `[0, 1]`.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use crate::error::{Error, Result};
use crate::segnet::SegMask;
use crate::tensor::Tensor;

/// RGB luminance weights (ITU-R BT.601).
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

fn image_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn decode_png(path: &Path) -> Result<Decoded> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(image_err(path, format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(image_err(path, format!("unsupported color type {other:?}"))),
    };
    buf.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        pixels: buf,
    })
}

/// Loads an 8-bit PNG as RGB in `[0, 1]` and bilinearly resizes it to
/// `target_size × target_size`. Grayscale is replicated; alpha is dropped.
pub fn load_image(path: &Path, target_size: usize) -> Result<Tensor> {
    let d = decode_png(path)?;
    let mut data = Vec::with_capacity(d.width * d.height * 3);
    for px in d.pixels.chunks_exact(d.channels) {
        let rgb = if d.channels < 3 { [px[0]; 3] } else { [px[0], px[1], px[2]] };
        data.extend(rgb.iter().map(|&v| v as f64 / 255.0));
    }
    let img = Tensor::new(vec![d.height, d.width, 3], data)?;
    if d.height == target_size && d.width == target_size {
        Ok(img)
    } else {
        resize_bilinear(&img, target_size, target_size)
    }
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = img.dims3()?;
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::shape("resize_bilinear", "zero-sized image"));
    }
    let src = img.data();
    let coord = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for oy in 0..out_h {
        let (y0, y1, fy) = coord(oy, h, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = coord(ox, w, out_w);
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![out_h, out_w, c], out)
}

/// Nearest-neighbour resampling of a mask (half-pixel centres).
pub fn resize_mask_nearest(mask: &SegMask, out_h: usize, out_w: usize) -> SegMask {
    let mut labels = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let sy = (((oy as f64 + 0.5) * mask.height as f64 / out_h as f64) as usize).min(mask.height - 1);
        for ox in 0..out_w {
            let sx = (((ox as f64 + 0.5) * mask.width as f64 / out_w as f64) as usize).min(mask.width - 1);
            labels.push(mask.get(sy, sx));
        }
    }
    SegMask {
        width: out_w,
        height: out_h,
        labels,
    }
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e.to_string()))?;
    writer.write_image_data(bytes).map_err(|e| image_err(path, e.to_string()))?;
    writer.finish().map_err(|e| image_err(path, e.to_string()))
}

pub fn save_image(path: &Path, img: &Tensor) -> Result<()> {
    let (h, w, c) = img.dims3()?;
    if c != 3 {
        return Err(Error::shape("save_image", format!("{c} channels, expected 3")));
    }
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    write_png(path, w, h, png::ColorType::Rgb, &bytes)
}

/// Writes a mask as single-channel 8-bit PNG with values 0 and 255.
pub fn save_mask(path: &Path, mask: &SegMask) -> Result<()> {
    let bytes: Vec<u8> = mask.labels.iter().map(|&l| if l != 0 { 255 } else { 0 }).collect();
    write_png(path, mask.width, mask.height, png::ColorType::Grayscale, &bytes)
}

/// Loads a mask PNG (first channel > 127 is vessel), resized to `size` if needed.
pub fn load_mask(path: &Path, size: usize) -> Result<SegMask> {
    let d = decode_png(path)?;
    let labels = d.pixels.chunks_exact(d.channels).map(|px| (px[0] > 127) as u8).collect();
    let mask = SegMask::new(d.width, d.height, labels)?;
    if d.width == size && d.height == size {
        Ok(mask)
    } else {
        Ok(resize_mask_nearest(&mask, size, size))
    }
}

/// Flattened luminance of an RGB tensor, the RGB-channel feature vector.
pub fn grayscale(img: &Tensor) -> Result<Vec<f64>> {
    let (_, _, c) = img.dims3()?;
    if c != 3 {
        return Err(Error::shape("grayscale", format!("{c} channels, expected 3")));
    }
    Ok(img
        .data()
        .chunks_exact(3)
        .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
        .collect())
}
