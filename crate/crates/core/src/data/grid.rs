//! Image grids as 8-bit PNG, PGM (grayscale) or PPM (RGB).
//!
//! Tiles are laid out row-major with no gaps, at most
//! [`DEFAULT_GRID_COLUMNS`] per row. Values are clamped to `[0, 1]` and
//! mapped to `round(255 * v)`.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_GRID_COLUMNS: usize = 10;

/// Interleaved 8-bit pixels; `channels` is 1 or 3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

fn tile_dims(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w] => Ok((1, h, w)),
        [c @ (1 | 3), h, w] => Ok((c, h, w)),
        ref s => Err(Error::InvalidArgument(format!(
            "grid tiles must be [h, w], [1, h, w] or [3, h, w], got {s:?}"
        ))),
    }
}

/// Tile `images` (all the same shape) into one image, `columns` per row.
pub fn encode_grid(images: &[Tensor], columns: usize) -> Result<GridImage> {
    let first = images
        .first()
        .ok_or(Error::EmptyTensor { op: "encode_grid" })?;
    if columns == 0 {
        return Err(Error::InvalidArgument("grid needs at least one column".into()));
    }
    let (c, h, w) = tile_dims(first)?;
    for t in images {
        if t.shape() != first.shape() {
            return Err(Error::shape("encode_grid", t.shape(), first.shape()));
        }
    }
    let cols = columns.min(images.len());
    let rows = images.len().div_ceil(cols);
    let (width, height) = (cols * w, rows * h);
    let mut pixels = vec![0u8; width * height * c];
    for (i, t) in images.iter().enumerate() {
        let (r0, c0) = ((i / cols) * h, (i % cols) * w);
        let d = t.data();
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let v = d[(ch * h + y) * w + x];
                    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                    pixels[((r0 + y) * width + c0 + x) * c + ch] = (v * 255.0).round() as u8;
                }
            }
        }
    }
    Ok(GridImage {
        width,
        height,
        channels: c,
        pixels,
    })
}

impl GridImage {
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(if self.channels == 3 {
                png::ColorType::Rgb
            } else {
                png::ColorType::Grayscale
            });
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.pixels)?;
        }
        Ok(out)
    }

    /// Binary `P5` (grayscale) or `P6` (RGB) netpbm bytes.
    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Write as PNG, or as netpbm when the extension is `pgm`/`ppm`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let bytes = match ext {
            "pgm" | "ppm" | "pnm" => self.to_pnm(),
            _ => self.to_png()?,
        };
        fs::write(path, bytes)?;
        Ok(())
    }
}

/// Grid with the default column count, saved according to the extension.
pub fn export_image_grid(images: &[Tensor], path: impl AsRef<Path>) -> Result<GridImage> {
    let grid = encode_grid(images, DEFAULT_GRID_COLUMNS)?;
    grid.save(path)?;
    Ok(grid)
}

/// Decode an 8-bit grayscale or RGB PNG.
pub fn decode_png(bytes: &[u8]) -> Result<GridImage> {
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Malformed("png too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf)?;
    let channels = match (info.color_type, info.bit_depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => 1,
        (png::ColorType::Rgb, png::BitDepth::Eight) => 3,
        other => return Err(Error::Malformed(format!("unsupported png layout {other:?}"))),
    };
    buf.truncate(info.buffer_size());
    Ok(GridImage {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        pixels: buf,
    })
}

/// Parse binary `P5`/`P6` netpbm bytes with a maxval of 255.
pub fn read_pnm(bytes: &[u8]) -> Result<GridImage> {
    let bad = |why: &str| Error::Malformed(format!("pnm: {why}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        m => return Err(bad(&format!("unsupported magic {m}"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("dimension"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    let pixels = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
    if pixels.len() != width * height * channels {
        return Err(bad("raster size"));
    }
    Ok(GridImage {
        width,
        height,
        channels,
        pixels: pixels.to_vec(),
    })
}
