//! Linear RGB float images with PFM (exact) and 8-bit sRGB PNG (preview)
//! output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::encode_srgb;

/// Row-major linear RGB image, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn black(width: usize, height: usize) -> Self {
        RgbImage { width, height, pixels: vec![[0.0; 3]; width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("image contains non-finite values".into()));
        }
        Ok(RgbImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> RgbImage {
        RgbImage { pixels: self.pixels.iter().map(|p| f(*p)).collect(), ..*self }
    }

    /// Little-endian 3-channel PFM. Rows are stored bottom-up as the format
    /// requires.
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            write!(out, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
            for row in self.pixels.chunks(self.width).rev() {
                for px in row {
                    for c in px {
                        out.write_all(&(*c as f32).to_le_bytes())?;
                    }
                }
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn read_pfm(path: &Path) -> Result<RgbImage> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let malformed = |what: &str| Error::MalformedPfm(format!("{}: {what}", path.display()));

        let mut line = String::new();
        let mut next_line = |reader: &mut BufReader<File>| -> Result<String> {
            line.clear();
            reader.read_line(&mut line).map_err(|_| malformed("unreadable header"))?;
            Ok(line.trim().to_string())
        };

        if next_line(&mut reader)? != "PF" {
            return Err(malformed("expected 3-channel 'PF' magic"));
        }
        let dims = next_line(&mut reader)?;
        let dims: Vec<usize> = dims
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| malformed("bad dimensions")))
            .collect::<Result<_>>()?;
        let [width, height] = dims[..] else {
            return Err(malformed("bad dimensions"));
        };
        if width == 0 || height == 0 {
            return Err(malformed("zero-sized image"));
        }
        let scale: f32 = next_line(&mut reader)?.parse().map_err(|_| malformed("bad scale"))?;
        if scale == 0.0 || !scale.is_finite() {
            return Err(malformed("bad scale"));
        }
        let little_endian = scale < 0.0;

        let mut raw = vec![0u8; width * height * 12];
        reader.read_exact(&mut raw).map_err(|_| malformed("truncated pixel data"))?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| {
                let b = [b[0], b[1], b[2], b[3]];
                f64::from(if little_endian { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) })
            })
            .collect();

        let mut pixels = Vec::with_capacity(width * height);
        for row in values.chunks(width * 3).rev() {
            pixels.extend(row.chunks_exact(3).map(|c| [c[0], c[1], c[2]]));
        }
        RgbImage::from_pixels(width, height, pixels).map_err(|_| malformed("non-finite pixel values"))
    }

    /// 8-bit sRGB preview; values are clamped to [0, 1] before encoding.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_source_srgb(png::SrgbRenderingIntent::Perceptual);
        let data: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|px| encode_srgb(*px))
            .map(|v| (v * 255.0).round() as u8)
            .collect();
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&data)?;
        writer.finish()?;
        Ok(())
    }
}
