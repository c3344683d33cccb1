//! RGB images with `f64` channels in `[0,1]`, stored row-major as `H×W×3`,
//! and their binary portable-pixmap (`P6`, 8-bit) encoding.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::numkernel::Tensor;

pub const CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed pixmap: {0}")]
    Format(String),
    #[error("image resolution mismatch: {0:?} vs {1:?}")]
    Resolution((usize, usize), (usize, usize)),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self { height, width, data }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != height * width * CHANNELS {
            return Err(ImageError::Format(format!("{} values for a {height}x{width} RGB image", data.len())));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, r: usize, c: usize) -> [f64; 3] {
        let i = (r * self.width + c) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, r: usize, c: usize, rgb: [f64; 3]) {
        let i = (r * self.width + c) * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&rgb);
    }

    /// Pixels as a `[H·W, 3]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.height * self.width, CHANNELS], self.data.clone())
            .expect("image data length is validated on construction")
    }

    /// Inverse of [`Image::to_tensor`]; values are clamped to `[0,1]`.
    pub fn from_tensor(height: usize, width: usize, t: &Tensor) -> Result<Self, ImageError> {
        let data = t.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::from_data(height, width, data)
    }

    /// Copy with every pixel for which `keep(r, c)` is false set to zero.
    pub fn masked(&self, keep: impl Fn(usize, usize) -> bool) -> Image {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                if !keep(r, c) {
                    out.set_pixel(r, c, [0.0; 3]);
                }
            }
        }
        out
    }

    /// Nearest-neighbour resize.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Image {
        let mut out = Image::filled(height, width, [0.0; 3]);
        for r in 0..height {
            let sr = r * self.height / height;
            for c in 0..width {
                let sc = c * self.width / width;
                out.set_pixel(r, c, self.pixel(sr, sc));
            }
        }
        out
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<(), ImageError> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.data.iter().map(|v| to_byte(*v)).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_ppm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_ppm<R: Read>(mut r: R) -> Result<Self, ImageError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_ppm_bytes(&bytes)
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut pos = 0;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::Format("truncated header".into()));
            }
            header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if header[0] != "P6" {
            return Err(ImageError::Format(format!("unsupported magic {:?}", header[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| ImageError::Format(format!("bad header field {s:?}")));
        let (width, height, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
        if maxval != 255 {
            return Err(ImageError::Format(format!("unsupported maxval {maxval}")));
        }
        pos += 1; // single whitespace after maxval
        let n = width * height * CHANNELS;
        let body = bytes.get(pos..pos + n).ok_or_else(|| ImageError::Format("truncated pixel data".into()))?;
        let data = body.iter().map(|&b| f64::from(b) / 255.0).collect();
        Ok(Self { height, width, data })
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        std::fs::write(path, self.to_ppm_bytes())?;
        Ok(())
    }

    pub fn load_ppm(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        Self::from_ppm_bytes(&std::fs::read(path)?)
    }

    /// Grayscale heatmap of `values` (one per pixel), scaled so the maximum
    /// is white.
    pub fn heatmap(height: usize, width: usize, values: &[f64]) -> Result<Self, ImageError> {
        if values.len() != height * width {
            return Err(ImageError::Format(format!("{} heat values for {height}x{width}", values.len())));
        }
        let max = values.iter().copied().fold(0.0, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        let data = values.iter().flat_map(|v| [v * scale; 3]).collect();
        Self::from_data(height, width, data)
    }
}

/// Quantizes a channel value to 8 bits.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_exact_for_byte_values() {
        let mut img = Image::filled(3, 5, [0.0, 0.5, 1.0]);
        img.set_pixel(1, 2, [10.0 / 255.0, 200.0 / 255.0, 33.0 / 255.0]);
        let img = Image::from_ppm_bytes(&img.to_ppm_bytes()).unwrap();
        let back = Image::from_ppm_bytes(&img.to_ppm_bytes()).unwrap();
        assert_eq!(img, back);
        assert_eq!(back.pixel(1, 2), [10.0 / 255.0, 200.0 / 255.0, 33.0 / 255.0]);
        assert_eq!(back.resolution(), (3, 5));
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(Image::from_ppm_bytes(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(Image::from_ppm_bytes(b"P6\n2 2\n255\n\x00").is_err());
    }
}
