//! 8-bit raster images and binary PNM (P5/P6) encoding.

use std::path::Path;

use crate::error::{Error, Result};
use crate::netlib::Tensor;

/// Row-major `height × width × channels` image with 8-bit samples. A sample
/// `k` stands for the intensity `k / 255` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

pub type Rgb = [f64; 3];

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0; height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, color: Rgb) -> Self {
        let mut img = Self::new(height, width, 3);
        let px = color.map(quantize);
        for chunk in img.data.chunks_mut(3) {
            chunk.copy_from_slice(&px);
        }
        img
    }

    pub fn from_raw(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * channels || height == 0 || width == 0 || channels == 0 {
            return Err(Error::shape(format!(
                "{} samples for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image from intensities in `[0, 1]` (clamped), shape `(H, W, C)`.
    pub fn from_values(height: usize, width: usize, channels: usize, values: &[f64]) -> Result<Self> {
        Self::from_raw(height, width, channels, values.iter().map(|&v| quantize(v)).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn raw(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch] as f64 / 255.0
    }

    pub fn set_rgb(&mut self, row: usize, col: usize, color: Rgb) {
        let base = (row * self.width + col) * self.channels;
        for (c, v) in color.iter().enumerate().take(self.channels) {
            self.data[base + c] = quantize(*v);
        }
    }

    pub fn pixel_raw(&self, row: usize, col: usize) -> &[u8] {
        let base = (row * self.width + col) * self.channels;
        &self.data[base..base + self.channels]
    }

    /// Intensities in `[0, 1]`.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().map(|&v| v as f64 / 255.0)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width, self.channels], self.values().collect()).expect("image shape")
    }

    /// Binary PNM: P5 for one channel, P6 for three.
    pub fn encode_pnm(&self) -> Result<Vec<u8>> {
        let magic = match self.channels {
            1 => "P5",
            3 => "P6",
            c => return Err(Error::InvalidArgument(format!("PNM cannot hold {c} channels"))),
        };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        Ok(out)
    }

    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_pnm()?)?;
        Ok(())
    }

    /// Parses a binary P5/P6 file with maxval 255.
    pub fn decode_pnm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("PNM: {m}"));
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
        }
        // exactly one whitespace byte separates the header from the samples
        if pos >= bytes.len() {
            return Err(bad("missing sample data"));
        }
        pos += 1;
        let channels = match fields[0] {
            "P5" => 1,
            "P6" => 3,
            m => return Err(bad(&format!("unsupported magic {m:?}"))),
        };
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        let n = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| bad("dimensions overflow"))?;
        if bytes.len() - pos != n {
            return Err(bad("sample count does not match header"));
        }
        Self::from_raw(height, width, channels, bytes[pos..].to_vec())
    }
}
