//! Square 8-bit grayscale rasters, the unit the cipher and the attacks work on.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel count {got} does not match side {side} (expected {})", side * side)]
    PixelCount { side: usize, got: usize },
    #[error("image side must be at least 1")]
    EmptyImage,
    #[error("image is {width}x{height}, only square images are supported")]
    NotSquare { width: u32, height: u32 },
    #[error("unsupported PNG layout: {0:?} at bit depth {1:?}, expected 8-bit grayscale")]
    UnsupportedPng(png::ColorType, png::BitDepth),
    #[error("malformed PNG: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("PNG encoding failed: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An N×N grayscale image stored row-major (left to right, then top to bottom).
///
/// Coordinates are `(x, y)` with `x` the column and `y` the row.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    side: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("side", &self.side)
            .field("pixels", &format_args!("[{} bytes]", self.pixels.len()))
            .finish()
    }
}

impl GrayImage {
    pub fn new(side: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if side == 0 {
            return Err(ImageError::EmptyImage);
        }
        if pixels.len() != side * side {
            return Err(ImageError::PixelCount {
                side,
                got: pixels.len(),
            });
        }
        Ok(Self { side, pixels })
    }

    pub fn filled(side: usize, value: u8) -> Self {
        assert!(side > 0, "image side must be at least 1");
        Self {
            side,
            pixels: vec![value; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.side + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.side + x] = value;
    }

    /// Nearest-neighbour resampling: destination index `i` reads source index
    /// `floor(i * src / dst)` along each axis.
    pub fn resize(&self, target: usize) -> GrayImage {
        assert!(target > 0, "target side must be at least 1");
        if target == self.side {
            return self.clone();
        }
        let map: Vec<usize> = (0..target).map(|i| i * self.side / target).collect();
        let mut pixels = Vec::with_capacity(target * target);
        for &sy in &map {
            let row = &self.pixels[sy * self.side..(sy + 1) * self.side];
            pixels.extend(map.iter().map(|&sx| row[sx]));
        }
        GrayImage {
            side: target,
            pixels,
        }
    }

    /// Pixels scaled to `[0, 1]` by `v / 255`.
    pub fn to_unit<T: num_traits::Float>(&self) -> Vec<T> {
        let scale = T::from(255.0).unwrap();
        self.pixels
            .iter()
            .map(|&v| T::from(v).unwrap() / scale)
            .collect()
    }

    /// Inverse of [`GrayImage::to_unit`]: clamp to `[0, 1]`, scale by 255, round half up.
    pub fn from_unit<T: num_traits::Float>(side: usize, values: &[T]) -> Result<Self, ImageError> {
        let pixels = values
            .iter()
            .map(|&v| {
                let v = v.to_f64().unwrap_or(0.0);
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                (v * 255.0 + 0.5).floor() as u8
            })
            .collect();
        GrayImage::new(side, pixels)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.side as u32, self.side as u32);
            encoder.set_color(png::ColorType::Grayscale);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header()?;
            writer.write_image_data(&self.pixels)?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImageError> {
        let decoder = png::Decoder::new(Cursor::new(bytes));
        let mut reader = decoder.read_info()?;
        let info = reader.info();
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight
        {
            return Err(ImageError::UnsupportedPng(info.color_type, info.bit_depth));
        }
        let (width, height) = (info.width, info.height);
        if width != height {
            return Err(ImageError::NotSquare { width, height });
        }
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let frame = reader.next_frame(&mut buf)?;
        buf.truncate(frame.buffer_size());
        GrayImage::new(width as usize, buf)
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode_png(&bytes)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        fs::write(path, self.encode_png()?).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Mean per-pixel squared error on the `[0, 1]` scale over paired images.
/// Panics if the lists or sides differ.
pub fn mean_squared_error(a: &[GrayImage], b: &[GrayImage]) -> f64 {
    assert_eq!(a.len(), b.len(), "image lists differ in length");
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.side, y.side, "image sides differ");
        for (&p, &q) in x.pixels.iter().zip(&y.pixels) {
            let d = (p as f64 - q as f64) / 255.0;
            total += d * d;
        }
        count += x.pixels.len();
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
