//! MNIST IDX reader (plain or gzip-compressed files).

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{DatasetError, LabeledImage};
use crate::image::GrayImage;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn prefix(self) -> &'static str {
        match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "t10k",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "test",
        }
    }

    pub fn id(self) -> u64 {
        match self {
            MnistSplit::Train => 0,
            MnistSplit::Test => 1,
        }
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        if self.bytes.len() < self.offset + n {
            return Err(DatasetError::Truncated {
                path: self.path.display().to_string(),
                offset: self.bytes.len(),
                needed: self.offset + n,
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: u32) -> Result<(), DatasetError> {
        let found = self.u32()?;
        if found != expected {
            return Err(DatasetError::BadMagic {
                path: self.path.display().to_string(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<GrayImage>, DatasetError> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut cur = Cursor {
        path,
        bytes: &bytes,
        offset: 0,
    };
    cur.magic(IMAGES_MAGIC)?;
    let count = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    if rows != cols || rows == 0 {
        return Err(DatasetError::Format(format!(
            "{}: images are {rows}x{cols}, expected square",
            path.display()
        )));
    }
    (0..count)
        .map(|_| {
            let px = cur.take(rows * cols)?;
            Ok(GrayImage::new(rows, px.to_vec()).expect("sized by header"))
        })
        .collect()
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>, DatasetError> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut cur = Cursor {
        path,
        bytes: &bytes,
        offset: 0,
    };
    cur.magic(LABELS_MAGIC)?;
    let count = cur.u32()? as usize;
    let labels = cur.take(count)?.to_vec();
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(DatasetError::Format(format!(
            "{}: label {bad} outside 0..=9",
            path.display()
        )));
    }
    Ok(labels)
}

/// Pairs an image file with its label file.
pub fn load_idx(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<Vec<LabeledImage>, DatasetError> {
    let imgs = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    if imgs.len() != labels.len() {
        return Err(DatasetError::CountMismatch {
            images: imgs.len(),
            labels: labels.len(),
        });
    }
    Ok(imgs
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(index, (image, label))| LabeledImage {
            image,
            label,
            index,
        })
        .collect())
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf, DatasetError> {
    for candidate in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(candidate);
        if p.is_file() {
            return Ok(p);
        }
    }
    // some mirrors use a dot instead of a dash before "idx"
    let dotted = stem.replacen("-idx", ".idx", 1);
    for candidate in [dotted.clone(), format!("{dotted}.gz")] {
        let p = dir.join(candidate);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(DatasetError::MissingFile(dir.join(stem).display().to_string()))
}

/// Loads `train-*` or `t10k-*` IDX files from a directory.
pub fn load_mnist_split(dir: impl AsRef<Path>, split: MnistSplit) -> Result<Vec<LabeledImage>, DatasetError> {
    let dir = dir.as_ref();
    let images = locate(dir, &format!("{}-images-idx3-ubyte", split.prefix()))?;
    let labels = locate(dir, &format!("{}-labels-idx1-ubyte", split.prefix()))?;
    load_idx(images, labels)
}
