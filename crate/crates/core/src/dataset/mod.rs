//! MNIST ingestion and cipher/plain corpus generation.
//!
//! On-disk layout of a corpus directory:
//!
//! ```text
//! manifest.txt
//! train/keys.tsv
//! train/{index}_{replica}_plain.png
//! train/{index}_{replica}_cipher.png
//! test/...
//! ```
//!
//! Dynamic keys are drawn from `derive_rng(seed, "dataset", [split, index, replica])`
//! so any pair can be regenerated on its own, in any order.

mod idx;
mod manifest;

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cipher::{
    cat_map_matrix, keystream, shuffle_with, unshuffle_with, xor_bytes, CipherError, CipherKey,
    Keystream,
};
use crate::image::{GrayImage, ImageError};
use crate::seed::{derive_rng, ContentDigest, DATASET};

pub use idx::{load_idx, load_idx_images, load_idx_labels, load_mnist_split, MnistSplit};
pub use manifest::{DatasetManifest, EncryptionRecord, KeyMode, ParamRange, RecordLine, MANIFEST_FORMAT};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const RECORDS_FILE: &str = "keys.tsv";

const CHUNK: usize = 512;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: truncated at byte offset {offset}, needed {needed} bytes")]
    Truncated {
        path: String,
        offset: usize,
        needed: usize,
    },
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("format: {0}")]
    Format(String),
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("key record {0}")]
    Record(String),
    #[error("{split} split does not regenerate: manifest digest {expected}, rebuilt {found}")]
    Inconsistent {
        split: &'static str,
        expected: String,
        found: String,
    },
    #[error("pair {index}_{replica} does not decrypt to its plain image")]
    Pairing { index: usize, replica: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub label: u8,
    pub index: usize,
}

/// `MNIST_DIR` if set, otherwise the digit subset shipped in `data/mnist-subset`.
pub fn default_mnist_dir() -> PathBuf {
    match std::env::var_os("MNIST_DIR") {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"),
    }
}

/// Replaces `p` and `q` with independent uniform draws from the ranges.
pub fn sample_dynamic_key_in<R: Rng + ?Sized>(
    rng: &mut R,
    base: &CipherKey,
    p_range: ParamRange,
    q_range: ParamRange,
) -> CipherKey {
    let p = rng.random_range(p_range.as_range());
    let q = rng.random_range(q_range.as_range());
    base.with_map(p, q)
}

/// `p, q` uniform on 1..=9, everything else copied from `base`.
pub fn sample_dynamic_key<R: Rng + ?Sized>(rng: &mut R, base: &CipherKey) -> CipherKey {
    sample_dynamic_key_in(rng, base, ParamRange::default(), ParamRange::default())
}

/// The key used for one (split, index, replica) slot of a corpus.
pub fn pair_key(m: &DatasetManifest, split: MnistSplit, index: usize, replica: usize) -> CipherKey {
    match m.mode {
        KeyMode::Static => m.key,
        KeyMode::Dynamic => {
            let mut rng = derive_rng(m.seed, DATASET, &[split.id(), index as u64, replica as u64]);
            sample_dynamic_key_in(&mut rng, &m.key, m.p_range, m.q_range)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusPair {
    pub record: EncryptionRecord,
    pub label: u8,
    pub plain: GrayImage,
    pub cipher: GrayImage,
}

impl CorpusPair {
    pub fn record_line(&self) -> RecordLine {
        RecordLine {
            record: self.record,
            label: self.label,
        }
    }

    /// Decrypts the cipher with the recorded key and compares to the plain image.
    pub fn check(&self) -> Result<(), DatasetError> {
        let back = crate::cipher::decrypt(&self.cipher, &self.record.key)?;
        if back != self.plain {
            return Err(DatasetError::Pairing {
                index: self.record.index,
                replica: self.record.replica,
            });
        }
        Ok(())
    }
}

/// Receives generated pairs in (index, replica) order.
pub trait PairSink {
    fn put(&mut self, pair: CorpusPair) -> Result<(), DatasetError>;

    fn finish(&mut self) -> Result<(), DatasetError> {
        Ok(())
    }
}

impl PairSink for Vec<CorpusPair> {
    fn put(&mut self, pair: CorpusPair) -> Result<(), DatasetError> {
        self.push(pair);
        Ok(())
    }
}

/// Drops every pair; useful when only the digest matters.
pub struct Discard;

impl PairSink for Discard {
    fn put(&mut self, _: CorpusPair) -> Result<(), DatasetError> {
        Ok(())
    }
}

/// Writes PNG pairs and `keys.tsv` into one split directory.
pub struct DirSink {
    dir: PathBuf,
    records: BufWriter<fs::File>,
}

impl DirSink {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(RECORDS_FILE);
        let mut records = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
        writeln!(records, "{}", RecordLine::HEADER).map_err(io_err(&path))?;
        Ok(Self { dir, records })
    }
}

pub fn pair_paths(dir: &Path, index: usize, replica: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{index}_{replica}_plain.png")),
        dir.join(format!("{index}_{replica}_cipher.png")),
    )
}

impl PairSink for DirSink {
    fn put(&mut self, pair: CorpusPair) -> Result<(), DatasetError> {
        let (pp, cp) = pair_paths(&self.dir, pair.record.index, pair.record.replica);
        pair.plain.write_png(&pp)?;
        pair.cipher.write_png(&cp)?;
        let path = self.dir.join(RECORDS_FILE);
        writeln!(self.records, "{}", pair.record_line().to_line()).map_err(io_err(&path))
    }

    fn finish(&mut self) -> Result<(), DatasetError> {
        let path = self.dir.join(RECORDS_FILE);
        self.records.flush().map_err(io_err(&path))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSummary {
    pub sources: usize,
    pub pairs: usize,
    pub digest: String,
}

/// Caches cat-map permutations per `(p, q)` and the shared keystream.
struct Encryptor {
    side: usize,
    n: u32,
    keystream: Keystream,
    base: CipherKey,
    perms: HashMap<(u32, u32), Vec<usize>>,
}

impl Encryptor {
    fn new(m: &DatasetManifest) -> Result<Self, DatasetError> {
        let mut perms = HashMap::new();
        let (ps, qs) = match m.mode {
            KeyMode::Static => (m.key.p..=m.key.p, m.key.q..=m.key.q),
            KeyMode::Dynamic => (m.p_range.as_range(), m.q_range.as_range()),
        };
        for p in ps {
            for q in qs.clone() {
                let perm = cat_map_matrix(p, q, m.key.n, m.side as u64).permutation();
                perms.insert((p, q), perm);
            }
        }
        Ok(Self {
            side: m.side,
            n: m.key.n,
            keystream: keystream(&m.key, m.side)?,
            base: m.key,
            perms,
        })
    }

    fn encrypt(&self, plain: &GrayImage, key: &CipherKey) -> Result<GrayImage, DatasetError> {
        debug_assert!(key.n == self.n && key.same_keystream(&self.base));
        let perm = &self.perms[&(key.p, key.q)];
        let shuffled = shuffle_with(plain, perm);
        let mixed = xor_bytes(shuffled.pixels(), &self.keystream)?;
        Ok(GrayImage::new(self.side, mixed)?)
    }
}

fn digest_pair(d: &mut ContentDigest, pair: &CorpusPair) {
    d.update(pair.record_line().to_line().as_bytes());
    d.update(b"\n");
    d.update(pair.plain.pixels());
    d.update(pair.cipher.pixels());
}

/// Encrypts every plain image `replicas` times and streams the pairs into `sink`.
pub fn build_split(
    manifest: &DatasetManifest,
    split: MnistSplit,
    plain: &[LabeledImage],
    sink: &mut dyn PairSink,
) -> Result<SplitSummary, DatasetError> {
    manifest.validate()?;
    let enc = Encryptor::new(manifest)?;
    let mut digest = ContentDigest::new();
    let mut pairs = 0;
    for chunk in plain.chunks(CHUNK) {
        let built: Vec<Vec<CorpusPair>> = chunk
            .par_iter()
            .map(|item| {
                let resized = item.image.resize(manifest.side);
                (0..manifest.replicas)
                    .map(|replica| {
                        let key = pair_key(manifest, split, item.index, replica);
                        Ok(CorpusPair {
                            record: EncryptionRecord {
                                index: item.index,
                                replica,
                                key,
                            },
                            label: item.label,
                            cipher: enc.encrypt(&resized, &key)?,
                            plain: resized.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, DatasetError>>()
            })
            .collect::<Result<_, _>>()?;
        for pair in built.into_iter().flatten() {
            digest_pair(&mut digest, &pair);
            pairs += 1;
            sink.put(pair)?;
        }
    }
    sink.finish()?;
    Ok(SplitSummary {
        sources: plain.len(),
        pairs,
        digest: digest.finish_hex(),
    })
}

/// Builds both splits under `out_dir` and writes a completed manifest.
pub fn build_corpus(
    manifest: &DatasetManifest,
    train: &[LabeledImage],
    test: &[LabeledImage],
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, DatasetError> {
    let out = out_dir.as_ref();
    let mut m = manifest.clone();
    let tr = build_split(&m, MnistSplit::Train, train, &mut DirSink::create(out.join("train"))?)?;
    let te = build_split(&m, MnistSplit::Test, test, &mut DirSink::create(out.join("test"))?)?;
    m.train_source = tr.sources;
    m.test_source = te.sources;
    m.train_pairs = tr.pairs;
    m.test_pairs = te.pairs;
    m.train_digest = Some(tr.digest);
    m.test_digest = Some(te.digest);
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, m.to_text()).map_err(io_err(&path))?;
    Ok(m)
}

/// Rebuilds both splits from the manifest and MNIST and compares digests.
pub fn verify_regeneration(
    manifest: &DatasetManifest,
    train: &[LabeledImage],
    test: &[LabeledImage],
) -> Result<(), DatasetError> {
    let sources = |split: MnistSplit, all: &[LabeledImage], n: usize| -> Result<Vec<LabeledImage>, DatasetError> {
        if all.len() < n {
            return Err(DatasetError::Manifest(format!(
                "{} split needs {n} source images, only {} available",
                split.name(),
                all.len()
            )));
        }
        Ok(all[..n].to_vec())
    };
    for (split, all, n, expected) in [
        (MnistSplit::Train, train, manifest.train_source, &manifest.train_digest),
        (MnistSplit::Test, test, manifest.test_source, &manifest.test_digest),
    ] {
        let plain = sources(split, all, n)?;
        let got = build_split(manifest, split, &plain, &mut Discard)?;
        let expected = expected
            .clone()
            .ok_or_else(|| DatasetError::Manifest(format!("no {}_digest", split.name())))?;
        if got.digest != expected {
            return Err(DatasetError::Inconsistent {
                split: split.name(),
                expected,
                found: got.digest,
            });
        }
    }
    Ok(())
}

/// A corpus directory on disk.
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Corpus {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let root = root.into();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(Self {
            manifest: DatasetManifest::from_text(&text)?,
            root,
        })
    }

    pub fn records(&self, split: MnistSplit) -> Result<Vec<RecordLine>, DatasetError> {
        let path = self.root.join(split.name()).join(RECORDS_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let recs = RecordLine::parse_file(&text)?;
        let expected = match split {
            MnistSplit::Train => self.manifest.train_pairs,
            MnistSplit::Test => self.manifest.test_pairs,
        };
        if recs.len() != expected {
            return Err(DatasetError::Manifest(format!(
                "{} has {} records, manifest says {expected}",
                path.display(),
                recs.len()
            )));
        }
        Ok(recs)
    }

    /// Reads up to `limit` pairs of a split (all when `None`).
    pub fn load(&self, split: MnistSplit, limit: Option<usize>) -> Result<Vec<CorpusPair>, DatasetError> {
        let dir = self.root.join(split.name());
        let recs = self.records(split)?;
        let take = limit.unwrap_or(recs.len()).min(recs.len());
        recs[..take]
            .par_iter()
            .map(|r| {
                let (pp, cp) = pair_paths(&dir, r.record.index, r.record.replica);
                Ok(CorpusPair {
                    record: r.record,
                    label: r.label,
                    plain: GrayImage::read_png(&pp)?,
                    cipher: GrayImage::read_png(&cp)?,
                })
            })
            .collect()
    }

    /// Digest of the stored split, comparable with the manifest digest.
    pub fn digest(&self, split: MnistSplit) -> Result<String, DatasetError> {
        let mut d = ContentDigest::new();
        for pair in self.load(split, None)? {
            digest_pair(&mut d, &pair);
        }
        Ok(d.finish_hex())
    }
}

/// Inverse of the dataset's encryption using cached permutations; used by
/// bulk pairing checks.
pub fn check_pairs(manifest: &DatasetManifest, pairs: &[CorpusPair]) -> Result<(), DatasetError> {
    let enc = Encryptor::new(manifest)?;
    pairs.par_iter().try_for_each(|pair| {
        let key = &pair.record.key;
        let perm = match enc.perms.get(&(key.p, key.q)) {
            Some(p) => std::borrow::Cow::Borrowed(p),
            None => std::borrow::Cow::Owned(
                cat_map_matrix(key.p, key.q, key.n, enc.side as u64).permutation(),
            ),
        };
        let mixed = xor_bytes(pair.cipher.pixels(), &enc.keystream)?;
        let back = unshuffle_with(&GrayImage::new(enc.side, mixed)?, &perm);
        if back != pair.plain || key.n != enc.n || !key.same_keystream(&enc.base) {
            return Err(DatasetError::Pairing {
                index: pair.record.index,
                replica: pair.record.replica,
            });
        }
        Ok(())
    })
}
