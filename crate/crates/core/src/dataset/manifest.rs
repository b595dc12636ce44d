//! Corpus manifest and per-pair key records, both plain text.
//!
//! Manifest (`manifest.txt`), one `field = value` per line, `#` comments:
//!
//! ```text
//! format = 1
//! side = 32
//! mode = dynamic            # static | dynamic
//! replicas = 4              # ciphers per plain image (static: 1)
//! seed = 42
//! key = 4,7,5,-10.058,0.368,37.368,35.0,3.0,28.0   # static key / dynamic base key
//! p_range = 1..9            # dynamic only, inclusive
//! q_range = 1..9
//! train_source = 60000      # leading MNIST images used per split
//! test_source = 10000
//! train_pairs = 240000
//! test_pairs = 40000
//! train_digest = <sha256 hex>
//! test_digest = <sha256 hex>
//! ```
//!
//! Key records (`<split>/keys.tsv`), one pair per line, tab-separated:
//! `index  replica  label  p,q,n,x0,y0,z0,a,b,c`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use super::DatasetError;
use crate::cipher::CipherKey;

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyMode {
    Static,
    Dynamic,
}

impl fmt::Display for KeyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyMode::Static => "static",
            KeyMode::Dynamic => "dynamic",
        })
    }
}

impl FromStr for KeyMode {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(KeyMode::Static),
            "dynamic" => Ok(KeyMode::Dynamic),
            other => Err(DatasetError::Manifest(format!(
                "mode must be static or dynamic, got {other:?}"
            ))),
        }
    }
}

/// Inclusive integer range written as `lo..hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamRange {
    pub lo: u32,
    pub hi: u32,
}

impl ParamRange {
    pub fn new(lo: u32, hi: u32) -> Result<Self, DatasetError> {
        if lo == 0 || lo > hi {
            return Err(DatasetError::Manifest(format!(
                "range {lo}..{hi} must be non-empty and start at 1 or more"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn as_range(&self) -> RangeInclusive<u32> {
        self.lo..=self.hi
    }
}

impl Default for ParamRange {
    fn default() -> Self {
        Self { lo: 1, hi: 9 }
    }
}

impl fmt::Display for ParamRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

impl FromStr for ParamRange {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s
            .split_once("..")
            .ok_or_else(|| DatasetError::Manifest(format!("expected lo..hi, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|e| DatasetError::Manifest(format!("range bound {v:?}: {e}")))
        };
        ParamRange::new(parse(lo)?, parse(hi)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub side: usize,
    pub mode: KeyMode,
    pub replicas: usize,
    pub seed: u64,
    pub key: CipherKey,
    pub p_range: ParamRange,
    pub q_range: ParamRange,
    pub train_source: usize,
    pub test_source: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub train_digest: Option<String>,
    pub test_digest: Option<String>,
}

impl DatasetManifest {
    pub fn new_static(side: usize, key: CipherKey, seed: u64) -> Self {
        Self {
            side,
            mode: KeyMode::Static,
            replicas: 1,
            seed,
            key,
            p_range: ParamRange::default(),
            q_range: ParamRange::default(),
            train_source: 0,
            test_source: 0,
            train_pairs: 0,
            test_pairs: 0,
            train_digest: None,
            test_digest: None,
        }
    }

    pub fn new_dynamic(side: usize, base: CipherKey, replicas: usize, seed: u64) -> Self {
        Self {
            mode: KeyMode::Dynamic,
            replicas,
            ..Self::new_static(side, base, seed)
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.side < 2 {
            return Err(DatasetError::Manifest(format!("side {} must be >= 2", self.side)));
        }
        if self.replicas == 0 {
            return Err(DatasetError::Manifest("replicas must be >= 1".into()));
        }
        if self.mode == KeyMode::Static && self.replicas != 1 {
            return Err(DatasetError::Manifest(format!(
                "static mode encrypts each image once; replicas = {} is contradictory",
                self.replicas
            )));
        }
        self.key
            .validate()
            .map_err(|e| DatasetError::Manifest(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# chaoscrack dataset manifest\n");
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("format", MANIFEST_FORMAT.to_string());
        line("side", self.side.to_string());
        line("mode", self.mode.to_string());
        line("replicas", self.replicas.to_string());
        line("seed", self.seed.to_string());
        line("key", self.key.to_string());
        if self.mode == KeyMode::Dynamic {
            line("p_range", self.p_range.to_string());
            line("q_range", self.q_range.to_string());
        }
        line("train_source", self.train_source.to_string());
        line("test_source", self.test_source.to_string());
        line("train_pairs", self.train_pairs.to_string());
        line("test_pairs", self.test_pairs.to_string());
        if let Some(d) = &self.train_digest {
            line("train_digest", d.clone());
        }
        if let Some(d) = &self.test_digest {
            line("test_digest", d.clone());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, DatasetError> {
        let mut fields = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                DatasetError::Manifest(format!("line {}: expected `field = value`", n + 1))
            })?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| DatasetError::Manifest(format!("missing field {k}")))
        };
        fn num<T: FromStr>(k: &str, v: String) -> Result<T, DatasetError>
        where
            T::Err: fmt::Display,
        {
            v.parse()
                .map_err(|e| DatasetError::Manifest(format!("{k} = {v:?}: {e}")))
        }
        let format: u32 = num("format", get("format")?)?;
        if format != MANIFEST_FORMAT {
            return Err(DatasetError::Manifest(format!(
                "unsupported manifest format {format}"
            )));
        }
        let mode: KeyMode = get("mode")?.parse()?;
        let key: CipherKey = get("key")?
            .parse()
            .map_err(|e: crate::cipher::CipherError| DatasetError::Manifest(e.to_string()))?;
        let range = |k: &str| -> Result<ParamRange, DatasetError> {
            match fields.get(k) {
                Some(v) => v.parse(),
                None => Ok(ParamRange::default()),
            }
        };
        let m = DatasetManifest {
            side: num("side", get("side")?)?,
            mode,
            replicas: num("replicas", get("replicas")?)?,
            seed: num("seed", get("seed")?)?,
            key,
            p_range: range("p_range")?,
            q_range: range("q_range")?,
            train_source: num("train_source", get("train_source")?)?,
            test_source: num("test_source", get("test_source")?)?,
            train_pairs: num("train_pairs", get("train_pairs")?)?,
            test_pairs: num("test_pairs", get("test_pairs")?)?,
            train_digest: fields.get("train_digest").cloned(),
            test_digest: fields.get("test_digest").cloned(),
        };
        m.validate()?;
        Ok(m)
    }
}

/// Which key encrypted which plain image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncryptionRecord {
    pub index: usize,
    pub replica: usize,
    pub key: CipherKey,
}

/// One line of a `keys.tsv` file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordLine {
    pub record: EncryptionRecord,
    pub label: u8,
}

impl RecordLine {
    pub const HEADER: &'static str = "# index\treplica\tlabel\tp,q,n,x0,y0,z0,a,b,c";

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.record.index, self.record.replica, self.label, self.record.key
        )
    }

    pub fn parse(line: &str) -> Result<Self, DatasetError> {
        let bad = |why: String| DatasetError::Record(format!("{line:?}: {why}"));
        let cols: Vec<&str> = line.split('\t').collect();
        let [index, replica, label, key] = cols[..] else {
            return Err(bad(format!("expected 4 tab-separated columns, got {}", cols.len())));
        };
        Ok(RecordLine {
            record: EncryptionRecord {
                index: index.parse().map_err(|e| bad(format!("index: {e}")))?,
                replica: replica.parse().map_err(|e| bad(format!("replica: {e}")))?,
                key: key.parse().map_err(|e| bad(format!("{e}")))?,
            },
            label: label.parse().map_err(|e| bad(format!("label: {e}")))?,
        })
    }

    pub fn parse_file(text: &str) -> Result<Vec<Self>, DatasetError> {
        text.lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(Self::parse)
            .collect()
    }
}
