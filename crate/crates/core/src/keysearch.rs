//! Known-plaintext brute force against a static key.
//!
//! For each `(p, q, n)` in ascending `n`, then `p`, then `q`: shuffle the first
//! plain image, take `K = shuffle(P1) xor C1`, and accept when
//! `shuffle(P2) xor K == C2`. The Chen initial state is never recovered; the
//! keystream is returned as opaque bytes, which is all decryption needs.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::cipher::{cat_map_matrix, shuffle_with, unshuffle_with, xor_bytes, CipherError, Keystream};
use crate::dataset::ParamRange;
use crate::image::GrayImage;
use crate::seed::sha256_hex;

#[derive(Debug, Error)]
pub enum KeySearchError {
    #[error("key search needs at least 2 cipher/plain pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all images must share one side; found {expected} and {found}")]
    SideMismatch { expected: usize, found: usize },
    #[error("image side {0} is too small, need at least 2")]
    SideTooSmall(usize),
    #[error("key record: {0}")]
    Record(String),
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchBounds {
    pub p: ParamRange,
    pub q: ParamRange,
    pub n: ParamRange,
}

impl Default for SearchBounds {
    /// `p, q` in 1..=9, `n` in 1..=8.
    fn default() -> Self {
        Self {
            p: ParamRange { lo: 1, hi: 9 },
            q: ParamRange { lo: 1, hi: 9 },
            n: ParamRange { lo: 1, hi: 8 },
        }
    }
}

impl SearchBounds {
    pub fn size(&self) -> usize {
        [self.p, self.q, self.n]
            .iter()
            .map(|r| (r.hi - r.lo + 1) as usize)
            .product()
    }

    /// Candidates in search order.
    pub fn candidates(&self) -> Vec<(u32, u32, u32)> {
        let mut out = Vec::with_capacity(self.size());
        for n in self.n.as_range() {
            for p in self.p.as_range() {
                for q in self.q.as_range() {
                    out.push((p, q, n));
                }
            }
        }
        out
    }
}

/// A working equivalent of the unknown key.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredKey {
    pub p: u32,
    pub q: u32,
    pub n: u32,
    pub side: usize,
    pub keystream: Keystream,
    /// Fraction of pixels reproduced on the validation pair.
    pub score: f64,
    /// Candidates examined up to and including this one.
    pub tried: usize,
}

impl RecoveredKey {
    fn permutation(&self) -> Vec<usize> {
        cat_map_matrix(self.p, self.q, self.n, self.side as u64).permutation()
    }

    pub fn decrypt(&self, cipher: &GrayImage) -> Result<GrayImage, KeySearchError> {
        if cipher.side() != self.side {
            return Err(KeySearchError::SideMismatch {
                expected: self.side,
                found: cipher.side(),
            });
        }
        let mixed = xor_bytes(cipher.pixels(), &self.keystream)?;
        let shuffled = GrayImage::new(self.side, mixed).expect("same length");
        Ok(unshuffle_with(&shuffled, &self.permutation()))
    }

    pub fn encrypt(&self, plain: &GrayImage) -> Result<GrayImage, KeySearchError> {
        if plain.side() != self.side {
            return Err(KeySearchError::SideMismatch {
                expected: self.side,
                found: plain.side(),
            });
        }
        let shuffled = shuffle_with(plain, &self.permutation());
        let mixed = xor_bytes(shuffled.pixels(), &self.keystream)?;
        Ok(GrayImage::new(self.side, mixed).expect("same length"))
    }

    pub fn keystream_digest(&self) -> String {
        sha256_hex(self.keystream.as_bytes())
    }

    pub const HEADER: &'static str = "# p\tq\tn\tside\tkeystream_sha256\tkeystream_hex";

    /// Tab-separated record, one line after a `#` header.
    pub fn to_record(&self) -> String {
        format!(
            "{}\n{}\t{}\t{}\t{}\t{}\t{}\n",
            Self::HEADER,
            self.p,
            self.q,
            self.n,
            self.side,
            self.keystream_digest(),
            hex::encode(self.keystream.as_bytes())
        )
    }

    pub fn from_record(text: &str) -> Result<Self, KeySearchError> {
        let bad = |why: &str| KeySearchError::Record(why.to_string());
        let line = text
            .lines()
            .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .ok_or_else(|| bad("no record line"))?;
        let cols: Vec<&str> = line.split('\t').collect();
        let [p, q, n, side, digest, ks] = cols[..] else {
            return Err(bad("expected 6 tab-separated columns"));
        };
        let num = |v: &str| v.parse::<u32>().map_err(|e| KeySearchError::Record(format!("{v:?}: {e}")));
        let bytes = hex::decode(ks).map_err(|e| KeySearchError::Record(format!("keystream: {e}")))?;
        let side = num(side)? as usize;
        if bytes.len() != side * side {
            return Err(bad("keystream length does not match side"));
        }
        if sha256_hex(&bytes) != digest {
            return Err(bad("keystream digest mismatch"));
        }
        Ok(Self {
            p: num(p)?,
            q: num(q)?,
            n: num(n)?,
            side,
            keystream: Keystream::from_bytes(bytes),
            score: 1.0,
            tried: 0,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_record())
    }
}

impl fmt::Display for RecoveredKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p={} q={} n={} side={} keystream_sha256={} validation={:.4} tried={}",
            self.p,
            self.q,
            self.n,
            self.side,
            self.keystream_digest(),
            self.score,
            self.tried
        )
    }
}

fn xor(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

/// Searches `bounds` using `(cipher, plain)` pairs that share one key.
/// `Ok(None)` when no candidate validates.
pub fn recover(
    pairs: &[(GrayImage, GrayImage)],
    bounds: &SearchBounds,
) -> Result<Option<RecoveredKey>, KeySearchError> {
    if pairs.len() < 2 {
        return Err(KeySearchError::TooFewPairs(pairs.len()));
    }
    let side = pairs[0].0.side();
    if side < 2 {
        return Err(KeySearchError::SideTooSmall(side));
    }
    for (c, p) in pairs {
        for img in [c, p] {
            if img.side() != side {
                return Err(KeySearchError::SideMismatch {
                    expected: side,
                    found: img.side(),
                });
            }
        }
    }
    let candidates = bounds.candidates();
    let (c1, p1) = &pairs[0];
    let (c2, p2) = &pairs[1];
    let hit = candidates.par_iter().enumerate().find_map_first(|(i, &(p, q, n))| {
        let perm = cat_map_matrix(p, q, n, side as u64).permutation();
        let ks = xor(shuffle_with(p1, &perm).pixels(), c1.pixels());
        let s2 = shuffle_with(p2, &perm);
        if s2.pixels().iter().zip(&ks).zip(c2.pixels()).any(|((s, k), c)| s ^ k != *c) {
            return None;
        }
        let rest_ok = pairs[2..]
            .iter()
            .all(|(c, pl)| xor(shuffle_with(pl, &perm).pixels(), &ks) == c.pixels());
        rest_ok.then_some((i, p, q, n, ks))
    });
    Ok(hit.map(|(i, p, q, n, ks)| RecoveredKey {
        p,
        q,
        n,
        side,
        keystream: Keystream::from_bytes(ks),
        score: 1.0,
        tried: i + 1,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::{encrypt, CipherKey};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, side: usize) -> GrayImage {
        GrayImage::new(side, (0..side * side).map(|_| rng.random()).collect()).unwrap()
    }

    fn pairs(key: &CipherKey, count: usize, side: usize, seed: u64) -> Vec<(GrayImage, GrayImage)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let p = random_image(&mut rng, side);
                (encrypt(&p, key).unwrap(), p)
            })
            .collect()
    }

    #[test]
    fn recovers_reference_key() {
        let key = CipherKey::reference();
        let all = pairs(&key, 3, 64, 1);
        let found = recover(&all[..2], &SearchBounds::default()).unwrap().unwrap();
        assert_eq!(found.score, 1.0);
        assert_eq!(found.decrypt(&all[2].0).unwrap(), all[2].1);
        assert_eq!(found.encrypt(&all[2].1).unwrap(), all[2].0);
    }

    #[test]
    fn out_of_bounds_key_is_none() {
        let key = CipherKey::reference().with_map(10, 3);
        let all = pairs(&key, 2, 32, 2);
        assert_eq!(recover(&all, &SearchBounds::default()).unwrap(), None);
    }

    #[test]
    fn single_pair_is_error() {
        let all = pairs(&CipherKey::reference(), 1, 16, 3);
        assert!(matches!(
            recover(&all, &SearchBounds::default()),
            Err(KeySearchError::TooFewPairs(1))
        ));
    }

    #[test]
    fn enumeration_order() {
        let b = SearchBounds {
            p: ParamRange { lo: 1, hi: 2 },
            q: ParamRange { lo: 3, hi: 4 },
            n: ParamRange { lo: 1, hi: 2 },
        };
        assert_eq!(b.size(), 8);
        let c = b.candidates();
        assert_eq!(&c[..3], &[(1, 3, 1), (1, 4, 1), (2, 3, 1)]);
        assert_eq!(c[4], (1, 3, 2));
    }

    #[test]
    fn record_round_trip() {
        let all = pairs(&CipherKey::reference(), 2, 16, 4);
        let found = recover(&all, &SearchBounds::default()).unwrap().unwrap();
        let mut back = RecoveredKey::from_record(&found.to_record()).unwrap();
        back.tried = found.tried;
        assert_eq!(back, found);
        let tampered = found.to_record().replace("\t16\t", "\t15\t");
        assert!(RecoveredKey::from_record(&tampered).is_err());
    }
}
