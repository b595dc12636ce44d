//! Generalized Arnold cat map used as the permutation stage.

use crate::image::GrayImage;

use super::CipherError;

/// `A^n mod N` for `A = [[1, p], [q, pq + 1]]`, stored as `[m1, m2, m3, m4]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CatMapMatrix {
    entries: [u64; 4],
    modulus: u64,
}

impl CatMapMatrix {
    pub fn identity(modulus: u64) -> Self {
        Self {
            entries: [1 % modulus, 0, 0, 1 % modulus],
            modulus,
        }
    }

    /// Matrix `[[m1, m2], [m3, m4]]` with entries reduced mod `modulus`.
    pub fn from_entries(entries: [u64; 4], modulus: u64) -> Self {
        assert!(modulus >= 1 && modulus <= u32::MAX as u64);
        Self {
            entries: entries.map(|e| e % modulus),
            modulus,
        }
    }

    pub fn entries(&self) -> [u64; 4] {
        self.entries
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn determinant(&self) -> u64 {
        let [m1, m2, m3, m4] = self.entries;
        let n = self.modulus;
        (m1 * m4 % n + n - m2 * m3 % n) % n
    }

    /// `self · other mod N`.
    pub fn compose(&self, other: &CatMapMatrix) -> CatMapMatrix {
        assert_eq!(self.modulus, other.modulus, "modulus mismatch");
        let n = self.modulus;
        let [a1, a2, a3, a4] = self.entries;
        let [b1, b2, b3, b4] = other.entries;
        CatMapMatrix {
            entries: [
                (a1 * b1 + a2 * b3) % n,
                (a1 * b2 + a2 * b4) % n,
                (a3 * b1 + a4 * b3) % n,
                (a3 * b2 + a4 * b4) % n,
            ],
            modulus: n,
        }
    }

    #[inline]
    pub fn apply(&self, x: u64, y: u64) -> (u64, u64) {
        let [m1, m2, m3, m4] = self.entries;
        let n = self.modulus;
        ((m1 * x + m2 * y) % n, (m3 * x + m4 * y) % n)
    }

    /// Destination linear index (row-major) for every source linear index.
    pub fn permutation(&self) -> Vec<usize> {
        let side = self.modulus as usize;
        let mut dest = Vec::with_capacity(side * side);
        for y in 0..side as u64 {
            for x in 0..side as u64 {
                let (nx, ny) = self.apply(x, y);
                dest.push(ny as usize * side + nx as usize);
            }
        }
        dest
    }
}

/// `A^n mod N` by repeated squaring; `n = 0` gives the identity.
///
/// # Panics
/// If `modulus < 2` or exceeds `u32::MAX`.
pub fn cat_map_matrix(p: u32, q: u32, n: u32, modulus: u64) -> CatMapMatrix {
    assert!(
        (2..=u32::MAX as u64).contains(&modulus),
        "cat map modulus must be in [2, 2^32)"
    );
    let (p, q) = (p as u64 % modulus, q as u64 % modulus);
    let base = CatMapMatrix::from_entries([1, p, q, (p * q + 1) % modulus], modulus);
    let mut result = CatMapMatrix::identity(modulus);
    let mut square = base;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = result.compose(&square);
        }
        square = square.compose(&square);
        e >>= 1;
    }
    result
}

fn check_modulus(image: &GrayImage, matrix: &CatMapMatrix) -> Result<(), CipherError> {
    if image.side() as u64 != matrix.modulus() {
        return Err(CipherError::ModulusMismatch {
            modulus: matrix.modulus(),
            side: image.side(),
        });
    }
    Ok(())
}

/// Moves the pixel at `(x, y)` to `M·(x, y) mod N`.
pub fn shuffle(image: &GrayImage, matrix: &CatMapMatrix) -> Result<GrayImage, CipherError> {
    check_modulus(image, matrix)?;
    Ok(shuffle_with(image, &matrix.permutation()))
}

/// Inverse of [`shuffle`]: reads the pixel back from `M·(x, y)` into `(x, y)`.
pub fn unshuffle(image: &GrayImage, matrix: &CatMapMatrix) -> Result<GrayImage, CipherError> {
    check_modulus(image, matrix)?;
    Ok(unshuffle_with(image, &matrix.permutation()))
}

pub(crate) fn shuffle_with(image: &GrayImage, dest: &[usize]) -> GrayImage {
    let src = image.pixels();
    let mut out = vec![0u8; src.len()];
    for (i, &d) in dest.iter().enumerate() {
        out[d] = src[i];
    }
    GrayImage::new(image.side(), out).expect("permutation preserves size")
}

pub(crate) fn unshuffle_with(image: &GrayImage, dest: &[usize]) -> GrayImage {
    let src = image.pixels();
    let out = dest.iter().map(|&d| src[d]).collect();
    GrayImage::new(image.side(), out).expect("permutation preserves size")
}

#[cfg(test)]
mod tests {
    use super::*;

    // Plain integer matrix power, no reduction until the end.
    fn naive_power(p: u64, q: u64, n: u32, modulus: u64) -> [u64; 4] {
        let mut m: [u128; 4] = [1, 0, 0, 1];
        let a: [u128; 4] = [1, p as u128, q as u128, (p * q + 1) as u128];
        for _ in 0..n {
            m = [
                (m[0] * a[0] + m[1] * a[2]) % modulus as u128,
                (m[0] * a[1] + m[1] * a[3]) % modulus as u128,
                (m[2] * a[0] + m[3] * a[2]) % modulus as u128,
                (m[2] * a[1] + m[3] * a[3]) % modulus as u128,
            ];
        }
        m.map(|v| v as u64 % modulus)
    }

    #[test]
    fn zeroth_power_is_identity() {
        assert_eq!(cat_map_matrix(4, 7, 0, 8).entries(), [1, 0, 0, 1]);
    }

    #[test]
    fn known_answers_mod_8() {
        assert_eq!(cat_map_matrix(4, 7, 1, 8).entries(), [1, 4, 7, 5]);
        assert_eq!(cat_map_matrix(4, 7, 2, 8).entries(), [5, 0, 2, 5]);
    }

    #[test]
    fn matches_naive_power() {
        for modulus in [2u64, 8, 31, 64, 128] {
            for p in 1..=9 {
                for q in 1..=9 {
                    for n in 0..=12 {
                        assert_eq!(
                            cat_map_matrix(p, q, n, modulus).entries(),
                            naive_power(p as u64, q as u64, n, modulus)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn determinant_is_one() {
        for modulus in [8u64, 64, 128] {
            for n in 0..=5 {
                assert_eq!(cat_map_matrix(3, 9, n, modulus).determinant(), 1);
            }
        }
    }

    #[test]
    fn origin_is_fixed() {
        let m = cat_map_matrix(5, 2, 3, 16);
        assert_eq!(m.apply(0, 0), (0, 0));
        assert_eq!(m.permutation()[0], 0);
    }

    #[test]
    fn shuffle_moves_one_one_to_five_four() {
        let m = cat_map_matrix(4, 7, 1, 8);
        let mut img = GrayImage::filled(8, 0);
        img.set(1, 1, 200);
        let out = shuffle(&img, &m).unwrap();
        assert_eq!(out.get(5, 4), 200);
        assert_eq!(out.pixels().iter().filter(|&&v| v == 200).count(), 1);
        let back = unshuffle(&out, &m).unwrap();
        assert_eq!(back.get(1, 1), 200);
    }

    #[test]
    fn identity_shuffle_is_noop() {
        let img = GrayImage::new(4, (0..16).collect()).unwrap();
        let id = cat_map_matrix(4, 7, 0, 4);
        assert_eq!(shuffle(&img, &id).unwrap(), img);
        assert_eq!(unshuffle(&img, &id).unwrap(), img);
    }

    #[test]
    fn modulus_mismatch_is_error() {
        let img = GrayImage::filled(8, 0);
        let m = cat_map_matrix(1, 1, 1, 16);
        assert!(matches!(
            shuffle(&img, &m),
            Err(CipherError::ModulusMismatch { modulus: 16, side: 8 })
        ));
        assert!(unshuffle(&img, &m).is_err());
    }
}
