//! The chaos-based image cipher: a cat-map pixel permutation followed by an
//! XOR with a keystream quantized from a Chen-system trajectory.
//!
//! `encrypt` = shuffle with `A^n mod N`, scan row-major, XOR, reshape.
//! `decrypt` runs the same stages backwards. Both are bit-exact inverses.

mod catmap;
mod chen;
mod key;
mod keystream;

use thiserror::Error;

use crate::image::GrayImage;

pub use catmap::{cat_map_matrix, shuffle, unshuffle, CatMapMatrix};
pub(crate) use catmap::{shuffle_with, unshuffle_with};
pub use chen::{chen_derivative, chen_rk4_step, ChenParams, ChenState, ChenTrajectory};
pub use key::CipherKey;
pub use keystream::{keystream, quantize, xor_bytes, Keystream, FRACTION_SCALE, RK4_STEP};

#[derive(Debug, Error)]
pub enum CipherError {
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("cat map modulus {modulus} does not match image side {side}")]
    ModulusMismatch { modulus: u64, side: usize },
    #[error("image side {0} is too small, need at least 2")]
    SideTooSmall(usize),
    #[error("Chen trajectory diverged at step {step}: {state:?}")]
    Divergence { step: u64, state: ChenState },
    #[error("length mismatch: data has {data} bytes, keystream has {keystream}")]
    LengthMismatch { data: usize, keystream: usize },
}

/// Shuffle with `matrix`, then XOR with `ks`. Lets callers substitute the
/// keystream (e.g. all zeros) or reuse one across images.
pub fn encrypt_with(
    image: &GrayImage,
    matrix: &CatMapMatrix,
    ks: &Keystream,
) -> Result<GrayImage, CipherError> {
    let shuffled = shuffle(image, matrix)?;
    let mixed = xor_bytes(shuffled.pixels(), ks)?;
    Ok(GrayImage::new(image.side(), mixed).expect("xor preserves length"))
}

/// Inverse of [`encrypt_with`].
pub fn decrypt_with(
    image: &GrayImage,
    matrix: &CatMapMatrix,
    ks: &Keystream,
) -> Result<GrayImage, CipherError> {
    let mixed = xor_bytes(image.pixels(), ks)?;
    let shuffled = GrayImage::new(image.side(), mixed).expect("xor preserves length");
    unshuffle(&shuffled, matrix)
}

pub fn encrypt(image: &GrayImage, key: &CipherKey) -> Result<GrayImage, CipherError> {
    let side = image.side();
    if side < 2 {
        return Err(CipherError::SideTooSmall(side));
    }
    let matrix = cat_map_matrix(key.p, key.q, key.n, side as u64);
    encrypt_with(image, &matrix, &keystream(key, side)?)
}

pub fn decrypt(image: &GrayImage, key: &CipherKey) -> Result<GrayImage, CipherError> {
    let side = image.side();
    if side < 2 {
        return Err(CipherError::SideTooSmall(side));
    }
    let matrix = cat_map_matrix(key.p, key.q, key.n, side as u64);
    decrypt_with(image, &matrix, &keystream(key, side)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, side: usize) -> GrayImage {
        GrayImage::new(side, (0..side * side).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn identity_stages_leave_image_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 16);
        let id = cat_map_matrix(4, 7, 0, 16);
        let zero = Keystream::zeros(256);
        assert_eq!(encrypt_with(&img, &id, &zero).unwrap(), img);
        assert_eq!(decrypt_with(&img, &id, &zero).unwrap(), img);
    }

    #[test]
    fn round_trip_reference_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let key = CipherKey::reference();
        for _ in 0..5 {
            let img = random_image(&mut rng, 128);
            let c = encrypt(&img, &key).unwrap();
            assert_ne!(c, img);
            assert_eq!(decrypt(&c, &key).unwrap(), img);
        }
    }

    #[test]
    fn round_trip_many_small_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let key = CipherKey::reference();
        let ks = keystream(&key, 16).unwrap();
        let m = cat_map_matrix(key.p, key.q, key.n, 16);
        for _ in 0..1000 {
            let img = random_image(&mut rng, 16);
            let c = encrypt_with(&img, &m, &ks).unwrap();
            assert_eq!(decrypt_with(&c, &m, &ks).unwrap(), img);
        }
    }

    #[test]
    fn constant_image_histogram_is_spread() {
        let img = GrayImage::filled(128, 0);
        let c = encrypt(&img, &CipherKey::reference()).unwrap();
        let mut hist = [0usize; 256];
        for &v in c.pixels() {
            hist[v as usize] += 1;
        }
        let max = *hist.iter().max().unwrap();
        assert!(max * 20 < c.pixels().len(), "max bin {max}");
    }

    #[test]
    fn wrong_p_does_not_decrypt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let key = CipherKey::reference();
        let wrong = key.with_map(key.p + 1, key.q);
        for _ in 0..10 {
            let img = random_image(&mut rng, 64);
            let c = encrypt(&img, &key).unwrap();
            let d = decrypt(&c, &wrong).unwrap();
            let differing = d.pixels().iter().zip(img.pixels()).filter(|(a, b)| a != b).count();
            assert!(differing * 2 > img.pixels().len(), "only {differing} differ");
        }
    }

    #[test]
    fn side_one_rejected() {
        let img = GrayImage::filled(1, 3);
        assert!(encrypt(&img, &CipherKey::reference()).is_err());
    }
}
