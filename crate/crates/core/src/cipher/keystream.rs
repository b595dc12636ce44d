use super::chen::ChenTrajectory;
use super::{CipherError, CipherKey};

/// Integration step for the keystream trajectory.
pub const RK4_STEP: f64 = 0.001;

/// Decimal fraction digits kept when integerizing a state component.
pub const FRACTION_SCALE: f64 = 1e14;

#[derive(Clone, PartialEq, Eq)]
pub struct Keystream(Vec<u8>);

impl std::fmt::Debug for Keystream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Keystream({} bytes)", self.0.len())
    }
}

impl Keystream {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `floor((|v| − floor(|v|)) · 1e14) mod 256`, in double precision.
#[inline]
pub fn quantize(v: f64) -> u8 {
    let a = v.abs();
    let scaled = ((a - a.floor()) * FRACTION_SCALE).floor();
    (scaled as u64 % 256) as u8
}

/// Keystream of `side²` bytes: `ceil(side²/3)` RK4 steps from the key's
/// initial state, three bytes (x, y, z) per step, truncated.
pub fn keystream(key: &CipherKey, side: usize) -> Result<Keystream, CipherError> {
    if side < 2 {
        return Err(CipherError::SideTooSmall(side));
    }
    key.validate()?;
    let len = side * side;
    let mut bytes = Vec::with_capacity(len + 2);
    let trajectory = ChenTrajectory::new(key.initial_state(), key.chen_params(), RK4_STEP);
    for state in trajectory.take(len.div_ceil(3)) {
        let s = state?;
        bytes.extend_from_slice(&[quantize(s.x), quantize(s.y), quantize(s.z)]);
    }
    bytes.truncate(len);
    Ok(Keystream(bytes))
}

/// Element-wise XOR; an involution for a fixed keystream.
pub fn xor_bytes(data: &[u8], ks: &Keystream) -> Result<Vec<u8>, CipherError> {
    if data.len() != ks.len() {
        return Err(CipherError::LengthMismatch {
            data: data.len(),
            keystream: ks.len(),
        });
    }
    Ok(data.iter().zip(ks.as_bytes()).map(|(s, k)| s ^ k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(5.0), 0);
        // 0.5 * 1e14 = 5e13, 5e13 mod 256 = 0 (5e13 = 2^13 * 6103515625)
        assert_eq!(quantize(-3.5), 0);
        // 0.25 * 1e14 = 2.5e13 = 2^12 * 6103515625; 6103515625 is odd -> 2^12 mod 256 = 0
        assert_eq!(quantize(0.25), 0);
        // 1e-14 -> floor(1.0) = 1 (approximately; guards sign handling)
        assert_eq!(quantize(-2e-14), quantize(2e-14));
    }

    #[test]
    fn length_is_side_squared() {
        let k = CipherKey::reference();
        assert_eq!(keystream(&k, 128).unwrap().len(), 16384);
        assert_eq!(keystream(&k, 32).unwrap().len(), 1024);
        assert_eq!(keystream(&k, 3).unwrap().len(), 9);
    }

    #[test]
    fn prefix_is_shared_across_sides() {
        let k = CipherKey::reference();
        let short = keystream(&k, 8).unwrap();
        let long = keystream(&k, 32).unwrap();
        assert_eq!(short.as_bytes(), &long.as_bytes()[..64]);
    }

    #[test]
    fn rejects_tiny_side() {
        assert!(matches!(
            keystream(&CipherKey::reference(), 1),
            Err(CipherError::SideTooSmall(1))
        ));
    }

    #[test]
    fn diverging_key_is_error() {
        let k = CipherKey {
            x0: 1e120,
            ..CipherKey::reference()
        };
        assert!(matches!(
            keystream(&k, 16),
            Err(CipherError::Divergence { .. })
        ));
    }

    #[test]
    fn xor_examples() {
        let ks = Keystream::from_bytes(vec![0xAB]);
        assert_eq!(xor_bytes(&[0xAB], &ks).unwrap(), vec![0x00]);
        let data: Vec<u8> = (0..=255).collect();
        assert_eq!(xor_bytes(&data, &Keystream::zeros(256)).unwrap(), data);
    }

    #[test]
    fn xor_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<u8> = (0..1000).map(|_| rng.random()).collect();
        let k = Keystream::from_bytes((0..1000).map(|_| rng.random()).collect());
        assert_eq!(xor_bytes(&xor_bytes(&s, &k).unwrap(), &k).unwrap(), s);
    }

    #[test]
    fn xor_length_mismatch() {
        assert!(matches!(
            xor_bytes(&[1, 2, 3], &Keystream::zeros(2)),
            Err(CipherError::LengthMismatch { data: 3, keystream: 2 })
        ));
    }
}
