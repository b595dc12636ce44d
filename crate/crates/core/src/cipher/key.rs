use std::fmt;
use std::str::FromStr;

use super::chen::{ChenParams, ChenState};
use super::CipherError;

/// Secret key for both cipher stages: cat-map `(p, q, n)` and the Chen
/// system's initial state and parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CipherKey {
    pub p: u32,
    pub q: u32,
    pub n: u32,
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CipherKey {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: u32,
        q: u32,
        n: u32,
        x0: f64,
        y0: f64,
        z0: f64,
        a: f64,
        b: f64,
        c: f64,
    ) -> Result<Self, CipherError> {
        let key = Self {
            p,
            q,
            n,
            x0,
            y0,
            z0,
            a,
            b,
            c,
        };
        key.validate()?;
        Ok(key)
    }

    /// The static key used for the single-key experiments:
    /// `p=4, q=7, n=5, (x0,y0,z0)=(-10.058, 0.368, 37.368), a=35, b=3, c=28`.
    pub fn reference() -> Self {
        Self {
            p: 4,
            q: 7,
            n: 5,
            x0: -10.058,
            y0: 0.368,
            z0: 37.368,
            a: 35.0,
            b: 3.0,
            c: 28.0,
        }
    }

    pub fn validate(&self) -> Result<(), CipherError> {
        if self.p == 0 || self.q == 0 {
            return Err(CipherError::InvalidKey(format!(
                "p and q must be >= 1 (got p={}, q={})",
                self.p, self.q
            )));
        }
        let reals = [self.x0, self.y0, self.z0, self.a, self.b, self.c];
        if reals.iter().any(|v| !v.is_finite()) {
            return Err(CipherError::InvalidKey(
                "Chen state and parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    /// True iff `a = 35`, `b = 3` and `20 <= c <= 28.4`.
    pub fn is_chaotic(&self) -> bool {
        self.a == 35.0 && self.b == 3.0 && (20.0..=28.4).contains(&self.c)
    }

    /// Same key with different cat-map parameters.
    pub fn with_map(&self, p: u32, q: u32) -> Self {
        Self { p, q, ..*self }
    }

    pub fn chen_params(&self) -> ChenParams {
        ChenParams {
            a: self.a,
            b: self.b,
            c: self.c,
        }
    }

    pub fn initial_state(&self) -> ChenState {
        ChenState::new(self.x0, self.y0, self.z0)
    }

    /// True when both keys generate the same keystream.
    pub fn same_keystream(&self, other: &CipherKey) -> bool {
        [self.x0, self.y0, self.z0, self.a, self.b, self.c]
            .iter()
            .zip([other.x0, other.y0, other.z0, other.a, other.b, other.c].iter())
            .all(|(l, r)| l.to_bits() == r.to_bits())
    }
}

/// `p,q,n,x0,y0,z0,a,b,c`; reals use the shortest representation that parses
/// back to the same double.
impl fmt::Display for CipherKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.p, self.q, self.n, self.x0, self.y0, self.z0, self.a, self.b, self.c
        )
    }
}

impl FromStr for CipherKey {
    type Err = CipherError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = s.split(',').map(str::trim).collect();
        if fields.len() != 9 {
            return Err(CipherError::InvalidKey(format!(
                "expected 9 comma-separated fields p,q,n,x0,y0,z0,a,b,c, got {}",
                fields.len()
            )));
        }
        let int = |i: usize, name: &str| {
            fields[i]
                .parse::<u32>()
                .map_err(|e| CipherError::InvalidKey(format!("{name}={:?}: {e}", fields[i])))
        };
        let real = |i: usize, name: &str| {
            fields[i]
                .parse::<f64>()
                .map_err(|e| CipherError::InvalidKey(format!("{name}={:?}: {e}", fields[i])))
        };
        CipherKey::new(
            int(0, "p")?,
            int(1, "q")?,
            int(2, "n")?,
            real(3, "x0")?,
            real(4, "y0")?,
            real(5, "z0")?,
            real(6, "a")?,
            real(7, "b")?,
            real(8, "c")?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_key_is_chaotic() {
        assert!(CipherKey::reference().is_chaotic());
    }

    #[test]
    fn regime_flag_boundaries() {
        let k = CipherKey::reference();
        assert!(CipherKey { c: 20.0, ..k }.is_chaotic());
        assert!(CipherKey { c: 28.4, ..k }.is_chaotic());
        assert!(!CipherKey { c: 28.5, ..k }.is_chaotic());
        assert!(!CipherKey { c: 19.9, ..k }.is_chaotic());
        assert!(!CipherKey { a: 36.0, ..k }.is_chaotic());
        assert!(!CipherKey { b: 2.0, ..k }.is_chaotic());
    }

    #[test]
    fn non_chaotic_construction_allowed() {
        let k = CipherKey::new(1, 1, 0, 1.0, 1.0, 1.0, 10.0, 8.0 / 3.0, 28.0).unwrap();
        assert!(!k.is_chaotic());
    }

    #[test]
    fn rejects_zero_p() {
        assert!(CipherKey::new(0, 1, 1, 0.0, 0.0, 0.0, 35.0, 3.0, 28.0).is_err());
    }

    #[test]
    fn display_parse_round_trip() {
        let k = CipherKey::reference();
        let text = k.to_string();
        assert_eq!(text, "4,7,5,-10.058,0.368,37.368,35.0,3.0,28.0");
        assert_eq!(text.parse::<CipherKey>().unwrap(), k);
        let odd = CipherKey {
            x0: 0.1 + 0.2,
            ..k
        };
        assert_eq!(odd.to_string().parse::<CipherKey>().unwrap(), odd);
    }

    #[test]
    fn parse_errors_name_field() {
        let err = "4,7,x,0,0,0,35,3,28".parse::<CipherKey>().unwrap_err();
        assert!(err.to_string().contains("n="));
        assert!("1,2,3".parse::<CipherKey>().is_err());
    }
}
