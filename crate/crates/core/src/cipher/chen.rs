//! Chen's system and its fixed-step RK4 integrator.

use super::CipherError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChenState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl ChenState {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    fn offset(&self, h: f64, d: &ChenState) -> ChenState {
        ChenState::new(self.x + h * d.x, self.y + h * d.y, self.z + h * d.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChenParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Vector field `(a(y−x), (c−a)x − xz + cy, xy − bz)`.
#[inline]
pub fn chen_derivative(s: &ChenState, p: &ChenParams) -> ChenState {
    ChenState::new(
        p.a * (s.y - s.x),
        (p.c - p.a) * s.x - s.x * s.z + p.c * s.y,
        s.x * s.y - p.b * s.z,
    )
}

/// One classical RK4 step.
///
/// The operation order is fixed (keystream golden vectors depend on it):
/// stages at `s + (h/2)·k`, then `s + (h/6)·(k1 + 2k2 + 2k3 + k4)` per component.
pub fn chen_rk4_step(
    state: &ChenState,
    params: &ChenParams,
    h: f64,
) -> Result<ChenState, CipherError> {
    if h.is_nan() || h <= 0.0 || !state.is_finite() {
        return Err(CipherError::Divergence { step: 0, state: *state });
    }
    let half = h / 2.0;
    let k1 = chen_derivative(state, params);
    let k2 = chen_derivative(&state.offset(half, &k1), params);
    let k3 = chen_derivative(&state.offset(half, &k2), params);
    let k4 = chen_derivative(&state.offset(h, &k3), params);
    let sixth = h / 6.0;
    let next = ChenState::new(
        state.x + sixth * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        state.y + sixth * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        state.z + sixth * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z),
    );
    if !next.is_finite() {
        return Err(CipherError::Divergence { step: 0, state: next });
    }
    Ok(next)
}

/// Iterator over successive RK4 states (excluding the initial state).
pub struct ChenTrajectory {
    state: ChenState,
    params: ChenParams,
    h: f64,
    step: u64,
}

impl ChenTrajectory {
    pub fn new(initial: ChenState, params: ChenParams, h: f64) -> Self {
        Self {
            state: initial,
            params,
            h,
            step: 0,
        }
    }
}

impl Iterator for ChenTrajectory {
    type Item = Result<ChenState, CipherError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.step += 1;
        match chen_rk4_step(&self.state, &self.params, self.h) {
            Ok(s) => {
                self.state = s;
                Some(Ok(s))
            }
            Err(CipherError::Divergence { state, .. }) => Some(Err(CipherError::Divergence {
                step: self.step,
                state,
            })),
            Err(e) => Some(Err(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER: ChenParams = ChenParams {
        a: 35.0,
        b: 3.0,
        c: 28.0,
    };
    const START: ChenState = ChenState::new(-10.058, 0.368, 37.368);

    // Independent RK4 over plain arrays, used as the fine-step reference.
    fn reference_rk4(mut s: [f64; 3], p: &ChenParams, h: f64, steps: usize) -> [f64; 3] {
        let f = |v: [f64; 3]| {
            [
                p.a * (v[1] - v[0]),
                (p.c - p.a) * v[0] - v[0] * v[2] + p.c * v[1],
                v[0] * v[1] - p.b * v[2],
            ]
        };
        let add = |a: [f64; 3], b: [f64; 3], t: f64| [a[0] + t * b[0], a[1] + t * b[1], a[2] + t * b[2]];
        for _ in 0..steps {
            let k1 = f(s);
            let k2 = f(add(s, k1, h * 0.5));
            let k3 = f(add(s, k2, h * 0.5));
            let k4 = f(add(s, k3, h));
            for i in 0..3 {
                s[i] += h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
            }
        }
        s
    }

    #[test]
    fn origin_is_equilibrium() {
        let s = chen_rk4_step(&ChenState::new(0.0, 0.0, 0.0), &PAPER, 0.001).unwrap();
        assert_eq!(s, ChenState::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn derivative_at_start() {
        let d = chen_derivative(&START, &PAPER);
        assert!((d.x - 364.91).abs() < 1e-9, "{}", d.x);
    }

    #[test]
    fn single_step_matches_independent_rk4() {
        let s = chen_rk4_step(&START, &PAPER, 0.001).unwrap();
        let r = reference_rk4([START.x, START.y, START.z], &PAPER, 0.001, 1);
        assert!((s.x - r[0]).abs() < 1e-12);
        assert!((s.y - r[1]).abs() < 1e-12);
        assert!((s.z - r[2]).abs() < 1e-12);
    }

    #[test]
    fn single_step_within_local_truncation_error() {
        // One h=0.001 step differs from the true flow by ~1.8e-9 here (checked
        // against a 40-digit reference); four h/4 sub-steps are 256x closer.
        let s = chen_rk4_step(&START, &PAPER, 0.001).unwrap();
        let fine = reference_rk4([START.x, START.y, START.z], &PAPER, 0.00025, 4);
        let finer = reference_rk4([START.x, START.y, START.z], &PAPER, 0.000025, 40);
        for (c, (f, g)) in [s.x, s.y, s.z].iter().zip(fine.iter().zip(finer.iter())) {
            assert!((f - g).abs() < 1e-11);
            let gap = (c - f).abs();
            assert!(gap > 1e-10 && gap < 3e-9, "gap {gap}");
        }
    }

    #[test]
    fn divergence_reported() {
        let big = ChenState::new(1e150, 1e150, 1e150);
        assert!(matches!(
            chen_rk4_step(&big, &PAPER, 0.001),
            Err(CipherError::Divergence { .. })
        ));
        let nan = ChenState::new(f64::NAN, 0.0, 0.0);
        assert!(chen_rk4_step(&nan, &PAPER, 0.001).is_err());
    }

    #[test]
    fn trajectory_reports_step_index() {
        let mut traj = ChenTrajectory::new(ChenState::new(1e100, 1e100, 1e100), PAPER, 0.001);
        let err = traj.find_map(|r| r.err()).unwrap();
        assert!(matches!(err, CipherError::Divergence { step, .. } if step >= 1));
    }
}
