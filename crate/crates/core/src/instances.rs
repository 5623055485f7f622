//! Small hand-specified instances used in tests, the CLI data files, and the demo.

use crate::prob::JointUSX;

/// `S`, `N` independent fair bits, `X = 2S + N`, `U = N`.
///
/// Releasing `N` reveals the utility bit while staying independent of `S`.
pub fn independent_bits() -> JointUSX {
    JointUSX::from_fn(2, 2, 4, |u, s, x| if x == 2 * s + u { 0.25 } else { 0.0 })
        .expect("valid tensor")
}

/// Two-bit family: `X = (A, B)`, `S` is `A` through a binary symmetric channel
/// with crossover `flip_s`, `U` is `B` through one with crossover `flip_u`,
/// and `A`, `B` agree with probability `(1 + correlation) / 2`.
pub fn noisy_bits(correlation: f64, flip_s: f64, flip_u: f64) -> JointUSX {
    JointUSX::from_fn(2, 2, 4, |u, s, x| {
        let a = x / 2;
        let b = x % 2;
        let p_ab = if a == b {
            (1.0 + correlation) / 4.0
        } else {
            (1.0 - correlation) / 4.0
        };
        let p_s = if s == a { 1.0 - flip_s } else { flip_s };
        let p_u = if u == b { 1.0 - flip_u } else { flip_u };
        p_ab * p_s * p_u
    })
    .expect("parameters in range")
}

/// `S = X` with `X` uniform and `U` a noisy copy of `X mod 2`.
pub fn secret_is_observation(nx: usize) -> JointUSX {
    JointUSX::from_fn(2, nx, nx, |u, s, x| {
        if s != x {
            0.0
        } else if u == x % 2 {
            0.8 / nx as f64
        } else {
            0.2 / nx as f64
        }
    })
    .expect("valid tensor")
}

/// `U = S`, both equal to `X mod 2`, with `X` uniform on `nx` symbols.
pub fn utility_is_secret(nx: usize) -> JointUSX {
    JointUSX::from_fn(2, 2, nx, |u, s, x| {
        if u == s && s == x % 2 {
            1.0 / nx as f64
        } else {
            0.0
        }
    })
    .expect("valid tensor")
}
