//! Spherical perturbations of a reference pmf.
//!
//! A nearby pmf is written as `p + eps * (k ∘ sqrt(p))` with `k ⊥ sqrt(p)`.
//! In these coordinates KL divergence is locally `eps^2 ||k||^2 / 2`, so
//! perturbation directions can be compared with plain Euclidean geometry.

use crate::error::{ObfuscationError, Result};
use crate::linalg::{dot, norm};
use crate::prob::{validate_pmf, Pmf, NEGATIVE_SLACK};

/// Orthogonality and normalization tolerance for directions.
pub const DIRECTION_TOLERANCE: f64 = 1e-10;
/// Tolerance of the marginal-preservation check.
pub const C2_TOLERANCE: f64 = 1e-10;
/// Targets closer than this to the reference give no direction.
const ZERO_DIRECTION: f64 = 1e-14;

/// A unit-norm perturbation direction `k` orthogonal to `sqrt(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDirection {
    k: Vec<f64>,
    reference: Pmf,
}

impl PerturbationDirection {
    /// Normalizes `k` and checks `k · sqrt(p) = 0`.
    pub fn new(reference: &Pmf, k: Vec<f64>) -> Result<Self> {
        reference.require_interior()?;
        if k.len() != reference.len() {
            return Err(ObfuscationError::DimensionMismatch {
                left: reference.len(),
                right: k.len(),
            });
        }
        let length = norm(&k);
        if !length.is_finite() || length <= ZERO_DIRECTION {
            return Err(ObfuscationError::ZeroDirection);
        }
        let k: Vec<f64> = k.into_iter().map(|v| v / length).collect();
        let violation = dot(&k, &reference.sqrt()).abs();
        if violation > DIRECTION_TOLERANCE {
            return Err(ObfuscationError::NotOrthogonal { violation });
        }
        Ok(PerturbationDirection {
            k,
            reference: reference.clone(),
        })
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn reference(&self) -> &Pmf {
        &self.reference
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.k)
    }

    /// `k · sqrt(p)`; zero up to rounding for every valid direction.
    pub fn orthogonality_violation(&self) -> f64 {
        dot(&self.k, &self.reference.sqrt()).abs()
    }

    /// The opposite direction `-k`.
    pub fn negated(&self) -> Self {
        PerturbationDirection {
            k: self.k.iter().map(|v| -v).collect(),
            reference: self.reference.clone(),
        }
    }

    /// Additive perturbation per unit epsilon, `k ∘ sqrt(p)`.
    pub fn additive(&self) -> Vec<f64> {
        self.k
            .iter()
            .zip(self.reference.values())
            .map(|(k, p)| k * p.sqrt())
            .collect()
    }
}

/// Unnormalized spherical perturbation `(r - p) / sqrt(p)` of `r` from `p`.
pub fn spherical_perturbation(p: &Pmf, r: &Pmf) -> Result<Vec<f64>> {
    p.require_interior()?;
    if p.len() != r.len() {
        return Err(ObfuscationError::DimensionMismatch {
            left: p.len(),
            right: r.len(),
        });
    }
    Ok(p.values()
        .iter()
        .zip(r.values())
        .map(|(pi, ri)| (ri - pi) / pi.sqrt())
        .collect())
}

/// Unit direction pointing from `p` toward `r`.
pub fn direction_from_target(p: &Pmf, r: &Pmf) -> Result<PerturbationDirection> {
    let raw = spherical_perturbation(p, r)?;
    let gap = p
        .values()
        .iter()
        .zip(r.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap <= ZERO_DIRECTION {
        return Err(ObfuscationError::ZeroDirection);
    }
    PerturbationDirection::new(p, raw)
}

/// Largest `eps` keeping `p + eps * (k ∘ sqrt(p))` entrywise non-negative.
///
/// Infinite when no coordinate of `k` is negative.
pub fn max_feasible_epsilon(p: &Pmf, k: &PerturbationDirection) -> f64 {
    max_feasible_epsilon_raw(p, k.k())
}

pub(crate) fn max_feasible_epsilon_raw(p: &Pmf, k: &[f64]) -> f64 {
    p.values()
        .iter()
        .zip(k)
        .filter(|(_, &kx)| kx < 0.0)
        .map(|(&px, &kx)| px.sqrt() / -kx)
        .fold(f64::INFINITY, f64::min)
}

/// `p + eps * (k ∘ sqrt(p))`.
pub fn perturb(p: &Pmf, k: &PerturbationDirection, epsilon: f64) -> Result<Pmf> {
    if p.len() != k.len() {
        return Err(ObfuscationError::DimensionMismatch {
            left: p.len(),
            right: k.len(),
        });
    }
    perturb_raw(p, k.k(), epsilon)
}

pub(crate) fn perturb_raw(p: &Pmf, k: &[f64], epsilon: f64) -> Result<Pmf> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(ObfuscationError::InvalidEpsilon(epsilon));
    }
    let mut out = Vec::with_capacity(p.len());
    for (&px, &kx) in p.values().iter().zip(k) {
        let v = px + epsilon * kx * px.sqrt();
        if v < -NEGATIVE_SLACK {
            return Err(ObfuscationError::EpsilonTooLarge {
                epsilon,
                max: max_feasible_epsilon_raw(p, k),
            });
        }
        out.push(v.max(0.0));
    }
    Ok(Pmf::from_raw(out))
}

/// Quadratic KL approximation `eps^2 ||k||^2 / 2`.
pub fn local_kl(k: &PerturbationDirection, epsilon: f64) -> f64 {
    0.5 * epsilon * epsilon * k.norm().powi(2)
}

/// Conditionals `p_{X|Z=z} = p_X + eps * (k_z ∘ sqrt(p_X))` weighted by `p_Z`.
///
/// Construction checks the weights and that every conditional is a pmf;
/// marginal preservation is reported by [`check_c2`] rather than enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedFamily {
    reference: Pmf,
    epsilon: f64,
    weights: Pmf,
    directions: Vec<PerturbationDirection>,
}

impl PerturbedFamily {
    pub fn new(
        reference: &Pmf,
        epsilon: f64,
        entries: Vec<(f64, PerturbationDirection)>,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(ObfuscationError::Empty);
        }
        let (weights, directions): (Vec<f64>, Vec<PerturbationDirection>) =
            entries.into_iter().unzip();
        let weights = validate_pmf(&weights)?;
        for d in &directions {
            perturb(reference, d, epsilon)?;
        }
        Ok(PerturbedFamily {
            reference: reference.clone(),
            epsilon,
            weights,
            directions,
        })
    }

    pub fn reference(&self) -> &Pmf {
        &self.reference
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn weights(&self) -> &Pmf {
        &self.weights
    }

    pub fn directions(&self) -> &[PerturbationDirection] {
        &self.directions
    }

    /// The realized conditionals, one per entry.
    pub fn conditionals(&self) -> Vec<Pmf> {
        self.directions
            .iter()
            .map(|d| perturb(&self.reference, d, self.epsilon).expect("checked at construction"))
            .collect()
    }

    /// `sum_z p_Z(z) p_{X|Z=z}`.
    pub fn mixture(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.reference.len()];
        for (w, c) in self.weights.values().iter().zip(self.conditionals()) {
            for (o, v) in out.iter_mut().zip(c.values()) {
                *o += w * v;
            }
        }
        out
    }
}

/// Outcome of the marginal-preservation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2Check {
    pub holds: bool,
    pub max_violation: f64,
}

/// Checks `sum_z p_Z(z) k_z(x) sqrt(p_X(x)) = 0` for every `x`.
pub fn check_c2(family: &PerturbedFamily) -> C2Check {
    let sqrt_p = family.reference.sqrt();
    let mut sums = vec![0.0; sqrt_p.len()];
    for (w, d) in family.weights.values().iter().zip(&family.directions) {
        for ((s, k), sp) in sums.iter_mut().zip(d.k()).zip(&sqrt_p) {
            *s += w * k * sp;
        }
    }
    let max_violation = sums.iter().map(|v| v.abs()).fold(0.0, f64::max);
    C2Check {
        holds: max_violation <= C2_TOLERANCE,
        max_violation,
    }
}
