//! Feasibility analysis and synthesis of perfect-obfuscation release channels.
//!
//! A direction `k` in `Null(B_{S,X})` moves `p_{X|Z=z}` without moving
//! `p_{S|Z=z}`, so any release built from such directions is exactly
//! independent of `S`. Among those directions the utility gain
//! `||B_{U,X} k||^2` is maximized by the top right singular vectors of
//! `B_{U,X}` restricted to the null space.

use nalgebra::DMatrix;

use crate::dtm::{build_channel_dtm, pushforward_raw, DivergenceTransferMatrix};
use crate::error::{ObfuscationError, Result};
use crate::geometry::{
    max_feasible_epsilon, perturb, PerturbationDirection, C2_TOLERANCE,
};
use crate::linalg::{fix_sign, norm, right_singular_system, thin_svd};
use crate::prob::{max_abs_diff, JointUSX, Kernel, Pmf, MASS_TOLERANCE};

/// Relative threshold below which a singular value counts as zero.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// `epsilon = auto` uses this fraction of the feasibility supremum.
pub const AUTO_EPSILON_FACTOR: f64 = 0.9;
/// Relative slack on the epsilon bound, absorbing rounding in the directions.
pub const EPSILON_BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Dimension of `Null(B_{S,X})`.
    pub null_dim: usize,
    /// Numerical rank of `B_{S,X}`.
    pub secret_rank: usize,
    /// Singular values of `B_{U,X}` restricted to the null space, descending.
    pub utility_sigmas: Vec<f64>,
    pub tolerance_used: f64,
}

impl FeasibilityReport {
    /// Largest achievable `||B_{U,X} k||^2` over unit null-space directions.
    pub fn top_gain(&self) -> f64 {
        self.utility_sigmas.first().map_or(0.0, |s| s * s)
    }
}

struct NullSpaceAnalysis {
    report: FeasibilityReport,
    basis: DMatrix<f64>,
    b_u: DivergenceTransferMatrix,
}

fn analyze(joint: &JointUSX, tol: f64) -> NullSpaceAnalysis {
    let p_x = joint.p_x();
    let b_s = build_channel_dtm(joint.w_s(), p_x, joint.p_s()).expect("marginals of a valid joint");
    let b_u = build_channel_dtm(joint.w_u(), p_x, joint.p_u()).expect("marginals of a valid joint");

    let (sigmas, right) = right_singular_system(b_s.matrix());
    let threshold = tol * sigmas[0];
    let null_cols: Vec<usize> = (0..sigmas.len()).filter(|&i| sigmas[i] <= threshold).collect();
    let secret_rank = sigmas.len() - null_cols.len();
    let mut basis = DMatrix::zeros(p_x.len(), null_cols.len());
    for (dst, &src) in null_cols.iter().enumerate() {
        basis.set_column(dst, &right.column(src));
    }

    let utility_sigmas = if null_cols.is_empty() {
        Vec::new()
    } else {
        thin_svd(&(b_u.matrix() * &basis)).sigmas
    };
    let feasible = utility_sigmas.first().is_some_and(|&s| s > tol);
    NullSpaceAnalysis {
        report: FeasibilityReport {
            feasible,
            null_dim: null_cols.len(),
            secret_rank,
            utility_sigmas,
            tolerance_used: tol,
        },
        basis,
        b_u,
    }
}

/// Decides whether some release `Z` can be independent of `S` yet
/// informative about `U`: true iff a direction in `Null(B_{S,X})` has a
/// non-zero image under `B_{U,X}`.
pub fn feasibility(joint: &JointUSX, tol: f64) -> FeasibilityReport {
    analyze(joint, tol).report
}

/// A null-space direction with its utility gain `||B_{U,X} k||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedDirection {
    pub direction: PerturbationDirection,
    pub gain: f64,
}

/// Top-`m` utility directions inside `Null(B_{S,X})`, gains descending.
pub fn optimal_directions(joint: &JointUSX, m: usize, tol: f64) -> Result<Vec<RankedDirection>> {
    let analysis = analyze(joint, tol);
    select_directions(joint, &analysis, m)
}

fn select_directions(
    joint: &JointUSX,
    analysis: &NullSpaceAnalysis,
    m: usize,
) -> Result<Vec<RankedDirection>> {
    if !analysis.report.feasible {
        return Err(ObfuscationError::InfeasibleInstance);
    }
    if m == 0 {
        return Err(ObfuscationError::ZeroModes);
    }
    let d = analysis.report.null_dim;
    if m > d {
        return Err(ObfuscationError::RequestedTooManyDirections {
            requested: m,
            available: d,
        });
    }
    let restricted = analysis.b_u.matrix() * &analysis.basis;
    let (sigmas, right) = right_singular_system(&restricted);
    (0..m)
        .map(|i| {
            let mut k: Vec<f64> = (&analysis.basis * right.column(i)).iter().copied().collect();
            let length = norm(&k);
            k.iter_mut().for_each(|v| *v /= length);
            fix_sign(&mut k);
            let direction = PerturbationDirection::new(joint.p_x(), k)?;
            Ok(RankedDirection {
                direction,
                gain: sigmas[i] * sigmas[i],
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonChoice {
    /// [`AUTO_EPSILON_FACTOR`] times the largest feasible value.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub epsilon: EpsilonChoice,
    /// Number of null-space directions; the release has `2 * modes` symbols.
    pub modes: usize,
    /// Optional bound `R` on `I(X;Z)`, enforced in its local form.
    pub rate: Option<f64>,
    pub tolerance: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            epsilon: EpsilonChoice::Auto,
            modes: 1,
            rate: None,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// How the mechanism's epsilon was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonRule {
    Fixed,
    Auto { factor: f64, bound: f64 },
    /// Shrunk to `sqrt(2 R)` to honour a rate limit.
    RateLimited { rate: f64 },
}

/// Local (second-order) predictions of the three information measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMetrics {
    pub i_xz: f64,
    pub i_uz: f64,
    pub i_sz: f64,
}

/// A release channel `P(Z|X)` built from antisymmetric direction pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObfuscationMechanism {
    p_x: Pmf,
    p_z: Pmf,
    x_given_z: Kernel,
    z_given_x: Kernel,
    epsilon: f64,
    directions: Vec<PerturbationDirection>,
    gains: Vec<f64>,
    predicted: LocalMetrics,
    rule: EpsilonRule,
    tolerance: f64,
}

impl ObfuscationMechanism {
    /// Uniform `p_Z` over the pairs `(+k_i, -k_i)`, one shared epsilon.
    pub fn from_directions(
        p_x: &Pmf,
        modes: &[RankedDirection],
        epsilon: f64,
        rule: EpsilonRule,
        tolerance: f64,
    ) -> Result<Self> {
        if modes.is_empty() {
            return Err(ObfuscationError::ZeroModes);
        }
        let release = 2 * modes.len();
        check_cardinality(release, p_x.len())?;
        let directions: Vec<PerturbationDirection> = modes
            .iter()
            .flat_map(|m| [m.direction.clone(), m.direction.negated()])
            .collect();
        let gains: Vec<f64> = modes.iter().map(|m| m.gain).collect();
        let p_z = Pmf::uniform(release);
        let mean_gain = gains.iter().sum::<f64>() / gains.len() as f64;
        let predicted = LocalMetrics {
            i_xz: 0.5 * epsilon * epsilon,
            i_uz: 0.5 * epsilon * epsilon * mean_gain,
            i_sz: 0.0,
        };
        Self::assemble(p_x, p_z, epsilon, directions, gains, predicted, rule, tolerance)
    }

    /// Rebuilds a mechanism from stored parts (as read back from a file).
    /// `directions` has one entry per release symbol.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        p_x: &Pmf,
        p_z: Pmf,
        epsilon: f64,
        directions: Vec<PerturbationDirection>,
        gains: Vec<f64>,
        predicted: LocalMetrics,
        rule: EpsilonRule,
        tolerance: f64,
    ) -> Result<Self> {
        if directions.len() != p_z.len() {
            return Err(ObfuscationError::DimensionMismatch {
                left: p_z.len(),
                right: directions.len(),
            });
        }
        check_cardinality(p_z.len(), p_x.len())?;
        Self::assemble(p_x, p_z, epsilon, directions, gains, predicted, rule, tolerance)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        p_x: &Pmf,
        p_z: Pmf,
        epsilon: f64,
        directions: Vec<PerturbationDirection>,
        gains: Vec<f64>,
        predicted: LocalMetrics,
        rule: EpsilonRule,
        tolerance: f64,
    ) -> Result<Self> {
        let nx = p_x.len();
        let mut x_given_z = DMatrix::zeros(nx, p_z.len());
        let mut balance = vec![0.0; nx];
        let sqrt_p = p_x.sqrt();
        for (z, d) in directions.iter().enumerate() {
            if d.len() != nx {
                return Err(ObfuscationError::DimensionMismatch {
                    left: nx,
                    right: d.len(),
                });
            }
            let cond = perturb(p_x, d, epsilon)?;
            for x in 0..nx {
                x_given_z[(x, z)] = cond[x];
                balance[x] += p_z[z] * d.k()[x] * sqrt_p[x];
            }
        }
        let violation = balance.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if violation > C2_TOLERANCE {
            return Err(ObfuscationError::MarginalMismatch {
                deviation: violation,
            });
        }
        let x_given_z = Kernel::new(x_given_z)?;
        let z_given_x = bayes_invert(&p_z, &x_given_z, p_x)?;
        Ok(ObfuscationMechanism {
            p_x: p_x.clone(),
            p_z,
            x_given_z,
            z_given_x,
            epsilon,
            directions,
            gains,
            predicted,
            rule,
            tolerance,
        })
    }

    pub fn p_x(&self) -> &Pmf {
        &self.p_x
    }

    pub fn p_z(&self) -> &Pmf {
        &self.p_z
    }

    /// `P(X|Z)`, shape `|X| x |Z|`.
    pub fn x_given_z(&self) -> &Kernel {
        &self.x_given_z
    }

    /// The release map `P(Z|X)`, shape `|Z| x |X|`.
    pub fn z_given_x(&self) -> &Kernel {
        &self.z_given_x
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// One direction per release symbol.
    pub fn directions(&self) -> &[PerturbationDirection] {
        &self.directions
    }

    /// Utility gain of each selected mode.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn predicted(&self) -> LocalMetrics {
        self.predicted
    }

    pub fn rule(&self) -> EpsilonRule {
        self.rule
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn release_size(&self) -> usize {
        self.p_z.len()
    }

    /// Unit-epsilon additive perturbations `k_z ∘ sqrt(p_X)`, shape `|X| x |Z|`.
    pub fn additive_perturbations(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.p_x.len(), self.p_z.len());
        for (z, d) in self.directions.iter().enumerate() {
            out.set_column(z, &nalgebra::DVector::from_vec(d.additive()));
        }
        out
    }

    /// Largest violation of `sum_z p_Z(z) k_z ∘ sqrt(p_X) = 0`.
    pub fn c2_violation(&self) -> f64 {
        let h = self.additive_perturbations() * self.p_z.to_dvector();
        h.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Largest `|k_z · sqrt(p_X)|` over the directions.
    pub fn c1_violation(&self) -> f64 {
        self.directions
            .iter()
            .map(|d| d.orthogonality_violation())
            .fold(0.0, f64::max)
    }

    /// Largest `||B_{S,X} k_z||` over the directions.
    pub fn null_space_violation(&self, joint: &JointUSX) -> Result<f64> {
        let b_s = build_channel_dtm(joint.w_s(), joint.p_x(), joint.p_s())?;
        self.directions.iter().try_fold(0.0, |acc: f64, d| {
            Ok(acc.max(norm(&pushforward_raw(&b_s, d.k())?)))
        })
    }
}

fn check_cardinality(release: usize, nx: usize) -> Result<()> {
    if release > nx + 2 {
        return Err(ObfuscationError::CardinalityBound {
            release,
            bound: nx + 2,
        });
    }
    Ok(())
}

/// Largest epsilon keeping every `p_X ± epsilon k_i ∘ sqrt(p_X)` a pmf.
pub fn epsilon_bound(p_x: &Pmf, modes: &[RankedDirection]) -> f64 {
    modes
        .iter()
        .flat_map(|m| [m.direction.clone(), m.direction.negated()])
        .map(|d| max_feasible_epsilon(p_x, &d))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn exceeds_bound(eps: f64, bound: f64) -> bool {
    eps > bound * (1.0 + EPSILON_BOUND_SLACK)
}

/// Designs the release channel maximizing local utility under perfect obfuscation.
pub fn design_mechanism(joint: &JointUSX, options: &DesignOptions) -> Result<ObfuscationMechanism> {
    let analysis = analyze(joint, options.tolerance);
    let modes = select_directions(joint, &analysis, options.modes)?;
    check_cardinality(2 * modes.len(), joint.p_x().len())?;

    let bound = epsilon_bound(joint.p_x(), &modes);
    let (mut epsilon, mut rule) = match options.epsilon {
        EpsilonChoice::Auto => (
            AUTO_EPSILON_FACTOR * bound,
            EpsilonRule::Auto {
                factor: AUTO_EPSILON_FACTOR,
                bound,
            },
        ),
        EpsilonChoice::Fixed(eps) => {
            if !eps.is_finite() || eps < 0.0 {
                return Err(ObfuscationError::InvalidEpsilon(eps));
            }
            if exceeds_bound(eps, bound) {
                return Err(ObfuscationError::EpsilonTooLarge {
                    epsilon: eps,
                    max: bound,
                });
            }
            (eps, EpsilonRule::Fixed)
        }
    };
    if let Some(rate) = options.rate {
        if !rate.is_finite() || rate < 0.0 {
            return Err(ObfuscationError::InvalidEpsilon(rate));
        }
        // sum_z p_Z ||k_z||^2 = 1 must not exceed 2R / eps^2
        if epsilon * epsilon > 2.0 * rate {
            epsilon = (2.0 * rate).sqrt();
            rule = EpsilonRule::RateLimited { rate };
        }
    }
    ObfuscationMechanism::from_directions(joint.p_x(), &modes, epsilon, rule, options.tolerance)
}

/// `P(Z=z|X=x) = P(X=x|Z=z) p_Z(z) / p_X(x)`.
pub fn bayes_invert(p_z: &Pmf, x_given_z: &Kernel, p_x: &Pmf) -> Result<Kernel> {
    let mixture = x_given_z.push(p_z)?;
    if mixture.len() != p_x.len() {
        return Err(ObfuscationError::DimensionMismatch {
            left: p_x.len(),
            right: mixture.len(),
        });
    }
    let deviation = max_abs_diff(&mixture, p_x.values());
    if deviation > MASS_TOLERANCE {
        return Err(ObfuscationError::MarginalMismatch { deviation });
    }
    p_x.require_interior()?;
    let m = x_given_z.matrix();
    let inverse = DMatrix::from_fn(p_z.len(), p_x.len(), |z, x| m[(x, z)] * p_z[z] / p_x[x]);
    Kernel::new(inverse)
}
