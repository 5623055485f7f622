//! Exact audits of release mechanisms, local-approximation sweeps, and
//! brute-force oracles.

use nalgebra::DMatrix;

use crate::designer::{epsilon_bound, exceeds_bound, optimal_directions, EpsilonRule, ObfuscationMechanism, RankedDirection};
use crate::dtm::{build_channel_dtm, build_dtm, frobenius_mi, pushforward_raw};
use crate::error::{ObfuscationError, Result};
use crate::prob::{compose_markov, mutual_information, JointUSX, Kernel, Pmf};

/// Largest `|X|` accepted by [`brute_force_feasibility`].
pub const ORACLE_MAX_OBSERVATION: usize = 8;
/// Rank thresholds swept by the oracle.
pub const ORACLE_TOLERANCES: [f64; 3] = [1e-6, 1e-9, 1e-12];

/// One value per information measure, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InformationTriple {
    pub xz: f64,
    pub uz: f64,
    pub sz: f64,
}

impl InformationTriple {
    fn map(self, f: impl Fn(f64) -> f64) -> Self {
        InformationTriple {
            xz: f(self.xz),
            uz: f(self.uz),
            sz: f(self.sz),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.xz, self.uz, self.sz]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditResult {
    pub epsilon: f64,
    /// Mutual informations of the composed joints.
    pub exact: InformationTriple,
    /// `eps^2 / 2 * sum_z p_Z(z) ||B k_z||^2` with `B` the identity, `B_{U,X}`, `B_{S,X}`.
    pub local: InformationTriple,
    /// `(||B_{YZ}||_F^2 - 1) / 2` of each composed joint.
    pub frobenius: InformationTriple,
    /// `|exact - local|`, evaluated as a remainder series (see [`audit`]).
    pub abs_errors: InformationTriple,
    /// `abs_errors / eps^2`; zero when `eps = 0`.
    pub ratios_to_eps2: InformationTriple,
}

/// Audits a mechanism against the joint it was designed for.
///
/// The error of the local formula is not obtained by subtracting two nearly
/// equal numbers. Writing `t = eps * (W k_z ∘ sqrt(p_X))(y) / p_Y(y)`, the
/// exact information is `sum p_Y p_Z phi(t)` with
/// `phi(t) = (1+t) ln(1+t) - t`, the local one is `sum p_Y p_Z t^2 / 2`, and
/// the error is the tail `sum p_Y p_Z (phi(t) - t^2/2)`, summed directly.
pub fn audit(joint: &JointUSX, mech: &ObfuscationMechanism) -> Result<AuditResult> {
    let composed = compose_markov(joint, mech.p_z(), mech.x_given_z())?;
    let exact = InformationTriple {
        xz: mutual_information(&composed.xz),
        uz: mutual_information(&composed.uz),
        sz: mutual_information(&composed.sz),
    };
    let frobenius = InformationTriple {
        xz: frobenius_mi(&build_dtm(&composed.xz)?),
        uz: frobenius_mi(&build_dtm(&composed.uz)?),
        sz: frobenius_mi(&build_dtm(&composed.sz)?),
    };

    let eps = mech.epsilon();
    let p_x = joint.p_x();
    let b_u = build_channel_dtm(joint.w_u(), p_x, joint.p_u())?;
    let b_s = build_channel_dtm(joint.w_s(), p_x, joint.p_s())?;
    let half_eps2 = 0.5 * eps * eps;
    let mut local = InformationTriple::default();
    for (z, d) in mech.directions().iter().enumerate() {
        let pz = mech.p_z()[z];
        local.xz += pz * d.k().iter().map(|v| v * v).sum::<f64>();
        local.uz += pz * sq_norm(&pushforward_raw(&b_u, d.k())?);
        local.sz += pz * sq_norm(&pushforward_raw(&b_s, d.k())?);
    }
    let local = local.map(|v| half_eps2 * v);

    let additive = mech.additive_perturbations();
    let identity = Kernel::identity(p_x.len());
    let abs_errors = InformationTriple {
        xz: remainder(&identity, p_x, mech.p_z(), &additive, eps).abs(),
        uz: remainder(joint.w_u(), joint.p_u(), mech.p_z(), &additive, eps).abs(),
        sz: remainder(joint.w_s(), joint.p_s(), mech.p_z(), &additive, eps).abs(),
    };
    let ratios_to_eps2 = if eps > 0.0 {
        abs_errors.map(|v| v / (eps * eps))
    } else {
        InformationTriple::default()
    };
    Ok(AuditResult {
        epsilon: eps,
        exact,
        local,
        frobenius,
        abs_errors,
        ratios_to_eps2,
    })
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `sum_{y,z} p_Y(y) p_Z(z) (phi(t) - t^2/2)` for `Y = W X`.
fn remainder(w: &Kernel, p_y: &Pmf, p_z: &Pmf, additive: &DMatrix<f64>, eps: f64) -> f64 {
    let moved = w.matrix() * additive;
    let mut total = 0.0;
    for z in 0..p_z.len() {
        for y in 0..p_y.len() {
            if p_y[y] > 0.0 {
                let t = eps * moved[(y, z)] / p_y[y];
                total += p_y[y] * p_z[z] * phi_tail(t);
            }
        }
    }
    total
}

/// `(1+t) ln(1+t) - t - t^2/2`, defined for `t >= -1`.
pub fn phi_tail(t: f64) -> f64 {
    if t.abs() <= 0.5 {
        // sum_{n>=3} (-t)^n / (n (n-1))
        let mut power = -t * t * t;
        let mut total = 0.0;
        for n in 3..400u32 {
            let term = power / f64::from(n * (n - 1));
            total += term;
            if term.abs() <= 1e-18 * total.abs() || term == 0.0 {
                break;
            }
            power *= -t;
        }
        total
    } else if t <= -1.0 {
        0.5
    } else {
        (1.0 + t) * t.ln_1p() - t - 0.5 * t * t
    }
}

/// One row of an epsilon sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub exact: InformationTriple,
    pub local: InformationTriple,
    pub ratios_to_eps2: InformationTriple,
}

impl From<&AuditResult> for SweepRow {
    fn from(a: &AuditResult) -> Self {
        SweepRow {
            epsilon: a.epsilon,
            exact: a.exact,
            local: a.local,
            ratios_to_eps2: a.ratios_to_eps2,
        }
    }
}

/// Audits the mechanism built from fixed `modes` at a single `eps`.
pub fn sweep_point(
    joint: &JointUSX,
    modes: &[RankedDirection],
    eps: f64,
    tol: f64,
) -> Result<SweepRow> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(ObfuscationError::InvalidEpsilon(eps));
    }
    let bound = epsilon_bound(joint.p_x(), modes);
    if exceeds_bound(eps, bound) {
        return Err(ObfuscationError::EpsilonTooLarge { epsilon: eps, max: bound });
    }
    let mech = ObfuscationMechanism::from_directions(joint.p_x(), modes, eps, EpsilonRule::Fixed, tol)?;
    Ok(SweepRow::from(&audit(joint, &mech)?))
}

/// Grid sorted into strictly decreasing order, duplicates removed.
pub fn normalized_grid(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(|a, b| b.total_cmp(a));
    g.dedup();
    g
}

/// Audits the top-`m` design at every grid point, directions held fixed.
/// Rows come out with epsilon strictly decreasing.
pub fn epsilon_sweep(joint: &JointUSX, m: usize, grid: &[f64], tol: f64) -> Result<Vec<SweepRow>> {
    let grid = normalized_grid(grid);
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let modes = optimal_directions(joint, m, tol)?;
    grid.iter().map(|&eps| sweep_point(joint, &modes, eps, tol)).collect()
}

/// Verdict of the rank-based oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleVerdict {
    pub feasible: bool,
    /// The tolerances in [`ORACLE_TOLERANCES`] disagreed.
    pub flagged: bool,
    pub per_tolerance: [bool; 3],
}

/// Feasibility by rank comparison: some `k` with `W_S diag(sqrt p_X) k = 0`
/// and `W_U diag(sqrt p_X) k != 0` exists iff stacking the utility rows onto
/// the secret rows raises the rank.
pub fn brute_force_feasibility(joint: &JointUSX) -> Result<OracleVerdict> {
    let (nu, ns, nx) = joint.sizes();
    if nx > ORACLE_MAX_OBSERVATION {
        return Err(ObfuscationError::OracleScaleExceeded {
            size: nx,
            limit: ORACLE_MAX_OBSERVATION,
        });
    }
    let root: Vec<f64> = joint.p_x().values().iter().map(|p| p.sqrt()).collect();
    let secret: Vec<Vec<f64>> = (0..ns)
        .map(|s| (0..nx).map(|x| joint.w_s().matrix()[(s, x)] * root[x]).collect())
        .collect();
    let mut stacked = secret.clone();
    stacked.extend((0..nu).map(|u| (0..nx).map(|x| joint.w_u().matrix()[(u, x)] * root[x]).collect()));

    let mut per_tolerance = [false; 3];
    for (slot, &tol) in per_tolerance.iter_mut().zip(&ORACLE_TOLERANCES) {
        *slot = gaussian_rank(&stacked, tol) > gaussian_rank(&secret, tol);
    }
    let votes = per_tolerance.iter().filter(|&&v| v).count();
    Ok(OracleVerdict {
        feasible: votes >= 2,
        flagged: votes != 0 && votes != 3,
        per_tolerance,
    })
}

/// Row-echelon rank with full pivoting; pivots below `tol * max|a|` count as zero.
pub fn gaussian_rank(rows: &[Vec<f64>], tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let n_rows = a.len();
    if n_rows == 0 {
        return 0;
    }
    let n_cols = a[0].len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let threshold = tol * scale;
    let mut rank = 0;
    let mut cols: Vec<usize> = (0..n_cols).collect();
    while rank < n_rows && rank < n_cols {
        let mut best = (rank, rank, 0.0f64);
        for r in rank..n_rows {
            for (ci, &c) in cols.iter().enumerate().skip(rank) {
                if a[r][c].abs() > best.2 {
                    best = (r, ci, a[r][c].abs());
                }
            }
        }
        if best.2 <= threshold {
            break;
        }
        a.swap(rank, best.0);
        cols.swap(rank, best.1);
        let pc = cols[rank];
        let pivot = a[rank][pc];
        for r in rank + 1..n_rows {
            let factor = a[r][pc] / pivot;
            if factor != 0.0 {
                for &c in &cols[rank..] {
                    a[r][c] -= factor * a[rank][c];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// The classical weak-independence test: are the columns of `P(S|X)`
/// linearly dependent?
pub fn columns_dependent(w_s: &Kernel, tol: f64) -> bool {
    let m = w_s.matrix();
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
    gaussian_rank(&rows, tol) < m.ncols()
}

/// The same `(S, X)` law with `U := X`.
pub fn with_utility_as_observation(joint: &JointUSX) -> JointUSX {
    let (_, ns, nx) = joint.sizes();
    let p_sx = joint.joint_sx();
    JointUSX::from_fn(nx, ns, nx, |u, s, x| if u == x { p_sx.matrix()[(s, x)] } else { 0.0 })
        .expect("derived from a valid joint")
}

/// Seeded random instances.
pub mod random {
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    use crate::geometry::PerturbationDirection;
    use crate::prob::{JointPair, JointUSX, Pmf};

    pub fn seeded(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Symmetric Dirichlet(1) sample of length `n`.
    pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
        let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        draws.into_iter().map(|d| d / total).collect()
    }

    pub fn pmf<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Pmf {
        loop {
            if let Ok(p) = Pmf::new(dirichlet(rng, n)) {
                if p.is_interior() {
                    return p;
                }
            }
        }
    }

    /// Dirichlet(1) over all `rows * cols` cells, rejecting zero marginals.
    pub fn joint_pair<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> JointPair {
        loop {
            let cells = dirichlet(rng, rows * cols);
            let m = DMatrix::from_row_slice(rows, cols, &cells);
            if let Ok(j) = JointPair::new(m) {
                if j.p_row().is_interior() && j.p_col().is_interior() {
                    return j;
                }
            }
        }
    }

    /// Dirichlet(1) over the full `(U, S, X)` tensor, rejecting non-interior `p_X`.
    pub fn joint_usx<R: Rng + ?Sized>(rng: &mut R, nu: usize, ns: usize, nx: usize) -> JointUSX {
        loop {
            if let Ok(j) = JointUSX::new(nu, ns, nx, dirichlet(rng, nu * ns * nx)) {
                return j;
            }
        }
    }

    /// `p_X` random; `S` and `U` random deterministic functions of `X`
    /// (rank-deficient kernels), each replaced by a Dirichlet kernel with
    /// probability one half.
    pub fn structured_usx<R: Rng + ?Sized>(rng: &mut R, nu: usize, ns: usize, nx: usize) -> JointUSX {
        let p_x = pmf(rng, nx);
        let kernel = |rng: &mut R, n: usize| -> Vec<Vec<f64>> {
            let functional = rng.random_bool(0.5);
            (0..nx)
                .map(|_| {
                    if functional {
                        let mut col = vec![0.0; n];
                        col[rng.random_range(0..n)] = 1.0;
                        col
                    } else {
                        dirichlet(rng, n)
                    }
                })
                .collect()
        };
        let w_s = kernel(rng, ns);
        let w_u = kernel(rng, nu);
        // conditionally independent given X
        JointUSX::from_fn(nu, ns, nx, |u, s, x| p_x[x] * w_s[x][s] * w_u[x][u])
            .expect("product of valid kernels")
    }

    /// Uniformly random unit direction orthogonal to `sqrt(p)`.
    pub fn direction<R: Rng + ?Sized>(rng: &mut R, p: &Pmf) -> PerturbationDirection {
        let root = p.sqrt();
        loop {
            let mut k: Vec<f64> = (0..p.len()).map(|_| StandardNormal.sample(rng)).collect();
            let along: f64 = k.iter().zip(&root).map(|(a, b)| a * b).sum();
            k.iter_mut().zip(&root).for_each(|(v, r)| *v -= along * r);
            if let Ok(d) = PerturbationDirection::new(p, k) {
                return d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designer::{design_mechanism, DesignOptions, EpsilonChoice, DEFAULT_TOLERANCE};
    use crate::instances::{independent_bits, secret_is_observation, utility_is_secret};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    fn fixed(eps: f64) -> DesignOptions {
        DesignOptions {
            epsilon: EpsilonChoice::Fixed(eps),
            ..Default::default()
        }
    }

    #[test]
    fn independent_bits_at_unit_epsilon_releases_the_utility_bit() {
        let joint = independent_bits();
        let mech = design_mechanism(&joint, &fixed(1.0)).unwrap();
        let a = audit(&joint, &mech).unwrap();
        assert_abs_diff_eq!(a.exact.uz, LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(a.exact.xz, LN_2, epsilon = 1e-12);
        assert!(a.exact.sz <= 1e-15);
        assert_abs_diff_eq!(a.local.xz, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a.frobenius.uz, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a.abs_errors.uz, LN_2 - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn frozen_oracle_values() {
        let joint = independent_bits();
        for (eps, expected) in [
            (0.9, 0.4946319372140727),
            (0.1, 0.0050083668463568876),
            (0.01, 5.0000833366667906e-05),
        ] {
            let a = audit(&joint, &design_mechanism(&joint, &fixed(eps)).unwrap()).unwrap();
            assert_abs_diff_eq!(a.exact.uz, expected, epsilon = 1e-14);
            assert_abs_diff_eq!(a.exact.xz, expected, epsilon = 1e-14);
            assert_abs_diff_eq!(a.local.uz + a.abs_errors.uz, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_release_audits_to_zero() {
        let joint = independent_bits();
        let mech = design_mechanism(&joint, &fixed(0.0)).unwrap();
        let a = audit(&joint, &mech).unwrap();
        assert_eq!(a.exact, InformationTriple::default());
        assert_eq!(a.local, InformationTriple::default());
        assert_eq!(a.ratios_to_eps2, InformationTriple::default());
    }

    #[test]
    fn phi_tail_branches_agree() {
        for t in [-0.5, -0.3, 1e-3, 0.2, 0.5] {
            let direct = (1.0 + t) * f64::ln_1p(t) - t - 0.5 * t * t;
            assert_abs_diff_eq!(phi_tail(t), direct, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(phi_tail(-1.0), 0.5, epsilon = 0.0);
        assert_eq!(phi_tail(0.0), 0.0);
    }

    #[test]
    fn sweep_examples() {
        let joint = independent_bits();
        assert!(epsilon_sweep(&joint, 1, &[], DEFAULT_TOLERANCE).unwrap().is_empty());
        let rows = epsilon_sweep(&joint, 1, &[1e-3, 1e-1, 1e-2], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(rows.iter().map(|r| r.epsilon).collect::<Vec<_>>(), vec![1e-1, 1e-2, 1e-3]);
        assert!(rows[0].ratios_to_eps2.uz > rows[1].ratios_to_eps2.uz);
        assert!(rows[1].ratios_to_eps2.uz > rows[2].ratios_to_eps2.uz);
        assert!(rows.iter().all(|r| r.exact.sz <= 1e-10));

        let zero = epsilon_sweep(&joint, 1, &[0.0], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(zero[0].exact, InformationTriple::default());
        assert_eq!(zero[0].local, InformationTriple::default());

        assert!(matches!(
            epsilon_sweep(&joint, 1, &[2.0], DEFAULT_TOLERANCE),
            Err(ObfuscationError::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn oracle_examples() {
        assert!(brute_force_feasibility(&independent_bits()).unwrap().feasible);
        assert!(!brute_force_feasibility(&secret_is_observation(4)).unwrap().feasible);
        assert!(!brute_force_feasibility(&utility_is_secret(4)).unwrap().feasible);
        assert_eq!(
            brute_force_feasibility(&secret_is_observation(9)),
            Err(ObfuscationError::OracleScaleExceeded { size: 9, limit: 8 })
        );
    }

    #[test]
    fn gaussian_rank_small_cases() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![0.0, 1.0, 1.0]];
        assert_eq!(gaussian_rank(&rows, 1e-12), 2);
        assert_eq!(gaussian_rank(&[vec![0.0, 0.0]], 1e-12), 0);
        assert_eq!(gaussian_rank(&[], 1e-12), 0);
    }

    #[test]
    fn utility_as_observation_keeps_secret_law() {
        let joint = independent_bits();
        let lifted = with_utility_as_observation(&joint);
        assert_eq!(lifted.sizes(), (4, 2, 4));
        assert_eq!(lifted.w_s(), joint.w_s());
        assert_eq!(lifted.p_u(), joint.p_x());
    }

    #[test]
    fn random_generators_are_reproducible() {
        let a = random::joint_usx(&mut random::seeded(7), 2, 3, 4);
        let b = random::joint_usx(&mut random::seeded(7), 2, 3, 4);
        assert_eq!(a, b);
        let p = random::pmf(&mut random::seeded(1), 5);
        let d = random::direction(&mut random::seeded(2), &p);
        assert!(d.orthogonality_violation() < 1e-12);
        assert_abs_diff_eq!(d.norm(), 1.0, epsilon = 1e-12);
    }
}
