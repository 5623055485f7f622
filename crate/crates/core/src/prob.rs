//! Finite-alphabet probability arithmetic.
//!
//! Pmfs, column-stochastic kernels, the fixed joint `p(U,S,X)`, and
//! two-variable joints, together with the exact information measures
//! (KL, chi-squared, mutual information) that every local approximation
//! in this crate is checked against. All logarithms are natural (nats).

use nalgebra::{DMatrix, DVector};

use crate::error::{ObfuscationError, Result};

/// Slack allowed below zero before an entry counts as negative mass.
pub const NEGATIVE_SLACK: f64 = 1e-12;
/// Largest deviation of a total mass from one that is silently renormalized.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A validated probability vector over `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    values: Vec<f64>,
}

impl Pmf {
    /// Validates and (within [`MASS_TOLERANCE`]) renormalizes `values`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_pmf(&values)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform pmf needs a non-empty alphabet");
        Pmf {
            values: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass at `index`.
    pub fn point(n: usize, index: usize) -> Self {
        let mut values = vec![0.0; n];
        values[index] = 1.0;
        Pmf { values }
    }

    /// Wraps values already known to be a pmf up to rounding.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Pmf { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True iff every entry is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    /// Index of the first zero entry, if any.
    pub fn first_zero(&self) -> Option<usize> {
        self.values.iter().position(|&v| v <= 0.0)
    }

    /// Fails with `NotInterior` unless every entry is strictly positive.
    pub fn require_interior(&self) -> Result<()> {
        match self.first_zero() {
            Some(index) => Err(ObfuscationError::NotInterior { index }),
            None => Ok(()),
        }
    }

    /// Entrywise square root.
    pub fn sqrt(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.sqrt()).collect()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn entropy(&self) -> f64 {
        -self
            .values
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

impl std::ops::Index<usize> for Pmf {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.values[index]
    }
}

/// Checks a probability vector and returns it as a [`Pmf`].
///
/// Entries in `[-1e-12, 0)` are clamped to zero. A total mass within
/// [`MASS_TOLERANCE`] of one is renormalized; anything further off is a
/// `MassMismatch`.
pub fn validate_pmf(values: &[f64]) -> Result<Pmf> {
    if values.is_empty() {
        return Err(ObfuscationError::Empty);
    }
    let mut out = Vec::with_capacity(values.len());
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(ObfuscationError::NonFinite { index });
        }
        if value < -NEGATIVE_SLACK {
            return Err(ObfuscationError::NegativeMass { index, value });
        }
        out.push(value.max(0.0));
    }
    let sum: f64 = out.iter().sum();
    if (sum - 1.0).abs() > MASS_TOLERANCE {
        return Err(ObfuscationError::MassMismatch {
            sum,
            tolerance: MASS_TOLERANCE,
        });
    }
    if sum != 1.0 {
        out.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(Pmf { values: out })
}

/// Column-stochastic matrix: entry `(y, x)` is `P(Y = y | X = x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    matrix: DMatrix<f64>,
}

impl Kernel {
    /// Validates every column as a pmf (same slack and renormalization as
    /// [`validate_pmf`]).
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(ObfuscationError::Empty);
        }
        let mut matrix = matrix;
        for column in 0..matrix.ncols() {
            let col: Vec<f64> = matrix.column(column).iter().copied().collect();
            let pmf = validate_pmf(&col).map_err(|err| match err {
                ObfuscationError::MassMismatch { sum, .. } => {
                    ObfuscationError::NotStochastic { column, sum }
                }
                other => other,
            })?;
            matrix.set_column(column, &DVector::from_column_slice(pmf.values()));
        }
        Ok(Kernel { matrix })
    }

    /// Identity channel on an alphabet of size `n`.
    pub fn identity(n: usize) -> Self {
        Kernel {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn outputs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.matrix.ncols()
    }

    /// Conditional pmf of the output given input symbol `x`.
    pub fn column(&self, x: usize) -> Pmf {
        Pmf {
            values: self.matrix.column(x).iter().copied().collect(),
        }
    }

    /// Output distribution `W p` for input distribution `p`.
    pub fn push(&self, p: &Pmf) -> Result<Vec<f64>> {
        if p.len() != self.inputs() {
            return Err(ObfuscationError::DimensionMismatch {
                left: self.inputs(),
                right: p.len(),
            });
        }
        Ok((&self.matrix * p.to_dvector()).iter().copied().collect())
    }
}

/// Which variable of `p(U,S,X)` to keep when marginalizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    U,
    S,
    X,
}

/// The fixed three-way joint `p(U,S,X)` with its marginals and the
/// conditionals `W_S = P(S|X)`, `W_U = P(U|X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointUSX {
    sizes: (usize, usize, usize),
    tensor: Vec<f64>,
    p_u: Pmf,
    p_s: Pmf,
    p_x: Pmf,
    w_s: Kernel,
    w_u: Kernel,
}

impl JointUSX {
    /// `tensor` is laid out as `[u][s][x]` (x fastest).
    pub fn new(nu: usize, ns: usize, nx: usize, tensor: Vec<f64>) -> Result<Self> {
        if nu * ns * nx == 0 {
            return Err(ObfuscationError::Empty);
        }
        if tensor.len() != nu * ns * nx {
            return Err(ObfuscationError::DimensionMismatch {
                left: nu * ns * nx,
                right: tensor.len(),
            });
        }
        let tensor = validate_pmf(&tensor)?.values;

        let mut p_u = vec![0.0; nu];
        let mut p_s = vec![0.0; ns];
        let mut p_x = vec![0.0; nx];
        let mut p_sx = DMatrix::zeros(ns, nx);
        let mut p_ux = DMatrix::zeros(nu, nx);
        for u in 0..nu {
            for s in 0..ns {
                for x in 0..nx {
                    let v = tensor[(u * ns + s) * nx + x];
                    p_u[u] += v;
                    p_s[s] += v;
                    p_x[x] += v;
                    p_sx[(s, x)] += v;
                    p_ux[(u, x)] += v;
                }
            }
        }
        let p_x = Pmf { values: p_x };
        p_x.require_interior()?;
        for x in 0..nx {
            let px = p_x[x];
            p_sx.column_mut(x).iter_mut().for_each(|v| *v /= px);
            p_ux.column_mut(x).iter_mut().for_each(|v| *v /= px);
        }
        Ok(JointUSX {
            sizes: (nu, ns, nx),
            tensor,
            p_u: Pmf { values: p_u },
            p_s: Pmf { values: p_s },
            p_x,
            w_s: Kernel { matrix: p_sx },
            w_u: Kernel { matrix: p_ux },
        })
    }

    /// Builds the tensor by evaluating `f(u, s, x)` on every triple.
    pub fn from_fn(
        nu: usize,
        ns: usize,
        nx: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut tensor = Vec::with_capacity(nu * ns * nx);
        for u in 0..nu {
            for s in 0..ns {
                for x in 0..nx {
                    tensor.push(f(u, s, x));
                }
            }
        }
        Self::new(nu, ns, nx, tensor)
    }

    /// `(|U|, |S|, |X|)`.
    pub fn sizes(&self) -> (usize, usize, usize) {
        self.sizes
    }

    pub fn get(&self, u: usize, s: usize, x: usize) -> f64 {
        let (_, ns, nx) = self.sizes;
        self.tensor[(u * ns + s) * nx + x]
    }

    pub fn tensor(&self) -> &[f64] {
        &self.tensor
    }

    pub fn p_u(&self) -> &Pmf {
        &self.p_u
    }

    pub fn p_s(&self) -> &Pmf {
        &self.p_s
    }

    pub fn p_x(&self) -> &Pmf {
        &self.p_x
    }

    /// `P(S|X)`, shape `|S| x |X|`.
    pub fn w_s(&self) -> &Kernel {
        &self.w_s
    }

    /// `P(U|X)`, shape `|U| x |X|`.
    pub fn w_u(&self) -> &Kernel {
        &self.w_u
    }

    /// Joint of `(U, X)` with U on the rows.
    pub fn joint_ux(&self) -> JointPair {
        self.pair_with_x(&self.w_u)
    }

    /// Joint of `(S, X)` with S on the rows.
    pub fn joint_sx(&self) -> JointPair {
        self.pair_with_x(&self.w_s)
    }

    fn pair_with_x(&self, kernel: &Kernel) -> JointPair {
        let mut m = kernel.matrix.clone();
        for x in 0..m.ncols() {
            let px = self.p_x[x];
            m.column_mut(x).iter_mut().for_each(|v| *v *= px);
        }
        JointPair::from_matrix_unchecked(m)
    }

    /// Relabels symbols: new symbol `i` of each variable is old symbol `perm[i]`.
    pub fn permuted(&self, perm_u: &[usize], perm_s: &[usize], perm_x: &[usize]) -> Result<Self> {
        Self::from_fn(self.sizes.0, self.sizes.1, self.sizes.2, |u, s, x| {
            self.get(perm_u[u], perm_s[s], perm_x[x])
        })
    }
}

/// Sums the joint over the two axes other than `axis`.
pub fn marginalize(joint: &JointUSX, axis: Axis) -> Pmf {
    let (nu, ns, nx) = joint.sizes();
    let n = match axis {
        Axis::U => nu,
        Axis::S => ns,
        Axis::X => nx,
    };
    let mut out = vec![0.0; n];
    for u in 0..nu {
        for s in 0..ns {
            for x in 0..nx {
                let i = match axis {
                    Axis::U => u,
                    Axis::S => s,
                    Axis::X => x,
                };
                out[i] += joint.get(u, s, x);
            }
        }
    }
    Pmf { values: out }
}

/// Joint pmf of two variables, rows indexing the first.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPair {
    matrix: DMatrix<f64>,
    p_row: Pmf,
    p_col: Pmf,
}

impl JointPair {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(ObfuscationError::Empty);
        }
        let flat: Vec<f64> = matrix.iter().copied().collect();
        let pmf = validate_pmf(&flat)?;
        let matrix = DMatrix::from_column_slice(matrix.nrows(), matrix.ncols(), pmf.values());
        Ok(Self::from_matrix_unchecked(matrix))
    }

    /// Independent coupling `p_row p_col^T`.
    pub fn product(p_row: &Pmf, p_col: &Pmf) -> Self {
        let m = p_row.to_dvector() * p_col.to_dvector().transpose();
        JointPair {
            matrix: m,
            p_row: p_row.clone(),
            p_col: p_col.clone(),
        }
    }

    fn from_matrix_unchecked(matrix: DMatrix<f64>) -> Self {
        let p_row = matrix.column_sum().iter().copied().collect();
        let p_col = matrix.row_sum().iter().copied().collect();
        JointPair {
            matrix,
            p_row: Pmf { values: p_row },
            p_col: Pmf { values: p_col },
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn p_row(&self) -> &Pmf {
        &self.p_row
    }

    pub fn p_col(&self) -> &Pmf {
        &self.p_col
    }

    pub fn transpose(&self) -> Self {
        JointPair {
            matrix: self.matrix.transpose(),
            p_row: self.p_col.clone(),
            p_col: self.p_row.clone(),
        }
    }
}

/// `D(p || q) = sum_x p(x) ln(p(x)/q(x))`, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    check_same_alphabet(p, q)?;
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.values.iter().zip(&q.values).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(ObfuscationError::SupportViolation { index });
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total.max(0.0))
}

/// `sum_x (p(x) - r(x))^2 / p(x)`; the reference `p` must be interior.
pub fn chi2_divergence(p: &Pmf, r: &Pmf) -> Result<f64> {
    check_same_alphabet(p, r)?;
    p.require_interior()?;
    Ok(p
        .values
        .iter()
        .zip(&r.values)
        .map(|(&pi, &ri)| (pi - ri) * (pi - ri) / pi)
        .sum())
}

fn check_same_alphabet(p: &Pmf, q: &Pmf) -> Result<()> {
    if p.len() != q.len() {
        return Err(ObfuscationError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

/// `I(row; col) = sum_z p(z) D(p(.|z) || p_row)`.
pub fn mutual_information(joint: &JointPair) -> f64 {
    let p_row = joint.p_row();
    let mut total = 0.0;
    for (z, &pz) in joint.p_col().values().iter().enumerate() {
        if pz <= 0.0 {
            continue;
        }
        for (x, &px) in p_row.values().iter().enumerate() {
            let pxz = joint.matrix[(x, z)];
            if pxz > 0.0 {
                let cond = pxz / pz;
                total += pz * cond * (cond / px).ln();
            }
        }
    }
    total.max(0.0)
}

/// The three joints induced by a release kernel under `(U,S) - X - Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovJoints {
    pub xz: JointPair,
    pub uz: JointPair,
    pub sz: JointPair,
}

/// Composes `p(U,S,X)` with a release described by `p_Z` and `P(X|Z)`.
///
/// `x_given_z` has shape `|X| x |Z|`. The mixture `sum_z p_Z(z) P(X|Z=z)`
/// must reproduce `p_X` within [`MASS_TOLERANCE`].
pub fn compose_markov(joint: &JointUSX, p_z: &Pmf, x_given_z: &Kernel) -> Result<MarkovJoints> {
    let nx = joint.p_x().len();
    if x_given_z.outputs() != nx {
        return Err(ObfuscationError::DimensionMismatch {
            left: nx,
            right: x_given_z.outputs(),
        });
    }
    if x_given_z.inputs() != p_z.len() {
        return Err(ObfuscationError::DimensionMismatch {
            left: p_z.len(),
            right: x_given_z.inputs(),
        });
    }
    let mixture = x_given_z.push(p_z)?;
    let deviation = max_abs_diff(&mixture, joint.p_x().values());
    if deviation > MASS_TOLERANCE {
        return Err(ObfuscationError::MarginalMismatch { deviation });
    }
    let mut p_xz = x_given_z.matrix().clone();
    for z in 0..p_z.len() {
        let pz = p_z[z];
        p_xz.column_mut(z).iter_mut().for_each(|v| *v *= pz);
    }
    let p_uz = joint.w_u().matrix() * &p_xz;
    let p_sz = joint.w_s().matrix() * &p_xz;
    Ok(MarkovJoints {
        xz: JointPair::from_matrix_unchecked(p_xz),
        uz: JointPair::from_matrix_unchecked(p_uz),
        sz: JointPair::from_matrix_unchecked(p_sz),
    })
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::independent_bits;
    use approx::assert_abs_diff_eq;

    #[test]
    fn validate_accepts_uniform_and_vertex() {
        let p = validate_pmf(&[0.5, 0.5]).unwrap();
        assert!(p.is_interior());
        let v = validate_pmf(&[1.0, 0.0]).unwrap();
        assert!(!v.is_interior());
    }

    #[test]
    fn validate_rejects_short_mass() {
        assert!(matches!(
            validate_pmf(&[0.3, 0.3, 0.3]),
            Err(ObfuscationError::MassMismatch { .. })
        ));
    }

    #[test]
    fn validate_rejects_negative_and_empty() {
        assert!(matches!(
            validate_pmf(&[1.1, -0.1]),
            Err(ObfuscationError::NegativeMass { index: 1, .. })
        ));
        assert_eq!(validate_pmf(&[]), Err(ObfuscationError::Empty));
        assert!(matches!(
            validate_pmf(&[f64::NAN, 1.0]),
            Err(ObfuscationError::NonFinite { index: 0 })
        ));
    }

    #[test]
    fn validate_clamps_tiny_negatives_and_renormalizes() {
        let p = validate_pmf(&[0.5 + 5e-10, 0.5, -1e-13]).unwrap();
        assert_eq!(p[2], 0.0);
        assert_abs_diff_eq!(p.values().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn marginals_of_uniform_tensor() {
        let joint = JointUSX::new(2, 2, 4, vec![1.0 / 16.0; 16]).unwrap();
        let p_x = marginalize(&joint, Axis::X);
        for &v in p_x.values() {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn marginals_of_independent_bits() {
        let joint = independent_bits();
        let p_s = marginalize(&joint, Axis::S);
        assert_eq!(p_s.values(), &[0.5, 0.5]);
        assert_eq!(marginalize(&joint, Axis::U).values(), &[0.5, 0.5]);
    }

    #[test]
    fn singleton_joint() {
        let joint = JointUSX::new(1, 1, 1, vec![1.0]).unwrap();
        assert_eq!(marginalize(&joint, Axis::X).values(), &[1.0]);
        assert_eq!(joint.w_s().matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn non_interior_x_is_rejected() {
        let err = JointUSX::new(1, 1, 3, vec![0.5, 0.5, 0.0]).unwrap_err();
        assert_eq!(err, ObfuscationError::NotInterior { index: 2 });
    }

    #[test]
    fn kernels_recompose_marginals() {
        let joint = JointUSX::from_fn(2, 3, 4, |u, s, x| (1 + u + 2 * s + 3 * x) as f64 / 192.0)
            .unwrap();
        let ps = joint.w_s().push(joint.p_x()).unwrap();
        let pu = joint.w_u().push(joint.p_x()).unwrap();
        assert!(max_abs_diff(&ps, joint.p_s().values()) < 1e-12);
        assert!(max_abs_diff(&pu, joint.p_u().values()) < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let half = Pmf::uniform(2);
        assert_eq!(kl_divergence(&half, &half).unwrap(), 0.0);
        let vertex = Pmf::new(vec![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(
            kl_divergence(&vertex, &half).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        // reference value from an independent evaluation of the definition
        let p = Pmf::new(vec![0.6, 0.4]).unwrap();
        let d = kl_divergence(&p, &half).unwrap();
        assert_abs_diff_eq!(d, 0.020135513550688863, epsilon = 1e-15);
        let reversed = 0.4 * (0.4f64 / 0.5).ln() + 0.6 * (0.6f64 / 0.5).ln();
        assert_abs_diff_eq!(d, reversed, epsilon = 1e-15);
    }

    #[test]
    fn kl_support_violation() {
        let p = Pmf::uniform(2);
        let q = Pmf::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(
            kl_divergence(&p, &q),
            Err(ObfuscationError::SupportViolation { index: 1 })
        );
        let short = Pmf::uniform(3);
        assert!(matches!(
            kl_divergence(&p, &short),
            Err(ObfuscationError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn chi2_examples() {
        let p = Pmf::uniform(2);
        assert_eq!(chi2_divergence(&p, &p).unwrap(), 0.0);
        let r = Pmf::new(vec![0.6, 0.4]).unwrap();
        assert_abs_diff_eq!(chi2_divergence(&p, &r).unwrap(), 0.04, epsilon = 1e-15);
        let a = Pmf::new(vec![0.25, 0.75]).unwrap();
        let b = Pmf::new(vec![0.75, 0.25]).unwrap();
        assert_abs_diff_eq!(chi2_divergence(&a, &b).unwrap(), 4.0 / 3.0, epsilon = 1e-15);
        let vertex = Pmf::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(
            chi2_divergence(&vertex, &p),
            Err(ObfuscationError::NotInterior { index: 1 })
        );
    }

    #[test]
    fn mutual_information_examples() {
        let p = Pmf::new(vec![0.2, 0.3, 0.5]).unwrap();
        let q = Pmf::new(vec![0.4, 0.6]).unwrap();
        assert!(mutual_information(&JointPair::product(&p, &q)) < 1e-15);

        let diag = JointPair::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5])).unwrap();
        assert_abs_diff_eq!(mutual_information(&diag), std::f64::consts::LN_2, epsilon = 1e-15);

        let m = DMatrix::from_row_slice(2, 2, &[0.3, 0.2, 0.2, 0.3]);
        let joint = JointPair::new(m.clone()).unwrap();
        let mut brute = 0.0;
        for x in 0..2 {
            for z in 0..2 {
                brute += m[(x, z)] * (m[(x, z)] / (0.5 * 0.5)).ln();
            }
        }
        assert_abs_diff_eq!(mutual_information(&joint), brute, epsilon = 1e-12);
        assert_abs_diff_eq!(mutual_information(&joint), 0.020135513550688863, epsilon = 1e-15);
    }

    #[test]
    fn compose_uninformative_release() {
        let joint = independent_bits();
        let p_z = Pmf::uniform(3);
        let cols: Vec<f64> = (0..3).flat_map(|_| joint.p_x().values().to_vec()).collect();
        let kernel = Kernel::new(DMatrix::from_column_slice(4, 3, &cols)).unwrap();
        let j = compose_markov(&joint, &p_z, &kernel).unwrap();
        assert!(mutual_information(&j.xz) < 1e-15);
        assert!(mutual_information(&j.uz) < 1e-15);
        assert!(mutual_information(&j.sz) < 1e-15);
    }

    #[test]
    fn compose_release_of_non_sensitive_bit() {
        // Z = N where X = 2S + N.
        let joint = independent_bits();
        let p_z = Pmf::uniform(2);
        let kernel = Kernel::new(DMatrix::from_row_slice(
            4,
            2,
            &[0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5],
        ))
        .unwrap();
        let j = compose_markov(&joint, &p_z, &kernel).unwrap();
        assert!(mutual_information(&j.sz) < 1e-15);
        assert_abs_diff_eq!(mutual_information(&j.uz), std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn compose_constant_release() {
        let joint = independent_bits();
        let p_z = Pmf::uniform(1);
        let kernel = Kernel::new(DMatrix::from_column_slice(4, 1, joint.p_x().values())).unwrap();
        let j = compose_markov(&joint, &p_z, &kernel).unwrap();
        let outer = JointPair::product(joint.p_u(), &p_z);
        assert!((j.uz.matrix() - outer.matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn compose_rejects_inconsistent_marginal() {
        let joint = independent_bits();
        let p_z = Pmf::uniform(1);
        let kernel = Kernel::new(DMatrix::from_column_slice(4, 1, &[0.4, 0.2, 0.2, 0.2])).unwrap();
        assert!(matches!(
            compose_markov(&joint, &p_z, &kernel),
            Err(ObfuscationError::MarginalMismatch { .. })
        ));
    }
}
