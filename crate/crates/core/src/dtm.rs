//! Divergence transfer matrices and their modal decomposition.
//!
//! For a joint `P` with marginals `p_row`, `p_col` the divergence transfer
//! matrix is `B = diag(sqrt(p_row))^-1 P diag(sqrt(p_col))^-1`. Its top
//! singular value is one with singular vectors `sqrt(p_row)`, `sqrt(p_col)`;
//! the remaining modes carry all of the statistical dependence, and
//! `(||B||_F^2 - 1) / 2` is the local approximation of the mutual
//! information.

use nalgebra::{DMatrix, DVector};

use crate::error::{ObfuscationError, Result};
use crate::geometry::PerturbationDirection;
use crate::linalg::{fix_sign, thin_svd};
use crate::prob::{max_abs_diff, JointPair, Kernel, Pmf, MASS_TOLERANCE};

/// Singular values closer than this are reported as one degenerate block.
pub const MULTIPLICITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceTransferMatrix {
    matrix: DMatrix<f64>,
    p_row: Pmf,
    p_col: Pmf,
    kept_rows: Vec<usize>,
    kept_cols: Vec<usize>,
    source_shape: (usize, usize),
}

impl DivergenceTransferMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Row marginal restricted to the kept rows.
    pub fn p_row(&self) -> &Pmf {
        &self.p_row
    }

    /// Column marginal restricted to the kept columns.
    pub fn p_col(&self) -> &Pmf {
        &self.p_col
    }

    /// Indices (in the originating joint) of the rows kept in `matrix`.
    pub fn kept_rows(&self) -> &[usize] {
        &self.kept_rows
    }

    pub fn kept_cols(&self) -> &[usize] {
        &self.kept_cols
    }

    /// Rows of the originating joint dropped for carrying zero mass.
    pub fn dropped_rows(&self) -> Vec<usize> {
        dropped(&self.kept_rows, self.source_shape.0)
    }

    pub fn dropped_cols(&self) -> Vec<usize> {
        dropped(&self.kept_cols, self.source_shape.1)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.matrix.norm_squared()
    }

    /// `B - sqrt(p_row) sqrt(p_col)^T`.
    pub fn centered(&self) -> DMatrix<f64> {
        let outer = DVector::from_vec(self.p_row.sqrt())
            * DVector::from_vec(self.p_col.sqrt()).transpose();
        &self.matrix - outer
    }

    /// Largest singular value (one for every valid joint).
    pub fn spectral_norm(&self) -> f64 {
        thin_svd(&self.matrix).sigmas.first().copied().unwrap_or(0.0)
    }

    /// `max |B sqrt(p_col) - sqrt(p_row)|`.
    pub fn right_vector_residual(&self) -> f64 {
        let image = &self.matrix * DVector::from_vec(self.p_col.sqrt());
        max_abs_diff(image.as_slice(), &self.p_row.sqrt())
    }
}

fn dropped(kept: &[usize], n: usize) -> Vec<usize> {
    (0..n).filter(|i| !kept.contains(i)).collect()
}

/// Builds `B` from a joint, dropping zero-mass rows and columns.
pub fn build_dtm(joint: &JointPair) -> Result<DivergenceTransferMatrix> {
    let m = joint.matrix();
    let kept_rows = support(joint.p_row(), |i| m.row(i).iter().any(|&v| v != 0.0))?;
    let kept_cols = support(joint.p_col(), |j| m.column(j).iter().any(|&v| v != 0.0))?;
    let p_row = restrict(joint.p_row(), &kept_rows);
    let p_col = restrict(joint.p_col(), &kept_cols);
    let sr = p_row.sqrt();
    let sc = p_col.sqrt();
    let matrix = DMatrix::from_fn(kept_rows.len(), kept_cols.len(), |i, j| {
        m[(kept_rows[i], kept_cols[j])] / (sr[i] * sc[j])
    });
    Ok(DivergenceTransferMatrix {
        matrix,
        p_row,
        p_col,
        kept_rows,
        kept_cols,
        source_shape: m.shape(),
    })
}

/// Builds `B = diag(sqrt(p_out))^-1 W diag(sqrt(p_in))` for a channel `W`.
///
/// `p_output` must equal `W p_input` within 1e-9; the recomputed product is
/// used as the row marginal. Output symbols with zero mass are dropped.
pub fn build_channel_dtm(
    kernel: &Kernel,
    p_input: &Pmf,
    p_output: &Pmf,
) -> Result<DivergenceTransferMatrix> {
    let pushed = kernel.push(p_input)?;
    if pushed.len() != p_output.len() {
        return Err(ObfuscationError::DimensionMismatch {
            left: pushed.len(),
            right: p_output.len(),
        });
    }
    let deviation = max_abs_diff(&pushed, p_output.values());
    if deviation > MASS_TOLERANCE {
        return Err(ObfuscationError::InconsistentMarginals { deviation });
    }
    let kept_rows: Vec<usize> = (0..pushed.len()).filter(|&i| pushed[i] > 0.0).collect();
    let p_row = Pmf::from_raw(kept_rows.iter().map(|&i| pushed[i]).collect());
    let sr = p_row.sqrt();
    let sc = p_input.sqrt();
    let w = kernel.matrix();
    let matrix = DMatrix::from_fn(kept_rows.len(), p_input.len(), |i, j| {
        w[(kept_rows[i], j)] * sc[j] / sr[i]
    });
    Ok(DivergenceTransferMatrix {
        matrix,
        p_row,
        p_col: p_input.clone(),
        kept_cols: (0..p_input.len()).collect(),
        kept_rows,
        source_shape: w.shape(),
    })
}

fn support(marginal: &Pmf, carries_mass: impl Fn(usize) -> bool) -> Result<Vec<usize>> {
    let mut kept = Vec::new();
    for (i, &p) in marginal.values().iter().enumerate() {
        if p > 0.0 {
            kept.push(i);
        } else if carries_mass(i) {
            return Err(ObfuscationError::DegenerateMarginal { index: i });
        }
    }
    Ok(kept)
}

fn restrict(p: &Pmf, kept: &[usize]) -> Pmf {
    Pmf::from_raw(kept.iter().map(|&i| p[i]).collect())
}

/// SVD of a divergence transfer matrix in feature-function form.
///
/// Mode 0 is the trivial mode (`sqrt(p)` vectors, constant features); its
/// singular value is the computed spectral norm. Modes `1..K` come from the
/// SVD of `B` restricted to the orthogonal complements of `sqrt(p_row)` and
/// `sqrt(p_col)`, so every non-trivial feature is zero-mean even inside a
/// degenerate or zero block. Signs: the first significant coordinate of each
/// left vector is positive.
#[derive(Debug, Clone)]
pub struct ModalDecomposition {
    sigmas: Vec<f64>,
    multiplicity: Vec<usize>,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    p_row: Pmf,
    p_col: Pmf,
}

impl ModalDecomposition {
    /// `sigma_1 >= sigma_2 >= ... >= sigma_K` (0-based here).
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Size of the degenerate block each singular value belongs to.
    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    /// Orthonormal left (row-side) singular vectors, one per column.
    pub fn left_vectors(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right_vectors(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// `f*_i(x) = psi_i(x) / sqrt(p_row(x))`.
    pub fn row_feature(&self, i: usize) -> Vec<f64> {
        scale_by_inv_sqrt(self.left.column(i).iter(), &self.p_row)
    }

    /// `g*_i(z) = phi_i(z) / sqrt(p_col(z))`.
    pub fn col_feature(&self, i: usize) -> Vec<f64> {
        scale_by_inv_sqrt(self.right.column(i).iter(), &self.p_col)
    }

    /// `p_row(x) p_col(z) (1 + sum_{i>=2} sigma_i f*_i(x) g*_i(z))`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let (r, c) = (self.p_row.len(), self.p_col.len());
        let mut out = DMatrix::from_element(r, c, 1.0);
        for i in 1..self.len() {
            let f = self.row_feature(i);
            let g = self.col_feature(i);
            for x in 0..r {
                for z in 0..c {
                    out[(x, z)] += self.sigmas[i] * f[x] * g[z];
                }
            }
        }
        for x in 0..r {
            for z in 0..c {
                out[(x, z)] *= self.p_row[x] * self.p_col[z];
            }
        }
        out
    }
}

fn scale_by_inv_sqrt<'a>(v: impl Iterator<Item = &'a f64>, p: &Pmf) -> Vec<f64> {
    v.zip(p.values()).map(|(a, pi)| a / pi.sqrt()).collect()
}

/// Orthonormal basis of the complement of the unit vector `s` (columns
/// `1..n` of the Householder reflector that maps `s` to a multiple of `e_1`).
fn complement_basis(s: &[f64]) -> DMatrix<f64> {
    let n = s.len();
    let mut w = DVector::from_column_slice(s);
    let sign = if s[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += sign;
    let ww = w.norm_squared();
    let h = DMatrix::identity(n, n) - (&w * w.transpose()) * (2.0 / ww);
    h.columns(1, n - 1).into_owned()
}

pub fn svd_modes(b: &DivergenceTransferMatrix) -> ModalDecomposition {
    let (r, c) = b.shape();
    let k = r.min(c);
    let sr = b.p_row.sqrt();
    let sc = b.p_col.sqrt();

    let mut sigmas = vec![b.spectral_norm()];
    let mut left = DMatrix::zeros(r, k);
    let mut right = DMatrix::zeros(c, k);
    left.set_column(0, &DVector::from_column_slice(&sr));
    right.set_column(0, &DVector::from_column_slice(&sc));

    if k > 1 {
        let qr = complement_basis(&sr);
        let qc = complement_basis(&sc);
        let core = qr.transpose() * &b.matrix * &qc;
        let svd = thin_svd(&core);
        let lu = &qr * &svd.left;
        let rv = &qc * &svd.right;
        for i in 0..k - 1 {
            let mut u: Vec<f64> = lu.column(i).iter().copied().collect();
            let mut v: Vec<f64> = rv.column(i).iter().copied().collect();
            if fix_sign(&mut u) {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            sigmas.push(svd.sigmas[i]);
            left.set_column(i + 1, &DVector::from_vec(u));
            right.set_column(i + 1, &DVector::from_vec(v));
        }
    }

    let multiplicity = block_sizes(&sigmas);
    ModalDecomposition {
        sigmas,
        multiplicity,
        left,
        right,
        p_row: b.p_row.clone(),
        p_col: b.p_col.clone(),
    }
}

fn block_sizes(sigmas: &[f64]) -> Vec<usize> {
    let mut out = vec![1; sigmas.len()];
    let mut start = 0;
    for i in 1..=sigmas.len() {
        let split = i == sigmas.len() || (sigmas[i - 1] - sigmas[i]).abs() > MULTIPLICITY_TOLERANCE;
        if split {
            out[start..i].iter_mut().for_each(|m| *m = i - start);
            start = i;
        }
    }
    out
}

/// Local mutual information `(||B||_F^2 - 1) / 2`, clamped at zero.
pub fn frobenius_mi(b: &DivergenceTransferMatrix) -> f64 {
    (0.5 * (b.frobenius_sq() - 1.0)).max(0.0)
}

/// Same quantity as [`frobenius_mi`] evaluated as `||B - sqrt(p) sqrt(p)^T||_F^2 / 2`,
/// which avoids the cancellation near independence.
pub fn centered_frobenius_mi(b: &DivergenceTransferMatrix) -> f64 {
    0.5 * b.centered().norm_squared()
}

/// `B k`: how a perturbation of the column variable moves the row variable.
pub fn pushforward_direction(
    b: &DivergenceTransferMatrix,
    k: &PerturbationDirection,
) -> Result<Vec<f64>> {
    pushforward_raw(b, k.k())
}

pub(crate) fn pushforward_raw(b: &DivergenceTransferMatrix, k: &[f64]) -> Result<Vec<f64>> {
    if k.len() != b.matrix.ncols() {
        return Err(ObfuscationError::DimensionMismatch {
            left: b.matrix.ncols(),
            right: k.len(),
        });
    }
    Ok((&b.matrix * DVector::from_column_slice(k))
        .iter()
        .copied()
        .collect())
}

/// `g(z) = E[f(X) | Z = z]` computed through `B^T`.
///
/// `f` is indexed by the kept rows of `b`.
pub fn induced_feature(b: &DivergenceTransferMatrix, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != b.matrix.nrows() {
        return Err(ObfuscationError::DimensionMismatch {
            left: b.matrix.nrows(),
            right: f.len(),
        });
    }
    if let Some(index) = b.p_col.first_zero() {
        return Err(ObfuscationError::DegenerateMarginal { index });
    }
    let xi_row: Vec<f64> = f.iter().zip(b.p_row.sqrt()).map(|(a, s)| a * s).collect();
    let xi_col = b.matrix.transpose() * DVector::from_vec(xi_row);
    Ok(xi_col
        .iter()
        .zip(b.p_col.sqrt())
        .map(|(xi, s)| xi / s)
        .collect())
}
