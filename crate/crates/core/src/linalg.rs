//! Small dense SVD (one-sided Jacobi) with a deterministic ordering and sign convention.

use nalgebra::DMatrix;

/// Coordinates with magnitude at or below this count as zero when fixing signs.
const SIGN_EPS: f64 = 1e-10;
/// Relative size below which a left singular vector is not taken from `m v / sigma`.
const SIGMA_FLOOR: f64 = 1e-13;
const MAX_SWEEPS: usize = 80;

/// Thin SVD with singular values sorted in descending order.
#[derive(Debug, Clone)]
pub(crate) struct ThinSvd {
    pub sigmas: Vec<f64>,
    /// `rows x K`
    pub left: DMatrix<f64>,
    /// `cols x K`
    pub right: DMatrix<f64>,
}

pub(crate) fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    let (r, c) = m.shape();
    if r < c {
        let t = thin_svd(&m.transpose());
        return ThinSvd {
            sigmas: t.sigmas,
            left: t.right,
            right: t.left,
        };
    }
    let (sigmas, right, rotated) = jacobi(m);
    let mut left = DMatrix::zeros(r, c);
    let mut filled = Vec::with_capacity(c);
    for j in 0..c {
        if sigmas[j] > f64::MIN_POSITIVE && sigmas[j] > SIGMA_FLOOR * sigmas[0] {
            left.set_column(j, &(rotated.column(j) / sigmas[j]));
            filled.push(j);
        }
    }
    complete_basis(&mut left, &filled);
    ThinSvd {
        sigmas,
        left,
        right,
    }
}

/// Complete set of right singular vectors of `m` (`cols x cols`), with one
/// singular value per column; directions beyond the row count get zero.
pub(crate) fn right_singular_system(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (sigmas, right, _) = jacobi(m);
    (sigmas, right)
}

/// One-sided Jacobi: rotates the columns of `m` until they are mutually
/// orthogonal. Returns the column norms (descending), the accumulated
/// rotation `V` (`cols x cols`), and `m V` in the same order.
fn jacobi(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let c = m.ncols();
    let mut w = m.clone();
    let mut v = DMatrix::<f64>::identity(c, c);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut w, p, q, cs, sn);
                rotate(&mut v, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..c).map(|j| w.column(j).norm()).collect();
    let order = descending_order(&norms);
    let mut sigmas = Vec::with_capacity(c);
    let mut right = DMatrix::zeros(c, c);
    let mut image = DMatrix::zeros(m.nrows(), c);
    for (dst, &src) in order.iter().enumerate() {
        sigmas.push(norms[src]);
        right.set_column(dst, &v.column(src));
        image.set_column(dst, &w.column(src));
    }
    (sigmas, right, image)
}

fn rotate(a: &mut DMatrix<f64>, p: usize, q: usize, cs: f64, sn: f64) {
    for i in 0..a.nrows() {
        let (x, y) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = cs * x - sn * y;
        a[(i, q)] = sn * x + cs * y;
    }
}

/// Fills the columns of `basis` not listed in `filled` with unit vectors
/// orthogonal to everything already present.
fn complete_basis(basis: &mut DMatrix<f64>, filled: &[usize]) {
    let (n, k) = basis.shape();
    let mut have: Vec<usize> = filled.to_vec();
    for j in (0..k).filter(|j| !filled.contains(j)) {
        let mut best: Option<nalgebra::DVector<f64>> = None;
        for e in 0..n {
            let mut cand = nalgebra::DVector::zeros(n);
            cand[e] = 1.0;
            for _ in 0..2 {
                for &h in &have {
                    let proj = basis.column(h).dot(&cand);
                    cand -= basis.column(h) * proj;
                }
            }
            if best.as_ref().is_none_or(|b| cand.norm() > b.norm() + 1e-12) {
                best = Some(cand);
            }
        }
        let b = best.expect("n >= 1");
        let len = b.norm();
        basis.set_column(j, &(b / len));
        have.push(j);
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Index of the first coordinate whose magnitude exceeds the zero threshold.
pub(crate) fn leading_index<'a>(v: impl IntoIterator<Item = &'a f64>) -> Option<usize> {
    v.into_iter().position(|x| x.abs() > SIGN_EPS)
}

/// Flips `v` so that its first non-negligible coordinate is positive.
/// Returns true when a flip happened.
pub(crate) fn fix_sign(v: &mut [f64]) -> bool {
    match leading_index(v.iter()) {
        Some(i) if v[i] < 0.0 => {
            v.iter_mut().for_each(|x| *x = -*x);
            true
        }
        _ => false,
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thin_svd_is_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let svd = thin_svd(&m);
        assert!(svd.sigmas.windows(2).all(|w| w[0] >= w[1]));
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(svd.sigmas.clone()));
        let back = &svd.left * sigma * svd.right.transpose();
        assert!((back - m).abs().max() < 1e-14);
    }

    #[test]
    fn rank_one_wide_matrix_has_exact_singular_value() {
        // sigma^2 equals the only non-zero eigenvalue of m m^T
        let m = DMatrix::from_column_slice(
            2,
            3,
            &[
                -0.09366721153404356,
                0.12233823975535423,
                -0.06659083338510108,
                0.08697392830162809,
                0.16127074026290525,
                -0.210634843983115,
            ],
        );
        let svd = thin_svd(&m);
        let gram = &m * m.transpose();
        assert!((svd.sigmas[0].powi(2) - gram.trace()).abs() < 1e-15);
        assert!(svd.sigmas[1] < 1e-15);
        let lt = svd.left.transpose() * &svd.left;
        assert!((lt - DMatrix::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn right_system_covers_null_space_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let (sigmas, v) = right_singular_system(&m);
        assert_eq!(sigmas.len(), 3);
        assert!((sigmas[0] - 3f64.sqrt()).abs() < 1e-14);
        assert!(sigmas[1].abs() < 1e-14 && sigmas[2].abs() < 1e-14);
        let vtv = v.transpose() * &v;
        assert!((vtv - DMatrix::identity(3, 3)).abs().max() < 1e-14);
        for j in 1..3 {
            assert!((&m * v.column(j)).norm() < 1e-14);
        }
    }

    #[test]
    fn sign_fix_uses_first_significant_coordinate() {
        let mut v = vec![1e-14, -0.6, 0.8];
        assert!(fix_sign(&mut v));
        assert_eq!(v[1], 0.6);
        let mut w = vec![0.0, 0.6, -0.8];
        assert!(!fix_sign(&mut w));
    }
}
