//! Dense linear-algebra kernel.
//!
//! Projections, pseudoinverses, ridge solves, singular-value thresholding,
//! Loewner-order tests and balanced factor splits. Everything here is a pure
//! deterministic function of its inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Outcome of a PSD test on `A - B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheckResult {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub tolerance_used: f64,
}

const RANK_RTOL: f64 = 1e-12;
const SYM_TOL: f64 = 1e-10;

pub fn all_finite(m: &DenseMatrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn require_finite(m: &DenseMatrix, what: &str) -> Result<()> {
    if all_finite(m) {
        Ok(())
    } else {
        invalid(format!("{what} has non-finite entries"))
    }
}

// Decompositions go through faer; nalgebra's SVD loses accuracy on exactly
// rank-deficient inputs.
fn to_faer(m: &DenseMatrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD pieces `(U, s, Vᵀ)` with singular values sorted descending.
pub fn thin_svd(m: &DenseMatrix) -> (DenseMatrix, Vector, DenseMatrix) {
    let (r, c) = m.shape();
    let p = r.min(c);
    if p == 0 {
        return (DenseMatrix::zeros(r, 0), Vector::zeros(0), DenseMatrix::zeros(0, c));
    }
    let svd = to_faer(m).thin_svd().expect("svd of a finite matrix converges");
    let s = svd.S();
    let v = from_faer(svd.V());
    (from_faer(svd.U()), Vector::from_fn(p, |i, _| s[i]), v.transpose())
}

/// Eigenvalues (ascending) and eigenvectors of the symmetric part of `a`.
pub fn sym_eigen(a: &DenseMatrix) -> (Vector, DenseMatrix) {
    let n = a.nrows();
    if n == 0 {
        return (Vector::zeros(0), DenseMatrix::zeros(0, 0));
    }
    let eig = to_faer(&symmetrize(a))
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric eigendecomposition converges");
    let s = eig.S();
    let u = from_faer(eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let vals = Vector::from_fn(n, |i, _| s[order[i]]);
    let vecs = DenseMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    (vals, vecs)
}

/// Singular values below this are treated as zero.
pub fn rank_cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * RANK_RTOL
}

pub fn numerical_rank(s: &Vector, rows: usize, cols: usize) -> usize {
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let cut = rank_cutoff(rows, cols, smax);
    s.iter().filter(|&&v| v > cut).count()
}

/// Orthonormal basis of the column space (from the SVD, numerically truncated).
pub fn range_basis(a: &DenseMatrix) -> DenseMatrix {
    let (u, s, _) = thin_svd(a);
    let r = numerical_rank(&s, a.nrows(), a.ncols());
    u.columns(0, r).into_owned()
}

/// P_A, the orthogonal projector onto the column space of `a`.
pub fn projector(a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.nrows() == 0 {
        return invalid("projector needs at least one row");
    }
    require_finite(a, "projector input")?;
    let u = range_basis(a);
    let p = &u * u.transpose();
    Ok((&p + p.transpose()) * 0.5)
}

/// I - P_A.
pub fn complement_projector(a: &DenseMatrix) -> Result<DenseMatrix> {
    let p = projector(a)?;
    Ok(DenseMatrix::identity(a.nrows(), a.nrows()) - p)
}

/// Moore-Penrose pseudoinverse with the standard numerical-rank cutoff.
pub fn pinv(a: &DenseMatrix) -> DenseMatrix {
    let (u, s, vt) = thin_svd(a);
    let r = numerical_rank(&s, a.nrows(), a.ncols());
    let mut out = DenseMatrix::zeros(a.ncols(), a.nrows());
    for i in 0..r {
        let ui = u.column(i);
        let vi = vt.row(i);
        out += (vi.transpose() * ui.transpose()) / s[i];
    }
    out
}

/// Minimum-norm least-squares solution of `a w ≈ y`.
pub fn lstsq_min_norm(a: &DenseMatrix, y: &Vector) -> Vector {
    let (u, s, vt) = thin_svd(a);
    let r = numerical_rank(&s, a.nrows(), a.ncols());
    let mut w = Vector::zeros(a.ncols());
    for i in 0..r {
        let coef = u.column(i).dot(y) / s[i];
        w += vt.row(i).transpose() * coef;
    }
    w
}

pub fn singular_values(m: &DenseMatrix) -> Vector {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vector::zeros(0);
    }
    let s = to_faer(m).singular_values().expect("svd of a finite matrix converges");
    Vector::from_vec(s)
}

pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    singular_values(m).iter().cloned().fold(0.0, f64::max)
}

pub fn nuclear_norm(m: &DenseMatrix) -> f64 {
    singular_values(m).sum()
}

/// Minimizer of (1/2n)‖Xw − y‖² + (λ/2)‖w‖².
pub fn ridge_solve(x: &DenseMatrix, y: &Vector, lambda: f64) -> Result<Vector> {
    let (n, d) = x.shape();
    if n == 0 {
        return invalid("ridge_solve needs n >= 1");
    }
    if y.len() != n {
        return invalid(format!("ridge_solve: y has length {}, expected {n}", y.len()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return invalid(format!("ridge_solve: lambda must be finite and >= 0, got {lambda}"));
    }
    require_finite(x, "X")?;
    let nf = n as f64;
    if lambda == 0.0 {
        let s = singular_values(x);
        let smax = s.iter().cloned().fold(0.0, f64::max);
        let smin = if s.len() < d { 0.0 } else { s.iter().cloned().fold(f64::INFINITY, f64::min) };
        let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
        if !(condition < 1e12) {
            return Err(Error::Singular { condition });
        }
        return Ok(lstsq_min_norm(x, y));
    }
    let mut g = x.tr_mul(x) / nf;
    for i in 0..d {
        g[(i, i)] += lambda;
    }
    let rhs = x.tr_mul(y) / nf;
    let chol = g.cholesky().ok_or(Error::Singular { condition: f64::INFINITY })?;
    Ok(chol.solve(&rhs))
}

/// Least squares for a tall full-column-rank system via Householder QR.
fn qr_lstsq(a: DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let qr = a.qr();
    let q = qr.q();
    let r = qr.r();
    let qtb = q.tr_mul(b);
    r.solve_upper_triangular(&qtb).expect("regularized system is nonsingular")
}

/// Max-entry gap between (XᵀX+λI)⁻¹Xᵀ and Xᵀ(XXᵀ+λI)⁻¹.
pub fn resolvent_commute_gap(x: &DenseMatrix, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    require_finite(x, "X")?;
    let (n, d) = x.shape();
    if n == 0 || d == 0 || x.amax() == 0.0 {
        return Ok(0.0);
    }
    let sl = lambda.sqrt();
    let left = {
        let mut a = DenseMatrix::zeros(n + d, d);
        a.view_mut((0, 0), (n, d)).copy_from(x);
        a.view_mut((n, 0), (d, d)).fill_diagonal(sl);
        let mut b = DenseMatrix::zeros(n + d, n);
        b.view_mut((0, 0), (n, n)).fill_diagonal(1.0);
        qr_lstsq(a, &b)
    };
    let right = {
        let mut a = DenseMatrix::zeros(d + n, n);
        a.view_mut((0, 0), (d, n)).copy_from(&x.transpose());
        a.view_mut((d, 0), (n, n)).fill_diagonal(sl);
        let mut b = DenseMatrix::zeros(d + n, d);
        b.view_mut((0, 0), (d, d)).fill_diagonal(1.0);
        qr_lstsq(a, &b).transpose()
    };
    Ok((left - right).amax())
}

/// Proximal operator of τ‖·‖_*.
pub fn svt(m: &DenseMatrix, tau: f64) -> DenseMatrix {
    let (u, mut s, vt) = thin_svd(m);
    for v in s.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
    &u * DenseMatrix::from_diagonal(&s) * &vt
}

fn is_symmetric(a: &DenseMatrix, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(a: &DenseMatrix) -> DenseMatrix {
    (a + a.transpose()) * 0.5
}

pub fn eigenvalues(a: &DenseMatrix) -> Vector {
    if a.nrows() == 0 {
        return Vector::zeros(0);
    }
    let mut v = to_faer(&symmetrize(a))
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("symmetric eigendecomposition converges");
    v.sort_by(f64::total_cmp);
    Vector::from_vec(v)
}

pub fn min_eigenvalue(a: &DenseMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    eigenvalues(a).iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(a: &DenseMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    eigenvalues(a).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Tests `A ⪰ B`, i.e. `A - B` PSD up to `tol`.
pub fn loewner_geq(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> Result<PsdCheckResult> {
    if a.shape() != b.shape() {
        return invalid(format!("shape mismatch {:?} vs {:?}", a.shape(), b.shape()));
    }
    require_finite(a, "A")?;
    require_finite(b, "B")?;
    if !is_symmetric(a, SYM_TOL) || !is_symmetric(b, SYM_TOL) {
        return invalid("loewner_geq inputs must be symmetric");
    }
    let min_eigenvalue = min_eigenvalue(&(a - b));
    Ok(PsdCheckResult { is_psd: min_eigenvalue >= -tol, min_eigenvalue, tolerance_used: tol })
}

/// Balanced split Θ = BW with B = U S^{1/2}, W = S^{1/2} Vᵀ.
pub fn factor_split(theta: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (u, s, vt) = thin_svd(theta);
    let half = DenseMatrix::from_diagonal(&s.map(f64::sqrt));
    (&u * &half, &half * &vt)
}

/// Symmetric PSD square root via eigendecomposition (negative eigenvalues clipped).
pub fn sqrt_psd(a: &DenseMatrix) -> DenseMatrix {
    let (vals, q) = sym_eigen(a);
    let root = vals.map(|v| v.max(0.0).sqrt());
    &q * DenseMatrix::from_diagonal(&root) * q.transpose()
}

/// Orthonormal Q from a thin Householder QR, with column signs fixed so diag(R) ≥ 0.
pub fn orthonormalize(a: &DenseMatrix) -> DenseMatrix {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, gaussian_vector, stream};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn qr_projector_oracle(a: &DenseMatrix) -> DenseMatrix {
        let q = a.clone().qr().q();
        &q * q.transpose()
    }

    #[test]
    fn projector_of_identity_columns() {
        let a = DenseMatrix::identity(3, 3).columns(0, 2).into_owned();
        let p = projector(&a).unwrap();
        assert_abs_diff_eq!(p, DenseMatrix::from_diagonal(&Vector::from_vec(vec![1., 1., 0.])), epsilon = 1e-14);
    }

    #[test]
    fn projector_of_zero_is_zero() {
        let p = projector(&DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(p, DenseMatrix::zeros(3, 3));
        let pc = complement_projector(&DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(pc, DenseMatrix::identity(3, 3));
    }

    #[test]
    fn projector_random_matches_qr_oracle() {
        let mut rng = stream(1, "proj", 0);
        let a = gaussian_matrix(&mut rng, 5, 2);
        let p = projector(&a).unwrap();
        assert!((&p * &p - &p).amax() <= 1e-10);
        assert!((p.trace() - 2.0).abs() <= 1e-10);
        assert!((&p - qr_projector_oracle(&a)).amax() <= 1e-12);
    }

    #[test]
    fn projector_rejects_nan_and_empty() {
        let mut a = DenseMatrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(projector(&a), Err(Error::InvalidInput(_))));
        assert!(projector(&DenseMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn complement_of_full_rank_square_is_zero() {
        let mut rng = stream(1, "cproj", 0);
        let a = gaussian_matrix(&mut rng, 4, 4);
        assert!(complement_projector(&a).unwrap().amax() <= 1e-12);
        let b = gaussian_matrix(&mut rng, 6, 2);
        let pc = complement_projector(&b).unwrap();
        assert!((&pc * &b).amax() <= 1e-10);
    }

    #[test]
    fn ridge_scalar_example() {
        let x = DenseMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let y = Vector::from_vec(vec![1.0, 0.0]);
        let w = ridge_solve(&x, &y, 0.5).unwrap();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ridge_ols_limit() {
        let mut rng = stream(2, "ridge", 0);
        let x = gaussian_matrix(&mut rng, 4, 4);
        let y = gaussian_vector(&mut rng, 4);
        let w = ridge_solve(&x, &y, 0.0).unwrap();
        let direct = x.clone().lu().solve(&y).unwrap();
        assert!((w - direct).amax() <= 1e-10);
    }

    #[test]
    fn ridge_first_order_optimality() {
        let mut rng = stream(2, "ridge", 1);
        let x = gaussian_matrix(&mut rng, 8, 3);
        let y = gaussian_vector(&mut rng, 8);
        let w = ridge_solve(&x, &y, 0.1).unwrap();
        let grad = x.tr_mul(&(&x * &w - &y)) / 8.0 + &w * 0.1;
        assert!(grad.norm() <= 1e-9);
    }

    #[test]
    fn ridge_singular_reports_condition() {
        let x = DenseMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        match ridge_solve(&x, &y, 0.0) {
            Err(Error::Singular { condition }) => assert!(condition >= 1e12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn resolvent_gap_trivial_cases() {
        assert_eq!(resolvent_commute_gap(&DenseMatrix::zeros(4, 2), 2.0).unwrap(), 0.0);
        assert!(resolvent_commute_gap(&DenseMatrix::identity(3, 3), 1.0).unwrap() <= 1e-15);
        assert!(resolvent_commute_gap(&DenseMatrix::identity(3, 3), 0.0).is_err());
    }

    #[test]
    fn resolvent_gap_random_batch() {
        use rand::Rng;
        let mut rng = stream(3, "gap", 0);
        for _ in 0..200 {
            let n = rng.random_range(1..=30);
            let m = rng.random_range(1..=30);
            let lambda = 10f64.powf(rng.random_range(-6.0..=3.0));
            let x = gaussian_matrix(&mut rng, n, m);
            let gap = resolvent_commute_gap(&x, lambda).unwrap();
            assert!(gap <= 1e-9 * (1.0 + spectral_norm(&x)), "gap {gap} at n={n} m={m} lambda={lambda}");
        }
    }

    #[test]
    fn svt_examples() {
        let m = DenseMatrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0]));
        let out = svt(&m, 2.0);
        assert_abs_diff_eq!(out, DenseMatrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0])), epsilon = 1e-14);
        let mut rng = stream(4, "svt", 0);
        let r = gaussian_matrix(&mut rng, 4, 3);
        assert!((svt(&r, 0.0) - &r).amax() <= 1e-13);
    }

    #[test]
    fn svt_beats_random_perturbations() {
        let mut rng = stream(4, "svt", 1);
        let m = gaussian_matrix(&mut rng, 4, 3);
        let tau = 0.7;
        let obj = |z: &DenseMatrix| 0.5 * (z - &m).norm_squared() + tau * nuclear_norm(z);
        let z = svt(&m, tau);
        let best = obj(&z);
        for i in 0..1000 {
            let scale = 10f64.powi(-(i % 4) - 1);
            let pert = gaussian_matrix(&mut rng, 4, 3) * scale;
            assert!(obj(&(&z + pert)) >= best - 1e-12);
        }
    }

    #[test]
    fn loewner_examples() {
        let i3 = DenseMatrix::identity(3, 3);
        let r = loewner_geq(&(&i3 * 2.0), &i3, 1e-12).unwrap();
        assert!(r.is_psd);
        assert_abs_diff_eq!(r.min_eigenvalue, 1.0, epsilon = 1e-12);
        let r = loewner_geq(&i3, &(&i3 * 2.0), 1e-12).unwrap();
        assert!(!r.is_psd);
        assert_abs_diff_eq!(r.min_eigenvalue, -1.0, epsilon = 1e-12);
        let mut rng = stream(5, "loew", 0);
        let g = gaussian_matrix(&mut rng, 5, 5);
        let m = &g * g.transpose();
        let shifted = &m + DenseMatrix::identity(5, 5) * 1e-3;
        assert!(loewner_geq(&shifted, &m, 0.0).unwrap().is_psd);
    }

    #[test]
    fn loewner_rejects_asymmetric() {
        let mut a = DenseMatrix::identity(2, 2);
        a[(0, 1)] = 1.0;
        assert!(loewner_geq(&a, &DenseMatrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn factor_split_examples() {
        let theta = DenseMatrix::from_diagonal(&Vector::from_vec(vec![4.0, 1.0]));
        let (b, w) = factor_split(&theta);
        assert_abs_diff_eq!(b.abs(), DenseMatrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0])), epsilon = 1e-12);
        assert_abs_diff_eq!(w.abs(), DenseMatrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0])), epsilon = 1e-12);
        assert_abs_diff_eq!(&b * &w, theta, epsilon = 1e-12);
        let (b0, w0) = factor_split(&DenseMatrix::zeros(3, 2));
        assert_eq!(b0.amax(), 0.0);
        assert_eq!(w0.amax(), 0.0);
    }

    #[test]
    fn nuclear_norm_examples() {
        assert_abs_diff_eq!(nuclear_norm(&DenseMatrix::identity(4, 4)), 4.0, epsilon = 1e-12);
        let u = Vector::from_vec(vec![1.0, 2.0, 2.0]);
        let v = Vector::from_vec(vec![3.0, 4.0]);
        assert_abs_diff_eq!(nuclear_norm(&(&u * v.transpose())), 15.0, epsilon = 1e-12);
        let mut rng = stream(6, "nuc", 0);
        let m = gaussian_matrix(&mut rng, 5, 3);
        let oracle = sqrt_psd(&m.tr_mul(&m)).trace();
        assert!((nuclear_norm(&m) - oracle).abs() <= 1e-9);
    }

    #[test]
    fn pinv_and_lstsq_agree() {
        let mut rng = stream(7, "pinv", 0);
        let a = gaussian_matrix(&mut rng, 6, 3) * gaussian_matrix(&mut rng, 3, 5);
        let y = gaussian_vector(&mut rng, 6);
        let p = pinv(&a);
        assert!((&a * &p * &a - &a).amax() <= 1e-10);
        assert!((&p * &y - lstsq_min_norm(&a, &y)).amax() <= 1e-10);
    }

    fn seeded_matrix(seed: u64, r: usize, c: usize) -> DenseMatrix {
        gaussian_matrix(&mut stream(seed, "prop", 0), r, c)
    }

    proptest! {
        #[test]
        fn projector_properties(seed in any::<u64>(), r in 1usize..9, c in 1usize..6, rank in 1usize..6) {
            let inner = rank.min(c);
            let a = seeded_matrix(seed, r, inner) * seeded_matrix(seed ^ 1, inner, c);
            let p = projector(&a).unwrap();
            prop_assert!((&p - p.transpose()).amax() == 0.0);
            prop_assert!((&p * &p - &p).amax() <= 1e-10);
            prop_assert!((&p * &a - &a).amax() <= 1e-9 * a.norm().max(1.0));
            let eig = eigenvalues(&p);
            prop_assert!(eig.iter().all(|&v| v >= -1e-10 && v <= 1.0 + 1e-10));
        }

        #[test]
        fn svt_shrinks_singular_values(seed in any::<u64>(), r in 1usize..7, c in 1usize..7, tau in 0.0f64..3.0) {
            let m = seeded_matrix(seed, r, c);
            let s = singular_values(&m);
            let out = singular_values(&svt(&m, tau));
            for (a, b) in s.iter().zip(out.iter()) {
                prop_assert!(((a - tau).max(0.0) - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn factor_split_balance(seed in any::<u64>(), r in 1usize..8, c in 1usize..8) {
            let theta = seeded_matrix(seed, r, c);
            let (b, w) = factor_split(&theta);
            let nn = nuclear_norm(&theta);
            prop_assert!((&b * &w - &theta).amax() <= 1e-9 * theta.amax().max(1.0));
            prop_assert!((b.norm_squared() - nn).abs() <= 1e-9 * nn.max(1.0));
            prop_assert!((w.norm_squared() - nn).abs() <= 1e-9 * nn.max(1.0));
        }

        #[test]
        fn loewner_magic_projection(seed in any::<u64>(), n2 in 1usize..8, extra in 0usize..6, m in 1usize..6, kb in 1usize..4, kbp in 1usize..4) {
            let a2 = seeded_matrix(seed, n2, m);
            let g = seeded_matrix(seed ^ 2, extra, m);
            let mut a1 = DenseMatrix::zeros(n2 + extra, m);
            a1.view_mut((0, 0), (n2, m)).copy_from(&a2);
            a1.view_mut((n2, 0), (extra, m)).copy_from(&g);
            let b = seeded_matrix(seed ^ 3, m, kb);
            let bp = seeded_matrix(seed ^ 4, m, kbp);
            let lhs = (complement_projector(&(&a1 * &b)).unwrap() * &a1 * &bp).norm_squared();
            let rhs = (complement_projector(&(&a2 * &b)).unwrap() * &a2 * &bp).norm_squared();
            prop_assert!(lhs >= rhs - 1e-8);
        }

        #[test]
        fn resolvent_gap_bounded(seed in any::<u64>(), n in 1usize..20, m in 1usize..20, loglam in -6.0f64..3.0) {
            let x = seeded_matrix(seed, n, m);
            let gap = resolvent_commute_gap(&x, 10f64.powf(loglam)).unwrap();
            prop_assert!(gap <= 1e-9 * (1.0 + spectral_norm(&x)));
        }
    }
}
