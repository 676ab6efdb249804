//! Bernstein polynomial curves sampled on a uniform grid.
//!
//! A trajectory with `m` dimensions and `H` waypoints is represented by
//! control points `alpha` of shape `(m, c + 1)` for a degree-`c` curve.
//! Waypoints are `tau = alpha · B` where `B` is the `(c + 1) × H` basis
//! matrix with `B[j, k] = C(c, j) x_k^j (1 - x_k)^(c - j)` on the grid
//! `x_k = k / (H - 1)`.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{chol_solve, cholesky};

/// Control points of shape `(m, c + 1)`: one row per dimension.
pub type ControlPoints = Array2<f64>;
/// Waypoints of shape `(m, H)`: one column per grid point.
pub type Waypoints = Array2<f64>;

/// Basis matrix plus cached least-squares factorization for a fixed
/// `(degree, horizon)` pair.
#[derive(Debug, Clone)]
pub struct BernsteinTransform {
    degree: usize,
    horizon: usize,
    /// `(c + 1) × H` basis matrix.
    basis: Array2<f64>,
    /// Cholesky factor of the Gram matrix `B Bᵀ`; present iff `H >= c + 1`
    /// so that least-squares fitting is well posed.
    gram_chol: Option<Array2<f64>>,
}

impl BernsteinTransform {
    /// Builds the basis for a degree-`c` curve sampled at `horizon` grid
    /// points. Requires `degree >= 1` and `horizon >= 2`.
    pub fn new(degree: usize, horizon: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidConfig(
                "curve degree must be at least 1".into(),
            ));
        }
        if horizon < 2 {
            return Err(Error::InvalidConfig(format!(
                "horizon must be at least 2, got {horizon}"
            )));
        }
        let c = degree;
        let h = horizon;
        let mut basis = Array2::<f64>::zeros((c + 1, h));
        let binom = binomial_row(c);
        for k in 0..h {
            let x = k as f64 / (h - 1) as f64;
            for j in 0..=c {
                basis[[j, k]] = binom[j] * x.powi(j as i32) * (1.0 - x).powi((c - j) as i32);
            }
        }
        let gram_chol = if h >= c + 1 {
            let gram = basis.dot(&basis.t());
            Some(cholesky(&gram).map_err(|e| {
                Error::Numerical(format!(
                    "basis Gram matrix for degree {c}, horizon {h} failed to factor: {e}"
                ))
            })?)
        } else {
            None
        };
        Ok(Self { degree, horizon, basis, gram_chol })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The `(c + 1) × H` basis matrix.
    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    /// Decodes control points into waypoints: `tau = alpha · B`.
    pub fn evaluate(&self, alpha: &ControlPoints) -> Result<Waypoints> {
        self.check_coeff_shape(alpha, "evaluate")?;
        Ok(alpha.dot(&self.basis))
    }

    /// Least-squares fit of control points to waypoints, minimizing
    /// `‖alpha · B - tau‖_F`. Exact for waypoints that already lie on a
    /// degree-`c` curve. Requires `H >= c + 1`.
    pub fn fit(&self, tau: &Waypoints) -> Result<ControlPoints> {
        if tau.ncols() != self.horizon {
            return Err(Error::ShapeMismatch(format!(
                "fit expects {} waypoint columns, got {}",
                self.horizon,
                tau.ncols()
            )));
        }
        let chol = self.gram_chol.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "fit needs horizon >= degree + 1 ({} >= {}), system is underdetermined",
                self.horizon,
                self.degree + 1
            ))
        })?;
        let m = tau.nrows();
        let n = self.degree + 1;
        let mut alpha = Array2::<f64>::zeros((m, n));
        for (i, tau_row) in tau.axis_iter(Axis(0)).enumerate() {
            let t = tau_row.to_owned();
            let rhs = self.basis.dot(&t);
            let mut a = chol_solve(chol, &rhs);
            // Two rounds of iterative refinement: the Bernstein Gram matrix
            // is ill-conditioned at higher degrees and a plain solve loses
            // several digits.
            for _ in 0..2 {
                let residual = &t - &self.basis.t().dot(&a);
                let correction = chol_solve(chol, &self.basis.dot(&residual));
                a += &correction;
            }
            alpha.row_mut(i).assign(&a);
        }
        Ok(alpha)
    }

    /// Maps a cost gradient over waypoints to a gradient over control
    /// points via the chain rule for `q = alpha · B`: returns `grad_q · Bᵀ`.
    pub fn precondition_gradient(&self, grad_q: &Waypoints) -> Result<ControlPoints> {
        if grad_q.ncols() != self.horizon {
            return Err(Error::ShapeMismatch(format!(
                "gradient has {} waypoint columns, transform expects {}",
                grad_q.ncols(),
                self.horizon
            )));
        }
        Ok(grad_q.dot(&self.basis.t()))
    }

    fn check_coeff_shape(&self, alpha: &ControlPoints, op: &str) -> Result<()> {
        if alpha.ncols() != self.degree + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{op} expects {} control point columns for degree {}, got {}",
                self.degree + 1,
                self.degree,
                alpha.ncols()
            )));
        }
        Ok(())
    }
}

/// Control points of the `order`-th derivative curve with respect to the
/// curve parameter `x ∈ [0, 1]`. Each application lowers the degree by one
/// using `b'_j = c (b_{j+1} - b_j)`. `order` must not exceed the degree.
pub fn derivative_coefficients(alpha: &ControlPoints, order: usize) -> Result<ControlPoints> {
    let degree = alpha
        .ncols()
        .checked_sub(1)
        .filter(|&c| c >= 1 || order == 0)
        .ok_or_else(|| {
            Error::ShapeMismatch("control points need at least one column".into())
        })?;
    if order > degree {
        return Err(Error::InvalidConfig(format!(
            "derivative order {order} exceeds curve degree {degree}"
        )));
    }
    let mut current = alpha.clone();
    for level in 0..order {
        let c = (degree - level) as f64;
        let cols = current.ncols();
        let m = current.nrows();
        let mut next = Array2::<f64>::zeros((m, cols - 1));
        for i in 0..m {
            for j in 0..cols - 1 {
                next[[i, j]] = c * (current[[i, j + 1]] - current[[i, j]]);
            }
        }
        current = next;
    }
    Ok(current)
}

/// Row of binomial coefficients `C(c, 0..=c)`, exact in f64 for the small
/// degrees used here.
fn binomial_row(c: usize) -> Array1<f64> {
    let mut row = Array1::<f64>::zeros(c + 1);
    row[0] = 1.0;
    for j in 1..=c {
        row[j] = row[j - 1] * (c - j + 1) as f64 / j as f64;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_coeffs(rng: &mut ChaCha8Rng, m: usize, cols: usize) -> ControlPoints {
        Array2::from_shape_fn((m, cols), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(BernsteinTransform::new(0, 50).is_err());
        assert!(BernsteinTransform::new(3, 0).is_err());
        assert!(BernsteinTransform::new(3, 1).is_err());
    }

    #[test]
    fn linear_basis_is_exact() {
        let t = BernsteinTransform::new(1, 3).unwrap();
        let expected = array![[1.0, 0.5, 0.0], [0.0, 0.5, 1.0]];
        assert_eq!(t.basis(), &expected);
    }

    #[test]
    fn quadratic_midpoint_column() {
        let t = BernsteinTransform::new(2, 3).unwrap();
        let mid = t.basis().column(1);
        assert_eq!(mid.to_vec(), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn columns_sum_to_one() {
        let t = BernsteinTransform::new(7, 50).unwrap();
        for col in t.basis().axis_iter(Axis(1)) {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoint_columns_are_exact_indicators() {
        let t = BernsteinTransform::new(7, 50).unwrap();
        let b = t.basis();
        for j in 0..=7 {
            assert_eq!(b[[j, 0]], if j == 0 { 1.0 } else { 0.0 });
            assert_eq!(b[[j, 49]], if j == 7 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn constant_coefficients_give_constant_curve() {
        let t = BernsteinTransform::new(5, 40).unwrap();
        let alpha = Array2::from_elem((2, 6), 0.7);
        let tau = t.evaluate(&alpha).unwrap();
        for v in tau.iter() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_one_curve_interpolates_linearly() {
        let t = BernsteinTransform::new(1, 5).unwrap();
        let alpha = array![[0.0, 1.0], [2.0, 0.0]];
        let tau = t.evaluate(&alpha).unwrap();
        for k in 0..5 {
            let x = k as f64 / 4.0;
            assert!((tau[[0, k]] - x).abs() < 1e-14);
            assert!((tau[[1, k]] - 2.0 * (1.0 - x)).abs() < 1e-14);
        }
    }

    #[test]
    fn waypoints_stay_in_control_point_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let alpha = random_coeffs(&mut rng, 2, 8);
            let t = BernsteinTransform::new(7, 50).unwrap();
            let tau = t.evaluate(&alpha).unwrap();
            for i in 0..2 {
                let row = alpha.row(i);
                let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for &v in tau.row(i) {
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn fit_recovers_exact_curves() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = BernsteinTransform::new(7, 50).unwrap();
        for _ in 0..20 {
            let alpha = random_coeffs(&mut rng, 2, 8);
            let tau = t.evaluate(&alpha).unwrap();
            let recovered = t.fit(&tau).unwrap();
            for (a, b) in alpha.iter().zip(recovered.iter()) {
                assert!((a - b).abs() < 1e-9, "fit drifted: {a} vs {b}");
            }
        }
    }

    #[test]
    fn fit_of_constant_waypoints_is_constant() {
        let t = BernsteinTransform::new(7, 50).unwrap();
        let tau = Array2::from_elem((2, 50), -0.3);
        let alpha = t.fit(&tau).unwrap();
        for v in alpha.iter() {
            assert!((v + 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_requires_enough_waypoints() {
        let t = BernsteinTransform::new(7, 7).unwrap();
        let tau = Array2::<f64>::zeros((2, 7));
        assert!(matches!(t.fit(&tau), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let t = BernsteinTransform::new(7, 50).unwrap();
        assert!(t.evaluate(&Array2::zeros((2, 5))).is_err());
        assert!(t.fit(&Array2::zeros((2, 49))).is_err());
        assert!(t.precondition_gradient(&Array2::zeros((2, 10))).is_err());
    }

    #[test]
    fn zero_gradient_preconditions_to_zero() {
        let t = BernsteinTransform::new(7, 50).unwrap();
        let g = t.precondition_gradient(&Array2::zeros((2, 50))).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_cost_gradient_preconditions_to_basis_row_sums() {
        // J = sum of x-coordinates of all waypoints, so dJ/dq is all ones in
        // the x row. The coefficient gradient must be the basis row sums,
        // which total H by partition of unity.
        let t = BernsteinTransform::new(7, 50).unwrap();
        let mut grad_q = Array2::<f64>::zeros((2, 50));
        grad_q.row_mut(0).fill(1.0);
        let g = t.precondition_gradient(&grad_q).unwrap();
        for j in 0..=7 {
            let row_sum = t.basis().row(j).sum();
            assert!((g[[0, j]] - row_sum).abs() < 1e-12);
            assert_eq!(g[[1, j]], 0.0);
        }
        assert!((g.row(0).sum() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn derivative_of_constant_curve_is_zero() {
        let alpha = Array2::from_elem((2, 8), 1.5);
        let d = derivative_coefficients(&alpha, 1).unwrap();
        assert_eq!(d.ncols(), 7);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn derivative_of_linear_curve_is_constant_slope() {
        // Quadratic control points on a straight line from p0 to p2.
        let alpha = array![[0.0, 0.5, 1.0], [2.0, 1.0, 0.0]];
        let d = derivative_coefficients(&alpha, 1).unwrap();
        for j in 0..2 {
            assert!((d[[0, j]] - 1.0).abs() < 1e-14);
            assert!((d[[1, j]] + 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_order_cannot_exceed_degree() {
        let alpha = Array2::<f64>::zeros((2, 4));
        assert!(derivative_coefficients(&alpha, 3).is_ok());
        assert!(derivative_coefficients(&alpha, 4).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences_of_waypoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1001;
        let t = BernsteinTransform::new(7, h).unwrap();
        let td = BernsteinTransform::new(6, h).unwrap();
        let alpha = random_coeffs(&mut rng, 2, 8);
        let tau = t.evaluate(&alpha).unwrap();
        let dtau = td.evaluate(&derivative_coefficients(&alpha, 1).unwrap()).unwrap();
        let scale = (h - 1) as f64;
        for i in 0..2 {
            for k in 1..h - 1 {
                let fd = (tau[[i, k + 1]] - tau[[i, k - 1]]) * 0.5 * scale;
                assert!(
                    (fd - dtau[[i, k]]).abs() < 1e-3,
                    "derivative mismatch at ({i}, {k}): fd {fd} vs {}",
                    dtau[[i, k]]
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_partition_of_unity(c in 1usize..=10, h in 2usize..=200) {
            let t = BernsteinTransform::new(c, h).unwrap();
            for col in t.basis().axis_iter(Axis(1)) {
                prop_assert!((col.sum() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_endpoint_interpolation(c in 1usize..=10, h in 2usize..=200, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alpha = random_coeffs(&mut rng, 2, c + 1);
            let t = BernsteinTransform::new(c, h).unwrap();
            let tau = t.evaluate(&alpha).unwrap();
            for i in 0..2 {
                prop_assert!((tau[[i, 0]] - alpha[[i, 0]]).abs() < 1e-14);
                prop_assert!((tau[[i, h - 1]] - alpha[[i, c]]).abs() < 1e-14);
            }
        }

        #[test]
        fn prop_fit_evaluate_roundtrip(c in 1usize..=10, extra in 0usize..190, seed in 0u64..1000) {
            let h = (c + 2 + extra).min(200);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alpha = random_coeffs(&mut rng, 2, c + 1);
            let t = BernsteinTransform::new(c, h).unwrap();
            let tau = t.evaluate(&alpha).unwrap();
            let recovered = t.fit(&tau).unwrap();
            for (a, b) in alpha.iter().zip(recovered.iter()) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }
}
