//! Least-squares QMI (LSQMI): fit the density difference itself with a
//! Gaussian model `alpha^T psi` and plug it into the QMI formula.

use nalgebra::{DMatrix, DVector};

use crate::basis::{centers_from_indices, sample_center_indices, BasisKind, BasisModel};
use crate::error::{check_dim, Result};
use crate::linalg::{solve_shifted_spd, ShiftedSpd};
use crate::lsqmid::{argmin_selection, make_folds, training_sets, CvGrid, Selection};
use crate::par::{map_range, Execution};

#[derive(Debug, Clone)]
pub struct LsqmiFit {
    pub basis: BasisModel,
    pub alpha: DVector<f64>,
    pub lambda: f64,
    pub d: DMatrix<f64>,
    pub q_hat: DVector<f64>,
}

impl LsqmiFit {
    /// `||(D + lambda I) alpha - q_hat|| / ||q_hat||`.
    pub fn relative_residual(&self) -> f64 {
        let mut a = self.d.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += self.lambda;
        }
        let r = (a * &self.alpha - &self.q_hat).norm();
        let qn = self.q_hat.norm();
        if qn == 0.0 { r } else { r / qn }
    }
}

/// Fits with centers taken from the given sample indices.
pub fn lsqmi_fit_with_indices(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    idx: &[usize],
    sigma: f64,
    lambda: f64,
) -> Result<LsqmiFit> {
    let (u, v) = centers_from_indices(z, y, idx);
    let basis = BasisModel::new(u, v, sigma, 0)?;
    let q_hat = basis.factors(z, y)?.paired_minus_product(BasisKind::Phi);
    let d = basis.gram_d();
    let alpha = solve_shifted_spd(&d, lambda, &q_hat)?;
    Ok(LsqmiFit {
        basis,
        alpha,
        lambda,
        d,
        q_hat,
    })
}

pub fn lsqmi_fit(z: &DMatrix<f64>, y: &DMatrix<f64>, sigma: f64, lambda: f64, b: usize, seed: u64) -> Result<LsqmiFit> {
    check_dim("sample count of y", z.nrows(), y.nrows())?;
    let idx = sample_center_indices(z.nrows(), b, seed)?;
    lsqmi_fit_with_indices(z, y, &idx, sigma, lambda)
}

/// `alpha^T q_hat - alpha^T D alpha / 2`.
pub fn lsqmi_value(fit: &LsqmiFit) -> f64 {
    fit.alpha.dot(&fit.q_hat) - 0.5 * fit.alpha.dot(&(&fit.d * &fit.alpha))
}

/// `alpha^T q_hat / 2`.
pub fn lsqmi_value_linear(fit: &LsqmiFit) -> f64 {
    0.5 * fit.alpha.dot(&fit.q_hat)
}

/// `alpha^T D alpha / 2`.
pub fn lsqmi_value_quadratic(fit: &LsqmiFit) -> f64 {
    0.5 * fit.alpha.dot(&(&fit.d * &fit.alpha))
}

/// K-fold selection of `(sigma, lambda)` using the held-out objective
/// `alpha_{-j}^T D alpha_{-j} / 2 - alpha_{-j}^T q_hat_j`.
pub fn lsqmi_cv(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &CvGrid,
    b: usize,
    seed: u64,
    exec: Execution,
) -> Result<Selection> {
    check_dim("sample count of y", z.nrows(), y.nrows())?;
    let idx = sample_center_indices(z.nrows(), b, seed)?;
    lsqmi_cv_with_indices(z, y, grid, &idx, seed, exec)
}

pub fn lsqmi_cv_with_indices(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &CvGrid,
    idx: &[usize],
    seed: u64,
    exec: Execution,
) -> Result<Selection> {
    grid.validate()?;
    let folds = make_folds(z.nrows(), grid.folds, seed)?;
    let train = training_sets(z.nrows(), &folds);
    let (u, v) = centers_from_indices(z, y, idx);
    let rows = map_range(exec, grid.sigmas.len(), |si| -> Result<Vec<Selection>> {
        let sigma = grid.sigmas[si];
        let basis = BasisModel::new(u.clone(), v.clone(), sigma, 0)?;
        let d = basis.gram_d();
        let factors = basis.factors(z, y)?;
        let per_fold: Vec<_> = folds
            .iter()
            .zip(&train)
            .map(|(held, tr)| {
                (
                    factors.select_rows(tr).paired_minus_product(BasisKind::Phi),
                    factors.select_rows(held).paired_minus_product(BasisKind::Phi),
                )
            })
            .collect();
        Ok(grid
            .lambdas
            .iter()
            .map(|&lambda| {
                let mut total = 0.0;
                let solver = ShiftedSpd::new(&d, lambda);
                for (q_train, q_held) in &per_fold {
                    match solver.as_ref().map_err(|_| ()).and_then(|s| s.solve(q_train).map_err(|_| ())) {
                        Ok(alpha) => total += 0.5 * alpha.dot(&(&d * &alpha)) - alpha.dot(q_held),
                        Err(_) => {
                            total = f64::INFINITY;
                            break;
                        }
                    }
                }
                Selection {
                    sigma,
                    lambda,
                    score: total / folds.len() as f64,
                }
            })
            .collect())
    });
    let mut cells = Vec::new();
    for r in rows {
        cells.extend(r?);
    }
    argmin_selection(cells)
}

/// LSQMI value at projection `w`, with centers re-read from the fixed sample indices.
pub fn lsqmi_value_at(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    w: &DMatrix<f64>,
    idx: &[usize],
    sigma: f64,
    lambda: f64,
) -> Result<f64> {
    let z = crate::data::project_raw(x, w)?;
    Ok(lsqmi_value(&lsqmi_fit_with_indices(&z, y, idx, sigma, lambda)?))
}

/// Central finite difference of [`lsqmi_value`] w.r.t. every entry of `w`,
/// refitting `alpha` at each perturbed `w` with `sigma`, `lambda` and the
/// center sample indices held fixed.
#[allow(clippy::too_many_arguments)]
pub fn lsqmi_w_gradient(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    w: &DMatrix<f64>,
    idx: &[usize],
    sigma: f64,
    lambda: f64,
    step: f64,
    exec: Execution,
) -> Result<DMatrix<f64>> {
    if !(step > 0.0) {
        return Err(crate::Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    check_dim("projection input dimension", x.ncols(), w.ncols())?;
    let (dz, dx) = w.shape();
    let entries = map_range(exec, dz * dx, |e| -> Result<f64> {
        let (r, c) = (e / dx, e % dx);
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[(r, c)] += step;
        wm[(r, c)] -= step;
        let fp = lsqmi_value_at(x, y, &wp, idx, sigma, lambda)?;
        let fm = lsqmi_value_at(x, y, &wm, idx, sigma, lambda)?;
        Ok((fp - fm) / (2.0 * step))
    });
    let mut g = DMatrix::zeros(dz, dx);
    for (e, v) in entries.into_iter().enumerate() {
        g[(e / dx, e % dx)] = v?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn toy(n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DMatrix::from_fn(n, 1, |i, _| z[(i, 0)].powi(2) + 0.15 * rng.sample::<f64, _>(StandardNormal));
        (z, y)
    }

    #[test]
    fn d_diagonal_and_residual() {
        let (z, y) = toy(40, 1);
        let f = lsqmi_fit(&z, &y, 0.8, 0.01, 15, 2).unwrap();
        for k in 0..15 {
            assert!((f.d[(k, k)] - (PI.sqrt() * 0.8).powi(2)).abs() < 1e-14);
        }
        assert!(f.relative_residual() < 1e-8);
    }

    #[test]
    fn zero_q_gives_zero_alpha() {
        let d = DMatrix::identity(4, 4);
        let alpha = solve_shifted_spd(&d, 0.5, &DVector::zeros(4)).unwrap();
        assert_eq!(alpha, DVector::zeros(4));
        let fit = LsqmiFit {
            basis: BasisModel::new(DMatrix::zeros(4, 1), DMatrix::zeros(4, 1), 1.0, 0).unwrap(),
            alpha,
            lambda: 0.5,
            d,
            q_hat: DVector::zeros(4),
        };
        assert_eq!(lsqmi_value(&fit), 0.0);
    }

    #[test]
    fn estimator_variants_agree_at_zero_lambda() {
        let (z, y) = toy(60, 3);
        // few well-separated centers keep D well conditioned
        let idx = [0, 10, 20, 30];
        let f = lsqmi_fit_with_indices(&z, &y, &idx, 0.3, 0.0).unwrap();
        let cond = {
            let e = f.d.symmetric_eigenvalues();
            e.max() / e.min()
        };
        assert!(cond < 1e8, "cond {cond}");
        let direct = 0.5 * f.q_hat.dot(&(f.d.clone().try_inverse().unwrap() * &f.q_hat));
        let v3 = lsqmi_value(&f);
        let v1 = lsqmi_value_linear(&f);
        let v2 = lsqmi_value_quadratic(&f);
        assert!((v1 - v2).abs() <= 1e-8 * v1.abs());
        assert!((v3 - direct).abs() <= 1e-8 * direct.abs());
        assert!((v3 - v1).abs() <= 1e-8 * v1.abs());
    }

    #[test]
    fn cv_singleton_and_determinism() {
        let (z, y) = toy(50, 4);
        let s = lsqmi_cv(&z, &y, &CvGrid::single(0.7, 0.1), 20, 1, Execution::Serial).unwrap();
        assert_eq!((s.sigma, s.lambda), (0.7, 0.1));
        let g = CvGrid::default();
        assert_eq!(
            lsqmi_cv(&z, &y, &g, 20, 1, Execution::Serial).unwrap(),
            lsqmi_cv(&z, &y, &g, 20, 1, Execution::Parallel).unwrap()
        );
    }

    #[test]
    fn cv_prefers_reasonable_width() {
        let (z, y) = toy(200, 5);
        let grid = CvGrid {
            sigmas: vec![1.0, 50.0],
            lambdas: vec![1e-3],
            folds: 5,
        };
        let s = lsqmi_cv(&z, &y, &grid, 100, 2, Execution::Serial).unwrap();
        assert_eq!(s.sigma, 1.0);
    }

    #[test]
    fn w_gradient_flat_for_independent_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DMatrix::from_fn(100, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DMatrix::from_fn(100, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = DMatrix::from_row_slice(1, 2, &[0.6, 0.8]);
        let idx: Vec<usize> = (0..30).collect();
        let g = lsqmi_w_gradient(&x, &y, &w, &idx, 1.0, 100.0, 1e-4, Execution::Serial).unwrap();
        assert!(g.amax() < 1e-3, "{g}");
    }

    #[test]
    fn w_gradient_agrees_with_one_sided_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(80, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DMatrix::from_fn(80, 1, |i, _| x[(i, 0)].powi(2));
        let w = DMatrix::from_row_slice(1, 2, &[0.8, 0.6]);
        let idx: Vec<usize> = (0..40).collect();
        let h = 1e-4;
        let central = lsqmi_w_gradient(&x, &y, &w, &idx, 0.8, 0.01, h, Execution::Serial).unwrap();
        let f0 = lsqmi_value_at(&x, &y, &w, &idx, 0.8, 0.01).unwrap();
        for c in 0..2 {
            let mut wp = w.clone();
            wp[(0, c)] += h;
            let fwd = (lsqmi_value_at(&x, &y, &wp, &idx, 0.8, 0.01).unwrap() - f0) / h;
            // forward difference carries an O(h) error term
            assert!((fwd - central[(0, c)]).abs() < 50.0 * h * (1.0 + central[(0, c)].abs()));
        }
    }
}
