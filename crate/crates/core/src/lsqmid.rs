//! Least-squares QMI derivative (LSQMID).
//!
//! For every output coordinate `ell` a linear model `g_ell = theta^T varphi`
//! of the derivative of the density difference `p(z,y) - p(z)p(y)` along
//! `z[ell]` is fitted by regularized least squares. Integration by parts
//! removes the unknown derivative from the objective, leaving
//! `theta = -(H + lambda I)^{-1} h_hat` with `H` the analytic Gram matrix of
//! the derivative basis and `h_hat` a paired-minus-product sample average.
//!
//! The fitted models give the gradient of QMI w.r.t. the projection matrix
//! directly ([`qmi_gradient`]), and for `dz = 1` a QMI approximation that is
//! consistent with that gradient ([`qmi_tilde`]).

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{centers_from_indices, sample_center_indices, BasisKind, BasisModel};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{solve_shifted_spd, ShiftedSpd};
use crate::par::{map_range, Execution};

/// Seed offset separating fold assignment from center selection.
const FOLD_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Candidate grids for K-fold model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvGrid {
    pub sigmas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub folds: usize,
}

impl Default for CvGrid {
    fn default() -> Self {
        Self {
            sigmas: vec![0.25, 0.5, 1.0, 1.5, 2.0],
            lambdas: vec![1e-3, 1e-2, 1e-1, 1.0],
            folds: 5,
        }
    }
}

impl CvGrid {
    pub fn single(sigma: f64, lambda: f64) -> Self {
        Self {
            sigmas: vec![sigma],
            lambdas: vec![lambda],
            folds: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.lambdas.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter("gaussian widths must be positive".into()));
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter("regularizers must be non-negative".into()));
        }
        Ok(())
    }
}

/// Chosen width and regularizer for one output coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub sigma: f64,
    pub lambda: f64,
    pub score: f64,
}

/// Fitted derivative models, one per output coordinate.
#[derive(Debug, Clone)]
pub struct DerivativeFit {
    pub models: Vec<BasisModel>,
    pub thetas: Vec<DVector<f64>>,
    pub lambdas: Vec<f64>,
    pub h_hats: Vec<DVector<f64>>,
}

impl DerivativeFit {
    pub fn dz(&self) -> usize {
        self.models.len()
    }

    /// `||(H + lambda I) theta + h_hat|| / ||h_hat||` per output coordinate.
    pub fn relative_residuals(&self) -> Vec<f64> {
        self.models
            .iter()
            .zip(&self.thetas)
            .zip(&self.lambdas)
            .zip(&self.h_hats)
            .map(|(((m, t), l), h)| {
                let mut a = m.gram_h();
                for i in 0..a.nrows() {
                    a[(i, i)] += l;
                }
                let r = (a * t + h).norm();
                let hn = h.norm();
                if hn == 0.0 { r } else { r / hn }
            })
            .collect()
    }
}

/// Gradient of the estimated QMI w.r.t. the dz x dx projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QmiGradient {
    pub grad: DMatrix<f64>,
}

/// `h_hat = (1/n) sum_i varphi'(z_i, y_i) - (1/n^2) sum_{i,j} varphi'(z_i, y_j)`
/// with `varphi'` the derivative of the model basis along `z[ell]`.
pub fn compute_h_hat(m: &BasisModel, z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(m.factors(z, y)?.paired_minus_product(BasisKind::VarphiDz))
}

/// `theta = -(H + lambda I)^{-1} h_hat`.
pub fn solve_theta(h: &DMatrix<f64>, lambda: f64, h_hat: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(-solve_shifted_spd(h, lambda, h_hat)?)
}

/// Fits every output coordinate with the given basis models.
pub fn fit_models(models: Vec<BasisModel>, lambdas: &[f64], z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DerivativeFit> {
    check_dim("regularizer count", models.len(), lambdas.len())?;
    let mut thetas = Vec::with_capacity(models.len());
    let mut h_hats = Vec::with_capacity(models.len());
    for (m, &lambda) in models.iter().zip(lambdas) {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("regularizer must be non-negative, got {lambda}")));
        }
        let h_hat = compute_h_hat(m, z, y)?;
        thetas.push(solve_theta(&m.gram_h(), lambda, &h_hat)?);
        h_hats.push(h_hat);
    }
    Ok(DerivativeFit {
        models,
        thetas,
        lambdas: lambdas.to_vec(),
        h_hats,
    })
}

/// Builds one model per output coordinate from shared center indices.
pub fn models_from_indices(z: &DMatrix<f64>, y: &DMatrix<f64>, idx: &[usize], sigmas: &[f64]) -> Result<Vec<BasisModel>> {
    check_dim("gaussian width count", z.ncols(), sigmas.len())?;
    let (u, v) = centers_from_indices(z, y, idx);
    sigmas
        .iter()
        .enumerate()
        .map(|(ell, &s)| BasisModel::new(u.clone(), v.clone(), s, ell))
        .collect()
}

/// Fits all `dz` derivative models with one shared random center draw.
pub fn fit(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sigmas: &[f64],
    lambdas: &[f64],
    b: usize,
    seed: u64,
) -> Result<DerivativeFit> {
    check_dim("sample count of y", z.nrows(), y.nrows())?;
    let idx = sample_center_indices(z.nrows(), b, seed)?;
    fit_models(models_from_indices(z, y, &idx, sigmas)?, lambdas, z, y)
}

fn check_fit_inputs(fit: &DerivativeFit, z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    check_dim("z dimension", fit.dz(), z.ncols())?;
    check_dim("sample count of y", z.nrows(), y.nrows())
}

/// Entry `(ell, l')` is
/// `(1/n) sum_i g_ell(z_i, y_i) x_i[l'] - (1/n^2) sum_{i,j} g_ell(z_i, y_j) x_i[l']`.
pub fn qmi_gradient(fit: &DerivativeFit, x: &DMatrix<f64>, z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<QmiGradient> {
    check_fit_inputs(fit, z, y)?;
    check_dim("sample count of x", z.nrows(), x.nrows())?;
    let mut grad = DMatrix::zeros(fit.dz(), x.ncols());
    for (ell, (m, theta)) in fit.models.iter().zip(&fit.thetas).enumerate() {
        let omega = m.factors(z, y)?.paired_minus_product_weights(theta, BasisKind::Varphi);
        grad.set_row(ell, &(omega.transpose() * x));
    }
    Ok(QmiGradient { grad })
}

/// QMI approximation available when `dz = 1`:
/// `(1/2n) sum_i theta^T phi(z_i, y_i) - (1/2n^2) sum_{i,j} theta^T phi(z_i, y_j)`.
pub fn qmi_tilde(fit: &DerivativeFit, z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if fit.dz() != 1 {
        return Err(Error::UnsupportedDimension(fit.dz()));
    }
    check_fit_inputs(fit, z, y)?;
    let f = fit.models[0].factors(z, y)?;
    Ok(0.5 * f.paired_minus_product(BasisKind::Phi).dot(&fit.thetas[0]))
}

/// Assigns the n samples to `k` near-equal folds using a seeded shuffle.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(FOLD_SEED_OFFSET)));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in perm.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for (j, f) in folds.iter_mut().enumerate() {
        if f.len() < 2 {
            return Err(Error::FoldTooSmall { fold: j, size: f.len() });
        }
        f.sort_unstable();
    }
    Ok(folds)
}

/// Complement of each fold, sorted.
pub fn training_sets(n: usize, folds: &[Vec<usize>]) -> Vec<Vec<usize>> {
    folds
        .iter()
        .map(|held| {
            let mut mask = vec![true; n];
            for &i in held {
                mask[i] = false;
            }
            (0..n).filter(|&i| mask[i]).collect()
        })
        .collect()
}

/// Picks the lowest finite score; ties go to the smaller sigma, then the smaller lambda.
pub(crate) fn argmin_selection(cells: impl IntoIterator<Item = Selection>) -> Result<Selection> {
    let mut best: Option<Selection> = None;
    for c in cells {
        if !c.score.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => (c.score, c.sigma, c.lambda) < (b.score, b.sigma, b.lambda),
        };
        if better {
            best = Some(c);
        }
    }
    best.ok_or(Error::SolveFailure(f64::INFINITY))
}

/// CV scores `(1/K) sum_j [ theta_{-j}^T H theta_{-j} / 2 + theta_{-j}^T h_hat_j ]` for every
/// `(sigma, lambda)` candidate of one output coordinate. Returns one row per sigma.
pub fn cv_scores(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    idx: &[usize],
    ell: usize,
    grid: &CvGrid,
    folds: &[Vec<usize>],
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let (u, v) = centers_from_indices(z, y, idx);
    let train = training_sets(z.nrows(), folds);
    let rows = map_range(exec, grid.sigmas.len(), |si| -> Result<Vec<f64>> {
        let model = BasisModel::new(u.clone(), v.clone(), grid.sigmas[si], ell)?;
        let h = model.gram_h();
        let factors = model.factors(z, y)?;
        let per_fold: Vec<(DVector<f64>, DVector<f64>)> = folds
            .iter()
            .zip(&train)
            .map(|(held, tr)| {
                (
                    factors.select_rows(tr).paired_minus_product(BasisKind::VarphiDz),
                    factors.select_rows(held).paired_minus_product(BasisKind::VarphiDz),
                )
            })
            .collect();
        Ok(grid
            .lambdas
            .iter()
            .map(|&lambda| {
                let Ok(solver) = ShiftedSpd::new(&h, lambda) else {
                    return f64::INFINITY;
                };
                let mut total = 0.0;
                for (h_train, h_held) in &per_fold {
                    match solver.solve(h_train) {
                        Ok(neg_theta) => {
                            let theta = -neg_theta;
                            total += 0.5 * theta.dot(&(&h * &theta)) + theta.dot(h_held);
                        }
                        Err(_) => return f64::INFINITY,
                    }
                }
                total / folds.len() as f64
            })
            .collect())
    });
    rows.into_iter().collect()
}

/// K-fold selection of `(sigma, lambda)` for every output coordinate.
/// Centers come from one seeded draw over all samples and are shared by all folds.
pub fn cross_validate(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &CvGrid,
    b: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Selection>> {
    check_dim("sample count of y", z.nrows(), y.nrows())?;
    let idx = sample_center_indices(z.nrows(), b, seed)?;
    cross_validate_with_indices(z, y, grid, &idx, seed, exec)
}

pub fn cross_validate_with_indices(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &CvGrid,
    idx: &[usize],
    seed: u64,
    exec: Execution,
) -> Result<Vec<Selection>> {
    grid.validate()?;
    let folds = make_folds(z.nrows(), grid.folds, seed)?;
    (0..z.ncols())
        .map(|ell| {
            let scores = cv_scores(z, y, idx, ell, grid, &folds, exec)?;
            argmin_selection(scores.iter().enumerate().flat_map(|(si, row)| {
                row.iter().enumerate().map(move |(li, &score)| Selection {
                    sigma: grid.sigmas[si],
                    lambda: grid.lambdas[li],
                    score,
                })
            }))
        })
        .collect()
}
