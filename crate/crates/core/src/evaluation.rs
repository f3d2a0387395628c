//! Scoring of estimated projections: the subspace distance to a known
//! optimum and downstream Gaussian kernel ridge regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Projection;
use crate::error::{check_dim, Error, Result};
use crate::linalg::ShiftedSpd;
use crate::lsqmid::{make_folds, training_sets};
use crate::par::{map_range, Execution};

/// Smallest ridge ever used, so the kernel system stays solvable.
pub const RIDGE_FLOOR: f64 = 1e-10;

/// `||W_opt^T W_opt - W^T W||_F`, the distance between the two row-space projectors.
pub fn dr_error(w_opt: &Projection, w_hat: &Projection) -> Result<f64> {
    check_dim("projection input dimension", w_opt.dx(), w_hat.dx())?;
    check_dim("projection output dimension", w_opt.dz(), w_hat.dz())?;
    let a = w_opt.matrix().transpose() * w_opt.matrix();
    let b = w_hat.matrix().transpose() * w_hat.matrix();
    Ok((a - b).norm())
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidParameter("rmse of an empty sample".into()));
    }
    let ss: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / y_true.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrrGrid {
    /// Multiples of the median pairwise distance between training inputs.
    pub width_factors: Vec<f64>,
    pub ridges: Vec<f64>,
    pub folds: usize,
}

impl Default for KrrGrid {
    fn default() -> Self {
        Self {
            width_factors: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            ridges: vec![1e-6, 1e-4, 1e-2, 1.0],
            folds: 5,
        }
    }
}

impl KrrGrid {
    pub fn validate(&self) -> Result<()> {
        if self.width_factors.is_empty() || self.ridges.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.width_factors.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("kernel width factors must be positive".into()));
        }
        if self.ridges.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter("ridge parameters must be non-negative".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }
}

/// Gaussian-kernel ridge regressor `f(z) = mean + sum_i coef_i k(z, z_i)`.
#[derive(Debug, Clone)]
pub struct KrrModel {
    pub train: DMatrix<f64>,
    pub coef: DVector<f64>,
    pub offset: f64,
    pub width: f64,
    pub ridge: f64,
}

impl KrrModel {
    pub fn fit(z: &DMatrix<f64>, y: &[f64], width: f64, ridge: f64) -> Result<Self> {
        check_dim("sample count of y", z.nrows(), y.len())?;
        if z.nrows() == 0 {
            return Err(Error::InvalidParameter("no training samples".into()));
        }
        let k = gaussian_kernel(z, z, width);
        let (offset, centered) = center(y);
        let coef = ShiftedSpd::new(&k, ridge.max(RIDGE_FLOOR))?.solve(&centered)?;
        Ok(Self {
            train: z.clone(),
            coef,
            offset,
            width,
            ridge,
        })
    }

    pub fn predict(&self, z: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_dim("input dimension", self.train.ncols(), z.ncols())?;
        let k = gaussian_kernel(z, &self.train, self.width);
        Ok((k * &self.coef).iter().map(|v| v + self.offset).collect())
    }
}

fn center(y: &[f64]) -> (f64, DVector<f64>) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (mean, DVector::from_iterator(y.len(), y.iter().map(|v| v - mean)))
}

/// `k(a_i, b_j) = exp(-||a_i - b_j||^2 / (2 width^2))`.
pub fn gaussian_kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, width: f64) -> DMatrix<f64> {
    let s2 = 2.0 * width * width;
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let d: f64 = (0..a.ncols()).map(|c| (a[(i, c)] - b[(j, c)]).powi(2)).sum();
        (-d / s2).exp()
    })
}

/// Median of the pairwise Euclidean distances between distinct rows; 1 when all rows coincide.
pub fn median_pairwise_distance(z: &DMatrix<f64>) -> f64 {
    let n = z.nrows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push((z.row(i) - z.row(j)).norm());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    if med > 0.0 { med } else { 1.0 }
}

/// Outcome of the KRR grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrrSelection {
    pub width: f64,
    pub ridge: f64,
    /// Mean held-out squared error.
    pub score: f64,
}

/// K-fold selection of kernel width and ridge on held-out squared error.
pub fn krr_cv_with_folds(
    z: &DMatrix<f64>,
    y: &[f64],
    grid: &KrrGrid,
    folds: &[Vec<usize>],
    exec: Execution,
) -> Result<KrrSelection> {
    grid.validate()?;
    check_dim("sample count of y", z.nrows(), y.len())?;
    let train = training_sets(z.nrows(), folds);
    let median = median_pairwise_distance(z);
    let yv = DVector::from_column_slice(y);
    let rows = map_range(exec, grid.width_factors.len(), |wi| {
        let width = grid.width_factors[wi] * median;
        let k = gaussian_kernel(z, z, width);
        grid.ridges
            .iter()
            .map(|&ridge| {
                let mut total = 0.0;
                for (held, tr) in folds.iter().zip(&train) {
                    let ktr = k.select_rows(tr).select_columns(tr);
                    let ytr: Vec<f64> = tr.iter().map(|&i| yv[i]).collect();
                    let (offset, centered) = center(&ytr);
                    let Ok(coef) = ShiftedSpd::new(&ktr, ridge.max(RIDGE_FLOOR)).and_then(|s| s.solve(&centered)) else {
                        return f64::INFINITY;
                    };
                    let pred = k.select_rows(held).select_columns(tr) * coef;
                    total += held.iter().zip(pred.iter()).map(|(&i, p)| (yv[i] - p - offset).powi(2)).sum::<f64>()
                        / held.len() as f64;
                }
                total / folds.len() as f64
            })
            .collect::<Vec<f64>>()
    });
    let mut best: Option<KrrSelection> = None;
    for (wi, row) in rows.iter().enumerate() {
        for (ri, &score) in row.iter().enumerate() {
            if score.is_finite() && best.is_none_or(|b| score < b.score) {
                best = Some(KrrSelection {
                    width: grid.width_factors[wi] * median,
                    ridge: grid.ridges[ri],
                    score,
                });
            }
        }
    }
    best.ok_or(Error::SolveFailure(f64::INFINITY))
}

/// Selects width and ridge by K-fold CV, then refits on all training samples.
pub fn krr_fit_cv(z: &DMatrix<f64>, y: &[f64], grid: &KrrGrid, seed: u64, exec: Execution) -> Result<KrrModel> {
    grid.validate()?;
    if z.nrows() < grid.folds {
        return Err(Error::InvalidParameter(format!(
            "need at least {} training samples, got {}",
            grid.folds,
            z.nrows()
        )));
    }
    let folds = make_folds(z.nrows(), grid.folds, seed)?;
    let sel = krr_cv_with_folds(z, y, grid, &folds, exec)?;
    KrrModel::fit(z, y, sel.width, sel.ridge)
}
