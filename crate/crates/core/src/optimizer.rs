//! Search for the projection maximizing QMI.
//!
//! Three drivers share one loop structure: re-project, refresh CV
//! parameters every `cv_refresh_every` iterations, refit, step.
//!
//! * [`optimize_fixed_point`]: the per-entry update `W <- (F1 - F2) / F3`
//!   obtained by splitting the estimated gradient, with periodic
//!   orthonormalization. Works for any `dz`.
//! * [`optimize_gradient_1d`]: projected gradient ascent on the unit sphere
//!   with Armijo backtracking on [`qmi_tilde`]. Needs `dz = 1`.
//! * [`optimize_lsqmi_fd`]: the same line search applied to the plug-in
//!   LSQMI value and its finite-difference gradient.
//!
//! [`multi_restart`] runs one of them from several random orthonormal
//! starts and keeps the solution with the largest estimated QMI.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{default_basis_count, sample_center_indices, BasisKind};
use crate::data::{orthonormalize, project_raw, Dataset, Projection};
use crate::error::{check_dim, Error, Result};
use crate::lsqmi::{lsqmi_cv_with_indices, lsqmi_fit_with_indices, lsqmi_value, lsqmi_value_at, lsqmi_w_gradient};
use crate::lsqmid::{
    cross_validate_with_indices, fit_models, models_from_indices, qmi_gradient, qmi_tilde, CvGrid, DerivativeFit,
    Selection,
};
use crate::par::{map_range, Execution};

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 30;
/// Central-difference step for the LSQMI gradient.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop once `||W_new - W_old||_F` falls below this.
    pub tol: f64,
    pub orthonormalize_every: usize,
    pub restarts: usize,
    pub cv_refresh_every: usize,
    pub seed: u64,
    pub f3_floor: f64,
    /// Number of Gaussian centers; `min(n, 200)` when unset.
    pub b: Option<usize>,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            orthonormalize_every: 5,
            restarts: 10,
            cv_refresh_every: 10,
            seed: 0,
            f3_floor: 1e-8,
            b: None,
            exec: Execution::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("max_iters", self.max_iters),
            ("orthonormalize_every", self.orthonormalize_every),
            ("restarts", self.restarts),
            ("cv_refresh_every", self.cv_refresh_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.f3_floor > 0.0 && self.f3_floor.is_finite()) {
            return Err(Error::InvalidParameter(format!("f3_floor must be positive, got {}", self.f3_floor)));
        }
        if self.b == Some(0) {
            return Err(Error::InvalidParameter("b must be at least 1".into()));
        }
        Ok(())
    }

    fn basis_count(&self, n: usize) -> usize {
        self.b.unwrap_or_else(|| default_basis_count(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    /// W was orthonormalized (or retracted) at the end of this iteration.
    pub orthonormalized: bool,
    pub delta_norm: f64,
    /// Objective or CV score when computed at this iteration.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OptTrace {
    pub records: Vec<IterRecord>,
    /// Error that stopped this run early, if any.
    pub aborted: Option<String>,
    /// Set when a line search gave up and the run stopped on a zero step.
    pub line_search_failed: bool,
}

impl OptTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Result of one optimizer run. `projection` is `None` when the run aborted.
#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub projection: Option<Projection>,
    pub trace: OptTrace,
}

impl OptOutcome {
    fn aborted(mut trace: OptTrace, err: Error) -> Self {
        trace.aborted = Some(err.to_string());
        Self { projection: None, trace }
    }
}

/// The three terms of the split gradient, each `dz x dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTerms {
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub f3: DMatrix<f64>,
}

impl FixedPointTerms {
    /// `F1 - F2 - W .* F3`, which equals the estimated QMI gradient.
    pub fn recombine(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        &self.f1 - &self.f2 - w.component_mul(&self.f3)
    }
}

/// Computes `F1`, `F2`, `F3` for every entry of `w` from a fit at `z = x w^T`.
pub fn fixed_point_terms(w: &DMatrix<f64>, fit: &DerivativeFit, x: &DMatrix<f64>, z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<FixedPointTerms> {
    let (dz, dx) = w.shape();
    check_dim("fit dimension", dz, fit.dz())?;
    check_dim("projection input dimension", dx, x.ncols())?;
    check_dim("sample count of z", x.nrows(), z.nrows())?;
    let mut f1 = DMatrix::zeros(dz, dx);
    let mut f2 = DMatrix::zeros(dz, dx);
    let mut f3 = DMatrix::zeros(dz, dx);
    for (ell, (m, theta)) in fit.models.iter().zip(&fit.thetas).enumerate() {
        let inv_s2 = m.sigma().powi(-2);
        let factors = m.factors(z, y)?;
        let omega = factors.paired_minus_product_weights(theta, BasisKind::Phi);
        let theta_u = theta.component_mul(&m.centers_u().column(m.ell()));
        let omega_u = factors.paired_minus_product_weights(&theta_u, BasisKind::Phi);
        f1.set_row(ell, &((omega_u.transpose() * x) * inv_s2));
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= omega[i];
        }
        let moment = x.transpose() * xw;
        for lp in 0..dx {
            let cross: f64 = (0..dx).filter(|&mm| mm != lp).map(|mm| w[(ell, mm)] * moment[(mm, lp)]).sum();
            f2[(ell, lp)] = cross * inv_s2;
            f3[(ell, lp)] = moment[(lp, lp)] * inv_s2;
        }
    }
    Ok(FixedPointTerms { f1, f2, f3 })
}

/// One Jacobi sweep of `W[l,l'] <- (F1 - F2) / F3`; entries with
/// `|F3| < f3_floor` keep their old value.
pub fn fixed_point_step(
    w: &DMatrix<f64>,
    fit: &DerivativeFit,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    f3_floor: f64,
) -> Result<DMatrix<f64>> {
    let t = fixed_point_terms(w, fit, x, z, y)?;
    Ok(DMatrix::from_fn(w.nrows(), w.ncols(), |r, c| {
        let f3 = t.f3[(r, c)];
        if f3.abs() < f3_floor { w[(r, c)] } else { (t.f1[(r, c)] - t.f2[(r, c)]) / f3 }
    }))
}

fn check_inputs(ds: &Dataset, w0: &Projection, cfg: &OptimizerConfig, grid: &CvGrid) -> Result<()> {
    cfg.validate()?;
    grid.validate()?;
    check_dim("projection input dimension", ds.dx(), w0.dx())
}

fn refresh_due(iter: usize, every: usize) -> bool {
    iter == 1 || (iter - 1).is_multiple_of(every)
}

fn fit_at(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    w: &DMatrix<f64>,
    idx: &[usize],
    sel: &[Selection],
) -> Result<(DMatrix<f64>, DerivativeFit)> {
    let z = project_raw(x, w)?;
    let sigmas: Vec<f64> = sel.iter().map(|s| s.sigma).collect();
    let lambdas: Vec<f64> = sel.iter().map(|s| s.lambda).collect();
    let fit = fit_models(models_from_indices(&z, y, idx, &sigmas)?, &lambdas, &z, y)?;
    Ok((z, fit))
}

/// Fixed-point iteration from a random orthonormal start drawn with `cfg.seed`.
pub fn optimize_fixed_point(ds: &Dataset, dz: usize, cfg: &OptimizerConfig, grid: &CvGrid) -> Result<OptOutcome> {
    let w0 = random_start(dz, ds.dx(), cfg.seed)?;
    optimize_fixed_point_from(ds, &w0, cfg, grid)
}

pub fn optimize_fixed_point_from(ds: &Dataset, w0: &Projection, cfg: &OptimizerConfig, grid: &CvGrid) -> Result<OptOutcome> {
    check_inputs(ds, w0, cfg, grid)?;
    let (x, y) = (ds.x(), ds.y());
    let idx = sample_center_indices(ds.n(), cfg.basis_count(ds.n()), cfg.seed)?;
    let mut trace = OptTrace::default();
    let mut w = w0.matrix().clone();
    let mut sel: Vec<Selection> = Vec::new();
    for iter in 1..=cfg.max_iters {
        let mut step = || -> Result<(DMatrix<f64>, Option<f64>)> {
            let mut score = None;
            if refresh_due(iter, cfg.cv_refresh_every) {
                let z = project_raw(x, &w)?;
                sel = cross_validate_with_indices(&z, y, grid, &idx, cfg.seed, cfg.exec)?;
                score = Some(sel.iter().map(|s| s.score).sum());
            }
            let (z, fit) = fit_at(x, y, &w, &idx, &sel)?;
            let next = fixed_point_step(&w, &fit, x, &z, y, cfg.f3_floor)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
            Ok((next, score))
        };
        let (mut next, score) = match step() {
            Ok(r) => r,
            Err(e) => return Ok(OptOutcome::aborted(trace, e)),
        };
        let orth = iter % cfg.orthonormalize_every == 0;
        if orth {
            next = match orthonormalize(&next) {
                Ok(p) => p.into_matrix(),
                Err(e) => return Ok(OptOutcome::aborted(trace, e)),
            };
        }
        let delta = (&next - &w).norm();
        w = next;
        trace.records.push(IterRecord {
            iter,
            orthonormalized: orth,
            delta_norm: delta,
            score,
        });
        if delta < cfg.tol {
            break;
        }
    }
    match orthonormalize(&w) {
        Ok(p) => Ok(OptOutcome {
            projection: Some(p),
            trace,
        }),
        Err(e) => Ok(OptOutcome::aborted(trace, e)),
    }
}

/// Objective used by the line-search ascent.
trait AscentObjective {
    /// Refits at `w`, reselecting hyperparameters when `refresh` is set.
    /// Returns the CV score if one was computed.
    fn prepare(&mut self, w: &DMatrix<f64>, refresh: bool) -> Result<Option<f64>>;
    /// Objective at a trial point, using the state from the last `prepare`.
    fn value(&self, w: &DMatrix<f64>) -> Result<f64>;
    /// Euclidean gradient at the prepared point.
    fn gradient(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>>;
    /// Ratio between the directional derivative of `value` and `<gradient, d>`.
    fn slope_scale(&self) -> f64;
}

/// `G - sym(G W^T) W`: projection onto the tangent space of the orthonormal-row manifold.
pub fn tangent_projection(g: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let gw = g * w.transpose();
    let sym = (&gw + gw.transpose()) * 0.5;
    g - sym * w
}

fn ascend(obj: &mut dyn AscentObjective, w0: &Projection, cfg: &OptimizerConfig) -> OptOutcome {
    let mut trace = OptTrace::default();
    let mut w = w0.matrix().clone();
    for iter in 1..=cfg.max_iters {
        let prepared = (|| -> Result<(Option<f64>, f64, DMatrix<f64>)> {
            let score = obj.prepare(&w, refresh_due(iter, cfg.cv_refresh_every))?;
            let f0 = obj.value(&w)?;
            let d = tangent_projection(&obj.gradient(&w)?, &w);
            Ok((score, f0, d))
        })();
        let (score, f0, d) = match prepared {
            Ok(r) => r,
            Err(e) => return OptOutcome::aborted(trace, e),
        };
        let dn = d.norm();
        if !(dn > 0.0) {
            trace.records.push(IterRecord {
                iter,
                orthonormalized: true,
                delta_norm: 0.0,
                score: score.or(Some(f0)),
            });
            break;
        }
        // unit direction so the initial step is measured in W's own scale
        let dir = d / dn;
        let slope = obj.slope_scale() * dn;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = orthonormalize(&(&w + &dir * t)).map(Projection::into_matrix);
            if let Ok(cand) = cand {
                if let Ok(f) = obj.value(&cand) {
                    if f >= f0 + ARMIJO_C1 * t * slope {
                        accepted = Some(cand);
                        break;
                    }
                }
            }
            t *= BACKTRACK;
        }
        let Some(next) = accepted else {
            trace.line_search_failed = true;
            trace.records.push(IterRecord {
                iter,
                orthonormalized: true,
                delta_norm: 0.0,
                score: score.or(Some(f0)),
            });
            break;
        };
        let delta = (&next - &w).norm();
        w = next;
        trace.records.push(IterRecord {
            iter,
            orthonormalized: true,
            delta_norm: delta,
            score: score.or(Some(f0)),
        });
        if delta < cfg.tol {
            break;
        }
    }
    match orthonormalize(&w) {
        Ok(p) => OptOutcome {
            projection: Some(p),
            trace,
        },
        Err(e) => OptOutcome::aborted(trace, e),
    }
}

struct TildeObjective<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DMatrix<f64>,
    idx: Vec<usize>,
    grid: &'a CvGrid,
    seed: u64,
    exec: Execution,
    sel: Vec<Selection>,
    state: Option<(DMatrix<f64>, DerivativeFit)>,
}

impl AscentObjective for TildeObjective<'_> {
    fn prepare(&mut self, w: &DMatrix<f64>, refresh: bool) -> Result<Option<f64>> {
        let mut score = None;
        if refresh {
            let z = project_raw(self.x, w)?;
            self.sel = cross_validate_with_indices(&z, self.y, self.grid, &self.idx, self.seed, self.exec)?;
            score = Some(self.sel[0].score);
        }
        self.state = Some(fit_at(self.x, self.y, w, &self.idx, &self.sel)?);
        Ok(score)
    }

    fn value(&self, w: &DMatrix<f64>) -> Result<f64> {
        let (_, fit) = self.state.as_ref().expect("prepared");
        qmi_tilde(fit, &project_raw(self.x, w)?, self.y)
    }

    fn gradient(&self, _w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (z, fit) = self.state.as_ref().expect("prepared");
        Ok(qmi_gradient(fit, self.x, z, self.y)?.grad)
    }

    fn slope_scale(&self) -> f64 {
        // qmi_tilde carries a factor 1/2 relative to the gradient estimate
        0.5
    }
}

struct LsqmiObjective<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DMatrix<f64>,
    idx: Vec<usize>,
    grid: &'a CvGrid,
    seed: u64,
    exec: Execution,
    sel: Option<Selection>,
}

impl AscentObjective for LsqmiObjective<'_> {
    fn prepare(&mut self, w: &DMatrix<f64>, refresh: bool) -> Result<Option<f64>> {
        if refresh {
            let z = project_raw(self.x, w)?;
            let sel = lsqmi_cv_with_indices(&z, self.y, self.grid, &self.idx, self.seed, self.exec)?;
            self.sel = Some(sel);
            return Ok(Some(sel.score));
        }
        Ok(None)
    }

    fn value(&self, w: &DMatrix<f64>) -> Result<f64> {
        let s = self.sel.expect("prepared");
        lsqmi_value_at(self.x, self.y, w, &self.idx, s.sigma, s.lambda)
    }

    fn gradient(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let s = self.sel.expect("prepared");
        lsqmi_w_gradient(self.x, self.y, w, &self.idx, s.sigma, s.lambda, FD_STEP, self.exec)
    }

    fn slope_scale(&self) -> f64 {
        1.0
    }
}

/// Gradient ascent on `qmi_tilde` over unit-norm `1 x dx` projections.
pub fn optimize_gradient_1d(ds: &Dataset, cfg: &OptimizerConfig, grid: &CvGrid) -> Result<OptOutcome> {
    let w0 = random_start(1, ds.dx(), cfg.seed)?;
    optimize_gradient_1d_from(ds, &w0, cfg, grid)
}

pub fn optimize_gradient_1d_from(ds: &Dataset, w0: &Projection, cfg: &OptimizerConfig, grid: &CvGrid) -> Result<OptOutcome> {
    check_inputs(ds, w0, cfg, grid)?;
    if w0.dz() != 1 {
        return Err(Error::UnsupportedDimension(w0.dz()));
    }
    let mut obj = TildeObjective {
        x: ds.x(),
        y: ds.y(),
        idx: sample_center_indices(ds.n(), cfg.basis_count(ds.n()), cfg.seed)?,
        grid,
        seed: cfg.seed,
        exec: cfg.exec,
        sel: Vec::new(),
        state: None,
    };
    Ok(ascend(&mut obj, w0, cfg))
}

/// Line-search ascent on the plug-in LSQMI value with a finite-difference gradient.
pub fn optimize_lsqmi_fd(ds: &Dataset, dz: usize, cfg: &OptimizerConfig, grid: &CvGrid) -> Result<OptOutcome> {
    let w0 = random_start(dz, ds.dx(), cfg.seed)?;
    optimize_lsqmi_fd_from(ds, &w0, cfg, grid)
}

pub fn optimize_lsqmi_fd_from(ds: &Dataset, w0: &Projection, cfg: &OptimizerConfig, grid: &CvGrid) -> Result<OptOutcome> {
    check_inputs(ds, w0, cfg, grid)?;
    let mut obj = LsqmiObjective {
        x: ds.x(),
        y: ds.y(),
        idx: sample_center_indices(ds.n(), cfg.basis_count(ds.n()), cfg.seed)?,
        grid,
        seed: cfg.seed,
        exec: cfg.exec,
        sel: None,
    };
    Ok(ascend(&mut obj, w0, cfg))
}

/// Random Gaussian `dz x dx` matrix, orthonormalized.
pub fn random_start(dz: usize, dx: usize, seed: u64) -> Result<Projection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Projection::random(dz, dx, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SdrMethod {
    #[default]
    #[serde(rename = "lsqmid-fp")]
    LsqmidFp,
    #[serde(rename = "lsqmid-grad1d")]
    LsqmidGrad1d,
    #[serde(rename = "lsqmi-fd")]
    LsqmiFd,
}

impl SdrMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LsqmidFp => "lsqmid-fp",
            Self::LsqmidGrad1d => "lsqmid-grad1d",
            Self::LsqmiFd => "lsqmi-fd",
        }
    }

    pub fn run_from(self, ds: &Dataset, w0: &Projection, cfg: &OptimizerConfig, grid: &CvGrid) -> Result<OptOutcome> {
        match self {
            Self::LsqmidFp => optimize_fixed_point_from(ds, w0, cfg, grid),
            Self::LsqmidGrad1d => optimize_gradient_1d_from(ds, w0, cfg, grid),
            Self::LsqmiFd => optimize_lsqmi_fd_from(ds, w0, cfg, grid),
        }
    }
}

impl fmt::Display for SdrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SdrMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsqmid-fp" => Ok(Self::LsqmidFp),
            "lsqmid-grad1d" => Ok(Self::LsqmidGrad1d),
            "lsqmi-fd" => Ok(Self::LsqmiFd),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartSummary {
    pub seed: u64,
    pub iterations: usize,
    /// Estimated QMI at the returned W, if the restart finished.
    pub score: Option<f64>,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MultiRestartResult {
    pub projection: Projection,
    pub score: f64,
    pub best: usize,
    pub restarts: Vec<RestartSummary>,
}

/// Estimated QMI at `w` for final selection: `qmi_tilde` for `dz = 1`,
/// the CV-tuned LSQMI value otherwise.
pub fn selection_score(ds: &Dataset, w: &Projection, cfg: &OptimizerConfig, grid: &CvGrid) -> Result<f64> {
    let z = project_raw(ds.x(), w.matrix())?;
    let y = ds.y();
    let idx = sample_center_indices(ds.n(), cfg.basis_count(ds.n()), cfg.seed)?;
    if w.dz() == 1 {
        let sel = cross_validate_with_indices(&z, y, grid, &idx, cfg.seed, Execution::Serial)?;
        let (_, fit) = fit_at(ds.x(), y, w.matrix(), &idx, &sel)?;
        qmi_tilde(&fit, &z, y)
    } else {
        let sel = lsqmi_cv_with_indices(&z, y, grid, &idx, cfg.seed, Execution::Serial)?;
        Ok(lsqmi_value(&lsqmi_fit_with_indices(&z, y, &idx, sel.sigma, sel.lambda)?))
    }
}

/// Runs `method` from `cfg.restarts` random starts (restart `r` uses seed
/// `cfg.seed + r`) and returns the highest-scoring solution.
pub fn multi_restart(ds: &Dataset, dz: usize, cfg: &OptimizerConfig, grid: &CvGrid, method: SdrMethod) -> Result<MultiRestartResult> {
    cfg.validate()?;
    grid.validate()?;
    if dz == 0 || dz > ds.dx() {
        return Err(Error::InvalidParameter(format!("dz must be in 1..={}, got {dz}", ds.dx())));
    }
    if method == SdrMethod::LsqmidGrad1d && dz != 1 {
        return Err(Error::UnsupportedDimension(dz));
    }
    let inner = Execution::Serial;
    let runs = map_range(cfg.exec, cfg.restarts, |r| -> Result<(RestartSummary, Option<Projection>)> {
        let seed = cfg.seed.wrapping_add(r as u64);
        let rcfg = OptimizerConfig {
            seed,
            exec: inner,
            ..cfg.clone()
        };
        let w0 = random_start(dz, ds.dx(), seed)?;
        let out = method.run_from(ds, &w0, &rcfg, grid)?;
        let mut aborted = out.trace.aborted.clone();
        let score = match &out.projection {
            Some(p) => match selection_score(ds, p, cfg, grid) {
                Ok(s) if s.is_finite() => Some(s),
                Ok(_) => {
                    aborted = Some("non-finite selection score".into());
                    None
                }
                Err(e) => {
                    aborted = Some(e.to_string());
                    None
                }
            },
            None => None,
        };
        let proj = if score.is_some() { out.projection } else { None };
        Ok((
            RestartSummary {
                seed,
                iterations: out.trace.iterations(),
                score,
                aborted,
            },
            proj,
        ))
    });
    let mut restarts = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, f64, Projection)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        let (summary, proj) = run?;
        if let (Some(s), Some(p)) = (summary.score, proj) {
            if best.as_ref().is_none_or(|(_, b, _)| s > *b) {
                best = Some((r, s, p));
            }
        }
        restarts.push(summary);
    }
    let (best, score, projection) = best.ok_or(Error::AllRestartsFailed(cfg.restarts))?;
    Ok(MultiRestartResult {
        projection,
        score,
        best,
        restarts,
    })
}
