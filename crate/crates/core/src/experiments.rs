//! Experiment drivers behind the `illustrate`, `sdr` and `bench` commands,
//! plus the writers for their output files.
//!
//! Trial `t` uses seed `seed + 1000 t`. Results are ordered by trial index
//! whatever the execution mode, so outputs depend only on the config.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::{default_basis_count, sample_center_indices};
use crate::config::{BenchConfig, IllustrateConfig, Metadata, SdrConfig};
use crate::data::{apply_standardization, project_raw, standardize, Dataset, Projection};
use crate::error::{Error, Result};
use crate::evaluation::{dr_error, krr_fit_cv, rmse};
use crate::lsqmi::{lsqmi_cv_with_indices, lsqmi_fit_with_indices, lsqmi_value};
use crate::lsqmid::{
    cross_validate_with_indices, fit_models, models_from_indices, qmi_gradient, qmi_tilde, Selection,
};
use crate::optimizer::{multi_restart, SdrMethod};
use crate::par::{map_range, Execution};
use crate::synthetic::{augment_with_noise_features, generate, rotation_projection, SyntheticName, SyntheticSpec};

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(1000 * trial as u64)
}

/// Evenly spaced angles on `[-pi/2, pi/2]`; a single point sits at 0.
pub fn theta_grid(points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    (0..points).map(|j| -FRAC_PI_2 + PI * j as f64 / (points - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IllustrateRow {
    pub trial: usize,
    pub theta: f64,
    pub qmi_tilde: f64,
    pub dqmi_lsqmid: f64,
    pub qmi_lsqmi: f64,
    pub dqmi_lsqmi_fd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IllustrateResult {
    pub rows: Vec<IllustrateRow>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Clone, Copy)]
struct AngleParams {
    lsqmid: Selection,
    lsqmi: Selection,
}

fn select_at(x: &DMatrix<f64>, y: &DMatrix<f64>, theta: f64, idx: &[usize], cfg: &IllustrateConfig, seed: u64) -> Result<AngleParams> {
    let z = project_raw(x, rotation_projection(theta).matrix())?;
    let lsqmid = cross_validate_with_indices(&z, y, &cfg.cv, idx, seed, Execution::Serial)?[0];
    let lsqmi = lsqmi_cv_with_indices(&z, y, &cfg.cv, idx, seed, Execution::Serial)?;
    Ok(AngleParams { lsqmid, lsqmi })
}

fn lsqmi_at(x: &DMatrix<f64>, y: &DMatrix<f64>, theta: f64, idx: &[usize], s: &Selection) -> Result<f64> {
    let z = project_raw(x, rotation_projection(theta).matrix())?;
    Ok(lsqmi_value(&lsqmi_fit_with_indices(&z, y, idx, s.sigma, s.lambda)?))
}

fn illustrate_trial(cfg: &IllustrateConfig, trial: usize) -> Result<Vec<IllustrateRow>> {
    let seed = trial_seed(cfg.seed, trial);
    let (raw, _) = generate(&SyntheticSpec::new(SyntheticName::Rotation, cfg.n, seed))?;
    let ds = standardize(&raw)?;
    let (x, y) = (ds.x(), ds.y());
    let idx = sample_center_indices(cfg.n, cfg.b.unwrap_or_else(|| default_basis_count(cfg.n)), seed)?;
    let fixed = if cfg.cv_at_zero { Some(select_at(x, y, 0.0, &idx, cfg, seed)?) } else { None };
    let mut rows = Vec::with_capacity(cfg.theta_points);
    for theta in theta_grid(cfg.theta_points) {
        let params = match &fixed {
            Some(p) => *p,
            None => select_at(x, y, theta, &idx, cfg, seed)?,
        };
        let w = rotation_projection(theta);
        let z = project_raw(x, w.matrix())?;
        let s = params.lsqmid;
        let fit = fit_models(models_from_indices(&z, y, &idx, &[s.sigma])?, &[s.lambda], &z, y)?;
        let g = qmi_gradient(&fit, x, &z, y)?.grad;
        let h = cfg.fd_step;
        let fd = (lsqmi_at(x, y, theta + h, &idx, &params.lsqmi)? - lsqmi_at(x, y, theta - h, &idx, &params.lsqmi)?) / (2.0 * h);
        rows.push(IllustrateRow {
            trial,
            theta,
            qmi_tilde: qmi_tilde(&fit, &z, y)?,
            dqmi_lsqmid: -theta.sin() * g[(0, 0)] + theta.cos() * g[(0, 1)],
            qmi_lsqmi: lsqmi_at(x, y, theta, &idx, &params.lsqmi)?,
            dqmi_lsqmi_fd: fd,
        });
    }
    Ok(rows)
}

/// Sweeps the rotation angle and records both QMI estimates and their angle derivatives.
pub fn run_illustrate(cfg: &IllustrateConfig, exec: Execution) -> Result<IllustrateResult> {
    cfg.validate()?;
    let per_trial = map_range(exec, cfg.trials, |t| illustrate_trial(cfg, t));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (trial, r) in per_trial.into_iter().enumerate() {
        match r {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(TrialFailure {
                trial,
                message: e.to_string(),
            }),
        }
    }
    Ok(IllustrateResult { rows, failures })
}

fn write_comments<W: Write>(out: &mut W, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(out, "# {l}")?;
    }
    Ok(())
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_illustrate_csv<W: Write>(out: &mut W, meta: &Metadata, res: &IllustrateResult) -> Result<()> {
    write_comments(out, &meta.comment_lines())?;
    for f in &res.failures {
        writeln!(out, "# trial {} failed: {}", f.trial, f.message)?;
    }
    writeln!(out, "trial,theta,qmi_tilde,dqmi_lsqmid,qmi_lsqmi,dqmi_lsqmi_fd")?;
    for r in &res.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.trial, r.theta, r.qmi_tilde, r.dqmi_lsqmid, r.qmi_lsqmi, r.dqmi_lsqmi_fd
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdrTrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub dz: usize,
    pub dx: usize,
    /// Estimated projection, row-major.
    pub w: Option<Vec<f64>>,
    pub dr_error: Option<f64>,
    pub score: Option<f64>,
    pub best_restart: Option<usize>,
    /// Iterations of the selected restart.
    pub iterations: Option<usize>,
    pub failed_restarts: usize,
    pub error: Option<String>,
    pub wall_time_s: Option<f64>,
}

impl SdrTrialRecord {
    pub fn projection(&self) -> Option<Projection> {
        self.w
            .as_ref()
            .map(|w| Projection::new(DMatrix::from_row_slice(self.dz, self.dx, w)).expect("stored projection"))
    }
}

fn load_csv(path: &std::path::Path) -> Result<Dataset> {
    Dataset::read_csv(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
        other => Error::Config(format!("{}: {other}", path.display())),
    })
}

/// Runs multi-restart SDR for every trial.
pub fn run_sdr(cfg: &SdrConfig, exec: Execution) -> Result<Vec<SdrTrialRecord>> {
    cfg.validate()?;
    let synth = cfg.synthetic()?;
    let csv_data = match &cfg.csv {
        Some(p) => Some(standardize(&load_csv(p)?)?),
        None => None,
    };
    let dz = cfg.dz.or(synth.map(SyntheticName::dz)).expect("validated");
    let dx = match (&csv_data, synth) {
        (Some(d), _) => d.dx(),
        (None, Some(name)) => name.dx(),
        _ => unreachable!(),
    };
    if dz > dx {
        return Err(Error::Config(format!("dz = {dz} exceeds the input dimension {dx}")));
    }
    if let (Some(d), Some(b)) = (&csv_data, cfg.optimizer.b) {
        if b > d.n() {
            return Err(Error::Config(format!("b = {b} exceeds the sample count {}", d.n())));
        }
    }
    Ok(map_range(exec, cfg.trials, |trial| {
        let seed = trial_seed(cfg.seed, trial);
        let start = Instant::now();
        let mut rec = SdrTrialRecord {
            trial,
            seed,
            dz,
            dx,
            w: None,
            dr_error: None,
            score: None,
            best_restart: None,
            iterations: None,
            failed_restarts: 0,
            error: None,
            wall_time_s: None,
        };
        let mut run = || -> Result<()> {
            let (ds, w_opt) = match (&csv_data, synth) {
                (Some(d), _) => (d.clone(), None),
                (None, Some(name)) => {
                    let (raw, w_opt) = generate(&SyntheticSpec::new(name, cfg.n, seed))?;
                    (standardize(&raw)?, Some(w_opt))
                }
                _ => unreachable!(),
            };
            let opt = crate::optimizer::OptimizerConfig {
                exec,
                ..cfg.optimizer.to_config(seed)
            };
            let res = multi_restart(&ds, dz, &opt, &cfg.cv, cfg.method)?;
            rec.failed_restarts = res.restarts.iter().filter(|r| r.score.is_none()).count();
            rec.iterations = Some(res.restarts[res.best].iterations);
            rec.best_restart = Some(res.best);
            rec.score = Some(res.score);
            if let Some(w_opt) = &w_opt {
                if w_opt.dz() == dz {
                    rec.dr_error = Some(dr_error(w_opt, &res.projection)?);
                }
            }
            rec.w = Some(res.projection.matrix().transpose().iter().copied().collect());
            Ok(())
        };
        if let Err(e) = run() {
            if let Error::AllRestartsFailed(n) = e {
                rec.failed_restarts = n;
            }
            rec.error = Some(e.to_string());
        }
        if cfg.record_timing {
            rec.wall_time_s = Some(start.elapsed().as_secs_f64());
        }
        rec
    }))
}

/// Mean and standard error of the mean; the error is 0 for a single value.
pub fn mean_and_stderr(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

#[derive(Serialize)]
struct SdrJson<'a> {
    metadata: &'a Metadata,
    method: &'a str,
    trials: &'a [SdrTrialRecord],
}

pub fn write_sdr_json<W: Write>(out: &mut W, meta: &Metadata, method: SdrMethod, records: &[SdrTrialRecord]) -> Result<()> {
    let doc = SdrJson {
        metadata: meta,
        method: method.as_str(),
        trials: records,
    };
    serde_json::to_writer_pretty(&mut *out, &doc).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

pub fn write_sdr_summary<W: Write>(out: &mut W, meta: &Metadata, records: &[SdrTrialRecord]) -> Result<()> {
    write_comments(out, &meta.comment_lines())?;
    writeln!(out, "metric,mean,stderr,count")?;
    let metrics: [(&str, Vec<f64>); 3] = [
        ("dr_error", records.iter().filter_map(|r| r.dr_error).collect()),
        ("iterations", records.iter().filter_map(|r| r.iterations.map(|i| i as f64)).collect()),
        ("score", records.iter().filter_map(|r| r.score).collect()),
    ];
    for (name, vals) in metrics {
        let (m, s) = match mean_and_stderr(&vals) {
            Some((m, s)) => (Some(m), Some(s)),
            None => (None, None),
        };
        writeln!(out, "{name},{},{},{}", opt_num(m), opt_num(s), vals.len())?;
    }
    writeln!(out, "failed_trials,{},,{}", records.iter().filter(|r| r.error.is_some()).count(), records.len())?;
    Ok(())
}

/// Method label used for the unreduced KRR baseline.
pub const BASELINE: &str = "none";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub trial: usize,
    pub dz: usize,
    pub method: String,
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

fn split_indices(n: usize, n_train: usize, n_test: Option<usize>, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_test = n_test.unwrap_or(n.saturating_sub(n_train));
    if n_train + n_test > n || n_test == 0 {
        return Err(Error::Config(format!(
            "dataset has {n} samples, need n_train = {n_train} plus at least one test sample"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..n_train + n_test].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn krr_rmse(train: &Dataset, test: &Dataset, w: Option<&DMatrix<f64>>, cfg: &BenchConfig, seed: u64) -> Result<f64> {
    let (ztr, zte) = match w {
        Some(w) => (project_raw(train.x(), w)?, project_raw(test.x(), w)?),
        None => (train.x().clone(), test.x().clone()),
    };
    let ytr: Vec<f64> = train.y().column(0).iter().copied().collect();
    let yte: Vec<f64> = test.y().column(0).iter().copied().collect();
    let model = krr_fit_cv(&ztr, &ytr, &cfg.krr, seed, Execution::Serial)?;
    rmse(&yte, &model.predict(&zte)?)
}

fn bench_trial(cfg: &BenchConfig, raw: &Dataset, trial: usize, exec: Execution) -> Result<Vec<BenchRow>> {
    let seed = trial_seed(cfg.seed, trial);
    let aug = augment_with_noise_features(raw, seed)?;
    let (tr, te) = split_indices(aug.n(), cfg.n_train, cfg.n_test, seed)?;
    let train = standardize(&aug.select_rows(&tr))?;
    let test = apply_standardization(&aug.select_rows(&te), train.standardization().expect("standardized"));
    let mut rows = Vec::new();
    let mut push = |dz: usize, method: &str, r: Result<f64>| {
        let (rmse, error) = match r {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(BenchRow {
            trial,
            dz,
            method: method.to_string(),
            rmse,
            error,
        });
    };
    for &dz in &cfg.dz {
        for &method in &cfg.methods {
            let r = (|| {
                if dz > train.dx() {
                    return Err(Error::InvalidParameter(format!("dz = {dz} exceeds dx = {}", train.dx())));
                }
                let opt = crate::optimizer::OptimizerConfig {
                    exec,
                    ..cfg.optimizer.to_config(seed)
                };
                let res = multi_restart(&train, dz, &opt, &cfg.cv, method)?;
                krr_rmse(&train, &test, Some(res.projection.matrix()), cfg, seed)
            })();
            push(dz, method.as_str(), r);
        }
    }
    if cfg.baseline {
        push(train.dx(), BASELINE, krr_rmse(&train, &test, None, cfg, seed));
    }
    Ok(rows)
}

/// Noise-augmented regression benchmark: SDR on the training split, then KRR on the projection.
/// RMSE is in units of the training-standardized output.
pub fn run_bench(cfg: &BenchConfig, exec: Execution) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let raw = load_csv(cfg.csv.as_ref().expect("validated"))?;
    if raw.dy() != 1 {
        return Err(Error::Config(format!("bench needs a single output column, got {}", raw.dy())));
    }
    split_indices(raw.n(), cfg.n_train, cfg.n_test, cfg.seed)?;
    let per_trial = map_range(exec, cfg.trials, |t| bench_trial(cfg, &raw, t, exec));
    let mut rows = Vec::new();
    for (trial, r) in per_trial.into_iter().enumerate() {
        match r {
            Ok(r) => rows.extend(r),
            Err(e) => rows.push(BenchRow {
                trial,
                dz: 0,
                method: String::new(),
                rmse: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(rows)
}

pub fn write_bench_rows<W: Write>(out: &mut W, meta: &Metadata, rows: &[BenchRow]) -> Result<()> {
    write_comments(out, &meta.comment_lines())?;
    writeln!(out, "trial,dz,method,rmse,error")?;
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(out, "{},{},{},{},{}", r.trial, r.dz, r.method, opt_num(r.rmse), err)?;
    }
    Ok(())
}

/// `(dz, method, (mean, stderr) of RMSE, successful trials)`.
pub type SummaryRow = (usize, String, Option<(f64, f64)>, usize);

/// Per `(dz, method)` summary in first-appearance order.
pub fn bench_summary(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in rows.iter().filter(|r| !r.method.is_empty()) {
        let k = (r.dz, r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(dz, method)| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.dz == dz && r.method == method)
                .filter_map(|r| r.rmse)
                .collect();
            let n = vals.len();
            (dz, method, mean_and_stderr(&vals), n)
        })
        .collect()
}

pub fn write_bench_summary<W: Write>(out: &mut W, meta: &Metadata, rows: &[BenchRow]) -> Result<()> {
    write_comments(out, &meta.comment_lines())?;
    writeln!(out, "dz,method,rmse_mean,rmse_stderr,count")?;
    for (dz, method, ms, n) in bench_summary(rows) {
        writeln!(out, "{dz},{method},{},{},{n}", opt_num(ms.map(|m| m.0)), opt_num(ms.map(|m| m.1)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_grid_endpoints() {
        let g = theta_grid(33);
        assert_eq!(g.len(), 33);
        assert_eq!(g[0], -FRAC_PI_2);
        assert_eq!(g[16], 0.0);
        assert!((g[32] - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(theta_grid(1), vec![0.0]);
    }

    #[test]
    fn stderr_examples() {
        assert_eq!(mean_and_stderr(&[]), None);
        assert_eq!(mean_and_stderr(&[2.0]), Some((2.0, 0.0)));
        let (m, s) = mean_and_stderr(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (a, b) = split_indices(20, 12, None, 3).unwrap();
        assert_eq!(a.len() + b.len(), 20);
        assert!(a.iter().all(|i| !b.contains(i)));
        assert_eq!(split_indices(20, 12, None, 3).unwrap(), (a, b));
        assert!(split_indices(20, 20, None, 3).is_err());
        assert!(split_indices(20, 12, Some(9), 3).is_err());
    }

    #[test]
    fn single_point_illustrate() {
        let cfg = IllustrateConfig {
            n: 80,
            trials: 1,
            theta_points: 1,
            ..Default::default()
        };
        let res = run_illustrate(&cfg, Execution::Serial).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert!(res.failures.is_empty());
        let r = &res.rows[0];
        assert!(r.qmi_tilde.is_finite() && r.dqmi_lsqmid.is_finite() && r.dqmi_lsqmi_fd.is_finite());
    }
}
