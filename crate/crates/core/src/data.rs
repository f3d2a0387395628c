//! Paired sample containers, standardization and orthonormal projections.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

/// Tolerance on `||W W^T - I||_F` accepted by [`Projection::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Per-column statistics retained by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub x_mean: DVector<f64>,
    pub x_std: DVector<f64>,
    pub y_mean: DVector<f64>,
    pub y_std: DVector<f64>,
}

/// Paired samples `x` (n x dx) and `y` (n x dy).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    stats: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        check_dim("sample count of y", x.nrows(), y.nrows())?;
        if x.nrows() < 2 {
            return Err(Error::InvalidParameter(format!(
                "dataset needs at least 2 samples, got {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "dataset needs at least one x and one y column".into(),
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { x, y, stats: None })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dx(&self) -> usize {
        self.x.ncols()
    }

    pub fn dy(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.stats.is_some()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.stats.as_ref()
    }

    /// Rows selected by `idx`, in that order. Standardization state is kept.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            stats: self.stats.clone(),
        }
    }

    /// Reads the canonical CSV layout: header `x1..x{dx},y1..y{dy}`.
    /// Lines starting with `#` are skipped.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let (dx, dy) = parse_header(headers.iter())?;
        let mut values = Vec::new();
        let mut n = 0;
        for record in rdr.records() {
            let record = record?;
            check_dim("csv fields per row", dx + dy, record.len())?;
            for field in record.iter() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::InvalidParameter(format!("row {}: cannot parse '{field}'", n + 1))
                })?;
                values.push(v);
            }
            n += 1;
        }
        let all = DMatrix::from_row_slice(n, dx + dy, &values);
        Dataset::new(
            all.columns(0, dx).into_owned(),
            all.columns(dx, dy).into_owned(),
        )
    }

    /// Writes the canonical CSV layout, preceded by `# `-prefixed comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut wtr = csv::Writer::from_writer(out);
        let header: Vec<String> = (1..=self.dx())
            .map(|i| format!("x{i}"))
            .chain((1..=self.dy()).map(|i| format!("y{i}")))
            .collect();
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let row: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(self.y.row(i).iter())
                .map(|v| format!("{v:e}"))
                .collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn parse_header<'a>(names: impl Iterator<Item = &'a str>) -> Result<(usize, usize)> {
    let names: Vec<&str> = names.collect();
    let dx = names.iter().take_while(|s| s.starts_with('x')).count();
    let dy = names.len() - dx;
    let expected = (1..=dx)
        .map(|i| format!("x{i}"))
        .chain((1..=dy).map(|i| format!("y{i}")));
    for (got, want) in names.iter().zip(expected) {
        if *got != want {
            return Err(Error::InvalidParameter(format!(
                "csv header: expected column '{want}', found '{got}'"
            )));
        }
    }
    if dx == 0 || dy == 0 {
        return Err(Error::InvalidParameter(
            "csv header must name x1..x{dx} followed by y1..y{dy}".into(),
        ));
    }
    Ok((dx, dy))
}

fn column_stats(m: &DMatrix<f64>, offset: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = m.nrows() as f64;
    let mut mean = DVector::zeros(m.ncols());
    let mut std = DVector::zeros(m.ncols());
    for (j, col) in m.column_iter().enumerate() {
        let mu = col.sum() / n;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0);
        if !(var > 0.0) {
            return Err(Error::ZeroVarianceColumn(offset + j));
        }
        mean[j] = mu;
        std[j] = var.sqrt();
    }
    Ok((mean, std))
}

fn apply_columns(m: &DMatrix<f64>, mean: &DVector<f64>, std: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.apply(|v| *v = (*v - mean[j]) / std[j]);
    }
    out
}

/// Centers every column and scales it to unit sample standard deviation
/// (denominator n - 1). Columns are indexed x first, then y, in errors.
/// A dataset that is already standardized is returned unchanged.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    if ds.is_standardized() {
        return Ok(ds.clone());
    }
    let (x_mean, x_std) = column_stats(&ds.x, 0)?;
    let (y_mean, y_std) = column_stats(&ds.y, ds.dx())?;
    let stats = Standardization {
        x_mean,
        x_std,
        y_mean,
        y_std,
    };
    Ok(apply_standardization(ds, &stats))
}

/// Applies previously computed statistics, e.g. training-split statistics to a test split.
pub fn apply_standardization(ds: &Dataset, stats: &Standardization) -> Dataset {
    Dataset {
        x: apply_columns(&ds.x, &stats.x_mean, &stats.x_std),
        y: apply_columns(&ds.y, &stats.y_mean, &stats.y_std),
        stats: Some(stats.clone()),
    }
}

/// A dz x dx matrix with orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    w: DMatrix<f64>,
}

impl Projection {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let (dz, dx) = w.shape();
        if dz == 0 || dz > dx {
            return Err(Error::InvalidParameter(format!(
                "projection must satisfy 1 <= dz <= dx, got {dz} x {dx}"
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let defect = orthonormality_defect(&w);
        if defect > ORTHONORMAL_TOL {
            return Err(Error::InvalidParameter(format!(
                "rows are not orthonormal (||WW^T - I||_F = {defect:e})"
            )));
        }
        Ok(Self { w })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            w: DMatrix::identity(d, d),
        }
    }

    /// Random Gaussian entries followed by [`orthonormalize`].
    pub fn random<R: Rng + ?Sized>(dz: usize, dx: usize, rng: &mut R) -> Result<Self> {
        let raw = DMatrix::from_fn(dz, dx, |_, _| rng.sample::<f64, _>(StandardNormal));
        orthonormalize(&raw)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.w
    }

    pub fn dz(&self) -> usize {
        self.w.nrows()
    }

    pub fn dx(&self) -> usize {
        self.w.ncols()
    }
}

/// `||W W^T - I||_F`.
pub fn orthonormality_defect(w: &DMatrix<f64>) -> f64 {
    let g = w * w.transpose();
    (g - DMatrix::identity(w.nrows(), w.nrows())).norm()
}

/// `Z = X W^T`.
pub fn project(ds: &Dataset, p: &Projection) -> Result<DMatrix<f64>> {
    project_raw(ds.x(), p.matrix())
}

/// Projection by an arbitrary (not necessarily orthonormal) dz x dx matrix.
pub fn project_raw(x: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("projection input dimension", x.ncols(), w.ncols())?;
    Ok(x * w.transpose())
}

/// Maps `W` to `(W W^T)^{-1/2} W`, the orthonormal-row matrix with the same row space.
pub fn orthonormalize(w: &DMatrix<f64>) -> Result<Projection> {
    let (dz, dx) = w.shape();
    if dz == 0 || dz > dx {
        return Err(Error::InvalidParameter(format!(
            "cannot orthonormalize a {dz} x {dx} matrix"
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let svd = w.clone().svd(true, true);
    let (smin, smax) = svd
        .singular_values
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(smax > 0.0) || smin < 1e-12 * smax {
        return Err(Error::RankDeficient(if smax > 0.0 { smin / smax } else { 0.0 }));
    }
    // polar factor U V^T, accurate even when W is badly conditioned
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    Ok(Projection { w: u * v_t })
}
