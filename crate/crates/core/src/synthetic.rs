//! Seeded generators for the rotation toy problem, artificial datasets A-D
//! and gamma noise-feature augmentation.
//!
//! `Gamma(a, b)` is shape `a`, scale `b`; `Laplace(a, b)` is location `a`,
//! scale `b`; `N(m, v)` takes a variance; `U(a, b)` samples `[a, b)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Projection};
use crate::error::{Error, Result};

/// Number of gamma noise columns appended by [`augment_with_noise_features`].
pub const NOISE_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SyntheticName {
    #[serde(rename = "rotation")]
    Rotation,
    A,
    B,
    C,
    D,
}

impl FromStr for SyntheticName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotation" => Ok(Self::Rotation),
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            "C" | "c" => Ok(Self::C),
            "D" | "d" => Ok(Self::D),
            other => Err(Error::InvalidParameter(format!("unknown synthetic dataset '{other}'"))),
        }
    }
}

impl fmt::Display for SyntheticName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rotation => "rotation",
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
        })
    }
}

impl SyntheticName {
    pub fn dx(self) -> usize {
        match self {
            Self::Rotation => 2,
            _ => 5,
        }
    }

    /// Dimension of the optimal subspace.
    pub fn dz(self) -> usize {
        match self {
            Self::C | Self::D => 2,
            _ => 1,
        }
    }

    pub fn optimal_projection(self) -> Projection {
        let s2 = 0.5f64.sqrt();
        let s5 = 0.2f64.sqrt();
        let w = match self {
            Self::Rotation => DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Self::A => DMatrix::from_row_slice(1, 5, &[s2, s2, 0.0, 0.0, 0.0]),
            Self::B => DMatrix::from_row_slice(1, 5, &[s5, 2.0 * s5, 0.0, 0.0, 0.0]),
            Self::C | Self::D => DMatrix::from_row_slice(2, 5, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
        };
        Projection::new(w).expect("optimal projections are orthonormal")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub name: SyntheticName,
    pub n: usize,
    pub seed: u64,
    /// Evaluation angle for the rotation problem; ignored by the other datasets.
    pub theta: f64,
}

impl SyntheticSpec {
    pub fn new(name: SyntheticName, n: usize, seed: u64) -> Self {
        Self {
            name,
            n,
            seed,
            theta: 0.0,
        }
    }
}

/// `[cos theta, sin theta]`.
pub fn rotation_projection(theta: f64) -> Projection {
    Projection::new(DMatrix::from_row_slice(1, 2, &[theta.cos(), theta.sin()])).expect("unit row")
}

/// Unnormalized sinc with `sinc(0) = 1`.
pub fn sinc(t: f64) -> f64 {
    if t == 0.0 { 1.0 } else { t.sin() / t }
}

fn laplace<R: Rng + ?Sized>(rng: &mut R, loc: f64, scale: f64) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    loc - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn gamma(shape: f64, scale: f64) -> Gamma<f64> {
    Gamma::new(shape, scale).expect("valid gamma parameters")
}

/// Noise-free part plus noise for one sample; `x` holds the inputs, `eps` the noise draw.
pub fn response(name: SyntheticName, x: &[f64], eps: f64) -> f64 {
    match name {
        SyntheticName::Rotation => x[0] * x[0] + eps,
        SyntheticName::A => (-(x[0] + x[1]).powi(2) / 0.5).exp() + eps,
        SyntheticName::B => {
            let z = (x[0] + 2.0 * x[1]) / 5f64.sqrt();
            z * z.sin() - eps
        }
        SyntheticName::C => x[0] * x[1] / 2f64.sqrt() - eps,
        SyntheticName::D => sinc(x[0] * std::f64::consts::PI / 2.0) + x[1] * eps,
    }
}

fn draw_input<R: Rng + ?Sized>(name: SyntheticName, rng: &mut R) -> f64 {
    match name {
        SyntheticName::Rotation | SyntheticName::A => rng.sample(StandardNormal),
        SyntheticName::B | SyntheticName::C => rng.random_range(-1.0..1.0),
        SyntheticName::D => laplace(rng, 0.0, 0.5),
    }
}

fn draw_noise<R: Rng + ?Sized>(name: SyntheticName, rng: &mut R) -> f64 {
    match name {
        SyntheticName::Rotation => Normal::new(0.0, 0.15).unwrap().sample(rng),
        SyntheticName::A => gamma(0.25, 0.25).sample(rng),
        SyntheticName::B | SyntheticName::C => gamma(0.25, 0.5).sample(rng),
        SyntheticName::D => Normal::new(0.0, 0.25f64.sqrt()).unwrap().sample(rng),
    }
}

/// Draws a raw (unstandardized) dataset and its optimal projection.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, Projection)> {
    if spec.n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {}", spec.n)));
    }
    let name = spec.name;
    let dx = name.dx();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = DMatrix::zeros(spec.n, dx);
    let mut y = DMatrix::zeros(spec.n, 1);
    let mut row = vec![0.0; dx];
    for i in 0..spec.n {
        for v in row.iter_mut() {
            *v = draw_input(name, &mut rng);
        }
        let eps = draw_noise(name, &mut rng);
        x.row_mut(i).copy_from_slice(&row);
        y[(i, 0)] = response(name, &row, eps);
    }
    Ok((Dataset::new(x, y)?, name.optimal_projection()))
}

/// Appends five `Gamma(1, 2)` noise columns to the raw inputs.
pub fn augment_with_noise_features(ds: &Dataset, seed: u64) -> Result<Dataset> {
    if ds.is_standardized() {
        return Err(Error::InvalidParameter("noise features must be added before standardization".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gamma(1.0, 2.0);
    let (n, dx) = (ds.n(), ds.dx());
    let mut x = DMatrix::zeros(n, dx + NOISE_FEATURES);
    x.columns_mut(0, dx).copy_from(ds.x());
    for i in 0..n {
        for c in dx..dx + NOISE_FEATURES {
            x[(i, c)] = g.sample(&mut rng);
        }
    }
    Dataset::new(x, ds.y().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::orthonormality_defect;

    fn mean_var(v: impl Iterator<Item = f64>) -> (f64, f64, usize) {
        let v: Vec<f64> = v.collect();
        let n = v.len();
        let m = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (m, var, n)
    }

    #[test]
    fn optimal_projections_orthonormal() {
        for name in [SyntheticName::Rotation, SyntheticName::A, SyntheticName::B, SyntheticName::C, SyntheticName::D] {
            let (ds, w) = generate(&SyntheticSpec::new(name, 10, 1)).unwrap();
            assert!(orthonormality_defect(w.matrix()) < 1e-12);
            assert_eq!(w.dz(), name.dz());
            assert_eq!(ds.dx(), name.dx());
        }
    }

    #[test]
    fn dataset_b_uniform_moments() {
        let (ds, _) = generate(&SyntheticSpec::new(SyntheticName::B, 100_000, 3)).unwrap();
        let (m, v, _) = mean_var(ds.x().column(0).iter().copied());
        assert!(m.abs() < 0.02);
        assert!((v - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn dataset_a_gamma_noise_mean() {
        // recover eps = y - exp(-(x1 + x2)^2 / 0.5)
        let (ds, _) = generate(&SyntheticSpec::new(SyntheticName::A, 100_000, 4)).unwrap();
        let eps = (0..ds.n()).map(|i| ds.y()[(i, 0)] - response(SyntheticName::A, &[ds.x()[(i, 0)], ds.x()[(i, 1)]], 0.0));
        let (m, v, n) = mean_var(eps);
        assert!((m - 0.0625).abs() < 0.005);
        // Gamma(0.25, 0.25): variance = shape * scale^2
        let se = (0.25f64 * 0.0625 / n as f64).sqrt();
        assert!((m - 0.0625).abs() < 3.0 * se + 1e-12);
        assert!((v - 0.015625).abs() < 0.002);
    }

    #[test]
    fn samplers_match_closed_form_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        // Laplace(0, 0.5): mean 0, variance 2 * 0.25
        let (m, v, _) = mean_var((0..n).map(|_| laplace(&mut rng, 0.0, 0.5)));
        assert!(m.abs() < 3.0 * (0.5 / n as f64).sqrt());
        assert!((v - 0.5).abs() < 0.02);
        let (m, v, _) = mean_var((0..n).map(|_| gamma(0.25, 0.5).sample(&mut rng)));
        assert!((m - 0.125).abs() < 3.0 * (0.0625 / n as f64).sqrt());
        assert!((v - 0.0625).abs() < 0.005);
        let (m, v, _) = mean_var((0..n).map(|_| draw_noise(SyntheticName::D, &mut rng)));
        assert!(m.abs() < 3.0 * (0.25 / n as f64).sqrt());
        assert!((v - 0.25).abs() < 0.01);
    }

    #[test]
    fn dataset_d_noise_vanishes_at_zero_x2() {
        for eps in [-1.3, 0.0, 0.7, 5.0] {
            let t: f64 = 0.37;
            let y = response(SyntheticName::D, &[t, 0.0, 1.0, 1.0, 1.0], eps);
            assert_eq!(y, sinc(t * std::f64::consts::PI / 2.0));
        }
        assert_eq!(sinc(0.0), 1.0);
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = SyntheticSpec::new(SyntheticName::D, 50, 77);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SyntheticSpec { seed: 78, ..spec };
        assert_ne!(generate(&spec).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn augmentation_shape_mean_and_determinism() {
        let (ds, _) = generate(&SyntheticSpec::new(SyntheticName::B, 100_000, 5)).unwrap();
        let aug = augment_with_noise_features(&ds, 9).unwrap();
        assert_eq!(aug.dx(), ds.dx() + 5);
        for c in 5..10 {
            let (m, _, _) = mean_var(aug.x().column(c).iter().copied());
            assert!((m - 2.0).abs() < 0.05);
        }
        let small = ds.select_rows(&[0, 1, 2, 3]);
        assert_eq!(augment_with_noise_features(&small, 1).unwrap(), augment_with_noise_features(&small, 1).unwrap());
        let std = crate::data::standardize(&small).unwrap();
        assert!(augment_with_noise_features(&std, 1).is_err());
    }

    #[test]
    fn names_parse() {
        assert_eq!("rotation".parse::<SyntheticName>().unwrap(), SyntheticName::Rotation);
        assert_eq!("C".parse::<SyntheticName>().unwrap(), SyntheticName::C);
        assert!("E".parse::<SyntheticName>().is_err());
    }
}
