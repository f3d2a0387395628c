//! Run configuration for the command-line drivers.
//!
//! The file is TOML: one section per command (`[illustrate]`, `[sdr]`,
//! `[bench]`) with optional `cv`, `optimizer` and `krr` subsections. Every
//! key has a default except the dataset source; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::KrrGrid;
use crate::lsqmid::CvGrid;
use crate::optimizer::{OptimizerConfig, SdrMethod};
use crate::synthetic::SyntheticName;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub illustrate: Option<IllustrateConfig>,
    pub sdr: Option<SdrConfig>,
    pub bench: Option<BenchConfig>,
}

/// Optimizer settings as they appear in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub max_iters: usize,
    pub tol: f64,
    pub orthonormalize_every: usize,
    pub restarts: usize,
    pub cv_refresh_every: usize,
    pub f3_floor: f64,
    pub b: Option<usize>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            max_iters: d.max_iters,
            tol: d.tol,
            orthonormalize_every: d.orthonormalize_every,
            restarts: d.restarts,
            cv_refresh_every: d.cv_refresh_every,
            f3_floor: d.f3_floor,
            b: d.b,
        }
    }
}

impl OptimizerSection {
    pub fn to_config(&self, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            orthonormalize_every: self.orthonormalize_every,
            restarts: self.restarts,
            cv_refresh_every: self.cv_refresh_every,
            seed,
            f3_floor: self.f3_floor,
            b: self.b,
            exec: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IllustrateConfig {
    pub n: usize,
    pub trials: usize,
    /// Points of the evenly spaced angle grid on `[-pi/2, pi/2]`.
    pub theta_points: usize,
    pub seed: u64,
    /// Select hyperparameters once at angle 0 and reuse them for every angle.
    pub cv_at_zero: bool,
    /// Angle step of the LSQMI central difference.
    pub fd_step: f64,
    pub b: Option<usize>,
    pub cv: CvGrid,
}

impl Default for IllustrateConfig {
    fn default() -> Self {
        Self {
            n: 3000,
            trials: 20,
            theta_points: 33,
            seed: 0,
            cv_at_zero: true,
            fd_step: 1e-4,
            b: None,
            cv: CvGrid::default(),
        }
    }
}

impl IllustrateConfig {
    pub fn validate(&self) -> Result<()> {
        positive("n", self.n)?;
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        positive("trials", self.trials)?;
        positive("theta_points", self.theta_points)?;
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::Config(format!("fd_step must be positive, got {}", self.fd_step)));
        }
        check_b(self.b, self.n)?;
        self.cv.validate().map_err(config_err)
    }
}

/// Either a built-in generator or a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdrConfig {
    /// Synthetic dataset name: rotation, A, B, C or D.
    pub dataset: Option<String>,
    /// CSV file in the dataset format; mutually exclusive with `dataset`.
    pub csv: Option<PathBuf>,
    /// Sample count for synthetic datasets.
    pub n: usize,
    /// Output dimension; defaults to the true dimension of a synthetic dataset.
    pub dz: Option<usize>,
    pub method: SdrMethod,
    pub trials: usize,
    pub seed: u64,
    /// Adds wall-clock seconds to each record (output is then no longer reproducible).
    pub record_timing: bool,
    pub optimizer: OptimizerSection,
    pub cv: CvGrid,
}

impl Default for SdrConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            csv: None,
            n: 200,
            dz: None,
            method: SdrMethod::LsqmidFp,
            trials: 10,
            seed: 0,
            record_timing: false,
            optimizer: OptimizerSection::default(),
            cv: CvGrid::default(),
        }
    }
}

impl SdrConfig {
    pub fn synthetic(&self) -> Result<Option<SyntheticName>> {
        match (&self.dataset, &self.csv) {
            (Some(name), None) => Ok(Some(name.parse().map_err(config_err)?)),
            (None, Some(_)) => Ok(None),
            (Some(_), Some(_)) => Err(Error::Config("set only one of 'dataset' and 'csv'".into())),
            (None, None) => Err(Error::Config("one of 'dataset' or 'csv' is required".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let synth = self.synthetic()?;
        positive("trials", self.trials)?;
        if let Some(name) = synth {
            if self.n < 2 {
                return Err(Error::Config("n must be at least 2".into()));
            }
            check_b(self.optimizer.b, self.n)?;
            if let Some(dz) = self.dz {
                if dz == 0 || dz > name.dx() {
                    return Err(Error::Config(format!("dz must be in 1..={} for dataset {name}", name.dx())));
                }
            }
        } else if self.dz.is_none() {
            return Err(Error::Config("dz is required for csv datasets".into()));
        }
        if self.dz == Some(0) {
            return Err(Error::Config("dz must be at least 1".into()));
        }
        let dz = self.dz.or(synth.map(SyntheticName::dz)).unwrap_or(1);
        if self.method == SdrMethod::LsqmidGrad1d && dz != 1 {
            return Err(Error::Config(format!("method lsqmid-grad1d needs dz = 1, got {dz}")));
        }
        self.optimizer.to_config(self.seed).validate().map_err(config_err)?;
        self.cv.validate().map_err(config_err)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub csv: Option<PathBuf>,
    pub n_train: usize,
    /// Test samples per trial; all samples not used for training when unset.
    pub n_test: Option<usize>,
    pub dz: Vec<usize>,
    pub methods: Vec<SdrMethod>,
    /// Also score KRR on the full augmented input.
    pub baseline: bool,
    pub trials: usize,
    pub seed: u64,
    pub optimizer: OptimizerSection,
    pub cv: CvGrid,
    pub krr: KrrGrid,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            csv: None,
            n_train: 100,
            n_test: None,
            dz: vec![1],
            methods: vec![SdrMethod::LsqmidFp],
            baseline: true,
            trials: 10,
            seed: 0,
            optimizer: OptimizerSection::default(),
            cv: CvGrid::default(),
            krr: KrrGrid::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.csv.is_none() {
            return Err(Error::Config("'csv' is required".into()));
        }
        positive("trials", self.trials)?;
        if self.n_train < self.krr.folds.max(2) {
            return Err(Error::Config(format!("n_train must be at least {}", self.krr.folds.max(2))));
        }
        if self.n_test == Some(0) {
            return Err(Error::Config("n_test must be at least 1".into()));
        }
        if self.dz.is_empty() && !self.baseline {
            return Err(Error::Config("nothing to run: empty dz list and no baseline".into()));
        }
        if self.methods.is_empty() && !self.dz.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        for &dz in &self.dz {
            if dz == 0 {
                return Err(Error::Config("dz entries must be at least 1".into()));
            }
            if dz != 1 && self.methods.contains(&SdrMethod::LsqmidGrad1d) {
                return Err(Error::Config(format!("method lsqmid-grad1d needs dz = 1, got {dz}")));
            }
        }
        check_b(self.optimizer.b, self.n_train)?;
        self.optimizer.to_config(self.seed).validate().map_err(config_err)?;
        self.cv.validate().map_err(config_err)?;
        self.krr.validate().map_err(config_err)
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn check_b(b: Option<usize>, n: usize) -> Result<()> {
    match b {
        Some(0) => Err(Error::Config("b must be at least 1".into())),
        Some(b) if b > n => Err(Error::Config(format!("b = {b} exceeds the sample count {n}"))),
        _ => Ok(()),
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Hex SHA-256 of the canonical TOML rendering of a config section.
pub fn config_hash<T: Serialize>(section: &T) -> String {
    let text = toml::to_string(section).expect("config sections serialize");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance written at the top of every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Metadata {
    pub fn new<T: Serialize>(command: &str, section: &T, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: config_hash(section),
            seed,
        }
    }

    /// Comment lines for CSV outputs.
    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("{} {}", self.tool, self.version),
            format!("command: {}", self.command),
            format!("config_sha256: {}", self.config_sha256),
            format!("seed: {}", self.seed),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_with_defaults() {
        let cfg = RunConfig::parse(
            "[sdr]\ndataset = \"B\"\nmethod = \"lsqmid-grad1d\"\ntrials = 2\n\n[sdr.optimizer]\nrestarts = 3\n\n[sdr.cv]\nsigmas = [0.5, 1.0]\n",
        )
        .unwrap();
        let sdr = cfg.sdr.unwrap();
        assert_eq!(sdr.method, SdrMethod::LsqmidGrad1d);
        assert_eq!(sdr.optimizer.restarts, 3);
        assert_eq!(sdr.optimizer.max_iters, 100);
        assert_eq!(sdr.cv.sigmas, vec![0.5, 1.0]);
        assert_eq!(sdr.cv.lambdas, CvGrid::default().lambdas);
        sdr.validate().unwrap();
        assert!(cfg.illustrate.is_none());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::parse("[sdr]\ndatset = \"A\"\n"), Err(Error::Config(_))));
        assert!(RunConfig::parse("[sdr.optimizer]\nrestart = 3\n").is_err());
        assert!(RunConfig::parse("[plot]\nx = 1\n").is_err());
        assert!(RunConfig::parse("[sdr]\nmethod = \"newton\"\n").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let bad = |text: &str| RunConfig::parse(text).unwrap().sdr.unwrap().validate().is_err();
        assert!(bad("[sdr]\ndataset = \"E\"\n"));
        assert!(bad("[sdr]\n"));
        assert!(bad("[sdr]\ndataset = \"A\"\ncsv = \"x.csv\"\n"));
        assert!(bad("[sdr]\ncsv = \"x.csv\"\n"));
        assert!(bad("[sdr]\ndataset = \"C\"\nmethod = \"lsqmid-grad1d\"\n"));
        assert!(bad("[sdr]\ndataset = \"A\"\ndz = 6\n"));
        assert!(bad("[sdr]\ndataset = \"A\"\n[sdr.optimizer]\ntol = 0.0\n"));
        assert!(bad("[sdr]\ndataset = \"A\"\nn = 50\n[sdr.optimizer]\nb = 60\n"));
        assert!(bad("[sdr]\ndataset = \"A\"\n[sdr.cv]\nsigmas = []\n"));
        let ill = RunConfig::parse("[illustrate]\ntheta_points = 0\n").unwrap().illustrate.unwrap();
        assert!(ill.validate().is_err());
        let bench = RunConfig::parse("[bench]\nn_train = 10\n").unwrap().bench.unwrap();
        assert!(bench.validate().is_err());
    }

    #[test]
    fn hash_tracks_effective_values() {
        let a = IllustrateConfig::default();
        let b = IllustrateConfig { seed: 1, ..a.clone() };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
