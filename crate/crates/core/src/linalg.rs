use nalgebra::{Cholesky, DMatrix, DVector, Dyn, FullPivLU};

use crate::error::{Error, Result};

/// Systems whose condition estimate exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e14;

enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(FullPivLU<f64, Dyn, Dyn>),
}

/// Factorization of `a + shift I` for symmetric positive (semi)definite `a`.
///
/// Cholesky first; if that fails (semidefinite at `shift = 0`) a fully pivoted
/// LU is used. Solves apply two rounds of iterative refinement.
pub struct ShiftedSpd {
    m: DMatrix<f64>,
    factor: Factor,
}

impl ShiftedSpd {
    pub fn new(a: &DMatrix<f64>, shift: f64) -> Result<Self> {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        if let Some(chol) = m.clone().cholesky() {
            let (lo, hi) = diag_range(chol.l_dirty());
            let cond = (hi / lo).powi(2);
            if !(cond <= MAX_CONDITION) {
                return Err(Error::SolveFailure(cond));
            }
            return Ok(Self {
                m,
                factor: Factor::Cholesky(chol),
            });
        }
        let lu = m.clone().full_piv_lu();
        let (lo, hi) = diag_range(&lu.u());
        let cond = hi / lo;
        if !(cond <= MAX_CONDITION) {
            return Err(Error::SolveFailure(cond));
        }
        Ok(Self {
            m,
            factor: Factor::Lu(lu),
        })
    }

    fn raw_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Cholesky(c) => c.solve(rhs),
            Factor::Lu(lu) => lu
                .solve(rhs)
                .unwrap_or_else(|| DVector::from_element(rhs.len(), f64::NAN)),
        }
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = self.raw_solve(rhs);
        for _ in 0..2 {
            let r = rhs - &self.m * &x;
            x += self.raw_solve(&r);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure(f64::INFINITY));
        }
        Ok(x)
    }
}

fn diag_range(m: &DMatrix<f64>) -> (f64, f64) {
    m.diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())))
}

/// Solves `(a + shift I) x = rhs`.
pub fn solve_shifted_spd(a: &DMatrix<f64>, shift: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    ShiftedSpd::new(a, shift)?.solve(rhs)
}
