//! Gaussian basis functions over the joint `(z, y)` space.
//!
//! The k-th Gaussian is
//! `phi_k(z, y) = exp(-(|z - u_k|^2 + |y - v_k|^2) / (2 sigma^2))`
//! and the derivative basis for output coordinate `ell` is
//! `varphi_k = d phi_k / d z[ell] = -(z[ell] - u_k[ell]) / sigma^2 * phi_k`.
//!
//! Because `phi_k` factors into a z-part and a y-part, sums over all pairs
//! `(z_i, y_j)` reduce to products of per-sample column sums. [`KernelFactors`]
//! holds those two factor matrices for a batch of samples.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

/// Basis size used when none is configured: `min(n, 200)`.
pub fn default_basis_count(n: usize) -> usize {
    n.min(200)
}

/// Gaussian centers, shared width and the output coordinate `ell` (0-based)
/// whose derivative basis this model describes.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisModel {
    centers_u: DMatrix<f64>,
    centers_v: DMatrix<f64>,
    sigma: f64,
    ell: usize,
}

impl BasisModel {
    pub fn new(centers_u: DMatrix<f64>, centers_v: DMatrix<f64>, sigma: f64, ell: usize) -> Result<Self> {
        check_dim("center count of v", centers_u.nrows(), centers_v.nrows())?;
        if centers_u.nrows() == 0 {
            return Err(Error::InvalidParameter("basis needs at least one center".into()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("gaussian width must be positive, got {sigma}")));
        }
        if ell >= centers_u.ncols() {
            return Err(Error::InvalidParameter(format!(
                "output index {ell} out of range for dz = {}",
                centers_u.ncols()
            )));
        }
        Ok(Self {
            centers_u,
            centers_v,
            sigma,
            ell,
        })
    }

    pub fn b(&self) -> usize {
        self.centers_u.nrows()
    }

    pub fn dz(&self) -> usize {
        self.centers_u.ncols()
    }

    pub fn dy(&self) -> usize {
        self.centers_v.ncols()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn centers_u(&self) -> &DMatrix<f64> {
        &self.centers_u
    }

    pub fn centers_v(&self) -> &DMatrix<f64> {
        &self.centers_v
    }

    /// Same centers, different width.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.centers_u.clone(), self.centers_v.clone(), sigma, self.ell)
    }

    /// Same centers and width, different output coordinate.
    pub fn with_ell(&self, ell: usize) -> Result<Self> {
        Self::new(self.centers_u.clone(), self.centers_v.clone(), self.sigma, ell)
    }

    fn check_point(&self, z: &[f64], y: &[f64]) -> Result<()> {
        check_dim("z dimension", self.dz(), z.len())?;
        check_dim("y dimension", self.dy(), y.len())
    }

    /// `[phi_1(z, y), ..., phi_b(z, y)]`.
    pub fn eval_phi(&self, z: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        self.check_point(z, y)?;
        let s2 = 2.0 * self.sigma * self.sigma;
        Ok(DVector::from_fn(self.b(), |k, _| {
            let dz: f64 = z.iter().enumerate().map(|(c, zc)| (zc - self.centers_u[(k, c)]).powi(2)).sum();
            let dy: f64 = y.iter().enumerate().map(|(c, yc)| (yc - self.centers_v[(k, c)]).powi(2)).sum();
            (-(dz + dy) / s2).exp()
        }))
    }

    /// Derivative basis `[varphi_1(z, y), ..., varphi_b(z, y)]` along `z[ell]`.
    pub fn eval_varphi(&self, z: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        let mut phi = self.eval_phi(z, y)?;
        let inv_s2 = self.sigma.powi(-2);
        for k in 0..self.b() {
            phi[k] *= -(z[self.ell] - self.centers_u[(k, self.ell)]) * inv_s2;
        }
        Ok(phi)
    }

    /// Derivative of [`eval_varphi`](Self::eval_varphi) along `z[ell]`:
    /// `(((z[ell] - u_k[ell]) / sigma^2)^2 - 1 / sigma^2) phi_k(z, y)`.
    pub fn eval_varphi_dz(&self, z: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        let mut phi = self.eval_phi(z, y)?;
        let inv_s2 = self.sigma.powi(-2);
        for k in 0..self.b() {
            let o = (z[self.ell] - self.centers_u[(k, self.ell)]) * inv_s2;
            phi[k] *= o * o - inv_s2;
        }
        Ok(phi)
    }

    /// `H[k,k'] = integral of varphi_k varphi_k' over (z, y)`, in closed form.
    pub fn gram_h(&self) -> DMatrix<f64> {
        let s = self.sigma;
        let s2 = s * s;
        let scale = s.powi(-4) * ((PI.sqrt() * s).powi((self.dz() + self.dy()) as i32));
        let b = self.b();
        let mut h = DMatrix::zeros(b, b);
        for k in 0..b {
            for kp in k..b {
                let sep = self.separation_sq(k, kp);
                let du = self.centers_u[(k, self.ell)] - self.centers_u[(kp, self.ell)];
                let v = scale * (-sep / (4.0 * s2)).exp() * (s2 / 2.0 - du * du / 4.0);
                h[(k, kp)] = v;
                h[(kp, k)] = v;
            }
        }
        h
    }

    /// `D[k,k'] = integral of phi_k phi_k' over (z, y)`, in closed form.
    pub fn gram_d(&self) -> DMatrix<f64> {
        let s = self.sigma;
        let scale = (PI.sqrt() * s).powi((self.dz() + self.dy()) as i32);
        let b = self.b();
        let mut d = DMatrix::zeros(b, b);
        for k in 0..b {
            for kp in k..b {
                let v = scale * (-self.separation_sq(k, kp) / (4.0 * s * s)).exp();
                d[(k, kp)] = v;
                d[(kp, k)] = v;
            }
        }
        d
    }

    fn separation_sq(&self, k: usize, kp: usize) -> f64 {
        let du = (self.centers_u.row(k) - self.centers_u.row(kp)).norm_squared();
        let dv = (self.centers_v.row(k) - self.centers_v.row(kp)).norm_squared();
        du + dv
    }

    /// Factor matrices for the samples `z` (n x dz) and `y` (n x dy).
    pub fn factors(&self, z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<KernelFactors> {
        check_dim("z dimension", self.dz(), z.ncols())?;
        check_dim("y dimension", self.dy(), y.ncols())?;
        check_dim("sample count of y", z.nrows(), y.nrows())?;
        let s2 = 2.0 * self.sigma * self.sigma;
        let kz = gaussian_factor(z, &self.centers_u, s2);
        let ky = gaussian_factor(y, &self.centers_v, s2);
        let mut offset = DMatrix::zeros(z.nrows(), self.b());
        let inv_s2 = self.sigma.powi(-2);
        for k in 0..self.b() {
            let u = self.centers_u[(k, self.ell)];
            for i in 0..z.nrows() {
                offset[(i, k)] = -(z[(i, self.ell)] - u) * inv_s2;
            }
        }
        Ok(KernelFactors {
            kz,
            ky,
            offset,
            inv_sigma_sq: inv_s2,
        })
    }
}

fn gaussian_factor(samples: &DMatrix<f64>, centers: &DMatrix<f64>, two_sigma_sq: f64) -> DMatrix<f64> {
    DMatrix::from_fn(samples.nrows(), centers.nrows(), |i, k| {
        let d: f64 = (0..samples.ncols()).map(|c| (samples[(i, c)] - centers[(k, c)]).powi(2)).sum();
        (-d / two_sigma_sq).exp()
    })
}

/// Which function of the Gaussian basis a sample average runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// `phi_k`
    Phi,
    /// `varphi_k = d phi_k / d z[ell]`
    Varphi,
    /// `d varphi_k / d z[ell]`
    VarphiDz,
}

/// Per-sample factors of the basis: `phi_k(z_i, y_j) = kz[i,k] * ky[j,k]`
/// and `varphi_k(z_i, y_j) = offset[i,k] * kz[i,k] * ky[j,k]`.
#[derive(Debug, Clone)]
pub struct KernelFactors {
    pub kz: DMatrix<f64>,
    pub ky: DMatrix<f64>,
    pub offset: DMatrix<f64>,
    pub inv_sigma_sq: f64,
}

impl KernelFactors {
    pub fn n(&self) -> usize {
        self.kz.nrows()
    }

    pub fn b(&self) -> usize {
        self.kz.ncols()
    }

    /// `sum_j ky[j,k]` for every k.
    pub fn y_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.b(), self.ky.column_iter().map(|c| c.sum()))
    }

    /// Multiplier turning `kz[i,k] * ky[j,k]` into the requested basis value.
    #[inline]
    fn z_part(&self, i: usize, k: usize, kind: BasisKind) -> f64 {
        let kz = self.kz[(i, k)];
        match kind {
            BasisKind::Phi => kz,
            BasisKind::Varphi => kz * self.offset[(i, k)],
            BasisKind::VarphiDz => {
                let o = self.offset[(i, k)];
                kz * (o * o - self.inv_sigma_sq)
            }
        }
    }

    /// Per-sample weights `omega` such that for any sample function `f`,
    /// `sum_i omega_i f_i = coef^T [ (1/n) sum_i basis(z_i,y_i) f_i - (1/n^2) sum_{i,j} basis(z_i,y_j) f_i ]`.
    pub fn paired_minus_product_weights(&self, coef: &DVector<f64>, kind: BasisKind) -> DVector<f64> {
        let n = self.n() as f64;
        let sy = self.y_sums();
        DVector::from_fn(self.n(), |i, _| {
            (0..self.b())
                .map(|k| coef[k] * self.z_part(i, k, kind) * (self.ky[(i, k)] / n - sy[k] / (n * n)))
                .sum()
        })
    }

    /// `(1/n) sum_i basis(z_i,y_i) - (1/n^2) sum_{i,j} basis(z_i,y_j)`.
    pub fn paired_minus_product(&self, kind: BasisKind) -> DVector<f64> {
        let n = self.n() as f64;
        let sy = self.y_sums();
        DVector::from_fn(self.b(), |k, _| {
            let mut paired = 0.0;
            let mut zsum = 0.0;
            for i in 0..self.n() {
                let a = self.z_part(i, k, kind);
                paired += a * self.ky[(i, k)];
                zsum += a;
            }
            paired / n - zsum * sy[k] / (n * n)
        })
    }

    /// Factors restricted to the given sample rows.
    pub fn select_rows(&self, rows: &[usize]) -> KernelFactors {
        KernelFactors {
            kz: self.kz.select_rows(rows),
            ky: self.ky.select_rows(rows),
            offset: self.offset.select_rows(rows),
            inv_sigma_sq: self.inv_sigma_sq,
        }
    }
}

/// Draws `b` distinct sample indices uniformly without replacement.
pub fn sample_center_indices(n: usize, b: usize, seed: u64) -> Result<Vec<usize>> {
    if b > n {
        return Err(Error::TooManyCenters { b, n });
    }
    if b == 0 {
        return Err(Error::InvalidParameter("basis count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, b).into_vec())
}

/// Centers `(u_k, v_k) = (z_idx, y_idx)` for `b` random sample indices.
pub fn select_centers(z: &DMatrix<f64>, y: &DMatrix<f64>, b: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_dim("sample count of y", z.nrows(), y.nrows())?;
    let idx = sample_center_indices(z.nrows(), b, seed)?;
    Ok(centers_from_indices(z, y, &idx))
}

pub fn centers_from_indices(z: &DMatrix<f64>, y: &DMatrix<f64>, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    (z.select_rows(idx), y.select_rows(idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn toy_model(seed: u64, b: usize, dz: usize, dy: usize, sigma: f64, ell: usize) -> BasisModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = DMatrix::from_fn(b, dz, |_, _| rng.random_range(-1.5..1.5));
        let v = DMatrix::from_fn(b, dy, |_, _| rng.random_range(-1.5..1.5));
        BasisModel::new(u, v, sigma, ell).unwrap()
    }

    #[test]
    fn select_centers_cases() {
        let z = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let y = DMatrix::from_fn(10, 1, |i, _| 100.0 + i as f64);
        let (u, v) = select_centers(&z, &y, 10, 1).unwrap();
        let mut seen: Vec<usize> = u.iter().map(|x| *x as usize).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        for k in 0..10 {
            assert_eq!(v[(k, 0)] - u[(k, 0)], 100.0);
        }
        assert_eq!(select_centers(&z, &y, 4, 9).unwrap(), select_centers(&z, &y, 4, 9).unwrap());
        assert!(matches!(select_centers(&z, &y, 11, 0), Err(Error::TooManyCenters { b: 11, n: 10 })));
        let z = DMatrix::zeros(500, 2);
        let y = DMatrix::zeros(500, 1);
        let b = default_basis_count(500);
        assert_eq!(select_centers(&z, &y, b, 3).unwrap().0.nrows(), 200);
    }

    #[test]
    fn phi_examples() {
        let m = BasisModel::new(
            DMatrix::from_row_slice(2, 1, &[0.5, -1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            0.7,
            0,
        )
        .unwrap();
        assert_relative_eq!(m.eval_phi(&[0.5], &[1.0]).unwrap()[0], 1.0);
        // |z-u|^2 + |y-v|^2 = 2 sigma^2
        let d = 0.7 * 2f64.sqrt();
        assert_relative_eq!(m.eval_phi(&[0.5 + d], &[1.0]).unwrap()[0], (-1.0f64).exp(), epsilon = 1e-15);
        assert!(m.eval_phi(&[0.5, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn phi_matches_direct_formula() {
        let m = toy_model(2, 5, 2, 2, 0.8, 1);
        let (z, y) = ([0.3, -0.2], [1.1, 0.4]);
        let phi = m.eval_phi(&z, &y).unwrap();
        for k in 0..5 {
            let mut d = 0.0;
            for c in 0..2 {
                d += (z[c] - m.centers_u()[(k, c)]).powi(2) + (y[c] - m.centers_v()[(k, c)]).powi(2);
            }
            let expected = (-d / (2.0 * 0.64)).exp();
            assert_relative_eq!(phi[k], expected, max_relative = 1e-14);
            assert!(phi[k] > 0.0 && phi[k] <= 1.0);
        }
    }

    #[test]
    fn varphi_examples() {
        let m = toy_model(4, 6, 2, 1, 0.9, 1);
        let u = m.centers_u().row(2).clone_owned();
        let v = m.eval_varphi(&[0.2, u[1]], &[0.0]).unwrap();
        assert_eq!(v[2], 0.0);
        let v = m.eval_varphi(&[0.2, u[1] + 0.3], &[0.0]).unwrap();
        assert!(v[2] < 0.0);
    }

    #[test]
    fn varphi_matches_central_difference() {
        for seed in 0..5 {
            let m = toy_model(seed, 7, 2, 2, 0.6 + 0.2 * seed as f64, (seed % 2) as usize);
            let z = [0.1, -0.4];
            let y = [0.3, 0.2];
            let h = 1e-5;
            let mut zp = z;
            let mut zm = z;
            zp[m.ell()] += h;
            zm[m.ell()] -= h;
            let fd = (m.eval_phi(&zp, &y).unwrap() - m.eval_phi(&zm, &y).unwrap()) / (2.0 * h);
            let an = m.eval_varphi(&z, &y).unwrap();
            for k in 0..m.b() {
                assert!((fd[k] - an[k]).abs() <= 1e-6 * an[k].abs().max(1e-8), "k={k}: {} vs {}", fd[k], an[k]);
            }
        }
    }

    #[test]
    fn varphi_dz_matches_central_difference() {
        for seed in 0..5 {
            let m = toy_model(seed, 7, 2, 1, 0.5 + 0.3 * seed as f64, (seed % 2) as usize);
            let z = [0.2, -0.3];
            let y = [0.1];
            let h = 1e-5;
            let mut zp = z;
            let mut zm = z;
            zp[m.ell()] += h;
            zm[m.ell()] -= h;
            let fd = (m.eval_varphi(&zp, &y).unwrap() - m.eval_varphi(&zm, &y).unwrap()) / (2.0 * h);
            let an = m.eval_varphi_dz(&z, &y).unwrap();
            for k in 0..m.b() {
                assert!((fd[k] - an[k]).abs() <= 1e-6 * an[k].abs().max(1e-8), "k={k}: {} vs {}", fd[k], an[k]);
            }
        }
    }

    #[test]
    fn gram_h_diagonal_and_symmetry() {
        let m = toy_model(7, 4, 2, 1, 0.5, 0);
        let h = m.gram_h();
        let diag = 0.5f64.powi(-4) * (PI.sqrt() * 0.5).powi(3) * 0.25 / 2.0;
        for k in 0..4 {
            assert_relative_eq!(h[(k, k)], diag, max_relative = 1e-14);
        }
        assert!((&h - h.transpose()).amax() < 1e-12);
    }

    #[test]
    fn gram_matrices_are_psd() {
        let m = toy_model(8, 30, 2, 1, 0.6, 1);
        for g in [m.gram_h(), m.gram_d()] {
            let tr = g.trace();
            let eig = g.symmetric_eigenvalues();
            assert!(eig.min() >= -1e-10 * tr);
        }
    }

    // Tensor-product Gauss-Legendre over a +-10 sigma box, split into panels.
    fn gl_nodes() -> (Vec<f64>, Vec<f64>) {
        // 8-point rule on [-1, 1]
        let x = [
            0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363,
        ];
        let w = [
            0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763,
        ];
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for i in 0..4 {
            nodes.push(-x[i]);
            weights.push(w[i]);
            nodes.push(x[i]);
            weights.push(w[i]);
        }
        (nodes, weights)
    }

    fn integrate_2d(f: impl Fn(f64, f64) -> f64, lo: (f64, f64), hi: (f64, f64), panels: usize) -> f64 {
        let (xs, ws) = gl_nodes();
        let hx = (hi.0 - lo.0) / panels as f64;
        let hy = (hi.1 - lo.1) / panels as f64;
        let mut total = 0.0;
        for pi in 0..panels {
            for pj in 0..panels {
                let cx = lo.0 + (pi as f64 + 0.5) * hx;
                let cy = lo.1 + (pj as f64 + 0.5) * hy;
                for (a, wa) in xs.iter().zip(&ws) {
                    for (b, wb) in xs.iter().zip(&ws) {
                        total += wa * wb * f(cx + a * hx / 2.0, cy + b * hy / 2.0);
                    }
                }
            }
        }
        total * hx * hy / 4.0
    }

    #[test]
    fn gram_entries_match_quadrature() {
        let m = toy_model(12, 3, 1, 1, 0.7, 0);
        let h = m.gram_h();
        let d = m.gram_d();
        let s = m.sigma();
        let (lo, hi) = (
            (m.centers_u().min() - 10.0 * s, m.centers_v().min() - 10.0 * s),
            (m.centers_u().max() + 10.0 * s, m.centers_v().max() + 10.0 * s),
        );
        for k in 0..3 {
            for kp in 0..3 {
                let qh = integrate_2d(
                    |z, y| {
                        let a = m.eval_varphi(&[z], &[y]).unwrap();
                        a[k] * a[kp]
                    },
                    lo,
                    hi,
                    40,
                );
                let qd = integrate_2d(
                    |z, y| {
                        let a = m.eval_phi(&[z], &[y]).unwrap();
                        a[k] * a[kp]
                    },
                    lo,
                    hi,
                    40,
                );
                assert!((h[(k, kp)] - qh).abs() <= 1e-6 * qh.abs().max(1e-3 * h[(0, 0)]));
                assert!((d[(k, kp)] - qd).abs() <= 1e-6 * qd.abs());
            }
        }
    }

    #[test]
    fn factors_reproduce_pointwise_basis() {
        let m = toy_model(3, 5, 2, 1, 0.9, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let z = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(6, 1, |_, _| rng.random_range(-1.0..1.0));
        let f = m.factors(&z, &y).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let zi: Vec<f64> = z.row(i).iter().copied().collect();
                let yj: Vec<f64> = y.row(j).iter().copied().collect();
                let phi = m.eval_phi(&zi, &yj).unwrap();
                let vphi = m.eval_varphi(&zi, &yj).unwrap();
                let vdz = m.eval_varphi_dz(&zi, &yj).unwrap();
                for k in 0..5 {
                    assert_relative_eq!(f.kz[(i, k)] * f.ky[(j, k)], phi[k], max_relative = 1e-13);
                    assert_relative_eq!(f.offset[(i, k)] * f.kz[(i, k)] * f.ky[(j, k)], vphi[k], max_relative = 1e-12, epsilon = 1e-300);
                    let o = f.offset[(i, k)];
                    let second = (o * o - f.inv_sigma_sq) * f.kz[(i, k)] * f.ky[(j, k)];
                    assert_relative_eq!(second, vdz[k], max_relative = 1e-12, epsilon = 1e-300);
                }
            }
        }
    }
}
