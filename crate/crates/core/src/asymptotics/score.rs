//! Analytic first and second derivatives of the assumed Gaussian
//! log-likelihood in the real coordinates θ = [Re α, Im α, vecs(Φ)].
//!
//! With `W = Φ⁻¹`, `r = x − αv`, `y = Wr`, `w = Wv` and `E_k = ∂Φ/∂μ_k`:
//!
//! ```text
//! ∂/∂η        = [2 Re(wᴴr), 2 Im(wᴴr)]
//! ∂/∂μ_k      = tr((yyᴴ − W) E_k)
//! ∂²/∂η∂η     = −2 (vᴴWv) I₂
//! ∂²/∂η₁∂μ_l  = −2 Re tr(E_l y wᴴ),   ∂²/∂η₂∂μ_l = −2 Im tr(E_l y wᴴ)
//! ∂²/∂μ_k∂μ_l = tr(W E_l W E_k) − 2 Re(yᴴ E_l W E_k y)
//! ```

use crate::error::{Error, Result};
use crate::linalg::{vecs_index, CVector, HermitianMatrix, RealParamVector, C64};

/// `tr(G E_k)` for every vecs coordinate `k`, for a general (not necessarily
/// Hermitian) row-major N×N matrix `G`.
pub(crate) fn basis_contract(n: usize, g: &[C64], out: &mut [C64]) {
    let nl = n * (n - 1) / 2;
    for i in 0..n {
        out[i] = g[i * n + i];
    }
    let mut k = 0;
    for col in 0..n {
        for row in col + 1..n {
            // E = e_row e_colᵀ + e_col e_rowᵀ  and  E = i e_row e_colᵀ − i e_col e_rowᵀ
            let g_cr = g[col * n + row];
            let g_rc = g[row * n + col];
            out[n + k] = g_cr + g_rc;
            out[n + nl + k] = C64::new(0.0, 1.0) * (g_cr - g_rc);
            k += 1;
        }
    }
}

/// Row vector `a·E_l` for a row vector `a`, returned densely.
fn row_times_basis(n: usize, a: &[C64], l: usize, out: &mut [C64]) {
    out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    let (row, col, part) = vecs_index(n, l);
    match part {
        0 => out[row] = a[row],
        1 => {
            // E = e_row e_colᵀ + e_col e_rowᵀ
            out[col] = a[row];
            out[row] = a[col];
        }
        _ => {
            let i = C64::new(0.0, 1.0);
            out[col] = i * a[row];
            out[row] = -i * a[col];
        }
    }
}

/// Log-likelihood derivatives at a fixed parameter point. The parts that do
/// not depend on the observation are computed once.
#[derive(Clone, Debug)]
pub struct GaussianScore {
    n: usize,
    alpha: C64,
    v: CVector,
    /// `W = Φ⁻¹`, row-major.
    w_mat: Vec<C64>,
    /// `w = Wv`
    wv: Vec<C64>,
    /// `vᴴWv`
    vwv: f64,
    /// `tr(W E_l W E_k)`, row-major `N² × N²`.
    mu_const: Vec<f64>,
}

impl GaussianScore {
    pub fn new(theta: &RealParamVector, v: &CVector) -> Result<Self> {
        let phi = theta.phi()?;
        let n = phi.dim();
        if v.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: v.dim() });
        }
        let inv: HermitianMatrix = phi.cholesky()?.inverse();
        let w_mat = inv.as_slice().to_vec();
        let wv = inv.mul_vec(v).into_vec();
        let vwv = v.iter().zip(&wv).map(|(a, b)| (a.conj() * b).re).sum();

        let d = n * n;
        let mut mu_const = vec![0.0; d * d];
        let mut we = vec![C64::new(0.0, 0.0); n * n];
        let mut contracted = vec![C64::new(0.0, 0.0); d];
        let mut row = vec![C64::new(0.0, 0.0); n];
        for l in 0..d {
            // we = W E_l W, row by row: (W E_l W)[i,:] = (W[i,:] E_l) W
            for i in 0..n {
                row_times_basis(n, &w_mat[i * n..(i + 1) * n], l, &mut row);
                for j in 0..n {
                    we[i * n + j] = (0..n).fold(C64::new(0.0, 0.0), |acc, m| acc + row[m] * w_mat[m * n + j]);
                }
            }
            basis_contract(n, &we, &mut contracted);
            for k in 0..d {
                mu_const[k * d + l] = contracted[k].re;
            }
        }
        Ok(Self { n, alpha: theta.alpha(), v: v.clone(), w_mat, wv, vwv, mu_const })
    }

    /// Dimension of θ, `2 + N²`.
    pub fn dim(&self) -> usize {
        2 + self.n * self.n
    }

    /// Writes the gradient into `score` (length `dim`) and the Hessian into
    /// `hessian` (row-major `dim × dim`).
    pub fn eval(&self, x: &CVector, score: &mut [f64], hessian: &mut [f64]) {
        let n = self.n;
        let d = n * n;
        let dim = self.dim();
        let r: Vec<C64> = x.iter().zip(self.v.iter()).map(|(xi, vi)| xi - self.alpha * vi).collect();
        let y: Vec<C64> = (0..n)
            .map(|i| (0..n).fold(C64::new(0.0, 0.0), |acc, j| acc + self.w_mat[i * n + j] * r[j]))
            .collect();
        let q = self.wv.iter().zip(&r).fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b);
        score[0] = 2.0 * q.re;
        score[1] = 2.0 * q.im;

        let mut g = vec![C64::new(0.0, 0.0); n * n];
        let mut contracted = vec![C64::new(0.0, 0.0); d];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = y[i] * y[j].conj() - self.w_mat[i * n + j];
            }
        }
        basis_contract(n, &g, &mut contracted);
        for k in 0..d {
            score[2 + k] = contracted[k].re;
        }

        hessian.iter_mut().for_each(|h| *h = 0.0);
        hessian[0] = -2.0 * self.vwv;
        hessian[dim + 1] = -2.0 * self.vwv;

        // cross block from tr(E_l y wᴴ)
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = y[i] * self.wv[j].conj();
            }
        }
        basis_contract(n, &g, &mut contracted);
        for l in 0..d {
            let (re, im) = (-2.0 * contracted[l].re, -2.0 * contracted[l].im);
            hessian[2 + l] = re;
            hessian[(2 + l) * dim] = re;
            hessian[dim + 2 + l] = im;
            hessian[(2 + l) * dim + 1] = im;
        }

        // μμ block: yᴴ E_l W E_k y = tr(E_k · y (yᴴ E_l W))
        let y_conj: Vec<C64> = y.iter().map(|z| z.conj()).collect();
        let mut a = vec![C64::new(0.0, 0.0); n];
        for l in 0..d {
            row_times_basis(n, &y_conj, l, &mut a);
            let b: Vec<C64> = (0..n)
                .map(|j| (0..n).fold(C64::new(0.0, 0.0), |acc, m| acc + a[m] * self.w_mat[m * n + j]))
                .collect();
            for i in 0..n {
                for j in 0..n {
                    g[i * n + j] = y[i] * b[j];
                }
            }
            basis_contract(n, &g, &mut contracted);
            for k in 0..d {
                hessian[(2 + k) * dim + 2 + l] = self.mu_const[k * d + l] - 2.0 * contracted[k].re;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ces::gaussian_loglik;
    use crate::linalg::unvecs;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn setup() -> (RealParamVector, CVector, CVector) {
        let phi = HermitianMatrix::from_rows(
            3,
            &[
                c(2.0, 0.0), c(0.3, 0.4), c(-0.1, 0.2),
                c(0.3, -0.4), c(1.5, 0.0), c(0.25, -0.1),
                c(-0.1, -0.2), c(0.25, 0.1), c(1.2, 0.0),
            ],
        )
        .unwrap();
        let theta = RealParamVector::new(c(0.2, -0.35), &phi);
        let v = CVector::new(vec![c(1.0, 0.0), c(0.4, 0.3), c(-0.5, 0.6)]).unwrap();
        let x = CVector::new(vec![c(0.7, -1.1), c(-0.3, 0.9), c(1.4, 0.2)]).unwrap();
        (theta, v, x)
    }

    fn loglik_at(theta: &[f64], v: &CVector, x: &CVector) -> f64 {
        let phi = unvecs(&theta[2..]).unwrap();
        gaussian_loglik(x, c(theta[0], theta[1]), v, &phi).unwrap()
    }

    #[test]
    fn score_matches_finite_differences() {
        let (theta, v, x) = setup();
        let gs = GaussianScore::new(&theta, &v).unwrap();
        let dim = gs.dim();
        let mut score = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        gs.eval(&x, &mut score, &mut hess);
        let base = theta.to_vec();
        let h = 1e-6;
        for k in 0..dim {
            let mut p = base.clone();
            let mut m = base.clone();
            p[k] += h;
            m[k] -= h;
            let fd = (loglik_at(&p, &v, &x) - loglik_at(&m, &v, &x)) / (2.0 * h);
            assert!((fd - score[k]).abs() <= 1e-5 * score[k].abs().max(1.0), "score[{k}]: {} vs fd {fd}", score[k]);
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_score() {
        let (theta, v, x) = setup();
        let gs = GaussianScore::new(&theta, &v).unwrap();
        let dim = gs.dim();
        let mut score = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        gs.eval(&x, &mut score, &mut hess);
        let base = theta.to_vec();
        let h = 1e-6;
        let score_at = |t: &[f64]| {
            let th = RealParamVector { eta: [t[0], t[1]], mu: t[2..].to_vec() };
            let g = GaussianScore::new(&th, &v).unwrap();
            let mut s = vec![0.0; dim];
            let mut hh = vec![0.0; dim * dim];
            g.eval(&x, &mut s, &mut hh);
            s
        };
        for l in 0..dim {
            let mut p = base.clone();
            let mut m = base.clone();
            p[l] += h;
            m[l] -= h;
            let sp = score_at(&p);
            let sm = score_at(&m);
            for k in 0..dim {
                let fd = (sp[k] - sm[k]) / (2.0 * h);
                let an = hess[k * dim + l];
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "H[{k},{l}]: {an} vs fd {fd}");
            }
        }
        for k in 0..dim {
            for l in 0..dim {
                assert!((hess[k * dim + l] - hess[l * dim + k]).abs() < 1e-12);
            }
        }
    }
}
