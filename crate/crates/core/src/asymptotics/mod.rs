//! Mismatched-ML asymptotics under the null hypothesis: pseudo-true
//! parameters, the sandwich matrices `A`, `B`, `C = A⁻¹BA⁻¹`, the Schur
//! complement `P`, `H = P·C_η` and its eigenvalues, which weight the limiting
//! chi-square mixture of the GLRT.
//!
//! Sign convention: `A = −E{∇ᵀ∇ ln f}` (the expected *negative* Hessian), so
//! that `A_η = B_η = 2(vᴴΣ⁻¹v)I₂` at the pseudo-true point.

mod null_law;
mod score;

pub use null_law::{chi2_cdf, chi2_quantile, weighted_chisq_cdf, weighted_chisq_cdf_numeric};
pub use score::GaussianScore;

use nalgebra::{DMatrix, Matrix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ces::{CesModel, CesSampler, SignalScenario};
use crate::error::{Error, Result};
use crate::linalg::{vecs, CVector, HermitianMatrix, RealParamVector, C64};
use crate::rng::{substream, Stream};

/// Imaginary-part tolerance for the eigenvalues of `H`.
pub const EIG_IMAG_TOL: f64 = 1e-8;

/// Number of independent blocks the sandwich expectation is split into. Fixed,
/// so results do not depend on the number of worker threads.
pub const SANDWICH_BLOCKS: usize = 64;

/// Closed-form pseudo-true point under the null: `η̄ = 0`, `μ̄ = vecs(Σ)`.
pub fn pseudo_true_closed_form(sigma: &HermitianMatrix) -> RealParamVector {
    RealParamVector::new(C64::new(0.0, 0.0), sigma)
}

/// Pseudo-true point estimated from one large null sample: the exact
/// maximizer of the average Gaussian log-likelihood over (α, Φ).
///
/// With the sample mean `x̄` and centred covariance `S`, the maximizer is
/// `α̂ = vᴴS⁻¹x̄ / vᴴS⁻¹v` and `Φ̂ = S + (x̄ − α̂v)(x̄ − α̂v)ᴴ`.
pub fn pseudo_true_numeric(
    model: &CesModel,
    sigma: &HermitianMatrix,
    v: &CVector,
    sample_size: usize,
    seed: u64,
) -> Result<RealParamVector> {
    if sample_size <= sigma.dim() {
        return Err(Error::InvalidParameter(format!(
            "sample size {sample_size} must exceed the dimension {}",
            sigma.dim()
        )));
    }
    let scn = SignalScenario::new(C64::new(0.0, 0.0), v.clone(), sigma.clone(), *model)?;
    let mut rng = substream(seed, Stream::PseudoTrue, 0);
    let sample = scn.sampler()?.draw_many(sample_size, &mut rng);
    ml_fit(&sample, v)
}

/// Joint Gaussian ML fit of `(α, Φ)` with mean `αv` to an i.i.d. sample.
pub fn ml_fit(sample: &[CVector], v: &CVector) -> Result<RealParamVector> {
    let n = v.dim();
    let count = sample.len() as f64;
    let mut mean = vec![C64::new(0.0, 0.0); n];
    for x in sample {
        for (m, xi) in mean.iter_mut().zip(x.iter()) {
            *m += xi;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mean = CVector::new(mean)?;
    let centred: Vec<CVector> = sample.iter().map(|x| x.minus_scaled(C64::new(1.0, 0.0), &mean)).collect();
    let s = HermitianMatrix::outer_sum(n, &centred)?.scaled(1.0 / count);
    let chol = s.cholesky()?;
    let alpha = chol.quad_form(v, &mean)? / chol.quad_form(v, v)?.re;
    let d = mean.minus_scaled(alpha, v);
    let phi = s.add(&HermitianMatrix::outer_sum(n, [&d])?)?;
    Ok(RealParamVector::new(alpha, &phi))
}

/// Running mean and sum of squared deviations, merged in a fixed order.
#[derive(Clone, Debug)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        let inv = 1.0 / self.count;
        for ((m, s), &xi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = xi - *m;
            *m += delta * inv;
            *s += delta * (xi - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        let w = other.count / total;
        let cross = self.count * other.count / total;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * w;
            self.m2[i] += other.m2[i] + delta * delta * cross;
        }
        self.count = total;
    }

    /// Standard error of each mean.
    fn std_error(&self) -> Vec<f64> {
        let denom = (self.count - 1.0).max(1.0) * self.count;
        self.m2.iter().map(|s| (s.max(0.0) / denom).sqrt()).collect()
    }
}

/// Monte Carlo estimates of `A` and `B` with per-entry standard errors.
#[derive(Clone, Debug)]
pub struct AbEstimate {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub a_se: DMatrix<f64>,
    pub b_se: DMatrix<f64>,
    pub samples: usize,
    /// Per-block `A`, `B` (used for batch-means errors of derived quantities).
    pub blocks: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

/// Estimates `A(θ) = −E{∇ᵀ∇ ln f}` and `B(θ) = E{∇ln f ∇ᵀln f}` under
/// null data from the true model, as sample means over `sample_size` draws.
///
/// The draws are split into [`SANDWICH_BLOCKS`] blocks with their own
/// substreams and reduced in block order; run inside a rayon pool to control
/// the thread count.
pub fn ab_matrices(
    model: &CesModel,
    sigma: &HermitianMatrix,
    v: &CVector,
    theta: &RealParamVector,
    sample_size: usize,
    seed: u64,
) -> Result<AbEstimate> {
    if sample_size < SANDWICH_BLOCKS {
        return Err(Error::InvalidParameter(format!("sample size must be at least {SANDWICH_BLOCKS}")));
    }
    let scn = SignalScenario::new(C64::new(0.0, 0.0), v.clone(), sigma.clone(), *model)?;
    let sampler = scn.sampler()?;
    let score = GaussianScore::new(theta, v)?;
    let dim = score.dim();

    let per_block: Vec<(Moments, Moments)> = (0..SANDWICH_BLOCKS)
        .into_par_iter()
        .map(|blk| {
            let count = sample_size / SANDWICH_BLOCKS + usize::from(blk < sample_size % SANDWICH_BLOCKS);
            sandwich_block(&sampler, &score, count, seed, blk as u64)
        })
        .collect();

    let to_matrix = |m: &[f64]| DMatrix::from_row_slice(dim, dim, m);
    let blocks = per_block.iter().map(|(a, b)| (to_matrix(&a.mean), to_matrix(&b.mean))).collect();
    let mut a_all = Moments::new(dim * dim);
    let mut b_all = Moments::new(dim * dim);
    for (a, b) in &per_block {
        a_all.merge(a);
        b_all.merge(b);
    }
    Ok(AbEstimate {
        a: symmetrize(to_matrix(&a_all.mean)),
        b: symmetrize(to_matrix(&b_all.mean)),
        a_se: to_matrix(&a_all.std_error()),
        b_se: to_matrix(&b_all.std_error()),
        samples: sample_size,
        blocks,
    })
}

fn sandwich_block(sampler: &CesSampler, score: &GaussianScore, count: usize, seed: u64, block: u64) -> (Moments, Moments) {
    let dim = score.dim();
    let mut rng = substream(seed, Stream::SandwichBlock, block);
    let mut a = Moments::new(dim * dim);
    let mut b = Moments::new(dim * dim);
    let mut s = vec![0.0; dim];
    let mut h = vec![0.0; dim * dim];
    let mut outer = vec![0.0; dim * dim];
    for _ in 0..count {
        let x = sampler.draw(&mut rng);
        score.eval(&x, &mut s, &mut h);
        h.iter_mut().for_each(|e| *e = -*e);
        for i in 0..dim {
            for j in 0..dim {
                outer[i * dim + j] = s[i] * s[j];
            }
        }
        a.push(&h);
        b.push(&outer);
    }
    (a, b)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let lu = m.clone().lu();
    let u = lu.u();
    let diag: Vec<f64> = u.diagonal().iter().map(|x| x.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-13 * max {
        return Err(Error::InvalidParameter(format!("{what} is singular")));
    }
    lu.try_inverse().ok_or_else(|| Error::InvalidParameter(format!("{what} is singular")))
}

/// `P = A_η − A_ημ A_μ⁻¹ A_μη`, the Schur complement of the nuisance block.
pub fn p_matrix(a: &DMatrix<f64>) -> Result<Matrix2<f64>> {
    let dim = a.nrows();
    if dim < 3 || a.ncols() != dim {
        return Err(Error::InvalidParameter("A must be square with a nuisance block".into()));
    }
    let a_eta = a.view((0, 0), (2, 2));
    let a_eta_mu = a.view((0, 2), (2, dim - 2));
    let a_mu_eta = a.view((2, 0), (dim - 2, 2));
    let a_mu_inv = invert(&a.view((2, 2), (dim - 2, dim - 2)).into_owned(), "A_mu block")?;
    let p = a_eta - a_eta_mu * a_mu_inv * a_mu_eta;
    Ok(Matrix2::new(p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]))
}

/// `C = A⁻¹ B A⁻¹`
pub fn sandwich(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a_inv = invert(a, "A")?;
    Ok(symmetrize(&a_inv * b * &a_inv))
}

/// `H = P·C_η` and its eigenvalues, sorted descending.
pub fn h_matrix_and_eigs(p: &Matrix2<f64>, c_eta: &Matrix2<f64>) -> Result<(Matrix2<f64>, [f64; 2])> {
    let h = p * c_eta;
    let half_trace = 0.5 * h.trace();
    let disc = half_trace * half_trace - h.determinant();
    let root = if disc >= 0.0 {
        disc.sqrt()
    } else if (-disc).sqrt() <= EIG_IMAG_TOL {
        0.0
    } else {
        return Err(Error::ComplexEigenvalues((-disc).sqrt()));
    };
    Ok((h, [half_trace + root, half_trace - root]))
}

fn top_left(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// Row-major nested representation of a matrix for JSON output.
fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn rows2(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Everything the sandwich pipeline produces for one scenario.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichReport {
    pub model: CesModel,
    pub n: usize,
    pub sample_size: usize,
    pub seed: u64,
    pub sign_convention: String,
    pub eta_bar: [f64; 2],
    pub mu_bar: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "A_se")]
    pub a_se: Vec<Vec<f64>>,
    #[serde(rename = "B_se")]
    pub b_se: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: [[f64; 2]; 2],
    #[serde(rename = "C_eta")]
    pub c_eta: [[f64; 2]; 2],
    #[serde(rename = "H")]
    pub h: [[f64; 2]; 2],
    pub lambdas: [f64; 2],
    /// Batch-means standard errors of the eigenvalues over the blocks.
    pub lambdas_se: [f64; 2],
    /// `2 vᴴΣ⁻¹v`, the closed-form value of the diagonal of `A_η` and `B_η`.
    pub a_eta_closed_form: f64,
    /// Largest `|entry| / SE` over the `A_ημ` and `B_ημ` blocks.
    pub max_cross_z: f64,
    /// Largest `|entry|` over the `A_ημ` block.
    pub max_abs_a_cross: f64,
}

/// Runs pseudo-true → A, B → C → P → H → λ at the closed-form pseudo-true
/// point for null data from `model`.
pub fn sandwich_report(
    model: &CesModel,
    sigma: &HermitianMatrix,
    v: &CVector,
    sample_size: usize,
    seed: u64,
) -> Result<SandwichReport> {
    let theta = pseudo_true_closed_form(sigma);
    let est = ab_matrices(model, sigma, v, &theta, sample_size, seed)?;
    let (c, p, h, lambdas) = pipeline(&est.a, &est.b)?;

    let block_lambdas: Vec<[f64; 2]> =
        est.blocks.iter().map(|(a, b)| pipeline(a, b).map(|r| r.3)).collect::<Result<_>>()?;
    let k = block_lambdas.len() as f64;
    let mut lambdas_se = [0.0; 2];
    for (i, se) in lambdas_se.iter_mut().enumerate() {
        let mean = block_lambdas.iter().map(|l| l[i]).sum::<f64>() / k;
        let var = block_lambdas.iter().map(|l| (l[i] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        *se = (var / k).sqrt();
    }

    let dim = est.a.nrows();
    let mut max_cross_z = 0.0_f64;
    let mut max_abs_a_cross = 0.0_f64;
    for i in 0..2 {
        for j in 2..dim {
            max_abs_a_cross = max_abs_a_cross.max(est.a[(i, j)].abs());
            for (m, se) in [(&est.a, &est.a_se), (&est.b, &est.b_se)] {
                if se[(i, j)] > 0.0 {
                    max_cross_z = max_cross_z.max(m[(i, j)].abs() / se[(i, j)]);
                }
            }
        }
    }

    let vsv = sigma.cholesky()?.whiten(v)?.norm_sqr();
    Ok(SandwichReport {
        model: *model,
        n: sigma.dim(),
        sample_size,
        seed,
        sign_convention: "A = -E[hessian of log f]".into(),
        eta_bar: theta.eta,
        mu_bar: vecs(sigma),
        a: rows_of(&est.a),
        b: rows_of(&est.b),
        c: rows_of(&c),
        a_se: rows_of(&est.a_se),
        b_se: rows_of(&est.b_se),
        p: rows2(&p),
        c_eta: rows2(&top_left(&c)),
        h: rows2(&h),
        lambdas,
        lambdas_se,
        a_eta_closed_form: 2.0 * vsv,
        max_cross_z,
        max_abs_a_cross,
    })
}

type PipelineOut = (DMatrix<f64>, Matrix2<f64>, Matrix2<f64>, [f64; 2]);

fn pipeline(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<PipelineOut> {
    let c = sandwich(a, b)?;
    let p = p_matrix(a)?;
    let (h, lambdas) = h_matrix_and_eigs(&p, &top_left(&c))?;
    Ok((c, p, h, lambdas))
}
