#![allow(dead_code)]

use cesdetect::rng::StreamRng;
use cesdetect::{CVector, HermitianMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub fn cnormal(rng: &mut StreamRng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_cvector(n: usize, rng: &mut StreamRng) -> CVector {
    CVector::new((0..n).map(|_| cnormal(rng)).collect()).unwrap()
}

/// `G Gᴴ/n + δI` with a random spread of eigenvalues.
pub fn random_pd(n: usize, rng: &mut StreamRng) -> HermitianMatrix {
    let g: Vec<C64> = (0..n * n).map(|_| cnormal(rng)).collect();
    let shift = 0.05 + rng.random::<f64>();
    HermitianMatrix::from_lower_fn(n, |i, j| {
        let s = (0..n).fold(C64::new(0.0, 0.0), |acc, k| acc + g[i * n + k] * g[j * n + k].conj());
        s / n as f64 + if i == j { C64::new(shift, 0.0) } else { C64::new(0.0, 0.0) }
    })
}

/// Haar-ish random unitary from Gram-Schmidt on a complex Gaussian matrix,
/// returned row-major.
pub fn random_unitary(n: usize, rng: &mut StreamRng) -> Vec<C64> {
    let mut rows: Vec<Vec<C64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut r: Vec<C64> = (0..n).map(|_| cnormal(rng)).collect();
        for q in &rows {
            let p = q.iter().zip(&r).fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b);
            r.iter_mut().zip(q).for_each(|(x, qi)| *x -= p * qi);
        }
        let norm = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            rows.push(r.into_iter().map(|z| z / norm).collect());
        }
    }
    rows.concat()
}

/// `U x` for row-major `U`.
pub fn apply(u: &[C64], x: &CVector) -> CVector {
    let n = x.dim();
    CVector::new((0..n).map(|i| (0..n).fold(C64::new(0.0, 0.0), |acc, k| acc + u[i * n + k] * x[k])).collect()).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
