//! Fast identity checks on built-in fixtures: the single-vector reductions of
//! the mismatched GLRT and the Wald test, and the two forms of the Wald
//! statistic.

use serde::{Deserialize, Serialize};

use crate::ces::{CesModel, SignalScenario};
use crate::detectors::{amf, evaluate, kelly, mglrt, wald, wald_explicit, DetectorKind, WaldScatter};
use crate::error::Result;
use crate::estimators::secondary_scatter;
use crate::linalg::{CVector, Dataset, HermitianMatrix, C64};
use crate::rng::{substream, Stream};

const FIXTURES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub fixture: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<IdentityCheck>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn check(name: &str, fixture: usize, lhs: f64, rhs: f64, tolerance: f64) -> IdentityCheck {
    let rel_err = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    IdentityCheck { name: name.into(), fixture, lhs, rhs, rel_err, tolerance, passed: rel_err <= tolerance }
}

/// Random dataset with a weak signal in correlated complex-t clutter.
fn fixture(index: usize, n: usize, m1: usize, m0: usize) -> Result<Dataset> {
    let mut rng = substream(0x5e1f_7e57, Stream::Fixture, index as u64);
    let sigma = HermitianMatrix::from_lower_fn(n, |i, j| {
        C64::from_polar(0.6_f64.powi((i - j) as i32), 0.3 * (i - j) as f64)
    });
    let steering = CVector::new(
        (0..n).map(|k| C64::from_polar(1.0 / (n as f64).sqrt(), 0.7 * k as f64)).collect(),
    )?;
    let scn = SignalScenario::new(C64::new(0.4, -0.2), steering.clone(), sigma, CesModel::ComplexT { dof: 6.0 })?;
    let primary = scn.sampler()?.draw_many(m1, &mut rng);
    let secondary = scn.with_alpha(C64::new(0.0, 0.0)).sampler()?.draw_many(m0, &mut rng);
    Dataset::new(primary, secondary, steering)
}

/// Scales the first entry of the first primary vector by `1 + perturb`.
fn perturbed(data: &Dataset, perturb: f64) -> Dataset {
    let mut d = data.clone();
    if perturb != 0.0 {
        let mut x = d.primary[0].clone().into_vec();
        x[0] *= 1.0 + perturb;
        d.primary[0] = CVector::new(x).expect("finite fixture");
    }
    d
}

/// Runs every identity. With `perturb ≠ 0` the reference side of each
/// identity sees a perturbed fixture, which must make the suite fail.
pub fn run(perturb: f64) -> Result<SelftestReport> {
    let mut checks = Vec::new();
    for k in 0..FIXTURES {
        let n = 2 + k % 5;
        let single = fixture(k, n, 1, 2 * n + k)?;
        let reference = perturbed(&single, perturb);
        let ref_s0 = secondary_scatter(&reference.secondary)?;
        let x = &reference.primary[0];
        let m0 = reference.m0();

        let lhs = mglrt(&single)?.statistic;
        let rhs = kelly(x, &ref_s0, &reference.steering, m0)?.statistic;
        checks.push(check("mglrt == kelly at M1 = 1", k, lhs, rhs, 1e-10));

        let lhs = wald(&single, WaldScatter::S0OverM0)?.statistic;
        let rhs = amf(x, &ref_s0, &reference.steering, m0)?.statistic;
        checks.push(check("wald(S0/M0) == amf at M1 = 1", k, lhs, rhs, 1e-12));

        let multi = fixture(100 + k, n, 1 + k, 3 * n)?;
        let lhs = wald(&multi, WaldScatter::T1AtEtaHat)?.statistic;
        let rhs = wald_explicit(&perturbed(&multi, perturb))?;
        checks.push(check("wald via P-hat == explicit wald", k, lhs, rhs, 1e-12));

        let all = evaluate(&single, &DetectorKind::ALL, WaldScatter::S0OverM0)?;
        checks.push(check("evaluate == mglrt", k, all[0].statistic, mglrt(&reference)?.statistic, 1e-14));
    }

    // hand value: x = v = e₁, S₀ = I₂, M₀ = 1 gives 4 ln 2
    let v = CVector::basis(2, 0);
    let x = perturbed(&Dataset::new(vec![v.clone()], vec![CVector::basis(2, 1)], v.clone())?, perturb);
    let lhs = kelly(&x.primary[0], &HermitianMatrix::identity(2), &v, 1)?.statistic;
    checks.push(check("kelly hand value 4 ln 2", 0, lhs, 4.0 * 2f64.ln(), 1e-14));

    Ok(SelftestReport { checks })
}
