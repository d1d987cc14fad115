//! Self-checks shared by the CLI and the acceptance suite: group axioms,
//! spectral eigen-consistency, conformal covariance of A_2, the sharp
//! constant and the k = 1 bubble.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::cayley::{conformal_pullback, random_sphere_point, transport_exponents};
use crate::energy::{
    bubble_eval, bubble_pde_residual, energy_heis, sobolev_constant, BubbleParams, SphereEnergy,
    WholeSpaceRule, YamabeConstants,
};
use crate::error::{Error, Result};
use crate::heisenberg::{
    conformal_l2, dilate, group_inv, group_mul, koranyi_dist, koranyi_gauge, random_point,
    sub_laplacian, ScalarFieldH,
};
use crate::spectral::{
    apply_a2_differential, apply_a2k, lambda_jk, HarmonicBasis, SpectralFunction, Transform,
};
use crate::{Chart, Point};

fn point_err(a: &Point, b: &Point) -> f64 {
    let scale = 1.0 + a.t.abs() + a.z.iter().map(|z| z.norm()).sum::<f64>();
    let d = (a.t - b.t).abs()
        + a.z
            .iter()
            .zip(&b.z)
            .map(|(x, y)| (x - y).norm())
            .sum::<f64>();
    d / scale
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GroupSuiteReport {
    pub cases: usize,
    pub associativity: f64,
    pub inverse: f64,
    pub identity: f64,
    /// δ_λ(pq) = δ_λp·δ_λq
    pub dilation_automorphism: f64,
    /// |δ_λp| = λ|p|
    pub gauge_homogeneity: f64,
    /// d(gp, gq) = d(p, q)
    pub left_invariance: f64,
}

impl GroupSuiteReport {
    pub fn max_error(&self) -> f64 {
        [
            self.associativity,
            self.inverse,
            self.identity,
            self.dilation_automorphism,
            self.gauge_homogeneity,
            self.left_invariance,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Relative errors of the group and gauge identities on random triples.
pub fn group_suite(n: usize, cases: usize, seed: u64) -> Result<GroupSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = GroupSuiteReport {
        cases,
        ..Default::default()
    };
    let e = Point::origin(n);
    for _ in 0..cases {
        let p = random_point(&mut rng, n, 1.0);
        let q = random_point(&mut rng, n, 1.0);
        let g = random_point(&mut rng, n, 1.0);
        let lam: f64 = rng.gen_range(0.1..10.0);
        let m = |a: &Point, b: &Point| group_mul(a, b);
        r.associativity = r
            .associativity
            .max(point_err(&m(&m(&p, &q), &g), &m(&p, &m(&q, &g))));
        r.inverse = r
            .inverse
            .max(point_err(&m(&p, &group_inv(&p)), &e).max(point_err(&m(&group_inv(&p), &p), &e)));
        r.identity = r
            .identity
            .max(point_err(&m(&p, &e), &p).max(point_err(&m(&e, &p), &p)));
        let dp = dilate(lam, &p)?;
        let dq = dilate(lam, &q)?;
        r.dilation_automorphism = r
            .dilation_automorphism
            .max(point_err(&dilate(lam, &m(&p, &q))?, &m(&dp, &dq)));
        let gp = koranyi_gauge(&p);
        r.gauge_homogeneity = r
            .gauge_homogeneity
            .max((koranyi_gauge(&dp) - lam * gp).abs() / (lam * gp));
        let d0 = koranyi_dist(&p, &q);
        r.left_invariance = r
            .left_invariance
            .max((koranyi_dist(&m(&g, &p), &m(&g, &q)) - d0).abs() / d0);
    }
    Ok(r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenReport {
    pub jmax: usize,
    pub elements: usize,
    /// max over elements of ‖A_2 y − λ_jλ_l y‖ / ‖λ_jλ_l y‖ on the sample points
    pub max_rel_error: f64,
    /// max |⟨y_a, y_b⟩ − δ_ab| under the transform's quadrature
    pub orthonormality_defect: f64,
}

/// Differential A_2 against the spectral eigenvalue on every basis element.
pub fn eigen_consistency(n: usize, jmax: usize, points: usize, seed: u64) -> Result<EigenReport> {
    let b = Arc::new(HarmonicBasis::build(n, jmax, jmax)?);
    let q = 2.0 * n as f64 + 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<_> = (0..points)
        .map(|_| random_sphere_point(&mut rng, n))
        .collect();
    let max_rel_error = b
        .elements
        .par_iter()
        .map(|e| {
            let lam = lambda_jk(e.block.j, 1.0, q).unwrap() * lambda_jk(e.block.l, 1.0, q).unwrap();
            let (mut num, mut den): (f64, f64) = (0.0, 0.0);
            for p in &pts {
                // Richardson over steps h, h/2 on the fourth-order stencil
                let a1 = apply_a2_differential(|z| e.value(z), p, 2e-3);
                let a2 = apply_a2_differential(|z| e.value(z), p, 1e-3);
                let got = (16.0 * a2 - a1) / 15.0;
                let want = lam * e.value(&p.zeta);
                num = num.max((got - want).abs());
                den = den.max(want.abs());
            }
            num / den
        })
        .reduce(|| 0.0, f64::max);
    let t = Transform::with_oversampling(b.clone(), 2)?;
    let mut defect: f64 = 0.0;
    for e in 0..b.len() {
        let mut u = SpectralFunction::zero(b.clone());
        u.coeffs[e] = 1.0;
        let back = t.analyze_values(&t.synthesize_values(&u));
        for (i, c) in back.coeffs.iter().enumerate() {
            defect = defect.max((c - if i == e { 1.0 } else { 0.0 }).abs());
        }
    }
    Ok(EigenReport {
        jmax,
        elements: b.len(),
        max_rel_error,
        orthonormality_defect: defect,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub functions: usize,
    pub points: usize,
    /// max |L_2(Λ^a u∘C) − Λ^b (A_2u)∘C| / max |Λ^b (A_2u)∘C| per function
    pub max_rel_error: f64,
}

/// k = 1 covariance of A_2 under the Cayley transform for random band-limited u.
pub fn conformal_covariance(
    jmax: usize,
    functions: usize,
    points: usize,
    seed: u64,
) -> Result<CovarianceReport> {
    let b = Arc::new(HarmonicBasis::build(1, jmax, jmax)?);
    let chart = Chart::identity(1);
    let (_, bexp) = transport_exponents(1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..functions {
        let coeffs = (0..b.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = SpectralFunction::from_coeffs(b.clone(), coeffs)?;
        let au = apply_a2k(&u, 1.0)?;
        let pts: Vec<Point> = (0..points)
            .map(|_| random_point(&mut rng, 1, 1.0))
            .collect();
        let pull = conformal_pullback(|s| u.eval(s), &chart, 1.0);
        let pairs: Vec<(f64, f64)> = pts
            .par_iter()
            .map(|p| {
                let l = |h: f64| conformal_l2(&ScalarFieldH::with_step(&pull, h), p);
                let lhs = (4.0 * l(5e-4) - l(1e-3)) / 3.0;
                let rhs = chart.jacobian(p).powf(bexp) * au.eval(&chart.map(p));
                (lhs, rhs)
            })
            .collect();
        let scale = pairs.iter().map(|x| x.1.abs()).fold(0.0, f64::max);
        let err = pairs.iter().map(|x| (x.0 - x.1).abs()).fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    Ok(CovarianceReport {
        functions,
        points,
        max_rel_error: worst,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SharpnessRow {
    pub n: usize,
    pub k: f64,
    pub c_s: f64,
    /// ‖u0‖_{p*}² / ∫u0 A_{2k}u0 for the constant, by quadrature
    pub quotient_of_constant: f64,
    pub rel_error: f64,
    /// C_S·λ_0(k)²·|S|^{2k/Q} − 1
    pub identity_defect: f64,
}

pub fn sobolev_sharpness(cases: &[(usize, f64)]) -> Result<Vec<SharpnessRow>> {
    cases
        .iter()
        .map(|&(n, k)| {
            let c = YamabeConstants::new(n, k)?;
            let ctx = SphereEnergy::new(c, Arc::new(HarmonicBasis::build(n, 1, 1)?))?;
            let quot = ctx.sobolev_quotient(&ctx.constant_solution())?;
            let c_s = sobolev_constant(n, k)?;
            Ok(SharpnessRow {
                n,
                k,
                c_s,
                quotient_of_constant: quot,
                rel_error: (quot - c_s).abs() / c_s,
                identity_defect: c_s * c.lambda0 * c.lambda0 * c.total_mass.powf(2.0 * k / c.q)
                    - 1.0,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BubbleReport {
    /// c_Q fitted from −Δ_b ω = ω³ at the sample points (unit profile scaled)
    pub fitted_c_q: f64,
    pub formula_c_q: f64,
    pub points: usize,
    pub max_residual: f64,
    /// (λ, E_H(ω_λ), |E_H − C_E|/C_E)
    pub energies: Vec<(f64, f64, f64)>,
}

/// k = 1: c_Q calibration, pointwise PDE residual and E_H of dilated bubbles.
pub fn bubble_check(
    points: usize,
    lambdas: &[f64],
    n_per_axis: usize,
    seed: u64,
) -> Result<BubbleReport> {
    let c = YamabeConstants::new(1, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Point> = (0..points)
        .map(|_| random_point(&mut rng, 1, 1.0))
        .collect();
    // ω/c_Q solves −Δ_b w = c_Q² w³: fit c_Q² by least squares
    let mut unit = c;
    unit.c_q = 1.0;
    let std = BubbleParams::standard(1);
    let (mut ab, mut bb) = (0.0, 0.0);
    for p in &pts {
        let f = ScalarFieldH::with_step(|q: &Point| bubble_eval(&std, q, &unit), 1e-4);
        let lhs = -sub_laplacian(&f, p);
        let w3 = f.eval(p).powi(3);
        ab += lhs * w3;
        bb += w3 * w3;
    }
    let fitted_c_q = (ab / bb).sqrt();
    let mut max_residual: f64 = 0.0;
    for p in &pts {
        let xi = random_point(&mut rng, 1, 0.5);
        let b = BubbleParams::new(rng.gen_range(0.5..2.0), xi)?;
        max_residual = max_residual.max(bubble_pde_residual(&b, p, &c, 1e-4)?);
    }
    let mut energies = Vec::new();
    for &lam in lambdas {
        let b = BubbleParams::new(lam, Point::origin(1))?;
        let mut rule = WholeSpaceRule::standard(1);
        rule.n_per_axis = n_per_axis;
        rule.scale = lam;
        rule.h = 1e-4 * lam;
        let e = energy_heis(|p| bubble_eval(&b, p, &c), &c, &rule)?;
        energies.push((lam, e, (e - c.c_e).abs() / c.c_e));
    }
    if !fitted_c_q.is_finite() {
        return Err(Error::NonFinite("fitted c_Q"));
    }
    Ok(BubbleReport {
        fitted_c_q,
        formula_c_q: c.c_q,
        points,
        max_residual,
        energies,
    })
}
