//! Critical exponent, sharp constants, bubbles and the energies E (sphere)
//! and E_H (Heisenberg group).

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::cayley::{conformal_pushforward, sphere_total_mass};
use crate::error::{Error, Result};
use crate::heisenberg::{
    dilate_unchecked, group_inv, group_mul, haar_integral_whole_space, horizontal_gradient,
    sub_laplacian, HaarMeasure, ScalarFieldH,
};
use crate::special::gamma;
use crate::spectral::{lambda_jk, norm_hk, pairing, HarmonicBasis, SpectralFunction, Transform};
use crate::{Chart, Point};

fn check_k(n: usize, k: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let q = 2.0 * n as f64 + 2.0;
    if !(k > 0.0 && 2.0 * k < q) || !k.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need 0 < 2k < Q = {q}, got k = {k}"
        )));
    }
    Ok(q)
}

/// p* = 2Q/(Q−2k).
pub fn p_star(n: usize, k: f64) -> Result<f64> {
    let q = check_k(n, k)?;
    Ok(2.0 * q / (q - 2.0 * k))
}

/// C_S(k,N) from the Gamma-function expression with ω_{2N+1} = 2π^{N+1}/N!.
pub fn sobolev_constant(n: usize, k: f64) -> Result<f64> {
    let q = check_k(n, k)?;
    let nf = n as f64;
    let g = gamma((nf + 1.0 - k) / 2.0) / gamma((nf + 1.0 + k) / 2.0);
    let omega = 2.0 * std::f64::consts::PI.powi(n as i32 + 1) / crate::special::factorial(n);
    let base = omega * 2f64.powi(2 * n as i32 + 1) * crate::special::factorial(n);
    Ok(g * g * base.powf(-2.0 * k / q))
}

/// u0 = λ_0(k)^{(Q−2k)/(2k)}: λ_0² u0 = u0^{p*−1}.
pub fn constant_solution(n: usize, k: f64) -> Result<f64> {
    let q = check_k(n, k)?;
    let l0 = lambda_jk(0, k, q)?;
    Ok(l0.powf((q - 2.0 * k) / (2.0 * k)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YamabeConstants {
    pub n: usize,
    pub k: f64,
    pub q: f64,
    pub p_star: f64,
    pub c_s: f64,
    pub c_e: f64,
    pub u0: f64,
    pub c_q: f64,
    pub lambda0: f64,
    pub total_mass: f64,
}

impl YamabeConstants {
    pub fn new(n: usize, k: f64) -> Result<Self> {
        let q = check_k(n, k)?;
        let c_s = sobolev_constant(n, k)?;
        let u0 = constant_solution(n, k)?;
        Ok(YamabeConstants {
            n,
            k,
            q,
            p_star: p_star(n, k)?,
            c_s,
            c_e: k / q * c_s.powf(-q / (2.0 * k)),
            u0,
            c_q: 2f64.powf((q - 2.0 * k) / 2.0) * u0,
            lambda0: lambda_jk(0, k, q)?,
            total_mass: sphere_total_mass(n),
        })
    }

    /// ∫|ω|^{p*} dv_H = Q/k · C_E.
    pub fn bubble_mass(&self) -> f64 {
        self.q / self.k * self.c_e
    }
}

/// (λ, ξ) of ω_{λ,ξ} = λ^{(2k−Q)/2} ω∘δ_{1/λ}∘τ_{ξ⁻¹}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub lambda: f64,
    pub xi: Point,
}

impl BubbleParams {
    pub fn new(lambda: f64, xi: Point) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::NonPositiveScale(lambda));
        }
        Ok(BubbleParams { lambda, xi })
    }

    pub fn standard(n: usize) -> Self {
        BubbleParams {
            lambda: 1.0,
            xi: Point::origin(n),
        }
    }
}

/// ω(z,t) = cQ/((1+|z|²)²+t²)^{(Q−2k)/4}.
pub fn bubble_profile(p: &Point, c: &YamabeConstants) -> f64 {
    let r = 1.0 + p.z_norm_sqr();
    c.c_q * (r * r + p.t * p.t).powf(-(c.q - 2.0 * c.k) / 4.0)
}

pub fn bubble_eval(params: &BubbleParams, p: &Point, c: &YamabeConstants) -> f64 {
    let w = dilate_unchecked(1.0 / params.lambda, &group_mul(&group_inv(&params.xi), p));
    params.lambda.powf((2.0 * c.k - c.q) / 2.0) * bubble_profile(&w, c)
}

/// k = 1 only: |−Δ_b ω − ω^{p*−1}| / ω^{p*−1} at p.
pub fn bubble_pde_residual(
    params: &BubbleParams,
    p: &Point,
    c: &YamabeConstants,
    h: f64,
) -> Result<f64> {
    if (c.k - 1.0).abs() > 1e-15 {
        return Err(Error::InvalidParameter(
            "the pointwise bubble residual needs k = 1".into(),
        ));
    }
    let f = ScalarFieldH::with_step(|q: &Point| bubble_eval(params, q, c), h);
    let w = f.eval(p);
    let rhs = w.powf(c.p_star - 1.0);
    Ok((-sub_laplacian(&f, p) - rhs).abs() / rhs)
}

/// Whole-space tensor rule for E_H: tan-mapped Gauss with `n_per_axis`
/// points per real coordinate around `center` at length `scale`.
#[derive(Clone, Debug)]
pub struct WholeSpaceRule {
    pub n_per_axis: usize,
    pub center: Point,
    pub scale: f64,
    pub measure: HaarMeasure,
    /// central-difference step for the horizontal gradient
    pub h: f64,
}

impl WholeSpaceRule {
    pub fn standard(n: usize) -> Self {
        WholeSpaceRule {
            n_per_axis: 64,
            center: Point::origin(n),
            scale: 1.0,
            measure: HaarMeasure::calibrated(n),
            h: 1e-4,
        }
    }
}

/// E_H(U) for k = 1 with ∫U L_2U = ¼ Σ∫(X_jU)² + (Y_jU)².
pub fn energy_heis(
    u: impl Fn(&Point) -> f64 + Sync,
    c: &YamabeConstants,
    rule: &WholeSpaceRule,
) -> Result<f64> {
    if (c.k - 1.0).abs() > 1e-15 {
        return Err(Error::InvalidParameter(
            "direct E_H needs k = 1; use energy_heis_spectral for fractional k".into(),
        ));
    }
    let ps = c.p_star;
    let field = ScalarFieldH::with_step(&u, rule.h);
    let integrand = |p: &Point| {
        let g = horizontal_gradient(&field, p);
        let quad = 0.25 * g.iter().map(|x| x * x).sum::<f64>();
        0.5 * quad - u(p).abs().powf(ps) / ps
    };
    let e = haar_integral_whole_space(
        integrand,
        c.n,
        rule.n_per_axis,
        &rule.center,
        rule.scale,
        rule.measure,
    );
    if !e.is_finite() {
        return Err(Error::NonFinite("E_H"));
    }
    Ok(e)
}

/// E_H(U) for any k, transporting U to the sphere through the Cayley chart
/// and evaluating E spectrally; returns the energy and the tail diagnostic.
pub fn energy_heis_spectral(u: impl Fn(&Point) -> f64 + Sync, ctx: &SphereEnergy) -> (f64, f64) {
    let chart = Chart::identity(ctx.consts.n);
    let on_sphere = conformal_pushforward(&u, &chart, ctx.consts.k);
    let vals: Vec<f64> = ctx.transform.quad.nodes.iter().map(&on_sphere).collect();
    let f = ctx.transform.analyze_values(&vals);
    (ctx.energy(&f), f.tail_energy())
}

/// Energy, gradient and Sobolev quotient on the sphere at a fixed truncation.
pub struct SphereEnergy {
    pub consts: YamabeConstants,
    pub transform: Transform,
}

impl SphereEnergy {
    /// Quadrature exact to 4× the band limit (covers u^{p*−1}·y for p* = 4).
    pub fn new(consts: YamabeConstants, basis: Arc<HarmonicBasis>) -> Result<Self> {
        if basis.n != consts.n {
            return Err(Error::Dimension {
                expected: consts.n,
                got: basis.n,
            });
        }
        let transform = Transform::with_oversampling(basis, 4)?;
        Ok(SphereEnergy { consts, transform })
    }

    pub fn with_transform(consts: YamabeConstants, transform: Transform) -> Self {
        SphereEnergy { consts, transform }
    }

    pub fn basis(&self) -> &Arc<HarmonicBasis> {
        &self.transform.basis
    }

    /// ∫|u|^{p*} dv_S.
    pub fn lp_mass(&self, u: &SpectralFunction) -> f64 {
        let v = self.transform.synthesize_values(u);
        let ps = self.consts.p_star;
        let w: Vec<f64> = v.iter().map(|x| x.abs().powf(ps)).collect();
        self.transform.quad.integrate_values(&w)
    }

    /// ∫ u A_{2k} u dv_S.
    pub fn quadratic(&self, u: &SpectralFunction) -> Result<f64> {
        Ok(norm_hk(u, self.consts.k)?.powi(2))
    }

    /// E(u) = ½ ∫ u A_{2k}u − 1/p* ∫|u|^{p*}.
    pub fn energy(&self, u: &SpectralFunction) -> f64 {
        let q = self.quadratic(u).expect("k validated by YamabeConstants");
        0.5 * q - self.lp_mass(u) / self.consts.p_star
    }

    /// Coefficients of |u|^{p*−2}u.
    pub fn nonlinearity(&self, u: &SpectralFunction) -> SpectralFunction {
        let v = self.transform.synthesize_values(u);
        let e = self.consts.p_star - 2.0;
        let w: Vec<f64> = v.iter().map(|x| x.abs().powf(e) * x).collect();
        self.transform.analyze_values(&w)
    }

    /// dE(u) = A_{2k}u − |u|^{p*−2}u (band-limited projection).
    pub fn gradient(&self, u: &SpectralFunction) -> SpectralFunction {
        let a = crate::spectral::apply_a2k(u, self.consts.k).expect("k validated");
        a.axpy(-1.0, &self.nonlinearity(u))
    }

    /// ‖u‖_{p*}² / ∫u A_{2k} u.
    pub fn sobolev_quotient(&self, u: &SpectralFunction) -> Result<f64> {
        let q = self.quadratic(u)?;
        if q == 0.0 {
            return Err(Error::ZeroInput);
        }
        Ok(self.lp_mass(u).powf(2.0 / self.consts.p_star) / q)
    }

    /// The constant solution as a spectral function.
    pub fn constant_solution(&self) -> SpectralFunction {
        SpectralFunction::constant(self.basis().clone(), self.consts.u0)
    }

    /// 2E(u) − ⟨dE(u), u⟩ − (1 − 2/p*)∫|u|^{p*}; zero up to quadrature.
    pub fn nehari_identity_defect(&self, u: &SpectralFunction) -> f64 {
        let ps = self.consts.p_star;
        2.0 * self.energy(u) - pairing(&self.gradient(u), u) - (1.0 - 2.0 / ps) * self.lp_mass(u)
    }
}
