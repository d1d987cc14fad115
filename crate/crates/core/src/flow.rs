//! H^k-preconditioned descent u ← u − τ·A_{2k}^{−1}dE(u) with Armijo
//! backtracking, used below the bubble level where the only critical point
//! in the potential well is 0.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::energy::SphereEnergy;
use crate::error::{Error, Result};
use crate::spectral::{apply_a2k_inverse, norm_h_minus_k, norm_hk, pairing, SpectralFunction};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowOptions {
    pub max_iter: usize,
    /// stop when ‖u‖_{H^k} falls below this
    pub norm_tol: f64,
    /// stop when ‖dE(u)‖_{H^{−k}} falls below this (a critical point ≠ 0)
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub min_step: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            max_iter: 500,
            norm_tol: 1e-4,
            grad_tol: 1e-12,
            armijo_c: 1e-4,
            min_step: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowReport {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub final_gradient: f64,
    pub iterations: usize,
    /// reached ‖u‖_{H^k} < norm_tol
    pub converged_to_zero: bool,
    /// stopped on a vanishing gradient
    pub stationary: bool,
    pub energies: Vec<f64>,
}

pub fn preconditioned_flow(
    u0: &SpectralFunction,
    ctx: &SphereEnergy,
    opts: &FlowOptions,
) -> Result<(SpectralFunction, FlowReport)> {
    let k = ctx.consts.k;
    let mut u = u0.clone();
    let mut e = ctx.energy(&u);
    let mut report = FlowReport {
        initial_energy: e,
        final_energy: e,
        initial_norm: norm_hk(&u, k)?,
        final_norm: 0.0,
        final_gradient: 0.0,
        iterations: 0,
        converged_to_zero: false,
        stationary: false,
        energies: vec![e],
    };
    for it in 0..=opts.max_iter {
        let nrm = norm_hk(&u, k)?;
        let g = ctx.gradient(&u);
        let gn = norm_h_minus_k(&g, k)?;
        report.final_norm = nrm;
        report.final_gradient = gn;
        report.iterations = it;
        if nrm < opts.norm_tol {
            report.converged_to_zero = true;
            break;
        }
        if gn < opts.grad_tol {
            report.stationary = true;
            break;
        }
        if it == opts.max_iter {
            break;
        }
        let d = apply_a2k_inverse(&g, k)?.scaled(-1.0);
        let slope = pairing(&g, &d);
        let mut tau = 1.0;
        loop {
            let trial = u.axpy(tau, &d);
            let et = ctx.energy(&trial);
            if et.is_finite() && et <= e + opts.armijo_c * tau * slope {
                u = trial;
                e = et;
                break;
            }
            tau *= 0.5;
            if tau < opts.min_step {
                return Err(Error::LineSearch(format!(
                    "no Armijo step at iteration {it}"
                )));
            }
        }
        report.energies.push(e);
    }
    report.final_energy = e;
    Ok((u, report))
}

/// Random band-limited u scaled along its ray so that E = target while
/// staying inside the potential well (before the Nehari point).
pub fn well_seed(ctx: &SphereEnergy, rng: &mut impl Rng, target: f64) -> Result<SpectralFunction> {
    let basis = ctx.basis().clone();
    let coeffs: Vec<f64> = basis
        .elements
        .iter()
        .map(|e| {
            let z: f64 = StandardNormal.sample(rng);
            z / (1.0 + (e.block.j + e.block.l) as f64).powi(2)
        })
        .collect();
    let u = SpectralFunction::from_coeffs(basis, coeffs)?;
    scale_to_energy(ctx, &u, target)
}

/// t·u with E(t·u) = target and t below the Nehari scaling of u.
pub fn scale_to_energy(
    ctx: &SphereEnergy,
    u: &SpectralFunction,
    target: f64,
) -> Result<SpectralFunction> {
    let ps = ctx.consts.p_star;
    let q = ctx.quadratic(u)?;
    let l = ctx.lp_mass(u);
    if q == 0.0 || l == 0.0 {
        return Err(Error::ZeroInput);
    }
    let tn = (q / l).powf(1.0 / (ps - 2.0));
    let e = |t: f64| 0.5 * t * t * q - t.powf(ps) * l / ps;
    if !(target > 0.0) || target >= e(tn) {
        return Err(Error::InvalidParameter(format!(
            "target energy {target} outside (0, {}) along this ray",
            e(tn)
        )));
    }
    let (mut lo, mut hi) = (0.0, tn);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if e(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(u.scaled(0.5 * (lo + hi)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubcriticalReport {
    pub runs: Vec<FlowReport>,
    pub threshold: f64,
    pub all_converged: bool,
}

/// Runs the flow from every seed; each must start below C_E.
pub fn subcritical_threshold_check(
    seeds: &[SpectralFunction],
    ctx: &SphereEnergy,
    opts: &FlowOptions,
) -> Result<SubcriticalReport> {
    let threshold = ctx.consts.c_e;
    let mut runs = Vec::with_capacity(seeds.len());
    for s in seeds {
        let e = ctx.energy(s);
        if e >= threshold {
            return Err(Error::InvalidParameter(format!(
                "seed energy {e} is not below C_E = {threshold}"
            )));
        }
        runs.push(preconditioned_flow(s, ctx, opts)?.1);
    }
    Ok(SubcriticalReport {
        all_converged: runs.iter().all(|r| r.converged_to_zero),
        runs,
        threshold,
    })
}
