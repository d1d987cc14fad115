//! Group-invariant subspaces X_G of the band-limited space and a
//! Nehari-constrained descent for critical points inside them.
//!
//! Hopf invariance (ζ ↦ e^{iθ}ζ acts on H_{j,l} by e^{i(j−l)θ}) and
//! antipodal oddness (−1 acts by (−1)^{j+l}) are coefficient masks.  The two
//! together leave nothing (j = l forces j + l even), so the sign-changing
//! search uses oddness under the coordinate swap ζ_1 ↔ ζ_{N+1} instead; the
//! swap preserves every block and acts on it by a small orthogonal matrix.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::cayley::sphere_dist;
use crate::energy::SphereEnergy;
use crate::error::{Error, Result};
use crate::spectral::{
    apply_a2k_inverse, norm_h_minus_k, norm_hk, pairing, HarmonicBasis, SpectralFunction, Transform,
};
use crate::SPoint;

type C64 = Complex<f64>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    /// u(e^{iθ}ζ) = u(ζ)
    pub hopf_invariant: bool,
    /// u(−ζ) = −u(ζ)
    pub antipodal_odd: bool,
    /// u(ζ_{N+1}, …, ζ_1) = −u(ζ_1, …, ζ_{N+1})
    pub swap_odd: bool,
}

impl SubgroupSpec {
    pub fn hopf() -> Self {
        SubgroupSpec {
            hopf_invariant: true,
            ..Default::default()
        }
    }

    pub fn hopf_swap_odd() -> Self {
        SubgroupSpec {
            hopf_invariant: true,
            swap_odd: true,
            ..Default::default()
        }
    }

    pub fn is_trivial(&self) -> bool {
        !(self.hopf_invariant || self.antipodal_odd || self.swap_odd)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.hopf_invariant {
            parts.push("hopf");
        }
        if self.antipodal_odd {
            parts.push("antipodal-odd");
        }
        if self.swap_odd {
            parts.push("swap-odd");
        }
        if parts.is_empty() {
            "trivial".into()
        } else {
            parts.join("+")
        }
    }

    /// Per-element keep flags of the diagonal part of the mask.
    pub fn diagonal_mask(&self, basis: &HarmonicBasis) -> Vec<bool> {
        basis
            .elements
            .iter()
            .map(|e| {
                let (j, l) = (e.block.j, e.block.l);
                (!self.hopf_invariant || j == l) && (!self.antipodal_odd || (j + l) % 2 == 1)
            })
            .collect()
    }
}

/// Swap of the first and last coordinates.
pub fn swap_point(p: &SPoint) -> SPoint {
    let mut zeta = p.zeta.clone();
    let d = zeta.len();
    zeta.swap(0, d - 1);
    SPoint { zeta }
}

/// Block-diagonal matrix of u ↦ u∘swap on the coefficients.
#[derive(Clone, Debug)]
struct SwapAction {
    /// (first index, block matrix S with (S c)_a = Σ_b S_ab c_b)
    blocks: Vec<(usize, DMatrix<f64>)>,
}

impl SwapAction {
    fn new(transform: &Transform) -> Self {
        let basis = &transform.basis;
        let quad = &transform.quad;
        let swapped: Vec<SPoint> = quad.nodes.iter().map(swap_point).collect();
        let blocks = basis
            .blocks
            .values()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&&(a, b)| {
                let d = b - a;
                let n = quad.len();
                let mut v = DMatrix::<f64>::zeros(d, n);
                let mut w = DMatrix::<f64>::zeros(d, n);
                for (i, (p, q)) in quad.nodes.iter().zip(&swapped).enumerate() {
                    for (r, e) in basis.elements[a..b].iter().enumerate() {
                        v[(r, i)] = e.value(&p.zeta) * quad.weights[i];
                        w[(r, i)] = e.value(&q.zeta);
                    }
                }
                // S_ab = ∫ y_a (y_b∘σ)
                (a, &v * w.transpose())
            })
            .collect();
        SwapAction { blocks }
    }

    fn apply(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; c.len()];
        for (a, s) in &self.blocks {
            let d = s.nrows();
            for r in 0..d {
                out[a + r] = (0..d).map(|q| s[(r, q)] * c[a + q]).sum();
            }
        }
        out
    }
}

/// Orthogonal projection onto X_G for a fixed basis.
#[derive(Clone, Debug)]
pub struct SymmetricSpace {
    pub group: SubgroupSpec,
    pub basis: Arc<HarmonicBasis>,
    mask: Vec<bool>,
    swap: Option<SwapAction>,
}

impl SymmetricSpace {
    /// Fails with `EmptyMask` when no basis element survives the group.
    pub fn new(group: SubgroupSpec, transform: &Transform) -> Result<Self> {
        let basis = transform.basis.clone();
        let mask = group.diagonal_mask(&basis);
        let swap = group.swap_odd.then(|| SwapAction::new(transform));
        let space = SymmetricSpace {
            group,
            basis,
            mask,
            swap,
        };
        if space.dimension() == 0 {
            return Err(Error::EmptyMask {
                jmax: space.basis.jmax,
            });
        }
        Ok(space)
    }

    /// dim X_G at this truncation (trace of the projector).
    pub fn dimension(&self) -> usize {
        match &self.swap {
            None => self.mask.iter().filter(|k| **k).count(),
            Some(s) => {
                let mut tr = 0.0;
                for (a, m) in &s.blocks {
                    for r in 0..m.nrows() {
                        if self.mask[a + r] {
                            tr += 0.5 * (1.0 - m[(r, r)]);
                        }
                    }
                }
                tr.round() as usize
            }
        }
    }

    pub fn project(&self, u: &SpectralFunction) -> SpectralFunction {
        let mut c: Vec<f64> = u
            .coeffs
            .iter()
            .zip(&self.mask)
            .map(|(x, k)| if *k { *x } else { 0.0 })
            .collect();
        if let Some(s) = &self.swap {
            let sc = s.apply(&c);
            for (x, y) in c.iter_mut().zip(sc) {
                *x = 0.5 * (*x - y);
            }
        }
        SpectralFunction {
            basis: u.basis.clone(),
            coeffs: c,
        }
    }

    /// Random element of X_G with coefficients decaying in the degree.
    pub fn random(&self, rng: &mut impl Rng) -> SpectralFunction {
        let coeffs = self
            .basis
            .elements
            .iter()
            .map(|e| {
                let z: f64 = StandardNormal.sample(rng);
                z / (1.0 + (e.block.j + e.block.l) as f64).powi(2)
            })
            .collect();
        self.project(&SpectralFunction {
            basis: self.basis.clone(),
            coeffs,
        })
    }
}

/// Coefficient-mask projection for the diagonal groups (no swap).
pub fn project_xg(u: &SpectralFunction, group: &SubgroupSpec) -> Result<SpectralFunction> {
    if group.swap_odd {
        return Err(Error::InvalidParameter(
            "swap oddness needs a SymmetricSpace (quadrature-built action)".into(),
        ));
    }
    let mask = group.diagonal_mask(&u.basis);
    if !mask.iter().any(|k| *k) {
        return Err(Error::EmptyMask { jmax: u.basis.jmax });
    }
    let coeffs = u
        .coeffs
        .iter()
        .zip(&mask)
        .map(|(x, k)| if *k { *x } else { 0.0 })
        .collect();
    Ok(SpectralFunction {
        basis: u.basis.clone(),
        coeffs,
    })
}

/// A unitary matrix of C^{N+1}, stored by columns.
#[derive(Clone, Debug)]
pub struct Unitary {
    pub cols: Vec<Vec<C64>>,
}

impl Unitary {
    pub fn new(cols: Vec<Vec<C64>>) -> Result<Self> {
        let d = cols.len();
        if cols.iter().any(|c| c.len() != d) {
            return Err(Error::InvalidParameter("unitary must be square".into()));
        }
        let mut defect: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let ip: C64 = cols[a]
                    .iter()
                    .zip(&cols[b])
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                defect = defect.max((ip - target).norm());
            }
        }
        if defect > 1e-10 {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Unitary { cols })
    }

    pub fn identity(d: usize) -> Self {
        let cols = (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| C64::new(if a == b { 1.0 } else { 0.0 }, 0.0))
                    .collect()
            })
            .collect();
        Unitary { cols }
    }

    pub fn phase(d: usize, theta: f64) -> Self {
        let mut u = Self::identity(d);
        for (a, c) in u.cols.iter_mut().enumerate() {
            c[a] = C64::from_polar(1.0, theta);
        }
        u
    }

    /// Haar-distributed: QR of a complex Gaussian matrix with the phases of R's diagonal removed.
    pub fn random(rng: &mut impl Rng, d: usize) -> Self {
        let m = DMatrix::<C64>::from_fn(d, d, |_, _| {
            C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        });
        let qr = m.qr();
        let (q, r) = (qr.q(), qr.r());
        let cols = (0..d)
            .map(|j| {
                let ph = r[(j, j)] / r[(j, j)].norm();
                (0..d).map(|i| q[(i, j)] * ph).collect()
            })
            .collect();
        Unitary { cols }
    }

    pub fn is_identity(&self) -> bool {
        self.cols.iter().enumerate().all(|(a, c)| {
            c.iter()
                .enumerate()
                .all(|(b, x)| *x == C64::new(if a == b { 1.0 } else { 0.0 }, 0.0))
        })
    }

    pub fn apply(&self, p: &SPoint) -> SPoint {
        SPoint {
            zeta: crate::sphere::apply_unitary(&self.cols, &p.zeta),
        }
    }
}

/// |E(u) − E(u∘g)| with u∘g sampled on the quadrature nodes and re-analyzed.
pub fn invariance_check(u: &SpectralFunction, g: &Unitary, ctx: &SphereEnergy) -> Result<f64> {
    let d = u.basis.n + 1;
    if g.cols.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: g.cols.len(),
        });
    }
    Unitary::new(g.cols.clone())?;
    if g.is_identity() {
        return Ok(0.0);
    }
    let vals = ctx.transform.node_values(|p| u.eval(&g.apply(p)));
    let ug = ctx.transform.analyze_values(&vals);
    Ok((ctx.energy(u) - ctx.energy(&ug)).abs())
}

/// Actions whose orbits are scanned for accumulation points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitAction {
    Trivial,
    /// the full S¹ phase action
    Hopf,
    /// phases 2πm/order only
    PhaseRotations(usize),
}

impl OrbitAction {
    fn element(&self, i: usize, samples: usize) -> f64 {
        match self {
            OrbitAction::Trivial => 0.0,
            OrbitAction::Hopf => 2.0 * std::f64::consts::PI * i as f64 / samples as f64,
            OrbitAction::PhaseRotations(m) => {
                2.0 * std::f64::consts::PI * (i % m.max(&1)) as f64 / *m.max(&1) as f64
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitScan {
    /// (samples, distinct orbit points, minimum gap between distinct points)
    pub levels: Vec<(usize, usize, f64)>,
    pub accumulates: bool,
}

/// Minimum-gap scan over orbit samples at doubling sample counts: an
/// accumulation point shows up as unboundedly many distinct points whose
/// minimum gap keeps shrinking.
pub fn orbit_scan(zeta: &SPoint, action: OrbitAction) -> OrbitScan {
    let mut levels = Vec::new();
    for samples in [64usize, 256, 1024, 4096] {
        let mut pts: Vec<SPoint> = Vec::new();
        for i in 0..samples {
            let ph = C64::from_polar(1.0, action.element(i, samples));
            let p = SPoint {
                zeta: zeta.zeta.iter().map(|z| z * ph).collect(),
            };
            if pts.iter().all(|q| sphere_dist(q, &p) > 1e-6) {
                pts.push(p);
            }
        }
        let mut gap = f64::INFINITY;
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                gap = gap.min(sphere_dist(&pts[a], &pts[b]));
            }
        }
        levels.push((samples, pts.len(), gap));
    }
    let accumulates =
        levels.iter().all(|(s, n, _)| n == s) && levels.windows(2).all(|w| w[1].2 < w[0].2);
    OrbitScan {
        levels,
        accumulates,
    }
}

pub fn orbit_accumulation_check(zeta: &SPoint, action: OrbitAction) -> bool {
    orbit_scan(zeta, action).accumulates
}

/// t·u on the Nehari set: ∫u A_{2k}u = ∫|u|^{p*}.
pub fn nehari_rescale(u: &SpectralFunction, ctx: &SphereEnergy) -> Result<SpectralFunction> {
    let q = ctx.quadratic(u)?;
    let l = ctx.lp_mass(u);
    if q == 0.0 || l == 0.0 {
        return Err(Error::ZeroInput);
    }
    let t = (q / l).powf(1.0 / (ctx.consts.p_star - 2.0));
    Ok(u.scaled(t))
}

/// Residual tolerance for converged candidates at band limit `jmax`.
pub fn residual_tolerance(jmax: usize) -> f64 {
    if jmax <= 8 {
        1e-5
    } else {
        3e-5
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub armijo_c: f64,
    pub min_step: f64,
}

impl SearchOptions {
    pub fn for_jmax(jmax: usize) -> Self {
        SearchOptions {
            max_iter: 2000,
            tol: residual_tolerance(jmax),
            armijo_c: 1e-4,
            min_step: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPointReport {
    #[serde(skip)]
    pub candidate: Option<SpectralFunction>,
    pub energy: f64,
    /// ‖P dE(u)‖_{H^{−k}} inside X_G
    pub residual: f64,
    /// ‖dE(u)‖_{H^{−k}} in the whole band-limited space
    pub full_residual: f64,
    pub distance_to_bubble_level: f64,
    pub lp_mass: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl CriticalPointReport {
    /// Symmetric criticality: the unrestricted gradient is no larger than twice the restricted one.
    pub fn symmetric_criticality_holds(&self) -> bool {
        self.full_residual <= 2.0 * self.residual.max(f64::MIN_POSITIVE)
    }
}

fn report(
    u: SpectralFunction,
    space: &SymmetricSpace,
    ctx: &SphereEnergy,
    iterations: usize,
    tol: f64,
) -> Result<CriticalPointReport> {
    let k = ctx.consts.k;
    let g = ctx.gradient(&u);
    let residual = norm_h_minus_k(&space.project(&g), k)?;
    let energy = ctx.energy(&u);
    Ok(CriticalPointReport {
        energy,
        residual,
        full_residual: norm_h_minus_k(&g, k)?,
        distance_to_bubble_level: (energy - ctx.consts.c_e).abs(),
        lp_mass: ctx.lp_mass(&u),
        iterations,
        converged: residual < tol,
        candidate: Some(u),
    })
}

/// Nehari-constrained H^k-preconditioned descent inside X_G from one seed.
pub fn nehari_descent(
    seed: &SpectralFunction,
    space: &SymmetricSpace,
    ctx: &SphereEnergy,
    opts: &SearchOptions,
) -> Result<CriticalPointReport> {
    let k = ctx.consts.k;
    let mut u = nehari_rescale(&space.project(seed), ctx)?;
    let mut e = ctx.energy(&u);
    let mut tau: f64 = 1.0;
    for it in 0..opts.max_iter {
        let g = space.project(&ctx.gradient(&u));
        let res = norm_h_minus_k(&g, k)?;
        if res < opts.tol {
            return report(u, space, ctx, it, opts.tol);
        }
        let d = apply_a2k_inverse(&g, k)?.scaled(-1.0);
        let slope = pairing(&g, &d);
        tau = (2.0 * tau).min(1.0);
        loop {
            let trial = nehari_rescale(&space.project(&u.axpy(tau, &d)), ctx)?;
            let et = ctx.energy(&trial);
            if et.is_finite() && et <= e + opts.armijo_c * tau * slope {
                u = trial;
                e = et;
                break;
            }
            tau *= 0.5;
            if tau < opts.min_step {
                return Err(Error::LineSearch(format!(
                    "no descent step at iteration {it} (residual {res:e})"
                )));
            }
        }
    }
    report(u, space, ctx, opts.max_iter, opts.tol)
}

/// Runs `nehari_descent` from every seed (concurrently); failures are
/// reported per seed.
pub fn minimax_search(
    group: SubgroupSpec,
    seeds: &[SpectralFunction],
    ctx: &SphereEnergy,
    opts: &SearchOptions,
) -> Result<Vec<Result<CriticalPointReport>>> {
    if group.is_trivial() {
        return Err(Error::InvalidParameter(
            "the trivial group gives no symmetric search".into(),
        ));
    }
    let space = SymmetricSpace::new(group, &ctx.transform)?;
    Ok(seeds
        .par_iter()
        .map(|s| nehari_descent(s, &space, ctx, opts))
        .collect())
}

/// ∫|u|^{p*} of the best converged candidate at each band limit (the
/// trend that stands in for the unbounded sequence of critical points).
pub fn mass_trend(
    group: SubgroupSpec,
    jmax_list: &[usize],
    n_seeds: usize,
    consts: &crate::energy::YamabeConstants,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, Option<f64>)>> {
    let mut out = Vec::new();
    for &jmax in jmax_list {
        let basis = Arc::new(HarmonicBasis::build(consts.n, jmax, jmax)?);
        let ctx = SphereEnergy::new(consts.clone(), basis)?;
        let space = SymmetricSpace::new(group, &ctx.transform)?;
        let seeds: Vec<_> = (0..n_seeds).map(|_| space.random(rng)).collect();
        let reps = minimax_search(group, &seeds, &ctx, &SearchOptions::for_jmax(jmax))?;
        let best = reps
            .into_iter()
            .filter_map(|r| r.ok())
            .filter(|r| r.converged)
            .map(|r| r.lp_mass)
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        out.push((jmax, best));
    }
    Ok(out)
}

/// The H^k norm of a candidate, for reporting.
pub fn candidate_norm(u: &SpectralFunction, ctx: &SphereEnergy) -> Result<f64> {
    norm_hk(u, ctx.consts.k)
}
