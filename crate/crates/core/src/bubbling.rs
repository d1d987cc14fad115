//! Synthesized Palais–Smale sequences u_n = u_∞ + Σ_l v_n^l and their
//! bubbling diagnostics: energies, p*-masses, the H^{−k} size of dE(u_n).
//!
//! Each v_n^l = β^l · Λ_{σ_n}^a · (U^l∘σ_n) with σ_n = (C∘τ_w∘δ_{R_n})⁻¹.
//! Two evaluation routes:
//! * resolved (k = 1): pointwise values of u_n and A_2u_n integrated with
//!   rules graded around every center; A_2 of the core is known in closed
//!   form, and only the cutoff annulus needs finite differences;
//! * spectral (any k): band-limited projection, with the tail fraction
//!   reported since a bubble at scale R needs degree ~ 1/R.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cayley::{cayley_inv, sphere_dist, transport_exponents};
use crate::energy::{bubble_eval, BubbleParams, SphereEnergy, YamabeConstants};
use crate::error::{Error, Result};
use crate::spectral::{apply_a2_on_sphere, apply_a2k, HarmonicBasis, SpectralFunction, Transform};
use crate::sphere::{
    apply_unitary, smooth_step_down, unitary_with_last_column, GradedOptions, SphereQuadrature,
};
use crate::zonal::{frame_ladder, DualNorm, DualNormReport, ZonalRuleOptions};
use crate::{Chart, Point, SPoint};
use num_complex::Complex;
use std::sync::Arc;

/// R_n ladder used for every limit statement.
pub const DEFAULT_LADDER: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

/// Step of the difference stencil for A_2 on the cutoff annulus.
const ANNULUS_STEP: f64 = 1e-3;

/// 6x⁵ − 15x⁴ + 10x³
pub fn quintic_smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

/// β ≡ 1 on B_{r_inner}(center), 0 outside B_{r_outer}(center).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub center: SPoint,
    pub r_inner: f64,
    pub r_outer: f64,
}

pub fn make_cutoff(center: SPoint) -> CutoffSpec {
    CutoffSpec {
        center,
        r_inner: 0.25,
        r_outer: 1.0,
    }
}

impl CutoffSpec {
    pub fn value(&self, s: &SPoint) -> f64 {
        let d2 = sphere_dist(s, &self.center).powi(2);
        let x = (d2 - self.r_inner.powi(2)) / (self.r_outer.powi(2) - self.r_inner.powi(2));
        1.0 - quintic_smoothstep(x)
    }
}

/// Where a point sits relative to a cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Zone {
    Core,
    Annulus,
    Outside,
}

impl CutoffSpec {
    fn zone(&self, s: &SPoint) -> Zone {
        let d = sphere_dist(s, &self.center);
        if d < self.r_inner {
            Zone::Core
        } else if d >= self.r_outer {
            Zone::Outside
        } else {
            Zone::Annulus
        }
    }
}

/// How the Heisenberg picture is attached at the center ζ*.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartFrame {
    /// ρ_n = g∘C∘δ_{R_n} with g ∈ U(N+1), g·(0,…,0,1) = ζ*: the bubble is
    /// exactly zonal about ζ*
    Rotation,
    /// ρ_n = C∘τ_w∘δ_{R_n} with w = C⁻¹(ζ*): concentrates at ζ* as R_n → 0
    Translation,
}

/// One bubble along the ladder: limit center ζ*, scales R_n, profile
/// amplitude·ω_{λ,ξ} and cutoff.  The center sequence is constant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BubbleChart {
    pub center: SPoint,
    pub ladder: Vec<f64>,
    pub profile: BubbleParams,
    /// 1 for a genuine bubble; anything else is a non-solution profile
    pub amplitude: f64,
    pub cutoff: CutoffSpec,
    pub frame: ChartFrame,
}

/// Chart of one rung: optional rotation after a Heisenberg chart.
#[derive(Clone, Debug)]
pub struct RungChart {
    pub chart: Chart,
    /// columns of g (None for the translation frame)
    pub rotation: Option<Vec<Vec<Complex<f64>>>>,
}

impl RungChart {
    pub fn inverse_map(&self, s: &SPoint) -> Result<Point> {
        match &self.rotation {
            None => self.chart.inverse_map(s),
            Some(g) => {
                // g⁻¹ = g^H
                let z: Vec<Complex<f64>> = g
                    .iter()
                    .map(|col| col.iter().zip(&s.zeta).map(|(a, b)| a.conj() * b).sum())
                    .collect();
                self.chart.inverse_map(&SPoint { zeta: z })
            }
        }
    }

    pub fn jacobian(&self, p: &Point) -> f64 {
        self.chart.jacobian(p)
    }

    pub fn map(&self, p: &Point) -> SPoint {
        let s = self.chart.map(p);
        match &self.rotation {
            None => s,
            Some(g) => SPoint {
                zeta: apply_unitary(g, &s.zeta),
            },
        }
    }
}

impl BubbleChart {
    pub fn new(center: SPoint, ladder: Vec<f64>) -> Result<Self> {
        let n = center.dim();
        Self::with_profile(center, ladder, BubbleParams::standard(n), 1.0)
    }

    pub fn with_profile(
        center: SPoint,
        ladder: Vec<f64>,
        profile: BubbleParams,
        amplitude: f64,
    ) -> Result<Self> {
        validate_ladder(&ladder)?;
        if profile.xi.dim() != center.dim() {
            return Err(Error::Dimension {
                expected: center.dim(),
                got: profile.xi.dim(),
            });
        }
        if !amplitude.is_finite() {
            return Err(Error::NonFinite("bubble amplitude"));
        }
        cayley_inv(&center)?;
        let cutoff = make_cutoff(center.clone());
        Ok(BubbleChart {
            center,
            ladder,
            profile,
            amplitude,
            cutoff,
            frame: ChartFrame::Rotation,
        })
    }

    pub fn with_frame(mut self, frame: ChartFrame) -> Self {
        self.frame = frame;
        self
    }

    pub fn w(&self) -> Point {
        cayley_inv(&self.center).expect("checked at construction")
    }

    pub fn chart(&self, n: usize) -> Result<RungChart> {
        let r = *self.ladder.get(n).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "rung {n} outside a ladder of {}",
                self.ladder.len()
            ))
        })?;
        Ok(match self.frame {
            ChartFrame::Translation => RungChart {
                chart: Chart::new(self.w(), r)?,
                rotation: None,
            },
            ChartFrame::Rotation => RungChart {
                chart: Chart::new(Point::origin(self.center.dim()), r)?,
                rotation: Some(unitary_with_last_column(&self.center)?),
            },
        })
    }
}

pub fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidParameter("empty R_n ladder".into()));
    }
    if ladder.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParameter("R_n must be positive".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "R_n must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// u_∞ plus finitely many bubbles with distinct limit centers.
#[derive(Clone, Debug)]
pub struct PSSequenceSpec {
    pub u_infty: SpectralFunction,
    pub bubbles: Vec<BubbleChart>,
    pub consts: YamabeConstants,
}

impl PSSequenceSpec {
    pub fn new(
        u_infty: SpectralFunction,
        bubbles: Vec<BubbleChart>,
        consts: YamabeConstants,
    ) -> Result<Self> {
        if u_infty.basis.n != consts.n {
            return Err(Error::Dimension {
                expected: consts.n,
                got: u_infty.basis.n,
            });
        }
        for (i, b) in bubbles.iter().enumerate() {
            if b.center.dim() != consts.n {
                return Err(Error::Dimension {
                    expected: consts.n,
                    got: b.center.dim(),
                });
            }
            if b.ladder.len() != bubbles[0].ladder.len() {
                return Err(Error::InvalidParameter(
                    "all bubbles need ladders of equal length".into(),
                ));
            }
            for c in &bubbles[..i] {
                if sphere_dist(&b.center, &c.center) < 1e-8 {
                    return Err(Error::InvalidParameter(
                        "bubble limit centers must be distinct".into(),
                    ));
                }
            }
        }
        Ok(PSSequenceSpec {
            u_infty,
            bubbles,
            consts,
        })
    }

    /// u_∞ = u0 (the constant solution) plus standard bubbles of the given
    /// amplitude at `centers`, all on the same ladder.
    pub fn on_constant(
        consts: YamabeConstants,
        centers: &[SPoint],
        ladder: &[f64],
        amplitude: f64,
    ) -> Result<Self> {
        let basis = Arc::new(HarmonicBasis::build(consts.n, 2, 2)?);
        let bubbles = centers
            .iter()
            .map(|z| {
                BubbleChart::with_profile(
                    z.clone(),
                    ladder.to_vec(),
                    BubbleParams::standard(consts.n),
                    amplitude,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            SpectralFunction::constant(basis, consts.u0),
            bubbles,
            consts,
        )
    }

    pub fn len(&self) -> usize {
        self.bubbles.first().map_or(usize::MAX, |b| b.ladder.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn term(&self, n: usize) -> Result<PsTerm<'_>> {
        PsTerm::new(self, n)
    }

    /// Σ ∫|U^l|^{p*} dv_H = Σ |amp|^{p*}·(Q/k)C_E.
    pub fn bubble_masses(&self) -> Vec<f64> {
        let c = &self.consts;
        self.bubbles
            .iter()
            .map(|b| b.amplitude.abs().powf(c.p_star) * c.bubble_mass())
            .collect()
    }
}

/// u_n evaluated pointwise.
pub struct PsTerm<'a> {
    pub spec: &'a PSSequenceSpec,
    pub n: usize,
    charts: Vec<RungChart>,
    a_infty: SpectralFunction,
    a: f64,
    b: f64,
}

/// Pointwise data at one node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NodeValues {
    pub u_infty: f64,
    pub a_u_infty: f64,
    /// Σ_l v_n^l
    pub v: f64,
    /// A_{2k} Σ_l v_n^l
    pub a_v: f64,
}

impl NodeValues {
    pub fn u(&self) -> f64 {
        self.u_infty + self.v
    }

    pub fn a_u(&self) -> f64 {
        self.a_u_infty + self.a_v
    }
}

impl<'a> PsTerm<'a> {
    fn new(spec: &'a PSSequenceSpec, n: usize) -> Result<Self> {
        let charts = spec
            .bubbles
            .iter()
            .map(|b| b.chart(n))
            .collect::<Result<Vec<_>>>()?;
        let (a, b) = transport_exponents(spec.consts.n, spec.consts.k);
        Ok(PsTerm {
            spec,
            n,
            charts,
            a_infty: apply_a2k(&spec.u_infty, spec.consts.k)?,
            a,
            b,
        })
    }

    /// Λ_σ^a·amp·ω(σζ) and Λ_σ^b·amp·ω^{p*−1}(σζ) (no cutoff).
    pub fn core(&self, l: usize, s: &SPoint) -> Result<(f64, f64)> {
        let bub = &self.spec.bubbles[l];
        let chart = &self.charts[l];
        let p = chart.inverse_map(s)?;
        let jac = chart.jacobian(&p);
        let w = bubble_eval(&bub.profile, &p, &self.spec.consts);
        let amp = bub.amplitude;
        Ok((
            amp * jac.powf(-self.a) * w,
            amp * jac.powf(-self.b) * w.powf(self.spec.consts.p_star - 1.0),
        ))
    }

    /// v_n^l(ζ).
    pub fn bubble_value(&self, l: usize, s: &SPoint) -> f64 {
        let beta = self.spec.bubbles[l].cutoff.value(s);
        if beta == 0.0 {
            return 0.0;
        }
        self.core(l, s).map_or(0.0, |c| beta * c.0)
    }

    /// A_2 v_n^l(ζ); k = 1 only.
    pub fn bubble_a_value(&self, l: usize, s: &SPoint) -> Result<f64> {
        if (self.spec.consts.k - 1.0).abs() > 1e-15 {
            return Err(Error::InvalidParameter(
                "pointwise A_{2k} of a cut-off bubble needs k = 1; use the spectral route".into(),
            ));
        }
        Ok(match self.spec.bubbles[l].cutoff.zone(s) {
            Zone::Core => self.core(l, s)?.1,
            Zone::Outside => 0.0,
            Zone::Annulus => {
                apply_a2_on_sphere(|x: &SPoint| self.bubble_value(l, x), s, ANNULUS_STEP)
            }
        })
    }

    pub fn value(&self, s: &SPoint) -> f64 {
        self.spec.u_infty.eval(s)
            + (0..self.charts.len())
                .map(|l| self.bubble_value(l, s))
                .sum::<f64>()
    }

    pub fn node_values(&self, s: &SPoint) -> Result<NodeValues> {
        let mut out = NodeValues {
            u_infty: self.spec.u_infty.eval(s),
            a_u_infty: self.a_infty.eval(s),
            ..Default::default()
        };
        for l in 0..self.charts.len() {
            out.v += self.bubble_value(l, s);
            out.a_v += self.bubble_a_value(l, s)?;
        }
        Ok(out)
    }

    /// dE(u_n)(ζ) = A_2u_n − |u_n|^{p*−2}u_n.
    pub fn residual(&self, s: &SPoint) -> Result<f64> {
        let v = self.node_values(s)?;
        let u = v.u();
        Ok(v.a_u() - u.abs().powf(self.spec.consts.p_star - 2.0) * u)
    }
}

/// Band-limited projection of v_n and its tail fraction.
pub fn synthesize_vn(
    bubble: &BubbleChart,
    n: usize,
    consts: &YamabeConstants,
    transform: &Transform,
) -> Result<(SpectralFunction, f64)> {
    let spec = PSSequenceSpec::new(
        SpectralFunction::zero(transform.basis.clone()),
        vec![bubble.clone()],
        *consts,
    )?;
    let term = spec.term(n)?;
    let f = transform.analyze(|s| term.bubble_value(0, s));
    let tail = f.tail_energy();
    Ok((f, tail))
}

/// u_n = u_∞ + Σ_l v_n^l as coefficients, with the tail fraction.
pub fn ps_term(
    spec: &PSSequenceSpec,
    n: usize,
    transform: &Transform,
) -> Result<(SpectralFunction, f64)> {
    let mut u = spec.u_infty.clone();
    if spec.bubbles.is_empty() {
        let tail = u.tail_energy();
        return Ok((u, tail));
    }
    let term = spec.term(n)?;
    let v = transform.analyze(|s| {
        (0..spec.bubbles.len())
            .map(|l| term.bubble_value(l, s))
            .sum()
    });
    u = u.axpy(1.0, &v);
    let tail = u.tail_energy();
    Ok((u, tail))
}

/// Partition-of-unity rule: graded rules around each center weighted by
/// b_l(ζ), a product rule weighted by 1 − Σ b_l.
#[derive(Clone, Debug)]
pub struct ResolvedRule {
    pub nodes: Vec<SPoint>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleQuality {
    /// ~1e−4 relative on a bubble; for mass bookkeeping and detection
    Coarse,
    /// ~1e−10 relative on a bubble
    Fine,
}

impl ResolvedRule {
    pub fn new(n: usize, centers: &[SPoint], min_scale: f64, quality: RuleQuality) -> Result<Self> {
        let mass = crate::cayley::sphere_total_mass(n);
        let weight_of = |s: &SPoint| -> Vec<f64> {
            let b: Vec<f64> = centers
                .iter()
                .map(|c| smooth_step_down(sphere_dist(s, c), 0.3, 0.7))
                .collect();
            let tot: f64 = b.iter().sum();
            if tot > 1.0 {
                b.iter().map(|x| x / tot).collect()
            } else {
                b
            }
        };
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let opts = match quality {
            RuleQuality::Coarse => GradedOptions::coarse(min_scale),
            RuleQuality::Fine => GradedOptions::for_scale(min_scale),
        };
        for (l, c) in centers.iter().enumerate() {
            let g = SphereQuadrature::graded(c, &opts, mass)?;
            for (p, w) in g.nodes.into_iter().zip(g.weights) {
                let b = weight_of(&p)[l];
                if b > 0.0 {
                    weights.push(w * b);
                    nodes.push(p);
                }
            }
        }
        let degree = match quality {
            RuleQuality::Coarse => 24,
            RuleQuality::Fine => 48,
        };
        let prod = SphereQuadrature::standard(n, degree);
        for (p, w) in prod.nodes.into_iter().zip(prod.weights) {
            let rest = 1.0 - weight_of(&p).iter().sum::<f64>();
            if rest > 0.0 {
                weights.push(w * rest);
                nodes.push(p);
            }
        }
        Ok(ResolvedRule { nodes, weights })
    }

    pub fn for_spec(spec: &PSSequenceSpec, n: usize, quality: RuleQuality) -> Result<Self> {
        let centers: Vec<SPoint> = spec.bubbles.iter().map(|b| b.center.clone()).collect();
        let r = spec.bubbles.first().map_or(1.0, |b| b.ladder[n]);
        Self::new(spec.consts.n, &centers, r, quality)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate_values(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }
}

/// Energies and masses of u_n, u_∞ and u_n − u_∞ on one rule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub energy: f64,
    pub quadratic: f64,
    pub lp_mass: f64,
    pub energy_infty: f64,
    pub lp_mass_infty: f64,
    /// E(u_n − u_∞)
    pub energy_bubbles: f64,
    /// ∫_{B_{r_inner}(ζ^l)} |u_n|^{p*} per bubble
    pub ball_masses: Vec<f64>,
}

/// Resolved energies (k = 1).
pub fn resolved_energy(
    spec: &PSSequenceSpec,
    n: usize,
    rule: &ResolvedRule,
) -> Result<EnergyBreakdown> {
    let term = spec.term(n)?;
    let ps = spec.consts.p_star;
    let vals: Vec<NodeValues> = rule
        .nodes
        .par_iter()
        .map(|s| term.node_values(s))
        .collect::<Result<_>>()?;
    let integ = |f: &dyn Fn(&NodeValues) -> f64| -> f64 {
        vals.iter().zip(&rule.weights).map(|(v, w)| f(v) * w).sum()
    };
    let quadratic = integ(&|v| v.u() * v.a_u());
    let lp_mass = integ(&|v| v.u().abs().powf(ps));
    let quad_inf = integ(&|v| v.u_infty * v.a_u_infty);
    let lp_inf = integ(&|v| v.u_infty.abs().powf(ps));
    let quad_b = integ(&|v| v.v * v.a_v);
    let lp_b = integ(&|v| v.v.abs().powf(ps));
    let ball_masses = spec
        .bubbles
        .iter()
        .map(|b| {
            rule.nodes
                .iter()
                .zip(&vals)
                .zip(&rule.weights)
                .filter(|((s, _), _)| sphere_dist(s, &b.center) < b.cutoff.r_inner)
                .map(|((_, v), w)| v.u().abs().powf(ps) * w)
                .sum()
        })
        .collect();
    let out = EnergyBreakdown {
        energy: 0.5 * quadratic - lp_mass / ps,
        quadratic,
        lp_mass,
        energy_infty: 0.5 * quad_inf - lp_inf / ps,
        lp_mass_infty: lp_inf,
        energy_bubbles: 0.5 * quad_b - lp_b / ps,
        ball_masses,
    };
    if !out.energy.is_finite() {
        return Err(Error::NonFinite("resolved energy"));
    }
    Ok(out)
}

/// One rung of the quantization table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantizationRow {
    pub n: usize,
    pub r_n: f64,
    pub energy: f64,
    pub energy_infty: f64,
    /// E(u_n) − E(u_∞) − Σ E_H(U^l)
    pub energy_gap: f64,
    /// |gap| / C_E
    pub rel_gap: f64,
    /// ∫|u_n|^{p*} − ∫|u_∞|^{p*} − Σ∫|U^l|^{p*}
    pub mass_gap: f64,
    /// E(u_n − u_∞) − (E(u_n) − E(u_∞))
    pub splitting_defect: f64,
    /// ∫ u_n A u_n, the squared H^k norm
    pub norm_hk_sqr: f64,
    pub ball_masses: Vec<f64>,
}

/// E_H(amp·ω) = (½|amp|² − |amp|^{p*}/p*)·(Q/k)C_E.
pub fn profile_energy(b: &BubbleChart, c: &YamabeConstants) -> f64 {
    let a = b.amplitude.abs();
    (0.5 * a * a - a.powf(c.p_star) / c.p_star) * c.bubble_mass()
}

/// Energy/mass quantization along the ladder (resolved route, k = 1).
pub fn quantization_table(
    spec: &PSSequenceSpec,
    quality: RuleQuality,
) -> Result<Vec<QuantizationRow>> {
    let c = &spec.consts;
    let e_bubbles: f64 = spec.bubbles.iter().map(|b| profile_energy(b, c)).sum();
    let m_bubbles: f64 = spec.bubble_masses().iter().sum();
    let rungs = if spec.bubbles.is_empty() {
        1
    } else {
        spec.len()
    };
    (0..rungs)
        .map(|n| {
            let rule = ResolvedRule::for_spec(spec, n, quality)?;
            let e = resolved_energy(spec, n, &rule)?;
            let gap = e.energy - e.energy_infty - e_bubbles;
            Ok(QuantizationRow {
                n,
                r_n: spec.bubbles.first().map_or(f64::NAN, |b| b.ladder[n]),
                energy: e.energy,
                energy_infty: e.energy_infty,
                energy_gap: gap,
                rel_gap: gap.abs() / c.c_e,
                mass_gap: e.lp_mass - e.lp_mass_infty - m_bubbles,
                splitting_defect: e.energy_bubbles - (e.energy - e.energy_infty),
                norm_hk_sqr: e.quadratic,
                ball_masses: e.ball_masses,
            })
        })
        .collect()
}

/// Axis e such that the data is zonal about e, if the spec admits one:
/// constant u_∞ and all centers in ℂ·e.
pub fn zonal_axis(spec: &PSSequenceSpec) -> Option<SPoint> {
    let constant = spec.u_infty.coeffs.iter().skip(1).all(|c| *c == 0.0);
    if !constant || spec.consts.n != 1 {
        return None;
    }
    let Some(first) = spec.bubbles.first() else {
        return Some(SPoint::north(1));
    };
    let e = first.center.clone();
    let aligned = spec.bubbles.iter().all(|b| {
        crate::cayley::hermitian(&b.center.zeta, &e.zeta).norm() > 1.0 - 1e-12
            && b.frame == ChartFrame::Rotation
            && b.profile.xi.z_norm_sqr() == 0.0
            && b.profile.xi.t == 0.0
    });
    aligned.then_some(e)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientDecayRow {
    pub n: usize,
    pub r_n: f64,
    pub residual: f64,
    pub detail: DualNormReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientDecayReport {
    pub rows: Vec<GradientDecayRow>,
    /// residual(first rung) / residual(last rung)
    pub decay_factor: f64,
    /// every rung ≤ 1.1 × the previous one
    pub monotone: bool,
}

impl GradientDecayReport {
    /// The check used for the solution specs: monotone and ≥ `factor` decay.
    pub fn decays(&self, factor: f64) -> bool {
        self.monotone && self.decay_factor >= factor
    }
}

/// ‖dE(u_n)‖_{H^{−1}} along the ladder for zonal specs (k = 1).
pub fn gradient_decay_check(spec: &PSSequenceSpec, jmax: usize) -> Result<GradientDecayReport> {
    let axis = zonal_axis(spec).ok_or_else(|| {
        Error::InvalidParameter(
            "the resolved H^{-1} residual needs N = 1, constant u_∞ and collinear centers".into(),
        )
    })?;
    let rungs = if spec.bubbles.is_empty() {
        1
    } else {
        spec.len()
    };
    let r_min = spec
        .bubbles
        .first()
        .map_or(1.0, |b| *b.ladder.last().unwrap());
    let both = spec
        .bubbles
        .iter()
        .any(|b| crate::cayley::hermitian(&b.center.zeta, &axis.zeta).re < 0.0);
    let dn = DualNorm::new(
        frame_ladder(r_min, 4.0, both),
        jmax,
        1.0,
        &ZonalRuleOptions::for_scale(r_min),
    )?;
    let mut rows = Vec::with_capacity(rungs);
    for n in 0..rungs {
        let term = spec.term(n)?;
        // residual evaluation errors (pole cap) contribute zero on a null set
        let rep = dn.norm(|s| term.residual(s).unwrap_or(0.0), &axis)?;
        rows.push(GradientDecayRow {
            n,
            r_n: spec.bubbles.first().map_or(f64::NAN, |b| b.ladder[n]),
            residual: rep.norm,
            detail: rep,
        });
    }
    let first = rows[0].residual;
    let last = rows[rows.len() - 1].residual;
    let monotone = rows
        .windows(2)
        .all(|w| w[1].residual <= 1.1 * w[0].residual);
    Ok(GradientDecayReport {
        decay_factor: if last > 0.0 {
            first / last
        } else {
            f64::INFINITY
        },
        monotone,
        rows,
    })
}

/// Band-limited ‖dE(u_n)‖_{H^{−k}} (any k), with the tail fraction of u_n.
pub fn gradient_residual_spectral(
    spec: &PSSequenceSpec,
    n: usize,
    ctx: &SphereEnergy,
) -> Result<(f64, f64)> {
    let (u, tail) = ps_term(spec, n, &ctx.transform)?;
    let g = ctx.gradient(&u);
    Ok((crate::spectral::norm_h_minus_k(&g, spec.consts.k)?, tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::{random_sphere_point, sphere_total_mass};
    use crate::spectral::HarmonicBasis;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn e1() -> SPoint {
        SPoint::new(vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]).unwrap()
    }

    fn u0_spec(centers: &[SPoint], ladder: &[f64], amplitude: f64) -> PSSequenceSpec {
        let c = YamabeConstants::new(1, 1.0).unwrap();
        let basis = Arc::new(HarmonicBasis::build(1, 2, 2).unwrap());
        let bubbles = centers
            .iter()
            .map(|z| {
                BubbleChart::with_profile(
                    z.clone(),
                    ladder.to_vec(),
                    BubbleParams::standard(1),
                    amplitude,
                )
                .unwrap()
            })
            .collect();
        PSSequenceSpec::new(SpectralFunction::constant(basis, c.u0), bubbles, c).unwrap()
    }

    #[test]
    fn cutoff_values() {
        let b = make_cutoff(e1());
        assert_eq!(b.value(&e1()), 1.0);
        assert_eq!(b.value(&e1().antipode()), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let v = b.value(&random_sphere_point(&mut rng, 1));
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn cutoff_second_derivative_is_bounded() {
        // along a great circle through the center
        let b = make_cutoff(e1());
        let f = |t: f64| {
            b.value(
                &SPoint::new(vec![Complex::new(t.cos(), 0.0), Complex::new(t.sin(), 0.0)]).unwrap(),
            )
        };
        let h = 1e-4;
        let mut m: f64 = 0.0;
        for i in 0..4000 {
            let t = 0.1 + 1.0 * i as f64 / 4000.0;
            m = m.max(((f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h)).abs());
        }
        assert!(m.is_finite() && m < 50.0, "{m}");
    }

    #[test]
    fn ladders_are_validated() {
        assert!(validate_ladder(&[1e-1, 1e-2]).is_ok());
        assert!(validate_ladder(&[1e-2, 1e-1]).is_err());
        assert!(validate_ladder(&[1e-1, 1e-1]).is_err());
        assert!(validate_ladder(&[]).is_err());
        assert!(BubbleChart::new(SPoint::pole(1), vec![0.1]).is_err());
    }

    #[test]
    fn bubble_is_zonal_about_its_center() {
        let spec = u0_spec(&[e1()], &[0.05], 1.0);
        let t = spec.term(0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = random_sphere_point(&mut rng, 1);
            // rotate the second coordinate: fixes e1
            let g =
                SPoint::new(vec![s.zeta[0], s.zeta[1] * Complex::from_polar(1.0, 1.3)]).unwrap();
            let (a, b) = (t.core(0, &s).unwrap().0, t.core(0, &g).unwrap().0);
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn no_bubbles_gives_u_infty() {
        let spec = u0_spec(&[], &[], 1.0);
        let tr = Transform::with_oversampling(spec.u_infty.basis.clone(), 2).unwrap();
        let (u, _) = ps_term(&spec, 0, &tr).unwrap();
        assert_eq!(u.coeffs, spec.u_infty.coeffs);
        let t = spec.term(0).unwrap();
        assert!(t.residual(&e1()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn resolved_energy_of_the_constant() {
        let spec = u0_spec(&[], &[], 1.0);
        let rule = ResolvedRule::new(1, &[], 1.0, RuleQuality::Coarse).unwrap();
        let e = resolved_energy(&spec, 0, &rule).unwrap();
        let m = sphere_total_mass(1);
        // ½λ0²u0²M − ¼u0⁴M = M/64
        assert!((e.energy - m / 64.0).abs() < 1e-12);
    }

    #[test]
    fn annulus_difference_matches_core_formula() {
        // inside the core, the difference stencil reproduces the closed form
        let spec = u0_spec(&[e1()], &[0.3], 1.0);
        let t = spec.term(0).unwrap();
        let s =
            SPoint::normalized(vec![Complex::new(1.0, 0.01), Complex::new(0.05, 0.02)]).unwrap();
        assert!(sphere_dist(&s, &e1()) < 0.25);
        let fd = apply_a2_on_sphere(|x: &SPoint| t.bubble_value(0, x), &s, ANNULUS_STEP);
        let exact = t.core(0, &s).unwrap().1;
        assert!((fd - exact).abs() < 1e-7 * exact.abs(), "{fd} vs {exact}");
    }

    #[test]
    fn one_bubble_quantization_improves() {
        let spec = u0_spec(&[e1()], &[1e-1, 1e-2], 1.0);
        let rows = quantization_table(&spec, RuleQuality::Coarse).unwrap();
        assert!(rows[1].rel_gap < 0.2 * rows[0].rel_gap, "{rows:?}");
        // the leading defect is the interaction u0·∫v³ ~ 10·R·C_E
        assert!(rows[1].rel_gap < 0.2);
        assert!(rows[1].mass_gap.abs() < rows[0].mass_gap.abs());
    }

    #[test]
    fn gradient_decays_and_negative_control_does_not() {
        let good = gradient_decay_check(&u0_spec(&[e1()], &[1e-1, 1e-2], 1.0), 3).unwrap();
        assert!(
            good.decays(5.0),
            "{:?}",
            good.rows.iter().map(|r| r.residual).collect::<Vec<_>>()
        );
        let bad = gradient_decay_check(&u0_spec(&[e1()], &[1e-1, 1e-2], 2.0), 3).unwrap();
        assert!(bad.decay_factor < 2.0);
        // the leading part is ‖A(2V) − (2V)³‖ = 6‖V³‖ = 6π
        let last = bad.rows[1].residual;
        assert!(
            (last / (6.0 * std::f64::consts::PI) - 1.0).abs() < 0.1,
            "{last}"
        );
    }
}
