//! Zonal functions on S³ (N = 1) and a multi-scale dual norm.
//!
//! A function invariant under the stabilizer of a unit vector e depends only
//! on x = ⟨ζ, e⟩, which is uniformly distributed on the unit disk, so
//! dv_S = (mass/π) dA(x).  We parametrize the disk by the half-plane variable
//! q = (1 − x)/(1 + x) = |z|² − it (the Cayley coordinates of the point), in
//! log-polar form q = e^{τ+iψ}.  Heisenberg dilations act as q ↦ q/s², i.e.
//! as shifts in τ, which makes every scale equally cheap to integrate.
//!
//! The H^{−k} norm of a zonal f is estimated from below by a Galerkin
//! problem on test functions φ = J^a·(y∘Ψ_s⁻¹), where y runs over zonal
//! harmonics and Ψ_s = C∘δ_s∘C⁻¹ (and its antipodal mirror).  Conformal
//! covariance gives A_{2k}φ = λ_y J^b (y∘Ψ_s⁻¹) in closed form, so
//! ‖f‖² ≈ gᵀM⁺g with g_i = ⟨f, φ_i⟩ and M_ij = ⟨φ_i, A_{2k}φ_j⟩.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cayley::{sphere_total_mass, transport_exponents};
use crate::error::{Error, Result};
use crate::quadrature::Rule1d;
use crate::spectral::{lambda_jk, BasisElement, HarmonicBasis};
use crate::sphere::{apply_unitary, unitary_with_last_column};
use crate::SPoint;

type C64 = Complex<f64>;

/// Sphere point (north-pole coordinates) with Cayley coordinate q.
pub fn point_from_q(q: C64) -> SPoint {
    let d = C64::new(1.0, 0.0) + q;
    SPoint {
        zeta: vec![2.0 * q.re.max(0.0).sqrt() / d, (C64::new(1.0, 0.0) - q) / d],
    }
}

/// Log-polar product rule on the disk of zonal coordinates.
#[derive(Clone, Debug)]
pub struct ZonalRule {
    pub q: Vec<C64>,
    /// north-pole representatives
    pub nodes: Vec<SPoint>,
    /// weights for dv_S (mass/π · dA(x))
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZonalRuleOptions {
    /// τ ranges over [−tau_max, tau_max]
    pub tau_max: f64,
    pub panel_width: f64,
    pub points_per_panel: usize,
    pub n_psi: usize,
}

impl ZonalRuleOptions {
    /// Resolves features at sphere scales down to `min_scale` around both x = ±1.
    pub fn for_scale(min_scale: f64) -> Self {
        ZonalRuleOptions {
            tau_max: 2.0 * (1.0 / min_scale.min(1.0)).ln() + 14.0,
            panel_width: 1.0,
            points_per_panel: 8,
            n_psi: 48,
        }
    }
}

impl ZonalRule {
    pub fn new(opts: &ZonalRuleOptions) -> Self {
        let m = (2.0 * opts.tau_max / opts.panel_width).ceil().max(1.0) as usize;
        let breaks: Vec<f64> = (0..=m)
            .map(|i| -opts.tau_max + 2.0 * opts.tau_max * i as f64 / m as f64)
            .collect();
        let tau = Rule1d::composite(&breaks, opts.points_per_panel);
        let half = std::f64::consts::FRAC_PI_2;
        let psi = Rule1d::gauss(opts.n_psi, -half, half);
        let scale = sphere_total_mass(1) / std::f64::consts::PI;
        let mut q = Vec::with_capacity(tau.len() * psi.len());
        let mut weights = Vec::with_capacity(q.capacity());
        for (&t, &wt) in tau.nodes.iter().zip(&tau.weights) {
            for (&p, &wp) in psi.nodes.iter().zip(&psi.weights) {
                let qq = C64::from_polar(t.exp(), p);
                // dA(x) = 4|1+q|^{-4} dA(q), dA(q) = e^{2τ} dτ dψ
                let jac = 4.0 / (C64::new(1.0, 0.0) + qq).norm_sqr().powi(2) * (2.0 * t).exp();
                q.push(qq);
                weights.push(scale * jac * wt * wp);
            }
        }
        let nodes = q.iter().map(|&x| point_from_q(x)).collect();
        ZonalRule { q, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn integrate_values(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }
}

/// One family of transported harmonics: scale s, optionally mirrored to −e.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub scale: f64,
    pub antipodal: bool,
}

/// Frames at scales 1, 1/ratio, 1/ratio², … down past `min_scale`, on the
/// requested sides; the unit-scale frame is shared by both sides.
pub fn frame_ladder(min_scale: f64, ratio: f64, both_sides: bool) -> Vec<Frame> {
    let mut out = vec![Frame {
        scale: 1.0,
        antipodal: false,
    }];
    let mut s = 1.0;
    while s > 0.5 * min_scale {
        s /= ratio;
        out.push(Frame {
            scale: s,
            antipodal: false,
        });
        if both_sides {
            out.push(Frame {
                scale: s,
                antipodal: true,
            });
        }
    }
    out
}

/// Zonal elements of the bidegree basis (character 0 in the first slot).
pub fn zonal_elements(jmax: usize) -> Result<Vec<BasisElement>> {
    let b = HarmonicBasis::build(1, jmax, jmax)?;
    Ok(b.elements
        .into_iter()
        .filter(|e| e.character[0] == 0)
        .collect())
}

/// (φ, A_{2k}φ) at Cayley coordinate q for the element transported by `frame`.
pub fn transported(e: &BasisElement, lambda: f64, frame: Frame, q: C64, k: f64) -> (f64, f64) {
    let (a, b) = transport_exponents(1, k);
    let q = if frame.antipodal { 1.0 / q } else { q };
    let s2 = frame.scale * frame.scale;
    let one = C64::new(1.0, 0.0);
    // J = s⁴|1+q|⁴/|s²+q|⁴
    let ratio = (one + q).norm() / (C64::new(s2, 0.0) + q).norm();
    let jac = s2 * s2 * ratio.powi(4);
    let y = e.value(&point_from_q(q / s2).zeta);
    (jac.powf(a) * y, lambda * jac.powf(b) * y)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualNormReport {
    pub norm: f64,
    pub n_tests: usize,
    pub kept_modes: usize,
    /// the component seen by the unit-scale frame alone (a band-limited estimate)
    pub single_frame_norm: f64,
}

/// Galerkin estimate of ‖f‖_{H^{−k}} for f zonal about `center` (N = 1).
pub struct DualNorm {
    pub rule: ZonalRule,
    pub frames: Vec<Frame>,
    pub k: f64,
    elements: Vec<BasisElement>,
    lambdas: Vec<f64>,
    /// √w·φ, √w·Aφ columns
    phi: DMatrix<f64>,
    eig_vectors: DMatrix<f64>,
    eig_values: DVector<f64>,
    kept: Vec<usize>,
    single: usize,
}

impl DualNorm {
    pub fn new(
        frames: Vec<Frame>,
        jmax: usize,
        k: f64,
        rule_opts: &ZonalRuleOptions,
    ) -> Result<Self> {
        let q_dim = 4.0;
        let elements = zonal_elements(jmax)?;
        let lambdas: Vec<f64> = elements
            .iter()
            .map(|e| Ok(lambda_jk(e.block.j, k, q_dim)? * lambda_jk(e.block.l, k, q_dim)?))
            .collect::<Result<_>>()?;
        let rule = ZonalRule::new(rule_opts);
        let nt = frames.len() * elements.len();
        let nq = rule.len();
        let cols: Vec<(Vec<f64>, Vec<f64>)> = frames
            .iter()
            .flat_map(|f| elements.iter().zip(&lambdas).map(move |(e, l)| (*f, e, *l)))
            .collect::<Vec<_>>()
            .par_iter()
            .map(|(f, e, l)| {
                let mut v = Vec::with_capacity(nq);
                let mut av = Vec::with_capacity(nq);
                for (q, w) in rule.q.iter().zip(&rule.weights) {
                    let (x, y) = transported(e, *l, *f, *q, k);
                    v.push(w.sqrt() * x);
                    av.push(w.sqrt() * y);
                }
                (v, av)
            })
            .collect();
        let mut phi = DMatrix::zeros(nq, nt);
        let mut aphi = DMatrix::zeros(nq, nt);
        for (c, (v, av)) in cols.into_iter().enumerate() {
            phi.set_column(c, &DVector::from_vec(v));
            aphi.set_column(c, &DVector::from_vec(av));
        }
        let m = phi.transpose() * &aphi;
        let m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let kept: Vec<usize> = (0..nt)
            .filter(|&i| eig.eigenvalues[i] > 1e-11 * top)
            .collect();
        Ok(DualNorm {
            rule,
            frames,
            k,
            single: elements.len(),
            elements,
            lambdas,
            phi,
            eig_vectors: eig.eigenvectors,
            eig_values: eig.eigenvalues,
            kept,
        })
    }

    pub fn n_tests(&self) -> usize {
        self.phi.ncols()
    }

    /// ‖f‖_{H^{−k}} from values of f at the rule's nodes (north coordinates).
    pub fn norm_from_values(&self, f: &[f64]) -> Result<DualNormReport> {
        if f.len() != self.rule.len() {
            return Err(Error::Dimension {
                expected: self.rule.len(),
                got: f.len(),
            });
        }
        let fw = DVector::from_iterator(
            f.len(),
            f.iter().zip(&self.rule.weights).map(|(x, w)| x * w.sqrt()),
        );
        let g = self.phi.transpose() * fw;
        let proj = self.eig_vectors.transpose() * &g;
        let norm2: f64 = self
            .kept
            .iter()
            .map(|&i| proj[i] * proj[i] / self.eig_values[i])
            .sum();
        // unit-scale frame alone: orthonormal, diagonal λ
        let single2: f64 = (0..self.single)
            .map(|i| g[i] * g[i] / self.lambdas[i])
            .sum();
        Ok(DualNormReport {
            norm: norm2.max(0.0).sqrt(),
            n_tests: self.n_tests(),
            kept_modes: self.kept.len(),
            single_frame_norm: single2.sqrt(),
        })
    }

    /// ‖f‖_{H^{−k}} for f zonal about `center`, given on the actual sphere.
    pub fn norm(
        &self,
        f: impl Fn(&SPoint) -> f64 + Sync,
        center: &SPoint,
    ) -> Result<DualNormReport> {
        let g = north_to(center)?;
        let vals: Vec<f64> = self
            .rule
            .nodes
            .par_iter()
            .map(|p| {
                f(&SPoint {
                    zeta: apply_unitary(&g, &p.zeta),
                })
            })
            .collect();
        self.norm_from_values(&vals)
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }
}

/// Unitary g with g·(0, 1) = center.
pub fn north_to(center: &SPoint) -> Result<Vec<Vec<C64>>> {
    if center.dim() != 1 {
        return Err(Error::InvalidParameter(
            "zonal reduction is implemented for N = 1".into(),
        ));
    }
    unitary_with_last_column(center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::{cayley_inv, conformal_pushforward, random_sphere_point};
    use crate::energy::{bubble_eval, BubbleParams, YamabeConstants};
    use crate::spectral::apply_a2_on_sphere;
    use crate::{Chart, Point};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn q_coordinates_match_cayley() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let s = random_sphere_point(&mut rng, 1);
            let p = cayley_inv(&s).unwrap();
            let q = C64::new(p.z_norm_sqr(), -p.t);
            let back = point_from_q(q);
            // same x, same |ζ1|
            assert!((back.zeta[1] - s.zeta[1]).norm() < 1e-12);
            assert!((back.zeta[0].norm() - s.zeta[0].norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn rule_integrates_zonal_polynomials() {
        let rule = ZonalRule::new(&ZonalRuleOptions::for_scale(1.0));
        let mass = sphere_total_mass(1);
        let ones = vec![1.0; rule.len()];
        assert!((rule.integrate_values(&ones) - mass).abs() < 1e-8 * mass);
        // ∫|ζ2|^4 = mass·2!·1!/3! = mass/3
        let v: Vec<f64> = rule
            .nodes
            .iter()
            .map(|p| p.zeta[1].norm_sqr().powi(2))
            .collect();
        assert!((rule.integrate_values(&v) - mass / 3.0).abs() < 1e-8 * mass);
    }

    #[test]
    fn transported_functions_are_eigen_pairs() {
        // A_2 φ computed by differences equals the closed form
        let els = zonal_elements(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for e in els.iter().take(6) {
            let lam = (e.block.j as f64 + 0.5) * (e.block.l as f64 + 0.5);
            for frame in [
                Frame {
                    scale: 0.3,
                    antipodal: false,
                },
                Frame {
                    scale: 0.5,
                    antipodal: true,
                },
            ] {
                let f = |s: &SPoint| {
                    let p = cayley_inv(s).unwrap();
                    transported(e, lam, frame, C64::new(p.z_norm_sqr(), -p.t), 1.0).0
                };
                for _ in 0..3 {
                    let s = random_sphere_point(&mut rng, 1);
                    let p = cayley_inv(&s).unwrap();
                    let (_, a) = transported(e, lam, frame, C64::new(p.z_norm_sqr(), -p.t), 1.0);
                    let fd = apply_a2_on_sphere(f, &s, 1e-3);
                    assert!((fd - a).abs() < 1e-5 * (1.0 + a.abs()), "{fd} vs {a}");
                }
            }
        }
    }

    #[test]
    fn dual_norm_of_the_bubble_cube() {
        // ‖V³‖_{H^{-1}} = ‖V‖_{H^1} = (∫V⁴)^{1/2} for a sphere bubble V
        let c = YamabeConstants::new(1, 1.0).unwrap();
        let r = 1e-3;
        let frames = frame_ladder(r, 4.0, false);
        let dn = DualNorm::new(frames, 4, 1.0, &ZonalRuleOptions::for_scale(r)).unwrap();
        let chart = Chart::new(Point::origin(1), r).unwrap();
        let prof = BubbleParams::standard(1);
        let v = conformal_pushforward(|p: &Point| bubble_eval(&prof, p, &c), &chart, 1.0);
        let rep = dn.norm(|s| v(s).powi(3), &SPoint::north(1)).unwrap();
        let exact = c.bubble_mass().sqrt();
        assert!(
            (rep.norm - exact).abs() < 1e-6 * exact,
            "{} vs {exact}",
            rep.norm
        );
        assert!(rep.single_frame_norm < 0.1 * exact);
    }

    #[test]
    fn dual_norm_of_band_limited_data_is_spectral() {
        let els = zonal_elements(3).unwrap();
        let dn = DualNorm::new(
            frame_ladder(0.05, 4.0, true),
            3,
            0.5,
            &ZonalRuleOptions::for_scale(0.05),
        )
        .unwrap();
        let lam: Vec<f64> = els
            .iter()
            .map(|e| {
                lambda_jk(e.block.j, 0.5, 4.0).unwrap() * lambda_jk(e.block.l, 0.5, 4.0).unwrap()
            })
            .collect();
        let coeffs = [0.3, -1.0, 0.5, 0.25];
        let idx = [0usize, 2, 5, 9];
        let exact: f64 = idx
            .iter()
            .zip(&coeffs)
            .map(|(&i, c)| c * c / lam[i])
            .sum::<f64>()
            .sqrt();
        let f = |s: &SPoint| {
            idx.iter()
                .zip(&coeffs)
                .map(|(&i, c)| c * els[i].value(&s.zeta))
                .sum::<f64>()
        };
        let center = random_sphere_point(&mut ChaCha8Rng::seed_from_u64(9), 1);
        let g = north_to(&center).unwrap();
        let rotated = |s: &SPoint| {
            // f composed with g⁻¹ is zonal about `center`
            let inv: Vec<C64> = (0..2)
                .map(|i| g[i].iter().zip(&s.zeta).map(|(a, b)| a.conj() * b).sum())
                .collect();
            f(&SPoint { zeta: inv })
        };
        let rep = dn.norm(rotated, &center).unwrap();
        assert!(
            (rep.norm - exact).abs() < 1e-7 * exact,
            "{} vs {exact}",
            rep.norm
        );
        assert!((rep.single_frame_norm - exact).abs() < 1e-7 * exact);
    }
}
