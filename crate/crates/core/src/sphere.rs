//! Quadrature on S^{2N+1} against dv_S.
//!
//! Coordinates ζ_k = √s_k e^{iφ_k} with s on the simplex; dσ = 2^{-N} ds dφ.
//! The simplex is covered by a collapsed (Duffy) Gauss product, the phases
//! by periodic trapezoids, which integrate every polynomial of the
//! configured degree exactly.  For N = 1 the node layout is a tensor grid
//! that `spectral` exploits for FFT-free fast transforms.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::cayley::{hermitian, sphere_total_mass, SpherePoint};
use crate::error::{Error, Result};
use crate::quadrature::{graded_breaks, Rule1d};
use crate::special::factorial;
use crate::SPoint;

type C64 = Complex<f64>;

/// Euclidean surface measure of S^{2N+1}.
pub fn euclidean_sphere_area(n: usize) -> f64 {
    2.0 * PI.powi(n as i32 + 1) / factorial(n)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Layout {
    /// N = 1 tensor grid: index = (i_s·n_phi + i_1)·n_phi + i_2.
    Tensor {
        s_nodes: Vec<f64>,
        s_weights: Vec<f64>,
        n_phi: usize,
    },
    General,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphereQuadrature {
    pub n: usize,
    pub nodes: Vec<SPoint>,
    pub weights: Vec<f64>,
    pub total_mass: f64,
    /// polynomial degree in (ζ, ζ̄) integrated exactly (0 for graded rules)
    pub degree: usize,
    pub layout: Layout,
}

impl SphereQuadrature {
    /// Product rule exact for polynomials of total degree ≤ `degree`,
    /// with dv_S of mass `total_mass`.
    pub fn product(n: usize, degree: usize, total_mass: f64) -> Self {
        assert!(n >= 1);
        // s-polynomial degree ≤ degree/2, Duffy Jacobian adds ≤ N−1
        let n_u = (degree / 2 + n).div_ceil(2) + 1;
        let n_phi = degree + 1;
        let scale = total_mass / euclidean_sphere_area(n);
        let (simplex, sw) = simplex_rule(n, n_u);
        let phi = Rule1d::trapezoid_periodic(n_phi, 0.0);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let n_ph_total = n_phi.pow(n as u32 + 1);
        for (s, w) in simplex.iter().zip(&sw) {
            let amp: Vec<f64> = s.iter().map(|x| x.max(0.0).sqrt()).collect();
            for idx in 0..n_ph_total {
                let mut rem = idx;
                let mut zeta = vec![C64::new(0.0, 0.0); n + 1];
                let mut wp = 1.0;
                // last coordinate varies fastest
                for k in (0..=n).rev() {
                    let i = rem % n_phi;
                    rem /= n_phi;
                    zeta[k] = C64::from_polar(amp[k], phi.nodes[i]);
                    wp *= phi.weights[i];
                }
                nodes.push(SpherePoint { zeta });
                weights.push(scale * w * wp / 2f64.powi(n as i32));
            }
        }
        let layout = if n == 1 {
            Layout::Tensor {
                s_nodes: simplex.iter().map(|s| s[0]).collect(),
                s_weights: sw.clone(),
                n_phi,
            }
        } else {
            Layout::General
        };
        SphereQuadrature {
            n,
            nodes,
            weights,
            total_mass,
            degree,
            layout,
        }
    }

    /// Product rule with the default dv_S mass.
    pub fn standard(n: usize, degree: usize) -> Self {
        Self::product(n, degree, sphere_total_mass(n))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&SPoint) -> f64 + Sync) -> f64 {
        use rayon::prelude::*;
        self.nodes
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(p, w)| w * f(p))
            .sum()
    }

    /// Σ w_i v_i for precomputed node values.
    pub fn integrate_values(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Rule refined around `center`: geometric panels in s = |ζ'|² and in the
    /// phase of the ⟨ζ, center⟩ coordinate, down to `min_scale`.
    pub fn graded(center: &SPoint, opts: &GradedOptions, total_mass: f64) -> Result<Self> {
        let n = center.dim();
        let u = unitary_with_last_column(center)?;
        let s_rule = Rule1d::composite(
            &graded_breaks(0.0, 1.0, opts.min_scale, opts.ratio, opts.max_panel),
            opts.points_per_panel,
        );
        let half = graded_breaks(0.0, PI, opts.min_scale, opts.ratio, opts.max_panel);
        let mut phi_breaks: Vec<f64> = half.iter().rev().map(|x| -x).collect();
        phi_breaks.extend_from_slice(&half[1..]);
        let phi_rule = Rule1d::composite(&phi_breaks, opts.points_per_panel);
        // inner unit sphere S^{2N-1} in C^N
        let (inner_nodes, inner_w): (Vec<Vec<C64>>, Vec<f64>) = if n == 1 {
            let r = Rule1d::trapezoid_periodic(opts.inner_points, 0.0);
            (
                r.nodes
                    .iter()
                    .map(|&a| vec![C64::from_polar(1.0, a)])
                    .collect(),
                r.weights.clone(),
            )
        } else {
            let q =
                SphereQuadrature::product(n - 1, opts.inner_points, euclidean_sphere_area(n - 1));
            (q.nodes.into_iter().map(|p| p.zeta).collect(), q.weights)
        };
        let scale = total_mass / euclidean_sphere_area(n);
        let mut nodes = Vec::with_capacity(s_rule.len() * phi_rule.len() * inner_w.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for (&s, &ws) in s_rule.nodes.iter().zip(&s_rule.weights) {
            let rs = s.sqrt();
            let rc = (1.0 - s).max(0.0).sqrt();
            let jac = 0.5 * s.powi(n as i32 - 1);
            for (&ph, &wp) in phi_rule.nodes.iter().zip(&phi_rule.weights) {
                let last = C64::from_polar(rc, ph);
                for (om, &wo) in inner_nodes.iter().zip(&inner_w) {
                    let mut local: Vec<C64> = om.iter().map(|c| c * rs).collect();
                    local.push(last);
                    nodes.push(SpherePoint {
                        zeta: apply_unitary(&u, &local),
                    });
                    weights.push(scale * jac * ws * wp * wo);
                }
            }
        }
        Ok(SphereQuadrature {
            n,
            nodes,
            weights,
            total_mass,
            degree: 0,
            layout: Layout::General,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradedOptions {
    pub min_scale: f64,
    pub ratio: f64,
    pub max_panel: f64,
    pub points_per_panel: usize,
    pub inner_points: usize,
}

impl GradedOptions {
    /// Resolves features down to `scale` (a sphere length; s and φ ~ scale²).
    pub fn for_scale(scale: f64) -> Self {
        GradedOptions {
            min_scale: (scale * scale * 1e-3).min(1e-3),
            ratio: 2.5,
            max_panel: 0.2,
            points_per_panel: 10,
            inner_points: 8,
        }
    }

    pub fn coarse(scale: f64) -> Self {
        GradedOptions {
            min_scale: (scale * scale * 1e-2).min(1e-3),
            ratio: 3.0,
            max_panel: 0.4,
            points_per_panel: 4,
            inner_points: 4,
        }
    }
}

/// Simplex rule over (s_1..s_{N+1}) via s_1 = u_1, s_2 = (1−u_1)u_2, …
fn simplex_rule(n: usize, m: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let g = Rule1d::gauss(m, 0.0, 1.0);
    let total = m.pow(n as u32);
    let mut pts = Vec::with_capacity(total);
    let mut ws = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut s = vec![0.0; n + 1];
        let mut left = 1.0;
        let mut w = 1.0;
        for i in 0..n {
            let a = rem % m;
            rem /= m;
            let u = g.nodes[a];
            s[i] = left * u;
            // ds_i = left·du_i
            w *= g.weights[a] * left;
            left *= 1.0 - u;
        }
        s[n] = left;
        pts.push(s);
        ws.push(w);
    }
    (pts, ws)
}

/// Unitary matrix (columns) whose last column is `c`.
pub fn unitary_with_last_column(c: &SPoint) -> Result<Vec<Vec<C64>>> {
    let d = c.zeta.len();
    let mut cols: Vec<Vec<C64>> = vec![c.zeta.clone()];
    for e in 0..d {
        if cols.len() == d {
            break;
        }
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[e] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for col in &cols {
                let proj = hermitian(&v, col);
                for (vi, ci) in v.iter_mut().zip(col) {
                    *vi -= proj * ci;
                }
            }
        }
        let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / nrm).collect());
        }
    }
    if cols.len() != d {
        return Err(Error::InvalidParameter(
            "could not complete unitary frame".into(),
        ));
    }
    cols.rotate_left(1);
    Ok(cols)
}

/// Σ_k x_k · col_k
pub fn apply_unitary(cols: &[Vec<C64>], x: &[C64]) -> Vec<C64> {
    let d = x.len();
    let mut out = vec![C64::new(0.0, 0.0); d];
    for (xk, col) in x.iter().zip(cols) {
        for i in 0..d {
            out[i] += xk * col[i];
        }
    }
    out
}

/// Smooth (C^∞) transition: 1 for x ≤ a, 0 for x ≥ b.
pub fn smooth_step_down(x: f64, a: f64, b: f64) -> f64 {
    if x <= a {
        return 1.0;
    }
    if x >= b {
        return 0.0;
    }
    let t = (x - a) / (b - a);
    let f = |y: f64| if y <= 0.0 { 0.0 } else { (-1.0 / y).exp() };
    let up = f(1.0 - t);
    up / (up + f(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::sphere_dist;
    use approx::assert_relative_eq;

    fn moment(alpha: &[usize], n: usize, mass: f64) -> f64 {
        let num: f64 = alpha.iter().map(|&a| factorial(a)).product();
        let tot: usize = alpha.iter().sum();
        mass * num * factorial(n) / factorial(n + tot)
    }

    #[test]
    fn simplex_weights_sum_to_volume() {
        for n in 1..=3 {
            let (_, w) = simplex_rule(n, 5);
            assert_relative_eq!(
                w.iter().sum::<f64>(),
                1.0 / factorial(n),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn mass_and_moments_n1() {
        let q = SphereQuadrature::standard(1, 12);
        let m = sphere_total_mass(1);
        assert_relative_eq!(m, 16.0 * PI * PI, max_relative = 1e-15);
        assert_relative_eq!(q.weights.iter().sum::<f64>(), m, max_relative = 1e-13);
        for a in 0..=6usize {
            for b in 0..=(6 - a) {
                let got = q.integrate(|p| {
                    p.zeta[0].norm_sqr().powi(a as i32) * p.zeta[1].norm_sqr().powi(b as i32)
                });
                assert_relative_eq!(got, moment(&[a, b], 1, m), max_relative = 1e-12);
            }
        }
        // off-diagonal characters vanish
        let z = q.integrate(|p| (p.zeta[0] * p.zeta[0] * p.zeta[1].conj().powi(2)).re);
        assert!(z.abs() < 1e-12);
    }

    #[test]
    fn moments_n2() {
        let q = SphereQuadrature::standard(2, 8);
        let m = sphere_total_mass(2);
        assert_relative_eq!(q.weights.iter().sum::<f64>(), m, max_relative = 1e-12);
        for a in [[1usize, 1, 2], [0, 0, 4], [2, 1, 0], [1, 1, 1]] {
            let got = q.integrate(|p| {
                (0..3)
                    .map(|k| p.zeta[k].norm_sqr().powi(a[k] as i32))
                    .product::<f64>()
            });
            assert_relative_eq!(got, moment(&a, 2, m), max_relative = 1e-11);
        }
    }

    #[test]
    fn graded_rule_integrates_smooth_and_peaked() {
        let c = SpherePoint::normalized(vec![C64::new(0.3, 0.4), C64::new(-0.5, 0.7)]).unwrap();
        let m = sphere_total_mass(1);
        let g = SphereQuadrature::graded(&c, &GradedOptions::for_scale(1e-3), m).unwrap();
        assert_relative_eq!(g.weights.iter().sum::<f64>(), m, max_relative = 1e-10);
        let got = g.integrate(|p| p.zeta[0].norm_sqr().powi(2));
        assert_relative_eq!(got, moment(&[2, 0], 1, m), max_relative = 1e-10);
        // invariant Poisson kernel of the ball: ∫ |1 − ⟨ζ,a⟩|^{-4} dσ = |S³|/(1−|a|²)²
        let eps: f64 = 1e-3;
        let peak = |p: &SPoint| {
            let ip = hermitian(&p.zeta, &c.zeta);
            let r = 1.0 - eps * eps;
            (C64::new(1.0, 0.0) - ip * r).norm().powi(-4)
        };
        let r = 1.0 - eps * eps;
        let exact = 2.0 * PI * PI / (1.0 - r * r).powi(2) * m / euclidean_sphere_area(1);
        assert_relative_eq!(g.integrate(peak), exact, max_relative = 1e-7);
        let closest = g
            .nodes
            .iter()
            .map(|p| sphere_dist(p, &c))
            .fold(f64::INFINITY, f64::min);
        assert!(closest < 1e-3);
    }

    #[test]
    fn unitary_frame() {
        let c = SpherePoint::normalized(vec![
            C64::new(0.1, 0.2),
            C64::new(0.3, -0.4),
            C64::new(0.5, 0.6),
        ])
        .unwrap();
        let u = unitary_with_last_column(&c).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let ip = hermitian(&u[i], &u[j]);
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((ip - C64::new(e, 0.0)).norm() < 1e-13);
            }
        }
        assert_eq!(u[2], c.zeta);
    }

    #[test]
    fn smooth_step_is_monotone() {
        let v: Vec<f64> = (0..=100)
            .map(|i| smooth_step_down(i as f64 / 100.0, 0.2, 0.8))
            .collect();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[100], 0.0);
        assert!(v.windows(2).all(|p| p[1] <= p[0]));
    }
}
