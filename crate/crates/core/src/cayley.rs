//! Cayley transform H^N → S^{2N+1} ∖ {pole}, conformal factors, the sphere
//! quasi-distance and conformal transport of functions between the two sides.
//!
//! Sign convention: C(z,t) = (2z, 1−|z|²+it)/(1+|z|²−it).  With the group law
//! in `heisenberg` this is the choice for which both
//!   L_2(Λ_C^{a} u∘C) = Λ_C^{b} (A_2 u)∘C   and
//!   d(Cw, Cw') = d(w,w') f(w) f(w')
//! hold with the left-invariant Korányi distance.

use num_complex::Complex;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heisenberg::{dilate_unchecked, group_inv, group_mul, koranyi_dist, HeisPoint};

/// Sphere points closer than this to the pole are rejected by chart inverses.
pub const POLE_EXCLUSION: f64 = 1e-6;

/// Unit vector in C^{N+1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint<T> {
    pub zeta: Vec<Complex<T>>,
}

impl<T: Float> SpherePoint<T> {
    /// Checks |ζ| = 1 to 1e-12 (relative to the working precision).
    pub fn new(zeta: Vec<Complex<T>>) -> Result<Self> {
        let n2 = zeta.iter().fold(T::zero(), |a, c| a + c.norm_sqr());
        if !n2.is_finite() {
            return Err(Error::NonFinite("SpherePoint"));
        }
        let tol = T::from(1e-12)
            .unwrap()
            .max(T::epsilon() * T::from(16.0).unwrap());
        if (n2 - T::one()).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "|zeta|^2 = {:?} is not 1",
                n2.to_f64()
            )));
        }
        Ok(SpherePoint { zeta })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(zeta: Vec<Complex<T>>) -> Result<Self> {
        let n = zeta.iter().fold(T::zero(), |a, c| a + c.norm_sqr()).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::ZeroInput);
        }
        Ok(SpherePoint {
            zeta: zeta.into_iter().map(|c| c / n).collect(),
        })
    }

    /// (0, …, 0, 1) = C(0).
    pub fn north(n: usize) -> Self {
        let mut z = vec![Complex::new(T::zero(), T::zero()); n + 1];
        z[n] = Complex::new(T::one(), T::zero());
        SpherePoint { zeta: z }
    }

    /// (0, …, 0, −1), the point missed by C.
    pub fn pole(n: usize) -> Self {
        let mut z = vec![Complex::new(T::zero(), T::zero()); n + 1];
        z[n] = Complex::new(-T::one(), T::zero());
        SpherePoint { zeta: z }
    }

    /// N (so the ambient space is C^{N+1}).
    pub fn dim(&self) -> usize {
        self.zeta.len() - 1
    }

    pub fn antipode(&self) -> Self {
        SpherePoint {
            zeta: self.zeta.iter().map(|c| -c).collect(),
        }
    }
}

/// ⟨a, b⟩ = Σ a_j conj(b_j).
pub fn hermitian<T: Float>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| {
            acc + x * y.conj()
        })
}

/// d(ζ,η) = (2|1 − ⟨ζ,η⟩|)^{1/2}.
pub fn sphere_dist<T: Float>(a: &SpherePoint<T>, b: &SpherePoint<T>) -> T {
    let two = T::one() + T::one();
    (two * (Complex::new(T::one(), T::zero()) - hermitian(&a.zeta, &b.zeta)).norm()).sqrt()
}

pub fn cayley<T: Float>(p: &HeisPoint<T>) -> SpherePoint<T> {
    let r2 = p.z_norm_sqr();
    let one = T::one();
    let two = one + one;
    let den = Complex::new(one + r2, -p.t);
    let mut zeta: Vec<Complex<T>> = p.z.iter().map(|c| c * two / den).collect();
    zeta.push(Complex::new(one - r2, p.t) / den);
    SpherePoint { zeta }
}

/// Inverse Cayley; errors inside the excluded cap around the pole.
pub fn cayley_inv<T: Float>(s: &SpherePoint<T>) -> Result<HeisPoint<T>> {
    let n = s.dim();
    let w = Complex::new(T::one(), T::zero()) + s.zeta[n];
    // d(s, pole)² = 2|1 + ζ_{N+1}|
    let d = (w.norm() * (T::one() + T::one())).sqrt();
    if d.to_f64().unwrap_or(0.0) < POLE_EXCLUSION {
        return Err(Error::SingularChart(d.to_f64().unwrap_or(0.0)));
    }
    let den = Complex::new(T::one() + T::one(), T::zero()) / w;
    Ok(HeisPoint {
        z: s.zeta[..n].iter().map(|c| c / w).collect(),
        t: -den.im,
    })
}

/// ρ(p) = (1+|z|²)² + t².
pub fn cayley_rho<T: Float>(p: &HeisPoint<T>) -> T {
    let a = T::one() + p.z_norm_sqr();
    a * a + p.t * p.t
}

/// Λ_C = 2^Q / ρ^{N+1}.
pub fn lambda_cayley<T: Float>(p: &HeisPoint<T>) -> T {
    let n = p.dim() as i32;
    let two = T::one() + T::one();
    two.powi(2 * n + 2) / cayley_rho(p).powi(n + 1)
}

/// (4/ρ(p))^{1/4}, the pointwise factor in the distance relation.
pub fn distance_factor<T: Float>(p: &HeisPoint<T>) -> T {
    let four = T::from(4.0).unwrap();
    (four / cayley_rho(p)).sqrt().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartDirection {
    ToSphere,
    ToHeisenberg,
}

/// ρ = C∘τ_w∘δ_R and its inverse σ = δ_{1/R}∘τ_{w⁻¹}∘C⁻¹.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalChart<T> {
    pub center: HeisPoint<T>,
    pub scale: T,
    pub direction: ChartDirection,
}

impl<T: Float> ConformalChart<T> {
    pub fn new(center: HeisPoint<T>, scale: T) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::NonPositiveScale(scale.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(ConformalChart {
            center,
            scale,
            direction: ChartDirection::ToSphere,
        })
    }

    /// Chart written as C∘δ_R∘τ_ξ; equal to C∘τ_{δ_R ξ}∘δ_R.
    pub fn dilate_then_translate(xi: &HeisPoint<T>, scale: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::NonPositiveScale(scale.to_f64().unwrap_or(f64::NAN)));
        }
        Self::new(dilate_unchecked(scale, xi), scale)
    }

    pub fn identity(n: usize) -> Self {
        ConformalChart {
            center: HeisPoint::origin(n),
            scale: T::one(),
            direction: ChartDirection::ToSphere,
        }
    }

    pub fn inverse(&self) -> Self {
        let mut c = self.clone();
        c.direction = match self.direction {
            ChartDirection::ToSphere => ChartDirection::ToHeisenberg,
            ChartDirection::ToHeisenberg => ChartDirection::ToSphere,
        };
        c
    }

    /// τ_w δ_R p
    pub fn inner(&self, p: &HeisPoint<T>) -> HeisPoint<T> {
        group_mul(&self.center, &dilate_unchecked(self.scale, p))
    }

    pub fn map(&self, p: &HeisPoint<T>) -> SpherePoint<T> {
        cayley(&self.inner(p))
    }

    /// σ(ζ) = δ_{1/R}(w⁻¹ · C⁻¹ζ).
    pub fn inverse_map(&self, s: &SpherePoint<T>) -> Result<HeisPoint<T>> {
        let q = cayley_inv(s)?;
        Ok(dilate_unchecked(
            T::one() / self.scale,
            &group_mul(&group_inv(&self.center), &q),
        ))
    }

    /// Λ_ρ(p) = Λ_C(τ_w δ_R p)·R^Q.
    pub fn jacobian(&self, p: &HeisPoint<T>) -> T {
        let q = 2 * p.dim() as i32 + 2;
        lambda_cayley(&self.inner(p)) * self.scale.powi(q)
    }

    /// Λ_σ(ζ) = 1/Λ_ρ(σζ).
    pub fn inverse_jacobian(&self, s: &SpherePoint<T>) -> Result<T> {
        Ok(T::one() / self.jacobian(&self.inverse_map(s)?))
    }
}

/// chart_map as a free function (direction ToSphere).
pub fn chart_map<T: Float>(chart: &ConformalChart<T>, p: &HeisPoint<T>) -> SpherePoint<T> {
    chart.map(p)
}

pub fn chart_jacobian<T: Float>(chart: &ConformalChart<T>, p: &HeisPoint<T>) -> T {
    chart.jacobian(p)
}

/// Exponent a = (Q−2k)/2Q carried by functions, and b = (Q+2k)/2Q carried by A_{2k}u.
pub fn transport_exponents(n: usize, k: f64) -> (f64, f64) {
    let q = 2.0 * n as f64 + 2.0;
    ((q - 2.0 * k) / (2.0 * q), (q + 2.0 * k) / (2.0 * q))
}

/// U = Λ_ρ^{a} · (u∘ρ).
pub fn conformal_pullback<'a>(
    u: impl Fn(&SpherePoint<f64>) -> f64 + 'a,
    chart: &'a ConformalChart<f64>,
    k: f64,
) -> impl Fn(&HeisPoint<f64>) -> f64 + 'a {
    let (a, _) = transport_exponents(chart.center.dim(), k);
    move |p| chart.jacobian(p).powf(a) * u(&chart.map(p))
}

/// u = Λ_σ^{a} · (U∘σ), zero in the excluded pole cap.
pub fn conformal_pushforward<'a>(
    big_u: impl Fn(&HeisPoint<f64>) -> f64 + 'a,
    chart: &'a ConformalChart<f64>,
    k: f64,
) -> impl Fn(&SpherePoint<f64>) -> f64 + 'a {
    let (a, _) = transport_exponents(chart.center.dim(), k);
    move |s| match chart.inverse_map(s) {
        Ok(p) => chart.jacobian(&p).powf(-a) * big_u(&p),
        Err(_) => 0.0,
    }
}

/// Uniform random point on S^{2N+1}.
pub fn random_sphere_point(rng: &mut impl Rng, n: usize) -> SpherePoint<f64> {
    loop {
        let v: Vec<Complex<f64>> = (0..=n)
            .map(|_| Complex::new(gauss(rng), gauss(rng)))
            .collect();
        if let Ok(s) = SpherePoint::normalized(v) {
            return s;
        }
    }
}

pub(crate) fn gauss(rng: &mut impl Rng) -> f64 {
    // Box–Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Counts sampled points q with d(q, C⁻¹ζ) < R/2 but d(Cq, ζ) ≥ R.
pub fn ball_inclusion_violations(n: usize, samples: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..samples {
        let s = loop {
            let s = random_sphere_point(&mut rng, n);
            if sphere_dist(&s, &SpherePoint::pole(n)) > 0.05 {
                break s;
            }
        };
        let p0 = cayley_inv(&s).expect("outside pole cap");
        let r: f64 = rng.gen_range(0.01..2.0);
        // random point of the Heisenberg ball B_{R/2}(p0)
        let dir = crate::heisenberg::random_point(&mut rng, n, 1.0);
        let g = crate::heisenberg::koranyi_gauge(&dir);
        if g == 0.0 {
            continue;
        }
        let rad = 0.5 * r * rng.gen_range(0.0..0.999);
        let q = group_mul(&p0, &dilate_unchecked(rad / g, &dir));
        debug_assert!(koranyi_dist(&q, &p0) < 0.5 * r);
        if sphere_dist(&cayley(&q), &s) >= r {
            bad += 1;
        }
    }
    bad
}

/// Total dv_S mass 2^{2N+1} N! ω_{2N+1}, ω_{2N+1} = 2π^{N+1}/N! Euclidean.
pub fn sphere_total_mass(n: usize) -> f64 {
    2f64.powi(2 * n as i32 + 1) * 2.0 * std::f64::consts::PI.powi(n as i32 + 1)
}

/// ∫_{H^N} Λ_C dLebesgue in closed form: 2^Q π^{N+1/2} Γ(N+1/2)/(2N)!.
pub fn lambda_cayley_lebesgue_integral(n: usize) -> f64 {
    use crate::special::{factorial, gamma};
    let nf = n as f64;
    2f64.powi(2 * n as i32 + 2) * std::f64::consts::PI.powf(nf + 0.5) * gamma(nf + 0.5)
        / factorial(2 * n)
}

/// kappa_H making ∫_S 1 dv_S = ∫_H Λ_C dv_H, measured with a whole-space rule.
pub fn calibrate_kappa(n: usize, n_per_axis: usize) -> (f64, f64) {
    use crate::heisenberg::{haar_integral_whole_space, HaarMeasure};
    let leb = haar_integral_whole_space(
        lambda_cayley,
        n,
        n_per_axis,
        &HeisPoint::origin(n),
        1.0,
        HaarMeasure::default(),
    );
    (sphere_total_mass(n) / leb, leb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg::random_point;
    use approx::assert_abs_diff_eq;

    #[test]
    fn origin_goes_to_north() {
        let s = cayley(&HeisPoint::<f64>::origin(2));
        assert_eq!(s, SpherePoint::north(2));
        let p = cayley_inv(&SpherePoint::<f64>::north(2)).unwrap();
        assert_eq!(p, HeisPoint::origin(2));
        assert!(matches!(
            cayley_inv(&SpherePoint::<f64>::pole(1)),
            Err(Error::SingularChart(_))
        ));
    }

    #[test]
    fn lambda_at_origin() {
        assert_eq!(lambda_cayley(&HeisPoint::<f64>::origin(1)), 16.0);
        let ch = ConformalChart::new(HeisPoint::origin(1), 0.3).unwrap();
        assert_abs_diff_eq!(
            ch.jacobian(&HeisPoint::origin(1)),
            16.0 * 0.3f64.powi(4),
            epsilon = 1e-14
        );
    }

    #[test]
    fn lambda_decay_rate() {
        let p = HeisPoint::new(vec![Complex::new(0.7, -0.2)], 0.9).unwrap();
        let vals: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&l| lambda_cayley(&dilate_unchecked(l, &p)) * l.powi(8))
            .collect();
        assert!(vals.iter().all(|v| *v > 1e-3 && *v < 1e3));
        assert!((vals[1] / vals[2] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn distance_examples() {
        let a = SpherePoint::<f64>::north(1);
        assert_eq!(sphere_dist(&a, &a), 0.0);
        assert_abs_diff_eq!(sphere_dist(&a, &a.antipode()), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn round_trips_and_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=3 {
            for _ in 0..1000 {
                let p = random_point(&mut rng, n, 3.0);
                let s = cayley(&p);
                let nn: f64 = s.zeta.iter().map(|c| c.norm_sqr()).sum();
                assert!((nn - 1.0).abs() < 1e-14);
                let back = cayley_inv(&s).unwrap();
                for (a, b) in back.to_real().iter().zip(p.to_real()) {
                    assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
                }
                let q = random_point(&mut rng, n, 3.0);
                let lhs = sphere_dist(&cayley(&p), &cayley(&q));
                let rhs = koranyi_dist(&p, &q) * distance_factor(&p) * distance_factor(&q);
                assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs), "{lhs} vs {rhs}");
            }
            for _ in 0..1000 {
                let s = random_sphere_point(&mut rng, n);
                if sphere_dist(&s, &SpherePoint::pole(n)) < 1e-2 {
                    continue;
                }
                let s2 = cayley(&cayley_inv(&s).unwrap());
                for (a, b) in s.zeta.iter().zip(&s2.zeta) {
                    assert!((a - b).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn chart_inverse_and_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_point(&mut rng, 1, 1.0);
        let ch = ConformalChart::new(w.clone(), 0.05).unwrap();
        for _ in 0..100 {
            let p = random_point(&mut rng, 1, 4.0);
            let q = ch.inverse_map(&ch.map(&p)).unwrap();
            for (a, b) in q.to_real().iter().zip(p.to_real()) {
                assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
            }
            let s = ch.map(&p);
            assert_abs_diff_eq!(
                ch.inverse_jacobian(&s).unwrap() * ch.jacobian(&p),
                1.0,
                epsilon = 1e-10
            );
        }
        let xi = random_point(&mut rng, 1, 1.0);
        let alt = ConformalChart::dilate_then_translate(&xi, 0.3).unwrap();
        let p = random_point(&mut rng, 1, 1.0);
        let direct = cayley(&dilate_unchecked(0.3, &group_mul(&xi, &p)));
        let got = alt.map(&p);
        for (a, b) in direct.zeta.iter().zip(&got.zeta) {
            assert!((a - b).norm() < 1e-13);
        }
        assert_eq!(ch.inverse().inverse(), ch);
        assert!(ConformalChart::new(w, 0.0).is_err());
    }

    #[test]
    fn constant_pulls_back_to_bubble_shape() {
        let ch = ConformalChart::identity(1);
        let u0 = 0.5;
        let big_u = conformal_pullback(|_| u0, &ch, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_point(&mut rng, 1, 2.0);
            let expect = u0 * 2.0 / cayley_rho(&p).sqrt();
            assert!((big_u(&p) - expect).abs() < 1e-14);
        }
        // push back
        let shape = |p: &HeisPoint<f64>| 1.0 / cayley_rho(p).sqrt() + 0.1 * p.t.sin();
        let u = conformal_pushforward(shape, &ch, 1.0);
        let back = conformal_pullback(u, &ch, 1.0);
        for _ in 0..50 {
            let p = random_point(&mut rng, 1, 2.0);
            assert!((back(&p) - shape(&p)).abs() < 1e-10);
        }
    }

    #[test]
    fn ball_inclusions_hold() {
        assert_eq!(ball_inclusion_violations(1, 1000, 9), 0);
        assert_eq!(ball_inclusion_violations(2, 1000, 10), 0);
    }

    #[test]
    fn kappa_calibration_value() {
        assert_abs_diff_eq!(
            lambda_cayley_lebesgue_integral(1),
            4.0 * std::f64::consts::PI.powi(2),
            epsilon = 1e-12
        );
        let (kappa, leb) = calibrate_kappa(1, 64);
        assert!((leb / lambda_cayley_lebesgue_integral(1) - 1.0).abs() < 1e-6);
        assert!((kappa - 4.0).abs() < 1e-5);
    }
}
