//! Heisenberg group H^N: group law, dilations, Korányi gauge, the left
//! invariant fields X_j, Y_j, T and the sub-Laplacian, plus integration
//! against dv_H.
//!
//! Derivatives are taken along one-parameter subgroups: X_j f(p) is the
//! s-derivative of f(p·(s e_j, 0)), so a central difference in s is exact
//! up to O(h²) and automatically left invariant.

use num_complex::Complex;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{tan_mapped, Rule1d};

/// A point (z, t) of H^N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeisPoint<T> {
    pub z: Vec<Complex<T>>,
    pub t: T,
}

impl<T: Float> HeisPoint<T> {
    pub fn new(z: Vec<Complex<T>>, t: T) -> Result<Self> {
        if !t.is_finite() || z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("HeisPoint"));
        }
        Ok(HeisPoint { z, t })
    }

    pub fn origin(n: usize) -> Self {
        HeisPoint {
            z: vec![Complex::new(T::zero(), T::zero()); n],
            t: T::zero(),
        }
    }

    /// N, the complex dimension.
    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn z_norm_sqr(&self) -> T {
        self.z.iter().fold(T::zero(), |acc, c| acc + c.norm_sqr())
    }

    /// Flat real coordinates (x_1, y_1, …, x_N, y_N, t).
    pub fn to_real(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(2 * self.z.len() + 1);
        for c in &self.z {
            v.push(c.re);
            v.push(c.im);
        }
        v.push(self.t);
        v
    }

    pub fn from_real(v: &[T]) -> Self {
        let n = v.len() / 2;
        HeisPoint {
            z: (0..n)
                .map(|j| Complex::new(v[2 * j], v[2 * j + 1]))
                .collect(),
            t: v[2 * n],
        }
    }
}

/// Im(Σ z_j conj(z'_j)).
fn im_hermitian<T: Float>(z: &[Complex<T>], w: &[Complex<T>]) -> T {
    z.iter()
        .zip(w)
        .fold(T::zero(), |acc, (a, b)| acc + (a * b.conj()).im)
}

/// (z, t)·(z', t') = (z+z', t+t'+2 Im(z·z̄')).
pub fn group_mul<T: Float>(p: &HeisPoint<T>, q: &HeisPoint<T>) -> HeisPoint<T> {
    debug_assert_eq!(p.dim(), q.dim());
    let two = T::one() + T::one();
    HeisPoint {
        z: p.z.iter().zip(&q.z).map(|(a, b)| a + b).collect(),
        t: p.t + q.t + two * im_hermitian(&p.z, &q.z),
    }
}

pub fn group_inv<T: Float>(p: &HeisPoint<T>) -> HeisPoint<T> {
    HeisPoint {
        z: p.z.iter().map(|c| -c).collect(),
        t: -p.t,
    }
}

/// δ_λ(z, t) = (λz, λ²t).
pub fn dilate<T: Float>(lambda: T, p: &HeisPoint<T>) -> Result<HeisPoint<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::NonPositiveScale(lambda.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(dilate_unchecked(lambda, p))
}

pub(crate) fn dilate_unchecked<T: Float>(lambda: T, p: &HeisPoint<T>) -> HeisPoint<T> {
    HeisPoint {
        z: p.z.iter().map(|c| c * lambda).collect(),
        t: p.t * lambda * lambda,
    }
}

/// (|z|⁴ + t²)^{1/4}
pub fn koranyi_gauge<T: Float>(p: &HeisPoint<T>) -> T {
    let r2 = p.z_norm_sqr();
    (r2 * r2 + p.t * p.t).sqrt().sqrt()
}

/// Left-invariant distance gauge(q⁻¹·p).
pub fn koranyi_dist<T: Float>(p: &HeisPoint<T>, q: &HeisPoint<T>) -> T {
    koranyi_gauge(&group_mul(&group_inv(q), p))
}

/// Lebesgue volume of the unit Korányi ball in R^{2N+1}.
pub fn koranyi_unit_ball_volume(n: usize) -> f64 {
    use crate::special::{factorial, gamma};
    let nf = n as f64;
    std::f64::consts::PI.powi(n as i32) / factorial(n)
        * std::f64::consts::PI.sqrt()
        * gamma(0.5 * nf + 1.0)
        / gamma(0.5 * nf + 1.5)
}

/// Which left-invariant field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    X(usize),
    Y(usize),
    T,
}

/// Point evaluator plus the central-difference step.
pub struct ScalarFieldH<F> {
    pub f: F,
    pub h: f64,
}

impl<F: Fn(&HeisPoint<f64>) -> f64> ScalarFieldH<F> {
    pub fn new(f: F) -> Self {
        ScalarFieldH { f, h: 1e-4 }
    }

    pub fn with_step(f: F, h: f64) -> Self {
        assert!(h > 0.0);
        ScalarFieldH { f, h }
    }

    pub fn eval(&self, p: &HeisPoint<f64>) -> f64 {
        (self.f)(p)
    }
}

/// Right translation p·exp(s·V) for V ∈ {X_j, Y_j, T}.
pub fn flow(p: &HeisPoint<f64>, which: Field, s: f64) -> HeisPoint<f64> {
    let mut q = p.clone();
    match which {
        Field::X(j) => {
            q.z[j].re += s;
            q.t += 2.0 * s * p.z[j].im;
        }
        Field::Y(j) => {
            q.z[j].im += s;
            q.t -= 2.0 * s * p.z[j].re;
        }
        Field::T => q.t += s,
    }
    q
}

/// First-order field applied by central difference.
pub fn vector_field<F: Fn(&HeisPoint<f64>) -> f64>(
    which: Field,
    f: &ScalarFieldH<F>,
    p: &HeisPoint<f64>,
) -> f64 {
    let h = f.h;
    (f.eval(&flow(p, which, h)) - f.eval(&flow(p, which, -h))) / (2.0 * h)
}

/// V² f at p for a horizontal or vertical field.
pub fn second_along<F: Fn(&HeisPoint<f64>) -> f64>(
    which: Field,
    f: &ScalarFieldH<F>,
    p: &HeisPoint<f64>,
    f0: f64,
) -> f64 {
    let h = f.h;
    (f.eval(&flow(p, which, h)) - 2.0 * f0 + f.eval(&flow(p, which, -h))) / (h * h)
}

/// Δ_b f = ¼ Σ_j (X_j² + Y_j²) f.
pub fn sub_laplacian<F: Fn(&HeisPoint<f64>) -> f64>(
    f: &ScalarFieldH<F>,
    p: &HeisPoint<f64>,
) -> f64 {
    let f0 = f.eval(p);
    let mut acc = 0.0;
    for j in 0..p.dim() {
        acc += second_along(Field::X(j), f, p, f0);
        acc += second_along(Field::Y(j), f, p, f0);
    }
    0.25 * acc
}

/// L_2 = −Δ_b.
pub fn conformal_l2<F: Fn(&HeisPoint<f64>) -> f64>(f: &ScalarFieldH<F>, p: &HeisPoint<f64>) -> f64 {
    -sub_laplacian(f, p)
}

/// Horizontal gradient (X_1 f, Y_1 f, …).
pub fn horizontal_gradient<F: Fn(&HeisPoint<f64>) -> f64>(
    f: &ScalarFieldH<F>,
    p: &HeisPoint<f64>,
) -> Vec<f64> {
    let mut g = Vec::with_capacity(2 * p.dim());
    for j in 0..p.dim() {
        g.push(vector_field(Field::X(j), f, p));
        g.push(vector_field(Field::Y(j), f, p));
    }
    g
}

/// dv_H = kappa_H · dLebesgue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarMeasure {
    pub kappa_h: f64,
}

impl Default for HaarMeasure {
    fn default() -> Self {
        HaarMeasure { kappa_h: 1.0 }
    }
}

impl HaarMeasure {
    pub fn new(kappa_h: f64) -> Result<Self> {
        if !(kappa_h > 0.0) || !kappa_h.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa_H = {kappa_h}")));
        }
        Ok(HaarMeasure { kappa_h })
    }

    /// The value fixed by ∫_S f dv_S = ∫_H Λ_C (f∘C) dv_H when dv_S carries
    /// mass 2^{2N+1} N! ω_{2N+1}; see `cayley::calibrate_kappa`.
    pub fn calibrated(n: usize) -> Self {
        HaarMeasure {
            kappa_h: 4f64.powi(n as i32),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Domain {
    /// Axis-aligned box in the real coordinates (x_1, y_1, …, t).
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    KoranyiBall {
        center: HeisPoint<f64>,
        radius: f64,
    },
}

#[derive(Clone, Copy, Debug)]
pub enum Resolution {
    /// midpoint cells per axis (box)
    Cells(usize),
    /// Monte-Carlo samples with a fixed seed (ball)
    Samples { n: usize, seed: u64 },
}

/// ∫_domain f dv_H.
pub fn haar_integral(
    f: impl Fn(&HeisPoint<f64>) -> f64 + Sync,
    domain: &Domain,
    res: Resolution,
    measure: HaarMeasure,
) -> Result<f64> {
    match (domain, res) {
        (Domain::Box { lo, hi }, Resolution::Cells(m)) => {
            if m == 0 {
                return Err(Error::InvalidParameter(
                    "resolution must be positive".into(),
                ));
            }
            if lo.len() != hi.len() || lo.len() % 2 == 0 {
                return Err(Error::Dimension {
                    expected: lo.len() | 1,
                    got: hi.len(),
                });
            }
            if lo.iter().zip(hi).any(|(a, b)| b <= a) {
                return Ok(0.0);
            }
            let d = lo.len();
            let hs: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / m as f64).collect();
            let vol: f64 = hs.iter().product();
            let total = m.pow(d as u32);
            let sum = parallel_sum(total, |idx| {
                let mut rem = idx;
                let mut x = vec![0.0; d];
                for a in 0..d {
                    let i = rem % m;
                    rem /= m;
                    x[a] = lo[a] + (i as f64 + 0.5) * hs[a];
                }
                f(&HeisPoint::from_real(&x))
            });
            Ok(measure.kappa_h * vol * sum)
        }
        (Domain::KoranyiBall { center, radius }, Resolution::Samples { n, seed }) => {
            if n == 0 {
                return Err(Error::InvalidParameter(
                    "resolution must be positive".into(),
                ));
            }
            if *radius <= 0.0 {
                return Ok(0.0);
            }
            // rejection-sample the unit ball inside its bounding box [-1,1]^{2N} × [-1,1]
            let dim = center.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = 0.0;
            for _ in 0..n {
                let p = loop {
                    let z: Vec<Complex<f64>> = (0..dim)
                        .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect();
                    let q = HeisPoint {
                        z,
                        t: rng.gen_range(-1.0..1.0),
                    };
                    if koranyi_gauge(&q) < 1.0 {
                        break q;
                    }
                };
                // center·δ_r(p) covers the ball B_r(center) by left invariance
                acc += f(&group_mul(center, &dilate_unchecked(*radius, &p)));
            }
            let vol = koranyi_unit_ball_volume(dim) * radius.powi(2 * dim as i32 + 2);
            Ok(measure.kappa_h * vol * acc / n as f64)
        }
        _ => Err(Error::InvalidParameter(
            "box needs Cells, Korányi ball needs Samples".into(),
        )),
    }
}

/// Tensor tan-mapped Gauss rule on all of H^N, centered at `center`;
/// `scale` sets the horizontal length scale (t uses scale²).
pub fn haar_integral_whole_space(
    f: impl Fn(&HeisPoint<f64>) -> f64 + Sync,
    dim: usize,
    n_per_axis: usize,
    center: &HeisPoint<f64>,
    scale: f64,
    measure: HaarMeasure,
) -> f64 {
    let rz = tan_mapped(n_per_axis, scale);
    let rt = tan_mapped(n_per_axis, scale * scale);
    let d = 2 * dim + 1;
    let total = n_per_axis.pow(d as u32);
    let rules: Vec<&Rule1d> = (0..d).map(|a| if a + 1 == d { &rt } else { &rz }).collect();
    let sum = parallel_sum(total, |idx| {
        let mut rem = idx;
        let mut x = vec![0.0; d];
        let mut w = 1.0;
        for a in 0..d {
            let i = rem % n_per_axis;
            rem /= n_per_axis;
            x[a] = rules[a].nodes[i];
            w *= rules[a].weights[i];
        }
        // left translation keeps dv_H
        w * f(&group_mul(center, &HeisPoint::from_real(&x)))
    });
    measure.kappa_h * sum
}

pub(crate) fn parallel_sum(total: usize, g: impl Fn(usize) -> f64 + Sync) -> f64 {
    use rayon::prelude::*;
    const CHUNK: usize = 4096;
    let chunks = total.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let hi = ((c + 1) * CHUNK).min(total);
            (c * CHUNK..hi).map(&g).sum::<f64>()
        })
        .sum()
}

/// Random point with components uniform in [-a, a] (t in [-a², a²]).
pub fn random_point(rng: &mut impl Rng, dim: usize, a: f64) -> HeisPoint<f64> {
    HeisPoint {
        z: (0..dim)
            .map(|_| Complex::new(rng.gen_range(-a..a), rng.gen_range(-a..a)))
            .collect(),
        t: rng.gen_range(-a * a..a * a),
    }
}

/// Empirical quasi-triangle constant max d(p,r)/(d(p,q)+d(q,r)) over random triples.
pub fn quasi_triangle_constant(dim: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k: f64 = 0.0;
    for _ in 0..samples {
        let p = random_point(&mut rng, dim, 2.0);
        let q = random_point(&mut rng, dim, 2.0);
        let r = random_point(&mut rng, dim, 2.0);
        let den = koranyi_dist(&p, &q) + koranyi_dist(&q, &r);
        if den > 1e-12 {
            k = k.max(koranyi_dist(&p, &r) / den);
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn product_examples() {
        let p = HeisPoint::new(vec![c(1.0, 0.0)], 0.0).unwrap();
        let q = HeisPoint::new(vec![c(0.0, 1.0)], 0.0).unwrap();
        let r = group_mul(&p, &q);
        assert_eq!(r.z[0], c(1.0, 1.0));
        assert_eq!(r.t, -2.0);
        let e = HeisPoint::origin(1);
        assert_eq!(group_mul(&e, &q), q);
        let i3 = HeisPoint::new(vec![c(0.0, 1.0)], 3.0).unwrap();
        assert_eq!(
            group_inv(&i3),
            HeisPoint::new(vec![c(0.0, -1.0)], -3.0).unwrap()
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(HeisPoint::new(vec![c(f64::NAN, 0.0)], 0.0).is_err());
        assert!(HeisPoint::new(vec![c(0.0, 0.0)], f64::INFINITY).is_err());
        let p = HeisPoint::<f64>::origin(1);
        assert!(dilate(0.0, &p).is_err());
        assert!(dilate(-1.0, &p).is_err());
    }

    #[test]
    fn dilation_example() {
        let p = HeisPoint::new(vec![c(1.0, 0.0)], 3.0).unwrap();
        let d = dilate(2.0, &p).unwrap();
        assert_eq!(d.z[0], c(2.0, 0.0));
        assert_eq!(d.t, 12.0);
    }

    #[test]
    fn gauge_on_axes() {
        let p = HeisPoint::new(vec![c(0.6, -0.8), c(0.0, 0.0)], 0.0).unwrap();
        assert_abs_diff_eq!(koranyi_gauge(&p), 1.0, epsilon = 1e-15);
        let q = HeisPoint::new(vec![c(0.0, 0.0)], -9.0).unwrap();
        assert_abs_diff_eq!(koranyi_gauge(&q), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn works_in_single_precision() {
        let p = HeisPoint::<f32>::new(vec![Complex::new(1.0, 2.0)], 0.5).unwrap();
        let e = group_mul(&p, &group_inv(&p));
        assert_eq!(e, HeisPoint::origin(1));
        let g = koranyi_gauge(&dilate(2.0f32, &p).unwrap()) / koranyi_gauge(&p);
        assert!((g - 2.0).abs() < 1e-6);
    }

    #[test]
    fn fields_on_coordinate_functions() {
        let p = HeisPoint::new(vec![c(0.3, -0.7)], 0.2).unwrap();
        let t = ScalarFieldH::new(|q: &HeisPoint<f64>| q.t);
        assert_abs_diff_eq!(
            vector_field(Field::X(0), &t, &p),
            2.0 * -0.7,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            vector_field(Field::Y(0), &t, &p),
            -2.0 * 0.3,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(vector_field(Field::T, &t, &p), 1.0, epsilon = 1e-10);
        let x = ScalarFieldH::new(|q: &HeisPoint<f64>| q.z[0].re);
        assert_abs_diff_eq!(vector_field(Field::X(0), &x, &p), 1.0, epsilon = 1e-10);
        let one = ScalarFieldH::new(|_: &HeisPoint<f64>| 1.0);
        for w in [Field::X(0), Field::Y(0), Field::T] {
            assert_eq!(vector_field(w, &one, &p), 0.0);
        }
    }

    #[test]
    fn sub_laplacian_polynomials() {
        let p = HeisPoint::new(vec![c(0.4, 1.1)], -0.3).unwrap();
        let r2 = ScalarFieldH::new(|q: &HeisPoint<f64>| q.z_norm_sqr());
        assert_abs_diff_eq!(sub_laplacian(&r2, &p), 1.0, epsilon = 1e-6);
        let t = ScalarFieldH::new(|q: &HeisPoint<f64>| q.t);
        assert_abs_diff_eq!(sub_laplacian(&t, &p), 0.0, epsilon = 1e-6);
        // ρ^{-1/2} solves −Δ_b(2ρ^{-1/2}) = 2ρ^{-3/2}, ρ = (1+|z|²)²+t²
        let rho = |q: &HeisPoint<f64>| (1.0 + q.z_norm_sqr()).powi(2) + q.t * q.t;
        let w = ScalarFieldH::new(move |q: &HeisPoint<f64>| 2.0 / rho(q).sqrt());
        let lhs = -sub_laplacian(&w, &p);
        assert!((lhs - 2.0 * rho(&p).powf(-1.5)).abs() < 1e-6 * rho(&p).powf(-1.5));
    }

    #[test]
    fn box_and_ball_volumes() {
        let m = HaarMeasure::new(2.5).unwrap();
        let b = Domain::Box {
            lo: vec![0.0; 3],
            hi: vec![1.0; 3],
        };
        assert_abs_diff_eq!(
            haar_integral(|_| 1.0, &b, Resolution::Cells(4), m).unwrap(),
            2.5,
            epsilon = 1e-12
        );
        assert_eq!(
            haar_integral(|_| 0.0, &b, Resolution::Cells(4), m).unwrap(),
            0.0
        );
        assert!(haar_integral(|_| 1.0, &b, Resolution::Cells(0), m).is_err());
        let empty = Domain::Box {
            lo: vec![0.0; 3],
            hi: vec![0.0, 1.0, 1.0],
        };
        assert_eq!(
            haar_integral(|_| 1.0, &empty, Resolution::Cells(3), m).unwrap(),
            0.0
        );
        // unit ball in H^1 has Lebesgue volume π²/2
        assert_abs_diff_eq!(
            koranyi_unit_ball_volume(1),
            std::f64::consts::PI.powi(2) / 2.0,
            epsilon = 1e-12
        );
        let ball = Domain::KoranyiBall {
            center: HeisPoint::new(vec![c(0.5, 0.0)], 1.0).unwrap(),
            radius: 2.0,
        };
        let v = haar_integral(
            |_| 1.0,
            &ball,
            Resolution::Samples { n: 100, seed: 1 },
            HaarMeasure::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(v, 16.0 * std::f64::consts::PI.powi(2) / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn ball_volume_by_box_counting() {
        let b = Domain::Box {
            lo: vec![-1.0; 3],
            hi: vec![1.0; 3],
        };
        let v = haar_integral(
            |q| if koranyi_gauge(q) < 1.0 { 1.0 } else { 0.0 },
            &b,
            Resolution::Cells(120),
            HaarMeasure::default(),
        )
        .unwrap();
        assert!((v / koranyi_unit_ball_volume(1) - 1.0).abs() < 5e-3);
    }

    #[test]
    fn quasi_triangle_constant_is_at_most_two() {
        let k = quasi_triangle_constant(1, 10_000, 7);
        assert!(k >= 0.5 && k <= 2.0, "K = {k}");
    }

    fn point() -> impl Strategy<Value = HeisPoint<f64>> {
        (
            -3.0..3.0f64,
            -3.0..3.0f64,
            -3.0..3.0f64,
            -3.0..3.0f64,
            -5.0..5.0f64,
        )
            .prop_map(|(a, b, c2, d, t)| HeisPoint {
                z: vec![Complex::new(a, b), Complex::new(c2, d)],
                t,
            })
    }

    fn close(p: &HeisPoint<f64>, q: &HeisPoint<f64>, tol: f64) -> bool {
        p.to_real()
            .iter()
            .zip(q.to_real())
            .all(|(a, b)| (a - b).abs() <= tol * (1.0 + a.abs()))
    }

    proptest! {
        #[test]
        fn associativity(p in point(), q in point(), r in point()) {
            let a = group_mul(&group_mul(&p, &q), &r);
            let b = group_mul(&p, &group_mul(&q, &r));
            prop_assert!(close(&a, &b, 1e-12));
        }

        #[test]
        fn inverse_and_involution(p in point()) {
            prop_assert!(close(&group_mul(&p, &group_inv(&p)), &HeisPoint::origin(2), 1e-12));
            prop_assert_eq!(group_inv(&group_inv(&p)), p);
        }

        #[test]
        fn gauge_homogeneity(p in point(), lam in 0.01..10.0f64) {
            let g = koranyi_gauge(&dilate(lam, &p).unwrap());
            prop_assert!((g - lam * koranyi_gauge(&p)).abs() <= 1e-12 * (1.0 + g));
        }

        #[test]
        fn dilations_compose(p in point(), a in 0.1..5.0f64, b in 0.1..5.0f64) {
            let l = dilate(a, &dilate(b, &p).unwrap()).unwrap();
            let r = dilate(a * b, &p).unwrap();
            prop_assert!(close(&l, &r, 1e-12));
            let back = dilate(1.0 / a, &dilate(a, &p).unwrap()).unwrap();
            prop_assert!(close(&back, &p, 1e-12));
        }

        #[test]
        fn distance_left_invariant(a in point(), p in point(), q in point()) {
            let d0 = koranyi_dist(&p, &q);
            let d1 = koranyi_dist(&group_mul(&a, &p), &group_mul(&a, &q));
            prop_assert!((d0 - d1).abs() <= 1e-12 * (1.0 + d0) * 10.0);
            prop_assert_eq!(koranyi_dist(&p, &p), 0.0);
        }

        #[test]
        fn fields_left_invariant(a in point(), p in point()) {
            let f = |q: &HeisPoint<f64>| (0.3 * q.z[0].re - 0.2 * q.t).sin() + q.z[1].im * q.z[0].norm_sqr() * 0.1;
            let base = ScalarFieldH::new(f);
            let a2 = a.clone();
            let shifted = ScalarFieldH::new(move |q: &HeisPoint<f64>| f(&group_mul(&a2, q)));
            let ap = group_mul(&a, &p);
            for w in [Field::X(0), Field::Y(1), Field::T] {
                let l = vector_field(w, &shifted, &p);
                let r = vector_field(w, &base, &ap);
                prop_assert!((l - r).abs() < 1e-6);
            }
        }

        #[test]
        fn sub_laplacian_scaling(p in point(), lam in 0.3..3.0f64) {
            let f = |q: &HeisPoint<f64>| (0.2 * q.z[0].re + 0.1 * q.t).cos() * (1.0 + 0.1 * q.z[1].norm_sqr()).ln();
            let g = ScalarFieldH::new(move |q: &HeisPoint<f64>| f(&dilate(lam, q).unwrap()));
            let lp = dilate(lam, &p).unwrap();
            let l = sub_laplacian(&g, &p);
            let r = lam * lam * sub_laplacian(&ScalarFieldH::new(f), &lp);
            prop_assert!((l - r).abs() < 1e-5 * (1.0 + r.abs()));
        }
    }
}
