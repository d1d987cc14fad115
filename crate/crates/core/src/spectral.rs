//! Bidegree harmonics on S^{2N+1}, spectral transforms and the intertwining
//! operators A_{2k}.
//!
//! The real orthonormal basis is built per bidegree (j, l) and torus
//! character c = α − β by Gram–Schmidt on monomials z^α z̄^β, using closed
//! form moments, after projecting out the lower blocks H_{j−m, l−m}.
//! Different characters are exactly orthogonal, so every coefficient is
//! real.  A complex y ∈ H_{j,l} (j > l) yields √2 Re y filed under (j,l) and
//! √2 Im y filed under (l,j); on the diagonal, characters c and −c pair up
//! the same way and c = 0 is already real.  Both members of a pair share the
//! eigenvalue λ_j λ_l of A_{2k}, so nothing is lost for real functions.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::cayley::sphere_total_mass;
use crate::error::{Error, Result};
use crate::special::{binomial, factorial, gamma_ratio};
use crate::sphere::{Layout, SphereQuadrature};
use crate::SPoint;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

type C64 = Complex<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bidegree {
    pub j: usize,
    pub l: usize,
}

/// dim H_{j,l} = C(j+N−1, j)·C(l+N−1, l)·(j+l+N)/N.
pub fn dim_h(j: usize, l: usize, n: usize) -> Result<u128> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let over = || Error::InvalidParameter(format!("dim_H({j},{l},{n}) overflows"));
    let a = binomial((j + n - 1) as u64, j as u64).ok_or_else(over)?;
    let b = binomial((l + n - 1) as u64, l as u64).ok_or_else(over)?;
    let prod = a
        .checked_mul(b)
        .and_then(|x| x.checked_mul((j + l + n) as u128))
        .ok_or_else(over)?;
    Ok(prod / n as u128)
}

/// ∫ z^α z̄^β dv_S: zero unless α = β, then mass·α!·N!/(N+|α|)!.
pub fn monomial_moment(alpha: &[usize], beta: &[usize], total_mass: f64) -> f64 {
    if alpha != beta {
        return 0.0;
    }
    let n = alpha.len() - 1;
    let deg: usize = alpha.iter().sum();
    let num: f64 = alpha.iter().map(|&a| factorial(a)).product();
    total_mass * num * factorial(n) / factorial(n + deg)
}

/// λ_j(k) = Γ((Q+2k)/4 + j)/Γ((Q−2k)/4 + j).
pub fn lambda_jk(j: usize, k: f64, q: f64) -> Result<f64> {
    if !(k > 0.0 && 2.0 * k < q) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < 2k < Q, got k={k}, Q={q}"
        )));
    }
    let jf = j as f64;
    Ok(gamma_ratio(
        (q + 2.0 * k) / 4.0 + jf,
        (q - 2.0 * k) / 4.0 + jf,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    /// character 0 on the diagonal: the polynomial is already real
    Real,
    /// √2 Re y
    Re,
    /// √2 Im y
    Im,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub alpha: Vec<u8>,
    pub beta: Vec<u8>,
    pub coeff: f64,
}

/// One real basis function: `scale · part(Σ coeff z^α z̄^β)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisElement {
    pub block: Bidegree,
    pub m: usize,
    pub part: Part,
    pub character: Vec<i32>,
    pub terms: Vec<Term>,
}

impl BasisElement {
    fn scale(&self) -> f64 {
        match self.part {
            Part::Real => 1.0,
            _ => std::f64::consts::SQRT_2,
        }
    }

    /// The underlying complex polynomial at ζ.
    pub fn complex_value(&self, zeta: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for t in &self.terms {
            let mut v = C64::new(t.coeff, 0.0);
            for (k, z) in zeta.iter().enumerate() {
                if t.alpha[k] > 0 {
                    v *= z.powu(t.alpha[k] as u32);
                }
                if t.beta[k] > 0 {
                    v *= z.conj().powu(t.beta[k] as u32);
                }
            }
            acc += v;
        }
        acc
    }

    /// Real basis value (valid off the sphere as the natural polynomial extension).
    pub fn value(&self, zeta: &[C64]) -> f64 {
        let y = self.complex_value(zeta);
        match self.part {
            Part::Real => y.re,
            Part::Re => self.scale() * y.re,
            Part::Im => self.scale() * y.im,
        }
    }

    /// Radial profile for N = 1 at s = |ζ_1|²: Σ coeff s^{(a1+b1)/2}(1−s)^{(a2+b2)/2}.
    fn radial_n1(&self, s: f64) -> f64 {
        let rs = s.max(0.0).sqrt();
        let rc = (1.0 - s).max(0.0).sqrt();
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * rs.powi((t.alpha[0] + t.beta[0]) as i32)
                    * rc.powi((t.alpha[1] + t.beta[1]) as i32)
            })
            .sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicBasis {
    pub n: usize,
    pub jmax: usize,
    pub lmax: usize,
    pub total_mass: f64,
    pub elements: Vec<BasisElement>,
    /// element index ranges per block, ordered by (j, l)
    pub blocks: BTreeMap<Bidegree, (usize, usize)>,
}

type Key = (Vec<u8>, Vec<u8>);
/// Exact polynomial: rational coefficients on monomials z^α z̄^β.
type Poly = BTreeMap<Key, BigRational>;

struct ExactMoments {
    n: usize,
    fact: Vec<BigInt>,
}

impl ExactMoments {
    fn new(n: usize, max_deg: usize) -> Self {
        let mut fact = vec![BigInt::one()];
        for i in 1..=(n + max_deg + 1) {
            let next = &fact[i - 1] * BigInt::from(i);
            fact.push(next);
        }
        ExactMoments { n, fact }
    }

    /// moment for unit total mass: α!·N!/(N+|α|)!
    fn moment(&self, alpha: &[usize]) -> BigRational {
        let deg: usize = alpha.iter().sum();
        let mut num = self.fact[self.n].clone();
        for &a in alpha {
            num *= &self.fact[a];
        }
        BigRational::new(num, self.fact[self.n + deg].clone())
    }

    fn inner(&self, p: &Poly, q: &Poly) -> BigRational {
        let mut acc = BigRational::zero();
        for ((a, b), x) in p {
            for ((g, d), y) in q {
                // ⟨z^a z̄^b, z^g z̄^d⟩ = ∫ z^{a+d} z̄^{b+g}
                let ad: Vec<usize> = a.iter().zip(d).map(|(u, v)| (*u + *v) as usize).collect();
                let same = b
                    .iter()
                    .zip(g)
                    .zip(&ad)
                    .all(|((u, v), w)| (*u + *v) as usize == *w);
                if same {
                    acc += x * y * self.moment(&ad);
                }
            }
        }
        acc
    }
}

fn poly_axpy(p: &mut Poly, a: &BigRational, q: &Poly) {
    for (k, v) in q {
        let e = p.entry(k.clone()).or_insert_with(BigRational::zero);
        *e += a * v;
    }
    p.retain(|_, v| !v.is_zero());
}

fn multi_indices(len: usize, total: usize) -> Vec<Vec<u8>> {
    if len == 1 {
        return vec![vec![total as u8]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in multi_indices(len - 1, total - first) {
            rest.insert(0, first as u8);
            out.push(rest);
        }
    }
    out
}

impl HarmonicBasis {
    /// Orthonormal real basis of ⊕_{j ≤ jmax, l ≤ lmax} H_{j,l} for dv_S of the default mass.
    pub fn build(n: usize, jmax: usize, lmax: usize) -> Result<Self> {
        Self::build_with_mass(n, jmax, lmax, sphere_total_mass(n))
    }

    pub fn build_with_mass(n: usize, jmax: usize, lmax: usize, total_mass: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if jmax != lmax {
            return Err(Error::InvalidParameter(
                "real functions need a conjugation-symmetric truncation (jmax = lmax)".into(),
            ));
        }
        if jmax > 32 {
            return Err(Error::InvalidParameter(
                "jmax > 32 is outside the supported range".into(),
            ));
        }
        // complex orthogonal polynomials (with their squared norms for unit
        // mass) per (j, l, character), j ≥ l; exact rational arithmetic
        let exact = ExactMoments::new(n, 2 * jmax);
        let mut groups: BTreeMap<(usize, usize, Vec<i32>), Vec<(Poly, BigRational)>> =
            BTreeMap::new();
        let mut elements = Vec::new();
        let mut per_block: BTreeMap<Bidegree, Vec<BasisElement>> = BTreeMap::new();
        for deg in 0..=(2 * jmax) {
            for l in 0..=jmax.min(deg / 2) {
                let j = deg - l;
                if j > jmax {
                    continue;
                }
                // monomials of bidegree (j, l) grouped by character
                let mut by_char: BTreeMap<Vec<i32>, Vec<Key>> = BTreeMap::new();
                for a in multi_indices(n + 1, j) {
                    for b in multi_indices(n + 1, l) {
                        let c: Vec<i32> = a
                            .iter()
                            .zip(&b)
                            .map(|(x, y)| *x as i32 - *y as i32)
                            .collect();
                        by_char.entry(c).or_default().push((a.clone(), b));
                    }
                }
                let mut count = 0usize;
                for (c, monos) in by_char {
                    if j == l && c.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0) {
                        continue; // conjugate of a positive character
                    }
                    let mut basis_so_far: Vec<(Poly, BigRational)> = Vec::new();
                    for m in 1..=l {
                        if let Some(v) = groups.get(&(j - m, l - m, c.clone())) {
                            basis_so_far.extend(v.iter().cloned());
                        }
                    }
                    let n_lower = basis_so_far.len();
                    for key in monos {
                        let mut v = Poly::new();
                        v.insert(key, BigRational::one());
                        let mono = v.clone();
                        for (y, ny) in &basis_so_far {
                            let proj = exact.inner(&mono, y) / ny;
                            if !proj.is_zero() {
                                poly_axpy(&mut v, &-proj, y);
                            }
                        }
                        let nv = exact.inner(&v, &v);
                        if !nv.is_zero() {
                            basis_so_far.push((v, nv));
                        }
                    }
                    let fresh: Vec<(Poly, BigRational)> = basis_so_far.split_off(n_lower);
                    let zero_char = c.iter().all(|&x| x == 0);
                    for (m, (y, ny)) in fresh.iter().enumerate() {
                        // coeff/‖y‖ with ‖y‖² = ny·mass, formed as a signed square root
                        let terms: Vec<Term> = y
                            .iter()
                            .map(|((a, b), x)| {
                                let r = (x * x / ny).to_f64().unwrap_or(f64::NAN);
                                let sign = if x.is_negative() { -1.0 } else { 1.0 };
                                Term {
                                    alpha: a.clone(),
                                    beta: b.clone(),
                                    coeff: sign * (r / total_mass).sqrt(),
                                }
                            })
                            .collect();
                        let mk = |block: Bidegree, part: Part| BasisElement {
                            block,
                            m,
                            part,
                            character: c.clone(),
                            terms: terms.clone(),
                        };
                        if j == l && zero_char {
                            per_block
                                .entry(Bidegree { j, l })
                                .or_default()
                                .push(mk(Bidegree { j, l }, Part::Real));
                            count += 1;
                        } else if j == l {
                            per_block
                                .entry(Bidegree { j, l })
                                .or_default()
                                .push(mk(Bidegree { j, l }, Part::Re));
                            per_block
                                .entry(Bidegree { j, l })
                                .or_default()
                                .push(mk(Bidegree { j, l }, Part::Im));
                            count += 2;
                        } else {
                            per_block
                                .entry(Bidegree { j, l })
                                .or_default()
                                .push(mk(Bidegree { j, l }, Part::Re));
                            per_block
                                .entry(Bidegree { j: l, l: j })
                                .or_default()
                                .push(mk(Bidegree { j: l, l: j }, Part::Im));
                            count += 1;
                        }
                    }
                    if j == l && !zero_char {
                        let neg: Vec<i32> = c.iter().map(|x| -x).collect();
                        let conj: Vec<(Poly, BigRational)> = fresh
                            .iter()
                            .map(|(p, ny)| {
                                let q: Poly = p
                                    .iter()
                                    .map(|((a, b), x)| ((b.clone(), a.clone()), x.clone()))
                                    .collect();
                                (q, ny.clone())
                            })
                            .collect();
                        groups.insert((j, l, neg), conj);
                    }
                    groups.insert((j, l, c), fresh);
                }
                let expect = dim_h(j, l, n)? as usize;
                if count != expect {
                    return Err(Error::SingularGram { j, l });
                }
            }
        }
        let mut blocks = BTreeMap::new();
        for (b, els) in per_block {
            let start = elements.len();
            for (m, mut e) in els.into_iter().enumerate() {
                e.m = m;
                elements.push(e);
            }
            blocks.insert(b, (start, elements.len()));
        }
        Ok(HarmonicBasis {
            n,
            jmax,
            lmax,
            total_mass,
            elements,
            blocks,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Index of the m-th element of block (j, l).
    pub fn index(&self, j: usize, l: usize, m: usize) -> Option<usize> {
        let (a, b) = *self.blocks.get(&Bidegree { j, l })?;
        (a + m < b).then_some(a + m)
    }

    /// Values of all basis functions at one point.
    pub fn eval_all(&self, p: &SPoint) -> Vec<f64> {
        self.elements.iter().map(|e| e.value(&p.zeta)).collect()
    }

    /// Per-element multiplier λ_j(k)·λ_l(k).
    pub fn multipliers(&self, k: f64) -> Result<Vec<f64>> {
        let q = 2.0 * self.n as f64 + 2.0;
        let lam: Vec<f64> = (0..=self.jmax.max(self.lmax))
            .map(|j| lambda_jk(j, k, q))
            .collect::<Result<_>>()?;
        Ok(self
            .elements
            .iter()
            .map(|e| lam[e.block.j] * lam[e.block.l])
            .collect())
    }
}

/// Coefficients in a real orthonormal basis.
#[derive(Clone, Debug)]
pub struct SpectralFunction {
    pub basis: Arc<HarmonicBasis>,
    pub coeffs: Vec<f64>,
}

impl SpectralFunction {
    pub fn zero(basis: Arc<HarmonicBasis>) -> Self {
        let n = basis.len();
        SpectralFunction {
            basis,
            coeffs: vec![0.0; n],
        }
    }

    pub fn from_coeffs(basis: Arc<HarmonicBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::Dimension {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        Ok(SpectralFunction { basis, coeffs })
    }

    /// The constant function with value `c`.
    pub fn constant(basis: Arc<HarmonicBasis>, c: f64) -> Self {
        let mut f = Self::zero(basis);
        let y00 = 1.0 / f.basis.total_mass.sqrt();
        f.coeffs[0] = c / y00;
        f
    }

    pub fn eval(&self, p: &SPoint) -> f64 {
        self.basis
            .elements
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, c)| c * e.value(&p.zeta))
            .sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        SpectralFunction {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    /// self + a·other
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        SpectralFunction {
            basis: self.basis.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| x + a * y)
                .collect(),
        }
    }

    pub fn l2_norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Fraction of Σc² sitting in the outermost shell j = jmax or l = lmax.
    pub fn tail_energy(&self) -> f64 {
        let total = self.l2_norm_sqr();
        if total == 0.0 {
            return 0.0;
        }
        let tail: f64 = self
            .basis
            .elements
            .iter()
            .zip(&self.coeffs)
            .filter(|(e, _)| e.block.j == self.basis.jmax || e.block.l == self.basis.lmax)
            .map(|(_, c)| c * c)
            .sum();
        tail / total
    }

    /// Coefficient-wise multiplication by (λ_j(k) λ_l(k))^power.
    pub fn apply_multiplier(&self, k: f64, power: f64) -> Result<Self> {
        let mul = self.basis.multipliers(k)?;
        Ok(SpectralFunction {
            basis: self.basis.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&mul)
                .map(|(c, m)| c * m.powf(power))
                .collect(),
        })
    }
}

/// A_{2k} u.
pub fn apply_a2k(u: &SpectralFunction, k: f64) -> Result<SpectralFunction> {
    u.apply_multiplier(k, 1.0)
}

/// A_{2k}^{-1} f.
pub fn apply_a2k_inverse(f: &SpectralFunction, k: f64) -> Result<SpectralFunction> {
    f.apply_multiplier(k, -1.0)
}

/// (Σ λ_jλ_l c²)^{1/2}
pub fn norm_hk(u: &SpectralFunction, k: f64) -> Result<f64> {
    let mul = u.basis.multipliers(k)?;
    Ok(u.coeffs
        .iter()
        .zip(&mul)
        .map(|(c, m)| m * c * c)
        .sum::<f64>()
        .sqrt())
}

/// (Σ c²/(λ_jλ_l))^{1/2}
pub fn norm_h_minus_k(f: &SpectralFunction, k: f64) -> Result<f64> {
    let mul = f.basis.multipliers(k)?;
    Ok(f.coeffs
        .iter()
        .zip(&mul)
        .map(|(c, m)| c * c / m)
        .sum::<f64>()
        .sqrt())
}

/// ⟨f, u⟩ = ∫ f u dv_S = Σ c(f) c(u).
pub fn pairing(f: &SpectralFunction, u: &SpectralFunction) -> f64 {
    f.coeffs.iter().zip(&u.coeffs).map(|(a, b)| a * b).sum()
}

/// Analysis/synthesis between node values of a quadrature and coefficients.
pub struct Transform {
    pub basis: Arc<HarmonicBasis>,
    pub quad: Arc<SphereQuadrature>,
    fast: Option<FastN1>,
}

struct FastN1 {
    n_s: usize,
    n_phi: usize,
    s_weights: Vec<f64>,
    cmax: i32,
    /// e^{i c φ_i}, indexed [(c + cmax) * n_phi + i]
    phase: Vec<C64>,
    /// R_e(s_i), indexed [e * n_s + i]
    radial: Vec<f64>,
    /// weight normalization dv_S/(ds dφ1 dφ2)
    scale: f64,
}

impl Transform {
    pub fn new(basis: Arc<HarmonicBasis>, quad: Arc<SphereQuadrature>) -> Result<Self> {
        if basis.n != quad.n {
            return Err(Error::Dimension {
                expected: basis.n,
                got: quad.n,
            });
        }
        let fast = match &quad.layout {
            Layout::Tensor {
                s_nodes,
                s_weights,
                n_phi,
            } if basis.n == 1 => {
                let n_s = s_nodes.len();
                let cmax = basis.jmax.max(basis.lmax) as i32;
                let h = 2.0 * std::f64::consts::PI / *n_phi as f64;
                let mut phase = Vec::with_capacity((2 * cmax as usize + 1) * n_phi);
                for c in -cmax..=cmax {
                    for i in 0..*n_phi {
                        phase.push(C64::from_polar(1.0, c as f64 * h * i as f64));
                    }
                }
                let mut radial = Vec::with_capacity(basis.len() * n_s);
                for e in &basis.elements {
                    for &s in s_nodes {
                        radial.push(e.radial_n1(s));
                    }
                }
                let scale = quad.total_mass / crate::sphere::euclidean_sphere_area(1) * 0.5 * h * h;
                Some(FastN1 {
                    n_s,
                    n_phi: *n_phi,
                    s_weights: s_weights.clone(),
                    cmax,
                    phase,
                    radial,
                    scale,
                })
            }
            _ => None,
        };
        Ok(Transform { basis, quad, fast })
    }

    /// Standard transform for the basis with a rule exact to `factor`× the band limit.
    pub fn with_oversampling(basis: Arc<HarmonicBasis>, factor: usize) -> Result<Self> {
        let d = (basis.jmax + basis.lmax).max(1) * factor;
        let quad = Arc::new(SphereQuadrature::product(basis.n, d, basis.total_mass));
        Self::new(basis, quad)
    }

    pub fn node_values(&self, f: impl Fn(&SPoint) -> f64 + Sync + Send) -> Vec<f64> {
        self.quad.nodes.par_iter().map(f).collect()
    }

    /// c_e = Σ_i w_i v_i y_e(ζ_i).
    pub fn analyze_values(&self, v: &[f64]) -> SpectralFunction {
        assert_eq!(v.len(), self.quad.len());
        let coeffs = match &self.fast {
            Some(fast) => self.analyze_fast(fast, v),
            None => {
                let nb = self.basis.len();
                self.quad
                    .nodes
                    .par_iter()
                    .zip(self.quad.weights.par_iter())
                    .zip(v.par_iter())
                    .fold(
                        || vec![0.0; nb],
                        |mut acc, ((p, w), val)| {
                            if *val != 0.0 {
                                for (a, e) in acc.iter_mut().zip(&self.basis.elements) {
                                    *a += w * val * e.value(&p.zeta);
                                }
                            }
                            acc
                        },
                    )
                    .reduce(
                        || vec![0.0; nb],
                        |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
                    )
            }
        };
        SpectralFunction {
            basis: self.basis.clone(),
            coeffs,
        }
    }

    pub fn analyze(&self, f: impl Fn(&SPoint) -> f64 + Sync + Send) -> SpectralFunction {
        self.analyze_values(&self.node_values(f))
    }

    /// Node values of Σ c_e y_e.
    pub fn synthesize_values(&self, u: &SpectralFunction) -> Vec<f64> {
        match &self.fast {
            Some(fast) => self.synthesize_fast(fast, u),
            None => self.quad.nodes.par_iter().map(|p| u.eval(p)).collect(),
        }
    }

    fn analyze_fast(&self, fast: &FastN1, v: &[f64]) -> Vec<f64> {
        let (n_s, n_phi, cmax) = (fast.n_s, fast.n_phi, fast.cmax);
        let nc = (2 * cmax + 1) as usize;
        // F_is(c1, c2) = Σ v e^{-i(c1φ1 + c2φ2)}
        let spectra: Vec<Vec<C64>> = (0..n_s)
            .into_par_iter()
            .map(|is| {
                let mut g = vec![C64::new(0.0, 0.0); n_phi * nc]; // [i1][c2]
                for i1 in 0..n_phi {
                    let row = &v[(is * n_phi + i1) * n_phi..(is * n_phi + i1 + 1) * n_phi];
                    for ci in 0..nc {
                        let ph = &fast.phase[ci * n_phi..(ci + 1) * n_phi];
                        let mut acc = C64::new(0.0, 0.0);
                        for (x, e) in row.iter().zip(ph) {
                            acc += e.conj() * x;
                        }
                        g[i1 * nc + ci] = acc;
                    }
                }
                let mut f = vec![C64::new(0.0, 0.0); nc * nc]; // [c1][c2]
                for c1 in 0..nc {
                    let ph = &fast.phase[c1 * n_phi..(c1 + 1) * n_phi];
                    for c2 in 0..nc {
                        let mut acc = C64::new(0.0, 0.0);
                        for i1 in 0..n_phi {
                            acc += ph[i1].conj() * g[i1 * nc + c2];
                        }
                        f[c1 * nc + c2] = acc;
                    }
                }
                f
            })
            .collect();
        self.basis
            .elements
            .par_iter()
            .enumerate()
            .map(|(ei, e)| {
                let c1 = (e.character[0] + cmax) as usize;
                let c2 = (e.character[1] + cmax) as usize;
                let mut acc = 0.0;
                for is in 0..n_s {
                    let fv = spectra[is][c1 * nc + c2];
                    let g = match e.part {
                        Part::Real => fv.re,
                        Part::Re => std::f64::consts::SQRT_2 * fv.re,
                        Part::Im => -std::f64::consts::SQRT_2 * fv.im,
                    };
                    acc += fast.s_weights[is] * fast.radial[ei * n_s + is] * g;
                }
                acc * fast.scale
            })
            .collect()
    }

    fn synthesize_fast(&self, fast: &FastN1, u: &SpectralFunction) -> Vec<f64> {
        let (n_s, n_phi, cmax) = (fast.n_s, fast.n_phi, fast.cmax);
        let nc = (2 * cmax + 1) as usize;
        let blocks: Vec<Vec<f64>> = (0..n_s)
            .into_par_iter()
            .map(|is| {
                let mut a = vec![C64::new(0.0, 0.0); nc * nc];
                for (ei, (e, c)) in self.basis.elements.iter().zip(&u.coeffs).enumerate() {
                    if *c == 0.0 {
                        continue;
                    }
                    let r = c * fast.radial[ei * n_s + is];
                    let idx =
                        (e.character[0] + cmax) as usize * nc + (e.character[1] + cmax) as usize;
                    a[idx] += match e.part {
                        Part::Real => C64::new(r, 0.0),
                        Part::Re => C64::new(std::f64::consts::SQRT_2 * r, 0.0),
                        Part::Im => C64::new(0.0, -std::f64::consts::SQRT_2 * r),
                    };
                }
                // B(c1, i2) = Σ_c2 A(c1,c2) e^{i c2 φ2}
                let mut b = vec![C64::new(0.0, 0.0); nc * n_phi];
                for c1 in 0..nc {
                    for c2 in 0..nc {
                        let av = a[c1 * nc + c2];
                        if av == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let ph = &fast.phase[c2 * n_phi..(c2 + 1) * n_phi];
                        for i2 in 0..n_phi {
                            b[c1 * n_phi + i2] += av * ph[i2];
                        }
                    }
                }
                let mut out = vec![0.0; n_phi * n_phi];
                for c1 in 0..nc {
                    let ph = &fast.phase[c1 * n_phi..(c1 + 1) * n_phi];
                    let brow = &b[c1 * n_phi..(c1 + 1) * n_phi];
                    if brow.iter().all(|x| *x == C64::new(0.0, 0.0)) {
                        continue;
                    }
                    for i1 in 0..n_phi {
                        let e = ph[i1];
                        let o = &mut out[i1 * n_phi..(i1 + 1) * n_phi];
                        for (oi, bv) in o.iter_mut().zip(brow) {
                            *oi += (e * bv).re;
                        }
                    }
                }
                out
            })
            .collect();
        blocks.concat()
    }
}

/// Ambient-derivative form of A_2 at a sphere point:
/// A_2 f = −Δ'f + (N/2)E f + ¼(E² + ∂_θ²) f + (N²/4) f with Δ' = ¼ Σ(∂²_x + ∂²_y),
/// E the radial (Euler) derivative and ∂_θ the phase rotation.  `f` is any
/// smooth ambient extension; fourth-order central differences with step `h`.
pub fn apply_a2_differential(f: impl Fn(&[C64]) -> f64, s: &SPoint, h: f64) -> f64 {
    let z = &s.zeta;
    let n = z.len() - 1;
    let f0 = f(z);
    let d2 = |g: &dyn Fn(f64) -> f64| {
        (-g(2.0 * h) + 16.0 * g(h) - 30.0 * f0 + 16.0 * g(-h) - g(-2.0 * h)) / (12.0 * h * h)
    };
    let d1 = |g: &dyn Fn(f64) -> f64| {
        (-g(2.0 * h) + 8.0 * g(h) - 8.0 * g(-h) + g(-2.0 * h)) / (12.0 * h)
    };
    let mut lap = 0.0;
    for k in 0..=n {
        for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
            let gk = |e: f64| {
                let mut u = z.to_vec();
                u[k] += dir * e;
                f(&u)
            };
            lap += d2(&gk);
        }
    }
    let radial = |e: f64| {
        let sc = e.exp();
        let u: Vec<C64> = z.iter().map(|c| c * sc).collect();
        f(&u)
    };
    let rot = |th: f64| {
        let ph = C64::from_polar(1.0, th);
        let u: Vec<C64> = z.iter().map(|c| c * ph).collect();
        f(&u)
    };
    let e1 = d1(&radial);
    let e2 = d2(&radial);
    let t2 = d2(&rot);
    let nf = n as f64;
    -0.25 * lap + 0.5 * nf * e1 + 0.25 * (e2 + t2) + 0.25 * nf * nf * f0
}

/// A_2 of a function given only on the sphere (0-homogeneous extension).
pub fn apply_a2_on_sphere(f: impl Fn(&SPoint) -> f64, s: &SPoint, h: f64) -> f64 {
    apply_a2_differential(
        |z: &[C64]| {
            let nrm = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            f(&SPoint {
                zeta: z.iter().map(|c| c / nrm).collect(),
            })
        },
        s,
        h,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::random_sphere_point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimensions() {
        assert_eq!(dim_h(0, 0, 1).unwrap(), 1);
        assert_eq!(dim_h(0, 0, 3).unwrap(), 1);
        assert_eq!(dim_h(1, 0, 1).unwrap(), 2);
        assert_eq!(dim_h(1, 1, 1).unwrap(), 3);
        assert_eq!(dim_h(1, 1, 2).unwrap(), 8);
        assert!(dim_h(32, 32, 3).is_ok());
        assert!(dim_h(1, 1, 0).is_err());
    }

    #[test]
    fn moments() {
        let m = 10.0;
        assert_eq!(monomial_moment(&[1, 0], &[0, 1], m), 0.0);
        assert_eq!(monomial_moment(&[0, 0], &[0, 0], m), m);
        assert!((monomial_moment(&[1, 0], &[1, 0], m) - m / 2.0).abs() < 1e-14);
    }

    #[test]
    fn lambdas() {
        assert!((lambda_jk(0, 1.0, 4.0).unwrap() - 0.5).abs() < 1e-14);
        assert!((lambda_jk(2, 1.0, 4.0).unwrap() - 2.5).abs() < 1e-13);
        assert!(lambda_jk(0, 2.0, 4.0).is_err());
        for j in 0..20 {
            assert!(lambda_jk(j + 1, 0.5, 4.0).unwrap() > lambda_jk(j, 0.5, 4.0).unwrap());
        }
    }

    #[test]
    fn block_counts_match_dimension_formula() {
        for n in 1..=2 {
            let b = HarmonicBasis::build(n, 3, 3).unwrap();
            for (bd, (a, e)) in &b.blocks {
                assert_eq!((e - a) as u128, dim_h(bd.j, bd.l, n).unwrap());
            }
        }
        assert!(HarmonicBasis::build(1, 3, 2).is_err());
    }

    #[test]
    fn constant_element() {
        let b = HarmonicBasis::build(1, 2, 2).unwrap();
        let p = random_sphere_point(&mut ChaCha8Rng::seed_from_u64(1), 1);
        let v = b.elements[0].value(&p.zeta);
        assert!((v - 1.0 / b.total_mass.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gram_identity_under_quadrature() {
        for (n, jm) in [(1usize, 4usize), (2, 2)] {
            let b = Arc::new(HarmonicBasis::build(n, jm, jm).unwrap());
            let q = SphereQuadrature::product(n, 2 * (2 * jm), b.total_mass);
            let vals: Vec<Vec<f64>> = q.nodes.iter().map(|p| b.eval_all(p)).collect();
            for a in 0..b.len() {
                for c in 0..b.len() {
                    let g: f64 = vals
                        .iter()
                        .zip(&q.weights)
                        .map(|(v, w)| w * v[a] * v[c])
                        .sum();
                    let e = if a == c { 1.0 } else { 0.0 };
                    assert!((g - e).abs() < 1e-10, "N={n} ({a},{c}) -> {g}");
                }
            }
        }
    }

    #[test]
    fn a2_eigenvalues_and_extension_independence() {
        let b = HarmonicBasis::build(1, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for e in &b.elements {
            let lam = (e.block.j as f64 + 0.5) * (e.block.l as f64 + 0.5);
            for _ in 0..3 {
                let p = random_sphere_point(&mut rng, 1);
                let got = apply_a2_differential(|z| e.value(z), &p, 1e-3);
                assert!((got - lam * e.value(&p.zeta)).abs() < 1e-7, "{:?}", e.block);
                // same operator through a different extension
                let ext =
                    |z: &[C64]| e.value(z) * z.iter().map(|c| c.norm_sqr()).sum::<f64>().powi(2);
                let got2 = apply_a2_differential(ext, &p, 1e-3);
                assert!((got2 - got).abs() < 1e-6);
            }
        }
        // ζ1 → (3/4) ζ1 and constants → N²/4
        let p = random_sphere_point(&mut rng, 1);
        let got = apply_a2_differential(|z| z[0].re, &p, 1e-3);
        assert!((got - 0.75 * p.zeta[0].re).abs() < 1e-8);
        let got = apply_a2_differential(|_| 1.0, &p, 1e-3);
        assert!((got - 0.25).abs() < 1e-8);
    }

    #[test]
    fn fast_transform_matches_direct() {
        let b = Arc::new(HarmonicBasis::build(1, 5, 5).unwrap());
        let t = Transform::with_oversampling(b.clone(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        use rand::Rng;
        let coeffs: Vec<f64> = (0..b.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = SpectralFunction::from_coeffs(b.clone(), coeffs.clone()).unwrap();
        let fast = t.synthesize_values(&u);
        for (i, p) in t.quad.nodes.iter().enumerate().step_by(97) {
            assert!((fast[i] - u.eval(p)).abs() < 1e-11);
        }
        let back = t.analyze_values(&fast);
        for (a, c) in back.coeffs.iter().zip(&coeffs) {
            assert!((a - c).abs() < 1e-11);
        }
    }
}
