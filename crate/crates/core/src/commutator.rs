//! Three-commutator H(u,v) = L(uv) − u·Lv − v·Lu for L = L_2 = −Δ_b.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::heisenberg::{conformal_l2, horizontal_gradient, ScalarFieldH};
use crate::Point;

/// Real polynomial in (x_1, y_1, …, t) of one Heisenberg point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyH {
    /// (coefficient, exponents of x_1, y_1, …, x_N, y_N, t)
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl PolyH {
    /// Random polynomial with `n_terms` monomials of total degree ≤ `degree`.
    pub fn random(rng: &mut impl Rng, n: usize, degree: u32, n_terms: usize) -> Self {
        let terms = (0..n_terms)
            .map(|_| {
                let mut left = rng.gen_range(0..=degree);
                let mut e = vec![0u32; 2 * n + 1];
                while left > 0 {
                    e[rng.gen_range(0..2 * n + 1)] += 1;
                    left -= 1;
                }
                (rng.gen_range(-1.0..1.0), e)
            })
            .collect();
        PolyH { terms }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        let mut coords: Vec<f64> = p.z.iter().flat_map(|z| [z.re, z.im]).collect();
        coords.push(p.t);
        self.terms
            .iter()
            .map(|(c, e)| {
                c * coords
                    .iter()
                    .zip(e)
                    .map(|(x, k)| x.powi(*k as i32))
                    .product::<f64>()
            })
            .sum()
    }
}

/// Central differences at h and h/2 combined by Richardson extrapolation.
fn richardson(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (4.0 * f(0.5 * h) - f(h)) / 3.0
}

/// H^{L_2}(u, v)(p) with difference step h (fourth order).
pub fn three_commutator(
    u: impl Fn(&Point) -> f64,
    v: impl Fn(&Point) -> f64,
    p: &Point,
    h: f64,
) -> f64 {
    let (u0, v0) = (u(p), v(p));
    richardson(
        |h| {
            let uv = ScalarFieldH::with_step(|q: &Point| u(q) * v(q), h);
            let fu = ScalarFieldH::with_step(&u, h);
            let fv = ScalarFieldH::with_step(&v, h);
            conformal_l2(&uv, p) - u0 * conformal_l2(&fv, p) - v0 * conformal_l2(&fu, p)
        },
        h,
    )
}

/// −½ Σ_j (X_ju·X_jv + Y_ju·Y_jv), fourth-order differences.
pub fn commutator_gradient_form(
    u: impl Fn(&Point) -> f64,
    v: impl Fn(&Point) -> f64,
    p: &Point,
    h: f64,
) -> f64 {
    let grad = |f: &dyn Fn(&Point) -> f64| -> Vec<f64> {
        let a = horizontal_gradient(&ScalarFieldH::with_step(f, h), p);
        let b = horizontal_gradient(&ScalarFieldH::with_step(f, 0.5 * h), p);
        a.iter().zip(&b).map(|(x, y)| (4.0 * y - x) / 3.0).collect()
    };
    let gu = grad(&u);
    let gv = grad(&v);
    -0.5 * gu.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>()
}
