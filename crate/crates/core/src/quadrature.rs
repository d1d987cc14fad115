//! One-dimensional rules: Gauss–Legendre (Newton on the three-term
//! recurrence), composite/graded panels, periodic trapezoid.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "gauss_legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess, then Newton
        let mut r = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, r);
            dp = d;
            let dx = p / d;
            r -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, r);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - r * r) * dp * dp);
        x[i] = -r;
        x[n - 1 - i] = r;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A 1-D rule as parallel node/weight vectors.
#[derive(Clone, Debug, Default)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Gauss–Legendre on [a, b].
    pub fn gauss(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        Rule1d {
            nodes: x.iter().map(|&xi| c + h * xi).collect(),
            weights: w.iter().map(|&wi| h * wi).collect(),
        }
    }

    /// Gauss–Legendre with `n` points on each panel `[b_i, b_{i+1}]`.
    pub fn composite(breaks: &[f64], n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut out = Rule1d::default();
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let h = 0.5 * (b - a);
            let c = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(&w) {
                out.nodes.push(c + h * xi);
                out.weights.push(h * wi);
            }
        }
        out
    }

    /// Periodic trapezoid on [0, 2π) with `n` equispaced nodes, shifted by `offset`.
    pub fn trapezoid_periodic(n: usize, offset: f64) -> Self {
        let h = 2.0 * PI / n as f64;
        Rule1d {
            nodes: (0..n).map(|i| offset + h * i as f64).collect(),
            weights: vec![h; n],
        }
    }
}

/// Breakpoints on [a, b] refined geometrically towards `a`:
/// a, a+h0, a+h0 q, … then uniform panels no wider than `max_width`.
pub fn graded_breaks(a: f64, b: f64, h0: f64, q: f64, max_width: f64) -> Vec<f64> {
    assert!(b > a && h0 > 0.0 && q > 1.0 && max_width > 0.0);
    let mut br = vec![a];
    let mut h = h0;
    let mut x = a;
    while x + h < b && h < max_width {
        x += h;
        br.push(x);
        h *= q;
    }
    let rest = b - x;
    let m = (rest / max_width).ceil().max(1.0) as usize;
    for i in 1..=m {
        br.push(x + rest * i as f64 / m as f64);
    }
    br
}

/// Rule on the whole real line via x = s·tan(θ), θ ∈ (−π/2, π/2), Gauss in θ.
pub fn tan_mapped(n: usize, scale: f64) -> Rule1d {
    let g = Rule1d::gauss(n, -0.5 * PI, 0.5 * PI);
    let mut out = Rule1d::default();
    for (th, w) in g.nodes.iter().zip(&g.weights) {
        let c = th.cos();
        out.nodes.push(scale * th.tan());
        out.weights.push(w * scale / (c * c));
    }
    out
}
