//! Korányi-homogeneous kernels on H^1 and their action on grid fields:
//! Riesz potentials by direct group convolution, the Green kernel of −Δ_b
//! (constant fitted, not assumed) and the principal-value form of
//! (−Δ_b)^{α/2}.  Measures are Lebesgue dx dy dt and every kernel constant is
//! normalized to 1 unless fitted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::heisenberg::{group_inv, group_mul, koranyi_gauge, koranyi_unit_ball_volume};
use crate::quadrature::Rule1d;
use crate::Point;
use num_complex::Complex;

const Q1: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// R_α = c·|x|^{α−Q}, 0 < α < Q
    Riesz,
    /// G_{2k} = c·|x|^{2k−Q}; `alpha` holds 2k
    Green,
    /// K_{2k} = c·|x|^{−Q−2k}; `alpha` holds 2k
    Hyper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub alpha: f64,
    pub constant: f64,
    pub kind: KernelKind,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, alpha: f64, constant: f64) -> Result<Self> {
        if !(constant > 0.0) || !constant.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel constant must be positive, got {constant}"
            )));
        }
        if !(alpha > 0.0 && alpha < Q1) {
            return Err(Error::InvalidParameter(format!(
                "kernel order must lie in (0, Q), got {alpha}"
            )));
        }
        Ok(KernelSpec {
            alpha,
            constant,
            kind,
        })
    }

    pub fn riesz(alpha: f64) -> Result<Self> {
        Self::new(KernelKind::Riesz, alpha, 1.0)
    }

    /// Degree of homogeneity.
    pub fn exponent(&self) -> f64 {
        match self.kind {
            KernelKind::Riesz | KernelKind::Green => self.alpha - Q1,
            KernelKind::Hyper => -Q1 - self.alpha,
        }
    }

    /// Locally integrable kernels can be convolved on a grid.
    pub fn integrable(&self) -> bool {
        self.kind != KernelKind::Hyper
    }
}

/// constant·|p|^{exponent}.
pub fn kernel_eval(spec: &KernelSpec, p: &Point) -> Result<f64> {
    if p.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: p.dim(),
        });
    }
    let g = koranyi_gauge(p);
    if g == 0.0 {
        return Err(Error::SingularKernel);
    }
    Ok(spec.constant * g.powf(spec.exponent()))
}

/// Mean of |x|^{e} over the Korányi ball of volume `vol` (e > −Q):
/// (Q/(e+Q))·r^{e} with r the ball radius.
pub fn singular_cell_mean(exponent: f64, vol: f64) -> f64 {
    let r = (vol / koranyi_unit_ball_volume(1)).powf(1.0 / Q1);
    Q1 / (exponent + Q1) * r.powf(exponent)
}

/// Cell-centered scalar grid over a box in (x, y, t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFieldH {
    /// lower corner of the box
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub res: [usize; 3],
    /// index ((ix·ny) + iy)·nt + it
    pub values: Vec<f64>,
}

/// Box and resolution only (what the CSV header carries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub res: [usize; 3],
}

impl GridFieldH {
    pub fn new(lo: [f64; 3], hi: [f64; 3], res: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if res.iter().any(|&r| r < 8) {
            return Err(Error::InvalidParameter(
                "grid resolutions must be at least 8".into(),
            ));
        }
        if (0..3).any(|i| !(hi[i] > lo[i])) {
            return Err(Error::InvalidParameter("empty grid box".into()));
        }
        let n = res[0] * res[1] * res[2];
        if values.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid values"));
        }
        Ok(GridFieldH {
            lo,
            hi,
            res,
            values,
        })
    }

    /// Samples f at the cell centers.
    pub fn sample(
        lo: [f64; 3],
        hi: [f64; 3],
        res: [usize; 3],
        f: impl Fn(&Point) -> f64 + Sync,
    ) -> Result<Self> {
        let probe = GridFieldH {
            lo,
            hi,
            res,
            values: Vec::new(),
        };
        let n = res[0] * res[1] * res[2];
        let values = (0..n).into_par_iter().map(|i| f(&probe.point(i))).collect();
        Self::new(lo, hi, res, values)
    }

    /// The box [−a, a]² × [−a², a²] with n cells per axis.
    pub fn centered_box(a: f64, n: usize, f: impl Fn(&Point) -> f64 + Sync) -> Result<Self> {
        Self::sample([-a, -a, -a * a], [a, a, a * a], [n, n, n], f)
    }

    pub fn step(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| (self.hi[i] - self.lo[i]) / self.res[i] as f64)
    }

    pub fn cell_volume(&self) -> f64 {
        self.step().iter().product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + (i as f64 + 0.5) * self.step()[axis]
    }

    pub fn index(&self, ix: usize, iy: usize, it: usize) -> usize {
        (ix * self.res[1] + iy) * self.res[2] + it
    }

    pub fn point(&self, i: usize) -> Point {
        let nt = self.res[2];
        let ny = self.res[1];
        let (it, iy, ix) = (i % nt, (i / nt) % ny, i / (nt * ny));
        Point {
            z: vec![Complex::new(self.coord(0, ix), self.coord(1, iy))],
            t: self.coord(2, it),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn header(&self) -> GridHeader {
        GridHeader {
            lo: self.lo,
            hi: self.hi,
            res: self.res,
        }
    }

    /// ∫|f|^p dx dy dt over the box.
    pub fn lp_norm(&self, p: f64) -> f64 {
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.cell_volume())
            .powf(1.0 / p)
    }

    fn column(&self, ix: usize, iy: usize) -> &[f64] {
        let s = self.index(ix, iy, 0);
        &self.values[s..s + self.res[2]]
    }

    /// CSV with a leading `# {json header}` line, then x,y,t,value rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "y", "t", "value"]).map_err(io_err)?;
        for (i, v) in self.values.iter().enumerate() {
            let p = self.point(i);
            w.write_record([p.z[0].re, p.z[0].im, p.t, *v].map(|x| format!("{x:e}")))
                .map_err(io_err)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| io_err(e.into_error()))?)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let head = serde_json::to_string(&self.header())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(format!("# {head}\n{body}"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (first, rest) = text
            .split_once('\n')
            .ok_or_else(|| Error::InvalidParameter("missing grid header".into()))?;
        let head: GridHeader = serde_json::from_str(first.trim_start_matches('#').trim())
            .map_err(|e| Error::InvalidParameter(format!("bad grid header: {e}")))?;
        let mut r = csv::Reader::from_reader(rest.as_bytes());
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io_err)?;
            let v: f64 = rec
                .get(3)
                .ok_or_else(|| Error::InvalidParameter("short grid row".into()))?
                .parse()
                .map_err(|e| Error::InvalidParameter(format!("bad grid value: {e}")))?;
            values.push(v);
        }
        Self::new(head.lo, head.hi, head.res, values)
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("csv: {e}"))
}

/// Output columns of a convolution: all, or every `stride`-th in x and y.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputStride(pub usize);

/// (f * K)(x) = ∫ f(x·u⁻¹) K(u) du with u on the grid of cell offsets:
/// the stencil is the same at every x and each offset carries the exact
/// cell average of K (see `KernelTable`), while f(x·u⁻¹) — off the t-rows
/// by 2Im(z ū) — is read from f's column by 4-point Lagrange interpolation
/// in t (zero outside the box).  For a fixed output column and offset
/// column the interpolation shift is constant, so each column pair costs one
/// discrete correlation.  With a stride s > 1 the result lives on the
/// coarser grid of every s-th column (t-rows unchanged).
pub fn convolve(f: &GridFieldH, spec: &KernelSpec, stride: OutputStride) -> Result<GridFieldH> {
    if !spec.integrable() {
        return Err(Error::InvalidParameter(
            "hypersingular kernels have no grid convolution; use pv_fractional".into(),
        ));
    }
    let s = stride.0.max(1);
    let [nx, ny, nt] = f.res;
    if nx % s != 0 || ny % s != 0 {
        return Err(Error::InvalidParameter(format!(
            "stride {s} must divide the x/y resolution"
        )));
    }
    let h = f.step();
    let vol = f.cell_volume();
    let xmax = f.lo[0].abs().max(f.hi[0].abs());
    let ymax = f.lo[1].abs().max(f.hi[1].abs());
    let max_shift =
        (2.0 * (ymax * (f.hi[0] - f.lo[0]) + xmax * (f.hi[1] - f.lo[1])) / h[2]).ceil() as usize;
    let table = KernelTable::new(spec, h, [nx, ny], max_shift + nt + 4);
    let inputs: Vec<(usize, usize)> = (0..nx)
        .flat_map(|ix| (0..ny).map(move |iy| (ix, iy)))
        .filter(|&(ix, iy)| f.column(ix, iy).iter().any(|v| *v != 0.0))
        .collect();
    let (ox, oy) = (nx / s, ny / s);
    let nti = nt as isize;
    let cols: Vec<Vec<f64>> = (0..ox * oy)
        .into_par_iter()
        .map(|c| {
            let (jx, jy) = (c / oy * s, c % oy * s);
            let (x, y) = (f.coord(0, jx), f.coord(1, jy));
            let mut out = vec![0.0; nt];
            let mut g = Vec::new();
            for &(ix, iy) in &inputs {
                // u_z = z − z_i (exact grid offset)
                let (ux, uy) = (x - f.coord(0, ix), y - f.coord(1, iy));
                // x·u⁻¹ has t-coordinate t − u_t − 2Im(z ū_z)
                let shift = 2.0 * (y * ux - x * uy) / h[2];
                let q = shift.floor();
                let w = lagrange4(1.0 - (shift - q));
                let q = q as isize;
                let src = f.column(ix, iy);
                let at = |k: isize| {
                    if k >= 0 && k < nti {
                        src[k as usize]
                    } else {
                        0.0
                    }
                };
                // g[b] = f_i at fractional row b − shift = (b − q − 1) + (1 − θ)
                let b_lo = q - 1;
                g.clear();
                for b in b_lo..=q + nti + 2 {
                    let base = b - q - 1;
                    g.push(
                        w[0] * at(base - 1)
                            + w[1] * at(base)
                            + w[2] * at(base + 1)
                            + w[3] * at(base + 2),
                    );
                }
                let (Some(first), Some(last)) = (
                    g.iter().position(|v| *v != 0.0),
                    g.iter().rposition(|v| *v != 0.0),
                ) else {
                    continue;
                };
                let row = table.row(jx.abs_diff(ix), jy.abs_diff(iy));
                for (a, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (bi, gv) in g.iter().enumerate().take(last + 1).skip(first) {
                        let m = a as isize - (b_lo + bi as isize);
                        acc += row[m.unsigned_abs()] * gv;
                    }
                    *o += acc * vol;
                }
            }
            out
        })
        .collect();
    let mut values = Vec::with_capacity(ox * oy * nt);
    for c in cols {
        values.extend(c);
    }
    // cell centers of the coarse grid coincide with the sampled columns
    let off = |i: usize| f.lo[i] + 0.5 * h[i] - 0.5 * s as f64 * h[i];
    let lo = [off(0), off(1), f.lo[2]];
    let hi = [
        lo[0] + (ox * s) as f64 * h[0],
        lo[1] + (oy * s) as f64 * h[1],
        f.hi[2],
    ];
    Ok(GridFieldH {
        lo,
        hi,
        res: [ox, oy, nt],
        values,
    })
}

/// Cell averages of K over [dx·hx ± hx/2] × [dy·hy ± hy/2] × [m·ht ± ht/2],
/// indexed by (|dx|, |dy|, |m|).  Point values are useless near the t-axis:
/// for |z|² ≪ h_t the kernel is far narrower in t than a cell.  The t-average
/// is done exactly in v with τ = |z|²·sinh v (smooth integrand), the (x, y)
/// average by Gauss rules, graded into the corner for the singular column.
struct KernelTable {
    ny: usize,
    rows: usize,
    data: Vec<f64>,
}

impl KernelTable {
    fn new(spec: &KernelSpec, h: [f64; 3], res: [usize; 2], rows: usize) -> Self {
        let e = spec.exponent();
        let ht = h[2];
        let near = Rule1d::gauss(6, -0.5, 0.5);
        let far = Rule1d::gauss(3, -0.5, 0.5);
        let coarse = Rule1d::gauss(2, -0.5, 0.5);
        let corner = |hh: f64| {
            Rule1d::composite(
                &crate::quadrature::graded_breaks(0.0, 0.5 * hh, 1e-4 * hh, 3.0, 0.2 * hh),
                4,
            )
        };
        let (cx, cy) = (corner(h[0]), corner(h[1]));
        let data: Vec<f64> = (0..res[0] * res[1])
            .into_par_iter()
            .flat_map_iter(|c| {
                let (dx, dy) = (c / res[1], c % res[1]);
                // (x, y) nodes with weights summing to one
                let square = |r: &Rule1d| {
                    let mut pts = Vec::with_capacity(r.len() * r.len());
                    for (a, wa) in r.nodes.iter().zip(&r.weights) {
                        for (b, wb) in r.nodes.iter().zip(&r.weights) {
                            let x = (dx as f64 + a) * h[0];
                            let y = (dy as f64 + b) * h[1];
                            pts.push((x * x + y * y, wa * wb));
                        }
                    }
                    pts
                };
                let singular = dx == 0 && dy == 0;
                let plain = square(if dx.max(dy) <= 3 { &near } else { &far });
                // the axis column near τ = 0: quarter cell graded into the corner
                let mut graded = Vec::new();
                if singular {
                    let norm = 0.25 * h[0] * h[1];
                    for (x, wx) in cx.nodes.iter().zip(&cx.weights) {
                        for (y, wy) in cy.nodes.iter().zip(&cy.weights) {
                            graded.push((x * x + y * y, wx * wy / norm));
                        }
                    }
                }
                let smooth = square(&coarse);
                (0..rows).map(move |m| {
                    let (t1, t2) = ((m as f64 - 0.5) * ht, (m as f64 + 0.5) * ht);
                    if m >= 4 && dx.max(dy) > 3 {
                        // the kernel is smooth on this cell: 2×2×2 Gauss
                        let tm = m as f64 * ht;
                        let d = 0.5 * ht / 3f64.sqrt();
                        return spec.constant
                            * smooth
                                .iter()
                                .map(|&(r2, w)| {
                                    0.5 * w
                                        * ((r2 * r2 + (tm - d).powi(2)).powf(e / 4.0)
                                            + (r2 * r2 + (tm + d).powi(2)).powf(e / 4.0))
                                })
                                .sum::<f64>();
                    }
                    let set = if singular && m <= 2 { &graded } else { &plain };
                    spec.constant
                        * set
                            .iter()
                            .map(|&(r2, w)| w * tau_integral(r2, t1, t2, e))
                            .sum::<f64>()
                        / ht
                })
            })
            .collect();
        KernelTable {
            ny: res[1],
            rows,
            data,
        }
    }

    fn row(&self, dx: usize, dy: usize) -> &[f64] {
        let i = (dx * self.ny + dy) * self.rows;
        &self.data[i..i + self.rows]
    }
}

/// ∫_{t1}^{t2} (r2² + τ²)^{e/4} dτ for r2 = |z|² > 0.
fn tau_integral(r2: f64, t1: f64, t2: f64, e: f64) -> f64 {
    let (v1, v2) = ((t1 / r2).asinh(), (t2 / r2).asinh());
    let panels = (v2 - v1).ceil().max(1.0) as usize;
    let br: Vec<f64> = (0..=panels)
        .map(|i| v1 + (v2 - v1) * i as f64 / panels as f64)
        .collect();
    let p = 0.5 * e + 1.0;
    r2.powf(p) * Rule1d::composite(&br, 6).integrate(|v| v.cosh().powf(p))
}

/// Weights of the 4-point Lagrange interpolant on nodes −1, 0, 1, 2 at x ∈ [0, 1].
fn lagrange4(x: f64) -> [f64; 4] {
    [
        -x * (x - 1.0) * (x - 2.0) / 6.0,
        (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
        -(x + 1.0) * x * (x - 2.0) / 2.0,
        (x + 1.0) * x * (x - 1.0) / 6.0,
    ]
}

/// max |K(δ_λp) − λ^{exponent}K(p)| / |λ^{exponent}K(p)| over random p, λ.
pub fn homogeneity_defect(spec: &KernelSpec, samples: usize, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let p = crate::heisenberg::random_point(&mut rng, 1, 2.0);
        let l: f64 = rng.gen_range(0.1..10.0);
        let a = kernel_eval(spec, &crate::heisenberg::dilate(l, &p)?)?;
        let b = l.powf(spec.exponent()) * kernel_eval(spec, &p)?;
        worst = worst.max((a - b).abs() / b.abs());
    }
    Ok(worst)
}

/// Smooth compactly supported bump exp(1 − 1/(1 − r²)) with
/// r² = |z − z_c|²/w² + (t − t_c)²/w⁴ (centered at `c` via group translation).
pub fn bump(c: &Point, w: f64) -> impl Fn(&Point) -> f64 + Sync + '_ {
    move |p: &Point| {
        let q = group_mul(&group_inv(c), p);
        let r2 = q.z_norm_sqr() / (w * w) + q.t * q.t / (w * w * w * w);
        if r2 >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - r2)).exp()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub resolution: usize,
    /// c in R_α(R_β f) ≈ c·R_{α+β} f
    pub fitted_constant: f64,
    /// relative L² mismatch on the comparison region
    pub relative_error: f64,
}

/// Compares R_α(R_β f) with R_{α+β} f on the central half of the box,
/// after fitting the (unnormalized) constant.
pub fn semigroup_check(
    f: &GridFieldH,
    alpha: f64,
    beta: f64,
    stride: usize,
) -> Result<SemigroupReport> {
    let rb = convolve(f, &KernelSpec::riesz(beta)?, OutputStride(1))?;
    let lhs = convolve(&rb, &KernelSpec::riesz(alpha)?, OutputStride(stride))?;
    let rhs = convolve(f, &KernelSpec::riesz(alpha + beta)?, OutputStride(stride))?;
    let half = [
        0.5 * (f.hi[0] - f.lo[0]) / 2.0,
        0.5 * (f.hi[1] - f.lo[1]) / 2.0,
        0.5 * (f.hi[2] - f.lo[2]) / 2.0,
    ];
    let mid = [0, 1, 2].map(|i| 0.5 * (f.lo[i] + f.hi[i]));
    let inside = |p: &Point| {
        (p.z[0].re - mid[0]).abs() <= half[0]
            && (p.z[0].im - mid[1]).abs() <= half[1]
            && (p.t - mid[2]).abs() <= half[2]
    };
    let (mut ab, mut bb, mut aa) = (0.0, 0.0, 0.0);
    for i in 0..lhs.len() {
        if inside(&lhs.point(i)) {
            let (a, b) = (lhs.values[i], rhs.values[i]);
            ab += a * b;
            bb += b * b;
            aa += a * a;
        }
    }
    let c = ab / bb;
    let err = (aa - 2.0 * c * ab + c * c * bb).max(0.0).sqrt() / aa.sqrt();
    Ok(SemigroupReport {
        resolution: f.res[0],
        fitted_constant: c,
        relative_error: err,
    })
}

/// −Δ_b g on interior cells by central differences, using
/// X² = ∂x² + 4y∂x∂t + 4y²∂t², Y² = ∂y² − 4x∂y∂t + 4x²∂t².
pub fn grid_sub_laplacian(g: &GridFieldH) -> Vec<Option<f64>> {
    let [nx, ny, nt] = g.res;
    let [hx, hy, ht] = g.step();
    let v = |ix: usize, iy: usize, it: usize| g.values[g.index(ix, iy, it)];
    (0..g.len())
        .map(|i| {
            let (it, iy, ix) = (i % nt, (i / nt) % ny, i / (nt * ny));
            if ix == 0 || iy == 0 || it == 0 || ix + 1 == nx || iy + 1 == ny || it + 1 == nt {
                return None;
            }
            let c = v(ix, iy, it);
            let dxx = (v(ix + 1, iy, it) - 2.0 * c + v(ix - 1, iy, it)) / (hx * hx);
            let dyy = (v(ix, iy + 1, it) - 2.0 * c + v(ix, iy - 1, it)) / (hy * hy);
            let dtt = (v(ix, iy, it + 1) - 2.0 * c + v(ix, iy, it - 1)) / (ht * ht);
            let dxt = (v(ix + 1, iy, it + 1) - v(ix + 1, iy, it - 1) - v(ix - 1, iy, it + 1)
                + v(ix - 1, iy, it - 1))
                / (4.0 * hx * ht);
            let dyt = (v(ix, iy + 1, it + 1) - v(ix, iy + 1, it - 1) - v(ix, iy - 1, it + 1)
                + v(ix, iy - 1, it - 1))
                / (4.0 * hy * ht);
            let (x, y) = (g.coord(0, ix), g.coord(1, iy));
            let lap = dxx + dyy + 4.0 * y * dxt - 4.0 * x * dyt + 4.0 * (x * x + y * y) * dtt;
            Some(-0.25 * lap)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenReport {
    pub resolution: usize,
    /// c with −Δ_b(f * c|·|^{2−Q}) ≈ f
    pub fitted_constant: f64,
    pub relative_residual: f64,
}

/// Fits the Green constant from −Δ_b(f * |·|^{2−Q}) ≈ f/c.
pub fn green_inversion_check(f: &GridFieldH) -> Result<GreenReport> {
    let w = convolve(
        f,
        &KernelSpec::new(KernelKind::Green, 2.0, 1.0)?,
        OutputStride(1),
    )?;
    let lap = grid_sub_laplacian(&w);
    let (mut fg, mut gg, mut ff) = (0.0, 0.0, 0.0);
    for (l, fv) in lap.iter().zip(&f.values) {
        if let Some(g) = l {
            fg += fv * g;
            gg += g * g;
            ff += fv * fv;
        }
    }
    if ff == 0.0 {
        return Ok(GreenReport {
            resolution: f.res[0],
            fitted_constant: 0.0,
            relative_residual: 0.0,
        });
    }
    let c = fg / gg;
    let res = (ff - 2.0 * c * fg + c * c * gg).max(0.0).sqrt() / ff.sqrt();
    Ok(GreenReport {
        resolution: f.res[0],
        fitted_constant: c,
        relative_residual: res,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PvReport {
    pub alpha: f64,
    pub delta: f64,
    /// value with inner radius δ
    pub value: f64,
    /// value with inner radius δ/2
    pub value_half_delta: f64,
    pub sensitivity: f64,
}

/// Options for the principal-value quadrature.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PvOptions {
    pub delta: f64,
    /// truncation radius; the tail beyond it assumes u ≈ 0
    pub outer: f64,
    pub n_psi: usize,
    pub n_theta: usize,
    pub points_per_panel: usize,
}

impl Default for PvOptions {
    fn default() -> Self {
        PvOptions {
            delta: 0.05,
            outer: 40.0,
            n_psi: 24,
            n_theta: 24,
            points_per_panel: 8,
        }
    }
}

/// ∫_{δ<|y|} (u(p) − u(p·y))|y|^{−Q−α} dy, the sign fixed so that the value
/// is ≥ 0 at a strict maximum (a positive multiple of (−Δ_b)^{α/2}u).
/// Polar coordinates y = (ρ√cosψ e^{iθ}, ρ² sinψ) give dy = ρ³dρ dψ dθ.
fn pv_integral(
    u: &(impl Fn(&Point) -> f64 + Sync),
    alpha: f64,
    p: &Point,
    delta: f64,
    o: &PvOptions,
) -> f64 {
    let up = u(p);
    let psi = Rule1d::gauss(o.n_psi, -0.5 * PI, 0.5 * PI);
    let theta = Rule1d::trapezoid_periodic(o.n_theta, 0.0);
    // geometric panels in ρ
    let m = ((o.outer / delta).ln() / 0.5f64.ln().abs()).ceil().max(1.0) as usize;
    let breaks: Vec<f64> = (0..=m)
        .map(|i| delta * (o.outer / delta).powf(i as f64 / m as f64))
        .collect();
    let rho = Rule1d::composite(&breaks, o.points_per_panel);
    let body: f64 = rho
        .nodes
        .par_iter()
        .zip(&rho.weights)
        .map(|(&r, &wr)| {
            let mut acc = 0.0;
            for (&ps, &wp) in psi.nodes.iter().zip(&psi.weights) {
                let a = r * ps.cos().sqrt();
                let t = r * r * ps.sin();
                for (&th, &wt) in theta.nodes.iter().zip(&theta.weights) {
                    let y = Point {
                        z: vec![Complex::from_polar(a, th)],
                        t,
                    };
                    let sym = 0.5 * (u(&group_mul(p, &y)) + u(&group_mul(p, &group_inv(&y)))) - up;
                    acc += -sym * wp * wt;
                }
            }
            acc * r.powf(-1.0 - alpha) * wr
        })
        .sum();
    // |y| > outer: u(p·y) ≈ its mean on the sphere |y| = outer;
    // ∫ρ^{−1−α}dρ over the Korányi sphere (ψ, θ area 2π²)
    let mut far = 0.0;
    for (&ps, &wp) in psi.nodes.iter().zip(&psi.weights) {
        for (&th, &wt) in theta.nodes.iter().zip(&theta.weights) {
            let y = Point {
                z: vec![Complex::from_polar(o.outer * ps.cos().sqrt(), th)],
                t: o.outer * o.outer * ps.sin(),
            };
            far += u(&group_mul(p, &y)) * wp * wt;
        }
    }
    far /= 2.0 * PI * PI;
    let tail = (up - far) * 2.0 * PI * PI * o.outer.powf(-alpha) / alpha;
    body + tail
}

/// Truncated PV form of (−Δ_b)^{α/2}u at p with its δ-sensitivity.
pub fn pv_fractional(
    u: impl Fn(&Point) -> f64 + Sync,
    alpha: f64,
    p: &Point,
    opts: &PvOptions,
) -> Result<PvReport> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "PV form needs α in (0, 2), got {alpha}"
        )));
    }
    if p.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: p.dim(),
        });
    }
    let v = pv_integral(&u, alpha, p, opts.delta, opts);
    let v2 = pv_integral(&u, alpha, p, 0.5 * opts.delta, opts);
    Ok(PvReport {
        alpha,
        delta: opts.delta,
        value: v,
        value_half_delta: v2,
        sensitivity: (v - v2).abs(),
    })
}

/// (2−α)/(2π²·m), m = (1/π)∫√cosψ dψ: the factor with which the PV value
/// tends to −Δ_b u as α → 2.
pub fn pv_normalization(alpha: f64) -> f64 {
    let r = Rule1d::gauss(64, -0.5 * PI, 0.5 * PI);
    let m = r.integrate(|x| x.cos().sqrt()) / PI;
    (2.0 - alpha) / (2.0 * PI * PI * m)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MappingProbe {
    pub alpha: f64,
    pub q: f64,
    pub p: f64,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// ‖R_α u‖_p / ‖u‖_q over bumps of several widths and centers, with
/// 1/p = 1/q − α/Q (grid norms over the box).
pub fn mapping_probe(
    alpha: f64,
    q: f64,
    a: f64,
    n: usize,
    bumps: &[(Point, f64)],
) -> Result<MappingProbe> {
    let inv_p = 1.0 / q - alpha / Q1;
    if !(inv_p > 0.0) {
        return Err(Error::InvalidParameter("need 1/q > α/Q".into()));
    }
    let p = 1.0 / inv_p;
    let k = KernelSpec::riesz(alpha)?;
    let mut ratios = Vec::with_capacity(bumps.len());
    for (c, w) in bumps {
        let f = GridFieldH::centered_box(a, n, bump(c, *w))?;
        let g = convolve(&f, &k, OutputStride(1))?;
        ratios.push(g.lp_norm(p) / f.lp_norm(q));
    }
    Ok(MappingProbe {
        alpha,
        q,
        p,
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
        ratios,
    })
}

/// Least-squares slope of log K(δ_λ p) against log λ.
pub fn decay_slope(spec: &KernelSpec, p: &Point, lambdas: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&l| {
            let q = crate::heisenberg::dilate(l, p)?;
            Ok((l.ln(), kernel_eval(spec, &q)?.ln()))
        })
        .collect::<Result<_>>()?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg::{dilate, random_point, sub_laplacian, ScalarFieldH};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_homogeneity_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [
            KernelSpec::riesz(1.0).unwrap(),
            KernelSpec::new(KernelKind::Green, 2.0, 3.0).unwrap(),
            KernelSpec::new(KernelKind::Hyper, 1.0, 1.0).unwrap(),
        ] {
            for _ in 0..100 {
                let p = random_point(&mut rng, 1, 2.0);
                let l = 0.1 + 3.0 * rand::Rng::gen::<f64>(&mut rng);
                let a = kernel_eval(&spec, &dilate(l, &p).unwrap()).unwrap();
                let b = l.powf(spec.exponent()) * kernel_eval(&spec, &p).unwrap();
                assert!((a - b).abs() <= 1e-12 * b.abs());
            }
        }
        assert!(kernel_eval(&KernelSpec::riesz(1.0).unwrap(), &Point::origin(1)).is_err());
        assert!(KernelSpec::riesz(4.5).is_err());
    }

    #[test]
    fn green_kernel_is_inverse_square_and_harmonic() {
        let g = KernelSpec::new(KernelKind::Green, 2.0, 1.0).unwrap();
        assert_eq!(g.exponent(), -2.0);
        // |x|^{−2} is Δ_b-harmonic away from 0
        let f = ScalarFieldH::with_step(|p: &Point| kernel_eval(&g, p).unwrap(), 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let p = random_point(&mut rng, 1, 1.0);
            if koranyi_gauge(&p) < 0.3 {
                continue;
            }
            let l = sub_laplacian(&f, &p);
            assert!(l.abs() < 1e-4 * kernel_eval(&g, &p).unwrap(), "{l}");
        }
    }

    #[test]
    fn hyper_kernel_decay_slope() {
        let k = KernelSpec::new(KernelKind::Hyper, 1.0, 1.0).unwrap();
        let p = Point {
            z: vec![Complex::new(0.3, -0.2)],
            t: 0.7,
        };
        let l: Vec<f64> = (0..20).map(|i| 0.5 * 1.3f64.powi(i)).collect();
        let s = decay_slope(&k, &p, &l).unwrap();
        assert!((s + 5.0).abs() < 1e-3);
        assert!(convolve(
            &GridFieldH::centered_box(1.0, 8, |_| 1.0).unwrap(),
            &k,
            OutputStride(1)
        )
        .is_err());
    }

    #[test]
    fn singular_mean_integrates_the_kernel() {
        // ∫_{B_r}|x|^{e} = Q·vol_1·r^{e+Q}/(e+Q)
        let r: f64 = 0.3;
        let vol = koranyi_unit_ball_volume(1) * r.powi(4);
        let m = singular_cell_mean(-3.0, vol);
        assert!((m * vol - 4.0 * koranyi_unit_ball_volume(1) * r).abs() < 1e-12);
    }

    #[test]
    fn convolution_is_linear_and_reproduces_kernel_far_away() {
        let a = 1.0;
        let n = 16;
        let f = GridFieldH::centered_box(a, n, bump(&Point::origin(1), 0.3)).unwrap();
        let g = GridFieldH::centered_box(a, n, bump(&Point::origin(1), 0.5)).unwrap();
        let k = KernelSpec::riesz(1.0).unwrap();
        let mut s = f.clone();
        for (x, y) in s.values.iter_mut().zip(&g.values) {
            *x = 2.0 * *x - 3.0 * y;
        }
        let (cf, cg, cs) = (
            convolve(&f, &k, OutputStride(1)).unwrap(),
            convolve(&g, &k, OutputStride(1)).unwrap(),
            convolve(&s, &k, OutputStride(1)).unwrap(),
        );
        for i in 0..cs.len() {
            assert!(
                (cs.values[i] - (2.0 * cf.values[i] - 3.0 * cg.values[i])).abs()
                    < 1e-12 * (1.0 + cs.values[i].abs())
            );
        }
        // far from a narrow bump the potential is mass·K
        let mass: f64 = f.values.iter().sum::<f64>() * f.cell_volume();
        let i = cf.index(0, 0, 0);
        let p = cf.point(i);
        let ratio = cf.values[i] / (mass * kernel_eval(&k, &p).unwrap());
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn strided_output_matches_full_output() {
        let f = GridFieldH::centered_box(1.0, 16, bump(&Point::origin(1), 0.4)).unwrap();
        let k = KernelSpec::riesz(2.0).unwrap();
        let full = convolve(&f, &k, OutputStride(1)).unwrap();
        let sub = convolve(&f, &k, OutputStride(4)).unwrap();
        assert_eq!(sub.res, [4, 4, 16]);
        for i in 0..sub.len() {
            let p = sub.point(i);
            let j = (0..full.len())
                .find(|&j| {
                    let q = full.point(j);
                    (q.z[0] - p.z[0]).norm() < 1e-12 && (q.t - p.t).abs() < 1e-12
                })
                .unwrap();
            assert_eq!(full.values[j], sub.values[i]);
        }
    }

    #[test]
    fn csv_round_trip() {
        let f = GridFieldH::centered_box(1.0, 8, |p| p.t + p.z[0].re).unwrap();
        let text = f.to_csv().unwrap();
        assert!(text.starts_with("# {"));
        let g = GridFieldH::from_csv(&text).unwrap();
        assert_eq!(f.res, g.res);
        for (a, b) in f.values.iter().zip(&g.values) {
            assert!((a - b).abs() < 1e-14 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn green_constant_is_the_fundamental_solution() {
        // −Δ_b has fundamental solution |u|^{−2}/(2π) for N = 1
        let f = GridFieldH::centered_box(1.0, 24, bump(&Point::origin(1), 0.6)).unwrap();
        let r = green_inversion_check(&f).unwrap();
        assert!((r.fitted_constant * 2.0 * PI - 1.0).abs() < 0.04, "{r:?}");
        assert!(r.relative_residual < 0.06, "{r:?}");
    }

    #[test]
    fn green_of_zero_is_zero() {
        let f = GridFieldH::centered_box(1.0, 8, |_| 0.0).unwrap();
        let r = green_inversion_check(&f).unwrap();
        assert_eq!(r.fitted_constant, 0.0);
    }

    #[test]
    fn pv_sign_and_constants() {
        let o = PvOptions {
            n_psi: 12,
            n_theta: 12,
            points_per_panel: 6,
            ..PvOptions::default()
        };
        let c = pv_fractional(|_: &Point| 2.0, 1.0, &Point::origin(1), &o).unwrap();
        assert!(c.value.abs() < 1e-12);
        let g = |p: &Point| (-(p.z_norm_sqr() + p.t * p.t)).exp();
        let r = pv_fractional(g, 1.0, &Point::origin(1), &o).unwrap();
        assert!(r.value > 0.0);
        assert!(r.sensitivity < 0.05 * r.value, "{r:?}");
    }
}
