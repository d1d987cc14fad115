//! Concentration function Q(r) = sup_ζ ∫_{B_r(ζ)} |u|^{p*} dv_S and the
//! detection of concentration points along a synthesized sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bubbling::{PSSequenceSpec, ResolvedRule, RuleQuality};
use crate::cayley::{random_sphere_point, sphere_dist};
use crate::error::{Error, Result};
use crate::spectral::{SpectralFunction, Transform};
use crate::SPoint;
use num_complex::Complex;

/// Quasi-uniform center grid with 512 points: for N = 1 a tensor grid in
/// (|ζ1|², arg ζ1, arg ζ2); for N ≥ 2 seeded uniform samples.
pub fn center_grid(n: usize, seed: u64) -> Vec<SPoint> {
    if n == 1 {
        let m = 8;
        let mut out = Vec::with_capacity(m * m * m);
        let tau = 2.0 * std::f64::consts::PI;
        for i in 0..m {
            let s = (i as f64 + 0.5) / m as f64;
            for j in 0..m {
                for l in 0..m {
                    let p1 = tau * (j as f64 + 0.5) / m as f64;
                    let p2 = tau * (l as f64 + 0.5) / m as f64;
                    out.push(SPoint {
                        zeta: vec![
                            Complex::from_polar(s.sqrt(), p1),
                            Complex::from_polar((1.0 - s).sqrt(), p2),
                        ],
                    });
                }
            }
        }
        out
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..512).map(|_| random_sphere_point(&mut rng, n)).collect()
    }
}

/// ∫_{B_r(c)} density for each center c (indicator-restricted quadrature).
pub fn ball_masses(
    nodes: &[SPoint],
    weights: &[f64],
    density: &[f64],
    centers: &[SPoint],
    r: f64,
) -> Vec<f64> {
    centers
        .par_iter()
        .map(|c| {
            nodes
                .iter()
                .zip(weights)
                .zip(density)
                .filter(|((s, _), _)| sphere_dist(s, c) < r)
                .map(|((_, w), d)| w * d)
                .sum()
        })
        .collect()
}

/// (Q(r), index of a maximizing center).
pub fn concentration_function(
    nodes: &[SPoint],
    weights: &[f64],
    density: &[f64],
    r: f64,
    centers: &[SPoint],
) -> Result<(f64, usize)> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveScale(r));
    }
    if centers.is_empty() {
        return Err(Error::InvalidParameter("empty center grid".into()));
    }
    let m = ball_masses(nodes, weights, density, centers, r);
    let (i, v) =
        m.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    Ok((v, i))
}

/// Q(r) for a band-limited u on the transform's quadrature.
pub fn concentration_function_spectral(
    u: &SpectralFunction,
    transform: &Transform,
    p_star: f64,
    r: f64,
    centers: &[SPoint],
) -> Result<(f64, SPoint)> {
    let vals = transform.synthesize_values(u);
    let dens: Vec<f64> = vals.iter().map(|x| x.abs().powf(p_star)).collect();
    let (q, i) = concentration_function(
        &transform.quad.nodes,
        &transform.quad.weights,
        &dens,
        r,
        centers,
    )?;
    Ok((q, centers[i].clone()))
}

/// A detected concentration point with its retained small-ball mass.
#[derive(Clone, Debug)]
pub struct Cluster {
    pub center: SPoint,
    pub mass: f64,
    pub members: usize,
}

/// Grid points whose ball mass stays ≥ ε₀ for every r in `r_list` and every
/// rung in `n_list` (the liminf's taken over the supplied tails), grouped
/// greedily into clusters of radius 2·max(r).
pub fn detect_concentration(
    spec: &PSSequenceSpec,
    epsilon0: f64,
    r_list: &[f64],
    n_list: &[usize],
    grid: &[SPoint],
) -> Result<Vec<Cluster>> {
    if r_list.is_empty() || n_list.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one radius and one rung".into(),
        ));
    }
    let mut centers = grid.to_vec();
    centers.extend(spec.bubbles.iter().map(|b| b.center.clone()));
    let ps = spec.consts.p_star;
    let mut retained = vec![f64::INFINITY; centers.len()];
    for &n in n_list {
        let rule = ResolvedRule::for_spec(spec, n, RuleQuality::Coarse)?;
        let term = spec.term(n)?;
        let dens: Vec<f64> = rule
            .nodes
            .par_iter()
            .map(|s| term.value(s).abs().powf(ps))
            .collect();
        for &r in r_list {
            let m = ball_masses(&rule.nodes, &rule.weights, &dens, &centers, r);
            for (a, b) in retained.iter_mut().zip(m) {
                *a = a.min(b);
            }
        }
    }
    let mut hits: Vec<(usize, f64)> = retained
        .iter()
        .enumerate()
        .filter(|(_, m)| **m >= epsilon0)
        .map(|(i, m)| (i, *m))
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1));
    let radius = 2.0 * r_list.iter().cloned().fold(0.0, f64::max);
    let mut clusters: Vec<Cluster> = Vec::new();
    for (i, m) in hits {
        match clusters
            .iter_mut()
            .find(|c| sphere_dist(&c.center, &centers[i]) < radius)
        {
            Some(c) => c.members += 1,
            None => clusters.push(Cluster {
                center: centers[i].clone(),
                mass: m,
                members: 1,
            }),
        }
    }
    Ok(clusters)
}
