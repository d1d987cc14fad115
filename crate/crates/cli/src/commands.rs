//! One function per subcommand; each returns the checks it made and writes
//! its tables/reports through `Artifacts`.

use anyhow::Result;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::sync::Arc;

use cr_yamabe::bubbling::{gradient_decay_check, quantization_table, PSSequenceSpec, RuleQuality};
use cr_yamabe::cayley::{ball_inclusion_violations, calibrate_kappa};
use cr_yamabe::commutator::{commutator_gradient_form, three_commutator, PolyH};
use cr_yamabe::energy::{SphereEnergy, YamabeConstants};
use cr_yamabe::flow::{preconditioned_flow, subcritical_threshold_check, well_seed, FlowOptions};
use cr_yamabe::heisenberg::random_point;
use cr_yamabe::riesz::{
    bump, green_inversion_check, homogeneity_defect, pv_normalization, semigroup_check, GridFieldH,
    KernelKind, KernelSpec,
};
use cr_yamabe::spectral::HarmonicBasis;
use cr_yamabe::symmetry::{
    invariance_check, minimax_search, SearchOptions, SubgroupSpec, SymmetricSpace, Unitary,
};
use cr_yamabe::verify;
use cr_yamabe::{Point, SPoint};

use crate::config::ExperimentConfig;
use crate::io::{num, Artifacts};

/// Configuration the subcommand cannot run with (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn need_k1(cfg: &ExperimentConfig, what: &str) -> Result<()> {
    if cfg.k != 1.0 {
        return usage(format!(
            "{what} is implemented for k = 1 only (got k = {})",
            cfg.k
        ));
    }
    Ok(())
}

fn need_n1(cfg: &ExperimentConfig, what: &str) -> Result<()> {
    if cfg.n != 1 {
        return usage(format!(
            "{what} is implemented for N = 1 only (got N = {})",
            cfg.n
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// "<=", "<", ">=", ">"
    pub relation: &'static str,
    pub pass: bool,
}

#[derive(Debug, Default, Serialize)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub details: Value,
}

impl Outcome {
    fn le(&mut self, name: impl Into<String>, value: f64, tol: f64) {
        self.push(name, value, tol, "<=", value <= tol);
    }

    fn lt(&mut self, name: impl Into<String>, value: f64, tol: f64) {
        self.push(name, value, tol, "<", value < tol);
    }

    fn ge(&mut self, name: impl Into<String>, value: f64, tol: f64) {
        self.push(name, value, tol, ">=", value >= tol);
    }

    fn push(
        &mut self,
        name: impl Into<String>,
        value: f64,
        tolerance: f64,
        relation: &'static str,
        pass: bool,
    ) {
        self.checks.push(Check {
            name: name.into(),
            value,
            tolerance,
            relation,
            pass: pass && !value.is_nan(),
        });
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn e1() -> SPoint {
    SPoint::new(vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]).expect("unit vector")
}

fn consts(cfg: &ExperimentConfig) -> Result<YamabeConstants> {
    YamabeConstants::new(cfg.n, cfg.k).map_err(|e| Usage(e.to_string()).into())
}

pub fn verify_group(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let cases = cfg.count_or(10_000);
    let r = verify::group_suite(cfg.n, cases, cfg.seed)?;
    let mut o = Outcome::default();
    let tol = cfg.tol(1e-12);
    let rows = [
        ("associativity", r.associativity),
        ("inverse", r.inverse),
        ("identity", r.identity),
        ("dilation_automorphism", r.dilation_automorphism),
        ("gauge_homogeneity", r.gauge_homogeneity),
        ("left_invariance", r.left_invariance),
    ];
    for (name, v) in rows {
        o.le(name, v, tol);
    }
    art.csv(
        "verify-group.csv",
        &["identity", "max_rel_error"],
        &rows
            .iter()
            .map(|(n, v)| vec![n.to_string(), num(*v)])
            .collect::<Vec<_>>(),
    )?;
    o.details = json!(r);
    Ok(o)
}

pub fn verify_spectral(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let jmax = cfg.jmax_or(6);
    let r = verify::eigen_consistency(cfg.n, jmax, 4, cfg.seed)?;
    let mut o = Outcome::default();
    o.le("a2_eigen_rel_error", r.max_rel_error, cfg.tol(1e-6));
    o.le(
        "orthonormality_defect",
        r.orthonormality_defect,
        cfg.tol(1e-10),
    );
    art.csv(
        "verify-spectral.csv",
        &[
            "N",
            "jmax",
            "elements",
            "max_rel_error",
            "orthonormality_defect",
        ],
        &[vec![
            cfg.n.to_string(),
            jmax.to_string(),
            r.elements.to_string(),
            num(r.max_rel_error),
            num(r.orthonormality_defect),
        ]],
    )?;
    o.details = json!(r);
    Ok(o)
}

pub fn verify_cayley(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    need_k1(cfg, "the covariance check")?;
    need_n1(cfg, "the covariance check")?;
    let jmax = cfg.jmax_or(4);
    let funcs = cfg.count_or(20);
    let r = verify::conformal_covariance(jmax, funcs, 100, cfg.seed)?;
    let viol = ball_inclusion_violations(cfg.n, 10_000, cfg.seed);
    let mut o = Outcome::default();
    o.le("covariance_rel_error", r.max_rel_error, cfg.tol(1e-4));
    o.le("ball_inclusion_violations", viol as f64, 0.0);
    art.csv(
        "verify-cayley.csv",
        &[
            "jmax",
            "functions",
            "points",
            "max_rel_error",
            "ball_inclusion_violations",
        ],
        &[vec![
            jmax.to_string(),
            r.functions.to_string(),
            r.points.to_string(),
            num(r.max_rel_error),
            viol.to_string(),
        ]],
    )?;
    o.details = json!({"covariance": r, "ball_inclusion_violations": viol});
    Ok(o)
}

pub fn sobolev_sharpness(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let mut cases = vec![(1usize, 1.0f64), (1, 0.5), (2, 1.0)];
    if !cases.contains(&(cfg.n, cfg.k)) {
        cases.push((cfg.n, cfg.k));
    }
    let rows = verify::sobolev_sharpness(&cases)?;
    let mut o = Outcome::default();
    for r in &rows {
        o.le(
            format!("quotient_vs_C_S(N={},k={})", r.n, r.k),
            r.rel_error,
            cfg.tol(5e-3),
        );
        o.le(
            format!("closed_form_identity(N={},k={})", r.n, r.k),
            r.identity_defect.abs(),
            cfg.tol(1e-12),
        );
    }
    art.csv(
        "sobolev-sharpness.csv",
        &[
            "N",
            "k",
            "C_S",
            "quotient_of_constant",
            "rel_error",
            "identity_defect",
        ],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.k.to_string(),
                    num(r.c_s),
                    num(r.quotient_of_constant),
                    num(r.rel_error),
                    num(r.identity_defect),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    o.details = json!(rows);
    Ok(o)
}

pub fn bubble_residual(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    need_k1(cfg, "the pointwise bubble residual")?;
    need_n1(cfg, "the bubble check")?;
    let r = verify::bubble_check(
        100,
        &[0.5, 1.0, 2.0],
        cfg.quadrature.whole_space_points,
        cfg.seed,
    )?;
    let mut o = Outcome::default();
    o.le("pde_residual", r.max_residual, cfg.tol(1e-5));
    o.le(
        "fitted_c_Q_vs_formula",
        (r.fitted_c_q / r.formula_c_q - 1.0).abs(),
        cfg.tol(1e-6),
    );
    for (lam, _, rel) in &r.energies {
        o.le(format!("E_H_vs_C_E(lambda={lam})"), *rel, cfg.tol(1e-2));
    }
    art.csv(
        "bubble-residual.csv",
        &["lambda", "E_H", "rel_error"],
        &r.energies
            .iter()
            .map(|(l, e, x)| vec![l.to_string(), num(*e), num(*x)])
            .collect::<Vec<_>>(),
    )?;
    o.details = json!(r);
    Ok(o)
}

fn bubble_centers(count: usize) -> Result<Vec<SPoint>> {
    match count {
        1 => Ok(vec![e1()]),
        2 => Ok(vec![e1(), e1().antipode()]),
        _ => usage("--bubbles must be 1 or 2"),
    }
}

pub fn ps_quantization(
    cfg: &ExperimentConfig,
    bubbles: usize,
    art: &mut Artifacts,
) -> Result<Outcome> {
    need_k1(cfg, "the resolved quantization table")?;
    need_n1(cfg, "the resolved quantization table")?;
    let c = consts(cfg)?;
    let spec = PSSequenceSpec::on_constant(c, &bubble_centers(bubbles)?, &cfg.ladder, 1.0)?;
    let quality = if cfg.quadrature.rule == "coarse" {
        RuleQuality::Coarse
    } else {
        RuleQuality::Fine
    };
    let rows = quantization_table(&spec, quality)?;
    let mut o = Outcome::default();
    let decreasing = rows
        .windows(2)
        .filter(|w| w[1].rel_gap >= w[0].rel_gap)
        .count();
    o.le("rungs_where_gap_grows", decreasing as f64, 0.0);
    let last = rows.last().expect("nonempty ladder");
    if bubbles == 1 {
        o.le("rel_gap_last_rung", last.rel_gap, cfg.tol(2e-2));
    } else {
        let ratio = (last.energy - last.energy_infty) / c.c_e;
        o.le(
            "two_bubble_gap_vs_2C_E",
            (ratio / 2.0 - 1.0).abs(),
            cfg.tol(4e-2),
        );
    }
    art.csv(
        &format!("ps-quantization-{bubbles}.csv"),
        &[
            "n",
            "R_n",
            "E_n",
            "E_infty",
            "gap_over_C_E",
            "rel_defect",
            "mass_gap",
            "splitting_defect",
            "norm_Hk_sqr",
        ],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    num(r.r_n),
                    num(r.energy),
                    num(r.energy_infty),
                    num((r.energy - r.energy_infty) / c.c_e),
                    num(r.rel_gap),
                    num(r.mass_gap),
                    num(r.splitting_defect),
                    num(r.norm_hk_sqr),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    o.details = json!({"C_E": c.c_e, "bubbles": bubbles, "rows": rows});
    Ok(o)
}

pub fn gradient_decay(
    cfg: &ExperimentConfig,
    bubbles: usize,
    art: &mut Artifacts,
) -> Result<Outcome> {
    need_k1(cfg, "the resolved gradient residual")?;
    need_n1(cfg, "the resolved gradient residual")?;
    let c = consts(cfg)?;
    let jmax = cfg.jmax_or(3);
    let centers = bubble_centers(bubbles)?;
    let good = gradient_decay_check(
        &PSSequenceSpec::on_constant(c, &centers, &cfg.ladder, 1.0)?,
        jmax,
    )?;
    // negative control: twice the bubble is not a solution profile
    let bad = gradient_decay_check(
        &PSSequenceSpec::on_constant(c, &centers, &cfg.ladder, 2.0)?,
        jmax,
    )?;
    let mut o = Outcome::default();
    o.ge("decay_factor", good.decay_factor, 10.0 / cfg.tol_scale);
    o.le(
        "non_monotone_rungs",
        if good.monotone { 0.0 } else { 1.0 },
        0.0,
    );
    o.lt("negative_control_decay_factor", bad.decay_factor, 2.0);
    art.csv(
        &format!("gradient-decay-{bubbles}.csv"),
        &[
            "n",
            "R_n",
            "residual",
            "negative_control_residual",
            "tests",
            "single_frame_norm",
        ],
        &good
            .rows
            .iter()
            .zip(&bad.rows)
            .map(|(g, b)| {
                vec![
                    g.n.to_string(),
                    num(g.r_n),
                    num(g.residual),
                    num(b.residual),
                    g.detail.n_tests.to_string(),
                    num(g.detail.single_frame_norm),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    o.details = json!({"solution": good, "negative_control": bad});
    Ok(o)
}

pub fn subcritical_flow(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let c = consts(cfg)?;
    let jmax = cfg.jmax_or(4);
    let ctx = SphereEnergy::new(c, Arc::new(HarmonicBasis::build(cfg.n, jmax, jmax)?))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let count = cfg.count_or(20);
    let mut seeds = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let t = rng.gen_range(0.1..0.9) * c.c_e;
        seeds.push(well_seed(&ctx, &mut rng, t)?);
        targets.push(t);
    }
    let opts = FlowOptions::default();
    let rep = subcritical_threshold_check(&seeds, &ctx, &opts)?;
    let (_, stat) = preconditioned_flow(&ctx.constant_solution(), &ctx, &opts)?;
    let mut o = Outcome::default();
    let worst = rep.runs.iter().map(|r| r.final_norm).fold(0.0, f64::max);
    let failed = rep.runs.iter().filter(|r| !r.converged_to_zero).count();
    o.le("runs_not_converged", failed as f64, 0.0);
    o.lt("worst_final_norm", worst, cfg.tol(1e-4));
    o.le(
        "u0_not_stationary",
        if stat.stationary { 0.0 } else { 1.0 },
        0.0,
    );
    o.le(
        "u0_energy_drift",
        (stat.final_energy - stat.initial_energy).abs(),
        cfg.tol(1e-12),
    );
    art.csv(
        "subcritical-flow.csv",
        &[
            "seed",
            "target_energy",
            "initial_energy",
            "final_energy",
            "final_norm",
            "iterations",
            "converged",
        ],
        &rep.runs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    i.to_string(),
                    num(targets[i]),
                    num(r.initial_energy),
                    num(r.final_energy),
                    num(r.final_norm),
                    r.iterations.to_string(),
                    r.converged_to_zero.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    o.details = json!({"threshold": rep.threshold, "u0_run": stat, "runs": rep.runs});
    Ok(o)
}

pub fn riesz_check(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    need_n1(cfg, "the Riesz grid suite")?;
    let g = &cfg.grid;
    let mut o = Outcome::default();
    let kernels = [
        ("riesz_1", KernelSpec::riesz(1.0)?),
        ("riesz_2", KernelSpec::riesz(2.0)?),
        ("green_2", KernelSpec::new(KernelKind::Green, 2.0, 1.0)?),
        ("hyper_1", KernelSpec::new(KernelKind::Hyper, 1.0, 1.0)?),
    ];
    let mut rows = Vec::new();
    for (name, k) in &kernels {
        let d = homogeneity_defect(k, 1000, cfg.seed)?;
        o.le(format!("homogeneity_{name}"), d, cfg.tol(1e-12));
        rows.push(vec![
            format!("homogeneity_{name}"),
            "".into(),
            num(d),
            "".into(),
        ]);
    }
    let f = GridFieldH::centered_box(
        g.half_width,
        g.resolution,
        bump(&Point::origin(1), g.bump_width),
    )?;
    let sg = semigroup_check(&f, 1.0, 1.0, g.stride)?;
    o.le("semigroup_rel_error", sg.relative_error, cfg.tol(5e-2));
    rows.push(vec![
        "semigroup".into(),
        g.resolution.to_string(),
        num(sg.relative_error),
        num(sg.fitted_constant),
    ]);
    let mut greens = Vec::new();
    for &res in &g.green_resolutions {
        let f = GridFieldH::centered_box(
            g.green_half_width,
            res,
            bump(&Point::origin(1), g.green_bump_width),
        )?;
        let r = green_inversion_check(&f)?;
        rows.push(vec![
            "green".into(),
            res.to_string(),
            num(r.relative_residual),
            num(r.fitted_constant),
        ]);
        greens.push(r);
    }
    let cs: Vec<f64> = greens.iter().map(|r| r.fitted_constant).collect();
    let spread = cs.iter().cloned().fold(f64::MIN, f64::max)
        / cs.iter().cloned().fold(f64::MAX, f64::min)
        - 1.0;
    o.le("green_constant_spread", spread, cfg.tol(5e-2));
    art.csv(
        "riesz-check.csv",
        &["check", "resolution", "error", "fitted_constant"],
        &rows,
    )?;
    o.details = json!({"semigroup": sg, "green": greens});
    Ok(o)
}

pub fn commutator_check(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    need_k1(cfg, "the closed-form three-commutator")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points = cfg.count_or(1000);
    let mut rows = Vec::with_capacity(points);
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let u = PolyH::random(&mut rng, cfg.n, 3, 4);
        let v = PolyH::random(&mut rng, cfg.n, 3, 4);
        let p = random_point(&mut rng, cfg.n, 1.0);
        let a = three_commutator(|q: &Point| u.eval(q), |q: &Point| v.eval(q), &p, 1e-3);
        let b = commutator_gradient_form(|q: &Point| u.eval(q), |q: &Point| v.eval(q), &p, 1e-3);
        worst = worst.max((a - b).abs());
        rows.push(vec![i.to_string(), num(a), num(b), num((a - b).abs())]);
    }
    let mut o = Outcome::default();
    o.le("max_abs_error", worst, cfg.tol(1e-6));
    art.csv(
        "commutator-check.csv",
        &["case", "three_commutator", "gradient_form", "abs_error"],
        &rows,
    )?;
    o.details = json!({"points": points, "max_abs_error": worst});
    Ok(o)
}

pub fn minimax_explore(
    cfg: &ExperimentConfig,
    unitaries: usize,
    art: &mut Artifacts,
) -> Result<Outcome> {
    let c = consts(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut o = Outcome::default();
    // invariance of E under U(N+1) on a moderate band
    let inv_ctx = SphereEnergy::new(c, Arc::new(HarmonicBasis::build(cfg.n, 4, 4)?))?;
    let probe = SymmetricSpace::new(
        SubgroupSpec {
            antipodal_odd: true,
            ..Default::default()
        },
        &inv_ctx.transform,
    )?
    .random(&mut rng)
    .axpy(1.0, &inv_ctx.constant_solution());
    let mut inv = Vec::with_capacity(unitaries);
    for _ in 0..unitaries {
        inv.push(invariance_check(
            &probe,
            &Unitary::random(&mut rng, cfg.n + 1),
            &inv_ctx,
        )?);
    }
    let inv_max = inv.iter().cloned().fold(0.0, f64::max);
    o.le("energy_invariance", inv_max, cfg.tol(1e-6));

    let jmax = cfg.jmax_or(8);
    let ctx = SphereEnergy::new(c, Arc::new(HarmonicBasis::build(cfg.n, jmax, jmax)?))?;
    let group = SubgroupSpec::hopf_swap_odd();
    let space = SymmetricSpace::new(group, &ctx.transform)?;
    let count = cfg.count_or(10);
    let seeds: Vec<_> = (0..count).map(|_| space.random(&mut rng)).collect();
    let opts = SearchOptions::for_jmax(jmax);
    let results = minimax_search(group, &seeds, &ctx, &opts)?;
    let mut rows = Vec::new();
    let mut candidates = Vec::new();
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(rep) => {
                let name = format!("minimax-candidate-{i}");
                let u = rep.candidate.as_ref().expect("search returns the iterate");
                let coeffs: Vec<Vec<String>> = u
                    .basis
                    .elements
                    .iter()
                    .zip(&u.coeffs)
                    .enumerate()
                    .map(|(ix, (e, x))| {
                        vec![
                            ix.to_string(),
                            e.block.j.to_string(),
                            e.block.l.to_string(),
                            e.m.to_string(),
                            num(*x),
                        ]
                    })
                    .collect();
                art.csv(
                    &format!("{name}.csv"),
                    &["index", "j", "l", "m", "coefficient"],
                    &coeffs,
                )?;
                art.json(
                    &format!("{name}.json"),
                    &json!({
                        "mask": group.label(),
                        "truncation": {"jmax": jmax, "lmax": jmax, "dimension": space.dimension()},
                        "energy": rep.energy,
                        "energy_over_C_E": rep.energy / c.c_e,
                        "residual": rep.residual,
                        "full_residual": rep.full_residual,
                        "lp_mass": rep.lp_mass,
                        "iterations": rep.iterations,
                        "converged": rep.converged,
                        "coefficients": format!("{name}.csv"),
                    }),
                )?;
                rows.push(vec![
                    i.to_string(),
                    num(rep.energy),
                    num(rep.energy - c.c_e),
                    num(rep.residual),
                    num(rep.full_residual),
                    num(rep.lp_mass),
                    rep.iterations.to_string(),
                    rep.converged.to_string(),
                    String::new(),
                ]);
                candidates.push(rep.clone());
            }
            Err(e) => rows.push(vec![
                i.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
                e.to_string(),
            ]),
        }
    }
    art.csv(
        "minimax-explore.csv",
        &[
            "seed",
            "energy",
            "margin_over_C_E",
            "residual",
            "full_residual",
            "lp_mass",
            "iterations",
            "converged",
            "error",
        ],
        &rows,
    )?;
    let good: Vec<_> = candidates
        .iter()
        .filter(|r| r.full_residual < cfg.tol(1e-4) && r.energy > c.c_e)
        .collect();
    o.ge("candidates_above_bubble_level", good.len() as f64, 1.0);
    let margin = good
        .iter()
        .map(|r| r.energy - c.c_e)
        .fold(f64::INFINITY, f64::min);
    let sym_ok = candidates
        .iter()
        .filter(|r| r.converged)
        .all(|r| r.symmetric_criticality_holds());
    o.le(
        "symmetric_criticality_violations",
        if sym_ok { 0.0 } else { 1.0 },
        0.0,
    );

    // Hopf alone from the constant lands on the bubble level
    let hopf = minimax_search(
        SubgroupSpec::hopf(),
        &[ctx.constant_solution().scaled(0.3)],
        &ctx,
        &opts,
    )?;
    let hopf_e = hopf[0].as_ref().map(|r| r.energy).unwrap_or(f64::NAN);
    // p*-mass of the best candidate versus truncation
    let mut trend = Vec::new();
    for j in [4usize, 6] {
        if j >= jmax {
            continue;
        }
        let t = cr_yamabe::symmetry::mass_trend(group, &[j], 3, &c, &mut rng)?;
        trend.extend(t);
    }
    trend.push((
        jmax,
        candidates
            .iter()
            .filter(|r| r.converged)
            .map(|r| r.lp_mass)
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x)))),
    ));
    o.details = json!({
        "mask": group.label(),
        "invariance": {"jmax": 4, "samples": unitaries, "max": inv_max},
        "min_margin_over_C_E": margin,
        "hopf_only_from_constant": {"energy": hopf_e, "energy_minus_C_E": hopf_e - c.c_e},
        "lp_mass_trend": trend,
        "options": opts,
    });
    Ok(o)
}

pub fn calibrate_normalizations(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    need_n1(cfg, "the normalization calibration")?;
    let (kappa, leb) = calibrate_kappa(cfg.n, 64);
    let b = verify::bubble_check(50, &[], 8, cfg.seed)?;
    let g = &cfg.grid;
    let mut greens = Vec::new();
    for &res in &g.green_resolutions {
        let f = GridFieldH::centered_box(
            g.green_half_width,
            res,
            bump(&Point::origin(1), g.green_bump_width),
        )?;
        greens.push((res, green_inversion_check(&f)?.fitted_constant));
    }
    let pv: Vec<(f64, f64)> = [0.5, 1.0, 1.5]
        .iter()
        .map(|&a| (a, pv_normalization(a)))
        .collect();
    let mut rows = vec![
        vec!["kappa_H".into(), num(kappa)],
        vec!["lambda_C_lebesgue_integral".into(), num(leb)],
        vec!["c_Q_fitted".into(), num(b.fitted_c_q)],
        vec!["c_Q_formula".into(), num(b.formula_c_q)],
    ];
    for (res, c) in &greens {
        rows.push(vec![format!("green_constant_n{res}"), num(*c)]);
    }
    for (a, v) in &pv {
        rows.push(vec![format!("pv_normalization_alpha{a}"), num(*v)]);
    }
    let mut o = Outcome::default();
    let all_finite = rows
        .iter()
        .all(|r| r[1].parse::<f64>().map_or(false, f64::is_finite));
    o.le("non_finite_values", if all_finite { 0.0 } else { 1.0 }, 0.0);
    o.le(
        "c_Q_fit_vs_formula",
        (b.fitted_c_q / b.formula_c_q - 1.0).abs(),
        cfg.tol(1e-6),
    );
    art.csv(
        "calibrate-normalizations.csv",
        &["quantity", "value"],
        &rows,
    )?;
    o.details =
        json!({"kappa_H": kappa, "c_Q": b.fitted_c_q, "green": greens, "pv_normalization": pv});
    Ok(o)
}
