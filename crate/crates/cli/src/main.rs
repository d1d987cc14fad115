//! `cryamabe`: seeded experiment driver.  Every subcommand writes its CSV
//! tables and a JSON report to the output directory and exits 0 when all
//! of its checks pass, 1 when one fails, 2 on a usage error.

mod commands;
mod config;
mod io;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

use config::{ExperimentConfig, Overrides};

#[derive(Parser, Debug)]
#[command(
    name = "cryamabe",
    version,
    about = "Fractional CR Yamabe numerical laboratory"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long = "N", global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    k: Option<f64>,
    #[arg(long, global = true)]
    jmax: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory for CSV/JSON artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// multiplies every pass/fail tolerance
    #[arg(long = "tol-scale", global = true)]
    tol_scale: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// group axioms, gauge homogeneity, left invariance
    VerifyGroup,
    /// Cayley covariance of A_2 and ball inclusions
    VerifyCayley,
    /// differential A_2 against the spectral eigenvalues, orthonormality
    VerifySpectral,
    /// Sobolev quotient of the constant and the closed-form identity
    SobolevSharpness,
    /// bubble PDE residual, c_Q calibration and E_H
    BubbleResidual,
    /// energy gap along the R_n ladder
    PsQuantization {
        #[arg(long, default_value_t = 1)]
        bubbles: usize,
        /// "default" or a comma-separated decreasing list
        #[arg(long)]
        ladder: Option<String>,
    },
    /// H^{-k} residual decay along the ladder and its negative control
    GradientDecay {
        #[arg(long, default_value_t = 1)]
        bubbles: usize,
    },
    /// preconditioned flow below C_E
    SubcriticalFlow,
    /// kernel homogeneity, semigroup and Green constant on grids
    RieszCheck,
    /// three-commutator against its gradient form
    CommutatorCheck,
    /// U(N+1) invariance and the symmetric Nehari search
    MinimaxExplore {
        #[arg(long, default_value_t = 100)]
        unitaries: usize,
    },
    /// κ_H, c_Q, Green constant and PV normalizations
    CalibrateNormalizations,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::VerifyGroup => "verify-group",
            Cmd::VerifyCayley => "verify-cayley",
            Cmd::VerifySpectral => "verify-spectral",
            Cmd::SobolevSharpness => "sobolev-sharpness",
            Cmd::BubbleResidual => "bubble-residual",
            Cmd::PsQuantization { .. } => "ps-quantization",
            Cmd::GradientDecay { .. } => "gradient-decay",
            Cmd::SubcriticalFlow => "subcritical-flow",
            Cmd::RieszCheck => "riesz-check",
            Cmd::CommutatorCheck => "commutator-check",
            Cmd::MinimaxExplore { .. } => "minimax-explore",
            Cmd::CalibrateNormalizations => "calibrate-normalizations",
        }
    }
}

fn parse_ladder(s: &str) -> Result<Vec<f64>, String> {
    if s == "default" {
        return Ok(cr_yamabe::bubbling::DEFAULT_LADDER.to_vec());
    }
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad ladder entry {x:?}: {e}"))
        })
        .collect()
}

fn cap_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("CRYAMABE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("CRYAMABE_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let usage_exit = |msg: String| {
        eprintln!("error: {msg}");
        ExitCode::from(2)
    };
    if let Err(e) = cap_threads() {
        return usage_exit(e);
    }
    let o = Overrides {
        n: cli.common.n,
        k: cli.common.k,
        jmax: cli.common.jmax,
        seed: cli.common.seed,
        out: cli.common.out.clone(),
        tol_scale: cli.common.tol_scale,
    };
    let mut cfg = match ExperimentConfig::load(cli.common.config.as_deref(), &o) {
        Ok(c) => c,
        Err(e) => return usage_exit(e),
    };
    if let Cmd::PsQuantization {
        ladder: Some(l), ..
    } = &cli.cmd
    {
        match parse_ladder(l) {
            Ok(v) => cfg.ladder = v,
            Err(e) => return usage_exit(e),
        }
        if let Err(e) = cfg.validate() {
            return usage_exit(e);
        }
    }
    let name = cli.cmd.name();
    let mut art = match io::Artifacts::new(&cfg.out) {
        Ok(a) => a,
        Err(e) => return usage_exit(format!("{e:#}")),
    };
    let started = std::time::Instant::now();
    let result = match &cli.cmd {
        Cmd::VerifyGroup => commands::verify_group(&cfg, &mut art),
        Cmd::VerifyCayley => commands::verify_cayley(&cfg, &mut art),
        Cmd::VerifySpectral => commands::verify_spectral(&cfg, &mut art),
        Cmd::SobolevSharpness => commands::sobolev_sharpness(&cfg, &mut art),
        Cmd::BubbleResidual => commands::bubble_residual(&cfg, &mut art),
        Cmd::PsQuantization { bubbles, .. } => commands::ps_quantization(&cfg, *bubbles, &mut art),
        Cmd::GradientDecay { bubbles } => commands::gradient_decay(&cfg, *bubbles, &mut art),
        Cmd::SubcriticalFlow => commands::subcritical_flow(&cfg, &mut art),
        Cmd::RieszCheck => commands::riesz_check(&cfg, &mut art),
        Cmd::CommutatorCheck => commands::commutator_check(&cfg, &mut art),
        Cmd::MinimaxExplore { unitaries } => commands::minimax_explore(&cfg, *unitaries, &mut art),
        Cmd::CalibrateNormalizations => commands::calibrate_normalizations(&cfg, &mut art),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<commands::Usage>() {
                return usage_exit(u.to_string());
            }
            eprintln!("error: {e:#}");
            let report = json!({"subcommand": name, "pass": false, "error": format!("{e:#}")});
            let _ = art.json(&format!("{name}.json"), &report);
            return ExitCode::from(1);
        }
    };
    let pass = outcome.pass();
    for c in &outcome.checks {
        println!(
            "{} {name}: {} = {:.3e} (needs {} {:.3e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.tolerance
        );
    }
    let failures: Vec<&str> = outcome
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    let report = json!({
        "subcommand": name,
        "pass": pass,
        "failures": failures,
        "config": cfg,
        "checks": outcome.checks,
        "details": outcome.details,
        "artifacts": art.written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "elapsed_seconds": started.elapsed().as_secs_f64(),
    });
    if let Err(e) = art.json(&format!("{name}.json"), &report) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    if pass {
        ExitCode::SUCCESS
    } else {
        eprintln!("{name}: failed checks: {}", failures.join(", "));
        ExitCode::from(1)
    }
}
