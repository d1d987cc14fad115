//! Experiment configuration: defaults, then a JSON file, then flags.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSettings {
    /// "coarse" or "fine" rule for the resolved bubbling energies
    pub rule: String,
    /// whole-space tensor points per axis for E_H
    pub whole_space_points: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            rule: "fine".into(),
            whole_space_points: 40,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    /// semigroup grid resolution per axis
    pub resolution: usize,
    /// box [−a, a]² × [−a², a²]
    pub half_width: f64,
    pub bump_width: f64,
    /// the two resolutions of the Green-constant stability check
    pub green_resolutions: Vec<usize>,
    pub green_half_width: f64,
    pub green_bump_width: f64,
    /// output stride of the semigroup comparison
    pub stride: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            resolution: 64,
            half_width: 2.0,
            bump_width: 0.5,
            green_resolutions: vec![32, 48],
            green_half_width: 1.0,
            green_bump_width: 0.6,
            stride: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub k: f64,
    /// per-subcommand default when absent
    pub jmax: Option<usize>,
    pub lmax: Option<usize>,
    pub quadrature: QuadratureSettings,
    pub grid: GridSettings,
    pub ladder: Vec<f64>,
    pub seed: u64,
    /// number of random seeds/samples where a subcommand draws several
    pub seed_count: Option<usize>,
    /// multiplies every pass/fail tolerance
    pub tol_scale: f64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 1,
            k: 1.0,
            jmax: None,
            lmax: None,
            quadrature: QuadratureSettings::default(),
            grid: GridSettings::default(),
            ladder: cr_yamabe::bubbling::DEFAULT_LADDER.to_vec(),
            seed: 0,
            seed_count: None,
            tol_scale: 1.0,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub k: Option<f64>,
    pub jmax: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol_scale: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self, String> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| format!("bad config {}: {e}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = o.n {
            cfg.n = v;
        }
        if let Some(v) = o.k {
            cfg.k = v;
        }
        if let Some(v) = o.jmax {
            cfg.jmax = Some(v);
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = &o.out {
            cfg.out = v.clone();
        }
        if let Some(v) = o.tol_scale {
            cfg.tol_scale = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("N must be at least 1".into());
        }
        let q = 2.0 * self.n as f64 + 2.0;
        if !(self.k > 0.0 && 2.0 * self.k < q) {
            return Err(format!("need 0 < 2k < Q = {q}, got k = {}", self.k));
        }
        if let (Some(j), Some(l)) = (self.jmax, self.lmax) {
            if j != l {
                return Err("real band-limited functions need jmax = lmax".into());
            }
        }
        cr_yamabe::bubbling::validate_ladder(&self.ladder).map_err(|e| e.to_string())?;
        if !(self.tol_scale > 0.0) || !self.tol_scale.is_finite() {
            return Err("--tol-scale must be positive".into());
        }
        if !matches!(self.quadrature.rule.as_str(), "coarse" | "fine") {
            return Err("quadrature.rule must be \"coarse\" or \"fine\"".into());
        }
        let g = &self.grid;
        if g.resolution < 8 || g.stride == 0 || g.resolution % g.stride != 0 {
            return Err("grid.resolution must be ≥ 8 and divisible by grid.stride".into());
        }
        if g.green_resolutions.len() < 2 || g.green_resolutions.iter().any(|r| *r < 8) {
            return Err("grid.green_resolutions needs two resolutions ≥ 8".into());
        }
        Ok(())
    }

    pub fn jmax_or(&self, default: usize) -> usize {
        self.jmax.or(self.lmax).unwrap_or(default)
    }

    pub fn count_or(&self, default: usize) -> usize {
        self.seed_count.unwrap_or(default)
    }

    /// Tolerance after the user's scale factor.
    pub fn tol(&self, t: f64) -> f64 {
        t * self.tol_scale
    }
}
