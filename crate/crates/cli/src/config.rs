//! Experiment configuration: a single nested TOML file.
//!
//! A config may start from a named builtin (`builtin = "golden2d"`); any
//! top-level section present in the file then replaces the builtin's section
//! wholesale. Scheme constants are validated on load and violations name the
//! failed inequality.

use anyhow::{anyhow, bail, Context, Result};
use quasiflow::fourier::FourierField;
use quasiflow::kam::SchemeConstants;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One real mode: `cos·cos(k·θ) + sin·sin(k·θ)` per range component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSpec {
    pub k: Vec<i32>,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

pub fn build_field(n: usize, m: usize, modes: &[ModeSpec]) -> Result<FourierField> {
    let mut f = FourierField::zero(n, m, 0);
    for mode in modes {
        if mode.k.len() != n {
            bail!("mode k {:?} has wrong dimension (expected {n})", mode.k);
        }
        let mut cos = mode.cos.clone();
        let mut sin = mode.sin.clone();
        cos.resize(m, 0.0);
        sin.resize(m, 0.0);
        f = f.with_real_mode(&mode.k, &cos, &sin);
    }
    Ok(f)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeSection {
    pub dim: usize,
    pub gamma: f64,
    pub k0: u32,
    pub s0: Option<f64>,
    pub s1: Option<f64>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    pub kappa: Option<f64>,
    pub b: Option<f64>,
    pub max_steps: Option<usize>,
    pub convergence_tol: Option<f64>,
    pub divergence_guard: Option<f64>,
    pub k_box: Option<i32>,
    pub eta_star: Option<f64>,
    pub step_delta: Option<f64>,
}

impl SchemeSection {
    pub fn constants(&self) -> Result<SchemeConstants> {
        let mut c = SchemeConstants::defaults(self.dim, self.gamma, self.k0);
        if let Some(v) = self.s0 {
            c.s0 = v;
        }
        if let Some(v) = self.mu {
            c.mu = v;
        }
        if let Some(v) = self.rho {
            c.rho = v;
        }
        if let Some(v) = self.kappa {
            c.kappa = v;
        }
        // Recompute the dependent minimal defaults before optional overrides.
        if self.s0.is_some() || self.mu.is_some() {
            c.s1 = (c.chi * c.mu + c.s0 + 0.5).ceil();
            c.b_exp = (c.mu * c.chi + c.kappa + 1.0 + 0.5).ceil();
        }
        if let Some(v) = self.s1 {
            c.s1 = v;
        }
        if let Some(v) = self.b {
            c.b_exp = v;
        }
        if let Some(v) = self.max_steps {
            c.max_steps = v;
        }
        if let Some(v) = self.convergence_tol {
            c.convergence_tol = v;
        }
        if let Some(v) = self.divergence_guard {
            c.divergence_guard = v;
        }
        if let Some(v) = self.k_box {
            c.k_box = v;
        }
        if let Some(v) = self.eta_star {
            c.eta_star = v;
        }
        if let Some(v) = self.step_delta {
            c.step_delta = v;
        }
        c.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSection {
    pub xi: Vec<f64>,
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// "uniform" | "low-discrepancy" | "monte-carlo"
    pub sampling: String,
    pub counts: Option<Vec<usize>>,
    pub samples: Option<usize>,
    pub gammas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportSection {
    pub omega: Vec<f64>,
    /// Drift ζ; exactly one of `zeta` / `m0` must be present.
    pub zeta: Option<Vec<f64>>,
    /// Constant frequency map m₀(ω) ≡ m0 (the ζ = m₀(ω) case).
    pub m0: Option<Vec<f64>>,
    #[serde(default)]
    pub a0_modes: Vec<ModeSpec>,
    #[serde(default)]
    pub u0_modes: Vec<ModeSpec>,
    pub t_max: Option<f64>,
    pub t_steps: Option<usize>,
    pub s_list: Option<Vec<f64>>,
    pub resolution: Option<usize>,
    #[serde(default)]
    pub f_modes: Vec<ModeSpec>,
}

impl TransportSection {
    pub fn zeta(&self) -> Result<Vec<f64>> {
        match (&self.zeta, &self.m0) {
            (Some(z), None) => Ok(z.clone()),
            (None, Some(m)) => Ok(m.clone()),
            _ => bail!("transport needs exactly one of `zeta` or `m0`"),
        }
    }

    pub fn space_dim(&self) -> Result<usize> {
        Ok(self.zeta()?.len())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifySection {
    pub rotation_t: Option<f64>,
    pub rotation_dt: Option<f64>,
    pub flow_t: Option<f64>,
    pub flow_dt: Option<f64>,
    pub theta0: Option<Vec<f64>>,
    pub eps_ladder: Option<Vec<f64>>,
    #[serde(default)]
    pub delta_modes: Vec<ModeSpec>,
    pub lipschitz_ladder: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub scheme: SchemeSection,
    pub problem: Option<ProblemSection>,
    pub grid: Option<GridSection>,
    pub transport: Option<TransportSection>,
    #[serde(default)]
    pub verify: VerifySection,
    pub output: Option<OutputSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut value: toml::Value = text.parse().context("config is not valid TOML")?;
        if let Some(name) = value
            .get("builtin")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
        {
            let base_text = crate::fixtures::builtin_toml(&name)
                .ok_or_else(|| anyhow!("unknown builtin '{name}'"))?;
            let mut base: toml::Value = base_text.parse().expect("builtin TOML is valid");
            // Shallow merge: user sections replace builtin sections.
            if let (Some(bt), Some(ut)) = (base.as_table_mut(), value.as_table_mut()) {
                for (key, val) in ut.iter() {
                    if key != "builtin" {
                        bt.insert(key.clone(), val.clone());
                    }
                }
            }
            value = base;
        }
        let config: ExperimentConfig = value.try_into().context("config schema error")?;
        config.scheme.constants()?; // surface constant violations at load
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn constants(&self) -> Result<SchemeConstants> {
        self.scheme.constants()
    }

    pub fn problem_field(&self) -> Result<(Vec<f64>, FourierField)> {
        let p = self
            .problem
            .as_ref()
            .ok_or_else(|| anyhow!("config has no [problem] section"))?;
        let n = self.scheme.dim;
        if p.xi.len() != n {
            bail!("xi has length {}, scheme.dim is {n}", p.xi.len());
        }
        let f0 = build_field(n, n, &p.modes)?;
        Ok((p.xi.clone(), f0))
    }
}
