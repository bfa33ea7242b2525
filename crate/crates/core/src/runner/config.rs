//! Run configuration: a TOML file with every physical default built in,
//! optionally overridden by `FINOPT_<SECTION>__<KEY>` environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Value;

use super::RunError;
use crate::cmaes::CmaesConfig;
use crate::geometry::GeometryParams;
use crate::objective::PenaltyConfig;
use crate::solver::{DomainSpec, FlowTolerances, PhysicalProps, SimSetup, SolverSettings};

/// Prefix of environment variables that override configuration keys.
pub const ENV_PREFIX: &str = "FINOPT_";

/// Fin parameterisation; the design domain comes from `[domain]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub n_fins: usize,
    pub m_vertices: usize,
    pub r_max: f64,
    pub r_mid: f64,
    pub samples_per_segment: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            n_fins: 2,
            m_vertices: 4,
            r_max: 2.5e-3,
            r_mid: 1.0,
            samples_per_segment: 16,
        }
    }
}

/// Optimiser settings; unset entries take the standard defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesSection {
    pub lambda: Option<usize>,
    pub mu: Option<usize>,
    pub sigma0: f64,
    /// Initial mean; defaults to centred, evenly spaced fins of radius
    /// `0.3 r_max` with neutral tangents.
    pub mean0: Option<Vec<f64>>,
    pub max_generations: usize,
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for CmaesSection {
    fn default() -> Self {
        Self {
            lambda: Some(8),
            mu: None,
            sigma0: 0.15,
            mean0: None,
            max_generations: 100,
            ftol: 0.0,
            xtol: 1e-12,
        }
    }
}

/// Straight-fin reference designs: two rectangles of fixed streamwise
/// length whose transverse thickness is bisected per temperature limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(rename = "T_cons")]
    pub t_cons: Vec<f64>,
    /// Streamwise fin length [m].
    pub length: f64,
    /// Thickness search interval [m].
    pub w_min: f64,
    pub w_max: f64,
    pub bisection_steps: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            t_cons: vec![550.0, 500.0, 475.0],
            length: 0.75e-3,
            w_min: 0.05e-3,
            w_max: 2.4e-3,
            bisection_steps: 14,
        }
    }
}

/// Where and what to write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub svg: bool,
    pub checkpoint_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("finopt-out"),
            svg: true,
            checkpoint_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: GeometrySection,
    pub domain: DomainSpec,
    pub physics: PhysicalProps,
    pub tolerances: FlowTolerances,
    pub solver: SolverSettings,
    pub penalty: PenaltyConfig,
    pub cmaes: CmaesSection,
    pub baseline: BaselineSection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses TOML text, applies `overrides` (`(variable, value)` pairs
    /// named like `FINOPT_PENALTY__T_CONS`) and validates the result.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self, RunError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let cfg = if overrides.is_empty() {
            cfg
        } else {
            let mut value = Value::try_from(&cfg).map_err(|e| RunError::config(e.to_string()))?;
            for (var, raw) in overrides {
                apply_override(&mut value, var, raw)?;
            }
            value.try_into().map_err(|e: toml::de::Error| {
                RunError::config(format!("after environment overrides: {}", e.message()))
            })?
        };
        cfg.validate().map_err(|(key, message)| RunError::Config {
            line: key.and_then(|(section, name)| locate_key(text, section, name)),
            message,
        })?;
        Ok(cfg)
    }

    /// Reads `path` and applies the `FINOPT_` variables of the process
    /// environment.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        Self::from_toml(&text, &env_overrides()).map_err(|e| match e {
            RunError::Config { line, message } => RunError::Config {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn geometry_params(&self) -> GeometryParams {
        GeometryParams {
            n_fins: self.geometry.n_fins,
            m_vertices: self.geometry.m_vertices,
            r_max: self.geometry.r_max,
            r_mid: self.geometry.r_mid,
            design_domain: self.domain.design_region,
            samples_per_segment: self.geometry.samples_per_segment,
        }
    }

    pub fn sim_setup(&self) -> SimSetup {
        SimSetup {
            props: self.physics.clone(),
            domain: self.domain.clone(),
            tolerances: self.tolerances.clone(),
            settings: self.solver,
        }
    }

    /// Initial mean used when `[cmaes] mean0` is absent.
    pub fn default_mean0(&self) -> Vec<f64> {
        let n = self.geometry.n_fins;
        let mut x = vec![0.0; n];
        x.extend((0..n).map(|f| (2 * f + 1) as f64 / n as f64 - 1.0));
        for _ in 0..n * self.geometry.m_vertices {
            x.extend([0.3, 0.0, 0.5]);
        }
        x
    }

    pub fn cmaes_config(&self) -> CmaesConfig {
        let mean0 = self.cmaes.mean0.clone().unwrap_or_else(|| self.default_mean0());
        let lambda = self
            .cmaes
            .lambda
            .unwrap_or_else(|| CmaesConfig::default_lambda(mean0.len()));
        let mut c = CmaesConfig::with_population(mean0, self.cmaes.sigma0, lambda, self.seed);
        if let Some(mu) = self.cmaes.mu {
            let reference = CmaesConfig::with_population(vec![0.0; c.dim], 1.0, 2 * mu, 0);
            c.mu = mu;
            c.recomb_weights = reference.recomb_weights;
        }
        c.max_generations = self.cmaes.max_generations;
        c.ftol = self.cmaes.ftol;
        c.xtol = self.cmaes.xtol;
        c
    }

    /// Cross-module consistency. Errors carry the `(section, key)` they
    /// concern so the caller can point at the offending line.
    fn validate(&self) -> Result<(), (Option<ConfigKey>, String)> {
        self.sim_setup()
            .validate()
            .map_err(|e| (Some(("domain", "design_region")), e.to_string()))?;
        self.geometry_params()
            .validate()
            .map_err(|e| (Some(("geometry", "n_fins")), e.to_string()))?;
        self.penalty.validate().map_err(|m| (Some(("penalty", "T_cons")), m))?;
        let dim = self.geometry_params().dimension();
        if let Some(m) = &self.cmaes.mean0 {
            if m.len() != dim {
                return Err((
                    Some(("cmaes", "mean0")),
                    format!("mean0 has {} entries but the geometry needs {dim}", m.len()),
                ));
            }
        }
        self.cmaes_config()
            .validate()
            .map_err(|e| (Some(("cmaes", "lambda")), e.to_string()))?;
        if self.output.checkpoint_every == 0 {
            return Err((
                Some(("output", "checkpoint_every")),
                "checkpoint_every must be at least 1".into(),
            ));
        }
        let b = &self.baseline;
        if !(b.length > 0.0 && b.w_min > 0.0 && b.w_max > b.w_min) {
            return Err((
                Some(("baseline", "w_min")),
                "baseline needs 0 < w_min < w_max and length > 0".into(),
            ));
        }
        Ok(())
    }
}

/// `(section, key)` of a configuration entry.
type ConfigKey = (&'static str, &'static str);

/// `FINOPT_` variables of the current process, sorted by name.
pub fn env_overrides() -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    v.sort();
    v
}

fn apply_override(root: &mut Value, var: &str, raw: &str) -> Result<(), RunError> {
    let path: Vec<&str> = var.trim_start_matches(ENV_PREFIX).split("__").collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(RunError::config(format!("{var}: malformed override name")));
    }
    let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut node = root;
    for (k, part) in path.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| RunError::config(format!("{var}: `{part}` is not inside a section")))?;
        let key = table
            .keys()
            .find(|existing| existing.eq_ignore_ascii_case(part))
            .cloned()
            .unwrap_or_else(|| part.to_ascii_lowercase());
        if k + 1 == path.len() {
            table.insert(key, parsed);
            return Ok(());
        }
        node = table.entry(key).or_insert_with(|| Value::Table(toml::Table::new()));
    }
    Ok(())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of `key = ...` inside `[section]`, or of the section header
/// when the key is absent.
fn locate_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut in_section = false;
    let mut header = None;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            in_section = line.trim_matches(|c| c == '[' || c == ']').trim() == section;
            if in_section {
                header = Some(k + 1);
            }
            continue;
        }
        if in_section {
            if let Some((lhs, _)) = line.split_once('=') {
                if lhs.trim().eq_ignore_ascii_case(key) {
                    return Some(k + 1);
                }
            }
        }
    }
    header
}
