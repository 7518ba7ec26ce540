use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use epilimit::distributions::{equilibrium_dist, DurationDist, JointDurationDist};
use epilimit::model::{Compartment, InitialFractions, ModelKind, ModelSpec, Periods};
use epilimit::{ContactRate, TimeGrid};
use serde::{Deserialize, Serialize};

/// A config value that failed validation, with the dotted path of the offending key.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config value `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Simulate,
    Fluid,
    Fclt,
    Verify,
    Equilibrium,
    Rate,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Simulate => "simulate",
            Engine::Fluid => "fluid",
            Engine::Fclt => "fclt",
            Engine::Verify => "verify",
            Engine::Equilibrium => "equilibrium",
            Engine::Rate => "rate",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub engine: Option<Engine>,
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub probes: Vec<ProbeConfig>,
    #[serde(default)]
    pub fclt: FcltConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub lambda: LambdaConfig,
    pub infectious: DistConfig,
    pub latent: Option<DistConfig>,
    pub immune: Option<DistConfig>,
    /// Law of the second period given the first, as buckets on the first period.
    #[serde(default)]
    pub conditional: Vec<BucketConfig>,
    #[serde(default)]
    pub initial_laws: InitialLaws,
    /// Residual period of agents in the last stage at time 0.
    pub residual: Option<DistConfig>,
    /// Residual first period of agents in the first stage at time 0 (staged models).
    pub residual_first: Option<DistConfig>,
    #[serde(default)]
    pub init: InitConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaConfig {
    Constant(f64),
    Piecewise(PiecewiseRate),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseRate {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistConfig {
    pub family: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketConfig {
    pub at: f64,
    pub family: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaws {
    /// Initial residuals follow the full-period laws.
    Same,
    /// Initial residuals follow the stationary-excess laws.
    #[default]
    Stationary,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default)]
    pub exposed: f64,
    #[serde(default)]
    pub infectious: f64,
    #[serde(default)]
    pub immune: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Population sizes for the rate engine.
    #[serde(default)]
    pub n_list: Vec<u64>,
}

fn default_n() -> u64 {
    1000
}

fn default_reps() -> usize {
    1
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            reps: default_reps(),
            seed: 0,
            n_list: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    /// Run directory name; defaults to the config file stem.
    pub name: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Write every replication's path, not just ensemble statistics.
    #[serde(default = "yes")]
    pub paths: bool,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            name: None,
            formats: default_formats(),
            paths: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub compartment: String,
    pub t: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcltConfig {
    #[serde(default)]
    pub var_exposed: f64,
    #[serde(default)]
    pub var_infectious: f64,
    #[serde(default)]
    pub var_immune: f64,
    #[serde(default)]
    pub keep_drivers: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-4
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
        }
    }
}

/// Parse a config strictly: unknown keys and type errors report the key path.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let reason = inner.message().trim().to_string();
        bad(if field == "." { "<root>".into() } else { field }, reason)
    })
}

pub fn load(path: &Path) -> anyhow::Result<(ExperimentConfig, Vec<u8>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| bad("<root>", "config is not UTF-8"))?;
    let config = parse(text)?;
    config.validate()?;
    Ok((config, bytes))
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be finite, got {v}")))
    }
}

fn dist(field: &str, d: &DistConfig) -> Result<DurationDist, ConfigError> {
    build_dist(&d.family, &d.params).map_err(|e| bad(field, e.to_string()))
}

fn build_dist(family: &str, params: &[f64]) -> epilimit::Result<DurationDist> {
    match (family, params) {
        ("lognormal_mean", [mean, sigma]) => DurationDist::lognormal_with_mean(*mean, *sigma),
        ("lognormal_mean", _) => DurationDist::from_params("lognormal", params),
        _ => DurationDist::from_params(family, params),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        finite("grid.dt", g.dt)?;
        finite("grid.horizon", g.horizon)?;
        if g.dt <= 0.0 {
            return Err(bad("grid.dt", format!("must be > 0, got {}", g.dt)));
        }
        if g.horizon < g.dt {
            return Err(bad("grid.horizon", format!("must be >= grid.dt ({}), got {}", g.dt, g.horizon)));
        }
        if self.ensemble.reps < 1 {
            return Err(bad("ensemble.reps", "must be >= 1"));
        }
        if self.ensemble.n < 1 {
            return Err(bad("ensemble.n", "must be >= 1"));
        }
        if self.output.formats.is_empty() {
            return Err(bad("output.formats", "choose at least one of \"csv\", \"json\""));
        }
        if let Some(name) = &self.output.name {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(bad("output.name", format!("`{name}` is not a plain directory name")));
            }
        }
        let grid = self.time_grid()?;
        for (k, p) in self.probes.iter().enumerate() {
            let field = format!("probes[{k}]");
            let c: Compartment = p
                .compartment
                .parse()
                .map_err(|_| bad(format!("{field}.compartment"), format!("unknown compartment `{}`", p.compartment)))?;
            if !matches!(c, Compartment::S | Compartment::E | Compartment::I | Compartment::R) {
                return Err(bad(format!("{field}.compartment"), "probes take S, E, I or R"));
            }
            if !grid.is_aligned(p.t) || p.t < 0.0 || p.t > grid.horizon() + 1e-9 * grid.dt() {
                return Err(bad(format!("{field}.t"), format!("{} is not a grid node", p.t)));
            }
        }
        let f = &self.fclt;
        for (name, v) in [
            ("fclt.var_exposed", f.var_exposed),
            ("fclt.var_infectious", f.var_infectious),
            ("fclt.var_immune", f.var_immune),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(name, format!("must be a nonnegative variance, got {v}")));
            }
        }
        if !(self.verify.tolerance.is_finite() && self.verify.tolerance > 0.0) {
            return Err(bad("verify.tolerance", "must be positive"));
        }
        self.model_spec()?;
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid, ConfigError> {
        TimeGrid::new(self.grid.horizon, self.grid.dt).map_err(|e| bad("grid", e.to_string()))
    }

    pub fn probes(&self) -> Vec<(Compartment, f64)> {
        if self.probes.is_empty() {
            return vec![(Compartment::I, self.grid.horizon)];
        }
        self.probes
            .iter()
            .map(|p| (p.compartment.parse().expect("validated"), p.t))
            .collect()
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let m = &self.model;
        let lambda = match &m.lambda {
            LambdaConfig::Constant(v) => ContactRate::Constant(*v),
            LambdaConfig::Piecewise(p) => ContactRate::Piecewise {
                times: p.times.clone(),
                values: p.values.clone(),
            },
        };
        lambda.validate().map_err(|e| bad("model.lambda", e.to_string()))?;
        let infectious = dist("model.infectious", &m.infectious)?;
        let i = &m.init;
        for (name, v) in [
            ("model.init.exposed", i.exposed),
            ("model.init.infectious", i.infectious),
            ("model.init.immune", i.immune),
        ] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(bad(name, format!("must be a fraction in [0, 1], got {v}")));
            }
        }
        let forbid = |field: &str, present: bool| -> Result<(), ConfigError> {
            if present {
                Err(bad(field, format!("not used by the {} model", m.kind)))
            } else {
                Ok(())
            }
        };
        let periods = match m.kind {
            ModelKind::Sir | ModelKind::Sis => {
                forbid("model.latent", m.latent.is_some())?;
                forbid("model.immune", m.immune.is_some())?;
                forbid("model.conditional", !m.conditional.is_empty())?;
                forbid("model.residual_first", m.residual_first.is_some())?;
                forbid("model.init.exposed", i.exposed != 0.0)?;
                forbid("model.init.immune", i.immune != 0.0)?;
                let f0 = match (&m.residual, m.initial_laws) {
                    (Some(r), _) => dist("model.residual", r)?,
                    (None, InitialLaws::Same) => infectious.clone(),
                    (None, InitialLaws::Stationary) => {
                        equilibrium_dist(&infectious).map_err(|e| bad("model.infectious", e.to_string()))?
                    }
                };
                Periods::Single { f: infectious, f0 }
            }
            ModelKind::Seir | ModelKind::Sirs => {
                let (first, second, other) = if m.kind == ModelKind::Seir {
                    forbid("model.immune", m.immune.is_some())?;
                    forbid("model.init.immune", i.immune != 0.0)?;
                    let latent = m
                        .latent
                        .as_ref()
                        .ok_or_else(|| bad("model.latent", "required by the SEIR model"))?;
                    (dist("model.latent", latent)?, infectious, "model.latent")
                } else {
                    forbid("model.latent", m.latent.is_some())?;
                    forbid("model.init.exposed", i.exposed != 0.0)?;
                    let immune = m
                        .immune
                        .as_ref()
                        .ok_or_else(|| bad("model.immune", "required by the SIRS model"))?;
                    (infectious, dist("model.immune", immune)?, "model.infectious")
                };
                let h = if m.conditional.is_empty() {
                    JointDurationDist::independent(first.clone(), second.clone())
                } else {
                    let mut buckets = Vec::new();
                    for (k, b) in m.conditional.iter().enumerate() {
                        let field = format!("model.conditional[{k}]");
                        finite(&format!("{field}.at"), b.at)?;
                        let d = build_dist(&b.family, &b.params).map_err(|e| bad(&field, e.to_string()))?;
                        buckets.push((b.at, d));
                    }
                    JointDurationDist::bucketed(first.clone(), buckets)
                        .map_err(|e| bad("model.conditional", e.to_string()))?
                };
                let (h0_first, f0_default) = match m.initial_laws {
                    InitialLaws::Same => (first, second),
                    InitialLaws::Stationary => (
                        equilibrium_dist(&first).map_err(|e| bad(other, e.to_string()))?,
                        equilibrium_dist(&second).map_err(|e| bad("model.residual", e.to_string()))?,
                    ),
                };
                let h0_first = match &m.residual_first {
                    Some(r) => dist("model.residual_first", r)?,
                    None => h0_first,
                };
                let h0 = JointDurationDist {
                    marginal: h0_first,
                    conditional: h.conditional.clone(),
                };
                let f0 = match &m.residual {
                    Some(r) => dist("model.residual", r)?,
                    None => f0_default,
                };
                Periods::Staged { h, h0, f0 }
            }
        };
        let spec = ModelSpec {
            kind: m.kind,
            lambda,
            periods,
            init: InitialFractions {
                exposed: i.exposed,
                infectious: i.infectious,
                immune: i.immune,
            },
        };
        spec.validate().map_err(|e| bad("model", e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
kind = "SIR"
lambda = 1.5
infectious = { family = "exponential", params = [1.0] }
init = { infectious = 0.05 }

[grid]
horizon = 5.0
dt = 0.01
"#;

    #[test]
    fn minimal_config_builds_a_spec() {
        let c = parse(BASE).unwrap();
        c.validate().unwrap();
        let spec = c.model_spec().unwrap();
        assert_eq!(spec.kind, ModelKind::Sir);
        assert_eq!(c.probes(), vec![(Compartment::I, 5.0)]);
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let text = BASE.replace("dt = 0.01", "dt = 0.01\nstep = 2");
        let e = parse(&text).unwrap_err();
        assert_eq!(e.field, "grid.step");
        assert!(e.reason.contains("unknown field"), "{e}");
        let text = BASE.replace("params = [1.0] }", "params = [1.0], shape = 2 }");
        let e = parse(&text).unwrap_err();
        assert_eq!(e.field, "model.infectious.shape");
    }

    #[test]
    fn zero_step_names_the_field() {
        let c = parse(&BASE.replace("dt = 0.01", "dt = 0.0")).unwrap();
        assert_eq!(c.validate().unwrap_err().field, "grid.dt");
    }

    #[test]
    fn same_laws_reuse_the_full_period() {
        let text = BASE
            .replace("init = ", "initial_laws = \"same\"\ninit = ")
            .replace("\"exponential\", params = [1.0]", "\"gamma\", params = [2.0, 2.0]");
        let spec = parse(&text).unwrap().model_spec().unwrap();
        let Periods::Single { f, f0 } = spec.periods else { panic!() };
        assert_eq!(f, f0);
    }

    #[test]
    fn staged_models_need_their_second_law() {
        let text = BASE.replace("\"SIR\"", "\"SEIR\"");
        let c = parse(&text).unwrap();
        assert_eq!(c.validate().unwrap_err().field, "model.latent");
    }

    #[test]
    fn stationary_single_law_is_the_excess_law() {
        let text = BASE.replace("\"exponential\", params = [1.0]", "\"gamma\", params = [2.0, 2.0]");
        let spec = parse(&text).unwrap().model_spec().unwrap();
        let Periods::Single { f0, .. } = spec.periods else { panic!() };
        assert_eq!(f0.family_name(), "stationary_excess");
    }
}
