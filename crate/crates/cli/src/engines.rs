use anyhow::Result;
use epilimit::agent_sim::{simulate_ensemble, DEFAULT_MEMORY_BUDGET};
use epilimit::distributions::{Conditional, DurationDist};
use epilimit::equilibria::{sirs_equilibrium, sis_equilibrium, verify_equilibrium_identities};
use epilimit::fclt::{fclt_ensemble, DriverCovariance, FcltPath, InitialFluctuation};
use epilimit::fluid::{solve_fluid, solve_markovian_ode, FluidSolution};
use epilimit::harness::{convergence_rate, diffusion_scale, empirical_cov, EnsembleStats, FluctuationPath};
use epilimit::model::{Compartment, ModelKind, ModelSpec, Periods};
use epilimit::ContactRate;
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{RunDir, Table};

/// What an engine reports back to the runner.
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

impl Outcome {
    fn ok(summary: impl Into<String>) -> Self {
        Self {
            passed: true,
            summary: summary.into(),
        }
    }
}

fn compartments(kind: ModelKind) -> Vec<Compartment> {
    use Compartment::*;
    match kind {
        ModelKind::Sis => vec![S, I],
        ModelKind::Sir | ModelKind::Sirs => vec![S, I, R],
        ModelKind::Seir => vec![S, E, I, R],
    }
}

fn config_error(field: &str, reason: impl Into<String>) -> anyhow::Error {
    ConfigError {
        field: field.into(),
        reason: reason.into(),
    }
    .into()
}

/// Per-node mean and variance of each compartment, one row per grid node.
fn stats_table(stats: &EnsembleStats, kind: ModelKind) -> Table {
    let comps = compartments(kind);
    let mut cols = vec!["t".to_string()];
    for c in &comps {
        cols.push(format!("{}_mean", c.name()));
        cols.push(format!("{}_var", c.name()));
        cols.push(format!("{}_mean_se", c.name()));
    }
    let mut t = Table::new(cols);
    for k in 0..stats.grid.len() {
        let mut row = vec![stats.grid.time(k)];
        for c in &comps {
            row.push(stats.mean[c][k]);
            row.push(stats.variance[c][k]);
            row.push(stats.mean_se[c][k]);
        }
        t.push(row);
    }
    t
}

pub fn simulate(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Outcome> {
    let spec = cfg.model_spec()?;
    let grid = cfg.time_grid()?;
    let e = &cfg.ensemble;
    let fluid = solve_fluid(&spec, &grid)?;
    let paths = simulate_ensemble(&spec, e.n, e.reps, &grid, e.seed, DEFAULT_MEMORY_BUDGET)?;
    let comps = compartments(spec.kind);
    if cfg.output.paths {
        let mut cols = vec!["rep".to_string(), "t".to_string()];
        cols.extend(comps.iter().map(|c| c.name().to_string()));
        let mut t = Table::new(cols);
        for (r, p) in paths.iter().enumerate() {
            for k in 0..grid.len() {
                let mut row = vec![r as f64, grid.time(k)];
                for c in &comps {
                    let v = match c {
                        Compartment::S => p.s[k],
                        Compartment::E => p.e[k],
                        Compartment::I => p.i[k],
                        _ => p.r[k],
                    };
                    row.push(v as f64);
                }
                t.push(row);
            }
        }
        out.table("paths", &t)?;
    }
    out.table("fluid", &fluid_table(&fluid))?;
    // rounding of n times the initial fractions is part of the run's metadata
    out.json("initial_counts.json", &paths[0].initial)?;
    if e.reps >= 2 {
        let fl = paths
            .iter()
            .map(|p| diffusion_scale(p, &fluid))
            .collect::<epilimit::Result<Vec<_>>>()?;
        let stats = empirical_cov(&fl, &cfg.probes())?;
        out.table("fluctuation_stats", &stats_table(&stats, spec.kind))?;
        out.json("ensemble_stats.json", &stats)?;
    }
    let last = grid.steps();
    let peak = paths.iter().map(|p| p.i.iter().copied().max().unwrap_or(0)).max().unwrap_or(0);
    Ok(Outcome::ok(format!(
        "{} replications of n = {}; largest infectious count {peak}; fluid I({}) = {:.6}",
        e.reps,
        e.n,
        grid.horizon(),
        fluid.i[last]
    )))
}

fn fluid_table(sol: &FluidSolution) -> Table {
    let mut comps = compartments(sol.spec.kind);
    comps.push(Compartment::A);
    if sol.has(Compartment::L) {
        comps.push(Compartment::L);
    }
    let mut cols = vec!["t".to_string()];
    cols.extend(comps.iter().map(|c| c.name().to_string()));
    let mut t = Table::new(cols);
    let cols: Vec<Vec<f64>> = comps.iter().map(|&c| sol.path(c)).collect();
    for k in 0..sol.grid.len() {
        let mut row = vec![sol.grid.time(k)];
        row.extend(cols.iter().map(|v| v[k]));
        t.push(row);
    }
    t
}

pub fn fluid(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Outcome> {
    let spec = cfg.model_spec()?;
    let sol = solve_fluid(&spec, &cfg.time_grid()?)?;
    out.table("fluid", &fluid_table(&sol))?;
    out.json("diagnostics.json", &sol.diagnostics)?;
    let k = sol.grid.steps();
    Ok(Outcome::ok(format!(
        "fluid {} on [0, {}]: I(T) = {:.6}, S(T) = {:.6}",
        spec.kind,
        sol.grid.horizon(),
        sol.i[k],
        sol.s[k]
    )))
}

fn as_fluctuation(p: &FcltPath) -> FluctuationPath {
    // n = 0 marks a limit path
    FluctuationPath {
        kind: p.kind,
        grid: p.grid,
        n: 0,
        s: p.s.clone(),
        e: p.e.clone(),
        i: p.i.clone(),
        r: p.r.clone(),
    }
}

pub fn fclt(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Outcome> {
    let spec = cfg.model_spec()?;
    let grid = cfg.time_grid()?;
    let e = &cfg.ensemble;
    let fluid = solve_fluid(&spec, &grid)?;
    let cov = DriverCovariance::new(&fluid)?;
    let initial = InitialFluctuation {
        var_exposed: cfg.fclt.var_exposed,
        var_infectious: cfg.fclt.var_infectious,
        var_immune: cfg.fclt.var_immune,
    };
    let keep = cfg.fclt.keep_drivers;
    let paths = fclt_ensemble(&cov, &initial, e.reps, e.seed, keep, |p| p)?;
    let comps = compartments(spec.kind);
    if cfg.output.paths {
        let mut cols = vec!["rep".to_string(), "t".to_string()];
        cols.extend(comps.iter().map(|c| c.name().to_string()));
        let mut t = Table::new(cols);
        for (r, p) in paths.iter().enumerate() {
            for k in 0..grid.len() {
                let mut row = vec![r as f64, grid.time(k)];
                row.extend(comps.iter().map(|&c| p.path(c).expect("model compartment")[k]));
                t.push(row);
            }
        }
        out.table("paths", &t)?;
    }
    if keep {
        let drivers = cov.drivers();
        let mut cols = vec!["rep".to_string(), "t".to_string()];
        cols.extend(drivers.iter().map(|d| d.to_string()));
        let mut t = Table::new(cols);
        for (r, p) in paths.iter().enumerate() {
            let dp = p.drivers.as_ref().expect("drivers were kept");
            let cols: Vec<Vec<f64>> = drivers.iter().map(|&d| dp.get(d)).collect();
            for k in 0..grid.len() {
                let mut row = vec![r as f64, grid.time(k)];
                row.extend(cols.iter().map(|v| v[k]));
                t.push(row);
            }
        }
        out.table("drivers", &t)?;
    }
    if e.reps >= 2 {
        let fl: Vec<FluctuationPath> = paths.iter().map(as_fluctuation).collect();
        let stats = empirical_cov(&fl, &cfg.probes())?;
        out.table("fluctuation_stats", &stats_table(&stats, spec.kind))?;
        out.json("ensemble_stats.json", &stats)?;
    }
    Ok(Outcome::ok(format!(
        "{} limit paths on {} nodes",
        e.reps,
        grid.len()
    )))
}

fn exponential_rate(d: &DurationDist) -> Option<f64> {
    match d {
        DurationDist::Exponential { rate } => Some(*rate),
        _ => None,
    }
}

/// `(gamma, mu)` of a model whose laws are all exponential; `gamma` is unused for SIR/SIS.
fn markovian_rates(spec: &ModelSpec) -> Option<(f64, f64)> {
    match &spec.periods {
        Periods::Single { f, f0 } => {
            let mu = exponential_rate(f)?;
            (exponential_rate(f0)? == mu).then_some((1.0, mu))
        }
        Periods::Staged { h, h0, f0 } => {
            let gamma = exponential_rate(&h.marginal)?;
            let Conditional::Independent(second) = &h.conditional else {
                return None;
            };
            let mu = exponential_rate(second)?;
            let same = exponential_rate(&h0.marginal)? == gamma
                && h0.conditional == h.conditional
                && exponential_rate(f0)? == mu;
            same.then_some((gamma, mu))
        }
    }
}

#[derive(Serialize)]
struct VerifyReport {
    case: &'static str,
    kind: ModelKind,
    lambda: f64,
    gamma: Option<f64>,
    mu: f64,
    horizon: f64,
    dt: f64,
    sup_norm: Vec<(Compartment, f64)>,
    max_sup_norm: f64,
    tolerance: f64,
    passed: bool,
}

pub fn verify(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Outcome> {
    let spec = cfg.model_spec()?;
    let grid = cfg.time_grid()?;
    let ContactRate::Constant(lambda) = spec.lambda else {
        return Err(config_error("model.lambda", "verify compares against the Markovian ODE and needs a constant rate"));
    };
    let (gamma, mu) = markovian_rates(&spec).ok_or_else(|| {
        config_error(
            "model",
            "verify compares against the Markovian ODE and needs the same exponential law for full and residual periods",
        )
    })?;
    let general = solve_fluid(&spec, &grid)?;
    let ode = solve_markovian_ode(spec.kind, lambda, gamma, mu, spec.init, &grid)?;
    let mut sup_norm = Vec::new();
    for c in compartments(spec.kind) {
        sup_norm.push((c, general.sup_distance(&ode, c)?));
    }
    let max_sup_norm = sup_norm.iter().map(|x| x.1).fold(0.0, f64::max);
    let tolerance = cfg.verify.tolerance;
    let passed = max_sup_norm < tolerance;
    let report = VerifyReport {
        case: "general solver vs Markovian ODE",
        kind: spec.kind,
        lambda,
        gamma: spec.kind.is_staged().then_some(gamma),
        mu,
        horizon: grid.horizon(),
        dt: grid.dt(),
        sup_norm,
        max_sup_norm,
        tolerance,
        passed,
    };
    out.json("verify.json", &report)?;
    let mut t = Table::new(["t", "general_I", "ode_I"]);
    for k in 0..grid.len() {
        t.push(vec![grid.time(k), general.i[k], ode.i[k]]);
    }
    out.table("comparison", &t)?;
    Ok(Outcome {
        passed,
        summary: format!("max sup-norm {max_sup_norm:.3e} against tolerance {tolerance:e}"),
    })
}

#[derive(Serialize)]
struct EquilibriumReport {
    /// The closed form is the equilibrium only when the initial laws are the stationary ones;
    /// otherwise the fluid distance is the relevant check.
    stationary_initial_laws: bool,
    point: epilimit::equilibria::EquilibriumPoint,
    identities: epilimit::equilibria::IdentityReport,
    fluid_at_horizon: State,
    fluid_distance: f64,
}

#[derive(Serialize)]
struct State {
    s: f64,
    i: f64,
    r: Option<f64>,
}

pub fn equilibrium(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Outcome> {
    let spec = cfg.model_spec()?;
    let grid = cfg.time_grid()?;
    let ContactRate::Constant(lambda) = spec.lambda else {
        return Err(config_error("model.lambda", "equilibria are defined for a constant rate"));
    };
    let point = match &spec.periods {
        Periods::Single { f, .. } if spec.kind == ModelKind::Sis => sis_equilibrium(lambda, 1.0 / f.mean())?,
        Periods::Staged { h, .. } if spec.kind == ModelKind::Sirs => {
            sirs_equilibrium(lambda, 1.0 / h.marginal.mean(), 1.0 / h.second_mean())?
        }
        _ => return Err(config_error("model.kind", "equilibria are available for SIS and SIRS")),
    };
    let identities = verify_equilibrium_identities(&point, &spec.periods, &grid, cfg.verify.tolerance)?;
    let sol = solve_fluid(&spec, &grid)?;
    let k = grid.steps();
    let r_end = sol.r.as_ref().map_or(0.0, |r| r[k]);
    let fluid_distance = (sol.s[k] - point.s)
        .abs()
        .max((sol.i[k] - point.i).abs())
        .max((r_end - point.r.unwrap_or(0.0)).abs());
    let summary = format!(
        "{:?} point S = {:.6}, I = {:.6}{}; identities {} (fixed-point residual {:.2e}); fluid distance at t = {}: {fluid_distance:.3e}",
        point.classification,
        point.s,
        point.i,
        point.r.map(|r| format!(", R = {r:.6}")).unwrap_or_default(),
        if identities.passed { "hold" } else { "fail" },
        identities.fixed_point_residual,
        grid.horizon()
    );
    let report = EquilibriumReport {
        stationary_initial_laws: ModelSpec::equilibrium_initial_laws(&spec.periods)
            .is_ok_and(|p| p == spec.periods),
        point,
        identities,
        fluid_at_horizon: State {
            s: sol.s[k],
            i: sol.i[k],
            r: sol.r.as_ref().map(|r| r[k]),
        },
        fluid_distance,
    };
    out.json("equilibrium.json", &report)?;
    Ok(Outcome::ok(summary))
}

pub fn rate(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Outcome> {
    let spec = cfg.model_spec()?;
    let grid = cfg.time_grid()?;
    let e = &cfg.ensemble;
    if e.n_list.is_empty() {
        return Err(config_error("ensemble.n_list", "the rate engine needs population sizes"));
    }
    let fit = convergence_rate(&spec, &e.n_list, e.reps, &grid, e.seed)?;
    let mut t = Table::new(["n", "mean_sup_error"]);
    for (n, err) in fit.n_list.iter().zip(&fit.errors) {
        t.push(vec![*n as f64, *err]);
    }
    out.table("rate", &t)?;
    out.json("rate_fit.json", &fit)?;
    Ok(Outcome::ok(format!("log-log slope {:.4} (r2 {:.4})", fit.slope, fit.r2)))
}
