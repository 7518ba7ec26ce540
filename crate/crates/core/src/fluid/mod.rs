//! Deterministic limits: the general Volterra solver, the Markovian ODEs and the delay
//! equations for fixed durations.

mod delay;
mod markov;
pub mod volterra;

pub use delay::solve_deterministic_delay;
pub use markov::solve_markovian_ode;
pub use volterra::{convolve, linear_residual, solve_linear, StepInit};

use serde::{Deserialize, Serialize};

use crate::distributions::{tabulate_cdf, tabulate_phi_psi, NodePath};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
pub use crate::model::Compartment;
use crate::model::{ModelKind, ModelSpec};

/// Halvings of the step attempted when the within-step iteration fails.
const MAX_REFINEMENTS: u32 = 4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub method: String,
    pub max_iterations: usize,
    pub max_residual: f64,
    /// Number of step halvings needed for convergence.
    pub refinements: u32,
}

/// Fluid paths on a uniform grid. Compartments a model does not have are `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluidSolution {
    pub spec: ModelSpec,
    pub grid: TimeGrid,
    pub s: Vec<f64>,
    pub e: Option<Vec<f64>>,
    pub i: Vec<f64>,
    pub r: Option<Vec<f64>>,
    /// Cumulative infections `∫ λ S I`.
    pub a: Vec<f64>,
    /// Cumulative onsets of infectiousness (SEIR).
    pub l: Option<Vec<f64>>,
    /// Infection flux `λ S I` with left limits.
    pub flux: NodePath,
    pub diagnostics: SolverDiagnostics,
}

impl FluidSolution {
    /// Path of a compartment; absent compartments read as zero.
    pub fn path(&self, c: Compartment) -> Vec<f64> {
        let zeros = || vec![0.0; self.grid.len()];
        match c {
            Compartment::S => self.s.clone(),
            Compartment::E => self.e.clone().unwrap_or_else(zeros),
            Compartment::I => self.i.clone(),
            Compartment::R => self.r.clone().unwrap_or_else(zeros),
            Compartment::A => self.a.clone(),
            Compartment::L => self.l.clone().unwrap_or_else(zeros),
        }
    }

    pub fn has(&self, c: Compartment) -> bool {
        match c {
            Compartment::E => self.e.is_some(),
            Compartment::R => self.r.is_some(),
            Compartment::L => self.l.is_some(),
            _ => true,
        }
    }

    /// `S + E + I + R` at node `k`.
    pub fn total(&self, k: usize) -> f64 {
        self.s[k]
            + self.e.as_ref().map_or(0.0, |e| e[k])
            + self.i[k]
            + self.r.as_ref().map_or(0.0, |r| r[k])
    }

    /// Sup-norm distance of one compartment to another solution on the same grid.
    pub fn sup_distance(&self, other: &FluidSolution, c: Compartment) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::Mismatch("solutions live on different grids".into()));
        }
        Ok(sup_norm_diff(&self.path(c), &other.path(c)))
    }

    /// Largest sup-norm distance over the compartments both solutions carry.
    pub fn max_sup_distance(&self, other: &FluidSolution) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for c in [Compartment::S, Compartment::E, Compartment::I, Compartment::R] {
            if self.has(c) && other.has(c) {
                worst = worst.max(self.sup_distance(other, c)?);
            }
        }
        Ok(worst)
    }

    /// Keep every `factor`-th node.
    fn subsample(mut self, factor: usize, grid: TimeGrid) -> Self {
        if factor == 1 {
            return self;
        }
        let pick = |v: &Vec<f64>| v.iter().step_by(factor).copied().collect::<Vec<_>>();
        self.s = pick(&self.s);
        self.e = self.e.as_ref().map(pick);
        self.i = pick(&self.i);
        self.r = self.r.as_ref().map(pick);
        self.a = pick(&self.a);
        self.l = self.l.as_ref().map(pick);
        self.flux = NodePath {
            value: pick(&self.flux.value),
            left: pick(&self.flux.left),
        };
        self.grid = grid;
        self
    }

    /// Column names and rows `(t, S, E, I, R, A, L)`; absent compartments are NaN.
    pub fn rows(&self) -> Vec<[f64; 7]> {
        let opt = |v: &Option<Vec<f64>>, k: usize| v.as_ref().map_or(f64::NAN, |x| x[k]);
        (0..self.grid.len())
            .map(|k| {
                [
                    self.grid.time(k),
                    self.s[k],
                    opt(&self.e, k),
                    self.i[k],
                    opt(&self.r, k),
                    self.a[k],
                    opt(&self.l, k),
                ]
            })
            .collect()
    }
}

pub fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Solve the fluid limit of `spec` on `grid`.
pub fn solve_fluid(spec: &ModelSpec, grid: &TimeGrid) -> Result<FluidSolution> {
    solve_fluid_with(spec, grid, StepInit::Previous)
}

/// As [`solve_fluid`], choosing the within-step starting guess.
pub fn solve_fluid_with(spec: &ModelSpec, grid: &TimeGrid, init: StepInit) -> Result<FluidSolution> {
    spec.validate()?;
    let mut last_err = None;
    for r in 0..=MAX_REFINEMENTS {
        let factor = 1usize << r;
        let fine = grid.refined(factor);
        match solve_on_grid(spec, &fine, init) {
            Ok(mut sol) => {
                sol.diagnostics.refinements = r;
                if r > 0 {
                    log::info!("fluid solve converged after {r} step halvings");
                }
                return Ok(sol.subsample(factor, *grid));
            }
            Err(Error::NonConvergence { time, residual, .. }) => {
                last_err = Some((time, residual));
            }
            Err(e) => return Err(e),
        }
    }
    let (time, residual) = last_err.expect("at least one attempt");
    Err(Error::NonConvergence {
        time,
        residual,
        refinements: MAX_REFINEMENTS,
    })
}

fn check_atoms_on_grid(spec: &ModelSpec, grid: &TimeGrid) -> Result<()> {
    let mut laws = Vec::new();
    match &spec.periods {
        crate::model::Periods::Single { f0, .. } => laws.push(f0),
        crate::model::Periods::Staged { h0, f0, .. } => {
            laws.push(f0);
            laws.push(&h0.marginal);
        }
    }
    for d in laws {
        for (a, _) in d.atoms() {
            if !grid.is_aligned(a) {
                return Err(Error::InvalidGrid(format!(
                    "initial law has a jump at {a}, which is not a multiple of dt = {}",
                    grid.dt()
                )));
            }
        }
    }
    Ok(())
}

fn solve_on_grid(spec: &ModelSpec, grid: &TimeGrid, init: StepInit) -> Result<FluidSolution> {
    check_atoms_on_grid(spec, grid)?;
    let len = grid.len();
    let dt = grid.dt();
    let lam = &spec.lambda;
    let lam_at = |k: usize, left: bool| {
        let t = k as f64 * dt;
        if left {
            lam.left_at(t)
        } else {
            lam.at(t)
        }
    };
    let i0 = spec.init.infectious;
    let minus_one = NodePath::constant(-1.0, len);
    let one = NodePath::constant(1.0, len);

    let sol = match spec.kind {
        ModelKind::Sir | ModelKind::Sis => {
            let (f, f0) = spec.single_laws()?;
            let f_tab = tabulate_cdf(f, dt, len);
            let fc = f_tab.complement();
            let f0_tab = tabulate_cdf(f0, dt, len);
            let y_i = f0_tab.complement().scaled(i0);
            if spec.kind == ModelKind::Sir {
                let y_s = NodePath::constant(1.0 - i0, len);
                let out = volterra::solve_nonlinear(
                    dt,
                    &[&minus_one, &fc],
                    &[&y_s, &y_i],
                    |k, left, x| lam_at(k, left) * x[0] * x[1],
                    init,
                )?;
                let r_conv = convolve(&f_tab, &out.flux, dt);
                let r: Vec<f64> = (0..len).map(|k| i0 * f0_tab.value[k] + r_conv[k]).collect();
                let a = convolve(&one, &out.flux, dt);
                FluidSolution {
                    spec: spec.clone(),
                    grid: *grid,
                    s: out.x[0].value.clone(),
                    e: None,
                    i: out.x[1].value.clone(),
                    r: Some(r),
                    a,
                    l: None,
                    flux: out.flux,
                    diagnostics: SolverDiagnostics {
                        method: "volterra-trapezoid".into(),
                        max_iterations: out.max_iterations,
                        max_residual: out.max_residual,
                        refinements: 0,
                    },
                }
            } else {
                let out = volterra::solve_nonlinear(
                    dt,
                    &[&fc],
                    &[&y_i],
                    |k, left, x| lam_at(k, left) * (1.0 - x[0]) * x[0],
                    init,
                )?;
                let i = out.x[0].value.clone();
                let a = convolve(&one, &out.flux, dt);
                FluidSolution {
                    spec: spec.clone(),
                    grid: *grid,
                    s: i.iter().map(|x| 1.0 - x).collect(),
                    e: None,
                    i,
                    r: None,
                    a,
                    l: None,
                    flux: out.flux,
                    diagnostics: SolverDiagnostics {
                        method: "volterra-trapezoid".into(),
                        max_iterations: out.max_iterations,
                        max_residual: out.max_residual,
                        refinements: 0,
                    },
                }
            }
        }
        ModelKind::Seir => {
            let (h, h0, f0) = spec.staged_laws()?;
            let e0 = spec.init.exposed;
            let (phi, psi) = tabulate_phi_psi(h, grid);
            let (phi0, psi0) = tabulate_phi_psi(h0, grid);
            let g = tabulate_cdf(&h.marginal, dt, len);
            let g0 = tabulate_cdf(&h0.marginal, dt, len);
            let f0_tab = tabulate_cdf(f0, dt, len);
            let y_s = NodePath::constant(1.0 - i0 - e0, len);
            let y_i = f0_tab.complement().scaled(i0).combine(1.0, &psi0, e0);
            let out = volterra::solve_nonlinear(
                dt,
                &[&minus_one, &psi],
                &[&y_s, &y_i],
                |k, left, x| lam_at(k, left) * x[0] * x[1],
                init,
            )?;
            let flux = out.flux;
            let e_conv = convolve(&g.complement(), &flux, dt);
            let r_conv = convolve(&phi, &flux, dt);
            let l_conv = convolve(&g, &flux, dt);
            let a = convolve(&one, &flux, dt);
            let e: Vec<f64> = (0..len)
                .map(|k| e0 * (1.0 - g0.value[k]) + e_conv[k])
                .collect();
            let r: Vec<f64> = (0..len)
                .map(|k| i0 * f0_tab.value[k] + e0 * phi0.value[k] + r_conv[k])
                .collect();
            let l: Vec<f64> = (0..len).map(|k| e0 * g0.value[k] + l_conv[k]).collect();
            FluidSolution {
                spec: spec.clone(),
                grid: *grid,
                s: out.x[0].value.clone(),
                e: Some(e),
                i: out.x[1].value.clone(),
                r: Some(r),
                a,
                l: Some(l),
                flux,
                diagnostics: SolverDiagnostics {
                    method: "volterra-trapezoid".into(),
                    max_iterations: out.max_iterations,
                    max_residual: out.max_residual,
                    refinements: 0,
                },
            }
        }
        ModelKind::Sirs => {
            let (h, h0, f0) = spec.staged_laws()?;
            let r0 = spec.init.immune;
            let (_, psi) = tabulate_phi_psi(h, grid);
            let (_, psi0) = tabulate_phi_psi(h0, grid);
            let gc = tabulate_cdf(&h.marginal, dt, len).complement();
            let g0c = tabulate_cdf(&h0.marginal, dt, len).complement();
            let f0c = tabulate_cdf(f0, dt, len).complement();
            let y_i = g0c.scaled(i0);
            let y_r = f0c.scaled(r0).combine(1.0, &psi0, i0);
            let out = volterra::solve_nonlinear(
                dt,
                &[&gc, &psi],
                &[&y_i, &y_r],
                |k, left, x| lam_at(k, left) * (1.0 - x[0] - x[1]) * x[0],
                init,
            )?;
            let i = out.x[0].value.clone();
            let r = out.x[1].value.clone();
            let a = convolve(&one, &out.flux, dt);
            FluidSolution {
                spec: spec.clone(),
                grid: *grid,
                s: i.iter().zip(&r).map(|(x, y)| 1.0 - x - y).collect(),
                e: None,
                i,
                r: Some(r),
                a,
                l: None,
                flux: out.flux,
                diagnostics: SolverDiagnostics {
                    method: "volterra-trapezoid".into(),
                    max_iterations: out.max_iterations,
                    max_residual: out.max_residual,
                    refinements: 0,
                },
            }
        }
    };
    Ok(sol)
}

/// Two-dimensional linear Volterra system
/// `φ = a + x + c ∫ (φ z + w ψ)`, `ψ = y + c ∫ K(t - s)(φ z + w ψ) ds`.
#[allow(clippy::too_many_arguments)]
pub fn solve_linear_volterra_2d(
    a: f64,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    w: &[f64],
    c: f64,
    kernel: &NodePath,
    grid: &TimeGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = grid.len();
    for (name, p) in [("x", x), ("y", y), ("z", z), ("w", w)] {
        if p.len() != len {
            return Err(Error::Mismatch(format!(
                "path `{name}` has {} nodes but the grid has {len}",
                p.len()
            )));
        }
    }
    if kernel.len() < len {
        return Err(Error::Mismatch(format!(
            "kernel has {} lags but the grid has {len} nodes",
            kernel.len()
        )));
    }
    let one = NodePath::constant(1.0, len);
    let y1: Vec<f64> = x.iter().map(|v| a + v).collect();
    let w1: Vec<f64> = z.iter().map(|v| c * v).collect();
    let w2: Vec<f64> = w.iter().map(|v| c * v).collect();
    let mut u = solve_linear(grid.dt(), &[&one, kernel], &[&y1, y], &[&w1, &w2])?;
    let psi = u.pop().expect("two components");
    let phi = u.pop().expect("two components");
    Ok((phi, psi))
}
