//! Forward time-stepping for Volterra systems driven by a single scalar flux.
//!
//! Every compartment is `x_i(t) = y_i(t) + ∫_0^t K_i(t - s) f(s) ds`, where the flux `f` is a
//! function of the current state. Convolutions use the product trapezoid rule cell by cell:
//! on `[t_j, t_{j+1}]` the kernel takes its left limit at lag `t_k - t_j` and its value at lag
//! `t_k - t_{j+1}`, which integrates piecewise-constant kernels with node-aligned jumps exactly.
//! The lag-0 weight makes each step implicit.

use serde::{Deserialize, Serialize};

use crate::distributions::NodePath;
use crate::error::{Error, Result};

pub(crate) const FIXED_POINT_TOL: f64 = 1e-12;
pub(crate) const FIXED_POINT_MAX_ITER: usize = 20;

/// Starting guess for the within-step fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepInit {
    /// Flux from the previous node.
    #[default]
    Previous,
    /// Linear extrapolation from the two previous nodes.
    Extrapolate,
}

/// Running history sums of one kernel against the flux.
enum History<'a> {
    Constant { c: f64, sum: f64 },
    General(&'a NodePath),
}

impl<'a> History<'a> {
    fn new(k: &'a NodePath) -> Self {
        if k.is_constant() {
            History::Constant {
                c: k.value[0],
                sum: 0.0,
            }
        } else {
            History::General(k)
        }
    }

    /// Weight of the implicit (lag-0) term.
    fn lag0(&self) -> f64 {
        match self {
            History::Constant { c, .. } => *c,
            History::General(k) => k.value[0],
        }
    }

    /// `Σ_{j<k} K⁻(k-j) f_j + Σ_{1<=m<k} K(k-m) f⁻_m` for step `k`; `f` and `fl` hold entries
    /// up to index `k - 1`.
    fn explicit(&mut self, k: usize, f: &[f64], fl: &[f64]) -> f64 {
        match self {
            History::Constant { c, sum } => {
                // the constant sum gains f_{k-1} and f⁻_{k-1} (the latter only for k >= 2)
                *sum += f[k - 1];
                if k >= 2 {
                    *sum += fl[k - 1];
                }
                *c * *sum
            }
            History::General(kern) => {
                let a: f64 = kern.left[1..=k]
                    .iter()
                    .rev()
                    .zip(&f[..k])
                    .map(|(w, x)| w * x)
                    .sum();
                let b: f64 = if k >= 2 {
                    kern.value[1..k]
                        .iter()
                        .rev()
                        .zip(&fl[1..k])
                        .map(|(w, x)| w * x)
                        .sum()
                } else {
                    0.0
                };
                a + b
            }
        }
    }
}

pub(crate) struct NonlinearOutput {
    pub x: Vec<NodePath>,
    pub flux: NodePath,
    pub max_iterations: usize,
    pub max_residual: f64,
}

/// Solve `x_i = y_i + K_i * f`, `f = flux(k, left, x)` on a grid with step `dt`.
///
/// `flux(k, true, x)` is evaluated with the rate's left limit at node `k`.
pub(crate) fn solve_nonlinear<F>(
    dt: f64,
    kernels: &[&NodePath],
    forcing: &[&NodePath],
    flux: F,
    init: StepInit,
) -> Result<NonlinearOutput>
where
    F: Fn(usize, bool, &[f64]) -> f64,
{
    let d = kernels.len();
    let len = forcing[0].len();
    debug_assert!(forcing.iter().all(|y| y.len() == len));
    debug_assert!(kernels.iter().all(|k| k.len() >= len));
    let half = 0.5 * dt;

    let mut xv = vec![vec![0.0; len]; d];
    let mut xl = vec![vec![0.0; len]; d];
    let mut f = vec![0.0; len];
    let mut fl = vec![0.0; len];
    let mut hist: Vec<History> = kernels.iter().map(|k| History::new(k)).collect();

    let mut state = vec![0.0; d];
    for i in 0..d {
        xv[i][0] = forcing[i].value[0];
        xl[i][0] = forcing[i].value[0];
        state[i] = xv[i][0];
    }
    f[0] = flux(0, false, &state);
    fl[0] = f[0];

    let mut max_iterations = 0;
    let mut max_residual: f64 = 0.0;
    let mut base = vec![0.0; d];
    for k in 1..len {
        for i in 0..d {
            base[i] = forcing[i].left[k] + half * hist[i].explicit(k, &f, &fl);
        }
        let mut phi = match init {
            StepInit::Extrapolate if k >= 2 => 2.0 * fl[k - 1] - fl[k - 2],
            _ => fl[k - 1],
        };
        let mut converged = false;
        let mut residual = f64::INFINITY;
        let mut iters = 0;
        while iters < FIXED_POINT_MAX_ITER {
            iters += 1;
            for i in 0..d {
                state[i] = base[i] + half * hist[i].lag0() * phi;
            }
            let next = flux(k, true, &state);
            residual = (next - phi).abs();
            phi = next;
            if residual <= FIXED_POINT_TOL * phi.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged || !phi.is_finite() {
            return Err(Error::NonConvergence {
                time: k as f64 * dt,
                residual,
                refinements: 0,
            });
        }
        max_iterations = max_iterations.max(iters);
        max_residual = max_residual.max(residual);
        for i in 0..d {
            state[i] = base[i] + half * hist[i].lag0() * phi;
            xl[i][k] = state[i];
        }
        fl[k] = flux(k, true, &state);
        for i in 0..d {
            state[i] += forcing[i].value[k] - forcing[i].left[k];
            xv[i][k] = state[i];
        }
        f[k] = flux(k, false, &state);
    }

    Ok(NonlinearOutput {
        x: xv
            .into_iter()
            .zip(xl)
            .map(|(value, left)| NodePath { value, left })
            .collect(),
        flux: NodePath { value: f, left: fl },
        max_iterations,
        max_residual,
    })
}

/// `∫_0^{t_k} K(t_k - s) f(s) ds` at every node with the same cell rule as the stepper.
pub fn convolve(kernel: &NodePath, f: &NodePath, dt: f64) -> Vec<f64> {
    let len = f.len();
    let half = 0.5 * dt;
    let mut out = vec![0.0; len];
    let mut hist = History::new(kernel);
    for k in 1..len {
        out[k] = half * (hist.explicit(k, &f.value, &f.left) + hist.lag0() * f.left[k]);
    }
    out
}

/// Solve the linear system `u_i = y_i + K_i * g`, `g = Σ_j w_j u_j`, exactly at each step.
///
/// Forcing and weights are node values; the flux is treated as continuous.
pub fn solve_linear(
    dt: f64,
    kernels: &[&NodePath],
    forcing: &[&[f64]],
    weights: &[&[f64]],
) -> Result<Vec<Vec<f64>>> {
    let d = kernels.len();
    if forcing.len() != d || weights.len() != d {
        return Err(Error::Mismatch(format!(
            "{d} kernels but {} forcing paths and {} weight paths",
            forcing.len(),
            weights.len()
        )));
    }
    let len = forcing[0].len();
    for (name, paths) in [("forcing", forcing), ("weight", weights)] {
        if let Some(p) = paths.iter().find(|p| p.len() != len) {
            return Err(Error::Mismatch(format!(
                "{name} path has {} nodes, expected {len}",
                p.len()
            )));
        }
    }
    if let Some(k) = kernels.iter().find(|k| k.len() < len) {
        return Err(Error::Mismatch(format!(
            "kernel has {} lags, need at least {len}",
            k.len()
        )));
    }
    let half = 0.5 * dt;
    let mut u = vec![vec![0.0; len]; d];
    let mut g = vec![0.0; len];
    let mut hist: Vec<History> = kernels.iter().map(|k| History::new(k)).collect();
    for i in 0..d {
        u[i][0] = forcing[i][0];
    }
    g[0] = (0..d).map(|i| weights[i][0] * u[i][0]).sum();
    let mut base = vec![0.0; d];
    for k in 1..len {
        let mut num = 0.0;
        let mut den = 1.0;
        for i in 0..d {
            base[i] = forcing[i][k] + half * hist[i].explicit(k, &g, &g);
            let alpha = half * hist[i].lag0();
            num += weights[i][k] * base[i];
            den -= weights[i][k] * alpha;
        }
        if den.abs() < 1e-14 {
            return Err(Error::Degenerate(format!(
                "implicit step at node {k} is singular; reduce the grid step"
            )));
        }
        g[k] = num / den;
        for i in 0..d {
            u[i][k] = base[i] + half * hist[i].lag0() * g[k];
        }
    }
    Ok(u)
}

/// Max over nodes of the discretized-equation residual of a linear solution, recomputed by
/// direct summation.
pub fn linear_residual(
    dt: f64,
    kernels: &[&NodePath],
    forcing: &[&[f64]],
    weights: &[&[f64]],
    u: &[Vec<f64>],
) -> f64 {
    let d = kernels.len();
    let len = u[0].len();
    let g: Vec<f64> = (0..len)
        .map(|k| (0..d).map(|i| weights[i][k] * u[i][k]).sum())
        .collect();
    let gp = NodePath::continuous(g);
    let mut worst: f64 = 0.0;
    for i in 0..d {
        let conv = convolve(kernels[i], &gp, dt);
        for k in 0..len {
            worst = worst.max((u[i][k] - forcing[i][k] - conv[k]).abs());
        }
    }
    worst
}
