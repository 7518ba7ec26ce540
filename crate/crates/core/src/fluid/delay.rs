use crate::distributions::{DurationDist, JointDurationDist, NodePath};
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::model::{InitialFractions, ModelKind, ModelSpec};
use crate::rate::ContactRate;

use super::volterra::{FIXED_POINT_MAX_ITER, FIXED_POINT_TOL};
use super::{FluidSolution, SolverDiagnostics};

/// Fluid SIRS with fixed infectious period `xi` and fixed immune period `eta`, started from
/// uniform residual periods, solved as a delay equation on the cumulative infections.
pub fn solve_deterministic_delay(
    kind: ModelKind,
    lambda: f64,
    xi: f64,
    eta: f64,
    init: InitialFractions,
    grid: &TimeGrid,
) -> Result<FluidSolution> {
    if kind != ModelKind::Sirs {
        return Err(Error::InvalidModel(format!(
            "the delay solver handles SIRS only, got {kind}"
        )));
    }
    let h = JointDurationDist::independent(DurationDist::deterministic(xi)?, DurationDist::deterministic(eta)?);
    let h0 = JointDurationDist::independent(DurationDist::uniform(0.0, xi)?, DurationDist::deterministic(eta)?);
    let spec = ModelSpec::sirs(
        ContactRate::Constant(lambda),
        h,
        h0,
        DurationDist::uniform(0.0, eta)?,
        init.infectious,
        init.immune,
    )?;
    let p = grid
        .node_of(xi)
        .filter(|_| grid.is_aligned(xi))
        .ok_or_else(|| Error::InvalidGrid(format!("dt = {} does not divide xi = {xi}", grid.dt())))?;
    let q = grid
        .node_of(eta)
        .filter(|_| grid.is_aligned(eta))
        .ok_or_else(|| Error::InvalidGrid(format!("dt = {} does not divide eta = {eta}", grid.dt())))?;
    if p == 0 || q == 0 {
        return Err(invalid("xi", "periods must span at least one grid step"));
    }
    let (i0, r0) = (init.infectious, init.immune);
    let dt = grid.dt();
    let len = grid.len();
    let lag = |k: usize, by: usize| k.saturating_sub(by);

    let init_i = |t: f64| i0 * (1.0 - t / xi).max(0.0);
    let init_r = |t: f64| {
        r0 * (1.0 - t / eta).max(0.0) + i0 * (t.min(xi) - (t - eta).max(0.0)).max(0.0) / xi
    };
    let flux = |i: f64, r: f64| lambda * (1.0 - i - r) * i;

    let mut c = vec![0.0; len];
    let mut i = vec![0.0; len];
    let mut r = vec![0.0; len];
    let mut f = vec![0.0; len];
    i[0] = i0;
    r[0] = r0;
    f[0] = flux(i0, r0);
    let mut max_iterations = 0;
    let mut max_residual: f64 = 0.0;
    for k in 1..len {
        let t = grid.time(k);
        // R_k only sees cumulative infections at least one infectious period back
        let rk = init_r(t) + c[lag(k, p)] - c[lag(k, p + q)];
        let base = c[k - 1] + 0.5 * dt * f[k - 1];
        let mut phi = f[k - 1];
        let mut residual = f64::INFINITY;
        let mut iters = 0;
        while iters < FIXED_POINT_MAX_ITER {
            iters += 1;
            let ck = base + 0.5 * dt * phi;
            let ik = init_i(t) + ck - c[lag(k, p)];
            let next = flux(ik, rk);
            residual = (next - phi).abs();
            phi = next;
            if residual <= FIXED_POINT_TOL * phi.abs().max(1.0) {
                break;
            }
        }
        if residual > FIXED_POINT_TOL * phi.abs().max(1.0) || !phi.is_finite() {
            return Err(Error::NonConvergence {
                time: t,
                residual,
                refinements: 0,
            });
        }
        max_iterations = max_iterations.max(iters);
        max_residual = max_residual.max(residual);
        c[k] = base + 0.5 * dt * phi;
        i[k] = init_i(t) + c[k] - c[lag(k, p)];
        r[k] = rk;
        f[k] = flux(i[k], r[k]);
    }
    Ok(FluidSolution {
        spec,
        grid: *grid,
        s: i.iter().zip(&r).map(|(a, b)| 1.0 - a - b).collect(),
        e: None,
        i,
        r: Some(r),
        a: c,
        l: None,
        flux: NodePath::continuous(f),
        diagnostics: SolverDiagnostics {
            method: "delay-trapezoid".into(),
            max_iterations,
            max_residual,
            refinements: 0,
        },
    })
}
