//! Closed-form SIS and SIRS equilibria and checks of the equilibrium identities.

use serde::{Deserialize, Serialize};

use crate::distributions::{tabulate_cdf, tabulate_phi_psi, NodePath};
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::model::{ModelKind, ModelSpec, Periods};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Trivial,
    Endemic,
}

/// Equilibrium fractions together with the parameters they were computed from. For SIRS,
/// `gamma` is the reciprocal mean infectious period and `mu` the reciprocal mean immune period;
/// for SIS `mu` is the reciprocal mean infectious period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub kind: ModelKind,
    pub lambda: f64,
    pub gamma: Option<f64>,
    pub mu: f64,
    pub s: f64,
    pub i: f64,
    pub r: Option<f64>,
    pub classification: Classification,
    pub note: Option<String>,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

pub fn sis_equilibrium(lambda: f64, mu: f64) -> Result<EquilibriumPoint> {
    positive("lambda", lambda)?;
    positive("mu", mu)?;
    let endemic = mu < lambda;
    let i = if endemic { 1.0 - mu / lambda } else { 0.0 };
    Ok(EquilibriumPoint {
        kind: ModelKind::Sis,
        lambda,
        gamma: None,
        mu,
        s: 1.0 - i,
        i,
        r: None,
        classification: if endemic {
            Classification::Endemic
        } else {
            Classification::Trivial
        },
        note: (!endemic).then(|| "contact rate does not exceed the recovery rate".to_string()),
    })
}

pub fn sirs_equilibrium(lambda: f64, gamma: f64, mu: f64) -> Result<EquilibriumPoint> {
    positive("lambda", lambda)?;
    positive("gamma", gamma)?;
    positive("mu", mu)?;
    if lambda <= gamma {
        return Ok(EquilibriumPoint {
            kind: ModelKind::Sirs,
            lambda,
            gamma: Some(gamma),
            mu,
            s: 1.0,
            i: 0.0,
            r: Some(0.0),
            classification: Classification::Trivial,
            note: Some("no endemic state unless the contact rate exceeds gamma".into()),
        });
    }
    let s = gamma / lambda;
    let i = (1.0 - s) / (1.0 + gamma / mu);
    let r = 1.0 - s - i;
    Ok(EquilibriumPoint {
        kind: ModelKind::Sirs,
        lambda,
        gamma: Some(gamma),
        mu,
        s,
        i,
        r: Some(r),
        classification: Classification::Endemic,
        note: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub kind: ModelKind,
    pub s: f64,
    pub i: f64,
    pub r: Option<f64>,
    /// `λ S* - γ` (SIRS) or `λ S* - μ` (SIS); multiplied by `I*` at the trivial point.
    pub residual1: f64,
    /// `μ R* - γ I*` (SIRS only).
    pub residual2: f64,
    /// Largest residual of the integral equations with the constant state plugged in.
    pub fixed_point_residual: f64,
    pub probes: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `∫_0^{t_k} K(u) du` at every node by the trapezoid rule with left limits.
fn cumulative(k: &NodePath, dt: f64) -> Vec<f64> {
    let mut out = vec![0.0; k.len()];
    for j in 1..k.len() {
        out[j] = out[j - 1] + 0.5 * dt * (k.value[j - 1] + k.left[j]);
    }
    out
}

const PROBES: usize = 50;

/// Check the equilibrium identities algebraically and the integral fixed-point equations at
/// 50 probe nodes, with stationary-excess initial laws built from `periods`.
pub fn verify_equilibrium_identities(
    point: &EquilibriumPoint,
    periods: &Periods,
    grid: &TimeGrid,
    tolerance: f64,
) -> Result<IdentityReport> {
    let init = ModelSpec::equilibrium_initial_laws(periods)?;
    let dt = grid.dt();
    let len = grid.len();
    let rel_close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    let flux = point.lambda * point.s * point.i;
    let probe_nodes: Vec<usize> = (1..=PROBES).map(|p| p * (len - 1) / PROBES).collect();
    let trivial = point.classification == Classification::Trivial;
    let scale = |x: f64| if trivial { x * point.i } else { x };

    let (residual1, residual2, fp) = match (point.kind, &init) {
        (ModelKind::Sis, Periods::Single { f, f0 }) => {
            if !rel_close(1.0 / f.mean(), point.mu) {
                return Err(Error::Mismatch(format!(
                    "infectious period has mean {}, the point assumes {}",
                    f.mean(),
                    1.0 / point.mu
                )));
            }
            let fc = tabulate_cdf(f, dt, len).complement();
            let f0c = tabulate_cdf(f0, dt, len).complement();
            let int_fc = cumulative(&fc, dt);
            let fp = probe_nodes
                .iter()
                .map(|&k| (point.i * f0c.value[k] + flux * int_fc[k] - point.i).abs())
                .fold(0.0, f64::max);
            (scale(point.lambda * point.s - point.mu), 0.0, fp)
        }
        (ModelKind::Sirs, Periods::Staged { h, h0, f0 }) => {
            let gamma = point.gamma.expect("SIRS point carries gamma");
            if !h.is_independent() {
                return Err(invalid("periods", "the identities need independent periods"));
            }
            if !rel_close(1.0 / h.marginal.mean(), gamma) || !rel_close(1.0 / h.second_mean(), point.mu) {
                return Err(Error::Mismatch(
                    "period means do not match the point's gamma and mu".into(),
                ));
            }
            let r = point.r.expect("SIRS point carries R");
            let gc = tabulate_cdf(&h.marginal, dt, len).complement();
            let g0c = tabulate_cdf(&h0.marginal, dt, len).complement();
            let f0c = tabulate_cdf(f0, dt, len).complement();
            let (_, psi) = tabulate_phi_psi(h, grid);
            let (_, psi0) = tabulate_phi_psi(h0, grid);
            let int_gc = cumulative(&gc, dt);
            let int_psi = cumulative(&psi, dt);
            let fp = probe_nodes
                .iter()
                .map(|&k| {
                    let ri = point.i * g0c.value[k] + flux * int_gc[k] - point.i;
                    let rr = r * f0c.value[k] + point.i * psi0.value[k] + flux * int_psi[k] - r;
                    ri.abs().max(rr.abs())
                })
                .fold(0.0, f64::max);
            (
                scale(point.lambda * (1.0 - point.i - r) - gamma),
                point.mu * r - gamma * point.i,
                fp,
            )
        }
        _ => {
            return Err(Error::InvalidModel(format!(
                "no equilibrium identities for {} with these period laws",
                point.kind
            )))
        }
    };
    let passed = residual1.abs() < 1e-10 && residual2.abs() < 1e-10 && fp < tolerance;
    Ok(IdentityReport {
        kind: point.kind,
        s: point.s,
        i: point.i,
        r: point.r,
        residual1,
        residual2,
        fixed_point_residual: fp,
        probes: probe_nodes.len(),
        tolerance,
        passed,
    })
}
