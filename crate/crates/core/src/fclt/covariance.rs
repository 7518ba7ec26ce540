use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use super::drivers::{drivers_of, resolve, Driver, Group, Rect, Region};
use crate::distributions::{tabulate_cdf, tabulate_phi_psi, JointExitTable, NodePath};
use crate::error::{Error, Result};
use crate::fluid::FluidSolution;
use crate::grid::TimeGrid;
use crate::model::{ModelKind, Periods};

/// Diagonal jitter tried in turn, relative to the largest variance.
const JITTER_STEPS: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Kernel tables needed by the linearized equations.
#[derive(Debug, Clone)]
pub(crate) enum LinearKernels {
    Single {
        f: NodePath,
        fc: NodePath,
        f0: NodePath,
    },
    Staged {
        gc: NodePath,
        phi: NodePath,
        psi: NodePath,
        g0: NodePath,
        phi0: NodePath,
        psi0: NodePath,
        f0: NodePath,
    },
}

/// Lower Cholesky factor of an initial-condition block, over the variables with positive
/// variance.
#[derive(Debug, Clone)]
pub(crate) struct BlockFactor {
    pub keep: Vec<usize>,
    pub l: DMatrix<f64>,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct InitialFactors {
    /// Variables `(stage1 at k, stage2 at k)` interleaved as `2k`, `2k + 1`.
    pub first: Option<BlockFactor>,
    /// Variables `stage2 at k`.
    pub second: BlockFactor,
}

/// Covariance of the Gaussian drivers around one fluid solution.
#[derive(Debug)]
pub struct DriverCovariance {
    fluid: FluidSolution,
    pub(crate) new_table: JointExitTable,
    pub(crate) first0: Option<(f64, JointExitTable)>,
    pub(crate) second0: (f64, JointExitTable),
    pub(crate) kernels: LinearKernels,
    factors: OnceLock<std::result::Result<InitialFactors, (f64, f64)>>,
}

impl DriverCovariance {
    pub fn new(fluid: &FluidSolution) -> Result<Self> {
        let spec = &fluid.spec;
        let grid = fluid.grid;
        let len = grid.len();
        let dt = grid.dt();
        let init = spec.init;
        let (new_table, first0, second0, kernels) = match &spec.periods {
            Periods::Single { f, f0 } => {
                let ft = tabulate_cdf(f, dt, len);
                (
                    JointExitTable::single(f, &grid),
                    None,
                    (init.infectious, JointExitTable::single(f0, &grid)),
                    LinearKernels::Single {
                        fc: ft.complement(),
                        f: ft,
                        f0: tabulate_cdf(f0, dt, len),
                    },
                )
            }
            Periods::Staged { h, h0, f0 } => {
                let (m1, m2) = match spec.kind {
                    ModelKind::Seir => (init.exposed, init.infectious),
                    _ => (init.infectious, init.immune),
                };
                let (phi, psi) = tabulate_phi_psi(h, &grid);
                let (phi0, psi0) = tabulate_phi_psi(h0, &grid);
                (
                    JointExitTable::new(h, &grid),
                    Some((m1, JointExitTable::new(h0, &grid))),
                    (m2, JointExitTable::single(f0, &grid)),
                    LinearKernels::Staged {
                        gc: tabulate_cdf(&h.marginal, dt, len).complement(),
                        phi,
                        psi,
                        g0: tabulate_cdf(&h0.marginal, dt, len),
                        phi0,
                        psi0,
                        f0: tabulate_cdf(f0, dt, len),
                    },
                )
            }
        };
        Ok(Self {
            fluid: fluid.clone(),
            new_table,
            first0,
            second0,
            kernels,
            factors: OnceLock::new(),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.fluid.spec.kind
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.fluid.grid
    }

    pub fn fluid(&self) -> &FluidSolution {
        &self.fluid
    }

    /// Drivers defined for this model.
    pub fn drivers(&self) -> Vec<Driver> {
        drivers_of(self.kind())
    }

    fn resolve_pair(&self, x: Driver, y: Driver) -> Result<((Group, Region), (Group, Region))> {
        let kind = self.kind();
        let unknown = || Error::UnknownDriverPair(x.to_string(), y.to_string(), kind.to_string());
        let gx = resolve(kind, x).ok_or_else(unknown)?;
        let gy = resolve(kind, y).ok_or_else(unknown)?;
        Ok((gx, gy))
    }

    /// `Cov(X(t), Y(t'))` at grid times.
    pub fn cov(&self, x: Driver, t: f64, y: Driver, t2: f64) -> Result<f64> {
        let k1 = self.grid().require_node(t)?;
        let k2 = self.grid().require_node(t2)?;
        self.cov_nodes(x, k1, y, k2)
    }

    /// `Cov(X(t_k1), Y(t_k2))` by node index.
    pub fn cov_nodes(&self, x: Driver, k1: usize, y: Driver, k2: usize) -> Result<f64> {
        let len = self.grid().len();
        if k1 >= len || k2 >= len {
            return Err(Error::InvalidGrid(format!(
                "node {} is beyond the grid of {len} nodes",
                k1.max(k2)
            )));
        }
        let ((g1, r1), (g2, r2)) = self.resolve_pair(x, y)?;
        if g1 != g2 {
            return Ok(0.0);
        }
        Ok(self.cov_resolved(g1, r1, k1, r2, k2))
    }

    pub(crate) fn cov_resolved(&self, g: Group, r1: Region, k1: usize, r2: Region, k2: usize) -> f64 {
        match g {
            Group::New => {
                let m = k1.min(k2);
                if m == 0 {
                    return 0.0;
                }
                let flux = &self.fluid.flux.value;
                let dt = self.grid().dt();
                let mut acc = 0.0;
                for j in 0..=m {
                    let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                    let rect = r1.rect((k1 - j) as i64).intersect(&r2.rect((k2 - j) as i64));
                    acc += w * flux[j] * prob(&self.new_table, &rect);
                }
                acc * dt
            }
            Group::FirstStage | Group::SecondStage => {
                let (mass, table) = if g == Group::FirstStage {
                    match &self.first0 {
                        Some((m, t)) => (*m, t),
                        None => return 0.0,
                    }
                } else {
                    (self.second0.0, &self.second0.1)
                };
                let a = r1.rect(k1 as i64);
                let b = r2.rect(k2 as i64);
                mass * (prob(table, &a.intersect(&b)) - prob(table, &a) * prob(table, &b))
            }
        }
    }

    /// Covariance matrix over `(driver, time)` pairs.
    pub fn matrix(&self, points: &[(Driver, f64)]) -> Result<DMatrix<f64>> {
        let n = points.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let c = self.cov(points[i].0, points[i].1, points[j].0, points[j].1)?;
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        Ok(m)
    }

    pub(crate) fn initial_factors(&self) -> Result<&InitialFactors> {
        let res = self.factors.get_or_init(|| {
            let len = self.grid().len();
            let second = factorize(len, |a, b| {
                self.cov_resolved(Group::SecondStage, Region::Stage2, a, Region::Stage2, b)
            })?;
            let first = match self.first0 {
                Some(_) => Some(factorize(2 * len, |a, b| {
                    let region = |v: usize| if v % 2 == 0 { Region::Stage1 } else { Region::Stage2 };
                    self.cov_resolved(Group::FirstStage, region(a), a / 2, region(b), b / 2)
                })?),
                None => None,
            };
            Ok(InitialFactors { first, second })
        });
        res.as_ref()
            .map_err(|&(min_eigenvalue, jitter)| Error::IndefiniteCovariance {
                min_eigenvalue,
                jitter,
            })
    }
}

/// Convenience wrapper building the covariance for a single query.
pub fn driver_covariance(fluid: &FluidSolution, x: Driver, t: f64, y: Driver, t2: f64) -> Result<f64> {
    DriverCovariance::new(fluid)?.cov(x, t, y, t2)
}

pub(crate) fn prob(table: &JointExitTable, r: &Rect) -> f64 {
    if r.is_empty() {
        0.0
    } else {
        table.rect(r.x0, r.x1, r.y0, r.y1)
    }
}

/// Cholesky factor of the covariance `c(a, b)` over `n` variables with jitter escalation.
/// Variables with zero variance are dropped; the error carries the minimum eigenvalue and the
/// largest jitter tried.
fn factorize(
    n: usize,
    c: impl Fn(usize, usize) -> f64,
) -> std::result::Result<BlockFactor, (f64, f64)> {
    let keep: Vec<usize> = (0..n).filter(|&a| c(a, a) > 0.0).collect();
    let m = keep.len();
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = c(keep[i], keep[j]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let l = cholesky_with_jitter(&cov)?;
    Ok(BlockFactor { keep, l, size: n })
}

/// Lower Cholesky factor of `cov`, adding diagonal jitter up to `1e-8 × max diag` if needed.
pub fn cholesky_with_jitter(cov: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, (f64, f64)> {
    let n = cov.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let scale = cov.diagonal().max();
    for (step, &rel) in JITTER_STEPS.iter().enumerate() {
        let mut c = cov.clone();
        for i in 0..n {
            c[(i, i)] += rel * scale;
        }
        if let Some(ch) = Cholesky::new(c) {
            if step > 0 {
                log::debug!("covariance block factorized with jitter {:e}", rel * scale);
            }
            return Ok(ch.l());
        }
    }
    let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
    Err((min_eig, JITTER_STEPS[JITTER_STEPS.len() - 1] * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite_and_reports_indefinite() {
        let psd = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = cholesky_with_jitter(&psd).unwrap();
        assert!((&l * l.transpose() - &psd).abs().max() < 1e-6);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (min_eig, _) = cholesky_with_jitter(&bad).unwrap_err();
        assert!((min_eig + 1.0).abs() < 1e-12);
    }
}
