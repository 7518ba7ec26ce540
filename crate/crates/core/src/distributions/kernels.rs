use serde::{Deserialize, Serialize};

use super::dist::DurationDist;
use super::joint::{Conditional, JointDurationDist};
use crate::grid::TimeGrid;

/// Node values of a càdlàg function on a uniform grid together with its left limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePath {
    pub value: Vec<f64>,
    pub left: Vec<f64>,
}

impl NodePath {
    /// A path without jumps.
    pub fn continuous(value: Vec<f64>) -> Self {
        Self {
            left: value.clone(),
            value,
        }
    }

    pub fn constant(c: f64, len: usize) -> Self {
        Self::continuous(vec![c; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self::constant(0.0, len)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// `1 - self`, for survival functions.
    pub fn complement(&self) -> Self {
        Self {
            value: self.value.iter().map(|v| 1.0 - v).collect(),
            left: self.left.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &NodePath, b: f64) -> Self {
        Self {
            value: self
                .value
                .iter()
                .zip(&other.value)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            left: self
                .left
                .iter()
                .zip(&other.left)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            value: self.value.iter().map(|x| a * x).collect(),
            left: self.left.iter().map(|x| a * x).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        let c = self.value[0];
        self.value.iter().all(|&v| v == c) && self.left.iter().skip(1).all(|&v| v == c)
    }
}

const SNAP_TOL: f64 = 1e-9;

/// Grid index of `a` when it sits on a node (possibly beyond the grid end).
pub(crate) fn snapped_index(a: f64, dt: f64) -> Option<i64> {
    let r = a / dt;
    let m = r.round();
    ((r - m).abs() <= SNAP_TOL * r.abs().max(1.0)).then_some(m as i64)
}

/// `F` and `F(-)` at lags `0..len` of the grid, with node-aligned atoms placed exactly on
/// their node regardless of floating-point rounding of `k * dt`.
pub fn tabulate_cdf(d: &DurationDist, dt: f64, len: usize) -> NodePath {
    let atoms = d.atoms();
    let mut value = Vec::with_capacity(len);
    let mut left = Vec::with_capacity(len);
    for k in 0..len {
        let t = k as f64 * dt;
        let base = if atoms.is_empty() {
            d.cdf(t)
        } else {
            d.continuous_cdf(t)
        };
        let (mut v, mut l) = (base, if k == 0 { 0.0 } else { base });
        for &(a, m) in &atoms {
            let (at_or_before, strictly_before) = match snapped_index(a, dt) {
                Some(idx) => (idx <= k as i64, idx < k as i64),
                None => (a <= t, a < t),
            };
            if at_or_before {
                v += m;
            }
            if strictly_before {
                l += m;
            }
        }
        value.push(v.clamp(0.0, 1.0));
        left.push(l.clamp(0.0, 1.0));
    }
    NodePath { value, left }
}

/// Smallest distance between distinct atoms (or between 0 and the first positive atom).
fn min_atom_gap(laws: &[&DurationDist]) -> Option<f64> {
    let mut pts: Vec<f64> = laws
        .iter()
        .flat_map(|d| d.atoms().into_iter().map(|a| a.0))
        .collect();
    if pts.is_empty() {
        return None;
    }
    pts.push(0.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
}

/// Precomputed pieces for integrating against `dG(u)` cell by cell.
struct ConvolutionPlan<'a> {
    dt: f64,
    /// continuous mass of the first law in cell `[t_j, t_{j+1}]`
    cell_mass: Vec<f64>,
    /// second-duration law used for each cell
    cell_law: Vec<usize>,
    laws: Vec<&'a DurationDist>,
    tables: Vec<NodePath>,
    /// whether a law has atoms off the grid, forcing exact splitting
    off_grid_atoms: Vec<bool>,
    /// atoms of the first law: (location, mass, law index)
    first_atoms: Vec<(f64, f64, usize)>,
}

impl<'a> ConvolutionPlan<'a> {
    fn new(h: &'a JointDurationDist, dt: f64, len: usize) -> Self {
        let g = &h.marginal;
        let laws: Vec<&DurationDist> = match &h.conditional {
            Conditional::Independent(f) => vec![f],
            Conditional::Bucketed(b) => b.iter().map(|x| &x.1).collect(),
        };
        let law_index = |u: f64| -> usize {
            match &h.conditional {
                Conditional::Independent(_) => 0,
                Conditional::Bucketed(b) => {
                    let target = h.conditional_at(u);
                    b.iter().position(|x| &x.1 == target).unwrap_or(0)
                }
            }
        };
        let has_atoms = !g.atoms().is_empty();
        let gc = |t: f64| if has_atoms { g.continuous_cdf(t) } else { g.cdf(t) };
        let mut cell_mass = Vec::with_capacity(len);
        let mut cell_law = Vec::with_capacity(len);
        let mut prev = gc(0.0);
        for j in 0..len {
            let next = gc((j + 1) as f64 * dt);
            cell_mass.push((next - prev).max(0.0));
            prev = next;
            cell_law.push(law_index((j as f64 + 0.5) * dt));
        }
        let tables = laws.iter().map(|f| tabulate_cdf(f, dt, len + 1)).collect();
        let off_grid_atoms = laws
            .iter()
            .map(|f| f.atoms().iter().any(|a| snapped_index(a.0, dt).is_none()))
            .collect();
        let first_atoms = g
            .atoms()
            .into_iter()
            .map(|(a, m)| (a, m, law_index(a)))
            .collect();
        Self {
            dt,
            cell_mass,
            cell_law,
            laws,
            tables,
            off_grid_atoms,
            first_atoms,
        }
    }

    /// Table lookup of `F` at an integer lag, zero for negative lags.
    #[inline]
    fn f_at(&self, law: usize, lag: i64, left: bool) -> f64 {
        if lag < 0 || (lag == 0 && left) {
            return 0.0;
        }
        let tab = &self.tables[law];
        let idx = (lag as usize).min(tab.len() - 1);
        if left {
            tab.left[idx]
        } else {
            tab.value[idx]
        }
    }

    /// `∫_{cell j} F(t_y - u) dG_c(u)` for an integer lag `y` (in steps).
    fn cell_term(&self, j: usize, y: i64) -> f64 {
        let mass = self.cell_mass[j];
        if mass == 0.0 || y <= j as i64 {
            return 0.0;
        }
        let law = self.cell_law[j];
        if !self.off_grid_atoms[law] {
            let hi = self.f_at(law, y - j as i64, true);
            let lo = self.f_at(law, y - j as i64 - 1, false);
            return 0.5 * mass * (hi + lo);
        }
        self.split_cell_term(j, y)
    }

    /// Cell term when the second law has atoms strictly inside the cell's lag range.
    fn split_cell_term(&self, j: usize, y: i64) -> f64 {
        let f = self.laws[self.cell_law[j]];
        let g_c = self.cell_mass[j] / self.dt;
        let t = y as f64 * self.dt;
        let (u0, u1) = (j as f64 * self.dt, (j + 1) as f64 * self.dt);
        let mut cuts = vec![u0, u1];
        for (a, _) in f.atoms() {
            let u = t - a;
            if u > u0 && u < u1 {
                cuts.push(u);
            }
        }
        cuts.sort_by(f64::total_cmp);
        // the continuous mass is spread at the cell's average density
        cuts.windows(2)
            .map(|w| 0.5 * g_c * (w[1] - w[0]) * (f.cdf_left(t - w[0]) + f.cdf(t - w[1])))
            .sum()
    }

    /// `∫_{[0, t_x]} F(t_y - u | u) dG(u)` for integer lags, with `F(·-)` if `left`.
    fn atom_term(&self, x: i64, y: i64, left: bool) -> f64 {
        let mut s = 0.0;
        for &(a, m, law) in &self.first_atoms {
            match snapped_index(a, self.dt) {
                Some(idx) => {
                    if idx <= x {
                        s += m * self.f_at(law, y - idx, left);
                    }
                }
                None => {
                    if a <= x as f64 * self.dt {
                        let lag = y as f64 * self.dt - a;
                        let f = self.laws[law];
                        s += m * if left { f.cdf_left(lag) } else { f.cdf(lag) };
                    }
                }
            }
        }
        s
    }
}

/// Convolution kernel `Φ(t) = P(ξ + η <= t)` for a (ξ, η) law, with left limits.
pub fn tabulate_phi(h: &JointDurationDist, grid: &TimeGrid) -> NodePath {
    let len = grid.len();
    let plan = ConvolutionPlan::new(h, grid.dt(), len);
    let mut value = Vec::with_capacity(len);
    let mut left = Vec::with_capacity(len);
    for k in 0..len {
        let ki = k as i64;
        let cont: f64 = (0..k).map(|j| plan.cell_term(j, ki)).sum();
        value.push((cont + plan.atom_term(ki, ki, false)).clamp(0.0, 1.0));
        left.push((cont + plan.atom_term(ki, ki, true)).clamp(0.0, 1.0));
    }
    NodePath { value, left }
}

/// Table of `J(x, y) = P(ξ <= x, ξ + η <= y)` over grid lags `0..len`.
#[derive(Debug, Clone)]
pub struct JointExitTable {
    len: usize,
    /// row-major `J[x][y]`, only `y >= 0` stored
    values: Vec<f64>,
    /// marginal CDF of ξ at lags
    first: Vec<f64>,
    /// `P(ξ + η <= y)` at lags
    total: Vec<f64>,
}

impl JointExitTable {
    pub fn new(h: &JointDurationDist, grid: &TimeGrid) -> Self {
        let len = grid.len();
        let plan = ConvolutionPlan::new(h, grid.dt(), len);
        let mut values = vec![0.0; len * len];
        for y in 0..len {
            let mut running = 0.0;
            for x in 0..len {
                if x > 0 {
                    running += plan.cell_term(x - 1, y as i64);
                }
                values[x * len + y] =
                    (running + plan.atom_term(x as i64, y as i64, false)).clamp(0.0, 1.0);
            }
        }
        let first = tabulate_cdf(&h.marginal, grid.dt(), len).value;
        let total = (0..len).map(|y| values[(len - 1) * len + y]).collect();
        Self {
            len,
            values,
            first,
            total,
        }
    }

    /// `J` for a single duration (first component identically zero).
    pub fn single(f: &DurationDist, grid: &TimeGrid) -> Self {
        let len = grid.len();
        let fv = tabulate_cdf(f, grid.dt(), len).value;
        let mut values = vec![0.0; len * len];
        for x in 0..len {
            values[x * len..(x + 1) * len].copy_from_slice(&fv);
        }
        Self {
            len,
            values,
            first: vec![1.0; len],
            total: fv,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `J(x, y)` where `None` stands for `+∞`; negative lags give 0.
    pub fn at(&self, x: Option<i64>, y: Option<i64>) -> f64 {
        match (x, y) {
            (Some(x), _) if x < 0 => 0.0,
            (_, Some(y)) if y < 0 => 0.0,
            (None, None) => 1.0,
            (Some(x), None) => self.first[(x as usize).min(self.len - 1)],
            (None, Some(y)) => self.total[(y as usize).min(self.len - 1)],
            (Some(x), Some(y)) => {
                let (x, y) = (x as usize, y as usize);
                // beyond the table the probabilities have converged only if the laws allow it,
                // so callers keep lags within the grid
                debug_assert!(x < self.len && y < self.len);
                self.values[x.min(self.len - 1) * self.len + y.min(self.len - 1)]
            }
        }
    }

    /// `P(ξ ∈ (x0, x1], ξ + η ∈ (y0, y1])` with `None` meaning `+∞`.
    pub fn rect(&self, x0: i64, x1: Option<i64>, y0: i64, y1: Option<i64>) -> f64 {
        let p = self.at(x1, y1) - self.at(Some(x0), y1) - self.at(x1, Some(y0))
            + self.at(Some(x0), Some(y0));
        p.max(0.0)
    }
}

/// `Φ, Ψ = G - Φ` for the new-infection law `H` and `Φ0, Ψ0` for the initial law `H0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelTable {
    pub grid: TimeGrid,
    pub phi: NodePath,
    pub psi: NodePath,
    pub phi0: NodePath,
    pub psi0: NodePath,
}

/// `(Φ, Ψ)` for one joint law.
pub fn tabulate_phi_psi(h: &JointDurationDist, grid: &TimeGrid) -> (NodePath, NodePath) {
    let phi = tabulate_phi(h, grid);
    let g = tabulate_cdf(&h.marginal, grid.dt(), grid.len());
    let psi = g.combine(1.0, &phi, -1.0);
    (phi, psi)
}

/// Tabulate the convolution kernels of both joint laws on `grid`.
pub fn tabulate_kernels(
    h: &JointDurationDist,
    h0: &JointDurationDist,
    grid: &TimeGrid,
) -> KernelTable {
    let mut laws = vec![&h.marginal, &h0.marginal];
    for j in [h, h0] {
        match &j.conditional {
            Conditional::Independent(f) => laws.push(f),
            Conditional::Bucketed(b) => laws.extend(b.iter().map(|x| &x.1)),
        }
    }
    if let Some(gap) = min_atom_gap(&laws) {
        if grid.dt() > gap {
            log::warn!(
                "grid step {} exceeds the smallest atom spacing {gap}; kernels near atoms are coarse",
                grid.dt()
            );
        }
    }
    let (phi, psi) = tabulate_phi_psi(h, grid);
    let (phi0, psi0) = tabulate_phi_psi(h0, grid);
    KernelTable {
        grid: *grid,
        phi,
        psi,
        phi0,
        psi0,
    }
}

impl KernelTable {
    /// Rows `(t, Φ, Ψ, Φ0, Ψ0)` for export.
    pub fn rows(&self) -> Vec<[f64; 5]> {
        (0..self.grid.len())
            .map(|k| {
                [
                    self.grid.time(k),
                    self.phi.value[k],
                    self.psi.value[k],
                    self.phi0.value[k],
                    self.psi0.value[k],
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(r: f64) -> DurationDist {
        DurationDist::exponential(r).unwrap()
    }

    #[test]
    fn deterministic_pair_gives_indicator_window() {
        let grid = TimeGrid::new(5.0, 0.1).unwrap();
        let h = JointDurationDist::independent(
            DurationDist::deterministic(1.0).unwrap(),
            DurationDist::deterministic(2.0).unwrap(),
        );
        let (_, psi) = tabulate_phi_psi(&h, &grid);
        for k in 0..grid.len() {
            let expect = if (10..30).contains(&k) { 1.0 } else { 0.0 };
            assert_eq!(psi.value[k], expect, "k = {k}");
        }
        // left limits: Ψ(t-) = 1 on (ξ, ξ + η]
        assert_eq!(psi.left[10], 0.0);
        assert_eq!(psi.left[30], 1.0);
    }

    #[test]
    fn uniform_initial_with_deterministic_period() {
        let (xi, eta) = (1.0, 2.0);
        let grid = TimeGrid::new(5.0, 0.05).unwrap();
        let h0 = JointDurationDist::independent(
            DurationDist::uniform(0.0, xi).unwrap(),
            DurationDist::deterministic(eta).unwrap(),
        );
        let (_, psi0) = tabulate_phi_psi(&h0, &grid);
        for k in 0..grid.len() {
            let t = grid.time(k);
            let expect = (t.min(xi) - (t - eta).max(0.0)).max(0.0) / xi;
            assert!((psi0.value[k] - expect).abs() < 1e-12, "t = {t}");
            if t <= xi {
                // the two-sided formula and the truncated one agree before ξ
                assert!((expect - (t - (t - eta).max(0.0)) / xi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exponential_convolution_closed_form() {
        let grid = TimeGrid::new(2.0, 0.001).unwrap();
        let h = JointDurationDist::independent(exp(1.0), exp(1.0));
        let phi = tabulate_phi(&h, &grid);
        for t in [0.5_f64, 1.0, 2.0] {
            let k = grid.require_node(t).unwrap();
            let exact = 1.0 - (-t).exp() - t * (-t).exp();
            assert!((phi.value[k] - exact).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn joint_table_limits() {
        let grid = TimeGrid::new(3.0, 0.05).unwrap();
        let h = JointDurationDist::independent(exp(2.0), exp(1.0));
        let j = JointExitTable::new(&h, &grid);
        let phi = tabulate_phi(&h, &grid);
        let last = grid.len() as i64 - 1;
        for y in 0..grid.len() as i64 {
            assert!((j.at(Some(y), Some(y)) - phi.value[y as usize]).abs() < 1e-12);
            assert!((j.at(Some(last), Some(y)) - phi.value[y as usize]).abs() < 1e-12);
        }
        assert!((j.at(Some(10), None) - exp(2.0).cdf(0.5)).abs() < 1e-12);
    }
}
