use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::covariance::{prob, BlockFactor, DriverCovariance};
use super::drivers::{drivers_of, resolve, Driver, Group, Rect, Region};
use crate::error::Result;
use crate::grid::TimeGrid;

/// Sampled driver paths on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriverPaths {
    pub grid: TimeGrid,
    pub paths: BTreeMap<Driver, Vec<f64>>,
}

impl DriverPaths {
    /// Path of a driver; drivers the model does not have read as zero.
    pub fn get(&self, d: Driver) -> Vec<f64> {
        self.paths
            .get(&d)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.grid.len()])
    }

    pub fn zeros(cov: &DriverCovariance) -> Self {
        let len = cov.grid().len();
        Self {
            grid: *cov.grid(),
            paths: cov.drivers().into_iter().map(|d| (d, vec![0.0; len])).collect(),
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Cell probabilities of the new-infection law: `P(ξ ∈ (a-1, a], ζ ∈ (b-1, b])`.
struct CellTable {
    len: usize,
    cells: Vec<f64>,
    row_mass: Vec<f64>,
}

impl CellTable {
    fn new(cov: &DriverCovariance) -> Self {
        let t = &cov.new_table;
        let len = cov.grid().len();
        let mut cells = vec![0.0; len * len];
        let mut row_mass = vec![0.0; len];
        for a in 0..len {
            let ai = a as i64;
            row_mass[a] = (t.at(Some(ai), None) - t.at(Some(ai - 1), None)).max(0.0);
            if row_mass[a] == 0.0 {
                continue;
            }
            for b in a..len {
                let bi = b as i64;
                cells[a * len + b] = t.rect(ai - 1, Some(ai), bi - 1, Some(bi));
            }
        }
        Self {
            len,
            cells,
            row_mass,
        }
    }
}

/// Sample the white-noise drivers from independent cell increments.
///
/// Each node `j` carries two independent half-masses `dt/2 · flux(t_j)` of infections: the
/// right half of cell `[t_{j-1}, t_j]` (counted from time `t_j` on) and the left half of cell
/// `[t_j, t_{j+1}]` (counted from `t_{j+1}` on). This reproduces the node trapezoid rule of
/// the analytic covariance exactly. Each half-mass is split further by the lag cells of
/// `(ξ, ζ)`.
fn sample_new<R: Rng + ?Sized>(cov: &DriverCovariance, cells: &CellTable, rng: &mut R) -> [Vec<f64>; 3] {
    let len = cells.len;
    let k_max = len - 1;
    let dt = cov.grid().dt();
    let flux = &cov.fluid().flux.value;
    let table = &cov.new_table;
    let mut out = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    let mut rows = vec![0.0; len + 1];
    let mut cols = vec![0.0; len + 1];
    for j in 0..len {
        let m_total = 0.5 * dt * flux[j];
        if m_total <= 0.0 {
            continue;
        }
        let span = k_max - j;
        // the half from cell [t_{j-1}, t_j] counts from u = 0, the half from [t_j, t_{j+1}] from u = 1
        for start in [0usize, 1] {
            if (start == 0 && j == 0) || (start == 1 && j == k_max) {
                continue;
            }
            let rows = &mut rows[..span + 2];
            let cols = &mut cols[..span + 2];
            rows.fill(0.0);
            cols.fill(0.0);
            let tail = span + 1;
            for a in 0..=span {
                if cells.row_mass[a] == 0.0 {
                    continue;
                }
                let row = &cells.cells[a * len..a * len + len];
                for b in a..=span {
                    let p = row[b];
                    if p > 0.0 {
                        let z = (m_total * p).sqrt() * normal(rng);
                        rows[a] += z;
                        cols[b] += z;
                    }
                }
                let p_tail = prob(
                    table,
                    &Rect {
                        x0: a as i64 - 1,
                        x1: Some(a as i64),
                        y0: span as i64,
                        y1: None,
                    },
                );
                if p_tail > 0.0 {
                    let z = (m_total * p_tail).sqrt() * normal(rng);
                    rows[a] += z;
                    cols[tail] += z;
                }
            }
            let p_late = (1.0 - table.at(Some(span as i64), None)).max(0.0);
            if p_late > 0.0 {
                let z = (m_total * p_late).sqrt() * normal(rng);
                rows[tail] += z;
                cols[tail] += z;
            }
            let whole: f64 = rows.iter().sum();
            // stage1(u) = Σ_{a > u} rows[a]; stage3(u) = Σ_{b <= u} cols[b]
            let mut suffix = whole - rows[0];
            let mut prefix = cols[0];
            for u in 0..=span {
                if u > 0 {
                    suffix -= rows[u];
                    prefix += cols[u];
                }
                if u < start {
                    continue;
                }
                let k = j + u;
                out[0][k] += suffix;
                out[1][k] += whole - suffix - prefix;
                out[2][k] += prefix;
            }
        }
    }
    out
}

fn sample_block<R: Rng + ?Sized>(f: &BlockFactor, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; f.size];
    let m = f.keep.len();
    if m == 0 {
        return out;
    }
    let z = DVector::from_iterator(m, (0..m).map(|_| normal(rng)));
    let x = &f.l * z;
    for (i, &v) in f.keep.iter().enumerate() {
        out[v] = x[i];
    }
    out
}

/// Draw one joint sample of all drivers of the model.
pub fn sample_drivers<R: Rng + ?Sized>(cov: &DriverCovariance, rng: &mut R) -> Result<DriverPaths> {
    let cells = CellTable::new(cov);
    sample_drivers_with(cov, &cells, rng)
}

/// Precomputed state reused across many samples.
pub struct DriverSampler<'a> {
    cov: &'a DriverCovariance,
    cells: CellTable,
}

impl<'a> DriverSampler<'a> {
    pub fn new(cov: &'a DriverCovariance) -> Result<Self> {
        cov.initial_factors()?;
        Ok(Self {
            cov,
            cells: CellTable::new(cov),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DriverPaths> {
        sample_drivers_with(self.cov, &self.cells, rng)
    }

    pub fn covariance(&self) -> &DriverCovariance {
        self.cov
    }
}

fn sample_drivers_with<R: Rng + ?Sized>(
    cov: &DriverCovariance,
    cells: &CellTable,
    rng: &mut R,
) -> Result<DriverPaths> {
    let factors = cov.initial_factors()?;
    let len = cov.grid().len();
    let new = sample_new(cov, cells, rng);
    let ma: Vec<f64> = (0..len).map(|k| new[0][k] + new[1][k] + new[2][k]).collect();

    let second2 = sample_block(&factors.second, rng);
    let second3: Vec<f64> = second2.iter().map(|v| -v).collect();
    let first = factors.first.as_ref().map(|f| {
        let raw = sample_block(f, rng);
        let s1: Vec<f64> = (0..len).map(|k| raw[2 * k]).collect();
        let s2: Vec<f64> = (0..len).map(|k| raw[2 * k + 1]).collect();
        let s3: Vec<f64> = (0..len).map(|k| -(s1[k] + s2[k])).collect();
        [s1, s2, s3]
    });

    let kind = cov.kind();
    let mut paths = BTreeMap::new();
    for d in drivers_of(kind) {
        let (group, region) = resolve(kind, d).expect("listed drivers resolve");
        let stage = |r: Region| match r {
            Region::Stage1 => 0,
            Region::Stage2 => 1,
            Region::Stage3 => 2,
            _ => unreachable!("initial drivers are single stages"),
        };
        let path = match (group, region) {
            (Group::New, Region::Whole) => ma.clone(),
            (Group::New, Region::Reached) => (0..len).map(|k| new[1][k] + new[2][k]).collect(),
            (Group::New, r) => new[stage(r)].clone(),
            (Group::SecondStage, Region::Stage2) => second2.clone(),
            (Group::SecondStage, _) => second3.clone(),
            (Group::FirstStage, r) => first.as_ref().expect("staged model")[stage(r)].clone(),
        };
        paths.insert(d, path);
    }
    Ok(DriverPaths {
        grid: *cov.grid(),
        paths,
    })
}
