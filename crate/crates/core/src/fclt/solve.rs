use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covariance::{DriverCovariance, LinearKernels};
use super::drivers::Driver;
use super::sample::{DriverPaths, DriverSampler};
use crate::distributions::NodePath;
use crate::error::{invalid, Error, Result};
use crate::fluid::{convolve, solve_linear};
use crate::grid::TimeGrid;
use crate::model::{Compartment, ModelKind};

/// Variances of the Gaussian initial fluctuations; zero means the fluctuation is fixed at 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialFluctuation {
    #[serde(default)]
    pub var_exposed: f64,
    #[serde(default)]
    pub var_infectious: f64,
    #[serde(default)]
    pub var_immune: f64,
}

impl InitialFluctuation {
    pub fn validate(&self) -> Result<()> {
        for v in [self.var_exposed, self.var_infectious, self.var_immune] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid("initial_fluctuation", format!("variance {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> InitialDraws {
        let mut g = |v: f64| {
            if v > 0.0 {
                v.sqrt() * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        };
        InitialDraws {
            exposed: g(self.var_exposed),
            infectious: g(self.var_infectious),
            immune: g(self.var_immune),
        }
    }
}

/// Realized initial fluctuations `Ê(0)`, `Î(0)`, `R̂(0)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialDraws {
    pub exposed: f64,
    pub infectious: f64,
    pub immune: f64,
}

/// One path of the fluctuation limit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FcltPath {
    pub kind: ModelKind,
    pub grid: TimeGrid,
    pub s: Vec<f64>,
    pub e: Option<Vec<f64>>,
    pub i: Vec<f64>,
    pub r: Option<Vec<f64>>,
    pub initial: InitialDraws,
    pub drivers: Option<DriverPaths>,
}

impl FcltPath {
    pub fn path(&self, c: Compartment) -> Option<&[f64]> {
        match c {
            Compartment::S => Some(&self.s),
            Compartment::E => self.e.as_deref(),
            Compartment::I => Some(&self.i),
            Compartment::R => self.r.as_deref(),
            _ => None,
        }
    }

    /// `Ŝ + Ê + Î + R̂` at node `k`.
    pub fn total(&self, k: usize) -> f64 {
        self.s[k] + self.e.as_ref().map_or(0.0, |e| e[k]) + self.i[k] + self.r.as_ref().map_or(0.0, |r| r[k])
    }

    /// Rows `(t, Ŝ, Ê, Î, R̂)`; absent compartments are NaN.
    pub fn rows(&self) -> Vec<[f64; 5]> {
        let opt = |v: &Option<Vec<f64>>, k: usize| v.as_ref().map_or(f64::NAN, |x| x[k]);
        (0..self.grid.len())
            .map(|k| [self.grid.time(k), self.s[k], opt(&self.e, k), self.i[k], opt(&self.r, k)])
            .collect()
    }
}

fn add(paths: &[&[f64]]) -> Vec<f64> {
    let len = paths[0].len();
    (0..len).map(|k| paths.iter().map(|p| p[k]).sum()).collect()
}

/// Solve the linearized fluctuation equations driven by `drivers`.
pub fn solve_fclt_path(
    cov: &DriverCovariance,
    drivers: &DriverPaths,
    initial: InitialDraws,
) -> Result<FcltPath> {
    let grid = *cov.grid();
    if !drivers.grid.same_as(&grid) {
        return Err(Error::Mismatch("drivers and fluid live on different grids".into()));
    }
    let fluid = cov.fluid();
    let spec = &fluid.spec;
    let kind = spec.kind;
    let len = grid.len();
    let dt = grid.dt();
    let lam: Vec<f64> = (0..len).map(|k| spec.lambda.at(grid.time(k))).collect();
    let d = |name: &str| drivers.get(name.parse::<Driver>().expect("driver name"));
    let (i0, e0, r0) = (initial.infectious, initial.exposed, initial.immune);
    let minus_one = NodePath::constant(-1.0, len);
    let s_bar = &fluid.s;
    let i_bar = &fluid.i;

    let path = match (&cov.kernels, kind) {
        (LinearKernels::Single { f, fc, f0 }, ModelKind::Sir) => {
            let ma = d("MA");
            let y_s: Vec<f64> = ma.iter().map(|m| -i0 - m).collect();
            let y_i = add(&[
                &f0.value.iter().map(|v| i0 * (1.0 - v)).collect::<Vec<_>>(),
                &d("I0"),
                &d("I1"),
            ]);
            let w_s: Vec<f64> = (0..len).map(|k| lam[k] * i_bar[k]).collect();
            let w_i: Vec<f64> = (0..len).map(|k| lam[k] * s_bar[k]).collect();
            let mut u = solve_linear(dt, &[&minus_one, fc], &[&y_s, &y_i], &[&w_s, &w_i])?;
            let i = u.pop().expect("two components");
            let s = u.pop().expect("two components");
            let g: Vec<f64> = (0..len).map(|k| w_s[k] * s[k] + w_i[k] * i[k]).collect();
            let conv = convolve(f, &NodePath::continuous(g), dt);
            let r0i = d("R0I");
            let r1 = d("R1");
            let r = (0..len)
                .map(|k| i0 * f0.value[k] + r0i[k] + r1[k] + conv[k])
                .collect();
            FcltPath {
                kind,
                grid,
                s,
                e: None,
                i,
                r: Some(r),
                initial,
                drivers: None,
            }
        }
        (LinearKernels::Single { fc, f0, .. }, ModelKind::Sis) => {
            let y = add(&[
                &f0.value.iter().map(|v| i0 * (1.0 - v)).collect::<Vec<_>>(),
                &d("I0"),
                &d("I1"),
            ]);
            let w: Vec<f64> = (0..len).map(|k| lam[k] * (1.0 - 2.0 * i_bar[k])).collect();
            let i = solve_linear(dt, &[fc], &[&y], &[&w])?.pop().expect("one component");
            FcltPath {
                kind,
                grid,
                s: i.iter().map(|v| -v).collect(),
                e: None,
                i,
                r: None,
                initial,
                drivers: None,
            }
        }
        (
            LinearKernels::Staged {
                gc,
                phi,
                psi,
                g0,
                phi0,
                psi0,
                f0,
            },
            ModelKind::Seir,
        ) => {
            let ma = d("MA");
            let y_s: Vec<f64> = ma.iter().map(|m| -i0 - e0 - m).collect();
            let y_i: Vec<f64> = {
                let (a, b, c) = (d("I0"), d("I0E"), d("I1"));
                (0..len)
                    .map(|k| i0 * (1.0 - f0.value[k]) + e0 * psi0.value[k] + a[k] + b[k] + c[k])
                    .collect()
            };
            let w_s: Vec<f64> = (0..len).map(|k| lam[k] * i_bar[k]).collect();
            let w_i: Vec<f64> = (0..len).map(|k| lam[k] * s_bar[k]).collect();
            let mut u = solve_linear(dt, &[&minus_one, psi], &[&y_s, &y_i], &[&w_s, &w_i])?;
            let i = u.pop().expect("two components");
            let s = u.pop().expect("two components");
            let g = NodePath::continuous((0..len).map(|k| w_s[k] * s[k] + w_i[k] * i[k]).collect());
            let e_conv = convolve(gc, &g, dt);
            let r_conv = convolve(phi, &g, dt);
            let (e_0, e_1) = (d("E0"), d("E1"));
            let (r_0i, r_0e, r_1) = (d("R0I"), d("R0E"), d("R1"));
            let e = (0..len)
                .map(|k| e0 * (1.0 - g0.value[k]) + e_0[k] + e_1[k] + e_conv[k])
                .collect();
            let r = (0..len)
                .map(|k| {
                    i0 * f0.value[k] + e0 * phi0.value[k] + r_0i[k] + r_0e[k] + r_1[k] + r_conv[k]
                })
                .collect();
            FcltPath {
                kind,
                grid,
                s,
                e: Some(e),
                i,
                r: Some(r),
                initial,
                drivers: None,
            }
        }
        (
            LinearKernels::Staged {
                gc,
                psi,
                g0,
                psi0,
                f0,
                ..
            },
            ModelKind::Sirs,
        ) => {
            let r_bar = fluid.r.as_ref().expect("SIRS has R");
            let y_i: Vec<f64> = {
                let (a, b) = (d("I0"), d("I1"));
                (0..len).map(|k| i0 * (1.0 - g0.value[k]) + a[k] + b[k]).collect()
            };
            let y_r: Vec<f64> = {
                let (a, b, c) = (d("R0"), d("R0I"), d("R1"));
                (0..len)
                    .map(|k| r0 * (1.0 - f0.value[k]) + i0 * psi0.value[k] + a[k] + b[k] + c[k])
                    .collect()
            };
            // λ(Ŝ Ī + S̄ Î) with Ŝ = -Î - R̂
            let w_i: Vec<f64> = (0..len)
                .map(|k| lam[k] * (1.0 - 2.0 * i_bar[k] - r_bar[k]))
                .collect();
            let w_r: Vec<f64> = (0..len).map(|k| -lam[k] * i_bar[k]).collect();
            let mut u = solve_linear(dt, &[gc, psi], &[&y_i, &y_r], &[&w_i, &w_r])?;
            let r = u.pop().expect("two components");
            let i = u.pop().expect("two components");
            FcltPath {
                kind,
                grid,
                s: (0..len).map(|k| -i[k] - r[k]).collect(),
                e: None,
                i,
                r: Some(r),
                initial,
                drivers: None,
            }
        }
        _ => return Err(Error::InvalidModel(format!("{kind} does not match its kernel tables"))),
    };
    Ok(path)
}

/// Sample drivers and initial fluctuations and solve for one path.
pub fn sample_fclt_path<R: Rng + ?Sized>(
    sampler: &DriverSampler<'_>,
    initial: &InitialFluctuation,
    keep_drivers: bool,
    rng: &mut R,
) -> Result<FcltPath> {
    let drivers = sampler.sample(rng)?;
    let draws = initial.draw(rng);
    let mut path = solve_fclt_path(sampler.covariance(), &drivers, draws)?;
    if keep_drivers {
        path.drivers = Some(drivers);
    }
    Ok(path)
}

/// Random stream of path `r` under a master seed.
pub fn path_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Sample `reps` independent paths in parallel, mapping each through `f`. Results are
/// independent of thread count.
pub fn fclt_ensemble<T, F>(
    cov: &DriverCovariance,
    initial: &InitialFluctuation,
    reps: usize,
    seed: u64,
    keep_drivers: bool,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(FcltPath) -> T + Sync,
{
    initial.validate()?;
    let sampler = DriverSampler::new(cov)?;
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = path_rng(seed, r as u64);
            sample_fclt_path(&sampler, initial, keep_drivers, &mut rng).map(&f)
        })
        .collect()
}
