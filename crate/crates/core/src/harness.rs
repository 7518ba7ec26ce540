//! Scalings, ensemble statistics and convergence checks linking the simulator to its limits.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agent_sim::{ensemble_map, CompartmentPath, EventLog, SimOptions, Transition};
use crate::error::{invalid, Error, Result};
use crate::fluid::{solve_fluid, sup_norm_diff, FluidSolution};
use crate::grid::TimeGrid;
use crate::model::{Compartment, ModelKind, ModelSpec};

/// Compartment fractions `X / n` on the simulation grid; compartments the model lacks are `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledPath {
    pub kind: ModelKind,
    pub grid: TimeGrid,
    pub n: u64,
    pub s: Vec<f64>,
    pub e: Option<Vec<f64>>,
    pub i: Vec<f64>,
    pub r: Option<Vec<f64>>,
}

/// Fluctuations `√n (X / n − X̄)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluctuationPath {
    pub kind: ModelKind,
    pub grid: TimeGrid,
    pub n: u64,
    pub s: Vec<f64>,
    pub e: Option<Vec<f64>>,
    pub i: Vec<f64>,
    pub r: Option<Vec<f64>>,
}

macro_rules! compartment_access {
    ($t:ty) => {
        impl $t {
            pub fn path(&self, c: Compartment) -> Option<&[f64]> {
                match c {
                    Compartment::S => Some(&self.s),
                    Compartment::E => self.e.as_deref(),
                    Compartment::I => Some(&self.i),
                    Compartment::R => self.r.as_deref(),
                    _ => None,
                }
            }

            pub fn compartments(&self) -> Vec<Compartment> {
                [Compartment::S, Compartment::E, Compartment::I, Compartment::R]
                    .into_iter()
                    .filter(|&c| self.path(c).is_some())
                    .collect()
            }

            pub fn total(&self, k: usize) -> f64 {
                self.compartments()
                    .into_iter()
                    .map(|c| self.path(c).expect("listed")[k])
                    .sum()
            }
        }
    };
}

compartment_access!(ScaledPath);
compartment_access!(FluctuationPath);

fn has_e(kind: ModelKind) -> bool {
    kind == ModelKind::Seir
}

fn has_r(kind: ModelKind) -> bool {
    kind != ModelKind::Sis
}

pub fn fluid_scale(path: &CompartmentPath) -> ScaledPath {
    let n = path.n as f64;
    let scale = |v: &[u64]| v.iter().map(|&x| x as f64 / n).collect::<Vec<_>>();
    ScaledPath {
        kind: path.kind,
        grid: path.grid,
        n: path.n,
        s: scale(&path.s),
        e: has_e(path.kind).then(|| scale(&path.e)),
        i: scale(&path.i),
        r: has_r(path.kind).then(|| scale(&path.r)),
    }
}

/// Fluctuations of a simulated path around the fluid limit of the same model on the same grid.
pub fn diffusion_scale(path: &CompartmentPath, fluid: &FluidSolution) -> Result<FluctuationPath> {
    if path.spec != fluid.spec {
        return Err(Error::Mismatch(
            "simulated path and fluid limit come from different model specs".into(),
        ));
    }
    if !path.grid.same_as(&fluid.grid) {
        return Err(Error::Mismatch(
            "simulated path and fluid limit live on different grids".into(),
        ));
    }
    let scaled = fluid_scale(path);
    let root = (path.n as f64).sqrt();
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| root * (a - b)).collect::<Vec<_>>();
    let opt = |x: &Option<Vec<f64>>, y: &Option<Vec<f64>>| match (x, y) {
        (Some(x), Some(y)) => Some(diff(x, y)),
        _ => None,
    };
    Ok(FluctuationPath {
        kind: path.kind,
        grid: path.grid,
        n: path.n,
        s: diff(&scaled.s, &fluid.s),
        e: opt(&scaled.e, &fluid.e),
        i: diff(&scaled.i, &fluid.i),
        r: opt(&scaled.r, &fluid.r),
    })
}

/// Unbiased sample covariance of a set of replicated vectors with per-entry standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovEstimate {
    pub reps: usize,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    /// Standard error of each covariance entry, from the spread of the centred products.
    pub se: DMatrix<f64>,
}

impl CovEstimate {
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let reps = samples.len();
        if reps < 2 {
            return Err(invalid("reps", "need at least two replications for a covariance"));
        }
        let m = samples[0].len();
        if samples.iter().any(|s| s.len() != m) {
            return Err(Error::Mismatch("replications have different lengths".into()));
        }
        let rf = reps as f64;
        let mut mean = vec![0.0; m];
        for s in samples {
            for (acc, v) in mean.iter_mut().zip(s) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= rf);
        let mut cov = DMatrix::zeros(m, m);
        let mut se = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let prods: Vec<f64> = samples
                    .iter()
                    .map(|s| (s[a] - mean[a]) * (s[b] - mean[b]))
                    .collect();
                let sum: f64 = prods.iter().sum();
                let c = sum / (rf - 1.0);
                let pm = sum / rf;
                let spread = prods.iter().map(|p| (p - pm).powi(2)).sum::<f64>() / (rf - 1.0);
                let e = (spread / rf).sqrt();
                cov[(a, b)] = c;
                cov[(b, a)] = c;
                se[(a, b)] = e;
                se[(b, a)] = e;
            }
        }
        Ok(Self { reps, mean, cov, se })
    }

    pub fn variance(&self, a: usize) -> f64 {
        self.cov[(a, a)]
    }
}

/// Mean and variance of each compartment at every node, plus covariances at probe points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub grid: TimeGrid,
    pub reps: usize,
    pub mean: BTreeMap<Compartment, Vec<f64>>,
    pub variance: BTreeMap<Compartment, Vec<f64>>,
    /// `√(variance / reps)`.
    pub mean_se: BTreeMap<Compartment, Vec<f64>>,
    pub probes: Vec<(Compartment, f64)>,
    pub probe_cov: CovEstimate,
}

/// Ensemble statistics of fluctuation paths, with covariances among `probes`.
pub fn empirical_cov(paths: &[FluctuationPath], probes: &[(Compartment, f64)]) -> Result<EnsembleStats> {
    let first = paths
        .first()
        .ok_or_else(|| invalid("reps", "need at least two replications"))?;
    let grid = first.grid;
    if paths.iter().any(|p| !p.grid.same_as(&grid) || p.kind != first.kind) {
        return Err(Error::Mismatch("paths differ in grid or model".into()));
    }
    let nodes = probes
        .iter()
        .map(|&(c, t)| {
            if first.path(c).is_none() {
                return Err(invalid("probes", format!("{} has no compartment {}", first.kind, c.name())));
            }
            grid.require_node(t).map(|k| (c, k))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| nodes.iter().map(|&(c, k)| p.path(c).expect("checked")[k]).collect())
        .collect();
    let probe_cov = CovEstimate::from_samples(&samples)?;
    let reps = paths.len();
    let rf = reps as f64;
    let (mut mean, mut variance, mut mean_se) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for c in first.compartments() {
        let mut m = vec![0.0; grid.len()];
        let mut v = vec![0.0; grid.len()];
        for p in paths {
            for (acc, x) in m.iter_mut().zip(p.path(c).expect("same kind")) {
                *acc += x;
            }
        }
        m.iter_mut().for_each(|x| *x /= rf);
        for p in paths {
            for (k, x) in p.path(c).expect("same kind").iter().enumerate() {
                v[k] += (x - m[k]).powi(2);
            }
        }
        v.iter_mut().for_each(|x| *x /= rf - 1.0);
        mean_se.insert(c, v.iter().map(|x| (x / rf).sqrt()).collect());
        mean.insert(c, m);
        variance.insert(c, v);
    }
    Ok(EnsembleStats {
        grid,
        reps,
        mean,
        variance,
        mean_se,
        probes: probes.to_vec(),
        probe_cov,
    })
}

/// Centred and scaled driver processes of one SIR run at a few times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SirDriverSample {
    pub times: Vec<f64>,
    /// Infection count minus its compensator.
    pub ma: Vec<f64>,
    /// Newly infected agents still infectious, minus their compensator.
    pub i1: Vec<f64>,
    /// Newly infected agents already recovered, minus their compensator.
    pub r1: Vec<f64>,
}

/// Rebuild the infection martingale and the new-infection drivers of an SIR run from its
/// event log. Agents infected during the run are told apart from the initially infectious ones
/// by their id block.
pub fn sir_drivers_from_log(log: &EventLog, spec: &ModelSpec, times: &[f64]) -> Result<SirDriverSample> {
    if spec.kind != ModelKind::Sir || log.kind.is_some_and(|k| k != ModelKind::Sir) {
        return Err(Error::InvalidModel("driver reconstruction needs an SIR run".into()));
    }
    let (f, _) = spec.single_laws()?;
    let init = log.initial;
    let n = init.total() as f64;
    let root = n.sqrt();
    let first_new = init.exposed + init.infectious + init.immune;
    let mut out = SirDriverSample {
        times: times.to_vec(),
        ma: Vec::with_capacity(times.len()),
        i1: Vec::with_capacity(times.len()),
        r1: Vec::with_capacity(times.len()),
    };
    for &t in times {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid("times", format!("probe time {t} must be finite and >= 0")));
        }
        let (mut s, mut i) = (init.susceptible as f64, init.infectious as f64);
        let (mut infections, mut recovered_new) = (0u64, 0u64);
        let (mut comp_a, mut comp_i) = (0.0, 0.0);
        let mut a = 0.0;
        // compensators over [a, b) with S and I frozen
        let segment = |a: f64, b: f64, s: f64, i: f64, comp_a: &mut f64, comp_i: &mut f64| {
            if b <= a || s == 0.0 || i == 0.0 {
                return;
            }
            let pressure = s * i / n;
            let mut cuts = vec![a];
            cuts.extend(spec.lambda.breakpoints_in(a, b));
            cuts.push(b);
            for w in cuts.windows(2) {
                let lam = spec.lambda.at(w[0]);
                *comp_a += lam * pressure * (w[1] - w[0]);
                *comp_i += lam * pressure * (f.integrated_survival(t - w[0]) - f.integrated_survival(t - w[1]));
            }
        };
        for ev in log.events.iter().take_while(|ev| ev.time <= t) {
            segment(a, ev.time, s, i, &mut comp_a, &mut comp_i);
            a = ev.time;
            match ev.transition {
                Transition::Infect => {
                    s -= 1.0;
                    i += 1.0;
                    infections += 1;
                }
                Transition::Recover => {
                    i -= 1.0;
                    if u64::from(ev.agent) >= first_new {
                        recovered_new += 1;
                    }
                }
                other => {
                    return Err(Error::InvalidModel(format!(
                        "unexpected {} event in an SIR log",
                        other.name()
                    )))
                }
            }
        }
        segment(a, t, s, i, &mut comp_a, &mut comp_i);
        let ma = (infections as f64 - comp_a) / root;
        let i1 = ((infections - recovered_new) as f64 - comp_i) / root;
        out.ma.push(ma);
        out.i1.push(i1);
        out.r1.push(ma - i1);
    }
    Ok(out)
}

/// Log-log least-squares fit of errors against population sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    pub n_list: Vec<u64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_rate(n_list: &[u64], errors: &[f64]) -> Result<RateFit> {
    if n_list.len() != errors.len() {
        return Err(Error::Mismatch("one error per population size is needed".into()));
    }
    if n_list.len() < 2 {
        return Err(Error::Degenerate("a slope needs at least two points".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Degenerate(format!("error {e} cannot be put on a log scale")));
    }
    let x: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all population sizes are equal".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        n_list: n_list.to_vec(),
        errors: errors.to_vec(),
        slope,
        intercept,
        r2,
    })
}

/// Mean sup-norm distance between `Iⁿ / n` and the fluid `Ī` on `grid`, for each `n`, and the
/// fitted log-log slope.
pub fn convergence_rate(
    spec: &ModelSpec,
    n_list: &[u64],
    reps: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<RateFit> {
    if n_list.len() < 3 {
        return Err(invalid("n_list", "need at least three population sizes"));
    }
    let (lo, hi) = n_list
        .iter()
        .fold((u64::MAX, 0), |(lo, hi), &n| (lo.min(n), hi.max(n)));
    if (hi as f64) < 100.0 * lo as f64 {
        return Err(invalid("n_list", "population sizes must span at least two decades"));
    }
    let fluid = solve_fluid(spec, grid)?;
    let mut errors = Vec::with_capacity(n_list.len());
    for (idx, &n) in n_list.iter().enumerate() {
        let sups = ensemble_map(
            spec,
            n,
            reps,
            grid,
            seed.wrapping_add(idx as u64),
            SimOptions::default(),
            |out| sup_norm_diff(&fluid_scale(&out.path).i, &fluid.i),
        )?;
        errors.push(sups.iter().sum::<f64>() / reps as f64);
    }
    fit_rate(n_list, &errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_slope() {
        let n = [100, 1000, 10_000, 100_000];
        let e: Vec<f64> = n.iter().map(|&v| 3.0 * (v as f64).powf(-0.5)).collect();
        let fit = fit_rate(&n, &e).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_errors_are_degenerate() {
        assert!(matches!(fit_rate(&[10, 100, 1000], &[0.0, 0.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn identical_samples_have_zero_covariance() {
        let s = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let c = CovEstimate::from_samples(&s).unwrap();
        assert!(c.cov.iter().all(|v| *v == 0.0));
    }
}
