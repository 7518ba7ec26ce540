//! Randomized invariants across all modules, shared by the property tests and the acceptance
//! runner.
#![allow(dead_code)]

use std::collections::HashMap;

use epilimit::agent_sim::{simulate_seeded, SimOptions, Transition};
use epilimit::distributions::{
    equilibrium_dist, tabulate_cdf, tabulate_phi_psi, DurationDist, JointDurationDist, NodePath,
};
use epilimit::equilibria::sirs_equilibrium;
use epilimit::fclt::{
    drivers_of, path_rng, sample_drivers, solve_fclt_path, Driver, DriverCovariance, InitialDraws,
};
use epilimit::fluid::{
    convolve, solve_fluid, solve_fluid_with, solve_linear_volterra_2d, sup_norm_diff, StepInit,
};
use epilimit::harness::{diffusion_scale, fluid_scale, sir_drivers_from_log, CovEstimate};
use epilimit::model::{Compartment, InitialFractions, ModelKind, ModelSpec};
use epilimit::{ContactRate, TimeGrid};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Fresh random cases on every run.
    Explore,
    /// Fixed seed, for reproducible acceptance runs.
    Fixed,
}

fn run<S: Strategy>(
    mode: Mode,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = match mode {
        Mode::Explore => TestRunner::new(config),
        Mode::Fixed => {
            let rng = TestRng::deterministic_rng(config.rng_algorithm);
            TestRunner::new_with_rng(config, rng)
        }
    };
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn family() -> impl Strategy<Value = DurationDist> {
    prop_oneof![
        (0.2..5.0f64).prop_map(|r| DurationDist::exponential(r).unwrap()),
        (0.1..3.0f64).prop_map(|v| DurationDist::deterministic(v).unwrap()),
        (0.0..1.0f64, 0.1..2.0f64).prop_map(|(lo, w)| DurationDist::uniform(lo, lo + w).unwrap()),
        (0.3..6.0f64, 0.3..5.0f64).prop_map(|(k, r)| DurationDist::gamma(k, r).unwrap()),
        (-1.0..1.0f64, 0.1..1.2f64).prop_map(|(m, s)| DurationDist::lognormal(m, s).unwrap()),
        (0.4..4.0f64, 0.3..3.0f64).prop_map(|(k, l)| DurationDist::weibull(k, l).unwrap()),
    ]
}

fn smooth_family() -> impl Strategy<Value = DurationDist> {
    prop_oneof![
        (0.3..3.0f64).prop_map(|r| DurationDist::exponential(r).unwrap()),
        (1.5..5.0f64, 1.0..5.0f64).prop_map(|(k, r)| DurationDist::gamma(k, r).unwrap()),
        (-0.7..0.3f64, 0.2..0.8f64).prop_map(|(m, s)| DurationDist::lognormal(m, s).unwrap()),
    ]
}

fn kind() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::Sir),
        Just(ModelKind::Sis),
        Just(ModelKind::Seir),
        Just(ModelKind::Sirs),
    ]
}

fn spec_of(kind: ModelKind, lambda: f64, f: DurationDist, g: DurationDist, i0: f64, other0: f64) -> ModelSpec {
    let lambda = ContactRate::Constant(lambda);
    match kind {
        ModelKind::Sir => ModelSpec::sir(lambda, f.clone(), f, i0).unwrap(),
        ModelKind::Sis => ModelSpec::sis(lambda, f.clone(), f, i0).unwrap(),
        ModelKind::Seir => {
            let h = JointDurationDist::independent(g, f.clone());
            ModelSpec::seir(lambda, h.clone(), h, f, other0, i0).unwrap()
        }
        ModelKind::Sirs => {
            let h = JointDurationDist::independent(f, g.clone());
            ModelSpec::sirs(lambda, h.clone(), h, g, i0, other0).unwrap()
        }
    }
}

fn markov_sir(lambda: f64, i0: f64) -> ModelSpec {
    ModelSpec::markovian(
        ModelKind::Sir,
        lambda,
        1.0,
        1.0,
        InitialFractions {
            infectious: i0,
            ..Default::default()
        },
    )
    .unwrap()
}

fn d(s: &str) -> Driver {
    s.parse().unwrap()
}

fn new_stages(kind: ModelKind) -> Vec<Driver> {
    drivers_of(kind)
        .into_iter()
        .filter(|x| matches!(x, Driver::New { to } if *to != Compartment::L))
        .collect()
}

pub fn cdf_is_a_distribution_function(mode: Mode) -> Result<(), String> {
    run(mode, 32, family(), |d| {
        let mut prev = 0.0;
        for k in 0..1000 {
            let t = k as f64 * 0.01;
            let v = d.cdf(t);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v >= prev, "{} at {t}", d.family_name());
            prop_assert!(d.cdf_left(t) <= v);
            prev = v;
        }
        Ok(())
    })
}

pub fn exponential_is_its_own_stationary_excess(mode: Mode) -> Result<(), String> {
    run(mode, 32, 0.05..20.0f64, |rate| {
        let d = DurationDist::exponential(rate).unwrap();
        let e = equilibrium_dist(&d).unwrap();
        for k in 0..200 {
            let t = k as f64 * 0.05 / rate;
            prop_assert!((e.cdf(t) - d.cdf(t)).abs() < 1e-12);
        }
        Ok(())
    })
}

pub fn first_stage_kernels_split_the_marginal(mode: Mode) -> Result<(), String> {
    run(mode, 32, (smooth_family(), family()), |(a, b)| {
        let grid = TimeGrid::new(4.0, 0.05).unwrap();
        let h = JointDurationDist::independent(a.clone(), b);
        let (phi, psi) = tabulate_phi_psi(&h, &grid);
        let g = tabulate_cdf(&a, grid.dt(), grid.len());
        for k in 0..grid.len() {
            prop_assert!((psi.value[k] + phi.value[k] - g.value[k]).abs() <= f64::EPSILON);
        }
        Ok(())
    })
}

pub fn convolution_kernel_matches_fine_riemann_sum(mode: Mode) -> Result<(), String> {
    run(mode, 32, (smooth_family(), smooth_family()), |(a, b)| {
        let grid = TimeGrid::new(3.0, 0.05).unwrap();
        let h = JointDurationDist::independent(a.clone(), b.clone());
        let (phi, _) = tabulate_phi_psi(&h, &grid);
        // midpoint sum over a 10x finer partition
        let fine = grid.dt() / 10.0;
        for k in (0..grid.len()).step_by(5) {
            let t = grid.time(k);
            let brute: f64 = (0..10 * k)
                .map(|j| {
                    let x0 = j as f64 * fine;
                    (a.cdf(x0 + fine) - a.cdf(x0)) * b.cdf(t - x0 - 0.5 * fine)
                })
                .sum();
            prop_assert!((phi.value[k] - brute).abs() < 2e-3, "t = {t}: {} vs {brute}", phi.value[k]);
        }
        Ok(())
    })
}

pub fn stationary_start_identity(mode: Mode) -> Result<(), String> {
    run(mode, 32, (smooth_family(), smooth_family()), |(f, g)| {
        // E[ξ] Ψ0(t) + ∫_0^t Ψ = ∫_0^t P(η > s) ds for the (infectious, immune) pair (f, g)
        let grid = TimeGrid::new(4.0, 0.01).unwrap();
        let dt = grid.dt();
        let h = JointDurationDist::independent(f.clone(), g.clone());
        let h0 = JointDurationDist::independent(equilibrium_dist(&f).unwrap(), g.clone());
        let (_, psi) = tabulate_phi_psi(&h, &grid);
        let (_, psi0) = tabulate_phi_psi(&h0, &grid);
        let mut int_psi = 0.0;
        for k in 0..grid.len() {
            if k > 0 {
                int_psi += 0.5 * dt * (psi.value[k - 1] + psi.left[k]);
            }
            let lhs = f.mean() * psi0.value[k] + int_psi;
            let rhs = g.integrated_survival(grid.time(k));
            prop_assert!((lhs - rhs).abs() < 2e-3, "t = {}: {lhs} vs {rhs}", grid.time(k));
        }
        Ok(())
    })
}

pub fn fluid_conserves_mass(mode: Mode) -> Result<(), String> {
    let strategy = (kind(), 0.0..4.0f64, smooth_family(), smooth_family(), 0.0..0.4f64, 0.0..0.4f64);
    run(mode, 32, strategy, |(kind, lambda, f, g, i0, other)| {
        let spec = spec_of(kind, lambda, f, g, i0, other);
        let grid = TimeGrid::new(4.0, 0.02).unwrap();
        let sol = solve_fluid(&spec, &grid).unwrap();
        for k in 0..grid.len() {
            prop_assert!((sol.total(k) - 1.0).abs() < 1e-8, "{kind}: {}", sol.total(k));
            prop_assert!(sol.i[k] >= -1e-12 && sol.s[k] >= -1e-12);
            if kind == ModelKind::Sis {
                prop_assert_eq!(sol.s[k] + sol.i[k], 1.0);
            }
            if kind == ModelKind::Seir {
                let (e, l) = (sol.e.as_ref().unwrap(), sol.l.as_ref().unwrap());
                prop_assert!((e[k] - (other + sol.a[k] - l[k])).abs() < 1e-8);
            }
        }
        Ok(())
    })
}

pub fn step_initialisations_agree(mode: Mode) -> Result<(), String> {
    run(mode, 16, (kind(), 0.5..4.0f64, smooth_family(), smooth_family(), 0.01..0.3f64), |(kind, lambda, f, g, i0)| {
        let spec = spec_of(kind, lambda, f, g, i0, 0.05);
        let grid = TimeGrid::new(4.0, 0.02).unwrap();
        let a = solve_fluid_with(&spec, &grid, StepInit::Previous).unwrap();
        let b = solve_fluid_with(&spec, &grid, StepInit::Extrapolate).unwrap();
        prop_assert!(a.max_sup_distance(&b).unwrap() < 1e-10);
        Ok(())
    })
}

pub fn refinement_is_second_order(mode: Mode) -> Result<(), String> {
    let laws = prop_oneof![
        (0.5..2.0f64).prop_map(|r| DurationDist::exponential(r).unwrap()),
        (2.0..4.0f64, 2.0..4.0f64).prop_map(|(k, r)| DurationDist::gamma(k, r).unwrap()),
    ];
    run(mode, 8, (1.5..3.0f64, laws), |(lambda, f)| {
        let spec = ModelSpec::sir(ContactRate::Constant(lambda), f.clone(), f, 0.05).unwrap();
        let g1 = TimeGrid::new(8.0, 0.04).unwrap();
        let s1 = solve_fluid(&spec, &g1).unwrap();
        let s2 = solve_fluid(&spec, &g1.refined(2)).unwrap();
        let s4 = solve_fluid(&spec, &g1.refined(4)).unwrap();
        let pick = |v: &[f64], f: usize| v.iter().step_by(f).copied().collect::<Vec<_>>();
        let d1 = sup_norm_diff(&s1.i, &pick(&s2.i, 2));
        let d2 = sup_norm_diff(&pick(&s2.i, 2), &pick(&s4.i, 4));
        let ratio = d1 / d2;
        prop_assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
        Ok(())
    })
}

pub fn simulation_conserves_agents_at_every_event(mode: Mode) -> Result<(), String> {
    let strategy = (
        (kind(), 0.0..4.0f64, family(), family()),
        (0.0..0.4f64, 0.0..0.4f64, 1u64..400, any::<u64>()),
    );
    run(mode, 48, strategy, |((kind, lambda, f, g), (i0, other, n, seed))| {
        let spec = spec_of(kind, lambda, f, g, i0, other);
        let grid = TimeGrid::new(5.0, 0.25).unwrap();
        let out = simulate_seeded(&spec, n, &grid, seed, 0, SimOptions { record_events: true }).unwrap();
        let log = out.log.unwrap();
        prop_assert_eq!(log.check_conservation(), Ok(()));
        prop_assert!(log.events.windows(2).all(|w| w[0].time <= w[1].time));
        let p = &out.path;
        for k in 0..grid.len() {
            prop_assert_eq!(p.s[k] + p.e[k] + p.i[k] + p.r[k], n);
            if k > 0 {
                prop_assert!(p.a[k] >= p.a[k - 1] && p.l[k] >= p.l[k - 1]);
                if matches!(kind, ModelKind::Sir | ModelKind::Seir) {
                    prop_assert!(p.s[k] <= p.s[k - 1] && p.r[k] >= p.r[k - 1]);
                }
            }
        }
        Ok(())
    })
}

pub fn integrated_intensity_is_lipschitz(mode: Mode) -> Result<(), String> {
    run(mode, 16, (0.5..4.0f64, 10u64..2000, any::<u64>()), |(lambda, n, seed)| {
        let spec = markov_sir(lambda, 0.1);
        let grid = TimeGrid::new(5.0, 0.5).unwrap();
        let out = simulate_seeded(&spec, n, &grid, seed, 0, SimOptions { record_events: true }).unwrap();
        let log = out.log.unwrap();
        let (mut s, mut i) = (log.initial.susceptible as f64, log.initial.infectious as f64);
        let nf = n as f64;
        let mut t_prev = 0.0;
        for ev in &log.events {
            let inc = lambda * (s / nf) * (i / nf) * (ev.time - t_prev);
            prop_assert!(inc >= 0.0 && inc <= lambda * (ev.time - t_prev) * (1.0 + 1e-12));
            t_prev = ev.time;
            match ev.transition {
                Transition::Infect => {
                    s -= 1.0;
                    i += 1.0;
                }
                _ => i -= 1.0,
            }
        }
        Ok(())
    })
}

pub fn sir_counts_replay_from_the_log(mode: Mode) -> Result<(), String> {
    run(mode, 16, (0.5..4.0f64, smooth_family(), 20u64..1500, any::<u64>()), |(lambda, f, n, seed)| {
        let f0 = equilibrium_dist(&f).unwrap();
        let spec = ModelSpec::sir(ContactRate::Constant(lambda), f, f0, 0.05).unwrap();
        let grid = TimeGrid::new(6.0, 0.03).unwrap();
        let out = simulate_seeded(&spec, n, &grid, seed, 0, SimOptions { record_events: true }).unwrap();
        let log = out.log.unwrap();
        let mut infected_at = HashMap::new();
        let mut recovered_at = HashMap::new();
        for ev in &log.events {
            match ev.transition {
                Transition::Infect => infected_at.insert(ev.agent, ev.time),
                _ => recovered_at.insert(ev.agent, ev.time),
            };
        }
        let initial = log.initial.infectious as u32;
        for k in 0..grid.len() {
            let t = grid.time(k);
            let alive = |a: &u32| recovered_at.get(a).is_none_or(|&r| r > t);
            let from_initial = (0..initial).filter(alive).count();
            let from_new = infected_at.iter().filter(|(a, &ti)| ti <= t && alive(a)).count();
            prop_assert_eq!((from_initial + from_new) as u64, out.path.i[k], "t = {}", t);
        }
        Ok(())
    })
}

pub fn driver_covariance_is_symmetric_and_psd(mode: Mode) -> Result<(), String> {
    let strategy = (
        (kind(), 0.5..3.0f64, smooth_family(), smooth_family()),
        (0.02..0.3f64, 0.0..0.3f64, proptest::collection::vec(1usize..=20, 4)),
    );
    run(mode, 24, strategy, |((kind, lambda, f, g), (i0, other, nodes))| {
        let spec = spec_of(kind, lambda, f, g, i0, other);
        let fluid = solve_fluid(&spec, &TimeGrid::new(2.0, 0.1).unwrap()).unwrap();
        let cov = DriverCovariance::new(&fluid).unwrap();
        let points: Vec<_> = drivers_of(kind)
            .into_iter()
            .flat_map(|d| nodes.iter().map(move |&k| (d, k as f64 * 0.1)))
            .collect();
        let m = cov.matrix(&points).unwrap();
        let scale = m.diagonal().max().max(1e-300);
        prop_assert!((&m - m.transpose()).abs().max() < 1e-14);
        for a in 0..points.len() {
            for b in 0..points.len() {
                prop_assert!(m[(a, b)].abs() <= (m[(a, a)] * m[(b, b)]).sqrt() + 1e-12);
            }
        }
        let min = SymmetricEigen::new(m).eigenvalues.min();
        prop_assert!(min > -1e-8 * scale, "{kind}: min eigenvalue {min}");
        let stages = new_stages(kind);
        for &k in &nodes {
            let t = k as f64 * 0.1;
            let v = |a: Driver, b: Driver| cov.cov(a, t, b, t).unwrap();
            let sum: f64 = stages.iter().flat_map(|&a| stages.iter().map(move |&b| v(a, b))).sum();
            prop_assert!((v(d("MA"), d("MA")) - sum).abs() < 1e-10);
        }
        Ok(())
    })
}

pub fn seir_with_instant_latency_is_sir(mode: Mode) -> Result<(), String> {
    run(mode, 12, (0.5..3.0f64, smooth_family(), 0.02..0.3f64), |(lambda, f, i0)| {
        let grid = TimeGrid::new(2.0, 0.05).unwrap();
        let c = ContactRate::Constant(lambda);
        let sir = ModelSpec::sir(c.clone(), f.clone(), f.clone(), i0).unwrap();
        let h = JointDurationDist::independent(DurationDist::deterministic(0.0).unwrap(), f.clone());
        let seir = ModelSpec::seir(c, h.clone(), h, f, 0.0, i0).unwrap();
        let fa = solve_fluid(&sir, &grid).unwrap();
        let fb = solve_fluid(&seir, &grid).unwrap();
        prop_assert!(sup_norm_diff(&fa.i, &fb.i) < 1e-10);
        let a = DriverCovariance::new(&fa).unwrap();
        let b = DriverCovariance::new(&fb).unwrap();
        for x in ["MA", "I1", "R1", "I0", "R0I"] {
            for y in ["MA", "I1", "R1", "I0", "R0I"] {
                for (k1, k2) in [(7, 7), (13, 38), (40, 22)] {
                    let ca = a.cov_nodes(d(x), k1, d(y), k2).unwrap();
                    let cb = b.cov_nodes(d(x), k1, d(y), k2).unwrap();
                    prop_assert!((ca - cb).abs() < 1e-10, "{x} {y}: {ca} vs {cb}");
                }
            }
        }
        Ok(())
    })
}

pub fn pathwise_driver_identities(mode: Mode) -> Result<(), String> {
    let strategy = (
        (kind(), 0.5..3.0f64, smooth_family(), smooth_family()),
        (0.02..0.3f64, 0.0..0.3f64, any::<u64>()),
    );
    run(mode, 24, strategy, |((kind, lambda, f, g), (i0, other, seed))| {
        let spec = spec_of(kind, lambda, f, g, i0, other);
        let fluid = solve_fluid(&spec, &TimeGrid::new(2.0, 0.05).unwrap()).unwrap();
        let cov = DriverCovariance::new(&fluid).unwrap();
        let mut rng = path_rng(seed, 0);
        let drivers = sample_drivers(&cov, &mut rng).unwrap();
        let ma = drivers.get(d("MA"));
        let stages: Vec<Vec<f64>> = new_stages(kind).into_iter().map(|x| drivers.get(x)).collect();
        for k in 0..ma.len() {
            let sum: f64 = stages.iter().map(|p| p[k]).sum();
            prop_assert!((ma[k] - sum).abs() < 1e-10 * (1.0 + ma[k].abs()));
        }
        let init = InitialDraws {
            exposed: 0.3,
            infectious: -0.2,
            immune: 0.1,
        };
        let p = solve_fclt_path(&cov, &drivers, init).unwrap();
        for k in 0..p.grid.len() {
            prop_assert!(p.total(k).abs() < 1e-9, "{kind}: {}", p.total(k));
        }
        Ok(())
    })
}

pub fn reconstructed_drivers_split_the_infection_martingale(mode: Mode) -> Result<(), String> {
    run(mode, 16, (0.5..3.0f64, 50u64..2000, any::<u64>()), |(lambda, n, seed)| {
        let spec = markov_sir(lambda, 0.1);
        let grid = TimeGrid::new(2.0, 0.5).unwrap();
        let out = simulate_seeded(&spec, n, &grid, seed, 0, SimOptions { record_events: true }).unwrap();
        let log = out.log.unwrap();
        let dr = sir_drivers_from_log(&log, &spec, &[0.5, 1.0, 2.0]).unwrap();
        for j in 0..3 {
            prop_assert!((dr.ma[j] - dr.i1[j] - dr.r1[j]).abs() < 1e-12);
            let infections = log
                .events
                .iter()
                .filter(|e| e.time <= dr.times[j] && e.transition == Transition::Infect)
                .count();
            prop_assert_eq!(infections as u64, out.path.a[grid.require_node(dr.times[j]).unwrap()]);
        }
        Ok(())
    })
}

pub fn picard_iteration_agrees_with_stepping(mode: Mode) -> Result<(), String> {
    let strategy = (-1.0..1.0f64, -1.0..1.0f64, proptest::collection::vec(-1.0..1.0f64, 4), smooth_family());
    run(mode, 24, strategy, |(a, c, amp, kernel_law)| {
        let grid = TimeGrid::new(2.0, 0.02).unwrap();
        let len = grid.len();
        let t = grid.times();
        let x: Vec<f64> = t.iter().map(|s| amp[0] * s.sin()).collect();
        let y: Vec<f64> = t.iter().map(|s| amp[1] * (1.0 - (-s).exp())).collect();
        let z: Vec<f64> = t.iter().map(|s| amp[2] + 0.5 * s.cos()).collect();
        let w: Vec<f64> = t.iter().map(|s| amp[3] * (1.0 + s)).collect();
        let kernel = tabulate_cdf(&kernel_law, grid.dt(), len).complement();
        let (phi, psi) = solve_linear_volterra_2d(a, &x, &y, &z, &w, c, &kernel, &grid).unwrap();

        let one = NodePath::constant(1.0, len);
        let (mut p, mut q) = (vec![0.0; len], vec![0.0; len]);
        for _ in 0..50 {
            let g = NodePath::continuous((0..len).map(|k| c * (p[k] * z[k] + w[k] * q[k])).collect());
            let ip = convolve(&one, &g, grid.dt());
            let iq = convolve(&kernel, &g, grid.dt());
            p = (0..len).map(|k| a + x[k] + ip[k]).collect();
            q = (0..len).map(|k| y[k] + iq[k]).collect();
        }
        for k in 0..len {
            prop_assert!((p[k] - phi[k]).abs() < 1e-8, "phi at {k}: {} vs {}", p[k], phi[k]);
            prop_assert!((q[k] - psi[k]).abs() < 1e-8, "psi at {k}: {} vs {}", q[k], psi[k]);
        }
        Ok(())
    })
}

pub fn endemic_level_is_monotone(mode: Mode) -> Result<(), String> {
    run(mode, 64, (0.1..2.0f64, 1.01..4.0f64, 0.1..5.0f64, 0.01..1.0f64), |(gamma, ratio, mu, step)| {
        let lambda = gamma * ratio;
        let p = sirs_equilibrium(lambda, gamma, mu).unwrap();
        prop_assert!((p.s + p.i + p.r.unwrap() - 1.0).abs() < 1e-14);
        prop_assert!(sirs_equilibrium(lambda + step, gamma, mu).unwrap().i > p.i);
        prop_assert!(sirs_equilibrium(lambda, gamma, mu + step).unwrap().i > p.i);
        let lower = (gamma + step).min(0.5 * (gamma + lambda));
        prop_assert!(sirs_equilibrium(lambda, lower, mu).unwrap().i < p.i);
        Ok(())
    })
}

pub fn empirical_covariance_is_psd(mode: Mode) -> Result<(), String> {
    let samples = proptest::collection::vec(proptest::collection::vec(-5.0..5.0f64, 6), 2..40);
    run(mode, 64, samples, |samples| {
        let est = CovEstimate::from_samples(&samples).unwrap();
        prop_assert!((&est.cov - est.cov.transpose()).abs().max() == 0.0);
        let min = SymmetricEigen::new(est.cov.clone()).eigenvalues.min();
        prop_assert!(min > -1e-8);
        Ok(())
    })
}

pub fn scalings_compose_bitwise(mode: Mode) -> Result<(), String> {
    run(mode, 16, (0.5..3.0f64, 10u64..5000, any::<u64>()), |(lambda, n, seed)| {
        let spec = markov_sir(lambda, 0.1);
        let grid = TimeGrid::new(2.0, 0.1).unwrap();
        let fluid = solve_fluid(&spec, &grid).unwrap();
        let out = simulate_seeded(&spec, n, &grid, seed, 0, SimOptions::default()).unwrap();
        let fl = diffusion_scale(&out.path, &fluid).unwrap();
        let sc = fluid_scale(&out.path);
        let root = (n as f64).sqrt();
        for k in 0..grid.len() {
            prop_assert_eq!(fl.i[k].to_bits(), (root * (sc.i[k] - fluid.i[k])).to_bits());
            let direct = root * (out.path.s[k] as f64 / n as f64 - fluid.s[k]);
            prop_assert_eq!(fl.s[k].to_bits(), direct.to_bits());
            prop_assert!(fl.total(k).abs() < 1e-9);
        }
        Ok(())
    })
}

type Check = fn(Mode) -> Result<(), String>;

/// Every invariant, by name.
pub const ALL: &[(&str, Check)] = &[
    ("cdf_is_a_distribution_function", cdf_is_a_distribution_function),
    ("exponential_is_its_own_stationary_excess", exponential_is_its_own_stationary_excess),
    ("first_stage_kernels_split_the_marginal", first_stage_kernels_split_the_marginal),
    ("convolution_kernel_matches_fine_riemann_sum", convolution_kernel_matches_fine_riemann_sum),
    ("stationary_start_identity", stationary_start_identity),
    ("fluid_conserves_mass", fluid_conserves_mass),
    ("step_initialisations_agree", step_initialisations_agree),
    ("refinement_is_second_order", refinement_is_second_order),
    ("simulation_conserves_agents_at_every_event", simulation_conserves_agents_at_every_event),
    ("integrated_intensity_is_lipschitz", integrated_intensity_is_lipschitz),
    ("sir_counts_replay_from_the_log", sir_counts_replay_from_the_log),
    ("driver_covariance_is_symmetric_and_psd", driver_covariance_is_symmetric_and_psd),
    ("seir_with_instant_latency_is_sir", seir_with_instant_latency_is_sir),
    ("pathwise_driver_identities", pathwise_driver_identities),
    ("reconstructed_drivers_split_the_infection_martingale", reconstructed_drivers_split_the_infection_martingale),
    ("picard_iteration_agrees_with_stepping", picard_iteration_agrees_with_stepping),
    ("endemic_level_is_monotone", endemic_level_is_monotone),
    ("empirical_covariance_is_psd", empirical_covariance_is_psd),
    ("scalings_compose_bitwise", scalings_compose_bitwise),
];
