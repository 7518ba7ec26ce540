use epilimit::distributions::{DurationDist, JointDurationDist};
use epilimit::fluid::{
    solve_deterministic_delay, solve_fluid, solve_fluid_with, solve_markovian_ode, Compartment,
    StepInit,
};
use epilimit::model::{InitialFractions, ModelKind, ModelSpec};
use epilimit::{ContactRate, TimeGrid};

fn fractions(e: f64, i: f64, r: f64) -> InitialFractions {
    InitialFractions {
        exposed: e,
        infectious: i,
        immune: r,
    }
}

#[test]
fn markovian_sir_matches_ode() {
    let grid = TimeGrid::new(20.0, 1e-3).unwrap();
    let init = fractions(0.0, 0.05, 0.0);
    let spec = ModelSpec::markovian(ModelKind::Sir, 1.5, 1.0, 1.0, init).unwrap();
    let v = solve_fluid(&spec, &grid).unwrap();
    let o = solve_markovian_ode(ModelKind::Sir, 1.5, 1.0, 1.0, init, &grid).unwrap();
    let d = v.max_sup_distance(&o).unwrap();
    assert!(d < 1e-4, "{d}");
    assert!(v.sup_distance(&o, Compartment::A).unwrap() < 1e-4);
}

#[test]
fn markovian_seir_matches_ode() {
    let grid = TimeGrid::new(20.0, 1e-3).unwrap();
    let init = fractions(0.05, 0.05, 0.0);
    let spec = ModelSpec::markovian(ModelKind::Seir, 1.5, 1.0, 1.0, init).unwrap();
    let v = solve_fluid(&spec, &grid).unwrap();
    let o = solve_markovian_ode(ModelKind::Seir, 1.5, 1.0, 1.0, init, &grid).unwrap();
    let d = v.max_sup_distance(&o).unwrap();
    assert!(d < 1e-4, "{d}");
    assert!(v.sup_distance(&o, Compartment::L).unwrap() < 1e-4);
    let (e, a, l) = (v.e.as_ref().unwrap(), &v.a, v.l.as_ref().unwrap());
    for k in 0..grid.len() {
        assert!((e[k] - (0.05 + a[k] - l[k])).abs() < 1e-8);
        assert!((v.total(k) - 1.0).abs() < 1e-8);
    }
}

#[test]
fn markovian_sirs_and_sis_match_ode() {
    let grid = TimeGrid::new(10.0, 1e-3).unwrap();
    for (kind, init) in [
        (ModelKind::Sirs, fractions(0.0, 0.1, 0.05)),
        (ModelKind::Sis, fractions(0.0, 0.1, 0.0)),
    ] {
        let spec = ModelSpec::markovian(kind, 3.0, 1.0, 2.0, init).unwrap();
        let v = solve_fluid(&spec, &grid).unwrap();
        let o = solve_markovian_ode(kind, 3.0, 1.0, 2.0, init, &grid).unwrap();
        let d = v.max_sup_distance(&o).unwrap();
        assert!(d < 1e-4, "{kind}: {d}");
    }
}

#[test]
fn delay_solver_matches_general_kernels() {
    let grid = TimeGrid::new(10.0, 0.01).unwrap();
    let init = fractions(0.0, 0.1, 0.1);
    let d = solve_deterministic_delay(ModelKind::Sirs, 2.0, 1.0, 2.0, init, &grid).unwrap();
    let v = solve_fluid(&d.spec, &grid).unwrap();
    let dist = v.max_sup_distance(&d).unwrap();
    assert!(dist < 1e-6, "{dist}");
}

#[test]
fn step_initialisations_agree() {
    let grid = TimeGrid::new(10.0, 0.01).unwrap();
    let f = DurationDist::lognormal_with_mean(1.0, 0.5).unwrap();
    let spec = ModelSpec::sir(ContactRate::Constant(2.0), f.clone(), f, 0.05).unwrap();
    let a = solve_fluid_with(&spec, &grid, StepInit::Previous).unwrap();
    let b = solve_fluid_with(&spec, &grid, StepInit::Extrapolate).unwrap();
    assert!(a.max_sup_distance(&b).unwrap() < 1e-10);
}

#[test]
fn refinement_is_second_order() {
    let f = DurationDist::gamma(2.0, 2.0).unwrap();
    let spec = ModelSpec::sir(ContactRate::Constant(2.0), f.clone(), f, 0.05).unwrap();
    let g1 = TimeGrid::new(8.0, 0.04).unwrap();
    let s1 = solve_fluid(&spec, &g1).unwrap();
    let s2 = solve_fluid(&spec, &g1.refined(2)).unwrap();
    let s4 = solve_fluid(&spec, &g1.refined(4)).unwrap();
    let pick = |v: &[f64], f: usize| v.iter().step_by(f).copied().collect::<Vec<_>>();
    let d1 = epilimit::fluid::sup_norm_diff(&s1.i, &pick(&s2.i, 2));
    let d2 = epilimit::fluid::sup_norm_diff(&pick(&s2.i, 2), &pick(&s4.i, 4));
    let ratio = d1 / d2;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn seir_with_dependent_periods_conserves_mass() {
    let grid = TimeGrid::new(10.0, 0.01).unwrap();
    let h = JointDurationDist::bucketed(
        DurationDist::uniform(0.5, 1.5).unwrap(),
        vec![
            (0.75, DurationDist::gamma(2.0, 2.0).unwrap()),
            (1.25, DurationDist::exponential(2.0).unwrap()),
        ],
    )
    .unwrap();
    let h0 = h.clone();
    let f0 = DurationDist::exponential(1.0).unwrap();
    let spec = ModelSpec::seir(ContactRate::Constant(2.5), h, h0, f0, 0.02, 0.03).unwrap();
    let sol = solve_fluid(&spec, &grid).unwrap();
    for k in 0..grid.len() {
        assert!((sol.total(k) - 1.0).abs() < 1e-8, "{}", sol.total(k));
        assert!(sol.s[k] >= -1e-12 && sol.i[k] >= -1e-12);
        if k > 0 {
            assert!(sol.s[k] <= sol.s[k - 1] + 1e-14);
            let da = sol.a[k] - sol.a[k - 1];
            assert!(da >= 0.0 && da <= 2.5 * grid.dt() + 1e-12);
        }
    }
}

#[test]
fn sis_with_equilibrium_start_reaches_endemic_level() {
    let f = DurationDist::lognormal_with_mean(1.0, 0.5).unwrap();
    let f0 = epilimit::distributions::equilibrium_dist(&f).unwrap();
    let spec = ModelSpec::sis(ContactRate::Constant(2.0), f, f0, 0.1).unwrap();
    let grid = TimeGrid::new(100.0, 0.01).unwrap();
    let sol = solve_fluid(&spec, &grid).unwrap();
    assert!((sol.i[grid.steps()] - 0.5).abs() < 1e-3);
}
