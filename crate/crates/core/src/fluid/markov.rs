use crate::distributions::NodePath;
use crate::error::{invalid, Result};
use crate::grid::TimeGrid;
use crate::model::{InitialFractions, ModelKind, ModelSpec};

use super::{FluidSolution, SolverDiagnostics};

/// State `(S, E, I, R, A, L)`.
type State = [f64; 6];

fn field(kind: ModelKind, lambda: f64, gamma: f64, mu: f64, x: &State) -> State {
    let [s, e, i, r, _, _] = *x;
    let inf = lambda * s * i;
    match kind {
        ModelKind::Sir => [-inf, 0.0, inf - mu * i, mu * i, inf, 0.0],
        ModelKind::Sis => [-inf + mu * i, 0.0, inf - mu * i, 0.0, inf, 0.0],
        ModelKind::Seir => [-inf, inf - gamma * e, gamma * e - mu * i, mu * i, inf, gamma * e],
        // infectious periods at rate gamma, immunity lost at rate mu
        ModelKind::Sirs => [-inf + mu * r, 0.0, inf - gamma * i, gamma * i - mu * r, inf, 0.0],
    }
}

fn axpy(x: &State, h: f64, d: &State) -> State {
    let mut out = *x;
    for (o, v) in out.iter_mut().zip(d) {
        *o += h * v;
    }
    out
}

/// Classical RK4 for the Markovian (exponential-period) fluid equations.
///
/// For SIR and SIS only `mu` is used; for SEIR `gamma` is the latent rate and `mu` the
/// recovery rate; for SIRS `gamma` is the recovery rate and `mu` the rate of losing immunity.
pub fn solve_markovian_ode(
    kind: ModelKind,
    lambda: f64,
    gamma: f64,
    mu: f64,
    init: InitialFractions,
    grid: &TimeGrid,
) -> Result<FluidSolution> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be finite and nonnegative, got {lambda}")));
    }
    if kind.is_staged() && !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid("mu", format!("must be positive, got {mu}")));
    }
    let spec = ModelSpec::markovian(kind, lambda, if kind.is_staged() { gamma } else { 1.0 }, mu, init)?;
    let h = grid.dt();
    let len = grid.len();
    let mut x: State = [
        1.0 - init.exposed - init.infectious - init.immune,
        init.exposed,
        init.infectious,
        init.immune,
        0.0,
        0.0,
    ];
    let mut path = Vec::with_capacity(len);
    path.push(x);
    for _ in 1..len {
        let f = |y: &State| field(kind, lambda, gamma, mu, y);
        let k1 = f(&x);
        let k2 = f(&axpy(&x, 0.5 * h, &k1));
        let k3 = f(&axpy(&x, 0.5 * h, &k2));
        let k4 = f(&axpy(&x, h, &k3));
        for c in 0..6 {
            x[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        path.push(x);
    }
    let col = |c: usize| path.iter().map(|p| p[c]).collect::<Vec<_>>();
    let flux = NodePath::continuous(path.iter().map(|p| lambda * p[0] * p[2]).collect());
    Ok(FluidSolution {
        spec,
        grid: *grid,
        s: col(0),
        e: (kind == ModelKind::Seir).then(|| col(1)),
        i: col(2),
        r: (kind != ModelKind::Sis).then(|| col(3)),
        a: col(4),
        l: (kind == ModelKind::Seir).then(|| col(5)),
        flux,
        diagnostics: SolverDiagnostics {
            method: "rk4".into(),
            ..Default::default()
        },
    })
}
