use epilimit::model::ModelKind;

const COMMON: &str = "\
Cumulative infections (all models):
  A(t) = int_0^t lambda(s) S(s) I(s) ds
";

const SIR: &str = "\
SIR limit equations
  S(t) = S(0) - A(t)
  I(t) = I(0) F0c(t) + int_0^t Fc(t - s) dA(s)
  R(t) = I(0) F0(t)  + int_0^t F(t - s) dA(s)

Required laws
  F   infectious period of newly infected agents
  F0  residual infectious period of agents infectious at time 0
      (Fc = 1 - F, F0c = 1 - F0)

Initial conditions
  model.init.infectious = I(0); S(0) = 1 - I(0), R(0) = 0.
  By default F0 is the stationary excess Fe(t) = int_0^t Fc(u) du / E[period];
  initial_laws = \"same\" uses F0 = F. model.residual sets F0 explicitly.
";

const SIS: &str = "\
SIS limit equations
  I(t) = I(0) F0c(t) + int_0^t Fc(t - s) dA(s)
  S(t) = 1 - I(t)

Constraint
  S + I = 1 at all times; there is no recovered compartment.

Required laws
  F   infectious period of newly infected agents
  F0  residual infectious period of agents infectious at time 0

Initial conditions
  model.init.infectious = I(0).
  By default F0 = Fe, the stationary excess, which starts the system at
  equilibrium when I(0) = 1 - mu / lambda, mu = 1 / E[period];
  initial_laws = \"same\" uses F0 = F.
";

const SEIR: &str = "\
SEIR limit equations
  S(t) = S(0) - A(t)
  E(t) = E(0) G0c(t) + int_0^t Gc(t - s) dA(s)
  I(t) = I(0) F0c(t) + E(0) Psi0(t) + int_0^t Psi(t - s) dA(s)
  R(t) = I(0) F0(t)  + E(0) Phi0(t) + int_0^t Phi(t - s) dA(s)

Kernels of the (latent, infectious) pair (xi, eta) with joint law H
  Phi(t)  = P(xi + eta <= t)            exposed and already recovered
  Psi(t)  = P(xi <= t < xi + eta)       exposed and currently infectious
  G(t)    = P(xi <= t) = Phi(t) + Psi(t)
  Phi0, Psi0 and G0 are the same kernels for the law H0 of
  (residual latent period, infectious period) of agents exposed at time 0.

Required laws
  H   = (latent, infectious) pair; independent, or bucketed via model.conditional
  H0  = (residual latent, infectious) pair for the initially exposed
  F0  residual infectious period of agents infectious at time 0

Initial conditions
  model.init.exposed = E(0), model.init.infectious = I(0); R(0) = 0.
  By default the residual laws are stationary excesses: H0 pairs the excess of
  the latent law with the infectious law, and F0 is the excess of the infectious
  law. initial_laws = \"same\" uses H0 = H and the infectious law for F0.
";

const SIRS: &str = "\
SIRS limit equations
  I(t) = I(0) G0c(t) + int_0^t Gc(t - s) dA(s)
  R(t) = R(0) F0c(t) + I(0) Psi0(t) + int_0^t Psi(t - s) dA(s)
  S(t) = 1 - I(t) - R(t)

Kernels of the (infectious, immune) pair (eta, theta) with joint law H
  Phi(t)  = P(eta + theta <= t)         infected and susceptible again
  Psi(t)  = P(eta <= t < eta + theta)   infected and currently immune
  G(t)    = P(eta <= t)
  Phi0, Psi0 and G0 are the same kernels for the law H0 of
  (residual infectious period, immune period) of agents infectious at time 0.

Required laws
  H   = (infectious, immune) pair; independent, or bucketed via model.conditional
  H0  = (residual infectious, immune) pair for the initially infectious
  F0  residual immune period of agents immune at time 0

Initial conditions
  model.init.infectious = I(0), model.init.immune = R(0); S(0) = 1 - I(0) - R(0).
  By default the residual laws are stationary excesses: H0 pairs the excess of
  the infectious law with the immune law, and F0 is the excess of the immune law.
  initial_laws = \"same\" uses H0 = H and the immune law for F0.
";

pub fn describe(kind: ModelKind) -> String {
    let body = match kind {
        ModelKind::Sir => SIR,
        ModelKind::Sis => SIS,
        ModelKind::Seir => SEIR,
        ModelKind::Sirs => SIRS,
    };
    format!("{body}\n{COMMON}")
}
