use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::distributions::{equilibrium_dist, DurationDist, JointDurationDist};
use crate::error::{invalid, Error, Result};
use crate::rate::ContactRate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Sis,
    Sir,
    Sirs,
    Seir,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Sis, ModelKind::Sir, ModelKind::Sirs, ModelKind::Seir];

    /// Whether the model tracks a pair of durations per infection.
    pub fn is_staged(self) -> bool {
        matches!(self, ModelKind::Sirs | ModelKind::Seir)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Sis => "SIS",
            ModelKind::Sir => "SIR",
            ModelKind::Sirs => "SIRS",
            ModelKind::Seir => "SEIR",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SIS" => Ok(ModelKind::Sis),
            "SIR" => Ok(ModelKind::Sir),
            "SIRS" => Ok(ModelKind::Sirs),
            "SEIR" => Ok(ModelKind::Seir),
            _ => Err(invalid("kind", format!("unknown model kind `{s}`"))),
        }
    }
}

/// Compartment selector shared by fluid, simulated and fluctuation paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Compartment {
    S,
    E,
    I,
    R,
    A,
    L,
}

impl Compartment {
    pub const ALL: [Compartment; 6] = [
        Compartment::S,
        Compartment::E,
        Compartment::I,
        Compartment::R,
        Compartment::A,
        Compartment::L,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::E => "E",
            Compartment::I => "I",
            Compartment::R => "R",
            Compartment::A => "A",
            Compartment::L => "L",
        }
    }
}

impl FromStr for Compartment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Compartment::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid("compartment", format!("unknown compartment `{s}`")))
    }
}

/// Duration laws of a model.
///
/// For SEIR the staged pair is (latent, infectious) and `f0` is the residual infectious time of
/// initially infectious agents. For SIRS the pair is (infectious, immune) and `f0` is the
/// residual immune time of initially immune agents. In both cases `h0` is the law of
/// (residual first period, full second period) for agents in the first stage at time 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Periods {
    Single {
        f: DurationDist,
        f0: DurationDist,
    },
    Staged {
        h: JointDurationDist,
        h0: JointDurationDist,
        f0: DurationDist,
    },
}

/// Initial fractions. SIR/SIS use `infectious`; SEIR uses `exposed` and `infectious`; SIRS uses
/// `infectious` and `immune`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialFractions {
    pub exposed: f64,
    pub infectious: f64,
    pub immune: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub lambda: ContactRate,
    pub periods: Periods,
    pub init: InitialFractions,
}

impl ModelSpec {
    pub fn sir(lambda: ContactRate, f: DurationDist, f0: DurationDist, i0: f64) -> Result<Self> {
        Self::single(ModelKind::Sir, lambda, f, f0, i0)
    }

    pub fn sis(lambda: ContactRate, f: DurationDist, f0: DurationDist, i0: f64) -> Result<Self> {
        Self::single(ModelKind::Sis, lambda, f, f0, i0)
    }

    fn single(
        kind: ModelKind,
        lambda: ContactRate,
        f: DurationDist,
        f0: DurationDist,
        i0: f64,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            lambda,
            periods: Periods::Single { f, f0 },
            init: InitialFractions {
                infectious: i0,
                ..Default::default()
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// SEIR with latent/infectious law `h`, initially-exposed law `h0` and residual infectious
    /// law `f0` for the initially infectious.
    pub fn seir(
        lambda: ContactRate,
        h: JointDurationDist,
        h0: JointDurationDist,
        f0: DurationDist,
        e0: f64,
        i0: f64,
    ) -> Result<Self> {
        let spec = Self {
            kind: ModelKind::Seir,
            lambda,
            periods: Periods::Staged { h, h0, f0 },
            init: InitialFractions {
                exposed: e0,
                infectious: i0,
                immune: 0.0,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// SIRS with infectious/immune law `h`, initially-infectious law `h0` and residual immune
    /// law `f0` for the initially immune.
    pub fn sirs(
        lambda: ContactRate,
        h: JointDurationDist,
        h0: JointDurationDist,
        f0: DurationDist,
        i0: f64,
        r0: f64,
    ) -> Result<Self> {
        let spec = Self {
            kind: ModelKind::Sirs,
            lambda,
            periods: Periods::Staged { h, h0, f0 },
            init: InitialFractions {
                exposed: 0.0,
                infectious: i0,
                immune: r0,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Markovian model with exponential periods (`gamma` for the first stage of SEIR/SIRS) and
    /// exponential initial residuals.
    pub fn markovian(
        kind: ModelKind,
        lambda: f64,
        gamma: f64,
        mu: f64,
        init: InitialFractions,
    ) -> Result<Self> {
        let lambda = ContactRate::Constant(lambda);
        match kind {
            ModelKind::Sir | ModelKind::Sis => {
                let f = DurationDist::exponential(mu)?;
                Self::single(kind, lambda, f.clone(), f, init.infectious)
            }
            ModelKind::Seir => {
                let h = JointDurationDist::independent(
                    DurationDist::exponential(gamma)?,
                    DurationDist::exponential(mu)?,
                );
                let f0 = DurationDist::exponential(mu)?;
                Self::seir(lambda, h.clone(), h, f0, init.exposed, init.infectious)
            }
            ModelKind::Sirs => {
                let h = JointDurationDist::independent(
                    DurationDist::exponential(gamma)?,
                    DurationDist::exponential(mu)?,
                );
                let f0 = DurationDist::exponential(mu)?;
                Self::sirs(lambda, h.clone(), h, f0, init.infectious, init.immune)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lambda.validate()?;
        let InitialFractions {
            exposed,
            infectious,
            immune,
        } = self.init;
        for (name, v) in [("exposed", exposed), ("infectious", infectious), ("immune", immune)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid("init", format!("{name} fraction {v} is not in [0, 1]")));
            }
        }
        let unused = match self.kind {
            ModelKind::Sir | ModelKind::Sis => exposed + immune,
            ModelKind::Seir => immune,
            ModelKind::Sirs => exposed,
        };
        if unused != 0.0 {
            return Err(invalid(
                "init",
                format!("{} has no compartment for the nonzero initial fraction given", self.kind),
            ));
        }
        if exposed + infectious + immune > 1.0 {
            return Err(invalid("init", "initial non-susceptible fractions exceed 1"));
        }
        match (&self.periods, self.kind.is_staged()) {
            (Periods::Single { f, f0 }, false) => {
                f.validate()?;
                f0.validate()
            }
            (Periods::Staged { h, h0, f0 }, true) => {
                h.validate()?;
                h0.validate()?;
                f0.validate()
            }
            _ => Err(Error::InvalidModel(format!(
                "period laws do not match the {} model",
                self.kind
            ))),
        }
    }

    /// The single-period laws `(F, F0)` of SIR/SIS.
    pub fn single_laws(&self) -> Result<(&DurationDist, &DurationDist)> {
        match &self.periods {
            Periods::Single { f, f0 } => Ok((f, f0)),
            _ => Err(Error::InvalidModel(format!("{} has staged periods", self.kind))),
        }
    }

    /// The staged laws `(H, H0, F0)` of SEIR/SIRS.
    pub fn staged_laws(&self) -> Result<(&JointDurationDist, &JointDurationDist, &DurationDist)> {
        match &self.periods {
            Periods::Staged { h, h0, f0 } => Ok((h, h0, f0)),
            _ => Err(Error::InvalidModel(format!("{} has a single period law", self.kind))),
        }
    }

    /// Default initial laws: stationary-excess residuals, and for staged models the initial
    /// pair (G_e residual, F full period).
    pub fn equilibrium_initial_laws(periods: &Periods) -> Result<Periods> {
        Ok(match periods {
            Periods::Single { f, .. } => Periods::Single {
                f: f.clone(),
                f0: equilibrium_dist(f)?,
            },
            Periods::Staged { h, .. } => {
                let second = match &h.conditional {
                    crate::distributions::Conditional::Independent(f) => f.clone(),
                    crate::distributions::Conditional::Bucketed(_) => {
                        return Err(invalid(
                            "h0",
                            "a dependent pair has no default initial law; give h0 and f0 explicitly",
                        ))
                    }
                };
                Periods::Staged {
                    h: h.clone(),
                    h0: JointDurationDist::independent(
                        equilibrium_dist(&h.marginal)?,
                        second.clone(),
                    ),
                    f0: equilibrium_dist(&second)?,
                }
            }
        })
    }

    /// Largest contact rate on `[0, horizon]`.
    pub fn lambda_max(&self, horizon: f64) -> f64 {
        self.lambda.max_on(0.0, horizon)
    }
}
