use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Compartment, ModelKind};

/// A Gaussian driver of the fluctuation equations.
///
/// `Infections` is the centred infection martingale. `New { to }` counts fluctuations of
/// agents infected after time 0 that are in compartment `to`; `Initial { from, to }` counts
/// fluctuations of agents that were in `from` at time 0 and are in `to` now.
///
/// Text form: `MA`, `I1` (new, in I), `I0` (initially in I, still in I), `R0I` (initially in
/// I, now in R).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Driver {
    Infections,
    New { to: Compartment },
    Initial { from: Compartment, to: Compartment },
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Driver::Infections => f.write_str("MA"),
            Driver::New { to } => write!(f, "{}1", to.name()),
            Driver::Initial { from, to } if from == to => write!(f, "{}0", to.name()),
            Driver::Initial { from, to } => write!(f, "{}0{}", to.name(), from.name()),
        }
    }
}

impl FromStr for Driver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid("driver", format!("cannot parse driver `{s}`"));
        if s.eq_ignore_ascii_case("MA") {
            return Ok(Driver::Infections);
        }
        let mut chars = s.chars();
        let to: Compartment = chars.next().ok_or_else(bad)?.to_string().parse()?;
        let rest: String = chars.collect();
        match rest.as_str() {
            "1" => Ok(Driver::New { to }),
            "0" => Ok(Driver::Initial { from: to, to }),
            r if r.len() == 2 && r.starts_with('0') => Ok(Driver::Initial {
                from: r[1..].parse()?,
                to,
            }),
            _ => Err(bad()),
        }
    }
}

/// Which population a driver counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Group {
    New,
    /// Agents in the first infected stage at time 0 (staged models only).
    FirstStage,
    /// Agents in the last infected stage at time 0.
    SecondStage,
}

/// Set of duration pairs `(ξ, ζ = ξ + η)` counted at elapsed time `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Region {
    Whole,
    /// `ξ > u`
    Stage1,
    /// `ξ <= u < ζ`
    Stage2,
    /// `ζ <= u`
    Stage3,
    /// `ξ <= u`
    Reached,
}

/// Half-open rectangle `(x0, x1] × (y0, y1]` in lag units, `None` meaning `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Rect {
    pub x0: i64,
    pub x1: Option<i64>,
    pub y0: i64,
    pub y1: Option<i64>,
}

fn min_opt(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

impl Rect {
    pub fn intersect(&self, o: &Rect) -> Rect {
        Rect {
            x0: self.x0.max(o.x0),
            x1: min_opt(self.x1, o.x1),
            y0: self.y0.max(o.y0),
            y1: min_opt(self.y1, o.y1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_some_and(|x1| x1 <= self.x0) || self.y1.is_some_and(|y1| y1 <= self.y0)
    }
}

impl Region {
    /// The region at elapsed lag `u` (grid steps) as a rectangle in `(ξ, ζ)`.
    pub fn rect(self, u: i64) -> Rect {
        let all = Rect {
            x0: -1,
            x1: None,
            y0: -1,
            y1: None,
        };
        match self {
            Region::Whole => all,
            Region::Stage1 => Rect { x0: u, ..all },
            Region::Stage2 => Rect {
                x1: Some(u),
                y0: u,
                ..all
            },
            Region::Stage3 => Rect { y1: Some(u), ..all },
            Region::Reached => Rect { x1: Some(u), ..all },
        }
    }
}

/// Compartments of the three stages an infected agent passes through. Single-period models
/// have no first stage.
pub(crate) fn stages(kind: ModelKind) -> [Option<Compartment>; 3] {
    use Compartment::*;
    match kind {
        ModelKind::Sir => [None, Some(I), Some(R)],
        ModelKind::Sis => [None, Some(I), Some(S)],
        ModelKind::Seir => [Some(E), Some(I), Some(R)],
        ModelKind::Sirs => [Some(I), Some(R), Some(S)],
    }
}

const STAGE_REGIONS: [Region; 3] = [Region::Stage1, Region::Stage2, Region::Stage3];

/// Drivers defined for a model kind.
pub fn drivers_of(kind: ModelKind) -> Vec<Driver> {
    let st = stages(kind);
    let mut out = vec![Driver::Infections];
    for c in st.iter().flatten() {
        out.push(Driver::New { to: *c });
    }
    if kind == ModelKind::Seir {
        out.push(Driver::New { to: Compartment::L });
    }
    if let Some(first) = st[0] {
        for c in st.iter().flatten() {
            out.push(Driver::Initial { from: first, to: *c });
        }
    }
    let second = st[1].expect("every model has an infected stage");
    for c in st[1..].iter().flatten() {
        out.push(Driver::Initial { from: second, to: *c });
    }
    out
}

pub(crate) fn resolve(kind: ModelKind, d: Driver) -> Option<(Group, Region)> {
    let st = stages(kind);
    let stage_of = |c: Compartment| st.iter().position(|s| *s == Some(c));
    match d {
        Driver::Infections => Some((Group::New, Region::Whole)),
        Driver::New { to: Compartment::L } if kind == ModelKind::Seir => {
            Some((Group::New, Region::Reached))
        }
        Driver::New { to } => stage_of(to).map(|s| (Group::New, STAGE_REGIONS[s])),
        Driver::Initial { from, to } => {
            let group = match stage_of(from)? {
                0 => Group::FirstStage,
                1 => Group::SecondStage,
                _ => return None,
            };
            let s = stage_of(to)?;
            if group == Group::SecondStage && s == 0 {
                return None;
            }
            Some((group, STAGE_REGIONS[s]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for kind in ModelKind::ALL {
            for d in drivers_of(kind) {
                let s = d.to_string();
                assert_eq!(s.parse::<Driver>().unwrap(), d, "{s}");
                assert!(resolve(kind, d).is_some());
            }
        }
        assert_eq!(
            "R0E".parse::<Driver>().unwrap(),
            Driver::Initial {
                from: Compartment::E,
                to: Compartment::R
            }
        );
        assert!("Q1".parse::<Driver>().is_err());
        assert!("I2".parse::<Driver>().is_err());
    }

    #[test]
    fn sir_driver_set() {
        let names: Vec<String> = drivers_of(ModelKind::Sir).iter().map(|d| d.to_string()).collect();
        assert_eq!(names, ["MA", "I1", "R1", "I0", "R0I"]);
        assert!(resolve(ModelKind::Sir, "E1".parse().unwrap()).is_none());
        assert!(resolve(ModelKind::Sir, "I0R".parse().unwrap()).is_none());
    }
}
