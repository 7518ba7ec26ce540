use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::TimeGrid;
use crate::model::{ModelKind, ModelSpec, Periods};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    Infect,
    BecomeInfectious,
    Recover,
    BecomeSusceptible,
}

impl Transition {
    pub fn name(self) -> &'static str {
        match self {
            Transition::Infect => "Infect",
            Transition::BecomeInfectious => "BecomeInfectious",
            Transition::Recover => "Recover",
            Transition::BecomeSusceptible => "BecomeSusceptible",
        }
    }

    /// Order among scheduled events at equal times.
    fn class(self) -> u8 {
        match self {
            Transition::Recover => 0,
            Transition::BecomeSusceptible => 1,
            Transition::BecomeInfectious => 2,
            Transition::Infect => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub agent: u32,
    pub transition: Transition,
}

/// Integer initial state. Agent ids are assigned in blocks: exposed first, then infectious,
/// then immune, then susceptible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InitialCounts {
    pub susceptible: u64,
    pub exposed: u64,
    pub infectious: u64,
    pub immune: u64,
    /// Whether some `n × fraction` was not an integer and had to be rounded.
    pub rounded: bool,
}

impl InitialCounts {
    /// Round `n × fraction` to the nearest integer for each initial compartment.
    pub fn from_spec(spec: &ModelSpec, n: u64) -> Self {
        let nf = n as f64;
        let f = spec.init;
        let mut c = [f.exposed, f.infectious, f.immune].map(|x| (nf * x).round() as u64);
        let rounded = [f.exposed, f.infectious, f.immune]
            .iter()
            .any(|x| (nf * x).fract() != 0.0);
        // rounding up all three can overshoot n by at most one agent per compartment
        while c.iter().sum::<u64>() > n {
            let idx = (0..3).max_by_key(|&i| c[i]).expect("nonempty");
            c[idx] -= 1;
        }
        Self {
            susceptible: n - c.iter().sum::<u64>(),
            exposed: c[0],
            infectious: c[1],
            immune: c[2],
            rounded,
        }
    }

    pub fn total(&self) -> u64 {
        self.susceptible + self.exposed + self.infectious + self.immune
    }
}

/// Time-ordered record of every transition of one run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EventLog {
    pub kind: Option<ModelKind>,
    pub initial: InitialCounts,
    pub events: Vec<Event>,
}

impl EventLog {
    /// Replay the log, returning the first event after which the compartments no longer
    /// balance or a count goes negative.
    pub fn check_conservation(&self) -> std::result::Result<(), usize> {
        let init = self.initial;
        let n = init.total() as i64;
        let (mut s, mut e, mut i, mut r) = (
            init.susceptible as i64,
            init.exposed as i64,
            init.infectious as i64,
            init.immune as i64,
        );
        let kind = self.kind.unwrap_or(ModelKind::Sir);
        for (idx, ev) in self.events.iter().enumerate() {
            match (ev.transition, kind) {
                (Transition::Infect, ModelKind::Seir) => {
                    s -= 1;
                    e += 1;
                }
                (Transition::Infect, _) => {
                    s -= 1;
                    i += 1;
                }
                (Transition::BecomeInfectious, _) => {
                    e -= 1;
                    i += 1;
                }
                (Transition::Recover, _) => {
                    i -= 1;
                    r += 1;
                }
                (Transition::BecomeSusceptible, ModelKind::Sis) => {
                    i -= 1;
                    s += 1;
                }
                (Transition::BecomeSusceptible, _) => {
                    r -= 1;
                    s += 1;
                }
            }
            if s + e + i + r != n || s.min(e).min(i).min(r) < 0 {
                return Err(idx);
            }
        }
        Ok(())
    }
}

/// Counts at the nodes of a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompartmentPath {
    pub spec: ModelSpec,
    pub kind: ModelKind,
    pub grid: TimeGrid,
    pub n: u64,
    /// Master seed and stream, when the run was seeded through this crate.
    pub seed: Option<u64>,
    pub stream: u64,
    pub initial: InitialCounts,
    pub s: Vec<u64>,
    pub e: Vec<u64>,
    pub i: Vec<u64>,
    pub r: Vec<u64>,
    pub a: Vec<u64>,
    pub l: Vec<u64>,
}

impl CompartmentPath {
    /// Rows `(t, S, E, I, R, A, L)`.
    pub fn rows(&self) -> Vec<(f64, [u64; 6])> {
        (0..self.grid.len())
            .map(|k| {
                (
                    self.grid.time(k),
                    [self.s[k], self.e[k], self.i[k], self.r[k], self.a[k], self.l[k]],
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub record_events: bool,
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    transition: Transition,
    agent: u32,
    /// Duration of the agent's following stage, if any.
    next: f64,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.transition.class().cmp(&other.transition.class()))
            .then(self.agent.cmp(&other.agent))
    }
}

struct State<'a> {
    spec: &'a ModelSpec,
    kind: ModelKind,
    n: u64,
    s: u64,
    e: u64,
    i: u64,
    r: u64,
    a: u64,
    l: u64,
    /// Susceptible agents in arbitrary order.
    pool: Vec<u32>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    log: Option<Vec<Event>>,
}

impl State<'_> {
    fn push(&mut self, time: f64, transition: Transition, agent: u32, next: f64) {
        self.queue.push(Reverse(Scheduled {
            time,
            transition,
            agent,
            next,
        }));
    }

    fn record(&mut self, time: f64, agent: u32, transition: Transition) {
        if let Some(log) = self.log.as_mut() {
            log.push(Event {
                time,
                agent,
                transition,
            });
        }
    }

    fn make_susceptible(&mut self, agent: u32) {
        self.pool.push(agent);
        self.s += 1;
    }

    fn infect<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) {
        let idx = rng.random_range(0..self.pool.len());
        let agent = self.pool.swap_remove(idx);
        self.s -= 1;
        self.a += 1;
        self.record(t, agent, Transition::Infect);
        match &self.spec.periods {
            Periods::Single { f, .. } => {
                self.i += 1;
                let end = if self.kind == ModelKind::Sis {
                    Transition::BecomeSusceptible
                } else {
                    Transition::Recover
                };
                self.push(t + f.sample(rng), end, agent, 0.0);
            }
            Periods::Staged { h, .. } => {
                let (xi, eta) = h.sample_pair(rng);
                if self.kind == ModelKind::Seir {
                    self.e += 1;
                    self.push(t + xi, Transition::BecomeInfectious, agent, eta);
                } else {
                    self.i += 1;
                    self.push(t + xi, Transition::Recover, agent, eta);
                }
            }
        }
    }

    fn apply(&mut self, ev: Scheduled) {
        let t = ev.time;
        match (ev.transition, self.kind) {
            (Transition::BecomeInfectious, _) => {
                self.e -= 1;
                self.i += 1;
                self.l += 1;
                self.push(t + ev.next, Transition::Recover, ev.agent, 0.0);
            }
            (Transition::Recover, ModelKind::Sirs) => {
                self.i -= 1;
                self.r += 1;
                self.push(t + ev.next, Transition::BecomeSusceptible, ev.agent, 0.0);
            }
            (Transition::Recover, _) => {
                self.i -= 1;
                self.r += 1;
            }
            (Transition::BecomeSusceptible, ModelKind::Sis) => {
                self.i -= 1;
                self.make_susceptible(ev.agent);
            }
            (Transition::BecomeSusceptible, _) => {
                self.r -= 1;
                self.make_susceptible(ev.agent);
            }
            (Transition::Infect, _) => unreachable!("infections are not scheduled"),
        }
        self.record(t, ev.agent, ev.transition);
        debug_assert_eq!(self.s + self.e + self.i + self.r, self.n);
    }
}

/// Output of one run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub path: CompartmentPath,
    pub log: Option<EventLog>,
}

/// Exact event-driven simulation of one population of size `n` on `grid`.
pub fn simulate<R: Rng + ?Sized>(
    spec: &ModelSpec,
    n: u64,
    grid: &TimeGrid,
    rng: &mut R,
    options: SimOptions,
) -> Result<SimOutput> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("n", "population size must be at least 1"));
    }
    if n > u32::MAX as u64 {
        return Err(invalid("n", format!("population size {n} exceeds the agent id range")));
    }
    let horizon = grid.horizon();
    let kind = spec.kind;
    let init = InitialCounts::from_spec(spec, n);
    let mut st = State {
        spec,
        kind,
        n,
        s: 0,
        e: init.exposed,
        i: init.infectious,
        r: init.immune,
        a: 0,
        l: 0,
        pool: Vec::with_capacity(n as usize),
        queue: BinaryHeap::new(),
        log: options.record_events.then(Vec::new),
    };

    let (e_end, i_end, r_end) = (
        init.exposed,
        init.exposed + init.infectious,
        init.exposed + init.infectious + init.immune,
    );
    for agent in 0..n {
        let id = agent as u32;
        if agent < e_end {
            // SEIR: residual latent period and full infectious period
            let (_, h0, _) = spec.staged_laws()?;
            let (xi, eta) = h0.sample_pair(rng);
            st.push(xi, Transition::BecomeInfectious, id, eta);
        } else if agent < i_end {
            match (&spec.periods, kind) {
                (Periods::Single { f0, .. }, ModelKind::Sis) => {
                    st.push(f0.sample(rng), Transition::BecomeSusceptible, id, 0.0)
                }
                (Periods::Single { f0, .. }, _) => st.push(f0.sample(rng), Transition::Recover, id, 0.0),
                (Periods::Staged { f0, .. }, ModelKind::Seir) => {
                    st.push(f0.sample(rng), Transition::Recover, id, 0.0)
                }
                (Periods::Staged { h0, .. }, _) => {
                    let (xi, eta) = h0.sample_pair(rng);
                    st.push(xi, Transition::Recover, id, eta);
                }
            }
        } else if agent < r_end {
            let (_, _, f0) = spec.staged_laws()?;
            st.push(f0.sample(rng), Transition::BecomeSusceptible, id, 0.0);
        } else {
            st.make_susceptible(id);
        }
    }

    let len = grid.len();
    let mut path = CompartmentPath {
        spec: spec.clone(),
        kind,
        grid: *grid,
        n,
        seed: None,
        stream: 0,
        initial: init,
        s: Vec::with_capacity(len),
        e: Vec::with_capacity(len),
        i: Vec::with_capacity(len),
        r: Vec::with_capacity(len),
        a: Vec::with_capacity(len),
        l: Vec::with_capacity(len),
    };
    let mut next_node = 0usize;
    let record_until = |st: &State, path: &mut CompartmentPath, next_node: &mut usize, tau: f64| {
        while *next_node < len && grid.time(*next_node) < tau {
            path.s.push(st.s);
            path.e.push(st.e);
            path.i.push(st.i);
            path.r.push(st.r);
            path.a.push(st.a);
            path.l.push(st.l);
            *next_node += 1;
        }
    };

    let lam_max = spec.lambda_max(horizon);
    let constant_rate = spec.lambda.is_constant();
    let nf = n as f64;
    let mut t = 0.0;
    loop {
        let next_sched = st.queue.peek().map_or(f64::INFINITY, |x| x.0.time);
        let pressure = lam_max * (st.s as f64) * (st.i as f64) / nf;
        let candidate = if pressure > 0.0 {
            let w: f64 = Exp1.sample(rng);
            t + w / pressure
        } else {
            f64::INFINITY
        };
        if candidate < next_sched {
            if candidate > horizon {
                break;
            }
            t = candidate;
            let accept = constant_rate || rng.random::<f64>() * lam_max < spec.lambda.at(t);
            if accept {
                record_until(&st, &mut path, &mut next_node, t);
                st.infect(t, rng);
            }
        } else {
            if next_sched > horizon {
                break;
            }
            let Reverse(ev) = st.queue.pop().expect("peeked");
            t = ev.time;
            record_until(&st, &mut path, &mut next_node, t);
            st.apply(ev);
        }
    }
    record_until(&st, &mut path, &mut next_node, f64::INFINITY);

    let log = st.log.take().map(|events| EventLog {
        kind: Some(kind),
        initial: init,
        events,
    });
    Ok(SimOutput { path, log })
}
