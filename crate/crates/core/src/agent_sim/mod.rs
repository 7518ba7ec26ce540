//! Exact event-driven simulation of the finite-population models.

mod engine;

pub use engine::{
    simulate, CompartmentPath, Event, EventLog, InitialCounts, SimOptions, SimOutput, Transition,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::model::ModelSpec;

/// Default cap on the path storage of an ensemble.
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Random stream `r` under master seed `seed`.
pub fn replication_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Simulate replication `stream` of master seed `seed`.
pub fn simulate_seeded(
    spec: &ModelSpec,
    n: u64,
    grid: &TimeGrid,
    seed: u64,
    stream: u64,
    options: SimOptions,
) -> Result<SimOutput> {
    let mut rng = replication_rng(seed, stream);
    let mut out = simulate(spec, n, grid, &mut rng, options)?;
    out.path.seed = Some(seed);
    out.path.stream = stream;
    Ok(out)
}

/// Bytes needed to keep `reps` paths on `grid`.
pub fn ensemble_bytes(reps: usize, grid: &TimeGrid) -> u64 {
    (reps as u64) * (grid.len() as u64) * 6 * std::mem::size_of::<u64>() as u64
}

/// Run `reps` replications in parallel and keep every path.
pub fn simulate_ensemble(
    spec: &ModelSpec,
    n: u64,
    reps: usize,
    grid: &TimeGrid,
    seed: u64,
    memory_budget: u64,
) -> Result<Vec<CompartmentPath>> {
    let required = ensemble_bytes(reps, grid);
    if required > memory_budget {
        return Err(Error::MemoryBudget {
            required_bytes: required,
            budget_bytes: memory_budget,
        });
    }
    ensemble_map(spec, n, reps, grid, seed, SimOptions::default(), |o| o.path)
}

/// Run `reps` replications in parallel, reducing each through `f` as soon as it finishes.
/// Results are in replication order and do not depend on the thread count.
pub fn ensemble_map<T, F>(
    spec: &ModelSpec,
    n: u64,
    reps: usize,
    grid: &TimeGrid,
    seed: u64,
    options: SimOptions,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(SimOutput) -> T + Sync,
{
    if reps == 0 {
        return Err(invalid("reps", "need at least one replication"));
    }
    spec.validate()?;
    (0..reps)
        .into_par_iter()
        .map(|r| simulate_seeded(spec, n, grid, seed, r as u64, options).map(&f))
        .collect()
}
