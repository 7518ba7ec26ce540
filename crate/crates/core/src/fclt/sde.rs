use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::fluid::FluidSolution;
use crate::model::ModelKind;

fn check(lambda: f64, mu: f64, fluid: &FluidSolution) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be finite and nonnegative, got {lambda}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid("mu", format!("must be positive, got {mu}")));
    }
    if fluid.spec.kind != ModelKind::Sis {
        return Err(Error::InvalidModel(format!(
            "the diffusion representation needs an SIS fluid path, got {}",
            fluid.spec.kind
        )));
    }
    Ok(())
}

fn euler<R: Rng + ?Sized>(
    lambda: f64,
    mu: f64,
    fluid: &FluidSolution,
    ihat0: f64,
    mut rng: Option<&mut R>,
) -> Vec<f64> {
    let dt = fluid.grid.dt();
    let sq = dt.sqrt();
    let ib = &fluid.i;
    let mut x = Vec::with_capacity(ib.len());
    x.push(ihat0);
    for k in 0..ib.len() - 1 {
        let drift = (lambda * (1.0 - 2.0 * ib[k]) - mu) * x[k];
        let mut next = x[k] + drift * dt;
        if let Some(rng) = rng.as_deref_mut() {
            let ba: f64 = rng.sample(StandardNormal);
            let bi: f64 = rng.sample(StandardNormal);
            next += (lambda * (1.0 - ib[k]) * ib[k]).max(0.0).sqrt() * sq * ba
                - (mu * ib[k]).max(0.0).sqrt() * sq * bi;
        }
        x.push(next);
    }
    x
}

/// Euler–Maruyama path of the Markovian SIS fluctuation
/// `dÎ = (λ(1 - 2Ī) - μ) Î dt + √(λ(1 - Ī)Ī) dB_A - √(μĪ) dB_I` on the fluid grid.
pub fn sis_sde_path<R: Rng + ?Sized>(
    lambda: f64,
    mu: f64,
    fluid: &FluidSolution,
    ihat0: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check(lambda, mu, fluid)?;
    Ok(euler(lambda, mu, fluid, ihat0, Some(rng)))
}

/// The same recursion with the noise switched off.
pub fn sis_sde_drift_path(lambda: f64, mu: f64, fluid: &FluidSolution, ihat0: f64) -> Result<Vec<f64>> {
    check(lambda, mu, fluid)?;
    Ok(euler::<rand_chacha::ChaCha8Rng>(lambda, mu, fluid, ihat0, None))
}
