use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, StandardNormal, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{invalid, Error, Result};

/// Law of a nonnegative duration (latent, infectious or immune period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum DurationDist {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Gamma { shape: f64, rate: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Weibull { shape: f64, scale: f64 },
    /// Knots `(t, F(t))` with `F` linear in between. A repeated time or a first knot with
    /// positive probability is a point mass.
    PiecewiseEmpirical { knots: Vec<(f64, f64)> },
    /// Stationary-excess transform of a base law, `F_e(t) = ∫_0^t F^c(s) ds / mean`.
    StationaryExcess { base: Box<DurationDist> },
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and positive, got {v}")))
    }
}

fn nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and nonnegative, got {v}")))
    }
}

impl DurationDist {
    pub fn exponential(rate: f64) -> Result<Self> {
        let d = DurationDist::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        let d = DurationDist::Deterministic { value };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = DurationDist::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let d = DurationDist::Gamma { shape, rate };
        d.validate()?;
        Ok(d)
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        let d = DurationDist::LogNormal { mu, sigma };
        d.validate()?;
        Ok(d)
    }

    /// LogNormal law with the given mean and log-scale spread.
    pub fn lognormal_with_mean(mean: f64, sigma: f64) -> Result<Self> {
        positive("mean", mean)?;
        Self::lognormal(mean.ln() - 0.5 * sigma * sigma, sigma)
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        let d = DurationDist::Weibull { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn empirical(knots: Vec<(f64, f64)>) -> Result<Self> {
        let d = DurationDist::PiecewiseEmpirical { knots };
        d.validate()?;
        Ok(d)
    }

    /// Build from a family name and a flat parameter list, as read from a config file.
    pub fn from_params(family: &str, params: &[f64]) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(invalid(
                    "params",
                    format!("family `{family}` takes {n} parameters, got {}", params.len()),
                ))
            }
        };
        match family {
            "exponential" => {
                want(1)?;
                Self::exponential(params[0])
            }
            "deterministic" => {
                want(1)?;
                Self::deterministic(params[0])
            }
            "uniform" => {
                want(2)?;
                Self::uniform(params[0], params[1])
            }
            "gamma" => {
                want(2)?;
                Self::gamma(params[0], params[1])
            }
            "lognormal" => {
                want(2)?;
                Self::lognormal(params[0], params[1])
            }
            "weibull" => {
                want(2)?;
                Self::weibull(params[0], params[1])
            }
            "piecewise_empirical" => {
                if params.len() < 2 || params.len() % 2 != 0 {
                    return Err(invalid(
                        "params",
                        "piecewise_empirical takes an even number of values t0, F0, t1, F1, ...",
                    ));
                }
                Self::empirical(params.chunks(2).map(|c| (c[0], c[1])).collect())
            }
            other => Err(invalid("family", format!("unknown distribution family `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DurationDist::Exponential { rate } => positive("rate", *rate),
            DurationDist::Deterministic { value } => nonnegative("value", *value),
            DurationDist::Uniform { lo, hi } => {
                nonnegative("lo", *lo)?;
                if !(hi.is_finite() && hi > lo) {
                    return Err(invalid("hi", format!("need lo < hi, got [{lo}, {hi}]")));
                }
                Ok(())
            }
            DurationDist::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)
            }
            DurationDist::LogNormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(invalid("mu", "must be finite"));
                }
                positive("sigma", *sigma)
            }
            DurationDist::Weibull { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)
            }
            DurationDist::PiecewiseEmpirical { knots } => {
                if knots.is_empty() {
                    return Err(invalid("knots", "need at least one knot"));
                }
                let mut prev = (0.0_f64, 0.0_f64);
                for (i, &(t, p)) in knots.iter().enumerate() {
                    nonnegative("knots", t)?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(invalid("knots", format!("F({t}) = {p} is not in [0, 1]")));
                    }
                    if i > 0 && (t < prev.0 || p < prev.1) {
                        return Err(invalid(
                            "knots",
                            format!("knot {i} ({t}, {p}) breaks monotonicity"),
                        ));
                    }
                    prev = (t, p);
                }
                if (prev.1 - 1.0).abs() > 1e-12 {
                    return Err(invalid("knots", "last knot must have F = 1"));
                }
                Ok(())
            }
            DurationDist::StationaryExcess { base } => {
                base.validate()?;
                let m = base.mean();
                if !(m.is_finite() && m > 0.0) {
                    return Err(invalid("base", format!("mean must be finite and positive, got {m}")));
                }
                Ok(())
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            DurationDist::Exponential { .. } => "exponential",
            DurationDist::Deterministic { .. } => "deterministic",
            DurationDist::Uniform { .. } => "uniform",
            DurationDist::Gamma { .. } => "gamma",
            DurationDist::LogNormal { .. } => "lognormal",
            DurationDist::Weibull { .. } => "weibull",
            DurationDist::PiecewiseEmpirical { .. } => "piecewise_empirical",
            DurationDist::StationaryExcess { .. } => "stationary_excess",
        }
    }

    /// `F(t)`, right-continuous.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 || t.is_nan() {
            return 0.0;
        }
        if t == f64::INFINITY {
            return 1.0;
        }
        let p = match self {
            DurationDist::Exponential { rate } => -(-rate * t).exp_m1(),
            DurationDist::Deterministic { value } => {
                if t >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            DurationDist::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            DurationDist::Gamma { shape, rate } => {
                if t == 0.0 {
                    0.0
                } else {
                    gamma_lr(*shape, rate * t)
                }
            }
            DurationDist::LogNormal { mu, sigma } => {
                if t == 0.0 {
                    0.0
                } else {
                    std_normal_cdf((t.ln() - mu) / sigma)
                }
            }
            DurationDist::Weibull { shape, scale } => -(-(t / scale).powf(*shape)).exp_m1(),
            DurationDist::PiecewiseEmpirical { knots } => empirical_cdf(knots, t, false),
            DurationDist::StationaryExcess { base } => {
                base.integrated_survival(t) / base.mean()
            }
        };
        p.clamp(0.0, 1.0)
    }

    /// Left limit `F(t-)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        match self {
            DurationDist::Deterministic { value } => {
                if t > *value {
                    1.0
                } else {
                    0.0
                }
            }
            DurationDist::PiecewiseEmpirical { knots } => {
                if t <= 0.0 {
                    0.0
                } else {
                    empirical_cdf(knots, t, true).clamp(0.0, 1.0)
                }
            }
            _ => {
                if t <= 0.0 {
                    0.0
                } else {
                    self.cdf(t)
                }
            }
        }
    }

    /// `1 - F(t)`.
    #[inline]
    pub fn survival(&self, t: f64) -> f64 {
        1.0 - self.cdf(t)
    }

    /// Point masses `(location, mass)` in increasing order.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            DurationDist::Deterministic { value } => vec![(*value, 1.0)],
            DurationDist::PiecewiseEmpirical { knots } => {
                let mut out: Vec<(f64, f64)> = Vec::new();
                let mut prev_f = 0.0;
                let mut prev_t: Option<f64> = None;
                for &(t, p) in knots {
                    // a knot repeating the previous time, or the first knot, carries a jump
                    let jump_point = prev_t.is_none_or(|pt| pt == t);
                    if jump_point && p > prev_f {
                        match out.last_mut() {
                            Some(last) if last.0 == t => last.1 += p - prev_f,
                            _ => out.push((t, p - prev_f)),
                        }
                    }
                    prev_f = p;
                    prev_t = Some(t);
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// Absolutely continuous part of the CDF, `F(t) - Σ_{a ≤ t} mass(a)`.
    pub fn continuous_cdf(&self, t: f64) -> f64 {
        let jumps: f64 = self
            .atoms()
            .iter()
            .filter(|(a, _)| *a <= t)
            .map(|(_, m)| m)
            .sum();
        (self.cdf(t) - jumps).max(0.0)
    }

    /// Truncated moment `E[X^j ; X <= t]` for real `j >= 0`.
    pub fn partial_moment(&self, j: f64, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            DurationDist::Exponential { rate } => gamma_partial_moment(1.0, *rate, j, t),
            DurationDist::Gamma { shape, rate } => gamma_partial_moment(*shape, *rate, j, t),
            DurationDist::Deterministic { value } => {
                if *value <= t {
                    value.powf(j)
                } else {
                    0.0
                }
            }
            DurationDist::Uniform { lo, hi } => {
                if t <= *lo {
                    0.0
                } else {
                    let top = t.min(*hi);
                    (top.powf(j + 1.0) - lo.powf(j + 1.0)) / ((j + 1.0) * (hi - lo))
                }
            }
            DurationDist::LogNormal { mu, sigma } => {
                let scale = (j * mu + 0.5 * j * j * sigma * sigma).exp();
                if t == f64::INFINITY {
                    scale
                } else if t == 0.0 {
                    0.0
                } else {
                    scale * std_normal_cdf((t.ln() - mu - j * sigma * sigma) / sigma)
                }
            }
            DurationDist::Weibull { shape, scale } => {
                let a = 1.0 + j / shape;
                let full = scale.powf(j) * ln_gamma(a).exp();
                if t == f64::INFINITY {
                    full
                } else {
                    full * gamma_lr(a, (t / scale).powf(*shape))
                }
            }
            DurationDist::PiecewiseEmpirical { knots } => empirical_partial_moment(knots, j, t),
            DurationDist::StationaryExcess { base } => {
                // ∫_0^t x^j F^c(x) dx / m, integrated by parts
                let m = base.mean();
                let tail = if t == f64::INFINITY {
                    0.0
                } else {
                    t.powf(j + 1.0) * base.survival(t)
                };
                (tail + base.partial_moment(j + 1.0, t)) / ((j + 1.0) * m)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.partial_moment(1.0, f64::INFINITY)
    }

    /// `∫_0^t F^c(s) ds`.
    pub fn integrated_survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t == f64::INFINITY {
            return self.mean();
        }
        t * self.survival(t) + self.partial_moment(1.0, t)
    }

    /// Smallest `t` with `F(t) >= u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            DurationDist::Exponential { rate } => -(-u).ln_1p() / rate,
            DurationDist::Deterministic { value } => *value,
            DurationDist::Uniform { lo, hi } => lo + u * (hi - lo),
            DurationDist::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            DurationDist::PiecewiseEmpirical { knots } => empirical_quantile(knots, u),
            _ => self.bisect_quantile(u),
        }
    }

    fn bisect_quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let mut hi = self.mean().max(1e-12);
        while self.cdf(hi) < u {
            hi *= 2.0;
            if hi > 1e300 {
                return hi;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DurationDist::Exponential { rate } => Exp::new(*rate).expect("validated").sample(rng),
            DurationDist::Deterministic { value } => *value,
            DurationDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            DurationDist::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate)
                .expect("validated")
                .sample(rng),
            DurationDist::LogNormal { mu, sigma } => LogNormal::new(*mu, *sigma)
                .expect("validated")
                .sample(rng),
            DurationDist::Weibull { shape, scale } => Weibull::new(*scale, *shape)
                .expect("validated")
                .sample(rng),
            DurationDist::PiecewiseEmpirical { knots } => {
                empirical_quantile(knots, rng.random::<f64>())
            }
            DurationDist::StationaryExcess { base } => {
                // residual = U * (size-biased draw) where one is available in closed form
                match base.size_biased_sample(rng) {
                    Some(y) => rng.random::<f64>() * y,
                    None => self.bisect_quantile(rng.random::<f64>()),
                }
            }
        }
    }

    fn size_biased_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        match self {
            DurationDist::Exponential { rate } => {
                Some(Gamma::new(2.0, 1.0 / rate).ok()?.sample(rng))
            }
            DurationDist::Deterministic { value } => Some(*value),
            DurationDist::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                Some((lo * lo + u * (hi * hi - lo * lo)).sqrt())
            }
            DurationDist::Gamma { shape, rate } => {
                Some(Gamma::new(shape + 1.0, 1.0 / rate).ok()?.sample(rng))
            }
            DurationDist::LogNormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                Some((mu + sigma * sigma + sigma * z).exp())
            }
            DurationDist::Weibull { shape, scale } => {
                let g = Gamma::new(1.0 + 1.0 / shape, 1.0).ok()?.sample(rng);
                Some(scale * g.powf(1.0 / shape))
            }
            _ => None,
        }
    }
}

/// Stationary-excess (equilibrium) law of `d`.
///
/// The exponential law maps to itself and a point mass at `v` maps to `Uniform(0, v)`; other
/// families are wrapped.
pub fn equilibrium_dist(d: &DurationDist) -> Result<DurationDist> {
    d.validate()?;
    let m = d.mean();
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::InvalidParameter {
            name: "mean",
            reason: format!(
                "equilibrium transform needs a finite positive mean, {} has mean {m}",
                d.family_name()
            ),
        });
    }
    Ok(match d {
        DurationDist::Exponential { rate } => DurationDist::Exponential { rate: *rate },
        DurationDist::Deterministic { value } => DurationDist::Uniform { lo: 0.0, hi: *value },
        other => DurationDist::StationaryExcess {
            base: Box::new(other.clone()),
        },
    })
}

fn gamma_partial_moment(shape: f64, rate: f64, j: f64, t: f64) -> f64 {
    let full = (ln_gamma(shape + j) - ln_gamma(shape)).exp() / rate.powf(j);
    if t == f64::INFINITY {
        full
    } else if t == 0.0 {
        0.0
    } else {
        full * gamma_lr(shape + j, rate * t)
    }
}

/// Linear interpolation between knots; `strict` gives the left limit.
fn empirical_cdf(knots: &[(f64, f64)], t: f64, strict: bool) -> f64 {
    // index of the last knot with time <= t (or < t for the left limit)
    let idx = if strict {
        knots.partition_point(|k| k.0 < t)
    } else {
        knots.partition_point(|k| k.0 <= t)
    };
    if idx == 0 {
        return 0.0;
    }
    let (t0, p0) = knots[idx - 1];
    if idx == knots.len() {
        return p0;
    }
    let (t1, p1) = knots[idx];
    if t1 <= t0 {
        return p0;
    }
    p0 + (p1 - p0) * (t - t0) / (t1 - t0)
}

fn empirical_partial_moment(knots: &[(f64, f64)], j: f64, t: f64) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(tk, pk) in knots {
        let left = prev.map_or(0.0, |p| p.1);
        match prev {
            Some((tp, _)) if tk > tp => {
                // uniform density on (tp, tk]
                if tp >= t {
                    break;
                }
                let hi = tk.min(t);
                let dens = (pk - left) / (tk - tp);
                total += dens * (hi.powf(j + 1.0) - tp.powf(j + 1.0)) / (j + 1.0);
            }
            _ => {
                if tk <= t && pk > left {
                    total += (pk - left) * tk.powf(j);
                }
            }
        }
        prev = Some((tk, pk));
    }
    total
}

fn empirical_quantile(knots: &[(f64, f64)], u: f64) -> f64 {
    let idx = knots.partition_point(|k| k.1 < u);
    if idx >= knots.len() {
        return knots.last().map_or(0.0, |k| k.0);
    }
    let (t1, p1) = knots[idx];
    if idx == 0 {
        return t1;
    }
    let (t0, p0) = knots[idx - 1];
    if p1 <= p0 || t1 <= t0 {
        return t1;
    }
    t0 + (t1 - t0) * (u - p0) / (p1 - p0)
}
