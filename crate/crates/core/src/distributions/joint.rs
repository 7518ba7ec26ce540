use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dist::DurationDist;
use crate::error::{invalid, Result};

/// How the second duration depends on the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditional {
    Independent(DurationDist),
    /// Sorted `(u, law)` buckets; `F(·|u)` is the law of the nearest bucket (ties go low).
    Bucketed(Vec<(f64, DurationDist)>),
}

/// Joint law of a (first, second) duration pair, given as the marginal of the first and the
/// conditional law of the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDurationDist {
    pub marginal: DurationDist,
    pub conditional: Conditional,
}

impl JointDurationDist {
    pub fn independent(first: DurationDist, second: DurationDist) -> Self {
        Self {
            marginal: first,
            conditional: Conditional::Independent(second),
        }
    }

    pub fn bucketed(first: DurationDist, mut buckets: Vec<(f64, DurationDist)>) -> Result<Self> {
        buckets.sort_by(|a, b| a.0.total_cmp(&b.0));
        let j = Self {
            marginal: first,
            conditional: Conditional::Bucketed(buckets),
        };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<()> {
        self.marginal.validate()?;
        match &self.conditional {
            Conditional::Independent(f) => f.validate(),
            Conditional::Bucketed(b) => {
                if b.is_empty() {
                    return Err(invalid("conditional", "need at least one bucket"));
                }
                if b.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(invalid("conditional", "bucket centres must be distinct and sorted"));
                }
                b.iter().try_for_each(|(_, d)| d.validate())
            }
        }
    }

    pub fn is_independent(&self) -> bool {
        matches!(self.conditional, Conditional::Independent(_))
    }

    /// `F(·|u)`.
    pub fn conditional_at(&self, u: f64) -> &DurationDist {
        match &self.conditional {
            Conditional::Independent(f) => f,
            Conditional::Bucketed(b) => {
                let idx = b.partition_point(|x| x.0 < u);
                if idx == 0 {
                    &b[0].1
                } else if idx == b.len() {
                    &b[idx - 1].1
                } else if u - b[idx - 1].0 <= b[idx].0 - u {
                    &b[idx - 1].1
                } else {
                    &b[idx].1
                }
            }
        }
    }

    /// Mixture weights of the buckets under the first marginal.
    fn bucket_weights(&self) -> Vec<(f64, &DurationDist)> {
        match &self.conditional {
            Conditional::Independent(f) => vec![(1.0, f)],
            Conditional::Bucketed(b) => {
                let g = &self.marginal;
                (0..b.len())
                    .map(|i| {
                        // nearest-bucket cell is (mid_{i-1}, mid_i], ties assigned low
                        let lo = if i == 0 {
                            0.0
                        } else {
                            g.cdf(0.5 * (b[i - 1].0 + b[i].0))
                        };
                        let hi = if i + 1 == b.len() {
                            1.0
                        } else {
                            g.cdf(0.5 * (b[i].0 + b[i + 1].0))
                        };
                        ((hi - lo).max(0.0), &b[i].1)
                    })
                    .collect()
            }
        }
    }

    /// Marginal CDF of the second duration, `∫ F(t|u) dG(u)`.
    pub fn second_marginal_cdf(&self, t: f64) -> f64 {
        self.bucket_weights()
            .iter()
            .map(|(w, d)| w * d.cdf(t))
            .sum()
    }

    pub fn second_mean(&self) -> f64 {
        self.bucket_weights()
            .iter()
            .map(|(w, d)| w * d.mean())
            .sum()
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u = self.marginal.sample(rng);
        let v = self.conditional_at(u).sample(rng);
        (u, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn independent_conditional_ignores_u() {
        let j = JointDurationDist::independent(
            DurationDist::exponential(1.0).unwrap(),
            DurationDist::gamma(2.0, 3.0).unwrap(),
        );
        for u in [0.0, 0.3, 5.0] {
            assert_eq!(j.conditional_at(u).cdf(0.4), j.conditional_at(0.0).cdf(0.4));
        }
    }

    #[test]
    fn bucketed_pair_marginals() {
        let j = JointDurationDist::bucketed(
            DurationDist::uniform(0.0, 2.0).unwrap(),
            vec![
                (0.5, DurationDist::exponential(1.0).unwrap()),
                (1.5, DurationDist::exponential(4.0).unwrap()),
            ],
        )
        .unwrap();
        // buckets split at u = 1 with equal weight
        let oracle_mean = 0.5 * 1.0 + 0.5 * 0.25;
        assert!((j.second_mean() - oracle_mean).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let (mut su, mut sv, mut sv2) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (u, v) = j.sample_pair(&mut rng);
            su += u;
            sv += v;
            sv2 += v * v;
        }
        let nf = n as f64;
        let mv = sv / nf;
        let sd = (sv2 / nf - mv * mv).sqrt();
        assert!((su / nf - 1.0).abs() < 3.0 * (1.0 / 3.0f64).sqrt() / nf.sqrt());
        assert!((mv - oracle_mean).abs() < 3.0 * sd / nf.sqrt(), "{mv} vs {oracle_mean}");
    }

    #[test]
    fn rejects_unsorted_or_empty_buckets() {
        let g = DurationDist::exponential(1.0).unwrap();
        assert!(JointDurationDist::bucketed(g.clone(), vec![]).is_err());
        let e = DurationDist::exponential(1.0).unwrap();
        assert!(JointDurationDist::bucketed(g, vec![(1.0, e.clone()), (1.0, e)]).is_err());
    }
}
