//! Service, dwell and interval time distributions.

use rand_distr::{Distribution, Exp, Triangular, Uniform};
use serde::{Deserialize, Serialize};

use crate::des::{Minutes, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum DistributionSpec {
    Constant { value: f64 },
    Exponential { mean: f64 },
    Triangular { min: f64, mode: f64, max: f64 },
    Uniform { min: f64, max: f64 },
}

impl DistributionSpec {
    /// Problems with the parameters, if any. Samples must be non-negative.
    pub fn problems(&self) -> Option<String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            Self::Constant { value } if !finite(&[value]) || value < 0.0 => {
                Some(format!("Constant value {value} must be finite and >= 0"))
            }
            Self::Exponential { mean } if !finite(&[mean]) || mean <= 0.0 => {
                Some(format!("Exponential mean {mean} must be finite and > 0"))
            }
            Self::Triangular { min, mode, max }
                if !finite(&[min, mode, max]) || min < 0.0 || !(min <= mode && mode <= max) =>
            {
                Some(format!(
                    "Triangular requires 0 <= min <= mode <= max, got ({min}, {mode}, {max})"
                ))
            }
            Self::Uniform { min, max } if !finite(&[min, max]) || min < 0.0 || min > max => {
                Some(format!("Uniform requires 0 <= min <= max, got ({min}, {max})"))
            }
            _ => None,
        }
    }

    /// Like [`problems`](Self::problems) but also rejects distributions that
    /// can return zero with positive probability.
    pub fn problems_strictly_positive(&self) -> Option<String> {
        self.problems().or_else(|| {
            let zero_possible = match *self {
                Self::Constant { value } => value == 0.0,
                Self::Exponential { .. } => false,
                Self::Triangular { max, .. } | Self::Uniform { max, .. } => max == 0.0,
            };
            zero_possible.then(|| format!("{self:?} can produce zero-length intervals"))
        })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Exponential { mean } => mean,
            Self::Triangular { min, mode, max } => (min + mode + max) / 3.0,
            Self::Uniform { min, max } => 0.5 * (min + max),
        }
    }

    /// Compiles into a sampler. Call only on a spec without [`problems`](Self::problems).
    pub fn sampler(&self) -> Dist {
        match *self {
            Self::Constant { value } => Dist::Constant(value),
            Self::Exponential { mean } => Dist::Exponential(Exp::new(1.0 / mean).expect("validated mean")),
            Self::Triangular { min, max, .. } | Self::Uniform { min, max } if min == max => Dist::Constant(min),
            Self::Triangular { min, mode, max } => {
                Dist::Triangular(Triangular::new(min, max, mode).expect("validated triangular"))
            }
            Self::Uniform { min, max } => Dist::Uniform(Uniform::new(min, max).expect("validated uniform")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Dist {
    Constant(f64),
    Exponential(Exp<f64>),
    Triangular(Triangular<f64>),
    Uniform(Uniform<f64>),
}

impl Dist {
    pub fn sample(&self, rng: &mut RandomStream) -> Minutes {
        let x = match self {
            Dist::Constant(v) => *v,
            Dist::Exponential(d) => d.sample(rng),
            Dist::Triangular(d) => d.sample(rng),
            Dist::Uniform(d) => d.sample(rng),
        };
        x.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::des::make_stream;

    #[test]
    fn parameter_checks() {
        assert!(DistributionSpec::Constant { value: 0.0 }.problems().is_none());
        assert!(DistributionSpec::Constant { value: 0.0 }
            .problems_strictly_positive()
            .is_some());
        assert!(DistributionSpec::Exponential { mean: 0.0 }.problems().is_some());
        assert!(DistributionSpec::Triangular {
            min: 1.0,
            mode: 0.5,
            max: 2.0
        }
        .problems()
        .is_some());
        assert!(DistributionSpec::Uniform { min: -1.0, max: 2.0 }.problems().is_some());
        assert!(DistributionSpec::Uniform { min: 1.0, max: 1.0 }.problems().is_none());
    }

    #[test]
    fn sample_means() {
        let specs = [
            DistributionSpec::Constant { value: 2.5 },
            DistributionSpec::Exponential { mean: 3.0 },
            DistributionSpec::Triangular {
                min: 1.0,
                mode: 2.0,
                max: 6.0,
            },
            DistributionSpec::Uniform { min: 2.0, max: 4.0 },
            DistributionSpec::Uniform { min: 4.0, max: 4.0 },
        ];
        let mut rng = make_stream(3, 0, "dist");
        for spec in specs {
            let d = spec.sampler();
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            assert!(xs.iter().all(|&x| x >= 0.0));
            let mean = xs.iter().sum::<f64>() / n as f64;
            assert!(
                (mean - spec.mean()).abs() < 0.02 * spec.mean().max(1.0),
                "{spec:?}: {mean}"
            );
        }
    }

    #[test]
    fn json_shape() {
        let d: DistributionSpec = serde_json::from_str(r#"{"family":"Triangular","min":1,"mode":2,"max":3}"#).unwrap();
        assert_eq!(
            d,
            DistributionSpec::Triangular {
                min: 1.0,
                mode: 2.0,
                max: 3.0
            }
        );
    }
}
