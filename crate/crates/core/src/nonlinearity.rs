//! Scalar edge nonlinearities applied to gradient differences.
//!
//! The accelerated protocol uses the composite signum power
//! `sgn^alpha(u) + sgn^beta(u)`; the other kinds are the primal baselines it
//! is compared against.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Signed power `u * |u|^(p - 1)`, defined as exactly `0` at `u = 0`.
///
/// Evaluated as `copysign(|u|^p, u)` so that `sgn_pow(-u, p) == -sgn_pow(u, p)`
/// holds bit for bit.
pub fn sgn_pow(u: f64, p: f64) -> Result<f64, DomainError> {
    if !u.is_finite() {
        return Err(DomainError::NonFiniteInput(u));
    }
    if !(p > 0.0) || !p.is_finite() {
        return Err(DomainError::InvalidExponent(p));
    }
    Ok(sgn_pow_unchecked(u, p))
}

#[inline]
pub(crate) fn sgn_pow_unchecked(u: f64, p: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else if p == 1.0 {
        u
    } else {
        u.abs().powf(p).copysign(u)
    }
}

/// Edge flow function `phi(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Nonlinearity {
    /// `sgn^alpha(u) + sgn^beta(u)`.
    CompositeSignum { alpha: f64, beta: f64 },
    /// `u`.
    Linear,
    /// `sgn^nu(u)`.
    FiniteTime { nu: f64 },
    /// `clamp(u, -delta, delta)`.
    Saturated { delta: f64 },
}

impl Nonlinearity {
    /// Checked constructor for the accelerated composite flow.
    pub fn composite(alpha: f64, beta: f64) -> Result<Self, DomainError> {
        let nl = Nonlinearity::CompositeSignum { alpha, beta };
        nl.validate()?;
        Ok(nl)
    }

    pub fn finite_time(nu: f64) -> Result<Self, DomainError> {
        let nl = Nonlinearity::FiniteTime { nu };
        nl.validate()?;
        Ok(nl)
    }

    pub fn saturated(delta: f64) -> Result<Self, DomainError> {
        let nl = Nonlinearity::Saturated { delta };
        nl.validate()?;
        Ok(nl)
    }

    /// Checks the parameter ranges of the variant.
    ///
    /// `CompositeSignum` accepts the closed ranges `0 < alpha <= 1 <= beta`:
    /// the accelerating regime is the open interior, and the boundary values
    /// are kept so parameter grids can include the `alpha = 1` / `beta = 1`
    /// reference curves.
    pub fn validate(&self) -> Result<(), DomainError> {
        match *self {
            Nonlinearity::CompositeSignum { alpha, beta } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(DomainError::InvalidParameter {
                        name: "alpha",
                        value: alpha,
                        expected: "0 < alpha <= 1",
                    });
                }
                if !(beta >= 1.0 && beta.is_finite()) {
                    return Err(DomainError::InvalidParameter {
                        name: "beta",
                        value: beta,
                        expected: "beta >= 1",
                    });
                }
            }
            Nonlinearity::Linear => {}
            Nonlinearity::FiniteTime { nu } => {
                if !(nu > 0.0 && nu < 1.0) {
                    return Err(DomainError::InvalidParameter {
                        name: "nu",
                        value: nu,
                        expected: "0 < nu < 1",
                    });
                }
            }
            Nonlinearity::Saturated { delta } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    return Err(DomainError::InvalidParameter {
                        name: "delta",
                        value: delta,
                        expected: "delta > 0",
                    });
                }
            }
        }
        Ok(())
    }

    /// True for the strictly accelerating composite regime `0 < alpha < 1 < beta`.
    pub fn is_accelerating(&self) -> bool {
        matches!(*self, Nonlinearity::CompositeSignum { alpha, beta } if alpha < 1.0 && beta > 1.0)
    }

    /// Evaluates `phi(u)`. The nonlinearity must already be valid.
    pub fn eval(&self, u: f64) -> Result<f64, DomainError> {
        if !u.is_finite() {
            return Err(DomainError::NonFiniteInput(u));
        }
        Ok(self.eval_unchecked(u))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, u: f64) -> f64 {
        match *self {
            Nonlinearity::CompositeSignum { alpha, beta } => {
                sgn_pow_unchecked(u, alpha) + sgn_pow_unchecked(u, beta)
            }
            Nonlinearity::Linear => u,
            Nonlinearity::FiniteTime { nu } => sgn_pow_unchecked(u, nu),
            Nonlinearity::Saturated { delta } => {
                // written out so that clamp(-u) == -clamp(u) exactly
                if u > delta {
                    delta
                } else if u < -delta {
                    -delta
                } else {
                    u
                }
            }
        }
    }
}

/// Evaluates `nl` at `u` after validating the parameters.
pub fn eval_flow(nl: &Nonlinearity, u: f64) -> Result<f64, DomainError> {
    nl.validate()?;
    nl.eval(u)
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::CompositeSignum { alpha, beta } => write!(f, "composite:{alpha}:{beta}"),
            Nonlinearity::Linear => write!(f, "linear"),
            Nonlinearity::FiniteTime { nu } => write!(f, "finite:{nu}"),
            Nonlinearity::Saturated { delta } => write!(f, "saturated:{delta}"),
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = DomainError;

    /// Parses `composite:<alpha>:<beta>`, `linear`, `finite:<nu>` or
    /// `saturated:<delta>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::Parse(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let nl = match parts.as_slice() {
            ["composite", a, b] => Nonlinearity::CompositeSignum { alpha: num(a)?, beta: num(b)? },
            ["linear"] => Nonlinearity::Linear,
            ["finite", nu] | ["finite-time", nu] => Nonlinearity::FiniteTime { nu: num(nu)? },
            ["saturated", d] => Nonlinearity::Saturated { delta: num(d)? },
            _ => return Err(bad()),
        };
        nl.validate()?;
        Ok(nl)
    }
}

impl TryFrom<String> for Nonlinearity {
    type Error = DomainError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Nonlinearity> for String {
    fn from(nl: Nonlinearity) -> String {
        nl.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_kinds() -> Vec<Nonlinearity> {
        vec![
            Nonlinearity::composite(0.3, 1.7).unwrap(),
            Nonlinearity::composite(0.5, 2.0).unwrap(),
            Nonlinearity::Linear,
            Nonlinearity::finite_time(0.7).unwrap(),
            Nonlinearity::saturated(1.0).unwrap(),
        ]
    }

    #[test]
    fn sgn_pow_examples() {
        assert_eq!(sgn_pow(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(sgn_pow(4.0, 0.5).unwrap(), 2.0);
        assert_eq!(sgn_pow(-2.0, 2.0).unwrap(), -4.0);
        for u in [-3.25, -1e-9, 0.0, 7.5, 1e12] {
            assert_eq!(sgn_pow(u, 1.0).unwrap(), u);
        }
    }

    #[test]
    fn sgn_pow_domain_errors() {
        assert!(sgn_pow(f64::NAN, 0.5).is_err());
        assert!(sgn_pow(f64::INFINITY, 0.5).is_err());
        assert!(sgn_pow(1.0, 0.0).is_err());
        assert!(sgn_pow(1.0, -0.5).is_err());
        assert!(sgn_pow(1.0, f64::NAN).is_err());
    }

    #[test]
    fn eval_flow_examples() {
        let c = Nonlinearity::composite(0.5, 2.0).unwrap();
        assert_eq!(eval_flow(&c, 4.0).unwrap(), 18.0);
        assert_eq!(eval_flow(&Nonlinearity::Linear, -3.5).unwrap(), -3.5);
        assert_eq!(eval_flow(&Nonlinearity::Saturated { delta: 1.0 }, 7.0).unwrap(), 1.0);
        assert!(eval_flow(&c, f64::NAN).is_err());
    }

    #[test]
    fn composite_amplifies_small_gradients() {
        // 0.04^0.3 and 0.04^1.7 evaluated as exp(p * ln 0.04) in extended
        // precision (40 digits).
        let expected = 0.380_730_787_743_175_70 + 0.004_202_444_487_046_027_6;
        let nl = Nonlinearity::composite(0.3, 1.7).unwrap();
        let got = eval_flow(&nl, 0.04).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
        assert!(got > 0.04 * 2.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Nonlinearity::composite(0.0, 1.7).is_err());
        assert!(Nonlinearity::composite(1.2, 1.7).is_err());
        assert!(Nonlinearity::composite(0.3, 0.9).is_err());
        assert!(Nonlinearity::finite_time(1.0).is_err());
        assert!(Nonlinearity::finite_time(0.0).is_err());
        assert!(Nonlinearity::saturated(0.0).is_err());
        assert!(eval_flow(&Nonlinearity::Saturated { delta: -1.0 }, 0.5).is_err());
    }

    #[test]
    fn parse_and_display() {
        let nl: Nonlinearity = "composite:0.3:1.7".parse().unwrap();
        assert_eq!(nl, Nonlinearity::CompositeSignum { alpha: 0.3, beta: 1.7 });
        assert_eq!(nl.to_string().parse::<Nonlinearity>().unwrap(), nl);
        assert_eq!("linear".parse::<Nonlinearity>().unwrap(), Nonlinearity::Linear);
        assert_eq!("finite:0.7".parse::<Nonlinearity>().unwrap(), Nonlinearity::FiniteTime { nu: 0.7 });
        assert_eq!("saturated:1".parse::<Nonlinearity>().unwrap(), Nonlinearity::Saturated { delta: 1.0 });
        assert!("composite:0.3".parse::<Nonlinearity>().is_err());
        assert!("cubic".parse::<Nonlinearity>().is_err());
        assert!("finite:1.5".parse::<Nonlinearity>().is_err());
    }

    #[test]
    fn oddness_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for nl in all_kinds() {
            for _ in 0..10_000 {
                let mag = 10f64.powf(rng.gen_range(-8.0..4.0));
                let u = if rng.gen_bool(0.5) { mag } else { -mag };
                let pos = nl.eval(u).unwrap();
                let neg = nl.eval(-u).unwrap();
                assert_eq!(neg.to_bits(), (-pos).to_bits(), "{nl} at {u}");
                assert_eq!(pos.signum(), u.signum(), "{nl} at {u}");
            }
        }
    }

    #[test]
    fn remark_amplification_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let alpha = rng.gen_range(0.05..0.95);
            let beta = rng.gen_range(1.05..3.0);
            let small = rng.gen_range(1e-6..0.999);
            let large = rng.gen_range(1.001..100.0);
            for s in [1.0, -1.0] {
                assert!(sgn_pow(s * small, alpha).unwrap() * s > small);
                assert!(sgn_pow(s * large, beta).unwrap() * s > large);
            }
        }
    }

    #[test]
    fn flows_are_nondecreasing() {
        for nl in all_kinds() {
            let mut prev = f64::NEG_INFINITY;
            for k in -4000..=4000 {
                let u = k as f64 * 1e-3;
                let v = nl.eval(u).unwrap();
                assert!(v >= prev, "{nl} not monotone at {u}");
                if !matches!(nl, Nonlinearity::Saturated { .. }) && k > -4000 {
                    assert!(v > prev, "{nl} not strictly increasing at {u}");
                }
                prev = v;
            }
        }
    }

    #[test]
    fn unit_exponents_give_doubled_linear() {
        let nl = Nonlinearity::composite(1.0, 1.0).unwrap();
        for u in [-3.0, -0.25, 0.0, 1e-7, 42.0] {
            assert_eq!(nl.eval(u).unwrap(), 2.0 * Nonlinearity::Linear.eval(u).unwrap());
        }
        assert!(!nl.is_accelerating());
        assert!(Nonlinearity::composite(0.3, 1.7).unwrap().is_accelerating());
    }
}
