//! Per-agent strictly convex costs `f_i(x) = a x^2 + c_lin x` plus an optional
//! convex box penalty, with exact first derivatives.

use serde::{Deserialize, Serialize};

use crate::error::CostError;

/// Overflow-safe `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Overflow-safe logistic `1 / (1 + e^-z)`.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    /// Quadratic coefficient, strictly positive.
    pub a: f64,
    /// Linear coefficient.
    pub c_lin: f64,
}

impl QuadraticCost {
    pub fn new(a: f64, c_lin: f64) -> Result<Self, CostError> {
        let q = QuadraticCost { a, c_lin };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<(), CostError> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(crate::error::DomainError::InvalidParameter {
                name: "a",
                value: self.a,
                expected: "finite a > 0",
            }
            .into());
        }
        if !self.c_lin.is_finite() {
            return Err(crate::error::DomainError::NonFiniteInput(self.c_lin).into());
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.a * x * x + self.c_lin * x
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        2.0 * self.a * x + self.c_lin
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyKind {
    None,
    /// `sigma * max(u, 0)^c`, smooth for `c >= 2`.
    Power { c: u32 },
    /// `(sigma / rho) * ln(1 + e^(rho u))`, a smooth surrogate of `sigma * max(u, 0)`.
    LogSmooth { rho: f64 },
}

/// Box penalty applied symmetrically at `lower` and `upper`:
/// `P(x) = p(x - upper) + p(lower - x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec::none()
    }
}

impl PenaltySpec {
    pub fn none() -> Self {
        PenaltySpec {
            kind: PenaltyKind::None,
            sigma: 0.0,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn log_smooth(rho: f64, sigma: f64, lower: f64, upper: f64) -> Result<Self, CostError> {
        let p = PenaltySpec {
            kind: PenaltyKind::LogSmooth { rho },
            sigma,
            lower,
            upper,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn power(c: u32, sigma: f64, lower: f64, upper: f64) -> Result<Self, CostError> {
        let p = PenaltySpec {
            kind: PenaltyKind::Power { c },
            sigma,
            lower,
            upper,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        use crate::error::DomainError;
        match self.kind {
            PenaltyKind::None => return Ok(()),
            PenaltyKind::Power { c } if c < 2 => return Err(CostError::PowerExponent(c)),
            PenaltyKind::Power { .. } => {}
            PenaltyKind::LogSmooth { rho } => {
                if !(rho > 0.0 && rho.is_finite()) {
                    return Err(DomainError::InvalidParameter {
                        name: "rho",
                        value: rho,
                        expected: "finite rho > 0",
                    }
                    .into());
                }
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(DomainError::InvalidParameter {
                name: "sigma",
                value: self.sigma,
                expected: "finite sigma >= 0",
            }
            .into());
        }
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(CostError::InvertedBounds {
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(())
    }

    /// One-sided penalty `p(u)` applied to a bound violation `u`.
    #[inline]
    fn side(&self, u: f64) -> f64 {
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::Power { c } => self.sigma * u.max(0.0).powi(c as i32),
            PenaltyKind::LogSmooth { rho } => self.sigma / rho * softplus(rho * u),
        }
    }

    #[inline]
    fn side_derivative(&self, u: f64) -> f64 {
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::Power { c } => self.sigma * c as f64 * u.max(0.0).powi(c as i32 - 1),
            PenaltyKind::LogSmooth { rho } => self.sigma * logistic(rho * u),
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if let PenaltyKind::None = self.kind {
            return 0.0;
        }
        self.side(x - self.upper) + self.side(self.lower - x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        if let PenaltyKind::None = self.kind {
            return 0.0;
        }
        self.side_derivative(x - self.upper) - self.side_derivative(self.lower - x)
    }

    /// Global bound on `P''`, or `None` when the curvature is unbounded.
    pub fn curvature_bound(&self) -> Option<f64> {
        match self.kind {
            PenaltyKind::None => Some(0.0),
            PenaltyKind::Power { c: 2 } => Some(2.0 * 2.0 * self.sigma),
            PenaltyKind::Power { .. } => None,
            PenaltyKind::LogSmooth { rho } => Some(2.0 * self.sigma * rho / 4.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCost {
    pub quadratic: QuadraticCost,
    #[serde(default)]
    pub penalty: PenaltySpec,
}

impl AgentCost {
    pub fn new(quadratic: QuadraticCost, penalty: PenaltySpec) -> Result<Self, CostError> {
        quadratic.validate()?;
        penalty.validate()?;
        Ok(AgentCost { quadratic, penalty })
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.quadratic.value(x) + self.penalty.value(x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.quadratic.derivative(x) + self.penalty.derivative(x)
    }
}

/// Separable objective `F(x) = sum_i f_i(x_i) + P_i(x_i)`.
///
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    agents: Vec<AgentCost>,
}

impl CostModel {
    pub fn new(agents: Vec<AgentCost>) -> Result<Self, CostError> {
        for a in &agents {
            a.quadratic.validate()?;
            a.penalty.validate()?;
        }
        Ok(CostModel { agents })
    }

    /// All agents share one penalty specification.
    pub fn with_shared_penalty(
        quadratics: impl IntoIterator<Item = QuadraticCost>,
        penalty: PenaltySpec,
    ) -> Result<Self, CostError> {
        CostModel::new(
            quadratics
                .into_iter()
                .map(|quadratic| AgentCost { quadratic, penalty })
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentCost] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> Result<&AgentCost, CostError> {
        self.agents.get(i).ok_or(CostError::IndexOutOfRange {
            index: i,
            n: self.agents.len(),
        })
    }

    pub fn eval_cost(&self, i: usize, x: f64) -> Result<f64, CostError> {
        Ok(self.agent(i)?.value(x))
    }

    pub fn eval_grad(&self, i: usize, x: f64) -> Result<f64, CostError> {
        Ok(self.agent(i)?.derivative(x))
    }

    fn check_len(&self, got: usize) -> Result<(), CostError> {
        if got != self.agents.len() {
            return Err(CostError::LengthMismatch {
                expected: self.agents.len(),
                got,
            });
        }
        Ok(())
    }

    pub fn total_cost(&self, x: &[f64]) -> Result<f64, CostError> {
        self.check_len(x.len())?;
        Ok(self.agents.iter().zip(x).map(|(a, &xi)| a.value(xi)).sum())
    }

    /// Writes `df_i/dx_i (x_i)` for every agent into `out`.
    pub fn gradients_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), CostError> {
        self.check_len(x.len())?;
        self.check_len(out.len())?;
        for ((g, a), &xi) in out.iter_mut().zip(&self.agents).zip(x) {
            *g = a.derivative(xi);
        }
        Ok(())
    }

    pub fn gradients(&self, x: &[f64]) -> Result<Vec<f64>, CostError> {
        let mut out = vec![0.0; self.agents.len()];
        self.gradients_into(x, &mut out)?;
        Ok(out)
    }

    /// Lipschitz constant of the gradient: `2 max a_i` plus the largest
    /// penalty curvature bound. `None` if some penalty has unbounded curvature.
    pub fn gradient_lipschitz(&self) -> Option<f64> {
        let mut l: f64 = 0.0;
        for a in &self.agents {
            l = l.max(2.0 * a.quadratic.a + a.penalty.curvature_bound()?);
        }
        Some(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(a: f64, c: f64, p: PenaltySpec) -> CostModel {
        CostModel::new(vec![AgentCost::new(QuadraticCost::new(a, c).unwrap(), p).unwrap()]).unwrap()
    }

    #[test]
    fn cost_examples() {
        let m = single(1.0, 0.0, PenaltySpec::none());
        assert_eq!(m.eval_cost(0, 3.0).unwrap(), 9.0);
        assert!(QuadraticCost::new(0.0, 1.0).is_err());
        assert!(m.eval_cost(1, 0.0).is_err());

        // 100 + ln 2 + softplus(-10), 40-digit reference
        let m = single(1.0, 0.0, PenaltySpec::log_smooth(1.0, 1.0, 0.0, 10.0).unwrap());
        let expected = 100.693_192_579_459_162_17;
        assert!((m.eval_cost(0, 10.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn grad_examples() {
        let m = single(0.3, 10.0, PenaltySpec::none());
        assert!((m.eval_grad(0, 1.0).unwrap() - 10.6).abs() < 1e-15);

        let m = single(0.3, 10.0, PenaltySpec::log_smooth(1.0, 1.0, 20.0, 105.0).unwrap());
        assert_eq!(m.eval_grad(0, 62.5).unwrap(), 47.5);

        // 2 + s(0) - s(-2), 40-digit reference
        let m = single(1.0, 0.0, PenaltySpec::log_smooth(2.0, 1.0, 0.0, 1.0).unwrap());
        let expected = 2.380_797_077_977_882_44;
        assert!((m.eval_grad(0, 1.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn total_cost_and_length_checks() {
        let q = QuadraticCost::new(1.0, 0.0).unwrap();
        let m = CostModel::with_shared_penalty([q, q], PenaltySpec::none()).unwrap();
        assert_eq!(m.total_cost(&[2.0, 2.0]).unwrap(), 8.0);
        assert_eq!(
            m.total_cost(&[1.0]),
            Err(CostError::LengthMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn penalty_validation() {
        assert!(PenaltySpec::power(1, 1.0, 0.0, 1.0).is_err());
        assert!(PenaltySpec::power(2, 1.0, 1.0, 1.0).is_err());
        assert!(PenaltySpec::log_smooth(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(PenaltySpec::log_smooth(1.0, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn log_smooth_gap_bounded_by_ln2_over_rho() {
        for &rho in &[0.5, 1.0, 4.0, 50.0] {
            let sigma = 1.7;
            let p = PenaltySpec::log_smooth(rho, sigma, -1e9, 0.0).unwrap();
            let bound = sigma * std::f64::consts::LN_2 / rho;
            let mut worst: f64 = 0.0;
            for k in -20_000..=20_000 {
                let u = k as f64 * 1e-3;
                let gap = (p.value(u) - sigma * u.max(0.0)).abs();
                assert!(gap <= bound * (1.0 + 1e-12), "rho {rho} u {u}");
                worst = worst.max(gap);
            }
            assert!((p.value(0.0) - bound).abs() < 1e-12);
            assert!((worst - bound).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_finite_for_extreme_arguments() {
        let p = PenaltySpec::log_smooth(100.0, 1.0, 0.0, 1.0).unwrap();
        for x in [-100.0, -50.0, 0.5, 51.0, 101.0] {
            assert!(p.derivative(x).is_finite());
            assert!(p.value(x).is_finite());
        }
    }

    #[test]
    fn gradient_strictly_increasing_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let penalties = [
            PenaltySpec::none(),
            PenaltySpec::log_smooth(1.0, 1.0, 20.0, 105.0).unwrap(),
            PenaltySpec::power(3, 2.0, 20.0, 105.0).unwrap(),
        ];
        for p in penalties {
            for _ in 0..20 {
                let a = rng.gen_range(1e-3..0.3);
                let c = rng.gen_range(0.0..10.0);
                let m = single(a, c, p);
                let mut prev = f64::NEG_INFINITY;
                for k in -200..=400 {
                    let g = m.eval_grad(0, k as f64 * 0.5).unwrap();
                    assert!(g > prev);
                    prev = g;
                }
            }
        }
    }

    #[test]
    fn lipschitz_bound() {
        let q = QuadraticCost::new(0.25, 1.0).unwrap();
        let m = CostModel::with_shared_penalty([q], PenaltySpec::log_smooth(1.0, 1.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(m.gradient_lipschitz(), Some(0.5 + 0.5));
        let m = CostModel::with_shared_penalty([q], PenaltySpec::power(4, 1.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(m.gradient_lipschitz(), None);
    }
}
