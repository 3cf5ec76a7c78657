//! Centralized reference solver.
//!
//! At the optimum every marginal cost equals a common multiplier `lambda`.
//! Each agent's gradient is strictly increasing, so `x_i(lambda)` is found by
//! bisection, and the total `S(lambda) = sum_i x_i(lambda)` is strictly
//! increasing as well, so an outer bisection matches it to the demand.

use crate::cost::CostModel;
use crate::error::OracleError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleTolerances {
    /// `|S(lambda) - demand| <= feas_rel * (1 + |demand|)`.
    pub feas_rel: f64,
    /// `|grad_i(x) - lambda| <= inner_rel * (1 + |lambda|)`.
    pub inner_rel: f64,
    pub max_iterations: usize,
}

impl Default for OracleTolerances {
    fn default() -> Self {
        OracleTolerances {
            feas_rel: 1e-9,
            inner_rel: 1e-12,
            max_iterations: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub x_star: Vec<f64>,
    pub lambda_star: f64,
    pub f_star: f64,
    /// Outer bisection iterations.
    pub iterations: usize,
    /// `max_i |grad_i(x*_i) - lambda*|`.
    pub residual_kkt: f64,
    /// `|sum x* - demand|`.
    pub feasibility_gap: f64,
}

impl OracleSolution {
    /// Largest minus smallest marginal cost at `x*`.
    pub fn gradient_spread(&self, model: &CostModel) -> Result<f64, OracleError> {
        Ok(crate::dynamics::dispersion(&model.gradients(&self.x_star)?))
    }
}

pub fn invert_gradient(model: &CostModel, i: usize, lambda: f64) -> Result<f64, OracleError> {
    invert_gradient_with(model, i, lambda, &OracleTolerances::default())
}

/// Unique `x` with `grad_i(x) = lambda`, by geometric bracketing around the
/// unconstrained quadratic root followed by bisection.
pub fn invert_gradient_with(model: &CostModel, i: usize, lambda: f64, tol: &OracleTolerances) -> Result<f64, OracleError> {
    let agent = *model.agent(i)?;
    let grad = |x: f64| agent.derivative(x);
    let target_tol = tol.inner_rel * (1.0 + lambda.abs());
    let x0 = (lambda - agent.quadratic.c_lin) / (2.0 * agent.quadratic.a);
    let bracket_err = || OracleError::Bracket {
        what: format!("gradient of agent {i} at lambda = {lambda}"),
    };
    if !x0.is_finite() {
        return Err(bracket_err());
    }
    let g0 = grad(x0);
    if (g0 - lambda).abs() <= target_tol {
        return Ok(x0);
    }
    let mut step = 1.0 + x0.abs();
    let (mut lo, mut hi);
    if g0 < lambda {
        lo = x0;
        hi = x0 + step;
        while grad(hi) < lambda {
            lo = hi;
            step *= 2.0;
            hi = x0 + step;
            if !hi.is_finite() {
                return Err(bracket_err());
            }
        }
    } else {
        hi = x0;
        lo = x0 - step;
        while grad(lo) > lambda {
            hi = lo;
            step *= 2.0;
            lo = x0 - step;
            if !lo.is_finite() {
                return Err(bracket_err());
            }
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // bracket exhausted at machine resolution
            return Ok(if (grad(lo) - lambda).abs() <= (grad(hi) - lambda).abs() { lo } else { hi });
        }
        let g = grad(mid);
        if !g.is_finite() {
            return Err(bracket_err());
        }
        if (g - lambda).abs() <= target_tol {
            return Ok(mid);
        }
        if g < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

fn allocation(model: &CostModel, lambda: f64, tol: &OracleTolerances) -> Result<Vec<f64>, OracleError> {
    (0..model.n()).map(|i| invert_gradient_with(model, i, lambda, tol)).collect()
}

pub fn solve(model: &CostModel, total_demand: f64) -> Result<OracleSolution, OracleError> {
    solve_with(model, total_demand, &OracleTolerances::default())
}

pub fn solve_with(model: &CostModel, total_demand: f64, tol: &OracleTolerances) -> Result<OracleSolution, OracleError> {
    if !total_demand.is_finite() {
        return Err(OracleError::NonFiniteDemand(total_demand));
    }
    let n = model.n();
    if n == 0 {
        return Err(OracleError::Bracket {
            what: "empty model".to_string(),
        });
    }
    let share = total_demand / n as f64;
    let span = 10.0 * share.abs().max(1.0);
    let grads_at = |x: f64| -> Result<Vec<f64>, OracleError> { Ok((0..n).map(|i| model.eval_grad(i, x)).collect::<Result<_, _>>()?) };
    let mut lam_lo = grads_at(share - span)?.into_iter().fold(f64::INFINITY, f64::min);
    let mut lam_hi = grads_at(share + span)?.into_iter().fold(f64::NEG_INFINITY, f64::max);

    let total = |lambda: f64| -> Result<f64, OracleError> { Ok(allocation(model, lambda, tol)?.iter().sum()) };
    let bracket_err = || OracleError::Bracket {
        what: format!("multiplier for demand {total_demand}"),
    };

    let mut width = (lam_hi - lam_lo).abs().max(1.0);
    while total(lam_lo)? > total_demand {
        lam_lo -= width;
        width *= 2.0;
        if !lam_lo.is_finite() {
            return Err(bracket_err());
        }
    }
    let mut width = (lam_hi - lam_lo).abs().max(1.0);
    while total(lam_hi)? < total_demand {
        lam_hi += width;
        width *= 2.0;
        if !lam_hi.is_finite() {
            return Err(bracket_err());
        }
    }

    let feas_tol = tol.feas_rel * (1.0 + total_demand.abs());
    let mut iterations = 0;
    let mut lambda = 0.5 * (lam_lo + lam_hi);
    let mut x = allocation(model, lambda, tol)?;
    loop {
        iterations += 1;
        let s: f64 = x.iter().sum();
        if (s - total_demand).abs() <= feas_tol || iterations >= tol.max_iterations {
            break;
        }
        if s < total_demand {
            lam_lo = lambda;
        } else {
            lam_hi = lambda;
        }
        let mid = 0.5 * (lam_lo + lam_hi);
        if mid <= lam_lo || mid >= lam_hi {
            break;
        }
        lambda = mid;
        x = allocation(model, lambda, tol)?;
    }

    let feasibility_gap = (x.iter().sum::<f64>() - total_demand).abs();
    let residual_kkt = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| model.eval_grad(i, xi).map(|g| (g - lambda).abs()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let f_star = model.total_cost(&x)?;
    Ok(OracleSolution {
        x_star: x,
        lambda_star: lambda,
        f_star,
        iterations,
        residual_kkt,
        feasibility_gap,
    })
}

/// Closed-form optimum of a penalty-free quadratic model:
/// `lambda* = (demand + sum c_i / 2a_i) / sum 1 / 2a_i`, `x_i* = (lambda* - c_i) / 2a_i`.
pub fn closed_form_quadratic(model: &CostModel, total_demand: f64) -> (f64, Vec<f64>) {
    let inv: f64 = model.agents().iter().map(|a| 1.0 / (2.0 * a.quadratic.a)).sum();
    let shift: f64 = model
        .agents()
        .iter()
        .map(|a| a.quadratic.c_lin / (2.0 * a.quadratic.a))
        .sum();
    let lambda = (total_demand + shift) / inv;
    let x = model
        .agents()
        .iter()
        .map(|a| (lambda - a.quadratic.c_lin) / (2.0 * a.quadratic.a))
        .collect();
    (lambda, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{PenaltySpec, QuadraticCost};

    fn model(params: &[(f64, f64)], penalty: PenaltySpec) -> CostModel {
        CostModel::with_shared_penalty(params.iter().map(|&(a, c)| QuadraticCost::new(a, c).unwrap()), penalty).unwrap()
    }

    #[test]
    fn inversion_examples() {
        let m = model(&[(1.0, 0.0), (0.5, 3.0)], PenaltySpec::none());
        assert!((invert_gradient(&m, 0, 4.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(invert_gradient(&m, 1, 3.0).unwrap().abs() < 1e-12);
        assert!(invert_gradient(&m, 2, 3.0).is_err());
    }

    #[test]
    fn inversion_with_penalty_hits_target() {
        let m = model(&[(0.05, 2.0)], PenaltySpec::log_smooth(1.0, 1.0, 20.0, 105.0).unwrap());
        for lambda in [-50.0, 0.0, 3.7, 12.5, 40.0, 500.0] {
            let x = invert_gradient(&m, 0, lambda).unwrap();
            let g = m.eval_grad(0, x).unwrap();
            assert!((g - lambda).abs() <= 1e-12 * (1.0 + lambda.abs()), "{lambda}: {g}");
        }
    }

    #[test]
    fn symmetric_pair() {
        let m = model(&[(1.0, 0.0), (1.0, 0.0)], PenaltySpec::none());
        let s = solve(&m, 4.0).unwrap();
        assert!((s.x_star[0] - 2.0).abs() < 1e-9 && (s.x_star[1] - 2.0).abs() < 1e-9);
        assert!((s.lambda_star - 4.0).abs() < 1e-8);
        assert!((s.f_star - 8.0).abs() < 1e-8);
    }

    #[test]
    fn matches_closed_form() {
        let m = model(&[(0.1, 3.0), (0.25, 0.5), (0.02, 9.0), (0.3, 7.5)], PenaltySpec::none());
        let s = solve(&m, 300.0).unwrap();
        let (lambda, x) = closed_form_quadratic(&m, 300.0);
        assert!((s.lambda_star - lambda).abs() <= 1e-8 * lambda.abs());
        for (a, b) in s.x_star.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn negative_demand_and_far_brackets() {
        let m = model(&[(0.001, 10.0), (0.3, 0.0)], PenaltySpec::none());
        for demand in [-1e5, -3.0, 0.0, 1e6] {
            let s = solve(&m, demand).unwrap();
            assert!(s.feasibility_gap <= 1e-9 * (1.0 + demand.abs()), "{demand}");
        }
        assert!(matches!(solve(&m, f64::NAN), Err(OracleError::NonFiniteDemand(_))));
    }
}
