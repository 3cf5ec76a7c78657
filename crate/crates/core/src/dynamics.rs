//! Update engine for the signum-accelerated allocation dynamics.
//!
//! Every agent `i` moves against the weighted sum of `phi(g_i - g_j)` over its
//! neighbours, where `g` is the vector of local marginal costs. Each step is
//! assembled edge by edge: the flow on edge `(i, j)` is computed once and
//! applied with opposite signs at the two endpoints, so `sum_i x_i` only
//! changes by floating-point rounding.

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::DynamicsError;
use crate::graph::{GraphSchedule, WeightedGraph};
use crate::nonlinearity::{sgn_pow, Nonlinearity};

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    x: Vec<f64>,
    k: u64,
    t: f64,
    grads: Vec<f64>,
}

impl SimState {
    pub fn new(x: Vec<f64>, model: &CostModel) -> Result<Self, DynamicsError> {
        if x.len() != model.n() {
            return Err(DynamicsError::Dimension {
                what: "state",
                expected: model.n(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { step: 0 });
        }
        let grads = model.gradients(&x)?;
        Ok(SimState { x, k: 0, t: 0.0, grads })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn into_x(self) -> Vec<f64> {
        self.x
    }

    /// Marginal costs `df_i/dx_i` at the current `x`.
    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn total(&self) -> f64 {
        self.x.iter().sum()
    }

    fn commit(&mut self, x: Vec<f64>, model: &CostModel, t: f64) -> Result<(), DynamicsError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { step: self.k + 1 });
        }
        model.gradients_into(&x, &mut self.grads)?;
        if self.grads.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { step: self.k + 1 });
        }
        self.x = x;
        self.k += 1;
        self.t = t;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StepMode {
    /// `x(k+1) = x(k) - eta * sum_j W_ij phi(g_i - g_j)`; time advances by one per step.
    Discrete,
    /// Explicit Euler on the continuous flow with step `h` seconds.
    ContinuousEuler { h: f64 },
    /// Classical four-stage Runge-Kutta on the continuous flow.
    ContinuousRk4 { h: f64 },
}

impl StepMode {
    pub fn is_continuous(&self) -> bool {
        !matches!(self, StepMode::Discrete)
    }

    /// Simulated time covered by one step.
    pub fn dt(&self) -> f64 {
        match *self {
            StepMode::Discrete => 1.0,
            StepMode::ContinuousEuler { h } | StepMode::ContinuousRk4 { h } => h,
        }
    }
}

impl std::fmt::Display for StepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepMode::Discrete => write!(f, "discrete"),
            StepMode::ContinuousEuler { h } => write!(f, "euler:{h}"),
            StepMode::ContinuousRk4 { h } => write!(f, "rk4:{h}"),
        }
    }
}

impl std::str::FromStr for StepMode {
    type Err = String;

    /// `discrete`, `euler:<h>` (alias `continuous:<h>`) or `rk4:<h>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let h = |t: &str| -> Result<f64, String> {
            match t.parse::<f64>() {
                Ok(h) if h > 0.0 && h.is_finite() => Ok(h),
                _ => Err(format!("invalid integrator step in {s:?}")),
            }
        };
        match parts.as_slice() {
            ["discrete"] => Ok(StepMode::Discrete),
            ["euler", v] | ["continuous", v] => Ok(StepMode::ContinuousEuler { h: h(v)? }),
            ["rk4", v] => Ok(StepMode::ContinuousRk4 { h: h(v)? }),
            _ => Err(format!("unknown step mode {s:?}")),
        }
    }
}

impl TryFrom<String> for StepMode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<StepMode> for String {
    fn from(m: StepMode) -> String {
        m.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    pub eta: f64,
    pub nl: Nonlinearity,
    pub mode: StepMode,
}

impl StepParams {
    pub fn new(eta: f64, nl: Nonlinearity, mode: StepMode) -> Result<Self, DynamicsError> {
        let p = StepParams { eta, nl, mode };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(DynamicsError::InvalidParameter {
                name: "eta",
                value: self.eta,
            });
        }
        match self.mode {
            StepMode::Discrete => {}
            StepMode::ContinuousEuler { h } | StepMode::ContinuousRk4 { h } => {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(DynamicsError::InvalidParameter { name: "h", value: h });
                }
            }
        }
        self.nl.validate()?;
        Ok(())
    }

    /// Warning text when `eta` exceeds the gradient-descent bound `1/L`.
    /// Advisory only; the step functions never refuse to run.
    pub fn stability_warning(&self, model: &CostModel) -> Option<String> {
        let l = model.gradient_lipschitz()?;
        if l > 0.0 && self.eta > 1.0 / l {
            Some(format!(
                "eta = {} exceeds 1/L = {:.6} (L = {:.6})",
                self.eta,
                1.0 / l,
                l
            ))
        } else {
            None
        }
    }
}

fn check_dims(n: usize, g: &WeightedGraph) -> Result<(), DynamicsError> {
    if g.n() != n {
        return Err(DynamicsError::Dimension {
            what: "graph",
            expected: n,
            got: g.n(),
        });
    }
    Ok(())
}

fn check_model(n: usize, model: &CostModel) -> Result<(), DynamicsError> {
    if model.n() != n {
        return Err(DynamicsError::Dimension {
            what: "cost model",
            expected: n,
            got: model.n(),
        });
    }
    Ok(())
}

/// `W_ij * phi(g_i - g_j)` for every stored edge, in edge order.
pub fn edge_flows(state: &SimState, g: &WeightedGraph, nl: &Nonlinearity) -> Result<Vec<f64>, DynamicsError> {
    check_dims(state.n(), g)?;
    nl.validate()?;
    flows_from_grads(&state.grads, g, nl)
}

fn flows_from_grads(grads: &[f64], g: &WeightedGraph, nl: &Nonlinearity) -> Result<Vec<f64>, DynamicsError> {
    g.edges()
        .iter()
        .map(|e| Ok(e.w * nl.eval(grads[e.i] - grads[e.j])?))
        .collect()
}

/// Adds `-scale * flow` at `i` and `+scale * flow` at `j` for every edge.
fn accumulate(delta: &mut [f64], grads: &[f64], g: &WeightedGraph, nl: &Nonlinearity, scale: f64) -> Result<(), DynamicsError> {
    for e in g.edges() {
        let f = scale * e.w * nl.eval(grads[e.i] - grads[e.j])?;
        delta[e.i] -= f;
        delta[e.j] += f;
    }
    Ok(())
}

pub fn step_discrete(state: &mut SimState, g: &WeightedGraph, model: &CostModel, p: &StepParams) -> Result<(), DynamicsError> {
    if p.mode != StepMode::Discrete {
        return Err(DynamicsError::WrongMode);
    }
    check_dims(state.n(), g)?;
    check_model(state.n(), model)?;
    let mut delta = vec![0.0; state.n()];
    accumulate(&mut delta, &state.grads, g, &p.nl, p.eta)?;
    let x: Vec<f64> = state.x.iter().zip(&delta).map(|(x, d)| x + d).collect();
    let t = (state.k + 1) as f64;
    state.commit(x, model, t)
}

pub fn step_continuous(state: &mut SimState, g: &WeightedGraph, model: &CostModel, p: &StepParams) -> Result<(), DynamicsError> {
    check_dims(state.n(), g)?;
    check_model(state.n(), model)?;
    let n = state.n();
    let x = match p.mode {
        StepMode::Discrete => return Err(DynamicsError::WrongMode),
        StepMode::ContinuousEuler { h } => {
            let mut delta = vec![0.0; n];
            accumulate(&mut delta, &state.grads, g, &p.nl, p.eta * h)?;
            state.x.iter().zip(&delta).map(|(x, d)| x + d).collect::<Vec<_>>()
        }
        StepMode::ContinuousRk4 { h } => {
            // stage increments are each built from antisymmetric edge flows
            let stage = |base: &[f64], offset: Option<(&[f64], f64)>| -> Result<Vec<f64>, DynamicsError> {
                let point: Vec<f64> = match offset {
                    None => base.to_vec(),
                    Some((k, c)) => base.iter().zip(k).map(|(x, d)| x + c * d).collect(),
                };
                let grads = model.gradients(&point)?;
                let mut d = vec![0.0; n];
                accumulate(&mut d, &grads, g, &p.nl, p.eta)?;
                Ok(d)
            };
            let x0 = state.x.clone();
            let k1 = {
                let mut d = vec![0.0; n];
                accumulate(&mut d, &state.grads, g, &p.nl, p.eta)?;
                d
            };
            let k2 = stage(&x0, Some((&k1, h / 2.0)))?;
            let k3 = stage(&x0, Some((&k2, h / 2.0)))?;
            let k4 = stage(&x0, Some((&k3, h)))?;
            (0..n)
                .map(|i| x0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    };
    let t = (state.k + 1) as f64 * p.mode.dt();
    state.commit(x, model, t)
}

/// Advances one step in whichever mode `p` selects.
pub fn step(state: &mut SimState, g: &WeightedGraph, model: &CostModel, p: &StepParams) -> Result<(), DynamicsError> {
    match p.mode {
        StepMode::Discrete => step_discrete(state, g, model, p),
        _ => step_continuous(state, g, model, p),
    }
}

/// Read-only view handed to run observers after every step.
#[derive(Clone, Copy, Debug)]
pub struct StepView<'a> {
    pub k: u64,
    pub t: f64,
    pub x: &'a [f64],
    pub grads: &'a [f64],
    /// Index of the schedule graph used for this step.
    pub graph_id: usize,
}

/// Iterates `steps` updates, picking the active graph from `schedule` at the
/// start of each step and calling `observer` after each one.
pub fn run<F>(
    state0: SimState,
    schedule: &GraphSchedule,
    model: &CostModel,
    p: &StepParams,
    steps: u64,
    mut observer: F,
) -> Result<SimState, DynamicsError>
where
    F: FnMut(&StepView<'_>),
{
    run_while(state0, schedule, model, p, steps, |v| {
        observer(v);
        true
    })
}

/// Like [`run`], but stops early as soon as `observer` returns `false`.
pub fn run_while<F>(
    state0: SimState,
    schedule: &GraphSchedule,
    model: &CostModel,
    p: &StepParams,
    steps: u64,
    mut observer: F,
) -> Result<SimState, DynamicsError>
where
    F: FnMut(&StepView<'_>) -> bool,
{
    p.validate()?;
    check_model(state0.n(), model)?;
    if schedule.n() != state0.n() {
        return Err(DynamicsError::Dimension {
            what: "schedule",
            expected: state0.n(),
            got: schedule.n(),
        });
    }
    let mut state = state0;
    for _ in 0..steps {
        let graph_id = schedule.active_index(state.t);
        step(&mut state, &schedule.graphs()[graph_id], model, p)?;
        let keep_going = observer(&StepView {
            k: state.k,
            t: state.t,
            x: &state.x,
            grads: &state.grads,
            graph_id,
        });
        if !keep_going {
            break;
        }
    }
    Ok(state)
}

/// `max_i g_i - min_i g_i`; zero exactly when all marginal costs agree.
pub fn gradient_dispersion(state: &SimState) -> f64 {
    dispersion(&state.grads)
}

pub fn dispersion(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Rate of decrease of the objective along the continuous flow at the current
/// state: `sum_edges W_ij u phi(u)`, `u = g_i - g_j`, times `eta`.
pub fn dissipation(state: &SimState, g: &WeightedGraph, nl: &Nonlinearity, eta: f64) -> Result<f64, DynamicsError> {
    check_dims(state.n(), g)?;
    let flows = flows_from_grads(&state.grads, g, nl)?;
    Ok(eta
        * g.edges()
            .iter()
            .zip(flows)
            .map(|(e, f)| (state.grads[e.i] - state.grads[e.j]) * f)
            .sum::<f64>())
}

/// Both sides of the summation identity
/// `sum_i phi_i sum_j W_ij sgn^p(phi_j - phi_i) = -1/2 sum_{i,j} W_ij |phi_i - phi_j|^(p+1)`.
///
/// The left side runs over all ordered pairs of the dense symmetric adjacency;
/// the right side runs over stored edges (each unordered edge stands for both
/// ordered pairs, cancelling the `1/2`).
pub fn lemma4_lhs_rhs(phi: &[f64], g: &WeightedGraph, p: f64) -> Result<(f64, f64), DynamicsError> {
    let n = g.n();
    if phi.len() != n {
        return Err(DynamicsError::Dimension {
            what: "phi",
            expected: n,
            got: phi.len(),
        });
    }
    let w = g.adjacency();
    let mut lhs = 0.0;
    for i in 0..n {
        let mut inner = 0.0;
        for j in 0..n {
            let wij = w[i * n + j];
            if wij != 0.0 {
                inner += wij * sgn_pow(phi[j] - phi[i], p)?;
            }
        }
        lhs += phi[i] * inner;
    }
    let mut rhs = 0.0;
    for e in g.edges() {
        rhs -= e.w * (phi[e.i] - phi[e.j]).abs().powf(p + 1.0);
    }
    Ok((lhs, rhs))
}

/// Flags convergence once the dispersion stays below `tol` for `window`
/// consecutive observations.
#[derive(Clone, Debug)]
pub struct ConvergenceMonitor {
    tol: f64,
    window: u64,
    run: u64,
    converged_at: Option<u64>,
}

impl Default for ConvergenceMonitor {
    fn default() -> Self {
        ConvergenceMonitor::new(1e-8, 100)
    }
}

impl ConvergenceMonitor {
    pub fn new(tol: f64, window: u64) -> Self {
        ConvergenceMonitor {
            tol,
            window,
            run: 0,
            converged_at: None,
        }
    }

    pub fn observe(&mut self, k: u64, dispersion: f64) {
        if dispersion < self.tol {
            self.run += 1;
            if self.run >= self.window && self.converged_at.is_none() {
                self.converged_at = Some(k);
            }
        } else {
            self.run = 0;
        }
    }

    /// Step at which the window of small dispersion was first completed.
    pub fn converged_at(&self) -> Option<u64> {
        self.converged_at
    }
}
