//! Reproduction harness: builds seeded scenarios from an [`ExperimentConfig`],
//! runs every configured method from the same initial state on the same
//! graph schedule, and records residual, feasibility and dispersion traces.

pub mod config;
pub mod metrics;
pub mod svg;

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{CostModel, QuadraticCost};
use crate::dynamics::{self, ConvergenceMonitor, SimState, StepMode};
use crate::error::{DynamicsError, ExperimentError};
use crate::graph::{self, GraphSchedule};
use crate::nonlinearity::Nonlinearity;
use crate::oracle::{self, OracleSolution};

pub use config::{ExperimentConfig, MethodConfig, SweepConfig};
pub use metrics::MetricsRecord;
pub use svg::{render_svg, Metric, SvgOptions};

const COST_STREAM: u64 = 1;
const GRAPH_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

pub const PRESET_NAMES: [&str; 3] = ["fig1", "fig2", "tradeoff"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "fig1" => Some(include_str!("../../presets/fig1.toml")),
        "fig2" => Some(include_str!("../../presets/fig2.toml")),
        "tradeoff" => Some(include_str!("../../presets/tradeoff.toml")),
        _ => None,
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let text = preset_text(name).ok_or_else(|| {
        ExperimentError::Config(format!("unknown preset {name:?} (known: {})", PRESET_NAMES.join(", ")))
    })?;
    ExperimentConfig::from_toml(text)
}

/// Independent seed for one component, drawn from its own ChaCha8 stream of
/// the master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub cost: u64,
    pub graph: u64,
    pub init: u64,
}

impl Seeds {
    pub fn resolve(cfg: &ExperimentConfig) -> Self {
        Seeds {
            cost: cfg.seeds.cost.unwrap_or_else(|| derive_seed(cfg.seed, COST_STREAM)),
            graph: cfg.seeds.graph.unwrap_or_else(|| derive_seed(cfg.seed, GRAPH_STREAM)),
            init: cfg.seeds.init.unwrap_or_else(|| derive_seed(cfg.seed, INIT_STREAM)),
        }
    }
}

/// `n` values uniform on `[0, 2 demand / n]`, shifted by a common amount so
/// that they sum to `demand`.
pub fn make_feasible_initial(n: usize, demand: f64, seed: u64) -> Result<Vec<f64>, ExperimentError> {
    if n == 0 {
        return Err(ExperimentError::Config("initial state needs n >= 1".into()));
    }
    if !demand.is_finite() {
        return Err(ExperimentError::Config(format!("demand must be finite, got {demand}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = 2.0 * demand / n as f64;
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * top).collect();
    let shift = (demand - x.iter().sum::<f64>()) / n as f64;
    for v in &mut x {
        *v += shift;
    }
    Ok(x)
}

pub fn sample_costs(cfg: &ExperimentConfig, seed: u64) -> Result<CostModel, ExperimentError> {
    let r = &cfg.cost;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quads = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let a = r.a_max - rng.gen::<f64>() * (r.a_max - r.a_min);
        let c = r.c_max - rng.gen::<f64>() * (r.c_max - r.c_min);
        quads.push(QuadraticCost::new(a, c)?);
    }
    Ok(CostModel::with_shared_penalty(quads, cfg.penalty.to_spec()?)?)
}

pub fn build_schedule(cfg: &ExperimentConfig, seed: u64) -> Result<GraphSchedule, ExperimentError> {
    let g = &cfg.graph;
    if let Some(path) = &g.file {
        let graph = graph::read_edge_list(path)?;
        if graph.n() != cfg.n {
            return Err(ExperimentError::Config(format!(
                "graph file {} has {} agents, config has {}",
                path.display(),
                graph.n(),
                cfg.n
            )));
        }
        return Ok(GraphSchedule::fixed(graph));
    }
    let schedule = if g.schedule_len == 1 {
        GraphSchedule::fixed(graph::connected_erdos_renyi(cfg.n, g.p, seed, g.weights, g.max_attempts)?)
    } else if g.partitioned {
        graph::partitioned_schedule(cfg.n, g.p, g.schedule_len, g.dwell, seed, g.weights, g.max_attempts)?
    } else {
        graph::switching_schedule(cfg.n, g.p, g.schedule_len, g.dwell, seed, g.weights, g.max_attempts)?
    };
    Ok(schedule)
}

/// Everything the methods of one experiment share.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub seeds: Seeds,
    pub model: CostModel,
    pub schedule: GraphSchedule,
    pub x0: Vec<f64>,
    pub oracle: OracleSolution,
    pub demand: f64,
}

pub fn build_scenario(cfg: &ExperimentConfig) -> Result<Scenario, ExperimentError> {
    cfg.validate()?;
    let seeds = Seeds::resolve(cfg);
    let model = sample_costs(cfg, seeds.cost)?;
    let schedule = build_schedule(cfg, seeds.graph)?;
    let x0 = make_feasible_initial(cfg.n, cfg.demand, seeds.init)?;
    let oracle = oracle::solve_with(&model, cfg.demand, &cfg.oracle.tolerances())?;
    Ok(Scenario {
        seeds,
        model,
        schedule,
        x0,
        oracle,
        demand: cfg.demand,
    })
}

impl Scenario {
    /// The shared schedule on the time axis of `method`: discrete methods with
    /// a sampling period see the dwell converted to steps.
    pub fn schedule_for(&self, method: &MethodConfig) -> Result<GraphSchedule, ExperimentError> {
        match (method.mode, method.sample_period) {
            (StepMode::Discrete, Some(tau)) if self.schedule.graphs().len() > 1 => Ok(GraphSchedule::new(
                self.schedule.graphs().to_vec(),
                self.schedule.dwell() / tau,
                self.schedule.policy(),
            )?),
            _ => Ok(self.schedule.clone()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MethodOutcome {
    pub method: MethodConfig,
    pub records: Vec<MetricsRecord>,
    /// State after the last completed step.
    pub final_x: Vec<f64>,
    pub steps_completed: u64,
    /// Largest `|sum x - demand|` over every step, recorded or not.
    pub max_feasibility_gap: f64,
    pub converged_at: Option<u64>,
    pub warning: Option<String>,
    pub abort: Option<DynamicsError>,
}

impl MethodOutcome {
    pub fn terminal_residual(&self) -> Option<f64> {
        metrics::terminal_residual(&self.records)
    }
}

pub fn run_method(
    scenario: &Scenario,
    method: &MethodConfig,
    steps: u64,
    output: &config::OutputConfig,
    convergence: &config::ConvergenceConfig,
) -> Result<MethodOutcome, ExperimentError> {
    let params = method.step_params()?;
    let schedule = scenario.schedule_for(method)?;
    let model = &scenario.model;
    let f_star = scenario.oracle.f_star;
    let dt = method.time_per_step();
    let label = method.label.clone();

    let mut records = Vec::new();
    let mut last_x = scenario.x0.clone();
    let mut steps_completed = 0;
    let mut max_gap: f64 = 0.0;
    let mut monitor = ConvergenceMonitor::new(convergence.tol, convergence.window);
    let mut cost_error = None;

    let state0 = SimState::new(scenario.x0.clone(), model).map_err(|e| ExperimentError::Dynamics {
        label: label.clone(),
        source: e,
    })?;
    let result = dynamics::run_while(state0, &schedule, model, &params, steps, |v| {
        let gap = (v.x.iter().sum::<f64>() - scenario.demand).abs();
        max_gap = max_gap.max(gap);
        let disp = dynamics::dispersion(v.grads);
        monitor.observe(v.k, disp);
        last_x.copy_from_slice(v.x);
        steps_completed = v.k;
        if output.records(v.k, steps) {
            match model.total_cost(v.x) {
                Ok(f) => records.push(MetricsRecord {
                    method_label: label.clone(),
                    step: v.k,
                    time: v.k as f64 * dt,
                    residual: f - f_star,
                    feasibility_gap: gap,
                    dispersion: disp,
                }),
                Err(e) => {
                    cost_error = Some(e);
                    return false;
                }
            }
        }
        true
    });
    if let Some(e) = cost_error {
        return Err(e.into());
    }
    Ok(MethodOutcome {
        method: method.clone(),
        records,
        final_x: last_x,
        steps_completed,
        max_feasibility_gap: max_gap,
        converged_at: monitor.converged_at(),
        warning: params.stability_warning(model),
        abort: result.err(),
    })
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub scenario: Scenario,
    pub outcomes: Vec<MethodOutcome>,
}

impl ExperimentResult {
    pub fn records(&self) -> Vec<MetricsRecord> {
        self.outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect()
    }

    /// First method that stopped on a numerical failure, with its error.
    pub fn first_abort(&self) -> Option<(&str, &DynamicsError)> {
        self.outcomes
            .iter()
            .find_map(|o| o.abort.as_ref().map(|e| (o.method.label.as_str(), e)))
    }

    pub fn outcome(&self, label: &str) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method.label == label)
    }
}

/// Runs every method on one shared scenario, one thread per method. A method
/// that hits a numerical failure keeps the records gathered before it and
/// reports the failure in [`MethodOutcome::abort`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    let scenario = build_scenario(cfg)?;
    let outcomes = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .methods
            .iter()
            .map(|m| {
                let scenario = &scenario;
                s.spawn(move || run_method(scenario, m, cfg.steps, &cfg.output, &cfg.convergence))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("method thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(ExperimentResult { scenario, outcomes })
}

/// Replaces the method list by the grid of `sweep` around the first method.
pub fn expand_sweep(cfg: &ExperimentConfig, sweep: &SweepConfig) -> Result<ExperimentConfig, ExperimentError> {
    let base = cfg
        .methods
        .first()
        .ok_or_else(|| ExperimentError::Config("sweep needs a base method".into()))?;
    let axis = |name: &str, v: &Option<Vec<f64>>| -> Result<(), ExperimentError> {
        match v {
            Some(list) if list.is_empty() => Err(ExperimentError::Config(format!("sweep.{name} is an empty list"))),
            _ => Ok(()),
        }
    };
    axis("alpha", &sweep.alpha)?;
    axis("beta", &sweep.beta)?;
    axis("eta", &sweep.eta)?;
    let (base_alpha, base_beta) = match base.nonlinearity {
        Nonlinearity::CompositeSignum { alpha, beta } => (Some(alpha), Some(beta)),
        _ => (None, None),
    };
    if (sweep.alpha.is_some() || sweep.beta.is_some()) && base_alpha.is_none() {
        return Err(ExperimentError::Config(
            "alpha/beta sweeps need a composite base method".into(),
        ));
    }
    let alphas = sweep.alpha.clone().map_or(vec![base_alpha], |v| v.into_iter().map(Some).collect());
    let betas = sweep.beta.clone().map_or(vec![base_beta], |v| v.into_iter().map(Some).collect());
    let etas = sweep.eta.clone().unwrap_or_else(|| vec![base.eta]);

    let mut methods = Vec::new();
    for &a in &alphas {
        for &b in &betas {
            for &eta in &etas {
                let nonlinearity = match (a, b) {
                    (Some(alpha), Some(beta)) => Nonlinearity::composite(alpha, beta)?,
                    _ => base.nonlinearity,
                };
                let label = match (a, b) {
                    (Some(alpha), Some(beta)) => format!("alpha={alpha} beta={beta} eta={eta}"),
                    _ => format!("{} eta={eta}", base.label),
                };
                methods.push(MethodConfig {
                    label,
                    nonlinearity,
                    eta,
                    mode: base.mode,
                    sample_period: base.sample_period,
                });
            }
        }
    }
    let mut out = cfg.clone();
    out.methods = methods;
    out.sweep = None;
    out.validate()?;
    Ok(out)
}

/// Sweep CSV: the metrics columns prefixed by the grid coordinates of each
/// method (`alpha` and `beta` are empty for non-composite methods).
pub fn write_sweep_csv(outcomes: &[MethodOutcome], path: &Path) -> Result<(), ExperimentError> {
    let file = std::fs::File::create(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["alpha", "beta", "eta"];
    header.extend(metrics::CSV_HEADER);
    w.write_record(&header)?;
    let mut order: Vec<&MethodOutcome> = outcomes.iter().collect();
    order.sort_by(|a, b| a.method.label.cmp(&b.method.label));
    for o in order {
        let (alpha, beta) = match o.method.nonlinearity {
            Nonlinearity::CompositeSignum { alpha, beta } => (metrics::format_real(alpha), metrics::format_real(beta)),
            _ => (String::new(), String::new()),
        };
        let eta = metrics::format_real(o.method.eta);
        for r in metrics::sorted(&o.records) {
            w.write_record([
                alpha.clone(),
                beta.clone(),
                eta.clone(),
                r.method_label.clone(),
                r.step.to_string(),
                metrics::format_real(r.time),
                metrics::format_real(r.residual),
                metrics::format_real(r.feasibility_gap),
                metrics::format_real(r.dispersion),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Final states as `agent,x_star,<method 1>,<method 2>,...`, methods in
/// label order.
pub fn write_state_csv(result: &ExperimentResult, path: &Path) -> Result<(), ExperimentError> {
    let file = std::fs::File::create(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    let mut order: Vec<&MethodOutcome> = result.outcomes.iter().collect();
    order.sort_by(|a, b| a.method.label.cmp(&b.method.label));
    let mut header = vec!["agent".to_string(), "x_star".to_string()];
    header.extend(order.iter().map(|o| o.method.label.clone()));
    w.write_record(&header)?;
    for (i, xs) in result.scenario.oracle.x_star.iter().enumerate() {
        let mut row = vec![i.to_string(), metrics::format_real(*xs)];
        row.extend(order.iter().map(|o| metrics::format_real(o.final_x[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
