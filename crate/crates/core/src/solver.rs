//! The adaptive-ansatz imaginary-time loop.
//!
//! Each step picks, per qudit, the pool generator with the largest
//! `|⟨[G, H]⟩|`, sets its coefficient to `a = m / (2⟨G²⟩)` (with
//! `⟨[G, H]⟩ = i·m`), and rotates every qudit by `exp(a·Δτ·A)`. All
//! coefficients are computed from the pre-step state before any rotation is
//! applied.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{
    energy_from_marginals, local_fields, marginals, pool_gradients_from_fields, HamiltonianSpec, MarginalTable,
};
use crate::problem::MinDCutInstance;
use crate::qudit::{build_pool, PoolOperator, ProductState};

pub const DEFAULT_DELTA_TAU: f64 = 5e-3;
pub const DEFAULT_MAX_STEPS: usize = 10_000;
pub const DEFAULT_PLATEAU_WINDOW: usize = 2000;
pub const DEFAULT_INIT_NOISE: f64 = 3e-2;

/// Below this `⟨G²⟩` the qudit sits at a fixed point of the generator and
/// its coefficient is 0.
pub const DEGENERATE_SECOND_MOMENT: f64 = 1e-14;

pub const RUN_RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub delta_tau: f64,
    pub max_steps: usize,
    /// Stop once the rounded cost has not changed for this many steps.
    pub plateau_window: usize,
    pub record_every: usize,
    /// Amplitude of the seeded perturbation added to the uniform qudits of
    /// the initial state; 0 starts from the exact symmetric state.
    pub init_noise: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta_tau: DEFAULT_DELTA_TAU,
            max_steps: DEFAULT_MAX_STEPS,
            plateau_window: DEFAULT_PLATEAU_WINDOW,
            record_every: 1,
            init_noise: DEFAULT_INIT_NOISE,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_tau.is_finite() && self.delta_tau > 0.0) {
            return Err(Error::InvalidConfig(format!("delta_tau must be positive, got {}", self.delta_tau)));
        }
        if self.max_steps < 1 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        if self.plateau_window < 1 {
            return Err(Error::InvalidConfig("plateau_window must be at least 1".into()));
        }
        if !(self.init_noise.is_finite() && (0.0..0.5).contains(&self.init_noise)) {
            return Err(Error::InvalidConfig(format!("init_noise must lie in [0, 0.5), got {}", self.init_noise)));
        }
        if self.record_every < 1 {
            return Err(Error::InvalidConfig("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// What one step decided, evaluated on the pre-step state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub energy: f64,
    pub selected: Vec<usize>,
    pub coefficients: Vec<f64>,
}

/// `a = m / (2⟨G²⟩)`, or 0 for a degenerate denominator.
pub fn coefficient_from_moments(commutator: f64, second_moment: f64) -> Result<f64> {
    if !commutator.is_finite() || !second_moment.is_finite() {
        return Err(Error::NonFinite(format!(
            "commutator {commutator} / second moment {second_moment}"
        )));
    }
    if second_moment < DEGENERATE_SECOND_MOMENT {
        return Ok(0.0);
    }
    Ok(commutator / (2.0 * second_moment))
}

fn argmax_abs(values: &[f64]) -> usize {
    let mut best = 0;
    for (l, v) in values.iter().enumerate().skip(1) {
        if v.abs() > values[best].abs() {
            best = l;
        }
    }
    best
}

/// Reusable buffers for one qudit's fields and pool gradients.
struct Scratch {
    fields: Vec<f64>,
    grads: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Self { fields: vec![0.0; d], grads: vec![0.0; d] }
    }

    fn gradients(&mut self, spec: &HamiltonianSpec, marg: &MarginalTable, state: &ProductState, qudit: usize) -> &[f64] {
        local_fields(spec, marg, qudit, &mut self.fields);
        pool_gradients_from_fields(&self.fields, state.qudit(qudit), &mut self.grads);
        &self.grads
    }
}

fn check_pool(pool: &[PoolOperator], state: &ProductState) -> Result<()> {
    if pool.len() != state.dim() || pool.iter().enumerate().any(|(l, op)| op.dim() != state.dim() || op.pivot_level() != l) {
        return Err(Error::InvalidConfig(format!("pool does not match qudit dimension {}", state.dim())));
    }
    Ok(())
}

fn check_state(spec: &HamiltonianSpec, state: &ProductState) -> Result<()> {
    let inst = spec.instance();
    if state.num_qudits() != inst.num_vertices() {
        return Err(Error::DimensionMismatch { expected: inst.num_vertices(), got: state.num_qudits() });
    }
    if state.dim() != inst.num_partitions() {
        return Err(Error::DimensionMismatch { expected: inst.num_partitions(), got: state.dim() });
    }
    Ok(())
}

/// Index of the pool generator with the largest `|m|` for every qudit;
/// lowest index on ties.
pub fn select_generators(spec: &HamiltonianSpec, state: &ProductState, pool: &[PoolOperator]) -> Result<Vec<usize>> {
    check_state(spec, state)?;
    check_pool(pool, state)?;
    let marg = marginals(state);
    let mut scratch = Scratch::new(state.dim());
    Ok((0..state.num_qudits()).map(|i| argmax_abs(scratch.gradients(spec, &marg, state, i))).collect())
}

/// Coefficient of `op` on `qudit` for the current state.
pub fn compute_coefficient(spec: &HamiltonianSpec, state: &ProductState, qudit: usize, op: &PoolOperator) -> Result<f64> {
    let m = crate::expectation::commutator_expectation(spec, state, qudit, op)?;
    coefficient_from_moments(m, op.second_moment(state.qudit(qudit)))
}

fn plan_step(
    spec: &HamiltonianSpec,
    pool: &[PoolOperator],
    state: &ProductState,
    marg: &MarginalTable,
    scratch: &mut Scratch,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = state.num_qudits();
    let mut selected = Vec::with_capacity(n);
    let mut coefficients = Vec::with_capacity(n);
    for i in 0..n {
        let grads = scratch.gradients(spec, marg, state, i);
        let l = argmax_abs(grads);
        let m = grads[l];
        coefficients.push(coefficient_from_moments(m, pool[l].second_moment(state.qudit(i)))?);
        selected.push(l);
    }
    Ok((selected, coefficients))
}

fn apply_plan(pool: &[PoolOperator], state: &mut ProductState, plan: &(Vec<usize>, Vec<f64>), delta_tau: f64) -> Result<()> {
    for (i, (&l, &a)) in plan.0.iter().zip(&plan.1).enumerate() {
        if a != 0.0 {
            state.rotate(i, &pool[l], a * delta_tau)?;
        }
    }
    Ok(())
}

/// Advances `state` by one imaginary-time step of length `delta_tau`.
pub fn step(spec: &HamiltonianSpec, pool: &[PoolOperator], state: &mut ProductState, delta_tau: f64) -> Result<StepInfo> {
    check_state(spec, state)?;
    check_pool(pool, state)?;
    if !(delta_tau.is_finite() && delta_tau > 0.0) {
        return Err(Error::InvalidConfig(format!("delta_tau must be positive, got {delta_tau}")));
    }
    let marg = marginals(state);
    let energy = energy_from_marginals(spec, &marg);
    let plan = plan_step(spec, pool, state, &marg, &mut Scratch::new(state.dim()))?;
    apply_plan(pool, state, &plan, delta_tau)?;
    Ok(StepInfo { energy, selected: plan.0, coefficients: plan.1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Plateau,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    /// `⟨Ψ_s|H|Ψ_s⟩`.
    pub energy: f64,
    /// Total cost of the relaxed rounding of `Ψ_s`.
    pub rounded_cost: f64,
    pub counts: Vec<usize>,
    /// Generators chosen at this step; empty at the terminal point.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: u32,
    pub instance_seed: Option<u64>,
    pub num_vertices: usize,
    pub d: usize,
    pub num_edges: usize,
    pub c_max: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub config: SolverConfig,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Best rounded assignment seen over the whole trajectory.
    pub assignment: Vec<usize>,
    pub best_step: usize,
    pub best_cost: f64,
    pub best_cut_cost: f64,
    pub best_penalty: f64,
    pub counts: Vec<usize>,
    pub feasible: bool,
    pub violated_partitions: usize,
    pub max_violation: usize,
    pub final_energy: f64,
    pub final_rounded_cost: f64,
    pub steps: usize,
    pub stop_reason: StopReason,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run record serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: RunRecord = serde_json::from_str(text).map_err(|e| Error::Format(format!("run record JSON: {e}")))?;
        if rec.version != RUN_RECORD_VERSION {
            return Err(Error::SchemaVersion { what: "run record", found: rec.version, expected: RUN_RECORD_VERSION });
        }
        Ok(rec)
    }
}

/// Runs the solver from the standard initial state, perturbed according to
/// `config.init_noise` and `config.seed`.
pub fn solve(instance: &MinDCutInstance, config: &SolverConfig) -> Result<RunRecord> {
    config.validate()?;
    let initial = ProductState::perturbed_uniform(
        instance.num_vertices(),
        instance.num_partitions(),
        config.init_noise,
        config.seed,
    )?;
    solve_from(instance, config, initial)
}

/// Runs the solver from an explicit initial state.
pub fn solve_from(instance: &MinDCutInstance, config: &SolverConfig, initial: ProductState) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let spec = HamiltonianSpec::new(instance);
    check_state(&spec, &initial)?;
    let pool = build_pool(instance.num_partitions())?;
    let mut scratch = Scratch::new(instance.num_partitions());

    let mut state = initial;
    let mut trajectory = Vec::new();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    let mut last_cost = f64::NAN;
    let mut unchanged = 0usize;
    let mut steps = 0usize;

    let (final_energy, final_rounded_cost, stop_reason) = loop {
        let marg = marginals(&state);
        let energy = energy_from_marginals(&spec, &marg);
        if !energy.is_finite() {
            return Err(Error::NonFinite(format!("energy at step {steps}")));
        }
        let assignment = state.round();
        let cost = instance.total_cost(&assignment)?;
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, steps, assignment.clone()));
        }
        if cost == last_cost {
            unchanged += 1;
        } else {
            unchanged = 0;
        }
        last_cost = cost;

        let stop = if unchanged >= config.plateau_window {
            Some(StopReason::Plateau)
        } else if steps >= config.max_steps {
            Some(StopReason::MaxSteps)
        } else {
            None
        };
        let plan = match stop {
            Some(_) => None,
            None => Some(plan_step(&spec, &pool, &state, &marg, &mut scratch)?),
        };
        if stop.is_some() || steps.is_multiple_of(config.record_every) {
            trajectory.push(TrajectoryPoint {
                step: steps,
                energy,
                rounded_cost: cost,
                counts: instance.partition_counts(&assignment)?,
                selected: plan.as_ref().map(|p| p.0.clone()).unwrap_or_default(),
            });
        }
        match (stop, plan) {
            (Some(reason), _) => break (energy, cost, reason),
            (None, Some(plan)) => {
                apply_plan(&pool, &mut state, &plan, config.delta_tau)?;
                steps += 1;
            }
            (None, None) => unreachable!(),
        }
    };

    let (best_cost, best_step, assignment) = best.expect("at least one step is evaluated");
    let counts = instance.partition_counts(&assignment)?;
    let feas = instance.feasibility_of_counts(&counts);
    let p = instance.penalty();
    Ok(RunRecord {
        version: RUN_RECORD_VERSION,
        instance_seed: instance.seed(),
        num_vertices: instance.num_vertices(),
        d: instance.num_partitions(),
        num_edges: instance.graph().num_edges(),
        c_max: p.c_max,
        lambda1: p.lambda1,
        lambda2: p.lambda2,
        config: config.clone(),
        trajectory,
        best_step,
        best_cost,
        best_cut_cost: instance.cut_cost(&assignment)?,
        best_penalty: instance.penalty_from_counts(&counts),
        assignment,
        counts,
        feasible: feas.feasible,
        violated_partitions: feas.violated_partitions,
        max_violation: feas.max_violation,
        final_energy,
        final_rounded_cost,
        steps,
        stop_reason,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expectation::expected_energy;
    use crate::problem::{generate_instance, Edge, PenaltyConfig, WeightedGraph};

    fn single_edge(weight: u32, d: usize) -> MinDCutInstance {
        let g = WeightedGraph::new(2, vec![Edge { i: 0, j: 1, weight }], None).unwrap();
        MinDCutInstance::new(g, d, PenaltyConfig::none(2)).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { delta_tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { max_steps: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { record_every: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_commutator_gives_zero_coefficient() {
        assert_eq!(coefficient_from_moments(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(coefficient_from_moments(3.0, 1e-15).unwrap(), 0.0);
        assert!(coefficient_from_moments(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn all_zero_gradients_select_first_generator() {
        // every qudit in a basis state: dp/dθ = 0 for every generator
        let inst = single_edge(3, 3);
        let spec = HamiltonianSpec::new(&inst);
        let pool = build_pool(3).unwrap();
        let mut s = ProductState::basis(3, &[0, 2]).unwrap();
        assert_eq!(select_generators(&spec, &s, &pool).unwrap(), vec![0, 0]);
        let before = s.clone();
        let info = step(&spec, &pool, &mut s, DEFAULT_DELTA_TAU).unwrap();
        assert!(info.coefficients.iter().all(|&a| a == 0.0));
        assert_eq!(s, before);
    }

    #[test]
    fn single_step_lowers_energy() {
        let inst = single_edge(1, 3);
        let spec = HamiltonianSpec::new(&inst);
        let pool = build_pool(3).unwrap();
        let mut s = ProductState::uniform(2, 3).unwrap();
        let e0 = expected_energy(&spec, &s).unwrap();
        let info = step(&spec, &pool, &mut s, DEFAULT_DELTA_TAU).unwrap();
        let e1 = expected_energy(&spec, &s).unwrap();
        assert_eq!(info.energy, e0);
        assert!(e1 < e0, "{e1} !< {e0}");
        assert!(s.max_norm_error() < 1e-12);
    }

    #[test]
    fn coefficient_sign_descends() {
        // first-order change −m·a·Δτ must be negative and match a finite difference
        let inst = generate_instance(10, 3, 3, 4).unwrap();
        let spec = HamiltonianSpec::new(&inst);
        let pool = build_pool(3).unwrap();
        let s = ProductState::uniform(10, 3).unwrap();
        let sel = select_generators(&spec, &s, &pool).unwrap();
        for (i, &l) in sel.iter().enumerate() {
            let a = compute_coefficient(&spec, &s, i, &pool[l]).unwrap();
            if a == 0.0 {
                continue;
            }
            let mut moved = s.clone();
            moved.rotate(i, &pool[l], a * 1e-5).unwrap();
            assert!(expected_energy(&spec, &moved).unwrap() < expected_energy(&spec, &s).unwrap());
        }
    }

    #[test]
    fn step_is_deterministic() {
        let inst = generate_instance(30, 5, 5, 8).unwrap();
        let spec = HamiltonianSpec::new(&inst);
        let pool = build_pool(5).unwrap();
        let mut a = ProductState::uniform(30, 5).unwrap();
        let mut b = a.clone();
        for _ in 0..50 {
            step(&spec, &pool, &mut a, DEFAULT_DELTA_TAU).unwrap();
            step(&spec, &pool, &mut b, DEFAULT_DELTA_TAU).unwrap();
        }
        assert_eq!(a.amplitudes(), b.amplitudes());
    }

    #[test]
    fn edgeless_graph_stops_on_plateau() {
        let g = WeightedGraph::new(5, vec![], None).unwrap();
        let inst = MinDCutInstance::new(g, 3, PenaltyConfig::none(2)).unwrap();
        let cfg = SolverConfig { plateau_window: 37, ..Default::default() };
        let rec = solve(&inst, &cfg).unwrap();
        assert_eq!(rec.stop_reason, StopReason::Plateau);
        assert_eq!(rec.steps, 37);
        assert!(rec.trajectory.iter().all(|p| p.energy == 0.0));
    }

    #[test]
    fn solve_improves_and_records() {
        let inst = generate_instance(8, 4, 3, 3).unwrap().with_penalty(PenaltyConfig::from_ratio(5.0, 3)).unwrap();
        let rec = solve(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(rec.config.delta_tau, 5e-3);
        assert!(rec.best_cost <= rec.trajectory[0].rounded_cost);
        assert_eq!(rec.assignment.len(), 8);
        assert_eq!(rec.best_cost, inst.total_cost(&rec.assignment).unwrap());
        assert_eq!(rec.counts.iter().sum::<usize>(), 8);
        assert_eq!(rec.trajectory.last().unwrap().step, rec.steps);
        assert!(rec.trajectory.last().unwrap().selected.is_empty());
        assert_eq!(rec.trajectory.len(), rec.steps + 1);
        let back = RunRecord::from_json(&rec.to_json()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn record_every_downsamples() {
        let inst = generate_instance(20, 5, 3, 1).unwrap();
        let cfg = SolverConfig { record_every: 10, max_steps: 95, plateau_window: 1000, ..Default::default() };
        let rec = solve(&inst, &cfg).unwrap();
        assert_eq!(rec.steps, 95);
        let steps: Vec<usize> = rec.trajectory.iter().map(|p| p.step).collect();
        assert_eq!(steps, (0..=90).step_by(10).chain([95]).collect::<Vec<_>>());
    }

    #[test]
    fn exact_start_stays_label_symmetric() {
        // without noise, labels 1..d-1 never separate and ties favour label 1
        let inst = generate_instance(30, 5, 4, 3).unwrap();
        let cfg = SolverConfig { init_noise: 0.0, ..Default::default() };
        let rec = solve(&inst, &cfg).unwrap();
        assert_eq!(rec.counts[2..].iter().sum::<usize>(), 0, "{:?}", rec.counts);
    }

    #[test]
    fn solve_is_deterministic() {
        let inst = generate_instance(40, 6, 5, 12).unwrap();
        let cfg = SolverConfig { max_steps: 2000, ..Default::default() };
        let mut a = solve(&inst, &cfg).unwrap();
        let mut b = solve(&inst, &cfg).unwrap();
        a.wall_ms = 0.0;
        b.wall_ms = 0.0;
        assert_eq!(a, b);
    }

    #[test]
    fn label_permutation_equivariance() {
        // swap labels 0 and 1 in every qudit of the perturbed start
        for seed in 0..4 {
            let inst = generate_instance(12, 4, 3, seed).unwrap();
            let cfg = SolverConfig { max_steps: 3000, seed, ..Default::default() };
            let base = solve(&inst, &cfg).unwrap();
            let start = ProductState::perturbed_uniform(12, 3, cfg.init_noise, seed).unwrap();
            let qudits: Vec<Vec<f64>> = start.qudits().map(|q| vec![q[1], q[0], q[2]]).collect();
            let swapped = solve_from(&inst, &cfg, ProductState::new(3, qudits).unwrap()).unwrap();
            let mapped: Vec<usize> = base.assignment.iter().map(|&x| [1, 0, 2][x]).collect();
            assert_eq!(swapped.assignment, mapped);
            assert!((swapped.best_cost - base.best_cost).abs() < 1e-9);
        }
    }
}
