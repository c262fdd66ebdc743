//! Frontier strategies over the biobjective model: uniform-weight sweeps,
//! the adaptive weighted-sum method, and ε-constraint sweeps.
//!
//! Every method scalarizes into single-objective subproblems solved by
//! [`crate::mip::branch_and_bound`], runs in either baseline mode (quadratic
//! caps enforced by outer cuts) or McCormick-lifted mode, and honors an
//! optional wall-clock cap that covers all subproblems including lifting
//! overhead.  Objectives one and two are cost and emissions; both are
//! minimized on coordinates normalized by the utopia/nadir box.

use crate::mip::{
    branch_and_bound, MipError, MipSolution, MipStatus, QuadConstraint, SolveConfig, SubProblem,
};
use crate::model::{QuadraticModel, QuadraticObjective};
use crate::pareto::{FrontPoint, ParetoFront};
use crate::relax::{
    lift_aws_caps, lift_epsilon, regularize_and_factor, FactoredObjective, RelaxError,
    SelectorSharing,
};
use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

/// How quadratic objective caps are enforced in subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Quadratic constraints handled by outer-approximation cuts.
    QuadCon,
    /// Linear McCormick lifting of the capped objectives.
    McCormick { layers: usize, sharing: SelectorSharing },
}

/// Adaptive weighted-sum parameters.
#[derive(Debug, Clone, Copy)]
pub struct AwsParams {
    pub n_initial: usize,
    /// Normalized segment-length threshold for convergence.
    pub delta_j: f64,
    /// Near-duplicate removal radius (normalized).
    pub overlap_eps: f64,
    /// Refinement-count scaling factor.
    pub c: f64,
    pub max_rounds: usize,
}

impl Default for AwsParams {
    fn default() -> Self {
        Self { n_initial: 10, delta_j: 0.1, overlap_eps: 0.01, c: 1.5, max_rounds: 20 }
    }
}

/// Shared sweep configuration.
#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub mode: Mode,
    pub time_cap: Option<Duration>,
    /// ε grid step in (0, 1].
    pub step: f64,
    /// Override for the constrained objective's (lower, upper) in ε-sweeps;
    /// defaults to the utopia/nadir estimates.
    pub bounds: Option<(f64, f64)>,
    pub solve: SolveConfig,
    /// Parallel subproblem workers (1 = sequential).
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mode: Mode::QuadCon,
            time_cap: None,
            step: 0.1,
            bounds: None,
            solve: SolveConfig::default(),
            workers: 1,
        }
    }
}

/// Frontier method selector for budgeted runs.
#[derive(Debug, Clone, Copy)]
pub enum Method {
    Uniform { pairs: usize },
    Aws(AwsParams),
    /// ε-constraint sweep bounding objective `constrained` (1 or 2).
    Epsilon { constrained: usize },
}

#[derive(Debug, Error)]
pub enum MooError {
    #[error(transparent)]
    Mip(#[from] MipError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error("model has no feasible schedule")]
    Infeasible,
}

/// Utopia/nadir estimates from the payoff table, with the two
/// single-objective optima that produced them.
#[derive(Debug, Clone)]
pub struct Anchors {
    pub utopia: [f64; 2],
    /// Payoff-table estimate, not the true nadir.
    pub nadir: [f64; 2],
    pub x_cost: Vec<f64>,
    pub x_emissions: Vec<f64>,
    /// Zero-width coordinates of the utopia/nadir box.
    pub degenerate: [bool; 2],
}

impl Anchors {
    /// Normalization range, floored to keep degenerate coordinates harmless.
    pub fn range(&self, k: usize) -> f64 {
        (self.nadir[k] - self.utopia[k]).max(1e-12)
    }

    pub fn to_normalized(&self, f: [f64; 2]) -> [f64; 2] {
        [
            if self.degenerate[0] { 0.0 } else { (f[0] - self.utopia[0]) / self.range(0) },
            if self.degenerate[1] { 0.0 } else { (f[1] - self.utopia[1]) / self.range(1) },
        ]
    }

    pub fn to_raw(&self, k: usize, normalized: f64) -> f64 {
        self.utopia[k] + normalized * self.range(k)
    }
}

/// One subproblem record (kept for failures too).
#[derive(Debug, Clone)]
pub struct SubLog {
    pub method: &'static str,
    /// Scalarization weight or ε level.
    pub parameter: f64,
    pub objectives: Option<[f64; 2]>,
    pub status: MipStatus,
    pub solve_ms: u128,
    pub nodes: usize,
}

/// How a sweep ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStatus {
    Complete,
    TimeCapReached,
    MaxRounds,
}

/// Sweep output: the nondominated archive plus per-subproblem logs and, for
/// the adaptive method, the per-round refinement counts.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub front: ParetoFront,
    pub log: Vec<SubLog>,
    pub status: SweepStatus,
    /// Refinement counts n_i per round (adaptive method only).
    pub trace: Vec<Vec<usize>>,
}

fn base_subproblem(model: &QuadraticModel, objective: QuadraticObjective) -> SubProblem {
    SubProblem::from_parts(
        objective,
        model.constraints.clone(),
        model.layout.lower.clone(),
        model.layout.upper.clone(),
        model.layout.binary.clone(),
    )
}

/// Utopia and estimated nadir via two single-objective solves; also the
/// anchor schedules themselves.
pub fn utopia_nadir(model: &QuadraticModel, solve: &SolveConfig) -> Result<Anchors, MooError> {
    match anchors_under_deadline(model, solve, None)? {
        Some(a) => Ok(a),
        None => unreachable!("no deadline was set"),
    }
}

/// Deadline-aware anchor computation; `None` means the cap expired first.
fn anchors_under_deadline(
    model: &QuadraticModel,
    solve: &SolveConfig,
    deadline: Option<Instant>,
) -> Result<Option<Anchors>, MooError> {
    let s1 = solve_one(&base_subproblem(model, model.f1.clone()), solve, deadline)?;
    if s1.status == MipStatus::TimeCapReached {
        return Ok(None);
    }
    let s2 = solve_one(&base_subproblem(model, model.f2.clone()), solve, deadline)?;
    if s2.status == MipStatus::TimeCapReached {
        return Ok(None);
    }
    if s1.status != MipStatus::Optimal || s2.status != MipStatus::Optimal {
        return Err(MooError::Infeasible);
    }
    let payoff = [
        [model.f1.evaluate(&s1.x), model.f2.evaluate(&s1.x)],
        [model.f1.evaluate(&s2.x), model.f2.evaluate(&s2.x)],
    ];
    let utopia = [payoff[0][0], payoff[1][1]];
    let nadir = [payoff[0][0].max(payoff[1][0]), payoff[0][1].max(payoff[1][1])];
    let degenerate = [0, 1].map(|k| {
        (nadir[k] - utopia[k]).abs() <= 1e-9 * utopia[k].abs().max(1.0)
    });
    Ok(Some(Anchors { utopia, nadir, x_cost: s1.x, x_emissions: s2.x, degenerate }))
}

fn capped_result() -> SweepResult {
    SweepResult {
        front: ParetoFront::new(),
        log: Vec::new(),
        status: SweepStatus::TimeCapReached,
        trace: Vec::new(),
    }
}

/// Weighted sum of the *normalized* objectives:
/// `λ f̃1 + (1-λ) f̃2` with `f̃k = (f_k - utopia_k) / range_k`.
pub fn scalarized_objective(
    model: &QuadraticModel,
    anchors: &Anchors,
    lambda: f64,
) -> QuadraticObjective {
    let n = model.layout.n;
    let mut obj = QuadraticObjective {
        quad: vec![0.0; n],
        lin: vec![0.0; n],
        constant: 0.0,
    };
    let (r1, r2) = (anchors.range(0), anchors.range(1));
    obj.add_scaled(&model.f1, lambda / r1);
    obj.add_scaled(&model.f2, (1.0 - lambda) / r2);
    obj.constant -= lambda * anchors.utopia[0] / r1 + (1.0 - lambda) * anchors.utopia[1] / r2;
    obj
}

/// Weight grid `λ_i = i / (n_pairs - 1)`.
pub fn uniform_lambdas(n_pairs: usize) -> Vec<f64> {
    assert!(n_pairs >= 2);
    (0..n_pairs).map(|i| i as f64 / (n_pairs - 1) as f64).collect()
}

/// ε grid `{0, step, 2·step, …, 1}` inclusive.
pub fn epsilon_grid(step: f64) -> Vec<f64> {
    assert!(step > 0.0 && step <= 1.0);
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let e = k as f64 * step;
        if e >= 1.0 - 1e-9 {
            break;
        }
        grid.push(e);
        k += 1;
    }
    grid.push(1.0);
    grid
}

/// Refinement counts `n_i = round(C · l_i / l_avg)`.
pub fn refinement_counts(lengths: &[f64], c: f64) -> Vec<usize> {
    if lengths.is_empty() {
        return Vec::new();
    }
    let l_avg = lengths.iter().sum::<f64>() / lengths.len() as f64;
    if l_avg <= 0.0 {
        return vec![0; lengths.len()];
    }
    lengths.iter().map(|l| (c * l / l_avg).round() as usize).collect()
}

/// Cap offsets for one normalized segment from `a` (left, higher f2) to `b`:
/// `δ1 = δ_J cos θ`, `δ2 = δ_J sin θ`, with θ quadrant-correct and exactly
/// 90° for vertical segments.
pub fn segment_offsets(a: [f64; 2], b: [f64; 2], delta_j: f64) -> (f64, f64) {
    let dx = b[0] - a[0];
    let dy = a[1] - b[1];
    let theta = if dx.abs() == 0.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        dy.atan2(dx)
    };
    (delta_j * theta.cos(), delta_j * theta.sin())
}

fn deadline_of(start: Instant, cap: Option<Duration>) -> Option<Instant> {
    cap.map(|c| start + c)
}

fn expired(deadline: Option<Instant>) -> bool {
    deadline.map(|d| Instant::now() >= d).unwrap_or(false)
}

fn capped_solution() -> MipSolution {
    MipSolution {
        status: MipStatus::TimeCapReached,
        x: Vec::new(),
        objective_value: f64::INFINITY,
        best_bound: f64::NEG_INFINITY,
        nodes: 0,
        cuts: 0,
        wall_ms: 0,
    }
}

fn solve_one(
    p: &SubProblem,
    solve: &SolveConfig,
    deadline: Option<Instant>,
) -> Result<MipSolution, MipError> {
    let mut cfg = *solve;
    if let Some(d) = deadline {
        let remaining = d.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Ok(capped_solution());
        }
        cfg.time_cap = Some(cfg.time_cap.map(|t| t.min(remaining)).unwrap_or(remaining));
    }
    branch_and_bound(p, &cfg)
}

/// Solves a batch of independent subproblems, optionally on scoped worker
/// threads; results come back in input order.
fn solve_batch(
    problems: &[SubProblem],
    solve: &SolveConfig,
    deadline: Option<Instant>,
    workers: usize,
) -> Result<Vec<MipSolution>, MipError> {
    if workers <= 1 || problems.len() <= 1 {
        return problems.iter().map(|p| solve_one(p, solve, deadline)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<MipSolution, MipError>>>> =
        problems.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(problems.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= problems.len() {
                    break;
                }
                let r = solve_one(&problems[i], solve, deadline);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

fn record(
    front: &mut ParetoFront,
    log: &mut Vec<SubLog>,
    model: &QuadraticModel,
    method: &'static str,
    parameter: f64,
    sol: &MipSolution,
) {
    let n = model.layout.n;
    let objectives = if sol.x.len() >= n {
        Some([model.f1.evaluate(&sol.x[..n]), model.f2.evaluate(&sol.x[..n])])
    } else {
        None
    };
    log.push(SubLog {
        method,
        parameter,
        objectives,
        status: sol.status,
        solve_ms: sol.wall_ms,
        nodes: sol.nodes,
    });
    if let Some(f) = objectives {
        front.insert(FrontPoint {
            objectives: f.to_vec(),
            parameter,
            x: sol.x[..n].to_vec(),
            solve_ms: sol.wall_ms,
            status: format!("{:?}", sol.status),
        });
    }
}

/// Uniform-weight sweep over `n_pairs` weights (the lifting mode is
/// irrelevant here: without caps there is nothing quadratic to relax).
pub fn uniform_sweep(
    model: &QuadraticModel,
    n_pairs: usize,
    cfg: &SweepConfig,
) -> Result<SweepResult, MooError> {
    assert!(n_pairs >= 2);
    let start = Instant::now();
    let deadline = deadline_of(start, cfg.time_cap);
    let anchors = match anchors_under_deadline(model, &cfg.solve, deadline)? {
        Some(a) => a,
        None => return Ok(capped_result()),
    };
    let problems: Vec<SubProblem> = uniform_lambdas(n_pairs)
        .iter()
        .map(|&l| base_subproblem(model, scalarized_objective(model, &anchors, l)))
        .collect();
    let sols = solve_batch(&problems, &cfg.solve, deadline, cfg.workers)?;
    let mut front = ParetoFront::new();
    let mut log = Vec::new();
    for (l, sol) in uniform_lambdas(n_pairs).into_iter().zip(&sols) {
        record(&mut front, &mut log, model, "uniform", l, sol);
    }
    let status = if sols.iter().any(|s| s.status == MipStatus::TimeCapReached) {
        SweepStatus::TimeCapReached
    } else {
        SweepStatus::Complete
    };
    Ok(SweepResult { front, log, status, trace: Vec::new() })
}

/// ε-constraint sweep bounding objective `constrained` (1-based) at
/// `l + ε (u - l)` while minimizing the other.
pub fn epsilon_sweep(
    model: &QuadraticModel,
    constrained: usize,
    cfg: &SweepConfig,
) -> Result<SweepResult, MooError> {
    assert!(constrained == 1 || constrained == 2);
    let start = Instant::now();
    let deadline = deadline_of(start, cfg.time_cap);
    let (f_bound, f_free) = if constrained == 1 {
        (&model.f1, &model.f2)
    } else {
        (&model.f2, &model.f1)
    };
    let (lo, hi) = match cfg.bounds {
        Some(b) => b,
        None => match anchors_under_deadline(model, &cfg.solve, deadline)? {
            Some(a) => (a.utopia[constrained - 1], a.nadir[constrained - 1]),
            None => return Ok(capped_result()),
        },
    };
    let factored = match cfg.mode {
        Mode::McCormick { .. } => Some(regularize_and_factor(
            f_bound,
            &model.layout.lower,
            &model.layout.upper,
        )?),
        Mode::QuadCon => None,
    };

    let mut front = ParetoFront::new();
    let mut log = Vec::new();
    let mut status = SweepStatus::Complete;
    let grid = epsilon_grid(cfg.step);
    let mut problems = Vec::new();
    let mut built = Vec::new();
    for &eps in &grid {
        if expired(deadline) {
            status = SweepStatus::TimeCapReached;
            break;
        }
        let p = build_epsilon_subproblem(model, f_bound, f_free, factored.as_ref(), lo, hi, eps, cfg);
        problems.push(p);
        built.push(eps);
    }
    let sols = solve_batch(&problems, &cfg.solve, deadline, cfg.workers)?;
    for (eps, sol) in built.iter().zip(&sols) {
        record(&mut front, &mut log, model, "epsilon", *eps, sol);
        if sol.status == MipStatus::TimeCapReached {
            status = SweepStatus::TimeCapReached;
        }
    }
    for &eps in grid.iter().skip(built.len()) {
        log.push(SubLog {
            method: "epsilon",
            parameter: eps,
            objectives: None,
            status: MipStatus::TimeCapReached,
            solve_ms: 0,
            nodes: 0,
        });
    }
    Ok(SweepResult { front, log, status, trace: Vec::new() })
}

/// Builds the subproblem for one ε level; public so tests can inspect the
/// scalarized systems directly.
pub fn build_epsilon_subproblem(
    model: &QuadraticModel,
    f_bound: &QuadraticObjective,
    f_free: &QuadraticObjective,
    factored: Option<&FactoredObjective>,
    lo: f64,
    hi: f64,
    eps: f64,
    cfg: &SweepConfig,
) -> SubProblem {
    match cfg.mode {
        Mode::QuadCon => {
            let mut p = base_subproblem(model, f_free.clone());
            p.quad_constraints.push(QuadConstraint {
                quad: f_bound.quad.clone(),
                lin: f_bound.lin.clone(),
                rhs: lo + eps * (hi - lo) - f_bound.constant,
            });
            p
        }
        Mode::McCormick { layers, .. } => {
            let fac = factored.expect("factored objective prepared for lifted mode");
            let lifted = lift_epsilon(model, fac, lo, hi, eps, layers);
            SubProblem::from_lifted(&lifted, f_free)
        }
    }
}

fn segment_key(a: [f64; 2], b: [f64; 2]) -> (u64, u64, u64, u64) {
    (a[0].to_bits(), a[1].to_bits(), b[0].to_bits(), b[1].to_bits())
}

/// Adaptive weighted-sum method: an initial uniform sweep, then rounds of
/// per-segment refinements under offset cap constraints until every
/// normalized segment is shorter than `δ_J` (or a round/time limit hits).
pub fn aws(
    model: &QuadraticModel,
    params: &AwsParams,
    cfg: &SweepConfig,
) -> Result<SweepResult, MooError> {
    assert!(params.overlap_eps > 0.0 && params.overlap_eps < params.delta_j);
    let start = Instant::now();
    let deadline = deadline_of(start, cfg.time_cap);
    let anchors = match anchors_under_deadline(model, &cfg.solve, deadline)? {
        Some(a) => a,
        None => return Ok(capped_result()),
    };

    let factored = match cfg.mode {
        Mode::McCormick { .. } => Some((
            regularize_and_factor(&model.f1, &model.layout.lower, &model.layout.upper)?,
            regularize_and_factor(&model.f2, &model.layout.lower, &model.layout.upper)?,
        )),
        Mode::QuadCon => None,
    };

    let mut front = ParetoFront::new();
    let mut log = Vec::new();
    let mut trace = Vec::new();

    // Initial sweep with Δλ = 1 / n_initial, endpoints included.
    let lambdas: Vec<f64> =
        (0..=params.n_initial).map(|i| i as f64 / params.n_initial as f64).collect();
    let problems: Vec<SubProblem> = lambdas
        .iter()
        .map(|&l| base_subproblem(model, scalarized_objective(model, &anchors, l)))
        .collect();
    let sols = solve_batch(&problems, &cfg.solve, deadline, cfg.workers)?;
    for (l, sol) in lambdas.iter().zip(&sols) {
        record(&mut front, &mut log, model, "aws", *l, sol);
    }
    if expired(deadline) {
        return Ok(SweepResult { front, log, status: SweepStatus::TimeCapReached, trace });
    }

    let mut exhausted: HashSet<(u64, u64, u64, u64)> = HashSet::new();
    let mut status = SweepStatus::MaxRounds;

    for _round in 0..params.max_rounds {
        // Normalized, deduplicated front (sorted by f1 by construction).
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for p in front.points() {
            let q = anchors.to_normalized([p.objectives[0], p.objectives[1]]);
            if let Some(last) = pts.last() {
                let d = ((q[0] - last[0]).powi(2) + (q[1] - last[1]).powi(2)).sqrt();
                if d < params.overlap_eps {
                    continue; // near-duplicate: keep the earlier point
                }
            }
            pts.push(q);
        }
        let lengths: Vec<f64> = pts
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .collect();
        let live = |i: usize| !exhausted.contains(&segment_key(pts[i], pts[i + 1]));
        if lengths
            .iter()
            .enumerate()
            .all(|(i, l)| *l < params.delta_j || !live(i))
        {
            status = SweepStatus::Complete;
            break;
        }
        let counts = refinement_counts(&lengths, params.c);
        trace.push(counts.clone());

        // Collect this round's refinement tasks.
        let mut tasks: Vec<(usize, f64, SubProblem)> = Vec::new();
        let mut refine_segments = Vec::new();
        for (i, (&l, &n_i)) in lengths.iter().zip(&counts).enumerate() {
            if n_i <= 1 || l < params.delta_j || !live(i) {
                continue;
            }
            let (a, b) = (pts[i], pts[i + 1]);
            let (d1, d2) = segment_offsets(a, b, params.delta_j);
            let cap1 = anchors.to_raw(0, b[0] - d1);
            let cap2 = anchors.to_raw(1, a[1] - d2);
            refine_segments.push(i);
            for j in 1..=(n_i + 1) {
                let lam = j as f64 / (n_i + 2) as f64;
                let obj = scalarized_objective(model, &anchors, lam);
                let p = match cfg.mode {
                    Mode::QuadCon => {
                        let mut p = base_subproblem(model, obj);
                        p.quad_constraints.push(QuadConstraint {
                            quad: model.f1.quad.clone(),
                            lin: model.f1.lin.clone(),
                            rhs: cap1 - model.f1.constant,
                        });
                        p.quad_constraints.push(QuadConstraint {
                            quad: model.f2.quad.clone(),
                            lin: model.f2.lin.clone(),
                            rhs: cap2 - model.f2.constant,
                        });
                        p
                    }
                    Mode::McCormick { layers, sharing } => {
                        let (f1_fac, f2_fac) = factored.as_ref().unwrap();
                        let lifted =
                            lift_aws_caps(model, f1_fac, f2_fac, cap1, cap2, layers, sharing);
                        SubProblem::from_lifted(&lifted, &obj)
                    }
                };
                tasks.push((i, lam, p));
            }
            if expired(deadline) {
                break;
            }
        }
        if tasks.is_empty() {
            // Nothing refinable is left above threshold.
            status = SweepStatus::Complete;
            break;
        }

        let problems: Vec<SubProblem> = tasks.iter().map(|(_, _, p)| p.clone()).collect();
        let sols = solve_batch(&problems, &cfg.solve, deadline, cfg.workers)?;
        let before = front.len();
        let mut segment_progress: Vec<bool> = vec![false; pts.len().saturating_sub(1)];
        for ((i, lam, _), sol) in tasks.iter().zip(&sols) {
            let kept_before = front.len();
            record(&mut front, &mut log, model, "aws", *lam, sol);
            if front.len() > kept_before {
                segment_progress[*i] = true;
            }
        }
        // Segments whose refinements all failed or landed on known points
        // are exhausted and excluded from later rounds.
        for &i in &refine_segments {
            if !segment_progress[i] {
                exhausted.insert(segment_key(pts[i], pts[i + 1]));
            }
        }
        if expired(deadline) {
            status = SweepStatus::TimeCapReached;
            break;
        }
        let _ = before;
    }

    Ok(SweepResult { front, log, status, trace })
}

/// Dispatches to the chosen method under the configured wall-clock cap.
pub fn run_budgeted(
    model: &QuadraticModel,
    method: Method,
    cfg: &SweepConfig,
) -> Result<SweepResult, MooError> {
    if cfg.time_cap == Some(Duration::ZERO) {
        return Ok(capped_result());
    }
    match method {
        Method::Uniform { pairs } => uniform_sweep(model, pairs, cfg),
        Method::Aws(p) => aws(model, &p, cfg),
        Method::Epsilon { constrained } => epsilon_sweep(model, constrained, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Instance, ThermalUnit};
    use crate::model::build_model;

    fn unit(id: usize, quad: f64, lin: f64, co2q: f64, co2l: f64) -> ThermalUnit {
        ThermalUnit {
            id,
            cost_quad: quad,
            cost_lin: lin,
            cost_const: 5.0,
            startup_cost: 10.0,
            p_min: 1.0,
            p_max: 20.0,
            min_up: 1,
            min_down: 1,
            co2_lin: co2l,
            co2_quad: co2q,
        }
    }

    /// Two units with opposed cost/emission profiles: a curved trade-off.
    fn tradeoff_instance() -> Instance {
        Instance {
            name: "tradeoff".into(),
            periods: 2,
            demand: vec![10.0, 12.0],
            hydro_scaling: 0.5,
            thermal: vec![
                unit(0, 0.02, 1.0, 0.05, 2.0), // cheap, dirty
                unit(1, 0.05, 3.0, 0.01, 0.5), // expensive, clean
            ],
            hydro: vec![],
        }
    }

    #[test]
    fn grid_helpers_match_published_counts() {
        assert_eq!(epsilon_grid(0.1).len(), 11);
        assert_eq!(epsilon_grid(0.05).len(), 21);
        assert_eq!(epsilon_grid(1.0), vec![0.0, 1.0]);
        let l = uniform_lambdas(10);
        assert_eq!(l[0], 0.0);
        assert!((l[1] - 0.111).abs() < 1e-3);
        assert_eq!(*l.last().unwrap(), 1.0);
    }

    #[test]
    fn refinement_count_examples() {
        assert_eq!(refinement_counts(&[1.0, 1.0], 1.0), vec![1, 1]);
        assert_eq!(refinement_counts(&[2.0, 1.0, 0.0], 1.5), vec![3, 2, 0]);
    }

    #[test]
    fn segment_offset_examples() {
        // 45° segment.
        let (d1, d2) = segment_offsets([1.0, 3.0], [3.0, 1.0], 0.1);
        assert!((d1 - 0.1 / 2f64.sqrt()).abs() < 1e-12);
        assert!((d2 - 0.1 / 2f64.sqrt()).abs() < 1e-12);
        // Vertical segment: θ = 90° exactly.
        let (d1, d2) = segment_offsets([1.0, 3.0], [1.0, 1.0], 0.1);
        assert!(d1.abs() < 1e-15);
        assert!((d2 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn anchors_bracket_the_front() {
        let m = build_model(&tradeoff_instance());
        let a = utopia_nadir(&m, &SolveConfig::default()).unwrap();
        assert!(a.utopia[0] <= a.nadir[0] + 1e-9);
        assert!(a.utopia[1] <= a.nadir[1] + 1e-9);
        assert!(!a.degenerate[0] && !a.degenerate[1]);
        // The cost anchor is dirtier, the emissions anchor dearer.
        assert!(model_f(&m, &a.x_cost)[1] > model_f(&m, &a.x_emissions)[1]);
        assert!(model_f(&m, &a.x_cost)[0] < model_f(&m, &a.x_emissions)[0]);
    }

    fn model_f(m: &crate::model::QuadraticModel, x: &[f64]) -> [f64; 2] {
        [m.f1.evaluate(x), m.f2.evaluate(x)]
    }

    #[test]
    fn shared_minimizer_collapses_the_box() {
        // One mandatory unit: both objectives are minimized by the forced
        // schedule, so utopia equals the nadir estimate.
        let inst = Instance {
            name: "forced".into(),
            periods: 1,
            demand: vec![5.0],
            hydro_scaling: 0.5,
            thermal: vec![unit(0, 0.02, 1.0, 0.01, 1.0)],
            hydro: vec![],
        };
        let m = build_model(&inst);
        let a = utopia_nadir(&m, &SolveConfig::default()).unwrap();
        assert!(a.degenerate[0] && a.degenerate[1]);
        assert!((a.utopia[0] - a.nadir[0]).abs() < 1e-6);
    }

    #[test]
    fn two_pairs_reproduce_the_anchor_values() {
        let m = build_model(&tradeoff_instance());
        let a = utopia_nadir(&m, &SolveConfig::default()).unwrap();
        let r = uniform_sweep(&m, 2, &SweepConfig::default()).unwrap();
        assert_eq!(r.status, SweepStatus::Complete);
        let objs = r.front.objectives();
        // λ=0 minimizes emissions, λ=1 minimizes cost.
        let best_f1 = objs.iter().map(|o| o[0]).fold(f64::INFINITY, f64::min);
        let best_f2 = objs.iter().map(|o| o[1]).fold(f64::INFINITY, f64::min);
        assert!((best_f1 - a.utopia[0]).abs() < 1e-5 * a.utopia[0].abs().max(1.0));
        assert!((best_f2 - a.utopia[1]).abs() < 1e-5 * a.utopia[1].abs().max(1.0));
    }

    #[test]
    fn epsilon_sweep_is_monotone_in_eps() {
        let m = build_model(&tradeoff_instance());
        for mode in [
            Mode::QuadCon,
            Mode::McCormick { layers: 1, sharing: SelectorSharing::Independent },
        ] {
            let cfg = SweepConfig { mode, step: 0.25, ..Default::default() };
            let r = epsilon_sweep(&m, 2, &cfg).unwrap();
            assert_eq!(r.status, SweepStatus::Complete);
            let mut last = f64::INFINITY;
            for e in &r.log {
                if let Some(f) = e.objectives {
                    assert!(f[0] <= last + 1e-6, "free objective rose: {} -> {}", last, f[0]);
                    last = f[0];
                }
            }
            assert!(r.front.len() >= 2);
        }
    }

    #[test]
    fn aws_terminates_and_stays_nondominated() {
        let m = build_model(&tradeoff_instance());
        let params = AwsParams { n_initial: 4, ..Default::default() };
        let r = aws(&m, &params, &SweepConfig::default()).unwrap();
        assert!(matches!(r.status, SweepStatus::Complete | SweepStatus::MaxRounds));
        let objs = r.front.objectives();
        for a in &objs {
            for b in &objs {
                assert!(!crate::pareto::dominates(a, b));
            }
        }
    }

    #[test]
    fn budget_zero_is_an_empty_capped_front() {
        let m = build_model(&tradeoff_instance());
        let cfg = SweepConfig { time_cap: Some(Duration::ZERO), ..Default::default() };
        let r = run_budgeted(&m, Method::Uniform { pairs: 5 }, &cfg).unwrap();
        assert_eq!(r.status, SweepStatus::TimeCapReached);
        assert!(r.front.is_empty());
    }

    #[test]
    fn generous_budget_matches_uncapped_run() {
        let m = build_model(&tradeoff_instance());
        let capped = SweepConfig { time_cap: Some(Duration::from_secs(600)), ..Default::default() };
        let a = run_budgeted(&m, Method::Uniform { pairs: 4 }, &capped).unwrap();
        let b = uniform_sweep(&m, 4, &SweepConfig::default()).unwrap();
        assert_eq!(a.front.objectives(), b.front.objectives());
    }

    #[test]
    fn workers_do_not_change_the_front() {
        let m = build_model(&tradeoff_instance());
        let seq = uniform_sweep(&m, 5, &SweepConfig::default()).unwrap();
        let par = uniform_sweep(&m, 5, &SweepConfig { workers: 3, ..Default::default() }).unwrap();
        assert_eq!(seq.front.objectives(), par.front.objectives());
    }
}
