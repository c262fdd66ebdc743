//! Exact solver for the scalarized subproblems.
//!
//! Problem form:
//!
//! ```text
//!     minimize    xᵀ Q x + linᵀ x + c
//!     subject to  A x <= b
//!                 xᵀ Q_k x + q_kᵀ x <= r_k     (convex, baseline mode only)
//!                 lb <= x <= ub,  x_j ∈ {0,1} for binary j
//! ```
//!
//! Algorithm: branch-and-bound over the binary columns with convex QP node
//! relaxations (module [`qp`]).  Quadratic constraints are enforced by
//! Kelley-style outer-approximation: gradient cuts are accumulated at the
//! root and lazily at integer-feasible nodes.  Branching picks the most
//! fractional binary (lowest index on ties); the node stack is depth-first
//! with a best-bound re-sort every 100 nodes.  Everything is deterministic
//! for fixed inputs and configuration.

pub mod lp;
pub mod qp;

use crate::model::{LinearSystem, QuadraticObjective, RowTag, SparseRow};
use crate::relax::LiftedProblem;
use qp::{QpCore, QpError, QpSettings, QpStatus};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Convex quadratic constraint `xᵀ diag(quad) x + linᵀx <= rhs`.
#[derive(Debug, Clone)]
pub struct QuadConstraint {
    pub quad: Vec<f64>,
    pub lin: Vec<f64>,
    pub rhs: f64,
}

impl QuadConstraint {
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        for i in 0..x.len() {
            v += (self.quad[i] * x[i] + self.lin[i]) * x[i];
        }
        v
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        self.value(x) - self.rhs
    }
}

/// One scalarized mixed-binary subproblem.
#[derive(Debug, Clone)]
pub struct SubProblem {
    pub objective: QuadraticObjective,
    pub system: LinearSystem,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub binary: Vec<bool>,
    pub quad_constraints: Vec<QuadConstraint>,
}

impl SubProblem {
    pub fn n(&self) -> usize {
        self.objective.n()
    }

    /// Plain subproblem over a base model's rows and bounds.
    pub fn from_parts(
        objective: QuadraticObjective,
        system: LinearSystem,
        lower: Vec<f64>,
        upper: Vec<f64>,
        binary: Vec<bool>,
    ) -> SubProblem {
        assert_eq!(objective.n(), lower.len());
        SubProblem { objective, system, lower, upper, binary, quad_constraints: Vec::new() }
    }

    /// Subproblem over a lifted system; `objective` is over the base columns
    /// and is zero-padded to the lifted width.
    pub fn from_lifted(lifted: &LiftedProblem, objective: &QuadraticObjective) -> SubProblem {
        assert_eq!(objective.n(), lifted.n_base);
        SubProblem {
            objective: objective.embedded(lifted.n_total),
            system: lifted.system.clone(),
            lower: lifted.lower.clone(),
            upper: lifted.upper.clone(),
            binary: lifted.binary.clone(),
            quad_constraints: Vec::new(),
        }
    }
}

/// Search limits and tolerances.
#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub gap_tol: f64,
    pub int_tol: f64,
    pub time_cap: Option<Duration>,
    pub node_cap: Option<usize>,
    pub qp: QpSettings,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            int_tol: 1e-6,
            time_cap: None,
            node_cap: None,
            qp: QpSettings::default(),
        }
    }
}

/// Terminal state of a branch-and-bound run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    Infeasible,
    TimeCapReached,
    IterationCap,
}

/// Solver output.  `x` is empty when no incumbent was found.
#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub best_bound: f64,
    pub nodes: usize,
    pub cuts: usize,
    pub wall_ms: u128,
}

/// Hard failures (numerical breakdown); plain infeasibility is a status.
#[derive(Debug, Error)]
pub enum MipError {
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("outer-approximation cut loop exceeded {0} cuts")]
    CutLimit(usize),
}

/// Gradient cut for a violated quadratic constraint:
/// `(2 Q x̂ + q)ᵀ x <= rhs + x̂ᵀ Q x̂`.  Returns `None` when x̂ satisfies the
/// constraint within `tol` (no-op).
pub fn outer_cut(qc: &QuadConstraint, x_hat: &[f64], tol: f64) -> Option<(SparseRow, f64)> {
    if qc.violation(x_hat) <= tol {
        return None;
    }
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut quad_at = 0.0;
    for i in 0..x_hat.len() {
        let g = 2.0 * qc.quad[i] * x_hat[i] + qc.lin[i];
        quad_at += qc.quad[i] * x_hat[i] * x_hat[i];
        if g != 0.0 {
            cols.push(i);
            vals.push(g);
        }
    }
    if cols.is_empty() {
        return None;
    }
    Some((SparseRow::new(cols, vals), qc.rhs + quad_at))
}

/// Appends the gradient cut for constraint `qc_index` at `x_hat` to the
/// subproblem's row system; returns the new row index, or `None` if x̂ does
/// not violate the constraint.
pub fn add_outer_cut(p: &mut SubProblem, qc_index: usize, x_hat: &[f64]) -> Option<usize> {
    let tol = cut_tol(&p.quad_constraints[qc_index]);
    let (row, rhs) = outer_cut(&p.quad_constraints[qc_index], x_hat, tol)?;
    p.system.push(row, rhs, RowTag::Cut);
    Some(p.system.len() - 1)
}

fn cut_tol(qc: &QuadConstraint) -> f64 {
    1e-7 * qc.rhs.abs().max(1.0)
}

/// One-shot continuous QP solve (no integrality), exposed for tests and for
/// callers that already fixed every binary.
pub fn solve_qp(
    objective: &QuadraticObjective,
    system: &LinearSystem,
    lower: &[f64],
    upper: &[f64],
    warm: Option<(&[f64], &[f64])>,
) -> Result<qp::QpSolution, QpError> {
    let n = objective.n();
    let p_diag: Vec<f64> = objective.quad.iter().map(|q| 2.0 * q).collect();
    let mut core = QpCore::new(
        n,
        p_diag,
        objective.lin.clone(),
        system.rows.clone(),
        vec![false; system.rows.len()],
        QpSettings::default(),
    )?;
    let row_l = vec![f64::NEG_INFINITY; system.rows.len()];
    let mut sol = core.solve(&row_l, &system.b, lower, upper, warm)?;
    sol.objective += objective.constant;
    Ok(sol)
}

struct Node {
    lower: Vec<f64>,
    upper: Vec<f64>,
    bound: f64,
    warm_x: Vec<f64>,
    warm_y: Vec<f64>,
    depth: usize,
}

const MAX_CUTS: usize = 2000;

/// Globally solves the convex mixed-binary subproblem.
pub fn branch_and_bound(p: &SubProblem, cfg: &SolveConfig) -> Result<MipSolution, MipError> {
    let start = Instant::now();
    let n = p.n();
    let p_diag: Vec<f64> = p.objective.quad.iter().map(|q| 2.0 * q).collect();

    // Row storage: base rows plus accumulated outer cuts.
    let mut rows = p.system.rows.clone();
    let mut rhs = p.system.b.clone();
    let mut cuts = 0usize;
    let mut core = QpCore::new(
        n,
        p_diag.clone(),
        p.objective.lin.clone(),
        rows.clone(),
        vec![false; rows.len()],
        cfg.qp,
    )?;
    let mut row_l = vec![f64::NEG_INFINITY; rows.len()];

    let finish = |status: MipStatus,
                  incumbent: Option<(Vec<f64>, f64)>,
                  best_bound: f64,
                  nodes: usize,
                  cuts: usize| {
        let (x, objective_value) = incumbent.unwrap_or((Vec::new(), f64::INFINITY));
        MipSolution {
            status,
            x,
            objective_value,
            best_bound,
            nodes,
            cuts,
            wall_ms: start.elapsed().as_millis(),
        }
    };

    // Root relaxation with Kelley loop over the quadratic constraints.
    let mut root_sol = match core.solve(&row_l, &rhs, &p.lower, &p.upper, None)? {
        s if s.status == QpStatus::Infeasible => {
            return Ok(finish(MipStatus::Infeasible, None, f64::INFINITY, 0, 0))
        }
        s => s,
    };
    loop {
        let mut added = false;
        for qc in &p.quad_constraints {
            if let Some((row, r)) = outer_cut(qc, &root_sol.x, cut_tol(qc)) {
                rows.push(row);
                rhs.push(r);
                row_l.push(f64::NEG_INFINITY);
                cuts += 1;
                added = true;
            }
        }
        if !added {
            break;
        }
        if cuts > MAX_CUTS {
            return Err(MipError::CutLimit(MAX_CUTS));
        }
        core = QpCore::new(
            n,
            p_diag.clone(),
            p.objective.lin.clone(),
            rows.clone(),
            vec![false; rows.len()],
            cfg.qp,
        )?;
        root_sol = match core.solve(
            &row_l,
            &rhs,
            &p.lower,
            &p.upper,
            Some((&root_sol.x, &[])),
        )? {
            s if s.status == QpStatus::Infeasible => {
                return Ok(finish(MipStatus::Infeasible, None, f64::INFINITY, 0, cuts))
            }
            s => s,
        };
    }

    let mut stack = vec![Node {
        lower: p.lower.clone(),
        upper: p.upper.clone(),
        bound: root_sol.objective + p.objective.constant,
        warm_x: root_sol.x.clone(),
        warm_y: Vec::new(),
        depth: 0,
    }];
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0usize;

    let gap_ok = |inc: f64, bound: f64| inc - bound <= cfg.gap_tol * inc.abs().max(1.0);

    while let Some(node) = stack.pop() {
        let inc_val = incumbent.as_ref().map(|(_, v)| *v).unwrap_or(f64::INFINITY);
        // Prune against the incumbent.
        if node.bound >= inc_val - 1e-12 * inc_val.abs().max(1.0) {
            continue;
        }
        if let Some(cap) = cfg.time_cap {
            if start.elapsed() >= cap {
                let bound = open_bound(&stack, Some(&node), inc_val);
                return Ok(finish(MipStatus::TimeCapReached, incumbent, bound, nodes, cuts));
            }
        }
        if let Some(cap) = cfg.node_cap {
            if nodes >= cap {
                let bound = open_bound(&stack, Some(&node), inc_val);
                return Ok(finish(MipStatus::IterationCap, incumbent, bound, nodes, cuts));
            }
        }

        nodes += 1;
        if nodes % 100 == 0 {
            // Best-bound re-sort: worst bounds sink to the bottom.
            stack.sort_by(|a, b| b.bound.partial_cmp(&a.bound).unwrap());
        }

        // Dual warm starts are only valid if no cut row appeared since the
        // parent solve; the primal point is always reusable.
        let warm_y: &[f64] = if node.warm_y.len() == rows.len() + n {
            &node.warm_y
        } else {
            &[]
        };
        let sol = core
            .solve(
                &row_l,
                &rhs,
                &node.lower,
                &node.upper,
                Some((&node.warm_x, warm_y)),
            )?;
        if sol.status != QpStatus::Solved {
            continue; // infeasible (or unbounded, impossible with boxes)
        }
        let val = sol.objective + p.objective.constant;
        let inc_val = incumbent.as_ref().map(|(_, v)| *v).unwrap_or(f64::INFINITY);
        if val >= inc_val - 1e-12 * inc_val.abs().max(1.0) {
            continue;
        }

        // Highest-index fractional binary.  The variable layout puts the
        // commitment block last, so this fixes commitment states before
        // startup indicators; on the near-flat plateaus these instances
        // produce it closes the tree orders of magnitude faster than
        // most-fractional selection.
        let mut branch: Option<usize> = None;
        for j in (0..n).rev() {
            if !p.binary[j] || node.lower[j] == node.upper[j] {
                continue;
            }
            let frac = sol.x[j].abs().min((sol.x[j] - 1.0).abs());
            if frac > cfg.int_tol {
                branch = Some(j);
                break;
            }
        }

        match branch {
            None => {
                // Integer feasible: enforce quadratic constraints lazily.
                let mut violated = false;
                for qc in &p.quad_constraints {
                    if let Some((row, r)) = outer_cut(qc, &sol.x, cut_tol(qc)) {
                        rows.push(row);
                        rhs.push(r);
                        row_l.push(f64::NEG_INFINITY);
                        cuts += 1;
                        violated = true;
                    }
                }
                if violated {
                    if cuts > MAX_CUTS {
                        return Err(MipError::CutLimit(MAX_CUTS));
                    }
                    core = QpCore::new(
                        n,
                        p_diag.clone(),
                        p.objective.lin.clone(),
                        rows.clone(),
                        vec![false; rows.len()],
                        cfg.qp,
                    )?;
                    // Re-solve this node against the strengthened system.
                    stack.push(Node {
                        lower: node.lower,
                        upper: node.upper,
                        bound: val,
                        warm_x: sol.x,
                        warm_y: Vec::new(),
                        depth: node.depth,
                    });
                    continue;
                }
                incumbent = Some((sol.x.clone(), val));
            }
            Some(j) => {
                let preferred = if sol.x[j] >= 0.5 { 1.0 } else { 0.0 };
                let mk = |fix: f64| {
                    let mut lower = node.lower.clone();
                    let mut upper = node.upper.clone();
                    lower[j] = fix;
                    upper[j] = fix;
                    Node {
                        lower,
                        upper,
                        bound: val,
                        warm_x: sol.x.clone(),
                        warm_y: sol.y.clone(),
                        depth: node.depth + 1,
                    }
                };
                stack.push(mk(1.0 - preferred));
                stack.push(mk(preferred)); // popped first: dive toward rounding
            }
        }

        // Early exit once the global gap closes.
        if let Some((_, inc)) = &incumbent {
            let bound = open_bound(&stack, None, *inc);
            if gap_ok(*inc, bound) && stack.is_empty() {
                break;
            }
        }
    }

    match incumbent {
        Some((x, v)) => Ok(MipSolution {
            status: MipStatus::Optimal,
            best_bound: v,
            objective_value: v,
            x,
            nodes,
            cuts,
            wall_ms: start.elapsed().as_millis(),
        }),
        None => Ok(finish(MipStatus::Infeasible, None, f64::INFINITY, nodes, cuts)),
    }
}

/// Global lower bound: the weakest open node, or the incumbent when the
/// search space is exhausted.
fn open_bound(stack: &[Node], current: Option<&Node>, incumbent: f64) -> f64 {
    let mut bound = incumbent;
    for node in stack.iter().chain(current) {
        bound = bound.min(node.bound);
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Instance, ThermalUnit};
    use crate::model::build_model;

    fn fixture_t1() -> SubProblem {
        let inst = Instance {
            name: "t1".into(),
            periods: 1,
            demand: vec![5.0],
            hydro_scaling: 0.5,
            thermal: vec![ThermalUnit {
                id: 0,
                cost_quad: 1.0,
                cost_lin: 1.0,
                cost_const: 1.0,
                startup_cost: 3.0,
                p_min: 2.0,
                p_max: 10.0,
                min_up: 1,
                min_down: 1,
                co2_lin: 0.1,
                co2_quad: 0.01,
            }],
            hydro: vec![],
        };
        let m = build_model(&inst);
        SubProblem::from_parts(
            m.f1.clone(),
            m.constraints.clone(),
            m.layout.lower.clone(),
            m.layout.upper.clone(),
            m.layout.binary.clone(),
        )
    }

    #[test]
    fn commits_the_single_unit() {
        let sol = branch_and_bound(&fixture_t1(), &SolveConfig::default()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert!((sol.objective_value - 34.0).abs() < 1e-5, "{}", sol.objective_value);
        assert!((sol.x[0] - 5.0).abs() < 1e-5); // g
        assert!((sol.x[1] - 1.0).abs() < 1e-6); // y
        assert!((sol.x[2] - 1.0).abs() < 1e-6); // z
    }

    #[test]
    fn fixed_binaries_reduce_to_qp() {
        let mut p = fixture_t1();
        p.lower[1] = 1.0;
        p.lower[2] = 1.0;
        let mip = branch_and_bound(&p, &SolveConfig::default()).unwrap();
        let qp = solve_qp(&p.objective, &p.system, &p.lower, &p.upper, None).unwrap();
        assert_eq!(mip.nodes, 1);
        assert!((mip.objective_value - qp.objective).abs() < 1e-6);
    }

    #[test]
    fn outer_cut_examples() {
        let qc = QuadConstraint { quad: vec![1.0], lin: vec![0.0], rhs: 4.0 };
        let (row, rhs) = outer_cut(&qc, &[3.0], 1e-9).unwrap();
        assert_eq!(row.cols, vec![0]);
        assert_eq!(row.vals, vec![6.0]);
        assert_eq!(rhs, 13.0);
        assert!(row.dot(&[3.0]) > rhs); // separates x̂
        for x in [-2.0, -1.0, 0.0, 1.5, 2.0] {
            assert!(row.dot(&[x]) <= rhs + 1e-12); // valid for the ball
        }
        assert!(outer_cut(&qc, &[1.0], 1e-9).is_none());
    }

    #[test]
    fn kelley_loop_converges_on_the_ball() {
        // min -x s.t. x² <= 4, x ∈ [0,10]: optimum at x = 2.
        let n = 1;
        let p = SubProblem {
            objective: QuadraticObjective { quad: vec![0.0], lin: vec![-1.0], constant: 0.0 },
            system: LinearSystem::default(),
            lower: vec![0.0],
            upper: vec![10.0],
            binary: vec![false; n],
            quad_constraints: vec![QuadConstraint { quad: vec![1.0], lin: vec![0.0], rhs: 4.0 }],
        };
        let sol = branch_and_bound(&p, &SolveConfig::default()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-6, "{}", sol.x[0]);
        assert!(sol.cuts <= 50, "{} cuts", sol.cuts);
    }

    #[test]
    fn cut_validity_over_the_quadratic_region() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let qc = QuadConstraint { quad: vec![1.0, 0.5], lin: vec![0.3, -0.2], rhs: 5.0 };
        let mut cuts_list = Vec::new();
        for _ in 0..20 {
            let x_hat = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            if let Some(cut) = outer_cut(&qc, &x_hat, 1e-9) {
                cuts_list.push(cut);
            }
        }
        assert!(!cuts_list.is_empty());
        let mut checked = 0;
        while checked < 1000 {
            let x = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            if qc.violation(&x) <= 0.0 {
                checked += 1;
                for (row, rhs) in &cuts_list {
                    assert!(row.dot(&x) <= rhs + 1e-9);
                }
            }
        }
    }

    #[test]
    fn bound_is_below_optimum_and_deterministic() {
        let p = fixture_t1();
        let a = branch_and_bound(&p, &SolveConfig::default()).unwrap();
        let b = branch_and_bound(&p, &SolveConfig::default()).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.x, b.x);
        assert!(a.best_bound <= a.objective_value + 1e-9);
    }

    #[test]
    fn node_cap_reports_iteration_cap() {
        let mut p = fixture_t1();
        // Force branching by adding a second period-like binary conflict: use
        // the same fixture but with a node cap of zero.
        p.lower[1] = 0.0;
        let sol = branch_and_bound(
            &p,
            &SolveConfig { node_cap: Some(0), ..Default::default() },
        )
        .unwrap();
        assert_eq!(sol.status, MipStatus::IterationCap);
    }

    #[test]
    fn infeasible_box_conflict() {
        let mut p = fixture_t1();
        // Demand above capacity: -g <= -20 with g <= 10.
        let idx = p
            .system
            .tags
            .iter()
            .position(|&t| t == RowTag::Demand)
            .unwrap();
        p.system.b[idx] = -20.0;
        let sol = branch_and_bound(&p, &SolveConfig::default()).unwrap();
        assert_eq!(sol.status, MipStatus::Infeasible);
    }
}
