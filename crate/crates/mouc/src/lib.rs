//! Biobjective unit-commitment toolkit.
//!
//! Builds a mixed-integer quadratic unit-commitment model with two objectives
//! (generation cost in dollars, CO2 emissions in tonnes), and computes Pareto
//! frontiers by weighted-sum, adaptive weighted-sum, and epsilon-constraint
//! scalarizations.  The quadratically constrained subproblems can be solved
//! either exactly (outer-approximation cuts inside branch-and-bound) or through
//! piecewise-McCormick liftings of the quadratic rows.
//!
//! Module map:
//!
//! * [`instance`] — fleet data: thermal/hydro units, demand series, synthesis.
//! * [`model`]    — variable layout, linear constraint rows `Ax <= b`, objectives.
//! * [`relax`]    — Cholesky-factored objectives and McCormick liftings.
//! * [`mip`]      — ADMM quadratic-program engine, branch-and-bound, LP export.
//! * [`pareto`]   — domination, hypervolume, normalization, front bookkeeping.
//! * [`moo`]      — frontier strategies (uniform, adaptive, epsilon) under budgets.

pub mod instance;
pub mod mip;
pub mod model;
pub mod moo;
pub mod pareto;
pub mod relax;
