//! Matrix assembly for the unit-commitment MIQP.
//!
//! Decision vector x = (g; y; z):
//!   g_it  continuous generation (MW) for every unit and period,
//!   y_it  startup indicator (binary) for committed units,
//!   z_it  on/off state (binary) for committed units.
//!
//! All constraints are stored as `A x <= b` rows:
//!   startup     z_it - z_{i,t-1} - y_it <= 0           (z_{i,0} = 0)
//!   uptime      z_it - z_{i,t-1} - z_iτ <= 0           τ in (t, min(t+L-1, T)]
//!   downtime    z_{i,t-1} - z_it + z_iτ <= 1           τ in (t, min(t+l-1, T)]
//!   gen_lower   q_i z_it - g_it <= 0
//!   gen_upper   g_it - Q_i z_it <= 0
//!   demand      -Σ_i g_it <= -d_t
//!
//! Hydro units contribute always-on continuous g columns with derated flow
//! bounds and zero objective coefficients (optionally fixed y/z binaries to
//! reproduce the 3-variables-per-unit count).

use crate::instance::{hydro_power_bounds, Instance};

/// Column bookkeeping for the stacked (g; y; z) vector.
///
/// Columns are unit-major, period-minor inside each block.  The y/z blocks
/// cover thermal units only unless `hydro_binaries` is set.
#[derive(Debug, Clone)]
pub struct VariableLayout {
    /// Total column count.
    pub n: usize,
    /// Periods T.
    pub periods: usize,
    /// Number of units with g columns (thermal + hydro).
    pub units: usize,
    /// Number of units with y/z columns.
    pub committed_units: usize,
    /// Thermal unit count (units `0..thermal_units` are thermal).
    pub thermal_units: usize,
    /// Per-column lower bounds x_L.
    pub lower: Vec<f64>,
    /// Per-column upper bounds x_U.
    pub upper: Vec<f64>,
    /// Per-column integrality flag.
    pub binary: Vec<bool>,
}

impl VariableLayout {
    /// Column of g_it; `unit` indexes thermal units first, then hydro.
    pub fn g_index(&self, unit: usize, t: usize) -> usize {
        debug_assert!(unit < self.units && t < self.periods);
        unit * self.periods + t
    }

    /// Column of y_it (startup); only committed units carry one.
    pub fn y_index(&self, unit: usize, t: usize) -> usize {
        debug_assert!(unit < self.committed_units && t < self.periods);
        self.units * self.periods + unit * self.periods + t
    }

    /// Column of z_it (on/off); only committed units carry one.
    pub fn z_index(&self, unit: usize, t: usize) -> usize {
        debug_assert!(unit < self.committed_units && t < self.periods);
        (self.units + self.committed_units) * self.periods + unit * self.periods + t
    }
}

/// Constraint family labels, kept per row for diagnostics and export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowTag {
    Startup,
    Uptime,
    Downtime,
    GenLower,
    GenUpper,
    Demand,
    /// y = Lᵀx coupling in lifted systems (one of the two inequality halves).
    Couple,
    /// McCormick under/over-estimator row.
    Envelope,
    /// Lifted objective cap (AWS refinement cap or epsilon bound).
    Cap,
    /// Selector exclusivity Σ q_n = 1 (one of the two halves).
    SelectorSum,
    /// Outer-approximation gradient cut.
    Cut,
}

/// One sparse `<=` row.
#[derive(Debug, Clone)]
pub struct SparseRow {
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRow {
    pub fn new(cols: Vec<usize>, vals: Vec<f64>) -> Self {
        debug_assert_eq!(cols.len(), vals.len());
        Self { cols, vals }
    }

    /// Row inner product with a dense point.
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.cols
            .iter()
            .zip(&self.vals)
            .map(|(&c, &v)| v * x[c])
            .sum()
    }
}

/// Sparse inequality system `A x <= b` with per-row family tags.
#[derive(Debug, Clone, Default)]
pub struct LinearSystem {
    pub rows: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub tags: Vec<RowTag>,
}

impl LinearSystem {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: SparseRow, rhs: f64, tag: RowTag) {
        self.rows.push(row);
        self.b.push(rhs);
        self.tags.push(tag);
    }
}

/// `value(x) = xᵀ diag(quad) x + linᵀx + constant`.
///
/// The quadratic part is diagonal throughout this model (per-unit cost and
/// emission curves are separable in g).
#[derive(Debug, Clone, Default)]
pub struct QuadraticObjective {
    pub quad: Vec<f64>,
    pub lin: Vec<f64>,
    pub constant: f64,
}

impl QuadraticObjective {
    pub fn zeros(n: usize) -> Self {
        Self { quad: vec![0.0; n], lin: vec![0.0; n], constant: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.quad.len()
    }

    /// Evaluates the objective; panics on dimension mismatch.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n(), "objective/point dimension mismatch");
        let mut v = self.constant;
        for i in 0..x.len() {
            v += (self.quad[i] * x[i] + self.lin[i]) * x[i];
        }
        v
    }

    /// `self + scale · other` (matching dimensions).
    pub fn add_scaled(&mut self, other: &QuadraticObjective, scale: f64) {
        assert_eq!(self.n(), other.n());
        for i in 0..self.n() {
            self.quad[i] += scale * other.quad[i];
            self.lin[i] += scale * other.lin[i];
        }
        self.constant += scale * other.constant;
    }

    /// Same coefficients over a wider variable vector (zero padding).
    pub fn embedded(&self, n_total: usize) -> QuadraticObjective {
        assert!(n_total >= self.n());
        let mut out = QuadraticObjective::zeros(n_total);
        out.quad[..self.n()].copy_from_slice(&self.quad);
        out.lin[..self.n()].copy_from_slice(&self.lin);
        out.constant = self.constant;
        out
    }
}

/// Assembled model: layout, constraint rows, and the two (plus optional third)
/// objectives.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    pub layout: VariableLayout,
    pub constraints: LinearSystem,
    /// Generation cost, $.
    pub f1: QuadraticObjective,
    /// Emissions, t.
    pub f2: QuadraticObjective,
    /// Optional renewable-penetration objective (linear).
    pub f3: Option<QuadraticObjective>,
}

/// Assembly switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelOptions {
    /// Give hydro units y/z binaries fixed to (0, 1), inflating n to
    /// 3 variables per unit for all units.
    pub hydro_binaries: bool,
    /// Attach the renewable-penetration objective as f3.
    pub renewable_objective: bool,
}

/// Builds the default model (no hydro binaries, no third objective).
pub fn build_model(inst: &Instance) -> QuadraticModel {
    build_model_with(inst, ModelOptions::default())
}

/// Builds the model with explicit options; `inst` must be validated.
pub fn build_model_with(inst: &Instance, opts: ModelOptions) -> QuadraticModel {
    let t_len = inst.periods;
    let i_th = inst.thermal.len();
    let i_hy = inst.hydro.len();
    let units = i_th + i_hy;
    let committed = if opts.hydro_binaries { units } else { i_th };
    let n = (units + 2 * committed) * t_len;

    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut binary = vec![false; n];
    let mut layout = VariableLayout {
        n,
        periods: t_len,
        units,
        committed_units: committed,
        thermal_units: i_th,
        lower: Vec::new(),
        upper: Vec::new(),
        binary: Vec::new(),
    };

    for (i, u) in inst.thermal.iter().enumerate() {
        for t in 0..t_len {
            // g is driven to 0 by the gen_upper row when the unit is off.
            lower[layout.g_index(i, t)] = 0.0;
            upper[layout.g_index(i, t)] = u.p_max;
        }
    }
    for (h, hu) in inst.hydro.iter().enumerate() {
        let (lo, hi) = hydro_power_bounds(hu, inst.hydro_scaling);
        for t in 0..t_len {
            lower[layout.g_index(i_th + h, t)] = lo;
            upper[layout.g_index(i_th + h, t)] = hi;
        }
    }
    for i in 0..committed {
        let hydro_unit = i >= i_th;
        for t in 0..t_len {
            let (y, z) = (layout.y_index(i, t), layout.z_index(i, t));
            binary[y] = true;
            binary[z] = true;
            // Hydro pseudo-binaries are pinned: never started, always on.
            lower[y] = 0.0;
            upper[y] = if hydro_unit { 0.0 } else { 1.0 };
            lower[z] = if hydro_unit { 1.0 } else { 0.0 };
            upper[z] = 1.0;
        }
    }
    layout.lower = lower;
    layout.upper = upper;
    layout.binary = binary;

    let mut sys = LinearSystem::default();
    for (i, u) in inst.thermal.iter().enumerate() {
        for t in 0..t_len {
            let z_t = layout.z_index(i, t);
            // Startup: z_t - z_{t-1} - y_t <= 0, with z_0 = 0 dropped.
            let (mut cols, mut vals) = (vec![z_t], vec![1.0]);
            if t > 0 {
                cols.push(layout.z_index(i, t - 1));
                vals.push(-1.0);
            }
            cols.push(layout.y_index(i, t));
            vals.push(-1.0);
            sys.push(SparseRow::new(cols, vals), 0.0, RowTag::Startup);
        }
        // Minimum up-time: a start at t pins z through the window.
        for t in 0..t_len {
            for tau in (t + 1)..t_len.min(t + u.min_up) {
                let (mut cols, mut vals) = (vec![layout.z_index(i, t)], vec![1.0]);
                if t > 0 {
                    cols.push(layout.z_index(i, t - 1));
                    vals.push(-1.0);
                }
                cols.push(layout.z_index(i, tau));
                vals.push(-1.0);
                sys.push(SparseRow::new(cols, vals), 0.0, RowTag::Uptime);
            }
        }
        // Minimum down-time: a stop at t keeps z at zero through the window.
        for t in 0..t_len {
            for tau in (t + 1)..t_len.min(t + u.min_down) {
                let (mut cols, mut vals) = (vec![layout.z_index(i, t)], vec![-1.0]);
                if t > 0 {
                    cols.push(layout.z_index(i, t - 1));
                    vals.push(1.0);
                }
                cols.push(layout.z_index(i, tau));
                vals.push(1.0);
                sys.push(SparseRow::new(cols, vals), 1.0, RowTag::Downtime);
            }
        }
        for t in 0..t_len {
            let g = layout.g_index(i, t);
            let z = layout.z_index(i, t);
            sys.push(
                SparseRow::new(vec![z, g], vec![u.p_min, -1.0]),
                0.0,
                RowTag::GenLower,
            );
            sys.push(
                SparseRow::new(vec![g, z], vec![1.0, -u.p_max]),
                0.0,
                RowTag::GenUpper,
            );
        }
    }
    for t in 0..t_len {
        let cols: Vec<usize> = (0..units).map(|i| layout.g_index(i, t)).collect();
        let vals = vec![-1.0; units];
        sys.push(SparseRow::new(cols, vals), -inst.demand[t], RowTag::Demand);
    }

    let mut f1 = QuadraticObjective::zeros(n);
    let mut f2 = QuadraticObjective::zeros(n);
    for (i, u) in inst.thermal.iter().enumerate() {
        for t in 0..t_len {
            let g = layout.g_index(i, t);
            f1.quad[g] = u.cost_quad;
            f1.lin[g] = u.cost_lin;
            f1.lin[layout.y_index(i, t)] = u.startup_cost;
            f1.lin[layout.z_index(i, t)] = u.cost_const;
            f2.quad[g] = u.co2_quad;
            f2.lin[g] = u.co2_lin;
        }
    }

    let f3 = opts
        .renewable_objective
        .then(|| renewable_objective(inst, &layout));

    QuadraticModel { layout, constraints: sys, f1, f2, f3 }
}

/// Renewable-penetration objective: +1 on conventional g columns, -1 on
/// renewable g columns, so minimizing it maximizes the renewable share.
pub fn renewable_objective(inst: &Instance, layout: &VariableLayout) -> QuadraticObjective {
    let mut obj = QuadraticObjective::zeros(layout.n);
    for i in 0..inst.thermal.len() {
        for t in 0..layout.periods {
            obj.lin[layout.g_index(i, t)] = 1.0;
        }
    }
    for h in 0..inst.hydro.len() {
        for t in 0..layout.periods {
            obj.lin[layout.g_index(inst.thermal.len() + h, t)] = -1.0;
        }
    }
    obj
}

/// One constraint violation found by [`check_feasible`].
#[derive(Debug, Clone)]
pub struct Violation {
    pub tag: RowTag,
    pub row: usize,
    /// Positive excess `(Ax - b)_row`.
    pub excess: f64,
}

/// Feasibility report for a candidate point.
#[derive(Debug, Clone, Default)]
pub struct FeasibilityReport {
    pub row_violations: Vec<Violation>,
    /// Columns outside their bounds: (column, excess distance).
    pub bound_violations: Vec<(usize, f64)>,
    /// Binary columns farther than tol from {0, 1}: (column, distance).
    pub binary_violations: Vec<(usize, f64)>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.row_violations.is_empty()
            && self.bound_violations.is_empty()
            && self.binary_violations.is_empty()
    }
}

/// Checks every row, bound, and binary column of `m` at `x` against `tol`.
pub fn check_feasible(m: &QuadraticModel, x: &[f64], tol: f64) -> FeasibilityReport {
    assert_eq!(x.len(), m.layout.n, "point dimension mismatch");
    let mut report = FeasibilityReport::default();
    for (idx, row) in m.constraints.rows.iter().enumerate() {
        let excess = row.dot(x) - m.constraints.b[idx];
        if excess > tol {
            report.row_violations.push(Violation {
                tag: m.constraints.tags[idx],
                row: idx,
                excess,
            });
        }
    }
    for i in 0..m.layout.n {
        let below = m.layout.lower[i] - x[i];
        let above = x[i] - m.layout.upper[i];
        let excess = below.max(above);
        if excess > tol {
            report.bound_violations.push((i, excess));
        }
        if m.layout.binary[i] {
            let dist = x[i].abs().min((x[i] - 1.0).abs());
            if dist > tol {
                report.binary_violations.push((i, dist));
            }
        }
    }
    report
}
