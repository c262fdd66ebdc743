//! McCormick liftings of the quadratic objectives.
//!
//! A quadratic value xᵀQx + linᵀx is rewritten through y = Lᵀx where
//! L Lᵀ = Q + εI (regularized Cholesky), giving ‖y‖² + linᵀx.  Each square
//! y_i² is then replaced by a lifted variable w_i constrained to the McCormick
//! envelope of the square over [y_i^L, y_i^U]:
//!
//!   w >= 2 y yL - yL²          (tangent at the lower end)
//!   w >= 2 y yU - yU²          (tangent at the upper end)
//!   w <= y (yL + yU) - yU yL   (chord)
//!
//! With N >= 2 uniform partitions of the interval, each partition carries its
//! own three rows relaxed by ±(1-q_n)·M, selector binaries q_n summing to one
//! per coordinate.  The lifted cap rows e​ᵀw + linᵀx <= cap then stand in for
//! the quadratic constraints of the scalarized subproblems.
//!
//! Q is diagonal for this model, so L is the diagonal of square roots and the
//! coupling rows are one coordinate each.

use crate::model::{LinearSystem, QuadraticModel, QuadraticObjective, RowTag, SparseRow};
use thiserror::Error;

/// Errors from factorization.
#[derive(Debug, Error)]
pub enum RelaxError {
    /// Q + εI had a negative diagonal entry: the objective is not PSD.
    #[error("factorization failure at coordinate {0}: diagonal {1} < 0 after regularization")]
    Factorization(usize, f64),
}

/// Cholesky-factored regularized objective together with the interval image
/// of the variable box under y = Lᵀx.
#[derive(Debug, Clone)]
pub struct FactoredObjective {
    /// Diagonal of L (Q is diagonal, so L = sqrt(diag(Q) + ε)).
    pub l_diag: Vec<f64>,
    /// Linear part carried over from the objective.
    pub lin: Vec<f64>,
    /// Constant part carried over from the objective.
    pub constant: f64,
    /// Regularization ε actually applied.
    pub epsilon_reg: f64,
    /// Coordinate-wise lower bound of y over the box.
    pub y_lower: Vec<f64>,
    /// Coordinate-wise upper bound of y over the box.
    pub y_upper: Vec<f64>,
}

impl FactoredObjective {
    /// ‖Lᵀx‖² + linᵀx + constant: the regularized value the cap rows see.
    pub fn regularized_value(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for i in 0..x.len() {
            let y = self.l_diag[i] * x[i];
            v += y * y + self.lin[i] * x[i];
        }
        v
    }
}

/// Regularizes `obj` (ε = 0.01 × mean of nonzero |Q| entries, floored at
/// 1e-8), factors it, and propagates the box `[x_lower, x_upper]` through
/// y = Lᵀx by interval arithmetic.
pub fn regularize_and_factor(
    obj: &QuadraticObjective,
    x_lower: &[f64],
    x_upper: &[f64],
) -> Result<FactoredObjective, RelaxError> {
    let n = obj.n();
    assert_eq!(x_lower.len(), n);
    assert_eq!(x_upper.len(), n);
    let nonzero: Vec<f64> = obj.quad.iter().filter(|q| **q != 0.0).map(|q| q.abs()).collect();
    let epsilon_reg = if nonzero.is_empty() {
        1e-8
    } else {
        (0.01 * nonzero.iter().sum::<f64>() / nonzero.len() as f64).max(1e-8)
    };
    let mut l_diag = Vec::with_capacity(n);
    let mut y_lower = Vec::with_capacity(n);
    let mut y_upper = Vec::with_capacity(n);
    for i in 0..n {
        let d = obj.quad[i] + epsilon_reg;
        if d < 0.0 {
            return Err(RelaxError::Factorization(i, d));
        }
        let l = d.sqrt();
        l_diag.push(l);
        let (a, b) = (l * x_lower[i], l * x_upper[i]);
        y_lower.push(a.min(b));
        y_upper.push(a.max(b));
    }
    Ok(FactoredObjective {
        l_diag,
        lin: obj.lin.clone(),
        constant: obj.constant,
        epsilon_reg,
        y_lower,
        y_upper,
    })
}

/// Which side of the square a row bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeKind {
    /// Tangent at the partition's lower endpoint.
    UnderLo,
    /// Tangent at the partition's upper endpoint.
    UnderHi,
    /// Chord across the partition.
    Over,
}

/// One envelope row in the form `w_coef·w + y_coef·y <= rhs` (before any
/// big-M relaxation term).
#[derive(Debug, Clone)]
pub struct EnvelopeRow {
    pub kind: EnvelopeKind,
    pub partition: usize,
    pub y_coef: f64,
    pub w_coef: f64,
    pub rhs: f64,
}

/// Envelope of w = y² over [y_lo, y_hi] with uniform partitions.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub rows: Vec<EnvelopeRow>,
    /// Partition boundaries, length partitions + 1.
    pub breaks: Vec<f64>,
    /// Deactivation constant for foreign partitions' rows.
    pub big_m: f64,
}

impl Envelope {
    /// Index of the partition containing y (boundary points go low).
    pub fn partition_of(&self, y: f64) -> usize {
        let n = self.breaks.len() - 1;
        for p in 0..n {
            if y <= self.breaks[p + 1] {
                return p;
            }
        }
        n - 1
    }

    /// Smallest w admitted anywhere over the interval (for box bounds):
    /// the minimum of the piecewise tangent envelope.
    pub fn w_floor(&self) -> f64 {
        let mut lo = f64::INFINITY;
        for win in self.breaks.windows(2) {
            lo = lo.min(win[0] * win[1]);
        }
        let first = self.breaks[0];
        let last = *self.breaks.last().unwrap();
        lo.min(first * first).min(last * last)
    }

    /// Largest w admitted (endpoint square).
    pub fn w_ceiling(&self) -> f64 {
        let first = self.breaks[0];
        let last = *self.breaks.last().unwrap();
        (first * first).max(last * last)
    }
}

/// Deactivation constant: bounds the worst violation of any partition's rows
/// by a point lying on the envelope of another partition.
pub fn big_m(y_lo: f64, y_hi: f64) -> f64 {
    assert!(y_lo <= y_hi, "inverted interval");
    (y_hi - y_lo) * (y_hi - y_lo)
}

/// Builds the N-partition square envelope over [y_lo, y_hi].
pub fn square_envelope(y_lo: f64, y_hi: f64, partitions: usize) -> Envelope {
    assert!(y_lo <= y_hi, "inverted interval");
    assert!(partitions >= 1, "need at least one partition");
    let n = partitions as f64;
    let breaks: Vec<f64> = (0..=partitions)
        .map(|p| {
            if p == partitions {
                y_hi // exact endpoint, no rounding drift
            } else {
                y_lo + (p as f64) * (y_hi - y_lo) / n
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(3 * partitions);
    for p in 0..partitions {
        let (lo, hi) = (breaks[p], breaks[p + 1]);
        rows.push(EnvelopeRow {
            kind: EnvelopeKind::UnderLo,
            partition: p,
            y_coef: 2.0 * lo,
            w_coef: -1.0,
            rhs: lo * lo,
        });
        rows.push(EnvelopeRow {
            kind: EnvelopeKind::UnderHi,
            partition: p,
            y_coef: 2.0 * hi,
            w_coef: -1.0,
            rhs: hi * hi,
        });
        rows.push(EnvelopeRow {
            kind: EnvelopeKind::Over,
            partition: p,
            y_coef: -(lo + hi),
            w_coef: 1.0,
            rhs: -(lo * hi),
        });
    }
    Envelope { rows, breaks, big_m: big_m(y_lo, y_hi) }
}

/// Which caps the lifting carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftMode {
    /// Both objectives lifted, one refinement cap each.
    Aws,
    /// Only the constrained objective lifted, single bound row.
    Epsilon,
}

/// Selector ownership for N >= 2 partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorSharing {
    /// One selector block per lifted objective (sound).
    Independent,
    /// A single selector pair gates both objectives' rows.
    PaperShared,
}

/// A McCormick-lifted system over the extended vector
/// (x, y-blocks, w-blocks, selector-blocks).
#[derive(Debug, Clone)]
pub struct LiftedProblem {
    /// Base variable count n.
    pub n_base: usize,
    /// Extended variable count.
    pub n_total: usize,
    /// All rows (base + coupling + envelope + selector + cap) over n_total columns.
    pub system: LinearSystem,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub binary: Vec<bool>,
    pub mode: LiftMode,
    pub layers: usize,
    pub sharing: SelectorSharing,
    /// Factored objectives in lift order (AWS: [f1, f2]; epsilon: [fj]).
    pub factors: Vec<FactoredObjective>,
    /// y-block start column per lifted objective.
    pub y_offset: Vec<usize>,
    /// w-block start column per lifted objective.
    pub w_offset: Vec<usize>,
    /// Selector block group start per selector owner (empty when N = 1).
    pub selector_offset: Vec<usize>,
    /// Per-objective cap slack ε·Σ max(x_L², x_U²) added to the cap rhs so the
    /// regularization term can never cut an exact-feasible point.
    pub reg_slack: Vec<f64>,
}

impl LiftedProblem {
    /// Selector column for (owner group, partition, coordinate).
    pub fn selector_col(&self, owner: usize, partition: usize, coord: usize) -> usize {
        self.selector_offset[owner] + partition * self.n_base + coord
    }

    /// Extends a base-feasible point canonically: y = Lᵀx, w = y², selectors
    /// by partition membership (owner group 0's envelope decides shared q's).
    pub fn canonical_lift(&self, x_base: &[f64]) -> Vec<f64> {
        assert_eq!(x_base.len(), self.n_base);
        let mut x = vec![0.0; self.n_total];
        x[..self.n_base].copy_from_slice(x_base);
        for (k, fac) in self.factors.iter().enumerate() {
            for i in 0..self.n_base {
                let y = fac.l_diag[i] * x_base[i];
                x[self.y_offset[k] + i] = y;
                x[self.w_offset[k] + i] = y * y;
            }
        }
        if self.layers >= 2 {
            for (owner, _) in self.selector_offset.iter().enumerate() {
                // Independent groups follow their own objective; a shared
                // group follows objective 0.
                let k = if self.selector_offset.len() == self.factors.len() { owner } else { 0 };
                let fac = &self.factors[k];
                for i in 0..self.n_base {
                    let env = square_envelope(fac.y_lower[i], fac.y_upper[i], self.layers);
                    let p = env.partition_of(fac.l_diag[i] * x_base[i]);
                    x[self.selector_col(owner, p, i)] = 1.0;
                }
            }
        }
        x
    }

    /// Largest violation of any row/bound at `x` (negative means slack).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (idx, row) in self.system.rows.iter().enumerate() {
            worst = worst.max(row.dot(x) - self.system.b[idx]);
        }
        for i in 0..self.n_total {
            worst = worst.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        worst
    }
}

/// Lifts both objectives with AWS refinement caps `f_k(x) <= cap_k`.
pub fn lift_aws_caps(
    base: &QuadraticModel,
    f1_fac: &FactoredObjective,
    f2_fac: &FactoredObjective,
    cap1: f64,
    cap2: f64,
    layers: usize,
    sharing: SelectorSharing,
) -> LiftedProblem {
    lift(
        base,
        vec![f1_fac.clone(), f2_fac.clone()],
        vec![cap1, cap2],
        layers,
        sharing,
        LiftMode::Aws,
    )
}

/// Lifts the constrained objective with the bound `f_j(x) <= lj + ε(uj - lj)`.
pub fn lift_epsilon(
    base: &QuadraticModel,
    fj_fac: &FactoredObjective,
    lj: f64,
    uj: f64,
    epsilon: f64,
    layers: usize,
) -> LiftedProblem {
    assert!(lj <= uj, "inverted bound interval");
    assert!((0.0..=1.0).contains(&epsilon), "epsilon outside [0,1]");
    lift(
        base,
        vec![fj_fac.clone()],
        vec![lj + epsilon * (uj - lj)],
        layers,
        SelectorSharing::Independent,
        LiftMode::Epsilon,
    )
}

fn lift(
    base: &QuadraticModel,
    factors: Vec<FactoredObjective>,
    caps: Vec<f64>,
    layers: usize,
    sharing: SelectorSharing,
    mode: LiftMode,
) -> LiftedProblem {
    assert!(layers >= 1, "need at least one layer");
    let n = base.layout.n;
    let k = factors.len();
    let selector_groups = if layers == 1 {
        0
    } else if k == 2 && sharing == SelectorSharing::PaperShared {
        1
    } else {
        k
    };
    let n_total = n * (1 + 2 * k) + n * layers * selector_groups;

    let mut lower = vec![0.0; n_total];
    let mut upper = vec![0.0; n_total];
    let mut binary = vec![false; n_total];
    lower[..n].copy_from_slice(&base.layout.lower);
    upper[..n].copy_from_slice(&base.layout.upper);
    binary[..n].copy_from_slice(&base.layout.binary);

    let y_offset: Vec<usize> = (0..k).map(|j| n + j * n).collect();
    let w_offset: Vec<usize> = (0..k).map(|j| n * (1 + k) + j * n).collect();
    let sel_base = n * (1 + 2 * k);
    let selector_offset: Vec<usize> =
        (0..selector_groups).map(|g| sel_base + g * layers * n).collect();

    let envelopes: Vec<Vec<Envelope>> = factors
        .iter()
        .map(|fac| {
            (0..n)
                .map(|i| square_envelope(fac.y_lower[i], fac.y_upper[i], layers))
                .collect()
        })
        .collect();

    for (j, fac) in factors.iter().enumerate() {
        for i in 0..n {
            lower[y_offset[j] + i] = fac.y_lower[i];
            upper[y_offset[j] + i] = fac.y_upper[i];
            lower[w_offset[j] + i] = envelopes[j][i].w_floor();
            upper[w_offset[j] + i] = envelopes[j][i].w_ceiling();
        }
    }
    for &off in &selector_offset {
        for c in off..off + layers * n {
            lower[c] = 0.0;
            upper[c] = 1.0;
            binary[c] = true;
        }
    }

    let mut sys = base.constraints.clone();
    let lifted = LiftedProblem {
        n_base: n,
        n_total,
        system: LinearSystem::default(), // filled below
        lower,
        upper,
        binary,
        mode,
        layers,
        sharing,
        factors,
        y_offset,
        w_offset,
        selector_offset,
        reg_slack: Vec::new(),
    };

    for (j, fac) in lifted.factors.iter().enumerate() {
        for i in 0..n {
            let y_col = lifted.y_offset[j] + i;
            // Coupling y = L x as two halves.
            sys.push(
                SparseRow::new(vec![i, y_col], vec![fac.l_diag[i], -1.0]),
                0.0,
                RowTag::Couple,
            );
            sys.push(
                SparseRow::new(vec![y_col, i], vec![1.0, -fac.l_diag[i]]),
                0.0,
                RowTag::Couple,
            );
            let w_col = lifted.w_offset[j] + i;
            let env = &envelopes[j][i];
            let owner = if lifted.selector_offset.len() == 1 { 0 } else { j };
            for row in &env.rows {
                if layers == 1 {
                    sys.push(
                        SparseRow::new(vec![w_col, y_col], vec![row.w_coef, row.y_coef]),
                        row.rhs,
                        RowTag::Envelope,
                    );
                } else {
                    // Foreign partitions are switched off by (1 - q_p)·M.
                    let q_col = lifted.selector_col(owner, row.partition, i);
                    sys.push(
                        SparseRow::new(
                            vec![w_col, y_col, q_col],
                            vec![row.w_coef, row.y_coef, env.big_m],
                        ),
                        row.rhs + env.big_m,
                        RowTag::Envelope,
                    );
                }
            }
        }
    }
    if layers >= 2 {
        for owner in 0..lifted.selector_offset.len() {
            for i in 0..n {
                let cols: Vec<usize> =
                    (0..layers).map(|p| lifted.selector_col(owner, p, i)).collect();
                sys.push(SparseRow::new(cols.clone(), vec![1.0; layers]), 1.0, RowTag::SelectorSum);
                sys.push(SparseRow::new(cols, vec![-1.0; layers]), -1.0, RowTag::SelectorSum);
            }
        }
    }

    // Cap rows against the regularized quadratic: eᵀw + linᵀx <= cap + slack,
    // slack = ε·Σ max(x_L², x_U²) so ‖Lᵀx‖² = f(x) + ε‖x‖² stays admissible
    // whenever f(x) <= cap.
    let mut reg_slack = Vec::with_capacity(lifted.factors.len());
    for (j, fac) in lifted.factors.iter().enumerate() {
        let slack: f64 = fac.epsilon_reg
            * (0..n)
                .map(|i| {
                    let (a, b) = (base.layout.lower[i], base.layout.upper[i]);
                    (a * a).max(b * b)
                })
                .sum::<f64>();
        reg_slack.push(slack);
        let mut cols: Vec<usize> = (0..n).map(|i| lifted.w_offset[j] + i).collect();
        let mut vals = vec![1.0; n];
        for i in 0..n {
            if fac.lin[i] != 0.0 {
                cols.push(i);
                vals.push(fac.lin[i]);
            }
        }
        sys.push(
            SparseRow::new(cols, vals),
            caps[j] - fac.constant + slack,
            RowTag::Cap,
        );
    }

    LiftedProblem { system: sys, reg_slack, ..lifted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{GenConfig, Instance, ThermalUnit};
    use crate::model::build_model;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn regularization_examples() {
        let obj = QuadraticObjective { quad: vec![4.0, 0.0], lin: vec![0.0; 2], constant: 0.0 };
        let fac = regularize_and_factor(&obj, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((fac.epsilon_reg - 0.04).abs() < 1e-15);
        assert!((fac.l_diag[0] - 4.04f64.sqrt()).abs() < 1e-15);
        assert!((fac.l_diag[1] - 0.04f64.sqrt()).abs() < 1e-15);

        let obj = QuadraticObjective { quad: vec![1.0], lin: vec![0.0], constant: 0.0 };
        let fac = regularize_and_factor(&obj, &[0.0], &[2.0]).unwrap();
        assert_eq!(fac.y_lower[0], 0.0);
        assert!((fac.y_upper[0] - 2.0 * (1.0 + fac.epsilon_reg).sqrt()).abs() < 1e-15);

        let obj = QuadraticObjective::zeros(3);
        let fac = regularize_and_factor(&obj, &[0.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(fac.epsilon_reg, 1e-8);
        for l in &fac.l_diag {
            assert!((l - 1e-8f64.sqrt()).abs() < 1e-20);
        }
    }

    #[test]
    fn factorization_roundtrip_within_tolerance() {
        let obj = QuadraticObjective { quad: vec![3.0, 0.5, 0.0], lin: vec![0.0; 3], constant: 0.0 };
        let fac = regularize_and_factor(&obj, &[0.0; 3], &[1.0; 3]).unwrap();
        for i in 0..3 {
            let back = fac.l_diag[i] * fac.l_diag[i];
            assert!((back - (obj.quad[i] + fac.epsilon_reg)).abs() <= 1e-10 * back.max(1.0));
        }
    }

    #[test]
    fn envelope_single_layer_rows() {
        let env = square_envelope(0.0, 2.0, 1);
        assert_eq!(env.rows.len(), 3);
        // At y = 1 the admitted w range is [0, 2] around the true value 1.
        let eval = |row: &EnvelopeRow, y: f64, w: f64| row.w_coef * w + row.y_coef * y - row.rhs;
        let feasible = |y: f64, w: f64| env.rows.iter().all(|r| eval(r, y, w) <= 1e-12);
        assert!(feasible(1.0, 0.0));
        assert!(feasible(1.0, 2.0));
        assert!(!feasible(1.0, -0.01));
        assert!(!feasible(1.0, 2.01));
        // At y = 2 the envelope pinches to exactly w = 4.
        assert!(feasible(2.0, 4.0));
        assert!(!feasible(2.0, 3.99));
        assert!(!feasible(2.0, 4.01));
    }

    #[test]
    fn envelope_two_layer_partitions() {
        let env = square_envelope(0.0, 2.0, 2);
        assert_eq!(env.breaks, vec![0.0, 1.0, 2.0]);
        assert_eq!(env.rows.len(), 6);
    }

    #[test]
    fn endpoint_exactness() {
        for (lo, hi, parts) in [(0.0, 2.0, 1), (-3.0, 1.0, 2), (0.5, 9.25, 4)] {
            let env = square_envelope(lo, hi, parts);
            for p in 0..parts {
                for &y_star in &[env.breaks[p], env.breaks[p + 1]] {
                    let w = y_star * y_star;
                    for row in env.rows.iter().filter(|r| r.partition == p) {
                        let slack = row.rhs - (row.w_coef * w + row.y_coef * y_star);
                        match row.kind {
                            // UnderHi touches at the upper endpoint, UnderLo
                            // at the lower one, the chord at both.
                            EnvelopeKind::Over => assert!(slack.abs() <= 1e-12),
                            EnvelopeKind::UnderLo if y_star == env.breaks[p] => {
                                assert!(slack.abs() <= 1e-12)
                            }
                            EnvelopeKind::UnderHi if y_star == env.breaks[p + 1] => {
                                assert!(slack.abs() <= 1e-12)
                            }
                            _ => assert!(slack >= -1e-12),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn big_m_examples() {
        assert_eq!(big_m(0.0, 2.0), 4.0);
        assert_eq!(big_m(1.0, 1.0), 0.0);
        assert_eq!(big_m(-3.0, 1.0), 16.0);
    }

    fn small_model() -> QuadraticModel {
        let inst = Instance {
            name: "lift".into(),
            periods: 2,
            demand: vec![4.0, 6.0],
            hydro_scaling: 0.5,
            thermal: vec![
                ThermalUnit {
                    id: 0,
                    cost_quad: 0.5,
                    cost_lin: 2.0,
                    cost_const: 1.0,
                    startup_cost: 3.0,
                    p_min: 1.0,
                    p_max: 8.0,
                    min_up: 1,
                    min_down: 1,
                    co2_lin: 0.4,
                    co2_quad: 0.02,
                },
            ],
            hydro: vec![],
        };
        inst.validate().unwrap();
        build_model(&inst)
    }

    #[test]
    fn lifted_variable_counts() {
        let m = small_model();
        let n = m.layout.n;
        let f1 = regularize_and_factor(&m.f1, &m.layout.lower, &m.layout.upper).unwrap();
        let f2 = regularize_and_factor(&m.f2, &m.layout.lower, &m.layout.upper).unwrap();

        let aws1 = lift_aws_caps(&m, &f1, &f2, 100.0, 100.0, 1, SelectorSharing::Independent);
        assert_eq!(aws1.n_total, 5 * n);
        let aws2 = lift_aws_caps(&m, &f1, &f2, 100.0, 100.0, 2, SelectorSharing::PaperShared);
        assert_eq!(aws2.n_total, 7 * n);
        let aws2i = lift_aws_caps(&m, &f1, &f2, 100.0, 100.0, 2, SelectorSharing::Independent);
        assert_eq!(aws2i.n_total, 9 * n);
        let eps1 = lift_epsilon(&m, &f2, 0.0, 10.0, 0.5, 1);
        assert_eq!(eps1.n_total, 3 * n);
        let eps2 = lift_epsilon(&m, &f2, 0.0, 10.0, 0.5, 2);
        assert_eq!(eps2.n_total, 5 * n);
    }

    #[test]
    fn epsilon_bound_rhs() {
        let m = small_model();
        let f2 = regularize_and_factor(&m.f2, &m.layout.lower, &m.layout.upper).unwrap();
        for (eps, want) in [(0.0, 3.0), (1.0, 11.0), (0.25, 5.0)] {
            let lp = lift_epsilon(&m, &f2, 3.0, 11.0, eps, 1);
            let cap_row = lp
                .system
                .tags
                .iter()
                .position(|&t| t == RowTag::Cap)
                .unwrap();
            let rhs = lp.system.b[cap_row];
            assert!((rhs - (want + lp.reg_slack[0])).abs() < 1e-9);
        }
    }

    /// Random base-feasible point: committed schedule plus demand met by
    /// inflating generation proportionally.
    fn random_feasible(m: &QuadraticModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = vec![0.0; m.layout.n];
        let t_len = m.layout.periods;
        for t in 0..t_len {
            x[m.layout.z_index(0, t)] = 1.0;
            if t == 0 {
                x[m.layout.y_index(0, t)] = 1.0;
            }
            let g = rng.gen_range(0.0..1.0);
            // Demand row is -g <= -d, so generation must reach d_t.
            let demand = -m.constraints.b[m
                .constraints
                .tags
                .iter()
                .enumerate()
                .filter(|(_, &tag)| tag == RowTag::Demand)
                .map(|(i, _)| i)
                .nth(t)
                .unwrap()];
            x[m.layout.g_index(0, t)] = demand + g * (8.0 - demand);
        }
        x
    }

    #[test]
    fn canonical_lifts_of_feasible_points_are_feasible() {
        let m = small_model();
        let f1 = regularize_and_factor(&m.f1, &m.layout.lower, &m.layout.upper).unwrap();
        let f2 = regularize_and_factor(&m.f2, &m.layout.lower, &m.layout.upper).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for layers in 1..=3usize {
            for _ in 0..200 {
                let x = random_feasible(&m, &mut rng);
                let (c1, c2) = (m.f1.evaluate(&x), m.f2.evaluate(&x));
                let lp = lift_aws_caps(&m, &f1, &f2, c1, c2, layers, SelectorSharing::Independent);
                let lifted = lp.canonical_lift(&x);
                assert!(
                    lp.max_violation(&lifted) <= 1e-8,
                    "layers={layers} violation={}",
                    lp.max_violation(&lifted)
                );
            }
        }
    }

    #[test]
    fn shared_selectors_can_cut_exact_points() {
        // Shared selectors force one partition choice for both objectives.
        // The model's diagonal factors always place y1 and y2 at the same
        // relative position, so the split is manufactured by handing the
        // second factor an asymmetric bound image: y1 in [0,2] (midpoint 1),
        // y2 in [-2,2] (midpoint 0).  At x = 0.5, y1 = 0.5 sits in the first
        // partition of its interval while y2 = 0.5 sits in the second.
        // Collapse to a single free coordinate: 1 unit, 1 period.
        let inst = Instance {
            name: "one".into(),
            periods: 1,
            demand: vec![0.0],
            hydro_scaling: 0.5,
            thermal: vec![ThermalUnit {
                id: 0,
                cost_quad: 1.0,
                cost_lin: 0.0,
                cost_const: 0.0,
                startup_cost: 0.0,
                p_min: 0.0,
                p_max: 2.0,
                min_up: 1,
                min_down: 1,
                co2_lin: 0.0,
                co2_quad: 1.0,
            }],
            hydro: vec![],
        };
        let m = build_model(&inst);
        let n = m.layout.n;
        let mut f1 = regularize_and_factor(&m.f1, &m.layout.lower, &m.layout.upper).unwrap();
        let mut f2 = regularize_and_factor(&m.f2, &m.layout.lower, &m.layout.upper).unwrap();
        // Hand-set bound images for the g coordinate (column 0).
        f1.l_diag[0] = 1.0;
        f1.y_lower[0] = 0.0;
        f1.y_upper[0] = 2.0;
        f2.l_diag[0] = 1.0;
        f2.y_lower[0] = -2.0;
        f2.y_upper[0] = 2.0;
        let cap = 1e6; // caps slack; only envelope feasibility is at stake
        let x = {
            let mut x = vec![0.0; n];
            x[m.layout.g_index(0, 0)] = 0.5;
            x[m.layout.z_index(0, 0)] = 1.0;
            x[m.layout.y_index(0, 0)] = 1.0;
            x
        };
        let shared = lift_aws_caps(&m, &f1, &f2, cap, cap, 2, SelectorSharing::PaperShared);
        let independent = lift_aws_caps(&m, &f1, &f2, cap, cap, 2, SelectorSharing::Independent);
        assert!(independent.max_violation(&independent.canonical_lift(&x)) <= 1e-9);
        // Under sharing, no selector assignment admits the canonical w = y²
        // for both objectives at once.
        let base_lift = shared.canonical_lift(&x);
        let mut best = f64::INFINITY;
        for p in 0..2 {
            let mut cand = base_lift.clone();
            for q in 0..2 {
                cand[shared.selector_col(0, q, 0)] = if q == p { 1.0 } else { 0.0 };
            }
            best = best.min(shared.max_violation(&cand));
        }
        assert!(best > 1e-6, "shared selectors unexpectedly feasible: {best}");
    }

    #[test]
    fn cap_rows_admit_regularized_values() {
        // Paper-scale sanity: the cap slack keeps canonical lifts feasible on
        // a generated instance.
        let inst = crate::instance::generate_instance(GenConfig {
            thermal: 2,
            hydro: 1,
            periods: 3,
            seed: 5,
        });
        let m = build_model(&inst);
        let f1 = regularize_and_factor(&m.f1, &m.layout.lower, &m.layout.upper).unwrap();
        let f2 = regularize_and_factor(&m.f2, &m.layout.lower, &m.layout.upper).unwrap();
        // All-on schedule at max output is feasible (demand <= 80% capacity).
        let mut x = vec![0.0; m.layout.n];
        for i in 0..m.layout.units {
            for t in 0..m.layout.periods {
                x[m.layout.g_index(i, t)] = m.layout.upper[m.layout.g_index(i, t)];
            }
        }
        for i in 0..m.layout.committed_units {
            for t in 0..m.layout.periods {
                x[m.layout.z_index(i, t)] = 1.0;
                if t == 0 {
                    x[m.layout.y_index(i, t)] = 1.0;
                }
            }
        }
        assert!(crate::model::check_feasible(&m, &x, 1e-9).is_feasible());
        let lp = lift_aws_caps(
            &m,
            &f1,
            &f2,
            m.f1.evaluate(&x),
            m.f2.evaluate(&x),
            2,
            SelectorSharing::Independent,
        );
        assert!(lp.max_violation(&lp.canonical_lift(&x)) <= 1e-8);
    }
}
