//! LP-format export of scalarized subproblems.
//!
//! Output follows the CPLEX LP conventions: the objective's quadratic part
//! is written inside `[ ... ] / 2` with doubled coefficients, quadratic
//! constraints carry their coefficients literally, and binary columns are
//! listed in a `Binary` section.  Numbers are printed in scientific notation
//! with enough digits to round-trip an `f64` exactly.

use super::SubProblem;
use std::io::{self, Write};

/// Significant digits that guarantee exact f64 round-trips.
pub const FULL_PRECISION: usize = 17;

fn num(v: f64, sig: usize) -> String {
    format!("{:.*e}", sig.max(1) - 1, v)
}

fn linear_terms(out: &mut String, cols: &[usize], vals: &[f64], sig: usize, first: &mut bool) {
    for (&j, &v) in cols.iter().zip(vals) {
        if v == 0.0 {
            continue;
        }
        if *first {
            out.push_str(&format!("{} x{}", num(v, sig), j));
            *first = false;
        } else if v < 0.0 {
            out.push_str(&format!(" - {} x{}", num(-v, sig), j));
        } else {
            out.push_str(&format!(" + {} x{}", num(v, sig), j));
        }
    }
}

fn dense_terms(out: &mut String, vals: &[f64], sig: usize, first: &mut bool) {
    let cols: Vec<usize> = (0..vals.len()).collect();
    linear_terms(out, &cols, vals, sig, first);
}

fn square_terms(out: &mut String, vals: &[f64], sig: usize) -> bool {
    let mut first = true;
    for (j, &v) in vals.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        if first {
            out.push_str(&format!("{} x{} ^ 2", num(v, sig), j));
            first = false;
        } else if v < 0.0 {
            out.push_str(&format!(" - {} x{} ^ 2", num(-v, sig), j));
        } else {
            out.push_str(&format!(" + {} x{} ^ 2", num(v, sig), j));
        }
    }
    !first
}

/// Writes `p` in LP format with `sig` significant digits per number.
pub fn write_lp<W: Write>(w: &mut W, p: &SubProblem, sig: usize) -> io::Result<()> {
    let n = p.n();
    writeln!(w, "Minimize")?;

    let mut obj = String::from(" obj:");
    let mut body = String::new();
    let mut first = true;
    dense_terms(&mut body, &p.objective.lin, sig, &mut first);
    if !body.is_empty() {
        obj.push(' ');
        obj.push_str(&body);
    }
    let doubled: Vec<f64> = p.objective.quad.iter().map(|q| 2.0 * q).collect();
    let mut sq = String::new();
    if square_terms(&mut sq, &doubled, sig) {
        if !first {
            obj.push_str(" +");
        }
        obj.push_str(&format!(" [ {} ] / 2", sq));
        first = false;
    }
    if p.objective.constant != 0.0 {
        if first {
            obj.push_str(&format!(" {}", num(p.objective.constant, sig)));
        } else if p.objective.constant < 0.0 {
            obj.push_str(&format!(" - {}", num(-p.objective.constant, sig)));
        } else {
            obj.push_str(&format!(" + {}", num(p.objective.constant, sig)));
        }
    }
    writeln!(w, "{}", obj)?;

    writeln!(w, "Subject To")?;
    for (i, (row, &rhs)) in p.system.rows.iter().zip(&p.system.b).enumerate() {
        let mut line = format!(" c{}: ", i);
        let mut first = true;
        linear_terms(&mut line, &row.cols, &row.vals, sig, &mut first);
        if first {
            line.push('0');
        }
        line.push_str(&format!(" <= {}", num(rhs, sig)));
        writeln!(w, "{}", line)?;
    }
    for (i, qc) in p.quad_constraints.iter().enumerate() {
        let mut line = format!(" qc{}: ", i);
        let mut sq = String::new();
        let has_sq = square_terms(&mut sq, &qc.quad, sig);
        let mut first = true;
        if has_sq {
            line.push_str(&format!("[ {} ]", sq));
            first = false;
        }
        let mut lin = String::new();
        let mut lin_first = true;
        dense_terms(&mut lin, &qc.lin, sig, &mut lin_first);
        if !lin.is_empty() {
            if !first {
                line.push_str(if lin.starts_with('-') { " " } else { " + " });
            }
            line.push_str(&lin);
            first = false;
        }
        if first {
            line.push('0');
        }
        line.push_str(&format!(" <= {}", num(qc.rhs, sig)));
        writeln!(w, "{}", line)?;
    }

    writeln!(w, "Bounds")?;
    for j in 0..n {
        let lo = if p.lower[j] == f64::NEG_INFINITY {
            "-infinity".to_string()
        } else {
            num(p.lower[j], sig)
        };
        let hi = if p.upper[j] == f64::INFINITY {
            "+infinity".to_string()
        } else {
            num(p.upper[j], sig)
        };
        writeln!(w, " {} <= x{} <= {}", lo, j, hi)?;
    }

    let binaries: Vec<String> = (0..n)
        .filter(|&j| p.binary[j])
        .map(|j| format!("x{}", j))
        .collect();
    if !binaries.is_empty() {
        writeln!(w, "Binary")?;
        writeln!(w, " {}", binaries.join(" "))?;
    }
    writeln!(w, "End")?;
    Ok(())
}

/// Convenience wrapper returning the LP text as a string.
pub fn lp_string(p: &SubProblem, sig: usize) -> String {
    let mut buf = Vec::new();
    write_lp(&mut buf, p, sig).expect("in-memory write cannot fail");
    String::from_utf8(buf).expect("LP text is ASCII")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::QuadConstraint;
    use crate::model::{LinearSystem, QuadraticObjective, RowTag, SparseRow};

    fn small() -> SubProblem {
        let mut sys = LinearSystem::default();
        sys.push(SparseRow::new(vec![0, 1], vec![1.0, 1.0]), 5.0, RowTag::Demand);
        SubProblem {
            objective: QuadraticObjective {
                quad: vec![0.5, 0.0],
                lin: vec![1.0, -2.0],
                constant: 3.0,
            },
            system: sys,
            lower: vec![0.0, 0.0],
            upper: vec![10.0, 1.0],
            binary: vec![false, true],
            quad_constraints: vec![QuadConstraint {
                quad: vec![1.0, 0.0],
                lin: vec![0.0, 0.5],
                rhs: 4.0,
            }],
        }
    }

    #[test]
    fn sections_and_conventions() {
        let text = lp_string(&small(), 6);
        assert!(text.starts_with("Minimize\n"));
        assert!(text.contains("[ 1.00000e0 x0 ^ 2 ] / 2"), "{}", text);
        assert!(text.contains(" c0: 1.00000e0 x0 + 1.00000e0 x1 <= 5.00000e0"));
        assert!(text.contains(" qc0: [ 1.00000e0 x0 ^ 2 ] + 5.00000e-1 x1 <= 4.00000e0"));
        assert!(text.contains("\nBounds\n"));
        assert!(text.contains("\nBinary\n x1\n"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn objective_line_has_constant_and_negatives() {
        let text = lp_string(&small(), 6);
        assert!(text.contains("1.00000e0 x0 - 2.00000e0 x1"), "{}", text);
        assert!(text.contains("+ 3.00000e0\n"), "{}", text);
    }

    #[test]
    fn full_precision_round_trips() {
        let v = 0.1 + 0.2; // not exactly 0.3
        let s = num(v, FULL_PRECISION);
        assert_eq!(s.parse::<f64>().unwrap(), v);
    }

    #[test]
    fn empty_problem_is_still_well_formed() {
        let p = SubProblem {
            objective: QuadraticObjective::default(),
            system: LinearSystem::default(),
            lower: vec![],
            upper: vec![],
            binary: vec![],
            quad_constraints: vec![],
        };
        let text = lp_string(&p, 6);
        assert_eq!(text, "Minimize\n obj:\nSubject To\nBounds\nEnd\n");
    }

    #[test]
    fn infinite_bounds_spelled_out() {
        let mut p = small();
        p.lower[0] = f64::NEG_INFINITY;
        p.upper[0] = f64::INFINITY;
        let text = lp_string(&p, 6);
        assert!(text.contains(" -infinity <= x0 <= +infinity\n"));
    }
}
