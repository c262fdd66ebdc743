//! Pareto-front bookkeeping: dominance filtering, exact two-dimensional
//! hypervolume, normalization, and reference-point construction.
//!
//! All objectives are minimized.  A point `a` dominates `b` when it is no
//! worse in every coordinate and strictly better in at least one.

/// True when `a` dominates `b` (minimization).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Keeps the nondominated subset, preserving first occurrences of
/// duplicates and the original relative order.
pub fn filter_nondominated(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut keep = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if dominates(q, p) {
                continue 'outer;
            }
            if j < i && q == p {
                continue 'outer; // duplicate: first occurrence wins
            }
        }
        keep.push(p.clone());
    }
    keep
}

/// Exact hypervolume of a two-objective point set against `reference`
/// (both minimized).  Points at or beyond the reference contribute nothing;
/// the second return value counts how many were excluded for that reason.
pub fn hypervolume_2d(points: &[Vec<f64>], reference: &[f64; 2]) -> (f64, usize) {
    let inside: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .cloned()
        .collect();
    let excluded = points.len() - inside.len();
    let mut nd = filter_nondominated(&inside);
    nd.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    // Sweep left to right; each point covers a rectangle up to the previous
    // point's f2 (nondominated + sorted by f1 ascending ⇒ f2 descending).
    let mut hv = 0.0;
    let mut prev_f2 = reference[1];
    for p in &nd {
        hv += (reference[0] - p[0]) * (prev_f2 - p[1]);
        prev_f2 = p[1];
    }
    (hv, excluded)
}

/// Reference point: componentwise `worst + (factor - 1) * |worst|`, which
/// moves away from the front for any sign of `worst`.
pub fn reference_point(points: &[Vec<f64>], factor: f64) -> Vec<f64> {
    assert!(!points.is_empty());
    assert!(factor >= 1.0);
    let dim = points[0].len();
    let mut r = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for k in 0..dim {
            r[k] = r[k].max(p[k]);
        }
    }
    for v in &mut r {
        *v += (factor - 1.0) * v.abs();
    }
    r
}

/// Result of objective-space normalization.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub points: Vec<Vec<f64>>,
    /// Per-coordinate flag: true when the range was degenerate (all points
    /// shared the value) and the coordinate was mapped to 0.
    pub degenerate: Vec<bool>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Affinely maps each coordinate onto [0, 1] using `lower`/`upper` anchors
/// (typically utopia/nadir).  Degenerate coordinates map to 0.
pub fn normalize(points: &[Vec<f64>], lower: &[f64], upper: &[f64]) -> Normalized {
    let dim = lower.len();
    let degenerate: Vec<bool> = (0..dim).map(|k| (upper[k] - lower[k]).abs() < 1e-12).collect();
    let mapped = points
        .iter()
        .map(|p| {
            (0..dim)
                .map(|k| {
                    if degenerate[k] {
                        0.0
                    } else {
                        (p[k] - lower[k]) / (upper[k] - lower[k])
                    }
                })
                .collect()
        })
        .collect();
    Normalized {
        points: mapped,
        degenerate,
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    }
}

/// Euclidean lengths of consecutive segments of a polyline in objective
/// space (points taken in the given order).
pub fn segment_lengths(points: &[Vec<f64>]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// One solved point on a front, with provenance.
#[derive(Debug, Clone)]
pub struct FrontPoint {
    pub objectives: Vec<f64>,
    /// Scalarization parameter that produced it (weight or ε level).
    pub parameter: f64,
    pub x: Vec<f64>,
    pub solve_ms: u128,
    pub status: String,
}

/// Incrementally maintained nondominated archive, sorted by the first
/// objective.
#[derive(Debug, Clone, Default)]
pub struct ParetoFront {
    points: Vec<FrontPoint>,
}

const DUP_TOL: f64 = 1e-9;

impl ParetoFront {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[FrontPoint] {
        &self.points
    }

    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.objectives.clone()).collect()
    }

    /// Inserts `p` unless it is dominated by or duplicates (within 1e-9 in
    /// every coordinate) an archived point; evicts points it dominates.
    /// Returns whether the point was kept.
    pub fn insert(&mut self, p: FrontPoint) -> bool {
        for q in &self.points {
            if dominates(&q.objectives, &p.objectives) {
                return false;
            }
            if q.objectives
                .iter()
                .zip(&p.objectives)
                .all(|(a, b)| (a - b).abs() <= DUP_TOL)
            {
                return false;
            }
        }
        self.points.retain(|q| !dominates(&p.objectives, &q.objectives));
        let at = self
            .points
            .partition_point(|q| q.objectives[0] < p.objectives[0]);
        self.points.insert(at, p);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[1.0, 2.0], &[2.0, 2.0]));
        assert!(dominates(&[1.0, 1.0], &[2.0, 2.0]));
        assert!(!dominates(&[1.0, 3.0], &[2.0, 2.0]));
        assert!(!dominates(&[2.0, 2.0], &[2.0, 2.0])); // no strict coord
        assert!(!dominates(&[2.0, 2.0], &[1.0, 2.0]));
    }

    #[test]
    fn filter_keeps_first_duplicate() {
        let pts = vec![
            vec![1.0, 3.0],
            vec![2.0, 2.0],
            vec![1.0, 3.0],
            vec![3.0, 3.0],
        ];
        let nd = filter_nondominated(&pts);
        assert_eq!(nd, vec![vec![1.0, 3.0], vec![2.0, 2.0]]);
    }

    #[test]
    fn hypervolume_reference_example() {
        let pts = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0]];
        let (hv, excl) = hypervolume_2d(&pts, &[4.0, 4.0]);
        assert!((hv - 6.0).abs() < 1e-12);
        assert_eq!(excl, 0);
    }

    #[test]
    fn hypervolume_excludes_outside_points() {
        let pts = vec![vec![1.0, 3.0], vec![5.0, 0.0], vec![3.0, 1.0]];
        let (hv, excl) = hypervolume_2d(&pts, &[4.0, 4.0]);
        assert!((hv - 5.0).abs() < 1e-12); // (4-1)(4-3) + (4-3)(3-1)
        assert_eq!(excl, 1);
    }

    #[test]
    fn hypervolume_ignores_dominated_points() {
        let pts = vec![vec![1.0, 3.0], vec![3.0, 1.0]];
        let (base, _) = hypervolume_2d(&pts, &[4.0, 4.0]);
        let mut with_dom = pts.clone();
        with_dom.push(vec![3.5, 3.5]);
        let (hv, _) = hypervolume_2d(&with_dom, &[4.0, 4.0]);
        assert!((hv - base).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_single_point_is_rectangle() {
        let (hv, _) = hypervolume_2d(&[vec![1.0, 2.0]], &[4.0, 5.0]);
        assert!((hv - 9.0).abs() < 1e-12);
        let (hv0, excl) = hypervolume_2d(&[vec![4.0, 2.0]], &[4.0, 5.0]);
        assert_eq!(hv0, 0.0);
        assert_eq!(excl, 1);
    }

    #[test]
    fn monte_carlo_hypervolume_agreement() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for _ in 0..8 {
            let f1: f64 = rng.gen_range(0.0..3.0);
            pts.push(vec![f1, 3.0 - f1 + rng.gen_range(0.0..0.5)]);
        }
        let r = [4.0, 4.5];
        let (hv, _) = hypervolume_2d(&pts, &r);
        let nd = filter_nondominated(&pts);
        let samples = 1_000_000usize;
        let mut hit = 0usize;
        for _ in 0..samples {
            let s = [rng.gen_range(0.0..r[0]), rng.gen_range(0.0..r[1])];
            if nd.iter().any(|p| p[0] <= s[0] && p[1] <= s[1]) {
                hit += 1;
            }
        }
        let area = r[0] * r[1];
        let p_hat = hit as f64 / samples as f64;
        let mc = p_hat * area;
        let se = area * (p_hat * (1.0 - p_hat) / samples as f64).sqrt();
        assert!(
            (mc - hv).abs() <= 3.0 * se + 1e-9,
            "mc {} hv {} se {}",
            mc,
            hv,
            se
        );
    }

    #[test]
    fn reference_point_is_sign_safe() {
        let r = reference_point(&[vec![2.0, -4.0], vec![1.0, -6.0]], 1.1);
        assert!((r[0] - 2.2).abs() < 1e-12);
        assert!((r[1] - (-4.0 + 0.4)).abs() < 1e-12);
        // Strictly worse than every point in both coordinates.
        assert!(r[0] > 2.0 && r[1] > -4.0);
    }

    #[test]
    fn normalization_and_degeneracy() {
        let n = normalize(
            &[vec![10.0, 5.0], vec![20.0, 5.0]],
            &[10.0, 5.0],
            &[20.0, 5.0],
        );
        assert_eq!(n.points[0], vec![0.0, 0.0]);
        assert_eq!(n.points[1], vec![1.0, 0.0]);
        assert_eq!(n.degenerate, vec![false, true]);
    }

    #[test]
    fn segment_length_examples() {
        let l = segment_lengths(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![3.0, 6.0]]);
        assert_eq!(l, vec![5.0, 2.0]);
        assert!(segment_lengths(&[vec![1.0, 1.0]]).is_empty());
    }

    fn fp(f1: f64, f2: f64) -> FrontPoint {
        FrontPoint {
            objectives: vec![f1, f2],
            parameter: 0.0,
            x: vec![],
            solve_ms: 0,
            status: "Optimal".into(),
        }
    }

    #[test]
    fn archive_insert_evicts_and_sorts() {
        let mut f = ParetoFront::new();
        assert!(f.insert(fp(2.0, 2.0)));
        assert!(f.insert(fp(1.0, 3.0)));
        assert!(!f.insert(fp(2.5, 2.5))); // dominated
        assert!(!f.insert(fp(1.0 + 1e-10, 3.0))); // duplicate within tol
        assert!(f.insert(fp(0.5, 1.5))); // dominates both archived points
        assert_eq!(f.len(), 1);
        assert!(f.insert(fp(3.0, 1.0)));
        let objs = f.objectives();
        assert!(objs.windows(2).all(|w| w[0][0] <= w[1][0]));
    }

    proptest! {
        #[test]
        fn filtered_set_is_mutually_nondominated(
            pts in proptest::collection::vec(
                proptest::collection::vec(-10.0..10.0f64, 2), 1..30)
        ) {
            let nd = filter_nondominated(&pts);
            for a in &nd {
                for b in &nd {
                    prop_assert!(!dominates(a, b));
                }
            }
            // Every input point is dominated by or equal to a kept point.
            for p in &pts {
                prop_assert!(nd.iter().any(|q| q == p || dominates(q, p)));
            }
        }

        #[test]
        fn hypervolume_monotone_under_insertion(
            pts in proptest::collection::vec(
                proptest::collection::vec(0.0..3.0f64, 2), 1..15),
            extra in proptest::collection::vec(0.0..3.0f64, 2)
        ) {
            let r = [3.5, 3.5];
            let (before, _) = hypervolume_2d(&pts, &r);
            let mut grown = pts.clone();
            grown.push(extra);
            let (after, _) = hypervolume_2d(&grown, &r);
            prop_assert!(after + 1e-12 >= before);
        }

        #[test]
        fn normalize_is_affine_order_preserving(
            vals in proptest::collection::vec(-5.0..5.0f64, 2..20)
        ) {
            let pts: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v]).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi - lo > 1e-9);
            let n = normalize(&pts, &[lo], &[hi]);
            for (a, b) in vals.iter().zip(&n.points) {
                let expect = (a - lo) / (hi - lo);
                prop_assert!((b[0] - expect).abs() < 1e-12);
            }
        }
    }
}
