//! Monotonization of a nonmonotone estimator for the Borel-Tanner family.
//!
//! The estimator `θ_n` is read as the nonrandomized rule `D(a; x) = I{θ_n(x) <= a}`,
//! a cdf on the action space `[0, 1]` for every `x`. Its operating
//! characteristic is
//!
//! ```text
//! α(a) = E_a D(a; X) = Σ_{x: θ_n(x) <= a} p_r(x; a).
//! ```
//!
//! The monotone randomized rule `D*` hands out the same probability `α(a)` but
//! fills the smallest observations first:
//!
//! ```text
//!            ⎧ 0                                 α(a) < F(x-1; a)
//! D*(a; x) = ⎨ (α(a) - F(x-1; a)) / p_r(x; a)     F(x-1; a) <= α(a) <= F(x; a)
//!            ⎩ 1                                 F(x; a) < α(a)
//! ```
//!
//! with `D*(1; x) = 1`, and it is de-randomized by taking the mean action
//! `θ*_n(x) = ∫ a dD*(a; x)`, evaluated as a midpoint Riemann–Stieltjes sum on
//! an [`ActionGrid`] refined with the jump points of `α`.
//!
//! Every sum runs over the same truncated support `r..=cap` as the source
//! table, so `Σ_x D*(a; x) p_r(x; a) = α(a)` holds on that support.

use rayon::prelude::*;

use crate::bt_dist::{log_coeffs, log_pmf_with_coeff};
use crate::eb_estimator::{EstimatorTable, Label};
use crate::error::{Error, NumericContext, Result};
use crate::numerics::{log_diff_exp, CompensatedSum, LogReal};

/// Default number of grid intervals on `[0, 1]`.
pub const DEFAULT_GRID_INTERVALS: usize = 2000;

/// Smallest accepted grid resolution.
pub const MIN_GRID_INTERVALS: usize = 100;

/// Largest correction cdf-ization may apply before failing.
pub const MAX_CDF_ADJUSTMENT: f64 = 1e-3;

/// Strictly increasing action points from exactly 0 to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    points: Vec<f64>,
}

impl ActionGrid {
    /// `m` equal intervals on `[0, 1]`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < MIN_GRID_INTERVALS {
            return Err(Error::domain(format!(
                "action grid needs at least {MIN_GRID_INTERVALS} intervals, got {m}"
            )));
        }
        let points = (0..=m)
            .map(|i| if i == m { 1.0 } else { i as f64 / m as f64 })
            .collect();
        Ok(Self { points })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < MIN_GRID_INTERVALS + 1 {
            return Err(Error::domain(format!(
                "action grid needs at least {MIN_GRID_INTERVALS} intervals"
            )));
        }
        if points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return Err(Error::domain("action grid must start at 0 and end at 1"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("action grid must be strictly increasing"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn max_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    fn position(&self, a: f64) -> Option<usize> {
        self.points.iter().position(|&p| p == a)
    }
}

/// `ln p_r(x; a)` for `x = r..=cap`; `a = 0` is the point mass at `r`.
fn log_pmf_column(r: u64, a: f64, log_c: &[f64]) -> Vec<f64> {
    if a == 0.0 {
        let mut col = vec![f64::NEG_INFINITY; log_c.len()];
        col[0] = 0.0;
        return col;
    }
    log_c
        .iter()
        .enumerate()
        .map(|(i, &lc)| log_pmf_with_coeff(r, a, lc, r + i as u64))
        .collect()
}

/// Which one-sided value of a right-continuous function of `a` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The value at `a`: `source(x) <= a` counts as accepted.
    At,
    /// The limit from the left: only `source(x) < a` counts.
    Left,
}

impl Side {
    fn accepts(self, v: f64, a: f64) -> bool {
        match self {
            Side::At => v <= a,
            Side::Left => v < a,
        }
    }
}

/// One evaluation point of the Stieltjes sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub a: f64,
    pub side: Side,
}

fn alpha_from_column(node: Node, source: &EstimatorTable, log_p: &[f64]) -> f64 {
    let Node { a, side } = node;
    if a == 0.0 {
        return if source.values()[0] <= 0.0 { 1.0 } else { 0.0 };
    }
    let mut acc = CompensatedSum::new();
    for (&v, &lp) in source.values().iter().zip(log_p) {
        if side.accepts(v, a) {
            acc.add(lp.exp());
        }
    }
    acc.value()
}

/// `α(a) = Σ_{x <= cap: source(x) <= a} p_r(x; a)`. At `a = 0` this is the
/// limit from above, `I{source(r) <= 0}`.
pub fn alpha_at(a: f64, source: &EstimatorTable) -> Result<f64> {
    check_action(a)?;
    let log_c = log_coeffs(source.r(), source.cap())?;
    let node = Node { a, side: Side::At };
    Ok(alpha_from_column(node, source, &log_pmf_column(source.r(), a, &log_c)))
}

fn check_action(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::domain(format!("action a must lie in [0, 1], got {a}")));
    }
    Ok(())
}

/// `D*(0; x)` as the limit `a ↓ 0`: one exactly when every `y` in `r..=x`
/// has `source(y) = 0`.
fn dstar_at_zero(source: &EstimatorTable, x: u64) -> f64 {
    let upto = (x - source.r()) as usize;
    if source.values()[..=upto].iter().all(|&v| v <= 0.0) {
        1.0
    } else {
        0.0
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    (LogReal::from_ln(a).unwrap_or(LogReal::ZERO) + LogReal::from_ln(b).unwrap_or(LogReal::ZERO)).ln()
}

/// All `D*(a; x)` for one action `a` in `(0, 1]`.
///
/// `α(a) - F(x-1; a)` is evaluated as `A_x - B_x`, with
/// `A_x = Σ_{y >= x, source(y) <= a} p(y)` and
/// `B_x = Σ_{y < x, source(y) > a} p(y)`, both accumulated in log space.
/// Differencing the cdf directly loses everything once `F` rounds to 1.
fn dstar_interior(node: Node, source: &EstimatorTable, log_p: &[f64]) -> Result<Vec<f64>> {
    let Node { a, side } = node;
    let n = log_p.len();
    let vals = source.values();
    let mut log_a = vec![f64::NEG_INFINITY; n + 1];
    for i in (0..n).rev() {
        log_a[i] = if side.accepts(vals[i], a) {
            logaddexp(log_a[i + 1], log_p[i])
        } else {
            log_a[i + 1]
        };
    }
    let mut out = Vec::with_capacity(n);
    let mut log_b = f64::NEG_INFINITY;
    for i in 0..n {
        let lp = log_p[i];
        let d = if log_a[i] <= log_b {
            0.0
        } else {
            let num = log_diff_exp(log_a[i], log_b)?;
            if !lp.is_finite() {
                return Err(Error::numeric(
                    NumericContext::new("monotonizer").at_x(source.r() + i as u64).at_a(a),
                    "log p_r(x; a) is not finite",
                ));
            }
            (num - lp).exp().min(1.0)
        };
        out.push(d);
        if !side.accepts(vals[i], a) {
            log_b = logaddexp(log_b, lp);
        }
    }
    Ok(out)
}

fn dstar_column(node: Node, source: &EstimatorTable, log_p: &[f64]) -> Result<Vec<f64>> {
    let a = node.a;
    if a >= 1.0 && node.side == Side::At {
        return Ok(vec![1.0; log_p.len()]);
    }
    if a == 0.0 {
        return Ok((source.r()..=source.cap())
            .map(|x| dstar_at_zero(source, x))
            .collect());
    }
    dstar_interior(node, source, log_p)
}

/// `D*(a; x)` for a single `x` in the table support.
pub fn dstar_at(a: f64, x: u64, source: &EstimatorTable) -> Result<f64> {
    check_action(a)?;
    if x < source.r() || x > source.cap() {
        return Err(Error::domain(format!(
            "x={x} outside the table support {}..={}",
            source.r(),
            source.cap()
        )));
    }
    let log_c = log_coeffs(source.r(), source.cap())?;
    let node = Node { a, side: Side::At };
    let col = dstar_column(node, source, &log_pmf_column(source.r(), a, &log_c))?;
    Ok(col[(x - source.r()) as usize])
}

/// Evaluation nodes for `source` on `grid`: every grid point, plus the left
/// limit at each jump of `α` (the values taken by `source` in `(0, 1]`, and
/// `a = 1` where `D*(1; x) = 1` is imposed).
///
/// A jump at `c` then contributes exactly `c · ΔD*` to the midpoint sum
/// (the interval `[c, c]` has midpoint `c`) instead of being smeared over
/// the grid cell that contains it.
pub fn evaluation_nodes(source: &EstimatorTable, grid: &ActionGrid) -> Vec<Node> {
    let mut jumps: Vec<f64> = source
        .values()
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .chain(std::iter::once(1.0))
        .collect();
    jumps.sort_by(f64::total_cmp);
    jumps.dedup();

    let mut nodes = Vec::with_capacity(grid.points.len() + 2 * jumps.len());
    let mut j = 0;
    for &p in &grid.points {
        while j < jumps.len() && jumps[j] < p {
            let c = jumps[j];
            nodes.push(Node { a: c, side: Side::Left });
            nodes.push(Node { a: c, side: Side::At });
            j += 1;
        }
        if j < jumps.len() && jumps[j] == p {
            nodes.push(Node { a: p, side: Side::Left });
            j += 1;
        }
        nodes.push(Node { a: p, side: Side::At });
    }
    nodes
}

/// The monotonized rule: α and the cdf-ized `D*` slices on the evaluation
/// nodes, and the de-randomized estimator.
#[derive(Debug, Clone)]
pub struct MonotoneRule {
    source: EstimatorTable,
    grid: ActionGrid,
    nodes: Vec<Node>,
    alpha: Vec<f64>,
    /// Row-major `[x - r][node index]`.
    dstar: Vec<f64>,
    max_adjustment: f64,
    result: EstimatorTable,
}

impl MonotoneRule {
    pub fn source(&self) -> &EstimatorTable {
        &self.source
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    /// Grid points plus left limits at the jumps of `α`, in order.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// `α` at each node.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Cdf-ized `D*(·; x)` at each node.
    pub fn dstar(&self, x: u64) -> Option<&[f64]> {
        if x < self.source.r() || x > self.source.cap() {
            return None;
        }
        let width = self.nodes.len();
        let row = (x - self.source.r()) as usize;
        Some(&self.dstar[row * width..(row + 1) * width])
    }

    /// Largest correction applied when turning the raw `D*` slices into cdfs.
    pub fn max_adjustment(&self) -> f64 {
        self.max_adjustment
    }

    /// The monotone estimator `θ*_n`.
    pub fn result(&self) -> &EstimatorTable {
        &self.result
    }

    pub fn into_result(self) -> EstimatorTable {
        self.result
    }
}

/// Builds `θ*_n` from `source` on `grid`.
pub fn monotonize(source: &EstimatorTable, grid: &ActionGrid) -> Result<MonotoneRule> {
    let r = source.r();
    let nx = (source.cap() - r + 1) as usize;
    let nodes = evaluation_nodes(source, grid);
    let width = nodes.len();
    let log_c = log_coeffs(r, source.cap())?;

    // Columns are independent; collect keeps them in node order.
    let columns: Vec<(f64, Vec<f64>)> = nodes
        .par_iter()
        .map(|&node| {
            let log_p = log_pmf_column(r, node.a, &log_c);
            Ok((
                alpha_from_column(node, source, &log_p),
                dstar_column(node, source, &log_p)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut alpha = Vec::with_capacity(width);
    let mut dstar = vec![0.0; nx * width];
    for (j, (al, d)) in columns.into_iter().enumerate() {
        for (i, v) in d.into_iter().enumerate() {
            dstar[i * width + j] = v;
        }
        alpha.push(al);
    }

    // Cdf-ize each slice (running max, clamp) and integrate a dD*(a; x).
    let mut max_adjustment: f64 = 0.0;
    let mut values = Vec::with_capacity(nx);
    for i in 0..nx {
        let row = &mut dstar[i * width..(i + 1) * width];
        let mut running: f64 = 0.0;
        for v in row.iter_mut() {
            let fixed = running.max(*v).clamp(0.0, 1.0);
            max_adjustment = max_adjustment.max((fixed - *v).abs());
            *v = fixed;
            running = fixed;
        }
        if max_adjustment > MAX_CDF_ADJUSTMENT {
            return Err(Error::numeric(
                NumericContext::new("monotonizer").at_x(r + i as u64),
                format!("D* needed a cdf correction of {max_adjustment:e}"),
            ));
        }
        let mut acc = CompensatedSum::new();
        for k in 0..width - 1 {
            let step = row[k + 1] - row[k];
            if step != 0.0 {
                acc.add(0.5 * (nodes[k].a + nodes[k + 1].a) * step);
            }
        }
        values.push(acc.value().clamp(0.0, 1.0));
    }

    let result = EstimatorTable::new(r, source.cap(), values, Label::MonotoneEb)?;
    Ok(MonotoneRule {
        source: source.clone(),
        grid: grid.clone(),
        nodes,
        alpha,
        dstar,
        max_adjustment,
        result,
    })
}

/// `Σ_x D*(a; x) p_r(x; a)` from the raw (pre-cdf-ization) `D*`, for `a` on
/// the rule's grid. Equals `α(a)` by construction.
pub fn expected_dstar(rule: &MonotoneRule, a: f64) -> Result<f64> {
    rule.grid
        .position(a)
        .ok_or_else(|| Error::domain(format!("a={a} is not a grid point")))?;
    let source = &rule.source;
    let r = source.r();
    let log_c = log_coeffs(r, source.cap())?;
    let log_p = log_pmf_column(r, a, &log_c);
    let d = dstar_column(Node { a, side: Side::At }, source, &log_p)?;
    let mut acc = CompensatedSum::new();
    for (dv, lp) in d.iter().zip(&log_p) {
        acc.add(dv * lp.exp());
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt_dist::{cdf, BtParams};

    fn constant(r: u64, cap: u64, c: f64) -> EstimatorTable {
        EstimatorTable::new(r, cap, vec![c; (cap - r + 1) as usize], Label::Eb).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(ActionGrid::uniform(99).is_err());
        let g = ActionGrid::uniform(100).unwrap();
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(*g.points().last().unwrap(), 1.0);
        assert_eq!(g.intervals(), 100);
        let mut pts = g.points().to_vec();
        pts.swap(3, 4);
        assert!(ActionGrid::from_points(pts).is_err());
    }

    #[test]
    fn alpha_for_constant_sources() {
        let cap = 200;
        let ones = constant(3, cap, 1.0);
        let zeros = constant(3, cap, 0.0);
        for a in [0.0, 0.1, 0.5, 0.8, 0.99] {
            assert_eq!(alpha_at(a, &ones).unwrap(), 0.0);
        }
        for a in [0.1, 0.5, 0.7] {
            let p = BtParams::new(3, a).unwrap();
            assert!((alpha_at(a, &zeros).unwrap() - cdf(&p, cap)).abs() < 1e-15);
        }
        assert!(alpha_at(0.5, &zeros).unwrap() > 1.0 - 1e-9);
        assert_eq!(alpha_at(0.0, &zeros).unwrap(), 1.0);
        // α(1) is the truncated mass of the critical law.
        let a1 = alpha_at(1.0, &ones).unwrap();
        assert!(a1 > 0.5 && a1 < 1.0);
    }

    #[test]
    fn alpha_matches_brute_force_for_mixed_source() {
        let values = vec![0.2, 0.7, 0.4, 0.9, 0.55, 1.0, 0.3, 0.6];
        let src = EstimatorTable::new(2, 9, values.clone(), Label::Eb).unwrap();
        for a in [0.35, 0.5, 0.65, 0.95] {
            let p = BtParams::new(2, a).unwrap();
            let brute: f64 = (2..=9u64)
                .zip(&values)
                .filter(|(_, &v)| v <= a)
                .map(|(x, _)| crate::bt_dist::pmf(&p, x).unwrap())
                .sum();
            assert!((alpha_at(a, &src).unwrap() - brute).abs() < 1e-15);
        }
    }

    /// The three-branch rule evaluated from plain cdf differences; fine when
    /// nothing saturates.
    fn brute_dstar(a: f64, x: u64, src: &EstimatorTable) -> f64 {
        let p = BtParams::new(src.r(), a).unwrap();
        let alpha: f64 = (src.r()..=src.cap())
            .filter(|&y| src.get(y).unwrap() <= a)
            .map(|y| crate::bt_dist::pmf(&p, y).unwrap())
            .sum();
        let f_prev: f64 = (src.r()..x).map(|y| crate::bt_dist::pmf(&p, y).unwrap()).sum();
        let p_x = crate::bt_dist::pmf(&p, x).unwrap();
        if alpha < f_prev {
            0.0
        } else if alpha > f_prev + p_x {
            1.0
        } else {
            (alpha - f_prev) / p_x
        }
    }

    #[test]
    fn dstar_matches_three_branch_rule() {
        let values = vec![0.2, 0.7, 0.4, 0.9, 0.55, 1.0, 0.3, 0.6];
        let src = EstimatorTable::new(2, 9, values, Label::Eb).unwrap();
        for a in [0.25, 0.45, 0.6, 0.75, 0.95] {
            for x in 2..=9 {
                let got = dstar_at(a, x, &src).unwrap();
                let want = brute_dstar(a, x, &src);
                assert!((got - want).abs() < 1e-12, "a={a} x={x}: {got} vs {want}");
            }
        }
        // x = r with only source(r) above a: α e^{ra} with α = Σ_{y>r, src<=a} p.
        let a: f64 = 0.4;
        let src = EstimatorTable::new(3, 4, vec![0.9, 0.1], Label::Eb).unwrap();
        let alpha = alpha_at(a, &src).unwrap();
        let want = alpha * (3.0 * a).exp();
        assert!((dstar_at(a, 3, &src).unwrap() - want).abs() < 1e-15);

        let ones = constant(3, 50, 1.0);
        assert_eq!(dstar_at(0.4, 5, &ones).unwrap(), 0.0);
        assert_eq!(dstar_at(1.0, 30, &ones).unwrap(), 1.0);
        assert!(dstar_at(0.4, 2, &ones).is_err());
        assert!(dstar_at(1.2, 4, &ones).is_err());
    }

    #[test]
    fn saturated_cdf_keeps_full_slices() {
        // At small a the cdf reaches 1 within a few terms; every D* must
        // still be 1 when the whole support is accepted.
        let zeros = constant(3, 400, 0.0);
        for a in [1e-4, 0.0025, 0.05] {
            for x in [3u64, 10, 50, 400] {
                assert_eq!(dstar_at(a, x, &zeros).unwrap(), 1.0, "a={a} x={x}");
            }
        }
    }

    #[test]
    fn constant_sources_are_fixed_points() {
        let grid = ActionGrid::uniform(400).unwrap();
        let step = grid.max_step();
        let ones = monotonize(&constant(3, 150, 1.0), &grid).unwrap();
        assert!(ones.result().values().iter().all(|&v| (v - 1.0).abs() <= step));
        let zeros = monotonize(&constant(3, 150, 0.0), &grid).unwrap();
        assert!(zeros.result().values().iter().all(|&v| v.abs() <= step));
        let c = monotonize(&constant(3, 150, 0.6), &grid).unwrap();
        for v in c.result().values() {
            assert!((v - 0.6).abs() <= step, "{v}");
        }
        assert_eq!(c.result().label(), Label::MonotoneEb);
    }

    #[test]
    fn dstar_slices_are_cdfs() {
        let values = vec![0.9, 0.2, 0.8, 0.1, 0.95, 0.5, 0.3, 1.0, 0.7, 0.0, 1.0];
        let src = EstimatorTable::new(1, 11, values, Label::Eb).unwrap();
        let rule = monotonize(&src, &ActionGrid::uniform(300).unwrap()).unwrap();
        for x in 1..=11 {
            let d = rule.dstar(x).unwrap();
            assert!(d.windows(2).all(|w| w[0] <= w[1]));
            assert!(d.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(*d.last().unwrap(), 1.0);
        }
        assert!(rule.alpha().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(rule.result().is_nondecreasing(1e-9));
        assert!(rule.dstar(0).is_none());
    }

    #[test]
    fn expected_dstar_reproduces_alpha_for_constant_sources() {
        let grid = ActionGrid::uniform(200).unwrap();
        let ones = monotonize(&constant(3, 120, 1.0), &grid).unwrap();
        let zeros = monotonize(&constant(3, 120, 0.0), &grid).unwrap();
        for &a in grid.points().iter().step_by(17) {
            assert_eq!(expected_dstar(&ones, a).unwrap(), 0.0);
            let al = alpha_at(a, &zeros.source).unwrap();
            assert!((expected_dstar(&zeros, a).unwrap() - al).abs() < 1e-12);
        }
        assert!(expected_dstar(&ones, 0.123_456).is_err());
    }

    #[test]
    fn zero_limit_needs_every_smaller_observation_at_zero() {
        let src = EstimatorTable::new(2, 6, vec![0.0, 0.0, 0.3, 0.0, 1.0], Label::Eb).unwrap();
        assert_eq!(dstar_at(0.0, 2, &src).unwrap(), 1.0);
        assert_eq!(dstar_at(0.0, 3, &src).unwrap(), 1.0);
        assert_eq!(dstar_at(0.0, 4, &src).unwrap(), 0.0);
        assert_eq!(dstar_at(0.0, 5, &src).unwrap(), 0.0);
    }
}
