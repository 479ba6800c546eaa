//! Dense two-phase simplex and the parametrized LP operator
//!
//! ```text
//!     LP_{A,c}(b) = sup { c·y | y ∈ R^m, A y ≤ b }
//! ```
//!
//! which is monotone and concave in `b` and evaluates to `-∞` on infeasible
//! and `+∞` on unbounded problems.  Operators may carry additional fixed
//! rows `A_fix y ≤ b_fix` whose right-hand sides are constants rather than
//! parameters, and per-row strict flags turning `A_i y ≤ b_i` into
//! `A_i y < b_i`.
//!
//! The simplex works on a dense tableau, uses Bland's rule for both the
//! entering and the leaving choice (no cycling), and splits free variables
//! as differences of nonnegatives.  Phase 1 minimizes the total artificial
//! infeasibility; phase 2 optimizes the real objective.

use crate::ext::ExtReal;

/// Feasibility tolerance: phase-1 infeasibility below this counts as
/// feasible, and returned points satisfy `Ax ≤ b + TOL_FEAS` rowwise.
pub const TOL_FEAS: f64 = 1e-8;
/// Entries smaller than this are never used as pivots.
pub const TOL_PIVOT: f64 = 1e-10;
/// Reduced costs below this do not qualify a column for entering.
const TOL_REDUCED: f64 = 1e-9;
/// Strict-system emptiness: the maximal uniform slack must exceed this.
const TOL_STRICT: f64 = TOL_FEAS;

/// Result of one linear program.
#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    /// Optimal value and an attaining point.
    Optimal(f64, Vec<f64>),
    Infeasible,
    Unbounded,
}

/// A parametrized linear program `b ↦ sup{c·y | Ay ≤ b, A_fix y ≤ b_fix}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpOperator {
    /// Parametrized constraint rows, one argument per row (`k × m`).
    pub a: Vec<Vec<f64>>,
    /// Objective (`m`).
    pub c: Vec<f64>,
    /// Per parametrized row: is the comparison strict (`<` instead of `≤`)?
    pub strict: Vec<bool>,
    /// Constraint rows with constant right-hand sides.
    pub a_fix: Vec<Vec<f64>>,
    pub b_fix: Vec<f64>,
    /// Per fixed row: is the comparison strict?
    pub strict_fix: Vec<bool>,
}

impl LpOperator {
    /// Plain operator: all rows parametrized and non-strict.
    pub fn new(a: Vec<Vec<f64>>, c: Vec<f64>) -> LpOperator {
        let k = a.len();
        LpOperator {
            a,
            c,
            strict: vec![false; k],
            a_fix: Vec::new(),
            b_fix: Vec::new(),
            strict_fix: Vec::new(),
        }
    }

    /// Number of parametrized rows (= required arguments).
    pub fn rows(&self) -> usize {
        self.a.len()
    }

    /// Number of LP variables.
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn has_strict_rows(&self) -> bool {
        self.strict.iter().chain(&self.strict_fix).any(|&s| s)
    }

    pub fn validate(&self) -> Result<(), String> {
        let m = self.c.len();
        if self.strict.len() != self.a.len() {
            return Err(format!(
                "{} strict flags for {} rows",
                self.strict.len(),
                self.a.len()
            ));
        }
        if self.a_fix.len() != self.b_fix.len() {
            return Err(format!(
                "{} fixed rows for {} fixed bounds",
                self.a_fix.len(),
                self.b_fix.len()
            ));
        }
        if self.strict_fix.len() != self.a_fix.len() {
            return Err(format!(
                "{} strict flags for {} fixed rows",
                self.strict_fix.len(),
                self.a_fix.len()
            ));
        }
        for row in self.a.iter().chain(&self.a_fix) {
            if row.len() != m {
                return Err(format!("row width {} does not match {m} variables", row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err("non-finite coefficient in constraint row".into());
            }
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err("non-finite objective coefficient".into());
        }
        if self.b_fix.iter().any(|v| !v.is_finite()) {
            return Err("non-finite fixed bound".into());
        }
        Ok(())
    }
}

/// Maximizes (or minimizes) `c·x` subject to `Ax ≤ b` over free `x`.
pub fn solve_lp(a: &[Vec<f64>], b: &[f64], c: &[f64], maximize: bool) -> LpResult {
    let cc: Vec<f64> = if maximize {
        c.to_vec()
    } else {
        c.iter().map(|v| -v).collect()
    };
    let res = simplex_max(a, b, &cc);
    match res {
        LpResult::Optimal(v, x) => LpResult::Optimal(if maximize { v } else { -v }, x),
        other => other,
    }
}

/// Phase-1 infeasibility of `Ax ≤ b`: 0 (up to tolerance) iff the system
/// is feasible.
pub fn feasibility_gap(a: &[Vec<f64>], b: &[f64]) -> f64 {
    let m = a.first().map_or(0, |r| r.len());
    let mut t = Tableau::new(a, b, m);
    t.phase1()
}

/// Evaluates `LP_{A,c}` at an extended-real right-hand side.
///
/// Rows with bound `+∞` are dropped (they constrain nothing); any bound of
/// `-∞` makes the feasible set empty, so the value is `-∞`.  Strict rows
/// are handled by [`eval_strict_lp`]; this entry point dispatches.
pub fn eval_lp_operator(op: &LpOperator, b: &[ExtReal]) -> ExtReal {
    assert_eq!(b.len(), op.rows(), "one argument per parametrized row");
    if op.has_strict_rows() {
        return eval_strict_lp(op, b);
    }
    let (a, bf) = match substitute_bounds(op, b) {
        Some(rows) => rows,
        None => return ExtReal::NegInf,
    };
    status_to_ext(solve_lp(&a, &bf, &op.c, true))
}

/// Evaluates an operator with strict rows:
/// `sup { c·y | A_s y < b_s, A_n y ≤ b_n }`.
///
/// The supremum over an open polyhedron equals the supremum over its
/// closure as long as the open set is nonempty, so the evaluation is a
/// two-step affair: decide emptiness by maximizing a uniform slack `t`
/// with `A_s y + t·1 ≤ b_s`, `t ≤ 1` (empty iff the optimum is ≤ 0), then
/// solve the closed relaxation.
pub fn eval_strict_lp(op: &LpOperator, b: &[ExtReal]) -> ExtReal {
    let (rows, bounds) = match substitute_bounds(op, b) {
        Some(rows) => rows,
        None => return ExtReal::NegInf,
    };
    // Which surviving rows are strict?  Kept parametrized rows come first,
    // in operator order, then the fixed rows.
    let kept_strict: Vec<bool> = op
        .strict
        .iter()
        .zip(b)
        .filter(|&(_, bi)| *bi != ExtReal::PosInf)
        .map(|(&s, _)| s)
        .chain(op.strict_fix.iter().copied())
        .collect();
    if kept_strict.iter().any(|&s| s) {
        let m = op.dim();
        // Slack variable t gets column m.
        let mut sa: Vec<Vec<f64>> = Vec::with_capacity(rows.len() + 1);
        for (row, &s) in rows.iter().zip(&kept_strict) {
            let mut r = row.clone();
            r.push(if s { 1.0 } else { 0.0 });
            sa.push(r);
        }
        let mut cap = vec![0.0; m + 1];
        cap[m] = 1.0;
        sa.push(cap.clone());
        let mut sb = bounds.clone();
        sb.push(1.0);
        match solve_lp(&sa, &sb, &cap, true) {
            LpResult::Infeasible => return ExtReal::NegInf,
            LpResult::Optimal(t, _) if t <= TOL_STRICT => return ExtReal::NegInf,
            LpResult::Optimal(_, _) => {}
            LpResult::Unbounded => unreachable!("slack objective is capped at 1"),
        }
    }
    status_to_ext(solve_lp(&rows, &bounds, &op.c, true))
}

/// Applies extended-real bounds: drops `+∞` rows, appends fixed rows, and
/// returns `None` when some bound is `-∞` (empty feasible set).
fn substitute_bounds(op: &LpOperator, b: &[ExtReal]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut rows = Vec::with_capacity(op.a.len() + op.a_fix.len());
    let mut bounds = Vec::with_capacity(rows.capacity());
    for (row, bi) in op.a.iter().zip(b) {
        match bi {
            ExtReal::NegInf => return None,
            ExtReal::PosInf => {}
            ExtReal::Finite(v) => {
                rows.push(row.clone());
                bounds.push(*v);
            }
        }
    }
    rows.extend(op.a_fix.iter().cloned());
    bounds.extend(op.b_fix.iter().cloned());
    Some((rows, bounds))
}

fn status_to_ext(r: LpResult) -> ExtReal {
    match r {
        LpResult::Optimal(v, _) => ExtReal::Finite(v),
        LpResult::Infeasible => ExtReal::NegInf,
        LpResult::Unbounded => ExtReal::PosInf,
    }
}

/// Maximizes `c·x` over `Ax ≤ b`, `x` free, by two-phase tableau simplex.
fn simplex_max(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpResult {
    let m = c.len();
    debug_assert!(a.iter().all(|r| r.len() == m));
    let mut t = Tableau::new(a, b, m);
    if t.phase1() > TOL_FEAS {
        return LpResult::Infeasible;
    }
    t.drive_out_artificials();
    t.phase2(c)
}

/// Dense simplex tableau over columns `[u | v | slacks | artificials]`
/// where the original free variables are `x = u - v`.
struct Tableau {
    m: usize,
    k: usize,
    /// Structural columns: 2m splits + k slacks.
    n_struct: usize,
    n_cols: usize,
    /// `k` rows, each `n_cols + 1` wide (last entry: right-hand side).
    rows: Vec<Vec<f64>>,
    /// Objective row, `n_cols + 1` wide; kept reduced with respect to the
    /// basis, last entry is the negated objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Columns banned from entering (artificials during phase 2).
    banned_from: usize,
}

impl Tableau {
    fn new(a: &[Vec<f64>], b: &[f64], m: usize) -> Tableau {
        let k = a.len();
        let n_struct = 2 * m + k;
        // Artificial columns only for rows that start with a negative
        // right-hand side (their slack cannot serve as the initial basis).
        let art_rows: Vec<usize> = (0..k).filter(|&i| b[i] < 0.0).collect();
        let n_cols = n_struct + art_rows.len();
        let mut rows = vec![vec![0.0; n_cols + 1]; k];
        let mut basis = vec![0usize; k];
        let mut next_art = n_struct;
        for i in 0..k {
            let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..m {
                rows[i][j] = flip * a[i][j];
                rows[i][m + j] = -flip * a[i][j];
            }
            rows[i][2 * m + i] = flip;
            rows[i][n_cols] = flip * b[i];
            if b[i] < 0.0 {
                rows[i][next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            } else {
                basis[i] = 2 * m + i;
            }
        }
        Tableau {
            m,
            k,
            n_struct,
            n_cols,
            rows,
            obj: vec![0.0; n_cols + 1],
            basis,
            banned_from: n_cols,
        }
    }

    /// Installs an objective (given over all columns) and reduces it with
    /// respect to the current basis.
    fn set_objective(&mut self, c_full: &[f64]) {
        self.obj = c_full.to_vec();
        self.obj.push(0.0);
        for i in 0..self.k {
            let cb = c_full[self.basis[i]];
            if cb != 0.0 {
                for j in 0..=self.n_cols {
                    self.obj[j] -= cb * self.rows[i][j];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let p = self.rows[r][e];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        for i in 0..self.k {
            if i != r {
                let f = self.rows[i][e];
                if f != 0.0 {
                    for j in 0..=self.n_cols {
                        self.rows[i][j] -= f * self.rows[r][j];
                    }
                }
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for j in 0..=self.n_cols {
                self.obj[j] -= f * self.rows[r][j];
            }
        }
        self.basis[r] = e;
    }

    /// Bland's rule: the lowest-index column with a positive reduced cost.
    fn entering(&self) -> Option<usize> {
        (0..self.banned_from).find(|&j| self.obj[j] > TOL_REDUCED)
    }

    /// Ratio test with Bland tie-breaking (lowest basic variable wins).
    fn leaving(&self, e: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.k {
            let coeff = self.rows[i][e];
            if coeff > TOL_PIVOT {
                let ratio = self.rows[i][self.n_cols] / coeff;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12
                            || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        best.map(|(i, _)| i)
    }

    /// Runs simplex iterations until optimality or unboundedness.
    fn optimize(&mut self) -> Option<()> {
        // Bland's rule terminates; the cap only guards against NaN-poisoned
        // input slipping past validation.
        let cap = 20_000 + 200 * (self.k + self.n_cols);
        for _ in 0..cap {
            let e = match self.entering() {
                Some(e) => e,
                None => return Some(()),
            };
            match self.leaving(e) {
                Some(r) => self.pivot(r, e),
                None => return None,
            }
        }
        panic!("simplex did not terminate within {cap} pivots");
    }

    /// Phase 1: minimizes the artificial sum; returns the residual
    /// infeasibility (0 for feasible systems).
    fn phase1(&mut self) -> f64 {
        if self.n_cols == self.n_struct {
            // No artificials: the all-slack basis is already feasible.
            return 0.0;
        }
        let mut c = vec![0.0; self.n_cols];
        for j in self.n_struct..self.n_cols {
            c[j] = -1.0;
        }
        self.set_objective(&c);
        self.optimize()
            .expect("phase 1 objective is bounded by zero");
        self.obj[self.n_cols]
    }

    /// Pivots basic artificials out where a structural pivot exists; rows
    /// that admit none are redundant and harmless (their artificial stays
    /// at zero, and artificials are banned from re-entering in phase 2).
    fn drive_out_artificials(&mut self) {
        for r in 0..self.k {
            if self.basis[r] >= self.n_struct {
                if let Some(j) = (0..self.n_struct).find(|&j| self.rows[r][j].abs() > TOL_PIVOT) {
                    self.pivot(r, j);
                }
            }
        }
    }

    fn phase2(&mut self, c: &[f64]) -> LpResult {
        self.banned_from = self.n_struct;
        let mut full = vec![0.0; self.n_cols];
        for j in 0..self.m {
            full[j] = c[j];
            full[self.m + j] = -c[j];
        }
        self.set_objective(&full);
        match self.optimize() {
            None => LpResult::Unbounded,
            Some(()) => {
                let mut col_val = vec![0.0; self.n_cols];
                for i in 0..self.k {
                    col_val[self.basis[i]] = self.rows[i][self.n_cols];
                }
                let x: Vec<f64> = (0..self.m)
                    .map(|j| col_val[j] - col_val[self.m + j])
                    .collect();
                LpResult::Optimal(-self.obj[self.n_cols], x)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_optimal(r: &LpResult, expect: f64) -> Vec<f64> {
        match r {
            LpResult::Optimal(v, x) => {
                assert!(
                    (v - expect).abs() <= 1e-8,
                    "expected optimum {expect}, got {v}"
                );
                x.clone()
            }
            other => panic!("expected Optimal({expect}), got {other:?}"),
        }
    }

    #[test]
    fn single_upper_bound() {
        // sup{x | x ≤ 5} = 5.
        let r = solve_lp(&[vec![1.0]], &[5.0], &[1.0], true);
        let x = assert_optimal(&r, 5.0);
        assert!((x[0] - 5.0).abs() <= 1e-8);
    }

    #[test]
    fn detects_infeasible() {
        // x ≤ -1 and -x ≤ 0 cannot both hold.
        let r = solve_lp(&[vec![1.0], vec![-1.0]], &[-1.0, 0.0], &[1.0], true);
        assert_eq!(r, LpResult::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // sup{x | -x ≤ 0} = ∞.
        let r = solve_lp(&[vec![-1.0]], &[0.0], &[1.0], true);
        assert_eq!(r, LpResult::Unbounded);
        // No constraints at all, nonzero objective.
        let r = solve_lp(&[], &[], &[1.0], true);
        assert_eq!(r, LpResult::Unbounded);
    }

    #[test]
    fn minimization_negates() {
        // min{x | -x ≤ 3} = -3.
        let r = solve_lp(&[vec![-1.0]], &[3.0], &[1.0], false);
        assert_optimal(&r, -3.0);
    }

    #[test]
    fn two_variable_vertex() {
        // max x + y s.t. x + 2y ≤ 4, 3x + y ≤ 6, both ≥ -10 (free split).
        let a = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        let r = solve_lp(&a, &[4.0, 6.0], &[1.0, 1.0], true);
        // Vertex (8/5, 6/5), value 14/5.
        let x = assert_optimal(&r, 2.8);
        assert!((x[0] - 1.6).abs() <= 1e-8 && (x[1] - 1.2).abs() <= 1e-8);
    }

    #[test]
    fn negative_rhs_needs_phase1() {
        // x ≥ 2 written as -x ≤ -2, maximize -x: optimum -2.
        let r = solve_lp(&[vec![-1.0]], &[-2.0], &[-1.0], true);
        let x = assert_optimal(&r, -2.0);
        assert!((x[0] - 2.0).abs() <= 1e-8);
    }

    #[test]
    fn equality_via_row_pair() {
        // x + y = 1 (two rows) with x, y ≥ 0, maximize y - x: optimum at
        // (0, 1).  Without the sign constraints the line is unbounded.
        let a = vec![
            vec![1.0, 1.0],
            vec![-1.0, -1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ];
        let r = solve_lp(&a, &[1.0, -1.0, 0.0, 0.0], &[-1.0, 1.0], true);
        assert_optimal(&r, 1.0);
        let free = vec![vec![1.0, 1.0], vec![-1.0, -1.0]];
        let r = solve_lp(&free, &[1.0, -1.0], &[-1.0, 1.0], true);
        assert_eq!(r, LpResult::Unbounded);
    }

    #[test]
    fn feasibility_gap_matches_status() {
        let a = vec![vec![1.0], vec![-1.0]];
        assert!(feasibility_gap(&a, &[-1.0, 0.0]) > 0.4);
        assert!(feasibility_gap(&a, &[1.0, 0.0]) <= TOL_FEAS);
    }

    #[test]
    fn operator_drops_pos_inf_rows_and_absorbs_neg_inf() {
        // sup{y | y ≤ b1, y ≤ b2}.
        let op = LpOperator::new(vec![vec![1.0], vec![1.0]], vec![1.0]);
        let v = eval_lp_operator(&op, &[ExtReal::Finite(2.0), ExtReal::PosInf]);
        assert_eq!(v, ExtReal::Finite(2.0));
        let v = eval_lp_operator(&op, &[ExtReal::PosInf, ExtReal::PosInf]);
        assert_eq!(v, ExtReal::PosInf);
        let v = eval_lp_operator(&op, &[ExtReal::NegInf, ExtReal::PosInf]);
        assert_eq!(v, ExtReal::NegInf);
    }

    #[test]
    fn operator_with_fixed_rows() {
        // sup{y | y ≤ 0} with the bound as a fixed row and no parameters.
        let op = LpOperator {
            a: vec![],
            c: vec![1.0],
            strict: vec![],
            a_fix: vec![vec![1.0]],
            b_fix: vec![0.0],
            strict_fix: vec![false],
        };
        assert_eq!(eval_lp_operator(&op, &[]), ExtReal::Finite(0.0));
    }

    #[test]
    fn strict_open_set_keeps_closure_supremum() {
        // sup{y | y < 0} = 0: the open set is nonempty, so the strict bound
        // does not change the supremum.
        let op = LpOperator {
            a: vec![vec![1.0]],
            c: vec![1.0],
            strict: vec![true],
            a_fix: vec![],
            b_fix: vec![],
            strict_fix: vec![],
        };
        assert_eq!(eval_lp_operator(&op, &[ExtReal::Finite(0.0)]), ExtReal::Finite(0.0));
    }

    #[test]
    fn strict_fixed_row_keeps_closure_supremum() {
        // sup{y | y < 0} with the strict bound as a fixed row.
        let op = LpOperator {
            a: vec![],
            c: vec![1.0],
            strict: vec![],
            a_fix: vec![vec![1.0]],
            b_fix: vec![0.0],
            strict_fix: vec![true],
        };
        assert_eq!(eval_lp_operator(&op, &[]), ExtReal::Finite(0.0));
    }

    #[test]
    fn strict_empty_set_evaluates_to_neg_inf() {
        // {y | y < b, y ≥ 1} is empty exactly for b ≤ 1.
        let op = LpOperator {
            a: vec![vec![1.0]],
            c: vec![1.0],
            strict: vec![true],
            a_fix: vec![vec![-1.0]],
            b_fix: vec![-1.0],
            strict_fix: vec![false],
        };
        assert_eq!(eval_lp_operator(&op, &[ExtReal::Finite(1.0)]), ExtReal::NegInf);
        assert_eq!(
            eval_lp_operator(&op, &[ExtReal::Finite(2.0)]),
            ExtReal::Finite(2.0)
        );
    }

    #[test]
    fn optimal_points_are_feasible_and_consistent() {
        // Randomized spot check of the Optimal(v, x) contract.
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let m = 1 + (next() * 2.0) as usize;
            let k = 1 + (next() * 3.0) as usize;
            let mut a: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..m).map(|_| next() * 4.0 - 2.0).collect())
                .collect();
            let mut b: Vec<f64> = (0..k).map(|_| next() * 3.0 - 1.0).collect();
            // Box rows keep everything bounded.
            for j in 0..m {
                let mut lo = vec![0.0; m];
                let mut hi = vec![0.0; m];
                lo[j] = -1.0;
                hi[j] = 1.0;
                a.push(hi);
                b.push(2.0);
                a.push(lo);
                b.push(2.0);
            }
            let c: Vec<f64> = (0..m).map(|_| next() * 4.0 - 2.0).collect();
            if let LpResult::Optimal(v, x) = solve_lp(&a, &b, &c, true) {
                for (row, bound) in a.iter().zip(&b) {
                    let lhs: f64 = row.iter().zip(&x).map(|(r, xi)| r * xi).sum();
                    assert!(lhs <= bound + 1e-7, "returned point violates a row");
                }
                let dot: f64 = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
                assert!((dot - v).abs() <= 1e-7, "objective mismatch at returned point");
            }
        }
    }

    #[test]
    fn grid_oracle_agrees_on_boxed_problems() {
        // Frozen oracle: exhaustive grid search on small boxed LPs.  The
        // grid value can only underestimate the true optimum, and by at
        // most the grid resolution times the objective's Lipschitz bound.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..60 {
            let k = 1 + (next() * 3.0) as usize;
            let mut a: Vec<Vec<f64>> = (0..k)
                .map(|_| vec![next() * 4.0 - 2.0, next() * 4.0 - 2.0])
                .collect();
            let mut b: Vec<f64> = (0..k).map(|_| next() * 3.0 - 1.0).collect();
            for (hi, lo, bound) in [([1.0, 0.0], [-1.0, 0.0], 2.0), ([0.0, 1.0], [0.0, -1.0], 2.0)]
            {
                a.push(hi.to_vec());
                b.push(bound);
                a.push(lo.to_vec());
                b.push(bound);
            }
            let c = vec![next() * 4.0 - 2.0, next() * 4.0 - 2.0];
            let lp = solve_lp(&a, &b, &c, true);
            let step = 0.02;
            let mut grid_best = f64::NEG_INFINITY;
            let steps = (4.0 / step) as i64;
            for i in 0..=steps {
                for j in 0..=steps {
                    let x = [-2.0 + i as f64 * step, -2.0 + j as f64 * step];
                    let ok = a
                        .iter()
                        .zip(&b)
                        .all(|(row, bound)| row[0] * x[0] + row[1] * x[1] <= bound + 1e-12);
                    if ok {
                        grid_best = grid_best.max(c[0] * x[0] + c[1] * x[1]);
                    }
                }
            }
            match lp {
                LpResult::Optimal(v, _) => {
                    assert!(
                        grid_best <= v + 1e-6,
                        "grid found a better point than the simplex optimum"
                    );
                    if grid_best > f64::NEG_INFINITY {
                        assert!(
                            v - grid_best <= 0.2,
                            "simplex optimum {v} too far above grid bound {grid_best}"
                        );
                    }
                }
                LpResult::Infeasible => {
                    assert_eq!(
                        grid_best,
                        f64::NEG_INFINITY,
                        "grid found a point in an 'infeasible' system"
                    );
                }
                LpResult::Unbounded => panic!("boxed problem cannot be unbounded"),
            }
        }
    }
}
