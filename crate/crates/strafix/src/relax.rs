//! Static analysis of programs with affine assignments and quadratic
//! guards: quadratic templates, the concrete single-step semantics, and
//! the semidefinite relaxation that turns a program plus templates into an
//! equation system over template bounds.
//!
//! A state is a real vector, a template is a quadratic function
//! `p(x) = xᵀA_p x + 2b_pᵀx`, and the analysis computes one upper bound
//! per control point and template that holds for every reachable state.
//! Bounds transform through statements by maximizing the template after
//! the statement over the states the current bounds admit; Shor's
//! relaxation lifts the state `x` to the rank-one matrix
//! `(1, xᵀ)ᵀ(1, xᵀ)` and drops the rank constraint, leaving the
//! semidefinite program
//!
//! ```text
//!     sup { C • X | X_{1,1} = 1,  Ā_{p′} • X ≤ v(p′) for all p′,  X ⪰ 0 }
//! ```
//!
//! with one bordered coefficient matrix `Ā_{p′} = [[0, b_{p′}ᵀ], [b_{p′},
//! A_{p′}]]` per template and an objective `C` encoding the template after
//! the statement.  The relaxation is safe: it never under-approximates the
//! true bound transformer.  [`build_equations`] emits these operators as
//! the right-hand sides of one equation per control point and template,
//! and [`analyze`] computes their least solution.

use crate::error::{Error, Result};
use crate::eval::{solve_least, Solution, SolveOptions};
use crate::ext::ExtReal;
use crate::sdp::{SdpOperator, SymMatrix};
use crate::system::{AffineFn, EquationSystem, Expression, Leaf};
use nalgebra::{DMatrix, DVector};

/// A quadratic function `p(x) = xᵀA_p x + 2b_pᵀx` of the program state.
/// Linear templates have `A_p = 0`; the zero template is excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTemplate {
    pub a: SymMatrix,
    pub b: Vec<f64>,
}

impl QuadraticTemplate {
    pub fn new(a: SymMatrix, b: Vec<f64>) -> QuadraticTemplate {
        assert_eq!(a.dim(), b.len(), "quadratic and linear parts disagree");
        QuadraticTemplate { a, b }
    }

    /// The linear template `p(x) = 2bᵀx`.  A single-variable bound `±x_i`
    /// is `b = ±e_i/2`.
    pub fn linear(b: Vec<f64>) -> QuadraticTemplate {
        QuadraticTemplate {
            a: SymMatrix::zeros(b.len()),
            b,
        }
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn is_zero(&self) -> bool {
        let n = self.dim();
        self.b.iter().all(|&v| v == 0.0)
            && (0..n).all(|i| (i..n).all(|j| self.a.get(i, j) == 0.0))
    }

    /// The template value `xᵀA_p x + 2b_pᵀx`.
    pub fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "state dimension mismatch");
        let n = self.dim();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += x[i] * self.a.get(i, j) * x[j];
            }
        }
        quad + 2.0 * self.b.iter().zip(x).map(|(b, x)| b * x).sum::<f64>()
    }

    /// The bordered matrix `Ā_p = [[0, b_pᵀ], [b_p, A_p]]`, which satisfies
    /// `Ā_p • (1, xᵀ)ᵀ(1, xᵀ) = p(x)`.
    pub fn bordered(&self) -> SymMatrix {
        bordered(&self.a, &self.b, 0.0)
    }
}

/// `[[corner, bᵀ], [b, A]]`, the `(n+1)×(n+1)` bordering of an `n×n`
/// symmetric matrix.
fn bordered(a: &SymMatrix, b: &[f64], corner: f64) -> SymMatrix {
    let n = a.dim();
    assert_eq!(b.len(), n);
    let mut m = SymMatrix::zeros(n + 1);
    m.set(0, 0, corner);
    for i in 0..n {
        m.set(0, i + 1, b[i]);
        for j in i..n {
            m.set(i + 1, j + 1, a.get(i, j));
        }
    }
    m
}

/// One edge statement: an affine assignment or a quadratic guard.
#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    /// `x := Ax + b` (rows of `a` are the rows of `A`).
    Assign { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// Pass states with `xᵀAx + 2bᵀx ≤ c`, block the rest.
    Guard { a: SymMatrix, b: Vec<f64>, c: f64 },
}

impl Statement {
    /// State dimension.
    pub fn dim(&self) -> usize {
        match self {
            Statement::Assign { b, .. } | Statement::Guard { b, .. } => b.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Statement::Assign { a, b } => {
                if a.len() != b.len() || a.iter().any(|row| row.len() != b.len()) {
                    return Err(Error::InvalidSystem(format!(
                        "assignment matrix is not {0}×{0}",
                        b.len()
                    )));
                }
            }
            Statement::Guard { a, b, .. } => {
                if a.dim() != b.len() {
                    return Err(Error::InvalidSystem(format!(
                        "guard matrix is {0}×{0} but the linear part has length {1}",
                        a.dim(),
                        b.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The concrete semantics of one statement on one state: assignments map
/// the state, guards pass or block it.
pub fn concrete_step(s: &Statement, x: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(x.len(), s.dim(), "state dimension mismatch");
    match s {
        Statement::Assign { a, b } => Some(
            a.iter()
                .zip(b)
                .map(|(row, b)| row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + b)
                .collect(),
        ),
        Statement::Guard { a, b, c } => {
            let g = QuadraticTemplate::new(a.clone(), b.clone());
            (g.value(x) <= *c).then(|| x.to_vec())
        }
    }
}

/// A control-flow edge: the statement runs on every state flowing from
/// `from` to `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub stmt: Statement,
    pub to: usize,
}

/// How the initial states at the start point enter the analysis: either
/// directly as one bound per template, or as a box from which
/// [`alpha_box`] derives the bounds (convex templates only).
#[derive(Debug, Clone, PartialEq)]
pub enum InitialStates {
    Bounds(Vec<ExtReal>),
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// A control-flow graph with statement-labeled edges, a start point, and a
/// description of the initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub point_names: Vec<String>,
    pub start: usize,
    pub edges: Vec<Edge>,
    pub initial: InitialStates,
}

impl Program {
    pub fn num_points(&self) -> usize {
        self.point_names.len()
    }

    /// Checks graph indices, statement shapes, and that everything agrees
    /// on the state dimension `dim` and on one entry per template.
    pub fn validate(&self, dim: usize, num_templates: usize) -> Result<()> {
        let n = self.num_points();
        if n == 0 {
            return Err(Error::InvalidSystem("program has no control points".into()));
        }
        if self.start >= n {
            return Err(Error::InvalidSystem(format!(
                "start point {} out of range (the program has {n} points)",
                self.start
            )));
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::InvalidSystem(format!(
                    "edge {i} connects {}→{}, but the program has {n} points",
                    e.from, e.to
                )));
            }
            e.stmt.validate()?;
            if e.stmt.dim() != dim {
                return Err(Error::InvalidSystem(format!(
                    "edge {i} works on {} state variables, templates on {dim}",
                    e.stmt.dim()
                )));
            }
        }
        match &self.initial {
            InitialStates::Bounds(v) => {
                if v.len() != num_templates {
                    return Err(Error::InvalidSystem(format!(
                        "{} initial bounds for {num_templates} templates",
                        v.len()
                    )));
                }
            }
            InitialStates::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::InvalidSystem(format!(
                        "initial box is {}-dimensional, templates are {dim}-dimensional",
                        lo.len().max(hi.len())
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Checks that templates are nonzero and share the dimension `dim`.
fn validate_templates(dim: usize, templates: &[QuadraticTemplate]) -> Result<()> {
    if templates.is_empty() {
        return Err(Error::InvalidSystem("no templates given".into()));
    }
    for (i, p) in templates.iter().enumerate() {
        if p.dim() != dim {
            return Err(Error::InvalidSystem(format!(
                "template {i} is {}-dimensional, expected {dim}",
                p.dim()
            )));
        }
        if p.is_zero() {
            return Err(Error::InvalidSystem(format!("template {i} is zero")));
        }
    }
    Ok(())
}

/// Folds a nalgebra product back into an exactly symmetric matrix.  The
/// products below are symmetric up to floating noise; averaging the two
/// triangles removes it.
fn symmetrized(m: &DMatrix<f64>) -> SymMatrix {
    debug_assert!(
        {
            let n = m.nrows();
            (0..n).all(|i| (i..n).all(|j| (m[(i, j)] - m[(j, i)]).abs() < 1e-9))
        },
        "product strayed from symmetry"
    );
    SymMatrix::from_dmatrix(m)
}

/// Relaxes the assignment `x := Ax + b` onto the templates: one operator
/// per template `p`, maximizing `p(Ax + b)` over the lifted states the
/// argument bounds admit.  Writing `p(Ax + b)` as a quadratic in `x` with
/// matrix `AᵀA_pA`, linear part `AᵀA_p b + Aᵀb_p` and constant
/// `bᵀA_p b + 2b_pᵀb`, the objective is that quadratic's bordered matrix
/// (the constant rides on the pinned entry `X_{1,1} = 1`).
pub fn relax_assign(
    a: &[Vec<f64>],
    b: &[f64],
    templates: &[QuadraticTemplate],
) -> Result<Vec<SdpOperator>> {
    let n = b.len();
    Statement::Assign {
        a: a.to_vec(),
        b: b.to_vec(),
    }
    .validate()?;
    validate_templates(n, templates)?;
    let a_mat = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let b_vec = DVector::from_column_slice(b);
    let constraints = shared_constraints(templates);
    templates
        .iter()
        .map(|p| {
            let a_p = p.a.to_dmatrix();
            let b_p = DVector::from_column_slice(&p.b);
            let a_new = symmetrized(&(a_mat.transpose() * &a_p * &a_mat));
            let b_new = a_mat.transpose() * (&a_p * &b_vec) + a_mat.transpose() * &b_p;
            let c_new = (b_vec.transpose() * &a_p * &b_vec)[(0, 0)] + 2.0 * b_p.dot(&b_vec);
            Ok(SdpOperator {
                c_obj: bordered(&a_new, b_new.as_slice(), c_new),
                fixed: Vec::new(),
                ..constraints.clone()
            })
        })
        .collect()
}

/// Relaxes the guard `xᵀAx + 2bᵀx ≤ c` onto the templates: one operator
/// per template `p`, maximizing `p(x)` over the lifted states that the
/// argument bounds admit and that pass the guard.  The guard itself is
/// the constant-bound row `[[-c, bᵀ], [b, A]] • X ≤ 0`, so the operator
/// arity stays one argument per template.
pub fn relax_guard(
    a: &SymMatrix,
    b: &[f64],
    c: f64,
    templates: &[QuadraticTemplate],
) -> Result<Vec<SdpOperator>> {
    Statement::Guard {
        a: a.clone(),
        b: b.to_vec(),
        c,
    }
    .validate()?;
    validate_templates(b.len(), templates)?;
    let constraints = shared_constraints(templates);
    let guard_row = bordered(a, b, -c);
    Ok(templates
        .iter()
        .map(|p| SdpOperator {
            c_obj: p.bordered(),
            fixed: vec![(guard_row.clone(), 0.0)],
            ..constraints.clone()
        })
        .collect())
}

/// The constraint skeleton every relaxed operator shares: the pinned
/// corner `X_{1,1} = 1` and one parametrized row `Ā_{p′} • X ≤ v(p′)` per
/// template.  Objective and fixed rows are filled in per statement.
fn shared_constraints(templates: &[QuadraticTemplate]) -> SdpOperator {
    let dim = templates[0].dim() + 1;
    let mut corner = SymMatrix::zeros(dim);
    corner.set(0, 0, 1.0);
    SdpOperator {
        dim,
        a_eq: vec![corner],
        a_rhs: vec![1.0],
        b_ineq: templates.iter().map(|p| p.bordered()).collect(),
        c_obj: SymMatrix::zeros(dim),
        fixed: Vec::new(),
    }
}

/// Relaxes one statement onto the templates.
pub fn relax_statement(
    s: &Statement,
    templates: &[QuadraticTemplate],
) -> Result<Vec<SdpOperator>> {
    match s {
        Statement::Assign { a, b } => relax_assign(a, b, templates),
        Statement::Guard { a, b, c } => relax_guard(a, b, *c, templates),
    }
}

/// Maximum number of box vertices [`alpha_box`] enumerates.
const ALPHA_BOX_VERTEX_CAP: usize = 1 << 20;

/// The exact bound of a convex template over a box: the maximum of a
/// convex function over a polytope sits at a vertex, so the maximum over
/// the box's `2^n` corners is the bound.  Non-convex templates (negative
/// eigenvalue in `A_p`) can peak in the interior, where this would
/// under-approximate; they are rejected, and their initial bounds must be
/// supplied directly.
pub fn alpha_box(lo: &[f64], hi: &[f64], p: &QuadraticTemplate) -> Result<ExtReal> {
    let n = p.dim();
    assert_eq!(lo.len(), n, "box dimension mismatch");
    assert_eq!(hi.len(), n, "box dimension mismatch");
    for i in 0..n {
        if !lo[i].is_finite() || !hi[i].is_finite() || lo[i] > hi[i] {
            return Err(Error::InvalidSystem(format!(
                "initial box side {i} is [{}, {}], which is not a finite interval",
                lo[i], hi[i]
            )));
        }
    }
    if p.a.min_eigenvalue() < -1e-9 {
        return Err(Error::NonConvexTemplate(
            "a template with a negative-curvature direction can peak inside the initial \
             box, not at a corner; supply its initial bound directly"
                .into(),
        ));
    }
    if n >= ALPHA_BOX_VERTEX_CAP.trailing_zeros() as usize {
        return Err(Error::InvalidSystem(format!(
            "initial box has 2^{n} corners, too many to enumerate; supply initial \
             bounds directly"
        )));
    }
    let mut best = f64::NEG_INFINITY;
    let mut corner = vec![0.0; n];
    for mask in 0..(1usize << n) {
        for (i, c) in corner.iter_mut().enumerate() {
            *c = if mask & (1 << i) != 0 { hi[i] } else { lo[i] };
        }
        best = best.max(p.value(&corner));
    }
    Ok(ExtReal::Finite(best))
}

/// The initial bounds at the start point: as given, or derived from the
/// initial box.
fn initial_bounds(program: &Program, templates: &[QuadraticTemplate]) -> Result<Vec<ExtReal>> {
    match &program.initial {
        InitialStates::Bounds(v) => Ok(v.clone()),
        InitialStates::Box { lo, hi } => {
            templates.iter().map(|p| alpha_box(lo, hi, p)).collect()
        }
    }
}

/// Variable index of (control point, template) pairs: point-major.
fn var_index(v: usize, t: usize, num_templates: usize) -> usize {
    v * num_templates + t
}

/// Builds the equation system whose least solution is the relaxed bound of
/// every template at every control point.  One variable per (point,
/// template) pair; each equation joins `-∞`, the initial bound at the
/// start point, and one relaxed operator per incoming edge, applied to the
/// source point's bounds:
///
/// ```text
///     x_{v,p} = -∞ ∨ [α(I)(p) if v = start] ∨ ⟦s⟧(x_{u,p_1}, ..., x_{u,p_m})
/// ```
///
/// The result is in standard form by construction.
pub fn build_equations(
    program: &Program,
    templates: &[QuadraticTemplate],
) -> Result<EquationSystem> {
    let dim = templates.first().map_or(0, QuadraticTemplate::dim);
    validate_templates(dim, templates)?;
    program.validate(dim, templates.len())?;
    let m = templates.len();
    let bounds = initial_bounds(program, templates)?;
    let edge_ops: Vec<Vec<SdpOperator>> = program
        .edges
        .iter()
        .map(|e| relax_statement(&e.stmt, templates))
        .collect::<Result<_>>()?;
    let mut names = Vec::with_capacity(program.num_points() * m);
    let mut equations = Vec::with_capacity(program.num_points() * m);
    for (v, point) in program.point_names.iter().enumerate() {
        for t in 0..m {
            names.push(format!("{point}_p{}", t + 1));
            let mut children = vec![Leaf::NegInf];
            if v == program.start {
                match bounds[t] {
                    ExtReal::NegInf => {}
                    ExtReal::Finite(c) => children.push(Leaf::Const(c)),
                    ExtReal::PosInf => {
                        children.push(Leaf::Affine(AffineFn::constant(ExtReal::PosInf)))
                    }
                }
            }
            for (e, ops) in program.edges.iter().zip(&edge_ops) {
                if e.to == v {
                    children.push(Leaf::Sdp {
                        op: ops[t].clone(),
                        args: (0..m).map(|j| var_index(e.from, j, m)).collect(),
                    });
                }
            }
            equations.push(Expression::new(children));
        }
    }
    Ok(EquationSystem::new(names, equations))
}

/// Bounds per control point and template, with the solver run that
/// produced them.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub point_names: Vec<String>,
    /// `bounds[v][t]` bounds template `t` at control point `v` over every
    /// reachable state.
    pub bounds: Vec<Vec<ExtReal>>,
    pub solution: Solution,
}

/// Runs the analysis: builds the equation system and computes its least
/// solution.  The right-hand sides are all semidefinite operators and
/// constants, so [`Algorithm::Auto`](crate::eval::Algorithm::Auto)
/// dispatches to the chain-continuous evaluator.
pub fn analyze(
    program: &Program,
    templates: &[QuadraticTemplate],
    opts: &SolveOptions,
) -> Result<AnalysisResult> {
    let sys = build_equations(program, templates)?;
    let solution = solve_least(&sys, opts)?;
    let m = templates.len();
    let bounds = (0..program.num_points())
        .map(|v| (0..m).map(|t| solution.values.get(var_index(v, t, m))).collect())
        .collect();
    Ok(AnalysisResult {
        point_names: program.point_names.clone(),
        bounds,
        solution,
    })
}
