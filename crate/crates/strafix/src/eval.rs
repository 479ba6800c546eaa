//! Strategy evaluation through convex optimization, and the ∨-strategy
//! improvement driver computing least solutions.
//!
//! The bridge between fixpoint equations and optimization is the constraint
//! system C(E) of a conjunctive system `E` (one leaf per equation): every
//! equation `x = sup{f(y) | y ∈ Y(x_1..x_n)}` is replaced by `x ≤ f(y)`,
//! `y ∈ Y(x_1..x_n)` with fresh variables `y`, so the real points of C(E)
//! are exactly the finite pre-fixpoints of `E`.  Componentwise suprema over
//! that region are then linear programs (no semidefinite leaves) or
//! semidefinite programs (otherwise), one per variable.
//!
//! Infinities never enter the optimizer.  A valuation first splits the
//! variables by the value of their right-hand side: equations at `-∞` stay
//! there for the round, equations at `+∞` are pinned to `+∞`, and the rest
//! are maximized over the reals with the pinned values substituted in
//! ([`infinity_partition`], [`sup_pre_solution`]).  One such round is exact
//! for chain-continuous right-hand sides; case-split leaves can defer an
//! increase past `+∞` to the next round, so [`sup_pre_solution_iterate`]
//! repeats rounds (at most one per variable) until nothing changes.
//!
//! Three evaluators compute the round, differing in how much they trust the
//! right-hand sides:
//! - [`eval_attained`]: every supremum is attained (constants, affine
//!   forms, non-strict linear programs), so one joint constraint system
//!   decides everything.
//! - [`eval_general`]: suprema may not be attained (strict inequalities).
//!   Equations whose supremum does not exceed the starting value are frozen
//!   there, removing their possibly-open constraints; the frozen set only
//!   ever shrinks, so the iteration settles within one round per variable.
//! - [`eval_chain_continuous`]: one variable count's worth of Kleene steps
//!   identifies the variables that can still increase, everything else is
//!   frozen, and a single optimization round finishes.
//!
//! [`solve_least`] wires the evaluators into strategy iteration: starting
//! from the all-`-∞` strategy of a standard-form system, it alternately
//! improves the strategy greedily and evaluates the improved conjunctive
//! system, recording a monotone trace of valuations until the system is
//! solved.

use crate::error::{Error, Result};
use crate::ext::{ExtReal, Valuation};
use crate::linprog::{self, LpOperator, LpResult};
use crate::sdp::{self, ConicProblem, ConicResult, ConicRow, Relation, SdpSettings, SymMatrix};
use crate::system::{AffineFn, EquationSystem, Expression, Leaf, Strategy, VarId};

/// Default fixpoint tolerance: finite components of the returned valuation
/// satisfy their equations within this margin.
pub const DEFAULT_TOL_FIX: f64 = 1e-6;
/// Default improvement margin: a child must beat the incumbent by more
/// than this to switch the strategy, and a Kleene value must exceed the
/// current one by more than this to count a variable as increasing.
pub const DEFAULT_EPS_IMPROVE: f64 = 1e-9;
/// Two consecutive evaluation rounds within this distance count as stable.
const ROUND_STABLE_TOL: f64 = 1e-7;

/// The single leaf of a conjunctive equation.
fn single_leaf(sys: &EquationSystem, x: VarId) -> Result<&Leaf> {
    let children = &sys.equations[x].children;
    if children.len() != 1 {
        return Err(Error::InvalidSystem(format!(
            "equation for {} has {} children; evaluation needs a conjunctive system \
             (apply a strategy first)",
            sys.names[x],
            children.len()
        )));
    }
    Ok(&children[0])
}

/// A leaf after substituting frozen variable values.
enum Resolved {
    /// The equation's right-hand side is identically `-∞` over the active
    /// reals: its feasible set, and with it the whole joint constraint
    /// system, is empty.
    NegInf,
    /// The right-hand side is identically `+∞`: the equation constrains
    /// nothing, so the variable's supremum is `+∞` outright.
    PosInf,
    /// A real constraint contributor with frozen arguments folded in.
    Leaf(Leaf),
}

/// Substitutes frozen values into a leaf.  Finite values fold into offsets
/// or become fixed operator rows, `+∞` bounds drop their rows, and any row
/// bounded by `-∞` empties the feasible set.  A case split resolves to a
/// constant as soon as its watched variable is frozen; with an active
/// watch it stays unresolved (the constraint builder rejects it, while the
/// round evaluator substitutes the finite branch beforehand).
fn resolve_leaf(leaf: &Leaf, frozen: &[Option<ExtReal>]) -> Resolved {
    let resolve_affine = |f: &AffineFn| -> (Vec<(VarId, f64)>, ExtReal) {
        let mut offset = f.offset;
        let mut terms = Vec::with_capacity(f.terms.len());
        for &(v, w) in &f.terms {
            match frozen[v] {
                None => terms.push((v, w)),
                Some(val) => offset = offset.add(val.scale(w)),
            }
        }
        (terms, offset)
    };
    match leaf {
        Leaf::NegInf => Resolved::NegInf,
        Leaf::Const(c) => Resolved::Leaf(Leaf::Const(*c)),
        Leaf::Affine(f) => {
            let (terms, offset) = resolve_affine(f);
            match offset {
                ExtReal::NegInf => Resolved::NegInf,
                ExtReal::PosInf => Resolved::PosInf,
                ExtReal::Finite(_) => Resolved::Leaf(Leaf::Affine(AffineFn { terms, offset })),
            }
        }
        Leaf::MinAffine(fs) => {
            let mut kept = Vec::with_capacity(fs.len());
            for f in fs {
                let (terms, offset) = resolve_affine(f);
                match offset {
                    ExtReal::NegInf => return Resolved::NegInf,
                    ExtReal::PosInf => {}
                    ExtReal::Finite(_) => kept.push(AffineFn { terms, offset }),
                }
            }
            if kept.is_empty() {
                Resolved::PosInf
            } else {
                Resolved::Leaf(Leaf::MinAffine(kept))
            }
        }
        Leaf::Lp { op, args } => {
            let mut a = Vec::new();
            let mut strict = Vec::new();
            let mut kept_args = Vec::new();
            let mut a_fix = op.a_fix.clone();
            let mut b_fix = op.b_fix.clone();
            let mut strict_fix = op.strict_fix.clone();
            for ((row, &flag), &arg) in op.a.iter().zip(&op.strict).zip(args) {
                match frozen[arg] {
                    None => {
                        a.push(row.clone());
                        strict.push(flag);
                        kept_args.push(arg);
                    }
                    Some(ExtReal::Finite(v)) => {
                        a_fix.push(row.clone());
                        b_fix.push(v);
                        strict_fix.push(flag);
                    }
                    Some(ExtReal::PosInf) => {}
                    Some(ExtReal::NegInf) => return Resolved::NegInf,
                }
            }
            Resolved::Leaf(Leaf::Lp {
                op: LpOperator {
                    a,
                    c: op.c.clone(),
                    strict,
                    a_fix,
                    b_fix,
                    strict_fix,
                },
                args: kept_args,
            })
        }
        Leaf::Sdp { op, args } => {
            let mut b_ineq = Vec::new();
            let mut kept_args = Vec::new();
            let mut fixed = op.fixed.clone();
            for (m, &arg) in op.b_ineq.iter().zip(args) {
                match frozen[arg] {
                    None => {
                        b_ineq.push(m.clone());
                        kept_args.push(arg);
                    }
                    Some(ExtReal::Finite(v)) => fixed.push((m.clone(), v)),
                    Some(ExtReal::PosInf) => {}
                    Some(ExtReal::NegInf) => return Resolved::NegInf,
                }
            }
            let mut op = op.clone();
            op.b_ineq = b_ineq;
            op.fixed = fixed;
            Resolved::Leaf(Leaf::Sdp {
                op,
                args: kept_args,
            })
        }
        Leaf::CaseAtInf {
            watch,
            finite,
            infinite,
        } => match frozen[*watch] {
            Some(ExtReal::PosInf) => Resolved::Leaf(Leaf::Const(*infinite)),
            Some(_) => Resolved::Leaf(Leaf::Const(*finite)),
            None => Resolved::Leaf(leaf.clone()),
        },
    }
}

/// Replaces every case split by the branch it takes over the round's
/// quantification: the infinite branch if the watched variable is frozen
/// at `+∞`, the finite branch otherwise (active variables range over the
/// reals, where the watch is never `+∞`).
fn resolve_real_case_leaves(sys: &EquationSystem, frozen: &[Option<ExtReal>]) -> EquationSystem {
    let equations = sys
        .equations
        .iter()
        .map(|eq| {
            Expression::new(
                eq.children
                    .iter()
                    .map(|leaf| match leaf {
                        Leaf::CaseAtInf {
                            watch,
                            finite,
                            infinite,
                        } => Leaf::Const(if frozen[*watch] == Some(ExtReal::PosInf) {
                            *infinite
                        } else {
                            *finite
                        }),
                        other => other.clone(),
                    })
                    .collect(),
            )
        })
        .collect();
    EquationSystem {
        names: sys.names.clone(),
        equations,
    }
}

/// The constraint system C(E) of a conjunctive system, restricted to its
/// active variables: one scalar column per active variable plus fresh
/// columns for every linear-program leaf, one fresh positive-semidefinite
/// block per semidefinite leaf, and the per-leaf rows.  Strict rows are
/// emitted non-strict (the supremum over an open set equals the supremum
/// over its closure whenever the open set is nonempty; the general
/// evaluator's freezing keeps that sound).
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    /// Scalar column of each active variable (`None` for frozen ones).
    pub var_col: Vec<Option<usize>>,
    /// Total scalar columns: active variables first, then LP auxiliaries.
    pub num_scalars: usize,
    /// Dimensions of the semidefinite blocks, one per SDP leaf.
    pub block_dims: Vec<usize>,
    pub rows: Vec<ConicRow>,
    /// Active variables whose substituted equation became the constant
    /// `+∞`; their supremum is `+∞` without solving anything.
    pub unconstrained: Vec<bool>,
    /// Some active equation became the constant `-∞`, so the joint
    /// feasible set is empty and every active supremum is `-∞`.
    pub infeasible: bool,
}

impl ConstraintSystem {
    /// Dense `A x ≤ b` form of the rows for the simplex path.  Equality
    /// rows become a pair of opposite inequalities.
    fn lp_rows(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut a = Vec::with_capacity(self.rows.len());
        let mut b = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            debug_assert!(row.blocks.is_empty(), "LP path with block coefficients");
            let mut dense = vec![0.0; self.num_scalars];
            for &(col, w) in &row.scalars {
                dense[col] += w;
            }
            match row.rel {
                Relation::Le => {
                    a.push(dense);
                    b.push(row.rhs);
                }
                Relation::Eq => {
                    a.push(dense.iter().map(|v| -v).collect());
                    b.push(-row.rhs);
                    a.push(dense);
                    b.push(row.rhs);
                }
            }
        }
        (a, b)
    }
}

/// Builds the constraint system of a conjunctive system over its active
/// variables, substituting the frozen values everywhere they occur.
///
/// Frozen `+∞` arguments drop the rows they bound, frozen `-∞` arguments
/// empty the leaf's feasible set, and finite values become constants.  An
/// unresolved case split in an active equation has no constraint form and
/// is rejected.
pub fn build_constraint_system(
    sys: &EquationSystem,
    frozen: &[Option<ExtReal>],
) -> Result<ConstraintSystem> {
    let n = sys.len();
    assert_eq!(frozen.len(), n, "one frozen slot per variable");
    let mut var_col = vec![None; n];
    let mut num_scalars = 0;
    for (v, slot) in frozen.iter().enumerate() {
        if slot.is_none() {
            var_col[v] = Some(num_scalars);
            num_scalars += 1;
        }
    }
    let mut cs = ConstraintSystem {
        var_col,
        num_scalars,
        block_dims: Vec::new(),
        rows: Vec::new(),
        unconstrained: vec![false; n],
        infeasible: false,
    };
    for x in 0..n {
        if frozen[x].is_some() {
            continue;
        }
        let x_col = cs.var_col[x].unwrap();
        let leaf = match resolve_leaf(single_leaf(sys, x)?, frozen) {
            Resolved::NegInf => {
                cs.infeasible = true;
                continue;
            }
            Resolved::PosInf => {
                cs.unconstrained[x] = true;
                continue;
            }
            Resolved::Leaf(leaf) => leaf,
        };
        // One affine upper bound `x ≤ Σ w_i·x_i + offset` as a row with
        // merged coefficients (the variable may bound itself).
        let mut affine_row = |f: &AffineFn| {
            let mut scalars: Vec<(usize, f64)> = vec![(x_col, 1.0)];
            for &(v, w) in &f.terms {
                scalars.push((cs.var_col[v].expect("active argument"), -w));
            }
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(scalars.len());
            scalars.sort_by_key(|&(c, _)| c);
            for (c, w) in scalars {
                match merged.last_mut() {
                    Some((lc, lw)) if *lc == c => *lw += w,
                    _ => merged.push((c, w)),
                }
            }
            merged.retain(|&(_, w)| w != 0.0);
            cs.rows.push(ConicRow {
                scalars: merged,
                blocks: Vec::new(),
                rel: Relation::Le,
                rhs: f.offset.finite().expect("resolved affine offset is finite"),
            });
        };
        match leaf {
            Leaf::NegInf => unreachable!("resolved away"),
            Leaf::CaseAtInf { watch, .. } => {
                return Err(Error::UnsupportedLeaf(format!(
                    "the equation for {} splits on whether {} is +∞, which has no \
                     constraint form while {} is being maximized",
                    sys.names[x], sys.names[watch], sys.names[watch]
                )));
            }
            Leaf::Const(c) => affine_row(&AffineFn::constant(ExtReal::Finite(c))),
            Leaf::Affine(f) => affine_row(&f),
            Leaf::MinAffine(fs) => {
                for f in &fs {
                    affine_row(f);
                }
            }
            Leaf::Lp { op, args } => {
                let y0 = cs.num_scalars;
                cs.num_scalars += op.dim();
                let mut link = vec![(x_col, 1.0)];
                link.extend((0..op.dim()).map(|j| (y0 + j, -op.c[j])));
                cs.rows.push(ConicRow {
                    scalars: link,
                    blocks: Vec::new(),
                    rel: Relation::Le,
                    rhs: 0.0,
                });
                for (row, &arg) in op.a.iter().zip(&args) {
                    let mut scalars = vec![(cs.var_col[arg].expect("active argument"), -1.0)];
                    scalars.extend(row.iter().enumerate().map(|(j, &w)| (y0 + j, w)));
                    cs.rows.push(ConicRow {
                        scalars,
                        blocks: Vec::new(),
                        rel: Relation::Le,
                        rhs: 0.0,
                    });
                }
                for (row, &bound) in op.a_fix.iter().zip(&op.b_fix) {
                    cs.rows.push(ConicRow {
                        scalars: row.iter().enumerate().map(|(j, &w)| (y0 + j, w)).collect(),
                        blocks: Vec::new(),
                        rel: Relation::Le,
                        rhs: bound,
                    });
                }
            }
            Leaf::Sdp { op, args } => {
                let b = cs.block_dims.len();
                cs.block_dims.push(op.dim);
                cs.rows.push(ConicRow {
                    scalars: vec![(x_col, 1.0)],
                    blocks: vec![(b, op.c_obj.scale(-1.0))],
                    rel: Relation::Le,
                    rhs: 0.0,
                });
                for (m, &rhs) in op.a_eq.iter().zip(&op.a_rhs) {
                    cs.rows.push(ConicRow {
                        scalars: Vec::new(),
                        blocks: vec![(b, m.clone())],
                        rel: Relation::Eq,
                        rhs,
                    });
                }
                for (m, &arg) in op.b_ineq.iter().zip(&args) {
                    cs.rows.push(ConicRow {
                        scalars: vec![(cs.var_col[arg].expect("active argument"), -1.0)],
                        blocks: vec![(b, m.clone())],
                        rel: Relation::Le,
                        rhs: 0.0,
                    });
                }
                for (m, bound) in &op.fixed {
                    cs.rows.push(ConicRow {
                        scalars: Vec::new(),
                        blocks: vec![(b, m.clone())],
                        rel: Relation::Le,
                        rhs: *bound,
                    });
                }
            }
        }
    }
    Ok(cs)
}

/// Componentwise supremum of the real pre-fixpoint region: maximizes every
/// active variable over the joint constraint system and reports frozen
/// variables at their frozen values.  Unbounded maximizations yield `+∞`;
/// an infeasible system yields `-∞` for every active variable at once
/// (the region is empty, so every supremum is over the empty set).
pub fn maximize_all(
    sys: &EquationSystem,
    frozen: &[Option<ExtReal>],
    settings: &SdpSettings,
) -> Result<Vec<ExtReal>> {
    let n = sys.len();
    let cs = build_constraint_system(sys, frozen)?;
    let mut out: Vec<ExtReal> = frozen
        .iter()
        .map(|slot| slot.unwrap_or(ExtReal::NegInf))
        .collect();
    let actives: Vec<VarId> = (0..n).filter(|&v| frozen[v].is_none()).collect();
    if actives.is_empty() {
        return Ok(out);
    }
    if cs.infeasible {
        return Ok(out);
    }
    if cs.block_dims.is_empty() {
        let (a, b) = cs.lp_rows();
        if linprog::feasibility_gap(&a, &b) > linprog::TOL_FEAS {
            return Ok(out);
        }
        for &x in &actives {
            out[x] = if cs.unconstrained[x] {
                ExtReal::PosInf
            } else {
                let mut obj = vec![0.0; cs.num_scalars];
                obj[cs.var_col[x].unwrap()] = 1.0;
                match linprog::solve_lp(&a, &b, &obj, true) {
                    LpResult::Optimal(v, _) => ExtReal::Finite(v),
                    LpResult::Unbounded => ExtReal::PosInf,
                    LpResult::Infeasible => ExtReal::NegInf,
                }
            };
        }
    } else {
        let template = ConicProblem {
            num_scalars: cs.num_scalars,
            block_dims: cs.block_dims.clone(),
            obj_scalars: vec![0.0; cs.num_scalars],
            obj_blocks: cs.block_dims.iter().map(|&d| SymMatrix::zeros(d)).collect(),
            rows: cs.rows.clone(),
        };
        for &x in &actives {
            if cs.unconstrained[x] {
                out[x] = ExtReal::PosInf;
                continue;
            }
            let mut problem = template.clone();
            problem.obj_scalars[cs.var_col[x].unwrap()] = 1.0;
            match sdp::solve_conic(&problem, settings)? {
                ConicResult::Optimal(opt) => out[x] = ExtReal::Finite(opt.value),
                ConicResult::Unbounded => out[x] = ExtReal::PosInf,
                ConicResult::Infeasible => {
                    for &y in &actives {
                        out[y] = ExtReal::NegInf;
                    }
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// The variables split by the current value of their right-hand side:
/// equations at `-∞`, equations at `+∞`, and the finitely-valued rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfinityPartition {
    pub neg_inf: Vec<VarId>,
    pub pos_inf: Vec<VarId>,
    pub finite: Vec<VarId>,
}

impl InfinityPartition {
    fn from_values(vals: &Valuation) -> InfinityPartition {
        let mut p = InfinityPartition {
            neg_inf: Vec::new(),
            pos_inf: Vec::new(),
            finite: Vec::new(),
        };
        for (x, &v) in vals.values().iter().enumerate() {
            match v {
                ExtReal::NegInf => p.neg_inf.push(x),
                ExtReal::PosInf => p.pos_inf.push(x),
                ExtReal::Finite(_) => p.finite.push(x),
            }
        }
        p
    }

    /// Frozen-value map pinning the `-∞` and `+∞` classes, leaving the
    /// finite class active.
    pub fn frozen_map(&self, n: usize) -> Vec<Option<ExtReal>> {
        let mut frozen = vec![None; n];
        for &x in &self.neg_inf {
            frozen[x] = Some(ExtReal::NegInf);
        }
        for &x in &self.pos_inf {
            frozen[x] = Some(ExtReal::PosInf);
        }
        frozen
    }
}

/// Splits the variables of a conjunctive system by the sign of their
/// right-hand side's value at `rho`.
pub fn infinity_partition(
    sys: &EquationSystem,
    rho: &Valuation,
    settings: &SdpSettings,
) -> Result<InfinityPartition> {
    let vals = sys.kleene_step(rho, settings)?;
    Ok(InfinityPartition::from_values(&vals))
}

/// One evaluation round from a feasible pre-solution `rho`: partition by
/// the right-hand side values at `rho`, pin the infinite classes, resolve
/// case splits over the remaining real quantification, and maximize every
/// finite-class variable over the joint constraint system.
///
/// The result is again a pre-solution, is at most the least solution above
/// `rho`, and reaches it exactly when every right-hand side is upward
/// chain continuous.  Case splits can lag one round behind (their watch
/// must first be pinned at `+∞` by an earlier round), hence
/// [`sup_pre_solution_iterate`].
pub fn sup_pre_solution(
    sys: &EquationSystem,
    rho: &Valuation,
    settings: &SdpSettings,
) -> Result<Valuation> {
    let part = infinity_partition(sys, rho, settings)?;
    let frozen = part.frozen_map(sys.len());
    let resolved = resolve_real_case_leaves(sys, &frozen);
    let vals = maximize_all(&resolved, &frozen, settings)?;
    Ok(Valuation::new(vals))
}

/// Iterates [`sup_pre_solution`] from a feasible pre-solution until a
/// round changes nothing or `max_rounds` rounds elapse.  One round per
/// variable reaches the least solution above `rho`: each round past the
/// first only matters when it pushes some variable to `+∞`, which can
/// happen at most once per variable.
pub fn sup_pre_solution_iterate(
    sys: &EquationSystem,
    rho: &Valuation,
    max_rounds: usize,
    settings: &SdpSettings,
) -> Result<Valuation> {
    let mut cur = rho.clone();
    for _ in 0..max_rounds {
        let next = sup_pre_solution(sys, &cur, settings)?.join(&cur);
        if next.approx_eq(&cur, ROUND_STABLE_TOL) {
            return Ok(next);
        }
        cur = next;
    }
    Ok(cur)
}

/// Evaluates a conjunctive system whose right-hand sides all attain their
/// suprema (constants, affine forms, minima of affine forms, non-strict
/// linear programs): variables whose equations sit at `±∞` under `rho0`
/// keep their sign, and a single joint constraint system decides the rest,
/// with unbounded maximizations mapping to `+∞`.
pub fn eval_attained(
    sys: &EquationSystem,
    rho0: &Valuation,
    settings: &SdpSettings,
) -> Result<Valuation> {
    let n = sys.len();
    let rhs = sys.kleene_step(rho0, settings)?;
    let mut frozen: Vec<Option<ExtReal>> = vec![None; n];
    for x in 0..n {
        frozen[x] = match rhs.get(x) {
            ExtReal::NegInf => Some(ExtReal::NegInf),
            ExtReal::PosInf => Some(ExtReal::PosInf),
            ExtReal::Finite(_) if rho0.get(x) == ExtReal::PosInf => Some(ExtReal::PosInf),
            ExtReal::Finite(_) => None,
        };
    }
    Ok(Valuation::new(maximize_all(sys, &frozen, settings)?))
}

/// [`eval_general`] plus the per-round freeze masks, for tests and
/// diagnostics.  `history[k][x]` says whether `x` was frozen in round `k`;
/// the masks only ever lose members from one round to the next.
pub fn eval_general_with_history(
    sys: &EquationSystem,
    rho0: &Valuation,
    eps: f64,
    settings: &SdpSettings,
) -> Result<(Valuation, Vec<Vec<bool>>)> {
    let n = sys.len();
    let mut history: Vec<Vec<bool>> = Vec::new();
    let mut rho = rho0.clone();
    for _ in 0..n + 2 {
        let rhs = sys.kleene_step(&rho, settings)?;
        let mask: Vec<bool> = (0..n)
            .map(|x| !rhs.get(x).exceeds_by(rho0.get(x), eps))
            .collect();
        if history.last() == Some(&mask) {
            return Ok((rho, history));
        }
        let frozen: Vec<Option<ExtReal>> = mask
            .iter()
            .enumerate()
            .map(|(x, &f)| f.then(|| rho0.get(x)))
            .collect();
        rho = Valuation::new(maximize_all(sys, &frozen, settings)?);
        history.push(mask);
    }
    Ok((rho, history))
}

/// Evaluates a conjunctive system whose suprema may not be attained
/// (strict inequality rows): equations whose value at the current iterate
/// does not exceed `rho0` are frozen at `rho0`, the rest are maximized
/// with strict rows relaxed, and the round repeats until the frozen set
/// stops changing.  Freezing is what keeps the relaxation sound: an
/// equation pinned at its unattained supremum no longer contributes an
/// open constraint.
pub fn eval_general(
    sys: &EquationSystem,
    rho0: &Valuation,
    eps: f64,
    settings: &SdpSettings,
) -> Result<Valuation> {
    Ok(eval_general_with_history(sys, rho0, eps, settings)?.0)
}

/// Evaluates a conjunctive system of upward chain continuous right-hand
/// sides from a feasible pre-solution: one Kleene step per variable
/// detects which variables can still increase, everything else is frozen
/// at `rho`, equations already at `+∞` are pinned there, and one
/// optimization round computes the increase exactly.
pub fn eval_chain_continuous(
    sys: &EquationSystem,
    rho: &Valuation,
    eps: f64,
    settings: &SdpSettings,
) -> Result<Valuation> {
    let n = sys.len();
    let first = sys.kleene_step(rho, settings)?;
    let mut z = first.join(rho);
    for _ in 1..n {
        z = sys.kleene_step(&z, settings)?.join(&z);
    }
    let mut frozen: Vec<Option<ExtReal>> = (0..n)
        .map(|x| {
            if z.get(x).exceeds_by(rho.get(x), eps) {
                None
            } else {
                Some(rho.get(x))
            }
        })
        .collect();
    for x in 0..n {
        if frozen[x].is_some() {
            continue;
        }
        match first.get(x) {
            ExtReal::PosInf => frozen[x] = Some(ExtReal::PosInf),
            ExtReal::NegInf => {
                return Err(Error::InternalInvariant(format!(
                    "the equation for {} evaluates to -∞ at a valuation where it must \
                     increase; the pre-solution was not feasible",
                    sys.names[x]
                )));
            }
            ExtReal::Finite(_) => {}
        }
    }
    Ok(Valuation::new(maximize_all(sys, &frozen, settings)?))
}

/// Which evaluator the driver runs on each improved strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Inspect the leaves: [`Attained`](Algorithm::Attained) when every
    /// supremum is attained, [`ChainContinuous`](Algorithm::ChainContinuous)
    /// when semidefinite leaves join them, [`General`](Algorithm::General)
    /// otherwise (strict rows, case splits).
    Auto,
    Attained,
    General,
    ChainContinuous,
}

/// Resolves [`Algorithm::Auto`] by scanning the leaves.
pub fn select_algorithm(sys: &EquationSystem) -> Algorithm {
    let mut has_sdp = false;
    for eq in &sys.equations {
        for leaf in &eq.children {
            match leaf {
                Leaf::CaseAtInf { .. } => return Algorithm::General,
                Leaf::Lp { op, .. } if op.has_strict_rows() => return Algorithm::General,
                Leaf::Sdp { .. } => has_sdp = true,
                _ => {}
            }
        }
    }
    if has_sdp {
        Algorithm::ChainContinuous
    } else {
        Algorithm::Attained
    }
}

/// Knobs of [`solve_least`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub algorithm: Algorithm,
    /// Finite components of the answer satisfy their equations within
    /// this; infinite components match exactly.
    pub tol_fix: f64,
    /// Margin for strategy switches and increase detection.
    pub eps_improve: f64,
    pub sdp: SdpSettings,
}

impl Default for SolveOptions {
    fn default() -> SolveOptions {
        SolveOptions {
            algorithm: Algorithm::Auto,
            tol_fix: DEFAULT_TOL_FIX,
            eps_improve: DEFAULT_EPS_IMPROVE,
            sdp: SdpSettings::default(),
        }
    }
}

/// One improvement step: the strategy in force and the valuation after
/// evaluating it.  The first entry records the initial strategy with the
/// bottom valuation.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub strategy: Strategy,
    pub values: Valuation,
}

/// Result of [`solve_least`].
#[derive(Debug, Clone)]
pub struct Solution {
    /// The least solution of the system.
    pub values: Valuation,
    /// Number of strategy improvements performed (trace length minus one).
    pub improvement_steps: u64,
    /// Monotone valuation trace, one entry per strategy in force.
    pub trace: Vec<TraceStep>,
    /// The evaluator that ran (never [`Algorithm::Auto`]).
    pub algorithm: Algorithm,
}

/// Does `rho` solve every equation, finite components within `tol` and
/// infinite components exactly?
fn solves(
    sys: &EquationSystem,
    rho: &Valuation,
    tol: f64,
    settings: &SdpSettings,
) -> Result<bool> {
    let vals = sys.kleene_step(rho, settings)?;
    Ok((0..sys.len()).all(|x| match (vals.get(x), rho.get(x)) {
        (ExtReal::NegInf, ExtReal::NegInf) | (ExtReal::PosInf, ExtReal::PosInf) => true,
        (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs() <= tol,
        _ => false,
    }))
}

/// Computes the least solution of a standard-form system by ∨-strategy
/// improvement.
///
/// Starting from the all-`-∞` strategy and the bottom valuation, each step
/// switches every equation to its greedily best child (margin
/// `eps_improve`) and evaluates the resulting conjunctive system with the
/// configured evaluator; the valuation only ever grows.  The loop stops
/// when the valuation solves the full system within `tol_fix`.  Every
/// improvement step strictly increases the valuation, and no strategy can
/// repeat, so the step count is bounded by the variable count times the
/// strategy count; exceeding that bound (or stalling below it) reports an
/// internal invariant violation rather than a wrong answer.
pub fn solve_least(sys: &EquationSystem, opts: &SolveOptions) -> Result<Solution> {
    sys.validate()?;
    sys.require_standard_form()?;
    let n = sys.len();
    let algorithm = match opts.algorithm {
        Algorithm::Auto => select_algorithm(sys),
        chosen => chosen,
    };
    let budget = (n as u64).saturating_mul(sys.strategy_count());
    let mut sigma = Strategy::initial(n);
    let mut rho = Valuation::bottom(n);
    let mut trace = vec![TraceStep {
        strategy: sigma.clone(),
        values: rho.clone(),
    }];
    let mut steps: u64 = 0;
    while !solves(sys, &rho, opts.tol_fix, &opts.sdp)? {
        let improved = sys.improve_strategy(&sigma, &rho, opts.eps_improve, &opts.sdp)?;
        if improved == sigma {
            return Err(Error::InternalInvariant(
                "no child improves on a valuation that does not solve the system".into(),
            ));
        }
        steps += 1;
        if steps > budget {
            return Err(Error::InternalInvariant(format!(
                "strategy improvement exceeded its step budget of {budget} \
                 (variables times strategies)"
            )));
        }
        let conj = sys.apply_strategy(&improved);
        let evaluated = match algorithm {
            Algorithm::Attained => eval_attained(&conj, &rho, &opts.sdp)?,
            Algorithm::General => eval_general(&conj, &rho, opts.eps_improve, &opts.sdp)?,
            Algorithm::ChainContinuous => {
                eval_chain_continuous(&conj, &rho, opts.eps_improve, &opts.sdp)?
            }
            Algorithm::Auto => unreachable!("resolved above"),
        };
        rho = rho.join(&evaluated);
        sigma = improved;
        trace.push(TraceStep {
            strategy: sigma.clone(),
            values: rho.clone(),
        });
    }
    Ok(Solution {
        values: rho,
        improvement_steps: steps,
        trace,
        algorithm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{shifted_sqrt_operator, sqrt_operator};

    fn fin(v: f64) -> ExtReal {
        ExtReal::Finite(v)
    }

    fn val(vs: &[ExtReal]) -> Valuation {
        Valuation::new(vs.to_vec())
    }

    fn aff(terms: Vec<(VarId, f64)>, offset: f64) -> AffineFn {
        AffineFn {
            terms,
            offset: ExtReal::Finite(offset),
        }
    }

    fn conj(names: &[&str], leaves: Vec<Leaf>) -> EquationSystem {
        EquationSystem::new(
            names.iter().map(|s| s.to_string()).collect(),
            leaves
                .into_iter()
                .map(|l| Expression::new(vec![l]))
                .collect(),
        )
    }

    /// `x1 = sup{y | y ≤ 0}`, `x2 = sup{y2 | 0 ≤ y1 ≤ x1, y2 ≤ 1}`: both
    /// suprema attained, answer (0, 1).
    fn attained_pair() -> EquationSystem {
        let op1 = LpOperator {
            a: vec![],
            c: vec![1.0],
            strict: vec![],
            a_fix: vec![vec![1.0]],
            b_fix: vec![0.0],
            strict_fix: vec![false],
        };
        let op2 = LpOperator {
            a: vec![vec![1.0, 0.0]],
            c: vec![0.0, 1.0],
            strict: vec![false],
            a_fix: vec![vec![-1.0, 0.0], vec![0.0, 1.0]],
            b_fix: vec![0.0, 1.0],
            strict_fix: vec![false, false],
        };
        conj(
            &["x1", "x2"],
            vec![
                Leaf::Lp { op: op1, args: vec![] },
                Leaf::Lp {
                    op: op2,
                    args: vec![0],
                },
            ],
        )
    }

    /// The same system with the bound on `x1` strict: `x1 = sup{y | y < 0}`
    /// still evaluates to 0, but its constraint row is open.
    fn strict_pair() -> EquationSystem {
        let mut sys = attained_pair();
        let Leaf::Lp { op, .. } = &mut sys.equations[0].children[0] else {
            unreachable!();
        };
        op.strict_fix = vec![true];
        sys
    }

    /// `x1 = 1`, `x2 = x1 + x2`, `x3 = (0 if x2 < ∞, 1 if x2 = ∞)`.
    fn case_chain() -> EquationSystem {
        conj(
            &["x1", "x2", "x3"],
            vec![
                Leaf::Const(1.0),
                Leaf::Affine(aff(vec![(0, 1.0), (1, 1.0)], 0.0)),
                Leaf::CaseAtInf {
                    watch: 1,
                    finite: 0.0,
                    infinite: 1.0,
                },
            ],
        )
    }

    #[test]
    fn attained_pair_maximizes_jointly() {
        let sys = attained_pair();
        let rho0 = val(&[fin(0.0), fin(0.0)]);
        let out = eval_attained(&sys, &rho0, &SdpSettings::default()).unwrap();
        assert!(out.approx_eq(&val(&[fin(0.0), fin(1.0)]), 1e-7));
    }

    #[test]
    fn constant_and_self_loop_suprema() {
        let sys = conj(&["x"], vec![Leaf::Const(5.0)]);
        let out = eval_attained(&sys, &val(&[fin(0.0)]), &SdpSettings::default()).unwrap();
        assert_eq!(out.get(0), fin(5.0));

        // x = x: every real is a pre-fixpoint, so the supremum is +∞.
        let sys = conj(&["x"], vec![Leaf::Affine(aff(vec![(0, 1.0)], 0.0))]);
        let out = eval_attained(&sys, &val(&[fin(0.0)]), &SdpSettings::default()).unwrap();
        assert_eq!(out.get(0), ExtReal::PosInf);
    }

    #[test]
    fn constraint_rows_and_columns_per_leaf() {
        let sys = attained_pair();
        let cs = build_constraint_system(&sys, &[None, None]).unwrap();
        // Columns: x1, x2, one LP variable for x1's leaf, two for x2's.
        assert_eq!(cs.num_scalars, 5);
        // Rows: two links, one parametrized row, three fixed rows.
        assert_eq!(cs.rows.len(), 6);
        assert!(cs.block_dims.is_empty());
        assert!(!cs.infeasible);
    }

    #[test]
    fn frozen_arguments_fold_into_constants() {
        // x = y + 1 with y frozen: at y = 2 the row is x ≤ 3; at y = +∞
        // the equation constrains nothing; at y = -∞ it is unsatisfiable.
        let sys = conj(
            &["x", "y"],
            vec![
                Leaf::Affine(aff(vec![(1, 1.0)], 1.0)),
                Leaf::Const(0.0),
            ],
        );
        let s = SdpSettings::default();
        let out = maximize_all(&sys, &[None, Some(fin(2.0))], &s).unwrap();
        assert_eq!(out, vec![fin(3.0), fin(2.0)]);
        let out = maximize_all(&sys, &[None, Some(ExtReal::PosInf)], &s).unwrap();
        assert_eq!(out[0], ExtReal::PosInf);
        let out = maximize_all(&sys, &[None, Some(ExtReal::NegInf)], &s).unwrap();
        assert_eq!(out[0], ExtReal::NegInf);
    }

    #[test]
    fn frozen_lp_bounds_drop_or_empty_rows() {
        // x = sup{y | y ≤ arg}: a +∞ argument drops the row (unbounded),
        // a -∞ argument empties the feasible set.
        let op = LpOperator::new(vec![vec![1.0]], vec![1.0]);
        let sys = conj(
            &["x", "arg"],
            vec![
                Leaf::Lp { op, args: vec![1] },
                Leaf::Const(0.0),
            ],
        );
        let s = SdpSettings::default();
        let out = maximize_all(&sys, &[None, Some(ExtReal::PosInf)], &s).unwrap();
        assert_eq!(out[0], ExtReal::PosInf);
        let out = maximize_all(&sys, &[None, Some(ExtReal::NegInf)], &s).unwrap();
        assert_eq!(out[0], ExtReal::NegInf);
        let out = maximize_all(&sys, &[None, Some(fin(7.0))], &s).unwrap();
        assert_eq!(out[0], fin(7.0));
    }

    #[test]
    fn case_split_with_active_watch_is_rejected() {
        let sys = case_chain();
        let err = eval_attained(&sys, &Valuation::new(vec![fin(0.0); 3]), &SdpSettings::default())
            .unwrap_err();
        assert!(matches!(err, Error::UnsupportedLeaf(_)));
    }

    #[test]
    fn general_freezes_strict_equation_and_stops() {
        let sys = strict_pair();
        let rho0 = val(&[fin(0.0), fin(0.0)]);
        let (out, history) =
            eval_general_with_history(&sys, &rho0, 1e-9, &SdpSettings::default()).unwrap();
        assert!(out.approx_eq(&val(&[fin(0.0), fin(1.0)]), 1e-7));
        // Round 1 freezes x1 (supremum 0 not above ρ0) and keeps x2
        // active; round 2 sees the same mask and stops.
        assert_eq!(history, vec![vec![true, false]]);
    }

    #[test]
    fn general_returns_start_when_it_already_solves() {
        let sys = attained_pair();
        let rho0 = val(&[fin(0.0), fin(1.0)]);
        let out = eval_general(&sys, &rho0, 1e-9, &SdpSettings::default()).unwrap();
        assert!(out.approx_eq(&rho0, 1e-9));
    }

    #[test]
    fn general_and_attained_agree_on_closed_rows() {
        let sys = attained_pair();
        let rho0 = val(&[fin(0.0), fin(0.0)]);
        let s = SdpSettings::default();
        let a = eval_attained(&sys, &rho0, &s).unwrap();
        let g = eval_general(&sys, &rho0, 1e-9, &s).unwrap();
        assert!(a.approx_eq(&g, 1e-7));
    }

    #[test]
    fn chain_continuous_freezes_non_increasing_variables() {
        // On the strict pair from (0, 0), the Kleene values only move x2,
        // so x1 is frozen at 0 and its open row never reaches the solver.
        let sys = strict_pair();
        let rho = val(&[fin(0.0), fin(0.0)]);
        let out = eval_chain_continuous(&sys, &rho, 1e-9, &SdpSettings::default()).unwrap();
        assert!(out.approx_eq(&val(&[fin(0.0), fin(1.0)]), 1e-7));
    }

    #[test]
    fn chain_continuous_climbs_shifted_sqrt() {
        // x = 7/8 + √(x - 47/64) from ρ = 1 has least solution 2 above.
        let sys = conj(
            &["x"],
            vec![Leaf::Sdp {
                op: shifted_sqrt_operator(7.0 / 8.0, 47.0 / 64.0),
                args: vec![0],
            }],
        );
        let out =
            eval_chain_continuous(&sys, &val(&[fin(1.0)]), 1e-9, &SdpSettings::default()).unwrap();
        assert!(out.get(0).approx_eq(fin(2.0), 1e-5), "got {}", out.get(0));
    }

    #[test]
    fn round_evaluation_resolves_case_split_over_reals() {
        // At (0,0,0) all right-hand sides are finite, so the case split
        // contributes its finite branch and x2's maximization is
        // unbounded: one round gives (1, ∞, 0).
        let sys = case_chain();
        let s = SdpSettings::default();
        let rho = Valuation::new(vec![fin(0.0); 3]);
        let r1 = sup_pre_solution(&sys, &rho, &s).unwrap();
        assert_eq!(
            r1.values(),
            &[fin(1.0), ExtReal::PosInf, fin(0.0)],
        );
        // Round 2 pins x2 = +∞, so the case split takes its infinite
        // branch and x3 climbs to 1; round 3 changes nothing.
        let r2 = sup_pre_solution(&sys, &r1, &s).unwrap();
        assert_eq!(
            r2.values(),
            &[fin(1.0), ExtReal::PosInf, fin(1.0)],
        );
        let r3 = sup_pre_solution(&sys, &r2, &s).unwrap();
        assert_eq!(r2.values(), r3.values());
    }

    #[test]
    fn round_iteration_stops_at_the_least_solution() {
        let sys = case_chain();
        let s = SdpSettings::default();
        let rho = Valuation::new(vec![fin(0.0); 3]);
        let out = sup_pre_solution_iterate(&sys, &rho, sys.len(), &s).unwrap();
        assert_eq!(
            out.values(),
            &[fin(1.0), ExtReal::PosInf, fin(1.0)],
        );
    }

    #[test]
    fn partition_splits_by_right_hand_side_value() {
        let sys = case_chain();
        let s = SdpSettings::default();
        let p = infinity_partition(&sys, &Valuation::new(vec![fin(0.0); 3]), &s).unwrap();
        assert_eq!(p.finite, vec![0, 1, 2]);
        let p = infinity_partition(
            &sys,
            &val(&[fin(1.0), ExtReal::PosInf, fin(0.0)]),
            &s,
        )
        .unwrap();
        assert_eq!(p.pos_inf, vec![1]);
        assert_eq!(p.finite, vec![0, 2]);
        let p = infinity_partition(&sys, &Valuation::bottom(3), &s).unwrap();
        assert_eq!(p.neg_inf, vec![1]);
        assert_eq!(p.finite, vec![0, 2]);
    }

    #[test]
    fn algorithm_selection_by_leaf_kinds() {
        assert_eq!(select_algorithm(&attained_pair()), Algorithm::Attained);
        assert_eq!(select_algorithm(&strict_pair()), Algorithm::General);
        assert_eq!(select_algorithm(&case_chain()), Algorithm::General);
        let sys = conj(
            &["x"],
            vec![Leaf::Sdp {
                op: sqrt_operator(),
                args: vec![0],
            }],
        );
        assert_eq!(select_algorithm(&sys), Algorithm::ChainContinuous);
    }

    /// Standard-form `x = -∞ ∨ 1/2 ∨ √x ∨ 7/8 + √(x - 47/64)`.
    fn sqrt_roof_system() -> EquationSystem {
        EquationSystem::new(
            vec!["x".into()],
            vec![Expression::new(vec![
                Leaf::NegInf,
                Leaf::Const(0.5),
                Leaf::Sdp {
                    op: sqrt_operator(),
                    args: vec![0],
                },
                Leaf::Sdp {
                    op: shifted_sqrt_operator(7.0 / 8.0, 47.0 / 64.0),
                    args: vec![0],
                },
            ])],
        )
    }

    #[test]
    fn solve_least_climbs_the_sqrt_roof() {
        let sys = sqrt_roof_system();
        let sol = solve_least(&sys, &SolveOptions::default()).unwrap();
        assert_eq!(sol.algorithm, Algorithm::ChainContinuous);
        assert_eq!(sol.improvement_steps, 3);
        assert!(sol.values.get(0).approx_eq(fin(2.0), 1e-5));
        let stages: Vec<ExtReal> = sol.trace.iter().map(|t| t.values.get(0)).collect();
        assert_eq!(stages.len(), 4);
        assert_eq!(stages[0], ExtReal::NegInf);
        assert!(stages[1].approx_eq(fin(0.5), 1e-7));
        assert!(stages[2].approx_eq(fin(1.0), 1e-5));
        assert!(stages[3].approx_eq(fin(2.0), 1e-5));
    }

    /// Standard-form `x1 = -∞ ∨ (x2 + 1 ∧ 0)`, `x2 = -∞ ∨ -1 ∨ √x1`.
    fn two_var_sqrt_system() -> EquationSystem {
        EquationSystem::new(
            vec!["x1".into(), "x2".into()],
            vec![
                Expression::new(vec![
                    Leaf::NegInf,
                    Leaf::MinAffine(vec![aff(vec![(1, 1.0)], 1.0), aff(vec![], 0.0)]),
                ]),
                Expression::new(vec![
                    Leaf::NegInf,
                    Leaf::Const(-1.0),
                    Leaf::Sdp {
                        op: sqrt_operator(),
                        args: vec![0],
                    },
                ]),
            ],
        )
    }

    #[test]
    fn solve_least_two_var_trace() {
        let sys = two_var_sqrt_system();
        let sol = solve_least(&sys, &SolveOptions::default()).unwrap();
        assert_eq!(sol.improvement_steps, 3);
        assert!(sol.values.approx_eq(&val(&[fin(0.0), fin(0.0)]), 1e-5));
        let sigmas: Vec<Vec<usize>> = sol.trace.iter().map(|t| t.strategy.0.clone()).collect();
        assert_eq!(
            sigmas,
            vec![vec![0, 0], vec![0, 1], vec![1, 1], vec![1, 2]],
        );
        let expect = [
            val(&[ExtReal::NegInf, ExtReal::NegInf]),
            val(&[ExtReal::NegInf, fin(-1.0)]),
            val(&[fin(0.0), fin(-1.0)]),
            val(&[fin(0.0), fin(0.0)]),
        ];
        for (step, want) in sol.trace.iter().zip(&expect) {
            assert!(
                step.values.approx_eq(want, 1e-5),
                "stage {:?} differs from {:?}",
                step.values,
                want
            );
        }
    }

    #[test]
    fn solve_least_trace_is_monotone() {
        let sys = two_var_sqrt_system();
        let sol = solve_least(&sys, &SolveOptions::default()).unwrap();
        for pair in sol.trace.windows(2) {
            assert!(pair[0].values.le(&pair[1].values));
        }
    }

    #[test]
    fn solve_least_bottom_system() {
        let sys = EquationSystem::new(
            vec!["x".into()],
            vec![Expression::new(vec![Leaf::NegInf])],
        );
        let sol = solve_least(&sys, &SolveOptions::default()).unwrap();
        assert_eq!(sol.improvement_steps, 0);
        assert_eq!(sol.values.get(0), ExtReal::NegInf);
    }

    #[test]
    fn solve_least_requires_standard_form() {
        let sys = attained_pair();
        assert!(matches!(
            solve_least(&sys, &SolveOptions::default()),
            Err(Error::NotStandardForm(_))
        ));
    }

    #[test]
    fn algorithms_agree_on_linear_systems() {
        // Standard form around the attained pair plus an affine equation.
        let op = LpOperator::new(vec![vec![1.0]], vec![1.0]);
        let sys = EquationSystem::new(
            vec!["x1".into(), "x2".into()],
            vec![
                Expression::new(vec![Leaf::NegInf, Leaf::Const(2.0)]),
                Expression::new(vec![
                    Leaf::NegInf,
                    Leaf::Const(-3.0),
                    Leaf::Lp { op, args: vec![0] },
                ]),
            ],
        );
        let mut answers = Vec::new();
        for algorithm in [
            Algorithm::Attained,
            Algorithm::General,
            Algorithm::ChainContinuous,
        ] {
            let opts = SolveOptions {
                algorithm,
                ..SolveOptions::default()
            };
            answers.push(solve_least(&sys, &opts).unwrap().values);
        }
        assert!(answers[0].approx_eq(&val(&[fin(2.0), fin(2.0)]), 1e-6));
        assert!(answers[0].approx_eq(&answers[1], 1e-6));
        assert!(answers[0].approx_eq(&answers[2], 1e-6));
    }
}
