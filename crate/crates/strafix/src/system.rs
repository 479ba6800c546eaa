//! Equation systems `x = e1 ∨ e2 ∨ ... ∨ ek`, strategies, and the basic
//! operations on them: leaf evaluation, Kleene steps, applying a strategy,
//! and greedy strategy improvement.
//!
//! Every right-hand side is a maximum over leaves.  A leaf is one of:
//! - the constant `-∞`,
//! - a finite constant,
//! - a monotone affine form `w·x + offset` with nonnegative weights,
//! - a minimum of such affine forms,
//! - a parametrized linear program `b ↦ sup{c·y | Ay ≤ b}` whose right-hand
//!   side takes the values of argument variables,
//! - a parametrized semidefinite program `b ↦ sup{C•X | 𝒜(X) = a, ℬ(X) ≤ b,
//!   X ⪰ 0}`, again with variable right-hand sides,
//! - a two-valued case split on whether a watched variable is `+∞` (a test
//!   leaf: monotone but not chain-continuous, used to exercise the
//!   multi-round evaluation path).
//!
//! All leaves are monotone in the variables they mention; all except the
//! case split are also order-concave, which is what the optimization-based
//! evaluation in [`crate::eval`] relies on.
//!
//! A system is in standard form when the first child of every equation is
//! the constant `-∞`.  The initial strategy then picks `-∞` everywhere, so
//! strategy iteration can start from the bottom valuation.

use crate::error::{Error, Result};
use crate::ext::{ExtReal, Valuation};
use crate::linprog::{self, LpOperator};
use crate::sdp::{self, SdpOperator, SdpSettings};

/// Index into a system's variable list.
pub type VarId = usize;

/// A monotone affine form `Σ w_i · x_i + offset` with `w_i ≥ 0`.
///
/// The offset is an extended real so that constant leaves of either
/// infinity can be expressed uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFn {
    /// `(variable, weight)` pairs; weights are nonnegative.
    pub terms: Vec<(VarId, f64)>,
    pub offset: ExtReal,
}

impl AffineFn {
    pub fn constant(offset: ExtReal) -> AffineFn {
        AffineFn {
            terms: Vec::new(),
            offset,
        }
    }

    pub fn eval(&self, rho: &Valuation) -> ExtReal {
        ExtReal::sum(
            self.terms
                .iter()
                .map(|&(v, w)| rho.get(v).scale(w))
                .chain(std::iter::once(self.offset)),
        )
    }
}

/// One `∨`-argument of an equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Leaf {
    /// The constant `-∞`; first child of every equation in standard form.
    NegInf,
    /// A finite constant.
    Const(f64),
    /// A monotone affine form.
    Affine(AffineFn),
    /// A minimum of monotone affine forms (still monotone and concave).
    MinAffine(Vec<AffineFn>),
    /// A parametrized LP; `args` supplies the right-hand side, one variable
    /// per operator row.
    Lp { op: LpOperator, args: Vec<VarId> },
    /// A parametrized SDP; `args` supplies the right-hand side of the
    /// operator's inequality rows.
    Sdp { op: SdpOperator, args: Vec<VarId> },
    /// `finite` while the watched variable is below `+∞`, `infinite` once
    /// it reaches it.  Monotone iff `finite ≤ infinite`.
    CaseAtInf {
        watch: VarId,
        finite: f64,
        infinite: f64,
    },
}

impl Leaf {
    /// Evaluates the leaf at a valuation.  Total on extended-real
    /// arguments; the only error source is the interior-point solver
    /// failing on an SDP leaf.
    pub fn eval(&self, rho: &Valuation, sdp_settings: &SdpSettings) -> Result<ExtReal> {
        match self {
            Leaf::NegInf => Ok(ExtReal::NegInf),
            Leaf::Const(c) => Ok(ExtReal::Finite(*c)),
            Leaf::Affine(f) => Ok(f.eval(rho)),
            Leaf::MinAffine(fs) => Ok(fs
                .iter()
                .map(|f| f.eval(rho))
                .fold(ExtReal::PosInf, ExtReal::min)),
            Leaf::Lp { op, args } => {
                let b: Vec<ExtReal> = args.iter().map(|&v| rho.get(v)).collect();
                Ok(linprog::eval_lp_operator(op, &b))
            }
            Leaf::Sdp { op, args } => {
                let b: Vec<ExtReal> = args.iter().map(|&v| rho.get(v)).collect();
                sdp::eval_sdp_operator(op, &b, sdp_settings)
            }
            Leaf::CaseAtInf {
                watch,
                finite,
                infinite,
            } => Ok(if rho.get(*watch) == ExtReal::PosInf {
                ExtReal::Finite(*infinite)
            } else {
                ExtReal::Finite(*finite)
            }),
        }
    }

    /// Variables the leaf mentions.
    pub fn vars(&self) -> Vec<VarId> {
        match self {
            Leaf::NegInf | Leaf::Const(_) => Vec::new(),
            Leaf::Affine(f) => f.terms.iter().map(|&(v, _)| v).collect(),
            Leaf::MinAffine(fs) => fs
                .iter()
                .flat_map(|f| f.terms.iter().map(|&(v, _)| v))
                .collect(),
            Leaf::Lp { args, .. } | Leaf::Sdp { args, .. } => args.clone(),
            Leaf::CaseAtInf { watch, .. } => vec![*watch],
        }
    }
}

/// A right-hand side: the maximum of one or more leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    pub children: Vec<Leaf>,
}

impl Expression {
    pub fn new(children: Vec<Leaf>) -> Expression {
        Expression { children }
    }

    pub fn eval(&self, rho: &Valuation, sdp_settings: &SdpSettings) -> Result<ExtReal> {
        let mut best = ExtReal::NegInf;
        for child in &self.children {
            best = best.max(child.eval(rho, sdp_settings)?);
        }
        Ok(best)
    }
}

/// A strategy: for every equation, the index of the chosen `∨`-argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy(pub Vec<usize>);

impl Strategy {
    /// The initial strategy of a standard-form system: child 0, the
    /// constant `-∞`, everywhere.
    pub fn initial(n: usize) -> Strategy {
        Strategy(vec![0; n])
    }

    pub fn choice(&self, var: VarId) -> usize {
        self.0[var]
    }
}

/// A system of equations `x_i = max(children_i)` over an ordered variable
/// list.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationSystem {
    pub names: Vec<String>,
    pub equations: Vec<Expression>,
}

impl EquationSystem {
    pub fn new(names: Vec<String>, equations: Vec<Expression>) -> EquationSystem {
        EquationSystem { names, equations }
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.names.iter().position(|n| n == name)
    }

    /// Number of strategies: the product of the children counts.
    /// Saturates at `u64::MAX` for absurdly branchy systems.
    pub fn strategy_count(&self) -> u64 {
        self.equations
            .iter()
            .map(|e| e.children.len() as u64)
            .fold(1u64, |acc, k| acc.saturating_mul(k))
    }

    /// Structural validation: name/equation counts match, every equation
    /// has at least one child, variable references are in range, affine
    /// weights are nonnegative, operator shapes are consistent, and case
    /// leaves are monotone.
    pub fn validate(&self) -> Result<()> {
        if self.names.len() != self.equations.len() {
            return Err(Error::InvalidSystem(format!(
                "{} names for {} equations",
                self.names.len(),
                self.equations.len()
            )));
        }
        let n = self.len();
        let check_var = |v: VarId, what: &str| -> Result<()> {
            if v >= n {
                Err(Error::InvalidSystem(format!(
                    "{what} references variable {v}, but the system has {n} variables"
                )))
            } else {
                Ok(())
            }
        };
        let check_affine = |f: &AffineFn, whom: &str| -> Result<()> {
            for &(v, w) in &f.terms {
                check_var(v, whom)?;
                if !(w >= 0.0) {
                    return Err(Error::InvalidSystem(format!(
                        "{whom} has negative weight {w} on {}",
                        self.names[v]
                    )));
                }
            }
            Ok(())
        };
        for (i, eq) in self.equations.iter().enumerate() {
            let whom = format!("equation for {}", self.names[i]);
            if eq.children.is_empty() {
                return Err(Error::InvalidSystem(format!("{whom} has no children")));
            }
            for leaf in &eq.children {
                match leaf {
                    Leaf::NegInf => {}
                    Leaf::Const(c) => {
                        if c.is_nan() {
                            return Err(Error::InvalidSystem(format!("{whom}: NaN constant")));
                        }
                    }
                    Leaf::Affine(f) => check_affine(f, &whom)?,
                    Leaf::MinAffine(fs) => {
                        if fs.is_empty() {
                            return Err(Error::InvalidSystem(format!(
                                "{whom}: empty minimum of affine forms"
                            )));
                        }
                        for f in fs {
                            check_affine(f, &whom)?;
                        }
                    }
                    Leaf::Lp { op, args } => {
                        op.validate()
                            .map_err(|e| Error::InvalidSystem(format!("{whom}: {e}")))?;
                        if args.len() != op.rows() {
                            return Err(Error::InvalidSystem(format!(
                                "{whom}: LP leaf has {} arguments for {} parametrized rows",
                                args.len(),
                                op.rows()
                            )));
                        }
                        for &v in args {
                            check_var(v, &whom)?;
                        }
                    }
                    Leaf::Sdp { op, args } => {
                        op.validate()
                            .map_err(|e| Error::InvalidSystem(format!("{whom}: {e}")))?;
                        if args.len() != op.ineq_rows() {
                            return Err(Error::InvalidSystem(format!(
                                "{whom}: SDP leaf has {} arguments for {} parametrized rows",
                                args.len(),
                                op.ineq_rows()
                            )));
                        }
                        for &v in args {
                            check_var(v, &whom)?;
                        }
                    }
                    Leaf::CaseAtInf {
                        watch,
                        finite,
                        infinite,
                    } => {
                        check_var(*watch, &whom)?;
                        if !(finite <= infinite) {
                            return Err(Error::InvalidSystem(format!(
                                "{whom}: case leaf is not monotone ({finite} > {infinite})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks that the first child of every equation is the constant `-∞`.
    pub fn is_standard_form(&self) -> bool {
        self.equations
            .iter()
            .all(|e| matches!(e.children.first(), Some(Leaf::NegInf)))
    }

    pub fn require_standard_form(&self) -> Result<()> {
        for (i, eq) in self.equations.iter().enumerate() {
            if !matches!(eq.children.first(), Some(Leaf::NegInf)) {
                return Err(Error::NotStandardForm(format!(
                    "first child of the equation for {} is not the constant -∞",
                    self.names[i]
                )));
            }
        }
        Ok(())
    }

    /// One Kleene step: evaluates every right-hand side at `rho`.
    pub fn kleene_step(&self, rho: &Valuation, sdp_settings: &SdpSettings) -> Result<Valuation> {
        let mut out = Vec::with_capacity(self.len());
        for eq in &self.equations {
            out.push(eq.eval(rho, sdp_settings)?);
        }
        Ok(Valuation::new(out))
    }

    /// The conjunctive system `E(σ)`: every equation keeps only the chosen
    /// child.  Applying a strategy to an already conjunctive system is the
    /// identity (the only valid choice is child 0).
    pub fn apply_strategy(&self, sigma: &Strategy) -> EquationSystem {
        let equations = self
            .equations
            .iter()
            .zip(&sigma.0)
            .map(|(eq, &k)| Expression::new(vec![eq.children[k].clone()]))
            .collect();
        EquationSystem {
            names: self.names.clone(),
            equations,
        }
    }

    /// Greedy strategy improvement at `rho`.
    ///
    /// For every equation, the strategy switches to the child with the
    /// maximal value at `rho`, but only if that value beats the currently
    /// chosen child's value by more than `eps`.  Children within `eps` of
    /// the running best count as ties, and ties break to the lowest child
    /// index.  If `rho` solves the system no child can clear the margin,
    /// so the strategy is returned unchanged.
    pub fn improve_strategy(
        &self,
        sigma: &Strategy,
        rho: &Valuation,
        eps: f64,
        sdp_settings: &SdpSettings,
    ) -> Result<Strategy> {
        let mut next = sigma.0.clone();
        for (i, eq) in self.equations.iter().enumerate() {
            let mut best_idx = sigma.0[i];
            let mut best = eq.children[best_idx].eval(rho, sdp_settings)?;
            for (k, child) in eq.children.iter().enumerate() {
                let v = child.eval(rho, sdp_settings)?;
                if v.exceeds_by(best, eps) {
                    best_idx = k;
                    best = v;
                }
            }
            next[i] = best_idx;
        }
        Ok(Strategy(next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::sqrt_operator;

    fn aff(terms: Vec<(VarId, f64)>, offset: f64) -> AffineFn {
        AffineFn {
            terms,
            offset: ExtReal::Finite(offset),
        }
    }

    /// `x1 = x2 + 1 ∧ 0`, `x2 = -1 ∨ √x1`, without the standard-form `-∞`
    /// children.
    fn two_var_system() -> EquationSystem {
        EquationSystem::new(
            vec!["x1".into(), "x2".into()],
            vec![
                Expression::new(vec![Leaf::MinAffine(vec![
                    aff(vec![(1, 1.0)], 1.0),
                    aff(vec![], 0.0),
                ])]),
                Expression::new(vec![
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
    fn leaf_eval_basics() {
        let s = SdpSettings::default();
        let rho = Valuation::new(vec![ExtReal::Finite(2.0), ExtReal::NegInf]);
        assert_eq!(
            Leaf::NegInf.eval(&rho, &s).unwrap(),
            ExtReal::NegInf
        );
        assert_eq!(
            Leaf::Const(0.5).eval(&rho, &s).unwrap(),
            ExtReal::Finite(0.5)
        );
        // 3·x1 + 1 at x1 = 2.
        assert_eq!(
            Leaf::Affine(aff(vec![(0, 3.0)], 1.0)).eval(&rho, &s).unwrap(),
            ExtReal::Finite(7.0)
        );
        // A positive weight on a -∞ variable drags the whole form down.
        assert_eq!(
            Leaf::Affine(aff(vec![(1, 1.0)], 1.0)).eval(&rho, &s).unwrap(),
            ExtReal::NegInf
        );
        // min(x1 + 1, 0) at x1 = 2.
        assert_eq!(
            Leaf::MinAffine(vec![aff(vec![(0, 1.0)], 1.0), aff(vec![], 0.0)])
                .eval(&rho, &s)
                .unwrap(),
            ExtReal::Finite(0.0)
        );
    }

    #[test]
    fn case_leaf_switches_at_infinity() {
        let s = SdpSettings::default();
        let leaf = Leaf::CaseAtInf {
            watch: 0,
            finite: 0.0,
            infinite: 1.0,
        };
        let lo = Valuation::new(vec![ExtReal::Finite(1e12)]);
        let hi = Valuation::new(vec![ExtReal::PosInf]);
        let bot = Valuation::new(vec![ExtReal::NegInf]);
        assert_eq!(leaf.eval(&lo, &s).unwrap(), ExtReal::Finite(0.0));
        assert_eq!(leaf.eval(&bot, &s).unwrap(), ExtReal::Finite(0.0));
        assert_eq!(leaf.eval(&hi, &s).unwrap(), ExtReal::Finite(1.0));
    }

    #[test]
    fn kleene_step_on_two_var_system() {
        let sys = two_var_system();
        let s = SdpSettings::default();
        // At (0, 0) the system is already a fixpoint: min(1, 0) = 0, √0 = 0.
        let rho = Valuation::new(vec![ExtReal::Finite(0.0), ExtReal::Finite(0.0)]);
        let next = sys.kleene_step(&rho, &s).unwrap();
        assert!(next.approx_eq(&rho, 1e-6));
        // From the bottom valuation one step yields (-∞, -1).
        let next = sys.kleene_step(&Valuation::bottom(2), &s).unwrap();
        assert_eq!(next.get(0), ExtReal::NegInf);
        assert_eq!(next.get(1), ExtReal::Finite(-1.0));
    }

    #[test]
    fn apply_strategy_selects_children_and_is_idempotent() {
        let sys = two_var_system();
        let sigma = Strategy(vec![0, 1]);
        let conj = sys.apply_strategy(&sigma);
        assert_eq!(conj.equations[1].children.len(), 1);
        assert!(matches!(
            conj.equations[1].children[0],
            Leaf::Sdp { .. }
        ));
        let again = conj.apply_strategy(&Strategy::initial(2));
        assert_eq!(conj, again);

        // Evaluating E(σ) equals evaluating the chosen children directly.
        let s = SdpSettings::default();
        let rho = Valuation::new(vec![ExtReal::Finite(1.0), ExtReal::Finite(0.25)]);
        let via_system = conj.kleene_step(&rho, &s).unwrap();
        for i in 0..2 {
            let direct = sys.equations[i].children[sigma.0[i]]
                .eval(&rho, &s)
                .unwrap();
            assert!(via_system.get(i).approx_eq(direct, 1e-9));
        }
    }

    #[test]
    fn improve_switches_to_sqrt_child() {
        // At ρ = (0, -1) the √x1 child of x2 evaluates to 0 > -1.
        let sys = two_var_system();
        let s = SdpSettings::default();
        let sigma = Strategy(vec![0, 0]);
        let rho = Valuation::new(vec![ExtReal::Finite(0.0), ExtReal::Finite(-1.0)]);
        let improved = sys.improve_strategy(&sigma, &rho, 1e-9, &s).unwrap();
        assert_eq!(improved.0, vec![0, 1]);
    }

    #[test]
    fn improve_keeps_strategy_at_solution() {
        let sys = two_var_system();
        let s = SdpSettings::default();
        let sigma = Strategy(vec![0, 1]);
        let rho = Valuation::new(vec![ExtReal::Finite(0.0), ExtReal::Finite(0.0)]);
        let improved = sys.improve_strategy(&sigma, &rho, 1e-9, &s).unwrap();
        assert_eq!(improved, sigma);
    }

    #[test]
    fn improve_breaks_ties_to_lowest_index() {
        let sys = EquationSystem::new(
            vec!["x".into()],
            vec![Expression::new(vec![
                Leaf::NegInf,
                Leaf::Const(1.0),
                Leaf::Const(1.0),
            ])],
        );
        let s = SdpSettings::default();
        let improved = sys
            .improve_strategy(&Strategy::initial(1), &Valuation::bottom(1), 1e-9, &s)
            .unwrap();
        assert_eq!(improved.0, vec![1]);
    }

    #[test]
    fn strategy_count_multiplies_children() {
        let sys = two_var_system();
        assert_eq!(sys.strategy_count(), 2);
    }

    #[test]
    fn validation_rejects_negative_weights() {
        let sys = EquationSystem::new(
            vec!["x".into()],
            vec![Expression::new(vec![Leaf::Affine(AffineFn {
                terms: vec![(0, -1.0)],
                offset: ExtReal::Finite(0.0),
            })])],
        );
        assert!(sys.validate().is_err());
    }

    #[test]
    fn validation_rejects_non_monotone_case_leaf() {
        let sys = EquationSystem::new(
            vec!["x".into()],
            vec![Expression::new(vec![Leaf::CaseAtInf {
                watch: 0,
                finite: 1.0,
                infinite: 0.0,
            }])],
        );
        assert!(sys.validate().is_err());
    }

    #[test]
    fn standard_form_detection() {
        let mut sys = two_var_system();
        assert!(!sys.is_standard_form());
        for eq in &mut sys.equations {
            eq.children.insert(0, Leaf::NegInf);
        }
        assert!(sys.is_standard_form());
        assert!(sys.require_standard_form().is_ok());
    }
}
