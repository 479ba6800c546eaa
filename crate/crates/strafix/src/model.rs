//! Serde models for the on-disk JSON formats: equation systems
//! ([`EquationFile`]) and programs with templates ([`ProgramFile`]),
//! plus the conversions between models and domain types.
//!
//! JSON has no infinities, so `±∞` values are the strings `"inf"` and
//! `"neginf"` wherever extended reals appear.  Matrices are row-major
//! arrays of arrays; symmetric matrices are checked against a `1e-12`
//! asymmetry tolerance at load and then symmetrized exactly.  Models refer
//! to variables and control points by name; conversion to domain types
//! resolves names to indices and reports unknown references with their
//! location.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::linprog::LpOperator;
use crate::relax::{Edge, InitialStates, Program, QuadraticTemplate, Statement};
use crate::sdp::{SdpOperator, SymMatrix};
use crate::system::{AffineFn, EquationSystem, Expression, Leaf};

/// Asymmetry tolerance for matrices that must be symmetric.
const SYM_TOL: f64 = 1e-12;

/// An extended real in JSON: a number, `"inf"`, or `"neginf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtRealModel(pub ExtReal);

impl Serialize for ExtRealModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            ExtReal::Finite(v) => s.serialize_f64(v + 0.0),
            ExtReal::PosInf => s.serialize_str("inf"),
            ExtReal::NegInf => s.serialize_str("neginf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtRealModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_finite() => Ok(ExtRealModel(ExtReal::Finite(v))),
            Raw::Num(v) => Err(D::Error::custom(format!(
                "non-finite number {v}; write \"inf\" or \"neginf\""
            ))),
            Raw::Tag(t) => match t.as_str() {
                "inf" => Ok(ExtRealModel(ExtReal::PosInf)),
                "neginf" => Ok(ExtRealModel(ExtReal::NegInf)),
                other => Err(D::Error::custom(format!(
                    "expected a number, \"inf\" or \"neginf\", got \"{other}\""
                ))),
            },
        }
    }
}

/// One affine form: nonnegative weights per variable name plus an
/// extended-real offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineModel {
    pub weights: BTreeMap<String, f64>,
    pub offset: ExtRealModel,
}

/// A parametrized linear program `sup{cᵀy | Ay ≤ args, A_fix y ≤ b_fix}`.
/// Row indices in `strict_rows` / `strict_fixed_rows` mark strict
/// comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpModel {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strict_rows: Vec<usize>,
    #[serde(rename = "A_fix", default, skip_serializing_if = "Vec::is_empty")]
    pub a_fix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b_fix: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strict_fixed_rows: Vec<usize>,
}

/// A parametrized semidefinite program
/// `sup{C•X | A_eq[t]•X = a[t], B[i]•X ≤ args[i], B_fix[j]•X ≤ f[j], X ⪰ 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpModel {
    pub dim: usize,
    #[serde(rename = "A_eq")]
    pub a_eq: Vec<Vec<Vec<f64>>>,
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub args: Vec<String>,
    #[serde(rename = "B_fix", default, skip_serializing_if = "Vec::is_empty")]
    pub b_fix: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f: Vec<f64>,
}

/// A case split on whether the watched variable is `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseModel {
    pub watch: String,
    pub finite: f64,
    pub infinite: f64,
}

/// One child of an equation's maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChildModel {
    #[serde(rename = "neginf")]
    NegInf,
    #[serde(rename = "const")]
    Const(f64),
    #[serde(rename = "affine")]
    Affine(AffineModel),
    #[serde(rename = "min_affine")]
    MinAffine(Vec<AffineModel>),
    #[serde(rename = "lp")]
    Lp(LpModel),
    #[serde(rename = "sdp")]
    Sdp(SdpModel),
    #[serde(rename = "case_at_inf")]
    CaseAtInf(CaseModel),
}

/// The equation-system document: declared variable names and one list of
/// `∨`-children per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationFile {
    pub variables: Vec<String>,
    pub equations: BTreeMap<String, Vec<ChildModel>>,
}

/// Name-to-index resolver with located error messages.
struct VarTable<'a> {
    index: BTreeMap<&'a str, usize>,
}

impl<'a> VarTable<'a> {
    fn new(names: &'a [String]) -> Result<VarTable<'a>> {
        let mut index = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(Error::Model(format!("variable \"{name}\" declared twice")));
            }
        }
        Ok(VarTable { index })
    }

    fn resolve(&self, name: &str, whom: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| {
            Error::Model(format!("{whom} references undeclared variable \"{name}\""))
        })
    }
}

fn strict_flags(indices: &[usize], rows: usize, whom: &str) -> Result<Vec<bool>> {
    let mut flags = vec![false; rows];
    for &i in indices {
        if i >= rows {
            return Err(Error::Model(format!(
                "{whom} marks row {i} strict, but there are only {rows} rows"
            )));
        }
        flags[i] = true;
    }
    Ok(flags)
}

fn strict_indices(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i))
        .collect()
}

fn sym_matrix(rows: &[Vec<f64>], whom: &str) -> Result<SymMatrix> {
    SymMatrix::from_rows(rows, SYM_TOL).map_err(|e| Error::Model(format!("{whom}: {e}")))
}

impl AffineModel {
    fn to_leaf(&self, vars: &VarTable, whom: &str) -> Result<AffineFn> {
        let mut terms = Vec::with_capacity(self.weights.len());
        for (name, &w) in &self.weights {
            terms.push((vars.resolve(name, whom)?, w));
        }
        Ok(AffineFn {
            terms,
            offset: self.offset.0,
        })
    }

    fn from_affine(f: &AffineFn, names: &[String]) -> AffineModel {
        AffineModel {
            weights: f
                .terms
                .iter()
                .map(|&(v, w)| (names[v].clone(), w))
                .collect(),
            offset: ExtRealModel(f.offset),
        }
    }
}

impl ChildModel {
    fn to_leaf(&self, vars: &VarTable, whom: &str) -> Result<Leaf> {
        match self {
            ChildModel::NegInf => Ok(Leaf::NegInf),
            ChildModel::Const(c) => Ok(Leaf::Const(*c)),
            ChildModel::Affine(f) => Ok(Leaf::Affine(f.to_leaf(vars, whom)?)),
            ChildModel::MinAffine(fs) => Ok(Leaf::MinAffine(
                fs.iter()
                    .map(|f| f.to_leaf(vars, whom))
                    .collect::<Result<_>>()?,
            )),
            ChildModel::Lp(m) => {
                let op = LpOperator {
                    a: m.a.clone(),
                    c: m.c.clone(),
                    strict: strict_flags(&m.strict_rows, m.a.len(), whom)?,
                    a_fix: m.a_fix.clone(),
                    b_fix: m.b_fix.clone(),
                    strict_fix: strict_flags(&m.strict_fixed_rows, m.a_fix.len(), whom)?,
                };
                let args = m
                    .args
                    .iter()
                    .map(|name| vars.resolve(name, whom))
                    .collect::<Result<_>>()?;
                Ok(Leaf::Lp { op, args })
            }
            ChildModel::Sdp(m) => {
                if m.b_fix.len() != m.f.len() {
                    return Err(Error::Model(format!(
                        "{whom}: {} fixed maps for {} fixed bounds",
                        m.b_fix.len(),
                        m.f.len()
                    )));
                }
                let op = SdpOperator {
                    dim: m.dim,
                    a_eq: m
                        .a_eq
                        .iter()
                        .map(|rows| sym_matrix(rows, whom))
                        .collect::<Result<_>>()?,
                    a_rhs: m.a.clone(),
                    b_ineq: m
                        .b
                        .iter()
                        .map(|rows| sym_matrix(rows, whom))
                        .collect::<Result<_>>()?,
                    c_obj: sym_matrix(&m.c, whom)?,
                    fixed: m
                        .b_fix
                        .iter()
                        .zip(&m.f)
                        .map(|(rows, &bound)| Ok((sym_matrix(rows, whom)?, bound)))
                        .collect::<Result<_>>()?,
                };
                let args = m
                    .args
                    .iter()
                    .map(|name| vars.resolve(name, whom))
                    .collect::<Result<_>>()?;
                Ok(Leaf::Sdp { op, args })
            }
            ChildModel::CaseAtInf(m) => Ok(Leaf::CaseAtInf {
                watch: vars.resolve(&m.watch, whom)?,
                finite: m.finite,
                infinite: m.infinite,
            }),
        }
    }

    fn from_leaf(leaf: &Leaf, names: &[String]) -> ChildModel {
        match leaf {
            Leaf::NegInf => ChildModel::NegInf,
            Leaf::Const(c) => ChildModel::Const(*c),
            Leaf::Affine(f) => ChildModel::Affine(AffineModel::from_affine(f, names)),
            Leaf::MinAffine(fs) => ChildModel::MinAffine(
                fs.iter()
                    .map(|f| AffineModel::from_affine(f, names))
                    .collect(),
            ),
            Leaf::Lp { op, args } => ChildModel::Lp(LpModel {
                a: op.a.clone(),
                c: op.c.clone(),
                args: args.iter().map(|&v| names[v].clone()).collect(),
                strict_rows: strict_indices(&op.strict),
                a_fix: op.a_fix.clone(),
                b_fix: op.b_fix.clone(),
                strict_fixed_rows: strict_indices(&op.strict_fix),
            }),
            Leaf::Sdp { op, args } => ChildModel::Sdp(SdpModel {
                dim: op.dim,
                a_eq: op.a_eq.iter().map(SymMatrix::rows).collect(),
                a: op.a_rhs.clone(),
                b: op.b_ineq.iter().map(SymMatrix::rows).collect(),
                c: op.c_obj.rows(),
                args: args.iter().map(|&v| names[v].clone()).collect(),
                b_fix: op.fixed.iter().map(|(m, _)| m.rows()).collect(),
                f: op.fixed.iter().map(|(_, bound)| *bound).collect(),
            }),
            Leaf::CaseAtInf {
                watch,
                finite,
                infinite,
            } => ChildModel::CaseAtInf(CaseModel {
                watch: names[*watch].clone(),
                finite: *finite,
                infinite: *infinite,
            }),
        }
    }
}

impl EquationFile {
    /// Resolves the document into an equation system, validating structure
    /// along the way.
    pub fn to_system(&self) -> Result<EquationSystem> {
        let vars = VarTable::new(&self.variables)?;
        for name in self.equations.keys() {
            if !self.variables.iter().any(|v| v == name) {
                return Err(Error::Model(format!(
                    "equation for \"{name}\", which is not a declared variable"
                )));
            }
        }
        let mut equations = Vec::with_capacity(self.variables.len());
        for name in &self.variables {
            let children = self.equations.get(name).ok_or_else(|| {
                Error::Model(format!("variable \"{name}\" has no equation"))
            })?;
            let resolved = children
                .iter()
                .enumerate()
                .map(|(k, c)| c.to_leaf(&vars, &format!("equation for \"{name}\", child {k}")))
                .collect::<Result<_>>()?;
            equations.push(Expression::new(resolved));
        }
        let sys = EquationSystem::new(self.variables.clone(), equations);
        sys.validate()?;
        Ok(sys)
    }

    /// Renders an equation system back into the document model.
    pub fn from_system(sys: &EquationSystem) -> EquationFile {
        EquationFile {
            variables: sys.names.clone(),
            equations: sys
                .names
                .iter()
                .zip(&sys.equations)
                .map(|(name, eq)| {
                    (
                        name.clone(),
                        eq.children
                            .iter()
                            .map(|l| ChildModel::from_leaf(l, &sys.names))
                            .collect(),
                    )
                })
                .collect(),
        }
    }
}

/// One edge statement in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StatementModel {
    /// `x := Ax + b`.
    #[serde(rename = "assign")]
    Assign {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    /// Pass states with `xᵀAx + 2bᵀx ≤ c`.
    #[serde(rename = "guard")]
    Guard {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeModel {
    pub from: String,
    pub to: String,
    pub stmt: StatementModel,
}

/// One quadratic template `xᵀAx + 2bᵀx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateModel {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Initial states: one bound per template, or a box the analysis bounds
/// itself (convex templates only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitBoundsModel {
    Bounds(Vec<ExtRealModel>),
    Box {
        #[serde(rename = "box")]
        sides: Vec<[f64; 2]>,
    },
}

/// The program document: state dimension, named control points, edges,
/// templates, and initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramFile {
    pub dim: usize,
    pub nodes: Vec<String>,
    pub start: String,
    pub edges: Vec<EdgeModel>,
    pub templates: Vec<TemplateModel>,
    pub init_bounds: InitBoundsModel,
}

impl ProgramFile {
    /// Resolves the document into a program and its templates.
    pub fn to_parts(&self) -> Result<(Program, Vec<QuadraticTemplate>)> {
        let points = VarTable::new(&self.nodes)
            .map_err(|e| Error::Model(format!("{e} (in \"nodes\")")))?;
        let start = points.resolve(&self.start, "\"start\"")?;
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let whom = format!("edge {i}");
                let stmt = match &e.stmt {
                    StatementModel::Assign { a, b } => Statement::Assign {
                        a: a.clone(),
                        b: b.clone(),
                    },
                    StatementModel::Guard { a, b, c } => Statement::Guard {
                        a: sym_matrix(a, &format!("{whom} guard matrix"))?,
                        b: b.clone(),
                        c: *c,
                    },
                };
                Ok(Edge {
                    from: points.resolve(&e.from, &whom)?,
                    stmt,
                    to: points.resolve(&e.to, &whom)?,
                })
            })
            .collect::<Result<_>>()?;
        let templates = self
            .templates
            .iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(QuadraticTemplate {
                    a: sym_matrix(&t.a, &format!("template {i} matrix"))?,
                    b: t.b.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let initial = match &self.init_bounds {
            InitBoundsModel::Bounds(v) => {
                InitialStates::Bounds(v.iter().map(|b| b.0).collect())
            }
            InitBoundsModel::Box { sides } => InitialStates::Box {
                lo: sides.iter().map(|s| s[0]).collect(),
                hi: sides.iter().map(|s| s[1]).collect(),
            },
        };
        let program = Program {
            point_names: self.nodes.clone(),
            start,
            edges,
            initial,
        };
        program.validate(self.dim, templates.len())?;
        for (i, t) in templates.iter().enumerate() {
            if t.a.dim() != self.dim || t.b.len() != self.dim {
                return Err(Error::Model(format!(
                    "template {i} is {}-dimensional, the program declares dim = {}",
                    t.b.len(),
                    self.dim
                )));
            }
        }
        Ok((program, templates))
    }
}

/// Parses an [`EquationFile`] from JSON text.
pub fn parse_equation_file(text: &str) -> Result<EquationFile> {
    serde_json::from_str(text).map_err(|e| Error::Model(format!("equation file: {e}")))
}

/// Parses a [`ProgramFile`] from JSON text.
pub fn parse_program_file(text: &str) -> Result<ProgramFile> {
    serde_json::from_str(text).map_err(|e| Error::Model(format!("program file: {e}")))
}
