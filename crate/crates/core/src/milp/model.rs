//! Solver-neutral MILP instance: variables, linear rows, SOS2 sets and a
//! minimization objective.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VarId = usize;
pub type ConstraintId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

impl VarKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

/// What a variable stands for in the network encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Provenance {
    /// Commodity outflow `x+` at the start of an arc.
    FlowOut { arc: usize, commodity: usize },
    /// Commodity inflow `x-` at the end of an arc.
    FlowIn { arc: usize, commodity: usize },
    /// Commodity flow entering a holdover arc.
    HoldOut { holdover: usize, commodity: usize },
    /// Commodity flow leaving a holdover arc.
    HoldIn { holdover: usize, commodity: usize },
    /// Total initial mass `y+` of a transportation arc.
    MassOut { arc: usize },
    /// Total final mass `y-` of a transportation arc.
    MassIn { arc: usize },
    /// Duration of a cargo event layer.
    LayerDuration { layer: usize },
    /// Convex-combination weight of a piecewise-linear mass model.
    MassWeight { arc: usize, index: usize },
    /// Convex-combination weight of a piecewise-linear flight-time model.
    TimeWeight { arc: usize, index: usize },
    /// Flight time of an arc with a piecewise-linear time model.
    ArcTime { arc: usize },
    /// Anything not tied to the network (hand-built or parsed models).
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    /// Constraint family, e.g. `balance` or `fuel_capacity`.
    pub tag: String,
}

impl LinearConstraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }

    /// Lower and upper bounds on the row activity.
    pub fn range(&self) -> (f64, f64) {
        match self.relation {
            Relation::Le => (f64::NEG_INFINITY, self.rhs),
            Relation::Ge => (self.rhs, f64::INFINITY),
            Relation::Eq => (self.rhs, self.rhs),
        }
    }
}

/// Ordered variables of which at most two consecutive ones may be nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sos2Set {
    pub name: String,
    pub members: Vec<VarId>,
}

impl Sos2Set {
    /// True when at most two members are nonzero and they are adjacent.
    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        let nz: Vec<usize> = self
            .members
            .iter()
            .enumerate()
            .filter(|(_, &v)| x[v].abs() > tol)
            .map(|(k, _)| k)
            .collect();
        match nz.len() {
            0 | 1 => true,
            2 => nz[1] == nz[0] + 1,
            _ => false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("constraint `{constraint}` references unknown variable {var}")]
    UnknownVariable { constraint: String, var: VarId },
    #[error("objective references unknown variable {0}")]
    UnknownObjectiveVariable(VarId),
    #[error("variable `{name}` has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("binary variable `{0}` has bounds outside [0, 1]")]
    BinaryBounds(String),
    #[error("SOS2 set `{0}` is malformed (needs distinct, known members)")]
    BadSos2(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<LinearConstraint>,
    pub sos2: Vec<Sos2Set>,
    /// Minimized linear objective.
    pub objective: Vec<(VarId, f64)>,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        MilpModel {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
        provenance: Provenance,
    ) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
            provenance,
        });
        self.variables.len() - 1
    }

    /// Adds a row; repeated variables are summed and zero terms dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        tag: &str,
        terms: &[(VarId, f64)],
        relation: Relation,
        rhs: f64,
    ) -> ConstraintId {
        self.constraints.push(LinearConstraint {
            name: name.into(),
            terms: combine_terms(terms),
            relation,
            rhs,
            tag: tag.to_string(),
        });
        self.constraints.len() - 1
    }

    pub fn add_sos2(&mut self, name: impl Into<String>, members: Vec<VarId>) {
        self.sos2.push(Sos2Set {
            name: name.into(),
            members,
        });
    }

    pub fn set_objective(&mut self, terms: &[(VarId, f64)]) {
        self.objective = combine_terms(terms);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * x[v]).sum()
    }

    /// Referential integrity and bound sanity.
    pub fn audit(&self) -> Result<(), ModelError> {
        let n = self.variables.len();
        let mut names = std::collections::HashSet::with_capacity(n);
        for v in &self.variables {
            if !names.insert(v.name.as_str()) {
                return Err(ModelError::DuplicateName(v.name.clone()));
            }
            if v.lower > v.upper {
                return Err(ModelError::InvertedBounds {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(ModelError::BinaryBounds(v.name.clone()));
            }
        }
        for c in &self.constraints {
            if let Some(&(var, _)) = c.terms.iter().find(|t| t.0 >= n) {
                return Err(ModelError::UnknownVariable {
                    constraint: c.name.clone(),
                    var,
                });
            }
        }
        if let Some(&(var, _)) = self.objective.iter().find(|t| t.0 >= n) {
            return Err(ModelError::UnknownObjectiveVariable(var));
        }
        for s in &self.sos2 {
            let mut seen = std::collections::HashSet::new();
            if s.members.len() < 2 || s.members.iter().any(|&m| m >= n || !seen.insert(m)) {
                return Err(ModelError::BadSos2(s.name.clone()));
            }
        }
        Ok(())
    }

    /// Checks an assignment against every bound, row, integrality
    /// requirement and SOS2 set.
    pub fn check(&self, x: &[f64], tol: &Tolerances) -> FeasibilityReport {
        assert_eq!(x.len(), self.variables.len(), "assignment length");
        let mut report = FeasibilityReport {
            objective: self.objective_value(x),
            ..Default::default()
        };
        for (v, &val) in self.variables.iter().zip(x) {
            let viol = (v.lower - val).max(val - v.upper).max(0.0);
            report.max_bound_violation = report.max_bound_violation.max(viol);
            if v.kind.is_discrete() {
                let frac = (val - val.round()).abs();
                report.max_integrality_violation = report.max_integrality_violation.max(frac);
            }
        }
        for c in &self.constraints {
            let viol = c.violation(x);
            let scale = c
                .terms
                .iter()
                .map(|&(v, a)| (a * x[v]).abs())
                .fold(c.rhs.abs(), f64::max)
                .max(1.0);
            let entry = report.by_tag.entry(c.tag.clone()).or_default();
            entry.rows += 1;
            entry.max_violation = entry.max_violation.max(viol);
            entry.max_relative_violation = entry.max_relative_violation.max(viol / scale);
            if viol > tol.feasibility && viol / scale > tol.relative_feasibility {
                report.violated.push((c.name.clone(), viol));
            }
        }
        report.sos2_violations = self
            .sos2
            .iter()
            .filter(|s| !s.is_satisfied(x, tol.feasibility))
            .map(|s| s.name.clone())
            .collect();
        report.feasible = report.violated.is_empty()
            && report.sos2_violations.is_empty()
            && report.max_bound_violation <= tol.feasibility
            && report.max_integrality_violation <= tol.integrality;
        report
    }
}

fn combine_terms(terms: &[(VarId, f64)]) -> Vec<(VarId, f64)> {
    let mut sorted = terms.to_vec();
    sorted.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(sorted.len());
    for (v, a) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += a,
            _ => out.push((v, a)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

/// Tolerances used when checking assignments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute row/bound tolerance.
    pub feasibility: f64,
    /// A row is only reported when its violation also exceeds this fraction
    /// of the largest term magnitude in it.
    pub relative_feasibility: f64,
    pub integrality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-6,
            relative_feasibility: 1e-6,
            integrality: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagSummary {
    pub rows: usize,
    pub max_violation: f64,
    pub max_relative_violation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub objective: f64,
    pub max_bound_violation: f64,
    pub max_integrality_violation: f64,
    pub by_tag: BTreeMap<String, TagSummary>,
    /// Rows violated beyond tolerance, with their absolute violation.
    pub violated: Vec<(String, f64)>,
    pub sos2_violations: Vec<String>,
}
