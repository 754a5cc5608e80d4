//! Variable/constraint container shared by the LP and branch-and-bound layers.
//!
//! The model is backend-neutral: it stores names, kinds, bounds, linear
//! constraints and a linear minimization objective, and can be handed to the
//! built-in solver or exported as an MPS file for external solvers.

use std::fmt;

/// Handle to a model variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Handle to a model constraint (row).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// Constraint sense for a linear row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
    pub obj: f64,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    /// (variable, coefficient) pairs; duplicates are summed when the solver
    /// assembles its matrix.
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Outcome classification of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
}

/// Result of an LP or MILP solve.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: Status,
    /// Objective value of the reported point (incumbent for limit statuses).
    pub objective: f64,
    /// One value per model variable, in declaration order. Empty when no
    /// feasible point was found.
    pub values: Vec<f64>,
    /// Branch-and-bound nodes processed (1 for a plain LP solve).
    pub node_count: usize,
    /// Simplex iterations across all nodes.
    pub iterations: usize,
    pub wall_time: std::time::Duration,
}

#[derive(Clone, Debug)]
pub enum SolverError {
    /// Structural problem with the model (bad bounds, unknown variable, ...).
    Model(String),
    /// The simplex could not make progress within numerical tolerances.
    Numerical(String),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::Model(m) => write!(f, "model error: {m}"),
            SolverError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for SolverError {}

/// Linear model: variables, constraints and a minimization objective.
#[derive(Clone, Debug, Default)]
pub struct MilpModel {
    pub name: String,
    pub vars: Vec<Variable>,
    pub cons: Vec<Constraint>,
    /// Constant added to the objective value (not part of any column).
    pub obj_offset: f64,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        MilpModel {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lo: f64,
        hi: f64,
        obj: f64,
    ) -> VarId {
        let (lo, hi) = match kind {
            VarKind::Binary => (lo.max(0.0), hi.min(1.0)),
            VarKind::Continuous => (lo, hi),
        };
        self.vars.push(Variable {
            name: name.into(),
            kind,
            lo,
            hi,
            obj,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lo, hi, 0.0)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0, 0.0)
    }

    pub fn set_obj(&mut self, v: VarId, c: f64) {
        self.vars[v.0].obj = c;
    }

    pub fn add_obj(&mut self, v: VarId, c: f64) {
        self.vars[v.0].obj += c;
    }

    pub fn set_bounds(&mut self, v: VarId, lo: f64, hi: f64) {
        self.vars[v.0].lo = lo;
        self.vars[v.0].hi = hi;
    }

    /// Fix a variable to a single value.
    pub fn fix(&mut self, v: VarId, val: f64) {
        self.set_bounds(v, val, val);
    }

    pub fn add_con(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> ConId {
        debug_assert!(coeffs.iter().all(|(v, _)| v.0 < self.vars.len()));
        self.cons.push(Constraint {
            name: name.into(),
            coeffs,
            sense,
            rhs,
        });
        ConId(self.cons.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_cons(&self) -> usize {
        self.cons.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Objective value of a candidate point (including the constant offset).
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.obj_offset
            + self
                .vars
                .iter()
                .zip(values)
                .map(|(v, x)| v.obj * x)
                .sum::<f64>()
    }

    /// Maximum constraint/bound/integrality violation of a candidate point.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lo - x).max(x - v.hi);
            if v.kind == VarKind::Binary {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for con in &self.cons {
            let lhs: f64 = con.coeffs.iter().map(|(v, c)| c * values[v.0]).sum();
            let r = match con.sense {
                Sense::Le => lhs - con.rhs,
                Sense::Ge => con.rhs - lhs,
                Sense::Eq => (lhs - con.rhs).abs(),
            };
            worst = worst.max(r);
        }
        worst
    }
}
