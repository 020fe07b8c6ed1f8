//! MILP encoding of event networks.

pub mod builder;
pub mod lpformat;
pub mod model;

pub use model::{
    ConstraintId, FeasibilityReport, LinearConstraint, MilpModel, ModelError, Provenance, Relation,
    Sos2Set, TagSummary, Tolerances, VarId, VarKind, Variable,
};
pub use builder::{
    build_model, BuildError, CapacityScope, ConcurrencyRule, ModelBuilder, TimeBounds, VarMap,
};
pub use lpformat::{parse_lp, write_lp, LpFormatError};
