//! Structural-equation data generation and the special-purpose generators.

mod generators;
mod scm;

pub use generators::{
    block_randomize, clamped_integer_normal, inject_outlier, mvn_exact, repeat_pattern, CorrTarget, RepeatMode,
};
pub use scm::{evaluate_scm, EquationSpec, ErrorTerm, GroupError, ScmSpec, SdExpr, SourceKind, SourceSpec};
pub use crate::mc::repeated_samples;
