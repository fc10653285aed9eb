//! Dense matrix primitives, parameter storage and reverse-mode gradients.

pub mod gradcheck;
mod params;
mod real;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{ParamId, ParamLayout, ParamSpec, ParamStore};
pub use real::Real;
pub use tape::{Conv1dSpec, Gradients, Tape, Var};
