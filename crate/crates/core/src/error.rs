use alloc::boxed::Box;
use alloc::string::String;

use crate::flow::Trajectory;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("vector is not tangent to the model (residual {residual:e})")]
    NonTangent { residual: f64 },
    #[error("cannot retract the zero vector onto the sphere")]
    DegenerateRetraction,
    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },
    #[error("loop is off the constraint surface (residual {residual:e})")]
    OffConstraint { residual: f64 },
    #[error("invalid loop: {0}")]
    InvalidLoop(String),
    #[error("tangent field does not match its base loop")]
    BaseMismatch,
    #[error("unknown model id {0:?}")]
    UnknownModel(String),
    #[error("non-finite values produced by a flow step")]
    BlowUp,
    #[error("flow diverged at s = {s} after {halvings} consecutive step halvings")]
    Divergence {
        s: f64,
        halvings: u32,
        partial: Box<Trajectory>,
    },
    #[error("{op} requires {expected}")]
    WrongRule {
        op: &'static str,
        expected: &'static str,
    },
    #[error("s-grid spacing is not uniform")]
    NonUniformGrid,
    #[error("{op} needs at least {needed} slices, got {got}")]
    TooShort {
        op: &'static str,
        needed: usize,
        got: usize,
    },
}
