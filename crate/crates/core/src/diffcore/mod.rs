//! Differentiable building blocks with hand-written backward passes.
//!
//! Parameters live in a [`ParamStore`] keyed by name; layers hold only the
//! names of the parameters they read, so two layers naming the same weight
//! share its storage and accumulate into the same gradient buffer.

mod gradcheck;
mod layers;
mod optim;
mod params;

pub use gradcheck::{grad_check, BlockReport, GradCheckConfig, GradCheckReport};
pub use layers::{
    fully_connected, sigmoid, sigmoid_backward, sigmoid_scalar, Layer, LeakyRelu, Linear,
    Sequential,
};
pub use optim::{sgd_step, SgdConfig, StepSchedule};
pub use params::{Param, ParamStore};
