//! Dense real arrays with reverse-mode differentiation, sized for one small
//! recurrent policy network.

mod categorical;
mod dump;
mod init;
mod lstm;
mod optim;
mod real;
mod tape;
#[allow(clippy::module_inception)]
mod tensor;

pub use categorical::{argmax, Categorical};
pub use dump::{read_dump, write_dump, DumpEntry};
pub use init::orthogonal_init;
pub use lstm::{lstm_cell, LstmVars};
pub use optim::{adam_step, clip_global_norm, grad_norm, AdamConfig, AdamState};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
#[allow(unused_imports)]
pub(crate) use tape::{log_softmax_in_place, sigmoid, softmax_in_place};
