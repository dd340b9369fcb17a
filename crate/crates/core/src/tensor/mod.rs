//! Dense row-major tensors, a reverse-mode tape covering the layers the two
//! networks use, and a central-difference gradient checker.

mod array;
mod backward;
mod dd;
pub mod gradcheck;
mod ops;
mod rng;
mod tape;

pub use array::{Float, Tensor};
pub use backward::Gradients;
pub use dd::Dd;
pub use ops::window_len;
pub use gradcheck::{check_against, grad_check, relative_error, GradCheckReport};
pub use rng::RngStream;
pub use tape::{LstmParams, Mode, Tape, Var};
