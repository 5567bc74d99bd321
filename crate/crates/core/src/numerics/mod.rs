//! Dense f64 matrices, a reverse-mode differentiation tape, and a
//! finite-difference gradient validator. Everything downstream (networks,
//! losses, training) is built from these three pieces.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::grad_check;
pub use matrix::{rowwise, Matrix, RowwiseOp};
pub use tape::{NodeId, Tape, L2NORM_EPS, PROB_FLOOR};

pub(crate) use tape::{joint_distribution_value, mi_loss_value, validate_joint};
