//! Dense primitives shared by every other module.

mod linalg;
mod rng;

pub use linalg::{
    dot, finite_diff_grad, l2_norm, l2_normalize, log_sum_exp, normalize_jacobian,
    normalize_jacobian_apply, Mat64, Vec64,
};
pub use rng::Rng;
