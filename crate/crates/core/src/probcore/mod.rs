//! Exact information-theoretic primitives over finite alphabets.
//!
//! Every quantity is in nats. Tables are dense; alphabets are capped at
//! [`MAX_AXIS_SIZE`] symbols per axis and joints at [`MAX_CELLS`] cells.

mod dist;
mod info;
mod joint;
mod kernel;

pub use dist::Dist;
pub use info::{
    clamp_information, conditional_mi, conditional_mi_sets, entropy, kl_divergence, mutual_information,
    mutual_information_sets, ConditionalMi,
};
pub use joint::{Axis, JointTable};
pub use kernel::Kernel;

pub(crate) use info::{entropy_of, kl_of, mi_matrix};

/// Normalization tolerance for distributions and kernel rows.
pub const MASS_TOL: f64 = 1e-12;
/// Negative information values above `-NEG_CLAMP` are float noise and clamp to 0.
pub const NEG_CLAMP: f64 = 1e-12;
pub const MAX_AXIS_SIZE: usize = 64;
pub const MAX_CELLS: usize = 10_000_000;
