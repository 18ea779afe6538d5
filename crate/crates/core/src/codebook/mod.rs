//! Delta-separable codebooks for zero-one, pairwise-ranking and truncated
//! squared losses, their index decoders, the induced mixture, and the
//! posterior-expected observable loss.

mod book;
mod loss;
mod mixture;

pub use book::{
    build_classification, build_mse_packing, build_ranking, validate, Codebook, PhiRule, ValidationReport,
    VALIDATION_TOL,
};
pub use loss::{lattice, permutations, LossKind, LossTable, MAX_LOSS_CELLS, MAX_RANKING_ITEMS};
pub use mixture::{
    canonical_observable_loss, index_error, mixture, soft_link_slack, tower_check, true_risk, DecoderTable,
    MixtureInstance, ObservableLoss, SoftLink, TowerCheck,
};
