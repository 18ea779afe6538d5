//! Decoders and posterior learners on codebook mixtures, exact information
//! audits by enumeration, and posterior compression.

mod audit;
mod compress;
mod posterior;

pub use crate::codebook::DecoderTable;
pub use audit::{enumerate_information, InfoAudit, AUDIT_TOL, MAX_AUDIT_M};
pub use compress::{
    compress_posterior, residual_bound_in_use, Compressed, CompressedLearner, CompressionAudit, Quantizer,
    ResidualBound, ResidualMechanism,
};
pub use posterior::{
    all_decoders, bayes_optimal_decoder, empirical_obs_risk, gibbs_posterior, map_smoothed_posterior, random_decoders,
    BayesDecoder, EnumeratedLearner, Learner, PosteriorRule, MAX_HYPOTHESES,
};

use serde::{Deserialize, Serialize};

use crate::codebook::ObservableLoss;
use crate::error::Result;
use crate::probcore::{kl_divergence, Dist};

/// Posterior averages used by the ceiling and its coverage check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// `E_P[R_hat_obs]`.
    pub emp_risk: f64,
    /// `E_P[R_obs]`, exact.
    pub obs_risk: f64,
    pub kl: f64,
}

pub fn summarize_posterior(
    learner: &dyn Learner,
    posterior: &Dist,
    data: &[(usize, usize)],
    loss: &ObservableLoss,
) -> Result<PosteriorSummary> {
    let (mut emp_risk, mut obs_risk) = (0.0, 0.0);
    for (t, h) in learner.hypotheses().iter().enumerate() {
        let p = posterior.mass(t);
        if p > 0.0 {
            emp_risk += p * empirical_obs_risk(h, data, loss)?;
            obs_risk += p * loss.risk(h);
        }
    }
    Ok(PosteriorSummary { emp_risk, obs_risk, kl: kl_divergence(posterior, learner.prior())? })
}
