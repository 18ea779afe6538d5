use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::channel::CascadeChannel;
use crate::codebook::{
    canonical_observable_loss, index_error, true_risk, DecoderTable, MixtureInstance, ObservableLoss,
};
use crate::error::{invalid, Error, Result};
use crate::probcore::Dist;
use crate::rng;

/// Largest hypothesis class built by [`all_decoders`].
pub const MAX_HYPOTHESES: usize = 65_536;

/// Every decoder over the `(y, s)` grid with actions in `0..action_count`.
pub fn all_decoders(y_size: usize, s_size: usize, action_count: usize) -> Result<Vec<DecoderTable>> {
    let cells = y_size * s_size;
    let total = (action_count as f64).powi(cells as i32);
    if total > MAX_HYPOTHESES as f64 {
        return Err(Error::ResourceLimit(format!(
            "{action_count}^{cells} decoders exceed the class limit {MAX_HYPOTHESES}; use a random subclass"
        )));
    }
    let total = total as usize;
    Ok((0..total)
        .map(|mut k| {
            let mut acts = vec![0; cells];
            for c in (0..cells).rev() {
                acts[c] = k % action_count;
                k /= action_count;
            }
            DecoderTable::new(y_size, s_size, acts).expect("sized above")
        })
        .collect())
}

/// `count` distinct decoders drawn uniformly without replacement.
pub fn random_decoders(
    y_size: usize,
    s_size: usize,
    action_count: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<DecoderTable>> {
    let cells = y_size * s_size;
    let space = (action_count as f64).powi(cells as i32);
    if count == 0 || count as f64 > space {
        return Err(invalid(format!("cannot draw {count} distinct decoders from {space}")));
    }
    let mut r = rng::rng(seed);
    if space <= 1e7 {
        let idx = sample(&mut r, space as usize, count);
        let mut picks: Vec<usize> = idx.into_iter().collect();
        picks.sort_unstable();
        return Ok(picks
            .into_iter()
            .map(|mut k| {
                let mut acts = vec![0; cells];
                for c in (0..cells).rev() {
                    acts[c] = k % action_count;
                    k /= action_count;
                }
                DecoderTable::new(y_size, s_size, acts).expect("sized above")
            })
            .collect());
    }
    let mut out: Vec<DecoderTable> = Vec::with_capacity(count);
    while out.len() < count {
        let d = DecoderTable::random(&mut r, y_size, s_size, action_count);
        if !out.contains(&d) {
            out.push(d);
        }
    }
    Ok(out)
}

/// How a posterior is formed from the empirical observable risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PosteriorRule {
    /// `P ∝ Q exp(-lambda m R_hat)`.
    Gibbs { lambda: f64 },
    /// `(1 - smoothing)` on the Gibbs mode plus `smoothing * Q`.
    MapSmoothing { lambda: f64, smoothing: f64 },
}

impl PosteriorRule {
    pub fn lambda(&self) -> f64 {
        match *self {
            PosteriorRule::Gibbs { lambda } | PosteriorRule::MapSmoothing { lambda, .. } => lambda,
        }
    }
}

/// A learner that maps observed `(y, s)` data to a distribution over a finite
/// hypothesis list.
pub trait Learner: Sync {
    fn hypotheses(&self) -> &[DecoderTable];
    fn prior(&self) -> &Dist;
    fn posterior(&self, data: &[(usize, usize)], loss: &ObservableLoss) -> Result<Dist>;
    /// True when the posterior ignores the data.
    fn data_free(&self) -> bool;
}

/// Finite hypothesis class, prior, and posterior rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumeratedLearner {
    pub hypotheses: Vec<DecoderTable>,
    pub prior: Dist,
    pub rule: PosteriorRule,
}

impl EnumeratedLearner {
    pub fn new(hypotheses: Vec<DecoderTable>, prior: Dist, rule: PosteriorRule) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(invalid("hypothesis class is empty"));
        }
        if prior.alphabet_size() != hypotheses.len() {
            return Err(Error::AlphabetMismatch(prior.alphabet_size(), hypotheses.len()));
        }
        let (y, s) = (hypotheses[0].y_size(), hypotheses[0].s_size());
        if hypotheses.iter().any(|h| h.y_size() != y || h.s_size() != s) {
            return Err(invalid("hypotheses disagree on the (y, s) grid"));
        }
        match rule {
            PosteriorRule::Gibbs { lambda } | PosteriorRule::MapSmoothing { lambda, .. }
                if !(lambda >= 0.0) || !lambda.is_finite() =>
            {
                return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
            }
            PosteriorRule::MapSmoothing { smoothing, .. } if !(0.0..=1.0).contains(&smoothing) => {
                return Err(invalid(format!("smoothing must lie in [0, 1], got {smoothing}")));
            }
            _ => {}
        }
        Ok(Self { hypotheses, prior, rule })
    }

    /// Uniform prior over `hypotheses`.
    pub fn uniform(hypotheses: Vec<DecoderTable>, rule: PosteriorRule) -> Result<Self> {
        let n = hypotheses.len();
        Self::new(hypotheses, Dist::uniform(n.max(1)), rule)
    }
}

impl Learner for EnumeratedLearner {
    fn hypotheses(&self) -> &[DecoderTable] {
        &self.hypotheses
    }

    fn prior(&self) -> &Dist {
        &self.prior
    }

    fn posterior(&self, data: &[(usize, usize)], loss: &ObservableLoss) -> Result<Dist> {
        match self.rule {
            PosteriorRule::Gibbs { lambda } => gibbs_posterior(&self.hypotheses, &self.prior, lambda, data, loss),
            PosteriorRule::MapSmoothing { lambda, smoothing } => {
                map_smoothed_posterior(&self.hypotheses, &self.prior, lambda, smoothing, data, loss)
            }
        }
    }

    fn data_free(&self) -> bool {
        match self.rule {
            PosteriorRule::Gibbs { lambda } => lambda == 0.0,
            PosteriorRule::MapSmoothing { lambda, smoothing } => lambda == 0.0 || smoothing == 1.0,
        }
    }
}

/// `(1/m) sum_i loss(y_i, s_i, theta(y_i, s_i))`.
pub fn empirical_obs_risk(theta: &DecoderTable, data: &[(usize, usize)], loss: &ObservableLoss) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("empirical risk needs at least one sample"));
    }
    let mut total = 0.0;
    for &(y, s) in data {
        total += loss.get(y, s, theta.act(y, s))?;
    }
    Ok(total / data.len() as f64)
}

/// Log weights `ln Q - lambda m R_hat`; `-inf` off the prior support.
fn log_weights(
    hypotheses: &[DecoderTable],
    prior: &Dist,
    lambda: f64,
    data: &[(usize, usize)],
    loss: &ObservableLoss,
) -> Result<Vec<f64>> {
    let m = data.len() as f64;
    hypotheses
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let q = prior.mass(i);
            if q <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            // skip the risk when lambda = 0 so P = Q holds bit for bit
            let penalty = if lambda == 0.0 { 0.0 } else { lambda * m * empirical_obs_risk(h, data, loss)? };
            Ok(q.ln() - penalty)
        })
        .collect()
}

/// `P(theta) ∝ Q(theta) exp(-lambda m R_hat(theta))`, normalized in log space.
pub fn gibbs_posterior(
    hypotheses: &[DecoderTable],
    prior: &Dist,
    lambda: f64,
    data: &[(usize, usize)],
    loss: &ObservableLoss,
) -> Result<Dist> {
    if data.is_empty() {
        return Err(invalid("posterior needs at least one sample"));
    }
    if lambda == 0.0 {
        return Ok(prior.clone());
    }
    let lw = log_weights(hypotheses, prior, lambda, data, loss)?;
    let top = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|&l| (l - top).exp()).collect();
    Dist::from_weights(w)
}

/// Mode of the Gibbs posterior (ties to the lowest index) mixed with the prior.
pub fn map_smoothed_posterior(
    hypotheses: &[DecoderTable],
    prior: &Dist,
    lambda: f64,
    smoothing: f64,
    data: &[(usize, usize)],
    loss: &ObservableLoss,
) -> Result<Dist> {
    if data.is_empty() {
        return Err(invalid("posterior needs at least one sample"));
    }
    let lw = log_weights(hypotheses, prior, lambda, data, loss)?;
    let mut mode = 0;
    for i in 1..lw.len() {
        if lw[i] > lw[mode] {
            mode = i;
        }
    }
    let w: Vec<f64> =
        (0..lw.len()).map(|i| smoothing * prior.mass(i) + if i == mode { 1.0 - smoothing } else { 0.0 }).collect();
    Dist::from_weights(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesDecoder {
    pub decoder: DecoderTable,
    pub risk: f64,
    pub index_error: f64,
}

/// Per `(y, s)` cell the action minimizing `E[loss(U, a) | y, s]`, ties to the
/// lowest action; with its exact risk and index-error rate.
pub fn bayes_optimal_decoder(mix: &MixtureInstance, cascade: &CascadeChannel) -> Result<BayesDecoder> {
    let obs = canonical_observable_loss(mix, cascade)?;
    let decoder = obs.bayes_decoder();
    Ok(BayesDecoder {
        risk: true_risk(mix, cascade, &decoder)?,
        index_error: index_error(mix, cascade, &decoder)?,
        decoder,
    })
}
