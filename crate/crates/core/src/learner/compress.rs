use serde::{Deserialize, Serialize};

use super::posterior::Learner;
use crate::codebook::{DecoderTable, ObservableLoss};
use crate::error::{invalid, Result};
use crate::probcore::{entropy, kl_divergence, Dist};
use crate::rng::{categorical, rng};

/// Data-independent map from a hypothesis class onto at most `K`
/// representatives, built from the prior and the class only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    /// Representative hypothesis indices, in selection order.
    pub representatives: Vec<usize>,
    /// `assign[theta]` = position in `representatives`.
    pub assign: Vec<usize>,
    pub note: Option<String>,
}

fn hamming(a: &DecoderTable, b: &DecoderTable) -> usize {
    a.actions().iter().zip(b.actions()).filter(|(x, y)| x != y).count()
}

impl Quantizer {
    /// Representatives by greedy prior-mass coverage: start from the heaviest
    /// hypothesis, then repeatedly take the one maximizing
    /// `Q(theta) * distance to the chosen set`. Every other hypothesis is sent
    /// to a representative drawn with probability proportional to
    /// `1 / (1 + hamming distance)`.
    pub fn new(hypotheses: &[DecoderTable], prior: &Dist, k: usize, seed: u64) -> Result<Self> {
        let n = hypotheses.len();
        if k == 0 {
            return Err(invalid("compression needs K >= 1"));
        }
        if prior.alphabet_size() != n {
            return Err(invalid("prior does not match the hypothesis class"));
        }
        if k >= n {
            return Ok(Self {
                representatives: (0..n).collect(),
                assign: (0..n).collect(),
                note: Some(format!("K = {k} >= |Theta| = {n}; identity quantizer")),
            });
        }
        let first = prior.argmax();
        let mut reps = vec![first];
        let mut dist: Vec<usize> = hypotheses.iter().map(|h| hamming(h, &hypotheses[first])).collect();
        while reps.len() < k {
            let mut best: Option<(usize, f64)> = None;
            for (t, &d) in dist.iter().enumerate() {
                if reps.contains(&t) {
                    continue;
                }
                let score = prior.mass(t) * d as f64;
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((t, score));
                }
            }
            let (t, _) = best.expect("k < n leaves a candidate");
            reps.push(t);
            for (u, d) in dist.iter_mut().enumerate() {
                *d = (*d).min(hamming(&hypotheses[u], &hypotheses[t]));
            }
        }
        let mut r = rng(seed);
        let assign = (0..n)
            .map(|t| {
                if let Some(pos) = reps.iter().position(|&x| x == t) {
                    return pos;
                }
                let w: Vec<f64> =
                    reps.iter().map(|&x| 1.0 / (1.0 + hamming(&hypotheses[t], &hypotheses[x]) as f64)).collect();
                let z: f64 = w.iter().sum();
                let w: Vec<f64> = w.iter().map(|v| v / z).collect();
                categorical(&mut r, &w)
            })
            .collect();
        Ok(Self { representatives: reps, assign, note: None })
    }

    pub fn k(&self) -> usize {
        self.representatives.len()
    }

    /// Pushforward onto the representatives, as a distribution over `0..K`.
    pub fn push_compact(&self, p: &Dist) -> Result<Dist> {
        let mut w = vec![0.0; self.k()];
        for (t, &a) in self.assign.iter().enumerate() {
            w[a] += p.mass(t);
        }
        Dist::from_weights(w)
    }

    /// Pushforward embedded back in the full class (zero off representatives).
    pub fn push_full(&self, p: &Dist) -> Result<Dist> {
        let compact = self.push_compact(p)?;
        let mut w = vec![0.0; self.assign.len()];
        for (pos, &t) in self.representatives.iter().enumerate() {
            w[t] = compact.mass(pos);
        }
        Dist::from_weights(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionAudit {
    #[serde(rename = "K")]
    pub k: usize,
    /// `H(theta~)` under the compressed posterior.
    pub entropy: f64,
    pub ln_k: f64,
    pub kl: f64,
    pub kl_compressed: f64,
    pub entropy_holds: bool,
    pub kl_holds: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compressed {
    pub quantizer: Quantizer,
    /// `P_c` and `Q_c` over the `K` representatives.
    pub posterior: Dist,
    pub prior: Dist,
    pub audit: CompressionAudit,
}

/// Compresses `p` with a quantizer built from `(hypotheses, prior, seed)` and
/// checks `H(theta~) <= ln K` and `KL(P_c||Q_c) <= KL(P||Q)`.
pub fn compress_posterior(
    hypotheses: &[DecoderTable],
    prior: &Dist,
    p: &Dist,
    k: usize,
    seed: u64,
) -> Result<Compressed> {
    let quantizer = Quantizer::new(hypotheses, prior, k, seed)?;
    let pc = quantizer.push_compact(p)?;
    let qc = quantizer.push_compact(prior)?;
    let kl = kl_divergence(p, prior)?;
    let kl_compressed = kl_divergence(&pc, &qc)?;
    let h = entropy(&pc);
    let ln_k = (quantizer.k() as f64).ln();
    let audit = CompressionAudit {
        k: quantizer.k(),
        entropy: h,
        ln_k,
        kl,
        kl_compressed,
        entropy_holds: h <= ln_k + 1e-12,
        kl_holds: kl_compressed <= kl + 1e-12,
        note: quantizer.note.clone(),
    };
    Ok(Compressed { quantizer, posterior: pc, prior: qc, audit })
}

/// A learner whose output is passed through a fixed quantizer.
pub struct CompressedLearner<'a, L: Learner + ?Sized> {
    base: &'a L,
    quantizer: Quantizer,
    prior: Dist,
}

impl<'a, L: Learner + ?Sized> CompressedLearner<'a, L> {
    pub fn new(base: &'a L, k: usize, seed: u64) -> Result<Self> {
        let quantizer = Quantizer::new(base.hypotheses(), base.prior(), k, seed)?;
        let prior = quantizer.push_full(base.prior())?;
        Ok(Self { base, quantizer, prior })
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }
}

impl<L: Learner + ?Sized> Learner for CompressedLearner<'_, L> {
    fn hypotheses(&self) -> &[DecoderTable] {
        self.base.hypotheses()
    }

    fn prior(&self) -> &Dist {
        &self.prior
    }

    fn posterior(&self, data: &[(usize, usize)], loss: &ObservableLoss) -> Result<Dist> {
        self.quantizer.push_full(&self.base.posterior(data, loss)?)
    }

    fn data_free(&self) -> bool {
        self.base.data_free() || self.quantizer.k() == 1
    }
}

/// How the residual `rho` fed to the KL budget was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum ResidualMechanism {
    /// Posterior compressed to `k` values: `rho = ln k`.
    Compression { k: usize },
    /// Exact residual from an enumeration audit.
    Measured { value: f64 },
    /// User-declared bound.
    Declared { value: f64 },
    /// The posterior ignores the data: `rho = 0`.
    PriorOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualBound {
    pub rho: f64,
    pub mechanism: ResidualMechanism,
}

pub fn residual_bound_in_use(mechanism: ResidualMechanism) -> Result<ResidualBound> {
    let rho = match mechanism {
        ResidualMechanism::Compression { k } if k >= 1 => (k as f64).ln(),
        ResidualMechanism::Compression { .. } => return Err(invalid("compression needs K >= 1")),
        ResidualMechanism::Measured { value } | ResidualMechanism::Declared { value } => {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(invalid(format!("residual must be finite and >= 0, got {value}")));
            }
            value
        }
        ResidualMechanism::PriorOnly => 0.0,
    };
    Ok(ResidualBound { rho, mechanism })
}
