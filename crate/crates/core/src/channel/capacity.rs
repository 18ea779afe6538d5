use serde::{Deserialize, Serialize};

use super::cascade::{source_given_context, CascadeChannel};
use super::family::{capacity_for_family, ChannelFamily};
use crate::error::{invalid, Result};
use crate::probcore::{Dist, JointTable, Kernel};

/// Admissible kernels for both stages in one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFamilies {
    pub cog: ChannelFamily,
    pub art: ChannelFamily,
}

/// Which law of `H` the articulation capacity is evaluated under.
#[derive(Debug, Clone, Copy)]
pub enum ArticulationInput<'a> {
    /// The law induced by the cognitive-stage maximizer.
    CogWitness,
    /// The law induced by the cognitive kernel of a concrete cascade.
    Cascade(&'a CascadeChannel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextCapacity {
    pub context: usize,
    pub mass: f64,
    pub cog: f64,
    pub art: f64,
    /// `min(cog, art)`.
    pub tot: f64,
    pub cog_witness: Kernel,
    pub art_witness: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub per_context: Vec<ContextCapacity>,
    /// `sum_s P(s) tot(s)`.
    pub average: f64,
    /// Always "conservative upper bound": the per-stage maximizers need not be
    /// compatible, so the min is not claimed to be achievable.
    pub label: String,
}

/// Per-context stage capacities at the fixed source `P(U|S=s)`, their min, and
/// the `P(S)`-weighted average.
///
/// `families` holds either one entry (shared by every context) or one per context.
pub fn total_capacity(
    families: &[StageFamilies],
    source: &JointTable,
    art_input: ArticulationInput<'_>,
) -> Result<CapacityReport> {
    let us = source.marginal(&["U", "S"])?;
    let contexts = us.sizes()[1];
    if families.is_empty() || (families.len() != 1 && families.len() != contexts) {
        return Err(invalid(format!("expected 1 or {contexts} per-context family pairs, got {}", families.len())));
    }
    if let ArticulationInput::Cascade(c) = art_input {
        if c.contexts() != contexts || c.u_size() != us.sizes()[0] {
            return Err(invalid("cascade does not match the source alphabet"));
        }
    }
    let s_law = us.marginal_dist("S")?;
    let mut per_context = Vec::with_capacity(contexts);
    let mut average = 0.0;
    for s in 0..contexts {
        let fam = &families[if families.len() == 1 { 0 } else { s }];
        let mass = s_law.mass(s);
        // zero-mass contexts carry no weight; evaluate at a uniform source
        let pu = source_given_context(source, s)?.unwrap_or_else(|| Dist::uniform(us.sizes()[0]));
        let cog = capacity_for_family(&pu, &fam.cog)?;
        let ph = match art_input {
            ArticulationInput::CogWitness => cog.witness.push(&pu)?,
            ArticulationInput::Cascade(c) => c.cog(s).push(&pu)?,
        };
        let art = capacity_for_family(&ph, &fam.art)?;
        let tot = cog.value.min(art.value);
        average += mass * tot;
        per_context.push(ContextCapacity {
            context: s,
            mass,
            cog: cog.value,
            art: art.value,
            tot,
            cog_witness: cog.witness,
            art_witness: art.witness,
        });
    }
    Ok(CapacityReport { per_context, average, label: "conservative upper bound".into() })
}
