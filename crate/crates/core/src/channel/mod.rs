//! The two-stage feedback channel `U -> H -> Y` given `S`: kernels, admissible
//! families, stage capacities at a fixed source, sampling and context coarsening.

mod capacity;
mod cascade;
mod dataset;
mod family;

pub use capacity::{total_capacity, ArticulationInput, CapacityReport, ContextCapacity, StageFamilies};
pub use cascade::{source_given_context, verify_cascade_dpi, CascadeChannel, DpiContext, DpiReport, DPI_TOL};
pub use dataset::{sample_dataset, Dataset, DatasetHeader, Observed, Sample};
pub use family::{
    capacity_for_family, ChannelFamily, NoiseModel, StageCapacity, MAX_PARTITION_ALPHABET, PARTITION_BUDGET,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::probcore::{mutual_information, Axis, JointTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coarsening {
    pub joint: JointTable,
    /// `I(U;S)`.
    pub before: f64,
    /// `I(U;S')`.
    pub after: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Pushes `P(U, S)` through a deterministic relabelling `S' = map[S]`.
pub fn coarsen_context(source: &JointTable, map: &[usize]) -> Result<Coarsening> {
    let us = source.marginal(&["U", "S"])?;
    let [u, s] = [us.sizes()[0], us.sizes()[1]];
    if map.len() != s {
        return Err(invalid(format!("coarsening map covers {} contexts, source has {s}", map.len())));
    }
    let targets = map.iter().max().map_or(0, |&m| m + 1);
    let mut masses = vec![0.0; u * targets];
    for i in 0..u {
        for (k, &t) in map.iter().enumerate() {
            masses[i * targets + t] += us.mass(&[i, k]);
        }
    }
    let joint = JointTable::new(vec![Axis::new("U", u), Axis::new("S", targets)], masses)?;
    let before = mutual_information(&us, "U", "S")?;
    let after = mutual_information(&joint, "U", "S")?;
    let slack = before - after;
    Ok(Coarsening { joint, before, after, slack, holds: slack >= -DPI_TOL })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probcore::Dist;
    use rand::{Rng, SeedableRng};

    fn random_source(seed: u64, u: usize, s: usize) -> JointTable {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..u * s).map(|_| rng.random::<f64>()).collect();
        JointTable::new(vec![Axis::new("U", u), Axis::new("S", s)], Dist::from_weights(w).unwrap().masses().to_vec())
            .unwrap()
    }

    #[test]
    fn identity_map_preserves() {
        let src = random_source(1, 3, 4);
        let c = coarsen_context(&src, &[0, 1, 2, 3]).unwrap();
        assert!((c.before - c.after).abs() < 1e-15);
    }

    #[test]
    fn constant_map_removes_interference() {
        let c = coarsen_context(&random_source(2, 3, 4), &[0, 0, 0, 0]).unwrap();
        assert_eq!(c.after, 0.0);
        assert!(c.holds);
    }

    #[test]
    fn random_merges_never_increase() {
        for seed in 0..50 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let map: Vec<usize> = (0..4).map(|_| rng.random_range(0..2)).collect();
            let c = coarsen_context(&random_source(seed, 3, 4), &map).unwrap();
            assert!(c.holds, "seed {seed}: slack {}", c.slack);
        }
    }

    #[test]
    fn map_length_checked() {
        assert!(coarsen_context(&random_source(3, 2, 3), &[0, 1]).is_err());
    }
}
