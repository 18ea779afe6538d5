use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::probcore::{mi_matrix, Dist, Kernel};

/// Largest input alphabet for which the partition search runs.
pub const MAX_PARTITION_ALPHABET: usize = 20;
/// Upper limit on the number of partitions enumerated by one search.
pub const PARTITION_BUDGET: f64 = 2e8;
/// Values closer than this count as a tie and keep the lower index.
const TIE_TOL: f64 = 1e-13;

/// Kernel-valued function of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// n-ary symmetric channel, parameter = total flip probability.
    Symmetric,
    /// Erasure channel, parameter = erasure probability; one extra output symbol.
    Erasure,
}

impl NoiseModel {
    pub fn kernel(self, inputs: usize, param: f64) -> Result<Kernel> {
        match self {
            NoiseModel::Symmetric => Kernel::symmetric(inputs, param),
            NoiseModel::Erasure => Kernel::erasure(inputs, param),
        }
    }
}

/// Admissible set of stage kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelFamily {
    /// Every kernel whose output takes at most `k` values.
    Cardinality { k: usize },
    /// An explicit finite list of kernels.
    Enumerated { kernels: Vec<Kernel> },
    /// `model(param)` for each `param` in `grid`.
    Parametric { model: NoiseModel, grid: Vec<f64> },
}

impl ChannelFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelFamily::Cardinality { k } if *k == 0 => Err(invalid("cardinality family needs k >= 1")),
            ChannelFamily::Enumerated { kernels } if kernels.is_empty() => Err(invalid("enumerated family is empty")),
            ChannelFamily::Parametric { grid, .. } if grid.is_empty() => {
                Err(invalid("parametric family has an empty grid"))
            }
            _ => Ok(()),
        }
    }

    /// Membership test used to audit per-stage feasibility of a concrete kernel.
    pub fn contains(&self, kernel: &Kernel, tol: f64) -> bool {
        match self {
            ChannelFamily::Cardinality { k } => kernel.used_outputs() <= *k,
            ChannelFamily::Enumerated { kernels } => kernels.iter().any(|k| k.approx_eq(kernel, tol)),
            ChannelFamily::Parametric { model, grid } => {
                grid.iter().any(|&p| model.kernel(kernel.rows(), p).map(|k| k.approx_eq(kernel, tol)).unwrap_or(false))
            }
        }
    }
}

/// Supremum of the stage mutual information over a family, with its maximizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCapacity {
    pub value: f64,
    pub witness: Kernel,
    /// Position of the witness in an enumerated list or parameter grid.
    pub witness_index: Option<usize>,
}

/// `sup_{K in family} I(X; K(X))` for the fixed input law `source`.
pub fn capacity_for_family(source: &Dist, family: &ChannelFamily) -> Result<StageCapacity> {
    family.validate()?;
    let n = source.alphabet_size();
    let mi = |k: &Kernel| -> Result<f64> {
        if k.rows() != n {
            return Err(Error::AlphabetMismatch(k.rows(), n));
        }
        Ok(mi_matrix(&k.joint_with(source)?, k.rows(), k.cols()))
    };
    match family {
        ChannelFamily::Cardinality { k } => {
            let witness = best_partition(source, *k)?;
            Ok(StageCapacity { value: mi(&witness)?, witness, witness_index: None })
        }
        ChannelFamily::Enumerated { kernels } => {
            let mut best: Option<(usize, f64)> = None;
            for (i, k) in kernels.iter().enumerate() {
                let v = mi(k)?;
                if best.is_none_or(|(_, b)| v > b + TIE_TOL) {
                    best = Some((i, v));
                }
            }
            let (i, value) = best.expect("nonempty family");
            Ok(StageCapacity { value, witness: kernels[i].clone(), witness_index: Some(i) })
        }
        ChannelFamily::Parametric { model, grid } => {
            let mut best: Option<(usize, f64, Kernel)> = None;
            for (i, &p) in grid.iter().enumerate() {
                let k = model.kernel(n, p)?;
                let v = mi(&k)?;
                if best.as_ref().is_none_or(|(_, b, _)| v > *b + TIE_TOL) {
                    best = Some((i, v, k));
                }
            }
            let (i, value, witness) = best.expect("nonempty grid");
            Ok(StageCapacity { value, witness, witness_index: Some(i) })
        }
    }
}

/// Stirling number of the second kind, as f64 (only used for budgeting).
pub(crate) fn stirling2(n: usize, k: usize) -> f64 {
    let mut row = vec![0.0f64; k + 1];
    row[0] = 1.0;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = j as f64 * row[j] + row[j - 1];
        }
        row[0] = 0.0;
    }
    row[k]
}

/// Deterministic kernel maximizing `I(X; K(X)) = H(K(X))` over maps into at
/// most `k` cells.
///
/// Splitting a cell never lowers the entropy of the cell masses, so only
/// partitions of the positive-mass atoms into exactly `min(k, support)` cells
/// are scanned, in restricted-growth order; zero-mass atoms join cell 0.
fn best_partition(source: &Dist, k: usize) -> Result<Kernel> {
    let n = source.alphabet_size();
    if n > MAX_PARTITION_ALPHABET {
        return Err(Error::ResourceLimit(format!(
            "partition search over {n} symbols is intractable (limit {MAX_PARTITION_ALPHABET}); coarsen the source first"
        )));
    }
    let atoms: Vec<usize> = (0..n).filter(|&i| source.mass(i) > 0.0).collect();
    let cells = k.min(atoms.len()).max(1);
    let count = stirling2(atoms.len(), cells);
    if count > PARTITION_BUDGET {
        return Err(Error::ResourceLimit(format!(
            "{count:.3e} partitions of {} atoms into {cells} cells exceed the search budget",
            atoms.len()
        )));
    }
    let masses: Vec<f64> = atoms.iter().map(|&i| source.mass(i)).collect();
    let mut search = PartitionSearch {
        masses: &masses,
        cells,
        labels: vec![0; masses.len()],
        best: f64::NEG_INFINITY,
        best_labels: vec![0; masses.len()],
    };
    search.descend(0, 0);
    let mut map = vec![0usize; n];
    for (a, &i) in atoms.iter().enumerate() {
        map[i] = search.best_labels[a];
    }
    Kernel::deterministic(&map, cells)
}

struct PartitionSearch<'a> {
    masses: &'a [f64],
    cells: usize,
    labels: Vec<usize>,
    best: f64,
    best_labels: Vec<usize>,
}

impl PartitionSearch<'_> {
    fn descend(&mut self, t: usize, used: usize) {
        let n = self.masses.len();
        if t == n {
            if used == self.cells {
                // summed fresh in atom order so equal partitions compare equal
                let mut block = vec![0.0; self.cells];
                for (&b, &p) in self.labels.iter().zip(self.masses) {
                    block[b] += p;
                }
                let h = crate::probcore::entropy_of(&block);
                if h > self.best + TIE_TOL {
                    self.best = h;
                    self.best_labels.copy_from_slice(&self.labels);
                }
            }
            return;
        }
        // remaining atoms must be able to open the missing cells
        if n - t < self.cells - used {
            return;
        }
        let open = if used < self.cells { used + 1 } else { used };
        for b in 0..open {
            self.labels[t] = b;
            self.descend(t + 1, used.max(b + 1));
        }
    }
}
