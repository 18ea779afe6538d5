use serde::{Deserialize, Serialize};

use super::dist::{check_masses, Dist};
use super::{MAX_AXIS_SIZE, MAX_CELLS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Self { name: name.into(), size }
    }
}

/// Dense joint distribution over named finite axes, stored row-major
/// (the last axis varies fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint")]
pub struct JointTable {
    axes: Vec<Axis>,
    masses: Vec<f64>,
}

#[derive(Deserialize)]
struct RawJoint {
    axes: Vec<Axis>,
    masses: Vec<f64>,
}

impl TryFrom<RawJoint> for JointTable {
    type Error = Error;

    fn try_from(raw: RawJoint) -> Result<Self> {
        JointTable::new(raw.axes, raw.masses)
    }
}

pub(crate) fn check_shape(axes: &[Axis]) -> Result<usize> {
    if axes.is_empty() {
        return Err(Error::Empty);
    }
    let mut cells: usize = 1;
    for (i, axis) in axes.iter().enumerate() {
        if axis.size == 0 {
            return Err(Error::InvalidArgument(format!("axis `{}` has size 0", axis.name)));
        }
        if axis.size > MAX_AXIS_SIZE {
            return Err(Error::ResourceLimit(format!(
                "axis `{}` has {} symbols; the limit is {MAX_AXIS_SIZE}",
                axis.name, axis.size
            )));
        }
        if axes[..i].iter().any(|a| a.name == axis.name) {
            return Err(Error::InvalidArgument(format!("duplicate axis `{}`", axis.name)));
        }
        cells = cells.saturating_mul(axis.size);
        if cells > MAX_CELLS {
            return Err(Error::ResourceLimit(format!("joint table would have more than {MAX_CELLS} cells")));
        }
    }
    Ok(cells)
}

impl JointTable {
    pub fn new(axes: Vec<Axis>, masses: Vec<f64>) -> Result<Self> {
        let cells = check_shape(&axes)?;
        if masses.len() != cells {
            return Err(Error::AlphabetMismatch(masses.len(), cells));
        }
        check_masses(&masses)?;
        Ok(Self { axes, masses })
    }

    /// Builds a table by evaluating `f` on every multi-index.
    pub fn from_fn(axes: Vec<Axis>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let cells = check_shape(&axes)?;
        let sizes: Vec<usize> = axes.iter().map(|a| a.size).collect();
        let mut idx = vec![0usize; sizes.len()];
        let mut masses = Vec::with_capacity(cells);
        for _ in 0..cells {
            masses.push(f(&idx));
            increment(&mut idx, &sizes);
        }
        Self::new(axes, masses)
    }

    /// Product of two independent marginals, axes `a` then `b`.
    pub fn product(a: (&str, &Dist), b: (&str, &Dist)) -> Result<Self> {
        let (na, da) = a;
        let (nb, db) = b;
        Self::from_fn(vec![Axis::new(na, da.alphabet_size()), Axis::new(nb, db.alphabet_size())], |ix| {
            da.mass(ix[0]) * db.mass(ix[1])
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes.iter().position(|a| a.name == name).ok_or_else(|| Error::UnknownAxis(name.to_string()))
    }

    pub fn axis_size(&self, name: &str) -> Result<usize> {
        Ok(self.axes[self.axis_index(name)?].size)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    /// Mass at a full multi-index (in axis order).
    pub fn mass(&self, idx: &[usize]) -> f64 {
        let mut flat = 0;
        for (axis, &i) in self.axes.iter().zip(idx) {
            flat = flat * axis.size + i;
        }
        self.masses[flat]
    }

    /// Flat masses marginalized onto `keep` (positions into `axes`), in the
    /// order given by `keep`.
    pub(crate) fn marginal_flat(&self, keep: &[usize]) -> Vec<f64> {
        let sizes = self.sizes();
        let out_len: usize = keep.iter().map(|&k| sizes[k]).product();
        let mut out = vec![0.0; out_len];
        let mut idx = vec![0usize; sizes.len()];
        for &p in &self.masses {
            if p != 0.0 {
                let mut flat = 0;
                for &k in keep {
                    flat = flat * sizes[k] + idx[k];
                }
                out[flat] += p;
            }
            increment(&mut idx, &sizes);
        }
        out
    }

    /// Marginal table over the named axes, in the order given.
    pub fn marginal(&self, names: &[&str]) -> Result<JointTable> {
        let keep = self.positions(names)?;
        let masses = self.marginal_flat(&keep);
        let axes = keep.iter().map(|&k| self.axes[k].clone()).collect();
        Ok(JointTable { axes, masses })
    }

    pub fn marginal_dist(&self, name: &str) -> Result<Dist> {
        let k = self.axis_index(name)?;
        Dist::from_weights(self.marginal_flat(&[k]))
    }

    pub(crate) fn positions(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let k = self.axis_index(name)?;
            if out.contains(&k) {
                return Err(Error::InvalidArgument(format!("axis `{name}` listed twice")));
            }
            out.push(k);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub(crate) fn increment(idx: &mut [usize], sizes: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < sizes[k] {
            return;
        }
        idx[k] = 0;
    }
}
