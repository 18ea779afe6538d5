use serde::{Deserialize, Serialize};

use super::dist::Dist;
use super::{MASS_TOL, MAX_AXIS_SIZE};
use crate::error::{Error, Result};

/// Row-stochastic matrix `p(out | in)`; serialized as a row-major list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Kernel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let rows = matrix.len();
        if rows == 0 {
            return Err(Error::Empty);
        }
        let cols = matrix[0].len();
        let mut data = Vec::with_capacity(rows * cols);
        for (r, row) in matrix.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidKernel {
                    row: r,
                    reason: format!("has {} entries, expected {cols}", row.len()),
                });
            }
            data.extend(row);
        }
        Self::from_flat(rows, cols, data)
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty);
        }
        if rows > MAX_AXIS_SIZE || cols > MAX_AXIS_SIZE {
            return Err(Error::ResourceLimit(format!(
                "kernel is {rows}x{cols}; alphabets are limited to {MAX_AXIS_SIZE}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::AlphabetMismatch(data.len(), rows * cols));
        }
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            if let Some(c) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidKernel { row: r, reason: format!("entry {c} is {}", row[c]) });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidKernel { row: r, reason: format!("sums to {sum}") });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::deterministic(&(0..n).collect::<Vec<_>>(), n).expect("identity kernel")
    }

    /// Kernel sending input `i` to output `map[i]` with probability one.
    pub fn deterministic(map: &[usize], cols: usize) -> Result<Self> {
        let mut data = vec![0.0; map.len() * cols];
        for (r, &c) in map.iter().enumerate() {
            if c >= cols {
                return Err(Error::InvalidKernel {
                    row: r,
                    reason: format!("target {c} outside output alphabet of size {cols}"),
                });
            }
            data[r * cols + c] = 1.0;
        }
        Self::from_flat(map.len(), cols, data)
    }

    /// Every row equal to `out`: the output carries no information about the input.
    pub fn constant(rows: usize, out: &Dist) -> Self {
        let cols = out.alphabet_size();
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend_from_slice(out.masses());
        }
        Self::from_flat(rows, cols, data).expect("constant kernel")
    }

    /// n-ary symmetric channel: keep the symbol with probability `1 - noise`,
    /// otherwise move uniformly to one of the other `n - 1` symbols.
    pub fn symmetric(n: usize, noise: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::InvalidArgument(format!("symmetric noise {noise} outside [0, 1]")));
        }
        if n == 1 {
            return Ok(Self::identity(1));
        }
        let off = noise / (n - 1) as f64;
        let mut data = vec![off; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0 - noise;
        }
        Self::from_flat(n, n, data)
    }

    /// Erasure channel on `n` inputs; output `n` is the erasure symbol.
    pub fn erasure(n: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("erasure probability {p} outside [0, 1]")));
        }
        let cols = n + 1;
        let mut data = vec![0.0; n * cols];
        for i in 0..n {
            data[i * cols + i] = 1.0 - p;
            data[i * cols + n] = p;
        }
        Self::from_flat(n, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// True when every row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        (0..self.rows).all(|r| self.row(r).iter().all(|&v| v == 0.0 || v == 1.0))
    }

    /// Number of output symbols that receive positive probability from some row.
    pub fn used_outputs(&self) -> usize {
        (0..self.cols).filter(|&c| (0..self.rows).any(|r| self.get(r, c) > 0.0)).count()
    }

    /// `self` followed by `next`.
    pub fn compose(&self, next: &Kernel) -> Result<Kernel> {
        if self.cols != next.rows {
            return Err(Error::AlphabetMismatch(self.cols, next.rows));
        }
        let mut data = vec![0.0; self.rows * next.cols];
        for r in 0..self.rows {
            for m in 0..self.cols {
                let p = self.get(r, m);
                if p == 0.0 {
                    continue;
                }
                for c in 0..next.cols {
                    data[r * next.cols + c] += p * next.get(m, c);
                }
            }
        }
        renormalize_rows(&mut data, self.rows, next.cols);
        Kernel::from_flat(self.rows, next.cols, data)
    }

    /// Output law when the input has law `input`.
    pub fn push(&self, input: &Dist) -> Result<Dist> {
        if input.alphabet_size() != self.rows {
            return Err(Error::AlphabetMismatch(input.alphabet_size(), self.rows));
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let p = input.mass(r);
            if p == 0.0 {
                continue;
            }
            for (o, &k) in out.iter_mut().zip(self.row(r)) {
                *o += p * k;
            }
        }
        Dist::from_weights(out)
    }

    /// Joint `p(in, out)` as a flat rows x cols matrix.
    pub fn joint_with(&self, input: &Dist) -> Result<Vec<f64>> {
        if input.alphabet_size() != self.rows {
            return Err(Error::AlphabetMismatch(input.alphabet_size(), self.rows));
        }
        Ok((0..self.rows * self.cols).map(|k| input.mass(k / self.cols) * self.data[k]).collect())
    }

    /// Entrywise equality within `tol`.
    pub fn approx_eq(&self, other: &Kernel, tol: f64) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.data.iter().zip(&other.data).all(|(a, b)| (a - b).abs() <= tol)
    }
}

// Products of stochastic rows drift by a few ulps; pull them back to 1.
fn renormalize_rows(data: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut data[r * cols..(r + 1) * cols];
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for Kernel {
    type Error = Error;

    fn try_from(m: Vec<Vec<f64>>) -> Result<Self> {
        Kernel::new(m)
    }
}

impl From<Kernel> for Vec<Vec<f64>> {
    fn from(k: Kernel) -> Self {
        k.to_rows()
    }
}
