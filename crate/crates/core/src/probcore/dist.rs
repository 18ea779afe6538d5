use serde::{Deserialize, Serialize};

use super::MASS_TOL;
use crate::error::{Error, Result};

/// A probability vector over a finite alphabet `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Dist {
    masses: Vec<f64>,
}

impl Dist {
    /// Validates `masses` as a distribution: nonnegative, finite, sum within 1e-12 of 1.
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        check_masses(&masses)?;
        Ok(Self { masses })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidMass { index, value });
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::NotNormalized { sum: total });
        }
        for w in &mut weights {
            *w /= total;
        }
        Self::new(weights)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "uniform distribution needs a nonempty alphabet");
        Self { masses: vec![1.0 / n as f64; n] }
    }

    pub fn point(n: usize, at: usize) -> Self {
        assert!(at < n, "point mass index out of range");
        let mut masses = vec![0.0; n];
        masses[at] = 1.0;
        Self { masses }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn alphabet_size(&self) -> usize {
        self.masses.len()
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    /// Expectation of `f` under the distribution.
    pub fn expect(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.masses.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, &p)| p * f(i)).sum()
    }

    /// Index of the largest mass; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.masses.iter().enumerate() {
            if p > self.masses[best] {
                best = i;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for Dist {
    type Error = Error;

    fn try_from(masses: Vec<f64>) -> Result<Self> {
        Self::new(masses)
    }
}

impl From<Dist> for Vec<f64> {
    fn from(d: Dist) -> Self {
        d.masses
    }
}

pub(crate) fn check_masses(masses: &[f64]) -> Result<()> {
    if masses.is_empty() {
        return Err(Error::Empty);
    }
    for (index, &value) in masses.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidMass { index, value });
        }
    }
    let sum: f64 = masses.iter().sum();
    if (sum - 1.0).abs() > MASS_TOL {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_mass_and_names_index() {
        let err = Dist::new(vec![0.5, -0.1, 0.6]).unwrap_err();
        assert!(matches!(err, Error::InvalidMass { index: 1, .. }));
        assert!(err.to_string().contains("entry 1"));
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(matches!(Dist::new(vec![0.5, 0.4]), Err(Error::NotNormalized { .. })));
        assert!(Dist::new(vec![0.5, 0.5 + 5e-13]).is_ok());
    }

    #[test]
    fn weights_normalize() {
        let d = Dist::from_weights(vec![2.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.masses(), &[0.5, 0.25, 0.25]);
        assert!(Dist::from_weights(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn json_round_trip_validates() {
        let d: Dist = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(d.alphabet_size(), 2);
        assert!(serde_json::from_str::<Dist>("[0.25,0.7]").is_err());
    }
}
