//! Entropy, divergence and (conditional) mutual information in nats.

use serde::{Deserialize, Serialize};

use super::dist::Dist;
use super::joint::JointTable;
use super::NEG_CLAMP;
use crate::error::{Error, Result};

/// Shannon entropy `-sum p ln p`, with `0 ln 0 = 0`.
pub fn entropy(d: &Dist) -> f64 {
    entropy_of(d.masses())
}

pub(crate) fn entropy_of(masses: &[f64]) -> f64 {
    -masses.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// `KL(p || q) = sum p ln(p/q)`. Fails when `q` puts zero mass where `p` does not.
pub fn kl_divergence(p: &Dist, q: &Dist) -> Result<f64> {
    kl_of(p.masses(), q.masses())
}

pub(crate) fn kl_of(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::AlphabetMismatch(p.len(), q.len()));
    }
    let mut kl = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::AbsoluteContinuity { index, p: pi });
        }
        kl += pi * (pi / qi).ln();
    }
    clamp_information(kl)
}

/// Float noise in `[-1e-12, 0)` is clamped to zero; anything lower is a bug.
pub fn clamp_information(value: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEG_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NegativeInformation { value })
    }
}

/// Mutual information of a `rows x cols` matrix of (possibly unnormalized) masses.
pub(crate) fn mi_matrix(m: &[f64], rows: usize, cols: usize) -> f64 {
    let total: f64 = m.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut pa = vec![0.0; rows];
    let mut pb = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let p = m[r * cols + c];
            pa[r] += p;
            pb[c] += p;
        }
    }
    let mut mi = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let p = m[r * cols + c];
            if p > 0.0 {
                // p/t * ln( (p/t) / ((pa/t)(pb/t)) ) = p/t * ln(p t / (pa pb))
                mi += p * (p * total / (pa[r] * pb[c])).ln();
            }
        }
    }
    // float noise can leave an exact zero slightly negative
    (mi / total).max(0.0)
}

/// `I(A;B)` for two single axes.
pub fn mutual_information(j: &JointTable, a: &str, b: &str) -> Result<f64> {
    mutual_information_sets(j, &[a], &[b])
}

/// `I(A;B)` where `A` and `B` are groups of axes.
pub fn mutual_information_sets(j: &JointTable, a: &[&str], b: &[&str]) -> Result<f64> {
    let pa = j.positions(a)?;
    let pb = j.positions(b)?;
    if pa.iter().any(|k| pb.contains(k)) {
        return Err(Error::InvalidArgument("mutual information needs disjoint axis groups".into()));
    }
    let sizes = j.sizes();
    let rows: usize = pa.iter().map(|&k| sizes[k]).product();
    let cols: usize = pb.iter().map(|&k| sizes[k]).product();
    let keep: Vec<usize> = pa.iter().chain(&pb).copied().collect();
    let m = j.marginal_flat(&keep);
    clamp_information(mi_matrix(&m, rows, cols))
}

/// Result of `I(A;B|C)`: the average plus every per-context term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMi {
    pub value: f64,
    /// `I(A;B | C=c)` for each flattened context value; 0 for skipped contexts.
    pub per_context: Vec<f64>,
    pub context_mass: Vec<f64>,
    /// Contexts with zero probability (their term contributes nothing).
    pub skipped: Vec<usize>,
}

pub fn conditional_mi(j: &JointTable, a: &str, b: &str, c: &str) -> Result<ConditionalMi> {
    conditional_mi_sets(j, &[a], &[b], &[c])
}

pub fn conditional_mi_sets(j: &JointTable, a: &[&str], b: &[&str], c: &[&str]) -> Result<ConditionalMi> {
    let pa = j.positions(a)?;
    let pb = j.positions(b)?;
    let pc = j.positions(c)?;
    let overlap = |x: &[usize], y: &[usize]| x.iter().any(|k| y.contains(k));
    if overlap(&pa, &pb) || overlap(&pa, &pc) || overlap(&pb, &pc) {
        return Err(Error::InvalidArgument("conditional mutual information needs disjoint axis groups".into()));
    }
    let sizes = j.sizes();
    let rows: usize = pa.iter().map(|&k| sizes[k]).product();
    let cols: usize = pb.iter().map(|&k| sizes[k]).product();
    let ctx: usize = pc.iter().map(|&k| sizes[k]).product();
    let keep: Vec<usize> = pc.iter().chain(&pa).chain(&pb).copied().collect();
    let m = j.marginal_flat(&keep);
    let block = rows * cols;
    let mut per_context = Vec::with_capacity(ctx);
    let mut context_mass = Vec::with_capacity(ctx);
    let mut skipped = Vec::new();
    let mut value = 0.0;
    for k in 0..ctx {
        let slice = &m[k * block..(k + 1) * block];
        let mass: f64 = slice.iter().sum();
        context_mass.push(mass);
        if mass <= 0.0 {
            skipped.push(k);
            per_context.push(0.0);
            continue;
        }
        let term = clamp_information(mi_matrix(slice, rows, cols))?;
        per_context.push(term);
        value += mass * term;
    }
    Ok(ConditionalMi { value: clamp_information(value)?, per_context, context_mass, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probcore::Axis;
    use std::f64::consts::LN_2;

    // Frozen values computed by direct summation with a hand calculator script.
    const H_HALF_QUARTERS: f64 = 1.0397207708399179;
    const KL_THREE_QUARTERS: f64 = 0.13081203594113697;
    const BSC_01_MI: f64 = 0.3680642071684971;

    #[test]
    fn entropy_examples() {
        assert!((entropy(&Dist::uniform(2)) - LN_2).abs() < 1e-15);
        assert_eq!(entropy(&Dist::point(5, 3)), 0.0);
        let d = Dist::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!((entropy(&d) - H_HALF_QUARTERS).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        let p = Dist::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let a = Dist::new(vec![1.0, 0.0]).unwrap();
        assert!((kl_divergence(&a, &Dist::uniform(2)).unwrap() - LN_2).abs() < 1e-15);
        let b = Dist::new(vec![0.75, 0.25]).unwrap();
        assert!((kl_divergence(&b, &Dist::uniform(2)).unwrap() - KL_THREE_QUARTERS).abs() < 1e-15);
    }

    #[test]
    fn kl_absolute_continuity() {
        let err = kl_divergence(&Dist::uniform(2), &Dist::point(2, 0)).unwrap_err();
        assert!(matches!(err, Error::AbsoluteContinuity { index: 1, .. }));
        assert!(kl_divergence(&Dist::point(2, 0), &Dist::uniform(3)).is_err());
    }

    #[test]
    fn mi_examples() {
        let prod = JointTable::product(
            ("A", &Dist::new(vec![0.2, 0.8]).unwrap()),
            ("B", &Dist::new(vec![0.5, 0.3, 0.2]).unwrap()),
        )
        .unwrap();
        assert_eq!(mutual_information(&prod, "A", "B").unwrap(), 0.0);

        let id =
            JointTable::from_fn(
                vec![Axis::new("U", 4), Axis::new("V", 4)],
                |ix| {
                    if ix[0] == ix[1] {
                        0.25
                    } else {
                        0.0
                    }
                },
            )
            .unwrap();
        assert!((mutual_information(&id, "U", "V").unwrap() - 4f64.ln()).abs() < 1e-15);

        let bsc = JointTable::new(vec![Axis::new("X", 2), Axis::new("Y", 2)], vec![0.45, 0.05, 0.05, 0.45]).unwrap();
        assert!((mutual_information(&bsc, "X", "Y").unwrap() - BSC_01_MI).abs() < 1e-14);
        assert!(mutual_information(&bsc, "X", "Z").is_err());
    }

    #[test]
    fn conditional_mi_examples() {
        // context 0: identity coupling, context 1: product coupling
        let j = JointTable::from_fn(vec![Axis::new("A", 2), Axis::new("B", 2), Axis::new("C", 2)], |ix| match ix[2] {
            0 => {
                if ix[0] == ix[1] {
                    0.25
                } else {
                    0.0
                }
            }
            _ => 0.125,
        })
        .unwrap();
        let c = conditional_mi(&j, "A", "B", "C").unwrap();
        assert!((c.value - 0.5 * LN_2).abs() < 1e-15);
        assert!((c.per_context[0] - LN_2).abs() < 1e-15);
        assert_eq!(c.per_context[1], 0.0);
        assert!(c.skipped.is_empty());

        // constant context reduces to plain MI
        let bsc = JointTable::new(
            vec![Axis::new("X", 2), Axis::new("Y", 2), Axis::new("C", 1)],
            vec![0.45, 0.05, 0.05, 0.45],
        )
        .unwrap();
        let c = conditional_mi(&bsc, "X", "Y", "C").unwrap();
        assert!((c.value - mutual_information(&bsc, "X", "Y").unwrap()).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_contexts_skipped() {
        let j = JointTable::from_fn(vec![Axis::new("A", 2), Axis::new("B", 2), Axis::new("C", 3)], |ix| {
            if ix[2] == 1 {
                0.0
            } else {
                0.125
            }
        })
        .unwrap();
        let c = conditional_mi(&j, "A", "B", "C").unwrap();
        assert_eq!(c.skipped, vec![1]);
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn clamp_rule() {
        assert_eq!(clamp_information(-5e-13).unwrap(), 0.0);
        assert!(clamp_information(-1e-9).is_err());
    }
}
