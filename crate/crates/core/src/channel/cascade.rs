use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::probcore::{mi_matrix, Axis, Dist, JointTable, Kernel};

/// Tolerance of the data-processing checks.
pub const DPI_TOL: f64 = 1e-9;

/// Two-stage human channel: `p(h | u, s)` then `p(y | h, s)`, one kernel pair
/// per context. `y` depends on `u` only through `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCascade")]
pub struct CascadeChannel {
    cog: Vec<Kernel>,
    art: Vec<Kernel>,
}

#[derive(Deserialize)]
struct RawCascade {
    cog: Vec<Kernel>,
    art: Vec<Kernel>,
}

impl TryFrom<RawCascade> for CascadeChannel {
    type Error = Error;

    fn try_from(raw: RawCascade) -> Result<Self> {
        CascadeChannel::new(raw.cog, raw.art)
    }
}

impl CascadeChannel {
    pub fn new(cog: Vec<Kernel>, art: Vec<Kernel>) -> Result<Self> {
        if cog.is_empty() || cog.len() != art.len() {
            return Err(invalid(format!(
                "cascade needs one cognitive and one articulation kernel per context (got {} and {})",
                cog.len(),
                art.len()
            )));
        }
        let (u, h, y) = (cog[0].rows(), cog[0].cols(), art[0].cols());
        for (s, (c, a)) in cog.iter().zip(&art).enumerate() {
            if c.rows() != u || c.cols() != h || a.rows() != h || a.cols() != y {
                return Err(invalid(format!(
                    "context {s}: kernel shapes {}x{} and {}x{} do not match |U|={u}, |H|={h}, |Y|={y}",
                    c.rows(),
                    c.cols(),
                    a.rows(),
                    a.cols()
                )));
            }
        }
        Ok(Self { cog, art })
    }

    /// The same kernel pair in every one of `contexts` contexts.
    pub fn uniform_over_contexts(cog: Kernel, art: Kernel, contexts: usize) -> Result<Self> {
        Self::new(vec![cog; contexts], vec![art; contexts])
    }

    pub fn contexts(&self) -> usize {
        self.cog.len()
    }

    pub fn u_size(&self) -> usize {
        self.cog[0].rows()
    }

    pub fn h_size(&self) -> usize {
        self.cog[0].cols()
    }

    pub fn y_size(&self) -> usize {
        self.art[0].cols()
    }

    pub fn cog(&self, s: usize) -> &Kernel {
        &self.cog[s]
    }

    pub fn art(&self, s: usize) -> &Kernel {
        &self.art[s]
    }

    /// End-to-end kernel `p(y | u, s)`.
    pub fn end_to_end(&self, s: usize) -> Kernel {
        self.cog[s].compose(&self.art[s]).expect("shapes checked at construction")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("cascade serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_source(&self, source: &JointTable) -> Result<JointTable> {
        let us = source.marginal(&["U", "S"])?;
        let sizes = us.sizes();
        if sizes[0] != self.u_size() {
            return Err(Error::AlphabetMismatch(sizes[0], self.u_size()));
        }
        if sizes[1] != self.contexts() {
            return Err(Error::AlphabetMismatch(sizes[1], self.contexts()));
        }
        Ok(us)
    }

    /// Full joint over axes `U, S, H, Y`.
    pub fn joint(&self, source: &JointTable) -> Result<JointTable> {
        let us = self.check_source(source)?;
        let axes = vec![
            Axis::new("U", self.u_size()),
            Axis::new("S", self.contexts()),
            Axis::new("H", self.h_size()),
            Axis::new("Y", self.y_size()),
        ];
        JointTable::from_fn(axes, |ix| {
            us.mass(&ix[..2]) * self.cog[ix[1]].get(ix[0], ix[2]) * self.art[ix[1]].get(ix[2], ix[3])
        })
    }

    /// Joint over axes `U, S, Y` (the hidden stage summed out).
    pub fn joint_usy(&self, source: &JointTable) -> Result<JointTable> {
        let us = self.check_source(source)?;
        let ends: Vec<Kernel> = (0..self.contexts()).map(|s| self.end_to_end(s)).collect();
        let axes = vec![Axis::new("U", self.u_size()), Axis::new("S", self.contexts()), Axis::new("Y", self.y_size())];
        JointTable::from_fn(axes, |ix| us.mass(&ix[..2]) * ends[ix[1]].get(ix[0], ix[2]))
    }
}

/// Conditional source law `P(U | S = s)`, or `None` for a zero-mass context.
pub fn source_given_context(source: &JointTable, s: usize) -> Result<Option<Dist>> {
    let us = source.marginal(&["U", "S"])?;
    let u = us.sizes()[0];
    let col: Vec<f64> = (0..u).map(|i| us.mass(&[i, s])).collect();
    let mass: f64 = col.iter().sum();
    if mass <= 0.0 {
        return Ok(None);
    }
    Dist::from_weights(col).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpiContext {
    pub context: usize,
    pub mass: f64,
    pub i_uy: f64,
    pub i_uh: f64,
    pub i_hy: f64,
    /// `min(I(U;H|s), I(H;Y|s)) - I(U;Y|s)`.
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpiReport {
    pub contexts: Vec<DpiContext>,
    /// `I(U;Y|S)`.
    pub i_uy_given_s: f64,
    /// `sum_s P(s) min(I(U;H|s), I(H;Y|s))`.
    pub averaged_bound: f64,
    pub averaged_holds: bool,
    pub all_hold: bool,
}

/// Checks `I(U;Y|S=s) <= min(I(U;H|S=s), I(H;Y|S=s))` in every context, and
/// the averaged form.
pub fn verify_cascade_dpi(cascade: &CascadeChannel, source: &JointTable) -> Result<DpiReport> {
    let s_law = cascade.check_source(source)?.marginal_dist("S")?;
    let mut contexts = Vec::with_capacity(cascade.contexts());
    let (mut i_avg, mut bound_avg) = (0.0, 0.0);
    for s in 0..cascade.contexts() {
        let mass = s_law.mass(s);
        let Some(pu) = source_given_context(source, s)? else {
            contexts.push(DpiContext { context: s, mass, i_uy: 0.0, i_uh: 0.0, i_hy: 0.0, slack: 0.0, holds: true });
            continue;
        };
        let cog = cascade.cog(s);
        let art = cascade.art(s);
        let end = cascade.end_to_end(s);
        let i_uh = mi_matrix(&cog.joint_with(&pu)?, cog.rows(), cog.cols());
        let ph = cog.push(&pu)?;
        let i_hy = mi_matrix(&art.joint_with(&ph)?, art.rows(), art.cols());
        let i_uy = mi_matrix(&end.joint_with(&pu)?, end.rows(), end.cols());
        let bound = i_uh.min(i_hy);
        let slack = bound - i_uy;
        i_avg += mass * i_uy;
        bound_avg += mass * bound;
        contexts.push(DpiContext { context: s, mass, i_uy, i_uh, i_hy, slack, holds: slack >= -DPI_TOL });
    }
    let averaged_holds = i_avg <= bound_avg + DPI_TOL;
    let all_hold = averaged_holds && contexts.iter().all(|c| c.holds);
    Ok(DpiReport { contexts, i_uy_given_s: i_avg, averaged_bound: bound_avg, averaged_holds, all_hold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probcore::conditional_mi;
    use rand::{Rng, SeedableRng};

    fn uniform_source(u: usize, s: usize) -> JointTable {
        JointTable::product(("U", &Dist::uniform(u)), ("S", &Dist::uniform(s))).unwrap()
    }

    fn random_kernel(rng: &mut impl Rng, rows: usize, cols: usize) -> Kernel {
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                let w: Vec<f64> = (0..cols).map(|_| rng.random::<f64>().powi(3)).collect();
                Dist::from_weights(w).unwrap().masses().to_vec()
            })
            .collect();
        Kernel::new(data).unwrap()
    }

    #[test]
    fn identity_cascade_is_tight() {
        let c = CascadeChannel::uniform_over_contexts(Kernel::identity(3), Kernel::identity(3), 2).unwrap();
        let r = verify_cascade_dpi(&c, &uniform_source(3, 2)).unwrap();
        for ctx in &r.contexts {
            assert!(ctx.slack.abs() < 1e-15);
            assert!((ctx.i_uy - 3f64.ln()).abs() < 1e-15);
        }
        assert!(r.all_hold);
    }

    #[test]
    fn constant_articulation_kills_information() {
        let c = CascadeChannel::uniform_over_contexts(Kernel::identity(3), Kernel::constant(3, &Dist::uniform(2)), 1)
            .unwrap();
        let r = verify_cascade_dpi(&c, &uniform_source(3, 1)).unwrap();
        assert_eq!(r.i_uy_given_s, 0.0);
        assert!(r.all_hold);
    }

    #[test]
    fn random_cascades_pass_and_agree_with_joint() {
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (u, h, y, s) =
                (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
            let cog = (0..s).map(|_| random_kernel(&mut rng, u, h)).collect();
            let art = (0..s).map(|_| random_kernel(&mut rng, h, y)).collect();
            let c = CascadeChannel::new(cog, art).unwrap();
            let w: Vec<f64> = (0..u * s).map(|_| rng.random::<f64>()).collect();
            let src = JointTable::new(
                vec![Axis::new("U", u), Axis::new("S", s)],
                Dist::from_weights(w).unwrap().masses().to_vec(),
            )
            .unwrap();
            let r = verify_cascade_dpi(&c, &src).unwrap();
            assert!(r.all_hold, "seed {seed}");
            let full = c.joint(&src).unwrap();
            let direct = conditional_mi(&full, "U", "Y", "S").unwrap().value;
            assert!((direct - r.i_uy_given_s).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let err = CascadeChannel::new(
            vec![Kernel::identity(2), Kernel::identity(3)],
            vec![Kernel::identity(2), Kernel::identity(3)],
        );
        assert!(err.is_err());
        assert!(CascadeChannel::new(vec![Kernel::identity(2)], vec![]).is_err());
    }

    #[test]
    fn hash_is_stable() {
        let c = CascadeChannel::uniform_over_contexts(Kernel::identity(2), Kernel::identity(2), 1).unwrap();
        assert_eq!(c.hash(), c.clone().hash());
        assert_eq!(c.hash().len(), 64);
        let d =
            CascadeChannel::uniform_over_contexts(Kernel::identity(2), Kernel::symmetric(2, 0.1).unwrap(), 1).unwrap();
        assert_ne!(c.hash(), d.hash());
    }
}
