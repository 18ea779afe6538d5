use rand::Rng;
use serde::{Deserialize, Serialize};

use super::book::Codebook;
use crate::bounds::{fano_floor, FloorInputs};
use crate::channel::CascadeChannel;
use crate::error::{invalid, Error, Result};
use crate::probcore::{conditional_mi, entropy, mutual_information, Axis, Dist, JointTable};

/// Codebook mixture: `J ~ Uniform[M]` independent of `S ~ context_law`, and
/// `U = u^(J)`.
///
/// Prototypes are distinct and context-free, so the `U` axis is indexed by
/// codeword: `U = i` stands for the value `u^(i)`. Cascades attached to a
/// mixture therefore have `|U| = M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureInstance {
    pub codebook: Codebook,
    pub context_law: Dist,
}

pub fn mixture(codebook: Codebook, context_law: Dist) -> Result<MixtureInstance> {
    let mix = MixtureInstance { codebook, context_law };
    // alphabet limits are enforced by the joint constructor
    mix.joint_jus()?;
    Ok(mix)
}

impl MixtureInstance {
    pub fn m(&self) -> usize {
        self.codebook.m()
    }

    pub fn contexts(&self) -> usize {
        self.context_law.alphabet_size()
    }

    /// `P(U, S)`.
    pub fn source(&self) -> Result<JointTable> {
        JointTable::product(("U", &Dist::uniform(self.m())), ("S", &self.context_law))
    }

    /// `P(J, U, S)`; `U` equals `J` on the codeword-indexed alphabet.
    pub fn joint_jus(&self) -> Result<JointTable> {
        let m = self.m();
        let axes = vec![Axis::new("J", m), Axis::new("U", m), Axis::new("S", self.contexts())];
        JointTable::from_fn(axes, |ix| if ix[0] == ix[1] { self.context_law.mass(ix[2]) / m as f64 } else { 0.0 })
    }

    /// `H(J | S)`, which is `ln M` by construction.
    pub fn index_entropy_given_context(&self) -> Result<f64> {
        let j = self.joint_jus()?;
        let hjs = entropy(&Dist::new(j.marginal(&["J", "S"])?.masses().to_vec())?);
        Ok(hjs - entropy(&self.context_law))
    }

    /// `I(J; S)`, zero by construction.
    pub fn index_context_information(&self) -> Result<f64> {
        mutual_information(&self.joint_jus()?, "J", "S")
    }

    /// `loss(U = u, a)`.
    pub fn loss(&self, u: usize, a: usize) -> f64 {
        self.codebook.codeword_loss(u, a)
    }

    pub(crate) fn check_cascade(&self, cascade: &CascadeChannel) -> Result<()> {
        if cascade.u_size() != self.m() {
            return Err(Error::AlphabetMismatch(cascade.u_size(), self.m()));
        }
        if cascade.contexts() != self.contexts() {
            return Err(Error::AlphabetMismatch(cascade.contexts(), self.contexts()));
        }
        Ok(())
    }

    /// `P(U, S, Y)` through `cascade`.
    pub fn joint_usy(&self, cascade: &CascadeChannel) -> Result<JointTable> {
        self.check_cascade(cascade)?;
        cascade.joint_usy(&self.source()?)
    }

    /// `I(U; Y | S)`.
    pub fn info(&self, cascade: &CascadeChannel) -> Result<f64> {
        Ok(conditional_mi(&self.joint_usy(cascade)?, "U", "Y", "S")?.value)
    }

    /// Fano floor at the exact `I(U;Y|S)`.
    pub fn exact_floor(&self, cascade: &CascadeChannel) -> Result<f64> {
        let b = &self.codebook;
        fano_floor(&FloorInputs::new(b.m(), b.delta(), b.epsilon(), self.info(cascade)?)?)
    }
}

/// Deterministic decoder `pi(y, s)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecoderTable {
    y_size: usize,
    s_size: usize,
    /// Row-major over `(y, s)`.
    actions: Vec<usize>,
}

impl DecoderTable {
    pub fn new(y_size: usize, s_size: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != y_size * s_size || actions.is_empty() {
            return Err(invalid(format!(
                "decoder table needs {} entries for a {y_size} x {s_size} grid, got {}",
                y_size * s_size,
                actions.len()
            )));
        }
        Ok(Self { y_size, s_size, actions })
    }

    pub fn from_fn(y_size: usize, s_size: usize, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let actions = (0..y_size * s_size).map(|k| f(k / s_size, k % s_size)).collect();
        Self { y_size, s_size, actions }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, y_size: usize, s_size: usize, action_count: usize) -> Self {
        Self::from_fn(y_size, s_size, |_, _| rng.random_range(0..action_count))
    }

    pub fn act(&self, y: usize, s: usize) -> usize {
        self.actions[y * self.s_size + s]
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn s_size(&self) -> usize {
        self.s_size
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    fn check(&self, cascade: &CascadeChannel, action_count: usize) -> Result<()> {
        if self.y_size != cascade.y_size() || self.s_size != cascade.contexts() {
            return Err(invalid("decoder grid does not match the cascade's (Y, S) alphabet"));
        }
        if let Some(&a) = self.actions.iter().find(|&&a| a >= action_count) {
            return Err(invalid(format!("decoder emits action {a} outside the action alphabet")));
        }
        Ok(())
    }
}

/// `R(pi) = E[loss(U, pi(Y, S))]` by exact summation.
pub fn true_risk(mix: &MixtureInstance, cascade: &CascadeChannel, pi: &DecoderTable) -> Result<f64> {
    pi.check(cascade, mix.codebook.action_count())?;
    let j = mix.joint_usy(cascade)?;
    let (m, s_n, y_n) = (mix.m(), cascade.contexts(), cascade.y_size());
    let mut risk = 0.0;
    for u in 0..m {
        for s in 0..s_n {
            for y in 0..y_n {
                let p = j.mass(&[u, s, y]);
                if p > 0.0 {
                    risk += p * mix.loss(u, pi.act(y, s));
                }
            }
        }
    }
    Ok(risk)
}

/// `P{phi(pi(Y, S)) != J}`.
pub fn index_error(mix: &MixtureInstance, cascade: &CascadeChannel, pi: &DecoderTable) -> Result<f64> {
    pi.check(cascade, mix.codebook.action_count())?;
    let j = mix.joint_usy(cascade)?;
    let mut err = 0.0;
    for u in 0..mix.m() {
        for s in 0..cascade.contexts() {
            for y in 0..cascade.y_size() {
                if mix.codebook.decode(pi.act(y, s)) != u {
                    err += j.mass(&[u, s, y]);
                }
            }
        }
    }
    Ok(err)
}

/// `loss*(y, s, a) = E[loss(U, a) | Y = y, S = s]`; `None` on zero-mass cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableLoss {
    pub y_size: usize,
    pub s_size: usize,
    pub action_count: usize,
    /// `P(y, s)`, row-major over `(y, s)`.
    pub cell_mass: Vec<f64>,
    /// Per `(y, s)` cell, the loss of every action.
    pub cells: Vec<Option<Vec<f64>>>,
}

impl ObservableLoss {
    pub fn get(&self, y: usize, s: usize, a: usize) -> Result<f64> {
        self.cells[y * self.s_size + s].as_ref().map(|row| row[a]).ok_or(Error::UndefinedCell { y, s })
    }

    pub fn is_defined(&self, y: usize, s: usize) -> bool {
        self.cells[y * self.s_size + s].is_some()
    }

    /// `E[loss*(Y, S, pi(Y, S))]`, undefined cells excluded.
    pub fn risk(&self, pi: &DecoderTable) -> f64 {
        let mut r = 0.0;
        for y in 0..self.y_size {
            for s in 0..self.s_size {
                if let Some(row) = &self.cells[y * self.s_size + s] {
                    r += self.cell_mass[y * self.s_size + s] * row[pi.act(y, s)];
                }
            }
        }
        r
    }

    /// The risk-minimizing action per defined cell (ties to the lowest
    /// action); 0 on undefined cells.
    pub fn bayes_decoder(&self) -> DecoderTable {
        DecoderTable::from_fn(self.y_size, self.s_size, |y, s| {
            self.cells[y * self.s_size + s].as_ref().map_or(0, |row| {
                let mut best = 0;
                for a in 1..row.len() {
                    if row[a] < row[best] {
                        best = a;
                    }
                }
                best
            })
        })
    }
}

/// Posterior-expected loss table by exact Bayes on the mixture and cascade.
pub fn canonical_observable_loss(mix: &MixtureInstance, cascade: &CascadeChannel) -> Result<ObservableLoss> {
    let j = mix.joint_usy(cascade)?;
    let (m, s_n, y_n) = (mix.m(), cascade.contexts(), cascade.y_size());
    let actions = mix.codebook.action_count();
    let mut cell_mass = Vec::with_capacity(y_n * s_n);
    let mut cells = Vec::with_capacity(y_n * s_n);
    for y in 0..y_n {
        for s in 0..s_n {
            let w: Vec<f64> = (0..m).map(|u| j.mass(&[u, s, y])).collect();
            let mass: f64 = w.iter().sum();
            cell_mass.push(mass);
            if mass <= 0.0 {
                cells.push(None);
                continue;
            }
            let row = (0..actions)
                .map(|a| {
                    let v: f64 = (0..m).map(|u| w[u] * mix.loss(u, a)).sum::<f64>() / mass;
                    v.clamp(0.0, 1.0)
                })
                .collect();
            cells.push(Some(row));
        }
    }
    Ok(ObservableLoss { y_size: y_n, s_size: s_n, action_count: actions, cell_mass, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerCheck {
    pub observable_risk: f64,
    pub true_risk: f64,
    pub gap: f64,
}

/// Compares `E[loss*(Y, S, pi)]` with `E[loss(U, pi)]` for one decoder.
pub fn tower_check(
    mix: &MixtureInstance,
    cascade: &CascadeChannel,
    obs: &ObservableLoss,
    pi: &DecoderTable,
) -> Result<TowerCheck> {
    let true_risk = true_risk(mix, cascade, pi)?;
    let observable_risk = obs.risk(pi);
    Ok(TowerCheck { observable_risk, true_risk, gap: (observable_risk - true_risk).abs() })
}

/// Measured soft-link slack of a decoder and the floors it adjusts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLink {
    /// `P(G^c | E)` with `E = {phi(pi) != J}` and `G = {loss(u_J, pi) >= eps + Delta}`.
    pub zeta: f64,
    /// `P(E)`.
    pub error_mass: f64,
    /// `P(E and G^c)`.
    pub bad_mass: f64,
    pub info: f64,
    pub exact_floor: f64,
    /// `exact_floor - zeta`; may be negative.
    pub additive_floor: f64,
    /// `exact_floor * (1 - zeta)`.
    pub multiplicative_floor: f64,
    /// True risk of the decoder.
    pub risk: f64,
    pub diagnostic: Option<String>,
}

/// Measures `zeta` under the decoder's own action law by exact enumeration.
pub fn soft_link_slack(mix: &MixtureInstance, pi: &DecoderTable, cascade: &CascadeChannel) -> Result<SoftLink> {
    pi.check(cascade, mix.codebook.action_count())?;
    let j = mix.joint_usy(cascade)?;
    let margin = mix.codebook.margin();
    let (mut error_mass, mut bad_mass) = (0.0, 0.0);
    for u in 0..mix.m() {
        for s in 0..cascade.contexts() {
            for y in 0..cascade.y_size() {
                let p = j.mass(&[u, s, y]);
                let a = pi.act(y, s);
                if p > 0.0 && mix.codebook.decode(a) != u {
                    error_mass += p;
                    if mix.loss(u, a) < margin {
                        bad_mass += p;
                    }
                }
            }
        }
    }
    let (zeta, diagnostic) = if error_mass > 0.0 {
        (bad_mass / error_mass, None)
    } else {
        (0.0, Some("decoder never misindexes; zeta set to 0".to_string()))
    };
    let info = mix.info(cascade)?;
    let exact_floor = fano_floor(&FloorInputs::new(mix.m(), mix.codebook.delta(), mix.codebook.epsilon(), info)?)?;
    Ok(SoftLink {
        zeta,
        error_mass,
        bad_mass,
        info,
        exact_floor,
        additive_floor: exact_floor - zeta,
        multiplicative_floor: exact_floor * (1.0 - zeta),
        risk: true_risk(mix, cascade, pi)?,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{build_classification, build_mse_packing, lattice};
    use crate::probcore::Kernel;
    use rand::SeedableRng;

    fn noiseless(m: usize, s: usize) -> CascadeChannel {
        CascadeChannel::uniform_over_contexts(Kernel::identity(m), Kernel::identity(m), s).unwrap()
    }

    fn bsc(flip: f64) -> CascadeChannel {
        CascadeChannel::uniform_over_contexts(Kernel::symmetric(2, flip).unwrap(), Kernel::identity(2), 1).unwrap()
    }

    #[test]
    fn mixture_basics() {
        let mix = mixture(build_classification(2).unwrap(), Dist::uniform(1)).unwrap();
        assert_eq!(mix.source().unwrap().marginal_dist("U").unwrap().masses(), &[0.5, 0.5]);
        let mix4 = mixture(build_classification(4).unwrap(), Dist::new(vec![0.3, 0.7]).unwrap()).unwrap();
        assert!((mix4.index_entropy_given_context().unwrap() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(mix4.index_context_information().unwrap(), 0.0);
    }

    #[test]
    fn noiseless_observable_loss_is_pointwise() {
        let mix = mixture(build_classification(3).unwrap(), Dist::uniform(2)).unwrap();
        let c = noiseless(3, 2);
        let obs = canonical_observable_loss(&mix, &c).unwrap();
        for y in 0..3 {
            for s in 0..2 {
                for a in 0..3 {
                    assert_eq!(obs.get(y, s, a).unwrap(), mix.loss(y, a));
                }
            }
        }
        let pi = obs.bayes_decoder();
        assert_eq!(true_risk(&mix, &c, &pi).unwrap(), 0.0);
    }

    #[test]
    fn uninformative_is_half() {
        let mix = mixture(build_classification(2).unwrap(), Dist::uniform(1)).unwrap();
        let c = CascadeChannel::uniform_over_contexts(Kernel::constant(2, &Dist::point(2, 0)), Kernel::identity(2), 1)
            .unwrap();
        let obs = canonical_observable_loss(&mix, &c).unwrap();
        assert_eq!(obs.get(0, 0, 0).unwrap(), 0.5);
        assert_eq!(obs.get(0, 0, 1).unwrap(), 0.5);
        assert!(matches!(obs.get(1, 0, 0), Err(Error::UndefinedCell { y: 1, s: 0 })));
    }

    #[test]
    fn tower_identity_bsc() {
        let mix = mixture(build_classification(2).unwrap(), Dist::uniform(1)).unwrap();
        let c = bsc(0.1);
        let obs = canonical_observable_loss(&mix, &c).unwrap();
        for pi in [vec![0, 1], vec![1, 0], vec![0, 0]] {
            let pi = DecoderTable::new(2, 1, pi).unwrap();
            let t = tower_check(&mix, &c, &obs, &pi).unwrap();
            assert!(t.gap < 1e-12);
        }
        // identity decoder errs exactly with the flip probability
        let id = DecoderTable::new(2, 1, vec![0, 1]).unwrap();
        assert!((true_risk(&mix, &c, &id).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn tower_identity_random_decoders() {
        let book = build_mse_packing(lattice(1, 7, 1.0), 2.0, 3.0).unwrap();
        let mix = mixture(book, Dist::new(vec![0.25, 0.75]).unwrap()).unwrap();
        let m = mix.m();
        let c = CascadeChannel::new(
            vec![Kernel::symmetric(m, 0.2).unwrap(), Kernel::symmetric(m, 0.4).unwrap()],
            vec![Kernel::identity(m), Kernel::symmetric(m, 0.1).unwrap()],
        )
        .unwrap();
        let obs = canonical_observable_loss(&mix, &c).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let pi = DecoderTable::random(&mut rng, m, 2, mix.codebook.action_count());
            assert!(tower_check(&mix, &c, &obs, &pi).unwrap().gap < 1e-9);
        }
    }

    #[test]
    fn soft_link_exact_book() {
        let mix = mixture(build_classification(4).unwrap(), Dist::uniform(1)).unwrap();
        let c =
            CascadeChannel::uniform_over_contexts(Kernel::symmetric(4, 0.3).unwrap(), Kernel::identity(4), 1).unwrap();
        let pi = DecoderTable::new(4, 1, vec![0, 1, 2, 3]).unwrap();
        let sl = soft_link_slack(&mix, &pi, &c).unwrap();
        assert_eq!(sl.zeta, 0.0);
        assert_eq!(sl.additive_floor, sl.exact_floor);
        assert_eq!(sl.multiplicative_floor, sl.exact_floor);
        assert!(sl.risk >= sl.exact_floor);
    }

    #[test]
    fn soft_link_empty_event() {
        let mix = mixture(build_classification(2).unwrap(), Dist::uniform(1)).unwrap();
        let pi = DecoderTable::new(2, 1, vec![0, 1]).unwrap();
        let sl = soft_link_slack(&mix, &pi, &noiseless(2, 1)).unwrap();
        assert_eq!(sl.zeta, 0.0);
        assert!(sl.diagnostic.is_some());
    }

    #[test]
    fn soft_link_pathological_zeta_one() {
        // declared margin 1 on a grid where every misdecoded action is close
        let book = build_mse_packing(lattice(1, 4, 1.0), 2.0, 2.0).unwrap().with_margins(0.0, 1.0);
        let mix = mixture(book, Dist::uniform(1)).unwrap();
        let c = CascadeChannel::uniform_over_contexts(Kernel::identity(2), Kernel::identity(2), 1).unwrap();
        // always answer the midpoint 1, which decodes to codeword 0
        let pi = DecoderTable::new(2, 1, vec![1, 1]).unwrap();
        let sl = soft_link_slack(&mix, &pi, &c).unwrap();
        assert_eq!(sl.zeta, 1.0);
        assert_eq!(sl.multiplicative_floor, 0.0);
    }
}
