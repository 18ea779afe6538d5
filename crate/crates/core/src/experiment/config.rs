use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{CascadeChannel, ChannelFamily, NoiseModel, StageFamilies};
use crate::codebook::{build_classification, build_mse_packing, build_ranking, lattice, Codebook};
use crate::error::{Error, Result};
use crate::probcore::{Dist, Kernel};

/// Environment variable overriding `output.dir`.
pub const OUT_DIR_ENV: &str = "CAPWALL_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub learner: LearnerSpec,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Sample size of the exhaustive information audit; omitted to skip it.
    #[serde(default)]
    pub audit_m: Option<usize>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_replicates() -> usize {
    200
}

fn default_delta() -> f64 {
    0.05
}

fn default_eta() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub codebook: CodebookSpec,
    #[serde(default = "default_context_law")]
    pub context_law: Vec<f64>,
    pub cascade: CascadeSpec,
    pub families: FamiliesSpec,
}

fn default_context_law() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodebookSpec {
    Classification {
        #[serde(rename = "M")]
        m: usize,
    },
    Ranking {
        n: usize,
    },
    /// Greedy packing of a `side^dims` lattice.
    Mse {
        dims: usize,
        side: usize,
        #[serde(default = "one")]
        spacing: f64,
        r: f64,
        tau: f64,
    },
    Inline {
        book: Codebook,
    },
}

fn one() -> f64 {
    1.0
}

/// The human channel. `noise` is the swept parameter: the cognitive flip
/// probability for `symmetric`, the articulation one for `bottleneck`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CascadeSpec {
    /// `H` and `Y` copy `U` with symmetric noise.
    Symmetric {
        cog_noise: f64,
        #[serde(default)]
        art_noise: f64,
    },
    /// `H = U mod cells`, then symmetric articulation noise.
    Bottleneck {
        cells: usize,
        #[serde(default)]
        art_noise: f64,
    },
    /// Per-context kernels.
    Explicit { cog: Vec<Kernel>, art: Vec<Kernel> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamiliesSpec {
    pub cog: FamilySpec,
    pub art: FamilySpec,
}

/// A channel family, or `exact`: the singleton holding the cascade's own kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Exact,
    Cardinality { k: usize },
    Enumerated { kernels: Vec<Kernel> },
    Parametric { model: NoiseModel, grid: Vec<f64> },
}

impl FamilySpec {
    pub fn resolve(&self, own: &Kernel) -> ChannelFamily {
        match self {
            FamilySpec::Exact => ChannelFamily::Enumerated { kernels: vec![own.clone()] },
            FamilySpec::Cardinality { k } => ChannelFamily::Cardinality { k: *k },
            FamilySpec::Enumerated { kernels } => ChannelFamily::Enumerated { kernels: kernels.clone() },
            FamilySpec::Parametric { model, grid } => ChannelFamily::Parametric { model: *model, grid: grid.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_m")]
    pub m: Vec<usize>,
    /// Defaults to the cascade's own noise.
    #[serde(default)]
    pub noise: Option<Vec<f64>>,
    /// Classification only; defaults to the codebook's `M`.
    #[serde(default, rename = "M")]
    pub m_book: Option<Vec<usize>>,
    #[serde(default = "default_lambda")]
    pub lambda: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { m: default_m(), noise: None, m_book: None, lambda: default_lambda() }
    }
}

fn default_m() -> Vec<usize> {
    vec![50]
}

fn default_lambda() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisSpec {
    /// Every decoder over the `(y, s)` grid.
    All,
    /// This many distinct decoders drawn with the config seed.
    Random(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Gibbs,
    MapSmoothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    #[serde(default = "default_hypotheses")]
    pub hypotheses: HypothesisSpec,
    #[serde(default = "default_rule")]
    pub rule: RuleKind,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    /// Quantize the posterior to this many representatives.
    #[serde(default)]
    pub compression_k: Option<usize>,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self {
            hypotheses: default_hypotheses(),
            rule: default_rule(),
            smoothing: default_smoothing(),
            compression_k: None,
        }
    }
}

fn default_hypotheses() -> HypothesisSpec {
    HypothesisSpec::Random(32)
}

fn default_rule() -> RuleKind {
    RuleKind::Gibbs
}

fn default_smoothing() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_stem")]
    pub stem: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir(), stem: default_stem() }
    }
}

fn default_dir() -> String {
    "out".into()
}

fn default_stem() -> String {
    "sweep".into()
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        if s.m.is_empty() {
            return Err(config_err("sweep.m", "axis must be nonempty"));
        }
        if let Some(i) = s.m.iter().position(|&m| m == 0) {
            return Err(config_err(format!("sweep.m[{i}]"), "sample size must be >= 1"));
        }
        if s.lambda.is_empty() {
            return Err(config_err("sweep.lambda", "axis must be nonempty"));
        }
        if let Some(i) = s.lambda.iter().position(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(config_err(format!("sweep.lambda[{i}]"), "lambda must be finite and >= 0"));
        }
        if let Some(noise) = &s.noise {
            if noise.is_empty() {
                return Err(config_err("sweep.noise", "axis must be nonempty"));
            }
            if matches!(self.instance.cascade, CascadeSpec::Explicit { .. }) {
                return Err(config_err("sweep.noise", "an explicit cascade has no noise parameter"));
            }
            if let Some(i) = noise.iter().position(|n| !(0.0..=1.0).contains(n)) {
                return Err(config_err(format!("sweep.noise[{i}]"), "noise must lie in [0, 1]"));
            }
        }
        if let Some(ms) = &s.m_book {
            if ms.is_empty() {
                return Err(config_err("sweep.M", "axis must be nonempty"));
            }
            if !matches!(self.instance.codebook, CodebookSpec::Classification { .. }) {
                return Err(config_err("sweep.M", "an M axis needs a classification codebook"));
            }
            if matches!(self.instance.cascade, CascadeSpec::Explicit { .. }) {
                return Err(config_err("sweep.M", "an explicit cascade fixes |U|"));
            }
            if let Some(i) = ms.iter().position(|&m| m < 2) {
                return Err(config_err(format!("sweep.M[{i}]"), "M must be >= 2"));
            }
        }
        if self.replicates == 0 {
            return Err(config_err("replicates", "need at least one replicate"));
        }
        for (name, v) in [("delta", self.delta), ("eta", self.eta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(config_err(name, "must lie in (0, 1)"));
            }
        }
        if self.delta + self.eta >= 1.0 {
            return Err(config_err("eta", "delta + eta must be < 1"));
        }
        if let Some(m) = self.audit_m {
            if !(1..=crate::learner::MAX_AUDIT_M).contains(&m) {
                return Err(config_err("audit_m", format!("must lie in [1, {}]", crate::learner::MAX_AUDIT_M)));
            }
        }
        if let HypothesisSpec::Random(0) = self.learner.hypotheses {
            return Err(config_err("learner.hypotheses.random", "need at least one hypothesis"));
        }
        if !(0.0..=1.0).contains(&self.learner.smoothing) {
            return Err(config_err("learner.smoothing", "must lie in [0, 1]"));
        }
        if self.learner.compression_k == Some(0) {
            return Err(config_err("learner.compression_k", "must be >= 1"));
        }
        Dist::new(self.instance.context_law.clone()).map_err(|e| config_err("instance.context_law", e.to_string()))?;
        // build the first grid point so structural errors surface now
        let p = self.grid().into_iter().next().expect("nonempty grid");
        self.codebook(p.m_book).map_err(|e| config_err("instance.codebook", e.to_string()))?;
        self.cascade(p.m_book, p.noise).map_err(|e| config_err("instance.cascade", e.to_string()))?;
        Ok(())
    }

    /// Output directory: the environment override, else `output.dir`.
    pub fn out_dir(&self) -> PathBuf {
        std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(&self.output.dir))
    }

    pub fn context_law(&self) -> Result<Dist> {
        Dist::new(self.instance.context_law.clone())
    }

    /// The codebook, with `M` overridden for classification.
    pub fn codebook(&self, m_book: Option<usize>) -> Result<Codebook> {
        match &self.instance.codebook {
            CodebookSpec::Classification { m } => build_classification(m_book.unwrap_or(*m)),
            CodebookSpec::Ranking { n } => build_ranking(*n),
            CodebookSpec::Mse { dims, side, spacing, r, tau } => {
                build_mse_packing(lattice(*dims, *side, *spacing), *r, *tau)
            }
            CodebookSpec::Inline { book } => Ok(book.clone()),
        }
    }

    fn own_noise(&self) -> Option<f64> {
        match self.instance.cascade {
            CascadeSpec::Symmetric { cog_noise, .. } => Some(cog_noise),
            CascadeSpec::Bottleneck { art_noise, .. } => Some(art_noise),
            CascadeSpec::Explicit { .. } => None,
        }
    }

    /// The cascade for a book of size `M` at the given noise.
    pub fn cascade(&self, m_book: Option<usize>, noise: Option<f64>) -> Result<CascadeChannel> {
        let m = self.codebook(m_book)?.m();
        let contexts = self.instance.context_law.len();
        match &self.instance.cascade {
            CascadeSpec::Symmetric { cog_noise, art_noise } => CascadeChannel::uniform_over_contexts(
                Kernel::symmetric(m, noise.unwrap_or(*cog_noise))?,
                Kernel::symmetric(m, *art_noise)?,
                contexts,
            ),
            CascadeSpec::Bottleneck { cells, art_noise } => {
                if *cells == 0 {
                    return Err(crate::error::invalid("bottleneck needs at least one cell"));
                }
                let map: Vec<usize> = (0..m).map(|u| u % cells).collect();
                CascadeChannel::uniform_over_contexts(
                    Kernel::deterministic(&map, *cells)?,
                    Kernel::symmetric(*cells, noise.unwrap_or(*art_noise))?,
                    contexts,
                )
            }
            CascadeSpec::Explicit { cog, art } => {
                let c = CascadeChannel::new(cog.clone(), art.clone())?;
                if c.contexts() != contexts {
                    return Err(Error::AlphabetMismatch(c.contexts(), contexts));
                }
                if c.u_size() != m {
                    return Err(Error::AlphabetMismatch(c.u_size(), m));
                }
                Ok(c)
            }
        }
    }

    /// Per-context families with `exact` resolved against `cascade`.
    pub fn families(&self, cascade: &CascadeChannel) -> Vec<StageFamilies> {
        (0..cascade.contexts())
            .map(|s| StageFamilies {
                cog: self.instance.families.cog.resolve(cascade.cog(s)),
                art: self.instance.families.art.resolve(cascade.art(s)),
            })
            .collect()
    }

    /// Grid points in row order: `M`, then noise, then lambda, then `m`.
    pub fn grid(&self) -> Vec<GridPoint> {
        let books: Vec<Option<usize>> = match &self.sweep.m_book {
            Some(v) => v.iter().map(|&m| Some(m)).collect(),
            None => vec![None],
        };
        let noises: Vec<Option<f64>> = match &self.sweep.noise {
            Some(v) => v.iter().map(|&n| Some(n)).collect(),
            None => vec![self.own_noise()],
        };
        let mut out = Vec::new();
        for &b in &books {
            for &n in &noises {
                for &lambda in &self.sweep.lambda {
                    for &m in &self.sweep.m {
                        out.push(GridPoint { index: out.len(), m_book: b, noise: n, lambda, m });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub m_book: Option<usize>,
    pub noise: Option<f64>,
    pub lambda: f64,
    pub m: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "instance": {
            "codebook": {"kind": "classification", "M": 4},
            "cascade": {"kind": "symmetric", "cog_noise": 0.1},
            "families": {"cog": {"kind": "cardinality", "k": 4}, "art": {"kind": "exact"}}
        }
    }"#;

    #[test]
    fn minimal_config_defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.replicates, 200);
        assert_eq!(c.learner.hypotheses, HypothesisSpec::Random(32));
        assert_eq!(c.grid().len(), 1);
        assert_eq!(c.grid()[0].noise, Some(0.1));
    }

    #[test]
    fn errors_name_the_field() {
        let bad = MINIMAL.replace(r#""M": 4"#, r#""M": "four""#);
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "instance.codebook"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"instance\"", "\"sweep\": {\"m\": [10, 0]}, \"instance\"");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "sweep.m[1]"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"instance\"", "\"delta\": 1.5, \"instance\"");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config { .. })));
        let bad = MINIMAL.replace("\"instance\"", "\"typo\": 1, \"instance\"");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config { .. })));
    }

    #[test]
    fn grid_order() {
        let text = MINIMAL.replace(
            "\"instance\"",
            r#""sweep": {"m": [10, 20], "noise": [0.0, 0.5], "M": [2, 3], "lambda": [1.0]}, "instance""#,
        );
        let c = ExperimentConfig::from_json(&text).unwrap();
        let g = c.grid();
        assert_eq!(g.len(), 8);
        assert_eq!((g[0].m_book, g[0].noise, g[0].m), (Some(2), Some(0.0), 10));
        assert_eq!((g[1].m_book, g[1].noise, g[1].m), (Some(2), Some(0.0), 20));
        assert_eq!((g[7].m_book, g[7].noise, g[7].m), (Some(3), Some(0.5), 20));
        assert_eq!(c.cascade(Some(3), Some(0.5)).unwrap().u_size(), 3);
    }

    #[test]
    fn explicit_cascade_checked() {
        let text = MINIMAL.replace(
            r#"{"kind": "symmetric", "cog_noise": 0.1}"#,
            r#"{"kind": "explicit", "cog": [[[1,0],[0,1]]], "art": [[[1,0],[0,1]]]}"#,
        );
        // |U| = 2 against M = 4
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config { .. })));
    }
}
