use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GridPoint, HypothesisSpec, RuleKind};
use crate::bounds::{fano_floor, kl_budget, lifted_ceiling, pacbayes_ceiling, CeilingInputs, FloorInputs};
use crate::channel::{sample_dataset, total_capacity, ArticulationInput, CapacityReport, CascadeChannel};
use crate::codebook::{canonical_observable_loss, mixture, MixtureInstance, ObservableLoss};
use crate::error::{Error, Result};
use crate::learner::{
    all_decoders, bayes_optimal_decoder, enumerate_information, random_decoders, residual_bound_in_use,
    summarize_posterior, CompressedLearner, EnumeratedLearner, InfoAudit, Learner, PosteriorRule, ResidualMechanism,
};
use crate::probcore::{kl_divergence, mutual_information, Dist, JointTable};
use crate::rng::derive;

/// First line of every CSV file.
pub const CSV_VERSION: &str = "# capwall sweep v1";
/// Slack allowed on the floor-below-risk gates.
pub const SOUNDNESS_TOL: f64 = 1e-9;
/// Stream of the config seed that draws the random hypothesis class.
pub(crate) const HYPOTHESIS_STREAM: u64 = 1 << 40;
/// Stream of the config seed that seeds the quantizer.
pub(crate) const QUANTIZER_STREAM: u64 = (1 << 40) + 1;

/// A mixture, its cascade, and the quantities every grid point needs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mix: MixtureInstance,
    pub cascade: CascadeChannel,
    pub source: JointTable,
    pub capacity: CapacityReport,
    /// Every concrete stage kernel lies in its family.
    pub matched: bool,
    pub obs: ObservableLoss,
}

impl Instance {
    pub fn new(cfg: &ExperimentConfig, m_book: Option<usize>, noise: Option<f64>) -> Result<Self> {
        let mix = mixture(cfg.codebook(m_book)?, cfg.context_law()?)?;
        let cascade = cfg.cascade(m_book, noise)?;
        let source = mix.source()?;
        let families = cfg.families(&cascade);
        let capacity = total_capacity(&families, &source, ArticulationInput::Cascade(&cascade))?;
        let matched = families
            .iter()
            .enumerate()
            .all(|(s, f)| f.cog.contains(cascade.cog(s), 1e-9) && f.art.contains(cascade.art(s), 1e-9));
        let obs = canonical_observable_loss(&mix, &cascade)?;
        Ok(Self { mix, cascade, source, capacity, matched, obs })
    }

    pub fn cbar(&self) -> f64 {
        self.capacity.average
    }

    /// Fano floor at `info` for this codebook.
    pub fn floor_at(&self, info: f64) -> Result<f64> {
        let b = &self.mix.codebook;
        fano_floor(&FloorInputs::new(b.m(), b.delta(), b.epsilon(), info)?)
    }

    /// The configured learner at inverse temperature `lambda`.
    pub fn learner(&self, cfg: &ExperimentConfig, lambda: f64) -> Result<EnumeratedLearner> {
        let (y, s, a) = (self.cascade.y_size(), self.cascade.contexts(), self.mix.codebook.action_count());
        let hs = match cfg.learner.hypotheses {
            HypothesisSpec::All => all_decoders(y, s, a)?,
            HypothesisSpec::Random(n) => {
                let space = (a as f64).powi((y * s) as i32);
                random_decoders(y, s, a, n.min(space as usize), derive(cfg.seed, HYPOTHESIS_STREAM))?
            }
        };
        let rule = match cfg.learner.rule {
            RuleKind::Gibbs => PosteriorRule::Gibbs { lambda },
            RuleKind::MapSmoothing => PosteriorRule::MapSmoothing { lambda, smoothing: cfg.learner.smoothing },
        };
        EnumeratedLearner::uniform(hs, rule)
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub loss_kind: String,
    #[serde(rename = "M")]
    pub m_book: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub noise: Option<f64>,
    pub lambda: f64,
    pub m: usize,
    pub seed: u64,
    pub contexts: usize,
    pub y_size: usize,
    pub hypotheses: usize,
    /// `I(U;Y|S)`.
    pub info: f64,
    pub cbar: f64,
    pub capacity_label: String,
    /// `I(U;S)`.
    pub ius: f64,
    pub matched: bool,
    pub floor_exact: f64,
    pub floor_capacity: f64,
    pub bayes_risk: f64,
    pub bayes_index_error: f64,
    /// Replicate means of the posterior's empirical and exact observable
    /// risk, its KL to the prior, and the ceiling.
    pub emp_risk: f64,
    pub obs_risk: f64,
    pub kl: f64,
    pub ceiling: f64,
    pub replicates: usize,
    /// Fraction of replicates with `E_P[R_obs] <= ceiling`.
    pub coverage: f64,
    pub lifted_ceiling: f64,
    pub lifted_coverage: f64,
    pub rho: f64,
    pub rho_mechanism: ResidualMechanism,
    /// `KL(mean posterior || Q)`, estimated from the replicates.
    pub kl_prior: f64,
    pub budget: f64,
    pub audit: Option<InfoAudit>,
    pub checks: RowChecks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowChecks {
    /// `floor_exact <= bayes_risk`.
    pub converse: bool,
    /// `floor_capacity <= bayes_risk`; only asserted on matched instances.
    pub capacity_floor: Option<bool>,
    /// Violation rate within `delta + 3 sqrt(delta (1 - delta) / N)`.
    pub coverage: bool,
    /// Violation rate of the lifted ceiling within `delta + eta` plus the same allowance.
    pub lifted_coverage: bool,
    /// Mean KL within the expected-KL budget.
    pub budget: bool,
    pub audit: Option<bool>,
}

impl RowChecks {
    pub fn all_pass(&self) -> bool {
        self.converse
            && self.capacity_floor.unwrap_or(true)
            && self.coverage
            && self.lifted_coverage
            && self.budget
            && self.audit.unwrap_or(true)
    }
}

/// A grid point that raised an error instead of producing a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub point: GridPoint,
    pub resource_limit: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

impl Check {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), passed: 0, failed: 0, failures: Vec::new() }
    }

    pub fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
            if self.failures.len() < 20 {
                self.failures.push(what());
            }
        }
    }

    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub points: usize,
    pub rows: usize,
    pub errors: usize,
    pub resource_errors: usize,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub version: String,
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub errors: Vec<PointError>,
    pub summary: Summary,
}

/// Largest violation rate tolerated for a nominal rate `rate` over `n` trials.
pub fn coverage_allowance(rate: f64, n: usize) -> f64 {
    rate + 3.0 * (rate * (1.0 - rate) / n as f64).sqrt()
}

/// Evaluates one grid point.
pub fn evaluate_point(cfg: &ExperimentConfig, p: &GridPoint) -> Result<SweepRow> {
    let inst = Instance::new(cfg, p.m_book, p.noise)?;
    let base = inst.learner(cfg, p.lambda)?;
    let compressed = match cfg.learner.compression_k {
        Some(k) => Some(CompressedLearner::new(&base, k, derive(cfg.seed, QUANTIZER_STREAM))?),
        None => None,
    };
    let learner: &dyn Learner = match &compressed {
        Some(c) => c,
        None => &base,
    };
    let book = &inst.mix.codebook;
    let info = inst.mix.info(&inst.cascade)?;
    let cbar = inst.cbar();
    let ius = mutual_information(&inst.source, "U", "S")?;
    let floor_exact = inst.floor_at(info)?;
    let floor_capacity = inst.floor_at(cbar)?;
    let bayes = bayes_optimal_decoder(&inst.mix, &inst.cascade)?;

    let point_seed = derive(cfg.seed, p.index as u64);
    let n = cfg.replicates;
    let theta = learner.hypotheses().len();
    struct Rep {
        emp: f64,
        obs: f64,
        kl: f64,
        ceiling: f64,
        post: Dist,
    }
    let reps: Vec<Rep> = (0..n)
        .into_par_iter()
        .map(|r| -> Result<Rep> {
            let ds = sample_dataset(&inst.source, &inst.cascade, p.m, derive(point_seed, r as u64))?;
            let data = ds.observed().pairs;
            let post = learner.posterior(&data, &inst.obs)?;
            let s = summarize_posterior(learner, &post, &data, &inst.obs)?;
            let ceiling =
                pacbayes_ceiling(&CeilingInputs { emp_risk: s.emp_risk, kl: s.kl, m: p.m, delta_conf: cfg.delta })?;
            Ok(Rep { emp: s.emp_risk, obs: s.obs_risk, kl: s.kl, ceiling, post })
        })
        .collect::<Result<_>>()?;

    let nf = n as f64;
    let mean = |f: &dyn Fn(&Rep) -> f64| reps.iter().map(f).sum::<f64>() / nf;
    let mut avg = vec![0.0; theta];
    for rep in &reps {
        for (t, a) in avg.iter_mut().enumerate() {
            *a += rep.post.mass(t) / nf;
        }
    }
    let kl_prior = kl_divergence(&Dist::from_weights(avg)?, learner.prior())?;
    let mechanism = if learner.data_free() {
        ResidualMechanism::PriorOnly
    } else if let Some(k) = cfg.learner.compression_k {
        ResidualMechanism::Compression { k: k.min(theta) }
    } else {
        // I(D; theta | U^m) <= H(theta) <= ln |Theta|
        ResidualMechanism::Declared { value: (theta as f64).ln() }
    };
    let rho = residual_bound_in_use(mechanism)?;
    let budget = kl_budget(p.m, cbar, ius, rho.rho, kl_prior)?;

    let mut lifted_sum = 0.0;
    let (mut covered, mut lifted_covered) = (0usize, 0usize);
    for rep in &reps {
        let lifted = lifted_ceiling(rep.emp, budget.value, p.m, cfg.delta, cfg.eta)?;
        lifted_sum += lifted;
        covered += usize::from(rep.obs <= rep.ceiling);
        lifted_covered += usize::from(rep.obs <= lifted);
    }
    let coverage = covered as f64 / nf;
    let lifted_coverage = lifted_covered as f64 / nf;
    let mean_kl = mean(&|r| r.kl);

    let audit = match cfg.audit_m {
        Some(am) => Some(enumerate_information(learner, &inst.mix, &inst.cascade, am, cbar)?),
        None => None,
    };
    let checks = RowChecks {
        converse: floor_exact <= bayes.risk + SOUNDNESS_TOL,
        capacity_floor: inst.matched.then_some(floor_capacity <= bayes.risk + SOUNDNESS_TOL),
        coverage: 1.0 - coverage <= coverage_allowance(cfg.delta, n),
        lifted_coverage: 1.0 - lifted_coverage <= coverage_allowance(cfg.delta + cfg.eta, n),
        budget: mean_kl <= budget.value + SOUNDNESS_TOL,
        audit: audit.as_ref().map(InfoAudit::all_hold),
    };
    Ok(SweepRow {
        index: p.index,
        loss_kind: book.loss_kind().name().into(),
        m_book: book.m(),
        delta: book.delta(),
        epsilon: book.epsilon(),
        noise: p.noise,
        lambda: p.lambda,
        m: p.m,
        seed: point_seed,
        contexts: inst.cascade.contexts(),
        y_size: inst.cascade.y_size(),
        hypotheses: theta,
        info,
        cbar,
        capacity_label: inst.capacity.label.clone(),
        ius,
        matched: inst.matched,
        floor_exact,
        floor_capacity,
        bayes_risk: bayes.risk,
        bayes_index_error: bayes.index_error,
        emp_risk: mean(&|r| r.emp),
        obs_risk: mean(&|r| r.obs),
        kl: mean_kl,
        ceiling: mean(&|r| r.ceiling),
        replicates: n,
        coverage,
        lifted_ceiling: lifted_sum / nf,
        lifted_coverage,
        rho: rho.rho,
        rho_mechanism: rho.mechanism,
        kl_prior,
        budget: budget.value,
        audit,
        checks,
    })
}

/// Evaluates every grid point (concurrently, rows kept in grid order) and the
/// cross-row checks. Errors at a point are recorded and the run continues.
pub fn run(cfg: &ExperimentConfig) -> SweepOutput {
    let grid = cfg.grid();
    let results: Vec<Result<SweepRow>> = grid.par_iter().map(|p| evaluate_point(cfg, p)).collect();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (p, r) in grid.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => errors.push(PointError {
                point: *p,
                resource_limit: matches!(e, Error::ResourceLimit(_)),
                message: e.to_string(),
            }),
        }
    }
    let summary = summarize(grid.len(), &rows, &errors);
    SweepOutput { version: CSV_VERSION.trim_start_matches("# ").into(), config: cfg.clone(), rows, errors, summary }
}

fn summarize(points: usize, rows: &[SweepRow], errors: &[PointError]) -> Summary {
    let mut converse = Check::new("converse");
    let mut capacity_floor = Check::new("capacity_floor");
    let mut coverage = Check::new("coverage");
    let mut lifted = Check::new("lifted_coverage");
    let mut budget = Check::new("kl_budget");
    let mut audit = Check::new("audit");
    let mut m_indep = Check::new("floor_m_independence");
    let mut monotone = Check::new("floor_monotone_capacity");
    for r in rows {
        let c = &r.checks;
        let at = || format!("row {} (M={}, noise={:?}, lambda={}, m={})", r.index, r.m_book, r.noise, r.lambda, r.m);
        converse.record(c.converse, || format!("{}: floor {} > risk {}", at(), r.floor_exact, r.bayes_risk));
        if let Some(ok) = c.capacity_floor {
            capacity_floor.record(ok, || format!("{}: floor {} > risk {}", at(), r.floor_capacity, r.bayes_risk));
        }
        coverage.record(c.coverage, || format!("{}: coverage {}", at(), r.coverage));
        lifted.record(c.lifted_coverage, || format!("{}: coverage {}", at(), r.lifted_coverage));
        budget.record(c.budget, || format!("{}: mean KL {} > budget {}", at(), r.kl, r.budget));
        if let Some(ok) = c.audit {
            audit.record(ok, || format!("{}: {:?}", at(), r.audit));
        }
    }
    // floors depend on (M, noise) only; compare bitwise across m and lambda
    for (i, a) in rows.iter().enumerate() {
        if let Some(b) = rows[..i].iter().find(|b| b.m_book == a.m_book && b.noise == a.noise) {
            let same = a.floor_exact.to_bits() == b.floor_exact.to_bits()
                && a.floor_capacity.to_bits() == b.floor_capacity.to_bits();
            m_indep.record(same, || format!("rows {} and {} differ", b.index, a.index));
        }
    }
    // along any axis, a larger capacity never raises the floor of the same book
    for a in rows {
        for b in rows {
            if a.m_book == b.m_book && a.delta == b.delta && a.epsilon == b.epsilon && a.cbar < b.cbar {
                monotone.record(b.floor_capacity <= a.floor_capacity, || {
                    format!(
                        "rows {} -> {}: cbar {} -> {}, floor {} -> {}",
                        a.index, b.index, a.cbar, b.cbar, a.floor_capacity, b.floor_capacity
                    )
                });
            }
        }
    }
    let checks = vec![converse, capacity_floor, coverage, lifted, budget, audit, m_indep, monotone];
    let all_passed = errors.is_empty() && checks.iter().all(Check::ok);
    Summary {
        points,
        rows: rows.len(),
        errors: errors.len(),
        resource_errors: errors.iter().filter(|e| e.resource_limit).count(),
        checks,
        all_passed,
    }
}

const CSV_COLUMNS: &str = "index,loss_kind,M,delta,epsilon,noise,lambda,m,info,cbar,ius,matched,floor_exact,floor_capacity,bayes_risk,bayes_index_error,emp_risk,obs_risk,kl,ceiling,coverage,lifted_ceiling,lifted_coverage,rho,kl_prior,budget,audit_i_um_theta,audit_residual,audit_holds,checks_pass";

/// CSV rendering: a version comment, the column line, one line per row.
pub fn to_csv(out: &SweepOutput) -> String {
    let f = |x: f64| format!("{x:.17e}");
    let mut s = format!("{CSV_VERSION}\n{CSV_COLUMNS}\n");
    for r in &out.rows {
        let (ium, res, holds) = match &r.audit {
            Some(a) => (f(a.i_um_theta), f(a.i_d_theta_given_um), a.all_hold().to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.loss_kind,
            r.m_book,
            f(r.delta),
            f(r.epsilon),
            r.noise.map(f).unwrap_or_default(),
            f(r.lambda),
            r.m,
            f(r.info),
            f(r.cbar),
            f(r.ius),
            r.matched,
            f(r.floor_exact),
            f(r.floor_capacity),
            f(r.bayes_risk),
            f(r.bayes_index_error),
            f(r.emp_risk),
            f(r.obs_risk),
            f(r.kl),
            f(r.ceiling),
            f(r.coverage),
            f(r.lifted_ceiling),
            f(r.lifted_coverage),
            f(r.rho),
            f(r.kl_prior),
            f(r.budget),
            ium,
            res,
            holds,
            r.checks.all_pass()
        );
    }
    s
}

/// Human-readable log of the run.
pub fn to_log(out: &SweepOutput) -> String {
    let mut s = String::new();
    let sm = &out.summary;
    let _ = writeln!(s, "{} points, {} rows, {} errors", sm.points, sm.rows, sm.errors);
    for e in &out.errors {
        let _ = writeln!(s, "error at point {}: {}", e.point.index, e.message);
    }
    for c in &sm.checks {
        let tag = if c.ok() { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "{tag} {}: {} passed, {} failed", c.name, c.passed, c.failed);
        for f in &c.failures {
            let _ = writeln!(s, "    {f}");
        }
    }
    let _ = writeln!(s, "{}", if sm.all_passed { "all checks passed" } else { "some checks failed" });
    s
}

/// Writes `<stem>.json`, `<stem>.csv` and `<stem>.log` under `dir`.
pub fn write_artifacts(out: &SweepOutput, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let paths = [dir.join(format!("{stem}.json")), dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.log"))];
    std::fs::write(&paths[0], serde_json::to_string_pretty(out)? + "\n")?;
    std::fs::write(&paths[1], to_csv(out))?;
    std::fs::write(&paths[2], to_log(out))?;
    Ok(paths.to_vec())
}
