use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run, Check, Instance, Summary, QUANTIZER_STREAM, SOUNDNESS_TOL};
use crate::bounds::{fano_floor, pacbayes_ceiling, CeilingInputs, FloorInputs};
use crate::channel::CascadeChannel;
use crate::channel::{coarsen_context, sample_dataset, verify_cascade_dpi};
use crate::codebook::{soft_link_slack, tower_check, validate, DecoderTable, MixtureInstance};
use crate::error::Result;
use crate::learner::{compress_posterior, enumerate_information, Learner, AUDIT_TOL};
use crate::probcore::{conditional_mi, Axis, JointTable};
use crate::rng::{derive, rng};

/// Stream of the config seed for the decoders of the tower check.
const TOWER_STREAM: u64 = (1 << 40) + 2;
const TOWER_DECODERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub instances: usize,
    pub checks: Vec<Check>,
    pub sweep: Summary,
    pub all_passed: bool,
}

/// `P(J, S, Y)`: the index pushed through the cascade.
pub fn index_joint(mix: &MixtureInstance, cascade: &CascadeChannel) -> Result<JointTable> {
    let jus = mix.joint_jus()?;
    let m = mix.m();
    let axes = vec![Axis::new("J", m), Axis::new("S", cascade.contexts()), Axis::new("Y", cascade.y_size())];
    let ends: Vec<_> = (0..cascade.contexts()).map(|s| cascade.end_to_end(s)).collect();
    JointTable::from_fn(axes, |ix| {
        let (j, s, y) = (ix[0], ix[1], ix[2]);
        (0..m).map(|u| jus.mass(&[j, u, s]) * ends[s].get(u, y)).sum()
    })
}

/// Runs the invariant suite on every instance of the config's grid, then the
/// sweep with its cross-row checks. Resource-limit errors propagate.
pub fn verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let names = [
        "dpi",
        "kl_identity",
        "residual_chain",
        "sample_chain",
        "capacity_control",
        "compression",
        "link",
        "tower_identity",
        "index_reduction",
        "coarsening",
        "soft_link",
        "converse",
        "floor_monotone_info",
        "ceiling_monotone",
        "interval",
    ];
    let mut checks: Vec<Check> = names.iter().map(|n| Check::new(n)).collect();
    let mut instances = Vec::new();
    for p in cfg.grid() {
        if !instances.contains(&(p.m_book, p.noise)) {
            instances.push((p.m_book, p.noise));
        }
    }
    let lambda = cfg.sweep.lambda[0];
    for &(m_book, noise) in &instances {
        let tag = format!("M={m_book:?} noise={noise:?}");
        let inst = Instance::new(cfg, m_book, noise)?;
        let mut c = checks.iter_mut();
        let mut next = || c.next().expect("one check per name");

        let dpi = verify_cascade_dpi(&inst.cascade, &inst.source)?;
        next().record(dpi.all_hold, || format!("{tag}: {dpi:?}"));

        let base = inst.learner(cfg, lambda)?;
        let am = cfg.audit_m.unwrap_or(1);
        let a = enumerate_information(&base, &inst.mix, &inst.cascade, am, inst.cbar())?;
        next().record(a.identity_holds, || format!("{tag}: gap {}", a.identity_gap));
        next().record(a.chain_holds, || format!("{tag}: gap {}", a.chain_gap));
        next().record(a.sample_chain_holds, || format!("{tag}: gap {}", a.sample_chain_gap));
        next().record(a.capacity_holds, || format!("{tag}: slack {}", a.capacity_slack));

        let ds = sample_dataset(&inst.source, &inst.cascade, cfg.sweep.m[0], derive(cfg.seed, 0))?;
        let post = base.posterior(&ds.observed().pairs, &inst.obs)?;
        let k = cfg.learner.compression_k.unwrap_or(2);
        let comp = compress_posterior(base.hypotheses(), base.prior(), &post, k, derive(cfg.seed, QUANTIZER_STREAM))?;
        next().record(comp.audit.entropy_holds && comp.audit.kl_holds, || format!("{tag}: {:?}", comp.audit));

        let v = validate(&inst.mix.codebook);
        next().record(v.passed, || format!("{tag}: {:?}", v.failures));

        let mut r = rng(derive(cfg.seed, TOWER_STREAM));
        let tower = next();
        for _ in 0..TOWER_DECODERS {
            let pi = DecoderTable::random(
                &mut r,
                inst.cascade.y_size(),
                inst.cascade.contexts(),
                inst.mix.codebook.action_count(),
            );
            let t = tower_check(&inst.mix, &inst.cascade, &inst.obs, &pi)?;
            tower.record(t.gap <= AUDIT_TOL, || format!("{tag}: gap {}", t.gap));
        }

        let info = inst.mix.info(&inst.cascade)?;
        let i_jy = conditional_mi(&index_joint(&inst.mix, &inst.cascade)?, "J", "Y", "S")?.value;
        next().record(i_jy <= info + AUDIT_TOL, || format!("{tag}: I(J;Y|S) {i_jy} > I(U;Y|S) {info}"));

        let merged = coarsen_context(&inst.source, &vec![0; inst.cascade.contexts()])?;
        let halves: Vec<usize> = (0..inst.cascade.contexts()).map(|s| s / 2).collect();
        let paired = coarsen_context(&inst.source, &halves)?;
        next().record(merged.holds && paired.holds, || format!("{tag}: slack {} / {}", merged.slack, paired.slack));

        let exact_floor = inst.floor_at(info)?;
        let bayes = crate::learner::bayes_optimal_decoder(&inst.mix, &inst.cascade)?;
        let sl = soft_link_slack(&inst.mix, &bayes.decoder, &inst.cascade)?;
        let soft_ok = (sl.additive_floor - (exact_floor - sl.zeta)).abs() <= AUDIT_TOL
            && (sl.multiplicative_floor - exact_floor * (1.0 - sl.zeta)).abs() <= AUDIT_TOL
            && sl.risk + SOUNDNESS_TOL >= sl.additive_floor.max(sl.multiplicative_floor);
        next().record(soft_ok, || format!("{tag}: {sl:?}"));

        next().record(exact_floor <= bayes.risk + SOUNDNESS_TOL, || {
            format!("{tag}: floor {exact_floor} > Bayes risk {}", bayes.risk)
        });

        let b = &inst.mix.codebook;
        let floor_mono = next();
        let mut prev = f64::INFINITY;
        for i in 0..=40 {
            let x = (b.m() as f64).ln() * i as f64 / 40.0;
            let f = fano_floor(&FloorInputs::new(b.m(), b.delta(), b.epsilon(), x)?)?;
            floor_mono.record(f <= prev, || format!("{tag}: floor rises at info {x}"));
            prev = f;
        }

        let ceil_mono = next();
        let ceil = |kl: f64, m: usize| pacbayes_ceiling(&CeilingInputs { emp_risk: 0.1, kl, m, delta_conf: cfg.delta });
        for &m in &cfg.sweep.m {
            let (lo, hi) = (ceil(0.5, m)?, ceil(1.5, m)?);
            let (near, far) = (ceil(1.0, m)?, ceil(1.0, 2 * m)?);
            ceil_mono.record(lo <= hi && far <= near, || format!("{tag}: ceiling not monotone at m={m}"));
        }

        let interval = next();
        interval.record(exact_floor <= bayes.risk + SOUNDNESS_TOL, || format!("{tag}: floor above risk"));
        if inst.matched {
            let cap_floor = inst.floor_at(inst.cbar())?;
            interval.record(cap_floor <= exact_floor + SOUNDNESS_TOL, || {
                format!("{tag}: capacity floor {cap_floor} above exact floor {exact_floor}")
            });
        }
    }
    let out = run(cfg);
    if let Some(e) = out.errors.iter().find(|e| e.resource_limit) {
        return Err(crate::error::Error::ResourceLimit(e.message.clone()));
    }
    let all_passed = checks.iter().all(Check::ok) && out.summary.all_passed;
    Ok(VerifyReport { instances: instances.len(), checks, sweep: out.summary, all_passed })
}

impl VerifyReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in self.checks.iter().chain(&self.sweep.checks) {
            let tag = if c.ok() { "PASS" } else { "FAIL" };
            s += &format!("{tag} {}: {} passed, {} failed\n", c.name, c.passed, c.failed);
            for f in &c.failures {
                s += &format!("    {f}\n");
            }
        }
        if self.sweep.errors > 0 {
            s += &format!("FAIL sweep: {} grid points raised errors\n", self.sweep.errors);
        }
        s += if self.all_passed { "verify: all checks passed\n" } else { "verify: FAILED\n" };
        s
    }
}
