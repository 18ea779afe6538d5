//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use capwall::bounds::{fano_floor, required_capacity, FloorInputs};
use capwall::channel::{
    coarsen_context, total_capacity, verify_cascade_dpi, ArticulationInput, CascadeChannel, ChannelFamily,
    StageFamilies,
};
use capwall::codebook::{
    build_classification, build_mse_packing, build_ranking, canonical_observable_loss, mixture, soft_link_slack,
    tower_check, Codebook, DecoderTable, MixtureInstance,
};
use capwall::experiment::{coverage_allowance, index_joint, run, ExperimentConfig};
use capwall::learner::{
    all_decoders, bayes_optimal_decoder, compress_posterior, enumerate_information, random_decoders, EnumeratedLearner,
    Learner, PosteriorRule,
};
use capwall::probcore::{conditional_mi, Dist, Kernel};
use capwall::rng::{derive, rng};
use rand::Rng;

/// Outcome of one criterion: pass flag and a one-line detail.
type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn symmetric_cascade(m: usize, cog: f64, art: f64, contexts: usize) -> CascadeChannel {
    CascadeChannel::uniform_over_contexts(
        Kernel::symmetric(m, cog).unwrap(),
        Kernel::symmetric(m, art).unwrap(),
        contexts,
    )
    .unwrap()
}

fn context_law(n: usize) -> Dist {
    match n {
        1 => Dist::uniform(1),
        2 => Dist::new(vec![0.35, 0.65]).unwrap(),
        _ => Dist::from_weights((1..=n).map(|i| i as f64).collect()).unwrap(),
    }
}

fn c1_codebook_constants() -> Outcome {
    let start = Instant::now();
    let rank = build_ranking(3).unwrap();
    let mse = build_mse_packing(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], 1.0, 1.0).unwrap();
    let mut ok = rank.m() == 6 && rank.delta() == 1.0 / 3.0 && mse.delta() == 0.25;
    for m in 2..=16 {
        let b = build_classification(m).unwrap();
        ok &= b.m() == m && b.delta() == 1.0 && b.epsilon() == 0.0;
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    (ok, format!("ranking M={} delta={}, mse delta={}, {elapsed:.2?}", rank.m(), rank.delta(), mse.delta()))
}

fn c2_converse() -> Outcome {
    let start = Instant::now();
    let (mut count, mut worst) = (0, f64::INFINITY);
    for m in [2, 4, 6, 8] {
        let top = (m - 1) as f64 / m as f64;
        for t in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            for contexts in [1, 2] {
                let mix = mixture(build_classification(m).unwrap(), context_law(contexts)).unwrap();
                let c = symmetric_cascade(m, t * top, 0.5 * t * top, contexts);
                let floor = mix.exact_floor(&c).unwrap();
                let risk = bayes_optimal_decoder(&mix, &c).unwrap().risk;
                worst = worst.min(risk - floor);
                count += 1;
            }
        }
    }
    // ranking books ride along
    for noise in [0.0, 0.3, 5.0 / 6.0] {
        let mix = mixture(build_ranking(3).unwrap(), Dist::uniform(1)).unwrap();
        let c = symmetric_cascade(6, noise, 0.0, 1);
        worst = worst.min(bayes_optimal_decoder(&mix, &c).unwrap().risk - mix.exact_floor(&c).unwrap());
        count += 1;
    }
    let elapsed = start.elapsed();
    (
        count >= 30 && worst >= -1e-9 && elapsed < Duration::from_secs(60),
        format!("{count} instances, min slack {worst:.3e}, {elapsed:.2?}"),
    )
}

fn sweep_config(body: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(body).unwrap()
}

fn c3_m_independence() -> Outcome {
    let cfg = sweep_config(
        r#"{
            "instance": {
                "codebook": {"kind": "classification", "M": 4},
                "context_law": [0.5, 0.5],
                "cascade": {"kind": "symmetric", "cog_noise": 0.3},
                "families": {"cog": {"kind": "cardinality", "k": 4}, "art": {"kind": "exact"}}
            },
            "sweep": {"m": [10, 100, 1000, 10000], "noise": [0.1, 0.3, 0.6]},
            "learner": {"hypotheses": {"random": 16}},
            "replicates": 5,
            "seed": 1
        }"#,
    );
    let out = run(&cfg);
    let mut ok = out.errors.is_empty() && out.rows.len() == 12;
    for chunk in out.rows.chunks(4) {
        let f0 = (chunk[0].floor_exact.to_bits(), chunk[0].floor_capacity.to_bits());
        ok &= chunk.iter().all(|r| (r.floor_exact.to_bits(), r.floor_capacity.to_bits()) == f0);
    }
    let floors: Vec<String> = out.rows.iter().step_by(4).map(|r| format!("{:.6}", r.floor_exact)).collect();
    (ok, format!("floor per noise level {floors:?}, constant across m in {{10..10^4}}"))
}

fn c4_coverage() -> Outcome {
    let start = Instant::now();
    let instances = [(2, 0.1, 1, 30), (2, 0.3, 2, 50), (3, 0.2, 1, 40), (4, 0.4, 2, 60), (4, 0.05, 1, 25)];
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (k, &(m_book, noise, contexts, m)) in instances.iter().enumerate() {
        let law: Vec<f64> = context_law(contexts).masses().to_vec();
        let cfg = sweep_config(&format!(
            r#"{{
                "instance": {{
                    "codebook": {{"kind": "classification", "M": {m_book}}},
                    "context_law": {law:?},
                    "cascade": {{"kind": "symmetric", "cog_noise": {noise}}},
                    "families": {{"cog": {{"kind": "exact"}}, "art": {{"kind": "exact"}}}}
                }},
                "sweep": {{"m": [{m}], "lambda": [2.0]}},
                "learner": {{"hypotheses": {{"random": 32}}, "rule": "gibbs"}},
                "replicates": 1000,
                "delta": 0.05,
                "seed": {k}
            }}"#
        ));
        let out = run(&cfg);
        let r = &out.rows[0];
        let violation = 1.0 - r.coverage;
        worst = worst.max(violation);
        ok &= violation <= coverage_allowance(0.05, 1000);
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(300);
    (ok, format!("worst violation rate {worst:.4} (allowed {:.4}), {elapsed:.2?}", coverage_allowance(0.05, 1000)))
}

struct Enumerated {
    mix: MixtureInstance,
    cascade: CascadeChannel,
    m: usize,
    seed: u64,
}

fn enumerated_suite() -> Vec<Enumerated> {
    let mut out = Vec::new();
    let mut r = rng(99);
    for (i, &(m_book, contexts, m)) in
        [(2, 1, 3), (2, 2, 2), (3, 1, 2), (3, 2, 1), (4, 1, 2), (4, 2, 1), (2, 4, 1), (3, 3, 1)].iter().enumerate()
    {
        for j in 0..3 {
            let top = (m_book - 1) as f64 / m_book as f64;
            let cog: Vec<Kernel> =
                (0..contexts).map(|_| Kernel::symmetric(m_book, r.random_range(0.0..top)).unwrap()).collect();
            let art: Vec<Kernel> =
                (0..contexts).map(|_| Kernel::symmetric(m_book, r.random_range(0.0..top)).unwrap()).collect();
            out.push(Enumerated {
                mix: mixture(build_classification(m_book).unwrap(), context_law(contexts)).unwrap(),
                cascade: CascadeChannel::new(cog, art).unwrap(),
                m,
                seed: (i * 3 + j) as u64,
            });
        }
    }
    out
}

fn learner_for(e: &Enumerated, lambda: f64) -> EnumeratedLearner {
    let (y, s, a) = (e.cascade.y_size(), e.cascade.contexts(), e.mix.codebook.action_count());
    let space = (a as f64).powi((y * s) as i32);
    let hs = if space <= 32.0 { all_decoders(y, s, a).unwrap() } else { random_decoders(y, s, a, 32, e.seed).unwrap() };
    let mut r = rng(derive(e.seed, 1));
    let prior = Dist::from_weights((0..hs.len()).map(|_| r.random_range(0.1..1.0)).collect()).unwrap();
    EnumeratedLearner::new(hs, prior, PosteriorRule::Gibbs { lambda }).unwrap()
}

fn c5_certificates() -> Outcome {
    let start = Instant::now();
    let tol = 1e-9;
    let mut fails = [0usize; 7];
    let mut checked = 0;
    for e in enumerated_suite() {
        let source = e.mix.source().unwrap();
        let fam = StageFamilies {
            cog: ChannelFamily::Cardinality { k: e.cascade.h_size() },
            art: ChannelFamily::Cardinality { k: e.cascade.y_size() },
        };
        let cbar = total_capacity(&[fam], &source, ArticulationInput::Cascade(&e.cascade)).unwrap().average;
        let learner = learner_for(&e, 3.0);
        let a = enumerate_information(&learner, &e.mix, &e.cascade, e.m, cbar).unwrap();
        // (a) expected-KL identity, (b) capacity control
        fails[0] += usize::from(a.identity_gap > tol);
        fails[1] += usize::from(a.capacity_slack < -tol);
        // (c) index information below value information
        let info = e.mix.info(&e.cascade).unwrap();
        let i_jy = conditional_mi(&index_joint(&e.mix, &e.cascade).unwrap(), "J", "Y", "S").unwrap().value;
        fails[2] += usize::from(i_jy > info + tol);
        // (d) per-context stage bound
        let dpi = verify_cascade_dpi(&e.cascade, &source).unwrap();
        fails[3] += usize::from(dpi.contexts.iter().any(|c| c.slack < -tol));
        // (e) tower identity on 5 random decoders
        let obs = canonical_observable_loss(&e.mix, &e.cascade).unwrap();
        let mut r = rng(derive(e.seed, 2));
        for _ in 0..5 {
            let pi =
                DecoderTable::random(&mut r, e.cascade.y_size(), e.cascade.contexts(), e.mix.codebook.action_count());
            fails[4] += usize::from(tower_check(&e.mix, &e.cascade, &obs, &pi).unwrap().gap > tol);
        }
        // (f) compression lemmas on a few posteriors
        for k in [1, 2, 3] {
            let data: Vec<(usize, usize)> =
                (0..4).map(|i| (i % e.cascade.y_size(), (i / 2) % e.cascade.contexts())).collect();
            let post = learner.posterior(&data, &obs).unwrap();
            let c = compress_posterior(learner.hypotheses(), learner.prior(), &post, k, e.seed).unwrap();
            let h_ok = c.audit.entropy <= c.audit.ln_k + tol;
            let kl_ok = c.audit.kl_compressed <= c.audit.kl + tol;
            fails[5] += usize::from(!(h_ok && kl_ok));
        }
        // (g) coarsening
        let s = e.cascade.contexts();
        for map in [vec![0; s], (0..s).map(|x| x / 2).collect::<Vec<_>>()] {
            fails[6] += usize::from(coarsen_context(&source, &map).unwrap().slack < -tol);
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    let ok = fails.iter().all(|&f| f == 0) && elapsed < Duration::from_secs(120);
    (ok, format!("{checked} instances, failures per (a..g) {fails:?}, {elapsed:.2?}"))
}

fn c6_round_trip() -> Outcome {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = r.random_range(2..=64usize);
        let epsilon = r.random_range(0.0..0.3);
        let delta = r.random_range(0.05..(1.0 - epsilon));
        // keep the required capacity nonnegative so it is a valid information value
        let r_max = (epsilon + delta) * (1.0 - 2f64.ln() / (m as f64).ln());
        let target = r.random_range(0.0..1.0) * r_max;
        let c = required_capacity(target, m, delta, epsilon).unwrap();
        let back = fano_floor(&FloorInputs::new(m, delta, epsilon, c.value.max(0.0)).unwrap()).unwrap();
        worst = worst.max((back - target).abs());
    }
    (worst <= 1e-9, format!("50 draws, max |floor(required(r)) - r| = {worst:.3e}"))
}

/// Ranking book with its margin inflated past the true separation.
fn perturbed_book() -> Codebook {
    let b = build_ranking(3).unwrap();
    b.with_margins(0.0, 2.0 / 3.0)
}

fn c7_soft_link() -> Outcome {
    let tol = 1e-9;
    let (mut worst_def, mut worst_risk) = (0.0f64, f64::INFINITY);
    let mut zetas = Vec::new();
    let mut r = rng(7);
    for noise in [0.1, 0.3, 0.5] {
        let mix = mixture(perturbed_book(), Dist::uniform(1)).unwrap();
        let c = symmetric_cascade(6, noise, 0.0, 1);
        let bayes = bayes_optimal_decoder(&mix, &c).unwrap().decoder;
        let mut decoders = vec![bayes];
        for _ in 0..3 {
            decoders.push(DecoderTable::random(&mut r, 6, 1, mix.codebook.action_count()));
        }
        let exact = mix.exact_floor(&c).unwrap();
        let j = mix.joint_usy(&c).unwrap();
        for pi in &decoders {
            let sl = soft_link_slack(&mix, pi, &c).unwrap();
            // independent zeta from the joint
            let (mut err, mut bad) = (0.0, 0.0);
            for u in 0..6 {
                for y in 0..6 {
                    let p = j.mass(&[u, 0, y]);
                    let a = pi.act(y, 0);
                    if mix.codebook.decode(a) != u {
                        err += p;
                        if mix.loss(u, a) < 2.0 / 3.0 {
                            bad += p;
                        }
                    }
                }
            }
            let zeta = if err > 0.0 { bad / err } else { 0.0 };
            worst_def = worst_def
                .max((sl.zeta - zeta).abs())
                .max((sl.additive_floor - (exact - zeta)).abs())
                .max((sl.multiplicative_floor - exact * (1.0 - zeta)).abs());
            worst_risk = worst_risk.min(sl.risk - sl.additive_floor).min(sl.risk - sl.multiplicative_floor);
            zetas.push(zeta);
        }
    }
    let max_zeta = zetas.iter().cloned().fold(0.0, f64::max);
    let ok = worst_def <= tol && worst_risk >= -tol && max_zeta > 0.0;
    (ok, format!("max zeta {max_zeta:.4}, definition gap {worst_def:.3e}, min risk - floor {worst_risk:.3e}"))
}

fn c8_overfitting_trend() -> Outcome {
    let lambdas = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
    let mut bound_ok = true;
    let mut trend = 0;
    let mut worst_slack = f64::INFINITY;
    for seed in 0..5u64 {
        let mix = mixture(build_classification(2).unwrap(), context_law(2)).unwrap();
        let c = symmetric_cascade(2, 0.3, 0.05, 2);
        let source = mix.source().unwrap();
        let fam = StageFamilies { cog: ChannelFamily::Cardinality { k: 2 }, art: ChannelFamily::Cardinality { k: 2 } };
        let cbar = total_capacity(&[fam], &source, ArticulationInput::Cascade(&c)).unwrap().average;
        let e = Enumerated { mix, cascade: c, m: 3, seed };
        let mut signal = Vec::new();
        let mut residual = Vec::new();
        for &l in &lambdas {
            let learner = learner_for(&e, l);
            let a = enumerate_information(&learner, &e.mix, &e.cascade, e.m, cbar).unwrap();
            worst_slack = worst_slack.min(a.capacity_slack);
            bound_ok &= a.capacity_holds;
            signal.push(a.i_um_theta);
            residual.push(a.i_d_theta_given_um);
        }
        // plateau: first lambda reaching 95% of the largest signal
        let top = signal.iter().cloned().fold(0.0, f64::max);
        let start = signal.iter().position(|&s| s >= 0.95 * top).unwrap_or(0);
        let rising = residual[start..].windows(2).all(|w| w[1] >= w[0] - 1e-12);
        trend += usize::from(rising);
    }
    (
        bound_ok && trend >= 4,
        format!("capacity bound holds (min slack {worst_slack:.3e}); residual non-decreasing past the plateau in {trend}/5 instances"),
    )
}

fn c9_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_capwall");
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/classification.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(exe)
            .args(["sweep", "--config", config, "--stem", "run", "--seed", "123"])
            .env("CAPWALL_OUT_DIR", d.path())
            .output()
            .unwrap();
        if !status.status.success() {
            return (false, format!("sweep exited with {:?}", status.status.code()));
        }
    }
    let read = |d: &tempfile::TempDir, ext: &str| std::fs::read(d.path().join(format!("run.{ext}"))).unwrap();
    let same_csv = read(&dirs[0], "csv") == read(&dirs[1], "csv");
    let same_json = read(&dirs[0], "json") == read(&dirs[1], "json");
    (same_csv && same_json, format!("CSV identical: {same_csv}, JSON identical: {same_json}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("codebook constants", c1_codebook_constants),
        ("converse soundness", c2_converse),
        ("floor m-independence", c3_m_independence),
        ("PAC-Bayes coverage", c4_coverage),
        ("identity and inequality certificates", c5_certificates),
        ("required-capacity round trip", c6_round_trip),
        ("soft-link slack", c7_soft_link),
        ("channel-overfitting trend", c8_overfitting_trend),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!ok);
        println!("criterion {} {name}: {} ({detail})", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
