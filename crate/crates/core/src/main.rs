use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use capwall::bounds::{
    bound_report, fano_floor, lifted_ceiling, pacbayes_ceiling, required_capacity, BookParams, CeilingInputs,
    FloorInputs, IntervalInputs,
};
use capwall::codebook::{build_classification, build_mse_packing, build_ranking, lattice, validate, Codebook};
use capwall::experiment::{
    evaluate_point, exit, run, to_log, verify, write_artifacts, ExperimentConfig, Instance, SOUNDNESS_TOL,
};
use capwall::Error;

#[derive(Parser)]
#[command(name = "capwall", version, about = "Risk floors and ceilings for finite feedback channels")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stage and total capacities of every instance in a config.
    Capacity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build or validate a codebook.
    Codebook {
        #[command(flatten)]
        book: BookArgs,
        /// Validate a codebook JSON file instead of building one.
        #[arg(long, conflicts_with = "kind")]
        validate: Option<PathBuf>,
    },
    /// Fano floor; with --target, the capacity needed to reach that risk.
    Floor {
        #[arg(long = "M")]
        m_book: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, required_unless_present = "target")]
        info: Option<f64>,
        #[arg(long, conflicts_with = "info")]
        target: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// PAC-Bayes ceiling; with --budget and --eta, the lifted ceiling.
    Ceiling {
        #[arg(long)]
        emp_risk: f64,
        #[arg(long, default_value_t = 0.0)]
        kl: f64,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.05)]
        delta_conf: f64,
        #[arg(long, requires = "eta")]
        budget: Option<f64>,
        #[arg(long, requires = "budget")]
        eta: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Floor, Bayes risk, learner risk and ceiling per grid point.
    Interval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the invariant suite; nonzero exit on any failure.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Run the sweep and write JSON, CSV and log artifacts.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output.dir (the environment override still wins).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        stem: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct BookArgs {
    /// classification | ranking | mse
    #[arg(long)]
    kind: Option<String>,
    #[arg(long = "M")]
    m_book: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

/// An error together with the exit code it maps to.
struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ResourceLimit(_) => exit::RESOURCE,
            _ => exit::USAGE,
        };
        let msg = match &e {
            Error::Config { .. } => format!("usage: {e}"),
            _ => e.to_string(),
        };
        Failure(code, msg)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json(v: &impl serde::Serialize) -> Outcome {
    emit(&(serde_json::to_string_pretty(v)? + "\n"));
    Ok(exit::OK)
}

fn load(path: &Path, replicates: Option<usize>, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(n) = replicates {
        cfg.replicates = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_book(kind: &str, a: &BookArgs) -> Result<Codebook, Failure> {
    let BookArgs { m_book, n, dims, side, spacing, r, tau, .. } = *a;
    let need = |flag: &str| Failure(exit::USAGE, format!("usage: codebook --kind {kind} needs --{flag}"));
    Ok(match kind {
        "classification" => build_classification(m_book.ok_or_else(|| need("M"))?)?,
        "ranking" => build_ranking(n.ok_or_else(|| need("n"))?)?,
        "mse" => build_mse_packing(
            lattice(dims.ok_or_else(|| need("dims"))?, side.ok_or_else(|| need("side"))?, spacing),
            r.ok_or_else(|| need("r"))?,
            tau.ok_or_else(|| need("tau"))?,
        )?,
        other => return Err(Failure(exit::USAGE, format!("usage: unknown codebook kind `{other}`"))),
    })
}

fn execute(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::Capacity { config } => {
            let cfg = load(&config, None, None)?;
            let mut seen = Vec::new();
            let mut out = Vec::new();
            for p in cfg.grid() {
                if seen.contains(&(p.m_book, p.noise)) {
                    continue;
                }
                seen.push((p.m_book, p.noise));
                let inst = Instance::new(&cfg, p.m_book, p.noise)?;
                out.push(json!({
                    "M": inst.mix.m(),
                    "noise": p.noise,
                    "info": inst.mix.info(&inst.cascade)?,
                    "matched": inst.matched,
                    "capacity": inst.capacity,
                }));
            }
            print_json(&out)
        }
        Cmd::Codebook { book: args, validate: file } => {
            let book = match (file, &args.kind) {
                (Some(f), _) => serde_json::from_str::<Codebook>(&std::fs::read_to_string(f).map_err(Error::from)?)?,
                (None, Some(k)) => build_book(k, &args)?,
                (None, None) => return Err(Failure(exit::USAGE, "usage: codebook needs --kind or --validate".into())),
            };
            let report = validate(&book);
            print_json(&json!({ "codebook": book, "validation": report }))?;
            Ok(if report.passed { exit::OK } else { exit::INVARIANT })
        }
        Cmd::Floor { m_book, delta, epsilon, info, target, json } => {
            if let Some(r) = target {
                let req = required_capacity(r, m_book, delta, epsilon)?;
                return if json {
                    print_json(&req)
                } else {
                    emit(&format!("{}\n", req.value));
                    Ok(exit::OK)
                };
            }
            let inputs = FloorInputs::new(m_book, delta, epsilon, info.expect("clap requires info"))?;
            let v = fano_floor(&inputs)?;
            if json {
                print_json(&json!({ "inputs": inputs, "floor": v }))
            } else {
                emit(&format!("{v}\n"));
                Ok(exit::OK)
            }
        }
        Cmd::Ceiling { emp_risk, kl, m, delta_conf, budget, eta, json } => {
            let v = match (budget, eta) {
                (Some(b), Some(e)) => lifted_ceiling(emp_risk, b, m, delta_conf, e)?,
                _ => pacbayes_ceiling(&CeilingInputs { emp_risk, kl, m, delta_conf })?,
            };
            if json {
                print_json(
                    &json!({ "emp_risk": emp_risk, "kl": kl, "m": m, "delta_conf": delta_conf, "budget": budget, "eta": eta, "ceiling": v }),
                )
            } else {
                emit(&format!("{v}\n"));
                Ok(exit::OK)
            }
        }
        Cmd::Interval { config, replicates, seed } => {
            let cfg = load(&config, replicates, seed)?;
            let mut out = Vec::new();
            let mut sound = true;
            for p in cfg.grid() {
                let row = evaluate_point(&cfg, &p)?;
                let report = bound_report(&IntervalInputs {
                    book: BookParams { m: row.m_book, delta: row.delta, epsilon: row.epsilon },
                    info_exact: Some(row.info),
                    cbar: row.matched.then_some(row.cbar),
                    m: row.m,
                    delta_conf: cfg.delta,
                    emp_risk: row.emp_risk,
                    kl: row.kl,
                    budget: None,
                    eta: None,
                })?;
                let ok =
                    report.floor <= row.bayes_risk + SOUNDNESS_TOL && row.bayes_risk <= row.obs_risk + SOUNDNESS_TOL;
                sound &= ok;
                out.push(json!({
                    "index": p.index,
                    "noise": p.noise,
                    "lambda": p.lambda,
                    "report": report,
                    "bayes_risk": row.bayes_risk,
                    "learner_risk": row.obs_risk,
                    "mean_ceiling": row.ceiling,
                    "coverage": row.coverage,
                    "floor_le_risk": ok,
                }));
            }
            print_json(&out)?;
            Ok(if sound { exit::OK } else { exit::INVARIANT })
        }
        Cmd::Verify { config, replicates, json } => {
            let cfg = load(&config, replicates, None)?;
            let report = verify(&cfg)?;
            if json {
                print_json(&report)?;
            } else {
                emit(&report.render());
            }
            Ok(if report.all_passed { exit::OK } else { exit::INVARIANT })
        }
        Cmd::Sweep { config, out_dir, stem, replicates, seed } => {
            let mut cfg = load(&config, replicates, seed)?;
            if let Some(d) = out_dir {
                cfg.output.dir = d.to_string_lossy().into_owned();
            }
            if let Some(s) = stem {
                cfg.output.stem = s;
            }
            let out = run(&cfg);
            let paths = write_artifacts(&out, &cfg.out_dir(), &cfg.output.stem)?;
            emit(&to_log(&out));
            for p in paths {
                emit(&format!("wrote {}\n", p.display()));
            }
            Ok(if out.summary.resource_errors > 0 {
                exit::RESOURCE
            } else if out.summary.all_passed {
                exit::OK
            } else {
                exit::INVARIANT
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure(code, msg)) => {
            eprintln!("capwall: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
