//! Command-line driver.
//!
//! Exit codes: 0 converged and audit-feasible, 1 usage error, 2 iteration
//! cap reached, 3 infeasible (initialization, subproblem or audit).

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};

use crate::bench_td::{run_td, TdConfig};
use crate::report::{export_run, write_sweep, Results, RunMode, SweepRow};
use crate::sca::{run, run_single_uav, RunStatus, ScaConfig, SolveReport};
use crate::scenario::{random_scenario, Scenario, DEFAULT_SEED};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MAX_ITER: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Sampling step of `trajectory.csv` for continuous-time solutions (s).
const SAMPLE_DT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Coshf,
    Td,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    /// Jamming power over {0.1, 1, 10, 100} mW.
    Pj,
    /// Slot count of the benchmark over {10, 20, 40}, plus a co-SHF row.
    N0,
    /// Maximum speed over {5, 10, 15, 20} m/s.
    Speed,
}

#[derive(Debug, Parser)]
#[command(
    name = "coshf",
    version,
    about = "Jamming-aided dual-UAV secure trajectory and scheduling optimizer"
)]
pub struct Args {
    /// Scenario TOML file; overrides --seed.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Seed of a random scenario.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Number of users of a random scenario.
    #[arg(long, default_value_t = 4)]
    pub random_k: usize,
    /// Turning points per leg (overrides the scenario).
    #[arg(long)]
    pub n_turn: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Coshf)]
    pub mode: Mode,
    /// Slots of the time-discretized benchmark.
    #[arg(long, default_value_t = 40)]
    pub td_n0: usize,
    /// Convergence threshold on the objective change (bits/Hz).
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Gauss–Legendre nodes per panel.
    #[arg(long, default_value_t = 8)]
    pub quad_order: usize,
    #[arg(long, default_value_t = 10_000)]
    pub audit_samples: usize,
    #[arg(long, value_enum)]
    pub sweep: Option<Sweep>,
    /// Number of random seeds (1..=n) a sweep runs over; without it the
    /// sweep uses the selected scenario only.
    #[arg(long)]
    pub sweep_seeds: Option<u64>,
    /// Output directory (default: $COSHF_OUT_DIR, else ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn main() -> i32 {
    match Args::try_parse() {
        Ok(args) => execute(&args),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

pub fn execute(args: &Args) -> i32 {
    let sc = match load_scenario(args) {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    let sca_cfg = ScaConfig {
        eps: args.eps,
        max_outer: args.max_iter,
        quad_order: args.quad_order,
        audit_samples: args.audit_samples,
        ..ScaConfig::default()
    };
    let td_cfg = TdConfig {
        n0: args.td_n0,
        eps: args.eps,
        max_outer: args.max_iter,
        ..TdConfig::default()
    };
    if let Err(e) = sca_cfg.validate().and_then(|_| td_cfg.validate()) {
        return usage(e);
    }
    if args.audit_samples == 0 {
        return usage("audit samples must be positive");
    }
    let out = args.out.clone().unwrap_or_else(default_out_dir);
    match args.sweep {
        None => single_run(&sc, args.mode, &sca_cfg, &td_cfg, &out),
        Some(sweep) => run_sweep(args, &sc, sweep, &sca_cfg, &td_cfg, &out),
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os("COSHF_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_scenario(args: &Args) -> crate::Result<Scenario> {
    let mut sc = match &args.scenario {
        Some(p) => Scenario::load(p)?,
        None => {
            if args.random_k == 0 {
                return Err(Error::InvalidArgument(
                    "--random-k must be at least 1".into(),
                ));
            }
            random_scenario(args.seed, args.random_k, 500.0)
        }
    };
    if let Some(n) = args.n_turn {
        sc.n_turn = n;
    }
    sc.validate()?;
    Ok(sc)
}

fn exit_code(report: &SolveReport) -> i32 {
    match report.status {
        RunStatus::Infeasible => EXIT_INFEASIBLE,
        _ if report.audit.as_ref().is_some_and(|a| !a.feasible) => EXIT_INFEASIBLE,
        RunStatus::MaxIter => EXIT_MAX_ITER,
        RunStatus::Converged => EXIT_OK,
    }
}

fn failure_code(e: &Error) -> i32 {
    match e {
        Error::Init(_) | Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

/// Run one mode and assemble its `results.json` content.
fn solve_mode(
    sc: &Scenario,
    mode: Mode,
    sca_cfg: &ScaConfig,
    td_cfg: &TdConfig,
) -> crate::Result<Results> {
    Ok(match mode {
        Mode::Coshf | Mode::Single => {
            let (out, rm) = if mode == Mode::Coshf {
                (run(sc, sca_cfg)?, RunMode::Coshf)
            } else {
                (run_single_uav(sc, sca_cfg)?, RunMode::Single)
            };
            let mut r = Results::new(rm, sc, sca_cfg, out.report);
            r.trajectory = Some(out.trajectory);
            r.fractional = Some(out.fractional);
            r
        }
        Mode::Td => {
            let (path, report) = run_td(sc, td_cfg)?;
            let mut r = Results::new(RunMode::Td, sc, td_cfg, report);
            r.path = Some(path);
            r
        }
    })
}

fn single_run(
    sc: &Scenario,
    mode: Mode,
    sca_cfg: &ScaConfig,
    td_cfg: &TdConfig,
    out: &Path,
) -> i32 {
    let results = match solve_mode(sc, mode, sca_cfg, td_cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return failure_code(&e);
        }
    };
    if let Err(e) = export_run(out, &results, SAMPLE_DT) {
        eprintln!("error: writing {}: {e}", out.display());
        return EXIT_USAGE;
    }
    let r = &results.report;
    println!(
        "{:?}: status {:?}, min secrecy throughput {:.4} bits/Hz after {}+{} iterations; results in {}",
        results.mode,
        r.status,
        r.objective,
        r.iters,
        r.polish_iters,
        out.display()
    );
    if let Some(msg) = &r.message {
        eprintln!("note: {msg}");
    }
    exit_code(r)
}

fn run_sweep(
    args: &Args,
    sc: &Scenario,
    sweep: Sweep,
    sca_cfg: &ScaConfig,
    td_cfg: &TdConfig,
    out: &Path,
) -> i32 {
    let scenarios: Vec<(u64, Scenario)> = match args.sweep_seeds {
        None => vec![(args.seed, sc.clone())],
        Some(n) => (1..=n)
            .map(|seed| {
                let mut s = random_scenario(seed, args.random_k.max(1), 500.0);
                if let Some(nt) = args.n_turn {
                    s.n_turn = nt;
                }
                (seed, s)
            })
            .collect(),
    };
    // (param, value, seed, scenario, mode, slot config)
    let mut jobs: Vec<(String, f64, u64, Scenario, Mode, TdConfig)> = Vec::new();
    for (seed, base) in &scenarios {
        match sweep {
            Sweep::Pj => {
                for mw in [0.1, 1.0, 10.0, 100.0] {
                    jobs.push((
                        "pj_mw".into(),
                        mw,
                        *seed,
                        base.with_p_j(mw * 1e-3),
                        args.mode,
                        *td_cfg,
                    ));
                }
            }
            Sweep::Speed => {
                for v in [5.0, 10.0, 15.0, 20.0] {
                    let mut s = base.clone();
                    s.v_max = v;
                    jobs.push(("speed_mps".into(), v, *seed, s, args.mode, *td_cfg));
                }
            }
            Sweep::N0 => {
                jobs.push((
                    "coshf".into(),
                    0.0,
                    *seed,
                    base.clone(),
                    Mode::Coshf,
                    *td_cfg,
                ));
                for n0 in [10, 20, 40] {
                    jobs.push((
                        "n0".into(),
                        n0 as f64,
                        *seed,
                        base.clone(),
                        Mode::Td,
                        TdConfig { n0, ..*td_cfg },
                    ));
                }
            }
        }
    }
    let mut rows = Vec::new();
    let mut worst = EXIT_OK;
    for (param, value, seed, s, mode, td) in jobs {
        let t0 = Instant::now();
        let dir = out.join(format!("{param}_{value}_seed{seed}"));
        let (row_status, objective, fractional, iters, code) =
            match solve_mode(&s, mode, sca_cfg, &td) {
                Ok(res) => {
                    if let Err(e) = export_run(&dir, &res, SAMPLE_DT) {
                        eprintln!("error: writing {}: {e}", dir.display());
                        return EXIT_USAGE;
                    }
                    let r = &res.report;
                    (
                        r.status,
                        r.objective,
                        r.objective_fractional,
                        r.iters + r.polish_iters,
                        exit_code(r),
                    )
                }
                Err(e) => {
                    eprintln!("{param}={value} seed {seed}: {e}");
                    (
                        RunStatus::Infeasible,
                        f64::NAN,
                        f64::NAN,
                        0,
                        failure_code(&e),
                    )
                }
            };
        worst = worst.max(code);
        println!("{param}={value} seed {seed}: {row_status:?} objective {objective:.4}");
        rows.push(SweepRow {
            param,
            value,
            seed,
            objective,
            objective_fractional: fractional,
            status: row_status,
            iters,
            wallclock_s: t0.elapsed().as_secs_f64(),
        });
    }
    let name = match sweep {
        Sweep::Pj => "sweep_pj.csv",
        Sweep::N0 => "sweep_n0.csv",
        Sweep::Speed => "sweep_speed.csv",
    };
    if let Err(e) = write_sweep(&out.join(name), &rows) {
        eprintln!("error: writing sweep table: {e}");
        return EXIT_USAGE;
    }
    worst
}
