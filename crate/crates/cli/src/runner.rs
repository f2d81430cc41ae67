//! Subcommand execution: build the model from the configuration, run it, and
//! persist CSV artifacts plus a line-oriented `summary.kv` report.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use magnetoplate_core::bulk::{gamma_table, AnsatzSpec, GammaRow};
use magnetoplate_core::fields::{write_field2_csv, DirectorField2};
use magnetoplate_core::magnetostatics::{
    magnetostatic_limit_check, poisson_oracle, sample_profile, slab_demag_energy, MagnetostaticRow,
    OracleBox,
};
use magnetoplate_core::quasistatic::{energy_balance_report, evolve, EvolutionTrace};
use magnetoplate_core::reduced::{energy_e0, work_l0};
use magnetoplate_core::static_solver::{check_stability, minimize_f0_multistart};
use magnetoplate_core::{Field2, Grid2, LoadSchedule, Loads, Material, ReducedState};

use crate::config::{ConfigError, RunConfig};

/// Exit codes: 0 ok, 1 configuration error, 2 numerical failure,
/// 3 acceptance violation in `check`.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Static,
    Evolve,
    Gamma,
    Magstat,
    Check,
}

impl Subcommand {
    pub fn parse(name: &str) -> Option<Subcommand> {
        match name {
            "static" => Some(Subcommand::Static),
            "evolve" => Some(Subcommand::Evolve),
            "gamma" => Some(Subcommand::Gamma),
            "magstat" => Some(Subcommand::Magstat),
            "check" => Some(Subcommand::Check),
            _ => None,
        }
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Worker cap for the row-parallel table loops.
fn worker_count() -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("MAGNETOPLATE_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n > 0).unwrap_or(1).min(available),
        Err(_) => available,
    }
}

// Run one job per thickness on up to `worker_count()` threads; results come
// back in input order, so output is independent of the worker count.
fn parallel_rows<T: Send>(
    hs: &[f64],
    job: impl Fn(f64) -> Result<T, magnetoplate_core::Error> + Sync,
) -> Result<Vec<T>, magnetoplate_core::Error> {
    let workers = worker_count().min(hs.len().max(1));
    if workers <= 1 {
        return hs.iter().map(|&h| job(h)).collect();
    }
    let mut results: Vec<Option<Result<T, magnetoplate_core::Error>>> =
        (0..hs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let job = &job;
        let chunks = results.chunks_mut(hs.len().div_ceil(workers));
        for (c, chunk) in chunks.enumerate() {
            let start = c * hs.len().div_ceil(workers);
            let hs = &hs[start..start + chunk.len()];
            scope.spawn(move || {
                for (slot, &h) in chunk.iter_mut().zip(hs) {
                    *slot = Some(job(h));
                }
            });
        }
    });
    results.into_iter().map(|r| r.unwrap()).collect()
}

struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    fn new(command: &str, seed: u64) -> Summary {
        Summary {
            lines: vec![
                ("command".into(), command.into()),
                ("seed".into(), seed.to_string()),
            ],
        }
    }

    fn push(&mut self, key: &str, value: impl Into<String>) {
        self.lines.push((key.into(), value.into()));
    }

    fn push_f64(&mut self, key: &str, value: f64) {
        self.push(key, fmt_value(value));
    }

    fn defaults(&mut self, cfg: &RunConfig) {
        for (key, value) in &cfg.defaults_report {
            self.push(&format!("default.{key}"), value.clone());
        }
    }

    fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        fs::write(dir.join("summary.kv"), out)
    }
}

fn ensure_out_dir(cfg: &mut RunConfig, out_flag: Option<&str>) -> Result<PathBuf, ConfigError> {
    let dir = match out_flag {
        Some(d) => d.to_string(),
        None => cfg.out_dir(),
    };
    let path = PathBuf::from(dir);
    fs::create_dir_all(&path).map_err(|e| ConfigError {
        key: "run.out".into(),
        msg: format!("cannot create output directory: {e}"),
    })?;
    Ok(path)
}

fn dump_state(dir: &Path, prefix: &str, state: &ReducedState, grid: &Grid2) -> std::io::Result<()> {
    let write = |name: &str, field: &Field2| -> std::io::Result<()> {
        let mut f = fs::File::create(dir.join(format!("{prefix}{name}.csv")))?;
        write_field2_csv(&mut f, field, grid).map_err(std::io::Error::other)?;
        f.flush()
    };
    write("u", &state.u)?;
    write("v", &state.v)?;
    write("zeta", state.zeta.field())
}

// Scenario plumbing: the built-in schedules and initial states.
fn stock_schedule(grid: &Grid2, t_end: f64) -> LoadSchedule {
    let mut at_end = Loads::zero(grid);
    at_end.hfield = Field2::constant(grid, &[4.0, 0.0, 0.0]);
    LoadSchedule::new(vec![0.0, t_end], vec![Loads::zero(grid), at_end], grid)
        .expect("stock schedule")
}

pub struct StaticArtifacts {
    pub state: ReducedState,
    pub energy: f64,
    pub converged: bool,
}

pub fn run_static(cfg: &mut RunConfig, out: &Path) -> Result<i32, ConfigError> {
    let material = cfg.material()?;
    let grid = cfg.grid2()?;
    let mut opts = cfg.solve_options()?;
    let scenario = cfg.scenario("free");
    let seed = cfg.seed()?;
    if scenario == "zero_load_frozen" {
        opts.freeze_zeta = true;
    }
    let t_end = cfg.evolve_t_end()?;
    let schedule = cfg.schedule(&grid, t_end)?;

    let initial = ReducedState::flat(&grid, [0.0, 0.0, 1.0]).map_err(to_cfg)?;
    let (state, report) = minimize_f0_multistart(&initial, 0.0, &schedule, &grid, &material, &opts)
        .map_err(to_cfg)?;
    let stability =
        check_stability(&state, 0.0, &schedule, &grid, &material, 3, seed, &opts).map_err(to_cfg)?;

    let mut summary = Summary::new("static", seed);
    summary.push("scenario", scenario);
    summary.push_f64("energy", report.energy);
    summary.push_f64("membrane", report.breakdown.membrane);
    summary.push_f64("bending", report.breakdown.bending);
    summary.push_f64("exchange", report.breakdown.exchange);
    summary.push_f64("magnetostatic", report.breakdown.magnetostatic);
    summary.push_f64("grad_sup", report.grad_sup);
    summary.push("iterations", report.iterations.to_string());
    summary.push("converged", report.converged.to_string());
    summary.push("stalled", report.stalled.to_string());
    summary.push_f64("stability_margin", stability.min_margin);
    summary.defaults(cfg);
    summary.write(out).map_err(io_cfg)?;
    dump_state(out, "", &state, &grid).map_err(io_cfg)?;

    Ok(if report.converged {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    })
}

fn to_cfg(e: magnetoplate_core::Error) -> ConfigError {
    ConfigError {
        key: String::new(),
        msg: e.to_string(),
    }
}

fn io_cfg(e: std::io::Error) -> ConfigError {
    ConfigError {
        key: "run.out".into(),
        msg: e.to_string(),
    }
}

/// Trace CSV: one row per accepted state.
pub fn write_trace_csv<W: Write>(
    w: &mut W,
    trace: &EvolutionTrace,
    balance: &[f64],
) -> std::io::Result<()> {
    writeln!(
        w,
        "i,t,F0,membrane,bending,exchange,magstat,L0,d_inc,var_cum,power_cum,balance_resid"
    )?;
    for i in 0..trace.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            i,
            fmt_value(trace.times[i]),
            fmt_value(trace.f0[i]),
            fmt_value(trace.breakdown[i].membrane),
            fmt_value(trace.breakdown[i].bending),
            fmt_value(trace.breakdown[i].exchange),
            fmt_value(trace.breakdown[i].magnetostatic),
            fmt_value(trace.work[i]),
            fmt_value(trace.d_increment[i]),
            fmt_value(trace.var_cum[i]),
            fmt_value(trace.power_cum[i]),
            fmt_value(balance[i]),
        )?;
    }
    Ok(())
}

/// Parse a trace CSV back into its numeric columns (round-trip checks).
pub fn read_trace_csv(text: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| ConfigError {
        key: "trace".into(),
        msg: "empty trace".into(),
    })?;
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|p| {
                p.trim().parse::<f64>().map_err(|e| ConfigError {
                    key: "trace".into(),
                    msg: format!("row {}: bad number `{p}`: {e}", n + 1),
                })
            })
            .collect::<Result<_, _>>()?;
        if row.len() != cols {
            return Err(ConfigError {
                key: "trace".into(),
                msg: format!("row {} has {} columns, expected {cols}", n + 1, row.len()),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn run_evolve(cfg: &mut RunConfig, out: &Path) -> Result<i32, ConfigError> {
    let material = cfg.material()?;
    let grid = cfg.grid2()?;
    let opts = cfg.solve_options()?;
    let seed = cfg.seed()?;
    let scenario = cfg.scenario("stock");
    let partition = cfg.evolve_partition()?;
    let t_end = *partition.times().last().unwrap();
    let sigma = cfg.sigma()?;
    let huber_eps = cfg.huber_eps()?;
    let user_constant = cfg.balance_constant()?;

    let has_schedule_keys = cfg.get("schedule.times").is_some();
    let schedule = if has_schedule_keys {
        cfg.schedule(&grid, t_end)?
    } else if scenario == "stock" {
        stock_schedule(&grid, t_end)
    } else {
        cfg.schedule(&grid, t_end)?
    };
    if schedule.t_last() < t_end - 1e-12 {
        return Err(ConfigError {
            key: "schedule.times".into(),
            msg: format!(
                "schedule ends at {} but the partition runs to {t_end}",
                schedule.t_last()
            ),
        });
    }

    // Well-prepared initial state: minimize at t = 0 from the flat director.
    let flat = ReducedState::flat(&grid, [0.0, 0.0, 1.0]).map_err(to_cfg)?;
    let (initial, _) =
        minimize_f0_multistart(&flat, 0.0, &schedule, &grid, &material, &opts).map_err(to_cfg)?;

    let outcome = evolve(
        &initial, &partition, sigma, huber_eps, &schedule, &grid, &material, &opts,
    )
    .map_err(to_cfg)?;
    let trace = &outcome.trace;

    // Balance diagnostics (partial traces of at least two states included).
    let balance = if trace.len() >= 2 {
        let report = energy_balance_report(trace, &schedule, &grid, &material, sigma, user_constant)
            .map_err(to_cfg)?;
        let mut col = vec![0.0];
        col.extend(report.rows.iter().map(|r| r.balance_residual));
        Some((report, col))
    } else {
        None
    };
    let balance_col = balance
        .as_ref()
        .map(|(_, col)| col.clone())
        .unwrap_or_else(|| vec![0.0; trace.len()]);

    let mut f = fs::File::create(out.join("trace.csv")).map_err(io_cfg)?;
    write_trace_csv(&mut f, trace, &balance_col).map_err(io_cfg)?;
    for i in 0..trace.len() {
        dump_state(out, &format!("step_{i:03}_"), &trace.states[i], &grid).map_err(io_cfg)?;
    }

    let mut summary = Summary::new("evolve", seed);
    summary.push("scenario", scenario);
    summary.push("steps", (trace.len() - 1).to_string());
    summary.push_f64("sigma", sigma);
    summary.push_f64("huber_eps", huber_eps);
    summary.push_f64("initial_margin", trace.initial_margin);
    summary.push_f64("final_f0", *trace.f0.last().unwrap());
    summary.push_f64("final_var", *trace.var_cum.last().unwrap());
    if let Some((report, _)) = &balance {
        summary.push_f64("apriori_ratio", report.apriori_ratio_at_user_constant);
        summary.push("apriori_flagged", report.apriori_flagged.to_string());
    }
    match &outcome.failure {
        Some((step, e)) => {
            summary.push("failed_at_step", step.to_string());
            summary.push("failure", e.to_string());
        }
        None => summary.push("completed", "true"),
    }
    summary.defaults(cfg);
    summary.write(out).map_err(io_cfg)?;

    Ok(if outcome.failure.is_none() {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    })
}

pub fn write_gamma_csv<W: Write>(w: &mut W, rows: &[GammaRow]) -> std::io::Result<()> {
    writeln!(w, "h,E_el,E_exc,E_mag,E_h,E0,gap")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_value(r.h),
            fmt_value(r.elastic),
            fmt_value(r.exchange),
            fmt_value(r.magnetostatic),
            fmt_value(r.total),
            fmt_value(r.reduced),
            fmt_value(r.gap),
        )?;
    }
    Ok(())
}

pub fn run_gamma(cfg: &mut RunConfig, out: &Path) -> Result<i32, ConfigError> {
    let material = cfg.material()?;
    let grid3 = cfg.grid3()?;
    let seed = cfg.seed()?;
    let spec_name = cfg.gamma_spec();
    let hs = cfg.gamma_hs()?;
    let spec = AnsatzSpec::by_name(&spec_name, material).map_err(to_cfg)?;

    // Rows are independent; compute them in parallel but emit in order.
    let rows: Vec<GammaRow> = parallel_rows(&hs, |h| {
        Ok(gamma_table(&spec, &[h], &grid3)?.remove(0))
    })
    .map_err(to_cfg)?;

    let mut f = fs::File::create(out.join("gamma.csv")).map_err(io_cfg)?;
    write_gamma_csv(&mut f, &rows).map_err(io_cfg)?;

    let mut summary = Summary::new("gamma", seed);
    summary.push("spec", spec.name);
    summary.push("rows", rows.len().to_string());
    summary.push_f64("final_gap", rows.last().map(|r| r.gap).unwrap_or(f64::NAN));
    summary.push_f64("reduced_energy", rows.first().map(|r| r.reduced).unwrap_or(f64::NAN));
    summary.defaults(cfg);
    summary.write(out).map_err(io_cfg)?;
    Ok(EXIT_OK)
}

pub fn write_magstat_csv<W: Write>(
    w: &mut W,
    rows: &[MagnetostaticRow],
    oracle: &[Option<f64>],
) -> std::io::Result<()> {
    writeln!(w, "h,E_mag_h,E0_mag,ratio,oracle")?;
    for (r, o) in rows.iter().zip(oracle) {
        let oracle_txt = match o {
            Some(v) => fmt_value(*v),
            None => String::new(),
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_value(r.h),
            fmt_value(r.film_energy),
            fmt_value(r.limit_energy),
            fmt_value(r.ratio),
            oracle_txt,
        )?;
    }
    Ok(())
}

pub fn run_magstat(cfg: &mut RunConfig, out: &Path) -> Result<i32, ConfigError> {
    let grid = cfg.grid2()?;
    let seed = cfg.seed()?;
    let profile = cfg.magstat_profile();
    let hs = cfg.magstat_hs()?;
    let with_oracle = cfg.magstat_oracle()?;
    let (oracle_lz, oracle_cells) = cfg.magstat_oracle_params()?;
    let zeta = sample_profile(&profile, &grid).map_err(to_cfg)?;

    let rows = magnetostatic_limit_check(&zeta, &grid, &hs).map_err(to_cfg)?;
    let oracle: Vec<Option<f64>> = if with_oracle {
        parallel_rows(&hs, |h| {
            let bx = OracleBox::aligned(h, oracle_lz, oracle_cells)?;
            poisson_oracle(&zeta, &grid, h, &bx).map(Some)
        })
        .map_err(to_cfg)?
    } else {
        vec![None; hs.len()]
    };

    let mut f = fs::File::create(out.join("magstat.csv")).map_err(io_cfg)?;
    write_magstat_csv(&mut f, &rows, &oracle).map_err(io_cfg)?;

    let mut summary = Summary::new("magstat", seed);
    summary.push("profile", profile);
    summary.push("rows", rows.len().to_string());
    summary.push_f64(
        "final_ratio",
        rows.last().map(|r| r.ratio).unwrap_or(f64::NAN),
    );
    summary.defaults(cfg);
    summary.write(out).map_err(io_cfg)?;
    Ok(EXIT_OK)
}

/// Dispatch a subcommand; returns the process exit code.
pub fn run(cmd: Subcommand, cfg: &mut RunConfig, out_flag: Option<&str>) -> i32 {
    let out = match ensure_out_dir(cfg, out_flag) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let result = match cmd {
        Subcommand::Static => run_static(cfg, &out),
        Subcommand::Evolve => run_evolve(cfg, &out),
        Subcommand::Gamma => run_gamma(cfg, &out),
        Subcommand::Magstat => run_magstat(cfg, &out),
        Subcommand::Check => return crate::check::run_check(cfg, &out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            // Numerical failures surfaced through the core error strings.
            if e.key.is_empty() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}

/// Convenience: the scaled film energy of a named profile (exposed for the
/// check suite and tests).
pub fn film_energy_of_profile(profile: &str, grid: &Grid2, h: f64) -> Result<f64, ConfigError> {
    let zeta = sample_profile(profile, grid).map_err(to_cfg)?;
    slab_demag_energy(&zeta, grid, h).map_err(to_cfg)
}

/// Convenience: reduced energy of a flat director state (exposed for tests).
pub fn flat_energy(
    direction: [f64; 3],
    grid: &Grid2,
    material: &Material,
) -> Result<f64, ConfigError> {
    let s = ReducedState::flat(grid, direction).map_err(to_cfg)?;
    Ok(energy_e0(&s, grid, material).map_err(to_cfg)?.total())
}

/// Convenience used by the check suite: the Zeeman work of a uniform field
/// against a flat state.
pub fn flat_zeeman_work(
    direction: [f64; 3],
    field: [f64; 3],
    grid: &Grid2,
) -> Result<f64, ConfigError> {
    let s = ReducedState::flat(grid, direction).map_err(to_cfg)?;
    let mut loads = Loads::zero(grid);
    loads.hfield = Field2::constant(grid, &field);
    work_l0(&loads, &s, grid).map_err(to_cfg)
}

// Re-exports used by the acceptance suite.
pub use magnetoplate_core::quasistatic::EvolveOutcome;

/// Resolve the director sampling used by `magstat` (exposed for tests).
pub fn profile_director(profile: &str, grid: &Grid2) -> Result<DirectorField2, ConfigError> {
    sample_profile(profile, grid).map_err(to_cfg)
}
