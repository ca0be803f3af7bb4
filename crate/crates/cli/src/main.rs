mod config;
mod probe;

/// `println!` that ignores a closed standard output.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use lmce_core::classical::{small_phase_check, solve_classical_with, ClassicalOptions};
use lmce_core::corrugation::{iterate_with, make_schedule, IterateOptions};
use lmce_core::deficit::{initial_data, InitialOptions};
use lmce_core::field::io::{load, save};
use lmce_core::field::NormOptions;
use lmce_core::verify::{convergence_report, ReportOptions, TestFunctionSet};
use lmce_core::{Error, ScalarField, SymMatrixField, VectorField};
use serde_json::{json, Value};

use config::Config;
use probe::{ProbeArgs, ProbeKind};

#[derive(Parser)]
#[command(name = "lmce", version, about = "Convex integration for the Lagrangian mean curvature equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the initial subsolution, run the stages and write the report.
    Run {
        config: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the fields of every intermediate state.
        #[arg(long)]
        dump_stages: bool,
        /// Record wall-clock time per stage (makes the report non-reproducible).
        #[arg(long)]
        timings: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve the small-phase problem by Picard iteration.
    Classical {
        config: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a numerical probe and print its JSON.
    Probe {
        kind: ProbeKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        lams: Vec<f64>,
        #[arg(long, default_value_t = 1.5)]
        tau: f64,
        #[arg(long, default_value_t = 0.3)]
        hmax: f64,
        /// Write the JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise a report written by `run`.
    Report { path: PathBuf },
    /// Print statistics of a field file, or its values with `--values`.
    Dump {
        path: PathBuf,
        #[arg(long)]
        values: bool,
    },
}

/// Exit status with a machine-readable reason.
struct Failure {
    exit: u8,
    code: String,
    message: String,
}

impl Failure {
    fn validation(e: Error) -> Self {
        Failure { exit: 2, code: e.code().into(), message: e.to_string() }
    }
    fn stage(e: Error) -> Self {
        Failure { exit: 3, code: e.code().into(), message: e.to_string() }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, grid, stages, seed, dump_stages, timings, out } => {
            cmd_run(&config, grid, stages, seed, dump_stages, timings, &out)
        }
        Command::Classical { config, grid, out } => cmd_classical(&config, grid, &out),
        Command::Probe { kind, config, grid, seed, lams, tau, hmax, out } => {
            cmd_probe(kind, config.as_deref(), grid, seed, lams, tau, hmax, out.as_deref())
        }
        Command::Report { path } => cmd_report(&path),
        Command::Dump { path, values } => cmd_dump(&path, values),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "code": f.code, "message": f.message, "exit": f.exit }));
            ExitCode::from(f.exit)
        }
    }
}

fn load_config(path: &Path, grid: Option<usize>) -> std::result::Result<Config, Failure> {
    let mut c = Config::load(path).map_err(Failure::validation)?;
    if let Some(n) = grid {
        c.grid = n;
    }
    Ok(c)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> lmce_core::Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn save_state(dir: &Path, v: &ScalarField, w: &VectorField, rho: &ScalarField, h: &SymMatrixField) -> lmce_core::Result<()> {
    fs::create_dir_all(dir)?;
    save(v, dir.join("v.field"))?;
    save(w, dir.join("w.field"))?;
    save(rho, dir.join("rho.field"))?;
    save(h, dir.join("h.field"))
}

fn cmd_run(
    path: &Path,
    grid: Option<usize>,
    stages: Option<usize>,
    seed: Option<u64>,
    dump_stages: bool,
    timings: bool,
    out: &Path,
) -> Outcome {
    let mut cfg = load_config(path, grid)?;
    if let Some(q) = stages {
        cfg.schedule.stages = q;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let v = Failure::validation;
    let g = cfg.make_grid().map_err(v)?;
    let phase = cfg.phase(&g).map_err(v)?;
    let bdata = cfg.boundary(&g).map_err(v)?;
    let opts = InitialOptions { w0: cfg.w0(&g).map_err(v)?, c2: cfg.c2, ..Default::default() };
    let init = initial_data(&bdata, &phase, &opts).map_err(v)?;

    let s = &cfg.schedule;
    let delta1 = s.delta1.unwrap_or_else(|| init.state.rho.max_abs().powi(2));
    let m = s.lam1 * delta1.powf(1.0 / (2.0 * s.beta));
    let sched_opts = cfg.schedule_options(delta1).map_err(v)?;
    let schedule = make_schedule(s.beta, s.sigma, m, delta1, s.stages, &sched_opts).map_err(v)?;
    schedule.check_feasible(&g).map_err(v)?;

    fs::create_dir_all(out).map_err(|e| v(e.into()))?;
    if dump_stages {
        let st = &init.state;
        save_state(&out.join("stage_0"), &st.v.value, &st.w.value, &st.rho, &st.h).map_err(v)?;
    }
    let iopts = IterateOptions { stage: cfg.stage.into(), ..Default::default() };
    let mut times = Vec::new();
    let mut clock = Instant::now();
    let run = iterate_with(&init.state, &schedule, &phase, &iopts, |st, rec| {
        times.push(clock.elapsed().as_secs_f64());
        if dump_stages {
            save_state(&out.join(format!("stage_{}", rec.q + 1)), &st.v.value, &st.w.value, &st.rho, &st.h)?;
        }
        clock = Instant::now();
        Ok(())
    })
    .map_err(Failure::stage)?;

    let tests = TestFunctionSet::standard(&g).map_err(v)?;
    let ropts = ReportOptions { norms: NormOptions { seed: cfg.seed, ..Default::default() }, ..Default::default() };
    let mut report = convergence_report(&run, &schedule, &phase, &bdata, &tests, &ropts).map_err(Failure::stage)?;
    report.config = serde_json::to_value(&cfg).unwrap_or(Value::Null);
    report.probes.insert(
        "initial".into(),
        json!({
            "curl_residual": init.curl_residual,
            "psi_max": init.psi.max(),
            "delta1": delta1,
            "m": m,
        }),
    );
    if timings {
        report.wall_times = Some(times);
    }
    write_json(&out.join("report.json"), &report).map_err(Failure::stage)?;
    let last = run.states.last().expect("initial state is kept");
    save_state(out, &last.v.value, &last.w.value, &last.rho, &last.h).map_err(Failure::stage)?;

    match &run.stop {
        None => Ok(()),
        Some(stop) => Err(Failure {
            exit: 3,
            code: stop.code().into(),
            message: serde_json::to_string(stop).unwrap_or_default(),
        }),
    }
}

fn cmd_classical(path: &Path, grid: Option<usize>, out: &Path) -> Outcome {
    let cfg = load_config(path, grid)?;
    let v = Failure::validation;
    let g = cfg.make_grid().map_err(v)?;
    let phase = cfg.phase(&g).map_err(v)?;
    let bdata = cfg.boundary(&g).map_err(v)?;
    let c = &cfg.classical;
    let opts = ClassicalOptions { mu: c.mu, kappa: c.kappa, tol: c.tol, max_iter: c.max_iter, ..Default::default() };
    let sol = solve_classical_with(&bdata, &phase, &opts).map_err(|e| match e {
        Error::NotContracting { .. } | Error::NoConvergence { .. } => Failure::stage(e),
        e => Failure::validation(e),
    })?;
    let tan_kappa = small_phase_check(&phase, c.kappa).map_err(v)?;
    fs::create_dir_all(out).map_err(|e| v(e.into()))?;
    save(&sol.v, out.join("v.field")).map_err(Failure::stage)?;
    let report = json!({
        "config": cfg,
        "iterations": sol.iterations,
        "residual": sol.residual(),
        "residuals": sol.residuals,
        "updates": sol.updates,
        "contraction": sol.contraction,
        "tan_c0": sol.tan_c0,
        "tan_c_kappa": tan_kappa,
        "mu": c.mu,
    });
    write_json(&out.join("classical.json"), &report).map_err(Failure::stage)?;
    out!("{}", json!({ "iterations": sol.iterations, "residual": sol.residual(), "contraction": sol.contraction }));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_probe(
    kind: ProbeKind,
    config: Option<&Path>,
    grid: Option<usize>,
    seed: u64,
    lams: Vec<f64>,
    tau: f64,
    hmax: f64,
    out: Option<&Path>,
) -> Outcome {
    let config = match config {
        Some(p) => Some(load_config(p, None)?),
        None => None,
    };
    let args = ProbeArgs { config, grid, seed, lams, hmax, tau };
    let value = probe::run(kind, &args).map_err(Failure::validation)?;
    match out {
        Some(p) => write_json(p, &value).map_err(Failure::validation)?,
        None => out!("{}", serde_json::to_string_pretty(&value).unwrap_or_default()),
    }
    Ok(())
}

fn cmd_report(path: &Path) -> Outcome {
    let bad = |m: String| Failure { exit: 2, code: "report_format".into(), message: m };
    let text = fs::read_to_string(path).map_err(|e| Failure::validation(e.into()))?;
    let r: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let states = r["states"].as_array().ok_or_else(|| bad("missing states".into()))?;
    out!("{:>3} {:>12} {:>12} {:>10}", "q", "weak_res", "bdry_dev", "rho_max");
    for s in states {
        out!(
            "{:>3} {:>12.4e} {:>12.3e} {:>10.4}",
            s["q"].as_u64().unwrap_or(0),
            s["weak_residual_max"].as_f64().unwrap_or(f64::NAN),
            s["boundary_deviation"].as_f64().unwrap_or(f64::NAN),
            s["rho_max"].as_f64().unwrap_or(f64::NAN),
        );
    }
    if let Some(stages) = r["per_stage"].as_array() {
        out!("{:>3} {:>12} {:>12} {:>10} {:>10}", "q", "dv_0", "c1_ratio", "E_0", "min_eig");
        for s in stages {
            out!(
                "{:>3} {:>12.4e} {:>12.4} {:>10.3e} {:>10.4}",
                s["q"].as_u64().unwrap_or(0),
                s["cauchy"][0].as_f64().unwrap_or(f64::NAN),
                s["c1_ratio"].as_f64().unwrap_or(f64::NAN),
                s["e_norm"][0].as_f64().unwrap_or(f64::NAN),
                s["min_eig_after"].as_f64().unwrap_or(f64::NAN),
            );
        }
    }
    match &r["stop"] {
        Value::Null => out!("stop: none"),
        s => out!("stop: {s}"),
    }
    Ok(())
}

fn field_components(path: &Path) -> lmce_core::Result<usize> {
    let text = fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or("");
    header
        .split_whitespace()
        .nth(7)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("missing header".into()))
}

fn cmd_dump(path: &Path, values: bool) -> Outcome {
    let v = Failure::validation;
    let (grid, comps): (_, Vec<Vec<f64>>) = match field_components(path).map_err(v)? {
        1 => {
            let f: ScalarField = load(path).map_err(v)?;
            (f.grid().clone(), vec![f.values().to_vec()])
        }
        2 => {
            let f: VectorField = load(path).map_err(v)?;
            (f.grid().clone(), vec![f.x().to_vec(), f.y().to_vec()])
        }
        3 => {
            let f: SymMatrixField = load(path).map_err(v)?;
            (f.grid().clone(), vec![f.xx().to_vec(), f.xy().to_vec(), f.yy().to_vec()])
        }
        n => return Err(v(Error::Format(format!("unsupported component count {n}")))),
    };
    if values {
        for k in 0..grid.len() {
            let (x, y) = grid.point(k);
            let vals: Vec<String> = comps.iter().map(|c| c[k].to_string()).collect();
            out!("{x} {y} {}", vals.join(" "));
        }
        return Ok(());
    }
    let stats: Vec<Value> = comps
        .iter()
        .map(|c| {
            let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            json!({ "min": min, "max": max, "max_abs": min.abs().max(max.abs()) })
        })
        .collect();
    out!("{}", json!({ "nx": grid.nx(), "ny": grid.ny(), "hx": grid.hx(), "hy": grid.hy(), "components": stats }));
    Ok(())
}
