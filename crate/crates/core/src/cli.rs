//! Command-line front end for the `redmap` binary.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::chaos::{self, OrbitConfig};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::stability;
use crate::sweep::{self, core_midpoint};

/// Environment variable holding the worker count for sweeps and grids.
pub const WORKERS_ENV: &str = "REDMAP_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "redmap", version, about = "Dynamics of the generalized RED average-queue map")]
struct Cli {
    /// Worker threads for sweeps and grids (overrides REDMAP_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set control.p_max=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the normalized constants, thresholds and fixed point.
    Model {
        #[command(flatten)]
        common: Common,
    },
    /// Check the global-stability criteria.
    Verdict {
        #[command(flatten)]
        common: Common,
    },
    /// Orbit-chain certificate and Lyapunov exponent.
    Chaos {
        #[command(flatten)]
        common: Common,
        /// Initial state for the Lyapunov estimate (default: core midpoint).
        #[arg(long)]
        x0: Option<f64>,
    },
    /// Bifurcation diagram as CSV.
    Bif {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: Option<String>,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Start each point from the previous point's final state.
        #[arg(long)]
        continuation: bool,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Averaging weight at which the fixed point is lost.
    Wbif {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        w_lo: Option<f64>,
        #[arg(long)]
        w_hi: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// `w_bif` over an (alpha, beta) grid as CSV.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Grid points per axis.
        #[arg(long)]
        points: Option<usize>,
        /// Comma-separated connection counts; one CSV per value.
        #[arg(long, value_delimiter = ',')]
        n_values: Vec<f64>,
        /// Output file; with several N values, `_N<value>` is inserted before the extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status for an error: 2 for configuration and validation problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::Constraint(_) => 2,
        _ => 1,
    }
}

/// Runs the CLI with the process's standard streams.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI writing to the given streams and returns the exit status.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match run(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn workers(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse::<usize>().map(Some).map_err(|_| {
            Error::Config(format!("{WORKERS_ENV} must be a non-negative integer, got `{v}`"))
        }),
        _ => Ok(None),
    }
}

fn load(common: &Common, extra: Vec<String>) -> Result<Config> {
    let mut sets = common.sets.clone();
    sets.extend(extra);
    Config::from_file(common.config.as_deref(), &sets)
}

fn shortcut<T: ToString>(key: &str, v: Option<T>) -> Option<String> {
    v.map(|v| format!("{key}={}", v.to_string()))
}

fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let threads = workers(cli.workers)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Io(format!("cannot start worker pool: {e}")))?;
    dispatch(cli.command, &pool, out, err)
}

fn dispatch(
    command: Command,
    pool: &rayon::ThreadPool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    match command {
        Command::Model { common } => {
            let cfg = load(&common, vec![])?;
            let m = cfg.model_spec().build()?;
            let x_star = m.fixed_point().map(|fp| fp.x_star);
            if common.json {
                let v = json!({
                    "A1": m.a1(),
                    "A2": m.a2(),
                    "theta_l": m.theta_l(),
                    "theta_r": m.theta_r(),
                    "x_star": x_star,
                    "continuous_at_theta_r": m.continuous_at_theta_r(),
                });
                writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(json_err)?)?;
            } else {
                writeln!(out, "A1 = {:.9}", m.a1())?;
                writeln!(out, "A2 = {:.9}", m.a2())?;
                writeln!(out, "theta_l = {:.12}", m.theta_l())?;
                writeln!(out, "theta_r = {:.12}", m.theta_r())?;
                match x_star {
                    Some(x) => writeln!(out, "x_star = {x:.12}")?,
                    None => writeln!(out, "x_star = none (A1 >= A2 + x_max)")?,
                }
                writeln!(out, "continuous at theta_r = {}", m.continuous_at_theta_r())?;
            }
        }
        Command::Verdict { common } => {
            let cfg = load(&common, vec![])?;
            let v = stability::verdict(&cfg.model_spec().build()?);
            if common.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(json_err)?)?;
            } else {
                write!(out, "{v}")?;
            }
        }
        Command::Chaos { common, x0 } => {
            let cfg = load(&common, shortcut("orbit.x0", x0).into_iter().collect())?;
            let m = cfg.model_spec().build()?;
            let cert = chaos::li_yorke_certificate(&m);
            let start = cfg.orbit.x0.unwrap_or_else(|| core_midpoint(&m));
            let orbit_cfg = OrbitConfig::new(start, cfg.orbit.sweep.transient, cfg.orbit.sweep.lyapunov_samples)?;
            let lyap = chaos::lyapunov(&m, &orbit_cfg)?;
            if common.json {
                let v = json!({ "certificate": cert, "lyapunov": lyap, "x0": start });
                writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(json_err)?)?;
            } else {
                if cert.applicable {
                    writeln!(out, "orbit chain from x0 = {:.12}", cert.x0)?;
                    writeln!(
                        out,
                        "f(x0) = {:.12}, f^2(x0) = {:.12}, f^3(x0) = {:.12}",
                        cert.orbit[0], cert.orbit[1], cert.orbit[2]
                    )?;
                    writeln!(out, "case = {:?}", cert.case.unwrap_or(chaos::ChainCase::I))?;
                    writeln!(out, "construction ok = {}", cert.construction_ok)?;
                    writeln!(out, "chain f^3(x0) >= x0 > f(x0) > f^2(x0) holds = {}", cert.exact_chain_holds)?;
                    if let Some(b) = cert.case_one_bound {
                        writeln!(out, "first-order bound (reported only) = {b}")?;
                    }
                    if let Some(b) = cert.case_two_bound {
                        writeln!(out, "theta_r <= (1-w)/(3-w+w^2) = {b}")?;
                    }
                } else {
                    writeln!(
                        out,
                        "orbit chain not applicable: {}",
                        cert.reason.as_deref().unwrap_or("")
                    )?;
                }
                writeln!(out, "lyapunov(x0 = {start:.6}) = {lyap:.9}")?;
            }
        }
        Command::Bif {
            common,
            param,
            lo,
            hi,
            points,
            continuation,
            out: path,
        } => {
            let mut extra: Vec<String> = [
                shortcut("sweep.param", param.map(|p| format!("\"{p}\""))),
                shortcut("sweep.lo", lo),
                shortcut("sweep.hi", hi),
                shortcut("sweep.points", points),
            ]
            .into_iter()
            .flatten()
            .collect();
            if continuation {
                extra.push("orbit.continuation=true".into());
            }
            let cfg = load(&common, extra)?;
            let axis = cfg.sweep.axis()?;
            let spec = cfg.model_spec();
            spec.build()?;
            let rows = pool.install(|| sweep::bifurcation_sweep(&spec, &axis, &cfg.orbit.sweep))?;
            for r in rows.iter().filter(|r| r.is_skipped()) {
                writeln!(
                    err,
                    "skipped {} = {}: {}",
                    axis.param,
                    r.value,
                    r.skipped.as_deref().unwrap_or("")
                )?;
            }
            with_output(path.as_deref(), out, |w| {
                sweep::write_bif_csv(w, axis.param, cfg.orbit.sweep.samples, &rows)
            })?;
        }
        Command::Wbif {
            common,
            w_lo,
            w_hi,
            tol,
        } => {
            let extra = [
                shortcut("scan.w_lo", w_lo),
                shortcut("scan.w_hi", w_hi),
                shortcut("scan.tol", tol),
            ]
            .into_iter()
            .flatten()
            .collect();
            let cfg = load(&common, extra)?;
            let spec = cfg.model_spec();
            spec.build()?;
            let outcome = pool.install(|| sweep::w_bif(&spec, &cfg.scan))?;
            if common.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&outcome).map_err(json_err)?)?;
            } else {
                match &outcome {
                    sweep::WbifOutcome::Found { w_bif, w_stable } => {
                        writeln!(out, "w_bif = {w_bif:.6} (settles at {w_stable:.6})")?
                    }
                    other => writeln!(out, "w_bif not found: {}", other.status())?,
                }
            }
        }
        Command::Grid {
            common,
            points,
            n_values,
            out: path,
        } => {
            let mut extra: Vec<String> = shortcut("grid.points", points).into_iter().collect();
            if !n_values.is_empty() {
                let list: Vec<String> = n_values.iter().map(|n| n.to_string()).collect();
                extra.push(format!("grid.n_values=[{}]", list.join(",")));
            }
            let cfg = load(&common, extra)?;
            let g = &cfg.grid;
            let ns = if g.n_values.is_empty() {
                vec![cfg.system.n]
            } else {
                g.n_values.clone()
            };
            if ns.len() > 1 && path.is_none() {
                return Err(Error::Config(
                    "grid with several N values needs --out to name the files".into(),
                ));
            }
            for &n in &ns {
                let mut spec = cfg.model_spec();
                spec.system.n = n;
                spec.system.validate()?;
                let cells = pool.install(|| {
                    sweep::alpha_beta_grid(
                        &spec,
                        (g.alpha_lo, g.alpha_hi),
                        (g.beta_lo, g.beta_hi),
                        g.points,
                        &cfg.scan,
                    )
                })?;
                let target = match (&path, ns.len()) {
                    (Some(p), k) if k > 1 => Some(suffixed(p, n)),
                    (p, _) => p.clone(),
                };
                with_output(target.as_deref(), out, |w| sweep::write_grid_csv(w, &cells))?;
                if let Some(t) = &target {
                    writeln!(err, "wrote {}", t.display())?;
                }
            }
        }
    }
    Ok(())
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

fn suffixed(path: &Path, n: f64) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_N{n}.{}", ext.to_string_lossy()),
        None => format!("{stem}_N{n}"),
    };
    path.with_file_name(name)
}

fn with_output(
    path: Option<&Path>,
    out: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p)
                .map_err(|e| Error::Io(format!("cannot create {}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => body(out),
    }
}
