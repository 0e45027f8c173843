//! Command-line front end: config ingestion, method dispatch and CSV output.

pub mod config;
pub mod csv;
pub mod examples;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::average;
use crate::error::{Error, Result};
use crate::harmonic::{HarmonicConfig, HarmonicSetup};
use crate::model::{ConverterModel, Param};
use crate::plot::{DutyGrid, PlotSeries};
use crate::sdstab::{self, DEFAULT_CLASSIFY_TOL};
use crate::steady::{self, periodic_solutions, saturated_solutions};
use crate::sweep::{self, SweepOptions};

pub use config::{load_config, load_document, parse_config, ConfigDocument};
use csv::{Cell, Table};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "PWM_SNB_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pwm-snb",
    version,
    about = "Saddle-node bifurcation analysis of PWM DC-DC converters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Io {
    /// Converter config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Write CSV here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Harmonics {
    /// Duty grid lo:hi:step (default from the config).
    #[arg(long)]
    grid: Option<DutyGrid>,
    /// Harmonics kept in the balance sums (default from the config).
    #[arg(long)]
    harmonics: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Periodic solutions, multipliers and classifications.
    Analyze {
        #[command(flatten)]
        io: Io,
        /// Report the orbit at this forced duty ratio instead.
        #[arg(long)]
        duty: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_CLASSIFY_TOL)]
        tol: f64,
    },
    /// S plot: D,S,hdot.
    Splot {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        grid: Option<DutyGrid>,
    },
    /// Harmonic-balance H plot: D,reH,imH,ref.
    Hplot {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        h: Harmonics,
    },
    /// L plots: D,L1,L2,ref1,ref2 (L1 columns only with a ramp).
    Lplot {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        h: Harmonics,
    },
    /// Averaged-model SNB residual: D,avg_residual.
    Avg {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        grid: Option<DutyGrid>,
    },
    /// Periodic solutions over a parameter range.
    Sweep {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        param: Param,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        #[arg(long, default_value_t = 201)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_CLASSIFY_TOL)]
        tol: f64,
    },
    /// Saddle-node point within a parameter bracket: param,D,vo,residual.
    LocateSnb {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        param: Param,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        /// Starting duty ratio for the Newton solve.
        #[arg(long)]
        duty: Option<f64>,
    },
    /// Stroboscopic trajectory: n,iL,vC,d_event.
    Simulate {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = 100)]
        periods: usize,
        /// Initial state as comma-separated values (default zero).
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
    },
    /// Run a built-in example end to end and compare with its reference values.
    Example {
        #[arg(value_parser = ["e1", "e2", "e3", "e4", "e5"])]
        name: String,
    },
    /// Print the canonical form of a config.
    Canonical {
        #[command(flatten)]
        io: Io,
    },
}

/// What a command produced.
#[derive(Debug, Default)]
struct Outcome {
    stdout: String,
    stderr: String,
    file: Option<PathBuf>,
    code: i32,
}

impl Outcome {
    fn csv(io: &Io, text: String) -> Self {
        Outcome {
            stdout: text,
            file: io.output.clone(),
            ..Default::default()
        }
    }

    fn note(mut self, line: impl AsRef<str>) -> Self {
        self.stderr.push_str(line.as_ref());
        self.stderr.push('\n');
        self
    }
}

/// Parse `args` (program name first) and run; returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match thread_pool(err) {
        Some(pool) => pool.install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    };
    match result {
        Ok(o) => {
            let _ = err.write_all(o.stderr.as_bytes());
            match &o.file {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, &o.stdout) {
                        let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
                        return EXIT_ANALYSIS;
                    }
                }
                None => {
                    let _ = out.write_all(o.stdout.as_bytes());
                }
            }
            o.code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ANALYSIS
        }
    }
}

fn thread_pool(err: &mut dyn Write) -> Option<rayon::ThreadPool> {
    let raw = std::env::var(THREADS_ENV).ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => rayon::ThreadPoolBuilder::new().num_threads(n).build().ok(),
        _ => {
            let _ = writeln!(
                err,
                "warning: ignoring {THREADS_ENV}={raw}; expected a positive integer"
            );
            None
        }
    }
}

fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Analyze { io, duty, tol } => analyze(&io, duty, tol),
        Command::Splot { io, grid } => {
            let doc = load_document(&io.config)?;
            let m = doc.model()?;
            let s = sdstab::s_plot(&m, &grid.unwrap_or(doc.analysis.grid));
            let mut t = Table::new(&["D", "S", "hdot"]);
            for (x, v) in s.grid.iter().zip(&s.values) {
                t.row(&[Cell::Num(*x), Cell::Num(*v), Cell::Num(s.reference_level)]);
            }
            Ok(with_gaps(Outcome::csv(&io, t.into_string()), &s))
        }
        Command::Hplot { io, h } => {
            let (setup, grid, cfg) = harmonic_setup(&io, &h)?;
            let s = setup.h_plot(&grid, &cfg);
            let imag = s.imag.clone().unwrap_or_default();
            let mut t = Table::new(&["D", "reH", "imH", "ref"]);
            for (i, (x, v)) in s.grid.iter().zip(&s.values).enumerate() {
                t.row(&[
                    Cell::Num(*x),
                    Cell::Num(*v),
                    Cell::Num(imag[i]),
                    Cell::Num(s.reference_level),
                ]);
            }
            Ok(with_gaps(Outcome::csv(&io, t.into_string()), &s))
        }
        Command::Lplot { io, h } => {
            let (setup, grid, cfg) = harmonic_setup(&io, &h)?;
            let (l1, l2) = setup.l_plots(&grid, &cfg);
            let text = match &l1 {
                Some(l1) => {
                    let mut t = Table::new(&["D", "L1", "L2", "ref1", "ref2"]);
                    for i in 0..l2.grid.len() {
                        t.row(&[
                            Cell::Num(l2.grid[i]),
                            Cell::Num(l1.values[i]),
                            Cell::Num(l2.values[i]),
                            Cell::Num(l1.reference_level),
                            Cell::Num(l2.reference_level),
                        ]);
                    }
                    t.into_string()
                }
                None => {
                    let mut t = Table::new(&["D", "L2", "ref2"]);
                    for (x, v) in l2.grid.iter().zip(&l2.values) {
                        t.row(&[Cell::Num(*x), Cell::Num(*v), Cell::Num(l2.reference_level)]);
                    }
                    t.into_string()
                }
            };
            Ok(with_gaps(Outcome::csv(&io, text), &l2))
        }
        Command::Avg { io, grid } => {
            let doc = load_document(&io.config)?;
            let m = doc.model()?;
            let s = average::avg_plot(&m, &grid.unwrap_or(doc.analysis.grid));
            let mut t = Table::new(&["D", "avg_residual"]);
            for (x, v) in s.grid.iter().zip(&s.values) {
                t.row(&[Cell::Num(*x), Cell::Num(*v)]);
            }
            Ok(with_gaps(Outcome::csv(&io, t.into_string()), &s))
        }
        Command::Sweep {
            io,
            param,
            lo,
            hi,
            steps,
            tol,
        } => {
            let m = load_config(&io.config)?;
            let opts = SweepOptions {
                classify_tol: tol,
                ..Default::default()
            };
            let r = sweep::branch_sweep(&m, param, lo, hi, steps, &opts)?;
            let mut t = Table::new(&[
                "param", "D", "d", "iL0", "vC0", "vo", "class", "lam_re", "lam_im",
            ]);
            for rec in &r.records {
                t.row(&[
                    Cell::Num(rec.param),
                    Cell::Num(rec.duty),
                    Cell::Num(rec.d),
                    Cell::Num(rec.x_clock[0]),
                    Cell::Num(rec.x_clock[1]),
                    Cell::Num(rec.v_o),
                    Cell::Text(rec.classification.label()),
                    Cell::Num(rec.max_multiplier.re),
                    Cell::Num(rec.max_multiplier.im),
                ]);
            }
            let mut o = Outcome::csv(&io, t.into_string());
            for e in &r.events {
                o = o.note(format!(
                    "event: {:?} at {} = {} (bracket {}..{}), D = {}, multiplier = {}{}{}i, class {}",
                    e.kind,
                    param.name(),
                    csv::num(e.param),
                    csv::num(e.bracket.0),
                    csv::num(e.bracket.1),
                    csv::num(e.duty),
                    csv::num(e.multiplier.re),
                    if e.multiplier.im < 0.0 { "" } else { "+" },
                    csv::num(e.multiplier.im),
                    e.classification.label()
                ));
            }
            for (p, why) in &r.failures {
                o = o.note(format!(
                    "skipped {} = {}: {why}",
                    param.name(),
                    csv::num(*p)
                ));
            }
            Ok(o)
        }
        Command::LocateSnb {
            io,
            param,
            lo,
            hi,
            duty,
        } => {
            let m = load_config(&io.config)?;
            let pt = sweep::locate_snb(&m, param, lo, hi, duty)?;
            let mut t = Table::new(&["param", "D", "vo", "residual"]);
            t.row(&[
                Cell::Num(pt.param_star),
                Cell::Num(pt.duty_star),
                Cell::Num(pt.v_o),
                Cell::Num(pt.residual_norm),
            ]);
            let o = Outcome::csv(&io, t.into_string());
            Ok(if pt.residual_norm > sweep::SNB_TOL {
                o.note(format!(
                    "warning: {:?} fallback; residual {} above {}",
                    pt.method,
                    csv::num(pt.residual_norm),
                    csv::num(sweep::SNB_TOL)
                ))
            } else {
                o
            })
        }
        Command::Simulate { io, periods, x0 } => {
            let m = load_config(&io.config)?;
            let x0 = match x0 {
                Some(s) => parse_state(&s, m.dim())?,
                None => vec![0.0; m.dim()],
            };
            let log = sweep::simulate(&m, &x0, periods)?;
            let mut t = Table::new(&["n", "iL", "vC", "d_event"]);
            for r in &log {
                t.row(&[
                    Cell::Int(r.period),
                    Cell::Num(r.x[0]),
                    Cell::Num(r.x[1]),
                    Cell::Num(r.d_event),
                ]);
            }
            Ok(Outcome::csv(&io, t.into_string()))
        }
        Command::Example { name } => {
            let doc = examples::fixture(&name)?;
            let report = examples::run_example(&name, &doc)?;
            let code = if report.pass() {
                EXIT_OK
            } else {
                EXIT_MISMATCH
            };
            Ok(Outcome {
                stdout: report.render(),
                code,
                ..Default::default()
            })
        }
        Command::Canonical { io } => {
            let doc = load_document(&io.config)?;
            Ok(Outcome {
                stdout: doc.to_canonical_json(),
                file: io.output,
                ..Default::default()
            })
        }
    }
}

fn with_gaps(mut o: Outcome, s: &PlotSeries) -> Outcome {
    for (x, why) in &s.gaps {
        o = o.note(format!("gap at D = {}: {why}", csv::num(*x)));
    }
    o
}

fn harmonic_setup(io: &Io, h: &Harmonics) -> Result<(HarmonicSetup, DutyGrid, HarmonicConfig)> {
    let doc = load_document(&io.config)?;
    let m = doc.model()?;
    let setup = HarmonicSetup::from_model(&m, None)?;
    let n = h.harmonics.unwrap_or(doc.analysis.harmonics);
    if n == 0 {
        return Err(Error::InvalidParameter(
            "--harmonics must be positive".into(),
        ));
    }
    Ok((
        setup,
        h.grid.unwrap_or(doc.analysis.grid),
        HarmonicConfig::with_harmonics(n),
    ))
}

fn parse_state(s: &str, dim: usize) -> Result<Vec<f64>> {
    let x: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("--x0 entry '{p}' is not a number")))
        })
        .collect::<Result<_>>()?;
    if x.len() != dim {
        return Err(Error::Dimension(format!(
            "--x0 has {} entries, model has {dim}",
            x.len()
        )));
    }
    Ok(x)
}

fn analyze(io: &Io, duty: Option<f64>, tol: f64) -> Result<Outcome> {
    let m = load_config(&io.config)?;
    let orbits = match duty {
        Some(dd) => {
            if !(dd > 0.0 && dd < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "--duty {dd} outside (0, 1)"
                )));
            }
            vec![steady::orbit_at(&m, dd * m.period())?]
        }
        None => periodic_solutions(&m)?,
    };
    let mut t = Table::new(&[
        "D",
        "d",
        "iL0",
        "vC0",
        "vo",
        "residual",
        "s_minus_hdot",
        "class",
        "lam_re",
        "lam_im",
        "margin",
    ]);
    let mut o = Outcome::default();
    for orb in &orbits {
        let slope = sdstab::theorem1_residual(&m, orb.duty).unwrap_or(f64::NAN);
        let (class, lam, margin) = match sdstab::stability(&m, orb, tol) {
            Ok(r) => (r.classification.label(), r.dominant(), r.margin),
            Err(e) => {
                o = o.note(format!("orbit at D = {}: {e}", csv::num(orb.duty)));
                (
                    "unclassified",
                    num_complex::Complex64::new(f64::NAN, f64::NAN),
                    f64::NAN,
                )
            }
        };
        t.row(&[
            Cell::Num(orb.duty),
            Cell::Num(orb.d),
            Cell::Num(orb.x_clock[0]),
            Cell::Num(orb.x_clock[1]),
            Cell::Num(m.output(&orb.x_clock)),
            Cell::Num(orb.residual),
            Cell::Num(slope),
            Cell::Text(class),
            Cell::Num(lam.re),
            Cell::Num(lam.im),
            Cell::Num(margin),
        ]);
    }
    o.stdout = t.into_string();
    o.file = io.output.clone();
    o = o.note(summary(&m, orbits.len()));
    Ok(o)
}

fn summary(m: &ConverterModel, periodic: usize) -> String {
    let sat: Vec<&str> = saturated_solutions(m)
        .iter()
        .map(|s| match s.stage {
            crate::model::Stage::S1 => "always-on",
            crate::model::Stage::S2 => "always-off",
        })
        .collect();
    let mut s = format!("{} periodic solution(s)", periodic);
    if !sat.is_empty() {
        s.push_str(&format!("; saturated: {}", sat.join(", ")));
    }
    if let Ok(form) = sdstab::ClosedForm::for_model(m) {
        match sdstab::closed_form_snb_duty(&form) {
            sdstab::SnbDuty::At(v) => {
                let v: Vec<String> = v.iter().map(|x| csv::num(*x)).collect();
                s.push_str(&format!("; closed-form SNB duty {}", v.join(", ")));
            }
            sdstab::SnbDuty::NoSnb(why) => s.push_str(&format!("; closed form: no SNB ({why})")),
        }
    }
    s
}
