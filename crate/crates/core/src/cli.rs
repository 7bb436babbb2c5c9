//! The `tvdq` command line.
//!
//! Exit codes: 0 success, 1 usage or parameter error, 2 solver
//! non-convergence or a failed study, 3 I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::grid::{DomainKind, DomainSpec, GridFunction, Norm};
use crate::interp::{InputField, Operator, DEFAULT_QUAD_RES};
use crate::parallel::{self, THREADS_ENV};
use crate::pgm::{read_pgm, write_atomic, write_pgm};
use crate::prox::{rof_minimize, tv_flow_from, DenoiseParams, FlowParams, Method};
use crate::studies::{
    ch_boundary_rate_study, denoise_rate_study, flow_property_suite, interp_rate_study, l2_projection,
    stability_suite, tvd_property_suite, DenoiseStudyConfig, FlowTolerances, TestShape,
};
use crate::variation::Direction;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tvdq", version, about = "TV-diminishing quasi-interpolation, ROF denoising and TV flow on Q1 meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Treat the domain as the periodic unit torus instead of the unit square.
    #[arg(long, global = true)]
    pub periodic: bool,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Seed for random test fields.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Interpolate an image or a test shape onto an N x N mesh and write a PGM.
    Interpolate {
        #[command(flatten)]
        source: Source,
        /// Operator: pi, c, i or lagrange (default: pi on the torus, c on the square).
        #[arg(long)]
        operator: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimize the ROF energy for the given data and write the result.
    Denoise {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 10.0)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the implicit TV flow; writes PREFIX_0000.pgm, ... and PREFIX.csv.
    Flow {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        dt: f64,
        #[arg(long = "T")]
        t_final: f64,
        #[arg(long = "out-prefix")]
        out_prefix: PathBuf,
    },
    /// Property suites and convergence studies; CSV on stdout, summary on stderr.
    Study {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Mesh size of the property suites and the flow study.
        #[arg(long = "N", default_value_t = 16)]
        n: usize,
        /// Comma-separated dyadic mesh sizes of the rate studies.
        #[arg(long = "N-list")]
        n_list: Option<String>,
        /// Reference mesh of the denoise study.
        #[arg(long = "N-ref", default_value_t = 256)]
        n_ref: usize,
        #[arg(long)]
        operator: Option<String>,
        /// Test shape, e.g. disk, disk:0.25, sine, constant:0.5, halfplane, random.
        #[arg(long, default_value = "disk")]
        shape: String,
        /// Comma-separated norms: 1, 2, inf.
        #[arg(long, default_value = "1,2,inf")]
        norms: String,
        /// Box-mean quadrature resolution for analytic shapes.
        #[arg(long = "quad-res", default_value_t = DEFAULT_QUAD_RES)]
        quad_res: usize,
        #[arg(long, default_value_t = 10.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long = "T", default_value_t = 0.05)]
        t_final: f64,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Tvd,
    Stability,
    Interp,
    Boundary,
    Denoise,
    Flow,
}

/// Data source: a PGM image or an analytic test shape.
#[derive(Debug, Args)]
pub struct Source {
    /// Input PGM (P2 or P5).
    #[arg(long = "in", conflicts_with = "shape")]
    pub input: Option<PathBuf>,
    /// Analytic test shape (see `study --help`).
    #[arg(long)]
    pub shape: Option<String>,
    /// Mesh size; defaults to the image size.
    #[arg(long = "N")]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long = "max-iters", default_value_t = 20_000)]
    pub max_iters: usize,
    /// fixed, accelerated or preconditioned.
    #[arg(long, default_value = "preconditioned")]
    pub method: String,
}

impl SolverArgs {
    fn params(&self, alpha: f64) -> Result<DenoiseParams, Error> {
        let p = DenoiseParams {
            alpha,
            tol: self.tol,
            max_iters: self.max_iters,
            method: Method::parse(&self.method)?,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }
}

/// Parses `disk[:r]`, `sine`, `constant:c`, `affine:a,b,c`,
/// `halfplane[:x|y[:t]]` and `random[:n_fine]`.
pub fn parse_shape(s: &str, seed: u64, n_fine: usize) -> Result<TestShape, Error> {
    let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidParam(format!("shape {s:?}: {t:?} is not a number")))
    };
    let shape = match (name, arg) {
        ("disk", None) => TestShape::disk(0.3),
        ("disk", Some(r)) => TestShape::disk(num(r)?),
        ("sine", None) => TestShape::SmoothSine,
        ("constant", Some(c)) => TestShape::Constant(num(c)?),
        ("affine", Some(c)) => {
            let v = c.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
            match v[..] {
                [c0, c1, c2] => TestShape::Affine { c0, c1, c2 },
                _ => return Err(Error::InvalidParam(format!("shape {s:?}: affine needs three coefficients"))),
            }
        }
        ("halfplane", rest) => {
            let mut it = rest.unwrap_or("x").split(':');
            let axis = match it.next() {
                Some("x") => Direction::X1,
                Some("y") => Direction::X2,
                _ => return Err(Error::InvalidParam(format!("shape {s:?}: axis must be x or y"))),
            };
            let threshold = it.next().map(num).transpose()?.unwrap_or(0.5);
            TestShape::HalfPlane { axis, threshold }
        }
        ("random", None) => TestShape::RandomFine { seed, n_fine },
        ("random", Some(n)) => TestShape::RandomFine {
            seed,
            n_fine: n.trim().parse().map_err(|_| Error::InvalidParam(format!("shape {s:?}: bad mesh size")))?,
        },
        _ => return Err(Error::InvalidParam(format!("unknown shape {s:?}"))),
    };
    shape.validate()?;
    Ok(shape)
}

fn parse_list<T>(raw: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, Error> {
    raw.split(',')
        .map(|t| f(t.trim()).ok_or_else(|| Error::InvalidParam(format!("bad {what} {t:?}"))))
        .collect()
}

fn kind_of(periodic: bool) -> DomainKind {
    if periodic {
        DomainKind::PeriodicTorus
    } else {
        DomainKind::UnitSquare
    }
}

fn operator_for(name: Option<&str>, kind: DomainKind) -> Result<Operator, Error> {
    name.map_or(Ok(Operator::default_for(kind)), Operator::parse)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::NotConverged(_) | Error::Diverged(_) => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

/// Outcome of a subcommand that ran to completion.
enum Outcome {
    Ok,
    /// Non-convergence or a failed study, with a message for stderr.
    Failed(String),
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        if let Err(e) = parallel::parse_threads(&raw) {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    }
    parallel::set_deterministic(cli.deterministic);
    match run(&cli, out, err) {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::Failed(msg)) => {
            let _ = writeln!(err, "{msg}");
            EXIT_SOLVER
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn check_output(path: &Path) -> Result<(), Error> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(Error::Io {
            path: path.into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        });
    }
    Ok(())
}

/// Discrete data for `denoise` and `flow`: the image itself, or the shape
/// projected onto an N x N mesh.
fn load_data(src: &Source, kind: DomainKind, seed: u64) -> Result<GridFunction, Error> {
    match (&src.input, &src.shape) {
        (Some(p), _) => {
            let u = read_pgm(p, kind == DomainKind::PeriodicTorus)?;
            if let Some(n) = src.n {
                if n != u.domain().n1() || n != u.domain().n2() {
                    return Err(Error::InvalidParam(format!(
                        "--N {n} does not match the {}x{} image mesh",
                        u.domain().n1(),
                        u.domain().n2()
                    )));
                }
            }
            Ok(u)
        }
        (None, Some(s)) => {
            let n = src.n.ok_or_else(|| Error::InvalidParam("--shape needs --N".into()))?;
            let d = DomainSpec::new(kind, n, n)?;
            match parse_shape(s, seed, 8 * n)? {
                sh @ TestShape::RandomFine { .. } => Operator::default_for(kind).apply(&sh.input_field(kind, DEFAULT_QUAD_RES)?, &d),
                sh => l2_projection(&sh, &d),
            }
        }
        (None, None) => Err(Error::InvalidParam("one of --in or --shape is required".into())),
    }
}

fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Outcome, Error> {
    let kind = kind_of(cli.periodic);
    match &cli.command {
        Command::Interpolate { source, operator, out: path } => {
            check_output(path)?;
            let op = operator_for(operator.as_deref(), kind)?;
            let (field, default_n) = match (&source.input, &source.shape) {
                (Some(p), _) => {
                    let u = read_pgm(p, cli.periodic)?;
                    let n = u.domain().n1();
                    (InputField::fine(u), n)
                }
                (None, Some(s)) => {
                    let n = source.n.ok_or_else(|| Error::InvalidParam("--shape needs --N".into()))?;
                    (parse_shape(s, cli.seed, 8 * n)?.input_field(kind, DEFAULT_QUAD_RES)?, n)
                }
                (None, None) => return Err(Error::InvalidParam("one of --in or --shape is required".into())),
            };
            let n = source.n.unwrap_or(default_n);
            let u = op.apply(&field, &DomainSpec::new(kind, n, n)?)?;
            write_pgm(&u, path, 255)?;
            let _ = writeln!(err, "{} onto {} N={n}: wrote {}", op.name(), kind.name(), path.display());
            Ok(Outcome::Ok)
        }
        Command::Denoise { source, solver, alpha, out: path } => {
            check_output(path)?;
            let p = solver.params(*alpha)?;
            let f = load_data(source, kind, cli.seed)?;
            let (v, rep) = rof_minimize(&f, &p)?;
            let line = format!(
                "denoise: {} iterations, relative gap {:.3e}, energy {:.10e}",
                rep.iters, rep.final_gap, rep.energy
            );
            if !rep.converged {
                return Ok(Outcome::Failed(format!("{line}; not converged to tol {:.1e}", p.tol)));
            }
            write_pgm(&v, path, 255)?;
            let _ = writeln!(err, "{line}; wrote {}", path.display());
            Ok(Outcome::Ok)
        }
        Command::Flow { source, solver, dt, t_final, out_prefix } => {
            check_output(out_prefix)?;
            let fp = FlowParams::new(*dt, *t_final, solver.params(1.0 / dt)?)?;
            let u0 = load_data(source, kind, cli.seed)?;
            let run = tv_flow_from(u0, &fp)?;
            let stem = out_prefix.to_string_lossy();
            let mut csv = String::from("step,t,tv,mean,solver_iters,solver_gap\n");
            for (k, u) in run.iterates.iter().enumerate() {
                write_pgm(u, Path::new(&format!("{stem}_{k:04}.pgm")), 255)?;
                let (it, gap) = match k.checked_sub(1).map(|i| &run.reports[i]) {
                    Some(r) => (r.iters.to_string(), format!("{:.16e}", r.final_gap)),
                    None => (String::new(), String::new()),
                };
                csv.push_str(&format!(
                    "{k},{:.16e},{:.16e},{:.16e},{it},{gap}\n",
                    k as f64 * dt,
                    crate::prox::solver_tv(u, fp.inner.quad),
                    u.nodal_mean()
                ));
            }
            write_atomic(Path::new(&format!("{stem}.csv")), csv.as_bytes())?;
            let _ = writeln!(err, "flow: {} of {} steps written to {stem}_*.pgm", run.iterates.len() - 1, fp.steps());
            Ok(match run.aborted {
                Some(msg) => Outcome::Failed(format!("flow aborted: {msg}")),
                None => Outcome::Ok,
            })
        }
        Command::Study {
            suite,
            trials,
            n,
            n_list,
            n_ref,
            operator,
            shape,
            norms,
            quad_res,
            alpha,
            dt,
            t_final,
            tol,
        } => {
            let op = operator_for(operator.as_deref(), kind)?;
            let norms = parse_list(norms, "norm", |t| Norm::parse(t).ok())?;
            let levels = |default: &[usize]| match n_list {
                Some(raw) => parse_list(raw, "mesh size", |t| t.parse::<usize>().ok()),
                None => Ok(default.to_vec()),
            };
            let max_level = n_list
                .as_deref()
                .map(|r| parse_list(r, "mesh size", |t| t.parse::<usize>().ok()))
                .transpose()?
                .and_then(|v| v.into_iter().max())
                .unwrap_or(*n);
            let shape = parse_shape(shape, cli.seed, 8 * max_level)?;
            let (csv, summary, passed) = match suite {
                Suite::Tvd => {
                    let s = tvd_property_suite(*trials, cli.seed, kind, op, *n)?;
                    (s.to_csv(), s.summary_line(), s.passed())
                }
                Suite::Stability => {
                    let s = stability_suite(*trials, cli.seed, kind, op, *n, &norms)?;
                    (s.to_csv(), s.summary_line(), s.passed())
                }
                Suite::Interp => {
                    let r = interp_rate_study(&shape, kind, op, &norms, &levels(&[16, 32, 64, 128])?, *quad_res)?;
                    (r.to_csv(), r.summary_line(), true)
                }
                Suite::Boundary => {
                    if cli.periodic {
                        return Err(Error::InvalidParam("the boundary study runs on the unit square".into()));
                    }
                    let (c, i) = ch_boundary_rate_study(&shape, &levels(&[8, 16, 32, 64])?, *quad_res)?;
                    let csv = format!("# c_h\n{}# i_h\n{}", c.to_csv(), i.to_csv());
                    (csv, format!("{}\n{}", c.summary_line(), i.summary_line()), true)
                }
                Suite::Denoise => {
                    let mut cfg = DenoiseStudyConfig::new(kind, *alpha, levels(&[16, 32, 64])?, *n_ref);
                    cfg.level_params.tol = *tol;
                    let r = match denoise_rate_study(&shape, &cfg) {
                        Ok(r) => r,
                        Err(e @ Error::NotConverged(_)) => return Ok(Outcome::Failed(format!("denoise study: {e}"))),
                        Err(e) => return Err(e),
                    };
                    let rate_ok = r.rate().is_some_and(|f| f.rate >= 0.45);
                    (r.convergence().to_csv(), r.summary_line(), r.bound_violations() == 0 && rate_ok)
                }
                Suite::Flow => {
                    let inner = DenoiseParams { tol: *tol, ..Default::default() };
                    let fp = FlowParams::new(*dt, *t_final, inner)?;
                    let r = flow_property_suite(&shape, kind, *n, &fp, &FlowTolerances::for_tol(*tol))?;
                    (r.to_csv(), r.summary.summary_line(), r.summary.passed())
                }
            };
            let _ = write!(out, "{csv}");
            if passed {
                let _ = writeln!(err, "PASS {summary}");
                Ok(Outcome::Ok)
            } else {
                Ok(Outcome::Failed(format!("FAIL {summary}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run_cli(std::iter::once("tvdq").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn shapes_parse() {
        assert_eq!(parse_shape("disk", 0, 8).unwrap(), TestShape::disk(0.3));
        assert_eq!(parse_shape("constant:0.5", 0, 8).unwrap(), TestShape::Constant(0.5));
        assert_eq!(
            parse_shape("halfplane:y:0.25", 0, 8).unwrap(),
            TestShape::HalfPlane { axis: Direction::X2, threshold: 0.25 }
        );
        assert_eq!(parse_shape("random", 4, 64).unwrap(), TestShape::RandomFine { seed: 4, n_fine: 64 });
        assert!(parse_shape("disk:0.7", 0, 8).is_err());
        assert!(parse_shape("blob", 0, 8).is_err());
        assert!(parse_shape("affine:1,2", 0, 8).is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        let (code, _, err) = run_args(&["study", "--bogus"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("Usage"), "{err}");
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["study", "--suite", "tvd", "--operator", "nope"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn small_study_prints_csv_and_summary() {
        let (code, out, err) = run_args(&["study", "--suite", "tvd", "--trials", "3", "--N", "4", "--seed", "7", "--periodic"]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert!(out.starts_with("check,checked,excluded,violations,worst_ratio\n"));
        assert!(err.contains("violations: 0"));
    }
}
