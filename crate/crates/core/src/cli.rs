//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::eval::{fu_fs_from, Evaluator, MethodChoice};
use crate::exact::{eval_bruteforce, Params, BRUTEFORCE_CAP};
use crate::grid::{self, map_cells};
use crate::inversion::{
    fu_fs_invert, invert_asymptotic_target, invert_newton_with, newton_iterates, transition, InversionResult,
    NewtonOptions, SeedConvention, Target, DEFAULT_TOL,
};
use crate::series::DEFAULT_TERMS;

#[derive(Debug, Parser)]
#[command(name = "stirling-cdf", version, about = "Partial normalized Stirling sums S'(n,m,theta), their inverse in theta, and Fu's F_s")]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct Engine {
    #[arg(long, value_enum, default_value_t = MethodChoice::Auto)]
    pub method: MethodChoice,
    /// Terms of the large-n expansion.
    #[arg(long, default_value_t = DEFAULT_TERMS)]
    pub terms: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// S', T', F_s at one point.
    Eval {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        theta: f64,
        #[command(flatten)]
        engine: Engine,
        /// Also compare with the exact rational sum (n <= 60).
        #[arg(long)]
        check: bool,
    },
    /// theta with S'(n, m, theta) = s.
    Invert {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        engine: Engine,
        #[arg(long, value_enum, default_value_t = SeedConvention::Literal)]
        seed: SeedConvention,
        /// Solve T' = 1 - s instead.
        #[arg(long)]
        complement: bool,
        /// Use the asymptotic inversion with this many tau terms (1-3) instead of Newton.
        #[arg(long)]
        asymptotic: Option<usize>,
    },
    /// Fu's F_s at one point.
    Fs {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        theta: f64,
        #[command(flatten)]
        engine: Engine,
    },
    /// theta with F_s = f.
    FsInvert {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long, allow_hyphen_values = true)]
        f: f64,
    },
    /// theta with S' = T' = 1/2.
    Transition {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
    },
    /// Reproduce the Newton (1) or asymptotic (2) inversion table.
    Table {
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        table: u8,
    },
    /// Recursion residuals of S' values at theta = rho z0 over an (rho, m) grid.
    Verify {
        #[arg(long)]
        n: u64,
        /// Comma-separated m values; defaults to the table layout for n = 1000 or 100000.
        #[arg(long, value_delimiter = ',')]
        m: Vec<u64>,
        /// Comma-separated rho values.
        #[arg(long, value_delimiter = ',')]
        rho: Vec<f64>,
        #[arg(long, value_enum, default_value_t = MethodChoice::Asymptotic)]
        method: MethodChoice,
        #[arg(long)]
        terms: Option<usize>,
    },
}

/// Formats like C's %.15g.
pub fn fmt_g(x: f64) -> String {
    const DIGITS: usize = 15;
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{:.*e}", DIGITS - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= DIGITS as i32 {
        format!("{}e{}{:02}", trim(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim(&format!("{:.*}", (DIGITS as i32 - 1 - exp) as usize, x))
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map(fmt_g).unwrap_or_else(|| n.to_string()),
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

/// Rows of flat JSON objects rendered in the chosen format.
fn emit(out: &mut dyn Write, format: Format, columns: &[&str], rows: &[Value], whole: &Value) -> std::io::Result<()> {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(whole).expect("serializable")),
        Format::Csv => {
            writeln!(out, "{}", columns.join(","))?;
            for r in rows {
                let line: Vec<String> = columns.iter().map(|c| cell(&r[*c])).collect();
                writeln!(out, "{}", line.join(","))?;
            }
            Ok(())
        }
        Format::Text => {
            for (i, r) in rows.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                for c in columns {
                    writeln!(out, "{c:>20}  {}", cell(&r[*c]))?;
                }
            }
            Ok(())
        }
    }
}

const EVAL_COLUMNS: [&str; 8] = ["n", "m", "theta", "s_prime", "t_prime", "fs", "method", "err"];
const INVERT_COLUMNS: [&str; 7] = ["n", "m", "target", "theta", "method", "iterations_or_terms", "residual"];

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn inversion_value(n: u64, m: u64, target: f64, r: &InversionResult) -> Value {
    let mut v = to_value(r);
    v["n"] = json!(n);
    v["m"] = json!(m);
    v["target"] = json!(target);
    v
}

fn run_command(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let fmt = cli.format;
    let io = |e: std::io::Error| Error::Domain(format!("write failed: {e}"));
    match &cli.command {
        Command::Eval { n, m, theta, engine, check } => {
            let params = Params::new(*n, *m, *theta)?;
            let r = Evaluator::new(*n, *m, engine.method, engine.terms)?.evaluate(*theta)?;
            let mut v = json!({
                "n": n, "m": m, "theta": theta,
                "s_prime": r.s_prime, "t_prime": r.t_prime, "fs": fu_fs_from(&r),
                "method": r.method, "err": r.error_estimate, "primary_branch": r.primary_branch,
            });
            let mut cols = EVAL_COLUMNS.to_vec();
            if *check {
                if *n > BRUTEFORCE_CAP {
                    return Err(Error::CapExceeded { what: "brute-force check", n: *n, limit: BRUTEFORCE_CAP });
                }
                let b = eval_bruteforce(params)?;
                let rel = if b.primary() == 0.0 { (r.primary() - b.primary()).abs() } else {
                    ((r.primary() - b.primary()) / b.primary()).abs()
                };
                v["bruteforce_rel_diff"] = json!(rel);
                cols.push("bruteforce_rel_diff");
            }
            emit(out, fmt, &cols, std::slice::from_ref(&v), &v).map_err(io)
        }
        Command::Invert { n, m, s, tol, engine, seed, complement, asymptotic } => {
            let target = if *complement { Target::T(1.0 - s) } else { Target::S(*s) };
            let r = match asymptotic {
                Some(k) => invert_asymptotic_target(*n, *m, target, *k)?,
                None => {
                    let opts = NewtonOptions { tol: *tol, method: engine.method, terms: engine.terms, seed: *seed, ..Default::default() };
                    invert_newton_with(*n, *m, target, &opts)?
                }
            };
            let v = inversion_value(*n, *m, *s, &r);
            emit(out, fmt, &INVERT_COLUMNS, std::slice::from_ref(&v), &v).map_err(io)
        }
        Command::Fs { n, m, theta, engine } => {
            let r = Evaluator::new(*n, *m, engine.method, engine.terms)?.evaluate(*theta)?;
            let v = json!({"n": n, "m": m, "theta": theta, "fs": fu_fs_from(&r), "method": r.method});
            emit(out, fmt, &["n", "m", "theta", "fs", "method"], std::slice::from_ref(&v), &v).map_err(io)
        }
        Command::FsInvert { n, m, f } => {
            let r = fu_fs_invert(*n, *m, *f)?;
            let v = inversion_value(*n, *m, *f, &r);
            emit(out, fmt, &INVERT_COLUMNS, std::slice::from_ref(&v), &v).map_err(io)
        }
        Command::Transition { n, m } => {
            let r = transition(*n, *m)?;
            let mut v = inversion_value(*n, *m, 0.5, &r);
            v["theta_t"] = json!(r.theta);
            emit(out, fmt, &["n", "m", "theta_t", "method", "iterations_or_terms", "residual"], std::slice::from_ref(&v), &v)
                .map_err(io)
        }
        Command::Table { table } => {
            let rows = if *table == 1 { newton_table()? } else { asymptotic_table()? };
            let cols: &[&str] = if *table == 1 {
                &["n", "m", "s", "theta0", "delta0", "theta2", "delta2", "theta4", "delta4"]
            } else {
                &["n", "m", "s", "theta0", "delta0", "theta1", "delta1", "theta2", "delta2"]
            };
            emit(out, fmt, cols, &rows, &Value::Array(rows.clone())).map_err(io)
        }
        Command::Verify { n, m, rho, method, terms } => {
            let (dm, dr, dt): (&[u64], &[f64], usize) = match *n {
                grid::RESIDUAL_GRID_LARGE_N => (&grid::RESIDUAL_GRID_LARGE_M, &grid::RESIDUAL_GRID_LARGE_RHO, 2),
                _ => (&grid::RESIDUAL_GRID_SMALL_M, &grid::RESIDUAL_GRID_SMALL_RHO, 4),
            };
            let ms = if m.is_empty() { dm.to_vec() } else { m.clone() };
            let rhos = if rho.is_empty() { dr.to_vec() } else { rho.clone() };
            if *n != grid::RESIDUAL_GRID_SMALL_N && *n != grid::RESIDUAL_GRID_LARGE_N && m.is_empty() {
                return Err(Error::Domain(format!("--m is required for n = {n}")));
            }
            let cells = grid::verify_grid(*n, &ms, &rhos, *method, terms.unwrap_or(dt))?;
            if fmt == Format::Text {
                write!(out, "{:>6}", "rho\\m").map_err(io)?;
                for mm in &ms {
                    write!(out, " {mm:>10}").map_err(io)?;
                }
                writeln!(out).map_err(io)?;
                for (i, r) in rhos.iter().enumerate() {
                    write!(out, "{r:>6.2}").map_err(io)?;
                    for c in &cells[i * ms.len()..(i + 1) * ms.len()] {
                        write!(out, " {:>10.2e}", c.residual.abs()).map_err(io)?;
                    }
                    writeln!(out).map_err(io)?;
                }
                let worst = cells.iter().map(|c| c.residual.abs()).fold(0.0, f64::max);
                return writeln!(out, "max |residual| = {worst:.3e}").map_err(io);
            }
            let rows: Vec<Value> = cells.iter().map(to_value).collect();
            emit(out, fmt, &["n", "m", "rho", "z0", "theta", "s_nm", "s_nm1", "s_n1m", "residual"], &rows, &Value::Array(rows.clone()))
                .map_err(io)
        }
    }
}

/// Rows of the Newton inversion table: (n, m, s) with iterates 0, 2, 4.
pub const NEWTON_TABLE_ROWS: [(u64, u64, f64); 8] = [
    (25, 10, 0.0001),
    (25, 10, 0.25),
    (25, 10, 0.50),
    (25, 10, 0.75),
    (50, 25, 0.0001),
    (50, 25, 0.25),
    (50, 25, 0.50),
    (50, 25, 0.75),
];

/// Rows of the asymptotic inversion table.
pub const ASYMPTOTIC_TABLE_ROWS: [(u64, u64, f64); 8] = [
    (250, 200, 0.0001),
    (250, 200, 0.25),
    (250, 200, 0.50),
    (250, 200, 0.75),
    (1000, 500, 0.0001),
    (1000, 500, 0.25),
    (1000, 500, 0.50),
    (1000, 500, 0.75),
];

fn newton_table() -> Result<Vec<Value>> {
    map_cells(&NEWTON_TABLE_ROWS, |&(n, m, s)| {
        let h = newton_iterates(n, m, Target::S(s), &NewtonOptions::default(), 4)?;
        Ok(json!({
            "n": n, "m": m, "s": s,
            "theta0": h[0].theta, "delta0": h[0].delta,
            "theta2": h[2].theta, "delta2": h[2].delta,
            "theta4": h[4].theta, "delta4": h[4].delta,
        }))
    })
    .into_iter()
    .collect()
}

fn asymptotic_table() -> Result<Vec<Value>> {
    map_cells(&ASYMPTOTIC_TABLE_ROWS, |&(n, m, s)| {
        let r = invert_asymptotic_target(n, m, Target::S(s), 3)?;
        let h = &r.history;
        Ok(json!({
            "n": n, "m": m, "s": s,
            "theta0": h[0].theta, "delta0": h[0].delta,
            "theta1": h[1].theta, "delta1": h[1].delta,
            "theta2": h[2].theta, "delta2": h[2].delta,
            "tau": r.tau_terms,
        }))
    })
    .into_iter()
    .collect()
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Convergence { .. } => 3,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs, and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match run_command(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("stirling-cdf").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn g_format() {
        assert_eq!(fmt_g(0.5), "0.5");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(38.248908191), "38.248908191");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333333");
        assert_eq!(fmt_g(3.00778124650e-5), "3.0077812465e-05");
        assert_eq!(fmt_g(-2.5e20), "-2.5e+20");
        assert_eq!(fmt_g(123456789012345.0), "123456789012345");
    }

    #[test]
    fn eval_json_round_trips() {
        let (code, out, _) = run_str(&["eval", "--n", "100", "--m", "50", "--theta", "38.2489082"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["s_prime"].as_f64().unwrap() - 0.5000001).abs() < 1e-7);
        let theta = v["theta"].as_f64().unwrap();
        let again = crate::eval::s_prime(100, 50, theta).unwrap();
        assert_eq!(again.s_prime, v["s_prime"].as_f64().unwrap());
    }

    #[test]
    fn csv_header_and_errors() {
        let (code, out, _) = run_str(&["--format", "csv", "eval", "--n", "5", "--m", "0", "--theta", "3.3"]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), "n,m,theta,s_prime,t_prime,fs,method,err");
        assert!(lines.next().unwrap().starts_with("5,0,3.3,1,0,"));
        let (code, _, err) = run_str(&["eval", "--n", "5", "--m", "7", "--theta", "1"]);
        assert_eq!(code, 2);
        assert!(err.starts_with("error:"));
        let (code, _, _) = run_str(&["invert", "--n", "25", "--m", "10"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn invert_and_transition() {
        let (code, out, _) = run_str(&["invert", "--n", "25", "--m", "10", "--s", "0.5"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["theta"].as_f64().unwrap() - 5.16527).abs() < 1e-4);
        let (code, out, _) = run_str(&["--format", "text", "transition", "--n", "100", "--m", "50"]);
        assert_eq!(code, 0);
        assert!(out.contains("38.24890"), "{out}");
    }
}
