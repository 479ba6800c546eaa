//! Command-line front end: `solve` computes the least solution of an
//! equation-system file, `analyze` runs the program analysis on a program
//! file.  Results go to stdout (human-readable lines, or one JSON document
//! with `--json`), diagnostics to stderr.  Exit codes: 0 on success, 2
//! when the input fails to parse or validate, 3 when the numerical solver
//! gives up.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use strafix::error::Error;
use strafix::eval::{Algorithm, SolveOptions, TraceStep};
use strafix::ext::{ExtReal, Valuation};
use strafix::model::{
    parse_equation_file, parse_program_file, EquationFile, ExtRealModel,
};
use strafix::relax::analyze;

#[derive(Parser)]
#[command(name = "strafix", version, about = "Least-solution solver for ∨-equation systems over the extended reals, with a quadratic-template program analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the least solution of an equation-system file.
    Solve {
        /// Equation-system JSON file.
        file: PathBuf,
        /// Evaluator to run on each improved strategy.
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Auto)]
        algorithm: AlgorithmArg,
        /// Fixpoint tolerance on finite components.
        #[arg(long)]
        tol: Option<f64>,
        /// Print the strategy and valuation of every improvement step.
        #[arg(long)]
        trace: bool,
        /// Emit one machine-readable JSON document instead of lines.
        #[arg(long)]
        json: bool,
    },
    /// Bound quadratic templates at every control point of a program file.
    Analyze {
        /// Program JSON file.
        file: PathBuf,
        /// Write the generated equation system to this file.
        #[arg(long, value_name = "OUT")]
        emit_eqs: Option<PathBuf>,
        /// Fixpoint tolerance on finite components.
        #[arg(long)]
        tol: Option<f64>,
        /// Print the strategy and valuation of every improvement step.
        #[arg(long)]
        trace: bool,
        /// Emit one machine-readable JSON document instead of lines.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    /// Pick by inspecting the right-hand sides.
    Auto,
    /// All suprema attained: one joint optimization round.
    Maxatt,
    /// Possibly unattained suprema: freeze-and-repeat rounds.
    Gen,
    /// Chain-continuous right-hand sides: Kleene probe plus one round.
    Cmorcave,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Algorithm {
        match a {
            AlgorithmArg::Auto => Algorithm::Auto,
            AlgorithmArg::Maxatt => Algorithm::Attained,
            AlgorithmArg::Gen => Algorithm::General,
            AlgorithmArg::Cmorcave => Algorithm::ChainContinuous,
        }
    }
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Auto => "auto",
        Algorithm::Attained => "maxatt",
        Algorithm::General => "gen",
        Algorithm::ChainContinuous => "cmorcave",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Solve {
            file,
            algorithm,
            tol,
            trace,
            json,
        } => cmd_solve(&file, algorithm.into(), tol, trace, json),
        Cmd::Analyze {
            file,
            emit_eqs,
            tol,
            trace,
            json,
        } => cmd_analyze(&file, emit_eqs.as_deref(), tol, trace, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NumericalFailure(_) | Error::InternalInvariant(_) => 3,
                _ => 2,
            })
        }
    }
}

fn read_file(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Model(format!("{}: {e}", path.display())))
}

fn options(algorithm: Algorithm, tol: Option<f64>) -> SolveOptions {
    let mut opts = SolveOptions {
        algorithm,
        ..SolveOptions::default()
    };
    if let Some(tol) = tol {
        opts.tol_fix = tol;
    }
    opts
}

/// Formats one extended real the way the file formats spell it.  Values
/// that round to zero at six decimals print without a sign.
fn display(v: ExtReal) -> String {
    match v {
        ExtReal::NegInf => "-inf".into(),
        ExtReal::PosInf => "inf".into(),
        ExtReal::Finite(v) => {
            let s = format!("{:.6}", v + 0.0);
            if s == "-0.000000" {
                "0.000000".into()
            } else {
                s
            }
        }
    }
}

fn values_json(names: &[String], rho: &Valuation) -> serde_json::Value {
    serde_json::Value::Object(
        names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                (
                    name.clone(),
                    serde_json::to_value(ExtRealModel(rho.get(i))).unwrap(),
                )
            })
            .collect(),
    )
}

fn trace_json(names: &[String], trace: &[TraceStep]) -> serde_json::Value {
    trace
        .iter()
        .map(|step| {
            json!({
                "strategy": step.strategy.0,
                "values": values_json(names, &step.values),
            })
        })
        .collect()
}

fn print_trace(names: &[String], trace: &[TraceStep]) {
    for (k, step) in trace.iter().enumerate() {
        let values = names
            .iter()
            .enumerate()
            .map(|(i, name)| format!("{name} = {}", display(step.values.get(i))))
            .collect::<Vec<_>>()
            .join(", ");
        println!("step {k}: strategy {:?}, {values}", step.strategy.0);
    }
}

fn cmd_solve(
    path: &Path,
    algorithm: Algorithm,
    tol: Option<f64>,
    trace: bool,
    json: bool,
) -> Result<(), Error> {
    let sys = parse_equation_file(&read_file(path)?)?.to_system()?;
    let solution = strafix::solve_least(&sys, &options(algorithm, tol))?;
    if json {
        let mut doc = json!({
            "algorithm": algorithm_name(solution.algorithm),
            "improvement_steps": solution.improvement_steps,
            "values": values_json(&sys.names, &solution.values),
        });
        if trace {
            doc["trace"] = trace_json(&sys.names, &solution.trace);
        }
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        if trace {
            print_trace(&sys.names, &solution.trace);
        }
        for (i, name) in sys.names.iter().enumerate() {
            println!("{name} = {}", display(solution.values.get(i)));
        }
        println!("algorithm: {}", algorithm_name(solution.algorithm));
        println!("{} improvement steps", solution.improvement_steps);
    }
    Ok(())
}

fn cmd_analyze(
    path: &Path,
    emit_eqs: Option<&Path>,
    tol: Option<f64>,
    trace: bool,
    json: bool,
) -> Result<(), Error> {
    let (program, templates) = parse_program_file(&read_file(path)?)?.to_parts()?;
    if let Some(out) = emit_eqs {
        let sys = strafix::relax::build_equations(&program, &templates)?;
        let text = serde_json::to_string_pretty(&EquationFile::from_system(&sys)).unwrap();
        std::fs::write(out, text)
            .map_err(|e| Error::Model(format!("{}: {e}", out.display())))?;
    }
    let result = analyze(&program, &templates, &options(Algorithm::Auto, tol))?;
    let template_label = |t: usize| format!("p{}", t + 1);
    if json {
        let bounds: serde_json::Value = result
            .point_names
            .iter()
            .zip(&result.bounds)
            .map(|(point, row)| {
                (
                    point.clone(),
                    serde_json::Value::Object(
                        row.iter()
                            .enumerate()
                            .map(|(t, &b)| {
                                (
                                    template_label(t),
                                    serde_json::to_value(ExtRealModel(b)).unwrap(),
                                )
                            })
                            .collect(),
                    ),
                )
            })
            .collect::<serde_json::Map<_, _>>()
            .into();
        let names = eq_names(&result);
        let mut doc = json!({
            "improvement_steps": result.solution.improvement_steps,
            "bounds": bounds,
        });
        if trace {
            doc["trace"] = trace_json(&names, &result.solution.trace);
        }
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        if trace {
            print_trace(&eq_names(&result), &result.solution.trace);
        }
        for (point, row) in result.point_names.iter().zip(&result.bounds) {
            let mut line = format!("{point}:");
            for (t, &b) in row.iter().enumerate() {
                write!(line, " {} = {}", template_label(t), display(b)).unwrap();
            }
            println!("{line}");
        }
        println!("{} improvement steps", result.solution.improvement_steps);
    }
    Ok(())
}

/// Equation-variable names of an analysis, in solver order.
fn eq_names(result: &strafix::relax::AnalysisResult) -> Vec<String> {
    let m = result.bounds.first().map_or(0, Vec::len);
    result
        .point_names
        .iter()
        .flat_map(|point| (0..m).map(move |t| format!("{point}_p{}", t + 1)))
        .collect()
}
