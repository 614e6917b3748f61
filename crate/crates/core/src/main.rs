//! `wg2d` command line: convergence studies and verification sweeps.
//!
//! Usage:
//!   wg2d convergence [--config FILE] [--k K] [--p P] [--q Q]
//!                    [--mesh square|nonconvex] [--levels 4,8,16,32]
//!                    [--solution trig|poly] [--r-mode nonconvex|convex|R]
//!                    [--solver direct|cg] [--tol T] [--seed S] [--out CSV]
//!   wg2d verify      [same flags]
//!
//! Exit codes: 0 success, 2 config error, 3 solver failure, 4 invariant
//! failure.

use std::process::ExitCode;

use wg2d::cli::{render_summary, run_convergence, run_verify, StudyConfig};
use wg2d::WgError;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &WgError) -> u8 {
    match e {
        WgError::InvalidConfig(_)
        | WgError::InvalidR { .. }
        | WgError::InvalidMesh(_)
        | WgError::UnsupportedDegree(..)
        | WgError::SelfIntersectingPolygon(_)
        | WgError::EdgeNotIncident { .. } => 2,
        WgError::NotPositiveDefinite(_)
        | WgError::NoConvergence { .. }
        | WgError::SingularMass(_) => 3,
        WgError::BoundaryNotZero(_) => 4,
    }
}

fn run(args: &[String]) -> Result<ExitCode, WgError> {
    let Some(command) = args.first() else {
        eprintln!("usage: wg2d <convergence|verify> [flags]");
        return Ok(ExitCode::from(2));
    };
    let config = parse_flags(&args[1..])?;
    match command.as_str() {
        "convergence" => {
            let (report, csv) = run_convergence(&config)?;
            match &config.out {
                Some(path) => {
                    std::fs::write(path, &csv)
                        .map_err(|e| WgError::InvalidConfig(format!("cannot write {path}: {e}")))?;
                    print!("{}", render_summary(&report));
                    println!("csv written to {path}");
                }
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        "verify" => {
            let outcome = run_verify(&config)?;
            print!("{}", outcome.report);
            if outcome.ok {
                println!("verify: all invariants hold");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("verify: INVARIANT FAILURE");
                Ok(ExitCode::from(4))
            }
        }
        other => {
            eprintln!("unknown command `{other}`; expected convergence or verify");
            Ok(ExitCode::from(2))
        }
    }
}

fn parse_flags(args: &[String]) -> Result<StudyConfig, WgError> {
    let mut config = StudyConfig::default();
    let mut pending: Vec<(String, String)> = Vec::new();
    let mut config_file: Option<String> = None;
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let Some(key) = flag.strip_prefix("--") else {
            return Err(WgError::InvalidConfig(format!(
                "unexpected argument `{flag}` (flags start with --)"
            )));
        };
        let value = it
            .next()
            .ok_or_else(|| WgError::InvalidConfig(format!("flag --{key} needs a value")))?
            .clone();
        if key == "config" {
            config_file = Some(value);
        } else {
            pending.push((key.to_string(), value));
        }
    }
    if let Some(path) = config_file {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| WgError::InvalidConfig(format!("cannot read {path}: {e}")))?;
        config = StudyConfig::parse(&text)?;
    }
    // Flags override the file.
    for (key, value) in pending {
        config.set(&key, &value)?;
    }
    config.validate()?;
    Ok(config)
}
