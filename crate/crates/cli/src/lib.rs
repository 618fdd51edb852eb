//! Command implementations behind the `ckb` binary.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;

use args::Command;
use error::CliError;
use report::RunReport;

pub fn execute(command: &Command) -> Result<RunReport, CliError> {
    match command {
        Command::Metric(a) => commands::run_metric(a),
        Command::Verify(a) => commands::run_verify(a),
        Command::Converge(a) => commands::run_converge(a),
        Command::Adapt(a) => commands::run_adapt(a),
        Command::Generate(a) => commands::run_generate(a),
    }
}

fn out_path(command: &Command) -> Option<&std::path::Path> {
    match command {
        Command::Metric(a) => a.out.as_deref(),
        Command::Verify(a) => a.out.as_deref(),
        Command::Converge(a) => a.out.as_deref(),
        Command::Adapt(a) => a.out.as_deref(),
        Command::Generate(a) => a.out.as_deref(),
    }
}

/// Runs a command, writes or prints its report and returns the exit code.
pub fn run(command: &Command) -> i32 {
    let outcome = execute(command).and_then(|report| {
        let path = out_path(command)
            .map(|p| p.to_path_buf())
            .or_else(|| report::default_report_path(&report.command));
        match path {
            Some(p) => {
                report.write(&p)?;
                println!("{}", commands::summary(&report));
                println!("report: {}", p.display());
            }
            None => println!("{}", report.to_json()?),
        }
        commands::report_status(&report)
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ckb: {e}");
            e.exit_code()
        }
    }
}
