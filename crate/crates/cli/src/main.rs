use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use plancode_cli::config::{self, Cli, Command, ReportArgs, RunArgs};
use plancode_cli::{
    backends_for, execute_run, process_executor, report_from_file, EXIT_CONFIG, EXIT_OK,
};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Report(args) => cmd_report(&args),
    };
    ExitCode::from(code as u8)
}

fn cmd_run(args: &RunArgs) -> i32 {
    let settings = match config::resolve(args) {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("error: {msg}\n");
            let mut cmd = Cli::command();
            let usage = cmd
                .find_subcommand_mut("run")
                .map(|c| c.render_usage().to_string())
                .unwrap_or_default();
            eprintln!("{usage}");
            return EXIT_CONFIG;
        }
    };
    if !settings.dataset.is_file() {
        eprintln!("error: dataset {} not found\n", settings.dataset.display());
        let mut cmd = Cli::command();
        if let Some(run) = cmd.find_subcommand_mut("run") {
            eprintln!("{}", run.render_usage());
        }
        return EXIT_CONFIG;
    }
    let run = || -> Result<String, plancode_cli::RunError> {
        let backends = backends_for(&settings)?;
        let executor = process_executor(&settings);
        let summary = execute_run(&settings, &backends, &executor)?;
        log::info!("{summary:?}");
        report_from_file(&settings.out, &settings.pass_at, settings.estimator)
            .map(|r| r.to_text())
            .map_err(Into::into)
    };
    match run() {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_report(args: &ReportArgs) -> i32 {
    if !args.records.is_file() {
        eprintln!("error: run-record file {} not found", args.records.display());
        return EXIT_CONFIG;
    }
    let parsed = config::parse_pass_at(&args.pass_at)
        .and_then(|ks| config::parse_estimator(&args.estimator).map(|e| (ks, e)));
    let (ks, estimator) = match parsed {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    match report_from_file(&args.records, &ks, estimator) {
        Ok(report) => {
            if args.json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
