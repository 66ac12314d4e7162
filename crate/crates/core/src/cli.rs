//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::conditions::ConditionReport;
use crate::config::{parse_config_as, ExperimentConfig, Mode, OutputFormat};
use crate::error::Error;
use crate::experiment::{check_assertions, partial_marker, run_experiment, run_sweep, write_outputs, RunOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_ASSERT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "stochapprox", version, about = "Stochastic approximation experiments under heavy-tailed noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo runs of the stochastic approximation recursion.
    SaRun(Common),
    /// Monte-Carlo runs of zeroth-order SGD.
    SgdRun(Common),
    /// Empirical test of the damped recursion over a (t, zeta) grid.
    GsllnTest(Common),
    /// Sufficient-condition reports for a noise model and step sizes.
    CheckConditions(Common),
    /// One experiment per value of a swept parameter.
    Sweep(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output.dir`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Evaluate the config's `assert` block; exit 3 if any check fails.
    #[arg(long = "assert")]
    assert: bool,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Sets `base_seed` at the top level and inside a sweep's `base`.
fn override_seed(text: &str, seed: u64) -> Result<String, Error> {
    let mut v: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Config { path: String::new(), message: e.to_string() })?;
    if let Some(map) = v.as_object_mut() {
        map.insert("base_seed".into(), seed.into());
        if let Some(base) = map.get_mut("base").and_then(|b| b.as_object_mut()) {
            base.insert("base_seed".into(), seed.into());
        }
    }
    Ok(v.to_string())
}

fn load(common: &Common, mode: Mode) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Error::Config { path: common.config.display().to_string(), message: e.to_string() })?;
    let text = match common.seed {
        Some(s) => override_seed(&text, s)?,
        None => text,
    };
    let cfg = parse_config_as(&text, Some(mode))?;
    if common.assert && cfg.assertions.is_none() && mode != Mode::Sweep {
        return Err(Error::Config { path: "assert".into(), message: "missing (required by --assert)".into() });
    }
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6e}"))
}

fn print_run(out: &RunOutput, rows: &Path) {
    let s = &out.summary;
    println!("{}: {} rows -> {}", s.experiment_id, out.rows.len(), rows.display());
    if s.runs > 0 {
        println!("  runs {}, diverged {}", s.runs, s.diverged);
        for cell in s.cells() {
            let last = s.series(cell).last().expect("nonempty series");
            let tag = cell.map(|c| format!("cell {c}: ")).unwrap_or_default();
            println!("  {tag}n = {}: q10 {} q50 {} q90 {}", last.n, fmt_opt(last.q10), fmt_opt(last.q50), fmt_opt(last.q90));
        }
    }
    print_reports(&out.reports);
}

fn print_reports(reports: &[ConditionReport]) {
    for r in reports {
        let clause = r.clause.as_deref().unwrap_or("-");
        let value = r.clause.as_deref().and_then(|c| r.evidence(c)).map_or(String::new(), |e| format!(" = {}", e.value));
        println!("  {:<4} {:<13} {clause}{value}", r.family, format!("{:?}", r.verdict).to_lowercase());
    }
}

/// Returns the process exit code.
fn assert_run(out: &RunOutput) -> i32 {
    let results = check_assertions(out);
    for r in &results {
        println!("{} {} {}: {}", if r.passed { "PASS" } else { "FAIL" }, out.config.id, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_ASSERT
    }
}

fn execute(common: &Common, mode: Mode) -> i32 {
    let cfg = match load(common, mode) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let dir = common.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let format = common.format.unwrap_or(cfg.output.format);
    if mode == Mode::Sweep {
        return match run_sweep(&cfg, common.workers, &dir, format) {
            Ok((index, outputs)) => {
                let mut code = EXIT_OK;
                for (out, entry) in outputs.iter().zip(&index.children) {
                    print_run(out, &entry.rows);
                    if common.assert && out.config.assertions.is_some() {
                        code = code.max(assert_run(out));
                    }
                }
                println!("index -> {}", dir.join(format!("{}.index.json", cfg.id)).display());
                code
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        };
    }
    let out = match run_experiment(&cfg, common.workers) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            let _ = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(partial_marker(&dir, &cfg.id), format!("{e}\n")));
            return exit_code(&e);
        }
    };
    let paths = match write_outputs(&out, &dir, format) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    print_run(&out, &paths.rows);
    if common.assert {
        assert_run(&out)
    } else {
        EXIT_OK
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match &cli.command {
        Command::SaRun(c) => execute(c, Mode::Sa),
        Command::SgdRun(c) => execute(c, Mode::Sgd),
        Command::GsllnTest(c) => execute(c, Mode::Gslln),
        Command::CheckConditions(c) => execute(c, Mode::Conditions),
        Command::Sweep(c) => execute(c, Mode::Sweep),
    }
}
