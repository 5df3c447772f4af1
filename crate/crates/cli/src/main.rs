use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iogames::report::{self, exit, InstanceFile, RunOptions, Task};
use iogames::Error;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  schema error (malformed or invalid instance, wrong object for the free set)
  3  solver failure (no optimal solution within tolerances)
  4  verification failure (equality residual, witness or strict feasibility check)
  5  I/O error (instance unreadable, output not writable)

A relative --instance path that does not exist is also looked up in the
fixture directory ($IOGAMES_FIXTURES, default: the shipped fixtures/).";

#[derive(Parser)]
#[command(name = "iogames", version, about = "Robustness, membership and game verification for quantum channels, instruments and supermaps", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generalized robustness with a re-verified witness.
    Robustness(Common),
    /// Membership verdict with a point or a separating witness.
    Membership(Common),
    /// Build the canonical game from the optimal witness.
    Game(Common),
    /// Check the payoff ratio against 1 + R.
    Verify(Common),
    /// Sweep one family parameter and write CSV.
    Scan(Common),
}

#[derive(Args)]
struct Common {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Output file (report JSON, or CSV for `scan`); stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Equality tolerance for `game` and `verify`, overriding the instance.
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads for `scan`.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Include the dual witness in the report.
    #[arg(long)]
    emit_witness: bool,
    /// Include the constructed game in a `verify` report.
    #[arg(long)]
    emit_game: bool,
}

fn resolve(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    let alt = report::fixtures_dir().join(path);
    if alt.exists() {
        alt
    } else {
        path.to_path_buf()
    }
}

fn fail(e: &Error) -> ExitCode {
    let info = serde_json::json!({
        "status": "error",
        "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() },
    });
    eprintln!("{}", serde_json::to_string_pretty(&info).expect("json"));
    ExitCode::from(e.exit_code() as u8)
}

fn write(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Robustness(a) => (Task::Robustness, a),
        Command::Membership(a) => (Task::Membership, a),
        Command::Game(a) => (Task::Game, a),
        Command::Verify(a) => (Task::Verify, a),
        Command::Scan(a) => (Task::Scan, a),
    };
    let mut inst = match InstanceFile::load(&resolve(&args.instance)) {
        Ok(i) => i,
        Err(e) => return fail(&e),
    };
    // The subcommand decides the task; only `scan` keeps a scan block.
    inst.task = task;
    if task != Task::Scan && inst.scan.is_some() {
        return fail(&Error::Schema(format!(
            "instance has a `scan` block; run it with `scan`, not `{}`",
            serde_json::to_value(task)
                .expect("task")
                .as_str()
                .unwrap_or("?")
        )));
    }
    if let Some(t) = args.tol {
        if !(t.is_finite() && t > 0.0 && t < 1.0) {
            return fail(&Error::Schema(format!("--tol {t} must lie in (0, 1)")));
        }
    }
    if task == Task::Scan {
        let res = match report::scan(&inst, args.jobs.max(1)) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        if let Some(c) = res.crossing {
            eprintln!(
                "crossing at {:.9} (bracket [{:.9}, {:.9}], {} bisections)",
                c.estimate, c.lower, c.upper, c.bisections
            );
        }
        if let Err(e) = write(&args.out, &res.to_csv()) {
            return fail(&e);
        }
        return ExitCode::from(exit::OK as u8);
    }
    let opts = RunOptions {
        emit_witness: args.emit_witness,
        emit_game: args.emit_game,
        tol: args.tol,
        jobs: args.jobs,
    };
    let rep = report::run(&inst, &opts);
    let mut text = rep.to_json();
    text.push('\n');
    if let Err(e) = write(&args.out, &text) {
        return fail(&e);
    }
    ExitCode::from(rep.exit_code() as u8)
}
