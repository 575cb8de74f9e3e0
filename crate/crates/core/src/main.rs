use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nashflow::cli::{self, EXIT_CONFIG, EXIT_OK};

/// Distributed Nash-equilibrium seeking experiments.
#[derive(Parser, Debug)]
#[command(name = "nashflow", version, about)]
struct Args {
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Run every `*.toml` config in this directory in parallel; takes no
    /// subcommand.
    #[arg(long, value_name = "DIR")]
    batch: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment (a config path or a bundled config name).
    Run { config: String },
    /// Check a config without integrating.
    Validate { config: String },
    /// List the bundled configs.
    Examples {
        /// Also write them as TOML files into this directory.
        #[arg(long, value_name = "DIR")]
        write: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            // usage errors share the config-error code; 2 means "diverged"
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    let code = match (args.batch, args.command) {
        (Some(_), Some(_)) => {
            eprintln!("--batch cannot be combined with a subcommand");
            EXIT_CONFIG
        }
        (Some(dir), None) => batch(&dir, &args.out),
        (None, Some(Command::Run { config })) => run(&config, &args.out),
        (None, Some(Command::Validate { config })) => validate(&config),
        (None, Some(Command::Examples { write })) => examples(write),
        (None, None) => {
            eprintln!("nothing to do; try `nashflow --help`");
            EXIT_CONFIG
        }
    };
    ExitCode::from(code as u8)
}

fn run(config: &str, out: &std::path::Path) -> i32 {
    let cfg = match cli::load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{config}:\n{e}");
            return EXIT_CONFIG;
        }
    };
    match cli::run_experiment(&cfg, out) {
        Ok(r) => {
            let c = &r.summary.convergence;
            println!(
                "{}: {:?} (residual {}, ne distance {}) -> {}, {}",
                r.summary.name,
                r.summary.outcome,
                fmt_opt(c.final_residual),
                fmt_opt(c.final_ne_distance),
                r.csv_path.display(),
                r.summary_path.display()
            );
            r.exit_code()
        }
        Err(e) => {
            eprintln!("{config}: {e}");
            EXIT_CONFIG
        }
    }
}

fn validate(config: &str) -> i32 {
    let diags = cli::validate_config(config);
    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        println!("{config}: ok");
        EXIT_OK
    } else {
        EXIT_CONFIG
    }
}

fn examples(write: Option<PathBuf>) -> i32 {
    if let Some(dir) = &write {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("{}: {e}", dir.display());
            return EXIT_CONFIG;
        }
    }
    for b in cli::list_examples() {
        println!("{:<24} {}", b.name, b.description);
        if let Some(dir) = &write {
            let path = dir.join(format!("{}.toml", b.name));
            if let Err(e) = std::fs::write(&path, b.source) {
                eprintln!("{}: {e}", path.display());
                return EXIT_CONFIG;
            }
        }
    }
    EXIT_OK
}

fn batch(dir: &std::path::Path, out: &std::path::Path) -> i32 {
    let items = match cli::run_batch(dir, out) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("{}: {e}", dir.display());
            return EXIT_CONFIG;
        }
    };
    for item in &items {
        match &item.result {
            Ok(r) => println!("{}: {:?}", item.config.display(), r.summary.outcome),
            Err(e) => eprintln!("{}: {e}", item.config.display()),
        }
    }
    items.iter().map(|i| i.exit_code).max().unwrap_or(EXIT_OK)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.3e}"))
}
