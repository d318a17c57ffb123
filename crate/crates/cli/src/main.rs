mod figures;
mod output;
mod run;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use detloop::closedform::formula;
use detloop::functionals::{build_default, catalog};

use output::{init_stderr_logger, io_failure, Failure, EXIT_OK};

#[derive(Parser)]
#[command(name = "detloop", version, about = "Detection-loophole thresholds for Bell, instrumental, prepare-and-measure and bilocal tests")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the job described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the data behind a figure and check its thresholds.
    Reproduce {
        /// fig1, fig2, fig3, fig4, fig5, fig9, fig10, fig11 or fig12
        figure: String,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
        /// Optimizer restarts per probe (default depends on the figure).
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Evaluate a closed-form threshold or condition.
    Formulas {
        /// Formula name; omit to list all.
        name: Option<String>,
        /// Argument as key=value, repeatable.
        #[arg(long = "arg", value_name = "K=V")]
        args: Vec<String>,
    },
    /// List the built-in functionals.
    ListFunctionals,
    /// Enumerate local deterministic vertices, optionally facets.
    Polytope {
        /// Scenario label, e.g. "instrumental(2,2,2)" or "bell(2,2,2,2)".
        scenario: String,
        #[arg(long)]
        facets: bool,
        /// Include interventional coordinates (instrumental scenarios).
        #[arg(long)]
        hybrid: bool,
        /// Check a functional's classical bound against the vertices.
        #[arg(long)]
        functional: Option<String>,
        /// Write facets as CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn parse_kv(items: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    let mut out = BTreeMap::new();
    for it in items {
        let (k, v) = it.split_once('=').ok_or_else(|| Failure::validation(format!("--arg '{it}': expected key=value")))?;
        let x: f64 = v.trim().parse().map_err(|e| Failure::validation(format!("--arg {k}: '{v}': {e}")))?;
        out.insert(k.trim().to_string(), x);
    }
    Ok(out)
}

fn execute(cli: Cli) -> Result<i32, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::validation("--threads: must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| io_failure(&config, e))?;
            let mut cfg = run::parse_config(&text)?;
            if let Some(seed) = run::env_seed()? {
                cfg.optimizer.seed = seed;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            run::run_config(&cfg, &config)
        }
        Command::Reproduce { figure, out, restarts } => {
            let opts = figures::ReproduceOptions { restarts, seed: run::env_seed()? };
            figures::reproduce(&figure, &out, &opts)
        }
        Command::Formulas { name: None, .. } => {
            init_stderr_logger();
            for f in detloop::closedform::FORMULAS {
                println!("{:<24} ({})    {}", f.name, f.args.join(", "), f.description);
            }
            Ok(EXIT_OK)
        }
        Command::Formulas { name: Some(name), args } => {
            init_stderr_logger();
            let given = parse_kv(&args)?;
            let positional = run::formula_args(&name, &given)
                .map_err(|f| Failure { message: f.message.replace("config field", "argument"), ..f })?;
            let r = formula(&name, &positional).map_err(|e| Failure::at("--arg", e))?;
            println!("{}", run::format_formula(&r));
            Ok(EXIT_OK)
        }
        Command::ListFunctionals => {
            init_stderr_logger();
            println!("{:<12} {:<22} {:>15}  {:<10} params", "name", "scenario", "classical_bound", "sense");
            for e in catalog() {
                let sense = serde_json::to_value(e.sense).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                println!("{:<12} {:<22} {:>15}  {:<10} {}", e.name, e.scenario, e.classical_bound, sense, e.params);
            }
            Ok(EXIT_OK)
        }
        Command::Polytope { scenario, facets, hybrid, functional, csv } => {
            init_stderr_logger();
            let f = match functional {
                Some(name) => Some(build_default(&name).map_err(|e| Failure::at("--functional", e))?),
                None => None,
            };
            let (_, table, lines) = run::polytope_job(&scenario, hybrid, facets, f.as_ref())?;
            for l in lines {
                println!("{l}");
            }
            if let Some(path) = csv {
                let table = table.ok_or_else(|| Failure::validation("--csv: requires --facets"))?;
                output::write_file(&path, &table)?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
