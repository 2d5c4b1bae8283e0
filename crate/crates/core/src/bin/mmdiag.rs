use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mmdiag::battery::{generate_battery, generate_submodule};
use mmdiag::bench;
use mmdiag::diagnosability::render::{MacroTable, Renderer};
use mmdiag::diagnosability::analyze;
use mmdiag::model::{flatten_with, load_model, parser::parse, Approach, FlatModel, FlattenOptions, ModelConfig};
use mmdiag::oracle::{self, RandomModelSpec, DEFAULT_MODE_CAP};

const EXIT_MODEL: u8 = 1;
const EXIT_MISMATCH: u8 = 2;
const EXIT_USAGE: u8 = 3;

/// Structural diagnosability of multi-mode equation models.
#[derive(Parser)]
#[command(name = "mmdiag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the battery pack model.
    Generate {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ApproachArg::Signal)]
        approach: ApproachArg,
        /// A single submodule without pack sensors.
        #[arg(long)]
        submodule: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Diagnosability matrix of a model.
    Diagnose {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Threads for the per-fault decompositions of fault-signal models.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// TOML file with a [macros] table used when printing entries.
        #[arg(long)]
        macros: Option<PathBuf>,
        /// Faults to print first, in this order; the rest follow.
        #[arg(long, value_delimiter = ',')]
        fault_order: Vec<String>,
    },
    /// Compare the symbolic matrix with per-mode brute force.
    Verify {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = DEFAULT_MODE_CAP)]
        mode_cap: usize,
        /// Check a random guarded model in both flavors instead.
        #[arg(long, conflicts_with_all = ["model", "n", "submodule"])]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Time both approaches over battery sizes and print CSV.
    Bench {
        /// Sizes as `1..6`, `1,2,4` or a single number.
        #[arg(long, default_value = "1..6")]
        n: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    /// Model file; without it the battery pack of `--n` submodules is used.
    model: Option<PathBuf>,
    /// Sidecar TOML with parameters and fault settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of submodules; sets the `N` parameter of a model file.
    #[arg(long)]
    n: Option<usize>,
    /// Use the standalone submodule model.
    #[arg(long, conflicts_with = "n")]
    submodule: bool,
    /// Expected approach of a model file, or flavor of a generated one.
    #[arg(long, value_enum)]
    approach: Option<ApproachArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproachArg {
    Signal,
    Boolean,
}

impl From<ApproachArg> for Approach {
    fn from(a: ApproachArg) -> Self {
        match a {
            ApproachArg::Signal => Approach::Signal,
            ApproachArg::Boolean => Approach::Boolean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Model(#[from] mmdiag::model::ModelError),
    #[error(transparent)]
    Diag(#[from] mmdiag::diagnosability::DiagError),
    #[error(transparent)]
    Oracle(#[from] mmdiag::oracle::OracleError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_MODEL,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Generate {
            n,
            approach,
            submodule,
            output,
        } => {
            let text = if submodule {
                generate_submodule(approach.into())
            } else {
                generate_battery(n, approach.into())
            };
            emit(output.as_deref(), &text)?;
            Ok(0)
        }
        Command::Diagnose {
            source,
            format,
            jobs,
            macros,
            fault_order,
        } => {
            let (fm, cfg) = source.load()?;
            let mut table = MacroTable::battery().with(&cfg.macros);
            if let Some(path) = macros {
                table = table.with(&ModelConfig::load(&path)?.macros);
            }
            let mut mgr = fm.new_manager();
            let (m, _) = analyze(&mut mgr, &fm, jobs.max(1))?;
            let m = m.reordered(&fault_order).map_err(|e| CliError::Usage(e.to_string()))?;
            let renderer = Renderer::new(&mut mgr, &table).map_err(|e| CliError::Usage(format!("bad macro: {e}")))?;
            for w in &fm.warnings {
                eprintln!("warning: {w}");
            }
            let text = match format {
                Format::Table => renderer.table(&mut mgr, &m),
                Format::Csv => renderer.csv(&mut mgr, &m),
                Format::Json => {
                    let doc = renderer.json(&mut mgr, &m);
                    format!("{}\n", serde_json::to_string_pretty(&doc).expect("json value serializes"))
                }
            };
            emit(None, &text)?;
            Ok(0)
        }
        Command::Verify {
            source,
            mode_cap,
            seed,
            jobs,
        } => {
            let models = match seed {
                Some(seed) => {
                    let (s, b) = oracle::random_model_pair(seed, &RandomModelSpec::default());
                    vec![
                        from_text(&s, &FlattenOptions::default())?,
                        from_text(&b, &FlattenOptions::default())?,
                    ]
                }
                None if source.model.is_none() && source.approach.is_none() => {
                    let mut both = Vec::new();
                    for a in [ApproachArg::Signal, ApproachArg::Boolean] {
                        let s = Source {
                            approach: Some(a),
                            model: None,
                            config: source.config.clone(),
                            ..source
                        };
                        both.push(s.load()?.0);
                    }
                    both
                }
                None => vec![source.load()?.0],
            };
            let mut total = 0;
            for fm in &models {
                let mut mgr = fm.new_manager();
                let (m, _) = analyze(&mut mgr, fm, jobs.max(1))?;
                let brute = oracle::diagnosability_bruteforce(fm, mode_cap)?;
                for mm in oracle::compare(&mgr, &m, &brute)? {
                    println!("{}", mm.json_line());
                    total += 1;
                }
            }
            println!("{total} mismatches");
            Ok(if total == 0 { 0 } else { EXIT_MISMATCH })
        }
        Command::Bench { n, jobs, output } => {
            let sizes = parse_sizes(&n)?;
            let rows = bench::sweep(&sizes, jobs.max(1))?;
            emit(output.as_deref(), &bench::to_csv(&rows))?;
            Ok(0)
        }
    }
}

impl Source {
    fn load(&self) -> Result<(FlatModel, ModelConfig), CliError> {
        let cfg = match &self.config {
            Some(p) => ModelConfig::load(p)?,
            None => ModelConfig::default(),
        };
        let requested = self.approach.map(Approach::from).or(cfg.approach);
        let fm = match &self.model {
            Some(path) => {
                let mut opts = cfg.flatten_options();
                if let Some(n) = self.n {
                    opts.params.insert("N".to_string(), n as i64);
                }
                load_model(path, &opts)?
            }
            None => {
                let approach = requested.unwrap_or(Approach::Signal);
                let text = if self.submodule {
                    generate_submodule(approach)
                } else {
                    generate_battery(self.n.or(cfg.n.map(|n| n as usize)).unwrap_or(1), approach)
                };
                from_text(&text, &cfg.flatten_options())?
            }
        };
        if let Some(a) = requested {
            if a != fm.approach {
                return Err(CliError::Usage(format!(
                    "model uses the {} approach but {a} was requested",
                    fm.approach
                )));
            }
        }
        Ok((fm, cfg))
    }
}

fn from_text(text: &str, opts: &FlattenOptions) -> Result<FlatModel, CliError> {
    let ast = parse(text).map_err(mmdiag::model::ModelError::from)?;
    Ok(flatten_with(&ast, opts)?)
}

fn parse_sizes(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("cannot read sizes `{text}`"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
