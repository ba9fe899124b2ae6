use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mifno::orchestrator::{
    estimate_only, occupation_spectrum, parse_config, parse_report, render_estimate_table,
    report_render, run, EstimateSource, FnoScope, OrchestratorError, ReportFormat, RunConfig,
    SolverKind, DEFAULT_THRESHOLDS,
};
use mifno::{parse_fcidump, FnoPolicy};

#[derive(Parser)]
#[command(name = "mifno", version, about = "Incremental correlation energies with FNO truncation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve all increments and reconstruct the energy.
    Run(RunArgs),
    /// Print qubit counts for a ladder of FNO occupancies without solving.
    EstimateOnly(EstimateArgs),
    /// Re-render a JSON report.
    Render {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Table => ReportFormat::Table,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Integral file of the whole molecule.
    #[arg(long)]
    fcidump: Option<PathBuf>,
    /// Highest increment order n of the MI(n) expansion.
    #[arg(long)]
    order: Option<usize>,
    /// Keep natural orbitals up to this cumulative occupation fraction.
    #[arg(long, conflicts_with = "fno_keep_count")]
    fno_occupancy: Option<f64>,
    /// Keep this many virtual spatial orbitals per increment.
    #[arg(long)]
    fno_keep_count: Option<usize>,
    /// per_increment or global
    #[arg(long)]
    fno_scope: Option<String>,
    /// fci, vqe_uccsd or both
    #[arg(long)]
    solver: Option<String>,
    /// Number of increments solved concurrently.
    #[arg(long)]
    workers: Option<usize>,
    /// Reuse solved increments found in the ledger.
    #[arg(long)]
    resume: bool,
    /// JSON-lines record of solved increments.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Energy screening threshold in hartree.
    #[arg(long)]
    screen: Option<f64>,
    /// Format printed to stdout.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct EstimateArgs {
    /// Compute the occupation spectrum from this file.
    #[arg(long, conflicts_with_all = ["n_occ", "spectrum"])]
    fcidump: Option<PathBuf>,
    /// Occupied spatial orbitals.
    #[arg(long, requires = "n_virt")]
    n_occ: Option<usize>,
    /// Virtual spatial orbitals of the untruncated system.
    #[arg(long)]
    n_virt: Option<usize>,
    /// File of whitespace-separated spatial occupations, used with --n-occ.
    #[arg(long)]
    spectrum: Option<PathBuf>,
    /// Known kept-virtual counts as `tau=N_v`, used with --n-occ.
    #[arg(long = "kept", value_delimiter = ',')]
    kept: Vec<String>,
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Comma-separated occupation fractions (default 0.99 down to 0.1).
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    #[arg(long)]
    json: bool,
}

fn build_config(a: &RunArgs) -> Result<RunConfig, OrchestratorError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|source| OrchestratorError::Io { path: path.clone(), source })?;
            let base = path.parent().unwrap_or(Path::new("."));
            // Allow the flags to supply required keys missing from the file.
            let mut extra = String::new();
            if let Some(p) = &a.fcidump {
                extra += &format!("fcidump = {}\n", p.display());
            }
            if let Some(n) = a.order {
                extra += &format!("order = {n}\n");
            }
            let merged = if extra.is_empty() { text } else { format!("{text}\n{extra}") };
            parse_config(&merged, base)?
        }
        None => {
            let fcidump = a
                .fcidump
                .clone()
                .ok_or_else(|| OrchestratorError::Config("--fcidump or --config is required".into()))?;
            let order =
                a.order.ok_or_else(|| OrchestratorError::Config("--order is required".into()))?;
            RunConfig::new(fcidump, order)
        }
    };
    if let Some(p) = &a.fcidump {
        cfg.fcidump_path = p.clone();
    }
    if let Some(n) = a.order {
        cfg.order = n;
    }
    if let Some(t) = a.fno_occupancy {
        cfg.fno = Some(FnoPolicy::Occupancy(t));
    }
    if let Some(k) = a.fno_keep_count {
        cfg.fno = Some(FnoPolicy::KeepCount(k));
    }
    if let Some(s) = &a.fno_scope {
        cfg.fno_scope = FnoScope::parse(s)?;
    }
    if let Some(s) = &a.solver {
        cfg.solver = SolverKind::parse(s)?;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if a.resume {
        cfg.resume = true;
    }
    if let Some(p) = &a.ledger {
        cfg.ledger_path = Some(p.clone());
    }
    if let Some(p) = &a.report {
        cfg.report_path = Some(p.clone());
    }
    if let Some(t) = a.screen {
        cfg.screen_threshold = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn estimate(a: &EstimateArgs) -> Result<String, OrchestratorError> {
    let thresholds = if a.thresholds.is_empty() { DEFAULT_THRESHOLDS.to_vec() } else { a.thresholds.clone() };
    let (n_occ, n_virt, source) = if let Some(path) = &a.fcidump {
        let text = fs::read_to_string(path)
            .map_err(|source| OrchestratorError::Io { path: path.clone(), source })?;
        let store = parse_fcidump(&text)?;
        let spectrum = occupation_spectrum(&store)?;
        (store.n_occupied(), store.n_orb() - store.n_occupied(), EstimateSource::Spectrum(spectrum))
    } else {
        let n_occ = a
            .n_occ
            .ok_or_else(|| OrchestratorError::Config("--fcidump or --n-occ is required".into()))?;
        let n_virt = a.n_virt.unwrap_or(0);
        let source = if let Some(path) = &a.spectrum {
            let text = fs::read_to_string(path)
                .map_err(|source| OrchestratorError::Io { path: path.clone(), source })?;
            let values = text
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| OrchestratorError::Config(format!("spectrum: {e}")))?;
            EstimateSource::Spectrum(values)
        } else {
            let mut counts = Vec::new();
            for item in &a.kept {
                let (t, n) = item
                    .split_once('=')
                    .ok_or_else(|| OrchestratorError::Config(format!("--kept expects tau=N_v, got '{item}'")))?;
                let t = t.trim().parse::<f64>().map_err(|e| OrchestratorError::Config(e.to_string()))?;
                let n = n.trim().parse::<usize>().map_err(|e| OrchestratorError::Config(e.to_string()))?;
                counts.push((t, n));
            }
            EstimateSource::Counts(counts)
        };
        (n_occ, n_virt, source)
    };
    let table = estimate_only(n_occ, n_virt, a.order, &source, &thresholds)?;
    if a.json {
        let mut s = serde_json::to_string_pretty(&table)?;
        s.push('\n');
        Ok(s)
    } else {
        Ok(render_estimate_table(&table))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => build_config(&a).and_then(|cfg| {
            let report = run(&cfg)?;
            print!("{}", report_render(&report, a.format.into())?);
            Ok(report.exit_code())
        }),
        Command::EstimateOnly(a) => estimate(&a).map(|s| {
            print!("{s}");
            0
        }),
        Command::Render { report, format } => fs::read_to_string(&report)
            .map_err(|source| OrchestratorError::Io { path: report.clone(), source })
            .and_then(|text| parse_report(&text))
            .and_then(|r| report_render(&r, format.into()))
            .map(|s| {
                print!("{s}");
                0
            }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
