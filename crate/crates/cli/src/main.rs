use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tunekg::check::{run_checks, Fault};
use tunekg::kg::{triples_to_text, KgStore};
use tunekg::sim::synth::{generate, Fixture};
use tunekg::sim::{
    load_trace, populate_store, run_online, to_json_pretty, write_file, write_report, Curve,
    RunConfig, StoreSummary, CURVE_FILE, SUMMARY_FILE,
};
use tunekg::Error;

const STORE_FILE: &str = "store.jsonl";
const DECISIONS_FILE: &str = "decisions.jsonl";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const TRIPLES_FILE: &str = "triples.tsv";
const CONFIG_FILE: &str = "config.txt";
const REPORT_DIR: &str = "report";

#[derive(Parser)]
#[command(
    name = "tunekg",
    version,
    about = "Learned arm selection over a query knowledge graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a trace and load its queries, plans, arms and environment into a store.
    Ingest {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Replay a trace through the online loop and write a run directory.
    Run {
        #[arg(long, required_unless_present = "print_config")]
        trace: Option<PathBuf>,
        /// Flat `key = value` file applied over the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Store to record into; defaults to a fresh `store.jsonl` in the output directory.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        baseline_only: bool,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Rebuild the curve and summary of a run from its store alone.
    Report {
        /// Run directory; output goes to its `report/` subdirectory.
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `store.jsonl` inside the run directory.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Run the built-in verification suite.
    Check {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Write one of the packaged synthetic traces.
    Generate {
        /// favorable, adversarial or unseen_arm
        #[arg(long)]
        fixture: String,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn ingest(trace: &Path, store: &Path) -> Result<(), Error> {
    let tr = load_trace(trace, RunConfig::default().c_max)?;
    let mut kg = KgStore::open(store)?;
    populate_store(&tr, &mut kg)?;
    println!("{} queries, {} arms", tr.entries.len(), tr.arms.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    trace: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
    store: Option<&Path>,
    seed: Option<u64>,
    baseline_only: bool,
    print_config: bool,
) -> Result<(), Error> {
    let mut cfg = RunConfig::default();
    if let Some(p) = config {
        let text = std::fs::read_to_string(p).map_err(io_err(p))?;
        cfg.apply_text(&text)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if baseline_only {
        cfg.baseline_only = true;
    }
    if print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let trace = trace.expect("clap requires --trace without --print-config");
    let tr = load_trace(trace, cfg.c_max)?;
    cfg.validate(tr.arm_count())?;

    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let store_path = match store {
        Some(p) => p.to_path_buf(),
        None => {
            let p = out.join(STORE_FILE);
            if p.exists() {
                std::fs::remove_file(&p).map_err(io_err(&p))?;
            }
            p
        }
    };
    let mut kg = KgStore::open(&store_path)?;
    let result = run_online(&tr, &cfg, &mut kg)?;

    write_file(&out.join(CONFIG_FILE), &cfg.to_text())?;
    write_report(&result.report, out)?;
    let mut log = String::new();
    for d in &result.decisions {
        log.push_str(&serde_json::to_string(d).expect("decision lines serialize"));
        log.push('\n');
    }
    write_file(&out.join(DECISIONS_FILE), &log)?;
    if let Some(ckpt) = &result.checkpoint {
        write_file(&out.join(CHECKPOINT_FILE), &ckpt.to_json())?;
    }
    write_file(
        &out.join(TRIPLES_FILE),
        &triples_to_text(&kg.export_triples()),
    )?;

    let r = &result.report;
    let base = r.baseline_total();
    match r.learned_total() {
        Some(l) if !cfg.baseline_only => println!(
            "{} queries: baseline {base:.3} ms, learned {l:.3} ms ({:.3}x)",
            r.rows.len(),
            l / base
        ),
        _ => println!("{} queries: baseline {base:.3} ms", r.rows.len()),
    }
    Ok(())
}

fn report(out: &Path, store: Option<&Path>) -> Result<(), Error> {
    let store_path = store.map_or_else(|| out.join(STORE_FILE), Path::to_path_buf);
    if !store_path.is_file() {
        return Err(tunekg::sim::ReportError::NoRecords.into());
    }
    let kg = KgStore::open(&store_path)?;
    let curve = Curve::from_store(&kg)?;
    let summary = StoreSummary::from_store(&kg)?;
    let problems = kg.check_integrity(&kg.export_triples());
    if let Some(first) = problems.first() {
        return Err(tunekg::kg::KgError::Validation(format!(
            "{} integrity problems in exported triples; first: {first}",
            problems.len()
        ))
        .into());
    }
    let dir = out.join(REPORT_DIR);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_file(&dir.join(CURVE_FILE), &curve.to_tsv())?;
    write_file(&dir.join(SUMMARY_FILE), &to_json_pretty(&summary))?;
    println!(
        "{} queries, {} executions; report written to {}",
        summary.queries,
        summary.executions,
        dir.display()
    );
    Ok(())
}

fn check(inject_fault: Option<&str>) -> ExitCode {
    let fault = match inject_fault {
        None => Fault::None,
        Some("gradient") => Fault::Gradient,
        Some(other) => {
            eprintln!("error: unknown fault `{other}`");
            return ExitCode::from(1);
        }
    };
    let results = run_checks(fault);
    let mut failed = 0u8;
    for c in &results {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", c.name, c.detail);
        if !c.passed {
            failed = failed.saturating_add(1);
        }
    }
    ExitCode::from(failed.min(125))
}

fn generate_cmd(fixture: &str, out: Option<&Path>) -> Result<(), Error> {
    let f = Fixture::from_name(fixture).ok_or_else(|| tunekg::sim::ConfigError::BadValue {
        key: "fixture".into(),
        value: fixture.into(),
    })?;
    let text = generate(f);
    match out {
        Some(p) => std::fs::write(p, text).map_err(io_err(p))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Ingest { trace, store } => ingest(trace, store),
        Command::Run {
            trace,
            config,
            out,
            store,
            seed,
            baseline_only,
            print_config,
        } => run(
            trace.as_deref(),
            config.as_deref(),
            out,
            store.as_deref(),
            *seed,
            *baseline_only,
            *print_config,
        ),
        Command::Report { out, store } => report(out, store.as_deref()),
        Command::Check { inject_fault } => return check(inject_fault.as_deref()),
        Command::Generate { fixture, out } => generate_cmd(fixture, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
