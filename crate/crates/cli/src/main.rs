//! `ctxdep` command-line driver: circuit generation, drift simulation,
//! context-dependence analysis and report summaries.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ctxdep::pipeline::{jsd_profile, pairwise_matrices, write_jsd_profile_csv};
use ctxdep::{
    lgst_circuits, lsgst_circuits, run_analysis, run_drift_experiment, AnalysisReport, CircuitFamily,
    ComparisonPlan, ContextDataset, ErrorModel, GstDesign, SimConfig,
};

mod summary;

#[derive(Parser)]
#[command(name = "ctxdep", version, about = "Detect and quantify context-dependent errors in circuit count data")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "CTXDEP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Lgst,
    Lsgst,
}

impl From<Mode> for CircuitFamily {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Lgst => CircuitFamily::Lgst,
            Mode::Lsgst => CircuitFamily::Lsgst,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the circuit list of a GST design and print its size.
    GenCircuits {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Lsgst)]
        mode: Mode,
        /// JSON array of {spec, core_length}; omitted means count only.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate every circuit of a design in every context of an error model.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        error_model: PathBuf,
        /// Repetitions per circuit per context.
        #[arg(long, default_value_t = 100)]
        shots: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Lsgst)]
        mode: Mode,
        /// Comma-separated subset of the error model's contexts.
        #[arg(long, value_delimiter = ',')]
        contexts: Option<Vec<String>>,
    },
    /// Test a dataset for context dependence and write a JSON report.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        /// Global significance level shared by all comparisons.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// `auto`, `pairs`, `joint`, or a plan file.
        #[arg(long, default_value = "auto")]
        plan: String,
        #[arg(long)]
        out: PathBuf,
        /// Directory for the pairwise-matrix and JSD-profile CSV tables.
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Print a human-readable summary of a report.
    Summarize {
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e
                .chain()
                .any(|c| c.downcast_ref::<ctxdep::Error>().is_some_and(ctxdep::Error::is_numeric));
            ExitCode::from(if numeric { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("thread count must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::GenCircuits { design, mode, out } => gen_circuits(&design, mode, out.as_deref()),
        Command::Simulate {
            design,
            error_model,
            shots,
            seed,
            out,
            mode,
            contexts,
        } => {
            let design = load_design(&design)?;
            let model = ErrorModel::load(&error_model)
                .with_context(|| format!("loading error model {}", error_model.display()))?;
            let mut cfg = SimConfig::new(shots, seed)?.with_family(mode.into());
            if let Some(c) = contexts {
                cfg = cfg.with_contexts(c);
            }
            let dataset = run_drift_experiment(&design, &model, &cfg)?;
            dataset.save(&out)?;
            println!(
                "{} circuits x {} contexts x {} shots -> {}",
                dataset.circuits.len(),
                dataset.contexts.len(),
                shots,
                out.display()
            );
            Ok(())
        }
        Command::Analyze {
            data,
            alpha,
            plan,
            out,
            tables,
        } => analyze(&data, alpha, &plan, &out, tables.as_deref()),
        Command::Summarize { report } => {
            let report = AnalysisReport::load(&report)
                .with_context(|| format!("reading report {}", report.display()))?;
            print!("{}", summary::render(&report));
            Ok(())
        }
    }
}

fn load_design(path: &Path) -> Result<GstDesign> {
    GstDesign::load(path).with_context(|| format!("loading design {}", path.display()))
}

fn gen_circuits(design: &Path, mode: Mode, out: Option<&Path>) -> Result<()> {
    let design = load_design(design)?;
    let circuits = match mode {
        Mode::Lgst => lgst_circuits(&design)?,
        Mode::Lsgst => lsgst_circuits(&design)?,
    };
    if let Some(out) = out {
        fs::write(out, ctxdep::gstgen::circuit_list_json(&circuits))
            .with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{}", circuits.len());
    Ok(())
}

fn resolve_plan(spec: &str, contexts: &[String]) -> Result<ComparisonPlan> {
    Ok(match spec {
        "auto" => ComparisonPlan::auto(contexts)?,
        "pairs" => ComparisonPlan::pairs(contexts)?,
        "joint" => ComparisonPlan::joint(contexts)?,
        file => ComparisonPlan::load(file).with_context(|| format!("loading plan {file}"))?,
    })
}

fn analyze(data: &Path, alpha: f64, plan: &str, out: &Path, tables: Option<&Path>) -> Result<()> {
    let dataset = ContextDataset::load(data).with_context(|| format!("loading dataset {}", data.display()))?;
    let plan = resolve_plan(plan, &dataset.contexts)?;
    let report = run_analysis(&dataset, &plan, alpha)?;
    for c in &report.comparisons {
        if !c.skipped.is_empty() {
            eprintln!(
                "warning: comparison '{}' skipped {} circuit(s) missing a compared context",
                c.comparison_id,
                c.skipped.len()
            );
        }
    }
    report.save(out)?;
    println!("{} comparison(s) -> {}", report.comparisons.len(), out.display());
    if let Some(dir) = tables {
        write_tables(&report, &dataset.contexts, dir)?;
    }
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn write_tables(report: &AnalysisReport, contexts: &[String], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    match pairwise_matrices(&report.comparisons, contexts) {
        Ok(m) => {
            let path = dir.join("pairwise_matrix.csv");
            let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            m.write_csv(file)?;
        }
        Err(e) => eprintln!("note: pairwise matrix not written ({e})"),
    }
    for c in &report.comparisons {
        let path = dir.join(format!("jsd_profile_{}.csv", file_stem(&c.comparison_id)));
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_jsd_profile_csv(&jsd_profile(c), file)?;
    }
    Ok(())
}
