//! `price`: split gridded patches, perturb their labels, score privacy risk
//! and schedule the pieces across private and commercial cloud instances.

mod layout;
mod stages;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use price_core::planner::{candidates_to_text, parse_candidates, reflag, CandidateRow};
use price_core::splitting::{Family, StrategyKind};

use layout::{RunDir, Manifest};
use stages::{PatchSource, PlanSummary};

const DEFAULT_STRATEGIES: &str = "all";

#[derive(Parser, Debug)]
#[command(name = "price", version, about = "Privacy-aware splitting and hybrid-cloud scheduling of image patches")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Full pipeline: split, encrypt, risk and plan into a fresh directory.
    Run(RunArgs),
    /// Build the patch set and split it with each strategy.
    Split(SplitArgs),
    /// Encrypt the labels of every sub-dataset in a run directory.
    Encrypt(EncryptArgs),
    /// Score the minimal privacy risk of every split in a run directory.
    Risk(RunDirArg),
    /// Schedule every split and flag the Pareto front.
    Plan(PlanArgs),
    /// Merge candidate files and recompute the Pareto front.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct PatchArgs {
    /// Full grid of ROWSxCOLS patches, e.g. 50x50.
    #[arg(long, value_name = "RxC", conflicts_with_all = ["rows", "patches"])]
    grid: Option<String>,
    #[arg(long, requires = "cols", conflicts_with = "patches")]
    rows: Option<usize>,
    #[arg(long, requires = "rows")]
    cols: Option<usize>,
    /// Tissue mask for the grid: one line of 1/0 per row.
    #[arg(long, value_name = "FILE", conflicts_with = "patches")]
    mask_file: Option<PathBuf>,
    /// Patch list with one `x,y` line per patch.
    #[arg(long, value_name = "FILE")]
    patches: Option<PathBuf>,
    #[arg(long, default_value_t = 224)]
    patch_size: u64,
}

impl PatchArgs {
    fn source(&self) -> Result<PatchSource> {
        let dims = match (&self.grid, self.rows, self.cols) {
            (Some(g), _, _) => {
                let (r, c) = g
                    .split_once(['x', 'X'])
                    .with_context(|| format!("--grid expects RxC, got `{g}`"))?;
                Some((
                    r.trim().parse().with_context(|| format!("bad grid rows `{r}`"))?,
                    c.trim().parse().with_context(|| format!("bad grid cols `{c}`"))?,
                ))
            }
            (None, Some(r), Some(c)) => Some((r, c)),
            _ => None,
        };
        if self.patch_size == 0 {
            bail!("--patch-size must be positive");
        }
        match (dims, &self.patches) {
            (Some((rows, cols)), None) => Ok(PatchSource::Grid {
                rows,
                cols,
                mask: self.mask_file.clone(),
            }),
            (None, Some(p)) => Ok(PatchSource::File(p.clone())),
            _ => bail!("give either --grid RxC (or --rows/--cols) or --patches FILE"),
        }
    }
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[command(flatten)]
    patches: PatchArgs,
    /// Comma-separated strategies; `avg_shuffled:N` pins N, `all` expands.
    #[arg(long, default_value = DEFAULT_STRATEGIES)]
    strategies: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EncryptArgs {
    #[arg(long, value_name = "DIR")]
    run: PathBuf,
    /// Retained eigen components (2 keeps labels exact).
    #[arg(long, default_value_t = 2)]
    k: usize,
}

#[derive(Args, Debug)]
struct RunDirArg {
    #[arg(long, value_name = "DIR")]
    run: PathBuf,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    #[arg(long, value_name = "FILE")]
    catalog: PathBuf,
    #[arg(long, value_name = "FILE")]
    workload: PathBuf,
    #[arg(long)]
    budget: f64,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long, value_name = "DIR")]
    run: PathBuf,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    patches: PatchArgs,
    #[arg(long, default_value = DEFAULT_STRATEGIES)]
    strategies: String,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyFilter {
    Graph,
    Avg,
    All,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Candidate files to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Keep only rows of one strategy family before filtering.
    #[arg(long, value_enum, default_value = "all")]
    family: FamilyFilter,
    /// Write the merged file here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn print_plan_summary(dir: &Path, s: &PlanSummary) {
    println!(
        "{}: {} candidates, {} on the Pareto front",
        dir.display(),
        s.candidates,
        s.pareto
    );
    if s.candidates == 0 {
        warn!("no feasible assignment for any strategy; candidates file has no rows");
    }
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let src = a.patches.source()?;
    let strategies = stages::parse_strategy_list(&a.strategies)?;
    if a.out.exists() {
        let nonempty = fs::read_dir(&a.out)
            .with_context(|| format!("reading {}", a.out.display()))?
            .next()
            .is_some();
        if nonempty && !a.force {
            bail!("{} exists and is not empty (use --force to replace it)", a.out.display());
        }
    }
    let mut staging = a.out.as_os_str().to_owned();
    staging.push(".staging");
    let staging = PathBuf::from(staging);
    if staging.exists() {
        fs::remove_dir_all(&staging).with_context(|| format!("clearing {}", staging.display()))?;
    }
    let run = RunDir::new(&staging);
    let result = (|| -> Result<PlanSummary> {
        stages::split_stage(&run, &src, a.patches.patch_size, &strategies, a.seed).context("split")?;
        stages::encrypt_stage(&run, a.k).context("encrypt")?;
        stages::risk_stage(&run).context("risk")?;
        stages::plan_stage(&run, &a.schedule.catalog, &a.schedule.workload, a.schedule.budget).context("plan")
    })();
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    if a.out.exists() {
        fs::remove_dir_all(&a.out).with_context(|| format!("replacing {}", a.out.display()))?;
    }
    fs::rename(&staging, &a.out).with_context(|| format!("moving results into {}", a.out.display()))?;
    print_plan_summary(&a.out, &summary);
    Ok(())
}

fn cmd_split(a: &SplitArgs) -> Result<()> {
    let src = a.patches.source()?;
    let strategies = stages::parse_strategy_list(&a.strategies)?;
    let run = RunDir::new(&a.out);
    let parts = stages::split_stage(&run, &src, a.patches.patch_size, &strategies, a.seed).context("split")?;
    for p in &parts {
        println!("{}: N = {}", p.strategy().label(), p.n_classes());
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let mut rows: Vec<CandidateRow> = Vec::new();
    for path in &a.inputs {
        let text = layout::read_input(path, "plan")?;
        rows.extend(parse_candidates(&text, path)?);
    }
    let wanted = match a.family {
        FamilyFilter::Graph => Some(Family::Graph),
        FamilyFilter::Avg => Some(Family::Average),
        FamilyFilter::All => None,
    };
    if let Some(f) = wanted {
        let mut kept = Vec::with_capacity(rows.len());
        for r in rows {
            let kind: StrategyKind = r.strategy.parse()?;
            if kind.family() == f {
                kept.push(r);
            }
        }
        rows = kept;
    }
    reflag(&mut rows);
    let text = candidates_to_text(&rows);
    let pareto = rows.iter().filter(|r| r.is_pareto).count();
    match &a.out {
        Some(out) => {
            layout::write_file(out, &text)?;
            println!("{}: {} candidates, {pareto} on the Pareto front", out.display(), rows.len());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run(a) => cmd_run(&a),
        Cmd::Split(a) => cmd_split(&a),
        Cmd::Encrypt(a) => {
            let run = RunDir::new(&a.run);
            stages::encrypt_stage(&run, a.k).context("encrypt")?;
            println!("{}: labels encrypted with k = {}", a.run.display(), a.k);
            Ok(())
        }
        Cmd::Risk(a) => {
            let run = RunDir::new(&a.run);
            for r in stages::risk_stage(&run).context("risk")? {
                println!("{}", r.to_line());
            }
            Ok(())
        }
        Cmd::Plan(a) => {
            let run = RunDir::new(&a.run);
            Manifest::load(&run)?;
            let s = stages::plan_stage(&run, &a.schedule.catalog, &a.schedule.workload, a.schedule.budget)
                .context("plan")?;
            print_plan_summary(&a.run, &s);
            Ok(())
        }
        Cmd::Report(a) => cmd_report(&a),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let infeasible = e.chain().any(|c| {
        matches!(
            c.downcast_ref::<price_core::Error>(),
            Some(price_core::Error::Infeasible { .. })
        )
    });
    if infeasible {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
